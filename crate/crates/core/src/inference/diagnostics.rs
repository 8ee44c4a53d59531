use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::posterior::PosteriorDraws;
use crate::rng::{rng_for, Stream};
use crate::stats::{mean, sample_var};

pub const RHAT_FAIL: f64 = 1.1;
pub const MONITORED_FIELD_NODES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    Converged,
    /// Some monitored scalar has split R-hat above 1.1.
    Failed,
    /// Single chain: R-hat unavailable, ESS only.
    EssOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorDiag {
    pub name: String,
    pub rhat: Option<f64>,
    pub ess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub status: ConvergenceStatus,
    pub monitors: Vec<MonitorDiag>,
}

impl DiagnosticsReport {
    pub fn max_rhat(&self) -> Option<f64> {
        self.monitors.iter().filter_map(|m| m.rhat).reduce(f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.monitors.iter().map(|m| m.ess).fold(f64::INFINITY, f64::min)
    }

    pub fn converged(&self) -> bool {
        self.status != ConvergenceStatus::Failed
    }

    /// Builds the report from named per-chain traces.
    pub fn from_traces(traces: &[(String, Vec<Vec<f64>>)]) -> Self {
        let monitors: Vec<MonitorDiag> = traces
            .iter()
            .map(|(name, chains)| MonitorDiag {
                name: name.clone(),
                rhat: split_rhat(chains),
                ess: effective_sample_size(chains),
            })
            .collect();
        let single = traces.first().is_none_or(|(_, c)| c.len() < 2);
        let status = if single {
            ConvergenceStatus::EssOnly
        } else if monitors.iter().any(|m| m.rhat.is_none_or(|r| !(r <= RHAT_FAIL))) {
            ConvergenceStatus::Failed
        } else {
            ConvergenceStatus::Converged
        };
        Self { status, monitors }
    }
}

fn split_halves(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        if half == 0 {
            out.push(&c[..]);
        } else {
            out.push(&c[..half]);
            out.push(&c[c.len() - half..]);
        }
    }
    out
}

/// Split R-hat; `None` with fewer than two chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    let parts = split_halves(chains);
    let n = parts.iter().map(|p| p.len()).min().unwrap_or(0);
    if n < 2 {
        return None;
    }
    let means: Vec<f64> = parts.iter().map(|p| mean(&p[..n])).collect();
    let w = mean(&parts.iter().map(|p| sample_var(&p[..n])).collect::<Vec<_>>());
    let b = n as f64 * sample_var(&means);
    if w <= 0.0 {
        return Some(if b <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    Some((var_plus / w).sqrt())
}

fn autocov(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let m = mean(x);
    let mut s = 0.0;
    for i in 0..n - lag {
        s += (x[i] - m) * (x[i + lag] - m);
    }
    s / n as f64
}

/// Multi-chain effective sample size over split chains, with Geyer's
/// initial monotone sequence truncation.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let parts = split_halves(chains);
    let n = parts.iter().map(|p| p.len()).min().unwrap_or(0);
    let m = parts.len();
    if n < 4 {
        return (n * m) as f64;
    }
    let parts: Vec<&[f64]> = parts.iter().map(|p| &p[..n]).collect();
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let acov0: Vec<f64> = parts.iter().map(|p| autocov(p, 0)).collect();
    let w = mean(&acov0) * n as f64 / (n as f64 - 1.0);
    let var_plus = if m > 1 {
        (n as f64 - 1.0) / n as f64 * w + sample_var(&means)
    } else {
        (n as f64 - 1.0) / n as f64 * w
    };
    if var_plus <= 0.0 {
        return (n * m) as f64;
    }
    let rho = |lag: usize| -> f64 {
        let ac = mean(&parts.iter().map(|p| autocov(p, lag)).collect::<Vec<_>>());
        1.0 - (w - ac) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let total = (n * m) as f64;
    let tau = tau.max(1.0 / total.log10().max(1.0));
    total / tau
}

/// Names of the monitored scalars: α, γ, log hyperparameters and five
/// seed-chosen field nodes.
pub fn monitored_names(draws: &PosteriorDraws) -> Vec<String> {
    let mut names = vec!["alpha".to_string()];
    if draws.gamma.is_some() {
        names.push("gamma".into());
    }
    names.push("log_rho".into());
    names.push("log_sigma_s".into());
    if draws.d.is_some() {
        names.push("log_d".into());
    }
    if draws.sigma_nugget.is_some() {
        names.push("log_sigma_nugget".into());
    }
    let nodes = draws.field.ncols();
    let mut rng = rng_for(draws.mcmc.seed, Stream::Monitor, 0);
    let mut picks = sample(&mut rng, nodes, MONITORED_FIELD_NODES.min(nodes)).into_vec();
    picks.sort_unstable();
    names.extend(picks.into_iter().map(|k| format!("field_{k}")));
    names
}

/// Convergence report for a set of posterior draws.
pub fn diagnostics(draws: &PosteriorDraws) -> DiagnosticsReport {
    let per = draws.draws_per_chain();
    let traces: Vec<(String, Vec<Vec<f64>>)> = monitored_names(draws)
        .into_iter()
        .filter_map(|name| {
            let v = draws.scalar(&name)?;
            let chains = (0..draws.chains).map(|c| v[c * per..(c + 1) * per].to_vec()).collect();
            Some((name, chains))
        })
        .collect();
    DiagnosticsReport::from_traces(&traces)
}
