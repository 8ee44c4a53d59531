use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::CoverageDraws;
use crate::stats::{quantile_sorted, sorted_copy};
use crate::survey_data::Level;

/// Breakpoints `0 = L₀ < L₁ < … < L_K = 1`. Interval `k` (0-based) is
/// `[L_k, L_{k+1})`, except the last, which is closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    breaks: Vec<f64>,
}

impl Partition {
    pub fn new(breaks: Vec<f64>) -> Result<Self> {
        if breaks.len() < 2 || breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
            return Err(Error::Validation(format!(
                "partition must run from 0 to 1, got {breaks:?}"
            )));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::DegeneratePartition(format!(
                "breakpoints are not strictly increasing: {breaks:?}"
            )));
        }
        Ok(Self { breaks })
    }

    /// Partition from interior thresholds, e.g. `[0.2, 0.5, 0.8]`.
    pub fn from_thresholds(thresholds: &[f64]) -> Result<Self> {
        let mut b = Vec::with_capacity(thresholds.len() + 2);
        b.push(0.0);
        b.extend_from_slice(thresholds);
        b.push(1.0);
        Self::new(b)
    }

    pub fn k(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn bounds(&self, k: usize) -> (f64, f64) {
        (self.breaks[k], self.breaks[k + 1])
    }

    /// Interval holding `v`; values outside `[0, 1]` go to the nearest end.
    pub fn interval_of(&self, v: f64) -> usize {
        let k = self.k();
        // number of interior breakpoints ≤ v
        let interior = &self.breaks[1..k];
        interior.partition_point(|&b| b <= v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifiedMap {
    pub unit_ids: Vec<String>,
    pub level: Level,
    pub partition: Partition,
    /// `units × K` interval probabilities.
    pub probs: Array2<f64>,
    /// 0-based interval index per unit.
    pub assigned: Vec<usize>,
    pub tcp: Vec<f64>,
    pub atcp: f64,
}

/// Assigns each unit to its most probable interval (lowest index on ties);
/// TCP is that probability and ATCP their mean.
pub fn classify(draws: &CoverageDraws, partition: &Partition) -> ClassifiedMap {
    let k = partition.k();
    let m = draws.draws() as f64;
    let mut probs = Array2::<f64>::zeros((draws.units(), k));
    let mut assigned = Vec::with_capacity(draws.units());
    let mut tcp = Vec::with_capacity(draws.units());
    for (i, row) in draws.values.rows().into_iter().enumerate() {
        let mut counts = vec![0usize; k];
        for &v in row {
            counts[partition.interval_of(v)] += 1;
        }
        let mut best = 0;
        for (j, &c) in counts.iter().enumerate() {
            probs[[i, j]] = c as f64 / m;
            if c > counts[best] {
                best = j;
            }
        }
        assigned.push(best);
        tcp.push(counts[best] as f64 / m);
    }
    let atcp = tcp.iter().sum::<f64>() / tcp.len().max(1) as f64;
    ClassifiedMap {
        unit_ids: draws.unit_ids.clone(),
        level: draws.level,
        partition: partition.clone(),
        probs,
        assigned,
        tcp,
        atcp,
    }
}

/// All draws of all units, sorted ascending.
pub fn pooled_draws(draws: &CoverageDraws) -> Vec<f64> {
    let all: Vec<f64> = draws.values.iter().copied().collect();
    sorted_copy(&all)
}

/// Breakpoints at the `k/K` quantiles of the pooled draws (`pooled` must be
/// sorted).
pub fn quantile_partition(pooled: &[f64], k: usize) -> Result<Partition> {
    if k == 0 {
        return Err(Error::Validation("K must be at least 1".into()));
    }
    if pooled.len() < k {
        return Err(Error::Validation(format!(
            "{} pooled draws cannot define {k} intervals",
            pooled.len()
        )));
    }
    let mut b = vec![0.0];
    for j in 1..k {
        b.push(quantile_sorted(pooled, j as f64 / k as f64));
    }
    b.push(1.0);
    Partition::new(b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Granularity {
    pub k: usize,
    pub partition: Partition,
    pub map: ClassifiedMap,
    /// ATCP for every K tried; `None` when the quantile partition degenerates.
    pub atcps: Vec<(usize, Option<f64>)>,
    /// Set when no K > 1 reached the floor.
    pub notice: Option<String>,
}

/// Largest `K` whose ATCP reaches `atcp_min`; `1` when none does. Entries
/// with no ATCP (degenerate partitions) are skipped.
pub fn select_k(atcps: &[(usize, Option<f64>)], atcp_min: f64) -> usize {
    atcps
        .iter()
        .filter(|(_, a)| a.is_some_and(|a| a >= atcp_min))
        .map(|(k, _)| *k)
        .max()
        .unwrap_or(1)
}

/// Largest `K ≤ k_max` whose quantile-partition map has ATCP ≥ `atcp_min`.
pub fn select_granularity(draws: &CoverageDraws, atcp_min: f64, k_max: usize) -> Result<Granularity> {
    if !(atcp_min > 0.0 && atcp_min <= 1.0) {
        return Err(Error::Domain(format!("atcp_min must lie in (0, 1], got {atcp_min}")));
    }
    if k_max == 0 {
        return Err(Error::Validation("K_max must be at least 1".into()));
    }
    let pooled = pooled_draws(draws);
    let mut maps = Vec::with_capacity(k_max);
    let mut atcps = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        match quantile_partition(&pooled, k) {
            Ok(p) => {
                let map = classify(draws, &p);
                atcps.push((k, Some(map.atcp)));
                maps.push(Some((p, map)));
            }
            Err(Error::DegeneratePartition(_)) => {
                atcps.push((k, None));
                maps.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let k = select_k(&atcps, atcp_min);
    let (partition, map) = maps.swap_remove(k - 1).expect("selected K has a partition");
    let notice = (k == 1 && k_max > 1).then(|| {
        format!("no K in 2..={k_max} reaches ATCP {atcp_min}; falling back to a single interval")
    });
    Ok(Granularity {
        k,
        partition,
        map,
        atcps,
        notice,
    })
}
