use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use super::classify::ClassifiedMap;
use crate::error::{Error, Result};
use crate::prediction::CoverageDraws;
use crate::stats::{mean, quantile_sorted, sample_var, sorted_copy};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnitSummary {
    pub unit_id: String,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    /// `sd / mean`; `None` when the mean is zero.
    pub cv: Option<f64>,
}

/// Per-unit posterior summaries with equal-tailed intervals at `level`.
pub fn summarize(draws: &CoverageDraws, level: f64) -> Result<Vec<UnitSummary>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("credible level must lie in (0, 1), got {level}")));
    }
    if draws.draws() < 2 {
        return Err(Error::Validation("summaries need at least 2 draws".into()));
    }
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = (1.0 + level) / 2.0;
    Ok(draws
        .unit_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let row = draws.row(i);
            let sorted = sorted_copy(&row);
            let m = mean(&row);
            let sd = sample_var(&row).sqrt();
            let lower = quantile_sorted(&sorted, lo_p);
            let upper = quantile_sorted(&sorted, hi_p);
            UnitSummary {
                unit_id: id.clone(),
                median: quantile_sorted(&sorted, 0.5),
                mean: m,
                sd,
                lower,
                upper,
                width: upper - lower,
                cv: (m != 0.0).then(|| sd / m),
            }
        })
        .collect())
}

/// Fraction of draws at or above `t`, per unit.
pub fn exceedance(draws: &CoverageDraws, t: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("threshold must lie in [0, 1], got {t}")));
    }
    let m = draws.draws() as f64;
    Ok(draws
        .values
        .rows()
        .into_iter()
        .map(|r| r.iter().filter(|&&v| v >= t).count() as f64 / m)
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankDistribution {
    pub unit_ids: Vec<String>,
    /// `units × units`: entry `(i, r)` is the probability unit `i` has rank `r + 1`.
    pub probs: Array2<f64>,
    pub expected: Vec<f64>,
}

/// Posterior ranking distribution; rank 1 is the lowest coverage. Ties
/// within a draw are broken by unit id.
pub fn rank_distribution(draws: &CoverageDraws) -> Result<RankDistribution> {
    let a = draws.units();
    if a < 2 {
        return Err(Error::Validation("ranking needs at least 2 units".into()));
    }
    let m = draws.draws();
    let mut counts = Array2::<f64>::zeros((a, a));
    let mut order: Vec<usize> = (0..a).collect();
    for col in draws.values.columns() {
        order.sort_by(|&i, &j| {
            col[i]
                .partial_cmp(&col[j])
                .unwrap_or(Ordering::Equal)
                .then_with(|| draws.unit_ids[i].cmp(&draws.unit_ids[j]))
        });
        for (r, &i) in order.iter().enumerate() {
            counts[[i, r]] += 1.0;
        }
    }
    let probs = counts / m as f64;
    let expected = probs
        .rows()
        .into_iter()
        .map(|row| row.iter().enumerate().map(|(r, p)| (r + 1) as f64 * p).sum())
        .collect();
    Ok(RankDistribution {
        unit_ids: draws.unit_ids.clone(),
        probs,
        expected,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[UnitSummary]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit_id", "median", "mean", "sd", "lower", "upper", "width", "cv"])?;
    for r in rows {
        w.write_record([
            r.unit_id.clone(),
            r.median.to_string(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
            r.width.to_string(),
            fmt_opt(r.cv),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One column per threshold, named `p_ge_<t>`.
pub fn write_exceedance_csv(path: impl AsRef<Path>, unit_ids: &[String], columns: &[(f64, Vec<f64>)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["unit_id".to_string()];
    header.extend(columns.iter().map(|(t, _)| format!("p_ge_{t}")));
    w.write_record(&header)?;
    for (i, id) in unit_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(columns.iter().map(|(_, v)| v[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `unit_id,expected_rank,p_rank_1,…,p_rank_A`, ordered by expected rank.
pub fn write_rank_csv(path: impl AsRef<Path>, ranks: &RankDistribution) -> Result<()> {
    let path = path.as_ref();
    let a = ranks.unit_ids.len();
    let mut order: Vec<usize> = (0..a).collect();
    order.sort_by(|&i, &j| {
        ranks.expected[i]
            .partial_cmp(&ranks.expected[j])
            .unwrap_or(Ordering::Equal)
            .then_with(|| ranks.unit_ids[i].cmp(&ranks.unit_ids[j]))
    });
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["unit_id".to_string(), "expected_rank".to_string()];
    header.extend((1..=a).map(|r| format!("p_rank_{r}")));
    w.write_record(&header)?;
    for i in order {
        let mut rec = vec![ranks.unit_ids[i].clone(), ranks.expected[i].to_string()];
        rec.extend(ranks.probs.row(i).iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `unit_id,interval_index,lower,upper,tcp` with 1-based interval indices.
pub fn write_classified_csv(path: impl AsRef<Path>, map: &ClassifiedMap) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit_id", "interval_index", "lower", "upper", "tcp"])?;
    for (i, id) in map.unit_ids.iter().enumerate() {
        let k = map.assigned[i];
        let (lo, hi) = map.partition.bounds(k);
        w.write_record([
            id.clone(),
            (k + 1).to_string(),
            lo.to_string(),
            hi.to_string(),
            map.tcp[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long-format `unit_id,draw,value` with units ordered by posterior median
/// (ties by unit id) and draws in column order.
pub fn export_ridgeline(path: impl AsRef<Path>, draws: &CoverageDraws) -> Result<()> {
    let path = path.as_ref();
    let medians: Vec<f64> = (0..draws.units())
        .map(|i| quantile_sorted(&sorted_copy(&draws.row(i)), 0.5))
        .collect();
    let mut order: Vec<usize> = (0..draws.units()).collect();
    order.sort_by(|&i, &j| {
        medians[i]
            .partial_cmp(&medians[j])
            .unwrap_or(Ordering::Equal)
            .then_with(|| draws.unit_ids[i].cmp(&draws.unit_ids[j]))
    });
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit_id", "draw", "value"])?;
    for i in order {
        for (m, v) in draws.values.row(i).iter().enumerate() {
            w.write_record([draws.unit_ids[i].clone(), (m + 1).to_string(), v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a ridgeline export back into `(unit_id, draws)` in file order.
pub fn read_ridgeline(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<f64>)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let value: f64 = rec[2].parse().map_err(|_| Error::Row {
            row: row + 1,
            message: format!("bad value `{}`", &rec[2]),
        })?;
        let id = rec[0].to_string();
        let k = *index.entry(id.clone()).or_insert_with(|| {
            out.push((id, Vec::new()));
            out.len() - 1
        });
        out[k].1.push(value);
    }
    Ok(out)
}
