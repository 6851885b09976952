//! Order-statistics aggregation of raw records into median/decile rows.

use std::collections::BTreeMap;

use crate::records::{ExperimentRecord, Metric, SummaryRow};

/// Linear-interpolation quantile at rank `q * (len - 1)` over an ascending
/// slice; infinities sort last and interpolate to infinity whenever they
/// carry positive weight.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    let (vlo, vhi) = (sorted[lo], sorted[hi]);
    if frac == 0.0 || vlo == vhi {
        vlo
    } else if vhi.is_infinite() {
        vhi
    } else {
        vlo + frac * (vhi - vlo)
    }
}

/// Per (scenario, iter, metric): median, first and last decile across
/// repetitions.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64, Metric), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.scenario.clone(), r.iter, r.metric))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((scenario, iter, metric), mut values)| {
            values.sort_by(f64::total_cmp);
            SummaryRow {
                scenario,
                iter,
                metric,
                median: quantile(&values, 0.5),
                p10: quantile(&values, 0.1),
                p90: quantile(&values, 0.9),
            }
        })
        .collect()
}
