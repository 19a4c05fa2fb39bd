//! Remove-and-recalculate curation: drop the highest-`delta` records, re-audit, repeat.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::CategoricalDataset;
use crate::error::{input, Result};
use crate::jsonf64;
use crate::pdp::{audit_all, BoundConfig, PdpReport};
use crate::schedule::DiffusionSchedule;

pub const CURATION_SCHEMA: &str = "curation/1";

/// Round `0` is the unmodified dataset; round `i` has removed `floor(ratio_i * size_0)` records in total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationRound {
    pub round: usize,
    pub ratio: f64,
    /// Rows removed in this round, with the number of copies removed.
    pub removed: Vec<(Vec<u32>, usize)>,
    #[serde(with = "jsonf64")]
    pub mean_delta: f64,
    #[serde(with = "jsonf64")]
    pub max_delta: f64,
    pub size: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationLog {
    pub schema: String,
    pub rounds: Vec<CurationRound>,
}

/// Records to drop: top-ranked rows of `report`, all copies of a row before the next.
fn top_rows(report: &PdpReport, count: usize) -> Vec<(Vec<u32>, usize)> {
    let mut left = count;
    let mut out = Vec::new();
    for p in &report.points {
        if left == 0 {
            break;
        }
        let take = (p.multiplicity as usize).min(left);
        out.push((p.row.clone(), take));
        left -= take;
    }
    out
}

fn remove_rows(d: &CategoricalDataset, rows: &[(Vec<u32>, usize)]) -> Result<CategoricalDataset> {
    let mut want: BTreeMap<&[u32], usize> = rows.iter().map(|(r, c)| (r.as_slice(), *c)).collect();
    let mut idx = BTreeSet::new();
    for (i, r) in d.rows().enumerate() {
        if let Some(c) = want.get_mut(r) {
            if *c > 0 {
                *c -= 1;
                idx.insert(i);
            }
        }
    }
    d.without_indices(&idx)
}

/// Runs the loop over ascending cumulative `ratios` in `(0, 1)`.
pub fn curate(
    d: &CategoricalDataset,
    sched: &DiffusionSchedule,
    cfg: &BoundConfig,
    ratios: &[f64],
) -> Result<(CurationLog, Vec<PdpReport>)> {
    if let Some(r) = ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return input(format!("removal ratios must lie in (0, 1), got {r}"));
    }
    if ratios.windows(2).any(|w| w[1] <= w[0]) {
        return input("removal ratios must be strictly ascending");
    }
    let size0 = d.len();
    let mut current = d.clone();
    let mut report = audit_all(&current, sched, cfg)?;
    let mut rounds = vec![CurationRound {
        round: 0,
        ratio: 0.0,
        removed: Vec::new(),
        mean_delta: report.mean_delta(),
        max_delta: report.max_delta(),
        size: size0,
        fingerprint: current.fingerprint(),
    }];
    let mut reports = vec![report.clone()];
    let mut removed_total = 0usize;
    for (i, &ratio) in ratios.iter().enumerate() {
        let goal = (ratio * size0 as f64).floor() as usize;
        let count = goal.saturating_sub(removed_total);
        if size0 - removed_total - count < 2 {
            return input(format!("ratio {ratio} would leave fewer than two rows"));
        }
        let removed = top_rows(&report, count);
        if count > 0 {
            current = remove_rows(&current, &removed)?;
            report = audit_all(&current, sched, cfg)?;
        }
        removed_total += count;
        rounds.push(CurationRound {
            round: i + 1,
            ratio,
            removed,
            mean_delta: report.mean_delta(),
            max_delta: report.max_delta(),
            size: current.len(),
            fingerprint: current.fingerprint(),
        });
        reports.push(report.clone());
    }
    Ok((
        CurationLog {
            schema: CURATION_SCHEMA.to_string(),
            rounds,
        },
        reports,
    ))
}

/// Mean fraction of coordinates `v` shares with the other records of `d`.
pub fn mean_overlap(d: &CategoricalDataset, v: &[u32]) -> f64 {
    let n = d.num_features() as f64;
    let mut skipped = false;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in d.rows() {
        if !skipped && r == v {
            skipped = true;
            continue;
        }
        total += r.iter().zip(v).filter(|(a, b)| a == b).count() as f64 / n;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
