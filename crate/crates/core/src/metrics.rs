//! Ranking and calibration measurement: tie-corrected AUC and COPC,
//! globally and per scenario slice.
//!
//! AUC uses the rank-sum formulation with midranks, so ties count half and
//! an all-tie score vector gives exactly 0.5. COPC (click over predicted
//! click) is mean(labels) / mean(scores); a value of 1 means the predictions
//! are calibrated in aggregate. Metrics that cannot be computed (single
//! class, zero mean score, empty slice) are explicit errors or absent
//! reports, never silent 0.0 or 1.0 — the checkpoint promotion gate must see
//! them and keep the incumbent.

use serde::{Deserialize, Serialize};

use crate::domain::Scenario;
use crate::error::{MetricError, Result};
use crate::feature_store::SampleRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKey {
    Global,
    Classic,
    Copilot,
}

impl SliceKey {
    pub fn as_str(self) -> &'static str {
        match self {
            SliceKey::Global => "global",
            SliceKey::Classic => "classic",
            SliceKey::Copilot => "copilot",
        }
    }
}

impl std::fmt::Display for SliceKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub slice: SliceKey,
    pub auc: f64,
    pub copc: f64,
    pub realctr: f64,
    pub pctr: f64,
    pub n_samples: usize,
    pub n_positives: usize,
}

/// Probability that a uniformly random positive outscores a uniformly
/// random negative, ties counted half (midrank formulation).
pub fn auc(labels: &[bool], scores: &[f64]) -> std::result::Result<f64, MetricError> {
    if labels.len() != scores.len() || labels.is_empty() {
        return Err(MetricError::Empty);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass {
            positives,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Midranks over tied score runs; sum ranks of the positives.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based: positions i..=j share the midrank.
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// COPC = mean(labels) / mean(scores).
pub fn copc(labels: &[bool], scores: &[f64]) -> std::result::Result<f64, MetricError> {
    if labels.len() != scores.len() || labels.is_empty() {
        return Err(MetricError::Empty);
    }
    let realctr = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
    let pctr = scores.iter().sum::<f64>() / scores.len() as f64;
    if pctr == 0.0 {
        return Err(MetricError::ZeroMeanScore);
    }
    Ok(realctr / pctr)
}

/// Both metrics over one slice.
pub fn report_for(
    slice: SliceKey,
    labels: &[bool],
    scores: &[f64],
) -> std::result::Result<MetricsReport, MetricError> {
    let auc_value = auc(labels, scores)?;
    let n_samples = labels.len();
    let n_positives = labels.iter().filter(|&&l| l).count();
    let realctr = n_positives as f64 / n_samples as f64;
    let pctr = scores.iter().sum::<f64>() / n_samples as f64;
    if pctr == 0.0 {
        return Err(MetricError::ZeroMeanScore);
    }
    Ok(MetricsReport {
        slice,
        auc: auc_value,
        copc: realctr / pctr,
        realctr,
        pctr,
        n_samples,
        n_positives,
    })
}

/// Per-slice outcomes: a slice with no rows is `None`; a slice whose metric
/// is undefined carries the error.
#[derive(Debug, Clone)]
pub struct SlicedReport {
    pub global: Option<std::result::Result<MetricsReport, MetricError>>,
    pub classic: Option<std::result::Result<MetricsReport, MetricError>>,
    pub copilot: Option<std::result::Result<MetricsReport, MetricError>>,
}

impl SlicedReport {
    pub fn get(&self, slice: SliceKey) -> &Option<std::result::Result<MetricsReport, MetricError>> {
        match slice {
            SliceKey::Global => &self.global,
            SliceKey::Classic => &self.classic,
            SliceKey::Copilot => &self.copilot,
        }
    }

    /// The report for a slice, or an error if the slice is empty/undefined.
    pub fn require(&self, slice: SliceKey) -> Result<&MetricsReport> {
        match self.get(slice) {
            Some(Ok(report)) => Ok(report),
            Some(Err(e)) => Err(e.clone().into()),
            None => Err(MetricError::Empty.into()),
        }
    }
}

/// One report per scenario plus the global slice, each computed only over
/// that slice's rows.
pub fn sliced_report(rows: &[SampleRow], scores: &[f64]) -> Result<SlicedReport> {
    if rows.len() != scores.len() {
        return Err(crate::error::Error::contract(format!(
            "sliced_report: {} rows vs {} scores",
            rows.len(),
            scores.len()
        )));
    }
    let compute = |slice: SliceKey, scenario: Option<Scenario>| {
        let mut labels = Vec::new();
        let mut s = Vec::new();
        for (row, &score) in rows.iter().zip(scores) {
            if scenario.map_or(true, |sc| row.context_scenario == sc) {
                labels.push(row.label_click);
                s.push(score);
            }
        }
        if labels.is_empty() {
            None
        } else {
            Some(report_for(slice, &labels, &s))
        }
    };
    Ok(SlicedReport {
        global: compute(SliceKey::Global, None),
        classic: compute(SliceKey::Classic, Some(Scenario::Classic)),
        copilot: compute(SliceKey::Copilot, Some(Scenario::Copilot)),
    })
}
