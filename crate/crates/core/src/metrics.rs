//! Endpoint error, PCK and Recall@N.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cmap::CorrespondenceMap;
use crate::error::{Error, Result};

fn check_dims(pred: &CorrespondenceMap, gt: &CorrespondenceMap) -> Result<()> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

/// Endpoint errors over pixels valid in both maps and at least `border`
/// pixels from the grid edge, in row-major order.
pub fn endpoint_errors(pred: &CorrespondenceMap, gt: &CorrespondenceMap, border: usize) -> Result<Vec<f64>> {
    check_dims(pred, gt)?;
    let (h, w) = (pred.height(), pred.width());
    let mut out = Vec::new();
    for y in border..h.saturating_sub(border) {
        for x in border..w.saturating_sub(border) {
            if let (Some(p), Some(g)) = (pred.get(y, x), gt.get(y, x)) {
                let dx = p[0] as f64 - g[0] as f64;
                let dy = p[1] as f64 - g[1] as f64;
                out.push((dx * dx + dy * dy).sqrt());
            }
        }
    }
    if out.is_empty() {
        return Err(Error::UndefinedMetric("no pixel is valid in both maps".into()));
    }
    Ok(out)
}

pub fn aepe(pred: &CorrespondenceMap, gt: &CorrespondenceMap) -> Result<f64> {
    aepe_interior(pred, gt, 0)
}

/// AEPE ignoring a band of `border` pixels.
pub fn aepe_interior(pred: &CorrespondenceMap, gt: &CorrespondenceMap, border: usize) -> Result<f64> {
    let e = endpoint_errors(pred, gt, border)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

pub fn pck(pred: &CorrespondenceMap, gt: &CorrespondenceMap, threshold: f64) -> Result<f64> {
    pck_interior(pred, gt, threshold, 0)
}

pub fn pck_interior(pred: &CorrespondenceMap, gt: &CorrespondenceMap, threshold: f64, border: usize) -> Result<f64> {
    let e = endpoint_errors(pred, gt, border)?;
    Ok(e.iter().filter(|&&v| v <= threshold).count() as f64 / e.len() as f64)
}

/// Per `N`: fraction of queries with at least one relevant id in the first `N`.
pub fn recall_at_n(
    rankings: &[(String, Vec<String>)],
    relevance: &BTreeMap<String, BTreeSet<String>>,
    ns: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    if rankings.is_empty() {
        return Err(Error::UndefinedMetric("no queries to evaluate".into()));
    }
    // rank of the first relevant item per query, if any
    let mut first = Vec::with_capacity(rankings.len());
    for (q, ranked) in rankings {
        let rel = relevance
            .get(q)
            .ok_or_else(|| Error::InvalidInput(format!("query `{q}` has no relevance entry")))?;
        first.push(ranked.iter().position(|id| rel.contains(id)));
    }
    Ok(ns
        .iter()
        .map(|&n| {
            let hits = first.iter().filter(|r| matches!(r, Some(k) if *k < n)).count();
            (n, hits as f64 / rankings.len() as f64)
        })
        .collect())
}

/// Retrieval and/or matching summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aepe: Option<f64>,
    /// Threshold (pixels, formatted) → fraction.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub pck: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub recall: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub pixels: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub queries: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// Matching report for one map pair.
pub fn match_report(pred: &CorrespondenceMap, gt: &CorrespondenceMap, thresholds: &[f64], border: usize) -> Result<EvalReport> {
    let e = endpoint_errors(pred, gt, border)?;
    let n = e.len() as f64;
    let mut pck = BTreeMap::new();
    for &t in thresholds {
        pck.insert(format!("{t}"), e.iter().filter(|&&v| v <= t).count() as f64 / n);
    }
    Ok(EvalReport {
        aepe: Some(e.iter().sum::<f64>() / n),
        pck,
        recall: BTreeMap::new(),
        pixels: e.len(),
        queries: 0,
    })
}

/// Retrieval report for one ranking stage.
pub fn retrieval_report(
    rankings: &[(String, Vec<String>)],
    relevance: &BTreeMap<String, BTreeSet<String>>,
    ns: &[usize],
) -> Result<EvalReport> {
    Ok(EvalReport {
        recall: recall_at_n(rankings, relevance, ns)?,
        queries: rankings.len(),
        ..Default::default()
    })
}
