//! ROC-AUC with tie handling.

use crate::error::{Error, Result};

/// Pairwise ROC-AUC for one task: `(correctly ordered + ½·tied) / pairs`
/// over (positive, negative) pairs of unmasked entries.
///
/// Returns `None` when the unmasked labels lack a positive or a negative.
pub fn roc_auc_task(scores: &[f64], labels: &[bool], mask: &[bool]) -> Option<f64> {
    let mut items: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&s, &l), _)| (s, l))
        .collect();
    let positives = items.iter().filter(|(_, l)| *l).count() as u64;
    let negatives = items.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut correct, mut ties, mut negatives_below) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < items.len() && items[j].0.total_cmp(&items[i].0).is_eq() {
            if items[j].1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        correct += p * negatives_below;
        ties += p * n;
        negatives_below += n;
        i = j;
    }
    Some((2 * correct + ties) as f64 / (2 * positives * negatives) as f64)
}

/// Unweighted mean of per-task AUC over tasks where it is defined.
///
/// `scores`, `targets` and `mask` are row-major `rows × tasks`.
pub fn roc_auc(scores: &[f64], targets: &[f64], mask: &[bool], tasks: usize) -> Result<f64> {
    if tasks == 0 || scores.len() != targets.len() || scores.len() != mask.len() || scores.len() % tasks != 0 {
        return Err(Error::Argument(format!(
            "roc_auc: {} scores, {} targets, {} mask entries, {tasks} tasks",
            scores.len(),
            targets.len(),
            mask.len()
        )));
    }
    let mut sum = 0.0;
    let mut valid = 0usize;
    for t in 0..tasks {
        let col = |v: &[f64]| v.iter().skip(t).step_by(tasks).copied().collect::<Vec<f64>>();
        let s = col(scores);
        let y: Vec<bool> = col(targets).iter().map(|v| *v > 0.5).collect();
        let m: Vec<bool> = mask.iter().skip(t).step_by(tasks).copied().collect();
        if let Some(auc) = roc_auc_task(&s, &y, &m) {
            sum += auc;
            valid += 1;
        }
    }
    if valid == 0 {
        return Err(Error::MetricUndefined);
    }
    Ok(sum / valid as f64)
}
