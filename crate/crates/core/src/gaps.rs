//! Transfer gain (TG) and overfitting-mitigation gain (OG) from runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bounds::{hoeffding_gap, LN2_PER_PARAM};
use crate::error::{Error, Result};
use crate::sweep::{median, Init, RunResult, RunSpec};
use crate::train::first_epoch_loss;

/// Substitution note carried in every report.
pub const OG_NOTE: &str =
    "OG uses the measured generalization gap (test error - train error) in place of the O(sqrt(|P|/n)) term";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TgPair {
    pub scratch: String,
    pub pretrained: String,
    /// `train_error(scratch) − train_error(pretrained)` at the final epoch.
    pub train_error_diff: f64,
    /// Same difference on the first-epoch training loss.
    pub epoch1_loss_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OgPoint {
    pub d: usize,
    pub runs: Vec<String>,
    /// Median over seeds of `train_error + measured gap`.
    pub empirical_bound: f64,
    /// Median over seeds of the Hoeffding deviation with `ln|H| = ln 2 · trainable`.
    pub theoretical_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub tg: Option<f64>,
    pub tg_epoch1_loss: Option<f64>,
    pub tg_pairs: Vec<TgPair>,
    pub og: Option<f64>,
    pub og_optimal_d: Option<usize>,
    pub og_largest_d: Option<usize>,
    pub og_points: Vec<OgPoint>,
    pub note: String,
}

fn normalized(spec: &RunSpec) -> RunSpec {
    let mut s = spec.clone();
    s.init = Init::Scratch;
    s.pretrain = Default::default();
    s
}

/// Checks that two runs differ only in initialisation.
fn check_tg_pair(scratch: &RunResult, pretrained: &RunResult) -> Result<()> {
    if scratch.spec.init != Init::Scratch || pretrained.spec.init != Init::Pretrained {
        return Err(Error::Pairing(format!(
            "{} / {}: expected a scratch run and a pre-trained run",
            scratch.fingerprint, pretrained.fingerprint
        )));
    }
    if normalized(&scratch.spec) != normalized(&pretrained.spec) {
        return Err(Error::Pairing(format!(
            "{} / {} differ in more than initialisation",
            scratch.fingerprint, pretrained.fingerprint
        )));
    }
    Ok(())
}

pub fn compute_tg(pairs: &[(RunResult, RunResult)]) -> Result<Vec<TgPair>> {
    pairs
        .iter()
        .map(|(s, p)| {
            check_tg_pair(s, p)?;
            Ok(TgPair {
                scratch: s.fingerprint.clone(),
                pretrained: p.fingerprint.clone(),
                train_error_diff: s.train_error() - p.train_error(),
                epoch1_loss_diff: first_epoch_loss(&s.record) - first_epoch_loss(&p.record),
            })
        })
        .collect()
}

/// Groups from-scratch runs by embedding size. All runs must share every
/// setting except `emb_dim`/`mlp_hidden` and the seed.
pub fn compute_og(runs: &[RunResult], delta: f64) -> Result<Vec<OgPoint>> {
    let key = |r: &RunResult| {
        let mut s = r.spec.clone();
        s.model.emb_dim = 0;
        s.model.mlp_hidden = 0;
        s.train.seed = 0;
        s
    };
    if let Some(first) = runs.first() {
        let k0 = key(first);
        for r in runs {
            if r.spec.init != Init::Scratch {
                return Err(Error::Pairing(format!("{} is not a from-scratch run", r.fingerprint)));
            }
            if key(r) != k0 {
                return Err(Error::Pairing(format!(
                    "{} and {} differ in more than model size and seed",
                    first.fingerprint, r.fingerprint
                )));
            }
        }
    }
    let mut by_d: BTreeMap<usize, Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        by_d.entry(r.spec.model.emb_dim).or_default().push(r);
    }
    by_d.into_iter()
        .map(|(d, rs)| {
            let bounds: Vec<f64> = rs.iter().map(|r| r.train_error() + r.gap()).collect();
            let theo = rs
                .iter()
                .map(|r| hoeffding_gap(LN2_PER_PARAM * r.trainable as f64, r.n_train as u64, delta))
                .collect::<Result<Vec<f64>>>()?;
            Ok(OgPoint {
                d,
                runs: rs.iter().map(|r| r.fingerprint.clone()).collect(),
                empirical_bound: median(&bounds),
                theoretical_gap: median(&theo),
            })
        })
        .collect()
}

/// TG from paired runs and OG from a model-size sweep (either may be empty).
pub fn compute_gaps(tg_pairs: &[(RunResult, RunResult)], og_runs: &[RunResult]) -> Result<GapReport> {
    let pairs = compute_tg(tg_pairs)?;
    let (tg, tg_loss) = if pairs.is_empty() {
        (None, None)
    } else {
        let te: Vec<f64> = pairs.iter().map(|p| p.train_error_diff).collect();
        let tl: Vec<f64> = pairs.iter().map(|p| p.epoch1_loss_diff).collect();
        (Some(median(&te)), Some(median(&tl)))
    };
    let points = compute_og(og_runs, 0.05)?;
    let optimal = points
        .iter()
        .filter(|p| p.empirical_bound.is_finite())
        .min_by(|a, b| a.empirical_bound.total_cmp(&b.empirical_bound));
    let largest = points.last();
    let og = match (optimal, largest) {
        (Some(o), Some(l)) => Some(l.empirical_bound - o.empirical_bound),
        _ => None,
    };
    Ok(GapReport {
        tg,
        tg_epoch1_loss: tg_loss,
        tg_pairs: pairs,
        og,
        og_optimal_d: optimal.map(|p| p.d),
        og_largest_d: largest.map(|p| p.d),
        og_points: points,
        note: OG_NOTE.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{EpochRecord, RunRecord};

    fn result(fp: &str, init: Init, d: usize, seed: u64, train_auc: f64, test_auc: f64, loss: f64) -> RunResult {
        let mut spec = RunSpec::default();
        spec.init = init;
        spec.model.emb_dim = d;
        spec.train.seed = seed;
        RunResult {
            fingerprint: fp.into(),
            spec,
            n_train: 100,
            trainable: 10,
            total: 10,
            record: RunRecord {
                fingerprint: fp.into(),
                epochs: vec![EpochRecord { epoch: 1, train_loss: loss, train_auc, test_auc }],
            },
        }
    }

    #[test]
    fn identical_runs_have_zero_tg() {
        let s = result("a", Init::Scratch, 8, 0, 0.9, 0.8, 0.5);
        let p = result("b", Init::Pretrained, 8, 0, 0.9, 0.8, 0.5);
        let r = compute_gaps(&[(s, p)], &[]).unwrap();
        assert_eq!(r.tg, Some(0.0));
        assert_eq!(r.tg_epoch1_loss, Some(0.0));
    }

    #[test]
    fn mismatched_pair_is_rejected() {
        let s = result("a", Init::Scratch, 8, 0, 0.9, 0.8, 0.5);
        let p = result("b", Init::Pretrained, 16, 0, 0.9, 0.8, 0.5);
        assert!(matches!(compute_gaps(&[(s.clone(), p)], &[]), Err(Error::Pairing(_))));
        let q = result("c", Init::Scratch, 8, 0, 0.9, 0.8, 0.5);
        assert!(matches!(compute_gaps(&[(s, q)], &[]), Err(Error::Pairing(_))));
    }

    #[test]
    fn og_from_u_shape() {
        let runs = vec![
            result("a", Init::Scratch, 8, 0, 0.7, 0.6, 0.5),
            result("b", Init::Scratch, 16, 0, 0.9, 0.85, 0.5),
            result("c", Init::Scratch, 32, 0, 1.0, 0.7, 0.5),
        ];
        let r = compute_gaps(&[], &runs).unwrap();
        assert_eq!(r.og_optimal_d, Some(16));
        assert_eq!(r.og_largest_d, Some(32));
        assert!((r.og.unwrap() - 0.15).abs() < 1e-12);
    }
}
