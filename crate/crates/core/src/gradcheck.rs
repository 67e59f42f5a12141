//! Central finite-difference gradient checking.
//!
//! The numerical side only evaluates the scalar function; it never touches
//! the tape's backward rules, so it is an independent reference for them.

/// Step used by all checks in this crate.
pub const STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator so that near-zero
/// gradients are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3);
    (analytic - numeric).abs() / denom
}

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate `i`.
pub fn numeric_gradient<F>(x: &[f64], step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = f(&probe);
            probe[i] = orig - step;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CheckReport {
    pub max_abs: f64,
    pub max_rel: f64,
    pub checked: usize,
}

impl CheckReport {
    pub fn merge(self, other: CheckReport) -> CheckReport {
        CheckReport {
            max_abs: self.max_abs.max(other.max_abs),
            max_rel: self.max_rel.max(other.max_rel),
            checked: self.checked + other.checked,
        }
    }

    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel < rel_tol
    }
}

pub fn compare(analytic: &[f64], numeric: &[f64]) -> CheckReport {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .fold(CheckReport::default(), |r, (&a, &n)| CheckReport {
            max_abs: r.max_abs.max((a - n).abs()),
            max_rel: r.max_rel.max(relative_error(a, n)),
            checked: r.checked + 1,
        })
}
