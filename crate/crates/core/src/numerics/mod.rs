//! Dense vector/matrix arithmetic, small feed-forward networks, the
//! reverse-mode tape, finite-difference gradient checking, and Adam.
//!
//! All arithmetic is 64-bit so that central differences at `h = 1e-5` are
//! meaningful for verifying analytic gradients.

pub mod adam;
pub mod matrix;
pub mod mlp;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use matrix::{all_finite, dot, norm, Matrix};
pub use mlp::{mlp_apply, DenseLayer, MlpParams};
pub use tape::{stable_sigmoid, Adjoints, NodeId, Tape};

use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any
/// logarithm, so confident discriminators cannot produce infinite losses.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Softmax with max-subtraction for stability. Entries land in `(0, 1]`
/// and sum to 1 within 1e-12.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("softmax: empty input".into()));
    }
    if !all_finite(scores) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    Ok(softmax_unchecked(scores))
}

pub(crate) fn softmax_unchecked(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_parameter: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub passed: bool,
}

/// Compare `analytic` against the central difference
/// `(f(theta+h) - f(theta-h)) / 2h`, coordinate by coordinate. Relative
/// error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(
    mut scalar_fn: F,
    params: &[f64],
    analytic: &[f64],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("grad_check: h must be positive, got {h}")));
    }
    if analytic.len() != params.len() {
        return Err(Error::Shape(format!(
            "grad_check: {} analytic entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_parameter: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        passed: true,
    };
    for i in 0..params.len() {
        theta[i] = params[i] + h;
        let fp = scalar_fn(&theta)?;
        theta[i] = params[i] - h;
        let fm = scalar_fn(&theta)?;
        theta[i] = params[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "grad_check: function value at parameter {i}"
            )));
        }
        let numeric = (fp - fm) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_parameter = i;
            report.worst_analytic = analytic[i];
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_rel_error < tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_on_equal_scores() {
        for n in 1..=6 {
            let w = softmax(&vec![0.42; n]).unwrap();
            for v in &w {
                assert!((v - 1.0 / n as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_singleton_is_one() {
        assert_eq!(softmax(&[3.7]).unwrap(), vec![1.0]);
    }

    #[test]
    fn softmax_matches_direct_exponentials() {
        let w = softmax(&[0.7071, 0.0]).unwrap();
        let e = 0.7071_f64.exp();
        let expected = [e / (e + 1.0), 1.0 / (e + 1.0)];
        assert!((w[0] - expected[0]).abs() < 1e-12);
        assert!((w[1] - expected[1]).abs() < 1e-12);
        assert!((w[0] - 0.6698).abs() < 1e-4);
        assert!((w[1] - 0.3302).abs() < 1e-4);
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn grad_check_quadratic_is_exact() {
        // Central differences are exact for quadratics.
        let r = grad_check(|p| Ok(p[0] * p[0]), &[3.0], &[6.0], 1e-5, 1e-9).unwrap();
        assert!(r.max_rel_error < 1e-9, "rel error {}", r.max_rel_error);
        assert!(r.passed);
    }

    #[test]
    fn grad_check_linear_is_exact() {
        let c = -2.75;
        let r = grad_check(|p| Ok(c * p[0]), &[1.3], &[c], 1e-5, 1e-10).unwrap();
        assert!(r.max_rel_error < 1e-10);
    }

    #[test]
    fn grad_check_sigmoid_bce() {
        // Binary cross-entropy of a sigmoid unit at a fixed point; the
        // analytic gradient of -ln(sigma(z)) is sigma(z) - 1.
        let z = 0.8;
        let f = |p: &[f64]| -> Result<f64> { Ok(-(stable_sigmoid(p[0]).ln())) };
        let analytic = [stable_sigmoid(z) - 1.0];
        let r = grad_check(f, &[z], &analytic, 1e-5, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-6, "rel error {}", r.max_rel_error);
    }

    #[test]
    fn grad_check_rejects_bad_h_and_nonfinite() {
        assert!(grad_check(|p| Ok(p[0]), &[1.0], &[1.0], 0.0, 1e-4).is_err());
        assert!(grad_check(|_| Ok(f64::NAN), &[1.0], &[1.0], 1e-5, 1e-4).is_err());
    }

    #[test]
    fn grad_check_flags_wrong_gradient() {
        let r = grad_check(|p| Ok(p[0] * p[0]), &[3.0], &[5.0], 1e-5, 1e-4).unwrap();
        assert!(!r.passed);
        assert_eq!(r.worst_parameter, 0);
    }
}
