//! Central-difference gradient checking.
//!
//! The checker perturbs every parameter coordinate in the store by ±h,
//! re-evaluates a scalar loss, and compares the numeric slope against the
//! analytic gradient already accumulated in the store. It is the one oracle
//! every backward pass in this crate answers to.

use std::collections::BTreeMap;

use super::tensor::ParamStore;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOL_REL: f64 = 1e-4;

/// Worst relative error per parameter, plus the tolerance it was judged at.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_param: BTreeMap<String, f64>,
    pub tol_rel: f64,
}

impl GradCheckReport {
    /// Names of parameters whose worst coordinate exceeds the tolerance.
    pub fn failing(&self) -> Vec<&str> {
        self.per_param
            .iter()
            .filter(|(_, &err)| err > self.tol_rel)
            .map(|(name, _)| name.as_str())
            .collect()
    }

    pub fn max_error(&self) -> f64 {
        self.per_param.values().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.failing().is_empty()
    }
}

/// Relative error with the scale clamp used throughout:
/// `|a - n| / max(1, |a|, |n|)`.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0_f64.max(analytic.abs()).max(numeric.abs())
}

/// Compare the analytic gradients stored in `params` against central
/// differences of `loss`.
///
/// `loss` must be a pure scalar function of the parameter values (sum the
/// outputs of whatever graph is under test), and the caller must have run
/// the analytic forward/backward beforehand so the grad slots are populated.
/// Parameter values are restored bit-exactly afterwards.
pub fn grad_check<F>(params: &mut ParamStore, loss: F, h: f64, tol_rel: f64) -> GradCheckReport
where
    F: Fn(&ParamStore) -> f64,
{
    let mut per_param = BTreeMap::new();
    for name in params.names() {
        let len = params.value(&name).len();
        let mut worst = 0.0_f64;
        for idx in 0..len {
            let orig = params.value(&name).data()[idx];
            params.value_mut(&name).data_mut()[idx] = orig + h;
            let plus = loss(params);
            params.value_mut(&name).data_mut()[idx] = orig - h;
            let minus = loss(params);
            params.value_mut(&name).data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = params.grad(&name).data()[idx];
            worst = worst.max(rel_err(analytic, numeric));
        }
        per_param.insert(name, worst);
    }
    GradCheckReport { per_param, tol_rel }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::{linear, linear_backward};
    use crate::nn::tensor::Tensor;
    use crate::rng::SplitMix64;

    #[test]
    fn quadratic_gradient_is_recovered() {
        // f(x) = x^2 at x = 3: analytic gradient 6, central differences are
        // exact for quadratics up to rounding.
        let mut ps = ParamStore::new();
        ps.insert("x", Tensor::from_vec(&[1], vec![3.0]).unwrap())
            .unwrap();
        ps.grad_mut("x").data_mut()[0] = 6.0;
        let report = grad_check(
            &mut ps,
            |p| {
                let x = p.value("x").data()[0];
                x * x
            },
            DEFAULT_STEP,
            DEFAULT_TOL_REL,
        );
        assert!(report.max_error() < 1e-8, "err {}", report.max_error());
        assert!(report.passed());
    }

    #[test]
    fn linear_layer_passes_at_1e6() {
        let mut rng = SplitMix64::new(12);
        let mut x = Tensor::zeros(&[3, 4]);
        let mut w = Tensor::zeros(&[4, 2]);
        let mut b = Tensor::zeros(&[2]);
        x.fill_normal(&mut rng, 1.0);
        w.fill_normal(&mut rng, 1.0);
        b.fill_normal(&mut rng, 1.0);

        let mut ps = ParamStore::new();
        ps.insert("x", x).unwrap();
        ps.insert("w", w).unwrap();
        ps.insert("b", b).unwrap();

        // analytic: loss = sum(linear(x, w, b)), so dy is all-ones
        let y = linear(ps.value("x"), ps.value("w"), ps.value("b")).unwrap();
        let dy = Tensor::filled(y.shape(), 1.0);
        let x_val = ps.value("x").clone();
        let w_val = ps.value("w").clone();
        let mut dw = Tensor::zeros(&[4, 2]);
        let mut db = Tensor::zeros(&[2]);
        let dx = linear_backward(&x_val, &w_val, &dy, &mut dw, &mut db).unwrap();
        ps.grad_mut("x").add_assign(&dx).unwrap();
        ps.grad_mut("w").add_assign(&dw).unwrap();
        ps.grad_mut("b").add_assign(&db).unwrap();

        let report = grad_check(
            &mut ps,
            |p| {
                linear(p.value("x"), p.value("w"), p.value("b"))
                    .unwrap()
                    .data()
                    .iter()
                    .sum()
            },
            DEFAULT_STEP,
            1e-6,
        );
        assert!(report.passed(), "failing: {:?}", report.failing());
    }

    #[test]
    fn corrupted_backward_is_flagged() {
        let mut ps = ParamStore::new();
        ps.insert("x", Tensor::from_vec(&[1], vec![2.0]).unwrap())
            .unwrap();
        // true gradient of x^2 at 2 is 4; store it scaled by 1.01
        ps.grad_mut("x").data_mut()[0] = 4.0 * 1.01;
        let report = grad_check(
            &mut ps,
            |p| {
                let x = p.value("x").data()[0];
                x * x
            },
            DEFAULT_STEP,
            DEFAULT_TOL_REL,
        );
        assert!(!report.passed());
        assert_eq!(report.failing(), vec!["x"]);
    }

    #[test]
    fn values_are_restored_after_checking() {
        let mut ps = ParamStore::new();
        ps.insert("x", Tensor::from_vec(&[2], vec![1.5, -2.5]).unwrap())
            .unwrap();
        let before = ps.value("x").data().to_vec();
        let _ = grad_check(&mut ps, |p| p.value("x").data().iter().sum(), 1e-5, 1e-4);
        assert_eq!(ps.value("x").data(), before.as_slice());
    }
}
