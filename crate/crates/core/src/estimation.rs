//! Linear inference of one of the dealer's quadratures from the players' outcomes.
//!
//! For Gaussian states the best estimator is linear, and the residual (inference)
//! variance is a Schur complement of the covariance matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::gaussian::{GaussianState, Quadrature};

/// Eigenvalues of the estimator covariance below `PINV_CUTOFF · trace` are dropped.
pub const PINV_CUTOFF: f64 = 1e-10;

/// A linear combination of one quadrature across several modes, e.g. `X̄ = −X_B + X_C`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointVariable {
    quadrature: Quadrature,
    gains: Vec<(String, f64)>,
}

impl JointVariable {
    pub fn new<S: Into<String>>(quadrature: Quadrature, gains: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let gains: Vec<(String, f64)> = gains.into_iter().map(|(l, g)| (l.into(), g)).collect();
        if !gains.iter().any(|(_, g)| *g != 0.0) {
            return Err(invalid("joint variable needs at least one nonzero gain"));
        }
        if gains.iter().any(|(_, g)| !g.is_finite()) {
            return Err(invalid("joint variable gains must be finite"));
        }
        Ok(JointVariable { quadrature, gains })
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn gains(&self) -> &[(String, f64)] {
        &self.gains
    }

    pub fn gain(&self, label: &str) -> Option<f64> {
        self.gains.iter().find(|(l, _)| l == label).map(|(_, g)| *g)
    }
}

/// Outcome of optimally conditioning a target quadrature on a set of modes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditioningResult {
    pub conditional_variance: f64,
    pub unconditional_variance: f64,
    /// Optimal gains `Γ⁻¹c`; may all vanish when the estimator is uncorrelated.
    pub estimator: JointVariable,
}

/// `Var(t) − Cov(t, e)² / Var(e)` for the fixed estimator `e`.
pub fn conditional_variance_fixed(
    state: &GaussianState,
    target: (&str, Quadrature),
    estimator: &JointVariable,
) -> Result<f64> {
    let t = state.index(target.0, target.1)?;
    let cov = state.cov();
    let mut var_e = 0.0;
    let mut cov_te = 0.0;
    let mut scale = 0.0;
    let rows = estimator
        .gains()
        .iter()
        .map(|(l, g)| Ok((state.index(l, estimator.quadrature())?, *g)))
        .collect::<Result<Vec<_>>>()?;
    for &(i, gi) in &rows {
        cov_te += gi * cov[(t, i)];
        scale += gi * gi * cov[(i, i)];
        for &(j, gj) in &rows {
            var_e += gi * gj * cov[(i, j)];
        }
    }
    if var_e <= 1e-12 * scale.max(1e-300) || var_e <= 0.0 {
        return Err(Error::DegenerateEstimator { variance: var_e });
    }
    Ok(cov[(t, t)] - cov_te * cov_te / var_e)
}

/// Minimum inference variance of `target` given `quadrature` of every mode in
/// `estimator_modes`: `V_t − cᵀΓ⁺c` with gains `Γ⁺c`.
///
/// `Γ⁺` is the eigenvalue-truncated pseudo-inverse (cutoff [`PINV_CUTOFF`]·tr Γ),
/// so perfectly correlated estimator modes give the limiting value instead of an error.
pub fn conditional_variance_optimal<S: AsRef<str>>(
    state: &GaussianState,
    target: (&str, Quadrature),
    estimator_modes: &[S],
    quadrature: Quadrature,
) -> Result<ConditioningResult> {
    if estimator_modes.is_empty() {
        return Err(invalid("estimator needs at least one mode"));
    }
    let t = state.index(target.0, target.1)?;
    let mut rows = Vec::with_capacity(estimator_modes.len());
    for m in estimator_modes {
        let m = m.as_ref();
        if m == target.0 {
            return Err(invalid(format!("estimator set contains the target mode `{m}`")));
        }
        let i = state.index(m, quadrature)?;
        if rows.contains(&i) {
            return Err(invalid(format!("estimator mode `{m}` listed twice")));
        }
        rows.push(i);
    }
    let cov = state.cov();
    let unconditional = cov[(t, t)];
    if unconditional <= 0.0 {
        return Err(invalid(format!("target variance {unconditional} is not positive")));
    }
    let gamma = cov.select_rows(&rows).select_columns(&rows);
    let c = DVector::from_iterator(rows.len(), rows.iter().map(|&i| cov[(t, i)]));
    let gains = pinv_solve(&gamma, &c);
    let conditional = unconditional - c.dot(&gains);
    if conditional <= 0.0 {
        return Err(invalid(format!(
            "inference variance {conditional:e} is not positive: target is perfectly predictable"
        )));
    }
    let estimator = JointVariable {
        quadrature,
        gains: estimator_modes.iter().map(|m| m.as_ref().to_string()).zip(gains.iter().copied()).collect(),
    };
    Ok(ConditioningResult { conditional_variance: conditional, unconditional_variance: unconditional, estimator })
}

/// Solves `Γ g = c` in the least-squares sense through the truncated eigen-decomposition.
fn pinv_solve(gamma: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    let cutoff = PINV_CUTOFF * gamma.trace().abs();
    let eigen = SymmetricEigen::new(gamma.clone());
    let mut out = DVector::zeros(c.len());
    for (k, &lambda) in eigen.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let u = eigen.eigenvectors.column(k);
            out += u * (u.dot(c) / lambda);
        }
    }
    out
}

/// Mutual information in bits between a Gaussian variable and its estimator,
/// `½ log₂(V / V_cond)`.
///
/// Exact for Gaussian data. For any other distribution with the same second
/// moments the Gaussian entropy bound makes this a proxy, not a guarantee.
pub fn gaussian_mutual_information(unconditional_variance: f64, conditional_variance: f64) -> Result<f64> {
    if conditional_variance.is_nan() || conditional_variance <= 0.0 || !unconditional_variance.is_finite() {
        return Err(invalid(format!("conditional variance {conditional_variance} must be positive and finite")));
    }
    let ratio = unconditional_variance / conditional_variance;
    // Schur complements can overshoot the unconditional variance by rounding.
    if ratio < 1.0 - 1e-12 {
        return Err(invalid(format!(
            "conditional variance {conditional_variance} exceeds unconditional variance {unconditional_variance}"
        )));
    }
    Ok(0.5 * ratio.max(1.0).log2())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{build_fig1_state, two_mode_squeezed_vacuum};
    use crate::gaussian::{squeezed_vacuum, vacuum};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn product_state_is_unchanged() {
        let a = squeezed_vacuum(0.6, Quadrature::X).unwrap().with_labels(["A"]).unwrap();
        let s = a.tensor(&vacuum(2).unwrap().with_labels(["B", "C"]).unwrap()).unwrap();
        let est = JointVariable::new(Quadrature::X, [("B", 1.0), ("C", -2.0)]).unwrap();
        let v = conditional_variance_fixed(&s, ("A", Quadrature::X), &est).unwrap();
        assert_abs_diff_eq!(v, s.variance("A", Quadrature::X).unwrap(), epsilon = 1e-15);
        let opt = conditional_variance_optimal(&s, ("A", Quadrature::X), &["B", "C"], Quadrature::X).unwrap();
        assert_abs_diff_eq!(opt.conditional_variance, opt.unconditional_variance, epsilon = 1e-15);
        for (_, g) in opt.estimator.gains() {
            assert_eq!(*g, 0.0);
        }
    }

    #[test]
    fn tmsv_closed_form() {
        for r in [0.0, 0.3, 1.0, 2.0f64] {
            let s = two_mode_squeezed_vacuum(r).unwrap();
            let est = JointVariable::new(Quadrature::X, [("B", 1.0)]).unwrap();
            let v = conditional_variance_fixed(&s, ("A", Quadrature::X), &est).unwrap();
            assert_abs_diff_eq!(v, 1.0 / (2.0 * (2.0 * r).cosh()), epsilon = 1e-12);
        }
    }

    #[test]
    fn strong_correlation_drives_variance_to_zero() {
        let s = two_mode_squeezed_vacuum(8.0).unwrap();
        let opt = conditional_variance_optimal(&s, ("A", Quadrature::X), &["B"], Quadrature::X).unwrap();
        assert!(opt.conditional_variance < 1e-6);
    }

    #[test]
    fn degenerate_estimator_is_rejected() {
        let s = GaussianState::from_covariance(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5, 0.0, 0.5])),
            vec!["A".into(), "B".into()],
        )
        .unwrap();
        let est = JointVariable::new(Quadrature::X, [("B", 1.0)]).unwrap();
        assert!(matches!(
            conditional_variance_fixed(&s, ("A", Quadrature::X), &est),
            Err(Error::DegenerateEstimator { .. })
        ));
        assert!(JointVariable::new(Quadrature::X, [("B", 0.0)]).is_err());
    }

    #[test]
    fn single_mode_optimum_is_regression_slope() {
        let (s, _) = build_fig1_state(0.8, 0.9, 1.0).unwrap();
        let opt = conditional_variance_optimal(&s, ("A", Quadrature::X), &["B"], Quadrature::X).unwrap();
        let slope =
            s.covariance(("A", Quadrature::X), ("B", Quadrature::X)).unwrap() / s.variance("B", Quadrature::X).unwrap();
        assert_abs_diff_eq!(opt.estimator.gain("B").unwrap(), slope, epsilon = 1e-12);
        let fixed = conditional_variance_fixed(&s, ("A", Quadrature::X), &opt.estimator).unwrap();
        assert_abs_diff_eq!(fixed, opt.conditional_variance, epsilon = 1e-12);
    }

    #[test]
    fn optimal_beats_hand_picked_joint_variable() {
        let (s, _) = build_fig1_state(1.0, 1.0, 1.0).unwrap();
        let opt = conditional_variance_optimal(&s, ("A", Quadrature::X), &["B", "C"], Quadrature::X).unwrap();
        for fixed in [[("B", -1.0), ("C", 1.0)], [("B", 1.0), ("C", -1.0)]] {
            let est = JointVariable::new(Quadrature::X, fixed).unwrap();
            let v = conditional_variance_fixed(&s, ("A", Quadrature::X), &est).unwrap();
            assert!(opt.conditional_variance <= v + 1e-12);
        }
        // T = 1 closed form: V(x_A | X̄) = 1 / (4 cosh 2r).
        assert_abs_diff_eq!(opt.conditional_variance, 1.0 / (4.0 * 2f64.cosh()), epsilon = 1e-12);
    }

    #[test]
    fn estimator_set_checks() {
        let (s, _) = build_fig1_state(0.5, 1.0, 1.0).unwrap();
        assert!(conditional_variance_optimal::<&str>(&s, ("A", Quadrature::X), &[], Quadrature::X).is_err());
        assert!(conditional_variance_optimal(&s, ("A", Quadrature::X), &["A"], Quadrature::X).is_err());
        assert!(conditional_variance_optimal(&s, ("A", Quadrature::X), &["Q"], Quadrature::X).is_err());
    }

    #[test]
    fn singular_estimator_block_uses_pseudo_inverse() {
        // B and C carry identical copies of the same x-correlation.
        let cov = DMatrix::from_row_slice(
            6,
            6,
            &[
                1.0, 0.0, 0.8, 0.0, 0.8, 0.0, //
                0.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
                0.8, 0.0, 1.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
                0.8, 0.0, 1.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            ],
        );
        let s = GaussianState::from_covariance(cov, vec!["A".into(), "B".into(), "C".into()]).unwrap();
        let both = conditional_variance_optimal(&s, ("A", Quadrature::X), &["B", "C"], Quadrature::X).unwrap();
        let one = conditional_variance_optimal(&s, ("A", Quadrature::X), &["B"], Quadrature::X).unwrap();
        assert_abs_diff_eq!(both.conditional_variance, 1.0 - 0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(one.conditional_variance, both.conditional_variance, epsilon = 1e-12);
        assert_abs_diff_eq!(both.estimator.gain("B").unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn mutual_information_cases() {
        assert_eq!(gaussian_mutual_information(2.0, 2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(gaussian_mutual_information(4.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(gaussian_mutual_information(1.0, 2.0).is_err());
        assert!(gaussian_mutual_information(1.0, 0.0).is_err());
        for r in [0.3, 1.0f64] {
            let v = (2.0 * r).cosh() / 2.0;
            let vc = 1.0 / (2.0 * (2.0 * r).cosh());
            assert_abs_diff_eq!(gaussian_mutual_information(v, vc).unwrap(), (2.0 * r).cosh().log2(), epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn enlarging_the_estimator_set_never_hurts(r in 0.0..1.5f64, t in 0.5..=1.0f64, q in prop_oneof![Just(Quadrature::X), Just(Quadrature::P)]) {
            let (s, _) = build_fig1_state(r, t, 1.0).unwrap();
            let small = conditional_variance_optimal(&s, ("A", q), &["C"], q).unwrap();
            let large = conditional_variance_optimal(&s, ("A", q), &["B", "C"], q).unwrap();
            prop_assert!(large.conditional_variance <= small.conditional_variance + 1e-12);
            let fixed = conditional_variance_fixed(&s, ("A", q), &large.estimator);
            if let Ok(fixed) = fixed {
                prop_assert!((fixed - large.conditional_variance).abs() < 1e-12);
            }
        }
    }
}
