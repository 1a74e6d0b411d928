//! Multimode Gaussian states described by first and second moments.
//!
//! Quadratures are ordered `x₁, p₁, …, x_m, p_m` everywhere in this crate, so
//! the 2×2 block of mode `k` lives at rows/columns `2k, 2k+1`. Units are
//! `ħ = 1` with `x̂ = (â + â†)/√2`, which puts the vacuum variance at 1/2.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Variance of either quadrature of the vacuum.
pub const VACUUM_VARIANCE: f64 = 0.5;
/// Slack allowed below 1/2 for symplectic eigenvalues before a state is rejected.
pub const PHYSICALITY_TOLERANCE: f64 = 1e-9;
/// Maximum entry of `S Ω Sᵀ − Ω` accepted for a symplectic matrix.
pub const SYMPLECTIC_TOLERANCE: f64 = 1e-12;
/// Relative asymmetry accepted in a covariance matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    /// Offset of this quadrature inside a mode's 2×2 block.
    pub fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::P => 1,
        }
    }

    pub fn conjugate(self) -> Quadrature {
        match self {
            Quadrature::X => Quadrature::P,
            Quadrature::P => Quadrature::X,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Quadrature::X => 'x',
            Quadrature::P => 'p',
        }
    }
}

impl fmt::Display for Quadrature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl std::str::FromStr for Quadrature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Quadrature::X),
            "p" => Ok(Quadrature::P),
            other => Err(invalid(format!("unknown quadrature `{other}` (expected x or p)"))),
        }
    }
}

/// Block-diagonal symplectic form with blocks `[[0, 1], [-1, 0]]`.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// A real matrix `S` with `S Ω Sᵀ = Ω`, acting as `mean → S·mean`, `cov → S·cov·Sᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticTransform {
    matrix: DMatrix<f64>,
}

impl SymplecticTransform {
    /// Wraps `matrix`, rejecting anything that is not symplectic to
    /// [`SYMPLECTIC_TOLERANCE`].
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || !matrix.nrows().is_multiple_of(2) || matrix.nrows() == 0 {
            return Err(invalid(format!("symplectic matrix must be 2m×2m, got {}×{}", matrix.nrows(), matrix.ncols())));
        }
        let transform = SymplecticTransform { matrix };
        let residual = transform.residual();
        if residual >= SYMPLECTIC_TOLERANCE {
            return Err(invalid(format!("matrix is not symplectic (residual {residual:e})")));
        }
        Ok(transform)
    }

    pub fn identity(modes: usize) -> Self {
        SymplecticTransform { matrix: DMatrix::identity(2 * modes, 2 * modes) }
    }

    /// Controlled-Z coupling `exp(i·w·x̂_i x̂_j)`: `p_i += w·x_j`, `p_j += w·x_i`.
    pub fn cz(modes: usize, i: usize, j: usize, weight: f64) -> Result<Self> {
        check_pair(modes, i, j)?;
        if !weight.is_finite() {
            return Err(invalid("CZ weight must be finite"));
        }
        let mut s = DMatrix::identity(2 * modes, 2 * modes);
        s[(2 * i + 1, 2 * j)] = weight;
        s[(2 * j + 1, 2 * i)] = weight;
        Self::new(s)
    }

    /// Beam splitter with `cos θ = √T` acting identically on both quadratures:
    /// `q_i → √T q_i + √(1−T) q_j`, `q_j → −√(1−T) q_i + √T q_j`.
    ///
    /// The reflected contribution into mode `j` carries the minus sign, so
    /// `T = 0` maps `(q_i, q_j) → (q_j, −q_i)`.
    pub fn beamsplitter(modes: usize, i: usize, j: usize, transmissivity: f64) -> Result<Self> {
        check_pair(modes, i, j)?;
        check_transmissivity(transmissivity)?;
        let t = transmissivity.sqrt();
        let r = (1.0 - transmissivity).sqrt();
        let mut s = DMatrix::identity(2 * modes, 2 * modes);
        for q in 0..2 {
            let (a, b) = (2 * i + q, 2 * j + q);
            s[(a, a)] = t;
            s[(a, b)] = r;
            s[(b, a)] = -r;
            s[(b, b)] = t;
        }
        Self::new(s)
    }

    /// Phase-space rotation of one mode: `x → cos θ x + sin θ p`, `p → −sin θ x + cos θ p`.
    pub fn rotation(modes: usize, mode: usize, theta: f64) -> Result<Self> {
        if mode >= modes {
            return Err(invalid(format!("mode index {mode} out of range for {modes} modes")));
        }
        let (sin, cos) = theta.sin_cos();
        let mut s = DMatrix::identity(2 * modes, 2 * modes);
        s[(2 * mode, 2 * mode)] = cos;
        s[(2 * mode, 2 * mode + 1)] = sin;
        s[(2 * mode + 1, 2 * mode)] = -sin;
        s[(2 * mode + 1, 2 * mode + 1)] = cos;
        Self::new(s)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    /// `‖S Ω Sᵀ − Ω‖_max`.
    pub fn residual(&self) -> f64 {
        let omega = symplectic_form(self.modes());
        (&self.matrix * &omega * self.matrix.transpose() - omega).amax()
    }
}

fn check_pair(modes: usize, i: usize, j: usize) -> Result<()> {
    if i == j {
        return Err(invalid("two-mode gate needs two distinct modes"));
    }
    if i >= modes || j >= modes {
        return Err(invalid(format!("mode index out of range for {modes} modes")));
    }
    Ok(())
}

pub(crate) fn check_transmissivity(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("transmissivity {t} outside [0, 1]")));
    }
    Ok(())
}

/// Physicality report produced by [`GaussianState::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub symmetry_residual: f64,
    pub symplectic_eigenvalues: Vec<f64>,
    pub min_symplectic_eigenvalue: f64,
    pub positive_definite: bool,
    pub purity: f64,
    pub physical: bool,
}

/// Mean vector and covariance matrix over labelled modes.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    labels: Vec<String>,
}

impl GaussianState {
    /// Checks shapes, label uniqueness and symmetry. Physicality is reported by
    /// [`validate`](Self::validate), so sub-vacuum matrices can still be inspected.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let dim = 2 * labels.len();
        if labels.is_empty() {
            return Err(invalid("state needs at least one mode"));
        }
        if mean.len() != dim || cov.nrows() != dim || cov.ncols() != dim {
            return Err(invalid(format!(
                "shape mismatch: {} labels, mean of length {}, cov {}×{}",
                labels.len(),
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        check_unique(&labels)?;
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("moments must be finite"));
        }
        let residual = symmetry_residual(&cov);
        if residual > SYMMETRY_TOLERANCE {
            return Err(invalid(format!("covariance matrix is not symmetric (residual {residual:e})")));
        }
        Ok(GaussianState { mean, cov, labels })
    }

    /// Zero-mean state with the given covariance.
    pub fn from_covariance(cov: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        Self::new(DVector::zeros(cov.nrows()), cov, labels)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn modes(&self) -> usize {
        self.labels.len()
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() != self.labels.len() {
            return Err(invalid(format!("expected {} labels, got {}", self.labels.len(), labels.len())));
        }
        check_unique(&labels)?;
        self.labels = labels;
        Ok(self)
    }

    pub fn mode_index(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| invalid(format!("unknown mode `{label}`")))
    }

    /// Row of quadrature `q` of mode `label` in the moment vectors.
    pub fn index(&self, label: &str, q: Quadrature) -> Result<usize> {
        Ok(2 * self.mode_index(label)? + q.offset())
    }

    pub fn variance(&self, label: &str, q: Quadrature) -> Result<f64> {
        let i = self.index(label, q)?;
        Ok(self.cov[(i, i)])
    }

    pub fn covariance(&self, a: (&str, Quadrature), b: (&str, Quadrature)) -> Result<f64> {
        Ok(self.cov[(self.index(a.0, a.1)?, self.index(b.0, b.1)?)])
    }

    /// The 2×2 covariance block of one mode.
    pub fn mode_block(&self, label: &str) -> Result<[[f64; 2]; 2]> {
        let k = 2 * self.mode_index(label)?;
        Ok([[self.cov[(k, k)], self.cov[(k, k + 1)]], [self.cov[(k + 1, k)], self.cov[(k + 1, k + 1)]]])
    }

    pub fn transform(&self, s: &SymplecticTransform) -> Result<Self> {
        if s.modes() != self.modes() {
            return Err(invalid(format!("transform acts on {} modes, state has {}", s.modes(), self.modes())));
        }
        let m = s.matrix();
        let mean = m * &self.mean;
        let cov = m * &self.cov * m.transpose();
        Ok(GaussianState { mean, cov: symmetrize(cov), labels: self.labels.clone() })
    }

    pub fn apply_cz(&self, i: &str, j: &str, weight: f64) -> Result<Self> {
        let s = SymplecticTransform::cz(self.modes(), self.mode_index(i)?, self.mode_index(j)?, weight)?;
        self.transform(&s)
    }

    pub fn apply_beamsplitter(&self, i: &str, j: &str, transmissivity: f64) -> Result<Self> {
        let s =
            SymplecticTransform::beamsplitter(self.modes(), self.mode_index(i)?, self.mode_index(j)?, transmissivity)?;
        self.transform(&s)
    }

    pub fn apply_rotation(&self, mode: &str, theta: f64) -> Result<Self> {
        let s = SymplecticTransform::rotation(self.modes(), self.mode_index(mode)?, theta)?;
        self.transform(&s)
    }

    /// Adds `noise` to both diagonal entries of one mode's block.
    pub fn add_noise(&self, mode: &str, noise: f64) -> Result<Self> {
        if noise.is_nan() || noise < 0.0 {
            return Err(invalid(format!("added noise must be non-negative, got {noise}")));
        }
        let k = 2 * self.mode_index(mode)?;
        let mut out = self.clone();
        out.cov[(k, k)] += noise;
        out.cov[(k + 1, k + 1)] += noise;
        Ok(out)
    }

    /// Product state `self ⊗ other`.
    pub fn tensor(&self, other: &GaussianState) -> Result<Self> {
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        check_unique(&labels)?;
        let (d1, d2) = (self.cov.nrows(), other.cov.nrows());
        let mut cov = DMatrix::zeros(d1 + d2, d1 + d2);
        cov.view_mut((0, 0), (d1, d1)).copy_from(&self.cov);
        cov.view_mut((d1, d1), (d2, d2)).copy_from(&other.cov);
        let mean = DVector::from_iterator(d1 + d2, self.mean.iter().chain(other.mean.iter()).copied());
        Ok(GaussianState { mean, cov, labels })
    }

    /// Reduced state on `keep`, listed in the state's own mode order.
    pub fn partial_trace<S: AsRef<str>>(&self, keep: &[S]) -> Result<Self> {
        if keep.is_empty() {
            return Err(invalid("partial trace must keep at least one mode"));
        }
        let mut wanted = HashSet::new();
        for k in keep {
            let k = k.as_ref();
            self.mode_index(k)?;
            wanted.insert(k);
        }
        let kept: Vec<usize> = (0..self.modes()).filter(|&i| wanted.contains(self.labels[i].as_str())).collect();
        let rows: Vec<usize> = kept.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect();
        Ok(GaussianState {
            mean: self.mean.select_rows(&rows),
            cov: self.cov.select_rows(&rows).select_columns(&rows),
            labels: kept.iter().map(|&k| self.labels[k].clone()).collect(),
        })
    }

    /// Reports symmetry, symplectic spectrum and purity. Never fails.
    pub fn validate(&self) -> Diagnostics {
        let symmetry = symmetry_residual(&self.cov);
        let cov = symmetrize(self.cov.clone());
        let eigen = SymmetricEigen::new(cov.clone());
        let positive_definite = eigen.eigenvalues.iter().all(|&l| l > 0.0);
        let nus = if positive_definite { symplectic_spectrum_pd(&eigen) } else { symplectic_spectrum_general(&cov) };
        let min_nu = nus.iter().copied().fold(f64::INFINITY, f64::min);
        let purity = if positive_definite { nus.iter().map(|nu| 1.0 / (2.0 * nu)).product() } else { f64::NAN };
        Diagnostics {
            symmetry_residual: symmetry,
            symplectic_eigenvalues: nus,
            min_symplectic_eigenvalue: min_nu,
            positive_definite,
            purity,
            physical: positive_definite
                && symmetry <= SYMMETRY_TOLERANCE
                && min_nu >= VACUUM_VARIANCE - PHYSICALITY_TOLERANCE,
        }
    }

    /// Fails with [`Error::Unphysical`] unless the state passes [`validate`](Self::validate).
    pub fn require_physical(&self) -> Result<Diagnostics> {
        let d = self.validate();
        if d.physical {
            Ok(d)
        } else {
            Err(Error::Unphysical { min_symplectic_eigenvalue: d.min_symplectic_eigenvalue })
        }
    }
}

/// Symplectic eigenvalues of a positive-definite `V`: with `R = V^{1/2}`, the
/// antisymmetric `A = R Ω R` has spectrum `±iν`, so `A Aᵀ` carries each `ν²` twice.
fn symplectic_spectrum_pd(eigen: &SymmetricEigen<f64, nalgebra::Dyn>) -> Vec<f64> {
    let n = eigen.eigenvalues.len();
    let sqrt = DMatrix::from_diagonal(&eigen.eigenvalues.map(f64::sqrt));
    let root = &eigen.eigenvectors * sqrt * eigen.eigenvectors.transpose();
    let a = &root * symplectic_form(n / 2) * &root;
    let squares = SymmetricEigen::new(symmetrize(&a * a.transpose())).eigenvalues;
    paired(squares.iter().map(|s| s.max(0.0).sqrt()).collect())
}

/// Moduli of the eigenvalues of `Ω V`; only used for diagnosing non-positive matrices.
fn symplectic_spectrum_general(cov: &DMatrix<f64>) -> Vec<f64> {
    let omega = symplectic_form(cov.nrows() / 2);
    let eig = (omega * cov).complex_eigenvalues();
    paired(eig.iter().map(|c| c.norm()).collect())
}

fn paired(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.into_iter().step_by(2).collect()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn symmetry_residual(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

fn check_unique(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(invalid(format!("duplicate mode label `{l}`")));
        }
    }
    Ok(())
}

fn default_labels(m: usize) -> Vec<String> {
    (0..m).map(|k| k.to_string()).collect()
}

/// `m` vacuum modes labelled `"0"`, …, `"m-1"`.
pub fn vacuum(m: usize) -> Result<GaussianState> {
    if m == 0 {
        return Err(invalid("vacuum needs at least one mode"));
    }
    GaussianState::from_covariance(DMatrix::identity(2 * m, 2 * m) * VACUUM_VARIANCE, default_labels(m))
}

/// Single-mode squeezed vacuum labelled `"0"`. The squeezed quadrature has
/// variance `e^{-2r}/2`, its conjugate `e^{2r}/2`.
pub fn squeezed_vacuum(r: f64, squeezed: Quadrature) -> Result<GaussianState> {
    if !r.is_finite() || r < 0.0 {
        return Err(invalid(format!(
            "squeezing must be a finite r ≥ 0 (got {r}); choose the squeezed quadrature instead of a sign"
        )));
    }
    let small = VACUUM_VARIANCE * (-2.0 * r).exp();
    let large = VACUUM_VARIANCE * (2.0 * r).exp();
    let (vx, vp) = match squeezed {
        Quadrature::X => (small, large),
        Quadrature::P => (large, small),
    };
    GaussianState::from_covariance(DMatrix::from_diagonal(&DVector::from_vec(vec![vx, vp])), default_labels(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_vacua() -> GaussianState {
        vacuum(2).unwrap().with_labels(["a", "b"]).unwrap()
    }

    #[test]
    fn vacuum_moments() {
        let v = vacuum(1).unwrap();
        assert_eq!(v.cov(), &(DMatrix::identity(2, 2) * 0.5));
        assert_eq!(v.mean(), &DVector::zeros(2));
        let v3 = vacuum(3).unwrap();
        assert_eq!(v3.cov(), &(DMatrix::identity(6, 6) * 0.5));
        assert!(matches!(vacuum(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn vacuum_is_minimum_uncertainty() {
        let d = vacuum(2).unwrap().validate();
        assert!(d.physical);
        for nu in &d.symplectic_eigenvalues {
            assert_abs_diff_eq!(*nu, 0.5, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(d.purity, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn squeezed_variances() {
        assert_eq!(squeezed_vacuum(0.0, Quadrature::P).unwrap(), vacuum(1).unwrap());
        let s = squeezed_vacuum(1.15, Quadrature::P).unwrap();
        let vp = s.variance("0", Quadrature::P).unwrap();
        let vx = s.variance("0", Quadrature::X).unwrap();
        assert_abs_diff_eq!(vp, (-2.3f64).exp() / 2.0, epsilon = 1e-15);
        assert!((vp - 0.050).abs() < 1e-3);
        assert!((vx - 4.99).abs() < 1e-2);
        assert_abs_diff_eq!(vx * vp, 0.25, epsilon = 1e-14);
        assert!(squeezed_vacuum(-0.1, Quadrature::X).is_err());
    }

    #[test]
    fn tensor_of_vacua_is_vacuum() {
        let a = vacuum(1).unwrap().with_labels(["a"]).unwrap();
        let b = vacuum(1).unwrap().with_labels(["b"]).unwrap();
        assert_eq!(a.tensor(&b).unwrap(), two_vacua());
        assert!(a.tensor(&a).is_err());
    }

    #[test]
    fn tensor_has_no_cross_covariance_and_merges_spectra() {
        let a = squeezed_vacuum(0.4, Quadrature::X).unwrap().with_labels(["a"]).unwrap();
        let b = squeezed_vacuum(0.9, Quadrature::P).unwrap().with_labels(["b"]).unwrap();
        let b = b.tensor(&vacuum(1).unwrap().with_labels(["c"]).unwrap()).unwrap();
        let b = b.apply_beamsplitter("b", "c", 0.3).unwrap().add_noise("c", 0.2).unwrap();
        let ab = a.tensor(&b).unwrap();
        assert_eq!(ab.cov().view((0, 2), (2, 4)).amax(), 0.0);
        let mut expected = a.validate().symplectic_eigenvalues;
        expected.extend(b.validate().symplectic_eigenvalues);
        expected.sort_by(f64::total_cmp);
        let got = ab.validate().symplectic_eigenvalues;
        for (g, e) in got.iter().zip(&expected) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn cz_zero_weight_is_identity() {
        let s = two_vacua().apply_cz("a", "b", 0.0).unwrap();
        assert_eq!(s, two_vacua());
    }

    #[test]
    fn cz_on_vacua_by_hand() {
        // S = [[1,0,0,0],[0,1,1,0],[0,0,1,0],[1,0,0,1]] (rows x_a,p_a,x_b,p_b).
        // S·(I/2)·Sᵀ: V_pa = 1/2 + 1/2, Cov(p_a, x_b) = 1/2, Cov(x_a, p_b) = 1/2.
        let s = two_vacua().apply_cz("a", "b", 1.0).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.5, 0.0, 0.0, 0.5, //
                0.0, 1.0, 0.5, 0.0, //
                0.0, 0.5, 0.5, 0.0, //
                0.5, 0.0, 0.0, 1.0,
            ],
        );
        assert_abs_diff_eq!(s.cov(), &expected, epsilon = 1e-15);
        let t = SymplecticTransform::cz(2, 0, 1, 1.0).unwrap();
        assert!(t.residual() < SYMPLECTIC_TOLERANCE);
    }

    #[test]
    fn cz_unknown_mode() {
        assert!(two_vacua().apply_cz("a", "zz", 1.0).is_err());
        assert!(two_vacua().apply_cz("a", "a", 1.0).is_err());
    }

    #[test]
    fn beamsplitter_limits() {
        let a = squeezed_vacuum(0.7, Quadrature::X).unwrap().with_labels(["a"]).unwrap();
        let b = squeezed_vacuum(0.2, Quadrature::P).unwrap().with_labels(["b"]).unwrap();
        let ab = a.tensor(&b).unwrap();
        assert_eq!(ab.apply_beamsplitter("a", "b", 1.0).unwrap(), ab);
        // T = 0 swaps the modes; the sign flip on mode b leaves second moments alone.
        let swapped = ab.apply_beamsplitter("a", "b", 0.0).unwrap();
        assert_abs_diff_eq!(swapped.mode_block("a").unwrap()[0][0], ab.mode_block("b").unwrap()[0][0]);
        assert_abs_diff_eq!(swapped.mode_block("b").unwrap()[1][1], ab.mode_block("a").unwrap()[1][1]);
        let t0 = SymplecticTransform::beamsplitter(2, 0, 1, 0.0).unwrap();
        assert_eq!(t0.matrix()[(0, 2)], 1.0);
        assert_eq!(t0.matrix()[(2, 0)], -1.0);
        assert!(ab.apply_beamsplitter("a", "b", 1.2).is_err());
        assert!(ab.apply_beamsplitter("a", "b", -0.1).is_err());
    }

    #[test]
    fn balanced_beamsplitter_mixes_variances() {
        let r = 0.8f64;
        let a = squeezed_vacuum(r, Quadrature::P).unwrap().with_labels(["a"]).unwrap();
        let ab = a.tensor(&vacuum(1).unwrap().with_labels(["b"]).unwrap()).unwrap();
        let out = ab.apply_beamsplitter("a", "b", 0.5).unwrap();
        let expected = ((2.0 * r).exp() / 2.0 + 0.5) / 2.0;
        assert_abs_diff_eq!(out.variance("a", Quadrature::X).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn partial_trace_cases() {
        let s = two_vacua().apply_cz("a", "b", 1.0).unwrap();
        assert_eq!(s.partial_trace(&["a", "b"]).unwrap(), s);
        let red = s.partial_trace(&["a"]).unwrap();
        assert_abs_diff_eq!(red.variance("a", Quadrature::X).unwrap(), 0.5);
        assert_abs_diff_eq!(red.variance("a", Quadrature::P).unwrap(), 1.0);
        assert!(s.partial_trace::<&str>(&[]).is_err());
        assert!(s.partial_trace(&["q"]).is_err());

        let a = squeezed_vacuum(0.3, Quadrature::X).unwrap().with_labels(["a"]).unwrap();
        let b = squeezed_vacuum(0.6, Quadrature::P).unwrap().with_labels(["b"]).unwrap();
        assert_eq!(a.tensor(&b).unwrap().partial_trace(&["a"]).unwrap(), a);
    }

    #[test]
    fn sub_vacuum_is_flagged() {
        let s = GaussianState::from_covariance(DMatrix::identity(2, 2) * 0.25, vec!["a".into()]).unwrap();
        let d = s.validate();
        assert!(!d.physical);
        assert_abs_diff_eq!(d.min_symplectic_eigenvalue, 0.25, epsilon = 1e-14);
        assert!(matches!(s.require_physical(), Err(Error::Unphysical { .. })));
    }

    #[test]
    fn indefinite_matrix_is_reported_not_thrown() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let s = GaussianState::from_covariance(cov, vec!["a".into()]).unwrap();
        let d = s.validate();
        assert!(!d.physical);
        assert!(!d.positive_definite);
    }

    #[test]
    fn constructor_rejects_bad_shapes() {
        let cov = DMatrix::identity(4, 4) * 0.5;
        assert!(GaussianState::from_covariance(cov.clone(), vec!["a".into()]).is_err());
        assert!(GaussianState::from_covariance(cov.clone(), vec!["a".into(), "a".into()]).is_err());
        let mut asym = cov;
        asym[(0, 1)] = 0.1;
        assert!(GaussianState::from_covariance(asym, vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn rotation_by_quarter_turn_swaps_quadratures() {
        let s = squeezed_vacuum(0.5, Quadrature::P).unwrap();
        let rotated = s.apply_rotation("0", std::f64::consts::FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(
            rotated.variance("0", Quadrature::X).unwrap(),
            s.variance("0", Quadrature::P).unwrap(),
            epsilon = 1e-15
        );
    }
}
