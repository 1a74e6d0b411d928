//! Monte Carlo run of the measurement protocol: every party picks `x` or `p` at
//! random each round, rounds are sifted by basis pattern, and a revealed subset
//! is used to estimate the inference variances that feed the key-rate bounds.
//!
//! Each round draws all quadratures jointly from the state's multivariate normal
//! and then keeps only the value of each party's chosen quadrature. The joint
//! draw is a simulation device; the revealed values have exactly the statistics
//! of real homodyne outcomes, which is all the estimators consume.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::PartyLayout;
use crate::error::{invalid, Error, Result};
use crate::gaussian::{GaussianState, Quadrature};
use crate::keyrate::{
    argmax, argmin, gaussian_entropy, holevo_bound, keyrate_qss, rate_from_variances, ThresholdScheme,
};

/// Rounds generated per RNG stream. Fixed so results do not depend on the thread count.
pub const CHUNK_ROUNDS: usize = 4096;
/// Fewest sifted rounds accepted by the regression estimator.
pub const MIN_SIFTED_ROUNDS: usize = 100;
/// Delete-a-group jackknife block count.
pub const JACKKNIFE_BLOCKS: usize = 32;
/// Negative covariance eigenvalues above this are rounding noise and clipped to zero.
pub const EIGEN_CLIP: f64 = -1e-10;

/// RNG stream reserved for choosing the revealed subset.
const REVEAL_STREAM: u64 = u64::MAX;

/// Per-round basis choices and revealed outcomes, `rounds × parties`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    rounds: usize,
    parties: Vec<String>,
    bases: Vec<Quadrature>,
    outcomes: Vec<f64>,
    seed: u64,
    basis_probability: f64,
}

impl SampleBatch {
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn parties(&self) -> &[String] {
        &self.parties
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn basis_probability(&self) -> f64 {
        self.basis_probability
    }

    pub fn party_index(&self, label: &str) -> Result<usize> {
        self.parties.iter().position(|p| p == label).ok_or_else(|| invalid(format!("unknown party `{label}`")))
    }

    pub fn basis(&self, round: usize, party: usize) -> Quadrature {
        self.bases[round * self.parties.len() + party]
    }

    pub fn outcome(&self, round: usize, party: usize) -> f64 {
        self.outcomes[round * self.parties.len() + party]
    }

    /// Basis pattern of one round, e.g. `"xpx"`, in party order.
    pub fn pattern(&self, round: usize) -> String {
        (0..self.parties.len()).map(|p| self.basis(round, p).symbol()).collect()
    }
}

/// Symmetric square-root factor `U √Λ` of the covariance matrix, row-major.
fn sampling_factor(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let eigen = SymmetricEigen::new(cov.clone());
    let dim = cov.nrows();
    let mut roots = Vec::with_capacity(dim);
    for &l in eigen.eigenvalues.iter() {
        if l < EIGEN_CLIP {
            return Err(invalid(format!("covariance has eigenvalue {l:e}, cannot sample")));
        }
        roots.push(l.max(0.0).sqrt());
    }
    let mut factor = vec![0.0; dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            factor[i * dim + k] = eigen.eigenvectors[(i, k)] * roots[k];
        }
    }
    Ok(factor)
}

/// Simulates `rounds` protocol rounds. Each party independently measures `x`
/// with probability `basis_probability`. Identical inputs give identical batches.
pub fn sample_outcomes(state: &GaussianState, rounds: usize, basis_probability: f64, seed: u64) -> Result<SampleBatch> {
    if rounds == 0 {
        return Err(invalid("need at least one round"));
    }
    if !(basis_probability > 0.0 && basis_probability < 1.0) {
        return Err(invalid(format!("basis probability {basis_probability} outside (0, 1)")));
    }
    state.require_physical()?;
    let parties = state.labels().to_vec();
    let m = parties.len();
    let dim = 2 * m;
    let factor = sampling_factor(state.cov())?;
    let mean: Vec<f64> = state.mean().iter().copied().collect();

    let mut bases = vec![Quadrature::X; rounds * m];
    let mut outcomes = vec![0.0; rounds * m];
    bases.par_chunks_mut(CHUNK_ROUNDS * m).zip(outcomes.par_chunks_mut(CHUNK_ROUNDS * m)).enumerate().for_each(
        |(chunk, (bases, outcomes))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let mut z = vec![0.0; dim];
            for (round_bases, round_outcomes) in bases.chunks_mut(m).zip(outcomes.chunks_mut(m)) {
                for b in round_bases.iter_mut() {
                    *b = if rng.random::<f64>() < basis_probability { Quadrature::X } else { Quadrature::P };
                }
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                for (party, (b, out)) in round_bases.iter().zip(round_outcomes.iter_mut()).enumerate() {
                    let row = 2 * party + b.offset();
                    let coeffs = &factor[row * dim..(row + 1) * dim];
                    *out = mean[row] + coeffs.iter().zip(&z).map(|(c, z)| c * z).sum::<f64>();
                }
            }
        },
    );

    Ok(SampleBatch { rounds, parties, bases, outcomes, seed, basis_probability })
}

/// Least-squares fit of one party's outcomes on others' over sifted rounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalConditioning {
    pub basis: Quadrature,
    pub sifted_rounds: usize,
    /// Residual variance with `1/(N − d)` normalisation, `d` counting the intercept.
    pub variance: f64,
    pub standard_error: f64,
    pub intercept: f64,
    pub gains: Vec<(String, f64)>,
    pub gain_standard_errors: Vec<f64>,
}

/// Regression of `target`'s `basis` outcomes on the same basis of
/// `estimator_parties`, over every round where all of them measured `basis`.
pub fn empirical_conditional_variance<S: AsRef<str>>(
    batch: &SampleBatch,
    target: &str,
    basis: Quadrature,
    estimator_parties: &[S],
) -> Result<EmpiricalConditioning> {
    empirical_conditional_variance_on(batch, None, target, basis, estimator_parties)
}

/// As [`empirical_conditional_variance`], restricted to rounds with `mask[round]`.
pub fn empirical_conditional_variance_on<S: AsRef<str>>(
    batch: &SampleBatch,
    mask: Option<&[bool]>,
    target: &str,
    basis: Quadrature,
    estimator_parties: &[S],
) -> Result<EmpiricalConditioning> {
    let t = batch.party_index(target)?;
    let est = estimator_parties.iter().map(|p| batch.party_index(p.as_ref())).collect::<Result<Vec<_>>>()?;
    if est.contains(&t) {
        return Err(invalid(format!("estimator set contains the target `{target}`")));
    }
    if let Some(mask) = mask {
        if mask.len() != batch.rounds {
            return Err(invalid("round mask length differs from the batch"));
        }
    }
    // Row layout: [1, e_1, …, e_d, t].
    let width = est.len() + 2;
    let mut rows = Vec::new();
    for round in 0..batch.rounds {
        if mask.is_some_and(|m| !m[round]) {
            continue;
        }
        if batch.basis(round, t) != basis || est.iter().any(|&e| batch.basis(round, e) != basis) {
            continue;
        }
        rows.push(1.0);
        rows.extend(est.iter().map(|&e| batch.outcome(round, e)));
        rows.push(batch.outcome(round, t));
    }
    let n = rows.len() / width;
    if n < MIN_SIFTED_ROUNDS.max(width + 1) {
        return Err(Error::Undersampled { available: n, required: MIN_SIFTED_ROUNDS.max(width + 1) });
    }

    let blocks = JACKKNIFE_BLOCKS.min(n);
    let mut block_moments = vec![DMatrix::<f64>::zeros(width, width); blocks];
    let mut block_counts = vec![0usize; blocks];
    for (j, row) in rows.chunks(width).enumerate() {
        let b = j * blocks / n;
        block_counts[b] += 1;
        let z = DVector::from_column_slice(row);
        block_moments[b] += &z * z.transpose();
    }
    let total: DMatrix<f64> = block_moments.iter().fold(DMatrix::zeros(width, width), |acc, m| acc + m);
    let full = fit_moments(&total, n)?;

    let leave_out = (0..blocks)
        .map(|b| fit_moments(&(&total - &block_moments[b]), n - block_counts[b]))
        .collect::<Result<Vec<_>>>()?;
    let jackknife = |f: &dyn Fn(&Fit) -> f64| {
        let vals: Vec<f64> = leave_out.iter().map(f).collect();
        let mean = vals.iter().sum::<f64>() / blocks as f64;
        let ss: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
        ((blocks as f64 - 1.0) / blocks as f64 * ss).sqrt()
    };
    let standard_error = jackknife(&|f| f.variance);
    let gain_standard_errors = (0..est.len()).map(|k| jackknife(&|f| f.coefficients[k + 1])).collect();

    Ok(EmpiricalConditioning {
        basis,
        sifted_rounds: n,
        variance: full.variance,
        standard_error,
        intercept: full.coefficients[0],
        gains: est.iter().map(|&e| batch.parties[e].clone()).zip(full.coefficients.iter().skip(1).copied()).collect(),
        gain_standard_errors,
    })
}

struct Fit {
    coefficients: Vec<f64>,
    variance: f64,
}

/// Normal equations on the moment matrix `Σ z zᵀ` with `z = [regressors…, target]`.
fn fit_moments(moments: &DMatrix<f64>, n: usize) -> Result<Fit> {
    let d = moments.nrows() - 1;
    let a = moments.view((0, 0), (d, d)).into_owned();
    let b = moments.view((0, d), (d, 1)).into_owned();
    let coefficients = match a.clone().cholesky() {
        Some(chol) => chol.solve(&b),
        None => a.pseudo_inverse(1e-12).map_err(|e| invalid(e.to_string()))? * &b,
    };
    let rss = moments[(d, d)] - b.dot(&coefficients);
    if n <= d {
        return Err(Error::Undersampled { available: n, required: d + 1 });
    }
    Ok(Fit { coefficients: coefficients.iter().copied().collect(), variance: rss / (n - d) as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProtocolConfig {
    pub rounds: usize,
    /// Fraction of rounds revealed for parameter estimation, in `(0, 1]`.
    pub reveal_fraction: f64,
    /// Probability that each party measures `x` in a round.
    pub basis_probability: f64,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig { rounds: 1_000_000, reveal_fraction: 1.0, basis_probability: 0.5, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalAccess {
    pub players: Vec<String>,
    pub x_given_structure: EmpiricalConditioning,
    pub analytic_variance: f64,
    pub mutual_information: f64,
    pub analytic_mutual_information: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalAdversary {
    pub players: Vec<String>,
    pub honest: Vec<String>,
    pub p_given_honest: EmpiricalConditioning,
    pub analytic_variance: f64,
    pub holevo_bound: f64,
    pub analytic_holevo_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalEavesdropping {
    pub x_given_players: EmpiricalConditioning,
    pub p_given_players: EmpiricalConditioning,
    pub rate: f64,
    pub rate_standard_error: f64,
    pub analytic_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolReport {
    pub config: ProtocolConfig,
    pub k: usize,
    pub n: usize,
    pub parties: Vec<String>,
    pub revealed_rounds: usize,
    /// Round counts per basis pattern over all rounds, e.g. `"xpx"` in party order.
    pub pattern_counts: BTreeMap<String, usize>,
    /// Unrevealed rounds in which every party measured `x`.
    pub raw_key_rounds: usize,
    pub dealer_x_variance: EmpiricalConditioning,
    pub access: Vec<EmpiricalAccess>,
    pub adversarial: Vec<EmpiricalAdversary>,
    pub eavesdropping: EmpiricalEavesdropping,
    pub combined_rate: f64,
    pub combined_rate_standard_error: f64,
    pub analytic_combined_rate: f64,
    /// `combined_rate − 3·standard error > 0`.
    pub secure: bool,
}

/// Standard error of `−log₂(e √(V_x V_p))` from independent variance estimates.
fn rate_standard_error(x: &EmpiricalConditioning, p: &EmpiricalConditioning) -> f64 {
    let rx = x.standard_error / x.variance;
    let rp = p.standard_error / p.variance;
    (rx * rx + rp * rp).sqrt() / (2.0 * std::f64::consts::LN_2)
}

/// Samples the protocol, sifts, estimates on the revealed subset and sets the
/// empirical bounds beside their analytic values.
pub fn run_protocol(
    state: &GaussianState,
    layout: &PartyLayout,
    scheme: &ThresholdScheme,
    config: &ProtocolConfig,
) -> Result<ProtocolReport> {
    if !(config.reveal_fraction > 0.0 && config.reveal_fraction <= 1.0) {
        return Err(invalid(format!("reveal fraction {} outside (0, 1]", config.reveal_fraction)));
    }
    let analytic = keyrate_qss(state, layout, scheme)?;
    let batch = sample_outcomes(state, config.rounds, config.basis_probability, config.seed)?;

    let revealed_count = ((config.reveal_fraction * config.rounds as f64).ceil() as usize).min(config.rounds);
    let mut revealed = vec![false; config.rounds];
    if revealed_count == config.rounds {
        revealed.iter_mut().for_each(|r| *r = true);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(REVEAL_STREAM);
        for i in rand::seq::index::sample(&mut rng, config.rounds, revealed_count) {
            revealed[i] = true;
        }
    }

    let mut pattern_counts = BTreeMap::new();
    let mut raw_key_rounds = 0;
    for (round, &was_revealed) in revealed.iter().enumerate() {
        let pattern = batch.pattern(round);
        if !was_revealed && pattern.chars().all(|c| c == 'x') {
            raw_key_rounds += 1;
        }
        *pattern_counts.entry(pattern).or_insert(0) += 1;
    }

    let mask = Some(revealed.as_slice());
    let dealer = layout.dealer();
    let none: [&str; 0] = [];
    let dealer_x = empirical_conditional_variance_on(&batch, mask, dealer, Quadrature::X, &none)?;

    let access = analytic
        .access
        .iter()
        .map(|entry| {
            let emp = empirical_conditional_variance_on(&batch, mask, dealer, Quadrature::X, &entry.players)?;
            Ok(EmpiricalAccess {
                players: entry.players.clone(),
                mutual_information: 0.5 * (dealer_x.variance / emp.variance).log2(),
                x_given_structure: emp,
                analytic_variance: entry.x_given_structure.conditional_variance,
                analytic_mutual_information: entry.mutual_information,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let adversarial = analytic
        .adversarial
        .iter()
        .map(|entry| {
            let emp = empirical_conditional_variance_on(&batch, mask, dealer, Quadrature::P, &entry.honest)?;
            Ok(EmpiricalAdversary {
                players: entry.players.clone(),
                honest: entry.honest.clone(),
                holevo_bound: holevo_bound(dealer_x.variance, emp.variance),
                p_given_honest: emp,
                analytic_variance: entry.p_given_honest.conditional_variance,
                analytic_holevo_bound: entry.holevo_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let players = layout.players();
    let ex = empirical_conditional_variance_on(&batch, mask, dealer, Quadrature::X, players)?;
    let ep = empirical_conditional_variance_on(&batch, mask, dealer, Quadrature::P, players)?;
    let eavesdropping = EmpiricalEavesdropping {
        rate: rate_from_variances(ex.variance, ep.variance),
        rate_standard_error: rate_standard_error(&ex, &ep),
        x_given_players: ex,
        p_given_players: ep,
        analytic_rate: analytic.eavesdropping.rate,
    };

    let bind_access = argmin(access.iter().map(|a| a.mutual_information));
    let bind_adversary = argmax(adversarial.iter().map(|a| a.holevo_bound));
    let combined_rate = access[bind_access].mutual_information - adversarial[bind_adversary].holevo_bound;
    // The dealer's variance cancels between the two terms.
    debug_assert!(
        (combined_rate
            - rate_from_variances(
                access[bind_access].x_given_structure.variance,
                adversarial[bind_adversary].p_given_honest.variance
            ))
        .abs()
            < 1e-9 * (1.0 + combined_rate.abs() + gaussian_entropy(dealer_x.variance).abs())
    );
    let combined_rate_standard_error =
        rate_standard_error(&access[bind_access].x_given_structure, &adversarial[bind_adversary].p_given_honest);

    Ok(ProtocolReport {
        config: *config,
        k: scheme.k,
        n: scheme.n,
        parties: batch.parties().to_vec(),
        revealed_rounds: revealed_count,
        pattern_counts,
        raw_key_rounds,
        dealer_x_variance: dealer_x,
        access,
        adversarial,
        eavesdropping,
        secure: combined_rate - 3.0 * combined_rate_standard_error > 0.0,
        combined_rate,
        combined_rate_standard_error,
        analytic_combined_rate: analytic.combined_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{build_fig1_state, two_mode_squeezed_vacuum};
    use crate::gaussian::vacuum;
    use nalgebra::DMatrix;

    #[test]
    fn vacuum_outcomes_have_vacuum_variance() {
        let s = vacuum(2).unwrap().with_labels(["A", "B"]).unwrap();
        let batch = sample_outcomes(&s, 100_000, 0.5, 3).unwrap();
        let none: [&str; 0] = [];
        for q in [Quadrature::X, Quadrature::P] {
            let e = empirical_conditional_variance(&batch, "A", q, &none).unwrap();
            assert!((e.variance - 0.5).abs() < 3.0 * e.standard_error, "{} ± {}", e.variance, e.standard_error);
            let b = empirical_conditional_variance(&batch, "A", q, &["B"]).unwrap();
            assert!(b.gains[0].1.abs() < 3.0 * b.gain_standard_errors[0]);
        }
    }

    #[test]
    fn same_seed_same_batch() {
        let (s, _) = build_fig1_state(0.8, 0.9, 1.0).unwrap();
        let a = sample_outcomes(&s, 10_000, 0.5, 11).unwrap();
        let b = sample_outcomes(&s, 10_000, 0.5, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_outcomes(&s, 10_000, 0.5, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tmsv_cross_covariance() {
        let r = 0.3f64;
        let s = two_mode_squeezed_vacuum(r).unwrap();
        let batch = sample_outcomes(&s, 200_000, 0.5, 5).unwrap();
        let e = empirical_conditional_variance(&batch, "A", Quadrature::X, &["B"]).unwrap();
        // Regression slope times Var(x_B) recovers Cov(x_A, x_B) = sinh(2r)/2.
        let slope = (2.0 * r).tanh();
        assert!((e.gains[0].1 - slope).abs() < 3.0 * e.gain_standard_errors[0]);
    }

    #[test]
    fn unphysical_state_is_rejected() {
        let s = GaussianState::from_covariance(DMatrix::identity(2, 2) * 0.25, vec!["A".into()]).unwrap();
        assert!(matches!(sample_outcomes(&s, 10, 0.5, 0), Err(Error::Unphysical { .. })));
    }

    #[test]
    fn argument_checks() {
        let s = vacuum(1).unwrap();
        assert!(sample_outcomes(&s, 0, 0.5, 0).is_err());
        assert!(sample_outcomes(&s, 10, 0.0, 0).is_err());
        assert!(sample_outcomes(&s, 10, 1.0, 0).is_err());
    }

    #[test]
    fn undersampled_carries_count() {
        let s = vacuum(3).unwrap().with_labels(["A", "B", "C"]).unwrap();
        let batch = sample_outcomes(&s, 400, 0.5, 1).unwrap();
        match empirical_conditional_variance(&batch, "A", Quadrature::X, &["B", "C"]) {
            Err(Error::Undersampled { available, required }) => {
                assert!(available < 100);
                assert_eq!(required, 100);
            }
            other => panic!("expected undersampled error, got {other:?}"),
        }
    }

    #[test]
    fn reveal_fraction_bounds() {
        let (s, layout) = build_fig1_state(1.0, 1.0, 1.0).unwrap();
        let scheme = ThresholdScheme::new(2, 2).unwrap();
        for f in [0.0, 1.5] {
            let cfg = ProtocolConfig { rounds: 1000, reveal_fraction: f, ..Default::default() };
            assert!(run_protocol(&s, &layout, &scheme, &cfg).is_err());
        }
    }

    #[test]
    fn partial_reveal_leaves_raw_key() {
        let (s, layout) = build_fig1_state(1.0, 1.0, 1.0).unwrap();
        let scheme = ThresholdScheme::new(2, 2).unwrap();
        let cfg = ProtocolConfig { rounds: 20_000, reveal_fraction: 0.5, basis_probability: 0.5, seed: 9 };
        let report = run_protocol(&s, &layout, &scheme, &cfg).unwrap();
        assert_eq!(report.revealed_rounds, 10_000);
        assert_eq!(report.pattern_counts.values().sum::<usize>(), 20_000);
        let all_x = report.pattern_counts["xxx"];
        assert!(report.raw_key_rounds > 0 && report.raw_key_rounds < all_x);
        assert!(report.x_given_access_sifted() <= 10_000);
    }

    impl ProtocolReport {
        fn x_given_access_sifted(&self) -> usize {
            self.access[0].x_given_structure.sifted_rounds
        }
    }
}
