//! Secret-key-rate bounds for the dealer's `x` quadrature.
//!
//! Every bound has the same shape: the mutual information between `X_A` and a
//! players' joint variable `X̄`, minus an adversary's Holevo information. The
//! Holevo term is bounded through the entropic uncertainty relation
//! `S(X_A|E·S) + S(P_A|Sᶜ) ≥ log₂ 2π`, where `S` are the players counted as
//! eavesdroppers and `Sᶜ` the honest rest, and the Gaussian entropy bound
//! `H(P_A|P̄) ≤ log₂ √(2πe V_{P_A|P̄})`. Together this gives
//! `K ≥ −log₂(e √(V_{X_A|X̄} V_{P_A|P̄_{Sᶜ}}))`.

use std::f64::consts::{E, PI};

use itertools::Itertools;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::PartyLayout;
use crate::error::{invalid, Result};
use crate::estimation::{conditional_variance_optimal, gaussian_mutual_information, ConditioningResult};
use crate::gaussian::{GaussianState, Quadrature};

/// Largest number of players accepted by the structure enumeration.
pub const MAX_PLAYERS: usize = 24;

/// A key is possible against eavesdropping alone iff `V_{X_A|X̄} V_{P_A|P̄} < e⁻²`.
pub const EAVESDROPPING_THRESHOLD: f64 = 0.1353352832366127; // e^-2

/// `log₂ √(2πe V)`, the differential entropy in bits of a Gaussian with variance `V`.
pub fn gaussian_entropy(variance: f64) -> f64 {
    0.5 * (2.0 * PI * E * variance).log2()
}

/// `−log₂(e √(V_x V_p))`.
pub fn rate_from_variances(vx: f64, vp: f64) -> f64 {
    -(E * (vx * vp).sqrt()).log2()
}

/// Upper bound on the Holevo information of eavesdroppers whose honest
/// complement predicts `P_A` with inference variance `vp_given_honest`.
pub fn holevo_bound(vx_unconditional: f64, vp_given_honest: f64) -> f64 {
    gaussian_entropy(vx_unconditional) - (2.0 * PI).log2() + gaussian_entropy(vp_given_honest)
}

/// A `(k, n)`-threshold scheme: any `k` players may decode, no `k − 1` may learn anything.
/// Player indices are 1-based and subsets are listed lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ThresholdScheme {
    pub k: usize,
    pub n: usize,
    pub access_structures: Vec<Vec<usize>>,
    pub adversarial_structures: Vec<Vec<usize>>,
}

impl ThresholdScheme {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        enumerate_structures(n, k)
    }
}

pub fn enumerate_structures(n: usize, k: usize) -> Result<ThresholdScheme> {
    if k == 0 {
        return Err(invalid("threshold k must be at least 1"));
    }
    if k > n {
        return Err(invalid(format!("threshold k = {k} exceeds the number of players n = {n}")));
    }
    if n > MAX_PLAYERS {
        return Err(invalid(format!(
            "n = {n} exceeds the cap of {MAX_PLAYERS} players: C(n, k) structures would be enumerated"
        )));
    }
    Ok(ThresholdScheme {
        k,
        n,
        access_structures: (1..=n).combinations(k).collect(),
        adversarial_structures: (1..=n).combinations(k - 1).collect(),
    })
}

/// Binomial coefficient, used to cross-check enumeration counts.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// The plain eavesdropping bound: all players collaborate, only Eve is hostile.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EavesdroppingBound {
    pub x_given_players: ConditioningResult,
    pub p_given_players: ConditioningResult,
    /// `E_{A|players} = V_{X_A|X̄} V_{P_A|P̄}`.
    pub product: f64,
    pub threshold: f64,
    pub rate: f64,
}

/// Key rate when the players in `dishonest` join the eavesdropper.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DishonestBound {
    pub dishonest: Vec<String>,
    pub honest: Vec<String>,
    pub x_given_players: ConditioningResult,
    pub p_given_honest: ConditioningResult,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccessEntry {
    pub players: Vec<String>,
    pub x_given_structure: ConditioningResult,
    pub mutual_information: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdversaryEntry {
    pub players: Vec<String>,
    pub honest: Vec<String>,
    pub p_given_honest: ConditioningResult,
    pub holevo_bound: f64,
}

/// Everything that enters the threshold-scheme key rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeyRateReport {
    pub k: usize,
    pub n: usize,
    pub reconciliation_efficiency: f64,
    pub dealer_x_variance: f64,
    pub access: Vec<AccessEntry>,
    pub adversarial: Vec<AdversaryEntry>,
    pub eavesdropping: EavesdroppingBound,
    /// Single-player dishonesty bounds, one per player, when `n ≥ 2`.
    pub dishonest: Vec<DishonestBound>,
    /// Index into `access` of the least correlated structure.
    pub binding_access: usize,
    /// Index into `adversarial` of the best-informed adversary.
    pub binding_adversary: usize,
    pub combined_rate: f64,
    pub secure: bool,
}

impl KeyRateReport {
    pub fn min_mutual_information(&self) -> f64 {
        self.access[self.binding_access].mutual_information
    }

    pub fn max_holevo_bound(&self) -> f64 {
        self.adversarial[self.binding_adversary].holevo_bound
    }
}

fn dealer_x(layout: &PartyLayout) -> (&str, Quadrature) {
    (layout.dealer(), Quadrature::X)
}

fn dealer_p(layout: &PartyLayout) -> (&str, Quadrature) {
    (layout.dealer(), Quadrature::P)
}

/// Key rate secure against an outside eavesdropper when all players pool their data.
pub fn keyrate_eavesdropping(state: &GaussianState, layout: &PartyLayout) -> Result<EavesdroppingBound> {
    keyrate_eavesdropping_for(state, layout, layout.players())
}

/// Eavesdropping-only rate with the key decoded by `key_players` while the
/// momentum reference still uses every player.
pub fn keyrate_eavesdropping_for<S: AsRef<str>>(
    state: &GaussianState,
    layout: &PartyLayout,
    key_players: &[S],
) -> Result<EavesdroppingBound> {
    layout.check(state)?;
    let x = conditional_variance_optimal(state, dealer_x(layout), key_players, Quadrature::X)?;
    let p = conditional_variance_optimal(state, dealer_p(layout), layout.players(), Quadrature::P)?;
    let product = x.conditional_variance * p.conditional_variance;
    Ok(EavesdroppingBound {
        rate: rate_from_variances(x.conditional_variance, p.conditional_variance),
        x_given_players: x,
        p_given_players: p,
        product,
        threshold: EAVESDROPPING_THRESHOLD,
    })
}

/// Key rate secure against `dishonest` players colluding with the eavesdropper:
/// the momentum reference comes from the honest players only.
pub fn keyrate_dishonest<S: AsRef<str>>(
    state: &GaussianState,
    layout: &PartyLayout,
    dishonest: &[S],
) -> Result<DishonestBound> {
    layout.check(state)?;
    let dishonest: Vec<String> = dishonest.iter().map(|s| s.as_ref().to_string()).collect();
    if dishonest.is_empty() {
        return Err(invalid("dishonest set is empty; use keyrate_eavesdropping"));
    }
    for d in &dishonest {
        if !layout.players().contains(d) {
            return Err(invalid(format!("`{d}` is not a player")));
        }
    }
    let honest: Vec<String> = layout.players().iter().filter(|p| !dishonest.contains(p)).cloned().collect();
    if honest.is_empty() {
        return Err(invalid("every player is dishonest: no honest party is left to anchor the bound"));
    }
    let x = conditional_variance_optimal(state, dealer_x(layout), layout.players(), Quadrature::X)?;
    let p = conditional_variance_optimal(state, dealer_p(layout), &honest, Quadrature::P)?;
    Ok(DishonestBound {
        rate: rate_from_variances(x.conditional_variance, p.conditional_variance),
        dishonest,
        honest,
        x_given_players: x,
        p_given_honest: p,
    })
}

pub fn keyrate_qss(state: &GaussianState, layout: &PartyLayout, scheme: &ThresholdScheme) -> Result<KeyRateReport> {
    keyrate_qss_with_efficiency(state, layout, scheme, 1.0)
}

/// `K = β·min_i I(X_A : X̄_i) − max_S χ(X_A : E S)` over the scheme's access
/// structures `i` and adversarial structures `S`, with reconciliation efficiency `β`.
pub fn keyrate_qss_with_efficiency(
    state: &GaussianState,
    layout: &PartyLayout,
    scheme: &ThresholdScheme,
    reconciliation_efficiency: f64,
) -> Result<KeyRateReport> {
    layout.check(state)?;
    if scheme.n != layout.players().len() {
        return Err(invalid(format!(
            "scheme is for n = {} players but the layout has {}",
            scheme.n,
            layout.players().len()
        )));
    }
    if scheme.n == 1 {
        return Err(invalid("a (1,1) scheme shares nothing"));
    }
    if !(reconciliation_efficiency > 0.0 && reconciliation_efficiency <= 1.0) {
        return Err(invalid(format!("reconciliation efficiency {reconciliation_efficiency} outside (0, 1]")));
    }
    let players = layout.players();
    let pick = |subset: &[usize]| -> Vec<String> { subset.iter().map(|&i| players[i - 1].clone()).collect() };
    let vx = state.variance(layout.dealer(), Quadrature::X)?;

    let access = scheme
        .access_structures
        .par_iter()
        .map(|subset| {
            let members = pick(subset);
            let x = conditional_variance_optimal(state, dealer_x(layout), &members, Quadrature::X)?;
            let mi = gaussian_mutual_information(x.unconditional_variance, x.conditional_variance)?;
            Ok(AccessEntry { players: members, x_given_structure: x, mutual_information: mi })
        })
        .collect::<Result<Vec<_>>>()?;

    let adversarial = scheme
        .adversarial_structures
        .par_iter()
        .map(|subset| {
            let members = pick(subset);
            let honest: Vec<String> = players.iter().filter(|p| !members.contains(p)).cloned().collect();
            let p = conditional_variance_optimal(state, dealer_p(layout), &honest, Quadrature::P)?;
            Ok(AdversaryEntry {
                holevo_bound: holevo_bound(vx, p.conditional_variance),
                players: members,
                honest,
                p_given_honest: p,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let binding_access = argmin(access.iter().map(|a| a.mutual_information));
    let binding_adversary = argmax(adversarial.iter().map(|a| a.holevo_bound));
    let combined_rate = reconciliation_efficiency * access[binding_access].mutual_information
        - adversarial[binding_adversary].holevo_bound;

    let dishonest = players
        .iter()
        .map(|p| keyrate_dishonest(state, layout, std::slice::from_ref(p)))
        .collect::<Result<Vec<_>>>()?;

    Ok(KeyRateReport {
        k: scheme.k,
        n: scheme.n,
        reconciliation_efficiency,
        dealer_x_variance: vx,
        eavesdropping: keyrate_eavesdropping(state, layout)?,
        access,
        adversarial,
        dishonest,
        binding_access,
        binding_adversary,
        combined_rate,
        secure: combined_rate > 0.0,
    })
}

/// First index of the smallest value; ties resolve to the earliest structure.
pub(crate) fn argmin(values: impl Iterator<Item = f64>) -> usize {
    values.enumerate().fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best }).0
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    values.enumerate().fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best }).0
}
