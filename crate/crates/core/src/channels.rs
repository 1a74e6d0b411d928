//! Lossy channels and the cluster-state resources handed out by the dealer.

use std::collections::{HashSet, VecDeque};
use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{check_transmissivity, squeezed_vacuum, vacuum, GaussianState, Quadrature};

/// Dealer mode label used by every builder in this module.
pub const DEALER: &str = "A";

/// Phase-insensitive attenuating channel with optional added noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub transmissivity: f64,
    /// Symmetric added variance in vacuum units; 0 is quantum-limited loss.
    pub excess_noise: f64,
}

impl ChannelSpec {
    pub fn new(transmissivity: f64, excess_noise: f64) -> Result<Self> {
        check_transmissivity(transmissivity)?;
        if excess_noise.is_nan() || excess_noise < 0.0 {
            return Err(invalid(format!("excess noise must be ≥ 0, got {excess_noise}")));
        }
        Ok(ChannelSpec { transmissivity, excess_noise })
    }

    pub fn pure_loss(transmissivity: f64) -> Result<Self> {
        Self::new(transmissivity, 0.0)
    }

    pub fn identity() -> Self {
        ChannelSpec { transmissivity: 1.0, excess_noise: 0.0 }
    }
}

/// Who holds which mode: the trusted dealer keeps one, players get the rest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyLayout {
    dealer: String,
    players: Vec<String>,
}

impl PartyLayout {
    pub fn new(dealer: impl Into<String>, players: Vec<String>) -> Result<Self> {
        let dealer = dealer.into();
        if players.is_empty() {
            return Err(invalid("layout needs at least one player"));
        }
        let mut seen = HashSet::new();
        for p in &players {
            if *p == dealer {
                return Err(invalid(format!("dealer mode `{dealer}` cannot also be a player")));
            }
            if !seen.insert(p.as_str()) {
                return Err(invalid(format!("player mode `{p}` listed twice")));
            }
        }
        Ok(PartyLayout { dealer, players })
    }

    pub fn dealer(&self) -> &str {
        &self.dealer
    }

    pub fn players(&self) -> &[String] {
        &self.players
    }

    /// Errors unless every mode in the layout exists in `state`.
    pub fn check(&self, state: &GaussianState) -> Result<()> {
        state.mode_index(&self.dealer)?;
        for p in &self.players {
            state.mode_index(p)?;
        }
        Ok(())
    }
}

/// Applies a lossy channel to `mode` by dilation: mix with a vacuum ancilla on a
/// beam splitter of transmissivity `T`, add the excess noise, trace out the ancilla.
pub fn pure_loss(state: &GaussianState, mode: &str, spec: ChannelSpec) -> Result<GaussianState> {
    let spec = ChannelSpec::new(spec.transmissivity, spec.excess_noise)?;
    state.mode_index(mode)?;
    let mut ancilla = String::from("env");
    while state.labels().contains(&ancilla) {
        ancilla.push('\'');
    }
    let env = vacuum(1)?.with_labels([ancilla.as_str()])?;
    let dilated = state.tensor(&env)?.apply_beamsplitter(mode, &ancilla, spec.transmissivity)?;
    let dilated = dilated.add_noise(mode, spec.excess_noise)?;
    dilated.partial_trace(state.labels())
}

/// Knobs for the cluster resources. The defaults are p-squeezed inputs,
/// unit CZ weights and the Fourier player frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceConfig {
    pub squeezed: Quadrature,
    pub cz_weight: f64,
    pub frame: PlayerFrame,
}

impl Default for ResourceConfig {
    fn default() -> Self {
        ResourceConfig { squeezed: Quadrature::P, cz_weight: 1.0, frame: PlayerFrame::Fourier }
    }
}

/// Which physical quadratures a player's `x`/`p` measurement settings read out.
///
/// With a CZ cluster the dealer's `x_A` is pinned by the nullifier of each
/// neighbour, `p_N − x_A − Σ x_M`, so a neighbour must read its momentum to help
/// with the key quadrature. `Fourier` applies a quarter-turn rotation to every
/// player at odd graph distance from the dealer, turning those nullifiers into
/// same-label correlations. Players are untrusted black boxes, so this only
/// renames their settings. `Physical` leaves every mode untouched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlayerFrame {
    Physical,
    Fourier,
}

impl FromStr for PlayerFrame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "physical" => Ok(PlayerFrame::Physical),
            "fourier" => Ok(PlayerFrame::Fourier),
            other => Err(invalid(format!("unknown player frame `{other}` (physical|fourier)"))),
        }
    }
}

/// Graph on node 0 (dealer) and nodes 1..=n (players).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// A – B1 – B2 – … – Bn.
    Chain,
    /// Every player attached to the dealer.
    Star,
    Edges(Vec<(usize, usize)>),
}

impl Topology {
    pub fn edges(&self, n: usize) -> Vec<(usize, usize)> {
        match self {
            Topology::Chain => (0..n).map(|i| (i, i + 1)).collect(),
            Topology::Star => (1..=n).map(|i| (0, i)).collect(),
            Topology::Edges(e) => e.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Topology::Chain => "chain",
            Topology::Star => "star",
            Topology::Edges(_) => "custom",
        }
    }
}

impl FromStr for Topology {
    type Err = Error;

    /// `chain`, `star`, or an edge list such as `0-1,1-2,0-2`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chain" | "linear" => Ok(Topology::Chain),
            "star" => Ok(Topology::Star),
            other => {
                let mut edges = Vec::new();
                for part in other.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    let (a, b) = part.split_once('-').ok_or_else(|| {
                        invalid(format!("unknown topology `{s}` (chain|star|edge list like 0-1,1-2)"))
                    })?;
                    let parse = |v: &str| {
                        v.trim().parse::<usize>().map_err(|_| invalid(format!("bad node index `{v}` in topology")))
                    };
                    edges.push((parse(a)?, parse(b)?));
                }
                if edges.is_empty() {
                    return Err(invalid("empty topology"));
                }
                Ok(Topology::Edges(edges))
            }
        }
    }
}

fn player_label(i: usize) -> String {
    format!("B{i}")
}

/// BFS distances from the dealer; errors on malformed or disconnected graphs.
fn dealer_distances(nodes: usize, edges: &[(usize, usize)]) -> Result<Vec<usize>> {
    let mut adjacency = vec![Vec::new(); nodes];
    let mut seen = HashSet::new();
    for &(a, b) in edges {
        if a >= nodes || b >= nodes {
            return Err(invalid(format!("edge {a}-{b} references a node outside 0..{}", nodes - 1)));
        }
        if a == b {
            return Err(invalid(format!("self-loop on node {a}")));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(invalid(format!("duplicate edge {a}-{b}")));
        }
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut dist = vec![usize::MAX; nodes];
    dist[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if let Some(lost) = dist.iter().position(|&d| d == usize::MAX) {
        return Err(invalid(format!(
            "topology is disconnected: node {lost} cannot be reached from the dealer, its key rate would be trivially non-positive"
        )));
    }
    Ok(dist)
}

/// Squeezed inputs, CZ along `edges` in the given order, per-mode channels, then the player frame.
fn cluster(
    labels: &[String],
    r: f64,
    edges: &[(usize, usize)],
    channels: &[ChannelSpec],
    config: &ResourceConfig,
) -> Result<GaussianState> {
    let distances = dealer_distances(labels.len(), edges)?;
    let mut state: Option<GaussianState> = None;
    for label in labels {
        let mode = squeezed_vacuum(r, config.squeezed)?.with_labels([label.as_str()])?;
        state = Some(match state {
            None => mode,
            Some(s) => s.tensor(&mode)?,
        });
    }
    let mut state = state.ok_or_else(|| invalid("no modes"))?;
    for &(a, b) in edges {
        state = state.apply_cz(&labels[a], &labels[b], config.cz_weight)?;
    }
    for (label, spec) in labels.iter().skip(1).zip(channels) {
        state = pure_loss(&state, label, *spec)?;
    }
    if config.frame == PlayerFrame::Fourier {
        for (label, d) in labels.iter().zip(&distances) {
            if d % 2 == 1 {
                state = state.apply_rotation(label, FRAC_PI_2)?;
            }
        }
    }
    Ok(state)
}

/// Three-mode linear cluster A–B–C with pure loss of transmissivity `T` on the
/// two player modes. Dealer `A`, players `[B, C]`.
pub fn build_fig1_state(r: f64, transmissivity: f64, cz_weight: f64) -> Result<(GaussianState, PartyLayout)> {
    build_fig1_state_with(r, transmissivity, &ResourceConfig { cz_weight, ..ResourceConfig::default() })
}

pub fn build_fig1_state_with(
    r: f64,
    transmissivity: f64,
    config: &ResourceConfig,
) -> Result<(GaussianState, PartyLayout)> {
    let labels: Vec<String> = ["A", "B", "C"].map(String::from).to_vec();
    let loss = ChannelSpec::pure_loss(transmissivity)?;
    let state = cluster(&labels, r, &[(0, 1), (1, 2)], &[loss, loss], config)?;
    let layout = PartyLayout::new(DEALER, labels[1..].to_vec())?;
    Ok((state, layout))
}

/// `n + 1`-mode cluster on `topology` with per-player channels. Modes are
/// labelled `A, B1, …, Bn`; topology node `i ≥ 1` is player `Bi`.
pub fn build_kn_state(
    n: usize,
    r: f64,
    specs: &[ChannelSpec],
    topology: &Topology,
    config: &ResourceConfig,
) -> Result<(GaussianState, PartyLayout)> {
    if n < 2 {
        return Err(invalid(format!("need at least two players, got {n}")));
    }
    if specs.len() != n {
        return Err(invalid(format!("expected {n} channel specs, got {}", specs.len())));
    }
    let players: Vec<String> = (1..=n).map(player_label).collect();
    let mut labels = vec![DEALER.to_string()];
    labels.extend(players.iter().cloned());
    let state = cluster(&labels, r, &topology.edges(n), specs, config)?;
    Ok((state, PartyLayout::new(DEALER, players)?))
}

/// Two-mode squeezed vacuum on modes `A`, `B`: an x-squeezed and a p-squeezed
/// input on a balanced beam splitter. Each mode has variance `cosh(2r)/2`,
/// `Cov(x_A, x_B) = sinh(2r)/2` and `Cov(p_A, p_B) = −sinh(2r)/2`.
pub fn two_mode_squeezed_vacuum(r: f64) -> Result<GaussianState> {
    let a = squeezed_vacuum(r, Quadrature::X)?.with_labels([DEALER])?;
    let b = squeezed_vacuum(r, Quadrature::P)?.with_labels(["B"])?;
    a.tensor(&b)?.apply_beamsplitter(DEALER, "B", 0.5)
}
