//! The transition system of the swarm Markov chain.
//!
//! A population state counts peers per label. Events are arrivals,
//! departures of seeds, single-chunk downloads, and one-for-one chunk
//! swaps between peers with incomparable labels. Each event class is a
//! jump vector ζ with a rate polynomial Q_ζ of degree at most two;
//! together they define the generator of the chain and, summed as
//! Σ_ζ ζ·Q_ζ, its drift.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{self, mask, ChunkLabel};

/// Obligatory cap for swap-enabled jump sets: the number of swap tuples
/// grows combinatorially well before the 2^n state vectors get large.
pub const JUMP_SET_MAX_SWAP_CHUNKS: u8 = 10;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Rates of the chain: arrivals α^A (peers/time), download rate β
/// (1/(peer·time)), swap rate γ (1/(peer·time)), seed departure rate δ
/// (1/time).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    n: u8,
    alpha: Vec<f64>,
    beta: f64,
    gamma: f64,
    delta: f64,
}

impl ModelParams {
    pub fn new(n: u8, alpha: Vec<f64>, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        labels::check_chunk_count(n)?;
        let len = labels::num_labels(n);
        if alpha.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: alpha.len() });
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParams(format!("gamma must be nonnegative, got {gamma}")));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParams(format!("delta must be nonnegative, got {delta}")));
        }
        if let Some((i, &a)) = alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !(**a >= 0.0) || !a.is_finite())
        {
            return Err(Error::InvalidParams(format!("alpha[{i}] must be nonnegative, got {a}")));
        }
        Ok(Self { n, alpha, beta, gamma, delta })
    }

    /// A closed system (no arrivals).
    pub fn closed(n: u8, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let len = labels::num_labels(n);
        Self::new(n, vec![0.0; len], beta, gamma, delta)
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn num_labels(&self) -> usize {
        labels::num_labels(self.n)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_of(&self, label: &ChunkLabel) -> f64 {
        self.alpha[label.index()]
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// |α|, the total arrival rate.
    pub fn total_arrival_rate(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Open: some arrivals and positive departure rate.
    pub fn is_open(&self) -> bool {
        self.alpha.iter().any(|&a| a > 0.0) && self.delta > 0.0
    }

    /// Closed: no arrivals at all.
    pub fn is_closed(&self) -> bool {
        self.alpha.iter().all(|&a| a == 0.0)
    }

    /// Conservative: closed and no departures; |X_t| is then constant.
    pub fn is_conservative(&self) -> bool {
        self.is_closed() && self.delta == 0.0
    }

    /// Dissipative: closed with departures; |X_t| is then non-increasing.
    pub fn is_dissipative(&self) -> bool {
        self.is_closed() && self.delta > 0.0
    }

    /// The scaled copy used by the fluid-limit sequence: arrivals N·α,
    /// interaction rates β/N and γ/N, departures unchanged.
    pub fn scaled(&self, n_scale: f64) -> Result<Self> {
        Self::new(
            self.n,
            self.alpha.iter().map(|a| a * n_scale).collect(),
            self.beta / n_scale,
            self.gamma / n_scale,
            self.delta,
        )
    }

    /// Parse from the TOML config form; unspecified alpha entries are 0:
    ///
    /// ```toml
    /// n = 2
    /// beta = 3.0
    /// gamma = 0.5
    /// delta = 4.0
    /// [alpha]
    /// "{}" = 5.0
    /// ```
    pub fn from_config_str(s: &str) -> Result<Self> {
        let cfg: ModelConfig =
            toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.try_into()
    }

    pub fn to_config_string(&self) -> String {
        let cfg = ModelConfig::from(self);
        toml::to_string(&cfg).expect("params config always serializes")
    }
}

/// Serde mirror of `ModelParams` for config files.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: u8,
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub alpha: BTreeMap<String, f64>,
}

impl TryFrom<ModelConfig> for ModelParams {
    type Error = Error;

    fn try_from(cfg: ModelConfig) -> Result<Self> {
        labels::check_chunk_count(cfg.n)?;
        let mut alpha = vec![0.0; labels::num_labels(cfg.n)];
        for (key, rate) in &cfg.alpha {
            let idx = labels::parse_label_indices(key)?;
            let label = ChunkLabel::from_indices(cfg.n, &idx)?;
            alpha[label.index()] = *rate;
        }
        ModelParams::new(cfg.n, alpha, cfg.beta, cfg.gamma, cfg.delta)
    }
}

impl From<&ModelParams> for ModelConfig {
    fn from(p: &ModelParams) -> Self {
        let mut alpha = BTreeMap::new();
        for l in labels::enumerate_labels(p.n).expect("valid n") {
            let a = p.alpha[l.index()];
            if a > 0.0 {
                alpha.insert(l.to_string(), a);
            }
        }
        ModelConfig { n: p.n, beta: p.beta, gamma: p.gamma, delta: p.delta, alpha }
    }
}

// ---------------------------------------------------------------------------
// Population state
// ---------------------------------------------------------------------------

/// Integer peer counts per label, indexed by label mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PopulationState {
    n: u8,
    counts: Vec<u64>,
}

impl PopulationState {
    pub fn new(n: u8, counts: Vec<u64>) -> Result<Self> {
        labels::check_chunk_count(n)?;
        let len = labels::num_labels(n);
        if counts.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: counts.len() });
        }
        Ok(Self { n, counts })
    }

    pub fn zeros(n: u8) -> Result<Self> {
        Self::new(n, vec![0; labels::num_labels(n)])
    }

    /// All `count` peers concentrated on a single label.
    pub fn concentrated(label: &ChunkLabel, count: u64) -> Self {
        let mut counts = vec![0; labels::num_labels(label.n())];
        counts[label.index()] = count;
        Self { n: label.n(), counts }
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, label: &ChunkLabel) -> u64 {
        self.counts[label.index()]
    }

    /// |x| = Σ_A x^A.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Applies a jump in place. Panics if a count would go negative, which
    /// the rate polynomials rule out for events drawn at positive rate.
    pub(crate) fn apply(&mut self, delta: &[(usize, i32)]) {
        for &(idx, d) in delta {
            self.counts[idx] = self.counts[idx]
                .checked_add_signed(i64::from(d))
                .expect("jump would make a peer count negative");
        }
    }
}

impl fmt::Display for PopulationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

// ---------------------------------------------------------------------------
// Rate polynomials
// ---------------------------------------------------------------------------

/// One monomial of a rate polynomial (degree at most two, nonnegative
/// coefficients).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateTerm {
    Constant(f64),
    Linear { coeff: f64, var: usize },
    Bilinear { coeff: f64, a: usize, b: usize },
}

/// Sparse polynomial Q_ζ; evaluation cost is proportional to the number of
/// physical interactions that produce the jump.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatePolynomial {
    terms: Vec<RateTerm>,
}

impl RatePolynomial {
    pub fn new(terms: Vec<RateTerm>) -> Self {
        Self { terms }
    }

    pub fn terms(&self) -> &[RateTerm] {
        &self.terms
    }

    pub fn eval_counts(&self, x: &[u64]) -> f64 {
        self.terms
            .iter()
            .map(|t| match *t {
                RateTerm::Constant(c) => c,
                RateTerm::Linear { coeff, var } => coeff * x[var] as f64,
                RateTerm::Bilinear { coeff, a, b } => coeff * x[a] as f64 * x[b] as f64,
            })
            .sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| match *t {
                RateTerm::Constant(c) => c,
                RateTerm::Linear { coeff, var } => coeff * x[var],
                RateTerm::Bilinear { coeff, a, b } => coeff * x[a] * x[b],
            })
            .sum()
    }

    fn merge_from(&mut self, other: &RatePolynomial) {
        self.terms.extend_from_slice(&other.terms);
    }
}

/// Maximum of a nonnegative-coefficient quadratic over the simplex
/// {x ≥ 0, |x| ≤ bound}.
///
/// Exact for the shapes that occur as rate polynomials: constants, a
/// single linear bundle (vertex maximum), and bilinear terms sharing one
/// common factor variable (edge-midpoint maximum). Anything else falls
/// back to the sum of per-monomial maxima, which is a valid upper bound.
pub fn simplex_max_upper(poly: &RatePolynomial, bound: f64) -> f64 {
    let mut constant = 0.0;
    let mut linear: BTreeMap<usize, f64> = BTreeMap::new();
    let mut bilinear: Vec<(usize, usize, f64)> = Vec::new();
    for t in poly.terms() {
        match *t {
            RateTerm::Constant(c) => constant += c,
            RateTerm::Linear { coeff, var } => *linear.entry(var).or_insert(0.0) += coeff,
            RateTerm::Bilinear { coeff, a, b } => bilinear.push((a, b, coeff)),
        }
    }
    let lin_max = linear.values().fold(0.0f64, |m, &c| m.max(c)) * bound;

    if bilinear.is_empty() {
        return constant + lin_max;
    }
    if constant == 0.0 && linear.is_empty() {
        // Common-factor case: every monomial c·x^a·x^w with one shared a.
        let shared = bilinear[0].0;
        let all_share = bilinear.iter().all(|&(a, b, _)| a == shared || b == shared);
        let distinct = bilinear.iter().all(|&(a, b, _)| a != b);
        if all_share && distinct {
            let mut per_partner: BTreeMap<usize, f64> = BTreeMap::new();
            for &(a, b, c) in &bilinear {
                let w = if a == shared { b } else { a };
                *per_partner.entry(w).or_insert(0.0) += c;
            }
            let cmax = per_partner.values().fold(0.0f64, |m, &c| m.max(c));
            return cmax * bound * bound / 4.0;
        }
    }
    // Conservative fallback: per-monomial maxima summed.
    let bi_sum: f64 = bilinear
        .iter()
        .map(|&(a, b, c)| if a == b { c * bound * bound } else { c * bound * bound / 4.0 })
        .sum();
    constant + lin_max + bi_sum
}

// ---------------------------------------------------------------------------
// Jump vectors
// ---------------------------------------------------------------------------

/// What kind of event a jump vector encodes. Swap classes keep their
/// generating tuple (A, B) → (A', B'); distinct tuples never share a ζ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JumpKind {
    Arrival { label: ChunkLabel },
    Departure,
    Download { from: ChunkLabel, to: ChunkLabel },
    Swap { a: ChunkLabel, a_to: ChunkLabel, b: ChunkLabel, b_to: ChunkLabel },
}

/// An element ζ of the jump set with its rate polynomial Q_ζ. The state
/// change is stored sparsely as (label index, increment) pairs.
#[derive(Clone, Debug)]
pub struct JumpVector {
    pub kind: JumpKind,
    delta: Vec<(usize, i32)>,
    rate: RatePolynomial,
}

impl JumpVector {
    pub fn delta(&self) -> &[(usize, i32)] {
        &self.delta
    }

    pub fn rate(&self) -> &RatePolynomial {
        &self.rate
    }

    /// Dense copy of ζ.
    pub fn delta_dense(&self, num_labels: usize) -> Vec<i32> {
        let mut d = vec![0; num_labels];
        for &(idx, v) in &self.delta {
            d[idx] = v;
        }
        d
    }

    /// Net population change of the event: +1 arrival, −1 departure,
    /// 0 download/swap.
    pub fn net_change(&self) -> i32 {
        self.delta.iter().map(|&(_, d)| d).sum()
    }
}

/// Per-jump bounds over {x ≥ 0, |x| ≤ B}: the rate maximum M_ζ and a
/// Lipschitz constant L_ζ for Q_ζ with respect to the L1 norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateBounds {
    pub max_rate: f64,
    pub lipschitz: f64,
}

// ---------------------------------------------------------------------------
// Jump set
// ---------------------------------------------------------------------------

/// The full set 𝒩 of jump vectors for one parameterisation, built once
/// and shared (immutably) by every simulator and analysis pass.
#[derive(Clone, Debug)]
pub struct JumpSet {
    n: u8,
    jumps: Vec<JumpVector>,
}

impl JumpSet {
    /// Builds 𝒩. Refuses swap-enabled models with n > 10; see
    /// [`JumpSet::build_unrestricted`].
    pub fn build(params: &ModelParams) -> Result<Self> {
        if params.gamma() > 0.0 && params.n() > JUMP_SET_MAX_SWAP_CHUNKS {
            return Err(Error::JumpSetTooLarge(params.n()));
        }
        Ok(Self::build_unrestricted(params))
    }

    /// Builds 𝒩 without the swap size guard.
    pub fn build_unrestricted(params: &ModelParams) -> Self {
        let n = params.n();
        let num = labels::num_labels(n);
        let full = labels::full_mask(n);
        let label = |m: u32| ChunkLabel::from_mask(n, m).expect("mask in range");
        let mut jumps = Vec::new();

        // Arrivals: ζ = +e_A at constant rate α^A.
        for m in 0..num as u32 {
            let a = params.alpha()[m as usize];
            if a > 0.0 {
                jumps.push(JumpVector {
                    kind: JumpKind::Arrival { label: label(m) },
                    delta: vec![(m as usize, 1)],
                    rate: RatePolynomial::new(vec![RateTerm::Constant(a)]),
                });
            }
        }

        // Departures: ζ = −e_F at rate δ x^F.
        if params.delta() > 0.0 {
            jumps.push(JumpVector {
                kind: JumpKind::Departure,
                delta: vec![(full as usize, -1)],
                rate: RatePolynomial::new(vec![RateTerm::Linear {
                    coeff: params.delta(),
                    var: full as usize,
                }]),
            });
        }

        // Downloads: one ζ = −e_A + e_{A'} per covering pair, with
        // Q = β x^A Σ_{C ⊇ A'} x^C / |C − A| (the sum over all peers the
        // A-peer could have copied the chunk from).
        let beta = params.beta();
        for a in 0..num as u32 {
            for bit in mask::bits(full & !a) {
                let a_prime = a | bit;
                let mut terms = Vec::new();
                for sup in mask::submasks(full & !a_prime) {
                    let c = a_prime | sup;
                    terms.push(RateTerm::Bilinear {
                        coeff: beta / f64::from(mask::diff_size(c, a)),
                        a: a as usize,
                        b: c as usize,
                    });
                }
                jumps.push(JumpVector {
                    kind: JumpKind::Download { from: label(a), to: label(a_prime) },
                    delta: sparse_delta(&[(a as usize, -1), (a_prime as usize, 1)]),
                    rate: RatePolynomial::new(terms),
                });
            }
        }

        // Swaps: enumerate ordered tuples (A, B, A', B') with A < B in mask
        // order, which picks exactly one representative of each physical
        // swap; equal-ζ entries are then merged by rate addition.
        if params.gamma() > 0.0 {
            let gamma = params.gamma();
            let mut merged: BTreeMap<Vec<(usize, i32)>, JumpVector> = BTreeMap::new();
            for a in 0..num as u32 {
                for b in (a + 1)..num as u32 {
                    if mask::relates(a, b) {
                        continue;
                    }
                    let a_minus_b = a & !b;
                    let b_minus_a = b & !a;
                    let coeff = gamma
                        / (f64::from(a_minus_b.count_ones()) * f64::from(b_minus_a.count_ones()));
                    for j in mask::bits(b_minus_a) {
                        let a_prime = a | j;
                        for i in mask::bits(a_minus_b) {
                            let b_prime = b | i;
                            let delta = sparse_delta(&[
                                (a as usize, -1),
                                (b as usize, -1),
                                (a_prime as usize, 1),
                                (b_prime as usize, 1),
                            ]);
                            let rate = RatePolynomial::new(vec![RateTerm::Bilinear {
                                coeff,
                                a: a as usize,
                                b: b as usize,
                            }]);
                            merged
                                .entry(delta.clone())
                                .and_modify(|jv| jv.rate.merge_from(&rate))
                                .or_insert(JumpVector {
                                    kind: JumpKind::Swap {
                                        a: label(a),
                                        a_to: label(a_prime),
                                        b: label(b),
                                        b_to: label(b_prime),
                                    },
                                    delta,
                                    rate,
                                });
                        }
                    }
                }
            }
            jumps.extend(merged.into_values());
        }

        Self { n, jumps }
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, JumpVector> {
        self.jumps.iter()
    }

    pub fn jumps(&self) -> &[JumpVector] {
        &self.jumps
    }

    /// Σ_ζ Q_ζ(x); zero exactly at absorbing states.
    pub fn total_rate(&self, x: &PopulationState) -> f64 {
        self.jumps.iter().map(|j| j.rate.eval_counts(x.counts())).sum()
    }

    /// Generator application: Σ_ζ (f(x + ζ) − f(x)) Q_ζ(x).
    pub fn apply_generator<F>(&self, f: F, x: &PopulationState) -> f64
    where
        F: Fn(&PopulationState) -> f64,
    {
        let fx = f(x);
        let mut acc = 0.0;
        for jump in &self.jumps {
            let q = jump.rate.eval_counts(x.counts());
            if q == 0.0 {
                continue; // rate vanished at the boundary; x + ζ may be invalid
            }
            let mut shifted = x.clone();
            shifted.apply(&jump.delta);
            acc += (f(&shifted) - fx) * q;
        }
        acc
    }

    /// Per-jump (M_ζ, L_ζ) over the region {x ≥ 0, |x| ≤ bound}.
    pub fn estimate_rate_bounds(&self, bound: f64) -> Vec<RateBounds> {
        self.jumps
            .iter()
            .map(|j| RateBounds {
                max_rate: simplex_max_upper(&j.rate, bound),
                lipschitz: lipschitz_bound(&j.rate, bound, labels::num_labels(self.n)),
            })
            .collect()
    }
}

/// sup-norm of the gradient over {x ≥ 0, |x| ≤ bound}, a Lipschitz
/// constant with respect to the L1 norm.
fn lipschitz_bound(poly: &RatePolynomial, bound: f64, num_labels: usize) -> f64 {
    let mut grad = vec![0.0f64; num_labels];
    for t in poly.terms() {
        match *t {
            RateTerm::Constant(_) => {}
            RateTerm::Linear { coeff, var } => grad[var] += coeff,
            RateTerm::Bilinear { coeff, a, b } => {
                if a == b {
                    grad[a] += 2.0 * coeff * bound;
                } else {
                    grad[a] += coeff * bound;
                    grad[b] += coeff * bound;
                }
            }
        }
    }
    grad.into_iter().fold(0.0, f64::max)
}

fn sparse_delta(entries: &[(usize, i32)]) -> Vec<(usize, i32)> {
    let mut acc: BTreeMap<usize, i32> = BTreeMap::new();
    for &(idx, d) in entries {
        *acc.entry(idx).or_insert(0) += d;
    }
    acc.into_iter().filter(|&(_, d)| d != 0).collect()
}

// ---------------------------------------------------------------------------
// Individual interaction rates
// ---------------------------------------------------------------------------

/// Download transition rate λ_{A,A'}(x) = β x^A Σ_{C ⊇ A'} x^C / |C − A|
/// when A ⊏ A', else 0.
pub fn download_rate(params: &ModelParams, x: &[f64], a: &ChunkLabel, a_prime: &ChunkLabel) -> f64 {
    debug_assert_eq!(x.len(), params.num_labels());
    let (am, apm) = (a.mask(), a_prime.mask());
    if !mask::covers(am, apm) {
        return 0.0;
    }
    let full = labels::full_mask(params.n());
    let mut sum = 0.0;
    for sup in mask::submasks(full & !apm) {
        let c = apm | sup;
        sum += x[c as usize] / f64::from(mask::diff_size(c, am));
    }
    params.beta() * x[am as usize] * sum
}

/// Swap transition rate μ_{A,B}(x) = γ x^A x^B / (|A∖B|·|B∖A|) when
/// A ≁ B, else 0. Symmetric in its label arguments.
pub fn swap_rate(params: &ModelParams, x: &[f64], a: &ChunkLabel, b: &ChunkLabel) -> f64 {
    debug_assert_eq!(x.len(), params.num_labels());
    let (am, bm) = (a.mask(), b.mask());
    if mask::relates(am, bm) {
        return 0.0;
    }
    params.gamma() * x[am as usize] * x[bm as usize]
        / (f64::from(mask::diff_size(am, bm)) * f64::from(mask::diff_size(bm, am)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(n: u8, idx: &[u32]) -> ChunkLabel {
        ChunkLabel::from_indices(n, idx).unwrap()
    }

    fn ones(n: u8) -> Vec<f64> {
        vec![1.0; labels::num_labels(n)]
    }

    #[test]
    fn classification() {
        let open = ModelParams::new(1, vec![1.0, 0.5], 1.0, 0.0, 2.0).unwrap();
        assert!(open.is_open() && !open.is_closed());
        let cons = ModelParams::closed(1, 1.0, 0.0, 0.0).unwrap();
        assert!(cons.is_conservative() && cons.is_closed() && !cons.is_dissipative());
        let diss = ModelParams::closed(1, 1.0, 0.0, 0.5).unwrap();
        assert!(diss.is_dissipative() && !diss.is_conservative() && !diss.is_open());
        // arrivals without departures: neither open nor closed
        let inflow = ModelParams::new(1, vec![1.0, 0.0], 1.0, 0.0, 0.0).unwrap();
        assert!(!inflow.is_open() && !inflow.is_closed());
    }

    #[test]
    fn param_validation() {
        assert!(ModelParams::new(1, vec![0.0, 0.0], 0.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1, vec![0.0, 0.0], 1.0, -0.1, 0.0).is_err());
        assert!(ModelParams::new(1, vec![-1.0, 0.0], 1.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1, vec![0.0], 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn download_rate_examples() {
        // n=1: the only download is ∅ -> {1} at rate β x^∅ x^1.
        let p = ModelParams::new(1, vec![0.0, 0.0], 2.0, 0.0, 0.0).unwrap();
        let x = [3.0, 5.0];
        let r = download_rate(&p, &x, &lab(1, &[]), &lab(1, &[1]));
        assert!((r - 2.0 * 3.0 * 5.0).abs() < 1e-12);

        // A = A' is not a covering pair.
        assert_eq!(download_rate(&p, &x, &lab(1, &[1]), &lab(1, &[1])), 0.0);

        // n=3, all-ones state, A={1}, A'={1,2}: C ∈ {{1,2},{1,2,3}} gives 1 + 1/2.
        let p3 = ModelParams::new(3, vec![0.0; 8], 1.0, 0.0, 0.0).unwrap();
        let r3 = download_rate(&p3, &ones(3), &lab(3, &[1]), &lab(3, &[1, 2]));
        assert!((r3 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn swap_rate_examples() {
        let p = ModelParams::new(2, vec![0.0; 4], 1.0, 0.7, 0.0).unwrap();
        let x = [0.0, 1.0, 1.0, 0.0];
        let r = swap_rate(&p, &x, &lab(2, &[1]), &lab(2, &[2]));
        assert!((r - 0.7).abs() < 1e-12);
        assert_eq!(r, swap_rate(&p, &x, &lab(2, &[2]), &lab(2, &[1])));

        // comparable labels cannot swap
        assert_eq!(swap_rate(&p, &x, &lab(2, &[1]), &lab(2, &[1, 2])), 0.0);

        let p3 = ModelParams::new(3, vec![0.0; 8], 1.0, 1.0, 0.0).unwrap();
        let mut x3 = vec![0.0; 8];
        x3[lab(3, &[1, 2]).index()] = 2.0;
        x3[lab(3, &[2, 3]).index()] = 3.0;
        let r3 = swap_rate(&p3, &x3, &lab(3, &[1, 2]), &lab(3, &[2, 3]));
        assert!((r3 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn jump_set_n1_matches_single_chunk_rates() {
        // Open n=1: arrivals at both labels, download, departure = 4 vectors,
        // with rates α^∅, α^1, β x^∅ x^1, δ x^1.
        let p = ModelParams::new(1, vec![1.0, 1.0], 1.0, 0.0, 1.0).unwrap();
        let js = JumpSet::build(&p).unwrap();
        assert_eq!(js.len(), 4);
        let x = PopulationState::new(1, vec![2, 3]).unwrap();
        let mut rates: Vec<(Vec<i32>, f64)> = js
            .iter()
            .map(|j| (j.delta_dense(2), j.rate().eval_counts(x.counts())))
            .collect();
        rates.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(
            rates,
            vec![
                (vec![-1, 1], 6.0), // download β x^∅ x^1 = 2·3
                (vec![0, -1], 3.0), // departure δ x^1
                (vec![0, 1], 1.0),  // arrival to {1}
                (vec![1, 0], 1.0),  // arrival to ∅
            ]
        );
        // and the total at (2,3) is 1 + 1 + 6 + 3 = 11
        assert!((js.total_rate(&x) - 11.0).abs() < 1e-12);

        let cons = ModelParams::closed(1, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(JumpSet::build(&cons).unwrap().len(), 1);
    }

    #[test]
    fn jump_set_n2_inventory() {
        let p = ModelParams::closed(2, 1.0, 1.0, 0.0).unwrap();
        let js = JumpSet::build(&p).unwrap();
        let downloads: Vec<_> = js
            .iter()
            .filter(|j| matches!(j.kind, JumpKind::Download { .. }))
            .collect();
        assert_eq!(downloads.len(), 4);
        let swaps: Vec<_> = js
            .iter()
            .filter(|j| matches!(j.kind, JumpKind::Swap { .. }))
            .collect();
        assert_eq!(swaps.len(), 1);
        // ζ = −e_{1} − e_{2} + 2 e_{12}
        assert_eq!(swaps[0].delta_dense(4), vec![0, -1, -1, 2]);
        let x = [0.0, 2.0, 5.0, 0.0];
        assert!((swaps[0].rate().eval(&x) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn absorbing_states_have_zero_total_rate() {
        let p = ModelParams::closed(2, 1.5, 0.8, 0.0).unwrap();
        let js = JumpSet::build(&p).unwrap();
        let absorbed = PopulationState::concentrated(&lab(2, &[1, 2]), 40);
        assert_eq!(js.total_rate(&absorbed), 0.0);
        let empty = PopulationState::zeros(2).unwrap();
        assert_eq!(js.total_rate(&empty), 0.0);
    }

    #[test]
    fn rates_vanish_before_any_count_goes_negative() {
        let p = ModelParams::new(3, vec![0.2; 8], 1.0, 1.0, 0.5).unwrap();
        let js = JumpSet::build(&p).unwrap();
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            rng % 3
        };
        for _ in 0..200 {
            let counts: Vec<u64> = (0..8).map(|_| next()).collect();
            let x = PopulationState::new(3, counts).unwrap();
            for j in js.iter() {
                let q = j.rate().eval_counts(x.counts());
                assert!(q >= 0.0);
                let goes_negative = j
                    .delta()
                    .iter()
                    .any(|&(idx, d)| (x.counts()[idx] as i64) + i64::from(d) < 0);
                if goes_negative {
                    assert_eq!(q, 0.0, "jump {:?} at {x}", j.kind);
                }
            }
        }
    }

    #[test]
    fn generator_on_total_population() {
        // Q|·| = |α| − δ x^F: downloads and swaps preserve the population.
        for n in 1..=4u8 {
            let len = labels::num_labels(n);
            let alpha: Vec<f64> = (0..len).map(|i| (i % 3) as f64 * 0.4).collect();
            let p = ModelParams::new(n, alpha, 1.3, 0.6, 0.9).unwrap();
            let js = JumpSet::build(&p).unwrap();
            let mut seed = 42u64;
            let mut next = || {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (seed >> 33) % 4
            };
            for _ in 0..100 {
                let counts: Vec<u64> = (0..len).map(|_| next()).collect();
                let x = PopulationState::new(n, counts).unwrap();
                let got = js.apply_generator(|s| s.total() as f64, &x);
                let want = p.total_arrival_rate()
                    - p.delta() * x.counts()[len - 1] as f64;
                assert!((got - want).abs() < 1e-9, "n={n} got {got} want {want}");
            }
        }
    }

    #[test]
    fn generator_examples() {
        let p = ModelParams::new(2, vec![0.3, 0.1, 0.2, 0.05], 1.1, 0.4, 0.7).unwrap();
        let js = JumpSet::build(&p).unwrap();
        let x = PopulationState::new(2, vec![3, 1, 2, 4]).unwrap();
        assert_eq!(js.apply_generator(|_| 7.5, &x), 0.0);

        // single swap class increments x^{12} by 2 at rate γ x^1 x^2
        let p2 = ModelParams::closed(2, 5.0, 1.0, 0.0).unwrap();
        let js2 = JumpSet::build(&p2).unwrap();
        let x2 = PopulationState::new(2, vec![0, 1, 1, 0]).unwrap();
        let got = js2.apply_generator(|s| s.counts()[3] as f64, &x2);
        assert!((got - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rate_bound_examples() {
        // constant α^A
        let c = RatePolynomial::new(vec![RateTerm::Constant(0.7)]);
        assert_eq!(simplex_max_upper(&c, 5.0), 0.7);
        assert_eq!(lipschitz_bound(&c, 5.0, 4), 0.0);

        // β x^A x^C over |x| ≤ 1 peaks at x^A = x^C = 1/2
        let q = RatePolynomial::new(vec![RateTerm::Bilinear { coeff: 2.0, a: 0, b: 1 }]);
        assert!((simplex_max_upper(&q, 1.0) - 0.5).abs() < 1e-15);

        // δ x^F over |x| ≤ B
        let l = RatePolynomial::new(vec![RateTerm::Linear { coeff: 0.9, var: 3 }]);
        assert!((simplex_max_upper(&l, 4.0) - 3.6).abs() < 1e-15);
        assert!((lipschitz_bound(&l, 4.0, 4) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn rate_bounds_cover_sampled_rates() {
        let p = ModelParams::new(2, vec![0.5, 0.0, 0.0, 0.2], 1.2, 0.8, 0.6).unwrap();
        let js = JumpSet::build(&p).unwrap();
        let bound = 3.0;
        let bounds = js.estimate_rate_bounds(bound);
        let mut seed = 7u64;
        let mut uniform = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            // random point of the simplex |x| <= bound
            let mut x: Vec<f64> = (0..4).map(|_| uniform()).collect();
            let s: f64 = x.iter().sum();
            let scale = uniform() * bound / s.max(1e-12);
            x.iter_mut().for_each(|v| *v *= scale);
            for (j, b) in js.iter().zip(&bounds) {
                assert!(j.rate().eval(&x) <= b.max_rate + 1e-12);
            }
        }
    }

    #[test]
    fn large_swap_model_refused_without_override() {
        let p = ModelParams::closed(11, 1.0, 0.5, 0.0).unwrap();
        assert!(matches!(JumpSet::build(&p), Err(Error::JumpSetTooLarge(11))));
        let p_noswap = ModelParams::closed(11, 1.0, 0.0, 0.0).unwrap();
        assert!(JumpSet::build(&p_noswap).is_ok());
    }

    #[test]
    fn config_round_trip() {
        let src = r#"
            n = 2
            beta = 3.0
            gamma = 0.5
            delta = 4.0
            [alpha]
            "{}" = 5.0
            "{1,2}" = 0.25
        "#;
        let p = ModelParams::from_config_str(src).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.alpha(), &[5.0, 0.0, 0.0, 0.25]);
        let round = ModelParams::from_config_str(&p.to_config_string()).unwrap();
        assert_eq!(p, round);

        assert!(ModelParams::from_config_str("n = 2").is_err()); // missing beta
        assert!(ModelParams::from_config_str("n = 2\nbeta = 1.0\n[alpha]\n\"{3}\" = 1.0").is_err());
    }

    // Independent ordered-tuple enumeration of the swap part of the drift,
    // following the 1/2-counted sum over all ordered generating tuples.
    fn drift_by_ordered_tuples(p: &ModelParams, x: &[f64]) -> Vec<f64> {
        let n = p.n();
        let num = labels::num_labels(n);
        let full = labels::full_mask(n);
        let mut u = vec![0.0; num];
        for (m, &a) in p.alpha().iter().enumerate() {
            u[m] += a;
        }
        u[num - 1] -= p.delta() * x[num - 1];
        for a in 0..num as u32 {
            for bit in mask::bits(full & !a) {
                let ap = a | bit;
                let lam = download_rate(
                    p,
                    x,
                    &ChunkLabel::from_mask(n, a).unwrap(),
                    &ChunkLabel::from_mask(n, ap).unwrap(),
                );
                u[a as usize] -= lam;
                u[ap as usize] += lam;
            }
        }
        // all ordered tuples, each physical swap counted twice, halved
        for a in 0..num as u32 {
            for b in 0..num as u32 {
                if a == b || mask::relates(a, b) {
                    continue;
                }
                let mu = swap_rate(
                    p,
                    x,
                    &ChunkLabel::from_mask(n, a).unwrap(),
                    &ChunkLabel::from_mask(n, b).unwrap(),
                );
                for j in mask::bits(b & !a) {
                    let ap = a | j;
                    for i in mask::bits(a & !b) {
                        let bp = b | i;
                        let w = 0.5 * mu;
                        u[a as usize] -= w;
                        u[b as usize] -= w;
                        u[ap as usize] += w;
                        u[bp as usize] += w;
                    }
                }
            }
        }
        u
    }

    #[test]
    fn merged_swaps_match_ordered_tuple_sum() {
        let mut seed = 99u64;
        let mut uniform = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in 1..=3u8 {
            let len = labels::num_labels(n);
            let alpha: Vec<f64> = (0..len).map(|_| uniform()).collect();
            let p = ModelParams::new(n, alpha, 0.9, 1.7, 0.4).unwrap();
            let js = JumpSet::build(&p).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..len).map(|_| 3.0 * uniform()).collect();
                let mut from_set = vec![0.0; len];
                for j in js.iter() {
                    let q = j.rate().eval(&x);
                    for &(idx, d) in j.delta() {
                        from_set[idx] += f64::from(d) * q;
                    }
                }
                let from_tuples = drift_by_ordered_tuples(&p, &x);
                for (got, want) in from_set.iter().zip(&from_tuples) {
                    assert!((got - want).abs() < 1e-10, "n={n}: {got} vs {want}");
                }
            }
        }
    }
}
