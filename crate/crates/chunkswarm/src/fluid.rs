//! The deterministic fluid limit of the swarm chain.
//!
//! The vector field is assembled from four interaction tallies per label:
//!
//! - `phi_d^A`: peers an A-peer can download from (strict supersets),
//! - `phi_s^A`: peers an A-peer can swap with (incomparable labels),
//! - `psi_d^A`: peers that become A-peers after one download,
//! - `psi_s^{A,B}`: peers that become A-peers after a swap with a B-peer.
//!
//! The drift of the jump chain, Σ_ζ ζ·Q_ζ(x), equals this field; the two
//! are computed by fully independent routes here and cross-checked by the
//! test suite, which is what certifies the subtle inclusion/exclusion
//! choices in the sums (the loss tally excludes B = A, the download gain
//! includes it).

use crate::error::{Error, Result};
use crate::labels::{self, mask, ChunkLabel};
use crate::model::{JumpSet, ModelParams};
use crate::ode::{self, OdeOptions, OdeSolution, OdeStats};

/// Real-valued peer densities per label, indexed by label mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    n: u8,
    values: Vec<f64>,
}

impl DensityState {
    pub fn new(n: u8, values: Vec<f64>) -> Result<Self> {
        labels::check_chunk_count(n)?;
        let len = labels::num_labels(n);
        if values.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: values.len() });
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeEntry { index: i, value: v });
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: u8) -> Result<Self> {
        Self::new(n, vec![0.0; labels::num_labels(n)])
    }

    /// All density on a single label.
    pub fn concentrated(label: &ChunkLabel, value: f64) -> Result<Self> {
        let mut values = vec![0.0; labels::num_labels(label.n())];
        values[label.index()] = value;
        Self::new(label.n(), values)
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, label: &ChunkLabel) -> f64 {
        self.values[label.index()]
    }

    /// |x| = Σ_A x^A (entries are nonnegative by construction).
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn l1_distance(&self, other: &DensityState) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl serde::Serialize for DensityState {
    /// Serializes as a map from label text to density, in mask order.
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.values.len()))?;
        for (m, v) in self.values.iter().enumerate() {
            let label = ChunkLabel::from_mask(self.n, m as u32).expect("mask in range");
            map.serialize_entry(&label.to_string(), v)?;
        }
        map.end()
    }
}

/// The interaction tallies of one label (and optionally one partner).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiPsi {
    pub phi_d: f64,
    pub phi_s: f64,
    pub psi_d: f64,
    /// ψ_s^{A,B}; present only when a partner label B was supplied.
    pub psi_s: Option<f64>,
}

/// Evaluates φ_d^A, φ_s^A, ψ_d^A and, given B, ψ_s^{A,B}.
pub fn phi_psi(
    params: &ModelParams,
    x: &DensityState,
    a: &ChunkLabel,
    b: Option<&ChunkLabel>,
) -> Result<PhiPsi> {
    check_state(params, x)?;
    if a.n() != params.n() {
        return Err(Error::ChunkCountMismatch { left: a.n(), right: params.n() });
    }
    let xs = x.values();
    let am = a.mask();
    let full = labels::full_mask(params.n());

    let mut phi_d = 0.0;
    for sup in mask::submasks(full & !am) {
        if sup != 0 {
            phi_d += xs[(am | sup) as usize];
        }
    }
    let mut phi_s = 0.0;
    for m in 0..xs.len() as u32 {
        if !mask::relates(am, m) {
            phi_s += xs[m as usize];
        }
    }
    let psi_d: f64 = mask::bits(am).map(|bit| xs[(am & !bit) as usize]).sum();
    let psi_s = match b {
        Some(b) => {
            if b.n() != params.n() {
                return Err(Error::ChunkCountMismatch { left: b.n(), right: params.n() });
            }
            Some(mask::bits(am & b.mask()).map(|bit| xs[(am & !bit) as usize]).sum())
        }
        None => None,
    };
    Ok(PhiPsi { phi_d, phi_s, psi_d, psi_s })
}

/// The fluid vector field v(x), component per label:
///
/// v^A = α^A − x^A (β φ_d^A + γ φ_s^A)
///       + β ψ_d^A Σ_{B ⊇ A} x^B / (1 + |B∖A|)
///       + γ Σ_{B: A ⊄ B} ψ_s^{A,B} x^B / (1 + |B∖A|)
///       − δ x^F · [A = F]
pub fn vector_field(params: &ModelParams, x: &DensityState) -> Result<Vec<f64>> {
    check_state(params, x)?;
    let mut out = vec![0.0; params.num_labels()];
    vector_field_into(params, x.values(), &mut out);
    Ok(out)
}

/// Allocation-free core of [`vector_field`]; `xs` may be any nonnegative
/// vector of length 2^n.
pub fn vector_field_into(params: &ModelParams, xs: &[f64], out: &mut [f64]) {
    let n = params.n();
    let num = labels::num_labels(n);
    debug_assert_eq!(xs.len(), num);
    debug_assert_eq!(out.len(), num);
    let full = labels::full_mask(n);
    let (beta, gamma, delta) = (params.beta(), params.gamma(), params.delta());

    for am in 0..num as u32 {
        let a_idx = am as usize;
        let mut acc = params.alpha()[a_idx];

        // download loss and gain share one sweep over the supersets of A;
        // the loss tally excludes B = A, the gain sum includes it
        let mut phi_d = 0.0;
        let mut gain_d = 0.0;
        for sup in mask::submasks(full & !am) {
            let b = am | sup;
            let xb = xs[b as usize];
            if sup != 0 {
                phi_d += xb;
            }
            gain_d += xb / f64::from(sup.count_ones() + 1);
        }
        let psi_d: f64 = mask::bits(am).map(|bit| xs[(am & !bit) as usize]).sum();
        acc += beta * (psi_d * gain_d - xs[a_idx] * phi_d);

        if gamma > 0.0 {
            let mut phi_s = 0.0;
            let mut gain_s = 0.0;
            for bm in 0..num as u32 {
                if !mask::relates(am, bm) {
                    phi_s += xs[bm as usize];
                }
                if !mask::is_subset(am, bm) {
                    let psi_s: f64 =
                        mask::bits(am & bm).map(|bit| xs[(am & !bit) as usize]).sum();
                    if psi_s > 0.0 {
                        gain_s +=
                            psi_s * xs[bm as usize] / f64::from(mask::diff_size(bm, am) + 1);
                    }
                }
            }
            acc += gamma * (gain_s - xs[a_idx] * phi_s);
        }

        if am == full {
            acc -= delta * xs[a_idx];
        }
        out[a_idx] = acc;
    }
}

/// Brute-force drift Σ_ζ ζ·Q_ζ(x) over the jump set — an implementation
/// of the same vector independent of [`vector_field`], kept as a
/// machine-checked oracle.
pub fn drift_oracle(params: &ModelParams, jumps: &JumpSet, x: &DensityState) -> Result<Vec<f64>> {
    check_state(params, x)?;
    if jumps.n() != params.n() {
        return Err(Error::ChunkCountMismatch { left: jumps.n(), right: params.n() });
    }
    let mut out = vec![0.0; params.num_labels()];
    for jump in jumps.iter() {
        let q = jump.rate().eval(x.values());
        for &(idx, d) in jump.delta() {
            out[idx] += f64::from(d) * q;
        }
    }
    Ok(out)
}

/// Exact Jacobian Dv(x) of the vector field; v is quadratic, so the
/// entries are affine in x.
pub fn jacobian(params: &ModelParams, x: &DensityState) -> Result<nalgebra::DMatrix<f64>> {
    check_state(params, x)?;
    let n = params.n();
    let num = labels::num_labels(n);
    let full = labels::full_mask(n);
    let xs = x.values();
    let (beta, gamma, delta) = (params.beta(), params.gamma(), params.delta());
    let mut jac = nalgebra::DMatrix::zeros(num, num);

    for am in 0..num as u32 {
        let a_idx = am as usize;
        let mut phi_d = 0.0;
        let mut gain_d = 0.0;
        for sup in mask::submasks(full & !am) {
            let b = am | sup;
            if sup != 0 {
                phi_d += xs[b as usize];
            }
            gain_d += xs[b as usize] / f64::from(sup.count_ones() + 1);
        }
        let psi_d: f64 = mask::bits(am).map(|bit| xs[(am & !bit) as usize]).sum();
        let mut phi_s = 0.0;
        if gamma > 0.0 {
            for bm in 0..num as u32 {
                if !mask::relates(am, bm) {
                    phi_s += xs[bm as usize];
                }
            }
        }

        for cm in 0..num as u32 {
            let c_idx = cm as usize;
            let mut d = 0.0;

            // ∂/∂x^C of −x^A (β φ_d^A + γ φ_s^A)
            if cm == am {
                d -= beta * phi_d + gamma * phi_s;
            }
            if cm != am && mask::is_subset(am, cm) {
                d -= beta * xs[a_idx];
            }
            if gamma > 0.0 && !mask::relates(am, cm) {
                d -= gamma * xs[a_idx];
            }

            // ∂/∂x^C of β ψ_d^A Σ_{B ⊇ A} x^B/(1+|B∖A|)
            if mask::covers(cm, am) {
                d += beta * gain_d;
            }
            if mask::is_subset(am, cm) {
                d += beta * psi_d / f64::from(mask::diff_size(cm, am) + 1);
            }

            // ∂/∂x^C of γ Σ_{B: A ⊄ B} ψ_s^{A,B} x^B/(1+|B∖A|)
            if gamma > 0.0 {
                if mask::covers(cm, am) {
                    // the downloaded chunk A−C must come from the partner
                    let chunk = am & !cm;
                    let mut s = 0.0;
                    for bm in 0..num as u32 {
                        if !mask::is_subset(am, bm) && mask::is_subset(chunk, bm) {
                            s += xs[bm as usize] / f64::from(mask::diff_size(bm, am) + 1);
                        }
                    }
                    d += gamma * s;
                }
                if !mask::is_subset(am, cm) {
                    let psi_s: f64 =
                        mask::bits(am & cm).map(|bit| xs[(am & !bit) as usize]).sum();
                    d += gamma * psi_s / f64::from(mask::diff_size(cm, am) + 1);
                }
            }

            if am == full && cm == full {
                d -= delta;
            }
            jac[(a_idx, c_idx)] = d;
        }
    }
    Ok(jac)
}

/// Integration controls for the fluid flow. `tol_neg` separates roundoff
/// from a genuinely escaping trajectory (the exact flow cannot reach the
/// boundary in finite time).
#[derive(Clone, Copy, Debug)]
pub struct FluidOptions {
    pub rtol: f64,
    pub atol: f64,
    pub tol_neg: f64,
    pub max_steps: usize,
}

impl Default for FluidOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, tol_neg: 1e-10, max_steps: 10_000_000 }
    }
}

/// Dense fluid solution; wraps the integrator output with label-aware
/// accessors.
#[derive(Clone, Debug)]
pub struct FluidSolution {
    n: u8,
    sol: OdeSolution,
}

impl FluidSolution {
    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn t_end(&self) -> f64 {
        self.sol.t_end()
    }

    /// Interpolated state at `t`.
    pub fn eval(&self, t: f64) -> DensityState {
        let mut v = self.sol.eval(t);
        for e in v.iter_mut() {
            if *e < 0.0 {
                *e = 0.0; // interpolant may undershoot by roundoff
            }
        }
        DensityState { n: self.n, values: v }
    }

    pub fn eval_raw_into(&self, t: f64, out: &mut [f64]) {
        self.sol.eval_into(t, out);
    }

    pub fn final_state(&self) -> DensityState {
        self.eval(self.sol.t_end())
    }

    pub fn step_times(&self) -> &[f64] {
        self.sol.times()
    }

    pub fn stats(&self) -> OdeStats {
        self.sol.stats()
    }

    /// Sampled view on a caller grid.
    pub fn trajectory(&self, grid: &[f64]) -> FluidTrajectory {
        FluidTrajectory {
            times: grid.to_vec(),
            states: grid.iter().map(|&t| self.eval(t)).collect(),
            stats: self.sol.stats(),
        }
    }

    /// First time the trajectory enters the closed L1 `r`-ball around
    /// `target`, located on a fine grid and sharpened by bisection.
    pub fn first_entry_time(&self, target: &DensityState, r: f64) -> Option<f64> {
        let t_end = self.sol.t_end();
        let samples = 4000;
        let dist = |t: f64| self.eval(t).l1_distance(target);
        let mut prev_t = 0.0;
        let mut prev_d = dist(0.0);
        if prev_d <= r {
            return Some(0.0);
        }
        for i in 1..=samples {
            let t = t_end * i as f64 / samples as f64;
            let d = dist(t);
            if d <= r {
                let (mut lo, mut hi) = (prev_t, t);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if dist(mid) <= r {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(hi);
            }
            prev_t = t;
            prev_d = d;
        }
        let _ = prev_d;
        None
    }
}

/// Sampled fluid trajectory on a fixed grid.
#[derive(Clone, Debug)]
pub struct FluidTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityState>,
    pub stats: OdeStats,
}

/// Integrates the fluid flow dx/dt = v(x) from `x0` up to `t_max`.
pub fn integrate(
    params: &ModelParams,
    x0: &DensityState,
    t_max: f64,
    opts: &FluidOptions,
) -> Result<FluidSolution> {
    check_state(params, x0)?;
    let opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        max_steps: opts.max_steps,
        nonneg_clamp: Some(opts.tol_neg),
        ..Default::default()
    };
    let sol = ode::solve(
        |_t, y, dy| vector_field_into(params, y, dy),
        0.0,
        x0.values(),
        t_max,
        &opts,
    )?;
    Ok(FluidSolution { n: params.n(), sol })
}

fn check_state(params: &ModelParams, x: &DensityState) -> Result<()> {
    if x.n() != params.n() {
        return Err(Error::ChunkCountMismatch { left: x.n(), right: params.n() });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Closed forms (single-chunk and two-chunk special cases)
// ---------------------------------------------------------------------------

/// Have-nothing density of the closed conservative single-chunk system:
/// x_t = x0 / (x0 + (1 − x0) e^{βt}), the falling logistic.
pub fn closed_form_logistic(x0: f64, beta: f64, t: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x0));
    x0 / (x0 + (1.0 - x0) * (beta * t).exp())
}

/// Conserved curve of the closed dissipative single-chunk system:
/// y(x) = (x0 + y0) + (δ/β) ln(x/x0) − x.
pub fn sir_integral(x: f64, x0: f64, y0: f64, beta: f64, delta: f64) -> Result<f64> {
    if !(x > 0.0) || !(x0 > 0.0) {
        return Err(Error::InvalidParams(format!(
            "sir_integral needs positive susceptible densities (x = {x}, x0 = {x0})"
        )));
    }
    Ok((x0 + y0) + (delta / beta) * (x / x0).ln() - x)
}

/// Closed-form solution of the two-chunk closed conservative system with
/// no swaps, in the reduced coordinates x = x^∅, u = x^1 + x^2, w = x^F
/// with x0 + u0 + w0 = 1:
///
///   w_t = (x0 + (1−x0) e^{βt}) / (x0 + (1−x0) e^{βt} + x0 β t + (1−w0)/w0)
pub fn closed_form_case1(
    x0: f64,
    u0: f64,
    w0: f64,
    beta: f64,
    t: f64,
) -> Result<(f64, f64, f64)> {
    if !(w0 > 0.0) {
        return Err(Error::InvalidParams(
            "the two-chunk closed form requires w0 > 0".to_string(),
        ));
    }
    if (x0 + u0 + w0 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!(
            "initial densities must sum to 1 (got {})",
            x0 + u0 + w0
        )));
    }
    let x = closed_form_logistic(x0, beta, t);
    let e = x0 + (1.0 - x0) * (beta * t).exp();
    let w = e / (e + x0 * beta * t + (1.0 - w0) / w0);
    Ok((x, 1.0 - x - w, w))
}
