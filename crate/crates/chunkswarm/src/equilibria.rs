//! Fixed points of the fluid flow, their stability, settling-time
//! estimates, and the cardinality-symmetric dimension reduction.
//!
//! Closed systems conserve mass, so their Jacobians carry a genuine zero
//! eigenvalue; the classifier bins that as `Marginal` rather than
//! unstable. Settling times are measured as the first entry into the
//! closed L1 r-ball around the equilibrium, matching the norm used by
//! every other estimate in the crate.

use nalgebra::{Complex, DMatrix, DVector, Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluid::{self, DensityState, FluidOptions};
use crate::incentives;
use crate::labels::{self, mask};
use crate::model::{self, ModelParams, RatePolynomial, RateTerm};
use crate::ode::{self, OdeOptions, OdeSolution};

/// Real-part tolerance for calling an eigenvalue zero. Mass conservation
/// makes exact zeros routine in closed systems.
pub const EIG_TOL: f64 = 1e-9;

/// Residual target for equilibrium solves.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

/// A located fixed point with its spectrum.
#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumReport {
    pub x_star: DensityState,
    /// |v(x*)| in L1.
    pub residual: f64,
    /// Eigenvalues of Dv(x*) as (re, im) pairs, descending real part.
    pub eigenvalues: Vec<(f64, f64)>,
    pub stability: Stability,
    /// Any eigenvalue with nonzero imaginary part.
    pub spiral: bool,
}

impl EquilibriumReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report always serializes")
    }
}

fn classify(eigenvalues: &[(f64, f64)]) -> (Stability, bool) {
    let spiral = eigenvalues.iter().any(|&(_, im)| im.abs() > EIG_TOL);
    let stability = if eigenvalues.iter().any(|&(re, _)| re > EIG_TOL) {
        Stability::Unstable
    } else if eigenvalues.iter().any(|&(re, _)| re.abs() <= EIG_TOL) {
        Stability::Marginal
    } else {
        Stability::Stable
    };
    (stability, spiral)
}

fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let eigs = m.clone().complex_eigenvalues();
    let mut out: Vec<(f64, f64)> = eigs.iter().map(|c: &Complex<f64>| (c.re, c.im)).collect();
    out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
    out
}

fn report_at(params: &ModelParams, x: DensityState, residual: f64) -> Result<EquilibriumReport> {
    let jac = fluid::jacobian(params, &x)?;
    let eigenvalues = sorted_eigenvalues(&jac);
    let (stability, spiral) = classify(&eigenvalues);
    Ok(EquilibriumReport { x_star: x, residual, eigenvalues, stability, spiral })
}

// ---------------------------------------------------------------------------
// Closed-form equilibria
// ---------------------------------------------------------------------------

/// Open single-chunk equilibrium.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SingleChunkEquilibrium {
    /// Have-nothing density δ/β.
    pub x_star: f64,
    /// Seed density λ/δ.
    pub y_star: f64,
    /// Trajectories spiral iff λβ < 4δ² (the boundary counts as non-spiral).
    pub spiral: bool,
}

/// Equilibrium (δ/β, λ/δ) of the open single-chunk system with arrival
/// rate λ of have-nothing peers.
pub fn equilibrium_n1_open(lambda: f64, beta: f64, delta: f64) -> Result<SingleChunkEquilibrium> {
    for (name, v) in [("lambda", lambda), ("beta", beta), ("delta", delta)] {
        if !(v > 0.0) {
            return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(SingleChunkEquilibrium {
        x_star: delta / beta,
        y_star: lambda / delta,
        spiral: lambda * beta < 4.0 * delta * delta,
    })
}

/// Equilibrium of the open two-chunk system fed by have-nothing arrivals
/// at rate λ: (δ/β̃ (δu/λ + 1)^{-1}, u/2, u/2, λ/δ) with u the positive
/// root of the splitting quadratic.
pub fn equilibrium_n2_open(
    lambda: f64,
    beta_split: f64,
    gamma_split: f64,
    delta: f64,
) -> Result<DensityState> {
    let u = incentives::q_root(lambda, beta_split, gamma_split, delta)?;
    let x_empty = delta / beta_split / (delta / lambda * u + 1.0);
    DensityState::new(2, vec![x_empty, u / 2.0, u / 2.0, lambda / delta])
}

// ---------------------------------------------------------------------------
// General equilibrium search
// ---------------------------------------------------------------------------

/// Damped Newton iteration on v(x) = 0 with projection onto the
/// nonnegative orthant; quadratic fields overshoot happily, so each step
/// is halved until the residual actually decreases.
pub fn find_equilibrium_general(
    params: &ModelParams,
    x_guess: &DensityState,
) -> Result<EquilibriumReport> {
    const MAX_ITERS: usize = 60;
    let mut x = x_guess.values().to_vec();
    let n = params.n();
    let mut residual;

    for _ in 0..MAX_ITERS {
        let state = DensityState::new(n, x.clone())?;
        let v = fluid::vector_field(params, &state)?;
        residual = v.iter().map(|a| a.abs()).sum();
        if residual <= RESIDUAL_TOL {
            return report_at(params, state, residual);
        }

        let jac = fluid::jacobian(params, &state)?;
        let rhs = DVector::from_iterator(v.len(), v.iter().map(|a| -a));
        let step = match jac.clone().lu().solve(&rhs) {
            Some(s) => s,
            // singular at a marginal point: fall back to a least-squares step
            None => jac
                .svd(true, true)
                .solve(&rhs, EIG_TOL)
                .map_err(|_| Error::NoConvergence { iterations: MAX_ITERS, residual })?,
        };

        let mut t = 1.0;
        let mut improved = false;
        while t >= 1e-8 {
            let candidate: Vec<f64> =
                x.iter().zip(step.iter()).map(|(xi, si)| (xi + t * si).max(0.0)).collect();
            let cand_state = DensityState::new(n, candidate.clone())?;
            let cand_res: f64 =
                fluid::vector_field(params, &cand_state)?.iter().map(|a| a.abs()).sum();
            if cand_res < residual {
                x = candidate;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            return Err(Error::NoConvergence { iterations: MAX_ITERS, residual });
        }
    }

    let state = DensityState::new(n, x)?;
    let v = fluid::vector_field(params, &state)?;
    residual = v.iter().map(|a| a.abs()).sum();
    if residual <= RESIDUAL_TOL {
        return report_at(params, state, residual);
    }
    Err(Error::NoConvergence { iterations: MAX_ITERS, residual })
}

// ---------------------------------------------------------------------------
// Settling times
// ---------------------------------------------------------------------------

/// Settling time of the two-chunk closed conservative system with no
/// swaps: the first time the seed share w exceeds 1 − ε, obtained as the
/// unique positive root of
///
///   (1−w0)/w0 + x0 β τ = ε/(1−ε) · (x0 + (1−x0) e^{βτ}).
pub fn settling_time_case1(x0: f64, w0: f64, beta: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    if !(w0 > 0.0 && w0 <= 1.0) {
        return Err(Error::InvalidParams(format!("w0 must lie in (0,1], got {w0}")));
    }
    if !(0.0..1.0).contains(&x0) {
        return Err(Error::InvalidParams(format!("x0 must lie in [0,1), got {x0}")));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
    }
    if w0 >= 1.0 - epsilon {
        return Ok(0.0); // already inside the target set
    }

    // g > 0 exactly while w(τ) < 1 − ε
    let g = |tau: f64| {
        (1.0 - w0) / w0 + x0 * beta * tau
            - epsilon / (1.0 - epsilon) * (x0 + (1.0 - x0) * (beta * tau).exp())
    };
    let cap = (1u64 << 40) as f64;
    let mut hi = 1.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
        if hi > cap {
            return Err(Error::BracketFailure(cap));
        }
    }
    let mut lo = if hi == 1.0 { 0.0 } else { hi / 2.0 };
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Crude Lyapunov lower bound on the settling time into the L1 r-ball:
/// τ_r ≥ (1/δ) log((|x0| + |α|) / (|x*| + r)), floored at zero.
pub fn settling_lower_bound(
    x0_norm: f64,
    alpha_norm: f64,
    x_star_norm: f64,
    r: f64,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0) || !(r > 0.0) {
        return Err(Error::InvalidParams(format!(
            "lower bound needs delta > 0 and r > 0 (got {delta}, {r})"
        )));
    }
    let ratio = (x0_norm + alpha_norm) / (x_star_norm + r);
    if ratio <= 1.0 {
        return Ok(0.0);
    }
    Ok(ratio.ln() / delta)
}

/// The positive part of the seed component of the vector field,
/// v₊^F(x) = β Σ_j x^F x^{F−j} + γ Σ_{B ⊊ F} Σ_{i ∈ B} x^B x^{F−i}.
pub fn v_plus_f(params: &ModelParams, x: &DensityState) -> Result<f64> {
    if x.n() != params.n() {
        return Err(Error::ChunkCountMismatch { left: x.n(), right: params.n() });
    }
    Ok(v_plus_f_polynomial(params).eval(x.values()))
}

/// v₊^F as a rate polynomial, for the simplex-maximum estimate.
pub fn v_plus_f_polynomial(params: &ModelParams) -> RatePolynomial {
    let n = params.n();
    let full = labels::full_mask(n);
    let mut terms = Vec::new();
    for j in mask::bits(full) {
        terms.push(RateTerm::Bilinear {
            coeff: params.beta(),
            a: full as usize,
            b: (full & !j) as usize,
        });
    }
    if params.gamma() > 0.0 {
        for b in 0..full {
            for i in mask::bits(b) {
                terms.push(RateTerm::Bilinear {
                    coeff: params.gamma(),
                    a: b as usize,
                    b: (full & !i) as usize,
                });
            }
        }
    }
    RatePolynomial::new(terms)
}

/// Upper estimate of v₊^F over {x ≥ 0, |x| ≤ norm_bound}.
pub fn v_plus_bar(params: &ModelParams, norm_bound: f64) -> f64 {
    model::simplex_max_upper(&v_plus_f_polynomial(params), norm_bound)
}

/// Settling upper bound for closed systems with weak seed production:
/// if v̄₊^F < δ, the seed density x^F falls below r no later than
/// log(x0^F / r) / (δ − v̄₊^F).
pub fn settling_upper_bound(x0_f: f64, v_plus_bar: f64, delta: f64, r: f64) -> Result<f64> {
    if v_plus_bar >= delta {
        return Err(Error::BoundInapplicable { v_plus_bar, delta });
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParams(format!("r must be positive, got {r}")));
    }
    if x0_f <= r {
        return Ok(0.0);
    }
    Ok((x0_f / r).ln() / (delta - v_plus_bar))
}

// ---------------------------------------------------------------------------
// Cardinality-symmetric reduction
// ---------------------------------------------------------------------------

/// Density per cardinality class, z^k = Σ_{|A|=k} x^A.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    n: u8,
    z: Vec<f64>,
}

impl ReducedState {
    pub fn new(n: u8, z: Vec<f64>) -> Result<Self> {
        labels::check_chunk_count(n)?;
        if z.len() != n as usize + 1 {
            return Err(Error::DimensionMismatch { expected: n as usize + 1, got: z.len() });
        }
        if let Some((i, &v)) = z.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeEntry { index: i, value: v });
        }
        Ok(Self { n, z })
    }

    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }
}

/// Sums densities per label cardinality.
pub fn reduce_symmetric(x: &DensityState) -> ReducedState {
    let n = x.n();
    let mut z = vec![0.0; n as usize + 1];
    for (m, &v) in x.values().iter().enumerate() {
        z[(m as u32).count_ones() as usize] += v;
    }
    ReducedState { n, z }
}

/// Spreads each class total evenly over its C(n,k) labels.
pub fn lift_symmetric(n: u8, z: &[f64]) -> Result<DensityState> {
    let reduced = ReducedState::new(n, z.to_vec())?;
    let mut values = vec![0.0; labels::num_labels(n)];
    let binom = binomials(n);
    for (m, v) in values.iter_mut().enumerate() {
        let k = (m as u32).count_ones() as usize;
        *v = reduced.z[k] / binom[k];
    }
    DensityState::new(n, values)
}

fn binomials(n: u8) -> Vec<f64> {
    let mut b = vec![1.0f64];
    for k in 0..n as usize {
        let next = b[k] * (n as usize - k) as f64 / (k + 1) as f64;
        b.push(next);
    }
    b
}

fn check_class_symmetric(n: u8, values: &[f64], what: &str) -> Result<()> {
    let mut seen: Vec<Option<f64>> = vec![None; n as usize + 1];
    for (m, &v) in values.iter().enumerate() {
        let k = (m as u32).count_ones() as usize;
        match seen[k] {
            None => seen[k] = Some(v),
            Some(first) => {
                if (v - first).abs() > 1e-12 * first.abs().max(1.0) {
                    return Err(Error::SymmetryViolation(format!(
                        "{what} must depend on the label only through its cardinality; \
                         class {k} mixes {first} and {v}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// The reduced vector field V^k(z) = Σ_{|A|=k} v^A(lift(z)); exact when
/// arrivals are cardinality-symmetric.
pub fn reduced_vector_field(params: &ModelParams, z: &ReducedState) -> Result<Vec<f64>> {
    check_class_symmetric(params.n(), params.alpha(), "alpha")?;
    if z.n() != params.n() {
        return Err(Error::ChunkCountMismatch { left: z.n(), right: params.n() });
    }
    let lifted = lift_symmetric(z.n(), &z.z)?;
    let v = fluid::vector_field(params, &lifted)?;
    let mut out = vec![0.0; z.n() as usize + 1];
    for (m, vv) in v.iter().enumerate() {
        out[(m as u32).count_ones() as usize] += vv;
    }
    Ok(out)
}

/// Dense solution of the reduced flow ż = V(z).
#[derive(Clone, Debug)]
pub struct ReducedSolution {
    n: u8,
    sol: OdeSolution,
}

impl ReducedSolution {
    pub fn eval(&self, t: f64) -> ReducedState {
        let mut z = self.sol.eval(t);
        for v in z.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        ReducedState { n: self.n, z }
    }

    /// The symmetric full state the reduced point represents.
    pub fn eval_lifted(&self, t: f64) -> DensityState {
        let z = self.eval(t);
        lift_symmetric(self.n, &z.z).expect("reduced states stay nonnegative")
    }

    pub fn t_end(&self) -> f64 {
        self.sol.t_end()
    }
}

/// Integrates the (n+1)-dimensional reduced dynamics for a
/// cardinality-symmetric model and start. Errors if either the arrivals
/// or the initial state break the symmetry.
pub fn integrate_reduced(
    params: &ModelParams,
    x0: &DensityState,
    t_max: f64,
    opts: &FluidOptions,
) -> Result<ReducedSolution> {
    check_class_symmetric(params.n(), params.alpha(), "alpha")?;
    check_class_symmetric(params.n(), x0.values(), "the initial state")?;
    let n = params.n();
    let z0 = reduce_symmetric(x0);
    let num = labels::num_labels(n);
    let binom = binomials(n);
    let mut lifted = vec![0.0; num];
    let mut v_full = vec![0.0; num];
    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        max_steps: opts.max_steps,
        nonneg_clamp: Some(opts.tol_neg),
        ..Default::default()
    };
    let sol = ode::solve(
        |_t, z, dz| {
            for (m, l) in lifted.iter_mut().enumerate() {
                let k = (m as u32).count_ones() as usize;
                *l = (z[k] / binom[k]).max(0.0);
            }
            fluid::vector_field_into(params, &lifted, &mut v_full);
            dz.fill(0.0);
            for (m, vv) in v_full.iter().enumerate() {
                dz[(m as u32).count_ones() as usize] += vv;
            }
        },
        0.0,
        z0.z(),
        t_max,
        &ode_opts,
    )?;
    Ok(ReducedSolution { n, sol })
}

// ---------------------------------------------------------------------------
// The (x, u, w) reduced two-chunk system
// ---------------------------------------------------------------------------

/// Right-hand side of the two-chunk swap-free system in reduced
/// coordinates (x, u, w) = (have-nothing, one-chunk total, seeds) on the
/// download timescale (time s = βt, ρ = δ/β), with seeds arriving at
/// rate `lambda_seeds`:
///
///   x' = −x(u+w),  u' = −uw + x(u+w),  w' = λ + uw − ρw
pub fn xuw_vector_field(rho: f64, lambda_seeds: f64, y: &[f64; 3]) -> [f64; 3] {
    let (x, u, w) = (y[0], y[1], y[2]);
    [-x * (u + w), -u * w + x * (u + w), lambda_seeds + u * w - rho * w]
}

/// Differential of the reduced field (independent of the arrival term).
pub fn xuw_jacobian(rho: f64, y: &[f64; 3]) -> Matrix3<f64> {
    let (x, u, w) = (y[0], y[1], y[2]);
    Matrix3::new(
        -(u + w),
        -x,
        -x,
        u + w,
        x - w,
        x - u,
        0.0,
        w,
        u - rho,
    )
}

/// Eigenvalues of the reduced Jacobian, sorted by descending real part.
pub fn xuw_eigenvalues(rho: f64, y: &[f64; 3]) -> Vec<(f64, f64)> {
    let m = xuw_jacobian(rho, y);
    let dm = DMatrix::from_fn(3, 3, |i, j| m[(i, j)]);
    sorted_eigenvalues(&dm)
}

/// Integrates the reduced system from `y0` up to `t_max` (scaled time).
pub fn integrate_xuw(
    rho: f64,
    lambda_seeds: f64,
    y0: &[f64; 3],
    t_max: f64,
    opts: &FluidOptions,
) -> Result<OdeSolution> {
    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        max_steps: opts.max_steps,
        nonneg_clamp: Some(opts.tol_neg),
        ..Default::default()
    };
    ode::solve(
        |_t, y, dy| {
            let v = xuw_vector_field(rho, lambda_seeds, &[y[0], y[1], y[2]]);
            dy.copy_from_slice(&v);
        },
        0.0,
        y0,
        t_max,
        &ode_opts,
    )
}

/// Stationary point (0, 0, λ/ρ) of the seeded system.
pub fn xuw_seeded_equilibrium(rho: f64, lambda_seeds: f64) -> Vector3<f64> {
    Vector3::new(0.0, 0.0, lambda_seeds / rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_chunk_equilibrium_values() {
        let eq = equilibrium_n1_open(5.0, 3.0, 4.0).unwrap();
        assert!((eq.x_star - 4.0 / 3.0).abs() < 1e-15);
        assert!((eq.y_star - 1.25).abs() < 1e-15);
        assert!(eq.spiral); // 15 < 64

        // boundary λβ = 4δ² counts as non-spiral
        let boundary = equilibrium_n1_open(4.0, 1.0, 1.0).unwrap();
        assert!(!boundary.spiral);

        assert!(equilibrium_n1_open(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn single_chunk_equilibrium_zeroes_the_field() {
        let (lambda, beta, delta) = (5.0, 3.0, 4.0);
        let eq = equilibrium_n1_open(lambda, beta, delta).unwrap();
        let p = ModelParams::new(1, vec![lambda, 0.0], beta, 0.0, delta).unwrap();
        let x = DensityState::new(1, vec![eq.x_star, eq.y_star]).unwrap();
        let v = fluid::vector_field(&p, &x).unwrap();
        assert!(v.iter().all(|a| a.abs() < 1e-14));
    }

    #[test]
    fn two_chunk_equilibrium_zeroes_the_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let lambda = 0.2 + rng.random::<f64>() * 3.0;
            let beta_split = 0.2 + rng.random::<f64>() * 3.0;
            let gamma_split = 0.2 + rng.random::<f64>() * 3.0;
            let delta = 0.2 + rng.random::<f64>() * 3.0;
            let x = equilibrium_n2_open(lambda, beta_split, gamma_split, delta).unwrap();
            let p =
                ModelParams::new(2, vec![lambda, 0.0, 0.0, 0.0], beta_split, gamma_split, delta)
                    .unwrap();
            let v = fluid::vector_field(&p, &x).unwrap();
            let res: f64 = v.iter().map(|a| a.abs()).sum();
            assert!(res < 1e-10, "residual {res}");
            // fewer have-nothing peers than the no-swap bound
            assert!(x.values()[0] < delta / beta_split);
        }
    }

    #[test]
    fn two_chunk_equilibrium_large_swap_rate_limit() {
        let u_small = equilibrium_n2_open(1.0, 1.0, 1e6, 1.0).unwrap();
        assert!(u_small.values()[1] + u_small.values()[2] < 1e-2);
    }

    #[test]
    fn general_solver_recovers_single_chunk_equilibrium() {
        let (lambda, beta, delta) = (5.0, 3.0, 4.0);
        let p = ModelParams::new(1, vec![lambda, 0.0], beta, 0.0, delta).unwrap();
        let guess = DensityState::new(1, vec![2.0, 2.0]).unwrap();
        let report = find_equilibrium_general(&p, &guess).unwrap();
        assert!(report.residual <= RESIDUAL_TOL);
        assert!((report.x_star.values()[0] - delta / beta).abs() < 1e-10);
        assert!((report.x_star.values()[1] - lambda / delta).abs() < 1e-10);
        assert_eq!(report.stability, Stability::Stable);
        assert!(report.spiral);
    }

    #[test]
    fn general_solver_at_an_absorbing_family() {
        // conservative: every all-seeds state is stationary; guess already solves
        let p = ModelParams::closed(2, 1.0, 0.4, 0.0).unwrap();
        let guess = DensityState::concentrated(&crate::ChunkLabel::full(2).unwrap(), 0.7).unwrap();
        let report = find_equilibrium_general(&p, &guess).unwrap();
        assert_eq!(report.residual, 0.0);
        assert_eq!(report.stability, Stability::Marginal);
    }

    #[test]
    fn settling_time_root_properties() {
        let (x0, w0, eps) = (0.3, 0.1, 1e-3);
        for beta in [1.0, 2.0, 3.0, 4.0, 5.0] {
            let tau = settling_time_case1(x0, w0, beta, eps).unwrap();
            // residual of the transcendental equation
            let lhs = (1.0 - w0) / w0 + x0 * beta * tau;
            let rhs = eps / (1.0 - eps) * (x0 + (1.0 - x0) * (beta * tau).exp());
            assert!((lhs - rhs).abs() < 1e-7 * rhs.abs().max(1.0));
            // definitional check via the closed form
            let (_, _, w) = fluid::closed_form_case1(x0, 1.0 - x0 - w0, w0, beta, tau).unwrap();
            assert!((w - (1.0 - eps)).abs() < 1e-8, "beta={beta}: w(tau)={w}");
        }
        // decreasing in beta
        let taus: Vec<f64> = [1.0, 2.0, 3.0, 4.0, 5.0]
            .iter()
            .map(|&b| settling_time_case1(x0, w0, b, eps).unwrap())
            .collect();
        for pair in taus.windows(2) {
            assert!(pair[1] < pair[0]);
        }
    }

    #[test]
    fn settling_time_degenerate_inputs() {
        assert_eq!(settling_time_case1(0.0, 0.9995, 1.0, 1e-3).unwrap(), 0.0);
        // x0 = 0 admits a closed-form root
        let tau = settling_time_case1(0.0, 0.1, 2.0, 1e-3).unwrap();
        let expect = ((1.0f64 - 1e-3) / 1e-3 * (1.0 - 0.1) / 0.1).ln() / 2.0;
        assert!((tau - expect).abs() < 1e-8, "{tau} vs {expect}");
        assert!(settling_time_case1(0.3, 0.0, 1.0, 1e-3).is_err());
        assert!(settling_time_case1(0.3, 0.1, 1.0, 1.5).is_err());
    }

    #[test]
    fn lower_bound_basics() {
        assert_eq!(settling_lower_bound(2.0, 1.0, 2.9, 0.1, 4.0).unwrap(), 0.0);
        let b1 = settling_lower_bound(5.0, 5.0, 2.58, 0.1, 4.0).unwrap();
        let b2 = settling_lower_bound(15.0, 5.0, 2.58, 0.1, 4.0).unwrap();
        assert!(b2 > b1);
        // doubling the numerator adds (log 2)/δ
        let b3 = settling_lower_bound(2.0 * (5.0 + 5.0) - 5.0, 5.0, 2.58, 0.1, 4.0).unwrap();
        assert!((b3 - b1 - 2.0f64.ln() / 4.0).abs() < 1e-12);
        assert!(settling_lower_bound(1.0, 1.0, 1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn v_plus_two_chunks() {
        let p = ModelParams::closed(2, 1.5, 0.7, 1.0).unwrap();
        let x = DensityState::new(2, vec![0.3, 0.2, 0.4, 0.1]).unwrap();
        let got = v_plus_f(&p, &x).unwrap();
        let want = 1.5 * 0.1 * (0.2 + 0.4) + 2.0 * 0.7 * 0.2 * 0.4;
        assert!((got - want).abs() < 1e-15);

        // vanishes whenever x^F and all x^{F−j} are zero
        let x0 = DensityState::new(2, vec![0.9, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v_plus_f(&p, &x0).unwrap(), 0.0);
    }

    #[test]
    fn upper_bound_guards() {
        assert!(matches!(
            settling_upper_bound(0.5, 2.0, 1.0, 0.1),
            Err(Error::BoundInapplicable { .. })
        ));
        assert_eq!(settling_upper_bound(0.1, 0.2, 1.0, 0.1).unwrap(), 0.0);
        let tau = settling_upper_bound(0.4, 0.05, 1.0, 0.1).unwrap();
        assert!((tau - (0.4f64 / 0.1).ln() / 0.95).abs() < 1e-12);
    }

    #[test]
    fn reduce_lift_round_trip() {
        let x = lift_symmetric(3, &[0.3, 0.6, 0.3, 0.1]).unwrap();
        let z = reduce_symmetric(&x);
        assert_eq!(z.z().len(), 4);
        for (a, b) in z.z().iter().zip([0.3, 0.6, 0.3, 0.1]) {
            assert!((a - b).abs() < 1e-15);
        }
        let x2 = lift_symmetric(3, z.z()).unwrap();
        assert_eq!(x.values(), x2.values());
    }

    #[test]
    fn reduced_flow_matches_full_flow_for_symmetric_input() {
        let p = ModelParams::new(2, vec![0.4, 0.1, 0.1, 0.2], 1.2, 0.8, 0.9).unwrap();
        let x0 = lift_symmetric(2, &[0.5, 0.4, 0.2]).unwrap();
        let opts = FluidOptions::default();
        let full = fluid::integrate(&p, &x0, 6.0, &opts).unwrap();
        let reduced = integrate_reduced(&p, &x0, 6.0, &opts).unwrap();
        for i in 0..=60 {
            let t = 6.0 * i as f64 / 60.0;
            let zf = reduce_symmetric(&full.eval(t));
            let zr = reduced.eval(t);
            let err: f64 = zf.z().iter().zip(zr.z()).map(|(a, b)| (a - b).abs()).sum();
            assert!(err < 1e-8, "t={t}: {err}");
        }
    }

    #[test]
    fn reduced_flow_rejects_asymmetric_inputs() {
        let p = ModelParams::new(2, vec![0.4, 0.3, 0.1, 0.2], 1.2, 0.8, 0.9).unwrap();
        let x0 = lift_symmetric(2, &[0.5, 0.4, 0.2]).unwrap();
        assert!(matches!(
            integrate_reduced(&p, &x0, 2.0, &FluidOptions::default()),
            Err(Error::SymmetryViolation(_))
        ));

        let p_ok = ModelParams::new(2, vec![0.4, 0.1, 0.1, 0.2], 1.2, 0.8, 0.9).unwrap();
        let x_bad = DensityState::new(2, vec![0.5, 0.3, 0.1, 0.2]).unwrap();
        assert!(integrate_reduced(&p_ok, &x_bad, 2.0, &FluidOptions::default()).is_err());
    }

    #[test]
    fn xuw_matches_full_two_chunk_flow() {
        // β = 1 makes scaled and plain time coincide; γ = 0, δ = ρ
        let rho = 0.5;
        let p = ModelParams::closed(2, 1.0, 0.0, rho).unwrap();
        let y0 = [0.3, 0.45, 0.25];
        let x0 = DensityState::new(2, vec![y0[0], y0[1] / 2.0, y0[1] / 2.0, y0[2]]).unwrap();
        let opts = FluidOptions::default();
        let full = fluid::integrate(&p, &x0, 8.0, &opts).unwrap();
        let red = integrate_xuw(rho, 0.0, &y0, 8.0, &opts).unwrap();
        for i in 0..=40 {
            let t = 8.0 * i as f64 / 40.0;
            let f = full.eval(t);
            let r = red.eval(t);
            assert!((f.values()[0] - r[0]).abs() < 1e-8);
            assert!((f.values()[1] + f.values()[2] - r[1]).abs() < 1e-8);
            assert!((f.values()[3] - r[2]).abs() < 1e-8);
        }
    }

    #[test]
    fn xuw_stationary_spectrum() {
        // at (0, u, 0) the spectrum is {0, −u, u−ρ}
        for (u, rho) in [(0.3, 0.5), (0.8, 0.5), (0.2, 1.5)] {
            let eigs = xuw_eigenvalues(rho, &[0.0, u, 0.0]);
            let mut got: Vec<f64> = eigs.iter().map(|e| e.0).collect();
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut want = vec![0.0, -u, u - rho];
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "u={u} rho={rho}: {got:?} vs {want:?}");
            }
            assert!(eigs.iter().all(|e| e.1.abs() < 1e-12));
        }
    }
}
