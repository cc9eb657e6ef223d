//! Gaussian correction about the fluid path.
//!
//! The centred, √N-scaled deviation of the jump chain from the fluid
//! trajectory converges to the linear time-inhomogeneous diffusion
//!
//!   dY = Dv(x_t) Y dt + Σ_ζ ζ √(Q_ζ(x_t)) dW_ζ,
//!
//! one independent scalar Brownian motion per jump vector. Two
//! computations of its second moments are kept side by side: an
//! Euler-Maruyama ensemble and the deterministic covariance ODE
//! Σ' = Dv Σ + Σ Dvᵀ + Σ_ζ ζζᵀ Q_ζ(x_t). The ODE is the validation
//! anchor (tolerance-controlled); the ensemble and the rescaled chain
//! itself are checked against it.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fluid::{self, DensityState, FluidOptions};
use crate::model::{JumpSet, ModelParams};
use crate::ode::{self, OdeOptions};
use crate::stochastic::{self, RecordPolicy, SimConfig};

/// Ensemble moments of a simulated diffusion.
#[derive(Clone, Debug)]
pub struct DiffusionEnsemble {
    pub t_grid: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub cov: Vec<DMatrix<f64>>,
    pub n_paths: usize,
}

/// Empirical fluctuation moments of the N-scaled chain,
/// Y = √N (X_{N,t}/N − x_t).
#[derive(Clone, Debug)]
pub struct FluctuationSample {
    pub t_grid: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    /// Symmetrized sample covariances per grid time.
    pub cov: Vec<DMatrix<f64>>,
    pub n_scale: u64,
    pub n_replicas: usize,
}

fn moments_from_samples(dim: usize, samples: &[Vec<Vec<f64>>]) -> (Vec<Vec<f64>>, Vec<DMatrix<f64>>) {
    let n_grid = samples[0].len();
    let n = samples.len() as f64;
    let mut means = vec![vec![0.0; dim]; n_grid];
    let mut covs = vec![DMatrix::zeros(dim, dim); n_grid];
    for path in samples {
        for (g, y) in path.iter().enumerate() {
            for i in 0..dim {
                means[g][i] += y[i];
            }
        }
    }
    for mean in means.iter_mut() {
        for m in mean.iter_mut() {
            *m /= n;
        }
    }
    for path in samples {
        for (g, y) in path.iter().enumerate() {
            for i in 0..dim {
                for j in 0..dim {
                    covs[g][(i, j)] += (y[i] - means[g][i]) * (y[j] - means[g][j]);
                }
            }
        }
    }
    for cov in covs.iter_mut() {
        *cov /= n - 1.0;
        let sym = (cov.clone() + cov.transpose()) * 0.5;
        *cov = sym;
    }
    (means, covs)
}

/// Euler-Maruyama ensemble for Y started at 0 (the theorem's centring),
/// reported at the requested grid times. The fluid path, its Jacobian and
/// the per-jump noise amplitudes are precomputed per step and shared by
/// all paths.
#[allow(clippy::too_many_arguments)]
pub fn simulate_diffusion(
    params: &ModelParams,
    jumps: &JumpSet,
    x0: &DensityState,
    t_max: f64,
    n_paths: usize,
    dt: f64,
    t_grid: &[f64],
    seed: u64,
) -> Result<DiffusionEnsemble> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    if n_paths < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 paths, got {n_paths}")));
    }
    if t_grid.iter().any(|&t| t < 0.0 || t > t_max) {
        return Err(Error::InvalidParams("grid times must lie in [0, t_max]".to_string()));
    }
    let dim = params.num_labels();
    let fluid_sol = fluid::integrate(params, x0, t_max, &FluidOptions::default())?;

    let n_steps = (t_max / dt).ceil().max(1.0) as usize;
    let dt = t_max / n_steps as f64;
    // per-step coefficients at the left endpoint
    let mut jacs = Vec::with_capacity(n_steps);
    let mut amps: Vec<Vec<f64>> = Vec::with_capacity(n_steps);
    for k in 0..n_steps {
        let xt = fluid_sol.eval(k as f64 * dt);
        jacs.push(fluid::jacobian(params, &xt)?);
        amps.push(
            jumps
                .iter()
                .map(|j| (j.rate().eval(xt.values()).max(0.0) * dt).sqrt())
                .collect(),
        );
    }
    // map each grid time to the step boundary it falls on
    let grid_steps: Vec<usize> =
        t_grid.iter().map(|&t| ((t / dt).round() as usize).min(n_steps)).collect();

    let deltas: Vec<Vec<i32>> = jumps.iter().map(|j| j.delta_dense(dim)).collect();
    let samples: Vec<Vec<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = stochastic::replica_rng(seed, path as u64, 0);
            let mut y = vec![0.0; dim];
            let mut dy = vec![0.0; dim];
            let mut recorded = vec![vec![0.0; dim]; grid_steps.len()];
            for (g, &gs) in grid_steps.iter().enumerate() {
                if gs == 0 {
                    recorded[g].copy_from_slice(&y);
                }
            }
            for k in 0..n_steps {
                let jac = &jacs[k];
                for i in 0..dim {
                    let mut acc = 0.0;
                    for j in 0..dim {
                        acc += jac[(i, j)] * y[j];
                    }
                    dy[i] = acc * dt;
                }
                for (amp, delta) in amps[k].iter().zip(&deltas) {
                    if *amp > 0.0 {
                        let w: f64 = rng.sample(StandardNormal);
                        let kick = amp * w;
                        for (i, &d) in delta.iter().enumerate() {
                            if d != 0 {
                                dy[i] += f64::from(d) * kick;
                            }
                        }
                    }
                }
                for i in 0..dim {
                    y[i] += dy[i];
                }
                for (g, &gs) in grid_steps.iter().enumerate() {
                    if gs == k + 1 {
                        recorded[g].copy_from_slice(&y);
                    }
                }
            }
            recorded
        })
        .collect();

    let (mean, cov) = moments_from_samples(dim, &samples);
    Ok(DiffusionEnsemble { t_grid: t_grid.to_vec(), mean, cov, n_paths })
}

/// Deterministic second moments of Y: integrates
/// Σ' = Dv(x_t) Σ + Σ Dv(x_t)ᵀ + Σ_ζ ζζᵀ Q_ζ(x_t) from Σ(0) = 0 and
/// returns Σ at the grid times. The mean of Y is identically zero for
/// the zero start, so only the covariance is produced.
pub fn moment_ode_covariances(
    params: &ModelParams,
    jumps: &JumpSet,
    x0: &DensityState,
    t_max: f64,
    t_grid: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    let dim = params.num_labels();
    let fluid_sol = fluid::integrate(params, x0, t_max, &FluidOptions::default())?;
    let deltas: Vec<Vec<i32>> = jumps.iter().map(|j| j.delta_dense(dim)).collect();

    let mut xt_buf = vec![0.0; dim];
    let opts = OdeOptions { rtol: 1e-10, atol: 1e-13, ..Default::default() };
    let sol = ode::solve(
        |t, s, ds| {
            fluid_sol.eval_raw_into(t, &mut xt_buf);
            for v in xt_buf.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let xt = DensityState::new(params.n(), xt_buf.clone()).expect("clamped state");
            let jac = fluid::jacobian(params, &xt).expect("dimensions fixed");
            // ds = J S + S Jᵀ + G
            for i in 0..dim {
                for j in 0..dim {
                    let mut acc = 0.0;
                    for k in 0..dim {
                        acc += jac[(i, k)] * s[k * dim + j] + s[i * dim + k] * jac[(j, k)];
                    }
                    ds[i * dim + j] = acc;
                }
            }
            for (jump, delta) in jumps.iter().zip(&deltas) {
                let q = jump.rate().eval(&xt_buf).max(0.0);
                if q > 0.0 {
                    for (i, &di) in delta.iter().enumerate() {
                        if di != 0 {
                            for (j, &dj) in delta.iter().enumerate() {
                                if dj != 0 {
                                    ds[i * dim + j] += f64::from(di) * f64::from(dj) * q;
                                }
                            }
                        }
                    }
                }
            }
        },
        0.0,
        &vec![0.0; dim * dim],
        t_max,
        &opts,
    )?;

    Ok(t_grid
        .iter()
        .map(|&t| {
            let flat = sol.eval(t);
            DMatrix::from_fn(dim, dim, |i, j| flat[i * dim + j])
        })
        .collect())
}

/// Empirical fluctuations of the N-scaled chain about the fluid path:
/// runs SSA replicas of BITTORRENT[round(N x0), n, Nα, β/N, γ/N, δ] and
/// returns the moments of √N (X_{N,t}/N − x_t) on the grid.
pub fn empirical_fluctuations(
    params: &ModelParams,
    x0: &DensityState,
    n_scale: u64,
    n_replicas: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<FluctuationSample> {
    if n_replicas < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 replicas, got {n_replicas}")));
    }
    let t_max = t_grid.iter().copied().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let dim = params.num_labels();
    let fluid_sol = fluid::integrate(params, x0, t_max, &FluidOptions::default())?;
    let fluid_at_grid: Vec<Vec<f64>> =
        t_grid.iter().map(|&t| fluid_sol.eval(t).values().to_vec()).collect();

    let scaled = params.scaled(n_scale as f64)?;
    let jumps = JumpSet::build(&scaled)?;
    let x0_counts = stochastic::round_density(x0, n_scale);
    let sqrt_n = (n_scale as f64).sqrt();
    let inv_n = 1.0 / n_scale as f64;

    let samples: Vec<Vec<Vec<f64>>> = (0..n_replicas)
        .into_par_iter()
        .map(|replica| {
            let cfg = SimConfig {
                seed,
                t_max,
                max_events: u64::MAX,
                record: RecordPolicy::EveryEvent,
            };
            let traj =
                stochastic::simulate_ssa_with_stream(&scaled, &jumps, &x0_counts, &cfg, replica as u64)
                    .expect("validated inputs");
            t_grid
                .iter()
                .zip(&fluid_at_grid)
                .map(|(&t, ft)| {
                    // right-continuous state at time t
                    let idx = match traj
                        .times
                        .binary_search_by(|probe| probe.partial_cmp(&t).expect("finite times"))
                    {
                        Ok(i) => i,
                        Err(0) => 0,
                        Err(i) => i - 1,
                    };
                    let state = traj.state_at(idx);
                    (0..dim)
                        .map(|i| sqrt_n * (state[i] as f64 * inv_n - ft[i]))
                        .collect::<Vec<f64>>()
                })
                .collect()
        })
        .collect();

    let (mean, cov) = moments_from_samples(dim, &samples);
    Ok(FluctuationSample { t_grid: t_grid.to_vec(), mean, cov, n_scale, n_replicas })
}

/// Standard error of a Gaussian sample-covariance entry, used to judge
/// ensemble-vs-ODE agreement.
pub fn covariance_entry_se(cov: &DMatrix<f64>, i: usize, j: usize, n_samples: usize) -> f64 {
    ((cov[(i, i)] * cov[(j, j)] + cov[(i, j)] * cov[(i, j)]) / n_samples as f64).sqrt()
}
