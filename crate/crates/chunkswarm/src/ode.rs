//! Adaptive explicit Runge-Kutta integration with dense output.
//!
//! A Dormand-Prince 5(4) pair: fifth-order propagation, embedded
//! fourth-order error estimate, and a fourth-order continuous extension
//! built from the stage derivatives of each accepted step. The vector
//! fields integrated here are quadratic, hence smooth and non-stiff at
//! the parameter scales of interest.

use crate::error::{Error, Result};

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// b5 - b4: coefficients of the embedded error estimate.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output weights for the quartic continuous extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Integration controls. `nonneg_clamp` enables orthant policing: entries
/// in (-tol, 0) after a step are clamped to zero and counted, anything
/// below -tol aborts (the exact flows preserve the orthant, so a larger
/// excursion signals a misconfigured integration).
#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    pub nonneg_clamp: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            h_init: None,
            h_max: None,
            max_steps: 10_000_000,
            nonneg_clamp: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OdeStats {
    pub steps: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    pub clamped: u64,
    pub rtol: f64,
    pub atol: f64,
}

/// One accepted step's interpolation data.
#[derive(Clone, Debug)]
struct DenseSegment {
    t: f64,
    h: f64,
    // quartic coefficients per component, Horner form in (θ, 1-θ)
    cont: [Vec<f64>; 5],
}

impl DenseSegment {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t) / self.h;
        let om = 1.0 - th;
        for i in 0..out.len() {
            out[i] = self.cont[0][i]
                + th * (self.cont[1][i]
                    + om * (self.cont[2][i] + th * (self.cont[3][i] + om * self.cont[4][i])));
        }
    }
}

/// Dense solution of an initial value problem on [t0, t_end].
#[derive(Clone, Debug)]
pub struct OdeSolution {
    t0: f64,
    t_end: f64,
    ts: Vec<f64>,
    ys: Vec<Vec<f64>>,
    segments: Vec<DenseSegment>,
    stats: OdeStats,
}

impl OdeSolution {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Accepted step times (including t0).
    pub fn times(&self) -> &[f64] {
        &self.ts
    }

    /// States at the accepted steps.
    pub fn states(&self) -> &[Vec<f64>] {
        &self.ys
    }

    pub fn final_state(&self) -> &[f64] {
        self.ys.last().expect("solution holds at least the initial state")
    }

    pub fn stats(&self) -> OdeStats {
        self.stats
    }

    pub fn dim(&self) -> usize {
        self.ys[0].len()
    }

    /// Interpolated state at `t` (clamped to the solved interval).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if self.segments.is_empty() {
            out.copy_from_slice(&self.ys[0]);
            return;
        }
        let t = t.clamp(self.t0, self.t_end);
        let idx = match self
            .segments
            .binary_search_by(|seg| seg.t.partial_cmp(&t).expect("finite times"))
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        self.segments[idx].eval_into(t, out);
    }

    /// Interpolated states on a caller-supplied grid.
    pub fn eval_grid(&self, grid: &[f64]) -> Vec<Vec<f64>> {
        grid.iter().map(|&t| self.eval(t)).collect()
    }
}

/// Integrates dy/dt = f(t, y) from t0 to t_end.
pub fn solve<F>(mut f: F, t0: f64, y0: &[f64], t_end: f64, opts: &OdeOptions) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(t_end > t0) {
        return Err(Error::InvalidParams(format!(
            "integration horizon must exceed the start time ({t_end} <= {t0})"
        )));
    }
    let dim = y0.len();
    let mut stats = OdeStats { rtol: opts.rtol, atol: opts.atol, ..Default::default() };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut y_stage = vec![0.0; dim];
    let mut y_next = vec![0.0; dim];

    f(t, &y, &mut k[0]);
    stats.rhs_evals += 1;

    let span = t_end - t0;
    let h_cap = opts.h_max.unwrap_or(span).min(span);
    let mut h = opts.h_init.unwrap_or(1e-3 * span).min(h_cap);
    let h_floor = (t_end - t0) * f64::EPSILON * 16.0;

    let mut ts = vec![t];
    let mut ys = vec![y.clone()];
    let mut segments: Vec<DenseSegment> = Vec::new();
    let mut k1_stale = false;

    while t < t_end {
        if stats.steps as usize >= opts.max_steps {
            return Err(Error::StepLimitExceeded(opts.max_steps));
        }
        if h < h_floor {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        h = h.min(t_end - t).min(h_cap);

        if k1_stale {
            f(t, &y, &mut k[0]);
            stats.rhs_evals += 1;
            k1_stale = false;
        }

        // stages 2..=6, then the FSAL stage 7 at the new point
        let a_rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, a_row) in a_rows.iter().enumerate() {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, &a) in a_row.iter().enumerate() {
                    acc += a * k[j][i];
                }
                y_stage[i] = y[i] + h * acc;
            }
            f(t + C[s + 1] * h, &y_stage, &mut k[s + 1]);
            stats.rhs_evals += 1;
        }
        for i in 0..dim {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += B5[j] * k[j][i];
            }
            y_next[i] = y[i] + h * acc;
        }
        f(t + h, &y_next, &mut k[6]);
        stats.rhs_evals += 1;

        // embedded error, RMS-scaled
        let mut err_sq = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for j in 0..7 {
                e += E[j] * k[j][i];
            }
            e *= h;
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_next[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / dim as f64).sqrt();

        if err <= 1.0 {
            // accept: build the continuous extension before moving on
            let mut cont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; dim]);
            for i in 0..dim {
                let ydiff = y_next[i] - y[i];
                let bspl = h * k[0][i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k[6][i] - bspl;
                let mut d_acc = 0.0;
                for j in 0..7 {
                    d_acc += D[j] * k[j][i];
                }
                cont[4][i] = h * d_acc;
            }
            segments.push(DenseSegment { t, h, cont });

            t += h;
            std::mem::swap(&mut y, &mut y_next);

            if let Some(tol_neg) = opts.nonneg_clamp {
                let min = y.iter().copied().fold(f64::INFINITY, f64::min);
                if min < -tol_neg {
                    return Err(Error::NegativityExceeded { t, min });
                }
                if min < 0.0 {
                    for v in y.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                            stats.clamped += 1;
                        }
                    }
                    k1_stale = true; // FSAL derivative was taken at the unclamped point
                }
            }
            if !k1_stale {
                k.swap(0, 6); // FSAL: stage-7 derivative becomes next k1
            }
            stats.steps += 1;
            ts.push(t);
            ys.push(y.clone());
        } else {
            stats.rejected += 1;
        }

        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
    }

    Ok(OdeSolution { t0, t_end, ts, ys, segments, stats })
}
