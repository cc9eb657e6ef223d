//! Exact stochastic simulation of the swarm chain.
//!
//! Two statistically equivalent drivers are provided: the direct method
//! (exponential holding time at the total rate, then a rate-proportional
//! event draw) and a random-time-change form that runs one unit-rate
//! Poisson clock per jump vector on its integrated-rate timescale. The
//! agent-tagged variant replays the direct method while tracking
//! individual peers for sojourn statistics, drawing the affected peers
//! uniformly among those sharing the label. Rates are recomputed in full
//! after every event; jump sets at the chunk counts of interest are small
//! enough that a dependency graph would not pay for itself.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fluid::{self, DensityState, FluidOptions};
use crate::labels::{self, ChunkLabel};
use crate::model::{JumpKind, JumpSet, JumpVector, ModelParams, PopulationState};

/// Substream discipline: every consumer of randomness gets its own ChaCha
/// stream derived from (seed, replica), so replicas are reproducible
/// regardless of scheduling and the agent layer never perturbs the
/// population path.
const STREAMS_PER_REPLICA: u64 = 2;

pub(crate) fn replica_rng(seed: u64, replica: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica * STREAMS_PER_REPLICA + lane);
    rng
}

/// Sampling policy for trajectory recording.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RecordPolicy {
    EveryEvent,
    FixedGrid { dt: f64 },
}

/// Simulation controls.
#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub seed: u64,
    pub t_max: f64,
    pub max_events: u64,
    pub record: RecordPolicy,
}

impl SimConfig {
    pub fn new(seed: u64, t_max: f64) -> Self {
        Self { seed, t_max, max_events: u64::MAX, record: RecordPolicy::EveryEvent }
    }

    pub fn with_grid(mut self, dt: f64) -> Self {
        self.record = RecordPolicy::FixedGrid { dt };
        self
    }

    pub fn with_max_events(mut self, cap: u64) -> Self {
        self.max_events = cap;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) {
            return Err(Error::InvalidParams(format!("t_max must be positive, got {}", self.t_max)));
        }
        if let RecordPolicy::FixedGrid { dt } = self.record {
            if !(dt > 0.0) {
                return Err(Error::InvalidParams(format!("grid dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

/// Why a simulation ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Horizon,
    Absorbed,
    EventCap,
}

/// One recorded trajectory. States are stored flat (row-major, one row of
/// 2^n counts per recorded time) for contiguous access.
#[derive(Clone, Debug)]
pub struct TrajectorySample {
    n: u8,
    pub times: Vec<f64>,
    states: Vec<u64>,
    pub stop_reason: StopReason,
    end_time: f64,
    pub events: u64,
}

impl TrajectorySample {
    pub fn n(&self) -> u8 {
        self.n
    }

    pub fn num_labels(&self) -> usize {
        labels::num_labels(self.n)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_at(&self, i: usize) -> &[u64] {
        let w = self.num_labels();
        &self.states[i * w..(i + 1) * w]
    }

    pub fn final_state(&self) -> &[u64] {
        self.state_at(self.len() - 1)
    }

    /// Time up to which the sample is authoritative (the horizon, or the
    /// time of absorption / the event cap).
    pub fn end_time(&self) -> f64 {
        self.end_time
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, &[u64])> {
        self.times.iter().copied().zip(self.states.chunks_exact(self.num_labels()))
    }
}

struct Recorder {
    policy: RecordPolicy,
    times: Vec<f64>,
    states: Vec<u64>,
    next_grid: f64,
    grid_idx: u64,
}

impl Recorder {
    fn new(policy: RecordPolicy, x0: &PopulationState) -> Self {
        let mut r =
            Recorder { policy, times: Vec::new(), states: Vec::new(), next_grid: 0.0, grid_idx: 0 };
        r.times.push(0.0);
        r.states.extend_from_slice(x0.counts());
        if let RecordPolicy::FixedGrid { dt } = policy {
            r.grid_idx = 1;
            r.next_grid = dt;
        }
        r
    }

    /// Called just before the state changes at `t_event`: the current
    /// (pre-event) counts are the right-continuous value on [prev, t_event).
    fn before_event(&mut self, t_event: f64, current: &PopulationState) {
        if let RecordPolicy::FixedGrid { dt } = self.policy {
            while self.next_grid < t_event {
                self.times.push(self.next_grid);
                self.states.extend_from_slice(current.counts());
                self.grid_idx += 1;
                self.next_grid = self.grid_idx as f64 * dt;
            }
        }
    }

    fn after_event(&mut self, t_event: f64, current: &PopulationState) {
        if matches!(self.policy, RecordPolicy::EveryEvent) {
            self.times.push(t_event);
            self.states.extend_from_slice(current.counts());
        }
    }

    fn finish(
        mut self,
        n: u8,
        end_time: f64,
        current: &PopulationState,
        stop_reason: StopReason,
        events: u64,
    ) -> TrajectorySample {
        if let RecordPolicy::FixedGrid { dt } = self.policy {
            while self.next_grid <= end_time {
                self.times.push(self.next_grid);
                self.states.extend_from_slice(current.counts());
                self.grid_idx += 1;
                self.next_grid = self.grid_idx as f64 * dt;
            }
        }
        TrajectorySample {
            n,
            times: self.times,
            states: self.states,
            stop_reason,
            end_time,
            events,
        }
    }
}

fn check_inputs(params: &ModelParams, jumps: &JumpSet, x0: &PopulationState) -> Result<()> {
    if jumps.n() != params.n() {
        return Err(Error::ChunkCountMismatch { left: jumps.n(), right: params.n() });
    }
    if x0.n() != params.n() {
        return Err(Error::ChunkCountMismatch { left: x0.n(), right: params.n() });
    }
    Ok(())
}

#[inline]
fn exp_variate(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Direct-method core shared by the plain and agent-tagged simulators.
fn run_direct<F>(
    params: &ModelParams,
    jumps: &JumpSet,
    x0: &PopulationState,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    mut observe: F,
) -> Result<TrajectorySample>
where
    F: FnMut(f64, &JumpVector),
{
    check_inputs(params, jumps, x0)?;
    cfg.validate()?;

    let mut x = x0.clone();
    let mut t = 0.0;
    let mut events = 0u64;
    let mut rates = vec![0.0f64; jumps.len()];
    let mut recorder = Recorder::new(cfg.record, &x);

    loop {
        let mut total = 0.0;
        for (r, j) in rates.iter_mut().zip(jumps.iter()) {
            *r = j.rate().eval_counts(x.counts());
            total += *r;
        }
        if total <= 0.0 {
            return Ok(recorder.finish(params.n(), t, &x, StopReason::Absorbed, events));
        }

        let t_next = t + exp_variate(rng, total);
        if t_next > cfg.t_max {
            recorder.before_event(cfg.t_max + f64::EPSILON, &x); // flush grid to the horizon
            return Ok(recorder.finish(params.n(), cfg.t_max, &x, StopReason::Horizon, events));
        }

        let mut u = rng.random::<f64>() * total;
        let mut chosen = jumps.len() - 1;
        for (i, &r) in rates.iter().enumerate() {
            u -= r;
            if u < 0.0 {
                chosen = i;
                break;
            }
        }
        // guard against roundoff pushing u past the last positive rate
        while rates[chosen] == 0.0 {
            chosen -= 1;
        }

        recorder.before_event(t_next, &x);
        let jump = &jumps.jumps()[chosen];
        x.apply(jump.delta());
        t = t_next;
        events += 1;
        observe(t, jump);
        recorder.after_event(t, &x);

        if events >= cfg.max_events {
            return Ok(recorder.finish(params.n(), t, &x, StopReason::EventCap, events));
        }
    }
}

/// Statistically exact realization of the chain by the direct method.
/// Identical (seed, inputs) give bit-identical output.
pub fn simulate_ssa(
    params: &ModelParams,
    jumps: &JumpSet,
    x0: &PopulationState,
    cfg: &SimConfig,
) -> Result<TrajectorySample> {
    let mut rng = replica_rng(cfg.seed, 0, 0);
    run_direct(params, jumps, x0, cfg, &mut rng, |_, _| {})
}

/// Random-time-change realization: one independent unit-rate Poisson
/// clock per jump vector, each run on its own integrated-rate timescale.
/// Between events all rates are constant, so the next firing of clock ζ
/// is (remaining exponential work)/Q_ζ(x) away; the earliest clock wins.
/// Distributionally identical to [`simulate_ssa`], not pathwise.
pub fn simulate_time_change(
    params: &ModelParams,
    jumps: &JumpSet,
    x0: &PopulationState,
    cfg: &SimConfig,
) -> Result<TrajectorySample> {
    simulate_time_change_with_stream(params, jumps, x0, cfg, 0)
}

/// [`simulate_time_change`] on an explicit replica substream.
pub fn simulate_time_change_with_stream(
    params: &ModelParams,
    jumps: &JumpSet,
    x0: &PopulationState,
    cfg: &SimConfig,
    replica: u64,
) -> Result<TrajectorySample> {
    check_inputs(params, jumps, x0)?;
    cfg.validate()?;

    let mut rng = replica_rng(cfg.seed, replica, 0);
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut events = 0u64;
    let mut recorder = Recorder::new(cfg.record, &x);
    // remaining unit-rate work until each clock's next arrival
    let mut work: Vec<f64> = (0..jumps.len()).map(|_| exp_variate(&mut rng, 1.0)).collect();
    let mut rates = vec![0.0f64; jumps.len()];

    loop {
        let mut any = false;
        for (r, j) in rates.iter_mut().zip(jumps.iter()) {
            *r = j.rate().eval_counts(x.counts());
            any |= *r > 0.0;
        }
        if !any {
            return Ok(recorder.finish(params.n(), t, &x, StopReason::Absorbed, events));
        }

        let mut best = usize::MAX;
        let mut wait = f64::INFINITY;
        for (i, (&r, &w)) in rates.iter().zip(work.iter()).enumerate() {
            if r > 0.0 {
                let cand = w / r;
                if cand < wait {
                    wait = cand;
                    best = i;
                }
            }
        }

        let t_next = t + wait;
        if t_next > cfg.t_max {
            // advance every running clock to the horizon, none fires
            recorder.before_event(cfg.t_max + f64::EPSILON, &x);
            return Ok(recorder.finish(params.n(), cfg.t_max, &x, StopReason::Horizon, events));
        }

        for (w, &r) in work.iter_mut().zip(rates.iter()) {
            *w -= r * wait;
        }
        work[best] = exp_variate(&mut rng, 1.0);

        recorder.before_event(t_next, &x);
        let jump = &jumps.jumps()[best];
        x.apply(jump.delta());
        t = t_next;
        events += 1;
        recorder.after_event(t, &x);

        if events >= cfg.max_events {
            return Ok(recorder.finish(params.n(), t, &x, StopReason::EventCap, events));
        }
    }
}

/// Full per-peer timeline, for sojourn and completion statistics.
#[derive(Clone, Debug, serde::Serialize)]
pub struct PeerRecord {
    pub id: u64,
    pub arrival: f64,
    /// First time the label reached F (equals `arrival` for seed arrivals).
    pub completion: Option<f64>,
    pub departure: Option<f64>,
    pub history: Vec<(f64, ChunkLabel)>,
}

impl PeerRecord {
    pub fn sojourn(&self) -> Option<f64> {
        self.departure.map(|d| d - self.arrival)
    }
}

/// Agent-tagged simulation. The population marginal is driven by the same
/// substream as [`simulate_ssa`] and is therefore pathwise identical to
/// it; peer selection randomness lives on a separate substream.
pub fn simulate_agents(
    params: &ModelParams,
    jumps: &JumpSet,
    x0: &PopulationState,
    cfg: &SimConfig,
) -> Result<(TrajectorySample, Vec<PeerRecord>)> {
    let mut rng_pop = replica_rng(cfg.seed, 0, 0);
    let mut rng_agents = replica_rng(cfg.seed, 0, 1);

    let num = labels::num_labels(params.n());
    let full_idx = num - 1;
    let mut rosters: Vec<Vec<u64>> = vec![Vec::new(); num];
    let mut records: Vec<PeerRecord> = Vec::new();
    let label_of = |idx: usize| ChunkLabel::from_mask(params.n(), idx as u32).expect("valid mask");

    for (idx, &count) in x0.counts().iter().enumerate() {
        for _ in 0..count {
            let id = records.len() as u64;
            let label = label_of(idx);
            records.push(PeerRecord {
                id,
                arrival: 0.0,
                completion: (idx == full_idx).then_some(0.0),
                departure: None,
                history: vec![(0.0, label)],
            });
            rosters[idx].push(id);
        }
    }

    fn take(rosters: &mut [Vec<u64>], idx: usize, rng: &mut ChaCha8Rng) -> u64 {
        let roster = &mut rosters[idx];
        let i = rng.random_range(0..roster.len());
        roster.swap_remove(i)
    }

    #[allow(clippy::too_many_arguments)]
    fn move_peer(
        rosters: &mut [Vec<u64>],
        records: &mut [PeerRecord],
        n: u8,
        full_idx: usize,
        from: usize,
        to: usize,
        t: f64,
        rng: &mut ChaCha8Rng,
    ) {
        let id = take(rosters, from, rng);
        rosters[to].push(id);
        let rec = &mut records[id as usize];
        rec.history.push((t, ChunkLabel::from_mask(n, to as u32).expect("valid mask")));
        if to == full_idx && rec.completion.is_none() {
            rec.completion = Some(t);
        }
    }

    let n = params.n();
    let traj = {
        let records = &mut records;
        let rosters = &mut rosters;
        let rng_agents = &mut rng_agents;
        run_direct(params, jumps, x0, cfg, &mut rng_pop, move |t, jump| match &jump.kind {
            JumpKind::Arrival { label } => {
                let id = records.len() as u64;
                records.push(PeerRecord {
                    id,
                    arrival: t,
                    completion: label.is_full().then_some(t),
                    departure: None,
                    history: vec![(t, *label)],
                });
                rosters[label.index()].push(id);
            }
            JumpKind::Departure => {
                let id = take(rosters, full_idx, rng_agents);
                records[id as usize].departure = Some(t);
            }
            JumpKind::Download { from, to } => {
                move_peer(rosters, records, n, full_idx, from.index(), to.index(), t, rng_agents);
            }
            JumpKind::Swap { a, a_to, b, b_to } => {
                move_peer(rosters, records, n, full_idx, a.index(), a_to.index(), t, rng_agents);
                move_peer(rosters, records, n, full_idx, b.index(), b_to.index(), t, rng_agents);
            }
        })?
    };

    Ok((traj, records))
}

/// Rounds a density to integer counts, giving the largest fractional
/// remainders priority so the total equals round(N·|x0|) exactly.
pub fn round_density(x0: &DensityState, n_scale: u64) -> PopulationState {
    let targets: Vec<f64> = x0.values().iter().map(|v| v * n_scale as f64).collect();
    let total_target = targets.iter().sum::<f64>().round() as u64;
    let mut counts: Vec<u64> = targets.iter().map(|v| v.floor() as u64).collect();
    let mut deficit = total_target.saturating_sub(counts.iter().sum::<u64>());
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = targets[i] - targets[i].floor();
        let rj = targets[j] - targets[j].floor();
        rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
    });
    for idx in order {
        if deficit == 0 {
            break;
        }
        counts[idx] += 1;
        deficit -= 1;
    }
    PopulationState::new(x0.n(), counts).expect("dimensions preserved")
}

/// Sup-error report for one population scale N.
#[derive(Clone, Debug)]
pub struct ScaledRunReport {
    pub n_scale: u64,
    /// Per-replica sup_{t ≤ T} |X_{N,t}/N − x_t| in L1.
    pub sup_errors: Vec<f64>,
    pub median_sup_error: f64,
}

/// Runs the N-scaled sequence (arrivals N·α, interactions β/N and γ/N)
/// against the fluid solution and reports per-replica sup errors.
pub fn run_scaled_sequence(
    params: &ModelParams,
    x0_density: &DensityState,
    n_list: &[u64],
    replicas: usize,
    cfg: &SimConfig,
) -> Result<Vec<ScaledRunReport>> {
    cfg.validate()?;
    let fluid_sol = fluid::integrate(params, x0_density, cfg.t_max, &FluidOptions::default())?;
    let num = labels::num_labels(params.n());

    let mut reports = Vec::with_capacity(n_list.len());
    for &n_scale in n_list {
        let scaled = params.scaled(n_scale as f64)?;
        let jumps = JumpSet::build(&scaled)?;
        let x0 = round_density(x0_density, n_scale);

        let mut sup_errors: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|replica| {
                let mut rng = replica_rng(cfg.seed, replica as u64, 0);
                let traj = run_direct(&scaled, &jumps, &x0, cfg, &mut rng, |_, _| {})
                    .expect("validated inputs");
                let mut fluid_at = vec![0.0; num];
                let mut sup: f64 = 0.0;
                let inv_n = 1.0 / n_scale as f64;
                let mut check = |t: f64, state: &[u64]| {
                    fluid_sol.eval_raw_into(t, &mut fluid_at);
                    let err: f64 = state
                        .iter()
                        .zip(&fluid_at)
                        .map(|(&c, &f)| (c as f64 * inv_n - f).abs())
                        .sum();
                    if err > sup {
                        sup = err;
                    }
                };
                for (i, (t, state)) in traj.rows().enumerate() {
                    check(t, state);
                    // the same state also holds just before the next event
                    if i + 1 < traj.len() {
                        check(traj.times[i + 1], state);
                    }
                }
                check(traj.end_time(), traj.final_state());
                sup
            })
            .collect();

        sup_errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = median_of_sorted(&sup_errors);
        reports.push(ScaledRunReport { n_scale, sup_errors, median_sup_error: median });
    }
    Ok(reports)
}

pub(crate) fn median_of_sorted(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Which event-simulation driver to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Driver {
    Direct,
    TimeChange,
}

/// Direct simulation on an explicit replica substream.
pub fn simulate_ssa_with_stream(
    params: &ModelParams,
    jumps: &JumpSet,
    x0: &PopulationState,
    cfg: &SimConfig,
    replica: u64,
) -> Result<TrajectorySample> {
    let mut rng = replica_rng(cfg.seed, replica, 0);
    run_direct(params, jumps, x0, cfg, &mut rng, |_, _| {})
}

/// Mean and standard error of the count at label index `idx`, taken at the
/// horizon over independent replicas of the chosen driver.
pub fn marginal_mean_at(
    params: &ModelParams,
    jumps: &JumpSet,
    x0: &PopulationState,
    cfg: &SimConfig,
    idx: usize,
    replicas: usize,
    driver: Driver,
) -> Result<(f64, f64)> {
    check_inputs(params, jumps, x0)?;
    cfg.validate()?;
    let vals: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|replica| {
            let traj = match driver {
                Driver::Direct => {
                    simulate_ssa_with_stream(params, jumps, x0, cfg, replica as u64)
                }
                Driver::TimeChange => {
                    simulate_time_change_with_stream(params, jumps, x0, cfg, replica as u64)
                }
            }
            .expect("validated inputs");
            traj.final_state()[idx] as f64
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn lab(n: u8, idx: &[u32]) -> ChunkLabel {
        ChunkLabel::from_indices(n, idx).unwrap()
    }

    fn cons_n1(beta: f64) -> (ModelParams, JumpSet) {
        let p = ModelParams::closed(1, beta, 0.0, 0.0).unwrap();
        let j = JumpSet::build(&p).unwrap();
        (p, j)
    }

    #[test]
    fn absorbing_start_stops_immediately() {
        let (p, j) = cons_n1(1.0);
        let x0 = PopulationState::concentrated(&lab(1, &[1]), 50);
        let traj = simulate_ssa(&p, &j, &x0, &SimConfig::new(1, 10.0)).unwrap();
        assert_eq!(traj.stop_reason, StopReason::Absorbed);
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.end_time(), 0.0);
        assert_eq!(traj.final_state(), &[0, 50]);
    }

    #[test]
    fn single_event_holding_time_is_exponential() {
        // x0 = (1,1), β = 1: exactly one download at rate 1, then absorption.
        let (p, j) = cons_n1(1.0);
        let x0 = PopulationState::new(1, vec![1, 1]).unwrap();
        let mut sum = 0.0;
        let reps = 10_000;
        for r in 0..reps {
            let traj =
                simulate_ssa_with_stream(&p, &j, &x0, &SimConfig::new(7, 1e6), r as u64).unwrap();
            assert_eq!(traj.stop_reason, StopReason::Absorbed);
            assert_eq!(traj.events, 1);
            sum += traj.end_time();
        }
        let mean = sum / reps as f64;
        assert!((mean - 1.0).abs() < 0.03, "empirical mean {mean}");
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let p = ModelParams::new(1, vec![1.0, 0.5], 1.0, 0.0, 2.0).unwrap();
        let j = JumpSet::build(&p).unwrap();
        let x0 = PopulationState::new(1, vec![5, 3]).unwrap();
        let cfg = SimConfig::new(42, 50.0);
        let a = simulate_ssa(&p, &j, &x0, &cfg).unwrap();
        let b = simulate_ssa(&p, &j, &x0, &cfg).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.states, b.states);
        let c = simulate_ssa(&p, &j, &x0, &SimConfig::new(43, 50.0)).unwrap();
        assert_ne!(a.times, c.times);
    }

    #[test]
    fn conservative_mass_constant_dissipative_nonincreasing() {
        let p = ModelParams::closed(2, 1.0, 0.8, 0.0).unwrap();
        let j = JumpSet::build(&p).unwrap();
        let x0 = PopulationState::new(2, vec![10, 5, 5, 2]).unwrap();
        let traj = simulate_ssa(&p, &j, &x0, &SimConfig::new(3, 100.0)).unwrap();
        for (_, s) in traj.rows() {
            assert_eq!(s.iter().sum::<u64>(), 22);
        }

        let pd = ModelParams::closed(2, 1.0, 0.8, 0.5).unwrap();
        let jd = JumpSet::build(&pd).unwrap();
        let trajd = simulate_ssa(&pd, &jd, &x0, &SimConfig::new(3, 100.0)).unwrap();
        let mut prev = u64::MAX;
        for (_, s) in trajd.rows() {
            let tot = s.iter().sum::<u64>();
            assert!(tot <= prev);
            prev = tot;
        }
    }

    #[test]
    fn consecutive_states_differ_by_a_jump() {
        let p = ModelParams::new(2, vec![0.5, 0.2, 0.2, 0.4], 1.0, 0.7, 0.9).unwrap();
        let j = JumpSet::build(&p).unwrap();
        let x0 = PopulationState::new(2, vec![4, 2, 2, 1]).unwrap();
        let traj = simulate_ssa(&p, &j, &x0, &SimConfig::new(5, 20.0)).unwrap();
        let deltas: Vec<Vec<i64>> = j
            .iter()
            .map(|jv| jv.delta_dense(4).iter().map(|&d| i64::from(d)).collect())
            .collect();
        for i in 1..traj.len() {
            let prev = traj.state_at(i - 1);
            let next = traj.state_at(i);
            let diff: Vec<i64> =
                next.iter().zip(prev).map(|(&a, &b)| a as i64 - b as i64).collect();
            assert!(deltas.contains(&diff), "unknown jump {diff:?}");
            assert!(traj.times[i] > traj.times[i - 1]);
        }
    }

    #[test]
    fn grid_recording_covers_the_horizon() {
        let p = ModelParams::new(1, vec![2.0, 1.0], 1.0, 0.0, 1.0).unwrap();
        let j = JumpSet::build(&p).unwrap();
        let x0 = PopulationState::new(1, vec![3, 1]).unwrap();
        let cfg = SimConfig::new(11, 5.0).with_grid(0.5);
        let traj = simulate_ssa(&p, &j, &x0, &cfg).unwrap();
        assert_eq!(traj.stop_reason, StopReason::Horizon);
        let expect: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        assert_eq!(traj.times, expect);
    }

    #[test]
    fn time_change_degenerate_and_death_process() {
        // all rates zero: constant trajectory
        let (p, j) = cons_n1(1.0);
        let x0 = PopulationState::concentrated(&lab(1, &[1]), 9);
        let traj = simulate_time_change(&p, &j, &x0, &SimConfig::new(2, 4.0)).unwrap();
        assert_eq!(traj.stop_reason, StopReason::Absorbed);
        assert_eq!(traj.len(), 1);

        // pure death: only departures, mean K e^{-δt}
        let pd = ModelParams::closed(1, 1.0, 0.0, 0.7).unwrap();
        let jd = JumpSet::build(&pd).unwrap();
        let k0 = 200u64;
        let x0 = PopulationState::concentrated(&lab(1, &[1]), k0);
        let reps = 400;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in 0..reps {
            let cfg = SimConfig::new(100, 1.5);
            let traj = simulate_time_change_with_stream(&pd, &jd, &x0, &cfg, r).unwrap();
            let v = traj.final_state()[1] as f64;
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / reps as f64;
        let want = k0 as f64 * (-0.7f64 * 1.5).exp();
        let sd = ((sum_sq / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!(
            (mean - want).abs() < 4.0 * sd + 1e-9,
            "death-process mean {mean} vs {want} (sd {sd})"
        );
    }

    #[test]
    fn time_change_agrees_with_direct_method() {
        // open n=1: compare the marginal mean of x^1 at t = 1
        let p = ModelParams::new(1, vec![3.0, 1.0], 1.0, 0.0, 2.0).unwrap();
        let j = JumpSet::build(&p).unwrap();
        let x0 = PopulationState::new(1, vec![4, 2]).unwrap();
        let (m1, s1) =
            marginal_mean_at(&p, &j, &x0, &SimConfig::new(9, 1.0), 1, 5000, Driver::Direct)
                .unwrap();
        let (m2, s2) =
            marginal_mean_at(&p, &j, &x0, &SimConfig::new(1009, 1.0), 1, 5000, Driver::TimeChange)
                .unwrap();
        let pooled = (s1 * s1 + s2 * s2).sqrt();
        assert!(
            (m1 - m2).abs() <= 3.0 * pooled,
            "direct {m1}±{s1} vs time-change {m2}±{s2}"
        );
    }

    #[test]
    fn agents_population_marginal_matches_plain_ssa() {
        let p = ModelParams::new(2, vec![1.0, 0.3, 0.3, 0.2], 0.8, 0.5, 1.0).unwrap();
        let j = JumpSet::build(&p).unwrap();
        let x0 = PopulationState::new(2, vec![5, 2, 2, 3]).unwrap();
        let cfg = SimConfig::new(21, 30.0);
        let plain = simulate_ssa(&p, &j, &x0, &cfg).unwrap();
        let (tagged, _) = simulate_agents(&p, &j, &x0, &cfg).unwrap();
        assert_eq!(plain.times, tagged.times);
        assert_eq!(plain.states, tagged.states);
    }

    #[test]
    fn agent_histories_are_monotone_and_consistent() {
        let p = ModelParams::new(2, vec![1.0, 0.3, 0.3, 0.2], 0.8, 0.5, 1.0).unwrap();
        let j = JumpSet::build(&p).unwrap();
        let x0 = PopulationState::new(2, vec![5, 2, 2, 3]).unwrap();
        let (_, peers) = simulate_agents(&p, &j, &x0, &SimConfig::new(33, 40.0)).unwrap();
        assert!(!peers.is_empty());
        for peer in &peers {
            for w in peer.history.windows(2) {
                assert!(w[1].0 >= w[0].0);
                assert!(w[1].1.len() > w[0].1.len(), "label cardinality must grow");
            }
            if let Some(dep) = peer.departure {
                let comp = peer.completion.expect("departure implies completion");
                assert!(dep >= comp);
                assert!(peer.history.last().unwrap().1.is_full());
            }
        }
    }

    #[test]
    fn no_peers_no_arrivals_no_records() {
        let p = ModelParams::closed(1, 1.0, 0.0, 0.5).unwrap();
        let j = JumpSet::build(&p).unwrap();
        let x0 = PopulationState::zeros(1).unwrap();
        let (traj, peers) = simulate_agents(&p, &j, &x0, &SimConfig::new(1, 5.0)).unwrap();
        assert!(peers.is_empty());
        assert_eq!(traj.stop_reason, StopReason::Absorbed);
    }

    #[test]
    fn seed_arrival_sojourns_are_exponential() {
        // F-arrivals wait Exp(δ) and leave; mean sojourn 1/δ within 5%
        let delta = 4.0;
        let p = ModelParams::new(1, vec![1.0, 2.0], 3.0, 0.0, delta).unwrap();
        let j = JumpSet::build(&p).unwrap();
        let x0 = PopulationState::new(1, vec![1, 1]).unwrap();
        let cfg = SimConfig::new(5, 6000.0).with_grid(50.0);
        let (_, peers) = simulate_agents(&p, &j, &x0, &cfg).unwrap();
        let sojourns: Vec<f64> = peers
            .iter()
            .filter(|pr| pr.arrival > 0.0 && pr.history.first().unwrap().1.is_full())
            .filter_map(PeerRecord::sojourn)
            .collect();
        assert!(sojourns.len() > 10_000, "got {}", sojourns.len());
        let mean = sojourns.iter().sum::<f64>() / sojourns.len() as f64;
        assert!(
            (mean - 1.0 / delta).abs() < 0.05 / delta,
            "seed sojourn mean {mean} vs {}",
            1.0 / delta
        );
    }

    #[test]
    fn rounding_preserves_totals() {
        let x0 = DensityState::new(2, vec![0.21, 0.33, 0.26, 0.2]).unwrap();
        for n in [10u64, 100, 1000, 9999] {
            let rounded = round_density(&x0, n);
            assert_eq!(rounded.total(), (n as f64 * x0.l1_norm()).round() as u64);
        }
        let single = DensityState::new(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(round_density(&single, 77).counts(), &[0, 77]);
    }

    #[test]
    fn scaled_sequence_with_no_events_has_zero_error() {
        let p = ModelParams::closed(2, 1.0, 0.0, 0.0).unwrap();
        let x0 = DensityState::concentrated(&lab(2, &[1, 2]), 1.0).unwrap();
        let cfg = SimConfig::new(17, 3.0);
        let reports = run_scaled_sequence(&p, &x0, &[10, 100], 5, &cfg).unwrap();
        for rep in reports {
            assert!(rep.median_sup_error == 0.0, "N={}: {}", rep.n_scale, rep.median_sup_error);
        }
    }

    #[test]
    fn scaled_sequence_errors_shrink() {
        let p = ModelParams::closed(1, 1.0, 0.0, 0.0).unwrap();
        let x0 = DensityState::new(1, vec![0.5, 0.5]).unwrap();
        let cfg = SimConfig::new(2024, 5.0);
        let reports = run_scaled_sequence(&p, &x0, &[100, 1000], 10, &cfg).unwrap();
        assert!(reports[0].median_sup_error > reports[1].median_sup_error);
    }
}
