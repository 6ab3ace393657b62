//! Exact continuous-time simulation of the Kawasaki exchange chain.
//!
//! Event-driven kinetic Monte Carlo: exponential holding times with the total
//! bond rate as parameter, bond selection through a logarithmic-time sum
//! tree, and localized rate updates after each swap (an exchange on `(i,i+1)`
//! changes the smoothed field, hence the exchange energies, only within the
//! kernel support of the bond).
//!
//! At infinite temperature every rate is exactly `1/2` independently of the
//! configuration, so the engine skips the smoothed-field and rate-index
//! maintenance and refreshes the field cache only when a sample is taken.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::KacKernel;
use crate::lattice::{bond_local, hamiltonian, heat_bath, SpinConfig};
use crate::ratetree::RateIndex;
use crate::scaling::ScalingPlan;

/// Counter-based stream RNG keyed by `(seed, replica)`: replicas draw from
/// disjoint ChaCha streams of the same seed, so ensembles are reproducible
/// without shared state.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// One exchange event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Microscopic time of the event.
    pub t_micro: f64,
    /// Bond index `i` of the swap `(i, i+1)`.
    pub bond: usize,
    /// Pre-swap spin difference `sigma_i - sigma_{i+1}` in `{-2, 0, +2}`.
    pub d: i32,
}

/// Observer of a single replica's path. The state is piecewise constant:
/// `interval` reports each constancy interval (exact event-interval
/// quadrature), `jump` fires after every spin-changing swap with the
/// post-swap configuration and the pre-swap `d`. At `beta = 0` the smoothed
/// cache of the passed configuration may lag the spins; observers that need
/// it must run with field maintenance forced on.
pub trait PathObserver {
    fn interval(&mut self, cfg: &SpinConfig, dt_micro: f64);
    fn jump(&mut self, _cfg: &SpinConfig, _ev: &Event) {}
}

/// Scheduled snapshot of the microscopic state.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t_macro: f64,
    /// Kac-smoothed field at the sample time.
    pub smoothed: Vec<f64>,
    /// Raw spins at the sample time.
    pub spins: Vec<i8>,
    pub total_mag: i64,
    /// Bond currents, when requested.
    pub currents: Option<Vec<f64>>,
}

/// Result of one replica run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: u64,
    pub replica: u64,
    pub t_end_macro: f64,
    pub n_events: u64,
    pub samples: Vec<Sample>,
    /// Event log, only when enabled in [`RunOptions`].
    pub events: Option<Vec<Event>>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Hard cap on the number of events.
    pub event_cap: u64,
    /// Record the full `(time, bond)` event log.
    pub log_events: bool,
    /// Record bond currents at sample times.
    pub sample_currents: bool,
    /// Force smoothed-field maintenance even at `beta = 0`.
    pub force_field_maintenance: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            event_cap: 1_000_000_000,
            log_events: false,
            sample_currents: false,
            force_field_maintenance: false,
        }
    }
}

/// Live simulation state for one replica.
pub struct Engine<'a> {
    pub kernel: &'a KacKernel,
    pub beta: f64,
    cfg: SpinConfig,
    index: RateIndex,
    t_micro: f64,
    n_events: u64,
    rng: ChaCha8Rng,
    /// Bonds within this circular distance of a swapped bond get their rate recomputed.
    update_radius: usize,
    /// `beta = 0` fast path: rates are constant 1/2, field cache refreshed lazily.
    light: bool,
}

impl<'a> Engine<'a> {
    pub fn new(
        kernel: &'a KacKernel,
        beta: f64,
        cfg: SpinConfig,
        rng: ChaCha8Rng,
        force_field_maintenance: bool,
    ) -> Self {
        let n = cfg.sites();
        let light = beta == 0.0 && !force_field_maintenance;
        let rates: Vec<f64> = (0..n)
            .map(|i| bond_local(&cfg, kernel, beta, i).rate)
            .collect();
        Engine {
            kernel,
            beta,
            cfg,
            index: RateIndex::new(&rates),
            t_micro: 0.0,
            n_events: 0,
            rng,
            update_radius: kernel.half_support + 1,
            light,
        }
    }

    pub fn t_micro(&self) -> f64 {
        self.t_micro
    }

    pub fn n_events(&self) -> u64 {
        self.n_events
    }

    pub fn total_rate(&self) -> f64 {
        self.index.total_rate()
    }

    /// Read-only view of the configuration. In the `beta = 0` fast path the
    /// smoothed cache may lag; call [`Engine::refresh_field`] first if needed.
    pub fn config(&self) -> &SpinConfig {
        &self.cfg
    }

    pub fn refresh_field(&mut self) {
        if !self.cfg.smoothed_valid() {
            self.cfg.refresh(self.kernel);
        }
    }

    pub fn into_config(mut self) -> SpinConfig {
        self.refresh_field();
        self.cfg
    }

    /// Draws the next event without applying it. The draw consumes RNG state,
    /// so each draw must be followed by exactly one [`Engine::commit`].
    pub fn draw(&mut self) -> Event {
        let r = self.index.total_rate();
        debug_assert!(r > 0.0);
        let dt: f64 = self.rng.sample::<f64, _>(rand_distr::Exp1) / r;
        let u: f64 = self.rng.gen();
        let bond = self.index.sample(u);
        Event {
            t_micro: self.t_micro + dt,
            bond,
            d: self.cfg.bond_d(bond),
        }
    }

    /// Applies a drawn event: swaps the bond and refreshes every rate within
    /// the kernel support of the swap.
    pub fn commit(&mut self, ev: &Event) {
        self.t_micro = ev.t_micro;
        self.n_events += 1;
        if ev.d == 0 {
            return;
        }
        if self.light {
            self.cfg.swap_only(ev.bond);
        } else {
            self.cfg.apply_exchange(self.kernel, ev.bond);
            let n = self.cfg.sites() as i64;
            let w = self.update_radius as i64;
            for j in (ev.bond as i64 - w)..=(ev.bond as i64 + 1 + w) {
                let idx = j.rem_euclid(n) as usize;
                let bl = bond_local(&self.cfg, self.kernel, self.beta, idx);
                self.index.update(idx, bl.rate);
            }
        }
    }

    /// Draws and applies the next event.
    pub fn step(&mut self) -> Event {
        let ev = self.draw();
        self.commit(&ev);
        ev
    }

    /// Debug check: recompute every rate from scratch and compare with the
    /// incrementally maintained tree. Returns the max relative mismatch.
    pub fn rate_sweep_mismatch(&mut self) -> f64 {
        self.refresh_field();
        let mut worst: f64 = 0.0;
        for i in 0..self.cfg.sites() {
            let fresh = bond_local(&self.cfg, self.kernel, self.beta, i).rate;
            let held = self.index.rate(i);
            worst = worst.max((fresh - held).abs() / fresh.max(1e-300));
        }
        worst.max(self.index.audit())
    }
}

/// Runs one replica: macroscopic sample times `schedule` map to microscopic
/// times through the plan's time scale, the state is sampled piecewise
/// constant (all events strictly before the sample time applied), and the
/// trajectory is a deterministic function of `(plan, cfg0, schedule, seed,
/// replica)`.
pub fn run(
    plan: &ScalingPlan,
    cfg0: SpinConfig,
    schedule: &[f64],
    seed: u64,
    replica: u64,
    opts: &RunOptions,
    observers: &mut [&mut dyn PathObserver],
) -> Result<Trajectory> {
    if schedule.windows(2).any(|w| w[0] > w[1]) || schedule.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::BadSchedule);
    }
    let horizon_micro = schedule.last().copied().unwrap_or(0.0) / plan.alpha;
    let rng = replica_rng(seed, replica);
    let mut engine = Engine::new(&plan.kernel, plan.beta, cfg0, rng, opts.force_field_maintenance);
    let mut samples = Vec::with_capacity(schedule.len() + 1);
    let mut log = if opts.log_events { Some(Vec::new()) } else { None };
    let mut si = 0usize;

    while si < schedule.len() && schedule[si] <= 0.0 {
        samples.push(take_sample(&mut engine, schedule[si], opts));
        si += 1;
    }
    if schedule.is_empty() {
        samples.push(take_sample(&mut engine, 0.0, opts));
    }

    while si < schedule.len() {
        if engine.n_events() >= opts.event_cap {
            return Err(Error::EventCapExceeded(opts.event_cap));
        }
        let t_before = engine.t_micro();
        let ev = engine.draw();
        // The state is constant on (t_before, ev.t_micro]; emit every sample
        // falling in that window from the pre-event state.
        while si < schedule.len() && schedule[si] / plan.alpha <= ev.t_micro {
            samples.push(take_sample(&mut engine, schedule[si], opts));
            si += 1;
        }
        if si >= schedule.len() {
            // Horizon reached inside this holding interval: close the
            // quadrature at the horizon and discard the undelivered event.
            let dt = horizon_micro - t_before;
            for obs in observers.iter_mut() {
                obs.interval(engine.config(), dt);
            }
            break;
        }
        for obs in observers.iter_mut() {
            obs.interval(engine.config(), ev.t_micro - t_before);
        }
        engine.commit(&ev);
        if ev.d != 0 {
            for obs in observers.iter_mut() {
                obs.jump(engine.config(), &ev);
            }
        }
        if let Some(log) = log.as_mut() {
            log.push(ev);
        }
    }

    Ok(Trajectory {
        seed,
        replica,
        t_end_macro: schedule.last().copied().unwrap_or(0.0),
        n_events: engine.n_events(),
        samples,
        events: log,
    })
}

fn take_sample(engine: &mut Engine<'_>, t_macro: f64, opts: &RunOptions) -> Sample {
    engine.refresh_field();
    let cfg = engine.config();
    let currents = opts.sample_currents.then(|| {
        (0..cfg.sites())
            .map(|i| bond_local(cfg, engine.kernel, engine.beta, i).current)
            .collect()
    });
    Sample {
        t_macro,
        smoothed: cfg.smoothed_field().to_vec(),
        spins: cfg.spins().to_vec(),
        total_mag: cfg.total_mag(),
        currents,
    }
}

/// Exact stationarity and reversibility audit on a small canonical sector.
///
/// Enumerates the sector, builds the full generator, and returns
/// `(||mu^T L||_inf, max detailed-balance defect)` for the canonical Gibbs
/// weights `mu ~ exp(-beta H)`.
pub fn stationarity_audit(
    n_half: usize,
    total_mag: i64,
    kernel: &KacKernel,
    beta: f64,
) -> Result<(f64, f64)> {
    let sites = 2 * n_half + 1;
    if sites != kernel.sites {
        return Err(Error::SizeMismatch {
            left: sites,
            right: kernel.sites,
        });
    }
    let ups64 = (total_mag + sites as i64) / 2;
    if (total_mag + sites as i64) % 2 != 0 || ups64 < 0 || ups64 > sites as i64 {
        return Err(Error::InfeasibleMagnetization(total_mag));
    }
    let states = enumerate_fixed_weight(sites, ups64 as usize);
    if states.len() > 10_000 {
        return Err(Error::SectorTooLarge(sites));
    }
    let index_of = |spins: &[i8]| -> usize {
        states
            .binary_search_by(|s| s.as_slice().cmp(spins))
            .expect("swap stays in sector")
    };

    let energies: Vec<f64> = states
        .iter()
        .map(|s| {
            let cfg = SpinConfig::new(s.clone(), kernel).unwrap();
            hamiltonian(&cfg, kernel).unwrap()
        })
        .collect();
    let emin = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut mu: Vec<f64> = energies.iter().map(|&e| (-beta * (e - emin)).exp()).collect();
    let z: f64 = mu.iter().sum();
    for m in &mut mu {
        *m /= z;
    }

    let mut flow = vec![0.0f64; states.len()];
    let mut db_defect: f64 = 0.0;
    for (a, spins) in states.iter().enumerate() {
        let cfg = SpinConfig::new(spins.clone(), kernel).unwrap();
        for bond in 0..sites {
            let bl = bond_local(&cfg, kernel, beta, bond);
            if bl.d == 0 {
                continue;
            }
            let mut swapped = spins.clone();
            swapped.swap(bond, (bond + 1) % sites);
            let b = index_of(&swapped);
            flow[b] += mu[a] * bl.rate;
            flow[a] -= mu[a] * bl.rate;
            let swapped_cfg = SpinConfig::new(swapped, kernel).unwrap();
            let back = bond_local(&swapped_cfg, kernel, beta, bond);
            db_defect = db_defect.max((mu[a] * bl.rate - mu[b] * back.rate).abs());
        }
    }
    let residual = flow.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    Ok((residual, db_defect))
}

/// All `+-1` vectors of length `sites` with exactly `ups` entries `+1`,
/// in lexicographic order.
pub fn enumerate_fixed_weight(sites: usize, ups: usize) -> Vec<Vec<i8>> {
    fn rec(cur: &mut Vec<i8>, pos: usize, left: usize, out: &mut Vec<Vec<i8>>) {
        let n = cur.len();
        if left > n - pos {
            return;
        }
        if pos == n {
            out.push(cur.clone());
            return;
        }
        cur[pos] = -1;
        rec(cur, pos + 1, left, out);
        if left > 0 {
            cur[pos] = 1;
            rec(cur, pos + 1, left - 1, out);
            cur[pos] = -1;
        }
    }
    let mut out = Vec::new();
    let mut cur = vec![-1i8; sites];
    rec(&mut cur, 0, ups, &mut out);
    out
}

/// Uniform sample from the fixed-magnetization sector (random placement of
/// the up spins): the exact equilibrium law at infinite temperature.
pub fn uniform_sector_config(
    sites: usize,
    total_mag: i64,
    kernel: &KacKernel,
    rng: &mut ChaCha8Rng,
) -> Result<SpinConfig> {
    let ups64 = (total_mag + sites as i64) / 2;
    if (total_mag + sites as i64) % 2 != 0 || ups64 < 0 || ups64 > sites as i64 {
        return Err(Error::InfeasibleMagnetization(total_mag));
    }
    let mut spins = vec![-1i8; sites];
    for s in spins.iter_mut().take(ups64 as usize) {
        *s = 1;
    }
    spins.shuffle(rng);
    SpinConfig::new(spins, kernel)
}

/// Heat-bath rate window implied by the kernel ellipticity bound.
pub fn rate_window(kernel: &KacKernel, beta: f64) -> (f64, f64) {
    let b = crate::lattice::exchange_energy_bound(kernel);
    (heat_bath(beta * b), heat_bath(-beta * b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, Profile};
    use crate::scaling::{make_plan, PlanMode};

    fn small_plan(gamma: f64, n_half: usize, beta: f64) -> ScalingPlan {
        make_plan(
            Profile::Gaussian,
            gamma,
            n_half,
            1.0,
            1.0,
            beta,
            PlanMode::RatioLocked,
        )
        .unwrap()
    }

    #[test]
    fn determinism_same_seed_same_trajectory() {
        let plan = small_plan(0.2, 16, 0.7);
        let spins: Vec<i8> = (0..33).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let cfg = SpinConfig::new(spins, &plan.kernel).unwrap();
        let sched = vec![0.0, 1e-4, 2e-4];
        let a = run(&plan, cfg.clone(), &sched, 42, 0, &RunOptions::default(), &mut []).unwrap();
        let b = run(&plan, cfg.clone(), &sched, 42, 0, &RunOptions::default(), &mut []).unwrap();
        assert_eq!(a.n_events, b.n_events);
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa.total_mag, sb.total_mag);
            assert_eq!(sa.smoothed, sb.smoothed);
        }
        let c = run(&plan, cfg, &sched, 43, 0, &RunOptions::default(), &mut []).unwrap();
        assert!(a.n_events != c.n_events || a.samples[2].smoothed != c.samples[2].smoothed);
    }

    #[test]
    fn magnetization_constant_along_trajectory() {
        let plan = small_plan(0.2, 16, 1.0);
        let spins: Vec<i8> = (0..33).map(|i| if i % 3 == 0 { -1 } else { 1 }).collect();
        let m0: i64 = spins.iter().map(|&s| s as i64).sum();
        let cfg = SpinConfig::new(spins, &plan.kernel).unwrap();
        let sched: Vec<f64> = (0..=10).map(|i| i as f64 * 3e-5).collect();
        let traj = run(&plan, cfg, &sched, 7, 0, &RunOptions::default(), &mut []).unwrap();
        for s in &traj.samples {
            assert_eq!(s.total_mag, m0);
        }
    }

    #[test]
    fn zero_length_schedule_gives_initial_state() {
        let plan = small_plan(0.2, 8, 0.0);
        let cfg = SpinConfig::new(vec![1; 17], &plan.kernel).unwrap();
        let traj = run(&plan, cfg, &[], 1, 0, &RunOptions::default(), &mut []).unwrap();
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.n_events, 0);
    }

    #[test]
    fn incremental_rates_match_full_sweep() {
        let k = build_kernel(Profile::Gaussian, 0.2, 12).unwrap();
        let spins: Vec<i8> = (0..25).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let cfg = SpinConfig::new(spins, &k).unwrap();
        let mut engine = Engine::new(&k, 1.2, cfg, replica_rng(5, 0), false);
        for _ in 0..2000 {
            engine.step();
        }
        assert!(engine.rate_sweep_mismatch() < 1e-9);
    }

    #[test]
    fn uniform_bond_selection_at_infinite_temperature() {
        let k = build_kernel(Profile::Gaussian, 0.2, 4).unwrap();
        let cfg = SpinConfig::new(vec![1; 9], &k).unwrap();
        let mut engine = Engine::new(&k, 0.0, cfg, replica_rng(9, 0), false);
        let n = 9usize;
        let trials = 200_000usize;
        let mut counts = vec![0usize; n];
        for _ in 0..trials {
            let ev = engine.step();
            counts[ev.bond] += 1;
            assert_eq!(ev.d, 0); // all-up: every exchange is a no-op
        }
        let p = 1.0 / n as f64;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - trials as f64 * p).abs() < 4.0 * sd,
                "count {c} vs mean {}",
                trials as f64 * p
            );
        }
    }

    #[test]
    fn small_sector_transition_frequencies_match_generator() {
        // N = 2 (5 sites), sector M = 1; empirical bond choice given the state
        // must match c_i(sigma) / total_rate(sigma) within 3 sigma.
        let k = build_kernel(Profile::Gaussian, 0.2, 2).unwrap();
        let beta = 1.0;
        let mut rng = replica_rng(123, 0);
        let cfg = uniform_sector_config(5, 1, &k, &mut rng).unwrap();
        let mut engine = Engine::new(&k, beta, cfg, rng, false);
        use std::collections::HashMap;
        let mut visits: HashMap<Vec<i8>, u64> = HashMap::new();
        let mut picks: HashMap<(Vec<i8>, usize), u64> = HashMap::new();
        let events = 1_000_000usize;
        for _ in 0..events {
            let state = engine.config().spins().to_vec();
            let ev = engine.step();
            *visits.entry(state.clone()).or_default() += 1;
            *picks.entry((state, ev.bond)).or_default() += 1;
        }
        for (state, &n_visits) in &visits {
            let cfg = SpinConfig::new(state.clone(), &k).unwrap();
            let rates: Vec<f64> = (0..5).map(|i| bond_local(&cfg, &k, beta, i).rate).collect();
            let total: f64 = rates.iter().sum();
            for (bond, &r) in rates.iter().enumerate() {
                let p = r / total;
                let got = *picks.get(&(state.clone(), bond)).unwrap_or(&0) as f64;
                let mean = n_visits as f64 * p;
                let sd = (n_visits as f64 * p * (1.0 - p)).sqrt();
                assert!(
                    (got - mean).abs() <= 3.5 * sd + 1.0,
                    "state {state:?} bond {bond}: {got} vs {mean} (sd {sd})"
                );
            }
        }
    }

    #[test]
    fn stationarity_small_sector() {
        let k = build_kernel(Profile::Gaussian, 0.2, 2).unwrap();
        let (res, db) = stationarity_audit(2, 1, &k, 1.0).unwrap();
        assert!(res < 1e-10, "stationarity residual {res}");
        assert!(db < 1e-12, "detailed balance defect {db}");
    }

    #[test]
    fn stationarity_uniform_at_beta_zero() {
        let k = build_kernel(Profile::Gaussian, 0.2, 2).unwrap();
        let (res, db) = stationarity_audit(2, 1, &k, 0.0).unwrap();
        assert!(res < 1e-12);
        assert!(db < 1e-15);
    }

    #[test]
    fn stationarity_singleton_sector() {
        let k = build_kernel(Profile::Gaussian, 0.2, 2).unwrap();
        let (res, db) = stationarity_audit(2, 5, &k, 1.0).unwrap();
        assert_eq!(res, 0.0);
        assert_eq!(db, 0.0);
    }

    #[test]
    fn sector_enumeration_counts() {
        assert_eq!(enumerate_fixed_weight(5, 3).len(), 10);
        assert_eq!(enumerate_fixed_weight(7, 0).len(), 1);
        let all = enumerate_fixed_weight(6, 2);
        assert_eq!(all.len(), 15);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn light_mode_matches_full_mode_in_law_setup() {
        // beta = 0 light path must produce the same trajectory as forced
        // maintenance (the RNG draws are identical, only caching differs).
        let plan = small_plan(0.2, 10, 0.0);
        let spins: Vec<i8> = (0..21).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let cfg = SpinConfig::new(spins, &plan.kernel).unwrap();
        let sched = vec![0.0, 5e-5, 1e-4];
        let light = run(&plan, cfg.clone(), &sched, 3, 1, &RunOptions::default(), &mut []).unwrap();
        let full = run(
            &plan,
            cfg,
            &sched,
            3,
            1,
            &RunOptions {
                force_field_maintenance: true,
                ..RunOptions::default()
            },
            &mut [],
        )
        .unwrap();
        assert_eq!(light.n_events, full.n_events);
        for (a, b) in light.samples.iter().zip(&full.samples) {
            assert_eq!(a.total_mag, b.total_mag);
            for (x, y) in a.smoothed.iter().zip(&b.smoothed) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
