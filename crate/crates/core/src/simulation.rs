//! Exact simulation of signed Hawkes processes by Poisson embedding.
//!
//! Candidates are atoms of a unit-rate planar Poisson field lying under the
//! intensity of the dominating process built with `h+`. Between candidates
//! that intensity is piecewise constant, so candidate times are drawn by
//! exact exponential inversion segment by segment. Each candidate carries a
//! uniform level under the envelope; it becomes an event of `N^h` when the
//! level is below `Λ^h`, which never exceeds the envelope.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::kernel::{KernelSummary, SignedKernel};
use crate::rng::{self, Stream};

/// Finite sorted set of atoms inside a half-open window `(left, right]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    atoms: Vec<f64>,
    left: f64,
    right: f64,
}

impl PointConfiguration {
    pub fn new(atoms: Vec<f64>, left: f64, right: f64) -> Result<Self> {
        if !(left < right) {
            return Err(Error::InvalidConfiguration(format!(
                "window ({left}, {right}] is empty"
            )));
        }
        for w in atoms.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::InvalidConfiguration(format!(
                    "atoms must be strictly increasing, found {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&bad) = atoms.iter().find(|&&a| !(a > left && a <= right)) {
            return Err(Error::InvalidConfiguration(format!(
                "atom {bad} lies outside ({left}, {right}]"
            )));
        }
        Ok(Self { atoms, left, right })
    }

    /// Sorts the atoms first; duplicates are still rejected.
    pub fn from_unsorted(mut atoms: Vec<f64>, left: f64, right: f64) -> Result<Self> {
        atoms.sort_by(f64::total_cmp);
        Self::new(atoms, left, right)
    }

    pub fn empty(left: f64, right: f64) -> Self {
        Self {
            atoms: Vec::new(),
            left,
            right,
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub(crate) fn from_parts_unchecked(atoms: Vec<f64>, left: f64, right: f64) -> Self {
        Self { atoms, left, right }
    }
}

/// One atom of the embedding field that fell under the dominating envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingAtom {
    pub time: f64,
    pub level: f64,
    pub accepted_in_h: bool,
    pub accepted_in_hplus: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPath {
    pub initial: PointConfiguration,
    pub events: Vec<f64>,
    pub horizon: f64,
    pub dominating_events: Option<Vec<f64>>,
    pub embedding_log: Option<Vec<EmbeddingAtom>>,
}

impl SimulationPath {
    /// Path with the given events and no audit data. Used when events come
    /// from a file or from another simulator.
    pub fn from_events(initial: PointConfiguration, events: Vec<f64>, horizon: f64) -> Result<Self> {
        PointConfiguration::new(events.clone(), 0.0, horizon)?;
        Ok(Self {
            initial,
            events,
            horizon,
            dominating_events: None,
            embedding_log: None,
        })
    }

    /// Number of events in `(a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        count_in(&self.events, a, b)
    }

    /// Initial atoms followed by the events, in increasing order.
    pub fn all_atoms(&self) -> impl Iterator<Item = f64> + '_ {
        self.initial.atoms().iter().chain(self.events.iter()).copied()
    }
}

pub(crate) fn count_in(sorted: &[f64], a: f64, b: f64) -> usize {
    let lo = sorted.partition_point(|&x| x <= a);
    let hi = sorted.partition_point(|&x| x <= b);
    hi.saturating_sub(lo)
}

/// Retention policy for the embedding log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogPolicy {
    Off,
    /// Keep the log while it holds at most this many candidates, drop it
    /// entirely once the limit is exceeded.
    UpTo(usize),
    Always,
}

impl Default for LogPolicy {
    fn default() -> Self {
        LogPolicy::UpTo(1_000_000)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub log: LogPolicy,
}

/// `(λ + Σ_{u<t, t-u ≤ L} h(t-u))+`, the conditional intensity given the
/// atoms in `history`.
pub fn intensity_at(kernel: &SignedKernel, baseline: f64, history: &[f64], t: f64) -> f64 {
    let l = kernel.support_bound();
    let excitation: f64 = history
        .iter()
        .filter(|&&u| u < t && t - u <= l)
        .map(|&u| kernel.evaluate(t - u))
        .sum();
    (baseline + excitation).max(0.0)
}

/// A validated Hawkes model: baseline rate and subcritical signed kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Hawkes {
    kernel: SignedKernel,
    positive: SignedKernel,
    baseline: f64,
    summary: KernelSummary,
    /// Piece ends of the kernel, relative to the parent atom.
    boundaries: Vec<f64>,
}

impl Hawkes {
    pub fn new(kernel: SignedKernel, baseline: f64) -> Result<Self> {
        if !(baseline > 0.0 && baseline.is_finite()) {
            return Err(param("lambda", format!("baseline rate must be positive, got {baseline}")));
        }
        let summary = kernel.ensure_subcritical()?;
        let boundaries = kernel.pieces().iter().map(|p| p.end).collect();
        Ok(Self {
            positive: kernel.positive_part(),
            kernel,
            baseline,
            summary,
            boundaries,
        })
    }

    pub fn kernel(&self) -> &SignedKernel {
        &self.kernel
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn summary(&self) -> &KernelSummary {
        &self.summary
    }

    pub fn simulate(
        &self,
        initial: &PointConfiguration,
        horizon: f64,
        rng: &mut Stream,
        opts: SimOptions,
    ) -> Result<SimulationPath> {
        let mut path = self.run(initial, horizon, rng, opts)?;
        path.dominating_events = None;
        Ok(path)
    }

    pub fn simulate_coupled(
        &self,
        initial: &PointConfiguration,
        horizon: f64,
        rng: &mut Stream,
        opts: SimOptions,
    ) -> Result<SimulationPath> {
        self.run(initial, horizon, rng, opts)
    }

    /// Replicas `first..first + count` under `master_seed`, simulated in
    /// parallel and returned in replica order.
    #[allow(clippy::too_many_arguments)]
    pub fn simulate_replicas(
        &self,
        initial: &PointConfiguration,
        horizon: f64,
        master_seed: u64,
        first: u64,
        count: u64,
        coupled: bool,
        opts: SimOptions,
    ) -> Result<Vec<SimulationPath>> {
        (first..first + count)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::replica_stream(master_seed, i);
                if coupled {
                    self.simulate_coupled(initial, horizon, &mut r, opts)
                } else {
                    self.simulate(initial, horizon, &mut r, opts)
                }
            })
            .collect()
    }

    /// Next time after `t` at which a contribution of `u` changes value.
    fn next_boundary(&self, u: f64, t: f64) -> f64 {
        let idx = self.boundaries.partition_point(|&b| u + b <= t);
        self.boundaries.get(idx).map_or(f64::INFINITY, |&b| u + b)
    }

    fn run(
        &self,
        initial: &PointConfiguration,
        horizon: f64,
        rng: &mut Stream,
        opts: SimOptions,
    ) -> Result<SimulationPath> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(param("horizon", format!("must be positive and finite, got {horizon}")));
        }
        if initial.right() != 0.0 {
            return Err(Error::InvalidConfiguration(format!(
                "initial condition must live on (-A, 0], got right end {}",
                initial.right()
            )));
        }
        let l = self.kernel.support_bound();
        let lambda = self.baseline;

        // Initial atoms older than -L never influence (0, ∞).
        let relevant = initial.atoms().iter().copied().filter(|&u| -u < l);
        let mut dominating_active: VecDeque<f64> = relevant.clone().collect();
        let mut own_active: VecDeque<f64> = relevant.collect();

        let mut events = Vec::new();
        let mut dominating = Vec::new();
        let mut log = match opts.log {
            LogPolicy::Off => None,
            _ => Some(Vec::new()),
        };

        let mut t = 0.0_f64;
        'candidates: loop {
            let mut budget: f64 = rng.sample(Exp1);
            let (candidate, envelope) = loop {
                while dominating_active.front().is_some_and(|&u| u + l <= t) {
                    dominating_active.pop_front();
                }
                let next = dominating_active
                    .iter()
                    .map(|&u| self.next_boundary(u, t))
                    .fold(f64::INFINITY, f64::min);
                let rate = if next.is_finite() {
                    let mid = 0.5 * (t + next);
                    lambda
                        + dominating_active
                            .iter()
                            .map(|&u| self.positive.evaluate(mid - u))
                            .sum::<f64>()
                } else {
                    lambda
                };
                let room = rate * (next - t);
                if budget < room {
                    break (t + budget / rate, rate);
                }
                budget -= room;
                t = next;
                if t > horizon {
                    break 'candidates;
                }
            };
            if candidate > horizon {
                break;
            }
            if dominating.last().is_some_and(|&last| candidate <= last) {
                // Zero-probability tie with the previous candidate.
                t = candidate;
                continue;
            }
            let level = (1.0 - rng.random::<f64>()) * envelope;
            while own_active.front().is_some_and(|&u| u + l <= candidate) {
                own_active.pop_front();
            }
            let own = intensity_at(&self.kernel, lambda, own_active.make_contiguous(), candidate);
            let accepted = level <= own;

            dominating.push(candidate);
            dominating_active.push_back(candidate);
            if accepted {
                events.push(candidate);
                own_active.push_back(candidate);
            }
            if let Some(entries) = log.as_mut() {
                entries.push(EmbeddingAtom {
                    time: candidate,
                    level,
                    accepted_in_h: accepted,
                    accepted_in_hplus: true,
                });
                if let LogPolicy::UpTo(limit) = opts.log {
                    if entries.len() > limit {
                        log = None;
                    }
                }
            }
            t = candidate;
        }

        Ok(SimulationPath {
            initial: initial.clone(),
            events,
            horizon,
            dominating_events: Some(dominating),
            embedding_log: log,
        })
    }
}

/// Simulates `N^h` on `(0, horizon]` from `initial`.
pub fn simulate_hawkes(
    kernel: &SignedKernel,
    baseline: f64,
    initial: &PointConfiguration,
    horizon: f64,
    seed: u64,
) -> Result<SimulationPath> {
    Hawkes::new(kernel.clone(), baseline)?.simulate(
        initial,
        horizon,
        &mut rng::stream(seed),
        SimOptions::default(),
    )
}

/// Simulates `N^h` together with the dominating `N^{h+}` driven by the same
/// embedding field.
pub fn simulate_coupled(
    kernel: &SignedKernel,
    baseline: f64,
    initial: &PointConfiguration,
    horizon: f64,
    seed: u64,
) -> Result<SimulationPath> {
    Hawkes::new(kernel.clone(), baseline)?.simulate_coupled(
        initial,
        horizon,
        &mut rng::stream(seed),
        SimOptions::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty() -> PointConfiguration {
        PointConfiguration::empty(-2.0, 0.0)
    }

    #[test]
    fn intensity_examples() {
        let k = SignedKernel::constant(-0.5, 2.0).unwrap();
        assert_eq!(intensity_at(&k, 1.3, &[], 4.0), 1.3);
        assert_eq!(intensity_at(&k, 1.0, &[1.0], 1.5), 0.5);
        let k = SignedKernel::constant(-2.0, 1.0).unwrap();
        assert_eq!(intensity_at(&k, 1.0, &[0.5], 0.9), 0.0);
        // Atoms at or after t and atoms older than L do not contribute.
        assert_eq!(intensity_at(&k, 1.0, &[0.9], 0.9), 1.0);
        assert_eq!(intensity_at(&k, 1.0, &[-0.5], 0.9), 1.0);
    }

    #[test]
    fn configuration_validation() {
        assert!(PointConfiguration::new(vec![-1.0, -0.5], -2.0, 0.0).is_ok());
        assert!(PointConfiguration::new(vec![-0.5, -1.0], -2.0, 0.0).is_err());
        assert!(PointConfiguration::new(vec![-1.0, -1.0], -2.0, 0.0).is_err());
        assert!(PointConfiguration::new(vec![-2.0], -2.0, 0.0).is_err());
        assert!(PointConfiguration::new(vec![0.0], -2.0, 0.0).is_ok());
        assert!(PointConfiguration::from_unsorted(vec![-0.1, -1.0], -2.0, 0.0).is_ok());
    }

    #[test]
    fn rejects_supercritical_and_bad_rate() {
        let k = SignedKernel::constant(1.2, 1.0).unwrap();
        assert!(matches!(
            simulate_hawkes(&k, 1.0, &empty(), 10.0, 1),
            Err(Error::NotSubcritical { .. })
        ));
        let k = SignedKernel::constant(0.2, 1.0).unwrap();
        assert!(simulate_hawkes(&k, 0.0, &empty(), 10.0, 1).is_err());
        assert!(simulate_hawkes(&k, 1.0, &empty(), -1.0, 1).is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let k = SignedKernel::from_pieces([(0.0, 1.0, -0.3), (1.0, 2.0, 0.4)]).unwrap();
        let a = simulate_coupled(&k, 1.0, &empty(), 200.0, 11).unwrap();
        let b = simulate_coupled(&k, 1.0, &empty(), 200.0, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_hawkes(&k, 1.0, &empty(), 200.0, 11).unwrap();
        assert_eq!(a.events, c.events);
        assert!(c.dominating_events.is_none());
    }

    #[test]
    fn log_matches_events() {
        let k = SignedKernel::constant(-0.5, 2.0).unwrap();
        let p = simulate_coupled(&k, 1.0, &empty(), 500.0, 5).unwrap();
        let log = p.embedding_log.as_ref().unwrap();
        let accepted: Vec<f64> = log.iter().filter(|a| a.accepted_in_h).map(|a| a.time).collect();
        assert_eq!(accepted, p.events);
        let dom: Vec<f64> = log.iter().filter(|a| a.accepted_in_hplus).map(|a| a.time).collect();
        assert_eq!(&dom, p.dominating_events.as_ref().unwrap());
        for a in log {
            assert!(a.level > 0.0);
            // The level sits under the dominating envelope at the atom.
            assert!(a.level <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn log_policy_limits() {
        let k = SignedKernel::zero();
        let m = Hawkes::new(k, 1.0).unwrap();
        let mut r = rng::stream(3);
        let opts = SimOptions { log: LogPolicy::UpTo(10) };
        let p = m.simulate(&empty(), 100.0, &mut r, opts).unwrap();
        assert!(p.embedding_log.is_none());
        let mut r = rng::stream(3);
        let p = m.simulate(&empty(), 100.0, &mut r, SimOptions { log: LogPolicy::Off }).unwrap();
        assert!(p.embedding_log.is_none());
    }

    #[test]
    fn nonnegative_kernel_events_equal_dominating() {
        let k = SignedKernel::from_pieces([(0.0, 0.5, 0.6), (0.5, 1.5, 0.2)]).unwrap();
        let p = simulate_coupled(&k, 0.8, &empty(), 300.0, 2).unwrap();
        assert_eq!(Some(p.events.clone()), p.dominating_events);
    }

    #[test]
    fn initial_condition_inhibits_start() {
        // A strong inhibitory kernel and a dense initial burst silence (0, 1].
        let k = SignedKernel::constant(-5.0, 1.5).unwrap();
        let init = PointConfiguration::new(vec![-0.4, -0.2], -2.0, 0.0).unwrap();
        for seed in 0..50 {
            let p = simulate_hawkes(&k, 1.0, &init, 5.0, seed).unwrap();
            assert!(p.events.iter().all(|&e| e > 1.1));
        }
    }

    #[test]
    fn initial_condition_window_must_end_at_zero() {
        let init = PointConfiguration::empty(-2.0, 1.0);
        assert!(simulate_hawkes(&SignedKernel::zero(), 1.0, &init, 5.0, 1).is_err());
    }

    #[test]
    fn replicas_match_individual_streams() {
        let m = Hawkes::new(SignedKernel::constant(0.3, 1.0).unwrap(), 1.0).unwrap();
        let all = m
            .simulate_replicas(&empty(), 50.0, 99, 0, 4, false, SimOptions::default())
            .unwrap();
        for (i, p) in all.iter().enumerate() {
            let mut r = rng::replica_stream(99, i as u64);
            assert_eq!(p, &m.simulate(&empty(), 50.0, &mut r, SimOptions::default()).unwrap());
        }
        let tail = m
            .simulate_replicas(&empty(), 50.0, 99, 2, 2, false, SimOptions::default())
            .unwrap();
        assert_eq!(&all[2..], &tail[..]);
    }
}
