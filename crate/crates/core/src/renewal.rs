//! The sliding-window process `X_t = atoms in (t - A, t]`, its renewal times
//! (returns to the empty window) and the split of a path into excursions.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::kernel::SignedKernel;
use crate::simulation::{PointConfiguration, SimulationPath};
use crate::stats::SampleSummary;

/// Window length `A`, checked against the kernel support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    window: f64,
}

impl WindowConfig {
    pub fn new(window: f64, kernel: &SignedKernel) -> Result<Self> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(param("window", format!("must be positive and finite, got {window}")));
        }
        if window < kernel.support_bound() {
            return Err(param(
                "window",
                format!(
                    "window {window} is shorter than the kernel support {}",
                    kernel.support_bound()
                ),
            ));
        }
        Ok(Self { window })
    }

    pub fn length(&self) -> f64 {
        self.window
    }
}

/// Atoms of the path in `(t - A, t]`, shifted by `-t`. Membership is tested
/// as `u + A > t` so that it agrees exactly with renewal times `u + A`.
pub fn window_state(path: &SimulationPath, t: f64, window: f64) -> PointConfiguration {
    let shifted: Vec<f64> = path
        .all_atoms()
        .filter(|&u| u + window > t && u <= t)
        .map(|u| u - t)
        .collect();
    PointConfiguration::from_parts_unchecked(shifted, -window, 0.0)
}

/// Entrance time `τ_0` (absent when the window never empties before the
/// horizon) and the later returns `τ_1 < τ_2 < …` to the empty window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Renewals {
    pub tau0: Option<f64>,
    pub taus: Vec<f64>,
}

/// All atoms that can matter for the window on `[0, horizon]`.
fn relevant_atoms(path: &SimulationPath, window: f64) -> Vec<f64> {
    path.all_atoms().filter(|&u| u + window > 0.0).collect()
}

fn check_window(window: f64) -> Result<()> {
    if window > 0.0 && window.is_finite() {
        Ok(())
    } else {
        Err(param("window", format!("must be positive and finite, got {window}")))
    }
}

/// Gap scan: `u + A` is a return to the empty window exactly when no atom
/// lies in `(u, u + A]`.
pub fn detect_renewals(path: &SimulationPath, window: f64) -> Result<Renewals> {
    check_window(window)?;
    let atoms = relevant_atoms(path, window);
    let mut returns = Vec::new();
    for (i, &u) in atoms.iter().enumerate() {
        let t = u + window;
        if t > path.horizon {
            break;
        }
        if atoms.get(i + 1).is_none_or(|&next| next > t) {
            returns.push(t);
        }
    }
    let initially_empty = atoms.first().is_none_or(|&u| u > 0.0);
    if initially_empty {
        return Ok(Renewals {
            tau0: Some(0.0),
            taus: returns,
        });
    }
    let mut it = returns.into_iter();
    let tau0 = it.next();
    Ok(Renewals {
        tau0,
        taus: it.collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcursionKind {
    Delay,
    Cycle,
    Partial,
}

/// Piece `[start, start + duration)` of a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub kind: ExcursionKind,
    pub start: f64,
    pub duration: f64,
    /// Atoms in `(start - A, start]`, relative to `start`; empty for cycles.
    pub entry: Vec<f64>,
    /// Events in `(start, start + duration)`, relative to `start`.
    pub events: Vec<f64>,
}

impl Excursion {
    /// `∫_0^duration g(count of X_{start+s}) ds`, exact.
    pub fn integrate<G: Fn(usize) -> f64>(&self, window: f64, g: G) -> f64 {
        let atoms: Vec<f64> = self.entry.iter().chain(&self.events).copied().collect();
        integrate_counts(&atoms, window, 0.0, self.duration, g)
    }
}

/// `∫_a^b g(#{u in atoms : t - A < u <= t}) dt` for sorted `atoms`. The
/// window count is right-continuous and changes only at `u` and `u + A`.
pub fn integrate_counts<G: Fn(usize) -> f64>(atoms: &[f64], window: f64, a: f64, b: f64, g: G) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let enter_lo = atoms.partition_point(|&u| u <= a);
    let enter_hi = atoms.partition_point(|&u| u < b);
    let leave_lo = atoms.partition_point(|&u| u + window <= a);
    let leave_hi = atoms.partition_point(|&u| u + window < b);
    let mut count = atoms.partition_point(|&u| u <= a) - leave_lo;
    let (mut i, mut j) = (enter_lo, leave_lo);
    let mut t = a;
    let mut total = 0.0;
    while i < enter_hi || j < leave_hi {
        let enter = atoms.get(i).copied().filter(|_| i < enter_hi);
        let leave = atoms.get(j).map(|&u| u + window).filter(|_| j < leave_hi);
        let next = match (enter, leave) {
            (Some(e), Some(l)) => e.min(l),
            (Some(e), None) => e,
            (None, Some(l)) => l,
            (None, None) => unreachable!(),
        };
        total += g(count) * (next - t);
        t = next;
        if enter == Some(next) {
            count += 1;
            i += 1;
        } else {
            count -= 1;
            j += 1;
        }
    }
    total + g(count) * (b - t)
}

/// Delay `[0, τ_0)`, complete cycles `[τ_{k-1}, τ_k)` and the trailing
/// incomplete segment up to the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionSplit {
    pub delay: Excursion,
    pub cycles: Vec<Excursion>,
    pub partial: Option<Excursion>,
    pub renewals: Renewals,
}

pub fn split_excursions(path: &SimulationPath, window: f64) -> Result<ExcursionSplit> {
    let renewals = detect_renewals(path, window)?;
    let atoms = relevant_atoms(path, window);
    let segment = |kind, start: f64, end: f64| {
        let lo = atoms.partition_point(|&u| u + window <= start);
        let mid = atoms.partition_point(|&u| u <= start);
        let hi = atoms.partition_point(|&u| u < end);
        let entry = atoms[lo..mid].iter().map(|&u| u - start).collect();
        let events = atoms[mid..hi.max(mid)].iter().map(|&u| u - start).collect();
        Excursion {
            kind,
            start,
            duration: end - start,
            entry,
            events,
        }
    };
    let Some(tau0) = renewals.tau0 else {
        return Ok(ExcursionSplit {
            delay: segment(ExcursionKind::Delay, 0.0, path.horizon),
            cycles: Vec::new(),
            partial: None,
            renewals,
        });
    };
    let delay = segment(ExcursionKind::Delay, 0.0, tau0);
    let mut cycles = Vec::with_capacity(renewals.taus.len());
    let mut start = tau0;
    for &t in &renewals.taus {
        cycles.push(segment(ExcursionKind::Cycle, start, t));
        start = t;
    }
    let partial = (start < path.horizon).then(|| segment(ExcursionKind::Partial, start, path.horizon));
    Ok(ExcursionSplit {
        delay,
        cycles,
        partial,
        renewals,
    })
}

/// Empirical `E[exp(α τ)]` over cycle durations. The rate must satisfy
/// `α < min(λ, γ+)`, beyond which the moment may be infinite.
pub fn estimate_exp_moment(durations: &[f64], alpha: f64, baseline: f64, gamma_plus: f64) -> Result<SampleSummary> {
    let cap = baseline.min(gamma_plus);
    if !(alpha >= 0.0) || alpha >= cap {
        return Err(param(
            "alpha",
            format!("exponential moment rate {alpha} must lie in [0, min(lambda, gamma+) = {cap}); finiteness is not guaranteed otherwise"),
        ));
    }
    if durations.is_empty() {
        return Err(crate::error::Error::InsufficientCycles { needed: 1, found: 0 });
    }
    let values: Vec<f64> = durations.iter().map(|&d| (alpha * d).exp()).collect();
    Ok(SampleSummary::from_slice(&values))
}
