//! Estimators built on the excursion decomposition: the stationary mean
//! `π_A f`, the asymptotic variance `σ²(f)`, normal confidence intervals and
//! non-asymptotic concentration bounds.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::renewal::{integrate_counts, Excursion};
use crate::simulation::SimulationPath;
use crate::stats::normal_quantile;

/// Function of the window content. Only functions of the number of atoms in
/// the window are supported.
#[derive(Clone)]
pub enum WindowFunctional {
    Count,
    IndicatorEmpty,
    CountCapped(usize),
    Custom {
        name: String,
        f: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
        bounds: Option<(f64, f64)>,
    },
}

impl fmt::Debug for WindowFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

impl WindowFunctional {
    /// Parses `count`, `indicator_empty` or `count_capped(n)`.
    pub fn parse(id: &str) -> Result<Self> {
        let id = id.trim();
        match id {
            "count" => return Ok(Self::Count),
            "indicator_empty" => return Ok(Self::IndicatorEmpty),
            _ => {}
        }
        if let Some(n) = id.strip_prefix("count_capped(").and_then(|r| r.strip_suffix(')')) {
            return n
                .trim()
                .parse()
                .map(Self::CountCapped)
                .map_err(|_| param("functional", format!("bad cap in '{id}'")));
        }
        Err(param(
            "functional",
            format!("unknown functional '{id}', expected count, indicator_empty or count_capped(n)"),
        ))
    }

    pub fn id(&self) -> String {
        match self {
            Self::Count => "count".into(),
            Self::IndicatorEmpty => "indicator_empty".into(),
            Self::CountCapped(n) => format!("count_capped({n})"),
            Self::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, n: usize) -> f64 {
        match self {
            Self::Count => n as f64,
            Self::IndicatorEmpty => f64::from(n == 0),
            Self::CountCapped(cap) => n.min(*cap) as f64,
            Self::Custom { f, .. } => f(n),
        }
    }

    /// Interval `[a, b]` containing every value, when one is known.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            Self::Count => None,
            Self::IndicatorEmpty => Some((0.0, 1.0)),
            Self::CountCapped(cap) => Some((0.0, *cap as f64)),
            Self::Custom { bounds, .. } => *bounds,
        }
    }
}

/// `(1/T) ∫_0^T f(X_t) dt`, computed exactly.
pub fn time_average(path: &SimulationPath, f: &WindowFunctional, window: f64, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0 && horizon <= path.horizon) {
        return Err(param(
            "T",
            format!("averaging horizon must lie in (0, {}], got {horizon}", path.horizon),
        ));
    }
    let atoms: Vec<f64> = path.all_atoms().collect();
    Ok(integrate_counts(&atoms, window, 0.0, horizon, |n| f.eval(n)) / horizon)
}

/// Integral `I_k f` of the functional over one cycle and the cycle length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStat {
    pub integral: f64,
    pub duration: f64,
    pub events: usize,
}

pub fn cycle_stats(cycles: &[Excursion], f: &WindowFunctional, window: f64) -> Vec<CycleStat> {
    cycles
        .iter()
        .map(|c| CycleStat {
            integral: c.integrate(window, |n| f.eval(n)),
            duration: c.duration,
            events: c.events.len(),
        })
        .collect()
}

fn need(stats: &[CycleStat], needed: usize) -> Result<()> {
    if stats.len() < needed {
        Err(Error::InsufficientCycles {
            needed,
            found: stats.len(),
        })
    } else {
        Ok(())
    }
}

/// Ratio estimator `Σ I_k f / Σ duration_k`.
pub fn estimate_pi(stats: &[CycleStat]) -> Result<f64> {
    need(stats, 1)?;
    let num: f64 = stats.iter().map(|s| s.integral).sum();
    let den: f64 = stats.iter().map(|s| s.duration).sum();
    Ok(num / den)
}

/// Plug-in `mean((I_k f - π d_k)²) / mean(d_k)`.
pub fn estimate_sigma2(stats: &[CycleStat], pi: f64) -> Result<f64> {
    need(stats, 2)?;
    let n = stats.len() as f64;
    let sq: f64 = stats.iter().map(|s| (s.integral - pi * s.duration).powi(2)).sum();
    let den: f64 = stats.iter().map(|s| s.duration).sum();
    Ok((sq / n) / (den / n))
}

/// `π ± z_{(1+level)/2} sqrt(σ² / T)`.
pub fn clt_interval(pi: f64, sigma2: f64, horizon: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(param("level", format!("must lie in (0, 1), got {level}")));
    }
    if !(sigma2 >= 0.0) {
        return Err(param("sigma2", format!("must be >= 0, got {sigma2}")));
    }
    if !(horizon > 0.0) {
        return Err(param("T", format!("must be positive, got {horizon}")));
    }
    let half = normal_quantile(0.5 * (1.0 + level)) * (sigma2 / horizon).sqrt();
    Ok((pi - half, pi + half))
}

/// Constants of the Bernstein-type deviation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinBound {
    pub epsilon: f64,
    pub v: f64,
    pub c: f64,
}

/// Inputs of the simplified deviation bound for `f` with values in `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinInputs {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub mean_tau: f64,
    /// `E_∅ exp(α τ)`.
    pub exp_moment: f64,
    pub horizon: f64,
    pub eta: f64,
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(param("eta", format!("must lie in (0, 1], got {eta}")))
    }
}

/// `v = (2 (b-a)² / α²) ⌊T / Eτ⌋ E e^{ατ} e^{α Eτ}` and `c = |b-a| / α`.
/// `rate_cap` is `min(λ, γ+)`; `α` must stay strictly below it.
pub fn bernstein_epsilon(inputs: &BernsteinInputs, rate_cap: f64) -> Result<BernsteinBound> {
    let BernsteinInputs {
        a,
        b,
        alpha,
        mean_tau,
        exp_moment,
        horizon,
        eta,
    } = *inputs;
    if !(b > a) {
        return Err(param("bounds", format!("need a < b, got [{a}, {b}]")));
    }
    if !(alpha > 0.0 && alpha < rate_cap) {
        return Err(param(
            "alpha",
            format!("must lie in (0, min(lambda, gamma+) = {rate_cap}), got {alpha}"),
        ));
    }
    if !(mean_tau > 0.0 && exp_moment >= 1.0 && horizon > 0.0) {
        return Err(param(
            "moments",
            format!("need E tau > 0, E exp(alpha tau) >= 1 and T > 0, got {mean_tau}, {exp_moment}, {horizon}"),
        ));
    }
    let width = b - a;
    let v = 2.0 * width * width / (alpha * alpha)
        * (horizon / mean_tau).floor()
        * exp_moment
        * (alpha * mean_tau).exp();
    let c = width / alpha;
    let epsilon = bernstein_epsilon_from(c, v, width, mean_tau, horizon, eta)?;
    Ok(BernsteinBound { epsilon, v, c })
}

/// Closed-form radius from `(c, v)` directly.
pub fn bernstein_epsilon_from(c: f64, v: f64, width: f64, mean_tau: f64, horizon: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    let l = (eta / 4.0).ln();
    Ok((width.abs() * mean_tau - 2.0 * c * l + (4.0 * c * c * l * l - 8.0 * v * l).sqrt()) / horizon)
}

/// `4 exp(-x² / (4 (2v + c x)))` with `x = T ε - |b-a| Eτ`, not capped at 1.
/// Returns 4 when `x <= 0`.
pub fn bernstein_tail(c: f64, v: f64, width: f64, mean_tau: f64, horizon: f64, epsilon: f64) -> f64 {
    let x = horizon * epsilon - width.abs() * mean_tau;
    if x <= 0.0 {
        return 4.0;
    }
    4.0 * (-x * x / (4.0 * (2.0 * v + c * x))).exp()
}

/// Moments of the cycle quantities entering the full concentration bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    pub mean_tau: f64,
    pub var_tau: f64,
    pub sigma2: f64,
    pub c_f_plus: f64,
    pub c_f_minus: f64,
    pub c_tau_plus: f64,
    pub c_tau_minus: f64,
    pub tau0: Option<DelayMoments>,
    /// Highest moment order actually used.
    pub k_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayMoments {
    pub mean: f64,
    pub var: f64,
    pub c_plus: f64,
}

pub const DEFAULT_K_MAX: usize = 12;
/// Cycles required per moment order before the order is used.
const CYCLES_PER_ORDER: usize = 10;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `sup_{3<=k<=k_max} ((2/k!) E[(Z)_±^k] / scale)^{1/(k-2)}`.
fn sup_constant(z: &[f64], scale: f64, positive: bool, k_max: usize) -> f64 {
    let n = z.len() as f64;
    let mut best: f64 = 0.0;
    for k in 3..=k_max {
        let moment = z
            .iter()
            .map(|&x| if positive { x.max(0.0) } else { (-x).max(0.0) })
            .map(|x| x.powi(k as i32))
            .sum::<f64>()
            / n;
        if moment == 0.0 {
            continue;
        }
        if !(scale > 0.0) {
            return f64::INFINITY;
        }
        let value = (2.0 / factorial(k) * moment / scale).powf(1.0 / (k as f64 - 2.0));
        best = best.max(value);
    }
    best
}

fn usable_k_max(samples: usize, requested: usize) -> Result<usize> {
    if requested < 3 {
        return Err(param("k_max", format!("must be >= 3, got {requested}")));
    }
    let affordable = samples / CYCLES_PER_ORDER;
    if affordable >= requested {
        return Ok(requested);
    }
    if affordable < 3 {
        return Err(Error::InsufficientCycles {
            needed: 3 * CYCLES_PER_ORDER,
            found: samples,
        });
    }
    log::warn!("only {samples} samples: moment order lowered from {requested} to {affordable}");
    Ok(affordable)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

impl MomentEstimates {
    /// Estimates from complete cycles and, for a nonempty initial window,
    /// from independent samples of `τ_0`.
    pub fn from_cycles(stats: &[CycleStat], k_max: usize, tau0_samples: Option<&[f64]>) -> Result<Self> {
        let k_max = usable_k_max(stats.len(), k_max)?;
        let pi = estimate_pi(stats)?;
        let sigma2 = estimate_sigma2(stats, pi)?;
        let durations: Vec<f64> = stats.iter().map(|s| s.duration).collect();
        let (mean_tau, var_tau) = mean_var(&durations);
        let zf: Vec<f64> = stats.iter().map(|s| s.integral - pi * s.duration).collect();
        let zt: Vec<f64> = durations.iter().map(|d| d - mean_tau).collect();
        let scale_f = mean_tau * sigma2;
        let tau0 = match tau0_samples {
            None => None,
            Some(samples) => {
                let k0 = usable_k_max(samples.len(), k_max)?;
                let (mean, var) = mean_var(samples);
                let z0: Vec<f64> = samples.iter().map(|x| x - mean).collect();
                Some(DelayMoments {
                    mean,
                    var,
                    c_plus: sup_constant(&z0, var, true, k0),
                })
            }
        };
        Ok(Self {
            mean_tau,
            var_tau,
            sigma2,
            c_f_plus: sup_constant(&zf, scale_f, true, k_max),
            c_f_minus: sup_constant(&zf, scale_f, false, k_max),
            c_tau_plus: sup_constant(&zt, var_tau, true, k_max),
            c_tau_minus: sup_constant(&zt, var_tau, false, k_max),
            tau0,
            k_max,
        })
    }
}

/// The five-term bound and its terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationBound {
    pub value: f64,
    pub terms: [f64; 5],
    /// A numerator was nonpositive, so the bound defaults to 1.
    pub vacuous: bool,
}

fn bernstein_term(d: f64, variance_part: f64, c: f64) -> f64 {
    (-d * d / (variance_part + 4.0 * c * d)).exp()
}

/// Bound on `P(|time average - π_A f| >= ε)` for `f` in `[a, b]`. When
/// `moments.tau0` is `None` the initial window is taken to be empty: the
/// delay term vanishes and `T` replaces `T - sqrt(T)`.
pub fn concentration_bound_full(
    bounds: (f64, f64),
    moments: &MomentEstimates,
    horizon: f64,
    epsilon: f64,
) -> Result<ConcentrationBound> {
    let (a, b) = bounds;
    if !(b >= a) {
        return Err(param("bounds", format!("need a <= b, got [{a}, {b}]")));
    }
    if !(horizon > 0.0 && epsilon > 0.0) {
        return Err(param("T", format!("T and epsilon must be positive, got {horizon}, {epsilon}")));
    }
    let width = b - a;
    let effective = match moments.tau0 {
        None => horizon,
        Some(_) => horizon - horizon.sqrt(),
    };
    let d = effective * epsilon - width * moments.mean_tau;
    let vacuous = ConcentrationBound {
        value: 1.0,
        terms: [1.0; 5],
        vacuous: true,
    };
    if d <= 0.0 {
        return Ok(vacuous);
    }
    let vf = 8.0 * horizon * moments.sigma2;
    let vt = 8.0 * horizon * width * width * moments.var_tau / moments.mean_tau;
    let mut terms = [
        bernstein_term(d, vf, moments.c_f_plus),
        bernstein_term(d, vf, moments.c_f_minus),
        bernstein_term(d, vt, width * moments.c_tau_plus),
        bernstein_term(d, vt, width * moments.c_tau_minus),
        0.0,
    ];
    if let Some(t0) = moments.tau0 {
        let d0 = horizon.sqrt() * epsilon - 2.0 * width * t0.mean;
        if d0 <= 0.0 {
            return Ok(vacuous);
        }
        terms[4] = bernstein_term(d0, 8.0 * width * width * t0.var, width * t0.c_plus);
    }
    Ok(ConcentrationBound {
        value: terms.iter().sum::<f64>().min(1.0),
        terms,
        vacuous: false,
    })
}

/// Summary of the excursion estimators for one functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub functional: String,
    pub pi_hat: f64,
    pub sigma2_hat: f64,
    pub mean_tau: f64,
    pub var_tau: f64,
    pub n_cycles: usize,
    /// Total length of the complete cycles, the `T` used in the interval.
    pub observed_time: f64,
    pub level: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub epsilon_eta: Option<f64>,
}

impl EstimatorReport {
    pub fn from_stats(f: &WindowFunctional, stats: &[CycleStat], level: f64) -> Result<Self> {
        let pi_hat = estimate_pi(stats)?;
        let sigma2_hat = estimate_sigma2(stats, pi_hat)?;
        let durations: Vec<f64> = stats.iter().map(|s| s.duration).collect();
        let (mean_tau, var_tau) = mean_var(&durations);
        let observed_time: f64 = durations.iter().sum();
        let (ci_low, ci_high) = clt_interval(pi_hat, sigma2_hat, observed_time, level)?;
        Ok(Self {
            functional: f.id(),
            pi_hat,
            sigma2_hat,
            mean_tau,
            var_tau,
            n_cycles: stats.len(),
            observed_time,
            level,
            ci_low,
            ci_high,
            epsilon_eta: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renewal::split_excursions;
    use crate::simulation::PointConfiguration;

    fn stat(integral: f64, duration: f64) -> CycleStat {
        CycleStat {
            integral,
            duration,
            events: 0,
        }
    }

    #[test]
    fn parse_ids() {
        assert!(matches!(WindowFunctional::parse("count").unwrap(), WindowFunctional::Count));
        assert!(matches!(
            WindowFunctional::parse("count_capped(4)").unwrap(),
            WindowFunctional::CountCapped(4)
        ));
        assert!(WindowFunctional::parse("median").is_err());
        assert_eq!(WindowFunctional::CountCapped(3).eval(7), 3.0);
        assert_eq!(WindowFunctional::IndicatorEmpty.bounds(), Some((0.0, 1.0)));
    }

    #[test]
    fn constant_functional() {
        let one = WindowFunctional::Custom {
            name: "one".into(),
            f: Arc::new(|_| 1.0),
            bounds: Some((1.0, 1.0)),
        };
        let init = PointConfiguration::empty(-1.0, 0.0);
        let p = SimulationPath::from_events(init, vec![0.5, 0.7, 3.0, 6.2], 10.0).unwrap();
        assert!((time_average(&p, &one, 1.0, 10.0).unwrap() - 1.0).abs() < 1e-15);
        let split = split_excursions(&p, 1.0).unwrap();
        let stats = cycle_stats(&split.cycles, &one, 1.0);
        assert_eq!(estimate_pi(&stats).unwrap(), 1.0);
        assert_eq!(estimate_sigma2(&stats, 1.0).unwrap(), 0.0);
        let empty = SimulationPath::from_events(PointConfiguration::empty(-1.0, 0.0), vec![], 5.0).unwrap();
        assert_eq!(time_average(&empty, &WindowFunctional::Count, 1.0, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn span_average_matches_ratio() {
        let init = PointConfiguration::empty(-1.0, 0.0);
        let p = SimulationPath::from_events(init, vec![0.5, 0.7, 1.4, 3.0, 6.2, 6.9, 8.3], 10.0).unwrap();
        let split = split_excursions(&p, 1.0).unwrap();
        let f = WindowFunctional::Count;
        let stats = cycle_stats(&split.cycles, &f, 1.0);
        let span: f64 = stats.iter().map(|s| s.duration).sum();
        let avg = time_average(&p, &f, 1.0, span).unwrap();
        assert!((avg - estimate_pi(&stats).unwrap()).abs() < 1e-12);
        let mut rev = stats.clone();
        rev.reverse();
        assert!((estimate_pi(&rev).unwrap() - estimate_pi(&stats).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn insufficient_cycles() {
        assert!(matches!(estimate_pi(&[]), Err(Error::InsufficientCycles { .. })));
        assert!(matches!(
            estimate_sigma2(&[stat(1.0, 1.0)], 1.0),
            Err(Error::InsufficientCycles { .. })
        ));
    }

    #[test]
    fn clt_examples() {
        assert_eq!(clt_interval(0.3, 0.0, 10.0, 0.95).unwrap(), (0.3, 0.3));
        let (lo, hi) = clt_interval(0.0, 1.0, 1e4, 0.95).unwrap();
        assert!((hi - 0.0196).abs() < 1e-6 && (lo + 0.0196).abs() < 1e-6);
        let (lo99, hi99) = clt_interval(0.0, 1.0, 1e4, 0.99).unwrap();
        assert!(lo99 < lo && hi99 > hi);
        assert!(clt_interval(0.0, 1.0, 1e4, 1.0).is_err());
    }

    #[test]
    fn bernstein_example() {
        let eta = 4.0 * (-2.0f64).exp();
        let e = std::f64::consts::E;
        let eps = bernstein_epsilon_from(2.0, 10.0, 1.0, e, 1000.0, eta).unwrap();
        let expected = (e + 8.0 + 4.0 * 14f64.sqrt()) / 1000.0;
        assert!((eps - expected).abs() < 1e-15);
        assert!((eps - 0.025685).abs() < 5e-7);
        assert!(bernstein_epsilon_from(2.0, 10.0, 1.0, e, 1000.0, 1.5).is_err());
    }

    #[test]
    fn bernstein_monotone_and_fixed_point() {
        let inputs = |eta: f64, horizon: f64| BernsteinInputs {
            a: 0.0,
            b: 1.0,
            alpha: 0.2,
            mean_tau: std::f64::consts::E,
            exp_moment: 2.0,
            horizon,
            eta,
        };
        let mut prev = f64::INFINITY;
        for eta in [0.01, 0.05, 0.2, 0.5, 1.0] {
            let b = bernstein_epsilon(&inputs(eta, 1000.0), 1.0).unwrap();
            assert!(b.epsilon < prev);
            prev = b.epsilon;
            let back = bernstein_tail(b.c, b.v, 1.0, std::f64::consts::E, 1000.0, b.epsilon);
            assert!((back - eta).abs() < 1e-9 * eta, "{back} vs {eta}");
        }
        let scaled: Vec<f64> = [1e4, 1e6, 1e8]
            .iter()
            .map(|&t| bernstein_epsilon(&inputs(0.1, t), 1.0).unwrap().epsilon * t.sqrt())
            .collect();
        assert!((scaled[2] / scaled[1] - 1.0).abs() < 0.05);
        assert!(bernstein_epsilon(&inputs(0.1, 1e3), 0.2).is_err());
    }

    #[test]
    fn full_bound_guards() {
        let stats: Vec<CycleStat> = (0..200)
            .map(|i| stat(((i * 7) % 5) as f64 * 0.3, 1.0 + ((i * 3) % 7) as f64 * 0.5))
            .collect();
        let m = MomentEstimates::from_cycles(&stats, DEFAULT_K_MAX, None).unwrap();
        assert_eq!(m.k_max, DEFAULT_K_MAX);
        let tiny = concentration_bound_full((0.0, 1.0), &m, 100.0, 1e-3).unwrap();
        assert!(tiny.vacuous && tiny.value == 1.0);
        let b = concentration_bound_full((0.0, 1.0), &m, 1e5, 0.05).unwrap();
        assert!(!b.vacuous && b.value < 1.0 && b.terms[4] == 0.0);
        let few = MomentEstimates::from_cycles(&stats[..50], DEFAULT_K_MAX, None).unwrap();
        assert_eq!(few.k_max, 5);
        assert!(MomentEstimates::from_cycles(&stats[..20], DEFAULT_K_MAX, None).is_err());
        let t0: Vec<f64> = (0..100).map(|i| (i % 9) as f64 * 0.1).collect();
        let m0 = MomentEstimates::from_cycles(&stats, DEFAULT_K_MAX, Some(&t0)).unwrap();
        let b0 = concentration_bound_full((0.0, 1.0), &m0, 1e5, 0.05).unwrap();
        assert!(b0.terms[4] > 0.0 && b0.value >= b.value);
    }
}
