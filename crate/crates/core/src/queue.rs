//! M/G/∞ queues: simulation, the Takács transforms of the first return time
//! and of the busy period, the abscissa of convergence, and tail rates.
//!
//! For a service survival function `S = 1 - G` with cumulative
//! `C(t) = ∫_0^t S`, everything below is driven by
//!
//! ```text
//! J(s) = λ ∫_0^∞ S(t) exp(-s t - λ C(t)) dt,
//! ```
//!
//! which is finite for `s > -γ` and strictly decreasing in `s`. The
//! integration-by-parts form `D(s) = (1 - J(s)) / s` removes the apparent
//! singularity of the original transforms at `s = 0`.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterRealization, ClusterSampler};
use crate::error::{param, Error, Result};
use crate::kernel::SignedKernel;
use crate::quadrature;
use crate::rng::Stream;

const QUAD_REL_TOL: f64 = 1e-11;
/// Survival level below which the exponential tail is integrated in closed form.
const TAIL_CUT: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceDistribution {
    Deterministic { duration: f64 },
    Exponential { rate: f64 },
    /// Cluster length of a nonnegative kernel plus a fixed shift `A`.
    ShiftedCluster { kernel: SignedKernel, shift: f64 },
    /// Uniform draw from a fixed sample (sorted ascending).
    Empirical { samples: Vec<f64> },
}

/// Service-time law together with the exponential rate `γ` of its tail
/// (`+inf` for bounded services).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceModel {
    pub distribution: ServiceDistribution,
    pub tail_rate: f64,
}

impl ServiceModel {
    pub fn deterministic(duration: f64) -> Result<Self> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(param("service", format!("duration must be finite and >= 0, got {duration}")));
        }
        Ok(Self {
            distribution: ServiceDistribution::Deterministic { duration },
            tail_rate: f64::INFINITY,
        })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(param("service", format!("rate must be positive, got {rate}")));
        }
        Ok(Self {
            distribution: ServiceDistribution::Exponential { rate },
            tail_rate: rate,
        })
    }

    /// Services `H + shift` with `H` the cluster length of `kernel`; the
    /// tail rate is the kernel's cluster decay rate.
    pub fn shifted_cluster(kernel: SignedKernel, shift: f64) -> Result<Self> {
        ClusterSampler::new(&kernel)?;
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(param("window", format!("shift must be finite and >= 0, got {shift}")));
        }
        let tail_rate = kernel.summarize().gamma;
        Ok(Self {
            distribution: ServiceDistribution::ShiftedCluster { kernel, shift },
            tail_rate,
        })
    }

    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(param("service", "empirical samples must be nonempty, finite and >= 0"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self {
            distribution: ServiceDistribution::Empirical { samples },
            tail_rate: f64::INFINITY,
        })
    }

    /// Replaces a cluster-based service by an empirical table of `n` draws,
    /// keeping the declared tail rate. Other models are returned unchanged.
    pub fn tabulate(&self, n: usize, rng: &mut Stream) -> Result<Self> {
        match &self.distribution {
            ServiceDistribution::ShiftedCluster { .. } => {
                let mut sampler = ServiceSampler::new(self)?;
                let samples = (0..n).map(|_| sampler.draw(rng)).collect();
                let mut table = Self::empirical(samples)?;
                table.tail_rate = self.tail_rate;
                Ok(table)
            }
            _ => Ok(self.clone()),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match &self.distribution {
            ServiceDistribution::Deterministic { duration } => Some(*duration),
            ServiceDistribution::Exponential { rate } => Some(1.0 / rate),
            ServiceDistribution::Empirical { samples } => {
                Some(samples.iter().sum::<f64>() / samples.len() as f64)
            }
            ServiceDistribution::ShiftedCluster { .. } => None,
        }
    }
}

enum Sampler {
    Deterministic(f64),
    Exponential(Exp<f64>),
    Cluster(ClusterSampler, f64),
    Empirical(Vec<f64>),
}

/// Draws i.i.d. service times.
pub struct ServiceSampler(Sampler);

impl ServiceSampler {
    pub fn new(model: &ServiceModel) -> Result<Self> {
        Ok(Self(match &model.distribution {
            ServiceDistribution::Deterministic { duration } => Sampler::Deterministic(*duration),
            ServiceDistribution::Exponential { rate } => {
                Sampler::Exponential(Exp::new(*rate).map_err(|e| param("service", e.to_string()))?)
            }
            ServiceDistribution::ShiftedCluster { kernel, shift } => {
                Sampler::Cluster(ClusterSampler::new(kernel)?, *shift)
            }
            ServiceDistribution::Empirical { samples } => Sampler::Empirical(samples.clone()),
        }))
    }

    pub fn draw(&mut self, rng: &mut Stream) -> f64 {
        match &self.0 {
            Sampler::Deterministic(d) => *d,
            Sampler::Exponential(e) => e.sample(rng),
            Sampler::Cluster(s, shift) => s.sample(rng).length + shift,
            Sampler::Empirical(xs) => xs[rng.random_range(0..xs.len())],
        }
    }
}

/// Customer count path of an M/G/∞ queue started empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueTrajectory {
    pub arrivals: Vec<f64>,
    /// Departure time of each customer, in arrival order.
    pub departures: Vec<f64>,
    /// Successive return times to zero that are `<= horizon`.
    pub return_times: Vec<f64>,
    /// Start (first arrival) of each completed busy period.
    pub busy_starts: Vec<f64>,
    /// Lengths `B_k` of the completed busy periods.
    pub busy_periods: Vec<f64>,
    /// Lebesgue measure of `{t in [0, horizon] : Y_t = 0}`.
    pub idle_time: f64,
    pub horizon: f64,
}

impl QueueTrajectory {
    /// Builds the trajectory from arrival and departure times of each
    /// customer. At equal times arrivals are processed first, so a customer
    /// with zero service forms a busy period of length zero.
    pub fn from_customers(arrivals: Vec<f64>, departures: Vec<f64>, horizon: f64) -> Self {
        assert_eq!(arrivals.len(), departures.len());
        let mut deps: Vec<f64> = departures.clone();
        deps.sort_by(f64::total_cmp);
        let mut return_times = Vec::new();
        let mut busy_starts = Vec::new();
        let mut busy_periods = Vec::new();
        let mut idle_time = 0.0;
        let mut count = 0usize;
        let mut last_empty_since = 0.0;
        let mut current_start = 0.0;
        let (mut i, mut j) = (0, 0);
        loop {
            let next_arrival = arrivals.get(i).copied().filter(|&a| a <= horizon);
            let next_departure = deps.get(j).copied().filter(|&d| d <= horizon);
            match (next_arrival, next_departure) {
                (Some(a), d) if d.is_none_or(|d| a <= d) => {
                    if count == 0 {
                        idle_time += a - last_empty_since;
                        current_start = a;
                    }
                    count += 1;
                    i += 1;
                }
                (_, Some(d)) => {
                    count -= 1;
                    j += 1;
                    if count == 0 {
                        return_times.push(d);
                        busy_starts.push(current_start);
                        busy_periods.push(d - current_start);
                        last_empty_since = d;
                    }
                }
                (None, None) => break,
                (Some(_), None) => unreachable!(),
            }
        }
        if count == 0 {
            idle_time += horizon - last_empty_since;
        }
        Self {
            arrivals,
            departures,
            return_times,
            busy_starts,
            busy_periods,
            idle_time,
            horizon,
        }
    }

    pub fn first_return(&self) -> Option<f64> {
        self.return_times.first().copied()
    }

    /// Number of customers `Y_t`.
    pub fn count_at(&self, t: f64) -> usize {
        self.arrivals
            .iter()
            .zip(&self.departures)
            .filter(|(&a, &d)| a <= t && d > t)
            .count()
    }
}

/// Queue started empty with Poisson(`λ`) arrivals on `(0, horizon]`.
pub fn simulate_mg_infty(
    lambda: f64,
    service: &ServiceModel,
    horizon: f64,
    rng: &mut Stream,
) -> Result<QueueTrajectory> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(param("lambda", format!("arrival rate must be positive, got {lambda}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(param("horizon", format!("must be positive and finite, got {horizon}")));
    }
    let gap = Exp::new(lambda).map_err(|e| param("lambda", e.to_string()))?;
    let mut sampler = ServiceSampler::new(service)?;
    let mut arrivals = Vec::new();
    let mut departures = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t > horizon {
            break;
        }
        arrivals.push(t);
        departures.push(t + sampler.draw(rng));
    }
    Ok(QueueTrajectory::from_customers(arrivals, departures, horizon))
}

/// Queue fed by the ancestors of a cluster realization, each served for
/// `H_k + window`; departures are `(V_k + H_k) + window`.
pub fn queue_from_clusters(real: &ClusterRealization, window: f64, horizon: f64) -> QueueTrajectory {
    let departures = real.last_births().into_iter().map(|x| x + window).collect();
    QueueTrajectory::from_customers(real.ancestors.clone(), departures, horizon)
}

/// First arrival `V_1` and the following busy period `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstBusyCycle {
    pub arrival: f64,
    pub busy_period: f64,
}

impl FirstBusyCycle {
    pub fn first_return(&self) -> f64 {
        self.arrival + self.busy_period
    }
}

/// Samples `(V_1, B)` without a horizon by extending the busy period until
/// no arrival falls before the last departure.
pub fn sample_first_busy_cycle(
    lambda: f64,
    sampler: &mut ServiceSampler,
    rng: &mut Stream,
) -> FirstBusyCycle {
    let gap = Exp::new(lambda).expect("positive rate");
    let arrival = gap.sample(rng);
    let mut end = arrival + sampler.draw(rng);
    let mut t = arrival;
    loop {
        t += gap.sample(rng);
        if t > end {
            break;
        }
        end = end.max(t + sampler.draw(rng));
    }
    FirstBusyCycle {
        arrival,
        busy_period: end - arrival,
    }
}

fn check_rate(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(param("lambda", format!("arrival rate must be positive, got {lambda}")))
    }
}

/// Survival `S(t)` and its integral `C(t)` for analytic service models.
struct Survival<'a> {
    model: &'a ServiceModel,
}

impl Survival<'_> {
    fn new(model: &ServiceModel) -> Result<Survival<'_>> {
        if let ServiceDistribution::ShiftedCluster { .. } = model.distribution {
            return Err(param(
                "service",
                "cluster-based services have no closed-form law; tabulate them first",
            ));
        }
        Ok(Survival { model })
    }

    fn survival(&self, t: f64) -> f64 {
        match &self.model.distribution {
            ServiceDistribution::Deterministic { duration } => f64::from(t < *duration),
            ServiceDistribution::Exponential { rate } => (-rate * t).exp(),
            ServiceDistribution::Empirical { samples } => {
                let above = samples.len() - samples.partition_point(|&x| x <= t);
                above as f64 / samples.len() as f64
            }
            ServiceDistribution::ShiftedCluster { .. } => unreachable!(),
        }
    }

    fn cumulative(&self, t: f64) -> f64 {
        match &self.model.distribution {
            ServiceDistribution::Deterministic { duration } => t.min(*duration),
            ServiceDistribution::Exponential { rate } => -(-rate * t).exp_m1() / rate,
            ServiceDistribution::Empirical { samples } => {
                samples.iter().map(|&x| x.min(t)).sum::<f64>() / samples.len() as f64
            }
            ServiceDistribution::ShiftedCluster { .. } => unreachable!(),
        }
    }

    /// Breakpoints of `S` on `(0, ∞)` and the point beyond which the tail is
    /// handled analytically.
    fn grid(&self) -> (Vec<f64>, f64) {
        match &self.model.distribution {
            ServiceDistribution::Deterministic { duration } => (vec![], *duration),
            ServiceDistribution::Exponential { rate } => (vec![], -TAIL_CUT.ln() / rate),
            ServiceDistribution::Empirical { samples } => {
                let mut pts = samples.clone();
                pts.dedup();
                let end = *pts.last().expect("nonempty");
                pts.pop();
                pts.retain(|&x| x > 0.0);
                (pts, end)
            }
            ServiceDistribution::ShiftedCluster { .. } => unreachable!(),
        }
    }

    fn is_piecewise_constant(&self) -> bool {
        !matches!(self.model.distribution, ServiceDistribution::Exponential { .. })
    }

    /// Pieces `[a, b)` with constant survival, for piecewise-constant models.
    fn constant_pieces(&self) -> Vec<(f64, f64, f64)> {
        let (mut pts, end) = self.grid();
        pts.insert(0, 0.0);
        pts.push(end);
        pts.windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (w[0], w[1], self.survival(0.5 * (w[0] + w[1]))))
            .collect()
    }
}

/// `∫_0^len exp(-k x) dx`, stable near `k = 0`.
fn exp_integral(k: f64, len: f64) -> f64 {
    if k == 0.0 {
        len
    } else {
        -(-k * len).exp_m1() / k
    }
}

/// Which numerical route evaluates the transform integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Closed form on pieces where possible, adaptive quadrature otherwise.
    Auto,
    /// Adaptive Gauss–Kronrod everywhere (with closed-form exponential tail).
    Quadrature,
}

/// `J(s) = λ ∫_0^∞ S(t) exp(-s t - λ C(t)) dt`; `+inf` when `s <= -γ`.
pub fn busy_integral(lambda: f64, service: &ServiceModel, s: f64, route: Route) -> Result<f64> {
    check_rate(lambda)?;
    let surv = Survival::new(service)?;
    if s <= -service.tail_rate {
        return Ok(f64::INFINITY);
    }
    if route == Route::Auto && surv.is_piecewise_constant() {
        return Ok(surv
            .constant_pieces()
            .into_iter()
            .map(|(a, b, sv)| {
                let k = s + lambda * sv;
                lambda * sv * (-s * a - lambda * surv.cumulative(a)).exp() * exp_integral(k, b - a)
            })
            .sum());
    }
    let (breaks, cut) = surv.grid();
    let integrand = |t: f64| lambda * surv.survival(t) * (-s * t - lambda * surv.cumulative(t)).exp();
    let mut total = 0.0;
    let mut lo = 0.0;
    for hi in breaks.into_iter().chain(std::iter::once(cut)) {
        total += quadrature::integrate(integrand, lo, hi, QUAD_REL_TOL, 0.0)?;
        lo = hi;
    }
    if let ServiceDistribution::Exponential { rate } = service.distribution {
        // S(t) = S(cut) e^{-rate (t - cut)} and C is flat to within TAIL_CUT / rate.
        total += integrand(cut) / (rate + s);
    }
    Ok(total)
}

/// `∫_0^∞ exp(-s t - λ C(t)) dt` for `s > 0`, the denominator of the
/// original (singular at 0) transform formula.
pub fn direct_integral(lambda: f64, service: &ServiceModel, s: f64) -> Result<f64> {
    check_rate(lambda)?;
    if !(s > 0.0) {
        return Err(Error::OutsideDomain { s, bound: 0.0 });
    }
    let surv = Survival::new(service)?;
    let (breaks, cut) = surv.grid();
    let integrand = |t: f64| (-s * t - lambda * surv.cumulative(t)).exp();
    let mut total = 0.0;
    let mut lo = 0.0;
    for hi in breaks.into_iter().chain(std::iter::once(cut)) {
        total += quadrature::integrate(integrand, lo, hi, QUAD_REL_TOL, 0.0)?;
        lo = hi;
    }
    // Beyond the cut C is constant (bounded services) or flat to TAIL_CUT.
    Ok(total + integrand(cut) / s)
}

fn one_minus_busy_integral(lambda: f64, service: &ServiceModel, s: f64) -> Result<f64> {
    let j = busy_integral(lambda, service, s, Route::Auto)?;
    if s < 0.0 && !(j < 1.0) {
        let bound = theta_abscissa(lambda, service, service.tail_rate).unwrap_or(f64::NAN);
        return Err(Error::OutsideDomain { s, bound });
    }
    Ok(1.0 - j)
}

fn check_s(lambda: f64, service: &ServiceModel, s: f64) -> Result<()> {
    check_rate(lambda)?;
    if !s.is_finite() {
        return Err(param("s", format!("must be finite, got {s}")));
    }
    if s <= -service.tail_rate {
        return Err(Error::OutsideDomain {
            s,
            bound: -service.tail_rate,
        });
    }
    Ok(())
}

/// `E[exp(-s 𝒯_1)]` for `s > θ`, via `1 - s / ((λ + s)(1 - J(s)))`.
pub fn takacs_laplace_t1(lambda: f64, service: &ServiceModel, s: f64) -> Result<f64> {
    check_s(lambda, service, s)?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let denom = one_minus_busy_integral(lambda, service, s)?;
    Ok(1.0 - s / ((lambda + s) * denom))
}

/// `E[exp(-s B)]` for `s > θ`, the analytic continuation
/// `(λ + s)/λ - (s/λ) / (1 - J(s))`. For `s < 0` this is the exponential
/// moment `E[exp(|s| B)]`.
pub fn takacs_laplace_b(lambda: f64, service: &ServiceModel, s: f64) -> Result<f64> {
    check_s(lambda, service, s)?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let denom = one_minus_busy_integral(lambda, service, s)?;
    Ok((lambda + s) / lambda - (s / lambda) / denom)
}

/// Abscissa `θ = max(s*, -γ)` where `s* = inf{s <= 0 : J(s) < 1}`, found by
/// bisection on the monotone map `s ↦ J(s)`.
pub fn theta_abscissa(lambda: f64, service: &ServiceModel, gamma: f64) -> Result<f64> {
    check_rate(lambda)?;
    if !(gamma > 0.0) {
        return Err(param("gamma", format!("must be positive, got {gamma}")));
    }
    let j = |s: f64| busy_integral(lambda, service, s, Route::Auto);
    let mut hi = 0.0;
    let mut lo;
    if gamma.is_finite() {
        let edge = -gamma * (1.0 - 1e-12);
        if j(edge)? < 1.0 {
            return Ok(-gamma);
        }
        lo = edge;
    } else {
        lo = -1.0;
        while j(lo)? < 1.0 {
            hi = lo;
            lo *= 2.0;
            if lo < -1e12 {
                return Err(param("service", "no finite abscissa found down to -1e12"));
            }
        }
    }
    while hi - lo > 1e-12 * lo.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if j(mid)? < 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.max(-gamma))
}

/// Exponential decay rate of `P(𝒯_1 >= t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRate {
    pub rate: f64,
    /// `true` when the rate itself is attained (`λ < γ`); otherwise every
    /// rate strictly below `rate` is valid.
    pub attained: bool,
}

pub fn tail_rate(lambda: f64, gamma: f64) -> TailRate {
    if lambda < gamma {
        TailRate {
            rate: lambda,
            attained: true,
        }
    } else {
        TailRate {
            rate: gamma,
            attained: false,
        }
    }
}

pub const DEFAULT_OPEN_RATE_FRACTION: f64 = 0.95;

/// Concrete rate `α` usable in bounds: `λ` when attained, otherwise
/// `fraction · γ`.
pub fn usable_rate(lambda: f64, gamma: f64, fraction: f64) -> f64 {
    let tr = tail_rate(lambda, gamma);
    if tr.attained {
        tr.rate
    } else {
        fraction * tr.rate
    }
}

/// `λ C E exp(-α (t - E))`, bounding the probability that the queue is
/// still nonempty at `t` after first waiting out time `E`.
pub fn hitting_after_bound(lambda: f64, gamma: f64, c: f64, e: f64, t: f64) -> Result<f64> {
    hitting_after_bound_with(lambda, gamma, c, e, t, DEFAULT_OPEN_RATE_FRACTION)
}

pub fn hitting_after_bound_with(
    lambda: f64,
    gamma: f64,
    c: f64,
    e: f64,
    t: f64,
    fraction: f64,
) -> Result<f64> {
    if !(e >= 0.0) {
        return Err(param("E", format!("must be >= 0, got {e}")));
    }
    if t < e {
        return Err(param("t", format!("must be >= E = {e}, got {t}")));
    }
    let alpha = usable_rate(lambda, gamma, fraction);
    Ok(lambda * c * e * (-alpha * (t - e)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::stats::SampleSummary;

    fn det1() -> ServiceModel {
        ServiceModel::deterministic(1.0).unwrap()
    }

    /// Closed form of E[exp(-s 𝒯_1)] for λ = 1, deterministic service 1.
    fn det_t1_closed(s: f64) -> f64 {
        let integral = (1.0 - (-(s + 1.0)).exp()) / (s + 1.0) + (-(s + 1.0)).exp() / s;
        1.0 - 1.0 / ((1.0 + s) * integral)
    }

    #[test]
    fn t1_example_value() {
        let v = takacs_laplace_t1(1.0, &det1(), 1.0).unwrap();
        let closed = 1.0 - 0.5 / ((1.0 - (-2.0f64).exp()) / 2.0 + (-2.0f64).exp());
        assert!((v - closed).abs() < 1e-12, "{v} vs {closed}");
        assert!((v - 0.119_203).abs() < 1e-6);
        for s in [0.1, 0.5, 2.0, 7.0] {
            assert!((takacs_laplace_t1(1.0, &det1(), s).unwrap() - det_t1_closed(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn t1_limits() {
        assert_eq!(takacs_laplace_t1(1.0, &det1(), 0.0).unwrap(), 1.0);
        assert_eq!(takacs_laplace_b(1.0, &det1(), 0.0).unwrap(), 1.0);
        let big = takacs_laplace_t1(1.0, &det1(), 1e6).unwrap();
        assert!(big.abs() < 1e-5);
        let m = ServiceModel::exponential(2.0).unwrap();
        assert!(takacs_laplace_t1(1.5, &m, 1e6).unwrap().abs() < 1e-5);
        // Continuity through the removable singularity.
        let near = takacs_laplace_t1(1.0, &det1(), 1e-7).unwrap();
        assert!((near - 1.0).abs() < 1e-5);
    }

    #[test]
    fn b_consistency_with_t1() {
        for s in [0.3, 1.0, 4.0] {
            let t1 = takacs_laplace_t1(1.0, &det1(), s).unwrap();
            let b = takacs_laplace_b(1.0, &det1(), s).unwrap();
            assert!((t1 - b / (1.0 + s)).abs() < 1e-13);
        }
        let f1 = takacs_laplace_b(1.0, &det1(), 1.0).unwrap();
        assert!((f1 - 2.0 * det_t1_closed(1.0)).abs() < 1e-12);
        assert!((f1 - 0.23844).abs() < 5e-5);
    }

    #[test]
    fn routes_agree() {
        let models = [
            det1(),
            ServiceModel::deterministic(2.5).unwrap(),
            ServiceModel::empirical(vec![0.2, 0.5, 0.5, 1.7, 3.0]).unwrap(),
        ];
        for m in &models {
            for s in [-0.4, 0.0, 0.5, 3.0] {
                let a = busy_integral(1.3, m, s, Route::Auto).unwrap();
                let q = busy_integral(1.3, m, s, Route::Quadrature).unwrap();
                assert!((a - q).abs() < 1e-10 * a.abs().max(1.0), "{m:?} s={s}: {a} vs {q}");
            }
        }
    }

    #[test]
    fn int_parts_matches_direct_form() {
        let models = [
            det1(),
            ServiceModel::exponential(1.7).unwrap(),
            ServiceModel::empirical(vec![0.1, 0.9, 2.0]).unwrap(),
        ];
        for m in &models {
            for s in [0.05, 0.5, 2.0] {
                let lambda = 0.8;
                let direct = direct_integral(lambda, m, s).unwrap();
                let from_parts = (1.0 - busy_integral(lambda, m, s, Route::Auto).unwrap()) / s;
                assert!((direct - from_parts).abs() < 1e-9 * direct, "{m:?} s={s}");
            }
        }
    }

    #[test]
    fn exponential_service_closed_form_at_zero() {
        // J(0) = 1 - exp(-λ E[H]).
        let m = ServiceModel::exponential(0.5).unwrap();
        let j0 = busy_integral(2.0, &m, 0.0, Route::Auto).unwrap();
        assert!((j0 - (1.0 - (-4.0f64).exp())).abs() < 1e-10);
        let j0 = busy_integral(1.0, &det1(), 0.0, Route::Auto).unwrap();
        assert!((j0 - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn integral_is_monotone_in_s() {
        let models = [det1(), ServiceModel::exponential(1.0).unwrap()];
        for m in &models {
            let grid: Vec<f64> = (0..60).map(|i| -0.95 + 0.05 * i as f64).collect();
            let vals: Vec<f64> = grid
                .iter()
                .map(|&s| busy_integral(1.0, m, s, Route::Auto).unwrap())
                .collect();
            for w in vals.windows(2) {
                assert!(w[0] > w[1]);
            }
        }
    }

    #[test]
    fn theta_deterministic() {
        let th = theta_abscissa(1.0, &det1(), f64::INFINITY).unwrap();
        assert!((th + 1.0).abs() < 1e-9, "{th}");
        for lambda in [0.5, 2.0] {
            let th = theta_abscissa(lambda, &det1(), f64::INFINITY).unwrap();
            let j = busy_integral(lambda, &det1(), th, Route::Auto).unwrap();
            assert!((j - 1.0).abs() < 1e-8, "λ={lambda}: θ={th} J={j}");
        }
    }

    #[test]
    fn theta_exponential_service() {
        // J(s) blows up as s → -γ, so θ sits strictly between -γ and 0 and
        // the defining integral equals 1 there.
        for (lambda, gamma) in [(1.0, 1.0), (0.1, 1.0), (2.0, 0.5)] {
            let m = ServiceModel::exponential(gamma).unwrap();
            let th = theta_abscissa(lambda, &m, gamma).unwrap();
            assert!(th > -gamma && th < 0.0, "λ={lambda} γ={gamma}: {th}");
            let j = busy_integral(lambda, &m, th, Route::Auto).unwrap();
            assert!((j - 1.0).abs() < 1e-6, "{j}");
        }
        // An artificially small declared γ caps θ at -γ.
        let m = ServiceModel {
            distribution: ServiceDistribution::Exponential { rate: 1.0 },
            tail_rate: 0.05,
        };
        assert_eq!(theta_abscissa(0.1, &m, 0.05).unwrap(), -0.05);
    }

    #[test]
    fn domain_errors() {
        let m = ServiceModel::exponential(1.0).unwrap();
        assert!(matches!(
            takacs_laplace_t1(1.0, &m, -1.0),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(matches!(
            takacs_laplace_b(1.0, &det1(), -1.5),
            Err(Error::OutsideDomain { .. })
        ));
        let c = ServiceModel::shifted_cluster(SignedKernel::constant(0.2, 1.0).unwrap(), 1.0).unwrap();
        assert!(takacs_laplace_t1(1.0, &c, 1.0).is_err());
    }

    #[test]
    fn tail_rate_examples() {
        assert_eq!(tail_rate(0.5, 1.0), TailRate { rate: 0.5, attained: true });
        assert_eq!(tail_rate(2.0, 1.0), TailRate { rate: 1.0, attained: false });
        assert_eq!(tail_rate(1.0, 1.0), TailRate { rate: 1.0, attained: false });
        assert!(tail_rate(1.0, f64::INFINITY).attained);
    }

    #[test]
    fn hitting_bound_examples() {
        assert_eq!(hitting_after_bound(1.0, 2.0, 1.0, 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(hitting_after_bound(1.5, 2.0, 3.0, 2.0, 2.0).unwrap(), 1.5 * 3.0 * 2.0);
        let v = hitting_after_bound(1.0, 2.0, 1.0, 2.0, 4.0).unwrap();
        assert!((v - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.27067).abs() < 5e-6);
        // Open branch uses 0.95 γ.
        let v = hitting_after_bound(3.0, 2.0, 1.0, 1.0, 2.0).unwrap();
        assert!((v - 3.0 * (-1.9f64).exp()).abs() < 1e-15);
        assert!(hitting_after_bound(1.0, 2.0, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn trajectory_sanity() {
        let mut r = rng::stream(8);
        let m = ServiceModel::exponential(0.7).unwrap();
        let q = simulate_mg_infty(1.2, &m, 300.0, &mut r).unwrap();
        assert_eq!(q.return_times.len(), q.busy_periods.len());
        for (&rt, &b) in q.return_times.iter().zip(&q.busy_periods) {
            assert_eq!(q.count_at(rt), 0);
            assert!(q.count_at(rt - 1e-9 * rt.max(1.0)) > 0 || b == 0.0);
        }
        if let (Some(&v1), Some(&t1)) = (q.arrivals.first(), q.return_times.first()) {
            assert_eq!(t1, v1 + q.busy_periods[0]);
        }
        for w in q.return_times.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn zero_service_returns_at_arrival() {
        let mut r = rng::stream(2);
        let q = simulate_mg_infty(1.0, &ServiceModel::deterministic(0.0).unwrap(), 50.0, &mut r).unwrap();
        assert_eq!(q.return_times, q.arrivals);
        assert!(q.busy_periods.iter().all(|&b| b == 0.0));
        assert!((q.idle_time - 50.0).abs() < 1e-9);
        for &a in &q.arrivals {
            assert_eq!(q.count_at(a), 0);
        }
        let mut sampler = ServiceSampler::new(&ServiceModel::deterministic(0.0).unwrap()).unwrap();
        let firsts: Vec<f64> = (0..20_000)
            .map(|_| sample_first_busy_cycle(1.0, &mut sampler, &mut r).first_return())
            .collect();
        let s = SampleSummary::from_slice(&firsts);
        assert!((s.mean - 1.0).abs() < 3.0 * s.std_error);
    }

    #[test]
    fn rejects_bad_rate() {
        let mut r = rng::stream(2);
        assert!(simulate_mg_infty(0.0, &det1(), 10.0, &mut r).is_err());
        assert!(simulate_mg_infty(-1.0, &det1(), 10.0, &mut r).is_err());
    }

    #[test]
    fn idle_fraction_deterministic_service() {
        let mut r = rng::stream(17);
        let q = simulate_mg_infty(1.0, &det1(), 100_000.0, &mut r).unwrap();
        let frac = q.idle_time / q.horizon;
        // Batch-means standard error over 100 blocks of the renewal cycles.
        let cycles = q.return_times.len() as f64;
        let expected = (-1.0f64).exp();
        // Renewal-reward: idle per cycle ~ Exp(1), cycle mean e; CLT scale.
        let se = (expected * (1.0 - expected) * 2.0 * std::f64::consts::E / q.horizon).sqrt();
        assert!((frac - expected).abs() < 4.0 * se, "{frac} vs {expected}, se {se}, cycles {cycles}");
    }

    #[test]
    fn tabulated_cluster_service() {
        let mut r = rng::stream(3);
        let c = ServiceModel::shifted_cluster(SignedKernel::constant(0.25, 2.0).unwrap(), 2.0).unwrap();
        assert!((c.tail_rate - (0.5 - 0.5f64.ln() - 1.0) / 2.0).abs() < 1e-15);
        let t = c.tabulate(2000, &mut r).unwrap();
        assert_eq!(t.tail_rate, c.tail_rate);
        assert!(matches!(t.distribution, ServiceDistribution::Empirical { .. }));
        assert!(takacs_laplace_t1(1.0, &t, 1.0).unwrap() > 0.0);
        assert!(ServiceModel::shifted_cluster(SignedKernel::constant(-0.2, 1.0).unwrap(), 1.0).is_err());
    }
}
