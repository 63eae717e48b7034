//! One function per subcommand. Each returns the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use signed_hawkes::cluster::{cluster_tail_bound, ClusterSampler};
use signed_hawkes::inference::{
    bernstein_epsilon, bernstein_tail, clt_interval, concentration_bound_full, cycle_stats, estimate_pi,
    estimate_sigma2, time_average, BernsteinBound, BernsteinInputs, CycleStat, EstimatorReport, MomentEstimates,
};
use signed_hawkes::queue::{
    busy_integral, sample_first_busy_cycle, takacs_laplace_b, takacs_laplace_t1, tail_rate, theta_abscissa,
    usable_rate, Route, ServiceModel, ServiceSampler, TailRate, DEFAULT_OPEN_RATE_FRACTION,
};
use signed_hawkes::renewal::{estimate_exp_moment, split_excursions, ExcursionSplit};
use signed_hawkes::rng;
use signed_hawkes::simulation::{LogPolicy, SimOptions};
use signed_hawkes::stats::{binomial_std_error, SampleSummary};
use signed_hawkes::{Error, Hawkes, KernelSummary, PointConfiguration, SimulationPath};

use crate::config::{load_config, Overrides, RunConfig, ServiceSpec};
use crate::output::{num, resolve_out_dir, Sink};
use crate::{CliError, Common};

/// Replica index reserved for the service table of `queue-tail`.
const TABLE_STREAM: u64 = u64::MAX;

fn setup(common: &Common) -> Result<(RunConfig, Sink), CliError> {
    let overrides = Overrides {
        seed: common.seed,
        replicas: common.replicas,
        first_replica: common.first_replica,
    };
    let config = load_config(&common.config, &overrides)?;
    let sink = Sink::new(resolve_out_dir(common.out.as_deref(), &config), &config)?;
    Ok((config, sink))
}

fn replica_range(config: &RunConfig) -> std::ops::Range<u64> {
    config.first_replica..config.first_replica + config.replicas
}

fn simulate_paths(config: &RunConfig, coupled: bool) -> Result<Vec<SimulationPath>, CliError> {
    let model = Hawkes::new(config.kernel.clone(), config.lambda)?;
    Ok(model.simulate_replicas(
        &config.initial(),
        config.horizon,
        config.seed,
        config.first_replica,
        config.replicas,
        coupled,
        SimOptions { log: LogPolicy::Off },
    )?)
}

#[derive(Serialize)]
struct ReplicaCount {
    replica: u64,
    events: usize,
    rate: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    kernel: KernelSummary,
    lambda: f64,
    horizon: f64,
    replicas: Vec<ReplicaCount>,
    mean_rate: f64,
}

pub fn simulate(common: &Common) -> Result<PathBuf, CliError> {
    let (config, sink) = setup(common)?;
    let paths = simulate_paths(&config, config.coupled)?;
    let mut header = vec!["replica", "event_time"];
    if config.coupled {
        header.extend(["in_h", "in_dominating"]);
    }
    let mut csv = sink.csv("events.csv", &header)?;
    for (replica, path) in replica_range(&config).zip(&paths) {
        match &path.dominating_events {
            Some(dom) if config.coupled => {
                let mut times: Vec<f64> = dom.iter().chain(&path.events).copied().collect();
                times.sort_by(f64::total_cmp);
                times.dedup();
                let has = |v: &[f64], t: f64| v.binary_search_by(|x| x.total_cmp(&t)).is_ok();
                for t in times {
                    let flag = |b: bool| if b { "1" } else { "0" };
                    csv.row([
                        replica.to_string(),
                        num(t),
                        flag(has(&path.events, t)).to_string(),
                        flag(has(dom, t)).to_string(),
                    ])?;
                }
            }
            _ => {
                for &t in &path.events {
                    csv.row([replica.to_string(), num(t)])?;
                }
            }
        }
    }
    csv.finish()?;
    let replicas: Vec<ReplicaCount> = replica_range(&config)
        .zip(&paths)
        .map(|(replica, p)| ReplicaCount {
            replica,
            events: p.events.len(),
            rate: p.events.len() as f64 / config.horizon,
        })
        .collect();
    let mean_rate = replicas.iter().map(|r| r.rate).sum::<f64>() / replicas.len() as f64;
    sink.json(
        "summary.json",
        &SimulateSummary {
            kernel: config.kernel.summarize(),
            lambda: config.lambda,
            horizon: config.horizon,
            replicas,
            mean_rate,
        },
    )?;
    Ok(sink.dir().to_path_buf())
}

#[derive(Serialize)]
struct ClusterSummary {
    samples: usize,
    mean_offspring: f64,
    mean_size: f64,
    mean_size_se: f64,
    expected_mean_size: f64,
    mean_length: f64,
    gamma: f64,
}

pub fn cluster_stats(common: &Common) -> Result<PathBuf, CliError> {
    let (config, sink) = setup(common)?;
    let sampler = ClusterSampler::new(&config.kernel)?;
    let per_replica: Vec<Vec<(usize, f64)>> = replica_range(&config)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::replica_stream(config.seed, r);
            (0..config.clusters)
                .map(|_| {
                    let c = sampler.sample(&mut stream);
                    (c.size(), c.length)
                })
                .collect()
        })
        .collect();
    let mut csv = sink.csv("clusters.csv", &["replica", "sample_index", "size", "H"])?;
    for (replica, samples) in replica_range(&config).zip(&per_replica) {
        for (i, (size, h)) in samples.iter().enumerate() {
            csv.row([replica.to_string(), i.to_string(), size.to_string(), num(*h)])?;
        }
    }
    csv.finish()?;

    let all: Vec<(usize, f64)> = per_replica.into_iter().flatten().collect();
    let n = all.len();
    let summary = config.kernel.summarize();
    let mut tail = sink.csv("tail.csv", &["x", "empirical", "std_error", "bound"])?;
    for &x in &config.tail_grid {
        let p = all.iter().filter(|(_, h)| *h > x).count() as f64 / n as f64;
        let bound = cluster_tail_bound(&summary, x).unwrap_or(f64::NAN);
        tail.row([num(x), num(p), num(binomial_std_error(p, n)), num(bound)])?;
    }
    tail.finish()?;
    let sizes: Vec<f64> = all.iter().map(|(s, _)| *s as f64).collect();
    let size_summary = SampleSummary::from_slice(&sizes);
    sink.json(
        "summary.json",
        &ClusterSummary {
            samples: n,
            mean_offspring: sampler.mean_offspring(),
            mean_size: size_summary.mean,
            mean_size_se: size_summary.std_error,
            expected_mean_size: 1.0 / (1.0 - summary.l1_positive),
            mean_length: all.iter().map(|(_, h)| h).sum::<f64>() / n as f64,
            gamma: summary.gamma,
        },
    )?;
    Ok(sink.dir().to_path_buf())
}

fn service_model(config: &RunConfig) -> Result<ServiceModel, CliError> {
    Ok(match config.service.as_ref().unwrap_or(&ServiceSpec::Cluster) {
        ServiceSpec::Deterministic { duration } => ServiceModel::deterministic(*duration)?,
        ServiceSpec::Exponential { rate } => ServiceModel::exponential(*rate)?,
        ServiceSpec::Cluster => ServiceModel::shifted_cluster(config.kernel.clone(), config.window)?,
    })
}

#[derive(Serialize)]
struct QueueSummary {
    lambda: f64,
    service_tail_rate: f64,
    theta: f64,
    tail_rate: TailRate,
    usable_rate: f64,
    busy_integral_at_zero: f64,
    mc_samples: usize,
    mc_mean_first_return: f64,
    mc_mean_first_return_se: f64,
}

pub fn queue_tail(common: &Common) -> Result<PathBuf, CliError> {
    let (config, sink) = setup(common)?;
    let lambda = config.lambda;
    let model = service_model(&config)?;
    // Cluster-based services are evaluated on a fixed empirical table.
    let analytic = model.tabulate(config.service_table, &mut rng::replica_stream(config.seed, TABLE_STREAM))?;
    let gamma = model.tail_rate;
    let theta = theta_abscissa(lambda, &analytic, gamma)?;

    let samples: Vec<Vec<f64>> = replica_range(&config)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>, Error> {
            let mut stream = rng::replica_stream(config.seed, r);
            let mut sampler = ServiceSampler::new(&model)?;
            Ok((0..config.mc_samples)
                .map(|_| sample_first_busy_cycle(lambda, &mut sampler, &mut stream).first_return())
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let returns: Vec<f64> = samples.into_iter().flatten().collect();

    let mut csv = sink.csv("laplace.csv", &["s", "laplace_t1", "laplace_b", "mc_t1", "mc_t1_se"])?;
    for &s in &config.s_grid {
        let (t1, b) = if s > theta {
            (takacs_laplace_t1(lambda, &analytic, s)?, takacs_laplace_b(lambda, &analytic, s)?)
        } else {
            log::warn!("s = {s} is not above the abscissa {theta}; transform left undefined");
            (f64::NAN, f64::NAN)
        };
        let mc = SampleSummary::from_slice(&returns.iter().map(|t| (-s * t).exp()).collect::<Vec<_>>());
        csv.row([num(s), num(t1), num(b), num(mc.mean), num(mc.std_error)])?;
    }
    csv.finish()?;
    let mc = SampleSummary::from_slice(&returns);
    sink.json(
        "summary.json",
        &QueueSummary {
            lambda,
            service_tail_rate: gamma,
            theta,
            tail_rate: tail_rate(lambda, gamma),
            usable_rate: usable_rate(lambda, gamma, DEFAULT_OPEN_RATE_FRACTION),
            busy_integral_at_zero: busy_integral(lambda, &analytic, 0.0, Route::Auto)?,
            mc_samples: returns.len(),
            mc_mean_first_return: mc.mean,
            mc_mean_first_return_se: mc.std_error,
        },
    )?;
    Ok(sink.dir().to_path_buf())
}

fn splits(config: &RunConfig, paths: &[SimulationPath]) -> Result<Vec<ExcursionSplit>, CliError> {
    Ok(paths
        .par_iter()
        .map(|p| split_excursions(p, config.window))
        .collect::<Result<_, _>>()?)
}

fn pooled_stats(config: &RunConfig, splits: &[ExcursionSplit]) -> Vec<(u64, CycleStat)> {
    let f = config.window_functional();
    replica_range(config)
        .zip(splits)
        .flat_map(|(r, s)| cycle_stats(&s.cycles, &f, config.window).into_iter().map(move |c| (r, c)))
        .collect()
}

fn require_cycles(n: usize, needed: usize) -> Result<(), CliError> {
    if n < needed {
        return Err(Error::InsufficientCycles { needed, found: n }.into());
    }
    Ok(())
}

#[derive(Serialize)]
struct ExpMoment {
    alpha: f64,
    mean: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct RenewalSummary {
    n_cycles: usize,
    mean_tau: f64,
    var_tau: f64,
    mean_tau_se: f64,
    pi_empty: f64,
    pi_empty_times_lambda_mean_tau: f64,
    mean_delay: f64,
    replicas_without_entrance: usize,
    exp_moments: Vec<ExpMoment>,
}

pub fn renewal_stats(common: &Common) -> Result<PathBuf, CliError> {
    let (config, sink) = setup(common)?;
    let paths = simulate_paths(&config, false)?;
    let splits = splits(&config, &paths)?;
    let mut csv = sink.csv("cycles.csv", &["replica", "k", "tau_k", "duration", "events_in_cycle"])?;
    let mut durations = Vec::new();
    let mut empty_time = 0.0;
    for (replica, s) in replica_range(&config).zip(&splits) {
        for (k, c) in s.cycles.iter().enumerate() {
            csv.row([
                replica.to_string(),
                (k + 1).to_string(),
                num(s.renewals.taus[k]),
                num(c.duration),
                c.events.len().to_string(),
            ])?;
            durations.push(c.duration);
            empty_time += c.integrate(config.window, |n| f64::from(n == 0));
        }
    }
    csv.finish()?;
    require_cycles(durations.len(), 2)?;
    let summary = SampleSummary::from_slice(&durations);
    let total: f64 = durations.iter().sum();
    let pi_empty = empty_time / total;
    let gamma_plus = config.kernel.summarize().gamma;
    let exp_moments = config
        .alpha_grid
        .iter()
        .map(|&alpha| {
            let m = estimate_exp_moment(&durations, alpha, config.lambda, gamma_plus)?;
            Ok(ExpMoment {
                alpha,
                mean: m.mean,
                std_error: m.std_error,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let delays: Vec<f64> = splits
        .iter()
        .filter(|s| s.renewals.tau0.is_some())
        .map(|s| s.delay.duration)
        .collect();
    let n = durations.len() as f64;
    sink.json(
        "summary.json",
        &RenewalSummary {
            n_cycles: durations.len(),
            mean_tau: summary.mean,
            var_tau: summary.variance * (n - 1.0) / n,
            mean_tau_se: summary.std_error,
            pi_empty,
            pi_empty_times_lambda_mean_tau: pi_empty * config.lambda * summary.mean,
            mean_delay: SampleSummary::from_slice(&delays).mean,
            replicas_without_entrance: splits.len() - delays.len(),
            exp_moments,
        },
    )?;
    Ok(sink.dir().to_path_buf())
}

/// Paths read from an events CSV, grouped by replica in increasing order.
fn read_events(path: &Path, config: &RunConfig) -> Result<(Vec<u64>, Vec<SimulationPath>), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(io)?;
    let headers = reader.headers().map_err(io)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(rc), Some(tc)) = (col("replica"), col("event_time")) else {
        return Err(CliError::Config(vec![format!(
            "{}: expected columns `replica` and `event_time`",
            path.display()
        )]));
    };
    let in_h = col("in_h");
    let mut grouped: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(io)?;
        let bad = |what: &str| CliError::Config(vec![format!("{} row {}: bad {what}", path.display(), line + 1)]);
        if in_h.is_some_and(|c| record.get(c) == Some("0")) {
            continue;
        }
        let replica: u64 = record.get(rc).unwrap_or("").parse().map_err(|_| bad("replica"))?;
        let t: f64 = record.get(tc).unwrap_or("").parse().map_err(|_| bad("event_time"))?;
        grouped.entry(replica).or_default().push(t);
    }
    let initial: PointConfiguration = config.initial();
    let mut ids = Vec::new();
    let mut paths = Vec::new();
    for (replica, mut times) in grouped {
        times.sort_by(f64::total_cmp);
        let p = SimulationPath::from_events(initial.clone(), times, config.horizon)
            .map_err(|e| CliError::Config(vec![format!("{} replica {replica}: {e}", path.display())]))?;
        ids.push(replica);
        paths.push(p);
    }
    Ok((ids, paths))
}

fn bernstein(config: &RunConfig, durations: &[f64], eta: f64) -> Result<Option<(f64, f64, BernsteinBound)>, CliError> {
    let Some((a, b)) = config.window_functional().bounds() else {
        return Ok(None);
    };
    if !(b > a) {
        return Ok(None);
    }
    let alpha = config.alpha_or_default();
    let gamma_plus = config.kernel.summarize().gamma;
    let exp_moment = estimate_exp_moment(durations, alpha, config.lambda, gamma_plus)?.mean;
    let mean_tau = durations.iter().sum::<f64>() / durations.len() as f64;
    let bound = bernstein_epsilon(
        &BernsteinInputs {
            a,
            b,
            alpha,
            mean_tau,
            exp_moment,
            horizon: config.horizon,
            eta,
        },
        config.rate_cap(),
    )?;
    Ok(Some((alpha, exp_moment, bound)))
}

#[derive(Serialize)]
struct EstimateOutput {
    #[serde(flatten)]
    report: EstimatorReport,
    alpha: Option<f64>,
    exp_moment: Option<f64>,
    eta: Option<f64>,
}

pub fn estimate(common: &Common, events: Option<&Path>) -> Result<PathBuf, CliError> {
    let (mut config, sink) = setup(common)?;
    let (ids, paths) = match events {
        Some(file) => read_events(file, &config)?,
        None => (replica_range(&config).collect(), simulate_paths(&config, false)?),
    };
    if events.is_some() {
        config.first_replica = ids.first().copied().unwrap_or(0);
        config.replicas = ids.len() as u64;
    }
    let splits = splits(&config, &paths)?;
    let f = config.window_functional();
    let mut cycles = sink.csv("cycles.csv", &["replica", "k", "integral", "duration"])?;
    let mut averages = sink.csv("time_averages.csv", &["replica", "time_average"])?;
    let mut stats = Vec::new();
    for ((replica, s), p) in ids.iter().zip(&splits).zip(&paths) {
        for (k, c) in cycle_stats(&s.cycles, &f, config.window).into_iter().enumerate() {
            cycles.row([replica.to_string(), (k + 1).to_string(), num(c.integral), num(c.duration)])?;
            stats.push(c);
        }
        averages.row([replica.to_string(), num(time_average(p, &f, config.window, config.horizon)?)])?;
    }
    cycles.finish()?;
    averages.finish()?;
    require_cycles(stats.len(), 2)?;
    let mut report = EstimatorReport::from_stats(&f, &stats, config.level)?;
    let durations: Vec<f64> = stats.iter().map(|s| s.duration).collect();
    let (mut alpha, mut exp_moment) = (None, None);
    if let Some(eta) = config.eta {
        if let Some((a, m, b)) = bernstein(&config, &durations, eta)? {
            report.epsilon_eta = Some(b.epsilon);
            alpha = Some(a);
            exp_moment = Some(m);
        } else {
            log::warn!("functional {} has no finite bounds; epsilon_eta not computed", f.id());
        }
    }
    sink.json(
        "report.json",
        &EstimateOutput {
            report,
            alpha,
            exp_moment,
            eta: config.eta,
        },
    )?;
    Ok(sink.dir().to_path_buf())
}

#[derive(Serialize)]
struct CiOutput {
    functional: String,
    pi_hat: f64,
    sigma2_hat: f64,
    n_cycles: usize,
    observed_time: f64,
    level: f64,
    ci_low: f64,
    ci_high: f64,
    horizon: f64,
    eta: f64,
    alpha: f64,
    exp_moment: f64,
    v: f64,
    c: f64,
    epsilon_eta: f64,
    moments: MomentEstimates,
}

pub fn ci(common: &Common) -> Result<PathBuf, CliError> {
    let (config, sink) = setup(common)?;
    let f = config.window_functional();
    let Some((a, b)) = f.bounds() else {
        return Err(CliError::Config(vec![format!(
            "functional `{}` is unbounded; concentration bounds need a bounded functional such as indicator_empty or count_capped(n)",
            f.id()
        )]));
    };
    let paths = simulate_paths(&config, false)?;
    let splits = splits(&config, &paths)?;
    let stats: Vec<CycleStat> = pooled_stats(&config, &splits).into_iter().map(|(_, c)| c).collect();
    require_cycles(stats.len(), 2)?;
    let pi_hat = estimate_pi(&stats)?;
    let sigma2_hat = estimate_sigma2(&stats, pi_hat)?;
    let observed_time: f64 = stats.iter().map(|s| s.duration).sum();
    let (ci_low, ci_high) = clt_interval(pi_hat, sigma2_hat, observed_time, config.level)?;
    let durations: Vec<f64> = stats.iter().map(|s| s.duration).collect();
    let eta = config.eta.unwrap_or(0.05);
    let (alpha, exp_moment, bound) = bernstein(&config, &durations, eta)?.ok_or_else(|| {
        CliError::Config(vec![format!("functional `{}` has a degenerate range [{a}, {b}]", f.id())])
    })?;
    let delays: Option<Vec<f64>> = (!config.initial_condition.is_empty()).then(|| {
        splits
            .iter()
            .filter(|s| s.renewals.tau0.is_some())
            .map(|s| s.delay.duration)
            .collect()
    });
    let moments = MomentEstimates::from_cycles(&stats, config.k_max, delays.as_deref())?;
    let mean_tau = moments.mean_tau;
    let mut csv = sink.csv("bounds.csv", &["epsilon", "full_bound", "bernstein_bound", "vacuous"])?;
    for &eps in &config.epsilon_grid {
        let full = concentration_bound_full((a, b), &moments, config.horizon, eps)?;
        let simple = bernstein_tail(bound.c, bound.v, b - a, mean_tau, config.horizon, eps).min(1.0);
        csv.row([
            num(eps),
            num(full.value),
            num(simple),
            u8::from(full.vacuous).to_string(),
        ])?;
    }
    csv.finish()?;
    sink.json(
        "ci.json",
        &CiOutput {
            functional: f.id(),
            pi_hat,
            sigma2_hat,
            n_cycles: stats.len(),
            observed_time,
            level: config.level,
            ci_low,
            ci_high,
            horizon: config.horizon,
            eta,
            alpha,
            exp_moment,
            v: bound.v,
            c: bound.c,
            epsilon_eta: bound.epsilon,
            moments,
        },
    )?;
    Ok(sink.dir().to_path_buf())
}
