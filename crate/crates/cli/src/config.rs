//! Run configuration: JSON loading and validation that reports every
//! problem at once.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use signed_hawkes::inference::WindowFunctional;
use signed_hawkes::{PointConfiguration, SignedKernel};

use crate::CliError;

/// Service law for `queue-tail`. `cluster` means cluster length of the
/// configured kernel plus the window `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceSpec {
    Deterministic { duration: f64 },
    Exponential { rate: f64 },
    Cluster,
}

/// File layout of the configuration. Every field is optional here so that
/// missing fields can be reported together with other errors.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kernel: Option<Vec<[f64; 3]>>,
    lambda: Option<f64>,
    #[serde(alias = "A")]
    window: Option<f64>,
    #[serde(alias = "T")]
    horizon: Option<f64>,
    seed: Option<u64>,
    replicas: Option<u64>,
    initial_condition: Option<PathBuf>,
    coupled: Option<bool>,
    functional: Option<String>,
    level: Option<f64>,
    eta: Option<f64>,
    alpha: Option<f64>,
    alpha_grid: Option<Vec<f64>>,
    epsilon_grid: Option<Vec<f64>>,
    s_grid: Option<Vec<f64>>,
    service: Option<ServiceSpec>,
    service_table: Option<usize>,
    clusters: Option<usize>,
    tail_grid: Option<Vec<f64>>,
    mc_samples: Option<usize>,
    k_max: Option<usize>,
    out_dir: Option<PathBuf>,
}

/// Validated configuration. Serialized canonically for the config hash.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub kernel: SignedKernel,
    pub lambda: f64,
    pub window: f64,
    pub horizon: f64,
    pub seed: u64,
    pub replicas: u64,
    pub first_replica: u64,
    pub initial_condition: Vec<f64>,
    pub coupled: bool,
    pub functional: String,
    pub level: f64,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    /// Service law for `queue-tail`; defaults to the cluster service.
    pub service: Option<ServiceSpec>,
    pub service_table: usize,
    pub clusters: usize,
    pub tail_grid: Vec<f64>,
    pub mc_samples: usize,
    pub k_max: usize,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub first_replica: Option<u64>,
}

impl RunConfig {
    pub fn initial(&self) -> PointConfiguration {
        let left = -self.window;
        PointConfiguration::new(self.initial_condition.clone(), left, 0.0)
            .expect("validated at load")
    }

    pub fn window_functional(&self) -> WindowFunctional {
        WindowFunctional::parse(&self.functional).expect("validated at load")
    }

    /// `min(λ, γ+)`, the exclusive upper limit for exponential-moment rates.
    pub fn rate_cap(&self) -> f64 {
        self.lambda.min(self.kernel.summarize().gamma)
    }

    /// Configured `α`, or half the rate cap.
    pub fn alpha_or_default(&self) -> f64 {
        self.alpha.unwrap_or(0.5 * self.rate_cap())
    }
}

fn read_initial(path: &Path) -> Result<Vec<f64>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("initial_condition {}: {e}", path.display()))?;
    let mut times = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split(',').next().unwrap_or("").trim().parse::<f64>() {
            Ok(t) => times.push(t),
            Err(_) if times.is_empty() && i == 0 => {} // header row
            Err(_) => return Err(format!("initial_condition {} line {}: not a number: '{line}'", path.display(), i + 1)),
        }
    }
    times.sort_by(f64::total_cmp);
    Ok(times)
}

fn positive(errors: &mut Vec<String>, name: &str, v: Option<f64>) -> f64 {
    match v {
        None => {
            errors.push(format!("missing field `{name}`"));
            f64::NAN
        }
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            errors.push(format!("`{name}` must be positive and finite, got {x}"));
            x
        }
        Some(x) => x,
    }
}

/// Loads and validates a configuration file. Relative paths inside it are
/// resolved against the file's directory.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
    let raw: RawConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    validate(raw, base, overrides)
}

/// Validates configuration text directly (paths relative to `base`).
pub fn parse_config(text: &str, base: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
    validate(raw, base, overrides)
}

fn validate(raw: RawConfig, base: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut errors = Vec::new();

    let kernel = match raw.kernel {
        None => {
            errors.push("missing field `kernel` (list of [start, end, value]; [] for the zero kernel)".to_string());
            SignedKernel::zero()
        }
        Some(triples) => match SignedKernel::try_from(triples) {
            Ok(k) => k,
            Err(e) => {
                errors.push(e.to_string());
                SignedKernel::zero()
            }
        },
    };
    let summary = kernel.summarize();
    if !summary.subcritical {
        errors.push(format!(
            "kernel is not subcritical: ||h+||_1 = {} but the process needs ||h+||_1 < 1",
            summary.l1_positive
        ));
    }

    let lambda = positive(&mut errors, "lambda", raw.lambda);
    let window = positive(&mut errors, "window", raw.window);
    if window < summary.support_bound {
        errors.push(format!(
            "window A = {window} is shorter than the kernel support L(h) = {}; the window process needs A >= L(h)",
            summary.support_bound
        ));
    }
    let horizon = positive(&mut errors, "horizon", raw.horizon);
    let seed = match overrides.seed.or(raw.seed) {
        Some(s) => s,
        None => {
            errors.push("missing field `seed` (or pass --seed)".to_string());
            0
        }
    };
    let replicas = overrides.replicas.or(raw.replicas).unwrap_or(1);
    if replicas == 0 {
        errors.push("`replicas` must be at least 1".to_string());
    }

    let initial_condition = match &raw.initial_condition {
        None => Vec::new(),
        Some(p) => match read_initial(&base.join(p)) {
            Ok(times) => {
                if let Err(e) = PointConfiguration::new(times.clone(), -window, 0.0) {
                    errors.push(format!("initial_condition: {e} (times must be distinct and lie in (-A, 0])"));
                }
                times
            }
            Err(e) => {
                errors.push(e);
                Vec::new()
            }
        },
    };

    let functional = raw.functional.unwrap_or_else(|| "indicator_empty".to_string());
    if let Err(e) = WindowFunctional::parse(&functional) {
        errors.push(e.to_string());
    }
    let level = raw.level.unwrap_or(0.95);
    if !(level > 0.0 && level < 1.0) {
        errors.push(format!("`level` must lie in (0, 1), got {level}"));
    }
    if let Some(eta) = raw.eta {
        if !(eta > 0.0 && eta <= 1.0) {
            errors.push(format!("`eta` must lie in (0, 1], got {eta}"));
        }
    }
    let cap = lambda.min(summary.gamma);
    if let Some(a) = raw.alpha {
        if !(a > 0.0 && a < cap) {
            errors.push(format!("`alpha` must lie in (0, min(lambda, gamma+) = {cap}), got {a}"));
        }
    }
    let alpha_grid = raw.alpha_grid.unwrap_or_else(|| [0.0, 0.25, 0.5, 0.75].iter().map(|f| f * cap).collect());
    for &a in &alpha_grid {
        if !(a >= 0.0 && a < cap) {
            errors.push(format!("`alpha_grid` entry {a} must lie in [0, min(lambda, gamma+) = {cap})"));
        }
    }
    let epsilon_grid = raw.epsilon_grid.unwrap_or_else(|| vec![0.01, 0.02, 0.05, 0.1, 0.2]);
    if epsilon_grid.iter().any(|&e| !(e > 0.0)) {
        errors.push("`epsilon_grid` entries must be positive".to_string());
    }
    let s_grid = raw.s_grid.unwrap_or_else(|| vec![0.1, 0.25, 0.5, 1.0, 2.0, 5.0]);
    if s_grid.iter().any(|s| !s.is_finite()) {
        errors.push("`s_grid` entries must be finite".to_string());
    }
    let service = raw.service;
    match &service {
        Some(ServiceSpec::Deterministic { duration }) if !(*duration >= 0.0 && duration.is_finite()) => {
            errors.push(format!("service duration must be finite and >= 0, got {duration}"));
        }
        Some(ServiceSpec::Exponential { rate }) if !(*rate > 0.0 && rate.is_finite()) => {
            errors.push(format!("service rate must be positive, got {rate}"));
        }
        Some(ServiceSpec::Cluster) if !kernel.is_nonnegative() => {
            errors.push("service `cluster` needs a nonnegative kernel".to_string());
        }
        _ => {}
    }
    let tail_grid = raw.tail_grid.unwrap_or_else(|| (1..=20).map(|i| 0.5 * i as f64).collect());
    if tail_grid.iter().any(|&x| !(x >= 0.0)) {
        errors.push("`tail_grid` entries must be >= 0".to_string());
    }
    let k_max = raw.k_max.unwrap_or(signed_hawkes::inference::DEFAULT_K_MAX);
    if k_max < 3 {
        errors.push(format!("`k_max` must be at least 3, got {k_max}"));
    }
    let service_table = raw.service_table.unwrap_or(20_000);
    let clusters = raw.clusters.unwrap_or(10_000);
    let mc_samples = raw.mc_samples.unwrap_or(10_000);
    for (name, v) in [("service_table", service_table), ("clusters", clusters)] {
        if v == 0 {
            errors.push(format!("`{name}` must be at least 1"));
        }
    }

    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    Ok(RunConfig {
        kernel,
        lambda,
        window,
        horizon,
        seed,
        replicas,
        first_replica: overrides.first_replica.unwrap_or(0),
        initial_condition,
        coupled: raw.coupled.unwrap_or(false),
        functional,
        level,
        eta: raw.eta,
        alpha: raw.alpha,
        alpha_grid,
        epsilon_grid,
        s_grid,
        service,
        service_table,
        clusters,
        tail_grid,
        mc_samples,
        k_max,
        out_dir: raw.out_dir.map(|p| base.join(p)),
    })
}
