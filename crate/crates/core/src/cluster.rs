//! Cluster (immigration–branching) representation of Hawkes processes with
//! nonnegative kernels.
//!
//! Every ancestor starts an age-structured Galton–Watson tree: each
//! individual has a Poisson(`||h||_1`) number of children, born at ages drawn
//! from the density `h / ||h||_1`.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::kernel::{KernelSummary, SignedKernel};
use crate::rng::{self, Stream};
use crate::simulation::PointConfiguration;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Birth {
    /// Time since the ancestor's arrival.
    pub offset: f64,
    pub generation: u32,
    /// Index of the parent in `Cluster::births`; `None` for the ancestor.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Births in breadth-first order; the ancestor comes first.
    pub births: Vec<Birth>,
    /// Largest birth offset `H`.
    pub length: f64,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.births.len()
    }
}

/// Reusable sampler for a fixed nonnegative subcritical kernel.
#[derive(Debug, Clone)]
pub struct ClusterSampler {
    kernel: SignedKernel,
    mean_offspring: f64,
    /// Cumulative mass at each piece end.
    cumulative: Vec<f64>,
    offspring: Option<Poisson<f64>>,
}

impl ClusterSampler {
    pub fn new(kernel: &SignedKernel) -> Result<Self> {
        if !kernel.is_nonnegative() {
            return Err(Error::SignedKernel);
        }
        let mean_offspring = kernel.l1_positive();
        if mean_offspring >= 1.0 {
            return Err(Error::NotSubcritical {
                l1_positive: mean_offspring,
            });
        }
        let cumulative = kernel
            .pieces()
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p.value * p.len();
                Some(*acc)
            })
            .collect();
        let offspring = if mean_offspring > 0.0 {
            Some(Poisson::new(mean_offspring).map_err(|e| param("kernel", e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            kernel: kernel.clone(),
            mean_offspring,
            cumulative,
            offspring,
        })
    }

    pub fn mean_offspring(&self) -> f64 {
        self.mean_offspring
    }

    fn sample_age(&self, rng: &mut Stream) -> f64 {
        let target = rng.random::<f64>() * self.mean_offspring;
        let idx = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(self.cumulative.len() - 1);
        let piece = self.kernel.pieces()[idx];
        // Uniform on (start, end].
        piece.end - rng.random::<f64>() * piece.len()
    }

    /// Breadth-first sample of one cluster.
    pub fn sample(&self, rng: &mut Stream) -> Cluster {
        let mut births = vec![Birth {
            offset: 0.0,
            generation: 0,
            parent: None,
        }];
        let Some(offspring) = self.offspring else {
            return Cluster { births, length: 0.0 };
        };
        let mut queue = VecDeque::from([0usize]);
        let mut length: f64 = 0.0;
        while let Some(parent) = queue.pop_front() {
            let Birth { offset, generation, .. } = births[parent];
            let children = offspring.sample(rng) as usize;
            for _ in 0..children {
                let child = offset + self.sample_age(rng);
                length = length.max(child);
                births.push(Birth {
                    offset: child,
                    generation: generation + 1,
                    parent: Some(parent),
                });
                queue.push_back(births.len() - 1);
            }
        }
        Cluster { births, length }
    }
}

/// Samples one cluster from the kernel `k`, which must be nonnegative with
/// `||h||_1 < 1`.
pub fn sample_cluster(kernel: &SignedKernel, rng: &mut Stream) -> Result<Cluster> {
    Ok(ClusterSampler::new(kernel)?.sample(rng))
}

/// Ancestors, their full (untruncated) clusters, and the resulting events
/// restricted to `(0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRealization {
    pub ancestors: Vec<f64>,
    pub clusters: Vec<Cluster>,
    pub events: PointConfiguration,
}

impl ClusterRealization {
    /// Absolute time of the last birth in each cluster, `V_k + H_k`.
    pub fn last_births(&self) -> Vec<f64> {
        self.ancestors
            .iter()
            .zip(&self.clusters)
            .map(|(v, c)| v + c.length)
            .collect()
    }
}

pub fn simulate_cluster_realization(
    kernel: &SignedKernel,
    baseline: f64,
    horizon: f64,
    rng: &mut Stream,
) -> Result<ClusterRealization> {
    if !(baseline > 0.0 && baseline.is_finite()) {
        return Err(param("lambda", format!("baseline rate must be positive, got {baseline}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(param("horizon", format!("must be positive and finite, got {horizon}")));
    }
    let sampler = ClusterSampler::new(kernel)?;
    let gap = Exp::new(baseline).map_err(|e| param("lambda", e.to_string()))?;
    let mut ancestors = Vec::new();
    let mut clusters = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t > horizon {
            break;
        }
        ancestors.push(t);
        clusters.push(sampler.sample(rng));
    }
    let mut events: Vec<f64> = ancestors
        .iter()
        .zip(&clusters)
        .flat_map(|(&v, c)| c.births.iter().map(move |b| v + b.offset))
        .filter(|&x| x <= horizon)
        .collect();
    events.sort_by(f64::total_cmp);
    events.dedup();
    Ok(ClusterRealization {
        ancestors,
        clusters,
        events: PointConfiguration::from_parts_unchecked(events, 0.0, horizon),
    })
}

/// Hawkes process on `(0, horizon]` from the empty initial condition, built
/// from Poisson immigrants and their clusters. Births after the horizon are
/// discarded.
pub fn simulate_hawkes_cluster(
    kernel: &SignedKernel,
    baseline: f64,
    horizon: f64,
    seed: u64,
) -> Result<PointConfiguration> {
    Ok(simulate_cluster_realization(kernel, baseline, horizon, &mut rng::stream(seed))?.events)
}

/// Upper bound `exp(1 - m) exp(-γ x)` on `P(H > x)`.
pub fn cluster_tail_bound(summary: &KernelSummary, x: f64) -> Result<f64> {
    let m = summary.l1_positive;
    if !(m > 0.0 && m < 1.0) {
        return Err(param("kernel", format!("tail bound needs 0 < ||h||_1 < 1, got {m}")));
    }
    if !(x >= 0.0) {
        return Err(param("x", format!("must be nonnegative, got {x}")));
    }
    Ok((1.0 - m - summary.gamma * x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::SampleSummary;

    #[test]
    fn zero_kernel_gives_lone_ancestor() {
        let mut r = rng::stream(1);
        let c = sample_cluster(&SignedKernel::zero(), &mut r).unwrap();
        assert_eq!(c.size(), 1);
        assert_eq!(c.length, 0.0);
    }

    #[test]
    fn rejects_signed_and_supercritical() {
        let mut r = rng::stream(1);
        let signed = SignedKernel::from_pieces([(0.0, 1.0, 0.3), (1.0, 2.0, -0.1)]).unwrap();
        assert_eq!(sample_cluster(&signed, &mut r), Err(Error::SignedKernel));
        let big = SignedKernel::constant(1.0, 1.0).unwrap();
        assert!(matches!(sample_cluster(&big, &mut r), Err(Error::NotSubcritical { .. })));
    }

    #[test]
    fn tree_structure_invariants() {
        let k = SignedKernel::from_pieces([(0.0, 0.5, 0.4), (0.5, 2.0, 0.3)]).unwrap();
        let sampler = ClusterSampler::new(&k).unwrap();
        let mut r = rng::stream(9);
        for _ in 0..2000 {
            let c = sampler.sample(&mut r);
            assert_eq!(c.births[0].offset, 0.0);
            assert_eq!(c.births[0].generation, 0);
            let mut max: f64 = 0.0;
            for b in &c.births[1..] {
                let p = c.births[b.parent.unwrap()];
                assert!(b.offset > p.offset && b.offset <= p.offset + 2.0);
                assert_eq!(b.generation, p.generation + 1);
                max = max.max(b.offset);
            }
            assert_eq!(max, c.length);
        }
    }

    #[test]
    fn mean_cluster_size() {
        let k = SignedKernel::constant(0.25, 2.0).unwrap();
        let sampler = ClusterSampler::new(&k).unwrap();
        let mut r = rng::stream(4);
        let sizes: Vec<f64> = (0..100_000).map(|_| sampler.sample(&mut r).size() as f64).collect();
        let s = SampleSummary::from_slice(&sizes);
        assert!((s.mean - 2.0).abs() < 3.0 * s.std_error, "{s:?}");
    }

    #[test]
    fn tail_bound_examples() {
        let s = SignedKernel::constant(0.25, 2.0).unwrap().summarize();
        assert!((cluster_tail_bound(&s, 0.0).unwrap() - 0.5f64.exp()).abs() < 1e-15);
        assert!((cluster_tail_bound(&s, 0.0).unwrap() - 1.64872).abs() < 1e-5);
        let at20 = cluster_tail_bound(&s, 20.0).unwrap();
        let closed = (-(20.0 / 2.0) * (0.5 - 0.5f64.ln() - 1.0) + 0.5).exp();
        assert!((at20 - closed).abs() < 1e-15);
        assert!((at20 - 0.23899).abs() < 5e-5);
        let c0 = cluster_tail_bound(&s, 3.0).unwrap() * (s.gamma * 3.0).exp();
        for x in [0.0, 1.0, 7.5, 40.0] {
            let c = cluster_tail_bound(&s, x).unwrap() * (s.gamma * x).exp();
            assert!((c - c0).abs() < 1e-12);
        }
        assert!(cluster_tail_bound(&SignedKernel::zero().summarize(), 1.0).is_err());
        assert!(cluster_tail_bound(&s, -1.0).is_err());
    }

    #[test]
    fn cluster_path_is_poisson_for_zero_kernel() {
        let p = simulate_hawkes_cluster(&SignedKernel::zero(), 1.0, 10_000.0, 3).unwrap();
        let n = p.len() as f64;
        // Poisson count: SE of the rate is sqrt(λT)/T.
        assert!((n / 10_000.0 - 1.0).abs() < 3.0 * 100.0 / 10_000.0);
    }

    #[test]
    fn truncation_at_horizon() {
        let k = SignedKernel::constant(0.9, 1.0).unwrap();
        let mut r = rng::stream(12);
        let real = simulate_cluster_realization(&k, 1.0, 5.0, &mut r).unwrap();
        assert!(real.events.atoms().iter().all(|&x| x > 0.0 && x <= 5.0));
        let total: usize = real.clusters.iter().map(Cluster::size).sum();
        assert!(real.events.len() <= total);
    }
}
