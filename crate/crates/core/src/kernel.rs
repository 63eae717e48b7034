//! Piecewise-constant signed reproduction kernels.
//!
//! A kernel `h` lives on `(0, L]` and is stored as contiguous pieces
//! `(start, end]` with a constant value each. Positive values excite future
//! arrivals, negative values inhibit them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub value: f64,
}

impl Piece {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// Signed reproduction function, piecewise constant on `(0, support_bound]`.
///
/// The zero kernel has no pieces and `support_bound == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct SignedKernel {
    pieces: Vec<Piece>,
    support_bound: f64,
}

/// Scalar summaries of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    /// `||h+||_1`.
    pub l1_positive: f64,
    /// `∫|h|`, which is `||h||_1` for a nonnegative kernel.
    pub l1_total: f64,
    /// `L(h)`.
    pub support_bound: f64,
    /// `L(h+)`, the last time at which the kernel is strictly positive.
    pub positive_support_bound: f64,
    /// Cluster-length decay rate of the positive part; `+inf` when `h+ = 0`.
    pub gamma: f64,
    pub subcritical: bool,
}

/// `(m - ln m - 1) / L`, the decay rate of the Galton–Watson cluster length
/// for mean offspring `m` and lifelength `L`.
pub fn cluster_decay_rate(l1: f64, support_bound: f64) -> f64 {
    if l1 <= 0.0 {
        return f64::INFINITY;
    }
    (l1 - l1.ln() - 1.0) / support_bound
}

impl SignedKernel {
    pub fn zero() -> Self {
        Self {
            pieces: Vec::new(),
            support_bound: 0.0,
        }
    }

    /// Builds a kernel from `(start, end, value)` triples. Pieces must be
    /// contiguous and start at 0. Trailing zero pieces are dropped so that
    /// `support_bound` is the true `L(h)`; an all-zero input yields the zero
    /// kernel.
    pub fn from_pieces<I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64, f64)>,
    {
        let mut pieces = Vec::new();
        let mut cursor = 0.0;
        for (i, (start, end, value)) in triples.into_iter().enumerate() {
            if !(start.is_finite() && end.is_finite() && value.is_finite()) {
                return Err(Error::InvalidKernel(format!("piece {i} has a non-finite entry")));
            }
            if start != cursor {
                return Err(Error::InvalidKernel(format!(
                    "piece {i} starts at {start} but the previous piece ends at {cursor}"
                )));
            }
            if end <= start {
                return Err(Error::InvalidKernel(format!(
                    "piece {i} is empty or reversed: ({start}, {end}]"
                )));
            }
            pieces.push(Piece { start, end, value });
            cursor = end;
        }
        while pieces.last().is_some_and(|p| p.value == 0.0) {
            pieces.pop();
        }
        if pieces.is_empty() {
            return Ok(Self::zero());
        }
        let support_bound = pieces.last().map(|p| p.end).unwrap_or(0.0);
        Ok(Self {
            pieces,
            support_bound,
        })
    }

    /// Single constant piece on `(0, length]`.
    pub fn constant(value: f64, length: f64) -> Result<Self> {
        Self::from_pieces([(0.0, length, value)])
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn support_bound(&self) -> f64 {
        self.support_bound
    }

    pub fn is_zero(&self) -> bool {
        self.pieces.iter().all(|p| p.value == 0.0)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.pieces.iter().all(|p| p.value >= 0.0)
    }

    /// `h(t)`, zero outside `(0, L]`.
    pub fn evaluate(&self, t: f64) -> f64 {
        if !(t > 0.0 && t <= self.support_bound) {
            return 0.0;
        }
        // First piece whose end is >= t.
        let idx = self.pieces.partition_point(|p| p.end < t);
        self.pieces.get(idx).map_or(0.0, |p| p.value)
    }

    /// `h+` with the same pieces and support bound.
    pub fn positive_part(&self) -> SignedKernel {
        SignedKernel {
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece {
                    value: p.value.max(0.0),
                    ..*p
                })
                .collect(),
            support_bound: self.support_bound,
        }
    }

    pub fn l1_positive(&self) -> f64 {
        self.pieces.iter().map(|p| p.value.max(0.0) * p.len()).sum()
    }

    pub fn summarize(&self) -> KernelSummary {
        let l1_positive = self.l1_positive();
        let l1_total = self.pieces.iter().map(|p| p.value.abs() * p.len()).sum();
        let positive_support_bound = self
            .pieces
            .iter()
            .rev()
            .find(|p| p.value > 0.0)
            .map_or(0.0, |p| p.end);
        KernelSummary {
            l1_positive,
            l1_total,
            support_bound: self.support_bound,
            positive_support_bound,
            gamma: cluster_decay_rate(l1_positive, positive_support_bound),
            subcritical: l1_positive < 1.0,
        }
    }

    pub(crate) fn ensure_subcritical(&self) -> Result<KernelSummary> {
        let s = self.summarize();
        if s.subcritical {
            Ok(s)
        } else {
            Err(Error::NotSubcritical {
                l1_positive: s.l1_positive,
            })
        }
    }
}

impl TryFrom<Vec<[f64; 3]>> for SignedKernel {
    type Error = Error;

    fn try_from(v: Vec<[f64; 3]>) -> Result<Self> {
        Self::from_pieces(v.into_iter().map(|[a, b, c]| (a, b, c)))
    }
}

impl From<SignedKernel> for Vec<[f64; 3]> {
    fn from(k: SignedKernel) -> Self {
        k.pieces.iter().map(|p| [p.start, p.end, p.value]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn signed() -> SignedKernel {
        SignedKernel::from_pieces([(0.0, 1.0, 0.3), (1.0, 2.0, -0.2)]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(SignedKernel::zero().evaluate(0.5), 0.0);
        let k = SignedKernel::constant(-0.5, 2.0).unwrap();
        assert_eq!(k.evaluate(1.5), -0.5);
        assert_eq!(k.evaluate(2.5), 0.0);
        assert_eq!(k.evaluate(2.0), -0.5);
        assert_eq!(k.evaluate(0.0), 0.0);
        assert_eq!(k.evaluate(-1.0), 0.0);
        assert_eq!(signed().evaluate(1.0), 0.3);
        assert_eq!(signed().evaluate(1.0 + 1e-12), -0.2);
    }

    #[test]
    fn positive_part_examples() {
        let k = SignedKernel::constant(-0.5, 2.0).unwrap();
        let p = k.positive_part();
        assert_eq!(p.pieces(), &[Piece { start: 0.0, end: 2.0, value: 0.0 }]);
        assert_eq!(p.support_bound(), 2.0);

        let p = signed().positive_part();
        assert_eq!(
            Vec::<[f64; 3]>::from(p.clone()),
            vec![[0.0, 1.0, 0.3], [1.0, 2.0, 0.0]]
        );
        assert_eq!(p.support_bound(), 2.0);

        let nonneg = SignedKernel::from_pieces([(0.0, 0.5, 0.2), (0.5, 3.0, 0.1)]).unwrap();
        assert_eq!(nonneg.positive_part(), nonneg);
    }

    #[test]
    fn summarize_examples() {
        let s = SignedKernel::constant(0.25, 2.0).unwrap().summarize();
        assert_eq!(s.l1_positive, 0.5);
        let expected = (0.5 - 0.5f64.ln() - 1.0) / 2.0;
        assert!((s.gamma - expected).abs() < 1e-15);
        assert!((s.gamma - 0.09657).abs() < 5e-6);
        assert!(s.subcritical);

        let s = signed().summarize();
        assert!((s.l1_positive - 0.3).abs() < 1e-15);
        assert_eq!(s.support_bound, 2.0);
        assert_eq!(s.positive_support_bound, 1.0);
        assert!((s.l1_total - 0.5).abs() < 1e-15);

        for l in [0.5, 2.0, 7.0] {
            assert!(cluster_decay_rate(1.0 - 1e-9, l) < 1e-15);
        }
        let s = SignedKernel::zero().summarize();
        assert_eq!(s.gamma, f64::INFINITY);
        assert!(s.subcritical);
        let s = SignedKernel::constant(0.6, 2.0).unwrap().summarize();
        assert!(!s.subcritical);
    }

    #[test]
    fn rejects_malformed_pieces() {
        assert!(SignedKernel::from_pieces([(0.1, 1.0, 0.2)]).is_err());
        assert!(SignedKernel::from_pieces([(0.0, 1.0, 0.2), (1.5, 2.0, 0.1)]).is_err());
        assert!(SignedKernel::from_pieces([(0.0, 0.0, 0.2)]).is_err());
        assert!(SignedKernel::from_pieces([(0.0, 1.0, f64::NAN)]).is_err());
        assert_eq!(SignedKernel::from_pieces([(0.0, 1.0, 0.0)]).unwrap(), SignedKernel::zero());
        let trimmed = SignedKernel::from_pieces([(0.0, 1.0, 0.4), (1.0, 3.0, 0.0)]).unwrap();
        assert_eq!(trimmed.support_bound(), 1.0);
    }

    #[test]
    fn serde_triples() {
        let k: SignedKernel = serde_json::from_str("[[0,1,0.3],[1,2,-0.2]]").unwrap();
        assert_eq!(k, signed());
        assert!(serde_json::from_str::<SignedKernel>("[[0,1,0.3],[2,3,0.1]]").is_err());
    }

    #[test]
    fn gamma_decreasing_in_mass() {
        let grid: Vec<f64> = (1..200).map(|i| i as f64 / 200.0).collect();
        for w in grid.windows(2) {
            assert!(cluster_decay_rate(w[0], 2.0) > cluster_decay_rate(w[1], 2.0));
        }
    }

    fn arb_kernel() -> impl Strategy<Value = SignedKernel> {
        prop::collection::vec((0.01f64..2.0, -3.0f64..3.0), 1..6).prop_map(|parts| {
            let mut t = 0.0;
            let triples: Vec<_> = parts
                .into_iter()
                .map(|(len, v)| {
                    let s = t;
                    t += len;
                    (s, t, v)
                })
                .collect();
            SignedKernel::from_pieces(triples).unwrap()
        })
    }

    proptest! {
        #[test]
        fn positive_part_is_pointwise_max(k in arb_kernel(), t in -1.0f64..12.0) {
            prop_assert_eq!(k.positive_part().evaluate(t), k.evaluate(t).max(0.0));
        }

        #[test]
        fn l1_positive_matches_midpoint_rule(k in arb_kernel()) {
            // Midpoint rule is exact on each constant piece when the grid
            // is aligned with the pieces.
            let p = k.positive_part();
            let mut quad = 0.0;
            for piece in p.pieces() {
                let n = 64;
                let h = piece.len() / n as f64;
                for i in 0..n {
                    quad += p.evaluate(piece.start + (i as f64 + 0.5) * h) * h;
                }
            }
            prop_assert!((quad - k.l1_positive()).abs() < 1e-12);
        }
    }
}
