//! Sink-side belief over joint source configurations.
//!
//! The joint belief is the state; per-source marginals and ML estimates are
//! derived from it on demand. Under coupling the marginals alone are not a
//! sufficient statistic, so every update works on the full `2^K` vector.
//!
//! Actions are plain `usize`: `0` is idle and `k >= 1` requests source `k`
//! (0-based source `k - 1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::{config_bit, JointConfig, TransitionKernel, MAX_SOURCES};

/// Tolerance on the simplex constraint for stored beliefs.
pub const SIMPLEX_TOLERANCE: f64 = 1e-10;
/// Maximum drift tolerated before an update renormalizes.
const DRIFT_TOLERANCE: f64 = 1e-8;

/// Value carried by the last update: a delivered bit or nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceptionTag {
    Zero,
    One,
    None,
}

impl ReceptionTag {
    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Self::Zero
        } else {
            Self::One
        }
    }

    pub fn bit(self) -> Option<u8> {
        match self {
            Self::Zero => Some(0),
            Self::One => Some(1),
            Self::None => None,
        }
    }
}

/// Distortion between a source bit and its estimate.
///
/// On binary alphabets the three kinds coincide; they are kept distinct so
/// configurations can say which one they mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionKind {
    Indicator,
    #[default]
    Absolute,
    Squared,
}

impl std::str::FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "indicator" => Ok(Self::Indicator),
            "absolute" | "abs" => Ok(Self::Absolute),
            "squared" | "mse" => Ok(Self::Squared),
            _ => Err(Error::Unknown {
                what: "distortion",
                value: s.to_string(),
            }),
        }
    }
}

impl std::fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Indicator => "indicator",
            Self::Absolute => "absolute",
            Self::Squared => "squared",
        })
    }
}

pub fn distortion(x: u8, xhat: u8, kind: DistortionKind) -> f64 {
    let diff = (f64::from(x) - f64::from(xhat)).abs();
    match kind {
        DistortionKind::Indicator => {
            if x != xhat {
                1.0
            } else {
                0.0
            }
        }
        DistortionKind::Absolute => diff,
        DistortionKind::Squared => diff * diff,
    }
}

/// Probability vector over the `2^K` joint configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBelief {
    k: usize,
    probs: Vec<f64>,
}

/// Per-source `[Pr(X_k = 0), Pr(X_k = 1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalBelief {
    pub per_source: Vec<[f64; 2]>,
}

impl JointBelief {
    pub fn new(k: usize, probs: Vec<f64>) -> Result<Self> {
        if k == 0 || k > MAX_SOURCES {
            return Err(Error::SourceCount(k));
        }
        if probs.len() != 1 << k {
            return Err(Error::InvalidBelief(format!(
                "length {} for K = {k}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p) || p.is_nan()) {
            return Err(Error::InvalidBelief("entry outside [0, 1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidBelief(format!("sums to {sum}")));
        }
        Ok(Self { k, probs })
    }

    pub fn uniform(k: usize) -> Self {
        let n = 1 << k;
        Self {
            k,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(config: JointConfig) -> Self {
        let mut probs = vec![0.0; 1 << config.sources()];
        probs[config.index()] = 1.0;
        Self {
            k: config.sources(),
            probs,
        }
    }

    pub fn sources(&self) -> usize {
        self.k
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Squared Euclidean distance between belief vectors.
    pub fn sq_distance(&self, other: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Probability that 0-based `source` has value `bit`.
    pub fn bit_probability(&self, source: usize, bit: u8) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| config_bit(self.k, *i, source) == bit)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.probs.iter().sum();
        (sum - 1.0).abs() <= SIMPLEX_TOLERANCE
            && self
                .probs
                .iter()
                .all(|p| (-SIMPLEX_TOLERANCE..=1.0 + SIMPLEX_TOLERANCE).contains(p))
    }

    fn normalized(k: usize, mut probs: Vec<f64>) -> Self {
        let sum: f64 = probs.iter().sum();
        debug_assert!(
            (sum - 1.0).abs() < DRIFT_TOLERANCE,
            "belief drifted to {sum} before renormalization"
        );
        probs.iter_mut().for_each(|p| *p /= sum);
        Self { k, probs }
    }
}

pub fn marginalize(b: &JointBelief) -> MarginalBelief {
    let mut per_source = vec![[0.0; 2]; b.k];
    for (i, &w) in b.probs.iter().enumerate() {
        for (s, m) in per_source.iter_mut().enumerate() {
            m[usize::from(config_bit(b.k, i, s))] += w;
        }
    }
    MarginalBelief { per_source }
}

/// Maximum-likelihood estimate per source; ties resolve to 0.
pub fn ml_estimate(m: &MarginalBelief) -> Vec<u8> {
    m.per_source
        .iter()
        .map(|[b0, b1]| u8::from(b1 > b0))
        .collect()
}

/// One-step propagation with no new information: `b' = b P`.
pub fn predict(b: &JointBelief, kernel: &TransitionKernel) -> JointBelief {
    let mut out = vec![0.0; b.probs.len()];
    kernel.left_multiply(&b.probs, &mut out);
    JointBelief::normalized(b.k, out)
}

/// Propagates `lag` times; `lag = 0` returns a copy.
pub fn predict_n(b: &JointBelief, kernel: &TransitionKernel, lag: usize) -> JointBelief {
    (0..lag).fold(b.clone(), |acc, _| predict(&acc, kernel))
}

/// Restricts `b` to configurations where `source` equals `bit` and renormalizes.
pub fn restrict(b: &JointBelief, source: usize, bit: u8) -> Result<JointBelief> {
    let mass = b.bit_probability(source, bit);
    if mass <= 0.0 {
        return Err(Error::ImpossibleObservation {
            index: source + 1,
            bit,
        });
    }
    let probs = b
        .probs
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            if config_bit(b.k, i, source) == bit {
                w / mass
            } else {
                0.0
            }
        })
        .collect();
    Ok(JointBelief { k: b.k, probs })
}

/// Belief update after the sink learns that `source` had value `bit`.
pub fn condition_and_predict(
    b: &JointBelief,
    source: usize,
    bit: u8,
    kernel: &TransitionKernel,
) -> Result<JointBelief> {
    Ok(predict(&restrict(b, source, bit)?, kernel))
}

/// Realized per-slot cost: mean distortion plus `gamma` when transmitting.
pub fn true_cost(
    x: JointConfig,
    xhat: &[u8],
    action: usize,
    gamma: f64,
    kind: DistortionKind,
) -> f64 {
    debug_assert_eq!(x.sources(), xhat.len());
    mean_distortion(x, xhat, kind) + transmission_cost(action, gamma)
}

pub fn mean_distortion(x: JointConfig, xhat: &[u8], kind: DistortionKind) -> f64 {
    let total: f64 = xhat
        .iter()
        .enumerate()
        .map(|(s, &e)| distortion(x.bit(s), e, kind))
        .sum();
    total / xhat.len() as f64
}

#[inline]
pub fn transmission_cost(action: usize, gamma: f64) -> f64 {
    if action != 0 {
        gamma
    } else {
        0.0
    }
}

/// Expected distortion of the ML estimate under `b`, averaged over sources.
pub fn expected_distortion(b: &JointBelief, kind: DistortionKind) -> f64 {
    let m = marginalize(b);
    let xhat = ml_estimate(&m);
    let total: f64 = m
        .per_source
        .iter()
        .zip(&xhat)
        .map(|(pair, &e)| {
            pair[0] * distortion(0, e, kind) + pair[1] * distortion(1, e, kind)
        })
        .sum();
    total / b.k as f64
}

/// Expected immediate cost of taking `action` under belief `b`.
pub fn expected_cost(b: &JointBelief, action: usize, gamma: f64, kind: DistortionKind) -> f64 {
    expected_distortion(b, kind) + transmission_cost(action, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{independent_kernel, partial_kernel, SourceParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn belief(probs: &[f64]) -> JointBelief {
        let k = probs.len().trailing_zeros() as usize;
        JointBelief::new(k, probs.to_vec()).unwrap()
    }

    #[test]
    fn marginals_by_summation() {
        let m = marginalize(&belief(&[0.4, 0.1, 0.3, 0.2]));
        assert!((m.per_source[0][0] - 0.5).abs() < 1e-15);
        assert!((m.per_source[1][0] - 0.7).abs() < 1e-15);
        assert!((m.per_source[1][1] - 0.3).abs() < 1e-15);

        let m = marginalize(&JointBelief::point_mass(JointConfig::from_index(3, 7)));
        assert!(m.per_source.iter().all(|p| *p == [0.0, 1.0]));

        let m = marginalize(&JointBelief::uniform(3));
        assert!(m.per_source.iter().all(|p| *p == [0.5, 0.5]));
    }

    #[test]
    fn ml_estimate_and_ties() {
        let m = MarginalBelief {
            per_source: vec![[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]],
        };
        assert_eq!(ml_estimate(&m), vec![0, 1, 0]);
        let x = JointConfig::from_bits(&[1, 0, 1]);
        assert_eq!(ml_estimate(&marginalize(&JointBelief::point_mass(x))), x.bits());
    }

    #[test]
    fn predict_absorbing_and_product_form() {
        let kern = independent_kernel(&SourceParams::new(2, 1.0, 0.5, 0.0)).unwrap();
        let b = JointBelief::point_mass(JointConfig::from_index(2, 0));
        assert_eq!(predict(&b, &kern), b);

        let kern = independent_kernel(&SourceParams::new(2, 0.7, 0.5, 0.0)).unwrap();
        let (a, c) = (0.3, 0.9);
        let b = belief(&[a * c, a * (1.0 - c), (1.0 - a) * c, (1.0 - a) * (1.0 - c)]);
        let next = predict(&b, &kern);
        let m = marginalize(&next);
        for (i, w) in next.probs().iter().enumerate() {
            let prod = m.per_source[0][(i >> 1) & 1] * m.per_source[1][i & 1];
            assert!((w - prod).abs() < 1e-14);
        }
    }

    #[test]
    fn predict_matches_hand_expansion() {
        // brute-force double sum over (from, to) pairs
        let kern = partial_kernel(&SourceParams::new(2, 0.8, 0.5, 0.5)).unwrap();
        let b = [0.4, 0.1, 0.3, 0.2];
        let mut expected = [0.0; 4];
        for from in 0..4 {
            for to in 0..4 {
                expected[to] += b[from] * kern.get(from, to);
            }
        }
        let got = predict(&belief(&b), &kern);
        for (g, e) in got.probs().iter().zip(expected) {
            assert!((g - e).abs() < 1e-15);
        }
        // frozen from the expansion above
        let frozen = [0.444, 0.086, 0.146, 0.324];
        for (g, e) in got.probs().iter().zip(frozen) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn restriction_example() {
        let r = restrict(&belief(&[0.4, 0.1, 0.3, 0.2]), 0, 1).unwrap();
        let expected = [0.0, 0.0, 0.6, 0.4];
        for (g, e) in r.probs().iter().zip(expected) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn consistent_point_mass_conditioning_is_predict() {
        let kern = partial_kernel(&SourceParams::new(3, 0.8, 0.5, 0.4)).unwrap();
        let b = JointBelief::point_mass(JointConfig::from_bits(&[1, 0, 1]));
        let c = condition_and_predict(&b, 1, 0, &kern).unwrap();
        assert_eq!(c, predict(&b, &kern));
    }

    #[test]
    fn impossible_observation_is_an_error() {
        let kern = partial_kernel(&SourceParams::new(2, 0.8, 0.5, 0.4)).unwrap();
        let b = JointBelief::point_mass(JointConfig::from_bits(&[0, 0]));
        assert!(matches!(
            condition_and_predict(&b, 0, 1, &kern),
            Err(Error::ImpossibleObservation { index: 1, bit: 1 })
        ));
    }

    #[test]
    fn distortion_kinds_agree_on_bits() {
        for x in 0..2 {
            for e in 0..2 {
                let want = if x == e { 0.0 } else { 1.0 };
                for kind in [
                    DistortionKind::Indicator,
                    DistortionKind::Absolute,
                    DistortionKind::Squared,
                ] {
                    assert_eq!(distortion(x, e, kind), want);
                }
            }
        }
    }

    #[test]
    fn true_cost_examples() {
        let x = JointConfig::from_bits(&[0, 1]);
        let kind = DistortionKind::Absolute;
        assert!((true_cost(x, &[0, 0], 2, 0.15, kind) - 0.65).abs() < 1e-15);
        assert_eq!(true_cost(x, &[0, 1], 0, 0.15, kind), 0.0);
        assert_eq!(true_cost(x, &[1, 1], 0, 0.0, kind), true_cost(x, &[1, 1], 2, 0.0, kind));
    }

    #[test]
    fn expected_cost_examples() {
        let kind = DistortionKind::Absolute;
        let pm = JointBelief::point_mass(JointConfig::from_bits(&[1, 0]));
        assert_eq!(expected_cost(&pm, 0, 0.15, kind), 0.0);
        assert_eq!(expected_cost(&pm, 1, 0.15, kind), 0.15);

        // product belief with marginals [0.7, 0.3] and [0.5, 0.5]
        let b = belief(&[0.35, 0.35, 0.15, 0.15]);
        assert!((expected_cost(&b, 1, 0.15, kind) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn expected_cost_monte_carlo() {
        let b = belief(&[0.1, 0.25, 0.4, 0.25]);
        let kind = DistortionKind::Absolute;
        let xhat = ml_estimate(&marginalize(&b));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let idx = crate::source::sample_index(b.probs(), &mut rng);
                true_cost(JointConfig::from_index(2, idx), &xhat, 1, 0.15, kind)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let analytic = expected_cost(&b, 1, 0.15, kind);
        assert!((mean - analytic).abs() < 3.0 * se, "{mean} vs {analytic}");
    }

    #[test]
    fn ml_estimate_minimizes_expected_distortion() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let raw: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let b = belief(&raw.iter().map(|v| v / total).collect::<Vec<_>>());
            let best = expected_distortion(&b, DistortionKind::Absolute);
            assert!(best <= 0.5 + 1e-15);
            let m = marginalize(&b);
            for guess in 0..8usize {
                let bits = JointConfig::from_index(3, guess).bits();
                let d: f64 = m
                    .per_source
                    .iter()
                    .zip(&bits)
                    .map(|(pair, &e)| pair[1 - usize::from(e)])
                    .sum::<f64>()
                    / 3.0;
                assert!(best <= d + 1e-15);
            }
        }
    }

    #[test]
    fn rejects_malformed_beliefs() {
        assert!(JointBelief::new(2, vec![0.5, 0.5, 0.0]).is_err());
        assert!(JointBelief::new(1, vec![0.6, 0.6]).is_err());
        assert!(JointBelief::new(1, vec![1.5, -0.5]).is_err());
    }
}
