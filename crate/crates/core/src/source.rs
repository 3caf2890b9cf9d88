//! Joint dynamics of K binary sources.
//!
//! Configurations of the K sources are indexed by an integer in `[0, 2^K)`
//! with source 1 as the most significant bit, so `[X_1, X_2] = [1, 0]` is
//! index 2. Kernels, beliefs and conditioning sets all share this order.
//!
//! Three kernels are provided: independent sources (product of per-source
//! flip chains), fully coupled sources (every successor is `0_K` or `1_K`),
//! and their convex mixture weighted by the coupling factor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};

/// Largest supported source count; kernels are dense `2^K x 2^K`.
pub const MAX_SOURCES: usize = 10;

const ROW_TOLERANCE: f64 = 1e-12;

/// One joint configuration of the K source bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JointConfig {
    k: usize,
    index: usize,
}

impl JointConfig {
    pub fn from_index(k: usize, index: usize) -> Self {
        debug_assert!(index < (1 << k));
        Self { k, index }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let index = bits
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | usize::from(b & 1));
        Self {
            k: bits.len(),
            index,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn sources(&self) -> usize {
        self.k
    }

    /// Bit of the 0-based `source`.
    pub fn bit(&self, source: usize) -> u8 {
        config_bit(self.k, self.index, source)
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.k).map(|s| self.bit(s)).collect()
    }
}

/// Bit of 0-based `source` inside configuration `index` for K = `k`.
#[inline]
pub fn config_bit(k: usize, index: usize, source: usize) -> u8 {
    ((index >> (k - 1 - source)) & 1) as u8
}

/// Parameters of the source model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Number of sources.
    pub k: usize,
    /// Self-transition probability of each source; `q = 1 - p`.
    pub p: f64,
    /// Probability that a mixed configuration collapses to `0_K` under full coupling.
    pub theta: f64,
    /// Coupling factor.
    pub lambda: f64,
}

impl SourceParams {
    pub fn new(k: usize, p: f64, theta: f64, lambda: f64) -> Self {
        Self { k, p, theta, lambda }
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    pub fn configs(&self) -> usize {
        1 << self.k
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > MAX_SOURCES {
            return Err(Error::SourceCount(self.k));
        }
        check_probability("p", self.p)?;
        check_probability("theta", self.theta)?;
        check_probability("lambda", self.lambda)
    }
}

impl Default for SourceParams {
    fn default() -> Self {
        Self::new(2, 0.8, 0.5, 0.4)
    }
}

/// Dense row-stochastic matrix over the `2^K` joint configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    k: usize,
    n: usize,
    data: Vec<f64>,
}

impl TransitionKernel {
    /// Wraps a row-major matrix, checking shape and stochasticity.
    pub fn from_rows(k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || k > MAX_SOURCES {
            return Err(Error::SourceCount(k));
        }
        let n = 1 << k;
        assert_eq!(data.len(), n * n, "kernel must be 2^K x 2^K");
        let kernel = Self { k, n, data };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn sources(&self) -> usize {
        self.k
    }

    /// Number of joint configurations, `2^K`.
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }

    #[inline]
    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.n..(from + 1) * self.n]
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            let row = self.row(i);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !(0.0..=1.0).contains(v) || v.is_nan())
                || (sum - 1.0).abs() > ROW_TOLERANCE
            {
                return Err(Error::NotStochastic { row: i, sum });
            }
        }
        Ok(())
    }

    /// Entrywise `weight * self + (1 - weight) * other`.
    pub fn mix(&self, other: &Self, weight: f64) -> Self {
        assert_eq!(self.n, other.n);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| weight * a + (1.0 - weight) * b)
            .collect();
        Self {
            k: self.k,
            n: self.n,
            data,
        }
    }

    /// Row vector times matrix: `out[j] = sum_i v[i] * P[i][j]`.
    pub fn left_multiply(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &w) in v.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &pij) in out.iter_mut().zip(self.row(i)) {
                *o += w * pij;
            }
        }
    }
}

/// Product of K independent flip chains.
pub fn independent_kernel(params: &SourceParams) -> Result<TransitionKernel> {
    params.validate()?;
    let (k, n) = (params.k, params.configs());
    let (p, q) = (params.p, params.q());
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let flips = (i ^ j).count_ones() as i32;
            data[i * n + j] = p.powi(k as i32 - flips) * q.powi(flips);
        }
    }
    Ok(TransitionKernel { k, n, data })
}

/// Fully coupled sources: all bits move together, mixed configurations collapse.
pub fn coupled_kernel(params: &SourceParams) -> Result<TransitionKernel> {
    params.validate()?;
    let (k, n) = (params.k, params.configs());
    let (zeros, ones) = (0, n - 1);
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut data[i * n..(i + 1) * n];
        if i == zeros {
            row[zeros] += params.p;
            row[ones] += params.q();
        } else if i == ones {
            row[ones] += params.p;
            row[zeros] += params.q();
        } else {
            row[zeros] += params.theta;
            row[ones] += 1.0 - params.theta;
        }
    }
    Ok(TransitionKernel { k, n, data })
}

/// `lambda * coupled + (1 - lambda) * independent`.
pub fn partial_kernel(params: &SourceParams) -> Result<TransitionKernel> {
    let coupled = coupled_kernel(params)?;
    let independent = independent_kernel(params)?;
    Ok(coupled.mix(&independent, params.lambda))
}

/// Draws the successor of `x` from its kernel row.
pub fn sample_next<R: Rng + ?Sized>(
    x: JointConfig,
    kernel: &TransitionKernel,
    rng: &mut R,
) -> JointConfig {
    let idx = sample_index(kernel.row(x.index()), rng);
    JointConfig::from_index(kernel.sources(), idx)
}

/// Inverse-CDF draw from a probability vector. Consumes exactly one uniform.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &w) in probs.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = j;
            if u < acc {
                return j;
            }
        }
    }
    last_positive
}

/// Stationary distribution of a kernel with a single closed class.
///
/// Uses power iteration on the lazy chain `(P + I) / 2`, which has the same
/// stationary vector and is aperiodic.
pub fn stationary_distribution(kernel: &TransitionKernel) -> Result<Vec<f64>> {
    if closed_class_count(kernel) != 1 {
        return Err(Error::Reducible);
    }
    let n = kernel.size();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..2_000_000 {
        kernel.left_multiply(&pi, &mut next);
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if residual < 1e-13 {
            let total: f64 = next.iter().sum();
            return Ok(next.into_iter().map(|v| v / total).collect());
        }
        for (p, x) in pi.iter_mut().zip(&next) {
            *p = 0.5 * (*p + x);
        }
    }
    Err(Error::StationaryNotConverged(residual))
}

/// Number of closed communicating classes of the positive-entry graph.
fn closed_class_count(kernel: &TransitionKernel) -> usize {
    let n = kernel.size();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| kernel.get(i, j) > 0.0).collect())
        .collect();
    let comp = strongly_connected(&succ);
    let classes = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut closed = vec![true; classes];
    for (i, targets) in succ.iter().enumerate() {
        for &j in targets {
            if comp[i] != comp[j] {
                closed[comp[i]] = false;
            }
        }
    }
    closed.into_iter().filter(|&c| c).count()
}

/// Kosaraju labelling of strongly connected components.
pub(crate) fn strongly_connected(succ: &[Vec<usize>]) -> Vec<usize> {
    let n = succ.len();
    let mut pred = vec![Vec::new(); n];
    for (i, targets) in succ.iter().enumerate() {
        for &j in targets {
            pred[j].push(i);
        }
    }

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut stack = vec![(start, 0usize)];
        while let Some((v, next)) = stack.pop() {
            if next < succ[v].len() {
                stack.push((v, next + 1));
                let w = succ[v][next];
                if !visited[w] {
                    visited[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
            }
        }
    }

    let mut comp = vec![usize::MAX; n];
    let mut label = 0;
    for &root in order.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        comp[root] = label;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in &pred[v] {
                if comp[w] == usize::MAX {
                    comp[w] = label;
                    stack.push(w);
                }
            }
        }
        label += 1;
    }
    comp
}
