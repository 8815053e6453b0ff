//! Reversible finite Markov chains: validation, spectral decomposition
//! in L^2(pi), spectral gaps, exact stay-in-set probabilities for
//! time-inhomogeneous chains, the product upper bound
//! `sqrt(pi(A_0) pi(A_k)) prod_i [1 - delta_i (1 - sqrt(pi(A_{i-1}) pi(A_i)))]`,
//! and its equality characterization via the `I_A - pi(A) 1` eigenfunction.
//!
//! Eigenproblems are solved by symmetrizing with `diag(pi)^(1/2)` and
//! running cyclic Jacobi rotations; no external linear algebra.

use std::collections::BTreeSet;

use serde::Deserialize;
use thiserror::Error;

use crate::cube::CorrelationParam;

/// Hard cap on the state space; tables are dense and the eigensolver is
/// cubic per sweep.
pub const MAX_STATES: usize = 4096;

const ROW_SUM_TOL: f64 = 1e-12;
const BALANCE_TOL: f64 = 1e-12;
const ERGODIC_TOL: f64 = 1e-12;
const JACOBI_OFF_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChainError {
    #[error("state space size {0} outside 2..={MAX_STATES}")]
    BadSize(usize),
    #[error("transition matrix is not row-stochastic: {reason}")]
    NotStochastic { reason: String },
    #[error("chain is not reversible: {reason}")]
    NotReversible { reason: String },
    #[error("chain is not ergodic: {reason}")]
    NotErgodic { reason: String },
    #[error("jacobi sweep limit reached before convergence")]
    EigenSolverStalled,
    #[error("stay query needs at least one step and one more set than chains")]
    MalformedQuery,
    #[error("chains in a stay query must share the state space and stationary measure")]
    MismatchedChains,
    #[error("set contains state {0}, beyond the state space")]
    BadState(usize),
    #[error("equality hypotheses not met: {0}")]
    InapplicableHypotheses(String),
}

/// A reversible ergodic transition matrix together with its stationary
/// measure and (eagerly computed) spectral data. Construction validates
/// row sums, detailed balance, irreducibility and aperiodicity, so every
/// value of this type has a genuine spectral gap.
#[derive(Debug, Clone)]
pub struct ReversibleChain {
    size: usize,
    transition: Vec<f64>,
    stationary: Vec<f64>,
    /// Eigenvalues ascending; the last is 1.
    eigenvalues: Vec<f64>,
    /// Column k holds the eigenfunction e_k in state coordinates,
    /// orthonormal under `<f,g> = sum_x pi(x) f(x) g(x)`.
    eigenbasis: Vec<f64>,
}

impl ReversibleChain {
    /// Validate a row-stochastic matrix, deriving the stationary measure
    /// from detailed-balance ratios when none is supplied.
    pub fn new(rows: Vec<Vec<f64>>, stationary: Option<Vec<f64>>) -> Result<Self, ChainError> {
        let size = rows.len();
        if !(2..=MAX_STATES).contains(&size) {
            return Err(ChainError::BadSize(size));
        }
        let mut transition = Vec::with_capacity(size * size);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(ChainError::NotStochastic {
                    reason: format!("row {x} has {} entries, want {size}", row.len()),
                });
            }
            let mut sum = 0.0;
            for &m in row {
                if m < 0.0 || !m.is_finite() {
                    return Err(ChainError::NotStochastic {
                        reason: format!("row {x} has a negative or non-finite entry"),
                    });
                }
                sum += m;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ChainError::NotStochastic {
                    reason: format!("row {x} sums to {sum}"),
                });
            }
            transition.extend_from_slice(row);
        }

        let stationary = match stationary {
            Some(pi) => {
                if pi.len() != size {
                    return Err(ChainError::NotReversible {
                        reason: "stationary vector has the wrong length".into(),
                    });
                }
                let total: f64 = pi.iter().sum();
                if pi.iter().any(|&p| p <= 0.0 || p.is_nan()) || (total - 1.0).abs() > 1e-9 {
                    return Err(ChainError::NotReversible {
                        reason: "stationary vector must be positive and sum to 1".into(),
                    });
                }
                pi
            }
            None => derive_stationary(&transition, size)?,
        };

        for x in 0..size {
            for y in (x + 1)..size {
                let fwd = stationary[x] * transition[x * size + y];
                let bwd = stationary[y] * transition[y * size + x];
                if (fwd - bwd).abs() > BALANCE_TOL {
                    return Err(ChainError::NotReversible {
                        reason: format!("detailed balance fails at ({x},{y}): {fwd} vs {bwd}"),
                    });
                }
            }
        }

        if !connected(&transition, size) {
            return Err(ChainError::NotErgodic {
                reason: "positive-entry graph is not connected".into(),
            });
        }

        // Symmetrize s(x,y) = m(x,y) sqrt(pi(x)/pi(y)) and diagonalize.
        let mut sym = vec![0.0; size * size];
        for x in 0..size {
            for y in 0..size {
                sym[x * size + y] =
                    transition[x * size + y] * (stationary[x] / stationary[y]).sqrt();
            }
        }
        // Force exact symmetry for the rotation solver.
        for x in 0..size {
            for y in (x + 1)..size {
                let avg = 0.5 * (sym[x * size + y] + sym[y * size + x]);
                sym[x * size + y] = avg;
                sym[y * size + x] = avg;
            }
        }
        let (mut eigenvalues, mut vectors) = jacobi_eigen(sym, size)?;
        sort_eigenpairs(&mut eigenvalues, &mut vectors, size);

        // e_k(x) = v_k(x) / sqrt(pi(x)) is orthonormal in L^2(pi).
        let mut eigenbasis = vec![0.0; size * size];
        for k in 0..size {
            for x in 0..size {
                eigenbasis[x * size + k] = vectors[x * size + k] / stationary[x].sqrt();
            }
        }

        let subdominant = eigenvalues[0].abs().max(eigenvalues[size - 2].abs());
        if subdominant >= 1.0 - ERGODIC_TOL {
            return Err(ChainError::NotErgodic {
                reason: format!("subdominant eigenvalue modulus {subdominant}"),
            });
        }

        Ok(ReversibleChain {
            size,
            transition,
            stationary,
            eigenvalues,
            eigenbasis,
        })
    }

    /// Chain from a symmetric nonnegative weight matrix: `m(x,y)`
    /// proportional to `w(x,y)` with `pi` proportional to row sums.
    pub fn from_symmetric_weights(weights: &[Vec<f64>]) -> Result<Self, ChainError> {
        let size = weights.len();
        let mut rows = vec![vec![0.0; size]; size];
        let mut degrees = vec![0.0; size];
        for (x, row) in weights.iter().enumerate() {
            if row.len() != size {
                return Err(ChainError::NotStochastic {
                    reason: "ragged weight matrix".into(),
                });
            }
            degrees[x] = row.iter().sum();
            if degrees[x] <= 0.0 || degrees[x].is_nan() {
                return Err(ChainError::NotStochastic {
                    reason: format!("row {x} has zero weight"),
                });
            }
        }
        let total: f64 = degrees.iter().sum();
        for x in 0..size {
            for y in 0..size {
                if (weights[x][y] - weights[y][x]).abs() > 1e-15 * total {
                    return Err(ChainError::NotReversible {
                        reason: format!("weights not symmetric at ({x},{y})"),
                    });
                }
                rows[x][y] = weights[x][y] / degrees[x];
            }
        }
        let pi: Vec<f64> = degrees.iter().map(|d| d / total).collect();
        Self::new(rows, Some(pi))
    }

    /// The noise operator as a `2^n`-state chain on the cube:
    /// `m(x,y) = eps^d (1-eps)^(n-d)` with `d` the Hamming distance.
    /// Needs `rho < 1` for ergodicity.
    pub fn bonami_beckner(n: usize, rho: CorrelationParam) -> Result<Self, ChainError> {
        let size = 1usize << n;
        if !(2..=MAX_STATES).contains(&size) {
            return Err(ChainError::BadSize(size));
        }
        let eps = rho.epsilon();
        let mut pow_e = vec![1.0; n + 1];
        let mut pow_c = vec![1.0; n + 1];
        for i in 1..=n {
            pow_e[i] = pow_e[i - 1] * eps;
            pow_c[i] = pow_c[i - 1] * (1.0 - eps);
        }
        let rows: Vec<Vec<f64>> = (0..size)
            .map(|x| {
                (0..size)
                    .map(|y| {
                        let d = (x ^ y).count_ones() as usize;
                        pow_e[d] * pow_c[n - d]
                    })
                    .collect()
            })
            .collect();
        let pi = vec![1.0 / size as f64; size];
        Self::new(rows, Some(pi))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn transition(&self, x: usize, y: usize) -> f64 {
        self.transition[x * self.size + y]
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Eigenvalues in ascending order (the last one is 1).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenfunction for the k-th ascending eigenvalue, in state
    /// coordinates.
    pub fn eigenfunction(&self, k: usize) -> Vec<f64> {
        (0..self.size)
            .map(|x| self.eigenbasis[x * self.size + k])
            .collect()
    }

    /// `delta = min(|-1 - lambda_1|, |1 - lambda_{r-1}|)`, positive by
    /// the ergodicity validation.
    pub fn spectral_gap(&self) -> f64 {
        let low = (-1.0 - self.eigenvalues[0]).abs();
        let high = (1.0 - self.eigenvalues[self.size - 2]).abs();
        low.min(high)
    }

    pub fn pi_of(&self, set: &BTreeSet<usize>) -> f64 {
        set.iter().map(|&x| self.stationary[x]).sum()
    }

    /// Row-vector step `mu M`.
    pub fn apply_measure(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for x in 0..self.size {
            let m = mu[x];
            if m != 0.0 {
                let row = &self.transition[x * self.size..(x + 1) * self.size];
                for (y, &t) in row.iter().enumerate() {
                    out[y] += m * t;
                }
            }
        }
        out
    }

    /// Function step `(M f)(x) = sum_y m(x,y) f(y)`.
    pub fn apply_function(&self, f: &[f64]) -> Vec<f64> {
        (0..self.size)
            .map(|x| {
                self.transition[x * self.size..(x + 1) * self.size]
                    .iter()
                    .zip(f)
                    .map(|(t, v)| t * v)
                    .sum()
            })
            .collect()
    }

    /// pi-weighted inner product.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.stationary
            .iter()
            .zip(f)
            .zip(g)
            .map(|((p, a), b)| p * a * b)
            .sum()
    }

    fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }
}

fn derive_stationary(transition: &[f64], size: usize) -> Result<Vec<f64>, ChainError> {
    // For a reversible chain pi(y)/pi(x) = m(x,y)/m(y,x) along positive
    // transitions; propagate the ratios over a spanning tree, normalize.
    let mut log_pi = vec![f64::NAN; size];
    log_pi[0] = 0.0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(x) = queue.pop_front() {
        for y in 0..size {
            if log_pi[y].is_nan() {
                let fwd = transition[x * size + y];
                let bwd = transition[y * size + x];
                if fwd > 0.0 || bwd > 0.0 {
                    if fwd == 0.0 || bwd == 0.0 {
                        return Err(ChainError::NotReversible {
                            reason: format!("one-way transition between {x} and {y}"),
                        });
                    }
                    log_pi[y] = log_pi[x] + (fwd / bwd).ln();
                    queue.push_back(y);
                }
            }
        }
    }
    if log_pi.iter().any(|v| v.is_nan()) {
        return Err(ChainError::NotErgodic {
            reason: "positive-entry graph is not connected".into(),
        });
    }
    let max = log_pi.iter().cloned().fold(f64::MIN, f64::max);
    let weights: Vec<f64> = log_pi.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

fn connected(transition: &[f64], size: usize) -> bool {
    let mut seen = vec![false; size];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for y in 0..size {
            if !seen[y] && (transition[x * size + y] > 0.0 || transition[y * size + x] > 0.0) {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Cyclic Jacobi diagonalization of a symmetric matrix (row-major);
/// returns (diagonal, accumulated rotations as columns). Sweeps until
/// the off-diagonal Frobenius norm falls below 1e-13.
fn jacobi_eigen(mut a: Vec<f64>, size: usize) -> Result<(Vec<f64>, Vec<f64>), ChainError> {
    let mut v = vec![0.0; size * size];
    for i in 0..size {
        v[i * size + i] = 1.0;
    }
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..size {
            for q in (p + 1)..size {
                off += a[p * size + q] * a[p * size + q];
            }
        }
        if (2.0 * off).sqrt() <= JACOBI_OFF_TOL {
            let diag = (0..size).map(|i| a[i * size + i]).collect();
            return Ok((diag, v));
        }
        for p in 0..size {
            for q in (p + 1)..size {
                let apq = a[p * size + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = 0.5 * (a[q * size + q] - a[p * size + p]) / apq;
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let app = a[p * size + p];
                let aqq = a[q * size + q];
                a[p * size + p] = app - t * apq;
                a[q * size + q] = aqq + t * apq;
                a[p * size + q] = 0.0;
                a[q * size + p] = 0.0;
                for i in 0..size {
                    if i != p && i != q {
                        let aip = a[i * size + p];
                        let aiq = a[i * size + q];
                        a[i * size + p] = aip - s * (aiq + tau * aip);
                        a[i * size + q] = aiq + s * (aip - tau * aiq);
                        a[p * size + i] = a[i * size + p];
                        a[q * size + i] = a[i * size + q];
                    }
                }
                for i in 0..size {
                    let vip = v[i * size + p];
                    let viq = v[i * size + q];
                    v[i * size + p] = vip - s * (viq + tau * vip);
                    v[i * size + q] = viq + s * (vip - tau * viq);
                }
            }
        }
    }
    Err(ChainError::EigenSolverStalled)
}

fn sort_eigenpairs(values: &mut [f64], vectors: &mut [f64], size: usize) {
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let old_values = values.to_vec();
    let old_vectors = vectors.to_vec();
    for (new_k, &old_k) in order.iter().enumerate() {
        values[new_k] = old_values[old_k];
        // Deterministic sign: largest-magnitude entry positive.
        let mut pivot = 0usize;
        let mut best = 0.0;
        for x in 0..size {
            let mag = old_vectors[x * size + old_k].abs();
            if mag > best {
                best = mag;
                pivot = x;
            }
        }
        let sign = if old_vectors[pivot * size + old_k] < 0.0 {
            -1.0
        } else {
            1.0
        };
        for x in 0..size {
            vectors[x * size + new_k] = sign * old_vectors[x * size + old_k];
        }
    }
}

/// A time-inhomogeneous stay query: chains `M_1..M_k` sharing one
/// stationary measure, and sets `A_0..A_k`.
pub struct StayQuery<'a> {
    chains: Vec<&'a ReversibleChain>,
    sets: Vec<BTreeSet<usize>>,
}

impl<'a> StayQuery<'a> {
    pub fn new(
        chains: Vec<&'a ReversibleChain>,
        sets: Vec<BTreeSet<usize>>,
    ) -> Result<Self, ChainError> {
        if chains.is_empty() || sets.len() != chains.len() + 1 {
            return Err(ChainError::MalformedQuery);
        }
        let first = chains[0];
        for chain in &chains[1..] {
            if chain.size != first.size {
                return Err(ChainError::MismatchedChains);
            }
            let drift = chain
                .stationary
                .iter()
                .zip(&first.stationary)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if drift > 1e-12 {
                return Err(ChainError::MismatchedChains);
            }
        }
        for set in &sets {
            if let Some(&bad) = set.iter().find(|&&x| x >= first.size) {
                return Err(ChainError::BadState(bad));
            }
        }
        Ok(StayQuery { chains, sets })
    }

    /// Same chain and set at every step, `steps` steps.
    pub fn constant(
        chain: &'a ReversibleChain,
        set: &BTreeSet<usize>,
        steps: usize,
    ) -> Result<Self, ChainError> {
        Self::new(vec![chain; steps], vec![set.clone(); steps + 1])
    }

    pub fn steps(&self) -> usize {
        self.chains.len()
    }
}

/// `Pr[X_i in A_i for all i]` for the chain started from pi, by
/// alternating masking and transition steps.
pub fn stay_probability_exact(query: &StayQuery) -> f64 {
    let first = query.chains[0];
    let mut mu: Vec<f64> = first.stationary.to_vec();
    mask(&mut mu, &query.sets[0]);
    for (chain, set) in query.chains.iter().zip(&query.sets[1..]) {
        mu = chain.apply_measure(&mu);
        mask(&mut mu, set);
    }
    mu.iter().sum()
}

fn mask(mu: &mut [f64], set: &BTreeSet<usize>) {
    for (x, entry) in mu.iter_mut().enumerate() {
        if !set.contains(&x) {
            *entry = 0.0;
        }
    }
}

/// Product upper bound on the stay probability:
/// `sqrt(pi(A_0)) sqrt(pi(A_k)) prod_i [1 - delta_i (1 - sqrt(pi(A_{i-1}) pi(A_i)))]`.
pub fn aks_bound(query: &StayQuery) -> f64 {
    let first = query.chains[0];
    let measures: Vec<f64> = query.sets.iter().map(|s| first.pi_of(s)).collect();
    let k = query.steps();
    let mut bound = measures[0].sqrt() * measures[k].sqrt();
    for (i, chain) in query.chains.iter().enumerate() {
        let delta = chain.spectral_gap();
        bound *= 1.0 - delta * (1.0 - (measures[i] * measures[i + 1]).sqrt());
    }
    bound
}

/// Operator norm of `P_2 M P_1` on L^2(pi), computed as the largest
/// singular value of the symmetrized masked matrix (square root of the
/// top Gram eigenvalue).
pub fn projection_operator_norm(
    chain: &ReversibleChain,
    a1: &BTreeSet<usize>,
    a2: &BTreeSet<usize>,
) -> Result<f64, ChainError> {
    let size = chain.size;
    for set in [a1, a2] {
        if let Some(&bad) = set.iter().find(|&&x| x >= size) {
            return Err(ChainError::BadState(bad));
        }
    }
    if a1.is_empty() || a2.is_empty() {
        return Ok(0.0);
    }
    // B = P_2 S P_1 with S the pi-symmetrized transition matrix.
    let mut b = vec![0.0; size * size];
    for &x in a2 {
        for &y in a1 {
            b[x * size + y] =
                chain.transition[x * size + y] * (chain.stationary[x] / chain.stationary[y]).sqrt();
        }
    }
    let mut gram = vec![0.0; size * size];
    for i in 0..size {
        for j in i..size {
            let mut acc = 0.0;
            for &x in a2 {
                acc += b[x * size + i] * b[x * size + j];
            }
            gram[i * size + j] = acc;
            gram[j * size + i] = acc;
        }
    }
    let (values, _) = jacobi_eigen(gram, size)?;
    let top = values.into_iter().fold(0.0f64, f64::max);
    Ok(top.max(0.0).sqrt())
}

/// Diagnostics of the equality case of the stay-probability bound.
#[derive(Debug, Clone)]
pub struct EqualityDiagnostics {
    /// `I_A - pi(A) 1` is an eigenfunction at eigenvalue `1 - delta`.
    pub holds: bool,
    /// L^2(pi) norm of `M g - (1 - delta) g` with `g = I_A - pi(A) 1`.
    pub residual_norm: f64,
    pub spectral_gap: f64,
    /// When `holds`, the largest |exact - bound| over constant-set
    /// queries of length 1..=8; NaN otherwise.
    pub cross_check_error: f64,
}

/// Check whether the constant-set stay bound is tight for `A`:
/// requires `delta < 1` and `lambda_1 > -1 + delta`; true iff
/// `I_A - pi(A) 1` sits in the `1 - delta` eigenspace. When it does,
/// exact probability and bound are cross-verified for all query
/// lengths up to 8.
pub fn equality_case_check(
    chain: &ReversibleChain,
    set: &BTreeSet<usize>,
) -> Result<EqualityDiagnostics, ChainError> {
    if let Some(&bad) = set.iter().find(|&&x| x >= chain.size) {
        return Err(ChainError::BadState(bad));
    }
    let delta = chain.spectral_gap();
    if delta >= 1.0 {
        return Err(ChainError::InapplicableHypotheses(format!(
            "spectral gap {delta} >= 1"
        )));
    }
    if chain.eigenvalues[0] <= -1.0 + delta + 1e-15 {
        return Err(ChainError::InapplicableHypotheses(format!(
            "lambda_1 = {} not above -1 + delta",
            chain.eigenvalues[0]
        )));
    }
    let pi_a = chain.pi_of(set);
    let g: Vec<f64> = (0..chain.size)
        .map(|x| if set.contains(&x) { 1.0 - pi_a } else { -pi_a })
        .collect();
    let mg = chain.apply_function(&g);
    let residual: Vec<f64> = mg
        .iter()
        .zip(&g)
        .map(|(m, v)| m - (1.0 - delta) * v)
        .collect();
    let residual_norm = chain.norm(&residual);
    let holds = residual_norm <= 1e-9;

    let mut cross_check_error = f64::NAN;
    if holds {
        let mut worst = 0.0f64;
        for k in 1..=8 {
            let query = StayQuery::constant(chain, set, k)?;
            let exact = stay_probability_exact(&query);
            let bound = aks_bound(&query);
            worst = worst.max((exact - bound).abs());
        }
        debug_assert!(worst <= 1e-10, "equality case drifted: {worst}");
        cross_check_error = worst;
    }

    Ok(EqualityDiagnostics {
        holds,
        residual_norm,
        spectral_gap: delta,
        cross_check_error,
    })
}

/// On-disk chain description: `size`, row-major `rows`, optional `pi`.
#[derive(Debug, Clone, Deserialize)]
pub struct ChainFile {
    pub size: usize,
    pub rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub pi: Option<Vec<f64>>,
}

impl ChainFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let file: ChainFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if file.rows.len() != file.size {
            return Err(format!(
                "chain file declares size {} but has {} rows",
                file.size,
                file.rows.len()
            ));
        }
        Ok(file)
    }

    pub fn build(&self) -> Result<ReversibleChain, ChainError> {
        ReversibleChain::new(self.rows.clone(), self.pi.clone())
    }
}
