//! Real- and Boolean-valued functions on the discrete cube {-1,1}^n.
//!
//! A function is stored as its value table of length 2^n. The index
//! convention is fixed once and shared by the file formats and every
//! transform in the crate: coordinate `j` (1-based) of the point `x(i)`
//! is `+1` when bit `j-1` of `i` is 0, and `-1` when that bit is 1.
//!
//! On top of the table we provide the Walsh-Hadamard transform, the
//! noise operator `T_rho` (Fourier weight `rho^|U|` on the level-|U|
//! characters), p-norms for every real `p` including the geometric-mean
//! norm at `p = 0`, correlated-pair expectations, and the lazy random
//! walk kernel whose level-|U| eigenvalue is `1 - |U|/n`.

use thiserror::Error;

/// Hard cap on the number of coordinates; tables are dense.
pub const MAX_COORDS: usize = 24;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CubeError {
    #[error("value table has length {got}, expected 2^{n}")]
    BadLength { n: usize, got: usize },
    #[error("coordinate count {0} outside 1..={MAX_COORDS}")]
    BadCoordinateCount(usize),
    #[error("correlation {0} outside [0, 1]")]
    RhoOutOfRange(f64),
    #[error("p-norm with p = {p} needs a nonnegative function, entry {index} is {value}")]
    NegativeEntryForLowNorm { p: f64, index: usize, value: f64 },
    #[error("dimension mismatch: {0} vs {1} coordinates")]
    DimensionMismatch(usize, usize),
    #[error("walk start set is empty")]
    EmptyStartSet,
    #[error("expected a 0-1 indicator table")]
    NotAnIndicator,
    #[error("bad function encoding {encoding:?}: {reason}")]
    BadEncoding { encoding: String, reason: String },
}

/// Correlation parameter of a binary symmetric channel, `rho` in [0,1].
///
/// The endpoints are admitted with their limit semantics: `rho = 1` is a
/// noiseless channel and `rho = 0` an independent resample. The crossover
/// probability is `epsilon = 1/2 - rho/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationParam(f64);

impl CorrelationParam {
    pub fn new(rho: f64) -> Result<Self, CubeError> {
        if !(0.0..=1.0).contains(&rho) || rho.is_nan() {
            return Err(CubeError::RhoOutOfRange(rho));
        }
        Ok(CorrelationParam(rho))
    }

    pub fn rho(self) -> f64 {
        self.0
    }

    /// Per-bit flip probability of the channel.
    pub fn epsilon(self) -> f64 {
        0.5 - 0.5 * self.0
    }
}

/// Sign of coordinate `j` (1-based) at the point with index `index`.
#[inline]
pub fn coordinate_sign(index: usize, j: usize) -> f64 {
    debug_assert!(j >= 1);
    if index >> (j - 1) & 1 == 0 { 1.0 } else { -1.0 }
}

/// A real-valued function on {-1,1}^n as a dense table of 2^n values.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeFunction {
    n: usize,
    values: Vec<f64>,
}

impl CubeFunction {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, CubeError> {
        if n == 0 || n > MAX_COORDS {
            return Err(CubeError::BadCoordinateCount(n));
        }
        if values.len() != 1 << n {
            return Err(CubeError::BadLength {
                n,
                got: values.len(),
            });
        }
        Ok(CubeFunction { n, values })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self, CubeError> {
        Self::new(n, vec![c; 1usize << n])
    }

    /// 0-1 indicator of a set of point indices.
    pub fn indicator(
        n: usize,
        members: impl IntoIterator<Item = usize>,
    ) -> Result<Self, CubeError> {
        let mut f = Self::constant(n, 0.0)?;
        for i in members {
            f.values[i] = 1.0;
        }
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Table length, 2^n (never zero).
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// E[f] under the uniform measure.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn is_boolean(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0 || v == -1.0)
    }

    pub fn is_zero_one(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Walsh-Hadamard analysis: entry at mask `U` of the result equals
    /// `2^-n * sum_x f(x) prod_{j in U} x_j`. Applying
    /// [`inverse_walsh_hadamard`](Self::inverse_walsh_hadamard) recovers
    /// the function.
    pub fn walsh_hadamard(&self) -> CubeFunction {
        let mut out = self.values.clone();
        fwht_in_place(&mut out);
        let scale = 1.0 / self.len() as f64;
        for v in &mut out {
            *v *= scale;
        }
        CubeFunction {
            n: self.n,
            values: out,
        }
    }

    /// Walsh-Hadamard synthesis from a coefficient table.
    pub fn inverse_walsh_hadamard(&self) -> CubeFunction {
        let mut out = self.values.clone();
        fwht_in_place(&mut out);
        CubeFunction {
            n: self.n,
            values: out,
        }
    }

    /// Noise operator: `(T_rho f)(x) = E[f(y)]` over a rho-correlated
    /// copy `y` of `x`; multiplies the coefficient at mask `U` by
    /// `rho^|U|`.
    pub fn noise_operator(&self, rho: CorrelationParam) -> CubeFunction {
        let mut coeffs = self.walsh_hadamard();
        let pows = powers(rho.rho(), self.n);
        for (mask, c) in coeffs.values.iter_mut().enumerate() {
            *c *= pows[mask.count_ones() as usize];
        }
        coeffs.inverse_walsh_hadamard()
    }

    /// `(E |f|^p)^(1/p)` for general real `p`, with the limit
    /// conventions `p = 0 ->` geometric mean and `p < 0 -> 0` whenever
    /// the function has a zero entry. For `p < 1` the function must be
    /// nonnegative.
    pub fn p_norm(&self, p: f64) -> Result<f64, CubeError> {
        assert!(p.is_finite(), "p-norm exponent must be finite");
        if p < 1.0
            && let Some((index, &value)) = self.values.iter().enumerate().find(|&(_, &v)| v < 0.0)
        {
            return Err(CubeError::NegativeEntryForLowNorm { p, index, value });
        }
        let has_zero = self.values.contains(&0.0);
        if p == 0.0 {
            if has_zero {
                return Ok(0.0);
            }
            let mean_log = self.values.iter().map(|v| v.ln()).sum::<f64>() / self.len() as f64;
            return Ok(mean_log.exp());
        }
        if p < 0.0 && has_zero {
            return Ok(0.0);
        }
        let mean_pow = self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / self.len() as f64;
        Ok(mean_pow.powf(1.0 / p))
    }

    /// `E[f(x) g(y)]` for a uniform `x` and a rho-correlated copy `y`,
    /// evaluated in Parseval form as `sum_U fhat(U) ghat(U) rho^|U|`.
    pub fn correlated_expectation(
        &self,
        g: &CubeFunction,
        rho: CorrelationParam,
    ) -> Result<f64, CubeError> {
        if self.n != g.n {
            return Err(CubeError::DimensionMismatch(self.n, g.n));
        }
        let fhat = self.walsh_hadamard();
        let ghat = g.walsh_hadamard();
        let pows = powers(rho.rho(), self.n);
        let mut acc = 0.0;
        for mask in 0..self.len() {
            acc += fhat.values[mask] * ghat.values[mask] * pows[mask.count_ones() as usize];
        }
        Ok(acc)
    }

    /// Inner product `E[f g]` under the uniform measure.
    pub fn inner(&self, g: &CubeFunction) -> Result<f64, CubeError> {
        if self.n != g.n {
            return Err(CubeError::DimensionMismatch(self.n, g.n));
        }
        Ok(self
            .values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / self.len() as f64)
    }
}

/// Probability that the standard lazy walk (hold with probability 1/2,
/// otherwise move along a uniformly random edge) started at a uniform
/// point of `S` sits in `T` after `steps` steps:
/// `sigma^-1 sum_U Shat(U) That(U) (1 - |U|/n)^steps`.
pub fn lazy_walk_probability(
    s_ind: &CubeFunction,
    t_ind: &CubeFunction,
    steps: u32,
) -> Result<f64, CubeError> {
    if s_ind.n != t_ind.n {
        return Err(CubeError::DimensionMismatch(s_ind.n, t_ind.n));
    }
    if !s_ind.is_zero_one() || !t_ind.is_zero_one() {
        return Err(CubeError::NotAnIndicator);
    }
    let sigma = s_ind.mean();
    if sigma == 0.0 {
        return Err(CubeError::EmptyStartSet);
    }
    let n = s_ind.n as f64;
    let shat = s_ind.walsh_hadamard();
    let that = t_ind.walsh_hadamard();
    let mut acc = 0.0;
    for mask in 0..s_ind.len() {
        let eig = (1.0 - mask.count_ones() as f64 / n).powi(steps as i32);
        acc += shat.values[mask] * that.values[mask] * eig;
    }
    Ok(acc / sigma)
}

/// In-place noise operator on a raw value table of length 2^n; used by
/// the tree message-passing loops to avoid per-step allocations.
pub(crate) fn noise_in_place(values: &mut [f64], n: usize, rho: f64) {
    debug_assert_eq!(values.len(), 1 << n);
    fwht_in_place(values);
    let pows = powers(rho, n);
    let scale = 1.0 / values.len() as f64;
    for (mask, v) in values.iter_mut().enumerate() {
        *v *= pows[mask.count_ones() as usize] * scale;
    }
    fwht_in_place(values);
}

/// `rho^0 .. rho^n` with the convention `0^0 = 1`.
fn powers(rho: f64, n: usize) -> Vec<f64> {
    let mut pows = vec![1.0; n + 1];
    for level in 1..=n {
        pows[level] = pows[level - 1] * rho;
    }
    pows
}

/// In-place fast Walsh-Hadamard butterfly (unnormalized).
fn fwht_in_place(v: &mut [f64]) {
    let len = v.len();
    let mut h = 1;
    while h < len {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for i in 0..h {
                let (a, b) = (lo[i], hi[i]);
                lo[i] = a + b;
                hi[i] = a - b;
            }
        }
        h <<= 1;
    }
}

/// A {-1,+1}-valued function together with the textual encoding it was
/// built from. The accepted encodings are `dict:j`, `maj:r` (odd `r`),
/// `parity:j1,j2,...` and `tt:<bits>` where character `i` of the bit
/// string is `1` iff the value at index `i` is `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BooleanFunction {
    func: CubeFunction,
    encoding: String,
}

impl BooleanFunction {
    /// Dictator of coordinate `j` (1-based): `f(x) = x_j`.
    pub fn dictator(n: usize, j: usize) -> Result<Self, CubeError> {
        if j == 0 || j > n {
            return Err(CubeError::BadEncoding {
                encoding: format!("dict:{j}"),
                reason: format!("coordinate outside 1..={n}"),
            });
        }
        let values = (0..1usize << n).map(|i| coordinate_sign(i, j)).collect();
        Ok(BooleanFunction {
            func: CubeFunction::new(n, values)?,
            encoding: format!("dict:{j}"),
        })
    }

    /// Majority of the first `r` coordinates, `r` odd so ties are
    /// impossible.
    pub fn majority(n: usize, r: usize) -> Result<Self, CubeError> {
        if r == 0 || r > n || r.is_multiple_of(2) {
            return Err(CubeError::BadEncoding {
                encoding: format!("maj:{r}"),
                reason: format!("arity must be odd and in 1..={n}"),
            });
        }
        Self::majority_of(n, &(1..=r).collect::<Vec<_>>())
    }

    /// Majority over an explicit odd set of coordinates.
    pub fn majority_of(n: usize, coords: &[usize]) -> Result<Self, CubeError> {
        if coords.is_empty()
            || coords.len().is_multiple_of(2)
            || coords.iter().any(|&j| j == 0 || j > n)
        {
            return Err(CubeError::BadEncoding {
                encoding: format!("maj over {coords:?}"),
                reason: "need an odd number of valid coordinates".into(),
            });
        }
        let values = (0..1usize << n)
            .map(|i| {
                let sum: f64 = coords.iter().map(|&j| coordinate_sign(i, j)).sum();
                if sum > 0.0 { 1.0 } else { -1.0 }
            })
            .collect();
        let func = CubeFunction::new(n, values)?;
        let canonical: Vec<usize> = (1..=coords.len()).collect();
        let encoding = if coords == canonical.as_slice() {
            format!("maj:{}", coords.len())
        } else {
            truth_table_encoding(&func)
        };
        Ok(BooleanFunction { func, encoding })
    }

    /// Parity (product) of the listed coordinates.
    pub fn parity(n: usize, coords: &[usize]) -> Result<Self, CubeError> {
        if coords.is_empty() || coords.iter().any(|&j| j == 0 || j > n) {
            return Err(CubeError::BadEncoding {
                encoding: format!("parity over {coords:?}"),
                reason: format!("coordinates must be in 1..={n}"),
            });
        }
        let values = (0..1usize << n)
            .map(|i| coords.iter().map(|&j| coordinate_sign(i, j)).product())
            .collect();
        let list: Vec<String> = coords.iter().map(|j| j.to_string()).collect();
        Ok(BooleanFunction {
            func: CubeFunction::new(n, values)?,
            encoding: format!("parity:{}", list.join(",")),
        })
    }

    /// Build from a +-1 table.
    pub fn from_table(func: CubeFunction) -> Result<Self, CubeError> {
        if !func.is_boolean() {
            return Err(CubeError::NotAnIndicator);
        }
        Ok(BooleanFunction {
            encoding: truth_table_encoding(&func),
            func,
        })
    }

    /// Build from a truth-table bit mask: bit `i` set means value `+1`
    /// at index `i`.
    pub fn from_mask(n: usize, mask: u64) -> Result<Self, CubeError> {
        let values = (0..1usize << n)
            .map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        Self::from_table(CubeFunction::new(n, values)?)
    }

    /// Parse any of the accepted textual encodings.
    pub fn parse(n: usize, encoding: &str) -> Result<Self, CubeError> {
        let bad = |reason: &str| CubeError::BadEncoding {
            encoding: encoding.to_string(),
            reason: reason.to_string(),
        };
        let (kind, arg) = encoding.split_once(':').ok_or_else(|| bad("missing ':'"))?;
        match kind {
            "dict" => {
                let j: usize = arg
                    .parse()
                    .map_err(|_| bad("coordinate must be an integer"))?;
                Self::dictator(n, j)
            }
            "maj" => {
                let r: usize = arg.parse().map_err(|_| bad("arity must be an integer"))?;
                Self::majority(n, r)
            }
            "parity" => {
                let coords = arg
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad("coordinates must be integers"))?;
                Self::parity(n, &coords)
            }
            "tt" => {
                if arg.len() != 1usize << n {
                    return Err(bad(&format!("truth table must have 2^{n} characters")));
                }
                let values = arg
                    .chars()
                    .map(|c| match c {
                        '1' => Ok(1.0),
                        '0' => Ok(-1.0),
                        _ => Err(bad("truth table characters must be 0 or 1")),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Self::from_table(CubeFunction::new(n, values)?)
            }
            _ => Err(bad("unknown encoding kind")),
        }
    }

    pub fn n(&self) -> usize {
        self.func.n
    }

    pub fn as_cube(&self) -> &CubeFunction {
        &self.func
    }

    pub fn value(&self, index: usize) -> f64 {
        self.func.values[index]
    }

    /// Canonical textual encoding; named constructors keep their name,
    /// everything else is a `tt:` literal.
    pub fn encoding(&self) -> &str {
        &self.encoding
    }

    /// The `tt:` literal, regardless of how the function was built.
    pub fn truth_table(&self) -> String {
        truth_table_encoding(&self.func)
    }

    /// 0-1 indicator of `{x : f(x) = b}` for `b` in {-1, +1}.
    pub fn level_set_indicator(&self, b: f64) -> CubeFunction {
        let values = self
            .func
            .values
            .iter()
            .map(|&v| if v == b { 1.0 } else { 0.0 })
            .collect();
        CubeFunction {
            n: self.func.n,
            values,
        }
    }

    pub fn negated(&self) -> BooleanFunction {
        let values = self.func.values.iter().map(|v| -v).collect();
        let func = CubeFunction {
            n: self.func.n,
            values,
        };
        BooleanFunction {
            encoding: truth_table_encoding(&func),
            func,
        }
    }

    /// Exactly half the entries are +1.
    pub fn is_balanced(&self) -> bool {
        let plus = self.func.values.iter().filter(|&&v| v == 1.0).count();
        2 * plus == self.func.len()
    }

    /// `f(-x) = -f(x)` for every point.
    pub fn is_antisymmetric(&self) -> bool {
        let full = self.func.len() - 1;
        self.func
            .values
            .iter()
            .enumerate()
            .all(|(i, &v)| v == -self.func.values[full ^ i])
    }

    /// `x <= y` coordinatewise implies `f(x) <= f(y)`. With the index
    /// convention, raising a coordinate clears its bit, so it suffices
    /// to compare every index against its one-bit-cleared neighbours.
    pub fn is_monotone(&self) -> bool {
        for i in 0..self.func.len() {
            for j in 0..self.func.n {
                if i >> j & 1 == 1 && self.func.values[i] > self.func.values[i ^ (1 << j)] {
                    return false;
                }
            }
        }
        true
    }
}

fn truth_table_encoding(func: &CubeFunction) -> String {
    let mut s = String::with_capacity(func.len() + 3);
    s.push_str("tt:");
    for &v in &func.values {
        s.push(if v == 1.0 { '1' } else { '0' });
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corr(rho: f64) -> CorrelationParam {
        CorrelationParam::new(rho).unwrap()
    }

    /// Direct 2^n-term transform used as the independent oracle.
    fn wht_oracle(f: &CubeFunction) -> Vec<f64> {
        let len = f.len();
        (0..len)
            .map(|mask| {
                (0..len)
                    .map(|i| {
                        let sign = if (i & mask).count_ones() % 2 == 0 {
                            1.0
                        } else {
                            -1.0
                        };
                        f.value(i) * sign
                    })
                    .sum::<f64>()
                    / len as f64
            })
            .collect()
    }

    /// Direct convolution oracle for the noise operator: condition on x
    /// and average f over the channel output.
    fn noise_oracle(f: &CubeFunction, rho: f64) -> Vec<f64> {
        let n = f.n();
        let eps = 0.5 - 0.5 * rho;
        (0..f.len())
            .map(|x| {
                (0..f.len())
                    .map(|y| {
                        let flips = (x ^ y).count_ones() as i32;
                        f.value(y) * eps.powi(flips) * (1.0 - eps).powi(n as i32 - flips)
                    })
                    .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn wht_constant_function() {
        let f = CubeFunction::constant(2, 1.0).unwrap();
        let coeffs = f.walsh_hadamard();
        assert_eq!(coeffs.value(0), 1.0);
        for mask in 1..4 {
            assert_eq!(coeffs.value(mask), 0.0, "mask {mask}");
        }
    }

    #[test]
    fn wht_dictator_is_single_character() {
        let f = BooleanFunction::dictator(2, 1).unwrap();
        let coeffs = f.as_cube().walsh_hadamard();
        for mask in 0..4 {
            let expect = if mask == 0b01 { 1.0 } else { 0.0 };
            assert_eq!(coeffs.value(mask), expect, "mask {mask}");
        }
    }

    #[test]
    fn wht_majority_matches_direct_summation() {
        let f = BooleanFunction::majority(3, 3).unwrap();
        let coeffs = f.as_cube().walsh_hadamard();
        let oracle = wht_oracle(f.as_cube());
        for mask in 0..8 {
            assert!(
                (coeffs.value(mask) - oracle[mask]).abs() < 1e-15,
                "mask {mask}: fwht {} vs oracle {}",
                coeffs.value(mask),
                oracle[mask]
            );
        }
        // The three singleton coefficients agree; direct summation gives 1/2.
        for j in 0..3 {
            assert!((coeffs.value(1 << j) - 0.5).abs() < 1e-15);
        }
        assert!((coeffs.value(0b111) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn wht_round_trip_is_identity() {
        let mut rng = crate::rng::Rng::new(11);
        let f = CubeFunction::new(6, (0..64).map(|_| rng.normal()).collect()).unwrap();
        let back = f.walsh_hadamard().inverse_walsh_hadamard();
        for i in 0..64 {
            assert!((back.value(i) - f.value(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_operator_fixes_constants() {
        let f = CubeFunction::constant(3, 2.5).unwrap();
        for rho in [0.0, 0.3, 1.0] {
            let g = f.noise_operator(corr(rho));
            for i in 0..8 {
                assert!((g.value(i) - 2.5).abs() < 1e-12, "rho {rho}");
            }
        }
    }

    #[test]
    fn noise_operator_one_coordinate_dictator() {
        // f = 1/2 + x/2 as a 0-1 table: index 0 is x = +1.
        let f = CubeFunction::new(1, vec![1.0, 0.0]).unwrap();
        let g = f.noise_operator(corr(0.5));
        assert!((g.value(0) - 0.75).abs() < 1e-15);
        assert!((g.value(1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn noise_operator_semigroup() {
        let mut rng = crate::rng::Rng::new(5);
        let f = CubeFunction::new(6, (0..64).map(|_| rng.normal()).collect()).unwrap();
        let ab = f.noise_operator(corr(0.5)).noise_operator(corr(0.6));
        let direct = f.noise_operator(corr(0.3));
        for i in 0..64 {
            assert!(
                (ab.value(i) - direct.value(i)).abs() < 1e-12,
                "index {i}: {} vs {}",
                ab.value(i),
                direct.value(i)
            );
        }
    }

    #[test]
    fn noise_operator_matches_direct_convolution() {
        let mut rng = crate::rng::Rng::new(17);
        for n in [1usize, 4, 8] {
            let f =
                CubeFunction::new(n, (0..1 << n).map(|_| rng.range(-2.0, 2.0)).collect()).unwrap();
            for rho in [0.0, 0.35, 0.9, 1.0] {
                let fast = f.noise_operator(corr(rho));
                let oracle = noise_oracle(&f, rho);
                for i in 0..f.len() {
                    assert!(
                        (fast.value(i) - oracle[i]).abs() < 1e-12,
                        "n {n} rho {rho} index {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn p_norm_constants_for_every_exponent() {
        let f = CubeFunction::constant(3, 2.0).unwrap();
        for p in [-2.0, 0.0, 0.5, 1.0, 3.0] {
            let norm = f.p_norm(p).unwrap();
            assert!((norm - 2.0).abs() < 1e-14, "p {p}: {norm}");
        }
    }

    #[test]
    fn p_norm_geometric_mean() {
        let f = CubeFunction::new(1, vec![1.0, 3.0]).unwrap();
        let norm = f.p_norm(0.0).unwrap();
        assert!((norm - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn p_norm_indicator_matches_exponential_form() {
        // |S| = exp(-s^2/2) 2^n gives ||1_S||_p = exp(-s^2/2p).
        let n = 6;
        let size = 13usize; // sigma = 13/64
        let f = CubeFunction::indicator(n, 0..size).unwrap();
        let sigma = size as f64 / 64.0;
        let s2 = -2.0 * sigma.ln();
        for p in [0.25, 0.5, 1.0, 2.0] {
            let norm = f.p_norm(p).unwrap();
            let expect = (-s2 / (2.0 * p)).exp();
            assert!((norm - expect).abs() < 1e-14, "p {p}: {norm} vs {expect}");
        }
    }

    #[test]
    fn p_norm_zero_entry_conventions() {
        let f = CubeFunction::new(1, vec![0.0, 2.0]).unwrap();
        assert_eq!(f.p_norm(0.0).unwrap(), 0.0);
        assert_eq!(f.p_norm(-1.5).unwrap(), 0.0);
        assert!(f.p_norm(0.5).unwrap() > 0.0);
    }

    #[test]
    fn p_norm_rejects_negative_entries_below_one() {
        let f = CubeFunction::new(1, vec![1.0, -1.0]).unwrap();
        match f.p_norm(0.5) {
            Err(CubeError::NegativeEntryForLowNorm { index: 1, .. }) => {}
            other => panic!("expected NegativeEntryForLowNorm, got {other:?}"),
        }
        assert!(f.p_norm(2.0).is_ok());
    }

    #[test]
    fn correlated_expectation_examples() {
        let one = CubeFunction::constant(3, 1.0).unwrap();
        for rho in [0.0, 0.4, 1.0] {
            let e = one.correlated_expectation(&one, corr(rho)).unwrap();
            assert!((e - 1.0).abs() < 1e-14);
        }
        let d = BooleanFunction::dictator(3, 1).unwrap();
        let e = d
            .as_cube()
            .correlated_expectation(d.as_cube(), corr(0.4))
            .unwrap();
        assert!((e - 0.4).abs() < 1e-14);
    }

    #[test]
    fn correlated_expectation_half_cube_against_double_sum() {
        // Double sum over all (x, y) pairs with the channel weights.
        let n = 4;
        let d = BooleanFunction::dictator(n, 1).unwrap();
        let f = d.level_set_indicator(1.0);
        let rho = 0.4;
        let eps: f64 = 0.5 - 0.5 * rho;
        let mut oracle = 0.0;
        for x in 0..1usize << n {
            for y in 0..1usize << n {
                let flips = (x ^ y).count_ones() as i32;
                oracle +=
                    f.value(x) * f.value(y) * eps.powi(flips) * (1.0 - eps).powi(n as i32 - flips);
            }
        }
        oracle /= (1usize << n) as f64;
        assert!((oracle - 0.35).abs() < 1e-12, "oracle {oracle}");
        let fast = f.correlated_expectation(&f, corr(rho)).unwrap();
        assert!((fast - oracle).abs() < 1e-12);
    }

    #[test]
    fn correlated_expectation_equals_inner_with_noise() {
        let mut rng = crate::rng::Rng::new(23);
        let n = 5;
        let f = CubeFunction::new(n, (0..32).map(|_| rng.normal()).collect()).unwrap();
        let g = CubeFunction::new(n, (0..32).map(|_| rng.normal()).collect()).unwrap();
        for rho in [0.0, 0.25, 0.8] {
            let parseval = f.correlated_expectation(&g, corr(rho)).unwrap();
            let direct = f.inner(&g.noise_operator(corr(rho))).unwrap();
            assert!((parseval - direct).abs() < 1e-12, "rho {rho}");
        }
    }

    #[test]
    fn lazy_walk_full_cube_stays_put() {
        let full = CubeFunction::constant(4, 1.0).unwrap();
        for steps in [0, 1, 7] {
            let p = lazy_walk_probability(&full, &full, steps).unwrap();
            assert!((p - 1.0).abs() < 1e-14, "steps {steps}");
        }
    }

    #[test]
    fn lazy_walk_zero_steps_is_membership() {
        let d = BooleanFunction::dictator(3, 2).unwrap();
        let s = d.level_set_indicator(1.0);
        let p = lazy_walk_probability(&s, &s, 0).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lazy_walk_half_cube_matches_matrix_power() {
        // Direct matrix powering of the lazy-walk kernel.
        let n = 4usize;
        let len = 1usize << n;
        let d = BooleanFunction::dictator(n, 1).unwrap();
        let s = d.level_set_indicator(1.0);
        let steps = 4u32;

        let mut kernel = vec![vec![0.0; len]; len];
        for x in 0..len {
            kernel[x][x] = 0.5;
            for j in 0..n {
                kernel[x][x ^ (1 << j)] = 0.5 / n as f64;
            }
        }
        // Row vector: uniform on S, then `steps` kernel applications.
        let sigma: f64 = s.values().iter().sum();
        let mut mu: Vec<f64> = s.values().iter().map(|&v| v / sigma).collect();
        for _ in 0..steps {
            let mut next = vec![0.0; len];
            for x in 0..len {
                if mu[x] != 0.0 {
                    for (y, k) in kernel[x].iter().enumerate() {
                        next[y] += mu[x] * k;
                    }
                }
            }
            mu = next;
        }
        let oracle: f64 = mu.iter().zip(s.values()).map(|(m, ind)| m * ind).sum();

        let fast = lazy_walk_probability(&s, &s, steps).unwrap();
        assert!((fast - 0.658203125).abs() < 1e-12, "fast {fast}");
        assert!((fast - oracle).abs() < 1e-10, "fast {fast} oracle {oracle}");
    }

    #[test]
    fn lazy_walk_random_sets_match_matrix_power() {
        let mut rng = crate::rng::Rng::new(61);
        for n in [3usize, 6, 8] {
            let len = 1usize << n;
            let s_members: Vec<usize> = (0..len).filter(|_| rng.coin()).collect();
            let t_members: Vec<usize> = (0..len).filter(|_| rng.coin()).collect();
            if s_members.is_empty() {
                continue;
            }
            let s = CubeFunction::indicator(n, s_members.iter().copied()).unwrap();
            let t = CubeFunction::indicator(n, t_members.iter().copied()).unwrap();
            let steps = (n as u32) / 2 + 1;

            let sigma: f64 = s.values().iter().sum();
            let mut mu: Vec<f64> = s.values().iter().map(|&v| v / sigma).collect();
            for _ in 0..steps {
                let mut next = vec![0.0; len];
                for (x, &m) in mu.iter().enumerate() {
                    if m != 0.0 {
                        next[x] += 0.5 * m;
                        for j in 0..n {
                            next[x ^ (1 << j)] += 0.5 * m / n as f64;
                        }
                    }
                }
                mu = next;
            }
            let oracle: f64 = mu.iter().zip(t.values()).map(|(m, ind)| m * ind).sum();
            let fast = lazy_walk_probability(&s, &t, steps).unwrap();
            assert!(
                (fast - oracle).abs() < 1e-10,
                "n {n}: fast {fast} vs matrix power {oracle}"
            );
        }
    }

    #[test]
    fn lazy_walk_empty_start_set_is_an_error() {
        let empty = CubeFunction::constant(3, 0.0).unwrap();
        let full = CubeFunction::constant(3, 1.0).unwrap();
        assert_eq!(
            lazy_walk_probability(&empty, &full, 2),
            Err(CubeError::EmptyStartSet)
        );
    }

    #[test]
    fn boolean_predicates() {
        let d = BooleanFunction::dictator(3, 1).unwrap();
        assert!(d.is_balanced() && d.is_antisymmetric() && d.is_monotone());
        let maj = BooleanFunction::majority(3, 3).unwrap();
        assert!(maj.is_balanced() && maj.is_antisymmetric() && maj.is_monotone());
        let par = BooleanFunction::parity(3, &[1, 2]).unwrap();
        assert!(par.is_balanced());
        assert!(!par.is_antisymmetric());
        assert!(!par.is_monotone());
        let anti = d.negated();
        assert!(anti.is_balanced() && anti.is_antisymmetric() && !anti.is_monotone());
    }

    #[test]
    fn encodings_round_trip() {
        for enc in ["dict:2", "maj:3", "parity:1,3", "tt:10010110"] {
            let f = BooleanFunction::parse(3, enc).unwrap();
            let again = BooleanFunction::parse(3, f.encoding()).unwrap();
            assert_eq!(f.as_cube(), again.as_cube(), "{enc}");
        }
        assert!(BooleanFunction::parse(3, "maj:2").is_err());
        assert!(BooleanFunction::parse(3, "tt:101").is_err());
        assert!(BooleanFunction::parse(3, "nope:1").is_err());
    }

    #[test]
    fn rho_endpoints_and_validation() {
        assert!(CorrelationParam::new(0.0).is_ok());
        assert!(CorrelationParam::new(1.0).is_ok());
        assert!(CorrelationParam::new(-0.1).is_err());
        assert!(CorrelationParam::new(1.1).is_err());
        assert!((CorrelationParam::new(0.4).unwrap().epsilon() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn t_one_is_identity_and_t_zero_is_mean() {
        let mut rng = crate::rng::Rng::new(9);
        let f = CubeFunction::new(5, (0..32).map(|_| rng.normal()).collect()).unwrap();
        let id = f.noise_operator(corr(1.0));
        let avg = f.noise_operator(corr(0.0));
        let mean = f.mean();
        for i in 0..32 {
            assert!((id.value(i) - f.value(i)).abs() < 1e-12);
            assert!((avg.value(i) - mean).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn parseval_identity(values in proptest::collection::vec(-10.0f64..10.0, 16)) {
            let f = CubeFunction::new(4, values).unwrap();
            let coeffs = f.walsh_hadamard();
            let energy: f64 = coeffs.values().iter().map(|c| c * c).sum();
            let mean_sq = f.inner(&f).unwrap();
            prop_assert!((energy - mean_sq).abs() < 1e-12);
        }

        #[test]
        fn noise_preserves_positivity(
            values in proptest::collection::vec(0.0f64..5.0, 16),
            rho in 0.0f64..1.0,
        ) {
            let f = CubeFunction::new(4, values).unwrap();
            let g = f.noise_operator(CorrelationParam::new(rho).unwrap());
            for i in 0..16 {
                prop_assert!(g.value(i) >= -1e-12, "entry {} = {}", i, g.value(i));
            }
        }

        #[test]
        fn norms_monotone_in_p(
            values in proptest::collection::vec(0.01f64..5.0, 8),
            p in -3.0f64..1.0,
            step in 0.1f64..3.0,
        ) {
            let f = CubeFunction::new(3, values).unwrap();
            let lo = f.p_norm(p).unwrap();
            let hi = f.p_norm(p + step).unwrap();
            prop_assert!(lo <= hi * (1.0 + 1e-12), "p {} lo {} hi {}", p, lo, hi);
        }

        #[test]
        fn correlated_expectation_is_symmetric(
            a in proptest::collection::vec(-3.0f64..3.0, 8),
            b in proptest::collection::vec(-3.0f64..3.0, 8),
            rho in 0.0f64..1.0,
        ) {
            let f = CubeFunction::new(3, a).unwrap();
            let g = CubeFunction::new(3, b).unwrap();
            let rho = CorrelationParam::new(rho).unwrap();
            let fg = f.correlated_expectation(&g, rho).unwrap();
            let gf = g.correlated_expectation(&f, rho).unwrap();
            prop_assert!((fg - gf).abs() < 1e-12);
        }
    }
}
