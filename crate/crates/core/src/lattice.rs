//! Construction-A lattice codes built from systematic convolutional codes
//! over `Z_Q`, with hypercubic shaping.
//!
//! Coordinates are kept in trellis order: step `t` of a rate `1/n` code owns
//! coordinates `n t .. n t + n`, the first of which is the systematic
//! symbol. In that order the lattice generator is lower triangular with a
//! unit diagonal on information coordinates and `Q` everywhere else, so
//! `det G = Q^(m - k)`.
//!
//! A codeword is the integer point `x = G u` with every coordinate in
//! `[0, Q)`; the channel sees the centred, energy-normalized amplitudes
//! produced by [`map_to_amplitudes`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathkit::RMat;

pub fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= q {
        if q.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// Systematic, zero-terminated convolutional code of rate `1/n` over `Z_Q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvCode {
    q: u32,
    parity_taps: Vec<Vec<u32>>,
}

impl ConvCode {
    /// `parity_taps[p][d]` multiplies the input delayed by `d` in parity
    /// stream `p + 1`. All tap sets must have the same length `memory + 1`.
    pub fn new(q: u32, parity_taps: Vec<Vec<u32>>) -> Result<Self> {
        if !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        let len = parity_taps.first().map_or(0, Vec::len);
        if len == 0 || parity_taps.iter().any(|t| t.len() != len) {
            return Err(Error::InvalidCode("tap sets must be nonempty and of equal length".into()));
        }
        let parity_taps = parity_taps
            .into_iter()
            .map(|t| t.into_iter().map(|c| c % q).collect())
            .collect();
        Ok(ConvCode { q, parity_taps })
    }

    /// Rate-1/2, memory-2 code with parity taps `(1, 2, 1)`.
    pub fn rate_half(q: u32) -> Result<Self> {
        ConvCode::new(q, vec![vec![1, 2, 1]])
    }

    /// Rate-1/4, memory-2 code with parity taps `(1,2,1), (1,1,2), (2,1,1)`.
    pub fn rate_quarter(q: u32) -> Result<Self> {
        ConvCode::new(q, vec![vec![1, 2, 1], vec![1, 1, 2], vec![2, 1, 1]])
    }

    /// Memory-2 code of rate `1/streams` with taps chosen, for the alphabets
    /// used by the protocols, to maximize the smallest norm of short error
    /// events of the lattice. Other alphabets get the default taps.
    pub fn tuned(q: u32, streams: usize) -> Result<Self> {
        let taps: Vec<Vec<u32>> = match (streams, q) {
            (2, 5) => vec![vec![2, 4, 2]],
            (2, 17) => vec![vec![13, 6, 4]],
            (2, 67) => vec![vec![12, 25, 20]],
            (2, _) => return ConvCode::rate_half(q),
            (4, 5) => vec![vec![2, 1, 4], vec![1, 4, 2], vec![3, 2, 2]],
            (4, 17) => vec![vec![9, 11, 12], vec![13, 2, 4], vec![2, 1, 10]],
            (4, _) => return ConvCode::rate_quarter(q),
            _ => return Err(Error::InvalidCode(format!("no rate-1/{streams} code"))),
        };
        ConvCode::new(q, taps)
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn memory(&self) -> usize {
        self.parity_taps[0].len() - 1
    }

    /// Number of output streams `n` (systematic stream included).
    pub fn streams(&self) -> usize {
        self.parity_taps.len() + 1
    }

    pub fn parity_taps(&self) -> &[Vec<u32>] {
        &self.parity_taps
    }

    /// Number of information symbols carried by a terminated codeword of
    /// `m` coordinates.
    pub fn info_len(&self, m: usize) -> Result<usize> {
        let n = self.streams();
        if m == 0 || !m.is_multiple_of(n) || m / n <= self.memory() {
            return Err(Error::InvalidCode(format!(
                "length {m} does not fit a rate-1/{n} code with memory {}",
                self.memory()
            )));
        }
        Ok(m / n - self.memory())
    }

    /// Encodes `info` followed by `memory` zero tail symbols. Output is in
    /// trellis order.
    pub fn encode(&self, info: &[u32]) -> Vec<u32> {
        let n = self.streams();
        let nu = self.memory();
        let steps = info.len() + nu;
        let input = |t: isize| -> u64 {
            if t < 0 || t as usize >= info.len() {
                0
            } else {
                (info[t as usize] % self.q) as u64
            }
        };
        let mut out = Vec::with_capacity(n * steps);
        for t in 0..steps {
            out.push(input(t as isize) as u32);
            for taps in &self.parity_taps {
                let acc: u64 = taps
                    .iter()
                    .enumerate()
                    .map(|(d, &c)| c as u64 * input(t as isize - d as isize))
                    .sum();
                out.push((acc % self.q as u64) as u32);
            }
        }
        out
    }
}

/// Lattice code `{G u + eta}` with hypercubic shaping `G u in [0, Q)^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeCode {
    m: usize,
    generator: Vec<i64>,
    translate: Vec<f64>,
    q: u32,
    info_positions: Vec<usize>,
}

impl LatticeCode {
    /// Uncoded `Q`-ary alphabet on `m` coordinates (`G = I`). `Q` need not be
    /// prime here; `Q = 2, 4, 8` give 4-, 16- and 64-QAM per coordinate pair.
    pub fn uncoded(m: usize, q: u32) -> Self {
        let mut generator = vec![0; m * m];
        for i in 0..m {
            generator[i * m + i] = 1;
        }
        LatticeCode {
            m,
            generator,
            translate: vec![0.0; m],
            q,
            info_positions: (0..m).collect(),
        }
    }

    /// Construction-A lattice of the terminated code `cc` with `m`
    /// coordinates.
    pub fn construction_a(cc: &ConvCode, m: usize) -> Result<Self> {
        let q = cc.q();
        if !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        let info_len = cc.info_len(m)?;
        let n = cc.streams();
        let mut generator = vec![0i64; m * m];
        let mut info_positions = Vec::with_capacity(info_len);
        for col in 0..m {
            let step = col / n;
            if col % n == 0 && step < info_len {
                info_positions.push(col);
                for d in 0..=cc.memory() {
                    let t = step + d;
                    if t * n >= m {
                        break;
                    }
                    if d == 0 {
                        generator[(t * n) * m + col] = 1;
                    }
                    for (p, taps) in cc.parity_taps().iter().enumerate() {
                        generator[(t * n + p + 1) * m + col] = taps[d] as i64;
                    }
                }
            } else {
                generator[col * m + col] = q as i64;
            }
        }
        Ok(LatticeCode {
            m,
            generator,
            translate: vec![0.0; m],
            q,
            info_positions,
        })
    }

    pub fn with_translate(mut self, translate: Vec<f64>) -> Result<Self> {
        if translate.len() != self.m {
            return Err(Error::DimensionMismatch("translate length".into()));
        }
        self.translate = translate;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn translate(&self) -> &[f64] {
        &self.translate
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    pub fn info_len(&self) -> usize {
        self.info_positions.len()
    }

    pub fn generator(&self, i: usize, j: usize) -> i64 {
        self.generator[i * self.m + j]
    }

    pub fn generator_matrix(&self) -> RMat {
        RMat::from_fn(self.m, self.m, |i, j| self.generator(i, j) as f64)
    }

    /// `|det G|`, as a float (the generator is triangular).
    pub fn determinant(&self) -> f64 {
        (0..self.m).map(|i| self.generator(i, i) as f64).product::<f64>().abs()
    }

    pub fn codebook_size(&self) -> u128 {
        (self.q as u128).saturating_pow(self.info_len() as u32)
    }

    /// Integer lattice point `G u`.
    pub fn lattice_point(&self, u: &[i64]) -> Vec<i64> {
        (0..self.m)
            .map(|i| {
                self.generator[i * self.m..(i + 1) * self.m]
                    .iter()
                    .zip(u)
                    .map(|(g, x)| g * x)
                    .sum()
            })
            .collect()
    }

    pub fn in_shaping_region(&self, u: &[i64]) -> bool {
        u.len() == self.m
            && self
                .lattice_point(u)
                .iter()
                .all(|&x| x >= 0 && x < self.q as i64)
    }

    /// `x = G u + eta` for `u` in the information set.
    pub fn encode(&self, u: &[i64]) -> Result<Vec<f64>> {
        if u.len() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coordinates, got {}",
                self.m,
                u.len()
            )));
        }
        if !self.in_shaping_region(u) {
            return Err(Error::OutOfShapingRegion);
        }
        Ok(self
            .lattice_point(u)
            .iter()
            .zip(&self.translate)
            .map(|(&x, e)| x as f64 + e)
            .collect())
    }

    /// Solves `G u = x` by forward substitution. Fails when `x` is not a
    /// lattice point.
    pub fn u_from_point(&self, x: &[i64]) -> Result<Vec<i64>> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch("point length".into()));
        }
        let mut u = vec![0i64; self.m];
        for i in 0..self.m {
            let row = &self.generator[i * self.m..(i + 1) * self.m];
            let acc: i64 = (0..i).map(|j| row[j] * u[j]).sum();
            let d = row[i];
            let rem = x[i] - acc;
            if d == 0 || rem % d != 0 {
                return Err(Error::InvalidCode(format!("point is not in the lattice at coordinate {i}")));
            }
            u[i] = rem / d;
        }
        Ok(u)
    }

    /// Integer vector `u` of the codeword carrying `info`.
    pub fn encode_info(&self, info: &[u32]) -> Result<Vec<i64>> {
        if info.len() != self.info_len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} information symbols, got {}",
                self.info_len(),
                info.len()
            )));
        }
        if info.iter().any(|&s| s >= self.q) {
            return Err(Error::OutOfShapingRegion);
        }
        let q = self.q as i64;
        let mut x = vec![0i64; self.m];
        for (&col, &s) in self.info_positions.iter().zip(info) {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += self.generator(i, col) * s as i64;
            }
        }
        for xi in x.iter_mut() {
            *xi = xi.rem_euclid(q);
        }
        self.u_from_point(&x)
    }

    /// Information symbols of an in-region `u`; `None` when `u` is outside
    /// the shaping region.
    pub fn info_of(&self, u: &[i64]) -> Option<Vec<u32>> {
        if !self.in_shaping_region(u) {
            return None;
        }
        let x = self.lattice_point(u);
        Some(self.info_positions.iter().map(|&p| x[p] as u32).collect())
    }

    /// Per-coordinate integer intervals containing every in-region `u`.
    pub fn coordinate_bounds(&self) -> Vec<(i64, i64)> {
        let qm1 = self.q as i64 - 1;
        let is_info: Vec<bool> = {
            let mut v = vec![false; self.m];
            for &p in &self.info_positions {
                v[p] = true;
            }
            v
        };
        (0..self.m)
            .map(|i| {
                if is_info[i] {
                    return (0, qm1);
                }
                let (mut lo, mut hi) = (0i64, 0i64);
                for j in 0..i {
                    let g = self.generator(i, j);
                    if g == 0 {
                        continue;
                    }
                    let (a, b) = if is_info[j] {
                        (0, g * qm1)
                    } else {
                        (0, 0)
                    };
                    lo += a.min(b);
                    hi += a.max(b);
                }
                let d = self.generator(i, i);
                ((-hi).div_euclid(d) + i64::from((-hi).rem_euclid(d) != 0), (qm1 - lo).div_euclid(d))
            })
            .collect()
    }

    /// Sub-code on the coordinates `coords` (sorted). Every column outside
    /// `coords` must vanish on the selected rows.
    pub fn restrict(&self, coords: &[usize]) -> Result<LatticeCode> {
        let mut keep = vec![false; self.m];
        for &c in coords {
            if c >= self.m {
                return Err(Error::DimensionMismatch("coordinate out of range".into()));
            }
            keep[c] = true;
        }
        for &r in coords {
            for j in 0..self.m {
                if !keep[j] && self.generator(r, j) != 0 {
                    return Err(Error::InvalidCode(format!(
                        "coordinate {r} depends on dropped coordinate {j}"
                    )));
                }
            }
        }
        let k = coords.len();
        let mut generator = vec![0; k * k];
        for (a, &r) in coords.iter().enumerate() {
            for (b, &c) in coords.iter().enumerate() {
                generator[a * k + b] = self.generator(r, c);
            }
        }
        let info_positions = self
            .info_positions
            .iter()
            .filter_map(|p| coords.iter().position(|c| c == p))
            .collect::<Vec<_>>();
        if info_positions.len() != self.info_positions.len() {
            return Err(Error::InvalidCode("restriction drops information coordinates".into()));
        }
        Ok(LatticeCode {
            m: k,
            generator,
            translate: coords.iter().map(|&c| self.translate[c]).collect(),
            q: self.q,
            info_positions,
        })
    }

    /// Every codeword as `(u, G u + eta)`, in lexicographic order of the
    /// information symbols.
    pub fn enumerate_codebook(&self, max_size: u128) -> Result<Vec<(Vec<i64>, Vec<f64>)>> {
        let size = self.codebook_size();
        if size > max_size || size == u128::MAX {
            return Err(Error::CodebookTooLarge { size, limit: max_size });
        }
        let k = self.info_len();
        let mut info = vec![0u32; k];
        let mut out = Vec::with_capacity(size as usize);
        loop {
            let u = self.encode_info(&info)?;
            let x = self.encode(&u)?;
            out.push((u, x));
            let mut i = k;
            loop {
                if i == 0 {
                    return Ok(out);
                }
                i -= 1;
                info[i] += 1;
                if info[i] < self.q {
                    break;
                }
                info[i] = 0;
            }
        }
    }
}

/// `kappa_Q`, the scale giving unit average energy to the centred alphabet.
pub fn amplitude_scale(q: u32) -> f64 {
    let q = q as f64;
    (12.0 / (q * q - 1.0)).sqrt()
}

/// Centre `(Q - 1) / 2` of the alphabet `{0, .., Q-1}`.
pub fn alphabet_center(q: u32) -> f64 {
    (q as f64 - 1.0) / 2.0
}

/// Maps `Z_Q` symbols to the centred real amplitudes
/// `(s - (Q-1)/2) kappa_Q`, which have unit average energy.
pub fn map_to_amplitudes<I>(symbols: I, q: u32) -> Vec<f64>
where
    I: IntoIterator,
    I::Item: Into<i64>,
{
    let k = amplitude_scale(q);
    let c = alphabet_center(q);
    symbols
        .into_iter()
        .map(|s| (s.into() as f64 - c) * k)
        .collect()
}

/// Pairs real amplitudes into complex channel symbols of unit average
/// energy: `(a_{2i} + i a_{2i+1}) / sqrt(2)`.
pub fn pair_to_complex(amplitudes: &[f64]) -> Vec<Complex64> {
    assert!(amplitudes.len().is_multiple_of(2), "odd number of amplitudes");
    amplitudes
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]) * std::f64::consts::FRAC_1_SQRT_2)
        .collect()
}

/// Per-real-dimension variance of a uniformly drawn alphabet symbol.
pub fn alphabet_variance(q: u32) -> f64 {
    let q = q as f64;
    (q * q - 1.0) / 12.0
}
