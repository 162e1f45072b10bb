//! Small dense linear algebra used by the decoders.
//!
//! Complex matrices are mapped to real ones with the rotation-block
//! embedding `a + ib -> [[a, -b], [b, a]]`, and complex vectors with
//! interleaved `(re, im)` pairs, so that `embed(M) * embed(v) == embed(M v)`.
//!
//! The MMSE-DFE forward filter is never formed explicitly. Instead the
//! regularized least-squares problem `|y - H u|^2 + nts |u|^2` is written as
//! an augmented system `[H; sqrt(nts) I] u ~ [y; 0]` and triangularized with
//! Householder reflections. The upper-triangular factor and the rotated
//! observation are what the tree search consumes.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        RMat { rows, cols, data }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(RMat {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = RMat::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> RMat {
        RMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scaled(&self, s: f64) -> RMat {
        RMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Matrix product. Zero entries of either operand are skipped, which
    /// keeps products of banded and block-diagonal factors cheap.
    pub fn mul(&self, other: &RMat) -> Result<RMat> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = RMat::zeros(self.rows, other.cols);
        let sparse_rows: Vec<Vec<(usize, f64)>> = (0..other.rows)
            .map(|k| {
                other
                    .row(k)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        for i in 0..self.rows {
            let dst = i * out.cols;
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for &(j, b) in &sparse_rows[k] {
                    out.data[dst + j] += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn select_rows(&self, rows: &[usize]) -> RMat {
        RMat::from_fn(rows.len(), self.cols, |i, j| self[(rows[i], j)])
    }

    pub fn select_columns(&self, cols: &[usize]) -> RMat {
        RMat::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &RMat) -> Result<RMat> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch("vstack column count".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(RMat {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn block_diag(blocks: &[RMat]) -> RMat {
        let rows = blocks.iter().map(RMat::rows).sum();
        let cols = blocks.iter().map(RMat::cols).sum();
        let mut out = RMat::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for i in 0..b.rows {
                out.row_mut(r0 + i)[c0..c0 + b.cols].copy_from_slice(b.row(i));
            }
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }
}

impl Index<(usize, usize)> for RMat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(CMat {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn diag(d: &[Complex64]) -> Self {
        let mut m = CMat::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scaled(&self, s: Complex64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &CMat) -> Result<CMat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch("matrix sum".into()));
        }
        Ok(CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn mul(&self, other: &CMat) -> Result<CMat> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = i * out.cols;
            for (k, &a) in self.row(i).iter().enumerate() {
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for (j, &b) in other.row(k).iter().enumerate() {
                    out.data[dst + j] += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Real embedding of a complex matrix: each entry `a + ib` becomes the
/// 2x2 block `[[a, -b], [b, a]]`.
pub fn embed_complex(m: &CMat) -> RMat {
    let mut out = RMat::zeros(2 * m.rows(), 2 * m.cols());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let z = m[(i, j)];
            out[(2 * i, 2 * j)] = z.re;
            out[(2 * i, 2 * j + 1)] = -z.im;
            out[(2 * i + 1, 2 * j)] = z.im;
            out[(2 * i + 1, 2 * j + 1)] = z.re;
        }
    }
    out
}

/// Interleaved `(re, im)` embedding of a complex vector.
pub fn embed_vector(v: &[Complex64]) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Inverse of [`embed_vector`]. Panics on odd length.
pub fn unembed_vector(v: &[f64]) -> Vec<Complex64> {
    assert!(v.len().is_multiple_of(2), "odd-length real vector");
    v.chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect()
}

/// Lower-triangular Cholesky factor `L` with `S = L L^H`.
pub fn cholesky(s: &CMat) -> Result<CMat> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::DimensionMismatch("cholesky needs a square matrix".into()));
    }
    if !s.is_finite() {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = s.frobenius().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)].conj()).norm() > 1e-10 * scale {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = s[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut acc = s[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / d;
        }
    }
    Ok(l)
}

/// Solves `L X = B` in place for lower-triangular `L`.
pub fn solve_lower_in_place(l: &CMat, b: &mut CMat) -> Result<()> {
    let n = l.rows();
    if l.cols() != n || b.rows() != n {
        return Err(Error::DimensionMismatch("triangular solve".into()));
    }
    let cols = b.cols();
    for i in 0..n {
        for k in 0..i {
            let lik = l[(i, k)];
            if lik.re == 0.0 && lik.im == 0.0 {
                continue;
            }
            for c in 0..cols {
                let v = b[(k, c)];
                b[(i, c)] -= lik * v;
            }
        }
        let d = l[(i, i)];
        for c in 0..cols {
            b[(i, c)] /= d;
        }
    }
    Ok(())
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower_vec(l: &CMat, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut m = CMat::from_fn(b.len(), 1, |i, _| b[i]);
    solve_lower_in_place(l, &mut m)?;
    Ok((0..b.len()).map(|i| m[(i, 0)]).collect())
}

/// Whitening matrix `W` with `W S W^H = I`, computed as the inverse of the
/// Cholesky factor of `S`.
pub fn inverse_sqrt(s: &CMat) -> Result<CMat> {
    let l = cholesky(s)?;
    let mut w = CMat::identity(s.rows());
    solve_lower_in_place(&l, &mut w)?;
    Ok(w)
}

/// Upper-triangular search problem produced by MMSE-DFE preprocessing.
///
/// The search metric of an integer vector `u` (given in search order) is
/// `noise_scale * |z - R u|^2`. Coordinate `j` of the search vector is
/// coordinate `order[j]` of the original unknown.
#[derive(Debug, Clone)]
pub struct PreprocessedSystem {
    pub r: RMat,
    /// `row_end[i]` is one past the last nonzero column of row `i` of `r`.
    pub row_end: Vec<usize>,
    pub z: Vec<f64>,
    pub noise_scale: f64,
    pub order: Vec<usize>,
    /// Optional per-coordinate integer intervals, in search order.
    pub bounds: Option<Vec<(i64, i64)>>,
    /// Optional per-level shaping constraints, in search order.
    pub shaping: Option<Vec<ShapingRow>>,
}

/// Keeps `diag * u_i + sum(coef * u_dep)` inside `[lo, hi]`, where the
/// dependencies are search levels fixed before level `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingRow {
    pub deps: Vec<(usize, i64)>,
    pub diag: i64,
    pub lo: i64,
    pub hi: i64,
}

impl ShapingRow {
    /// Integer interval for `u_i` given the fixed levels of `u`.
    pub fn interval(&self, u: &[i64]) -> (i64, i64) {
        let s: i64 = self.deps.iter().map(|&(j, c)| c * u[j]).sum();
        let lo = (self.lo - s).div_euclid(self.diag) + i64::from((self.lo - s).rem_euclid(self.diag) != 0);
        (lo, (self.hi - s).div_euclid(self.diag))
    }
}

impl PreprocessedSystem {
    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// Scales the metric for a real-per-dimension noise variance so that the
    /// effective noise has unit variance per real dimension.
    pub fn with_noise_variance(mut self, real_noise_var: f64) -> Self {
        self.noise_scale = 1.0 / real_noise_var.max(1e-12);
        self
    }

    /// `|z - R u|^2` for `u` in search order (unscaled).
    pub fn residual_sq(&self, u_search: &[i64]) -> f64 {
        let m = self.dim();
        (0..m)
            .map(|i| {
                let row = self.r.row(i);
                let s: f64 = (i..self.row_end[i]).map(|j| row[j] * u_search[j] as f64).sum();
                let d = self.z[i] - s;
                d * d
            })
            .sum()
    }

    /// Maps a search-order vector back to the original coordinate order.
    pub fn to_original(&self, u_search: &[i64]) -> Vec<i64> {
        let mut out = vec![0; u_search.len()];
        for (j, &v) in u_search.iter().enumerate() {
            out[self.order[j]] = v;
        }
        out
    }

    /// Maps an original-order vector to search order.
    pub fn to_search(&self, u: &[i64]) -> Vec<i64> {
        self.order.iter().map(|&k| u[k]).collect()
    }
}

/// Householder triangularization of a tall matrix, applying the same
/// reflections to `rhs`. Returns the upper-triangular factor (positive
/// diagonal), its row extents, and the first `m` rotated right-hand-side
/// entries.
///
/// Structural zeros are exploited: each reflection touches only the rows
/// with a nonzero in the current column and the columns up to their
/// furthest nonzero. The pivot row is the candidate with the shortest
/// extent, which limits fill on banded inputs.
pub fn triangularize(mut a: RMat, rhs: &mut [f64]) -> Result<(RMat, Vec<usize>, Vec<f64>)> {
    let (n, m) = (a.rows(), a.cols());
    if n < m {
        return Err(Error::DimensionMismatch(format!("{n}x{m} system is wide")));
    }
    if rhs.len() != n {
        return Err(Error::DimensionMismatch("right-hand side length".into()));
    }
    let mut row_end: Vec<usize> = (0..n)
        .map(|i| a.row(i).iter().rposition(|&v| v != 0.0).map_or(0, |p| p + 1))
        .collect();
    let mut row_start: Vec<usize> = (0..n)
        .map(|i| a.row(i).iter().position(|&v| v != 0.0).unwrap_or(m))
        .collect();
    let mut involved: Vec<usize> = Vec::new();
    let mut v: Vec<f64> = Vec::new();

    for j in 0..m {
        involved.clear();
        for i in j..n {
            if row_start[i] <= j && a[(i, j)] != 0.0 {
                involved.push(i);
            }
        }
        if involved.is_empty() {
            return Err(Error::RankDeficient(j));
        }
        let pivot = *involved
            .iter()
            .min_by_key(|&&i| (row_end[i], i))
            .expect("nonempty");
        if pivot != j {
            swap_rows(&mut a, j, pivot);
            rhs.swap(j, pivot);
            row_end.swap(j, pivot);
            row_start.swap(j, pivot);
            for i in involved.iter_mut() {
                if *i == pivot {
                    *i = j;
                } else if *i == j {
                    *i = pivot;
                }
            }
        }
        let end = involved.iter().map(|&i| row_end[i]).max().expect("nonempty");
        if involved.len() > 1 {
            let alpha = involved
                .iter()
                .map(|&i| a[(i, j)] * a[(i, j)])
                .sum::<f64>()
                .sqrt();
            let x0 = a[(j, j)];
            let beta = if x0 >= 0.0 { -alpha } else { alpha };
            v.clear();
            v.extend(involved.iter().map(|&i| if i == j { x0 - beta } else { a[(i, j)] }));
            let vtv: f64 = v.iter().map(|x| x * x).sum();
            for c in j + 1..end {
                let s: f64 = involved.iter().zip(&v).map(|(&i, vi)| vi * a[(i, c)]).sum();
                let f = 2.0 * s / vtv;
                for (&i, vi) in involved.iter().zip(&v) {
                    a[(i, c)] -= f * vi;
                }
            }
            let s: f64 = involved.iter().zip(&v).map(|(&i, vi)| vi * rhs[i]).sum();
            let f = 2.0 * s / vtv;
            for (&i, vi) in involved.iter().zip(&v) {
                rhs[i] -= f * vi;
            }
            for &i in &involved {
                a[(i, j)] = 0.0;
                row_end[i] = end;
                if i != j {
                    row_start[i] = j + 1;
                }
            }
            a[(j, j)] = beta;
        }
        if a[(j, j)] < 0.0 {
            for c in j..end {
                a[(j, c)] = -a[(j, c)];
            }
            rhs[j] = -rhs[j];
        }
    }

    let r = RMat::from_fn(m, m, |i, k| if k >= i { a[(i, k)] } else { 0.0 });
    row_end.truncate(m);
    for (i, e) in row_end.iter_mut().enumerate() {
        *e = (*e).max(i + 1);
    }
    Ok((r, row_end, rhs[..m].to_vec()))
}

fn swap_rows(a: &mut RMat, i: usize, k: usize) {
    if i == k {
        return;
    }
    let cols = a.cols();
    let (lo, hi) = (i.min(k), i.max(k));
    let (head, tail) = a.data.split_at_mut(hi * cols);
    head[lo * cols..(lo + 1) * cols].swap_with_slice(&mut tail[..cols]);
}

/// Triangularizes the stacked system `[top; bottom] u ~ [y_top; y_bottom]`.
pub fn triangularize_stacked(
    top: &RMat,
    bottom: &RMat,
    y_top: &[f64],
    y_bottom: &[f64],
) -> Result<PreprocessedSystem> {
    if y_top.len() != top.rows() || y_bottom.len() != bottom.rows() {
        return Err(Error::DimensionMismatch("observation length".into()));
    }
    let a = top.vstack(bottom)?;
    let mut rhs: Vec<f64> = y_top.iter().chain(y_bottom).copied().collect();
    let (r, row_end, z) = triangularize(a, &mut rhs)?;
    let m = z.len();
    Ok(PreprocessedSystem {
        r,
        row_end,
        z,
        noise_scale: 1.0,
        order: (0..m).collect(),
        bounds: None,
        shaping: None,
    })
}

/// MMSE-DFE preprocessing of `y = H u + noise`.
///
/// The returned system satisfies
/// `|z - R u|^2 = |y - H u|^2 + nts |u|^2 - const` for every `u`.
pub fn mmse_dfe_preprocess(h: &RMat, noise_to_signal: f64, y: &[f64]) -> Result<PreprocessedSystem> {
    if !(noise_to_signal > 0.0) || !noise_to_signal.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "noise-to-signal ratio must be positive, got {noise_to_signal}"
        )));
    }
    if y.len() != h.rows() {
        return Err(Error::DimensionMismatch(format!(
            "observation of length {} for a {}-row channel",
            y.len(),
            h.rows()
        )));
    }
    let m = h.cols();
    let bottom = RMat::identity(m).scaled(noise_to_signal.sqrt());
    triangularize_stacked(h, &bottom, y, &vec![0.0; m])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_cmat(rng: &mut ChaCha8Rng, r: usize, k: usize) -> CMat {
        CMat::from_fn(r, k, |_, _| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    fn random_rmat(rng: &mut ChaCha8Rng, r: usize, k: usize) -> RMat {
        RMat::from_fn(r, k, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn embed_of_i_is_rotation() {
        let m = CMat::from_rows(&[vec![c(0.0, 1.0)]]).unwrap();
        let e = embed_complex(&m);
        assert_eq!(e, RMat::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap());
    }

    #[test]
    fn embed_identity() {
        assert_eq!(embed_complex(&CMat::identity(2)), RMat::identity(4));
    }

    #[test]
    fn embed_matrix_vector_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let m = random_cmat(&mut rng, 2, 2);
            let v: Vec<Complex64> = (0..2)
                .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let lhs = embed_complex(&m).mul_vec(&embed_vector(&v)).unwrap();
            let rhs = embed_vector(&m.mul_vec(&v).unwrap());
            for (a, b) in lhs.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn embed_is_multiplicative(seed in any::<u64>(), r in 1usize..4, k in 1usize..4, q in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_cmat(&mut rng, r, k);
            let b = random_cmat(&mut rng, k, q);
            let lhs = embed_complex(&a.mul(&b).unwrap());
            let rhs = embed_complex(&a).mul(&embed_complex(&b)).unwrap();
            for i in 0..lhs.rows() {
                for j in 0..lhs.cols() {
                    prop_assert!((lhs[(i, j)] - rhs[(i, j)]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn preprocessed_diagonal_is_positive(seed in any::<u64>(), n in 1usize..7, m in 1usize..6, nts in 0.01f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_rmat(&mut rng, n, m);
            let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let sys = mmse_dfe_preprocess(&h, nts, &y).unwrap();
            for i in 0..m {
                prop_assert!(sys.r[(i, i)] > 0.0);
            }
        }
    }

    #[test]
    fn inverse_sqrt_scalar_and_diagonal() {
        let s = CMat::identity(3).scaled(c(4.0, 0.0));
        let w = inverse_sqrt(&s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert!((w[(i, j)] - c(expect, 0.0)).norm() < 1e-15);
            }
        }
        let w = inverse_sqrt(&CMat::diag(&[c(4.0, 0.0), c(9.0, 0.0)])).unwrap();
        assert!((w[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((w[(1, 1)].re - 1.0 / 3.0).abs() < 1e-15);
        assert!(w[(0, 1)].norm() == 0.0 && w[(1, 0)].norm() == 0.0);
    }

    #[test]
    fn inverse_sqrt_whitens_random_covariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..8 {
            let a = random_cmat(&mut rng, n, n);
            let s = a.mul(&a.adjoint()).unwrap().add(&CMat::identity(n)).unwrap();
            let w = inverse_sqrt(&s).unwrap();
            let e = w.mul(&s).unwrap().mul(&w.adjoint()).unwrap();
            let diff = e.add(&CMat::identity(n).scaled(c(-1.0, 0.0))).unwrap();
            assert!(diff.frobenius() < 1e-8, "n={n} err={}", diff.frobenius());
        }
    }

    #[test]
    fn inverse_sqrt_rejects_indefinite() {
        let s = CMat::diag(&[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(inverse_sqrt(&s), Err(Error::NotPositiveDefinite));
        let s = CMat::from_rows(&[vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(1.0, 0.0)]]).unwrap();
        assert_eq!(inverse_sqrt(&s), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn whitened_samples_have_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = CMat::from_rows(&[
            vec![c(2.0, 0.0), c(0.6, 0.4)],
            vec![c(0.6, -0.4), c(1.5, 0.0)],
        ])
        .unwrap();
        let l = cholesky(&s).unwrap();
        let w = inverse_sqrt(&s).unwrap();
        let n = 100_000;
        let mut cov = [[c(0.0, 0.0); 2]; 2];
        for _ in 0..n {
            let g: Vec<Complex64> = (0..2)
                .map(|_| {
                    c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
                        * std::f64::consts::FRAC_1_SQRT_2
                })
                .collect();
            let z = l.mul_vec(&g).unwrap();
            let wz = w.mul_vec(&z).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += wz[i] * wz[j].conj();
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let v = cov[i][j] / n as f64;
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - c(expect, 0.0)).norm() < 0.02, "cov[{i}][{j}] = {v}");
            }
        }
    }

    #[test]
    fn preprocess_identity_limit() {
        let y = vec![0.3, -1.2, 2.5];
        let sys = mmse_dfe_preprocess(&RMat::identity(3), 1e-14, &y).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((sys.r[(i, j)] - expect).abs() < 1e-12);
            }
            assert!((sys.z[i] - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn preprocess_closed_form_two_by_two() {
        let h = RMat::identity(2).scaled(2.0);
        let sys = mmse_dfe_preprocess(&h, 1.0, &[1.0, 1.0]).unwrap();
        let s5 = 5f64.sqrt();
        assert!((sys.r[(0, 0)] - s5).abs() < 1e-12);
        assert!((sys.r[(1, 1)] - s5).abs() < 1e-12);
        assert!(sys.r[(0, 1)].abs() < 1e-12);
        // Top-block rotation applied to y: (2/sqrt5) y.
        assert!((sys.z[0] - 2.0 / s5).abs() < 1e-12);
    }

    #[test]
    fn preprocess_gram_matches_augmented_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_rmat(&mut rng, 6, 4);
        let nts = 0.37;
        let sys = mmse_dfe_preprocess(&h, nts, &[0.0; 6]).unwrap();
        let rtr = sys.r.transpose().mul(&sys.r).unwrap();
        let hth = h.transpose().mul(&h).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = hth[(i, j)] + if i == j { nts } else { 0.0 };
                assert!((rtr[(i, j)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn preprocess_metric_argmin_matches_regularized_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let h = random_rmat(&mut rng, 4, 3);
            let y: Vec<f64> = (0..4).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let nts = 0.5;
            let sys = mmse_dfe_preprocess(&h, nts, &y).unwrap();
            let mut best_a = (f64::INFINITY, vec![]);
            let mut best_b = (f64::INFINITY, vec![]);
            for a in -2..=2i64 {
                for b in -2..=2i64 {
                    for cc in -2..=2i64 {
                        let u = vec![a, b, cc];
                        let uf: Vec<f64> = u.iter().map(|&x| x as f64).collect();
                        let hu = h.mul_vec(&uf).unwrap();
                        let direct: f64 = y.iter().zip(&hu).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
                            + nts * uf.iter().map(|x| x * x).sum::<f64>();
                        let pre = sys.residual_sq(&u);
                        if direct < best_a.0 {
                            best_a = (direct, u.clone());
                        }
                        if pre < best_b.0 {
                            best_b = (pre, u.clone());
                        }
                    }
                }
            }
            assert_eq!(best_a.1, best_b.1);
        }
    }

    #[test]
    fn preprocess_rejects_bad_input() {
        let h = RMat::identity(2);
        assert!(mmse_dfe_preprocess(&h, 0.0, &[0.0, 0.0]).is_err());
        assert!(matches!(
            mmse_dfe_preprocess(&h, 1.0, &[0.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn sparse_triangularization_matches_dense_gram() {
        // Banded lower-triangular input, the shape produced by trellis codes.
        let m = 30;
        let a = RMat::from_fn(2 * m, m, |i, j| {
            let i = i % m;
            if i >= j && i - j <= 3 {
                1.0 + ((i * 7 + j * 3) % 5) as f64
            } else {
                0.0
            }
        });
        let mut rhs = vec![0.0; 2 * m];
        let (r, row_end, _) = triangularize(a.clone(), &mut rhs).unwrap();
        let rtr = r.transpose().mul(&r).unwrap();
        let ata = a.transpose().mul(&a).unwrap();
        for i in 0..m {
            assert!(row_end[i] > i);
            for j in 0..m {
                assert!((rtr[(i, j)] - ata[(i, j)]).abs() < 1e-9);
            }
        }
    }
}
