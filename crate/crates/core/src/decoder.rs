//! Fano sequential decoding over an MMSE-DFE preprocessed lattice system,
//! plus a brute-force ML reference.
//!
//! The tree is searched from the last row of `R` upwards; depth `d` fixes
//! search coordinates `m-1, .., m-d`. The metric of a path is the sum over
//! its levels of `bias - noise_scale * r^2`, where `r` is the level
//! residual. Children are visited in Schnorr-Euchner order around the
//! level's unconstrained estimate. The search stops at the first leaf.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{alphabet_variance, LatticeCode};
use crate::mathkit::{triangularize, PreprocessedSystem, RMat, ShapingRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Search over all of `Z^m`; decodes outside the information set are
    /// reported, not corrected.
    Relaxed,
    /// Restrict every coordinate to its information interval: the
    /// candidates at each level keep the lattice point inside the shaping
    /// region given the levels already fixed.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub bias: f64,
    pub step: f64,
    pub max_nodes: u64,
    pub boundary: Boundary,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            bias: 1.2,
            step: 5.0,
            max_nodes: 1_000_000,
            boundary: Boundary::Relaxed,
        }
    }
}

impl DecoderConfig {
    /// Defaults with the search clamped to the codebook; used by the
    /// protocol simulators, where faded segments otherwise let the relaxed
    /// search leave the shaping region.
    pub fn clamped() -> Self {
        DecoderConfig { boundary: Boundary::Clamp, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bias > 0.0 && self.bias.is_finite()) {
            return Err(Error::InvalidConfig(format!("bias must be positive, got {}", self.bias)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Decoded integer vector in the original coordinate order.
    pub u: Vec<i64>,
    /// `|z - R u|^2` of the decoded vector.
    pub metric: f64,
    pub nodes: u64,
    pub status: DecodeStatus,
}

impl DecodeResult {
    pub fn count_nodes(&self) -> u64 {
        self.nodes
    }
}

/// Zig-zag enumeration state for one tree level.
#[derive(Debug, Clone, Copy, Default)]
struct Level {
    center: f64,
    first: i64,
    dir: i64,
    k: i64,
    lo: i64,
    hi: i64,
}

impl Level {
    fn candidate(&self) -> i64 {
        let k = self.k;
        if k % 2 == 1 {
            self.first + self.dir * ((k + 1) / 2)
        } else {
            self.first - self.dir * (k / 2)
        }
    }

    fn exhausted_from(&self) -> bool {
        let reach = (self.k + 1) / 2;
        self.first - reach < self.lo && self.first + reach > self.hi
    }

    /// Moves to the next in-range candidate; false when none is left.
    fn advance(&mut self) -> bool {
        loop {
            self.k += 1;
            let c = self.candidate();
            if c >= self.lo && c <= self.hi {
                return true;
            }
            if self.exhausted_from() {
                return false;
            }
        }
    }

    /// Positions on the best in-range candidate; false for an empty range.
    fn reset(&mut self) -> bool {
        self.k = 0;
        let c = self.candidate();
        if c >= self.lo && c <= self.hi {
            return true;
        }
        if self.lo > self.hi {
            return false;
        }
        self.advance()
    }
}

struct Search<'a> {
    sys: &'a PreprocessedSystem,
    u: Vec<i64>,
    levels: Vec<Level>,
    bias: f64,
}

impl<'a> Search<'a> {
    fn enter(&mut self, i: usize, clamp: bool) -> bool {
        let r = self.sys.r.row(i);
        let end = self.sys.row_end[i];
        let s: f64 = (i + 1..end).map(|j| r[j] * self.u[j] as f64).sum();
        let center = (self.sys.z[i] - s) / r[i];
        let first = center.round() as i64;
        let (mut lo, mut hi) = match (&self.sys.bounds, clamp) {
            (Some(b), true) => b[i],
            _ => (i64::MIN / 4, i64::MAX / 4),
        };
        if let (Some(rows), true) = (&self.sys.shaping, clamp) {
            let row = &rows[i];
            if row.deps.iter().all(|&(j, _)| j > i) {
                let (a, b) = row.interval(&self.u);
                lo = lo.max(a);
                hi = hi.min(b);
            }
        }
        self.levels[i] = Level {
            center,
            first,
            dir: if center >= first as f64 { 1 } else { -1 },
            k: 0,
            lo,
            hi,
        };
        self.levels[i].reset()
    }

    fn increment(&self, i: usize) -> f64 {
        let l = &self.levels[i];
        let d = self.sys.r[(i, i)] * (l.center - l.candidate() as f64);
        self.bias - self.sys.noise_scale * d * d
    }
}

/// Fano search of `sys`. Returns the first full-depth leaf, or on budget
/// exhaustion the current path completed greedily.
pub fn fano_decode(sys: &PreprocessedSystem, cfg: &DecoderConfig) -> Result<DecodeResult> {
    cfg.validate()?;
    let m = sys.dim();
    let clamp = cfg.boundary == Boundary::Clamp;
    if clamp && sys.bounds.is_none() {
        return Err(Error::InvalidConfig("clamp mode needs coordinate bounds".into()));
    }
    let mut s = Search {
        sys,
        u: vec![0; m],
        levels: vec![Level::default(); m],
        bias: cfg.bias,
    };
    if m == 0 {
        return Ok(DecodeResult { u: vec![], metric: 0.0, nodes: 0, status: DecodeStatus::Converged });
    }
    let delta = cfg.step;
    // Path metrics by depth; threshold is `tk * delta`.
    let mut metric = vec![0.0f64; m + 1];
    let mut tk: i64 = 0;
    let mut depth = 0usize;
    let mut nodes = 0u64;
    let mut has_child = s.enter(m - 1, clamp);
    let mut status = DecodeStatus::Converged;

    'search: loop {
        let i = m - 1 - depth;
        let t = tk as f64 * delta;
        let mf = if has_child { metric[depth] + s.increment(i) } else { f64::NEG_INFINITY };
        if mf >= t {
            if nodes >= cfg.max_nodes {
                status = DecodeStatus::BudgetExhausted;
                break;
            }
            nodes += 1;
            s.u[i] = s.levels[i].candidate();
            metric[depth + 1] = mf;
            if metric[depth] < t + delta {
                tk = tk.max((mf / delta).floor() as i64);
            }
            depth += 1;
            if depth == m {
                break;
            }
            has_child = s.enter(m - 1 - depth, clamp);
            continue;
        }
        // Look back.
        loop {
            let t = tk as f64 * delta;
            let mb = if depth == 0 { f64::NEG_INFINITY } else { metric[depth - 1] };
            if mb >= t {
                depth -= 1;
                let j = m - 1 - depth;
                if s.levels[j].advance() {
                    has_child = true;
                    continue 'search;
                }
                continue;
            }
            // Lower the threshold by the smallest multiple of delta that
            // lets the search move forward to the best child or back.
            let i = m - 1 - depth;
            has_child = s.levels[i].reset();
            let best = if has_child { metric[depth] + s.increment(i) } else { f64::NEG_INFINITY };
            let target = best.max(mb);
            if !target.is_finite() {
                // Empty subtree at the root: nothing to decode.
                status = DecodeStatus::BudgetExhausted;
                break 'search;
            }
            let steps = ((t - target) / delta).ceil().max(1.0) as i64;
            tk -= steps;
            continue 'search;
        }
    }

    if status == DecodeStatus::BudgetExhausted {
        // Complete the path greedily from the current depth.
        let mut d = depth;
        while d < m {
            let i = m - 1 - d;
            s.u[i] = if s.enter(i, clamp) { s.levels[i].candidate() } else { s.levels[i].lo };
            d += 1;
        }
    }
    let metric = sys.residual_sq(&s.u);
    Ok(DecodeResult {
        u: sys.to_original(&s.u),
        metric,
        nodes,
        status,
    })
}

/// Exact constrained closest point: argmin over the codebook of
/// `|y - H (G u + eta)|^2`, ties to the lexicographically smallest `u`.
pub fn ml_decode(y: &[f64], h: &RMat, code: &LatticeCode, max_size: u128) -> Result<Vec<i64>> {
    if h.cols() != code.dim() || h.rows() != y.len() {
        return Err(Error::DimensionMismatch("channel, code and observation disagree".into()));
    }
    let mut best: Option<(f64, Vec<i64>)> = None;
    for (u, x) in code.enumerate_codebook(max_size)? {
        let hx = h.mul_vec(&x)?;
        let d: f64 = y.iter().zip(&hx).map(|(a, b)| (a - b) * (a - b)).sum();
        let better = match &best {
            None => true,
            Some((bd, bu)) => d < *bd || (d == *bd && u < *bu),
        };
        if better {
            best = Some((d, u));
        }
    }
    Ok(best.expect("codebook is never empty").1)
}

/// A lattice `{G u + eta}` with per-coordinate integer bounds and the
/// per-dimension variance of its points.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    pub generator: RMat,
    pub translate: Vec<f64>,
    pub bounds: Vec<(i64, i64)>,
    /// Integer range of every coordinate of `G u` inside the shaping
    /// region, when `G` is lower triangular.
    pub shaping: Option<(i64, i64)>,
    pub signal_var: f64,
}

impl LatticeModel {
    /// Model of `code` whose coordinates are transmitted centred, i.e. with
    /// translate `-(Q-1)/2` added to the code's own.
    pub fn centered(code: &LatticeCode) -> Self {
        let c = (code.q() as f64 - 1.0) / 2.0;
        let generator = code.generator_matrix();
        let integral = code.translate().iter().all(|&e| e == 0.0);
        LatticeModel {
            shaping: (integral && integer_pivots(&generator)).then(|| (0, code.q() as i64 - 1)),
            generator,
            translate: code.translate().iter().map(|e| e - c).collect(),
            bounds: code.coordinate_bounds(),
            signal_var: alphabet_variance(code.q()),
        }
    }

    /// Block-diagonal combination of models sharing one alphabet.
    pub fn block_diag(models: &[LatticeModel]) -> Result<Self> {
        let first = models.first().ok_or_else(|| Error::DimensionMismatch("no blocks".into()))?;
        if models.iter().any(|m| m.signal_var != first.signal_var || m.shaping != first.shaping) {
            return Err(Error::DimensionMismatch("blocks use different alphabets".into()));
        }
        let gens: Vec<RMat> = models.iter().map(|m| m.generator.clone()).collect();
        Ok(LatticeModel {
            generator: RMat::block_diag(&gens),
            translate: models.iter().flat_map(|m| m.translate.iter().copied()).collect(),
            bounds: models.iter().flat_map(|m| m.bounds.iter().copied()).collect(),
            shaping: first.shaping,
            signal_var: first.signal_var,
        })
    }

    /// The same lattice with coordinates and integer unknowns both
    /// reordered: new index `k` is old index `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let m = self.dim();
        let mut seen = vec![false; m];
        if perm.len() != m || self.generator.rows() != m {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        for &p in perm {
            if p >= m || std::mem::replace(&mut seen[p], true) {
                return Err(Error::DimensionMismatch("not a permutation".into()));
            }
        }
        Ok(LatticeModel {
            generator: RMat::from_fn(m, m, |i, j| self.generator[(perm[i], perm[j])]),
            translate: perm.iter().map(|&p| self.translate[p]).collect(),
            bounds: perm.iter().map(|&p| self.bounds[p]).collect(),
            shaping: self.shaping,
            signal_var: self.signal_var,
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.cols()
    }
}

/// Square integer generator whose diagonal entries are positive, so that
/// coordinate `c` of `G u` can be steered through `u_c`.
fn integer_pivots(g: &RMat) -> bool {
    let m = g.cols();
    g.rows() == m
        && (0..m).all(|i| g[(i, i)] > 0.0)
        && (0..m).all(|i| (0..m).all(|j| g[(i, j)].fract() == 0.0))
}

/// Order in which the tree search fixes coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchOrder {
    /// The first column is fixed first. Suits lower-triangular
    /// (forward-time) generators.
    Forward,
    /// The last column is fixed first.
    Reverse,
    /// Sorted QR: columns of the augmented matrix are taken in order of
    /// increasing residual norm, so the search starts at the strongest
    /// levels. Costs a dense pass; meant for small unstructured systems.
    Sorted,
}

/// Column order of a sorted QR of `a` (modified Gram-Schmidt, pivoting on
/// the smallest remaining column norm).
pub fn sorted_columns(a: &RMat) -> Vec<usize> {
    let (n, m) = (a.rows(), a.cols());
    let mut q: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| a[(i, j)]).collect()).collect();
    let mut norms: Vec<f64> = q.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut perm: Vec<usize> = (0..m).collect();
    for j in 0..m {
        let k = (j..m)
            .min_by(|&x, &y| norms[x].total_cmp(&norms[y]))
            .expect("nonempty");
        q.swap(j, k);
        norms.swap(j, k);
        perm.swap(j, k);
        let r = norms[j].sqrt();
        if r == 0.0 {
            continue;
        }
        let (head, tail) = q.split_at_mut(j + 1);
        let qj: Vec<f64> = head[j].iter().map(|v| v / r).collect();
        for (c, col) in tail.iter_mut().enumerate() {
            let p: f64 = qj.iter().zip(col.iter()).map(|(x, y)| x * y).sum();
            for (v, w) in col.iter_mut().zip(&qj) {
                *v -= p * w;
            }
            norms[j + 1 + c] -= p * p;
        }
    }
    perm
}

/// MMSE-DFE preprocessing of `y = H (G u + eta) + n` with per-real-dimension
/// noise variance `noise_var`. The regularizer acts on the lattice point
/// `G u + eta`.
pub fn preprocess_lattice(
    h: &RMat,
    lattice: &LatticeModel,
    y: &[f64],
    noise_var: f64,
    order: SearchOrder,
) -> Result<PreprocessedSystem> {
    let m = lattice.dim();
    if h.cols() != lattice.generator.rows() || y.len() != h.rows() {
        return Err(Error::DimensionMismatch("channel, lattice and observation disagree".into()));
    }
    if !(noise_var > 0.0) {
        return Err(Error::InvalidConfig("noise variance must be positive".into()));
    }
    let nts = noise_var / lattice.signal_var;
    let sq = nts.sqrt();
    let full = h.mul(&lattice.generator)?.vstack(&lattice.generator.scaled(sq))?;
    let cols: Vec<usize> = match order {
        SearchOrder::Forward => (0..m).rev().collect(),
        SearchOrder::Reverse => (0..m).collect(),
        SearchOrder::Sorted => sorted_columns(&full),
    };
    let a = full.select_columns(&cols);
    let h_eta = h.mul_vec(&lattice.translate)?;
    let mut rhs: Vec<f64> = y
        .iter()
        .zip(&h_eta)
        .map(|(a, b)| a - b)
        .chain(lattice.translate.iter().map(|e| -sq * e))
        .collect();
    let (r, row_end, z) = triangularize(a, &mut rhs)?;
    let shaping = lattice.shaping.map(|(lo, hi)| {
        let mut level = vec![0; m];
        for (l, &c) in cols.iter().enumerate() {
            level[c] = l;
        }
        cols.iter()
            .map(|&c| ShapingRow {
                deps: (0..m)
                    .filter(|&j| j != c && lattice.generator[(c, j)] != 0.0)
                    .map(|j| (level[j], lattice.generator[(c, j)] as i64))
                    .collect(),
                diag: lattice.generator[(c, c)] as i64,
                lo,
                hi,
            })
            .collect()
    });
    Ok(PreprocessedSystem {
        r,
        row_end,
        z,
        noise_scale: 1.0,
        bounds: Some(cols.iter().map(|&c| lattice.bounds[c]).collect()),
        shaping,
        order: cols,
    }
    .with_noise_variance(noise_var))
}
