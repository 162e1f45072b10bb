//! Diversity-multiplexing tradeoff curves, Pareto-optimal waiting
//! fractions, and Monte Carlo outage of the DDF protocol.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{sample_relay, snr_to_variances, trial_rng};
use crate::ddf::{quantize_wait, required_wait};
use crate::error::{Error, Result};

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Non-orthogonal amplify and forward: `1 - r + (1 - 2r)^+`.
pub fn dmt_naf(r: f64) -> f64 {
    1.0 - r + pos(1.0 - 2.0 * r)
}

/// Dynamic decode and forward with free start times.
pub fn dmt_ddf(r: f64) -> f64 {
    if r <= 0.5 {
        2.0 * (1.0 - r)
    } else {
        (1.0 - r) / r
    }
}

/// Dynamic decode and forward restricted to the waiting fractions
/// `fractions` (`f_1 < .. < f_N`, `f_1 >= 1/2`):
/// `min over f_j >= r of (1-r)/f_j + (1 - r/f_{j-1})^+`, with `f_{N+1} = 1`
/// and no second term for `j = 1`.
pub fn dmt_ddf_finite(r: f64, fractions: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    let mut prev: Option<f64> = None;
    for &f in fractions.iter().chain(std::iter::once(&1.0)) {
        if f >= r {
            let extra = prev.map_or(0.0, |p| pos(1.0 - r / p));
            best = best.min((1.0 - r) / f + extra);
        }
        prev = Some(f);
    }
    best
}

/// Pareto-optimal tradeoff `1 - r + (1 - r/f_N)^+`.
pub fn dmt_ddf_pareto(r: f64, last_fraction: f64) -> f64 {
    1.0 - r + pos(1.0 - r / last_fraction)
}

/// Two-user cooperative multiple access: `2(1 - r)`.
pub fn dmt_cma(r: f64) -> f64 {
    2.0 * (1.0 - r)
}

/// Optimal tradeoff of an `m x n` MIMO channel: piecewise linear through
/// `(k, (m-k)(n-k))`.
pub fn dmt_mimo_optimal(m: usize, n: usize, r: f64) -> f64 {
    let kmax = m.min(n) as f64;
    if r >= kmax {
        return 0.0;
    }
    let k = r.floor();
    let at = |k: f64| (m as f64 - k) * (n as f64 - k);
    at(k) + (r - k) * (at(k + 1.0) - at(k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DmtKind {
    Naf,
    Ddf,
    DdfFinite(Vec<f64>),
    Cma,
    Mimo(usize, usize),
}

/// A tradeoff curve on `[0, r_max]` with its kink locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmtCurve {
    pub kind: DmtKind,
}

impl DmtCurve {
    pub fn new(kind: DmtKind) -> Result<Self> {
        if let DmtKind::DdfFinite(f) = &kind {
            check_fractions(f)?;
        }
        Ok(DmtCurve { kind })
    }

    pub fn eval(&self, r: f64) -> f64 {
        match &self.kind {
            DmtKind::Naf => dmt_naf(r),
            DmtKind::Ddf => dmt_ddf(r),
            DmtKind::DdfFinite(f) => dmt_ddf_finite(r, f),
            DmtKind::Cma => dmt_cma(r),
            DmtKind::Mimo(m, n) => dmt_mimo_optimal(*m, *n, r),
        }
    }

    pub fn r_max(&self) -> f64 {
        match &self.kind {
            DmtKind::Mimo(m, n) => (*m).min(*n) as f64,
            _ => 1.0,
        }
    }

    /// Multiplexing gains where the curve changes slope.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = match &self.kind {
            DmtKind::Naf | DmtKind::Ddf => vec![0.5],
            DmtKind::DdfFinite(f) => f.clone(),
            DmtKind::Cma => vec![],
            DmtKind::Mimo(m, n) => (1..(*m).min(*n)).map(|k| k as f64).collect(),
        };
        b.insert(0, 0.0);
        b.push(self.r_max());
        b
    }

    /// `(r, d)` samples on `points` evenly spaced gains plus the
    /// breakpoints, sorted by `r`.
    pub fn sample(&self, points: usize) -> Vec<(f64, f64)> {
        let mut rs = dominance_grid(&[self], points);
        rs.dedup();
        rs.into_iter().map(|r| (r, self.eval(r))).collect()
    }
}

fn dominance_grid(curves: &[&DmtCurve], points: usize) -> Vec<f64> {
    let r_max = curves.iter().map(|c| c.r_max()).fold(0.0, f64::max);
    let n = points.max(2);
    let mut rs: Vec<f64> = (0..n).map(|i| r_max * i as f64 / (n - 1) as f64).collect();
    for c in curves {
        rs.extend(c.breakpoints());
    }
    rs.sort_by(f64::total_cmp);
    rs
}

const DOMINANCE_TOL: f64 = 1e-12;

/// `a` achieves at least the diversity of `b` at every multiplexing gain
/// (1000-point grid plus breakpoints).
pub fn uniformly_dominates(a: &DmtCurve, b: &DmtCurve) -> bool {
    dominance_grid(&[a, b], 1000)
        .into_iter()
        .all(|r| a.eval(r) >= b.eval(r) - DOMINANCE_TOL)
}

/// `a` dominates `b` in the Pareto sense: strictly better somewhere and
/// worse nowhere.
pub fn pareto_dominates(a: &DmtCurve, b: &DmtCurve) -> bool {
    let grid = dominance_grid(&[a, b], 1000);
    let better = grid.iter().any(|&r| a.eval(r) > b.eval(r) + DOMINANCE_TOL);
    better && uniformly_dominates(a, b)
}

fn check_fractions(f: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for &x in f {
        if !(x > prev && x < 1.0) {
            return Err(Error::InvalidConfig(format!("fractions must increase inside (0, 1): {f:?}")));
        }
        prev = x;
    }
    Ok(())
}

/// Runs the fraction recursion `f_j = (1 - f_{j-1}) / (2 - (1 + 1/g) f_{j-1})`
/// from `f_1 = 1/2` with a trial value `g` for `f_N`.
fn propagate(n: usize, g: f64) -> Vec<f64> {
    let mut f = vec![0.5];
    for _ in 1..n {
        let p = *f.last().expect("nonempty");
        f.push((1.0 - p) / (2.0 - (1.0 + 1.0 / g) * p));
    }
    f
}

/// Largest deviation of `fractions` from the recursion with
/// `f_N = fractions[N-1]`.
pub fn pareto_residual(fractions: &[f64]) -> f64 {
    let n = fractions.len();
    if n == 0 {
        return 0.0;
    }
    let g = fractions[n - 1];
    let mut worst = (fractions[0] - 0.5).abs();
    for j in 1..n {
        let p = fractions[j - 1];
        let want = (1.0 - p) / (2.0 - (1.0 + 1.0 / g) * p);
        worst = worst.max((fractions[j] - want).abs());
    }
    worst
}

/// Pareto-optimal waiting fractions for `n` boundaries. The recursion is
/// implicit in `f_N`; it is solved by bisection on `f_N` in `(1/2, 1)`,
/// matching the propagated last fraction to the trial value.
pub fn pareto_fractions(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidConfig("at least one waiting fraction is needed".into()));
    }
    if n == 1 {
        return Ok(vec![0.5]);
    }
    // Mismatch of the propagated f_N against the trial value. Too small a
    // trial overshoots 1, too large a trial stalls the increase.
    let gap = |g: f64| -> f64 {
        let f = propagate(n, g);
        for w in f.windows(2) {
            if !(w[1] > 0.0 && w[1] < 1.0) || !w[1].is_finite() {
                return 1.0;
            }
            if w[1] <= w[0] {
                return -1.0;
            }
        }
        f[n - 1] - g
    };
    let (mut lo, mut hi) = (0.5 + 1e-15, 1.0 - 1e-15);
    if !(gap(lo) > 0.0 && gap(hi) <= 0.0) {
        return Err(Error::NonConvergence(format!("no bracket for {n} fractions")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    // Settle on the endpoint whose propagated set is consistent.
    let mut best: Option<(f64, Vec<f64>)> = None;
    for g in [lo, hi, 0.5 * (lo + hi)] {
        let mut f = propagate(n, g);
        f[n - 1] = g;
        if check_fractions(&f).is_ok() {
            let res = pareto_residual(&f);
            if best.as_ref().is_none_or(|(r, _)| res < *r) {
                best = Some((res, f));
            }
        }
    }
    match best {
        Some((res, f)) if res < 1e-12 => Ok(f),
        Some((res, _)) => Err(Error::NonConvergence(format!("residual {res:e} for {n} fractions"))),
        None => Err(Error::NonConvergence(format!("no valid set for {n} fractions"))),
    }
}

/// Instantaneous mutual information of the combined DDF channel when the
/// relay starts after a fraction `f` of the codeword.
pub fn ddf_mutual_information(f: f64, g1: f64, g2: f64, snr: f64) -> f64 {
    f * (1.0 + g1 * snr).log2() + (1.0 - f) * (1.0 + (g1 + g2) * snr).log2()
}

/// Monte Carlo outage probability of the DDF protocol at `rate` bits per
/// channel use. Draw `d` uses the stream `(seed, 0, d)`.
pub fn outage_ddf(
    snr_db: f64,
    rate: f64,
    fractions: &[f64],
    subblocks: usize,
    c: f64,
    draws: u64,
    seed: u64,
) -> Result<f64> {
    check_fractions(fractions)?;
    if subblocks == 0 {
        return Err(Error::InvalidConfig("need at least one sub-block".into()));
    }
    if rate <= 0.0 {
        return Ok(0.0);
    }
    let p = snr_to_variances(snr_db, c)?;
    let m = subblocks as f64;
    let chunk = 4096u64;
    let outages: u64 = (0..draws.div_ceil(chunk))
        .into_par_iter()
        .map(|b| {
            (b * chunk..((b + 1) * chunk).min(draws))
                .filter(|&d| {
                    let r = sample_relay(&mut trial_rng(seed, 0, d));
                    let h2 = r.h.norm_sqr();
                    let need = required_wait(rate, h2, c, p.snr, subblocks);
                    let wait = quantize_wait(need, fractions, subblocks) as f64 / m;
                    ddf_mutual_information(wait, r.g1.norm_sqr(), r.g2.norm_sqr(), p.snr) < rate
                })
                .count() as u64
        })
        .sum();
    Ok(outages as f64 / draws.max(1) as f64)
}

/// SNR in dB at which the DDF outage falls to `target`, by bisection on
/// `[lo_db, hi_db]` with common channel draws.
#[allow(clippy::too_many_arguments)]
pub fn ddf_outage_snr(
    target: f64,
    rate: f64,
    fractions: &[f64],
    subblocks: usize,
    c: f64,
    draws: u64,
    seed: u64,
    (lo_db, hi_db): (f64, f64),
) -> Result<f64> {
    let f = |s: f64| outage_ddf(s, rate, fractions, subblocks, c, draws, seed);
    let (mut lo, mut hi) = (lo_db, hi_db);
    if f(lo)? < target || f(hi)? > target {
        return Err(Error::NonConvergence(format!("outage {target} not bracketed by [{lo_db}, {hi_db}] dB")));
    }
    while hi - lo > 0.01 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(dmt_naf(0.0), 2.0);
        assert_eq!(dmt_naf(0.5), 0.5);
        assert_eq!(dmt_naf(0.75), 0.25);
        assert_eq!(dmt_ddf(0.25), 1.5);
        assert_eq!(dmt_ddf(0.5), 1.0);
        assert!((dmt_ddf(0.8) - 0.25).abs() < 1e-15);
        assert_eq!(dmt_cma(0.0), 2.0);
        assert_eq!(dmt_cma(1.0), 0.0);
        assert_eq!(dmt_cma(0.5), 1.0);
        assert_eq!(dmt_mimo_optimal(1, 1, 0.3), 0.7);
        assert_eq!(dmt_mimo_optimal(2, 2, 0.0), 4.0);
        assert_eq!(dmt_mimo_optimal(2, 2, 1.0), 1.0);
        assert_eq!(dmt_mimo_optimal(2, 2, 2.0), 0.0);
    }

    #[test]
    fn finite_fraction_example() {
        assert!((dmt_ddf_finite(0.5, &[0.5, 2.0 / 3.0]) - 0.75).abs() < 1e-15);
        assert_eq!(dmt_ddf_finite(0.0, &[0.5, 2.0 / 3.0]), 2.0);
    }

    #[test]
    fn small_pareto_sets() {
        assert_eq!(pareto_fractions(1).unwrap(), vec![0.5]);
        let f = pareto_fractions(2).unwrap();
        assert!((f[0] - 0.5).abs() < 1e-12 && (f[1] - 2.0 / 3.0).abs() < 1e-12);
        for n in 3..=12 {
            let f = pareto_fractions(n).unwrap();
            assert!(pareto_residual(&f) < 1e-12, "n={n}");
            assert!(f.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn pareto_sets_follow_closed_form() {
        for n in 1..=8 {
            let f = pareto_fractions(n).unwrap();
            let last = f[n - 1];
            for i in 0..=100 {
                let r = i as f64 / 100.0;
                assert!((dmt_ddf_finite(r, &f) - dmt_ddf_pareto(r, last)).abs() < 1e-9, "n={n} r={r}");
            }
        }
    }

    #[test]
    fn dense_fractions_approach_free_start() {
        // Evenly spaced in (1 - f)/f.
        let f: Vec<f64> = (0..16).map(|j| 1.0 / (2.0 - j as f64 / 16.0)).collect();
        for i in 0..=90 {
            let r = i as f64 / 100.0;
            assert!((dmt_ddf_finite(r, &f) - dmt_ddf(r)).abs() < 0.05, "r={r}");
        }
    }

    #[test]
    fn dominance_relations() {
        let naf = DmtCurve::new(DmtKind::Naf).unwrap();
        let ddf = DmtCurve::new(DmtKind::Ddf).unwrap();
        assert!(uniformly_dominates(&naf, &naf));
        assert!(!pareto_dominates(&naf, &naf));
        assert!(uniformly_dominates(&ddf, &naf));
        assert!(pareto_dominates(&ddf, &naf));
        assert!(!uniformly_dominates(&naf, &ddf));
        let p = DmtCurve::new(DmtKind::DdfFinite(pareto_fractions(2).unwrap())).unwrap();
        let alt = DmtCurve::new(DmtKind::DdfFinite(vec![0.5, 0.8])).unwrap();
        assert!(!uniformly_dominates(&p, &alt));
        assert!(!uniformly_dominates(&alt, &p));
        assert!(DmtCurve::new(DmtKind::DdfFinite(vec![0.7, 0.6])).is_err());
    }

    #[test]
    fn outage_limits() {
        let f = [0.5, 2.0 / 3.0];
        assert_eq!(outage_ddf(10.0, 0.0, &f, 12, 2.0, 1000, 1).unwrap(), 0.0);
        assert!(outage_ddf(80.0, 2.0, &f, 12, 2.0, 10_000, 1).unwrap() < 1e-3);
        let lo = outage_ddf(10.0, 2.0, &f, 12, 2.0, 20_000, 1).unwrap();
        let hi = outage_ddf(20.0, 2.0, &f, 12, 2.0, 20_000, 1).unwrap();
        assert!(hi < lo);
    }

    proptest! {
        #[test]
        fn curves_are_monotone(r in 0.0f64..1.0, dr in 0.0f64..0.1) {
            let s = (r + dr).min(1.0);
            prop_assert!(dmt_naf(s) <= dmt_naf(r) + 1e-15);
            prop_assert!(dmt_ddf(s) <= dmt_ddf(r) + 1e-15);
            prop_assert!(dmt_cma(s) <= dmt_cma(r) + 1e-15);
            let f = [0.5, 2.0 / 3.0, 0.9];
            prop_assert!(dmt_ddf_finite(s, &f) <= dmt_ddf_finite(r, &f) + 1e-12);
            prop_assert!(dmt_mimo_optimal(2, 3, 2.0 * s) <= dmt_mimo_optimal(2, 3, 2.0 * r) + 1e-12);
        }

        #[test]
        fn finite_fractions_never_beat_free_start(r in 0.0f64..1.0) {
            let f = pareto_fractions(4).unwrap();
            prop_assert!(dmt_ddf_finite(r, &f) <= dmt_ddf(r) + 1e-12);
            prop_assert!(dmt_ddf_finite(r, &f) >= dmt_naf(r) - 1e-12);
        }
    }
}
