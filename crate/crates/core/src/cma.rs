//! Two-user cooperative multiple access with non-orthogonal amplify and
//! forward (CMA-NAF).
//!
//! Symbol intervals `tau = 1..N` alternate between the users, user 1 first.
//! In each interval the active user sends `a` times its own symbol plus `b`
//! times what it heard from its partner in the previous interval. The
//! destination stacks its observations newest first, which makes the
//! effective channel upper triangular. The final interval carries no new
//! symbol: user 2 only forwards user 1's last one, so every symbol reaches
//! the destination over both paths.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{complex_gaussian, sample_cma, trial_rng, ChannelParams, CmaRealization};
use crate::decoder::{fano_decode, preprocess_lattice, DecoderConfig, LatticeModel, SearchOrder};
use crate::error::{Error, Result};
use crate::lattice::{amplitude_scale, map_to_amplitudes, pair_to_complex, ConvCode, LatticeCode};
use crate::mathkit::{cholesky, embed_complex, embed_vector, solve_lower_in_place, solve_lower_vec, CMat};
use crate::record::TrialRecord;

/// Broadcast gain `a` and repetition gain `b`, shared by both users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmaGains {
    pub a: f64,
    pub b: f64,
}

/// Gain rule used by the simulator: `b = beta / sqrt(|h|^2 + sigma_w^2)`.
/// Each user scales what it heard to power `beta^2` times the partner's,
/// so with `a^2 + beta^2 <= 1` the transmit power never exceeds `E = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPolicy {
    pub a: f64,
    pub beta: f64,
}

impl GainPolicy {
    pub fn gains(&self, h: Complex64, sigma_w2: f64) -> CmaGains {
        let d = (h.norm_sqr() + sigma_w2).sqrt();
        CmaGains { a: self.a, b: if d > 0.0 { self.beta / d } else { 0.0 } }
    }

    pub fn is_feasible(&self) -> bool {
        self.a >= 0.0 && self.beta >= 0.0 && self.a * self.a + self.beta * self.beta <= 1.0 + 1e-12
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_feasible() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "gains a={} beta={} exceed the power budget",
                self.a, self.beta
            )))
        }
    }
}

/// Effective system `y = H1 x + B w + v` in destination order
/// `[x_{2,N/2}, x_{1,N/2}, .., x_{2,1}, x_{1,1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaSystem {
    pub h1: CMat,
    pub b: CMat,
    pub sigma: CMat,
    pub dg: Vec<Complex64>,
}

fn check_frame(n: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("frame of {n} intervals must be even and at least 2")));
    }
    Ok(())
}

/// Destination gain of row `i` (0-based, newest first).
fn dest_gain(real: &CmaRealization, n: usize, i: usize) -> Complex64 {
    // Interval tau = n - i; odd intervals belong to user 1.
    if (n - i) % 2 == 1 {
        real.g1
    } else {
        real.g2
    }
}

pub fn build_cma_system(
    gains: &CmaGains,
    real: &CmaRealization,
    n: usize,
    params: &ChannelParams,
) -> Result<CmaSystem> {
    check_frame(n)?;
    let bh = real.h * gains.b;
    let dg: Vec<Complex64> = (0..n).map(|i| dest_gain(real, n, i)).collect();
    let zero = Complex64::new(0.0, 0.0);
    let h1 = CMat::from_fn(n, n, |i, j| {
        if j >= i {
            dg[i] * gains.a * bh.powu((j - i) as u32)
        } else {
            zero
        }
    });
    let b = CMat::from_fn(n, n - 1, |i, j| {
        if j >= i {
            dg[i] * gains.b * bh.powu((j - i) as u32)
        } else {
            zero
        }
    });
    let mut sigma = b.mul(&b.adjoint())?.scaled(Complex64::new(params.sigma_w2, 0.0));
    for i in 0..n {
        sigma[(i, i)] += params.sigma_v2;
    }
    Ok(CmaSystem { h1, b, sigma, dg })
}

/// Transmitted signals `t_tau` in time order from the per-interval symbols
/// `xt` and the noise `w[tau - 1]` heard by the user active at `tau + 1`.
pub fn transmissions(gains: &CmaGains, h: Complex64, xt: &[Complex64], w: &[Complex64]) -> Vec<Complex64> {
    let mut t: Vec<Complex64> = Vec::with_capacity(xt.len());
    for (k, &x) in xt.iter().enumerate() {
        let own = x * gains.a;
        let v = match k {
            0 => own,
            _ => own + (h * t[k - 1] + w[k - 1]) * gains.b,
        };
        t.push(v);
    }
    t
}

/// Interleaves the users' symbols into interval order
/// `x_{1,1}, x_{2,1}, x_{1,2}, ..`.
fn interleave(x1: &[Complex64], x2: &[Complex64]) -> Vec<Complex64> {
    x1.iter().zip(x2).flat_map(|(&a, &b)| [a, b]).collect()
}

/// Destination observations, newest first, for user symbols `x1`, `x2`
/// (`N/2` each).
pub fn generate_signals<R: Rng + ?Sized>(
    gains: &CmaGains,
    real: &CmaRealization,
    x1: &[Complex64],
    x2: &[Complex64],
    params: &ChannelParams,
    noise: bool,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if x1.len() != x2.len() || x1.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "user streams of {} and {} symbols",
            x1.len(),
            x2.len()
        )));
    }
    let xt = interleave(x1, x2);
    let n = xt.len();
    let (sv, sw) = if noise { (params.sigma_v2.sqrt(), params.sigma_w2.sqrt()) } else { (0.0, 0.0) };
    let w: Vec<Complex64> = (0..n - 1).map(|_| complex_gaussian(rng) * sw).collect();
    let t = transmissions(gains, real.h, &xt, &w);
    let mut y: Vec<Complex64> = t
        .iter()
        .enumerate()
        .map(|(k, &tk)| {
            let g = if k % 2 == 0 { real.g1 } else { real.g2 };
            g * tk + complex_gaussian(rng) * sv
        })
        .collect();
    y.reverse();
    Ok(y)
}

/// Noise whitener `U^{-1}` for `Sigma = U U^H` with `U` upper triangular,
/// so that whitening keeps upper-triangular channels upper triangular.
#[derive(Debug, Clone)]
pub struct Whitener {
    /// Cholesky factor of the index-reversed covariance.
    l: CMat,
}

impl Whitener {
    pub fn new(sigma: &CMat) -> Result<Self> {
        let n = sigma.rows();
        let rev = CMat::from_fn(n, n, |i, j| sigma[(n - 1 - i, n - 1 - j)]);
        Ok(Whitener { l: cholesky(&rev)? })
    }

    pub fn apply_vec(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        let rev: Vec<Complex64> = y.iter().rev().copied().collect();
        let mut out = solve_lower_vec(&self.l, &rev)?;
        out.reverse();
        Ok(out)
    }

    pub fn apply_mat(&self, h: &CMat) -> Result<CMat> {
        let (n, m) = (h.rows(), h.cols());
        let mut rev = CMat::from_fn(n, m, |i, j| h[(n - 1 - i, j)]);
        solve_lower_in_place(&self.l, &mut rev)?;
        Ok(CMat::from_fn(n, m, |i, j| rev[(n - 1 - i, j)]))
    }

    /// `log2 det Sigma`.
    pub fn log2_det(&self) -> f64 {
        (0..self.l.rows()).map(|i| 2.0 * self.l[(i, i)].norm().log2()).sum()
    }
}

/// Whitened channel and observation.
pub fn whiten(sys: &CmaSystem, y: &[Complex64]) -> Result<(CMat, Vec<Complex64>)> {
    let w = Whitener::new(&sys.sigma)?;
    Ok((w.apply_mat(&sys.h1)?, w.apply_vec(y)?))
}

/// Position of each real coordinate of the joint vector: `(user, index)`
/// into that user's lattice. The joint vector follows destination order
/// with the relay-only interval left out.
pub fn joint_layout(n: usize) -> Result<Vec<(usize, usize)>> {
    check_frame(n)?;
    let mut out = Vec::with_capacity(2 * (n - 1));
    for i in 1..n {
        let tau = n - i;
        let (user, k) = if tau % 2 == 1 { (0, (tau - 1) / 2) } else { (1, tau / 2 - 1) };
        out.push((user, 2 * k));
        out.push((user, 2 * k + 1));
    }
    Ok(out)
}

fn joint_permutation(n: usize) -> Result<Vec<usize>> {
    Ok(joint_layout(n)?
        .into_iter()
        .map(|(user, k)| if user == 0 { k } else { n + k })
        .collect())
}

/// Joint generator of the two user lattices (dimensions `N` and `N - 2`)
/// with rows and columns multiplexed into destination order.
pub fn joint_generator(user1: &LatticeModel, user2: &LatticeModel, n: usize) -> Result<LatticeModel> {
    if user1.dim() != n || user2.dim() + 2 != n {
        return Err(Error::DimensionMismatch(format!(
            "user lattices of dimension {} and {} for a frame of {n}",
            user1.dim(),
            user2.dim()
        )));
    }
    LatticeModel::block_diag(&[user1.clone(), user2.clone()])?.permuted(&joint_permutation(n)?)
}

/// Joint integer vector from the users' vectors.
pub fn mux(u1: &[i64], u2: &[i64], n: usize) -> Result<Vec<i64>> {
    if u1.len() != n || u2.len() + 2 != n {
        return Err(Error::DimensionMismatch("user vector lengths".into()));
    }
    let both: Vec<i64> = u1.iter().chain(u2).copied().collect();
    Ok(joint_permutation(n)?.into_iter().map(|p| both[p]).collect())
}

/// Inverse of [`mux`].
pub fn demux(u: &[i64], n: usize) -> Result<(Vec<i64>, Vec<i64>)> {
    if u.len() + 2 != 2 * n {
        return Err(Error::DimensionMismatch("joint vector length".into()));
    }
    let mut both = vec![0; u.len()];
    for (k, p) in joint_permutation(n)?.into_iter().enumerate() {
        both[p] = u[k];
    }
    let u2 = both.split_off(n);
    Ok((both, u2))
}

/// Per-user symbol counts of the coded mode use the rate-1/2 code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmaMode {
    Uncoded,
    Coded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaConfig {
    /// Symbol intervals per codeword (`N`, even).
    pub frame: usize,
    pub q: u32,
    pub mode: CmaMode,
    pub policy: GainPolicy,
    pub decoder: DecoderConfig,
    pub noise: bool,
}

/// Gains used when none are given: the optimum found by [`optimize_gains`]
/// at 2 bits per interval, which barely moves between 12 and 20 dB.
pub const DEFAULT_POLICY: GainPolicy = GainPolicy { a: 0.91, beta: 0.41 };

impl CmaConfig {
    /// Configuration for a nominal rate of 2, 4 or 6 bits per channel use.
    pub fn for_rate(bpcu: u32, mode: CmaMode, frame: usize) -> Result<Self> {
        let q = match (mode, bpcu) {
            (CmaMode::Uncoded, 2) => 2,
            (CmaMode::Uncoded, 4) => 4,
            (CmaMode::Uncoded, 6) => 8,
            (CmaMode::Coded, 2) => 5,
            (CmaMode::Coded, 4) => 17,
            (CmaMode::Coded, 6) => 67,
            _ => return Err(Error::InvalidConfig(format!("unsupported rate {bpcu}"))),
        };
        Ok(CmaConfig {
            frame,
            q,
            mode,
            policy: DEFAULT_POLICY,
            decoder: DecoderConfig::clamped(),
            noise: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_frame(self.frame)?;
        if self.mode == CmaMode::Coded && self.frame < 8 {
            return Err(Error::InvalidConfig("coded frames need at least 8 intervals".into()));
        }
        self.policy.validate()?;
        self.decoder.validate()
    }
}

#[derive(Debug, Clone)]
pub struct CmaScheme {
    cfg: CmaConfig,
    codes: [LatticeCode; 2],
    joint: LatticeModel,
}

impl CmaScheme {
    pub fn new(cfg: CmaConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.frame;
        let codes = match cfg.mode {
            CmaMode::Uncoded => [LatticeCode::uncoded(n, cfg.q), LatticeCode::uncoded(n - 2, cfg.q)],
            CmaMode::Coded => {
                let cc = ConvCode::tuned(cfg.q, 2)?;
                [LatticeCode::construction_a(&cc, n)?, LatticeCode::construction_a(&cc, n - 2)?]
            }
        };
        let joint = joint_generator(
            &LatticeModel::centered(&codes[0]),
            &LatticeModel::centered(&codes[1]),
            n,
        )?;
        Ok(CmaScheme { cfg, codes, joint })
    }

    pub fn config(&self) -> &CmaConfig {
        &self.cfg
    }

    pub fn payload_lens(&self) -> (usize, usize) {
        (self.codes[0].info_len(), self.codes[1].info_len())
    }

    /// Information bits per symbol interval, both users together.
    pub fn achieved_rate(&self) -> f64 {
        let (a, b) = self.payload_lens();
        (a + b) as f64 * (self.cfg.q as f64).log2() / self.cfg.frame as f64
    }

    pub fn random_payloads<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<u32>, Vec<u32>) {
        let (a, b) = self.payload_lens();
        let q = self.cfg.q;
        (
            (0..a).map(|_| rng.random_range(0..q)).collect(),
            (0..b).map(|_| rng.random_range(0..q)).collect(),
        )
    }

    fn symbols(&self, user: usize, payload: &[u32]) -> Result<Vec<Complex64>> {
        let code = &self.codes[user];
        let u = code.encode_info(payload)?;
        let x = code.lattice_point(&u);
        Ok(pair_to_complex(&map_to_amplitudes(x.iter().copied(), self.cfg.q)))
    }

    /// One codeword of both users through the channel and the joint decoder.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        params: &ChannelParams,
        real: &CmaRealization,
        payloads: (&[u32], &[u32]),
        rng: &mut R,
    ) -> Result<TrialRecord> {
        let (la, lb) = self.payload_lens();
        if payloads.0.len() != la || payloads.1.len() != lb {
            return Err(Error::DimensionMismatch("payload lengths".into()));
        }
        let n = self.cfg.frame;
        let gains = self.cfg.policy.gains(real.h, params.sigma_w2);
        let x1 = self.symbols(0, payloads.0)?;
        let mut x2 = self.symbols(1, payloads.1)?;
        x2.push(Complex64::new(0.0, 0.0));
        let y = generate_signals(&gains, real, &x1, &x2, params, self.cfg.noise, rng)?;

        let sys = build_cma_system(&gains, real, n, params)?;
        let (hc, yc) = whiten(&sys, &y)?;
        let hc = CMat::from_fn(n, n - 1, |i, j| hc[(i, j + 1)]);
        let h = embed_complex(&hc).scaled(amplitude_scale(self.cfg.q) * std::f64::consts::FRAC_1_SQRT_2);
        let pre = preprocess_lattice(&h, &self.joint, &embed_vector(&yc), 0.5, SearchOrder::Reverse)?;
        let res = fano_decode(&pre, &self.cfg.decoder)?;

        let (u1, u2) = demux(&res.u, n)?;
        let decoded = match (self.codes[0].info_of(&u1), self.codes[1].info_of(&u2)) {
            (Some(a), Some(b)) => Some([a, b].concat()),
            _ => None,
        };
        let sent = [payloads.0, payloads.1].concat();
        Ok(TrialRecord::from_decode(&sent, decoded.as_deref(), self.cfg.q, &res))
    }
}

/// Mutual information in bits per codeword with Gaussian inputs of unit
/// energy, relay-only interval excluded: `[I(x1; y | x2), I(x2; y | x1),
/// I(x1, x2; y)]`, each `log2 det(Sigma + H_S H_S^H) - log2 det Sigma` over
/// the columns `S` of the users concerned.
pub fn mutual_information(gains: &CmaGains, real: &CmaRealization, n: usize, params: &ChannelParams) -> Result<[f64; 3]> {
    let sys = build_cma_system(gains, real, n, params)?;
    let base = Whitener::new(&sys.sigma)?.log2_det();
    let info = |cols: Vec<usize>| -> Result<f64> {
        let h = CMat::from_fn(n, cols.len(), |i, j| sys.h1[(i, cols[j])]);
        let total = sys.sigma.add(&h.mul(&h.adjoint())?)?;
        Ok(Whitener::new(&total)?.log2_det() - base)
    };
    // Destination row i holds user 1 when n - i is odd; row 0 is relay-only.
    let user1: Vec<usize> = (1..n).filter(|i| (n - i) % 2 == 1).collect();
    let user2: Vec<usize> = (1..n).filter(|i| (n - i).is_multiple_of(2)).collect();
    Ok([info(user1)?, info(user2)?, info((1..n).collect())?])
}

/// Fraction of `draws` channel realizations in outage at a sum rate of
/// `rate` bits per interval split evenly between the users: either user
/// alone, or both together, fall short of their share. Draw `d` uses the
/// stream `(seed, 0, d)`, so different gains see the same channels.
pub fn outage_probability(
    policy: &GainPolicy,
    params: &ChannelParams,
    n: usize,
    rate: f64,
    draws: u64,
    seed: u64,
) -> Result<f64> {
    let target = n as f64 * rate;
    let mut out = 0u64;
    for d in 0..draws {
        let real = sample_cma(&mut trial_rng(seed, 0, d));
        let gains = policy.gains(real.h, params.sigma_w2);
        let [i1, i2, i12] = mutual_information(&gains, &real, n, params)?;
        if i1 < target / 2.0 || i2 < target / 2.0 || i12 < target {
            out += 1;
        }
    }
    Ok(out as f64 / draws.max(1) as f64)
}

/// Average per-user transmit power over `draws` frames with random
/// unit-energy symbols and channels.
pub fn measure_power(policy: &GainPolicy, params: &ChannelParams, n: usize, draws: u64, seed: u64) -> Result<f64> {
    check_frame(n)?;
    let (mut sum, mut count) = (0.0, 0u64);
    for d in 0..draws {
        let mut rng = trial_rng(seed, 1, d);
        let real = sample_cma(&mut rng);
        let gains = policy.gains(real.h, params.sigma_w2);
        let xt: Vec<Complex64> = (0..n).map(|_| complex_gaussian(&mut rng)).collect();
        let w: Vec<Complex64> = (0..n - 1).map(|_| complex_gaussian(&mut rng) * params.sigma_w2.sqrt()).collect();
        for t in transmissions(&gains, real.h, &xt, &w) {
            sum += t.norm_sqr();
            count += 1;
        }
    }
    Ok(sum / count.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainOptimum {
    pub policy: GainPolicy,
    pub outage: f64,
    /// Measured average transmit power per user.
    pub power: f64,
}

/// Grid search over the power-feasible `(a, beta)` pairs, step 0.05, then
/// once more at step 0.01 around the best coarse point. Ties go to the
/// larger `a`.
pub fn optimize_gains(
    params: &ChannelParams,
    n: usize,
    rate: f64,
    draws: u64,
    seed: u64,
) -> Result<GainOptimum> {
    check_frame(n)?;
    let eval = |pts: Vec<GainPolicy>| -> Result<(GainPolicy, f64)> {
        let scored: Vec<(GainPolicy, f64)> = pts
            .into_par_iter()
            .map(|p| outage_probability(&p, params, n, rate, draws, seed).map(|o| (p, o)))
            .collect::<Result<_>>()?;
        scored
            .into_iter()
            .min_by(|x, y| x.1.total_cmp(&y.1).then(y.0.a.total_cmp(&x.0.a)))
            .ok_or_else(|| Error::Infeasible("no power-feasible gains on the grid".into()))
    };
    let grid = |a0: f64, a1: f64, b0: f64, b1: f64, step: f64| -> Vec<GainPolicy> {
        let na = ((a1 - a0) / step).round() as i64;
        let nb = ((b1 - b0) / step).round() as i64;
        let mut pts = Vec::new();
        for i in 0..=na {
            for j in 0..=nb {
                let snap = |v: f64| (v * 100.0).round() / 100.0;
                let p = GainPolicy { a: snap(a0 + i as f64 * step), beta: snap(b0 + j as f64 * step) };
                if p.a > 0.0 && p.is_feasible() {
                    pts.push(p);
                }
            }
        }
        pts
    };
    let (coarse, _) = eval(grid(0.0, 1.0, 0.0, 1.0, 0.05))?;
    let fine = grid(
        (coarse.a - 0.05).max(0.0),
        (coarse.a + 0.05).min(1.0),
        (coarse.beta - 0.05).max(0.0),
        (coarse.beta + 0.05).min(1.0),
        0.01,
    );
    let (policy, outage) = eval(fine)?;
    let power = measure_power(&policy, params, n, 1000, seed)?;
    Ok(GainOptimum { policy, outage, power })
}
