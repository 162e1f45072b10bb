//! Non-orthogonal amplify-and-forward relaying with Golden-coded
//! cooperation frames.
//!
//! In frame `k` the source sends `(x1, x2)`. The destination hears
//! `y1 = g1 x1 + v1` and `y2 = g1 x2 + g2 b (h x1 + w) + v2`; the second
//! observation is rescaled so its noise has variance `sigma_v^2` again.
//! Pairs of frames carry one Golden block. With an outer code the whole
//! codeword is decoded as one lattice; otherwise each Golden block is
//! decoded on its own.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{complex_gaussian, ChannelParams, RelayRealization};
use crate::decoder::{fano_decode, preprocess_lattice, DecoderConfig, LatticeModel, SearchOrder};
use crate::error::{Error, Result};
use crate::lattice::{amplitude_scale, map_to_amplitudes, pair_to_complex, ConvCode, LatticeCode};
use crate::mathkit::{embed_complex, embed_vector, CMat, RMat};
use crate::record::TrialRecord;
use crate::spacetime::golden_generator_real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NafMode {
    GoldenOnly,
    GoldenCc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RelayGain {
    /// Full relay power: `b = sqrt(E / (|h|^2 E + sigma_w^2))`.
    MaxPower,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NafConfig {
    /// Cooperation frames per codeword (two channel uses each); even.
    pub frames: usize,
    pub q: u32,
    pub mode: NafMode,
    pub gain: RelayGain,
    pub decoder: DecoderConfig,
    /// When false no noise is added (the receiver still assumes it).
    pub noise: bool,
}

impl NafConfig {
    /// Configuration for a rate class of 2, 4 or 6 bits per channel use and
    /// a codeword of `frame_len` channel uses.
    pub fn for_rate(bpcu: u32, mode: NafMode, frame_len: usize) -> Result<Self> {
        let q = match (bpcu, mode) {
            (2, NafMode::GoldenOnly) => 2,
            (4, NafMode::GoldenOnly) => 4,
            (6, NafMode::GoldenOnly) => 8,
            (2, NafMode::GoldenCc) => 5,
            (4, NafMode::GoldenCc) => 17,
            (6, NafMode::GoldenCc) => 67,
            _ => return Err(Error::InvalidConfig(format!("unsupported rate {bpcu}"))),
        };
        if !frame_len.is_multiple_of(4) || frame_len == 0 {
            return Err(Error::InvalidConfig(format!(
                "frame length must be a positive multiple of 4, got {frame_len}"
            )));
        }
        Ok(NafConfig {
            frames: frame_len / 2,
            q,
            mode,
            gain: RelayGain::MaxPower,
            decoder: DecoderConfig::clamped(),
            noise: true,
        })
    }
}

/// `b = sqrt(E / (|h|^2 E + sigma_w^2))`, which makes the relay's average
/// output power `E`.
pub fn max_power_repetition_gain(h: Complex64, sigma_w2: f64, energy: f64) -> f64 {
    (energy / (h.norm_sqr() * energy + sigma_w2)).sqrt()
}

/// Effective 2x2 channel of one cooperation frame after rescaling the
/// second observation; `c = sigma_v^2 / sigma_w^2`.
pub fn build_effective_channel(g1: Complex64, g2: Complex64, h: Complex64, b: f64, c: f64) -> CMat {
    let s = (c / ((g2 * b).norm_sqr() + c)).sqrt();
    let z = Complex64::new(0.0, 0.0);
    CMat::from_rows(&[vec![g1, z], vec![g2 * b * h * s, g1 * s]]).expect("2x2")
}

/// A NAF configuration with its codes prepared.
#[derive(Debug, Clone)]
pub struct NafScheme {
    cfg: NafConfig,
    code: LatticeCode,
    lattice: LatticeModel,
}

impl NafScheme {
    pub fn new(cfg: NafConfig) -> Result<Self> {
        if cfg.frames == 0 || !cfg.frames.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "number of cooperation frames must be even, got {}",
                cfg.frames
            )));
        }
        cfg.decoder.validate()?;
        let m = 4 * cfg.frames;
        let code = match cfg.mode {
            NafMode::GoldenOnly => LatticeCode::uncoded(8, cfg.q),
            NafMode::GoldenCc => LatticeCode::construction_a(&ConvCode::tuned(cfg.q, 2)?, m)?,
        };
        let lattice = LatticeModel::centered(&code);
        Ok(NafScheme { cfg, code, lattice })
    }

    pub fn config(&self) -> &NafConfig {
        &self.cfg
    }

    pub fn payload_len(&self) -> usize {
        match self.cfg.mode {
            NafMode::GoldenOnly => 4 * self.cfg.frames,
            NafMode::GoldenCc => self.code.info_len(),
        }
    }

    /// Information bits per channel use.
    pub fn achieved_rate(&self) -> f64 {
        self.payload_len() as f64 * (self.cfg.q as f64).log2() / (2 * self.cfg.frames) as f64
    }

    pub fn random_payload<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u32> {
        (0..self.payload_len()).map(|_| rng.random_range(0..self.cfg.q)).collect()
    }

    /// Integer codeword coordinates in `[0, Q)`.
    fn codeword(&self, payload: &[u32]) -> Result<Vec<i64>> {
        match self.cfg.mode {
            NafMode::GoldenOnly => Ok(payload.iter().map(|&s| s as i64).collect()),
            NafMode::GoldenCc => {
                let u = self.code.encode_info(payload)?;
                Ok(self.code.lattice_point(&u))
            }
        }
    }

    /// Runs one codeword through the relay channel and the decoder.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        params: &ChannelParams,
        real: &RelayRealization,
        payload: &[u32],
        rng: &mut R,
    ) -> Result<TrialRecord> {
        if payload.len() != self.payload_len() {
            return Err(Error::DimensionMismatch(format!(
                "payload of {} symbols, expected {}",
                payload.len(),
                self.payload_len()
            )));
        }
        let b = match self.cfg.gain {
            RelayGain::MaxPower => max_power_repetition_gain(real.h, params.sigma_w2, params.energy),
            RelayGain::Fixed(b) => b,
        };
        let x = self.codeword(payload)?;
        let symbols = pair_to_complex(&map_to_amplitudes(x.iter().copied(), self.cfg.q));
        let g = crate::spacetime::golden_generator();
        let sent: Vec<Complex64> = symbols
            .chunks_exact(4)
            .flat_map(|u| g.mul_vec(u).expect("4x4 times 4"))
            .collect();

        let (sv, sw) = if self.cfg.noise {
            (params.sigma_v2.sqrt(), params.sigma_w2.sqrt())
        } else {
            (0.0, 0.0)
        };
        let s = (params.c / ((real.g2 * b).norm_sqr() + params.c)).sqrt();
        let mut y = Vec::with_capacity(sent.len());
        for f in sent.chunks_exact(2) {
            let y1 = real.g1 * f[0] + complex_gaussian(rng) * sv;
            let r = real.h * f[0] + complex_gaussian(rng) * sw;
            let y2 = real.g1 * f[1] + real.g2 * b * r + complex_gaussian(rng) * sv;
            y.push(y1);
            y.push(y2 * s);
        }
        let y = embed_vector(&y);

        let frame = embed_complex(&{
            let hf = build_effective_channel(real.g1, real.g2, real.h, b, params.c);
            let z = Complex64::new(0.0, 0.0);
            CMat::from_fn(4, 4, |i, j| if i / 2 == j / 2 { hf[(i % 2, j % 2)] } else { z })
        })
        .scaled(amplitude_scale(self.cfg.q) * std::f64::consts::FRAC_1_SQRT_2);
        let block = frame.mul(&golden_generator_real())?;
        let noise_var = params.sigma_v2 / 2.0;

        match self.cfg.mode {
            NafMode::GoldenOnly => {
                let mut parts = Vec::with_capacity(self.cfg.frames / 2);
                for (k, yk) in y.chunks_exact(8).enumerate() {
                    let sys = preprocess_lattice(&block, &self.lattice, yk, noise_var, SearchOrder::Sorted)?;
                    let res = fano_decode(&sys, &self.cfg.decoder)?;
                    let sent_k = &payload[8 * k..8 * k + 8];
                    let dec: Option<Vec<u32>> = self.code.info_of(&res.u);
                    parts.push(TrialRecord::from_decode(sent_k, dec.as_deref(), self.cfg.q, &res));
                }
                Ok(TrialRecord::merge(&parts))
            }
            NafMode::GoldenCc => {
                let h = RMat::block_diag(&vec![block; self.cfg.frames / 2]);
                let sys = preprocess_lattice(&h, &self.lattice, &y, noise_var, SearchOrder::Forward)?;
                let res = fano_decode(&sys, &self.cfg.decoder)?;
                let dec = self.code.info_of(&res.u);
                Ok(TrialRecord::from_decode(payload, dec.as_deref(), self.cfg.q, &res))
            }
        }
    }
}
