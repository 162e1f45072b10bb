//! Quasi-static flat Rayleigh channels, noise, and SNR bookkeeping.
//!
//! Symbol energy is fixed at `E = 1`; an SNR of `rho` sets the destination
//! noise variance to `1 / rho`. Inter-user links are `c` times cleaner.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub snr_db: f64,
    /// Linear destination SNR `rho = E / sigma_v^2`.
    pub snr: f64,
    pub energy: f64,
    /// Destination noise variance (complex).
    pub sigma_v2: f64,
    /// Inter-user noise variance (complex).
    pub sigma_w2: f64,
    /// `sigma_v^2 / sigma_w^2`.
    pub c: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Variances for a destination SNR of `snr_db` and noise ratio `c`.
pub fn snr_to_variances(snr_db: f64, c: f64) -> Result<ChannelParams> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise ratio must be positive, got {c}")));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidConfig(format!("SNR must be finite, got {snr_db}")));
    }
    let snr = db_to_linear(snr_db);
    let sigma_v2 = 1.0 / snr;
    Ok(ChannelParams {
        snr_db,
        snr,
        energy: 1.0,
        sigma_v2,
        sigma_w2: sigma_v2 / c,
        c,
    })
}

/// Circularly symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Gains of the relay channel: source to destination `g1`, relay to
/// destination `g2`, source to relay `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayRealization {
    pub g1: Complex64,
    pub g2: Complex64,
    pub h: Complex64,
}

/// Gains of the cooperative multiple-access channel: source `j` to the
/// destination `g_j`, inter-source `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmaRealization {
    pub g1: Complex64,
    pub g2: Complex64,
    pub h: Complex64,
}

pub fn sample_relay<R: Rng + ?Sized>(rng: &mut R) -> RelayRealization {
    RelayRealization {
        g1: complex_gaussian(rng),
        g2: complex_gaussian(rng),
        h: complex_gaussian(rng),
    }
}

pub fn sample_cma<R: Rng + ?Sized>(rng: &mut R) -> CmaRealization {
    CmaRealization {
        g1: complex_gaussian(rng),
        g2: complex_gaussian(rng),
        h: complex_gaussian(rng),
    }
}

/// Adds i.i.d. complex Gaussian noise of the given variance.
pub fn add_noise<R: Rng + ?Sized>(signal: &[Complex64], variance: f64, rng: &mut R) -> Vec<Complex64> {
    assert!(variance >= 0.0, "negative noise variance");
    let s = variance.sqrt();
    signal.iter().map(|&x| x + complex_gaussian(rng) * s).collect()
}

/// Independent random stream for one trial. Streams depend only on the
/// master seed and the `(point, trial)` indices.
pub fn trial_rng(master_seed: u64, point: u32, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((point as u64) << 40) ^ trial);
    rng
}
