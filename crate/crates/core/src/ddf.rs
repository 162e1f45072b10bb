//! Modified dynamic decode-and-forward relaying.
//!
//! The source sends a CRC-protected, rate-1/4 lattice codeword over `M`
//! sub-blocks of `T` channel uses. The four code streams are sent one after
//! another (all systematic symbols first, then each parity stream), so the
//! first half of the codeword already holds a rate-1/2 code. The relay may
//! start only at the allowed fractions `f_j` of the codeword: it decodes the
//! prefix heard so far and, if the CRC passes, spends the rest of the
//! codeword sending Alamouti-paired conjugates of the source's remaining
//! symbols. The destination combines each pair back into a scalar channel.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{complex_gaussian, ChannelParams, RelayRealization};
use crate::decoder::{fano_decode, preprocess_lattice, DecodeStatus, DecoderConfig, LatticeModel, SearchOrder};
use crate::error::{Error, Result};
use crate::framing::{crc_append, crc_check, crc_symbol_count};
use crate::lattice::{amplitude_scale, map_to_amplitudes, pair_to_complex, ConvCode, LatticeCode};
use crate::mathkit::{embed_vector, RMat};
use crate::record::TrialRecord;
use crate::spacetime::{alamouti_combine, alamouti_retransmit};

/// Wait, in sub-blocks, after which the relay holds enough mutual
/// information to decode a rate-`rate` codeword:
/// `min{M, max{M/2, ceil(M R / log2(1 + |h|^2 c rho))}}`.
pub fn required_wait(rate: f64, h_gain: f64, c: f64, snr: f64, subblocks: usize) -> f64 {
    let m = subblocks as f64;
    let cap = (1.0 + h_gain * c * snr).log2();
    if !(cap > 0.0) {
        return m;
    }
    m.min((m / 2.0).max((m * rate / cap).ceil()))
}

/// Smallest allowed start `f_j M` that is at least `required`; `M` when
/// there is none.
pub fn quantize_wait(required: f64, fractions: &[f64], subblocks: usize) -> usize {
    let m = subblocks as f64;
    fractions
        .iter()
        .map(|f| (f * m).round() as usize)
        .find(|&n| n as f64 >= required - 1e-9)
        .unwrap_or(subblocks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdfConfig {
    pub subblocks: usize,
    pub symbols_per_subblock: usize,
    /// Target rate in bits per channel use, used by the waiting rule.
    pub rate: f64,
    pub fractions: Vec<f64>,
    pub q: u32,
    pub decoder: DecoderConfig,
    pub noise: bool,
}

impl DdfConfig {
    /// Two bits per channel use over `Z_17` with the three-segment fraction
    /// set `{1/2, 2/3}`.
    pub fn standard(subblocks: usize, symbols_per_subblock: usize) -> Self {
        DdfConfig {
            subblocks,
            symbols_per_subblock,
            rate: 2.0,
            fractions: vec![0.5, 2.0 / 3.0],
            q: 17,
            decoder: DecoderConfig::clamped(),
            noise: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.subblocks == 0 || self.symbols_per_subblock == 0 {
            return bad("sub-block counts must be positive".into());
        }
        if !self.symbols_per_subblock.is_multiple_of(2) {
            return bad("symbols per sub-block must be even".into());
        }
        if !(self.rate > 0.0) {
            return bad(format!("rate must be positive, got {}", self.rate));
        }
        if self.fractions.is_empty() {
            return bad("at least one waiting fraction is needed".into());
        }
        let mut prev = 0.0;
        for &f in &self.fractions {
            if !(f > prev && f < 1.0) {
                return bad(format!("fractions must increase strictly inside (0, 1): {:?}", self.fractions));
            }
            let n = f * self.subblocks as f64;
            if (n - n.round()).abs() > 1e-9 {
                return bad(format!("fraction {f} does not land on a sub-block boundary of {}", self.subblocks));
            }
            prev = f;
        }
        if self.fractions[0] < 0.5 - 1e-12 {
            return bad("the first fraction must be at least 1/2".into());
        }
        self.decoder.validate()
    }
}

/// Relay decoder for one allowed start.
#[derive(Debug, Clone)]
struct PrefixDecoder {
    /// Channel uses heard.
    symbols: usize,
    code: LatticeCode,
    lattice: LatticeModel,
    /// Column of each heard real coordinate, in transmission order.
    column: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelayOutcome {
    /// Sub-blocks waited before transmitting; `M` when silent.
    pub wait: usize,
    /// The relay's decoded information frame (payload and CRC) when it
    /// accepted one.
    pub word: Option<Vec<u32>>,
    pub attempts: usize,
}

#[derive(Debug, Clone)]
pub struct DdfScheme {
    cfg: DdfConfig,
    code: LatticeCode,
    lattice: LatticeModel,
    /// Lattice coordinate of each transmitted real, in transmission order.
    tx_coord: Vec<usize>,
    prefixes: Vec<PrefixDecoder>,
}

impl DdfScheme {
    pub fn new(cfg: DdfConfig) -> Result<Self> {
        cfg.validate()?;
        let cc = ConvCode::tuned(cfg.q, 4)?;
        let uses = cfg.subblocks * cfg.symbols_per_subblock;
        let m = 2 * uses;
        let code = LatticeCode::construction_a(&cc, m)?;
        if code.info_len() <= crc_symbol_count(cfg.q) {
            return Err(Error::InvalidConfig("codeword too short for the CRC".into()));
        }
        let steps = m / 4;
        let tx_coord: Vec<usize> = (0..m).map(|k| 4 * (k % steps) + k / steps).collect();
        let mut prefixes = Vec::new();
        for &f in &cfg.fractions {
            let n = (f * cfg.subblocks as f64).round() as usize;
            let symbols = n * cfg.symbols_per_subblock;
            let mut obs: Vec<usize> = tx_coord[..2 * symbols].to_vec();
            obs.sort_unstable();
            let sub = code.restrict(&obs)?;
            let column = tx_coord[..2 * symbols]
                .iter()
                .map(|c| obs.binary_search(c).expect("observed"))
                .collect();
            prefixes.push(PrefixDecoder {
                symbols,
                lattice: LatticeModel::centered(&sub),
                code: sub,
                column,
            });
        }
        let lattice = LatticeModel::centered(&code);
        Ok(DdfScheme { cfg, code, lattice, tx_coord, prefixes })
    }

    pub fn config(&self) -> &DdfConfig {
        &self.cfg
    }

    pub fn channel_uses(&self) -> usize {
        self.cfg.subblocks * self.cfg.symbols_per_subblock
    }

    pub fn payload_len(&self) -> usize {
        self.code.info_len() - crc_symbol_count(self.cfg.q)
    }

    /// Payload bits per channel use (CRC excluded).
    pub fn achieved_rate(&self) -> f64 {
        self.payload_len() as f64 * (self.cfg.q as f64).log2() / self.channel_uses() as f64
    }

    pub fn random_payload<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u32> {
        (0..self.payload_len()).map(|_| rng.random_range(0..self.cfg.q)).collect()
    }

    /// Channel symbols, in transmission order, of an information frame.
    pub fn transmit_symbols(&self, info: &[u32]) -> Result<Vec<Complex64>> {
        let u = self.code.encode_info(info)?;
        let x = self.code.lattice_point(&u);
        let amps = map_to_amplitudes(x.iter().copied(), self.cfg.q);
        let tx: Vec<f64> = self.tx_coord.iter().map(|&c| amps[c]).collect();
        Ok(pair_to_complex(&tx))
    }

    /// Real channel matrix for per-symbol complex gains `gains` over the
    /// coordinates given by `column` (one column index per real, in
    /// transmission order).
    fn diagonal_channel(&self, gains: &[Complex64], column: &[usize], cols: usize) -> RMat {
        let k = amplitude_scale(self.cfg.q) * std::f64::consts::FRAC_1_SQRT_2;
        let mut h = RMat::zeros(2 * gains.len(), cols);
        for (s, g) in gains.iter().enumerate() {
            let (a, b) = (column[2 * s], column[2 * s + 1]);
            h[(2 * s, a)] = g.re * k;
            h[(2 * s, b)] = -g.im * k;
            h[(2 * s + 1, a)] = g.im * k;
            h[(2 * s + 1, b)] = g.re * k;
        }
        h
    }

    /// One relay decoding attempt at allowed start `j` from the relay's
    /// observations `r` (transmission order). Returns the information frame
    /// when the CRC passes.
    pub fn relay_decode_attempt(
        &self,
        j: usize,
        r: &[Complex64],
        h: Complex64,
        params: &ChannelParams,
    ) -> Result<Option<Vec<u32>>> {
        let p = &self.prefixes[j];
        let heard = &r[..p.symbols];
        let hm = self.diagonal_channel(&vec![h; p.symbols], &p.column, p.code.dim());
        let sys = preprocess_lattice(&hm, &p.lattice, &embed_vector(heard), params.sigma_w2 / 2.0, SearchOrder::Forward)?;
        let res = fano_decode(&sys, &self.cfg.decoder)?;
        if res.status == DecodeStatus::BudgetExhausted {
            return Ok(None);
        }
        Ok(p.code.info_of(&res.u).filter(|info| crc_check(info, self.cfg.q)))
    }

    /// Relay listening phase: waits per the quantized waiting rule and
    /// retries at each later allowed start until the CRC passes.
    pub fn relay_phase(
        &self,
        r: &[Complex64],
        h: Complex64,
        params: &ChannelParams,
    ) -> Result<RelayOutcome> {
        let required = required_wait(self.cfg.rate, h.norm_sqr(), params.c, params.snr, self.cfg.subblocks);
        let first = quantize_wait(required, &self.cfg.fractions, self.cfg.subblocks);
        let mut attempts = 0;
        for (j, &f) in self.cfg.fractions.iter().enumerate() {
            let n = (f * self.cfg.subblocks as f64).round() as usize;
            if n < first {
                continue;
            }
            attempts += 1;
            if let Some(word) = self.relay_decode_attempt(j, r, h, params)? {
                return Ok(RelayOutcome { wait: n, word: Some(word), attempts });
            }
        }
        Ok(RelayOutcome { wait: self.cfg.subblocks, word: None, attempts })
    }

    /// Destination decoding given the relay start `wait` (known to the
    /// destination). Returns the decoded information frame, or `None` when
    /// the decoded point leaves the information set, plus the decoder
    /// result.
    pub fn destination_decode(
        &self,
        y: &[Complex64],
        g1: Complex64,
        g2: Complex64,
        wait: usize,
        params: &ChannelParams,
    ) -> Result<(Option<Vec<u32>>, crate::decoder::DecodeResult)> {
        let start = wait * self.cfg.symbols_per_subblock;
        let mut obs = y.to_vec();
        let mut gains = vec![g1; y.len()];
        if start < y.len() {
            let n = (g1.norm_sqr() + g2.norm_sqr()).sqrt();
            for k in (start..y.len()).step_by(2) {
                let (a, b) = alamouti_combine(y[k], y[k + 1], g1, g2)?;
                obs[k] = a;
                obs[k + 1] = b;
                gains[k] = Complex64::new(n, 0.0);
                gains[k + 1] = Complex64::new(n, 0.0);
            }
        }
        let h = self.diagonal_channel(&gains, &self.tx_coord, self.code.dim());
        let sys = preprocess_lattice(&h, &self.lattice, &embed_vector(&obs), params.sigma_v2 / 2.0, SearchOrder::Forward)?;
        let res = fano_decode(&sys, &self.cfg.decoder)?;
        Ok((self.code.info_of(&res.u), res))
    }

    /// Full protocol for one codeword.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        params: &ChannelParams,
        real: &RelayRealization,
        payload: &[u32],
        rng: &mut R,
    ) -> Result<(TrialRecord, RelayOutcome)> {
        if payload.len() != self.payload_len() {
            return Err(Error::DimensionMismatch(format!(
                "payload of {} symbols, expected {}",
                payload.len(),
                self.payload_len()
            )));
        }
        let frame = crc_append(payload, self.cfg.q).symbols();
        let s = self.transmit_symbols(&frame)?;
        let (sv, sw) = if self.cfg.noise {
            (params.sigma_v2.sqrt(), params.sigma_w2.sqrt())
        } else {
            (0.0, 0.0)
        };
        let r: Vec<Complex64> = s.iter().map(|&x| real.h * x + complex_gaussian(rng) * sw).collect();
        let relay = self.relay_phase(&r, real.h, params)?;

        let start = relay.wait * self.cfg.symbols_per_subblock;
        let mut y: Vec<Complex64> = s.iter().map(|&x| real.g1 * x).collect();
        if let Some(word) = &relay.word {
            let shat = self.transmit_symbols(word)?;
            for k in (start..s.len()).step_by(2) {
                let (t0, t1) = alamouti_retransmit(shat[k], shat[k + 1]);
                y[k] += real.g2 * t0;
                y[k + 1] += real.g2 * t1;
            }
        }
        for v in y.iter_mut() {
            *v += complex_gaussian(rng) * sv;
        }
        let wait = if relay.word.is_some() { relay.wait } else { self.cfg.subblocks };
        let (decoded, res) = self.destination_decode(&y, real.g1, real.g2, wait, params)?;
        let dec_payload = decoded.as_ref().map(|d| &d[..self.payload_len()]);
        let mut record = TrialRecord::from_decode(payload, dec_payload, self.cfg.q, &res);
        record.wait_fraction = Some(wait as f64 / self.cfg.subblocks as f64);
        Ok((record, relay))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{sample_relay, snr_to_variances, trial_rng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn waiting_rule_examples() {
        assert_eq!(required_wait(2.0, 1.0, 2.0, 1e300, 12), 6.0);
        assert_eq!(required_wait(2.0, 0.0, 2.0, 100.0, 12), 12.0);
        // log2(1 + 7) = 3: ceil(12 * 2 / 3) = 8.
        assert_eq!(required_wait(2.0, 7.0, 1.0, 1.0, 12), 8.0);
        assert_eq!(required_wait(2.0, 0.01, 1.0, 1.0, 12), 12.0);
    }

    #[test]
    fn quantization_examples() {
        let f = [0.5, 2.0 / 3.0];
        assert_eq!(quantize_wait(6.0, &f, 12), 6);
        assert_eq!(quantize_wait(0.6 * 12.0, &f, 12), 8);
        assert_eq!(quantize_wait(0.9 * 12.0, &f, 12), 12);
    }

    #[test]
    fn quantized_wait_lies_on_allowed_set() {
        let f = [0.5, 2.0 / 3.0, 5.0 / 6.0];
        let mut rng = trial_rng(1, 0, 0);
        for _ in 0..1000 {
            let r = required_wait(2.0, rng.random_range(0.0..3.0), 2.0, rng.random_range(0.1..1000.0), 12);
            let w = quantize_wait(r, &f, 12);
            assert!(w >= 6);
            assert!(w == 12 || f.iter().any(|x| ((x * 12.0) - w as f64).abs() < 1e-9));
            assert!(w as f64 >= r - 1e-9 || w == 12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(DdfConfig::standard(6, 16).validate().is_ok());
        assert!(DdfConfig::standard(4, 16).validate().is_err());
        let mut c = DdfConfig::standard(6, 16);
        c.fractions = vec![1.0 / 3.0, 2.0 / 3.0];
        assert!(c.validate().is_err());
        c.fractions = vec![2.0 / 3.0, 0.5];
        assert!(c.validate().is_err());
        let mut c = DdfConfig::standard(6, 15);
        c.symbols_per_subblock = 15;
        assert!(c.validate().is_err());
    }

    #[test]
    fn half_prefix_holds_two_streams() {
        let s = DdfScheme::new(DdfConfig::standard(6, 16)).unwrap();
        let half: Vec<usize> = s.tx_coord[..s.tx_coord.len() / 2].to_vec();
        assert!(half.iter().all(|c| c % 4 <= 1));
        assert_eq!(half.len(), 2 * s.code.dim() / 4);
        assert_eq!(s.payload_len(), 46 - 4);
    }

    #[test]
    fn noiseless_prefix_is_accepted() {
        let s = DdfScheme::new(DdfConfig::standard(6, 16)).unwrap();
        let p = snr_to_variances(10.0, 2.0).unwrap();
        let mut rng = trial_rng(2, 0, 0);
        let payload = s.random_payload(&mut rng);
        let frame = crc_append(&payload, 17).symbols();
        let h = c(0.6, -0.9);
        let r: Vec<Complex64> = s.transmit_symbols(&frame).unwrap().iter().map(|&x| h * x).collect();
        assert_eq!(s.relay_decode_attempt(0, &r, h, &p).unwrap(), Some(frame));
    }

    #[test]
    fn silent_source_link_is_rejected() {
        let s = DdfScheme::new(DdfConfig::standard(6, 16)).unwrap();
        let p = snr_to_variances(10.0, 2.0).unwrap();
        let mut rng = trial_rng(3, 0, 0);
        for _ in 0..200 {
            let r: Vec<Complex64> = (0..96).map(|_| complex_gaussian(&mut rng) * p.sigma_w2.sqrt()).collect();
            for j in 0..2 {
                assert_eq!(s.relay_decode_attempt(j, &r, c(0.0, 0.0), &p).unwrap(), None);
            }
        }
    }

    #[test]
    fn noiseless_protocol_has_no_errors() {
        let mut cfg = DdfConfig::standard(6, 16);
        cfg.noise = false;
        let s = DdfScheme::new(cfg).unwrap();
        let p = snr_to_variances(40.0, 2.0).unwrap();
        for t in 0..30 {
            let mut rng = trial_rng(4, 0, t);
            let real = sample_relay(&mut rng);
            let payload = s.random_payload(&mut rng);
            let (rec, _) = s.simulate(&p, &real, &payload, &mut rng).unwrap();
            assert!(!rec.frame_error, "trial {t}");
        }
    }

    #[test]
    fn perfect_relay_link_starts_at_half() {
        let mut cfg = DdfConfig::standard(6, 16);
        cfg.noise = false;
        let s = DdfScheme::new(cfg).unwrap();
        let p = snr_to_variances(15.0, 1e9).unwrap();
        for t in 0..10 {
            let mut rng = trial_rng(5, 0, t);
            let real = sample_relay(&mut rng);
            let payload = s.random_payload(&mut rng);
            let (rec, relay) = s.simulate(&p, &real, &payload, &mut rng).unwrap();
            assert_eq!(relay.wait, 3);
            assert_eq!(rec.wait_fraction, Some(0.5));
        }
    }

    #[test]
    fn relay_rescues_dead_direct_link() {
        // g1 = 0: without the relay nothing gets through.
        let mut cfg = DdfConfig::standard(6, 16);
        cfg.noise = false;
        let s = DdfScheme::new(cfg).unwrap();
        let p = snr_to_variances(10.0, 1e9).unwrap();
        let mut rng = trial_rng(6, 0, 0);
        let payload = s.random_payload(&mut rng);
        let real = RelayRealization { g1: c(0.0, 0.0), g2: c(0.8, 0.3), h: c(1.0, 0.0) };
        let (rec, relay) = s.simulate(&p, &real, &payload, &mut rng).unwrap();
        assert!(relay.word.is_some());
        // The first half is lost, so only the relayed half is seen; the
        // systematic stream is gone and decoding may still fail, but the
        // relayed symbols carry gain |g2|.
        assert_eq!(rec.wait_fraction, Some(0.5));
    }
}
