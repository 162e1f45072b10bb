use latcoop::channels::{add_noise, sample_cma, sample_relay, snr_to_variances, trial_rng, RelayRealization};
use latcoop::cma::{build_cma_system, measure_power, outage_probability, GainPolicy, Whitener, DEFAULT_POLICY};
use latcoop::ddf::{DdfConfig, DdfScheme};
use latcoop::framing::crc_append;
use latcoop::harness::{run_fer_experiment, Coding, ExperimentConfig, Protocol};
use num_complex::Complex64;
use rayon::prelude::*;

fn ddf() -> DdfScheme {
    DdfScheme::new(DdfConfig::standard(6, 16)).unwrap()
}

/// Relay decodes of noisy prefixes: every CRC-accepted word must be the
/// transmitted one, up to the CRC false-accept rate.
#[test]
fn relay_accepts_only_correct_words() {
    let s = ddf();
    let p = snr_to_variances(10.0, 2.0).unwrap();
    let trials = 100_000u64;
    let (accepted, wrong) = (0..trials)
        .into_par_iter()
        .map(|t| {
            let rng = &mut trial_rng(5, 0, t);
            let real = sample_relay(rng);
            let payload = s.random_payload(rng);
            let frame = crc_append(&payload, 17).symbols();
            let x = s.transmit_symbols(&frame).unwrap();
            let heard: Vec<Complex64> = x.iter().map(|&v| real.h * v).collect();
            let r = add_noise(&heard, p.sigma_w2, rng);
            let out = s.relay_phase(&r, real.h, &p).unwrap();
            match out.word {
                Some(w) => (1u64, (w != frame) as u64),
                None => (0, 0),
            }
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    assert!(accepted >= 1000, "only {accepted} accepts");
    assert!(wrong as f64 <= 1e-4 * trials as f64, "{wrong} false accepts in {accepted}");
}

#[test]
fn relay_rejects_pure_noise() {
    let s = ddf();
    let p = snr_to_variances(10.0, 2.0).unwrap();
    let zero = Complex64::new(0.0, 0.0);
    let n = s.channel_uses();
    let accepts: usize = (0..2000u64)
        .into_par_iter()
        .filter(|&t| {
            let rng = &mut trial_rng(6, 0, t);
            let r = add_noise(&vec![zero; n], p.sigma_w2, rng);
            // A tiny nonzero gain keeps the decoder's channel invertible.
            let h = Complex64::new(1e-6, 0.0);
            (0..2).any(|j| s.relay_decode_attempt(j, &r, h, &p).unwrap().is_some())
        })
        .count();
    assert_eq!(accepts, 0);
}

/// With no direct link, only the relay's half of the codeword reaches the
/// destination.
#[test]
fn relay_helps_without_direct_link() {
    let s = ddf();
    let p = snr_to_variances(10.0, 2.0).unwrap();
    let zero = Complex64::new(0.0, 0.0);
    let trials = 10_000u64;
    let fer = |silent: bool| -> f64 {
        let errors: u64 = (0..trials)
            .into_par_iter()
            .map(|t| {
                let rng = &mut trial_rng(7, 0, t);
                let r = sample_relay(rng);
                let real = RelayRealization { g1: zero, h: if silent { zero } else { r.h }, ..r };
                let payload = s.random_payload(rng);
                s.simulate(&p, &real, &payload, rng).unwrap().0.frame_error as u64
            })
            .sum();
        errors as f64 / trials as f64
    };
    let (active, silent) = (fer(false), fer(true));
    assert!(active < silent, "active {active}, silent {silent}");
}

#[test]
fn ddf_beats_naf_at_14_db() {
    let run = |protocol| {
        let mut c = ExperimentConfig::new(protocol, vec![14.0]);
        c.frame = 64;
        c.trials.min_errors = u64::MAX;
        c.trials.max_trials = 10_000;
        run_fer_experiment(&c).unwrap()[0].fer
    };
    let (d, n) = (run(Protocol::Ddf), run(Protocol::Naf));
    assert!(d < n, "DDF {d}, NAF {n}");
}

#[test]
fn cma_noise_covariance_is_positive_definite() {
    let p = snr_to_variances(10.0, 2.0).unwrap();
    for t in 0..1000 {
        let rng = &mut trial_rng(8, 0, t);
        let real = sample_cma(rng);
        let g = DEFAULT_POLICY.gains(real.h, p.sigma_w2);
        let sys = build_cma_system(&g, &real, 16, &p).unwrap();
        assert!(Whitener::new(&sys.sigma).is_ok(), "draw {t}");
    }
}

#[test]
fn default_gains_respect_power_and_help() {
    let p = snr_to_variances(10.0, 2.0).unwrap();
    assert!(measure_power(&DEFAULT_POLICY, &p, 16, 1000, 3).unwrap() <= 1.01);
    let tdma = GainPolicy { a: 1.0, beta: 0.0 };
    let coop = outage_probability(&DEFAULT_POLICY, &p, 16, 2.0, 10_000, 4).unwrap();
    let alone = outage_probability(&tdma, &p, 16, 2.0, 10_000, 4).unwrap();
    assert!(coop <= alone, "cooperative {coop}, no cooperation {alone}");
}

#[test]
fn noiseless_pipelines_are_error_free() {
    for (protocol, coding, frame) in [
        (Protocol::Naf, Coding::Coded, 16),
        (Protocol::Ddf, Coding::Coded, 0),
        (Protocol::Cma, Coding::Coded, 16),
    ] {
        let mut c = ExperimentConfig::new(protocol, vec![25.0]);
        c.coding = coding;
        if frame > 0 {
            c.frame = frame;
        }
        c.noise = false;
        c.trials.max_trials = 50;
        let r = &run_fer_experiment(&c).unwrap()[0];
        assert_eq!(r.frame_errors, 0, "{protocol:?}");
    }
}
