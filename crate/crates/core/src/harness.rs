//! Monte Carlo frame-error experiments, configuration, and CSV/SVG output.
//!
//! Trial `t` at SNR index `i` draws everything from `trial_rng(seed, i, t)`
//! and trials run in fixed-size batches, so the rows depend only on the
//! configuration, never on the thread count.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channels::{sample_cma, sample_relay, snr_to_variances, trial_rng, ChannelParams};
use crate::cma::{CmaConfig, CmaMode, CmaScheme, GainPolicy, DEFAULT_POLICY};
use crate::ddf::{DdfConfig, DdfScheme};
use crate::decoder::DecoderConfig;
use crate::error::{Error, Result};
use crate::naf::{NafConfig, NafMode, NafScheme};
use crate::record::TrialRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Naf,
    Ddf,
    Cma,
}

/// Whether the outer convolutional code is used (NAF and CMA).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    Uncoded,
    Coded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialPolicy {
    pub min_errors: u64,
    pub max_trials: u64,
    /// Trials per parallel batch; the stop rule is checked between batches.
    pub batch: u64,
}

impl Default for TrialPolicy {
    fn default() -> Self {
        TrialPolicy { min_errors: 100, max_trials: 100_000, batch: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderBlock {
    pub bias: f64,
    pub step: f64,
    pub max_nodes: u64,
}

impl Default for DecoderBlock {
    fn default() -> Self {
        let d = DecoderConfig::default();
        DecoderBlock { bias: d.bias, step: d.step, max_nodes: d.max_nodes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdfBlock {
    pub subblocks: usize,
    pub symbols_per_subblock: usize,
    pub fractions: Vec<f64>,
}

impl Default for DdfBlock {
    fn default() -> Self {
        let d = DdfConfig::standard(6, 16);
        DdfBlock { subblocks: d.subblocks, symbols_per_subblock: d.symbols_per_subblock, fractions: d.fractions }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmaBlock {
    pub a: f64,
    pub beta: f64,
}

impl Default for CmaBlock {
    fn default() -> Self {
        CmaBlock { a: DEFAULT_POLICY.a, beta: DEFAULT_POLICY.beta }
    }
}

fn default_rate() -> u32 {
    2
}
fn default_seed() -> u64 {
    1
}
fn default_frame() -> usize {
    128
}
fn default_c() -> f64 {
    2.0
}
fn default_true() -> bool {
    true
}
fn default_coding() -> Coding {
    Coding::Uncoded
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    /// Nominal rate class in bits per channel use.
    #[serde(default = "default_rate")]
    pub rate: u32,
    #[serde(default = "default_coding")]
    pub coding: Coding,
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub trials: TrialPolicy,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Codeword length in channel uses (NAF) or symbol intervals (CMA).
    #[serde(default = "default_frame")]
    pub frame: usize,
    /// Inter-user over destination SNR, linear.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Debug switch: when false no noise is added anywhere.
    #[serde(default = "default_true")]
    pub noise: bool,
    #[serde(default)]
    pub budget_seconds: Option<f64>,
    #[serde(default)]
    pub decoder: DecoderBlock,
    #[serde(default)]
    pub ddf: DdfBlock,
    #[serde(default)]
    pub cma: CmaBlock,
}

impl ExperimentConfig {
    /// Defaults for `protocol` at the given SNR points.
    pub fn new(protocol: Protocol, snr_db: Vec<f64>) -> Self {
        ExperimentConfig {
            protocol,
            rate: default_rate(),
            coding: default_coding(),
            snr_db,
            trials: TrialPolicy::default(),
            seed: default_seed(),
            frame: default_frame(),
            c: default_c(),
            noise: true,
            budget_seconds: None,
            decoder: DecoderBlock::default(),
            ddf: DdfBlock::default(),
            cma: CmaBlock::default(),
        }
    }

    /// Parses `key = value` lines (TOML syntax, dotted keys for the
    /// `trials`, `decoder`, `ddf` and `cma` blocks), then applies
    /// `overrides` as `(dotted key, value)` pairs. Override values are read
    /// as TOML values, falling back to plain strings.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        for (key, raw) in overrides {
            set_dotted(&mut table, key, parse_value(raw))?;
        }
        let cfg: ExperimentConfig =
            table.try_into().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.snr_db.is_empty() {
            return bad("SNR list is empty".into());
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR values must be finite".into());
        }
        if self.trials.min_errors == 0 {
            return bad("min_errors must be at least 1".into());
        }
        if self.trials.max_trials == 0 {
            return bad("max_trials must be at least 1".into());
        }
        if self.trials.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if let Some(b) = self.budget_seconds {
            if !(b > 0.0) {
                return bad(format!("budget must be positive, got {b}"));
            }
        }
        snr_to_variances(self.snr_db[0], self.c)?;
        self.decoder_config().validate()?;
        self.pipeline().map(|_| ())
    }

    fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            bias: self.decoder.bias,
            step: self.decoder.step,
            max_nodes: self.decoder.max_nodes,
            ..DecoderConfig::clamped()
        }
    }

    fn pipeline(&self) -> Result<Pipeline> {
        let decoder = self.decoder_config();
        Ok(match self.protocol {
            Protocol::Naf => {
                let mode = match self.coding {
                    Coding::Uncoded => NafMode::GoldenOnly,
                    Coding::Coded => NafMode::GoldenCc,
                };
                let mut c = NafConfig::for_rate(self.rate, mode, self.frame)?;
                c.decoder = decoder;
                c.noise = self.noise;
                Pipeline::Naf(NafScheme::new(c)?)
            }
            Protocol::Ddf => {
                if self.rate != 2 {
                    return Err(Error::InvalidConfig(format!(
                        "the relay code is built for 2 bits per channel use, got {}",
                        self.rate
                    )));
                }
                let mut c = DdfConfig::standard(self.ddf.subblocks, self.ddf.symbols_per_subblock);
                c.fractions = self.ddf.fractions.clone();
                c.decoder = decoder;
                c.noise = self.noise;
                Pipeline::Ddf(DdfScheme::new(c)?)
            }
            Protocol::Cma => {
                let mode = match self.coding {
                    Coding::Uncoded => CmaMode::Uncoded,
                    Coding::Coded => CmaMode::Coded,
                };
                let mut c = CmaConfig::for_rate(self.rate, mode, self.frame)?;
                c.policy = GainPolicy { a: self.cma.a, beta: self.cma.beta };
                c.decoder = decoder;
                c.noise = self.noise;
                Pipeline::Cma(CmaScheme::new(c)?)
            }
        })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::InvalidConfig(format!("bad key {key:?}")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("{p} in {key:?} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

enum Pipeline {
    Naf(NafScheme),
    Ddf(DdfScheme),
    Cma(CmaScheme),
}

impl Pipeline {
    fn trial(&self, params: &ChannelParams, seed: u64, point: u32, t: u64) -> Result<TrialRecord> {
        let rng = &mut trial_rng(seed, point, t);
        match self {
            Pipeline::Naf(s) => {
                let real = sample_relay(rng);
                let payload = s.random_payload(rng);
                s.simulate(params, &real, &payload, rng)
            }
            Pipeline::Ddf(s) => {
                let real = sample_relay(rng);
                let payload = s.random_payload(rng);
                s.simulate(params, &real, &payload, rng).map(|(rec, _)| rec)
            }
            Pipeline::Cma(s) => {
                let real = sample_cma(rng);
                let (p1, p2) = s.random_payloads(rng);
                s.simulate(params, &real, (&p1, &p2), rng)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MinErrors,
    MaxTrials,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub snr_db: f64,
    pub trials: u64,
    pub frame_errors: u64,
    pub fer: f64,
    pub ber: f64,
    pub mean_nodes: f64,
    /// Mean relay wait as a fraction of the codeword (DDF only).
    pub mean_wait: Option<f64>,
    /// Half-width of the 95% Wilson score interval on the FER.
    pub ci_half_width: f64,
    /// Trials whose decoder ran out of node budget.
    pub budget_exhausted: u64,
    pub stop: StopReason,
}

/// Half-width of the Wilson score interval for `k` successes in `n` trials.
pub fn wilson_half_width(k: u64, n: u64, z: f64) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
}

#[derive(Default)]
struct Tally {
    trials: u64,
    errors: u64,
    bit_errors: u64,
    bits: u64,
    nodes: u64,
    exhausted: u64,
    wait_sum: f64,
    waits: u64,
}

impl Tally {
    fn add(&mut self, r: &TrialRecord) {
        self.trials += 1;
        self.errors += r.frame_error as u64;
        self.bit_errors += r.bit_errors;
        self.bits += r.bits;
        self.nodes += r.nodes;
        self.exhausted += r.budget_exhausted as u64;
        if let Some(w) = r.wait_fraction {
            self.wait_sum += w;
            self.waits += 1;
        }
    }

    fn row(&self, snr_db: f64, stop: StopReason) -> ResultRow {
        let n = self.trials.max(1) as f64;
        ResultRow {
            snr_db,
            trials: self.trials,
            frame_errors: self.errors,
            fer: self.errors as f64 / n,
            ber: self.bit_errors as f64 / self.bits.max(1) as f64,
            mean_nodes: self.nodes as f64 / n,
            mean_wait: (self.waits > 0).then(|| self.wait_sum / self.waits as f64),
            ci_half_width: wilson_half_width(self.errors, self.trials, 1.96),
            budget_exhausted: self.exhausted,
            stop,
        }
    }
}

/// Runs every SNR point of `cfg` until it has `min_errors` frame errors or
/// `max_trials` trials.
pub fn run_fer_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let pipeline = cfg.pipeline()?;
    let start = Instant::now();
    let mut rows = Vec::with_capacity(cfg.snr_db.len());
    for (i, &snr_db) in cfg.snr_db.iter().enumerate() {
        let params = snr_to_variances(snr_db, cfg.c)?;
        let mut tally = Tally::default();
        let stop = loop {
            if tally.errors >= cfg.trials.min_errors {
                break StopReason::MinErrors;
            }
            if tally.trials >= cfg.trials.max_trials {
                break StopReason::MaxTrials;
            }
            let end = (tally.trials + cfg.trials.batch).min(cfg.trials.max_trials);
            let batch: Vec<TrialRecord> = (tally.trials..end)
                .into_par_iter()
                .map(|t| pipeline.trial(&params, cfg.seed, i as u32, t))
                .collect::<Result<_>>()?;
            batch.iter().for_each(|r| tally.add(r));
            if let Some(limit) = cfg.budget_seconds {
                if start.elapsed().as_secs_f64() > limit {
                    return Err(Error::BudgetExceeded(limit));
                }
            }
        };
        rows.push(tally.row(snr_db, stop));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub bias: f64,
    pub snr_db: f64,
    pub trials: u64,
    pub frame_errors: u64,
    pub fer: f64,
    pub ci_half_width: f64,
    pub mean_nodes: f64,
}

/// FER and decoder effort of `cfg` for each Fano bias in `biases`.
pub fn run_bias_sweep(cfg: &ExperimentConfig, biases: &[f64]) -> Result<Vec<BiasRow>> {
    if biases.is_empty() {
        return Err(Error::InvalidConfig("no bias values".into()));
    }
    let mut out = Vec::new();
    for &bias in biases {
        let mut c = cfg.clone();
        c.decoder.bias = bias;
        for r in run_fer_experiment(&c)? {
            out.push(BiasRow {
                bias,
                snr_db: r.snr_db,
                trials: r.trials,
                frame_errors: r.frame_errors,
                fer: r.fer,
                ci_half_width: r.ci_half_width,
                mean_nodes: r.mean_nodes,
            });
        }
    }
    Ok(out)
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidConfig("thread count must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|p| p.install(f))
            .map_err(|e| Error::InvalidConfig(e.to_string())),
    }
}

/// A row type with a fixed CSV column order.
pub trait CsvRow: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

impl CsvRow for ResultRow {
    const HEADER: &'static [&'static str] = &[
        "snr_db",
        "trials",
        "frame_errors",
        "fer",
        "ber",
        "mean_nodes",
        "mean_wait",
        "ci_half_width",
        "budget_exhausted",
        "stop",
    ];
}

impl CsvRow for BiasRow {
    const HEADER: &'static [&'static str] =
        &["bias", "snr_db", "trials", "frame_errors", "fer", "ci_half_width", "mean_nodes"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmtRow {
    pub r: f64,
    pub d: f64,
}

impl CsvRow for DmtRow {
    const HEADER: &'static [&'static str] = &["r", "d"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionRow {
    pub j: usize,
    pub fraction: f64,
}

impl CsvRow for FractionRow {
    const HEADER: &'static [&'static str] = &["j", "fraction"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageRow {
    pub snr_db: f64,
    pub outage: f64,
}

impl CsvRow for OutageRow {
    const HEADER: &'static [&'static str] = &["snr_db", "outage"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub snr_db: f64,
    pub a: f64,
    pub beta: f64,
    pub outage: f64,
    pub power: f64,
}

impl CsvRow for GainRow {
    const HEADER: &'static [&'static str] = &["snr_db", "a", "beta", "outage", "power"];
}

/// Writes the header and one line per row.
pub fn write_csv<T: CsvRow, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(T::HEADER)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<T: CsvRow, R: Read>(r: R) -> Result<Vec<T>> {
    let mut rd = csv::ReaderBuilder::new().from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != T::HEADER {
        return Err(Error::Io(format!("unexpected CSV header {header:?}")));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn csv_string<T: CsvRow>(rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// One curve of a plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn fer(label: &str, rows: &[ResultRow]) -> Self {
        Series { label: label.to_string(), points: rows.iter().map(|r| (r.snr_db, r.fer)).collect() }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot with a log-scaled y axis; points with `y <= 0` are dropped.
pub fn write_svg<W: Write>(series: &[Series], x_label: &str, y_label: &str, mut w: W) -> Result<()> {
    let (width, height, margin) = (640.0, 420.0, 60.0);
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1 > 0.0);
    let (mut x0, mut x1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut e0, mut e1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
        (a.min(p.1.log10().floor()), b.max(p.1.log10().ceil()))
    });
    if !x0.is_finite() {
        (x0, x1, e0, e1) = (0.0, 1.0, -3.0, 0.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if e1 <= e0 {
        e1 = e0 + 1.0;
    }
    let px = |x: f64| margin + (x - x0) / (x1 - x0) * (width - 2.0 * margin);
    let py = |y: f64| height - margin - (y.log10() - e0) / (e1 - e0) * (height - 2.0 * margin);

    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#)?;
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    let (l, r, t, b) = (margin, width - margin, margin, height - margin);
    writeln!(w, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t)?;
    for e in (e0 as i64)..=(e1 as i64) {
        let y = py(10f64.powi(e as i32));
        writeln!(w, r##"<line x1="{l}" y1="{y:.2}" x2="{r}" y2="{y:.2}" stroke="#ddd"/>"##)?;
        writeln!(w, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"#, l - 6.0, y + 4.0)?;
    }
    for k in 0..=4 {
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        writeln!(w, r#"<text x="{:.2}" y="{}" text-anchor="middle">{x:.1}</text>"#, px(x), b + 18.0)?;
    }
    writeln!(w, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, width / 2.0, height - 16.0)?;
    writeln!(w, r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{y_label}</text>"#, height / 2.0, height / 2.0)?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> =
            s.points.iter().filter(|p| p.1 > 0.0).map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(w, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "))?;
        let ly = t + 16.0 + 16.0 * i as f64;
        writeln!(w, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, r - 8.0, escape(&s.label))?;
    }
    writeln!(w, "</svg>")?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Parses `a/b` or a decimal.
pub fn parse_fraction(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::InvalidConfig(format!("bad fraction {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0.0 {
                return Err(bad());
            }
            Ok(n / d)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(protocol: Protocol) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(protocol, vec![10.0, 20.0]);
        c.frame = 16;
        c.trials = TrialPolicy { min_errors: 5, max_trials: 64, batch: 16 };
        c
    }

    #[test]
    fn config_from_text() {
        let text = "protocol = \"cma\"\nsnr_db = [10, 15]\ntrials.min_errors = 20\ndecoder.bias = 2.0\nframe = 64\n";
        let c = ExperimentConfig::parse(text, &[("seed".into(), "9".into()), ("coding".into(), "coded".into())]).unwrap();
        assert_eq!(c.protocol, Protocol::Cma);
        assert_eq!(c.snr_db, vec![10.0, 15.0]);
        assert_eq!(c.trials.min_errors, 20);
        assert_eq!(c.trials.max_trials, 100_000);
        assert_eq!(c.decoder.bias, 2.0);
        assert_eq!(c.seed, 9);
        assert_eq!(c.coding, Coding::Coded);
        let back = ExperimentConfig::parse(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_errors() {
        let parse = |t: &str| ExperimentConfig::parse(t, &[]);
        assert!(matches!(parse("protocol = \"naf\"\nsnr_db = []"), Err(Error::InvalidConfig(_))));
        assert!(matches!(parse("protocol = \"naf\"\nsnr_db = [1]\ntrials.max_trials = 0"), Err(Error::InvalidConfig(_))));
        assert!(matches!(parse("protocol = \"naf\"\nsnr_db = [1]\ntrials.min_errors = 0"), Err(Error::InvalidConfig(_))));
        assert!(matches!(parse("protocol = \"naf\"\nsnr_db = [1]\nfrobnicate = 1"), Err(Error::InvalidConfig(_))));
        assert!(matches!(parse("protocol = \"relay\"\nsnr_db = [1]"), Err(Error::InvalidConfig(_))));
        assert!(matches!(parse("protocol = \"ddf\"\nsnr_db = [1]\nrate = 4"), Err(Error::InvalidConfig(_))));
        assert!(matches!(parse("protocol = \"naf\"\nsnr_db = [1]\nframe = 30"), Err(Error::InvalidConfig(_))));
        let mut c = quick(Protocol::Naf);
        c.trials.max_trials = 0;
        assert!(run_fer_experiment(&c).is_err());
    }

    #[test]
    fn wilson_interval() {
        assert!((wilson_half_width(0, 100, 1.96) - 0.0184).abs() < 1e-3);
        assert!((wilson_half_width(50, 100, 1.96) - 0.0962).abs() < 1e-3);
        assert!(wilson_half_width(10, 1000, 1.96) < wilson_half_width(1, 100, 1.96));
    }

    #[test]
    fn noiseless_runs_are_error_free() {
        for p in [Protocol::Naf, Protocol::Cma] {
            let mut c = quick(p);
            c.noise = false;
            c.snr_db = vec![30.0];
            let rows = run_fer_experiment(&c).unwrap();
            assert!(rows.iter().all(|r| r.frame_errors == 0 && r.trials == 64), "{p:?}");
            assert_eq!(rows[0].stop, StopReason::MaxTrials);
        }
    }

    #[test]
    fn stops_at_min_errors_on_batch_boundary() {
        let mut c = quick(Protocol::Naf);
        c.snr_db = vec![0.0];
        c.trials = TrialPolicy { min_errors: 3, max_trials: 1000, batch: 8 };
        let r = &run_fer_experiment(&c).unwrap()[0];
        assert_eq!(r.stop, StopReason::MinErrors);
        assert!(r.frame_errors >= 3 && r.trials.is_multiple_of(8));
    }

    #[test]
    fn csv_round_trip_and_empty() {
        assert_eq!(csv_string::<ResultRow>(&[]).unwrap(), ResultRow::HEADER.join(",") + "\n");
        let rows = run_fer_experiment(&quick(Protocol::Naf)).unwrap();
        let text = csv_string(&rows).unwrap();
        let back: Vec<ResultRow> = read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let s = vec![
            Series { label: "a".into(), points: vec![(0.0, 0.5), (10.0, 0.01)] },
            Series { label: "b<c".into(), points: vec![(0.0, 0.2), (10.0, 0.0)] },
        ];
        let mut buf = Vec::new();
        write_svg(&s, "SNR (dB)", "FER", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches("<polyline").count(), 2);
        assert!(text.contains("b&lt;c"));
    }

    #[test]
    fn fractions_parse() {
        assert_eq!(parse_fraction("1/2").unwrap(), 0.5);
        assert_eq!(parse_fraction(" 0.25 ").unwrap(), 0.25);
        assert!(parse_fraction("1/0").is_err());
        assert!(parse_fraction("x").is_err());
    }
}
