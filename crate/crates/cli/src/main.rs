use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latcoop::analysis::{self, DmtCurve, DmtKind};
use latcoop::channels::snr_to_variances;
use latcoop::cma::optimize_gains;
use latcoop::harness::{
    self, parse_fraction, run_bias_sweep, run_fer_experiment, with_threads, CsvRow, DmtRow, ExperimentConfig,
    FractionRow, GainRow, OutageRow, Series,
};
use latcoop::Error;

#[derive(Parser)]
#[command(name = "latcoop", version, about = "Lattice-coded cooperative relaying simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// FER of the amplify-and-forward relay channel.
    SimNaf(SimArgs),
    /// FER of the dynamic decode-and-forward relay channel.
    SimDdf(SimArgs),
    /// FER of two-user cooperative multiple access.
    SimCma(SimArgs),
    /// Monte Carlo outage of the DDF protocol.
    OutageDdf(OutageArgs),
    /// Diversity-multiplexing tradeoff curve.
    Dmt(DmtArgs),
    /// Pareto-optimal waiting fractions.
    Pareto(ParetoArgs),
    /// Outage-minimizing CMA gains.
    OptimizeCmaGains(GainArgs),
    /// FER and decoder effort against the Fano bias (CMA, frame 64).
    BiasSweep(BiasArgs),
}

#[derive(Args)]
struct Output {
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot here.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, dotted keys for sections.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    snr_db: Vec<f64>,
    #[arg(long)]
    rate: Option<u32>,
    /// Use the outer convolutional code.
    #[arg(long)]
    coded: bool,
    #[arg(long)]
    frame: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_errors: Option<u64>,
    #[arg(long, alias = "trials")]
    max_trials: Option<u64>,
    #[arg(long)]
    bias: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Inter-user over destination SNR (linear).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    subblocks: Option<usize>,
    #[arg(long)]
    symbols_per_subblock: Option<usize>,
    /// Waiting fractions such as `1/2,2/3`.
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<String>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Debug: transmit without noise.
    #[arg(long)]
    no_noise: bool,
    #[arg(long)]
    budget_seconds: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct OutageArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    snr_db: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    rate: f64,
    /// Waiting fractions; defaults to the Pareto set for `--segments`.
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<String>,
    #[arg(long, default_value_t = 3)]
    segments: usize,
    #[arg(long, default_value_t = 6)]
    subblocks: usize,
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    #[arg(long, default_value_t = 100_000)]
    draws: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct DmtArgs {
    /// naf, ddf, ddf-finite, cma or mimo.
    #[arg(long)]
    protocol: String,
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<String>,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParetoArgs {
    /// Number of segments, one more than the number of fractions.
    #[arg(long)]
    segments: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GainArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    snr_db: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    rate: f64,
    /// Frame length used for the outage evaluation.
    #[arg(long, default_value_t = 16)]
    frame: usize,
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    #[arg(long, default_value_t = 2000)]
    draws: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BiasArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.8,1.2,2.0")]
    biases: Vec<f64>,
    #[command(flatten)]
    sim: SimArgs,
}

fn fractions(raw: &[String]) -> latcoop::Result<Vec<f64>> {
    raw.iter().map(|s| parse_fraction(s)).collect()
}

fn sim_config(protocol: &str, a: &SimArgs, default_frame: Option<usize>) -> latcoop::Result<ExperimentConfig> {
    let text = match &a.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut ov: Vec<(String, String)> = vec![("protocol".into(), format!("\"{protocol}\""))];
    if let Some(f) = default_frame {
        if !text.lines().any(|l| l.trim_start().starts_with("frame")) {
            ov.push(("frame".into(), f.to_string()));
        }
    }
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            ov.push((k.to_string(), v));
        }
    };
    if !a.snr_db.is_empty() {
        put("snr_db", Some(format!("{:?}", a.snr_db)));
    }
    put("rate", a.rate.map(|v| v.to_string()));
    put("coding", a.coded.then(|| "\"coded\"".to_string()));
    put("frame", a.frame.map(|v| v.to_string()));
    put("seed", a.seed.map(|v| v.to_string()));
    put("trials.min_errors", a.min_errors.map(|v| v.to_string()));
    put("trials.max_trials", a.max_trials.map(|v| v.to_string()));
    put("decoder.bias", a.bias.map(|v| format!("{v:?}")));
    put("decoder.step", a.step.map(|v| format!("{v:?}")));
    put("c", a.c.map(|v| format!("{v:?}")));
    put("ddf.subblocks", a.subblocks.map(|v| v.to_string()));
    put("ddf.symbols_per_subblock", a.symbols_per_subblock.map(|v| v.to_string()));
    if !a.fractions.is_empty() {
        put("ddf.fractions", Some(format!("{:?}", fractions(&a.fractions)?)));
    }
    put("cma.a", a.a.map(|v| format!("{v:?}")));
    put("cma.beta", a.beta.map(|v| format!("{v:?}")));
    put("noise", a.no_noise.then(|| "false".to_string()));
    put("budget_seconds", a.budget_seconds.map(|v| format!("{v:?}")));
    for s in &a.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("expected KEY=VALUE, got {s:?}")))?;
        ov.push((k.trim().to_string(), v.trim().to_string()));
    }
    ExperimentConfig::parse(&text, &ov)
}

fn sink(path: &Option<PathBuf>) -> latcoop::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit<T: CsvRow>(rows: &[T], path: &Option<PathBuf>) -> latcoop::Result<()> {
    harness::write_csv(rows, sink(path)?)
}

fn plot(series: &[Series], x: &str, y: &str, path: &Option<PathBuf>) -> latcoop::Result<()> {
    match path {
        Some(p) => harness::write_svg(series, x, y, File::create(p)?),
        None => Ok(()),
    }
}

fn sim(protocol: &str, a: &SimArgs) -> latcoop::Result<()> {
    let cfg = sim_config(protocol, a, None)?;
    let rows = with_threads(a.threads, || run_fer_experiment(&cfg))??;
    emit(&rows, &a.output.out)?;
    plot(&[Series::fer(protocol, &rows)], "SNR (dB)", "FER", &a.output.svg)
}

fn run(cli: Cli) -> latcoop::Result<()> {
    match cli.cmd {
        Cmd::SimNaf(a) => sim("naf", &a),
        Cmd::SimDdf(a) => sim("ddf", &a),
        Cmd::SimCma(a) => sim("cma", &a),
        Cmd::BiasSweep(b) => {
            let cfg = sim_config("cma", &b.sim, Some(64))?;
            let rows = with_threads(b.sim.threads, || run_bias_sweep(&cfg, &b.biases))??;
            emit(&rows, &b.sim.output.out)?;
            let series: Vec<Series> = b
                .biases
                .iter()
                .map(|&bias| Series {
                    label: format!("bias {bias}"),
                    points: rows.iter().filter(|r| r.bias == bias).map(|r| (r.snr_db, r.fer)).collect(),
                })
                .collect();
            plot(&series, "SNR (dB)", "FER", &b.sim.output.svg)
        }
        Cmd::OutageDdf(a) => {
            let f = if a.fractions.is_empty() {
                if a.segments < 2 {
                    return Err(Error::InvalidConfig("need at least 2 segments".into()));
                }
                analysis::pareto_fractions(a.segments - 1)?
            } else {
                fractions(&a.fractions)?
            };
            let rows = with_threads(a.threads, || {
                a.snr_db
                    .iter()
                    .map(|&s| {
                        analysis::outage_ddf(s, a.rate, &f, a.subblocks, a.c, a.draws, a.seed)
                            .map(|outage| OutageRow { snr_db: s, outage })
                    })
                    .collect::<latcoop::Result<Vec<_>>>()
            })??;
            emit(&rows, &a.output.out)?;
            let pts = rows.iter().map(|r| (r.snr_db, r.outage)).collect();
            plot(&[Series { label: "outage".into(), points: pts }], "SNR (dB)", "outage", &a.output.svg)
        }
        Cmd::Dmt(a) => {
            let kind = match a.protocol.as_str() {
                "naf" => DmtKind::Naf,
                "ddf" => DmtKind::Ddf,
                "ddf-finite" => {
                    let f = if a.fractions.is_empty() { vec![0.5, 2.0 / 3.0] } else { fractions(&a.fractions)? };
                    DmtKind::DdfFinite(f)
                }
                "cma" => DmtKind::Cma,
                "mimo" => DmtKind::Mimo(a.m, a.n),
                p => return Err(Error::InvalidConfig(format!("unknown protocol {p:?}"))),
            };
            let curve = DmtCurve::new(kind)?;
            let rows: Vec<DmtRow> = curve.sample(a.points).into_iter().map(|(r, d)| DmtRow { r, d }).collect();
            emit(&rows, &a.out)
        }
        Cmd::Pareto(a) => {
            if a.segments < 2 {
                return Err(Error::InvalidConfig("need at least 2 segments".into()));
            }
            let f = analysis::pareto_fractions(a.segments - 1)?;
            let rows: Vec<FractionRow> =
                f.into_iter().enumerate().map(|(j, fraction)| FractionRow { j: j + 1, fraction }).collect();
            emit(&rows, &a.out)
        }
        Cmd::OptimizeCmaGains(a) => {
            let rows = with_threads(a.threads, || {
                a.snr_db
                    .iter()
                    .map(|&s| {
                        let p = snr_to_variances(s, a.c)?;
                        let o = optimize_gains(&p, a.frame, a.rate, a.draws, a.seed)?;
                        Ok(GainRow { snr_db: s, a: o.policy.a, beta: o.policy.beta, outage: o.outage, power: o.power })
                    })
                    .collect::<latcoop::Result<Vec<_>>>()
            })??;
            emit(&rows, &a.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidConfig(_) => 2,
                Error::BudgetExceeded(_) => 3,
                _ => 1,
            })
        }
    }
}
