use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use wpc_delay::multi_user::DEFAULT_MAX_NODES;
use wpc_delay::P4Mode;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Problem {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::P1 => "p1",
            Problem::P2 => "p2",
            Problem::P3 => "p3",
            Problem::P4 => "p4",
            Problem::P5 => "p5",
            Problem::P6 => "p6",
        }
    }

    pub fn multi_user(self) -> bool {
        matches!(self, Problem::P5 | Problem::P6)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Approx,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Approx => "approx",
        }
    }

    pub fn p4(self) -> P4Mode {
        match self {
            Mode::Exact => P4Mode::Exact,
            Mode::Approx => P4Mode::Approx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVar {
    R0,
    Snr,
    M,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::R0 => "r0",
            SweepVar::Snr => "snr",
            SweepVar::M => "m",
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            SweepVar::R0 => "r0_bits",
            SweepVar::Snr => "snr_db",
            SweepVar::M => "m",
        }
    }
}

/// Experiment flags. Every field is optional so that a `--config` file can
/// fill the gaps; flags given on the command line win.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// key = value file; command-line flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub problem: Option<Problem>,
    #[arg(long = "bandwidth-hz", allow_negative_numbers = true)]
    pub bandwidth_hz: Option<f64>,
    #[arg(long = "payload-bits", allow_negative_numbers = true)]
    pub payload_bits: Option<f64>,
    /// average SNR per node in dB; repeat for several nodes
    #[arg(long = "snr-db", allow_negative_numbers = true, value_delimiter = ',')]
    pub snr_db: Vec<f64>,
    /// Nakagami fading order
    #[arg(long, allow_negative_numbers = true)]
    pub m: Option<f64>,
    /// fixed channel power gain per node (solve only)
    #[arg(long, allow_negative_numbers = true, value_delimiter = ',')]
    pub gain: Vec<f64>,
    #[arg(long = "mc-samples")]
    pub mc_samples: Option<usize>,
    /// panel size for multiplier calibration by sampling
    #[arg(long = "calibration-samples")]
    pub calibration_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// output file (solve, sweep) or directory (figure)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// use this multiplier instead of calibrating (p2, p4)
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// use this power price instead of calibrating (p6)
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long = "max-nodes")]
    pub max_nodes: Option<usize>,
    #[arg(long = "sweep-var", value_enum)]
    pub sweep_var: Option<SweepVar>,
    #[arg(long = "sweep-start", allow_negative_numbers = true)]
    pub sweep_start: Option<f64>,
    #[arg(long = "sweep-stop", allow_negative_numbers = true)]
    pub sweep_stop: Option<f64>,
    #[arg(long = "sweep-points")]
    pub sweep_points: Option<usize>,
    /// explicit grid, overrides start/stop/points
    #[arg(long = "sweep-values", allow_negative_numbers = true, value_delimiter = ',')]
    pub sweep_values: Vec<f64>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Config {
    pub problem: Problem,
    pub bandwidth_hz: f64,
    pub payload_bits: f64,
    /// `None` when neither flag nor file gave one; commands pick their own.
    pub snr_db: Option<Vec<f64>>,
    pub m: f64,
    pub gain: Vec<f64>,
    pub mc_samples: usize,
    pub calibration_samples: usize,
    pub seed: u64,
    pub mode: Mode,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub mu: Option<f64>,
    pub theta: Option<f64>,
    pub max_nodes: usize,
    pub sweep_var: SweepVar,
    pub sweep_start: Option<f64>,
    pub sweep_stop: Option<f64>,
    pub sweep_points: usize,
    pub sweep_values: Vec<f64>,
}

pub const DEFAULT_BANDWIDTH: f64 = 1e5;
pub const DEFAULT_PAYLOAD: f64 = 5e4;
pub const DEFAULT_M: f64 = 4.0;
pub const DEFAULT_SNR_DB: f64 = 5.0;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SWEEP_POINTS: usize = 20;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| bad(format!("config key `{key}`: cannot parse `{}`", v.trim())))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').map(|x| parse_num(key, x)).collect()
}

fn parse_enum<T: ValueEnum>(key: &str, v: &str) -> Result<T, CliError> {
    T::from_str(v.trim(), true).map_err(|_| bad(format!("config key `{key}`: unknown value `{}`", v.trim())))
}

/// Reads a `key = value` file into `Overrides`. Blank lines and `#`
/// comments are skipped; `-` and `_` are interchangeable in keys.
pub fn read_file(path: &Path) -> Result<Overrides, CliError> {
    let text = fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let mut o = Overrides::default();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        match k {
            "problem" => o.problem = Some(parse_enum(k, v)?),
            "bandwidth_hz" => o.bandwidth_hz = Some(parse_num(k, v)?),
            "payload_bits" => o.payload_bits = Some(parse_num(k, v)?),
            "snr_db" => o.snr_db = parse_list(k, v)?,
            "m" => o.m = Some(parse_num(k, v)?),
            "gain" => o.gain = parse_list(k, v)?,
            "mc_samples" => o.mc_samples = Some(parse_num(k, v)?),
            "calibration_samples" => o.calibration_samples = Some(parse_num(k, v)?),
            "seed" => o.seed = Some(parse_num(k, v)?),
            "mode" => o.mode = Some(parse_enum(k, v)?),
            "workers" => o.workers = Some(parse_num(k, v)?),
            "out" => o.out = Some(PathBuf::from(v.trim())),
            "mu" => o.mu = Some(parse_num(k, v)?),
            "theta" => o.theta = Some(parse_num(k, v)?),
            "max_nodes" => o.max_nodes = Some(parse_num(k, v)?),
            "sweep_var" => o.sweep_var = Some(parse_enum(k, v)?),
            "sweep_start" => o.sweep_start = Some(parse_num(k, v)?),
            "sweep_stop" => o.sweep_stop = Some(parse_num(k, v)?),
            "sweep_points" => o.sweep_points = Some(parse_num(k, v)?),
            "sweep_values" => o.sweep_values = parse_list(k, v)?,
            _ => return Err(bad(format!("{}:{}: unknown key `{key}`", path.display(), n + 1))),
        }
    }
    Ok(o)
}

fn nonempty(a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    if a.is_empty() {
        b
    } else {
        a
    }
}

impl Config {
    pub fn resolve(cli: Overrides) -> Result<Self, CliError> {
        let file = match &cli.config {
            Some(p) => read_file(p)?,
            None => Overrides::default(),
        };
        let snr = nonempty(cli.snr_db, file.snr_db);
        let workers = cli
            .workers
            .or(file.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let c = Config {
            problem: cli.problem.or(file.problem).unwrap_or(Problem::P1),
            bandwidth_hz: cli.bandwidth_hz.or(file.bandwidth_hz).unwrap_or(DEFAULT_BANDWIDTH),
            payload_bits: cli.payload_bits.or(file.payload_bits).unwrap_or(DEFAULT_PAYLOAD),
            snr_db: (!snr.is_empty()).then_some(snr),
            m: cli.m.or(file.m).unwrap_or(DEFAULT_M),
            gain: nonempty(cli.gain, file.gain),
            mc_samples: cli.mc_samples.or(file.mc_samples).unwrap_or(DEFAULT_MC_SAMPLES),
            calibration_samples: cli
                .calibration_samples
                .or(file.calibration_samples)
                .unwrap_or(DEFAULT_CALIBRATION_SAMPLES),
            seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            mode: cli.mode.or(file.mode).unwrap_or(Mode::Exact),
            workers,
            out: cli.out.or(file.out),
            mu: cli.mu.or(file.mu),
            theta: cli.theta.or(file.theta),
            max_nodes: cli.max_nodes.or(file.max_nodes).unwrap_or(DEFAULT_MAX_NODES),
            sweep_var: cli.sweep_var.or(file.sweep_var).unwrap_or(SweepVar::R0),
            sweep_start: cli.sweep_start.or(file.sweep_start),
            sweep_stop: cli.sweep_stop.or(file.sweep_stop),
            sweep_points: cli.sweep_points.or(file.sweep_points).unwrap_or(DEFAULT_SWEEP_POINTS),
            sweep_values: nonempty(cli.sweep_values, file.sweep_values),
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), CliError> {
        for (name, v) in [
            ("bandwidth-hz", self.bandwidth_hz),
            ("payload-bits", self.payload_bits),
            ("m", self.m),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(bad(format!("--{name} must be positive, got {v}")));
            }
        }
        if let Some(s) = self.snr_db.iter().flatten().find(|s| !s.is_finite()) {
            return Err(bad(format!("--snr-db must be finite, got {s}")));
        }
        if let Some(g) = self.gain.iter().find(|g| !g.is_finite() || **g < 0.0) {
            return Err(bad(format!("--gain must be non-negative, got {g}")));
        }
        if self.mc_samples < 2 {
            return Err(bad("--mc-samples must be at least 2"));
        }
        if self.workers == 0 {
            return Err(bad("--workers must be at least 1"));
        }
        if self.max_nodes == 0 {
            return Err(bad("--max-nodes must be at least 1"));
        }
        if self.snr_db.as_ref().is_some_and(|s| s.len() > self.max_nodes) {
            return Err(bad(format!("more than --max-nodes = {} nodes", self.max_nodes)));
        }
        if self.sweep_values.is_empty() && self.sweep_points < 1 {
            return Err(bad("--sweep-points must be at least 1"));
        }
        Ok(())
    }

    pub fn snr_or(&self, default: &[f64]) -> Vec<f64> {
        self.snr_db.clone().unwrap_or_else(|| default.to_vec())
    }

    /// Grid for the swept variable: explicit values, or `points` values
    /// between start and stop (log-spaced for R0 and m, linear for SNR).
    pub fn grid(&self, var: SweepVar) -> Result<Vec<f64>, CliError> {
        if !self.sweep_values.is_empty() {
            return Ok(self.sweep_values.clone());
        }
        let (lo, hi) = match var {
            SweepVar::R0 => (1e3, 1e5),
            SweepVar::Snr => (0.0, 30.0),
            SweepVar::M => (3.0, 10.0),
        };
        let start = self.sweep_start.unwrap_or(lo);
        let stop = self.sweep_stop.unwrap_or(hi);
        let n = self.sweep_points;
        let log = var != SweepVar::Snr;
        if log && (start <= 0.0 || stop <= 0.0) {
            return Err(bad(format!("{} sweep needs positive bounds", var.name())));
        }
        if n == 1 {
            return Ok(vec![start]);
        }
        Ok((0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                if log {
                    10f64.powf(start.log10() + f * (stop.log10() - start.log10()))
                } else {
                    start + f * (stop - start)
                }
            })
            .collect())
    }

    /// Settings echoed into output headers.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |x| x.to_string());
        vec![
            ("problem", self.problem.name().into()),
            ("bandwidth_hz", self.bandwidth_hz.to_string()),
            ("payload_bits", self.payload_bits.to_string()),
            ("snr_db", self.snr_db.as_deref().map_or("default".into(), list)),
            ("m", self.m.to_string()),
            ("gain", list(&self.gain)),
            ("mc_samples", self.mc_samples.to_string()),
            ("calibration_samples", self.calibration_samples.to_string()),
            ("seed", self.seed.to_string()),
            ("mode", self.mode.name().into()),
            ("workers", self.workers.to_string()),
            ("mu", opt(self.mu)),
            ("theta", opt(self.theta)),
            ("max_nodes", self.max_nodes.to_string()),
            ("sweep_var", self.sweep_var.name().into()),
            ("sweep_start", opt(self.sweep_start)),
            ("sweep_stop", opt(self.sweep_stop)),
            ("sweep_points", self.sweep_points.to_string()),
            ("sweep_values", list(&self.sweep_values)),
        ]
    }
}
