use std::path::{Path, PathBuf};
use std::time::Instant;

use wpc_delay::montecarlo::estimate;
use wpc_delay::multi_user::{avg_td_p5, avg_td_p6, calibrate_theta, solve_p5, solve_p6_inner};
use wpc_delay::single_user::{
    avg_td_p1, avg_td_p2, avg_td_p3, avg_td_p4, calibrate_mu_p2, calibrate_mu_p4_exact, p4_approx_mu, solve_p1,
    solve_p2, solve_p3, solve_p4, solve_p4_with, BetaScan,
};
use wpc_delay::{
    db_to_linear, ChannelGain, DelayStats, FadingModel, MultiUserParams, MultiplierState, P4Mode, SubgradientState,
    SystemParams,
};

use crate::config::{Config, Mode, Problem, SweepVar, DEFAULT_SNR_DB};
use crate::table::{Cell, Table};
use crate::{ctx, CliError};

const FIGURE_SNR_DB: [f64; 3] = [5.0, 10.0, 20.0];

fn header(table: &mut Table, cfg: &Config, command: &str) {
    table.meta(format!("wpcdelay {}", env!("CARGO_PKG_VERSION")));
    table.meta(format!("command = {command}"));
    for (k, v) in cfg.entries() {
        table.meta(format!("{k} = {v}"));
    }
}

fn fading(m: f64) -> Result<FadingModel, CliError> {
    ctx(FadingModel::new(m), "fading model")
}

fn single(cfg: &Config, r0: f64, snr_db: f64, m: f64) -> Result<SystemParams, CliError> {
    ctx(
        SystemParams::new(cfg.bandwidth_hz, r0, db_to_linear(snr_db), fading(m)?),
        "system parameters",
    )
}

fn multi(cfg: &Config, r0: f64, snr_db: &[f64], m: f64) -> Result<MultiUserParams, CliError> {
    if snr_db.len() > cfg.max_nodes {
        return Err(CliError::Config(format!(
            "{} nodes exceed --max-nodes = {}",
            snr_db.len(),
            cfg.max_nodes
        )));
    }
    let a = snr_db.iter().map(|s| db_to_linear(*s)).collect();
    ctx(MultiUserParams::new(cfg.bandwidth_hz, r0, a, fading(m)?), "system parameters")
}

fn multiplier(cfg: &Config, p: &SystemParams, problem: Problem, mode: Mode) -> Result<MultiplierState, CliError> {
    if let Some(mu) = cfg.mu {
        return MultiplierState::new(mu).map_err(|_| CliError::Config(format!("--mu must be positive, got {mu}")));
    }
    match (problem, mode) {
        (Problem::P2, _) => ctx(calibrate_mu_p2(p), "P2 multiplier calibration E{β} = 1"),
        (_, Mode::Exact) => ctx(calibrate_mu_p4_exact(p), "P4 exact multiplier calibration E{β} = 1"),
        (_, Mode::Approx) => ctx(p4_approx_mu(p), "P4 approximate multiplier"),
    }
}

fn price(cfg: &Config, p: &MultiUserParams) -> Result<SubgradientState, CliError> {
    match cfg.theta {
        Some(t) if !(t > 0.0 && t.is_finite()) => Err(CliError::Config(format!("--theta must be positive, got {t}"))),
        Some(t) => Ok(SubgradientState::at_theta(t, p.k())),
        None => ctx(
            calibrate_theta(p, cfg.calibration_samples, cfg.seed),
            "P6 sub-gradient price calibration E{β} = 1",
        ),
    }
}

fn p4_context(mode: Mode) -> &'static str {
    match mode {
        Mode::Exact => "P4 exact β stationarity equation",
        Mode::Approx => "P4 approximate β and uplink rate equality",
    }
}

fn gains(values: &[f64]) -> Result<Vec<ChannelGain>, CliError> {
    values.iter().map(|g| ctx(ChannelGain::new(*g), "--gain")).collect()
}

const SOLVE_COLUMNS: [&str; 10] = [
    "problem",
    "node",
    "snr_db",
    "gain",
    "t1_s",
    "t2_s",
    "beta",
    "rate_bits",
    "td_s",
    "multiplier",
];

pub fn solve(cfg: &Config) -> Result<(), CliError> {
    let start = Instant::now();
    let snr = cfg.snr_or(&[DEFAULT_SNR_DB]);
    let k = snr.len();
    if cfg.gain.len() != k {
        return Err(CliError::Config(format!(
            "solve needs one --gain per node ({k} node(s), {} gain(s))",
            cfg.gain.len()
        )));
    }
    if !cfg.problem.multi_user() && k != 1 {
        return Err(CliError::Config(format!(
            "{} is a single-node problem; give exactly one --snr-db",
            cfg.problem.name()
        )));
    }
    let h = gains(&cfg.gain)?;
    let mut table = Table::new(SOLVE_COLUMNS.iter().map(|s| s.to_string()).collect());
    header(&mut table, cfg, "solve");
    let name = cfg.problem.name();

    if cfg.problem.multi_user() {
        let p = multi(cfg, cfg.payload_bits, &snr, cfg.m)?;
        let (alloc, theta) = match cfg.problem {
            Problem::P5 => (ctx(solve_p5(&p, &h), "P5 common-slot equation Σ t2,k = t1")?, None),
            _ => {
                let state = price(cfg, &p)?;
                if state.theta_trace.len() > 1 {
                    table.meta(format!("calibration_residual = {:?}", state.residual));
                    table.meta(format!("calibration_iterations = {}", state.iteration));
                }
                let (alloc, _) = ctx(solve_p6_inner(&p, &h, state.theta), "P6 KKT system (damped Newton)")?;
                (alloc, Some(state.theta))
            }
        };
        let rates = ctx(alloc.rates_bits(&p, &h), "uplink rate")?;
        for i in 0..k {
            table.push(vec![
                name.into(),
                i.into(),
                snr[i].into(),
                cfg.gain[i].into(),
                alloc.t1.into(),
                alloc.t2[i].into(),
                alloc.beta.into(),
                rates[i].into(),
                alloc.delay().into(),
                theta.into(),
            ]);
        }
    } else {
        let p = single(cfg, cfg.payload_bits, snr[0], cfg.m)?;
        let (alloc, mu) = match cfg.problem {
            Problem::P1 => (ctx(solve_p1(&p, h[0]), "P1 equal-slot rate equality")?, None),
            Problem::P3 => (ctx(solve_p3(&p, h[0]), "P3 free-slot stationarity (Lambert W)")?, None),
            problem => {
                let state = multiplier(cfg, &p, problem, cfg.mode)?;
                if cfg.mu.is_none() {
                    table.meta(format!("calibration_residual = {:?}", state.calibration_residual));
                }
                let alloc = if problem == Problem::P2 {
                    ctx(solve_p2(&p, h[0], &state), "P2 power allocation (Lambert W)")?
                } else {
                    ctx(solve_p4(&p, h[0], &state, cfg.mode.p4()), p4_context(cfg.mode))?
                };
                (alloc, Some(state.mu))
            }
        };
        table.push(vec![
            name.into(),
            0usize.into(),
            snr[0].into(),
            cfg.gain[0].into(),
            alloc.t1.into(),
            alloc.t2.into(),
            alloc.beta.into(),
            alloc.rate_bits.into(),
            alloc.delay().into(),
            mu.into(),
        ]);
    }
    table.trailer(format!("runtime_s = {:.3}", start.elapsed().as_secs_f64()));
    Ok(table.write(cfg.out.as_deref())?)
}

/// Average delay of one grid point, with the multiplier used.
struct Point {
    stats: DelayStats,
    multiplier: Option<f64>,
    residual: Option<f64>,
}

fn average(cfg: &Config, problem: Problem, r0: f64, snr_db: &[f64], m: f64) -> Result<Point, CliError> {
    let plain = |stats| Point {
        stats,
        multiplier: None,
        residual: None,
    };
    if problem.multi_user() {
        let p = multi(cfg, r0, snr_db, m)?;
        if problem == Problem::P5 {
            return Ok(plain(ctx(avg_td_p5(&p, cfg.mc_samples, cfg.seed), "P5 average delay")?));
        }
        let state = price(cfg, &p)?;
        let stats = ctx(avg_td_p6(&p, &state, cfg.mc_samples, cfg.seed), "P6 average delay")?;
        return Ok(Point {
            stats,
            multiplier: Some(state.theta),
            residual: cfg.theta.is_none().then_some(state.residual),
        });
    }
    if snr_db.len() != 1 {
        return Err(CliError::Config(format!(
            "{} is a single-node problem; give exactly one --snr-db",
            problem.name()
        )));
    }
    let p = single(cfg, r0, snr_db[0], m)?;
    match problem {
        Problem::P1 => Ok(plain(ctx(avg_td_p1(&p), "P1 average delay")?)),
        Problem::P3 => Ok(plain(ctx(avg_td_p3(&p), "P3 average delay")?)),
        _ => {
            let state = multiplier(cfg, &p, problem, cfg.mode)?;
            let stats = if problem == Problem::P2 {
                ctx(avg_td_p2(&p, &state), "P2 average delay")?
            } else {
                ctx(avg_td_p4(&p, &state, cfg.mode.p4()), p4_context(cfg.mode))?
            };
            Ok(Point {
                stats,
                multiplier: Some(state.mu),
                residual: cfg.mu.is_none().then_some(state.calibration_residual),
            })
        }
    }
}

pub fn sweep(cfg: &Config) -> Result<(), CliError> {
    let start = Instant::now();
    let var = cfg.sweep_var;
    let grid = cfg.grid(var)?;
    let snr = cfg.snr_or(&[DEFAULT_SNR_DB]);
    let columns = [
        var.column(),
        "td_mean_s",
        "td_error_s",
        "error_kind",
        "multiplier",
        "calibration_residual",
    ];
    let mut table = Table::new(columns.iter().map(|s| s.to_string()).collect());
    header(&mut table, cfg, "sweep");
    for (i, v) in grid.iter().enumerate() {
        let t = Instant::now();
        let (r0, m) = match var {
            SweepVar::R0 => (*v, cfg.m),
            SweepVar::M => (cfg.payload_bits, *v),
            SweepVar::Snr => (cfg.payload_bits, cfg.m),
        };
        let s = match var {
            SweepVar::Snr => vec![*v; snr.len()],
            _ => snr.clone(),
        };
        let pt = average(cfg, cfg.problem, r0, &s, m)?;
        let kind = match pt.stats.method {
            wpc_delay::Method::Quadrature => "quadrature_abs_error",
            wpc_delay::Method::MonteCarlo => "std_error",
        };
        table.push(vec![
            (*v).into(),
            pt.stats.mean.into(),
            pt.stats.std_error.into(),
            kind.into(),
            pt.multiplier.into(),
            pt.residual.into(),
        ]);
        table.trailer(format!("runtime_s[{i}] = {:.3}", t.elapsed().as_secs_f64()));
    }
    table.trailer(format!("runtime_s = {:.3}", start.elapsed().as_secs_f64()));
    Ok(table.write(cfg.out.as_deref())?)
}

fn label(snr_db: f64) -> String {
    format!("{snr_db}db").replace('.', "p").replace('-', "m")
}

fn figure_dir(cfg: &Config) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn emit(table: &mut Table, dir: &Path, file: &str, start: Instant) -> Result<(), CliError> {
    table.trailer(format!("runtime_s = {:.3}", start.elapsed().as_secs_f64()));
    let path = dir.join(file);
    table.write(Some(&path))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn figure(cfg: &Config, number: u8) -> Result<(), CliError> {
    let dir = figure_dir(cfg);
    let r0s = cfg.grid(SweepVar::R0)?;
    match number {
        2 => figure2(cfg, &dir, &r0s),
        3 => figure3(cfg, &dir, &r0s),
        4 => figure4(cfg, &dir, &r0s),
        5 => figure5(cfg, &dir, &r0s),
        _ => figure6(cfg, &dir, &r0s),
    }
}

/// Calibrated exact and approximate P4 multipliers against R0.
fn figure2(cfg: &Config, dir: &Path, r0s: &[f64]) -> Result<(), CliError> {
    let start = Instant::now();
    let snr = cfg.snr_or(&FIGURE_SNR_DB);
    let mut cols = vec!["r0_bits".to_string()];
    for s in &snr {
        cols.push(format!("mu_exact_{}", label(*s)));
        cols.push(format!("mu_approx_{}", label(*s)));
    }
    let mut table = Table::new(cols);
    header(&mut table, cfg, "figure 2");
    for r0 in r0s {
        let mut row: Vec<Cell> = vec![(*r0).into()];
        for s in &snr {
            let p = single(cfg, *r0, *s, cfg.m)?;
            row.push(ctx(calibrate_mu_p4_exact(&p), "P4 exact multiplier calibration E{β} = 1")?.mu.into());
            row.push(ctx(p4_approx_mu(&p), "P4 approximate multiplier")?.mu.into());
        }
        table.push(row);
    }
    emit(&mut table, dir, "figure2.csv", start)
}

/// P4 exact and approximate averages, plus a Monte-Carlo check of the
/// exact policy.
fn figure3(cfg: &Config, dir: &Path, r0s: &[f64]) -> Result<(), CliError> {
    let start = Instant::now();
    let snr = cfg.snr_or(&FIGURE_SNR_DB);
    let mut cols = vec!["r0_bits".to_string()];
    for s in &snr {
        let l = label(*s);
        cols.extend([
            format!("td_exact_{l}_s"),
            format!("td_approx_{l}_s"),
            format!("td_mc_{l}_s"),
            format!("td_mc_se_{l}_s"),
        ]);
    }
    let mut table = Table::new(cols);
    header(&mut table, cfg, "figure 3");
    for r0 in r0s {
        let mut row: Vec<Cell> = vec![(*r0).into()];
        for s in &snr {
            let p = single(cfg, *r0, *s, cfg.m)?;
            let exact = ctx(calibrate_mu_p4_exact(&p), "P4 exact multiplier calibration E{β} = 1")?;
            let approx = ctx(p4_approx_mu(&p), "P4 approximate multiplier")?;
            row.push(ctx(avg_td_p4(&p, &exact, P4Mode::Exact), p4_context(Mode::Exact))?.mean.into());
            row.push(ctx(avg_td_p4(&p, &approx, P4Mode::Approx), p4_context(Mode::Approx))?.mean.into());
            let mc = ctx(
                estimate(
                    |h| {
                        let h = ChannelGain::new(h[0])?;
                        Ok(solve_p4_with(&p, h, &exact, P4Mode::Exact, &BetaScan::WIDE)?.delay())
                    },
                    &p.fading,
                    1,
                    cfg.mc_samples,
                    cfg.seed,
                ),
                "P4 Monte-Carlo delay",
            )?;
            row.push(mc.mean.into());
            row.push(mc.std_error.into());
        }
        table.push(row);
    }
    emit(&mut table, dir, "figure3.csv", start)
}

fn single_user_row(cfg: &Config, r0: f64, snr_db: f64, m: f64) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::with_capacity(4);
    for problem in [Problem::P1, Problem::P2, Problem::P3, Problem::P4] {
        out.push(average(cfg, problem, r0, &[snr_db], m)?.stats.mean);
    }
    Ok(out)
}

/// P1 to P4 averages against R0, one file per SNR.
fn figure4(cfg: &Config, dir: &Path, r0s: &[f64]) -> Result<(), CliError> {
    let snr = cfg.snr_or(&FIGURE_SNR_DB);
    for (i, s) in snr.iter().enumerate() {
        let start = Instant::now();
        let cols = ["r0_bits", "td_p1_s", "td_p2_s", "td_p3_s", "td_p4_s"];
        let mut table = Table::new(cols.iter().map(|c| c.to_string()).collect());
        header(&mut table, cfg, &format!("figure 4 panel snr_db = {s}"));
        for r0 in r0s {
            let mut row: Vec<Cell> = vec![(*r0).into()];
            row.extend(single_user_row(cfg, *r0, *s, cfg.m)?.into_iter().map(Cell::from));
            table.push(row);
        }
        let suffix = char::from(b'a' + (i % 26) as u8);
        emit(&mut table, dir, &format!("figure4{suffix}.csv"), start)?;
    }
    Ok(())
}

/// P1 to P4 averages against R0 for two fading orders.
fn figure5(cfg: &Config, dir: &Path, r0s: &[f64]) -> Result<(), CliError> {
    let start = Instant::now();
    let s = cfg.snr_or(&[DEFAULT_SNR_DB])[0];
    let orders: Vec<f64> = if cfg.m == 10.0 { vec![10.0] } else { vec![cfg.m, 10.0] };
    let mut cols = vec!["r0_bits".to_string()];
    for m in &orders {
        for p in 1..=4 {
            cols.push(format!("td_p{p}_m{m}_s").replace('.', "p"));
        }
    }
    let mut table = Table::new(cols);
    header(&mut table, cfg, &format!("figure 5 snr_db = {s}"));
    for r0 in r0s {
        let mut row: Vec<Cell> = vec![(*r0).into()];
        for m in &orders {
            row.extend(single_user_row(cfg, *r0, s, *m)?.into_iter().map(Cell::from));
        }
        table.push(row);
    }
    emit(&mut table, dir, "figure5.csv", start)
}

/// Two equal-SNR nodes: P5 and P6 Monte-Carlo averages against R0.
fn figure6(cfg: &Config, dir: &Path, r0s: &[f64]) -> Result<(), CliError> {
    let start = Instant::now();
    let snr = cfg.snr_or(&FIGURE_SNR_DB);
    let mut cols = vec!["r0_bits".to_string()];
    for s in &snr {
        let l = label(*s);
        cols.extend([
            format!("td_p5_{l}_s"),
            format!("td_p5_se_{l}_s"),
            format!("td_p6_{l}_s"),
            format!("td_p6_se_{l}_s"),
        ]);
    }
    let mut table = Table::new(cols);
    header(&mut table, cfg, "figure 6 nodes = 2");
    for r0 in r0s {
        let mut row: Vec<Cell> = vec![(*r0).into()];
        for s in &snr {
            for problem in [Problem::P5, Problem::P6] {
                let pt = average(cfg, problem, *r0, &[*s, *s], cfg.m)?;
                row.push(pt.stats.mean.into());
                row.push(pt.stats.std_error.into());
            }
        }
        table.push(row);
    }
    emit(&mut table, dir, "figure6.csv", start)
}
