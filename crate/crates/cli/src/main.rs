use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use exact_lms::classical::{compute_moment_matrices, ia_beta_bound_mean, ia_first_order, ia_second_order};
use exact_lms::closure::{count_equations, derive_model_with, ClosureOptions, ModelOrder, StateSpaceModel};
use exact_lms::config::{preset_scenario, Distribution, SystemConfig};
use exact_lms::montecarlo::{divergence_probability, run, TrialPlan};
use exact_lms::numerics::{find_beta_max, iterate, steady_state};
use exact_lms::Error;

#[derive(Parser)]
#[command(name = "exact-lms", version, about = "Exact moment-closure analysis of the deficient-length LMS filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive a closed state-space model and export it as JSON.
    Derive {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = exact_lms::closure::DEFAULT_CAP)]
        cap: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Count state equations over a grid of (N, M).
    Count {
        /// Single value or inclusive range `lo..hi`.
        #[arg(long, default_value = "1..4")]
        n: String,
        #[arg(long, default_value = "1..4")]
        m: String,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long, default_value_t = 200_000)]
        cap: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Iterate a model and emit its outputs per iteration.
    Iterate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, value_enum, default_value_t = Analysis::Exact)]
        model: Analysis,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Closed-form steady state, at --beta or over --beta-grid.
    SteadyState {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, value_enum, default_value_t = Analysis::Exact)]
        model: Analysis,
        #[arg(long, value_parser = parse_grid)]
        beta_grid: Option<Grid>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Largest stable step size of the IA and exact second-order models.
    Stability {
        #[command(flatten)]
        system: SystemArgs,
        /// Also estimate the divergence probability over --beta-grid.
        #[arg(long)]
        empirical: bool,
        #[arg(long, value_parser = parse_grid)]
        beta_grid: Option<Grid>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo learning curves.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact model, IA model and Monte Carlo side by side.
    Compare {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Emit a steady-state MSE sweep instead of learning curves.
        #[arg(long, value_parser = parse_grid)]
        beta_grid: Option<Grid>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Input moment matrices R_x, R_x̄, R_x̄x̄ and K4.
    Moments {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args, Clone)]
struct SystemArgs {
    /// JSON configuration file; overrides the preset flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "config1")]
    preset: String,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 2)]
    p: usize,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value = "gaussian")]
    dist: String,
}

#[derive(Args, Clone)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Analysis {
    Exact,
    Ia,
}

const DEFAULT_BETA: f64 = 0.01;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::UnknownDistribution(_)
        | Error::UnknownPreset(_)
        | Error::MomentUnavailable { .. }
        | Error::InvalidPlan(_)
        | Error::Json(_) => 2,
        Error::CapExceeded { .. } => 3,
        Error::Unstable { .. } | Error::Diverged { .. } => 4,
        _ => 1,
    }
}

/// Evenly spaced `lo:hi:steps` step-size grid.
#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    grid_values(s).map(Grid)
}

fn grid_values(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, steps] = parts.as_slice() else {
        return Err("expected lo:hi:steps".into());
    };
    let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    let steps: usize = steps.parse().map_err(|_| format!("bad step count `{steps}`"))?;
    if steps == 0 || !(hi >= lo) {
        return Err("need steps >= 1 and hi >= lo".into());
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

fn parse_range(s: &str) -> Result<(usize, usize), Error> {
    let bad = || Error::InvalidConfig(format!("bad range `{s}` (use `a` or `a..b`)"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            Ok((a, b))
        }
        None => {
            let a = s.parse().map_err(|_| bad())?;
            Ok((a, a))
        }
    }
}

impl SystemArgs {
    fn resolve(&self) -> Result<SystemConfig, Error> {
        let cfg = match &self.config {
            Some(path) => {
                let cfg = SystemConfig::from_file(path)?;
                match self.beta {
                    Some(b) => cfg.with_beta(b),
                    None => cfg,
                }
            }
            None => preset_scenario(
                &self.preset,
                self.n,
                self.m,
                self.p,
                self.beta.unwrap_or(DEFAULT_BETA),
                Distribution::parse(&self.dist)?,
            )?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn open(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(path) => Box::new(io::BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(out: &Option<PathBuf>, value: &Value) -> Result<(), Error> {
    let mut w = open(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Writes a table as CSV (full round-trip precision) or as a JSON array of
/// row objects.
fn write_table(output: &OutputArgs, default: Format, header: &[String], rows: &[Vec<String>]) -> Result<(), Error> {
    match output.format.unwrap_or(default) {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(open(&output.out)?);
            let csv_err = |e: csv::Error| Error::Io(io::Error::other(e));
            w.write_record(header).map_err(csv_err)?;
            for r in rows {
                w.write_record(r).map_err(csv_err)?;
            }
            w.flush()?;
            Ok(())
        }
        Format::Json => {
            let list: Vec<Value> = rows
                .iter()
                .map(|r| {
                    let obj = header
                        .iter()
                        .zip(r)
                        .map(|(h, v)| {
                            let val = v.parse::<f64>().map(Value::from).unwrap_or_else(|_| Value::from(v.clone()));
                            (h.clone(), val)
                        })
                        .collect();
                    Value::Object(obj)
                })
                .collect();
            write_json(&output.out, &Value::Array(list))
        }
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn db(v: f64) -> f64 {
    10.0 * v.log10()
}

fn build_model(cfg: &SystemConfig, order: usize, analysis: Analysis) -> Result<StateSpaceModel, Error> {
    let order = ModelOrder::from_int(order)?;
    match (analysis, order) {
        (Analysis::Exact, o) => derive_model_with(cfg, o, &ClosureOptions::default()),
        (Analysis::Ia, ModelOrder::First) => ia_first_order(cfg),
        (Analysis::Ia, ModelOrder::Second) => ia_second_order(cfg),
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Derive {
            system,
            order,
            cap,
            output,
        } => {
            let cfg = system.resolve()?;
            let opts = ClosureOptions {
                cap,
                ..ClosureOptions::default()
            };
            let model = derive_model_with(&cfg, ModelOrder::from_int(order)?, &opts)?;
            write_json(&output.out, &serde_json::to_value(model.export())?)
        }
        Command::Count {
            n,
            m,
            p,
            order,
            cap,
            output,
        } => {
            let (n_lo, n_hi) = parse_range(&n)?;
            let (m_lo, m_hi) = parse_range(&m)?;
            let ord = ModelOrder::from_int(order)?;
            let mut header: Vec<String> = vec!["n".into(), "m".into()];
            if ord == ModelOrder::Second {
                header.push("p".into());
            }
            header.push("count".into());
            let mut rows = Vec::new();
            for nn in n_lo..=n_hi {
                for mm in m_lo..=m_hi {
                    let pp = if ord == ModelOrder::Second { p } else { 0 };
                    let count = match count_equations(nn, mm, pp, ord, cap) {
                        Ok(c) => c.to_string(),
                        Err(Error::CapExceeded { .. }) => "cap".into(),
                        Err(e) => return Err(e),
                    };
                    let mut row = vec![nn.to_string(), mm.to_string()];
                    if ord == ModelOrder::Second {
                        row.push(p.to_string());
                    }
                    row.push(count);
                    rows.push(row);
                }
            }
            write_table(&output, Format::Csv, &header, &rows)
        }
        Command::Iterate {
            system,
            order,
            model,
            iterations,
            output,
        } => {
            let cfg = system.resolve()?;
            let m = build_model(&cfg, order, model)?;
            let traj = iterate(&m, cfg.beta, iterations, &m.initial_state)?;
            let mut header = vec!["k".to_string()];
            header.extend(traj.names.iter().cloned());
            let has_mse = traj.names.iter().any(|n| n == "mse");
            if has_mse {
                header.push("mse_db".into());
            }
            let mse_col = traj.names.iter().position(|n| n == "mse");
            let rows: Vec<Vec<String>> = traj
                .k
                .iter()
                .zip(&traj.values)
                .map(|(k, vals)| {
                    let mut r = vec![k.to_string()];
                    r.extend(vals.iter().map(|&v| num(v)));
                    if let Some(c) = mse_col {
                        r.push(num(db(vals[c])));
                    }
                    r
                })
                .collect();
            write_table(&output, Format::Csv, &header, &rows)
        }
        Command::SteadyState {
            system,
            order,
            model,
            beta_grid,
            output,
        } => {
            let cfg = system.resolve()?;
            let m = build_model(&cfg, order, model)?;
            let grid = beta_grid.clone().map_or_else(|| vec![cfg.beta], |g| g.0);
            let mut header = vec!["beta".to_string()];
            header.extend(m.output_names());
            let mse_col = m.output_names().iter().position(|n| n == "mse");
            if mse_col.is_some() {
                header.push("mse_db".into());
            }
            header.push("spectral_radius".into());
            let mut rows = Vec::new();
            for beta in grid {
                let ss = steady_state(&m, beta)?;
                let mut r = vec![num(beta)];
                r.extend(ss.outputs.iter().map(|&v| num(v)));
                if let Some(c) = mse_col {
                    r.push(num(db(ss.outputs[c])));
                }
                r.push(num(ss.spectral_radius));
                rows.push(r);
            }
            let default = if beta_grid.is_some() { Format::Csv } else { Format::Json };
            write_table(&output, default, &header, &rows)
        }
        Command::Stability {
            system,
            empirical,
            beta_grid,
            trials,
            iterations,
            seed,
            output,
        } => {
            let cfg = system.resolve()?;
            let range = (1e-4, 2.0 * ia_beta_bound_mean(&cfg)?);
            let ia = find_beta_max(&ia_second_order(&cfg)?, range, 1e-5)?;
            let exact = find_beta_max(&build_model(&cfg, 2, Analysis::Exact)?, range, 1e-5)?;
            let mut report = json!({
                "ia": ia,
                "exact": exact,
            });
            if empirical {
                let grid = beta_grid.map_or_else(
                    || (1..=20).map(|i| ia.beta_max * 1.5 * i as f64 / 20.0).collect(),
                    |g| g.0,
                );
                let table = divergence_probability(&cfg, &grid, trials, iterations, seed)?;
                report["divergence"] = serde_json::to_value(table)?;
            }
            write_json(&output.out, &report)
        }
        Command::Simulate {
            system,
            trials,
            iterations,
            seed,
            output,
        } => {
            let cfg = system.resolve()?;
            let n = cfg.n_adaptive;
            let r = run(&TrialPlan::new(cfg, trials, iterations, seed))?;
            let mut header = vec!["k".to_string()];
            for i in 0..n {
                header.extend([format!("mean_w{i}"), format!("mean_w{i}_stderr")]);
            }
            header.extend(["mse", "mse_db", "mse_stderr"].map(String::from));
            let rows: Vec<Vec<String>> = (0..iterations)
                .map(|k| {
                    let mut row = vec![k.to_string()];
                    for i in 0..n {
                        row.extend([num(r.mean_weights[k][i]), num(r.standard_error_weights[k][i])]);
                    }
                    row.extend([num(r.mse[k]), num(db(r.mse[k])), num(r.standard_error_mse[k])]);
                    row
                })
                .collect();
            if r.diverged_trials > 0 {
                eprintln!("warning: {} of {trials} trials diverged and were excluded", r.diverged_trials);
            }
            write_table(&output, Format::Csv, &header, &rows)
        }
        Command::Compare {
            system,
            order,
            trials,
            iterations,
            seed,
            beta_grid,
            output,
        } => {
            let cfg = system.resolve()?;
            let exact = build_model(&cfg, order, Analysis::Exact)?;
            let ia = build_model(&cfg, order, Analysis::Ia)?;
            match beta_grid {
                Some(Grid(grid)) => compare_sweep(&cfg, &exact, &ia, &grid, trials, iterations, seed, &output),
                None => compare_curves(&cfg, &exact, &ia, trials, iterations, seed, &output),
            }
        }
        Command::Moments { system, output } => {
            let cfg = system.resolve()?;
            let mm = compute_moment_matrices(&cfg)?;
            let rows = |m: &exact_lms::nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
                (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
            };
            write_json(
                &output.out,
                &json!({
                    "gamma": cfg.moments.even_moments(),
                    "r_x": rows(&mm.r_x),
                    "r_xbar": rows(&mm.r_xbar),
                    "r_xbarxbar": rows(&mm.r_xbarxbar),
                    "k4": rows(&mm.k4),
                    "beta_bound_mean": ia_beta_bound_mean(&cfg)?,
                }),
            )
        }
    }
}

fn compare_curves(
    cfg: &SystemConfig,
    exact: &StateSpaceModel,
    ia: &StateSpaceModel,
    trials: usize,
    iterations: usize,
    seed: u64,
    output: &OutputArgs,
) -> Result<(), Error> {
    let n = cfg.n_adaptive;
    let k_max = iterations.saturating_sub(1);
    let te = iterate(exact, cfg.beta, k_max, &exact.initial_state)?;
    let ti = iterate(ia, cfg.beta, k_max, &ia.initial_state);
    let mc = run(&TrialPlan::new(cfg.clone(), trials, iterations, seed))?;
    let has_mse = te.names.iter().any(|s| s == "mse");

    let mut header = vec!["k".to_string()];
    for prefix in ["exact", "ia"] {
        header.extend(te.names.iter().map(|s| format!("{prefix}_{s}")));
        if has_mse {
            header.push(format!("{prefix}_mse_db"));
        }
    }
    header.extend((0..n).map(|i| format!("mc_mean_w{i}")));
    header.extend((0..n).map(|i| format!("mc_mean_w{i}_stderr")));
    header.extend(["mc_mse", "mc_mse_db", "mc_mse_stderr"].map(String::from));

    // The IA model may diverge where the exact one does not; keep its columns empty then.
    let ti = ti.ok();
    let mse_col = te.names.iter().position(|s| s == "mse");
    let rows: Vec<Vec<String>> = (0..iterations)
        .map(|k| {
            let mut row = vec![k.to_string()];
            for traj in [Some(&te), ti.as_ref()] {
                match traj {
                    Some(t) => {
                        row.extend(t.values[k].iter().map(|&v| num(v)));
                        if let Some(c) = mse_col {
                            row.push(num(db(t.values[k][c])));
                        }
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), te.names.len() + usize::from(has_mse))),
                }
            }
            row.extend(mc.mean_weights[k].iter().map(|&v| num(v)));
            row.extend(mc.standard_error_weights[k].iter().map(|&v| num(v)));
            row.extend([num(mc.mse[k]), num(db(mc.mse[k])), num(mc.standard_error_mse[k])]);
            row
        })
        .collect();
    write_table(output, Format::Csv, &header, &rows)
}

#[allow(clippy::too_many_arguments)]
fn compare_sweep(
    cfg: &SystemConfig,
    exact: &StateSpaceModel,
    ia: &StateSpaceModel,
    grid: &[f64],
    trials: usize,
    iterations: usize,
    seed: u64,
    output: &OutputArgs,
) -> Result<(), Error> {
    let header: Vec<String> = ["beta", "exact_mse", "exact_mse_db", "ia_mse", "ia_mse_db", "mc_mse", "mc_mse_db", "mc_diverged"]
        .map(String::from)
        .to_vec();
    let mse = |m: &StateSpaceModel, beta: f64| -> Option<f64> { steady_state(m, beta).ok()?.output("mse") };
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut rows = Vec::new();
    for &beta in grid {
        let e = mse(exact, beta);
        let i = mse(ia, beta);
        let r = run(&TrialPlan::new(cfg.clone().with_beta(beta), trials, iterations, seed))?;
        let tail = (iterations / 10).max(1);
        let mc = r.mse[iterations - tail..].iter().sum::<f64>() / tail as f64;
        rows.push(vec![
            num(beta),
            opt(e),
            opt(e.map(db)),
            opt(i),
            opt(i.map(db)),
            num(mc),
            num(db(mc)),
            r.diverged_trials.to_string(),
        ]);
    }
    write_table(output, Format::Csv, &header, &rows)
}
