use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use atomlaser_cli::config::{check_run, ConfigFile};
use atomlaser_cli::preset::{self, Axis};
use atomlaser_cli::runner::{self, parse_values, RunOptions, ScanRequest};
use atomlaser_cli::{validate, RunConfig};
use atomlaser_core::observables::DEFAULT_STEADY_THRESHOLD;
use atomlaser_core::{
    build_grid, derive_params, josephson_landmarks, validity_report, IntegratorKind, SteadyOptions,
    ThresholdBasis,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "atomlaser",
    version,
    about = "Double-well condensate outcoupled into a waveguide continuum"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print derived coefficients and validity checks.
    Derive(Source),
    /// Integrate one configuration and write its CSV files and manifest.
    Run(RunArgs),
    /// Sweep Lambda or eta and classify the long-time trap population.
    Scan(ScanArgs),
    /// Run the reduced invariant suite.
    Validate,
    /// List the built-in presets.
    Presets,
}

#[derive(Args, Clone)]
struct Source {
    /// Configuration file (flat TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    omega_up: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Pulse duration τ.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    integrator: Option<Integrator>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Integrator {
    Rk4,
    Rk45,
}

#[derive(Clone, Copy, ValueEnum)]
enum Basis {
    TotalAtoms,
    TailMean,
}

#[derive(Args)]
struct Output {
    /// Output root; overrides ATOMLASER_OUT.
    #[arg(long, env = "ATOMLASER_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    output: Output,
    /// Run directory name below the output root.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    output: Output,
    #[arg(long)]
    axis: Axis,
    /// `a,b,c` or `start:stop:step`.
    #[arg(long)]
    values: String,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Peak-to-peak threshold of the steady-state test.
    #[arg(long, default_value_t = DEFAULT_STEADY_THRESHOLD)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "total-atoms")]
    basis: Basis,
    #[arg(long)]
    name: Option<String>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

struct Resolved {
    label: String,
    config: RunConfig,
    preset: Option<preset::Preset>,
}

fn resolve(src: &Source) -> Result<Resolved> {
    let mut file = match &src.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if src.preset.is_some() {
        file.preset = src.preset.clone();
    }
    let preset = file.preset.as_deref().map(preset::find).transpose()?;
    let mut config = file.resolve()?;
    if let Some(m) = src.modes {
        config.grid.modes = m;
    }
    if let Some(w) = src.omega_up {
        config.grid.omega_up = w;
    }
    if let Some(dt) = src.dt {
        config.evolution.dt = dt;
    }
    if let Some(t) = src.t_end {
        config.evolution.t_end = t;
    }
    if let Some(t) = src.tau {
        config.evolution.pulse_duration = t;
    }
    if let Some(i) = src.integrator {
        config.evolution.integrator = match i {
            Integrator::Rk4 => IntegratorKind::FixedRk4,
            Integrator::Rk45 => IntegratorKind::AdaptiveRk45,
        };
    }
    let label = file.preset.clone().unwrap_or_else(|| "custom".into());
    Ok(Resolved {
        label,
        config,
        preset,
    })
}

fn cmd_derive(src: &Source) -> Result<()> {
    let r = resolve(src)?;
    let p = &r.config.physical;
    p.validate()?;
    let mut d = derive_params(p)?;
    let grid = build_grid(
        p.outcoupling,
        p.omega_z,
        r.config.grid.modes,
        r.config.grid.omega_up,
    )?;
    d.shift = Some(grid.shift);
    let l = josephson_landmarks(p.omega_z, p.trap_ratio);
    let o = d.overlap;
    let rows: Vec<(&str, String)> = vec![
        ("l_z [m]", format!("{:.6e}", d.l_z)),
        ("l_x [m]", format!("{:.6e}", d.l_x)),
        ("omega_o exact [1/s]", format!("{:.6}", d.omega_o_exact)),
        ("omega_o approx [1/s]", format!("{:.6}", d.omega_o_approx)),
        ("J [1/s]", format!("{:.6}", d.josephson)),
        ("kappa [1/s]", format!("{:.6}", d.kappa)),
        ("overlap", format!("{o:.6e}")),
        ("N_max", format!("{:.1}", d.n_max)),
        ("S [1/s]", format!("{:.6e}", grid.shift)),
        (
            "J - S overlap [1/s]",
            format!("{:.6}", d.josephson - grid.shift * o),
        ),
        ("epsilon [1/s]", format!("{}", grid.epsilon)),
        (
            "recurrence time [s]",
            format!("{:.3}", grid.recurrence_time),
        ),
        (
            "eta_zero (bare J)",
            l.eta_zero.map_or("none".into(), |z| format!("{z:.4}")),
        ),
        ("eta_min", format!("{:.4}", l.eta_min)),
        ("J_min [1/s]", format!("{:.6}", l.j_min)),
    ];
    println!(
        "{}: {}",
        r.label,
        if r.preset.is_some() {
            "preset"
        } else {
            "config"
        }
    );
    for (k, v) in rows {
        println!("  {k:<24} {v}");
    }
    println!("validity:");
    for c in validity_report(p, &d) {
        let mark = if c.satisfied { "ok  " } else { "WARN" };
        println!(
            "  {mark} {:<40} ratio {:.4}  margin {:.2}",
            c.name, c.ratio, c.margin
        );
    }
    Ok(())
}

fn run_dir(out: &Path, name: &Option<String>, label: &str) -> PathBuf {
    out.join(name.as_deref().unwrap_or(label))
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let r = resolve(&args.source)?;
    check_run(&r.config)?;
    let dir = run_dir(&args.output.out, &args.name, &r.label);
    let opts = RunOptions {
        closeup: r.preset.as_ref().and_then(|p| p.closeup),
        ..Default::default()
    };
    let sweep = r.preset.as_ref().and_then(|p| p.sweep.clone());
    let jobs: Vec<(PathBuf, String, RunConfig)> = match sweep {
        Some(s) => s
            .values
            .iter()
            .map(|&v| {
                let mut c = r.config.clone();
                s.axis.apply(&mut c, v);
                let tag = format!("{}={}", s.axis.name(), atomlaser_cli::output::float(v));
                (dir.join(&tag), format!("{}/{tag}", r.label), c)
            })
            .collect(),
        None => vec![(dir.clone(), r.label.clone(), r.config.clone())],
    };
    for (path, label, cfg) in jobs {
        let out = runner::execute(&label, &cfg, &opts)?;
        runner::write_run(&path, &out)?;
        let m = &out.manifest;
        let last = out.series.len() - 1;
        println!(
            "{label}: N_A={:.6} N_B={:.6} N_C={:.6} drift={:.2e} steps={} ({:.2} s) -> {}",
            out.series.n_a[last],
            out.series.n_b[last],
            out.series.n_c[last],
            m.body.diagnostics.max_norm_drift,
            m.body.diagnostics.steps,
            m.wall_time_sec,
            path.display()
        );
    }
    Ok(())
}

fn cmd_scan(args: &ScanArgs) -> Result<()> {
    let r = resolve(&args.source)?;
    check_run(&r.config)?;
    let values = parse_values(&args.values)?;
    let req = ScanRequest {
        base: r.config,
        axis: args.axis,
        values,
        workers: args.workers,
        options: RunOptions {
            steady: SteadyOptions {
                threshold: args.threshold,
                basis: match args.basis {
                    Basis::TotalAtoms => ThresholdBasis::TotalAtoms,
                    Basis::TailMean => ThresholdBasis::TailMean,
                },
                ..Default::default()
            },
            ..Default::default()
        },
    };
    let default_name = format!("scan-{}-{}", r.label, args.axis.name());
    let dir = run_dir(&args.output.out, &args.name, &default_name);
    let result = runner::run_scan(&req)?;
    let path = result.write(&dir)?;
    for p in &result.points {
        let detail = match (&p.outcome, p.steady_value()) {
            (Err(e), _) => e.clone(),
            (_, Some(v)) => format!("N_A = {v:.6}"),
            (_, None) => String::new(),
        };
        println!(
            "{}={:<10} {:<16} {detail}",
            args.axis.name(),
            p.value,
            p.status.as_str()
        );
    }
    for (a, b) in result.no_steady_windows() {
        println!("no steady state for {} in [{a}, {b}]", args.axis.name());
    }
    println!("-> {}", path.display());
    if result.points.iter().all(|p| p.outcome.is_err()) {
        bail!("every scan point failed");
    }
    Ok(())
}

fn cmd_validate() -> Result<bool> {
    let mut ok = true;
    for c in validate::run_suite() {
        println!(
            "{} {:<30} {:>6.2} s  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.seconds,
            c.detail
        );
        ok &= c.passed;
    }
    Ok(ok)
}

fn cmd_presets() {
    for p in preset::all() {
        let c = &p.config;
        println!(
            "{:<14} Lambda={:<6} eta={:<4} tau={:<4} M={:<5} omega_up={} dt={}{}",
            p.name,
            c.physical.outcoupling,
            c.physical.eta,
            c.evolution.pulse_duration,
            c.grid.modes,
            c.grid.omega_up,
            c.evolution.dt,
            p.sweep.as_ref().map_or(String::new(), |s| format!(
                " sweep {}={:?}",
                s.axis.name(),
                s.values
            ))
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Derive(src) => cmd_derive(src).map(|_| true),
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Scan(a) => cmd_scan(a).map(|_| true),
        Command::Validate => cmd_validate(),
        Command::Presets => {
            cmd_presets();
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
