//! `pesin-lab`: command-line experiments on volume-preserving flows.

mod commands;
mod config;
mod output;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{ExperimentConfig, OutputFormat};
use output::{write_artifacts, Report};

/// Bad invocation that clap cannot catch on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "pesin-lab",
    version,
    about = "Entropy and Lyapunov exponents of volume-preserving flows"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Built-in system name or path to a JSON system file.
    #[arg(long, global = true)]
    system: Option<String>,
    /// JSON experiment configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "PESIN_LAB_THREADS")]
    threads: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    /// Sets both integrator tolerances.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    atol: Option<f64>,
    #[arg(long, global = true)]
    rtol: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct EntropyFlags {
    /// Cells per axis; one value applies to every axis.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    #[arg(long)]
    time_step: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    orbits: Option<usize>,
    #[arg(long)]
    orbit_length: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory and report conservation residuals.
    Simulate {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        record: Option<usize>,
    },
    /// Lyapunov spectrum along one orbit, or the volume average of the top exponent.
    Lyapunov {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        renorm: Option<f64>,
        /// Depths n of the finite-time operator-norm estimator.
        #[arg(long, value_delimiter = ',')]
        finite_n: Option<Vec<u32>>,
    },
    /// Dominated-splitting test for the linear Poincaré flow.
    Dominate {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long)]
        ell: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Suspension flow over a base map: lifted measure, entropy, expansivity.
    Suspend {
        #[arg(long)]
        base: Option<String>,
        /// `const:c` or `cosine:a,b`.
        #[arg(long)]
        ceiling: Option<String>,
        #[arg(long)]
        height_cells: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        probe_horizon: Option<usize>,
        #[arg(long)]
        base_entropy: Option<f64>,
        #[command(flatten)]
        entropy: EntropyFlags,
    },
    /// Partition-refinement entropy of a flow, base map or suspension.
    Entropy {
        #[arg(long)]
        base: Option<String>,
        #[arg(long)]
        ceiling: Option<String>,
        #[command(flatten)]
        entropy: EntropyFlags,
    },
    /// Compare the entropy estimate with the integrated top exponent.
    PesinCheck {
        #[command(flatten)]
        entropy: EntropyFlags,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        renorm: Option<f64>,
    },
    /// Transversal exponents on energy levels and their integral over e.
    Hamiltonian {
        /// `builtin:NAME` or a JSON system file.
        #[arg(long = "H")]
        h: Option<String>,
        /// `a:b:k` or a comma-separated list.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        renorm: Option<f64>,
        #[arg(long)]
        level_tol: Option<f64>,
    },
    /// Built-in systems, base maps and ceilings.
    ListSystems,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Lyapunov { .. } => "lyapunov",
            Command::Dominate { .. } => "dominate",
            Command::Suspend { .. } => "suspend",
            Command::Entropy { .. } => "entropy",
            Command::PesinCheck { .. } => "pesin-check",
            Command::Hamiltonian { .. } => "hamiltonian",
            Command::ListSystems => "list-systems",
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_entropy(
    flags: EntropyFlags,
    opts: &mut pesin_lab::entropy::EntropyOptions,
    time_step: &mut f64,
) {
    set(&mut opts.n_max, flags.n_max);
    set(&mut opts.n_orbits, flags.orbits);
    set(&mut opts.orbit_length, flags.orbit_length);
    set(time_step, flags.time_step);
}

fn resolve(global: Global, command: Command) -> anyhow::Result<(ExperimentConfig, bool)> {
    let mut cfg = match &global.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if global.system.is_some() {
        cfg.system = global.system;
    }
    set(&mut cfg.seed, global.seed);
    set(&mut cfg.format, global.format);
    if global.out.is_some() {
        cfg.out = global.out;
    }
    if let Some(t) = global.tol {
        cfg.integrator.atol = t;
        cfg.integrator.rtol = t;
    }
    set(&mut cfg.integrator.atol, global.atol);
    set(&mut cfg.integrator.rtol, global.rtol);
    cfg.integrator.validate()?;

    match command {
        Command::Simulate { x, t, record } => {
            let c = &mut cfg.simulate;
            if x.is_some() {
                c.point = x;
            }
            set(&mut c.t, t);
            set(&mut c.record, record);
        }
        Command::Lyapunov {
            x,
            t,
            samples,
            renorm,
            finite_n,
        } => {
            let c = &mut cfg.lyapunov;
            if x.is_some() {
                c.point = x;
            }
            set(&mut c.t, t);
            set(&mut c.samples, samples);
            set(&mut c.renorm, renorm);
            set(&mut c.finite_n, finite_n);
        }
        Command::Dominate { x, ell, horizon } => {
            let c = &mut cfg.dominate;
            if x.is_some() {
                c.point = x;
            }
            set(&mut c.ell, ell);
            set(&mut c.horizon, horizon);
        }
        Command::Suspend {
            base,
            ceiling,
            height_cells,
            samples,
            delta,
            pairs,
            probe_horizon,
            base_entropy,
            entropy,
        } => {
            let c = &mut cfg.suspend;
            set(&mut c.base, base);
            set(&mut c.ceiling, ceiling);
            if height_cells.is_some() {
                c.height_resolution = height_cells;
            }
            set(&mut c.lifted_samples, samples);
            set(&mut c.delta, delta);
            set(&mut c.pairs, pairs);
            set(&mut c.probe_horizon, probe_horizon);
            if base_entropy.is_some() {
                c.base_entropy = base_entropy;
            }
            match entropy.grid.as_deref() {
                Some([r]) => c.base_resolution = *r,
                Some(_) => {
                    return Err(UsageError(
                        "suspend --grid takes one value (cells per base axis)".into(),
                    )
                    .into())
                }
                None => {}
            }
            apply_entropy(entropy, &mut c.entropy, &mut c.time_step);
        }
        Command::Entropy {
            base,
            ceiling,
            entropy,
        } => {
            let c = &mut cfg.entropy;
            if base.is_some() {
                c.base = base;
            }
            if ceiling.is_some() {
                c.ceiling = ceiling;
            }
            if entropy.grid.is_some() {
                c.resolution = entropy.grid.clone();
            }
            apply_entropy(entropy, &mut c.options, &mut c.time_step);
        }
        Command::PesinCheck {
            entropy,
            samples,
            t,
            renorm,
        } => {
            let c = &mut cfg.pesin;
            set(&mut c.resolution, entropy.grid.clone());
            set(&mut c.lyapunov_samples, samples);
            set(&mut c.lyapunov_horizon, t);
            set(&mut c.renorm_interval, renorm);
            apply_entropy(entropy, &mut c.entropy, &mut c.time_step);
        }
        Command::Hamiltonian {
            h,
            levels,
            samples,
            t,
            renorm,
            level_tol,
        } => {
            let c = &mut cfg.hamiltonian;
            if h.is_some() {
                c.h = h;
            }
            set(&mut c.levels, levels);
            set(&mut c.samples, samples);
            set(&mut c.t, t);
            set(&mut c.renorm, renorm);
            set(&mut c.level.level_tol, level_tol);
        }
        Command::ListSystems => {}
    }
    Ok((cfg, global.force))
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let name = cli.command.name();
    let (cfg, force) = resolve(cli.global, cli.command)?;
    let report: Report = match name {
        "simulate" => commands::simulate(&cfg)?,
        "lyapunov" => commands::lyapunov(&cfg)?,
        "dominate" => commands::dominate(&cfg)?,
        "suspend" => commands::suspend_cmd(&cfg)?,
        "entropy" => commands::entropy_cmd(&cfg)?,
        "pesin-check" => commands::pesin_check(&cfg)?,
        "hamiltonian" => commands::hamiltonian(&cfg)?,
        _ => commands::list_systems()?,
    };
    let full = json!({
        "command": name,
        "config": cfg,
        "result": report.summary,
    });
    let written = write_artifacts(name, &full, &report, cfg.format, cfg.out.as_deref(), force)?;
    let mut printed = full;
    if !written.is_empty() {
        printed["files"] = json!(written);
    }
    let text = serde_json::to_string_pretty(&printed)?;
    // a closed pipe (e.g. `| head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(if report.violation { EXIT_VIOLATION } else { 0 })
}

fn exit_code(e: &anyhow::Error) -> (u8, String) {
    if let Some(core) = e.downcast_ref::<pesin_lab::Error>() {
        let code = if core.is_validation() {
            EXIT_USAGE
        } else {
            EXIT_NUMERICAL
        };
        return (code, core.kind().to_string());
    }
    if e.downcast_ref::<UsageError>().is_some() {
        return (EXIT_USAGE, "Usage".into());
    }
    (EXIT_USAGE, "Io".into())
}

fn report_error(kind: &str, message: &str, code: u8) -> ExitCode {
    let body = json!({"error": {"kind": kind, "message": message, "exit_code": code}});
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = e.print();
            }
            return report_error("Usage", e.render().to_string().trim(), EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let (code, kind) = exit_code(&e);
            report_error(&kind, &format!("{e:#}"), code)
        }
    }
}
