use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tsm_cli::commands::{self, ConstraintKind, FlowRequest, SweepRequest};
use tsm_cli::config::RunConfig;
use tsm_cli::error::{CliError, CliResult};
use tsm_cli::format;
use tsm_core::analysis::SweepParam;
use tsm_core::dynamics::ays::AysControl;

/// Viability kernels, capture basins and the TSM partition of controlled
/// dynamical systems on regular grids.
#[derive(Parser)]
#[command(name = "tsm", version)]
struct Cli {
    /// Run configuration file (`key = value` lines, `#` comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 or absent: all cores). Results are identical
    /// across worker counts.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Grid points per axis, overrides the config.
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// Comma-separated control subset (default,lg,et,lg-et), overrides
    /// the config.
    #[arg(long, global = true)]
    control: Option<String>,
    /// Absolute successor time step, overrides the config.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Time-homogenization regularizer, overrides the config.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Random seed, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the full region partition and write it as a partition file.
    Partition {
        /// Output partition file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute a viability kernel and export it as a point-set file.
    Kernel {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Constraint set: `desirable` or `all`.
        #[arg(long, default_value = "desirable")]
        constraint: String,
    },
    /// Compute a capture basin of a target point-set file.
    Capture {
        /// Point-set file holding the target.
        #[arg(long = "target-file")]
        target_file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Constraint set: `desirable` or `all`.
        #[arg(long, default_value = "all")]
        constraint: String,
    },
    /// Sweep a management parameter, one partition per value.
    Sweep {
        /// `beta_lg` or `sigma_et`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Log-spaced values instead of linear.
        #[arg(long)]
        log: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Look up the region of a state (original coordinates) in a
    /// partition file.
    Classify {
        #[arg(long)]
        partition: PathBuf,
        /// Excess atmospheric carbon (GtC).
        #[arg(long = "A", allow_negative_numbers = true)]
        a: f64,
        /// Economic output (US$/a).
        #[arg(long = "Y", allow_negative_numbers = true)]
        y: f64,
        /// Renewable knowledge stock (GJ).
        #[arg(long = "S", allow_negative_numbers = true)]
        s: f64,
    },
    /// Sample flow trajectories from random initial conditions.
    Flow {
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// One CSV per trajectory: `<prefix><index>.csv`.
        #[arg(long = "out-prefix")]
        out_prefix: Option<PathBuf>,
        /// Which management option drives the flow.
        #[arg(long, default_value = "default")]
        flow_control: String,
        #[arg(long, default_value_t = 600.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.25)]
        step: f64,
    },
}

fn effective_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(r) = cli.resolution {
        if !(2..=4096).contains(&r) {
            return Err(CliError::Config("resolution must be in 2..=4096".into()));
        }
        cfg.resolution = r;
    }
    if let Some(spec) = &cli.control {
        let mut controls = Vec::new();
        for name in spec.split(',') {
            let c = AysControl::parse(name.trim())
                .ok_or_else(|| CliError::Config(format!("unknown control `{name}`")))?;
            controls.push(c);
        }
        cfg.controls = controls;
    }
    if let Some(dt) = cli.dt {
        if dt <= 0.0 {
            return Err(CliError::Config("dt must be positive".into()));
        }
        cfg.dt = Some(dt);
    }
    if let Some(eps) = cli.epsilon {
        if eps <= 0.0 {
            return Err(CliError::Config("epsilon must be positive".into()));
        }
        cfg.epsilon = eps;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Partition { out } => {
            let result = commands::with_pool(cli.workers, || commands::run_partition(&cfg))?;
            if let Some(path) = out {
                format::write_file(path, &commands::partition_file_of(&result))?;
            }
            print!("{}", commands::partition_summary(&result, &cfg));
        }
        Command::Kernel { out, constraint } => {
            let kind = ConstraintKind::parse(constraint)?;
            let run = commands::with_pool(cli.workers, || commands::run_kernel(&cfg, kind))?;
            if let Some(path) = out {
                format::write_file(path, &commands::set_file_of(&run.set, &cfg))?;
            }
            print!("{}", commands::set_summary("kernel", &run, &cfg));
        }
        Command::Capture {
            target_file,
            out,
            constraint,
        } => {
            let kind = ConstraintKind::parse(constraint)?;
            let target = format::read_file(target_file)?;
            let run =
                commands::with_pool(cli.workers, || commands::run_capture(&cfg, &target, kind))?;
            if let Some(path) = out {
                format::write_file(path, &commands::set_file_of(&run.set, &cfg))?;
            }
            print!("{}", commands::set_summary("capture", &run, &cfg));
        }
        Command::Sweep {
            param,
            from,
            to,
            steps,
            log,
            out,
        } => {
            let param = SweepParam::parse(param)
                .ok_or_else(|| CliError::Config(format!("unknown sweep parameter `{param}`")))?;
            let req = SweepRequest {
                param,
                from: *from,
                to: *to,
                steps: *steps,
                log: *log,
            };
            let rows = commands::with_pool(cli.workers, || commands::run_sweep(&cfg, &req))?;
            let table = commands::sweep_table(&rows, param, &cfg);
            if let Some(path) = out {
                commands::write_text(path, &table)?;
            }
            print!("{table}");
        }
        Command::Classify { partition, a, y, s } => {
            let file = format::read_file(partition)?;
            let name = commands::run_classify(&file, [*a, *y, *s])?;
            println!("{name}");
        }
        Command::Flow {
            count,
            out_prefix,
            flow_control,
            t_end,
            step,
        } => {
            let control = AysControl::parse(flow_control)
                .ok_or_else(|| CliError::Config(format!("unknown control `{flow_control}`")))?;
            let req = FlowRequest {
                count: *count,
                control,
                t_end: *t_end,
                step: *step,
            };
            let samples = commands::with_pool(cli.workers, || commands::run_flow(&cfg, &req))?;
            if let Some(prefix) = out_prefix {
                for (i, sample) in samples.iter().enumerate() {
                    let path = PathBuf::from(format!("{}{i:04}.csv", prefix.display()));
                    commands::write_text(
                        &path,
                        &commands::flow_trajectory_csv(sample, i, &cfg, control),
                    )?;
                }
            }
            print!("{}", commands::flow_summary(&samples, &cfg));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tsm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
