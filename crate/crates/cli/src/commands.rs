//! Command implementations shared by the binary and the test suites.

use std::fmt::Write as _;
use std::path::Path;

use tsm_core::analysis::{
    bifurcation_sweep, flow_sample, green_fraction, linspace, logspace, Attractor, FlowSample,
    SweepParam, SweepRow, SweepSpec,
};
use tsm_core::dynamics::ays::{AysControl, AysParams, AysTransformed};
use tsm_core::grid::PointSet;
use tsm_core::tsm::{tsm_partition, RegionLabel, TsmResult, REGION_COUNT};
use tsm_core::viability::{capture_basin, viability_kernel, SetIterationRun};

use crate::config::{ModelKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::format::{self, PartitionFile};

/// Runs `f` on a dedicated pool when a worker count is given; zero or
/// absent means the default pool.
pub fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        None | Some(0) => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool construction")
            .install(f),
    }
}

pub fn run_partition(cfg: &RunConfig) -> CliResult<TsmResult> {
    let built = cfg.build()?;
    let grid = cfg.grid()?;
    let scfg = cfg.successor_config(&grid, built.system.as_ref())?;
    let desirable: &(dyn Fn(&[f64]) -> bool + Sync) = &*built.desirable;
    let mut result = tsm_partition(built.system.as_ref(), desirable, &grid, &scfg)?;
    result.meta.config_echo = cfg.canonical_echo();
    if let Some(map) = built.map {
        result = result.with_map(map);
    }
    Ok(result)
}

pub fn partition_file_of(result: &TsmResult) -> PartitionFile {
    PartitionFile {
        grid: result.grid().clone(),
        config_echo: result.meta.config_echo.clone(),
        regions: format::region_table(),
        labels: result.labels.codes().to_vec(),
    }
}

pub fn set_file_of(set: &PointSet, cfg: &RunConfig) -> PartitionFile {
    let labels = (0..set.grid().len())
        .map(|i| set.contains(i) as u8)
        .collect();
    PartitionFile {
        grid: set.grid().clone(),
        config_echo: cfg.canonical_echo(),
        regions: format::set_table(),
        labels,
    }
}

pub fn partition_summary(result: &TsmResult, cfg: &RunConfig) -> String {
    let total = result.grid().len();
    let mut out = String::new();
    let _ = writeln!(out, "# tsm partition");
    let _ = writeln!(out, "# config_hash={}", cfg.config_hash());
    let _ = writeln!(out, "# wall_seconds={:.3}", result.meta.wall_seconds);
    let _ = writeln!(out, "# norm={}", result.meta.norm);
    let _ = writeln!(
        out,
        "# unnamed_downstream={}",
        result.meta.unnamed_downstream
    );
    for st in &result.meta.stages {
        let _ = writeln!(
            out,
            "# stage {} iterations={} cardinality={} seconds={:.3}",
            st.name, st.iterations, st.cardinality, st.seconds
        );
    }
    let _ = writeln!(out, "region,count,fraction");
    for label in RegionLabel::ALL {
        let count = result.counts[label.code() as usize];
        let _ = writeln!(
            out,
            "{},{},{}",
            label.name(),
            count,
            count as f64 / total as f64
        );
    }
    let _ = writeln!(out, "total,{},{}", total, 1.0);
    out
}

/// The constraint selector for kernel/capture runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Desirable,
    All,
}

impl ConstraintKind {
    pub fn parse(s: &str) -> CliResult<ConstraintKind> {
        match s {
            "desirable" => Ok(ConstraintKind::Desirable),
            "all" => Ok(ConstraintKind::All),
            _ => Err(CliError::Config(format!(
                "constraint must be `desirable` or `all`, got `{s}`"
            ))),
        }
    }
}

fn constraint_set(
    cfg: &RunConfig,
    kind: ConstraintKind,
) -> CliResult<(PointSet, crate::config::BuiltModel)> {
    let built = cfg.build()?;
    let grid = cfg.grid()?;
    let set = match kind {
        ConstraintKind::All => PointSet::full(grid),
        ConstraintKind::Desirable => PointSet::from_predicate(&grid, &built.desirable),
    };
    Ok((set, built))
}

pub fn run_kernel(cfg: &RunConfig, constraint: ConstraintKind) -> CliResult<SetIterationRun> {
    let (constraint_set, built) = constraint_set(cfg, constraint)?;
    let grid = constraint_set.grid().clone();
    let scfg = cfg.successor_config(&grid, built.system.as_ref())?;
    let controls = built.system.controls();
    Ok(viability_kernel(
        &constraint_set,
        built.system.as_ref(),
        &scfg,
        &controls,
    )?)
}

pub fn run_capture(
    cfg: &RunConfig,
    target: &PartitionFile,
    constraint: ConstraintKind,
) -> CliResult<SetIterationRun> {
    let (constraint_set, built) = constraint_set(cfg, constraint)?;
    let grid = constraint_set.grid().clone();
    if target.grid.as_ref() != grid.as_ref() {
        return Err(CliError::Config(
            "target file grid does not match the configured grid (dimension, axes or resolution)"
                .to_string(),
        ));
    }
    let target_set = PointSet::from_indices(
        grid.clone(),
        target
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, _)| i),
    );
    if target_set.is_empty() {
        eprintln!("warning: capture target is empty; the basin is empty");
    }
    let scfg = cfg.successor_config(&grid, built.system.as_ref())?;
    let controls = built.system.controls();
    Ok(capture_basin(
        &target_set,
        &constraint_set,
        built.system.as_ref(),
        &scfg,
        &controls,
    )?)
}

pub fn set_summary(title: &str, run: &SetIterationRun, cfg: &RunConfig) -> String {
    let total = run.set.grid().len();
    let count = run.set.cardinality();
    let mut out = String::new();
    let _ = writeln!(out, "# tsm {title}");
    let _ = writeln!(out, "# config_hash={}", cfg.config_hash());
    let _ = writeln!(out, "# iterations={}", run.iterations);
    let _ = writeln!(out, "result,count,fraction");
    let _ = writeln!(out, "{},{},{}", title, count, count as f64 / total as f64);
    out
}

pub struct SweepRequest {
    pub param: SweepParam,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub steps: Option<usize>,
    pub log: bool,
}

pub fn run_sweep(cfg: &RunConfig, req: &SweepRequest) -> CliResult<Vec<SweepRow>> {
    if cfg.model != ModelKind::Ays {
        return Err(CliError::Config("sweep requires the ays model".into()));
    }
    let grid = cfg.grid()?;
    let built = cfg.build()?;
    let successor = cfg.successor_config(&grid, built.system.as_ref())?;
    let mut spec = match req.param {
        SweepParam::BetaLg => SweepSpec::beta_lg_default(cfg.params.clone(), cfg.resolution),
        SweepParam::SigmaEt => SweepSpec::sigma_et_default(cfg.params.clone(), cfg.resolution),
    };
    spec.controls = cfg.controls.clone();
    spec.epsilon = cfg.epsilon;
    spec.successor = Some(successor);
    if let (Some(from), Some(to), Some(steps)) = (req.from, req.to, req.steps) {
        spec.values = if req.log {
            logspace(from, to, steps)
        } else {
            linspace(from, to, steps)
        };
    } else if req.from.is_some() || req.to.is_some() || req.steps.is_some() {
        return Err(CliError::Config(
            "sweep range: give all of --from, --to and --steps, or none".into(),
        ));
    }
    Ok(bifurcation_sweep(&spec)?)
}

pub fn sweep_table(rows: &[SweepRow], param: SweepParam, cfg: &RunConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# tsm sweep param={}", param.name());
    let _ = writeln!(out, "# config_hash={}", cfg.config_hash());
    let _ = write!(out, "value");
    for label in RegionLabel::ALL {
        let _ = write!(out, ",{}", label.name());
    }
    let _ = writeln!(out, ",error");
    for row in rows {
        let _ = write!(out, "{:?}", row.value);
        match &row.volumes {
            Some(v) => {
                for value in v.iter() {
                    let _ = write!(out, ",{value}");
                }
            }
            None => {
                for _ in 0..REGION_COUNT {
                    let _ = write!(out, ",");
                }
            }
        }
        let err = row.error.as_deref().unwrap_or("").replace(',', ";");
        let _ = writeln!(out, ",{err}");
    }
    out
}

pub fn run_classify(file: &PartitionFile, state: [f64; 3]) -> CliResult<String> {
    let cfg = RunConfig::parse(&file.config_echo).map_err(|e| {
        CliError::Io(format!(
            "partition file carries an unreadable config echo: {e}"
        ))
    })?;
    if cfg.model != ModelKind::Ays || file.grid.dim() != 3 {
        return Err(CliError::Config(
            "classify needs a three-dimensional ays partition file".into(),
        ));
    }
    let map = cfg.params.compact_map();
    let y = map.compactify(&state)?;
    let index = file.grid.index_of(&y)?;
    let code = file.labels[index];
    Ok(file
        .region_name(code)
        .map(str::to_string)
        .unwrap_or_else(|| format!("code{code}")))
}

pub struct FlowRequest {
    pub count: usize,
    pub control: AysControl,
    pub t_end: f64,
    pub step: f64,
}

pub fn run_flow(cfg: &RunConfig, req: &FlowRequest) -> CliResult<Vec<FlowSample>> {
    if cfg.model != ModelKind::Ays {
        return Err(CliError::Config("flow requires the ays model".into()));
    }
    // the chosen management option becomes the sampled flow
    let (beta, sigma) = req.control.effective(&cfg.params);
    let params = AysParams {
        beta,
        sigma,
        ..cfg.params.clone()
    };
    let sys = AysTransformed::with_controls(params, &[AysControl::Default])?;
    Ok(flow_sample(&sys, req.count, cfg.seed, req.t_end, req.step)?)
}

pub fn flow_trajectory_csv(
    sample: &FlowSample,
    index: usize,
    cfg: &RunConfig,
    control: AysControl,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# tsm flow sample {index}");
    let _ = writeln!(out, "# config_hash={}", cfg.config_hash());
    let _ = writeln!(out, "# control={}", control.name());
    let _ = writeln!(out, "# seed={}", cfg.seed);
    let attractor = match sample.attractor {
        Attractor::Green => "green",
        Attractor::Black => "black",
    };
    let _ = writeln!(out, "# attractor={attractor}");
    let _ = writeln!(out, "t,a,y,s");
    for (t, state) in sample
        .trajectory
        .times
        .iter()
        .zip(&sample.trajectory.states)
    {
        let _ = writeln!(out, "{:?},{:?},{:?},{:?}", t, state[0], state[1], state[2]);
    }
    out
}

pub fn flow_summary(samples: &[FlowSample], cfg: &RunConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# tsm flow");
    let _ = writeln!(out, "# config_hash={}", cfg.config_hash());
    let _ = writeln!(out, "count,green_fraction");
    let _ = writeln!(out, "{},{}", samples.len(), green_fraction(samples));
    out
}

/// Writes text via a temporary sibling and rename.
pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, text)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Io(format!("renaming into {}: {e}", path.display())))?;
    Ok(())
}

/// Reconstructs a `TsmResult`-equivalent view from a partition file:
/// labels, counts and the echoed configuration.
pub fn result_from_file(file: &PartitionFile) -> CliResult<(TsmResult, RunConfig)> {
    let cfg = RunConfig::parse(&file.config_echo)
        .map_err(|e| CliError::Io(format!("config echo: {e}")))?;
    let labels = tsm_core::grid::LabelArray::from_codes(file.grid.clone(), file.labels.clone())
        .map_err(CliError::from)?;
    let mut counts = [0usize; REGION_COUNT];
    for &c in file.labels.iter() {
        if (c as usize) < REGION_COUNT {
            counts[c as usize] += 1;
        }
    }
    let meta = tsm_core::tsm::RunMetadata {
        config_echo: file.config_echo.clone(),
        norm: "euclidean",
        ..Default::default()
    };
    let mut result = TsmResult {
        labels,
        counts,
        meta,
        map: None,
    };
    if cfg.model == ModelKind::Ays {
        result = result.with_map(cfg.params.compact_map());
    }
    Ok((result, cfg))
}
