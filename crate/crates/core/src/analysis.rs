//! Trajectory integration and bifurcation sweeps over the management
//! parameters.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::ays::{AysControl, AysParams, AysTransformed};
use crate::dynamics::{Control, ControlledSystem};
use crate::error::{Error, Result};
use crate::geometry::Homogenized;
use crate::grid::Grid;
use crate::tsm::{relative_volumes, tsm_partition, REGION_COUNT};
use crate::viability::SuccessorConfig;

/// Piecewise-constant control schedule: each segment starts at its switch
/// time and runs until the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    segments: Vec<(f64, Control)>,
}

impl Policy {
    pub fn constant(u: Control) -> Policy {
        Policy {
            segments: vec![(0.0, u)],
        }
    }

    pub fn switching(segments: Vec<(f64, Control)>) -> Result<Policy> {
        if segments.first().map(|&(t, _)| t) != Some(0.0) {
            return Err(Error::usage("policy must start at time zero"));
        }
        if segments.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::usage(
                "policy switch times must be strictly increasing",
            ));
        }
        Ok(Policy { segments })
    }

    pub fn control_at(&self, t: f64) -> Control {
        let mut current = self.segments[0].1;
        for &(start, u) in &self.segments {
            if start > t {
                break;
            }
            current = u;
        }
        current
    }

    pub fn next_switch_after(&self, t: f64) -> Option<f64> {
        self.segments
            .iter()
            .map(|&(s, _)| s)
            .find(|&s| s > t + 1e-12)
    }

    pub fn segments(&self) -> &[(f64, Control)] {
        &self.segments
    }
}

/// A sampled solution. `exited` marks truncation at the domain boundary.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub policy: Policy,
    pub exited: bool,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }

    pub fn arc_length(&self) -> f64 {
        polyline_length(&self.states)
    }
}

fn in_domain(x: &[f64], domain: Option<(&[f64], &[f64])>) -> bool {
    match domain {
        None => true,
        Some((lo, hi)) => x
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(&v, (&l, &u))| v >= l && v <= u),
    }
}

/// One classical fourth-order Runge-Kutta step.
fn rk4_step<S: ControlledSystem + ?Sized>(
    sys: &S,
    x: &[f64],
    u: Control,
    dt: f64,
    out: &mut [f64],
) -> Result<()> {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    sys.rhs(x, u, &mut k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    sys.rhs(&tmp, u, &mut k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    sys.rhs(&tmp, u, &mut k3)?;
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    sys.rhs(&tmp, u, &mut k4)?;
    for i in 0..n {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

/// Fixed-step fourth-order integration under a piecewise-constant control
/// schedule. Steps are split at control switches. Leaving the domain box
/// (or stepping into a state the RHS rejects) truncates the trajectory
/// and sets the exit flag; other errors propagate.
pub fn integrate<S: ControlledSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    policy: &Policy,
    t_end: f64,
    step: f64,
    domain: Option<(&[f64], &[f64])>,
) -> Result<Trajectory> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::parameter(format!(
            "integration step must be positive, got {step}"
        )));
    }
    if !in_domain(x0, domain) {
        return Err(Error::domain("initial condition outside the domain box"));
    }
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    let mut exited = false;
    while t < t_end - 1e-12 {
        let mut dt = step.min(t_end - t);
        if let Some(switch) = policy.next_switch_after(t) {
            dt = dt.min(switch - t);
        }
        let u = policy.control_at(t);
        match rk4_step(sys, &x, u, dt, &mut next) {
            Ok(()) => {}
            Err(Error::Domain(_)) => {
                exited = true;
                break;
            }
            Err(e) => return Err(e),
        }
        if !in_domain(&next, domain) || next.iter().any(|v| !v.is_finite()) {
            exited = true;
            break;
        }
        t += dt;
        x.copy_from_slice(&next);
        times.push(t);
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        policy: policy.clone(),
        exited,
    })
}

pub fn polyline_length(states: &[Vec<f64>]) -> f64 {
    states
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

fn point_segment_distance_sq(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut ap_ab = 0.0;
    for i in 0..p.len() {
        let d = b[i] - a[i];
        ab2 += d * d;
        ap_ab += (p[i] - a[i]) * d;
    }
    let t = if ab2 > 0.0 {
        (ap_ab / ab2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut d2 = 0.0;
    for i in 0..p.len() {
        let c = a[i] + t * (b[i] - a[i]);
        d2 += (p[i] - c) * (p[i] - c);
    }
    d2
}

fn directed_hausdorff(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for p in from {
        let mut best = f64::INFINITY;
        if to.len() == 1 {
            best = point_segment_distance_sq(p, &to[0], &to[0]);
        }
        for w in to.windows(2) {
            let d2 = point_segment_distance_sq(p, &w[0], &w[1]);
            if d2 < best {
                best = d2;
            }
        }
        worst = worst.max(best);
    }
    worst.sqrt()
}

/// Symmetric Hausdorff distance between two polylines (vertices of one
/// against segments of the other, both ways).
pub fn polyline_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

/// Integrates the raw flow and its time-homogenized counterpart from the
/// same initial condition and returns the Hausdorff distance between the
/// two paths, with the homogenized run stopped at the raw path's arc
/// length. Orbital equivalence means this stays at the discretization
/// noise level.
pub fn path_deviation_after_homogenization<S: ControlledSystem + ?Sized>(
    sys: &S,
    epsilon: f64,
    x0: &[f64],
    u: Control,
    t_end: f64,
    step: f64,
    domain: Option<(&[f64], &[f64])>,
) -> Result<f64> {
    let policy = Policy::constant(u);
    let raw = integrate(sys, x0, &policy, t_end, step, domain)?;
    let target_arc = raw.arc_length();
    let hom = Homogenized::new(sys, epsilon)?;
    // unit speed: arc length approximately equals rescaled time; the step
    // must resolve the tightest spiral loops near foci
    let hom_step = (step * 0.1).min(target_arc / 50.0).clamp(1e-5, 1e-3);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    let mut path = vec![x.clone()];
    let mut arc = 0.0;
    let max_steps = ((target_arc / hom_step).ceil() as usize + 10) * 50;
    for _ in 0..max_steps {
        if arc >= target_arc {
            break;
        }
        match rk4_step(&hom, &x, u, hom_step, &mut next) {
            Ok(()) => {}
            Err(Error::Domain(_)) => break,
            Err(e) => return Err(e),
        }
        if !in_domain(&next, domain) {
            break;
        }
        arc += next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        x.copy_from_slice(&next);
        path.push(x.clone());
    }
    Ok(polyline_hausdorff(&raw.states, &path))
}

/// Terminal-state attractor tag for flow samples of the bundled model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attractor {
    Green,
    Black,
}

#[derive(Debug, Clone)]
pub struct FlowSample {
    pub trajectory: Trajectory,
    pub attractor: Attractor,
}

/// Samples `count` default-flow trajectories from uniform initial
/// conditions in the transformed unit cube (coordinates `(a, y, s)`).
/// A run ending at high knowledge and low carbon (`s > 0.9`, `a < 0.1`)
/// is tagged green, anything else black; the thresholds are a plotting
/// heuristic, not part of the partition algorithms.
pub fn flow_sample<S: ControlledSystem + ?Sized>(
    sys: &S,
    count: usize,
    seed: u64,
    t_end: f64,
    step: f64,
) -> Result<Vec<FlowSample>> {
    if count == 0 {
        return Err(Error::parameter("flow_sample: count must be positive"));
    }
    if sys.dim() != 3 {
        return Err(Error::usage(
            "flow_sample expects the three-dimensional transformed model",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initials: Vec<[f64; 3]> = (0..count)
        .map(|_| {
            [
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            ]
        })
        .collect();
    let lower = [0.0; 3];
    let upper = [1.0; 3];
    let policy = Policy::constant(sys.default_control());
    initials
        .par_iter()
        .map(|x0| {
            let trajectory = integrate(sys, x0, &policy, t_end, step, Some((&lower, &upper)))?;
            let end = trajectory.terminal();
            let attractor = if end[2] > 0.9 && end[0] < 0.1 {
                Attractor::Green
            } else {
                Attractor::Black
            };
            Ok(FlowSample {
                trajectory,
                attractor,
            })
        })
        .collect()
}

pub fn green_fraction(samples: &[FlowSample]) -> f64 {
    samples
        .iter()
        .filter(|s| s.attractor == Attractor::Green)
        .count() as f64
        / samples.len() as f64
}

/// Which management parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    BetaLg,
    SigmaEt,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::BetaLg => "beta_lg",
            SweepParam::SigmaEt => "sigma_et",
        }
    }

    pub fn parse(s: &str) -> Option<SweepParam> {
        match s {
            "beta_lg" => Some(SweepParam::BetaLg),
            "sigma_et" => Some(SweepParam::SigmaEt),
            _ => None,
        }
    }
}

/// A bifurcation sweep: one full partition per parameter value.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    /// Sorted, nonempty parameter values.
    pub values: Vec<f64>,
    pub base: AysParams,
    pub controls: Vec<AysControl>,
    /// Points per axis of the partition grid.
    pub resolution: usize,
    /// Homogenization regularizer.
    pub epsilon: f64,
    /// Defaults to [`SuccessorConfig::for_grid`] when absent.
    pub successor: Option<SuccessorConfig>,
}

impl SweepSpec {
    /// Low-growth sweep from 1.5 %/a to 3.5 %/a in 0.1-point steps.
    pub fn beta_lg_default(base: AysParams, resolution: usize) -> SweepSpec {
        SweepSpec {
            param: SweepParam::BetaLg,
            values: linspace(0.015, 0.035, 21),
            base,
            controls: AysControl::ALL.to_vec(),
            resolution,
            epsilon: 1e-4,
            successor: None,
        }
    }

    /// Energy-transformation sweep: eight log-spaced break-even levels in
    /// `[sigma/4, sigma]`.
    pub fn sigma_et_default(base: AysParams, resolution: usize) -> SweepSpec {
        let sigma = base.sigma;
        SweepSpec {
            param: SweepParam::SigmaEt,
            values: logspace(sigma / 4.0, sigma, 8),
            base,
            controls: AysControl::ALL.to_vec(),
            resolution,
            epsilon: 1e-4,
            successor: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::parameter("sweep: value list must be nonempty"));
        }
        if self.values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::parameter(
                "sweep: values must be strictly increasing",
            ));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("sweep: values must be finite"));
        }
        if self.resolution < 2 {
            return Err(Error::parameter("sweep: resolution must be at least 2"));
        }
        Ok(())
    }
}

/// One sweep row: region fractions, or the per-value failure.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub volumes: Option<[f64; REGION_COUNT]>,
    pub error: Option<String>,
}

fn partition_volumes_for(
    spec: &SweepSpec,
    grid: &Arc<Grid>,
    value: f64,
) -> Result<[f64; REGION_COUNT]> {
    let mut params = spec.base.clone();
    match spec.param {
        SweepParam::BetaLg => params.beta_lg = value,
        SweepParam::SigmaEt => params.sigma_et = value,
    }
    let desirable = {
        let p = params.clone();
        move |y: &[f64]| p.desirable_transformed(y)
    };
    let sys = AysTransformed::with_controls(params, &spec.controls)?;
    let sys = Homogenized::new(sys, spec.epsilon)?;
    let cfg = spec
        .successor
        .unwrap_or_else(|| SuccessorConfig::for_grid(grid));
    let result = tsm_partition(&sys, &desirable, grid, &cfg)?;
    Ok(relative_volumes(&result))
}

/// Runs one partition per value; failures are recorded in their row and
/// the sweep continues. Rows come back in input order.
pub fn bifurcation_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let grid = Grid::unit_box(3, spec.resolution)?;
    Ok(spec
        .values
        .par_iter()
        .map(|&value| match partition_volumes_for(spec, &grid, value) {
            Ok(volumes) => SweepRow {
                value,
                volumes: Some(volumes),
                error: None,
            },
            Err(e) => SweepRow {
                value,
                volumes: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}
