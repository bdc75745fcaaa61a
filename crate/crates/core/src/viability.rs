//! Successor-set computation over the discretized dynamics and the
//! fixed-point iterations for viability kernels and capture basins.
//!
//! The successor set of a lattice point `x` under control `u` is every
//! lattice point inside a ball around the Euler step `x + f(x,u)*dt`. The
//! kernel iteration prunes points with no successor inside the running
//! set; the basin iteration grows the target with points that have one.
//! Both commit each sweep at a barrier (Jacobi style), so results do not
//! depend on evaluation order or worker count.
//!
//! A point's verdict can only flip between sweeps when the previous sweep
//! changed the set within its successor reach, so after the first full
//! sweep only points near the last wave of changes are re-examined. The
//! reach bound uses the largest step norm seen in the full sweep and is
//! therefore exact; the optimized iteration reproduces the plain one
//! sweep for sweep.

use std::sync::Arc;

use rayon::prelude::*;

use crate::dynamics::{Control, ControlledSystem};
use crate::error::{Error, Result};
use crate::grid::{Grid, PointSet};

/// Expansion radius of the successor ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expansion {
    /// `h + (M*l/2)*dt^2`: the radius that makes the discrete dynamics an
    /// outer approximation, given a bound `M` on the RHS norm and a
    /// Lipschitz estimate `l`. For homogenized systems `M = 1` exactly.
    Guaranteed { rhs_bound: f64, lipschitz: f64 },
    /// `h` alone, dropping the Lipschitz term (common practice, no
    /// convergence guarantee).
    Strict,
    /// An explicit radius; must still cover the grid (`>= h`).
    Fixed(f64),
}

/// Time step and successor-ball expansion for the discretized dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessorConfig {
    pub dt: f64,
    pub expansion: Expansion,
    /// Precompute and store all successor lists when
    /// `points * controls <= cache_limit` (see [`SuccessorMap`]).
    pub cache_limit: usize,
}

pub const DEFAULT_CACHE_LIMIT: usize = 1_000_000;

impl SuccessorConfig {
    /// Defaults for a homogenized system on `grid`: `dt` of one and a half
    /// axis spacings, guaranteed expansion with `M = 1` and `l = 10`.
    pub fn for_grid(grid: &Grid) -> SuccessorConfig {
        SuccessorConfig {
            dt: 1.5 * grid.max_spacing(),
            expansion: Expansion::Guaranteed {
                rhs_bound: 1.0,
                lipschitz: 10.0,
            },
            cache_limit: DEFAULT_CACHE_LIMIT,
        }
    }

    /// Resolves the expansion radius for `grid`, validating `dt > 0` and
    /// radius `>= h`.
    pub fn radius(&self, grid: &Grid) -> Result<f64> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::parameter(format!(
                "successor dt must be positive, got {}",
                self.dt
            )));
        }
        let h = grid.covering_radius();
        let r = match self.expansion {
            Expansion::Guaranteed {
                rhs_bound,
                lipschitz,
            } => {
                if rhs_bound < 0.0 || lipschitz < 0.0 {
                    return Err(Error::parameter("expansion bounds must be nonnegative"));
                }
                h + 0.5 * rhs_bound * lipschitz * self.dt * self.dt
            }
            Expansion::Strict => h,
            Expansion::Fixed(r) => r,
        };
        if !(r.is_finite() && r >= h * (1.0 - 1e-9)) {
            return Err(Error::parameter(format!(
                "expansion radius {r} must be at least the covering radius {h}"
            )));
        }
        Ok(r)
    }
}

/// Result of one kernel or basin fixed-point run.
#[derive(Debug, Clone)]
pub struct SetIterationRun {
    pub set: PointSet,
    /// Number of sweeps executed, including the final one that changed
    /// nothing.
    pub iterations: usize,
    /// `|K_i|` after every sweep that changed the set, starting at `|K_0|`.
    pub cardinalities: Vec<usize>,
}

struct Scratch {
    point: Vec<f64>,
    rhs: Vec<f64>,
    target: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Scratch {
        Scratch {
            point: vec![0.0; dim],
            rhs: vec![0.0; dim],
            target: vec![0.0; dim],
        }
    }
}

/// Precomputed successor lists for every (point, control) pair, stored in
/// compressed row form. Entries are identical to what
/// [`successors`] recomputes on the fly.
pub struct SuccessorMap {
    grid: Arc<Grid>,
    controls: Vec<Control>,
    offsets: Vec<u64>,
    data: Vec<u32>,
    max_step_norm: f64,
}

impl SuccessorMap {
    pub fn build<S: ControlledSystem + ?Sized>(
        grid: &Arc<Grid>,
        sys: &S,
        cfg: &SuccessorConfig,
        controls: &[Control],
    ) -> Result<SuccessorMap> {
        check_controls(sys, controls)?;
        let radius = cfg.radius(grid)?;
        let nc = controls.len();
        let dim = grid.dim();
        let per_point: Vec<(Vec<Vec<u32>>, f64)> = (0..grid.len())
            .into_par_iter()
            .map_init(
                || Scratch::new(dim),
                |sc, idx| -> Result<(Vec<Vec<u32>>, f64)> {
                    grid.point_of(idx, &mut sc.point);
                    let mut lists = Vec::with_capacity(nc);
                    let mut max_norm = 0.0f64;
                    for &u in controls {
                        let norm =
                            euler_target(sys, &sc.point, u, cfg.dt, &mut sc.rhs, &mut sc.target)?;
                        max_norm = max_norm.max(norm);
                        let mut list = Vec::new();
                        grid.visit_ball(&sc.target, radius, |j| {
                            list.push(j as u32);
                            false
                        });
                        lists.push(list);
                    }
                    Ok((lists, max_norm))
                },
            )
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = Vec::with_capacity(grid.len() * nc + 1);
        offsets.push(0u64);
        let mut total = 0u64;
        for (lists, _) in &per_point {
            for list in lists {
                total += list.len() as u64;
                offsets.push(total);
            }
        }
        let mut data = Vec::with_capacity(total as usize);
        for (lists, _) in &per_point {
            for list in lists {
                data.extend_from_slice(list);
            }
        }
        let max_step_norm = per_point.iter().map(|&(_, n)| n).fold(0.0, f64::max);
        Ok(SuccessorMap {
            grid: grid.clone(),
            controls: controls.to_vec(),
            offsets,
            data,
            max_step_norm,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    /// Largest `||f(x,u)||` seen over all cached pairs.
    pub fn max_step_norm(&self) -> f64 {
        self.max_step_norm
    }

    fn slot_of(&self, u: Control) -> Option<usize> {
        self.controls.iter().position(|&c| c == u)
    }

    pub fn successors_of(&self, index: usize, u: Control) -> Option<&[u32]> {
        let slot = self.slot_of(u)?;
        let e = index * self.controls.len() + slot;
        let (lo, hi) = (self.offsets[e] as usize, self.offsets[e + 1] as usize);
        Some(&self.data[lo..hi])
    }
}

/// Euler target `point + f(point,u)*dt` into `target`; returns `||f||`.
fn euler_target<S: ControlledSystem + ?Sized>(
    sys: &S,
    point: &[f64],
    u: Control,
    dt: f64,
    rhs: &mut [f64],
    target: &mut [f64],
) -> Result<f64> {
    sys.rhs(point, u, rhs)?;
    let mut sq = 0.0;
    for i in 0..point.len() {
        if !rhs[i].is_finite() {
            return Err(Error::domain(format!(
                "rhs returned non-finite component {i} at {point:?}"
            )));
        }
        sq += rhs[i] * rhs[i];
        target[i] = point[i] + rhs[i] * dt;
    }
    Ok(sq.sqrt())
}

/// Successor set of lattice point `index` under control `u`: all lattice
/// points within the expansion radius of the Euler step, intersected with
/// the grid domain (possibly empty when the step exits the box).
pub fn successors<S: ControlledSystem + ?Sized>(
    grid: &Arc<Grid>,
    index: usize,
    u: Control,
    sys: &S,
    cfg: &SuccessorConfig,
) -> Result<PointSet> {
    if index >= grid.len() {
        return Err(Error::usage(format!(
            "successors: index {index} out of range"
        )));
    }
    sys.check_control(u)?;
    let radius = cfg.radius(grid)?;
    let mut sc = Scratch::new(grid.dim());
    grid.point_of(index, &mut sc.point);
    euler_target(sys, &sc.point, u, cfg.dt, &mut sc.rhs, &mut sc.target)?;
    grid.ball_query(&sc.target, radius)
}

fn check_controls<S: ControlledSystem + ?Sized>(sys: &S, controls: &[Control]) -> Result<()> {
    if controls.is_empty() {
        return Err(Error::usage("control selection must be nonempty"));
    }
    for &u in controls {
        sys.check_control(u)?;
    }
    Ok(())
}

struct Engine<'a, S: ?Sized> {
    grid: Arc<Grid>,
    sys: &'a S,
    controls: Vec<Control>,
    dt: f64,
    radius: f64,
    cache: Option<&'a SuccessorMap>,
}

impl<'a, S: ControlledSystem + ?Sized> Engine<'a, S> {
    fn new(
        grid: &Arc<Grid>,
        sys: &'a S,
        cfg: &SuccessorConfig,
        controls: &[Control],
        cache: Option<&'a SuccessorMap>,
    ) -> Result<Engine<'a, S>> {
        check_controls(sys, controls)?;
        if sys.dim() != grid.dim() {
            return Err(Error::usage("system and grid dimensions differ"));
        }
        if let Some(map) = cache {
            if map.grid.as_ref() != grid.as_ref() {
                return Err(Error::usage("successor cache built on a different grid"));
            }
            for &u in controls {
                if map.slot_of(u).is_none() {
                    return Err(Error::usage("successor cache missing a requested control"));
                }
            }
        }
        Ok(Engine {
            grid: grid.clone(),
            sys,
            controls: controls.to_vec(),
            dt: cfg.dt,
            radius: cfg.radius(grid)?,
            cache,
        })
    }

    /// Reach bound known up front (cached mode); otherwise it is derived
    /// from the first full sweep.
    fn initial_reach(&self) -> Option<f64> {
        self.cache.map(|m| m.max_step_norm * self.dt + self.radius)
    }

    /// Does some control lead from `index` into `set`? With `norm_out`,
    /// every control's RHS is evaluated and the largest step norm folded
    /// in (used by the first full sweep to bound the reach).
    fn has_successor_in(
        &self,
        index: usize,
        set: &PointSet,
        sc: &mut Scratch,
        mut norm_out: Option<&mut f64>,
    ) -> Result<bool> {
        if let Some(map) = self.cache {
            let nc = map.controls.len();
            for &u in &self.controls {
                let slot = map.slot_of(u).expect("validated at engine construction");
                let e = index * nc + slot;
                let (lo, hi) = (map.offsets[e] as usize, map.offsets[e + 1] as usize);
                if map.data[lo..hi].iter().any(|&j| set.contains(j as usize)) {
                    return Ok(true);
                }
            }
            return Ok(false);
        }
        self.grid.point_of(index, &mut sc.point);
        let mut hit = false;
        for &u in &self.controls {
            if hit && norm_out.is_none() {
                break;
            }
            let norm = euler_target(self.sys, &sc.point, u, self.dt, &mut sc.rhs, &mut sc.target)?;
            if let Some(m) = norm_out.as_deref_mut() {
                *m = m.max(norm);
            }
            if !hit {
                hit = self
                    .grid
                    .visit_ball(&sc.target, self.radius, |j| set.contains(j));
            }
        }
        Ok(hit)
    }
}

/// One parallel sweep over `active`, collecting the indices whose
/// `has_successor_in(set)` verdict equals `want_hit`. Chunks are
/// concatenated in order, so the output is deterministic.
fn par_sweep<S: ControlledSystem + ?Sized>(
    engine: &Engine<S>,
    active: &[u32],
    set: &PointSet,
    want_hit: bool,
    collect_norms: bool,
) -> Result<(Vec<u32>, f64)> {
    let dim = engine.grid.dim();
    let chunk = (active.len() / (rayon::current_num_threads() * 8).max(1)).clamp(64, 16384);
    let parts: Vec<(Vec<u32>, f64)> = active
        .par_chunks(chunk)
        .map_init(
            || Scratch::new(dim),
            |sc, ids| -> Result<(Vec<u32>, f64)> {
                let mut out = Vec::new();
                let mut max_norm = 0.0f64;
                for &i in ids {
                    let mut norm = 0.0f64;
                    let hit = engine.has_successor_in(
                        i as usize,
                        set,
                        sc,
                        collect_norms.then_some(&mut norm),
                    )?;
                    max_norm = max_norm.max(norm);
                    if hit == want_hit {
                        out.push(i);
                    }
                }
                Ok((out, max_norm))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let mut flat = Vec::new();
    let mut max_norm = 0.0f64;
    for (ids, n) in parts {
        flat.extend_from_slice(&ids);
        max_norm = max_norm.max(n);
    }
    Ok((flat, max_norm))
}

fn indices_of(set: &PointSet) -> Vec<u32> {
    set.iter().map(|i| i as u32).collect()
}

/// Marks every lattice point within `radius` of a seed, keeps those in
/// `keep`, and returns them in index order.
fn dilate_into_active(grid: &Arc<Grid>, seeds: &[u32], radius: f64, keep: &PointSet) -> Vec<u32> {
    let mut marked = PointSet::empty(grid.clone());
    let mut buf = vec![0.0; grid.dim()];
    for &s in seeds {
        grid.point_of(s as usize, &mut buf);
        grid.visit_ball(&buf, radius, |j| {
            marked.insert(j);
            false
        });
    }
    marked.intersect_with(keep);
    indices_of(&marked)
}

const REACH_SLACK: f64 = 1.0 + 1e-9;

/// Viability kernel of `constraint` under the selected controls: the
/// greatest fixed point of the pruning iteration
/// `K_{i+1} = { x in K_i | exists u: S(x,u) cap K_i != empty }`.
///
/// The result is contained in `constraint` and outer-approximates the
/// continuous kernel.
pub fn viability_kernel<S: ControlledSystem + ?Sized>(
    constraint: &PointSet,
    sys: &S,
    cfg: &SuccessorConfig,
    controls: &[Control],
) -> Result<SetIterationRun> {
    viability_kernel_with(constraint, sys, cfg, controls, None)
}

pub fn viability_kernel_with<S: ControlledSystem + ?Sized>(
    constraint: &PointSet,
    sys: &S,
    cfg: &SuccessorConfig,
    controls: &[Control],
    cache: Option<&SuccessorMap>,
) -> Result<SetIterationRun> {
    let grid = constraint.grid().clone();
    let engine = Engine::new(&grid, sys, cfg, controls, cache)?;
    let mut kernel = constraint.clone();
    let mut cardinalities = vec![kernel.cardinality()];
    let mut active = indices_of(&kernel);
    let mut reach = engine.initial_reach();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let collect = reach.is_none();
        let (removed, max_norm) = par_sweep(&engine, &active, &kernel, false, collect)?;
        if collect {
            reach = Some(max_norm * engine.dt + engine.radius);
        }
        if removed.is_empty() {
            break;
        }
        for &i in &removed {
            kernel.remove(i as usize);
        }
        cardinalities.push(kernel.cardinality());
        active = dilate_into_active(&grid, &removed, reach.unwrap() * REACH_SLACK, &kernel);
    }
    Ok(SetIterationRun {
        set: kernel,
        iterations,
        cardinalities,
    })
}

/// Capture basin of `target` within `constraint`: the least fixed point of
/// `K_{i+1} = { x in constraint | exists u: S(x,u) cap K_i != empty } cup K_i`
/// seeded with the target. Growth is confined to the constraint set; the
/// discrete result approximates the continuous basin from the interior.
///
/// An empty target yields an empty basin.
pub fn capture_basin<S: ControlledSystem + ?Sized>(
    target: &PointSet,
    constraint: &PointSet,
    sys: &S,
    cfg: &SuccessorConfig,
    controls: &[Control],
) -> Result<SetIterationRun> {
    capture_basin_with(target, constraint, sys, cfg, controls, None)
}

pub fn capture_basin_with<S: ControlledSystem + ?Sized>(
    target: &PointSet,
    constraint: &PointSet,
    sys: &S,
    cfg: &SuccessorConfig,
    controls: &[Control],
    cache: Option<&SuccessorMap>,
) -> Result<SetIterationRun> {
    let grid = target.grid().clone();
    let engine = Engine::new(&grid, sys, cfg, controls, cache)?;
    let mut basin = target.clone();
    let mut outside = constraint.difference(&basin);
    let mut cardinalities = vec![basin.cardinality()];
    let mut active = indices_of(&outside);
    let mut reach = engine.initial_reach();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let collect = reach.is_none();
        let (added, max_norm) = par_sweep(&engine, &active, &basin, true, collect)?;
        if collect {
            reach = Some(max_norm * engine.dt + engine.radius);
        }
        if added.is_empty() {
            break;
        }
        for &i in &added {
            basin.insert(i as usize);
            outside.remove(i as usize);
        }
        cardinalities.push(basin.cardinality());
        active = dilate_into_active(&grid, &added, reach.unwrap() * REACH_SLACK, &outside);
    }
    Ok(SetIterationRun {
        set: basin,
        iterations,
        cardinalities,
    })
}

/// Finite-difference estimate of the Lipschitz constant of the RHS over
/// the grid box: the largest observed `||f(x) - f(x')|| / ||x - x'||` over
/// random nearby pairs.
pub fn estimate_lipschitz<S: ControlledSystem + ?Sized>(
    sys: &S,
    grid: &Arc<Grid>,
    controls: &[Control],
    samples: usize,
    seed: u64,
) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    check_controls(sys, controls)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = grid.dim();
    let step = 0.5 * grid.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut fa = vec![0.0; n];
    let mut fb = vec![0.0; n];
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut d2 = 0.0;
        for i in 0..n {
            a[i] = rng.gen_range(grid.lower()[i]..grid.upper()[i]);
            let delta = rng.gen_range(-step..step);
            b[i] = (a[i] + delta).clamp(grid.lower()[i], grid.upper()[i]);
            d2 += (b[i] - a[i]) * (b[i] - a[i]);
        }
        if d2 == 0.0 {
            continue;
        }
        for &u in controls {
            sys.rhs(&a, u, &mut fa)?;
            sys.rhs(&b, u, &mut fb)?;
            let df2: f64 = fa.iter().zip(&fb).map(|(p, q)| (p - q) * (p - q)).sum();
            worst = worst.max((df2 / d2).sqrt());
        }
    }
    Ok(worst)
}
