//! Composition of viability kernels and capture basins into the full
//! topology-of-sustainable-management partition of the state space, with
//! the alternating capture-basin iteration for the implicitly defined
//! eddies.
//!
//! Region formulas, writing `X+` for the desirable set, `S` for shelters,
//! `M` for the manageable region, `U = Capt(S)`, `D = Capt(M) - U`:
//! glades `G = Capt^{X+}(S) - S`, lakes `L = U cap M - S - G` (split into
//! time-unlimited `Viab(L)` and the rest), remaining upstream
//! `(U - M) cap X+/-`, backwater `W = M - U`, downstream
//! `(Capt(W) - U - W) cap X+/-`, trench `X - Capt(X+)`, eddies as the
//! maximal pair with `E+/- subset Capt(E-/+)`, abyss as the remainder.

use std::sync::Arc;
use std::time::Instant;

use crate::dynamics::{Control, ControlledSystem};
use crate::error::{Error, Result};
use crate::geometry::CompactMap;
use crate::grid::{Grid, LabelArray, PointSet};
use crate::viability::{
    capture_basin_with, viability_kernel_with, SetIterationRun, SuccessorConfig, SuccessorMap,
};

/// The fourteen mutually exclusive, jointly exhaustive region labels.
#[repr(u8)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionLabel {
    Shelter = 0,
    Glade = 1,
    LakeUnlimited = 2,
    LakeLimited = 3,
    SunnyUpstream = 4,
    DarkUpstream = 5,
    Backwater = 6,
    SunnyDownstream = 7,
    DarkDownstream = 8,
    SunnyEddy = 9,
    DarkEddy = 10,
    SunnyAbyss = 11,
    DarkAbyss = 12,
    Trench = 13,
}

pub const REGION_COUNT: usize = 14;

impl RegionLabel {
    pub const ALL: [RegionLabel; REGION_COUNT] = [
        RegionLabel::Shelter,
        RegionLabel::Glade,
        RegionLabel::LakeUnlimited,
        RegionLabel::LakeLimited,
        RegionLabel::SunnyUpstream,
        RegionLabel::DarkUpstream,
        RegionLabel::Backwater,
        RegionLabel::SunnyDownstream,
        RegionLabel::DarkDownstream,
        RegionLabel::SunnyEddy,
        RegionLabel::DarkEddy,
        RegionLabel::SunnyAbyss,
        RegionLabel::DarkAbyss,
        RegionLabel::Trench,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<RegionLabel> {
        RegionLabel::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionLabel::Shelter => "Shelter",
            RegionLabel::Glade => "Glade",
            RegionLabel::LakeUnlimited => "LakeUnlimited",
            RegionLabel::LakeLimited => "LakeLimited",
            RegionLabel::SunnyUpstream => "SunnyUpstream",
            RegionLabel::DarkUpstream => "DarkUpstream",
            RegionLabel::Backwater => "Backwater",
            RegionLabel::SunnyDownstream => "SunnyDownstream",
            RegionLabel::DarkDownstream => "DarkDownstream",
            RegionLabel::SunnyEddy => "SunnyEddy",
            RegionLabel::DarkEddy => "DarkEddy",
            RegionLabel::SunnyAbyss => "SunnyAbyss",
            RegionLabel::DarkAbyss => "DarkAbyss",
            RegionLabel::Trench => "Trench",
        }
    }

    pub fn parse(name: &str) -> Option<RegionLabel> {
        RegionLabel::ALL.iter().copied().find(|l| l.name() == name)
    }
}

/// Per-stage accounting of the partition computation.
#[derive(Debug, Clone)]
pub struct StageStats {
    pub name: &'static str,
    pub iterations: usize,
    pub cardinality: usize,
    pub seconds: f64,
}

/// Run metadata carried alongside the labels. `config_echo` is the
/// canonical run-configuration text and the only metadata that
/// serializes into partition files; timings are reporting-only.
#[derive(Debug, Clone, Default)]
pub struct RunMetadata {
    pub config_echo: String,
    pub stages: Vec<StageStats>,
    /// Points of the downstream with no named sub-region
    /// (`Capt(M) - U - W - Capt(W)`), folded into the sunny/dark
    /// downstream labels by desirability.
    pub unnamed_downstream: usize,
    pub wall_seconds: f64,
    /// Norm used by the time homogenization.
    pub norm: &'static str,
}

/// A computed partition: one label per lattice point plus region counts
/// and run metadata.
#[derive(Debug, Clone)]
pub struct TsmResult {
    pub labels: LabelArray,
    pub counts: [usize; REGION_COUNT],
    pub meta: RunMetadata,
    /// Compactification used to map original coordinates onto the grid;
    /// required by [`classify_point`].
    pub map: Option<CompactMap>,
}

impl TsmResult {
    pub fn grid(&self) -> &Arc<Grid> {
        self.labels.grid()
    }

    pub fn label_of_index(&self, index: usize) -> RegionLabel {
        RegionLabel::from_code(self.labels.get(index)).expect("stored labels are valid")
    }

    pub fn region_set(&self, label: RegionLabel) -> PointSet {
        let code = label.code();
        PointSet::from_indices(
            self.grid().clone(),
            (0..self.grid().len()).filter(|&i| self.labels.get(i) == code),
        )
    }

    pub fn with_map(mut self, map: CompactMap) -> TsmResult {
        self.map = Some(map);
        self
    }
}

/// Fraction of grid points per region; sums to one.
pub fn relative_volumes(result: &TsmResult) -> [f64; REGION_COUNT] {
    let total = result.grid().len() as f64;
    let mut out = [0.0; REGION_COUNT];
    for (i, &c) in result.counts.iter().enumerate() {
        out[i] = c as f64 / total;
    }
    out
}

/// Classifies a state given in original coordinates: compactify, snap to
/// the nearest lattice point, return its label.
pub fn classify_point(x: &[f64], result: &TsmResult) -> Result<RegionLabel> {
    let map = result
        .map
        .as_ref()
        .ok_or_else(|| Error::usage("classify_point: result carries no compactification"))?;
    let y = map.compactify(x)?;
    let index = result.grid().index_of(&y)?;
    Ok(result.label_of_index(index))
}

/// Result of the alternating eddies iteration.
#[derive(Debug, Clone)]
pub struct EddiesRun {
    pub plus: PointSet,
    pub minus: PointSet,
    pub iterations: usize,
    /// `(|E+_i|, |E-_i|)` per iteration, starting at the candidate sizes.
    pub cardinalities: Vec<(usize, usize)>,
}

/// Largest pair `E+/-` inside the candidate sets with
/// `E+ subset Capt(E-)` and `E- subset Capt(E+)`, computed by the
/// alternating capture-intersect iteration
/// `E-_i = Capt(E+_{i-1}) cap E-_{i-1}`, `E+_i = Capt(E-_i) cap E+_{i-1}`.
/// Both sequences are nonincreasing, so the fixed point is reached after
/// finitely many steps on a finite grid.
pub fn eddies_iteration<S: ControlledSystem + ?Sized>(
    candidates_plus: &PointSet,
    candidates_minus: &PointSet,
    sys: &S,
    cfg: &SuccessorConfig,
    controls: &[Control],
) -> Result<EddiesRun> {
    eddies_iteration_with(candidates_plus, candidates_minus, sys, cfg, controls, None)
}

pub fn eddies_iteration_with<S: ControlledSystem + ?Sized>(
    candidates_plus: &PointSet,
    candidates_minus: &PointSet,
    sys: &S,
    cfg: &SuccessorConfig,
    controls: &[Control],
    cache: Option<&SuccessorMap>,
) -> Result<EddiesRun> {
    if !candidates_plus.is_disjoint_from(candidates_minus) {
        return Err(Error::usage("eddies: candidate sets must be disjoint"));
    }
    let grid = candidates_plus.grid().clone();
    let full = PointSet::full(grid.clone());
    let mut plus = candidates_plus.clone();
    let mut minus = candidates_minus.clone();
    let mut cardinalities = vec![(plus.cardinality(), minus.cardinality())];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let reach_plus = capture_basin_with(&plus, &full, sys, cfg, controls, cache)?.set;
        let new_minus = reach_plus.intersection(&minus);
        let reach_minus = capture_basin_with(&new_minus, &full, sys, cfg, controls, cache)?.set;
        let new_plus = reach_minus.intersection(&plus);
        let done = new_minus == minus && new_plus == plus;
        minus = new_minus;
        plus = new_plus;
        cardinalities.push((plus.cardinality(), minus.cardinality()));
        if done || (plus.is_empty() && minus.is_empty()) {
            break;
        }
    }
    Ok(EddiesRun {
        plus,
        minus,
        iterations,
        cardinalities,
    })
}

/// Computes the full partition. Uses the system's whole control set for
/// the managed quantities and its default control for the shelter; the
/// desirable predicate is evaluated at exact lattice coordinates.
pub fn tsm_partition<S: ControlledSystem + ?Sized>(
    sys: &S,
    desirable: &(dyn Fn(&[f64]) -> bool + Sync),
    grid: &Arc<Grid>,
    cfg: &SuccessorConfig,
) -> Result<TsmResult> {
    let wall = Instant::now();
    let controls = sys.controls();
    let u0 = [sys.default_control()];
    let full = PointSet::full(grid.clone());
    let x_plus = PointSet::from_predicate(grid, desirable);
    let x_minus = full.difference(&x_plus);

    let cache = if grid.len().saturating_mul(controls.len()) <= cfg.cache_limit {
        Some(SuccessorMap::build(grid, sys, cfg, &controls)?)
    } else {
        None
    };
    let cache = cache.as_ref();

    let mut stages: Vec<StageStats> = Vec::new();
    let mut staged = |name: &'static str, started: Instant, run: &SetIterationRun| {
        stages.push(StageStats {
            name,
            iterations: run.iterations,
            cardinality: run.set.cardinality(),
            seconds: started.elapsed().as_secs_f64(),
        });
    };

    let t = Instant::now();
    let shelter = viability_kernel_with(&x_plus, sys, cfg, &u0, cache)?;
    staged("shelter", t, &shelter);
    let shelter = shelter.set;

    let t = Instant::now();
    let manageable = viability_kernel_with(&x_plus, sys, cfg, &controls, cache)?;
    staged("manageable", t, &manageable);
    let manageable = manageable.set;

    let t = Instant::now();
    let upstream = capture_basin_with(&shelter, &full, sys, cfg, &controls, cache)?;
    staged("upstream", t, &upstream);
    let upstream = upstream.set;

    let t = Instant::now();
    let capt_manageable = capture_basin_with(&manageable, &full, sys, cfg, &controls, cache)?;
    staged("capt_manageable", t, &capt_manageable);
    let downstream = capt_manageable.set.difference(&upstream);

    let t = Instant::now();
    let glade_basin = capture_basin_with(&shelter, &x_plus, sys, cfg, &controls, cache)?;
    staged("glade", t, &glade_basin);
    let glade = glade_basin.set.difference(&shelter);

    let mut lake = upstream.intersection(&manageable);
    lake.subtract(&shelter);
    lake.subtract(&glade);

    let t = Instant::now();
    let lake_unlimited = viability_kernel_with(&lake, sys, cfg, &controls, cache)?;
    staged("lake_unlimited", t, &lake_unlimited);
    let lake_unlimited = lake_unlimited.set;
    let lake_limited = lake.difference(&lake_unlimited);

    let rest_upstream = upstream.difference(&manageable);
    let sunny_upstream = rest_upstream.intersection(&x_plus);
    let dark_upstream = rest_upstream.intersection(&x_minus);

    let backwater = manageable.difference(&upstream);

    let t = Instant::now();
    let capt_backwater = capture_basin_with(&backwater, &full, sys, cfg, &controls, cache)?;
    staged("capt_backwater", t, &capt_backwater);
    let mut named_downstream = capt_backwater.set;
    named_downstream.subtract(&upstream);
    named_downstream.subtract(&backwater);

    // Downstream points outside Capt(W) have no named sub-region; they are
    // folded into sunny/dark downstream and counted in the metadata.
    let mut unnamed_downstream = downstream.clone();
    unnamed_downstream.subtract(&backwater);
    unnamed_downstream.subtract(&named_downstream);
    let unnamed_count = unnamed_downstream.cardinality();
    let all_downstream = named_downstream.union(&unnamed_downstream);
    let sunny_downstream = all_downstream.intersection(&x_plus);
    let dark_downstream = all_downstream.intersection(&x_minus);

    let t = Instant::now();
    let capt_desirable = capture_basin_with(&x_plus, &full, sys, cfg, &controls, cache)?;
    staged("capt_desirable", t, &capt_desirable);
    let trench = full.difference(&capt_desirable.set);

    let mut eddy_cand_plus = x_plus.clone();
    eddy_cand_plus.subtract(&upstream);
    eddy_cand_plus.subtract(&downstream);
    let mut eddy_cand_minus = x_minus.clone();
    eddy_cand_minus.subtract(&upstream);
    eddy_cand_minus.subtract(&downstream);
    let t = Instant::now();
    let eddies = eddies_iteration_with(
        &eddy_cand_plus,
        &eddy_cand_minus,
        sys,
        cfg,
        &controls,
        cache,
    )?;
    stages.push(StageStats {
        name: "eddies",
        iterations: eddies.iterations,
        cardinality: eddies.plus.cardinality() + eddies.minus.cardinality(),
        seconds: t.elapsed().as_secs_f64(),
    });

    let mut abyss = full.clone();
    abyss.subtract(&upstream);
    abyss.subtract(&downstream);
    abyss.subtract(&eddies.plus);
    abyss.subtract(&eddies.minus);
    abyss.subtract(&trench);
    let sunny_abyss = abyss.intersection(&x_plus);
    let dark_abyss = abyss.intersection(&x_minus);

    const UNSET: u8 = u8::MAX;
    let mut labels = LabelArray::filled(grid.clone(), UNSET);
    let mut counts = [0usize; REGION_COUNT];
    let mut assign = |set: &PointSet, label: RegionLabel| {
        for i in set.iter() {
            assert!(
                labels.get(i) == UNSET,
                "region overlap at index {i}: {} vs {}",
                RegionLabel::from_code(labels.get(i))
                    .map(|l| l.name())
                    .unwrap_or("?"),
                label.name()
            );
            labels.set(i, label.code());
            counts[label.code() as usize] += 1;
        }
    };
    assign(&shelter, RegionLabel::Shelter);
    assign(&glade, RegionLabel::Glade);
    assign(&lake_unlimited, RegionLabel::LakeUnlimited);
    assign(&lake_limited, RegionLabel::LakeLimited);
    assign(&sunny_upstream, RegionLabel::SunnyUpstream);
    assign(&dark_upstream, RegionLabel::DarkUpstream);
    assign(&backwater, RegionLabel::Backwater);
    assign(&sunny_downstream, RegionLabel::SunnyDownstream);
    assign(&dark_downstream, RegionLabel::DarkDownstream);
    assign(&eddies.plus, RegionLabel::SunnyEddy);
    assign(&eddies.minus, RegionLabel::DarkEddy);
    assign(&sunny_abyss, RegionLabel::SunnyAbyss);
    assign(&dark_abyss, RegionLabel::DarkAbyss);
    assign(&trench, RegionLabel::Trench);
    let assigned: usize = counts.iter().sum();
    assert_eq!(assigned, grid.len(), "partition does not cover the grid");

    Ok(TsmResult {
        labels,
        counts,
        meta: RunMetadata {
            config_echo: String::new(),
            stages,
            unnamed_downstream: unnamed_count,
            wall_seconds: wall.elapsed().as_secs_f64(),
            norm: "euclidean",
        },
        map: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::FnSystem;
    use crate::geometry::Homogenized;
    use crate::viability::Expansion;

    #[test]
    fn globally_stable_desirable_system_is_all_shelter() {
        let grid = Grid::unit_box(2, 21).unwrap();
        let sys = FnSystem::new(2, 1, |x, _u, out| {
            out[0] = 0.5 - x[0];
            out[1] = 0.5 - x[1];
            Ok(())
        });
        let sys = Homogenized::new(sys, 1e-4).unwrap();
        let cfg = SuccessorConfig::for_grid(&grid);
        let result = tsm_partition(&sys, &|_y: &[f64]| true, &grid, &cfg).unwrap();
        assert_eq!(
            result.counts[RegionLabel::Shelter.code() as usize],
            grid.len()
        );
        let volumes = relative_volumes(&result);
        assert_eq!(volumes[RegionLabel::Shelter.code() as usize], 1.0);
        assert!((volumes.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_state_loop_is_an_eddy_pair() {
        // two lattice points exchanging under the flow x -> 1 - x
        let grid = Grid::new(vec![0.0], vec![1.0], vec![2]).unwrap();
        let sys = FnSystem::new(1, 1, |x, _u, out| {
            out[0] = 1.0 - 2.0 * x[0];
            Ok(())
        });
        let cfg = SuccessorConfig {
            dt: 1.0,
            expansion: Expansion::Fixed(0.5),
            cache_limit: 0,
        };
        let plus = PointSet::from_indices(grid.clone(), [0]);
        let minus = PointSet::from_indices(grid.clone(), [1]);
        let run = eddies_iteration(&plus, &minus, &sys, &cfg, &[Control(0)]).unwrap();
        assert_eq!(run.plus, plus);
        assert_eq!(run.minus, minus);
    }

    #[test]
    fn empty_candidates_give_empty_eddies() {
        let grid = Grid::unit_box(1, 11).unwrap();
        let sys = Homogenized::new(crate::dynamics::Decay1D, 1e-4).unwrap();
        let cfg = SuccessorConfig::for_grid(&grid);
        let empty = PointSet::empty(grid.clone());
        let run = eddies_iteration(&empty, &empty, &sys, &cfg, &[Control(0)]).unwrap();
        assert!(run.plus.is_empty() && run.minus.is_empty());
    }

    #[test]
    fn eddies_cardinalities_are_nonincreasing() {
        let grid = Grid::unit_box(2, 15).unwrap();
        // rotation around the center: everything cycles through both halves
        let sys = FnSystem::new(2, 1, |x, _u, out| {
            out[0] = -(x[1] - 0.5);
            out[1] = x[0] - 0.5;
            Ok(())
        });
        let sys = Homogenized::new(sys, 1e-4).unwrap();
        let cfg = SuccessorConfig::for_grid(&grid);
        let plus = PointSet::from_predicate(&grid, |y| y[0] < 0.5);
        let minus = PointSet::from_predicate(&grid, |y| y[0] >= 0.5);
        let run = eddies_iteration(&plus, &minus, &sys, &cfg, &[Control(0)]).unwrap();
        for w in run.cardinalities.windows(2) {
            assert!(w[1].0 <= w[0].0 && w[1].1 <= w[0].1);
        }
        assert!(!run.plus.is_empty() && !run.minus.is_empty());
    }

    #[test]
    fn overlapping_eddy_candidates_are_rejected() {
        let grid = Grid::unit_box(1, 11).unwrap();
        let sys = Homogenized::new(crate::dynamics::Decay1D, 1e-4).unwrap();
        let cfg = SuccessorConfig::for_grid(&grid);
        let a = PointSet::from_indices(grid.clone(), [1, 2]);
        let b = PointSet::from_indices(grid.clone(), [2, 3]);
        assert!(matches!(
            eddies_iteration(&a, &b, &sys, &cfg, &[Control(0)]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn classify_point_requires_a_map() {
        let grid = Grid::unit_box(1, 11).unwrap();
        let sys = Homogenized::new(crate::dynamics::Decay1D, 1e-4).unwrap();
        let cfg = SuccessorConfig::for_grid(&grid);
        let result = tsm_partition(&sys, &|_y: &[f64]| true, &grid, &cfg).unwrap();
        assert!(matches!(
            classify_point(&[1.0], &result),
            Err(Error::Usage(_))
        ));
        let result = result.with_map(CompactMap::new(vec![1.0]).unwrap());
        // 1.0 compactifies to 0.5, the central lattice point
        assert_eq!(
            classify_point(&[1.0], &result).unwrap(),
            RegionLabel::Shelter
        );
    }

    #[test]
    fn label_codes_round_trip() {
        for label in RegionLabel::ALL {
            assert_eq!(RegionLabel::from_code(label.code()), Some(label));
            assert_eq!(RegionLabel::parse(label.name()), Some(label));
        }
        assert_eq!(RegionLabel::from_code(14), None);
    }
}
