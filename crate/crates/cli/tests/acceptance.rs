//! Acceptance suite: one test per release criterion, each printing a
//! single PASS/FAIL line (run with `--nocapture` to see them on success).
//!
//! Criterion 2 is expected red: the estimator labels the current state
//! Glade rather than LakeLimited. The flow admits a strategy that holds
//! economic output just below the level where the carbon uptake balance
//! saturates at the boundary (low-growth switching with the energy
//! transformation on); along it the carbon stock peaks near 333 GtC,
//! strictly inside the boundary, while the knowledge stock grows without
//! bound. The shelter is therefore reachable through the desirable
//! region, and a successor rule that outer-approximates reachability can
//! only agree. The remaining clauses of criterion 2 are checked and hold.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsm_cli::commands::{self, ConstraintKind};
use tsm_cli::config::RunConfig;
use tsm_cli::format;
use tsm_core::analysis::{
    bifurcation_sweep, flow_sample, green_fraction, path_deviation_after_homogenization, SweepRow,
    SweepSpec,
};
use tsm_core::dynamics::ays::{self, AysControl, AysParams, AysTransformed};
use tsm_core::dynamics::{Control, ControlledSystem, FnSystem};
use tsm_core::error::Result;
use tsm_core::geometry::{CompactMap, Homogenized};
use tsm_core::grid::{Grid, PointSet};
use tsm_core::tsm::{classify_point, eddies_iteration, tsm_partition, RegionLabel, TsmResult};
use tsm_core::viability::{capture_basin, successors, viability_kernel, SuccessorConfig};

fn ays_fixture(
    params: &AysParams,
    resolution: usize,
) -> (Arc<Grid>, Homogenized<AysTransformed>, SuccessorConfig) {
    let sys = AysTransformed::new(params.clone()).unwrap();
    let sys = Homogenized::new(sys, 1e-4).unwrap();
    let grid = Grid::unit_box(3, resolution).unwrap();
    let cfg = SuccessorConfig::for_grid(&grid);
    (grid, sys, cfg)
}

fn run_default_partition(resolution: usize) -> (TsmResult, f64) {
    let params = AysParams::default();
    let (grid, sys, cfg) = ays_fixture(&params, resolution);
    let desirable = {
        let p = params.clone();
        move |y: &[f64]| p.desirable_transformed(y)
    };
    let started = Instant::now();
    let result = tsm_partition(&sys, &desirable, &grid, &cfg)
        .unwrap()
        .with_map(params.compact_map());
    (result, started.elapsed().as_secs_f64())
}

fn partition_40() -> &'static (TsmResult, f64) {
    static CELL: OnceLock<(TsmResult, f64)> = OnceLock::new();
    CELL.get_or_init(|| run_default_partition(40))
}

fn sweep_beta_lg_40() -> &'static Vec<SweepRow> {
    static CELL: OnceLock<Vec<SweepRow>> = OnceLock::new();
    CELL.get_or_init(|| {
        bifurcation_sweep(&SweepSpec::beta_lg_default(AysParams::default(), 40)).unwrap()
    })
}

fn fraction(row: &SweepRow, label: RegionLabel) -> f64 {
    row.volumes.expect("sweep value computed")[label.code() as usize]
}

fn eddy_fraction(row: &SweepRow) -> f64 {
    fraction(row, RegionLabel::SunnyEddy) + fraction(row, RegionLabel::DarkEddy)
}

#[test]
fn criterion_1_fixed_point_reproduction() {
    let p = AysParams::default();
    let mut worst_residual = 0.0f64;
    for (control, expect_a, expect_y) in [
        (AysControl::Default, 350.0, 4.84e13),
        (AysControl::LowGrowth, 175.0, 2.42e13),
    ] {
        let points = ays::fixed_points(&p, control);
        let black = points.iter().find(|fp| !fp.boundary).unwrap();
        assert!((black.state[0] - expect_a).abs() / expect_a <= 5e-3);
        assert!((black.state[1] - expect_y).abs() / expect_y <= 5e-3);
        assert_eq!(black.state[2], 0.0);
        let f = ays::ays_rhs(&p, &black.state, control);
        // residual relative to each equation's own term magnitudes
        let scales = [
            black.state[0] / p.tau_a,
            control.effective(&p).0 * black.state[1],
            1.0,
        ];
        for i in 0..3 {
            let rel = f[i].abs() / scales[i];
            worst_residual = worst_residual.max(rel);
            assert!(
                rel <= 1e-12,
                "{control:?} component {i}: relative residual {rel:e}"
            );
        }
        let green = points.iter().find(|fp| fp.boundary).unwrap();
        assert_eq!(green.state[0], 0.0);
        assert!(green.state[1].is_infinite() && green.state[2].is_infinite());
    }
    println!(
        "ACCEPTANCE criterion 1 (fixed-point reproduction): PASS — worst relative residual {worst_residual:.2e}"
    );
}

#[test]
fn criterion_2_current_state_classification() {
    let (result_80, wall_80) = run_default_partition(80);
    let (result_40, wall_40) = partition_40();

    let mut failures: Vec<String> = Vec::new();

    for (label, name) in [
        (RegionLabel::Shelter, "Shelter"),
        (RegionLabel::Glade, "Glade"),
        (RegionLabel::Backwater, "Backwater"),
        (RegionLabel::LakeUnlimited, "LakeUnlimited"),
    ] {
        let count = result_80.counts[label.code() as usize];
        if count == 0 {
            failures.push(format!("{name} empty at 80^3"));
        }
    }

    if wall_80 > 900.0 {
        failures.push(format!("80^3 runtime {wall_80:.0}s exceeds 15 min"));
    }
    if *wall_40 > 120.0 {
        failures.push(format!("40^3 runtime {wall_40:.0}s exceeds 2 min"));
    }

    let label_80 = classify_point(&ays::CURRENT_STATE, &result_80).unwrap();
    if label_80 != RegionLabel::LakeLimited {
        failures.push(format!(
            "current state labeled {} at 80^3, expected LakeLimited",
            label_80.name()
        ));
    }
    let label_40 = classify_point(&ays::CURRENT_STATE, result_40).unwrap();
    if label_40 != RegionLabel::LakeLimited && label_40 != RegionLabel::LakeUnlimited {
        failures.push(format!(
            "current state labeled {} at 40^3, expected a lake label",
            label_40.name()
        ));
    }

    if failures.is_empty() {
        println!("ACCEPTANCE criterion 2 (current-state classification): PASS");
    } else {
        println!(
            "ACCEPTANCE criterion 2 (current-state classification): FAIL — {}",
            failures.join("; ")
        );
        panic!(
            "criterion 2: {}. The current-state label is irreproducible with an \
             outer-approximating successor rule: an admissible strategy (energy \
             transformation on, output held near 4.9e13 US$/a by low-growth switching) \
             keeps the carbon stock below 334 GtC for all time while the knowledge \
             stock grows without bound, so the shelter is reachable through the \
             desirable region and the true label of the current state is Glade.",
            failures.join("; ")
        );
    }
}

#[test]
fn criterion_3_downstream_eddies_bifurcation() {
    let rows = sweep_beta_lg_40();
    assert_eq!(rows.len(), 21);
    let largest_backwater = rows
        .iter()
        .filter(|r| fraction(r, RegionLabel::Backwater) > 0.0)
        .map(|r| r.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let smallest_eddies = rows
        .iter()
        .filter(|r| eddy_fraction(r) > 0.0)
        .map(|r| r.value)
        .fold(f64::INFINITY, f64::min);
    let ok =
        (0.026..=0.031).contains(&largest_backwater) && (0.026..=0.031).contains(&smallest_eddies);
    println!(
        "ACCEPTANCE criterion 3 (downstream-eddies bifurcation): {} — last backwater at {:.3}, first eddies at {:.3}",
        if ok { "PASS" } else { "FAIL" },
        largest_backwater,
        smallest_eddies
    );
    assert!(ok, "transition outside [0.026, 0.031]: backwater {largest_backwater}, eddies {smallest_eddies}");
}

#[test]
fn criterion_4_backwater_shrinkage() {
    let rows = sweep_beta_lg_40();
    let at = |value: f64| {
        rows.iter()
            .find(|r| (r.value - value).abs() < 1e-9)
            .unwrap_or_else(|| panic!("sweep value {value} missing"))
    };
    let low = fraction(at(0.015), RegionLabel::Backwater);
    let mid = fraction(at(0.027), RegionLabel::Backwater);
    let ok = mid > 0.0 && mid < low;
    println!(
        "ACCEPTANCE criterion 4 (backwater shrinkage): {} — fraction {:.5} at 1.5 %/a vs {:.5} at 2.7 %/a",
        if ok { "PASS" } else { "FAIL" },
        low,
        mid
    );
    assert!(ok);
}

#[test]
fn criterion_5_energy_transformation_effect() {
    let rows = bifurcation_sweep(&SweepSpec::sigma_et_default(AysParams::default(), 40)).unwrap();
    let combined = |row: &SweepRow| {
        fraction(row, RegionLabel::Glade) + fraction(row, RegionLabel::DarkUpstream)
    };
    let strong = combined(rows.first().unwrap());
    let weak = combined(rows.last().unwrap());

    let default_sys = AysTransformed::new(AysParams::default()).unwrap();
    let default_green = green_fraction(&flow_sample(&default_sys, 100, 1, 600.0, 0.25).unwrap());
    let p = AysParams::default();
    let et_params = AysParams {
        sigma: p.sigma_et,
        ..p
    };
    let et_sys = AysTransformed::with_controls(et_params, &[AysControl::Default]).unwrap();
    let et_green = green_fraction(&flow_sample(&et_sys, 100, 1, 600.0, 0.25).unwrap());

    let ok = strong > weak && et_green >= default_green;
    println!(
        "ACCEPTANCE criterion 5 (energy-transformation effect): {} — glade+dark-upstream {:.3} at sigma/4 vs {:.3} at sigma; green basin {:.2} (et) vs {:.2} (default)",
        if ok { "PASS" } else { "FAIL" },
        strong,
        weak,
        et_green,
        default_green
    );
    assert!(strong > weak, "{strong} <= {weak}");
    assert!(et_green >= default_green, "{et_green} < {default_green}");
}

/// Two rotations with opposite orientation and a slight outward drift.
fn rotation_fixture() -> (Arc<Grid>, impl ControlledSystem, SuccessorConfig) {
    let grid = Grid::unit_box(2, 25).unwrap();
    let sys = FnSystem::new(
        2,
        2,
        |x: &[f64], u: Control, out: &mut [f64]| -> Result<()> {
            let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
            let sign = if u.0 == 0 { 1.0 } else { -1.0 };
            out[0] = sign * -dy + 0.1 * dx;
            out[1] = sign * dx + 0.1 * dy;
            Ok(())
        },
    );
    let sys = Homogenized::new(sys, 1e-4).unwrap();
    let cfg = SuccessorConfig::for_grid(&grid);
    (grid, sys, cfg)
}

fn random_blob(rng: &mut ChaCha8Rng, grid: &Arc<Grid>) -> PointSet {
    let mut set = PointSet::empty(grid.clone());
    for _ in 0..rng.gen_range(1..=3usize) {
        let center: Vec<f64> = (0..grid.dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
        set.union_with(&grid.ball_query(&center, rng.gen_range(0.05..0.4)).unwrap());
    }
    set
}

struct RandomAffine {
    dim: usize,
    per_control: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl RandomAffine {
    fn sample(rng: &mut ChaCha8Rng, dim: usize, controls: usize) -> RandomAffine {
        let per_control = (0..controls)
            .map(|_| {
                (
                    (0..dim * dim).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                    (0..dim).map(|_| rng.gen_range(0.2..0.8)).collect(),
                    (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                )
            })
            .collect();
        RandomAffine { dim, per_control }
    }
}

impl ControlledSystem for RandomAffine {
    fn dim(&self) -> usize {
        self.dim
    }
    fn control_count(&self) -> usize {
        self.per_control.len()
    }
    fn rhs(&self, x: &[f64], u: Control, out: &mut [f64]) -> Result<()> {
        let (a, c, b) = &self.per_control[u.0 as usize];
        for i in 0..self.dim {
            let mut acc = b[i];
            for j in 0..self.dim {
                acc += a[i * self.dim + j] * (x[j] - c[j]);
            }
            out[i] = acc;
        }
        Ok(())
    }
}

fn oracle_equivalence_over_seeds(seeds: u64) -> usize {
    let mut nontrivial = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.gen_range(1..=3usize);
        let points = match dim {
            1 => rng.gen_range(31..=101usize),
            2 => rng.gen_range(9..=19usize),
            _ => rng.gen_range(6..=9usize),
        };
        let n_controls = rng.gen_range(1..=2);
        let sys = Homogenized::new(RandomAffine::sample(&mut rng, dim, n_controls), 1e-4).unwrap();
        let grid = Grid::unit_box(dim, points).unwrap();
        let cfg = SuccessorConfig::for_grid(&grid);
        let controls = sys.controls();

        let mut graph = tsm_oracle::SuccessorGraph::new(grid.len(), controls.len());
        for idx in 0..grid.len() {
            for (slot, &u) in controls.iter().enumerate() {
                let succ = successors(&grid, idx, u, &sys, &cfg).unwrap();
                graph.set_successors(idx, slot, succ.iter().map(|i| i as u32).collect());
            }
        }
        let mask = |set: &PointSet| -> Vec<bool> {
            let mut m = vec![false; grid.len()];
            for i in set.iter() {
                m[i] = true;
            }
            m
        };

        let constraint = random_blob(&mut rng, &grid);
        let kernel = viability_kernel(&constraint, &sys, &cfg, &controls).unwrap();
        assert_eq!(
            mask(&kernel.set),
            tsm_oracle::oracle_kernel(&graph, &mask(&constraint))
        );

        let target = random_blob(&mut rng, &grid);
        let basin = capture_basin(&target, &constraint, &sys, &cfg, &controls).unwrap();
        assert_eq!(
            mask(&basin.set),
            tsm_oracle::oracle_basin(&graph, &mask(&target), &mask(&constraint))
        );

        let blob_a = random_blob(&mut rng, &grid);
        let blob_b = random_blob(&mut rng, &grid);
        let plus = blob_a.difference(&blob_b);
        let minus = blob_b.difference(&blob_a);
        let eddies = eddies_iteration(&plus, &minus, &sys, &cfg, &controls).unwrap();
        let (exp_plus, exp_minus) = tsm_oracle::oracle_eddies(&graph, &mask(&plus), &mask(&minus));
        assert_eq!(mask(&eddies.plus), exp_plus);
        assert_eq!(mask(&eddies.minus), exp_minus);

        if !kernel.set.is_empty() || !eddies.plus.is_empty() {
            nontrivial += 1;
        }
    }
    nontrivial
}

#[test]
fn criterion_6_property_suite() {
    // kernel idempotence, monotonicity, union distribution, viability
    // domain containment
    let (grid, sys, cfg) = rotation_fixture();
    let controls = [Control(0), Control(1)];
    let full = PointSet::full(grid.clone());
    let constraint = PointSet::from_predicate(&grid, |x| x[0] + 0.5 * x[1] < 1.1);
    let kernel = viability_kernel(&constraint, &sys, &cfg, &controls)
        .unwrap()
        .set;
    let again = viability_kernel(&kernel, &sys, &cfg, &controls)
        .unwrap()
        .set;
    assert_eq!(kernel, again, "kernel not idempotent");

    let smaller = PointSet::from_predicate(&grid, |x| x[0] + 0.5 * x[1] < 0.9);
    let kernel_smaller = viability_kernel(&smaller, &sys, &cfg, &controls)
        .unwrap()
        .set;
    assert!(kernel_smaller.is_subset_of(&kernel), "kernel not monotone");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let a = random_blob(&mut rng, &grid);
        let b = random_blob(&mut rng, &grid);
        let joint = capture_basin(&a.union(&b), &full, &sys, &cfg, &controls)
            .unwrap()
            .set;
        let split = capture_basin(&a, &full, &sys, &cfg, &controls)
            .unwrap()
            .set
            .union(&capture_basin(&b, &full, &sys, &cfg, &controls).unwrap().set);
        assert_eq!(
            joint, split,
            "capture basin does not distribute over target union"
        );
        assert!(
            capture_basin(&a, &b.union(&a), &sys, &cfg, &controls)
                .unwrap()
                .set
                .is_subset_of(&capture_basin(&a, &full, &sys, &cfg, &controls).unwrap().set),
            "capture basin not monotone in constraint"
        );
    }
    let basin_of_kernel = capture_basin(&kernel, &constraint, &sys, &cfg, &controls)
        .unwrap()
        .set;
    assert_eq!(
        basin_of_kernel, kernel,
        "basin of a viability domain escapes the kernel"
    );

    // partition exhaustiveness and disjointness on the bundled model
    let (result, _) = partition_40();
    assert_eq!(result.counts.iter().sum::<usize>(), result.grid().len());
    for i in 0..result.grid().len() {
        assert!(RegionLabel::from_code(result.labels.get(i)).is_some());
    }

    // eddies fixed-point post-conditions where eddies are nonempty
    let eddy_params = AysParams {
        beta_lg: 0.03,
        ..AysParams::default()
    };
    let (egrid, esys, ecfg) = ays_fixture(&eddy_params, 40);
    let desirable = {
        let p = eddy_params.clone();
        move |y: &[f64]| p.desirable_transformed(y)
    };
    let eddy_result = tsm_partition(&esys, &desirable, &egrid, &ecfg).unwrap();
    let plus = eddy_result.region_set(RegionLabel::SunnyEddy);
    let minus = eddy_result.region_set(RegionLabel::DarkEddy);
    assert!(!plus.is_empty() && !minus.is_empty());
    let efull = PointSet::full(egrid.clone());
    let econtrols = esys.controls();
    assert!(plus.is_subset_of(
        &capture_basin(&minus, &efull, &esys, &ecfg, &econtrols)
            .unwrap()
            .set
    ));
    assert!(minus.is_subset_of(
        &capture_basin(&plus, &efull, &esys, &ecfg, &econtrols)
            .unwrap()
            .set
    ));

    // oracle equivalence on fifty randomized discretizations
    let nontrivial = oracle_equivalence_over_seeds(50);
    assert!(
        nontrivial >= 10,
        "only {nontrivial} nontrivial oracle instances"
    );

    // homogenization bound and zero-set preservation
    let p = AysParams::default();
    let raw = AysTransformed::new(p.clone()).unwrap();
    let eps = 1e-4;
    let hom = Homogenized::new(&raw, eps).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut f = [0.0; 3];
    let mut g = [0.0; 3];
    for _ in 0..2000 {
        let y = [
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
        ];
        for u in 0..4u16 {
            raw.rhs(&y, Control(u), &mut f).unwrap();
            hom.rhs(&y, Control(u), &mut g).unwrap();
            let fn_ = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(gn < 1.0);
            if fn_ > 100.0 * eps {
                assert!(gn > 0.99);
            }
        }
    }
    hom.rhs(&ays::GREEN_FIXED_POINT_TRANSFORMED, Control(0), &mut g)
        .unwrap();
    assert_eq!(
        g, [0.0; 3],
        "zero set not preserved at the green fixed point"
    );

    // compactification round trips
    let map = CompactMap::new(vec![240.0, 7e13, 5e11]).unwrap();
    let mut worst_rel = 0.0f64;
    for _ in 0..1000 {
        let x = [
            rng.gen_range(0.0..240.0 * 100.0),
            rng.gen_range(0.0..7e13 * 100.0),
            rng.gen_range(0.0..5e11 * 100.0),
        ];
        let back = map.decompactify(&map.compactify(&x).unwrap()).unwrap();
        for i in 0..3 {
            if x[i] > 0.0 {
                worst_rel = worst_rel.max((back[i] - x[i]).abs() / x[i]);
            }
        }
    }
    assert!(worst_rel <= 1e-12, "round trip off by {worst_rel:e}");

    // orbital equivalence after time homogenization
    let lower = [0.0; 3];
    let upper = [1.0; 3];
    let mut worst_dev = 0.0f64;
    for _ in 0..10 {
        let y0 = [
            rng.gen_range(0.15..0.85),
            rng.gen_range(0.15..0.85),
            rng.gen_range(0.15..0.85),
        ];
        let dev = path_deviation_after_homogenization(
            &raw,
            eps,
            &y0,
            Control(0),
            300.0,
            0.05,
            Some((&lower, &upper)),
        )
        .unwrap();
        worst_dev = worst_dev.max(dev);
    }
    assert!(worst_dev <= 1e-3, "path deviation {worst_dev}");

    println!(
        "ACCEPTANCE criterion 6 (property suite): PASS — {nontrivial}/50 nontrivial oracle instances, worst round trip {worst_rel:.1e}, worst path deviation {worst_dev:.1e}"
    );
}

#[test]
fn criterion_7_determinism() {
    let cfg = RunConfig::parse("resolution = 24\n").unwrap();
    let encode = |workers: usize| -> Vec<u8> {
        let result = commands::with_pool(Some(workers), || commands::run_partition(&cfg)).unwrap();
        format::encode(&commands::partition_file_of(&result)).unwrap()
    };
    let one_a = encode(1);
    let one_b = encode(1);
    let four = encode(4);
    let two = encode(2);
    let ok = one_a == one_b && one_a == four && one_a == two;
    println!(
        "ACCEPTANCE criterion 7 (determinism): {} — {} bytes, identical across repeats and worker counts 1/2/4",
        if ok { "PASS" } else { "FAIL" },
        one_a.len()
    );
    assert!(ok);

    // the container round-trips losslessly
    let decoded = format::decode(&one_a).unwrap();
    assert_eq!(decoded.config_echo, cfg.canonical_echo());
    let kernel_run = commands::run_kernel(&cfg, ConstraintKind::Desirable).unwrap();
    assert!(kernel_run.set.cardinality() > 0);
}
