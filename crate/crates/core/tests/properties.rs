use proptest::prelude::*;

use fibrejam::experiments::{simulate_drop, simulate_slip, ContactLaw, DropConfig, SlipConfig, SlipParams};
use fibrejam::materials::{LinearElasticModel, MaterialModel, YeohModel};
use fibrejam::optimize::{cubic_polyfit, trf_least_squares, CubicFit, LeastSquaresProblem, TrfOptions};
use fibrejam::solver::{peak_force, solve_tensile, solve_tensile_run, LoadCase, SolverOptions};
use fibrejam::tendon::{contact_graph, default_tendon_spec, hex_positions, mesh, BundleParams, FrictionTable};

fn coarse_load(pressure: f64) -> LoadCase {
    LoadCase {
        max_displacement: 10.0,
        n_steps: 10,
        vacuum_pressure: pressure,
        ..LoadCase::default()
    }
}

proptest! {
    #[test]
    fn zero_stretch_gives_zero_stress(c1 in 1e-4..1.0f64, c2 in 0.0..0.1f64, c3 in 0.0..0.1f64, e in 0.1..100.0f64) {
        let y = MaterialModel::Yeoh(YeohModel::new(c1, c2, c3).unwrap());
        let l = MaterialModel::Linear(LinearElasticModel::new(e).unwrap());
        prop_assert_eq!(y.nominal_stress(1.0).unwrap(), 0.0);
        prop_assert_eq!(l.nominal_stress(1.0).unwrap(), 0.0);
    }

    #[test]
    fn tangent_matches_central_difference(l in 1.001..2.0f64) {
        let m = MaterialModel::Yeoh(YeohModel::SHORE_A30);
        let h = 1e-6;
        let fd = (m.nominal_stress(l + h).unwrap() - m.nominal_stress(l - h).unwrap()) / (2.0 * h);
        let k = m.tangent_stiffness(l).unwrap();
        prop_assert!(((k - fd) / fd).abs() < 1e-6, "k {} fd {}", k, fd);
    }

    #[test]
    fn hex_spacing_equals_pitch(n in 2usize..=19, pitch in 0.5..5.0f64) {
        let p = hex_positions(n, pitch).unwrap();
        let mut min = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                min = min.min(((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt());
            }
        }
        prop_assert!((min - pitch).abs() < 1e-12 * pitch.max(1.0));
    }

    #[test]
    fn mesh_counts_and_ordering(epf in 2usize..30) {
        let spec = default_tendon_spec();
        let m = mesh(&spec, epf).unwrap();
        let n = spec.fibres.len();
        prop_assert!(m.elements.len() >= n * (epf.saturating_sub(1)) && m.elements.len() <= n * (epf + 1));
        for nodes in &m.fibre_nodes {
            prop_assert!(nodes.windows(2).all(|w| m.nodes[w[1]].coord > m.nodes[w[0]].coord));
        }
    }
}

#[test]
fn yeoh_is_increasing_on_unit_to_double_stretch() {
    let m = MaterialModel::Yeoh(YeohModel::SHORE_A30);
    let p: Vec<f64> = (0..=1000)
        .map(|i| m.nominal_stress(1.0 + i as f64 / 1000.0).unwrap())
        .collect();
    assert!(p.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn contact_graph_is_symmetric_and_classed_once() {
    let spec = default_tendon_spec();
    let pairs = contact_graph(&spec).unwrap();
    for p in &pairs {
        assert!(p.fibres.0 < p.fibres.1);
        assert!(p.connects(p.fibres.1, p.fibres.0));
        let covered: f64 = p.stations.iter().map(|s| s.length()).sum();
        assert!((covered - spec.free_length).abs() < 1e-9);
        assert!(p.stations.windows(2).all(|w| w[0].end <= w[1].start + 1e-12));
    }
    let mut keys: Vec<_> = pairs.iter().map(|p| p.fibres).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), pairs.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn friction_dissipation_is_non_negative(pressure in -60.0..0.0f64, scale in 0.0..2.0f64) {
        let m = mesh(&default_tendon_spec(), 5).unwrap();
        let run = solve_tensile_run(&m, &FrictionTable::CALIBRATED.scaled(scale), &coarse_load(pressure), &SolverOptions::default()).unwrap();
        prop_assert!(run.curve.external_work() - run.stored_energy >= -1e-9);
        prop_assert!(run.dissipated_energy >= -1e-9);
    }

    #[test]
    fn drop_deceleration_rises_with_stiffness(k in 1.0..200.0f64, damping in 0.0..0.1f64) {
        let peak = |stiffness: f64| {
            let cfg = DropConfig {
                contact: ContactLaw::Linear { stiffness, damping },
                sensor_saturation: None,
                duration: 0.3,
                ..DropConfig::default()
            };
            simulate_drop(&cfg).unwrap().max_deceleration
        };
        let a = [peak(k), peak(2.0 * k), peak(4.0 * k)];
        prop_assert!(a[0] <= a[1] && a[1] <= a[2], "{:?}", a);
    }

    #[test]
    fn slip_stays_inside_friction_cone(
        angle in 5.0..85.0f64,
        stiffness in 0.2..5.0f64,
        mu_s in 0.05..1.5f64,
        ratio in 0.1..1.0f64,
    ) {
        let cfg = SlipConfig {
            slope_angle: angle,
            params: SlipParams { stiffness, mu_static: mu_s, mu_kinetic: ratio * mu_s },
            ..SlipConfig::default()
        };
        let r = simulate_slip(&cfg).unwrap();
        for s in &r.samples {
            prop_assert!(s.tangential_force <= mu_s * s.normal_force + 1e-9);
        }
        prop_assert!(r.dissipated_energy >= 0.0);
    }

    #[test]
    fn trf_iterates_stay_feasible_and_cost_falls(
        target in prop::collection::vec(-5.0..5.0f64, 2),
        lo in -2.0..0.0f64,
        hi in 0.5..3.0f64,
    ) {
        let residual = |x: &[f64]| vec![x[0] - target[0], 2.0 * (x[1] - target[1]), x[0] * x[1] - 1.0];
        let problem = LeastSquaresProblem::new(residual, vec![0.25, 0.25]).with_bounds(vec![lo; 2], vec![hi; 2]);
        let fit = trf_least_squares(&problem, &TrfOptions::default()).unwrap();
        for it in &fit.history {
            prop_assert!(it.parameters.iter().all(|x| *x >= lo && *x <= hi));
        }
        prop_assert!(fit.history.windows(2).all(|w| w[1].cost <= w[0].cost));
    }

    #[test]
    fn exact_cubic_is_reproduced(c in prop::array::uniform4(-3.0..3.0f64)) {
        let truth = CubicFit::new(c);
        let pts: Vec<(f64, f64)> = (0..9).map(|i| {
            let x = -2.0 + 0.5 * i as f64;
            (x, truth.eval(x))
        }).collect();
        let fit = cubic_polyfit(&pts).unwrap();
        for (x, y) in pts {
            prop_assert!((fit.eval(x) - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }
}

#[test]
fn peak_force_rises_with_pressure_and_friction() {
    let m = mesh(&default_tendon_spec(), 9).unwrap();
    let opts = SolverOptions::default();
    let mut grid = [[0.0; 3]; 3];
    for (i, p) in [-10.0, -30.0, -50.0].into_iter().enumerate() {
        for (j, s) in [0.5, 1.0, 1.5].into_iter().enumerate() {
            let c = solve_tensile(&m, &FrictionTable::CALIBRATED.scaled(s), &coarse_load(p), &opts).unwrap();
            grid[i][j] = peak_force(&c).unwrap();
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            if i > 0 {
                assert!(grid[i][j] >= grid[i - 1][j], "{grid:?}");
            }
            if j > 0 {
                assert!(grid[i][j] >= grid[i][j - 1], "{grid:?}");
            }
        }
    }
}

#[test]
fn repeated_solves_are_bit_identical() {
    let m = mesh(&default_tendon_spec(), 7).unwrap();
    let solve = || {
        solve_tensile(
            &m,
            &FrictionTable::CALIBRATED,
            &coarse_load(-30.0),
            &SolverOptions::default(),
        )
        .unwrap()
    };
    assert_eq!(solve().to_csv_string(), solve().to_csv_string());
}

#[test]
fn thinner_bundles_still_solve() {
    let spec = BundleParams {
        fibre_count: 7,
        ..BundleParams::default()
    }
    .build()
    .unwrap();
    let m = mesh(&spec, 6).unwrap();
    let c = solve_tensile(
        &m,
        &FrictionTable::CALIBRATED,
        &coarse_load(-50.0),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(peak_force(&c).unwrap() > 0.0);
}
