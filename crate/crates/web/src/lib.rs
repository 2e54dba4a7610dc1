//! Browser bindings. Every curve comes back flattened as `[x0, y0, x1, y1, ...]`.

use wasm_bindgen::prelude::*;

use fibrejam::experiments::{simulate_drop, ContactLaw, DropConfig};
use fibrejam::materials::{MaterialModel, YeohModel};
use fibrejam::solver::{solve_tensile, LoadCase, SolverOptions};
use fibrejam::tendon::{default_tendon_spec, mesh, FrictionTable};

fn flatten(points: impl IntoIterator<Item = (f64, f64)>) -> Vec<f64> {
    points.into_iter().flat_map(|(x, y)| [x, y]).collect()
}

/// Force (N) against displacement (mm) for the default tendon, with the
/// calibrated friction coefficients multiplied by `mu_scale`.
#[wasm_bindgen]
pub fn tensile_curve(
    pressure_kpa: f64,
    mu_scale: f64,
    max_displacement: f64,
    steps: usize,
) -> Result<Vec<f64>, String> {
    let friction = FrictionTable::CALIBRATED.scaled(mu_scale);
    friction.validate().map_err(|e| e.to_string())?;
    let m = mesh(&default_tendon_spec(), 9).map_err(|e| e.to_string())?;
    let load = LoadCase {
        max_displacement,
        n_steps: steps,
        vacuum_pressure: pressure_kpa,
        ..LoadCase::default()
    };
    let curve = solve_tensile(&m, &friction, &load, &SolverOptions::default()).map_err(|e| e.to_string())?;
    Ok(flatten(curve.samples))
}

/// Nominal stress (MPa) against stretch on `[1, max_stretch]`.
#[wasm_bindgen]
pub fn yeoh_curve(c1: f64, c2: f64, c3: f64, max_stretch: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(max_stretch > 1.0) || points < 2 {
        return Err("need max_stretch > 1 and at least two points".into());
    }
    let m = MaterialModel::Yeoh(YeohModel::new(c1, c2, c3).map_err(|e| e.to_string())?);
    (0..points)
        .map(|i| {
            let l = 1.0 + (max_stretch - 1.0) * i as f64 / (points - 1) as f64;
            m.nominal_stress(l).map(|p| (l, p)).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()
        .map(flatten)
}

/// Platform acceleration (m/s^2) against time (s) for a linear contact.
#[wasm_bindgen]
pub fn drop_trace(stiffness: f64, damping: f64, drop_height: f64) -> Result<Vec<f64>, String> {
    let cfg = DropConfig {
        drop_height,
        contact: ContactLaw::Linear { stiffness, damping },
        duration: 0.3,
        ..DropConfig::default()
    };
    let r = simulate_drop(&cfg).map_err(|e| e.to_string())?;
    Ok(flatten(r.samples.iter().map(|s| (s.time, s.acceleration))))
}
