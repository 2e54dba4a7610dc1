//! Tensile sweeps, friction calibration, drop and slip tests, and the
//! bundled reference measurements they are compared against.

use std::cell::Cell;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::config::Settings;
use crate::error::{Error, Result};
use crate::optimize::{cubic_polyfit, trf_least_squares, CubicFit, FitResult, LeastSquaresProblem, TrfOptions};
use crate::solver::{peak_force, solve_tensile, ForceDisplacementCurve, LoadCase, SolverOptions};
use crate::tendon::{mesh, FrictionTable, MeshedTendon, TendonSpec};

const TENSILE_PEAKS: &str = include_str!("../data/tensile_peaks.csv");
const DROP_PEAKS: &str = include_str!("../data/drop_peaks.csv");
const MODEL_PARAMETERS: &str = include_str!("../data/model_parameters.csv");

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TensileRecord {
    pub test_type: String,
    #[serde(rename = "max_peak_force_n")]
    pub max_peak_force: f64,
    #[serde(rename = "mean_peak_force_n")]
    pub mean_peak_force: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct DropRecord {
    pub structure: String,
    pub max: f64,
    pub mean: f64,
    pub std_err: f64,
    pub sensor_limited: bool,
}

/// Measured results and identified parameters shipped with the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDataset {
    pub tensile: Vec<TensileRecord>,
    pub drop: Vec<DropRecord>,
    pub friction: FrictionTable,
    pub yeoh: crate::materials::YeohModel,
    pub linear: crate::materials::LinearElasticModel,
}

fn read_embedded<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Parse {
            what: what.into(),
            message: e.to_string(),
        })
}

impl ReferenceDataset {
    pub fn bundled() -> Result<Self> {
        #[derive(Deserialize)]
        struct Param {
            parameter: String,
            value: f64,
        }
        let params: Vec<Param> = read_embedded(MODEL_PARAMETERS, "model_parameters.csv")?;
        let get = |name: &str| {
            params
                .iter()
                .find(|p| p.parameter == name)
                .map(|p| p.value)
                .ok_or_else(|| Error::Parse {
                    what: "model_parameters.csv".into(),
                    message: format!("missing `{name}`"),
                })
        };
        Ok(Self {
            tensile: read_embedded(TENSILE_PEAKS, "tensile_peaks.csv")?,
            drop: read_embedded(DROP_PEAKS, "drop_peaks.csv")?,
            friction: FrictionTable::new(get("mu_a30_a30")?, get("mu_a30_a85")?, get("mu_a85_a85")?)?,
            yeoh: crate::materials::YeohModel::new(get("yeoh_c1_mpa")?, get("yeoh_c2_mpa")?, get("yeoh_c3_mpa")?)?,
            linear: crate::materials::LinearElasticModel::new(get("linear_e_mpa")?)?,
        })
    }

    pub fn tensile_row(&self, test_type: &str) -> Option<&TensileRecord> {
        self.tensile.iter().find(|r| r.test_type == test_type)
    }

    pub fn drop_row(&self, structure: &str) -> Option<&DropRecord> {
        self.drop.iter().find(|r| r.structure == structure)
    }

    /// Multi-material tendon with membrane at the given vacuum.
    pub fn multimaterial_row(&self, pressure_kpa: f64) -> Option<&TensileRecord> {
        if pressure_kpa == 0.0 {
            self.tensile_row("With membrane, Atm.")
        } else {
            self.tensile_row(&format!("Mm, Vac {pressure_kpa} kPa"))
        }
    }
}

/// Worker count: `FIBREJAM_THREADS` if set and positive, else the machine's
/// available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("FIBREJAM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Order-preserving parallel map over at most `threads` scoped workers.
fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new(items.iter().map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub elements_per_fibre: usize,
    /// Ramp definition; its pressure is replaced per run.
    pub load: LoadCase,
    pub solver: SolverOptions,
    /// `None` uses [`worker_threads`].
    pub threads: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            elements_per_fibre: 17,
            load: LoadCase::default(),
            solver: SolverOptions::default(),
            threads: None,
        }
    }
}

impl SweepOptions {
    fn thread_count(&self) -> usize {
        self.threads.unwrap_or_else(worker_threads)
    }
}

fn sweep_mesh(
    mesh: &MeshedTendon,
    friction: &FrictionTable,
    pressures: &[f64],
    load: &LoadCase,
    solver: &SolverOptions,
    threads: usize,
) -> Vec<Result<ForceDisplacementCurve>> {
    parallel_map(pressures, threads, |&p| {
        let load = LoadCase {
            vacuum_pressure: p,
            ..*load
        };
        solve_tensile(mesh, friction, &load, solver).map_err(|e| Error::AtPressure {
            pressure_kpa: p,
            source: Box::new(e),
        })
    })
}

/// One tensile curve per pressure, in input order.
pub fn run_pressure_sweep(
    spec: &TendonSpec,
    friction: &FrictionTable,
    pressures: &[f64],
    opts: &SweepOptions,
) -> Result<Vec<ForceDisplacementCurve>> {
    if let Some(p) = pressures.iter().find(|p| !(**p <= 0.0)) {
        return Err(Error::Input(format!("vacuum pressure must be <= 0 kPa, got {p}")));
    }
    let m = mesh(spec, opts.elements_per_fibre)?;
    sweep_mesh(&m, friction, pressures, &opts.load, &opts.solver, opts.thread_count())
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationTarget {
    /// Force samples to match pointwise against the cubic-smoothed simulation.
    Curve {
        pressure_kpa: f64,
        samples: Vec<(f64, f64)>,
    },
    /// Peak force of the whole ramp.
    Peak { pressure_kpa: f64, force: f64 },
}

impl CalibrationTarget {
    pub fn pressure(&self) -> f64 {
        match self {
            CalibrationTarget::Curve { pressure_kpa, .. } | CalibrationTarget::Peak { pressure_kpa, .. } => {
                *pressure_kpa
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            CalibrationTarget::Curve { samples, .. } => samples.len(),
            CalibrationTarget::Peak { .. } => 1,
        }
    }

    fn reference_peak(&self) -> f64 {
        match self {
            CalibrationTarget::Curve { samples, .. } => samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max),
            CalibrationTarget::Peak { force, .. } => *force,
        }
    }
}

/// 21 evenly spaced samples of the cubic-smoothed simulated curve.
pub fn smoothed_samples(curve: &ForceDisplacementCurve, max_displacement: f64) -> Result<Vec<(f64, f64)>> {
    let fit = cubic_polyfit(&curve.samples)?;
    Ok((0..=20)
        .map(|i| {
            let x = max_displacement * i as f64 / 20.0;
            (x, fit.eval(x))
        })
        .collect())
}

/// A curve target produced by the forward model itself.
pub fn synthetic_curve_target(
    spec: &TendonSpec,
    friction: &FrictionTable,
    pressure_kpa: f64,
    opts: &SweepOptions,
) -> Result<CalibrationTarget> {
    let curve = run_pressure_sweep(spec, friction, &[pressure_kpa], opts)?.remove(0);
    Ok(CalibrationTarget::Curve {
        pressure_kpa,
        samples: smoothed_samples(&curve, opts.load.max_displacement)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    pub fit_friction: bool,
    pub fit_contact_width: bool,
    pub fit_membrane: bool,
    /// Starting point when fitted, fixed value otherwise.
    pub friction: FrictionTable,
    pub mu_lower: [f64; 3],
    pub mu_upper: [f64; 3],
    pub width_bounds: (f64, f64),
    pub membrane_bounds: (f64, f64),
    /// Pressures predicted after the fit, with optional measured peaks.
    pub held_out: Vec<(f64, Option<f64>)>,
    /// Residual value used when a forward solve fails.
    pub penalty: f64,
    pub sweep: SweepOptions,
    pub trf: TrfOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            fit_friction: true,
            fit_contact_width: false,
            fit_membrane: false,
            friction: FrictionTable::from_array([0.5; 3]),
            mu_lower: [0.0; 3],
            mu_upper: [2.0; 3],
            width_bounds: (0.05, 5.0),
            membrane_bounds: (0.0, 10.0),
            held_out: Vec::new(),
            penalty: 1e3,
            sweep: SweepOptions::default(),
            trf: TrfOptions {
                diff_step: 1e-4,
                ..TrfOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakPrediction {
    pub pressure_kpa: f64,
    pub predicted: f64,
    pub reference: Option<f64>,
    pub held_out: bool,
}

impl PeakPrediction {
    pub fn relative_error(&self) -> Option<f64> {
        self.reference.map(|r| (self.predicted - r) / r)
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub friction: FrictionTable,
    pub contact_width: f64,
    pub membrane_stiffness: f64,
    pub initial_residual_norm: f64,
    pub fit: FitResult,
    /// Residual evaluations that fell back to the penalty value.
    pub failed_evaluations: usize,
    pub predictions: Vec<PeakPrediction>,
}

impl CalibrationReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "mu_a30_a30,mu_a30_a85,mu_a85_a85,contact_width_mm,membrane_stiffness_n_per_mm,initial_residual_norm,residual_norm,iterations,evaluations,failed_evaluations,status,any_active_bound"
        )?;
        let f = &self.friction;
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{},{},{}",
            f.mu_a30_a30,
            f.mu_a30_a85,
            f.mu_a85_a85,
            self.contact_width,
            self.membrane_stiffness,
            self.initial_residual_norm,
            self.fit.residual_norm,
            self.fit.iterations,
            self.fit.evaluations,
            self.failed_evaluations,
            self.fit.status.as_str(),
            self.fit.any_active()
        )
    }

    pub fn write_predictions_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "pressure_kpa,predicted_peak_n,reference_peak_n,relative_error,held_out"
        )?;
        for p in &self.predictions {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
            writeln!(
                out,
                "{:?},{:?},{},{},{}",
                p.pressure_kpa,
                p.predicted,
                opt(p.reference),
                opt(p.relative_error()),
                p.held_out
            )?;
        }
        Ok(())
    }
}

struct Unpacked {
    friction: FrictionTable,
    width: f64,
    membrane: f64,
}

struct Layout<'a> {
    opts: &'a CalibrationOptions,
    base_membrane: f64,
}

impl Layout<'_> {
    fn initial(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let o = self.opts;
        let (mut x, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new());
        if o.fit_friction {
            x.extend(o.friction.as_array());
            lo.extend(o.mu_lower);
            hi.extend(o.mu_upper);
        }
        if o.fit_contact_width {
            x.push(o.sweep.solver.contact_strip_width);
            lo.push(o.width_bounds.0);
            hi.push(o.width_bounds.1);
        }
        if o.fit_membrane {
            x.push(self.base_membrane);
            lo.push(o.membrane_bounds.0);
            hi.push(o.membrane_bounds.1);
        }
        (x, lo, hi)
    }

    fn unpack(&self, p: &[f64]) -> Unpacked {
        let o = self.opts;
        let mut it = p.iter().copied();
        let friction = if o.fit_friction {
            let mu = [it.next(), it.next(), it.next()].map(|v| v.expect("parameter count").max(0.0));
            FrictionTable::from_array(mu)
        } else {
            o.friction
        };
        let width = if o.fit_contact_width {
            it.next().expect("parameter count")
        } else {
            o.sweep.solver.contact_strip_width
        };
        let membrane = if o.fit_membrane {
            it.next().expect("parameter count")
        } else {
            self.base_membrane
        };
        Unpacked {
            friction,
            width,
            membrane,
        }
    }
}

fn simulate(
    base: &MeshedTendon,
    u: &Unpacked,
    pressures: &[f64],
    opts: &SweepOptions,
) -> Vec<Result<ForceDisplacementCurve>> {
    let mut m = base.clone();
    m.membrane_stiffness = u.membrane;
    let solver = SolverOptions {
        contact_strip_width: u.width,
        ..opts.solver
    };
    sweep_mesh(&m, &u.friction, pressures, &opts.load, &solver, opts.thread_count())
}

fn target_residuals(targets: &[CalibrationTarget], curves: &[Result<ForceDisplacementCurve>]) -> Result<Vec<f64>> {
    let mut r = Vec::new();
    for (t, c) in targets.iter().zip(curves) {
        let c = c.as_ref().map_err(|e| Error::Input(e.to_string()))?;
        match t {
            CalibrationTarget::Curve { samples, .. } => {
                let fit: CubicFit = cubic_polyfit(&c.samples)?;
                r.extend(samples.iter().map(|(x, y)| fit.eval(*x) - y));
            }
            CalibrationTarget::Peak { force, .. } => r.push(peak_force(c)? - force),
        }
    }
    Ok(r)
}

/// Fits friction (and optionally contact width and membrane stiffness) so
/// simulated tensile curves match the targets.
pub fn calibrate_friction(
    spec: &TendonSpec,
    targets: &[CalibrationTarget],
    opts: &CalibrationOptions,
) -> Result<CalibrationReport> {
    if targets.is_empty() {
        return Err(Error::EmptyInput("calibration targets"));
    }
    if !(opts.fit_friction || opts.fit_contact_width || opts.fit_membrane) {
        return Err(Error::Configuration("calibration has no free parameters".into()));
    }
    if let Some(t) = targets.iter().find(|t| !(t.pressure() <= 0.0)) {
        return Err(Error::Input(format!(
            "vacuum pressure must be <= 0 kPa, got {}",
            t.pressure()
        )));
    }
    let base = mesh(spec, opts.sweep.elements_per_fibre)?;
    let layout = Layout {
        opts,
        base_membrane: spec.membrane_stiffness,
    };
    let pressures: Vec<f64> = targets.iter().map(CalibrationTarget::pressure).collect();
    let n_res: usize = targets.iter().map(CalibrationTarget::len).sum();
    let failures = Cell::new(0usize);

    let residual = |p: &[f64]| -> Vec<f64> {
        let u = layout.unpack(p);
        let curves = simulate(&base, &u, &pressures, &opts.sweep);
        match target_residuals(targets, &curves) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("residual evaluation at {p:?} failed, using penalty: {e}");
                failures.set(failures.get() + 1);
                vec![opts.penalty; n_res]
            }
        }
    };

    let (x0, lo, hi) = layout.initial();
    let initial_residual_norm = residual(&x0).iter().map(|v| v * v).sum::<f64>().sqrt();
    let problem = LeastSquaresProblem::new(&residual, x0).with_bounds(lo, hi);
    let fit = trf_least_squares(&problem, &opts.trf)?;
    let best = layout.unpack(&fit.parameters);

    let mut predict: Vec<(f64, Option<f64>, bool)> = targets
        .iter()
        .map(|t| (t.pressure(), Some(t.reference_peak()), false))
        .collect();
    predict.extend(opts.held_out.iter().map(|(p, r)| (*p, *r, true)));
    let ps: Vec<f64> = predict.iter().map(|p| p.0).collect();
    let curves = simulate(&base, &best, &ps, &opts.sweep);
    let mut predictions = Vec::with_capacity(predict.len());
    for ((pressure_kpa, reference, held_out), c) in predict.into_iter().zip(curves) {
        predictions.push(PeakPrediction {
            pressure_kpa,
            predicted: peak_force(&c?)?,
            reference,
            held_out,
        });
    }

    Ok(CalibrationReport {
        friction: best.friction,
        contact_width: best.width,
        membrane_stiffness: best.membrane,
        initial_residual_norm,
        fit,
        failed_evaluations: failures.get(),
        predictions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; zero for a single repeat.
    pub std_err: f64,
    pub n: usize,
    /// Set when `n == 1` and the standard error is zero by convention.
    pub single_repeat: bool,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("repeat values"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let std_err = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    Ok(Summary {
        max,
        mean,
        std_err,
        n,
        single_repeat: n == 1,
    })
}

/// Peak forces of `repeats` copies of `curve` with Gaussian force noise.
pub fn noisy_repeat_peaks(curve: &ForceDisplacementCurve, repeats: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if repeats == 0 {
        return Err(Error::EmptyInput("repeats"));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Configuration(format!("noise sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..repeats)
        .map(|_| {
            let noisy = ForceDisplacementCurve::new(
                curve
                    .samples
                    .iter()
                    .map(|(d, f)| (*d, f + noise.sample(&mut rng)))
                    .collect(),
                curve.pressure_kpa,
            );
            peak_force(&noisy)
        })
        .collect()
}

/// Vertical force law between the platform and the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactLaw {
    /// Spring in N/mm with a viscous damper in N s/mm.
    Linear { stiffness: f64, damping: f64 },
    /// `tendons` tendon units, each extended by `lever` mm per mm of
    /// platform compression, with force given by a cubic over
    /// `[0, curve_range]` mm and extended linearly beyond it.
    Tendon {
        curve: CubicFit,
        curve_range: f64,
        tendons: usize,
        lever: f64,
        damping: f64,
    },
}

impl ContactLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ContactLaw::Linear { stiffness, damping } => stiffness > 0.0 && damping >= 0.0,
            ContactLaw::Tendon {
                curve_range,
                tendons,
                lever,
                damping,
                ..
            } => curve_range > 0.0 && tendons > 0 && lever > 0.0 && damping >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Configuration(format!("invalid contact law {self:?}")))
        }
    }

    pub fn damping(&self) -> f64 {
        match *self {
            ContactLaw::Linear { damping, .. } | ContactLaw::Tendon { damping, .. } => damping,
        }
    }

    /// Elastic force in N at `c` mm compression.
    pub fn spring_force(&self, c: f64) -> f64 {
        match *self {
            ContactLaw::Linear { stiffness, .. } => stiffness * c,
            ContactLaw::Tendon {
                curve,
                curve_range,
                tendons,
                lever,
                ..
            } => {
                let e = lever * c;
                let f = if e <= curve_range {
                    curve.eval(e) - curve.eval(0.0)
                } else {
                    curve.eval(curve_range) - curve.eval(0.0) + curve.derivative(curve_range) * (e - curve_range)
                };
                tendons as f64 * lever * f
            }
        }
    }

    /// Elastic energy in N mm at `c` mm compression.
    pub fn spring_energy(&self, c: f64) -> f64 {
        match *self {
            ContactLaw::Linear { stiffness, .. } => 0.5 * stiffness * c * c,
            ContactLaw::Tendon {
                curve,
                curve_range,
                tendons,
                lever,
                ..
            } => {
                let a0 = curve.eval(0.0);
                let e = lever * c;
                let u = if e <= curve_range {
                    curve.integral(e) - a0 * e
                } else {
                    let r = e - curve_range;
                    curve.integral(curve_range) - a0 * curve_range
                        + (curve.eval(curve_range) - a0) * r
                        + 0.5 * curve.derivative(curve_range) * r * r
                };
                tendons as f64 * u
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropConfig {
    /// kg.
    pub platform_mass: f64,
    /// mm of free fall before contact; zero starts at rest on the contact.
    pub drop_height: f64,
    pub contact: ContactLaw,
    /// m/s^2.
    pub gravity: f64,
    /// s.
    pub time_step: f64,
    /// s.
    pub duration: f64,
    /// s between recorded samples.
    pub output_interval: f64,
    /// Reported decelerations are clamped here, m/s^2.
    pub sensor_saturation: Option<f64>,
    /// Allowed relative drift of mechanical energy plus dissipation.
    pub energy_tolerance: f64,
}

impl Default for DropConfig {
    fn default() -> Self {
        Self {
            platform_mass: 1.8,
            drop_height: 50.0,
            contact: ContactLaw::Linear {
                stiffness: 10.0,
                damping: 0.0,
            },
            gravity: 9.81,
            time_step: 1e-5,
            duration: 0.5,
            output_interval: 5e-4,
            sensor_saturation: Some(71.04),
            energy_tolerance: 0.05,
        }
    }
}

impl DropConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Configuration(m.into()));
        if !(self.platform_mass > 0.0) {
            return bad("platform mass must be positive");
        }
        if !(self.drop_height >= 0.0) {
            return bad("drop height must be >= 0");
        }
        if !(self.time_step > 0.0) || !(self.duration > 0.0) || !(self.output_interval > 0.0) {
            return bad("time step, duration and output interval must be positive");
        }
        if !(self.gravity > 0.0) {
            return bad("gravity must be positive");
        }
        if matches!(self.sensor_saturation, Some(s) if !(s > 0.0)) {
            return bad("sensor saturation must be positive");
        }
        self.contact.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropSample {
    pub time: f64,
    /// Height of the contact point above the ground, mm.
    pub height: f64,
    /// Upward velocity, m/s.
    pub velocity: f64,
    /// Upward acceleration, m/s^2; `-g` in free fall.
    pub acceleration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropResult {
    pub samples: Vec<DropSample>,
    /// Peak upward acceleration after sensor clamping.
    pub max_deceleration: f64,
    pub raw_max_deceleration: f64,
    pub saturated: bool,
    /// Contact-to-flight transitions.
    pub bounces: usize,
    /// Largest relative error in energy balance seen.
    pub energy_drift: f64,
}

impl DropResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time_s,height_mm,velocity_m_s,acceleration_m_s2")?;
        for s in &self.samples {
            writeln!(out, "{:?},{:?},{:?},{:?}", s.time, s.height, s.velocity, s.acceleration)?;
        }
        Ok(())
    }
}

struct DropModel<'a> {
    cfg: &'a DropConfig,
}

impl DropModel<'_> {
    /// Total and elastic contact force in N at height `y` m, velocity `v` m/s.
    fn contact(&self, y: f64, v: f64) -> (f64, f64) {
        let c = -y * 1e3;
        if c <= 0.0 {
            return (0.0, 0.0);
        }
        let fs = self.cfg.contact.spring_force(c);
        let f = (fs - self.cfg.contact.damping() * v * 1e3).max(0.0);
        (f, fs)
    }

    /// d/dt of (height, velocity, dissipated energy).
    fn rate(&self, s: [f64; 3]) -> [f64; 3] {
        let (f, fs) = self.contact(s[0], s[1]);
        [s[1], f / self.cfg.platform_mass - self.cfg.gravity, -s[1] * (f - fs)]
    }

    /// Kinetic + potential + elastic + dissipated energy, J.
    fn energy(&self, s: [f64; 3]) -> (f64, f64) {
        let m = self.cfg.platform_mass;
        let c = (-s[0] * 1e3).max(0.0);
        let active = 0.5 * m * s[1] * s[1] + self.cfg.contact.spring_energy(c) * 1e-3;
        (active + m * self.cfg.gravity * s[0] + s[2], active)
    }

    fn rest_compression(&self) -> f64 {
        let w = self.cfg.platform_mass * self.cfg.gravity;
        let mut hi = 1.0;
        while self.cfg.contact.spring_force(hi) < w && hi < 1e6 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cfg.contact.spring_force(mid) < w {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Point-mass drop onto a contact law, integrated with classical RK4.
pub fn simulate_drop(cfg: &DropConfig) -> Result<DropResult> {
    cfg.validate()?;
    let model = DropModel { cfg };
    let y0 = if cfg.drop_height > 0.0 {
        cfg.drop_height * 1e-3
    } else {
        -model.rest_compression() * 1e-3
    };
    let mut s = [y0, 0.0, 0.0];
    let (e0, _) = model.energy(s);
    let mut scale = model.cfg.platform_mass * cfg.gravity * cfg.drop_height * 1e-3;
    let mut max_drift_abs: f64 = 0.0;

    let dt = cfg.time_step;
    let steps = (cfg.duration / dt).ceil() as usize;
    let every = ((cfg.output_interval / dt).round() as usize).max(1);
    let sample = |t: f64, s: [f64; 3]| DropSample {
        time: t,
        height: s[0] * 1e3,
        velocity: s[1],
        acceleration: model.rate(s)[1],
    };
    let mut samples = vec![sample(0.0, s)];
    let mut raw_max: f64 = 0.0;
    let mut in_contact = s[0] < 0.0;
    let mut bounces = 0;
    for k in 1..=steps {
        let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
        let k1 = model.rate(s);
        let k2 = model.rate(add(s, k1, 0.5 * dt));
        let k3 = model.rate(add(s, k2, 0.5 * dt));
        let k4 = model.rate(add(s, k3, dt));
        for i in 0..3 {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let a = model.rate(s)[1];
        raw_max = raw_max.max(a);
        let (e, active) = model.energy(s);
        scale = scale.max(active);
        max_drift_abs = max_drift_abs.max((e - e0).abs());
        let contact = s[0] < 0.0;
        if in_contact && !contact {
            bounces += 1;
        }
        in_contact = contact;
        if k % every == 0 {
            samples.push(sample(k as f64 * dt, s));
        }
    }

    let energy_drift = if scale > 0.0 { max_drift_abs / scale } else { 0.0 };
    if energy_drift > cfg.energy_tolerance {
        return Err(Error::Integrator {
            drift: energy_drift,
            limit: cfg.energy_tolerance,
        });
    }
    let (max_deceleration, saturated) = match cfg.sensor_saturation {
        Some(limit) if raw_max >= limit => (limit, true),
        _ => (raw_max, false),
    };
    Ok(DropResult {
        samples,
        max_deceleration,
        raw_max_deceleration: raw_max,
        saturated,
        bounces,
        energy_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipParams {
    /// Foot stiffness in N/mm, the same normal to and along the slope.
    pub stiffness: f64,
    pub mu_static: f64,
    pub mu_kinetic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipConfig {
    /// Degrees from horizontal.
    pub slope_angle: f64,
    /// mm/s.
    pub descent_rate: f64,
    /// mm of vertical drive after first contact.
    pub travel: f64,
    /// s.
    pub time_step: f64,
    pub params: SlipParams,
}

impl Default for SlipConfig {
    fn default() -> Self {
        Self {
            slope_angle: 40.0,
            descent_rate: 5.0,
            travel: 110.0,
            time_step: 0.02,
            params: SlipParams {
                stiffness: 1.5,
                mu_static: 0.3,
                mu_kinetic: 0.2,
            },
        }
    }
}

impl SlipConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Configuration(m.into()));
        if !(self.slope_angle > 0.0 && self.slope_angle < 90.0) {
            return bad("slope angle must lie strictly between 0 and 90 degrees");
        }
        if !(self.travel >= 0.0) || !(self.descent_rate > 0.0) || !(self.time_step > 0.0) {
            return bad("travel must be >= 0, descent rate and time step positive");
        }
        let p = &self.params;
        if !(p.stiffness > 0.0) || !(p.mu_kinetic >= 0.0) || !(p.mu_static >= p.mu_kinetic) {
            return bad("need stiffness > 0 and mu_static >= mu_kinetic >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipSample {
    pub time: f64,
    /// Vertical drive, mm.
    pub descent: f64,
    pub normal_force: f64,
    pub tangential_force: f64,
    /// Accumulated slide along the slope, mm.
    pub slip: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlipResult {
    pub samples: Vec<SlipSample>,
    /// J.
    pub dissipated_energy: f64,
    pub slip_events: usize,
}

impl SlipResult {
    pub fn total_slip(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.slip)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time_s,descent_mm,normal_force_n,tangential_force_n,slip_mm")?;
        for s in &self.samples {
            writeln!(
                out,
                "{:?},{:?},{:?},{:?},{:?}",
                s.time, s.descent, s.normal_force, s.tangential_force, s.slip
            )?;
        }
        Ok(())
    }
}

/// Quasi-static stick-slip of a compliant foot driven down onto a slope.
pub fn simulate_slip(cfg: &SlipConfig) -> Result<SlipResult> {
    cfg.validate()?;
    let p = cfg.params;
    let (sin, cos) = cfg.slope_angle.to_radians().sin_cos();
    let per_step = cfg.descent_rate * cfg.time_step;
    let n = (cfg.travel / per_step).ceil() as usize;
    let mut samples = vec![SlipSample {
        time: 0.0,
        descent: 0.0,
        normal_force: 0.0,
        tangential_force: 0.0,
        slip: 0.0,
    }];
    let mut slip = 0.0;
    let mut dissipated = 0.0;
    let mut events = 0;
    for i in 1..=n {
        let z = cfg.travel * i as f64 / n as f64;
        let normal = p.stiffness * z * cos;
        let mut tangential = p.stiffness * (z * sin - slip);
        if tangential > p.mu_static * normal {
            let next = z * sin - p.mu_kinetic * z * cos;
            dissipated += p.mu_kinetic * normal * (next - slip);
            slip = next;
            tangential = p.stiffness * (z * sin - slip);
            events += 1;
        }
        samples.push(SlipSample {
            time: z / cfg.descent_rate,
            descent: z,
            normal_force: normal,
            tangential_force: tangential,
            slip,
        });
    }
    Ok(SlipResult {
        samples,
        dissipated_energy: dissipated * 1e-3,
        slip_events: events,
    })
}

const DROP_PRESETS: [(&str, &str); 5] = [
    ("rigid", include_str!("../configs/drop_rigid.toml")),
    ("standard", include_str!("../configs/drop_standard.toml")),
    ("squash", include_str!("../configs/drop_squash.toml")),
    ("jammed", include_str!("../configs/drop_jammed.toml")),
    ("unjammed", include_str!("../configs/drop_unjammed.toml")),
];

const SLIP_PRESETS: [(&str, &str); 3] = [
    ("rigid", include_str!("../configs/slip_rigid.toml")),
    ("jammed", include_str!("../configs/slip_jammed.toml")),
    ("unjammed", include_str!("../configs/slip_unjammed.toml")),
];

pub fn drop_preset_names() -> impl Iterator<Item = &'static str> {
    DROP_PRESETS.iter().map(|p| p.0)
}

fn preset<'a>(table: &'a [(&str, &str)], kind: &str, name: &str) -> Result<&'a str> {
    table
        .iter()
        .find(|p| p.0 == name)
        .map(|p| p.1)
        .ok_or_else(|| Error::Configuration(format!("unknown {kind} preset `{name}`")))
}

/// Drop configuration from the committed preset files.
pub fn drop_preset(name: &str) -> Result<DropConfig> {
    Settings::parse(preset(&DROP_PRESETS, "drop", name)?)?.drop_config()
}

pub fn slip_preset(name: &str) -> Result<SlipConfig> {
    Settings::parse(preset(&SLIP_PRESETS, "slip", name)?)?.slip_config()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tendon::{default_tendon_spec, BundleParams};

    #[test]
    fn bundled_dataset_matches_printed_values() {
        let d = ReferenceDataset::bundled().unwrap();
        assert_eq!(d.tensile.len(), 9);
        assert_eq!(d.drop.len(), 5);
        assert_eq!(d.multimaterial_row(-30.0).unwrap().mean_peak_force, 39.852);
        assert_eq!(d.multimaterial_row(-50.0).unwrap().mean_peak_force, 50.214);
        assert_eq!(d.multimaterial_row(0.0).unwrap().mean_peak_force, 23.330);
        assert_eq!(d.multimaterial_row(-10.0).unwrap().std_err, 0.488);
        assert_eq!(d.drop_row("Rigid Ankle").unwrap().max, 71.040);
        assert!(d.drop_row("Rigid Ankle").unwrap().sensor_limited);
        assert_eq!(d.drop_row("Unjammed Ankle").unwrap().mean, 31.259);
        assert_eq!(d.friction, FrictionTable::CALIBRATED);
        assert_eq!(d.yeoh, crate::materials::YeohModel::SHORE_A30);
        assert_eq!(d.linear.e_modulus, 7.34);
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[5.0; 5]).unwrap();
        assert_eq!((s.max, s.mean, s.std_err), (5.0, 5.0, 0.0));
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.max, s.mean), (3.0, 2.0));
        assert!((s.std_err - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        let s = summarize(&[7.0]).unwrap();
        assert_eq!((s.max, s.mean, s.std_err), (7.0, 7.0, 0.0));
        assert!(s.single_repeat);
        assert!(matches!(summarize(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn noise_free_repeats_have_zero_spread() {
        let c = ForceDisplacementCurve::new(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 3.0)], 0.0);
        let peaks = noisy_repeat_peaks(&c, 4, 0.0, 1).unwrap();
        assert_eq!(summarize(&peaks).unwrap().std_err, 0.0);
        let a = noisy_repeat_peaks(&c, 4, 0.1, 7).unwrap();
        let b = noisy_repeat_peaks(&c, 4, 0.1, 7).unwrap();
        assert_eq!(a, b);
        assert!(summarize(&a).unwrap().std_err > 0.0);
    }

    #[test]
    fn parallel_map_preserves_order() {
        let v: Vec<u32> = (0..50).collect();
        assert_eq!(
            parallel_map(&v, 4, |x| x * 2),
            v.iter().map(|x| x * 2).collect::<Vec<_>>()
        );
        assert!(parallel_map(&[] as &[u32], 4, |x| *x).is_empty());
    }

    #[test]
    fn sweep_rejects_positive_pressure() {
        let err = run_pressure_sweep(
            &default_tendon_spec(),
            &FrictionTable::CALIBRATED,
            &[5.0],
            &SweepOptions::default(),
        );
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn identical_pressures_give_identical_curves() {
        let spec = BundleParams {
            fibre_count: 3,
            ..BundleParams::default()
        }
        .build()
        .unwrap();
        let opts = SweepOptions {
            load: LoadCase {
                n_steps: 20,
                ..LoadCase::default()
            },
            threads: Some(2),
            ..SweepOptions::default()
        };
        let c = run_pressure_sweep(&spec, &FrictionTable::CALIBRATED, &[0.0, 0.0], &opts).unwrap();
        assert_eq!(c[0], c[1]);
    }

    #[test]
    fn drop_from_rest_does_not_decelerate() {
        let cfg = DropConfig {
            drop_height: 0.0,
            duration: 0.1,
            ..DropConfig::default()
        };
        let r = simulate_drop(&cfg).unwrap();
        assert!(r.max_deceleration < 0.1, "{}", r.max_deceleration);
    }

    #[test]
    fn free_fall_is_minus_g() {
        let r = simulate_drop(&DropConfig::default()).unwrap();
        let fall: Vec<_> = r.samples.iter().filter(|s| s.height > 0.0).collect();
        assert!(fall.len() > 10);
        assert!(fall.iter().all(|s| (s.acceleration + 9.81).abs() < 1e-12));
    }

    #[test]
    fn undamped_spring_conserves_energy_over_bounces() {
        let cfg = DropConfig {
            duration: 1.0,
            sensor_saturation: None,
            ..DropConfig::default()
        };
        let r = simulate_drop(&cfg).unwrap();
        assert!(r.bounces >= 3, "{} bounces", r.bounces);
        assert!(r.energy_drift < 0.01, "{}", r.energy_drift);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let cfg = DropConfig {
            contact: ContactLaw::Linear {
                stiffness: 2000.0,
                damping: 0.0,
            },
            time_step: 2e-3,
            ..DropConfig::default()
        };
        assert!(matches!(simulate_drop(&cfg), Err(Error::Integrator { .. })));
    }

    #[test]
    fn stiff_contact_saturates_sensor() {
        let cfg = DropConfig {
            contact: ContactLaw::Linear {
                stiffness: 2000.0,
                damping: 0.05,
            },
            ..DropConfig::default()
        };
        let r = simulate_drop(&cfg).unwrap();
        assert!(r.saturated);
        assert_eq!(r.max_deceleration, 71.04);
        assert!(r.raw_max_deceleration > 71.04);
    }

    #[test]
    fn tendon_law_energy_is_force_integral() {
        let law = ContactLaw::Tendon {
            curve: CubicFit::new([0.1, 1.2, 0.05, 0.002]),
            curve_range: 20.0,
            tendons: 4,
            lever: 0.6,
            damping: 0.0,
        };
        for c in [1.0, 10.0, 33.0, 50.0] {
            let h = 1e-5;
            let num = (law.spring_energy(c + h) - law.spring_energy(c - h)) / (2.0 * h);
            assert!((num - law.spring_force(c)).abs() < 1e-6 * law.spring_force(c).max(1.0));
        }
        assert_eq!(law.spring_force(0.0), 0.0);
    }

    #[test]
    fn slip_inside_friction_cone_never_slides() {
        let mu = 40f64.to_radians().tan() + 0.5;
        let cfg = SlipConfig {
            params: SlipParams {
                stiffness: 1.5,
                mu_static: mu,
                mu_kinetic: mu,
            },
            ..SlipConfig::default()
        };
        let r = simulate_slip(&cfg).unwrap();
        assert_eq!(r.total_slip(), 0.0);
        assert_eq!(r.dissipated_energy, 0.0);
    }

    #[test]
    fn slip_with_no_travel_is_all_zero() {
        let r = simulate_slip(&SlipConfig {
            travel: 0.0,
            ..SlipConfig::default()
        })
        .unwrap();
        assert!(r
            .samples
            .iter()
            .all(|s| s.normal_force == 0.0 && s.tangential_force == 0.0 && s.slip == 0.0));
    }

    #[test]
    fn slip_config_errors() {
        for angle in [0.0, 90.0, 95.0, -5.0] {
            let cfg = SlipConfig {
                slope_angle: angle,
                ..SlipConfig::default()
            };
            assert!(matches!(simulate_slip(&cfg), Err(Error::Configuration(_))));
        }
    }

    #[test]
    fn slip_is_stick_slip_sawtooth() {
        let r = simulate_slip(&SlipConfig::default()).unwrap();
        assert!(r.slip_events > 1);
        assert!(r.dissipated_energy > 0.0);
        let drops = r
            .samples
            .windows(2)
            .filter(|w| w[1].tangential_force < w[0].tangential_force)
            .count();
        assert!(drops > 0);
    }

    #[test]
    fn presets_load() {
        for name in drop_preset_names() {
            drop_preset(name).unwrap();
        }
        for name in ["rigid", "jammed", "unjammed"] {
            slip_preset(name).unwrap();
        }
        assert!(drop_preset("bogus").is_err());
    }
}
