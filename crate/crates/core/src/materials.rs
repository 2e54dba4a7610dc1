//! Uniaxial constitutive laws for the printed fibre materials.
//!
//! Units are N, mm and MPa throughout. All laws are evaluated for
//! incompressible uniaxial tension, where the lateral stretches are
//! `1/sqrt(stretch)` and the first invariant is `I1 = l^2 + 2/l`.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::optimize::{trf_least_squares, FitResult, LeastSquaresProblem, TrfOptions};

/// Incompressible Yeoh solid, `W = C1 (I1-3) + C2 (I1-3)^2 + C3 (I1-3)^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YeohModel {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl YeohModel {
    /// Fit to dogbone data of the Shore A-30 resin.
    pub const SHORE_A30: YeohModel = YeohModel {
        c1: 1.2e-2,
        c2: 1.0e-4,
        c3: 6.2e-3,
    };

    pub fn new(c1: f64, c2: f64, c3: f64) -> Result<Self> {
        let m = Self { c1, c2, c3 };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1.is_finite()) || !self.c2.is_finite() || !self.c3.is_finite() {
            return Err(Error::Configuration(format!("invalid Yeoh coefficients {self:?}")));
        }
        Ok(())
    }

    fn dw(&self, x: f64) -> f64 {
        self.c1 + x * (2.0 * self.c2 + 3.0 * self.c3 * x)
    }

    fn d2w(&self, x: f64) -> f64 {
        2.0 * self.c2 + 6.0 * self.c3 * x
    }

    fn stress(&self, l: f64) -> f64 {
        let x = l * l + 2.0 / l - 3.0;
        2.0 * (l - 1.0 / (l * l)) * self.dw(x)
    }

    fn tangent(&self, l: f64) -> f64 {
        let x = l * l + 2.0 / l - 3.0;
        let di1 = 2.0 * l - 2.0 / (l * l);
        2.0 * (1.0 + 2.0 / (l * l * l)) * self.dw(x) + 2.0 * (l - 1.0 / (l * l)) * self.d2w(x) * di1
    }

    fn energy(&self, l: f64) -> f64 {
        let x = l * l + 2.0 / l - 3.0;
        x * (self.c1 + x * (self.c2 + x * self.c3))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearElasticModel {
    pub e_modulus: f64,
}

impl LinearElasticModel {
    /// Shore A-85 mix, treated as linear.
    pub const SHORE_A85: LinearElasticModel = LinearElasticModel { e_modulus: 7.34 };

    pub fn new(e_modulus: f64) -> Result<Self> {
        if !(e_modulus > 0.0 && e_modulus.is_finite()) {
            return Err(Error::Configuration(format!(
                "elastic modulus must be positive, got {e_modulus}"
            )));
        }
        Ok(Self { e_modulus })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaterialModel {
    Yeoh(YeohModel),
    Linear(LinearElasticModel),
    /// End-plate material; infinitely stiff.
    Rigid,
}

impl MaterialModel {
    pub fn name(&self) -> &'static str {
        match self {
            MaterialModel::Yeoh(_) => "yeoh",
            MaterialModel::Linear(_) => "linear",
            MaterialModel::Rigid => "rigid",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MaterialModel::Yeoh(m) => m.validate(),
            MaterialModel::Linear(m) => LinearElasticModel::new(m.e_modulus).map(|_| ()),
            MaterialModel::Rigid => Ok(()),
        }
    }

    /// Small-strain Young's modulus, `None` for the rigid variant.
    pub fn initial_modulus(&self) -> Option<f64> {
        match self {
            MaterialModel::Yeoh(m) => Some(6.0 * m.c1),
            MaterialModel::Linear(m) => Some(m.e_modulus),
            MaterialModel::Rigid => None,
        }
    }

    /// Nominal (first Piola) stress in MPa.
    pub fn nominal_stress(&self, stretch: f64) -> Result<f64> {
        check_stretch(stretch)?;
        self.stress_unchecked(stretch)
            .ok_or(Error::Unsupported("rigid material"))
    }

    /// `d(nominal stress)/d(stretch)` in MPa.
    pub fn tangent_stiffness(&self, stretch: f64) -> Result<f64> {
        check_stretch(stretch)?;
        self.tangent_unchecked(stretch)
            .ok_or(Error::Unsupported("rigid material"))
    }

    /// Stored energy per unit reference volume (MPa = mJ/mm^3).
    pub fn strain_energy_density(&self, stretch: f64) -> Result<f64> {
        check_stretch(stretch)?;
        self.energy_unchecked(stretch)
            .ok_or(Error::Unsupported("rigid material"))
    }

    // The solver may visit mild compression in intermediate iterates, so it
    // evaluates the smooth closed forms without the tension-only guard.
    pub(crate) fn stress_unchecked(&self, l: f64) -> Option<f64> {
        match self {
            MaterialModel::Yeoh(m) => Some(m.stress(l)),
            MaterialModel::Linear(m) => Some(m.e_modulus * (l - 1.0)),
            MaterialModel::Rigid => None,
        }
    }

    pub(crate) fn tangent_unchecked(&self, l: f64) -> Option<f64> {
        match self {
            MaterialModel::Yeoh(m) => Some(m.tangent(l)),
            MaterialModel::Linear(m) => Some(m.e_modulus),
            MaterialModel::Rigid => None,
        }
    }

    pub(crate) fn energy_unchecked(&self, l: f64) -> Option<f64> {
        match self {
            MaterialModel::Yeoh(m) => Some(m.energy(l)),
            MaterialModel::Linear(m) => Some(0.5 * m.e_modulus * (l - 1.0) * (l - 1.0)),
            MaterialModel::Rigid => None,
        }
    }
}

impl fmt::Display for MaterialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaterialModel::Yeoh(m) => write!(f, "yeoh(c1={}, c2={}, c3={})", m.c1, m.c2, m.c3),
            MaterialModel::Linear(m) => write!(f, "linear(E={})", m.e_modulus),
            MaterialModel::Rigid => write!(f, "rigid"),
        }
    }
}

fn check_stretch(stretch: f64) -> Result<()> {
    if stretch.is_finite() && stretch >= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(stretch))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct StressStrainSample {
    pub stretch: f64,
    #[serde(rename = "nominal_stress_mpa")]
    pub nominal_stress: f64,
}

fn validate_samples(samples: &[StressStrainSample]) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        check_stretch(s.stretch)?;
        if !s.nominal_stress.is_finite() {
            return Err(Error::Input(format!("sample {i} has non-finite stress")));
        }
        if i > 0 && s.stretch <= samples[i - 1].stretch {
            return Err(Error::Input(format!(
                "stretches must be strictly increasing (sample {i}: {} after {})",
                s.stretch,
                samples[i - 1].stretch
            )));
        }
    }
    Ok(())
}

/// Reads a dogbone CSV with header `stretch,nominal_stress_mpa`.
pub fn read_dogbone_csv(path: &Path) -> Result<Vec<StressStrainSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            what: path.display().to_string(),
            message: e.to_string(),
        })?;
    let headers = reader.headers().map_err(|e| Error::Parse {
        what: path.display().to_string(),
        message: e.to_string(),
    })?;
    if headers != vec!["stretch", "nominal_stress_mpa"] {
        return Err(Error::Parse {
            what: path.display().to_string(),
            message: format!("expected header `stretch,nominal_stress_mpa`, got {headers:?}"),
        });
    }
    let samples = reader
        .deserialize()
        .collect::<std::result::Result<Vec<StressStrainSample>, _>>()
        .map_err(|e| Error::Parse {
            what: path.display().to_string(),
            message: e.to_string(),
        })?;
    validate_samples(&samples)?;
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YeohBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for YeohBounds {
    fn default() -> Self {
        Self {
            lower: [0.0, f64::NEG_INFINITY, f64::NEG_INFINITY],
            upper: [f64::INFINITY; 3],
        }
    }
}

#[derive(Debug, Clone)]
pub struct YeohFit {
    pub model: YeohModel,
    pub fit: FitResult,
    /// All-zero data or `c1` pinned at its lower bound.
    pub degenerate: bool,
}

pub fn fit_yeoh(samples: &[StressStrainSample], initial_guess: YeohModel) -> Result<YeohFit> {
    fit_yeoh_with(samples, initial_guess, YeohBounds::default(), &TrfOptions::default())
}

/// Least-squares fit of nominal stress residuals.
pub fn fit_yeoh_with(
    samples: &[StressStrainSample],
    initial_guess: YeohModel,
    bounds: YeohBounds,
    opts: &TrfOptions,
) -> Result<YeohFit> {
    if samples.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: samples.len(),
        });
    }
    validate_samples(samples)?;

    let residual = |p: &[f64]| {
        let m = YeohModel {
            c1: p[0],
            c2: p[1],
            c3: p[2],
        };
        samples
            .iter()
            .map(|s| m.stress(s.stretch) - s.nominal_stress)
            .collect::<Vec<_>>()
    };
    let all_zero = samples.iter().all(|s| s.nominal_stress == 0.0);
    let mut start = if all_zero {
        [0.0; 3]
    } else {
        [initial_guess.c1, initial_guess.c2, initial_guess.c3]
    };
    for i in 0..3 {
        start[i] = start[i].clamp(bounds.lower[i], bounds.upper[i]);
    }
    let problem =
        LeastSquaresProblem::new(residual, start.to_vec()).with_bounds(bounds.lower.to_vec(), bounds.upper.to_vec());
    let fit = trf_least_squares(&problem, opts)?;
    let p = &fit.parameters;
    let model = YeohModel {
        c1: p[0],
        c2: p[1],
        c3: p[2],
    };
    let degenerate = all_zero || fit.active[0] == crate::optimize::ActiveBound::Lower;
    Ok(YeohFit { model, fit, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    const A30: MaterialModel = MaterialModel::Yeoh(YeohModel::SHORE_A30);

    /// Closed form written out from the Cauchy stress, independent of the
    /// production factorisation.
    fn yeoh_reference(m: &YeohModel, l: f64) -> f64 {
        let i1 = l.powi(2) + 2.0 * l.powi(-1);
        let cauchy =
            2.0 * (l.powi(2) - l.powi(-1)) * (m.c1 + 2.0 * m.c2 * (i1 - 3.0) + 3.0 * m.c3 * (i1 - 3.0).powi(2));
        cauchy / l
    }

    #[test]
    fn reference_configuration_is_stress_free() {
        assert_eq!(A30.nominal_stress(1.0).unwrap(), 0.0);
        let lin = MaterialModel::Linear(LinearElasticModel::SHORE_A85);
        assert_eq!(lin.nominal_stress(1.0).unwrap(), 0.0);
    }

    #[test]
    fn yeoh_at_one_and_a_half() {
        // 40-digit evaluation of the Cauchy form divided by stretch.
        const EXPECTED: f64 = 0.038_941_203_703_703_7;
        let p = A30.nominal_stress(1.5).unwrap();
        assert!((p - EXPECTED).abs() < 1e-15, "{p}");
        assert!((p - yeoh_reference(&YeohModel::SHORE_A30, 1.5)).abs() < 1e-15);
    }

    #[test]
    fn linear_stress_and_tangent() {
        let lin = MaterialModel::Linear(LinearElasticModel::SHORE_A85);
        assert!((lin.nominal_stress(1.1).unwrap() - 0.734).abs() < 1e-12);
        for l in [1.0, 1.3, 2.0] {
            assert_eq!(lin.tangent_stiffness(l).unwrap(), 7.34);
        }
    }

    #[test]
    fn tangent_matches_central_differences() {
        let h = 1e-6;
        let l = 1.5;
        let fd = (A30.nominal_stress(l + h).unwrap() - A30.nominal_stress(l - h).unwrap()) / (2.0 * h);
        let t = A30.tangent_stiffness(l).unwrap();
        assert!(((t - fd) / fd).abs() < 1e-6);
    }

    #[test]
    fn small_strain_modulus_is_six_c1() {
        let t = A30.tangent_stiffness(1.0).unwrap();
        assert!((t - 0.072).abs() < 1e-15);
        let h = 1e-8;
        let fd = A30.nominal_stress(1.0 + h).unwrap() / h;
        assert!((fd - 0.072).abs() < 1e-6);
    }

    #[test]
    fn compression_and_rigid_rejected() {
        assert!(matches!(A30.nominal_stress(0.99), Err(Error::Domain(_))));
        assert!(matches!(A30.tangent_stiffness(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(
            MaterialModel::Rigid.nominal_stress(1.2),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            MaterialModel::Rigid.tangent_stiffness(1.2),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn yeoh_monotone_on_unit_interval() {
        let mut prev = A30.nominal_stress(1.0).unwrap();
        for i in 1..=1000 {
            let l = 1.0 + i as f64 / 1000.0;
            let p = A30.nominal_stress(l).unwrap();
            assert!(p > prev, "not increasing at {l}");
            prev = p;
        }
    }

    #[test]
    fn energy_derivative_is_stress() {
        let h = 1e-6;
        for l in [1.05, 1.4, 1.9] {
            for m in [A30, MaterialModel::Linear(LinearElasticModel::SHORE_A85)] {
                let fd =
                    (m.strain_energy_density(l + h).unwrap() - m.strain_energy_density(l - h).unwrap()) / (2.0 * h);
                let p = m.nominal_stress(l).unwrap();
                assert!(((fd - p) / p).abs() < 1e-6);
            }
        }
    }

    fn synthetic(model: &MaterialModel, stretches: impl Iterator<Item = f64>) -> Vec<StressStrainSample> {
        stretches
            .map(|l| StressStrainSample {
                stretch: l,
                nominal_stress: model.nominal_stress(l).unwrap(),
            })
            .collect()
    }

    #[test]
    fn yeoh_round_trip() {
        let samples = synthetic(&A30, (1..=20).map(|i| 1.0 + 0.05 * i as f64));
        let fit = fit_yeoh(&samples, YeohModel::new(0.01, 0.0, 0.0).unwrap()).unwrap();
        let got = fit.model;
        let want = YeohModel::SHORE_A30;
        assert!(((got.c1 - want.c1) / want.c1).abs() < 1e-4, "{got:?}");
        assert!(((got.c2 - want.c2) / want.c2).abs() < 1e-4, "{got:?}");
        assert!(((got.c3 - want.c3) / want.c3).abs() < 1e-4, "{got:?}");
        assert!(!fit.degenerate);
    }

    #[test]
    fn small_strain_fit_matches_linear_modulus() {
        let lin = MaterialModel::Linear(LinearElasticModel::SHORE_A85);
        let samples = synthetic(&lin, (1..=10).map(|i| 1.0 + 0.001 * i as f64));
        let fit = fit_yeoh(&samples, YeohModel::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        let e = 6.0 * fit.model.c1;
        assert!(((e - 7.34) / 7.34).abs() < 0.02, "6 c1 = {e}");
    }

    #[test]
    fn zero_stress_is_degenerate() {
        let samples: Vec<_> = (1..=6)
            .map(|i| StressStrainSample {
                stretch: 1.0 + 0.1 * i as f64,
                nominal_stress: 0.0,
            })
            .collect();
        let fit = fit_yeoh(&samples, YeohModel::new(0.01, 0.0, 0.0).unwrap()).unwrap();
        assert!(fit.degenerate);
        assert!(fit.model.c1 >= 0.0 && fit.model.c1 < 1e-6, "{:?}", fit.model);
    }

    #[test]
    fn too_few_samples() {
        let samples = synthetic(&A30, [1.1, 1.2, 1.3].into_iter());
        assert!(matches!(
            fit_yeoh(&samples, YeohModel::SHORE_A30),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn dogbone_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dogbone.csv");
        std::fs::write(&path, "# synthetic\nstretch,nominal_stress_mpa\n1.0,0.0\n1.5,0.0389\n").unwrap();
        let s = read_dogbone_csv(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].nominal_stress, 0.0389);

        std::fs::write(&path, "lambda,p\n1.0,0.0\n").unwrap();
        assert!(matches!(read_dogbone_csv(&path), Err(Error::Parse { .. })));
    }
}
