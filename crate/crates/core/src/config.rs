//! Flat `key = value` run configuration. Every key is optional; see
//! `docs/config.md` for the schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{CalibrationOptions, ContactLaw, DropConfig, SlipConfig, SlipParams, SweepOptions};
use crate::materials::{LinearElasticModel, MaterialModel, YeohModel};
use crate::optimize::{CubicFit, TrfOptions};
use crate::solver::{LoadCase, SolverOptions};
use crate::tendon::{BundleParams, FrictionTable, TendonSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,

    pub fibre_count: usize,
    pub pitch_mm: f64,
    pub fibre_diameter_mm: f64,
    pub soft_length_mm: f64,
    pub stiff_length_mm: f64,
    pub soft_yeoh_mpa: [f64; 3],
    pub stiff_modulus_mpa: f64,
    pub membrane_stiffness_n_per_mm: f64,
    pub elements_per_fibre: usize,

    pub mu_a30_a30: f64,
    pub mu_a30_a85: f64,
    pub mu_a85_a85: f64,

    pub max_displacement_mm: f64,
    pub displacement_rate_mm_s: f64,
    pub n_steps: usize,
    pub pressure_kpa: f64,
    pub pressures_kpa: Vec<f64>,
    pub repeats: usize,
    pub noise_sigma_n: f64,

    pub newton_tolerance: f64,
    pub max_newton_iterations: usize,
    pub stick_stiffness_n_per_mm: f64,
    pub contact_strip_width_mm: f64,
    pub max_step_cuts: usize,
    /// Zero means use `FIBREJAM_THREADS` or all cores.
    pub threads: usize,

    /// `synthetic` (targets from the forward model at `planted_mu`) or
    /// `reference` (bundled mean peak forces).
    pub calibration_mode: String,
    pub calibration_pressures_kpa: Vec<f64>,
    pub held_out_pressures_kpa: Vec<f64>,
    pub planted_mu: [f64; 3],
    pub initial_mu: [f64; 3],
    pub mu_lower: [f64; 3],
    pub mu_upper: [f64; 3],
    pub fit_friction: bool,
    pub fit_contact_width: bool,
    pub fit_membrane: bool,
    pub contact_width_bounds_mm: [f64; 2],
    pub membrane_bounds_n_per_mm: [f64; 2],
    pub max_iterations: usize,
    pub diff_step: f64,

    pub platform_mass_kg: f64,
    pub drop_height_mm: f64,
    pub gravity_m_s2: f64,
    pub time_step_s: f64,
    pub duration_s: f64,
    pub output_interval_s: f64,
    pub saturate: bool,
    pub sensor_saturation_m_s2: f64,
    pub energy_tolerance: f64,
    /// `linear` or `tendon`.
    pub contact_law: String,
    pub contact_stiffness_n_per_mm: f64,
    pub contact_damping_n_s_per_mm: f64,
    /// Cubic coefficients of one tendon's force (N) against extension (mm).
    pub tendon_cubic: [f64; 4],
    pub tendon_curve_range_mm: f64,
    pub tendon_count: usize,
    pub lever_ratio: f64,

    /// Dogbone CSV for `fit-material`, relative to the config file. Empty
    /// means synthetic samples from `soft_yeoh_mpa`.
    pub material_data: String,
    /// Gaussian noise added to synthetic dogbone samples.
    pub stress_noise_mpa: f64,

    pub slope_angle_deg: f64,
    pub descent_rate_mm_s: f64,
    pub travel_mm: f64,
    pub slip_time_step_s: f64,
    pub foot_stiffness_n_per_mm: f64,
    pub mu_static: f64,
    pub mu_kinetic: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let bundle = BundleParams::default();
        let load = LoadCase::default();
        let solver = SolverOptions::default();
        let drop = DropConfig::default();
        let slip = SlipConfig::default();
        let cal = CalibrationOptions::default();
        let y = YeohModel::SHORE_A30;
        Self {
            seed: 0,
            fibre_count: bundle.fibre_count,
            pitch_mm: bundle.pitch,
            fibre_diameter_mm: bundle.diameter,
            soft_length_mm: bundle.soft_length,
            stiff_length_mm: bundle.stiff_length,
            soft_yeoh_mpa: [y.c1, y.c2, y.c3],
            stiff_modulus_mpa: LinearElasticModel::SHORE_A85.e_modulus,
            membrane_stiffness_n_per_mm: 0.0,
            elements_per_fibre: 17,
            mu_a30_a30: FrictionTable::CALIBRATED.mu_a30_a30,
            mu_a30_a85: FrictionTable::CALIBRATED.mu_a30_a85,
            mu_a85_a85: FrictionTable::CALIBRATED.mu_a85_a85,
            max_displacement_mm: load.max_displacement,
            displacement_rate_mm_s: load.displacement_rate,
            n_steps: load.n_steps,
            pressure_kpa: load.vacuum_pressure,
            pressures_kpa: vec![0.0, -10.0, -30.0, -50.0],
            repeats: 1,
            noise_sigma_n: 0.0,
            newton_tolerance: solver.newton_tolerance,
            max_newton_iterations: solver.max_newton_iterations,
            stick_stiffness_n_per_mm: solver.stick_stiffness,
            contact_strip_width_mm: solver.contact_strip_width,
            max_step_cuts: solver.max_step_cuts,
            threads: 0,
            calibration_mode: "synthetic".into(),
            calibration_pressures_kpa: vec![-10.0, -30.0, -50.0],
            held_out_pressures_kpa: Vec::new(),
            planted_mu: FrictionTable::CALIBRATED.as_array(),
            initial_mu: cal.friction.as_array(),
            mu_lower: cal.mu_lower,
            mu_upper: cal.mu_upper,
            fit_friction: true,
            fit_contact_width: false,
            fit_membrane: false,
            contact_width_bounds_mm: [cal.width_bounds.0, cal.width_bounds.1],
            membrane_bounds_n_per_mm: [cal.membrane_bounds.0, cal.membrane_bounds.1],
            max_iterations: cal.trf.max_iterations,
            diff_step: cal.trf.diff_step,
            platform_mass_kg: drop.platform_mass,
            drop_height_mm: drop.drop_height,
            gravity_m_s2: drop.gravity,
            time_step_s: drop.time_step,
            duration_s: drop.duration,
            output_interval_s: drop.output_interval,
            saturate: true,
            sensor_saturation_m_s2: 71.04,
            energy_tolerance: drop.energy_tolerance,
            contact_law: "linear".into(),
            contact_stiffness_n_per_mm: 10.0,
            contact_damping_n_s_per_mm: 0.0,
            tendon_cubic: [0.0; 4],
            tendon_curve_range_mm: 20.0,
            tendon_count: 4,
            lever_ratio: 1.0,
            material_data: String::new(),
            stress_noise_mpa: 0.0,
            slope_angle_deg: slip.slope_angle,
            descent_rate_mm_s: slip.descent_rate,
            travel_mm: slip.travel,
            slip_time_step_s: slip.time_step,
            foot_stiffness_n_per_mm: slip.params.stiffness,
            mu_static: slip.params.mu_static,
            mu_kinetic: slip.params.mu_kinetic,
        }
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "configuration".into(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                what: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// Canonical text form, used for manifests.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("settings are plain scalars and arrays")
    }

    pub fn tendon_spec(&self) -> Result<TendonSpec> {
        let [c1, c2, c3] = self.soft_yeoh_mpa;
        BundleParams {
            fibre_count: self.fibre_count,
            pitch: self.pitch_mm,
            diameter: self.fibre_diameter_mm,
            soft_length: self.soft_length_mm,
            stiff_length: self.stiff_length_mm,
            soft_material: MaterialModel::Yeoh(YeohModel::new(c1, c2, c3)?),
            stiff_material: MaterialModel::Linear(LinearElasticModel::new(self.stiff_modulus_mpa)?),
            membrane_stiffness: self.membrane_stiffness_n_per_mm,
        }
        .build()
    }

    pub fn friction(&self) -> Result<FrictionTable> {
        FrictionTable::new(self.mu_a30_a30, self.mu_a30_a85, self.mu_a85_a85)
    }

    pub fn load_case(&self) -> LoadCase {
        LoadCase {
            max_displacement: self.max_displacement_mm,
            displacement_rate: self.displacement_rate_mm_s,
            n_steps: self.n_steps,
            vacuum_pressure: self.pressure_kpa,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            newton_tolerance: self.newton_tolerance,
            max_newton_iterations: self.max_newton_iterations,
            stick_stiffness: self.stick_stiffness_n_per_mm,
            contact_strip_width: self.contact_strip_width_mm,
            max_step_cuts: self.max_step_cuts,
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            elements_per_fibre: self.elements_per_fibre,
            load: self.load_case(),
            solver: self.solver_options(),
            threads: (self.threads > 0).then_some(self.threads),
        }
    }

    pub fn calibration_options(&self) -> CalibrationOptions {
        CalibrationOptions {
            fit_friction: self.fit_friction,
            fit_contact_width: self.fit_contact_width,
            fit_membrane: self.fit_membrane,
            friction: if self.fit_friction {
                FrictionTable::from_array(self.initial_mu)
            } else {
                FrictionTable::from_array([self.mu_a30_a30, self.mu_a30_a85, self.mu_a85_a85])
            },
            mu_lower: self.mu_lower,
            mu_upper: self.mu_upper,
            width_bounds: (self.contact_width_bounds_mm[0], self.contact_width_bounds_mm[1]),
            membrane_bounds: (self.membrane_bounds_n_per_mm[0], self.membrane_bounds_n_per_mm[1]),
            held_out: Vec::new(),
            penalty: CalibrationOptions::default().penalty,
            sweep: self.sweep_options(),
            trf: TrfOptions {
                max_iterations: self.max_iterations,
                diff_step: self.diff_step,
                ..TrfOptions::default()
            },
        }
    }

    pub fn contact(&self) -> Result<ContactLaw> {
        let law = match self.contact_law.as_str() {
            "linear" => ContactLaw::Linear {
                stiffness: self.contact_stiffness_n_per_mm,
                damping: self.contact_damping_n_s_per_mm,
            },
            "tendon" => ContactLaw::Tendon {
                curve: CubicFit::new(self.tendon_cubic),
                curve_range: self.tendon_curve_range_mm,
                tendons: self.tendon_count,
                lever: self.lever_ratio,
                damping: self.contact_damping_n_s_per_mm,
            },
            other => {
                return Err(Error::Configuration(format!(
                    "contact_law must be `linear` or `tendon`, got `{other}`"
                )))
            }
        };
        law.validate()?;
        Ok(law)
    }

    pub fn drop_config(&self) -> Result<DropConfig> {
        let cfg = DropConfig {
            platform_mass: self.platform_mass_kg,
            drop_height: self.drop_height_mm,
            contact: self.contact()?,
            gravity: self.gravity_m_s2,
            time_step: self.time_step_s,
            duration: self.duration_s,
            output_interval: self.output_interval_s,
            sensor_saturation: self.saturate.then_some(self.sensor_saturation_m_s2),
            energy_tolerance: self.energy_tolerance,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn slip_config(&self) -> Result<SlipConfig> {
        let cfg = SlipConfig {
            slope_angle: self.slope_angle_deg,
            descent_rate: self.descent_rate_mm_s,
            travel: self.travel_mm,
            time_step: self.slip_time_step_s,
            params: SlipParams {
                stiffness: self.foot_stiffness_n_per_mm,
                mu_static: self.mu_static,
                mu_kinetic: self.mu_kinetic,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let s = Settings::parse("").unwrap();
        assert_eq!(s, Settings::default());
        assert_eq!(s.tendon_spec().unwrap(), crate::tendon::default_tendon_spec());
        assert_eq!(s.friction().unwrap(), FrictionTable::CALIBRATED);
        assert_eq!(s.load_case(), LoadCase::default());
        assert_eq!(s.solver_options(), SolverOptions::default());
    }

    #[test]
    fn unknown_keys_and_tables_rejected() {
        assert!(Settings::parse("bogus = 1").is_err());
        assert!(Settings::parse("[section]\nseed = 1").is_err());
        assert!(Settings::parse("seed = \"x\"").is_err());
    }

    #[test]
    fn text_round_trip() {
        let s = Settings {
            pressures_kpa: vec![-10.0, -30.0],
            contact_law: "tendon".into(),
            ..Settings::default()
        };
        assert_eq!(Settings::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn bad_contact_law() {
        let s = Settings::parse("contact_law = \"spring\"").unwrap();
        assert!(matches!(s.drop_config(), Err(Error::Configuration(_))));
    }
}
