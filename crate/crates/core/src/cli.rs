//! Command-line front end.
//!
//! Exit codes: 0 success, 1 solver or optimizer failure, 2 usage or
//! configuration error, 3 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{ArgAction, Args, Parser, Subcommand as ClapSubcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::Settings;
use crate::error::{Error, Result};
use crate::experiments::{
    calibrate_friction, noisy_repeat_peaks, run_pressure_sweep, simulate_drop, simulate_slip, summarize,
    synthetic_curve_target, CalibrationTarget, ReferenceDataset,
};
use crate::materials::{fit_yeoh, read_dogbone_csv, MaterialModel, StressStrainSample, YeohModel};
use crate::plot::{curves_svg, render_svg, Series};
use crate::solver::{peak_force, solve_tensile_run, strain_profile, LoadCase};
use crate::tendon::{contact_graph, mesh, FrictionTable, PairingClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Tensile,
    Sweep,
    Calibrate,
    Drop,
    Slip,
    FitMaterial,
    MeshInfo,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Tensile => "tensile",
            Subcommand::Sweep => "sweep",
            Subcommand::Calibrate => "calibrate",
            Subcommand::Drop => "drop",
            Subcommand::Slip => "slip",
            Subcommand::FitMaterial => "fit-material",
            Subcommand::MeshInfo => "mesh-info",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub svg: bool,
    pub pressures: Option<Vec<f64>>,
    pub verbose: u8,
}

/// Help, version or a usage error, with the exit code to use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageExit {
    pub code: i32,
    pub message: String,
}

#[derive(Parser, Debug)]
#[command(
    name = "fibrejam",
    version,
    about = "Simulate, calibrate and test multi-material fibre-jamming tendons",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for synthetic noise; overrides the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
    /// Vacuum pressures in kPa, comma separated (e.g. -10,-30,-50).
    #[arg(long, value_name = "KPA,...", value_delimiter = ',', allow_hyphen_values = true)]
    pressure: Option<Vec<f64>>,
    /// More log output on stderr; repeat for debug detail.
    #[arg(long, short, action = ArgAction::Count)]
    verbose: u8,
}

#[derive(Args, Debug)]
struct Output {
    #[command(flatten)]
    common: Common,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OptionalOutput {
    #[command(flatten)]
    common: Common,
    /// Also write the interface table here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(ClapSubcommand, Debug)]
enum Command {
    /// One tensile ramp at a single pressure.
    Tensile(Output),
    /// Tensile ramps over several pressures.
    Sweep(Output),
    /// Fit friction (and optionally contact width, membrane) to targets.
    Calibrate(Output),
    /// Drop a loaded platform onto a foot structure.
    Drop(Output),
    /// Drive a foot down onto an inclined slope.
    Slip(Output),
    /// Fit Yeoh coefficients to dogbone stress-stretch data.
    FitMaterial(Output),
    /// Summarise the meshed tendon.
    MeshInfo(OptionalOutput),
}

/// Parses arguments without the program name.
pub fn parse_args<I, T>(args: I) -> std::result::Result<RunConfig, UsageExit>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("fibrejam")).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        let code = match e.kind() {
            ErrorKind::DisplayHelp
            | ErrorKind::DisplayVersion
            | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
            _ => 2,
        };
        UsageExit {
            code,
            message: e.render().to_string(),
        }
    })?;
    let (subcommand, common, out) = match cli.command {
        Command::Tensile(o) => (Subcommand::Tensile, o.common, Some(o.out)),
        Command::Sweep(o) => (Subcommand::Sweep, o.common, Some(o.out)),
        Command::Calibrate(o) => (Subcommand::Calibrate, o.common, Some(o.out)),
        Command::Drop(o) => (Subcommand::Drop, o.common, Some(o.out)),
        Command::Slip(o) => (Subcommand::Slip, o.common, Some(o.out)),
        Command::FitMaterial(o) => (Subcommand::FitMaterial, o.common, Some(o.out)),
        Command::MeshInfo(o) => (Subcommand::MeshInfo, o.common, o.out),
    };
    Ok(RunConfig {
        subcommand,
        config: common.config,
        out,
        seed: common.seed,
        svg: common.svg,
        pressures: common.pressure,
        verbose: common.verbose,
    })
}

pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Io { .. } => 3,
        Error::Parse { .. } | Error::Configuration(_) => 2,
        _ => 1,
    }
}

/// Entry point used by the binary: parse, run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_args(args) {
        Ok(cfg) => {
            let level = match cfg.verbose {
                0 => log::LevelFilter::Warn,
                1 => log::LevelFilter::Info,
                _ => log::LevelFilter::Debug,
            };
            let _ = env_logger::Builder::new().filter_level(level).try_init();
            run(&cfg)
        }
        Err(u) => {
            if u.code == 0 {
                print!("{}", u.message);
            } else {
                eprint!("{}", u.message);
            }
            u.code
        }
    }
}

pub fn run(cfg: &RunConfig) -> i32 {
    match execute(cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    status: &'a str,
    command: &'a str,
    version: &'a str,
    seed: u64,
    outputs: &'a [String],
    config: &'a Settings,
}

fn write_manifest(out: &Path, status: &str, cfg: &RunConfig, settings: &Settings, outputs: &[String]) -> Result<()> {
    let m = Manifest {
        status,
        command: cfg.subcommand.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: settings.seed,
        outputs,
        config: settings,
    };
    let text = toml::to_string(&m).expect("manifest is plain data");
    let path = out.join("manifest.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Outputs<'_> {
    fn write(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf).expect("writing to a Vec cannot fail");
        let path = self.dir.join(name);
        std::fs::write(&path, buf).map_err(|e| Error::io(path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write(name, |w| w.write_all(text.as_bytes()))
    }
}

fn execute(cfg: &RunConfig) -> Result<()> {
    let (mut settings, base_dir) = match &cfg.config {
        Some(p) => (
            Settings::load(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (Settings::default(), PathBuf::new()),
    };
    if let Some(seed) = cfg.seed {
        settings.seed = seed;
    }
    let Some(dir) = cfg.out.as_deref() else {
        return mesh_info(&settings, None);
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_manifest(dir, "failed", cfg, &settings, &[])?;
    let mut out = Outputs {
        dir,
        written: Vec::new(),
    };
    match cfg.subcommand {
        Subcommand::Tensile => tensile(cfg, &settings, &mut out)?,
        Subcommand::Sweep => sweep(cfg, &settings, &mut out)?,
        Subcommand::Calibrate => calibrate(cfg, &settings, &mut out)?,
        Subcommand::Drop => drop_test(cfg, &settings, &mut out)?,
        Subcommand::Slip => slip_test(cfg, &settings, &mut out)?,
        Subcommand::FitMaterial => fit_material(cfg, &settings, &base_dir, &mut out)?,
        Subcommand::MeshInfo => mesh_info(&settings, Some(&mut out))?,
    }
    write_manifest(dir, "ok", cfg, &settings, &out.written)
}

/// File-name fragment for a pressure: `-10` or `-12p5`.
pub fn pressure_tag(p: f64) -> String {
    if p == p.trunc() && p.abs() < 1e15 {
        format!("{}", p as i64)
    } else {
        format!("{p}").replace('.', "p")
    }
}

fn tensile(cfg: &RunConfig, settings: &Settings, out: &mut Outputs) -> Result<()> {
    let spec = settings.tendon_spec()?;
    let m = mesh(&spec, settings.elements_per_fibre)?;
    let pressure = cfg
        .pressures
        .as_ref()
        .and_then(|p| p.first().copied())
        .unwrap_or(settings.pressure_kpa);
    let load = LoadCase {
        vacuum_pressure: pressure,
        ..settings.load_case()
    };
    log::info!("tensile ramp to {} mm at {pressure} kPa", load.max_displacement);
    let run = solve_tensile_run(&m, &settings.friction()?, &load, &settings.solver_options())?;
    out.write("curve.csv", |w| run.curve.write_csv(w))?;

    let stretches = strain_profile(&run.state, &m)?;
    out.write("strain_profile.csv", |w| {
        writeln!(w, "element,fibre,grade,x_start_mm,x_end_mm,stretch")?;
        for (i, (e, l)) in m.elements.iter().zip(&stretches).enumerate() {
            writeln!(
                w,
                "{i},{},{},{:?},{:?},{l:?}",
                e.fibre, e.grade, m.nodes[e.nodes.0].coord, m.nodes[e.nodes.1].coord
            )?;
        }
        Ok(())
    })?;

    let peak = peak_force(&run.curve)?;
    let peaks = noisy_repeat_peaks(&run.curve, settings.repeats, settings.noise_sigma_n, settings.seed)?;
    let s = summarize(&peaks)?;
    out.write("summary.csv", |w| {
        writeln!(
            w,
            "pressure_kpa,peak_force_n,max_peak_n,mean_peak_n,std_err_n,repeats,single_repeat,external_work_nmm,stored_energy_nmm,dissipated_energy_nmm"
        )?;
        writeln!(
            w,
            "{pressure:?},{peak:?},{:?},{:?},{:?},{},{},{:?},{:?},{:?}",
            s.max,
            s.mean,
            s.std_err,
            s.n,
            s.single_repeat,
            run.curve.external_work(),
            run.stored_energy,
            run.dissipated_energy
        )
    })?;
    if cfg.svg {
        out.text("curve.svg", &curves_svg(std::slice::from_ref(&run.curve))?)?;
    }
    Ok(())
}

fn sweep(cfg: &RunConfig, settings: &Settings, out: &mut Outputs) -> Result<()> {
    let pressures = cfg.pressures.clone().unwrap_or_else(|| settings.pressures_kpa.clone());
    if pressures.is_empty() {
        return Err(Error::Configuration("no pressures to sweep".into()));
    }
    let spec = settings.tendon_spec()?;
    log::info!("sweeping {} pressures", pressures.len());
    let curves = run_pressure_sweep(&spec, &settings.friction()?, &pressures, &settings.sweep_options())?;
    for c in &curves {
        out.write(&format!("curve_{}kpa.csv", pressure_tag(c.pressure_kpa)), |w| {
            c.write_csv(w)
        })?;
    }
    let mut rows = Vec::with_capacity(curves.len());
    for (i, c) in curves.iter().enumerate() {
        let peaks = noisy_repeat_peaks(
            c,
            settings.repeats,
            settings.noise_sigma_n,
            settings.seed.wrapping_add(i as u64),
        )?;
        rows.push((c.pressure_kpa, peak_force(c)?, summarize(&peaks)?));
    }
    out.write("peaks.csv", |w| {
        writeln!(w, "pressure_kpa,peak_force_n,max_peak_n,mean_peak_n,std_err_n,repeats")?;
        for (p, peak, s) in &rows {
            writeln!(w, "{p:?},{peak:?},{:?},{:?},{:?},{}", s.max, s.mean, s.std_err, s.n)?;
        }
        Ok(())
    })?;
    if cfg.svg {
        out.text("sweep.svg", &curves_svg(&curves)?)?;
    }
    Ok(())
}

fn calibrate(cfg: &RunConfig, settings: &Settings, out: &mut Outputs) -> Result<()> {
    let spec = settings.tendon_spec()?;
    let dataset = ReferenceDataset::bundled()?;
    let mut opts = settings.calibration_options();
    let pressures = cfg
        .pressures
        .clone()
        .unwrap_or_else(|| settings.calibration_pressures_kpa.clone());
    let targets = match settings.calibration_mode.as_str() {
        "synthetic" => {
            let planted = FrictionTable::new(settings.planted_mu[0], settings.planted_mu[1], settings.planted_mu[2])?;
            pressures
                .iter()
                .map(|p| synthetic_curve_target(&spec, &planted, *p, &opts.sweep))
                .collect::<Result<Vec<_>>>()?
        }
        "reference" => pressures
            .iter()
            .map(|p| {
                let row = dataset
                    .multimaterial_row(*p)
                    .ok_or_else(|| Error::Configuration(format!("no reference measurement at {p} kPa")))?;
                Ok(CalibrationTarget::Peak {
                    pressure_kpa: *p,
                    force: row.mean_peak_force,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        other => {
            return Err(Error::Configuration(format!(
                "calibration_mode must be `synthetic` or `reference`, got `{other}`"
            )))
        }
    };
    opts.held_out = settings
        .held_out_pressures_kpa
        .iter()
        .map(|p| (*p, dataset.multimaterial_row(*p).map(|r| r.mean_peak_force)))
        .collect();
    log::info!("calibrating against {} targets", targets.len());
    let report = calibrate_friction(&spec, &targets, &opts)?;
    out.write("calibration.csv", |w| report.write_csv(w))?;
    out.write("predictions.csv", |w| report.write_predictions_csv(w))?;
    out.write("calibration_history.csv", |w| report.fit.write_history_csv(w))?;
    if cfg.svg {
        let series = vec![Series {
            label: "cost".into(),
            points: report
                .fit
                .history
                .iter()
                .map(|h| (h.iteration as f64, h.cost.max(1e-300).log10()))
                .collect(),
        }];
        out.text("calibration.svg", &render_svg(&series, "Iteration", "log10 cost")?)?;
    }
    Ok(())
}

fn drop_test(cfg: &RunConfig, settings: &Settings, out: &mut Outputs) -> Result<()> {
    let r = simulate_drop(&settings.drop_config()?)?;
    out.write("drop_trace.csv", |w| r.write_csv(w))?;
    out.write("drop_summary.csv", |w| {
        writeln!(
            w,
            "max_deceleration_m_s2,raw_max_deceleration_m_s2,saturated,bounces,energy_drift"
        )?;
        writeln!(
            w,
            "{:?},{:?},{},{},{:?}",
            r.max_deceleration, r.raw_max_deceleration, r.saturated, r.bounces, r.energy_drift
        )
    })?;
    if cfg.svg {
        let series = vec![Series {
            label: "acceleration".into(),
            points: r.samples.iter().map(|s| (s.time, s.acceleration)).collect(),
        }];
        out.text("drop.svg", &render_svg(&series, "Time (s)", "Acceleration (m/s^2)")?)?;
    }
    Ok(())
}

fn slip_test(cfg: &RunConfig, settings: &Settings, out: &mut Outputs) -> Result<()> {
    let r = simulate_slip(&settings.slip_config()?)?;
    out.write("slip_trace.csv", |w| r.write_csv(w))?;
    let max = |f: fn(&crate::experiments::SlipSample) -> f64| r.samples.iter().map(f).fold(0.0, f64::max);
    out.write("slip_summary.csv", |w| {
        writeln!(
            w,
            "dissipated_energy_j,total_slip_mm,slip_events,max_normal_force_n,max_tangential_force_n"
        )?;
        writeln!(
            w,
            "{:?},{:?},{},{:?},{:?}",
            r.dissipated_energy,
            r.total_slip(),
            r.slip_events,
            max(|s| s.normal_force),
            max(|s| s.tangential_force)
        )
    })?;
    if cfg.svg {
        let series = vec![
            Series {
                label: "normal".into(),
                points: r.samples.iter().map(|s| (s.time, s.normal_force)).collect(),
            },
            Series {
                label: "tangential".into(),
                points: r.samples.iter().map(|s| (s.time, s.tangential_force)).collect(),
            },
        ];
        out.text("slip.svg", &render_svg(&series, "Time (s)", "Force (N)")?)?;
    }
    Ok(())
}

fn fit_material(cfg: &RunConfig, settings: &Settings, base_dir: &Path, out: &mut Outputs) -> Result<()> {
    let truth = {
        let [c1, c2, c3] = settings.soft_yeoh_mpa;
        YeohModel::new(c1, c2, c3)?
    };
    let samples = if settings.material_data.is_empty() {
        let noise = Normal::new(0.0, settings.stress_noise_mpa)
            .map_err(|e| Error::Configuration(format!("stress_noise_mpa: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let model = MaterialModel::Yeoh(truth);
        (0..=20)
            .map(|i| {
                let stretch = 1.0 + 0.05 * i as f64;
                Ok(StressStrainSample {
                    stretch,
                    nominal_stress: model.nominal_stress(stretch)? + noise.sample(&mut rng),
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        read_dogbone_csv(&base_dir.join(&settings.material_data))?
    };
    let fit = fit_yeoh(&samples, YeohModel::new(1e-2, 0.0, 0.0)?)?;
    let m = fit.model;
    out.write("yeoh_fit.csv", |w| {
        writeln!(
            w,
            "c1_mpa,c2_mpa,c3_mpa,initial_modulus_mpa,residual_norm,iterations,status,degenerate"
        )?;
        writeln!(
            w,
            "{:?},{:?},{:?},{:?},{:?},{},{},{}",
            m.c1,
            m.c2,
            m.c3,
            6.0 * m.c1,
            fit.fit.residual_norm,
            fit.fit.iterations,
            fit.fit.status.as_str(),
            fit.degenerate
        )
    })?;
    let fitted = MaterialModel::Yeoh(m);
    out.write("samples.csv", |w| {
        writeln!(w, "stretch,nominal_stress_mpa,fitted_stress_mpa")?;
        for s in &samples {
            writeln!(
                w,
                "{:?},{:?},{:?}",
                s.stretch,
                s.nominal_stress,
                fitted.nominal_stress(s.stretch).unwrap_or(f64::NAN)
            )?;
        }
        Ok(())
    })?;
    out.write("fit_history.csv", |w| fit.fit.write_history_csv(w))?;
    if cfg.svg {
        let series = vec![
            Series {
                label: "data".into(),
                points: samples.iter().map(|s| (s.stretch, s.nominal_stress)).collect(),
            },
            Series {
                label: "Yeoh fit".into(),
                points: samples
                    .iter()
                    .map(|s| (s.stretch, fitted.nominal_stress(s.stretch).unwrap_or(0.0)))
                    .collect(),
            },
        ];
        out.text("fit.svg", &render_svg(&series, "Stretch", "Nominal stress (MPa)")?)?;
    }
    Ok(())
}

fn mesh_info(settings: &Settings, out: Option<&mut Outputs>) -> Result<()> {
    let spec = settings.tendon_spec()?;
    let m = mesh(&spec, settings.elements_per_fibre)?;
    let pairs = contact_graph(&spec)?;
    let count = |c: PairingClass| m.interfaces.iter().filter(|i| i.class == c).count();
    let mut summary = String::new();
    let mut line = |k: &str, v: String| summary.push_str(&format!("{k} = {v}\n"));
    line("spec_hash", format!("\"{}\"", m.spec_hash));
    line("fibres", m.fibre_count().to_string());
    line(
        "mirrored_fibres",
        spec.fibres.iter().filter(|f| f.mirrored).count().to_string(),
    );
    line("fibre_length_mm", format!("{:?}", m.fibre_length));
    line("nodes", m.nodes.len().to_string());
    line("elements", m.elements.len().to_string());
    line("contact_pairs", pairs.len().to_string());
    line("interfaces", m.interfaces.len().to_string());
    for c in [PairingClass::A30A30, PairingClass::A30A85, PairingClass::A85A85] {
        line(
            &format!("interfaces_{}", c.label().replace('-', "_").to_lowercase()),
            count(c).to_string(),
        );
    }
    print!("{summary}");
    if let Some(out) = out {
        out.text("mesh_info.toml", &summary)?;
        out.write("interfaces.csv", |w| {
            writeln!(w, "fibre_i,fibre_j,element_i,element_j,station_mm,overlap_mm,class")?;
            for i in &m.interfaces {
                writeln!(
                    w,
                    "{},{},{},{},{:?},{:?},{}",
                    i.fibres.0,
                    i.fibres.1,
                    i.elements.0,
                    i.elements.1,
                    i.station,
                    i.overlap_length,
                    i.class.label()
                )?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tensile_example() {
        let c = parse_args(["tensile", "--config", "t.cfg", "--out", "res/"]).unwrap();
        assert_eq!(c.subcommand, Subcommand::Tensile);
        assert_eq!(c.config, Some(PathBuf::from("t.cfg")));
        assert_eq!(c.out, Some(PathBuf::from("res/")));
        assert!(!c.svg);
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(parse_args(["bogus"]).unwrap_err().code, 2);
    }

    #[test]
    fn empty_argv_prints_help() {
        let e = parse_args(Vec::<String>::new()).unwrap_err();
        assert_eq!(e.code, 0);
        assert!(e.message.contains("Usage"));
    }

    #[test]
    fn missing_out_and_unknown_flag_rejected() {
        assert_eq!(parse_args(["sweep"]).unwrap_err().code, 2);
        assert_eq!(parse_args(["sweep", "--out", "x", "--frobnicate"]).unwrap_err().code, 2);
        assert!(parse_args(["mesh-info"]).is_ok());
    }

    #[test]
    fn negative_pressure_list() {
        let c = parse_args([
            "sweep",
            "--out",
            "o",
            "--pressure",
            "-10,-30,-50",
            "--seed",
            "7",
            "--svg",
            "-vv",
        ])
        .unwrap();
        assert_eq!(c.pressures, Some(vec![-10.0, -30.0, -50.0]));
        assert_eq!(c.seed, Some(7));
        assert!(c.svg);
        assert_eq!(c.verbose, 2);
    }

    #[test]
    fn pressure_tags() {
        assert_eq!(pressure_tag(-10.0), "-10");
        assert_eq!(pressure_tag(0.0), "0");
        assert_eq!(pressure_tag(-0.0), "0");
        assert_eq!(pressure_tag(-12.5), "-12p5");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::io("x", std::io::Error::other("boom"))), 3);
        assert_eq!(exit_code(&Error::Configuration("x".into())), 2);
        let nested = Error::AtPressure {
            pressure_kpa: -10.0,
            source: Box::new(Error::State("x")),
        };
        assert_eq!(exit_code(&nested), 1);
    }
}
