use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde_json::json;

use itdloc::acoustics::audio_io::write_stereo_wav;
use itdloc::acoustics::{synthesize_pair, ArrayTrajectory, ItdSeries, SeriesKind};
use itdloc::detectors::RmseCalibrationCurve;
use itdloc::itd::{measure_series_skipping_silence, GccConfig};
use itdloc::observability::{singularity_sweep, SweepGrid, SweepSystem};
use itdloc::pipeline::tables::{reference_table, write_table_csv, TableKind};
use itdloc::pipeline::{
    calibrate_rmse_curve, face_source, localize_distance, localize_orientation,
    run_experiment_suite, simulate_translation_series, summarize, write_results_csv, Branch,
    DistanceEstimate, ExperimentSpec, Mode,
};
use itdloc::{Error, Result};

use crate::config::RunConfig;
use crate::manifest::Outputs;

/// Seed offset of the translation run that follows a rotation run.
const TRANSLATION_SEED: u64 = 0x5EED_D157;

/// What a command reports back to `main`.
pub struct Done {
    pub outputs: Outputs,
    /// set when the estimate did not settle; maps to exit code 3
    pub not_converged: Option<String>,
}

impl Done {
    fn ok(outputs: Outputs) -> Self {
        Self {
            outputs,
            not_converged: None,
        }
    }
}

fn csv_bytes<F>(f: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn read_series(path: &Path) -> Result<ItdSeries> {
    let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ItdSeries::read_csv(BufReader::new(f))
}

pub fn simulate(cfg: &RunConfig, translation: bool, wav: bool) -> Result<Done> {
    let spec = cfg.experiment_spec()?;
    let truth = cfg.source_truth()?;
    let mut out = Outputs::new(&cfg.output_dir)?;

    let series = match (spec.mode, wav) {
        (Mode::Ideal, true) => {
            return Err(Error::Config("--wav needs mode = \"audio\"".into()));
        }
        (Mode::Ideal, false) => spec.record_rotation(&truth, cfg.seed)?,
        (Mode::Audio, _) => {
            let b = spec.orientation.baseline;
            let traj = ArrayTrajectory::rotation(
                &spec.schedule,
                b,
                spec.room.center(),
                spec.signal.sample_rate,
            )?;
            let pair = synthesize_pair(&spec.room, &truth, &traj, &spec.signal)?;
            if wav {
                write_stereo_wav(&out.path("rotation.wav"), &pair)?;
                out.register("rotation.wav")?;
            }
            let gcc = GccConfig::for_array(b, spec.room.sound_speed, spec.weighting);
            let (series, dropped) = measure_series_skipping_silence(
                &pair,
                &traj,
                &gcc,
                spec.room.sound_speed,
                SeriesKind::Rotation,
                spec.schedule.sample_period(),
            )?;
            if dropped > 0 {
                eprintln!("note: {dropped} silent frames dropped");
            }
            series
        }
    };
    out.write("rotation_series.csv", &csv_bytes(|w| series.write_csv(w))?)?;
    println!("rotation series: {} samples", series.len());

    if translation {
        // The array faces the true source direction.
        let t = simulate_translation_series(
            &spec.distance,
            &truth,
            truth.azimuth,
            spec.distance_noise_sigma,
            cfg.seed ^ TRANSLATION_SEED,
        )?;
        out.write("translation_series.csv", &csv_bytes(|w| t.write_csv(w))?)?;
        println!("translation series: {} samples", t.len());
    }
    Ok(Done::ok(out))
}

/// Loads the curve from an explicit path, or from the configured/default path
/// when it exists.
fn load_curve(cfg: &RunConfig, explicit: Option<&Path>) -> Result<Option<RmseCalibrationCurve>> {
    match explicit {
        Some(p) => RmseCalibrationCurve::load(p).map(Some),
        None => {
            let p = cfg.curve_path();
            if p.exists() {
                RmseCalibrationCurve::load(&p).map(Some)
            } else {
                Ok(None)
            }
        }
    }
}

fn distance_json(est: &DistanceEstimate) -> serde_json::Value {
    json!({
        "distance_m": est.distance,
        "std_m": est.std,
        "heading_deg": est.beta.to_degrees(),
        "steps": est.trace.len(),
    })
}

pub fn localize(
    cfg: &RunConfig,
    series_path: &Path,
    curve_path: Option<&Path>,
    translation: Option<&Path>,
    distance: bool,
) -> Result<Done> {
    let setup = cfg.orientation_setup()?;
    let dsetup = cfg.distance_setup()?;
    let series = read_series(series_path)?;
    if series.kind != SeriesKind::Rotation {
        return Err(Error::Config(format!(
            "{} is not a rotation series",
            series_path.display()
        )));
    }
    let curve = load_curve(cfg, curve_path)?;
    let verdict = localize_orientation(&setup, curve.as_ref(), &series)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    let mut not_converged = None;

    if let Some(t) = &verdict.tracks {
        out.write("tracks.csv", &csv_bytes(|w| t.write_csv(w))?)?;
    }

    let mut dist = serde_json::Value::Null;
    if translation.is_some() || distance {
        let tseries = match translation {
            Some(p) => read_series(p)?,
            None => {
                let beta = face_source(&verdict, dsetup.ninety_deg_bypass, 0.0)?;
                simulate_translation_series(
                    &dsetup,
                    &cfg.source_truth()?,
                    beta,
                    cfg.noise.translation_sigma_m,
                    cfg.seed ^ TRANSLATION_SEED,
                )?
            }
        };
        match localize_distance(&dsetup, &verdict, &tseries) {
            Ok(est) => {
                out.write("distance_trace.csv", &csv_bytes(|w| est.write_csv(w))?)?;
                dist = distance_json(&est);
            }
            Err(e @ (Error::NotConverged(_) | Error::Diverged { .. })) => {
                dist = json!({ "error": e.to_string() });
                not_converged = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    if !verdict.diagnostics.converged && not_converged.is_none() {
        not_converged = Some(format!(
            "azimuth spread {:.2} deg over the last revolution",
            verdict.diagnostics.azimuth_std_deg.unwrap_or(f64::NAN)
        ));
    }

    let report = json!({
        "series": series_path.display().to_string(),
        "samples": series.len(),
        "branch": verdict.branch.as_str(),
        "azimuth_defined": verdict.azimuth_deg.is_some(),
        "azimuth_deg": verdict.azimuth_deg,
        "elevation_deg": verdict.elevation_deg,
        "diagnostics": {
            "amplitude_peak_m": verdict.diagnostics.amplitude_peak,
            "rmse_deg": verdict.diagnostics.rmse_deg,
            "azimuth_std_deg": verdict.diagnostics.azimuth_std_deg,
            "converged": verdict.diagnostics.converged,
            "elevation_clamped": verdict.diagnostics.elevation_clamped,
            "missing_samples": verdict.diagnostics.missing_samples,
        },
        "distance": dist,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    out.write("report.json", text.as_bytes())?;

    match verdict.azimuth_deg {
        Some(a) => println!(
            "branch {}: azimuth {a:.2} deg, elevation {:.2} deg",
            verdict.branch.as_str(),
            verdict.elevation_deg
        ),
        None => println!(
            "branch {}: azimuth undefined, elevation {:.2} deg",
            verdict.branch.as_str(),
            verdict.elevation_deg
        ),
    }
    if let Some(d) = dist.get("distance_m").and_then(|v| v.as_f64()) {
        println!("distance {d:.3} m");
    }
    Ok(Done {
        outputs: out,
        not_converged,
    })
}

fn calibrate_curve(cfg: &RunConfig, spec: &ExperimentSpec) -> Result<RmseCalibrationCurve> {
    calibrate_rmse_curve(&spec.orientation, &cfg.calibration_grid(), |t, s| {
        spec.record_rotation(t, s)
    })
}

pub fn calibrate(cfg: &RunConfig) -> Result<Done> {
    let spec = cfg.experiment_spec()?;
    let curve = calibrate_curve(cfg, &spec)?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    curve.save(&out.path("rmse_curve.toml"))?;
    out.register("rmse_curve.toml")?;
    let samples = csv_bytes(|w| {
        use std::io::Write;
        writeln!(w, "elevation_deg,mean_rmse_deg,fitted_rmse_deg")?;
        for &[e, r] in &curve.samples {
            writeln!(w, "{e},{r},{}", curve.eval(e))?;
        }
        Ok(())
    })?;
    out.write("calibration_samples.csv", &samples)?;
    println!(
        "degree {} curve over {:.1}..{:.1} deg: residual rms {:.3} deg, monotone {}",
        curve.degree(),
        curve.domain[0],
        curve.domain[1],
        curve.residual_rms,
        curve.monotone
    );
    if !curve.monotone {
        eprintln!("warning: the curve is not monotone; elevation lookups may be ambiguous");
    }
    Ok(Done::ok(out))
}

pub fn observability(cfg: &RunConfig, systems: &[String]) -> Result<Done> {
    let o = &cfg.observability;
    let names = if systems.is_empty() {
        &o.systems
    } else {
        systems
    };
    let mut out = Outputs::new(&cfg.output_dir)?;
    for name in names {
        let system = SweepSystem::parse(name)
            .ok_or_else(|| Error::Config(format!("unknown observability system `{name}`")))?;
        let mut grid = SweepGrid::angles(
            o.angle_step_deg,
            cfg.array.baseline_m,
            cfg.rotation.omega_rad_s,
        );
        if system == SweepSystem::Distance {
            grid.first = SweepGrid::range(0.0, o.distance_max_m, o.distance_step_m);
            grid.second = SweepGrid::range(-o.delta_d_max_m, o.delta_d_max_m, o.delta_d_step_m);
        }
        grid.rows = o.lie_rows;
        grid.relative_tolerance = o.relative_tolerance;
        let report = singularity_sweep(system, &grid);
        let file = format!("observability_{name}.csv");
        out.write(&file, &csv_bytes(|w| report.write_csv(w))?)?;
        print!("{}", report.summary());
    }
    Ok(Done::ok(out))
}

pub fn reproduce(cfg: &RunConfig, table_id: u8, curve_path: Option<&Path>) -> Result<Done> {
    let table = reference_table(table_id)?;
    let mut spec = cfg.experiment_spec()?;
    spec.sources = table.sources()?;
    if table.kind == TableKind::Distance {
        spec.run_distance = true;
    }
    let curve = match load_curve(cfg, curve_path)? {
        Some(c) => c,
        None => {
            eprintln!("note: no calibration curve found; calibrating in memory");
            calibrate_curve(cfg, &spec)?
        }
    };
    let results = run_experiment_suite(&spec, Some(&curve))?;
    let rows = summarize(&results);
    let mut out = Outputs::new(&cfg.output_dir)?;
    out.write(
        &format!("table{table_id}.csv"),
        &csv_bytes(|w| write_table_csv(&table, &rows, w))?,
    )?;
    out.write(
        &format!("table{table_id}_cells.csv"),
        &csv_bytes(|w| write_results_csv(&results, w))?,
    )?;
    for r in &rows {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
        println!(
            "{:>3} {:<10} az {:>8} (err {:>6})  el {:>6} (err {:>6})  D {:>6} (err {:>6})  failed {}/{}",
            r.label,
            r.branch.map_or("-", Branch::as_str),
            f(r.mean_azimuth_deg),
            f(r.mean_abs_azimuth_err_deg),
            f(r.mean_elevation_deg),
            f(r.mean_abs_elevation_err_deg),
            f(r.mean_distance_m),
            f(r.mean_abs_distance_err_m),
            r.failed,
            r.runs
        );
    }
    Ok(Done::ok(out))
}
