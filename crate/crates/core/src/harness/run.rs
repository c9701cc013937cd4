use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::config::{ConfigError, Experiment, RunConfig, SweepParameter};
use super::fit::{fit_scaling, FitError, FitModel};
use super::output::{num, snapshot_table, trace_table, write_json, CsvTable};
use crate::dynamics::runs::{
    absorption_run, biorth_evolution_check, deviation_study, emission_run, pt_run, DeviationSpec,
};
use crate::dynamics::DynamicsError;
use crate::model::{build, EndCoupling, ModelError, Topology};
use crate::scattering::{
    folded_reflection, locate_singularity, reflection_transmission, Branch, ScatteringError,
};
use crate::spectral::{ep_detect, full_spectrum, solve_critical_equation, SpectralError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Scattering(#[from] ScatteringError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl HarnessError {
    /// 2 for config errors, 4 for boundary contamination, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Dynamics(DynamicsError::BoundaryContamination { .. }) => 4,
            HarnessError::Dynamics(DynamicsError::Spectral(SpectralError::Model(_)) | DynamicsError::Model(_))
            | HarnessError::Model(_) => 2,
            _ => 3,
        }
    }
}

/// What a run wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub output_dir: PathBuf,
    /// File names relative to `output_dir`, manifest last.
    pub files: Vec<String>,
    pub summary: Value,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir, files: vec![] })
    }

    fn csv(&mut self, name: &str, table: &CsvTable) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        table.write(&path).map_err(|source| HarnessError::Io { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        write_json(&path, value).map_err(|source| HarnessError::Io { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Runs `config` into `out`, using `workers` threads for sweeps and
/// deviation studies (the global pool when `None`). `manifest.json` is
/// written last.
pub fn run(config: &RunConfig, out: &Path, workers: Option<usize>) -> Result<Outcome, HarnessError> {
    config.validate()?;
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| HarnessError::Pool(e.to_string()))?;
            pool.install(|| run_in_pool(config, out))
        }
        None => run_in_pool(config, out),
    }
}

fn run_in_pool(config: &RunConfig, out: &Path) -> Result<Outcome, HarnessError> {
    let mut w = Writer::new(out)?;
    let summary = match (&config.sweep, config.experiment) {
        (Some(_), Experiment::ScalingSweep) => scaling_sweep(config, &mut w)?,
        (Some(_), _) => generic_sweep(config, &mut w)?,
        (None, _) => single(config, &mut w)?,
    };
    w.json("summary.json", &summary)?;
    let manifest = json!({
        "schema": 1,
        "tool": "nhlattice",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": config.experiment.to_string(),
        "config": config,
        "files": w.files,
    });
    w.json("manifest.json", &manifest)?;
    Ok(Outcome { output_dir: out.to_path_buf(), files: w.files, summary })
}

fn single(config: &RunConfig, w: &mut Writer) -> Result<Value, HarnessError> {
    match config.experiment {
        Experiment::Scatter => scatter(config, w),
        Experiment::Emission => emission(config, w),
        Experiment::Absorption => absorption(config, w),
        Experiment::PtTrace => pt_trace(config, w),
        Experiment::Deviation => deviation(config, w),
        Experiment::Spectrum => spectrum(config, w),
        Experiment::ScalingSweep => unreachable!("validated: scaling sweeps carry a sweep"),
    }
}

fn scatter(config: &RunConfig, w: &mut Writer) -> Result<Value, HarnessError> {
    let spec = &config.lattice;
    let settings = config.scatter.clone().unwrap_or_default();
    let sing: Vec<Value> = [Branch::Gain, Branch::Loss]
        .iter()
        .map(|&b| {
            let s = locate_singularity(spec, b);
            json!({ "branch": b, "k_c": s.k_c, "gamma_c": s.gamma_c })
        })
        .collect();
    if let Some(gammas) = &settings.gamma_values {
        let mut t = CsvTable::new(&["gamma", "r", "R", "divergent"]);
        for &g in gammas {
            let r = folded_reflection(g, spec.g, spec.kappa);
            match r.amplitude() {
                Some(a) => t.row(&[num(g), num(a), num(a * a), "0".into()]),
                None => t.row(&[num(g), "inf".into(), "inf".into(), "1".into()]),
            }
        }
        w.csv("reflection.csv", &t)?;
        return Ok(json!({ "experiment": "scatter", "singularities": sing, "points": gammas.len() }));
    }
    let n = settings.k_points;
    let mut t = CsvTable::new(&["k", "energy", "r_re", "r_im", "t_re", "t_im", "R", "C_even_re", "C_even_im"]);
    let mut divergent = vec![];
    for i in 1..=n {
        let k = std::f64::consts::PI * i as f64 / (n + 1) as f64;
        let s = reflection_transmission(k, spec)?;
        let (r, tt) = match (s.r(), s.t()) {
            (Some(r), Some(t)) => (r, t),
            _ => {
                divergent.push(k);
                let inf = f64::INFINITY;
                (crate::scalar::Cx::new(inf, inf), crate::scalar::Cx::new(inf, inf))
            }
        };
        t.numbers(&[k, s.energy, r.re, r.im, tt.re, tt.im, r.norm_sqr(), s.overlap_even.re, s.overlap_even.im]);
    }
    w.csv("scatter.csv", &t)?;
    Ok(json!({ "experiment": "scatter", "singularities": sing, "divergent_k": divergent }))
}

fn emission(config: &RunConfig, w: &mut Writer) -> Result<Value, HarnessError> {
    let r = emission_run(&config.lattice, config.packet.as_ref().unwrap(), &config.run)?;
    w.csv("trace.csv", &trace_table(&r.trace))?;
    w.csv("snapshots.csv", &snapshot_table(&r.trace))?;
    Ok(json!({
        "experiment": "emission",
        "platform_height": r.platform_height,
        "expected_platform_height": r.expected_height,
        "relative_error": (r.platform_height / r.expected_height - 1.0).abs(),
        "measure_time": r.measure_time,
        "platform_window": [r.platform_window.0, r.platform_window.1],
        "head_arrival": r.head_arrival,
        "expected_head_arrival": r.expected_head_arrival,
        "front": r.front,
        "expected_front": r.expected_front,
        "growth_rate": r.growth_rate,
        "erf_max_deviation": r.erf_max_deviation,
        "boundary_contamination": r.trace.boundary_contamination,
    }))
}

fn absorption(config: &RunConfig, w: &mut Writer) -> Result<Value, HarnessError> {
    let r = absorption_run(&config.lattice, config.packet.as_ref().unwrap(), &config.run)?;
    w.csv("trace.csv", &trace_table(&r.trace))?;
    w.csv("snapshots.csv", &snapshot_table(&r.trace))?;
    Ok(json!({
        "experiment": "absorption",
        "arrival_time": r.arrival_time,
        "probability_at_arrival": r.probability_at_arrival,
        "array_probability_at_arrival": r.array_probability_at_arrival,
        "residual_time": r.residual_time,
        "residual": r.residual,
        "oracle_residual": r.oracle_residual,
        "gaussian_profile_deviation": r.gaussian_profile_deviation,
    }))
}

fn pt_trace(config: &RunConfig, w: &mut Writer) -> Result<Value, HarnessError> {
    let r = pt_run(&config.lattice, config.packet.as_ref().unwrap(), &config.run)?;
    w.csv("trace.csv", &trace_table(&r.trace))?;
    Ok(json!({
        "experiment": "pt-trace",
        "events": r.events,
        "expected_events": r.expected_events,
        "plateau_window": [r.plateau_window.0, r.plateau_window.1],
        "plateau_flatness": r.plateau_flatness,
        "quadratic_fit": r.quadratic_fit,
        "quadratic_coefficient": r.quadratic_coefficient,
        "expected_coefficient": r.expected_coefficient,
    }))
}

fn deviation(config: &RunConfig, w: &mut Writer) -> Result<Value, HarnessError> {
    let d = config.deviation.as_ref().unwrap();
    let deltas: Vec<DeviationSpec> = d.deltas.iter().map(|&delta| DeviationSpec { delta }).collect();
    let table = deviation_study(&config.lattice, d.branch, config.packet.as_ref().unwrap(), &deltas, &config.run)?;
    let mut t = CsvTable::new(&[
        "delta",
        "gamma",
        "P",
        "P_ref",
        "D",
        "residual",
        "oracle_residual",
        "growth",
        "growth_ratio",
        "E0_squared",
    ]);
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in &table.rows {
        t.row(&[
            num(r.delta),
            num(r.gamma),
            num(r.probability),
            num(r.reference_probability),
            num(r.difference),
            opt(r.residual),
            opt(r.oracle_residual),
            r.growth.map(|g| serde_json::to_value(g).unwrap().as_str().unwrap().to_string()).unwrap_or_default(),
            opt(r.growth_ratio),
            opt(r.near_zero_energy_squared),
        ]);
    }
    w.csv("deviation.csv", &t)?;
    Ok(json!({ "experiment": "deviation", "table": table }))
}

fn spectrum(config: &RunConfig, w: &mut Writer) -> Result<Value, HarnessError> {
    let spec = &config.lattice;
    // a side-coupled chain of about n_sites sites, resonator in the middle
    let half_width = (spec.n_sites / 2).max(2);
    let h = build(spec, half_width, EndCoupling::ExplicitG)?;
    let report = full_spectrum(&h)?;
    let mut t = CsvTable::new(&["index", "E_re", "E_im", "overlap_abs", "ipr", "k", "bound"]);
    for (i, p) in report.pairs.iter().enumerate() {
        let kind = report
            .bound_states
            .iter()
            .find(|b| b.index == i)
            .map(|b| serde_json::to_value(b.kind).unwrap().as_str().unwrap().to_string())
            .unwrap_or_default();
        t.row(&[
            i.to_string(),
            num(p.energy.re),
            num(p.energy.im),
            num(p.overlap.norm()),
            num(p.ipr),
            p.k_label.map(num).unwrap_or_default(),
            kind,
        ]);
    }
    w.csv("spectrum.csv", &t)?;
    let settings = config.spectrum.clone().unwrap_or_default();
    let mut s = Map::new();
    s.insert("experiment".into(), json!("spectrum"));
    s.insert("dim".into(), json!(h.dim()));
    s.insert("ep_verdict".into(), json!(report.ep_verdict));
    s.insert("min_overlap".into(), json!(report.min_overlap));
    s.insert("chiral_defect".into(), json!(report.chiral_defect));
    s.insert("conjugate_chiral_defect".into(), json!(report.conjugate_chiral_defect));
    s.insert("bound_states".into(), json!(report.bound_states));
    if spec.topology == Topology::PtFinite {
        let ep = ep_detect(spec, spec.n_sites)?;
        s.insert("ep".into(), json!(ep));
        if settings.critical_roots {
            let roots = solve_critical_equation(spec, spec.n_sites);
            let mut rt = CsvTable::new(&["k", "tangent"]);
            for r in &roots.roots {
                rt.row(&[num(*r), if roots.tangent.contains(r) { "1" } else { "0" }.to_string()]);
            }
            w.csv("critical_roots.csv", &rt)?;
            s.insert("critical_root_count".into(), json!(roots.roots.len()));
            s.insert("critical_warnings".into(), json!(roots.warnings));
        }
        if let (Some(tf), Some(p)) = (settings.biorth_t_final, &config.packet) {
            // refused at an exceptional point; the refusal is the result
            let check = match biorth_evolution_check(spec, p, tf, config.run.dt) {
                Ok(c) => json!(c),
                Err(DynamicsError::Spectral(e @ SpectralError::NearEp { .. })) => json!({ "refused": e.to_string() }),
                Err(e) => return Err(e.into()),
            };
            s.insert("biorth_check".into(), check);
        }
    }
    Ok(Value::Object(s))
}

/// Sweep value, FWHM, gamma_c, measured and expected height.
type ScalingRow = (f64, f64, f64, f64, f64);

fn scaling_sweep(config: &RunConfig, w: &mut Writer) -> Result<Value, HarnessError> {
    let sweep = config.sweep.as_ref().unwrap();
    let rows: Vec<Result<ScalingRow, HarnessError>> = sweep
        .values
        .par_iter()
        .map(|&v| {
            let c = config.at_sweep_point(v);
            let p = c.packet.unwrap();
            let r = emission_run(&c.lattice, &p, &c.run)?;
            Ok((v, p.fwhm(), c.lattice.critical_gamma(1), r.platform_height, r.expected_height))
        })
        .collect();
    let rows: Vec<_> = rows.into_iter().collect::<Result<_, _>>()?;
    let mut t = CsvTable::new(&["value", "fwhm", "gamma_c", "h", "h_expected"]);
    for r in &rows {
        t.numbers(&[r.0, r.1, r.2, r.3, r.4]);
    }
    w.csv("sweep.csv", &t)?;
    let hs: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let fit = match sweep.parameter {
        SweepParameter::Alpha => {
            let xs: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let f = fit_scaling(&xs, &hs, FitModel::Linear)?;
            let mean_h = hs.iter().sum::<f64>() / hs.len() as f64;
            json!({ "x": "fwhm", "fit": f, "relative_intercept": (f.coefficients[0] / mean_h).abs() })
        }
        _ => {
            let xs: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let f = fit_scaling(&xs, &hs, FitModel::PowerLaw)?;
            json!({ "x": "gamma_c", "fit": f, "exponent": f.coefficients[1] })
        }
    };
    Ok(json!({ "experiment": "scaling-sweep", "parameter": sweep.parameter.to_string(), "scaling": fit }))
}

fn generic_sweep(config: &RunConfig, w: &mut Writer) -> Result<Value, HarnessError> {
    let sweep = config.sweep.as_ref().unwrap();
    let dir = w.dir.to_path_buf();
    let points: Vec<Result<(Value, Vec<String>), HarnessError>> = sweep
        .values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let name = format!("point-{i:03}");
            let sub = dir.join(&name);
            let mut pw = Writer::new(&sub)?;
            let s = single(&config.at_sweep_point(v), &mut pw)?;
            pw.json("summary.json", &s)?;
            let files: Vec<String> = pw.files.iter().map(|f| format!("{name}/{f}")).collect();
            Ok((json!({ "value": v, "dir": name, "summary": s }), files))
        })
        .collect();
    let points: Vec<(Value, Vec<String>)> = points.into_iter().collect::<Result<_, _>>()?;
    let (points, files): (Vec<Value>, Vec<Vec<String>>) = points.into_iter().unzip();
    // numeric top-level summary fields of the first point become columns
    let keys: Vec<String> = points[0]["summary"]
        .as_object()
        .map(|o| o.iter().filter(|(_, v)| v.is_number()).map(|(k, _)| k.clone()).collect())
        .unwrap_or_default();
    let mut cols = vec!["value".to_string(), "dir".into()];
    cols.extend(keys.iter().cloned());
    let mut t = CsvTable::new(&cols);
    for p in &points {
        let mut row = vec![num(p["value"].as_f64().unwrap()), p["dir"].as_str().unwrap().to_string()];
        row.extend(keys.iter().map(|k| p["summary"][k].as_f64().map(num).unwrap_or_default()));
        t.row(&row);
    }
    w.csv("sweep.csv", &t)?;
    w.files.extend(files.into_iter().flatten());
    Ok(json!({ "experiment": config.experiment.to_string(), "parameter": sweep.parameter.to_string(), "points": points }))
}
