//! Parameter sweeps: simulate → transform → fit for each (parameter value,
//! window) pair, with CSV/JSON export and a content-hashed run id.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fluctuation::omega_alpha_measure;
use crate::io::write_atomic;
use crate::rate_model::{simulate_with, RateParams, SimulationSettings, Trajectory};
use crate::specfit::{fit_alpha, fit_alpha_peaks, find_peaks, half_window_fits, oscillation_amplitude, AlphaFit, FitMethod, MIN_PEAK_POINTS};
use crate::spectrum::{default_omega_grid, transform_trajectory, GridSpacing, Spectrum, TrajectoryTransform};

pub const THREADS_ENV: &str = "PULSE_SPECTRA_THREADS";

pub const CSV_HEADER: &str =
    "n0,c,r,eta,omega_min,omega_max,alpha,method,omega_max_pow_alpha,osc_fraction,rms_residual,flags";

/// Fraction of the peak photon number that defines the switch-on time.
pub const SWITCH_ON_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    N0,
    C,
    R,
    Eta,
}

impl Axis {
    pub fn apply(self, base: RateParams, value: f64) -> RateParams {
        match self {
            Axis::N0 => base.with_n0(value),
            Axis::C => base.with_c(value),
            Axis::R => base.with_r(value),
            Axis::Eta => base.with_eta(value),
        }
    }
}

/// How each row chooses between the direct and the peak-line fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    /// Peaks when at least three peaks are found, otherwise direct.
    #[default]
    Auto,
    Direct,
    Peaks,
}

impl std::str::FromStr for MethodChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "direct" => Ok(Self::Direct),
            "peaks" => Ok(Self::Peaks),
            other => Err(Error::domain(format!("unknown fit method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub omega_min: f64,
    pub omega_max: f64,
}

impl Window {
    pub const fn new(omega_min: f64, omega_max: f64) -> Self {
        Self { omega_min, omega_max }
    }
}

/// One value of the swept parameter and the windows fitted on its spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub value: f64,
    pub windows: Vec<Window>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Preset name; also names the output directory.
    pub name: Option<String>,
    pub base: RateParams,
    pub axis: Axis,
    pub cases: Vec<SweepCase>,
    pub simulation: SimulationSettings,
    pub transform: TrajectoryTransform,
    /// Uniform grid points per fit window.
    pub points_per_window: usize,
    pub method: MethodChoice,
    /// Worker cap; `None` defers to the environment, then to rayon's default.
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

pub const PRESETS: [&str; 5] = ["table1", "table2", "table3", "table4", "fig4"];

fn windows(list: &[(f64, f64)]) -> Vec<Window> {
    list.iter().map(|&(a, b)| Window::new(a, b)).collect()
}

impl SweepConfig {
    pub fn new(base: RateParams, axis: Axis, cases: Vec<SweepCase>) -> Self {
        Self {
            name: None,
            base,
            axis,
            cases,
            simulation: SimulationSettings::default(),
            transform: TrajectoryTransform::default(),
            points_per_window: 256,
            method: MethodChoice::Auto,
            threads: None,
            output_dir: None,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let base = RateParams::reference()?;
        let case = |value: f64, w: &[(f64, f64)]| SweepCase {
            value,
            windows: windows(w),
        };
        let mut cfg = match name {
            "table1" => Self::new(
                base,
                Axis::N0,
                vec![
                    case(1e7, &[(50.0, 100.0), (100.0, 150.0), (150.0, 200.0)]),
                    case(1e8, &[(100.0, 300.0), (500.0, 600.0)]),
                    case(1e9, &[(50.0, 500.0), (1500.0, 1600.0)]),
                    case(1e10, &[(50.0, 900.0)]),
                    case(1e11, &[(50.0, 900.0)]),
                    case(1e12, &[(50.0, 900.0)]),
                ],
            ),
            "table2" => Self::new(
                base.with_eta(0.0),
                Axis::N0,
                vec![
                    case(1e7, &[(51.0, 96.0)]),
                    case(1e8, &[(200.0, 240.0)]),
                    case(1e9, &[(250.0, 300.0)]),
                    case(1e10, &[(250.0, 300.0)]),
                    case(1e11, &[(400.0, 500.0)]),
                    case(1e12, &[(600.0, 800.0)]),
                ],
            ),
            "table3" => Self::new(
                base,
                Axis::C,
                [1e-5, 10f64.powf(-4.5), 1e-4, 1e-3, 1e-2, 1e-1]
                    .iter()
                    .map(|&c| case(c, &[(50.0, 100.0), (100.0, 150.0)]))
                    .collect(),
            ),
            "table4" => Self::new(
                base,
                Axis::R,
                [4.0, 3.0, 2.0, 1.5, 1.0, 0.8, 0.4, 0.2]
                    .iter()
                    .map(|&r| case(r, &[(50.0, 100.0)]))
                    .collect(),
            ),
            "fig4" => Self::new(
                base,
                Axis::N0,
                [1e7, 1e8, 1e9, 1e10, 1e11, 1e12]
                    .iter()
                    .map(|&n| case(n, &[(50.0, 100.0)]))
                    .collect(),
            ),
            other => {
                return Err(Error::domain(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        cfg.name = Some(name.to_string());
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Err(Error::domain("sweep has no parameter values"));
        }
        for case in &self.cases {
            self.axis.apply(self.base, case.value).validate()?;
            if case.windows.is_empty() {
                return Err(Error::domain(format!("no fit windows for value {}", case.value)));
            }
            for w in &case.windows {
                if !(w.omega_min > 0.0 && w.omega_min < w.omega_max && w.omega_max.is_finite()) {
                    return Err(Error::domain(format!(
                        "invalid window [{}, {}] for value {}",
                        w.omega_min, w.omega_max, case.value
                    )));
                }
            }
        }
        self.simulation.validate()?;
        if self.points_per_window < 16 {
            return Err(Error::domain(format!(
                "points_per_window must be at least 16, got {}",
                self.points_per_window
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::domain("threads must be positive"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hash of the computational content of the config (output location excluded).
    pub fn content_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        c.threads = None;
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&c)?);
        Ok(hex::encode(h.finalize()))
    }

    /// `<outdir>/<preset-or-hash>`.
    pub fn run_dir(&self, outdir: &Path) -> Result<PathBuf> {
        let leaf = match &self.name {
            Some(n) => n.clone(),
            None => self.content_hash()?[..12].to_string(),
        };
        Ok(outdir.join(leaf))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub params: RateParams,
    pub omega_min: f64,
    pub omega_max: f64,
    pub alpha: Option<f64>,
    pub method: Option<FitMethod>,
    pub omega_max_pow_alpha: Option<f64>,
    pub osc_fraction: Option<f64>,
    pub rms_residual: Option<f64>,
    pub intercept: Option<f64>,
    pub n_points: Option<usize>,
    /// Time at which `x` first reaches `SWITCH_ON_FRACTION` of its peak.
    pub switch_on: Option<f64>,
    /// Direct-fit exponents on the lower and upper halves of the window
    /// (split at the geometric midpoint); two populations show up as a gap.
    pub half_alphas: Option<[f64; 2]>,
    pub flags: Vec<String>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

impl ResultRow {
    fn failed(params: RateParams, w: Window, err: &Error, wall: f64) -> Self {
        let stage = match err {
            Error::Stage { stage, .. } => *stage,
            _ => "pipeline",
        };
        Self {
            params,
            omega_min: w.omega_min,
            omega_max: w.omega_max,
            alpha: None,
            method: None,
            omega_max_pow_alpha: None,
            osc_fraction: None,
            rms_residual: None,
            intercept: None,
            n_points: None,
            switch_on: None,
            half_alphas: None,
            flags: vec![format!("failed:{stage}")],
            error: Some(err.to_string()),
            wall_time_s: wall,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Fits with the chosen method. `Auto` uses the peak line when at least three
/// peaks are present, except for spectra known to come from `η = 1`.
pub fn fit_with(
    spectrum: &Spectrum,
    omega_min: f64,
    omega_max: f64,
    choice: MethodChoice,
    eta: Option<f64>,
) -> Result<AlphaFit> {
    match choice {
        MethodChoice::Direct => fit_alpha(spectrum, omega_min, omega_max),
        MethodChoice::Peaks => fit_alpha_peaks(spectrum, omega_min, omega_max),
        MethodChoice::Auto => {
            let n_peaks = find_peaks(spectrum, omega_min, omega_max)
                .map(|p| p.peaks.len())
                .unwrap_or(0);
            if eta != Some(1.0) && n_peaks >= MIN_PEAK_POINTS {
                fit_alpha_peaks(spectrum, omega_min, omega_max)
            } else {
                fit_alpha(spectrum, omega_min, omega_max)
            }
        }
    }
}

/// Fits one window of an already simulated trajectory.
fn fit_window(traj: &Trajectory, w: Window, config: &SweepConfig) -> Result<ResultRow> {
    let grid = default_omega_grid(w.omega_min, w.omega_max, GridSpacing::Total(config.points_per_window))
        .map_err(|e| e.in_stage("grid"))?;
    let spectrum = transform_trajectory(traj, &grid, &config.transform).map_err(|e| e.in_stage("transform"))?;
    let (lo, hi) = (w.omega_min, w.omega_max);
    let fit = fit_with(&spectrum, lo, hi, config.method, Some(traj.params.eta)).map_err(|e| e.in_stage("fit"))?;

    let mut flags = Vec::new();
    if !spectrum.warnings.is_empty() {
        flags.push("truncation".to_string());
    }
    if fit.is_nonlinear() {
        flags.push("nonlinear".to_string());
    }
    if !(fit.alpha > 0.0 && fit.alpha < 1.0) {
        flags.push("alpha_out_of_range".to_string());
    }
    let pow = if fit.alpha > 0.0 {
        Some(omega_alpha_measure(hi, fit.alpha)?.0)
    } else {
        None
    };
    Ok(ResultRow {
        params: traj.params,
        omega_min: lo,
        omega_max: hi,
        alpha: Some(fit.alpha),
        method: Some(fit.method),
        omega_max_pow_alpha: pow,
        osc_fraction: Some(oscillation_amplitude(&spectrum, lo, hi)),
        rms_residual: Some(fit.rms_residual),
        intercept: Some(fit.intercept),
        n_points: Some(fit.n_points),
        switch_on: traj.switch_on_time(SWITCH_ON_FRACTION).ok(),
        half_alphas: half_window_fits(&spectrum, lo, hi)
            .ok()
            .map(|[_, a, b]| [a.alpha, b.alpha]),
        flags,
        error: None,
        wall_time_s: 0.0,
    })
}

/// Runs the full pipeline for one parameter set and one window.
pub fn run_case(params: &RateParams, window: Window, config: &SweepConfig) -> ResultRow {
    run_windows(params, &[window], config).pop().expect("one window")
}

/// Simulates once and fits every window; failures are recorded per row.
fn run_windows(params: &RateParams, windows: &[Window], config: &SweepConfig) -> Vec<ResultRow> {
    let start = Instant::now();
    let traj = match simulate_with(params, &config.simulation).map_err(|e| e.in_stage("simulate")) {
        Ok(t) => t,
        Err(e) => {
            let wall = start.elapsed().as_secs_f64();
            return windows.iter().map(|&w| ResultRow::failed(*params, w, &e, wall)).collect();
        }
    };
    let sim_time = start.elapsed().as_secs_f64();
    windows
        .iter()
        .map(|&w| {
            let t0 = Instant::now();
            let mut row = fit_window(&traj, w, config)
                .unwrap_or_else(|e| ResultRow::failed(*params, w, &e, 0.0));
            row.wall_time_s = sim_time + t0.elapsed().as_secs_f64();
            row
        })
        .collect()
}

/// Worker count from the config, else `PULSE_SPECTRA_THREADS`, else rayon's default.
pub fn worker_count(config: &SweepConfig) -> Result<Option<usize>> {
    if let Some(n) = config.threads {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::domain(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(None),
    }
}

/// Fails early if `dir` cannot be created or written.
pub fn check_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Runs every case; rows come back in config order.
pub fn run_table(config: &SweepConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    if let Some(dir) = &config.output_dir {
        check_writable(&config.run_dir(dir)?)?;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count(config)? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::numerical(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<Vec<ResultRow>> = pool.install(|| {
        config
            .cases
            .par_iter()
            .map(|case| run_windows(&config.axis.apply(config.base, case.value), &case.windows, config))
            .collect()
    });
    Ok(rows.into_iter().flatten().collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::domain("no rows to export"));
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.params.n0.to_string(),
            r.params.c.to_string(),
            r.params.r.to_string(),
            r.params.eta.to_string(),
            r.omega_min.to_string(),
            r.omega_max.to_string(),
            opt(r.alpha),
            r.method.map(|m| m.to_string()).unwrap_or_default(),
            opt(r.omega_max_pow_alpha),
            opt(r.osc_fraction),
            opt(r.rms_residual),
            r.flags.join(";"),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

/// Exported rows with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepExport {
    pub run_id: String,
    pub config: SweepConfig,
    pub rows: Vec<ResultRow>,
}

impl SweepExport {
    /// The run id hashes the config and the CSV rows, so timings do not enter it.
    pub fn new(config: &SweepConfig, rows: Vec<ResultRow>) -> Result<Self> {
        let mut h = Sha256::new();
        h.update(config.content_hash()?.as_bytes());
        h.update(rows_to_csv(&rows)?.as_bytes());
        Ok(Self {
            run_id: hex::encode(h.finalize())[..16].to_string(),
            config: config.clone(),
            rows,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Serialize)]
struct Meta<'a> {
    run_id: &'a str,
    package: &'static str,
    version: &'static str,
    config: &'a SweepConfig,
    rows: usize,
    failed_rows: usize,
    total_wall_time_s: Option<f64>,
}

/// Writes `rows.csv`, `rows.json` and `meta.json` under the run directory.
/// With `seedless`, timings are zeroed so repeated runs are byte-identical.
pub fn write_outputs(config: &SweepConfig, rows: &[ResultRow], outdir: &Path, seedless: bool) -> Result<PathBuf> {
    let dir = config.run_dir(outdir)?;
    let mut rows = rows.to_vec();
    let total: f64 = rows.iter().map(|r| r.wall_time_s).sum();
    if seedless {
        for r in &mut rows {
            r.wall_time_s = 0.0;
        }
    }
    let mut cfg = config.clone();
    cfg.output_dir = None;
    cfg.threads = None;
    let export = SweepExport::new(&cfg, rows)?;
    let meta = Meta {
        run_id: &export.run_id,
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        rows: export.rows.len(),
        failed_rows: export.rows.iter().filter(|r| r.is_failed()).count(),
        total_wall_time_s: (!seedless).then_some(total),
    };
    write_atomic(&dir.join("rows.csv"), rows_to_csv(&export.rows)?.as_bytes())?;
    write_atomic(&dir.join("rows.json"), export.to_json()?.as_bytes())?;
    write_atomic(&dir.join("meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SweepConfig {
        let mut cfg = SweepConfig::new(
            RateParams::reference().unwrap(),
            Axis::N0,
            vec![SweepCase {
                value: 1e7,
                windows: windows(&[(50.0, 100.0)]),
            }],
        );
        cfg.points_per_window = 64;
        cfg
    }

    #[test]
    fn preset_layouts() {
        let t1 = SweepConfig::preset("table1").unwrap();
        let pairs: Vec<(f64, f64, f64)> = t1
            .cases
            .iter()
            .flat_map(|c| c.windows.iter().map(move |w| (c.value, w.omega_min, w.omega_max)))
            .collect();
        assert_eq!(pairs.len(), 10);
        assert_eq!(pairs[0], (1e7, 50.0, 100.0));
        assert_eq!(pairs[4], (1e8, 500.0, 600.0));
        assert_eq!(pairs[9], (1e12, 50.0, 900.0));
        let t3 = SweepConfig::preset("table3").unwrap();
        assert_eq!(t3.cases.iter().map(|c| c.windows.len()).sum::<usize>(), 12);
        assert_eq!(SweepConfig::preset("table2").unwrap().base.eta, 0.0);
        assert_eq!(SweepConfig::preset("table4").unwrap().cases.len(), 8);
        for name in PRESETS {
            SweepConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(SweepConfig::preset("table9").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = small_config();
        cfg.cases.clear();
        assert!(matches!(cfg.validate(), Err(Error::Domain(_))));
        assert!(run_table(&cfg).is_err());
        let mut cfg = small_config();
        cfg.cases[0].windows[0] = Window::new(100.0, 50.0);
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.cases[0].value = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn failed_rows_are_isolated() {
        let mut cfg = small_config();
        cfg.method = MethodChoice::Peaks;
        cfg.cases.push(SweepCase {
            value: 1e7,
            windows: windows(&[(50.0, 100.0)]),
        });
        let rows = run_table(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.is_failed());
            assert_eq!(r.flags, vec!["failed:fit".to_string()]);
        }
        let csv = rows_to_csv(&rows).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn single_row_export_and_round_trip() {
        let cfg = small_config();
        let rows = run_table(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert!(!row.is_failed(), "{:?}", row.error);
        assert_eq!(row.method, Some(FitMethod::Direct));
        let alpha = row.alpha.unwrap();
        assert!((alpha - 0.11).abs() < 0.03, "alpha = {alpha}");
        assert_eq!(row.omega_max_pow_alpha, Some(100f64.powf(alpha)));

        let csv = rows_to_csv(&rows).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1].split(',').count(), 12);

        let export = SweepExport::new(&cfg, rows.clone()).unwrap();
        let back = SweepExport::from_json(&export.to_json().unwrap()).unwrap();
        assert_eq!(back, export);
        assert_eq!(rows_to_csv(&back.rows).unwrap(), csv);
    }

    #[test]
    fn deterministic_csv() {
        let cfg = small_config();
        let a = rows_to_csv(&run_table(&cfg).unwrap()).unwrap();
        let b = rows_to_csv(&run_table(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn outputs_written_under_run_dir() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        let rows = run_table(&cfg).unwrap();
        let dir = write_outputs(&cfg, &rows, tmp.path(), true).unwrap();
        assert_eq!(dir, tmp.path().join(&cfg.content_hash().unwrap()[..12]));
        for f in ["rows.csv", "rows.json", "meta.json"] {
            assert!(dir.join(f).is_file());
        }
        let first = std::fs::read(dir.join("rows.json")).unwrap();
        write_outputs(&cfg, &rows, tmp.path(), true).unwrap();
        assert_eq!(std::fs::read(dir.join("rows.json")).unwrap(), first);

        cfg.name = Some("named".into());
        assert_eq!(cfg.run_dir(tmp.path()).unwrap(), tmp.path().join("named"));
    }

    #[test]
    fn unwritable_output_rejected_before_compute() {
        let tmp = tempfile::tempdir().unwrap();
        let blocker = tmp.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let mut cfg = small_config();
        cfg.output_dir = Some(blocker.join("sub"));
        let err = run_table(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SweepConfig::preset("table3").unwrap();
        let back = SweepConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.content_hash().unwrap(), cfg.content_hash().unwrap());
    }
}
