//! Command-line front end. Settings go to stderr, a human summary to stdout,
//! machine artifacts only to files named by `--out`/`--outdir`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::fluctuation::{
    dominant_frequency, lifetime_to_pulse_scale, omega_alpha_measure, scattering_ratio, tail_ccdf, tail_pdf,
    TailParams, REF_PULSE_LENGTH_UM, REF_SOUND_SPEED_M_PER_S, REF_TEMPERATURE_K, REF_WAVELENGTH_NM,
};
use crate::io::write_atomic;
use crate::pump::PumpSpec;
use crate::rate_model::{simulate_with, Integrator, RateParams, SimulationSettings, Trajectory};
use crate::specfit::oscillation_amplitude;
use crate::spectrum::{default_omega_grid, transform_trajectory, GridSpacing, Spectrum, TrajectoryTransform};
use crate::sweep::{fit_with, run_table, write_outputs, MethodChoice, SweepConfig, SWITCH_ON_FRACTION};
use crate::verify::{verify_pump, VerifySettings};

#[derive(Debug, Parser)]
#[command(name = "pulse-spectra", version, about = "Laser output pulses, their spectral tails and fitted decay exponents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Zero wall-clock fields so repeated runs produce byte-identical files.
    #[arg(long, global = true)]
    pub seedless: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the rate equations and write x(t), a(t) as CSV.
    Simulate(SimulateArgs),
    /// Transform the photon number x(t) on a log-spaced frequency grid.
    Spectrum(SpectrumArgs),
    /// Fit the decay exponent alpha on a window of a spectrum.
    Fit(FitArgs),
    /// Run a parameter sweep from a preset or a JSON config.
    Sweep(SweepArgs),
    /// Fluctuation-tail and physical-scale estimates.
    #[command(subcommand)]
    Estimate(EstimateCommand),
    /// Check the tail bounds of the pump spectrum.
    Verify(VerifyArgs),
}

/// Model and integrator flags. Times are in units of the pump duration.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Number of pump photons N0.
    #[arg(long, default_value_t = 1e7)]
    pub n0: f64,
    /// Dimensionless emission constant C.
    #[arg(long, default_value_t = 1e-4)]
    pub c: f64,
    /// Cavity loss rate r (per pump duration).
    #[arg(long, default_value_t = 2.0)]
    pub r: f64,
    /// Re-absorption weight eta.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Pump shape exponent nu.
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    /// Integration end time (pump durations).
    #[arg(long, default_value_t = 8.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub rel_tol: f64,
    /// Absolute tolerance in units of N0.
    #[arg(long, default_value_t = 1e-8)]
    pub abs_tol: f64,
    /// auto, dopri5 or radau.
    #[arg(long, default_value = "auto")]
    pub integrator: String,
}

impl ModelArgs {
    fn params(&self) -> Result<RateParams> {
        RateParams::new(self.n0, self.c, self.r, self.eta, PumpSpec::new(self.nu)?)
    }

    fn settings(&self) -> Result<SimulationSettings> {
        let s = SimulationSettings {
            t_end: self.t_end,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            integrator: self.integrator.parse::<Integrator>()?,
            ..Default::default()
        };
        s.validate()?;
        Ok(s)
    }

    fn simulate(&self) -> Result<Trajectory> {
        let params = self.params()?;
        let settings = self.settings()?;
        emit_settings("simulation", &json!({ "params": params, "settings": settings }))?;
        simulate_with(&params, &settings)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Uniform samples written to the CSV.
    #[arg(long, default_value_t = 8001)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Lowest angular frequency (inverse pump durations).
    #[arg(long, default_value_t = 50.0)]
    pub omega_min: f64,
    /// Highest angular frequency (inverse pump durations).
    #[arg(long, default_value_t = 100.0)]
    pub omega_max: f64,
    /// Grid points, log-spaced, endpoints included.
    #[arg(long, default_value_t = 256)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Transform the output flux r x(t) instead of x(t).
    #[arg(long)]
    pub include_r_factor: bool,
    /// Output file; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Spectrum file (CSV or JSON). Without it the spectrum is computed from the model flags.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// auto, direct or peaks.
    #[arg(long, default_value = "auto")]
    pub method: String,
    /// AlphaFit JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Builtin sweep: table1, table2, table3, table4 or fig4.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON sweep configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Results go to <outdir>/<preset-or-hash>/.
    #[arg(long, default_value = "runs")]
    pub outdir: PathBuf,
    /// Worker threads (overrides PULSE_SPECTRA_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override the grid points per window.
    #[arg(long)]
    pub points: Option<usize>,
    /// Override the fit method: auto, direct or peaks.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum EstimateCommand {
    /// Tail probabilities of a stretched-exponential distribution (relative; b and c0 are not derived).
    Tail(TailArgs),
    /// Scattered-photon ratio for a pulse in liquid He-3.
    Scattering(ScatteringArgs),
    /// Pulse time scale and length from a radiative lifetime.
    Lifetime(LifetimeArgs),
}

#[derive(Debug, Args)]
pub struct TailArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c0: f64,
    /// Variance-normalized outcome u.
    #[arg(long)]
    pub u: Option<f64>,
    /// Sampling time scale tau, for the dominant frequency u/tau.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Upper end of a fit window; reports omega_max^alpha.
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScatteringArgs {
    #[arg(long)]
    pub u: f64,
    /// Pulse length, micrometers.
    #[arg(long, default_value_t = REF_PULSE_LENGTH_UM)]
    pub pulse_length_um: f64,
    /// Speed of sound, m/s.
    #[arg(long, default_value_t = REF_SOUND_SPEED_M_PER_S)]
    pub sound_speed: f64,
    /// Vacuum wavelength, nanometers.
    #[arg(long, default_value_t = REF_WAVELENGTH_NM)]
    pub wavelength_nm: f64,
    /// Temperature, kelvin.
    #[arg(long, default_value_t = REF_TEMPERATURE_K)]
    pub temperature: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LifetimeArgs {
    /// Dimensionless emission constant C.
    #[arg(long)]
    pub c: f64,
    /// Radiative lifetime, seconds.
    #[arg(long)]
    pub tau_life: f64,
    /// Carrier wavelength, meters.
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub nu: f64,
    #[arg(long, default_value_t = 1e2)]
    pub omega_min: f64,
    #[arg(long, default_value_t = 1e6)]
    pub omega_max: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn emit_settings<T: Serialize>(label: &str, value: &T) -> Result<()> {
    eprintln!("# {label} settings: {}", serde_json::to_string(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    if args.samples < 2 {
        return Err(Error::domain("samples must be at least 2"));
    }
    let traj = args.model.simulate().map_err(|e| e.in_stage("simulate"))?;
    let d = &traj.diagnostics;
    let (t_peak, x_peak) = traj.peak();
    println!("integrator        {:?}", d.integrator);
    println!("steps             {} accepted, {} rejected", d.accepted_steps, d.rejected_steps);
    println!("peak x            {x_peak:.6e} at t = {t_peak:.6}");
    println!(
        "switch-on         t = {:.6} (x = {SWITCH_ON_FRACTION} of peak)",
        traj.switch_on_time(SWITCH_ON_FRACTION)?
    );
    println!("balance residual  {:.3e} (relative to N0)", d.max_balance_residual);
    println!("r x(t_end)        {:.3e}", d.truncation_residual);
    if let Some(out) = &args.out {
        traj.write_csv(out, args.samples)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn grid_of(g: &GridArgs) -> Result<Vec<f64>> {
    default_omega_grid(g.omega_min, g.omega_max, GridSpacing::Total(g.points))
}

fn pipeline_spectrum(model: &ModelArgs, grid: &GridArgs, include_r_factor: bool) -> Result<Spectrum> {
    // Validate the grid before spending time on the simulation.
    let omega = grid_of(grid)?;
    let traj = model.simulate().map_err(|e| e.in_stage("simulate"))?;
    let opts = TrajectoryTransform {
        include_r_factor,
        ..Default::default()
    };
    transform_trajectory(&traj, &omega, &opts).map_err(|e| e.in_stage("transform"))
}

fn spectrum_cmd(args: &SpectrumArgs) -> Result<()> {
    let spec = pipeline_spectrum(&args.model, &args.grid, args.include_r_factor)?;
    let n = spec.len();
    println!(
        "{n} points, omega in [{}, {}], ln F from {:.4} to {:.4}",
        spec.omega[0],
        spec.omega[n - 1],
        spec.ln_f_mag[0],
        spec.ln_f_mag[n - 1]
    );
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &args.out {
        if out.extension().is_some_and(|e| e == "json") {
            spec.write_json(out)?;
        } else {
            spec.write_csv(out)?;
        }
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn fit_cmd(args: &FitArgs) -> Result<()> {
    let method: MethodChoice = args.method.parse()?;
    let (spec, eta) = match &args.spectrum {
        Some(path) => (Spectrum::read(path)?, None),
        None => (pipeline_spectrum(&args.model, &args.grid, false)?, Some(args.model.eta)),
    };
    let (lo, hi) = (args.grid.omega_min, args.grid.omega_max);
    emit_settings("fit", &json!({ "omega_min": lo, "omega_max": hi, "method": method }))?;
    let fit = fit_with(&spec, lo, hi, method, eta).map_err(|e| e.in_stage("fit"))?;
    let (pow, _) = omega_alpha_measure(hi, fit.alpha.max(f64::MIN_POSITIVE))?;
    println!(
        "alpha = {:.4} ({} method, {} points, rms residual {:.4})",
        fit.alpha, fit.method, fit.n_points, fit.rms_residual
    );
    println!("omega_max^alpha = {pow:.3}");
    println!(
        "oscillation amplitude = {:.4}",
        oscillation_amplitude(&spec, lo, hi)
    );
    if fit.is_nonlinear() {
        eprintln!("warning: ln ln F is not linear in ln omega over this window");
    }
    if let Some(out) = &args.out {
        write_json(out, &fit)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn sweep_cmd(args: &SweepArgs, seedless: bool) -> Result<()> {
    let mut config = match (&args.preset, &args.config) {
        (Some(p), None) => SweepConfig::preset(p)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            SweepConfig::from_json(&text)?
        }
        _ => return Err(Error::domain("give exactly one of --preset or --config")),
    };
    if let Some(n) = args.threads {
        config.threads = Some(n);
    }
    if let Some(n) = args.points {
        config.points_per_window = n;
    }
    if let Some(m) = &args.method {
        config.method = m.parse()?;
    }
    config.output_dir = Some(args.outdir.clone());
    emit_settings("sweep", &config)?;
    let rows = run_table(&config)?;
    println!(
        "{:>9} {:>9} {:>5} {:>4} {:>8} {:>8} {:>8} {:>7} {:>8} {:>8}  flags",
        "n0", "c", "r", "eta", "w_min", "w_max", "alpha", "method", "w^alpha", "osc"
    );
    for r in &rows {
        let f = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
        println!(
            "{:>9.2e} {:>9.2e} {:>5} {:>4} {:>8} {:>8} {:>8} {:>7} {:>8} {:>8}  {}",
            r.params.n0,
            r.params.c,
            r.params.r,
            r.params.eta,
            r.omega_min,
            r.omega_max,
            f(r.alpha, 4),
            r.method.map(|m| m.to_string()).unwrap_or_else(|| "-".into()),
            f(r.omega_max_pow_alpha, 2),
            f(r.osc_fraction, 4),
            r.flags.join(";")
        );
        if let Some(e) = &r.error {
            eprintln!("row failed: {e}");
        }
    }
    let dir = write_outputs(&config, &rows, &args.outdir, seedless)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn emit_estimate(value: serde_json::Value, out: &Option<PathBuf>) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&value)?);
    if let Some(out) = out {
        write_json(out, &value)?;
    }
    Ok(())
}

fn estimate_cmd(cmd: &EstimateCommand) -> Result<()> {
    match cmd {
        EstimateCommand::Tail(a) => {
            let p = TailParams::new(a.alpha, a.b, a.c0)?;
            let mut v = json!({ "inputs": { "alpha": a.alpha, "b": a.b, "c0": a.c0, "tau": a.tau }, "relative_asymptotic": true });
            if let Some(u) = a.u {
                v["inputs"]["u"] = json!(u);
                v["pdf"] = json!(tail_pdf(u, &p)?);
                v["ccdf"] = json!(tail_ccdf(u, &p)?);
                v["dominant_frequency"] = json!(dominant_frequency(u, a.tau)?);
            }
            if let Some(w) = a.omega_max {
                let (pow, e) = omega_alpha_measure(w, a.alpha)?;
                v["inputs"]["omega_max"] = json!(w);
                v["omega_max_pow_alpha"] = json!(pow);
                v["exp_neg_omega_max_pow_alpha"] = json!(e);
            }
            if a.u.is_none() && a.omega_max.is_none() {
                return Err(Error::domain("give --u and/or --omega-max"));
            }
            emit_estimate(v, &a.out)
        }
        EstimateCommand::Scattering(a) => {
            let ratio = scattering_ratio(a.u, a.pulse_length_um, a.sound_speed, a.wavelength_nm, a.temperature)?;
            let v = json!({
                "inputs": {
                    "u": a.u,
                    "pulse_length_um": a.pulse_length_um,
                    "sound_speed_mps": a.sound_speed,
                    "wavelength_nm": a.wavelength_nm,
                    "temperature_k": a.temperature,
                },
                "scattering_ratio": ratio,
            });
            emit_estimate(v, &a.out)
        }
        EstimateCommand::Lifetime(a) => {
            let units = lifetime_to_pulse_scale(a.c, a.tau_life, a.lambda)?;
            emit_estimate(serde_json::to_value(units)?, &a.out)
        }
    }
}

/// Returns the exit code: 0 if every property holds, 2 otherwise.
fn verify_cmd(args: &VerifyArgs) -> Result<i32> {
    let settings = VerifySettings {
        nu: args.nu,
        omega_min: args.omega_min,
        omega_max: args.omega_max,
        ..Default::default()
    };
    settings.validate()?;
    emit_settings("verify", &settings)?;
    let report = verify_pump(&settings)?;
    for c in &report.checks {
        println!(
            "[{}] {:<16} {:>12.6}  target {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.target
        );
    }
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(if report.all_passed() { 0 } else { 2 })
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(a).map(|_| 0),
        Command::Spectrum(a) => spectrum_cmd(a).map(|_| 0),
        Command::Fit(a) => fit_cmd(a).map(|_| 0),
        Command::Sweep(a) => sweep_cmd(a, cli.seedless).map(|_| 0),
        Command::Estimate(c) => estimate_cmd(c).map(|_| 0),
        Command::Verify(a) => verify_cmd(a),
    }
}

/// Parses `args` and runs; usage errors exit with 1.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
