// SPDX-License-Identifier: Apache-2.0

//! `photon-recon` command-line front end.
//!
//! Exit codes: 0 success, 1 i/o failure, 2 bad arguments or config,
//! 3 malformed input data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use photon_recon::data::{read_ply_rows, PhotonCube, SensorModel};
use photon_recon::eval::{baseline_xcorr, bench_scaling, evaluate_rows, BenchAxis};
use photon_recon::reconstruct::{reconstruct, ReconConfig};
use photon_recon::simulate::{simulate_cube, sweep_csv, sweep_operating_conditions, SceneSpec};
use photon_recon::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "photon-recon", version, about = "Multi-surface reconstruction from single-photon lidar cubes")]
struct Cli {
    /// Worker threads for the library (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a photon cube from a scene file.
    ///
    /// Next to the cube it writes `<stem>.truth.ply` and the sensor
    /// calibration `<stem>.sensor.cfg`.
    Simulate {
        scene: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rescale to this mean signal photons per pixel (needs --sbr).
        #[arg(long, requires = "sbr")]
        ppp: Option<f64>,
        /// Rescale ambient light to this signal-to-background ratio.
        #[arg(long, requires = "ppp")]
        sbr: Option<f64>,
        /// Simulation report (JSON); printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Estimate a point cloud and background from a cube.
    Reconstruct {
        cube: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        sensor: SensorArg,
        /// Run report (JSON).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Keep wall-clock timings in the report.
        #[arg(long)]
        timings: bool,
        /// Estimated background, one row of pixels per line.
        #[arg(long)]
        background: Option<PathBuf>,
    },
    /// Cross-correlation baseline: one return per nonempty pixel.
    Baseline {
        cube: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        sensor: SensorArg,
    },
    /// Score an estimated cloud against a reference cloud.
    Eval {
        est: PathBuf,
        truth: PathBuf,
        /// Depth tolerance in metres.
        #[arg(long, default_value_t = 0.04)]
        tau: f64,
        /// Column pitch in metres; read from the sensor file otherwise.
        #[arg(long, conflicts_with = "sensor")]
        pitch: Option<f64>,
        #[command(flatten)]
        sensor: SensorArg,
    },
    /// Solver run time against cube size.
    Bench {
        cube: PathBuf,
        /// pixels or active_bins
        #[arg(long, default_value = "active_bins")]
        axis: String,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        sensor: SensorArg,
        /// CSV table; printed to stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Recall over a grid of signal levels and signal-to-background ratios.
    Sweep {
        scene: PathBuf,
        /// Mean signal photons per pixel.
        #[arg(long, value_delimiter = ',', required = true)]
        ppp: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        sbr: Vec<f64>,
        /// Seeds 0..N per cell.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 0.04)]
        tau: f64,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Reconstruction config (key = value).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set max_iters=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ReconConfig> {
        let mut cfg = match &self.config {
            Some(path) => ReconConfig::read(path)?,
            None => ReconConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(clap::Args)]
struct SensorArg {
    /// Sensor calibration; defaults to `<stem>.sensor.cfg` beside the input.
    #[arg(short, long)]
    sensor: Option<PathBuf>,
}

impl SensorArg {
    fn load(&self, beside: &Path) -> Result<SensorModel> {
        let path = match &self.sensor {
            Some(p) => p.clone(),
            None => {
                let p = sibling(beside, "sensor.cfg");
                if !p.exists() {
                    return Err(Error::Argument(format!(
                        "no sensor file given and {} does not exist",
                        p.display()
                    )));
                }
                p
            }
        };
        SensorModel::read_calibration(path)
    }
}

/// `dir/stem.suffix` for `dir/stem.ext`; a trailing `.truth` on the stem is
/// dropped so that truth clouds find their sensor file.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = stem.strip_suffix(".truth").unwrap_or(&stem);
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.into()))?;
    s.push('\n');
    Ok(s)
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            scene,
            output,
            seed,
            ppp,
            sbr,
            report,
        } => {
            let mut spec = SceneSpec::read(&scene)?;
            if let (Some(ppp), Some(sbr)) = (ppp, sbr) {
                spec = spec.calibrated(ppp, sbr)?;
            }
            let (cube, rep) = simulate_cube(&spec, seed)?;
            cube.write(&output)?;
            rep.truth.write_ply(sibling(&output, "truth.ply"))?;
            let calib = match spec.sensor.to_calibration_string(None) {
                Ok(text) => text,
                Err(_) => {
                    let gains = sibling(&output, "gain.txt");
                    std::fs::write(&gains, spec.sensor.gain_map_text())?;
                    let name = gains.file_name().unwrap().to_string_lossy().into_owned();
                    spec.sensor.to_calibration_string(Some(&name))?
                }
            };
            std::fs::write(sibling(&output, "sensor.cfg"), calib)?;
            emit(&json(&rep)?, report.as_deref())
        }
        Command::Reconstruct {
            cube,
            output,
            cfg,
            sensor,
            report,
            timings,
            background,
        } => {
            let config = cfg.load()?;
            let sensor = sensor.load(&cube)?;
            let data = PhotonCube::read(&cube)?;
            let mut out = reconstruct(&data, &sensor, &config)?;
            out.cloud.write_ply(&output)?;
            if let Some(path) = background {
                let mut text = String::new();
                for row in out.background.values().chunks(out.background.n_cols()) {
                    let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    text.push_str(&line.join(" "));
                    text.push('\n');
                }
                std::fs::write(path, text)?;
            }
            if !timings {
                out.report.timings = None;
            }
            if let Some(path) = report {
                std::fs::write(path, json(&out.report)?)?;
            }
            Ok(())
        }
        Command::Baseline { cube, output, sensor } => {
            let sensor = sensor.load(&cube)?;
            let data = PhotonCube::read(&cube)?;
            baseline_xcorr(&data, &sensor)?.write_ply(&output)
        }
        Command::Eval {
            est,
            truth,
            tau,
            pitch,
            sensor,
        } => {
            let pitch = match pitch {
                Some(p) => p,
                None => sensor.load(&truth)?.pixel_pitch(),
            };
            let e = read_ply_rows(&est)?;
            let t = read_ply_rows(&truth)?;
            emit(&json(&evaluate_rows(&e, &t, pitch, tau)?)?, None)
        }
        Command::Bench {
            cube,
            axis,
            levels,
            repeats,
            cfg,
            sensor,
            output,
        } => {
            let axis: BenchAxis = axis.parse()?;
            let config = cfg.load()?;
            let sensor = sensor.load(&cube)?;
            let data = PhotonCube::read(&cube)?;
            let res = bench_scaling(&data, &sensor, &config, axis, &levels, repeats.max(1))?;
            eprintln!(
                "slope = {} s per unit, intercept = {} s, r_squared = {}",
                res.slope, res.intercept, res.r_squared
            );
            emit(&res.to_csv(), output.as_deref())
        }
        Command::Sweep {
            scene,
            ppp,
            sbr,
            seeds,
            tau,
            cfg,
            output,
        } => {
            let config = cfg.load()?;
            let spec = SceneSpec::read(&scene)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let rows = sweep_operating_conditions(&spec, &config, &ppp, &sbr, &seeds, tau)?;
            emit(&sweep_csv(&rows), output.as_deref())
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Argument(_) | Error::Config { .. } => 2,
        e if e.is_data_error() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
