//! `ara`: simulate radar cubes, build template databases, detect anchors,
//! calibrate, evaluate and run benchmarks.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ara_bench::experiments::{run_experiment, ExperimentKind, ExperimentSpec};
use ara_core::calibrator::{apply_calibration, estimate_phase_error, mae};
use ara_core::config::{load_scene, ErrorSpec, PipelineConfig};
use ara_core::detector::detect;
use ara_core::io::{
    atomic_write, encode_detection_report, read_cube, read_database, read_phase_vector, write_cube, write_database,
    write_json, write_phase_vector,
};
use ara_core::model::{add_awgn, synthesize_actual, wrap_phase, RadarCube};
use ara_core::ranker::rank;
use ara_core::templates::{build_database, setup_hash, TemplateDatabase};
use ara_core::{Error, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser, Debug)]
#[command(name = "ara", version, about = "Radar array calibration from ambient point-like anchors")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set detector.threshold=0.8`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a cube from a scene file and a phase-error specification.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        /// zeros | uniform:<amp>:seed=<s> | drift:<n>days:seed=<s>[:rate=<r>][:common] | file:<path>
        #[arg(long, default_value = "zeros")]
        errors: String,
        /// Add complex white noise at this SNR relative to the mean sample power.
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the realized phase errors.
        #[arg(long)]
        errors_out: Option<PathBuf>,
    },
    /// Build the template database for the configured grid.
    GenTemplates {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect and rank anchors; writes JSON lines.
    Detect {
        /// Measured cube; falls back to `io.cube`.
        #[arg(long)]
        cube: Option<PathBuf>,
        /// Template database; falls back to `io.database`.
        #[arg(long)]
        db: Option<PathBuf>,
        /// Report destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect, rank and estimate phase errors from the top anchor.
    Calibrate {
        /// Measured cube; falls back to `io.cube`.
        #[arg(long)]
        cube: Option<PathBuf>,
        /// Template database; falls back to `io.database`.
        #[arg(long)]
        db: Option<PathBuf>,
        /// Calibration result as JSON; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Estimated phase errors in binary form.
        #[arg(long)]
        phase_out: Option<PathBuf>,
        /// Corrected cube.
        #[arg(long)]
        corrected: Option<PathBuf>,
    },
    /// Compare estimated phase errors with the truth; writes one CSV row.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded experiment; writes CSV, JSON and gnuplot data.
    Benchmark {
        /// Experiment kind, e.g. distance-sweep.
        #[arg(long, conflicts_with = "spec")]
        kind: Option<String>,
        /// Full experiment specification as JSON.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "bench-out")]
        out_dir: PathBuf,
    },
}

/// Process exit status for a failed command.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Selection(_) => 2,
        Error::StaleDatabase { .. } => 3,
        Error::LowConfidence { .. } => 4,
        _ => 1,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Selection(_) => "no-ara-found",
        Error::StaleDatabase { .. } => "stale-database",
        Error::LowConfidence { .. } => "low-confidence",
        Error::Capacity { .. } => "capacity",
        Error::Config(_) => "config",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
        Error::Shape { .. } => "shape",
        Error::Domain(_) => "domain",
        Error::DegenerateBin(_) => "degenerate-bin",
        Error::DegenerateBeam(_) => "degenerate-beam",
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| Error::Config(format!("override '{assignment}' is not KEY=VALUE")))?;
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last =
        parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("empty key in '{assignment}'")))?;
    let mut table = root;
    for p in parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| Error::Config(format!("'{p}' in '{key}' is not a table")))?;
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut root: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("config: {e}")))?;
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    PipelineConfig::from_toml_str(&toml::to_string(&root).map_err(|e| Error::Config(e.to_string()))?)
}

fn pick(flag: Option<PathBuf>, fallback: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.cloned())
        .ok_or_else(|| Error::Config(format!("no {what} path given on the command line or in [io]")))
}

fn output_path(cfg: &PipelineConfig, flag: Option<PathBuf>, name: &str) -> Option<PathBuf> {
    flag.or_else(|| cfg.io.output_dir.as_ref().map(|d| d.join(name)))
}

/// Loads the cube and database and checks both against the configuration.
fn load_inputs(
    cfg: &PipelineConfig,
    cube: Option<PathBuf>,
    db: Option<PathBuf>,
) -> Result<(RadarCube, TemplateDatabase)> {
    let cube = read_cube(&pick(cube, cfg.io.cube.as_ref(), "cube")?)?;
    let db = read_database(&pick(db, cfg.io.database.as_ref(), "database")?)?;
    db.check_compatible(cube.config(), cube.array())?;
    db.check_hash(setup_hash(&cfg.radar, &cfg.antenna_array()?, &cfg.transform()?))?;
    Ok((cube, db))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => atomic_write(p, |w| Ok(w.write_all(text.as_bytes())?)),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Simulate { scene, errors, snr_db, noise_seed, out, errors_out } => {
            let scene = load_scene(&scene)?;
            let array = cfg.antenna_array()?;
            let errors = ErrorSpec::parse(&errors)?.realize(array.len())?;
            let mut cube = synthesize_actual(&scene, &array, &cfg.radar, &errors)?;
            if let Some(db) = snr_db {
                add_awgn(&mut cube, db, &mut ChaCha8Rng::seed_from_u64(noise_seed));
            }
            let out = pick(out, cfg.io.cube.as_ref(), "output cube")?;
            write_cube(&out, &cube)?;
            if let Some(p) = errors_out {
                write_phase_vector(&p, &errors)?;
            }
            println!(
                "cube={} antennas={} samples={} scatterers={}",
                out.display(),
                cube.num_antennas(),
                cube.num_samples(),
                scene.len()
            );
        }
        Command::GenTemplates { out } => {
            let db = build_database(&cfg.grid_spec()?, &cfg.antenna_array()?, &cfg.radar)?;
            let out = pick(out, cfg.io.database.as_ref(), "output database")?;
            write_database(&out, &db)?;
            println!(
                "database={} templates={} range_bins={} bytes={} setup_hash={:016x}",
                out.display(),
                db.len(),
                db.range_bins().count(),
                db.storage_bytes(),
                db.header().setup_hash
            );
        }
        Command::Detect { cube, db, out } => {
            let (cube, db) = load_inputs(&cfg, cube, db)?;
            let detections = detect(&cube, &db, &cfg.detector)?;
            let ranked = rank(&detections, &cfg.ranker_config())?;
            let mut buf = Vec::new();
            encode_detection_report(&detections, &ranked, &mut buf)?;
            write_text(output_path(&cfg, out, "detections.jsonl").as_deref(), &String::from_utf8_lossy(&buf))?;
            if ranked.is_empty() {
                return Err(Error::Selection(format!("no anchor at similarity >= {}", cfg.detector.threshold)));
            }
        }
        Command::Calibrate { cube, db, out, phase_out, corrected } => {
            let (cube, db) = load_inputs(&cfg, cube, db)?;
            let detections = detect(&cube, &db, &cfg.detector)?;
            let ranked = rank(&detections, &cfg.ranker_config())?;
            let top = ranked
                .first()
                .ok_or_else(|| Error::Selection(format!("no anchor at similarity >= {}", cfg.detector.threshold)))?;
            let result = estimate_phase_error(&cube, top, &cfg.calibrator_config())?;
            match output_path(&cfg, out, "calibration.json") {
                Some(p) => write_json(&p, &result)?,
                None => {
                    println!("{}", serde_json::to_string_pretty(&result).map_err(|e| Error::Format(e.to_string()))?)
                }
            }
            if let Some(p) = phase_out {
                write_phase_vector(&p, &result.estimated_errors)?;
            }
            if let Some(p) = corrected {
                write_cube(&p, &apply_calibration(&cube, &result)?)?;
            }
        }
        Command::Evaluate { estimate, truth, out } => {
            let est = read_phase_vector(&estimate)?;
            let truth = read_phase_vector(&truth)?;
            let m = mae(&est, &truth)?;
            let (e, t) = (est.as_slice(), truth.as_slice());
            let diffs: Vec<f64> = e.iter().zip(t).map(|(a, b)| wrap_phase((a - e[0]) - (b - t[0])).abs()).collect();
            let max = diffs.iter().copied().fold(0.0, f64::max);
            let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len().max(1) as f64).sqrt();
            let uncalibrated = mae(&ara_core::model::PhaseErrorVector::zeros(truth.len()), &truth)?;
            let text = format!(
                "num_antennas,mae_rad,max_abs_rad,rms_rad,uncalibrated_mae_rad\n{},{m},{max},{rms},{uncalibrated}\n",
                truth.len()
            );
            write_text(output_path(&cfg, out, "evaluation.csv").as_deref(), &text)?;
        }
        Command::Benchmark { kind, spec, trials, seed, out_dir } => {
            let mut spec = match (kind, spec) {
                (_, Some(p)) => ExperimentSpec::from_json(&std::fs::read_to_string(&p)?)?,
                (Some(k), None) => ExperimentSpec::new(k.parse::<ExperimentKind>()?),
                (None, None) => return Err(Error::Config("benchmark needs --kind or --spec".into())),
            };
            if let Some(t) = trials {
                spec.trials = t;
            }
            if let Some(s) = seed {
                spec.rng_seed = s;
            }
            let report = run_experiment(&spec)?;
            let paths = report.write_all(&out_dir, spec.kind.name())?;
            for p in paths {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ARA_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("ARA_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Config("ARA_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error code={} kind={} message={message:?}", exit_code(&e), error_kind(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
