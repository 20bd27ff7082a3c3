use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ledrange::accumulation::WindowFrames;
use ledrange::config::KeyValues;
use ledrange::evaluation::{evaluate, DEFAULT_THRESHOLD_M};
use ledrange::filtering::HighPassFilter;
use ledrange::io::{read_events, write_events, BoundsMode, EventFormat, ReadOptions};
use ledrange::pipeline::{estimate_stream, read_estimates_csv, trace_window, write_estimates_csv, PipelineConfig};
use ledrange::synthgen::{bundled_scenario, generate, GroundTruth, ScenarioConfig, BUNDLED_SCENARIOS};
use ledrange::RangeEstimate;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_NO_VALID: u8 = 4;

#[derive(Parser)]
#[command(name = "ledrange", version, about = "Event-camera ranging to an LED bar")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-window distances from an event recording.
    Estimate(EstimateArgs),
    /// Generate a synthetic drive-by recording and its ground truth.
    Simulate(SimulateArgs),
    /// Score estimates against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Event file (`.csv` or EVR1 binary).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Estimate CSV to write.
    #[arg(long)]
    output: PathBuf,
    /// Reject events outside the sensor (default).
    #[arg(long, conflicts_with = "lenient")]
    strict: bool,
    /// Skip events outside the sensor instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Write per-window ROI/split PGMs and POC surfaces here.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Bin,
    Csv,
}

#[derive(Args)]
struct SimulateArgs {
    /// Bundled scenario name or path to a scenario file.
    #[arg(long)]
    scenario: String,
    /// Output prefix; writes `<prefix>.bin` (or `.csv`) and `<prefix>_truth.csv`.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "bin")]
    format: FormatArg,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    estimates: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_M)]
    threshold_m: f64,
    /// Per-window error table CSV.
    #[arg(long)]
    output: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl std::fmt::Display) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), Failure> {
    let kv = KeyValues::load(&a.config).map_err(|e| fail(EXIT_CONFIG, e))?;
    let cfg = PipelineConfig::from_kv(&kv).map_err(|e| fail(EXIT_CONFIG, e))?;
    let opts = ReadOptions {
        geometry: cfg.geometry,
        bounds: if a.lenient {
            BoundsMode::Lenient
        } else {
            BoundsMode::Strict
        },
    };
    let loaded = read_events(&a.input, EventFormat::from_path(&a.input), &opts)
        .map_err(|e| fail(EXIT_INPUT, e))?;
    if loaded.skipped_out_of_bounds > 0 {
        eprintln!("skipped {} out-of-bounds events", loaded.skipped_out_of_bounds);
    }

    let estimates = match &a.dump_dir {
        Some(dir) => estimate_with_dumps(&loaded.stream, &cfg, dir)?,
        None => estimate_stream(&loaded.stream, &cfg),
    };
    let mut out = create(&a.output)?;
    write_estimates_csv(&estimates, &mut out)
        .and_then(|()| out.flush().map_err(csv::Error::from))
        .map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", a.output.display())))?;

    let valid = estimates.iter().filter(|e| e.is_valid()).count();
    eprintln!("{valid}/{} windows valid", estimates.len());
    if valid == 0 {
        return Err(fail(EXIT_NO_VALID, "no window produced a valid distance"));
    }
    Ok(())
}

fn estimate_with_dumps(
    stream: &ledrange::EventStream,
    cfg: &PipelineConfig,
    dir: &Path,
) -> Result<Vec<RangeEstimate>, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", dir.display())))?;
    let io_err = |e: std::io::Error| fail(EXIT_FAILURE, e);
    let filtered = HighPassFilter::new(stream.geometry(), cfg.high_pass).filter_iter(stream.events().iter().copied());
    let mut estimates = Vec::new();
    for frame in WindowFrames::new(filtered, stream.geometry(), cfg.accumulate) {
        let (est, trace) = trace_window(frame, cfg);
        let stem = format!("window_{:012}", est.window_start_us);
        if let Some(roi) = &trace.roi {
            roi.write_pgm(create(&dir.join(format!("{stem}_roi.pgm")))?).map_err(io_err)?;
        }
        if let Some(s) = &trace.split {
            s.upper.write_pgm(create(&dir.join(format!("{stem}_upper.pgm")))?).map_err(io_err)?;
            s.lower.write_pgm(create(&dir.join(format!("{stem}_lower.pgm")))?).map_err(io_err)?;
        }
        if let Some(g) = &trace.surface {
            g.write_csv(create(&dir.join(format!("{stem}_poc.csv")))?).map_err(io_err)?;
        }
        estimates.push(est);
    }
    Ok(estimates)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let text = match bundled_scenario(&a.scenario) {
        Some(t) => t.to_string(),
        None => std::fs::read_to_string(&a.scenario).map_err(|e| {
            let names: Vec<&str> = BUNDLED_SCENARIOS.iter().map(|(n, _)| *n).collect();
            fail(
                EXIT_CONFIG,
                format!("{}: {e} (bundled scenarios: {})", a.scenario, names.join(", ")),
            )
        })?,
    };
    let mut cfg = ScenarioConfig::parse(&text).map_err(|e| fail(EXIT_CONFIG, e))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let (stream, truth) = generate(&cfg);

    let (ext, format) = match a.format {
        FormatArg::Bin => ("bin", EventFormat::Bin),
        FormatArg::Csv => ("csv", EventFormat::Csv),
    };
    let prefix = a.output.to_string_lossy();
    let events_path = PathBuf::from(format!("{prefix}.{ext}"));
    let truth_path = PathBuf::from(format!("{prefix}_truth.csv"));
    write_events(&stream, &events_path, format).map_err(|e| fail(EXIT_FAILURE, e))?;
    let mut out = create(&truth_path)?;
    truth
        .write_csv(&mut out)
        .and_then(|()| out.flush().map_err(csv::Error::from))
        .map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", truth_path.display())))?;
    eprintln!(
        "wrote {} events to {} and {} windows to {}",
        stream.len(),
        events_path.display(),
        truth.windows.len(),
        truth_path.display()
    );
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), Failure> {
    let open = |p: &Path| File::open(p).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", p.display())));
    let estimates = read_estimates_csv(open(&a.estimates)?)
        .map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", a.estimates.display())))?;
    let truth = GroundTruth::read_csv(open(&a.truth)?)
        .map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", a.truth.display())))?;
    let report = evaluate(&estimates, &truth, a.threshold_m).map_err(|e| fail(EXIT_INPUT, e))?;
    println!("{report}");
    if let Some(path) = &a.output {
        let mut out = create(path)?;
        report
            .write_csv(&mut out)
            .and_then(|()| out.flush().map_err(csv::Error::from))
            .map_err(|e| fail(EXIT_FAILURE, format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
