//! `alto`: simulate surfaces, ingest recordings, calibrate and locate taps.
//!
//! Scenario settings come from built-in defaults, then `--config`, then each
//! `--set key=value` in order, then `--seed`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alto::calibration::CalibrationProfile;
use alto::config::KeyValues;
use alto::geometry::write_estimates_csv;
use alto::harness::{
    locate_records, read_observations_csv, report_emit, run_calibrate, run_experiment, ExperimentKind, ExperimentSpec,
    ReportFormat,
};
use alto::signal::{export_pcm, ingest_pcm_file, run_detector, write_observations_csv, ChannelMap, Pair};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alto", version, about = "Acoustic tap localization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Key-value scenario file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one scenario key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn key_values(&self) -> Result<KeyValues> {
        let mut kv = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                KeyValues::parse(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => KeyValues::default(),
        };
        for assignment in &self.set {
            kv.set_assignment(assignment).map_err(anyhow::Error::msg)?;
        }
        if let Some(seed) = self.seed {
            kv.set("seed", &seed.to_string());
        }
        Ok(kv)
    }

    fn spec(&self, kind: ExperimentKind) -> Result<ExperimentSpec> {
        Ok(ExperimentSpec::from_kv(kind, &self.key_values()?)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a tap session to one PCM file per device plus a ground-truth CSV.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Grid defaults to use when the config gives none.
        #[arg(long, default_value = "accuracy_2d")]
        kind: ExperimentKind,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Detect taps in a raw PCM recording of one device.
    Ingest {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Sensor pair recorded by the device: left_right (lr) or top_bottom (tb).
        #[arg(long)]
        pair: Pair,
        /// Observations CSV; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Fit per-axis speeds over a simulated calibration sweep.
    Calibrate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Profile file; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also write the calibration report here.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
    },
    /// Locate taps from observation CSVs of both devices.
    Locate {
        #[arg(long, value_name = "FILE")]
        profile: PathBuf,
        /// Estimates CSV; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(required = true, value_name = "OBSERVATIONS")]
        observations: Vec<PathBuf>,
    },
    /// Run one experiment end to end and write its report.
    Experiment {
        kind: ExperimentKind,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Profile for accuracy_2d; calibrates first when omitted.
        #[arg(long, value_name = "FILE")]
        profile: Option<PathBuf>,
        /// Report file; stdout when omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
}

fn read_profile(path: &Path) -> Result<CalibrationProfile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    CalibrationProfile::from_text(&text).with_context(|| format!("parsing profile {}", path.display()))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn simulate(scenario: &ScenarioArgs, kind: ExperimentKind, out: &Path) -> Result<()> {
    let spec = scenario.spec(kind)?;
    let positions: Vec<(f64, f64)> =
        spec.grid.positions.iter().flat_map(|&p| std::iter::repeat_n(p, spec.grid.repetitions)).collect();
    let sim = spec.scenario.simulator(spec.seed)?;
    let rendering = sim.render_session(&positions)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let chunk = spec.scenario.detector.chunk_size;
    for pair in Pair::ALL {
        let chunks: Vec<_> = rendering.stream(pair).chunks(chunk).collect();
        export_pcm(&chunks, out.join(format!("{}.pcm", pair.name())))?;
    }
    let truth = fs::File::create(out.join("ground_truth.csv"))?;
    rendering.truth.write_csv(truth)?;
    for w in &rendering.truth.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("rendered {} taps into {}", positions.len(), out.display());
    Ok(())
}

fn ingest(scenario: &ScenarioArgs, input: &Path, pair: Pair, out: Option<&Path>) -> Result<()> {
    let detector = scenario.spec(ExperimentKind::Accuracy2d)?.scenario.detector;
    let chunks = ingest_pcm_file(input, ChannelMap::for_pair(pair), detector.sample_rate, detector.chunk_size)
        .with_context(|| format!("opening {}", input.display()))?;
    let chunks: Vec<_> = chunks.collect::<Result<_, _>>()?;
    let detections = run_detector(chunks, detector)?;
    let mut bytes = Vec::new();
    write_observations_csv(&mut bytes, &detections)?;
    write_output(out, &bytes)
}

fn calibrate(scenario: &ScenarioArgs, out: Option<&Path>, report: Option<&Path>, format: ReportFormat) -> Result<()> {
    let run = run_calibrate(&scenario.spec(ExperimentKind::Calibrate)?)?;
    let Some(profile) = &run.profile else { bail!("calibration produced no profile") };
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = report {
        report_emit(&run, format, Some(path))?;
    }
    write_output(out, profile.to_text().as_bytes())
}

fn locate(profile: &Path, observations: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let profile = read_profile(profile)?;
    let mut records = Vec::new();
    for path in observations {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        records.extend(read_observations_csv(file).with_context(|| format!("reading {}", path.display()))?);
    }
    let mut rows = Vec::new();
    for (id, result) in locate_records(&records, &profile) {
        match result {
            Ok(estimate) => rows.push((id, estimate)),
            Err(reason) => eprintln!("warning: tap {id}: {reason}"),
        }
    }
    let mut bytes = Vec::new();
    write_estimates_csv(&mut bytes, &rows)?;
    write_output(out, &bytes)
}

fn experiment(
    kind: ExperimentKind,
    scenario: &ScenarioArgs,
    profile: Option<&Path>,
    out: Option<&Path>,
    format: ReportFormat,
) -> Result<()> {
    let spec = scenario.spec(kind)?;
    let profile = profile.map(read_profile).transpose()?;
    let report = run_experiment(&spec, profile.as_ref())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    report_emit(&report, format, out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, kind, out } => simulate(&scenario, kind, &out),
        Command::Ingest { scenario, input, pair, out } => ingest(&scenario, &input, pair, out.as_deref()),
        Command::Calibrate { scenario, out, report, format } => {
            calibrate(&scenario, out.as_deref(), report.as_deref(), format)
        }
        Command::Locate { profile, out, observations } => locate(&profile, &observations, out.as_deref()),
        Command::Experiment { kind, scenario, profile, out, format } => {
            experiment(kind, &scenario, profile.as_deref(), out.as_deref(), format)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
