//! `esskit` command-line tool.
//!
//! Configuration precedence: command-line flags override values from `--config`, which
//! override the preset defaults.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use esskit::channel::LinkScenario;
use esskit::experiments::{self as exp, Check, CsvReport, Preset};
use esskit::scheme::{make_scheme, CalibrationHints, SchemeKind, SchemeSpec};
use esskit::{AmplitudeAlphabet, EnumerativeCodec, ExperimentError};

#[derive(Parser)]
#[command(name = "esskit", version, about = "Energy-bounded sphere shaping experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Metric table for the shaping schemes at one block length.
    Table1(Table1Args),
    /// SNR and AIR versus launch power.
    SweepPower(SweepPowerArgs),
    /// SNR, AIR and EDI versus block length at a fixed power.
    SweepBlocklength(SweepBlocklengthArgs),
    /// Monte-Carlo EDI and windowed kurtosis.
    Edi(EdiArgs),
    /// Calibrate a scheme and print its TOML description.
    Calibrate(CalibrateArgs),
    /// Shape a binary file into amplitude blocks.
    Encode(CodecArgs),
    /// Recover a binary file from amplitude blocks.
    Decode(CodecArgs),
    /// Trellis utilities.
    #[command(subcommand)]
    Trellis(TrellisCommand),
}

#[derive(Subcommand)]
enum TrellisCommand {
    /// Write the trellis of a scheme as JSON.
    Export {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, short)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Default configuration to start from.
    #[arg(long, default_value = "full", value_parser = ["smoke", "full"])]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// CSV output path; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Evaluate the acceptance checks and exit with status 3 on a violation.
    #[arg(long)]
    check: bool,
}

impl Common {
    fn preset(&self) -> Preset {
        self.preset.parse().expect("validated by clap")
    }
}

#[derive(Args)]
struct Table1Args {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    block_length: Option<usize>,
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// Monte-Carlo blocks for the windowed metrics.
    #[arg(long)]
    blocks: Option<usize>,
}

#[derive(Args)]
struct LinkArgs {
    /// Scenario preset name (scenario1, scenario1-desk, scenario2, scenario2-desk) or TOML file.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long)]
    realizations: Option<usize>,
    /// 4D symbols per channel per realization.
    #[arg(long)]
    symbols: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
}

#[derive(Args)]
struct SweepPowerArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    link: LinkArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    powers: Option<Vec<f64>>,
    #[arg(long)]
    block_length: Option<usize>,
}

#[derive(Args)]
struct SweepBlocklengthArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    link: LinkArgs,
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    #[arg(long, allow_hyphen_values = true)]
    power: Option<f64>,
}

#[derive(Args)]
struct EdiArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<usize>>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    symbols: Option<usize>,
}

#[derive(Args, Clone)]
struct SchemeArgs {
    /// Scheme TOML file (as written by `calibrate`); overrides the other scheme flags.
    #[arg(long)]
    scheme_file: Option<PathBuf>,
    #[arg(long, default_value = "ESS")]
    scheme: String,
    #[arg(long, default_value_t = 108)]
    block_length: usize,
    #[arg(long, default_value_t = 1.5)]
    rate: f64,
    #[arg(long)]
    e_max: Option<u64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CodecArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
}

enum Failure {
    Error(ExperimentError),
    Check,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Error(e)
    }
}

type Outcome = Result<(), Failure>;

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn read_text(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T, ExperimentError> {
    toml::from_str(&read_text(path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn base_config<T: DeserializeOwned>(common: &Common, preset: T) -> Result<T, ExperimentError> {
    match &common.config {
        Some(path) => load(path),
        None => Ok(preset),
    }
}

fn parse_schemes(names: &[String]) -> Result<Vec<SchemeKind>, ExperimentError> {
    names
        .iter()
        .map(|n| n.parse().map_err(|e: esskit::ShapingError| config_err(e.to_string())))
        .collect()
}

fn scenario_from(arg: &str) -> Result<LinkScenario, ExperimentError> {
    match LinkScenario::preset(arg) {
        Some(s) => Ok(s),
        None => load(Path::new(arg)),
    }
}

fn apply_link(link: &LinkArgs, scenario: &mut LinkScenario, schemes: &mut Vec<SchemeKind>, realizations: &mut usize) -> Result<(), ExperimentError> {
    if let Some(s) = &link.scenario {
        *scenario = scenario_from(s)?;
    }
    if let Some(s) = &link.schemes {
        *schemes = parse_schemes(s)?;
    }
    if let Some(r) = link.realizations {
        *realizations = r;
    }
    if let Some(m) = link.symbols {
        scenario.symbols_per_channel = m;
    }
    if let Some(c) = link.channels {
        scenario.num_channels = c;
    }
    Ok(())
}

fn emit(report: &mut CsvReport, common: &Common, started: Instant) -> Result<(), ExperimentError> {
    report.meta("runtime_s", format!("{:.1}", started.elapsed().as_secs_f64()));
    match &common.out {
        Some(path) => report.write(path),
        None => {
            print!("{}", report.render()?);
            Ok(())
        }
    }
}

fn finish_checks(checks: &[Check], enabled: bool) -> Outcome {
    if !enabled {
        return Ok(());
    }
    for c in checks {
        eprintln!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if checks.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn table1(args: Table1Args) -> Outcome {
    let started = Instant::now();
    let c = &args.common;
    let mut cfg = base_config(c, exp::Table1Config::preset(c.preset()))?;
    if let Some(v) = args.block_length {
        cfg.block_length = v;
    }
    if let Some(v) = args.rate {
        cfg.rate = v;
    }
    if let Some(v) = &args.schemes {
        cfg.schemes = parse_schemes(v)?;
    }
    if let Some(v) = args.blocks {
        cfg.blocks = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.threads {
        cfg.threads = v;
    }
    let rows = exp::run_table1(&cfg)?;
    let mut report = exp::table1_report(&cfg, &rows)?;
    emit(&mut report, c, started)?;
    if c.out.is_some() {
        print!("{}", exp::format_table1(&rows));
    }
    let mut checks = exp::check_table1_ess(&rows);
    if cfg.schemes.len() == SchemeKind::ALL.len() {
        checks.extend(exp::check_table1_orderings(&rows));
    }
    finish_checks(&checks, c.check)
}

fn sweep_power(args: SweepPowerArgs) -> Outcome {
    let started = Instant::now();
    let c = &args.common;
    let mut cfg = base_config(c, exp::PowerSweepConfig::preset(c.preset()))?;
    apply_link(&args.link, &mut cfg.scenario, &mut cfg.schemes, &mut cfg.realizations)?;
    if let Some(p) = &args.powers {
        cfg.powers_dbm = p.clone();
    }
    if let Some(n) = args.block_length {
        cfg.block_length = n;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.threads {
        cfg.threads = v;
    }
    let rows = exp::run_sweep_power(&cfg)?;
    let mut report = exp::link_report("sweep-power", &cfg.scenario.name, &cfg, cfg.seed, &rows)?;
    emit(&mut report, c, started)?;
    finish_checks(&exp::check_power_sweep(&rows), c.check)
}

fn sweep_blocklength(args: SweepBlocklengthArgs) -> Outcome {
    let started = Instant::now();
    let c = &args.common;
    let mut cfg = base_config(c, exp::BlocklengthConfig::preset(c.preset()))?;
    apply_link(&args.link, &mut cfg.scenario, &mut cfg.schemes, &mut cfg.realizations)?;
    if let Some(v) = &args.lengths {
        cfg.block_lengths = v.clone();
    }
    if args.power.is_some() {
        cfg.power_dbm = args.power;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.threads {
        cfg.threads = v;
    }
    let rows = exp::run_sweep_blocklength(&cfg)?;
    let mut report =
        exp::link_report("sweep-blocklength", &cfg.scenario.name, &cfg, cfg.seed, &rows)?;
    emit(&mut report, c, started)?;
    finish_checks(&exp::check_blocklength(&rows), c.check)
}

fn edi(args: EdiArgs) -> Outcome {
    let started = Instant::now();
    let c = &args.common;
    let mut cfg: exp::EdiConfig = base_config(c, exp::EdiConfig::default())?;
    if c.preset() == Preset::Smoke && c.config.is_none() {
        cfg.symbols = 1 << 16;
    }
    if let Some(v) = &args.schemes {
        cfg.schemes = parse_schemes(v)?;
    }
    if let Some(v) = &args.lengths {
        cfg.block_lengths = v.clone();
    }
    if let Some(v) = args.window {
        cfg.window = v;
    }
    if let Some(v) = args.symbols {
        cfg.symbols = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.threads {
        cfg.threads = v;
    }
    let rows = exp::run_edi(&cfg)?;
    let mut report = exp::edi_report(&cfg, &rows)?;
    emit(&mut report, c, started)?;
    Ok(())
}

fn scheme_spec(args: &SchemeArgs) -> Result<(SchemeSpec, Option<std::sync::Arc<esskit::BoundedTrellis>>), ExperimentError> {
    if let Some(path) = &args.scheme_file {
        let spec = SchemeSpec::from_toml(&read_text(path)?)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        return Ok((spec, None));
    }
    let kind: SchemeKind = args
        .scheme
        .parse()
        .map_err(|e: esskit::ShapingError| config_err(e.to_string()))?;
    let hints = CalibrationHints {
        e_max: args.e_max,
        ..CalibrationHints::default()
    };
    let scheme = make_scheme(kind, &AmplitudeAlphabet::qam64(), args.block_length, args.rate, hints)?;
    Ok((scheme.spec, Some(scheme.trellis)))
}

fn codec_for(args: &SchemeArgs) -> Result<EnumerativeCodec, ExperimentError> {
    let (spec, trellis) = scheme_spec(args)?;
    let trellis = match trellis {
        Some(t) => t,
        None => std::sync::Arc::new(spec.build_trellis()?),
    };
    Ok(EnumerativeCodec::with_bits(trellis, spec.bits)?)
}

fn calibrate(args: CalibrateArgs) -> Outcome {
    let (spec, _) = scheme_spec(&args.scheme)?;
    let text = spec.to_toml();
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Table1(a) => table1(a),
        Command::SweepPower(a) => sweep_power(a),
        Command::SweepBlocklength(a) => sweep_blocklength(a),
        Command::Edi(a) => edi(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Encode(a) => codec_for(&a.scheme)
            .and_then(|codec| exp::encode_file(&codec, &a.input, &a.output))
            .map(|n| eprintln!("encoded {n} blocks"))
            .map_err(Failure::from),
        Command::Decode(a) => codec_for(&a.scheme)
            .and_then(|codec| exp::decode_file(&codec, &a.input, &a.output))
            .map(|n| eprintln!("decoded {n} blocks"))
            .map_err(Failure::from),
        Command::Trellis(TrellisCommand::Export { scheme, output }) => codec_for(&scheme)
            .and_then(|codec| {
                let json = serde_json::to_string(&codec.trellis().to_dump())
                    .map_err(|e| config_err(e.to_string()))?;
                std::fs::write(&output, json).map_err(|source| ExperimentError::Io {
                    path: output.display().to_string(),
                    source,
                })
            })
            .map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
