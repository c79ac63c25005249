//! Experiment drivers: metric tables, link sweeps, streaming file codecs, trend checks
//! and the CSV reports they produce.
//!
//! Reports carry a commented header (`# key: value`) with the configuration echo, seeds,
//! tool version and runtime; the CSV body below it depends only on configuration and seeds.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::AmplitudeAlphabet;
use crate::channel::{build_wdm_field, propagate, FftKit, LinkScenario};
use crate::codec::EnumerativeCodec;
use crate::dsp::{air_4d, equalize};
use crate::error::{ExperimentError, ShapingError};
use crate::metrics::{
    edi, generate_amplitudes, generate_stream, windowed_kurtosis, DEFAULT_BLOCKS, DEFAULT_SEED,
    EDI_WINDOW, EDI_WINDOW_SWEEP, KURTOSIS_WINDOW,
};
use crate::pas::{map_frame, MappingStrategy, ShapedFrame};
use crate::scheme::{make_scheme, CalibrationHints, SchemeKind, SchemeSpec};
use crate::stats::{induced_marginals, moments_from_distribution, ExactMoments};

pub const CSV_SCHEMA_VERSION: u32 = 1;

type Res<T> = std::result::Result<T, ExperimentError>;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent sub-seed for the stream identified by `tags`.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// Runs `jobs` on up to `threads` workers (0 = available parallelism). Results keep job order.
pub fn run_parallel<'a, T: Send>(
    jobs: Vec<Box<dyn FnOnce() -> T + Send + 'a>>,
    threads: usize,
) -> Vec<T> {
    let workers = match threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len())
    .max(1);
    let count = jobs.len();
    let slots: Vec<Mutex<Option<Box<dyn FnOnce() -> T + Send + 'a>>>> =
        jobs.into_iter().map(|j| Mutex::new(Some(j))).collect();
    let results: Vec<Mutex<Option<T>>> = (0..count).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let job = slots[i].lock().unwrap().take().expect("job taken once");
                *results[i].lock().unwrap() = Some(job());
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.into_inner().unwrap().expect("job finished"))
        .collect()
}

/// Smoke runs finish in seconds to minutes; full runs are the documented desk-scale ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Smoke,
    Full,
}

impl FromStr for Preset {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Res<Self> {
        match s {
            "smoke" => Ok(Preset::Smoke),
            "full" => Ok(Preset::Full),
            _ => Err(ExperimentError::Config(format!("unknown preset {s}"))),
        }
    }
}

/// CSV table with a commented metadata header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvReport {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

impl CsvReport {
    pub fn new(command: &str, columns: &[&str]) -> Self {
        let mut r = Self {
            header: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        };
        r.meta("tool", concat!("esskit ", env!("CARGO_PKG_VERSION")));
        r.meta("schema", CSV_SCHEMA_VERSION);
        r.meta("command", command);
        r
    }

    pub fn meta(&mut self, key: &str, value: impl Display) {
        self.header.push((key.to_string(), value.to_string()));
    }

    /// Echoes a serializable configuration as TOML.
    pub fn config<T: Serialize>(&mut self, config: &T) -> Res<()> {
        let text = toml::to_string(config).map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.meta("config", text);
        Ok(())
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn body(&self) -> Res<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| ExperimentError::Csv(e.to_string());
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| ExperimentError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| ExperimentError::Csv(e.to_string()))
    }

    pub fn render(&self) -> Res<String> {
        let mut out = String::new();
        for (key, value) in &self.header {
            let mut lines = value.lines();
            match (lines.next(), value.contains('\n')) {
                (Some(first), false) => out.push_str(&format!("# {key}: {first}\n")),
                _ => {
                    out.push_str(&format!("# {key}:\n"));
                    for line in value.lines() {
                        out.push_str(&format!("#   {line}\n"));
                    }
                }
            }
        }
        out.push_str(&self.body()?);
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Res<()> {
        std::fs::write(path, self.render()?).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// The CSV body of a rendered report (header comments removed).
    pub fn body_of(text: &str) -> String {
        text.lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect()
    }

    /// Column names and rows of a rendered report.
    pub fn parse(text: &str) -> Res<(Vec<String>, Vec<Vec<String>>)> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let csv_err = |e: csv::Error| ExperimentError::Csv(e.to_string());
        let columns = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(csv_err)?;
        Ok((columns, rows))
    }
}

fn hints_for(e_max: &BTreeMap<String, u64>, kind: SchemeKind) -> Res<CalibrationHints> {
    let mut hints = CalibrationHints::default();
    for (name, &value) in e_max {
        let k: SchemeKind = name
            .parse()
            .map_err(|e: ShapingError| ExperimentError::Config(e.to_string()))?;
        if k == kind {
            hints.e_max = Some(value);
        }
    }
    Ok(hints)
}

/// A calibrated scheme with its codec and induced amplitude statistics.
#[derive(Debug, Clone)]
pub struct SchemeModel {
    pub spec: SchemeSpec,
    pub codec: EnumerativeCodec,
    /// Position-averaged amplitude distribution.
    pub marginals: Vec<f64>,
    pub moments: ExactMoments,
}

impl SchemeModel {
    pub fn build(
        kind: SchemeKind,
        alphabet: &AmplitudeAlphabet,
        block_length: usize,
        rate: f64,
        hints: CalibrationHints,
    ) -> Res<Self> {
        let scheme = make_scheme(kind, alphabet, block_length, rate, hints)?;
        Self::with_trellis(scheme.spec, scheme.trellis)
    }

    pub fn from_spec(spec: SchemeSpec) -> Res<Self> {
        let trellis = Arc::new(spec.build_trellis()?);
        Self::with_trellis(spec, trellis)
    }

    fn with_trellis(spec: SchemeSpec, trellis: Arc<crate::trellis::BoundedTrellis>) -> Res<Self> {
        let marginals = induced_marginals(&trellis, spec.bits)?.average;
        let moments = moments_from_distribution(&spec.alphabet, &marginals, spec.rate());
        let codec = EnumerativeCodec::with_bits(trellis, spec.bits)?;
        Ok(Self {
            spec,
            codec,
            marginals,
            moments,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.spec.kind
    }
}

// ---------------------------------------------------------------------------------------
// Metric table

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Table1Config {
    pub block_length: usize,
    pub rate: f64,
    pub schemes: Vec<SchemeKind>,
    /// Energy limits by scheme name; other schemes use their default ratio to ESS.
    pub e_max: BTreeMap<String, u64>,
    /// Monte-Carlo blocks for the windowed metrics.
    pub blocks: usize,
    pub seed: u64,
    pub edi_window: usize,
    pub kurtosis_window: usize,
    pub threads: usize,
}

impl Default for Table1Config {
    fn default() -> Self {
        Self {
            block_length: 108,
            rate: 1.5,
            schemes: SchemeKind::ALL.to_vec(),
            e_max: BTreeMap::new(),
            blocks: DEFAULT_BLOCKS,
            seed: DEFAULT_SEED,
            edi_window: EDI_WINDOW,
            kurtosis_window: KURTOSIS_WINDOW,
            threads: 0,
        }
    }
}

impl Table1Config {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Full => Self::default(),
            Preset::Smoke => Self {
                blocks: 4000,
                ..Self::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub scheme: SchemeKind,
    pub block_length: usize,
    pub bits: u64,
    pub e_max: u64,
    pub moments: ExactMoments,
    pub edi: f64,
    pub windowed_kurtosis: f64,
}

pub fn run_table1(cfg: &Table1Config) -> Res<Vec<Table1Row>> {
    if cfg.blocks == 0 {
        return Err(ExperimentError::Config("blocks must be positive".into()));
    }
    let alphabet = AmplitudeAlphabet::qam64();
    let mut jobs: Vec<Box<dyn FnOnce() -> Res<Table1Row> + Send + '_>> = Vec::new();
    for &kind in &cfg.schemes {
        let hints = hints_for(&cfg.e_max, kind)?;
        let alphabet = alphabet.clone();
        jobs.push(Box::new(move || {
            let model = SchemeModel::build(kind, &alphabet, cfg.block_length, cfg.rate, hints)?;
            let stream = generate_stream(&model.codec, cfg.blocks, cfg.seed)?;
            Ok(Table1Row {
                scheme: kind,
                block_length: cfg.block_length,
                bits: model.spec.bits,
                e_max: model.spec.e_max,
                moments: model.moments,
                edi: edi(&stream, cfg.edi_window)?,
                windowed_kurtosis: windowed_kurtosis(&stream, cfg.kurtosis_window)?,
            })
        }));
    }
    run_parallel(jobs, cfg.threads).into_iter().collect()
}

pub const TABLE1_COLUMNS: [&str; 11] = [
    "scheme",
    "N",
    "bits",
    "e_max",
    "mean_1d_energy",
    "var_1d_energy",
    "kurtosis_2d",
    "edi",
    "windowed_kurtosis",
    "rate_loss",
    "entropy",
];

pub fn table1_report(cfg: &Table1Config, rows: &[Table1Row]) -> Res<CsvReport> {
    let mut r = CsvReport::new("table1", &TABLE1_COLUMNS);
    r.config(cfg)?;
    r.meta("seed", cfg.seed);
    for row in rows {
        let m = &row.moments;
        r.push(vec![
            row.scheme.to_string(),
            row.block_length.to_string(),
            row.bits.to_string(),
            row.e_max.to_string(),
            num(m.mean_1d_energy),
            num(m.var_1d_energy),
            num(m.kurtosis_2d),
            num(row.edi),
            num(row.windowed_kurtosis),
            num(m.rate_loss),
            num(m.entropy),
        ]);
    }
    Ok(r)
}

/// Metrics as rows and schemes as columns.
pub fn format_table1(rows: &[Table1Row]) -> String {
    let mut out = format!("{:<22}", "metric");
    for row in rows {
        out.push_str(&format!("{:>17}", row.scheme.name()));
    }
    out.push('\n');
    let metrics: [(&str, fn(&Table1Row) -> String); 7] = [
        ("E_max", |r| r.e_max.to_string()),
        ("mean 1D energy", |r| format!("{:.3}", r.moments.mean_1d_energy)),
        ("1D energy variance", |r| format!("{:.3}", r.moments.var_1d_energy)),
        ("2D kurtosis", |r| format!("{:.3}", r.moments.kurtosis_2d)),
        ("EDI", |r| format!("{:.3}", r.edi)),
        ("windowed kurtosis", |r| format!("{:.3}", r.windowed_kurtosis)),
        ("rate loss", |r| format!("{:.4}", r.moments.rate_loss)),
    ];
    for (name, f) in metrics {
        out.push_str(&format!("{name:<22}"));
        for row in rows {
            out.push_str(&format!("{:>17}", f(row)));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------------------
// Link simulation

/// 4D symbols of one channel: shaped blocks of `model` (the last partial block cut off),
/// uniform signs, mapped at unit grid scale.
pub fn channel_frame(model: &SchemeModel, symbols: usize, seed: u64) -> Res<ShapedFrame> {
    let n = model.spec.block_length;
    let dims = 4 * symbols;
    let mut amps = generate_amplitudes(&model.codec, dims.div_ceil(n), derive_seed(seed, &[0]));
    amps.truncate(dims);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let signs: Vec<bool> = (0..dims).map(|_| rng.random()).collect();
    Ok(map_frame(&[&amps], &signs, MappingStrategy::FourD, 1.0)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkOutcome {
    pub snr_db: f64,
    /// Floored at zero.
    pub air_bits_per_4d: f64,
}

/// One channel realization: every WDM channel carries `model`, the centre one is received.
pub fn simulate_link(model: &SchemeModel, scenario: &LinkScenario, seed: u64) -> Res<LinkOutcome> {
    scenario.validate()?;
    let m = scenario.symbols_per_channel;
    let symbols = (0..scenario.num_channels)
        .map(|c| channel_frame(model, m, derive_seed(seed, &[2, c as u64])).map(|f| f.symbols))
        .collect::<Res<Vec<_>>>()?;
    let mut fft = FftKit::new();
    let mut field = build_wdm_field(scenario, &symbols, &mut fft)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3]));
    propagate(&mut field, scenario, &mut fft, &mut rng)?;
    let ch = scenario.center_channel();
    let report = equalize(&field, scenario, ch, &symbols[ch], &mut fft)?;
    let air = air_4d(
        &report.equalized,
        &symbols[ch],
        &model.spec.alphabet,
        &model.marginals,
        model.moments.rate_loss,
    )?;
    Ok(LinkOutcome {
        snr_db: report.snr_db,
        air_bits_per_4d: air.max(0.0),
    })
}

/// One CSV row of a link sweep; `realization == None` marks the mean over realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRow {
    pub scheme: SchemeKind,
    pub block_length: usize,
    pub power_dbm: f64,
    pub realization: Option<usize>,
    pub seed: u64,
    pub snr_db: f64,
    pub air_bits_per_4d: f64,
    pub edi: Option<f64>,
}

struct LinkJob {
    model: usize,
    power_dbm: f64,
    realization: usize,
}

fn run_link_jobs(
    models: &[SchemeModel],
    base: &LinkScenario,
    jobs: Vec<LinkJob>,
    realizations: usize,
    seed: u64,
    threads: usize,
) -> Res<Vec<LinkRow>> {
    let tasks: Vec<Box<dyn FnOnce() -> Res<LinkRow> + Send + '_>> = jobs
        .into_iter()
        .map(|job| {
            Box::new(move || {
                let model = &models[job.model];
                let mut scenario = base.clone();
                scenario.launch_power_dbm = job.power_dbm;
                let s = derive_seed(seed, &[job.realization as u64]);
                let out = simulate_link(model, &scenario, s)?;
                Ok(LinkRow {
                    scheme: model.kind(),
                    block_length: model.spec.block_length,
                    power_dbm: job.power_dbm,
                    realization: Some(job.realization),
                    seed: s,
                    snr_db: out.snr_db,
                    air_bits_per_4d: out.air_bits_per_4d,
                    edi: None,
                })
            }) as Box<dyn FnOnce() -> Res<LinkRow> + Send + '_>
        })
        .collect();
    let rows = run_parallel(tasks, threads)
        .into_iter()
        .collect::<Res<Vec<_>>>()?;
    let mut out = Vec::with_capacity(rows.len() + rows.len() / realizations.max(1));
    for group in rows.chunks(realizations) {
        out.extend_from_slice(group);
        let k = group.len() as f64;
        out.push(LinkRow {
            realization: None,
            seed,
            snr_db: group.iter().map(|r| r.snr_db).sum::<f64>() / k,
            air_bits_per_4d: group.iter().map(|r| r.air_bits_per_4d).sum::<f64>() / k,
            ..group[0].clone()
        });
    }
    Ok(out)
}

pub const LINK_COLUMNS: [&str; 9] = [
    "scenario",
    "scheme",
    "N",
    "power_dBm",
    "realization",
    "seed",
    "snr_elec_dB",
    "air_bits_per_4d",
    "edi",
];

pub fn link_report<T: Serialize>(
    command: &str,
    scenario: &str,
    cfg: &T,
    seed: u64,
    rows: &[LinkRow],
) -> Res<CsvReport> {
    let mut r = CsvReport::new(command, &LINK_COLUMNS);
    r.config(cfg)?;
    r.meta("seed", seed);
    r.meta(
        "air",
        "mismatched Gaussian metric, i.i.d. per-dimension input, minus 4 x rate loss",
    );
    for row in rows {
        r.push(vec![
            scenario.to_string(),
            row.scheme.to_string(),
            row.block_length.to_string(),
            format!("{:.2}", row.power_dbm),
            row.realization.map_or("mean".into(), |i| i.to_string()),
            row.seed.to_string(),
            num(row.snr_db),
            num(row.air_bits_per_4d),
            row.edi.map_or(String::new(), num),
        ]);
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerSweepConfig {
    pub schemes: Vec<SchemeKind>,
    pub block_length: usize,
    pub rate: f64,
    pub powers_dbm: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub threads: usize,
    pub e_max: BTreeMap<String, u64>,
    pub scenario: LinkScenario,
}

impl Default for PowerSweepConfig {
    fn default() -> Self {
        Self {
            schemes: SchemeKind::ALL.to_vec(),
            block_length: 108,
            rate: 1.5,
            powers_dbm: (0..7).map(|i| -2.0 + 2.0 * i as f64).collect(),
            realizations: 2,
            seed: DEFAULT_SEED,
            threads: 0,
            e_max: BTreeMap::new(),
            scenario: LinkScenario::scenario1_desk(),
        }
    }
}

impl PowerSweepConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Full => Self::default(),
            Preset::Smoke => {
                let mut c = Self {
                    powers_dbm: vec![-2.0, 4.0, 10.0],
                    realizations: 1,
                    ..Self::default()
                };
                c.scenario.symbols_per_channel = 1 << 12;
                c
            }
        }
    }
}

pub fn run_sweep_power(cfg: &PowerSweepConfig) -> Res<Vec<LinkRow>> {
    cfg.scenario.validate()?;
    if cfg.realizations == 0 || cfg.powers_dbm.is_empty() {
        return Err(ExperimentError::Config("need powers and realizations".into()));
    }
    let alphabet = AmplitudeAlphabet::qam64();
    let models = cfg
        .schemes
        .iter()
        .map(|&k| SchemeModel::build(k, &alphabet, cfg.block_length, cfg.rate, hints_for(&cfg.e_max, k)?))
        .collect::<Res<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for model in 0..models.len() {
        for &power_dbm in &cfg.powers_dbm {
            for realization in 0..cfg.realizations {
                jobs.push(LinkJob {
                    model,
                    power_dbm,
                    realization,
                });
            }
        }
    }
    run_link_jobs(&models, &cfg.scenario, jobs, cfg.realizations, cfg.seed, cfg.threads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlocklengthConfig {
    pub schemes: Vec<SchemeKind>,
    pub block_lengths: Vec<usize>,
    pub rate: f64,
    /// Launch power; the scenario's own when absent.
    pub power_dbm: Option<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub edi_window: usize,
    /// 4D symbols in the Monte-Carlo EDI estimate.
    pub edi_symbols: usize,
    pub threads: usize,
    pub scenario: LinkScenario,
}

impl Default for BlocklengthConfig {
    fn default() -> Self {
        Self {
            schemes: vec![
                SchemeKind::Ess,
                SchemeKind::Band1d,
                SchemeKind::Band4dLinear,
                SchemeKind::Band4dNonlinear,
            ],
            block_lengths: vec![60, 108, 200, 300],
            rate: 1.5,
            power_dbm: None,
            realizations: 2,
            seed: DEFAULT_SEED,
            edi_window: EDI_WINDOW_SWEEP,
            edi_symbols: 1 << 20,
            threads: 0,
            scenario: LinkScenario::scenario2_desk(),
        }
    }
}

impl BlocklengthConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Full => Self::default(),
            Preset::Smoke => {
                let mut c = Self {
                    block_lengths: vec![60, 108],
                    realizations: 1,
                    edi_symbols: 1 << 16,
                    ..Self::default()
                };
                c.scenario.symbols_per_channel = 1 << 12;
                c
            }
        }
    }
}

pub fn run_sweep_blocklength(cfg: &BlocklengthConfig) -> Res<Vec<LinkRow>> {
    cfg.scenario.validate()?;
    if cfg.realizations == 0 || cfg.block_lengths.is_empty() || cfg.edi_symbols == 0 {
        return Err(ExperimentError::Config(
            "need block lengths, realizations and EDI symbols".into(),
        ));
    }
    let alphabet = AmplitudeAlphabet::qam64();
    let mut keys = Vec::new();
    let mut build: Vec<Box<dyn FnOnce() -> Res<(SchemeModel, f64)> + Send + '_>> = Vec::new();
    for &kind in &cfg.schemes {
        for &n in &cfg.block_lengths {
            keys.push((kind, n));
            let alphabet = alphabet.clone();
            build.push(Box::new(move || {
                let model = SchemeModel::build(kind, &alphabet, n, cfg.rate, CalibrationHints::default())?;
                let blocks = (4 * cfg.edi_symbols).div_ceil(n);
                let stream = generate_stream(&model.codec, blocks, derive_seed(cfg.seed, &[4, n as u64]))?;
                let e = edi(&stream, cfg.edi_window)?;
                Ok((model, e))
            }));
        }
    }
    let built = run_parallel(build, cfg.threads)
        .into_iter()
        .collect::<Res<Vec<_>>>()?;
    let (models, edis): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    let power = cfg.power_dbm.unwrap_or(cfg.scenario.launch_power_dbm);
    let mut jobs = Vec::new();
    for model in 0..models.len() {
        for realization in 0..cfg.realizations {
            jobs.push(LinkJob {
                model,
                power_dbm: power,
                realization,
            });
        }
    }
    let mut rows = run_link_jobs(&models, &cfg.scenario, jobs, cfg.realizations, cfg.seed, cfg.threads)?;
    for row in &mut rows {
        let i = keys
            .iter()
            .position(|&k| k == (row.scheme, row.block_length))
            .expect("row from a built model");
        row.edi = Some(edis[i]);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------------------
// Windowed metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdiConfig {
    pub schemes: Vec<SchemeKind>,
    pub block_lengths: Vec<usize>,
    pub rate: f64,
    pub window: usize,
    pub kurtosis_window: usize,
    /// 4D symbols per estimate.
    pub symbols: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for EdiConfig {
    fn default() -> Self {
        Self {
            schemes: SchemeKind::ALL.to_vec(),
            block_lengths: vec![108],
            rate: 1.5,
            window: EDI_WINDOW,
            kurtosis_window: KURTOSIS_WINDOW,
            symbols: 1 << 20,
            seed: DEFAULT_SEED,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdiRow {
    pub scheme: SchemeKind,
    pub block_length: usize,
    pub edi: f64,
    pub windowed_kurtosis: f64,
}

pub fn run_edi(cfg: &EdiConfig) -> Res<Vec<EdiRow>> {
    let alphabet = AmplitudeAlphabet::qam64();
    let mut jobs: Vec<Box<dyn FnOnce() -> Res<EdiRow> + Send + '_>> = Vec::new();
    for &kind in &cfg.schemes {
        for &n in &cfg.block_lengths {
            let alphabet = alphabet.clone();
            jobs.push(Box::new(move || {
                let model = SchemeModel::build(kind, &alphabet, n, cfg.rate, CalibrationHints::default())?;
                let blocks = (4 * cfg.symbols).div_ceil(n);
                let stream = generate_stream(&model.codec, blocks, derive_seed(cfg.seed, &[4, n as u64]))?;
                Ok(EdiRow {
                    scheme: kind,
                    block_length: n,
                    edi: edi(&stream, cfg.window)?,
                    windowed_kurtosis: windowed_kurtosis(&stream, cfg.kurtosis_window)?,
                })
            }));
        }
    }
    run_parallel(jobs, cfg.threads).into_iter().collect()
}

pub fn edi_report(cfg: &EdiConfig, rows: &[EdiRow]) -> Res<CsvReport> {
    let mut r = CsvReport::new("edi", &["scheme", "N", "window", "edi", "windowed_kurtosis"]);
    r.config(cfg)?;
    r.meta("seed", cfg.seed);
    for row in rows {
        r.push(vec![
            row.scheme.to_string(),
            row.block_length.to_string(),
            cfg.window.to_string(),
            num(row.edi),
            num(row.windowed_kurtosis),
        ]);
    }
    Ok(r)
}

// ---------------------------------------------------------------------------------------
// Streaming file codec

fn bytes_to_bits(data: &[u8]) -> Vec<bool> {
    data.iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
        .collect()
}

fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
        .collect()
}

/// Encodes a byte stream (MSB first) whose bit count is a multiple of `k`.
pub fn encode_bytes(codec: &EnumerativeCodec, data: &[u8]) -> Res<Vec<Vec<u32>>> {
    let k = codec.bits() as usize;
    let bits = bytes_to_bits(data);
    if bits.is_empty() {
        return Ok(Vec::new());
    }
    if k == 0 || bits.len() % k != 0 {
        return Err(ExperimentError::Config(format!(
            "{} input bits are not a multiple of {k} bits per block",
            bits.len()
        )));
    }
    bits.chunks(k)
        .enumerate()
        .map(|(block, chunk)| {
            codec
                .encode_bits(chunk)
                .map(|s| s.into_amplitudes())
                .map_err(|source| ExperimentError::Block { block, source })
        })
        .collect()
}

/// Decodes amplitude blocks back to bytes; the bit total must fill whole bytes.
pub fn decode_blocks(codec: &EnumerativeCodec, blocks: &[Vec<u32>]) -> Res<Vec<u8>> {
    let mut bits = Vec::with_capacity(blocks.len() * codec.bits() as usize);
    for (block, amps) in blocks.iter().enumerate() {
        let decoded = codec
            .decode_bits(amps)
            .map_err(|source| ExperimentError::Block { block, source })?;
        bits.extend(decoded);
    }
    if bits.len() % 8 != 0 {
        return Err(ExperimentError::Config(format!(
            "{} decoded bits do not fill whole bytes",
            bits.len()
        )));
    }
    Ok(bits_to_bytes(&bits))
}

/// One block per line, amplitudes separated by spaces.
pub fn format_amplitudes(blocks: &[Vec<u32>]) -> String {
    blocks
        .iter()
        .map(|b| {
            let line: Vec<String> = b.iter().map(u32::to_string).collect();
            line.join(" ") + "\n"
        })
        .collect()
}

/// Parses whitespace-separated amplitudes into blocks of `block_length`.
pub fn parse_amplitudes(text: &str, block_length: usize) -> Res<Vec<Vec<u32>>> {
    let values = text
        .split_whitespace()
        .map(|t| {
            t.parse::<u32>()
                .map_err(|_| ExperimentError::Config(format!("not an amplitude: {t}")))
        })
        .collect::<Res<Vec<_>>>()?;
    if values.len() % block_length != 0 {
        return Err(ExperimentError::Config(format!(
            "{} amplitudes are not a multiple of the block length {block_length}",
            values.len()
        )));
    }
    Ok(values.chunks(block_length).map(<[u32]>::to_vec).collect())
}

fn read(path: &Path) -> Res<Vec<u8>> {
    std::fs::read(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, data: &[u8]) -> Res<()> {
    std::fs::write(path, data).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Binary file in, amplitude text file out. Returns the number of blocks.
pub fn encode_file(codec: &EnumerativeCodec, input: &Path, output: &Path) -> Res<usize> {
    let blocks = encode_bytes(codec, &read(input)?)?;
    write(output, format_amplitudes(&blocks).as_bytes())?;
    Ok(blocks.len())
}

/// Amplitude text file in, binary file out. Returns the number of blocks.
pub fn decode_file(codec: &EnumerativeCodec, input: &Path, output: &Path) -> Res<usize> {
    let text = String::from_utf8(read(input)?)
        .map_err(|_| ExperimentError::Config("amplitude file is not UTF-8".into()))?;
    let blocks = parse_amplitudes(&text, codec.block_length())?;
    write(output, &decode_blocks(codec, &blocks)?)?;
    Ok(blocks.len())
}

// ---------------------------------------------------------------------------------------
// Checks

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self::new(
            name,
            (value - target).abs() <= tol,
            format!("{value:.4} vs {target} ± {tol}"),
        )
    }
}

/// Reference metric values at N = 108, 1.5 bit/amplitude, in `SchemeKind::ALL` order.
pub const REFERENCE_TABLE: [(SchemeKind, u64, f64, f64, f64, f64, f64, f64); 5] = [
    // scheme, e_max, mean energy, variance, 2D kurtosis, EDI, windowed kurtosis, rate loss
    (SchemeKind::Ess, 860, 7.85, 1.75, 1.87, 3.13, 3.63, 0.03),
    (SchemeKind::Band1d, 996, 9.14, 1.49, 1.71, 0.65, 2.80, 0.13),
    (SchemeKind::Band4dLinear, 948, 8.63, 1.52, 1.69, 0.72, 2.84, 0.097),
    (SchemeKind::Band4dNonlinear, 996, 9.09, 1.45, 1.64, 0.48, 2.69, 0.13),
    (SchemeKind::KurtosisEss, 1156, 8.27, 1.16, 1.57, 3.34, 3.17, 0.07),
];

fn row_of(rows: &[Table1Row], kind: SchemeKind) -> Option<&Table1Row> {
    rows.iter().find(|r| r.scheme == kind)
}

/// Gating checks on the ESS row.
pub fn check_table1_ess(rows: &[Table1Row]) -> Vec<Check> {
    let Some(r) = row_of(rows, SchemeKind::Ess) else {
        return vec![Check::new("ESS row present", false, "no ESS row")];
    };
    let m = &r.moments;
    vec![
        Check::new("ESS e_max", r.e_max == 860, format!("{} vs 860", r.e_max)),
        Check::within("ESS mean 1D energy", m.mean_1d_energy, 7.85, 0.02),
        Check::within("ESS 1D energy variance", m.var_1d_energy, 1.75, 0.02),
        Check::within("ESS 2D kurtosis", m.kurtosis_2d, 1.87, 0.02),
        Check::within("ESS rate loss", m.rate_loss, 0.03, 0.005),
        Check::within("ESS EDI", r.edi, 3.13, 0.15),
    ]
}

fn strictly_increasing(values: &[(SchemeKind, f64)]) -> bool {
    values.windows(2).all(|w| w[0].1 < w[1].1)
}

fn describe(values: &[(SchemeKind, f64)]) -> String {
    values
        .iter()
        .map(|(k, v)| format!("{k}={v:.4}"))
        .collect::<Vec<_>>()
        .join(" < ")
}

/// Ordering checks across all five schemes.
pub fn check_table1_orderings(rows: &[Table1Row]) -> Vec<Check> {
    use SchemeKind::*;
    if SchemeKind::ALL.iter().any(|&k| row_of(rows, k).is_none()) {
        return vec![Check::new("all schemes present", false, "missing rows")];
    }
    let get = |k: SchemeKind, f: fn(&Table1Row) -> f64| (k, f(row_of(rows, k).expect("present")));
    let bits_ok = rows.iter().all(|r| r.bits == 162 || r.block_length != 108);
    let var = |r: &Table1Row| r.moments.var_1d_energy;
    let kess_var = get(KurtosisEss, var).1;
    let min_var = rows
        .iter()
        .filter(|r| r.scheme != KurtosisEss)
        .map(var)
        .fold(f64::INFINITY, f64::min);
    let edi_order = [
        get(Band4dNonlinear, |r| r.edi),
        get(Band1d, |r| r.edi),
        get(Ess, |r| r.edi),
        get(KurtosisEss, |r| r.edi),
    ];
    let rl = |r: &Table1Row| r.moments.rate_loss;
    let rl_order = [get(Ess, rl), get(KurtosisEss, rl), get(Band4dLinear, rl), get(Band1d, rl)];
    let (rl_1d, rl_nl) = (get(Band1d, rl).1, get(Band4dNonlinear, rl).1);
    let close = (rl_1d - rl_nl).abs() <= 0.1 * rl_1d.max(rl_nl);
    vec![
        Check::new("constrained schemes hold k bits", bits_ok, "k = 162 at N = 108"),
        Check::new(
            "K-ESS has the smallest 1D energy variance",
            kess_var < min_var,
            format!("{kess_var:.4} vs next {min_var:.4}"),
        ),
        Check::new("EDI ordering", strictly_increasing(&edi_order), describe(&edi_order)),
        Check::new(
            "rate-loss ordering",
            strictly_increasing(&rl_order) && close,
            format!("{}, BL-1D≈BL-4D-Nonlinear: {rl_1d:.4}/{rl_nl:.4}", describe(&rl_order)),
        ),
    ]
}

/// Non-gating relative deviations from the reference constrained columns.
pub fn table1_deviations(rows: &[Table1Row]) -> Vec<(SchemeKind, &'static str, f64)> {
    let mut out = Vec::new();
    for &(kind, _, mean, var, kurt, e, wk, rl) in &REFERENCE_TABLE {
        if let Some(r) = row_of(rows, kind) {
            let m = &r.moments;
            for (name, got, want) in [
                ("mean_1d_energy", m.mean_1d_energy, mean),
                ("var_1d_energy", m.var_1d_energy, var),
                ("kurtosis_2d", m.kurtosis_2d, kurt),
                ("edi", r.edi, e),
                ("windowed_kurtosis", r.windowed_kurtosis, wk),
                ("rate_loss", m.rate_loss, rl),
            ] {
                out.push((kind, name, (got - want) / want));
            }
        }
    }
    out
}

fn mean_rows(rows: &[LinkRow]) -> impl Iterator<Item = &LinkRow> {
    rows.iter().filter(|r| r.realization.is_none())
}

/// Trend checks on a power sweep.
pub fn check_power_sweep(rows: &[LinkRow]) -> Vec<Check> {
    use SchemeKind::*;
    let mut checks = Vec::new();
    let mut schemes: Vec<SchemeKind> = mean_rows(rows).map(|r| r.scheme).collect();
    schemes.dedup();
    for &k in &schemes {
        let mut curve: Vec<&LinkRow> = mean_rows(rows).filter(|r| r.scheme == k).collect();
        curve.sort_by(|a, b| a.power_dbm.total_cmp(&b.power_dbm));
        let best = curve
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.snr_db.total_cmp(&b.1.snr_db))
            .map_or(0, |(i, _)| i);
        let interior = best > 0 && best + 1 < curve.len();
        checks.push(Check::new(
            format!("{k} interior SNR maximum"),
            interior,
            format!("peak {:.2} dB at {} dBm", curve[best].snr_db, curve[best].power_dbm),
        ));
    }
    let top = mean_rows(rows).map(|r| r.power_dbm).fold(f64::NEG_INFINITY, f64::max);
    let at = |k: SchemeKind| mean_rows(rows).find(|r| r.scheme == k && r.power_dbm == top);
    if let (Some(ess), Some(nl)) = (at(Ess), at(Band4dNonlinear)) {
        let gain = nl.snr_db - ess.snr_db;
        checks.push(Check::new(
            "BL-4D-Nonlinear SNR gain over ESS at top power",
            gain >= 0.3,
            format!("{gain:+.3} dB at {top} dBm"),
        ));
        checks.push(Check::new(
            "BL-4D-Nonlinear AIR above ESS at top power",
            nl.air_bits_per_4d > ess.air_bits_per_4d,
            format!("{:.4} vs {:.4} bit/4D", nl.air_bits_per_4d, ess.air_bits_per_4d),
        ));
    }
    if let Some(kess) = at(KurtosisEss) {
        let bl: Vec<&LinkRow> = [Band1d, Band4dLinear, Band4dNonlinear]
            .into_iter()
            .filter_map(at)
            .collect();
        let worst = bl.iter().map(|r| r.snr_db).fold(f64::INFINITY, f64::min);
        checks.push(Check::new(
            "K-ESS below every BL scheme at top power",
            !bl.is_empty() && kess.snr_db < worst,
            format!("{:.3} dB vs lowest BL {worst:.3} dB", kess.snr_db),
        ));
    }
    checks
}

/// Average ranks (ties share the mean rank).
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Trend checks on a block-length sweep.
pub fn check_blocklength(rows: &[LinkRow]) -> Vec<Check> {
    let mut checks = Vec::new();
    let means: Vec<&LinkRow> = mean_rows(rows).collect();
    let mut ess: Vec<&LinkRow> = means.iter().copied().filter(|r| r.scheme == SchemeKind::Ess).collect();
    ess.sort_by_key(|r| r.block_length);
    let ess_edi: Vec<f64> = ess.iter().map(|r| r.edi.unwrap_or(f64::NAN)).collect();
    checks.push(Check::new(
        "ESS EDI grows with N",
        ess_edi.len() > 1 && ess_edi.windows(2).all(|w| w[0] < w[1]),
        format!("{ess_edi:.3?}"),
    ));
    let bl: Vec<&LinkRow> = means
        .iter()
        .copied()
        .filter(|r| r.scheme.granularity().is_some())
        .collect();
    let worst = bl.iter().filter_map(|r| r.edi).fold(0.0, f64::max);
    checks.push(Check::new(
        "BL EDI stays below 1",
        !bl.is_empty() && worst < 1.0,
        format!("largest {worst:.3}"),
    ));
    let (mut d_snr, mut d_edi) = (Vec::new(), Vec::new());
    for r in &bl {
        if let Some(base) = ess.iter().find(|e| e.block_length == r.block_length) {
            d_snr.push(r.snr_db - base.snr_db);
            d_edi.push(r.edi.unwrap_or(0.0) - base.edi.unwrap_or(0.0));
        }
    }
    let rho = spearman(&d_snr, &d_edi);
    checks.push(Check::new(
        "SNR differences anti-correlate with EDI differences",
        d_snr.len() > 2 && rho < 0.0,
        format!("Spearman {rho:.3} over {} points", d_snr.len()),
    ));
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = derive_seed(1, &[0]);
        assert_eq!(a, derive_seed(1, &[0]));
        assert_ne!(a, derive_seed(1, &[1]));
        assert_ne!(a, derive_seed(2, &[0]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
    }

    #[test]
    fn parallel_keeps_order() {
        let jobs: Vec<Box<dyn FnOnce() -> usize + Send>> =
            (0..20usize).map(|i| Box::new(move || i * i) as Box<dyn FnOnce() -> usize + Send>).collect();
        assert_eq!(run_parallel(jobs, 3), (0..20).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn report_round_trip() {
        let mut r = CsvReport::new("test", &["a", "b"]);
        r.meta("config", "x = 1\ny = 2");
        r.push(vec!["1".into(), num(0.5)]);
        let text = r.render().unwrap();
        assert!(text.starts_with("# tool: esskit"));
        assert!(text.contains("#   y = 2\n"));
        assert_eq!(CsvReport::body_of(&text), r.body().unwrap());
        let (cols, rows) = CsvReport::parse(&text).unwrap();
        assert_eq!(cols, vec!["a", "b"]);
        assert_eq!(rows, vec![vec!["1".to_string(), "0.500000".to_string()]]);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![1.5, 0.0, 1.5]);
    }

    #[test]
    fn byte_codec_round_trip() {
        let model = SchemeModel::build(
            SchemeKind::Ess,
            &AmplitudeAlphabet::qam64(),
            16,
            1.5,
            CalibrationHints::default(),
        )
        .unwrap();
        assert_eq!(model.spec.bits, 24);
        let data: Vec<u8> = (0..30u8).map(|i| i.wrapping_mul(37)).collect();
        let blocks = encode_bytes(&model.codec, &data).unwrap();
        assert_eq!(blocks.len(), 10);
        let text = format_amplitudes(&blocks);
        let parsed = parse_amplitudes(&text, 16).unwrap();
        assert_eq!(decode_blocks(&model.codec, &parsed).unwrap(), data);
        assert!(encode_bytes(&model.codec, &[]).unwrap().is_empty());
        assert!(matches!(
            encode_bytes(&model.codec, &[1, 2]),
            Err(ExperimentError::Config(_))
        ));
    }

    #[test]
    fn configs_round_trip_through_toml() {
        let c = PowerSweepConfig::preset(Preset::Smoke);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<PowerSweepConfig>(&text).unwrap(), c);
        let b: BlocklengthConfig = toml::from_str("block_lengths = [60]\n[scenario]\nspans = 2").unwrap();
        assert_eq!(b.block_lengths, vec![60]);
        assert_eq!(b.scenario.spans, 2);
        let t: Table1Config = toml::from_str("[e_max]\nK-ESS = 1160").unwrap();
        assert_eq!(hints_for(&t.e_max, SchemeKind::KurtosisEss).unwrap().e_max, Some(1160));
    }

    #[test]
    fn degenerate_zero_rate_row() {
        let cfg = Table1Config {
            block_length: 8,
            rate: 0.0,
            schemes: vec![SchemeKind::Ess],
            blocks: 200,
            edi_window: 4,
            kurtosis_window: 4,
            ..Table1Config::default()
        };
        let rows = run_table1(&cfg).unwrap();
        assert_eq!(rows[0].bits, 0);
        assert_eq!(rows[0].moments.var_1d_energy, 0.0);
        assert_eq!(rows[0].edi, 0.0);
    }
}
