//! Command-line front end: argument/config-file ingestion, the `budget`,
//! `amplify`, `repeater` and `sweep` subcommands, and CSV / JSON result
//! emission.
//!
//! Every run echoes its fully resolved configuration into the output so any
//! result row can be regenerated bit-identically from the emitted file.
//! Exit codes: 0 success, 1 configuration error, 2 computation error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::amplifier::{
    self, amplification_threshold, amplify_mc, bell_expand, circuit_oracle, eta_map, gain,
    herald_summary, DetectorKind, DetectorModel, HeraldClass, QubitAmplitudes, ResourceSplit,
};
use crate::linkbudget::{
    self, ChannelSpec, ImprovementLedger, LedgerEntry, ReceiverSpec, SourceSpec,
};
use crate::repeater::{
    self, expected_time_analytic, simulate_chain, LinkScheme, MemorySpec, RepeaterConfig,
    Strategy,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_COMPUTE: i32 = 2;

#[derive(Debug)]
enum CliError {
    Config(String),
    Compute(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Compute(m) => write!(f, "computation error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "qlink",
    version,
    about = "Photonic quantum-link engineering: loss budgets, heralded amplifiers, repeater chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file; explicit flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic computation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
enum OutputFormat {
    #[default]
    Csv,
    Structured,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Direct-transmission loss and rate arithmetic.
    Budget(BudgetArgs),
    /// Heralded amplifier analysis (analytic, circuit oracle, Monte Carlo).
    Amplify(AmplifyArgs),
    /// Repeater-chain simulation next to its analytic reference.
    Repeater(RepeaterArgs),
    /// Re-run a subcommand over a one-parameter grid, one row per value.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct BudgetArgs {
    /// Fiber attenuation in dB/km.
    #[arg(long)]
    attenuation: Option<f64>,
    /// Span length in km.
    #[arg(long)]
    length: Option<f64>,
    /// Source clock rate in Hz.
    #[arg(long)]
    clock_rate: Option<f64>,
    /// Mean photon number per pulse, in (0, 1].
    #[arg(long)]
    mean_photon: Option<f64>,
    /// Receiver detector efficiency, in (0, 1].
    #[arg(long)]
    detector_efficiency: Option<f64>,
    /// Receiver dark-count rate in counts/s.
    #[arg(long)]
    dark_count_rate: Option<f64>,
    /// Minimum useful rate in s⁻¹; enables the maximum-distance solve.
    #[arg(long)]
    min_rate: Option<f64>,
    /// Improvement ledger as label:dB pairs, e.g. "source:20,detectors:7".
    #[arg(long)]
    ledger: Option<String>,
    /// End-to-end heralded detection efficiency for the DIQIP gate.
    #[arg(long)]
    diqip_efficiency: Option<f64>,
    /// Detection threshold for the DIQIP gate (plausible band 0.7–0.9).
    #[arg(long)]
    diqip_threshold: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct AmplifyArgs {
    /// Resource beam-splitter transmission t².
    #[arg(long)]
    t2: Option<f64>,
    /// Input photon probability |s|².
    #[arg(long)]
    s2: Option<f64>,
    /// Phase of the input photon amplitude, radians.
    #[arg(long)]
    s_phase: Option<f64>,
    /// Heralding detector kind.
    #[arg(long, value_enum)]
    detector: Option<DetectorKindArg>,
    /// Heralding detector efficiency.
    #[arg(long)]
    efficiency: Option<f64>,
    /// Dark-click probability per detector per gate.
    #[arg(long)]
    dark: Option<f64>,
    /// Take herald observables from the optical-circuit oracle instead of
    /// the analytic branches.
    #[arg(long)]
    oracle: Option<bool>,
    /// Emit one row per oracle click pattern instead of the summary row.
    #[arg(long)]
    patterns: Option<bool>,
    /// Run Monte Carlo herald sampling.
    #[arg(long)]
    mc: Option<bool>,
    /// Monte Carlo trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Solve for the amplification threshold t_min.
    #[arg(long)]
    find_threshold: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DetectorKindArg {
    Pnr,
    Threshold,
}

impl From<DetectorKindArg> for DetectorKind {
    fn from(kind: DetectorKindArg) -> Self {
        match kind {
            DetectorKindArg::Pnr => DetectorKind::Pnr,
            DetectorKindArg::Threshold => DetectorKind::Threshold,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
struct RepeaterArgs {
    /// Number of elementary links.
    #[arg(long)]
    links: Option<u32>,
    /// Operating strategy.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Explicit per-mode link success probability (bypasses the physical
    /// link model).
    #[arg(long)]
    p: Option<f64>,
    /// End-to-end distance in km.
    #[arg(long)]
    total_distance: Option<f64>,
    /// Fiber attenuation in dB/km.
    #[arg(long)]
    attenuation: Option<f64>,
    /// Link entanglement scheme.
    #[arg(long, value_enum)]
    scheme: Option<LinkSchemeArg>,
    /// Detector efficiency at the link level.
    #[arg(long)]
    detector_efficiency: Option<f64>,
    /// Source emission probability per attempt.
    #[arg(long)]
    source_success: Option<f64>,
    /// Swap (Bell-measurement) success probability.
    #[arg(long)]
    swap_success: Option<f64>,
    /// Memory write/read efficiency η₀.
    #[arg(long)]
    memory_efficiency: Option<f64>,
    /// Memory storage time τ in seconds ("inf" allowed).
    #[arg(long)]
    tau: Option<f64>,
    /// Multimode capacity M.
    #[arg(long)]
    capacity: Option<u32>,
    /// Memory acceptance bandwidth in Hz.
    #[arg(long)]
    memory_bandwidth: Option<f64>,
    /// Memory recall fidelity.
    #[arg(long)]
    memory_fidelity: Option<f64>,
    /// Photon bandwidth in Hz (must fit in the memory bandwidth).
    #[arg(long)]
    photon_bandwidth: Option<f64>,
    /// Slot duration in seconds (default: link length / fiber light speed).
    #[arg(long)]
    slot_duration: Option<f64>,
    /// Wait for classical swap confirmation across the swapped span.
    #[arg(long)]
    classical_comm: Option<bool>,
    /// Give up a trial after this many slots.
    #[arg(long)]
    max_slots: Option<u64>,
    /// Allow non-power-of-two chains (left-associative swap schedule).
    #[arg(long)]
    allow_left_associative: Option<bool>,
    /// Simulation trials.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum StrategyArg {
    Serial,
    ParallelNomem,
    ParallelMemory,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Serial => Strategy::Serial,
            StrategyArg::ParallelNomem => Strategy::ParallelNoMemory,
            StrategyArg::ParallelMemory => Strategy::ParallelWithMemory,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum LinkSchemeArg {
    Midpoint,
    EndToEnd,
}

impl From<LinkSchemeArg> for LinkScheme {
    fn from(s: LinkSchemeArg) -> Self {
        match s {
            LinkSchemeArg::Midpoint => LinkScheme::MidpointSource,
            LinkSchemeArg::EndToEnd => LinkScheme::EndToEnd,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    /// Parameter to sweep (a flag name of the target subcommand, e.g. t2).
    #[arg(long)]
    param: Option<String>,
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    /// Number of grid points (≥ 1; endpoints included).
    #[arg(long)]
    steps: Option<usize>,
    #[command(subcommand)]
    target: SweepTarget,
}

#[derive(Subcommand, Debug, Clone)]
enum SweepTarget {
    Budget(BudgetArgs),
    Amplify(AmplifyArgs),
    Repeater(RepeaterArgs),
}

// ---------------------------------------------------------------------------
// Config-file model. Unknown keys are errors, not warnings.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    /// Present in echoed configs; must match the invoked subcommand.
    subcommand: Option<String>,
    seed: Option<u64>,
    format: Option<OutputFormat>,
    budget: Option<BudgetParams>,
    amplify: Option<AmplifyParams>,
    repeater: Option<RepeaterParams>,
    sweep: Option<SweepParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BudgetParams {
    attenuation: f64,
    length: f64,
    clock_rate: f64,
    mean_photon: f64,
    detector_efficiency: f64,
    dark_count_rate: f64,
    min_rate: Option<f64>,
    ledger: Option<Vec<LedgerEntry>>,
    diqip_efficiency: Option<f64>,
    diqip_threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AmplifyParams {
    t2: f64,
    s2: f64,
    s_phase: f64,
    detector: DetectorKindArg,
    efficiency: f64,
    dark: f64,
    oracle: bool,
    patterns: bool,
    mc: bool,
    trials: u64,
    find_threshold: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RepeaterParams {
    links: u32,
    strategy: StrategyArg,
    p: Option<f64>,
    total_distance: f64,
    attenuation: f64,
    scheme: LinkSchemeArg,
    detector_efficiency: f64,
    source_success: f64,
    swap_success: f64,
    memory_efficiency: f64,
    #[serde(with = "inf_as_string")]
    tau: f64,
    capacity: u32,
    memory_bandwidth: f64,
    memory_fidelity: f64,
    photon_bandwidth: f64,
    slot_duration: Option<f64>,
    classical_comm: bool,
    max_slots: u64,
    allow_left_associative: bool,
    trials: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepParams {
    param: String,
    from: f64,
    to: f64,
    steps: usize,
    target: String,
}

/// Fully resolved run description: the block echoed into every output.
#[derive(Debug, Clone, Serialize)]
struct EffectiveConfig {
    subcommand: String,
    seed: u64,
    format: OutputFormat,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<BudgetParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplify: Option<AmplifyParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    repeater: Option<RepeaterParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepParams>,
}

impl BudgetParams {
    fn resolve(args: &BudgetArgs, file: Option<&BudgetParams>) -> Result<Self, CliError> {
        let fallback = |field: &'static str, flag: Option<f64>, from_file: Option<f64>, default: Option<f64>| {
            flag.or(from_file).or(default).ok_or_else(|| {
                CliError::Config(format!("budget.{field}: required (flag --{field} or config)"))
            })
        };
        let ledger = match &args.ledger {
            Some(spec) => Some(parse_ledger(spec)?),
            None => file.and_then(|f| f.ledger.clone()),
        };
        Ok(BudgetParams {
            attenuation: fallback("attenuation", args.attenuation, file.map(|f| f.attenuation), None)?,
            length: fallback("length", args.length, file.map(|f| f.length), None)?,
            clock_rate: fallback("clock_rate", args.clock_rate, file.map(|f| f.clock_rate), Some(1e9))?,
            mean_photon: fallback("mean_photon", args.mean_photon, file.map(|f| f.mean_photon), Some(1.0))?,
            detector_efficiency: fallback(
                "detector_efficiency",
                args.detector_efficiency,
                file.map(|f| f.detector_efficiency),
                Some(1.0),
            )?,
            dark_count_rate: fallback(
                "dark_count_rate",
                args.dark_count_rate,
                file.map(|f| f.dark_count_rate),
                Some(0.0),
            )?,
            min_rate: args.min_rate.or(file.and_then(|f| f.min_rate)),
            ledger,
            diqip_efficiency: args.diqip_efficiency.or(file.and_then(|f| f.diqip_efficiency)),
            diqip_threshold: args.diqip_threshold.or(file.and_then(|f| f.diqip_threshold)),
        })
    }
}

impl AmplifyParams {
    fn resolve(args: &AmplifyArgs, file: Option<&AmplifyParams>) -> Result<Self, CliError> {
        let t2 = args
            .t2
            .or(file.map(|f| f.t2))
            .ok_or_else(|| CliError::Config("amplify.t2: required".into()))?;
        let s2 = args
            .s2
            .or(file.map(|f| f.s2))
            .ok_or_else(|| CliError::Config("amplify.s2: required".into()))?;
        Ok(AmplifyParams {
            t2,
            s2,
            s_phase: args.s_phase.or(file.map(|f| f.s_phase)).unwrap_or(0.0),
            detector: args
                .detector
                .or(file.map(|f| f.detector))
                .unwrap_or(DetectorKindArg::Pnr),
            efficiency: args.efficiency.or(file.map(|f| f.efficiency)).unwrap_or(1.0),
            dark: args.dark.or(file.map(|f| f.dark)).unwrap_or(0.0),
            oracle: args.oracle.or(file.map(|f| f.oracle)).unwrap_or(false),
            patterns: args.patterns.or(file.map(|f| f.patterns)).unwrap_or(false),
            mc: args.mc.or(file.map(|f| f.mc)).unwrap_or(false),
            trials: args.trials.or(file.map(|f| f.trials)).unwrap_or(100_000),
            find_threshold: args
                .find_threshold
                .or(file.map(|f| f.find_threshold))
                .unwrap_or(false),
        })
    }

    fn detector_model(&self) -> DetectorModel {
        DetectorModel {
            kind: self.detector.into(),
            efficiency: self.efficiency,
            dark_click_prob: self.dark,
        }
    }
}

impl RepeaterParams {
    fn resolve(args: &RepeaterArgs, file: Option<&RepeaterParams>) -> Result<Self, CliError> {
        let links = args
            .links
            .or(file.map(|f| f.links))
            .ok_or_else(|| CliError::Config("repeater.links: required".into()))?;
        let strategy = args
            .strategy
            .or(file.map(|f| f.strategy))
            .ok_or_else(|| CliError::Config("repeater.strategy: required".into()))?;
        Ok(RepeaterParams {
            links,
            strategy,
            p: args.p.or(file.and_then(|f| f.p)),
            total_distance: args
                .total_distance
                .or(file.map(|f| f.total_distance))
                .unwrap_or(100.0),
            attenuation: args.attenuation.or(file.map(|f| f.attenuation)).unwrap_or(0.2),
            scheme: args.scheme.or(file.map(|f| f.scheme)).unwrap_or(LinkSchemeArg::Midpoint),
            detector_efficiency: args
                .detector_efficiency
                .or(file.map(|f| f.detector_efficiency))
                .unwrap_or(1.0),
            source_success: args
                .source_success
                .or(file.map(|f| f.source_success))
                .unwrap_or(1.0),
            swap_success: args.swap_success.or(file.map(|f| f.swap_success)).unwrap_or(1.0),
            memory_efficiency: args
                .memory_efficiency
                .or(file.map(|f| f.memory_efficiency))
                .unwrap_or(1.0),
            tau: args.tau.or(file.map(|f| f.tau)).unwrap_or(f64::INFINITY),
            capacity: args.capacity.or(file.map(|f| f.capacity)).unwrap_or(1),
            memory_bandwidth: args
                .memory_bandwidth
                .or(file.map(|f| f.memory_bandwidth))
                .unwrap_or(1e9),
            memory_fidelity: args
                .memory_fidelity
                .or(file.map(|f| f.memory_fidelity))
                .unwrap_or(1.0),
            photon_bandwidth: args
                .photon_bandwidth
                .or(file.map(|f| f.photon_bandwidth))
                .unwrap_or(1e7),
            slot_duration: args.slot_duration.or(file.and_then(|f| f.slot_duration)),
            classical_comm: args
                .classical_comm
                .or(file.map(|f| f.classical_comm))
                .unwrap_or(false),
            max_slots: args
                .max_slots
                .or(file.map(|f| f.max_slots))
                .unwrap_or(repeater::DEFAULT_MAX_SLOTS),
            allow_left_associative: args
                .allow_left_associative
                .or(file.map(|f| f.allow_left_associative))
                .unwrap_or(false),
            trials: args.trials.or(file.map(|f| f.trials)).unwrap_or(10_000),
        })
    }

    fn to_config(&self) -> RepeaterConfig {
        RepeaterConfig {
            total_distance_km: self.total_distance,
            num_links: self.links,
            attenuation_db_per_km: self.attenuation,
            link_scheme: self.scheme.into(),
            detector_efficiency: self.detector_efficiency,
            source_success: self.source_success,
            swap_success: self.swap_success,
            slot_duration_s: self.slot_duration,
            classical_comm: self.classical_comm,
            memory: MemorySpec {
                efficiency: self.memory_efficiency,
                storage_time_s: self.tau,
                multimode_capacity: self.capacity,
                bandwidth_hz: self.memory_bandwidth,
                fidelity: self.memory_fidelity,
            },
            photon_bandwidth_hz: self.photon_bandwidth,
            link_success_override: self.p,
            max_slots: self.max_slots,
            allow_left_associative: self.allow_left_associative,
        }
    }
}

/// JSON has no literal for infinity; carry τ = ∞ as the string "inf".
mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            serializer.serialize_f64(*value)
        } else {
            serializer.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(v) => Ok(v),
            Raw::Text(s) => s
                .parse::<f64>()
                .map_err(|_| serde::de::Error::custom(format!("'{s}' is not a duration"))),
        }
    }
}

fn parse_ledger(spec: &str) -> Result<Vec<LedgerEntry>, CliError> {
    spec.split(',')
        .map(|item| {
            let (label, db) = item.split_once(':').ok_or_else(|| {
                CliError::Config(format!("budget.ledger: entry '{item}' is not label:dB"))
            })?;
            let gain_db: f64 = db.trim().parse().map_err(|_| {
                CliError::Config(format!("budget.ledger: '{db}' is not a number"))
            })?;
            Ok(LedgerEntry { label: label.trim().to_string(), gain_db })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Row model: ordered columns so CSV output is stable.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct Row {
    cells: Vec<(String, Value)>,
}

impl Row {
    fn push(&mut self, key: &str, value: Value) {
        self.cells.push((key.to_string(), value));
    }

    fn push_f64(&mut self, key: &str, value: f64) {
        self.push(key, json!(value));
    }

    fn push_opt(&mut self, key: &str, value: Option<f64>) {
        self.push(key, value.map_or(Value::Null, |v| json!(v)));
    }

    fn to_object(&self) -> Value {
        let mut map = Map::new();
        for (k, v) in &self.cells {
            map.insert(k.clone(), v.clone());
        }
        Value::Object(map)
    }
}

#[derive(Debug)]
struct RunOutput {
    config: EffectiveConfig,
    rows: Vec<Row>,
}

/// Entry point used by the binary (and tests). Errors go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/version through this path.
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    if let Some(expected) = &file.subcommand {
        let invoked = match &cli.command {
            Command::Budget(_) => "budget",
            Command::Amplify(_) => "amplify",
            Command::Repeater(_) => "repeater",
            Command::Sweep(_) => "sweep",
        };
        if expected != invoked {
            return Err(CliError::Config(format!(
                "subcommand: config file targets '{expected}' but '{invoked}' was invoked"
            )));
        }
    }
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let format = cli.format.or(file.format).unwrap_or_default();

    let output = match &cli.command {
        Command::Budget(args) => run_budget(args, &file, seed, format)?,
        Command::Amplify(args) => run_amplify(args, &file, seed, format)?,
        Command::Repeater(args) => run_repeater(args, &file, seed, format)?,
        Command::Sweep(args) => run_sweep(args, &file, seed, format)?,
    };

    let rendered = match format {
        OutputFormat::Csv => render_csv(&output),
        OutputFormat::Structured => render_structured(&output),
    };
    match &cli.out {
        Some(path) => std::fs::write(path, rendered)?,
        None => std::io::stdout().write_all(rendered.as_bytes())?,
    }
    Ok(())
}

fn run_budget(
    args: &BudgetArgs,
    file: &FileConfig,
    seed: u64,
    format: OutputFormat,
) -> Result<RunOutput, CliError> {
    let params = BudgetParams::resolve(args, file.budget.as_ref())?;
    let rows = vec![budget_row(&params)?];
    Ok(RunOutput {
        config: EffectiveConfig {
            subcommand: "budget".into(),
            seed,
            format,
            budget: Some(params),
            amplify: None,
            repeater: None,
            sweep: None,
        },
        rows,
    })
}

fn budget_row(params: &BudgetParams) -> Result<Row, CliError> {
    let channel = ChannelSpec::new(params.attenuation, params.length)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let source = SourceSpec { clock_rate_hz: params.clock_rate, mean_photon: params.mean_photon };
    source.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let receiver = ReceiverSpec {
        detector_efficiency: params.detector_efficiency,
        dark_count_rate_hz: params.dark_count_rate,
    };
    receiver.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let mut row = Row::default();
    row.push_f64("attenuation_db_per_km", params.attenuation);
    row.push_f64("length_km", params.length);
    row.push_f64("transmission", linkbudget::transmission(&channel));
    row.push_f64(
        "detection_rate_hz",
        linkbudget::detection_rate(&source, &channel, &receiver),
    );
    row.push_opt(
        "signal_to_dark_ratio",
        linkbudget::signal_to_dark_ratio(&source, &channel, &receiver),
    );
    match params.min_rate {
        Some(min_rate) => {
            let km = linkbudget::max_distance(&source, params.attenuation, &receiver, min_rate)
                .map_err(|e| CliError::Compute(format!("budget.min_rate: {e}")))?;
            row.push_opt("max_distance_km", Some(km));
        }
        None => row.push_opt("max_distance_km", None),
    }
    match &params.ledger {
        Some(entries) => {
            let ledger = ImprovementLedger { entries: entries.clone() };
            row.push_opt("ledger_total_db", Some(ledger.total_db()));
            row.push_opt("ledger_extension_km", Some(ledger.extension_km(params.attenuation)));
        }
        None => {
            row.push_opt("ledger_total_db", None);
            row.push_opt("ledger_extension_km", None);
        }
    }
    match (params.diqip_efficiency, params.diqip_threshold) {
        (Some(eff), Some(threshold)) => {
            let verdict = linkbudget::diqip_feasible(eff, threshold);
            row.push("diqip_feasible", json!(verdict.feasible));
            row.push_opt("diqip_margin", Some(verdict.margin));
            row.push("diqip_threshold_outside_band", json!(verdict.outside_plausible_band));
        }
        (None, None) => {
            row.push("diqip_feasible", Value::Null);
            row.push_opt("diqip_margin", None);
            row.push("diqip_threshold_outside_band", Value::Null);
        }
        _ => {
            return Err(CliError::Config(
                "budget.diqip_efficiency and budget.diqip_threshold must be given together".into(),
            ))
        }
    }
    Ok(row)
}

fn run_amplify(
    args: &AmplifyArgs,
    file: &FileConfig,
    seed: u64,
    format: OutputFormat,
) -> Result<RunOutput, CliError> {
    let params = AmplifyParams::resolve(args, file.amplify.as_ref())?;
    let rows = amplify_rows(&params, seed)?;
    Ok(RunOutput {
        config: EffectiveConfig {
            subcommand: "amplify".into(),
            seed,
            format,
            budget: None,
            amplify: Some(params),
            repeater: None,
            sweep: None,
        },
        rows,
    })
}

fn amplify_rows(params: &AmplifyParams, seed: u64) -> Result<Vec<Row>, CliError> {
    let input = QubitAmplitudes::from_photon_prob(params.s2, params.s_phase)
        .map_err(|e| CliError::Config(format!("amplify.s2: {e}")))?;
    let resource = ResourceSplit::from_t_squared(params.t2)
        .map_err(|e| CliError::Config(format!("amplify.t2: {e}")))?;
    let detector = params.detector_model();
    detector.validate().map_err(|e| CliError::Config(format!("amplify: {e}")))?;

    if params.patterns {
        let outcomes = circuit_oracle(&input, &resource, &detector)
            .map_err(|e| CliError::Compute(e.to_string()))?;
        let mut rows = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            let mut row = Row::default();
            row.push("pattern", json!(o.pattern.to_string()));
            let class = match o.herald {
                HeraldClass::Accepted { outcome, .. } => outcome.to_string(),
                HeraldClass::Rejected => "rejected".to_string(),
            };
            row.push("herald", json!(class));
            row.push_f64("probability", o.probability);
            row.push_f64("photon_probability", o.photon_probability());
            rows.push(row);
        }
        return Ok(rows);
    }

    let branches = bell_expand(&input, &resource);
    let mut row = Row::default();
    row.push_f64("t2", params.t2);
    row.push_f64("s2", params.s2);
    row.push_f64("s_phase", params.s_phase);
    match gain(&input, &resource) {
        Ok(g) => row.push_opt("gain", Some(g)),
        Err(amplifier::AmplifierError::DegenerateInput) => row.push_opt("gain", None),
        Err(e) => return Err(CliError::Compute(e.to_string())),
    }
    row.push_f64("eta_in", input.eta());
    row.push_f64("eta_out", eta_map(input.eta(), &resource));
    for b in &branches {
        row.push_f64(&format!("p_{}", slug(b.outcome)), b.probability);
    }

    if params.oracle {
        let outcomes = circuit_oracle(&input, &resource, &detector)
            .map_err(|e| CliError::Compute(e.to_string()))?;
        let summary = herald_summary(&outcomes);
        row.push("herald_source", json!("oracle"));
        row.push_f64("accepted_herald_prob", summary.accepted_probability);
        row.push_opt("cond_photon_prob", summary.conditional_photon_probability);
        row.push_opt("cond_vacuum_prob", summary.conditional_vacuum_probability);
    } else {
        let accepted = amplifier::accepted_probability(&branches);
        let photon: f64 = branches
            .iter()
            .filter(|b| b.outcome.is_accepting())
            .map(|b| b.probability * b.output.photon_prob())
            .sum();
        row.push("herald_source", json!("analytic"));
        row.push_f64("accepted_herald_prob", accepted);
        let cond = (accepted > 0.0).then(|| photon / accepted);
        row.push_opt("cond_photon_prob", cond);
        row.push_opt("cond_vacuum_prob", cond.map(|c| 1.0 - c));
    }

    if params.find_threshold {
        let t_min = amplification_threshold(&input, &detector)
            .map_err(|e| CliError::Compute(format!("amplify.find_threshold: {e}")))?;
        row.push_opt("t_min", Some(t_min));
        row.push_opt("t_min_squared", Some(t_min * t_min));
    } else {
        row.push_opt("t_min", None);
        row.push_opt("t_min_squared", None);
    }

    if params.mc {
        let stats = amplify_mc(&input, &resource, &detector, params.trials, seed)
            .map_err(|e| CliError::Compute(format!("amplify.mc: {e}")))?;
        row.push_opt("mc_herald_prob", Some(stats.herald_probability));
        row.push_opt("mc_cond_photon_prob", stats.conditional_photon_probability);
        row.push_opt("mc_fidelity_to_analytic", stats.fidelity_to_analytic);
        row.push("mc_trials", json!(stats.trials));
        row.push("mc_accepted", json!(stats.accepted));
    } else {
        row.push_opt("mc_herald_prob", None);
        row.push_opt("mc_cond_photon_prob", None);
        row.push_opt("mc_fidelity_to_analytic", None);
        row.push("mc_trials", Value::Null);
        row.push("mc_accepted", Value::Null);
    }
    Ok(vec![row])
}

fn slug(outcome: amplifier::BellOutcome) -> &'static str {
    match outcome {
        amplifier::BellOutcome::PhiPlus => "phi_plus",
        amplifier::BellOutcome::PhiMinus => "phi_minus",
        amplifier::BellOutcome::PsiPlus => "psi_plus",
        amplifier::BellOutcome::PsiMinus => "psi_minus",
    }
}

fn run_repeater(
    args: &RepeaterArgs,
    file: &FileConfig,
    seed: u64,
    format: OutputFormat,
) -> Result<RunOutput, CliError> {
    let params = RepeaterParams::resolve(args, file.repeater.as_ref())?;
    let rows = vec![repeater_row(&params, seed)?];
    Ok(RunOutput {
        config: EffectiveConfig {
            subcommand: "repeater".into(),
            seed,
            format,
            budget: None,
            amplify: None,
            repeater: Some(params),
            sweep: None,
        },
        rows,
    })
}

fn repeater_row(params: &RepeaterParams, seed: u64) -> Result<Row, CliError> {
    let config = params.to_config();
    config.validate().map_err(|e| CliError::Config(format!("repeater.{e}")))?;
    let strategy: Strategy = params.strategy.into();
    let result = simulate_chain(&config, strategy, params.trials, seed)
        .map_err(|e| CliError::Compute(e.to_string()))?;

    let mut row = Row::default();
    row.push("strategy", json!(strategy.to_string()));
    row.push("links", json!(params.links));
    row.push_f64("link_success_prob", result.link_success_prob);
    row.push_f64("effective_link_prob", result.effective_link_prob);
    row.push_f64("slot_duration_s", result.slot_duration_s);
    row.push("trials", json!(result.trials));
    row.push("delivered", json!(result.delivered));
    row.push_f64("delivered_fraction", result.delivered_fraction);
    let stats = result.slots.as_ref();
    row.push_opt("mean_slots", stats.map(|s| s.mean));
    row.push_opt("variance_slots", stats.map(|s| s.variance));
    row.push_opt("p50_slots", stats.map(|s| s.p50 as f64));
    row.push_opt("p90_slots", stats.map(|s| s.p90 as f64));
    row.push_opt("p99_slots", stats.map(|s| s.p99 as f64));
    row.push_opt("rate_hz", result.end_to_end_rate_hz);
    row.push_opt(
        "analytic_mean_slots",
        Some(expected_time_analytic(
            params.links,
            result.link_success_prob,
            params.capacity,
            strategy,
        )),
    );
    row.push_opt("mean_retrieval_efficiency", result.mean_retrieval_efficiency);
    row.push_f64("fidelity_product", result.fidelity_product);
    row.push_opt("memory_margin", result.memory_margin);
    row.push(
        "schedule",
        result.schedule.map_or(Value::Null, |s| json!(format!("{s:?}"))),
    );
    Ok(row)
}

fn run_sweep(
    args: &SweepArgs,
    file: &FileConfig,
    seed: u64,
    format: OutputFormat,
) -> Result<RunOutput, CliError> {
    let from_file = file.sweep.as_ref();
    let param = args
        .param
        .clone()
        .or_else(|| from_file.map(|s| s.param.clone()))
        .ok_or_else(|| CliError::Config("sweep.param: required".into()))?;
    let from = args
        .from
        .or(from_file.map(|s| s.from))
        .ok_or_else(|| CliError::Config("sweep.from: required".into()))?;
    let to = args
        .to
        .or(from_file.map(|s| s.to))
        .ok_or_else(|| CliError::Config("sweep.to: required".into()))?;
    let steps = args
        .steps
        .or(from_file.map(|s| s.steps))
        .ok_or_else(|| CliError::Config("sweep.steps: required".into()))?;
    if steps == 0 {
        return Err(CliError::Config("sweep.steps: must be at least 1".into()));
    }
    let grid: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                from
            } else {
                from + (to - from) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();

    // The swept parameter need not be supplied as a flag: seed it with the
    // grid start so resolution succeeds, the loop overwrites it anyway.
    let (target_name, base_budget, base_amplify, base_repeater) = match &args.target {
        SweepTarget::Budget(a) => {
            let mut a = a.clone();
            match param.as_str() {
                "attenuation" => a.attenuation = a.attenuation.or(Some(from)),
                "length" => a.length = a.length.or(Some(from)),
                _ => {}
            }
            ("budget", Some(BudgetParams::resolve(&a, file.budget.as_ref())?), None, None)
        }
        SweepTarget::Amplify(a) => {
            let mut a = a.clone();
            match param.as_str() {
                "t2" => a.t2 = a.t2.or(Some(from)),
                "s2" => a.s2 = a.s2.or(Some(from)),
                _ => {}
            }
            ("amplify", None, Some(AmplifyParams::resolve(&a, file.amplify.as_ref())?), None)
        }
        SweepTarget::Repeater(a) => {
            let mut a = a.clone();
            if param == "links" {
                a.links = a.links.or(Some(from as u32));
            }
            ("repeater", None, None, Some(RepeaterParams::resolve(&a, file.repeater.as_ref())?))
        }
    };

    let mut rows = Vec::with_capacity(grid.len());
    for &value in &grid {
        let mut row = Row::default();
        row.push("sweep_param", json!(param.clone()));
        row.push_f64("sweep_value", value);
        let inner = match target_name {
            "budget" => {
                let mut p = base_budget.clone().expect("budget params");
                set_budget_param(&mut p, &param, value)?;
                budget_row(&p)?
            }
            "amplify" => {
                let mut p = base_amplify.clone().expect("amplify params");
                set_amplify_param(&mut p, &param, value)?;
                amplify_rows(&p, seed)?.remove(0)
            }
            _ => {
                let mut p = base_repeater.clone().expect("repeater params");
                set_repeater_param(&mut p, &param, value)?;
                repeater_row(&p, seed)?
            }
        };
        row.cells.extend(inner.cells);
        rows.push(row);
    }

    Ok(RunOutput {
        config: EffectiveConfig {
            subcommand: "sweep".into(),
            seed,
            format,
            budget: base_budget,
            amplify: base_amplify,
            repeater: base_repeater,
            sweep: Some(SweepParams {
                param,
                from,
                to,
                steps,
                target: target_name.to_string(),
            }),
        },
        rows,
    })
}

fn set_budget_param(p: &mut BudgetParams, key: &str, value: f64) -> Result<(), CliError> {
    match key {
        "attenuation" => p.attenuation = value,
        "length" => p.length = value,
        "clock_rate" => p.clock_rate = value,
        "mean_photon" => p.mean_photon = value,
        "detector_efficiency" => p.detector_efficiency = value,
        "dark_count_rate" => p.dark_count_rate = value,
        "min_rate" => p.min_rate = Some(value),
        "diqip_efficiency" => p.diqip_efficiency = Some(value),
        "diqip_threshold" => p.diqip_threshold = Some(value),
        other => {
            return Err(CliError::Config(format!(
                "sweep.param: '{other}' is not a sweepable budget parameter"
            )))
        }
    }
    Ok(())
}

fn set_amplify_param(p: &mut AmplifyParams, key: &str, value: f64) -> Result<(), CliError> {
    match key {
        "t2" => p.t2 = value,
        "s2" => p.s2 = value,
        "s_phase" => p.s_phase = value,
        "efficiency" => p.efficiency = value,
        "dark" => p.dark = value,
        other => {
            return Err(CliError::Config(format!(
                "sweep.param: '{other}' is not a sweepable amplify parameter"
            )))
        }
    }
    Ok(())
}

fn set_repeater_param(p: &mut RepeaterParams, key: &str, value: f64) -> Result<(), CliError> {
    match key {
        "p" => p.p = Some(value),
        "total_distance" => p.total_distance = value,
        "attenuation" => p.attenuation = value,
        "detector_efficiency" => p.detector_efficiency = value,
        "source_success" => p.source_success = value,
        "swap_success" => p.swap_success = value,
        "memory_efficiency" => p.memory_efficiency = value,
        "tau" => p.tau = value,
        "capacity" => p.capacity = value as u32,
        "links" => p.links = value as u32,
        "photon_bandwidth" => p.photon_bandwidth = value,
        other => {
            return Err(CliError::Config(format!(
                "sweep.param: '{other}' is not a sweepable repeater parameter"
            )))
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Rendering. Floats carry 17 significant digits so every row regenerates
// bit-identically.
// ---------------------------------------------------------------------------

fn format_value_csv(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    format!("{f:.16e}")
                } else {
                    n.to_string()
                }
            } else {
                n.to_string()
            }
        }
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

fn render_csv(output: &RunOutput) -> String {
    let mut text = String::new();
    let config_json =
        serde_json::to_string(&output.config).expect("config serializes");
    let _ = writeln!(text, "# config {config_json}");
    if output.rows.is_empty() {
        return text;
    }
    let header: Vec<&str> =
        output.rows[0].cells.iter().map(|(k, _)| k.as_str()).collect();
    let _ = writeln!(text, "{}", header.join(","));
    for row in &output.rows {
        let line: Vec<String> =
            row.cells.iter().map(|(_, v)| format_value_csv(v)).collect();
        let _ = writeln!(text, "{}", line.join(","));
    }
    text
}

fn render_structured(output: &RunOutput) -> String {
    let rows: Vec<Value> = output.rows.iter().map(Row::to_object).collect();
    let doc = json!({
        "config": serde_json::to_value(&output.config).expect("config serializes"),
        "rows": rows,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_parsing() {
        let entries = parse_ledger("source:20, detectors:7,fiber:3").unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[1].label, "detectors");
        assert_eq!(entries[1].gain_db, 7.0);
        assert!(parse_ledger("nodice").is_err());
        assert!(parse_ledger("x:abc").is_err());
    }

    #[test]
    fn sweep_grid_is_inclusive_and_ordered() {
        let args = SweepArgs {
            param: Some("t2".into()),
            from: Some(0.1),
            to: Some(0.9),
            steps: Some(9),
            target: SweepTarget::Amplify(AmplifyArgs {
                s2: Some(0.25),
                ..AmplifyArgs::default()
            }),
        };
        let out = run_sweep(&args, &FileConfig::default(), 0, OutputFormat::Csv).unwrap();
        assert_eq!(out.rows.len(), 9);
        let values: Vec<f64> = out
            .rows
            .iter()
            .map(|r| r.cells[1].1.as_f64().unwrap())
            .collect();
        assert!((values[0] - 0.1).abs() < 1e-12);
        assert!((values[8] - 0.9).abs() < 1e-12);
        assert!(values.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn unknown_sweep_param_is_rejected() {
        let args = SweepArgs {
            param: Some("bogus".into()),
            from: Some(0.0),
            to: Some(1.0),
            steps: Some(2),
            target: SweepTarget::Amplify(AmplifyArgs {
                s2: Some(0.25),
                t2: Some(0.5),
                ..AmplifyArgs::default()
            }),
        };
        let err = run_sweep(&args, &FileConfig::default(), 0, OutputFormat::Csv).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn csv_floats_round_trip() {
        let x = 0.1 + 0.2;
        let formatted = format_value_csv(&json!(x));
        let parsed: f64 = formatted.parse().unwrap();
        assert_eq!(parsed, x);
    }
}
