use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use fairmon_core::domain::{read_candidates_csv, GroupSelector, Level, MetricKind, UnitKey};
use fairmon_core::mpc::{TcpTransport, TripleStore};
use fairmon_core::pipeline::{
    build_snapshot_body, deal_pair, export_report, run_once, run_party, run_periodic, triple_budget, MonitoringSnapshot,
    PartyInputs, PipelineConfig, PipelineError, ReportFormat, RunSettings, Schedule, SnapshotStore, TripleSource,
    SNAPSHOT_STORE_FILE,
};
use fairmon_core::postprocess::{Baseline, IntervalMethod, RuleSet, ThresholdRule, Verdict};
use fairmon_core::simulator::{
    generate, use_case_dataset, SimulationConfig, CANDIDATES_FILE, DEPLOYER_SHARES_FILE, SCHEMA_FILE, TTP_SHARES_FILE,
    USE_CASE_FOCAL_OFFER, USE_CASE_FOCAL_TITLE, USE_CASE_SEED,
};
use fairmon_core::{GroupSchema, Party, ShareStore};

#[derive(Parser)]
#[command(name = "fairmon", version, about = "Privacy-preserving fairness monitoring for ranked hiring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with per-party share stores.
    Simulate(SimulateArgs),
    /// Deal Beaver triples for both parties.
    DealTriples(DealArgs),
    /// Run both parties in-process, once or on an interval.
    Run(RunArgs),
    /// Run one party over TCP.
    ServeParty(ServeArgs),
    /// Render stored snapshots as dashboard JSON or a Markdown report.
    Export(ExportArgs),
    /// Reproduce the illustrative three-offer scenario end to end.
    UseCase(UseCaseArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Full simulation config as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    offers: Option<usize>,
    #[arg(long)]
    min_size: Option<usize>,
    #[arg(long)]
    max_size: Option<usize>,
    #[arg(long)]
    donation_rate: Option<f64>,
}

#[derive(Args, Clone)]
struct SettingsArgs {
    /// Full run settings as JSON; flags below override it.
    #[arg(long)]
    settings: Option<PathBuf>,
    /// Threshold rules JSON.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    k_min: Option<u64>,
    /// Cutoff for Skew@k and DRD@k.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long, value_enum)]
    interval: Option<IntervalArg>,
    #[arg(long)]
    lookback_days: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntervalArg {
    Wald,
    Wilson,
}

impl SettingsArgs {
    fn resolve(&self) -> anyhow::Result<RunSettings> {
        let mut s = match &self.settings {
            Some(p) => serde_json::from_slice(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?,
            None => RunSettings::default(),
        };
        if let Some(p) = &self.rules {
            s.rules = RuleSet::from_json_file(p).map_err(PipelineError::from)?;
        }
        if let Some(v) = self.k_min {
            s.metrics.k_min = v;
        }
        if let Some(v) = self.k {
            s.metrics.k = v;
        }
        if let Some(v) = self.z {
            s.intervals.z_alpha = v;
        }
        if let Some(m) = self.interval {
            s.intervals.method = match m {
                IntervalArg::Wald => IntervalMethod::Wald,
                IntervalArg::Wilson => IntervalMethod::Wilson,
            };
        }
        if let Some(v) = self.lookback_days {
            s.lookback_days = v;
        }
        Ok(s)
    }
}

#[derive(Args)]
struct InputArgs {
    /// Directory holding the files written by `simulate`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl InputArgs {
    fn path(&self, explicit: &Option<PathBuf>, file: &str) -> anyhow::Result<PathBuf> {
        match (explicit, &self.data) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(dir)) => Ok(dir.join(file)),
            (None, None) => Err(PipelineError::Config(format!("pass --data or the path for {file}")).into()),
        }
    }

    fn candidates(&self) -> anyhow::Result<PathBuf> {
        self.path(&self.candidates, CANDIDATES_FILE)
    }

    fn schema(&self) -> anyhow::Result<PathBuf> {
        self.path(&self.schema, SCHEMA_FILE)
    }
}

#[derive(Args)]
struct DealArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    settings: SettingsArgs,
    #[arg(long)]
    out_deployer: PathBuf,
    #[arg(long)]
    out_ttp: PathBuf,
    /// Number of triples; computed from the candidate file when omitted.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    as_of: Option<NaiveDate>,
    /// Reproducible dealing for tests and demos only.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    settings: SettingsArgs,
    #[arg(long)]
    deployer_shares: Option<PathBuf>,
    #[arg(long)]
    ttp_shares: Option<PathBuf>,
    /// Pre-dealt triple files; dealt in-process when omitted.
    #[arg(long, requires = "triples_ttp")]
    triples_deployer: Option<PathBuf>,
    #[arg(long, requires = "triples_deployer")]
    triples_ttp: Option<PathBuf>,
    /// Seed for in-process triple dealing (tests and demos only).
    #[arg(long)]
    seed: Option<u64>,
    /// Snapshot store directory.
    #[arg(long)]
    out: PathBuf,
    /// Evaluation date; defaults to today.
    #[arg(long)]
    as_of: Option<NaiveDate>,
    /// Repeat every this many seconds.
    #[arg(long)]
    every: Option<u64>,
    #[arg(long, requires = "every")]
    max_runs: Option<u64>,
    /// Advance the evaluation date by this many days per run.
    #[arg(long, requires = "every")]
    advance_days: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartyArg {
    Deployer,
    Ttp,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, value_enum)]
    party: PartyArg,
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    settings: SettingsArgs,
    /// This party's share store.
    #[arg(long)]
    shares: PathBuf,
    /// This party's triple store.
    #[arg(long)]
    triples: PathBuf,
    /// Address to accept the peer on; prints the bound address to stdout.
    #[arg(long, conflicts_with = "connect", required_unless_present = "connect")]
    listen: Option<String>,
    #[arg(long)]
    connect: Option<String>,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long)]
    as_of: Option<NaiveDate>,
    /// Snapshot store directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Snapshot store directory.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "json")]
    format: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only the most recent N snapshots.
    #[arg(long)]
    last: Option<usize>,
}

#[derive(Args)]
struct UseCaseArgs {
    #[arg(long)]
    out: PathBuf,
    /// Tolerance of the focal-offer rule against its job-title average.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

fn today() -> NaiveDate {
    chrono::Utc::now().date_naive()
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let mut config: SimulationConfig = match &args.config {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?).map_err(|e| PipelineError::Config(e.to_string()))?,
        None => SimulationConfig::default(),
    };
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.offers {
        config.offers = v;
    }
    if let Some(v) = args.min_size {
        config.min_offer_size = v;
    }
    if let Some(v) = args.max_size {
        config.max_offer_size = v;
    }
    if let Some(v) = args.donation_rate {
        config.donation_rate = v;
    }
    let data = generate(&config).map_err(|e| PipelineError::Config(e.to_string()))?;
    data.write_files(&args.out).map_err(|e| PipelineError::Config(e.to_string()))?;
    println!("wrote {} candidates in {} offers to {}", data.records.len(), config.offers, args.out.display());
    Ok(())
}

fn load_schema(path: &Path) -> anyhow::Result<GroupSchema> {
    Ok(GroupSchema::from_json_file(path).map_err(PipelineError::from)?)
}

fn deal(args: DealArgs) -> anyhow::Result<()> {
    let count = match args.count {
        Some(c) => c,
        None => {
            let schema = load_schema(&args.inputs.schema()?)?;
            let records = read_candidates_csv(&args.inputs.candidates()?).map_err(PipelineError::from)?;
            let settings = args.settings.resolve()?;
            triple_budget(&records, &schema, &settings, args.as_of.unwrap_or_else(today))
        }
    };
    let (d, t) = deal_pair(count, args.seed);
    d.write_jsonl(&args.out_deployer).map_err(|e| PipelineError::Config(e.to_string()))?;
    t.write_jsonl(&args.out_ttp).map_err(|e| PipelineError::Config(e.to_string()))?;
    println!("dealt {count} triples (store {})", d.store_id());
    Ok(())
}

fn print_summary(snapshot: &MonitoringSnapshot, store: &Path) {
    let p = &snapshot.body.provenance;
    println!(
        "snapshot {} for {}: {} offers, {} candidates, {} results, {} warnings, {} suppressed, {} linkage gaps -> {}",
        snapshot.run_id,
        snapshot.body.date,
        p.offers_evaluated,
        p.candidates_evaluated,
        snapshot.body.results.len(),
        snapshot.warnings().count(),
        p.suppressed_cells,
        p.linkage_gaps,
        store.join(SNAPSHOT_STORE_FILE).display()
    );
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let data = &args.inputs;
    let config = PipelineConfig {
        candidates: data.candidates()?,
        schema: data.schema()?,
        deployer_shares: data.path(&args.deployer_shares, DEPLOYER_SHARES_FILE)?,
        ttp_shares: data.path(&args.ttp_shares, TTP_SHARES_FILE)?,
        rules: None,
        out_dir: args.out.clone(),
        as_of: args.as_of.unwrap_or_else(today),
        settings: args.settings.resolve()?,
        triples: match (&args.triples_deployer, &args.triples_ttp) {
            (Some(d), Some(t)) => TripleSource::Files { deployer: d.clone(), ttp: t.clone() },
            _ => TripleSource::Deal { seed: args.seed },
        },
    };
    match args.every {
        None => {
            let snapshot = run_once(&config)?;
            print_summary(&snapshot, &args.out);
        }
        Some(secs) => {
            let schedule = Schedule {
                interval: Duration::from_secs(secs),
                max_runs: args.max_runs,
                advance_days: args.advance_days,
            };
            let written = run_periodic(config, &schedule, |run, c| info!("run {run} as of {}", c.as_of));
            for s in &written {
                print_summary(s, &args.out);
            }
        }
    }
    Ok(())
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let party = match args.party {
        PartyArg::Deployer => Party::Deployer,
        PartyArg::Ttp => Party::Ttp,
    };
    let schema = load_schema(&args.inputs.schema()?)?;
    let settings = args.settings.resolve()?;
    let records = read_candidates_csv(&args.inputs.candidates()?).map_err(PipelineError::from)?;
    let shares = ShareStore::read_jsonl(&args.shares, party).map_err(PipelineError::from)?;
    let triples = TripleStore::read_jsonl(&args.triples).map_err(|e| PipelineError::Config(e.to_string()))?;
    let as_of = args.as_of.unwrap_or_else(today);
    let timeout = Duration::from_secs(args.timeout_secs);
    let transport = match (&args.listen, &args.connect) {
        (Some(addr), _) => {
            let listener = TcpListener::bind(addr)?;
            println!("listening {}", listener.local_addr()?);
            std::io::stdout().flush()?;
            let (stream, peer) = listener.accept()?;
            info!("peer connected from {peer}");
            TcpTransport::new(stream)?
        }
        (None, Some(addr)) => TcpTransport::connect(addr.as_str(), timeout)?,
        (None, None) => bail!(PipelineError::Config("pass --listen or --connect".into())),
    };
    let inputs = PartyInputs { schema: schema.clone(), records, shares, triples };
    let outcome = run_party(party, transport, inputs, &settings, as_of)?;
    let snapshot = MonitoringSnapshot::new(build_snapshot_body(&outcome, &schema, &settings, as_of));
    match &args.out {
        Some(dir) => {
            SnapshotStore::new(dir)?.append(&snapshot)?;
            print_summary(&snapshot, dir);
        }
        None => println!("{} results, {} warnings", snapshot.body.results.len(), snapshot.warnings().count()),
    }
    Ok(())
}

fn export(args: ExportArgs) -> anyhow::Result<()> {
    let format: ReportFormat = args.format.parse()?;
    let store = SnapshotStore::new(&args.store)?;
    let mut snapshots = store.read_all()?;
    if let Some(n) = args.last {
        snapshots = snapshots.split_off(snapshots.len().saturating_sub(n));
    }
    let doc = export_report(&snapshots, format)?;
    match &args.out {
        Some(p) => std::fs::write(p, doc)?,
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(doc.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                other => other?,
            }
        }
    }
    Ok(())
}

fn use_case(args: UseCaseArgs) -> anyhow::Result<()> {
    let as_of = NaiveDate::from_ymd_opt(2025, 6, 30).expect("valid date");
    let data = use_case_dataset();
    let data_dir = args.out.join("data");
    data.write_files(&data_dir).map_err(|e| PipelineError::Config(e.to_string()))?;
    let female = GroupSelector::from_labels(&data.schema, &[("gender", "female")]).map_err(PipelineError::from)?;
    let rule = ThresholdRule {
        id: "female-representation-vs-title".into(),
        metric: MetricKind::PoolDiversity,
        group: Some(female.clone()),
        baseline: Baseline::JobTitleAverage,
        tolerance: args.tolerance,
        min_n: 1,
        levels: Some(vec![Level::Offer]),
    };
    let rules_path = args.out.join("rules.json");
    RuleSet::new("use-case-1", vec![rule])
        .and_then(|r| r.write_json_file(&rules_path))
        .map_err(PipelineError::from)?;
    let config = PipelineConfig {
        candidates: data_dir.join(CANDIDATES_FILE),
        schema: data_dir.join(SCHEMA_FILE),
        deployer_shares: data_dir.join(DEPLOYER_SHARES_FILE),
        ttp_shares: data_dir.join(TTP_SHARES_FILE),
        rules: Some(rules_path),
        out_dir: args.out.clone(),
        as_of,
        settings: RunSettings::default(),
        triples: TripleSource::Deal { seed: Some(USE_CASE_SEED) },
    };
    let snapshot = run_once(&config)?;
    let find = |unit: UnitKey| {
        snapshot
            .body
            .results
            .iter()
            .find(|r| r.unit == unit && r.metric == MetricKind::PoolDiversity && r.group == female)
            .with_context(|| format!("no female pool diversity result for {unit}"))
    };
    let focal = find(UnitKey::offer(USE_CASE_FOCAL_OFFER))?;
    let title = find(UnitKey::job_title(USE_CASE_FOCAL_TITLE))?;
    let overall = find(UnitKey::overall())?;
    let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}%", v * 100.0));
    println!("focal offer {USE_CASE_FOCAL_OFFER} female representation: {}", pct(focal.value));
    println!("job title {USE_CASE_FOCAL_TITLE} average: {}", pct(title.value));
    println!("platform average: {}", pct(overall.value));
    let verdict = match focal.verdict {
        Verdict::Ok => "ok",
        Verdict::Warning => "warning",
        Verdict::Undefined => "undefined",
        Verdict::Suppressed => "suppressed",
    };
    let delta = focal.checks.first().and_then(|c| c.delta).unwrap_or(f64::NAN);
    println!("verdict vs job title (tolerance {}): {verdict} (delta {delta:+.4})", args.tolerance);
    print_summary(&snapshot, &args.out);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<PipelineError>() {
        Some(e) => e.exit_code() as u8,
        None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::DealTriples(a) => deal(a),
        Command::Run(a) => run(a),
        Command::ServeParty(a) => serve(a),
        Command::Export(a) => export(a),
        Command::UseCase(a) => use_case(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
