//! The monitoring run: filter offers to the lookback window, agree on inputs
//! with the peer, evaluate every offer under MPC, post-process, and persist
//! an immutable snapshot.
//!
//! Each party calls [`run_party`] with its own inputs over a shared
//! transport. [`run_in_process`] drives both parties on one machine;
//! [`run_once`] adds file loading and snapshot persistence on top.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{Days, NaiveDate};
use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    read_candidates_csv, validate_offer, CandidateRecord, GroupSchema, MetricAggregate, RecordError, SchemaError,
};
use crate::field::FieldElement;
use crate::metrics::{evaluate_offer, required_triples, MetricConfig, MetricError};
use crate::mpc::transport::Tag;
use crate::mpc::{deal_triples, ChannelTransport, CommStats, MpcError, Session, SharedValue, Transport, TripleStore};
use crate::postprocess::{build_results, IntervalConfig, MetricResult, OfferDirectory, PostprocessError, RuleSet, Verdict};
use crate::sharing::{Party, ShareError, ShareStore};

pub const SNAPSHOT_SCHEMA_VERSION: &str = "1";
pub const PROTOCOL_VERSION: u64 = 1;
pub const DEFAULT_LOOKBACK_DAYS: u32 = 365;
pub const SNAPSHOT_STORE_FILE: &str = "snapshots.jsonl";

/// Abort code sent to the peer when a local step fails mid-protocol.
const ABORT_LOCAL_FAILURE: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("pre-flight check failed: {0}")]
    PreFlight(String),
    #[error("protocol aborted: {0}")]
    Protocol(#[from] MpcError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Io(_) => 2,
            PipelineError::PreFlight(_) => 3,
            PipelineError::Protocol(_) => 4,
        }
    }
}

impl From<SchemaError> for PipelineError {
    fn from(e: SchemaError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<RecordError> for PipelineError {
    fn from(e: RecordError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<ShareError> for PipelineError {
    fn from(e: ShareError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<PostprocessError> for PipelineError {
    fn from(e: PostprocessError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Config(e.to_string())
    }
}

/// Public run parameters. Both parties must hold identical settings; the
/// handshake checks their fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub metrics: MetricConfig,
    pub rules: RuleSet,
    pub intervals: IntervalConfig,
    pub lookback_days: u32,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            metrics: MetricConfig::default(),
            rules: RuleSet::empty(),
            intervals: IntervalConfig::default(),
            lookback_days: DEFAULT_LOOKBACK_DAYS,
        }
    }
}

impl RunSettings {
    pub fn validate(&self, schema: &GroupSchema) -> Result<(), PipelineError> {
        self.metrics
            .validate(schema)
            .map_err(|e: MetricError| PipelineError::Config(e.to_string()))?;
        self.rules.validate()?;
        if self.lookback_days == 0 {
            return Err(PipelineError::Config("lookback must be positive".into()));
        }
        if self.intervals.z_alpha.is_nan() || self.intervals.z_alpha <= 0.0 {
            return Err(PipelineError::Config("z_alpha must be positive".into()));
        }
        Ok(())
    }

    /// Fingerprint of the schema and settings, recorded in every snapshot.
    pub fn fingerprint(&self, schema: &GroupSchema) -> String {
        crate::fingerprint_json(&(schema, self))
    }
}

/// Everything one party brings to a run.
pub struct PartyInputs {
    pub schema: GroupSchema,
    /// Candidate records. Both parties read the same non-sensitive file.
    pub records: Vec<CandidateRecord>,
    pub shares: ShareStore,
    pub triples: TripleStore,
}

/// What a completed run yields to each party.
#[derive(Debug, Clone)]
pub struct PartyOutcome {
    pub aggregates: Vec<MetricAggregate>,
    pub offers: OfferDirectory,
    pub offers_evaluated: u64,
    pub candidates_evaluated: u64,
    /// Records in the window that lacked a share on either side.
    pub linkage_gaps: u64,
    pub triples_used: u64,
    pub stats: CommStats,
}

/// Offers whose latest record falls in `[as_of - lookback, as_of]`, each
/// sorted by rank, in offer-id order.
pub fn offers_in_window(
    records: &[CandidateRecord],
    as_of: NaiveDate,
    lookback_days: u32,
) -> BTreeMap<String, Vec<CandidateRecord>> {
    let start = as_of - Days::new(lookback_days as u64);
    let mut offers: BTreeMap<String, Vec<CandidateRecord>> = BTreeMap::new();
    for r in records {
        offers.entry(r.offer_id.clone()).or_default().push(r.clone());
    }
    offers.retain(|_, recs| {
        let updated = recs.iter().map(|r| r.timestamp).max().expect("nonempty offer");
        start <= updated && updated <= as_of
    });
    for recs in offers.values_mut() {
        recs.sort_by_key(|r| r.rank);
    }
    offers
}

/// Triples a run over `records` consumes, assuming every record is linked.
pub fn triple_budget(
    records: &[CandidateRecord],
    schema: &GroupSchema,
    settings: &RunSettings,
    as_of: NaiveDate,
) -> usize {
    offers_in_window(records, as_of, settings.lookback_days)
        .values()
        .map(|recs| required_triples(schema, &settings.metrics, recs.len()))
        .sum()
}

/// Deals `count` triples for both parties. A seed makes the dealing
/// reproducible and must only be used for tests and demos.
pub fn deal_pair(count: usize, seed: Option<u64>) -> (TripleStore, TripleStore) {
    match seed {
        // store ids stay below 2^60 so they fit one field element
        Some(s) => deal_triples(s >> 4, 0, count, &mut crate::seeded_rng(s)),
        None => {
            let mut rng = crate::secure_rng();
            let id = rng.random::<u64>() >> 4;
            deal_triples(id, 0, count, &mut rng)
        }
    }
}

fn digest_limbs(hex_digest: &str) -> Vec<FieldElement> {
    // three 60-bit limbs of the digest, each below the modulus
    (0..3)
        .map(|i| {
            let chunk = &hex_digest[i * 15..(i + 1) * 15];
            FieldElement::new(u64::from_str_radix(chunk, 16).expect("hex digest"))
        })
        .collect()
}

fn days_since_epoch(d: NaiveDate) -> u64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
    (d - epoch).num_days().max(0) as u64
}

/// Runs the full protocol for one party.
///
/// Steps: local validation, handshake (protocol version, settings and data
/// fingerprints, triple store position), linkage agreement, triple budget,
/// then one metric circuit per offer on a single session.
pub fn run_party<T: Transport>(
    party: Party,
    transport: T,
    inputs: PartyInputs,
    settings: &RunSettings,
    as_of: NaiveDate,
) -> Result<PartyOutcome, PipelineError> {
    let PartyInputs { schema, records, shares, triples } = inputs;
    settings.validate(&schema)?;
    if shares.party() != party || triples.party() != party {
        return Err(PipelineError::Config(format!("inputs do not belong to the {} party", party.as_str())));
    }
    let offers = offers_in_window(&records, as_of, settings.lookback_days);
    let mut violations = 0usize;
    for (id, recs) in &offers {
        if let Err(v) = validate_offer(recs) {
            warn!("offer {id}: {} record violation(s)", v.len());
            violations += v.len();
        }
    }
    if violations > 0 {
        return Err(PipelineError::PreFlight(format!("{violations} record violation(s) in the candidate file")));
    }
    let window: Vec<CandidateRecord> = offers.values().flatten().cloned().collect();
    let store_id = triples.store_id();
    let cursor = triples.cursor().map_or(0, |c| c + 1);
    let mut session = Session::new(party, transport, triples);

    let result = (|| -> Result<PartyOutcome, PipelineError> {
        // handshake
        let data_digest = crate::fingerprint_json(&window);
        let mut hello = vec![FieldElement::new(PROTOCOL_VERSION)];
        hello.extend(digest_limbs(&settings.fingerprint(&schema)));
        hello.extend(digest_limbs(&data_digest));
        hello.push(FieldElement::new(days_since_epoch(as_of)));
        hello.push(FieldElement::new(store_id));
        hello.push(FieldElement::new(cursor));
        let theirs = session.exchange(Tag::Handshake, &hello)?;
        if theirs.len() != hello.len() {
            return Err(PipelineError::PreFlight("malformed handshake".into()));
        }
        let fields = ["protocol version", "settings", "settings", "settings", "data", "data", "data", "as-of date", "triple store", "triple cursor"];
        if let Some(i) = (0..hello.len()).find(|&i| hello[i] != theirs[i]) {
            return Err(PipelineError::PreFlight(format!("peer disagrees on {}", fields[i])));
        }

        // linkage: keep records both parties hold a share for
        let mine: Vec<FieldElement> = window
            .iter()
            .map(|r| FieldElement::new(shares.get(&r.linkage_id).is_some_and(|s| s.shares.len() == schema.len()) as u64))
            .collect();
        let theirs = session.exchange(Tag::Linkage, &mine)?;
        if theirs.len() != mine.len() {
            return Err(PipelineError::PreFlight("linkage mask length mismatch".into()));
        }
        let linked: HashSet<&str> = window
            .iter()
            .zip(mine.iter().zip(&theirs))
            .filter(|(_, (a, b))| a.value() == 1 && b.value() == 1)
            .map(|(r, _)| r.linkage_id.as_str())
            .collect();
        let linkage_gaps = (window.len() - linked.len()) as u64;
        if linkage_gaps > 0 {
            warn!("{linkage_gaps} record(s) excluded for missing shares");
        }
        let offers: BTreeMap<String, Vec<CandidateRecord>> = offers
            .into_iter()
            .map(|(id, recs)| (id, recs.into_iter().filter(|r| linked.contains(r.linkage_id.as_str())).collect::<Vec<_>>()))
            .filter(|(_, recs)| !recs.is_empty())
            .collect();

        // triple budget
        let needed: usize = offers.values().map(|recs| required_triples(&schema, &settings.metrics, recs.len())).sum();
        let have = session.triples().remaining();
        let theirs = session.exchange(Tag::Budget, &[FieldElement::new(have as u64)])?;
        let peer_has = theirs.first().map_or(0, |v| v.value() as usize);
        if have < needed || peer_has < needed {
            return Err(PipelineError::PreFlight(format!(
                "triple budget: need {needed}, deployer/ttp hold {}/{}",
                if party == Party::Deployer { have } else { peer_has },
                if party == Party::Deployer { peer_has } else { have },
            )));
        }
        info!("{} offer(s), {} candidate(s), {needed} triples budgeted", offers.len(), linked.len());

        let mut aggregates = Vec::new();
        let mut directory = OfferDirectory::new();
        let before = session.triples().remaining();
        for (id, recs) in &offers {
            let attrs: Vec<Vec<SharedValue>> = recs
                .iter()
                .map(|r| {
                    shares.get(&r.linkage_id).expect("linked").shares.iter().map(|&s| SharedValue::from_share(s)).collect()
                })
                .collect();
            let cells = evaluate_offer(&mut session, &schema, &settings.metrics, recs, &attrs).map_err(|e| match e {
                MetricError::Mpc(m) => PipelineError::Protocol(m),
                other => PipelineError::Config(other.to_string()),
            })?;
            aggregates.extend(cells);
            directory.insert(id.clone(), (recs[0].job_title_class.clone(), recs[0].company_id.clone()));
        }
        Ok(PartyOutcome {
            aggregates,
            offers: directory,
            offers_evaluated: offers.len() as u64,
            candidates_evaluated: linked.len() as u64,
            linkage_gaps,
            triples_used: (before - session.triples().remaining()) as u64,
            stats: session.stats(),
        })
    })();
    if let Err(e) = &result {
        if !matches!(e, PipelineError::Protocol(MpcError::PeerAborted(_) | MpcError::Transport(_))) {
            session.abort(ABORT_LOCAL_FAILURE);
        }
    }
    result
}

/// Settings echoed into every snapshot so readers can audit how its numbers
/// were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub protocol_version: u64,
    pub schema: GroupSchema,
    pub settings: RunSettings,
    pub as_of: NaiveDate,
    pub offers_evaluated: u64,
    pub candidates_evaluated: u64,
    pub linkage_gaps: u64,
    pub suppressed_cells: u64,
    pub triples_used: u64,
    pub rounds: u64,
}

/// The deterministic part of a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotBody {
    pub date: NaiveDate,
    pub config_fingerprint: String,
    pub provenance: Provenance,
    pub results: Vec<MetricResult>,
}

/// One immutable monitoring record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringSnapshot {
    pub schema_version: String,
    pub run_id: String,
    /// Wall-clock creation time, RFC 3339.
    pub created_at: String,
    pub body: SnapshotBody,
}

impl MonitoringSnapshot {
    pub fn new(body: SnapshotBody) -> Self {
        let id: u128 = crate::secure_rng().random();
        MonitoringSnapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION.into(),
            run_id: format!("{id:032x}"),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            body,
        }
    }

    /// Canonical bytes of the body; equal across runs with equal inputs.
    pub fn body_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.body).expect("snapshot serializes")
    }

    pub fn warnings(&self) -> impl Iterator<Item = &MetricResult> {
        self.body.results.iter().filter(|r| r.verdict == Verdict::Warning)
    }
}

/// Post-processes one party's outcome into a snapshot body.
pub fn build_snapshot_body(
    outcome: &PartyOutcome,
    schema: &GroupSchema,
    settings: &RunSettings,
    as_of: NaiveDate,
) -> SnapshotBody {
    let results = build_results(&outcome.aggregates, &outcome.offers, schema, &settings.rules, settings.intervals, as_of);
    SnapshotBody {
        date: as_of,
        config_fingerprint: settings.fingerprint(schema),
        provenance: Provenance {
            protocol_version: PROTOCOL_VERSION,
            schema: schema.clone(),
            settings: settings.clone(),
            as_of,
            offers_evaluated: outcome.offers_evaluated,
            candidates_evaluated: outcome.candidates_evaluated,
            linkage_gaps: outcome.linkage_gaps,
            suppressed_cells: results.iter().filter(|r| r.verdict == Verdict::Suppressed).count() as u64,
            triples_used: outcome.triples_used,
            rounds: outcome.stats.rounds,
        },
        results,
    }
}

/// Both parties on one machine, each on its own thread, over an in-process
/// channel. Returns the deployer's and the TTP's outcomes.
pub fn run_in_process(
    deployer: PartyInputs,
    ttp: PartyInputs,
    settings: &RunSettings,
    as_of: NaiveDate,
) -> Result<(PartyOutcome, PartyOutcome), PipelineError> {
    let (a, b) = ChannelTransport::pair();
    std::thread::scope(|scope| {
        let ttp_thread = scope.spawn(move || run_party(Party::Ttp, b, ttp, settings, as_of));
        let d = run_party(Party::Deployer, a, deployer, settings, as_of);
        let t = ttp_thread.join().expect("ttp thread panicked");
        Ok((d?, t?))
    })
}

/// Where a party's triples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TripleSource {
    /// Deal exactly the budget in-process. A seed makes the dealing
    /// reproducible and must only be used for tests and demos.
    Deal { seed: Option<u64> },
    Files { deployer: PathBuf, ttp: PathBuf },
}

/// File locations and settings for a one-shot in-process run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub candidates: PathBuf,
    pub schema: PathBuf,
    pub deployer_shares: PathBuf,
    pub ttp_shares: PathBuf,
    pub rules: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub as_of: NaiveDate,
    pub settings: RunSettings,
    pub triples: TripleSource,
}

impl PipelineConfig {
    /// Settings with the rules file (if any) loaded.
    pub fn resolved_settings(&self) -> Result<RunSettings, PipelineError> {
        let mut settings = self.settings.clone();
        if let Some(path) = &self.rules {
            settings.rules = RuleSet::from_json_file(path)?;
        }
        Ok(settings)
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), PipelineError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::Config(format!("{what} {} not found", path.display())))
    }
}

/// Loads inputs, runs both parties in-process, and appends the snapshot to
/// the store in `out_dir`.
pub fn run_once(config: &PipelineConfig) -> Result<MonitoringSnapshot, PipelineError> {
    for (p, what) in [
        (&config.candidates, "candidate file"),
        (&config.schema, "schema file"),
        (&config.deployer_shares, "deployer share store"),
        (&config.ttp_shares, "TTP share store"),
    ] {
        require_file(p, what)?;
    }
    let schema = GroupSchema::from_json_file(&config.schema)?;
    let settings = config.resolved_settings()?;
    settings.validate(&schema)?;
    let records = read_candidates_csv(&config.candidates)?;
    let deployer_shares = ShareStore::read_jsonl(&config.deployer_shares, Party::Deployer)?;
    let ttp_shares = ShareStore::read_jsonl(&config.ttp_shares, Party::Ttp)?;

    let (d_triples, t_triples) = match &config.triples {
        TripleSource::Deal { seed } => {
            let needed = triple_budget(&records, &schema, &settings, config.as_of);
            deal_pair(needed, *seed)
        }
        TripleSource::Files { deployer, ttp } => (
            TripleStore::read_jsonl(deployer).map_err(|e| PipelineError::Config(e.to_string()))?,
            TripleStore::read_jsonl(ttp).map_err(|e| PipelineError::Config(e.to_string()))?,
        ),
    };
    let deployer = PartyInputs { schema: schema.clone(), records: records.clone(), shares: deployer_shares, triples: d_triples };
    let ttp = PartyInputs { schema: schema.clone(), records, shares: ttp_shares, triples: t_triples };
    let (outcome, _) = run_in_process(deployer, ttp, &settings, config.as_of)?;
    let snapshot = MonitoringSnapshot::new(build_snapshot_body(&outcome, &schema, &settings, config.as_of));
    SnapshotStore::new(&config.out_dir)?.append(&snapshot)?;
    info!(
        "snapshot {} for {}: {} result(s), {} warning(s)",
        snapshot.run_id,
        snapshot.body.date,
        snapshot.body.results.len(),
        snapshot.warnings().count()
    );
    Ok(snapshot)
}

/// Interval loop settings.
#[derive(Debug, Clone)]
pub struct Schedule {
    /// Wall-clock pause between runs.
    pub interval: Duration,
    /// Stop after this many attempts; loop forever when `None`.
    pub max_runs: Option<u64>,
    /// Advance `as_of` by this many days per run instead of using today's
    /// date.
    pub advance_days: Option<u32>,
}

/// Calls [`run_once`] every interval. A failed run is logged and the loop
/// continues. `before_run` may adjust the config (and refresh inputs) ahead
/// of each attempt. Returns the snapshots written.
pub fn run_periodic(
    mut config: PipelineConfig,
    schedule: &Schedule,
    mut before_run: impl FnMut(u64, &mut PipelineConfig),
) -> Vec<MonitoringSnapshot> {
    let mut written = Vec::new();
    let mut run = 0u64;
    while schedule.max_runs.is_none_or(|m| run < m) {
        if run > 0 {
            config.as_of = match schedule.advance_days {
                Some(days) => config.as_of + Days::new(days as u64),
                None => chrono::Utc::now().date_naive(),
            };
            std::thread::sleep(schedule.interval);
        }
        before_run(run, &mut config);
        match run_once(&config) {
            Ok(s) => written.push(s),
            Err(e) => warn!("run {run} failed: {e}"),
        }
        run += 1;
    }
    written
}

/// Append-only JSON-lines snapshot history.
pub struct SnapshotStore {
    path: PathBuf,
}

impl SnapshotStore {
    pub fn new(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir)?;
        Ok(SnapshotStore { path: dir.join(SNAPSHOT_STORE_FILE) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, snapshot: &MonitoringSnapshot) -> Result<(), PipelineError> {
        let mut line = serde_json::to_vec(snapshot)?;
        line.push(b'\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(&line)?;
        f.sync_data()?;
        Ok(())
    }

    pub fn read_all(&self) -> Result<Vec<MonitoringSnapshot>, PipelineError> {
        if !self.path.exists() {
            return Ok(Vec::new());
        }
        let reader = BufReader::new(File::open(&self.path)?);
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(PipelineError::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// Dashboard export document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotExport {
    pub schema_version: String,
    pub snapshots: Vec<MonitoringSnapshot>,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{:.2}%", v * 100.0))
}

fn plain(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn render_value(r: &MetricResult) -> String {
    if r.metric.is_proportion() || r.metric == crate::domain::MetricKind::GroupExposure {
        pct(r.value)
    } else {
        plain(r.value)
    }
}

/// Renders snapshots as the dashboard JSON document or a Markdown report.
///
/// Suppressed cells carry no counts in either form; the report prints them
/// as `< k_min`.
pub fn export_report(snapshots: &[MonitoringSnapshot], format: ReportFormat) -> Result<String, PipelineError> {
    match format {
        ReportFormat::Json => {
            let doc = SnapshotExport { schema_version: SNAPSHOT_SCHEMA_VERSION.into(), snapshots: snapshots.to_vec() };
            let mut text = serde_json::to_string_pretty(&doc)?;
            text.push('\n');
            Ok(text)
        }
        ReportFormat::Markdown => {
            use std::fmt::Write as _;
            let mut out = String::from("# Fairness monitoring report\n");
            for s in snapshots {
                let p = &s.body.provenance;
                let _ = writeln!(out, "\n## Snapshot {} ({})\n", s.body.date, s.run_id);
                let _ = writeln!(out, "- created: {}", s.created_at);
                let _ = writeln!(out, "- config fingerprint: `{}`", s.body.config_fingerprint);
                let _ = writeln!(out, "- k_min: {}, cutoff k: {}, z: {}", p.settings.metrics.k_min, p.settings.metrics.k, p.settings.intervals.z_alpha);
                let _ = writeln!(out, "- rules version: {} ({} rule(s))", p.settings.rules.version, p.settings.rules.rules.len());
                for rule in &p.settings.rules.rules {
                    let _ = writeln!(out, "  - `{}`: {} vs {:?}, tolerance {}, min n {}", rule.id, rule.metric, rule.baseline, rule.tolerance, rule.min_n);
                }
                let _ = writeln!(
                    out,
                    "- offers: {}, candidates: {}, linkage gaps: {}, suppressed cells: {}",
                    p.offers_evaluated, p.candidates_evaluated, p.linkage_gaps, p.suppressed_cells
                );
                let warnings: Vec<&MetricResult> = s.warnings().collect();
                let _ = writeln!(out, "\n### Warnings ({})\n", warnings.len());
                for w in &warnings {
                    let checks: Vec<String> = w
                        .checks
                        .iter()
                        .filter(|c| c.verdict == Some(Verdict::Warning))
                        .map(|c| format!("{} (baseline {}, delta {})", c.rule_id, plain(c.baseline_value), plain(c.delta)))
                        .collect();
                    let _ = writeln!(out, "- {} | {} | {} | {} | {}", w.unit, w.metric, w.group_label, render_value(w), checks.join("; "));
                }
                let _ = writeln!(out, "\n### Results\n");
                let _ = writeln!(out, "| unit | metric | group | value | macro | 95% CI | n | verdict |");
                let _ = writeln!(out, "|---|---|---|---|---|---|---|---|");
                for r in &s.body.results {
                    let (value, macro_, ci, n) = if r.verdict == Verdict::Suppressed {
                        ("< k_min".to_string(), String::new(), String::new(), String::new())
                    } else {
                        (
                            render_value(r),
                            r.macro_value.map(|m| plain(Some(m))).unwrap_or_default(),
                            r.ci.map(|c| format!("[{:.4}, {:.4}]", c.low, c.high)).unwrap_or_default(),
                            r.n.map(|n| n.to_string()).unwrap_or_default(),
                        )
                    };
                    let verdict = serde_json::to_value(r.verdict)?.as_str().unwrap_or("").to_string();
                    let _ = writeln!(out, "| {} | {} | {} | {} | {} | {} | {} | {} |", r.unit, r.metric, r.group_label, value, macro_, ci, n, verdict);
                }
            }
            Ok(out)
        }
    }
}
