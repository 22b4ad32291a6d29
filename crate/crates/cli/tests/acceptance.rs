//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Instant;

use chrono::NaiveDate;
use fairmon_core::domain::{AggregateStatus, AttributeCodes, MetricKind, Revealed};
use fairmon_core::metrics::MetricConfig;
use fairmon_core::mpc::{deal_triples, equality_cost, run_local_pair, EqualityQuery};
use fairmon_core::oracle::{compare, oracle_all, OracleCell};
use fairmon_core::pipeline::{
    build_snapshot_body, deal_pair, run_in_process, triple_budget, MonitoringSnapshot, PartyInputs, RunSettings,
    SNAPSHOT_STORE_FILE,
};
use fairmon_core::postprocess::{aggregate_macro, aggregate_micro, confidence_interval, Verdict};
use fairmon_core::sharing::split;
use fairmon_core::simulator::{generate, DonationTiming, SimulatedData, SimulationConfig};
use fairmon_core::stats::two_sample_p_value;
use fairmon_core::{seeded_rng, FieldElement, Party, SharedValue, MODULUS};

const SIMULATIONS: u64 = 100;
const MAX_CANDIDATES: usize = 500;
const MAX_OFFERS: usize = 20;
const FIXED_POINT_TOL: f64 = 1e-4;
const ALPHA: f64 = 0.01;
const PRIVACY_SAMPLES: usize = 10_000;
const BUCKETS: usize = 32;
const TIME_LIMIT_SECS: f64 = 300.0;

type Check = Result<String, String>;

fn as_of() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 6, 30).unwrap()
}

fn fairmon() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fairmon"));
    c.env("RUST_LOG", "debug");
    c
}

fn ok_output(out: Output, what: &str) -> Result<Output, String> {
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!("{what} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))
    }
}

fn sim_config(seed: u64) -> SimulationConfig {
    let offers = 1 + (seed as usize * 7) % MAX_OFFERS;
    let max_size = (MAX_CANDIDATES / offers).min(60);
    SimulationConfig {
        seed: 1_000 + seed,
        offers,
        min_offer_size: 1 + (seed as usize % 5),
        max_offer_size: max_size,
        donation_rate: 0.3 + 0.7 * ((seed % 10) as f64 / 9.0),
        withhold_rate: if seed.is_multiple_of(3) { 0.2 } else { 0.0 },
        timing: if seed.is_multiple_of(2) { DonationTiming::PostApplication } else { DonationTiming::PostDecision },
        ..Default::default()
    }
}

fn run_pair(data: &SimulatedData, settings: &RunSettings, seed: u64) -> fairmon_core::pipeline::PartyOutcome {
    let (dt, tt) = deal_pair(triple_budget(&data.records, &data.schema, settings, as_of()), Some(seed));
    let d = PartyInputs { schema: data.schema.clone(), records: data.records.clone(), shares: data.deployer_shares.clone(), triples: dt };
    let t = PartyInputs { schema: data.schema.clone(), records: data.records.clone(), shares: data.ttp_shares.clone(), triples: tt };
    run_in_process(d, t, settings, as_of()).expect("run succeeds").0
}

/// Per-simulation evidence reused by the suppression criterion.
struct SimRun {
    data: SimulatedData,
    outcome: fairmon_core::pipeline::PartyOutcome,
    settings: RunSettings,
}

fn oracle_equivalence(runs: &mut Vec<SimRun>) -> Check {
    let settings = RunSettings::default();
    let started = Instant::now();
    let (mut cells, mut count_cells, mut fixed_cells, mut candidates) = (0, 0, 0, 0);
    for seed in 0..SIMULATIONS {
        let data = generate(&sim_config(seed)).map_err(|e| e.to_string())?;
        if data.records.len() > MAX_CANDIDATES || data.schema.len() != 2 {
            return Err(format!("sim {seed} outside the stated envelope"));
        }
        let outcome = run_pair(&data, &settings, seed);
        let oracle: Vec<_> = oracle_all(&data.schema, &settings.metrics, &data.records, &data.ground_truth).into_values().flatten().collect();
        let problems = compare(&outcome.aggregates, &oracle, FIXED_POINT_TOL);
        if !problems.is_empty() {
            return Err(format!("sim {seed}: {} mismatches, first: {}", problems.len(), problems[0]));
        }
        for a in &outcome.aggregates {
            if a.revealed().is_some() {
                if a.kind.is_fixed_point() {
                    fixed_cells += 1;
                } else {
                    count_cells += 1;
                }
            }
        }
        cells += outcome.aggregates.len();
        candidates += data.records.len();
        runs.push(SimRun { data, outcome, settings: settings.clone() });
    }
    Ok(format!(
        "{SIMULATIONS} sims, {candidates} candidates, {cells} cells ({count_cells} count cells exact, {fixed_cells} fixed-point within {FIXED_POINT_TOL}) in {:.1}s",
        started.elapsed().as_secs_f64()
    ))
}

fn use_case(tmp: &Path) -> Check {
    let dir = tmp.join("use-case");
    let out = ok_output(fairmon().args(["use-case", "--out"]).arg(&dir).output().map_err(|e| e.to_string())?, "use-case")?;
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    let expect = [
        ("focal offer A1 female representation: ", "39.39%"),
        ("platform average: ", "43.30%"),
        ("job title data-scientist average: ", "35.09%"),
    ];
    let mut found = Vec::new();
    for (prefix, value) in expect {
        let line = stdout.lines().find(|l| l.starts_with(prefix)).ok_or_else(|| format!("missing line {prefix:?}"))?;
        let got = &line[prefix.len()..];
        if got != value {
            return Err(format!("{prefix}{got}, expected {value}"));
        }
        found.push(value);
    }
    Ok(format!("focal {} platform {} job title {}", found[0], found[1], found[2]))
}

fn single_share_uniformity() -> Result<f64, String> {
    let mut rng = seeded_rng(101);
    let mut sample = |code: u32| -> Vec<FieldElement> {
        (0..PRIVACY_SAMPLES).map(|_| split::<MODULUS, _>("x", &AttributeCodes(vec![code]), &mut rng).0.shares[0]).collect()
    };
    let (a, b) = (sample(0), sample(2));
    Ok(two_sample_p_value(&a, &b, BUCKETS))
}

fn opened_values(x: u32, y: u32, seed: u64) -> Vec<FieldElement> {
    let mut rng = seeded_rng(seed);
    let (xd, xt) = split::<MODULUS, _>("x", &AttributeCodes(vec![x]), &mut rng);
    let (yd, yt) = split::<MODULUS, _>("y", &AttributeCodes(vec![y]), &mut rng);
    let (dt, tt) = deal_triples(seed, 0, PRIVACY_SAMPLES, &mut rng);
    run_local_pair(dt, tt, |s| {
        let (x, y) = match s.party() {
            Party::Deployer => (xd.shares[0], yd.shares[0]),
            Party::Ttp => (xt.shares[0], yt.shares[0]),
        };
        s.record_transcript();
        let xs = vec![SharedValue::from_share(x); PRIVACY_SAMPLES];
        let ys = vec![SharedValue::from_share(y); PRIVACY_SAMPLES];
        s.mul_shared_batch(&xs, &ys).expect("multiplication");
        s.take_transcript()
    })
    .0
}

/// Every token in `text` that could identify a candidate or reproduce a
/// share.
fn leaks(text: &str, ids: &HashSet<String>, shares: &HashSet<String>) -> Vec<String> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
        .filter(|t| ids.contains(*t) || shares.contains(*t))
        .map(str::to_string)
        .collect()
}

fn privacy(tmp: &Path) -> Check {
    // (a)
    let p_a = single_share_uniformity()?;
    if p_a <= ALPHA {
        return Err(format!("(a) share distributions differ, p = {p_a:.4}"));
    }
    // (b)
    let (t0, t1) = (opened_values(0, 0, 7), opened_values(3, 1, 8));
    let mut p_b = f64::INFINITY;
    for offset in 0..2 {
        let pick = |v: &[FieldElement]| v.iter().skip(offset).step_by(2).copied().collect::<Vec<_>>();
        p_b = p_b.min(two_sample_p_value(&pick(&t0), &pick(&t1), BUCKETS));
    }
    if p_b <= ALPHA {
        return Err(format!("(b) opened values depend on inputs, p = {p_b:.4}"));
    }
    // (c) full CLI workflow with debug logging, then scan every artifact
    let dir = tmp.join("privacy");
    let data = dir.join("data");
    let mut logs = String::new();
    let mut step = |args: Vec<std::ffi::OsString>, what: &str| -> Result<String, String> {
        let out = ok_output(fairmon().args(args).output().map_err(|e| e.to_string())?, what)?;
        logs.push_str(&String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8_lossy(&out.stdout).to_string();
        logs.push_str(&stdout);
        Ok(stdout)
    };
    let os = |v: &[&str]| v.iter().map(Into::into).collect::<Vec<std::ffi::OsString>>();
    let d = data.to_str().unwrap();
    let o = dir.to_str().unwrap();
    step(os(&["simulate", "--out", d, "--seed", "77", "--offers", "12"]), "simulate")?;
    step(os(&["run", "--data", d, "--out", o, "--as-of", "2025-06-30", "--seed", "3"]), "run")?;
    let export_json = step(os(&["export", "--store", o, "--format", "json"]), "export json")?;
    let export_md = step(os(&["export", "--store", o, "--format", "markdown"]), "export markdown")?;
    let snapshots = std::fs::read_to_string(dir.join(SNAPSHOT_STORE_FILE)).map_err(|e| e.to_string())?;
    let truth = fairmon_core::simulator::read_ground_truth(&data.join(fairmon_core::simulator::GROUND_TRUTH_FILE)).map_err(|e| e.to_string())?;
    let ids: HashSet<String> = truth.iter().flat_map(|t| [t.linkage_id.clone(), t.candidate_id.clone()]).collect();
    let mut shares = HashSet::new();
    for (file, party) in [("shares.deployer.jsonl", Party::Deployer), ("shares.ttp.jsonl", Party::Ttp)] {
        let store = fairmon_core::ShareStore::read_jsonl(&data.join(file), party).map_err(|e| e.to_string())?;
        shares.extend(store.iter().flat_map(|s| s.shares.iter().map(|v| v.value().to_string())));
    }
    for (name, text) in [("snapshot store", &snapshots), ("json export", &export_json), ("markdown export", &export_md), ("logs", &logs)] {
        let found = leaks(text, &ids, &shares);
        if !found.is_empty() {
            return Err(format!("(c) {name} contains individual-level tokens, e.g. {}", found[0]));
        }
    }
    if !export_md.contains("< k_min") {
        return Err("(c) fixture did not exercise suppression".into());
    }
    // (d)
    let sim = generate(&SimulationConfig { seed: 404, offers: 60, min_offer_size: 100, max_offer_size: 200, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let donated: std::collections::HashMap<&str, bool> =
        sim.ground_truth.iter().map(|t| (t.linkage_id.as_str(), t.donated.iter().all(|&d| d))).collect();
    let (mut donors, mut others) = (Vec::new(), Vec::new());
    for s in sim.deployer_shares.iter() {
        let bucket = if donated[s.linkage_id.as_str()] { &mut donors } else { &mut others };
        bucket.extend(s.shares.iter().copied());
    }
    let p_d = two_sample_p_value(&donors, &others, BUCKETS);
    if p_d <= ALPHA {
        return Err(format!("(d) donor shares distinguishable, p = {p_d:.4}"));
    }
    Ok(format!(
        "(a) p={p_a:.3} (b) p={p_b:.3} (c) {} ids, {} share values absent from 4 outputs (d) p={p_d:.3} on {}/{} values",
        ids.len(),
        shares.len(),
        donors.len(),
        others.len()
    ))
}

fn protocol_exactness() -> Check {
    let mut rng = seeded_rng(55);
    let mut tests = 0;
    for codes in 1..=6u32 {
        let max_code = codes;
        let grid: Vec<(u32, u32)> = (0..=max_code).flat_map(|x| (0..=max_code).map(move |c| (x, c))).collect();
        let pairs: Vec<_> = grid.iter().map(|&(x, _)| split::<MODULUS, _>("x", &AttributeCodes(vec![x]), &mut rng)).collect();
        let per = equality_cost(max_code);
        let (dt, tt) = deal_triples(codes as u64, 0, grid.len() * per, &mut rng);
        let (d, t) = run_local_pair(dt, tt, |s| {
            let deployer = s.party() == Party::Deployer;
            let queries: Vec<EqualityQuery> = grid
                .iter()
                .zip(&pairs)
                .map(|(&(_, c), p)| EqualityQuery {
                    value: SharedValue::from_share(if deployer { p.0.shares[0] } else { p.1.shares[0] }),
                    constant: c,
                    max_code,
                })
                .collect();
            (s.equal_public_batch(&queries).expect("equality"), s.stats())
        });
        for (i, &(x, c)) in grid.iter().enumerate() {
            if d.0[i].share() + t.0[i].share() != FieldElement::new((x == c) as u64) {
                return Err(format!("equality x={x} c={c} over {codes} codes + dummy"));
            }
        }
        for stats in [d.1, t.1] {
            let want = (grid.len() * per) as u64;
            if stats.multiplications != want || stats.rounds != per as u64 || stats.messages_sent != per as u64 || stats.elements_sent != 2 * want {
                return Err(format!("{codes} codes: counts {stats:?}, expected {want} mults in {per} rounds"));
            }
        }
        tests += grid.len();
    }
    // one test over domain size m + 1 costs m - 1 sequential multiplications
    for max_code in 2..=6u32 {
        let (xd, xt) = split::<MODULUS, _>("x", &AttributeCodes(vec![1]), &mut rng);
        let (dt, tt) = deal_triples(9, 0, equality_cost(max_code), &mut rng);
        let (stats, _) = run_local_pair(dt, tt, |s| {
            let x = if s.party() == Party::Deployer { xd.shares[0] } else { xt.shares[0] };
            s.equal_public(SharedValue::from_share(x), 1, max_code).expect("equality");
            s.stats()
        });
        if stats.multiplications != max_code as u64 - 1 || stats.rounds != max_code as u64 - 1 {
            return Err(format!("single test over 0..={max_code}: {stats:?}"));
        }
    }
    let xs: Vec<(FieldElement, FieldElement)> = (0..500).map(|_| (FieldElement::random(&mut rng), FieldElement::random(&mut rng))).collect();
    let masks: Vec<(FieldElement, FieldElement)> = (0..500).map(|_| (FieldElement::random(&mut rng), FieldElement::random(&mut rng))).collect();
    let (dt, tt) = deal_triples(10, 0, 500, &mut rng);
    let (d, t) = run_local_pair(dt, tt, |s| {
        let mut out = Vec::new();
        for ((x, y), (rx, ry)) in xs.iter().zip(&masks) {
            let (x, y) = if s.party() == Party::Deployer { (*x + *rx, *y + *ry) } else { (-*rx, -*ry) };
            let before = s.stats();
            let triple = s.triples_mut().next_triple().expect("triple");
            out.push(s.mul_shared(SharedValue::from_share(x), SharedValue::from_share(y), triple).expect("mul"));
            let after = s.stats();
            out.push(SharedValue::from_share(FieldElement::new(
                (after.rounds - before.rounds == 1 && after.elements_sent - before.elements_sent == 2) as u64,
            )));
        }
        out
    });
    for (i, (x, y)) in xs.iter().enumerate() {
        if d[2 * i].share() + t[2 * i].share() != *x * *y {
            return Err(format!("Beaver product {i} wrong"));
        }
        if d[2 * i + 1].share() != FieldElement::ONE || t[2 * i + 1].share() != FieldElement::ONE {
            return Err(format!("Beaver product {i} did not use one round of two elements"));
        }
    }
    Ok(format!("{tests} equality cases over 1..=6 codes + dummy, 500 Beaver products, counts exact"))
}

fn formulas(runs: &[SimRun]) -> Check {
    let ci = confidence_interval(0.5, 100, 1.96).ok_or("no interval")?;
    if (ci.low - 0.402).abs() > 1e-3 || (ci.high - 0.598).abs() > 1e-3 {
        return Err(format!("CI {ci:?}"));
    }
    let micro = aggregate_micro(&[(0.2, 10), (0.8, 30)]).map_err(|e| e.to_string())?;
    let macro_ = aggregate_macro(&[0.2, 0.8]).map_err(|e| e.to_string())?;
    if micro != 0.65 || macro_ != 0.5 {
        return Err(format!("micro {micro} macro {macro_}"));
    }
    let mut rng = seeded_rng(3);
    for n in 1..200u64 {
        let values: Vec<f64> = (0..(n % 17 + 1)).map(|_| FieldElement::random(&mut rng).value() as f64 / MODULUS as f64).collect();
        let units: Vec<(f64, u64)> = values.iter().map(|&v| (v, n)).collect();
        if aggregate_micro(&units).unwrap() != aggregate_macro(&values).unwrap() {
            return Err(format!("equal-weight micro differs from macro at n = {n}"));
        }
    }
    // skew sums over every single-dimension donor partition, k_min = 1 so
    // only empty groups (which contribute zero) are gated
    let settings = RunSettings {
        metrics: MetricConfig { kinds: vec![MetricKind::SkewAtK], k_min: 1, ..Default::default() },
        ..Default::default()
    };
    let (mut partitions, mut worst) = (0, 0.0f64);
    for run in runs.iter().take(30) {
        let outcome = run_pair(&run.data, &settings, 1);
        for offer in outcome.offers.keys() {
            for dim in 0..run.data.schema.len() {
                let mut sum = 0.0;
                let mut defined = true;
                for a in outcome.aggregates.iter().filter(|a| &a.unit.id == offer && a.group.specified() == [dim]) {
                    match &a.status {
                        AggregateStatus::Suppressed => {}
                        AggregateStatus::Revealed { values: Revealed::Skew { .. }, .. } => match a.value() {
                            Some(v) => sum += v,
                            None => defined = false,
                        },
                        _ => defined = false,
                    }
                }
                if defined {
                    partitions += 1;
                    worst = worst.max(sum.abs());
                }
            }
        }
    }
    if worst > 1e-12 || partitions == 0 {
        return Err(format!("max |sum skew| = {worst:e} over {partitions} partitions"));
    }
    Ok(format!("CI [{:.4}, {:.4}], micro 0.65, macro 0.5, equal weights exact, max |sum skew| {worst:e} over {partitions} partitions", ci.low, ci.high))
}

fn suppression(runs: &[SimRun]) -> Check {
    let mut gated = 0;
    for run in runs {
        let k_min = run.settings.metrics.k_min;
        let oracle: Vec<_> = oracle_all(&run.data.schema, &run.settings.metrics, &run.data.records, &run.data.ground_truth)
            .into_values()
            .flatten()
            .collect();
        for (a, o) in run.outcome.aggregates.iter().zip(&oracle) {
            if o.n_g < k_min && !matches!(o.cell, OracleCell::Unavailable) {
                if a.revealed().is_some() {
                    return Err(format!("{} {:?} {}: n_g = {} revealed", a.unit, a.group, a.kind, o.n_g));
                }
                gated += 1;
            }
        }
        let snapshot = MonitoringSnapshot::new(build_snapshot_body(&run.outcome, &run.data.schema, &run.settings, as_of()));
        let json = serde_json::to_value(&snapshot).map_err(|e| e.to_string())?;
        for r in json["body"]["results"].as_array().ok_or("no results")? {
            if r["verdict"] == "suppressed" {
                for field in ["value", "n_g", "n", "revealed", "ci", "macro_value", "value_all_candidates"] {
                    if r.get(field).is_some_and(|v| !v.is_null()) {
                        return Err(format!("suppressed cell exposes {field}: {r}"));
                    }
                }
            }
        }
        let md = fairmon_core::pipeline::export_report(std::slice::from_ref(&snapshot), fairmon_core::pipeline::ReportFormat::Markdown)
            .map_err(|e| e.to_string())?;
        let rows = md.lines().filter(|l| l.contains("| suppressed |")).count();
        let expected = snapshot.body.results.iter().filter(|r| r.verdict == Verdict::Suppressed).count();
        if rows != expected || md.lines().filter(|l| l.contains("< k_min")).any(|l| !l.contains("| < k_min |  |  |  | suppressed |")) {
            return Err("markdown report shows counts for a suppressed cell".into());
        }
    }
    if gated == 0 {
        return Err("no group fell under k_min".into());
    }
    Ok(format!("{gated} under-k_min cells across {} runs revealed nothing", runs.len()))
}

fn snapshot_body(store: &Path) -> Result<String, String> {
    let text = std::fs::read_to_string(store.join(SNAPSHOT_STORE_FILE)).map_err(|e| e.to_string())?;
    let line = text.lines().last().ok_or("empty store")?;
    // body is the last field of the record
    let start = line.find("\"body\":").ok_or("no body")? + "\"body\":".len();
    Ok(line[start..line.len() - 1].to_string())
}

fn determinism(tmp: &Path) -> Check {
    let dir = tmp.join("determinism");
    let data = dir.join("data");
    let run = |args: &[&str], what: &str| -> Result<Output, String> {
        ok_output(fairmon().args(args).output().map_err(|e| e.to_string())?, what)
    };
    let p = |sub: &str| dir.join(sub).to_str().unwrap().to_string();
    let d = data.to_str().unwrap();
    run(&["simulate", "--out", d, "--seed", "31", "--offers", "8"], "simulate")?;
    run(
        &["deal-triples", "--data", d, "--as-of", "2025-06-30", "--seed", "5", "--out-deployer", &p("t.dep"), "--out-ttp", &p("t.ttp")],
        "deal-triples",
    )?;
    for store in ["inproc-a", "inproc-b"] {
        run(&["run", "--data", d, "--as-of", "2025-06-30", "--seed", "5", "--out", &p(store)], "run")?;
    }
    run(
        &["run", "--data", d, "--as-of", "2025-06-30", "--triples-deployer", &p("t.dep"), "--triples-ttp", &p("t.ttp"), "--out", &p("inproc-files")],
        "run with triple files",
    )?;

    let mut deployer = Command::new(env!("CARGO_BIN_EXE_fairmon"))
        .args(["serve-party", "--party", "deployer", "--data", d, "--as-of", "2025-06-30", "--listen", "127.0.0.1:0"])
        .args(["--shares", &format!("{d}/shares.deployer.jsonl"), "--triples", &p("t.dep"), "--out", &p("tcp-deployer")])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut lines = BufReader::new(deployer.stdout.take().unwrap()).lines();
    let first = lines.next().ok_or("deployer printed nothing")?.map_err(|e| e.to_string())?;
    let addr = first.strip_prefix("listening ").ok_or_else(|| format!("unexpected deployer output {first:?}"))?.to_string();
    let ttp = run(
        &["serve-party", "--party", "ttp", "--data", d, "--as-of", "2025-06-30", "--connect", &addr, "--shares", &format!("{d}/shares.ttp.jsonl"), "--triples", &p("t.ttp"), "--out", &p("tcp-ttp")],
        "ttp party",
    );
    let status = deployer.wait().map_err(|e| e.to_string())?;
    ttp?;
    if !status.success() {
        return Err(format!("deployer party exited {:?}", status.code()));
    }
    let reference = snapshot_body(&dir.join("inproc-a"))?;
    for other in ["inproc-b", "inproc-files", "tcp-deployer", "tcp-ttp"] {
        if snapshot_body(&dir.join(other))? != reference {
            return Err(format!("{other} body differs from in-process run"));
        }
    }
    Ok(format!("5 snapshot bodies ({} bytes) identical: 2 seeded in-process, file triples, TCP deployer, TCP TTP", reference.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let started = Instant::now();
    let mut runs = Vec::new();
    let mut results: Vec<(&str, Check)> = Vec::new();
    let mut record = |name: &'static str, f: &mut dyn FnMut() -> Check| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let line = match &outcome {
            Ok(detail) => format!("PASS  {name}: {detail}"),
            Err(detail) => format!("FAIL  {name}: {detail}"),
        };
        println!("{line}");
        results.push((name, outcome));
    };
    record("oracle equivalence", &mut || oracle_equivalence(&mut runs));
    record("use-case reproduction", &mut || use_case(tmp.path()));
    record("privacy properties", &mut || privacy(tmp.path()));
    record("protocol exactness", &mut protocol_exactness);
    record("formula checks", &mut || formulas(&runs));
    record("suppression gate", &mut || suppression(&runs));
    record("determinism", &mut || determinism(tmp.path()));
    let elapsed = started.elapsed().as_secs_f64();
    let within = elapsed <= TIME_LIMIT_SECS;
    println!("{}  suite runtime: {elapsed:.1}s (limit {TIME_LIMIT_SECS}s)", if within { "PASS" } else { "FAIL" });
    let failed = results.iter().filter(|(_, r)| r.is_err()).count() + (!within) as usize;
    println!("acceptance: {} of {} criteria passed", results.len() + 1 - failed, results.len() + 1);
    if failed > 0 {
        std::process::exit(1);
    }
}
