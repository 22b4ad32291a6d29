use std::time::Duration;

use chrono::NaiveDate;
use fairmon_core::domain::{GroupSelector, MetricKind, UnitKey};
use fairmon_core::pipeline::{run_periodic, PipelineConfig, RunSettings, Schedule, SnapshotStore, TripleSource};
use fairmon_core::simulator::{generate, SimulationConfig, CANDIDATES_FILE, DEPLOYER_SHARES_FILE, SCHEMA_FILE, TTP_SHARES_FILE};

#[test]
fn drifting_prevalence_gives_monotone_history() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let config = PipelineConfig {
        candidates: data_dir.join(CANDIDATES_FILE),
        schema: data_dir.join(SCHEMA_FILE),
        deployer_shares: data_dir.join(DEPLOYER_SHARES_FILE),
        ttp_shares: data_dir.join(TTP_SHARES_FILE),
        rules: None,
        out_dir: dir.path().join("store"),
        as_of: NaiveDate::from_ymd_opt(2025, 6, 30).unwrap(),
        settings: RunSettings::default(),
        triples: TripleSource::Deal { seed: Some(4) },
    };
    let schedule = Schedule { interval: Duration::ZERO, max_runs: Some(4), advance_days: Some(30) };
    let written = run_periodic(config, &schedule, |run, c| {
        if run == 2 {
            // a missing input fails this run only
            std::fs::remove_dir_all(&data_dir).unwrap();
            return;
        }
        let female = [0.2, 0.35, 0.0, 0.5][run as usize];
        let sim = SimulationConfig {
            seed: 8,
            offers: 12,
            prevalence: vec![vec![female, 0.95 - female, 0.05], vec![0.3, 0.4, 0.3]],
            end_date: c.as_of,
            ..Default::default()
        };
        generate(&sim).unwrap().write_files(&data_dir).unwrap();
    });
    assert_eq!(written.len(), 3, "the failed run is skipped, the loop continues");
    let stored = SnapshotStore::new(&dir.path().join("store")).unwrap().read_all().unwrap();
    assert_eq!(stored, written);
    assert!(stored.windows(2).all(|w| w[0].body.date < w[1].body.date));
    let female = GroupSelector(vec![Some(0), None]);
    let trajectory: Vec<f64> = stored
        .iter()
        .map(|s| {
            s.body
                .results
                .iter()
                .find(|r| r.unit == UnitKey::overall() && r.metric == MetricKind::PoolDiversity && r.group == female)
                .and_then(|r| r.value)
                .unwrap()
        })
        .collect();
    assert!(trajectory.windows(2).all(|w| w[0] < w[1]), "{trajectory:?}");
}
