//! Shared fixtures for the benchmarks.

use chrono::NaiveDate;
use fairmon_core::pipeline::{deal_pair, triple_budget, PartyInputs, RunSettings};
use fairmon_core::simulator::{generate, SimulatedData, SimulationConfig};

pub fn as_of() -> NaiveDate {
    NaiveDate::from_ymd_opt(2025, 6, 30).expect("valid date")
}

/// `offers` offers of exactly `size` candidates each.
pub fn dataset(offers: usize, size: usize, seed: u64) -> SimulatedData {
    let config = SimulationConfig { seed, offers, min_offer_size: size, max_offer_size: size, ..Default::default() };
    generate(&config).expect("valid simulation config")
}

/// Both parties' inputs with exactly the triples the run needs.
pub fn party_inputs(data: &SimulatedData, settings: &RunSettings) -> (PartyInputs, PartyInputs) {
    let (dt, tt) = deal_pair(triple_budget(&data.records, &data.schema, settings, as_of()), Some(1));
    (
        PartyInputs { schema: data.schema.clone(), records: data.records.clone(), shares: data.deployer_shares.clone(), triples: dt },
        PartyInputs { schema: data.schema.clone(), records: data.records.clone(), shares: data.ttp_shares.clone(), triples: tt },
    )
}
