//! Synthetic recruiting data: offers, candidate pools, scores, ranks,
//! outcomes and voluntary attribute donation, emitted in exactly the form
//! each party holds.
//!
//! Ground truth (true attributes and donation flags) is returned separately
//! and written to its own file; it never enters either party's inputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{write_candidates_csv, AttributeCodes, CandidateRecord, Dimension, GroupSchema, RecordError, SchemaError};
use crate::sharing::{split, Party, ShareError, ShareStore};

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error(transparent)]
    Shares(#[from] ShareError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// When candidates are asked to donate relative to the hiring decision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DonationTiming {
    /// After applying, before any decision: donation is independent of the
    /// outcome.
    #[default]
    PostApplication,
    /// After the decision: rejected candidates donate at a reduced rate.
    PostDecision,
}

/// Donation rate for members of one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonationOverride {
    pub dimension: String,
    pub category: String,
    pub rate: f64,
}

/// Additive score shift for members of one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBias {
    pub dimension: String,
    pub category: String,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub seed: u64,
    pub offers: usize,
    /// Inclusive candidate count range per offer.
    pub min_offer_size: usize,
    pub max_offer_size: usize,
    pub job_titles: Vec<String>,
    pub companies: Vec<String>,
    pub schema: GroupSchema,
    /// Category probabilities per dimension; uniform when empty.
    #[serde(default)]
    pub prevalence: Vec<Vec<f64>>,
    pub donation_rate: f64,
    #[serde(default)]
    pub donation_overrides: Vec<DonationOverride>,
    /// Probability that a donor leaves any one dimension blank.
    #[serde(default)]
    pub withhold_rate: f64,
    #[serde(default)]
    pub score_bias: Vec<ScoreBias>,
    /// Top positions that receive a positive outcome.
    pub shortlist: u32,
    /// Probability that an outcome is flipped.
    pub outcome_noise: f64,
    pub qualification_rate: f64,
    #[serde(default)]
    pub timing: DonationTiming,
    /// Donation rate multiplier for rejected candidates under
    /// [`DonationTiming::PostDecision`].
    #[serde(default = "default_rejected_factor")]
    pub rejected_donation_factor: f64,
    /// Candidate timestamps fall in `start_date..=end_date`.
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

fn default_rejected_factor() -> f64 {
    0.5
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seed: 0,
            offers: 10,
            min_offer_size: 15,
            max_offer_size: 40,
            job_titles: vec!["data-scientist".into(), "sales-manager".into(), "nurse".into()],
            companies: vec!["acme".into(), "globex".into()],
            schema: GroupSchema::gender_age(),
            prevalence: Vec::new(),
            donation_rate: 0.8,
            donation_overrides: Vec::new(),
            withhold_rate: 0.0,
            score_bias: Vec::new(),
            shortlist: 5,
            outcome_noise: 0.1,
            qualification_rate: 0.6,
            timing: DonationTiming::PostApplication,
            rejected_donation_factor: default_rejected_factor(),
            start_date: NaiveDate::from_ymd_opt(2025, 1, 1).expect("valid date"),
            end_date: NaiveDate::from_ymd_opt(2025, 6, 30).expect("valid date"),
        }
    }
}

fn rate_ok(r: f64) -> bool {
    (0.0..=1.0).contains(&r)
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::Config(m));
        if self.min_offer_size == 0 || self.min_offer_size > self.max_offer_size {
            return bad(format!("offer sizes {}..={} invalid", self.min_offer_size, self.max_offer_size));
        }
        if self.job_titles.is_empty() || self.companies.is_empty() {
            return bad("need at least one job title and one company".into());
        }
        for (name, r) in [
            ("donation_rate", self.donation_rate),
            ("withhold_rate", self.withhold_rate),
            ("outcome_noise", self.outcome_noise),
            ("qualification_rate", self.qualification_rate),
            ("rejected_donation_factor", self.rejected_donation_factor),
        ] {
            if !rate_ok(r) {
                return bad(format!("{name} {r} outside [0, 1]"));
            }
        }
        if !self.prevalence.is_empty() {
            if self.prevalence.len() != self.schema.len() {
                return bad("one prevalence vector per dimension".into());
            }
            for (dim, p) in self.schema.dimensions().iter().zip(&self.prevalence) {
                if p.len() != dim.categories.len() || p.iter().any(|&x| !rate_ok(x)) {
                    return bad(format!("prevalence for {:?} is malformed", dim.name));
                }
                if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad(format!("prevalence for {:?} does not sum to 1", dim.name));
                }
            }
        }
        for o in &self.donation_overrides {
            self.category(&o.dimension, &o.category)?;
            if !rate_ok(o.rate) {
                return bad(format!("donation rate {} outside [0, 1]", o.rate));
            }
        }
        for b in &self.score_bias {
            self.category(&b.dimension, &b.category)?;
        }
        if self.start_date > self.end_date {
            return bad("start_date after end_date".into());
        }
        Ok(())
    }

    fn category(&self, dimension: &str, category: &str) -> Result<(usize, u32), SimulationError> {
        let j = self
            .schema
            .dimension_index(dimension)
            .ok_or_else(|| SchemaError::UnknownDimension(dimension.into()))?;
        let code = self.schema.dimension(j).code_of(category).ok_or_else(|| SchemaError::UnknownLabel {
            dimension: dimension.into(),
            category: category.into(),
        })?;
        Ok((j, code))
    }
}

/// Hidden per-candidate truth, for oracle tests only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub linkage_id: String,
    pub candidate_id: String,
    pub offer_id: String,
    /// True category code per dimension.
    pub categories: Vec<u32>,
    /// Whether each dimension was donated.
    pub donated: Vec<bool>,
    /// The code vector that was secret-shared.
    pub shared_codes: AttributeCodes,
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub schema: GroupSchema,
    pub records: Vec<CandidateRecord>,
    pub deployer_shares: ShareStore,
    pub ttp_shares: ShareStore,
    pub ground_truth: Vec<GroundTruth>,
}

pub const CANDIDATES_FILE: &str = "candidates.csv";
pub const DEPLOYER_SHARES_FILE: &str = "shares.deployer.jsonl";
pub const TTP_SHARES_FILE: &str = "shares.ttp.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
pub const SCHEMA_FILE: &str = "schema.json";

impl SimulatedData {
    /// Writes every artifact into `dir`; see the `*_FILE` constants.
    pub fn write_files(&self, dir: &Path) -> Result<(), SimulationError> {
        std::fs::create_dir_all(dir)?;
        write_candidates_csv(&dir.join(CANDIDATES_FILE), &self.records)?;
        self.deployer_shares.write_jsonl(&dir.join(DEPLOYER_SHARES_FILE))?;
        self.ttp_shares.write_jsonl(&dir.join(TTP_SHARES_FILE))?;
        self.schema.write_json_file(&dir.join(SCHEMA_FILE))?;
        let mut out = BufWriter::new(File::create(dir.join(GROUND_TRUTH_FILE))?);
        for g in &self.ground_truth {
            serde_json::to_writer(&mut out, g)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruth>, SimulationError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// A candidate before ranking.
struct Draft {
    categories: Vec<u32>,
    donated: Vec<bool>,
    score: f64,
    qualified: bool,
    day: u64,
}

struct OfferDraft {
    id: String,
    title: String,
    company: String,
    candidates: Vec<Draft>,
}

fn pick(rng: &mut ChaCha20Rng, probs: &[f64]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    probs.len() as u32 - 1
}

/// Ranks each offer, draws outcomes and donation, and splits the codes.
fn assemble(
    schema: &GroupSchema,
    offers: Vec<OfferDraft>,
    config: &SimulationConfig,
    rng: &mut ChaCha20Rng,
) -> Result<SimulatedData, SimulationError> {
    let mut records = Vec::new();
    let mut deployer = Vec::new();
    let mut ttp = Vec::new();
    let mut truth = Vec::new();
    for offer in offers {
        // descending score; a random key breaks ties
        let mut order: Vec<(usize, u64)> = (0..offer.candidates.len()).map(|i| (i, rng.random())).collect();
        order.sort_by(|a, b| {
            offer.candidates[b.0]
                .score
                .total_cmp(&offer.candidates[a.0].score)
                .then(a.1.cmp(&b.1))
        });
        for (pos, &(i, _)) in order.iter().enumerate() {
            let c = &offer.candidates[i];
            let rank = pos as u32 + 1;
            let mut positive = rank <= config.shortlist;
            if rng.random::<f64>() < config.outcome_noise {
                positive = !positive;
            }
            let donated = match config.timing {
                DonationTiming::PostDecision if !positive => c
                    .donated
                    .iter()
                    .map(|&d| d && rng.random::<f64>() < config.rejected_donation_factor)
                    .collect(),
                _ => c.donated.clone(),
            };
            let codes = AttributeCodes(
                c.categories
                    .iter()
                    .zip(&donated)
                    .enumerate()
                    .map(|(j, (&cat, &d))| if d { cat } else { schema.dimension(j).dummy_code() })
                    .collect(),
            );
            let linkage_id = format!("lnk-{:016x}{:016x}", rng.random::<u64>(), rng.random::<u64>());
            let candidate_id = format!("{}-c{:03}", offer.id, i + 1);
            let (d, t) = split(&linkage_id, &codes, rng);
            deployer.push(d);
            ttp.push(t);
            records.push(CandidateRecord {
                candidate_id: candidate_id.clone(),
                linkage_id: linkage_id.clone(),
                offer_id: offer.id.clone(),
                job_title_class: offer.title.clone(),
                company_id: offer.company.clone(),
                rank,
                score: c.score,
                outcome: positive as u8,
                qualified: c.qualified as u8,
                timestamp: config.start_date + Days::new(c.day),
            });
            truth.push(GroundTruth {
                linkage_id,
                candidate_id,
                offer_id: offer.id.clone(),
                categories: c.categories.clone(),
                donated,
                shared_codes: codes,
            });
        }
    }
    Ok(SimulatedData {
        schema: schema.clone(),
        records,
        deployer_shares: ShareStore::new(Party::Deployer, deployer)?,
        ttp_shares: ShareStore::new(Party::Ttp, ttp)?,
        ground_truth: truth,
    })
}

/// Generates a dataset from `config`; identical configs give identical data.
pub fn generate(config: &SimulationConfig) -> Result<SimulatedData, SimulationError> {
    config.validate()?;
    let mut rng = crate::seeded_rng(config.seed);
    let schema = &config.schema;
    let prevalence: Vec<Vec<f64>> = if config.prevalence.is_empty() {
        schema
            .dimensions()
            .iter()
            .map(|d| vec![1.0 / d.categories.len() as f64; d.categories.len()])
            .collect()
    } else {
        config.prevalence.clone()
    };
    let overrides: Vec<(usize, u32, f64)> = config
        .donation_overrides
        .iter()
        .map(|o| config.category(&o.dimension, &o.category).map(|(j, c)| (j, c, o.rate)))
        .collect::<Result<_, _>>()?;
    let biases: Vec<(usize, u32, f64)> = config
        .score_bias
        .iter()
        .map(|b| config.category(&b.dimension, &b.category).map(|(j, c)| (j, c, b.shift)))
        .collect::<Result<_, _>>()?;
    let span = (config.end_date - config.start_date).num_days() as u64;

    let mut offers = Vec::with_capacity(config.offers);
    for o in 0..config.offers {
        let size = rng.random_range(config.min_offer_size..=config.max_offer_size);
        let title = config.job_titles[rng.random_range(0..config.job_titles.len())].clone();
        let company = config.companies[rng.random_range(0..config.companies.len())].clone();
        let day = rng.random_range(0..=span);
        let candidates = (0..size)
            .map(|_| {
                let categories: Vec<u32> = prevalence.iter().map(|p| pick(&mut rng, p)).collect();
                let rate = overrides
                    .iter()
                    .find(|&&(j, c, _)| categories[j] == c)
                    .map_or(config.donation_rate, |o| o.2);
                let donor = rng.random::<f64>() < rate;
                let donated = (0..schema.len())
                    .map(|_| donor && rng.random::<f64>() >= config.withhold_rate)
                    .collect();
                let shift: f64 = biases.iter().filter(|&&(j, c, _)| categories[j] == c).map(|b| b.2).sum();
                let raw: f64 = rng.random::<f64>() + shift;
                Draft {
                    categories,
                    donated,
                    score: (raw.clamp(0.0, 1.0) * 1e4).round() / 1e4,
                    qualified: rng.random::<f64>() < config.qualification_rate,
                    day: rng.random_range(0..=day),
                }
            })
            .collect();
        offers.push(OfferDraft { id: format!("offer-{:04}", o + 1), title, company, candidates });
    }
    assemble(schema, offers, config, &mut rng)
}

/// Focal offer of the reference scenario.
pub const USE_CASE_FOCAL_OFFER: &str = "A1";
pub const USE_CASE_FOCAL_TITLE: &str = "data-scientist";
pub const USE_CASE_SEED: u64 = 20_250_630;

/// The reference monitoring scenario: three offers in which the focal offer
/// shows 13 of 33 donors female (39.39%), its job title 20 of 57 (35.09%),
/// and the platform 42 of 97 (43.30%).
pub fn use_case_dataset() -> SimulatedData {
    // (offer, title, company, female, male, non-donors)
    let plan = [
        ("A1", USE_CASE_FOCAL_TITLE, "acme", 13, 20, 7),
        ("A2", USE_CASE_FOCAL_TITLE, "globex", 7, 17, 6),
        ("B1", "sales-manager", "acme", 22, 18, 5),
    ];
    let config = SimulationConfig {
        seed: USE_CASE_SEED,
        shortlist: 8,
        outcome_noise: 0.05,
        ..SimulationConfig::default()
    };
    let schema = GroupSchema::gender_age();
    let mut rng = crate::seeded_rng(USE_CASE_SEED);
    let offers = plan
        .iter()
        .map(|&(id, title, company, female, male, hidden)| {
            let genders = std::iter::repeat_n(0u32, female)
                .chain(std::iter::repeat_n(1, male))
                .chain(std::iter::repeat_n(1, hidden));
            let candidates = genders
                .enumerate()
                .map(|(i, g)| Draft {
                    categories: vec![g, (i % 3) as u32],
                    donated: vec![i < female + male; 2],
                    score: (rng.random::<f64>() * 1e4).round() / 1e4,
                    qualified: rng.random::<f64>() < config.qualification_rate,
                    day: rng.random_range(0..150),
                })
                .collect();
            OfferDraft { id: id.into(), title: title.into(), company: company.into(), candidates }
        })
        .collect();
    assemble(&schema, offers, &config, &mut rng).expect("static scenario is valid")
}

/// Single-dimension schema with the given labels.
pub fn single_dimension_schema(name: &str, categories: &[&str]) -> GroupSchema {
    GroupSchema::new(vec![Dimension::new(name, categories)]).expect("valid schema")
}
