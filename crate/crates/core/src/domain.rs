//! Shared domain types: the attribute schema and its code assignment,
//! candidate records, group selectors and revealed metric aggregates.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("schema has no dimensions")]
    Empty,
    #[error("dimension {0:?} needs at least two categories")]
    TooFewCategories(String),
    #[error("dimension {dimension:?} lists category {category:?} twice")]
    DuplicateCategory { dimension: String, category: String },
    #[error("duplicate dimension name {0:?}")]
    DuplicateDimension(String),
    #[error("unknown category {category:?} for dimension {dimension:?}")]
    UnknownLabel { dimension: String, category: String },
    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("code {code} is outside 0..={dummy} for dimension {dimension:?}")]
    CodeOutOfRange { dimension: String, code: u32, dummy: u32 },
    #[error("selector must specify at least one dimension")]
    EmptySelector,
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("reading schema: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing schema: {0}")]
    Json(#[from] serde_json::Error),
}

/// One protected attribute with its ordered category labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub categories: Vec<String>,
}

impl Dimension {
    pub fn new(name: impl Into<String>, categories: &[&str]) -> Self {
        Dimension {
            name: name.into(),
            categories: categories.iter().map(|c| c.to_string()).collect(),
        }
    }

    /// Number of valid categories, `m_j`.
    pub fn size(&self) -> u32 {
        self.categories.len() as u32
    }

    /// Sentinel code for "not donated": one past the last valid code.
    pub fn dummy_code(&self) -> u32 {
        self.size()
    }

    pub fn code_of(&self, label: &str) -> Option<u32> {
        self.categories
            .iter()
            .position(|c| c == label)
            .map(|i| i as u32)
    }

    pub fn label_of(&self, code: u32) -> Option<&str> {
        self.categories.get(code as usize).map(String::as_str)
    }
}

/// Ordered list of protected-attribute dimensions.
///
/// Category order is a wire contract: the i-th label of a dimension has code
/// `i`, and the dimension's dummy code is its category count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupSchema {
    dimensions: Vec<Dimension>,
}

#[derive(Deserialize)]
struct RawSchema {
    dimensions: Vec<Dimension>,
}

impl<'de> Deserialize<'de> for GroupSchema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSchema::deserialize(d)?;
        GroupSchema::new(raw.dimensions).map_err(serde::de::Error::custom)
    }
}

impl GroupSchema {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self, SchemaError> {
        if dimensions.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut names = HashSet::new();
        for dim in &dimensions {
            if !names.insert(dim.name.as_str()) {
                return Err(SchemaError::DuplicateDimension(dim.name.clone()));
            }
            if dim.categories.len() < 2 {
                return Err(SchemaError::TooFewCategories(dim.name.clone()));
            }
            let mut seen = HashSet::new();
            for c in &dim.categories {
                if !seen.insert(c.as_str()) {
                    return Err(SchemaError::DuplicateCategory {
                        dimension: dim.name.clone(),
                        category: c.clone(),
                    });
                }
            }
        }
        Ok(GroupSchema { dimensions })
    }

    /// Gender x three age buckets, the attributes used in the reference
    /// deployment.
    pub fn gender_age() -> Self {
        GroupSchema::new(vec![
            Dimension::new("gender", &["female", "male", "other"]),
            Dimension::new("age_bucket", &["<27", "27-37", ">37"]),
        ])
        .expect("static schema is valid")
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    pub fn dimension(&self, index: usize) -> &Dimension {
        &self.dimensions[index]
    }

    pub fn dimension_index(&self, name: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d.name == name)
    }

    pub fn dummy_codes(&self) -> AttributeCodes {
        AttributeCodes(self.dimensions.iter().map(Dimension::dummy_code).collect())
    }

    /// Maps per-dimension labels to codes. `None` entries become the
    /// dimension's dummy code.
    pub fn encode<S: AsRef<str>>(&self, values: &[Option<S>]) -> Result<AttributeCodes, SchemaError> {
        if values.len() != self.dimensions.len() {
            return Err(SchemaError::Arity {
                expected: self.dimensions.len(),
                got: values.len(),
            });
        }
        let codes = self
            .dimensions
            .iter()
            .zip(values)
            .map(|(dim, value)| match value {
                None => Ok(dim.dummy_code()),
                Some(label) => dim.code_of(label.as_ref()).ok_or_else(|| SchemaError::UnknownLabel {
                    dimension: dim.name.clone(),
                    category: label.as_ref().to_string(),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AttributeCodes(codes))
    }

    /// Encoding for a candidate who donated nothing.
    pub fn encode_non_donor(&self) -> AttributeCodes {
        self.dummy_codes()
    }

    /// Inverse of [`encode`](Self::encode): dummy codes decode to `None`.
    pub fn decode(&self, codes: &AttributeCodes) -> Result<Vec<Option<String>>, SchemaError> {
        self.check_codes(codes)?;
        Ok(self
            .dimensions
            .iter()
            .zip(codes.as_slice())
            .map(|(dim, &code)| dim.label_of(code).map(str::to_string))
            .collect())
    }

    pub fn check_codes(&self, codes: &AttributeCodes) -> Result<(), SchemaError> {
        if codes.len() != self.dimensions.len() {
            return Err(SchemaError::Arity {
                expected: self.dimensions.len(),
                got: codes.len(),
            });
        }
        for (dim, &code) in self.dimensions.iter().zip(codes.as_slice()) {
            if code > dim.dummy_code() {
                return Err(SchemaError::CodeOutOfRange {
                    dimension: dim.name.clone(),
                    code,
                    dummy: dim.dummy_code(),
                });
            }
        }
        Ok(())
    }

    /// Every single-dimension group followed by every fully intersectional
    /// group (all dimensions specified), in code order.
    pub fn default_selectors(&self) -> Vec<GroupSelector> {
        let d = self.dimensions.len();
        let mut out = Vec::new();
        for (j, dim) in self.dimensions.iter().enumerate() {
            for code in 0..dim.size() {
                let mut choice = vec![None; d];
                choice[j] = Some(code);
                out.push(GroupSelector(choice));
            }
        }
        if d >= 2 {
            let mut current = vec![0u32; d];
            loop {
                out.push(GroupSelector(current.iter().map(|&c| Some(c)).collect()));
                // odometer over the category grid, last dimension fastest
                let mut j = d;
                loop {
                    if j == 0 {
                        return out;
                    }
                    j -= 1;
                    current[j] += 1;
                    if current[j] < self.dimensions[j].size() {
                        break;
                    }
                    current[j] = 0;
                }
            }
        }
        out
    }

    /// Stable content fingerprint (hex SHA-256 of the canonical JSON).
    pub fn fingerprint(&self) -> String {
        crate::fingerprint_json(self)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_json_file(&self, path: &Path) -> Result<(), SchemaError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Per-dimension attribute codes, `0..m_j` valid and `m_j` the dummy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeCodes(pub Vec<u32>);

impl AttributeCodes {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Intersectional group: a category code or "any" per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupSelector(pub Vec<Option<u32>>);

impl GroupSelector {
    pub fn new(schema: &GroupSchema, choice: Vec<Option<u32>>) -> Result<Self, SchemaError> {
        let selector = GroupSelector(choice);
        selector.validate(schema)?;
        Ok(selector)
    }

    /// Builds a selector from `(dimension, label)` pairs; unnamed dimensions
    /// are "any".
    pub fn from_labels(schema: &GroupSchema, pairs: &[(&str, &str)]) -> Result<Self, SchemaError> {
        let mut choice = vec![None; schema.len()];
        for (dim_name, label) in pairs {
            let j = schema
                .dimension_index(dim_name)
                .ok_or_else(|| SchemaError::UnknownDimension(dim_name.to_string()))?;
            let dim = schema.dimension(j);
            let code = dim.code_of(label).ok_or_else(|| SchemaError::UnknownLabel {
                dimension: dim.name.clone(),
                category: label.to_string(),
            })?;
            choice[j] = Some(code);
        }
        GroupSelector::new(schema, choice)
    }

    pub fn validate(&self, schema: &GroupSchema) -> Result<(), SchemaError> {
        if self.0.len() != schema.len() {
            return Err(SchemaError::Arity {
                expected: schema.len(),
                got: self.0.len(),
            });
        }
        if self.0.iter().all(Option::is_none) {
            return Err(SchemaError::EmptySelector);
        }
        for (dim, choice) in schema.dimensions().iter().zip(&self.0) {
            if let Some(code) = *choice {
                if code >= dim.size() {
                    return Err(SchemaError::CodeOutOfRange {
                        dimension: dim.name.clone(),
                        code,
                        dummy: dim.dummy_code(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Indices of the specified dimensions.
    pub fn specified(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.map(|_| j))
            .collect()
    }

    /// Does a clear code vector belong to this group?
    pub fn matches(&self, codes: &AttributeCodes) -> bool {
        self.0
            .iter()
            .zip(codes.as_slice())
            .all(|(want, &have)| want.is_none_or(|w| w == have))
    }

    /// Human-readable label such as `gender=female & age_bucket=<27`.
    pub fn label(&self, schema: &GroupSchema) -> String {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(j, c)| {
                c.map(|code| {
                    let dim = schema.dimension(j);
                    format!("{}={}", dim.name, dim.label_of(code).unwrap_or("?"))
                })
            })
            .collect::<Vec<_>>()
            .join(" & ")
    }
}

/// One applicant's non-sensitive pipeline data as held by the deployer.
///
/// `outcome` and `qualified` are kept as raw integers so malformed input can
/// be reported by [`validate_offer`] instead of failing to parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub candidate_id: String,
    pub linkage_id: String,
    pub offer_id: String,
    pub job_title_class: String,
    pub company_id: String,
    pub rank: u32,
    pub score: f64,
    pub outcome: u8,
    pub qualified: u8,
    pub timestamp: NaiveDate,
}

impl CandidateRecord {
    pub fn positive(&self) -> bool {
        self.outcome == 1
    }

    pub fn is_qualified(&self) -> bool {
        self.qualified == 1
    }
}

/// Exact column order of the candidate CSV.
pub const CANDIDATE_HEADER: [&str; 10] = [
    "candidate_id",
    "linkage_id",
    "offer_id",
    "job_title_class",
    "company_id",
    "rank",
    "score",
    "outcome",
    "qualified",
    "timestamp",
];

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("candidate file: {0}")]
    Csv(#[from] csv::Error),
    #[error("candidate file header must be {expected:?}, found {found:?}")]
    Header { expected: String, found: String },
    #[error("candidate file: {0}")]
    Io(#[from] std::io::Error),
}

pub fn read_candidates_csv(path: &Path) -> Result<Vec<CandidateRecord>, RecordError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<&str> = reader.headers()?.iter().collect();
    if header != CANDIDATE_HEADER {
        return Err(RecordError::Header {
            expected: CANDIDATE_HEADER.join(","),
            found: header.join(","),
        });
    }
    Ok(reader.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_candidates_csv(path: &Path, records: &[CandidateRecord]) -> Result<(), RecordError> {
    let mut writer = csv::Writer::from_path(path)?;
    if records.is_empty() {
        writer.write_record(CANDIDATE_HEADER)?;
    }
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateRank { rank: u32 },
    MissingRank { rank: u32 },
    RankOutOfRange { rank: u32, offer_size: usize },
    OutcomeNotBinary { value: u8 },
    QualifiedNotBinary { value: u8 },
    ScoreOutOfRange { value: f64 },
    MixedOffer { offer_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `None` for violations that belong to the offer, not one candidate
    /// (e.g. a missing rank).
    pub candidate_id: Option<String>,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let who = self.candidate_id.as_deref().unwrap_or("<offer>");
        match &self.kind {
            ViolationKind::DuplicateRank { rank } => write!(f, "{who}: duplicate rank {rank}"),
            ViolationKind::MissingRank { rank } => write!(f, "{who}: missing rank {rank}"),
            ViolationKind::RankOutOfRange { rank, offer_size } => {
                write!(f, "{who}: rank {rank} outside 1..={offer_size}")
            }
            ViolationKind::OutcomeNotBinary { value } => write!(f, "{who}: outcome {value} not binary"),
            ViolationKind::QualifiedNotBinary { value } => {
                write!(f, "{who}: qualified {value} not binary")
            }
            ViolationKind::ScoreOutOfRange { value } => write!(f, "{who}: score {value} outside [0,1]"),
            ViolationKind::MixedOffer { offer_id } => {
                write!(f, "{who}: belongs to offer {offer_id}, not the offer under validation")
            }
        }
    }
}

/// Checks one offer's records: ranks must be a permutation of `1..=N` and the
/// binary flags must be 0/1. Returns every violation found.
pub fn validate_offer(records: &[CandidateRecord]) -> Result<(), Vec<Violation>> {
    let n = records.len();
    let mut violations = Vec::new();
    let mut holders: BTreeMap<u32, usize> = BTreeMap::new();
    let offer_id = records.first().map(|r| r.offer_id.as_str());
    for rec in records {
        let who = Some(rec.candidate_id.clone());
        if Some(rec.offer_id.as_str()) != offer_id {
            violations.push(Violation {
                candidate_id: who.clone(),
                kind: ViolationKind::MixedOffer { offer_id: rec.offer_id.clone() },
            });
        }
        if rec.rank == 0 || rec.rank as usize > n {
            violations.push(Violation {
                candidate_id: who.clone(),
                kind: ViolationKind::RankOutOfRange { rank: rec.rank, offer_size: n },
            });
        } else {
            let count = holders.entry(rec.rank).or_insert(0);
            *count += 1;
            if *count == 2 {
                violations.push(Violation {
                    candidate_id: who.clone(),
                    kind: ViolationKind::DuplicateRank { rank: rec.rank },
                });
            }
        }
        if rec.outcome > 1 {
            violations.push(Violation {
                candidate_id: who.clone(),
                kind: ViolationKind::OutcomeNotBinary { value: rec.outcome },
            });
        }
        if rec.qualified > 1 {
            violations.push(Violation {
                candidate_id: who.clone(),
                kind: ViolationKind::QualifiedNotBinary { value: rec.qualified },
            });
        }
        if !(0.0..=1.0).contains(&rec.score) {
            violations.push(Violation {
                candidate_id: who,
                kind: ViolationKind::ScoreOutOfRange { value: rec.score },
            });
        }
    }
    for rank in 1..=n as u32 {
        if !holders.contains_key(&rank) {
            violations.push(Violation {
                candidate_id: None,
                kind: ViolationKind::MissingRank { rank },
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// The six metric families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    PoolDiversity,
    GroupExposure,
    SkewAtK,
    DrdAtK,
    DemographicParity,
    EqualOpportunity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::PoolDiversity,
        MetricKind::GroupExposure,
        MetricKind::SkewAtK,
        MetricKind::DrdAtK,
        MetricKind::DemographicParity,
        MetricKind::EqualOpportunity,
    ];

    /// Proportion-kind metrics get a binomial interval.
    pub fn is_proportion(self) -> bool {
        matches!(
            self,
            MetricKind::PoolDiversity | MetricKind::DemographicParity | MetricKind::EqualOpportunity
        )
    }

    /// Metrics whose numerators are fixed-point scaled weights.
    pub fn is_fixed_point(self) -> bool {
        matches!(self, MetricKind::GroupExposure | MetricKind::DrdAtK)
    }

    pub fn uses_cutoff(self) -> bool {
        matches!(self, MetricKind::SkewAtK | MetricKind::DrdAtK)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::PoolDiversity => "pool_diversity",
            MetricKind::GroupExposure => "group_exposure",
            MetricKind::SkewAtK => "skew_at_k",
            MetricKind::DrdAtK => "drd_at_k",
            MetricKind::DemographicParity => "demographic_parity",
            MetricKind::EqualOpportunity => "equal_opportunity",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Offer,
    JobTitle,
    Company,
    Overall,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Offer, Level::JobTitle, Level::Company, Level::Overall];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Offer => "offer",
            Level::JobTitle => "job_title",
            Level::Company => "company",
            Level::Overall => "overall",
        }
    }
}

/// An organizational unit at one of the four aggregation levels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitKey {
    pub level: Level,
    pub id: String,
}

impl UnitKey {
    pub fn offer(id: impl Into<String>) -> Self {
        UnitKey { level: Level::Offer, id: id.into() }
    }

    pub fn job_title(id: impl Into<String>) -> Self {
        UnitKey { level: Level::JobTitle, id: id.into() }
    }

    pub fn company(id: impl Into<String>) -> Self {
        UnitKey { level: Level::Company, id: id.into() }
    }

    pub fn overall() -> Self {
        UnitKey { level: Level::Overall, id: "all".into() }
    }
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.level.as_str(), self.id)
    }
}

/// Serializes `u64` as a decimal string.
pub(crate) mod decimal {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Integers revealed for one metric cell, before division.
///
/// Fixed-point fields carry weights scaled by the aggregate's `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Revealed {
    /// Group count over donors; `total` is every candidate in the unit.
    PoolDiversity {
        #[serde(with = "decimal")]
        count: u64,
        #[serde(with = "decimal")]
        donors: u64,
        #[serde(with = "decimal")]
        total: u64,
    },
    /// Plain ratio (group exposure, demographic parity, equal opportunity).
    Ratio {
        #[serde(with = "decimal")]
        numerator: u64,
        #[serde(with = "decimal")]
        denominator: u64,
    },
    Skew {
        #[serde(with = "decimal")]
        top_count: u64,
        #[serde(with = "decimal")]
        top_donors: u64,
        #[serde(with = "decimal")]
        pool_count: u64,
        #[serde(with = "decimal")]
        pool_donors: u64,
    },
    /// Discounted in-group and out-group mass within the top k.
    Drd {
        #[serde(with = "decimal")]
        in_group: u64,
        #[serde(with = "decimal")]
        out_group: u64,
    },
}

impl Revealed {
    /// Metric value after clear division, `None` when a denominator is zero.
    pub fn value(&self, scale: u64) -> Option<f64> {
        fn ratio(n: u64, d: u64) -> Option<f64> {
            (d > 0).then(|| n as f64 / d as f64)
        }
        match *self {
            Revealed::PoolDiversity { count, donors, .. } => ratio(count, donors),
            Revealed::Ratio { numerator, denominator } => ratio(numerator, denominator),
            Revealed::Skew { top_count, top_donors, pool_count, pool_donors } => {
                Some(ratio(top_count, top_donors)? - ratio(pool_count, pool_donors)?)
            }
            Revealed::Drd { in_group, out_group } => {
                Some((in_group as f64 - out_group as f64) / scale as f64)
            }
        }
    }
}

/// Outcome of one metric cell at the privacy boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AggregateStatus {
    Revealed {
        #[serde(with = "decimal")]
        n_g: u64,
        values: Revealed,
    },
    /// Privacy gate fired: group size below `k_min`. Nothing else is known.
    Suppressed,
    /// Could not be evaluated (e.g. cutoff larger than the offer).
    Unavailable { reason: String },
}

/// A revealed (or withheld) aggregate for one metric, group and unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub kind: MetricKind,
    pub group: GroupSelector,
    pub unit: UnitKey,
    /// Fixed-point scale of weighted fields; 1 for pure counts.
    #[serde(with = "decimal")]
    pub scale: u64,
    #[serde(flatten)]
    pub status: AggregateStatus,
}

impl MetricAggregate {
    pub fn is_suppressed(&self) -> bool {
        matches!(self.status, AggregateStatus::Suppressed)
    }

    pub fn revealed(&self) -> Option<(&Revealed, u64)> {
        match &self.status {
            AggregateStatus::Revealed { n_g, values } => Some((values, *n_g)),
            _ => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.revealed().and_then(|(r, _)| r.value(self.scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, rank: u32) -> CandidateRecord {
        CandidateRecord {
            candidate_id: id.into(),
            linkage_id: format!("l-{id}"),
            offer_id: "o1".into(),
            job_title_class: "t".into(),
            company_id: "c".into(),
            rank,
            score: 0.5,
            outcome: 0,
            qualified: 1,
            timestamp: NaiveDate::from_ymd_opt(2025, 1, 1).unwrap(),
        }
    }

    #[test]
    fn candidate_csv_roundtrip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let recs = vec![rec("a", 1), rec("b", 2)];
        write_candidates_csv(&p, &recs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(&CANDIDATE_HEADER.join(",")));
        assert_eq!(read_candidates_csv(&p).unwrap(), recs);
        write_candidates_csv(&p, &[]).unwrap();
        assert!(read_candidates_csv(&p).unwrap().is_empty());
        std::fs::write(&p, "candidate_id,offer_id\nx,y\n").unwrap();
        assert!(matches!(read_candidates_csv(&p), Err(RecordError::Header { .. })));
    }

    #[test]
    fn encode_first_category_and_dummy() {
        let schema = GroupSchema::gender_age();
        let codes = schema.encode(&[Some("female"), None]).unwrap();
        assert_eq!(codes.0, vec![0, 3]);
        assert_eq!(schema.encode_non_donor().0, vec![3, 3]);
        assert_eq!(schema.encode::<&str>(&[None, None]).unwrap().0, vec![3, 3]);
    }

    #[test]
    fn age_bucket_order_is_as_listed() {
        let schema = GroupSchema::gender_age();
        assert_eq!(schema.encode(&[None, Some("27-37")]).unwrap().0[1], 1);
        assert_eq!(schema.encode(&[None, Some("<27")]).unwrap().0[1], 0);
        assert_eq!(schema.encode(&[None, Some(">37")]).unwrap().0[1], 2);
    }

    #[test]
    fn unknown_label_is_schema_error() {
        let schema = GroupSchema::gender_age();
        let err = schema.encode(&[Some("robot"), None]).unwrap_err();
        assert!(matches!(err, SchemaError::UnknownLabel { .. }));
        assert!(matches!(
            schema.encode(&[Some("female")]).unwrap_err(),
            SchemaError::Arity { .. }
        ));
    }

    #[test]
    fn schema_invariants_enforced() {
        assert!(GroupSchema::new(vec![]).is_err());
        assert!(GroupSchema::new(vec![Dimension::new("x", &["a"])]).is_err());
        assert!(GroupSchema::new(vec![Dimension::new("x", &["a", "a"])]).is_err());
        let json = r#"{"dimensions":[{"name":"g","categories":["a"]}]}"#;
        assert!(serde_json::from_str::<GroupSchema>(json).is_err());
    }

    #[test]
    fn schema_json_order_defines_codes() {
        let json = r#"{"dimensions":[{"name":"g","categories":["z","a","m"]}]}"#;
        let schema: GroupSchema = serde_json::from_str(json).unwrap();
        assert_eq!(schema.encode(&[Some("a")]).unwrap().0, vec![1]);
        assert_eq!(schema.dimension(0).dummy_code(), 3);
        let back = serde_json::to_string(&schema).unwrap();
        assert_eq!(back, json);
    }

    #[test]
    fn ranks_ok() {
        let recs = vec![rec("a", 1), rec("b", 2), rec("c", 3)];
        assert!(validate_offer(&recs).is_ok());
        assert!(validate_offer(&[]).is_ok());
    }

    #[test]
    fn duplicate_and_missing_rank() {
        let recs = vec![rec("a", 1), rec("b", 1), rec("c", 3)];
        let v = validate_offer(&recs).unwrap_err();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].candidate_id.as_deref(), Some("b"));
        assert_eq!(v[0].kind, ViolationKind::DuplicateRank { rank: 1 });
        assert_eq!(v[1].kind, ViolationKind::MissingRank { rank: 2 });
    }

    #[test]
    fn outcome_not_binary() {
        let mut r = rec("a", 1);
        r.outcome = 2;
        let v = validate_offer(&[r]).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::OutcomeNotBinary { value: 2 });
        assert_eq!(v[0].candidate_id.as_deref(), Some("a"));
    }

    #[test]
    fn other_violations() {
        let mut r = rec("a", 5);
        r.qualified = 7;
        r.score = 1.5;
        let kinds: Vec<_> = validate_offer(&[r]).unwrap_err().into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::RankOutOfRange { rank: 5, offer_size: 1 }));
        assert!(kinds.contains(&ViolationKind::QualifiedNotBinary { value: 7 }));
        assert!(kinds.contains(&ViolationKind::ScoreOutOfRange { value: 1.5 }));
        assert!(kinds.contains(&ViolationKind::MissingRank { rank: 1 }));
    }

    #[test]
    fn selector_validation_and_matching() {
        let schema = GroupSchema::gender_age();
        assert!(GroupSelector::new(&schema, vec![None, None]).is_err());
        assert!(GroupSelector::new(&schema, vec![Some(3), None]).is_err());
        let female = GroupSelector::from_labels(&schema, &[("gender", "female")]).unwrap();
        let female_young =
            GroupSelector::from_labels(&schema, &[("gender", "female"), ("age_bucket", "<27")]).unwrap();
        let donor = schema.encode(&[Some("female"), Some("<27")]).unwrap();
        let mid = schema.encode(&[Some("female"), Some("27-37")]).unwrap();
        assert!(female.matches(&donor));
        assert!(female_young.matches(&donor));
        assert!(!female_young.matches(&mid));
        assert!(!female.matches(&schema.encode_non_donor()));
        assert_eq!(female_young.label(&schema), "gender=female & age_bucket=<27");
    }

    #[test]
    fn default_selectors_cover_singles_and_grid() {
        let schema = GroupSchema::gender_age();
        let sel = schema.default_selectors();
        assert_eq!(sel.len(), 6 + 9);
        assert_eq!(sel[0].0, vec![Some(0), None]);
        assert_eq!(sel[6].0, vec![Some(0), Some(0)]);
        assert_eq!(sel[7].0, vec![Some(0), Some(1)]);
        assert_eq!(sel[14].0, vec![Some(2), Some(2)]);
        let unique: HashSet<_> = sel.iter().collect();
        assert_eq!(unique.len(), sel.len());
    }

    #[test]
    fn aggregate_json_uses_decimal_strings() {
        let agg = MetricAggregate {
            kind: MetricKind::GroupExposure,
            group: GroupSelector(vec![Some(0), None]),
            unit: UnitKey::offer("o1"),
            scale: 65536,
            status: AggregateStatus::Revealed {
                n_g: 7,
                values: Revealed::Ratio { numerator: 65536, denominator: 98304 },
            },
        };
        let json = serde_json::to_value(&agg).unwrap();
        assert_eq!(json["scale"], "65536");
        assert_eq!(json["status"], "revealed");
        assert_eq!(json["values"]["numerator"], "65536");
        let back: MetricAggregate = serde_json::from_value(json).unwrap();
        assert_eq!(back, agg);
        assert!((agg.value().unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let suppressed = MetricAggregate { status: AggregateStatus::Suppressed, ..agg };
        let json = serde_json::to_string(&suppressed).unwrap();
        assert!(!json.contains("numerator"));
        assert!(!json.contains("n_g"));
    }

    fn schema_strategy() -> impl Strategy<Value = GroupSchema> {
        prop::collection::vec(2usize..6, 1..4).prop_map(|sizes| {
            let dims = sizes
                .iter()
                .enumerate()
                .map(|(j, &m)| Dimension {
                    name: format!("d{j}"),
                    categories: (0..m).map(|c| format!("c{c}")).collect(),
                })
                .collect();
            GroupSchema::new(dims).unwrap()
        })
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(schema in schema_strategy(), picks in prop::collection::vec(0usize..7, 3)) {
            let labels: Vec<Option<String>> = schema
                .dimensions()
                .iter()
                .zip(&picks)
                .map(|(d, &p)| d.categories.get(p).cloned())
                .collect();
            let codes = schema.encode(&labels).unwrap();
            for (dim, (&code, label)) in schema.dimensions().iter().zip(codes.as_slice().iter().zip(&labels)) {
                // absent values never receive a valid code
                prop_assert_eq!(label.is_none(), code == dim.dummy_code());
            }
            prop_assert_eq!(schema.decode(&codes).unwrap(), labels);
        }
    }
}
