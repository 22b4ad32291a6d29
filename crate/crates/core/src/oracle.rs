//! Plaintext reference implementation computed straight from ground truth.
//!
//! Written independently of the secure circuits and of the post-processing
//! code: counts are exact integers, weights are evaluated in `f64` from their
//! formulas, and rollups are summed directly. Agreement between the two is
//! evidence that the protocol computes what it should.

use std::collections::{BTreeMap, HashMap};

use crate::domain::{AggregateStatus, CandidateRecord, GroupSchema, GroupSelector, MetricAggregate, MetricKind, Revealed, UnitKey};
use crate::metrics::{AttentionModel, MetricConfig};
use crate::simulator::GroundTruth;

/// Exact oracle value of one metric cell.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleCell {
    Suppressed,
    Unavailable,
    PoolDiversity { count: u64, donors: u64, total: u64 },
    /// `numerator / denominator` (demographic parity, equal opportunity).
    Fraction { numerator: u64, denominator: u64 },
    Skew { top: u64, top_donors: u64, pool: u64, pool_donors: u64 },
    /// Real-valued metrics (group exposure, DRD@k); `None` if undefined.
    Real(Option<f64>),
}

impl OracleCell {
    pub fn value(&self) -> Option<f64> {
        let div = |n: u64, d: u64| if d == 0 { None } else { Some(n as f64 / d as f64) };
        match *self {
            OracleCell::Suppressed | OracleCell::Unavailable => None,
            OracleCell::PoolDiversity { count, donors, .. } => div(count, donors),
            OracleCell::Fraction { numerator, denominator } => div(numerator, denominator),
            OracleCell::Skew { top, top_donors, pool, pool_donors } => {
                Some(div(top, top_donors)? - div(pool, pool_donors)?)
            }
            OracleCell::Real(v) => v,
        }
    }
}

/// Oracle result for one (metric, group, offer).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub kind: MetricKind,
    pub group: GroupSelector,
    pub offer_id: String,
    /// Members of the group in the offer.
    pub n_g: u64,
    pub cell: OracleCell,
}

fn weight(model: &AttentionModel, rank: u32) -> f64 {
    let r = rank as f64;
    match model {
        AttentionModel::LogDiscount => 1.0 / (r + 1.0).ln() * std::f64::consts::LN_2,
        AttentionModel::Geometric { decay } => decay.powf(r - 1.0),
        AttentionModel::Uniform => 1.0,
        AttentionModel::Table { weights } => *weights.get(rank as usize - 1).unwrap_or(weights.last().expect("nonempty")),
    }
}

fn is_member(t: &GroundTruth, g: &GroupSelector) -> bool {
    g.0.iter()
        .enumerate()
        .all(|(j, want)| match want {
            None => true,
            Some(c) => t.donated[j] && t.categories[j] == *c,
        })
}

fn is_donor(t: &GroundTruth, g: &GroupSelector) -> bool {
    g.0.iter().enumerate().all(|(j, want)| want.is_none() || t.donated[j])
}

/// Evaluates every configured metric and group for one offer in the clear.
pub fn oracle_offer(
    schema: &GroupSchema,
    config: &MetricConfig,
    records: &[CandidateRecord],
    truth: &HashMap<&str, &GroundTruth>,
) -> Vec<OracleResult> {
    let groups = if config.groups.is_empty() { schema.default_selectors() } else { config.groups.clone() };
    let n = records.len() as u64;
    let k = config.k as u64;
    let mut out = Vec::new();
    for &kind in &config.kinds {
        for g in &groups {
            let rows: Vec<(&CandidateRecord, bool, bool)> = records
                .iter()
                .map(|r| {
                    let t = truth[r.linkage_id.as_str()];
                    (r, is_member(t, g), is_donor(t, g))
                })
                .collect();
            let n_g = rows.iter().filter(|x| x.1).count() as u64;
            let count = |f: &dyn Fn(&(&CandidateRecord, bool, bool)) -> bool| rows.iter().filter(|x| f(x)).count() as u64;
            let cutoff = matches!(kind, MetricKind::SkewAtK | MetricKind::DrdAtK);
            let cell = if cutoff && k > n {
                OracleCell::Unavailable
            } else if n_g < config.k_min {
                OracleCell::Suppressed
            } else {
                match kind {
                    MetricKind::PoolDiversity => OracleCell::PoolDiversity {
                        count: n_g,
                        donors: count(&|x| x.2),
                        total: n,
                    },
                    MetricKind::GroupExposure => {
                        let num: f64 = rows.iter().filter(|x| x.1).map(|x| weight(&config.attention, x.0.rank)).sum();
                        let den: f64 = rows.iter().filter(|x| x.2).map(|x| weight(&config.attention, x.0.rank)).sum();
                        OracleCell::Real((den > 0.0).then(|| num / den))
                    }
                    MetricKind::SkewAtK => OracleCell::Skew {
                        top: count(&|x| x.1 && x.0.rank as u64 <= k),
                        top_donors: count(&|x| x.2 && x.0.rank as u64 <= k),
                        pool: n_g,
                        pool_donors: count(&|x| x.2),
                    },
                    MetricKind::DrdAtK => {
                        let mut total = 0.0;
                        for (r, member, donor) in &rows {
                            if r.rank as u64 > k {
                                continue;
                            }
                            let d = weight(&config.discount, r.rank);
                            if *member {
                                total += d;
                            } else if *donor {
                                total -= d;
                            }
                        }
                        OracleCell::Real(Some(total))
                    }
                    MetricKind::DemographicParity => OracleCell::Fraction {
                        numerator: count(&|x| x.1 && x.0.outcome == 1),
                        denominator: n_g,
                    },
                    MetricKind::EqualOpportunity => OracleCell::Fraction {
                        numerator: count(&|x| x.1 && x.0.outcome == 1 && x.0.qualified == 1),
                        denominator: count(&|x| x.1 && x.0.qualified == 1),
                    },
                }
            };
            out.push(OracleResult { kind, group: g.clone(), offer_id: records[0].offer_id.clone(), n_g, cell });
        }
    }
    out
}

/// Oracle cells for every offer in `records`, keyed by offer id.
pub fn oracle_all(
    schema: &GroupSchema,
    config: &MetricConfig,
    records: &[CandidateRecord],
    truth: &[GroundTruth],
) -> BTreeMap<String, Vec<OracleResult>> {
    let by_link: HashMap<&str, &GroundTruth> = truth.iter().map(|t| (t.linkage_id.as_str(), t)).collect();
    let mut offers: BTreeMap<String, Vec<CandidateRecord>> = BTreeMap::new();
    for r in records {
        offers.entry(r.offer_id.clone()).or_default().push(r.clone());
    }
    offers
        .into_iter()
        .map(|(id, recs)| {
            let cells = oracle_offer(schema, config, &recs, &by_link);
            (id, cells)
        })
        .collect()
}

/// Differences between secure aggregates and oracle cells. Count metrics
/// must match exactly; real-valued metrics within `tolerance`.
pub fn compare(aggregates: &[MetricAggregate], oracle: &[OracleResult], tolerance: f64) -> Vec<String> {
    let mut problems = Vec::new();
    if aggregates.len() != oracle.len() {
        problems.push(format!("{} aggregates vs {} oracle cells", aggregates.len(), oracle.len()));
        return problems;
    }
    for (a, o) in aggregates.iter().zip(oracle) {
        let tag = format!("{} {:?} {}", a.kind, a.group.0, a.unit);
        if a.kind != o.kind || a.group != o.group || a.unit != UnitKey::offer(o.offer_id.clone()) {
            problems.push(format!("{tag}: cell order differs from oracle"));
            continue;
        }
        let ok = match (&a.status, &o.cell) {
            (AggregateStatus::Suppressed, OracleCell::Suppressed) => true,
            (AggregateStatus::Unavailable { .. }, OracleCell::Unavailable) => true,
            (AggregateStatus::Revealed { n_g, values }, cell) => {
                *n_g == o.n_g
                    && match (values, cell) {
                        (
                            Revealed::PoolDiversity { count, donors, total },
                            OracleCell::PoolDiversity { count: c, donors: d, total: t },
                        ) => (count, donors, total) == (c, d, t),
                        (
                            Revealed::Ratio { numerator, denominator },
                            OracleCell::Fraction { numerator: n, denominator: d },
                        ) => (numerator, denominator) == (n, d),
                        (
                            Revealed::Skew { top_count, top_donors, pool_count, pool_donors },
                            OracleCell::Skew { top, top_donors: td, pool, pool_donors: pd },
                        ) => (top_count, top_donors, pool_count, pool_donors) == (top, td, pool, pd),
                        (_, OracleCell::Real(expected)) => match (a.value(), expected) {
                            (Some(v), Some(e)) => (v - e).abs() <= tolerance,
                            (None, None) => true,
                            _ => false,
                        },
                        _ => false,
                    }
            }
            _ => false,
        };
        if !ok {
            problems.push(format!("{tag}: secure {:?} vs oracle {:?}", a.status, o.cell));
        }
    }
    problems
}

/// Wald interval recomputed from its formula.
pub fn oracle_wald(p: f64, n: u64, z: f64) -> Option<(f64, f64)> {
    if n == 0 {
        return None;
    }
    let radius = z * (p * (1.0 - p) / n as f64).sqrt();
    Some((f64::max(0.0, p - radius), f64::min(1.0, p + radius)))
}

/// `sum(n_u T_u) / sum(n_u)`.
pub fn oracle_micro(units: &[(f64, u64)]) -> Option<f64> {
    let weight: u64 = units.iter().map(|u| u.1).sum();
    if weight == 0 {
        return None;
    }
    Some(units.iter().fold(0.0, |acc, u| acc + u.0 * u.1 as f64) / weight as f64)
}

pub fn oracle_macro(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().fold(0.0, |acc, v| acc + v) / values.len() as f64)
}

/// `true` for a warning.
pub fn oracle_warns(value: f64, baseline: f64, tolerance: f64) -> bool {
    (value - baseline).abs() >= tolerance
}

/// Rolled-up oracle value for one unit above the offer level.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRollup {
    pub micro: Option<f64>,
    pub macro_: Option<f64>,
    /// Offers that contributed.
    pub units: u64,
    pub skipped: u64,
}

/// Micro and macro rollups to job titles, companies and overall, using only
/// revealed offer cells with a defined value.
pub fn oracle_rollups(
    cells: &BTreeMap<String, Vec<OracleResult>>,
    records: &[CandidateRecord],
) -> BTreeMap<(UnitKey, MetricKind, GroupSelector), OracleRollup> {
    let mut parent: HashMap<&str, (&str, &str)> = HashMap::new();
    for r in records {
        parent.insert(&r.offer_id, (&r.job_title_class, &r.company_id));
    }
    // (value, weight) list and skip count per (unit, kind, group)
    type Contributions = (Vec<(f64, u64)>, u64);
    let mut acc: BTreeMap<(UnitKey, MetricKind, GroupSelector), Contributions> = BTreeMap::new();
    for (offer, list) in cells {
        let (title, company) = parent[offer.as_str()];
        for c in list {
            let weight = match &c.cell {
                OracleCell::PoolDiversity { donors, .. } => *donors,
                OracleCell::Fraction { denominator, .. } => *denominator,
                _ => c.n_g,
            };
            let contribution = c.cell.value().filter(|_| weight > 0).map(|v| (v, weight));
            for unit in [UnitKey::job_title(title), UnitKey::company(company), UnitKey::overall()] {
                let e = acc.entry((unit, c.kind, c.group.clone())).or_default();
                match contribution {
                    Some(x) => e.0.push(x),
                    None => e.1 += 1,
                }
            }
        }
    }
    acc.into_iter()
        .map(|(key, (units, skipped))| {
            let values: Vec<f64> = units.iter().map(|u| u.0).collect();
            let rollup = OracleRollup {
                micro: oracle_micro(&units),
                macro_: oracle_macro(&values),
                units: units.len() as u64,
                skipped,
            };
            (key, rollup)
        })
        .collect()
}
