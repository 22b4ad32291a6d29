//! Group fairness metrics evaluated as secure aggregation circuits.
//!
//! Per offer, both parties compute shares of every candidate's group and
//! donor indicators, reveal the group sizes, and then reveal the numerators
//! and denominators only for groups that pass the `k_min` gate. Division
//! happens on the revealed integers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{
    AggregateStatus, CandidateRecord, GroupSchema, GroupSelector, MetricAggregate, MetricKind, Revealed,
    SchemaError, UnitKey,
};
use crate::field::FieldElement;
use crate::mpc::{equality_cost, mul_public, sub_shared, sum_shared, EqualityQuery, MpcError, Session, SharedValue, Transport};

/// Weights are encoded as `round(w * FIXED_POINT_SCALE)`.
pub const FIXED_POINT_SCALE: u64 = 1 << 16;

pub const DEFAULT_K: u32 = 10;
pub const DEFAULT_K_MIN: u64 = 5;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("invalid attention model: {0}")]
    Attention(String),
    #[error("invalid metric configuration: {0}")]
    Config(String),
    #[error("expected {expected} attribute share vectors, got {got}")]
    Linkage { expected: usize, got: usize },
}

/// Position weights `w(R)` for exposure, and the rank discount `d(R)` for
/// DRD@k.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttentionModel {
    /// `1 / log2(R + 1)`.
    #[default]
    LogDiscount,
    /// `decay^(R - 1)` with `0 < decay <= 1`.
    Geometric { decay: f64 },
    Uniform,
    /// Explicit weights for ranks `1..=len`; the last weight applies beyond.
    Table { weights: Vec<f64> },
}

impl AttentionModel {
    pub fn validate(&self) -> Result<(), MetricError> {
        match self {
            AttentionModel::LogDiscount | AttentionModel::Uniform => Ok(()),
            AttentionModel::Geometric { decay } => {
                if *decay > 0.0 && *decay <= 1.0 {
                    Ok(())
                } else {
                    Err(MetricError::Attention(format!("decay {decay} outside (0, 1]")))
                }
            }
            AttentionModel::Table { weights } => {
                if weights.is_empty() {
                    return Err(MetricError::Attention("empty weight table".into()));
                }
                if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
                    return Err(MetricError::Attention("weights must be positive".into()));
                }
                if weights.windows(2).any(|p| p[1] > p[0]) {
                    return Err(MetricError::Attention("weights must be non-increasing in rank".into()));
                }
                Ok(())
            }
        }
    }

    /// Weight for 1-based `rank`.
    pub fn weight(&self, rank: u32) -> f64 {
        assert!(rank >= 1, "ranks start at 1");
        match self {
            AttentionModel::LogDiscount => 1.0 / (rank as f64 + 1.0).log2(),
            AttentionModel::Geometric { decay } => decay.powi(rank as i32 - 1),
            AttentionModel::Uniform => 1.0,
            AttentionModel::Table { weights } => {
                let i = (rank as usize - 1).min(weights.len() - 1);
                weights[i]
            }
        }
    }

    /// Fixed-point weight, at least 1 so every position keeps positive mass.
    pub fn fixed_weight(&self, rank: u32) -> u64 {
        ((self.weight(rank) * FIXED_POINT_SCALE as f64).round() as u64).max(1)
    }
}

/// What to evaluate for each offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub kinds: Vec<MetricKind>,
    /// Groups to evaluate; empty means the schema's default selectors.
    #[serde(default)]
    pub groups: Vec<GroupSelector>,
    /// Cutoff for Skew@k and DRD@k.
    pub k: u32,
    /// Position weights for group exposure.
    pub attention: AttentionModel,
    /// Rank discount for DRD@k.
    pub discount: AttentionModel,
    /// Minimum group size for any aggregate of that group to be revealed.
    pub k_min: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            kinds: MetricKind::ALL.to_vec(),
            groups: Vec::new(),
            k: DEFAULT_K,
            attention: AttentionModel::LogDiscount,
            discount: AttentionModel::LogDiscount,
            k_min: DEFAULT_K_MIN,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self, schema: &GroupSchema) -> Result<(), MetricError> {
        if self.k == 0 {
            return Err(MetricError::Config("cutoff k must be at least 1".into()));
        }
        if self.k_min == 0 {
            return Err(MetricError::Config("k_min must be at least 1".into()));
        }
        if self.kinds.is_empty() {
            return Err(MetricError::Config("no metric kinds selected".into()));
        }
        for g in &self.groups {
            g.validate(schema)?;
        }
        self.attention.validate()?;
        self.discount.validate()?;
        Ok(())
    }

    /// The configured groups, or the schema defaults when none are listed.
    pub fn selectors(&self, schema: &GroupSchema) -> Vec<GroupSelector> {
        if self.groups.is_empty() {
            schema.default_selectors()
        } else {
            self.groups.clone()
        }
    }
}

/// Layout of the per-candidate circuit: which equality tests, selector
/// products and donor products get evaluated.
struct CircuitPlan {
    selectors: Vec<GroupSelector>,
    /// `slot[j][code]`: position of the test `[x_j == code]` within one
    /// candidate's block of equality tests.
    slot: Vec<Vec<Option<usize>>>,
    queries_per_candidate: Vec<(usize, u32, u32)>,
    /// Distinct specified-dimension sets, in order of first appearance.
    donor_sets: Vec<Vec<usize>>,
    /// Index into `donor_sets` for each selector.
    donor_set_of: Vec<usize>,
}

impl CircuitPlan {
    fn new(schema: &GroupSchema, selectors: Vec<GroupSelector>) -> Self {
        let d = schema.len();
        let mut needed: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); d];
        for g in &selectors {
            for j in g.specified() {
                needed[j].insert(g.0[j].expect("specified"));
            }
        }
        let mut slot = Vec::with_capacity(d);
        let mut queries = Vec::new();
        for (j, codes) in needed.iter_mut().enumerate() {
            let dummy = schema.dimension(j).dummy_code();
            codes.insert(dummy);
            let mut row = vec![None; dummy as usize + 1];
            for &c in codes.iter() {
                row[c as usize] = Some(queries.len());
                queries.push((j, c, dummy));
            }
            slot.push(row);
        }
        let mut donor_sets: Vec<Vec<usize>> = Vec::new();
        let mut donor_set_of = Vec::with_capacity(selectors.len());
        for g in &selectors {
            let dims = g.specified();
            let idx = match donor_sets.iter().position(|s| *s == dims) {
                Some(i) => i,
                None => {
                    donor_sets.push(dims);
                    donor_sets.len() - 1
                }
            };
            donor_set_of.push(idx);
        }
        CircuitPlan { selectors, slot, queries_per_candidate: queries, donor_sets, donor_set_of }
    }

    fn triples_per_candidate(&self) -> usize {
        let equalities: usize = self
            .queries_per_candidate
            .iter()
            .map(|&(_, _, dummy)| equality_cost(dummy))
            .sum();
        let selector_products: usize = self.selectors.iter().map(|g| g.specified().len() - 1).sum();
        let donor_products: usize = self.donor_sets.iter().map(|s| s.len() - 1).sum();
        equalities + selector_products + donor_products
    }
}

/// Triples one offer of `offer_size` candidates consumes under `config`.
pub fn required_triples(schema: &GroupSchema, config: &MetricConfig, offer_size: usize) -> usize {
    CircuitPlan::new(schema, config.selectors(schema)).triples_per_candidate() * offer_size
}

/// Secure group and donor indicator shares for every candidate of one offer.
struct Indicators {
    /// `member[g][i]`
    member: Vec<Vec<SharedValue>>,
    /// `donor[s][i]` for donor set `s`
    donor: Vec<Vec<SharedValue>>,
}

fn compute_indicators<T: Transport>(
    session: &mut Session<T>,
    plan: &CircuitPlan,
    attributes: &[Vec<SharedValue>],
) -> Result<Indicators, MpcError> {
    let per = plan.queries_per_candidate.len();
    let queries: Vec<EqualityQuery> = attributes
        .iter()
        .flat_map(|attrs| {
            plan.queries_per_candidate
                .iter()
                .map(move |&(j, constant, max_code)| EqualityQuery { value: attrs[j], constant, max_code })
        })
        .collect();
    let eq = session.equal_public_batch(&queries)?;
    let one = session.constant(FieldElement::ONE);
    let eq_at = |i: usize, j: usize, code: u32| eq[i * per + plan.slot[j][code as usize].expect("planned test")];

    let n = attributes.len();
    let mut rows: Vec<Vec<SharedValue>> = Vec::with_capacity(n * (plan.selectors.len() + plan.donor_sets.len()));
    for i in 0..n {
        for g in &plan.selectors {
            rows.push(g.specified().into_iter().map(|j| eq_at(i, j, g.0[j].expect("specified"))).collect());
        }
        for dims in &plan.donor_sets {
            rows.push(
                dims.iter()
                    .map(|&j| sub_shared(one, eq_at(i, j, plan.slot[j].len() as u32 - 1)))
                    .collect(),
            );
        }
    }
    let products = session.product_batch(&rows)?;
    let stride = plan.selectors.len() + plan.donor_sets.len();
    let member = (0..plan.selectors.len())
        .map(|g| (0..n).map(|i| products[i * stride + g]).collect())
        .collect();
    let donor = (0..plan.donor_sets.len())
        .map(|s| (0..n).map(|i| products[i * stride + plan.selectors.len() + s]).collect())
        .collect();
    Ok(Indicators { member, donor })
}

fn weighted(values: &[SharedValue], weights: impl Iterator<Item = u64>) -> SharedValue {
    sum_shared(values.iter().zip(weights).map(|(&v, w)| mul_public(v, FieldElement::new(w))))
}

/// How revealed values map back onto one aggregate.
enum Pending {
    PoolDiversity { donors: usize },
    Ratio { numerator: usize, denominator: usize },
    DemographicParity { numerator: usize },
    Skew { top: usize, top_donors: usize, pool_donors: usize },
    Drd { in_group: usize, donor_mass: usize },
}

/// Evaluates every configured metric and group for one offer.
///
/// `records` must belong to one validated offer, and
/// `attributes[i]` this party's per-dimension shares for `records[i]`. Both
/// parties call this with identical public inputs.
pub fn evaluate_offer<T: Transport>(
    session: &mut Session<T>,
    schema: &GroupSchema,
    config: &MetricConfig,
    records: &[CandidateRecord],
    attributes: &[Vec<SharedValue>],
) -> Result<Vec<MetricAggregate>, MetricError> {
    config.validate(schema)?;
    if records.len() != attributes.len() {
        return Err(MetricError::Linkage { expected: records.len(), got: attributes.len() });
    }
    if let Some(bad) = attributes.iter().find(|a| a.len() != schema.len()) {
        return Err(MetricError::Schema(SchemaError::Arity { expected: schema.len(), got: bad.len() }));
    }
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let unit = UnitKey::offer(records[0].offer_id.clone());
    let n = records.len();
    let plan = CircuitPlan::new(schema, config.selectors(schema));
    let ind = compute_indicators(session, &plan, attributes)?;

    // round 1: group sizes, which drive the gate
    let sizes: Vec<SharedValue> = ind.member.iter().map(|m| sum_shared(m.iter().copied())).collect();
    let n_g: Vec<u64> = session.reveal_many(&sizes)?.into_iter().map(|v| v.value()).collect();

    // round 2: aggregates of groups that pass the gate
    let k = config.k as usize;
    let attention: Vec<u64> = records.iter().map(|r| config.attention.fixed_weight(r.rank)).collect();
    let discount: Vec<u64> = records.iter().map(|r| config.discount.fixed_weight(r.rank)).collect();
    let outcome: Vec<u64> = records.iter().map(|r| r.positive() as u64).collect();
    let qualified: Vec<u64> = records.iter().map(|r| r.is_qualified() as u64).collect();
    let hired_qualified: Vec<u64> = outcome.iter().zip(&qualified).map(|(y, q)| y * q).collect();
    let top: Vec<u64> = records.iter().map(|r| (r.rank as usize <= k) as u64).collect();
    let top_discount: Vec<u64> = discount.iter().zip(&top).map(|(d, t)| d * t).collect();

    let mut to_reveal: Vec<SharedValue> = Vec::new();
    let mut push = |v: SharedValue| {
        to_reveal.push(v);
        to_reveal.len() - 1
    };
    let mut cells: Vec<(MetricKind, usize, Option<Pending>, Option<String>)> = Vec::new();
    for &kind in &config.kinds {
        for (g, _) in plan.selectors.iter().enumerate() {
            if kind.uses_cutoff() && k > n {
                let reason = format!("cutoff k={k} exceeds offer size {n}");
                cells.push((kind, g, None, Some(reason)));
                continue;
            }
            if n_g[g] < config.k_min {
                cells.push((kind, g, None, None));
                continue;
            }
            let member = &ind.member[g];
            let donor = &ind.donor[plan.donor_set_of[g]];
            let pending = match kind {
                MetricKind::PoolDiversity => Pending::PoolDiversity { donors: push(sum_shared(donor.iter().copied())) },
                MetricKind::GroupExposure => Pending::Ratio {
                    numerator: push(weighted(member, attention.iter().copied())),
                    denominator: push(weighted(donor, attention.iter().copied())),
                },
                MetricKind::SkewAtK => Pending::Skew {
                    top: push(weighted(member, top.iter().copied())),
                    top_donors: push(weighted(donor, top.iter().copied())),
                    pool_donors: push(sum_shared(donor.iter().copied())),
                },
                MetricKind::DrdAtK => Pending::Drd {
                    in_group: push(weighted(member, top_discount.iter().copied())),
                    donor_mass: push(weighted(donor, top_discount.iter().copied())),
                },
                MetricKind::DemographicParity => Pending::DemographicParity {
                    numerator: push(weighted(member, outcome.iter().copied())),
                },
                MetricKind::EqualOpportunity => Pending::Ratio {
                    numerator: push(weighted(member, hired_qualified.iter().copied())),
                    denominator: push(weighted(member, qualified.iter().copied())),
                },
            };
            cells.push((kind, g, Some(pending), None));
        }
    }
    let opened: Vec<u64> = session.reveal_many(&to_reveal)?.into_iter().map(|v| v.value()).collect();

    let out = cells
        .into_iter()
        .map(|(kind, g, pending, unavailable)| {
            let status = match (pending, unavailable) {
                (_, Some(reason)) => AggregateStatus::Unavailable { reason },
                (None, None) => AggregateStatus::Suppressed,
                (Some(p), None) => {
                    let values = match p {
                        Pending::PoolDiversity { donors } => Revealed::PoolDiversity {
                            count: n_g[g],
                            donors: opened[donors],
                            total: n as u64,
                        },
                        Pending::Ratio { numerator, denominator } => Revealed::Ratio {
                            numerator: opened[numerator],
                            denominator: opened[denominator],
                        },
                        Pending::DemographicParity { numerator } => Revealed::Ratio {
                            numerator: opened[numerator],
                            denominator: n_g[g],
                        },
                        Pending::Skew { top, top_donors, pool_donors } => Revealed::Skew {
                            top_count: opened[top],
                            top_donors: opened[top_donors],
                            pool_count: n_g[g],
                            pool_donors: opened[pool_donors],
                        },
                        Pending::Drd { in_group, donor_mass } => Revealed::Drd {
                            in_group: opened[in_group],
                            out_group: opened[donor_mass] - opened[in_group],
                        },
                    };
                    AggregateStatus::Revealed { n_g: n_g[g], values }
                }
            };
            MetricAggregate {
                kind,
                group: plan.selectors[g].clone(),
                unit: unit.clone(),
                scale: if kind.is_fixed_point() { FIXED_POINT_SCALE } else { 1 },
                status,
            }
        })
        .collect();
    Ok(out)
}

fn single<T: Transport>(
    session: &mut Session<T>,
    schema: &GroupSchema,
    config: MetricConfig,
    records: &[CandidateRecord],
    attributes: &[Vec<SharedValue>],
) -> Result<MetricAggregate, MetricError> {
    let mut out = evaluate_offer(session, schema, &config, records, attributes)?;
    out.pop().ok_or_else(|| MetricError::Config("empty offer".into()))
}

fn one_metric(kind: MetricKind, group: &GroupSelector, k_min: u64) -> MetricConfig {
    MetricConfig { kinds: vec![kind], groups: vec![group.clone()], k_min, ..MetricConfig::default() }
}

pub fn pool_diversity<T: Transport>(
    session: &mut Session<T>,
    schema: &GroupSchema,
    records: &[CandidateRecord],
    attributes: &[Vec<SharedValue>],
    group: &GroupSelector,
    k_min: u64,
) -> Result<MetricAggregate, MetricError> {
    single(session, schema, one_metric(MetricKind::PoolDiversity, group, k_min), records, attributes)
}

pub fn group_exposure<T: Transport>(
    session: &mut Session<T>,
    schema: &GroupSchema,
    records: &[CandidateRecord],
    attributes: &[Vec<SharedValue>],
    group: &GroupSelector,
    attention: &AttentionModel,
    k_min: u64,
) -> Result<MetricAggregate, MetricError> {
    let config = MetricConfig {
        attention: attention.clone(),
        ..one_metric(MetricKind::GroupExposure, group, k_min)
    };
    single(session, schema, config, records, attributes)
}

pub fn skew_at_k<T: Transport>(
    session: &mut Session<T>,
    schema: &GroupSchema,
    records: &[CandidateRecord],
    attributes: &[Vec<SharedValue>],
    group: &GroupSelector,
    k: u32,
    k_min: u64,
) -> Result<MetricAggregate, MetricError> {
    let config = MetricConfig { k, ..one_metric(MetricKind::SkewAtK, group, k_min) };
    single(session, schema, config, records, attributes)
}

#[allow(clippy::too_many_arguments)]
pub fn drd_at_k<T: Transport>(
    session: &mut Session<T>,
    schema: &GroupSchema,
    records: &[CandidateRecord],
    attributes: &[Vec<SharedValue>],
    group: &GroupSelector,
    k: u32,
    discount: &AttentionModel,
    k_min: u64,
) -> Result<MetricAggregate, MetricError> {
    let config = MetricConfig {
        k,
        discount: discount.clone(),
        ..one_metric(MetricKind::DrdAtK, group, k_min)
    };
    single(session, schema, config, records, attributes)
}

pub fn demographic_parity<T: Transport>(
    session: &mut Session<T>,
    schema: &GroupSchema,
    records: &[CandidateRecord],
    attributes: &[Vec<SharedValue>],
    group: &GroupSelector,
    k_min: u64,
) -> Result<MetricAggregate, MetricError> {
    single(session, schema, one_metric(MetricKind::DemographicParity, group, k_min), records, attributes)
}

pub fn equal_opportunity<T: Transport>(
    session: &mut Session<T>,
    schema: &GroupSchema,
    records: &[CandidateRecord],
    attributes: &[Vec<SharedValue>],
    group: &GroupSelector,
    k_min: u64,
) -> Result<MetricAggregate, MetricError> {
    single(session, schema, one_metric(MetricKind::EqualOpportunity, group, k_min), records, attributes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AttributeCodes, Revealed};
    use crate::mpc::{deal_triples, run_local_pair, ChannelTransport};
    use crate::sharing::{split, Party};
    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Candidate in rank order with (gender, age) codes, outcome, qualified.
    struct Cand(u32, u32, u8, u8);

    fn records(cands: &[Cand]) -> Vec<CandidateRecord> {
        cands
            .iter()
            .enumerate()
            .map(|(i, c)| CandidateRecord {
                candidate_id: format!("c{i}"),
                linkage_id: format!("l{i}"),
                offer_id: "o1".into(),
                job_title_class: "t".into(),
                company_id: "co".into(),
                rank: i as u32 + 1,
                score: 1.0 - i as f64 / 1000.0,
                outcome: c.2,
                qualified: c.3,
                timestamp: NaiveDate::from_ymd_opt(2025, 3, 1).unwrap(),
            })
            .collect()
    }

    /// Runs `f` on both parties over fresh shares of `cands` and returns the
    /// deployer's result after checking the TTP agrees.
    fn run<R, F>(cands: &[Cand], f: F) -> R
    where
        R: Send + PartialEq + std::fmt::Debug,
        F: Fn(&mut Session<ChannelTransport>, &[CandidateRecord], &[Vec<SharedValue>]) -> R + Sync,
    {
        let mut rng = ChaCha20Rng::seed_from_u64(cands.len() as u64);
        let recs = records(cands);
        let pairs: Vec<_> = cands
            .iter()
            .enumerate()
            .map(|(i, c)| split(&format!("l{i}"), &AttributeCodes(vec![c.0, c.1]), &mut rng))
            .collect();
        let (d, t) = deal_triples(1, 0, 200 * cands.len().max(1), &mut rng);
        let (rd, rt) = run_local_pair(d, t, |s| {
            let attrs: Vec<Vec<SharedValue>> = pairs
                .iter()
                .map(|(ds, ts)| {
                    let mine = if s.party() == Party::Deployer { ds } else { ts };
                    mine.shares.iter().map(|&v| SharedValue::from_share(v)).collect()
                })
                .collect();
            f(s, &recs, &attrs)
        });
        assert_eq!(rd, rt);
        rd
    }

    fn female() -> GroupSelector {
        GroupSelector(vec![Some(0), None])
    }

    fn revealed(a: &MetricAggregate) -> Revealed {
        *a.revealed().expect("not suppressed").0
    }

    #[test]
    fn attention_models() {
        assert_eq!(AttentionModel::LogDiscount.weight(1), 1.0);
        assert!((AttentionModel::LogDiscount.weight(2) - 0.6309).abs() < 1e-4);
        assert_eq!(AttentionModel::Geometric { decay: 0.5 }.weight(3), 0.25);
        let table = AttentionModel::Table { weights: vec![1.0, 0.5] };
        assert_eq!(table.weight(5), 0.5);
        assert_eq!(table.fixed_weight(2), 32768);
        assert!(AttentionModel::Table { weights: vec![0.5, 1.0] }.validate().is_err());
        assert!(AttentionModel::Table { weights: vec![1.0, 0.0] }.validate().is_err());
        assert!(AttentionModel::Geometric { decay: 1.5 }.validate().is_err());
        assert!(AttentionModel::LogDiscount.validate().is_ok());
    }

    #[test]
    fn triple_budget_for_default_grid() {
        let schema = GroupSchema::gender_age();
        // 8 equality tests of 2 multiplications, 9 intersection products,
        // one two-dimension donor product
        assert_eq!(required_triples(&schema, &MetricConfig::default(), 1), 26);
        assert_eq!(required_triples(&schema, &MetricConfig::default(), 40), 1040);
    }

    #[test]
    fn triple_budget_matches_consumption() {
        let cands: Vec<Cand> = (0..12).map(|i| Cand(i % 4, (i / 2) % 4, (i % 2) as u8, 1)).collect();
        let used = run(&cands, |s, r, a| {
            let before = s.triples().remaining();
            evaluate_offer(s, &GroupSchema::gender_age(), &MetricConfig::default(), r, a).unwrap();
            (before - s.triples().remaining(), s.stats().rounds)
        });
        assert_eq!(used.0, required_triples(&GroupSchema::gender_age(), &MetricConfig::default(), 12));
        // two equality rounds, one product round, two reveals
        assert_eq!(used.1, 5);
    }

    #[test]
    fn pool_diversity_all_in_group() {
        let cands: Vec<Cand> = (0..10).map(|_| Cand(0, 1, 0, 0)).collect();
        let agg = run(&cands, |s, r, a| {
            pool_diversity(s, &GroupSchema::gender_age(), r, a, &female(), 5).unwrap()
        });
        assert_eq!(revealed(&agg), Revealed::PoolDiversity { count: 10, donors: 10, total: 10 });
        assert_eq!(agg.value(), Some(1.0));
    }

    #[test]
    fn zero_members_reveal_zero_numerator() {
        let cands: Vec<Cand> = (0..6).map(|_| Cand(1, 1, 0, 0)).collect();
        let total = run(&cands, |s, _, a| {
            let mut ind = Vec::new();
            for attrs in a {
                ind.push(s.group_indicator(attrs, &female(), &GroupSchema::gender_age()).unwrap());
            }
            s.reveal_sum(&ind).unwrap().value()
        });
        assert_eq!(total, 0);
    }

    #[test]
    fn pool_diversity_counts_non_donors_only_in_total() {
        // 13 female, 20 male, 7 non-donors: 13/33 over donors, 13/40 overall
        let mut cands: Vec<Cand> = (0..13).map(|_| Cand(0, 0, 0, 0)).collect();
        cands.extend((0..20).map(|_| Cand(1, 2, 0, 0)));
        cands.extend((0..7).map(|_| Cand(3, 3, 0, 0)));
        let agg = run(&cands, |s, r, a| {
            pool_diversity(s, &GroupSchema::gender_age(), r, a, &female(), 5).unwrap()
        });
        assert_eq!(revealed(&agg), Revealed::PoolDiversity { count: 13, donors: 33, total: 40 });
        assert_eq!(format!("{:.2}", agg.value().unwrap() * 100.0), "39.39");
    }

    #[test]
    fn exposure_two_candidates() {
        let cands = [Cand(0, 0, 0, 0), Cand(1, 0, 0, 0)];
        let table = AttentionModel::Table { weights: vec![1.0, 0.5] };
        let agg = run(&cands, |s, r, a| {
            group_exposure(s, &GroupSchema::gender_age(), r, a, &female(), &table, 1).unwrap()
        });
        assert_eq!(revealed(&agg), Revealed::Ratio { numerator: 65536, denominator: 98304 });
        assert!((agg.value().unwrap() - 2.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn uniform_exposure_equals_donor_pool_share() {
        let cands: Vec<Cand> = (0..15).map(|i| Cand([0, 1, 3][i % 3], 0, 0, 0)).collect();
        let (ge, pd) = run(&cands, |s, r, a| {
            let schema = GroupSchema::gender_age();
            let ge = group_exposure(s, &schema, r, a, &female(), &AttentionModel::Uniform, 1).unwrap();
            let pd = pool_diversity(s, &schema, r, a, &female(), 1).unwrap();
            (ge.value(), pd.value())
        });
        assert_eq!(ge, pd);
        assert_eq!(pd, Some(0.5));
    }

    #[test]
    fn skew_hand_example() {
        // pool of 10 with 5 female, none in the top 3
        let cands: Vec<Cand> = (0..10).map(|i| Cand(if i < 5 { 1 } else { 0 }, 0, 0, 0)).collect();
        let agg = run(&cands, |s, r, a| {
            skew_at_k(s, &GroupSchema::gender_age(), r, a, &female(), 3, 5).unwrap()
        });
        assert_eq!(
            revealed(&agg),
            Revealed::Skew { top_count: 0, top_donors: 3, pool_count: 5, pool_donors: 10 }
        );
        assert!((agg.value().unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn skew_cutoff_beyond_offer_is_unavailable() {
        let cands: Vec<Cand> = (0..3).map(|_| Cand(0, 0, 0, 0)).collect();
        let agg = run(&cands, |s, r, a| {
            skew_at_k(s, &GroupSchema::gender_age(), r, a, &female(), 4, 1).unwrap()
        });
        assert!(matches!(agg.status, AggregateStatus::Unavailable { .. }));
    }

    #[test]
    fn drd_hand_example() {
        let cands = [Cand(1, 0, 0, 0), Cand(0, 0, 0, 0)];
        let agg = run(&cands, |s, r, a| {
            drd_at_k(s, &GroupSchema::gender_age(), r, a, &female(), 2, &AttentionModel::LogDiscount, 1).unwrap()
        });
        assert!((agg.value().unwrap() + 0.3691).abs() < 1e-4);
        // whole top-k in the group: out-group mass is zero
        let cands = [Cand(0, 0, 0, 0), Cand(0, 1, 0, 0), Cand(1, 1, 0, 0)];
        let agg = run(&cands, |s, r, a| {
            drd_at_k(s, &GroupSchema::gender_age(), r, a, &female(), 2, &AttentionModel::LogDiscount, 1).unwrap()
        });
        match revealed(&agg) {
            Revealed::Drd { in_group, out_group } => {
                assert_eq!(out_group, 0);
                assert_eq!(in_group, 65536 + 41349);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn demographic_parity_and_equal_opportunity() {
        let cands = [Cand(0, 0, 1, 1), Cand(0, 0, 0, 1), Cand(0, 1, 1, 1), Cand(0, 2, 0, 0), Cand(1, 0, 1, 1)];
        let (dp, eo) = run(&cands, |s, r, a| {
            let schema = GroupSchema::gender_age();
            (
                demographic_parity(s, &schema, r, a, &female(), 1).unwrap(),
                equal_opportunity(s, &schema, r, a, &female(), 1).unwrap(),
            )
        });
        assert_eq!(revealed(&dp), Revealed::Ratio { numerator: 2, denominator: 4 });
        assert_eq!(dp.value(), Some(0.5));
        assert_eq!(revealed(&eo), Revealed::Ratio { numerator: 2, denominator: 3 });
    }

    #[test]
    fn equal_opportunity_with_everyone_qualified_is_parity() {
        let cands: Vec<Cand> = (0..8).map(|i| Cand(i % 2, 0, (i % 3 == 0) as u8, 1)).collect();
        let (dp, eo) = run(&cands, |s, r, a| {
            let schema = GroupSchema::gender_age();
            (
                demographic_parity(s, &schema, r, a, &female(), 1).unwrap().value(),
                equal_opportunity(s, &schema, r, a, &female(), 1).unwrap().value(),
            )
        });
        assert_eq!(dp, eo);
    }

    #[test]
    fn gate_suppresses_small_groups() {
        let mut cands: Vec<Cand> = (0..4).map(|_| Cand(0, 0, 1, 1)).collect();
        cands.extend((0..6).map(|_| Cand(1, 0, 1, 1)));
        let aggs = run(&cands, |s, r, a| {
            evaluate_offer(s, &GroupSchema::gender_age(), &MetricConfig { k: 5, ..MetricConfig::default() }, r, a)
                .unwrap()
        });
        assert_eq!(aggs.len(), 6 * 15);
        for agg in &aggs {
            let female = agg.group.0[0] == Some(0);
            let male = agg.group.0[0] == Some(1);
            // only (male, any) and (any, <27) reach the threshold
            let big = (male && agg.group.0[1].is_none()) || (agg.group.0 == vec![None, Some(0)]) || (male && agg.group.0[1] == Some(0));
            if female || !big {
                assert!(agg.is_suppressed(), "{agg:?}");
            } else {
                assert!(agg.revealed().is_some(), "{agg:?}");
            }
        }
    }

    #[test]
    fn suppressed_aggregate_serializes_without_counts() {
        let agg = MetricAggregate {
            kind: MetricKind::DemographicParity,
            group: female(),
            unit: UnitKey::offer("o"),
            scale: 1,
            status: AggregateStatus::Suppressed,
        };
        let text = serde_json::to_string(&agg).unwrap();
        assert!(!text.contains("n_g") && !text.contains("numerator"), "{text}");
    }
}
