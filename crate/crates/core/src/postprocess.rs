//! Turns revealed offer-level aggregates into interpretable results:
//! binomial intervals, micro and macro rollups to job titles, companies and
//! the whole platform, and threshold verdicts.
//!
//! Rollups are computed only from offer cells that already passed the
//! privacy gate, so a suppressed offer can never be recovered by differencing
//! two higher-level totals.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::{
    AggregateStatus, GroupSchema, GroupSelector, Level, MetricAggregate, MetricKind, Revealed, UnitKey,
};

pub const DEFAULT_Z: f64 = 1.96;

#[derive(Debug, thiserror::Error)]
pub enum PostprocessError {
    #[error("nothing to aggregate")]
    Empty,
    #[error("unit sample size must be positive")]
    ZeroWeight,
    #[error("rule configuration: {0}")]
    Config(String),
    #[error("reading rules: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing rules: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    #[default]
    Wald,
    Wilson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

/// Wald interval `p ± z * sqrt(p (1 - p) / n)` clamped to `[0, 1]`; `None`
/// when `n == 0`.
pub fn confidence_interval(value: f64, n: u64, z: f64) -> Option<Interval> {
    if n == 0 {
        return None;
    }
    let half = z * (value * (1.0 - value) / n as f64).max(0.0).sqrt();
    Some(Interval { low: (value - half).clamp(0.0, 1.0), high: (value + half).clamp(0.0, 1.0) })
}

/// Wilson score interval, which stays informative at 0 and 1.
pub fn wilson_interval(value: f64, n: u64, z: f64) -> Option<Interval> {
    if n == 0 {
        return None;
    }
    let n = n as f64;
    let z2 = z * z;
    let centre = (value + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (value * (1.0 - value) / n + z2 / (4.0 * n * n)).max(0.0).sqrt();
    Some(Interval { low: (centre - half).clamp(0.0, 1.0), high: (centre + half).clamp(0.0, 1.0) })
}

/// Sample-size weighted mean `sum(n_u T_u) / sum(n_u)`.
pub fn aggregate_micro(units: &[(f64, u64)]) -> Result<f64, PostprocessError> {
    if units.is_empty() {
        return Err(PostprocessError::Empty);
    }
    if units.iter().any(|&(_, n)| n == 0) {
        return Err(PostprocessError::ZeroWeight);
    }
    // equal weights cancel; skipping the multiply keeps micro == macro bit for bit
    if units.iter().all(|&(_, n)| n == units[0].1) {
        return aggregate_macro(&units.iter().map(|&(t, _)| t).collect::<Vec<_>>());
    }
    let total: u64 = units.iter().map(|&(_, n)| n).sum();
    let weighted: f64 = units.iter().map(|&(t, n)| t * n as f64).sum();
    Ok(weighted / total as f64)
}

/// Unweighted mean over units.
pub fn aggregate_macro(values: &[f64]) -> Result<f64, PostprocessError> {
    if values.is_empty() {
        return Err(PostprocessError::Empty);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Reference value a rule compares against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    FixedValue { value: f64 },
    /// Overall micro value of the same metric and group.
    PlatformAverage,
    /// Micro value of the same metric and group over the offer's job title.
    JobTitleAverage,
}

/// Warn when `|value - baseline| >= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub id: String,
    pub metric: MetricKind,
    /// Restrict to one group; all groups when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupSelector>,
    pub baseline: Baseline,
    pub tolerance: f64,
    /// Cells with a smaller sample are not checked.
    #[serde(default = "default_min_n")]
    pub min_n: u64,
    /// Levels the rule applies to; all applicable levels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<Level>>,
}

fn default_min_n() -> u64 {
    1
}

impl ThresholdRule {
    pub fn validate(&self) -> Result<(), PostprocessError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(PostprocessError::Config(format!(
                "rule {:?}: tolerance must be positive, got {}",
                self.id, self.tolerance
            )));
        }
        if let Baseline::FixedValue { value } = self.baseline {
            if !value.is_finite() {
                return Err(PostprocessError::Config(format!("rule {:?}: baseline is not finite", self.id)));
            }
        }
        Ok(())
    }

    fn applies_to(&self, kind: MetricKind, group: &GroupSelector, level: Level) -> bool {
        let level_ok = match &self.levels {
            Some(levels) => levels.contains(&level),
            None => true,
        };
        let baseline_ok = match self.baseline {
            Baseline::FixedValue { .. } => true,
            Baseline::PlatformAverage => level != Level::Overall,
            Baseline::JobTitleAverage => level == Level::Offer,
        };
        self.metric == kind && self.group.as_ref().is_none_or(|g| g == group) && level_ok && baseline_ok
    }
}

/// Versioned rules file shared with the dashboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub version: String,
    pub rules: Vec<ThresholdRule>,
}

impl RuleSet {
    pub fn new(version: impl Into<String>, rules: Vec<ThresholdRule>) -> Result<Self, PostprocessError> {
        let set = RuleSet { version: version.into(), rules };
        set.validate()?;
        Ok(set)
    }

    pub fn empty() -> Self {
        RuleSet { version: "0".into(), rules: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), PostprocessError> {
        let mut ids = BTreeSet::new();
        for r in &self.rules {
            r.validate()?;
            if !ids.insert(r.id.as_str()) {
                return Err(PostprocessError::Config(format!("duplicate rule id {:?}", r.id)));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self, PostprocessError> {
        let set: RuleSet = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        set.validate()?;
        Ok(set)
    }

    pub fn write_json_file(&self, path: &Path) -> Result<(), PostprocessError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Ok,
    Warning,
    Undefined,
    Suppressed,
}

/// One rule evaluated against one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCheck {
    pub rule_id: String,
    pub baseline: Baseline,
    pub baseline_value: Option<f64>,
    pub delta: Option<f64>,
    pub tolerance: f64,
    /// `None` when the rule could not be applied; see `note`.
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `Warning` iff `|value - baseline| >= tolerance`.
pub fn apply_threshold(
    value: f64,
    n: u64,
    rule: &ThresholdRule,
    baseline_value: Option<f64>,
) -> Result<RuleCheck, PostprocessError> {
    rule.validate()?;
    let baseline_value = match (&rule.baseline, baseline_value) {
        (Baseline::FixedValue { value }, _) => *value,
        (_, Some(v)) => v,
        (b, None) => {
            return Err(PostprocessError::Config(format!("rule {:?}: no baseline value for {b:?}", rule.id)))
        }
    };
    let mut check = RuleCheck {
        rule_id: rule.id.clone(),
        baseline: rule.baseline.clone(),
        baseline_value: Some(baseline_value),
        delta: Some(value - baseline_value),
        tolerance: rule.tolerance,
        verdict: None,
        note: None,
    };
    if n < rule.min_n {
        check.note = Some(format!("sample {n} below rule minimum {}", rule.min_n));
        return Ok(check);
    }
    check.verdict = Some(if (value - baseline_value).abs() >= rule.tolerance { Verdict::Warning } else { Verdict::Ok });
    Ok(check)
}

/// Interval settings for a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalConfig {
    pub z_alpha: f64,
    pub method: IntervalMethod,
}

impl Default for IntervalConfig {
    fn default() -> Self {
        IntervalConfig { z_alpha: DEFAULT_Z, method: IntervalMethod::Wald }
    }
}

/// Post-processed metric cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: MetricKind,
    pub group: GroupSelector,
    pub group_label: String,
    pub unit: UnitKey,
    pub date: NaiveDate,
    pub verdict: Verdict,
    /// Micro value at rollup levels.
    pub value: Option<f64>,
    /// Unweighted mean over contributing offers; rollup levels only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_value: Option<f64>,
    /// Pool diversity over every candidate, donors or not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_all_candidates: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<Interval>,
    pub z_alpha: f64,
    /// Group size; absent for suppressed cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_g: Option<u64>,
    /// Sample size behind the interval and the micro weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Revealed integers (summed over contributing offers at rollup levels,
    /// for proportion metrics).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revealed: Option<Revealed>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<u64>,
    /// Offers contributing to a rollup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<u64>,
    /// Offers left out of a rollup because they were suppressed or undefined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped_units: Option<u64>,
    pub checks: Vec<RuleCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Job title and company of each offer.
pub type OfferDirectory = BTreeMap<String, (String, String)>;

/// Sample size used for the interval and as the micro weight.
pub fn sample_size(kind: MetricKind, revealed: &Revealed, n_g: u64) -> u64 {
    match (kind, revealed) {
        (MetricKind::PoolDiversity, Revealed::PoolDiversity { donors, .. }) => *donors,
        (MetricKind::DemographicParity | MetricKind::EqualOpportunity, Revealed::Ratio { denominator, .. }) => {
            *denominator
        }
        _ => n_g,
    }
}

fn add_revealed(a: Revealed, b: &Revealed) -> Revealed {
    match (a, b) {
        (
            Revealed::PoolDiversity { count, donors, total },
            Revealed::PoolDiversity { count: c, donors: d, total: t },
        ) => Revealed::PoolDiversity { count: count + c, donors: donors + d, total: total + t },
        (Revealed::Ratio { numerator, denominator }, Revealed::Ratio { numerator: n, denominator: d }) => {
            Revealed::Ratio { numerator: numerator + n, denominator: denominator + d }
        }
        (a, _) => panic!("cannot pool {a:?}"),
    }
}

#[derive(Default)]
struct Contribution {
    /// `(value, weight, n_g, revealed)` of contributing offer cells
    cells: Vec<(f64, u64, u64, Revealed)>,
    skipped: u64,
    suppressed: u64,
}

/// Builds the full metric x group x unit grid from offer-level aggregates.
///
/// Offer cells mirror their aggregates; rollup cells combine the revealed,
/// defined offer cells beneath them.
pub fn build_results(
    aggregates: &[MetricAggregate],
    offers: &OfferDirectory,
    schema: &GroupSchema,
    rules: &RuleSet,
    intervals: IntervalConfig,
    date: NaiveDate,
) -> Vec<MetricResult> {
    let mut results: Vec<MetricResult> = Vec::new();
    // (level unit, kind, group) -> contributions
    let mut rollups: BTreeMap<(UnitKey, MetricKind, GroupSelector), Contribution> = BTreeMap::new();
    let mut groups: Vec<GroupSelector> = Vec::new();

    for agg in aggregates {
        if agg.unit.level != Level::Offer {
            continue;
        }
        if !groups.contains(&agg.group) {
            groups.push(agg.group.clone());
        }
        let Some((title, company)) = offers.get(&agg.unit.id) else { continue };
        let parents = [UnitKey::job_title(title.clone()), UnitKey::company(company.clone()), UnitKey::overall()];
        let contribution = agg.revealed().and_then(|(r, n_g)| {
            let v = r.value(agg.scale)?;
            Some((v, sample_size(agg.kind, r, n_g), n_g, *r))
        });
        for parent in parents {
            let c = rollups.entry((parent, agg.kind, agg.group.clone())).or_default();
            match &contribution {
                Some(cell) if cell.1 > 0 => c.cells.push(*cell),
                _ => {
                    c.skipped += 1;
                    if agg.is_suppressed() {
                        c.suppressed += 1;
                    }
                }
            }
        }
        results.push(offer_result(agg, schema, intervals, date));
    }

    for ((unit, kind, group), c) in &rollups {
        results.push(rollup_result(unit, *kind, group, c, schema, intervals, date));
    }

    // sort: level, unit, metric, group in evaluation order
    let group_pos = |g: &GroupSelector| groups.iter().position(|x| x == g).unwrap_or(usize::MAX);
    results.sort_by(|a, b| {
        (a.unit.level, &a.unit.id, a.metric, group_pos(&a.group)).cmp(&(b.unit.level, &b.unit.id, b.metric, group_pos(&b.group)))
    });

    apply_rules(&mut results, offers, rules);
    results
}

fn interval_for(kind: MetricKind, value: f64, n: u64, cfg: IntervalConfig) -> Option<Interval> {
    if !kind.is_proportion() {
        return None;
    }
    match cfg.method {
        IntervalMethod::Wald => confidence_interval(value, n, cfg.z_alpha),
        IntervalMethod::Wilson => wilson_interval(value, n, cfg.z_alpha),
    }
}

const NO_INTERVAL: &str = "no confidence interval is defined for this metric";

fn empty_result(
    kind: MetricKind,
    group: &GroupSelector,
    unit: &UnitKey,
    schema: &GroupSchema,
    intervals: IntervalConfig,
    date: NaiveDate,
    verdict: Verdict,
) -> MetricResult {
    MetricResult {
        metric: kind,
        group: group.clone(),
        group_label: group.label(schema),
        unit: unit.clone(),
        date,
        verdict,
        value: None,
        macro_value: None,
        value_all_candidates: None,
        ci: None,
        z_alpha: intervals.z_alpha,
        n_g: None,
        n: None,
        revealed: None,
        scale: None,
        units: None,
        skipped_units: None,
        checks: Vec::new(),
        notes: Vec::new(),
    }
}

fn offer_result(agg: &MetricAggregate, schema: &GroupSchema, intervals: IntervalConfig, date: NaiveDate) -> MetricResult {
    let mut r = empty_result(agg.kind, &agg.group, &agg.unit, schema, intervals, date, Verdict::Undefined);
    match &agg.status {
        AggregateStatus::Suppressed => r.verdict = Verdict::Suppressed,
        AggregateStatus::Unavailable { reason } => r.notes.push(reason.clone()),
        AggregateStatus::Revealed { n_g, values } => {
            r.n_g = Some(*n_g);
            r.revealed = Some(*values);
            r.scale = Some(agg.scale);
            let n = sample_size(agg.kind, values, *n_g);
            r.n = Some(n);
            if let Revealed::PoolDiversity { count, total, .. } = values {
                r.value_all_candidates = (*total > 0).then(|| *count as f64 / *total as f64);
            }
            match values.value(agg.scale) {
                Some(v) => {
                    r.value = Some(v);
                    r.verdict = Verdict::Ok;
                    r.ci = interval_for(agg.kind, v, n, intervals);
                    if !agg.kind.is_proportion() {
                        r.notes.push(NO_INTERVAL.into());
                    }
                }
                None => r.notes.push("zero denominator".into()),
            }
        }
    }
    r
}

fn rollup_result(
    unit: &UnitKey,
    kind: MetricKind,
    group: &GroupSelector,
    c: &Contribution,
    schema: &GroupSchema,
    intervals: IntervalConfig,
    date: NaiveDate,
) -> MetricResult {
    let mut r = empty_result(kind, group, unit, schema, intervals, date, Verdict::Undefined);
    r.units = Some(c.cells.len() as u64);
    r.skipped_units = Some(c.skipped);
    if c.cells.is_empty() {
        if c.suppressed > 0 {
            r.verdict = Verdict::Suppressed;
        }
        return r;
    }
    let pairs: Vec<(f64, u64)> = c.cells.iter().map(|&(v, w, _, _)| (v, w)).collect();
    let values: Vec<f64> = c.cells.iter().map(|&(v, _, _, _)| v).collect();
    let n: u64 = pairs.iter().map(|&(_, w)| w).sum();
    r.n = Some(n);
    r.n_g = Some(c.cells.iter().map(|&(_, _, n_g, _)| n_g).sum());
    r.macro_value = aggregate_macro(&values).ok();
    if kind.is_proportion() {
        // pooled integers give the micro value exactly
        let pooled = c.cells[1..].iter().fold(c.cells[0].3, |acc, cell| add_revealed(acc, &cell.3));
        r.value = pooled.value(1);
        if let Revealed::PoolDiversity { count, total, .. } = pooled {
            r.value_all_candidates = (total > 0).then(|| count as f64 / total as f64);
        }
        r.revealed = Some(pooled);
        r.scale = Some(1);
    } else {
        r.value = aggregate_micro(&pairs).ok();
        r.notes.push(NO_INTERVAL.into());
    }
    if let Some(v) = r.value {
        r.verdict = Verdict::Ok;
        r.ci = interval_for(kind, v, n, intervals);
    }
    r
}

fn apply_rules(results: &mut [MetricResult], offers: &OfferDirectory, rules: &RuleSet) {
    let lookup: BTreeMap<(UnitKey, MetricKind, GroupSelector), Option<f64>> = results
        .iter()
        .filter(|r| r.unit.level != Level::Offer)
        .map(|r| ((r.unit.clone(), r.metric, r.group.clone()), r.value))
        .collect();
    for r in results.iter_mut() {
        if !matches!(r.verdict, Verdict::Ok) {
            continue;
        }
        let (Some(value), n) = (r.value, r.n.unwrap_or(0)) else { continue };
        for rule in &rules.rules {
            if !rule.applies_to(r.metric, &r.group, r.unit.level) {
                continue;
            }
            let baseline_unit = match rule.baseline {
                Baseline::FixedValue { .. } => None,
                Baseline::PlatformAverage => Some(UnitKey::overall()),
                Baseline::JobTitleAverage => offers.get(&r.unit.id).map(|(t, _)| UnitKey::job_title(t.clone())),
            };
            let baseline_value = baseline_unit
                .and_then(|u| lookup.get(&(u, r.metric, r.group.clone())).copied().flatten());
            let check = match apply_threshold(value, n, rule, baseline_value) {
                Ok(c) => c,
                Err(_) => RuleCheck {
                    rule_id: rule.id.clone(),
                    baseline: rule.baseline.clone(),
                    baseline_value: None,
                    delta: None,
                    tolerance: rule.tolerance,
                    verdict: None,
                    note: Some("baseline undefined".into()),
                },
            };
            if check.verdict == Some(Verdict::Warning) {
                r.verdict = Verdict::Warning;
            }
            r.checks.push(check);
        }
    }
}
