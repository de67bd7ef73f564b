//! Corpus composition: integer apportionment of a target size across task
//! kinds, instruction styles and compound strategy classes, seeded sampling
//! from the synthesized pools, deduplication and statistics.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use indexmap::IndexMap;
use num_bigint::BigUint;
use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basic::{RenderedInstruction, Strategy, Style};
use crate::corpus::TaskKind;
use crate::rng::SeededRng;

/// `w` as an integer mantissa and binary exponent, `w = m * 2^e`.
fn decompose(w: f64) -> (u64, i32) {
    let bits = w.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1 << 52) - 1);
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1 << 52), exp - 1075)
    }
}

/// The weights as integers with a common scale; exact for every finite f64.
fn exact_weights(weights: &[f64]) -> Vec<BigUint> {
    let parts: Vec<(u64, i32)> = weights.iter().map(|w| decompose(*w)).collect();
    let emin = parts
        .iter()
        .filter(|(m, _)| *m > 0)
        .map(|(_, e)| *e)
        .min()
        .unwrap_or(0);
    parts
        .iter()
        .map(|(m, e)| {
            if *m == 0 {
                BigUint::ZERO
            } else {
                BigUint::from(*m) << (e - emin) as usize
            }
        })
        .collect()
}

/// Reference task distribution of the released corpus.
pub fn reference_shares() -> IndexMap<TaskKind, f64> {
    use TaskKind::*;
    IndexMap::from([
        (Ner, 0.23),
        (Re, 0.29),
        (Spo, 0.11),
        (Ee, 0.05),
        (Eet, 0.03),
        (Eea, 0.02),
        (OpenIe, 0.04),
        (Kge, 0.12),
        (Mrc, 0.02),
        (Tc, 0.01),
        (Ig, 0.08),
    ])
}

/// Relative sizes of the compound strategy classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyRatio {
    pub guidelines: f64,
    pub rules: f64,
    pub format: f64,
}

impl Default for StrategyRatio {
    fn default() -> Self {
        Self {
            guidelines: 1_152_470.0,
            rules: 34_770.0,
            format: 108_091.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixConfig {
    pub shares: IndexMap<TaskKind, f64>,
    /// (basic, compound) over non-IG mass.
    pub style_split: (f64, f64),
    pub strategy_ratio: StrategyRatio,
    /// Tasks that can receive rule-derived records.
    pub rule_tasks: BTreeSet<TaskKind>,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            shares: reference_shares(),
            style_split: (0.55, 0.45),
            strategy_ratio: StrategyRatio::default(),
            rule_tasks: BTreeSet::from([TaskKind::Ner, TaskKind::Re, TaskKind::Spo]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MixError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("pool {pool} has {have} records but {need} are needed")]
    PoolExhausted { pool: PoolKey, need: u64, have: u64 },
}

/// The pool a record is drawn from. Compound records are classed by their
/// most specific strategy: rules, then format, then guidelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PoolKey {
    pub task: TaskKind,
    pub style: Style,
    pub class: Option<Strategy>,
}

impl PoolKey {
    pub fn basic(task: TaskKind) -> Self {
        Self {
            task,
            style: Style::B,
            class: None,
        }
    }

    pub fn compound(task: TaskKind, class: Strategy) -> Self {
        Self {
            task,
            style: Style::C,
            class: Some(class),
        }
    }

    pub fn of(record: &RenderedInstruction) -> Self {
        match record.style {
            Style::B => Self::basic(record.task),
            Style::C => {
                let s = &record.strategies;
                let class = if s.contains(&Strategy::Rules) {
                    Strategy::Rules
                } else if s.contains(&Strategy::Format) {
                    Strategy::Format
                } else {
                    Strategy::Guidelines
                };
                Self::compound(record.task, class)
            }
        }
    }
}

impl fmt::Display for PoolKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{:?}", self.task, self.style)?;
        if let Some(c) = self.class {
            write!(f, "/{}", c.as_str())?;
        }
        Ok(())
    }
}

impl Serialize for PoolKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PoolKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let parts: Vec<&str> = text.split('/').collect();
        let bad = || serde::de::Error::custom(format!("bad pool key `{text}`"));
        let task: TaskKind = parts.first().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        match parts.as_slice() {
            [_, "B"] => Ok(PoolKey::basic(task)),
            [_, "C", c] => {
                let class = Strategy::ALL
                    .into_iter()
                    .find(|s| s.as_str() == *c)
                    .ok_or_else(bad)?;
                Ok(PoolKey::compound(task, class))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub total: u64,
    pub seed: u64,
    pub task_share: IndexMap<TaskKind, f64>,
    pub style_share: (f64, f64),
    pub strategy_targets: IndexMap<Strategy, u64>,
    pub per_task_counts: IndexMap<TaskKind, u64>,
    pub quotas: IndexMap<PoolKey, u64>,
}

impl MixPlan {
    pub fn quota(&self, key: PoolKey) -> u64 {
        self.quotas.get(&key).copied().unwrap_or(0)
    }

    pub fn style_count(&self, style: Style) -> u64 {
        self.quotas
            .iter()
            .filter(|(k, _)| k.style == style)
            .map(|(_, n)| n)
            .sum()
    }
}

fn check_weights(ws: &[f64]) -> Result<f64, MixError> {
    if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(MixError::InvalidDistribution(
            "weights must be finite and non-negative".into(),
        ));
    }
    let sum: f64 = ws.iter().sum();
    if sum <= 0.0 {
        return Err(MixError::InvalidDistribution("weights sum to zero".into()));
    }
    Ok(sum)
}

/// Largest-remainder apportionment of `total` seats over `weights`, computed
/// in exact integer arithmetic on the binary values of the weights. Equal
/// remainders go to the earlier index.
pub fn apportion(total: u64, weights: &[f64]) -> Result<Vec<u64>, MixError> {
    if total == 0 {
        check_weights(weights).or_else(|e| if weights.is_empty() { Ok(0.0) } else { Err(e) })?;
        return Ok(vec![0; weights.len()]);
    }
    check_weights(weights)?;
    let scaled = exact_weights(weights);
    let denom: BigUint = scaled.iter().sum();
    let t = BigUint::from(total);
    let mut seats = Vec::with_capacity(scaled.len());
    let mut rems = Vec::with_capacity(scaled.len());
    for (i, s) in scaled.iter().enumerate() {
        let (q, r) = (&t * s).div_rem(&denom);
        seats.push(u64::try_from(&q).expect("quota fits the total"));
        rems.push((r, i));
    }
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let left = total - seats.iter().sum::<u64>();
    for (_, i) in rems.iter().take(left as usize) {
        seats[*i] += 1;
    }
    Ok(seats)
}

/// Plans a corpus of `total` records.
///
/// IG is always basic. The style split is applied to the remaining mass,
/// compound seats are spread over tasks in proportion to their size, and
/// each task's compound seats are divided among strategy classes. Rule
/// seats only go to rule tasks; when those cannot hold the rule target the
/// rest is shared by guidelines and format.
pub fn plan(total: u64, cfg: &MixConfig, seed: u64) -> Result<MixPlan, MixError> {
    let sum: f64 = cfg.shares.values().sum();
    if cfg.shares.is_empty() || (sum - 1.0).abs() > 1e-9 {
        return Err(MixError::InvalidDistribution(format!(
            "task shares sum to {sum}"
        )));
    }
    let (b, c) = cfg.style_split;
    if (b + c - 1.0).abs() > 1e-9 || b < 0.0 || c < 0.0 {
        return Err(MixError::InvalidDistribution(format!(
            "style split {b}/{c}"
        )));
    }
    let r = cfg.strategy_ratio;
    check_weights(&[r.guidelines, r.rules, r.format])?;

    let tasks: Vec<TaskKind> = TaskKind::ALL
        .into_iter()
        .filter(|t| cfg.shares.contains_key(t))
        .collect();
    let weights: Vec<f64> = tasks.iter().map(|t| cfg.shares[t]).collect();
    let counts = apportion(total, &weights)?;
    let per_task: IndexMap<TaskKind, u64> = tasks.iter().copied().zip(counts).collect();

    let non_ig: Vec<(TaskKind, u64)> = per_task
        .iter()
        .filter(|(t, _)| **t != TaskKind::Ig)
        .map(|(t, n)| (*t, *n))
        .collect();
    let n_non_ig: u64 = non_ig.iter().map(|(_, n)| n).sum();
    let compound_total = if n_non_ig == 0 {
        0
    } else {
        apportion(n_non_ig, &[b, c])?[1]
    };
    let per_task_c: Vec<u64> = if n_non_ig == 0 {
        vec![0; non_ig.len()]
    } else {
        apportion(
            compound_total,
            &non_ig.iter().map(|(_, n)| *n as f64).collect::<Vec<_>>(),
        )?
    };

    let targets = apportion(compound_total, &[r.guidelines, r.rules, r.format])?;
    let eligible: Vec<(usize, u64)> = non_ig
        .iter()
        .enumerate()
        .filter(|(_, (t, _))| cfg.rule_tasks.contains(t))
        .map(|(i, _)| (i, per_task_c[i]))
        .collect();
    let eligible_total: u64 = eligible.iter().map(|(_, n)| n).sum();
    let rule_total = targets[1].min(eligible_total);
    let mut rules = vec![0u64; non_ig.len()];
    if rule_total > 0 {
        let split = apportion(
            rule_total,
            &eligible.iter().map(|(_, n)| *n as f64).collect::<Vec<_>>(),
        )?;
        for ((i, _), k) in eligible.iter().zip(split) {
            rules[*i] = k;
        }
    }

    let mut quotas = IndexMap::new();
    let mut strategy_targets = IndexMap::from([
        (Strategy::Guidelines, 0),
        (Strategy::Rules, 0),
        (Strategy::Format, 0),
    ]);
    for (i, (task, n)) in non_ig.iter().enumerate() {
        let ct = per_task_c[i];
        let rest = ct - rules[i];
        let gf = if rest == 0 {
            vec![0, 0]
        } else {
            apportion(rest, &[r.guidelines, r.format])?
        };
        quotas.insert(PoolKey::basic(*task), n - ct);
        quotas.insert(PoolKey::compound(*task, Strategy::Guidelines), gf[0]);
        quotas.insert(PoolKey::compound(*task, Strategy::Rules), rules[i]);
        quotas.insert(PoolKey::compound(*task, Strategy::Format), gf[1]);
        strategy_targets[&Strategy::Guidelines] += gf[0];
        strategy_targets[&Strategy::Rules] += rules[i];
        strategy_targets[&Strategy::Format] += gf[1];
    }
    if let Some(n) = per_task.get(&TaskKind::Ig) {
        quotas.insert(PoolKey::basic(TaskKind::Ig), *n);
    }
    Ok(MixPlan {
        total,
        seed,
        task_share: cfg.shares.clone(),
        style_share: cfg.style_split,
        strategy_targets,
        per_task_counts: per_task,
        quotas,
    })
}

/// Groups records by pool, keeping input order within each pool.
pub fn into_pools(
    records: impl IntoIterator<Item = RenderedInstruction>,
) -> IndexMap<PoolKey, Vec<RenderedInstruction>> {
    let mut out: IndexMap<PoolKey, Vec<RenderedInstruction>> = IndexMap::new();
    for r in records {
        out.entry(PoolKey::of(&r)).or_default().push(r);
    }
    out.sort_keys();
    out
}

/// Every pool whose size falls short of its quota.
pub fn shortfalls(
    plan: &MixPlan,
    pools: &IndexMap<PoolKey, Vec<RenderedInstruction>>,
) -> Vec<(PoolKey, u64, u64)> {
    plan.quotas
        .iter()
        .filter_map(|(k, need)| {
            let have = pools.get(k).map_or(0, |p| p.len() as u64);
            (have < *need).then_some((*k, *need, have))
        })
        .collect()
}

/// Draws each pool's quota without replacement and returns the records
/// ordered by (task, id).
pub fn execute(
    plan: &MixPlan,
    pools: &IndexMap<PoolKey, Vec<RenderedInstruction>>,
    seed: u64,
) -> Result<Vec<RenderedInstruction>, MixError> {
    if let Some((pool, need, have)) = shortfalls(plan, pools).into_iter().next() {
        return Err(MixError::PoolExhausted { pool, need, have });
    }
    let jobs: Vec<(PoolKey, u64)> = plan
        .quotas
        .iter()
        .filter(|(_, n)| **n > 0)
        .map(|(k, n)| (*k, *n))
        .collect();
    let picked: Vec<Vec<RenderedInstruction>> = jobs
        .par_iter()
        .map(|(key, need)| {
            let pool = &pools[key];
            let mut rng = SeededRng::derive(seed, &key.to_string(), "mix");
            let mut idx = rand::seq::index::sample(&mut rng, pool.len(), *need as usize).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| pool[i].clone()).collect()
        })
        .collect();
    let mut out: Vec<RenderedInstruction> = picked.into_iter().flatten().collect();
    out.sort_by(|a, b| a.task.cmp(&b.task).then_with(|| a.id.cmp(&b.id)));
    Ok(out)
}

/// Content digest of a record's visible text.
pub fn dedup_key(r: &RenderedInstruction) -> [u8; 32] {
    let mut h = Sha256::new();
    for part in [r.task.as_str(), r.prompt.as_str(), r.target.as_str()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.finalize().into()
}

/// Drops records whose (task, prompt, target) repeats; first one wins.
pub fn dedup(
    records: impl IntoIterator<Item = RenderedInstruction>,
) -> (Vec<RenderedInstruction>, u64) {
    let mut seen = HashSet::new();
    let mut removed = 0;
    let mut out = Vec::new();
    for r in records {
        if seen.insert(dedup_key(&r)) {
            out.push(r);
        } else {
            removed += 1;
        }
    }
    (out, removed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: u64,
    pub by_task: IndexMap<TaskKind, u64>,
    pub by_style: IndexMap<Style, u64>,
    /// Overlapping: a record with several strategies counts once for each.
    pub by_strategy: IndexMap<Strategy, u64>,
    pub by_format: IndexMap<crate::formats::OutputFormat, u64>,
    pub compound: u64,
    pub dedup_removed: u64,
    pub seed: u64,
}

impl CorpusStats {
    pub fn share(&self, task: TaskKind) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.by_task.get(&task).copied().unwrap_or(0) as f64 / self.total as f64
    }

    /// Fraction of non-IG records that are basic.
    pub fn basic_share_non_ig(&self, corpus_ig: u64) -> f64 {
        let non_ig = self.total - corpus_ig;
        if non_ig == 0 {
            return 0.0;
        }
        (self.by_style.get(&Style::B).copied().unwrap_or(0) - corpus_ig) as f64 / non_ig as f64
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let pct = |n: u64| {
            if self.total == 0 {
                0.0
            } else {
                100.0 * n as f64 / self.total as f64
            }
        };
        s.push_str(&format!("{:<14}{:>10}{:>9}\n", "group", "count", "share"));
        for (t, n) in &self.by_task {
            s.push_str(&format!("{:<14}{:>10}{:>8.2}%\n", t.as_str(), n, pct(*n)));
        }
        for (st, n) in &self.by_style {
            s.push_str(&format!(
                "{:<14}{:>10}{:>8.2}%\n",
                format!("style {st:?}"),
                n,
                pct(*n)
            ));
        }
        for (st, n) in &self.by_strategy {
            s.push_str(&format!("{:<14}{:>10}{:>8.2}%\n", st.as_str(), n, pct(*n)));
        }
        for (f, n) in &self.by_format {
            s.push_str(&format!("{:<14}{:>10}{:>8.2}%\n", f.as_str(), n, pct(*n)));
        }
        s.push_str(&format!(
            "{:<14}{:>10}\n{:<14}{:>10}\n",
            "total", self.total, "deduplicated", self.dedup_removed
        ));
        s
    }
}

/// Exact counts over a corpus. Every task, style, strategy and format has a
/// row, zero or not.
pub fn stats<'a>(
    corpus: impl IntoIterator<Item = &'a RenderedInstruction>,
    dedup_removed: u64,
    seed: u64,
) -> CorpusStats {
    let mut st = CorpusStats {
        total: 0,
        by_task: TaskKind::ALL.into_iter().map(|t| (t, 0)).collect(),
        by_style: IndexMap::from([(Style::B, 0), (Style::C, 0)]),
        by_strategy: Strategy::ALL.into_iter().map(|s| (s, 0)).collect(),
        by_format: crate::formats::OutputFormat::ALL
            .into_iter()
            .map(|f| (f, 0))
            .collect(),
        compound: 0,
        dedup_removed,
        seed,
    };
    for r in corpus {
        st.total += 1;
        st.by_task[&r.task] += 1;
        st.by_style[&r.style] += 1;
        st.by_format[&r.format] += 1;
        if r.style == Style::C {
            st.compound += 1;
        }
        for s in &r.strategies {
            st.by_strategy[s] += 1;
        }
    }
    st
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basic::RecordProvenance;
    use crate::corpus::TaskSchema;
    use crate::formats::OutputFormat;

    fn rec(id: &str, task: TaskKind, style: Style, strategies: &[Strategy]) -> RenderedInstruction {
        RenderedInstruction {
            id: id.into(),
            task,
            style,
            strategies: strategies.iter().copied().collect(),
            prompt: format!("p-{id}"),
            target: "t".into(),
            format: OutputFormat::Json,
            schema: TaskSchema::default(),
            provenance: RecordProvenance::new(id, 0),
        }
    }

    #[test]
    fn hundred_matches_reference_percentages() {
        let p = plan(100, &MixConfig::default(), 0).unwrap();
        let got: Vec<u64> = p.per_task_counts.values().copied().collect();
        assert_eq!(got, [23, 29, 11, 5, 3, 2, 4, 12, 2, 1, 8]);
        assert_eq!(p.quotas.values().sum::<u64>(), 100);
        assert_eq!(p.quota(PoolKey::basic(TaskKind::Ig)), 8);
    }

    #[test]
    fn zero_total_is_all_zero() {
        let p = plan(0, &MixConfig::default(), 0).unwrap();
        assert!(p.quotas.values().all(|n| *n == 0));
        assert!(p.per_task_counts.values().all(|n| *n == 0));
    }

    #[test]
    fn bad_shares_are_rejected() {
        let mut cfg = MixConfig::default();
        cfg.shares[&TaskKind::Ner] = 0.5;
        assert!(matches!(
            plan(10, &cfg, 0),
            Err(MixError::InvalidDistribution(_))
        ));
        assert!(apportion(5, &[0.0, 0.0]).is_err());
        assert!(apportion(5, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn apportion_breaks_ties_by_order() {
        assert_eq!(apportion(1, &[1.0, 1.0]).unwrap(), [1, 0]);
        assert_eq!(apportion(2, &[1.0, 1.0, 1.0]).unwrap(), [1, 1, 0]);
        assert_eq!(apportion(10, &[0.2, 0.8]).unwrap(), [2, 8]);
    }

    #[test]
    fn rules_only_reach_rule_tasks() {
        let p = plan(2_812_832, &MixConfig::default(), 0).unwrap();
        for (k, n) in &p.quotas {
            if k.class == Some(Strategy::Rules) && *n > 0 {
                assert!(matches!(
                    k.task,
                    TaskKind::Ner | TaskKind::Re | TaskKind::Spo
                ));
            }
        }
        let c = p.style_count(Style::C);
        let non_ig = p.total - p.per_task_counts[&TaskKind::Ig];
        assert!((c as f64 / non_ig as f64 - 0.45).abs() < 1e-6);
        assert_eq!(p.strategy_targets.values().sum::<u64>(), c);
    }

    #[test]
    fn pool_keys_round_trip() {
        let k = PoolKey::compound(TaskKind::OpenIe, Strategy::Format);
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(s, "\"OPENIE/C/FORMAT\"");
        assert_eq!(serde_json::from_str::<PoolKey>(&s).unwrap(), k);
        let r = rec(
            "a",
            TaskKind::Ner,
            Style::C,
            &[Strategy::Guidelines, Strategy::Format],
        );
        assert_eq!(
            PoolKey::of(&r),
            PoolKey::compound(TaskKind::Ner, Strategy::Format)
        );
    }

    #[test]
    fn dedup_keeps_first() {
        let a = rec("a", TaskKind::Ner, Style::B, &[]);
        let mut b = a.clone();
        b.id = "b".into();
        let (out, removed) = dedup(vec![a.clone(), b, rec("c", TaskKind::Ner, Style::B, &[])]);
        assert_eq!(removed, 1);
        assert_eq!(out[0], a);
        let copies: Vec<_> = (0..5)
            .flat_map(|_| (0..3).map(|i| rec(&i.to_string(), TaskKind::Re, Style::B, &[])))
            .collect();
        assert_eq!(dedup(copies).0.len(), 3);
    }

    #[test]
    fn overlapping_strategies_count_twice() {
        let r = rec(
            "a",
            TaskKind::Ner,
            Style::C,
            &[Strategy::Guidelines, Strategy::Format],
        );
        let s = stats([&r], 0, 1);
        assert_eq!(s.compound, 1);
        assert_eq!(s.by_strategy[&Strategy::Guidelines], 1);
        assert_eq!(s.by_strategy[&Strategy::Format], 1);
        let e = stats(std::iter::empty(), 0, 1);
        assert_eq!(e.total, 0);
        assert!(e.by_task.values().all(|n| *n == 0));
    }

    #[test]
    fn execute_meets_quotas_and_reports_shortage() {
        let cfg = MixConfig::default();
        let p = plan(200, &cfg, 3).unwrap();
        let mut pools: IndexMap<PoolKey, Vec<RenderedInstruction>> = IndexMap::new();
        for (k, n) in &p.quotas {
            let v = (0..n * 2 + 1)
                .map(|i| {
                    let class: Vec<Strategy> = k.class.into_iter().collect();
                    rec(&format!("{k}-{i}"), k.task, k.style, &class)
                })
                .collect();
            pools.insert(*k, v);
        }
        let out = execute(&p, &pools, 3).unwrap();
        assert_eq!(out.len(), 200);
        assert_eq!(out, execute(&p, &pools, 3).unwrap());
        let ids: HashSet<_> = out.iter().map(|r| &r.id).collect();
        assert_eq!(ids.len(), 200);
        for (k, n) in &p.quotas {
            assert_eq!(
                out.iter().filter(|r| PoolKey::of(r) == *k).count() as u64,
                *n
            );
        }
        pools
            .get_mut(&PoolKey::basic(TaskKind::Ner))
            .unwrap()
            .truncate(1);
        assert!(matches!(
            execute(&p, &pools, 3),
            Err(MixError::PoolExhausted { .. })
        ));
    }
}
