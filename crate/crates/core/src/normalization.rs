//! Correction schemes and aggregation into ADE profiles.
//!
//! - Direct comparison: each matched group of a trial is weighted by
//!   `w_x = min(sizes) / size_x`, so every arm counts as much as the smallest.
//! - Indirect comparison: counts of placebo-bridged trials are corrected by
//!   the difference between the global and the trial's placebo rate,
//!   `E_c = E + (global - trial) * n`, per term and per seriousness.
//! - Mixing: with `r = sum |D|_ind / sum |D|_dir`, direct groups are scaled
//!   by `k_dir = min(1, |D|_ind / (|D|_dir r))` and indirect ones by
//!   `k_ind = min(1, |D|_dir r / |D|_ind)`.
//!
//! A profile holds, for each ADE category, the total and serious rate in
//! events per patient. A term listed under two categories counts for half
//! in each.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Dataset;
use crate::query::{MatchSource, MatchedGroup, ResultSets, TrialMatch};
use crate::taxonomy::NodeKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormError {
    #[error("no group to weight")]
    EmptyGroupList,
    #[error("group size must be at least 1")]
    ZeroSize,
    #[error("trial {0} has no placebo patients")]
    MissingPlacebo(usize),
    #[error("empty slice: no patients to aggregate over")]
    EmptySlice,
    #[error("matched group {0} is not in the dataset")]
    UnknownGroup(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultSetKind {
    #[default]
    Direct,
    DirectIndirect,
    Absolute,
}

impl ResultSetKind {
    pub const ALL: [ResultSetKind; 3] = [ResultSetKind::Direct, ResultSetKind::DirectIndirect, ResultSetKind::Absolute];

    /// Short form used in URLs.
    pub fn param(self) -> &'static str {
        match self {
            ResultSetKind::Direct => "direct",
            ResultSetKind::DirectIndirect => "mixed",
            ResultSetKind::Absolute => "absolute",
        }
    }
}

impl fmt::Display for ResultSetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.param())
    }
}

impl FromStr for ResultSetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(ResultSetKind::Direct),
            "mixed" | "direct_indirect" | "indirect" => Ok(ResultSetKind::DirectIndirect),
            "absolute" => Ok(ResultSetKind::Absolute),
            other => Err(format!("unknown result set `{other}` (direct, mixed, absolute)")),
        }
    }
}

/// `w_x = min(sizes) / size_x`.
pub fn per_trial_weights(sizes: &[u32]) -> Result<Vec<f64>, NormError> {
    let min = *sizes.iter().min().ok_or(NormError::EmptyGroupList)?;
    if min == 0 {
        return Err(NormError::ZeroSize);
    }
    Ok(sizes.iter().map(|&s| f64::from(min) / f64::from(s)).collect())
}

/// One placebo-bridged trial, for a single term and seriousness level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboTrial {
    pub placebo_events: f64,
    pub placebo_patients: f64,
    /// (events, patients) of each corrected arm.
    pub arms: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboCorrection {
    /// Pooled placebo rate over all trials.
    pub global_rate: f64,
    /// Corrected counts, shaped like the input arms.
    pub corrected: Vec<Vec<f64>>,
}

pub fn placebo_correct(trials: &[PlaceboTrial]) -> Result<PlaceboCorrection, NormError> {
    if let Some(i) = trials.iter().position(|t| t.placebo_patients.is_nan() || t.placebo_patients <= 0.0) {
        return Err(NormError::MissingPlacebo(i));
    }
    let events: f64 = trials.iter().map(|t| t.placebo_events).sum();
    let patients: f64 = trials.iter().map(|t| t.placebo_patients).sum();
    let global_rate = if patients > 0.0 { events / patients } else { 0.0 };
    let corrected = trials
        .iter()
        .map(|t| {
            let own = t.placebo_events / t.placebo_patients;
            t.arms.iter().map(|&(e, n)| e + (global_rate - own) * n).collect()
        })
        .collect();
    Ok(PlaceboCorrection { global_rate, corrected })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixing {
    /// Indirect / direct patient ratio; `None` when either side is empty.
    pub r: Option<f64>,
    /// (k_dir, k_ind) per query group.
    pub k: Vec<(f64, f64)>,
}

/// Mixing factors from the direct and indirect patient totals of each query
/// group. When a whole side, or one group's side, is empty the populated
/// side keeps k = 1.
pub fn mix_weights(sizes: &[(f64, f64)]) -> Mixing {
    let dir: f64 = sizes.iter().map(|s| s.0).sum();
    let ind: f64 = sizes.iter().map(|s| s.1).sum();
    if !(dir > 0.0 && ind > 0.0) {
        return Mixing { r: None, k: vec![(1.0, 1.0); sizes.len()] };
    }
    let r = ind / dir;
    let k = sizes
        .iter()
        .map(|&(d, i)| if d > 0.0 && i > 0.0 { ((i / (d * r)).min(1.0), (d * r / i).min(1.0)) } else { (1.0, 1.0) })
        .collect();
    Mixing { r: Some(r), k }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupWeight {
    pub trial_id: String,
    pub period_index: usize,
    pub group_id: String,
    pub query_index: usize,
    pub n_patients: u32,
    pub w: f64,
    pub k_dir: f64,
    pub k_ind: f64,
    pub source: MatchSource,
}

impl GroupWeight {
    /// Multiplier applied to both the group's counts and its patients.
    pub fn factor(&self) -> f64 {
        match self.source {
            MatchSource::Direct => self.w * self.k_dir,
            MatchSource::Indirect => self.k_ind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedCount {
    pub trial_id: String,
    pub period_index: usize,
    pub group_id: String,
    pub query_index: usize,
    pub term: String,
    pub serious: bool,
    pub raw: f64,
    pub corrected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRate {
    pub category_id: String,
    pub total_rate: f64,
    pub serious_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRate {
    pub term: String,
    pub category_ids: Vec<String>,
    pub rate: f64,
    pub serious_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdeProfile {
    /// One entry per ADE category, in taxonomy order.
    pub categories: Vec<CategoryRate>,
    /// Terms with a nonzero count in the slice, by label.
    pub terms: Vec<TermRate>,
    pub n_trials: usize,
    pub n_groups: usize,
    pub effective_patients: f64,
    pub overall_rate: f64,
    pub overall_serious_rate: f64,
}

impl AdeProfile {
    /// The profile of an empty slice.
    pub fn zero(category_ids: &[String]) -> AdeProfile {
        AdeProfile {
            categories: category_ids
                .iter()
                .map(|c| CategoryRate { category_id: c.clone(), total_rate: 0.0, serious_rate: 0.0 })
                .collect(),
            terms: Vec::new(),
            n_trials: 0,
            n_groups: 0,
            effective_patients: 0.0,
            overall_rate: 0.0,
            overall_serious_rate: 0.0,
        }
    }

    pub fn category(&self, id: &str) -> Option<&CategoryRate> {
        self.categories.iter().find(|c| c.category_id == id)
    }

    /// Largest category total rate.
    pub fn max_rate(&self) -> f64 {
        self.categories.iter().map(|c| c.total_rate).fold(0.0, f64::max)
    }
}

/// (term, serious) -> event count.
pub type Counts = BTreeMap<(String, bool), f64>;

/// A group of an aggregation slice: its weight factor, size and counts.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGroup {
    pub trial_id: String,
    pub factor: f64,
    pub n_patients: f64,
    /// Possibly corrected counts.
    pub counts: Counts,
}

/// Weighted rates of a slice:
/// `rate(term) = sum factor * count / sum factor * n`, category contribution
/// `rate / |categories(term)|`. Negative corrected values are carried
/// through the sums and clamped at the end, per term and per category;
/// serious rates are clamped to the total.
pub fn aggregate_profile(
    groups: &[WeightedGroup],
    ds: &Dataset,
    category_ids: &[String],
) -> Result<AdeProfile, NormError> {
    let effective: f64 = groups.iter().map(|g| g.factor * g.n_patients).sum();
    if effective.is_nan() || effective <= 0.0 {
        return Err(NormError::EmptySlice);
    }
    let mut sums: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for g in groups {
        for ((term, serious), count) in &g.counts {
            let e = sums.entry(term.as_str()).or_default();
            e.0 += g.factor * count;
            if *serious {
                e.1 += g.factor * count;
            }
        }
    }
    let mut cat: BTreeMap<&str, (f64, f64)> = category_ids.iter().map(|c| (c.as_str(), (0.0, 0.0))).collect();
    let mut terms = Vec::new();
    let (mut overall, mut overall_serious) = (0.0, 0.0);
    for (label, (total, serious)) in sums {
        let (rate, serious_rate) = (total / effective, serious / effective);
        let ids: Vec<String> = ds.term(label).map(|t| t.category_ids.iter().cloned().collect()).unwrap_or_default();
        let share = 1.0 / ids.len().max(1) as f64;
        for id in &ids {
            if let Some(e) = cat.get_mut(id.as_str()) {
                e.0 += rate * share;
                e.1 += serious_rate * share;
            }
        }
        let shown = rate.max(0.0);
        let shown_serious = serious_rate.clamp(0.0, shown);
        if total == 0.0 && serious == 0.0 {
            continue;
        }
        overall += shown;
        overall_serious += shown_serious;
        terms.push(TermRate { term: label.to_string(), category_ids: ids, rate: shown, serious_rate: shown_serious });
    }
    let categories = category_ids
        .iter()
        .map(|c| {
            let (total, serious) = cat[c.as_str()];
            let total_rate = total.max(0.0);
            CategoryRate { category_id: c.clone(), total_rate, serious_rate: serious.clamp(0.0, total_rate) }
        })
        .collect();
    Ok(AdeProfile {
        categories,
        terms,
        n_trials: groups.iter().map(|g| g.trial_id.as_str()).collect::<BTreeSet<_>>().len(),
        n_groups: groups.len(),
        effective_patients: effective,
        overall_rate: overall,
        overall_serious_rate: overall_serious,
    })
}

/// What the correction schemes did for one result set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub kind: ResultSetKind,
    pub weights: Vec<GroupWeight>,
    /// Placebo corrections of indirect groups (nonzero raw or corrected).
    pub corrected: Vec<CorrectedCount>,
    pub mixing: Option<Mixing>,
    /// One profile per query group; `None` for an empty slice.
    pub profiles: Vec<Option<AdeProfile>>,
    /// The weighted groups each profile was aggregated from.
    #[serde(skip)]
    pub slices: Vec<Vec<WeightedGroup>>,
}

impl Normalization {
    pub fn direct_weighting_applied(&self) -> bool {
        self.weights.iter().any(|w| w.source == MatchSource::Direct && w.w < 1.0)
    }
}

fn raw_counts(ds: &Dataset, trial_id: &str, pi: usize, gid: &str) -> Counts {
    ds.group_observations(trial_id, pi, gid)
        .iter()
        .map(|o| ((o.term.clone(), o.serious), o.event_count as f64))
        .collect()
}

fn group_size(ds: &Dataset, m: &MatchedGroup) -> Result<u32, NormError> {
    ds.trial(&m.trial_id)
        .and_then(|t| t.group(m.period_index, &m.group_id))
        .map(|g| g.n_patients)
        .ok_or_else(|| NormError::UnknownGroup(format!("{}/{}/{}", m.trial_id, m.period_index, m.group_id)))
}

/// Per-trial direct weights of the matched groups of one trial period.
fn direct_weights(ds: &Dataset, tm: &TrialMatch) -> Result<BTreeMap<String, f64>, NormError> {
    let mut sizes: BTreeMap<String, u32> = BTreeMap::new();
    for m in &tm.matched {
        sizes.insert(m.group_id.clone(), group_size(ds, m)?);
    }
    let ws = per_trial_weights(&sizes.values().copied().collect::<Vec<_>>())?;
    Ok(sizes.into_keys().zip(ws).collect())
}

/// Apply the correction scheme of `kind` to the result sets and aggregate
/// one profile per query group.
pub fn normalize(
    ds: &Dataset,
    n_queries: usize,
    results: &ResultSets,
    kind: ResultSetKind,
) -> Result<Normalization, NormError> {
    let category_ids: Vec<String> = ds.taxonomy().ids_of_kind(NodeKind::AdeCategory).map(String::from).collect();
    let mut weights = Vec::new();
    let mut corrected = Vec::new();
    let mut mixing = None;
    let mut slices: Vec<Vec<WeightedGroup>> = vec![Vec::new(); n_queries];

    let weight = |m: &MatchedGroup, n: u32, w: f64, source: MatchSource| GroupWeight {
        trial_id: m.trial_id.clone(),
        period_index: m.period_index,
        group_id: m.group_id.clone(),
        query_index: m.query_index,
        n_patients: n,
        w,
        k_dir: 1.0,
        k_ind: 1.0,
        source,
    };

    match kind {
        ResultSetKind::Absolute => {
            for m in &results.absolute {
                let n = group_size(ds, m)?;
                weights.push(weight(m, n, 1.0, MatchSource::Direct));
            }
        }
        ResultSetKind::Direct | ResultSetKind::DirectIndirect => {
            let set = if kind == ResultSetKind::Direct { &results.direct } else { &results.direct_indirect };
            for tm in set.iter().filter(|tm| tm.source == MatchSource::Direct) {
                let ws = direct_weights(ds, tm)?;
                for m in &tm.matched {
                    weights.push(weight(m, group_size(ds, m)?, ws[&m.group_id], MatchSource::Direct));
                }
            }
            if kind == ResultSetKind::DirectIndirect {
                let indirect: Vec<&TrialMatch> = set.iter().filter(|tm| tm.source == MatchSource::Indirect).collect();
                for tm in &indirect {
                    for m in &tm.matched {
                        weights.push(weight(m, group_size(ds, m)?, 1.0, MatchSource::Indirect));
                    }
                }
                let mut sides = vec![(0.0, 0.0); n_queries];
                for w in &weights {
                    match w.source {
                        MatchSource::Direct => sides[w.query_index].0 += w.w * f64::from(w.n_patients),
                        MatchSource::Indirect => sides[w.query_index].1 += f64::from(w.n_patients),
                    }
                }
                let mix = mix_weights(&sides);
                for w in &mut weights {
                    (w.k_dir, w.k_ind) = mix.k[w.query_index];
                }
                mixing = Some(mix);
                corrected = placebo_corrections(ds, &indirect)?;
            }
        }
    }

    let mut by_group: BTreeMap<(&str, usize, &str, usize), Counts> = BTreeMap::new();
    for c in &corrected {
        by_group
            .entry((c.trial_id.as_str(), c.period_index, c.group_id.as_str(), c.query_index))
            .or_default()
            .insert((c.term.clone(), c.serious), c.corrected);
    }
    for w in &weights {
        let counts = match w.source {
            MatchSource::Direct => raw_counts(ds, &w.trial_id, w.period_index, &w.group_id),
            MatchSource::Indirect => by_group
                .get(&(w.trial_id.as_str(), w.period_index, w.group_id.as_str(), w.query_index))
                .cloned()
                .unwrap_or_default(),
        };
        slices[w.query_index].push(WeightedGroup {
            trial_id: w.trial_id.clone(),
            factor: w.factor(),
            n_patients: f64::from(w.n_patients),
            counts,
        });
    }
    let profiles = slices
        .iter()
        .map(|s| match aggregate_profile(s, ds, &category_ids) {
            Ok(p) => Ok(Some(p)),
            Err(NormError::EmptySlice) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_, _>>()?;
    Ok(Normalization { kind, weights, corrected, mixing, profiles, slices })
}

/// Placebo-corrected counts of every matched group of the indirect trials,
/// for every (term, seriousness) seen in those groups or their placebos.
fn placebo_corrections(ds: &Dataset, indirect: &[&TrialMatch]) -> Result<Vec<CorrectedCount>, NormError> {
    struct Bridge<'a> {
        tm: &'a TrialMatch,
        placebo: Counts,
        placebo_n: f64,
        arms: Vec<(&'a MatchedGroup, f64, Counts)>,
    }
    let mut bridges = Vec::new();
    let mut keys: BTreeSet<(String, bool)> = BTreeSet::new();
    for tm in indirect {
        let trial = ds.trial(&tm.trial_id).ok_or_else(|| NormError::UnknownGroup(tm.trial_id.clone()))?;
        let mut placebo = BTreeMap::new();
        let mut placebo_n = 0.0;
        for pid in &tm.placebo_group_ids {
            let g = trial.group(tm.period_index, pid).ok_or_else(|| NormError::UnknownGroup(pid.clone()))?;
            placebo_n += f64::from(g.n_patients);
            for (k, v) in raw_counts(ds, &tm.trial_id, tm.period_index, pid) {
                *placebo.entry(k).or_insert(0.0) += v;
            }
        }
        let mut arms = Vec::new();
        for m in &tm.matched {
            let counts = raw_counts(ds, &m.trial_id, m.period_index, &m.group_id);
            keys.extend(counts.keys().cloned());
            arms.push((m, f64::from(group_size(ds, m)?), counts));
        }
        keys.extend(placebo.keys().cloned());
        bridges.push(Bridge { tm, placebo, placebo_n, arms });
    }

    let mut out = Vec::new();
    for key in &keys {
        let input: Vec<PlaceboTrial> = bridges
            .iter()
            .map(|b| PlaceboTrial {
                placebo_events: b.placebo.get(key).copied().unwrap_or(0.0),
                placebo_patients: b.placebo_n,
                arms: b.arms.iter().map(|(_, n, c)| (c.get(key).copied().unwrap_or(0.0), *n)).collect(),
            })
            .collect();
        let correction = placebo_correct(&input)?;
        for (b, row) in bridges.iter().zip(&correction.corrected) {
            for ((m, _, counts), &value) in b.arms.iter().zip(row) {
                let raw = counts.get(key).copied().unwrap_or(0.0);
                if raw == 0.0 && value == 0.0 {
                    continue;
                }
                out.push(CorrectedCount {
                    trial_id: b.tm.trial_id.clone(),
                    period_index: b.tm.period_index,
                    group_id: m.group_id.clone(),
                    query_index: m.query_index,
                    term: key.0.clone(),
                    serious: key.1,
                    raw,
                    corrected: value,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_worked_example() {
        let t1 = per_trial_weights(&[100, 100]).unwrap();
        let t2 = per_trial_weights(&[100, 200]).unwrap();
        assert_eq!([t1, t2].concat(), [1.0, 1.0, 1.0, 0.5]);
        assert_eq!(per_trial_weights(&[50, 100, 200]).unwrap(), [1.0, 0.5, 0.25]);
        assert_eq!(per_trial_weights(&[]), Err(NormError::EmptyGroupList));
        assert_eq!(per_trial_weights(&[0, 3]), Err(NormError::ZeroSize));
    }

    #[test]
    fn placebo_worked_example() {
        let c = placebo_correct(&[
            PlaceboTrial { placebo_events: 10.0, placebo_patients: 100.0, arms: vec![(20.0, 100.0)] },
            PlaceboTrial { placebo_events: 30.0, placebo_patients: 100.0, arms: vec![(30.0, 100.0)] },
        ])
        .unwrap();
        assert_eq!(c.global_rate, 0.2);
        assert_eq!(c.corrected, vec![vec![30.0], vec![20.0]]);
        assert_eq!(
            placebo_correct(&[PlaceboTrial { placebo_events: 0.0, placebo_patients: 0.0, arms: vec![] }]),
            Err(NormError::MissingPlacebo(0))
        );
    }

    #[test]
    fn mixing_worked_example() {
        let m = mix_weights(&[(100.0, 100.0), (100.0, 200.0)]);
        assert_eq!(m.r, Some(1.5));
        assert!((m.k[0].0 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.k[0].1, 1.0);
        assert_eq!(m.k[1].0, 1.0);
        assert!((m.k[1].1 - 0.75).abs() < 1e-12);
        let degenerate = mix_weights(&[(100.0, 0.0), (50.0, 0.0)]);
        assert_eq!(degenerate, Mixing { r: None, k: vec![(1.0, 1.0); 2] });
        let partial = mix_weights(&[(100.0, 0.0), (100.0, 300.0)]);
        assert_eq!(partial.k[0], (1.0, 1.0));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("mixed".parse::<ResultSetKind>().unwrap(), ResultSetKind::DirectIndirect);
        assert_eq!("Absolute".parse::<ResultSetKind>().unwrap(), ResultSetKind::Absolute);
        assert!("both".parse::<ResultSetKind>().is_err());
    }
}
