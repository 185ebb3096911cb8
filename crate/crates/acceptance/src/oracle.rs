//! Straightforward re-implementations used to cross-check the engine:
//! graph search for subsumption, exhaustive assignment for matching and
//! plain weighted sums for profiles.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use ade_core::model::{ClinicalTrial, PatientGroup, PeriodKind};
use ade_core::normalization::ResultSetKind;
use ade_core::query::{APSpec, GroupQuery, QuerySpec};
use ade_core::taxonomy::{NodeKind, Taxonomy};
use ade_core::Dataset;

/// Ancestors-or-self of `id` by breadth-first search over parent links.
pub fn ancestors(t: &Taxonomy, id: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::from([id.to_string()]);
    let mut queue = VecDeque::from([id.to_string()]);
    while let Some(cur) = queue.pop_front() {
        if let Some(node) = t.get(&cur) {
            for p in &node.parents {
                if seen.insert(p.clone()) {
                    queue.push_back(p.clone());
                }
            }
        }
    }
    seen
}

pub fn subsumes(t: &Taxonomy, ancestor: &str, node: &str) -> bool {
    ancestors(t, node).contains(ancestor)
}

fn fits(t: &Taxonomy, spec: &APSpec, group: &PatientGroup, j: usize) -> bool {
    let tr = &group.treatments[j];
    subsumes(t, &spec.ap_id, &tr.active_principle_id)
        && spec.release.is_none_or(|r| r == tr.release)
        && spec.route.is_none_or(|r| r == tr.route)
        && match (&spec.dose_range, &tr.dose_range) {
            (Some(q), Some(d)) => q.unit == d.unit && q.min <= d.max && d.min <= q.max,
            _ => true,
        }
        && match (&spec.intakes_range, &tr.intakes_per_day) {
            (Some(q), Some(d)) => q.min <= d.max && d.min <= q.max,
            _ => true,
        }
}

/// Try every injective assignment of specs to treatments.
fn assign(t: &Taxonomy, specs: &[APSpec], group: &PatientGroup, used: &mut Vec<bool>) -> bool {
    let Some((first, rest)) = specs.split_first() else {
        return true;
    };
    for j in 0..group.treatments.len() {
        if !used[j] && fits(t, first, group, j) {
            used[j] = true;
            let ok = assign(t, rest, group, used);
            used[j] = false;
            if ok {
                return true;
            }
        }
    }
    false
}

pub fn matches(t: &Taxonomy, trial: &ClinicalTrial, group: &PatientGroup, gq: &GroupQuery) -> bool {
    let covered = |queried: &BTreeSet<String>, have: &BTreeSet<String>| {
        queried.iter().all(|q| have.iter().any(|h| subsumes(t, q, h)))
    };
    if !covered(&gq.trial_type_ids, &trial.trial_type_ids) || !covered(&gq.indication_ids, &group.indication_ids) {
        return false;
    }
    for tr in &group.treatments {
        if gq.excluded_ap_ids.iter().any(|x| subsumes(t, x, &tr.active_principle_id)) {
            return false;
        }
    }
    if gq.ap_specs.is_empty() {
        return true;
    }
    if !gq.open_list && gq.ap_specs.len() != group.treatments.len() {
        return false;
    }
    assign(t, &gq.ap_specs, group, &mut vec![false; group.treatments.len()])
}

fn is_placebo(t: &Taxonomy, g: &PatientGroup) -> bool {
    !g.treatments.is_empty() && g.treatments.iter().all(|tr| subsumes(t, "placebo", &tr.active_principle_id))
}

/// A matched group: (trial, period, group id, query index).
pub type Key = (String, usize, String, usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sets {
    /// (trial, period) of direct periods.
    pub direct: BTreeSet<(String, usize)>,
    pub indirect: BTreeSet<(String, usize)>,
    pub direct_groups: BTreeSet<Key>,
    pub indirect_groups: BTreeSet<Key>,
    pub absolute_groups: BTreeSet<Key>,
}

pub fn sets(ds: &Dataset, qs: &QuerySpec, include_titration: bool) -> Sets {
    let t = ds.taxonomy();
    let mut out = Sets::default();
    for trial in ds.trials() {
        if qs.excluded_trial_ids.contains(&trial.id) {
            continue;
        }
        for (pi, period) in trial.periods.iter().enumerate() {
            let mut keys = BTreeSet::new();
            for g in &period.groups {
                for (qi, gq) in qs.groups.iter().enumerate() {
                    if matches(t, trial, g, gq) {
                        keys.insert((trial.id.clone(), pi, g.id.clone(), qi));
                    }
                }
            }
            let titration = period.kind == PeriodKind::Titration;
            if !titration || include_titration {
                out.absolute_groups.extend(keys.iter().cloned());
            }
            if titration || keys.is_empty() {
                continue;
            }
            let covered: BTreeSet<usize> = keys.iter().map(|k| k.3).collect();
            if covered.len() == qs.groups.len() {
                out.direct.insert((trial.id.clone(), pi));
                out.direct_groups.extend(keys);
            } else if period.groups.iter().any(|g| is_placebo(t, g)) {
                out.indirect.insert((trial.id.clone(), pi));
                out.indirect_groups.extend(keys);
            }
        }
    }
    out
}

/// Rates of one query group as plain numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleProfile {
    pub categories: BTreeMap<String, (f64, f64)>,
    pub terms: BTreeMap<String, (f64, f64)>,
    pub effective_patients: f64,
}

struct Contribution {
    query: usize,
    factor: f64,
    n: f64,
    /// term -> (all events, serious events)
    counts: BTreeMap<String, (f64, f64)>,
}

fn group_of<'a>(ds: &'a Dataset, trial: &str, pi: usize, gid: &str) -> &'a PatientGroup {
    ds.trial(trial).and_then(|t| t.group(pi, gid)).expect("matched group exists")
}

/// term -> (serious=false count, serious=true count)
fn split_counts(ds: &Dataset, trial: &str, pi: usize, gid: &str) -> BTreeMap<String, [f64; 2]> {
    let mut out: BTreeMap<String, [f64; 2]> = BTreeMap::new();
    for o in ds.observations() {
        if o.trial_id == trial && o.period_index == pi && o.group_id == gid {
            out.entry(o.term.clone()).or_default()[usize::from(o.serious)] += o.event_count as f64;
        }
    }
    out
}

fn totals(split: &BTreeMap<String, [f64; 2]>) -> BTreeMap<String, (f64, f64)> {
    split.iter().map(|(k, v)| (k.clone(), (v[0] + v[1], v[1]))).collect()
}

/// Brute-force profiles (one per query group, `None` for an empty slice).
pub fn profiles(
    ds: &Dataset,
    qs: &QuerySpec,
    kind: ResultSetKind,
    include_titration: bool,
) -> Vec<Option<OracleProfile>> {
    let s = sets(ds, qs, include_titration);
    let n_q = qs.groups.len();
    let mut contributions = Vec::new();
    match kind {
        ResultSetKind::Absolute => {
            for (trial, pi, gid, qi) in &s.absolute_groups {
                contributions.push(Contribution {
                    query: *qi,
                    factor: 1.0,
                    n: f64::from(group_of(ds, trial, *pi, gid).n_patients),
                    counts: totals(&split_counts(ds, trial, *pi, gid)),
                });
            }
        }
        ResultSetKind::Direct | ResultSetKind::DirectIndirect => {
            // Direct groups: weight by the smallest matched group of the period.
            let mut direct = Vec::new();
            for (trial, pi) in &s.direct {
                let keys: Vec<&Key> = s.direct_groups.iter().filter(|k| &k.0 == trial && k.1 == *pi).collect();
                let min = keys
                    .iter()
                    .map(|k| group_of(ds, &k.0, k.1, &k.2).n_patients)
                    .min()
                    .expect("direct period has groups");
                for k in keys {
                    let n = f64::from(group_of(ds, &k.0, k.1, &k.2).n_patients);
                    direct.push((k.clone(), f64::from(min) / n, n));
                }
            }
            let mut k_dir = vec![1.0; n_q];
            let mut k_ind = vec![1.0; n_q];
            let mut indirect = Vec::new();
            if kind == ResultSetKind::DirectIndirect {
                let mut d = vec![0.0; n_q];
                let mut i = vec![0.0; n_q];
                for (k, w, n) in &direct {
                    d[k.3] += w * n;
                }
                for k in &s.indirect_groups {
                    i[k.3] += f64::from(group_of(ds, &k.0, k.1, &k.2).n_patients);
                }
                let (sd, si): (f64, f64) = (d.iter().sum(), i.iter().sum());
                if sd > 0.0 && si > 0.0 {
                    let r = si / sd;
                    for q in 0..n_q {
                        if d[q] > 0.0 && i[q] > 0.0 {
                            k_dir[q] = (i[q] / (d[q] * r)).min(1.0);
                            k_ind[q] = (d[q] * r / i[q]).min(1.0);
                        }
                    }
                }
                // Placebo rate per (term, seriousness), pooled and per period.
                let mut pooled: BTreeMap<(String, usize), (f64, f64)> = BTreeMap::new();
                let mut own: BTreeMap<(String, usize), BTreeMap<(String, usize), f64>> = BTreeMap::new();
                let mut own_n: BTreeMap<(String, usize), f64> = BTreeMap::new();
                let terms: Vec<String> = ds.terms().map(|t| t.label.clone()).collect();
                for (trial, pi) in &s.indirect {
                    let period = &ds.trial(trial).unwrap().periods[*pi];
                    for g in period.groups.iter().filter(|g| is_placebo(ds.taxonomy(), g)) {
                        *own_n.entry((trial.clone(), *pi)).or_default() += f64::from(g.n_patients);
                        for (term, c) in split_counts(ds, trial, *pi, &g.id) {
                            for (sv, count) in c.iter().enumerate() {
                                *own.entry((trial.clone(), *pi)).or_default().entry((term.clone(), sv)).or_default() +=
                                    count;
                            }
                        }
                    }
                }
                for (tp, n) in &own_n {
                    for term in &terms {
                        for sv in 0..2 {
                            let e = own.get(tp).and_then(|m| m.get(&(term.clone(), sv))).copied().unwrap_or(0.0);
                            let p = pooled.entry((term.clone(), sv)).or_default();
                            p.0 += e;
                            p.1 += n;
                        }
                    }
                }
                for k in &s.indirect_groups {
                    let tp = (k.0.clone(), k.1);
                    let n = f64::from(group_of(ds, &k.0, k.1, &k.2).n_patients);
                    let raw = split_counts(ds, &k.0, k.1, &k.2);
                    let mut counts = BTreeMap::new();
                    for term in &terms {
                        let mut c = [0.0; 2];
                        for sv in 0..2 {
                            let (pe, pn) = pooled[&(term.clone(), sv)];
                            let global = pe / pn;
                            let e_p = own.get(&tp).and_then(|m| m.get(&(term.clone(), sv))).copied().unwrap_or(0.0);
                            let local = e_p / own_n[&tp];
                            let r = raw.get(term).map_or(0.0, |v| v[sv]);
                            c[sv] = r + (global - local) * n;
                        }
                        counts.insert(term.clone(), (c[0] + c[1], c[1]));
                    }
                    indirect.push(Contribution { query: k.3, factor: k_ind[k.3], n, counts });
                }
            }
            for (k, w, n) in direct {
                contributions.push(Contribution {
                    query: k.3,
                    factor: w * k_dir[k.3],
                    n,
                    counts: totals(&split_counts(ds, &k.0, k.1, &k.2)),
                });
            }
            contributions.extend(indirect);
        }
    }

    let categories: Vec<String> = ds.taxonomy().ids_of_kind(NodeKind::AdeCategory).map(String::from).collect();
    (0..n_q)
        .map(|q| {
            let mine: Vec<&Contribution> = contributions.iter().filter(|c| c.query == q).collect();
            let eff: f64 = mine.iter().map(|c| c.factor * c.n).sum();
            if eff <= 0.0 {
                return None;
            }
            let mut term_sums: BTreeMap<String, (f64, f64)> = BTreeMap::new();
            for c in &mine {
                for (term, (all, serious)) in &c.counts {
                    let e = term_sums.entry(term.clone()).or_default();
                    e.0 += c.factor * all;
                    e.1 += c.factor * serious;
                }
            }
            let mut cats: BTreeMap<String, (f64, f64)> = categories.iter().map(|c| (c.clone(), (0.0, 0.0))).collect();
            let mut terms = BTreeMap::new();
            for (term, (all, serious)) in term_sums {
                let ids = &ds.term(&term).expect("known term").category_ids;
                let share = ids.len() as f64;
                for id in ids {
                    let e = cats.get_mut(id).expect("category in taxonomy");
                    e.0 += all / eff / share;
                    e.1 += serious / eff / share;
                }
                if all != 0.0 || serious != 0.0 {
                    let rate = (all / eff).max(0.0);
                    terms.insert(term, (rate, (serious / eff).clamp(0.0, rate)));
                }
            }
            for v in cats.values_mut() {
                v.0 = v.0.max(0.0);
                v.1 = v.1.clamp(0.0, v.0);
            }
            Some(OracleProfile { categories: cats, terms, effective_patients: eff })
        })
        .collect()
}
