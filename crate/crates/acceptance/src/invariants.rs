//! Invariants of the engine, checked on one fixture each. Every check
//! returns a description of the first violation found.

use std::collections::{BTreeMap, BTreeSet};

use ade_core::normalization::{normalize, placebo_correct, AdeProfile, PlaceboTrial, ResultSetKind};
use ade_core::query::{execute, set_patients, ExecuteOptions, MatchSource, MatchedGroup, QuerySpec, ResultSets};
use ade_core::taxonomy::NodeKind;
use ade_core::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle::{self, Key, OracleProfile};
use crate::Fixture;

pub type Check = Result<(), String>;

/// Relative closeness, `|a - b| <= tol * max(|a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

fn run(ds: &Dataset, qs: &QuerySpec, include_titration: bool) -> Result<ResultSets, String> {
    execute(ds, qs, ExecuteOptions { include_titration }).map_err(|e| e.to_string())
}

fn keys(groups: impl IntoIterator<Item = MatchedGroup>) -> BTreeSet<Key> {
    groups.into_iter().map(|m| (m.trial_id, m.period_index, m.group_id, m.query_index)).collect()
}

/// Engine profiles of each result set kind.
pub fn engine_profiles(fx: &Fixture, kind: ResultSetKind) -> Result<Vec<Option<AdeProfile>>, String> {
    let results = run(&fx.dataset, &fx.query, false)?;
    let norm = normalize(&fx.dataset, fx.n_queries(), &results, kind).map_err(|e| e.to_string())?;
    Ok(norm.profiles)
}

/// Within a direct trial period every matched group weighs `w * n = min n`.
pub fn effective_size_equality(fx: &Fixture) -> Check {
    let results = run(&fx.dataset, &fx.query, false)?;
    let norm = normalize(&fx.dataset, fx.n_queries(), &results, ResultSetKind::Direct).map_err(|e| e.to_string())?;
    let mut by_period: BTreeMap<(&str, usize), Vec<(f64, u32)>> = BTreeMap::new();
    for w in &norm.weights {
        by_period
            .entry((w.trial_id.as_str(), w.period_index))
            .or_default()
            .push((w.w * f64::from(w.n_patients), w.n_patients));
    }
    for (period, sizes) in by_period {
        let min = f64::from(sizes.iter().map(|s| s.1).min().unwrap());
        for (eff, _) in sizes {
            if !close(eff, min, 1e-12) {
                return Err(format!("{period:?}: effective size {eff} != smallest group {min}"));
            }
        }
    }
    Ok(())
}

/// Equal placebo rates everywhere leave every count unchanged.
pub fn placebo_noop(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (num, den) = (rng.random_range(0..=50u32), rng.random_range(1..=50u32));
    let trials: Vec<PlaceboTrial> = (0..rng.random_range(1..=20))
        .map(|_| {
            let m = f64::from(rng.random_range(1..=20u32));
            PlaceboTrial {
                placebo_events: f64::from(num) * m,
                placebo_patients: f64::from(den) * m,
                arms: (0..rng.random_range(1..=3))
                    .map(|_| (f64::from(rng.random_range(0..=300u32)), f64::from(rng.random_range(1..=300u32))))
                    .collect(),
            }
        })
        .collect();
    let c = placebo_correct(&trials).map_err(|e| e.to_string())?;
    for (t, row) in trials.iter().zip(&c.corrected) {
        for (&(e, _), &v) in t.arms.iter().zip(row) {
            if !close(e, v, 1e-9) {
                return Err(format!("count {e} corrected to {v} with uniform placebo rate {num}/{den}"));
            }
        }
    }
    Ok(())
}

fn profiles_close(a: &[Option<AdeProfile>], b: &[Option<AdeProfile>], tol: f64) -> Check {
    if a.len() != b.len() {
        return Err("profile count differs".into());
    }
    for (qi, (x, y)) in a.iter().zip(b).enumerate() {
        match (x, y) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                for (cx, cy) in x.categories.iter().zip(&y.categories) {
                    if !close(cx.total_rate, cy.total_rate, tol) || !close(cx.serious_rate, cy.serious_rate, tol) {
                        return Err(format!("group {qi} category {}: {cx:?} vs {cy:?}", cx.category_id));
                    }
                }
                if !close(x.overall_rate, y.overall_rate, tol) {
                    return Err(format!("group {qi} overall {} vs {}", x.overall_rate, y.overall_rate));
                }
            }
            _ => return Err(format!("group {qi}: one profile is empty")),
        }
    }
    Ok(())
}

/// Multiplying every size and count by `k` leaves every rate unchanged.
pub fn scale_invariance(fx: &Fixture) -> Check {
    let k = 2 + (fx.seed % 5) as u32;
    let scaled = fx.scaled(k);
    for kind in ResultSetKind::ALL {
        profiles_close(&engine_profiles(fx, kind)?, &engine_profiles(&scaled, kind)?, 1e-9)
            .map_err(|e| format!("{kind} x{k}: {e}"))?;
    }
    Ok(())
}

/// Category rates add up to the summed term rates (a term in two
/// categories counts half in each). Checked on the uncorrected sets.
pub fn category_split_conservation(fx: &Fixture) -> Check {
    for kind in [ResultSetKind::Direct, ResultSetKind::Absolute] {
        for (qi, p) in engine_profiles(fx, kind)?.iter().enumerate() {
            let Some(p) = p else { continue };
            let cats: f64 = p.categories.iter().map(|c| c.total_rate).sum();
            let serious: f64 = p.categories.iter().map(|c| c.serious_rate).sum();
            let terms: f64 = p.terms.iter().map(|t| t.rate).sum();
            if !close(cats, p.overall_rate, 1e-9) || !close(cats, terms, 1e-9) {
                return Err(format!("{kind} group {qi}: categories {cats} vs terms {terms}"));
            }
            if !close(serious, p.overall_serious_rate, 1e-9) {
                return Err(format!("{kind} group {qi}: serious {serious} vs {}", p.overall_serious_rate));
            }
        }
    }
    Ok(())
}

/// direct is within direct+indirect, whose groups are within absolute;
/// patient totals follow; titration only adds to absolute; generalizing a
/// principle only adds.
pub fn result_set_monotonicity(fx: &Fixture) -> Check {
    let r = run(&fx.dataset, &fx.query, false)?;
    let periods = |v: &[ade_core::query::TrialMatch]| -> BTreeSet<(String, usize)> {
        v.iter().map(|m| (m.trial_id.clone(), m.period_index)).collect()
    };
    if !periods(&r.direct).is_subset(&periods(&r.direct_indirect)) {
        return Err("direct periods missing from direct+indirect".into());
    }
    if r.direct_indirect.iter().any(|m| m.source == MatchSource::Direct && !r.direct.contains(m)) {
        return Err("direct+indirect holds a direct period unknown to direct".into());
    }
    let absolute = keys(r.absolute.iter().cloned());
    let mixed = keys(r.direct_indirect.iter().flat_map(|m| m.matched.iter().cloned()));
    if !mixed.is_subset(&absolute) {
        return Err("direct+indirect group missing from absolute".into());
    }
    let patients = |v: Vec<MatchedGroup>| set_patients(&fx.dataset, &v);
    let direct_patients = patients(r.direct.iter().flat_map(|m| m.matched.iter().cloned()).collect());
    let mixed_patients = patients(r.direct_indirect.iter().flat_map(|m| m.matched.iter().cloned()).collect());
    let absolute_patients = patients(r.absolute.clone());
    if !(direct_patients <= mixed_patients && mixed_patients <= absolute_patients) {
        return Err(format!("patients {direct_patients} / {mixed_patients} / {absolute_patients} not increasing"));
    }
    let with = run(&fx.dataset, &fx.query, true)?;
    if !absolute.is_subset(&keys(with.absolute.iter().cloned())) {
        return Err("titration removed absolute groups".into());
    }
    if with.direct != r.direct || with.direct_indirect != r.direct_indirect {
        return Err("titration changed the comparison sets".into());
    }
    // Replace one principle by a parent, without exclusions.
    let t = fx.dataset.taxonomy();
    let mut plain = fx.query.clone();
    for g in &mut plain.groups {
        g.excluded_ap_ids.clear();
    }
    let base = keys(run(&fx.dataset, &plain, false)?.absolute);
    for (qi, g) in plain.groups.iter().enumerate() {
        for (si, spec) in g.ap_specs.iter().enumerate() {
            let Some(parent) = t.get(&spec.ap_id).and_then(|n| n.parents.iter().next()) else { continue };
            let mut general = plain.clone();
            general.groups[qi].ap_specs[si].ap_id = parent.clone();
            let wider = keys(run(&fx.dataset, &general, false)?.absolute);
            let mine = |s: &BTreeSet<Key>| s.iter().filter(|k| k.3 == qi).cloned().collect::<BTreeSet<_>>();
            if !mine(&base).is_subset(&mine(&wider)) {
                return Err(format!("generalizing {} to {parent} lost groups", spec.ap_id));
            }
        }
    }
    Ok(())
}

/// No group matched by a query takes a principle it excludes, and a query
/// whose exclusions come from a more specific one shares no group with it.
pub fn exclusion_soundness(fx: &Fixture) -> Check {
    let t = fx.dataset.taxonomy();
    let r = run(&fx.dataset, &fx.query, true)?;
    for m in &r.absolute {
        let g = fx.dataset.trial(&m.trial_id).and_then(|tr| tr.group(m.period_index, &m.group_id)).unwrap();
        for x in &fx.query.groups[m.query_index].excluded_ap_ids {
            if g.treatments.iter().any(|tr| oracle::subsumes(t, x, &tr.active_principle_id)) {
                return Err(format!(
                    "{}/{} matched query {} despite excluding {x}",
                    m.trial_id, m.group_id, m.query_index
                ));
            }
        }
    }
    let by_query = |qi: usize| -> BTreeSet<(String, usize, String)> {
        r.absolute
            .iter()
            .filter(|m| m.query_index == qi)
            .map(|m| (m.trial_id.clone(), m.period_index, m.group_id.clone()))
            .collect()
    };
    let qs = &fx.query.groups;
    for i in 0..qs.len() {
        for j in 0..qs.len() {
            let (s, g) = (&qs[i], &qs[j]);
            if i == j || s.ap_specs.is_empty() || s.ap_specs.len() != g.ap_specs.len() {
                continue;
            }
            let pairs: Vec<_> = s.ap_specs.iter().zip(&g.ap_specs).collect();
            let nested = pairs.iter().all(|(a, b)| oracle::subsumes(t, &b.ap_id, &a.ap_id));
            let strict = pairs.iter().any(|(a, b)| a.ap_id != b.ap_id);
            if nested && strict {
                let shared: Vec<_> = by_query(i).intersection(&by_query(j)).cloned().collect();
                if !shared.is_empty() {
                    return Err(format!("queries {i} and {j} share groups {shared:?}"));
                }
            }
        }
    }
    Ok(())
}

/// Subsumption, descendants and matching agree with graph search and
/// exhaustive assignment.
pub fn taxonomy_oracle_equivalence(fx: &Fixture) -> Check {
    let t = fx.dataset.taxonomy();
    let ids: Vec<&str> = t.iter().map(|n| n.id.as_str()).collect();
    for a in &ids {
        let desc = t.descendants_or_self(a).map_err(|e| e.to_string())?;
        for b in &ids {
            let expected = oracle::subsumes(t, a, b);
            if t.subsumes(a, b) != expected {
                return Err(format!("subsumes({a}, {b}) != {expected}"));
            }
            if desc.contains(*b) != expected {
                return Err(format!("descendants_or_self({a}) disagrees on {b}"));
            }
        }
    }
    let engine = run(&fx.dataset, &fx.query, false)?;
    let brute = oracle::sets(&fx.dataset, &fx.query, false);
    if keys(engine.absolute.iter().cloned()) != brute.absolute_groups {
        return Err("absolute set differs from exhaustive matching".into());
    }
    let engine_direct = keys(engine.direct.iter().flat_map(|m| m.matched.iter().cloned()));
    if engine_direct != brute.direct_groups {
        return Err("direct set differs from exhaustive matching".into());
    }
    let engine_indirect = keys(
        engine
            .direct_indirect
            .iter()
            .filter(|m| m.source == MatchSource::Indirect)
            .flat_map(|m| m.matched.iter().cloned()),
    );
    if engine_indirect != brute.indirect_groups {
        return Err("indirect set differs from exhaustive matching".into());
    }
    Ok(())
}

fn compare_oracle(
    kind: ResultSetKind,
    engine: &[Option<AdeProfile>],
    brute: &[Option<OracleProfile>],
    tol: f64,
) -> Check {
    for (qi, (e, b)) in engine.iter().zip(brute).enumerate() {
        match (e, b) {
            (None, None) => {}
            (Some(e), Some(b)) => {
                if !close(e.effective_patients, b.effective_patients, tol) {
                    return Err(format!(
                        "{kind} group {qi}: effective {} vs {}",
                        e.effective_patients, b.effective_patients
                    ));
                }
                for c in &e.categories {
                    let (total, serious) = b.categories[&c.category_id];
                    if !close(c.total_rate, total, tol) || !close(c.serious_rate, serious, tol) {
                        return Err(format!(
                            "{kind} group {qi} {}: ({}, {}) vs ({total}, {serious})",
                            c.category_id, c.total_rate, c.serious_rate
                        ));
                    }
                }
                let engine_terms: BTreeMap<&str, (f64, f64)> =
                    e.terms.iter().map(|t| (t.term.as_str(), (t.rate, t.serious_rate))).collect();
                if engine_terms.len() != b.terms.len() {
                    return Err(format!("{kind} group {qi}: {} terms vs {}", engine_terms.len(), b.terms.len()));
                }
                for (term, &(rate, serious)) in &b.terms {
                    let Some(&(er, es)) = engine_terms.get(term.as_str()) else {
                        return Err(format!("{kind} group {qi}: missing term {term}"));
                    };
                    if !close(er, rate, tol) || !close(es, serious, tol) {
                        return Err(format!("{kind} group {qi} {term}: ({er}, {es}) vs ({rate}, {serious})"));
                    }
                }
            }
            _ => return Err(format!("{kind} group {qi}: emptiness differs")),
        }
    }
    Ok(())
}

/// Engine profiles equal the brute-force weighted sums for all three sets.
pub fn aggregation_oracle(fx: &Fixture, tol: f64) -> Check {
    for kind in ResultSetKind::ALL {
        let engine = engine_profiles(fx, kind)?;
        let brute = oracle::profiles(&fx.dataset, &fx.query, kind, false);
        compare_oracle(kind, &engine, &brute, tol)?;
    }
    Ok(())
}

/// Every category of a fixture's taxonomy has a style (sanity for glyphs).
pub fn categories(fx: &Fixture) -> Vec<String> {
    fx.dataset.taxonomy().ids_of_kind(NodeKind::AdeCategory).map(String::from).collect()
}
