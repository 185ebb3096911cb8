use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use ade_core::glyph::Styles;
use ade_core::ingestion::read_dataset;
use ade_core::model::{DoseRange, IntakeRange, Release, Route};
use ade_core::normalization::ResultSetKind;
use ade_core::query::{compute_exclusions, APSpec, GroupQuery, QuerySpec};
use ade_core::search::{parse_search_params, search, serialize_search_params, SearchParams};
use ade_core::taxonomy::{Lang, NodeKind};
use ade_core::Dataset;
use proptest::prelude::*;
use proptest::sample::select;

fn dataset() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| {
        read_dataset(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/pain/dataset"))
            .expect("fixture dataset")
    })
}

fn ids(kind: NodeKind) -> Vec<String> {
    dataset().taxonomy().ids_of_kind(kind).map(String::from).collect()
}

fn id_set(kind: NodeKind) -> impl Strategy<Value = BTreeSet<String>> {
    proptest::collection::btree_set(select(ids(kind)), 0..=2)
}

fn range() -> impl Strategy<Value = (f64, f64)> {
    (0u32..2000, 0u32..2000).prop_map(|(a, b)| {
        let (lo, hi) = (a.min(b), a.max(b));
        (f64::from(lo) / 4.0, f64::from(hi) / 4.0)
    })
}

fn ap_spec() -> impl Strategy<Value = APSpec> {
    (
        select(ids(NodeKind::ActivePrinciple)),
        proptest::option::of(select(Release::ALL.to_vec())),
        proptest::option::of(select(Route::ALL.to_vec())),
        proptest::option::of((range(), select(vec!["mg", "mg/kg", "g", "µg/h"]))),
        proptest::option::of(range()),
    )
        .prop_map(|(ap_id, release, route, dose, intakes)| APSpec {
            ap_id,
            release,
            route,
            dose_range: dose.map(|((lo, hi), unit)| DoseRange::new(lo, hi, unit)),
            intakes_range: intakes.map(|(lo, hi)| IntakeRange::new(lo, hi)),
        })
}

fn group_query() -> impl Strategy<Value = GroupQuery> {
    (
        id_set(NodeKind::TrialType),
        id_set(NodeKind::Indication),
        proptest::collection::vec(ap_spec(), 0..=3),
        any::<bool>(),
    )
        .prop_map(|(trial_type_ids, indication_ids, ap_specs, open)| GroupQuery {
            open_list: open && !ap_specs.is_empty(),
            trial_type_ids,
            indication_ids,
            ap_specs,
            ..Default::default()
        })
        .prop_filter("group needs a criterion", |g| !g.is_empty())
}

fn params() -> impl Strategy<Value = SearchParams> {
    (
        proptest::collection::vec(group_query(), 1..=4),
        proptest::collection::btree_set("NCT0000000[0-9]", 0..=2),
        select(vec![ResultSetKind::Direct, ResultSetKind::DirectIndirect, ResultSetKind::Absolute]),
        any::<bool>(),
        select(vec![Lang::En, Lang::Fr]),
        proptest::option::of(0u32..6),
    )
        .prop_map(|(groups, excluded_trial_ids, set, include_titration, lang, tab)| {
            let spec = QuerySpec { groups, excluded_trial_ids };
            SearchParams { spec: compute_exclusions(&spec, dataset().taxonomy()), set, include_titration, lang, tab }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn url_round_trip(p in params()) {
        let query = serialize_search_params(&p);
        let parsed = parse_search_params(&query, dataset().taxonomy()).map_err(|e| TestCaseError::fail(format!("{query}: {e}")))?;
        prop_assert_eq!(&parsed, &p, "{}", query);
        prop_assert_eq!(serialize_search_params(&parsed), query);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summary_tabs_are_mutually_exclusive(p in params()) {
        let response = search(dataset(), &p, &Styles::builtin()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let has_aps = p.spec.has_active_principles();
        prop_assert_eq!(response.tabs.comparable_treatments.is_some(), has_aps);
        prop_assert_eq!(response.tabs.treatment_summary.is_some(), !has_aps);
        prop_assert_eq!(response.groups.len(), p.spec.groups.len());
    }
}
