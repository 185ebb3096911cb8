//! The committed pain corpus: its manifest, the regimen extraction table and
//! the deep links expected to parse into known queries.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ade_core::ingestion::{IngestPaths, RegimenExtractor};
use ade_core::model::{Release, Route};
use ade_core::query::{APSpec, GroupQuery, QuerySpec};
use ade_core::search::parse_search_params;
use ade_core::taxonomy::{load_taxonomy, Taxonomy};
use ade_core::DatasetSummary;
use serde::Deserialize;

pub fn pain_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/pain")
}

pub fn ingest_paths() -> IngestPaths {
    let dir = pain_dir();
    IngestPaths {
        xml_dir: dir.join("xml"),
        curation: dir.join("curation.csv"),
        taxonomy: dir.join("taxonomy.txt"),
        terms: dir.join("terms.txt"),
        soc_map: Some(dir.join("soc_categories.txt")),
    }
}

pub fn taxonomy() -> Taxonomy {
    let text = std::fs::read_to_string(pain_dir().join("taxonomy.txt")).expect("fixture taxonomy");
    load_taxonomy(&text).expect("valid fixture taxonomy")
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Manifest {
    pub trials: usize,
    pub groups: usize,
    pub patients: u64,
    pub titration_patients: u64,
    pub observations: usize,
    pub distinct_terms: usize,
    pub mapped_terms: usize,
}

impl Manifest {
    pub fn load() -> Manifest {
        let text = std::fs::read_to_string(pain_dir().join("manifest.json")).expect("manifest");
        serde_json::from_str(&text).expect("valid manifest")
    }

    /// Fields of `s` that differ from the manifest.
    pub fn mismatches(&self, s: &DatasetSummary) -> Vec<String> {
        let got = Manifest {
            trials: s.trials,
            groups: s.groups,
            patients: s.patients,
            titration_patients: s.titration_patients,
            observations: s.observations,
            distinct_terms: s.distinct_terms,
            mapped_terms: s.mapped_terms,
        };
        if &got == self {
            Vec::new()
        } else {
            vec![format!("expected {self:?}, got {got:?}")]
        }
    }
}

pub struct RegimenCase {
    pub text: &'static str,
    pub aps: &'static [&'static str],
    pub dose: Option<(f64, f64, &'static str)>,
    pub intakes: Option<(f64, f64)>,
    pub route: Option<Route>,
    pub release: Option<Release>,
}

const fn case(
    text: &'static str,
    aps: &'static [&'static str],
    dose: Option<(f64, f64, &'static str)>,
    intakes: Option<(f64, f64)>,
    route: Option<Route>,
    release: Option<Release>,
) -> RegimenCase {
    RegimenCase { text, aps, dose, intakes, route, release }
}

use Release::{Immediate, Modified};
use Route::{Intravenous, Oral, Subcutaneous, Transdermal};

pub const REGIMEN_CASES: &[RegimenCase] = &[
    case("Oxycodone 5-10 mg", &["oxycodone"], Some((5.0, 10.0, "mg")), None, None, None),
    case("morphine 10 mg bid", &["morphine"], Some((10.0, 10.0, "mg")), Some((2.0, 2.0)), None, None),
    case(
        "Ibuprofen 400 mg 1-2 times per day",
        &["ibuprofen"],
        Some((400.0, 400.0, "mg")),
        Some((1.0, 2.0)),
        None,
        None,
    ),
    case(
        "acetaminophen 1000 mg oral qid",
        &["acetaminophen"],
        Some((1000.0, 1000.0, "mg")),
        Some((4.0, 4.0)),
        Some(Oral),
        None,
    ),
    case("Tapentadol IR 50 mg", &["tapentadol"], Some((50.0, 50.0, "mg")), None, None, Some(Immediate)),
    case(
        "tapentadol ER 100-250 mg b.i.d.",
        &["tapentadol"],
        Some((100.0, 250.0, "mg")),
        Some((2.0, 2.0)),
        None,
        Some(Modified),
    ),
    case("Pregabalin 150 to 300 mg/day", &["pregabalin"], Some((150.0, 300.0, "mg")), None, None, None),
    case("gabapentin 600 mg three times a day", &["gabapentin"], Some((600.0, 600.0, "mg")), None, None, None),
    case("Duloxetine 60 mg once daily", &["duloxetine"], Some((60.0, 60.0, "mg")), Some((1.0, 1.0)), None, None),
    case("Elagolix 150 mg qd", &["elagolix"], Some((150.0, 150.0, "mg")), Some((1.0, 1.0)), None, None),
    case("Elagolix 200 mg twice daily", &["elagolix"], Some((200.0, 200.0, "mg")), Some((2.0, 2.0)), None, None),
    case("Placebo", &["placebo"], None, None, None, None),
    case("Matching placebo tablets orally", &["placebo"], None, None, Some(Oral), None),
    case("Morphine 0.1 mg/kg IV", &["morphine"], Some((0.1, 0.1, "mg/kg")), None, Some(Intravenous), None),
    case("Ibuprofen 10 mg/kg t.i.d.", &["ibuprofen"], Some((10.0, 10.0, "mg/kg")), Some((3.0, 3.0)), None, None),
    case(
        "acetaminophen 15 mg/kg 4 times daily",
        &["acetaminophen"],
        Some((15.0, 15.0, "mg/kg")),
        Some((4.0, 4.0)),
        None,
        None,
    ),
    case(
        "Oxycodone extended-release 20 mg q.i.d.",
        &["oxycodone"],
        Some((20.0, 20.0, "mg")),
        Some((4.0, 4.0)),
        None,
        Some(Modified),
    ),
    case("Morphine 2 mg subcutaneous", &["morphine"], Some((2.0, 2.0, "mg")), None, Some(Subcutaneous), None),
    case("Tramadol 50–100 mg per os", &["tramadol"], Some((50.0, 100.0, "mg")), None, Some(Oral), None),
    case(
        "tramadol 37.5 mg + acetaminophen 325 mg",
        &["tramadol", "acetaminophen"],
        Some((37.5, 37.5, "mg")),
        None,
        None,
        None,
    ),
    case(
        "Oxycodone/acetaminophen 5/325 mg",
        &["oxycodone", "acetaminophen"],
        Some((325.0, 325.0, "mg")),
        None,
        None,
        None,
    ),
    case("Paracétamol 1 g", &["acetaminophen"], Some((1.0, 1.0, "g")), None, None, None),
    case("Morphine patch 25 mcg/h", &["morphine"], Some((25.0, 25.0, "µg/h")), None, Some(Transdermal), None),
    case("Ibuprofen 200 mg 3 x daily", &["ibuprofen"], Some((200.0, 200.0, "mg")), Some((3.0, 3.0)), None, None),
    case(
        "Gabapentin 300 mg 2-3 times a day",
        &["gabapentin"],
        Some((300.0, 300.0, "mg")),
        Some((2.0, 3.0)),
        None,
        None,
    ),
    case(
        "Pregabalin immediate release 75 mg BID",
        &["pregabalin"],
        Some((75.0, 75.0, "mg")),
        Some((2.0, 2.0)),
        None,
        Some(Immediate),
    ),
    case("Duloxetine 30mg PO", &["duloxetine"], Some((30.0, 30.0, "mg")), None, Some(Oral), None),
    case(
        "morphine sulfate 15 mg controlled-release",
        &["morphine"],
        Some((15.0, 15.0, "mg")),
        None,
        None,
        Some(Modified),
    ),
    case("Standard care", &[], None, None, None, None),
    case("tapentadol in tapentadolol study", &["tapentadol"], None, None, None, None),
];

/// Cases of the regimen table the extractor gets wrong.
pub fn regimen_mismatches(taxonomy: &Taxonomy) -> Vec<String> {
    let extractor = RegimenExtractor::new(taxonomy);
    let mut failures = Vec::new();
    for c in REGIMEN_CASES {
        let got = extractor.extract(c.text);
        let aps: Vec<&str> = got.active_principle_candidates.iter().map(|a| a.id.as_str()).collect();
        let dose = got.dose_range.as_ref().map(|d| (d.value.min, d.value.max, d.value.unit.as_str()));
        let intakes = got.intakes_per_day.as_ref().map(|i| (i.value.min, i.value.max));
        let route = got.route.as_ref().map(|r| r.value);
        let release = got.release.as_ref().map(|r| r.value);
        if aps != c.aps || dose != c.dose || intakes != c.intakes || route != c.route || release != c.release {
            failures.push(format!(
                "{:?}: aps {aps:?} dose {dose:?} intakes {intakes:?} route {route:?} release {release:?}",
                c.text
            ));
        }
    }
    failures
}

pub struct DeepLink {
    pub query: &'static str,
    pub expected: fn() -> QuerySpec,
}

fn ids(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn ap(id: &str, route: Option<Route>) -> APSpec {
    APSpec { route, ..APSpec::new(id) }
}

fn group(indications: &[&str], aps: Vec<APSpec>, excluded: &[&str]) -> GroupQuery {
    GroupQuery { indication_ids: ids(indications), ap_specs: aps, excluded_ap_ids: ids(excluded), ..Default::default() }
}

fn spec(groups: Vec<GroupQuery>) -> QuerySpec {
    QuerySpec { groups, ..Default::default() }
}

const PNP: &str = "peripheral_neuropathic_pain";

/// Published deep links of the pain platform, as query strings.
pub const DEEP_LINKS: &[DeepLink] = &[
    DeepLink {
        query: "group_1_ap=acetaminophen&group_1_route=oral&group_2_ap=ibuprofen&group_2_route=oral",
        expected: || {
            spec(vec![
                group(&[], vec![ap("acetaminophen", Some(Oral))], &[]),
                group(&[], vec![ap("ibuprofen", Some(Oral))], &[]),
            ])
        },
    },
    DeepLink {
        query: "group_1_ap=elagolix&group_2_ap=placebo",
        expected: || {
            spec(vec![group(&[], vec![ap("elagolix", None)], &[]), group(&[], vec![ap("placebo", None)], &[])])
        },
    },
    DeepLink {
        query: "group_1_indication=acute%20pain&group_1_ap=tapentadol&group_1_route=oral\
&group_2_indication=acute%20pain&group_2_ap=opioid&group_2_route=oral",
        expected: || {
            spec(vec![
                group(&["acute_pain"], vec![ap("tapentadol", Some(Oral))], &[]),
                group(&["acute_pain"], vec![ap("opioid", Some(Oral))], &["tapentadol"]),
            ])
        },
    },
    DeepLink {
        query: "group_1_ap=tramadol&group_1_route=oral&group_2_ap=opioid&group_2_route=oral",
        expected: || {
            spec(vec![
                group(&[], vec![ap("tramadol", Some(Oral))], &[]),
                group(&[], vec![ap("opioid", Some(Oral))], &["tramadol"]),
            ])
        },
    },
    DeepLink {
        query: "group_1_indication=peripheral%20neuropathic%20pain",
        expected: || spec(vec![group(&[PNP], vec![], &[])]),
    },
    DeepLink {
        query: "group_1_indication=peripheral%20neuropathic%20pain,&group_1_ap=pregabalin\
&group_2_indication=peripheral%20neuropathic%20pain,&group_2_ap=duloxetine\
&group_3_indication=peripheral%20neuropathic%20pain,&group_3_ap=tapentadol\
&group_4_indication=peripheral%20neuropathic%20pain,&group_4_ap=gabapentin",
        expected: || {
            spec(
                ["pregabalin", "duloxetine", "tapentadol", "gabapentin"]
                    .into_iter()
                    .map(|a| group(&[PNP], vec![ap(a, None)], &[]))
                    .collect(),
            )
        },
    },
    DeepLink {
        query: "group_1_indication=peripheral%20neuropathic%20pain&group_1_ap=pregabalin\
&group_2_indication=peripheral%20neuropathic%20pain&group_2_ap=gabapentin&tab=1",
        expected: || {
            spec(vec![
                group(&[PNP], vec![ap("pregabalin", None)], &[]),
                group(&[PNP], vec![ap("gabapentin", None)], &[]),
            ])
        },
    },
];

/// Deep links that fail to parse into their expected query.
pub fn deep_link_mismatches(taxonomy: &Taxonomy) -> Vec<String> {
    DEEP_LINKS
        .iter()
        .filter_map(|link| match parse_search_params(link.query, taxonomy) {
            Ok(p) if p.spec == (link.expected)() => None,
            Ok(p) => Some(format!("{}: parsed {:?}", link.query, p.spec)),
            Err(e) => Some(format!("{}: {e}", link.query)),
        })
        .collect()
}
