use ade_acceptance::corpus::{self, Manifest, REGIMEN_CASES};
use ade_core::ingestion::ingest_files;

#[test]
fn regimen_table_has_thirty_passing_cases() {
    assert_eq!(REGIMEN_CASES.len(), 30);
    let failures = corpus::regimen_mismatches(&corpus::taxonomy());
    assert!(failures.is_empty(), "mismatches:\n{}", failures.join("\n"));
}

#[test]
fn fixture_counts_match_the_manifest() {
    let (ds, _) = ingest_files(&corpus::ingest_paths()).unwrap();
    assert_eq!(Manifest::load().mismatches(&ds.summary()), Vec::<String>::new());
}

#[test]
fn deep_links_parse_into_expected_queries() {
    let failures = corpus::deep_link_mismatches(&corpus::taxonomy());
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
