use std::path::{Path, PathBuf};

use ade_core::ingestion::{
    export_curation_csv, ingest_files, load_curation_csv, read_dataset, write_dataset, IngestPaths,
};
use ade_core::taxonomy::load_taxonomy;
use ade_core::DatasetSummary;
use serde::Deserialize;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/pain")
}

fn paths() -> IngestPaths {
    let dir = fixture_dir();
    IngestPaths {
        xml_dir: dir.join("xml"),
        curation: dir.join("curation.csv"),
        taxonomy: dir.join("taxonomy.txt"),
        terms: dir.join("terms.txt"),
        soc_map: Some(dir.join("soc_categories.txt")),
    }
}

#[derive(Debug, Deserialize)]
struct Manifest {
    trials: usize,
    groups: usize,
    patients: u64,
    titration_patients: u64,
    observations: usize,
    distinct_terms: usize,
    mapped_terms: usize,
}

fn manifest() -> Manifest {
    let text = std::fs::read_to_string(fixture_dir().join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn assert_matches_manifest(s: &DatasetSummary) {
    let m = manifest();
    assert_eq!(s.trials, m.trials);
    assert_eq!(s.groups, m.groups);
    assert_eq!(s.patients, m.patients);
    assert_eq!(s.titration_patients, m.titration_patients);
    assert_eq!(s.observations, m.observations);
    assert_eq!(s.distinct_terms, m.distinct_terms);
    assert_eq!(s.mapped_terms, m.mapped_terms);
}

#[test]
fn fixture_ingest_matches_manifest() {
    let (ds, warnings) = ingest_files(&paths()).unwrap();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    assert_matches_manifest(&ds.summary());
}

#[test]
fn stored_dataset_round_trips_to_the_same_counts() {
    let (ds, _) = ingest_files(&paths()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert_matches_manifest(&back.summary());
}

#[test]
fn committed_dataset_is_a_fresh_ingest() {
    let committed = fixture_dir().join("dataset");
    let (ds, _) = ingest_files(&paths()).unwrap();
    assert_eq!(read_dataset(&committed).unwrap(), ds);
}

#[test]
fn curation_export_reloads_identically() {
    let dir = fixture_dir();
    let taxonomy = load_taxonomy(&std::fs::read_to_string(dir.join("taxonomy.txt")).unwrap()).unwrap();
    let curation = load_curation_csv(&std::fs::read_to_string(dir.join("curation.csv")).unwrap(), &taxonomy).unwrap();
    let again = load_curation_csv(&export_curation_csv(&curation), &taxonomy).unwrap();
    assert_eq!(again, curation);
}
