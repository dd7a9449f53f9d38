//! The JSON cases under `cases/` must match the in-crate fixtures.
//! `DSO_BLESS=1 cargo test --test bundled_cases` rewrites them.

use std::path::PathBuf;

use dso_core::case::CaseFile;
use dso_core::fixtures;

fn cases_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases")
}

fn check(file: &str, case: CaseFile<f64>) {
    let path = cases_dir().join(file);
    if std::env::var_os("DSO_BLESS").is_some() {
        std::fs::write(&path, case.to_json() + "\n").unwrap();
    }
    let loaded = CaseFile::load(&path).unwrap();
    assert_eq!(loaded, case, "{file} is stale; rerun with DSO_BLESS=1");
    assert_eq!(loaded.fixture_hash(), case.fixture_hash());
}

#[test]
fn two_bus_file_matches_fixture() {
    check("two_bus.json", fixtures::two_bus());
}

#[test]
fn feeder95_file_matches_fixture() {
    check("feeder95.json", fixtures::feeder95());
}
