use std::path::PathBuf;

use crowdsense::fixtures::{synthetic_region, SYNTHETIC_CITIES, SYNTHETIC_COUNTIES, SYNTHETIC_ZIPS};
use crowdsense::io::{load_region, write_region};

const FIXTURE_SEED: u64 = 1;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Set `CROWDSENSE_REGENERATE=1` to rewrite the committed CSV.
#[test]
fn committed_region_matches_generator() {
    let path = data_dir().join("synthetic_region.csv");
    let region = synthetic_region(FIXTURE_SEED);
    if std::env::var_os("CROWDSENSE_REGENERATE").is_some() {
        write_region(&region, std::fs::File::create(&path).unwrap()).unwrap();
    }
    let loaded = load_region(&path).unwrap();
    assert_eq!(loaded, region);
    assert_eq!(loaded.len(), SYNTHETIC_ZIPS);
    assert_eq!(loaded.city_count(), SYNTHETIC_CITIES);
    assert_eq!(loaded.county_count(), SYNTHETIC_COUNTIES);
}
