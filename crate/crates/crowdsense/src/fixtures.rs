//! Synthetic region shaped like a sparsely populated western state:
//! 220 zip codes in 98 cities across 17 counties, with two metro counties
//! holding most cities and residents.

use crowdsense_core::domain::{Location, Region};
use crowdsense_core::rng::rng_from;
use rand::Rng;

pub const SYNTHETIC_ZIPS: usize = 220;
pub const SYNTHETIC_CITIES: usize = 98;
pub const SYNTHETIC_COUNTIES: usize = 17;

const LAT_RANGE: (f64, f64) = (35.2, 41.8);
const LON_RANGE: (f64, f64) = (-119.8, -114.2);
const METRO_COUNTIES: [usize; 2] = [0, 1];

/// Deterministic synthetic region with unit location values.
pub fn synthetic_region(seed: u64) -> Region {
    let mut rng = rng_from(seed, &[0x6e76]);
    let counties: Vec<(f64, f64)> = (0..SYNTHETIC_COUNTIES)
        .map(|_| (rng.random_range(LAT_RANGE.0..LAT_RANGE.1), rng.random_range(LON_RANGE.0..LON_RANGE.1)))
        .collect();

    // every county gets one city, the rest go mostly to the metros
    let mut city_county: Vec<usize> = (0..SYNTHETIC_COUNTIES).collect();
    while city_county.len() < SYNTHETIC_CITIES {
        let c = if rng.random_bool(0.6) {
            METRO_COUNTIES[rng.random_range(0..METRO_COUNTIES.len())]
        } else {
            rng.random_range(0..SYNTHETIC_COUNTIES)
        };
        city_county.push(c);
    }
    let cities: Vec<(f64, f64)> = city_county
        .iter()
        .map(|&c| {
            let spread = if METRO_COUNTIES.contains(&c) { 0.25 } else { 0.45 };
            (counties[c].0 + rng.random_range(-spread..spread), counties[c].1 + rng.random_range(-spread..spread))
        })
        .collect();

    let mut zip_city: Vec<usize> = (0..SYNTHETIC_CITIES).collect();
    while zip_city.len() < SYNTHETIC_ZIPS {
        let k = rng.random_range(0..SYNTHETIC_CITIES);
        let metro = METRO_COUNTIES.contains(&city_county[k]);
        if metro || rng.random_bool(0.3) {
            zip_city.push(k);
        }
    }
    zip_city.sort_unstable();

    let locations = zip_city
        .iter()
        .enumerate()
        .map(|(z, &k)| {
            let metro = METRO_COUNTIES.contains(&city_county[k]);
            let base: f64 = if metro { 30_000.0 } else { 3_000.0 };
            let u: f64 = rng.random_range(0.05..1.0);
            Location {
                zip: format!("{}", 89001 + z),
                lat: round4(cities[k].0 + rng.random_range(-0.04..0.04)),
                lon: round4(cities[k].1 + rng.random_range(-0.04..0.04)),
                city: format!("City {:03}", k + 1),
                county: format!("County {:02}", city_county[k] + 1),
                population: (base * u * u).round().max(50.0),
            }
        })
        .collect();
    Region::with_unit_values(locations).expect("synthetic region is valid")
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}
