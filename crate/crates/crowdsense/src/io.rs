//! Region CSV and JSON configuration files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crowdsense_core::domain::{Location, Region};
use crowdsense_core::population::PopulationConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct RegionRow {
    zip: String,
    lat: f64,
    lon: f64,
    city: String,
    county: String,
    population: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

/// Parse a region from CSV with header `zip,lat,lon,city,county,population`
/// and an optional `weight` column (default 1.0). `path` only labels errors.
pub fn read_region<R: Read>(reader: R, path: &Path) -> Result<Region> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(path, 1, &e))?.clone();
    for required in ["zip", "lat", "lon", "city", "county", "population"] {
        if !headers.iter().any(|h| h == required) {
            return Err(HarnessError::Csv {
                path: path.into(),
                line: 1,
                message: format!("missing column {required}"),
            });
        }
    }
    let mut locations = Vec::new();
    let mut values = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for (k, row) in rdr.deserialize::<RegionRow>().enumerate() {
        let line = k as u64 + 2;
        let row = row.map_err(|e| csv_error(path, line, &e))?;
        if seen.insert(row.zip.clone(), line).is_some() {
            return Err(HarnessError::DuplicateZip { path: path.into(), zip: row.zip, line });
        }
        let weight = row.weight.unwrap_or(1.0);
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(HarnessError::Csv {
                path: path.into(),
                line,
                message: format!("weight {weight} must be a non-negative real"),
            });
        }
        if !(row.population >= 0.0 && row.population.is_finite()) {
            return Err(HarnessError::Csv {
                path: path.into(),
                line,
                message: format!("population {} must be a non-negative real", row.population),
            });
        }
        values.push(weight);
        locations.push(Location {
            zip: row.zip,
            lat: row.lat,
            lon: row.lon,
            city: row.city,
            county: row.county,
            population: row.population,
        });
    }
    Ok(Region::new(locations, values)?)
}

fn csv_error(path: &Path, line: u64, e: &csv::Error) -> HarnessError {
    let line = e.position().map_or(line, |p| p.line());
    HarnessError::Csv { path: path.into(), line, message: e.to_string() }
}

pub fn load_region(path: &Path) -> Result<Region> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_region(file, path)
}

/// Write a region as CSV, always including the `weight` column.
pub fn write_region<W: Write>(region: &Region, writer: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (l, &w) in region.locations().iter().zip(region.location_values()) {
        wtr.serialize(RegionRow {
            zip: l.zip.clone(),
            lat: l.lat,
            lon: l.lon,
            city: l.city.clone(),
            county: l.county.clone(),
            population: l.population,
            weight: Some(w),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.into(), source })
}

pub fn load_population_config(path: &Path) -> Result<PopulationConfig> {
    let cfg: PopulationConfig = load_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|source| HarnessError::Json { path: path.into(), source })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Region> {
        read_region(text.as_bytes(), Path::new("test.csv"))
    }

    #[test]
    fn weight_column_is_optional() {
        let r =
            parse("zip,lat,lon,city,county,population\n08901,40.5,-74.4,A,X,10\n89501,39.5,-119.8,B,Y,5\n").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.locations()[0].zip, "08901");
        assert_eq!(r.location_values(), &[1.0, 1.0]);
        let r = parse("zip,lat,lon,city,county,population,weight\n1,0,0,A,X,1,2.5\n").unwrap();
        assert_eq!(r.location_values(), &[2.5]);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse("zip,lat,lon,city,county,population\n1,0,0,A,X,1\n2,zero,0,A,X,1\n").unwrap_err();
        assert!(matches!(err, HarnessError::Csv { line: 3, .. }), "{err}");
        let err = parse("zip,lat,lon,city,county,population\n1,0,0,A,X,1\n1,0,0,A,X,1\n").unwrap_err();
        assert!(matches!(err, HarnessError::DuplicateZip { line: 3, ref zip, .. } if zip == "1"), "{err}");
        let err = parse("zip,lat,lon,city,population\n1,0,0,A,1\n").unwrap_err();
        assert!(err.to_string().contains("county"));
        assert!(parse("zip,lat,lon,city,county,population,weight\n1,0,0,A,X,1,-1\n").is_err());
    }

    #[test]
    fn round_trip_is_lossless() {
        let text = "zip,lat,lon,city,county,population,weight\n\
                    00501,40.81,-73.04,\"Holtsville, NY\",Suffolk,0.1,1.0\n\
                    89701,39.1638,-119.7674,Carson City,Carson City,55274.0,0.30000000000000004\n";
        let r = parse(text).unwrap();
        let mut out = Vec::new();
        write_region(&r, &mut out).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), text);
        assert_eq!(parse(std::str::from_utf8(&out).unwrap()).unwrap(), r);
    }
}
