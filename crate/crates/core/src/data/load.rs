//! CSV ingestion.
//!
//! All four input files are plain comma-separated text with a fixed header
//! and no quoting. Parse errors carry file, line and column so bad rows can
//! be located directly.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;

use super::{season_day, season_of, Dataset, LabelTaxonomy, ParcelRecord};
use crate::error::{Error, Result};
use crate::prep::{RawSeries, Signal};

const PARCELS_HEADER: &str = "parcel_id,centroid_x_m,centroid_y_m,area_ha";
const CROPS_HEADER: &str = "parcel_id,season_year,crop_code";
const RS_HEADER: &str = "parcel_id,date,b4,b8a,lai,fapar";
const TAXONOMY_HEADER: &str = "crop_code,name,class28,class12,class10";

struct FileReader {
    name: String,
    lines: Vec<String>,
}

impl FileReader {
    fn open(path: &Path, header: &str) -> Result<FileReader> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let lines: Vec<String> = text.lines().map(|l| l.trim_end().to_string()).collect();
        match lines.first() {
            Some(h) if h == header => {}
            Some(h) => {
                return Err(Error::parse(
                    &name,
                    1,
                    "header",
                    format!("expected '{header}', found '{h}'"),
                ))
            }
            None => return Err(Error::parse(&name, 1, "header", "empty file")),
        }
        Ok(FileReader { name, lines })
    }

    /// Data rows as (1-based line number, fields), skipping blank lines.
    fn rows(&self, n_cols: usize) -> Result<Vec<(u64, Vec<&str>)>> {
        let mut out = Vec::with_capacity(self.lines.len().saturating_sub(1));
        for (i, line) in self.lines.iter().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n_cols {
                return Err(Error::parse(
                    &self.name,
                    (i + 1) as u64,
                    "row",
                    format!("expected {n_cols} fields, found {}", fields.len()),
                ));
            }
            out.push(((i + 1) as u64, fields));
        }
        Ok(out)
    }
}

fn parse_f64(file: &str, line: u64, column: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::parse(file, line, column, format!("invalid number '{s}'")))
}

fn parse_opt_f64(file: &str, line: u64, column: &str, s: &str) -> Result<f64> {
    if s.is_empty() {
        Ok(f64::NAN)
    } else {
        parse_f64(file, line, column, s)
    }
}

fn parse_i64(file: &str, line: u64, column: &str, s: &str) -> Result<i64> {
    s.parse::<i64>()
        .map_err(|_| Error::parse(file, line, column, format!("invalid integer '{s}'")))
}

fn load_parcels(path: &Path) -> Result<(Vec<ParcelRecord>, HashMap<String, u32>)> {
    let reader = FileReader::open(path, PARCELS_HEADER)?;
    let mut parcels = Vec::new();
    let mut index = HashMap::new();
    for (line, f) in reader.rows(4)? {
        let id = f[0].to_string();
        let x = parse_f64(&reader.name, line, "centroid_x_m", f[1])?;
        let y = parse_f64(&reader.name, line, "centroid_y_m", f[2])?;
        let area = parse_f64(&reader.name, line, "area_ha", f[3])?;
        if id.is_empty() {
            return Err(Error::parse(&reader.name, line, "parcel_id", "empty id"));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::parse(
                &reader.name,
                line,
                "centroid",
                "coordinates must be finite",
            ));
        }
        if !(area > 0.0) {
            return Err(Error::parse(
                &reader.name,
                line,
                "area_ha",
                format!("area must be > 0, got {area}"),
            ));
        }
        if index.insert(id.clone(), parcels.len() as u32).is_some() {
            return Err(Error::parse(
                &reader.name,
                line,
                "parcel_id",
                format!("duplicate parcel id '{id}'"),
            ));
        }
        parcels.push(ParcelRecord {
            parcel_id: id,
            centroid_x_m: x,
            centroid_y_m: y,
            area_ha: area,
        });
    }
    Ok((parcels, index))
}

fn load_taxonomy(path: &Path) -> Result<LabelTaxonomy> {
    let reader = FileReader::open(path, TAXONOMY_HEADER)?;
    let rows = reader.rows(5)?;
    let v = rows.len();
    let mut names = vec![String::new(); v];
    let mut map28 = vec![0u32; v];
    let mut map12 = vec![0u32; v];
    let mut map10 = vec![None; v];
    let mut seen = vec![false; v];
    for (line, f) in rows {
        let code = parse_i64(&reader.name, line, "crop_code", f[0])?;
        if code < 0 || code as usize >= v {
            return Err(Error::parse(
                &reader.name,
                line,
                "crop_code",
                format!("crop code {code} out of range (V = {v})"),
            ));
        }
        let code = code as usize;
        if seen[code] {
            return Err(Error::parse(
                &reader.name,
                line,
                "crop_code",
                format!("duplicate crop code {code}"),
            ));
        }
        seen[code] = true;
        names[code] = f[1].to_string();
        map28[code] = parse_i64(&reader.name, line, "class28", f[2])? as u32;
        map12[code] = parse_i64(&reader.name, line, "class12", f[3])? as u32;
        let c10 = parse_i64(&reader.name, line, "class10", f[4])?;
        map10[code] = if c10 < 0 { None } else { Some(c10 as u32) };
    }
    LabelTaxonomy::new(names, map28, map12, map10)
}

fn load_crops(
    path: &Path,
    index: &HashMap<String, u32>,
    v: u32,
) -> Result<HashMap<(u32, i32), u32>> {
    let reader = FileReader::open(path, CROPS_HEADER)?;
    let mut crops = HashMap::new();
    for (line, f) in reader.rows(3)? {
        let parcel = *index.get(f[0]).ok_or_else(|| {
            Error::parse(
                &reader.name,
                line,
                "parcel_id",
                format!("unknown parcel id '{}'", f[0]),
            )
        })?;
        let year = parse_i64(&reader.name, line, "season_year", f[1])? as i32;
        let code = parse_i64(&reader.name, line, "crop_code", f[2])?;
        if code < 0 || code >= v as i64 {
            return Err(Error::parse(
                &reader.name,
                line,
                "crop_code",
                format!("crop code {code} out of range (V = {v})"),
            ));
        }
        if crops.insert((parcel, year), code as u32).is_some() {
            return Err(Error::parse(
                &reader.name,
                line,
                "parcel_id",
                format!("duplicate crop record for parcel '{}' season {year}", f[0]),
            ));
        }
    }
    Ok(crops)
}

fn load_rs(path: &Path, index: &HashMap<String, u32>) -> Result<HashMap<(u32, i32), RawSeries>> {
    let reader = FileReader::open(path, RS_HEADER)?;
    // (parcel, season) -> sorted-on-demand sample list
    let mut samples: HashMap<(u32, i32), Vec<(u16, [f64; 4])>> = HashMap::new();
    for (line, f) in reader.rows(6)? {
        let parcel = *index.get(f[0]).ok_or_else(|| {
            Error::parse(
                &reader.name,
                line,
                "parcel_id",
                format!("unknown parcel id '{}'", f[0]),
            )
        })?;
        let date = NaiveDate::parse_from_str(f[1], "%Y-%m-%d").map_err(|_| {
            Error::parse(
                &reader.name,
                line,
                "date",
                format!("invalid date '{}'", f[1]),
            )
        })?;
        let b4 = parse_opt_f64(&reader.name, line, "b4", f[2])?;
        let b8a = parse_opt_f64(&reader.name, line, "b8a", f[3])?;
        let lai = parse_opt_f64(&reader.name, line, "lai", f[4])?;
        let fapar = parse_opt_f64(&reader.name, line, "fapar", f[5])?;
        for (name, value, lo, hi) in [
            ("b4", b4, 0.0, 1.2),
            ("b8a", b8a, 0.0, 1.2),
            ("lai", lai, 0.0, f64::INFINITY),
            ("fapar", fapar, 0.0, 1.0),
        ] {
            if !value.is_nan() && !(value >= lo && value <= hi) {
                return Err(Error::parse(
                    &reader.name,
                    line,
                    name,
                    format!("value {value} outside [{lo}, {hi}]"),
                ));
            }
        }
        if b4.is_nan() && b8a.is_nan() && lai.is_nan() && fapar.is_nan() {
            continue; // row carries no information
        }
        let key = (parcel, season_of(date));
        samples
            .entry(key)
            .or_default()
            .push((season_day(date), [b4, b8a, lai, fapar]));
    }

    let mut series = HashMap::with_capacity(samples.len());
    for ((parcel, season), mut rows) in samples {
        rows.sort_unstable_by_key(|&(day, _)| day);
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::Data(format!(
                    "duplicate RS sample for parcel index {parcel}, season {season}, \
                     season day {}",
                    pair[0].0
                )));
            }
        }
        let days: Vec<u16> = rows.iter().map(|&(d, _)| d).collect();
        let mut values: [Vec<f64>; 4] = Default::default();
        for sig in Signal::ALL {
            values[sig as usize] = rows.iter().map(|&(_, v)| v[sig as usize]).collect();
        }
        series.insert((parcel, season), RawSeries::new(days, values)?);
    }
    Ok(series)
}

/// Load and cross-validate the four input files.
pub fn load_dataset(
    parcels_path: &Path,
    crops_path: &Path,
    rs_path: &Path,
    taxonomy_path: &Path,
) -> Result<Dataset> {
    let (parcels, parcel_index) = load_parcels(parcels_path)?;
    let taxonomy = load_taxonomy(taxonomy_path)?;
    let crops = load_crops(crops_path, &parcel_index, taxonomy.v())?;
    let raw_series = load_rs(rs_path, &parcel_index)?;
    Ok(Dataset {
        parcels,
        taxonomy,
        parcel_index,
        crops,
        raw_series,
    })
}
