//! Parcel, crop-record and label-taxonomy model.
//!
//! A *season* N runs from October 1 of year N-1 through September 30 of
//! year N. Crop labels are fine-grained integer codes in `[0, V)`; the
//! taxonomy maps them onto three coarser evaluation levels, the coarsest of
//! which excludes a set of groups entirely.

mod load;
mod sequence;

pub use load::load_dataset;
pub use sequence::{build_sequences, FeatureStore, ParcelSequence, SequenceStep};

use std::collections::HashMap;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::prep::RawSeries;

/// One field parcel: the unit of classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ParcelRecord {
    pub parcel_id: String,
    /// Projected centroid coordinates in meters.
    pub centroid_x_m: f64,
    pub centroid_y_m: f64,
    pub area_ha: f64,
}

/// Label granularity used for training targets and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fine,
    C28,
    C12,
    C10,
}

impl Level {
    pub fn parse(s: &str) -> Result<Level> {
        match s {
            "fine" => Ok(Level::Fine),
            "c28" => Ok(Level::C28),
            "c12" => Ok(Level::C12),
            "c10" => Ok(Level::C10),
            other => Err(Error::Config(format!("unknown label level '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Level::Fine => "fine",
            Level::C28 => "c28",
            Level::C12 => "c12",
            Level::C10 => "c10",
        }
    }
}

/// Result of aggregating a fine crop code to a coarser level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregated {
    Class(u32),
    /// The code belongs to a group dropped at the 10-class level.
    Excluded,
}

/// Fine-to-coarse label maps. The excluded groups of the coarsest level are
/// data-driven (taxonomy file), not hardcoded.
#[derive(Debug, Clone)]
pub struct LabelTaxonomy {
    names: Vec<String>,
    map28: Vec<u32>,
    map12: Vec<u32>,
    /// `None` marks codes excluded from the 10-class evaluation.
    map10: Vec<Option<u32>>,
    n28: u32,
    n12: u32,
    n10: u32,
}

impl LabelTaxonomy {
    /// Build and validate a taxonomy from per-code rows.
    /// `class10 = None` marks excluded codes.
    pub fn new(
        names: Vec<String>,
        map28: Vec<u32>,
        map12: Vec<u32>,
        map10: Vec<Option<u32>>,
    ) -> Result<LabelTaxonomy> {
        let v = names.len();
        if v == 0 {
            return Err(Error::Data("taxonomy has no crop codes".into()));
        }
        if map28.len() != v || map12.len() != v || map10.len() != v {
            return Err(Error::Data("taxonomy column lengths disagree".into()));
        }
        let n28 = dense_class_count("class28", &map28)?;
        let n12 = dense_class_count("class12", &map12)?;
        let n10 = dense_class_count(
            "class10",
            &map10.iter().copied().flatten().collect::<Vec<_>>(),
        )?;

        // map12 must factor through map28
        let mut c28_to_c12: HashMap<u32, u32> = HashMap::new();
        for code in 0..v {
            match c28_to_c12.entry(map28[code]) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(map12[code]);
                }
                std::collections::hash_map::Entry::Occupied(e) => {
                    if *e.get() != map12[code] {
                        return Err(Error::Data(format!(
                            "taxonomy inconsistent: class28 group {} maps to both \
                             class12 {} and {}",
                            map28[code],
                            e.get(),
                            map12[code]
                        )));
                    }
                }
            }
        }
        // exclusion and 10-class ids must be constant per class12 group
        let mut c12_to_c10: HashMap<u32, Option<u32>> = HashMap::new();
        for code in 0..v {
            match c12_to_c10.entry(map12[code]) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(map10[code]);
                }
                std::collections::hash_map::Entry::Occupied(e) => {
                    if *e.get() != map10[code] {
                        return Err(Error::Data(format!(
                            "taxonomy inconsistent: class12 group {} is only partially \
                             excluded at the 10-class level",
                            map12[code]
                        )));
                    }
                }
            }
        }
        Ok(LabelTaxonomy {
            names,
            map28,
            map12,
            map10,
            n28,
            n12,
            n10,
        })
    }

    /// Number of fine crop codes V.
    pub fn v(&self) -> u32 {
        self.names.len() as u32
    }

    /// Embedding index reserved for "history unknown".
    pub fn unknown_token(&self) -> u32 {
        self.v()
    }

    pub fn name(&self, code: u32) -> &str {
        &self.names[code as usize]
    }

    /// Class count at a level (10-class counts retained groups only).
    pub fn class_count(&self, level: Level) -> u32 {
        match level {
            Level::Fine => self.v(),
            Level::C28 => self.n28,
            Level::C12 => self.n12,
            Level::C10 => self.n10,
        }
    }

    /// Map a fine code to a coarser level.
    pub fn aggregate_label(&self, crop_code: u32, level: Level) -> Result<Aggregated> {
        if crop_code >= self.v() {
            return Err(Error::Data(format!(
                "crop code {} out of range (V = {})",
                crop_code,
                self.v()
            )));
        }
        let i = crop_code as usize;
        Ok(match level {
            Level::Fine => Aggregated::Class(crop_code),
            Level::C28 => Aggregated::Class(self.map28[i]),
            Level::C12 => Aggregated::Class(self.map12[i]),
            Level::C10 => match self.map10[i] {
                Some(c) => Aggregated::Class(c),
                None => Aggregated::Excluded,
            },
        })
    }

    /// Whether a class12 group is excluded at the 10-class level.
    pub fn c12_group_excluded(&self, c12: u32) -> bool {
        self.map12
            .iter()
            .position(|&g| g == c12)
            .map(|code| self.map10[code].is_none())
            .unwrap_or(false)
    }
}

fn dense_class_count(column: &str, ids: &[u32]) -> Result<u32> {
    let mut seen: Vec<bool> = Vec::new();
    for &id in ids {
        let i = id as usize;
        if i >= seen.len() {
            seen.resize(i + 1, false);
        }
        seen[i] = true;
    }
    if seen.iter().all(|&s| s) {
        Ok(seen.len() as u32)
    } else {
        Err(Error::Data(format!(
            "taxonomy column {column} must use dense class ids 0..n"
        )))
    }
}

/// Season year containing `date`: N for dates in [Oct 1 of N-1, Sep 30 of N].
pub fn season_of(date: NaiveDate) -> i32 {
    if date.month() >= 10 {
        date.year() + 1
    } else {
        date.year()
    }
}

/// First day (October 1) of season `year`.
pub fn season_start(year: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year - 1, 10, 1).expect("valid date")
}

/// Day offset of `date` within its season (0-based; up to 365 in seasons
/// containing a leap day).
pub fn season_day(date: NaiveDate) -> u16 {
    let season = season_of(date);
    (date - season_start(season)).num_days() as u16
}

/// Indexed, immutable view of the loaded input files.
#[derive(Debug)]
pub struct Dataset {
    pub parcels: Vec<ParcelRecord>,
    pub taxonomy: LabelTaxonomy,
    parcel_index: HashMap<String, u32>,
    /// (parcel index, season year) -> fine crop code.
    crops: HashMap<(u32, i32), u32>,
    /// (parcel index, season year) -> raw signal samples of that season.
    raw_series: HashMap<(u32, i32), RawSeries>,
}

impl Dataset {
    pub fn parcel_count(&self) -> usize {
        self.parcels.len()
    }

    pub fn parcel_idx(&self, parcel_id: &str) -> Option<u32> {
        self.parcel_index.get(parcel_id).copied()
    }

    pub fn label(&self, parcel: u32, season_year: i32) -> Option<u32> {
        self.crops.get(&(parcel, season_year)).copied()
    }

    pub fn raw_series(&self, parcel: u32, season_year: i32) -> Option<&RawSeries> {
        self.raw_series.get(&(parcel, season_year))
    }

    /// Seasons with any RS samples, in deterministic order.
    pub fn rs_keys(&self) -> Vec<(u32, i32)> {
        let mut keys: Vec<_> = self.raw_series.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    /// Season years with at least one crop record.
    pub fn label_years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.crops.keys().map(|&(_, y)| y).collect();
        years.sort_unstable();
        years.dedup();
        years
    }

    /// Fine labels of every parcel for one season: `parcel idx -> code`.
    pub fn labels_of_year(&self, season_year: i32) -> HashMap<u32, u32> {
        self.crops
            .iter()
            .filter(|&(&(_, y), _)| y == season_year)
            .map(|(&(p, _), &c)| (p, c))
            .collect()
    }
}
