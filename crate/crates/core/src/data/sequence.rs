//! Assembly of fixed-length training sequences.
//!
//! The step for season `y` pairs the previous season's crop label (the known
//! history at prediction time) with the current season's RS features and
//! predicts the season-`y` crop. Missing history becomes the UNKNOWN token;
//! seasons without usable RS data carry a zero feature placeholder,
//! represented as `None` so downstream masking can tell it apart from real
//! all-zero data.

use std::collections::HashMap;
use std::sync::Arc;

use super::Dataset;
use crate::cropdist::DistributionVector;
use crate::error::{Error, Result};
use crate::features::SeasonFeatures;

/// Computed season features keyed by (parcel index, season year).
pub type FeatureStore = HashMap<(u32, i32), Arc<SeasonFeatures>>;

#[derive(Debug, Clone)]
pub struct SequenceStep {
    /// Fine crop code of the previous season, or the UNKNOWN token (= V).
    pub prev_crop: u32,
    /// `None` stands for the all-zero placeholder (no RS data that season).
    pub features: Option<Arc<SeasonFeatures>>,
    /// Fine label of this season where known; the final step always has one.
    pub label: Option<u32>,
}

impl SequenceStep {
    /// A pad step carries no information at all: unknown history and no RS.
    pub fn is_pad(&self, unknown_token: u32) -> bool {
        self.prev_crop == unknown_token && self.features.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct ParcelSequence {
    pub parcel_id: String,
    pub parcel_idx: u32,
    pub target_year: i32,
    /// Exactly `T` steps, oldest first; the last step is the target season.
    pub steps: Vec<SequenceStep>,
    /// Local crop distribution context (all zeros when unavailable).
    pub dist: DistributionVector,
}

impl ParcelSequence {
    pub fn target_label(&self) -> u32 {
        self.steps
            .last()
            .and_then(|s| s.label)
            .expect("final step always labeled")
    }

    pub fn target_features(&self) -> Option<&SeasonFeatures> {
        self.steps.last().and_then(|s| s.features.as_deref())
    }
}

/// Build one sequence per parcel labeled at `target_year`.
///
/// `dists` may be empty; parcels without an entry get an all-zero
/// distribution vector.
pub fn build_sequences(
    dataset: &Dataset,
    features: &FeatureStore,
    dists: &HashMap<u32, DistributionVector>,
    target_year: i32,
    t_steps: usize,
) -> Result<Vec<ParcelSequence>> {
    if t_steps == 0 {
        return Err(Error::Config("sequence length T must be >= 1".into()));
    }
    let unknown = dataset.taxonomy.unknown_token();
    let v = dataset.taxonomy.v() as usize;
    let mut out = Vec::new();
    for (idx, parcel) in dataset.parcels.iter().enumerate() {
        let idx = idx as u32;
        if dataset.label(idx, target_year).is_none() {
            continue;
        }
        let first_year = target_year - t_steps as i32 + 1;
        let steps: Vec<SequenceStep> = (first_year..=target_year)
            .map(|year| SequenceStep {
                prev_crop: dataset.label(idx, year - 1).unwrap_or(unknown),
                features: features.get(&(idx, year)).cloned(),
                label: dataset.label(idx, year),
            })
            .collect();
        debug_assert_eq!(steps.len(), t_steps);
        let dist = dists
            .get(&idx)
            .cloned()
            .unwrap_or_else(|| DistributionVector::zeros(v));
        out.push(ParcelSequence {
            parcel_id: parcel.parcel_id.clone(),
            parcel_idx: idx,
            target_year,
            steps,
            dist,
        });
    }
    if out.is_empty() {
        return Err(Error::Data(format!(
            "empty target set: no parcel labeled in season {target_year}"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset;
    use std::io::Write;
    use std::path::{Path, PathBuf};

    fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    /// Labels 2009-2020 for p1, target-year-only label for p2, none for p3.
    fn history_dataset(dir: &Path) -> Dataset {
        let parcels = write_file(
            dir,
            "parcels.csv",
            "parcel_id,centroid_x_m,centroid_y_m,area_ha\n\
             p1,0.0,0.0,1.0\np2,10.0,10.0,1.0\np3,20.0,20.0,1.0\n",
        );
        let mut crops = String::from("parcel_id,season_year,crop_code\n");
        for year in 2009..=2020 {
            crops.push_str(&format!("p1,{year},{}\n", year % 3));
        }
        crops.push_str("p2,2018,1\n");
        crops.push_str("p3,2009,0\n");
        let crops = write_file(dir, "crops.csv", &crops);
        let rs = write_file(dir, "rs.csv", "parcel_id,date,b4,b8a,lai,fapar\n");
        let taxonomy = write_file(
            dir,
            "taxonomy.csv",
            "crop_code,name,class28,class12,class10\n\
             0,a,0,0,0\n1,b,0,0,0\n2,c,1,1,-1\n",
        );
        load_dataset(&parcels, &crops, &rs, &taxonomy).unwrap()
    }

    fn fake_features(n: usize) -> Arc<SeasonFeatures> {
        Arc::new(SeasonFeatures::from_values(vec![n as f32; 700]).unwrap())
    }

    #[test]
    fn zero_padding_before_rs_horizon() {
        let dir = tempfile::tempdir().unwrap();
        let ds = history_dataset(dir.path());
        let p1 = ds.parcel_idx("p1").unwrap();
        let mut features = FeatureStore::new();
        for year in 2016..=2020 {
            features.insert((p1, year), fake_features(year as usize));
        }
        let seqs = build_sequences(&ds, &features, &HashMap::new(), 2018, 10).unwrap();
        let seq = seqs.iter().find(|s| s.parcel_id == "p1").unwrap();
        assert_eq!(seq.steps.len(), 10);
        // seasons 2009..=2015 have no RS -> placeholder
        for (i, step) in seq.steps.iter().enumerate() {
            let year = 2009 + i as i32;
            if year < 2016 {
                assert!(step.features.is_none(), "season {year} should be padded");
            } else {
                assert!(step.features.is_some(), "season {year} should have RS");
            }
        }
        assert_eq!(seq.target_label(), (2018 % 3) as u32);
    }

    #[test]
    fn degenerate_history_gets_unknown_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let ds = history_dataset(dir.path());
        let seqs =
            build_sequences(&ds, &FeatureStore::new(), &HashMap::new(), 2018, 10).unwrap();
        let seq = seqs.iter().find(|s| s.parcel_id == "p2").unwrap();
        let unknown = ds.taxonomy.unknown_token();
        assert_eq!(seq.steps.len(), 10);
        // p2 only has the 2018 label; prev-crop is unknown everywhere
        // (including the final step: label(2017) is absent)
        assert!(seq.steps.iter().all(|s| s.prev_crop == unknown));
        assert_eq!(seq.steps[9].label, Some(1));
        assert_eq!(
            seq.steps.iter().filter(|s| s.label.is_none()).count(),
            9
        );
    }

    #[test]
    fn filters_to_labeled_parcels() {
        let dir = tempfile::tempdir().unwrap();
        let ds = history_dataset(dir.path());
        let seqs =
            build_sequences(&ds, &FeatureStore::new(), &HashMap::new(), 2018, 10).unwrap();
        assert_eq!(seqs.len(), 2); // p1 and p2; p3 unlabeled in 2018
    }

    #[test]
    fn empty_target_set_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ds = history_dataset(dir.path());
        let err = build_sequences(&ds, &FeatureStore::new(), &HashMap::new(), 1990, 10)
            .unwrap_err();
        assert!(err.to_string().contains("empty target set"), "{err}");
    }

    #[test]
    fn pad_step_detection() {
        let step = SequenceStep {
            prev_crop: 3,
            features: None,
            label: None,
        };
        assert!(step.is_pad(3));
        assert!(!step.is_pad(4));
    }
}
