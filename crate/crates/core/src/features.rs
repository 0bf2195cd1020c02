//! Windowed-functional features over a smoothed season.
//!
//! 25 sliding windows of 30 days at a 15-day step (the trailing windows are
//! clipped at the season end), 7 statistics per signal per window, 4 signals:
//! 25 x 28 = 700 values per parcel-season.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::prep::{Signal, SmoothSeries, GRID_LEN, GRID_STEP, SEASON_DAYS};

pub const N_WINDOWS: usize = 25;
pub const WINDOW_LEN_DAYS: u16 = 30;
pub const WINDOW_STEP_DAYS: u16 = 15;
/// Functionals per signal: mean, std, q1, median, q3, min, max.
pub const N_FUNCTIONALS: usize = 7;
pub const WINDOW_FEATS: usize = N_FUNCTIONALS * 4;
pub const FEATURES_PER_SEASON: usize = N_WINDOWS * WINDOW_FEATS;

/// First cutoff day of the in-season schedule (mid-March).
pub const EARLIEST_CUTOFF_DAY: u16 = 165;

/// One season's feature matrix, row-major over windows.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonFeatures {
    values: Vec<f32>,
}

impl SeasonFeatures {
    pub fn from_values(values: Vec<f32>) -> Result<SeasonFeatures> {
        if values.len() != FEATURES_PER_SEASON {
            return Err(Error::Data(format!(
                "season features must have {FEATURES_PER_SEASON} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("season features contain non-finite values".into()));
        }
        Ok(SeasonFeatures { values })
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, window: usize, feat: usize) -> f32 {
        self.values[window * WINDOW_FEATS + feat]
    }

    fn window_mut(&mut self, window: usize) -> &mut [f32] {
        &mut self.values[window * WINDOW_FEATS..(window + 1) * WINDOW_FEATS]
    }
}

/// Day span of window `i`: [15 i, 15 i + 30) clipped to the season.
pub fn window_days(i: usize) -> Range<u16> {
    let start = i as u16 * WINDOW_STEP_DAYS;
    start..(start + WINDOW_LEN_DAYS).min(SEASON_DAYS)
}

/// Grid index ranges of the 25 windows on the 2-day grid.
pub fn window_slices() -> [Range<usize>; 25] {
    std::array::from_fn(|i| {
        let days = window_days(i);
        let start = days.start.div_ceil(GRID_STEP) as usize;
        let end = ((days.end - 1) / GRID_STEP) as usize + 1;
        start..end.min(GRID_LEN)
    })
}

/// Mean, population std, quartiles (linear interpolation at q*(n-1)),
/// min and max of a non-empty window.
pub fn functionals(values: &[f64]) -> [f64; N_FUNCTIONALS] {
    assert!(!values.is_empty(), "empty window");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();

    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let quantile = |q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        if frac == 0.0 {
            sorted[lo]
        } else {
            sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
        }
    };
    [
        mean,
        std,
        quantile(0.25),
        quantile(0.5),
        quantile(0.75),
        sorted[0],
        sorted[sorted.len() - 1],
    ]
}

/// Apply the functionals to every window of every signal.
///
/// Feature order within a window: signal-major (B4, B8A, LAI, FAPAR), each
/// contributing [mean, std, q1, median, q3, min, max].
pub fn season_features(smooth: &SmoothSeries) -> SeasonFeatures {
    let slices = window_slices();
    let mut values = Vec::with_capacity(FEATURES_PER_SEASON);
    for slice in &slices {
        for sig in Signal::ALL {
            let window = &smooth.signal(sig)[slice.clone()];
            values.extend(functionals(window).iter().map(|&v| v as f32));
        }
    }
    SeasonFeatures { values }
}

/// Zero every window whose start day is at or past `cutoff_day`. Windows
/// straddling the cutoff keep their full-data statistics.
pub fn truncate_at(features: &SeasonFeatures, cutoff_day: u16) -> SeasonFeatures {
    let mut out = features.clone();
    for w in 0..N_WINDOWS {
        if window_days(w).start >= cutoff_day {
            out.window_mut(w).fill(0.0);
        }
    }
    out
}

/// The in-season cutoff schedule: mid-March to season end at 15-day
/// granularity, always including the season end itself.
pub fn augment_cutoffs() -> Vec<u16> {
    let mut days: Vec<u16> = (EARLIEST_CUTOFF_DAY..=SEASON_DAYS)
        .step_by(WINDOW_STEP_DAYS as usize)
        .collect();
    if *days.last().unwrap() != SEASON_DAYS {
        days.push(SEASON_DAYS);
    }
    days
}

/// Draw a truncation day uniformly from the cutoff schedule.
pub fn draw_augment_cutoff(rng: &mut impl Rng) -> u16 {
    let days = augment_cutoffs();
    days[rng.random_range(0..days.len())]
}

/// Randomly crop the end of the season, simulating in-season prediction.
pub fn augment_crop(features: &SeasonFeatures, rng: &mut impl Rng) -> SeasonFeatures {
    truncate_at(features, draw_augment_cutoff(rng))
}
