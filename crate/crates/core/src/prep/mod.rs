//! Signal conditioning: Hampel outlier screening, 2-day resampling and
//! Whittaker smoothing with per-signal V-curve lambda selection.
//!
//! Missing samples are represented as NaN throughout this module.

mod banded;
mod whittaker;

pub use banded::PentaBands;
pub use whittaker::{
    default_lambda_grid, system_residual, vcurve_lambda, vcurve_lambda_with_grid,
    whittaker_smooth,
};

use crate::error::{Error, Result};

/// Days covered by one season grid (offsets 0..365).
pub const SEASON_DAYS: u16 = 365;
/// Grid spacing in days.
pub const GRID_STEP: u16 = 2;
/// Points on the 2-day grid: days 0, 2, ..., 364.
pub const GRID_LEN: usize = 183;

/// Hampel window half-width in days.
pub const HAMPEL_HALF_WINDOW_DAYS: u16 = 10;
/// Hampel deviation threshold in scaled-MAD units.
pub const HAMPEL_K: f64 = 3.0;

const MAD_SCALE: f64 = 1.4826;

/// The four per-parcel signals, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Signal {
    B4 = 0,
    B8a = 1,
    Lai = 2,
    Fapar = 3,
}

impl Signal {
    pub const ALL: [Signal; 4] = [Signal::B4, Signal::B8a, Signal::Lai, Signal::Fapar];

    pub fn name(&self) -> &'static str {
        match self {
            Signal::B4 => "b4",
            Signal::B8a => "b8a",
            Signal::Lai => "lai",
            Signal::Fapar => "fapar",
        }
    }
}

/// Irregular raw samples of one parcel-season.
#[derive(Debug, Clone)]
pub struct RawSeries {
    /// Day offsets within the season, strictly ascending.
    pub days: Vec<u16>,
    /// One value vector per [`Signal`]; NaN marks missing.
    pub values: [Vec<f64>; 4],
}

impl RawSeries {
    pub fn new(days: Vec<u16>, values: [Vec<f64>; 4]) -> Result<RawSeries> {
        for v in &values {
            if v.len() != days.len() {
                return Err(Error::Data(
                    "raw series signal length does not match dates".into(),
                ));
            }
        }
        if days.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Data("raw series dates must be strictly ascending".into()));
        }
        for (sig, (lo, hi)) in [
            (Signal::B4, (0.0, 1.2)),
            (Signal::B8a, (0.0, 1.2)),
            (Signal::Lai, (0.0, f64::INFINITY)),
            (Signal::Fapar, (0.0, 1.0)),
        ] {
            for &v in &values[sig as usize] {
                if !v.is_nan() && !(v >= lo && v <= hi) {
                    return Err(Error::Data(format!(
                        "{} value {v} outside [{lo}, {hi}]",
                        sig.name()
                    )));
                }
            }
        }
        Ok(RawSeries { days, values })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn signal(&self, sig: Signal) -> &[f64] {
        &self.values[sig as usize]
    }
}

/// Smoothed 2-day series of one parcel-season: 4 x 183 values, no gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothSeries {
    values: [Vec<f64>; 4],
}

impl SmoothSeries {
    pub fn new(values: [Vec<f64>; 4]) -> Result<SmoothSeries> {
        for v in &values {
            if v.len() != GRID_LEN {
                return Err(Error::Data(format!(
                    "smooth series must have {GRID_LEN} grid points, got {}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data("smooth series contains non-finite values".into()));
            }
        }
        Ok(SmoothSeries { values })
    }

    pub fn signal(&self, sig: Signal) -> &[f64] {
        &self.values[sig as usize]
    }

    /// Day offset of grid point `i`.
    pub fn grid_day(i: usize) -> u16 {
        (i as u16) * GRID_STEP
    }
}

fn median_of(buf: &mut Vec<f64>) -> f64 {
    let n = buf.len();
    debug_assert!(n > 0);
    buf.sort_unstable_by(|a, b| a.total_cmp(b));
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

/// Sliding median/MAD outlier detection.
///
/// For each non-missing sample, the window covers all non-missing samples
/// within `half_window_days` (the sample itself included). The sample is
/// flagged when its deviation from the window median exceeds
/// `k * 1.4826 * MAD`; a zero MAD degenerates to flagging any nonzero
/// deviation from the (constant) window median.
pub fn hampel_filter(
    values: &[f64],
    days: &[u16],
    half_window_days: u16,
    k: f64,
) -> Result<Vec<bool>> {
    assert_eq!(values.len(), days.len());
    if values.iter().all(|v| v.is_nan()) {
        return Err(Error::Data("empty series: all samples missing".into()));
    }
    let n = values.len();
    let mut flags = vec![false; n];
    let mut window = Vec::new();
    let mut deviations = Vec::new();
    for i in 0..n {
        if values[i].is_nan() {
            continue;
        }
        window.clear();
        let day = days[i] as i32;
        for j in 0..n {
            let dist = (days[j] as i32 - day).abs();
            if dist <= half_window_days as i32 && !values[j].is_nan() {
                window.push(values[j]);
            }
        }
        let m = median_of(&mut window);
        deviations.clear();
        deviations.extend(window.iter().map(|v| (v - m).abs()));
        let mad = median_of(&mut deviations);
        let dev = (values[i] - m).abs();
        flags[i] = if mad > 0.0 {
            dev > k * MAD_SCALE * mad
        } else {
            dev > 0.0
        };
    }
    Ok(flags)
}

/// Remove dates flagged in either mask from all four signals.
pub fn apply_outlier_mask(raw: &RawSeries, mask_b4: &[bool], mask_b8a: &[bool]) -> RawSeries {
    assert_eq!(mask_b4.len(), raw.len());
    assert_eq!(mask_b8a.len(), raw.len());
    let mut out = raw.clone();
    for i in 0..raw.len() {
        if mask_b4[i] || mask_b8a[i] {
            for sig in Signal::ALL {
                out.values[sig as usize][i] = f64::NAN;
            }
        }
    }
    out
}

/// Linear interpolation of one signal onto the 2-day grid.
///
/// Grid points inside the observed span (weight 1) are interpolated; points
/// outside it repeat the edge value and get weight 0, leaving them to the
/// smoother as pure interpolation targets.
pub fn resample_2day(raw: &RawSeries, sig: Signal) -> Result<(Vec<f64>, Vec<f64>)> {
    let samples: Vec<(u16, f64)> = raw
        .days
        .iter()
        .zip(raw.signal(sig))
        .filter(|&(_, v)| !v.is_nan())
        .map(|(&d, &v)| (d, v))
        .collect();
    if samples.len() < 2 {
        return Err(Error::Data(format!(
            "insufficient samples for {}: {} non-missing",
            sig.name(),
            samples.len()
        )));
    }
    let first = samples[0];
    let last = samples[samples.len() - 1];
    let mut values = Vec::with_capacity(GRID_LEN);
    let mut weights = Vec::with_capacity(GRID_LEN);
    let mut seg = 0usize;
    for g in 0..GRID_LEN {
        let day = (g as u16) * GRID_STEP;
        if day < first.0 {
            values.push(first.1);
            weights.push(0.0);
        } else if day > last.0 {
            values.push(last.1);
            weights.push(0.0);
        } else {
            while samples[seg + 1].0 < day {
                seg += 1;
            }
            let (d0, v0) = samples[seg];
            let (d1, v1) = samples[seg + 1];
            let value = if day == d0 {
                v0
            } else if day == d1 {
                v1
            } else {
                let t = (day - d0) as f64 / (d1 - d0) as f64;
                v0 + t * (v1 - v0)
            };
            values.push(value);
            weights.push(1.0);
        }
    }
    Ok((values, weights))
}

/// Full conditioning chain for one parcel-season:
/// Hampel on B4 and B8A, joint removal, resampling, per-signal V-curve
/// lambda, Whittaker smoothing.
pub fn prep_season(raw: &RawSeries) -> Result<SmoothSeries> {
    let mask_b4 = hampel_filter(
        raw.signal(Signal::B4),
        &raw.days,
        HAMPEL_HALF_WINDOW_DAYS,
        HAMPEL_K,
    )?;
    let mask_b8a = hampel_filter(
        raw.signal(Signal::B8a),
        &raw.days,
        HAMPEL_HALF_WINDOW_DAYS,
        HAMPEL_K,
    )?;
    let masked = apply_outlier_mask(raw, &mask_b4, &mask_b8a);

    let mut smoothed: [Vec<f64>; 4] = Default::default();
    for sig in Signal::ALL {
        let (y, w) = resample_2day(&masked, sig)?;
        if w.iter().filter(|&&x| x > 0.0).count() < 2 {
            return Err(Error::Data(format!(
                "insufficient samples for {}: observed span covers < 2 grid points",
                sig.name()
            )));
        }
        let lambda = vcurve_lambda(&y, &w)?;
        smoothed[sig as usize] = whittaker_smooth(&y, &w, lambda)?;
    }
    SmoothSeries::new(smoothed)
}
