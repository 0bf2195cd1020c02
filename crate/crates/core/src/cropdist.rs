//! Local crop-distribution context: area shares of the previous year's
//! crops over all parcels within a 10-km circle of the query centroid.

use std::collections::HashMap;

use crate::data::ParcelRecord;

/// Query radius used by the study design.
pub const DEFAULT_RADIUS_M: f64 = 10_000.0;

/// Length-V vector of area fractions, each rounded to 4 decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionVector {
    probs: Vec<f64>,
}

impl DistributionVector {
    pub fn zeros(v: usize) -> DistributionVector {
        DistributionVector {
            probs: vec![0.0; v],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// True when no labeled parcel (not even the query itself) was in range.
    pub fn is_empty_neighborhood(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0)
    }

    /// Sparse non-zero entries, for the csv cache.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p != 0.0)
            .map(|(i, &p)| (i, p))
    }

    pub fn from_probs(probs: Vec<f64>) -> DistributionVector {
        DistributionVector { probs }
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Uniform grid over parcel centroids for radius queries.
#[derive(Debug)]
pub struct GridIndex {
    cell_size: f64,
    points: Vec<(f64, f64)>,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

fn cell_of(x: f64, y: f64, size: f64) -> (i64, i64) {
    ((x / size).floor() as i64, (y / size).floor() as i64)
}

/// Index parcel centroids on a grid with `DEFAULT_RADIUS_M` cells.
pub fn build_grid_index(parcels: &[ParcelRecord]) -> GridIndex {
    GridIndex::new(parcels, DEFAULT_RADIUS_M)
}

impl GridIndex {
    pub fn new(parcels: &[ParcelRecord], cell_size: f64) -> GridIndex {
        assert!(cell_size > 0.0);
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        let mut points = Vec::with_capacity(parcels.len());
        for (i, p) in parcels.iter().enumerate() {
            points.push((p.centroid_x_m, p.centroid_y_m));
            cells
                .entry(cell_of(p.centroid_x_m, p.centroid_y_m, cell_size))
                .or_default()
                .push(i as u32);
        }
        GridIndex {
            cell_size,
            points,
            cells,
        }
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    /// Parcel indices with centroid distance <= radius, ascending.
    pub fn within_radius(&self, x: f64, y: f64, radius: f64) -> Vec<u32> {
        let reach = (radius / self.cell_size).ceil() as i64;
        let (cx, cy) = cell_of(x, y, self.cell_size);
        let r2 = radius * radius;
        let mut found = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                if let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &i in ids {
                        let (px, py) = self.points[i as usize];
                        let (ex, ey) = (px - x, py - y);
                        if ex * ex + ey * ey <= r2 {
                            found.push(i);
                        }
                    }
                }
            }
        }
        found.sort_unstable();
        found
    }
}

/// Area-weighted crop shares of season-(N-1) labels inside the circle.
///
/// The query parcel counts toward its own neighborhood. Entries are rounded
/// to 4 decimals after normalization; an unlabeled neighborhood yields the
/// all-zero vector.
pub fn neighborhood_distribution(
    parcel_idx: u32,
    parcels: &[ParcelRecord],
    index: &GridIndex,
    crops_of_year: &HashMap<u32, u32>,
    v: usize,
    radius: f64,
) -> DistributionVector {
    let p = &parcels[parcel_idx as usize];
    let mut area_per_crop = vec![0.0f64; v];
    let mut total = 0.0;
    for i in index.within_radius(p.centroid_x_m, p.centroid_y_m, radius) {
        if let Some(&crop) = crops_of_year.get(&i) {
            let area = parcels[i as usize].area_ha;
            area_per_crop[crop as usize] += area;
            total += area;
        }
    }
    if total == 0.0 {
        return DistributionVector::zeros(v);
    }
    DistributionVector {
        probs: area_per_crop
            .into_iter()
            .map(|a| round4(a / total))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn parcel(id: &str, x: f64, y: f64, area: f64) -> ParcelRecord {
        ParcelRecord {
            parcel_id: id.to_string(),
            centroid_x_m: x,
            centroid_y_m: y,
            area_ha: area,
        }
    }

    #[test]
    fn single_parcel_occupies_one_cell() {
        let parcels = vec![parcel("a", 123.0, 456.0, 1.0)];
        let index = build_grid_index(&parcels);
        assert_eq!(index.occupied_cells(), 1);
    }

    #[test]
    fn boundary_parcel_found_from_both_sides() {
        // parcel exactly on the x = 10 km cell boundary
        let parcels = vec![parcel("edge", 10_000.0, 0.0, 1.0)];
        let index = build_grid_index(&parcels);
        assert_eq!(index.within_radius(9_800.0, 0.0, 500.0), vec![0]);
        assert_eq!(index.within_radius(10_200.0, 0.0, 500.0), vec![0]);
    }

    #[test]
    fn grid_query_matches_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let parcels: Vec<ParcelRecord> = (0..1000)
            .map(|i| {
                parcel(
                    &format!("p{i}"),
                    rng.random_range(-30_000.0..30_000.0),
                    rng.random_range(-30_000.0..30_000.0),
                    rng.random_range(0.5..10.0),
                )
            })
            .collect();
        let index = build_grid_index(&parcels);
        for q in 0..parcels.len() {
            let (qx, qy) = (parcels[q].centroid_x_m, parcels[q].centroid_y_m);
            let got = index.within_radius(qx, qy, DEFAULT_RADIUS_M);
            let mut want: Vec<u32> = (0..parcels.len() as u32)
                .filter(|&i| {
                    let dx = parcels[i as usize].centroid_x_m - qx;
                    let dy = parcels[i as usize].centroid_y_m - qy;
                    dx * dx + dy * dy <= DEFAULT_RADIUS_M * DEFAULT_RADIUS_M
                })
                .collect();
            want.sort_unstable();
            assert_eq!(got, want, "query parcel {q}");
        }
    }

    #[test]
    fn isolated_parcel_sees_itself() {
        let parcels = vec![parcel("a", 0.0, 0.0, 2.0)];
        let index = build_grid_index(&parcels);
        let crops: HashMap<u32, u32> = [(0, 3)].into();
        let d = neighborhood_distribution(0, &parcels, &index, &crops, 5, DEFAULT_RADIUS_M);
        assert_eq!(d.probs()[3], 1.0);
        assert_eq!(d.probs().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn area_weighted_shares() {
        let parcels = vec![
            parcel("a", 0.0, 0.0, 1.0),
            parcel("b", 100.0, 0.0, 1.0),
            parcel("c", 0.0, 100.0, 2.0),
        ];
        let index = build_grid_index(&parcels);
        let crops: HashMap<u32, u32> = [(0, 0), (1, 0), (2, 1)].into();
        let d = neighborhood_distribution(0, &parcels, &index, &crops, 3, DEFAULT_RADIUS_M);
        assert_eq!(d.probs(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn tiny_share_rounds_to_zero() {
        let parcels = vec![
            parcel("big", 0.0, 0.0, 99_997.0),
            parcel("tiny", 10.0, 0.0, 3.0), // share 3e-5
        ];
        let index = build_grid_index(&parcels);
        let crops: HashMap<u32, u32> = [(0, 0), (1, 1)].into();
        let d = neighborhood_distribution(0, &parcels, &index, &crops, 2, DEFAULT_RADIUS_M);
        assert_eq!(d.probs()[1], 0.0);
        assert!(!d.is_empty_neighborhood());
    }

    #[test]
    fn unlabeled_neighborhood_flagged_as_zero() {
        let parcels = vec![parcel("a", 0.0, 0.0, 1.0)];
        let index = build_grid_index(&parcels);
        let d = neighborhood_distribution(
            0,
            &parcels,
            &index,
            &HashMap::new(),
            4,
            DEFAULT_RADIUS_M,
        );
        assert!(d.is_empty_neighborhood());
    }

    #[test]
    fn invariant_under_translation_and_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let n = 200;
        let mut parcels: Vec<ParcelRecord> = (0..n)
            .map(|i| {
                parcel(
                    &format!("p{i}"),
                    rng.random_range(0.0..40_000.0),
                    rng.random_range(0.0..40_000.0),
                    rng.random_range(0.5..5.0),
                )
            })
            .collect();
        let crops: HashMap<u32, u32> = (0..n as u32).map(|i| (i, i % 4)).collect();
        let index = build_grid_index(&parcels);
        let base = neighborhood_distribution(0, &parcels, &index, &crops, 4, DEFAULT_RADIUS_M);

        // rigid translation of all coordinates
        for p in &mut parcels {
            p.centroid_x_m += 123_456.7;
            p.centroid_y_m -= 98_765.4;
        }
        let shifted_index = build_grid_index(&parcels);
        let shifted =
            neighborhood_distribution(0, &parcels, &shifted_index, &crops, 4, DEFAULT_RADIUS_M);
        assert_eq!(base, shifted);
    }

    #[test]
    fn pre_rounding_shares_sum_to_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let parcels: Vec<ParcelRecord> = (0..50)
            .map(|i| {
                parcel(
                    &format!("p{i}"),
                    rng.random_range(0.0..5_000.0),
                    rng.random_range(0.0..5_000.0),
                    rng.random_range(0.5..5.0),
                )
            })
            .collect();
        let crops: HashMap<u32, u32> = (0..50u32).map(|i| (i, i % 7)).collect();
        let index = build_grid_index(&parcels);
        // everything is within 10 km of parcel 0, so shares cover all areas
        let mut total = 0.0;
        let mut per_crop = vec![0.0f64; 7];
        for p in 0..50u32 {
            per_crop[(p % 7) as usize] += parcels[p as usize].area_ha;
            total += parcels[p as usize].area_ha;
        }
        let sum: f64 = per_crop.iter().map(|a| a / total).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // and the rounded vector stays within rounding slack of 1
        let d = neighborhood_distribution(0, &parcels, &index, &crops, 7, DEFAULT_RADIUS_M);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 7.0 * 5e-5);
    }
}
