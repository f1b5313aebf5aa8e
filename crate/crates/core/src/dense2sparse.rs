//! Dense-to-sparse transformation: frozen per-column standardization
//! followed by equal-frequency binning into bucket ids.
//!
//! Normalization is fitted once on training data as population statistics
//! and never updated afterwards (binning needs stable boundaries, so
//! per-minibatch statistics would make bucket ids non-deterministic; this is
//! the inference-mode reading of batch normalization). Bucket boundaries sit
//! at the k/B quantiles of the normalized training column, with duplicate
//! quantile values collapsed so boundaries stay strictly increasing.
//!
//! Two fixed conventions:
//! * values exactly equal to a boundary go to the lower bucket;
//! * bucket 0 is reserved for exact-zero raw counts when the zero flag is
//!   set, preserving the "never interacted" signal that quantile collapse
//!   over zero-inflated columns would otherwise blur.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BUCKETS: usize = 16;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Frozen per-column standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation (divide by n).
    pub std: Vec<f64>,
    pub epsilon: f64,
}

impl NormStats {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, feature: usize, raw: f64) -> f64 {
        (raw - self.mean[feature]) / (self.std[feature] + self.epsilon)
    }
}

/// Per-feature bucket boundaries in normalized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinBoundaries {
    /// Strictly increasing boundary list per feature, each of length <= B-1.
    pub boundaries: Vec<Vec<f64>>,
    /// Reserve bucket 0 for exact-zero raw counts.
    pub zero_bucket: bool,
}

impl BinBoundaries {
    pub fn n_features(&self) -> usize {
        self.boundaries.len()
    }

    /// Largest bucket id any feature can produce.
    pub fn max_bucket_id(&self) -> usize {
        let offset = self.zero_bucket as usize;
        self.boundaries
            .iter()
            .map(|b| b.len() + offset)
            .max()
            .unwrap_or(offset)
    }
}

/// Fits population mean/std per column over the full training matrix.
pub fn fit_normalizer(train_matrix: &[Vec<f64>]) -> Result<NormStats> {
    let n_rows = train_matrix.len();
    if n_rows == 0 {
        return Err(Error::Fit("cannot fit normalizer on an empty matrix".into()));
    }
    let n_features = train_matrix[0].len();
    if train_matrix.iter().any(|r| r.len() != n_features) {
        return Err(Error::contract("ragged training matrix"));
    }
    let mut mean = vec![0.0; n_features];
    for row in train_matrix {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n_rows as f64;
    }
    let mut var = vec![0.0; n_features];
    for row in train_matrix {
        for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(row) {
            let d = x - m;
            *v += d * d;
        }
    }
    let std = var.into_iter().map(|v| (v / n_rows as f64).sqrt()).collect();
    Ok(NormStats {
        mean,
        std,
        epsilon: DEFAULT_EPSILON,
    })
}

/// Boundaries at the k/B quantiles (k = 1..B-1) of one normalized column,
/// collapsed to stay strictly increasing.
pub fn fit_bins_column(normalized_column: &[f64], n_buckets: usize) -> Result<Vec<f64>> {
    if normalized_column.is_empty() {
        return Err(Error::Fit("cannot fit bins on an empty column".into()));
    }
    if n_buckets < 2 {
        return Err(Error::config(format!("bucket count {n_buckets} must be >= 2")));
    }
    let mut sorted = normalized_column.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
    let n = sorted.len();
    let mut boundaries = Vec::with_capacity(n_buckets - 1);
    for k in 1..n_buckets {
        // Index such that exactly ceil(k*n/B) sorted values are <= boundary
        // when values are distinct; ties at the boundary fall to the lower
        // bucket by the documented convention.
        let idx = (k * n).div_ceil(n_buckets).max(1) - 1;
        let q = sorted[idx];
        if boundaries.last().map_or(true, |&prev| q > prev) {
            boundaries.push(q);
        }
    }
    // The top quantile can equal the column maximum, which would leave the
    // last bucket empty on the training column; drop it.
    while boundaries.last() == sorted.last() {
        boundaries.pop();
    }
    Ok(boundaries)
}

/// Fits boundaries for every column of the training matrix after
/// normalization.
pub fn fit_bins(train_matrix: &[Vec<f64>], stats: &NormStats, n_buckets: usize, zero_bucket: bool) -> Result<BinBoundaries> {
    let n_rows = train_matrix.len();
    if n_rows == 0 {
        return Err(Error::Fit("cannot fit bins on an empty matrix".into()));
    }
    let n_features = stats.n_features();
    if train_matrix.iter().any(|r| r.len() != n_features) {
        return Err(Error::contract("training matrix width does not match stats"));
    }
    let mut boundaries = Vec::with_capacity(n_features);
    let mut column = vec![0.0; n_rows];
    for f in 0..n_features {
        for (slot, row) in column.iter_mut().zip(train_matrix) {
            *slot = stats.normalize(f, row[f]);
        }
        boundaries.push(fit_bins_column(&column, n_buckets)?);
    }
    Ok(BinBoundaries {
        boundaries,
        zero_bucket,
    })
}

/// Bucket id for one normalized value against one boundary list, ignoring
/// the reserved-zero rule: the count of boundaries strictly below the value.
fn bucket_of(boundaries: &[f64], normalized: f64) -> usize {
    // partition_point gives the number of boundaries b with b < value;
    // equality lands in the lower bucket.
    boundaries.partition_point(|&b| b < normalized)
}

/// Encodes one raw row into bucket ids using frozen stats and bins.
///
/// Values beyond the fitted range clamp to the first/last bucket by
/// construction; exact-zero raw counts map to the reserved bucket 0 when the
/// flag is set, and all other buckets shift up by one.
pub fn encode(raw_row: &[f64], stats: &NormStats, bins: &BinBoundaries) -> Result<Vec<u16>> {
    if raw_row.len() != stats.n_features() || raw_row.len() != bins.n_features() {
        return Err(Error::contract(format!(
            "encode dimension mismatch: row {}, stats {}, bins {}",
            raw_row.len(),
            stats.n_features(),
            bins.n_features()
        )));
    }
    let offset = bins.zero_bucket as usize;
    let mut out = Vec::with_capacity(raw_row.len());
    for (f, &x) in raw_row.iter().enumerate() {
        let id = if bins.zero_bucket && x == 0.0 {
            0
        } else {
            offset + bucket_of(&bins.boundaries[f], stats.normalize(f, x))
        };
        out.push(id as u16);
    }
    Ok(out)
}

/// Convenience bundle: fit both transforms on a training matrix, then encode
/// arbitrary rows with the frozen result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseEncoder {
    pub stats: NormStats,
    pub bins: BinBoundaries,
}

impl DenseEncoder {
    pub fn fit(train_matrix: &[Vec<f64>], n_buckets: usize, zero_bucket: bool) -> Result<DenseEncoder> {
        let stats = fit_normalizer(train_matrix)?;
        let bins = fit_bins(train_matrix, &stats, n_buckets, zero_bucket)?;
        Ok(DenseEncoder { stats, bins })
    }

    pub fn n_features(&self) -> usize {
        self.stats.n_features()
    }

    pub fn encode(&self, raw_row: &[f64]) -> Result<Vec<u16>> {
        encode(raw_row, &self.stats, &self.bins)
    }

    /// Largest bucket id this encoder can emit; embedding tables need
    /// `max_bucket_id() + 1` rows.
    pub fn max_bucket_id(&self) -> usize {
        self.bins.max_bucket_id()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix_of_columns(cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let n_rows = cols[0].len();
        (0..n_rows)
            .map(|r| cols.iter().map(|c| c[r]).collect())
            .collect()
    }

    #[test]
    fn empty_matrix_is_a_fit_error() {
        assert!(matches!(fit_normalizer(&[]), Err(Error::Fit(_))));
    }

    #[test]
    fn two_point_column_population_stats() {
        let m = matrix_of_columns(vec![vec![0.0, 2.0]]);
        let stats = fit_normalizer(&m).unwrap();
        assert_eq!(stats.mean[0], 1.0);
        assert_eq!(stats.std[0], 1.0);
    }

    #[test]
    fn constant_column_collapses_to_single_bucket() {
        let m = matrix_of_columns(vec![vec![3.0; 50]]);
        let enc = DenseEncoder::fit(&m, 8, false).unwrap();
        assert_eq!(enc.stats.mean[0], 3.0);
        assert_eq!(enc.stats.std[0], 0.0);
        assert!(enc.bins.boundaries[0].is_empty());
        for x in [-10.0, 0.0, 3.0, 100.0] {
            assert_eq!(enc.encode(&[x]).unwrap()[0], 0);
        }
    }

    #[test]
    fn mean_matches_brute_force_summation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let matrix: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..120).map(|_| rng.gen_range(0.0..50.0)).collect())
            .collect();
        let stats = fit_normalizer(&matrix).unwrap();
        for f in 0..120 {
            let mut acc = 0.0;
            for row in &matrix {
                acc += row[f];
            }
            let mean = acc / matrix.len() as f64;
            assert!((stats.mean[f] - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_grid_quartiles() {
        let values: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        let bounds = fit_bins_column(&values, 4).unwrap();
        assert_eq!(bounds, vec![25.0, 50.0, 75.0]);
        // Resulting bucket populations on the training column: 25 each.
        let mut pops = [0usize; 4];
        for &v in &values {
            pops[bucket_of(&bounds, v)] += 1;
        }
        assert_eq!(pops, [25, 25, 25, 25]);
    }

    #[test]
    fn heavy_ties_collapse_boundaries() {
        let mut values = vec![0.0; 900];
        values.extend((1..=100).map(|x| x as f64));
        let bounds = fit_bins_column(&values, 8).unwrap();
        assert!(bounds.len() <= 7);
        assert!(bounds.windows(2).all(|w| w[0] < w[1]));
        // With 90% zeros, every 1/8 quantile up to 7/8 is zero; fit keeps one
        // zero boundary and the distinct tail.
        assert!(!bounds.is_empty());
    }

    #[test]
    fn reserved_zero_bucket_wins_over_boundaries() {
        let m = matrix_of_columns(vec![(0..100).map(|x| x as f64).collect()]);
        let enc = DenseEncoder::fit(&m, 4, true).unwrap();
        assert_eq!(enc.encode(&[0.0]).unwrap()[0], 0);
        // A nonzero value below the whole training range clamps to the
        // lowest non-reserved bucket.
        assert_eq!(enc.encode(&[-5.0]).unwrap()[0], 1);
        // Above the range: highest bucket.
        let top = enc.encode(&[1e9]).unwrap()[0] as usize;
        assert_eq!(top, enc.max_bucket_id());
    }

    #[test]
    fn clamp_without_zero_bucket() {
        let m = matrix_of_columns(vec![(1..=100).map(|x| x as f64).collect()]);
        let enc = DenseEncoder::fit(&m, 4, false).unwrap();
        assert_eq!(enc.encode(&[-100.0]).unwrap()[0], 0);
        assert_eq!(enc.encode(&[1e9]).unwrap()[0] as usize, enc.max_bucket_id());
    }

    #[test]
    fn encode_matches_linear_scan_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let matrix: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                (0..20)
                    .map(|_| if rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(0.0_f64..30.0).floor() })
                    .collect()
            })
            .collect();
        let enc = DenseEncoder::fit(&matrix, 8, true).unwrap();
        for _ in 0..1000 {
            let row: Vec<f64> = (0..20)
                .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-5.0_f64..40.0).floor() })
                .collect();
            let fast = enc.encode(&row).unwrap();
            for (f, &x) in row.iter().enumerate() {
                let expected = if x == 0.0 {
                    0
                } else {
                    let z = enc.stats.normalize(f, x);
                    let mut b = 0;
                    for &bound in &enc.bins.boundaries[f] {
                        if z > bound {
                            b += 1;
                        }
                    }
                    b + 1
                };
                assert_eq!(fast[f] as usize, expected, "feature {f} value {x}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let m = matrix_of_columns(vec![vec![1.0, 2.0, 3.0]]);
        let enc = DenseEncoder::fit(&m, 4, false).unwrap();
        assert!(matches!(enc.encode(&[1.0, 2.0]), Err(Error::Contract(_))));
    }

    proptest! {
        // Monotonicity among non-reserved buckets for a fixed fit.
        #[test]
        fn encoding_is_monotone(mut train in proptest::collection::vec(0.0f64..100.0, 10..200),
                                a in 0.5f64..100.0, b in 0.5f64..100.0) {
            train.push(0.0); // keep the zero bucket exercised
            let m: Vec<Vec<f64>> = train.iter().map(|&x| vec![x]).collect();
            let enc = DenseEncoder::fit(&m, 8, true).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let ea = enc.encode(&[lo]).unwrap()[0];
            let eb = enc.encode(&[hi]).unwrap()[0];
            prop_assert!(ea <= eb);
        }

        // On an all-distinct training column every bucket population is
        // within one row of n/B.
        #[test]
        fn balance_on_distinct_values(n in 16usize..200, buckets in 2usize..12) {
            let values: Vec<f64> = (0..n).map(|i| i as f64 * 1.618 + 0.25).collect();
            let bounds = fit_bins_column(&values, buckets).unwrap();
            let mut pops = vec![0usize; bounds.len() + 1];
            for &v in &values {
                pops[bucket_of(&bounds, v)] += 1;
            }
            let ideal = n as f64 / buckets as f64;
            for &p in &pops {
                prop_assert!((p as f64 - ideal).abs() <= 1.0, "pop {p} vs ideal {ideal}");
            }
        }

        // Encoding is a pure function of the frozen transform.
        #[test]
        fn encoding_is_frozen(x in -50.0f64..150.0) {
            let m: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
            let enc = DenseEncoder::fit(&m, 8, true).unwrap();
            let snapshot = enc.clone();
            let first = enc.encode(&[x]).unwrap();
            let second = enc.encode(&[x]).unwrap();
            prop_assert_eq!(first, second);
            prop_assert_eq!(snapshot, enc);
        }
    }
}
