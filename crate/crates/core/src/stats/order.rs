use super::StatsError;

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Median; mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Result<f64, StatsError> {
    let sorted = sorted_finite(values)?;
    let n = sorted.len();
    if n % 2 == 1 {
        Ok(sorted[n / 2])
    } else {
        Ok((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0)
    }
}

/// Quantile by linear interpolation between order statistics, with
/// `q = 0` the minimum and `q = 1` the maximum.
pub fn quantile(values: &[f64], q: f64) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(StatsError::QuantileOutOfRange(q));
    }
    let sorted = sorted_finite(values)?;
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Standard competition ranks ("1224"), higher scores first. Scores
/// within `1e-9` of each other tie.
pub fn competition_ranks(scores: &[f64]) -> Vec<usize> {
    scores.iter().map(|&s| 1 + scores.iter().filter(|&&o| o > s + 1e-9).count()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::rng::StreamKey;

    #[test]
    fn competition_ranking_shares_the_smaller_rank() {
        assert_eq!(competition_ranks(&[9.2, 9.0, 9.0, 8.8]), vec![1, 2, 2, 4]);
        assert_eq!(competition_ranks(&[1.0, 3.0, 2.0]), vec![3, 1, 2]);
        assert_eq!(competition_ranks(&[]), Vec::<usize>::new());
    }

    #[test]
    fn even_and_odd_medians() {
        assert_eq!(median(&[8.0, 9.0]).unwrap(), 8.5);
        assert_eq!(median(&[7.0, 8.0, 9.0]).unwrap(), 8.0);
        assert_eq!(median(&[9.0, 7.0, 8.0]).unwrap(), 8.0);
    }

    #[test]
    fn empty_and_nan_rejected() {
        assert_eq!(median(&[]), Err(StatsError::Empty));
        assert_eq!(median(&[1.0, f64::NAN]), Err(StatsError::NonFinite));
        assert_eq!(quantile(&[1.0], 1.5), Err(StatsError::QuantileOutOfRange(1.5)));
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 4.0);
        assert!((quantile(&v, 0.5).unwrap() - 2.5).abs() < 1e-15);
        assert!((quantile(&v, 1.0 / 3.0).unwrap() - 2.0).abs() < 1e-12);
    }

    // Sort oracle: independent selection by counting ranks.
    fn rank_select(values: &[f64], k: usize) -> f64 {
        for &v in values {
            let below = values.iter().filter(|&&w| w < v).count();
            let equal = values.iter().filter(|&&w| w == v).count();
            if below <= k && k < below + equal {
                return v;
            }
        }
        unreachable!()
    }

    #[test]
    fn large_sample_matches_rank_oracle() {
        let key = StreamKey::new(7);
        for n in [1usize, 2, 101, 1000] {
            let values: Vec<f64> = (0..n as u64).map(|i| 8.0 + 0.3 * key.normal(i)).collect();
            let expected = if n % 2 == 1 {
                rank_select(&values, n / 2)
            } else {
                (rank_select(&values, n / 2 - 1) + rank_select(&values, n / 2)) / 2.0
            };
            assert_eq!(median(&values).unwrap(), expected);
        }
    }
}
