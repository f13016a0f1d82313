use serde::{Deserialize, Serialize};

use crate::features::calendar::{session_len, slot, HOURS, SLOTS_PER_DAY};
use crate::simulate::ScenarioSet;
use crate::{Error, Result};

pub const N_LEVELS: usize = 99;
pub const DEFAULT_K: usize = 10;
/// Buckets in the last three hours of trading.
pub const LAST_BUCKETS: usize = 12;

pub fn quantile_levels() -> [f64; N_LEVELS] {
    std::array::from_fn(|i| (i + 1) as f64 / 100.0)
}

#[inline]
pub fn pinball(tau: f64, q: f64, y: f64) -> f64 {
    if y <= q {
        (1.0 - tau) * (q - y)
    } else {
        tau * (y - q)
    }
}

/// Sample quantile by linear interpolation between order statistics
/// (`sorted` ascending).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Pinball losses of an ensemble at every level of [`quantile_levels`].
pub fn pinball_levels(samples: &[f64], y: f64) -> [f64; N_LEVELS] {
    let s = sorted(samples);
    let levels = quantile_levels();
    std::array::from_fn(|i| pinball(levels[i], quantile_sorted(&s, levels[i]), y))
}

/// CRPS of an ensemble approximated on the 99-level pinball grid
/// (twice the mean pinball loss).
pub fn crps_pinball(samples: &[f64], y: f64) -> f64 {
    2.0 * pinball_levels(samples, y).iter().sum::<f64>() / N_LEVELS as f64
}

/// Energy score with the K-band estimator of the spread term:
/// `mean ||X_m - y|| - 1/(2M(K-1)) sum_m sum_{k=1}^{K-1} ||X_m - X_{m+k}||`
/// with path indices wrapping around. At `K = M` this is the all-pairs
/// estimator.
pub fn energy_score_kband(paths: &[&[f64]], y: &[f64], k: usize) -> Result<f64> {
    let m = paths.len();
    if !(k > 1 && k <= m) {
        return Err(Error::config(format!(
            "energy score needs 1 < K <= M, got K={k}, M={m}"
        )));
    }
    if paths.iter().any(|p| p.len() != y.len()) {
        return Err(Error::schema(
            "scenario and observed vectors differ in length",
        ));
    }
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, z)| (x - z) * (x - z))
            .sum::<f64>()
            .sqrt()
    };
    let first = paths.iter().map(|p| dist(p, y)).sum::<f64>() / m as f64;
    let mut spread = 0.0;
    for i in 0..m {
        for off in 1..k {
            spread += dist(paths[i], paths[(i + off) % m]);
        }
    }
    Ok(first - spread / (2.0 * m as f64 * (k - 1) as f64))
}

/// Mean pinball-grid CRPS over all buckets of a day.
pub fn mean_crps(set: &ScenarioSet, observed: &[f64]) -> Result<f64> {
    if observed.len() != SLOTS_PER_DAY {
        return Err(Error::schema(format!(
            "observed day has {} slots, expected {SLOTS_PER_DAY}",
            observed.len()
        )));
    }
    set.validate()?;
    let mut sum = 0.0;
    for h in 0..HOURS {
        for t in 0..session_len(h) {
            sum += crps_pinball(set.at(h, t), observed[slot(h, t)]);
        }
    }
    Ok(sum / SLOTS_PER_DAY as f64)
}

/// Scores of one delivery hour of one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourScore {
    pub rmse: f64,
    pub mae: f64,
    pub crps: f64,
    pub es: f64,
    pub es3h: f64,
}

/// Scores of one day: per hour, joint over the whole day, and the mean
/// pinball loss per (hour, level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayScore {
    pub hours: Vec<HourScore>,
    /// Energy score of the concatenated trajectories of all hours.
    pub es_day: f64,
    /// As `es_day`, restricted to the last three trading hours of every product.
    pub es3h_day: f64,
    pub pinball: Vec<Vec<f64>>,
}

/// Scores `set` against the observed levels of the same day, given as
/// `observed[slot]`.
pub fn score_day(set: &ScenarioSet, observed: &[f64], k: usize) -> Result<DayScore> {
    if observed.len() != SLOTS_PER_DAY {
        return Err(Error::schema(format!(
            "observed day has {} slots, expected {SLOTS_PER_DAY}",
            observed.len()
        )));
    }
    set.validate()?;
    let m = set.n_paths;
    if !(k > 1 && k <= m) {
        return Err(Error::config(format!(
            "energy score needs 1 < K <= M, got K={k}, M={m}"
        )));
    }
    // path-major copy
    let mut pm = vec![0.0; m * SLOTS_PER_DAY];
    for s in 0..SLOTS_PER_DAY {
        for (j, &v) in set.levels[s * m..(s + 1) * m].iter().enumerate() {
            pm[j * SLOTS_PER_DAY + s] = v;
        }
    }
    let path = |j: usize| &pm[j * SLOTS_PER_DAY..(j + 1) * SLOTS_PER_DAY];
    let mut hours = Vec::with_capacity(HOURS);
    let mut pinball_hours = Vec::with_capacity(HOURS);
    for h in 0..HOURS {
        let len = session_len(h);
        let r = slot(h, 0)..slot(h, 0) + len;
        let (mut se, mut ae, mut crps) = (0.0, 0.0, 0.0);
        let mut pb = [0.0; N_LEVELS];
        for t in 0..len {
            let y = observed[slot(h, t)];
            let x = set.at(h, t);
            let mean = x.iter().sum::<f64>() / m as f64;
            let s = sorted(x);
            se += (mean - y).powi(2);
            ae += (quantile_sorted(&s, 0.5) - y).abs();
            let levels = quantile_levels();
            let mut sum = 0.0;
            for (i, &tau) in levels.iter().enumerate() {
                let l = pinball(tau, quantile_sorted(&s, tau), y);
                pb[i] += l;
                sum += l;
            }
            crps += 2.0 * sum / N_LEVELS as f64;
        }
        pb.iter_mut().for_each(|v| *v /= len as f64);
        let paths: Vec<&[f64]> = (0..m).map(|j| &path(j)[r.clone()]).collect();
        let es = energy_score_kband(&paths, &observed[r.clone()], k)?;
        let tail = r.end - LAST_BUCKETS..r.end;
        let paths3: Vec<&[f64]> = (0..m).map(|j| &path(j)[tail.clone()]).collect();
        let es3h = energy_score_kband(&paths3, &observed[tail], k)?;
        hours.push(HourScore {
            rmse: (se / len as f64).sqrt(),
            mae: ae / len as f64,
            crps: crps / len as f64,
            es,
            es3h,
        });
        pinball_hours.push(pb.to_vec());
    }
    let all: Vec<&[f64]> = (0..m).map(path).collect();
    let es_day = energy_score_kband(&all, observed, k)?;
    let tail_idx: Vec<usize> = (0..HOURS)
        .flat_map(|h| {
            let end = slot(h, 0) + session_len(h);
            end - LAST_BUCKETS..end
        })
        .collect();
    let gather = |v: &[f64]| -> Vec<f64> { tail_idx.iter().map(|&i| v[i]).collect() };
    let tails: Vec<Vec<f64>> = (0..m).map(|j| gather(path(j))).collect();
    let tail_refs: Vec<&[f64]> = tails.iter().map(Vec::as_slice).collect();
    let es3h_day = energy_score_kband(&tail_refs, &gather(observed), k)?;
    Ok(DayScore {
        hours,
        es_day,
        es3h_day,
        pinball: pinball_hours,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Empirical CRPS from the sorted sample (independent of the pinball grid).
    fn crps_sort(samples: &[f64], y: f64) -> f64 {
        let s = sorted(samples);
        let m = s.len() as f64;
        let first = s.iter().map(|x| (x - y).abs()).sum::<f64>() / m;
        let pairs: f64 = s
            .iter()
            .enumerate()
            .map(|(i, x)| (2.0 * (i as f64 + 1.0) - m - 1.0) * x)
            .sum();
        first - pairs / (m * m)
    }

    fn brute_force_es(paths: &[Vec<f64>], y: &[f64]) -> f64 {
        let d = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, z)| (x - z).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let m = paths.len() as f64;
        let first = paths.iter().map(|p| d(p, y)).sum::<f64>() / m;
        let mut pair = 0.0;
        for i in 0..paths.len() {
            for j in 0..paths.len() {
                if i != j {
                    pair += d(&paths[i], &paths[j]);
                }
            }
        }
        first - pair / (2.0 * m * (m - 1.0))
    }

    #[test]
    fn pinball_hand_examples() {
        assert_eq!(pinball(0.5, 10.0, 14.0), 2.0);
        assert!((pinball(0.9, 100.0, 90.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crps_grid_close_to_sort_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let a = crps_pinball(&x, 0.0);
        let b = crps_sort(&x, 0.0);
        assert!((a - b).abs() / b < 0.01, "{a} vs {b}");
    }

    #[test]
    fn kband_at_full_width_matches_all_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let m = rng.random_range(2..=8);
            let n = rng.random_range(1..=5);
            let paths: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let refs: Vec<&[f64]> = paths.iter().map(Vec::as_slice).collect();
            let got = energy_score_kband(&refs, &y, m).unwrap();
            assert!((got - brute_force_es(&paths, &y)).abs() < 1e-12);
        }
    }

    #[test]
    fn kband_range_checked() {
        let p = [1.0];
        let refs: Vec<&[f64]> = vec![&p, &p];
        assert!(matches!(
            energy_score_kband(&refs, &[0.0], 3),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            energy_score_kband(&refs, &[0.0], 1),
            Err(Error::Config(_))
        ));
    }

    fn constant_set(offsets: &[f64]) -> (ScenarioSet, Vec<f64>) {
        let spot = vec![50.0; HOURS];
        let m = offsets.len();
        let mut changes = vec![0.0; m * SLOTS_PER_DAY];
        for (j, &o) in offsets.iter().enumerate() {
            for h in 0..HOURS {
                changes[j * SLOTS_PER_DAY + slot(h, 0)] = o;
            }
        }
        let d = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let set = ScenarioSet::from_changes("t", 0, d, &spot, &changes, m);
        let obs: Vec<f64> = (0..SLOTS_PER_DAY).map(|_| 50.0).collect();
        (set, obs)
    }

    #[test]
    fn perfect_ensemble_scores_zero() {
        let (set, obs) = constant_set(&[0.0; 4]);
        let s = score_day(&set, &obs, 4).unwrap();
        for h in &s.hours {
            assert_eq!(
                (h.rmse, h.mae, h.crps, h.es, h.es3h),
                (0.0, 0.0, 0.0, 0.0, 0.0)
            );
        }
        assert_eq!(s.es_day, 0.0);
    }

    #[test]
    fn point_scores_on_hand_sets() {
        let (set, obs) = constant_set(&[1.0, -1.0]);
        let s = score_day(&set, &obs, 2).unwrap();
        assert!(s.hours.iter().all(|h| h.rmse == 0.0));
        let (set, obs) = constant_set(&[-5.0, 0.0, 9.0]);
        let s = score_day(&set, &obs, 3).unwrap();
        assert!(s.hours.iter().all(|h| h.mae == 0.0));
        let (set, obs) = constant_set(&[2.5, 2.5, 2.5]);
        let s = score_day(&set, &obs, 3).unwrap();
        assert!(s
            .hours
            .iter()
            .all(|h| (h.rmse - 2.5).abs() < 1e-12 && (h.mae - 2.5).abs() < 1e-12));
    }

    #[test]
    fn scores_scale_and_ignore_path_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let y = vec![0.5; 6];
        let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let base = energy_score_kband(&refs, &y, 12).unwrap();
        let scaled: Vec<Vec<f64>> = x
            .iter()
            .map(|p| p.iter().map(|v| 3.0 * v).collect())
            .collect();
        let srefs: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
        let ys: Vec<f64> = y.iter().map(|v| 3.0 * v).collect();
        assert!((energy_score_kband(&srefs, &ys, 12).unwrap() - 3.0 * base).abs() < 1e-10);
        let mut rev = refs.clone();
        rev.reverse();
        assert!((energy_score_kband(&rev, &y, 12).unwrap() - base).abs() < 1e-12);
        let flat: Vec<f64> = x.iter().map(|p| p[0]).collect();
        let mut shuffled = flat.clone();
        shuffled.rotate_left(5);
        assert_eq!(crps_pinball(&flat, 0.3), crps_pinball(&shuffled, 0.3));
    }
}
