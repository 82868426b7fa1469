use serde::{Deserialize, Serialize};

use super::data::UserRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Train / valid / test shares of the global timeline.
    pub ratios: [f64; 3],
    pub max_history: usize,
    /// Split each user by position (last = test, second-to-last = valid)
    /// instead of by global timestamps.
    pub per_user_fallback: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: [0.8, 0.1, 0.1],
            max_history: 10,
            per_user_fallback: false,
        }
    }
}

/// A held-out interaction with the history that precedes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TestCase {
    pub user: String,
    pub history: Vec<usize>,
    pub target: usize,
    pub ts: i64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitDataset {
    /// Per-user training sequences, users in ascending id order.
    pub train: Vec<Vec<usize>>,
    pub valid: Vec<TestCase>,
    pub test: Vec<TestCase>,
    /// Last timestamp of train and of valid.
    pub boundaries: Option<(i64, i64)>,
    /// Held-out interactions skipped for lack of history.
    pub skipped: usize,
}

const RATIO_TOLERANCE: f64 = 1e-9;

pub fn temporal_split(users: &[UserRecord], config: &SplitConfig) -> Result<SplitDataset> {
    let [r_train, r_valid, r_test] = config.ratios;
    if config.ratios.iter().any(|r| !(0.0..=1.0).contains(r))
        || (r_train + r_valid + r_test - 1.0).abs() > RATIO_TOLERANCE
    {
        return Err(Error::Config(format!(
            "split ratios {:?} must be non-negative and sum to 1",
            config.ratios
        )));
    }
    if config.max_history == 0 {
        return Err(Error::Config("max history must be positive".into()));
    }
    let total: usize = users.iter().map(|u| u.interactions.len()).sum();
    if total < 10 {
        return Err(Error::Dataset(format!(
            "need at least 10 interactions, got {total}"
        )));
    }
    if config.per_user_fallback {
        return Ok(leave_last_split(users, config.max_history));
    }

    let mut stamps: Vec<i64> = users
        .iter()
        .flat_map(|u| u.interactions.iter().map(|&(_, ts)| ts))
        .collect();
    stamps.sort_unstable();
    if stamps.first() == stamps.last() {
        return Err(Error::Dataset(
            "all timestamps are equal; use the per-user fallback split".into(),
        ));
    }
    let cut = |share: f64| -> i64 {
        let n = (share * total as f64 + RATIO_TOLERANCE).floor() as usize;
        if n == 0 {
            i64::MIN
        } else {
            stamps[n.min(total) - 1]
        }
    };
    let train_end = cut(r_train);
    let valid_end = cut(r_train + r_valid);

    let mut out = SplitDataset {
        boundaries: Some((train_end, valid_end)),
        ..SplitDataset::default()
    };
    for u in users {
        let train: Vec<usize> = u
            .interactions
            .iter()
            .filter(|&&(_, ts)| ts <= train_end)
            .map(|&(i, _)| i)
            .collect();
        if !train.is_empty() {
            out.train.push(train);
        }
        for (pos, &(item, ts)) in u.interactions.iter().enumerate() {
            if ts <= train_end {
                continue;
            }
            let history: Vec<usize> = u.interactions[..pos]
                .iter()
                .filter(|&&(_, h)| h < ts)
                .map(|&(i, _)| i)
                .collect();
            let Some(case) = make_case(&u.user, history, item, ts, config.max_history) else {
                out.skipped += 1;
                continue;
            };
            if ts <= valid_end {
                out.valid.push(case);
            } else {
                out.test.push(case);
            }
        }
    }
    Ok(out)
}

fn make_case(
    user: &str,
    mut history: Vec<usize>,
    target: usize,
    ts: i64,
    max_history: usize,
) -> Option<TestCase> {
    if history.is_empty() {
        return None;
    }
    if history.len() > max_history {
        history.drain(..history.len() - max_history);
    }
    Some(TestCase {
        user: user.to_string(),
        history,
        target,
        ts,
    })
}

fn leave_last_split(users: &[UserRecord], max_history: usize) -> SplitDataset {
    let mut out = SplitDataset::default();
    for u in users {
        let items = u.items();
        let n = items.len();
        let train_len = n.saturating_sub(2);
        if train_len > 0 {
            out.train.push(items[..train_len].to_vec());
        }
        for pos in train_len..n {
            let (item, ts) = u.interactions[pos];
            let Some(case) = make_case(&u.user, items[..pos].to_vec(), item, ts, max_history)
            else {
                out.skipped += 1;
                continue;
            };
            if pos + 1 == n {
                out.test.push(case);
            } else {
                out.valid.push(case);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(name: &str, rows: &[(usize, i64)]) -> UserRecord {
        UserRecord {
            user: name.into(),
            interactions: rows.to_vec(),
        }
    }

    #[test]
    fn quantile_boundaries() {
        let u = user(
            "u",
            &(1..=10).map(|t| (t as usize % 3, t)).collect::<Vec<_>>(),
        );
        let s = temporal_split(&[u], &SplitConfig::default()).unwrap();
        assert_eq!(s.boundaries, Some((8, 9)));
        assert_eq!(
            s.train,
            vec![(1..=8).map(|t| t % 3).collect::<Vec<usize>>()]
        );
        assert_eq!(s.valid.len(), 1);
        assert_eq!(s.valid[0].ts, 9);
        assert_eq!(s.test.len(), 1);
        assert_eq!(s.test[0].ts, 10);
        assert_eq!(s.test[0].history.len(), 9);
    }

    #[test]
    fn user_without_history_is_skipped() {
        let a = user("a", &(1..=9).map(|t| (0, t)).collect::<Vec<_>>());
        let b = user("b", &[(1, 10)]);
        let s = temporal_split(&[a, b], &SplitConfig::default()).unwrap();
        assert_eq!(s.skipped, 1);
        assert!(s.test.iter().all(|c| c.user == "a"));
    }

    #[test]
    fn config_errors() {
        let u = user("u", &(1..=10).map(|t| (0, t)).collect::<Vec<_>>());
        let bad = SplitConfig {
            ratios: [0.8, 0.1, 0.2],
            ..SplitConfig::default()
        };
        assert!(matches!(
            temporal_split(std::slice::from_ref(&u), &bad),
            Err(Error::Config(_))
        ));
        let flat = user("f", &[(0, 5); 10]);
        assert!(matches!(
            temporal_split(std::slice::from_ref(&flat), &SplitConfig::default()),
            Err(Error::Dataset(_))
        ));
        let short = user("s", &[(0, 1), (0, 2)]);
        assert!(temporal_split(&[short], &SplitConfig::default()).is_err());

        let fallback = SplitConfig {
            per_user_fallback: true,
            ..SplitConfig::default()
        };
        let s = temporal_split(&[flat], &fallback).unwrap();
        assert_eq!((s.train[0].len(), s.valid.len(), s.test.len()), (8, 1, 1));
        assert_eq!(s.test[0].history.len(), 9);
    }

    #[test]
    fn histories_never_reach_the_target_time() {
        // two users interleaved, with duplicate timestamps
        let a = user("a", &[(0, 1), (1, 3), (2, 3), (3, 7), (4, 9), (0, 12)]);
        let b = user("b", &[(1, 2), (2, 4), (3, 9), (4, 10), (0, 11), (1, 12)]);
        let cfg = SplitConfig {
            ratios: [0.5, 0.25, 0.25],
            max_history: 3,
            ..SplitConfig::default()
        };
        let users = [a, b];
        let s = temporal_split(&users, &cfg).unwrap();
        let (train_end, _) = s.boundaries.unwrap();
        for case in s.valid.iter().chain(&s.test) {
            assert!(case.ts > train_end);
            assert!(case.history.len() <= 3);
            let u = users.iter().find(|u| u.user == case.user).unwrap();
            let before: Vec<usize> = u
                .interactions
                .iter()
                .filter(|&&(_, t)| t < case.ts)
                .map(|&(i, _)| i)
                .collect();
            assert!(before.ends_with(&case.history));
        }
    }
}
