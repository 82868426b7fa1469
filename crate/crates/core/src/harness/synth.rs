//! Seeded synthetic catalogs built from multi-token series names.
//!
//! Every title is `<series name tokens> <variant number>`. Series heads are
//! unique, so inside a series every name token after the head is forced by
//! the trie. Name lengths cycle through `2..=name_length` over a shuffled
//! series order, so any catalog with two or more series mixes lengths. Users pick a home category and draw each interaction from it
//! with probability `skew`, otherwise uniformly from the whole catalog.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::UserRecord;
use crate::catalog::{Catalog, RawItem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub categories: usize,
    pub series_per_category: usize,
    pub items_per_series: usize,
    /// Longest series name in tokens, head included.
    pub name_length: usize,
    pub users: usize,
    /// Interactions generated per user.
    pub history_length: usize,
    pub skew: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            categories: 8,
            series_per_category: 6,
            items_per_series: 4,
            name_length: 3,
            users: 500,
            history_length: 12,
            skew: 0.9,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("categories", self.categories),
            ("series_per_category", self.series_per_category),
            ("items_per_series", self.items_per_series),
            ("name_length", self.name_length),
            ("users", self.users),
            ("history_length", self.history_length),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("synthetic {name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.skew) {
            return Err(Error::Config(format!(
                "skew must lie in [0, 1], got {}",
                self.skew
            )));
        }
        Ok(())
    }

    pub fn item_count(&self) -> usize {
        self.categories * self.series_per_category * self.items_per_series
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ru", "ze", "ta", "no", "vi", "pe", "su", "da", "fo", "gi", "ha", "ju", "be",
];

const WORDS: &[&str] = &[
    "deluxe",
    "pro",
    "classic",
    "edition",
    "studio",
    "mini",
    "ultra",
    "series",
    "kit",
    "set",
    "vintage",
    "digital",
    "acoustic",
    "electric",
    "wireless",
    "premium",
    "travel",
    "junior",
    "limited",
    "master",
    "compact",
    "turbo",
    "hybrid",
    "collector",
    "starter",
    "signature",
    "portable",
    "elite",
    "remix",
    "anniversary",
    "essentials",
    "complete",
];

/// Unique pronounceable head for series number `n`.
fn head_word(n: usize) -> String {
    let base = SYLLABLES.len();
    let mut word = String::new();
    let mut k = n;
    loop {
        word.push_str(SYLLABLES[k % base]);
        k /= base;
        if k == 0 {
            break;
        }
    }
    // always at least two syllables
    if n < base {
        word.push_str("ra");
    }
    word
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Catalog, Vec<UserRecord>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_series = spec.categories * spec.series_per_category;
    let mut heads: Vec<usize> = (0..n_series).collect();
    heads.shuffle(&mut rng);
    let mut order: Vec<usize> = (0..n_series).collect();
    order.shuffle(&mut rng);
    let min_len = spec.name_length.min(2);
    let span = spec.name_length - min_len + 1;

    let mut raw = Vec::with_capacity(spec.item_count());
    let mut by_category: Vec<Vec<usize>> = vec![Vec::new(); spec.categories];
    for (c, members) in by_category.iter_mut().enumerate() {
        let category = format!("category-{c:02}");
        let pool: Vec<&str> = WORDS.choose_multiple(&mut rng, 6).copied().collect();
        for s in 0..spec.series_per_category {
            let k = c * spec.series_per_category + s;
            let mut name = vec![head_word(heads[k])];
            for _ in 1..min_len + order[k] % span {
                name.push(pool.choose(&mut rng).unwrap().to_string());
            }
            let name = name.join(" ");
            for v in 1..=spec.items_per_series {
                members.push(raw.len());
                raw.push(RawItem::new(
                    format!("item-{:05}", raw.len()),
                    format!("{name} {v}"),
                    category.clone(),
                ));
            }
        }
    }
    let catalog = Catalog::build(&raw)?;

    let width = spec.users.to_string().len();
    let mut users = Vec::with_capacity(spec.users);
    for u in 0..spec.users {
        let home = rng.gen_range(0..spec.categories);
        let mut interactions = Vec::with_capacity(spec.history_length);
        for step in 0..spec.history_length {
            let item = if rng.gen_bool(spec.skew) {
                *by_category[home].choose(&mut rng).unwrap()
            } else {
                rng.gen_range(0..catalog.len())
            };
            let ts = step as i64 * 1_000 + rng.gen_range(0..1_000);
            interactions.push((item, ts));
        }
        users.push(UserRecord {
            user: format!("user-{u:0width$}"),
            interactions,
        });
    }
    Ok((catalog, users))
}

/// Categories present in a user's interactions.
pub fn categories_of<'a>(catalog: &'a Catalog, user: &UserRecord) -> BTreeSet<&'a str> {
    user.interactions
        .iter()
        .map(|&(i, _)| catalog.item(i).category.as_str())
        .collect()
}
