//! Text-free assistant models and their projection onto per-step token
//! scores.
//!
//! An assistant assigns a probability to every catalog item. During decoding
//! a prefix is scored by the share of assistant mass that stays reachable:
//! `log(mass(prefix ++ token) / mass(prefix))`. Summed along a full item path
//! these log-ratios telescope to `log(p(item) / total mass)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, NodeId, Symbol};
use crate::error::{Error, Result};

/// Item-level assistant probabilities, indexed like the catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct AssistantDistribution {
    p: Vec<f64>,
    group: Option<BTreeSet<usize>>,
    zero_mass: bool,
}

impl AssistantDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Assistant(format!(
                "probability {bad} is not a finite non-negative value"
            )));
        }
        if p.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Assistant("total mass is zero".into()));
        }
        Ok(Self {
            p,
            group: None,
            zero_mass: false,
        })
    }

    /// Builds from an id-keyed map; items not listed get zero.
    pub fn from_ids(catalog: &Catalog, map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = vec![0.0; catalog.len()];
        for (id, &v) in map {
            let i = catalog
                .item_index(id)
                .ok_or_else(|| Error::UnknownItem(id.clone()))?;
            p[i] = v;
        }
        Self::new(p)
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: vec![1.0 / n as f64; n],
            group: None,
            zero_mass: false,
        }
    }

    pub fn prob(&self, item: usize) -> f64 {
        self.p[item]
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn group(&self) -> Option<&BTreeSet<usize>> {
        self.group.as_ref()
    }

    /// Set when a mask left no item with positive mass.
    pub fn zero_mass_warning(&self) -> bool {
        self.zero_mass
    }

    /// Multiplies every probability by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p: self.p.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Zeroes every item outside `group`. Values inside are left as they are.
pub fn apply_group_mask(
    dist: &AssistantDistribution,
    group: &BTreeSet<usize>,
) -> Result<AssistantDistribution> {
    if group.is_empty() {
        return Err(Error::Assistant("mask group is empty".into()));
    }
    if let Some(&bad) = group.iter().find(|&&i| i >= dist.len()) {
        return Err(Error::Assistant(format!(
            "mask item index {bad} outside the catalog"
        )));
    }
    let p: Vec<f64> = dist
        .p
        .iter()
        .enumerate()
        .map(|(i, &v)| if group.contains(&i) { v } else { 0.0 })
        .collect();
    let zero_mass = p.iter().all(|&v| v == 0.0);
    Ok(AssistantDistribution {
        p,
        group: Some(group.clone()),
        zero_mass,
    })
}

/// Item indices of one category; the usual mask group.
pub fn category_group(catalog: &Catalog, category: &str) -> BTreeSet<usize> {
    catalog
        .items()
        .iter()
        .enumerate()
        .filter(|(_, it)| it.category == category)
        .map(|(i, _)| i)
        .collect()
}

/// A recommender that sees only item ids.
pub trait TextFreeModel: Send + Sync {
    fn score_items(&self, history: &[usize]) -> AssistantDistribution;
}

/// History-independent, add-one-smoothed popularity.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityModel {
    counts: Vec<u64>,
    smoothing: f64,
}

impl PopularityModel {
    pub fn train(n_items: usize, interactions: &[usize]) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::Assistant(
                "popularity model needs at least one interaction".into(),
            ));
        }
        let mut counts = vec![0u64; n_items];
        for &i in interactions {
            counts[i] += 1;
        }
        Ok(Self {
            counts,
            smoothing: 1.0,
        })
    }

    pub fn from_counts(counts: Vec<u64>, smoothing: f64) -> Self {
        Self { counts, smoothing }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    fn distribution(&self) -> AssistantDistribution {
        let n = self.counts.len() as f64;
        let total = self.counts.iter().sum::<u64>() as f64 + self.smoothing * n;
        AssistantDistribution {
            p: self
                .counts
                .iter()
                .map(|&c| (c as f64 + self.smoothing) / total)
                .collect(),
            group: None,
            zero_mass: false,
        }
    }
}

impl TextFreeModel for PopularityModel {
    fn score_items(&self, _history: &[usize]) -> AssistantDistribution {
        self.distribution()
    }
}

/// First-order transitions with add-one smoothing, conditioned on the last
/// history item. Empty histories fall back to popularity.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    n_items: usize,
    smoothing: f64,
    transitions: Vec<BTreeMap<usize, u64>>,
    row_totals: Vec<u64>,
    popularity: PopularityModel,
}

impl MarkovModel {
    pub fn train(n_items: usize, sequences: &[Vec<usize>]) -> Result<Self> {
        let flat: Vec<usize> = sequences.iter().flatten().copied().collect();
        let popularity = PopularityModel::train(n_items, &flat)?;
        let mut transitions = vec![BTreeMap::new(); n_items];
        let mut row_totals = vec![0u64; n_items];
        for seq in sequences {
            for w in seq.windows(2) {
                *transitions[w[0]].entry(w[1]).or_insert(0) += 1;
                row_totals[w[0]] += 1;
            }
        }
        Ok(Self {
            n_items,
            smoothing: 1.0,
            transitions,
            row_totals,
            popularity,
        })
    }

    pub fn transition_count(&self, from: usize, to: usize) -> u64 {
        self.transitions[from].get(&to).copied().unwrap_or(0)
    }
}

impl TextFreeModel for MarkovModel {
    fn score_items(&self, history: &[usize]) -> AssistantDistribution {
        let Some(&last) = history.last() else {
            return self.popularity.distribution();
        };
        let denom = self.row_totals[last] as f64 + self.smoothing * self.n_items as f64;
        let mut p = vec![self.smoothing / denom; self.n_items];
        for (&j, &c) in &self.transitions[last] {
            p[j] = (c as f64 + self.smoothing) / denom;
        }
        AssistantDistribution {
            p,
            group: None,
            zero_mass: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssistantKind {
    Popularity,
    Markov,
}

/// A trained assistant of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AssistantModel {
    Popularity(PopularityModel),
    Markov(MarkovModel),
}

impl AssistantModel {
    pub fn train(kind: AssistantKind, n_items: usize, sequences: &[Vec<usize>]) -> Result<Self> {
        Ok(match kind {
            AssistantKind::Popularity => {
                let flat: Vec<usize> = sequences.iter().flatten().copied().collect();
                AssistantModel::Popularity(PopularityModel::train(n_items, &flat)?)
            }
            AssistantKind::Markov => {
                AssistantModel::Markov(MarkovModel::train(n_items, sequences)?)
            }
        })
    }

    pub fn kind(&self) -> AssistantKind {
        match self {
            AssistantModel::Popularity(_) => AssistantKind::Popularity,
            AssistantModel::Markov(_) => AssistantKind::Markov,
        }
    }

    pub fn to_file(&self, catalog: &Catalog) -> ModelFile {
        let id = |i: usize| catalog.item(i).id.clone();
        let pop = match self {
            AssistantModel::Popularity(p) => p,
            AssistantModel::Markov(m) => &m.popularity,
        };
        let counts = pop
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (id(i), c))
            .collect();
        let transitions = match self {
            AssistantModel::Popularity(_) => BTreeMap::new(),
            AssistantModel::Markov(m) => m
                .transitions
                .iter()
                .enumerate()
                .filter(|(_, row)| !row.is_empty())
                .map(|(i, row)| (id(i), row.iter().map(|(&j, &c)| (id(j), c)).collect()))
                .collect(),
        };
        ModelFile {
            kind: self.kind(),
            smoothing: pop.smoothing,
            counts,
            transitions,
        }
    }

    pub fn from_file(catalog: &Catalog, file: &ModelFile) -> Result<Self> {
        let idx = |id: &str| {
            catalog
                .item_index(id)
                .ok_or_else(|| Error::UnknownItem(id.to_string()))
        };
        let n = catalog.len();
        let mut counts = vec![0u64; n];
        for (id, &c) in &file.counts {
            counts[idx(id)?] = c;
        }
        let popularity = PopularityModel::from_counts(counts, file.smoothing);
        Ok(match file.kind {
            AssistantKind::Popularity => AssistantModel::Popularity(popularity),
            AssistantKind::Markov => {
                let mut transitions = vec![BTreeMap::new(); n];
                let mut row_totals = vec![0u64; n];
                for (from, row) in &file.transitions {
                    let f = idx(from)?;
                    for (to, &c) in row {
                        transitions[f].insert(idx(to)?, c);
                        row_totals[f] += c;
                    }
                }
                AssistantModel::Markov(MarkovModel {
                    n_items: n,
                    smoothing: file.smoothing,
                    transitions,
                    row_totals,
                    popularity,
                })
            }
        })
    }

    pub fn save(&self, catalog: &Catalog, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.to_file(catalog))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(catalog: &Catalog, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(catalog, &serde_json::from_str(&text)?)
    }
}

impl TextFreeModel for AssistantModel {
    fn score_items(&self, history: &[usize]) -> AssistantDistribution {
        match self {
            AssistantModel::Popularity(m) => m.score_items(history),
            AssistantModel::Markov(m) => m.score_items(history),
        }
    }
}

/// On-disk form of a trained assistant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: AssistantKind,
    pub smoothing: f64,
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub transitions: BTreeMap<String, BTreeMap<String, u64>>,
}

/// Result of one assistant step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRatio {
    pub value: f64,
    /// The prefix itself carries no assistant mass.
    pub degenerate_prefix: bool,
}

/// Assistant mass below every trie node, computed once per decode.
#[derive(Debug, Clone)]
pub struct PrefixMasses {
    mass: Vec<f64>,
    terminal: Vec<f64>,
    floor: Option<f64>,
}

impl PrefixMasses {
    pub fn new(catalog: &Catalog, dist: &AssistantDistribution) -> Self {
        let nodes = catalog.nodes();
        let terminal: Vec<f64> = nodes
            .iter()
            .map(|n| n.terminal_item.map_or(0.0, |i| dist.prob(i)))
            .collect();
        let mut mass = terminal.clone();
        // Children are always allocated after their parent.
        for id in (1..nodes.len()).rev() {
            if let Some(parent) = nodes[id].parent {
                mass[parent] += mass[id];
            }
        }
        Self {
            mass,
            terminal,
            floor: None,
        }
    }

    /// Lower-bounds every step ratio by `epsilon`, so no step is `-inf`.
    pub fn with_floor(mut self, epsilon: f64) -> Self {
        self.floor = Some(epsilon);
        self
    }

    pub fn mass(&self, node: NodeId) -> f64 {
        self.mass[node]
    }

    pub fn logratio(&self, catalog: &Catalog, node: NodeId, sym: &Symbol) -> LogRatio {
        let denom = self.mass[node];
        let numer = match sym {
            Symbol::EndOfItem => self.terminal[node],
            Symbol::Token(t) => catalog.child(node, t).map_or(0.0, |c| self.mass[c]),
        };
        let ratio = if denom > 0.0 { numer / denom } else { 0.0 };
        let ratio = match self.floor {
            Some(eps) => ratio.max(eps),
            None => ratio,
        };
        LogRatio {
            value: if ratio > 0.0 {
                ratio.ln()
            } else {
                f64::NEG_INFINITY
            },
            degenerate_prefix: denom <= 0.0,
        }
    }
}

/// Assistant log-ratio of appending `token` to `prefix`.
pub fn step_logratio<S: AsRef<str>>(
    catalog: &Catalog,
    dist: &AssistantDistribution,
    prefix: &[S],
    token: &Symbol,
) -> Result<LogRatio> {
    let node = catalog.walk(prefix).ok_or_else(|| {
        Error::DeadPrefix(prefix.iter().map(|s| s.as_ref().to_string()).collect())
    })?;
    Ok(PrefixMasses::new(catalog, dist).logratio(catalog, node, token))
}

/// Extended-real accumulation of assistant scores; `-inf` absorbs.
pub fn accumulate_tf(score_so_far: f64, logratio: f64) -> f64 {
    if score_so_far == f64::NEG_INFINITY || logratio == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        score_so_far + logratio
    }
}
