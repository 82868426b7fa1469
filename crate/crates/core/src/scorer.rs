//! Language-model side of decoding: next-token log-probabilities restricted
//! to the legal continuations of a trie prefix.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, GhostAnalysis, NodeId, Symbol, ROOT};
use crate::error::{Error, Result};
use crate::jsonl;

/// Spelling of the end-of-item marker in table files.
pub const END_OF_ITEM_KEY: &str = "</item>";

/// The input side of a decode: who is being served and what they consumed.
#[derive(Debug, Clone, Default)]
pub struct DecodingContext {
    pub id: String,
    /// Item indices into the catalog, oldest first.
    pub history: Vec<usize>,
    history_tokens: HashMap<String, usize>,
}

impl DecodingContext {
    pub fn new(id: impl Into<String>, catalog: &Catalog, history: Vec<usize>) -> Self {
        let mut history_tokens = HashMap::new();
        for &i in &history {
            for t in &catalog.item(i).tokens {
                *history_tokens.entry(t.clone()).or_insert(0) += 1;
            }
        }
        Self {
            id: id.into(),
            history,
            history_tokens,
        }
    }

    pub fn from_ids(id: impl Into<String>, catalog: &Catalog, ids: &[&str]) -> Result<Self> {
        let history = ids
            .iter()
            .map(|id| {
                catalog
                    .item_index(id)
                    .ok_or_else(|| Error::UnknownItem(id.to_string()))
            })
            .collect::<Result<_>>()?;
        Ok(Self::new(id, catalog, history))
    }

    /// Multiplicity of `token` among the history titles.
    pub fn token_count(&self, token: &str) -> usize {
        self.history_tokens.get(token).copied().unwrap_or(0)
    }

    pub fn history_tokens(&self) -> &HashMap<String, usize> {
        &self.history_tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub temperature: f64,
    /// Copy bonus of [`SyntheticCopyLm`]; ignored by other scorers.
    pub copy_bonus: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            copy_bonus: 2.0,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.copy_bonus >= 0.0 && self.copy_bonus.is_finite()) {
            return Err(Error::Config(format!(
                "copy bonus must be non-negative, got {}",
                self.copy_bonus
            )));
        }
        Ok(())
    }
}

/// Log-probabilities over exactly the legal continuations of a prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    entries: Vec<(Symbol, f64)>,
}

impl TokenDistribution {
    /// Applies `logit / temperature` and renormalizes.
    pub fn from_logits(logits: Vec<(Symbol, f64)>, temperature: f64) -> Result<Self> {
        if logits
            .iter()
            .any(|(_, l)| l.is_nan() || *l == f64::INFINITY)
        {
            return Err(Error::Scorer("logits must be finite or -inf".into()));
        }
        let scaled: Vec<f64> = logits.iter().map(|(_, l)| l / temperature).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Scorer(
                "every continuation has zero probability".into(),
            ));
        }
        let lse = max + scaled.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let entries = logits
            .into_iter()
            .zip(scaled)
            .map(|((s, _), z)| (s, z - lse))
            .collect();
        Ok(Self { entries })
    }

    pub fn get(&self, sym: &Symbol) -> Option<f64> {
        self.entries
            .iter()
            .find(|(s, _)| s == sym)
            .map(|(_, lp)| *lp)
    }

    pub fn logprob(&self, token: &str) -> Option<f64> {
        self.get(&Symbol::token(token))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, f64)> {
        self.entries.iter().map(|(s, lp)| (s, *lp))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, lp)| lp.exp()).sum()
    }
}

/// A next-token model over catalog continuations.
///
/// Implementors return raw logits; temperature and normalization are
/// applied uniformly by [`distribution_at`].
pub trait Scorer: Send + Sync {
    /// Logits over `catalog.continuations(node)`, in that order.
    /// `-inf` marks a zero-probability continuation.
    fn logits(
        &self,
        catalog: &Catalog,
        ctx: &DecodingContext,
        node: NodeId,
        prefix: &[String],
        config: &ScorerConfig,
    ) -> Result<Vec<(Symbol, f64)>>;
}

/// Distribution at a node already located by the caller.
pub fn distribution_at(
    scorer: &dyn Scorer,
    catalog: &Catalog,
    ctx: &DecodingContext,
    node: NodeId,
    prefix: &[String],
    config: &ScorerConfig,
) -> Result<TokenDistribution> {
    let logits = scorer.logits(catalog, ctx, node, prefix, config)?;
    TokenDistribution::from_logits(logits, config.temperature)
}

pub fn next_token_logprobs(
    scorer: &dyn Scorer,
    ctx: &DecodingContext,
    prefix: &[String],
    catalog: &Catalog,
    config: &ScorerConfig,
) -> Result<TokenDistribution> {
    config.validate()?;
    let node = catalog
        .walk(prefix)
        .ok_or_else(|| Error::DeadPrefix(prefix.to_vec()))?;
    distribution_at(scorer, catalog, ctx, node, prefix, config)
}

/// Closed-form scorer that prefers large subtrees and copies history tokens.
///
/// The weight of child token `t` is the number of items below it, times
/// `exp(copy_bonus)` when `t` occurs in the history titles. The end-of-item
/// marker has weight 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticCopyLm;

impl Scorer for SyntheticCopyLm {
    fn logits(
        &self,
        catalog: &Catalog,
        ctx: &DecodingContext,
        node: NodeId,
        _prefix: &[String],
        config: &ScorerConfig,
    ) -> Result<Vec<(Symbol, f64)>> {
        let n = catalog.node(node);
        let mut out = Vec::with_capacity(n.branching());
        if n.terminal_item.is_some() {
            out.push((Symbol::EndOfItem, 0.0));
        }
        for (tok, &child) in &n.children {
            let mut logit = (catalog.node(child).subtree_items.len() as f64).ln();
            if ctx.token_count(tok) > 0 {
                logit += config.copy_bonus;
            }
            out.push((Symbol::Token(tok.clone()), logit));
        }
        Ok(out)
    }
}

/// One row of a table scorer file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub context: String,
    pub prefix: Vec<String>,
    pub dist: HashMap<String, f64>,
}

/// Scorer that replays listed conditional distributions verbatim.
///
/// Keys not in the table fall back to a uniform distribution over the legal
/// continuations.
#[derive(Debug, Clone, Default)]
pub struct TableScorer {
    table: HashMap<(String, Vec<String>), HashMap<Symbol, f64>>,
}

impl TableScorer {
    pub fn from_entries(entries: impl IntoIterator<Item = TableEntry>) -> Result<Self> {
        let mut table = HashMap::new();
        for e in entries {
            let dist = validate_dist(&e)?;
            table.insert((e.context, e.prefix), dist);
        }
        Ok(Self { table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut table = HashMap::new();
        for (line, e) in jsonl::read::<TableEntry>(path)? {
            let dist = validate_dist(&e).map_err(|err| Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: err.to_string(),
            })?;
            table.insert((e.context, e.prefix), dist);
        }
        Ok(Self { table })
    }
}

fn validate_dist(e: &TableEntry) -> Result<HashMap<Symbol, f64>> {
    let mut sum = 0.0;
    let mut dist = HashMap::with_capacity(e.dist.len());
    for (tok, &p) in &e.dist {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::Scorer(format!("probability of {tok:?} is {p}")));
        }
        sum += p;
        let sym = if tok == END_OF_ITEM_KEY {
            Symbol::EndOfItem
        } else {
            Symbol::Token(tok.clone())
        };
        dist.insert(sym, p);
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Scorer(format!(
            "distribution for context {:?} prefix {:?} sums to {sum}",
            e.context, e.prefix
        )));
    }
    Ok(dist)
}

impl Scorer for TableScorer {
    fn logits(
        &self,
        catalog: &Catalog,
        ctx: &DecodingContext,
        node: NodeId,
        prefix: &[String],
        _config: &ScorerConfig,
    ) -> Result<Vec<(Symbol, f64)>> {
        let legal: Vec<Symbol> = catalog.continuations(node).collect();
        let Some(dist) = self.table.get(&(ctx.id.clone(), prefix.to_vec())) else {
            return Ok(legal.into_iter().map(|s| (s, 0.0)).collect());
        };
        if let Some(stray) = dist.keys().find(|s| !legal.contains(s)) {
            return Err(Error::Scorer(format!(
                "table entry for {:?} {prefix:?} lists illegal continuation {stray}",
                ctx.id
            )));
        }
        Ok(legal
            .into_iter()
            .map(|s| {
                let p = dist.get(&s).copied().unwrap_or(0.0);
                (s, p.ln())
            })
            .collect())
    }
}

/// Ghost mask from scorer probabilities: position `j` is a ghost when the
/// scorer gives the item's `j`-th token probability above `threshold`.
pub fn probabilistic_ghosts(
    scorer: &dyn Scorer,
    catalog: &Catalog,
    ctx: &DecodingContext,
    item: usize,
    config: &ScorerConfig,
    threshold: f64,
) -> Result<GhostAnalysis> {
    let tokens = &catalog.item(item).tokens;
    let mut node = ROOT;
    let mut mask = Vec::with_capacity(tokens.len());
    for (j, tok) in tokens.iter().enumerate() {
        let dist = distribution_at(scorer, catalog, ctx, node, &tokens[..j], config)?;
        let lp = dist.logprob(tok).unwrap_or(f64::NEG_INFINITY);
        mask.push(lp.exp() > threshold);
        node = catalog.node(node).children[tok];
    }
    Ok(GhostAnalysis::from_mask(mask))
}
