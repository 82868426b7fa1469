//! Item catalog and the token trie that defines the constrained generation space.
//!
//! Every item title is tokenized and inserted into a prefix trie; the
//! end-of-item marker ([`Symbol::EndOfItem`]) closes each path so that an item
//! whose title is a strict prefix of another item's title still owns a unique
//! terminal. The catalog is immutable once built.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jsonl;

/// Index of a node in the catalog trie arena.
pub type NodeId = usize;

/// A single decoding step: a title token or the end-of-item marker.
///
/// The marker orders before every token, so sequence comparison agrees with
/// plain lexicographic comparison of the item token lists.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    EndOfItem,
    Token(String),
}

impl Symbol {
    pub fn token(t: impl Into<String>) -> Self {
        Symbol::Token(t.into())
    }

    pub fn as_token(&self) -> Option<&str> {
        match self {
            Symbol::Token(t) => Some(t),
            Symbol::EndOfItem => None,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Token(t) => f.write_str(t),
            Symbol::EndOfItem => f.write_str("</item>"),
        }
    }
}

/// Splits titles into tokens.
pub trait Tokenizer {
    fn tokenize(&self, title: &str) -> Option<Vec<String>>;
}

/// Lowercase + whitespace split. The catalog default.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, title: &str) -> Option<Vec<String>> {
        let tokens: Vec<String> = title.split_whitespace().map(str::to_lowercase).collect();
        (!tokens.is_empty()).then_some(tokens)
    }
}

/// Tokenizes with the default tokenizer; empty titles are rejected.
pub fn tokenize(title: &str) -> Result<Vec<String>> {
    WhitespaceTokenizer
        .tokenize(title)
        .ok_or_else(|| Error::InvalidItem {
            id: String::new(),
            reason: format!("title {title:?} is empty after trimming"),
        })
}

/// What to do when two items produce the same token sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionPolicy {
    #[default]
    Reject,
    /// Later items get a `#2`, `#3`, ... suffix token.
    Suffix,
}

/// One row of a catalog file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawItem {
    pub id: String,
    pub title: String,
    pub category: String,
}

impl RawItem {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        category: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            category: category.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub id: String,
    pub title: String,
    pub category: String,
    /// Title tokens, without the end-of-item marker.
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct TrieNode {
    pub children: BTreeMap<String, NodeId>,
    /// Item whose end-of-item marker leads out of this node.
    pub terminal_item: Option<usize>,
    /// Indices of every item at or below this node, ascending.
    pub subtree_items: Vec<usize>,
    pub parent: Option<NodeId>,
    pub depth: usize,
}

impl TrieNode {
    /// Number of legal continuations, counting the end-of-item marker.
    pub fn branching(&self) -> usize {
        self.children.len() + usize::from(self.terminal_item.is_some())
    }
}

/// Per-position ghost mask of one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GhostAnalysis {
    pub mask: Vec<bool>,
    pub raw_length: usize,
    pub effective_length: usize,
}

impl GhostAnalysis {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        let ghosts = mask.iter().filter(|&&g| g).count();
        Self {
            raw_length: mask.len(),
            effective_length: mask.len() - ghosts,
            mask,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanVariance {
    pub mean: f64,
    pub variance: f64,
}

impl MeanVariance {
    /// Population mean and variance.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, variance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthStats {
    pub raw: MeanVariance,
    pub effective: MeanVariance,
}

/// The item generation space.
#[derive(Debug, Clone)]
pub struct Catalog {
    items: Vec<Item>,
    index: HashMap<String, usize>,
    nodes: Vec<TrieNode>,
    categories: BTreeSet<String>,
    max_item_len: usize,
}

pub const ROOT: NodeId = 0;

impl Catalog {
    pub fn build(raw: &[RawItem]) -> Result<Self> {
        Self::build_with(raw, &WhitespaceTokenizer, CollisionPolicy::Reject)
    }

    pub fn build_with(
        raw: &[RawItem],
        tokenizer: &dyn Tokenizer,
        policy: CollisionPolicy,
    ) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let mut index = HashMap::with_capacity(raw.len());
        let mut items = Vec::with_capacity(raw.len());
        for (i, r) in raw.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            let tokens = tokenizer
                .tokenize(&r.title)
                .ok_or_else(|| Error::InvalidItem {
                    id: r.id.clone(),
                    reason: "title is empty after trimming".into(),
                })?;
            items.push(Item {
                id: r.id.clone(),
                title: r.title.clone(),
                category: r.category.clone(),
                tokens,
            });
        }
        resolve_collisions(&mut items, policy)?;

        let mut nodes = vec![TrieNode::default()];
        for (idx, item) in items.iter().enumerate() {
            let mut node = ROOT;
            nodes[node].subtree_items.push(idx);
            for tok in &item.tokens {
                node = match nodes[node].children.get(tok) {
                    Some(&next) => next,
                    None => {
                        let next = nodes.len();
                        let depth = nodes[node].depth + 1;
                        nodes.push(TrieNode {
                            parent: Some(node),
                            depth,
                            ..TrieNode::default()
                        });
                        nodes[node].children.insert(tok.clone(), next);
                        next
                    }
                };
                nodes[node].subtree_items.push(idx);
            }
            debug_assert!(nodes[node].terminal_item.is_none());
            nodes[node].terminal_item = Some(idx);
        }

        let categories = items.iter().map(|i| i.category.clone()).collect();
        let max_item_len = items.iter().map(|i| i.tokens.len()).max().unwrap_or(0);
        Ok(Self {
            items,
            index,
            nodes,
            categories,
            max_item_len,
        })
    }

    /// Loads a JSON Lines catalog (`id`, `title`, `category` per line).
    pub fn from_jsonl(path: impl AsRef<Path>, policy: CollisionPolicy) -> Result<Self> {
        let rows: Vec<RawItem> = jsonl::read(path.as_ref())?
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        Self::build_with(&rows, &WhitespaceTokenizer, policy)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<RawItem> = self
            .items
            .iter()
            .map(|i| RawItem::new(&i.id, &i.title, &i.category))
            .collect();
        jsonl::write(path.as_ref(), &rows)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, idx: usize) -> &Item {
        &self.items[idx]
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn item_by_id(&self, id: &str) -> Result<&Item> {
        self.item_index(id)
            .map(|i| &self.items[i])
            .ok_or_else(|| Error::UnknownItem(id.to_string()))
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    pub fn nodes(&self) -> &[TrieNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TrieNode {
        &self.nodes[id]
    }

    pub fn max_item_len(&self) -> usize {
        self.max_item_len
    }

    /// Largest number of legal continuations at any node.
    pub fn max_branching(&self) -> usize {
        self.nodes
            .iter()
            .map(TrieNode::branching)
            .max()
            .unwrap_or(0)
    }

    pub fn child(&self, node: NodeId, token: &str) -> Option<NodeId> {
        self.nodes[node].children.get(token).copied()
    }

    /// Node reached by `prefix`, or `None` if the prefix leaves the trie.
    pub fn walk<S: AsRef<str>>(&self, prefix: &[S]) -> Option<NodeId> {
        prefix
            .iter()
            .try_fold(ROOT, |node, tok| self.child(node, tok.as_ref()))
    }

    /// Legal continuations at `node` in symbol order (end-of-item first).
    pub fn continuations(&self, node: NodeId) -> impl Iterator<Item = Symbol> + '_ {
        let n = &self.nodes[node];
        n.terminal_item
            .map(|_| Symbol::EndOfItem)
            .into_iter()
            .chain(n.children.keys().map(|k| Symbol::Token(k.clone())))
    }

    /// Item indices reachable from `node` through `sym`.
    pub fn items_after(&self, node: NodeId, sym: &Symbol) -> &[usize] {
        let n = &self.nodes[node];
        match sym {
            Symbol::EndOfItem => n.terminal_item.as_slice(),
            Symbol::Token(t) => n
                .children
                .get(t)
                .map(|&c| self.nodes[c].subtree_items.as_slice())
                .unwrap_or(&[]),
        }
    }

    /// Ids of the items whose token sequence starts with `prefix`.
    pub fn items_with_prefix<S: AsRef<str>>(&self, prefix: &[S]) -> BTreeSet<&str> {
        self.walk(prefix)
            .map(|n| {
                self.nodes[n]
                    .subtree_items
                    .iter()
                    .map(|&i| self.items[i].id.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Structural ghost mask: position `j` is a ghost when the node reached
    /// by the first `j` tokens has exactly one legal continuation.
    pub fn ghost_positions(&self, item_id: &str) -> Result<GhostAnalysis> {
        let idx = self
            .item_index(item_id)
            .ok_or_else(|| Error::UnknownItem(item_id.to_string()))?;
        Ok(self.ghost_positions_of(idx))
    }

    pub fn ghost_positions_of(&self, idx: usize) -> GhostAnalysis {
        let mut node = ROOT;
        let mut mask = Vec::with_capacity(self.items[idx].tokens.len());
        for tok in &self.items[idx].tokens {
            mask.push(self.nodes[node].branching() == 1);
            node = self.nodes[node].children[tok];
        }
        GhostAnalysis::from_mask(mask)
    }

    pub fn length_stats(&self) -> LengthStats {
        let analyses: Vec<GhostAnalysis> = (0..self.len())
            .map(|i| self.ghost_positions_of(i))
            .collect();
        LengthStats {
            raw: MeanVariance::of(analyses.iter().map(|g| g.raw_length as f64)),
            effective: MeanVariance::of(analyses.iter().map(|g| g.effective_length as f64)),
        }
    }

    /// SHA-256 over the item rows, in catalog order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for item in &self.items {
            h.update(item.id.as_bytes());
            h.update([0x1f]);
            h.update(item.tokens.join(" ").as_bytes());
            h.update([0x1f]);
            h.update(item.category.as_bytes());
            h.update([0x1e]);
        }
        hex::encode(h.finalize())
    }
}

fn resolve_collisions(items: &mut [Item], policy: CollisionPolicy) -> Result<()> {
    let mut groups: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        groups.entry(item.tokens.clone()).or_default().push(i);
    }
    let colliding: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
    if colliding.is_empty() {
        return Ok(());
    }
    match policy {
        CollisionPolicy::Reject => {
            let mut ids: Vec<String> = colliding[0].iter().map(|&i| items[i].id.clone()).collect();
            ids.sort();
            Err(Error::TitleCollision(ids))
        }
        CollisionPolicy::Suffix => {
            let mut taken: BTreeSet<Vec<String>> = items.iter().map(|i| i.tokens.clone()).collect();
            for group in colliding {
                for &i in &group[1..] {
                    let mut n = 2;
                    let tokens = loop {
                        let mut t = items[i].tokens.clone();
                        t.push(format!("#{n}"));
                        if !taken.contains(&t) {
                            break t;
                        }
                        n += 1;
                    };
                    taken.insert(tokens.clone());
                    items[i].tokens = tokens;
                }
            }
            Ok(())
        }
    }
}
