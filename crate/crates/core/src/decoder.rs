//! Catalog-constrained beam search.
//!
//! Three strategies share one engine:
//!
//! * `baseline` accumulates language-model log-probabilities and divides the
//!   finished score by `length^lambda`;
//! * `baseline-temp` is the same with a temperature-scaled scorer;
//! * `d3` drops length normalization and ranks hypotheses by
//!   `alpha * lm + (1 - alpha) * tf`, where `tf` accumulates the assistant's
//!   prefix-mass log-ratios.
//!
//! [`brute_force_rank`] scores every item of a small catalog exactly and is
//! the reference the beam search is checked against.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assistant::{accumulate_tf, AssistantDistribution, PrefixMasses};
use crate::catalog::{Catalog, NodeId, Symbol, ROOT};
use crate::error::{Error, Result};
use crate::scorer::{distribution_at, DecodingContext, Scorer, ScorerConfig, TokenDistribution};

/// Largest catalog [`brute_force_rank`] will enumerate.
pub const ENUMERATION_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Baseline,
    BaselineTemp,
    D3,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Baseline => "baseline",
            Strategy::BaselineTemp => "baseline-temp",
            Strategy::D3 => "d3",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Strategy::Baseline),
            "baseline-temp" | "baseline_temp" => Ok(Strategy::BaselineTemp),
            "d3" => Ok(Strategy::D3),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// When the assistant score enters the search under `d3`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Beam selection uses the fused score at every step.
    #[default]
    Step,
    /// Beam selection uses the language model alone; fusion only re-ranks
    /// finished hypotheses.
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub beam_width: usize,
    /// Children kept per hypothesis before pooling.
    pub expansion_width: usize,
    /// Weight of the language model in the fused score (`d3` only).
    pub alpha: f64,
    /// Exponent of the final length normalization (baselines only).
    pub length_penalty: f64,
    pub temperature: f64,
    pub copy_bonus: f64,
    /// Defaults to the longest item length plus one.
    pub max_steps: Option<usize>,
    /// Defaults to twice the beam width.
    pub finished_target: Option<usize>,
    pub fusion: FusionMode,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Baseline,
            beam_width: 10,
            expansion_width: 10,
            alpha: 1.0,
            length_penalty: 1.0,
            temperature: 1.0,
            copy_bonus: 2.0,
            max_steps: None,
            finished_target: None,
            fusion: FusionMode::Step,
        }
    }
}

impl DecodeConfig {
    pub fn baseline(length_penalty: f64) -> Self {
        Self {
            strategy: Strategy::Baseline,
            length_penalty,
            ..Self::default()
        }
    }

    pub fn baseline_temp(length_penalty: f64, temperature: f64) -> Self {
        Self {
            strategy: Strategy::BaselineTemp,
            length_penalty,
            temperature,
            ..Self::default()
        }
    }

    pub fn d3(alpha: f64) -> Self {
        Self {
            strategy: Strategy::D3,
            alpha,
            length_penalty: 0.0,
            ..Self::default()
        }
    }

    pub fn with_beam(mut self, beam_width: usize, expansion_width: usize) -> Self {
        self.beam_width = beam_width;
        self.expansion_width = expansion_width;
        self
    }

    /// Copy with the per-strategy forced values applied: `d3` has no length
    /// penalty, baselines have `alpha = 1`, and plain `baseline` runs at
    /// temperature 1.
    pub fn effective(&self) -> Self {
        let mut c = self.clone();
        match c.strategy {
            Strategy::D3 => c.length_penalty = 0.0,
            Strategy::BaselineTemp => c.alpha = 1.0,
            Strategy::Baseline => {
                c.alpha = 1.0;
                c.temperature = 1.0;
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.beam_width == 0 {
            return fail("beam width must be at least 1".into());
        }
        if self.expansion_width == 0 {
            return fail("expansion width must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.length_penalty >= 0.0 && self.length_penalty.is_finite()) {
            return fail(format!(
                "length penalty must be >= 0, got {}",
                self.length_penalty
            ));
        }
        if self.max_steps == Some(0) {
            return fail("max_steps must be positive".into());
        }
        if self.finished_target == Some(0) {
            return fail("finished_target must be positive".into());
        }
        self.scorer_config().validate()
    }

    pub fn scorer_config(&self) -> ScorerConfig {
        ScorerConfig {
            temperature: self.temperature,
            copy_bonus: self.copy_bonus,
        }
    }

    fn uses_assistant(&self) -> bool {
        self.strategy == Strategy::D3 && self.alpha < 1.0
    }
}

/// A partial or finished item path.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Title tokens so far; the end-of-item marker is tracked by `finished`.
    pub tokens: Vec<String>,
    pub node: NodeId,
    pub lm_score: f64,
    pub tf_score: f64,
    pub finished: bool,
    pub item: Option<usize>,
}

impl Hypothesis {
    pub fn root() -> Self {
        Self {
            tokens: Vec::new(),
            node: ROOT,
            lm_score: 0.0,
            tf_score: 0.0,
            finished: false,
            item: None,
        }
    }

    /// Length used for normalization; the end-of-item marker is not counted.
    pub fn length(&self) -> usize {
        self.tokens.len()
    }

    fn extend(&self, catalog: &Catalog, sym: &Symbol, lm_step: f64, tf_step: f64) -> Self {
        let mut next = Self {
            tokens: self.tokens.clone(),
            node: self.node,
            lm_score: self.lm_score + lm_step,
            tf_score: accumulate_tf(self.tf_score, tf_step),
            finished: false,
            item: None,
        };
        match sym {
            Symbol::EndOfItem => {
                next.finished = true;
                next.item = catalog.node(self.node).terminal_item;
            }
            Symbol::Token(t) => {
                next.node = catalog.node(self.node).children[t];
                next.tokens.push(t.clone());
            }
        }
        next
    }

    /// Lexicographic order of the symbol paths.
    fn path_cmp(&self, other: &Self) -> Ordering {
        self.tokens
            .cmp(&other.tokens)
            .then(self.finished.cmp(&other.finished))
    }
}

fn fuse(alpha: f64, lm: f64, tf: f64) -> f64 {
    // 0 * -inf counts as 0 so alpha = 1 ignores the assistant entirely.
    let a = if alpha == 0.0 { 0.0 } else { alpha * lm };
    let b = if alpha == 1.0 {
        0.0
    } else {
        (1.0 - alpha) * tf
    };
    a + b
}

/// Final ranking score of a hypothesis.
pub fn combined_score(h: &Hypothesis, config: &DecodeConfig) -> f64 {
    let c = config.effective();
    match c.strategy {
        Strategy::D3 => fuse(c.alpha, h.lm_score, h.tf_score),
        Strategy::Baseline | Strategy::BaselineTemp => {
            if h.finished && c.length_penalty != 0.0 {
                h.lm_score / (h.length() as f64).powf(c.length_penalty)
            } else {
                h.lm_score
            }
        }
    }
}

fn selection_score(h: &Hypothesis, config: &DecodeConfig) -> f64 {
    match (config.strategy, config.fusion) {
        (Strategy::D3, FusionMode::Step) => fuse(config.alpha, h.lm_score, h.tf_score),
        _ => h.lm_score,
    }
}

fn rank_by<F: Fn(&Hypothesis) -> f64>(hyps: &mut [Hypothesis], score: F) {
    hyps.sort_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| a.path_cmp(b)));
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub item: usize,
    pub id: String,
    pub score: f64,
}

/// Ranked recommendations, best first.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RecommendationList {
    pub entries: Vec<Recommendation>,
}

impl RecommendationList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> Vec<usize> {
        self.entries.iter().map(|r| r.item).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|r| r.id.as_str()).collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|r| r.score).collect()
    }

    fn from_ranked(catalog: &Catalog, ranked: &[Hypothesis], config: &DecodeConfig) -> Self {
        let entries = ranked
            .iter()
            .filter_map(|h| {
                let item = h.item?;
                Some(Recommendation {
                    item,
                    id: catalog.item(item).id.clone(),
                    score: combined_score(h, config),
                })
            })
            .collect();
        Self { entries }
    }
}

struct Context<'a> {
    catalog: &'a Catalog,
    scorer: &'a dyn Scorer,
    ctx: &'a DecodingContext,
    masses: Option<PrefixMasses>,
    scorer_config: ScorerConfig,
}

impl Context<'_> {
    fn new<'a>(
        catalog: &'a Catalog,
        scorer: &'a dyn Scorer,
        ctx: &'a DecodingContext,
        assistant: Option<&AssistantDistribution>,
        config: &DecodeConfig,
    ) -> Result<Context<'a>> {
        config.validate()?;
        let masses = if config.uses_assistant() {
            let dist = assistant.ok_or_else(|| {
                Error::Config("d3 with alpha < 1 needs an assistant distribution".into())
            })?;
            if dist.len() != catalog.len() {
                return Err(Error::Assistant(format!(
                    "distribution covers {} items, catalog has {}",
                    dist.len(),
                    catalog.len()
                )));
            }
            Some(PrefixMasses::new(catalog, dist))
        } else {
            None
        };
        Ok(Context {
            catalog,
            scorer,
            ctx,
            masses,
            scorer_config: config.scorer_config(),
        })
    }

    fn distribution(&self, h: &Hypothesis) -> Result<TokenDistribution> {
        distribution_at(
            self.scorer,
            self.catalog,
            self.ctx,
            h.node,
            &h.tokens,
            &self.scorer_config,
        )
    }

    fn tf_step(&self, node: NodeId, sym: &Symbol) -> f64 {
        self.masses
            .as_ref()
            .map_or(0.0, |m| m.logratio(self.catalog, node, sym).value)
    }
}

/// Beam search over the catalog trie.
pub fn decode(
    catalog: &Catalog,
    scorer: &dyn Scorer,
    context: &DecodingContext,
    assistant: Option<&AssistantDistribution>,
    config: &DecodeConfig,
) -> Result<RecommendationList> {
    let config = config.effective();
    let env = Context::new(catalog, scorer, context, assistant, &config)?;
    let beam = config.beam_width;
    let max_steps = config.max_steps.unwrap_or(catalog.max_item_len() + 1);
    let target = config.finished_target.unwrap_or(2 * beam);

    let mut live = vec![Hypothesis::root()];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_steps {
        if live.is_empty() || finished.len() >= target {
            break;
        }
        let mut pool = Vec::with_capacity(live.len() * config.expansion_width);
        for h in &live {
            let dist = env.distribution(h)?;
            let mut children: Vec<Hypothesis> = dist
                .iter()
                .map(|(sym, lp)| h.extend(catalog, sym, lp, env.tf_step(h.node, sym)))
                .collect();
            rank_by(&mut children, |c| selection_score(c, &config));
            children.truncate(config.expansion_width);
            pool.extend(children);
        }
        let expanded = pool.len();
        pool.retain(|h| selection_score(h, &config) > f64::NEG_INFINITY);
        if pool.is_empty() && expanded > 0 && finished.is_empty() {
            return Err(Error::Decode(format!(
                "every one of {expanded} candidates for context {:?} scored -inf",
                context.id
            )));
        }
        rank_by(&mut pool, |h| selection_score(h, &config));
        pool.truncate(beam);
        live.clear();
        for h in pool {
            if h.finished {
                finished.push(h);
            } else {
                live.push(h);
            }
        }
    }
    if finished.is_empty() {
        return Err(Error::Decode(format!(
            "no item finished within {max_steps} steps for context {:?}",
            context.id
        )));
    }
    finished.retain(|h| combined_score(h, &config) > f64::NEG_INFINITY);
    rank_by(&mut finished, |h| combined_score(h, &config));
    finished.truncate(beam);
    Ok(RecommendationList::from_ranked(catalog, &finished, &config))
}

/// Scores every catalog item exactly and ranks them with the same order as
/// [`decode`]. Items with a `-inf` score are listed last.
pub fn brute_force_rank(
    catalog: &Catalog,
    scorer: &dyn Scorer,
    context: &DecodingContext,
    assistant: Option<&AssistantDistribution>,
    config: &DecodeConfig,
) -> Result<RecommendationList> {
    if catalog.len() > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            size: catalog.len(),
            limit: ENUMERATION_LIMIT,
        });
    }
    let config = config.effective();
    let env = Context::new(catalog, scorer, context, assistant, &config)?;
    let mut cache: HashMap<NodeId, TokenDistribution> = HashMap::new();
    let mut scored = Vec::with_capacity(catalog.len());
    for item in catalog.items() {
        let path = item
            .tokens
            .iter()
            .map(|t| Symbol::Token(t.clone()))
            .chain(std::iter::once(Symbol::EndOfItem));
        let mut h = Hypothesis::root();
        for sym in path {
            let dist = match cache.entry(h.node) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => e.insert(env.distribution(&h)?),
            };
            let lp = dist.get(&sym).ok_or_else(|| {
                Error::Scorer(format!("no probability for {sym} after {:?}", h.tokens))
            })?;
            h = h.extend(catalog, &sym, lp, env.tf_step(h.node, &sym));
        }
        scored.push(h);
    }
    rank_by(&mut scored, |h| combined_score(h, &config));
    Ok(RecommendationList::from_ranked(catalog, &scored, &config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assistant::apply_group_mask;
    use crate::catalog::tests::three_items;
    use crate::catalog::RawItem;
    use crate::scorer::{SyntheticCopyLm, TableEntry, TableScorer};
    use std::collections::BTreeSet;

    fn hyp(lm: f64, tf: f64, len: usize, finished: bool) -> Hypothesis {
        Hypothesis {
            tokens: (0..len).map(|i| format!("t{i}")).collect(),
            node: ROOT,
            lm_score: lm,
            tf_score: tf,
            finished,
            item: None,
        }
    }

    #[test]
    fn combined_score_examples() {
        assert_eq!(
            combined_score(&hyp(-0.9, -5.0, 2, true), &DecodeConfig::d3(1.0)),
            -0.9
        );
        let s = combined_score(&hyp(-0.9, -0.7, 2, true), &DecodeConfig::d3(0.5));
        assert!((s - (-0.8)).abs() < 1e-12);
        let s = combined_score(
            &hyp(0.4f64.ln(), 0.0, 3, true),
            &DecodeConfig::baseline(1.0),
        );
        assert!((s - (-0.30543)).abs() < 1e-5);
        // unfinished baseline hypotheses are not normalized
        let s = combined_score(
            &hyp(0.4f64.ln(), 0.0, 3, false),
            &DecodeConfig::baseline(1.0),
        );
        assert_eq!(s, 0.4f64.ln());
        // alpha = 1 ignores an -inf assistant score
        let s = combined_score(
            &hyp(-0.5, f64::NEG_INFINITY, 1, true),
            &DecodeConfig::d3(1.0),
        );
        assert_eq!(s, -0.5);
    }

    #[test]
    fn forced_fields() {
        let c = DecodeConfig {
            strategy: Strategy::D3,
            length_penalty: 2.0,
            ..DecodeConfig::default()
        }
        .effective();
        assert_eq!(c.length_penalty, 0.0);
        let c = DecodeConfig {
            alpha: 0.3,
            temperature: 3.0,
            ..DecodeConfig::baseline(1.0)
        }
        .effective();
        assert_eq!((c.alpha, c.temperature), (1.0, 1.0));
        let c = DecodeConfig {
            alpha: 0.3,
            ..DecodeConfig::baseline_temp(1.0, 3.0)
        }
        .effective();
        assert_eq!((c.alpha, c.temperature), (1.0, 3.0));
    }

    #[test]
    fn config_validation() {
        assert!(DecodeConfig::d3(1.5).validate().is_err());
        assert!(DecodeConfig::default().with_beam(0, 1).validate().is_err());
        assert!(DecodeConfig::default().with_beam(1, 0).validate().is_err());
        assert!(DecodeConfig::baseline(-1.0).validate().is_err());
        assert!(DecodeConfig::baseline_temp(1.0, 0.0).validate().is_err());
        assert!("d4".parse::<Strategy>().is_err());
        assert_eq!(
            "baseline-temp".parse::<Strategy>().unwrap(),
            Strategy::BaselineTemp
        );
    }

    #[test]
    fn uniform_table_returns_everything_in_exact_order() {
        let c = three_items();
        let ctx = DecodingContext::new("u", &c, vec![]);
        let cfg = DecodeConfig::d3(1.0).with_beam(3, 3);
        let out = decode(&c, &TableScorer::default(), &ctx, None, &cfg).unwrap();
        // guitar: 0.5; ps3, ps4: 0.5 * 1 * 0.5 each, tie broken on tokens
        assert_eq!(out.ids(), ["guitar", "ps3", "ps4"]);
        let expected = [0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()];
        for (s, e) in out.scores().iter().zip(expected) {
            assert!((s - e).abs() < 1e-12);
        }
        let bf = brute_force_rank(&c, &TableScorer::default(), &ctx, None, &cfg).unwrap();
        assert_eq!(out, bf);
    }

    #[test]
    fn greedy_matches_brute_force_argmax() {
        let c = three_items();
        let ctx = DecodingContext::from_ids("u", &c, &["ps4"]).unwrap();
        let cfg = DecodeConfig::baseline(0.0).with_beam(1, 1);
        let out = decode(&c, &SyntheticCopyLm, &ctx, None, &cfg).unwrap();
        let bf = brute_force_rank(&c, &SyntheticCopyLm, &ctx, None, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.entries[0], bf.entries[0]);
        assert_eq!(out.ids(), ["ps4"]);
    }

    #[test]
    fn masked_assistant_restricts_output() {
        let c = Catalog::build(&[
            RawItem::new("A", "x y", "c1"),
            RawItem::new("B", "x z", "c1"),
            RawItem::new("C", "w", "c2"),
        ])
        .unwrap();
        let d = AssistantDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let masked = apply_group_mask(&d, &BTreeSet::from([2])).unwrap();
        let ctx = DecodingContext::new("u", &c, vec![]);
        let cfg = DecodeConfig::d3(0.5).with_beam(3, 3);
        let out = decode(&c, &TableScorer::default(), &ctx, Some(&masked), &cfg).unwrap();
        assert_eq!(out.ids(), ["C"]);
    }

    #[test]
    fn all_neg_inf_is_an_error() {
        let c = three_items();
        let d = AssistantDistribution::new(vec![1.0, 0.0, 0.0]).unwrap();
        let zero = apply_group_mask(&d, &BTreeSet::from([2])).unwrap();
        let ctx = DecodingContext::new("u", &c, vec![]);
        let err = decode(
            &c,
            &SyntheticCopyLm,
            &ctx,
            Some(&zero),
            &DecodeConfig::d3(0.5),
        );
        assert!(matches!(err, Err(Error::Decode(_))));
    }

    #[test]
    fn d3_needs_an_assistant_below_alpha_one() {
        let c = three_items();
        let ctx = DecodingContext::new("u", &c, vec![]);
        assert!(decode(&c, &SyntheticCopyLm, &ctx, None, &DecodeConfig::d3(0.7)).is_err());
        assert!(decode(&c, &SyntheticCopyLm, &ctx, None, &DecodeConfig::d3(1.0)).is_ok());
    }

    #[test]
    fn step_limit_without_finish_is_an_error() {
        let c = three_items();
        let ctx = DecodingContext::new("u", &c, vec![]);
        let cfg = DecodeConfig {
            max_steps: Some(1),
            ..DecodeConfig::baseline(1.0)
        };
        assert!(matches!(
            decode(&c, &SyntheticCopyLm, &ctx, None, &cfg),
            Err(Error::Decode(_))
        ));
    }

    pub(crate) fn bias_instance() -> (Catalog, TableScorer) {
        let c = Catalog::build(&[
            RawItem::new("P", "a b c", "x"),
            RawItem::new("Q", "d", "x"),
            RawItem::new("R", "e", "x"),
        ])
        .unwrap();
        let t = TableScorer::from_entries([TableEntry {
            context: "u".into(),
            prefix: vec![],
            dist: [
                ("a".to_string(), 0.4),
                ("d".to_string(), 0.5),
                ("e".to_string(), 0.1),
            ]
            .into_iter()
            .collect(),
        }])
        .unwrap();
        (c, t)
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn length_normalization_amplifies_ghost_padded_items() {
        let (c, t) = bias_instance();
        let ctx = DecodingContext::new("u", &c, vec![]);
        let base = brute_force_rank(&c, &t, &ctx, None, &DecodeConfig::baseline(1.0)).unwrap();
        assert_eq!(base.ids()[..2], ["P", "Q"]);
        assert!((base.entries[0].score - (-0.30543)).abs() < 1e-5);
        assert!((base.entries[1].score - (-0.69315)).abs() < 1e-5);
        let d3 = brute_force_rank(&c, &t, &ctx, None, &DecodeConfig::d3(1.0)).unwrap();
        assert_eq!(d3.ids()[..2], ["Q", "P"]);
    }

    #[test]
    fn pure_assistant_ranking_follows_item_probabilities() {
        let c = Catalog::build(&[
            RawItem::new("A", "x y", "c1"),
            RawItem::new("B", "x z", "c1"),
            RawItem::new("C", "w", "c2"),
            RawItem::new("D", "w v", "c2"),
        ])
        .unwrap();
        let d = AssistantDistribution::new(vec![0.1, 0.4, 0.2, 0.3]).unwrap();
        let ctx = DecodingContext::from_ids("u", &c, &["A"]).unwrap();
        let out =
            brute_force_rank(&c, &SyntheticCopyLm, &ctx, Some(&d), &DecodeConfig::d3(0.0)).unwrap();
        assert_eq!(out.ids(), ["B", "D", "C", "A"]);
        for r in &out.entries {
            assert!((r.score - d.prob(r.item).ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn ghost_tokens_do_not_move_d3_scores() {
        let short =
            Catalog::build(&[RawItem::new("P", "a c", "x"), RawItem::new("Q", "d", "x")]).unwrap();
        let padded =
            Catalog::build(&[RawItem::new("P", "a b c", "x"), RawItem::new("Q", "d", "x")])
                .unwrap();
        let ctx_s = DecodingContext::new("u", &short, vec![]);
        let ctx_p = DecodingContext::new("u", &padded, vec![]);
        let d = AssistantDistribution::new(vec![0.6, 0.4]).unwrap();
        for cfg in [DecodeConfig::d3(1.0), DecodeConfig::d3(0.6)] {
            let a = brute_force_rank(&short, &SyntheticCopyLm, &ctx_s, Some(&d), &cfg).unwrap();
            let b = brute_force_rank(&padded, &SyntheticCopyLm, &ctx_p, Some(&d), &cfg).unwrap();
            assert_eq!(a, b);
        }
        // the baseline does move
        let cfg = DecodeConfig::baseline(1.0);
        let a = brute_force_rank(&short, &SyntheticCopyLm, &ctx_s, None, &cfg).unwrap();
        let b = brute_force_rank(&padded, &SyntheticCopyLm, &ctx_p, None, &cfg).unwrap();
        assert_ne!(a.scores(), b.scores());
    }

    #[test]
    fn brute_force_guard() {
        let raw: Vec<RawItem> = (0..=ENUMERATION_LIMIT)
            .map(|i| RawItem::new(format!("i{i}"), format!("item {i}"), "c"))
            .collect();
        let c = Catalog::build(&raw).unwrap();
        let ctx = DecodingContext::new("u", &c, vec![]);
        assert!(matches!(
            brute_force_rank(&c, &SyntheticCopyLm, &ctx, None, &DecodeConfig::default()),
            Err(Error::EnumerationGuard { .. })
        ));
    }

    #[test]
    fn final_fusion_mode_reranks_only() {
        let c = three_items();
        let ctx = DecodingContext::from_ids("u", &c, &["ps3"]).unwrap();
        let d = AssistantDistribution::new(vec![0.01, 0.01, 0.98]).unwrap();
        let step = DecodeConfig::d3(0.5).with_beam(1, 1);
        let fin = DecodeConfig {
            fusion: FusionMode::Final,
            ..step.clone()
        };
        let a = decode(&c, &SyntheticCopyLm, &ctx, Some(&d), &step).unwrap();
        let b = decode(&c, &SyntheticCopyLm, &ctx, Some(&d), &fin).unwrap();
        assert_eq!(a.ids(), ["guitar"]);
        assert_eq!(b.ids(), ["ps3"]);
    }
}
