//! Accuracy and homogeneity metrics for recommendation lists.
//!
//! Accuracy follows the next-item protocol with a single relevant item per
//! user. Homogeneity is measured by smoothed sentence BLEU over the leading
//! title tokens, the Shannon entropy of recommended categories, and how much
//! the list repeats the user's history.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};

/// 1 if `target` is among the first `k` recommendations.
pub fn hr_at_k(rec: &[usize], target: usize, k: usize) -> f64 {
    if rec.iter().take(k).any(|&i| i == target) {
        1.0
    } else {
        0.0
    }
}

/// `1 / log2(rank + 1)` for a 1-based rank within the first `k`, else 0.
pub fn ndcg_at_k(rec: &[usize], target: usize, k: usize) -> f64 {
    rec.iter()
        .take(k)
        .position(|&i| i == target)
        .map_or(0.0, |pos| 1.0 / ((pos + 2) as f64).log2())
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        let key: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU with add-one smoothing on every n-gram precision.
///
/// Orders run up to `min(max_n, hyp.len())`. Counts are clipped by the
/// maximum count over references; the brevity penalty uses the reference
/// length closest to the hypothesis (shorter on ties).
pub fn sentence_bleu<S: AsRef<str>>(hyp: &[S], refs: &[&[S]], max_n: usize) -> f64 {
    if hyp.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let order = max_n.min(hyp.len());
    let mut log_sum = 0.0;
    for n in 1..=order {
        let hyp_counts = ngram_counts(hyp, n);
        let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
        let matched: usize = hyp_counts
            .iter()
            .map(|(g, &c)| {
                let max_ref = ref_counts
                    .iter()
                    .map(|rc| rc.get(g).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                c.min(max_ref)
            })
            .sum();
        let total = hyp.len() + 1 - n;
        log_sum += ((matched + 1) as f64 / (total + 1) as f64).ln();
    }
    let c = hyp.len() as f64;
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(hyp.len()), len))
        .unwrap_or(0) as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / order as f64).exp()
}

fn leading_tokens(catalog: &Catalog, item: usize, first_m: usize) -> &[String] {
    let t = &catalog.item(item).tokens;
    &t[..t.len().min(first_m)]
}

/// Mean BLEU over ordered pairs of distinct list positions; `None` for fewer
/// than two recommendations.
pub fn pairwise_bleu(
    rec: &[usize],
    catalog: &Catalog,
    first_m: usize,
    max_n: usize,
) -> Option<f64> {
    if rec.len() < 2 {
        return None;
    }
    let heads: Vec<&[String]> = rec
        .iter()
        .map(|&i| leading_tokens(catalog, i, first_m))
        .collect();
    let mut sum = 0.0;
    for (i, hyp) in heads.iter().enumerate() {
        for (j, reference) in heads.iter().enumerate() {
            if i != j {
                sum += sentence_bleu(hyp, &[*reference], max_n);
            }
        }
    }
    Some(sum / (rec.len() * (rec.len() - 1)) as f64)
}

/// Shannon entropy, in bits, of the recommended categories.
pub fn category_entropy(rec: &[usize], catalog: &Catalog) -> f64 {
    let mut hist: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in rec {
        *hist.entry(catalog.item(i).category.as_str()).or_insert(0) += 1;
    }
    let n = rec.len() as f64;
    hist.values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRepetition {
    pub history_bleu: f64,
    pub category_repeat_ratio: f64,
}

/// Similarity of a list to the user's own history.
///
/// Each history item (first `first_m` tokens) is one BLEU reference, so a
/// recommendation that repeats a history title scores 1.
pub fn history_repetition(
    rec: &[usize],
    history: &[usize],
    catalog: &Catalog,
    first_m: usize,
    max_n: usize,
) -> Result<HistoryRepetition> {
    if history.is_empty() {
        return Err(Error::Dataset(
            "history repetition needs a non-empty history".into(),
        ));
    }
    if rec.is_empty() {
        return Ok(HistoryRepetition {
            history_bleu: 0.0,
            category_repeat_ratio: 0.0,
        });
    }
    let refs: Vec<&[String]> = history
        .iter()
        .map(|&i| leading_tokens(catalog, i, first_m))
        .collect();
    let cats: BTreeSet<&str> = history
        .iter()
        .map(|&i| catalog.item(i).category.as_str())
        .collect();
    let n = rec.len() as f64;
    let bleu = rec
        .iter()
        .map(|&i| sentence_bleu(leading_tokens(catalog, i, first_m), &refs, max_n))
        .sum::<f64>();
    let repeats = rec
        .iter()
        .filter(|&&i| cats.contains(catalog.item(i).category.as_str()))
        .count();
    Ok(HistoryRepetition {
        history_bleu: bleu / n,
        category_repeat_ratio: repeats as f64 / n,
    })
}

/// One evaluated test case.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub user: String,
    pub recommendations: Vec<usize>,
    pub target: usize,
    pub history: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub first_m: usize,
    pub max_n: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            first_m: 5,
            max_n: 4,
        }
    }
}

/// Per-user means, summed in ascending user order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cases: usize,
    pub hr_at_5: f64,
    pub hr_at_10: f64,
    pub ndcg_at_5: f64,
    pub ndcg_at_10: f64,
    pub pairwise_bleu: Option<f64>,
    pub category_entropy: Option<f64>,
    pub history_bleu: Option<f64>,
    pub category_repeat_ratio: Option<f64>,
    /// Share of recommended items inside the mask group.
    pub target_group_ratio: Option<f64>,
    /// HR@10 over cases whose target lies in the mask group.
    pub group_hr_at_10: Option<f64>,
    pub group_cases: usize,
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Aggregates records into a report. `group` enables the mask-group columns.
pub fn evaluate(
    records: &[EvalRecord],
    catalog: &Catalog,
    group: Option<&BTreeSet<usize>>,
    opts: MetricOptions,
) -> MetricsReport {
    let mut order: Vec<&EvalRecord> = records.iter().collect();
    order.sort_by(|a, b| a.user.cmp(&b.user));

    let (mut hr5, mut hr10, mut nd5, mut nd10) = (
        Mean::default(),
        Mean::default(),
        Mean::default(),
        Mean::default(),
    );
    let (mut pb, mut ent, mut hb, mut crr) = (
        Mean::default(),
        Mean::default(),
        Mean::default(),
        Mean::default(),
    );
    let (mut tgr, mut ghr) = (Mean::default(), Mean::default());
    for r in order {
        let rec = &r.recommendations;
        hr5.push(hr_at_k(rec, r.target, 5));
        hr10.push(hr_at_k(rec, r.target, 10));
        nd5.push(ndcg_at_k(rec, r.target, 5));
        nd10.push(ndcg_at_k(rec, r.target, 10));
        if let Some(b) = pairwise_bleu(rec, catalog, opts.first_m, opts.max_n) {
            pb.push(b);
        }
        if !rec.is_empty() {
            ent.push(category_entropy(rec, catalog));
        }
        if let Ok(h) = history_repetition(rec, &r.history, catalog, opts.first_m, opts.max_n) {
            hb.push(h.history_bleu);
            crr.push(h.category_repeat_ratio);
        }
        if let Some(g) = group {
            if !rec.is_empty() {
                let inside = rec.iter().filter(|i| g.contains(i)).count();
                tgr.push(inside as f64 / rec.len() as f64);
            }
            if g.contains(&r.target) {
                ghr.push(hr_at_k(rec, r.target, 10));
            }
        }
    }
    MetricsReport {
        cases: records.len(),
        hr_at_5: hr5.get().unwrap_or(0.0),
        hr_at_10: hr10.get().unwrap_or(0.0),
        ndcg_at_5: nd5.get().unwrap_or(0.0),
        ndcg_at_10: nd10.get().unwrap_or(0.0),
        pairwise_bleu: pb.get(),
        category_entropy: ent.get(),
        history_bleu: hb.get(),
        category_repeat_ratio: crr.get(),
        target_group_ratio: tgr.get(),
        group_hr_at_10: ghr.get(),
        group_cases: ghr.n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::RawItem;
    use proptest::prelude::*;

    fn catalog(rows: &[(&str, &str, &str)]) -> Catalog {
        let raw: Vec<RawItem> = rows
            .iter()
            .map(|(i, t, c)| RawItem::new(*i, *t, *c))
            .collect();
        Catalog::build(&raw).unwrap()
    }

    #[test]
    fn hit_ratio_examples() {
        let rec: Vec<usize> = (0..10).collect();
        assert_eq!(hr_at_k(&rec, 0, 5), 1.0);
        assert_eq!(hr_at_k(&rec, 5, 5), 0.0);
        assert_eq!(hr_at_k(&[], 0, 5), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let rec: Vec<usize> = (0..12).collect();
        assert_eq!(ndcg_at_k(&rec, 0, 10), 1.0);
        assert_eq!(ndcg_at_k(&rec, 2, 5), 0.5);
        assert_eq!(ndcg_at_k(&rec, 10, 10), 0.0);
        assert_eq!(ndcg_at_k(&[], 0, 10), 0.0);
    }

    #[test]
    fn bleu_hand_values() {
        let s = sentence_bleu(&["a", "b"], &[&["c", "d"][..]], 4);
        assert!((s - 0.40825).abs() < 1e-5);
        assert!((s - (1.0f64 / 6.0).sqrt()).abs() < 1e-12);
        assert_eq!(sentence_bleu(&["a", "b"], &[&["a", "b"][..]], 4), 1.0);
        // brevity penalty for a short hypothesis
        let s = sentence_bleu(&["a"], &[&["a", "b"][..]], 4);
        assert!((s - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn pairwise_bleu_examples() {
        let c = catalog(&[
            ("1", "red guitar amp", "m"),
            ("2", "a b", "m"),
            ("3", "c d", "m"),
        ]);
        assert_eq!(pairwise_bleu(&[0; 10], &c, 5, 4), Some(1.0));
        let v = pairwise_bleu(&[1, 2], &c, 5, 4).unwrap();
        assert!((v - 0.40825).abs() < 1e-5);
        assert_eq!(pairwise_bleu(&[1], &c, 5, 4), None);
    }

    #[test]
    fn entropy_examples() {
        let c = catalog(&[("1", "a", "x"), ("2", "b", "y"), ("3", "c", "z")]);
        assert_eq!(category_entropy(&[0; 10], &c), 0.0);
        let half: Vec<usize> = [0; 5].into_iter().chain([1; 5]).collect();
        assert_eq!(category_entropy(&half, &c), 1.0);
        let dyadic = [0, 0, 0, 0, 1, 1, 2, 2];
        assert_eq!(category_entropy(&dyadic, &c), 1.5);
    }

    #[test]
    fn history_repetition_examples() {
        let c = catalog(&[
            ("1", "blue drum kit", "drums"),
            ("2", "snare stand", "drums"),
            ("3", "violin bow", "strings"),
        ]);
        let r = history_repetition(&[0, 1], &[1], &c, 5, 4).unwrap();
        assert_eq!(r.category_repeat_ratio, 1.0);
        let r = history_repetition(&[2], &[0, 1], &c, 5, 4).unwrap();
        assert_eq!(r.category_repeat_ratio, 0.0);
        // "snare stand" repeats a history title exactly
        let r = history_repetition(&[1], &[0, 1], &c, 5, 4).unwrap();
        assert_eq!(r.history_bleu, 1.0);
        assert!(history_repetition(&[0], &[], &c, 5, 4).is_err());
    }

    #[test]
    fn report_aggregates_in_user_order() {
        let c = catalog(&[("1", "a", "x"), ("2", "b", "y"), ("3", "c", "y")]);
        let recs = vec![
            EvalRecord {
                user: "u2".into(),
                recommendations: vec![1, 2],
                target: 2,
                history: vec![0],
            },
            EvalRecord {
                user: "u1".into(),
                recommendations: vec![0, 1],
                target: 0,
                history: vec![0],
            },
        ];
        let g = BTreeSet::from([1, 2]);
        let rep = evaluate(&recs, &c, Some(&g), MetricOptions::default());
        assert_eq!(rep.cases, 2);
        assert_eq!(rep.hr_at_5, 1.0);
        assert!((rep.ndcg_at_10 - (1.0 + 1.0 / 3f64.log2()) / 2.0).abs() < 1e-12);
        assert_eq!(rep.category_entropy, Some(0.5));
        assert_eq!(rep.category_repeat_ratio, Some(0.25));
        assert_eq!(rep.target_group_ratio, Some(0.75));
        assert_eq!(rep.group_hr_at_10, Some(1.0));
        assert_eq!(rep.group_cases, 1);
        let mut reversed = recs.clone();
        reversed.reverse();
        assert_eq!(
            evaluate(&reversed, &c, Some(&g), MetricOptions::default()),
            rep
        );
    }

    fn toks() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 1..6)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn bleu_is_bounded_and_one_only_on_identity(h in toks(), r in toks()) {
            let s = sentence_bleu(&h, &[&r[..]], 4);
            prop_assert!((0.0..=1.0).contains(&s));
            if h == r {
                prop_assert_eq!(s, 1.0);
            }
            let back = sentence_bleu(&r, &[&h[..]], 4);
            if h != r {
                prop_assert!(s < 1.0 || back < 1.0);
            }
        }

        #[test]
        fn entropy_bounded_by_support(cats in prop::collection::vec(0usize..5, 1..20)) {
            let rows: Vec<(String, String, String)> = (0..5)
                .map(|i| (format!("i{i}"), format!("t{i}"), format!("c{i}")))
                .collect();
            let raw: Vec<RawItem> = rows.iter().map(|(a, b, c)| RawItem::new(a, b, c)).collect();
            let c = Catalog::build(&raw).unwrap();
            let distinct = cats.iter().collect::<BTreeSet<_>>().len();
            let e = category_entropy(&cats, &c);
            prop_assert!(e >= 0.0);
            prop_assert!(e <= (distinct.min(cats.len()) as f64).log2() + 1e-12);
        }

        #[test]
        fn hr_and_ndcg_agree_at_extremes(n in 1usize..20, k in 1usize..15) {
            let rec: Vec<usize> = (0..n).collect();
            prop_assert_eq!(hr_at_k(&rec, 0, k), 1.0);
            prop_assert_eq!(ndcg_at_k(&rec, 0, k), 1.0);
            prop_assert_eq!(hr_at_k(&rec, n, k), 0.0);
            prop_assert_eq!(ndcg_at_k(&rec, n, k), 0.0);
        }
    }
}
