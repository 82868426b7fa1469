//! Strategy-grid experiments over a dataset, reported as CSV + JSON.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::{ingest, UserRecord};
use super::split::{temporal_split, SplitConfig, TestCase};
use super::synth::{generate_synthetic, SyntheticSpec};
use crate::assistant::{
    apply_group_mask, category_group, AssistantKind, AssistantModel, TextFreeModel,
};
use crate::catalog::Catalog;
use crate::decoder::{decode, DecodeConfig, FusionMode, Strategy};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalRecord, MetricOptions, MetricsReport};
use crate::scorer::{DecodingContext, Scorer, SyntheticCopyLm, TableScorer};

/// Header of `results.csv`.
pub const CSV_COLUMNS: [&str; 18] = [
    "dataset",
    "strategy",
    "alpha",
    "lambda",
    "T",
    "B",
    "k",
    "hr@5",
    "hr@10",
    "ndcg@5",
    "ndcg@10",
    "pairwise_bleu",
    "category_entropy",
    "history_bleu",
    "category_repeat_ratio",
    "target_group_ratio",
    "seed",
    "config_hash",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files {
        catalog: PathBuf,
        interactions: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScorerSpec {
    SyntheticCopy {
        #[serde(default = "default_copy_bonus")]
        copy_bonus: f64,
    },
    Table {
        path: PathBuf,
    },
}

fn default_copy_bonus() -> f64 {
    2.0
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec::SyntheticCopy {
            copy_bonus: default_copy_bonus(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Valid,
    #[default]
    Test,
}

/// A number or a list of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values {
    One(f64),
    Many(Vec<f64>),
}

impl Values {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            Values::One(v) => vec![*v],
            Values::Many(v) => v.clone(),
        }
    }
}

/// One strategy with its parameter values; lists expand to a product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Values>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Values>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp: Option<Values>,
    /// Restrict the assistant to `mask_category`.
    #[serde(default)]
    pub mask: bool,
    #[serde(default)]
    pub fusion: FusionMode,
}

impl GridCell {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            alpha: None,
            lambda: None,
            temp: None,
            mask: false,
            fusion: FusionMode::Step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub data: DataSource,
    pub split: SplitConfig,
    pub eval_split: EvalSplit,
    pub scorer: ScorerSpec,
    pub assistant: AssistantKind,
    pub beam: usize,
    pub expand_k: usize,
    /// Length of the evaluated recommendation list.
    pub topk: usize,
    pub seed: u64,
    pub mask_category: Option<String>,
    /// Evaluate only the first N cases (ascending user order).
    pub max_cases: Option<usize>,
    pub grid: Vec<GridCell>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "synthetic".into(),
            data: DataSource::Synthetic(SyntheticSpec::default()),
            split: SplitConfig::default(),
            eval_split: EvalSplit::Test,
            scorer: ScorerSpec::default(),
            assistant: AssistantKind::Markov,
            beam: 10,
            expand_k: 10,
            topk: 10,
            seed: 0,
            mask_category: None,
            max_cases: None,
            grid: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    /// Expands the grid into concrete decode configurations.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        if self.grid.is_empty() {
            return Err(Error::Config("strategy grid is empty".into()));
        }
        let scorer_bonus = match &self.scorer {
            ScorerSpec::SyntheticCopy { copy_bonus } => *copy_bonus,
            ScorerSpec::Table { .. } => 0.0,
        };
        let mut out = Vec::new();
        for cell in &self.grid {
            if cell.mask && self.mask_category.is_none() {
                return Err(Error::Config(
                    "masked grid cell without mask_category".into(),
                ));
            }
            let pick =
                |v: &Option<Values>, default: f64| v.as_ref().map_or(vec![default], Values::to_vec);
            let default_alpha = if cell.strategy == Strategy::D3 {
                0.7
            } else {
                1.0
            };
            for &alpha in &pick(&cell.alpha, default_alpha) {
                for &lambda in &pick(&cell.lambda, 1.0) {
                    for &temp in &pick(&cell.temp, 1.0) {
                        let decode = DecodeConfig {
                            strategy: cell.strategy,
                            beam_width: self.beam,
                            expansion_width: self.expand_k,
                            alpha,
                            length_penalty: lambda,
                            temperature: temp,
                            copy_bonus: scorer_bonus,
                            fusion: cell.fusion,
                            ..DecodeConfig::default()
                        }
                        .effective();
                        decode.validate()?;
                        out.push(GridPoint {
                            decode,
                            mask: cell.mask,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub decode: DecodeConfig,
    pub mask: bool,
}

impl GridPoint {
    pub fn label(&self, mask_category: Option<&str>) -> String {
        match (self.mask, mask_category) {
            (true, Some(cat)) => format!("{}[mask={cat}]", self.decode.strategy),
            _ => self.decode.strategy.to_string(),
        }
    }
}

/// Everything a grid point needs: data, split, scorer and assistant.
pub struct Workbench {
    pub catalog: Catalog,
    pub users: Vec<UserRecord>,
    pub cases: Vec<TestCase>,
    pub assistant: AssistantModel,
    pub scorer: Box<dyn Scorer>,
    pub group: Option<BTreeSet<usize>>,
}

impl Workbench {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let (catalog, users) = match &config.data {
            DataSource::Synthetic(spec) => generate_synthetic(&SyntheticSpec {
                seed: config.seed,
                ..spec.clone()
            })?,
            DataSource::Files {
                catalog,
                interactions,
            } => {
                let (c, u, _) = ingest(catalog, interactions)?;
                (c, u)
            }
        };
        let split = temporal_split(&users, &config.split)?;
        let mut cases = match config.eval_split {
            EvalSplit::Valid => split.valid,
            EvalSplit::Test => split.test,
        };
        cases.sort_by(|a, b| a.user.cmp(&b.user).then(a.ts.cmp(&b.ts)));
        if let Some(n) = config.max_cases {
            cases.truncate(n);
        }
        let assistant = AssistantModel::train(config.assistant, catalog.len(), &split.train)?;
        let scorer: Box<dyn Scorer> = match &config.scorer {
            ScorerSpec::SyntheticCopy { .. } => Box::new(SyntheticCopyLm),
            ScorerSpec::Table { path } => Box::new(TableScorer::load(path)?),
        };
        let group = match &config.mask_category {
            Some(cat) => {
                let g = category_group(&catalog, cat);
                if g.is_empty() {
                    return Err(Error::Config(format!("mask category {cat:?} has no items")));
                }
                Some(g)
            }
            None => None,
        };
        Ok(Self {
            catalog,
            users,
            cases,
            assistant,
            scorer,
            group,
        })
    }

    /// Decodes every case; fails on the first case that cannot be decoded.
    pub fn run_point(&self, point: &GridPoint, topk: usize) -> Result<Vec<EvalRecord>> {
        let group = if point.mask {
            self.group.as_ref()
        } else {
            None
        };
        self.cases
            .par_iter()
            .enumerate()
            .map(|(n, case)| {
                let ctx =
                    DecodingContext::new(case.user.clone(), &self.catalog, case.history.clone());
                let mut dist = self.assistant.score_items(&case.history);
                if let Some(g) = group {
                    dist = apply_group_mask(&dist, g)?;
                }
                let list = decode(
                    &self.catalog,
                    self.scorer.as_ref(),
                    &ctx,
                    Some(&dist),
                    &point.decode,
                )
                .map_err(|e| {
                    Error::Decode(format!(
                        "case #{n} (user {}, ts {}): {e}",
                        case.user, case.ts
                    ))
                })?;
                let mut recommendations = list.items();
                recommendations.truncate(topk);
                Ok(EvalRecord {
                    user: case.user.clone(),
                    recommendations,
                    target: case.target,
                    history: case.history.clone(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub label: String,
    pub decode: DecodeConfig,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub dataset: String,
    pub seed: u64,
    pub config_hash: String,
    pub catalog_fingerprint: String,
    pub catalog_items: usize,
    pub users: usize,
    pub cases: usize,
    pub mask_category: Option<String>,
    pub cells: Vec<CellResult>,
}

/// Runs every grid point and returns the summary (nothing is written).
pub fn run(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let points = config.points()?;
    let bench = Workbench::prepare(config)?;
    let mut cells = Vec::with_capacity(points.len());
    for point in &points {
        let records = bench.run_point(point, config.topk)?;
        let metrics = evaluate(
            &records,
            &bench.catalog,
            bench.group.as_ref(),
            MetricOptions::default(),
        );
        cells.push(CellResult {
            label: point.label(config.mask_category.as_deref()),
            decode: point.decode.clone(),
            metrics,
        });
    }
    Ok(ExperimentSummary {
        dataset: config.dataset.clone(),
        seed: config.seed,
        config_hash: config.hash(),
        catalog_fingerprint: bench.catalog.fingerprint(),
        catalog_items: bench.catalog.len(),
        users: bench.users.len(),
        cases: bench.cases.len(),
        mask_category: config.mask_category.clone(),
        cells,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_csv(summary: &ExperimentSummary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for cell in &summary.cells {
        let d = &cell.decode;
        let m = &cell.metrics;
        w.write_record([
            summary.dataset.clone(),
            cell.label.clone(),
            d.alpha.to_string(),
            d.length_penalty.to_string(),
            d.temperature.to_string(),
            d.beam_width.to_string(),
            d.expansion_width.to_string(),
            format!("{:.6}", m.hr_at_5),
            format!("{:.6}", m.hr_at_10),
            format!("{:.6}", m.ndcg_at_5),
            format!("{:.6}", m.ndcg_at_10),
            fmt_opt(m.pairwise_bleu),
            fmt_opt(m.category_entropy),
            fmt_opt(m.history_bleu),
            fmt_opt(m.category_repeat_ratio),
            fmt_opt(m.target_group_ratio),
            summary.seed.to_string(),
            summary.config_hash.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the experiment and writes `results.csv` and `summary.json` to `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary> {
    let summary = run(config)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_csv(&summary, &out.join("results.csv"))?;
    let json_path = out.join("summary.json");
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic(SyntheticSpec {
                categories: 3,
                series_per_category: 3,
                items_per_series: 3,
                users: 60,
                history_length: 8,
                ..SyntheticSpec::default()
            }),
            seed: 5,
            grid: vec![
                GridCell {
                    lambda: Some(Values::One(1.0)),
                    ..GridCell::new(Strategy::Baseline)
                },
                GridCell {
                    alpha: Some(Values::Many(vec![0.7, 1.0])),
                    ..GridCell::new(Strategy::D3)
                },
            ],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn grid_expands_per_value() {
        let pts = small().points().unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0].decode.alpha, 1.0);
        assert_eq!(pts[1].decode.length_penalty, 0.0);
        assert_eq!(pts[2].decode.alpha, 1.0);
        let empty = ExperimentConfig::default();
        assert!(empty.points().is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = small();
        let mut b = small();
        assert_eq!(a.hash(), b.hash());
        b.seed = 6;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn config_json_round_trip() {
        let json = r#"{
            "dataset": "toy",
            "data": {"kind": "synthetic", "categories": 2, "users": 30},
            "scorer": {"kind": "synthetic-copy", "copy_bonus": 1.5},
            "assistant": "popularity",
            "mask_category": "category-01",
            "grid": [
                {"strategy": "baseline-temp", "temp": [0.5, 2.0]},
                {"strategy": "d3", "alpha": 0.7, "mask": true}
            ]
        }"#;
        let c: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.assistant, AssistantKind::Popularity);
        let pts = c.points().unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[1].decode.temperature, 2.0);
        assert_eq!(pts[0].decode.copy_bonus, 1.5);
        assert_eq!(pts[2].label(Some("category-01")), "d3[mask=category-01]");
        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
