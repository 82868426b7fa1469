use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use recdecode::assistant::AssistantKind;
use recdecode::catalog::{Catalog, CollisionPolicy};
use recdecode::harness::{
    generate_synthetic, ingest, run_experiment, temporal_split, write_interactions, DataSource,
    ExperimentConfig, GridCell, ScorerSpec, SplitConfig, SyntheticSpec, TestCase, Values,
};
use recdecode::{jsonl, Strategy};

#[derive(Parser)]
#[command(
    name = "recdecode",
    version,
    about = "Constrained decoding experiments for generative recommendation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a catalog and interactions file and report counts.
    Ingest(DataArgs),
    /// Generate a synthetic catalog and interactions.
    Synth(SynthArgs),
    /// Split interactions by global timestamp and write the cases.
    Split(SplitArgs),
    /// Run a strategy grid and write results.csv and summary.json.
    Run(RunArgs),
    /// Report ghost-token and length statistics of a catalog.
    Audit(AuditArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    interactions: PathBuf,
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long, default_value_t = 8)]
    categories: usize,
    #[arg(long, default_value_t = 6)]
    series: usize,
    #[arg(long, default_value_t = 4)]
    items_per_series: usize,
    #[arg(long, default_value_t = 3)]
    name_length: usize,
    #[arg(long, default_value_t = 500)]
    users: usize,
    #[arg(long, default_value_t = 12)]
    history_length: usize,
    #[arg(long, default_value_t = 0.9)]
    skew: f64,
}

impl SpecArgs {
    fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            categories: self.categories,
            series_per_category: self.series,
            items_per_series: self.items_per_series,
            name_length: self.name_length,
            users: self.users,
            history_length: self.history_length,
            skew: self.skew,
            seed,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Train, valid and test shares, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    max_history: usize,
    /// Hold out each user's last two interactions instead.
    #[arg(long)]
    per_user: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, requires = "interactions")]
    catalog: Option<PathBuf>,
    #[arg(long, requires = "catalog")]
    interactions: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    /// Run a single strategy instead of the config grid.
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    temp: Option<f64>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    expand_k: Option<usize>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long, value_parser = parse_assistant)]
    assistant: Option<AssistantKind>,
    #[arg(long)]
    mask_category: Option<String>,
    #[arg(long)]
    copy_bonus: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_cases: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, conflicts_with = "synthetic")]
    catalog: Option<PathBuf>,
    /// Audit a generated catalog instead of a file.
    #[arg(long)]
    synthetic: bool,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the ghost mask of these item ids.
    #[arg(long)]
    item: Vec<String>,
}

fn parse_assistant(s: &str) -> std::result::Result<AssistantKind, String> {
    match s {
        "popularity" => Ok(AssistantKind::Popularity),
        "markov" => Ok(AssistantKind::Markov),
        _ => Err(format!("unknown assistant {s:?} (popularity|markov)")),
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_ingest(args: DataArgs) -> Result<()> {
    let (catalog, _, report) = ingest(&args.catalog, &args.interactions)?;
    print_json(&json!({
        "items": catalog.len(),
        "categories": catalog.categories().len(),
        "users": report.users,
        "interactions": report.interactions,
        "dropped": report.dropped,
        "catalog_fingerprint": catalog.fingerprint(),
    }))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let (catalog, users) = generate_synthetic(&args.spec.spec(args.seed))?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    catalog.write_jsonl(args.out.join("catalog.jsonl"))?;
    write_interactions(args.out.join("interactions.jsonl"), &catalog, &users)?;
    print_json(&json!({
        "items": catalog.len(),
        "users": users.len(),
        "catalog_fingerprint": catalog.fingerprint(),
        "out": args.out,
    }))
}

fn case_rows(catalog: &Catalog, cases: &[TestCase]) -> Vec<serde_json::Value> {
    let id = |i: usize| catalog.item(i).id.clone();
    cases
        .iter()
        .map(|c| {
            json!({
                "user": c.user,
                "history": c.history.iter().map(|&i| id(i)).collect::<Vec<_>>(),
                "target": id(c.target),
                "ts": c.ts,
            })
        })
        .collect()
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let (catalog, users, _) = ingest(&args.data.catalog, &args.data.interactions)?;
    let config = SplitConfig {
        ratios: [args.ratios[0], args.ratios[1], args.ratios[2]],
        max_history: args.max_history,
        per_user_fallback: args.per_user,
    };
    let split = temporal_split(&users, &config)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let train: Vec<Vec<String>> = split
        .train
        .iter()
        .map(|seq| seq.iter().map(|&i| catalog.item(i).id.clone()).collect())
        .collect();
    jsonl::write(&args.out.join("train.jsonl"), &train)?;
    jsonl::write(
        &args.out.join("valid.jsonl"),
        &case_rows(&catalog, &split.valid),
    )?;
    jsonl::write(
        &args.out.join("test.jsonl"),
        &case_rows(&catalog, &split.test),
    )?;
    print_json(&json!({
        "train_sequences": split.train.len(),
        "valid_cases": split.valid.len(),
        "test_cases": split.test.len(),
        "skipped": split.skipped,
        "boundaries": split.boundaries,
    }))
}

fn run_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let (Some(catalog), Some(interactions)) = (&args.catalog, &args.interactions) {
        config.data = DataSource::Files {
            catalog: catalog.clone(),
            interactions: interactions.clone(),
        };
        if args.dataset.is_none() && args.config.is_none() {
            config.dataset = dataset_name(catalog);
        }
    }
    if let Some(d) = &args.dataset {
        config.dataset = d.clone();
    }
    if let Some(b) = args.copy_bonus {
        config.scorer = ScorerSpec::SyntheticCopy { copy_bonus: b };
    }
    macro_rules! set {
        ($($field:ident <- $arg:ident),*) => {$(
            if let Some(v) = args.$arg.clone() {
                config.$field = v;
            }
        )*};
    }
    set!(beam <- beam, expand_k <- expand_k, topk <- topk, assistant <- assistant, seed <- seed);
    if args.mask_category.is_some() {
        config.mask_category = args.mask_category.clone();
    }
    if args.max_cases.is_some() {
        config.max_cases = args.max_cases;
    }
    match args.strategy {
        Some(strategy) => {
            config.grid = vec![GridCell {
                alpha: args.alpha.map(Values::One),
                lambda: args.lambda.map(Values::One),
                temp: args.temp.map(Values::One),
                mask: args.mask_category.is_some(),
                ..GridCell::new(strategy)
            }];
        }
        None => {
            if args.alpha.is_some() || args.lambda.is_some() || args.temp.is_some() {
                bail!("--alpha/--lambda/--temp need --strategy");
            }
            if config.grid.is_empty() {
                bail!("no strategy grid: pass --strategy or a --config with a grid");
            }
        }
    }
    Ok(config)
}

fn dataset_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = run_config(&args)?;
    let summary = run_experiment(&config, &args.out)?;
    for cell in &summary.cells {
        let m = &cell.metrics;
        eprintln!(
            "{:<28} alpha={:<4} lambda={:<4} T={:<4} hr@10={:.4} ndcg@10={:.4} entropy={} pairwise_bleu={}",
            cell.label,
            cell.decode.alpha,
            cell.decode.length_penalty,
            cell.decode.temperature,
            m.hr_at_10,
            m.ndcg_at_10,
            m.category_entropy.map_or("-".into(), |v| format!("{v:.4}")),
            m.pairwise_bleu.map_or("-".into(), |v| format!("{v:.4}")),
        );
    }
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let catalog = match (&args.catalog, args.synthetic) {
        (Some(path), _) => Catalog::from_jsonl(path, CollisionPolicy::Reject)?,
        (None, true) => generate_synthetic(&args.spec.spec(args.seed))?.0,
        (None, false) => bail!("pass --catalog <file> or --synthetic"),
    };
    let stats = catalog.length_stats();
    let ghosts: usize = (0..catalog.len())
        .map(|i| {
            catalog
                .ghost_positions_of(i)
                .mask
                .iter()
                .filter(|&&g| g)
                .count()
        })
        .sum();
    let mut items = Vec::new();
    for id in &args.item {
        let g = catalog.ghost_positions(id)?;
        items.push(json!({
            "id": id,
            "tokens": catalog.item_by_id(id)?.tokens,
            "ghost_mask": g.mask,
            "raw_length": g.raw_length,
            "effective_length": g.effective_length,
        }));
    }
    print_json(&json!({
        "items": catalog.len(),
        "trie_nodes": catalog.nodes().len(),
        "max_branching": catalog.max_branching(),
        "ghost_tokens": ghosts,
        "length": stats,
        "catalog_fingerprint": catalog.fingerprint(),
        "inspected": items,
    }))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Split(a) => cmd_split(a),
        Command::Run(a) => cmd_run(a),
        Command::Audit(a) => cmd_audit(a),
    }
}
