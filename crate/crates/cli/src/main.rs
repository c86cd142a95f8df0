//! `kgqa`: drives ingestion, embedding training and evaluation, QA data
//! generation, question model training, batch evaluation, single questions
//! and the HTTP service.

mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kgqa_core::dataset::{self, GenerateConfig, QAExample};
use kgqa_core::eval::evaluate_link_prediction;
use kgqa_core::gazetteer::Gazetteer;
use kgqa_core::kg::{self, load_kg, KnowledgeGraph, Triple};
use kgqa_core::kge::{self, TrainConfig, VocabHashes};
use kgqa_core::qa::{self, QaConfig, QaPipeline};
use kgqa_core::question::{self, ClassifierConfig, TokenVocabulary};
use kgqa_core::synthetic::{self, SyntheticConfig};
use kgqa_service::{AppState, ServiceConfig};

use config::CliConfig;

#[derive(Debug, Parser)]
#[command(name = "kgqa", version, about = "Multi-hop question answering over knowledge graph embeddings")]
struct Cli {
    /// TOML config file. Flags and KGQA_* environment variables take precedence over it.
    #[arg(long, global = true, env = "KGQA_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic graph, node metadata and question templates.
    SynthKg(SynthArgs),
    /// Load a graph, print its load summary and optionally split its triples.
    Ingest(IngestArgs),
    /// Train ComplEx embeddings and save a checkpoint.
    TrainKge(TrainKgeArgs),
    /// Link prediction metrics (AMR, AAMR, AAMRI, hits@k) on held-out triples.
    EvalKge(EvalKgeArgs),
    /// Generate question-answer pairs from metapath templates.
    GenQa(GenQaArgs),
    /// Train the hop-count classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Train the question encoder for one hop class.
    TrainQa(TrainQaArgs),
    /// Per-hop hits@k of the full pipeline on a QA test file.
    EvalQa(EvalQaArgs),
    /// Answer one question.
    Ask(AskArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GraphArgs {
    /// Triples TSV: head, relation, tail.
    #[arg(long, env = "KGQA_TRIPLES")]
    triples: Option<PathBuf>,
    /// Node metadata TSV: id, name, kind, optional |-separated synonyms.
    #[arg(long, env = "KGQA_NODES")]
    nodes: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Extra surface forms, TSV: entity id, synonym.
    #[arg(long, env = "KGQA_SYNONYMS")]
    synonyms: Option<PathBuf>,
    /// Embedding checkpoint.
    #[arg(long, env = "KGQA_KGE")]
    kge: Option<PathBuf>,
    /// Hop classifier checkpoint.
    #[arg(long, env = "KGQA_CLASSIFIER")]
    classifier: Option<PathBuf>,
    /// 1-hop question encoder checkpoint.
    #[arg(long = "encoder-1", env = "KGQA_ENCODER_1")]
    encoder_1: Option<PathBuf>,
    /// 2-hop question encoder checkpoint.
    #[arg(long = "encoder-2", env = "KGQA_ENCODER_2")]
    encoder_2: Option<PathBuf>,
    /// 3-hop question encoder checkpoint.
    #[arg(long = "encoder-3", env = "KGQA_ENCODER_3")]
    encoder_3: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory receiving triples.tsv, nodes.tsv and templates.tsv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    clusters: usize,
    #[arg(long, default_value_t = 10)]
    cluster_size: usize,
    /// Edges per entity and relation.
    #[arg(long, default_value_t = 3)]
    fanout: usize,
    #[arg(long, env = "KGQA_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Also write train.tsv, valid.tsv and test.tsv triple partitions here.
    #[arg(long)]
    split_dir: Option<PathBuf>,
    /// Train, validation and test fractions.
    #[arg(long, value_parser = parse_ratios, default_value = "0.8,0.1,0.1")]
    ratios: (f64, f64, f64),
    #[arg(long, env = "KGQA_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainKgeArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Training triples; defaults to every triple of the graph.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation triples for early stopping on filtered hits@10.
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Checkpoint path; defaults to `pipeline.kge` from the config file.
    #[arg(long, env = "KGQA_KGE")]
    out: Option<PathBuf>,
    #[arg(long, env = "KGQA_DIM")]
    dim: Option<usize>,
    #[arg(long, env = "KGQA_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "KGQA_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long, env = "KGQA_LEARNING_RATE")]
    learning_rate: Option<f64>,
    /// Corrupted triples per positive.
    #[arg(long, env = "KGQA_NEGATIVES")]
    negatives: Option<usize>,
    #[arg(long, env = "KGQA_L2")]
    l2: Option<f64>,
    /// Stagnant evaluations tolerated before stopping.
    #[arg(long, env = "KGQA_PATIENCE")]
    patience: Option<usize>,
    #[arg(long, env = "KGQA_EVAL_EVERY")]
    eval_every: Option<usize>,
    #[arg(long, env = "KGQA_SEED")]
    seed: Option<u64>,
    /// Print the training report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct EvalKgeArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long, env = "KGQA_KGE")]
    kge: Option<PathBuf>,
    /// Triples to rank.
    #[arg(long)]
    test: PathBuf,
    /// Rank against every candidate instead of filtering known triples.
    #[arg(long)]
    raw: bool,
    /// Cutoffs for hits@k.
    #[arg(long, value_delimiter = ',', default_value = "1,3,10")]
    hits: Vec<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct GenQaArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Template TSV: id, metapath, text forms.
    #[arg(long, env = "KGQA_TEMPLATES")]
    templates: PathBuf,
    /// Write every example to this QA TSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write train.tsv, valid.tsv and test.tsv QA partitions here.
    #[arg(long)]
    split_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_ratios, default_value = "0.8,0.1,0.1")]
    ratios: (f64, f64, f64),
    /// Maximum heads sampled per template.
    #[arg(long)]
    per_template_cap: Option<usize>,
    /// Text forms emitted per head.
    #[arg(long)]
    forms_per_head: Option<usize>,
    #[arg(long, env = "KGQA_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainClassifierArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Training QA TSV; its questions also define the token vocabulary.
    #[arg(long)]
    train_qa: PathBuf,
    #[arg(long)]
    valid_qa: Option<PathBuf>,
    /// Checkpoint path; defaults to `pipeline.classifier` from the config file.
    #[arg(long, env = "KGQA_CLASSIFIER")]
    out: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, env = "KGQA_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainQaArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Hop class to train (1, 2 or 3).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    hops: u8,
    #[arg(long, env = "KGQA_KGE")]
    kge: Option<PathBuf>,
    /// Training QA TSV with every hop class; its questions define the token vocabulary.
    #[arg(long)]
    train_qa: PathBuf,
    #[arg(long)]
    valid_qa: Option<PathBuf>,
    /// Checkpoint path; defaults to `pipeline.encoders.<hops>` from the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    label_smoothing: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, env = "KGQA_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalQaArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// QA TSV to evaluate.
    #[arg(long)]
    test_qa: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct AskArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    question: String,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Listen address.
    #[arg(long, env = "KGQA_BIND")]
    bind: Option<String>,
    #[arg(long, env = "KGQA_DEFAULT_TOP_K")]
    default_top_k: Option<usize>,
    #[arg(long, env = "KGQA_TOP_K_CAP")]
    top_k_cap: Option<usize>,
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err("expected three comma-separated fractions".into()),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    ensure_parent(path)?;
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).with_context(|| format!("cannot write {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(())
}

fn required(value: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    value.ok_or_else(|| anyhow!("no {what} given (use the flag, the environment or the config file)"))
}

struct Settings {
    config: CliConfig,
}

impl Settings {
    fn seed(&self, flag: Option<u64>, section: u64) -> u64 {
        flag.or(self.config.seed).unwrap_or(section)
    }

    fn graph(&self, args: &GraphArgs) -> Result<KnowledgeGraph> {
        let triples = required(
            args.triples.clone().or(self.config.pipeline.triples.clone()),
            "triples file",
        )?;
        let nodes = args.nodes.clone().or(self.config.pipeline.nodes.clone());
        Ok(load_kg(&triples, nodes.as_deref())?)
    }

    fn service_config(&self, args: &PipelineArgs) -> ServiceConfig {
        let mut encoders = BTreeMap::new();
        for (hops, path) in [(1, &args.encoder_1), (2, &args.encoder_2), (3, &args.encoder_3)] {
            if let Some(p) = path {
                encoders.insert(hops.to_string(), p.clone());
            }
        }
        ServiceConfig {
            triples: args.graph.triples.clone(),
            nodes: args.graph.nodes.clone(),
            synonyms: args.synonyms.clone(),
            kge: args.kge.clone(),
            classifier: args.classifier.clone(),
            encoders,
            ..Default::default()
        }
        .or(self.config.pipeline.clone())
    }

    fn pipeline(&self, args: &PipelineArgs) -> Result<QaPipeline> {
        let paths = self.service_config(args).pipeline_paths()?;
        if paths.encoders.is_empty() {
            bail!("no question encoder checkpoints given (--encoder-1, --encoder-2, --encoder-3)");
        }
        Ok(QaPipeline::load(&paths)?)
    }
}

fn read_triples(kg: &KnowledgeGraph, path: &Path) -> Result<Vec<Triple>> {
    kg.read_known_triples(open(path)?)
        .with_context(|| format!("in {}", path.display()))
}

fn read_qa(kg: &KnowledgeGraph, path: &Path) -> Result<Vec<QAExample>> {
    dataset::read_qa_tsv(open(path)?, kg).with_context(|| format!("in {}", path.display()))
}

fn synth_kg(ctx: &Settings, args: SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig {
        clusters: args.clusters,
        cluster_size: args.cluster_size,
        fanout: args.fanout,
        seed: ctx.seed(args.seed, SyntheticConfig::default().seed),
    };
    if cfg.clusters == 0 || cfg.cluster_size == 0 || cfg.fanout == 0 {
        bail!("clusters, cluster size and fanout must be at least 1");
    }
    let kg = synthetic::compositional_kg(&cfg);
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    write_with(&args.out_dir.join("triples.tsv"), |w| kg::write_triples(w, &kg))?;
    write_with(&args.out_dir.join("nodes.tsv"), |w| kg::write_nodes(w, &kg))?;
    let templates = synthetic::compositional_templates();
    write_with(&args.out_dir.join("templates.tsv"), |w| dataset::write_templates(w, &templates))?;
    println!("{}", kg.summary());
    println!("templates: {}", templates.len());
    Ok(())
}

fn ingest(ctx: &Settings, args: IngestArgs) -> Result<()> {
    let kg = ctx.graph(&args.graph)?;
    println!("{}", kg.summary());
    let gazetteer = Gazetteer::build(&kg);
    println!("surface_forms: {}", gazetteer.len());
    println!("unnamed_entities: {}", gazetteer.skipped());
    if let Some(dir) = args.split_dir {
        let split = kg::split_triples(&kg, args.ratios, ctx.seed(args.seed, 0))?;
        for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
            write_with(&dir.join(format!("{name}.tsv")), |w| kg::write_triple_list(w, &kg, part))?;
            println!("{name}: {}", part.len());
        }
    }
    Ok(())
}

fn train_kge(ctx: &Settings, args: TrainKgeArgs) -> Result<()> {
    let kg = ctx.graph(&args.graph)?;
    let out = required(args.out.or(ctx.config.pipeline.kge.clone()), "checkpoint output path")?;
    let base = &ctx.config.kge;
    let cfg = TrainConfig {
        dim: args.dim.unwrap_or(base.dim),
        epochs: args.epochs.unwrap_or(base.epochs),
        batch_size: args.batch_size.unwrap_or(base.batch_size),
        learning_rate: args.learning_rate.unwrap_or(base.learning_rate),
        negatives_per_positive: args.negatives.unwrap_or(base.negatives_per_positive),
        l2_weight: args.l2.unwrap_or(base.l2_weight),
        patience: args.patience.unwrap_or(base.patience),
        eval_every: args.eval_every.unwrap_or(base.eval_every),
        seed: ctx.seed(args.seed, base.seed),
        max_retries: base.max_retries,
    };
    let train = match &args.train {
        Some(p) => read_triples(&kg, p)?,
        None => kg.triples().to_vec(),
    };
    let valid = match &args.valid {
        Some(p) => read_triples(&kg, p)?,
        None => Vec::new(),
    };
    let started = Instant::now();
    let (model, report) = kge::train_kge(&train, &valid, &kg, &cfg)?;
    ensure_parent(&out)?;
    kge::save_checkpoint(&model, VocabHashes::of(&kg), &out)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    println!("epochs_run: {}", report.history.len());
    if let Some(best) = report.best_epoch {
        let score = report.history.iter().find(|r| r.epoch == best).and_then(|r| r.validation);
        println!("best_epoch: {best}");
        if let Some(s) = score {
            println!("best_valid_hits@10: {s:.4}");
        }
    }
    println!("stopped_early: {}", report.stopped_early);
    println!("seconds: {:.1}", started.elapsed().as_secs_f64());
    println!("fingerprint: {}", model.fingerprint());
    println!("saved: {}", out.display());
    Ok(())
}

fn eval_kge(ctx: &Settings, args: EvalKgeArgs) -> Result<()> {
    let kg = ctx.graph(&args.graph)?;
    let path = required(args.kge.or(ctx.config.pipeline.kge.clone()), "embedding checkpoint")?;
    let model = kge::load_checkpoint(&path, &kg)?;
    let test = read_triples(&kg, &args.test)?;
    let known = (!args.raw).then(|| kg.triple_set());
    let report = evaluate_link_prediction(&model, &test, known, &args.hits)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_kv_text());
    }
    Ok(())
}

fn gen_qa(ctx: &Settings, args: GenQaArgs) -> Result<()> {
    if args.out.is_none() && args.split_dir.is_none() {
        bail!("nothing to write: give --out, --split-dir or both");
    }
    let kg = ctx.graph(&args.graph)?;
    let templates = dataset::parse_templates(open(&args.templates)?)
        .with_context(|| format!("in {}", args.templates.display()))?;
    let base = &ctx.config.generate;
    let seed = ctx.seed(args.seed, base.seed);
    let cfg = GenerateConfig {
        per_template_cap: args.per_template_cap.unwrap_or(base.per_template_cap),
        forms_per_head: args.forms_per_head.unwrap_or(base.forms_per_head),
        seed,
    };
    let examples = dataset::generate_qa(&kg, &templates, &cfg)?;
    if let Some(out) = &args.out {
        write_with(out, |w| dataset::write_qa_tsv(w, &kg, &examples))?;
    }
    for (hops, group) in dataset::by_hops(&examples).into_iter().collect::<BTreeMap<_, _>>() {
        println!("{hops}-hop: {}", group.len());
    }
    if let Some(dir) = &args.split_dir {
        let split = dataset::split_qa(&examples, args.ratios, seed)?;
        for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
            write_with(&dir.join(format!("{name}.tsv")), |w| dataset::write_qa_tsv(w, &kg, part))?;
            println!("{name}: {}", part.len());
        }
    }
    println!("total: {}", examples.len());
    Ok(())
}

fn vocabulary(train: &[QAExample]) -> TokenVocabulary {
    TokenVocabulary::build(train.iter().map(|e| e.question.as_str()))
}

fn train_classifier(ctx: &Settings, args: TrainClassifierArgs) -> Result<()> {
    let kg = ctx.graph(&args.graph)?;
    let out = required(
        args.out.or(ctx.config.pipeline.classifier.clone()),
        "classifier output path",
    )?;
    let train = read_qa(&kg, &args.train_qa)?;
    let valid = match &args.valid_qa {
        Some(p) => read_qa(&kg, p)?,
        None => Vec::new(),
    };
    let vocab = vocabulary(&train);
    let label = |ex: &[QAExample]| -> Vec<(Vec<usize>, u8)> {
        ex.iter().map(|e| (vocab.encode(&e.question), e.hops)).collect()
    };
    let (train_l, valid_l) = (label(&train), label(&valid));
    let base = &ctx.config.classifier;
    let cfg = ClassifierConfig {
        width: args.width.unwrap_or(base.width),
        epochs: args.epochs.unwrap_or(base.epochs),
        batch_size: args.batch_size.unwrap_or(base.batch_size),
        learning_rate: args.learning_rate.unwrap_or(base.learning_rate),
        weight_decay: args.weight_decay.unwrap_or(base.weight_decay),
        patience: args.patience.unwrap_or(base.patience),
        seed: ctx.seed(args.seed, base.seed),
    };
    let (clf, history) = question::train_classifier(vocab.clone(), &train_l, &valid_l, &cfg)?;
    ensure_parent(&out)?;
    question::save_classifier(&clf, &out)?;
    println!("epochs_run: {}", history.len());
    println!("train_accuracy: {:.4}", clf.accuracy(&train_l));
    if !valid_l.is_empty() {
        println!("valid_accuracy: {:.4}", clf.accuracy(&valid_l));
    }
    println!("vocabulary: {}", vocab.len());
    println!("saved: {}", out.display());
    Ok(())
}

fn train_qa(ctx: &Settings, args: TrainQaArgs) -> Result<()> {
    let kg = ctx.graph(&args.graph)?;
    let out = required(
        args.out.or_else(|| ctx.config.pipeline.encoders.get(&args.hops.to_string()).cloned()),
        "encoder output path",
    )?;
    let kge_path = required(args.kge.or(ctx.config.pipeline.kge.clone()), "embedding checkpoint")?;
    let model = kge::load_checkpoint(&kge_path, &kg)?;
    let all_train = read_qa(&kg, &args.train_qa)?;
    let vocab = vocabulary(&all_train);
    let train: Vec<QAExample> = all_train.into_iter().filter(|e| e.hops == args.hops).collect();
    if train.is_empty() {
        bail!("{} has no {}-hop examples", args.train_qa.display(), args.hops);
    }
    let valid: Vec<QAExample> = match &args.valid_qa {
        Some(p) => read_qa(&kg, p)?.into_iter().filter(|e| e.hops == args.hops).collect(),
        None => Vec::new(),
    };
    let base = &ctx.config.qa;
    let cfg = QaConfig {
        width: args.width.unwrap_or(base.width),
        epochs: args.epochs.unwrap_or(base.epochs),
        batch_size: args.batch_size.unwrap_or(base.batch_size),
        learning_rate: args.learning_rate.unwrap_or(base.learning_rate),
        weight_decay: args.weight_decay.unwrap_or(base.weight_decay),
        label_smoothing: args.label_smoothing.unwrap_or(base.label_smoothing),
        patience: args.patience.unwrap_or(base.patience),
        eval_every: base.eval_every,
        seed: ctx.seed(args.seed, base.seed),
    };
    let started = Instant::now();
    let (mut encoder, report) = qa::train_qa(&model, &vocab, &train, &valid, &cfg)?;
    encoder.set_entity_hash(kg.entity_hash());
    ensure_parent(&out)?;
    question::save_encoder(&encoder, &out)?;
    println!("hops: {}", args.hops);
    println!("examples: {}", train.len());
    println!("epochs_run: {}", report.history.len());
    if let Some(best) = report.best_epoch {
        println!("best_epoch: {best}");
        if let Some(h) = report.history.iter().find(|r| r.epoch == best).and_then(|r| r.valid_hits_at_10) {
            println!("best_valid_hits@10: {h:.4}");
        }
    }
    println!("seconds: {:.1}", started.elapsed().as_secs_f64());
    println!("saved: {}", out.display());
    Ok(())
}

fn eval_qa(ctx: &Settings, args: EvalQaArgs) -> Result<()> {
    let pipeline = ctx.pipeline(&args.pipeline)?;
    let test = read_qa(&pipeline.kg, &args.test_qa)?;
    let groups: BTreeMap<u8, Vec<QAExample>> = dataset::by_hops(&test).into_iter().collect();
    let mut hits = BTreeMap::new();
    for (hops, group) in &groups {
        hits.insert(*hops, pipeline.evaluate(group, args.k)?);
    }
    if args.json {
        let counts: BTreeMap<u8, usize> = groups.iter().map(|(h, g)| (*h, g.len())).collect();
        let body = serde_json::json!({ "k": args.k, "hits": hits, "examples": counts });
        println!("{}", serde_json::to_string_pretty(&body)?);
        return Ok(());
    }
    let label = format!("hits@{}", args.k);
    let width = label.len().max(8);
    print!("{:width$}", "");
    for hops in hits.keys() {
        print!("\t{hops}-hop");
    }
    println!();
    print!("{label:width$}");
    for h in hits.values() {
        print!("\t{h:.4}");
    }
    println!();
    print!("{:width$}", "examples");
    for g in groups.values() {
        print!("\t{}", g.len());
    }
    println!();
    Ok(())
}

fn ask(ctx: &Settings, args: AskArgs) -> Result<()> {
    let pipeline = ctx.pipeline(&args.pipeline)?;
    let state = AppState::new(pipeline, Default::default());
    let request = kgqa_service::AskRequest {
        question: args.question.clone(),
        top_k: args.top_k,
    };
    let response = kgqa_service::handle_ask(&state, &request).map_err(|e| match e.details().get("normalized_question") {
        Some(q) => anyhow!("{e}; normalized question: {q}"),
        None => anyhow!("{e}"),
    })?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&response)?);
        return Ok(());
    }
    let chars: Vec<char> = args.question.chars().collect();
    let span = response.head.span;
    let before: String = chars[..span.start].iter().collect();
    let inside: String = chars[span.start..span.end].iter().collect();
    let after: String = chars[span.end..].iter().collect();
    println!("question: {before}[{inside}]{after}");
    println!("head: {} ({})", response.head.name, response.head.id);
    let p = &response.hops.probabilities;
    println!(
        "hops: {} (p1={:.3} p2={:.3} p3={:.3})",
        response.hops.class, p[0], p[1], p[2]
    );
    println!("rank\tscore\tid\tkind\tname");
    for (i, a) in response.answers.iter().enumerate() {
        println!("{}\t{:.4}\t{}\t{}\t{}", i + 1, a.score, a.id, a.kind, a.name);
    }
    Ok(())
}

fn serve(ctx: &Settings, args: ServeArgs) -> Result<()> {
    let mut config = ctx.service_config(&args.pipeline);
    config.bind = args.bind.or(config.bind);
    config.default_top_k = args.default_top_k.or(config.default_top_k);
    config.top_k_cap = args.top_k_cap.or(config.top_k_cap);
    let state = kgqa_service::load_state(&config)?;
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new().context("cannot start async runtime")?;
    runtime.block_on(kgqa_service::serve(state, config.bind_address()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Settings {
        config: CliConfig::load(cli.config.as_deref())?,
    };
    match cli.command {
        Command::SynthKg(a) => synth_kg(&ctx, a),
        Command::Ingest(a) => ingest(&ctx, a),
        Command::TrainKge(a) => train_kge(&ctx, a),
        Command::EvalKge(a) => eval_kge(&ctx, a),
        Command::GenQa(a) => gen_qa(&ctx, a),
        Command::TrainClassifier(a) => train_classifier(&ctx, a),
        Command::TrainQa(a) => train_qa(&ctx, a),
        Command::EvalQa(a) => eval_qa(&ctx, a),
        Command::Ask(a) => ask(&ctx, a),
        Command::Serve(a) => serve(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
