//! `prd`: file-mediated pipeline stages for pairwise ranking distillation.

mod config;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use prd_core::corpus::{
    generate_synthetic, make_split, parse_features, parse_qrels, parse_trec_run, write_features, write_qrels,
    write_trec_run, DatasetSplit, FeatureStore, SplitRatios, SyntheticSpec,
};
use prd_core::eval::{evaluate_run, parse_metrics, sweep_report, Metric, SweepResult};
use prd_core::experiment::{
    judge_sampled, run_cell, sample_training_pairs, supervision_from_stores, CellSpec, LabelSource, Stores,
};
use prd_core::prp::prp_pipeline;
use prd_core::sampling::{parse_sampled_pairs, write_sampled_pairs, Budget, SampledPairSet, Strategy};
use prd_core::student::{
    predict_run, read_checkpoint, train, write_checkpoint, LabelMode, LossKind, ModelKind, ModelSpec, TrainConfig,
};
use prd_core::teacher::{
    JudgmentStore, RemoteConfig, RemoteTeacher, ReplayTeacher, ScoreStore, SimulatedTeacher, Teacher, TeacherKind,
    TeacherSpec,
};
use prd_core::{CandidateSet, Dataset, QueryId, Ranking, RelevanceJudgments};

use config::Config;

/// Failures with a dedicated exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit code 2.
    Config(String),
    /// Exit code 3.
    MissingInput(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::MissingInput(m) => write!(f, "missing input: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Parser)]
#[command(name = "prd", version, about = "Pairwise ranking distillation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed (overrides `seed`).
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a synthetic run, qrels and feature file.
    Synth,
    /// Sample training pairs per query.
    Sample,
    /// Query the teacher for the sampled pairs (cached).
    Judge,
    /// Train the student from cached teacher labels.
    Train,
    /// Score every candidate with the student.
    Rank,
    /// Compute metrics for a run.
    Eval,
    /// Rank with full-pair teacher aggregation.
    PrpBaseline,
    /// Run sample, judge, train, rank and eval over a grid.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum QuerySet {
    Test,
    All,
}

struct Settings {
    seed: u64,
    out: PathBuf,
    files: Option<[PathBuf; 3]>,
    synth: SyntheticSpec,
    ratios: SplitRatios,
    split_seed: u64,
    teacher: TeacherSpec,
    teacher_url: Option<String>,
    teacher_timeout: Duration,
    teacher_retries: u32,
    strategy: Strategy,
    budget: Budget,
    both_directions: bool,
    source: LabelSource,
    model: ModelSpec,
    train: TrainConfig,
    metrics: Vec<Metric>,
    eval_queries: QuerySet,
    eval_run: Option<PathBuf>,
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl Settings {
    fn from_config(c: &Config) -> Result<Self, CliError> {
        let seed: u64 = c.get("seed")?;
        let out: PathBuf = c.get("out")?;
        let files = match c.raw("data.source") {
            Some("synthetic") => {
                if ["data.run", "data.qrels", "data.features"].iter().any(|k| c.is_set(k)) {
                    return Err(CliError::Config(
                        "data.source = synthetic reads the files in the output directory; \
                         set data.source = files to use data.run, data.qrels and data.features"
                            .into(),
                    ));
                }
                None
            }
            Some("files") => {
                let need = |k: &str| c.path(k).ok_or_else(|| CliError::Config(format!("{k} is required when data.source = files")));
                Some([need("data.run")?, need("data.qrels")?, need("data.features")?])
            }
            other => return Err(CliError::Config(format!("data.source must be synthetic or files, got {other:?}"))),
        };
        let synth = SyntheticSpec {
            num_queries: c.get("synth.num_queries")?,
            docs_per_query: c.get("synth.docs_per_query")?,
            feature_dim: c.get("synth.feature_dim")?,
            label_noise_sd: c.get("synth.label_noise_sd")?,
            initial_ranking_noise_sd: c.get("synth.initial_ranking_noise_sd")?,
            num_grades: c.get("synth.num_grades")?,
        };
        let r: Vec<f64> = c
            .list("split.ratios")
            .iter()
            .map(|v| v.parse::<f64>().map_err(|e| CliError::Config(format!("split.ratios: {e}"))))
            .collect::<Result<_, _>>()?;
        let [tr, va, te] = r[..] else {
            return Err(CliError::Config("split.ratios needs three values".into()));
        };
        let ratios = SplitRatios::new(tr, va, te).map_err(config_err)?;
        let teacher = TeacherSpec {
            kind: c.get::<TeacherKind>("teacher.kind")?,
            beta: c.get("teacher.beta")?,
            order_bias: c.get("teacher.order_bias")?,
            pointwise_noise_sd: c.get("teacher.pointwise_noise_sd")?,
            tie_threshold: c.get("teacher.tie_threshold")?,
            seed: c.get_opt("teacher.seed")?.unwrap_or(seed),
        };
        teacher.validate().map_err(config_err)?;
        let source: LabelSource = c.get("labels.source")?;
        let kind: ModelKind = c.get("model.kind")?;
        let model = match kind {
            ModelKind::Linear => ModelSpec::linear(1),
            ModelKind::Mlp => ModelSpec::mlp(1, c.get("model.hidden_units")?),
        };
        let default_loss = match source {
            LabelSource::Pointwise => LossKind::PointwiseMse,
            _ => LossKind::PairwiseLogistic,
        };
        let loss: LossKind = c.get_opt("train.loss")?.unwrap_or(default_loss);
        if loss != default_loss {
            return Err(CliError::Config(format!("train.loss = {loss} does not match labels.source = {source}")));
        }
        let base = TrainConfig::for_model(kind);
        let train = TrainConfig {
            learning_rate: c.get_opt("train.learning_rate")?.unwrap_or(base.learning_rate),
            epochs: c.get("train.epochs")?,
            batch_size: c.get("train.batch_size")?,
            l2: c.get("train.l2")?,
            seed,
            loss,
            label_mode: c.get::<LabelMode>("train.label_mode")?,
            early_stop_patience: c.get("train.early_stop_patience")?,
        };
        train.validate().map_err(config_err)?;
        let eval_queries = match c.raw("eval.queries") {
            Some("test") => QuerySet::Test,
            Some("all") => QuerySet::All,
            other => return Err(CliError::Config(format!("eval.queries must be test or all, got {other:?}"))),
        };
        Ok(Self {
            seed,
            out,
            files,
            synth,
            ratios,
            split_seed: c.get_opt("split.seed")?.unwrap_or(seed),
            teacher,
            teacher_url: c.raw("teacher.url").map(String::from),
            teacher_timeout: Duration::from_secs_f64(c.get("teacher.timeout_secs")?),
            teacher_retries: c.get("teacher.max_retries")?,
            strategy: c.get("sample.strategy")?,
            budget: c.get("sample.budget")?,
            both_directions: c.get("sample.both_directions")?,
            source,
            model,
            train,
            metrics: parse_metrics(c.raw("eval.metrics").unwrap_or("")).map_err(config_err)?,
            eval_queries,
            eval_run: c.path("eval.run"),
        })
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn run_path(&self) -> PathBuf {
        self.files.as_ref().map_or_else(|| self.out_file("run.trec"), |f| f[0].clone())
    }

    fn qrels_path(&self) -> PathBuf {
        self.files.as_ref().map_or_else(|| self.out_file("qrels.txt"), |f| f[1].clone())
    }

    fn features_path(&self) -> PathBuf {
        self.files.as_ref().map_or_else(|| self.out_file("features.tsv"), |f| f[2].clone())
    }

    fn stores(&self) -> Result<Stores> {
        Ok(Stores {
            pairs: JudgmentStore::open(self.out_file("judgments.jsonl"))?,
            scores: ScoreStore::open(self.out_file("scores.tsv"))?,
        })
    }
}

fn open(path: &Path, what: &str) -> Result<BufReader<fs::File>> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::MissingInput(format!("{what} {} ({e})", path.display())))?;
    Ok(BufReader::new(file))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

struct Inputs {
    dataset: Dataset,
    split: DatasetSplit,
}

fn load_inputs(s: &Settings, qrels: bool, features: bool) -> Result<Inputs> {
    let run_path = s.run_path();
    let candidates = parse_trec_run(open(&run_path, "run file")?).with_context(|| format!("parsing {}", run_path.display()))?;
    let qrels = if qrels {
        let p = s.qrels_path();
        parse_qrels(open(&p, "qrels file")?).with_context(|| format!("parsing {}", p.display()))?
    } else {
        RelevanceJudgments::new()
    };
    let features = if features {
        let p = s.features_path();
        parse_features(open(&p, "feature file")?).with_context(|| format!("parsing {}", p.display()))?
    } else {
        FeatureStore::new(1)
    };
    let ids: Vec<QueryId> = candidates.iter().map(|cs| cs.query().clone()).collect();
    let split = make_split(&ids, s.ratios, s.split_seed)?;
    Ok(Inputs {
        dataset: Dataset::new(candidates, qrels, features),
        split,
    })
}

fn load_pairs(s: &Settings) -> Result<Vec<SampledPairSet>> {
    if s.source == LabelSource::Pointwise {
        return Ok(Vec::new());
    }
    let p = s.out_file("pairs.tsv");
    Ok(parse_sampled_pairs(open(&p, "sampled pairs")?).with_context(|| format!("parsing {}", p.display()))?)
}

fn make_teacher<'a>(s: &Settings, qrels: &'a RelevanceJudgments, stores: &Stores) -> Result<Box<dyn Teacher + 'a>> {
    let tau = s.teacher.tie_threshold;
    Ok(match s.teacher.kind {
        TeacherKind::Oracle | TeacherKind::BradleyTerry | TeacherKind::PointwiseNoisy => {
            Box::new(SimulatedTeacher::new(s.teacher.clone(), qrels)?)
        }
        TeacherKind::Replay => {
            let scores: HashMap<_, _> = stores
                .scores
                .iter()
                .map(|(q, d, v)| ((q.clone(), d.clone()), v))
                .collect();
            Box::new(ReplayTeacher::new(stores.pairs.clone(), tau).with_scores(scores))
        }
        TeacherKind::Remote => {
            let mut config = match &s.teacher_url {
                Some(url) => RemoteConfig::new(url.clone()),
                None => RemoteConfig::from_env()
                    .map_err(|_| CliError::Config("remote teacher needs teacher.url or PRD_TEACHER_URL".into()))?,
            };
            config.timeout = s.teacher_timeout;
            config.max_retries = s.teacher_retries;
            Box::new(RemoteTeacher::new(config, tau))
        }
    })
}

fn selected(dataset: &Dataset, split: &DatasetSplit, which: QuerySet) -> Vec<CandidateSet> {
    dataset
        .candidates()
        .iter()
        .filter(|cs| which == QuerySet::All || split.test.contains(cs.query()))
        .cloned()
        .collect()
}

fn cmd_synth(s: &Settings) -> Result<()> {
    s.synth.validate().map_err(config_err)?;
    let data = generate_synthetic(&s.synth, s.seed)?;
    let rankings: Vec<Ranking> = data.candidates().iter().map(CandidateSet::to_ranking).collect();
    write(&s.out_file("run.trec"), &write_trec_run(&rankings, "synthetic"))?;
    write(&s.out_file("qrels.txt"), &write_qrels(&data.qrels))?;
    write(&s.out_file("features.tsv"), &write_features(&data.features))?;
    println!("queries={} documents={}", data.candidates().len(), data.features.len());
    Ok(())
}

fn cmd_sample(s: &Settings) -> Result<()> {
    let inputs = load_inputs(s, false, false)?;
    let sampled = sample_training_pairs(&inputs.dataset, &inputs.split, s.strategy, s.budget, s.seed)?;
    write(&s.out_file("pairs.tsv"), &write_sampled_pairs(&sampled))?;
    let total: usize = sampled.iter().map(SampledPairSet::len).sum();
    println!("strategy={} queries={} pairs={total}", s.strategy, sampled.len());
    Ok(())
}

fn cmd_judge(s: &Settings) -> Result<()> {
    let inputs = load_inputs(s, true, false)?;
    let sampled = load_pairs(s)?;
    let mut stores = s.stores()?;
    let teacher = make_teacher(s, &inputs.dataset.qrels, &stores)?;
    let result = judge_sampled(
        &inputs.dataset,
        &inputs.split,
        teacher.as_ref(),
        &mut stores,
        s.source,
        &sampled,
        s.both_directions,
    );
    stores.flush()?;
    let counts = result?;
    println!("judgments={} teacher_calls={}", counts.judgments, counts.teacher_calls);
    Ok(())
}

fn cmd_train(s: &Settings) -> Result<()> {
    let inputs = load_inputs(s, true, true)?;
    let sampled = load_pairs(s)?;
    let store_file = match s.source {
        LabelSource::Pointwise => "scores.tsv",
        _ => "judgments.jsonl",
    };
    if !s.out_file(store_file).exists() {
        return Err(CliError::MissingInput(format!("teacher labels {} (run judge first)", s.out_file(store_file).display())).into());
    }
    let stores = s.stores()?;
    let supervision = supervision_from_stores(&inputs.dataset, &inputs.split, s.source, &sampled, &stores)?;
    let model = ModelSpec {
        input_dim: inputs.dataset.features.dim(),
        ..s.model
    };
    let (params, log) = train(&inputs.dataset, &supervision, &inputs.split, &model, &s.train)?;
    let mut ckpt = Vec::new();
    write_checkpoint(&params, &mut ckpt)?;
    write(&s.out_file("student.ckpt"), std::str::from_utf8(&ckpt)?)?;
    write(&s.out_file("trainlog.csv"), &log.to_csv())?;
    let last = log.epochs.last().expect("at least one epoch");
    println!(
        "instances={} epochs={} loss={} best_epoch={}",
        supervision.len(),
        log.epochs.len(),
        last.loss,
        log.best_epoch.map_or_else(|| "none".into(), |e| e.to_string())
    );
    Ok(())
}

fn cmd_rank(s: &Settings) -> Result<()> {
    let inputs = load_inputs(s, false, true)?;
    let p = s.out_file("student.ckpt");
    let params = read_checkpoint(open(&p, "checkpoint")?).with_context(|| format!("reading {}", p.display()))?;
    let run = predict_run(&params, inputs.dataset.candidates(), &inputs.dataset.features)?;
    write(&s.out_file("student.run"), &write_trec_run(&run, "student"))?;
    println!("queries={}", run.len());
    Ok(())
}

fn cmd_eval(s: &Settings) -> Result<()> {
    let qrels_path = s.qrels_path();
    let qrels = parse_qrels(open(&qrels_path, "qrels file")?)?;
    let run_path = s.eval_run.clone().unwrap_or_else(|| s.out_file("student.run"));
    let mut run: Vec<Ranking> = parse_trec_run(open(&run_path, "run to evaluate")?)
        .with_context(|| format!("parsing {}", run_path.display()))?
        .iter()
        .map(CandidateSet::to_ranking)
        .collect();
    if s.eval_queries == QuerySet::Test {
        let inputs = load_inputs(s, false, false)?;
        run.retain(|r| inputs.split.test.contains(&r.query));
    }
    let report = evaluate_run(&run, &qrels, &s.metrics)?;
    write(&s.out_file("metrics.csv"), &report.to_csv())?;
    for m in report.metrics() {
        let mean = report.mean(*m).map_or_else(|| "NA".into(), |v| format!("{v:.4}"));
        println!("{m}={mean} excluded={}", report.excluded(*m));
    }
    Ok(())
}

fn cmd_prp_baseline(s: &Settings) -> Result<()> {
    let inputs = load_inputs(s, true, false)?;
    let mut stores = s.stores()?;
    let teacher = make_teacher(s, &inputs.dataset.qrels, &stores)?;
    let (mut run, mut calls, mut judgments) = (Vec::new(), 0, 0);
    let mut failure = None;
    for cs in selected(&inputs.dataset, &inputs.split, s.eval_queries) {
        match prp_pipeline(teacher.as_ref(), &cs, &mut stores.pairs) {
            Ok(outcome) => {
                calls += outcome.teacher_calls;
                judgments += cs.len() * cs.len().saturating_sub(1);
                run.push(outcome.ranking);
            }
            Err(e) => {
                failure = Some(anyhow::Error::from(e).context(format!("query {}", cs.query())));
                break;
            }
        }
    }
    stores.flush()?;
    if let Some(e) = failure {
        return Err(e);
    }
    write(&s.out_file("prp.run"), &write_trec_run(&run, "prp"))?;
    println!("queries={} judgments={judgments} teacher_calls={calls}", run.len());
    Ok(())
}

fn cmd_sweep(s: &Settings, c: &Config) -> Result<()> {
    let strategies: Vec<Strategy> = c
        .list("sweep.strategies")
        .iter()
        .map(|v| v.parse().map_err(config_err))
        .collect::<Result<_, _>>()?;
    let budgets: Vec<(String, Budget)> = c
        .list("sweep.budgets")
        .into_iter()
        .map(|v| v.parse().map(|b| (v.clone(), b)).map_err(config_err))
        .collect::<Result<_, _>>()?;
    let seeds: Vec<u64> = c
        .list("sweep.seeds")
        .iter()
        .map(|v| v.parse().map_err(config_err))
        .collect::<Result<_, _>>()?;
    if strategies.is_empty() || budgets.is_empty() || seeds.is_empty() {
        return Err(CliError::Config("sweep needs at least one strategy, budget and seed".into()).into());
    }
    let inputs = load_inputs(s, true, true)?;
    let mut stores = s.stores()?;
    let teacher = make_teacher(s, &inputs.dataset.qrels, &stores)?;
    let model = ModelSpec {
        input_dim: inputs.dataset.features.dim(),
        ..s.model
    };
    let metrics = vec![Metric::Opa, Metric::Ndcg(10)];
    let csv = s.out_file("sweep.csv");
    let mut results = Vec::new();
    for &strategy in &strategies {
        for (label, budget) in &budgets {
            for &seed in &seeds {
                let cell = CellSpec {
                    source: s.source,
                    strategy,
                    budget: *budget,
                    both_directions: s.both_directions,
                    model,
                    train: TrainConfig { seed, ..s.train.clone() },
                    metrics: metrics.clone(),
                };
                let outcome = run_cell(&inputs.dataset, &inputs.split, teacher.as_ref(), &mut stores, &cell);
                stores.flush()?;
                let outcome =
                    outcome.with_context(|| format!("sweep cell strategy={strategy} budget={label} seed={seed}"))?;
                results.push(SweepResult {
                    strategy: strategy.to_string(),
                    budget: label.clone(),
                    seed,
                    teacher_calls: outcome.counts.judgments as u64,
                    wall_clock_seconds: outcome.wall_clock_seconds,
                    opa: outcome.report.mean(Metric::Opa),
                    ndcg10: outcome.report.mean(Metric::Ndcg(10)),
                });
                write(&csv, &sweep_report(&results))?;
                eprintln!(
                    "cell strategy={strategy} budget={label} seed={seed} opa={} fresh_calls={}",
                    outcome.report.mean(Metric::Opa).map_or_else(|| "NA".into(), |v| format!("{v:.4}")),
                    outcome.counts.teacher_calls
                );
            }
        }
    }
    println!("cells={} report={}", results.len(), csv.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for a in &cli.set {
        config.apply(a)?;
    }
    if let Some(seed) = cli.seed {
        config.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        config.set("out", &out.display().to_string())?;
    }
    let settings = Settings::from_config(&config)?;
    match cli.command {
        Command::Synth => cmd_synth(&settings),
        Command::Sample => cmd_sample(&settings),
        Command::Judge => cmd_judge(&settings),
        Command::Train => cmd_train(&settings),
        Command::Rank => cmd_rank(&settings),
        Command::Eval => cmd_eval(&settings),
        Command::PrpBaseline => cmd_prp_baseline(&settings),
        Command::Sweep => cmd_sweep(&settings, &config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<CliError>() {
                Some(CliError::Config(_)) => ExitCode::from(2),
                Some(CliError::MissingInput(_)) => ExitCode::from(3),
                None => ExitCode::from(4),
            }
        }
    }
}
