use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corelearn::baselines::{leverage_coreset, uniform_coreset};
use corelearn::eval::{err_avg_scored, err_opt};
use corelearn::experiment::{load_dataset, run_experiment, Column, CsvSchema, ExperimentConfig, LabelMap, Overrides};
use corelearn::experiment::synth::{synth_dataset, SynthConfig, SynthKind};
use corelearn::learner::{learn_coreset, Algorithm, InitStrategy, TrainConfig};
use corelearn::queries::{read_pool_csv, split_queries, trajectory_queries, write_pool_csv, TrajectoryConfig};
use corelearn::theory::{
    bound_row, estimate_m, estimate_set_m, ratio_chain, verify_claim1, verify_claim2, write_bound_table,
};
use corelearn::{
    Coreset, Error, LabeledPoints, LossKind, LossModel, MeasurableQuerySpace, Query, Result, ScoredQueries,
    WeightedLabeledSet,
};

#[derive(Parser)]
#[command(name = "corelearn", version, about = "Learn, build and evaluate weighted coresets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn one coreset from training (and optional validation) queries.
    Learn(LearnArgs),
    /// Build a sampling-based coreset.
    Baseline(BaselineArgs),
    /// Score a coreset: Err_opt and Err_avg on test queries.
    Eval(EvalArgs),
    /// Hoeffding sample sizes for given or estimated loss bounds.
    Bounds(BoundsArgs),
    /// Empirical checks of the sample-size bounds.
    Verify(VerifyArgs),
    /// Run a full sweep from a JSON config.
    Experiment(ExperimentArgs),
    /// Generate a query pool from gradient-descent trajectories.
    GenQueries(GenQueriesArgs),
    /// Write a synthetic dataset with a planted model to CSV.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Linreg,
    Logreg,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Feature columns, by header name or zero-based index.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    /// Label column.
    #[arg(long)]
    label: Option<String>,
    /// Optional weight column; rows get weight 1 otherwise.
    #[arg(long)]
    weight: Option<String>,
    /// Whether the first row is a header; detected when omitted.
    #[arg(long)]
    header: Option<bool>,
    /// Map {0,1} labels to {-1,+1}.
    #[arg(long)]
    pm1: bool,
    /// Standardize each feature to mean 0, variance 1.
    #[arg(long)]
    standardize: bool,
    #[arg(long, value_enum, default_value = "linreg")]
    loss: LossArg,
    /// Append a constant-1 feature handled by the query.
    #[arg(long)]
    intercept: bool,
}

fn column(s: &str) -> Column {
    s.parse::<usize>().map(Column::Index).unwrap_or_else(|_| Column::Name(s.to_string()))
}

impl DataArgs {
    fn loss(&self) -> LossModel {
        let kind = match self.loss {
            LossArg::Linreg => LossKind::LinearRegression,
            LossArg::Logreg => LossKind::LogisticRegression,
        };
        LossModel { kind, intercept: self.intercept }
    }

    fn load(&self) -> Result<WeightedLabeledSet> {
        let path = self.data.as_ref().ok_or_else(|| Error::Config("--data is required".into()))?;
        let label = self.label.as_ref().ok_or_else(|| Error::Config("--label is required".into()))?;
        let schema = CsvSchema {
            path: path.to_string_lossy().into_owned(),
            features: self.features.iter().map(|f| column(f)).collect(),
            label: column(label),
            weight: self.weight.as_deref().map(column),
            header: self.header,
            label_map: if self.pm1 { LabelMap::Pm1 } else { LabelMap::Identity },
            standardize: self.standardize,
        };
        let set = load_dataset(path, &schema)?.set;
        set.check_labels(&self.loss())?;
        Ok(set)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Average,
    Practical,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Subsample,
    Gaussian,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Training queries CSV.
    #[arg(long)]
    train: PathBuf,
    /// Validation queries CSV, used for snapshot selection.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    size: usize,
    /// Learner settings as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    learn_weights: Option<bool>,
    #[arg(long)]
    no_early_stop: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output coreset JSON.
    #[arg(long)]
    out: PathBuf,
    /// Output training report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Uniform,
    Leverage,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    method: BaselineMethod,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    coreset: PathBuf,
    /// Test queries CSV.
    #[arg(long)]
    test: PathBuf,
    /// Skip the optimum-based metric.
    #[arg(long)]
    no_err_opt: bool,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    delta: Vec<f64>,
    /// Loss bound; required unless --estimate-M is given.
    #[arg(long = "M", value_delimiter = ',')]
    m: Vec<f64>,
    /// Estimate M from --data and --queries.
    #[arg(long = "estimate-M")]
    estimate_m: bool,
    /// Query pool CSV for --estimate-M.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    /// Sample-mean cost against its expectation on a finite universe.
    Claim1,
    /// Coreset premises and the 3-eps conclusion on a finite universe.
    Claim2,
    /// Mean-ratio error implies a mean-difference bound on a query set.
    Chain,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    check: Check,
    #[command(flatten)]
    data: DataArgs,
    /// Query CSV: the finite universe (uniform measure) or the chain's queries.
    #[arg(long)]
    queries: PathBuf,
    /// Coreset JSON for claim2 and chain.
    #[arg(long)]
    coreset: Option<PathBuf>,
    /// Absolute eps; claim1 defaults to 0.1 times the exact M.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GenQueriesArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 20)]
    n_starts: usize,
    #[arg(long, default_value_t = 119)]
    steps: usize,
    #[arg(long, default_value_t = 0.01)]
    gd_lr: f64,
    #[arg(long, default_value_t = 1.0)]
    init_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train,validation,test sizes; writes train.csv, validation.csv and
    /// test.csv into --out-dir.
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<usize>>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Unsplit pool CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKindArg {
    Linear,
    Logistic,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKindArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn read_queries(path: &Path) -> Result<Vec<Query>> {
    read_pool_csv(File::open(path)?)
}

fn read_coreset(path: &Path) -> Result<Coreset> {
    let raw: Coreset = serde_json::from_reader(File::open(path)?)?;
    // re-validate: deserialization does not check weights or shapes
    Coreset::from_flat(raw.dim(), raw.points_flat().to_vec(), raw.weights().to_vec(), raw.labels().to_vec())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn learn(a: LearnArgs) -> Result<()> {
    let loss = a.data.loss();
    let p = a.data.load()?;
    let mut cfg = match &a.config {
        Some(path) => serde_json::from_reader(File::open(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => TrainConfig::defaults_for(&loss, a.size),
    };
    cfg.coreset_size = a.size;
    cfg.seed = a.seed;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.algorithm {
        cfg.algorithm = match v {
            AlgorithmArg::Average => Algorithm::Average,
            AlgorithmArg::Practical => Algorithm::Practical,
        };
    }
    if let Some(v) = a.init {
        cfg.init = match v {
            InitArg::Subsample => InitStrategy::Subsample,
            InitArg::Gaussian => InitStrategy::Gaussian,
        };
    }
    if let Some(v) = a.learn_weights {
        cfg.learn_weights = v;
    }
    if a.no_early_stop {
        cfg.early_stop_on_validation = false;
    }
    cfg.validate()?;
    let train = ScoredQueries::new(&p, &loss, &read_queries(&a.train)?)?;
    let val = a
        .val
        .as_deref()
        .map(|v| read_queries(v).and_then(|q| ScoredQueries::new(&p, &loss, &q)))
        .transpose()?;
    let (c, report) = learn_coreset(&p, &train, val.as_ref(), &loss, &cfg)?;
    write_json(&a.out, &c)?;
    if let Some(r) = &a.report {
        write_json(r, &report)?;
    }
    eprintln!(
        "learned {} points; best epoch {}, final training loss {}",
        c.len(),
        report.best_epoch,
        report.epoch_train_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let p = a.data.load()?;
    let c = match a.method {
        BaselineMethod::Uniform => uniform_coreset(&p, a.size, a.seed)?,
        BaselineMethod::Leverage => leverage_coreset(&p, &a.data.loss(), a.size, a.seed)?,
    };
    write_json(&a.out, &c)
}

fn eval(a: EvalArgs) -> Result<()> {
    let loss = a.data.loss();
    let p = a.data.load()?;
    let c = read_coreset(&a.coreset)?;
    let test = ScoredQueries::new(&p, &loss, &read_queries(&a.test)?)?;
    let avg = err_avg_scored(&c, &loss, &test)?;
    let opt = if a.no_err_opt { None } else { Some(err_opt(&p, &c, &loss)?) };
    print_json(&serde_json::json!({
        "err_opt": opt,
        "err_avg": avg.value,
        "filtered_queries": avg.filtered,
        "test_queries": test.len(),
    }))
}

fn bounds(a: BoundsArgs) -> Result<()> {
    let ms = if a.estimate_m {
        let path = a.queries.as_ref().ok_or_else(|| Error::Config("--estimate-M needs --queries".into()))?;
        let loss = a.data.loss();
        let p = a.data.load()?;
        let pool = read_queries(path)?;
        let m_point = estimate_m(&p, &loss, &pool)?;
        let m_set = estimate_set_m(&p, &loss, &pool)?;
        eprintln!("M_point = {m_point} (max point loss x1.1), M_set = {m_set} (max total cost x1.1)");
        vec![m_point]
    } else if a.m.is_empty() {
        return Err(Error::Config("give --M or --estimate-M".into()));
    } else {
        a.m.clone()
    };
    let mut rows = Vec::new();
    for &m in &ms {
        for &d in &a.delta {
            for &e in &a.eps {
                rows.push(bound_row(e, d, m)?);
            }
        }
    }
    write_bound_table(&rows, io::stdout().lock())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let loss = a.data.loss();
    let p = a.data.load()?;
    let queries = read_queries(&a.queries)?;
    let need_coreset = || {
        a.coreset
            .as_deref()
            .ok_or_else(|| Error::Config("--coreset is required for this check".into()))
            .and_then(read_coreset)
    };
    match a.check {
        Check::Claim1 => {
            let space = MeasurableQuerySpace::uniform(p, loss, queries)?;
            let eps = match a.eps {
                Some(e) => e,
                None => 0.1 * space.costs(&space.ground)?.iter().fold(0.0f64, |x, c| x.max(c.abs())),
            };
            let r = verify_claim1(&space, eps, a.delta, a.trials, a.seed)?;
            print_json(&serde_json::json!({ "report": r, "passed": r.passed() }))
        }
        Check::Claim2 => {
            let c = need_coreset()?;
            let eps = a.eps.ok_or_else(|| Error::Config("claim2 needs --eps".into()))?;
            let space = MeasurableQuerySpace::uniform(p, loss, queries)?;
            print_json(&verify_claim2(&c, &space, eps, a.delta, a.trials, a.seed)?)
        }
        Check::Chain => {
            let c = need_coreset()?;
            let chain = ratio_chain(&p, &c, &loss, &queries)?;
            print_json(&serde_json::json!({ "chain": chain, "holds": chain.holds(1e-10) }))
        }
    }
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let overrides = Overrides { seed: a.seed, out_dir: a.out_dir, threads: a.threads };
    let s = run_experiment(&cfg, &overrides)?;
    let failed = s.table.rows.iter().filter(|r| !r.ok()).count();
    eprintln!("{} trials ({failed} failed); results in {}", s.table.rows.len(), s.out_dir.display());
    Ok(())
}

fn gen_queries(a: GenQueriesArgs) -> Result<()> {
    let loss = a.data.loss();
    let p = a.data.load()?;
    let cfg = TrajectoryConfig {
        n_starts: a.n_starts,
        steps_per_start: a.steps,
        gd_lr: a.gd_lr,
        init_scale: a.init_scale,
        seed: a.seed,
    };
    let pool = trajectory_queries(&p, &loss, &cfg)?;
    if a.out.is_none() && a.split.is_none() {
        return Err(Error::Config("give --out and/or --split with --out-dir".into()));
    }
    if let Some(out) = &a.out {
        write_pool_csv(&pool, BufWriter::new(File::create(out)?))?;
    }
    if let Some(split) = &a.split {
        if split.len() != 3 {
            return Err(Error::Config("--split takes three sizes: train,validation,test".into()));
        }
        let dir = a.out_dir.clone().ok_or_else(|| Error::Config("--split needs --out-dir".into()))?;
        let (tr, va, te) = split_queries(&pool, (split[0], split[1], split[2]), a.seed)?;
        std::fs::create_dir_all(&dir)?;
        for batch in [tr, va, te] {
            let path = dir.join(format!("{}.csv", batch.role.as_str()));
            write_pool_csv(&batch.queries, BufWriter::new(File::create(path)?))?;
        }
    }
    eprintln!("{} queries", pool.len());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let kind = match a.kind {
        SynthKindArg::Linear => SynthKind::Linear,
        SynthKindArg::Logistic => SynthKind::Logistic,
    };
    let data = synth_dataset(&SynthConfig { kind, n: a.n, d: a.d, noise: a.noise, offset: 0.0 }, a.seed)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&a.out)?));
    let mut header: Vec<String> = (0..a.d).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    let set = &data.set;
    for i in 0..set.len() {
        let mut rec: Vec<String> = set.point(i).iter().map(|x| x.to_string()).collect();
        rec.push(set.labels()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Learn(a) => learn(a),
        Command::Baseline(a) => baseline(a),
        Command::Eval(a) => eval(a),
        Command::Bounds(a) => bounds(a),
        Command::Verify(a) => verify(a),
        Command::Experiment(a) => experiment(a),
        Command::GenQueries(a) => gen_queries(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
