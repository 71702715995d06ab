//! `conerank`: train, rank, evaluate, synthesize, and measure stability.
//!
//! Exit status: 0 on success, 2 for usage or data errors, 3 for numerical
//! failures.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use conerank::data::{serialize_letor, standardize};
use conerank::metrics::{evaluate, QueryRanking};
use conerank::spectrum::pair_spectrum;
use conerank::stability::loqo_experiment;
use conerank::tsv::{real, TsvWriter};
use conerank::{
    parse_letor, synth_generate, train, ConeModel, Dataset, Error, EvalReport, FoldInVariant,
    HyperParams, Schedule, SynthSpec, TrainConfig,
};

/// Digits written for synthetic features: enough that a parsed file
/// reproduces the generated doubles exactly.
const SYNTH_DIGITS: usize = 17;

#[derive(Parser)]
#[command(name = "conerank", version, about = "Pairwise ranking by learning a polyhedral cone")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a cone basis from a LETOR file.
    Train(TrainCmd),
    /// Rank every query of a LETOR file with a saved model.
    Rank(RankCmd),
    /// Score rankings against labels (MAP, NDCG@k).
    Eval(EvalCmd),
    /// Generate a planted-cone dataset.
    Synth(SynthCmd),
    /// Leave-one-query-out stability experiment.
    Stability(StabilityCmd),
    /// Eigenvalues of the second moment of normalized pair differences.
    Spectrum(SpectrumCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Sg,
    Eg,
    EgApprox,
    Exact,
}

impl From<VariantArg> for FoldInVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Sg => FoldInVariant::Sg,
            VariantArg::Eg => FoldInVariant::Eg,
            VariantArg::EgApprox => FoldInVariant::EgApprox,
            VariantArg::Exact => FoldInVariant::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    PerPair,
    FullBatch,
}

impl ScheduleArg {
    fn schedule(self) -> Schedule {
        match self {
            ScheduleArg::PerPair => Schedule::PerPair,
            ScheduleArg::FullBatch => Schedule::FullBatch,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ScheduleArg::PerPair => "per-pair",
            ScheduleArg::FullBatch => "full-batch",
        }
    }
}

/// Hyperparameters shared by `train` and `stability`; unset values take the
/// defaults for the data dimension.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Number of basis vectors.
    #[arg(short = 'k', long = "k", default_value_t = 10)]
    k: usize,
    /// Learning rate of the fold-in variant (default 0.001 for sg/exact,
    /// 0.005 for eg).
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum outer epochs.
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    /// Relative risk change that stops training.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    inner_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    inner_tol: f64,
    /// Normalization offset (default 1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Normalization radius (default sqrt(N)).
    #[arg(long)]
    rho: Option<f64>,
    /// Column-norm cap (default 2 rho).
    #[arg(long)]
    cap: Option<f64>,
    /// Use unweighted pair losses.
    #[arg(long)]
    unweighted: bool,
}

impl ConfigArgs {
    fn config(&self, dim: usize, variant: FoldInVariant, schedule: Schedule) -> conerank::Result<TrainConfig> {
        let mut hyper = HyperParams::for_dim(dim);
        hyper.k = self.k;
        if let Some(a) = self.alpha {
            hyper.alpha = a;
        }
        if let Some(r) = self.rho {
            hyper.rho = r;
            hyper.cap = 2.0 * r;
        }
        if let Some(c) = self.cap {
            hyper.cap = c;
        }
        if let Some(mu) = self.mu {
            hyper.mu_sg = mu;
            hyper.mu_eg = mu;
        }
        let mut config = TrainConfig::new(hyper);
        config.variant = variant;
        config.schedule = schedule;
        config.weighted = !self.unweighted;
        config.max_outer_epochs = self.epochs;
        config.max_inner_iters = self.inner_iters;
        config.outer_tol = self.tol;
        config.inner_tol = self.inner_tol;
        config.seed = self.seed;
        config.validate()?;
        Ok(config)
    }
}

fn echo_config(config: &TrainConfig, schedule: &str) -> Vec<(&'static str, String)> {
    let h = &config.hyper;
    vec![
        ("K", h.k.to_string()),
        ("variant", config.variant.name().to_string()),
        ("schedule", schedule.to_string()),
        ("mu", real(config.mu())),
        ("alpha", real(h.alpha)),
        ("rho", real(h.rho)),
        ("c", real(h.cap)),
        ("weighted", config.weighted.to_string()),
        ("epochs", config.max_outer_epochs.to_string()),
        ("tol", real(config.outer_tol)),
        ("inner_iters", config.max_inner_iters.to_string()),
        ("inner_tol", real(config.inner_tol)),
        ("seed", config.seed.to_string()),
    ]
}

#[derive(Args)]
struct TrainCmd {
    /// Training data in LETOR format.
    #[arg(long = "train")]
    train_file: PathBuf,
    /// Model output (required unless --sweep-k).
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Per-epoch risk trace output.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sg")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "per-pair")]
    schedule: ScheduleArg,
    #[command(flatten)]
    config: ConfigArgs,
    /// Train once per listed K and evaluate each on --eval-file.
    #[arg(long, value_delimiter = ',')]
    sweep_k: Vec<usize>,
    #[arg(long)]
    eval_file: Option<PathBuf>,
    /// Sweep table output.
    #[arg(long)]
    sweep_out: Option<PathBuf>,
}

#[derive(Args)]
struct RankCmd {
    #[arg(long)]
    model: PathBuf,
    /// Data to rank, LETOR format (labels are ignored).
    #[arg(long = "test")]
    test_file: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalCmd {
    /// Rankings written by `rank`.
    #[arg(long)]
    rankings: PathBuf,
    /// LETOR file with the true labels.
    #[arg(long)]
    labels: PathBuf,
    /// NDCG cutoffs (default 1..10).
    #[arg(long, value_delimiter = ',')]
    cutoffs: Vec<usize>,
    /// Report output; the summary table always goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    k_true: usize,
    #[arg(long, default_value_t = 50)]
    queries: usize,
    #[arg(long, default_value_t = 10)]
    docs: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Queries moved to --test-output (taken from the end).
    #[arg(long, default_value_t = 0)]
    test_queries: usize,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    test_output: Option<PathBuf>,
    /// Ground-truth basis output.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityCmd {
    #[arg(long = "train")]
    train_file: PathBuf,
    /// Per-fold report output; the summary goes to stdout.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "full-batch")]
    schedule: ScheduleArg,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SpectrumCmd {
    #[arg(long = "train")]
    train_file: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(c) => cmd_train(&c),
        Command::Rank(c) => cmd_rank(&c),
        Command::Eval(c) => cmd_eval(&c),
        Command::Synth(c) => cmd_synth(&c),
        Command::Stability(c) => cmd_stability(&c),
        Command::Spectrum(c) => cmd_spectrum(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("conerank: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn load_letor(path: &Path) -> conerank::Result<Dataset> {
    let f = File::open(path).map_err(|e| io_context(path, e))?;
    parse_letor(BufReader::new(f)).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> conerank::Result<TsvWriter<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| io_context(path, e))?;
    Ok(TsvWriter::new(BufWriter::new(f)))
}

fn finish(w: TsvWriter<BufWriter<File>>) -> conerank::Result<()> {
    w.into_inner().flush()?;
    Ok(())
}

fn cmd_train(cmd: &TrainCmd) -> conerank::Result<()> {
    let data = load_letor(&cmd.train_file)?;
    let variant = cmd.variant.into();
    let schedule = cmd.schedule.schedule();
    if !cmd.sweep_k.is_empty() {
        return sweep(cmd, &data, variant, schedule);
    }
    let model_out = cmd
        .model_out
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("--model-out is required unless --sweep-k is given".into()))?;
    let config = cmd.config.config(data.dim, variant, schedule)?;
    let (model, report) = train(&data, &config)?;
    model.save(model_out)?;
    if let Some(path) = &cmd.trace_out {
        let mut w = create(path)?;
        let mut prov = vec![("command", "train".to_string())];
        prov.extend(echo_config(&config, cmd.schedule.name()));
        prov.push(("converged", report.converged.to_string()));
        prov.push(("proper", report.proper.proper.to_string()));
        w.provenance(&prov)?;
        w.header(&["epoch", "risk"])?;
        for (epoch, risk) in &report.risk_trace {
            w.row(&[epoch, &real(*risk)])?;
        }
        finish(w)?;
    }
    eprintln!(
        "trained K={} on {} queries: risk {} -> {} in {} epochs{}",
        config.hyper.k,
        data.queries.len(),
        report.initial_risk(),
        report.final_risk(),
        report.epochs_run,
        if report.converged { "" } else { " (epoch limit)" }
    );
    if !report.proper.proper {
        eprintln!("warning: learned cone is not proper (singular value ratio {})", report.proper.ratio);
    }
    Ok(())
}

fn sweep(cmd: &TrainCmd, data: &Dataset, variant: FoldInVariant, schedule: Schedule) -> conerank::Result<()> {
    let (Some(eval_file), Some(out)) = (&cmd.eval_file, &cmd.sweep_out) else {
        return Err(Error::InvalidConfig("--sweep-k needs --eval-file and --sweep-out".into()));
    };
    let test = load_letor(eval_file)?;
    let mut w = create(out)?;
    let base = cmd.config.config(data.dim, variant, schedule)?;
    let mut prov = vec![("command", "train --sweep-k".to_string())];
    prov.extend(echo_config(&base, cmd.schedule.name()).into_iter().filter(|(k, _)| *k != "K"));
    w.provenance(&prov)?;
    let cutoffs = conerank::metrics::default_cutoffs();
    let mut columns = vec!["K".to_string(), "MAP".into(), "meanNDCG".into(), "final_risk".into()];
    columns.extend(cutoffs.iter().map(|k| format!("NDCG@{k}")));
    w.header(&columns.iter().map(String::as_str).collect::<Vec<_>>())?;
    for &k in &cmd.sweep_k {
        let mut config = base.clone();
        config.hyper.k = k;
        let (model, report) = train(data, &config)?;
        let rankings = rank_dataset(&model, &test)?;
        let eval = evaluate(&rankings, &test, &cutoffs)?;
        let mut fields = vec![k.to_string(), real(eval.map), real(eval.mean_ndcg), real(report.final_risk())];
        fields.extend(eval.ndcg_at.values().map(|&v| real(v)));
        w.row(&fields.iter().map(|f| f as &dyn std::fmt::Display).collect::<Vec<_>>())?;
        eprintln!("K={k}: MAP {:.4} mean NDCG {:.4}", eval.map, eval.mean_ndcg);
    }
    finish(w)
}

/// Ranks every query; data with fewer features than the model is zero-padded.
fn rank_dataset(model: &ConeModel, data: &Dataset) -> conerank::Result<Vec<QueryRanking>> {
    if data.dim > model.dim() {
        return Err(Error::input(format!(
            "data has {} features but the model expects {}",
            data.dim,
            model.dim()
        )));
    }
    let data = data.clone().with_dim(model.dim())?;
    let (standardized, _) = standardize(&data, Some(&model.stats))?;
    standardized
        .queries
        .iter()
        .map(|q| {
            let r = conerank::rank_query(&model.basis, &q.docs, model.norm)?;
            Ok(QueryRanking { query_id: q.query_id.clone(), order: r.ordered_doc_indices })
        })
        .collect()
}

fn cmd_rank(cmd: &RankCmd) -> conerank::Result<()> {
    let model = ConeModel::load(&cmd.model).map_err(|e| match e {
        Error::Io(io) => io_context(&cmd.model, io),
        other => other,
    })?;
    let data = load_letor(&cmd.test_file)?;
    if data.dim > model.dim() {
        return Err(Error::input(format!(
            "data has {} features but the model expects {}",
            data.dim,
            model.dim()
        )));
    }
    let data = data.with_dim(model.dim())?;
    let mut w = create(&cmd.output)?;
    w.provenance(&[
        ("command", "rank".to_string()),
        ("N", model.dim().to_string()),
        ("K", model.basis.order().to_string()),
        ("queries", data.queries.len().to_string()),
    ])?;
    w.header(&["qid", "rank", "doc", "votes"])?;
    for q in &data.queries {
        let r = model.rank(&q.docs)?;
        for (pos, &d) in r.ordered_doc_indices.iter().enumerate() {
            w.row(&[&q.query_id, &(pos + 1), &d, &r.scores[d]])?;
        }
    }
    finish(w)
}

/// Reads `qid rank doc votes` rows back into per-query orders.
fn read_rankings(path: &Path) -> conerank::Result<Vec<QueryRanking>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_context(path, e))?;
    let mut by_query: Vec<(String, BTreeMap<usize, usize>)> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse { line: line_no, msg: format!("{}: {msg}", path.display()) };
        let fields: Vec<&str> = line.split('\t').collect();
        let [qid, rank, doc, _votes] = fields.as_slice() else {
            return Err(bad("expected 4 tab-separated fields"));
        };
        let rank: usize = rank.parse().map_err(|_| bad("bad rank"))?;
        let doc: usize = doc.parse().map_err(|_| bad("bad document index"))?;
        let slot = *index.entry(qid.to_string()).or_insert_with(|| {
            by_query.push((qid.to_string(), BTreeMap::new()));
            by_query.len() - 1
        });
        if by_query[slot].1.insert(rank, doc).is_some() {
            return Err(bad("duplicate rank"));
        }
    }
    Ok(by_query
        .into_iter()
        .map(|(query_id, ranks)| QueryRanking { query_id, order: ranks.into_values().collect() })
        .collect())
}

fn cmd_eval(cmd: &EvalCmd) -> conerank::Result<()> {
    let labels = load_letor(&cmd.labels)?;
    let rankings = read_rankings(&cmd.rankings)?;
    let report = evaluate(&rankings, &labels, &cmd.cutoffs)?;
    if let Some(path) = &cmd.output {
        let mut w = create(path)?;
        write_eval(&mut w, &report)?;
        finish(w)?;
    }
    print_eval(&report);
    Ok(())
}

fn write_eval<W: Write>(w: &mut TsvWriter<W>, report: &EvalReport) -> std::io::Result<()> {
    let cutoffs: Vec<String> = report.cutoffs.iter().map(|k| k.to_string()).collect();
    w.provenance(&[
        ("command", "eval".to_string()),
        ("queries", report.per_query.len().to_string()),
        ("cutoffs", cutoffs.join(",")),
    ])?;
    let mut columns = vec!["qid".to_string(), "AP".into(), "meanNDCG".into()];
    columns.extend(report.cutoffs.iter().map(|k| format!("NDCG@{k}")));
    w.header(&columns.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut emit = |id: &str, ap: f64, mean: f64, ndcg: &mut dyn Iterator<Item = f64>| {
        let mut fields = vec![id.to_string(), real(ap), real(mean)];
        fields.extend(ndcg.map(real));
        w.row(&fields.iter().map(|f| f as &dyn std::fmt::Display).collect::<Vec<_>>())
    };
    for q in &report.per_query {
        emit(&q.query_id, q.average_precision, q.mean_ndcg, &mut q.ndcg.iter().copied())?;
    }
    emit("all", report.map, report.mean_ndcg, &mut report.ndcg_at.values().copied())
}

fn print_eval(report: &EvalReport) {
    println!("queries    {}", report.per_query.len());
    println!("MAP        {:.4}", report.map);
    for (k, v) in &report.ndcg_at {
        println!("NDCG@{k:<5} {v:.4}");
    }
    println!("mean NDCG  {:.4}", report.mean_ndcg);
}

fn cmd_synth(cmd: &SynthCmd) -> conerank::Result<()> {
    let spec = SynthSpec {
        dim: cmd.dim,
        k_true: cmd.k_true,
        num_queries: cmd.queries + cmd.test_queries,
        docs_per_query: cmd.docs,
        noise_std: cmd.noise,
        seed: cmd.seed,
    };
    let mut data = synth_generate(&spec)?;
    let test = data.split_off(cmd.test_queries);
    write_text(&cmd.output, &serialize_letor(&data.dataset, SYNTH_DIGITS))?;
    match (&cmd.test_output, cmd.test_queries) {
        (Some(path), _) => write_text(path, &serialize_letor(&test.dataset, SYNTH_DIGITS))?,
        (None, 0) => {}
        (None, _) => return Err(Error::InvalidConfig("--test-queries needs --test-output".into())),
    }
    if let Some(path) = &cmd.truth_out {
        let u = data.truth.matrix();
        let mut w = create(path)?;
        w.provenance(&[
            ("command", "synth".to_string()),
            ("N", cmd.dim.to_string()),
            ("K_true", cmd.k_true.to_string()),
            ("queries", cmd.queries.to_string()),
            ("test_queries", cmd.test_queries.to_string()),
            ("docs", cmd.docs.to_string()),
            ("noise", real(cmd.noise)),
            ("seed", cmd.seed.to_string()),
            ("c", real(data.truth.cap())),
        ])?;
        let columns: Vec<String> = (1..=u.ncols()).map(|k| format!("u{k}")).collect();
        w.header(&columns.iter().map(String::as_str).collect::<Vec<_>>())?;
        for row in u.row_iter() {
            let fields: Vec<String> = row.iter().map(|&v| real(v)).collect();
            w.row(&fields.iter().map(|f| f as &dyn std::fmt::Display).collect::<Vec<_>>())?;
        }
        finish(w)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> conerank::Result<()> {
    std::fs::write(path, text).map_err(|e| io_context(path, e))
}

fn cmd_stability(cmd: &StabilityCmd) -> conerank::Result<()> {
    let data = load_letor(&cmd.train_file)?;
    let config = cmd.config.config(data.dim, cmd.variant.into(), cmd.schedule.schedule())?;
    let report = loqo_experiment(&data, &config)?;
    let mut w = create(&cmd.output)?;
    let mut prov = vec![("command", "stability".to_string())];
    prov.extend(echo_config(&config, cmd.schedule.name()));
    w.provenance(&prov)?;
    w.provenance(&[
        ("queries", report.queries.to_string()),
        ("beta_hat", real(report.beta_hat)),
        ("beta_hat_weighted", real(report.beta_hat_weighted)),
        ("max_phi", real(report.max_phi)),
        ("s_max", real(report.s_max)),
        ("lambda_u", real(report.lambda_u)),
        ("bound", real(report.bound)),
        ("holds", report.holds.to_string()),
        ("gamma_hat", real(report.gamma_hat)),
        ("risk", real(report.risk)),
        ("epsilon", real(report.epsilon)),
        ("generalization_bound", real(report.generalization_bound)),
    ])?;
    w.header(&["fold", "qid", "basis_shift", "max_loss_change"])?;
    for f in &report.per_fold {
        w.row(&[&f.left_out, &f.query_id, &real(f.basis_shift), &real(f.max_loss_change)])?;
    }
    finish(w)?;
    println!("queries               {}", report.queries);
    println!("beta_hat              {:.6e}", report.beta_hat);
    println!("s_max                 {:.6e}", report.s_max);
    println!("bound                 {:.6e}", report.bound);
    println!("holds                 {}", report.holds);
    println!("gamma_hat             {:.6e}", report.gamma_hat);
    println!("generalization bound  {:.6e} (epsilon {})", report.generalization_bound, report.epsilon);
    Ok(())
}

fn cmd_spectrum(cmd: &SpectrumCmd) -> conerank::Result<()> {
    let data = load_letor(&cmd.train_file)?;
    let mut hyper = HyperParams::for_dim(data.dim);
    if let Some(a) = cmd.alpha {
        hyper.alpha = a;
    }
    if let Some(r) = cmd.rho {
        hyper.rho = r;
    }
    let norm = hyper.normalization();
    let (standardized, _) = standardize(&data, None)?;
    let groups = standardized.pair_groups(norm)?;
    let eig = pair_spectrum(&groups)?;
    let mut w = create(&cmd.output)?;
    w.provenance(&[
        ("command", "spectrum".to_string()),
        ("N", data.dim.to_string()),
        ("pairs", groups.iter().map(Vec::len).sum::<usize>().to_string()),
        ("alpha", real(norm.alpha)),
        ("rho", real(norm.rho)),
    ])?;
    w.header(&["index", "eigenvalue"])?;
    for (i, v) in eig.iter().enumerate() {
        w.row(&[&(i + 1), &real(*v)])?;
    }
    finish(w)
}
