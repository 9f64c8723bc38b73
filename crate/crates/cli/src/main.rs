//! Batch front end for the survival topic-model pipeline. Every subcommand
//! reads and writes explicit file paths; nothing depends on the working
//! directory. Training progress (the per-iteration objective) is logged to
//! standard error.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use survlda::corpus::{load_corpus, save_corpus, Corpus};
use survlda::docbuild::{
    build_documents, read_background, read_clinical, read_feature_matrix, read_outcomes,
    read_two_column_map, BuildConfig, MatrixKind,
};
use survlda::error::{Error, Result};
use survlda::predict::{infer_corpus, topic_membership_report, Prediction};
use survlda::simgen::{generate_corpus, random_params, save_truth, CensorDist};
use survlda::survival::{weighted_km, BaselineHazard, HazardFamily, KMCurve};
use survlda::trainer::{
    fit, load_model, save_model, topic_curves_tsv, topic_survival_curves, BackgroundSpec,
    TrainConfig,
};
use survlda::vem::Mode;

#[derive(Parser)]
#[command(
    name = "survlda",
    version,
    about = "Topic models for patient documents with survival supervision"
)]
struct Cli {
    /// Cap the worker threads used for per-document work. Results are
    /// identical for every value; this only trades time for cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Lda,
    Survlda,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Mode {
        match m {
            CliMode::Lda => Mode::Lda,
            CliMode::Survlda => Mode::Survlda,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliHazard {
    Exponential,
    Weibull,
    Breslow,
}

impl From<CliHazard> for HazardFamily {
    fn from(h: CliHazard) -> HazardFamily {
        match h {
            CliHazard::Exponential => HazardFamily::Exponential,
            CliHazard::Weibull => HazardFamily::Weibull,
            CliHazard::Breslow => HazardFamily::Breslow,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build a corpus file from clinical and genomic tables.
    BuildDocs(BuildDocsArgs),
    /// Fit a topic model (optionally survival-supervised) to a corpus.
    Train(TrainArgs),
    /// Infer topic weights and survival predictions for documents.
    Predict(PredictArgs),
    /// Emit Kaplan-Meier survival curves as tab-separated tables.
    Km(KmArgs),
    /// Generate a synthetic corpus with known parameters.
    Simulate(SimulateArgs),
    /// Print the highest-weight words of each topic.
    TopWords(TopWordsArgs),
}

#[derive(Args)]
struct BuildDocsArgs {
    /// Expression matrix: TSV, genes as rows, patients as columns, NA for missing.
    #[arg(long, value_name = "FILE")]
    expression: PathBuf,
    /// Methylation matrix: TSV, sites as rows, patients as columns, NA for missing.
    #[arg(long, value_name = "FILE")]
    methylation: PathBuf,
    /// Two-column TSV mapping methylation site id to gene name.
    #[arg(long, value_name = "FILE")]
    site_map: PathBuf,
    /// Two-column TSV (patient, drug), one row per administration.
    #[arg(long, value_name = "FILE")]
    clinical: PathBuf,
    /// Optional two-column TSV (raw drug name, canonical word).
    #[arg(long, value_name = "FILE")]
    synonyms: Option<PathBuf>,
    /// Three-column TSV (patient, survival time, event 0/1).
    #[arg(long, value_name = "FILE")]
    outcomes: PathBuf,
    /// Optional JSON file overriding document-construction thresholds.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out_corpus: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    mode: CliMode,
    /// Number of topics.
    #[arg(long)]
    k: usize,
    /// Total Dirichlet concentration; the prior is symmetric alpha0/k.
    #[arg(long, default_value_t = 1.0)]
    alpha0: f64,
    #[arg(long, value_enum, default_value_t = CliHazard::Exponential)]
    hazard: CliHazard,
    /// Two-column TSV (word, weight) fixing the last topic as a background
    /// topic with zero survival coefficient.
    #[arg(long, value_name = "FILE")]
    background: Option<PathBuf>,
    /// Topic whose survival coefficient is anchored at zero when no
    /// background file is given.
    #[arg(long, value_name = "K")]
    reference_topic: Option<usize>,
    /// Relative objective change that ends the outer loop.
    #[arg(long, default_value_t = 1e-5)]
    em_tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    out_model: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Output TSV: id, topic weights, linear predictor, median lifetime, group.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    threshold_hi: f64,
    #[arg(long, default_value_t = 0.2)]
    threshold_lo: f64,
    /// Topic whose weight defines the high/low/middle grouping.
    #[arg(long, default_value_t = 0)]
    topic: usize,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct KmGrouping {
    /// One weighted curve per topic, weights = fitted topic proportions.
    #[arg(long)]
    by_topic: bool,
    /// Classical curves for the high/middle/low membership groups.
    #[arg(long)]
    by_group: bool,
}

#[derive(Args)]
struct KmArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    #[command(flatten)]
    grouping: KmGrouping,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Grouping topic for --by-group.
    #[arg(long, default_value_t = 0)]
    topic: usize,
    #[arg(long, default_value_t = 0.8)]
    threshold_hi: f64,
    #[arg(long, default_value_t = 0.2)]
    threshold_lo: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of topics.
    #[arg(long)]
    k: usize,
    /// Vocabulary size; words are named w0..w{v-1}.
    #[arg(long)]
    v: usize,
    /// Number of documents.
    #[arg(long)]
    d: usize,
    /// Words per document.
    #[arg(long)]
    n: usize,
    /// Total Dirichlet concentration for the symmetric prior alpha0/k.
    #[arg(long, default_value_t = 1.0)]
    alpha0: f64,
    /// Comma-separated survival coefficients, one per topic.
    #[arg(long, value_name = "B1,B2,...")]
    beta: String,
    /// Baseline hazard: "exponential:RATE" or "weibull:SCALE,SHAPE".
    #[arg(long, value_name = "SPEC", default_value = "exponential:1.0")]
    hazard: String,
    /// Censoring: "none", "exponential:RATE", or "administrative:TIME".
    #[arg(long, value_name = "SPEC", default_value = "none")]
    censor: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    out_corpus: PathBuf,
    /// Also write the generating parameters and latent variables here.
    #[arg(long, value_name = "FILE")]
    out_truth: Option<PathBuf>,
}

#[derive(Args)]
struct TopWordsArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Words listed per topic.
    #[arg(long, default_value_t = 20)]
    n: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("survlda: could not configure the thread pool: {e}");
            return ExitCode::from(1);
        }
    }

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("survlda: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) | Error::OptimFailed { .. } => 2,
                _ => 1,
            })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::BuildDocs(a) => cmd_build_docs(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Km(a) => cmd_km(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::TopWords(a) => cmd_top_words(a),
    }
}

fn cmd_build_docs(a: BuildDocsArgs) -> Result<()> {
    let expression = read_feature_matrix(&a.expression, MatrixKind::Expression)?;
    let methylation = read_feature_matrix(&a.methylation, MatrixKind::Methylation)?;
    let site_map = read_two_column_map(&a.site_map)?;
    let clinical = read_clinical(&a.clinical)?;
    let synonyms = match &a.synonyms {
        Some(p) => read_two_column_map(p)?,
        None => Default::default(),
    };
    let outcomes = read_outcomes(&a.outcomes)?;
    let config: BuildConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| Error::validation(format!("{}: {e}", p.display())))?,
        None => BuildConfig::default(),
    };
    let built = build_documents(
        &clinical,
        &expression,
        &methylation,
        &site_map,
        &synonyms,
        &outcomes,
        &config,
    )?;
    log::info!(
        "built {} documents over {} words",
        built.corpus.n_documents(),
        built.corpus.vocabulary.len()
    );
    save_corpus(&built.corpus, &a.out_corpus)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let background = match &a.background {
        Some(p) => Some(BackgroundSpec::new(read_background(p)?)),
        None => None,
    };
    let config = TrainConfig {
        k: a.k,
        alpha0: a.alpha0,
        mode: a.mode.into(),
        hazard_family: a.hazard.into(),
        background,
        reference_topic: a.reference_topic,
        em_tol: a.em_tol,
        em_max_iters: a.max_iters,
        seed: a.seed,
        restarts: a.restarts,
        ..TrainConfig::default()
    };
    let model = fit(&corpus, &config)?;
    log::info!(
        "final objective {:.6}, converged: {}",
        model.final_elbo(),
        model.converged
    );
    save_model(&model, &a.out_model)
}

fn format_median(m: Option<f64>) -> String {
    match m {
        None => String::new(),
        Some(v) if v.is_infinite() => "inf".into(),
        Some(v) => format!("{v}"),
    }
}

fn grouped_ids(
    preds: &[Prediction],
    hi: f64,
    lo: f64,
    topic: usize,
) -> Result<Vec<(&'static str, Vec<String>)>> {
    let report = topic_membership_report(preds, hi, lo, topic)?;
    Ok(vec![
        ("high", report.high),
        ("middle", report.middle),
        ("low", report.low),
    ])
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = load_corpus(&a.corpus)?;
    let preds = infer_corpus(&corpus, &model)?;
    let groups = grouped_ids(&preds, a.threshold_hi, a.threshold_lo, a.topic)?;
    let label = |id: &str| {
        groups
            .iter()
            .find(|(_, ids)| ids.iter().any(|i| i == id))
            .map(|(name, _)| *name)
            .unwrap_or("middle")
    };

    let mut out = String::from("id\ttheta_hat\tlinear_predictor\tmedian_lifetime\tgroup\n");
    for p in &preds {
        let theta = p
            .theta_hat
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            p.id,
            theta,
            p.linear_predictor,
            format_median(p.median_lifetime),
            label(&p.id)
        ));
    }
    let total_oov: usize = preds.iter().map(|p| p.n_oov_dropped).sum();
    if total_oov > 0 {
        log::warn!("dropped {total_oov} out-of-vocabulary tokens");
    }
    write_text(&a.out, &out)
}

fn cmd_km(a: KmArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = load_corpus(&a.corpus)?;
    let text = if a.grouping.by_topic {
        topic_curves_tsv(&topic_survival_curves(&model, &corpus)?)
    } else {
        let preds = infer_corpus(&corpus, &model)?;
        let groups = grouped_ids(&preds, a.threshold_hi, a.threshold_lo, a.topic)?;
        let mut text = String::from("group\ttime\tsurvival\n");
        for (name, ids) in &groups {
            let curve = group_curve(&corpus, ids)?;
            for p in &curve.points {
                text.push_str(&format!("{name}\t{}\t{}\n", p.time, p.survival));
            }
        }
        text
    };
    write_text(&a.out, &text)
}

/// Unweighted curve over the named documents' observed outcomes.
fn group_curve(corpus: &Corpus, ids: &[String]) -> Result<KMCurve> {
    let mut times = Vec::new();
    let mut events = Vec::new();
    for doc in &corpus.documents {
        if !ids.contains(&doc.id) {
            continue;
        }
        let o = doc
            .outcome
            .as_ref()
            .ok_or_else(|| Error::validation(format!("document {:?} has no outcome", doc.id)))?;
        times.push(o.time);
        events.push(o.event);
    }
    if times.is_empty() {
        return Ok(KMCurve {
            points: Vec::new(),
            weights_used: 0.0,
        });
    }
    weighted_km(&times, &events, &vec![1.0; times.len()])
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let beta = parse_floats(&a.beta)?;
    let hazard: BaselineHazard = a.hazard.parse()?;
    let censor: CensorDist = a.censor.parse()?;
    let params = random_params(a.k, a.v, a.alpha0, beta, hazard, a.seed)?;
    let (corpus, truth) = generate_corpus(&params, a.d, a.n, censor, a.seed)?;
    save_corpus(&corpus, &a.out_corpus)?;
    if let Some(p) = &a.out_truth {
        save_truth(&truth, p)?;
    }
    log::info!(
        "wrote {} documents; target censoring rate {:.3}",
        corpus.n_documents(),
        truth.censoring_rate_target
    );
    Ok(())
}

fn cmd_top_words(a: TopWordsArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut out = String::from("topic\trank\tword\tweight\n");
    for (kk, words) in model.top_words(a.n).iter().enumerate() {
        for (rank, (word, weight)) in words.iter().enumerate() {
            out.push_str(&format!("{kk}\t{}\t{word}\t{weight}\n", rank + 1));
        }
    }
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(out.as_bytes())?;
    Ok(())
}

fn write_text(path: &PathBuf, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("bad number {p:?} in {s:?}")))
        })
        .collect()
}
