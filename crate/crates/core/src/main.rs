use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use pca_adapt::error::{Error, Result};
use pca_adapt::experiments::{self, ExperimentConfig, RunLabels, Variant};
use pca_adapt::{familiarity, metrics, pca, retrieval, spectrum, store};
use pca_adapt::{FitSource, DEFAULT_BOOTSTRAP, DEFAULT_FOLDS, DEFAULT_K, DEFAULT_RATIO, DEFAULT_SEED};

/// PCA-based domain adaptation for dense retrieval embeddings.
#[derive(Debug, Parser)]
#[command(name = "pca-adapt", version, about)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a PCA model and save it under a file prefix.
    Fit(FitArgs),
    /// Project embeddings with a saved model.
    Project(ProjectArgs),
    /// Exact top-k cosine retrieval, optionally in a projected space.
    Retrieve(RetrieveArgs),
    /// Score a run file against relevance judgments.
    Eval(EvalArgs),
    /// Run the baseline and the chosen variants and compare them.
    Run(RunArgs),
    /// Evaluate one variant over a grid of retention ratios.
    Sweep(SweepArgs),
    /// Cross-validated evaluation of one variant.
    Cv(CvArgs),
    /// Eigenvalue spectrum with a power-law fit.
    Spectrum(SpectrumArgs),
    /// Paraphrase familiarity, or its correlation with retrieval gains.
    Familiarity(FamiliarityArgs),
    /// Relevant vs hard-negative similarity statistics before and after projection.
    Simdist(SimdistArgs),
    /// Convert embeddings between EMB1 and TSV, chosen by output extension.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Query embeddings.
    #[arg(long)]
    queries: PathBuf,
    /// Document embeddings; when given, the model is fitted on queries and documents.
    #[arg(long)]
    docs: Option<PathBuf>,
    /// Fraction of dimensions to keep.
    #[arg(long, default_value_t = DEFAULT_RATIO)]
    ratio: f64,
    /// Output file prefix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    /// Model file prefix.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    docs: PathBuf,
    /// Model file prefix; retrieval happens in the projected space.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Run file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Run file (query, doc, rank, score).
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Per-query metrics TSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// key = value file supplying defaults for the flags below.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    /// Comma-separated variants [default: all four].
    #[arg(long = "variant", value_delimiter = ',')]
    variants: Vec<Variant>,
    /// Retention ratio [default: 0.9].
    #[arg(long)]
    ratio: Option<f64>,
    /// Cutoff for all metrics [default: 10].
    #[arg(long)]
    k: Option<usize>,
    /// Seed for random compression [default: 42].
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset label for the comparison rows.
    #[arg(long)]
    dataset: Option<String>,
    /// Encoder label for the comparison rows.
    #[arg(long = "model-name")]
    model_name: Option<String>,
    /// Directory for run files, metrics and comparison.tsv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Ratios, comma-separated; `a,b,...,c` fills in the grid.
    #[arg(long, default_value = "0.05,0.1,...,1.0")]
    ratios: String,
    #[arg(long, default_value = "query_compression")]
    variant: Variant,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Curve TSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value = "query_compression")]
    variant: Variant,
    #[arg(long, default_value_t = DEFAULT_RATIO)]
    ratio: f64,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Seed for the fold shuffle and random compression.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Per-query metrics TSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    /// Embeddings whose covariance spectrum is analysed.
    #[arg(long)]
    input: PathBuf,
    /// Bootstrap replicates for the goodness-of-fit p-value (0 skips it).
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    bootstrap: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Report TSV to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["input", "correlate"])))]
struct FamiliarityArgs {
    /// Embeddings of texts (`id`) and their paraphrases (`id#p<j>`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// TSV of `label<TAB>familiarity<TAB>gain_pct` points to correlate.
    #[arg(long)]
    correlate: Option<PathBuf>,
    /// Labels to leave out of the correlation.
    #[arg(long, value_delimiter = ',', requires = "correlate")]
    exclude: Vec<String>,
}

#[derive(Debug, Args)]
struct SimdistArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value = "query_compression")]
    variant: Variant,
    #[arg(long, default_value_t = DEFAULT_RATIO)]
    ratio: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

enum Failure {
    Usage(clap::Error),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(e)) => {
            let _ = e.print();
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> std::result::Result<String, Failure> {
    Ok(match command {
        Command::Fit(a) => fit(a)?,
        Command::Project(a) => project(a)?,
        Command::Retrieve(a) => retrieve(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Run(a) => return run(a),
        Command::Sweep(a) => sweep(a)?,
        Command::Cv(a) => cv(a)?,
        Command::Spectrum(a) => spectrum_cmd(a)?,
        Command::Familiarity(a) => familiarity_cmd(a)?,
        Command::Simdist(a) => simdist(a)?,
        Command::Convert(a) => convert(a)?,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn fit(a: FitArgs) -> Result<String> {
    let queries = store::load_embeddings(&a.queries)?;
    let model = match &a.docs {
        Some(path) => {
            let docs = store::load_embeddings(path)?;
            let n = queries.n_items() + docs.n_items();
            let spec = pca::resolve_retention(a.ratio, queries.dim(), n)?;
            pca::fit_pca_stacked(&[&queries, &docs], &spec, FitSource::QueriesAndDocuments)?
        }
        None => {
            let spec = pca::resolve_retention(a.ratio, queries.dim(), queries.n_items())?;
            pca::fit_pca_stacked(&[&queries], &spec, FitSource::Queries)?
        }
    };
    pca::save_model(&model, &a.out)?;
    Ok(format!(
        "fitted on {} ({} samples): {} -> {} dims\n",
        model.fitted_on(),
        model.n_fit_samples(),
        model.input_dim(),
        model.n_components()
    ))
}

fn project(a: ProjectArgs) -> Result<String> {
    let model = pca::load_model(&a.model)?;
    let input = store::load_embeddings(&a.input)?;
    let projected = pca::project(&model, &input)?;
    store::save_auto(&projected, &a.output)?;
    Ok(format!(
        "projected {} rows to {} dims\n",
        projected.n_items(),
        projected.dim()
    ))
}

fn retrieve(a: RetrieveArgs) -> Result<String> {
    let queries = store::load_embeddings(&a.queries)?;
    let docs = store::load_embeddings(&a.docs)?;
    let run = match &a.model {
        Some(prefix) => {
            let model = pca::load_model(prefix)?;
            retrieval::retrieve_projected(&model, &queries, &docs, a.k)?
        }
        None => retrieval::retrieve_topk(&queries, &docs, a.k)?,
    };
    retrieval::write_run(&run.lists, &a.out)?;
    let mut out = format!("retrieved top-{} for {} queries\n", a.k, run.lists.len());
    if run.zero_norm_vectors > 0 {
        let _ = writeln!(out, "warning: {} zero-norm vectors scored as 0", run.zero_norm_vectors);
    }
    Ok(out)
}

fn eval(a: EvalArgs) -> Result<String> {
    let run = retrieval::load_run(&a.run)?;
    let qrels = store::load_qrels(&a.qrels)?;
    let report = metrics::evaluate(&run, &qrels, a.k)?;
    if let Some(out) = &a.out {
        report.write_tsv(out)?;
    }
    Ok(report.summary())
}

fn usage(message: String) -> Failure {
    let mut cmd = Cli::command();
    let sub = cmd.find_subcommand_mut("run").expect("run subcommand").clone();
    Failure::Usage(sub.bin_name("pca-adapt run").error(ErrorKind::MissingRequiredArgument, message))
}

fn run(a: RunArgs) -> std::result::Result<String, Failure> {
    let manifest = match &a.manifest {
        Some(p) => Some(experiments::load_manifest(p)?),
        None => None,
    };
    let from_manifest = |f: fn(&experiments::ExperimentManifest) -> Option<PathBuf>| {
        manifest.as_ref().and_then(f)
    };
    let need = |flag: &str, v: Option<PathBuf>| {
        v.ok_or_else(|| usage(format!("the following required argument was not provided: --{flag}")))
    };
    let queries_path = need("queries", a.queries.or_else(|| from_manifest(|m| m.queries.clone())))?;
    let docs_path = need("docs", a.docs.or_else(|| from_manifest(|m| m.docs.clone())))?;
    let qrels_path = need("qrels", a.qrels.or_else(|| from_manifest(|m| m.qrels.clone())))?;
    let out_dir = a.out.or_else(|| from_manifest(|m| m.out.clone()));
    let m = manifest.as_ref();

    let ratio = a.ratio.or(m.and_then(|m| m.ratio)).unwrap_or(DEFAULT_RATIO);
    let k = a.k.or(m.and_then(|m| m.k)).unwrap_or(DEFAULT_K);
    let seed = a.seed.or(m.and_then(|m| m.seed)).unwrap_or(DEFAULT_SEED);
    let mut variants = if a.variants.is_empty() {
        m.and_then(|m| m.variants.clone()).unwrap_or_else(|| Variant::ALL.to_vec())
    } else {
        a.variants
    };
    if !variants.contains(&Variant::Baseline) {
        variants.insert(0, Variant::Baseline);
    }
    variants.dedup();
    let labels = RunLabels {
        dataset: a
            .dataset
            .or_else(|| m.and_then(|m| m.dataset.clone()))
            .unwrap_or_else(|| "dataset".into()),
        model: a
            .model_name
            .or_else(|| m.and_then(|m| m.model.clone()))
            .unwrap_or_else(|| "model".into()),
    };

    let queries = store::load_embeddings(&queries_path)?;
    let docs = store::load_embeddings(&docs_path)?;
    let qrels = store::load_qrels(&qrels_path)?;
    let configs: Vec<ExperimentConfig> = variants
        .iter()
        .map(|&variant| ExperimentConfig {
            variant,
            retention_ratio: ratio,
            k,
            seed,
            cv_folds: 0,
        })
        .collect();
    let outcomes = experiments::execute_all(&configs, &queries, &docs, &qrels)?;
    let rows = experiments::comparison_rows(&labels, &outcomes)?;

    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        for o in &outcomes {
            let name = o.config.variant.as_str();
            retrieval::write_run(&o.run.lists, dir.join(format!("{name}.run")))?;
            o.report.write_tsv(dir.join(format!("{name}.metrics.tsv")))?;
        }
        write_file(&dir.join("comparison.tsv"), &experiments::comparison_tsv(&rows))?;
    }

    let baseline = &outcomes[0].report;
    let mut out = format!(
        "{} queries evaluated, {} skipped, k = {k}\n",
        baseline.n_evaluated, baseline.n_skipped
    );
    out.push_str(&experiments::comparison_table(&rows));
    Ok(out)
}

fn sweep(a: SweepArgs) -> Result<String> {
    let ratios = experiments::parse_ratio_list(&a.ratios)?;
    let queries = store::load_embeddings(&a.queries)?;
    let docs = store::load_embeddings(&a.docs)?;
    let qrels = store::load_qrels(&a.qrels)?;
    let base = ExperimentConfig {
        variant: a.variant,
        retention_ratio: DEFAULT_RATIO,
        k: a.k,
        seed: a.seed,
        cv_folds: 0,
    };
    let points = experiments::retention_sweep(&ratios, &queries, &docs, &qrels, &base)?;
    let tsv = experiments::sweep_tsv(&points);
    if let Some(out) = &a.out {
        write_file(out, &tsv)?;
    }
    Ok(tsv)
}

fn cv(a: CvArgs) -> Result<String> {
    let queries = store::load_embeddings(&a.queries)?;
    let docs = store::load_embeddings(&a.docs)?;
    let qrels = store::load_qrels(&a.qrels)?;
    let config = ExperimentConfig {
        variant: a.variant,
        retention_ratio: a.ratio,
        k: a.k,
        seed: a.seed,
        cv_folds: a.folds,
    };
    let cv = experiments::cross_validate_detailed(a.folds, a.seed, &queries, &docs, &qrels, &config)?;
    if let Some(out) = &a.out {
        cv.report.write_tsv(out)?;
    }
    let sizes: Vec<String> = cv.folds.iter().map(|f| f.len().to_string()).collect();
    Ok(format!(
        "{}-fold cross-validation of {} (fold sizes {})\n{}",
        a.folds,
        a.variant,
        sizes.join(", "),
        cv.report.summary()
    ))
}

fn spectrum_cmd(a: SpectrumArgs) -> Result<String> {
    let input = store::load_embeddings(&a.input)?;
    let spec = pca::resolve_retention(1.0, input.dim(), input.n_items())?;
    let model = pca::fit_pca(&input, &spec)?;
    let spectrum = spectrum::spectrum_of(&model);
    let mut fit = spectrum::fit_power_law(&spectrum.eigenvalues)?;
    if a.bootstrap > 0 {
        fit.p_value = Some(spectrum::ks_bootstrap_p(
            &fit,
            &spectrum.eigenvalues,
            a.bootstrap,
            a.seed,
        )?);
    }
    let report = spectrum::spectrum_report(&spectrum, Some(&fit));
    if let Some(out) = &a.out {
        write_file(out, &report)?;
    }
    let verdict = match fit.p_value {
        Some(p) if p >= spectrum::PASS_P_VALUE => "consistent with a power law",
        Some(_) => "power law rejected",
        None => "not tested",
    };
    Ok(format!(
        "beta = {:.4} (95% CI {:.4} to {:.4}), R^2 = {:.6}, k_min = {}, KS = {:.4}, p = {}: {verdict}\n",
        fit.beta,
        fit.ci_beta.0,
        fit.ci_beta.1,
        fit.r_squared,
        fit.k_min,
        fit.ks_stat,
        fit.p_value.map_or_else(|| "NA".to_owned(), |p| format!("{p:.3}")),
    ))
}

fn familiarity_cmd(a: FamiliarityArgs) -> Result<String> {
    if let Some(path) = &a.input {
        let matrix = store::load_embeddings(path)?;
        let sets = familiarity::paraphrase_sets(&matrix)?;
        let mut out = String::from("text\tfamiliarity\n");
        for set in &sets {
            let _ = writeln!(out, "{}\t{}", set.original_id, familiarity::text_familiarity(set)?);
        }
        let _ = writeln!(out, "# domain_familiarity\t{}", familiarity::domain_familiarity(&sets)?);
        return Ok(out);
    }
    let path = a.correlate.as_ref().expect("argument group guarantees one mode");
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| Error::Format {
            path: path.clone(),
            location: pca_adapt::error::Location::Line(idx + 1),
            message: msg.to_owned(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad("expected label, familiarity and gain"));
        }
        if a.exclude.iter().any(|x| x == fields[0]) {
            continue;
        }
        let x: f64 = fields[1].parse().map_err(|_| bad("familiarity is not a number"))?;
        let y: f64 = fields[2].parse().map_err(|_| bad("gain is not a number"))?;
        points.push((x, y));
    }
    let c = familiarity::familiarity_vs_gain(&points)?;
    Ok(format!("n = {}\nr = {}\np = {}\n", c.n, c.r, c.p_value))
}

fn simdist(a: SimdistArgs) -> Result<String> {
    let queries = store::load_embeddings(&a.queries)?;
    let docs = store::load_embeddings(&a.docs)?;
    let qrels = store::load_qrels(&a.qrels)?;
    let config = ExperimentConfig {
        variant: a.variant,
        retention_ratio: a.ratio,
        k: DEFAULT_K,
        seed: a.seed,
        cv_folds: 0,
    };
    let model = experiments::fit_variant_model(&config, &queries, &docs)?;
    let raw = experiments::similarity_distributions(&queries, &docs, &qrels, None)?;
    let projected = experiments::similarity_distributions(&queries, &docs, &qrels, model.as_ref())?;

    let mut out = String::from("space\tclass\tmean\tstd\tcount\n");
    for (space, dist) in [("raw", &raw), (a.variant.as_str(), &projected)] {
        let r = dist.relevant;
        let _ = writeln!(out, "{space}\trelevant\t{}\t{}\t{}", r.mean, r.std, r.count);
        match dist.nonrelevant {
            Some(n) => {
                let _ = writeln!(out, "{space}\tnonrelevant\t{}\t{}\t{}", n.mean, n.std, n.count);
            }
            None => {
                let _ = writeln!(out, "{space}\tnonrelevant\tNA\tNA\t0");
            }
        }
    }
    if let (Some(before), Some(after)) = (raw.mean_gap(), projected.mean_gap()) {
        let _ = writeln!(out, "# mean_gap\t{before}\t{after}");
    }
    Ok(out)
}

fn convert(a: ConvertArgs) -> Result<String> {
    let matrix = store::load_embeddings(&a.input)?;
    store::save_auto(&matrix, &a.output)?;
    Ok(format!(
        "wrote {} x {} to {}\n",
        matrix.n_items(),
        matrix.dim(),
        a.output.display()
    ))
}
