use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use embias::bench::{self, AnalogyDataset, AnalogyOptions, SimilarityDataset};
use embias::debias::{self, alternative_permutations, DebiasSpec, Method, Permutation};
use embias::embedding::{build_target_vocab, load_embeddings, save_embeddings, Embedding, WordList};
use embias::eval::{self, EvalOptions, PredictionSet};
use embias::metrics::{self, Classifier, ClusterOptions, GipeConfig, MetricsTable, RecoverOptions, SemBiasDataset};
use embias::report::{run_manifest, RunManifest};
use embias::subspace::{self, gender_direction, GenderSubspace};
use embias::testgen::{self, Articles, SetKind, TemplateBank};
use embias::{data, Scalar};

#[derive(Parser)]
#[command(name = "embias", version, about = "Gender-bias measurement and debiasing for word embeddings")]
struct Cli {
    /// Storage precision for embedding components.
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    precision: Precision,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a marked-attribute test set as JSON lines.
    Testgen(TestgenArgs),
    /// Score a prediction file against a test set.
    Evaluate(EvaluateArgs),
    /// Build a weighted gender subspace from name pairs.
    Subspace(SubspaceArgs),
    /// Debias an embedding by (soft) projection.
    Debias(DebiasArgs),
    /// Compute one intrinsic bias measure.
    Metrics(MetricsArgs),
    /// Word-similarity or analogy benchmark.
    Bench(BenchArgs),
    /// Run a batch manifest.
    Run(RunArgs),
    /// Build the evaluation vocabulary shared by two embeddings.
    Vocab(VocabArgs),
    /// Convert a published dataset into the native format.
    Convert(ConvertArgs),
    /// Pearson correlation matrix of a metrics table.
    Correlate(CorrelateArgs),
    /// List the weight permutations that differ from the identity.
    Permutations(PermutationsArgs),
}

#[derive(Args)]
struct TestgenArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: SetKind,
    #[arg(long)]
    out: PathBuf,
    /// Attribute words (`word<TAB>group<TAB>category`); defaults to the shipped set.
    #[arg(long)]
    words: Option<PathBuf>,
    #[arg(long, requires_all = ["objects", "pairing"])]
    verbs: Option<PathBuf>,
    #[arg(long)]
    objects: Option<PathBuf>,
    #[arg(long)]
    pairing: Option<PathBuf>,
    #[arg(long)]
    articles: Option<PathBuf>,
    /// Fail unless the bank yields exactly 1968 premises.
    #[arg(long)]
    strict: bool,
}

fn parse_kind(s: &str) -> Result<SetKind, String> {
    s.parse().map_err(|e: embias::Error| e.to_string())
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    testset: PathBuf,
    #[arg(long)]
    preds: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also report the group distance computed literally on group sums.
    #[arg(long = "literal-eq2")]
    literal: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SubspaceArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    female: Option<PathBuf>,
    #[arg(long)]
    male: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// Do not subtract the mean difference before the decomposition.
    #[arg(long)]
    no_center: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DebiasArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// misp, mhd, permuted (misp with permuted weights) or neutralize.
    #[arg(long, default_value = "misp")]
    method: String,
    /// Weight permutation such as 1243 (for `--method permuted`).
    #[arg(long)]
    permutation: Option<String>,
    /// Subspace file; built from the shipped names when absent.
    #[arg(long)]
    subspace: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// Words copied through unchanged.
    #[arg(long)]
    exclude: Option<PathBuf>,
    /// Words to neutralise (for `--method neutralize`); all words when absent.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long, default_value = "she")]
    fem: String,
    #[arg(long, default_value = "he")]
    masc: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Measure {
    Db,
    Midb,
    Cluster,
    Recover,
    Gipe,
    Sembias,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long, value_enum)]
    measure: Measure,
    #[arg(long)]
    embeddings: PathBuf,
    /// Undebiased embedding used to pick the most biased words and, for
    /// GIPE, the gender direction.
    #[arg(long)]
    original: Option<PathBuf>,
    /// Evaluation vocabulary.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    subspace: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long)]
    sembias: Option<PathBuf>,
    #[arg(long, default_value_t = 0.03)]
    theta: f64,
    #[arg(long, default_value_t = 100)]
    neighbors: usize,
    /// Words per class for clustering.
    #[arg(long = "n-cluster", default_value_t = 1500)]
    n_cluster: usize,
    /// Words per class for recoverability.
    #[arg(long = "n-recover", default_value_t = 2500)]
    n_recover: usize,
    #[arg(long, default_value = "logistic")]
    classifier: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "she")]
    fem: String,
    #[arg(long, default_value = "he")]
    masc: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Similarity,
    Analogy,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Restrict analogy candidates to the first N embedding rows.
    #[arg(long)]
    max_vocab: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct VocabArgs {
    #[arg(long)]
    first: PathBuf,
    #[arg(long)]
    second: PathBuf,
    /// Gender-specific words to remove; defaults to the shipped list.
    #[arg(long)]
    gendered: Option<PathBuf>,
    #[arg(long, default_value_t = 50_000)]
    top_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Sembias,
    Msr,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(value_enum)]
    format: Format,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrelateArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PermutationsArgs {
    #[arg(long, default_value_t = 4)]
    d: usize,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.precision {
        Precision::F32 => dispatch::<f32>(cli.command),
        Precision::F64 => dispatch::<f64>(cli.command),
    }
}

fn dispatch<T: Scalar>(cmd: Command) -> Result<()> {
    match cmd {
        Command::Testgen(a) => testgen(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Subspace(a) => build_subspace::<T>(a),
        Command::Debias(a) => debias_cmd::<T>(a),
        Command::Metrics(a) => metrics_cmd::<T>(a),
        Command::Bench(a) => bench_cmd::<T>(a),
        Command::Run(a) => run(a),
        Command::Vocab(a) => vocab::<T>(a),
        Command::Convert(a) => convert(a),
        Command::Correlate(a) => correlate(a),
        Command::Permutations(a) => permutations(a),
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn load<T: Scalar>(p: &Path) -> Result<Embedding<T>> {
    load_embeddings(p, None).with_context(|| format!("loading {}", p.display()))
}

fn testgen(a: TestgenArgs) -> Result<()> {
    let bank = match (&a.verbs, &a.objects, &a.pairing) {
        (Some(v), Some(o), Some(p)) => TemplateBank::load(v, o, p, a.strict)?,
        _ => data::template_bank()?,
    };
    let attrs = match &a.words {
        Some(p) => testgen::load_attributes(p)?,
        None => data::attributes(a.kind),
    };
    let articles = match &a.articles {
        Some(p) => Articles::parse(&p.display().to_string(), &fs::read_to_string(p)?)?,
        None => data::articles(),
    };
    let set = testgen::generate(&bank, a.kind, &attrs, &articles)?;
    set.save(&a.out)?;
    eprintln!(
        "{} pairs ({} premises x {} words; {} M, {} F) -> {}",
        set.len(),
        bank.premise_count(),
        attrs.len(),
        set.count(embias::Gender::Male),
        set.count(embias::Gender::Female),
        a.out.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let test = testgen::TestSet::load(&a.testset)?;
    let (preds, stats) = eval::load_predictions(&a.preds)?;
    let set = PredictionSet::join(&test, preds)?;
    let opts = EvalOptions {
        permutations: a.permutations,
        seed: a.seed,
        literal_distance: a.literal,
    };
    let report = eval::evaluate(&set, &stats, &opts)?;
    let v = serde_json::to_value(&report)?;
    match a.out {
        Some(p) => fs::write(&p, serde_json::to_string_pretty(&v)?)?,
        None => print_json(&v)?,
    }
    Ok(())
}

fn names(female: &Option<PathBuf>, male: &Option<PathBuf>) -> Result<(WordList, WordList)> {
    let (bf, bm) = data::subspace_names();
    Ok((
        female.as_ref().map(WordList::load).transpose()?.unwrap_or(bf),
        male.as_ref().map(WordList::load).transpose()?.unwrap_or(bm),
    ))
}

fn subspace_from_names<T: Scalar>(emb: &Embedding<T>, f: &WordList, m: &WordList, d: usize, center: bool) -> Result<GenderSubspace<T>> {
    let diffs = subspace::pairwise_differences(f, m, emb)?;
    info!(
        "{} name pairs used ({} female, {} male missing)",
        diffs.rows(),
        diffs.female_missing,
        diffs.male_missing
    );
    Ok(subspace::principal_subspace(&diffs, d, center)?)
}

fn build_subspace<T: Scalar>(a: SubspaceArgs) -> Result<()> {
    let emb = load::<T>(&a.embeddings)?;
    let (f, m) = names(&a.female, &a.male)?;
    let sub = subspace_from_names(&emb, &f, &m, a.d, !a.no_center)?;
    sub.save(&a.out)?;
    let w: Vec<f64> = sub.weights().iter().map(|x| x.to_f64_lossy()).collect();
    eprintln!("weights {w:?} -> {}", a.out.display());
    Ok(())
}

fn debias_cmd<T: Scalar>(a: DebiasArgs) -> Result<()> {
    let emb = load::<T>(&a.embeddings)?;
    let method: Method = a.method.parse()?;
    let out = if let Method::Neutralize = method {
        let g = gender_direction(&emb, &a.fem, &a.masc)?;
        let targets = match &a.targets {
            Some(p) => WordList::load(p)?,
            None => WordList::new("all", emb.vocab().iter().cloned()),
        };
        debias::neutralize(&emb, &g, &targets)?
    } else {
        let sub = match &a.subspace {
            Some(p) => GenderSubspace::<T>::load(p)?,
            None => {
                let (f, m) = names(&None, &None)?;
                subspace_from_names(&emb, &f, &m, a.d, true)?
            }
        };
        let mut spec = match method {
            Method::Misp => DebiasSpec::misp(),
            Method::Mhd => DebiasSpec::mhd(),
            Method::MispPermuted => {
                let p: Permutation = a
                    .permutation
                    .as_deref()
                    .context("--permutation is required for the permuted method")?
                    .parse()?;
                DebiasSpec::permuted(p)
            }
            Method::Neutralize => unreachable!(),
        };
        if let Some(p) = &a.exclude {
            spec = spec.with_exclude(WordList::load(p)?);
        }
        debias::misp(&emb, &sub, &spec)?
    };
    save_embeddings(&out, &a.out)?;
    eprintln!("{} words -> {}", out.len(), a.out.display());
    Ok(())
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
    match p {
        Some(p) => Ok(p),
        None => bail!("{flag} is required for this measure"),
    }
}

fn metrics_cmd<T: Scalar>(a: MetricsArgs) -> Result<()> {
    let emb = load::<T>(&a.embeddings)?;
    let orig_owned = a.original.as_ref().map(|p| load::<T>(p)).transpose()?;
    let orig = orig_owned.as_ref().unwrap_or(&emb);
    let vocab = || -> Result<WordList> { Ok(WordList::load(need(&a.vocab, "--vocab")?)?) };
    let v = match a.measure {
        Measure::Db => {
            let g = gender_direction(&emb, &a.fem, &a.masc)?;
            let r = subspace::direct_bias(&emb, &vocab()?, &g)?;
            json!({ "DB": r.value.to_f64_lossy(), "used": r.used, "missing": r.missing, "skipped": r.skipped })
        }
        Measure::Midb => {
            let sub = match &a.subspace {
                Some(p) => GenderSubspace::<T>::load(p)?,
                None => {
                    let (f, m) = names(&None, &None)?;
                    subspace_from_names(&emb, &f, &m, a.d, true)?
                }
            };
            let r = subspace::midb_average(&emb, &vocab()?, &sub)?;
            json!({ "MIDB": r.value.to_f64_lossy(), "used": r.used, "missing": r.missing })
        }
        Measure::Cluster => {
            let g = gender_direction(orig, &a.fem, &a.masc)?;
            let set = metrics::most_biased_words(orig, &g, a.n_cluster, &vocab()?)?;
            let r = metrics::clustering_bias(&emb, &set, 2, a.seed, &ClusterOptions::default())?;
            json!({
                "v_measure": r.v_measure, "accuracy": r.accuracy,
                "homogeneity": r.homogeneity, "completeness": r.completeness,
                "used": r.used, "missing": r.missing
            })
        }
        Measure::Recover => {
            let g = gender_direction(orig, &a.fem, &a.masc)?;
            let set = metrics::most_biased_words(orig, &g, a.n_recover, &vocab()?)?;
            let opts = RecoverOptions {
                classifier: a.classifier.parse::<Classifier>()?,
                seed: a.seed,
                ..RecoverOptions::default()
            };
            let r = metrics::recoverability(&emb, &set, &opts)?;
            json!({ "accuracy": r.accuracy, "train": r.n_train, "test": r.n_test, "missing": r.missing })
        }
        Measure::Gipe => {
            let g = gender_direction(orig, &a.fem, &a.masc)?;
            let cfg = GipeConfig {
                theta: a.theta,
                n_neighbors: a.neighbors,
                vocab: vocab()?,
            };
            let r = metrics::gipe(&emb, &cfg, &g)?;
            json!({ "GIPE": r.value, "theta": a.theta, "words": r.words, "missing": r.missing, "skipped_pairs": r.skipped_pairs })
        }
        Measure::Sembias => {
            let ds = SemBiasDataset::load(need(&a.sembias, "--sembias")?)?;
            let r = metrics::sembias(&emb, &ds, &a.fem, &a.masc)?;
            json!({
                "SB_def": r.definitional, "SB_stereo": r.stereotypical, "SB_other": r.other,
                "used": r.used, "dropped": r.dropped, "ties": r.ties
            })
        }
    };
    print_json(&v)
}

fn bench_cmd<T: Scalar>(a: BenchArgs) -> Result<()> {
    let emb = load::<T>(&a.embeddings)?;
    let v = match a.task {
        Task::Similarity => {
            let ds = SimilarityDataset::load(&a.dataset)?;
            serde_json::to_value(bench::word_similarity(&emb, &ds)?)?
        }
        Task::Analogy => {
            let ds = AnalogyDataset::load(&a.dataset)?;
            let opts = AnalogyOptions { max_vocab: a.max_vocab };
            serde_json::to_value(bench::analogy_accuracy(&emb, &ds, &opts)?)?
        }
    };
    print_json(&v)
}

fn run(a: RunArgs) -> Result<()> {
    let m = RunManifest::load(&a.manifest)?;
    let out = run_manifest(&m)?;
    eprintln!(
        "{} rows; {} cells computed, {} cached, {} NA -> {}",
        out.table.n_rows(),
        out.summary.computed,
        out.summary.cached,
        out.summary.failed,
        m.output_dir.display()
    );
    Ok(())
}

fn vocab<T: Scalar>(a: VocabArgs) -> Result<()> {
    let first = load::<T>(&a.first)?;
    let second = load::<T>(&a.second)?;
    let gendered = match &a.gendered {
        Some(p) => WordList::load(p)?,
        None => data::gender_specific(),
    };
    let vt = build_target_vocab(&first, &second, &gendered, a.top_k);
    vt.save(&a.out)?;
    eprintln!("{} words -> {}", vt.len(), a.out.display());
    Ok(())
}

fn convert(a: ConvertArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let name = a.input.display().to_string();
    let out = match a.format {
        Format::Sembias => SemBiasDataset::parse_release(&name, &text)?.to_text(),
        Format::Msr => AnalogyDataset::parse_msr(&name, &text)?.to_google_text(),
    };
    fs::write(&a.out, out)?;
    Ok(())
}

fn correlate(a: CorrelateArgs) -> Result<()> {
    let table = MetricsTable::load(&a.table)?;
    let m = metrics::pearson_matrix(&table);
    match a.out {
        Some(p) => fs::write(p, m.to_tsv())?,
        None => print!("{}", m.to_tsv()),
    }
    Ok(())
}

fn permutations(a: PermutationsArgs) -> Result<()> {
    for p in alternative_permutations(a.d)? {
        println!("{p}");
    }
    Ok(())
}
