//! Batch runs over many embeddings, driven by a TOML manifest.
//!
//! ```toml
//! output_dir = "out"
//!
//! [words]
//! target_vocab = "vt.txt"
//! sembias = "sembias.tsv"
//!
//! [config]
//! metrics = ["db", "midb", "cluster", "recover", "gipe", "sembias"]
//! thetas = [0.03]
//! cluster_sizes = [1500]
//!
//! [[embedding]]
//! id = "glove"
//! path = "glove.txt"
//! values = { E = 0.198 }
//!
//! [[embedding]]
//! id = "glove-hd"
//! path = "glove_hd.txt"
//! original = "glove"
//! ```
//!
//! Every (embedding, metric) cell is cached under `output_dir/cache`, keyed
//! by a SHA-256 of the input file contents and the configuration the metric
//! reads, so a rerun only computes cells whose inputs changed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data;
use crate::embedding::{load_embeddings, Embedding, WordList};
use crate::error::{Error, Result};
use crate::eval::{self, EvalOptions, PredictionSet};
use crate::metrics::{
    clustering_bias, gipe, most_biased_words, pearson_matrix, recoverability, sembias, Classifier, ClusterOptions,
    GipeConfig, LabeledWordSet, MetricsTable, RecoverOptions, SemBiasDataset,
};
use crate::subspace::{self, gender_direction, midb_average, pairwise_differences, principal_subspace, GenderSubspace};
use crate::testgen::TestSet;
use crate::Scalar;

pub const METRICS: &[&str] = &["db", "midb", "cluster", "recover", "gipe", "sembias"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingEntry {
    pub id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub notes: String,
    /// Undebiased source embedding; its she-he axis selects the biased words
    /// for clustering and recoverability. Defaults to the entry itself.
    #[serde(default)]
    pub original: Option<String>,
    /// Precomputed subspace file used for MIDB instead of one built from names.
    #[serde(default)]
    pub subspace: Option<PathBuf>,
    /// Externally measured columns, e.g. `E`.
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordPaths {
    #[serde(default)]
    pub target_vocab: Option<PathBuf>,
    #[serde(default)]
    pub names_female: Option<PathBuf>,
    #[serde(default)]
    pub names_male: Option<PathBuf>,
    #[serde(default)]
    pub sembias: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSource {
    /// The she-he axis of the entry's original embedding.
    Original,
    /// The she-he axis of the embedding being measured.
    #[serde(rename = "self")]
    Own,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub metrics: Vec<String>,
    pub d: usize,
    pub center: bool,
    pub fem: String,
    pub masc: String,
    pub thetas: Vec<f64>,
    pub neighbors: usize,
    pub cluster_sizes: Vec<usize>,
    pub recover_per_class: usize,
    pub train_frac: f64,
    pub classifiers: Vec<String>,
    pub seed: u64,
    pub gipe_direction: DirectionSource,
    /// `f32` or `f64` storage for loaded embeddings.
    pub precision: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            metrics: METRICS.iter().map(|s| s.to_string()).collect(),
            d: 4,
            center: true,
            fem: "she".into(),
            masc: "he".into(),
            thetas: vec![0.03],
            neighbors: 100,
            cluster_sizes: vec![1500],
            recover_per_class: 2500,
            train_frac: 0.2,
            classifiers: vec!["logistic".into()],
            seed: 0,
            gipe_direction: DirectionSource::Original,
            precision: "f32".into(),
        }
    }
}

/// A prediction file to score; its pooled error fills `column` for the
/// embedding row when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationEntry {
    pub embedding: String,
    pub testset: PathBuf,
    pub preds: PathBuf,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub column: Option<String>,
}

fn default_permutations() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub words: WordPaths,
    #[serde(default)]
    pub config: RunConfig,
    #[serde(rename = "embedding", default)]
    pub embeddings: Vec<EmbeddingEntry>,
    #[serde(rename = "evaluation", default)]
    pub evaluations: Vec<EvaluationEntry>,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    /// Reads a manifest; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = RunManifest::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        rebase(&base, &mut m.output_dir);
        for p in [
            &mut m.words.target_vocab,
            &mut m.words.names_female,
            &mut m.words.names_male,
            &mut m.words.sembias,
        ]
        .into_iter()
        .flatten()
        {
            rebase(&base, p);
        }
        for e in &mut m.embeddings {
            rebase(&base, &mut e.path);
            if let Some(s) = &mut e.subspace {
                rebase(&base, s);
            }
        }
        for e in &mut m.evaluations {
            rebase(&base, &mut e.testset);
            rebase(&base, &mut e.preds);
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Manifest(m));
        let mut ids = HashSet::new();
        for e in &self.embeddings {
            if !ids.insert(e.id.as_str()) {
                return bad(format!("duplicate embedding id '{}'", e.id));
            }
        }
        for e in &self.embeddings {
            if !e.path.is_file() {
                return bad(format!("embedding file {} not found", e.path.display()));
            }
            if let Some(o) = &e.original {
                if !ids.contains(o.as_str()) {
                    return bad(format!("embedding '{}' names unknown original '{o}'", e.id));
                }
            }
            if let Some(s) = &e.subspace {
                if !s.is_file() {
                    return bad(format!("subspace file {} not found", s.display()));
                }
            }
            for col in e.values.keys() {
                if !crate::metrics::table::is_registered_column(col) {
                    return bad(format!("unregistered column '{col}' in values of '{}'", e.id));
                }
            }
        }
        for ev in &self.evaluations {
            if !ids.contains(ev.embedding.as_str()) {
                return bad(format!("evaluation names unknown embedding '{}'", ev.embedding));
            }
            for p in [&ev.testset, &ev.preds] {
                if !p.is_file() {
                    return bad(format!("evaluation file {} not found", p.display()));
                }
            }
        }
        let words = &self.words;
        for p in [&words.target_vocab, &words.names_female, &words.names_male, &words.sembias]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return bad(format!("word-set file {} not found", p.display()));
            }
        }
        let c = &self.config;
        for m in &c.metrics {
            if !METRICS.contains(&m.as_str()) {
                return bad(format!("unknown metric '{m}'"));
            }
        }
        let needs_vt = c.metrics.iter().any(|m| m != "sembias");
        if needs_vt && words.target_vocab.is_none() {
            return bad("words.target_vocab is required for the configured metrics".into());
        }
        if c.metrics.iter().any(|m| m == "sembias") && words.sembias.is_none() {
            return bad("words.sembias is required for the sembias metric".into());
        }
        if c.d == 0 {
            return bad("config.d must be positive".into());
        }
        for cl in &c.classifiers {
            cl.parse::<Classifier>().map_err(|e| Error::Manifest(e.to_string()))?;
        }
        if c.precision != "f32" && c.precision != "f64" {
            return bad(format!("precision must be f32 or f64, got '{}'", c.precision));
        }
        Ok(())
    }

    /// Column names produced by the configured metrics, then external values.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for m in &self.config.metrics {
            cols.extend(metric_columns(m, &self.config));
        }
        for e in &self.embeddings {
            for k in e.values.keys() {
                if !cols.contains(k) {
                    cols.push(k.clone());
                }
            }
        }
        for ev in &self.evaluations {
            if let Some(c) = &ev.column {
                if !cols.contains(c) {
                    cols.push(c.clone());
                }
            }
        }
        cols
    }
}

fn classifier_column(c: &str) -> String {
    match c.parse::<Classifier>() {
        Ok(Classifier::Mlp) => "Rec:MLP".into(),
        _ => "Rec:LR".into(),
    }
}

fn metric_columns(metric: &str, c: &RunConfig) -> Vec<String> {
    match metric {
        "db" => vec!["DB".into()],
        "midb" => vec!["MIDB".into()],
        "cluster" => c
            .cluster_sizes
            .iter()
            .flat_map(|n| [format!("Clus:v_{n}"), format!("Clus:acc_{n}")])
            .collect(),
        "recover" => c.classifiers.iter().map(|s| classifier_column(s)).collect(),
        "gipe" => c.thetas.iter().map(|t| format!("GIPE:{t}")).collect(),
        "sembias" => vec!["SB_def".into(), "SB_stereo".into(), "SB_other".into()],
        _ => Vec::new(),
    }
}

/// A unit of work: one metric at one parameter setting for one embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Cell {
    Db,
    Midb,
    Cluster { n: usize },
    Recover { classifier: String },
    Gipe { theta: f64 },
    SemBias,
}

impl Cell {
    fn all(c: &RunConfig) -> Vec<Cell> {
        let mut out = Vec::new();
        for m in &c.metrics {
            match m.as_str() {
                "db" => out.push(Cell::Db),
                "midb" => out.push(Cell::Midb),
                "cluster" => out.extend(c.cluster_sizes.iter().map(|&n| Cell::Cluster { n })),
                "recover" => out.extend(c.classifiers.iter().map(|s| Cell::Recover { classifier: s.clone() })),
                "gipe" => out.extend(c.thetas.iter().map(|&theta| Cell::Gipe { theta })),
                "sembias" => out.push(Cell::SemBias),
                _ => {}
            }
        }
        out
    }

    fn label(&self) -> String {
        match self {
            Cell::Db => "db".into(),
            Cell::Midb => "midb".into(),
            Cell::Cluster { n } => format!("cluster:{n}"),
            Cell::Recover { classifier } => format!("recover:{classifier}"),
            Cell::Gipe { theta } => format!("gipe:{theta}"),
            Cell::SemBias => "sembias".into(),
        }
    }

    fn uses_original(&self, c: &RunConfig) -> bool {
        match self {
            Cell::Cluster { .. } | Cell::Recover { .. } => true,
            Cell::Gipe { .. } => c.gipe_direction == DirectionSource::Original,
            _ => false,
        }
    }

    /// The configuration fields this cell reads, for the cache key.
    fn config_json(&self, c: &RunConfig) -> serde_json::Value {
        let mut v = serde_json::json!({ "cell": self, "fem": c.fem, "masc": c.masc, "precision": c.precision });
        let extra = match self {
            Cell::Midb => serde_json::json!({ "d": c.d, "center": c.center }),
            Cell::Cluster { .. } => serde_json::json!({ "seed": c.seed }),
            Cell::Recover { .. } => serde_json::json!({
                "seed": c.seed, "per_class": c.recover_per_class, "train_frac": c.train_frac
            }),
            Cell::Gipe { .. } => serde_json::json!({ "neighbors": c.neighbors, "direction": c.gipe_direction }),
            _ => serde_json::json!({}),
        };
        if let (Some(a), Some(b)) = (v.as_object_mut(), extra.as_object()) {
            a.extend(b.clone());
        }
        v
    }
}

/// Result of one cell: column values (None = NA) and a reason for any NA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: String,
    pub values: BTreeMap<String, Option<f64>>,
    pub reason: Option<String>,
    #[serde(default)]
    pub details: serde_json::Value,
}

fn na_outcome(cell: &Cell, cols: &[String], reason: String) -> CellOutcome {
    CellOutcome {
        cell: cell.label(),
        values: cols.iter().map(|c| (c.clone(), None)).collect(),
        reason: Some(reason),
        details: serde_json::Value::Null,
    }
}

fn cell_columns(cell: &Cell, c: &RunConfig) -> Vec<String> {
    match cell {
        Cell::Db => vec!["DB".into()],
        Cell::Midb => vec!["MIDB".into()],
        Cell::Cluster { n } => vec![format!("Clus:v_{n}"), format!("Clus:acc_{n}")],
        Cell::Recover { classifier } => vec![classifier_column(classifier)],
        Cell::Gipe { theta } => vec![format!("GIPE:{theta}")],
        Cell::SemBias => metric_columns("sembias", c),
    }
}

/// SHA-256 of a file's contents, hex encoded.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

struct Words {
    target: Option<WordList>,
    names_female: WordList,
    names_male: WordList,
    sembias: Option<SemBiasDataset>,
    digest: String,
}

impl Words {
    fn load(p: &WordPaths) -> Result<Self> {
        let (bf, bm) = data::subspace_names();
        let names_female = p.names_female.as_ref().map(WordList::load).transpose()?.unwrap_or(bf);
        let names_male = p.names_male.as_ref().map(WordList::load).transpose()?.unwrap_or(bm);
        let target = p.target_vocab.as_ref().map(WordList::load).transpose()?;
        let sembias = p.sembias.as_ref().map(SemBiasDataset::load).transpose()?;
        let mut h = Sha256::new();
        for list in [&names_female, &names_male].into_iter().chain(target.as_ref()) {
            for w in list.words() {
                h.update(w.as_bytes());
                h.update(b"\n");
            }
            h.update(b"\x00");
        }
        if let Some(s) = &sembias {
            h.update(s.to_text().as_bytes());
        }
        Ok(Words {
            target,
            names_female,
            names_male,
            sembias,
            digest: hex::encode(h.finalize()),
        })
    }

    /// Every word any metric might look up.
    fn filter(&self, c: &RunConfig) -> Option<WordList> {
        let target = self.target.as_ref()?;
        let mut all: Vec<String> = target.words().to_vec();
        all.extend(self.names_female.words().iter().cloned());
        all.extend(self.names_male.words().iter().cloned());
        all.push(c.fem.clone());
        all.push(c.masc.clone());
        if let Some(s) = &self.sembias {
            for t in &s.tuples {
                for (a, b) in &t.pairs {
                    all.push(a.clone());
                    all.push(b.clone());
                }
            }
        }
        // Lowercase forms too, so case-folded lookups still find their rows.
        let lower: Vec<String> = all.iter().map(|w| w.to_lowercase()).collect();
        all.extend(lower);
        Some(WordList::new("needed", all))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct RunSummary {
    pub computed: usize,
    pub cached: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub table: MetricsTable,
    pub correlation: crate::metrics::CorrelationMatrix,
    pub summary: RunSummary,
    pub outcomes: BTreeMap<String, Vec<CellOutcome>>,
}

fn cell_key(cell: &Cell, c: &RunConfig, emb_digest: &str, orig_digest: Option<&str>, words: &str, sub_digest: Option<&str>) -> String {
    let mut h = Sha256::new();
    h.update(cell.config_json(c).to_string().as_bytes());
    h.update(emb_digest.as_bytes());
    h.update(orig_digest.unwrap_or("-").as_bytes());
    h.update(sub_digest.unwrap_or("-").as_bytes());
    h.update(words.as_bytes());
    hex::encode(h.finalize())
}

struct Loaded<T> {
    emb: Embedding<T>,
}

fn load_entry<T: Scalar>(e: &EmbeddingEntry, filter: Option<&WordList>) -> Result<Loaded<T>> {
    info!("loading {} from {}", e.id, e.path.display());
    Ok(Loaded {
        emb: load_embeddings::<T>(&e.path, filter)?,
    })
}

fn compute_cell<T: Scalar>(
    cell: &Cell,
    c: &RunConfig,
    words: &Words,
    emb: &Embedding<T>,
    orig: &Embedding<T>,
    sub: Option<&GenderSubspace<T>>,
) -> Result<(Vec<Option<f64>>, serde_json::Value)> {
    let target = || words.target.as_ref().ok_or_else(|| Error::Manifest("no target vocabulary".into()));
    let biased = |n: usize| -> Result<LabeledWordSet> {
        let g = gender_direction(orig, &c.fem, &c.masc)?;
        most_biased_words(orig, &g, n, target()?)
    };
    match cell {
        Cell::Db => {
            let g = gender_direction(emb, &c.fem, &c.masc)?;
            let r = subspace::direct_bias(emb, target()?, &g)?;
            Ok((vec![Some(r.value.to_f64_lossy())], serde_json::json!({ "used": r.used, "missing": r.missing })))
        }
        Cell::Midb => {
            let built;
            let sub = match sub {
                Some(s) => s,
                None => {
                    let diffs = pairwise_differences(&words.names_female, &words.names_male, emb)?;
                    built = principal_subspace(&diffs, c.d, c.center)?;
                    &built
                }
            };
            let r = midb_average(emb, target()?, sub)?;
            let weights: Vec<f64> = sub.weights().iter().map(|w| w.to_f64_lossy()).collect();
            Ok((
                vec![Some(r.value.to_f64_lossy())],
                serde_json::json!({ "used": r.used, "missing": r.missing, "weights": weights }),
            ))
        }
        Cell::Cluster { n } => {
            let set = biased(*n)?;
            let r = clustering_bias(emb, &set, 2, c.seed, &ClusterOptions::default())?;
            Ok((
                vec![Some(r.v_measure), Some(r.accuracy)],
                serde_json::json!({ "used": r.used, "missing": r.missing }),
            ))
        }
        Cell::Recover { classifier } => {
            let set = biased(c.recover_per_class)?;
            let opts = RecoverOptions {
                train_frac: c.train_frac,
                classifier: classifier.parse()?,
                seed: c.seed,
                ..RecoverOptions::default()
            };
            let r = recoverability(emb, &set, &opts)?;
            Ok((
                vec![Some(r.accuracy)],
                serde_json::json!({ "train": r.n_train, "test": r.n_test, "missing": r.missing }),
            ))
        }
        Cell::Gipe { theta } => {
            let source = match c.gipe_direction {
                DirectionSource::Original => orig,
                DirectionSource::Own => emb,
            };
            let g = gender_direction(source, &c.fem, &c.masc)?;
            let cfg = GipeConfig {
                theta: *theta,
                n_neighbors: c.neighbors,
                vocab: target()?.clone(),
            };
            let r = gipe(emb, &cfg, &g)?;
            Ok((
                vec![Some(r.value)],
                serde_json::json!({ "words": r.words, "missing": r.missing, "skipped_pairs": r.skipped_pairs }),
            ))
        }
        Cell::SemBias => {
            let ds = words.sembias.as_ref().ok_or_else(|| Error::Manifest("no SemBias dataset".into()))?;
            let r = sembias(emb, ds, &c.fem, &c.masc)?;
            Ok((
                vec![Some(r.definitional), Some(r.stereotypical), Some(r.other)],
                serde_json::json!({ "used": r.used, "dropped": r.dropped, "ties": r.ties }),
            ))
        }
    }
}

fn read_cache(path: &Path) -> Option<CellOutcome> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every configured cell, reusing cached results, and writes
/// `metrics.tsv`, `correlation.tsv`, `report.md` and per-embedding JSON
/// reports into the output directory.
pub fn run_manifest(m: &RunManifest) -> Result<RunOutput> {
    m.validate()?;
    match m.config.precision.as_str() {
        "f64" => run_typed::<f64>(m),
        _ => run_typed::<f32>(m),
    }
}

fn run_typed<T: Scalar>(m: &RunManifest) -> Result<RunOutput> {
    let out = &m.output_dir;
    let cache_dir = out.join("cache");
    let reports_dir = out.join("reports");
    for d in [out, &cache_dir, &reports_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let c = &m.config;
    let words = Words::load(&m.words)?;
    let filter = words.filter(c);
    let cells = Cell::all(c);
    let columns = m.columns();
    let mut table = MetricsTable::new(columns.clone())?;

    let digests: HashMap<&str, String> = m
        .embeddings
        .iter()
        .map(|e| Ok((e.id.as_str(), file_digest(&e.path)?)))
        .collect::<Result<_>>()?;
    let sub_digests: HashMap<&str, String> = m
        .embeddings
        .iter()
        .filter_map(|e| e.subspace.as_ref().map(|p| (e.id.as_str(), p)))
        .map(|(id, p)| Ok((id, file_digest(p)?)))
        .collect::<Result<_>>()?;
    let by_id: HashMap<&str, &EmbeddingEntry> = m.embeddings.iter().map(|e| (e.id.as_str(), e)).collect();

    let mut summary = RunSummary::default();
    let mut outcomes: BTreeMap<String, Vec<CellOutcome>> = BTreeMap::new();
    let mut originals: HashMap<String, Embedding<T>> = HashMap::new();

    for e in &m.embeddings {
        let orig_id = e.original.clone().unwrap_or_else(|| e.id.clone());
        let keys: Vec<String> = cells
            .iter()
            .map(|cell| {
                let od = cell.uses_original(c).then(|| digests[orig_id.as_str()].as_str());
                let sd = matches!(cell, Cell::Midb).then(|| sub_digests.get(e.id.as_str()).map(String::as_str)).flatten();
                cell_key(cell, c, &digests[e.id.as_str()], od, &words.digest, sd)
            })
            .collect();
        let mut results: Vec<Option<CellOutcome>> = keys.iter().map(|k| read_cache(&cache_dir.join(format!("{k}.json")))).collect();
        let pending: Vec<usize> = (0..cells.len()).filter(|&i| results[i].is_none()).collect();
        summary.cached += cells.len() - pending.len();

        if !pending.is_empty() {
            match load_entry::<T>(e, filter.as_ref()) {
                Ok(loaded) => {
                    let needs_orig = pending.iter().any(|&i| cells[i].uses_original(c)) && orig_id != e.id;
                    if needs_orig && !originals.contains_key(&orig_id) {
                        match load_entry::<T>(by_id[orig_id.as_str()], filter.as_ref()) {
                            Ok(o) => {
                                originals.insert(orig_id.clone(), o.emb);
                            }
                            Err(err) => warn!("could not load original '{orig_id}': {err}"),
                        }
                    }
                    let orig = if orig_id == e.id { Some(&loaded.emb) } else { originals.get(&orig_id) };
                    let sub = e.subspace.as_ref().map(GenderSubspace::<T>::load);
                    let computed: Vec<(usize, CellOutcome, bool)> = pending
                        .par_iter()
                        .map(|&i| {
                            let cell = &cells[i];
                            let cols = cell_columns(cell, c);
                            let res = match (&sub, orig) {
                                (Some(Err(err)), _) if matches!(cell, Cell::Midb) => Err(Error::Manifest(err.to_string())),
                                (_, None) if cell.uses_original(c) => {
                                    Err(Error::Manifest(format!("original embedding '{orig_id}' unavailable")))
                                }
                                (s, o) => compute_cell(
                                    cell,
                                    c,
                                    &words,
                                    &loaded.emb,
                                    o.unwrap_or(&loaded.emb),
                                    s.as_ref().and_then(|r| r.as_ref().ok()),
                                ),
                            };
                            match res {
                                Ok((vals, details)) => (
                                    i,
                                    CellOutcome {
                                        cell: cell.label(),
                                        values: cols.into_iter().zip(vals).collect(),
                                        reason: None,
                                        details,
                                    },
                                    true,
                                ),
                                Err(err) => {
                                    let cacheable = !matches!(err, Error::Io { .. });
                                    (i, na_outcome(cell, &cols, err.to_string()), cacheable)
                                }
                            }
                        })
                        .collect();
                    for (i, outcome, cacheable) in computed {
                        if outcome.reason.is_some() {
                            summary.failed += 1;
                            warn!("{} / {}: NA ({})", e.id, outcome.cell, outcome.reason.as_deref().unwrap_or(""));
                        }
                        if cacheable {
                            write_json(&cache_dir.join(format!("{}.json", keys[i])), &outcome)?;
                        }
                        summary.computed += 1;
                        results[i] = Some(outcome);
                    }
                }
                Err(err) => {
                    warn!("{}: {err}", e.id);
                    for &i in &pending {
                        let cols = cell_columns(&cells[i], c);
                        results[i] = Some(na_outcome(&cells[i], &cols, err.to_string()));
                        summary.failed += 1;
                        summary.computed += 1;
                    }
                }
            }
        }
        let results: Vec<CellOutcome> = results.into_iter().map(|r| r.expect("every cell resolved")).collect();

        let mut row: BTreeMap<String, Option<f64>> = BTreeMap::new();
        for r in &results {
            row.extend(r.values.clone());
        }
        for (k, v) in &e.values {
            row.insert(k.clone(), Some(*v));
        }
        for ev in m.evaluations.iter().filter(|ev| ev.embedding == e.id) {
            match run_evaluation(ev, out) {
                Ok(err) => {
                    if let Some(col) = &ev.column {
                        row.insert(col.clone(), Some(err));
                    }
                }
                Err(err) => warn!("evaluation for {} failed: {err}", e.id),
            }
        }
        table.push_row(e.id.clone(), columns.iter().map(|c| row.get(c).copied().flatten()).collect())?;
        write_json(&reports_dir.join(format!("{}.json", e.id)), &results)?;
        outcomes.insert(e.id.clone(), results);
    }

    let correlation = pearson_matrix(&table);
    table.save(out.join("metrics.tsv"))?;
    let corr_path = out.join("correlation.tsv");
    fs::write(&corr_path, correlation.to_tsv()).map_err(|e| Error::io(&corr_path, e))?;
    let md_path = out.join("report.md");
    fs::write(&md_path, markdown(&table, &correlation, &outcomes, &summary)).map_err(|e| Error::io(&md_path, e))?;
    info!(
        "run finished: {} computed, {} cached, {} NA",
        summary.computed, summary.cached, summary.failed
    );
    Ok(RunOutput {
        table,
        correlation,
        summary,
        outcomes,
    })
}

fn run_evaluation(ev: &EvaluationEntry, out: &Path) -> Result<f64> {
    let test = TestSet::load(&ev.testset)?;
    let (preds, stats) = eval::load_predictions(&ev.preds)?;
    let set = PredictionSet::join(&test, preds)?;
    let opts = EvalOptions {
        permutations: ev.permutations,
        seed: ev.seed,
        literal_distance: false,
    };
    let report = eval::evaluate(&set, &stats, &opts)?;
    let dir = out.join("eval");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&dir.join(format!("{}-{}.json", ev.embedding, test.kind)), &report)?;
    Ok(report.error)
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.3}"))
}

fn markdown(
    table: &MetricsTable,
    corr: &crate::metrics::CorrelationMatrix,
    outcomes: &BTreeMap<String, Vec<CellOutcome>>,
    summary: &RunSummary,
) -> String {
    let mut s = String::from("# Bias metrics\n\n");
    let cols = table.columns();
    let _ = writeln!(s, "| embedding | {} |", cols.join(" | "));
    let _ = writeln!(s, "|---|{}", "---|".repeat(cols.len()));
    for id in table.row_ids() {
        let vals: Vec<String> = cols.iter().map(|c| fmt_cell(table.get(id, c))).collect();
        let _ = writeln!(s, "| {id} | {} |", vals.join(" | "));
    }
    s.push_str("\n# Pearson correlation\n\n");
    let _ = writeln!(s, "| | {} |", corr.columns.join(" | "));
    let _ = writeln!(s, "|---|{}", "---|".repeat(corr.columns.len()));
    for (c, row) in corr.columns.iter().zip(&corr.values) {
        let vals: Vec<String> = row.iter().map(|v| fmt_cell(*v)).collect();
        let _ = writeln!(s, "| {c} | {} |", vals.join(" | "));
    }
    let notes: Vec<String> = outcomes
        .iter()
        .flat_map(|(id, cells)| {
            cells
                .iter()
                .filter_map(move |c| c.reason.as_ref().map(|r| format!("- {id} / {}: {r}", c.cell)))
        })
        .collect();
    if !notes.is_empty() {
        s.push_str("\n# NA cells\n\n");
        for n in notes {
            s.push_str(&n);
            s.push('\n');
        }
    }
    let _ = writeln!(
        s,
        "\n{} cells computed, {} from cache, {} NA.",
        summary.computed, summary.cached, summary.failed
    );
    s
}
