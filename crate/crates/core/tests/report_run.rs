mod common;

use std::fs;
use std::path::Path;

use embias::debias::{self, DebiasSpec};
use embias::embedding::{save_embeddings, Embedding, WordList};
use embias::metrics::{pearson_matrix, MetricsTable};
use embias::report::{run_manifest, RunManifest};
use embias::stats::pearson;
use embias::subspace::{self, DifferenceMatrix};

/// Gaussian embedding with a planted gender axis along the first coordinate.
/// Name pairs differ by varying amounts so the axis survives centring.
fn toy_embedding(seed: u64) -> Embedding<f64> {
    let mut rng = common::rng(seed);
    let dim = 8;
    let mut vocab = Vec::new();
    let mut rows = Vec::new();
    let mut push = |w: String, mut v: Vec<f64>, shift: f64| {
        v[0] += shift;
        vocab.push(w);
        rows.push(v);
    };
    for i in 0..60 {
        let v = common::gaussian_vec(&mut rng, dim);
        push(format!("w{i}"), v, if i % 2 == 0 { 1.5 } else { -1.5 });
    }
    for i in 0..12 {
        let v = common::gaussian_vec(&mut rng, dim);
        push(format!("fname{i}"), v, 1.0 + i as f64);
        let v = common::gaussian_vec(&mut rng, dim);
        push(format!("mname{i}"), v, -1.0 - i as f64);
    }
    let v = common::gaussian_vec(&mut rng, dim);
    push("she".into(), v, 6.0);
    let v = common::gaussian_vec(&mut rng, dim);
    push("he".into(), v, -6.0);
    Embedding::from_rows(vocab, rows).unwrap()
}

fn write_words(dir: &Path) {
    WordList::new("vt", (0..60).map(|i| format!("w{i}"))).save(dir.join("vt.txt")).unwrap();
    WordList::new("f", (0..12).map(|i| format!("fname{i}"))).save(dir.join("female.txt")).unwrap();
    WordList::new("m", (0..12).map(|i| format!("mname{i}"))).save(dir.join("male.txt")).unwrap();
}

fn write_debiased(dir: &Path, emb: &Embedding<f64>) {
    let f = WordList::load(dir.join("female.txt")).unwrap();
    let m = WordList::load(dir.join("male.txt")).unwrap();
    let diffs: DifferenceMatrix<f64> = subspace::pairwise_differences(&f, &m, emb).unwrap();
    let sub = subspace::principal_subspace(&diffs, 2, true).unwrap();
    let deb = debias::misp(emb, &sub, &DebiasSpec::mhd()).unwrap();
    save_embeddings(&deb, dir.join("deb.txt")).unwrap();
}

const MANIFEST: &str = r#"
output_dir = "out"

[words]
target_vocab = "vt.txt"
names_female = "female.txt"
names_male = "male.txt"

[config]
metrics = ["db", "midb", "cluster", "recover", "gipe"]
d = 2
thetas = [0.03, 0.05]
neighbors = 5
cluster_sizes = [10]
recover_per_class = 10
precision = "f64"

[[embedding]]
id = "orig"
path = "orig.txt"
values = { E = 0.2 }

[[embedding]]
id = "deb"
path = "deb.txt"
original = "orig"
values = { E = 0.1 }
"#;

#[test]
fn rerun_hits_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let emb = toy_embedding(1);
    save_embeddings(&emb, dir.path().join("orig.txt")).unwrap();
    write_words(dir.path());
    write_debiased(dir.path(), &emb);
    fs::write(dir.path().join("run.toml"), MANIFEST).unwrap();

    let m = RunManifest::load(&dir.path().join("run.toml")).unwrap();
    let first = run_manifest(&m).unwrap();
    assert_eq!(first.table.n_rows(), 2);
    assert_eq!(first.summary.failed, 0, "{:?}", first.outcomes);
    assert!(first.summary.computed > 0);
    assert_eq!(first.summary.cached, 0);
    for col in ["DB", "MIDB", "Clus:v_10", "Rec:LR", "GIPE:0.03", "GIPE:0.05", "E"] {
        assert!(first.table.column_index(col).is_some(), "missing column {col}");
    }
    // Hard projection removes the she-he axis almost entirely.
    let db = first.table.column("DB").unwrap();
    assert!(db[1].unwrap() < db[0].unwrap());

    let second = run_manifest(&m).unwrap();
    assert_eq!(second.summary.computed, 0);
    assert_eq!(second.summary.cached, first.summary.computed);
    assert_eq!(second.table.to_tsv(), first.table.to_tsv());

    let out = dir.path().join("out");
    for f in ["metrics.tsv", "correlation.tsv", "report.md", "reports/orig.json", "reports/deb.json"] {
        assert!(out.join(f).is_file(), "{f} not written");
    }
    let reloaded = MetricsTable::load(out.join("metrics.tsv")).unwrap();
    assert_eq!(reloaded.to_tsv(), first.table.to_tsv());
}

#[test]
fn one_embedding_two_metrics() {
    let dir = tempfile::tempdir().unwrap();
    save_embeddings(&toy_embedding(2), dir.path().join("a.txt")).unwrap();
    write_words(dir.path());
    let text = "output_dir = \"o\"\n[words]\ntarget_vocab = \"vt.txt\"\nnames_female = \"female.txt\"\nnames_male = \"male.txt\"\n\
                [config]\nmetrics = [\"db\", \"midb\"]\nd = 2\n[[embedding]]\nid = \"a\"\npath = \"a.txt\"\n";
    fs::write(dir.path().join("m.toml"), text).unwrap();
    let out = run_manifest(&RunManifest::load(&dir.path().join("m.toml")).unwrap()).unwrap();
    assert_eq!(out.table.n_rows(), 1);
    assert_eq!(out.table.columns(), ["DB", "MIDB"]);
}

#[test]
fn failed_cell_becomes_na_and_run_continues() {
    let dir = tempfile::tempdir().unwrap();
    let emb = toy_embedding(3);
    let keep: Vec<usize> = (0..emb.len()).filter(|&i| emb.word(i) != "she").collect();
    save_embeddings(&emb.select(&keep), dir.path().join("a.txt")).unwrap();
    write_words(dir.path());
    let text = "output_dir = \"o\"\n[words]\ntarget_vocab = \"vt.txt\"\nnames_female = \"female.txt\"\nnames_male = \"male.txt\"\n\
                [config]\nmetrics = [\"db\", \"midb\"]\nd = 2\n[[embedding]]\nid = \"a\"\npath = \"a.txt\"\n";
    fs::write(dir.path().join("m.toml"), text).unwrap();
    let out = run_manifest(&RunManifest::load(&dir.path().join("m.toml")).unwrap()).unwrap();
    assert_eq!(out.summary.failed, 1);
    assert_eq!(out.table.get("a", "DB"), None);
    assert!(out.table.get("a", "MIDB").is_some());
    let cells = &out.outcomes["a"];
    assert!(cells.iter().any(|c| c.reason.as_deref().is_some_and(|r| r.contains("she"))));
}

#[test]
fn na_cells_are_deleted_pairwise() {
    let mut rng = common::rng(4);
    let mut t = MetricsTable::new(["DB", "MIDB", "E"]).unwrap();
    let mut cols: [Vec<f64>; 3] = Default::default();
    for i in 0..8 {
        let row: Vec<f64> = (0..3).map(|_| common::uniform(&mut rng, -1.0, 1.0)).collect();
        let a = if i == 5 { None } else { Some(row[0]) };
        t.push_row(format!("r{i}"), vec![a, Some(row[1]), Some(row[2])]).unwrap();
        for k in 0..3 {
            cols[k].push(row[k]);
        }
    }
    let m = pearson_matrix(&t);
    let without = |v: &[f64]| -> Vec<f64> { v.iter().enumerate().filter(|(i, _)| *i != 5).map(|(_, x)| *x).collect() };
    assert_eq!(m.get("DB", "MIDB"), pearson(&without(&cols[0]), &without(&cols[1])));
    assert_eq!(m.get("MIDB", "E"), pearson(&cols[1], &cols[2]));
}
