use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use embias::data;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_embias"))
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

/// Uniform value in [-1, 1) from a splitmix64 hash of `i`.
fn noise(i: u64) -> f64 {
    let mut z = i.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

/// Deterministic toy vectors with a gender axis on the first coordinate.
fn write_toy_embedding(path: &Path) {
    let (female, male) = data::subspace_names();
    let mut text = String::new();
    let mut row = |w: &str, seed: usize, shift: f64| {
        let v: Vec<String> = (0..6)
            .map(|k| {
                let x = noise((seed * 6 + k) as u64) + if k == 0 { shift } else { 0.0 };
                format!("{x:.6}")
            })
            .collect();
        text.push_str(&format!("{w} {}\n", v.join(" ")));
    };
    row("he", 1, -4.0);
    row("she", 2, 4.0);
    for (i, w) in female.words().iter().enumerate() {
        row(w, 100 + i, 1.0 + (i % 5) as f64);
    }
    for (i, w) in male.words().iter().enumerate() {
        row(w, 300 + i, -1.0 - (i % 5) as f64);
    }
    for i in 0..40 {
        row(&format!("w{i}"), 500 + i, if i % 2 == 0 { 0.8 } else { -0.8 });
    }
    fs::write(path, text).unwrap();
}

fn write_vocab(path: &Path) {
    let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    fs::write(path, words.join("\n") + "\n").unwrap();
}

#[test]
fn testgen_writes_explicit_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("explicit.jsonl");
    ok(bin().args(["testgen", "--kind", "explicit", "--out"]).arg(&out).output().unwrap());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 15_744);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["set_kind"], "explicit");
    assert!(first["premise"].as_str().unwrap().starts_with("A person"));
}

#[test]
fn permutations_lists_alternatives() {
    let out = ok(bin().args(["permutations", "--d", "4"]).output().unwrap());
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 23);
    assert_eq!(lines[0], "1243");
    assert_eq!(lines[22], "4321");
}

#[test]
fn evaluate_scores_a_prediction_file() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("t.jsonl");
    ok(bin().args(["testgen", "--kind", "explicit", "--out"]).arg(&test).output().unwrap());
    let mut preds = String::from("id\tN\tE\tC\n");
    for line in fs::read_to_string(&test).unwrap().lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let p = if v["group"] == "M" { "0.5\t0.5\t0.0" } else { "1.0\t0.0\t0.0" };
        preds.push_str(&format!("{}\t{p}\n", v["id"].as_str().unwrap()));
    }
    let pf = dir.path().join("p.tsv");
    fs::write(&pf, preds).unwrap();
    let report = dir.path().join("r.json");
    ok(bin()
        .args(["evaluate", "--permutations", "200", "--literal-eq2", "--testset"])
        .arg(&test)
        .arg("--preds")
        .arg(&pf)
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap());
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let half = 0.5f64.sqrt();
    assert!((r["error"].as_f64().unwrap() - half / 2.0).abs() < 1e-12);
    assert!((r["distance"].as_f64().unwrap() - half).abs() < 1e-12);
    assert!((r["distance_literal"].as_f64().unwrap() - half / 4.0).abs() < 1e-12);
    assert_eq!(r["missing"], 0);
    assert_eq!(r["permutation"]["n_samples"], 200);
}

#[test]
fn subspace_debias_and_metrics_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("emb.txt");
    let vt = dir.path().join("vt.txt");
    write_toy_embedding(&emb);
    write_vocab(&vt);
    let sub = dir.path().join("sub.txt");
    ok(bin().args(["--precision", "f64", "subspace", "--d", "2", "--embeddings"]).arg(&emb).arg("--out").arg(&sub).output().unwrap());
    assert!(sub.is_file());

    let db = |path: &Path| -> f64 {
        let out = ok(bin().args(["metrics", "--measure", "db", "--embeddings"]).arg(path).arg("--vocab").arg(&vt).output().unwrap());
        serde_json::from_str::<Value>(&out).unwrap()["DB"].as_f64().unwrap()
    };
    let before = db(&emb);

    let hard = dir.path().join("hard.txt");
    ok(bin().args(["debias", "--method", "mhd", "--embeddings"]).arg(&emb).arg("--subspace").arg(&sub).arg("--out").arg(&hard).output().unwrap());
    let soft = dir.path().join("soft.txt");
    ok(bin()
        .args(["debias", "--method", "permuted", "--permutation", "21", "--embeddings"])
        .arg(&emb)
        .arg("--subspace")
        .arg(&sub)
        .arg("--out")
        .arg(&soft)
        .output()
        .unwrap());
    assert!(db(&hard) < before);

    let out = ok(bin()
        .args(["metrics", "--measure", "gipe", "--neighbors", "5", "--embeddings"])
        .arg(&hard)
        .arg("--original")
        .arg(&emb)
        .arg("--vocab")
        .arg(&vt)
        .output()
        .unwrap());
    let g: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(g["words"], 40);

    let bad = bin().args(["debias", "--method", "permuted", "--embeddings"]).arg(&emb).arg("--out").arg(dir.path().join("x")).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn correlate_reproduces_fixture_matrix() {
    let out = ok(bin().arg("correlate").arg("--table").arg(core_fixture("table6.tsv")).output().unwrap());
    let header: Vec<&str> = out.lines().next().unwrap().split('\t').collect();
    let mi = header.iter().position(|&c| c == "MIDB").unwrap();
    let e = header.iter().position(|&c| c == "E").unwrap();
    let row = out.lines().find(|l| l.starts_with("MIDB\t")).unwrap();
    let r: f64 = row.split('\t').nth(e).unwrap().parse().unwrap();
    assert!((r - 0.667).abs() <= 0.02, "{r}");
    assert!(mi > 0);
}

#[test]
fn bench_similarity_and_convert() {
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("emb.txt");
    write_toy_embedding(&emb);
    let sim = dir.path().join("sim.txt");
    fs::write(&sim, "w0 w2 9.0\nw0 w1 1.0\nw1 w3 8.5\nw2 w5 2.0\nw4 w6 7.0\nnope w1 3.0\n").unwrap();
    let out = ok(bin().args(["bench", "--task", "similarity", "--dataset"]).arg(&sim).arg("--embeddings").arg(&emb).output().unwrap());
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["covered"], 5);
    assert_eq!(v["total"], 6);

    let msr = dir.path().join("msr.txt");
    fs::write(&msr, "good better rough rougher\nbig bigger small smaller\n").unwrap();
    let google = dir.path().join("g.txt");
    ok(bin().args(["convert", "msr", "--input"]).arg(&msr).arg("--out").arg(&google).output().unwrap());
    let text = fs::read_to_string(&google).unwrap();
    assert!(text.starts_with(": "));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn run_manifest_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_embedding(&dir.path().join("emb.txt"));
    write_vocab(&dir.path().join("vt.txt"));
    let manifest = "output_dir = \"out\"\n[words]\ntarget_vocab = \"vt.txt\"\n[config]\nmetrics = [\"db\", \"midb\"]\nd = 2\n\
                    [[embedding]]\nid = \"toy\"\npath = \"emb.txt\"\n";
    let mf = dir.path().join("m.toml");
    fs::write(&mf, manifest).unwrap();
    ok(bin().arg("run").arg("--manifest").arg(&mf).output().unwrap());
    let table = fs::read_to_string(dir.path().join("out/metrics.tsv")).unwrap();
    assert!(table.starts_with("id\tDB\tMIDB\n"));
    assert!(table.contains("\ntoy\t"));
    let again = bin().arg("run").arg("--manifest").arg(&mf).output().unwrap();
    assert!(String::from_utf8_lossy(&again.stderr).contains("0 cells computed"));
}
