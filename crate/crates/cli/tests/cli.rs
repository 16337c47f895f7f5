use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gpa_core::inference::lrt::pleiotropy_from_fits;
use gpa_core::io::{read_json, read_pvalues, write_json, FitDocument};
use gpa_core::sim::sample_model;
use gpa_core::{fit, EmOptions, GpaParams, PValueMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn gpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpa"))
        .args(args)
        .env_remove("GPA_THREADS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_pvalues(path: &Path, p: &PValueMatrix) {
    let mut s = format!("snp_id\t{}\n", p.study_labels().join("\t"));
    for (id, row) in p.snp_ids().iter().zip(p.values().rows()) {
        s += id;
        for v in row {
            s += &format!("\t{v}");
        }
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

fn two_study_file(dir: &TempDir, seed: u64) -> PathBuf {
    let params = GpaParams {
        pi: vec![0.8, 0.05, 0.05, 0.1],
        alpha: vec![0.4, 0.6],
        q: vec![],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = sample_model(&params, 3000, &mut rng).unwrap();
    let path = dir.path().join("p.tsv");
    write_pvalues(&path, &s.pvalues);
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn fit_matches_library_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let p = two_study_file(&dir, 1);
    let out = dir.path().join("fit.json");
    let post = dir.path().join("post.tsv");
    let o = gpa(&["fit", "--pvalues", path_str(&p), "--out", path_str(&out), "--posteriors", path_str(&post)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let doc: FitDocument = read_json(&out).unwrap();
    let (pm, report) = read_pvalues(&[&p], None).unwrap();
    let lib = fit(&pm, None, &EmOptions::default(), false).unwrap();
    for (a, b) in doc.params.pi.iter().zip(&lib.params.pi) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in doc.params.alpha.iter().zip(&lib.params.alpha) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(doc.ingestion, report);
    assert_eq!(doc.iterations, lib.iterations);
    assert!(doc.std_errors.is_some());
    assert_eq!(doc.run.chunk_size, 4096);

    // reserializing the reloaded document reproduces the file byte for byte
    let again = dir.path().join("again.json");
    write_json(&again, &doc).unwrap();
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());

    let text = fs::read_to_string(&post).unwrap();
    assert_eq!(text.lines().count(), 3001);
    assert!(text.starts_with("snp_id\tstate_00\tstate_10\tstate_01\tstate_11\n"));
}

#[test]
fn pleiotropy_statistic_equals_library_call() {
    let dir = TempDir::new().unwrap();
    let p = two_study_file(&dir, 2);
    let out = dir.path().join("lrt.json");
    let o = gpa(&["test-pleiotropy", "--pvalues", path_str(&p), "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();

    let (pm, _) = read_pvalues(&[&p], None).unwrap();
    let opts = EmOptions::default();
    let alt = fit(&pm, None, &opts, false).unwrap();
    let null = fit(&pm, None, &opts, true).unwrap();
    let lib = pleiotropy_from_fits(&alt, &null).unwrap();
    assert_eq!(doc["statistic"].as_f64().unwrap().to_bits(), lib.statistic.to_bits());
    assert_eq!(doc["df"], 1);
    assert_eq!(doc["loglik_alt"].as_f64().unwrap().to_bits(), lib.loglik_alt.to_bits());
    assert_eq!(doc["gpa_spec_version"], "1.0");
    // pi_11 = 0.1 against 0.15 * 0.15 under independence
    assert!(lib.p_value < 0.05, "{lib:?}");
}

#[test]
fn malformed_tsv_exits_3_with_row() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.tsv");
    fs::write(&p, "snp\tp1\tp2\ns1\t0.1\t0.2\ns2\t0.3\n").unwrap();
    let o = gpa(&["fit", "--pvalues", path_str(&p), "--out", path_str(&dir.path().join("f.json"))]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error\tkind=data\tmessage="), "{err}");
    assert!(err.contains("data row 2"), "{err}");
    assert!(!dir.path().join("f.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let o = gpa(&["fit", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error\tkind=usage"));
    let o = gpa(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = TempDir::new().unwrap();
    let p = dir.path().join("one.tsv");
    fs::write(&p, "snp\tp\ns1\t0.1\ns2\t0.5\n").unwrap();
    let o = gpa(&["test-pleiotropy", "--pvalues", path_str(&p), "--out", path_str(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn threads_come_from_environment() {
    let dir = TempDir::new().unwrap();
    let p = two_study_file(&dir, 3);
    let out = dir.path().join("fit.json");
    let o = Command::new(env!("CARGO_BIN_EXE_gpa"))
        .args(["fit", "--pvalues", path_str(&p), "--out", path_str(&out), "--chunk-size", "512"])
        .env("GPA_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: FitDocument = read_json(&out).unwrap();
    assert_eq!(doc.run.threads, 3);
    assert_eq!(doc.run.chunk_size, 512);
}

fn declared(decisions: &Path) -> usize {
    fs::read_to_string(decisions)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("# summary"))
        .map(|l| {
            l.split('\t')
                .find_map(|f| f.strip_prefix("n_declared="))
                .unwrap()
                .parse::<usize>()
                .unwrap()
        })
        .sum()
}

#[test]
fn simulate_fit_and_fdr_joint_declares_more() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(
        &cfg,
        "n_snps = 5000\nn_causal = 250\nn_shared = 250\nn_cases = 1000\ncohort_multiplier = 15.0\nseed = 4\n",
    )
    .unwrap();
    let sim = dir.path().join("sim");
    let o = gpa(&["simulate", "--config", path_str(&cfg), "--out", path_str(&sim)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["pvalues.tsv", "annotation.tsv", "truth.tsv", "manifest.json"] {
        assert!(sim.join(f).exists(), "{f}");
    }
    let pv = sim.join("pvalues.tsv");
    let run_fdr = |name: &str, cols: Option<&str>| -> usize {
        let fit_path = dir.path().join(format!("{name}.json"));
        let mut args = vec!["fit", "--pvalues", path_str(&pv), "--out", path_str(&fit_path)];
        if let Some(c) = cols {
            args.extend(["--pvalue-cols", c]);
        }
        let o = gpa(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let dec = dir.path().join(format!("{name}.tsv"));
        let o = gpa(&["fdr", "--fit", path_str(&fit_path), "--tau", "0.05", "--out", path_str(&dec)]);
        assert!(o.status.success(), "{}", stderr(&o));
        declared(&dec)
    };
    let joint = run_fdr("joint", None);
    let separate = run_fdr("sep1", Some("trait1")) + run_fdr("sep2", Some("trait2"));
    assert!(joint > separate, "joint {joint} vs separate {separate}");

    let lrt = dir.path().join("enrich.json");
    let o = gpa(&[
        "test-enrichment",
        "--pvalues",
        path_str(&pv),
        "--annotation",
        path_str(&sim.join("annotation.tsv")),
        "--ann-col",
        "1",
        "--out",
        path_str(&lrt),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&lrt).unwrap()).unwrap();
    assert_eq!(doc["df"], 3);
    assert_eq!(doc["kind"], "enrichment");
}

#[test]
fn benchmark_output_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bench.toml");
    fs::write(
        &cfg,
        "replicates = 2\nmaster_seed = 9\nmodes = [\"separate\", \"joint\"]\n\n[[grid]]\nn_snps = 1500\nn_causal = 100\nn_shared = 100\nn_cases = 300\n",
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(format!("{name}.tsv"));
        let man = dir.path().join(format!("{name}.json"));
        let o = gpa(&["benchmark", "--config", path_str(&cfg), "--out", path_str(&out), "--manifest", path_str(&man)]);
        assert!(o.status.success(), "{}", stderr(&o));
        (fs::read(out).unwrap(), fs::read_to_string(man).unwrap())
    };
    let (a, manifest) = run("a");
    let (b, _) = run("b");
    assert_eq!(a, b);
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["chunk_size"], 4096);
    assert_eq!(m["replicate_seeds"].as_array().unwrap().len(), 2);
    assert!(m["threads"].as_u64().unwrap() >= 1);
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(&cfg, "n_snps = 10\nno_such_key = 1\n").unwrap();
    let o = gpa(&["simulate", "--config", path_str(&cfg), "--out", path_str(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
