mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use edkit::datasets::write_canonical;
use edkit::evaluation::read_predictions;
use edkit::wikidata::DescriptionMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

fn edkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edkit")).args(args).output().unwrap()
}

fn json_stdout(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

struct Fixture {
    dir: TempDir,
    data: PathBuf,
    descriptions: PathBuf,
}

impl Fixture {
    fn new(seed: u64, n: usize) -> Self {
        let dir = TempDir::new().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut instances = Vec::new();
        let mut pairs = Vec::new();
        for i in 0..n {
            let reps = random_reps(&mut rng, 1 + i % 7);
            instances.push(instance_for(&mut rng, i, &reps));
            pairs.extend(reps.iter().filter_map(|r| r.description().map(|d| (r.title().clone(), d.clone()))));
        }
        let data = dir.path().join("toy.jsonl");
        write_canonical(fs::File::create(&data).unwrap(), &instances).unwrap();
        let descriptions = dir.path().join("descriptions.tsv");
        DescriptionMap::from_pairs(pairs).save(&descriptions).unwrap();
        Fixture { dir, data, descriptions }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn decode(&self, out: &Path, extra: &[&str]) -> Output {
        let mut args = vec![
            "decode",
            "--dataset",
            self.data.to_str().unwrap(),
            "--descriptions",
            self.descriptions.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        edkit(&args)
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn oracle_decoding_scores_perfectly_in_both_modes() {
    let fx = Fixture::new(1, 40);
    for mode in ["generative", "extractive"] {
        let preds = fx.path(&format!("{mode}.jsonl"));
        let summary = json_stdout(&fx.decode(&preds, &["--mode", mode, "--scorer", "oracle"]));
        assert_eq!(summary["instances"], 40);
        let report = json_stdout(&edkit(&["evaluate", "--predictions", s(&preds), "--gold", s(&fx.data)]));
        let toy = &report["datasets"][0];
        assert_eq!(toy["name"], "toy");
        assert_eq!(toy["f1"], 1.0, "{mode}");
        assert_eq!(report["avg"], 1.0);
    }
}

#[test]
fn decode_output_is_deterministic_across_runs_and_jobs() {
    let fx = Fixture::new(2, 60);
    let cases: &[&[&str]] = &[
        &["--mode", "generative", "--scorer", "ngram", "--beam", "3"],
        &["--mode", "extractive", "--scorer", "overlap", "--budget", "40"],
    ];
    for (k, flags) in cases.iter().enumerate() {
        let mut outputs = Vec::new();
        for (run, jobs) in ["1", "1", "3"].iter().enumerate() {
            let p = fx.path(&format!("run{k}_{run}.jsonl"));
            let mut args = flags.to_vec();
            args.extend_from_slice(&["--jobs", jobs]);
            json_stdout(&fx.decode(&p, &args));
            outputs.push(fs::read(&p).unwrap());
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[0], outputs[2]);
        let lines = read_predictions(&outputs[0][..]).unwrap();
        assert_eq!(lines.len(), 60);
        for l in &lines {
            // the winner heads the ranked score list
            let p = l.predicted.as_ref().unwrap();
            assert_eq!(&l.scores[0].0, p);
        }
    }
}

#[test]
fn compare_of_a_file_with_itself_finds_no_difference() {
    let fx = Fixture::new(3, 25);
    let preds = fx.path("p.jsonl");
    json_stdout(&fx.decode(&preds, &["--mode", "generative", "--scorer", "ngram"]));
    for method in ["chi2-cc", "exact"] {
        let r = json_stdout(&edkit(&["compare", "--a", s(&preds), "--b", s(&preds), "--method", method]));
        assert_eq!((r["b"].as_u64(), r["c"].as_u64()), (Some(0), Some(0)));
        assert_eq!(r["p_value"], 1.0);
        assert_eq!(r["significant"], false);
    }
}

#[test]
fn stats_and_rep_stats_report_counts() {
    let fx = Fixture::new(4, 30);
    let base = ["--dataset", s(&fx.data), "--descriptions", s(&fx.descriptions)];
    let mut args = vec!["stats"];
    args.extend_from_slice(&base);
    let v = json_stdout(&edkit(&args));
    let total: u64 = (0..30).map(|i| 1 + i % 7).sum();
    assert_eq!(v["stats"]["instances"], 30);
    assert_eq!(v["stats"]["candidates_total"], total);
    // only candidates drawn without a description miss the map
    assert!(v["stats"]["failures_total"].as_u64().unwrap() < total);
    for scorer in ["word", "byte"] {
        let mut args = vec!["rep-stats", "--mode", "with-description", "--scorer", scorer];
        args.extend_from_slice(&base);
        let v = json_stdout(&edkit(&args));
        assert_eq!(v["occurrences"], total, "{v}");
        assert!(v["mean"].as_f64().unwrap() >= 1.0);
    }
}

#[test]
fn ingest_wikidata_writes_a_loadable_map() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("latest-all.json");
    write_synthetic_dump(fs::File::create(&dump).unwrap(), 500).unwrap();
    let out = dir.path().join("map.tsv");
    let v = json_stdout(&edkit(&[
        "ingest-wikidata",
        "--dump",
        s(&dump),
        "--out",
        s(&out),
        "--jobs",
        "2",
        "--dump-date",
        "20230101",
    ]));
    let map = DescriptionMap::load(&out).unwrap();
    let (_, described, collisions) = synthetic_expectations(500);
    assert_eq!(map.len() as u64, described - collisions);
    assert_eq!(map.meta().dump_date, "20230101");
    assert!(v.is_object());
}

#[test]
fn usage_errors_exit_1_and_runtime_errors_exit_2() {
    let fx = Fixture::new(5, 5);
    let preds = fx.path("p.jsonl");
    let usage: &[&[&str]] = &[
        &["decode", "--mode", "generative", "--scorer", "ngram", "--beam", "0"],
        &["decode", "--mode", "generative", "--scorer", "overlap"],
        &["decode", "--mode", "extractive", "--scorer", "ngram"],
        &["decode", "--mode", "generative", "--scorer", "ngram", "--budget", "10"],
        &["decode", "--mode", "generative", "--scorer", "bridge"],
        &["decode", "--mode", "sideways", "--scorer", "ngram"],
    ];
    for flags in usage {
        let o = fx.decode(&preds, flags);
        assert_eq!(o.status.code(), Some(1), "{flags:?}");
        assert!(!o.stderr.is_empty());
    }
    let missing = edkit(&["compare", "--a", "/nonexistent/a.jsonl", "--b", "/nonexistent/b.jsonl"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(edkit(&["compare"]).status.code(), Some(1));

    // a file that exists but is not a predictions file
    let junk = fx.path("junk.jsonl");
    fs::write(&junk, "not json\n").unwrap();
    let o = edkit(&["compare", "--a", s(&junk), "--b", s(&junk)]);
    assert_eq!(o.status.code(), Some(2));
    // predictions naming an id the gold file does not have
    fs::write(&junk, "{\"id\":\"zzz\",\"predicted\":null,\"scores\":[]}\n").unwrap();
    let o = edkit(&["evaluate", "--predictions", s(&junk), "--gold", s(&fx.data)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_averages_and_table() {
    let fx = Fixture::new(6, 20);
    let other = fx.path("other.jsonl");
    fs::copy(&fx.data, &other).unwrap();
    let preds = fx.path("p.jsonl");
    json_stdout(&fx.decode(&preds, &["--mode", "generative", "--scorer", "oracle"]));
    let args = [
        "evaluate",
        "--predictions",
        s(&preds),
        "--gold",
        s(&fx.data),
        "--predictions",
        s(&preds),
        "--gold",
        s(&other),
        "--ood",
        "other",
    ];
    let v = json_stdout(&edkit(&args));
    assert_eq!(v["avg"], 1.0);
    assert_eq!(v["avg_ood"], 1.0);
    let mut with_table = args.to_vec();
    with_table.push("--table");
    let o = edkit(&with_table);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("toy") && text.contains("other"), "{text}");
}
