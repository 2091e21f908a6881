mod common;

use std::path::PathBuf;
use std::process::Command;

use common::*;
use edkit::bridge::{BridgeClient, BridgeError};
use edkit::extractive::{assemble, extract};
use edkit::generative::{decode, BeamConfig};
use edkit::reference::OverlapSpanScorer;
use edkit::types::mark_mention;
use edkit::{SpanScorer, TokenScorer, Tokenizer};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn stub_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stub_bridge.py")
}

fn python_available() -> bool {
    let ok = Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success());
    if !ok {
        eprintln!("python3 not found; skipping bridge test");
    }
    ok
}

fn stub(extra: &[&str]) -> Result<BridgeClient, BridgeError> {
    let mut argv = vec!["python3".to_string(), stub_path().display().to_string()];
    argv.extend(extra.iter().map(|s| s.to_string()));
    BridgeClient::spawn(&argv)
}

#[test]
fn handshake_and_specials() {
    if !python_available() {
        return;
    }
    let b = stub(&[]).unwrap();
    assert_eq!(b.modes(), ["generative", "extractive"]);
    assert_eq!((b.bos_id(), b.eos_id()), (0, 1));
    b.require_mode("generative").unwrap();
    b.require_mode("extractive").unwrap();
}

#[test]
fn handshake_failures() {
    if !python_available() {
        return;
    }
    assert!(matches!(stub(&["--version", "2"]), Err(BridgeError::Version(2))));
    let b = stub(&["--modes", "generative"]).unwrap();
    assert!(matches!(b.require_mode("extractive"), Err(BridgeError::MissingMode(_))));
    let both = stub(&["--modes", "both"]).unwrap();
    both.require_mode("extractive").unwrap();
    assert!(matches!(BridgeClient::from_command_line("  "), Err(BridgeError::EmptyCommand)));
    assert!(BridgeClient::from_command_line("/nonexistent/model-server").is_err());
}

#[test]
fn encode_decode_round_trip() {
    if !python_available() {
        return;
    }
    let b = stub(&[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut texts = vec!["Ronaldo: Brazilian association football player".to_string(), String::new()];
    for _ in 0..100 {
        let n = rng.gen_range(1..6);
        texts.push((0..n).map(|_| *WORDS.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" "));
    }
    for t in &texts {
        let ids = b.encode(t).unwrap();
        // the stub's vocabulary is UTF-8 bytes shifted past the two specials
        assert_eq!(ids, t.bytes().map(|x| x as u32 + 2).collect::<Vec<_>>());
        assert_eq!(&b.decode(&ids).unwrap(), t);
    }
}

#[test]
fn remote_errors_surface_as_errors() {
    if !python_available() {
        return;
    }
    let b = stub(&[]).unwrap();
    assert!(matches!(b.call::<Value>(json!({"op": "frobnicate"})), Err(BridgeError::Remote(_))));
    assert!(b.decode(&[999]).is_err());
    // the channel stays usable afterwards
    assert_eq!(b.encode("a").unwrap(), vec![b'a' as u32 + 2]);
}

#[test]
fn logprobs_align_with_allowed() {
    if !python_available() {
        return;
    }
    let b = stub(&[]).unwrap();
    let allowed = [5, 9, 1, 77];
    let lp = b.next_logprobs("<s> x </s>", &[3, 4], &allowed).unwrap();
    assert_eq!(lp.iter().map(|p| p.0).collect::<Vec<_>>(), allowed);
    let total: f64 = lp.iter().map(|p| p.1.exp()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let single = b.next_logprobs("c", &[], &[42]).unwrap();
    assert_eq!(single.len(), 1);
    assert!(single[0].1.abs() < 1e-12);
}

#[test]
fn span_scores_cover_the_passage() {
    if !python_available() {
        return;
    }
    let b = stub(&[]).unwrap();
    let context = "Ronaldo: Brazilian player <sep> Cristiano Ronaldo: Portuguese player";
    let s = b.span_scores("<s> Ronaldo </s> scored", context).unwrap();
    s.validate(context.chars().count()).unwrap();
    assert_eq!(s.spans.len(), 8);
    assert_eq!(s.spans[0], (0, 8));
    assert_eq!(s.start, vec![1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
}

/// The stub counts shared words the same way the built-in overlap scorer
/// does, so extraction through the bridge must pick the same winners.
#[test]
fn extraction_through_the_bridge_matches_the_overlap_scorer() {
    if !python_available() {
        return;
    }
    let b = stub(&[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..40 {
        let reps = random_reps(&mut rng, 1 + i % 10);
        let inst = instance_for(&mut rng, i, &reps);
        let remote = extract(&inst, &reps, &b, None, None).unwrap();
        let local = extract(&inst, &reps, &OverlapSpanScorer, None, None).unwrap();
        assert_eq!(remote.winner, local.winner, "instance {i}");
        assert_eq!(remote.scores, local.scores);
        assert!(assemble(&inst, &reps, Some(10_000), Some(&b)).is_ok());
    }
}

#[test]
fn full_beam_decoding_through_the_bridge_is_exact() {
    if !python_available() {
        return;
    }
    let b = stub(&[]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..15 {
        let reps = random_reps(&mut rng, 1 + i % 6);
        let inst = instance_for(&mut rng, i, &reps);
        let d = decode(&inst, &reps, &b, &b, &BeamConfig::with_beam(reps.len())).unwrap();
        let ctx = mark_mention(&inst).unwrap();
        let (best, score) = exhaustive_argmax(&reps, &b, &b, ctx.as_str());
        assert_eq!(d.winner_index, best, "instance {i}");
        assert!((d.ranked[0].score - score).abs() < 1e-9);
    }
}

#[test]
fn cli_decodes_through_bridge_processes() {
    if !python_available() {
        return;
    }
    use edkit::datasets::write_canonical;
    use edkit::wikidata::DescriptionMap;
    let dir = tempfile::TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut instances = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..12 {
        let reps = random_reps(&mut rng, 1 + i % 5);
        instances.push(instance_for(&mut rng, i, &reps));
        pairs.extend(reps.iter().filter_map(|r| r.description().map(|d| (r.title().clone(), d.clone()))));
    }
    let data = dir.path().join("d.jsonl");
    write_canonical(std::fs::File::create(&data).unwrap(), &instances).unwrap();
    let desc = dir.path().join("m.tsv");
    DescriptionMap::from_pairs(pairs).save(&desc).unwrap();
    let cmd = format!("python3 {}", stub_path().display());
    let run = |args: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_edkit")).args(args).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    for mode in ["generative", "extractive"] {
        let mut outputs = Vec::new();
        for jobs in ["1", "2"] {
            let out = dir.path().join(format!("{mode}{jobs}.jsonl"));
            run(&[
                "decode", "--mode", mode, "--scorer", "bridge", "--bridge-cmd", &cmd, "--jobs", jobs,
                "--dataset", data.to_str().unwrap(), "--descriptions", desc.to_str().unwrap(),
                "--out", out.to_str().unwrap(),
            ]);
            outputs.push(std::fs::read(&out).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{mode}");
    }
    let stats: Value = serde_json::from_slice(&run(&[
        "rep-stats", "--mode", "title-only", "--scorer", "bridge", "--bridge-cmd", &cmd,
        "--dataset", data.to_str().unwrap(), "--descriptions", desc.to_str().unwrap(),
    ]))
    .unwrap();
    // byte tokens: the mean equals the mean UTF-8 title length
    let lens: Vec<usize> = instances.iter().flat_map(|i| i.candidates().iter().map(|t| t.as_str().len())).collect();
    let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
    assert!((stats["mean"].as_f64().unwrap() - mean).abs() < 1e-9);

    // a bridge without the requested mode is refused before any work
    let o = Command::new(env!("CARGO_BIN_EXE_edkit"))
        .args([
            "decode", "--mode", "extractive", "--scorer", "bridge",
            "--bridge-cmd", &format!("{cmd} --modes generative"),
            "--dataset", data.to_str().unwrap(), "--descriptions", desc.to_str().unwrap(),
            "--out", dir.path().join("x.jsonl").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_ne!(o.status.code(), Some(0));
}
