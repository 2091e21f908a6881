//! Scores candidates with an external model process.
//!
//! `cargo run --example bridge_scorer -- "python3 crates/core/tests/fixtures/stub_bridge.py"`

use edkit::bridge::BridgeClient;
use edkit::generative::{decode, BeamConfig};
use edkit::types::{EdInstance, MentionSpan};
use edkit::{normalize_title, CandidateRepresentation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Some(cmd) = std::env::args().nth(1) else {
        eprintln!("usage: bridge_scorer <model command line>");
        std::process::exit(1);
    };
    let bridge = BridgeClient::from_command_line(&cmd)?;
    bridge.require_mode("generative")?;
    let titles = vec![normalize_title("Jordan")?, normalize_title("Michael Jordan")?, normalize_title("Jordan River")?];
    let reps: Vec<_> = titles.iter().cloned().map(CandidateRepresentation::title_only).collect();
    let inst = EdInstance::new("ex", "Jordan dunked", MentionSpan { start: 0, end: 6 }, titles, None)?;
    let d = decode(&inst, &reps, &bridge, &bridge, &BeamConfig::with_beam(3))?;
    for r in &d.ranked {
        println!("{:>9.4}  {}", r.score, r.title);
    }
    Ok(())
}
