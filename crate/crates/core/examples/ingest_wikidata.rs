//! Streams a tiny in-memory dump through the ingester.
//!
//! Run with a path to ingest a real dump instead:
//! `cargo run --release --example ingest_wikidata -- latest-all.json.gz`

use std::io::Cursor;

use edkit::wikidata::{ingest_dump, ingest_path, IngestOptions};

const DUMP: &str = r#"[
{"type":"item","id":"Q1","descriptions":{"en":{"language":"en","value":"capital of France"}},"sitelinks":{"enwiki":{"site":"enwiki","title":"Paris","badges":[]}}},
{"type":"item","id":"Q2","descriptions":{"fr":{"language":"fr","value":"ville"}},"sitelinks":{"enwiki":{"site":"enwiki","title":"Lyon","badges":[]}}},
{"type":"item","id":"Q3","descriptions":{"en":{"language":"en","value":"no English article"}},"sitelinks":{}},
{"type":"item","id":"Q4","descriptions":{"en":{"language":"en","value":"American media personality"}},"sitelinks":{"enwiki":{"site":"enwiki","title":"Paris Hilton","badges":[]}}}
]
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = IngestOptions {
        jobs: 2,
        ..IngestOptions::default()
    };
    let (map, stats) = match std::env::args().nth(1) {
        Some(path) => ingest_path(path, &opts)?,
        None => ingest_dump(Cursor::new(DUMP), &opts)?,
    };
    println!("{}", serde_json::to_string_pretty(&stats)?);
    for (title, desc) in map.iter().take(10) {
        println!("{title}\t{desc}");
    }
    Ok(())
}
