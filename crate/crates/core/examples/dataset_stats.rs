//! Reads an AIDA-CoNLL fragment and counts description-mapping failures.

use std::io::Cursor;

use edkit::datasets::{compute_stats, CandidateSidecar, DatasetFormat, DatasetReader, ReadOptions};
use edkit::{normalize_title, DescriptionMap, EntityDescription};

const SIDECAR: &str = r#"{"mention_id":"1 EU#1","candidates":["Germany","German language","Germans"]}
{"mention_id":"1 EU#2","candidates":["United_Kingdom","British people","Germany"]}
"#;

const AIDA: &str = "-DOCSTART- (1 EU)
EU\tB\tEU\t--NME--
rejects
German\tB\tGerman\tGermany\thttp://en.wikipedia.org/wiki/Germany\t11867\t/m/0345h
call
to
boycott
British\tB\tBritish\tUnited_Kingdom\thttp://en.wikipedia.org/wiki/United_Kingdom\t31717\t/m/07ssc
lamb
.
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let opts = ReadOptions {
        sidecar: Some(CandidateSidecar::read(Cursor::new(SIDECAR))?),
        ..ReadOptions::default()
    };
    let reader = DatasetReader::new(Cursor::new(AIDA), DatasetFormat::AidaConll, opts);
    let (instances, counters) = reader.collect_all()?;
    for i in &instances {
        let cands: Vec<_> = i.candidates().iter().map(|c| c.as_str()).collect();
        println!("{}  {:?} -> {:?}  {cands:?}", i.id(), i.mention_text(), i.gold().map(|g| g.as_str()));
    }
    let map = DescriptionMap::from_pairs([(normalize_title("Germany")?, EntityDescription::en("country in Central Europe")?)]);
    println!("{}", serde_json::to_string_pretty(&compute_stats(instances.iter().cloned(), &map))?);
    println!("{}", serde_json::to_string_pretty(&counters)?);
    Ok(())
}
