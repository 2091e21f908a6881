mod common;

use std::io::{Cursor, Write};

use common::*;
use edkit::datasets::{compute_stats, DatasetStats};
use edkit::wikidata::{ingest_dump, ingest_path, DescriptionMap, IngestOptions};
use edkit::EntityTitle;
use flate2::write::GzEncoder;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dump_bytes(n: u64) -> Vec<u8> {
    let mut v = Vec::new();
    write_synthetic_dump(&mut v, n).unwrap();
    v
}

fn tsv(map: &DescriptionMap) -> Vec<u8> {
    let mut out = Vec::new();
    map.write_tsv(&mut out).unwrap();
    out
}

#[test]
fn synthetic_counts_match_direct_counting() {
    let n = 25_000;
    let (map, stats) = ingest_dump(Cursor::new(dump_bytes(n)), &IngestOptions::default()).unwrap();
    let (sitelinked, described, collisions) = synthetic_expectations(n);
    assert_eq!(stats.entities_scanned, n);
    assert_eq!(stats.with_enwiki_sitelink, sitelinked);
    assert_eq!(stats.with_description, described);
    assert_eq!(stats.collisions, collisions);
    assert_eq!(stats.emitted, described - collisions);
    assert_eq!(map.len() as u64, stats.emitted);
    assert_eq!(stats.malformed_lines, 0);
    // the first entity with a repeated title wins
    let repeated = format!("E{:08x}", 995u32.wrapping_mul(2_654_435_761));
    assert_eq!(map.get(&repeated), Some("item 995"));
}

#[test]
fn parallel_ingest_is_byte_identical() {
    let n = 100_000;
    let plain = dump_bytes(n);
    let mut gz = GzEncoder::new(Vec::new(), flate2::Compression::fast());
    gz.write_all(&plain).unwrap();
    let gz = gz.finish().unwrap();
    let reference = {
        let (m, _) = ingest_dump(Cursor::new(plain.clone()), &IngestOptions::default()).unwrap();
        tsv(&m)
    };
    for jobs in [1, 2, 4, 8] {
        let opts = IngestOptions {
            jobs,
            ..IngestOptions::default()
        };
        let (m, _) = ingest_dump(Cursor::new(gz.clone()), &opts).unwrap();
        assert!(tsv(&m) == reference, "jobs = {jobs}");
    }
}

#[test]
fn map_file_round_trips_and_names_its_dump_date() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("wikidata-20220613-all.json");
    std::fs::write(&dump, dump_bytes(2_000)).unwrap();
    let (map, _) = ingest_path(&dump, &IngestOptions::default()).unwrap();
    assert_eq!(map.meta().dump_date, "20220613");
    let out = dir.path().join("map.tsv");
    map.save(&out).unwrap();
    let back = DescriptionMap::load(&out).unwrap();
    assert_eq!(tsv(&back), tsv(&map));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with(&format!("#edkit-descriptions\tlanguage=en\tdump=20220613\tentries={}\n", map.len())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Counting while streaming equals counting over the collected dataset.
    #[test]
    fn streaming_stats_equal_materialized_stats(seed in any::<u64>(), k in 0usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sets: Vec<_> = (0..k).map(|i| random_reps(&mut rng, 1 + i % 7)).collect();
        let instances: Vec<_> = sets.iter().enumerate().map(|(i, r)| instance_for(&mut rng, i, r)).collect();
        let map = DescriptionMap::from_pairs(
            sets.iter().flatten().filter_map(|r| r.description().map(|d| (r.title().clone(), d.clone()))),
        );
        let streamed = compute_stats(instances.iter().cloned(), &map);

        let all: Vec<&EntityTitle> = instances.iter().flat_map(|i| i.candidates()).collect();
        let unique: std::collections::BTreeSet<&EntityTitle> = all.iter().copied().collect();
        let failed = |t: &&&EntityTitle| map.get(t.as_str()).is_none();
        let expected = DatasetStats {
            instances: instances.len() as u64,
            candidates_total: all.len() as u64,
            candidates_unique: unique.len() as u64,
            failures_total: all.iter().filter(failed).count() as u64,
            failures_unique: unique.iter().filter(failed).count() as u64,
        };
        prop_assert_eq!(streamed, expected);
    }
}
