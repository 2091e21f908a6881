//! Constrained beam search with the bigram reference scorer.

use edkit::generative::{decode, BeamConfig};
use edkit::reference::NgramScorer;
use edkit::tokenizer::WordTokenizer;
use edkit::trie::build_trie;
use edkit::types::{EdInstance, MentionSpan};
use edkit::{make_representation, normalize_title, DescriptionMap, EntityDescription};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = DescriptionMap::from_pairs([
        (normalize_title("Paris")?, EntityDescription::en("capital of France")?),
        (normalize_title("Paris Hilton")?, EntityDescription::en("American media personality")?),
        (normalize_title("Paris, Texas")?, EntityDescription::en("city in Texas")?),
    ]);
    let titles = ["Paris", "Paris Hilton", "Paris, Texas", "Paris (mythology)"]
        .iter()
        .map(|t| normalize_title(t))
        .collect::<Result<Vec<_>, _>>()?;
    let reps: Vec<_> = titles.iter().map(|t| make_representation(t, &map)).collect();
    let inst = EdInstance::new("ex", "She flew to Paris on Monday", MentionSpan { start: 12, end: 17 }, titles, None)?;

    let tok = WordTokenizer::from_texts(reps.iter().map(|r| r.surface()));
    let trie = build_trie(&reps, &tok)?;
    println!("trie: {} nodes over {} sequences", trie.node_count(), reps.len());

    let scorer = NgramScorer::new(&reps, &tok, 2)?;
    for beam in [1, 2, reps.len()] {
        let d = decode(&inst, &reps, &scorer, &tok, &BeamConfig::with_beam(beam))?;
        println!("beam {beam}: {}", d.winner);
        for r in &d.ranked {
            println!("  {:>9.4}  {}", r.score, reps[r.index].surface());
        }
    }
    Ok(())
}
