//! Picks a candidate by scoring spans of the concatenated candidate passage.

use edkit::extractive::{assemble, extract};
use edkit::reference::OverlapSpanScorer;
use edkit::tokenizer::WhitespaceCounter;
use edkit::types::{EdInstance, MentionSpan};
use edkit::{make_representation, normalize_title, DescriptionMap, EntityDescription};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = DescriptionMap::from_pairs([
        (normalize_title("Ronaldo")?, EntityDescription::en("Brazilian association football player")?),
        (
            normalize_title("Cristiano Ronaldo")?,
            EntityDescription::en("Portuguese association football player")?,
        ),
    ]);
    let titles = vec![normalize_title("Ronaldo")?, normalize_title("Cristiano Ronaldo")?];
    let reps: Vec<_> = titles.iter().map(|t| make_representation(t, &map)).collect();
    let inst = EdInstance::new(
        "ex",
        "In the final minutes Ronaldo scored two goals for Portuguese side Sporting",
        MentionSpan { start: 21, end: 28 },
        titles,
        None,
    )?;

    let full = assemble(&inst, &reps, None, None)?;
    println!("query:   {}", full.query);
    println!("passage: {}", full.context);

    let out = extract(&inst, &reps, &OverlapSpanScorer, None, None)?;
    for (title, score) in &out.scores {
        println!("{score:>5}  {title}");
    }
    println!("winner: {}", out.winner);

    // a tight budget drops query words from the far ends first
    let tight = assemble(&inst, &reps, Some(18), Some(&WhitespaceCounter))?;
    println!("budget 18: {} (truncated: {})", tight.query, tight.truncated_query);
    Ok(())
}
