//! Renders candidates as "title: description" and marks a mention.

use edkit::types::{mark_mention, EdInstance, EntityDescription, MentionSpan};
use edkit::{normalize_title, render_candidates, DescriptionMap, RepresentationMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = DescriptionMap::from_pairs([
        (normalize_title("Ronaldo")?, EntityDescription::en("Brazilian association football player")?),
        (
            normalize_title("Cristiano Ronaldo")?,
            EntityDescription::en("Portuguese association football player")?,
        ),
    ]);
    let inst = EdInstance::new(
        "ex1",
        "Ronaldo scored two goals for Portugal",
        MentionSpan { start: 0, end: 7 },
        vec![
            normalize_title("Ronaldo")?,
            normalize_title("Cristiano Ronaldo")?,
            normalize_title("Ronaldo (film)")?,
        ],
        None,
    )?;

    println!("query: {}", mark_mention(&inst)?.as_str());
    for mode in [RepresentationMode::TitleOnly, RepresentationMode::WithDescription] {
        println!("{mode:?}:");
        for r in render_candidates(&inst, &map, mode)? {
            println!("  {}", r.surface());
        }
    }
    Ok(())
}
