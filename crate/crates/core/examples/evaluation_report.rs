//! Micro-F1, OOD averages, frequency classes and a McNemar comparison.

use edkit::datasets::build_train_index;
use edkit::evaluation::{
    aggregate, frequency_class_report, mcnemar_counts, micro_f1, LfcPolicy, McNemarMethod, PredictionRecord,
};
use edkit::types::{EdInstance, MentionSpan};
use edkit::normalize_title;

fn inst(id: &str, mention: &str, gold: &str) -> EdInstance {
    let g = normalize_title(gold).unwrap();
    EdInstance::new(id, format!("{mention} again"), MentionSpan { start: 0, end: mention.len() }, vec![g.clone()], Some(g))
        .unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = vec![inst("a", "Paris", "Paris"), inst("b", "Paris", "Paris"), inst("c", "Paris", "Paris Hilton")];
    let test = vec![
        inst("t1", "Paris", "Paris"),
        inst("t2", "Paris", "Paris Hilton"),
        inst("t3", "Lutetia", "Paris"),
        inst("t4", "Paris", "Paris, Texas"),
    ];
    let guesses = ["Paris", "Paris", "Paris", "Paris"];
    let records: Vec<_> = test
        .iter()
        .zip(guesses)
        .map(|(i, g)| PredictionRecord::new(i.id(), Some(normalize_title(g).unwrap()), i.gold().unwrap().clone()))
        .collect();

    let m = micro_f1(&records)?;
    println!("P {:.3}  R {:.3}  F1 {:.3}", m.precision, m.recall, m.f1);

    let index = build_train_index(train)?;
    let report = frequency_class_report(&test, &records, &index, LfcPolicy::default())?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let scores = [("AIDA", 90.1), ("MSNBC", 85.0), ("WNED-WIKI", 82.3)];
    let (avg, ood) = aggregate(&scores, &["MSNBC", "WNED-WIKI"])?;
    println!("Avg {avg:.2}  Avg OOD {:.2}", ood.unwrap());

    let r = mcnemar_counts(10, 2, McNemarMethod::Chi2Cc, 0.01);
    println!("McNemar b=10 c=2: chi2 {:.4}, p {:.4}, significant {}", r.statistic, r.p_value, r.significant);
    Ok(())
}
