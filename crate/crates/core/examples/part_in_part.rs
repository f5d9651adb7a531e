//! Find composites that contain a query part, using a small labeled dataset.

use meshdex::analysis::{gen_ttd, TtdSpec};
use meshdex::search::query_pip;
use meshdex::{build_bag, InvertedIndex, ModelId, SearchQuery, WordConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = TtdSpec {
        composites: 10,
        distractors: 40,
        ..TtdSpec::default()
    };
    let data = gen_ttd(&spec)?;
    let mut index = InvertedIndex::new(WordConfig::default());
    for m in data.composites.iter().chain(&data.distractors) {
        index.insert(build_bag(&m.mesh, index.vocabulary())?.with_id(ModelId::new(&m.id)))?;
    }
    println!("indexed {} models", index.len());

    let mut first = 0;
    for label in &data.labels {
        let placement = &label.parts[0];
        let part = data
            .parts
            .iter()
            .find(|p| p.id == placement.part)
            .expect("labeled part exists");
        let query = SearchQuery::pip(build_bag(&part.mesh, index.vocabulary())?, 3);
        let results = query_pip(&index, &(), &query)?;
        let top = results.first().map(|r| (r.model_id.as_str(), r.score));
        println!(
            "{} ({:?}) -> {:?}  expected {}",
            part.id, placement.kind, top, label.composite
        );
        if top.is_some_and(|(id, _)| id == label.composite) {
            first += 1;
        }
    }
    println!("{first}/{} composites ranked first", data.labels.len());
    Ok(())
}
