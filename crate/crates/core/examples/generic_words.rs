//! Words shared by a large part of the corpus carry no signal; marking them
//! generic stops them from dominating rankings.

use meshdex::analysis::gen_support_lattice;
use meshdex::analysis::primitives::{icosphere, prism};
use meshdex::search::query_similar;
use meshdex::{build_bag, InvertedIndex, ModelId, SearchQuery, WordConfig};
use nalgebra::Vector3;

fn show(index: &InvertedIndex, query: &SearchQuery) -> Result<(), Box<dyn std::error::Error>> {
    for r in query_similar(index, &(), query)? {
        println!(
            "  {:.4}  {}  ({} matched words)",
            r.score,
            r.model_id,
            r.matched.len()
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut index = InvertedIndex::new(WordConfig::default());
    for i in 0..6 {
        let mesh = gen_support_lattice([4.0, 4.0], 4 + i, i as u64);
        index.insert(
            build_bag(&mesh, index.vocabulary())?.with_id(ModelId::new(format!("lattice-{i}"))),
        )?;
    }
    for (name, mesh) in [("ball", icosphere(1, 1.0)), ("rod", prism(8, 0.3, 2.0))] {
        index.insert(build_bag(&mesh, index.vocabulary())?.with_id(ModelId::new(name)))?;
    }

    // A ball printed on a support lattice.
    let printed = gen_support_lattice([4.0, 4.0], 16, 99)
        .disjoint_union(&icosphere(1, 1.0).translated(Vector3::new(0.0, 0.0, 3.0)));
    let query = SearchQuery::similar(build_bag(&printed, index.vocabulary())?, 4);
    println!("before marking:");
    show(&index, &query)?;

    let marked = index.mark_generic(0.25)?;
    println!(
        "{} of {} words marked generic; after marking:",
        marked.len(),
        index.word_count()
    );
    show(&index, &query)?;
    Ok(())
}
