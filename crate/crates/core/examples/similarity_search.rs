//! Index a handful of shapes and rank them against a transformed query.

use meshdex::analysis::primitives::{box_mesh, icosphere, prism};
use meshdex::analysis::{gen_support_lattice, marching_cubes, sphere_field, GridSpec};
use meshdex::search::{brute_force_topk, query_similar};
use meshdex::{build_bag, InvertedIndex, ModelId, SearchQuery, WordConfig};
use nalgebra::{Isometry3, Point3, Vector3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut index = InvertedIndex::new(WordConfig::default());
    let corpus = [
        ("ball", icosphere(2, 1.0)),
        (
            "blob",
            marching_cubes(
                sphere_field(Point3::origin(), 1.0),
                &GridSpec::cube(1.3, 20),
            )?,
        ),
        ("pencil", prism(6, 0.2, 3.0)),
        (
            "brick",
            box_mesh(Point3::origin(), Vector3::new(2.0, 1.0, 0.5)),
        ),
        ("stand", gen_support_lattice([3.0, 3.0], 9, 1)),
    ];
    for (name, mesh) in &corpus {
        index.insert(build_bag(mesh, index.vocabulary())?.with_id(ModelId::new(name)))?;
    }

    // Word bags are invariant to rigid motion; perimeters are absolute, so
    // scale matters.
    let moved = icosphere(2, 1.0).transformed(&Isometry3::new(
        Vector3::new(5.0, -1.0, 2.0),
        Vector3::new(0.3, 1.1, -0.4),
    ));
    let query = SearchQuery::similar(build_bag(&moved, index.vocabulary())?, 5);
    let results = query_similar(&index, &(), &query)?;
    for r in &results {
        println!("{:.6}  {}", r.score, r.model_id);
    }

    // The exhaustive reference ranking agrees.
    let bags: Vec<_> = index.bags().cloned().collect();
    let reference = brute_force_topk(&bags, index.generic_words(), &query)?;
    assert_eq!(
        results.iter().map(|r| &r.model_id).collect::<Vec<_>>(),
        reference.iter().map(|r| &r.model_id).collect::<Vec<_>>()
    );
    Ok(())
}
