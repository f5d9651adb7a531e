//! Turn a mesh into a bag of geometric words and inspect it.

use meshdex::analysis::primitives::{icosphere, prism};
use meshdex::mesh::{parse_stl, write_stl_ascii};
use meshdex::words::{extract, Vocabulary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let vocab = Vocabulary::default();

    // Meshes usually arrive as files; round-trip one through ASCII STL.
    let stl = write_stl_ascii(&icosphere(2, 1.0), "ball");
    let (ball, encoding) = parse_stl(stl.as_bytes())?;
    println!("parsed {} facets ({encoding:?})", ball.triangle_count());

    for (name, mesh) in [("icosphere", ball), ("hex prism", prism(6, 1.0, 2.0))] {
        let ex = extract(&mesh, &vocab)?;
        println!(
            "{name}: {} facets, {} vertices after weld, watertight={}, consistent normals={}",
            ex.stats.triangle_count,
            ex.stats.vertex_count,
            ex.stats.watertight,
            ex.stats.consistent_normals
        );
        println!(
            "  {} local word occurrences over {} distinct words, {} global words, {} degenerate facets",
            ex.bag.local.values().sum::<u32>(),
            ex.bag.local.len(),
            ex.bag.global.len(),
            ex.degenerate.len()
        );
        let mut top: Vec<_> = ex.bag.local.iter().collect();
        top.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        for (word, count) in top.iter().take(3) {
            println!("  word {:>20}  x{count}", word.0);
        }
    }
    Ok(())
}
