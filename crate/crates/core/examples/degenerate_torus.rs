//! A torus tessellated on a grid whose planes touch the surface produces
//! sliver facets; they are flagged and excluded from the word bag.

use meshdex::analysis::{aligned_torus_grid, marching_cubes, torus_field};
use meshdex::mesh::triangle_quality;
use meshdex::words::{extract, Vocabulary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (major, minor) = (1.0, 0.25);
    let mesh = marching_cubes(
        torus_field(major, minor),
        &aligned_torus_grid(major, minor, 24),
    )?;
    let worst = (0..mesh.triangle_count())
        .map(|t| {
            let [a, b, c] = mesh.corners(t);
            let area = (b - a).cross(&(c - a)).norm() / 2.0;
            triangle_quality(area, (b - a).norm() + (c - b).norm() + (a - c).norm())
        })
        .fold(f64::INFINITY, f64::min);
    println!(
        "{} facets, worst quality {worst:.3e}",
        mesh.triangle_count()
    );

    let ex = extract(&mesh, &Vocabulary::default())?;
    println!("{} facets flagged degenerate", ex.degenerate.len());
    for (t, reason) in ex.degenerate.iter().take(5) {
        println!("  facet {t}: {reason:?}");
    }
    println!(
        "bag: {} distinct local words over {} usable facets, had_degenerates={}",
        ex.bag.local.len(),
        ex.bag.local_total,
        ex.bag.had_degenerates
    );
    Ok(())
}
