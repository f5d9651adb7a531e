//! Content hashes ignore vertex order, facet order and corner rotation.

use meshdex::analysis::primitives::icosphere;
use meshdex::mesh::{canonical_hash, TriangleMesh};

fn main() {
    let mesh = icosphere(1, 1.0);
    let original = canonical_hash(&mesh);

    // Reverse the vertex list and remap, reverse the facet list, and rotate
    // each facet's corners: the surface is unchanged.
    let n = mesh.vertices.len() as u32;
    let vertices = mesh.vertices.iter().rev().copied().collect();
    let triangles = mesh
        .triangles
        .iter()
        .rev()
        .map(|t| [n - 1 - t[1], n - 1 - t[2], n - 1 - t[0]])
        .collect();
    let shuffled = TriangleMesh::new(vertices, triangles);
    println!("original  {}", original.to_hex());
    println!("permuted  {}", canonical_hash(&shuffled).to_hex());
    assert_eq!(original, canonical_hash(&shuffled));

    // Flipping orientation or moving the mesh is a different file.
    println!("flipped   {}", canonical_hash(&mesh.flipped()).to_hex());
    println!("scaled    {}", canonical_hash(&mesh.scaled(2.0)).to_hex());
}
