//! Save and load the inverted index; corruption is detected.

use meshdex::analysis::primitives::{box_mesh, icosphere};
use meshdex::{build_bag, InvertedIndex, ModelId, WordConfig};
use nalgebra::{Point3, Vector3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut index = InvertedIndex::new(WordConfig::default());
    index
        .insert(build_bag(&icosphere(2, 1.0), index.vocabulary())?.with_id(ModelId::new("ball")))?;
    let brick = box_mesh(Point3::origin(), Vector3::new(2.0, 1.0, 1.0));
    index.insert(build_bag(&brick, index.vocabulary())?.with_id(ModelId::new("brick")))?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("index.bin");
    index.save(&path)?;
    let loaded = InvertedIndex::load(&path)?;
    assert_eq!(loaded, index);
    println!(
        "{} bytes, {} models, {} words round-tripped",
        std::fs::metadata(&path)?.len(),
        loaded.len(),
        loaded.word_count()
    );

    let mut bytes = std::fs::read(&path)?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    match InvertedIndex::from_bytes(&bytes) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("corrupted file rejected: {e} ({})", e.code()),
    }
    Ok(())
}
