//! Ingest with deduplication, versioning, takedown and an on-disk store.

use meshdex::analysis::primitives::{icosphere, prism};
use meshdex::catalog::{Catalog, FormatHint, SourceMeta};
use meshdex::mesh::write_stl_ascii;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut catalog = Catalog::open(dir.path())?;

    let ball = write_stl_ascii(&icosphere(2, 1.0), "ball");
    let rod = write_stl_ascii(&prism(8, 0.3, 2.0), "rod");
    let a = catalog.ingest(
        ball.as_bytes(),
        Some(FormatHint::Stl),
        &SourceMeta::new("models.example")
            .with_url("https://models.example/ball")
            .with_name("Ball"),
    )?;
    println!("{:?} {}", a.status, a.record.id);

    // The same bytes from another site merge into the existing record.
    let b = catalog.ingest(
        ball.as_bytes(),
        None,
        &SourceMeta::new("mirror.example").with_name("ball copy"),
    )?;
    println!(
        "{:?} {} now has {} sources",
        b.status,
        b.record.id,
        b.record.sources.len()
    );

    let c = catalog.ingest(
        rod.as_bytes(),
        None,
        &SourceMeta::new("upload").with_tags(["rod", "bar"]),
    )?;
    let finer = write_stl_ascii(&prism(16, 0.3, 2.0), "rod");
    let chain = catalog.record_version(&c.record.id, finer.as_bytes(), None, "smoother")?;
    println!("{} has {} versions", c.record.id, chain.versions.len());

    catalog.take_down(&a.record.id, "legal")?;
    println!(
        "after takedown: {:?}",
        catalog.active(&a.record.id).err().map(|e| e.code())
    );

    let generation = catalog.persist()?;
    let reopened = Catalog::open(dir.path())?;
    assert_eq!(reopened, catalog);
    println!(
        "persisted generation {generation}; {} active models",
        reopened.stats().active_models
    );
    println!(
        "export:\n{}",
        reopened.export_jsonl().lines().next().unwrap_or_default()
    );
    Ok(())
}
