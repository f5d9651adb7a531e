//! Run the HTTP service in-process and talk to it with the remote client.

use meshdex::analysis::primitives::{icosphere, prism};
use meshdex::api::{serve_on, ApiConfig, AppState};
use meshdex::catalog::{Catalog, SourceMeta};
use meshdex::cli::RemoteClient;
use meshdex::mesh::write_stl_ascii;
use meshdex::search::{Filters, SearchMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let addr = listener.local_addr()?;
    let state = AppState::new(Catalog::default(), ApiConfig::default());
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = rt.spawn(serve_on(listener, state, async {
        let _ = stopped.await;
    }));

    let client = RemoteClient::new(&format!("http://{addr}")).map_err(|e| format!("{e:?}"))?;
    let ball = write_stl_ascii(&icosphere(2, 1.0), "ball").into_bytes();
    let rod = write_stl_ascii(&prism(8, 0.3, 2.0), "rod").into_bytes();
    for (bytes, name) in [(ball.clone(), "ball.stl"), (rod, "rod.stl")] {
        let out = client
            .ingest(bytes, name, &SourceMeta::new("upload"))
            .map_err(|e| format!("{e:?}"))?;
        println!("POST /v1/models {name} -> {}", out.record.id);
    }
    let found = client
        .search(SearchMode::Similar, ball, "q.stl", 5, &Filters::default())
        .map_err(|e| format!("{e:?}"))?;
    for r in &found.results {
        println!("similar: {:.6} {}", r.score, r.model_id);
    }
    let top = &found.results[0].model_id;
    client.delete(top.as_str()).map_err(|e| format!("{e:?}"))?;
    println!("GET after DELETE: {:?}", client.show(top.as_str()).err());

    let _ = stop.send(());
    rt.block_on(server)??;
    Ok(())
}
