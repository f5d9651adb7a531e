use std::path::{Path, PathBuf};
use std::sync::Once;

use meshdex::analysis::primitives::{box_mesh, icosphere, prism};
use meshdex::api::{serve_on, ApiConfig, AppState};
use meshdex::catalog::Catalog;
use meshdex::cli::{run_with, NOW_ENV};
use meshdex::mesh::write_stl_ascii;
use meshdex::InvertedIndex;
use nalgebra::{Point3, Vector3};
use serde_json::Value;

fn pin_clock() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| std::env::set_var(NOW_ENV, "1700000000"));
}

struct Run {
    code: i32,
    out: String,
    err: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.out).unwrap_or_else(|e| panic!("not json ({e}): {}", self.out))
    }
}

fn meshdex(store: &Path, args: &[&str]) -> Run {
    pin_clock();
    let mut argv = vec![
        "meshdex".to_string(),
        "--store".into(),
        store.display().to_string(),
    ];
    argv.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with(argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn fixtures(dir: &Path) -> Vec<PathBuf> {
    let meshes = [
        ("ball.stl", icosphere(2, 1.0)),
        ("rod.stl", prism(8, 0.3, 2.0)),
        (
            "brick.stl",
            box_mesh(Point3::origin(), Vector3::new(3.0, 1.0, 0.5)),
        ),
    ];
    meshes
        .iter()
        .map(|(name, mesh)| {
            let path = dir.join(name);
            std::fs::write(&path, write_stl_ascii(mesh, name)).unwrap();
            path
        })
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_version_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let r = meshdex(dir.path(), &["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("ingest"));
    assert_eq!(meshdex(dir.path(), &["--version"]).code, 0);
    let r = meshdex(dir.path(), &["frobnicate"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("Usage"));
    assert_eq!(meshdex(dir.path(), &["search", "-k", "3"]).code, 1);
}

#[test]
fn ingest_search_show_delete_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let files = fixtures(dir.path());

    let r = meshdex(
        &store,
        &[
            "ingest",
            s(&files[0]),
            s(&files[1]),
            s(&files[2]),
            "--source",
            "example.org",
        ],
    );
    assert_eq!(r.code, 0, "{}", r.err);
    let ids: Vec<&str> = r
        .out
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(ids.len(), 3);
    assert!(ids.iter().all(|id| id.starts_with("m-")));

    let r = meshdex(
        &store,
        &[
            "--format",
            "json",
            "search",
            "--query",
            s(&files[0]),
            "-k",
            "2",
        ],
    );
    assert_eq!(r.code, 0, "{}", r.err);
    let json = r.json();
    assert_eq!(json["results"][0]["model_id"], ids[0]);
    assert_eq!(json["results"][0]["score"], 1.0);

    let r = meshdex(
        &store,
        &[
            "--format",
            "json",
            "search",
            "--query",
            s(&files[2]),
            "--mode",
            "pip",
        ],
    );
    assert_eq!(r.json()["results"][0]["model_id"], ids[2]);

    let r = meshdex(&store, &["--format", "json", "text", "-q", "rod"]);
    assert_eq!(r.json()["results"][0]["model_id"], ids[1]);

    let r = meshdex(&store, &["show", ids[1]]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("rod.stl"));

    assert_eq!(meshdex(&store, &["delete", ids[1]]).code, 0);
    let r = meshdex(&store, &["show", ids[1]]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("gone"));
    let r = meshdex(&store, &["--format", "json", "text", "-q", "rod"]);
    assert_eq!(r.json()["results"], Value::Array(vec![]));

    assert_eq!(meshdex(&store, &["show", "m-000000000000"]).code, 1);
    assert_eq!(meshdex(&store, &["index", "audit"]).code, 0);
}

#[test]
fn failed_paths_give_exit_1_but_others_are_ingested() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let files = fixtures(dir.path());
    let junk = dir.path().join("junk.stl");
    std::fs::write(&junk, "solid junk\nnot a facet\n").unwrap();
    let r = meshdex(
        &store,
        &[
            "ingest",
            s(&files[0]),
            s(&junk),
            "--source",
            "x",
            "--format",
            "json",
        ],
    );
    assert_eq!(r.code, 1);
    let lines = r.json();
    assert_eq!(lines[0]["status"], "created");
    assert_eq!(lines[1]["status"], "error");
    assert_eq!(
        meshdex(&store, &["--format", "json", "stats"]).json()["active_models"],
        1
    );
}

#[test]
fn json_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixtures(dir.path());
    let mut outputs = Vec::new();
    for run in 0..2 {
        let store = dir.path().join(format!("store{run}"));
        let ingest = meshdex(
            &store,
            &[
                "ingest",
                s(&files[0]),
                s(&files[1]),
                s(&files[2]),
                "--source",
                "x",
            ],
        );
        let id = ingest.out.split('\t').next().unwrap().to_string();
        let search = meshdex(
            &store,
            &["--format", "json", "search", "--query", s(&files[1])],
        )
        .out;
        let show = meshdex(&store, &["--format", "json", "show", &id]);
        assert_eq!(show.code, 0);
        let stats = meshdex(&store, &["--format", "json", "stats"]).out;
        outputs.push((search, show.out, stats));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn generators_write_meshes_and_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let torus = dir.path().join("torus.stl");
    let r = meshdex(
        dir.path(),
        &[
            "gen",
            "torus",
            "--R",
            "1",
            "--r",
            "0.25",
            "--res",
            "12",
            "-o",
            s(&torus),
        ],
    );
    assert_eq!(r.code, 0, "{}", r.err);
    let (mesh, _) = meshdex::mesh::parse_stl(&std::fs::read(&torus).unwrap()).unwrap();
    assert!(mesh.triangle_count() > 100);

    let r = meshdex(dir.path(), &["gen", "support", "--pillars", "5"]);
    assert_eq!(r.code, 0);
    assert!(r.out.starts_with("solid support"));

    assert_eq!(
        meshdex(dir.path(), &["gen", "torus", "--R", "0.1", "--r", "0.25"]).code,
        1
    );

    let spec = dir.path().join("spec.toml");
    std::fs::write(&spec, "seed = 3\ncomposites = 4\ndistractors = 6\n").unwrap();
    let out = dir.path().join("ttd");
    let r = meshdex(
        dir.path(),
        &[
            "--format",
            "json",
            "gen",
            "ttd",
            "--spec",
            s(&spec),
            "--out",
            s(&out),
        ],
    );
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.json()["composites"], 4);
    assert_eq!(
        std::fs::read_dir(out.join("distractors")).unwrap().count(),
        6
    );
    let labels: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("labels.json")).unwrap()).unwrap();
    assert_eq!(labels.as_array().unwrap().len(), 4);

    std::fs::write(&spec, "no_such_field = 1\n").unwrap();
    assert_eq!(
        meshdex(
            dir.path(),
            &["gen", "ttd", "--spec", s(&spec), "--out", s(&out)]
        )
        .code,
        1
    );
}

#[test]
fn stats_histogram_and_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixtures(dir.path());
    let csv = dir.path().join("h.csv");
    let svg = dir.path().join("h.svg");
    let r = meshdex(
        dir.path(),
        &[
            "--format",
            "json",
            "stats",
            "--perimeter-histogram",
            "--fit-gamma",
            "--log",
            "--bins",
            "8",
            "--csv",
            s(&csv),
            "--svg",
            s(&svg),
            "--input",
            s(&files[0]),
            s(&files[1]),
        ],
    );
    assert_eq!(r.code, 0, "{}", r.err);
    let json = r.json();
    assert_eq!(json["samples"], 320 + 32);
    assert!(json["gamma"]["shape"].as_f64().unwrap() > 0.0);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() >= 8);

    let empty = dir.path().join("empty-store");
    assert_eq!(meshdex(&empty, &["stats", "--fit-gamma"]).code, 1);
}

#[test]
fn index_save_load_and_generic_marking() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let files = fixtures(dir.path());
    meshdex(
        &store,
        &[
            "ingest",
            s(&files[0]),
            s(&files[1]),
            s(&files[2]),
            "--source",
            "x",
        ],
    );
    let saved = dir.path().join("idx.bin");
    assert_eq!(meshdex(&store, &["index", "save", s(&saved)]).code, 0);
    let loaded = InvertedIndex::load(&saved).unwrap();
    assert_eq!(&loaded, Catalog::open(&store).unwrap().index());
    assert_eq!(
        meshdex(&store, &["index", "load", s(&saved), "--replace"]).code,
        0
    );

    let mut bytes = std::fs::read(&saved).unwrap();
    let n = bytes.len();
    bytes[n / 2] ^= 1;
    std::fs::write(&saved, bytes).unwrap();
    let r = meshdex(&store, &["index", "load", s(&saved)]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("checksum"));

    let r = meshdex(
        &store,
        &[
            "--format",
            "json",
            "index",
            "mark-generic",
            "--threshold",
            "0.5",
        ],
    );
    assert_eq!(r.code, 0, "{}", r.err);
    let generic = meshdex(&store, &["--format", "json", "stats"]).json()["generic_words"].clone();
    assert_eq!(
        generic.as_u64().unwrap() as usize,
        r.json().as_array().unwrap().len()
    );
    assert_eq!(
        meshdex(&store, &["index", "mark-generic", "--threshold", "2"]).code,
        1
    );
}

#[test]
fn recrawl_lists_due_domains() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let files = fixtures(dir.path());
    meshdex(&store, &["ingest", s(&files[0]), "--source", "a.example"]);
    let r = meshdex(
        &store,
        &["--format", "json", "recrawl", "--at", "1700000001"],
    );
    assert_eq!(r.json(), serde_json::json!([]));
    let r = meshdex(
        &store,
        &["--format", "json", "recrawl", "--at", "1800000000"],
    );
    assert_eq!(r.json(), serde_json::json!(["a.example"]));
}

#[test]
fn remote_mode_matches_local_mode() {
    let dir = tempfile::tempdir().unwrap();
    let files = fixtures(dir.path());
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let state = AppState::new(Catalog::default(), ApiConfig::default());
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = rt.spawn(serve_on(listener, state, async {
        let _ = stopped.await;
    }));

    let local = dir.path().join("local");
    let unused = dir.path().join("unused");
    let remote = |args: &[&str]| {
        let mut all = vec!["--remote", url.as_str()];
        all.extend_from_slice(args);
        meshdex(&unused, &all)
    };
    let ingest = [
        "ingest",
        s(&files[0]),
        s(&files[1]),
        s(&files[2]),
        "--source",
        "x",
        "--tags",
        "t",
    ];
    let a = meshdex(&local, &ingest);
    let b = remote(&ingest);
    assert_eq!((a.code, &a.out), (b.code, &b.out), "{}", b.err);

    for args in [
        vec!["--format", "json", "search", "--query", s(&files[0])],
        vec![
            "--format",
            "json",
            "search",
            "--query",
            s(&files[2]),
            "--mode",
            "pip",
            "--watertight",
            "true",
        ],
        vec!["--format", "json", "text", "-q", "brick rod"],
        vec!["--format", "json", "stats"],
    ] {
        let a = meshdex(&local, &args);
        let b = remote(&args);
        assert_eq!(b.code, 0, "{}", b.err);
        assert_eq!(a.out, b.out, "{args:?}");
    }
    let id = a.out.lines().next().unwrap().split('\t').next().unwrap();
    assert_eq!(remote(&["delete", id]).code, 0);
    let r = remote(&["show", id]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("gone"));
    assert!(!unused.exists());

    let _ = stop.send(());
    rt.block_on(server).unwrap().unwrap();
    let r = remote(&["stats"]);
    assert_eq!(r.code, 2);
}
