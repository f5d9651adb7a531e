use std::collections::BTreeSet;

use meshdex::analysis::primitives::{box_mesh, icosphere, prism};
use meshdex::analysis::random_ellipsoid_hull;
use meshdex::mesh::{canonical_hash, parse_obj, parse_stl, write_stl_ascii, TriangleMesh};
use meshdex::search::{brute_force_topk, query_geometric, score_containment, score_similarity};
use meshdex::{build_bag, InvertedIndex, ModelId, SearchMode, SearchQuery, WordBag, WordConfig};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn hull(seed: u64, n: usize) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_ellipsoid_hull(&mut rng, n, Vector3::new(1.0, 0.7, 0.5))
}

/// Same surface, different file: shuffled vertices and facets, rotated corners.
fn permuted(mesh: &TriangleMesh, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u32> = (0..mesh.vertices.len() as u32).collect();
    order.shuffle(&mut rng);
    let mut new_of = vec![0u32; order.len()];
    for (new, &old) in order.iter().enumerate() {
        new_of[old as usize] = new as u32;
    }
    let vertices = order.iter().map(|&o| mesh.vertices[o as usize]).collect();
    let mut triangles: Vec<[u32; 3]> = mesh
        .triangles
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let t = [
                new_of[t[0] as usize],
                new_of[t[1] as usize],
                new_of[t[2] as usize],
            ];
            match i % 3 {
                0 => t,
                1 => [t[1], t[2], t[0]],
                _ => [t[2], t[0], t[1]],
            }
        })
        .collect();
    triangles.shuffle(&mut rng);
    TriangleMesh::new(vertices, triangles)
}

fn corpus(n: usize, seed: u64, index: &mut InvertedIndex) -> Vec<WordBag> {
    (0..n)
        .map(|i| {
            let mesh = match i % 4 {
                0 => icosphere(1 + (i % 3) as u32, 0.5 + i as f64 * 0.01),
                1 => prism(
                    3 + (i % 9) as u32,
                    0.3 + (i % 5) as f64 * 0.1,
                    1.0 + (i % 7) as f64 * 0.2,
                ),
                2 => box_mesh(
                    Point3::origin(),
                    Vector3::new(1.0, 0.2 + (i % 11) as f64 * 0.1, 0.7),
                ),
                _ => hull(seed + i as u64, 20 + i % 40),
            };
            let bag = build_bag(&mesh, index.vocabulary())
                .unwrap()
                .with_id(ModelId::new(format!("m{i:04}")));
            index.insert(bag.clone()).unwrap();
            bag
        })
        .collect()
}

fn assert_same_ranking(a: &[meshdex::SearchResult], b: &[meshdex::SearchResult]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.model_id, y.model_id);
        assert!(
            (x.score - y.score).abs() <= 1e-12,
            "{} vs {}",
            x.score,
            y.score
        );
    }
}

#[test]
fn index_search_matches_exhaustive_scoring() {
    let mut index = InvertedIndex::new(WordConfig::default());
    let bags = corpus(80, 1, &mut index);
    for (i, q) in bags.iter().enumerate().step_by(7) {
        for mode in [SearchMode::Similar, SearchMode::Pip] {
            let query = SearchQuery {
                mode,
                ..SearchQuery::similar(q.clone(), 10)
            };
            let fast = query_geometric(&index, &(), &query).unwrap();
            let slow = brute_force_topk(&bags, index.generic_words(), &query).unwrap();
            assert_same_ranking(&fast, &slow);
            assert_eq!(fast[0].score, 1.0, "query {i} {mode}");
        }
    }
}

#[test]
fn generic_words_are_ignored_consistently() {
    let mut index = InvertedIndex::new(WordConfig::default());
    let bags = corpus(60, 2, &mut index);
    let generic = index.mark_generic(0.2).unwrap();
    assert!(!generic.is_empty());
    let query = SearchQuery::similar(bags[3].clone(), 10);
    let fast = query_geometric(&index, &(), &query).unwrap();
    let slow = brute_force_topk(&bags, &generic, &query).unwrap();
    assert_same_ranking(&fast, &slow);
    for r in &fast {
        assert!(r.matched.iter().all(|m| !generic.contains(&m.word)));
    }
}

#[test]
fn file_formats_agree_on_words() {
    let mesh = prism(5, 0.5, 1.5);
    let (from_stl, _) = parse_stl(write_stl_ascii(&mesh, "p").as_bytes()).unwrap();
    let mut obj = String::new();
    for v in &mesh.vertices {
        obj.push_str(&format!("v {:?} {:?} {:?}\n", v.x, v.y, v.z));
    }
    for t in &mesh.triangles {
        obj.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    let from_obj = parse_obj(&obj).unwrap();
    assert_eq!(canonical_hash(&from_stl), canonical_hash(&from_obj));
    let vocab = meshdex::Vocabulary::default();
    assert_eq!(
        build_bag(&from_stl, &vocab).unwrap().local,
        build_bag(&from_obj, &vocab).unwrap().local
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hash_ignores_ordering(seed in 0u64..10_000, n in 8usize..60, shuffle in any::<u64>()) {
        let mesh = hull(seed, n);
        prop_assert_eq!(canonical_hash(&mesh), canonical_hash(&permuted(&mesh, shuffle)));
    }

    #[test]
    fn bags_ignore_ordering_and_rigid_motion(seed in 0u64..10_000, n in 8usize..60, shuffle in any::<u64>(),
                                             angle in -3.0f64..3.0, dx in -5.0f64..5.0) {
        let vocab = meshdex::Vocabulary::default();
        let mesh = hull(seed, n);
        let a = build_bag(&mesh, &vocab).unwrap();
        let b = build_bag(&permuted(&mesh, shuffle), &vocab).unwrap();
        prop_assert_eq!(&a, &b);
        let moved = mesh.transformed(&nalgebra::Isometry3::new(Vector3::new(dx, 1.0, -dx), Vector3::new(0.0, angle, 0.3)));
        let c = build_bag(&moved, &vocab).unwrap();
        // Bins may flip for features sitting on an edge, so compare by score.
        prop_assert!(score_similarity(&a, &c, &|_| 1.0) > 0.9);
    }

    #[test]
    fn scores_are_bounded_and_symmetric(s1 in 0u64..1000, s2 in 0u64..1000) {
        let vocab = meshdex::Vocabulary::default();
        let a = build_bag(&hull(s1, 30), &vocab).unwrap();
        let b = build_bag(&hull(s2, 45), &vocab).unwrap();
        let w = |_| 1.0;
        let ab = score_similarity(&a, &b, &w);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, score_similarity(&b, &a, &w));
        prop_assert_eq!(score_similarity(&a, &a, &w), 1.0);
        let mut union = b.clone();
        union.add_local(&a);
        prop_assert_eq!(score_containment(&a, &union, &w).unwrap(), 1.0);
    }

    #[test]
    fn index_updates_match_a_rebuild(ops in proptest::collection::vec((0usize..12, any::<bool>()), 1..30)) {
        let vocab = meshdex::Vocabulary::default();
        let bags: Vec<WordBag> = (0..12)
            .map(|i| build_bag(&hull(i as u64, 10 + i * 3), &vocab).unwrap().with_id(ModelId::new(format!("h{i}"))))
            .collect();
        let mut index = InvertedIndex::new(WordConfig::default());
        let mut live = BTreeSet::new();
        for (i, insert) in ops {
            if insert && !live.contains(&i) {
                index.insert(bags[i].clone()).unwrap();
                live.insert(i);
            } else if !insert && live.contains(&i) {
                index.remove(&bags[i].model_id).unwrap();
                live.remove(&i);
            }
            index.audit().unwrap();
        }
        let mut rebuilt = InvertedIndex::new(WordConfig::default());
        for &i in &live {
            rebuilt.insert(bags[i].clone()).unwrap();
        }
        prop_assert_eq!(&index, &rebuilt);
        let restored = InvertedIndex::from_bytes(&index.to_bytes()).unwrap();
        prop_assert_eq!(&restored, &index);
    }
}
