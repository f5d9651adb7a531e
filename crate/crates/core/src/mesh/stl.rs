//! STL reader and writers.
//!
//! Binary layout: 80-byte header, little-endian `u32` triangle count, then one
//! 50-byte record per triangle (normal, three vertices as `f32` triples, `u16`
//! attribute). Stored normals are read and discarded.

use nalgebra::Point3;

use super::{Location, MeshError, TriangleMesh};

const HEADER_LEN: usize = 80;
const RECORD_LEN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StlEncoding {
    Ascii,
    Binary,
}

/// Parses an STL file, auto-detecting the encoding.
///
/// Input starting with `solid` is tried as ASCII first; if that fails the
/// bytes are read as binary, and if the binary layout does not fit either the
/// ASCII error is reported.
pub fn parse_stl(bytes: &[u8]) -> Result<(TriangleMesh, StlEncoding), MeshError> {
    let looks_ascii = bytes
        .iter()
        .skip_while(|b| b.is_ascii_whitespace())
        .take(5)
        .copied()
        .collect::<Vec<_>>()
        .eq_ignore_ascii_case(b"solid");
    if looks_ascii {
        match parse_ascii(bytes) {
            Ok(mesh) => return Ok((mesh, StlEncoding::Ascii)),
            Err(ascii_err) => {
                return match parse_binary(bytes) {
                    Ok(mesh) => Ok((mesh, StlEncoding::Binary)),
                    Err(MeshError::NonFinite { location }) => {
                        Err(MeshError::NonFinite { location })
                    }
                    Err(_) => Err(ascii_err),
                };
            }
        }
    }
    parse_binary(bytes).map(|m| (m, StlEncoding::Binary))
}

fn parse_binary(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(MeshError::Truncated {
            record: 0,
            declared: 0,
            len: bytes.len(),
        });
    }
    let declared =
        u32::from_le_bytes(bytes[HEADER_LEN..HEADER_LEN + 4].try_into().unwrap()) as usize;
    let expected = declared
        .checked_mul(RECORD_LEN)
        .and_then(|n| n.checked_add(HEADER_LEN + 4));
    match expected {
        Some(e) if e == bytes.len() => {}
        Some(e) if e < bytes.len() => {
            return Err(MeshError::TrailingBytes {
                declared,
                extra: bytes.len() - e,
            })
        }
        _ => {
            return Err(MeshError::Truncated {
                record: (bytes.len() - HEADER_LEN - 4) / RECORD_LEN,
                declared,
                len: bytes.len(),
            })
        }
    }

    let mut mesh = TriangleMesh::default();
    mesh.vertices.reserve(declared * 3);
    mesh.triangles.reserve(declared);
    for r in 0..declared {
        let rec = HEADER_LEN + 4 + r * RECORD_LEN;
        let base = mesh.vertices.len() as u32;
        for v in 0..3 {
            let off = rec + 12 + v * 12;
            let mut xyz = [0.0f64; 3];
            for (c, slot) in xyz.iter_mut().enumerate() {
                let at = off + c * 4;
                let val = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
                if !val.is_finite() {
                    return Err(MeshError::NonFinite {
                        location: Location::Byte(at),
                    });
                }
                *slot = val as f64;
            }
            mesh.vertices.push(Point3::from(xyz));
        }
        mesh.triangles.push([base, base + 1, base + 2]);
    }
    Ok(mesh)
}

#[derive(PartialEq)]
enum AsciiState {
    Solid,
    Facet,
    Loop,
    EndLoop,
    EndFacet,
    Done,
}

fn parse_ascii(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| MeshError::syntax("stl", Location::Byte(e.valid_up_to()), "invalid utf-8"))?;
    let mut mesh = TriangleMesh::default();
    let mut state = AsciiState::Done;
    let mut pending: Vec<Point3<f64>> = Vec::with_capacity(3);
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let mut toks = raw.split_whitespace();
        let Some(kw) = toks.next() else { continue };
        let kw = kw.to_ascii_lowercase();
        let err = |msg: &str| MeshError::syntax("stl", Location::Line(line), msg.to_string());
        match (kw.as_str(), &state) {
            ("solid", AsciiState::Done) => state = AsciiState::Solid,
            ("facet", AsciiState::Solid) => {
                if !toks
                    .next()
                    .is_some_and(|t| t.eq_ignore_ascii_case("normal"))
                {
                    return Err(err("expected 'facet normal'"));
                }
                // stored normals are validated as numbers then dropped
                read_triple(&mut toks, line, false)?;
                state = AsciiState::Facet;
            }
            ("outer", AsciiState::Facet) => {
                if !toks.next().is_some_and(|t| t.eq_ignore_ascii_case("loop")) {
                    return Err(err("expected 'outer loop'"));
                }
                pending.clear();
                state = AsciiState::Loop;
            }
            ("vertex", AsciiState::Loop) => {
                if pending.len() == 3 {
                    return Err(err("more than 3 vertices in loop"));
                }
                pending.push(read_triple(&mut toks, line, true)?);
            }
            ("endloop", AsciiState::Loop) => {
                if pending.len() != 3 {
                    return Err(err("loop must have exactly 3 vertices"));
                }
                state = AsciiState::EndLoop;
            }
            ("endfacet", AsciiState::EndLoop) => {
                let base = mesh.vertices.len() as u32;
                mesh.vertices.append(&mut pending);
                mesh.triangles.push([base, base + 1, base + 2]);
                state = AsciiState::EndFacet;
            }
            ("facet", AsciiState::EndFacet) => {
                if !toks
                    .next()
                    .is_some_and(|t| t.eq_ignore_ascii_case("normal"))
                {
                    return Err(err("expected 'facet normal'"));
                }
                read_triple(&mut toks, line, false)?;
                state = AsciiState::Facet;
            }
            ("endsolid", AsciiState::Solid | AsciiState::EndFacet) => state = AsciiState::Done,
            (other, _) => return Err(err(&format!("unexpected token '{other}'"))),
        }
    }
    if state != AsciiState::Done {
        return Err(MeshError::syntax(
            "stl",
            Location::Line(last_line),
            "unexpected end of file",
        ));
    }
    Ok(mesh)
}

fn read_triple<'a>(
    toks: &mut impl Iterator<Item = &'a str>,
    line: usize,
    require_finite: bool,
) -> Result<Point3<f64>, MeshError> {
    let mut xyz = [0.0; 3];
    for slot in &mut xyz {
        let tok = toks
            .next()
            .ok_or_else(|| MeshError::syntax("stl", Location::Line(line), "expected 3 numbers"))?;
        let v: f64 = tok.parse().map_err(|_| {
            MeshError::syntax(
                "stl",
                Location::Line(line),
                format!("malformed number '{tok}'"),
            )
        })?;
        if require_finite && !v.is_finite() {
            return Err(MeshError::NonFinite {
                location: Location::Line(line),
            });
        }
        *slot = v;
    }
    Ok(Point3::from(xyz))
}

fn unit_normal(mesh: &TriangleMesh, t: usize) -> [f64; 3] {
    let n = mesh.face_cross(t);
    let len = n.norm();
    if len > 0.0 {
        [n.x / len, n.y / len, n.z / len]
    } else {
        [0.0; 3]
    }
}

/// Writes the binary layout. Coordinates are narrowed to `f32`, so meshes that
/// came from a binary STL round-trip exactly.
pub fn write_stl_binary(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 + RECORD_LEN * mesh.triangles.len());
    let mut header = [0u8; HEADER_LEN];
    let tag = b"meshdex binary stl";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
    for t in 0..mesh.triangles.len() {
        for c in unit_normal(mesh, t) {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        for p in mesh.corners(t) {
            for c in p.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

/// Writes ASCII STL with shortest round-trip float formatting.
pub fn write_stl_ascii(mesh: &TriangleMesh, name: &str) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    writeln!(s, "solid {name}").unwrap();
    for t in 0..mesh.triangles.len() {
        let [nx, ny, nz] = unit_normal(mesh, t);
        writeln!(s, "  facet normal {nx:?} {ny:?} {nz:?}").unwrap();
        s.push_str("    outer loop\n");
        for p in mesh.corners(t) {
            writeln!(s, "      vertex {:?} {:?} {:?}", p.x, p.y, p.z).unwrap();
        }
        s.push_str("    endloop\n  endfacet\n");
    }
    writeln!(s, "endsolid {name}").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_record(tri: [[f32; 3]; 3]) -> Vec<u8> {
        let mut rec = vec![0u8; 12];
        for v in tri {
            for c in v {
                rec.extend_from_slice(&c.to_le_bytes());
            }
        }
        rec.extend_from_slice(&[0, 0]);
        rec
    }

    fn binary_file(count: u32, records: &[Vec<u8>]) -> Vec<u8> {
        let mut bytes = vec![0u8; 80];
        bytes.extend_from_slice(&count.to_le_bytes());
        for r in records {
            bytes.extend_from_slice(r);
        }
        bytes
    }

    #[test]
    fn minimal_binary() {
        let rec = binary_record([[0., 0., 0.], [1., 0., 0.], [0., 1., 0.]]);
        let (mesh, enc) = parse_stl(&binary_file(1, &[rec])).unwrap();
        assert_eq!(enc, StlEncoding::Binary);
        assert_eq!(mesh.vertices.len(), 3);
        assert_eq!(mesh.triangles, vec![[0, 1, 2]]);
        assert_eq!(mesh.vertices[1], Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn empty_ascii_solid() {
        let (mesh, enc) = parse_stl(b"solid a\nendsolid a").unwrap();
        assert_eq!(enc, StlEncoding::Ascii);
        assert!(mesh.is_empty());
    }

    #[test]
    fn truncated_binary_reports_record() {
        let rec = binary_record([[0., 0., 0.], [1., 0., 0.], [0., 1., 0.]]);
        let recs = vec![rec; 5];
        let err = parse_stl(&binary_file(10, &recs)).unwrap_err();
        assert!(matches!(err, MeshError::Truncated { record: 5, .. }));
        assert!(err.to_string().contains("truncated at record 5"));
    }

    #[test]
    fn nan_coordinate_rejected_with_offset() {
        let rec = binary_record([[0., f32::NAN, 0.], [1., 0., 0.], [0., 1., 0.]]);
        let err = parse_stl(&binary_file(1, &[rec])).unwrap_err();
        assert_eq!(
            err,
            MeshError::NonFinite {
                location: Location::Byte(84 + 12 + 4)
            }
        );
    }

    #[test]
    fn ascii_facets_and_errors() {
        let good = "solid t\n facet normal 0 0 1\n  outer loop\n   vertex 0 0 0\n   vertex 1 0 0\n   vertex 0 1 0\n  endloop\n endfacet\nendsolid t\n";
        let (mesh, _) = parse_stl(good.as_bytes()).unwrap();
        assert_eq!(mesh.triangles.len(), 1);

        let bad = good.replace("vertex 1 0 0", "vertex 1 zero 0");
        match parse_stl(bad.as_bytes()).unwrap_err() {
            MeshError::Syntax { location, .. } => assert_eq!(location, Location::Line(5)),
            e => panic!("unexpected {e:?}"),
        }

        let inf = good.replace("vertex 1 0 0", "vertex inf 0 0");
        assert!(matches!(
            parse_stl(inf.as_bytes()).unwrap_err(),
            MeshError::NonFinite {
                location: Location::Line(5)
            }
        ));
    }

    #[test]
    fn binary_header_starting_with_solid_is_still_binary() {
        let rec = binary_record([[0., 0., 0.], [1., 0., 0.], [0., 1., 0.]]);
        let mut bytes = binary_file(1, &[rec]);
        bytes[..5].copy_from_slice(b"solid");
        let (mesh, enc) = parse_stl(&bytes).unwrap();
        assert_eq!(enc, StlEncoding::Binary);
        assert_eq!(mesh.triangles.len(), 1);
    }

    #[test]
    fn ascii_writer_round_trips_f64() {
        let mesh = TriangleMesh::from_triangle_soup([[
            Point3::new(0.1, 0.2, 0.3),
            Point3::new(1.0 / 3.0, 0.0, 0.0),
            Point3::new(0.0, 1e-7, 2.5),
        ]]);
        let (back, _) = parse_stl(write_stl_ascii(&mesh, "x").as_bytes()).unwrap();
        assert_eq!(back, mesh);
    }
}
