//! Wavefront OBJ subset: `v` and `f` statements only.

use nalgebra::Point3;

use super::{Location, MeshError, TriangleMesh};

/// Parses OBJ text. Polygons are fan-triangulated from their first vertex,
/// negative indices count back from the most recent vertex.
pub fn parse_obj(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut mesh = TriangleMesh::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let loc = Location::Line(line);
        let body = raw.split('#').next().unwrap_or("");
        let mut toks = body.split_whitespace();
        match toks.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for slot in &mut xyz {
                    let tok = toks.next().ok_or_else(|| {
                        MeshError::syntax("obj", loc, "vertex needs 3 coordinates")
                    })?;
                    let v: f64 = tok.parse().map_err(|_| {
                        MeshError::syntax("obj", loc, format!("malformed number '{tok}'"))
                    })?;
                    *slot = v;
                    if !v.is_finite() {
                        return Err(MeshError::NonFinite { location: loc });
                    }
                }
                mesh.vertices.push(Point3::from(xyz));
            }
            Some("f") => {
                let count = mesh.vertices.len() as i64;
                let refs = toks
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        let i: i64 = head.parse().map_err(|_| {
                            MeshError::syntax("obj", loc, format!("malformed index '{tok}'"))
                        })?;
                        let resolved = match i {
                            0 => None,
                            i if i > 0 => Some(i - 1),
                            i => Some(count + i),
                        };
                        match resolved {
                            Some(r) if (0..count).contains(&r) => Ok(r as u32),
                            _ => Err(MeshError::syntax(
                                "obj",
                                loc,
                                format!("index {i} out of range ({count} vertices)"),
                            )),
                        }
                    })
                    .collect::<Result<Vec<u32>, _>>()?;
                if refs.len() < 3 {
                    return Err(MeshError::syntax(
                        "obj",
                        loc,
                        "face needs at least 3 vertices",
                    ));
                }
                for k in 1..refs.len() - 1 {
                    mesh.triangles.push([refs[0], refs[k], refs[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}
