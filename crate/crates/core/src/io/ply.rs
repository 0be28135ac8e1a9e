use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use crate::geometry::{MeshModel, RigidTransform, Vec3};
use crate::{Error, Result};

/// Raw contents of an ASCII PLY mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlyMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub triangles: Vec<[u32; 3]>,
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
}

/// Parses ASCII PLY with `x y z` (and optionally `nx ny nz`) vertex
/// properties and polygon faces (fan-triangulated).
pub fn parse_ply(text: &str, path: &Path) -> Result<PlyMesh> {
    let err = |m: String| Error::parse(path, m);
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(err("missing `ply` magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut ascii = false;
    loop {
        let line = lines.next().ok_or_else(|| err("header not terminated".into()))?.trim();
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => ascii = *fmt == "ascii",
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| err(format!("bad element count `{count}`")))?,
                properties: Vec::new(),
            }),
            ["property", "list", _, _, name] | ["property", _, name] => {
                let e = elements.last_mut().ok_or_else(|| err("property before element".into()))?;
                e.properties.push(name.to_string());
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(err(format!("unrecognized header line `{line}`"))),
        }
    }
    if !ascii {
        return Err(err("only ASCII PLY is supported".into()));
    }
    let mut mesh = PlyMesh::default();
    let mut body = lines.filter(|l| !l.trim().is_empty());
    for e in &elements {
        match e.name.as_str() {
            "vertex" => {
                let idx = |n: &str| e.properties.iter().position(|p| p == n);
                let (ix, iy, iz) = match (idx("x"), idx("y"), idx("z")) {
                    (Some(a), Some(b), Some(c)) => (a, b, c),
                    _ => return Err(err("vertex element lacks x/y/z".into())),
                };
                let nidx = match (idx("nx"), idx("ny"), idx("nz")) {
                    (Some(a), Some(b), Some(c)) => Some((a, b, c)),
                    _ => None,
                };
                let mut normals = Vec::new();
                for _ in 0..e.count {
                    let line = body.next().ok_or_else(|| err("missing vertex rows".into()))?;
                    let v: Vec<f64> = line
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad number `{t}`"))))
                        .collect::<Result<_>>()?;
                    if v.len() < e.properties.len() {
                        return Err(err(format!("short vertex row `{line}`")));
                    }
                    mesh.vertices.push(Vec3::new(v[ix], v[iy], v[iz]));
                    if let Some((a, b, c)) = nidx {
                        normals.push(Vec3::new(v[a], v[b], v[c]));
                    }
                }
                if nidx.is_some() {
                    mesh.normals = Some(normals);
                }
            }
            "face" => {
                for _ in 0..e.count {
                    let line = body.next().ok_or_else(|| err("missing face rows".into()))?;
                    let v: Vec<u32> = line
                        .split_whitespace()
                        .map(|t| t.parse::<u32>().map_err(|_| err(format!("bad index `{t}`"))))
                        .collect::<Result<_>>()?;
                    let n = *v.first().ok_or_else(|| err("empty face row".into()))? as usize;
                    if n < 3 || v.len() < n + 1 {
                        return Err(err(format!("malformed face `{line}`")));
                    }
                    for k in 2..n {
                        mesh.triangles.push([v[1], v[k], v[k + 1]]);
                    }
                }
            }
            _ => {
                for _ in 0..e.count {
                    body.next();
                }
            }
        }
    }
    Ok(mesh)
}

pub fn format_ply(model: &MeshModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ply\nformat ascii 1.0\ncomment {}", model.name());
    let _ = writeln!(s, "element vertex {}", model.vertices().len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    s.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    let _ = writeln!(s, "element face {}", model.triangles().len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (v, n) in model.vertices().iter().zip(model.vertex_normals()) {
        let _ = writeln!(s, "{} {} {} {} {} {}", v.x, v.y, v.z, n.x, n.y, n.z);
    }
    for t in model.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

/// One `qw qx qy qz tx ty tz` row per group element; `#` starts a comment.
pub fn parse_symmetry(text: &str, path: &Path) -> Result<Vec<RigidTransform>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, format!("line {}: bad number", k + 1)))?;
        if v.len() != 7 {
            return Err(Error::parse(path, format!("line {}: expected 7 values", k + 1)));
        }
        let q = Quaternion::new(v[0], v[1], v[2], v[3]);
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::parse(path, format!("line {}: quaternion is not unit length", k + 1)));
        }
        out.push(RigidTransform::new(
            UnitQuaternion::from_quaternion(q),
            Vec3::new(v[4], v[5], v[6]),
        ));
    }
    Ok(out)
}

pub fn format_symmetry(group: &[RigidTransform]) -> String {
    let mut s = String::from("# qw qx qy qz tx ty tz\n");
    for g in group {
        let q = g.rotation.quaternion();
        let t = g.translation;
        let _ = writeln!(s, "{} {} {} {} {} {} {}", q.w, q.i, q.j, q.k, t.x, t.y, t.z);
    }
    s
}

pub fn read_ply_model(path: &Path, name: &str, class_id: u32, symmetry: Option<&Path>) -> Result<MeshModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mesh = parse_ply(&text, path)?;
    let group = match symmetry {
        Some(p) => parse_symmetry(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?, p)?,
        None => Vec::new(),
    };
    MeshModel::new(name, class_id, mesh.vertices, mesh.triangles, mesh.normals, group)
}

/// Writes the mesh and, when the group is non-trivial, a `.sym` sidecar.
pub fn write_ply_model(path: &Path, model: &MeshModel) -> Result<()> {
    super::write_atomic(path, format_ply(model).as_bytes())?;
    if model.symmetry_group().len() > 1 {
        super::write_atomic(&path.with_extension("sym"), format_symmetry(model.symmetry_group()).as_bytes())?;
    }
    Ok(())
}
