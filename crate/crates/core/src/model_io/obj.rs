use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{TexturedMesh, Triangle, Vec3};
use crate::error::{Error, Result};
use crate::raster::Raster;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Resolves a 1-based (or negative, relative) OBJ index against `len`
/// records seen so far.
fn resolve_index(raw: &str, len: usize, line: usize, what: &str) -> Result<u32> {
    let i: i64 = raw
        .parse()
        .map_err(|_| parse_err(line, format!("invalid {what} index `{raw}`")))?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        len as i64 + i
    } else {
        return Err(parse_err(line, format!("{what} index 0 is invalid")));
    };
    if idx < 0 || idx >= len as i64 {
        return Err(Error::IndexOutOfRange(format!(
            "line {line}: {what} index {i} with only {len} declared"
        )));
    }
    Ok(idx as u32)
}

fn floats<const N: usize>(tokens: &[&str], line: usize, min: usize) -> Result<[f32; N]> {
    if tokens.len() < min {
        return Err(parse_err(line, format!("expected at least {min} values")));
    }
    let mut out = [0.0f32; N];
    for (k, slot) in out.iter_mut().enumerate().take(tokens.len().min(N)) {
        *slot = tokens[k]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid number `{}`", tokens[k])))?;
    }
    Ok(out)
}

/// Parses the `map_Kd` entries of an MTL file. Options before the file name
/// (`-s 1 1 1`, ...) are skipped by taking the last token.
fn parse_mtl(text: &str) -> HashMap<String, String> {
    let mut maps = HashMap::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        let line = line.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("newmtl") => current = tok.next().map(str::to_string),
            Some("map_Kd") => {
                if let (Some(name), Some(file)) = (&current, line.split_whitespace().last()) {
                    maps.insert(name.clone(), file.to_string());
                }
            }
            _ => {}
        }
    }
    maps
}

/// Parses OBJ text; `mtllib` and texture paths resolve against `base_dir`.
///
/// Polygons are fan-triangulated from their first corner. All textured faces
/// must reference one texture image.
pub fn parse_obj(text: &str, base_dir: &Path) -> Result<TexturedMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut uvs: Vec<[f32; 2]> = Vec::new();
    let mut faces: Vec<Triangle> = Vec::new();
    let mut materials: HashMap<String, (String, PathBuf)> = HashMap::new();
    let mut active: Option<String> = None;
    let mut texture_path: Option<PathBuf> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let Some((&keyword, rest)) = tokens.split_first() else {
            continue;
        };
        match keyword {
            "v" => vertices.push(floats::<3>(rest, line_no, 3)?),
            "vt" => uvs.push(floats::<2>(rest, line_no, 1)?),
            "mtllib" => {
                for name in rest {
                    let mtl_path = base_dir.join(name);
                    let mtl = fs::read_to_string(&mtl_path).map_err(|e| {
                        Error::Texture(format!("cannot read material library {}: {e}", mtl_path.display()))
                    })?;
                    let dir = mtl_path.parent().unwrap_or(base_dir).to_path_buf();
                    for (mat, file) in parse_mtl(&mtl) {
                        materials.insert(mat, (file, dir.clone()));
                    }
                }
            }
            "usemtl" => active = rest.first().map(|s| s.to_string()),
            "f" => {
                if rest.len() < 3 {
                    return Err(parse_err(line_no, "face needs at least 3 corners"));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for corner in rest {
                    let mut parts = corner.split('/');
                    let v = resolve_index(parts.next().unwrap_or(""), vertices.len(), line_no, "vertex")?;
                    let vt = match parts.next() {
                        Some(s) if !s.is_empty() => resolve_index(s, uvs.len(), line_no, "uv")?,
                        _ => {
                            return Err(parse_err(
                                line_no,
                                format!("missing vt on a textured face (corner `{corner}`)"),
                            ))
                        }
                    };
                    corners.push((v, vt));
                }
                for k in 1..corners.len() - 1 {
                    faces.push(Triangle {
                        vertices: [corners[0].0, corners[k].0, corners[k + 1].0],
                        uvs: [corners[0].1, corners[k].1, corners[k + 1].1],
                    });
                }
                let mat = active.as_deref().unwrap_or("");
                let (file, dir) = materials.get(mat).ok_or_else(|| {
                    Error::Texture(format!("line {line_no}: face uses material `{mat}` with no map_Kd texture"))
                })?;
                let path = dir.join(file);
                match &texture_path {
                    None => texture_path = Some(path),
                    Some(p) if *p == path => {}
                    Some(p) => {
                        return Err(Error::UnsupportedFormat(format!(
                            "mesh uses more than one texture ({} and {})",
                            p.display(),
                            path.display()
                        )))
                    }
                }
            }
            _ => {}
        }
    }

    let texture_path = texture_path.ok_or_else(|| Error::Texture("mesh has no textured faces".into()))?;
    let texture = Raster::load(&texture_path)
        .map_err(|e| Error::Texture(format!("cannot load texture {}: {e}", texture_path.display())))?;
    TexturedMesh::new(vertices, uvs, faces, texture)
}

pub fn load_textured_mesh(path: &Path) -> Result<TexturedMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;

    fn fixture(dir: &Path, obj: &str) -> PathBuf {
        let tex = Raster::from_fn(2, 2, |x, y| if (x + y) % 2 == 0 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] });
        tex.save_png(&dir.join("tex.png")).unwrap();
        fs::write(dir.join("m.mtl"), "newmtl mat\nKd 1 1 1\nmap_Kd tex.png\n").unwrap();
        let path = dir.join("m.obj");
        fs::write(&path, obj).unwrap();
        path
    }

    #[test]
    fn minimal_triangle() {
        let dir = tempfile::tempdir().unwrap();
        let p = fixture(
            dir.path(),
            "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nusemtl mat\nf 1/1 2/2 3/3\n",
        );
        let m = load_textured_mesh(&p).unwrap();
        assert_eq!(m.vertices().len(), 3);
        assert_eq!(m.faces().len(), 1);
        assert_eq!(m.texture().dims(), (2, 2));
        assert_eq!(m.texture().get(0, 0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let dir = tempfile::tempdir().unwrap();
        let p = fixture(
            dir.path(),
            "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nvn 0 0 1\n\
             usemtl mat\nf 1/1/1 2/2/1 3/3/1 4/4/1\n",
        );
        let m = load_textured_mesh(&p).unwrap();
        let tris: Vec<[u32; 3]> = m.faces().iter().map(|f| f.vertices).collect();
        assert_eq!(tris, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn out_of_range_face_index() {
        let dir = tempfile::tempdir().unwrap();
        let p = fixture(
            dir.path(),
            "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nusemtl mat\nf 1/1 2/1 9/1\n",
        );
        assert!(matches!(load_textured_mesh(&p).unwrap_err(), Error::IndexOutOfRange(_)));
    }

    #[test]
    fn missing_vt_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = fixture(dir.path(), "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nusemtl mat\nf 1 2 3\n");
        let err = load_textured_mesh(&p).unwrap_err();
        assert!(err.to_string().contains("missing vt"), "{err}");
    }

    #[test]
    fn unresolvable_texture() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("m.mtl"), "newmtl mat\nmap_Kd nowhere.png\n").unwrap();
        let p = dir.path().join("m.obj");
        fs::write(&p, "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nusemtl mat\nf 1/1 2/1 3/1\n").unwrap();
        assert!(matches!(load_textured_mesh(&p).unwrap_err(), Error::Texture(_)));
    }

    #[test]
    fn negative_indices_are_relative() {
        let dir = tempfile::tempdir().unwrap();
        let p = fixture(
            dir.path(),
            "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 1\nusemtl mat\nf -3/-2 -2/-1 -1/-1\n",
        );
        let m = load_textured_mesh(&p).unwrap();
        assert_eq!(m.faces()[0].vertices, [0, 1, 2]);
        assert_eq!(m.faces()[0].uvs, [0, 1, 1]);
    }

    fn polygon_area(points: &[[f64; 2]]) -> f64 {
        let n = points.len();
        0.5 * (0..n)
            .map(|i| points[i][0] * points[(i + 1) % n][1] - points[(i + 1) % n][0] * points[i][1])
            .sum::<f64>()
            .abs()
    }

    #[test]
    fn fan_triangulation_preserves_area_and_vertices() {
        // Convex regular polygons of increasing corner count in the z=0 plane.
        for k in 3..12usize {
            let pts: Vec<[f64; 2]> = (0..k)
                .map(|i| {
                    let a = i as f64 / k as f64 * std::f64::consts::TAU;
                    [2.0 * a.cos() + 0.3, 1.5 * a.sin() - 0.7]
                })
                .collect();
            let mut obj = String::from("mtllib m.mtl\n");
            for p in &pts {
                obj.push_str(&format!("v {} {} 0\n", p[0] as f32, p[1] as f32));
            }
            obj.push_str("vt 0 0\nusemtl mat\nf");
            for i in 1..=k {
                obj.push_str(&format!(" {i}/1"));
            }
            obj.push('\n');
            let dir = tempfile::tempdir().unwrap();
            let m = load_textured_mesh(&fixture(dir.path(), &obj)).unwrap();
            assert_eq!(m.faces().len(), k - 2);
            let verts: Vec<[f64; 2]> = m.vertices().iter().map(|v| [v[0] as f64, v[1] as f64]).collect();
            let tri_area: f64 = m
                .faces()
                .iter()
                .map(|f| polygon_area(&f.vertices.map(|i| verts[i as usize])))
                .sum();
            let poly = polygon_area(&verts);
            assert!(((tri_area - poly) / poly).abs() < 1e-9, "k={k}: {tri_area} vs {poly}");
            let mut used: Vec<u32> = m.faces().iter().flat_map(|f| f.vertices).collect();
            used.sort_unstable();
            used.dedup();
            assert_eq!(used, (0..k as u32).collect::<Vec<_>>());
        }
    }
}
