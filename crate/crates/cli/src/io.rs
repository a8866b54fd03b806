//! Mesh files (OBJ, OFF), label-vector files and the label CSV.
//!
//! Coordinates are written with Rust's shortest round-trip formatting, so a
//! write followed by a read reproduces every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use labelnorm::energy::{LabelError, LabelSet};
use labelnorm::mesh::{build_mesh, FaceField, MeshError, SurfaceMesh, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face at line {line} has {count} vertices; only triangles are supported")]
    NonTriangleFace { line: usize, count: usize },
    #[error("unsupported mesh format {0:?} (expected .obj or .off)")]
    UnknownFormat(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Labels(#[from] LabelError),
}

fn parse_error(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, IoError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "off" => Ok(MeshFormat::Off),
            _ => Err(IoError::UnknownFormat(path.display().to_string())),
        }
    }
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|error| IoError::Io {
        path: path.display().to_string(),
        error,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|error| IoError::Io {
        path: path.display().to_string(),
        error,
    })
}

fn parse_f64(token: Option<&str>, line: usize, what: &str) -> Result<f64, IoError> {
    let token = token.ok_or_else(|| parse_error(line, format!("missing {what}")))?;
    let x: f64 = token
        .parse()
        .map_err(|_| parse_error(line, format!("invalid {what} {token:?}")))?;
    if !x.is_finite() {
        return Err(parse_error(line, format!("non-finite {what} {token:?}")));
    }
    Ok(x)
}

fn parse_vec3<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<Vec3, IoError> {
    let x = parse_f64(tokens.next(), line, "x coordinate")?;
    let y = parse_f64(tokens.next(), line, "y coordinate")?;
    let z = parse_f64(tokens.next(), line, "z coordinate")?;
    Ok(Vec3::new(x, y, z))
}

/// Parses OBJ text. Only `v` and `f` records are used; `f` entries may carry
/// texture/normal indices (`v/vt/vn`) and negative (relative) indices.
pub fn parse_obj(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>), IoError> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => positions.push(parse_vec3(&mut tokens, line)?),
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(IoError::NonTriangleFace {
                        line,
                        count: refs.len(),
                    });
                }
                let mut tri = [0usize; 3];
                for (k, r) in refs.iter().enumerate() {
                    let head = r.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| parse_error(line, format!("invalid vertex index {r:?}")))?;
                    let resolved = match idx {
                        0 => None,
                        i if i > 0 => Some(i as usize - 1),
                        i => (positions.len() as i64 + i).try_into().ok(),
                    };
                    tri[k] = resolved.filter(|&v| v < positions.len()).ok_or_else(|| {
                        parse_error(line, format!("vertex index {idx} out of range"))
                    })?;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    Ok((positions, faces))
}

/// Parses OFF text (`OFF`, counts, vertices, `3 a b c` faces with 0-based
/// indices; trailing color values are ignored).
pub fn parse_off(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>), IoError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line, header) = lines.next().ok_or_else(|| parse_error(1, "empty file"))?;
    let mut counts_line = None;
    if let Some(rest) = header.strip_prefix("OFF") {
        if !rest.trim().is_empty() {
            counts_line = Some((line, rest.trim()));
        }
    } else {
        return Err(parse_error(line, "missing OFF header"));
    }
    let (line, counts) = match counts_line {
        Some(c) => c,
        None => lines
            .next()
            .ok_or_else(|| parse_error(line, "missing element counts"))?,
    };
    let mut tokens = counts.split_whitespace();
    let mut count = |what: &str| -> Result<usize, IoError> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_error(line, format!("invalid {what} count")))
    };
    let nv = count("vertex")?;
    let nf = count("face")?;

    let mut positions = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines
            .next()
            .ok_or_else(|| parse_error(line, "unexpected end of file in vertex list"))?;
        positions.push(parse_vec3(&mut l.split_whitespace(), line)?);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines
            .next()
            .ok_or_else(|| parse_error(line, "unexpected end of file in face list"))?;
        let mut tokens = l.split_whitespace();
        let k: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_error(line, "invalid face vertex count"))?;
        if k != 3 {
            return Err(IoError::NonTriangleFace { line, count: k });
        }
        let mut tri = [0usize; 3];
        for v in &mut tri {
            *v = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .filter(|&i: &usize| i < nv)
                .ok_or_else(|| parse_error(line, "invalid or out-of-range vertex index"))?;
        }
        faces.push(tri);
    }
    Ok((positions, faces))
}

pub fn read_mesh(path: &Path) -> Result<SurfaceMesh, IoError> {
    let format = MeshFormat::from_path(path)?;
    let text = read_text(path)?;
    let (positions, faces) = match format {
        MeshFormat::Obj => parse_obj(&text)?,
        MeshFormat::Off => parse_off(&text)?,
    };
    Ok(build_mesh(positions, faces)?)
}

pub fn format_obj(positions: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(40 * positions.len() + 20 * faces.len());
    for p in positions {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn format_off(positions: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(40 * positions.len() + 20 * faces.len());
    let _ = writeln!(s, "OFF\n{} {} 0", positions.len(), faces.len());
    for p in positions {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for f in faces {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn write_mesh(path: &Path, mesh: &SurfaceMesh) -> Result<(), IoError> {
    write_mesh_as(path, path, mesh, mesh.positions())
}

/// Writes the connectivity of `mesh` with coordinates `positions`, in the
/// format implied by the extension of `format_of`. `path` may carry an
/// extra suffix such as `.partial`.
pub fn write_mesh_as(
    path: &Path,
    format_of: &Path,
    mesh: &SurfaceMesh,
    positions: &[Vec3],
) -> Result<(), IoError> {
    let text = match MeshFormat::from_path(format_of)? {
        MeshFormat::Obj => format_obj(positions, mesh.faces()),
        MeshFormat::Off => format_off(positions, mesh.faces()),
    };
    write_text(path, &text)
}

/// One label per line as three whitespace- or comma-separated numbers;
/// `#` starts a comment. Vectors are normalized.
pub fn read_label_vectors(path: &Path) -> Result<LabelSet, IoError> {
    let text = read_text(path)?;
    let mut labels = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").replace(',', " ");
        let mut tokens = content.split_whitespace().peekable();
        if tokens.peek().is_none() {
            continue;
        }
        let v = parse_vec3(&mut tokens, i + 1)?;
        if tokens.next().is_some() {
            return Err(parse_error(i + 1, "expected exactly three numbers"));
        }
        labels.push(v);
    }
    Ok(LabelSet::normalized(labels)?)
}

/// CSV with header `face_index,label_index,confidence`: the argmax of each
/// assignment row (ties to the lower index) and its value.
pub fn format_labels(assignment: &FaceField) -> String {
    let mut s = String::from("face_index,label_index,confidence\n");
    for f in 0..assignment.len() {
        let row = assignment.row(f);
        let mut best = 0;
        for (l, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = l;
            }
        }
        let _ = writeln!(s, "{f},{best},{}", row[best]);
    }
    s
}

pub fn write_labels(path: &Path, assignment: &FaceField) -> Result<(), IoError> {
    write_text(path, &format_labels(assignment))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_relative_and_slashed_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1/1 2//2 3\n";
        let (p, f) = parse_obj(text).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_bad_number_reports_line() {
        let err = parse_obj("v 0 0 0\nv 1 x 0\n").unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn off_counts_on_header_line() {
        let text = "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2 255 0 0\n";
        let (p, f) = parse_off(text).unwrap();
        assert_eq!((p.len(), f), (3, vec![[0, 1, 2]]));
    }

    #[test]
    fn uniform_rows_tie_to_label_zero() {
        let w = FaceField::filled(2, 4, 0.25);
        assert_eq!(
            format_labels(&w),
            "face_index,label_index,confidence\n0,0,0.25\n1,0,0.25\n"
        );
    }
}
