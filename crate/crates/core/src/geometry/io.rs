//! ASCII xyz / PLY point clouds and OBJ / PLY meshes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::{PointCloud, TriangleMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    Ply,
}

impl CloudFormat {
    /// Guesses from the extension; anything other than `.ply` is read as xyz text.
    pub fn from_path(path: &Path) -> Self {
        match extension(path).as_deref() {
            Some("ply") => CloudFormat::Ply,
            _ => CloudFormat::Xyz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match extension(path).as_deref() {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::Parameter(format!(
                "cannot infer mesh format of {}; use .obj or .ply",
                path.display()
            ))),
        }
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

/// Formats with 9 significant digits, plain notation where that stays short.
pub(crate) fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

fn open(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| Error::Format {
        line,
        message: format!("cannot parse number {token:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Format {
            line,
            message: format!("non-finite value {token:?}"),
        });
    }
    Ok(v)
}

/// Reads a cloud. Normal columns, when present, are returned separately.
pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    load_cloud_with_normals(path, format).map(|(cloud, _)| cloud)
}

/// Reads points and, if the file carries them, per-point normals
/// (xyz columns 4-6, or PLY `nx ny nz` properties).
pub fn load_cloud_with_normals(
    path: &Path,
    format: CloudFormat,
) -> Result<(PointCloud, Option<Vec<Vector3<f64>>>)> {
    let lines = open(path)?;
    let (points, normals) = match format {
        CloudFormat::Xyz => parse_xyz(&lines)?,
        CloudFormat::Ply => {
            let ply = parse_ply(&lines)?;
            (ply.points, ply.normals)
        }
    };
    if points.is_empty() {
        return Err(Error::EmptyInput(format!("{} contains no points", path.display())));
    }
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    Ok((PointCloud::with_id(points, id)?, normals))
}

type Parsed = (Vec<Point3<f64>>, Option<Vec<Vector3<f64>>>);

fn parse_xyz(lines: &[String]) -> Result<Parsed> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut all_have_normals = true;
    for (i, raw) in lines.iter().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("//") {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if cols.len() < 3 {
            return Err(Error::Format {
                line: i + 1,
                message: format!("expected at least 3 columns, found {}", cols.len()),
            });
        }
        let v = [
            parse_f64(cols[0], i + 1)?,
            parse_f64(cols[1], i + 1)?,
            parse_f64(cols[2], i + 1)?,
        ];
        points.push(Point3::new(v[0], v[1], v[2]));
        if cols.len() >= 6 && all_have_normals {
            let n: Option<Vec<f64>> = cols[3..6].iter().map(|t| t.parse().ok()).collect();
            match n {
                Some(n) if n.iter().all(|x| x.is_finite()) => {
                    normals.push(Vector3::new(n[0], n[1], n[2]))
                }
                _ => all_have_normals = false,
            }
        } else {
            all_have_normals = false;
        }
    }
    let normals = (all_have_normals && !normals.is_empty()).then_some(normals);
    Ok((points, normals))
}

struct Ply {
    points: Vec<Point3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
    faces: Vec<Vec<usize>>,
}

fn parse_ply(lines: &[String]) -> Result<Ply> {
    let fmt_err = |line: usize, message: &str| Error::Format {
        line,
        message: message.to_string(),
    };
    if lines.first().map(|l| l.trim()) != Some("ply") {
        return Err(fmt_err(1, "missing ply magic"));
    }
    // (name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    let mut body_start = None;
    for (i, raw) in lines.iter().enumerate().skip(1) {
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", kind, ..] => {
                if *kind != "ascii" {
                    return Err(fmt_err(i + 1, "only ASCII PLY is supported"));
                }
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| fmt_err(i + 1, "bad element count"))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            ["property", "list", _, _, name] | ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| fmt_err(i + 1, "property before element"))?;
                el.2.push(name.to_string());
            }
            ["end_header"] => {
                body_start = Some(i + 1);
                break;
            }
            _ => {}
        }
    }
    let mut line = body_start.ok_or_else(|| fmt_err(lines.len(), "missing end_header"))?;
    let mut ply = Ply {
        points: Vec::new(),
        normals: None,
        faces: Vec::new(),
    };
    for (name, count, props) in &elements {
        let find = |p: &str| props.iter().position(|q| q == p);
        match name.as_str() {
            "vertex" => {
                let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
                    return Err(fmt_err(line, "vertex element lacks x, y, z"));
                };
                let nidx = match (find("nx"), find("ny"), find("nz")) {
                    (Some(a), Some(b), Some(c)) => Some([a, b, c]),
                    _ => None,
                };
                let mut normals = Vec::new();
                for _ in 0..*count {
                    let raw = lines
                        .get(line)
                        .ok_or_else(|| fmt_err(line + 1, "unexpected end of vertex data"))?;
                    let tok: Vec<&str> = raw.split_whitespace().collect();
                    if tok.len() < props.len() {
                        return Err(fmt_err(line + 1, "too few vertex properties"));
                    }
                    ply.points.push(Point3::new(
                        parse_f64(tok[ix], line + 1)?,
                        parse_f64(tok[iy], line + 1)?,
                        parse_f64(tok[iz], line + 1)?,
                    ));
                    if let Some([a, b, c]) = nidx {
                        normals.push(Vector3::new(
                            parse_f64(tok[a], line + 1)?,
                            parse_f64(tok[b], line + 1)?,
                            parse_f64(tok[c], line + 1)?,
                        ));
                    }
                    line += 1;
                }
                if nidx.is_some() {
                    ply.normals = Some(normals);
                }
            }
            "face" => {
                for _ in 0..*count {
                    let raw = lines
                        .get(line)
                        .ok_or_else(|| fmt_err(line + 1, "unexpected end of face data"))?;
                    let tok: Vec<usize> = raw
                        .split_whitespace()
                        .map(|t| t.parse().map_err(|_| fmt_err(line + 1, "bad face index")))
                        .collect::<Result<_>>()?;
                    let n = *tok.first().ok_or_else(|| fmt_err(line + 1, "empty face"))?;
                    if tok.len() < n + 1 {
                        return Err(fmt_err(line + 1, "face shorter than its count"));
                    }
                    ply.faces.push(tok[1..=n].to_vec());
                    line += 1;
                }
            }
            _ => line += count,
        }
    }
    Ok(ply)
}

/// Writes the cloud as xyz text or ASCII PLY, with normals if given.
pub fn save_cloud(
    cloud: &PointCloud,
    normals: Option<&[Vector3<f64>]>,
    path: &Path,
    format: CloudFormat,
) -> Result<()> {
    if let Some(n) = normals {
        if n.len() != cloud.len() {
            return Err(Error::Parameter("normal count differs from point count".into()));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        if format == CloudFormat::Ply {
            writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len())?;
            writeln!(w, "property double x\nproperty double y\nproperty double z")?;
            if normals.is_some() {
                writeln!(w, "property double nx\nproperty double ny\nproperty double nz")?;
            }
            writeln!(w, "end_header")?;
        }
        for (i, p) in cloud.points().iter().enumerate() {
            write!(w, "{} {} {}", fmt_sig(p.x), fmt_sig(p.y), fmt_sig(p.z))?;
            if let Some(n) = normals {
                write!(w, " {} {} {}", fmt_sig(n[i].x), fmt_sig(n[i].y), fmt_sig(n[i].z))?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub fn save_mesh(mesh: &TriangleMesh, path: &Path, format: MeshFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        match format {
            MeshFormat::Obj => {
                for p in mesh.vertices() {
                    writeln!(w, "v {} {} {}", fmt_sig(p.x), fmt_sig(p.y), fmt_sig(p.z))?;
                }
                for t in mesh.triangles() {
                    writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
                }
            }
            MeshFormat::Ply => {
                writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", mesh.vertices().len())?;
                writeln!(w, "property double x\nproperty double y\nproperty double z")?;
                writeln!(w, "element face {}", mesh.triangles().len())?;
                writeln!(w, "property list uchar int vertex_indices\nend_header")?;
                for p in mesh.vertices() {
                    writeln!(w, "{} {} {}", fmt_sig(p.x), fmt_sig(p.y), fmt_sig(p.z))?;
                }
                for t in mesh.triangles() {
                    writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
                }
            }
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

/// Reads an OBJ or ASCII PLY mesh. Polygons are fan-triangulated.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    let lines = open(path)?;
    let (vertices, faces) = match format {
        MeshFormat::Ply => {
            let ply = parse_ply(&lines)?;
            (ply.points, ply.faces)
        }
        MeshFormat::Obj => {
            let mut vertices = Vec::new();
            let mut faces = Vec::new();
            for (i, raw) in lines.iter().enumerate() {
                let mut tok = raw.split_whitespace();
                match tok.next() {
                    Some("v") => {
                        let c: Vec<f64> = tok
                            .take(3)
                            .map(|t| parse_f64(t, i + 1))
                            .collect::<Result<_>>()?;
                        if c.len() < 3 {
                            return Err(Error::Format {
                                line: i + 1,
                                message: "vertex needs three coordinates".into(),
                            });
                        }
                        vertices.push(Point3::new(c[0], c[1], c[2]));
                    }
                    Some("f") => {
                        let face = tok
                            .map(|t| {
                                let idx = t.split('/').next().unwrap_or("");
                                idx.parse::<usize>()
                                    .ok()
                                    .filter(|&k| k >= 1)
                                    .map(|k| k - 1)
                                    .ok_or_else(|| Error::Format {
                                        line: i + 1,
                                        message: format!("bad face index {t:?}"),
                                    })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        faces.push(face);
                    }
                    _ => {}
                }
            }
            (vertices, faces)
        }
    };
    let mut triangles = Vec::new();
    for f in faces {
        for k in 1..f.len().saturating_sub(1) {
            triangles.push([f[0], f[k], f[k + 1]]);
        }
    }
    TriangleMesh::new(vertices, triangles)
}
