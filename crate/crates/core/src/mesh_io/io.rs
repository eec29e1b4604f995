//! ASCII OFF, OBJ and PLY readers plus an OFF writer.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::Point3;

use super::{MeshFormat, MeshProvenance, TriangleMesh};
use crate::error::{Error, Result};

/// Vertex positions and polygons as read from disk, before triangulation.
struct RawMesh {
    vertices: Vec<Point3<f64>>,
    polygons: Vec<Vec<usize>>,
}

pub fn load_mesh(path: impl AsRef<Path>, format: Option<MeshFormat>) -> Result<TriangleMesh> {
    load_mesh_with_provenance(path, format, None).map(|(m, _)| m)
}

pub fn load_mesh_with_provenance(
    path: impl AsRef<Path>,
    format: Option<MeshFormat>,
    label: Option<String>,
) -> Result<(TriangleMesh, MeshProvenance)> {
    let path = path.as_ref();
    let format = match format {
        Some(f) => f,
        None => path
            .extension()
            .and_then(|e| e.to_str())
            .and_then(MeshFormat::from_extension)
            .ok_or_else(|| {
                Error::InvalidParam(format!("cannot infer mesh format from {}", path.display()))
            })?,
    };
    let text = fs::read(path)?;
    let text = String::from_utf8(text)
        .map_err(|_| Error::parse(0, "file is not UTF-8 text (binary meshes are unsupported)"))?;
    let mesh = parse_mesh(&text, format)?;
    let provenance = MeshProvenance {
        source_path: path.display().to_string(),
        format,
        label,
    };
    Ok((mesh, provenance))
}

/// Parses mesh text in the given format and validates the result.
pub fn parse_mesh(text: &str, format: MeshFormat) -> Result<TriangleMesh> {
    let raw = match format {
        MeshFormat::Off => parse_off(text)?,
        MeshFormat::Obj => parse_obj(text)?,
        MeshFormat::PlyAscii => parse_ply(text)?,
        MeshFormat::Synthetic => {
            return Err(Error::InvalidParam("synthetic meshes have no file format".into()))
        }
    };
    finish(raw)
}

/// Fan-triangulates, drops unreferenced vertices and validates.
fn finish(raw: RawMesh) -> Result<TriangleMesh> {
    let m = raw.vertices.len();
    let mut triangles = Vec::with_capacity(raw.polygons.len());
    for (f, poly) in raw.polygons.iter().enumerate() {
        if let Some(&bad) = poly.iter().find(|&&i| i >= m) {
            return Err(Error::Validation(format!(
                "face {f} references vertex {bad}, but the file declares {m} vertices"
            )));
        }
        for k in 1..poly.len() - 1 {
            triangles.push([poly[0], poly[k], poly[k + 1]]);
        }
    }

    let mut used = vec![false; m];
    for t in &triangles {
        for &i in t {
            used[i] = true;
        }
    }
    let mut remap = vec![usize::MAX; m];
    let mut vertices = Vec::with_capacity(m);
    for (i, p) in raw.vertices.into_iter().enumerate() {
        if used[i] {
            remap[i] = vertices.len();
            vertices.push(p);
        }
    }
    for t in &mut triangles {
        for i in t.iter_mut() {
            *i = remap[*i];
        }
    }
    TriangleMesh::new(vertices, triangles)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(n, l)| {
        let l = match l.find('#') {
            Some(c) => &l[..c],
            None => l,
        };
        let l = l.trim();
        (!l.is_empty()).then_some((n + 1, l))
    })
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("expected a number, found {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite coordinate {tok:?}")));
    }
    Ok(v)
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("expected a non-negative integer, found {tok:?}")))
}

fn parse_point(toks: &[&str], line: usize) -> Result<Point3<f64>> {
    if toks.len() < 3 {
        return Err(Error::parse(line, "vertex needs three coordinates"));
    }
    Ok(Point3::new(
        parse_f64(toks[0], line)?,
        parse_f64(toks[1], line)?,
        parse_f64(toks[2], line)?,
    ))
}

fn check_polygon(poly: &[usize], line: usize) -> Result<()> {
    if poly.len() < 3 {
        return Err(Error::parse(line, format!("face has {} vertices, need at least 3", poly.len())));
    }
    Ok(())
}

fn parse_off(text: &str) -> Result<RawMesh> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let mut head: Vec<&str> = header.split_whitespace().collect();
    if head[0] != "OFF" {
        return Err(Error::parse(hline, format!("expected OFF header, found {:?}", head[0])));
    }
    head.remove(0);
    let (cline, counts) = if head.is_empty() {
        let (n, l) = lines.next().ok_or_else(|| Error::parse(hline, "missing element counts"))?;
        (n, l.split_whitespace().collect::<Vec<_>>())
    } else {
        (hline, head)
    };
    if counts.len() < 2 {
        return Err(Error::parse(cline, "expected vertex and face counts"));
    }
    let nv = parse_usize(counts[0], cline)?;
    let nf = parse_usize(counts[1], cline)?;

    let mut vertices = Vec::with_capacity(nv);
    let mut last = cline;
    for _ in 0..nv {
        let (n, l) = lines
            .next()
            .ok_or_else(|| Error::parse(last, format!("expected {nv} vertices, file ended")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        vertices.push(parse_point(&toks, n)?);
        last = n;
    }
    let mut polygons = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (n, l) = lines
            .next()
            .ok_or_else(|| Error::parse(last, format!("expected {nf} faces, file ended")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let k = parse_usize(toks[0], n)?;
        if toks.len() < k + 1 {
            return Err(Error::parse(n, format!("face declares {k} vertices but lists fewer")));
        }
        let poly = toks[1..=k]
            .iter()
            .map(|t| parse_usize(t, n))
            .collect::<Result<Vec<_>>>()?;
        check_polygon(&poly, n)?;
        polygons.push(poly);
        last = n;
    }
    Ok(RawMesh { vertices, polygons })
}

fn parse_obj(text: &str) -> Result<RawMesh> {
    let mut vertices = Vec::new();
    let mut polygons = Vec::new();
    for (n, l) in content_lines(text) {
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") => {
                let rest: Vec<&str> = toks.collect();
                vertices.push(parse_point(&rest, n)?);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in toks {
                    let idx = t.split('/').next().unwrap_or("");
                    let i: i64 = idx
                        .parse()
                        .map_err(|_| Error::parse(n, format!("bad face index {t:?}")))?;
                    let resolved = match i {
                        0 => return Err(Error::parse(n, "OBJ indices are 1-based; found 0")),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = i.unsigned_abs() as usize;
                            if back > vertices.len() {
                                return Err(Error::parse(n, format!("relative index {i} precedes the first vertex")));
                            }
                            vertices.len() - back
                        }
                    };
                    poly.push(resolved);
                }
                check_polygon(&poly, n)?;
                polygons.push(poly);
            }
            // Only geometry records are meaningful here.
            _ => {}
        }
    }
    Ok(RawMesh { vertices, polygons })
}

#[derive(Debug)]
enum PlyProperty {
    Scalar(String),
    List(String),
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

fn parse_ply(text: &str) -> Result<RawMesh> {
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut last = 1;
    loop {
        let (n, l) = lines.next().ok_or_else(|| Error::parse(last, "header has no end_header"))?;
        last = n;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.first().copied() {
            Some("end_header") => break,
            Some("format") => {
                if toks.get(1) != Some(&"ascii") {
                    return Err(Error::parse(n, "only ASCII PLY is supported"));
                }
            }
            Some("element") => {
                if toks.len() != 3 {
                    return Err(Error::parse(n, "malformed element line"));
                }
                elements.push(PlyElement {
                    name: toks[1].to_string(),
                    count: parse_usize(toks[2], n)?,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(n, "property before any element"))?;
                let prop = if toks.get(1) == Some(&"list") {
                    if toks.len() != 5 {
                        return Err(Error::parse(n, "malformed list property"));
                    }
                    PlyProperty::List(toks[4].to_string())
                } else {
                    if toks.len() != 3 {
                        return Err(Error::parse(n, "malformed property"));
                    }
                    PlyProperty::Scalar(toks[2].to_string())
                };
                el.properties.push(prop);
            }
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(Error::parse(n, format!("unknown header keyword {other:?}"))),
        }
    }

    let mut vertices = Vec::new();
    let mut polygons = Vec::new();
    for el in &elements {
        let coord_slots = if el.name == "vertex" {
            let find = |axis: &str| {
                el.properties
                    .iter()
                    .position(|p| matches!(p, PlyProperty::Scalar(s) if s == axis))
            };
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(Error::parse(last, "vertex element lacks x/y/z properties")),
            }
        } else {
            None
        };
        for _ in 0..el.count {
            let (n, l) = lines
                .next()
                .ok_or_else(|| Error::parse(last, format!("file ended inside element {:?}", el.name)))?;
            last = n;
            let toks: Vec<&str> = l.split_whitespace().collect();
            let mut pos = 0;
            let mut scalars = Vec::with_capacity(el.properties.len());
            let mut face = None;
            for prop in &el.properties {
                match prop {
                    PlyProperty::Scalar(_) => {
                        let t = toks.get(pos).ok_or_else(|| Error::parse(n, "too few values"))?;
                        scalars.push(*t);
                        pos += 1;
                    }
                    PlyProperty::List(name) => {
                        let t = toks.get(pos).ok_or_else(|| Error::parse(n, "missing list length"))?;
                        let len = parse_usize(t, n)?;
                        let items = toks
                            .get(pos + 1..pos + 1 + len)
                            .ok_or_else(|| Error::parse(n, "list shorter than its declared length"))?;
                        pos += 1 + len;
                        scalars.push("");
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            face = Some(
                                items
                                    .iter()
                                    .map(|t| parse_usize(t, n))
                                    .collect::<Result<Vec<_>>>()?,
                            );
                        }
                    }
                }
            }
            if let Some([x, y, z]) = coord_slots {
                vertices.push(Point3::new(
                    parse_f64(scalars[x], n)?,
                    parse_f64(scalars[y], n)?,
                    parse_f64(scalars[z], n)?,
                ));
            }
            if el.name == "face" {
                let poly = face.ok_or_else(|| Error::parse(n, "face element lacks vertex_indices"))?;
                check_polygon(&poly, n)?;
                polygons.push(poly);
            }
        }
    }
    Ok(RawMesh { vertices, polygons })
}

/// Number formatting for the OFF writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffPrecision {
    /// Twelve significant digits in scientific notation.
    #[default]
    Significant12,
    /// Shortest representation that parses back to the same `f64`.
    Exact,
}

pub fn write_off<W: Write>(mesh: &TriangleMesh, mut out: W, precision: OffPrecision) -> Result<()> {
    writeln!(out, "OFF")?;
    writeln!(out, "{} {} 0", mesh.vertex_count(), mesh.triangle_count())?;
    for p in mesh.vertices() {
        match precision {
            OffPrecision::Significant12 => writeln!(out, "{:.11e} {:.11e} {:.11e}", p.x, p.y, p.z)?,
            OffPrecision::Exact => writeln!(out, "{:?} {:?} {:?}", p.x, p.y, p.z)?,
        }
    }
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

/// Writes an OFF file atomically.
pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>, precision: OffPrecision) -> Result<()> {
    let mut buf = Vec::new();
    write_off(mesh, &mut buf, precision)?;
    crate::cache::write_atomic(path.as_ref(), &buf)
}
