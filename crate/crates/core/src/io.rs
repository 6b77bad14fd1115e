//! OFF, ASCII PLY and OBJ readers; OFF and ASCII PLY writers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::MeshError;
use crate::mesh::{Mesh, Point3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    PlyAscii,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, MeshError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        ext.parse()
    }
}

impl FromStr for MeshFormat {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(Self::Off),
            "ply" | "ply-ascii" => Ok(Self::PlyAscii),
            "obj" => Ok(Self::Obj),
            other => Err(MeshError::UnknownFormat(other.to_string())),
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Mesh, MeshError> {
    let text = fs::read_to_string(path)?;
    let (vertices, faces) = match format {
        MeshFormat::Off => parse_off(&text, path)?,
        MeshFormat::PlyAscii => parse_ply(&text, path)?,
        MeshFormat::Obj => parse_obj(&text, path)?,
    };
    Mesh::new(vertices, faces)
}

/// Loads a mesh, picking the format from the file extension.
pub fn load_mesh_auto(path: &Path) -> Result<Mesh, MeshError> {
    load_mesh(path, MeshFormat::from_path(path)?)
}

pub fn save_mesh(mesh: &Mesh, path: &Path, format: MeshFormat) -> Result<(), MeshError> {
    let text = match format {
        MeshFormat::Off => off_string(mesh),
        MeshFormat::PlyAscii => ply_string(mesh, None),
        MeshFormat::Obj => return Err(MeshError::UnknownFormat("obj (output)".into())),
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn off_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "OFF").unwrap();
    writeln!(s, "{} {} {}", mesh.vertex_count(), mesh.face_count(), mesh.edge_count()).unwrap();
    for p in mesh.vertices() {
        writeln!(s, "{} {} {}", p.x, p.y, p.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(s, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    s
}

/// ASCII PLY, optionally with `red green blue` uchar vertex colours.
pub fn ply_string(mesh: &Mesh, colors: Option<&[[u8; 3]]>) -> String {
    if let Some(c) = colors {
        assert_eq!(c.len(), mesh.vertex_count(), "one colour per vertex");
    }
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    writeln!(s, "element vertex {}", mesh.vertex_count()).unwrap();
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    writeln!(s, "element face {}", mesh.face_count()).unwrap();
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (i, p) in mesh.vertices().iter().enumerate() {
        match colors {
            Some(c) => {
                let [r, g, b] = c[i];
                writeln!(s, "{} {} {} {r} {g} {b}", p.x, p.y, p.z).unwrap();
            }
            None => writeln!(s, "{} {} {}", p.x, p.y, p.z).unwrap(),
        }
    }
    for f in mesh.faces() {
        writeln!(s, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    s
}

/// ASCII PLY point cloud (no faces).
pub fn ply_points_string(points: &[Point3], colors: Option<&[[u8; 3]]>) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    writeln!(s, "element vertex {}", points.len()).unwrap();
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for (i, p) in points.iter().enumerate() {
        match colors {
            Some(c) => {
                let [r, g, b] = c[i];
                writeln!(s, "{} {} {} {r} {g} {b}", p.x, p.y, p.z).unwrap();
            }
            None => writeln!(s, "{} {} {}", p.x, p.y, p.z).unwrap(),
        }
    }
    s
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

struct Cursor<'a> {
    path: &'a Path,
}

impl Cursor<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> MeshError {
        MeshError::Parse {
            path: PathBuf::from(self.path),
            line,
            message: message.into(),
        }
    }

    fn num<T: FromStr>(&self, line: usize, tok: Option<&str>, what: &str) -> Result<T, MeshError> {
        let tok = tok.ok_or_else(|| self.err(line, format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| self.err(line, format!("invalid {what} `{tok}`")))
    }

    fn triangle(&self, line: usize, indices: &[usize]) -> Result<[usize; 3], MeshError> {
        match indices {
            &[a, b, c] => Ok([a, b, c]),
            _ => Err(self.err(line, format!("expected a triangle, got {} indices", indices.len()))),
        }
    }
}

type Soup = (Vec<Point3>, Vec<[usize; 3]>);

fn parse_off(text: &str, path: &Path) -> Result<Soup, MeshError> {
    let cur = Cursor { path };
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| cur.err(1, "empty file"))?;
    let mut rest = header.strip_prefix("OFF").ok_or_else(|| cur.err(hl, "missing OFF header"))?;
    // The counts may share the header line.
    let counts_line;
    let cl;
    if rest.trim().is_empty() {
        let (l, c) = lines.next().ok_or_else(|| cur.err(hl, "missing counts line"))?;
        cl = l;
        counts_line = c;
    } else {
        cl = hl;
        rest = rest.trim();
        counts_line = rest;
    }
    let mut toks = counts_line.split_whitespace();
    let nv: usize = cur.num(cl, toks.next(), "vertex count")?;
    let nf: usize = cur.num(cl, toks.next(), "face count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, line) = lines.next().ok_or_else(|| cur.err(cl, "unexpected end of vertices"))?;
        let mut t = line.split_whitespace();
        vertices.push(Point3::new(
            cur.num(l, t.next(), "x")?,
            cur.num(l, t.next(), "y")?,
            cur.num(l, t.next(), "z")?,
        ));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, line) = lines.next().ok_or_else(|| cur.err(cl, "unexpected end of faces"))?;
        let mut t = line.split_whitespace();
        let n: usize = cur.num(l, t.next(), "face size")?;
        let idx = (0..n)
            .map(|_| cur.num(l, t.next(), "vertex index"))
            .collect::<Result<Vec<usize>, _>>()?;
        faces.push(cur.triangle(l, &idx)?);
    }
    Ok((vertices, faces))
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

fn parse_ply(text: &str, path: &Path) -> Result<Soup, MeshError> {
    let cur = Cursor { path };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(cur.err(1, "missing ply magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut last = 1;
    loop {
        let (l, line) = lines.next().ok_or_else(|| cur.err(last, "missing end_header"))?;
        last = l;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(cur.err(l, format!("unsupported PLY format `{fmt}`")));
                }
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: cur.num(l, Some(count), "element count")?,
                properties: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| cur.err(l, "property before element"))?
                .properties
                .push(PlyProperty::List(name.to_string())),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| cur.err(l, "property before element"))?
                .properties
                .push(PlyProperty::Scalar(name.to_string())),
            _ => return Err(cur.err(l, format!("unrecognised header line `{line}`"))),
        }
    }
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        let scalar_pos = |n: &str| {
            el.properties
                .iter()
                .position(|p| matches!(p, PlyProperty::Scalar(s) if s == n))
        };
        for _ in 0..el.count {
            let (l, line) = body
                .next()
                .ok_or_else(|| cur.err(last, format!("unexpected end of `{}` data", el.name)))?;
            last = l;
            let mut toks = line.split_whitespace();
            let mut scalars: Vec<f64> = Vec::with_capacity(el.properties.len());
            let mut list: Option<Vec<usize>> = None;
            for prop in &el.properties {
                match prop {
                    PlyProperty::Scalar(_) => scalars.push(cur.num(l, toks.next(), "value")?),
                    PlyProperty::List(name) => {
                        let n: usize = cur.num(l, toks.next(), "list length")?;
                        let vals = (0..n)
                            .map(|_| cur.num(l, toks.next(), "list entry"))
                            .collect::<Result<Vec<usize>, _>>()?;
                        if name == "vertex_indices" || name == "vertex_index" {
                            list = Some(vals);
                        }
                        scalars.push(f64::NAN);
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    let get = |n: &str| {
                        scalar_pos(n)
                            .map(|i| scalars[i])
                            .ok_or_else(|| cur.err(l, format!("vertex element lacks `{n}`")))
                    };
                    vertices.push(Point3::new(get("x")?, get("y")?, get("z")?));
                }
                "face" => {
                    let idx = list.ok_or_else(|| cur.err(l, "face element lacks vertex_indices"))?;
                    faces.push(cur.triangle(l, &idx)?);
                }
                _ => {}
            }
        }
    }
    Ok((vertices, faces))
}

fn parse_obj(text: &str, path: &Path) -> Result<Soup, MeshError> {
    let cur = Cursor { path };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (l, line) in content_lines(text) {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => vertices.push(Point3::new(
                cur.num(l, toks.next(), "x")?,
                cur.num(l, toks.next(), "y")?,
                cur.num(l, toks.next(), "z")?,
            )),
            Some("f") => {
                let idx = toks
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or(t);
                        let i: i64 = cur.num(l, Some(head), "vertex index")?;
                        let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                        usize::try_from(resolved)
                            .map_err(|_| cur.err(l, format!("vertex index {i} out of range")))
                    })
                    .collect::<Result<Vec<usize>, _>>()?;
                faces.push(cur.triangle(l, &idx)?);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}
