//! PLY reading and writing for point clouds, meshes and primitive clouds.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return Err(Error::Ply(format!("unknown scalar type `{s}`"))),
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_binary(self, r: &mut impl Read) -> Result<f64> {
        let mut b = [0u8; 8];
        let n = self.size();
        r.read_exact(&mut b[..n]).map_err(|e| Error::Ply(format!("truncated binary body: {e}")))?;
        Ok(match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b),
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar(n, _) | Property::List(n, _, _) => n,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Parsed PLY contents: per element, per row, the property values in order
/// (list properties are flattened after their count).
#[derive(Debug, Clone)]
pub struct PlyData {
    pub format: PlyFormat,
    pub comments: Vec<String>,
    elements: Vec<Element>,
    rows: Vec<Vec<Vec<f64>>>,
}

impl PlyData {
    fn element(&self, name: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.name == name)
    }

    /// Names of the scalar properties of `element`.
    pub fn property_names(&self, element: &str) -> Vec<String> {
        self.element(element)
            .map(|i| self.elements[i].properties.iter().map(|p| p.name().to_string()).collect())
            .unwrap_or_default()
    }

    /// Column of scalar property `prop` of `element`.
    pub fn column(&self, element: &str, prop: &str) -> Result<Vec<f64>> {
        let e = self.element(element).ok_or_else(|| Error::Ply(format!("missing element `{element}`")))?;
        let k = self.elements[e]
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, _) if n == prop))
            .ok_or_else(|| Error::Ply(format!("missing property `{element}.{prop}`")))?;
        Ok(self.rows[e].iter().map(|r| r[k]).collect())
    }

    pub fn has_property(&self, element: &str, prop: &str) -> bool {
        self.property_names(element).iter().any(|n| n == prop)
    }

    fn lists(&self, element: &str) -> Result<Vec<Vec<f64>>> {
        let e = self.element(element).ok_or_else(|| Error::Ply(format!("missing element `{element}`")))?;
        if !self.elements[e].properties.iter().any(|p| matches!(p, Property::List(..))) {
            return Err(Error::Ply(format!("element `{element}` has no list property")));
        }
        Ok(self.rows[e].clone())
    }
}

fn read_header(r: &mut impl BufRead) -> Result<(PlyFormat, Vec<String>, Vec<Element>)> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line).map_err(|e| Error::Ply(e.to_string()))? == 0 {
            return Err(Error::Ply("unexpected end of header".into()));
        }
        Ok(())
    };
    next(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::Ply("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut comments = Vec::new();
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next(&mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", f, _] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(Error::Ply(format!("unsupported format `{other}`"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] => comments.push(line.trim_end().splitn(2, ' ').nth(1).unwrap_or("").to_string()),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::Ply(format!("bad element count `{count}`")))?,
                properties: Vec::new(),
            }),
            ["property", "list", c, t, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before element".into()))?
                .properties
                .push(Property::List(name.to_string(), Scalar::parse(c)?, Scalar::parse(t)?)),
            ["property", t, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Ply("property before element".into()))?
                .properties
                .push(Property::Scalar(name.to_string(), Scalar::parse(t)?)),
            [] => {}
            _ => return Err(Error::Ply(format!("bad header line `{}`", line.trim_end()))),
        }
    }
    Ok((format.ok_or_else(|| Error::Ply("missing format line".into()))?, comments, elements))
}

/// Parse a PLY stream.
pub fn parse_ply(reader: impl Read) -> Result<PlyData> {
    let mut r = BufReader::new(reader);
    let (format, comments, elements) = read_header(&mut r)?;
    let mut rows = Vec::with_capacity(elements.len());
    match format {
        PlyFormat::Ascii => {
            let mut text = String::new();
            r.read_to_string(&mut text).map_err(|e| Error::Ply(e.to_string()))?;
            let mut toks = text.split_whitespace();
            let mut num = || -> Result<f64> {
                let t = toks.next().ok_or_else(|| Error::Ply("truncated ascii body".into()))?;
                t.parse::<f64>().map_err(|_| Error::Ply(format!("bad number `{t}`")))
            };
            for e in &elements {
                let mut el = Vec::with_capacity(e.count);
                for _ in 0..e.count {
                    let mut row = Vec::new();
                    for p in &e.properties {
                        match p {
                            Property::Scalar(..) => row.push(num()?),
                            Property::List(..) => {
                                let n = num()?;
                                row.push(n);
                                for _ in 0..n as usize {
                                    row.push(num()?);
                                }
                            }
                        }
                    }
                    el.push(row);
                }
                rows.push(el);
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for e in &elements {
                let mut el = Vec::with_capacity(e.count);
                for _ in 0..e.count {
                    let mut row = Vec::new();
                    for p in &e.properties {
                        match *p {
                            Property::Scalar(_, t) => row.push(t.read_binary(&mut r)?),
                            Property::List(_, c, t) => {
                                let n = c.read_binary(&mut r)?;
                                row.push(n);
                                for _ in 0..n as usize {
                                    row.push(t.read_binary(&mut r)?);
                                }
                            }
                        }
                    }
                    el.push(row);
                }
                rows.push(el);
            }
        }
    }
    Ok(PlyData {
        format,
        comments,
        elements,
        rows,
    })
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ply(f).map_err(|e| match e {
        Error::Ply(m) => Error::Ply(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Point positions and optional colors in `[0, 1]`.
pub fn read_points(path: &Path) -> Result<(Vec<Vector3<f64>>, Option<Vec<Vector3<f64>>>)> {
    let ply = read_ply(path)?;
    let (x, y, z) = (ply.column("vertex", "x")?, ply.column("vertex", "y")?, ply.column("vertex", "z")?);
    let pts: Vec<_> = (0..x.len()).map(|i| Vector3::new(x[i], y[i], z[i])).collect();
    let colors = if ["red", "green", "blue"].iter().all(|c| ply.has_property("vertex", c)) {
        let (r, g, b) = (ply.column("vertex", "red")?, ply.column("vertex", "green")?, ply.column("vertex", "blue")?);
        // 8-bit colors are rescaled, float colors taken as is
        let scale = if r.iter().chain(&g).chain(&b).any(|v| *v > 1.0) { 1.0 / 255.0 } else { 1.0 };
        Some((0..r.len()).map(|i| Vector3::new(r[i], g[i], b[i]) * scale).collect())
    } else {
        None
    };
    Ok((pts, colors))
}

/// ASCII point cloud with optional 8-bit colors.
pub fn write_points(path: &Path, points: &[Vector3<f64>], colors: Option<&[Vector3<f64>]>) -> Result<()> {
    let mut s = String::new();
    let _ = write!(s, "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n", points.len());
    if colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for (i, p) in points.iter().enumerate() {
        let _ = write!(s, "{:e} {:e} {:e}", p.x, p.y, p.z);
        if let Some(c) = colors {
            let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            let _ = write!(s, " {} {} {}", q(c[i].x), q(c[i].y), q(c[i].z));
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Triangle mesh, ASCII or binary little-endian.
pub fn write_mesh(path: &Path, mesh: &TriangleMesh, format: PlyFormat) -> Result<()> {
    let mut w = create(path)?;
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let header = format!(
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    );
    let io = |e| Error::io(path, e);
    w.write_all(header.as_bytes()).map_err(io)?;
    match format {
        PlyFormat::Ascii => {
            for v in &mesh.vertices {
                writeln!(w, "{:e} {:e} {:e}", v.x, v.y, v.z).map_err(io)?;
            }
            for t in &mesh.triangles {
                writeln!(w, "3 {} {} {}", t[0], t[1], t[2]).map_err(io)?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for v in &mesh.vertices {
                for c in v.iter() {
                    w.write_all(&c.to_le_bytes()).map_err(io)?;
                }
            }
            for t in &mesh.triangles {
                w.write_all(&[3u8]).map_err(io)?;
                for i in t {
                    w.write_all(&i.to_le_bytes()).map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}

/// Triangle mesh; polygons are fan-triangulated.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let ply = read_ply(path)?;
    let (x, y, z) = (ply.column("vertex", "x")?, ply.column("vertex", "y")?, ply.column("vertex", "z")?);
    let vertices: Vec<_> = (0..x.len()).map(|i| Vector3::new(x[i], y[i], z[i])).collect();
    let mut triangles = Vec::new();
    for row in ply.lists("face")? {
        let n = row[0] as usize;
        let idx = &row[1..1 + n];
        if idx.iter().any(|&i| i < 0.0 || i as usize >= vertices.len()) {
            return Err(Error::Ply(format!("{}: face index out of range", path.display())));
        }
        for k in 1..n.saturating_sub(1) {
            triangles.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
        }
    }
    Ok(TriangleMesh { vertices, triangles })
}

/// Write a binary little-endian PLY with one `double` property per column.
pub fn write_binary_table(path: &Path, element: &str, names: &[String], rows: &[Vec<f64>], comments: &[String]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    for c in comments {
        let _ = writeln!(header, "comment {c}");
    }
    let _ = writeln!(header, "element {element} {}", rows.len());
    for n in names {
        let _ = writeln!(header, "property double {n}");
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes()).map_err(io)?;
    for r in rows {
        for v in r {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> TriangleMesh {
        TriangleMesh {
            vertices: vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.0, 1.0)],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        }
    }

    #[test]
    fn mesh_round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        for fmt in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let p = dir.path().join("m.ply");
            write_mesh(&p, &tetra(), fmt).unwrap();
            assert_eq!(read_mesh(&p).unwrap(), tetra());
        }
    }

    #[test]
    fn points_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.ply");
        let pts = vec![Vector3::new(0.1, -2.5, 3.25), Vector3::new(1e-9, 7.0, 0.0)];
        let cols = vec![Vector3::new(1.0, 0.0, 0.5), Vector3::new(0.2, 0.4, 0.6)];
        write_points(&p, &pts, Some(&cols)).unwrap();
        let (q, c) = read_points(&p).unwrap();
        assert_eq!(q, pts);
        let c = c.unwrap();
        assert!((c[0] - cols[0]).norm() < 1.0 / 255.0);
    }

    #[test]
    fn quad_faces_are_triangulated() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.ply");
        std::fs::write(&p, text).unwrap();
        assert_eq!(read_mesh(&p).unwrap().triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(parse_ply("plx\n".as_bytes()).is_err());
        assert!(parse_ply("ply\nformat binary_big_endian 1.0\nend_header\n".as_bytes()).is_err());
        let truncated = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n";
        assert!(parse_ply(truncated.as_bytes()).is_err());
    }
}
