//! PLY 1.0 reading (ASCII and binary little-endian) and canonical writing.
//!
//! The canonical form is what [`write_ply`] emits:
//!
//! ```text
//! ply
//! format binary_little_endian 1.0
//! element vertex N
//! property double x
//! property double y
//! property double z
//! element face M
//! property list uchar int vertex_indices
//! end_header
//! ```

use super::TriMesh;

const MAX_HEADER: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlyError {
    #[error("bad PLY header: {0}")]
    PlyHeaderError(String),
    #[error("PLY body is truncated")]
    PlyTruncated,
    #[error("face references vertex {index} but the mesh has {vertex_count} vertices")]
    PlyBadIndex { index: i64, vertex_count: usize },
    #[error("malformed PLY body: {0}")]
    PlyMalformed(String),
}

fn header_err(msg: impl Into<String>) -> PlyError {
    PlyError::PlyHeaderError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
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
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let limit = bytes.len().min(MAX_HEADER);
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[pos..limit];
        let Some(nl) = rest.iter().position(|b| *b == b'\n') else {
            return Err(header_err("missing end_header"));
        };
        let raw = &rest[..nl];
        pos += nl + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| header_err("header is not ASCII"))?
            .trim_end_matches('\r');
        if line.trim() == "end_header" {
            break;
        }
        lines.push(line.to_string());
    }

    let mut it = lines.iter();
    if it.next().map(|l| l.trim()) != Some("ply") {
        return Err(header_err("missing ply magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in it {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, version] => {
                if *version != "1.0" {
                    return Err(header_err(format!("unsupported version {version}")));
                }
                format = Some(match *fmt {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => return Err(header_err(format!("unsupported format {other}"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| header_err(format!("bad element count {count}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", count, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| header_err("property before element"))?;
                let count = Scalar::parse(count)
                    .filter(|s| !s.is_float())
                    .ok_or_else(|| header_err(format!("bad list count type {count}")))?;
                let item = Scalar::parse(item)
                    .ok_or_else(|| header_err(format!("bad list item type {item}")))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| header_err("property before element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| header_err(format!("bad property type {ty}")))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => return Err(header_err(format!("unrecognised header line {line:?}"))),
        }
    }
    let format = format.ok_or_else(|| header_err("missing format line"))?;
    Ok(Header {
        format,
        elements,
        body_offset: pos,
    })
}

/// Where the mesh data lives inside the header's element list.
struct Layout {
    vertex_el: usize,
    xyz: [usize; 3],
    face: Option<(usize, usize)>,
}

fn layout(header: &Header) -> Result<Layout, PlyError> {
    let vertex_el = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| header_err("no vertex element"))?;
    let props = &header.elements[vertex_el].props;
    let mut xyz = [0; 3];
    for (slot, axis) in xyz.iter_mut().zip(["x", "y", "z"]) {
        *slot = props
            .iter()
            .position(|p| matches!(p, Property::Scalar { name, .. } if name == axis))
            .ok_or_else(|| header_err(format!("vertex has no scalar property {axis}")))?;
    }
    let face = match header.elements.iter().position(|e| e.name == "face") {
        None => None,
        Some(fi) => {
            let pi = header.elements[fi]
                .props
                .iter()
                .position(|p| {
                    matches!(p, Property::List { .. })
                        && matches!(p.name(), "vertex_indices" | "vertex_index")
                })
                .ok_or_else(|| header_err("face has no vertex_indices list"))?;
            if let Property::List { item, .. } = &header.elements[fi].props[pi] {
                if item.is_float() {
                    return Err(header_err("vertex_indices must be integers"));
                }
            }
            Some((fi, pi))
        }
    };
    Ok(Layout {
        vertex_el,
        xyz,
        face,
    })
}

/// Source of property values, binary or ASCII.
trait Values {
    fn scalar(&mut self, ty: Scalar) -> Result<f64, PlyError>;
    fn int(&mut self, ty: Scalar) -> Result<i64, PlyError>;
    fn remaining_hint(&self) -> usize;
}

struct Binary<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Binary<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], PlyError> {
        let end = self.pos.checked_add(N).ok_or(PlyError::PlyTruncated)?;
        let chunk = self.data.get(self.pos..end).ok_or(PlyError::PlyTruncated)?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice length checked"))
    }
}

impl Values for Binary<'_> {
    fn scalar(&mut self, ty: Scalar) -> Result<f64, PlyError> {
        Ok(match ty {
            Scalar::F32 => f32::from_le_bytes(self.take()?) as f64,
            Scalar::F64 => f64::from_le_bytes(self.take()?),
            _ => self.int(ty)? as f64,
        })
    }

    fn int(&mut self, ty: Scalar) -> Result<i64, PlyError> {
        Ok(match ty {
            Scalar::I8 => i8::from_le_bytes(self.take()?) as i64,
            Scalar::U8 => u8::from_le_bytes(self.take()?) as i64,
            Scalar::I16 => i16::from_le_bytes(self.take()?) as i64,
            Scalar::U16 => u16::from_le_bytes(self.take()?) as i64,
            Scalar::I32 => i32::from_le_bytes(self.take()?) as i64,
            Scalar::U32 => u32::from_le_bytes(self.take()?) as i64,
            Scalar::F32 | Scalar::F64 => {
                return Err(PlyError::PlyMalformed("float where integer expected".into()))
            }
        })
    }

    fn remaining_hint(&self) -> usize {
        self.data.len().saturating_sub(self.pos)
    }
}

struct Ascii<'a> {
    tokens: std::str::SplitAsciiWhitespace<'a>,
    len: usize,
}

impl Ascii<'_> {
    fn next_token(&mut self) -> Result<&str, PlyError> {
        self.tokens.next().ok_or(PlyError::PlyTruncated)
    }
}

impl Values for Ascii<'_> {
    fn scalar(&mut self, ty: Scalar) -> Result<f64, PlyError> {
        if ty.is_float() {
            let tok = self.next_token()?;
            tok.parse::<f64>()
                .map_err(|_| PlyError::PlyMalformed(format!("bad number {tok:?}")))
        } else {
            self.int(ty).map(|v| v as f64)
        }
    }

    fn int(&mut self, ty: Scalar) -> Result<i64, PlyError> {
        if ty.is_float() {
            return Err(PlyError::PlyMalformed("float where integer expected".into()));
        }
        let tok = self.next_token()?;
        tok.parse::<i64>()
            .map_err(|_| PlyError::PlyMalformed(format!("bad integer {tok:?}")))
    }

    fn remaining_hint(&self) -> usize {
        self.len
    }
}

fn read_body(header: &Header, lay: &Layout, src: &mut dyn Values) -> Result<TriMesh, PlyError> {
    let mut vertices = Vec::new();
    let mut raw_faces: Vec<Vec<i64>> = Vec::new();
    for (ei, el) in header.elements.iter().enumerate() {
        // Every instance needs at least one byte (or token); cap the
        // preallocation so hostile counts cannot exhaust memory.
        let reserve = el.count.min(src.remaining_hint());
        if ei == lay.vertex_el {
            vertices.reserve(reserve);
        }
        for _ in 0..el.count {
            let mut xyz = [0.0f64; 3];
            let mut face = None;
            for (pi, prop) in el.props.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let v = src.scalar(*ty)?;
                        if ei == lay.vertex_el {
                            for (axis, slot) in lay.xyz.iter().enumerate() {
                                if *slot == pi {
                                    xyz[axis] = v;
                                }
                            }
                        }
                    }
                    Property::List { count, item, .. } => {
                        let n = src.int(*count)?;
                        if n < 0 {
                            return Err(PlyError::PlyMalformed("negative list length".into()));
                        }
                        let wanted = lay.face == Some((ei, pi));
                        let mut items = Vec::with_capacity(if wanted { n.min(64) as usize } else { 0 });
                        for _ in 0..n {
                            let v = src.int(*item)?;
                            if wanted {
                                items.push(v);
                            }
                        }
                        if wanted {
                            face = Some(items);
                        }
                    }
                }
            }
            if ei == lay.vertex_el {
                if xyz.iter().any(|c| !c.is_finite()) {
                    return Err(PlyError::PlyMalformed("non-finite vertex coordinate".into()));
                }
                vertices.push(xyz);
            }
            if let Some(f) = face {
                raw_faces.push(f);
            }
        }
    }

    let n = vertices.len();
    let mut faces = Vec::with_capacity(raw_faces.len());
    for poly in raw_faces {
        if poly.len() < 3 {
            return Err(PlyError::PlyMalformed(format!(
                "face with {} vertices",
                poly.len()
            )));
        }
        if let Some(bad) = poly.iter().find(|i| **i < 0 || **i as u64 >= n as u64) {
            return Err(PlyError::PlyBadIndex {
                index: *bad,
                vertex_count: n,
            });
        }
        // Polygons are fan-triangulated.
        for k in 1..poly.len() - 1 {
            faces.push([poly[0] as u32, poly[k] as u32, poly[k + 1] as u32]);
        }
    }
    Ok(TriMesh { vertices, faces })
}

/// Parses an ASCII or binary little-endian PLY file into a triangle mesh.
pub fn read_ply(bytes: &[u8]) -> Result<TriMesh, PlyError> {
    let header = parse_header(bytes)?;
    let lay = layout(&header)?;
    let body = &bytes[header.body_offset..];
    match header.format {
        Format::BinaryLe => {
            let mut src = Binary { data: body, pos: 0 };
            read_body(&header, &lay, &mut src)
        }
        Format::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|_| PlyError::PlyMalformed("ASCII body is not UTF-8".into()))?;
            let mut src = Ascii {
                tokens: text.split_ascii_whitespace(),
                len: text.len(),
            };
            read_body(&header, &lay, &mut src)
        }
    }
}

/// Emits the canonical binary little-endian encoding of `mesh`.
pub fn write_ply(mesh: &TriMesh) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    );
    let mut out = Vec::with_capacity(header.len() + mesh.vertices.len() * 24 + mesh.faces.len() * 13);
    out.extend_from_slice(header.as_bytes());
    for v in &mesh.vertices {
        for c in v {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for i in f {
            out.extend_from_slice(&(*i as i32).to_le_bytes());
        }
    }
    out
}

/// ASCII encoding, mainly for fixtures and debugging.
pub fn write_ply_ascii(mesh: &TriMesh) -> Vec<u8> {
    use std::fmt::Write;
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    );
    for [x, y, z] in &mesh.vertices {
        // `{:?}` prints the shortest string that round-trips.
        let _ = writeln!(out, "{x:?} {y:?} {z:?}");
    }
    for [a, b, c] in &mesh.faces {
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    out.into_bytes()
}
