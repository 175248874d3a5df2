//! Minimal PLY support: vertex positions and 8-bit colors, ASCII or
//! binary little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A point cloud as read from disk: positions in source units and RGB
/// colors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawPointCloud {
    pub positions: Vec<[f64; 3]>,
    pub colors: Vec<[u8; 3]>,
}

impl RawPointCloud {
    pub fn new(positions: Vec<[f64; 3]>, colors: Vec<[u8; 3]>) -> Result<Self> {
        if positions.len() != colors.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                actual: colors.len(),
            });
        }
        Ok(RawPointCloud { positions, colors })
    }

    pub fn point_count(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        }
    }
}

#[derive(Debug)]
struct Property {
    name: String,
    ty: ScalarType,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
    has_list: bool,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Ply("no end_header".into()))?;
    let mut body_offset = end + END.len();
    // Header line terminator: "\n" or "\r\n".
    if bytes.get(body_offset) == Some(&b'\r') {
        body_offset += 1;
    }
    if bytes.get(body_offset) == Some(&b'\n') {
        body_offset += 1;
    }
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Ply("header is not UTF-8".into()))?;
    let mut lines = text.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(Error::Ply("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                format = Some(match *fmt {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(Error::Ply(format!("unsupported format `{other}`"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::Ply(format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            ["property", "list", ..] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Ply("property before element".into()))?;
                el.has_list = true;
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Ply("property before element".into()))?;
                let ty = ScalarType::parse(ty).ok_or_else(|| Error::Ply(format!("unknown type `{ty}`")))?;
                el.properties.push(Property {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => return Err(Error::Ply(format!("unrecognized header line `{line}`"))),
        }
    }
    let format = format.ok_or_else(|| Error::Ply("missing format line".into()))?;
    Ok(Header {
        format,
        elements,
        body_offset,
    })
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<RawPointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes)
}

pub fn parse_ply(bytes: &[u8]) -> Result<RawPointCloud> {
    let header = parse_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Ply("no vertex element".into()))?;
    let vertex = &header.elements[vertex_pos];
    if vertex.has_list {
        return Err(Error::Ply("list properties on vertex are unsupported".into()));
    }
    let find = |name: &str| vertex.properties.iter().position(|p| p.name == name);
    let xyz = [
        find("x").ok_or_else(|| Error::Ply("missing property x".into()))?,
        find("y").ok_or_else(|| Error::Ply("missing property y".into()))?,
        find("z").ok_or_else(|| Error::Ply("missing property z".into()))?,
    ];
    let rgb = [
        find("red").ok_or(Error::MissingColor("red"))?,
        find("green").ok_or(Error::MissingColor("green"))?,
        find("blue").ok_or(Error::MissingColor("blue"))?,
    ];

    let body = &bytes[header.body_offset..];
    let n = vertex.count;
    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    let mut values = vec![0.0f64; vertex.properties.len()];

    match header.format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| Error::Ply("body is not UTF-8".into()))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            // Skip records of elements preceding the vertex element.
            for el in &header.elements[..vertex_pos] {
                for _ in 0..el.count {
                    lines
                        .next()
                        .ok_or_else(|| Error::Ply(format!("truncated `{}` element", el.name)))?;
                }
            }
            for i in 0..n {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Ply(format!("truncated at vertex {i}")))?;
                let mut toks = line.split_whitespace();
                for (v, prop) in values.iter_mut().zip(&header.elements[vertex_pos].properties) {
                    let t = toks
                        .next()
                        .ok_or_else(|| Error::Ply(format!("short vertex line {i}")))?;
                    let bad = |_| Error::Ply(format!("bad number `{t}` on vertex {i}"));
                    // Parse at the declared precision so float text round-trips.
                    *v = match prop.ty {
                        ScalarType::F32 => t.parse::<f32>().map_err(bad)? as f64,
                        _ => t.parse::<f64>().map_err(bad)?,
                    };
                }
                push_vertex(&values, xyz, rgb, &mut positions, &mut colors, i)?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut offset = 0;
            for el in &header.elements[..vertex_pos] {
                if el.has_list {
                    return Err(Error::Ply(format!(
                        "cannot skip list element `{}` before vertices",
                        el.name
                    )));
                }
                offset += el.count * el.properties.iter().map(|p| p.ty.size()).sum::<usize>();
            }
            let stride: usize = vertex.properties.iter().map(|p| p.ty.size()).sum();
            let need = offset + stride * n;
            if body.len() < need {
                return Err(Error::Ply(format!(
                    "truncated binary body: need {need} bytes, have {}",
                    body.len()
                )));
            }
            for i in 0..n {
                let mut at = offset + i * stride;
                for (v, p) in values.iter_mut().zip(&vertex.properties) {
                    *v = p.ty.read_le(&body[at..at + p.ty.size()]);
                    at += p.ty.size();
                }
                push_vertex(&values, xyz, rgb, &mut positions, &mut colors, i)?;
            }
        }
    }
    RawPointCloud::new(positions, colors)
}

fn push_vertex(
    values: &[f64],
    xyz: [usize; 3],
    rgb: [usize; 3],
    positions: &mut Vec<[f64; 3]>,
    colors: &mut Vec<[u8; 3]>,
    i: usize,
) -> Result<()> {
    positions.push([values[xyz[0]], values[xyz[1]], values[xyz[2]]]);
    let mut c = [0u8; 3];
    for (dst, &k) in c.iter_mut().zip(&rgb) {
        let v = values[k];
        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
            return Err(Error::Ply(format!("color value {v} out of range on vertex {i}")));
        }
        *dst = v as u8;
    }
    colors.push(c);
    Ok(())
}

/// Serializes with `float` positions and `uchar` colors.
pub fn encode_ply(cloud: &RawPointCloud, format: PlyFormat) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + cloud.point_count() * 15);
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let _ = write!(
        out,
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.point_count()
    );
    for (p, c) in cloud.positions.iter().zip(&cloud.colors) {
        match format {
            PlyFormat::Ascii => {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {} {}",
                    p[0] as f32, p[1] as f32, p[2] as f32, c[0], c[1], c[2]
                );
            }
            PlyFormat::BinaryLittleEndian => {
                for v in p {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
                out.extend_from_slice(c);
            }
        }
    }
    out
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &RawPointCloud, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ply(cloud, format)).map_err(|e| Error::io(path, e))
}
