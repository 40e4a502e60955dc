//! Binary little-endian PLY in the layout written by common 3DGS trainers.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scene::{Gaussian3D, ShDegree, SH_COEFFS};

/// A decoded scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub gaussians: Vec<Gaussian3D>,
    pub source_path: PathBuf,
    pub sh_degree: ShDegree,
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
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    /// (name, type, byte offset within a record)
    properties: Vec<(String, ScalarType, usize)>,
    stride: usize,
}

struct Header {
    elements: Vec<Element>,
    body_offset: usize,
}

fn schema(path: &Path, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| schema(path, "missing end_header"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| schema(path, "header is not utf-8"))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(schema(path, "missing ply magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["format", "binary_little_endian", _] => format_ok = true,
            ["format", other, _] => {
                return Err(schema(path, format!("unsupported format {other}")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| schema(path, format!("bad element count {count}")))?;
                elements.push(Element {
                    name: (*name).to_string(),
                    count,
                    properties: Vec::new(),
                    stride: 0,
                });
            }
            ["property", "list", ..] => {
                return Err(schema(path, "list properties are not supported"));
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| schema(path, "property before element"))?;
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| schema(path, format!("unknown property type {ty}")))?;
                el.properties.push(((*name).to_string(), ty, el.stride));
                el.stride += ty.size();
            }
            _ => return Err(schema(path, format!("unrecognized header line `{line}`"))),
        }
    }
    if !format_ok {
        return Err(schema(path, "missing binary_little_endian format line"));
    }
    Ok(Header {
        elements,
        body_offset: end + END.len(),
    })
}

/// Reads a trained scene. SH degree is inferred from the number of
/// `f_rest_*` properties.
pub fn load_ply(path: impl AsRef<Path>) -> Result<SceneFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &bytes)?;

    let mut offset = header.body_offset;
    let mut vertex = None;
    for el in &header.elements {
        if el.name == "vertex" {
            vertex = Some((el, offset));
            break;
        }
        offset += el.count * el.stride;
    }
    let (el, start) = vertex.ok_or_else(|| schema(path, "missing vertex element"))?;
    if el.count == 0 {
        return Err(Error::Data {
            path: path.to_path_buf(),
            record: None,
            message: "scene contains no gaussians".into(),
        });
    }

    let find = |name: &str| -> Result<(ScalarType, usize)> {
        el.properties
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, t, o)| (*t, *o))
            .ok_or_else(|| schema(path, format!("missing required property `{name}`")))
    };

    let rest_count = el
        .properties
        .iter()
        .filter(|(n, _, _)| n.starts_with("f_rest_"))
        .count();
    let degree = match rest_count {
        0 => 0,
        9 => 1,
        24 => 2,
        45 => 3,
        n => return Err(schema(path, format!("unexpected f_rest property count {n}"))),
    };
    let sh_degree = ShDegree::new(degree)?;
    let per_channel = sh_degree.rest_per_channel();

    let mut fields = Vec::new();
    for name in ["x", "y", "z"] {
        fields.push(find(name)?);
    }
    for i in 0..3 {
        fields.push(find(&format!("scale_{i}"))?);
    }
    for i in 0..4 {
        fields.push(find(&format!("rot_{i}"))?);
    }
    fields.push(find("opacity")?);
    for i in 0..3 {
        fields.push(find(&format!("f_dc_{i}"))?);
    }
    for i in 0..rest_count {
        fields.push(find(&format!("f_rest_{i}"))?);
    }

    let needed = start + el.count * el.stride;
    if bytes.len() < needed {
        return Err(Error::Data {
            path: path.to_path_buf(),
            record: Some((bytes.len().saturating_sub(start)) / el.stride.max(1)),
            message: "file truncated".into(),
        });
    }

    let mut gaussians = Vec::with_capacity(el.count);
    let mut values = vec![0f32; fields.len()];
    for record in 0..el.count {
        let base = start + record * el.stride;
        for (slot, (ty, off)) in values.iter_mut().zip(&fields) {
            let v = ty.read(&bytes[base + off..]);
            if !v.is_finite() {
                return Err(Error::Data {
                    path: path.to_path_buf(),
                    record: Some(record),
                    message: "non-finite value".into(),
                });
            }
            *slot = v as f32;
        }
        let mut sh = [[0f32; SH_COEFFS]; 3];
        for c in 0..3 {
            sh[c][0] = values[11 + c];
            for i in 0..per_channel {
                sh[c][1 + i] = values[14 + c * per_channel + i];
            }
        }
        let g = Gaussian3D::new(
            [values[0], values[1], values[2]],
            [values[3], values[4], values[5]],
            [values[6], values[7], values[8], values[9]],
            values[10],
            sh,
        )
        .map_err(|e| Error::Data {
            path: path.to_path_buf(),
            record: Some(record),
            message: e.to_string(),
        })?;
        gaussians.push(g);
    }

    Ok(SceneFile {
        gaussians,
        source_path: path.to_path_buf(),
        sh_degree,
    })
}

/// Writes gaussians in the same layout `load_ply` reads.
pub fn write_ply(path: impl AsRef<Path>, gaussians: &[Gaussian3D], sh_degree: ShDegree) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let per_channel = sh_degree.rest_per_channel();

    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", gaussians.len()));
    for name in ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"] {
        header.push_str(&format!("property float {name}\n"));
    }
    for i in 0..3 * per_channel {
        header.push_str(&format!("property float f_rest_{i}\n"));
    }
    header.push_str("property float opacity\n");
    for i in 0..3 {
        header.push_str(&format!("property float scale_{i}\n"));
    }
    for i in 0..4 {
        header.push_str(&format!("property float rot_{i}\n"));
    }
    header.push_str("end_header\n");

    let io = |e| Error::io(path, e);
    w.write_all(header.as_bytes()).map_err(io)?;
    for g in gaussians {
        let mut rec: Vec<f32> = Vec::with_capacity(62);
        rec.extend(g.position);
        rec.extend([0.0; 3]);
        rec.extend([g.sh[0][0], g.sh[1][0], g.sh[2][0]]);
        for c in 0..3 {
            rec.extend(&g.sh[c][1..1 + per_channel]);
        }
        rec.push(g.opacity_logit);
        rec.extend(g.log_scale);
        rec.extend(g.rotation);
        for v in rec {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
