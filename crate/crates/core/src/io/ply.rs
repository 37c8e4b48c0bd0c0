use std::path::Path;

use log::warn;

use super::FormatError;
use crate::geometry::{PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

impl PlyFormat {
    fn tag(self) -> &'static str {
        match self {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
        }
    }
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
    fn parse(name: &str) -> Option<Self> {
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

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    /// `float` tokens are rounded to 32 bits, matching the binary encoding.
    fn parse_ascii(self, tok: &str) -> Option<f64> {
        match self {
            Scalar::F32 => tok.parse::<f32>().ok().map(f64::from),
            _ => tok.parse::<f64>().ok(),
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    format: PlyFormat,
    count: usize,
    props: Vec<(String, Scalar)>,
    xyz: [usize; 3],
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, FormatError> {
    const END: &[u8] = b"end_header";
    let mut offset = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| FormatError::MalformedHeader("missing end_header".into()))?;
        let line = &rest[..nl];
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        offset += nl + 1;
        let text = std::str::from_utf8(line)
            .map_err(|_| FormatError::MalformedHeader("non-UTF-8 header".into()))?;
        if line == END {
            break;
        }
        lines.push(text.to_owned());
    }

    let mut it = lines.iter();
    if it.next().map(|s| s.trim()) != Some("ply") {
        return Err(FormatError::MalformedHeader("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut vertex: Option<(usize, Vec<(String, Scalar)>)> = None;
    let mut in_vertex = false;
    for line in it {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", tag, version] => {
                if *version != "1.0" {
                    return Err(FormatError::UnsupportedFormat(format!("version {version}")));
                }
                format = Some(match *tag {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(FormatError::UnsupportedFormat(other.into())),
                });
            }
            ["element", "vertex", n] => {
                if vertex.is_some() {
                    return Err(FormatError::MalformedHeader(
                        "duplicate vertex element".into(),
                    ));
                }
                let n = n
                    .parse()
                    .map_err(|_| FormatError::MalformedHeader(format!("bad vertex count `{n}`")))?;
                vertex = Some((n, Vec::new()));
                in_vertex = true;
            }
            ["element", name, _] => {
                return Err(FormatError::UnsupportedProperty(format!(
                    "element `{name}`"
                )));
            }
            ["property", "list", ..] => {
                return Err(FormatError::UnsupportedProperty(format!(
                    "list property in `{line}`"
                )));
            }
            ["property", ty, name] => {
                if !in_vertex {
                    return Err(FormatError::MalformedHeader(
                        "property outside element".into(),
                    ));
                }
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| FormatError::UnsupportedProperty(format!("type `{ty}`")))?;
                vertex.as_mut().unwrap().1.push((name.to_string(), ty));
            }
            _ => {
                return Err(FormatError::MalformedHeader(format!(
                    "unrecognised line `{line}`"
                )))
            }
        }
    }
    let format =
        format.ok_or_else(|| FormatError::MalformedHeader("missing format line".into()))?;
    let (count, props) =
        vertex.ok_or_else(|| FormatError::MalformedHeader("missing vertex element".into()))?;
    let find = |n: &str| {
        props
            .iter()
            .position(|(p, _)| p == n)
            .ok_or_else(|| FormatError::MalformedHeader(format!("vertex has no `{n}` property")))
    };
    let xyz = [find("x")?, find("y")?, find("z")?];
    for (name, _) in props
        .iter()
        .filter(|(n, _)| !matches!(n.as_str(), "x" | "y" | "z"))
    {
        warn!("skipping vertex property `{name}`");
    }
    Ok(Header {
        format,
        count,
        props,
        xyz,
        body_offset: offset,
    })
}

fn to_point(vals: &[f64], xyz: [usize; 3]) -> Vec3 {
    Vec3::new(vals[xyz[0]], vals[xyz[1]], vals[xyz[2]])
}

/// Parses a PLY vertex cloud. Non-finite coordinates become invalid entries.
pub fn decode_ply(bytes: &[u8]) -> Result<PointCloud, FormatError> {
    let h = parse_header(bytes)?;
    let body = &bytes[h.body_offset..];
    let mut points = Vec::with_capacity(h.count);
    match h.format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|_| FormatError::MalformedRecord("non-UTF-8 ascii body".into()))?;
            let mut vals = vec![0.0; h.props.len()];
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let mut n = 0;
                for tok in line.split_whitespace() {
                    if n == vals.len() {
                        n += 1;
                        break;
                    }
                    vals[n] = h.props[n].1.parse_ascii(tok).ok_or_else(|| {
                        FormatError::MalformedRecord(format!("bad number `{tok}`"))
                    })?;
                    n += 1;
                }
                if n != vals.len() {
                    return Err(FormatError::MalformedRecord(format!(
                        "expected {} values in `{line}`",
                        vals.len()
                    )));
                }
                points.push(to_point(&vals, h.xyz));
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let stride: usize = h.props.iter().map(|(_, t)| t.size()).sum();
            if !body.len().is_multiple_of(stride) {
                return Err(FormatError::CountMismatch {
                    expected: h.count,
                    found: body.len() / stride,
                });
            }
            let mut vals = vec![0.0; h.props.len()];
            for rec in body.chunks_exact(stride) {
                let mut off = 0;
                for (v, (_, t)) in vals.iter_mut().zip(&h.props) {
                    *v = t.read_le(&rec[off..]);
                    off += t.size();
                }
                points.push(to_point(&vals, h.xyz));
            }
        }
    }
    if points.len() != h.count {
        return Err(FormatError::CountMismatch {
            expected: h.count,
            found: points.len(),
        });
    }
    Ok(PointCloud::from_points(points))
}

/// Serialises a fully valid cloud as `float x, y, z` vertices.
pub fn encode_ply(cloud: &PointCloud, format: PlyFormat) -> Result<Vec<u8>, FormatError> {
    if let Some(i) = cloud.mask().iter().position(|&ok| !ok) {
        return Err(FormatError::InvalidPoint(i));
    }
    let mut out = format!(
        "ply\nformat {} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        format.tag(),
        cloud.len()
    )
    .into_bytes();
    match format {
        PlyFormat::Ascii => {
            use std::fmt::Write;
            let mut s = String::with_capacity(cloud.len() * 32);
            for p in cloud.points() {
                writeln!(s, "{} {} {}", p.x as f32, p.y as f32, p.z as f32).unwrap();
            }
            out.extend_from_slice(s.as_bytes());
        }
        PlyFormat::BinaryLittleEndian => {
            out.reserve(cloud.len() * 12);
            for p in cloud.points() {
                for c in p.to_array() {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud, FormatError> {
    decode_ply(&std::fs::read(path)?)
}

pub fn write_ply(
    cloud: &PointCloud,
    path: impl AsRef<Path>,
    format: PlyFormat,
) -> Result<(), FormatError> {
    std::fs::write(path, encode_ply(cloud, format)?)?;
    Ok(())
}
