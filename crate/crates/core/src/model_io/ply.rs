use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::raster::{quantize, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    /// Scale that maps the type's color range onto [0, 1].
    fn color_scale(self) -> f64 {
        match self {
            Scalar::U8 | Scalar::I8 => 255.0,
            Scalar::U16 | Scalar::I16 => 65535.0,
            Scalar::U32 | Scalar::I32 => u32::MAX as f64,
            Scalar::F32 | Scalar::F64 => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    /// Byte offset of the body.
    body_start: usize,
    /// 1-based line number of the first body line (ASCII bodies).
    body_line: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();

    loop {
        if pos >= bytes.len() {
            return Err(parse_err(line_no + 1, "missing `end_header`"));
        }
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .unwrap_or(bytes.len());
        let raw = &bytes[pos..end];
        pos = (end + 1).min(bytes.len());
        line_no += 1;

        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err(line_no, "header line is not valid text"))?
            .trim_end_matches('\r')
            .trim();
        let mut tok = line.split_whitespace();
        let Some(keyword) = tok.next() else {
            continue;
        };

        if line_no == 1 {
            if keyword != "ply" {
                return Err(parse_err(1, format!("expected `ply` magic, found `{line}`")));
            }
            continue;
        }

        match keyword {
            "format" => {
                let fmt = tok.next().unwrap_or("");
                encoding = Some(match fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    "binary_big_endian" => {
                        return Err(Error::UnsupportedFormat("big-endian PLY".into()));
                    }
                    _ => return Err(parse_err(line_no, format!("unknown format `{line}`"))),
                });
            }
            "comment" | "obj_info" => {}
            "element" => {
                let name = tok
                    .next()
                    .ok_or_else(|| parse_err(line_no, format!("malformed element line `{line}`")))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(line_no, format!("malformed element count in `{line}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property declared before any element"))?;
                let bad = || parse_err(line_no, format!("malformed property line `{line}`"));
                let first = tok.next().ok_or_else(bad)?;
                if first == "list" {
                    let count = tok.next().and_then(Scalar::parse).ok_or_else(bad)?;
                    let item = tok.next().and_then(Scalar::parse).ok_or_else(bad)?;
                    tok.next().ok_or_else(bad)?;
                    el.props.push(Property::List { count, item });
                } else {
                    let ty = Scalar::parse(first).ok_or_else(bad)?;
                    let name = tok.next().ok_or_else(bad)?;
                    el.props.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            "end_header" => break,
            _ => return Err(parse_err(line_no, format!("unexpected header line `{line}`"))),
        }
    }

    let encoding = encoding.ok_or_else(|| parse_err(line_no, "header has no `format` line"))?;
    Ok(Header {
        encoding,
        elements,
        body_start: pos,
        body_line: line_no + 1,
    })
}

/// Column indices of the properties a point cloud needs.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: [usize; 3],
    color_scale: [f64; 3],
}

fn vertex_layout(el: &Element) -> Result<VertexLayout> {
    let find = |names: &[&str]| {
        el.props.iter().position(|p| match p {
            Property::Scalar { name, .. } => names.contains(&name.as_str()),
            Property::List { .. } => false,
        })
    };
    let scalar_ty = |i: usize| match &el.props[i] {
        Property::Scalar { ty, .. } => *ty,
        Property::List { .. } => unreachable!(),
    };
    let (Some(x), Some(y), Some(z)) = (find(&["x"]), find(&["y"]), find(&["z"])) else {
        return Err(Error::InvalidModel("vertex element lacks x/y/z properties".into()));
    };
    let (Some(r), Some(g), Some(b)) = (
        find(&["red", "diffuse_red", "r"]),
        find(&["green", "diffuse_green", "g"]),
        find(&["blue", "diffuse_blue", "b"]),
    ) else {
        return Err(Error::Uncolored);
    };
    Ok(VertexLayout {
        xyz: [x, y, z],
        rgb: [r, g, b],
        color_scale: [
            scalar_ty(r).color_scale(),
            scalar_ty(g).color_scale(),
            scalar_ty(b).color_scale(),
        ],
    })
}

fn to_point(values: &[f64], layout: &VertexLayout) -> (Vec3, Rgb) {
    let p = [
        values[layout.xyz[0]] as f32,
        values[layout.xyz[1]] as f32,
        values[layout.xyz[2]] as f32,
    ];
    let mut c = [0.0f32; 3];
    for k in 0..3 {
        c[k] = (values[layout.rgb[k]] / layout.color_scale[k]).clamp(0.0, 1.0) as f32;
    }
    (p, c)
}

/// Parses an in-memory PLY file into a point cloud.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(header.body_line - 1, "no `vertex` element declared"))?;
    let vertex = &header.elements[vi];
    let layout = vertex_layout(vertex)?;
    let body = &bytes[header.body_start..];

    let (positions, colors) = match header.encoding {
        Encoding::Ascii => read_ascii(body, header.body_line, &header.elements[..vi], vertex, &layout)?,
        Encoding::BinaryLe => read_binary(body, &header.elements[..vi], vertex, &layout)?,
    };
    PointCloud::new(positions, colors)
}

type Columns = (Vec<Vec3>, Vec<Rgb>);

fn read_ascii(body: &[u8], first_line: usize, skip: &[Element], vertex: &Element, layout: &VertexLayout) -> Result<Columns> {
    let text = std::str::from_utf8(body).map_err(|_| parse_err(first_line, "ASCII body is not valid text"))?;
    // Blank lines carry no records; keep line numbers for diagnostics.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (first_line + i, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let skip_rows: usize = skip.iter().map(|e| e.count).sum();
    for _ in 0..skip_rows {
        if lines.next().is_none() {
            return Err(Error::Truncated {
                expected: vertex.count,
                found: 0,
            });
        }
    }

    let has_lists = vertex.props.iter().any(|p| matches!(p, Property::List { .. }));
    let mut positions = Vec::with_capacity(vertex.count);
    let mut colors = Vec::with_capacity(vertex.count);
    let mut values = Vec::with_capacity(vertex.props.len());
    for found in 0..vertex.count {
        let Some((line_no, line)) = lines.next() else {
            return Err(Error::Truncated {
                expected: vertex.count,
                found,
            });
        };
        values.clear();
        let mut tokens = line.split_ascii_whitespace();
        let mut next_num = || -> Result<f64> {
            let t = tokens
                .next()
                .ok_or_else(|| parse_err(line_no, format!("too few values in vertex record `{line}`")))?;
            t.parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("invalid number `{t}`")))
        };
        for prop in &vertex.props {
            match prop {
                Property::Scalar { .. } => values.push(next_num()?),
                Property::List { .. } => {
                    let n = next_num()? as usize;
                    for _ in 0..n {
                        next_num()?;
                    }
                    values.push(0.0);
                }
            }
        }
        if !has_lists && tokens.next().is_some() {
            return Err(parse_err(line_no, format!("too many values in vertex record `{line}`")));
        }
        let (p, c) = to_point(&values, layout);
        positions.push(p);
        colors.push(c);
    }
    Ok((positions, colors))
}

fn read_binary(body: &[u8], skip: &[Element], vertex: &Element, layout: &VertexLayout) -> Result<Columns> {
    let mut off = 0usize;
    for el in skip {
        for _ in 0..el.count {
            for prop in &el.props {
                off = skip_property(body, off, prop).ok_or(Error::Truncated {
                    expected: vertex.count,
                    found: 0,
                })?;
            }
        }
    }

    let fixed: Option<usize> = vertex
        .props
        .iter()
        .map(|p| match p {
            Property::Scalar { ty, .. } => Some(ty.size()),
            Property::List { .. } => None,
        })
        .sum();

    let mut positions = Vec::with_capacity(vertex.count);
    let mut colors = Vec::with_capacity(vertex.count);
    let mut values = vec![0.0f64; vertex.props.len()];
    for found in 0..vertex.count {
        let truncated = || Error::Truncated {
            expected: vertex.count,
            found,
        };
        if let Some(stride) = fixed {
            if off + stride > body.len() {
                return Err(truncated());
            }
        }
        for (i, prop) in vertex.props.iter().enumerate() {
            match prop {
                Property::Scalar { ty, .. } => {
                    let sz = ty.size();
                    if off + sz > body.len() {
                        return Err(truncated());
                    }
                    values[i] = ty.read_le(&body[off..off + sz]);
                    off += sz;
                }
                Property::List { .. } => {
                    off = skip_property(body, off, prop).ok_or_else(truncated)?;
                    values[i] = 0.0;
                }
            }
        }
        let (p, c) = to_point(&values, layout);
        positions.push(p);
        colors.push(c);
    }
    Ok((positions, colors))
}

fn skip_property(body: &[u8], off: usize, prop: &Property) -> Option<usize> {
    match prop {
        Property::Scalar { ty, .. } => {
            let end = off + ty.size();
            (end <= body.len()).then_some(end)
        }
        Property::List { count, item } => {
            let cs = count.size();
            if off + cs > body.len() {
                return None;
            }
            let n = count.read_le(&body[off..off + cs]) as usize;
            let end = off + cs + n * item.size();
            (end <= body.len()).then_some(end)
        }
    }
}

pub fn load_point_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes)
}

fn header_text(cloud: &PointCloud, format: &str) -> String {
    format!(
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )
}

/// Writes `float` coordinates and `uchar` colors. Coordinates use the
/// shortest decimal that round-trips through `f32`.
pub fn write_ply_ascii(cloud: &PointCloud, out: &mut impl Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(header_text(cloud, "ascii").as_bytes())?;
    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        writeln!(
            w,
            "{} {} {} {} {} {}",
            p[0],
            p[1],
            p[2],
            quantize(c[0]),
            quantize(c[1]),
            quantize(c[2])
        )?;
    }
    w.flush()
}

pub fn write_ply_binary(cloud: &PointCloud, out: &mut impl Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(header_text(cloud, "binary_little_endian").as_bytes())?;
    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        for v in p {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[quantize(c[0]), quantize(c[1]), quantize(c[2])])?;
    }
    w.flush()
}
