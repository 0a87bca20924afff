//! Point-cloud files: whitespace-separated XYZ text and PLY (ascii or binary
//! little-endian). Coordinates are converted to meters on load.

use std::path::Path;

use basecal_core::geometry::Vec3;
use basecal_core::PointCloud;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    XyzAscii,
    PlyAscii,
    PlyBinaryLe,
}

impl Format {
    /// Format implied by a file extension; PLY defaults to binary for writing.
    pub fn from_extension(path: &Path) -> Option<Format> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "xyz" | "txt" | "asc" | "pts" => Some(Format::XyzAscii),
            "ply" => Some(Format::PlyBinaryLe),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    #[default]
    #[serde(rename = "m")]
    Meters,
    #[serde(rename = "mm")]
    Millimeters,
}

impl Units {
    /// Factor taking a value in these units to meters.
    pub fn to_meters(self) -> f64 {
        match self {
            Units::Meters => 1.0,
            Units::Millimeters => 1e-3,
        }
    }

    fn parse_word(s: &str) -> Option<Units> {
        match s.to_ascii_lowercase().as_str() {
            "m" | "meter" | "meters" | "metre" | "metres" => Some(Units::Meters),
            "mm" | "millimeter" | "millimeters" | "millimetre" | "millimetres" => Some(Units::Millimeters),
            _ => None,
        }
    }

    /// Reads a `units mm` style declaration out of a comment.
    fn from_comment(text: &str) -> Option<Units> {
        let mut words = text
            .split(|c: char| c.is_whitespace() || c == ':' || c == '=')
            .filter(|w| !w.is_empty());
        while let Some(w) = words.next() {
            if w.eq_ignore_ascii_case("units") || w.eq_ignore_ascii_case("unit") {
                return words.next().and_then(Units::parse_word);
            }
        }
        None
    }
}

impl std::str::FromStr for Units {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Units::parse_word(s).ok_or_else(|| format!("unknown unit `{s}` (use m or mm)"))
    }
}

/// A decoded file before unit conversion.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub points: Vec<Vec3>,
    pub units: Option<Units>,
    pub frame_label: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DecodeError {
    Parse(Location, String),
    Unsupported(String),
}

impl DecodeError {
    fn at(self, path: &Path) -> Error {
        match self {
            DecodeError::Parse(at, message) => Error::Parse {
                path: path.into(),
                at,
                message,
            },
            DecodeError::Unsupported(reason) => Error::UnsupportedFormat {
                path: path.into(),
                reason,
            },
        }
    }
}

pub fn load(path: &Path) -> Result<PointCloud> {
    load_with(path, None)
}

/// Loads a cloud; `units` overrides whatever the file declares.
pub fn load_with(path: &Path, units: Option<Units>) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = decode(path, &bytes).map_err(|e| e.at(path))?;
    let scale = units.or(decoded.units).unwrap_or_default().to_meters();
    let mut cloud = PointCloud::new(decoded.points.into_iter().map(|p| p * scale).collect());
    cloud.frame_label = decoded.frame_label;
    Ok(cloud)
}

/// Chooses the decoder from the content first and the extension second.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<Decoded, DecodeError> {
    if bytes.starts_with(b"ply\n") || bytes.starts_with(b"ply\r\n") {
        return decode_ply(bytes);
    }
    match Format::from_extension(path) {
        Some(Format::XyzAscii) => {
            let text = std::str::from_utf8(bytes)
                .map_err(|e| DecodeError::Parse(Location::Offset(e.valid_up_to()), "not UTF-8 text".into()))?;
            decode_xyz(text)
        }
        Some(_) => Err(DecodeError::Parse(Location::Line(1), "missing `ply` magic line".into())),
        None => Err(DecodeError::Unsupported(
            "unrecognised extension (expected .ply or .xyz)".into(),
        )),
    }
}

fn parse_coord(token: &str, at: Location) -> Result<f64, DecodeError> {
    let v: f64 = token
        .parse()
        .map_err(|_| DecodeError::Parse(at, format!("`{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(DecodeError::Parse(at, format!("non-finite coordinate `{token}`")));
    }
    Ok(v)
}

/// One point per line as `x y z`, extra columns ignored, `#` starts a comment.
pub fn decode_xyz(text: &str) -> Result<Decoded, DecodeError> {
    let mut out = Decoded {
        points: Vec::new(),
        units: None,
        frame_label: None,
    };
    for (i, raw) in text.lines().enumerate() {
        let at = Location::Line(i + 1);
        let (data, comment) = match raw.find('#') {
            Some(k) => (&raw[..k], Some(&raw[k + 1..])),
            None => (raw, None),
        };
        if let Some(u) = comment.and_then(Units::from_comment) {
            out.units = Some(u);
        }
        let mut tokens = data
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty());
        let Some(first) = tokens.next() else { continue };
        let (Some(y), Some(z)) = (tokens.next(), tokens.next()) else {
            return Err(DecodeError::Parse(at, "expected three coordinates".into()));
        };
        out.points.push(Vec3::new(
            parse_coord(first, at)?,
            parse_coord(y, at)?,
            parse_coord(z, at)?,
        ));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
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

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    /// Little-endian value; `b` holds exactly `size()` bytes.
    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().expect("8 bytes")),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(Scalar, String),
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    binary: bool,
    elements: Vec<Element>,
    units: Option<Units>,
    frame_label: Option<String>,
    /// Byte offset of the first data byte.
    data_start: usize,
    /// Lines taken by the header, for ascii line numbers.
    lines: usize,
}

fn parse_ply_header(bytes: &[u8]) -> Result<Header, DecodeError> {
    let mut header = Header {
        binary: false,
        elements: Vec::new(),
        units: None,
        frame_label: None,
        data_start: 0,
        lines: 0,
    };
    let mut format_seen = false;
    let mut pos = 0;
    loop {
        let line_no = header.lines + 1;
        let at = Location::Line(line_no);
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| DecodeError::Parse(at, "header has no `end_header`".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| DecodeError::Parse(at, "header is not ASCII".into()))?
            .trim_end_matches('\r');
        pos += end + 1;
        header.lines = line_no;
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        match keyword {
            "ply" if line_no == 1 => {}
            _ if line_no == 1 => {
                return Err(DecodeError::Parse(at, "missing `ply` magic line".into()));
            }
            "format" => {
                header.binary = match words.next() {
                    Some("ascii") => false,
                    Some("binary_little_endian") => true,
                    Some(other) => {
                        return Err(DecodeError::Unsupported(format!("PLY format `{other}`")));
                    }
                    None => return Err(DecodeError::Parse(at, "empty format line".into())),
                };
                format_seen = true;
            }
            "comment" => {
                let rest = line["comment".len()..].trim();
                if let Some(u) = Units::from_comment(rest) {
                    header.units = Some(u);
                } else if let Some(label) = rest.strip_prefix("frame ") {
                    header.frame_label = Some(label.trim().to_string());
                }
            }
            "obj_info" | "" => {}
            "element" => {
                let (Some(name), Some(count)) = (words.next(), words.next()) else {
                    return Err(DecodeError::Parse(at, "element needs a name and a count".into()));
                };
                let count = count
                    .parse()
                    .map_err(|_| DecodeError::Parse(at, format!("bad element count `{count}`")))?;
                header.elements.push(Element {
                    name: name.into(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = header
                    .elements
                    .last_mut()
                    .ok_or_else(|| DecodeError::Parse(at, "property before any element".into()))?;
                let words: Vec<&str> = words.collect();
                let bad_type = |t: &str| DecodeError::Parse(at, format!("unknown property type `{t}`"));
                let prop = match words.as_slice() {
                    ["list", count, item, _name] => Property::List {
                        count: Scalar::parse(count).ok_or_else(|| bad_type(count))?,
                        item: Scalar::parse(item).ok_or_else(|| bad_type(item))?,
                    },
                    [ty, name] => Property::Scalar(Scalar::parse(ty).ok_or_else(|| bad_type(ty))?, (*name).into()),
                    _ => return Err(DecodeError::Parse(at, "malformed property line".into())),
                };
                element.properties.push(prop);
            }
            "end_header" => break,
            other => {
                return Err(DecodeError::Parse(at, format!("unknown header keyword `{other}`")));
            }
        }
    }
    if !format_seen {
        return Err(DecodeError::Parse(
            Location::Line(header.lines),
            "header has no format line".into(),
        ));
    }
    header.data_start = pos;
    Ok(header)
}

/// Column of `x`, `y` and `z` among the vertex properties.
fn xyz_columns(element: &Element) -> Result<[usize; 3], DecodeError> {
    let mut cols = [usize::MAX; 3];
    for (k, p) in element.properties.iter().enumerate() {
        if let Property::Scalar(ty, name) = p {
            let axis = match name.as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => continue,
            };
            if !matches!(ty, Scalar::F32 | Scalar::F64) {
                return Err(DecodeError::Unsupported(format!(
                    "vertex property `{name}` must be float or double"
                )));
            }
            cols[axis] = k;
        }
    }
    if cols.contains(&usize::MAX) {
        return Err(DecodeError::Unsupported("vertex element lacks x, y or z".into()));
    }
    Ok(cols)
}

pub fn decode_ply(bytes: &[u8]) -> Result<Decoded, DecodeError> {
    let header = parse_ply_header(bytes)?;
    let points = if header.binary {
        read_binary(&header, bytes)?
    } else {
        read_ascii(&header, bytes)?
    };
    Ok(Decoded {
        points,
        units: header.units,
        frame_label: header.frame_label,
    })
}

fn read_binary(header: &Header, bytes: &[u8]) -> Result<Vec<Vec3>, DecodeError> {
    let mut pos = header.data_start;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], DecodeError> {
        let s = bytes
            .get(*pos..*pos + n)
            .ok_or_else(|| DecodeError::Parse(Location::Offset(*pos), "unexpected end of data".into()))?;
        *pos += n;
        Ok(s)
    };
    for element in &header.elements {
        let vertex = element.name == "vertex";
        let cols = if vertex { Some(xyz_columns(element)?) } else { None };
        let mut points = Vec::with_capacity(if vertex { element.count } else { 0 });
        for _ in 0..element.count {
            let mut p = [0.0; 3];
            for (k, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar(ty, _) => {
                        let start = pos;
                        let v = ty.read_le(take(&mut pos, ty.size())?);
                        if let Some(axis) = cols.and_then(|c| c.iter().position(|&c| c == k)) {
                            if !v.is_finite() {
                                return Err(DecodeError::Parse(
                                    Location::Offset(start),
                                    "non-finite coordinate".into(),
                                ));
                            }
                            p[axis] = v;
                        }
                    }
                    Property::List { count, item } => {
                        let start = pos;
                        let n = count.read_le(take(&mut pos, count.size())?);
                        if !(n >= 0.0) {
                            return Err(DecodeError::Parse(
                                Location::Offset(start),
                                "negative list length".into(),
                            ));
                        }
                        take(&mut pos, n as usize * item.size())?;
                    }
                }
            }
            if vertex {
                points.push(Vec3::from(p));
            }
        }
        if vertex {
            return Ok(points);
        }
    }
    Err(DecodeError::Unsupported("no vertex element".into()))
}

fn read_ascii(header: &Header, bytes: &[u8]) -> Result<Vec<Vec3>, DecodeError> {
    let text = std::str::from_utf8(&bytes[header.data_start..]).map_err(|e| {
        DecodeError::Parse(
            Location::Offset(header.data_start + e.valid_up_to()),
            "ascii body is not UTF-8".into(),
        )
    })?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (header.lines + i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let last_line = header.lines + text.lines().count();
    for element in &header.elements {
        let vertex = element.name == "vertex";
        let cols = if vertex { Some(xyz_columns(element)?) } else { None };
        let mut points = Vec::with_capacity(if vertex { element.count } else { 0 });
        for _ in 0..element.count {
            let (line_no, line) = lines.next().ok_or_else(|| {
                DecodeError::Parse(
                    Location::Line(last_line + 1),
                    format!("expected {} `{}` rows", element.count, element.name),
                )
            })?;
            let Some(cols) = cols else { continue };
            let at = Location::Line(line_no);
            let mut tokens = line.split_whitespace();
            let mut next = || {
                tokens
                    .next()
                    .ok_or_else(|| DecodeError::Parse(at, "row has too few values".into()))
            };
            let mut p = [0.0; 3];
            for (k, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar(..) => {
                        let token = next()?;
                        if let Some(axis) = cols.iter().position(|&c| c == k) {
                            p[axis] = parse_coord(token, at)?;
                        }
                    }
                    Property::List { .. } => {
                        let token = next()?;
                        let n: usize = token
                            .parse()
                            .map_err(|_| DecodeError::Parse(at, format!("bad list length `{token}`")))?;
                        for _ in 0..n {
                            next()?;
                        }
                    }
                }
            }
            points.push(Vec3::from(p));
        }
        if vertex {
            return Ok(points);
        }
    }
    Err(DecodeError::Unsupported("no vertex element".into()))
}

fn ply_header(pc: &PointCloud, format: &str) -> String {
    let mut h = format!("ply\nformat {format} 1.0\n");
    if let Some(label) = &pc.frame_label {
        let clean: String = label.chars().filter(|c| !c.is_control()).collect();
        h.push_str(&format!("comment frame {clean}\n"));
    }
    h.push_str(&format!(
        "element vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        pc.len()
    ));
    h
}

/// File contents for `pc` in `format`, coordinates in meters.
pub fn encode(pc: &PointCloud, format: Format) -> Vec<u8> {
    match format {
        Format::XyzAscii => {
            let mut s = String::with_capacity(pc.len() * 30);
            for p in pc.iter() {
                s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
            }
            s.into_bytes()
        }
        Format::PlyAscii => {
            let mut s = ply_header(pc, "ascii");
            for p in pc.iter() {
                s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
            }
            s.into_bytes()
        }
        Format::PlyBinaryLe => {
            let mut out = ply_header(pc, "binary_little_endian").into_bytes();
            out.reserve(pc.len() * 24);
            for p in pc.iter() {
                for v in [p.x, p.y, p.z] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            out
        }
    }
}

pub fn save(path: &Path, pc: &PointCloud, format: Format) -> Result<()> {
    std::fs::write(path, encode(pc, format)).map_err(|e| Error::io(path, e))
}

/// Saves with the format implied by the extension.
pub fn save_auto(path: &Path, pc: &PointCloud) -> Result<()> {
    let format = Format::from_extension(path).ok_or_else(|| Error::UnsupportedFormat {
        path: path.into(),
        reason: "unrecognised extension (expected .ply or .xyz)".into(),
    })?;
    save(path, pc, format)
}
