//! Minimal PLY reader/writer: ascii and binary little-endian, scalar and
//! list properties. Values are widened to `f64` on read.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
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

    pub fn name(self) -> &'static str {
        match self {
            ScalarType::I8 => "char",
            ScalarType::U8 => "uchar",
            ScalarType::I16 => "short",
            ScalarType::U16 => "ushort",
            ScalarType::I32 => "int",
            ScalarType::U32 => "uint",
            ScalarType::F32 => "float",
            ScalarType::F64 => "double",
        }
    }

    pub fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    /// Largest representable value for integer types; `None` for floats.
    pub fn integer_max(self) -> Option<f64> {
        match self {
            ScalarType::I8 => Some(i8::MAX as f64),
            ScalarType::U8 => Some(u8::MAX as f64),
            ScalarType::I16 => Some(i16::MAX as f64),
            ScalarType::U16 => Some(u16::MAX as f64),
            ScalarType::I32 => Some(i32::MAX as f64),
            ScalarType::U32 => Some(u32::MAX as f64),
            ScalarType::F32 | ScalarType::F64 => None,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyDef {
    pub name: String,
    pub kind: PropertyKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementDef {
    pub name: String,
    pub count: usize,
    pub properties: Vec<PropertyDef>,
}

impl ElementDef {
    pub fn property_index(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlyHeader {
    pub format: PlyFormat,
    pub elements: Vec<ElementDef>,
}

impl PlyHeader {
    pub fn element(&self, name: &str) -> Option<(usize, &ElementDef)> {
        self.elements.iter().enumerate().find(|(_, e)| e.name == name)
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "ply")?;
        match self.format {
            PlyFormat::Ascii => writeln!(out, "format ascii 1.0")?,
            PlyFormat::BinaryLittleEndian => writeln!(out, "format binary_little_endian 1.0")?,
        }
        for e in &self.elements {
            writeln!(out, "element {} {}", e.name, e.count)?;
            for p in &e.properties {
                match &p.kind {
                    PropertyKind::Scalar(t) => writeln!(out, "property {} {}", t.name(), p.name)?,
                    PropertyKind::List { count, item } => {
                        writeln!(out, "property list {} {} {}", count.name(), item.name(), p.name)?
                    }
                }
            }
        }
        writeln!(out, "end_header")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    List(Vec<f64>),
}

impl Value {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            Value::List(_) => None,
        }
    }
}

/// Parsed file: one row of values per element instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyData {
    pub header: PlyHeader,
    pub elements: Vec<Vec<Vec<Value>>>,
}

/// Parses the header, returning it and the number of lines consumed.
fn read_header(reader: &mut impl BufRead) -> Result<(PlyHeader, usize)> {
    let mut line_no = 0;
    let mut line = String::new();
    let next_line = |reader: &mut dyn BufRead, line: &mut String, line_no: &mut usize| -> Result<bool> {
        line.clear();
        let n = reader.read_line(line).map_err(|e| Error::parse(*line_no + 1, e.to_string()))?;
        *line_no += 1;
        Ok(n > 0)
    };

    if !next_line(reader, &mut line, &mut line_no)? || line.trim_end() != "ply" {
        return Err(Error::parse(1, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<ElementDef> = Vec::new();
    loop {
        if !next_line(reader, &mut line, &mut line_no)? {
            return Err(Error::parse(line_no, "unexpected end of file in header"));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => continue,
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] => continue,
            ["format", fmt, version] => {
                if *version != "1.0" {
                    return Err(Error::parse(line_no, format!("unsupported version {version}")));
                }
                format = Some(match *fmt {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(Error::parse(line_no, format!("unsupported format {other}"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse::<usize>()
                    .map_err(|_| Error::parse(line_no, format!("bad element count '{count}'")))?;
                elements.push(ElementDef { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", count, item, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(line_no, "property before any element"))?;
                let count = ScalarType::parse(count)
                    .ok_or_else(|| Error::parse(line_no, format!("unknown type '{count}'")))?;
                let item = ScalarType::parse(item)
                    .ok_or_else(|| Error::parse(line_no, format!("unknown type '{item}'")))?;
                push_property(element, name, PropertyKind::List { count, item }, line_no)?;
            }
            ["property", ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(line_no, "property before any element"))?;
                let ty = ScalarType::parse(ty).ok_or_else(|| Error::parse(line_no, format!("unknown type '{ty}'")))?;
                push_property(element, name, PropertyKind::Scalar(ty), line_no)?;
            }
            _ => return Err(Error::parse(line_no, format!("unrecognized header line '{}'", line.trim_end()))),
        }
    }
    let format = format.ok_or_else(|| Error::parse(line_no, "header has no format line"))?;
    Ok((PlyHeader { format, elements }, line_no))
}

fn push_property(element: &mut ElementDef, name: &str, kind: PropertyKind, line_no: usize) -> Result<()> {
    if element.property_index(name).is_some() {
        return Err(Error::parse(line_no, format!("duplicate property '{name}' in element '{}'", element.name)));
    }
    element.properties.push(PropertyDef { name: name.to_string(), kind });
    Ok(())
}

pub fn read_ply(reader: &mut impl BufRead) -> Result<PlyData> {
    let (header, header_lines) = read_header(reader)?;
    let elements = match header.format {
        PlyFormat::Ascii => read_ascii_body(reader, &header, header_lines)?,
        PlyFormat::BinaryLittleEndian => read_binary_body(reader, &header)?,
    };
    Ok(PlyData { header, elements })
}

fn read_ascii_body(reader: &mut impl BufRead, header: &PlyHeader, mut line_no: usize) -> Result<Vec<Vec<Vec<Value>>>> {
    let mut lines = reader.lines();
    let mut out = Vec::with_capacity(header.elements.len());
    for element in &header.elements {
        let mut rows = Vec::with_capacity(element.count);
        for _ in 0..element.count {
            let line = loop {
                line_no += 1;
                match lines.next() {
                    Some(Ok(l)) if l.trim().is_empty() => continue,
                    Some(Ok(l)) => break l,
                    Some(Err(e)) => return Err(Error::parse(line_no, e.to_string())),
                    None => {
                        return Err(Error::parse(line_no, format!("unexpected end of data in element '{}'", element.name)))
                    }
                }
            };
            let mut tokens = line.split_whitespace();
            let mut next = |what: &str| -> Result<f64> {
                let tok = tokens
                    .next()
                    .ok_or_else(|| Error::parse(line_no, format!("missing value for '{what}'")))?;
                tok.parse::<f64>().map_err(|_| Error::parse(line_no, format!("bad number '{tok}' for '{what}'")))
            };
            let mut row = Vec::with_capacity(element.properties.len());
            for p in &element.properties {
                match p.kind {
                    PropertyKind::Scalar(_) => row.push(Value::Scalar(next(&p.name)?)),
                    PropertyKind::List { .. } => {
                        let n = next(&p.name)?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(Error::parse(line_no, format!("bad list length {n}")));
                        }
                        let items = (0..n as usize).map(|_| next(&p.name)).collect::<Result<Vec<_>>>()?;
                        row.push(Value::List(items));
                    }
                }
            }
            if tokens.next().is_some() {
                return Err(Error::parse(line_no, "trailing values on line"));
            }
            rows.push(row);
        }
        out.push(rows);
    }
    Ok(out)
}

fn read_binary_body(reader: &mut impl BufRead, header: &PlyHeader) -> Result<Vec<Vec<Vec<Value>>>> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf).map_err(|e| Error::parse(0, e.to_string()))?;
    let mut cursor = 0usize;
    let mut take = |ty: ScalarType, element: &str| -> Result<f64> {
        let end = cursor + ty.size();
        if end > buf.len() {
            return Err(Error::parse(0, format!("truncated binary payload in element '{element}'")));
        }
        let v = ty.decode_le(&buf[cursor..end]);
        cursor = end;
        Ok(v)
    };
    let mut out = Vec::with_capacity(header.elements.len());
    for element in &header.elements {
        let mut rows = Vec::with_capacity(element.count.min(1 << 24));
        for _ in 0..element.count {
            let mut row = Vec::with_capacity(element.properties.len());
            for p in &element.properties {
                match p.kind {
                    PropertyKind::Scalar(t) => row.push(Value::Scalar(take(t, &element.name)?)),
                    PropertyKind::List { count, item } => {
                        let n = take(count, &element.name)?;
                        if n < 0.0 {
                            return Err(Error::parse(0, format!("negative list length in '{}'", element.name)));
                        }
                        let items = (0..n as usize).map(|_| take(item, &element.name)).collect::<Result<Vec<_>>>()?;
                        row.push(Value::List(items));
                    }
                }
            }
            rows.push(row);
        }
        out.push(rows);
    }
    Ok(out)
}

/// Writes a single-element file whose properties are all scalars.
///
/// `rows` holds one slice of values per instance, in property order.
pub fn write_scalar_element<'a>(
    out: &mut impl Write,
    format: PlyFormat,
    element: &ElementDef,
    rows: impl Iterator<Item = &'a [f64]>,
) -> std::io::Result<()> {
    let header = PlyHeader { format, elements: vec![element.clone()] };
    header.write_to(out)?;
    let types: Vec<ScalarType> = element
        .properties
        .iter()
        .map(|p| match p.kind {
            PropertyKind::Scalar(t) => t,
            PropertyKind::List { .. } => panic!("write_scalar_element called with a list property"),
        })
        .collect();
    for row in rows {
        debug_assert_eq!(row.len(), types.len());
        match format {
            PlyFormat::Ascii => {
                let fields: Vec<String> = row.iter().zip(&types).map(|(v, t)| format_ascii(*v, *t)).collect();
                writeln!(out, "{}", fields.join(" "))?;
            }
            PlyFormat::BinaryLittleEndian => {
                for (v, t) in row.iter().zip(&types) {
                    encode_le(out, *v, *t)?;
                }
            }
        }
    }
    Ok(())
}

fn format_ascii(v: f64, t: ScalarType) -> String {
    match t {
        ScalarType::F32 => format!("{}", v as f32),
        ScalarType::F64 => format!("{v}"),
        _ => format!("{}", v.round() as i64),
    }
}

fn encode_le(out: &mut impl Write, v: f64, t: ScalarType) -> std::io::Result<()> {
    match t {
        ScalarType::I8 => out.write_all(&(v.round() as i8).to_le_bytes()),
        ScalarType::U8 => out.write_all(&(v.round() as u8).to_le_bytes()),
        ScalarType::I16 => out.write_all(&(v.round() as i16).to_le_bytes()),
        ScalarType::U16 => out.write_all(&(v.round() as u16).to_le_bytes()),
        ScalarType::I32 => out.write_all(&(v.round() as i32).to_le_bytes()),
        ScalarType::U32 => out.write_all(&(v.round() as u32).to_le_bytes()),
        ScalarType::F32 => out.write_all(&(v as f32).to_le_bytes()),
        ScalarType::F64 => out.write_all(&v.to_le_bytes()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_ascii_with_faces() {
        let src = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float x\nproperty uchar red\n\
                   element face 1\nproperty list uchar int vertex_indices\nend_header\n1.5 7\n-2 255\n3 0 1 1\n";
        let data = read_ply(&mut Cursor::new(src)).unwrap();
        assert_eq!(data.header.format, PlyFormat::Ascii);
        assert_eq!(data.elements[0][1], vec![Value::Scalar(-2.0), Value::Scalar(255.0)]);
        assert_eq!(data.elements[1][0], vec![Value::List(vec![0.0, 1.0, 1.0])]);
    }

    #[test]
    fn header_errors_carry_line_numbers() {
        let src = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float128 x\nend_header\n";
        match read_ply(&mut Cursor::new(src)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let src = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float x\nend_header\n";
        assert!(matches!(read_ply(&mut Cursor::new(src)), Err(Error::Parse { line: 5, .. })));
        assert!(matches!(read_ply(&mut Cursor::new("plx\n")), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ascii_data_errors_carry_line_numbers() {
        let src = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\nabc\n";
        assert!(matches!(read_ply(&mut Cursor::new(src)), Err(Error::Parse { line: 7, .. })));
    }

    #[test]
    fn binary_round_trip_and_truncation() {
        let element = ElementDef {
            name: "vertex".into(),
            count: 2,
            properties: vec![
                PropertyDef { name: "x".into(), kind: PropertyKind::Scalar(ScalarType::F32) },
                PropertyDef { name: "v".into(), kind: PropertyKind::Scalar(ScalarType::U16) },
                PropertyDef { name: "d".into(), kind: PropertyKind::Scalar(ScalarType::F64) },
            ],
        };
        let rows = [[0.25, 65535.0, 1e-300], [-3.0, 2.0, 0.1]];
        let mut bytes = Vec::new();
        write_scalar_element(&mut bytes, PlyFormat::BinaryLittleEndian, &element, rows.iter().map(|r| &r[..])).unwrap();
        let data = read_ply(&mut Cursor::new(&bytes)).unwrap();
        let got: Vec<Vec<f64>> = data.elements[0].iter().map(|r| r.iter().map(|v| v.scalar().unwrap()).collect()).collect();
        assert_eq!(got, vec![rows[0].to_vec(), rows[1].to_vec()]);

        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read_ply(&mut Cursor::new(&bytes)), Err(Error::Parse { .. })));
    }
}
