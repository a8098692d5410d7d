use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::ply::{self, ElementDef, PlyFormat, PropertyDef, PropertyKind, ScalarType};
use crate::error::{Error, Result};
use crate::types::{ColoredPoint, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    Ply,
    /// COLMAP `points3D.txt`.
    ColmapText,
}

impl std::str::FromStr for PointFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ply" => Ok(PointFormat::Ply),
            "colmap-text" | "colmap" => Ok(PointFormat::ColmapText),
            other => Err(Error::Config(format!("unknown point format '{other}'"))),
        }
    }
}

pub fn read_point_cloud(path: impl AsRef<Path>, format: PointFormat) -> Result<Vec<ColoredPoint>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    match format {
        PointFormat::Ply => read_ply_points(&mut reader),
        PointFormat::ColmapText => read_colmap_points(&mut reader),
    }
}

/// Reads the `vertex` element. Integer colors are divided by their type's
/// maximum; float colors are clamped to `[0, 1]`.
pub fn read_ply_points(reader: &mut impl BufRead) -> Result<Vec<ColoredPoint>> {
    let data = ply::read_ply(reader)?;
    let (idx, vertex) = data
        .header
        .element("vertex")
        .ok_or_else(|| Error::Schema("no 'vertex' element".into()))?;
    let column = |names: &[&str]| -> Result<(usize, ScalarType)> {
        for name in names {
            if let Some(i) = vertex.property_index(name) {
                return match vertex.properties[i].kind {
                    PropertyKind::Scalar(t) => Ok((i, t)),
                    PropertyKind::List { .. } => Err(Error::Schema(format!("property '{name}' is a list"))),
                };
            }
        }
        Err(Error::Schema(format!("vertex element lacks property '{}'", names[0])))
    };
    let pos = [column(&["x"])?, column(&["y"])?, column(&["z"])?];
    let col = [
        column(&["red", "r", "diffuse_red"])?,
        column(&["green", "g", "diffuse_green"])?,
        column(&["blue", "b", "diffuse_blue"])?,
    ];
    let rows = &data.elements[idx];
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let get = |i: usize| row[i].scalar().expect("scalar property");
        let position = Vec3::new(get(pos[0].0), get(pos[1].0), get(pos[2].0));
        if !position.iter().all(|c| c.is_finite()) {
            return Err(Error::Schema("non-finite vertex position".into()));
        }
        let color = Vec3::from(col.map(|(i, t)| normalize_channel(get(i), t)));
        out.push(ColoredPoint::new(position, color));
    }
    Ok(out)
}

fn normalize_channel(v: f64, ty: ScalarType) -> f64 {
    let v = match ty.integer_max() {
        Some(max) => v / max,
        None => v,
    };
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Parses `POINT3D_ID X Y Z R G B ERROR TRACK...` lines; `#` starts a comment.
pub fn read_colmap_points(reader: &mut impl BufRead) -> Result<Vec<ColoredPoint>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 8 {
            return Err(Error::parse(line_no, format!("expected at least 8 fields, got {}", fields.len())));
        }
        let num = |j: usize| -> Result<f64> {
            fields[j]
                .parse::<f64>()
                .map_err(|_| Error::parse(line_no, format!("bad number '{}'", fields[j])))
        };
        let position = Vec3::new(num(1)?, num(2)?, num(3)?);
        if !position.iter().all(|c| c.is_finite()) {
            return Err(Error::parse(line_no, "non-finite position"));
        }
        let mut color = [0.0; 3];
        for (c, j) in color.iter_mut().zip(4..7) {
            let v = fields[j]
                .parse::<u8>()
                .map_err(|_| Error::parse(line_no, format!("bad 8-bit color '{}'", fields[j])))?;
            *c = v as f64 / 255.0;
        }
        out.push(ColoredPoint::new(position, Vec3::from(color)));
    }
    Ok(out)
}

fn point_element(count: usize) -> ElementDef {
    let prop = |name: &str, t| PropertyDef { name: name.into(), kind: PropertyKind::Scalar(t) };
    ElementDef {
        name: "vertex".into(),
        count,
        properties: vec![
            prop("x", ScalarType::F32),
            prop("y", ScalarType::F32),
            prop("z", ScalarType::F32),
            prop("red", ScalarType::U8),
            prop("green", ScalarType::U8),
            prop("blue", ScalarType::U8),
        ],
    }
}

/// Point cloud as `float x,y,z` + `uchar red,green,blue`.
pub fn write_point_cloud(points: &[ColoredPoint], path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let rows: Vec<[f64; 6]> = points
        .iter()
        .map(|p| {
            let c = p.color.map(|c| (c.clamp(0.0, 1.0) * 255.0).round());
            [p.position.x, p.position.y, p.position.z, c.x, c.y, c.z]
        })
        .collect();
    ply::write_scalar_element(&mut out, format, &point_element(points.len()), rows.iter().map(|r| &r[..]))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
