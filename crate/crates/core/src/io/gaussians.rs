//! Gaussian arrays in the vertex layout consumed by 3DGS trainers.
//!
//! Per vertex, all `float`: `x y z nx ny nz f_dc_0..2 opacity scale_0..2
//! rot_0..3`. Normals are zero, color is the degree-0 SH coefficient,
//! opacity is a logit, scale is a natural log and the rotation is a raw
//! `(w, x, y, z)` quaternion.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::ply::{self, ElementDef, PlyFormat, PropertyDef, PropertyKind, ScalarType};
use crate::error::{Error, Result};
use crate::types::{quaternion_normalize, GaussianPrimitive, Quat, Vec3};

/// Degree-0 real spherical harmonic, `1 / (2√π)`.
pub const SH_C0: f64 = 0.2820947917738781;

pub const OPACITY_CLAMP: f64 = 1e-4;

pub const GAUSSIAN_PROPERTIES: [&str; 17] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

fn gaussian_element(count: usize) -> ElementDef {
    ElementDef {
        name: "vertex".into(),
        count,
        properties: GAUSSIAN_PROPERTIES
            .iter()
            .map(|name| PropertyDef { name: name.to_string(), kind: PropertyKind::Scalar(ScalarType::F32) })
            .collect(),
    }
}

pub fn rgb_to_sh_dc(c: f64) -> f64 {
    (c - 0.5) / SH_C0
}

pub fn sh_dc_to_rgb(f: f64) -> f64 {
    f * SH_C0 + 0.5
}

pub fn opacity_to_logit(alpha: f64) -> f64 {
    let a = alpha.clamp(OPACITY_CLAMP, 1.0 - OPACITY_CLAMP);
    (a / (1.0 - a)).ln()
}

pub fn logit_to_opacity(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn encode(g: &GaussianPrimitive) -> [f64; 17] {
    let q = g.rotation.0;
    [
        g.mean.x,
        g.mean.y,
        g.mean.z,
        0.0,
        0.0,
        0.0,
        rgb_to_sh_dc(g.color.x),
        rgb_to_sh_dc(g.color.y),
        rgb_to_sh_dc(g.color.z),
        opacity_to_logit(g.opacity),
        g.scale.x.ln(),
        g.scale.y.ln(),
        g.scale.z.ln(),
        q[0],
        q[1],
        q[2],
        q[3],
    ]
}

pub fn write_gaussians(primitives: &[GaussianPrimitive], out: &mut impl Write) -> std::io::Result<()> {
    let rows: Vec<[f64; 17]> = primitives.iter().map(encode).collect();
    ply::write_scalar_element(
        out,
        PlyFormat::BinaryLittleEndian,
        &gaussian_element(primitives.len()),
        rows.iter().map(|r| &r[..]),
    )
}

pub fn write_gaussians_3dgs_ply(primitives: &[GaussianPrimitive], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_gaussians(primitives, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_gaussians(reader: &mut impl BufRead) -> Result<Vec<GaussianPrimitive>> {
    let data = ply::read_ply(reader)?;
    let (idx, vertex) = data
        .header
        .element("vertex")
        .ok_or_else(|| Error::Schema("no 'vertex' element".into()))?;
    let mut cols = [0usize; 17];
    for (slot, name) in cols.iter_mut().zip(GAUSSIAN_PROPERTIES) {
        let i = vertex
            .property_index(name)
            .ok_or_else(|| Error::Schema(format!("unknown Gaussian layout: missing '{name}'")))?;
        if !matches!(vertex.properties[i].kind, PropertyKind::Scalar(_)) {
            return Err(Error::Schema(format!("property '{name}' is a list")));
        }
        *slot = i;
    }
    data.elements[idx]
        .iter()
        .map(|row| {
            let v = cols.map(|i| row[i].scalar().expect("scalar property"));
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Schema("non-finite Gaussian attribute".into()));
            }
            let mut rotation = Quat([v[13], v[14], v[15], v[16]]);
            // 32-bit storage keeps unit quaternions within tolerance; only
            // renormalize genuinely unnormalized input so re-export is stable.
            if !rotation.is_unit() {
                rotation = quaternion_normalize(&rotation).map_err(|_| Error::Schema("zero quaternion".into()))?;
            }
            let scale = Vec3::new(v[10].exp(), v[11].exp(), v[12].exp());
            if !scale.iter().all(|s| *s > 0.0 && s.is_finite()) {
                return Err(Error::Schema("scale out of range".into()));
            }
            Ok(GaussianPrimitive {
                mean: Vec3::new(v[0], v[1], v[2]),
                scale,
                rotation,
                opacity: logit_to_opacity(v[9]),
                color: Vec3::new(v[6], v[7], v[8]).map(|f| sh_dc_to_rgb(f).clamp(0.0, 1.0)),
            })
        })
        .collect()
}

pub fn read_gaussians_3dgs_ply(path: impl AsRef<Path>) -> Result<Vec<GaussianPrimitive>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_gaussians(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample(opacity: f64, color: f64, scale: f64) -> GaussianPrimitive {
        GaussianPrimitive {
            mean: Vec3::new(1.0, 2.0, 3.0),
            scale: Vec3::repeat(scale),
            rotation: Quat::IDENTITY,
            opacity,
            color: Vec3::repeat(color),
        }
    }

    fn raw_rows(bytes: &[u8]) -> Vec<Vec<f64>> {
        let data = ply::read_ply(&mut Cursor::new(bytes)).unwrap();
        data.elements[0].iter().map(|r| r.iter().map(|v| v.scalar().unwrap()).collect()).collect()
    }

    #[test]
    fn header_golden() {
        let mut bytes = Vec::new();
        write_gaussians(&[sample(0.5, 0.5, 1.0)], &mut bytes).unwrap();
        let golden = "ply\nformat binary_little_endian 1.0\nelement vertex 1\n\
            property float x\nproperty float y\nproperty float z\n\
            property float nx\nproperty float ny\nproperty float nz\n\
            property float f_dc_0\nproperty float f_dc_1\nproperty float f_dc_2\n\
            property float opacity\n\
            property float scale_0\nproperty float scale_1\nproperty float scale_2\n\
            property float rot_0\nproperty float rot_1\nproperty float rot_2\nproperty float rot_3\n\
            end_header\n";
        assert_eq!(&bytes[..golden.len()], golden.as_bytes());
        assert_eq!(bytes.len(), golden.len() + 17 * 4);
    }

    #[test]
    fn stored_encodings() {
        let mut bytes = Vec::new();
        write_gaussians(&[sample(0.5, 0.5, 1.0)], &mut bytes).unwrap();
        let row = &raw_rows(&bytes)[0];
        assert_eq!(&row[..3], &[1.0, 2.0, 3.0]);
        assert_eq!(&row[3..9], &[0.0; 6]);
        assert_eq!(row[9], 0.0);
        assert_eq!(&row[10..13], &[0.0; 3]);
        assert_eq!(&row[13..], &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn opacity_clamped_before_logit() {
        assert!(opacity_to_logit(0.0).is_finite());
        assert!(opacity_to_logit(1.0).is_finite());
        assert_eq!(opacity_to_logit(0.0), opacity_to_logit(OPACITY_CLAMP));
        let mut bytes = Vec::new();
        write_gaussians(&[sample(0.0, 0.5, 1.0)], &mut bytes).unwrap();
        let back = read_gaussians(&mut Cursor::new(&bytes)).unwrap();
        assert!((back[0].opacity - OPACITY_CLAMP).abs() < 1e-9);
    }

    #[test]
    fn unnormalized_quaternion_is_normalized_on_read() {
        let mut bytes = Vec::new();
        let mut g = sample(0.5, 0.5, 1.0);
        g.rotation = Quat::new(2.0, 0.0, 0.0, 0.0);
        write_gaussians(&[g], &mut bytes).unwrap();
        let back = read_gaussians(&mut Cursor::new(&bytes)).unwrap();
        assert_eq!(back[0].rotation, Quat::IDENTITY);
    }

    #[test]
    fn truncated_payload_fails() {
        let mut bytes = Vec::new();
        write_gaussians(&[sample(0.5, 0.5, 1.0), sample(0.3, 0.1, 2.0)], &mut bytes).unwrap();
        bytes.pop();
        assert!(matches!(read_gaussians(&mut Cursor::new(&bytes)), Err(Error::Parse { .. })));
    }

    #[test]
    fn foreign_layout_is_schema_error() {
        let src = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        assert!(matches!(read_gaussians(&mut Cursor::new(src)), Err(Error::Schema(_))));
    }
}
