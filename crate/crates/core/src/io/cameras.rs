//! `cameras.txt`: one camera per line, `fx fy cx cy` followed by the 3×3
//! world-to-camera rotation (row-major) and the translation. A
//! `# resolution W H` comment fixes the image size; without it the size is
//! taken as twice the principal point.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{CameraView, Intrinsics, Mat3, Pose, Vec3};

pub fn format_cameras(cameras: &[CameraView]) -> String {
    let mut out = String::from("# fx fy cx cy r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz\n");
    if let Some(c) = cameras.first() {
        out.push_str(&format!("# resolution {} {}\n", c.width, c.height));
    }
    for c in cameras {
        let k = &c.intrinsics;
        let r = &c.pose.rotation;
        let t = &c.pose.translation;
        let mut fields = vec![k.fx, k.fy, k.cx, k.cy];
        for i in 0..3 {
            for j in 0..3 {
                fields.push(r[(i, j)]);
            }
        }
        fields.extend([t.x, t.y, t.z]);
        // `{:?}` prints the shortest string that parses back to the same f64.
        let line: Vec<String> = fields.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_cameras(text: &str) -> Result<Vec<CameraView>> {
    let mut resolution = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let parts: Vec<&str> = comment.split_whitespace().collect();
            if let ["resolution", w, h] = parts.as_slice() {
                let w = w.parse::<usize>().map_err(|_| Error::parse(line_no, "bad resolution width"))?;
                let h = h.parse::<usize>().map_err(|_| Error::parse(line_no, "bad resolution height"))?;
                resolution = Some((w, h));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let v = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::parse(line_no, format!("bad number '{t}'"))))
            .collect::<Result<Vec<f64>>>()?;
        if v.len() != 16 {
            return Err(Error::parse(line_no, format!("expected 16 values, got {}", v.len())));
        }
        let intrinsics = Intrinsics { fx: v[0], fy: v[1], cx: v[2], cy: v[3] };
        let rotation = Mat3::new(v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11], v[12]);
        let pose = Pose { rotation, translation: Vec3::new(v[13], v[14], v[15]) };
        let (w, h) = resolution.unwrap_or(((2.0 * v[2]).round() as usize, (2.0 * v[3]).round() as usize));
        let cam = CameraView::new(intrinsics, pose, w, h).map_err(|e| Error::parse(line_no, e.to_string()))?;
        out.push(cam);
    }
    Ok(out)
}

pub fn write_cameras(cameras: &[CameraView], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_cameras(cameras)).map_err(|e| Error::io(path, e))
}

pub fn read_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraView>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let pose = Pose::look_at(Vec3::new(0.1, 1.3, -0.7), Vec3::new(5.0, 1.0, 2.0), Vec3::new(0.0, 1.0, 0.0));
        let cam = CameraView::with_fov(pose, 64, 48, 90.0).unwrap();
        let text = format_cameras(&[cam.clone(), cam.clone()]);
        let back = parse_cameras(&text).unwrap();
        assert_eq!(back, vec![cam.clone(), cam]);
    }

    #[test]
    fn rejects_short_lines_and_bad_rotations() {
        assert!(matches!(parse_cameras("1 2 3\n"), Err(Error::Parse { line: 1, .. })));
        let bad = "# resolution 4 4\n1 1 2 2 2 0 0 0 1 0 0 0 1 0 0 0\n";
        assert!(matches!(parse_cameras(bad), Err(Error::Parse { line: 2, .. })));
    }
}
