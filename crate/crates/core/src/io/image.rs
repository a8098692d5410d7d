//! Binary PPM (P6, 8-bit) images.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::ImageBuffer;

pub fn encode_ppm(image: &ImageBuffer, out: &mut impl Write) -> std::io::Result<()> {
    write!(out, "P6\n{} {}\n255\n", image.width, image.height)?;
    let bytes: Vec<u8> = image
        .pixels
        .iter()
        .flatten()
        .map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)
}

pub fn write_ppm(image: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    encode_ppm(image, &mut out).and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

fn header_token(reader: &mut impl BufRead) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte).map_err(|e| Error::parse(0, e.to_string()))? == 0 {
            return Err(Error::parse(0, "unexpected end of PPM header"));
        }
        match byte[0] {
            b'#' if token.is_empty() => {
                let mut skip = String::new();
                reader.read_line(&mut skip).map_err(|e| Error::parse(0, e.to_string()))?;
            }
            b if b.is_ascii_whitespace() => {
                if !token.is_empty() {
                    return Ok(token);
                }
            }
            b => token.push(b as char),
        }
    }
}

pub fn decode_ppm(reader: &mut impl BufRead) -> Result<ImageBuffer> {
    if header_token(reader)? != "P6" {
        return Err(Error::parse(0, "only binary P6 PPM is supported"));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let tok = header_token(reader)?;
        *d = tok.parse().map_err(|_| Error::parse(0, format!("bad PPM header value '{tok}'")))?;
    }
    let [width, height, maxval] = dims;
    if maxval != 255 {
        return Err(Error::parse(0, format!("unsupported PPM maxval {maxval}")));
    }
    let mut bytes = vec![0u8; width * height * 3];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| Error::parse(0, "truncated PPM payload"))?;
    let pixels = bytes
        .chunks_exact(3)
        .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
        .collect();
    ImageBuffer::from_pixels(width, height, pixels)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&mut BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn ppm_round_trip_is_8_bit() {
        let img = ImageBuffer::from_pixels(2, 1, vec![[0.0, 0.5, 1.0], [0.25, 0.75, 0.1]]).unwrap();
        let mut bytes = Vec::new();
        encode_ppm(&img, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        let back = decode_ppm(&mut Cursor::new(&bytes)).unwrap();
        for (a, b) in img.pixels.iter().flatten().zip(back.pixels.iter().flatten()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn header_comments_and_truncation() {
        let mut bytes = b"P6\n# made by hand\n1 1\n255\n".to_vec();
        bytes.extend([255, 0, 0]);
        assert_eq!(decode_ppm(&mut Cursor::new(&bytes)).unwrap().get(0, 0), [1.0, 0.0, 0.0]);
        bytes.pop();
        assert!(decode_ppm(&mut Cursor::new(&bytes)).is_err());
    }
}
