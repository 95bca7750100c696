//! Binary PPM (P6) and PGM (P5) readers/writers at maxval 255. Values
//! map to [0, 1] tensors of shape (1, 3, H, W) / (1, 1, H, W).

use std::io::{Read, Write};
use std::path::Path;

use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use crate::{Error, Result};

fn read_header_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    // Skip whitespace and '#' comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated image header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_netpbm<T: Scalar>(bytes: &[u8], magic: &str, channels: usize) -> Result<Tensor<T>> {
    let mut pos = 0usize;
    let m = read_header_token(bytes, &mut pos)?;
    if m != magic {
        return Err(Error::Format(format!("expected {magic} image, found `{m}`")));
    }
    let w: usize = read_header_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad image width".into()))?;
    let h: usize = read_header_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad image height".into()))?;
    let maxval: usize = read_header_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad maxval".into()))?;
    if maxval != 255 {
        return Err(Error::Format(format!("only maxval 255 is supported, found {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    let need = w * h * channels;
    if bytes.len() < pos + need {
        return Err(Error::Format(format!(
            "image payload truncated: need {need} bytes, have {}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let payload = &bytes[pos..pos + need];
    // Interleaved rows to planar channels.
    let mut data = vec![T::zero(); need];
    let hw = h * w;
    for (i, &b) in payload.iter().enumerate() {
        let c = i % channels;
        let pix = i / channels;
        data[c * hw + pix] = T::from_f64(b as f64 / 255.0);
    }
    Tensor::from_vec(Shape::new(1, channels, h, w), data)
}

fn encode_netpbm<T: Scalar>(img: &Tensor<T>, magic: &str, channels: usize) -> Result<Vec<u8>> {
    let s = img.shape();
    if s.n != 1 || s.c != channels {
        return Err(Error::shape(format!(
            "expected a single {channels}-channel image, got {s}"
        )));
    }
    let mut out = format!("{magic}\n{} {}\n255\n", s.w, s.h).into_bytes();
    let hw = s.h * s.w;
    for pix in 0..hw {
        for c in 0..channels {
            let v = img.data()[c * hw + pix].as_f64().clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn read_ppm_bytes<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    parse_netpbm(bytes, "P6", 3)
}

pub fn read_pgm_bytes<T: Scalar>(bytes: &[u8]) -> Result<Tensor<T>> {
    parse_netpbm(bytes, "P5", 1)
}

pub fn write_ppm_bytes<T: Scalar>(img: &Tensor<T>) -> Result<Vec<u8>> {
    encode_netpbm(img, "P6", 3)
}

pub fn write_pgm_bytes<T: Scalar>(img: &Tensor<T>) -> Result<Vec<u8>> {
    encode_netpbm(img, "P5", 1)
}

pub fn load_image<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    match bytes.first() {
        Some(b'P') if bytes.get(1) == Some(&b'6') => read_ppm_bytes(&bytes),
        Some(b'P') if bytes.get(1) == Some(&b'5') => read_pgm_bytes(&bytes),
        _ => Err(Error::Format(format!("{} is not a P5/P6 image", path.display()))),
    }
}

pub fn save_ppm<T: Scalar>(path: &Path, img: &Tensor<T>) -> Result<()> {
    let bytes = write_ppm_bytes(img)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn save_pgm<T: Scalar>(path: &Path, img: &Tensor<T>) -> Result<()> {
    let bytes = write_pgm_bytes(img)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_preserves_quantized_values() {
        let data: Vec<f64> = (0..3 * 4 * 5).map(|i| (i % 256) as f64 / 255.0).collect();
        let img = Tensor::<f64>::from_vec(Shape::new(1, 3, 4, 5), data).unwrap();
        let bytes = write_ppm_bytes(&img).unwrap();
        let back: Tensor<f64> = read_ppm_bytes(&bytes).unwrap();
        assert_eq!(back.shape(), img.shape());
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 0.5 / 255.0);
        }
    }

    #[test]
    fn pgm_round_trip_and_header_comments() {
        let img = Tensor::<f64>::from_vec(
            Shape::new(1, 1, 2, 2),
            vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
        )
        .unwrap();
        let mut bytes = write_pgm_bytes(&img).unwrap();
        // Inject a comment line after the magic.
        let mut with_comment = b"P5\n# a comment\n".to_vec();
        with_comment.extend_from_slice(&bytes.split_off(3));
        let back: Tensor<f64> = read_pgm_bytes(&with_comment).unwrap();
        assert_eq!(back.shape(), img.shape());
    }

    #[test]
    fn malformed_headers_are_rejected() {
        assert!(read_ppm_bytes::<f64>(b"P5\n2 2\n255\n....").is_err());
        assert!(read_ppm_bytes::<f64>(b"P6\n2 2\n65535\n").is_err());
        assert!(read_ppm_bytes::<f64>(b"P6\n4 4\n255\nxx").is_err());
    }
}
