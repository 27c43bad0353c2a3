//! Binary PPM (P6, maxval 255). A value v in [−1, 1] is stored as the byte
//! round((v + 1)·127.5) and read back as p/127.5 − 1.

use std::fs;
use std::path::Path;

use blan_autograd::Tensor;

use crate::error::{Error, Result};

pub fn encode(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::config(format!("PPM needs a [3, h, w] image, got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let plane = h * w;
    let d = image.data();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * plane);
    for p in 0..plane {
        for k in 0..3 {
            let v = d[k * plane + p] as f64;
            out.push(((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Tensor<f32>, String> {
    let mut at = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            match bytes.get(at) {
                Some(b'#') => {
                    while at < bytes.len() && bytes[at] != b'\n' {
                        at += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => at += 1,
                Some(_) => break,
                None => return Err("header ended early".into()),
            }
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..at]).into_owned())
    };
    let magic = token()?;
    if magic != "P6" {
        return Err(format!("expected magic P6, found {magic:?}"));
    }
    let mut dim = |what: &str| -> std::result::Result<usize, String> {
        let t = token()?;
        t.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| format!("bad {what} {t:?}"))
    };
    let w = dim("width")?;
    let h = dim("height")?;
    let maxval = dim("maxval")?;
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported (need 255)"));
    }
    // exactly one whitespace byte separates the header from the raster
    at += 1;
    let plane = h * w;
    let payload = bytes.get(at..).unwrap_or(&[]);
    if payload.len() < 3 * plane {
        return Err(format!(
            "payload truncated: {} bytes for {w}x{h} (need {})",
            payload.len(),
            3 * plane
        ));
    }
    let mut data = vec![0f32; 3 * plane];
    for p in 0..plane {
        for k in 0..3 {
            data[k * plane + p] = (payload[3 * p + k] as f64 / 127.5 - 1.0) as f32;
        }
    }
    Ok(Tensor::from_vec(vec![3, h, w], data).expect("shape matches data"))
}

pub fn write_image(path: &Path, image: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode(image)?).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::Image {
        path: path.to_path_buf(),
        reason,
    })
}
