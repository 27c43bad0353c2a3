use blan_autograd::Tensor;
use rand::Rng;

use super::face::Region;

/// Parametric cosmetics. Shifts are in image units ([−1, 1] range); radii and
/// sigmas in pixels. All-zero parameters leave an image untouched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MakeupParams {
    /// RGB shift on lip pixels.
    pub lip_tint: [f64; 3],
    /// Fraction in [0, 1) by which eye-region brightness is scaled down.
    pub eye_darkening: f64,
    /// Skin within this distance of a brow takes the brow colour.
    pub brow_radius: f64,
    /// Gaussian smoothing of skin.
    pub blur_sigma: f64,
    /// RGB shift on skin pixels.
    pub foundation: [f64; 3],
}

impl MakeupParams {
    pub fn none() -> Self {
        Self::default()
    }

    /// Random cosmetics scaled by `strength`; pixel quantities follow `size`.
    pub fn sample(strength: f64, size: usize, rng: &mut impl Rng) -> Self {
        const LIPSTICKS: [[f64; 3]; 4] = [
            [0.45, -0.30, -0.15],
            [0.35, -0.15, 0.10],
            [0.10, -0.35, 0.05],
            [0.40, 0.00, -0.25],
        ];
        let px = size as f64 / 64.0;
        let tint = LIPSTICKS[rng.random_range(0..LIPSTICKS.len())];
        let t = rng.random_range(0.9..1.3) * strength;
        let base = rng.random_range(0.18..0.38) * strength;
        let warm = rng.random_range(-0.05..0.05) * strength;
        MakeupParams {
            lip_tint: tint.map(|c| c * t),
            eye_darkening: (rng.random_range(0.45..0.75) * strength).min(0.95),
            brow_radius: rng.random_range(1.0..2.5) * strength * px,
            blur_sigma: rng.random_range(0.8..1.5) * strength * px,
            foundation: [base + warm, base, base - warm],
        }
    }

    pub fn is_none(&self) -> bool {
        *self == Self::none()
    }
}

/// Applies `params` to a `[3, h, w]` image with matching `regions`.
///
/// Order: foundation and smoothing on skin, brow thickening into adjacent
/// skin, eye darkening, lip tint. Every modified value is clamped to [−1, 1].
pub fn apply_makeup(image: &Tensor<f32>, regions: &[Region], params: &MakeupParams) -> Tensor<f32> {
    let shape = image.shape();
    assert!(
        shape.len() == 3 && shape[0] == 3 && regions.len() == shape[1] * shape[2],
        "image {shape:?} does not match {} region labels",
        regions.len()
    );
    let (h, w) = (shape[1], shape[2]);
    let plane = h * w;
    let mut out = image.clone();
    let clamp = |v: f64| v.clamp(-1.0, 1.0) as f32;

    if params.foundation != [0.0; 3] {
        let d = out.data_mut();
        for (p, r) in regions.iter().enumerate() {
            if *r == Region::Skin {
                for k in 0..3 {
                    d[k * plane + p] = clamp(d[k * plane + p] as f64 + params.foundation[k]);
                }
            }
        }
    }

    if params.blur_sigma > 0.0 {
        let smoothed = masked_blur(out.data(), regions, h, w, params.blur_sigma);
        let d = out.data_mut();
        for (p, r) in regions.iter().enumerate() {
            if *r == Region::Skin {
                for k in 0..3 {
                    d[k * plane + p] = clamp(smoothed[k * plane + p]);
                }
            }
        }
    }

    if params.brow_radius > 0.0 {
        thicken_brows(out.data_mut(), regions, h, w, params.brow_radius);
    }

    if params.eye_darkening != 0.0 {
        let keep = 1.0 - params.eye_darkening;
        let d = out.data_mut();
        for (p, r) in regions.iter().enumerate() {
            if *r == Region::Eyes {
                for k in 0..3 {
                    d[k * plane + p] = clamp((d[k * plane + p] as f64 + 1.0) * keep - 1.0);
                }
            }
        }
    }

    if params.lip_tint != [0.0; 3] {
        let d = out.data_mut();
        for (p, r) in regions.iter().enumerate() {
            if *r == Region::Lips {
                for k in 0..3 {
                    d[k * plane + p] = clamp(d[k * plane + p] as f64 + params.lip_tint[k]);
                }
            }
        }
    }
    out
}

/// Gaussian blur that averages over skin pixels only, so no colour bleeds in
/// from features or background.
fn masked_blur(data: &[f32], regions: &[Region], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let plane = h * w;
    let skin: Vec<f64> = regions.iter().map(|r| (*r == Region::Skin) as u8 as f64).collect();
    // separable: rows then columns, carrying the mask weight alongside
    let pass = |src: &[f64], wsrc: &[f64], horizontal: bool| -> (Vec<f64>, Vec<f64>) {
        let mut dst = vec![0.0; src.len()];
        let mut wdst = vec![0.0; wsrc.len()];
        for i in 0..h {
            for j in 0..w {
                let (mut acc, mut wacc) = ([0.0; 3], 0.0);
                for (t, kv) in (-radius..=radius).zip(&kernel) {
                    let (ii, jj) = if horizontal {
                        (i as isize, j as isize + t)
                    } else {
                        (i as isize + t, j as isize)
                    };
                    if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                        continue;
                    }
                    let q = ii as usize * w + jj as usize;
                    let m = kv * wsrc[q];
                    wacc += m;
                    for k in 0..3 {
                        acc[k] += kv * src[k * plane + q];
                    }
                }
                let p = i * w + j;
                wdst[p] = wacc;
                for k in 0..3 {
                    dst[k * plane + p] = acc[k];
                }
            }
        }
        (dst, wdst)
    };
    let pre: Vec<f64> = (0..3 * plane).map(|x| data[x] as f64 * skin[x % plane]).collect();
    let (rows, wrows) = pass(&pre, &skin, true);
    let (cols, wcols) = pass(&rows, &wrows, false);
    (0..3 * plane)
        .map(|x| {
            let wt = wcols[x % plane];
            if wt > 0.0 {
                cols[x] / wt
            } else {
                data[x] as f64
            }
        })
        .collect()
}

fn thicken_brows(data: &mut [f32], regions: &[Region], h: usize, w: usize, radius: f64) {
    let plane = h * w;
    let brows: Vec<usize> = (0..plane).filter(|&p| regions[p] == Region::Brows).collect();
    if brows.is_empty() {
        return;
    }
    let mut color = [0.0f64; 3];
    for &p in &brows {
        for k in 0..3 {
            color[k] += data[k * plane + p] as f64;
        }
    }
    let color = color.map(|c| (c / brows.len() as f64) as f32);
    let r = radius.ceil() as isize;
    let mut grow = vec![false; plane];
    for &p in &brows {
        let (i, j) = ((p / w) as isize, (p % w) as isize);
        for di in -r..=r {
            for dj in -r..=r {
                let (ii, jj) = (i + di, j + dj);
                if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                    continue;
                }
                if ((di * di + dj * dj) as f64).sqrt() <= radius {
                    grow[ii as usize * w + jj as usize] = true;
                }
            }
        }
    }
    for p in 0..plane {
        if grow[p] && regions[p] == Region::Skin {
            for k in 0..3 {
                data[k * plane + p] = color[k];
            }
        }
    }
}
