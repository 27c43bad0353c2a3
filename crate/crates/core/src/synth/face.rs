use blan_autograd::Tensor;
use rand::Rng;

use crate::seed;

/// Semantic label of a rendered pixel. Labels are exclusive, so the cosmetic
/// masks derived from them are disjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    Background,
    Hair,
    Skin,
    Eyes,
    Brows,
    Lips,
    Occluder,
}

type Rgb = [f64; 3];

/// Face geometry and colours in canonical coordinates: `u` runs from −0.5
/// (left edge) to 0.5 (right edge) through the face's mirror axis, `v` from
/// 0 (top) to 1 (bottom).
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticIdentity {
    pub id: u32,
    pub geometry_seed: u64,
    pub skin: Rgb,
    pub hair: Rgb,
    pub background: Rgb,
    pub iris: Rgb,
    pub lip: Rgb,
    pub face_rx: f64,
    pub face_ry: f64,
    pub face_cy: f64,
    pub hairline: f64,
    /// Horizontal distance of each eye centre from the axis.
    pub eye_dx: f64,
    pub eye_y: f64,
    pub eye_rx: f64,
    pub eye_ry: f64,
    pub brow_gap: f64,
    pub brow_len: f64,
    pub brow_thick: f64,
    pub brow_tilt: f64,
    pub nose_len: f64,
    pub lip_y: f64,
    pub lip_w: f64,
    pub lip_h: f64,
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

fn jitter(c: Rgb, amount: f64, rng: &mut impl Rng) -> Rgb {
    c.map(|v| (v + rng.random_range(-amount..=amount)).clamp(0.0, 1.0))
}

impl SyntheticIdentity {
    /// Draws an identity; `(id, geometry_seed)` fixes every field.
    pub fn generate(id: u32, geometry_seed: u64) -> Self {
        let mut rng = seed::rng(geometry_seed, &[id as u64]);
        let r = &mut rng;
        let tone = r.random_range(0.0..1.0);
        let skin = jitter(lerp([0.96, 0.80, 0.70], [0.42, 0.28, 0.20], tone), 0.04, r);
        let hair_t = r.random_range(0.0..1.0);
        let hair = jitter(lerp([0.08, 0.06, 0.05], [0.55, 0.38, 0.20], hair_t), 0.04, r);
        let background = [r.random_range(0.2..0.8), r.random_range(0.2..0.8), r.random_range(0.2..0.8)];
        let irises = [[0.35, 0.22, 0.12], [0.25, 0.45, 0.70], [0.30, 0.50, 0.30], [0.15, 0.10, 0.08]];
        let iris = jitter(irises[r.random_range(0..irises.len())], 0.05, r);
        let lip = jitter([skin[0] * 0.85, skin[1] * 0.55, skin[2] * 0.58], 0.05, r);
        let face_rx = r.random_range(0.27..0.36);
        let face_ry = r.random_range(0.36..0.44);
        let face_cy = r.random_range(0.50..0.56);
        let eye_y = r.random_range(0.41..0.49);
        SyntheticIdentity {
            id,
            geometry_seed,
            skin,
            hair,
            background,
            iris,
            lip,
            face_rx,
            face_ry,
            face_cy,
            hairline: face_cy - face_ry + r.random_range(0.06..0.15),
            eye_dx: r.random_range(0.10..0.15),
            eye_y,
            eye_rx: r.random_range(0.045..0.065),
            eye_ry: r.random_range(0.020..0.032),
            brow_gap: r.random_range(0.05..0.08),
            brow_len: r.random_range(0.05..0.08),
            brow_thick: r.random_range(0.008..0.016),
            brow_tilt: r.random_range(-0.2..0.2),
            nose_len: r.random_range(0.12..0.18),
            lip_y: r.random_range(0.70..0.77),
            lip_w: r.random_range(0.07..0.11),
            lip_h: r.random_range(0.025..0.04),
        }
    }

    /// Colour and label at canonical point (u, v).
    fn shade(&self, u: f64, v: f64) -> (Rgb, Region) {
        let a = u.abs();
        let head = (u / (self.face_rx * 1.12)).powi(2) + ((v - self.face_cy + 0.03) / (self.face_ry * 1.1)).powi(2);
        let face = (u / self.face_rx).powi(2) + ((v - self.face_cy) / self.face_ry).powi(2);
        let mut out = (self.background.map(|c| c * (0.9 + 0.2 * v)), Region::Background);
        if head <= 1.0 && v < self.face_cy {
            out = (self.hair, Region::Hair);
        }
        if face > 1.0 || v < self.hairline {
            return out;
        }
        let shadow = 1.0 - 0.18 * face;
        out = (self.skin.map(|c| c * shadow), Region::Skin);

        if a < 0.012 && v > self.eye_y + 0.04 && v < self.eye_y + self.nose_len {
            out = (self.skin.map(|c| c * 0.82), Region::Skin);
        }

        let (ex, ey) = ((a - self.eye_dx) / self.eye_rx, (v - self.eye_y) / self.eye_ry);
        let socket = (ex / 1.6).powi(2) + ((v - self.eye_y + 0.006) / (self.eye_ry * 2.2)).powi(2);
        if socket <= 1.0 {
            out = (self.skin.map(|c| c * 0.9), Region::Eyes);
        }
        if ex * ex + ey * ey <= 1.0 {
            let d = ((a - self.eye_dx).powi(2) + (v - self.eye_y).powi(2)).sqrt();
            let iris_r = self.eye_ry * 0.9;
            let c = if d < iris_r * 0.45 {
                [0.03, 0.03, 0.03]
            } else if d < iris_r {
                self.iris
            } else {
                [0.94, 0.94, 0.92]
            };
            out = (c, Region::Eyes);
        }

        // brow: a tilted bar above each eye; tilt mirrors with |u|
        let (bx, by) = (a - self.eye_dx, v - (self.eye_y - self.brow_gap));
        let (s, c) = self.brow_tilt.sin_cos();
        let along = bx * c + by * s;
        let across = -bx * s + by * c;
        if (along / self.brow_len).powi(2) + (across / self.brow_thick).powi(4) <= 1.0 {
            out = (self.hair.map(|c| c * 0.85), Region::Brows);
        }

        let lip = (u / self.lip_w).powi(2) + ((v - self.lip_y) / self.lip_h).powi(2);
        if lip <= 1.0 {
            let c = if (v - self.lip_y).abs() < self.lip_h * 0.18 {
                self.lip.map(|c| c * 0.6)
            } else {
                self.lip
            };
            out = (c, Region::Lips);
        }
        out
    }
}

/// Pose jitter and optional occlusion applied at render time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Nuisance {
    /// Translation in pixels.
    pub shift_x: f64,
    pub shift_y: f64,
    /// Rotation about the image centre.
    pub rotation_deg: f64,
    pub occlusion: Option<Occlusion>,
}

/// Axis-aligned rectangle in image fractions, drawn over the face.
#[derive(Clone, Debug, PartialEq)]
pub struct Occlusion {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub color: [f64; 3],
}

/// Ranges of the random nuisance.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceConfig {
    pub max_shift_px: f64,
    pub max_rotation_deg: f64,
    pub occlusion_prob: f64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            max_shift_px: 2.0,
            max_rotation_deg: 3.0,
            occlusion_prob: 0.1,
        }
    }
}

impl NuisanceConfig {
    pub fn none() -> Self {
        NuisanceConfig {
            max_shift_px: 0.0,
            max_rotation_deg: 0.0,
            occlusion_prob: 0.0,
        }
    }
}

impl Nuisance {
    pub fn sample(cfg: &NuisanceConfig, rng: &mut impl Rng) -> Self {
        let sym = |r: &mut dyn rand::RngCore, m: f64| if m > 0.0 { r.random_range(-m..=m) } else { 0.0 };
        let shift_x = sym(rng, cfg.max_shift_px);
        let shift_y = sym(rng, cfg.max_shift_px);
        let rotation_deg = sym(rng, cfg.max_rotation_deg);
        let occlusion = (cfg.occlusion_prob > 0.0 && rng.random_bool(cfg.occlusion_prob.min(1.0))).then(|| {
            let w = rng.random_range(0.15..0.3);
            let h = rng.random_range(0.15..0.3);
            let x0 = rng.random_range(0.1..0.9 - w);
            let y0 = rng.random_range(0.2..0.9 - h);
            let g = rng.random_range(0.1..0.9);
            Occlusion {
                x0,
                y0,
                x1: x0 + w,
                y1: y0 + h,
                color: [g, g * 0.95, g * 0.9],
            }
        });
        Nuisance {
            shift_x,
            shift_y,
            rotation_deg,
            occlusion,
        }
    }
}

/// A rendered face and its per-pixel labels (row-major, `size × size`).
#[derive(Clone, Debug, PartialEq)]
pub struct Rendering {
    pub image: Tensor<f32>,
    pub regions: Vec<Region>,
}

/// Sub-pixel sample offsets; symmetric so an unjittered face mirrors exactly.
const SUB: [f64; 3] = [-1.0 / 3.0, 0.0, 1.0 / 3.0];

/// Renders `identity` as a `[3, size, size]` image in [−1, 1].
pub fn render_identity(identity: &SyntheticIdentity, nuisance: &Nuisance, size: usize) -> Rendering {
    let n = size as f64;
    let (s, c) = (-nuisance.rotation_deg.to_radians()).sin_cos();
    let to_canonical = |x: f64, y: f64| {
        // pixel centre coordinates relative to the image centre, undo jitter
        let dx = x - n / 2.0 - nuisance.shift_x;
        let dy = y - n / 2.0 - nuisance.shift_y;
        let (rx, ry) = (c * dx - s * dy, s * dx + c * dy);
        (rx / n, ry / n + 0.5)
    };
    let mut data = vec![0f32; 3 * size * size];
    let mut regions = vec![Region::Background; size * size];
    let plane = size * size;
    for i in 0..size {
        for j in 0..size {
            let mut acc = [0.0; 3];
            for oy in SUB {
                for ox in SUB {
                    let (u, v) = to_canonical(j as f64 + 0.5 + ox, i as f64 + 0.5 + oy);
                    let (rgb, _) = identity.shade(u, v);
                    for k in 0..3 {
                        acc[k] += rgb[k];
                    }
                }
            }
            let (u, v) = to_canonical(j as f64 + 0.5, i as f64 + 0.5);
            let mut region = identity.shade(u, v).1;
            let mut rgb = acc.map(|a| a / 9.0);
            if let Some(o) = &nuisance.occlusion {
                let (fx, fy) = ((j as f64 + 0.5) / n, (i as f64 + 0.5) / n);
                if fx >= o.x0 && fx < o.x1 && fy >= o.y0 && fy < o.y1 {
                    rgb = o.color;
                    region = Region::Occluder;
                }
            }
            for k in 0..3 {
                data[k * plane + i * size + j] = (rgb[k].clamp(0.0, 1.0) * 2.0 - 1.0) as f32;
            }
            regions[i * size + j] = region;
        }
    }
    Rendering {
        image: Tensor::from_vec(vec![3, size, size], data).expect("shape matches data"),
        regions,
    }
}
