use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{DisparityMap, Image};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SceneKind {
    /// One fronto-parallel textured plane at disparity `k`.
    Shift { k: f64 },
    /// One plane whose disparity grows linearly from `d0` at the left edge
    /// to `d1` at the right edge.
    Slanted { d0: f64, d1: f64 },
    /// Slanted background with several foreground objects, a low-texture
    /// object and a reflective-analogue patch.
    Layered { objects: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub d_max: usize,
    pub channels: usize,
    pub seed: u64,
    pub kind: SceneKind,
    /// Standard deviation of the Gaussian noise added to both views.
    pub noise: f64,
    /// Constant brightness offset of the right view.
    pub brightness: f64,
}

impl SceneSpec {
    pub fn layered(height: usize, width: usize, d_max: usize, seed: u64) -> Self {
        SceneSpec {
            height,
            width,
            d_max,
            channels: 1,
            seed,
            kind: SceneKind::Layered { objects: 4 },
            noise: 0.01,
            brightness: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub left: Image,
    pub right: Image,
    /// Real-valued disparity of every left pixel.
    pub gt: DisparityMap,
    /// Left pixels whose match is hidden behind a nearer surface.
    pub occluded: Vec<bool>,
    /// Left pixels inside the reflective-analogue region.
    pub reflective: Vec<bool>,
}

/// Smooth random texture: value noise over several octaves plus a few
/// oriented sinusoids, roughly in `[0, 1]`.
#[derive(Clone, Debug)]
struct Texture {
    lattice: Vec<f64>,
    period: usize,
    octaves: Vec<(f64, f64)>,
    waves: Vec<(f64, f64, f64, f64)>,
    mean: f64,
    contrast: f64,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng, contrast: f64) -> Self {
        let period = 64;
        Texture {
            lattice: (0..period * period).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            period,
            octaves: vec![(0.5, 0.45), (0.25, 0.3), (0.12, 0.2)],
            waves: (0..2)
                .map(|_| {
                    let a = rng.gen_range(0.0..std::f64::consts::PI);
                    let f = rng.gen_range(0.15..0.6);
                    (
                        f * a.cos(),
                        f * a.sin(),
                        rng.gen_range(0.0..6.3),
                        rng.gen_range(0.05..0.15),
                    )
                })
                .collect(),
            mean: rng.gen_range(0.35..0.65),
            contrast,
        }
    }

    fn lattice(&self, i: i64, j: i64) -> f64 {
        let p = self.period as i64;
        self.lattice[(i.rem_euclid(p) * p + j.rem_euclid(p)) as usize]
    }

    fn noise(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let s = |t: f64| t * t * (3.0 - 2.0 * t);
        let (sx, sy) = (s(fx), s(fy));
        let (i, j) = (y0 as i64, x0 as i64);
        let a = self.lattice(i, j) * (1.0 - sx) + self.lattice(i, j + 1) * sx;
        let b = self.lattice(i + 1, j) * (1.0 - sx) + self.lattice(i + 1, j + 1) * sx;
        a * (1.0 - sy) + b * sy
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let mut v = 0.0;
        for (k, (f, amp)) in self.octaves.iter().enumerate() {
            v += amp * self.noise(x * f + 17.0 * k as f64, y * f + 31.0 * k as f64);
        }
        for (fx, fy, ph, amp) in &self.waves {
            v += amp * (fx * x + fy * y + ph).sin();
        }
        self.mean + self.contrast * 0.5 * v
    }
}

/// A surface with disparity `a + b·x + c·y` (left-view coordinates) over a
/// region of the left view.
#[derive(Clone, Debug)]
struct Layer {
    a: f64,
    b: f64,
    c: f64,
    region: Region,
    textures: Vec<Texture>,
}

#[derive(Clone, Copy, Debug)]
enum Region {
    All,
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl Region {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Region::All => true,
            Region::Rect { x0, x1, y0, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Region::Ellipse { cx, cy, rx, ry } => {
                let (u, v) = ((x - cx) / rx, (y - cy) / ry);
                u * u + v * v <= 1.0
            }
        }
    }
}

impl Layer {
    fn disparity(&self, x: f64, y: f64) -> f64 {
        self.a + self.b * x + self.c * y
    }

    /// Left-view x seen at right-view `xr` on row `y`.
    fn left_x(&self, xr: f64, y: f64) -> f64 {
        (xr + self.a + self.c * y) / (1.0 - self.b)
    }
}

struct Scene {
    layers: Vec<Layer>,
    /// Region (left view) whose right-view appearance uses other textures.
    mirror: Option<(usize, Region, Vec<Texture>)>,
}

impl Scene {
    /// Nearest layer covering right-view position `(xr, y)`, with the
    /// left-view x it corresponds to.
    fn right_hit(&self, xr: f64, y: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, l) in self.layers.iter().enumerate() {
            let x = l.left_x(xr, y);
            if !l.region.contains(x, y) {
                continue;
            }
            let d = l.disparity(x, y);
            if best.is_none_or(|(_, _, bd)| d > bd) {
                best = Some((i, x, d));
            }
        }
        best.map(|(i, x, _)| (i, x))
    }

    /// Nearest layer covering left-view `(x, y)`.
    fn left_hit(&self, x: f64, y: f64) -> usize {
        let mut best = 0;
        let mut bd = f64::NEG_INFINITY;
        for (i, l) in self.layers.iter().enumerate() {
            if l.region.contains(x, y) && l.disparity(x, y) > bd {
                best = i;
                bd = l.disparity(x, y);
            }
        }
        best
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn textures(rng: &mut ChaCha8Rng, channels: usize, contrast: f64) -> Vec<Texture> {
    (0..channels).map(|_| Texture::new(rng, contrast)).collect()
}

fn build(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Scene {
    let (w, h, dm) = (spec.width as f64, spec.height as f64, spec.d_max as f64);
    let ch = spec.channels;
    let plane = |a: f64, b: f64, c: f64, region: Region, rng: &mut ChaCha8Rng, contrast: f64| Layer {
        a,
        b,
        c,
        region,
        textures: textures(rng, ch, contrast),
    };
    match spec.kind {
        SceneKind::Shift { k } => Scene {
            layers: vec![plane(k, 0.0, 0.0, Region::All, rng, 1.0)],
            mirror: None,
        },
        SceneKind::Slanted { d0, d1 } => {
            let b = (d1 - d0) / (w - 1.0).max(1.0);
            Scene {
                layers: vec![plane(d0, b, 0.0, Region::All, rng, 1.0)],
                mirror: None,
            }
        }
        SceneKind::Layered { objects } => {
            // background: gentle slant within the lower third of the range
            let lo = rng.gen_range(1.0..(dm * 0.15).max(1.5));
            let hi = rng.gen_range(lo..(dm * 0.35).max(lo + 0.5));
            let b = (hi - lo) / w;
            let c = rng.gen_range(-0.5..0.5) * (hi - lo) / h;
            let mut layers = vec![plane(lo - c.min(0.0) * h, b, c, Region::All, rng, 1.0)];
            for o in 0..objects {
                let rx = rng.gen_range(0.1..0.22) * w;
                let ry = rng.gen_range(0.15..0.3) * h;
                let cx = rng.gen_range(0.15..0.9) * w;
                let cy = rng.gen_range(0.2..0.8) * h;
                let region = if o % 2 == 0 {
                    Region::Rect {
                        x0: cx - rx,
                        x1: cx + rx,
                        y0: cy - ry,
                        y1: cy + ry,
                    }
                } else {
                    Region::Ellipse { cx, cy, rx, ry }
                };
                let d = rng.gen_range(dm * 0.4..dm * 0.9);
                let slope = if o % 3 == 1 { rng.gen_range(-0.05..0.05) } else { 0.0 };
                // the second object is nearly textureless
                let contrast = if o == 1 { 0.04 } else { 1.0 };
                let a = d - slope * cx;
                layers.push(plane(a, slope, 0.0, region, rng, contrast));
            }
            let mirror = (objects > 0).then(|| {
                let host = layers.len() - 1;
                let region = match layers[host].region {
                    Region::Rect { x0, x1, y0, y1 } => Region::Rect {
                        x0,
                        x1: x0 + (x1 - x0) * 0.6,
                        y0,
                        y1: y0 + (y1 - y0) * 0.6,
                    },
                    Region::Ellipse { cx, cy, rx, ry } => Region::Ellipse {
                        cx,
                        cy,
                        rx: rx * 0.6,
                        ry: ry * 0.6,
                    },
                    Region::All => Region::All,
                };
                (host, region, textures(rng, ch, 1.0))
            });
            Scene { layers, mirror }
        }
    }
}

/// Render a scene; deterministic for a given spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    if spec.d_max < 2 {
        return Err(Error::Config("d_max must be at least 2".into()));
    }
    if spec.channels != 1 && spec.channels != 3 {
        return Err(Error::Config("scenes have 1 or 3 channels".into()));
    }
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::Config("empty scene".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scene = build(spec, &mut rng);
    let (h, w, ch) = (spec.height, spec.width, spec.channels);
    let limit = spec.d_max as f64 - 1.0;
    let mut left = Image::zeros(ch, h, w);
    let mut right = Image::zeros(ch, h, w);
    let mut gt = vec![0.0; h * w];
    let mut occluded = vec![false; h * w];
    let mut reflective = vec![false; h * w];
    for y in 0..h {
        let fy = y as f64;
        for x in 0..w {
            let fx = x as f64;
            let li = scene.left_hit(fx, fy);
            let layer = &scene.layers[li];
            let d = layer.disparity(fx, fy).clamp(0.0, limit);
            gt[y * w + x] = d;
            for c in 0..ch {
                left.set(c, y, x, layer.textures[c].at(fx, fy));
            }
            occluded[y * w + x] = match scene.right_hit(fx - d, fy) {
                Some((ri, _)) => ri != li,
                None => true,
            };
            if let Some((host, region, _)) = &scene.mirror {
                reflective[y * w + x] = li == *host && region.contains(fx, fy);
            }
            if let Some((ri, lx)) = scene.right_hit(fx, fy) {
                let rl = &scene.layers[ri];
                let tex = match &scene.mirror {
                    Some((host, region, alt)) if ri == *host && region.contains(lx, fy) => alt,
                    _ => &rl.textures,
                };
                for c in 0..ch {
                    right.set(c, y, x, tex[c].at(lx, fy));
                }
            } else {
                // nothing maps here; use the background texture
                for c in 0..ch {
                    right.set(c, y, x, scene.layers[0].textures[c].at(fx, fy));
                }
            }
        }
    }
    for v in left.data.iter_mut() {
        *v = (*v + spec.noise * gaussian(&mut rng)).clamp(0.0, 1.0);
    }
    for v in right.data.iter_mut() {
        *v = (*v + spec.brightness + spec.noise * gaussian(&mut rng)).clamp(0.0, 1.0);
    }
    Ok(SyntheticScene {
        left,
        right,
        gt: DisparityMap::from_values(h, w, gt)?,
        occluded,
        reflective,
    })
}
