//! Procedural multispectral scenes.
//!
//! A scene is a resolution-independent description: linear ramps over a
//! background, a stack of shapes painted on top, each filled with a mixture
//! of latent materials, sinusoidal textures, and smooth band-correlated
//! noise. Bands are linear mixes of the materials through a row-stochastic
//! matrix. Rendering evaluates the description at pixel centres in
//! normalized coordinates, so the same scene can be drawn at any size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::grid::RealGrid;

/// Number of latent materials mixed into the bands.
pub const MATERIALS: usize = 4;
/// Edge softness of painted shapes, in normalized units.
const EDGE: f64 = 0.004;
/// Value-noise lattice cells per unit length at the coarsest octave.
const NOISE_CELLS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, theta: f64 },
    Rect { cx: f64, cy: f64, hx: f64, hy: f64, theta: f64 },
}

impl Shape {
    /// Approximate signed distance, negative inside.
    fn distance(&self, u: f64, v: f64) -> f64 {
        let local = |cx: f64, cy: f64, theta: f64| {
            let (s, c) = theta.sin_cos();
            let (dx, dy) = (u - cx, v - cy);
            (c * dx + s * dy, -s * dx + c * dy)
        };
        match *self {
            Shape::Ellipse { cx, cy, rx, ry, theta } => {
                let (x, y) = local(cx, cy, theta);
                ((x / rx).hypot(y / ry) - 1.0) * rx.min(ry)
            }
            Shape::Rect { cx, cy, hx, hy, theta } => {
                let (x, y) = local(cx, cy, theta);
                (x.abs() - hx).max(y.abs() - hy)
            }
        }
    }

    fn coverage(&self, u: f64, v: f64) -> f64 {
        (0.5 - self.distance(u, v) / EDGE).clamp(0.0, 1.0)
    }
}

/// Sinusoidal texture on one latent material.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Texture {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: f64,
    material: usize,
}

impl Texture {
    fn value(&self, u: f64, v: f64) -> f64 {
        let arg = std::f64::consts::TAU * (self.fx * u + self.fy * v) + self.phase;
        self.amp * arg.sin()
    }
}

type Ramp = ((f64, f64), [f64; MATERIALS]);

fn ramp_at(&((dx, dy), _): &Ramp, u: f64, v: f64) -> f64 {
    dx * (u - 0.5) + dy * (v - 0.5)
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    shape: Shape,
    base: [f64; MATERIALS],
    ramp: Ramp,
    texture: Option<Texture>,
}

impl Layer {
    fn latent(&self, u: f64, v: f64) -> [f64; MATERIALS] {
        let t = ramp_at(&self.ramp, u, v);
        let mut out = [0.0; MATERIALS];
        for k in 0..MATERIALS {
            out[k] = self.base[k] + t * self.ramp.1[k];
        }
        if let Some(tex) = self.texture {
            out[tex.material] += tex.value(u, v);
        }
        out.map(|a| a.clamp(0.0, 1.0))
    }
}

/// Smooth lattice noise with values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
struct ValueNoise {
    cells: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cells: usize) -> Self {
        let n = cells + 1;
        Self {
            cells,
            lattice: (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let cells = self.cells;
        let n = cells + 1;
        let x = (u * cells as f64).clamp(0.0, cells as f64);
        let y = (v * cells as f64).clamp(0.0, cells as f64);
        let (i, j) = ((y as usize).min(cells - 1), (x as usize).min(cells - 1));
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (fy, fx) = (smooth(y - i as f64), smooth(x - j as f64));
        let l = &self.lattice;
        let top = l[i * n + j] * (1.0 - fx) + l[i * n + j + 1] * fx;
        let bottom = l[(i + 1) * n + j] * (1.0 - fx) + l[(i + 1) * n + j + 1] * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// How many primitives of each kind a scene contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SceneContent {
    /// Linear ramps added over the whole frame.
    pub gradients: usize,
    pub ellipses: usize,
    pub rectangles: usize,
    /// Sinusoidal textures, each attached to a painted shape while free ones
    /// remain, otherwise to the frame.
    pub textures: usize,
    /// Octaves of band-correlated value noise.
    pub noise: usize,
}

/// Everything needed to realize a scene. Geometry and materials are drawn
/// from `seed`; content counts and the mixing matrix are explicit.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    /// `(height, width)` of the rendered ground truth.
    pub size: (usize, usize),
    pub bands: usize,
    pub content: SceneContent,
    /// `bands x MATERIALS`, non-negative, rows summing to one.
    pub mixing: Vec<f64>,
}

impl SceneSpec {
    /// A square spec whose content counts and mixing matrix are also drawn
    /// from `seed`.
    pub fn random(seed: u64, size: usize, bands: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
        let content = SceneContent {
            gradients: rng.gen_range(1..3),
            ellipses: rng.gen_range(2..7),
            rectangles: rng.gen_range(2..7),
            textures: rng.gen_range(1..5),
            noise: rng.gen_range(1..3),
        };
        // each band draws mostly on one material, so bands are correlated
        // but not identical
        let mut mixing = Vec::with_capacity(bands * MATERIALS);
        for b in 0..bands {
            let mut row: [f64; MATERIALS] = std::array::from_fn(|_| rng.gen_range(0.05..0.5));
            row[b % MATERIALS] += rng.gen_range(0.5..1.5);
            let total: f64 = row.iter().sum();
            mixing.extend(row.iter().map(|w| w / total));
        }
        Self {
            seed,
            size: (size, size),
            bands,
            content,
            mixing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.size.0 == 0 || self.size.1 == 0 {
            return Err(Error::config("scene needs at least one band and a non-empty size"));
        }
        if self.mixing.len() != self.bands * MATERIALS {
            return Err(Error::config(format!(
                "mixing matrix must be {}x{MATERIALS}",
                self.bands
            )));
        }
        for row in self.mixing.chunks(MATERIALS) {
            if row.iter().any(|&w| !(w >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::config("mixing rows must be non-negative and sum to one"));
            }
        }
        Ok(())
    }
}

/// A realized scene description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    bands: usize,
    mixing: Vec<f64>,
    background: [f64; MATERIALS],
    gradients: Vec<Ramp>,
    layers: Vec<Layer>,
    frame_textures: Vec<Texture>,
    /// Per octave: a field shared by all bands and one field per band.
    noise: Vec<(ValueNoise, Vec<ValueNoise>)>,
    noise_amp: f64,
    /// Weight of the shared noise component.
    noise_corr: f64,
}

fn random_texture(rng: &mut ChaCha8Rng) -> Texture {
    let freq: f64 = rng.gen_range(3.0..20.0);
    let dir: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    Texture {
        fx: freq * dir.cos(),
        fy: freq * dir.sin(),
        phase: rng.gen_range(0.0..std::f64::consts::TAU),
        amp: rng.gen_range(0.05..0.25),
        material: rng.gen_range(0..MATERIALS),
    }
}

fn random_ramp(rng: &mut ChaCha8Rng) -> Ramp {
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    ((angle.cos(), angle.sin()), std::array::from_fn(|_| rng.gen_range(-0.4..0.4)))
}

impl Scene {
    pub fn new(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let c = spec.content;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let background = std::array::from_fn(|_| rng.gen_range(0.2..0.8));
        let gradients = (0..c.gradients).map(|_| random_ramp(&mut rng)).collect();
        let mut shapes = Vec::with_capacity(c.ellipses + c.rectangles);
        for _ in 0..c.ellipses {
            shapes.push(Shape::Ellipse {
                cx: rng.gen_range(0.0..1.0),
                cy: rng.gen_range(0.0..1.0),
                rx: rng.gen_range(0.04..0.3),
                ry: rng.gen_range(0.04..0.3),
                theta: rng.gen_range(0.0..std::f64::consts::PI),
            });
        }
        for _ in 0..c.rectangles {
            shapes.push(Shape::Rect {
                cx: rng.gen_range(0.0..1.0),
                cy: rng.gen_range(0.0..1.0),
                hx: rng.gen_range(0.03..0.25),
                hy: rng.gen_range(0.03..0.25),
                theta: rng.gen_range(0.0..std::f64::consts::PI),
            });
        }
        // painter's order is random, not grouped by shape type
        for i in (1..shapes.len()).rev() {
            shapes.swap(i, rng.gen_range(0..=i));
        }
        let mut layers: Vec<Layer> = shapes
            .into_iter()
            .map(|shape| Layer {
                shape,
                base: std::array::from_fn(|_| rng.gen_range(0.05..0.95)),
                ramp: random_ramp(&mut rng),
                texture: None,
            })
            .collect();
        let mut frame_textures = Vec::new();
        for _ in 0..c.textures {
            let tex = random_texture(&mut rng);
            let free: Vec<usize> = (0..layers.len())
                .filter(|&i| layers[i].texture.is_none())
                .collect();
            if free.is_empty() {
                frame_textures.push(tex);
            } else {
                layers[free[rng.gen_range(0..free.len())]].texture = Some(tex);
            }
        }
        let noise = (0..c.noise)
            .map(|o| {
                let cells = NOISE_CELLS << o;
                let shared = ValueNoise::new(&mut rng, cells);
                let per_band = (0..spec.bands).map(|_| ValueNoise::new(&mut rng, cells)).collect();
                (shared, per_band)
            })
            .collect();
        Ok(Self {
            bands: spec.bands,
            mixing: spec.mixing.clone(),
            background,
            gradients,
            layers,
            frame_textures,
            noise,
            noise_amp: rng.gen_range(0.005..0.02),
            noise_corr: rng.gen_range(0.5..0.9),
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    fn latent(&self, u: f64, v: f64) -> [f64; MATERIALS] {
        let mut latent = self.background;
        for g in &self.gradients {
            let t = ramp_at(g, u, v);
            for k in 0..MATERIALS {
                latent[k] += t * g.1[k];
            }
        }
        for tex in &self.frame_textures {
            latent[tex.material] += tex.value(u, v);
        }
        let mut latent = latent.map(|a| a.clamp(0.0, 1.0));
        for layer in &self.layers {
            let a = layer.shape.coverage(u, v);
            if a > 0.0 {
                let l = layer.latent(u, v);
                for k in 0..MATERIALS {
                    latent[k] = (1.0 - a) * latent[k] + a * l[k];
                }
            }
        }
        latent
    }

    /// Band values at normalized position `(u, v)`, `u` across and `v` down.
    pub fn eval(&self, u: f64, v: f64, out: &mut [f64]) {
        let latent = self.latent(u, v);
        for (b, o) in out.iter_mut().enumerate().take(self.bands) {
            let row = &self.mixing[b * MATERIALS..(b + 1) * MATERIALS];
            let mut val: f64 = row.iter().zip(&latent).map(|(m, a)| m * a).sum();
            for (octave, (shared, per_band)) in self.noise.iter().enumerate() {
                let n = self.noise_corr * shared.at(u, v)
                    + (1.0 - self.noise_corr) * per_band[b].at(u, v);
                val += self.noise_amp * n / (1u32 << octave) as f64;
            }
            *o = val.clamp(0.0, 1.0);
        }
    }

    pub fn render(&self, height: usize, width: usize) -> RealGrid<f32> {
        let mut out = RealGrid::zeros(height, width, self.bands);
        let mut px = vec![0.0f64; self.bands];
        for (p, dst) in out.data_mut().chunks_exact_mut(self.bands).enumerate() {
            let u = ((p % width) as f64 + 0.5) / width as f64;
            let v = ((p / width) as f64 + 0.5) / height as f64;
            self.eval(u, v, &mut px);
            for (d, &s) in dst.iter_mut().zip(&px) {
                *d = s as f32;
            }
        }
        out
    }
}

/// Realize and render `spec` at its own size.
pub fn generate_scene(spec: &SceneSpec) -> Result<RealGrid<f32>> {
    Ok(Scene::new(spec)?.render(spec.size.0, spec.size.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let a = generate_scene(&SceneSpec::random(11, 48, 4)).unwrap();
        assert_eq!(a, generate_scene(&SceneSpec::random(11, 48, 4)).unwrap());
        let b = generate_scene(&SceneSpec::random(12, 48, 4)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn values_in_unit_range_and_not_flat() {
        let g = generate_scene(&SceneSpec::random(3, 64, 4)).unwrap();
        assert!(g.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let m = g.mean();
        let var = g.data().iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / g.len() as f64;
        assert!(var > 1e-3, "variance {var}");
    }

    #[test]
    fn random_mixing_rows_are_stochastic() {
        let spec = SceneSpec::random(5, 8, 6);
        spec.validate().unwrap();
        let mut bad = spec.clone();
        bad.mixing[0] += 0.5;
        assert!(Scene::new(&bad).is_err());
    }

    #[test]
    fn single_gradient_is_an_affine_ramp() {
        let spec = SceneSpec {
            seed: 4,
            size: (20, 20),
            bands: 2,
            content: SceneContent {
                gradients: 1,
                ..Default::default()
            },
            mixing: vec![0.7, 0.1, 0.1, 0.1, 0.25, 0.25, 0.25, 0.25],
        };
        let scene = Scene::new(&spec).unwrap();
        let g = scene.render(20, 20);
        // value at (u, v) must equal M (background + t ramp)
        let ((dx, dy), ramp) = scene.gradients[0];
        for i in 0..20 {
            for j in 0..20 {
                let (u, v) = ((j as f64 + 0.5) / 20.0, (i as f64 + 0.5) / 20.0);
                let t = dx * (u - 0.5) + dy * (v - 0.5);
                for b in 0..2 {
                    let want: f64 = (0..MATERIALS)
                        .map(|k| spec.mixing[b * MATERIALS + k] * (scene.background[k] + t * ramp[k]).clamp(0.0, 1.0))
                        .sum();
                    assert!((g.at(i, j, b) as f64 - want).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rendering_is_resolution_independent_at_shared_centres() {
        // pixel centres of a 3n grid include those of an n grid
        let scene = Scene::new(&SceneSpec::random(8, 16, 3)).unwrap();
        let lo = scene.render(16, 16);
        let hi = scene.render(48, 48);
        for i in 0..16 {
            for j in 0..16 {
                for c in 0..3 {
                    assert!((lo.at(i, j, c) - hi.at(3 * i + 1, 3 * j + 1, c)).abs() < 1e-6);
                }
            }
        }
    }
}
