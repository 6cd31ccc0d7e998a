//! Procedural face renderer.
//!
//! A deterministic nonlinear map from (shape, texture, pose, light) to a
//! grayscale face image: the depth channel of the shape is treated as a
//! heightfield, pose is applied as a parallax warp, and the warped surface is
//! Lambert-shaded toward a point light before masking with a fixed silhouette.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::morphable::{ExpressionSample, Identity, MorphableModel};
use crate::rng::Rng;

pub const MAX_ANGLE_DEG: f64 = 89.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
    /// Light position in scene coordinates (meters).
    pub light_pos: [f64; 3],
    pub ambient: f64,
    /// Affine coordinate of `light_pos` along the scene's light segment.
    pub light_coef: f64,
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.elevation_deg.abs() <= MAX_ANGLE_DEG && self.azimuth_deg.abs() <= MAX_ANGLE_DEG) {
            return Err(invalid("pose angles must lie within ±89°"));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(invalid("ambient term must lie in [0, 1]"));
        }
        if self.light_pos.iter().any(|v| !v.is_finite()) {
            return Err(invalid("light position must be finite"));
        }
        Ok(())
    }
}

/// Scene layout and nuisance ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub face_pos: [f64; 3],
    pub light_start: [f64; 3],
    pub light_end: [f64; 3],
    pub elevation_range: [f64; 2],
    pub azimuth_range: [f64; 2],
    /// Variance `c` of the expression coefficients.
    pub expression_scale: f64,
    pub ambient: f64,
    /// Heightfield relief in grid pixels per unit depth.
    pub relief: f64,
    /// Side of the rendered face image.
    pub face_side: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            face_pos: [1.65, 0.0, 1.15],
            light_start: [0.15, -0.5, 1.50],
            light_end: [0.15, 0.5, 1.50],
            elevation_range: [-15.0, 15.0],
            azimuth_range: [-15.0, 15.0],
            expression_scale: 0.5,
            ambient: 0.2,
            relief: 8.0,
            face_side: 32,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.light_start == self.light_end {
            return Err(invalid("light segment endpoints must differ"));
        }
        for r in [self.elevation_range, self.azimuth_range] {
            if !(r[0] <= r[1]) || r[0].abs() > MAX_ANGLE_DEG || r[1].abs() > MAX_ANGLE_DEG {
                return Err(invalid("pose range must be ordered and within ±89°"));
            }
        }
        if !(self.expression_scale >= 0.0) {
            return Err(invalid("expression scale must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(invalid("ambient term must lie in [0, 1]"));
        }
        if self.face_side == 0 || !self.relief.is_finite() {
            return Err(invalid("face side must be positive and relief finite"));
        }
        Ok(())
    }

    /// Uniform draws over the pose ranges and along the light segment.
    pub fn sample_render_params(&self, rng: &mut Rng) -> RenderParams {
        let uniform = |rng: &mut Rng, [lo, hi]: [f64; 2]| {
            if lo == hi {
                lo
            } else {
                lo + (hi - lo) * rng.random::<f64>()
            }
        };
        let elevation_deg = uniform(rng, self.elevation_range);
        let azimuth_deg = uniform(rng, self.azimuth_range);
        let light_coef: f64 = rng.random();
        RenderParams {
            elevation_deg,
            azimuth_deg,
            light_pos: self.light_at(light_coef),
            ambient: self.ambient,
            light_coef,
        }
    }

    pub fn light_at(&self, coef: f64) -> [f64; 3] {
        let mut p = [0.0; 3];
        for (i, v) in p.iter_mut().enumerate() {
            *v = self.light_start[i] + coef * (self.light_end[i] - self.light_start[i]);
        }
        p
    }

    /// Params with neutral pose and the light at the middle of its segment.
    pub fn nominal_params(&self) -> RenderParams {
        RenderParams {
            elevation_deg: 0.5 * (self.elevation_range[0] + self.elevation_range[1]),
            azimuth_deg: 0.5 * (self.azimuth_range[0] + self.azimuth_range[1]),
            light_pos: self.light_at(0.5),
            ambient: self.ambient,
            light_coef: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceImage {
    pub side: usize,
    /// Row-major `side × side` radiance, nonnegative.
    pub pixels: Vec<f64>,
}

/// Renders one identity under one expression and nuisance draw.
pub fn render(
    model: &MorphableModel,
    identity: &Identity,
    expression: &ExpressionSample,
    params: &RenderParams,
    scene: &SceneConfig,
) -> Result<FaceImage> {
    let (shape, texture) = model.synthesize(identity, expression)?;
    shade(
        model.grid(),
        shape.as_slice().expect("contiguous"),
        texture.as_slice().expect("contiguous"),
        params,
        scene,
    )
}

/// Renders explicit per-vertex shape (interleaved xyz) and texture on a `grid²` lattice.
pub fn shade(grid: usize, shape: &[f64], texture: &[f64], params: &RenderParams, scene: &SceneConfig) -> Result<FaceImage> {
    params.validate()?;
    let v = grid * grid;
    if shape.len() != 3 * v || texture.len() != v {
        return Err(invalid("shape/texture length does not match grid"));
    }
    let height: Vec<f64> = (0..v).map(|i| scene.relief * shape[3 * i + 2]).collect();

    let tan_az = params.azimuth_deg.to_radians().tan();
    let tan_el = params.elevation_deg.to_radians().tan();
    let (warped_h, warped_t) = if tan_az == 0.0 && tan_el == 0.0 {
        (height, texture.to_vec())
    } else {
        let mut wh = vec![0.0; v];
        let mut wt = vec![0.0; v];
        for r in 0..grid {
            for c in 0..grid {
                let i = r * grid + c;
                let x = c as f64 - height[i] * tan_az;
                let y = r as f64 - height[i] * tan_el;
                wh[i] = bilinear(&height, grid, x, y);
                wt[i] = bilinear(texture, grid, x, y);
            }
        }
        (wh, wt)
    };

    let light = light_direction_local(scene.face_pos, params.light_pos);
    let mask = silhouette(grid);
    let mut img = vec![0.0; v];
    for r in 0..grid {
        for c in 0..grid {
            let i = r * grid + c;
            if !mask[i] {
                continue;
            }
            let gx = central_diff(&warped_h, grid, r, c, true);
            let gy = central_diff(&warped_h, grid, r, c, false);
            let norm = (gx * gx + gy * gy + 1.0).sqrt();
            let cos = (-gx * light[0] - gy * light[1] + light[2]) / norm;
            let shading = params.ambient + (1.0 - params.ambient) * cos.max(0.0);
            img[i] = shading * warped_t[i];
        }
    }
    Ok(FaceImage {
        side: scene.face_side,
        pixels: resample(&img, grid, scene.face_side),
    })
}

/// Unit vector toward the light in the face frame: x along image columns,
/// y along image rows (downward), z out of the face toward the wall side.
pub(crate) fn light_direction_local(face: [f64; 3], light: [f64; 3]) -> [f64; 3] {
    let d = [light[0] - face[0], light[1] - face[1], light[2] - face[2]];
    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if len == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    [d[1] / len, -d[2] / len, -d[0] / len]
}

/// Fixed elliptical face silhouette on the vertex grid.
pub(crate) fn silhouette(grid: usize) -> Vec<bool> {
    let c = (grid as f64 - 1.0) / 2.0;
    let (a, b) = (0.45 * grid as f64, 0.5 * grid as f64);
    (0..grid * grid)
        .map(|i| {
            let (r, col) = ((i / grid) as f64, (i % grid) as f64);
            let (dx, dy) = ((col - c) / a, (r - c) / b);
            dx * dx + dy * dy <= 1.0
        })
        .collect()
}

pub(crate) fn central_diff(h: &[f64], grid: usize, r: usize, c: usize, along_cols: bool) -> f64 {
    let at = |r: usize, c: usize| h[r * grid + c];
    let (i, last) = (if along_cols { c } else { r }, grid - 1);
    let step = |k: usize| if along_cols { at(r, k) } else { at(k, c) };
    if i == 0 {
        step(1) - step(0)
    } else if i == last {
        step(last) - step(last - 1)
    } else {
        0.5 * (step(i + 1) - step(i - 1))
    }
}

/// Bilinear lookup with edge clamping.
fn bilinear(img: &[f64], grid: usize, x: f64, y: f64) -> f64 {
    let max = (grid - 1) as f64;
    let x = x.clamp(0.0, max);
    let y = y.clamp(0.0, max);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(grid - 1), (y0 + 1).min(grid - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let at = |r: usize, c: usize| img[r * grid + c];
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1))
}

/// Bilinear resampling between square grids, pixel centers aligned.
pub fn resample(img: &[f64], from: usize, to: usize) -> Vec<f64> {
    if from == to {
        return img.to_vec();
    }
    let scale = from as f64 / to as f64;
    let mut out = Vec::with_capacity(to * to);
    for r in 0..to {
        for c in 0..to {
            let x = (c as f64 + 0.5) * scale - 0.5;
            let y = (r as f64 + 0.5) * scale - 0.5;
            out.push(bilinear(img, from, x, y));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Domain};

    fn setup() -> (MorphableModel, SceneConfig) {
        let model = MorphableModel::procedural(32, 3, 6, 8, 11).unwrap();
        (model, SceneConfig::default())
    }

    fn on_axis(scene: &SceneConfig) -> RenderParams {
        let f = scene.face_pos;
        RenderParams {
            elevation_deg: 0.0,
            azimuth_deg: 0.0,
            light_pos: [f[0] - 1.5, f[1], f[2]],
            ambient: 0.0,
            light_coef: 0.5,
        }
    }

    #[test]
    fn flat_face_lit_on_axis_is_texture_times_mask() {
        let (model, scene) = setup();
        let v = 32 * 32;
        let mut shape = vec![0.0; 3 * v];
        for i in 0..v {
            shape[3 * i + 2] = 0.3;
        }
        let tex = model.mean_texture().to_vec();
        let img = shade(32, &shape, &tex, &on_axis(&scene), &scene).unwrap();
        let mask = silhouette(32);
        for i in 0..v {
            let expect = if mask[i] { tex[i] } else { 0.0 };
            assert_eq!(img.pixels[i], expect);
        }
    }

    #[test]
    fn zero_texture_renders_black() {
        let (model, scene) = setup();
        let tex = vec![0.0; 32 * 32];
        let mut rng = substream(1, Domain::Test, &[]);
        let params = scene.sample_render_params(&mut rng);
        let img = shade(32, model.mean_shape().as_slice().unwrap(), &tex, &params, &scene).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    /// Oracle: shading computed directly on the unwarped heightfield.
    fn shade_without_warp(grid: usize, shape: &[f64], tex: &[f64], p: &RenderParams, scene: &SceneConfig) -> Vec<f64> {
        let h: Vec<f64> = (0..grid * grid).map(|i| scene.relief * shape[3 * i + 2]).collect();
        let l = light_direction_local(scene.face_pos, p.light_pos);
        let mask = silhouette(grid);
        (0..grid * grid)
            .map(|i| {
                let (r, c) = (i / grid, i % grid);
                let gx = central_diff(&h, grid, r, c, true);
                let gy = central_diff(&h, grid, r, c, false);
                let n = (gx * gx + gy * gy + 1.0).sqrt();
                let cos = (-gx * l[0] - gy * l[1] + l[2]) / n;
                let s = p.ambient + (1.0 - p.ambient) * cos.max(0.0);
                if mask[i] {
                    s * tex[i]
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn zero_pose_equals_unwarped_path() {
        let (model, scene) = setup();
        let mut rng = substream(2, Domain::Test, &[]);
        let id = model.sample_identity(1, &mut rng);
        let e = model.sample_expression(0.5, &mut rng).unwrap();
        let mut params = scene.sample_render_params(&mut rng);
        params.azimuth_deg = 0.0;
        params.elevation_deg = 0.0;
        let (s, t) = model.synthesize(&id, &e).unwrap();
        let img = render(&model, &id, &e, &params, &scene).unwrap();
        let oracle = shade_without_warp(32, s.as_slice().unwrap(), t.as_slice().unwrap(), &params, &scene);
        assert_eq!(img.pixels, oracle);
    }

    #[test]
    fn scale_equivariant_in_texture() {
        let (model, scene) = setup();
        let mut rng = substream(3, Domain::Test, &[]);
        let params = scene.sample_render_params(&mut rng);
        let id = model.sample_identity(1, &mut rng);
        let t = model.texture_unclamped(id.tex_code.view()).unwrap();
        let t2 = &t * 2.0;
        let s = model.mean_shape().as_slice().unwrap();
        let a = shade(32, s, t.as_slice().unwrap(), &params, &scene).unwrap();
        let b = shade(32, s, t2.as_slice().unwrap(), &params, &scene).unwrap();
        for (x, y) in a.pixels.iter().zip(&b.pixels) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn deterministic_and_nonnegative() {
        let (model, scene) = setup();
        let mut rng = substream(4, Domain::Test, &[]);
        let id = model.sample_identity(1, &mut rng);
        let e = model.sample_expression(0.5, &mut rng).unwrap();
        let params = scene.sample_render_params(&mut rng);
        let a = render(&model, &id, &e, &params, &scene).unwrap();
        let b = render(&model, &id, &e, &params, &scene).unwrap();
        assert_eq!(a, b);
        assert!(a.pixels.iter().all(|&p| p >= 0.0 && p.is_finite()));
        assert!(a.pixels.iter().any(|&p| p > 0.0));
    }

    #[test]
    fn resamples_to_output_side() {
        let (model, mut scene) = setup();
        scene.face_side = 16;
        let id = model.sample_identity(1, &mut substream(5, Domain::Test, &[]));
        let img = render(&model, &id, &ExpressionSample::neutral(6), &scene.nominal_params(), &scene).unwrap();
        assert_eq!(img.side, 16);
        assert_eq!(img.pixels.len(), 256);
    }

    #[test]
    fn param_sampling_ranges() {
        let mut scene = SceneConfig::default();
        let mut rng = substream(6, Domain::Test, &[]);
        let n = 100_000;
        let (mut sum, mut lo, mut hi) = (0.0, f64::MAX, f64::MIN);
        for _ in 0..n {
            let p = scene.sample_render_params(&mut rng);
            sum += p.azimuth_deg;
            lo = lo.min(p.azimuth_deg);
            hi = hi.max(p.azimuth_deg);
            assert!((0.0..=1.0).contains(&p.light_coef));
            assert!(p.elevation_deg.abs() <= 15.0);
            let expect = scene.light_at(p.light_coef);
            assert_eq!(p.light_pos, expect);
            assert_eq!(p.light_pos[0], 0.15);
        }
        assert!((sum / n as f64).abs() < 0.2);
        assert!(lo >= -15.0 && hi <= 15.0);

        scene.elevation_range = [0.0, 0.0];
        scene.azimuth_range = [0.0, 0.0];
        let p = scene.sample_render_params(&mut rng);
        assert_eq!((p.elevation_deg, p.azimuth_deg), (0.0, 0.0));
    }

    #[test]
    fn rejects_out_of_range_params() {
        let (model, scene) = setup();
        let mut p = scene.nominal_params();
        p.azimuth_deg = 90.0;
        let id = model.sample_identity(1, &mut substream(7, Domain::Test, &[]));
        assert!(render(&model, &id, &ExpressionSample::neutral(6), &p, &scene).is_err());
        let mut s = scene.clone();
        s.light_end = s.light_start;
        assert!(s.validate().is_err());
    }
}
