//! Occluder light transport under the convolutional occlusion model.
//!
//! Face, occluder and wall lie in parallel planes. Wall pixel `j` receives
//! `1/n` of the radiance of every face pixel `i` whose ray to `j` misses the
//! occluder, so `A_ji ∈ {0, 1/n}` with `n` the face pixel count. On the
//! occluder canvas this is a valid-region correlation of the face with the
//! flipped transparency map; the wall image is then block-averaged down to the
//! output resolution.

use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::matmul;
use crate::render::FaceImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OccluderGeometry {
    SquareDiagonal { diagonal: f64 },
    Rectangle { width: f64, height: f64 },
    Bitmap,
}

/// Binary occluder mask, 1 = opaque.
#[derive(Debug, Clone, PartialEq)]
pub struct OccluderMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
    pub geometry: OccluderGeometry,
    pub angle_deg: f64,
}

impl OccluderMask {
    pub fn from_bitmap(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(invalid("bitmap size does not match dimensions"));
        }
        Ok(Self {
            height,
            width,
            data: data.into_iter().map(|v| u8::from(v != 0)).collect(),
            geometry: OccluderGeometry::Bitmap,
            angle_deg: 0.0,
        })
    }

    pub fn transparent(height: usize, width: usize) -> Self {
        Self::from_bitmap(height, width, vec![0; height * width]).expect("sized")
    }

    pub fn opaque(height: usize, width: usize) -> Self {
        Self::from_bitmap(height, width, vec![1; height * width]).expect("sized")
    }

    pub fn opaque_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_opaque(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] != 0
    }
}

fn centered_offsets(canvas: usize) -> impl Iterator<Item = (usize, f64, f64)> {
    let c = (canvas / 2) as f64;
    (0..canvas * canvas).map(move |i| (i, (i % canvas) as f64 - c, (i / canvas) as f64 - c))
}

fn rotate(u: f64, v: f64, angle_deg: f64) -> (f64, f64) {
    if angle_deg == 0.0 {
        return (u, v);
    }
    let (s, c) = angle_deg.to_radians().sin_cos();
    (u * c + v * s, -u * s + v * c)
}

/// Filled square centered on a `canvas × canvas` grid. At angle 0 its
/// diagonals are axis-aligned: pixel offsets `(u, v)` from the center are
/// opaque iff `|u| + |v| ≤ diagonal / 2`.
pub fn make_square_occluder(canvas: usize, diagonal: f64, angle_deg: f64) -> Result<OccluderMask> {
    if canvas == 0 {
        return Err(invalid("canvas must be nonempty"));
    }
    if !(diagonal >= 0.0) || diagonal > canvas as f64 * std::f64::consts::SQRT_2 {
        return Err(invalid(format!("diagonal {diagonal} exceeds canvas diagonal")));
    }
    let half = diagonal / 2.0;
    let mut data = vec![0u8; canvas * canvas];
    if diagonal > 0.0 {
        for (i, u, v) in centered_offsets(canvas) {
            let (ru, rv) = rotate(u, v, angle_deg);
            data[i] = u8::from(ru.abs() + rv.abs() <= half + 1e-9);
        }
    }
    Ok(OccluderMask {
        height: canvas,
        width: canvas,
        data,
        geometry: OccluderGeometry::SquareDiagonal { diagonal },
        angle_deg,
    })
}

/// Filled axis-aligned-then-rotated rectangle centered on the canvas.
pub fn make_rectangle_occluder(canvas: usize, width: f64, height: f64, angle_deg: f64) -> Result<OccluderMask> {
    if canvas == 0 || !(width >= 0.0 && height >= 0.0) {
        return Err(invalid("rectangle dimensions must be nonnegative on a nonempty canvas"));
    }
    let mut data = vec![0u8; canvas * canvas];
    if width > 0.0 && height > 0.0 {
        for (i, u, v) in centered_offsets(canvas) {
            let (ru, rv) = rotate(u, v, angle_deg);
            data[i] = u8::from(ru.abs() <= width / 2.0 + 1e-9 && rv.abs() <= height / 2.0 + 1e-9);
        }
    }
    Ok(OccluderMask {
        height: canvas,
        width: canvas,
        data,
        geometry: OccluderGeometry::Rectangle { width, height },
        angle_deg,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowImage {
    pub side: usize,
    pub pixels: Vec<f64>,
}

impl ShadowImage {
    pub fn umbra_fraction(&self, threshold: f64) -> f64 {
        umbra_fraction(&self.pixels, threshold)
    }
}

/// Fraction of pixels at or below `threshold` (0 means exactly black).
pub fn umbra_fraction(pixels: &[f64], threshold: f64) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    pixels.iter().filter(|&&p| p <= threshold).count() as f64 / pixels.len() as f64
}

/// Default upper bound on a materialized transport matrix.
pub const DEFAULT_DENSE_BUDGET_BYTES: usize = 1 << 30;

/// The occluder-induced operator mapping a face image to a wall image.
#[derive(Debug)]
pub struct LightTransport {
    face_side: usize,
    out_side: usize,
    canvas_h: usize,
    canvas_w: usize,
    block_h: usize,
    block_w: usize,
    offset_h: usize,
    offset_w: usize,
    /// `(canvas_h + 1) × (canvas_w + 1)` integral image of the transparency map.
    integral: Vec<u32>,
    transparency: Vec<u8>,
    budget_bytes: usize,
    dense: OnceLock<Array2<f64>>,
}

impl LightTransport {
    /// `face_side²` source pixels, `out_side²` wall pixels after block averaging.
    pub fn new(occluder: &OccluderMask, face_side: usize, out_side: usize) -> Result<Self> {
        if face_side == 0 || out_side == 0 {
            return Err(invalid("face and output sides must be positive"));
        }
        if occluder.height < face_side || occluder.width < face_side {
            return Err(invalid(format!(
                "occluder canvas {}x{} smaller than face side {face_side}",
                occluder.height, occluder.width
            )));
        }
        let valid_h = occluder.height - face_side + 1;
        let valid_w = occluder.width - face_side + 1;
        if out_side > valid_h || out_side > valid_w {
            return Err(invalid(format!(
                "output side {out_side} exceeds valid wall region {valid_h}x{valid_w}"
            )));
        }
        let block_h = valid_h / out_side;
        let block_w = valid_w / out_side;
        let transparency: Vec<u8> = occluder.data.iter().map(|&o| u8::from(o == 0)).collect();
        let (h, w) = (occluder.height, occluder.width);
        let mut integral = vec![0u32; (h + 1) * (w + 1)];
        for r in 0..h {
            let mut row = 0u32;
            for c in 0..w {
                row += u32::from(transparency[r * w + c]);
                integral[(r + 1) * (w + 1) + c + 1] = integral[r * (w + 1) + c + 1] + row;
            }
        }
        Ok(Self {
            face_side,
            out_side,
            canvas_h: h,
            canvas_w: w,
            block_h,
            block_w,
            offset_h: (valid_h - block_h * out_side) / 2,
            offset_w: (valid_w - block_w * out_side) / 2,
            integral,
            transparency,
            budget_bytes: DEFAULT_DENSE_BUDGET_BYTES,
            dense: OnceLock::new(),
        })
    }

    pub fn with_budget(mut self, bytes: usize) -> Self {
        self.budget_bytes = bytes;
        self
    }

    /// Source dimension `n`.
    pub fn source_len(&self) -> usize {
        self.face_side * self.face_side
    }

    pub fn out_len(&self) -> usize {
        self.out_side * self.out_side
    }

    pub fn out_side(&self) -> usize {
        self.out_side
    }

    pub fn face_side(&self) -> usize {
        self.face_side
    }

    /// Occluder canvas as `(height, width)`.
    pub fn canvas(&self) -> (usize, usize) {
        (self.canvas_h, self.canvas_w)
    }

    fn box_sum(&self, row: usize, col: usize) -> u32 {
        let w = self.canvas_w + 1;
        let (r1, c1) = (row + self.block_h, col + self.block_w);
        self.integral[r1 * w + c1] + self.integral[row * w + col] - self.integral[row * w + c1] - self.integral[r1 * w + col]
    }

    /// Convolutional evaluation of `A r`.
    pub fn apply(&self, face: &FaceImage) -> Result<ShadowImage> {
        if face.side != self.face_side || face.pixels.len() != self.source_len() {
            return Err(invalid(format!(
                "face is {}x{}, transport expects {}x{}",
                face.side, face.side, self.face_side, self.face_side
            )));
        }
        let f = self.face_side;
        let scale = 1.0 / (self.source_len() * self.block_h * self.block_w) as f64;
        let mut pixels = Vec::with_capacity(self.out_len());
        for orow in 0..self.out_side {
            let top = self.offset_h + orow * self.block_h + f - 1;
            for ocol in 0..self.out_side {
                let left = self.offset_w + ocol * self.block_w + f - 1;
                let mut acc = 0.0;
                for a in 0..f {
                    for b in 0..f {
                        let weight = self.box_sum(top - a, left - b);
                        if weight != 0 {
                            acc += f64::from(weight) * face.pixels[a * f + b];
                        }
                    }
                }
                pixels.push(acc * scale);
            }
        }
        Ok(ShadowImage {
            side: self.out_side,
            pixels,
        })
    }

    /// Materializes `A` as an `n_out × n` matrix built directly from the
    /// per-pair visibility definition, then block averaging.
    pub fn materialize_dense(&self) -> Result<Array2<f64>> {
        let bytes = self
            .out_len()
            .checked_mul(self.source_len())
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::ResourceLimit("dense transport size overflows".into()))?;
        if bytes > self.budget_bytes {
            return Err(Error::ResourceLimit(format!(
                "dense transport needs {bytes} bytes, budget is {}",
                self.budget_bytes
            )));
        }
        let f = self.face_side;
        let n = self.source_len();
        let unblocked = 1.0 / n as f64;
        let pool = 1.0 / (self.block_h * self.block_w) as f64;
        let mut a = Array2::<f64>::zeros((self.out_len(), n));
        for orow in 0..self.out_side {
            for ocol in 0..self.out_side {
                let j = orow * self.out_side + ocol;
                let mut row = vec![0.0; n];
                for u in 0..self.block_h {
                    for v in 0..self.block_w {
                        let wy = self.offset_h + orow * self.block_h + u;
                        let wx = self.offset_w + ocol * self.block_w + v;
                        for (i, entry) in row.iter_mut().enumerate() {
                            let (sy, sx) = (i / f, i % f);
                            let (cy, cx) = (wy + f - 1 - sy, wx + f - 1 - sx);
                            if self.transparency[cy * self.canvas_w + cx] != 0 {
                                *entry += unblocked;
                            }
                        }
                    }
                }
                for (i, v) in row.into_iter().enumerate() {
                    a[[j, i]] = v * pool;
                }
            }
        }
        Ok(a)
    }

    /// Cached dense matrix (materialized on first use).
    pub fn dense(&self) -> Result<&Array2<f64>> {
        if let Some(a) = self.dense.get() {
            return Ok(a);
        }
        let a = self.materialize_dense()?;
        Ok(self.dense.get_or_init(|| a))
    }

    /// Applies `A` to each row of `faces` (`m × n`), returning `m × n_out`.
    /// Goes through the dense matrix when it fits the budget.
    pub fn apply_rows(&self, faces: ArrayView2<f64>) -> Result<Array2<f64>> {
        if faces.ncols() != self.source_len() {
            return Err(invalid("face rows have the wrong length"));
        }
        match self.dense() {
            Ok(a) => Ok(matmul(faces, false, a.view(), true)),
            Err(Error::ResourceLimit(_)) => {
                let mut out = Array2::zeros((faces.nrows(), self.out_len()));
                for (src, mut dst) in faces.rows().into_iter().zip(out.rows_mut()) {
                    let face = FaceImage {
                        side: self.face_side,
                        pixels: src.to_vec(),
                    };
                    let s = self.apply(&face)?;
                    dst.assign(&ndarray::ArrayView1::from(&s.pixels));
                }
                Ok(out)
            }
            Err(e) => Err(e),
        }
    }
}
