//! Linear morphable face model.
//!
//! Shape is `s = s̄ + M_id α_id + M_exp α_exp` (per-vertex xyz, interleaved),
//! texture is `t = t̄ + M_tex α_tex` (grayscale reflectance per vertex).
//! Vertices sit on a `p × p` grid, so a texture or depth channel is also a
//! `p × p` image in row-major order.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{invalid, Result};
use crate::rng::{substream, Domain, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    grid: usize,
    mean_shape: Array1<f64>,
    mean_texture: Array1<f64>,
    basis_id: Array2<f64>,
    basis_exp: Array2<f64>,
    basis_tex: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identity {
    pub id_code: Array1<f64>,
    pub tex_code: Array1<f64>,
    /// 1-based class label.
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionSample {
    pub exp_code: Array1<f64>,
}

impl ExpressionSample {
    pub fn neutral(k_exp: usize) -> Self {
        Self {
            exp_code: Array1::zeros(k_exp),
        }
    }
}

impl MorphableModel {
    /// Builds a procedural model whose bases are orthonormalized smooth random fields.
    pub fn procedural(grid: usize, k_id: usize, k_exp: usize, k_tex: usize, seed: u64) -> Result<Self> {
        if grid < 8 {
            return Err(invalid(format!("grid size {grid} < 8")));
        }
        if k_id == 0 || k_exp == 0 || k_tex == 0 {
            return Err(invalid("basis dimensions must be at least 1"));
        }
        let v = grid * grid;
        if k_tex > v {
            return Err(invalid(format!("k_tex = {k_tex} exceeds vertex count {v}")));
        }
        if k_id > 3 * v || k_exp > 3 * v {
            return Err(invalid(format!("shape basis wider than 3V = {}", 3 * v)));
        }

        let sigma = grid as f64 / 10.0;
        let basis_id = smooth_basis(grid, 3, k_id, sigma, seed, 0)?;
        let basis_exp = smooth_basis(grid, 3, k_exp, sigma, seed, 1)?;
        let basis_tex = smooth_basis(grid, 1, k_tex, sigma, seed, 2)?;

        let c = (grid as f64 - 1.0) / 2.0;
        let mut mean_shape = Array1::zeros(3 * v);
        let mut mean_texture = Array1::zeros(v);
        for row in 0..grid {
            for col in 0..grid {
                let i = row * grid + col;
                let dx = (col as f64 - c) / (0.42 * grid as f64);
                let dy = (row as f64 - c) / (0.48 * grid as f64);
                let rho2 = dx * dx + dy * dy;
                mean_shape[3 * i + 2] = (1.0 - rho2).max(0.0).sqrt();
                mean_texture[i] = 0.2 + 0.7 * (-rho2 / 0.8).exp();
            }
        }
        Ok(Self {
            grid,
            mean_shape,
            mean_texture,
            basis_id,
            basis_exp,
            basis_tex,
        })
    }

    /// Assembles a model from explicit parts, checking dimensional consistency.
    pub fn from_parts(
        grid: usize,
        mean_shape: Array1<f64>,
        mean_texture: Array1<f64>,
        basis_id: Array2<f64>,
        basis_exp: Array2<f64>,
        basis_tex: Array2<f64>,
    ) -> Result<Self> {
        let v = grid * grid;
        if mean_shape.len() != 3 * v
            || mean_texture.len() != v
            || basis_id.nrows() != 3 * v
            || basis_exp.nrows() != 3 * v
            || basis_tex.nrows() != v
        {
            return Err(invalid("model part dimensions do not match grid"));
        }
        if basis_id.ncols() == 0 || basis_exp.ncols() == 0 || basis_tex.ncols() == 0 {
            return Err(invalid("basis dimensions must be at least 1"));
        }
        if mean_texture.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(invalid("mean texture outside [0, 1]"));
        }
        Ok(Self {
            grid,
            mean_shape,
            mean_texture,
            basis_id,
            basis_exp,
            basis_tex,
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn vertex_count(&self) -> usize {
        self.grid * self.grid
    }

    pub fn k_id(&self) -> usize {
        self.basis_id.ncols()
    }

    pub fn k_exp(&self) -> usize {
        self.basis_exp.ncols()
    }

    pub fn k_tex(&self) -> usize {
        self.basis_tex.ncols()
    }

    pub fn mean_shape(&self) -> &Array1<f64> {
        &self.mean_shape
    }

    pub fn mean_texture(&self) -> &Array1<f64> {
        &self.mean_texture
    }

    pub fn basis_id(&self) -> &Array2<f64> {
        &self.basis_id
    }

    pub fn basis_exp(&self) -> &Array2<f64> {
        &self.basis_exp
    }

    pub fn basis_tex(&self) -> &Array2<f64> {
        &self.basis_tex
    }

    /// `α_id = 0`, `α_tex ~ N(0, I)`: identities share one face shape.
    pub fn sample_identity(&self, label: u32, rng: &mut Rng) -> Identity {
        Identity {
            id_code: Array1::zeros(self.k_id()),
            tex_code: Array1::from_shape_fn(self.k_tex(), |_| StandardNormal.sample(rng)),
            label,
        }
    }

    /// The first `m` identities of a model-wide sequence keyed by `seed`; labels are 1..=m.
    pub fn sample_identities(&self, m: usize, seed: u64) -> Vec<Identity> {
        (0..m)
            .map(|i| {
                let mut rng = substream(seed, Domain::Identity, &[i as u64]);
                self.sample_identity(i as u32 + 1, &mut rng)
            })
            .collect()
    }

    /// `α_exp ~ N(0, c I)`.
    pub fn sample_expression(&self, c: f64, rng: &mut Rng) -> Result<ExpressionSample> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(invalid(format!("expression variance {c} must be finite and >= 0")));
        }
        if c == 0.0 {
            return Ok(ExpressionSample::neutral(self.k_exp()));
        }
        let normal = Normal::new(0.0, c.sqrt()).expect("validated scale");
        Ok(ExpressionSample {
            exp_code: Array1::from_shape_fn(self.k_exp(), |_| normal.sample(rng)),
        })
    }

    pub fn shape(&self, identity: &Identity, expression: &ExpressionSample) -> Result<Array1<f64>> {
        self.check_codes(identity, expression)?;
        Ok(&self.mean_shape + &self.basis_id.dot(&identity.id_code) + &self.basis_exp.dot(&expression.exp_code))
    }

    /// Texture before clamping to physical reflectance.
    pub fn texture_unclamped(&self, tex_code: ArrayView1<f64>) -> Result<Array1<f64>> {
        if tex_code.len() != self.k_tex() {
            return Err(invalid(format!(
                "texture code has {} entries, model expects {}",
                tex_code.len(),
                self.k_tex()
            )));
        }
        Ok(&self.mean_texture + &self.basis_tex.dot(&tex_code))
    }

    /// Shape and clamped texture for one identity under one expression.
    pub fn synthesize(&self, identity: &Identity, expression: &ExpressionSample) -> Result<(Array1<f64>, Array1<f64>)> {
        let shape = self.shape(identity, expression)?;
        let texture = self
            .texture_unclamped(identity.tex_code.view())?
            .mapv_into(|t| t.clamp(0.0, 1.0));
        Ok((shape, texture))
    }

    fn check_codes(&self, identity: &Identity, expression: &ExpressionSample) -> Result<()> {
        if identity.id_code.len() != self.k_id()
            || identity.tex_code.len() != self.k_tex()
            || expression.exp_code.len() != self.k_exp()
        {
            return Err(invalid("code dimensions do not match model"));
        }
        Ok(())
    }
}

/// `k` columns of `channels`-interleaved smooth random fields on a `grid²`
/// lattice, orthonormalized.
fn smooth_basis(grid: usize, channels: usize, k: usize, sigma: f64, seed: u64, tag: u64) -> Result<Array2<f64>> {
    let v = grid * grid;
    let kernel = gaussian_kernel(sigma);
    let mut basis = Array2::<f64>::zeros((channels * v, k));
    for col in 0..k {
        let mut rng = substream(seed, Domain::Model, &[tag, col as u64]);
        for ch in 0..channels {
            let noise: Vec<f64> = (0..v).map(|_| StandardNormal.sample(&mut rng)).collect();
            let field = blur(&noise, grid, &kernel);
            for (i, f) in field.into_iter().enumerate() {
                basis[[channels * i + ch, col]] = f;
            }
        }
    }
    gram_schmidt(&mut basis, seed ^ tag)?;
    Ok(basis)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Separable blur with reflected borders.
fn blur(img: &[f64], grid: usize, kernel: &[f64]) -> Vec<f64> {
    let half = (kernel.len() / 2) as isize;
    let g = grid as isize;
    let reflect = |i: isize| -> usize {
        let mut i = i;
        while i < 0 || i >= g {
            i = if i < 0 { -i - 1 } else { 2 * g - i - 1 };
        }
        i as usize
    };
    let mut tmp = vec![0.0; img.len()];
    for r in 0..grid {
        for c in 0..grid {
            tmp[r * grid + c] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * img[r * grid + reflect(c as isize + t as isize - half)])
                .sum();
        }
    }
    let mut out = vec![0.0; img.len()];
    for r in 0..grid {
        for c in 0..grid {
            out[r * grid + c] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * tmp[reflect(r as isize + t as isize - half) * grid + c])
                .sum();
        }
    }
    out
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Columns that
/// collapse numerically are redrawn as white noise.
fn gram_schmidt(m: &mut Array2<f64>, seed: u64) -> Result<()> {
    let k = m.ncols();
    for j in 0..k {
        let mut redraws = 0u64;
        loop {
            let before = m.column(j).dot(&m.column(j)).sqrt();
            for _ in 0..2 {
                for i in 0..j {
                    let d = m.column(i).dot(&m.column(j));
                    let qi = m.column(i).to_owned();
                    m.column_mut(j).scaled_add(-d, &qi);
                }
            }
            let norm = m.column(j).dot(&m.column(j)).sqrt();
            if norm > 1e-8 * before && norm > 0.0 {
                m.column_mut(j).mapv_inplace(|x| x / norm);
                break;
            }
            redraws += 1;
            if redraws > 16 {
                return Err(invalid("basis too wide for the grid to orthonormalize"));
            }
            let mut rng = substream(seed, Domain::Model, &[u64::MAX, j as u64, redraws]);
            for x in m.column_mut(j).iter_mut() {
                *x = rng.random::<f64>() - 0.5;
            }
        }
    }
    Ok(())
}
