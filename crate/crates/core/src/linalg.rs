//! Dense linear-algebra kernels used by the classifier.
//!
//! Products and symmetric eigendecompositions run on `faer`, single-threaded:
//! callers parallelize across classes and experiment cells instead. The
//! [`partial_eigh`] block-Krylov solver computes only the leading eigenpairs,
//! which is what fitting a rank-refined class covariance actually needs.

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{Accum, MatMut, MatRef, Par, Side};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

fn view<'a>(a: &ArrayView2<'a, f64>) -> MatRef<'a, f64> {
    let (rows, cols) = a.dim();
    let [rs, cs] = [a.strides()[0], a.strides()[1]];
    // SAFETY: the pointer and strides describe exactly the elements of `a`,
    // which outlives the returned view.
    unsafe { MatRef::from_raw_parts(a.as_ptr(), rows, cols, rs, cs) }
}

fn view_mut(c: &mut Array2<f64>) -> MatMut<'_, f64> {
    let (rows, cols) = c.dim();
    let slice = c.as_slice_mut().expect("freshly allocated arrays are contiguous");
    MatMut::from_row_major_slice_mut(slice, rows, cols)
}

/// `op(a) * op(b)` where `op` optionally transposes.
pub fn matmul(a: ArrayView2<f64>, ta: bool, b: ArrayView2<f64>, tb: bool) -> Array2<f64> {
    let a = view(&a);
    let b = view(&b);
    let a = if ta { a.transpose() } else { a };
    let b = if tb { b.transpose() } else { b };
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let mut c = Array2::<f64>::zeros((a.nrows(), b.ncols()));
    if c.is_empty() || a.ncols() == 0 {
        return c;
    }
    faer::linalg::matmul::matmul(view_mut(&mut c), Accum::Replace, a, b, 1.0, Par::Seq);
    c
}

/// `scale * aᵀa` (when `transpose_first`) or `scale * a aᵀ`, full symmetric result.
pub fn syrk(a: ArrayView2<f64>, transpose_first: bool, scale: f64) -> Array2<f64> {
    let a = view(&a);
    let lhs = if transpose_first { a.transpose() } else { a };
    let n = lhs.nrows();
    let mut c = Array2::<f64>::zeros((n, n));
    if n == 0 || lhs.ncols() == 0 {
        return c;
    }
    triangular::matmul(
        view_mut(&mut c),
        BlockStructure::TriangularLower,
        Accum::Replace,
        lhs,
        BlockStructure::Rectangular,
        lhs.transpose(),
        BlockStructure::Rectangular,
        scale,
        Par::Seq,
    );
    for i in 0..n {
        for j in 0..i {
            c[[j, i]] = c[[i, j]];
        }
    }
    c
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending, eigenvectors as columns.
pub fn eigh_desc(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidArgument("matrix is not square".into()));
    }
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let mv = m.view();
    let evd = view(&mv)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let (u, vals) = (evd.U(), evd.S().column_vector());
    // faer returns ascending eigenvalues
    let values = Array1::from_iter((0..n).rev().map(|i| vals[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| u[(r, n - 1 - c)]);
    Ok((values, vectors))
}

/// Leading eigenpairs returned by [`partial_eigh`].
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    /// Residual tolerance relative to the largest eigenvalue.
    pub rel_tol: f64,
    /// Matrices at most this large are always decomposed densely.
    pub dense_below: usize,
    /// Give up on Krylov and decompose densely once the basis exceeds `n / max_basis_div`.
    pub max_basis_div: usize,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            dense_below: 256,
            max_basis_div: 8,
            seed: 0x5eed,
        }
    }
}

/// Top-`k` eigenpairs of symmetric `m` (descending).
///
/// Uses randomized block Krylov iteration with full reorthogonalization and
/// Rayleigh-Ritz extraction; every returned pair satisfies
/// `‖m u − λ u‖ ≤ rel_tol · λ₁`. Small matrices, large `k`, and runs that fail
/// to converge inside the basis budget fall back to a dense solve.
pub fn partial_eigh(m: &Array2<f64>, k: usize, opts: &KrylovOptions) -> Result<EigenPairs> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidArgument("matrix is not square".into()));
    }
    let k = k.min(n);
    if k == 0 {
        return Ok(EigenPairs {
            values: Array1::zeros(0),
            vectors: Array2::zeros((n, 0)),
        });
    }
    let max_basis = n / opts.max_basis_div.max(1);
    let block = (k + k / 2 + 8).min(n);
    if n <= opts.dense_below || 2 * block > max_basis {
        return dense_top(m, k);
    }

    // Basis vectors are stored as rows so each one is contiguous.
    let mut rng = substream(opts.seed, Domain::Solver, &[n as u64, k as u64]);
    let mut basis = Array2::<f64>::zeros((0, n));
    let mut image = Array2::<f64>::zeros((0, n));
    let mut next = Array2::from_shape_fn((block, n), |_| StandardNormal.sample(&mut rng));

    loop {
        orthonormalize_rows(&basis, &mut next, &mut rng);
        let w = matmul(next.view(), false, m.view(), false);
        basis.append(Axis(0), next.view()).expect("row append");
        image.append(Axis(0), w.view()).expect("row append");

        let mut t = matmul(basis.view(), false, image.view(), true);
        symmetrize(&mut t);
        let (theta, y) = eigh_desc(&t)?;
        let y_top = y.slice(s![.., ..k]);
        let ritz = matmul(y_top, true, basis.view(), false);
        let applied = matmul(y_top, true, image.view(), false);
        let scale = theta[0].abs().max(f64::MIN_POSITIVE);
        let converged = (0..k).all(|i| {
            let r = &applied.row(i) - &(&ritz.row(i) * theta[i]);
            r.dot(&r).sqrt() <= opts.rel_tol * scale
        });
        if converged {
            return Ok(EigenPairs {
                values: theta.slice(s![..k]).to_owned(),
                vectors: ritz.t().as_standard_layout().into_owned(),
            });
        }
        if basis.nrows() + block > max_basis {
            return dense_top(m, k);
        }
        next = w;
    }
}

fn dense_top(m: &Array2<f64>, k: usize) -> Result<EigenPairs> {
    let (vals, vecs) = eigh_desc(m)?;
    Ok(EigenPairs {
        values: vals.slice(s![..k]).to_owned(),
        vectors: vecs.slice(s![.., ..k]).to_owned(),
    })
}

fn symmetrize(t: &mut Array2<f64>) {
    let n = t.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (t[[i, j]] + t[[j, i]]);
            t[[i, j]] = v;
            t[[j, i]] = v;
        }
    }
}

/// Makes the rows of `block` orthonormal and orthogonal to the rows of
/// `basis` (which must already be orthonormal), by two rounds of block
/// Gram-Schmidt followed by modified Gram-Schmidt inside the block. Rows that
/// vanish under projection are replaced by fresh random directions.
fn orthonormalize_rows(basis: &Array2<f64>, block: &mut Array2<f64>, rng: &mut crate::rng::Rng) {
    let project_out = |block: &mut Array2<f64>| {
        if basis.nrows() > 0 {
            let coef = matmul(block.view(), false, basis.view(), true);
            *block -= &matmul(coef.view(), false, basis.view(), false);
        }
    };
    for _pass in 0..2 {
        project_out(block);
        for j in 0..block.nrows() {
            let mut attempts = 0;
            loop {
                let original = block.row(j).dot(&block.row(j)).sqrt();
                for _ in 0..2 {
                    let (done, mut rest) = block.view_mut().split_at(Axis(0), j);
                    let mut row = rest.row_mut(0);
                    for q in done.rows() {
                        let d = q.dot(&row);
                        row.scaled_add(-d, &q);
                    }
                }
                let norm = block.row(j).dot(&block.row(j)).sqrt();
                if norm > 1e-10 * original && norm > 0.0 {
                    block.row_mut(j).mapv_inplace(|v| v / norm);
                    break;
                }
                attempts += 1;
                assert!(attempts < 8, "cannot extend orthonormal basis");
                for v in block.row_mut(j).iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
                let mut fresh = block.slice(s![j..j + 1, ..]).to_owned();
                project_out(&mut fresh);
                block.row_mut(j).assign(&fresh.row(0));
            }
        }
    }
}

/// Euclidean-norm squared.
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn random_spd(n: usize, seed: u64, decay: f64) -> Array2<f64> {
        let mut rng = substream(seed, Domain::Test, &[]);
        let g = Array2::from_shape_fn((n, n), |_| StandardNormal.sample(&mut rng));
        let (_, q) = eigh_desc(&(&g + &g.t())).unwrap();
        let d = Array1::from_iter((0..n).map(|i| decay.powi(i as i32)));
        let qd = &q * &d;
        matmul(qd.view(), false, q.view(), true)
    }

    #[test]
    fn matmul_matches_ndarray() {
        let a = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64 * 0.5 - 2.0);
        let b = Array2::from_shape_fn((5, 4), |(i, j)| (i + 2 * j) as f64);
        let c = matmul(a.view(), true, b.view(), false);
        let expect = a.t().dot(&b);
        assert!((&c - &expect).iter().all(|v| v.abs() < 1e-12));
        let g = syrk(a.view(), false, 0.5);
        let expect = a.dot(&a.t()) * 0.5;
        assert!((&g - &expect).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn eigh_is_descending() {
        let m = random_spd(12, 3, 0.7);
        let (vals, vecs) = eigh_desc(&m).unwrap();
        assert!(vals.windows(2).into_iter().all(|w| w[0] >= w[1]));
        let recon = matmul((&vecs * &vals).view(), false, vecs.view(), true);
        assert!((&recon - &m).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn krylov_matches_dense() {
        let m = random_spd(400, 9, 0.9);
        let opts = KrylovOptions::default();
        let part = partial_eigh(&m, 20, &opts).unwrap();
        let (vals, vecs) = eigh_desc(&m).unwrap();
        for i in 0..20 {
            assert!((part.values[i] - vals[i]).abs() < 1e-9 * vals[0]);
            let cos = part.vectors.column(i).dot(&vecs.column(i)).abs();
            assert!((cos - 1.0).abs() < 1e-6, "vector {i}: |cos| = {cos}");
        }
        let gram = matmul(part.vectors.view(), true, part.vectors.view(), false);
        for i in 0..20 {
            for j in 0..20 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn krylov_handles_low_rank() {
        // rank-5 matrix: Krylov space becomes invariant quickly
        let mut rng = substream(4, Domain::Test, &[]);
        let x = Array2::from_shape_fn((5, 300), |_| StandardNormal.sample(&mut rng));
        let m = syrk(x.view(), true, 1.0);
        let part = partial_eigh(&m, 8, &KrylovOptions::default()).unwrap();
        let (vals, _) = eigh_desc(&m).unwrap();
        for i in 0..8 {
            assert!((part.values[i] - vals[i]).abs() < 1e-8 * vals[0]);
        }
    }
}
