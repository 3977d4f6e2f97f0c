//! Dense linear algebra for small matrices.
//!
//! The decomposition code needs singular value decompositions and
//! pseudoinverses of matrices no larger than a few dozen rows and columns,
//! so everything here is a direct implementation: the SVD is one-sided
//! Jacobi (Givens rotations that orthogonalize column pairs), which is
//! simple, deterministic, and highly accurate at this scale.
//!
//! Conventions fixed here and relied on by callers:
//! * singular values are sorted in descending order;
//! * the first entry of each left singular vector whose magnitude exceeds
//!   `1e-12 · max|u|` is made positive, so factors are reproducible;
//! * rank decisions use a relative threshold `tol · σ_max`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used by the decomposition routines.
pub const SVD_RTOL: f64 = 1e-10;

/// Thin SVD `a = u · diag(s) · vt` with `r = min(rows, cols)` columns in
/// `u`, entries in `s`, and rows in `vt`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

impl Svd {
    /// Number of singular values above `rtol * s[0]`.
    pub fn rank(&self, rtol: f64) -> usize {
        if self.s.is_empty() || self.s[0] <= 0.0 {
            return 0;
        }
        let cut = rtol * self.s[0];
        self.s.iter().filter(|&&x| x > cut).count()
    }
}

/// One-sided Jacobi SVD. Works on the transpose when `rows < cols` so the
/// rotation loop always sees at least as many rows as columns.
pub fn svd(a: &Array2<f64>) -> Svd {
    let (rows, cols) = a.dim();
    if rows < cols {
        let t = svd(&a.t().to_owned());
        return Svd {
            u: t.vt.t().to_owned(),
            s: t.s,
            vt: t.u.t().to_owned(),
        };
    }

    let mut b = a.clone();
    let mut v = Array2::<f64>::eye(cols);
    let scale: f64 = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || cols == 0 {
        return Svd {
            u: Array2::zeros((rows, cols)),
            s: Array1::zeros(cols),
            vt: v,
        };
    }

    // Sweep until every column pair is numerically orthogonal.
    let eps = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..rows {
                    app += b[[i, p]] * b[[i, p]];
                    aqq += b[[i, q]] * b[[i, q]];
                    apq += b[[i, p]] * b[[i, q]];
                }
                if apq.abs() <= eps * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let bp = b[[i, p]];
                    let bq = b[[i, q]];
                    b[[i, p]] = c * bp - s * bq;
                    b[[i, q]] = s * bp + c * bq;
                }
                for i in 0..cols {
                    let vp = v[[i, p]];
                    let vq = v[[i, q]];
                    v[[i, p]] = c * vp - s * vq;
                    v[[i, q]] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort descending (stable in the
    // original column index so ties are reproducible).
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| b[[i, j]] * b[[i, j]]).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap().then(x.cmp(&y)));

    let mut u = Array2::<f64>::zeros((rows, cols));
    let mut s = Array1::<f64>::zeros(cols);
    let mut vt = Array2::<f64>::zeros((cols, cols));
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s[dst] = sigma;
        let mut sign = 1.0;
        if sigma > 0.0 {
            let colmax = (0..rows).map(|i| b[[i, src]].abs()).fold(0.0_f64, f64::max);
            for i in 0..rows {
                if b[[i, src]].abs() > 1e-12 * colmax {
                    sign = b[[i, src]].signum();
                    break;
                }
            }
            for i in 0..rows {
                u[[i, dst]] = sign * b[[i, src]] / sigma;
            }
        }
        for i in 0..cols {
            vt[[dst, i]] = sign * v[[i, src]];
        }
    }
    Svd { u, s, vt }
}

/// Moore–Penrose pseudoinverse via SVD with singular values below
/// `rtol · σ_max` truncated.
pub fn pinv(a: &Array2<f64>, rtol: f64) -> Array2<f64> {
    let Svd { u, s, vt } = svd(a);
    let (rows, cols) = a.dim();
    let mut out = Array2::<f64>::zeros((cols, rows));
    if s.is_empty() || s[0] <= 0.0 {
        return out;
    }
    let cut = rtol * s[0];
    for j in 0..s.len() {
        if s[j] <= cut {
            continue;
        }
        let inv = 1.0 / s[j];
        for r in 0..cols {
            for c in 0..rows {
                out[[r, c]] += vt[[j, r]] * inv * u[[c, j]];
            }
        }
    }
    out
}

/// Orthonormal basis for the column span via modified Gram–Schmidt.
/// Fails if some column is (numerically) dependent on the previous ones.
pub fn orthonormalize(basis: &Array2<f64>) -> Result<Array2<f64>> {
    let (rows, cols) = basis.dim();
    let mut q = basis.clone();
    let overall: f64 = basis.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
    for j in 0..cols {
        for prev in 0..j {
            let dot: f64 = (0..rows).map(|i| q[[i, j]] * q[[i, prev]]).sum();
            for i in 0..rows {
                q[[i, j]] -= dot * q[[i, prev]];
            }
        }
        let norm: f64 = (0..rows).map(|i| q[[i, j]] * q[[i, j]]).sum::<f64>().sqrt();
        if norm <= 1e-12 * overall {
            return Err(Error::Degenerate(format!(
                "column {j} is linearly dependent; basis is rank-deficient"
            )));
        }
        for i in 0..rows {
            q[[i, j]] /= norm;
        }
    }
    Ok(q)
}

/// Projection matrix `Q Qᵀ` onto the column span of `basis`.
pub fn projector(basis: &Array2<f64>) -> Result<Array2<f64>> {
    let q = orthonormalize(basis)?;
    Ok(q.dot(&q.t()))
}

/// Frobenius distance between the projectors onto two spans. Zero iff the
/// spans coincide, independent of basis scaling or rotation.
pub fn projector_distance(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    let pa = projector(a)?;
    let pb = projector(b)?;
    Ok((&pa - &pb).iter().map(|x| x * x).sum::<f64>().sqrt())
}

pub fn frobenius_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use ndarray::array;

    fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.normal())
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        let mut rng = SplitMix64::new(11);
        for &(r, c) in &[(3, 3), (5, 3), (3, 5), (8, 8), (2, 7)] {
            let a = random_matrix(&mut rng, r, c);
            let f = svd(&a);
            let rebuilt = f.u.dot(&Array2::from_diag(&f.s)).dot(&f.vt);
            let err = frobenius_norm(&(&a - &rebuilt)) / frobenius_norm(&a).max(1.0);
            assert!(err < 1e-12, "reconstruction error {err} for {r}x{c}");
            // u has orthonormal columns up to rank
            let gram = f.u.t().dot(&f.u);
            for i in 0..f.rank(1e-12) {
                assert_close(gram[[i, i]], 1.0, 1e-10);
            }
        }
    }

    #[test]
    fn svd_of_diagonal_is_sorted_absolute_values() {
        let a = array![[3.0, 0.0], [0.0, -5.0]];
        let f = svd(&a);
        assert_close(f.s[0], 5.0, 1e-12);
        assert_close(f.s[1], 3.0, 1e-12);
    }

    #[test]
    fn sign_convention_makes_factors_reproducible() {
        let a = array![[0.0, 0.0], [0.0, 0.0], [-2.0, 0.0], [0.0, 1.0]];
        let f = svd(&a);
        // first nonzero entry of each left singular vector is positive
        assert!(f.u[[2, 0]] > 0.0);
        assert!(f.u[[3, 1]] > 0.0);
    }

    #[test]
    fn pinv_satisfies_moore_penrose_identities() {
        let mut rng = SplitMix64::new(5);
        for &(r, c) in &[(4, 4), (6, 3), (3, 6)] {
            let a = random_matrix(&mut rng, r, c);
            let p = pinv(&a, 1e-12);
            let apa = a.dot(&p).dot(&a);
            let pap = p.dot(&a).dot(&p);
            assert!(frobenius_norm(&(&apa - &a)) < 1e-9);
            assert!(frobenius_norm(&(&pap - &p)) < 1e-9);
        }
    }

    #[test]
    fn pinv_truncates_rank_deficiency() {
        // rank-1 matrix: pinv of u vᵀ is v uᵀ / (|u|² |v|²)
        let u = array![[1.0], [2.0]];
        let v = array![[3.0, 0.0, 4.0]];
        let a = u.dot(&v);
        let p = pinv(&a, 1e-12);
        let expected = v.t().dot(&u.t()) / (5.0_f64 * 25.0);
        assert!(frobenius_norm(&(&p - &expected)) < 1e-12);
    }

    #[test]
    fn projector_distance_is_span_invariant() {
        let a = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        // same span, rotated and scaled basis
        let b = array![[3.0, 1.0], [-1.0, 2.0], [0.0, 0.0]];
        assert!(projector_distance(&a, &b).unwrap() < 1e-12);
        let c = array![[1.0], [0.0], [1.0]];
        assert!(projector_distance(&a, &c).unwrap() > 0.5);
    }

    #[test]
    fn orthonormalize_rejects_dependent_columns() {
        let a = array![[1.0, 2.0], [1.0, 2.0]];
        assert!(orthonormalize(&a).is_err());
    }
}
