//! Small dense helpers that nalgebra does not expose directly.

use nalgebra::{DMatrix, DVector};

/// Outcome of an unpivoted LDLᵀ factorization of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricPivots {
    /// Diagonal pivots `d_k`, in elimination order. Truncated at the first
    /// non-positive pivot.
    pub pivots: Vec<f64>,
    /// True when every pivot is strictly positive.
    pub positive: bool,
}

impl SymmetricPivots {
    pub fn smallest(&self) -> f64 {
        self.pivots.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// LDLᵀ pivots of a symmetric matrix. Stops at the first pivot that is not
/// strictly positive, which is exactly where a Cholesky factorization would fail.
pub fn symmetric_pivots(a: &DMatrix<f64>) -> SymmetricPivots {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_pivots needs a square matrix");
    let mut l = DMatrix::<f64>::identity(n, n);
    let mut d = Vec::with_capacity(n);
    for j in 0..n {
        let mut dj = a[(j, j)];
        for k in 0..j {
            dj -= l[(j, k)] * l[(j, k)] * d[k];
        }
        d.push(dj);
        if !(dj > 0.0) {
            return SymmetricPivots { pivots: d, positive: false };
        }
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)] * d[k];
            }
            l[(i, j)] = v / dj;
        }
    }
    SymmetricPivots { pivots: d, positive: true }
}

/// Eigenvalues of a symmetric 1×1, 2×2 or 3×3 matrix from its characteristic
/// polynomial, sorted ascending. `None` for larger matrices.
pub fn small_symmetric_eigenvalues(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = a.nrows();
    let mut ev = match n {
        1 => vec![a[(0, 0)]],
        2 => {
            let tr = a[(0, 0)] + a[(1, 1)];
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            vec![tr / 2.0 - disc, tr / 2.0 + disc]
        }
        3 => {
            // Trigonometric solution of the symmetric cubic.
            let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
            if p1 == 0.0 {
                vec![a[(0, 0)], a[(1, 1)], a[(2, 2)]]
            } else {
                let q = (a[(0, 0)] + a[(1, 1)] + a[(2, 2)]) / 3.0;
                let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
                let p = (p2 / 6.0).sqrt();
                let b = (a - DMatrix::<f64>::identity(3, 3) * q) / p;
                let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
                let phi = r.acos() / 3.0;
                let e1 = q + 2.0 * p * phi.cos();
                let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
                vec![e1, 3.0 * q - e1 - e3, e3]
            }
        }
        _ => return None,
    };
    ev.sort_by(|x, y| x.total_cmp(y));
    Some(ev)
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}
