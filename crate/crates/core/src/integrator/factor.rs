//! Cholesky-type factorization `b b^T = B` for positive semi-definite diffusion matrices.

use crate::linalg::SquareMatrix;
use thiserror::Error;

/// Default relative shift below which negative pivots are treated as roundoff.
pub const DEFAULT_FACTORIZATION_SHIFT: f64 = 1e-14;

/// Tolerated symmetry defect `|B_ij - B_ji|`.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("diffusion matrix is not symmetric (|B_ij - B_ji| = {0:e})")]
    NotSymmetric(f64),
    #[error("diffusion matrix is not positive semi-definite (pivot {pivot:e} at index {index})")]
    NotPositiveSemiDefinite { index: usize, pivot: f64 },
    #[error("diffusion matrix has a non-finite entry")]
    NonFinite,
}

/// Reusable buffers for [`factor_into`].
#[derive(Debug, Clone)]
pub struct FactorWorkspace {
    schur: SquareMatrix,
    perm: Vec<usize>,
}

impl FactorWorkspace {
    pub fn new(n: usize) -> Self {
        Self { schur: SquareMatrix::zeros(n), perm: (0..n).collect() }
    }
}

/// Factors a symmetric PSD matrix, returning `b` with `b b^T = B`.
///
/// Uses diagonal pivoting: the largest remaining Schur-complement diagonal is
/// eliminated first, and once every remaining pivot is at most
/// `shift * max|B|` the remaining columns of `b` are left at zero. A pivot
/// below `-shift * max|B|`, or a non-negligible off-diagonal entry left in
/// the zero Schur complement, means `B` is indefinite.
///
/// The factor is lower triangular in the pivot order (and in the natural
/// order whenever no pivoting swap occurs).
pub fn factor_diffusion(b: &SquareMatrix, shift: f64) -> Result<SquareMatrix, FactorError> {
    let mut ws = FactorWorkspace::new(b.dim());
    let mut out = SquareMatrix::zeros(b.dim());
    factor_into(b, shift, &mut ws, &mut out)?;
    Ok(out)
}

/// Allocation-free form of [`factor_diffusion`]. Returns the numerical rank.
pub fn factor_into(
    b: &SquareMatrix,
    shift: f64,
    ws: &mut FactorWorkspace,
    out: &mut SquareMatrix,
) -> Result<usize, FactorError> {
    let n = b.dim();
    if b.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(FactorError::NonFinite);
    }
    let asym = b.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(FactorError::NotSymmetric(asym));
    }
    let norm = b.max_abs();
    let pivot_tol = shift * norm;
    let residual_tol = 1e-10 * norm.max(1.0);

    let a = &mut ws.schur;
    *a = b.clone();
    let p = &mut ws.perm;
    p.clear();
    p.extend(0..n);
    out.fill(0.0);

    for k in 0..n {
        let mut best = k;
        for j in k + 1..n {
            if a[(p[j], p[j])] > a[(p[best], p[best])] {
                best = j;
            }
        }
        p.swap(k, best);
        let pk = p[k];
        let pivot = a[(pk, pk)];
        if pivot <= pivot_tol {
            // Everything left should be (numerically) zero.
            for i in k..n {
                let pi = p[i];
                let d = a[(pi, pi)];
                if d < -pivot_tol {
                    return Err(FactorError::NotPositiveSemiDefinite { index: pi, pivot: d });
                }
                for &pj in &p[k..i] {
                    if a[(pi, pj)].abs() > residual_tol {
                        return Err(FactorError::NotPositiveSemiDefinite { index: pi, pivot: d });
                    }
                }
            }
            return Ok(k);
        }
        let l = pivot.sqrt();
        out[(pk, k)] = l;
        for &pi in &p[k + 1..n] {
            out[(pi, k)] = a[(pi, pk)] / l;
        }
        for i in k + 1..n {
            let pi = p[i];
            let li = out[(pi, k)];
            for &pj in &p[k + 1..=i] {
                let v = a[(pi, pj)] - li * out[(pj, k)];
                a[(pi, pj)] = v;
                a[(pj, pi)] = v;
            }
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::test_support::interior_point;
    use crate::process::{wright_fisher_process, WrightFisherParams};
    use crate::state::ReducedState;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_case() {
        let b = factor_diffusion(&SquareMatrix::from_diagonal(&[0.125, 0.125]), 1e-14).unwrap();
        assert_eq!(b, SquareMatrix::from_diagonal(&[0.125f64.sqrt(), 0.125f64.sqrt()]));
    }

    #[test]
    fn rank_one_face_matrix() {
        let m = SquareMatrix::from_rows(&[vec![0.25, -0.25], vec![-0.25, 0.25]]);
        let b = factor_diffusion(&m, 1e-14).unwrap();
        assert_eq!(b, SquareMatrix::from_rows(&[vec![0.5, 0.0], vec![-0.5, 0.0]]));
        assert_eq!(b.gram(), m);
    }

    #[test]
    fn indefinite_inputs_are_rejected() {
        let m = SquareMatrix::from_rows(&[vec![-0.1, 0.0], vec![0.0, 0.1]]);
        assert!(matches!(factor_diffusion(&m, 1e-14), Err(FactorError::NotPositiveSemiDefinite { .. })));
        let zero_diag = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(factor_diffusion(&zero_diag, 1e-14).is_err());
        let asym = SquareMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]);
        assert!(matches!(factor_diffusion(&asym, 1e-14), Err(FactorError::NotSymmetric(_))));
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let mut ws = FactorWorkspace::new(3);
        let mut out = SquareMatrix::identity(3);
        let rank = factor_into(&SquareMatrix::zeros(3), 1e-14, &mut ws, &mut out).unwrap();
        assert_eq!(rank, 0);
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn tiny_negative_pivots_are_roundoff() {
        let m = SquareMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1e-16]]);
        let b = factor_diffusion(&m, 1e-14).unwrap();
        assert_eq!(b[(1, 1)], 0.0);
    }

    #[test]
    fn wright_fisher_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for k in [2usize, 3, 4] {
            let p = wright_fisher_process(&WrightFisherParams::new(vec![1.0; k + 1])).unwrap();
            for _ in 0..10_000 / 3 {
                let y = ReducedState::new(interior_point(&mut rng, k)).unwrap();
                let m = p.diffusion(&y, 0.0).unwrap();
                let b = factor_diffusion(&m, DEFAULT_FACTORIZATION_SHIFT).unwrap();
                assert!(b.gram().max_abs_diff(&m) <= 1e-10 * m.max_abs().max(1.0));
            }
        }
    }

    fn psd_from(entries: &[f64], n: usize, rank: usize) -> SquareMatrix {
        // G is n x rank; B = G G^T is PSD with rank <= rank.
        let mut b = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = (0..rank).map(|r| entries[i * rank + r] * entries[j * rank + r]).sum();
            }
        }
        // Exact symmetry.
        for i in 0..n {
            for j in 0..i {
                b[(i, j)] = b[(j, i)];
            }
        }
        b
    }

    proptest! {
        #[test]
        fn round_trip_on_random_psd(
            n in 1usize..6,
            rank_frac in 0.0f64..1.0,
            entries in prop::collection::vec(-1.0f64..1.0, 36),
        ) {
            let rank = ((n as f64 * rank_frac).floor() as usize).min(n);
            let b = psd_from(&entries, n, rank.max(1));
            let f = factor_diffusion(&b, DEFAULT_FACTORIZATION_SHIFT).unwrap();
            prop_assert!(f.gram().max_abs_diff(&b) <= 1e-10 * b.max_abs().max(1.0));
        }
    }
}
