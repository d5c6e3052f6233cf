//! Small dense helpers on top of `nalgebra`.

use nalgebra::SymmetricEigen;

use crate::{CMatrix, CVector, C64};

/// Relative cutoff for reporting numerical rank.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Relative residual below which a column is treated as already in the span
/// when building null-space bases. Close to rounding level on purpose: a
/// nearly dependent masked column that gets dropped leaks straight into every
/// filter row built on the complement.
pub const SPAN_CUTOFF: f64 = 1e-14;

/// Orthonormal basis of `span(v)` by Gram-Schmidt with column pivoting.
///
/// At each step the column with the largest residual is taken; columns whose
/// residual drops to `SPAN_CUTOFF` times the largest input column norm are
/// treated as dependent. Each new vector is orthogonalized twice.
pub fn span_basis(v: &CMatrix) -> CMatrix {
    pivoted_basis(v, SPAN_CUTOFF)
}

fn pivoted_basis(v: &CMatrix, rel_tol: f64) -> CMatrix {
    let m = v.nrows();
    let mut residual: Vec<CVector> = (0..v.ncols()).map(|k| v.column(k).into_owned()).collect();
    let scale = residual.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut basis: Vec<CVector> = Vec::new();
    while basis.len() < m {
        let Some((pick, norm)) = residual
            .iter()
            .map(|c| c.norm())
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
        else {
            break;
        };
        if !(norm > rel_tol * scale) {
            break;
        }
        let mut u = residual.swap_remove(pick);
        for b in &basis {
            let c = b.dotc(&u);
            u -= b * c;
        }
        let n = u.norm();
        if n == 0.0 {
            break;
        }
        u /= C64::new(n, 0.0);
        for c in residual.iter_mut() {
            let proj = u.dotc(c);
            *c -= &u * proj;
        }
        basis.push(u);
    }
    if basis.is_empty() {
        return CMatrix::zeros(m, 0);
    }
    CMatrix::from_columns(&basis)
}

/// Orthonormal basis of the null space of `Vᴴ`, where the columns of `v` are
/// steering vectors. Equivalently, the orthogonal complement of `span(v)`.
///
/// The complement is read off the eigenvectors of the projector
/// `I - U Uᴴ` (with `U = span_basis(v)`) that have eigenvalue one. Those
/// eigenvalues are exactly 0 or 1, so the eigenvectors are well conditioned
/// even when `v` is numerically rank deficient.
pub fn null_space_of_adjoint(v: &CMatrix) -> CMatrix {
    let m = v.nrows();
    let span = span_basis(v);
    let rank = span.ncols();
    if rank == 0 {
        return CMatrix::identity(m, m);
    }
    if rank == m {
        return CMatrix::zeros(m, 0);
    }
    let projector = CMatrix::identity(m, m) - &span * span.adjoint();
    let (_, vectors) = hermitian_eigen(&projector);
    vectors.columns(rank, m - rank).into_owned()
}

/// Singular values of a complex matrix, descending, from the eigenvalues of
/// the smaller Gram matrix. Values below about `1e-8 * sigma_max` are not
/// resolved.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    let gram = if a.nrows() <= a.ncols() {
        a * a.adjoint()
    } else {
        a.adjoint() * a
    };
    let (vals, _) = hermitian_eigen(&gram);
    vals.iter().rev().map(|&x| x.max(0.0).sqrt()).collect()
}

/// Rank from the pivoted Gram-Schmidt basis, with residuals counted above
/// `rel_tol` times the largest column norm.
pub fn numerical_rank(a: &CMatrix, rel_tol: f64) -> usize {
    pivoted_basis(a, rel_tol).ncols()
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(a.clone());
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// `sum_j conj(u_j) v_j`.
#[inline]
pub fn dot_conj(u: impl IntoIterator<Item = C64>, v: impl IntoIterator<Item = C64>) -> C64 {
    u.into_iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(rows, cols, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn null_space_is_orthonormal_complement() {
        for (m, k) in [(5, 0), (6, 2), (8, 7), (4, 4), (3, 5)] {
            let v = random_matrix(m, k, (m * 10 + k) as u64);
            let q = null_space_of_adjoint(&v);
            let dim = m.saturating_sub(k);
            assert_eq!(q.ncols(), dim);
            let gram = q.adjoint() * &q;
            assert!((gram - CMatrix::identity(dim, dim)).norm() < 1e-12);
            if k > 0 {
                assert!((v.adjoint() * &q).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_columns() {
        let a = random_matrix(6, 1, 1);
        let mut v = CMatrix::zeros(6, 3);
        v.set_column(0, &a.column(0));
        v.set_column(1, &(a.column(0) * C64::new(0.0, 2.0)));
        v.set_column(2, &random_matrix(6, 1, 2).column(0));
        assert_eq!(numerical_rank(&v, RANK_CUTOFF), 2);
        let q = null_space_of_adjoint(&v);
        assert_eq!(q.ncols(), 4);
        assert!((v.adjoint() * &q).norm() < 1e-12);
        assert!((q.adjoint() * &q - CMatrix::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let a = random_matrix(5, 5, 3);
        let h = &a * a.adjoint();
        let (vals, vecs) = hermitian_eigen(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(5, vals.iter().map(|&x| C64::new(x, 0.0))));
        assert!((&vecs * d * vecs.adjoint() - h).norm() < 1e-10);
    }
}
