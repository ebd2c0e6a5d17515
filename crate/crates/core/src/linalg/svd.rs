//! One-sided (Hestenes) Jacobi singular value decomposition.
//!
//! Columns of a working copy are rotated pairwise until every pair is
//! orthogonal to working precision; the column norms are then the singular
//! values and the accumulated rotations form `v`.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, Vector};

const MAX_SWEEPS: usize = 100;
const REL_TOL: f64 = 1e-15;
const ABS_TOL_SCALE: f64 = 1e-12;
const NULL_COLUMN_SCALE: f64 = 1e-11;

/// Thin SVD `m = u · diag(s) · vᵀ` with `k = min(rows, cols)`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `m x k`, orthonormal columns.
    pub u: Matrix,
    /// `k` non-negative singular values in non-increasing order.
    pub s: Vector,
    /// `n x k`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `u · diag(s) · vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        truncate_rank(self, self.rank()).expect("full rank is always in range")
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if !m.all_finite() {
        return Err(Error::invalid("svd input contains NaN or Inf"));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(SvdResult {
            u: Matrix::zeros(rows, 0),
            s: Vector::zeros(0),
            v: Matrix::zeros(cols, 0),
        });
    }
    if rows >= cols {
        let (u, s, v) = tall_svd(m)?;
        Ok(finish(u, s, v))
    } else {
        let (u, s, v) = tall_svd(&m.transpose())?;
        Ok(finish(v, s, u))
    }
}

/// Rank-`k` truncation `Σ_{i<k} s_i u_i v_iᵀ`.
pub fn truncate_rank(svd: &SvdResult, k: usize) -> Result<Matrix> {
    if k == 0 || k > svd.rank() {
        return Err(Error::invalid(format!(
            "truncation rank {k} outside 1..={}",
            svd.rank()
        )));
    }
    let (rows, cols) = (svd.u.rows(), svd.v.rows());
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let out_row = out.row_mut(i);
        for r in 0..k {
            let a = svd.u[(i, r)] * svd.s[r];
            if a == 0.0 {
                continue;
            }
            for (j, o) in out_row.iter_mut().enumerate() {
                *o += a * svd.v[(j, r)];
            }
        }
    }
    Ok(out)
}

/// Works on a tall matrix (`rows >= cols`). Columns are stored as rows of
/// `work` so that each rotation touches contiguous memory.
fn tall_svd(m: &Matrix) -> Result<(Matrix, Vector, Matrix)> {
    let (rows, cols) = m.shape();
    let mut work = m.transpose();
    let mut vt = Matrix::identity(cols);
    let abs_tol = {
        let t = ABS_TOL_SCALE * m.frobenius_norm();
        t * t
    };

    let mut converged = false;
    let mut residual = 0.0;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        residual = 0.0f64;
        for i in 0..cols.saturating_sub(1) {
            for j in (i + 1)..cols {
                let a = dot(work.row(i), work.row(i));
                let b = dot(work.row(j), work.row(j));
                let d = dot(work.row(i), work.row(j));
                let scale = (a * b).sqrt();
                if scale > 0.0 {
                    residual = residual.max(d.abs() / scale);
                }
                if d.abs() <= (REL_TOL * scale).max(abs_tol) {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (2.0 * d);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut work, i, j, c, s);
                rotate_rows(&mut vt, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            sweeps: MAX_SWEEPS,
            residual,
        });
    }

    let norm = m.frobenius_norm();
    let mut s = Vector::zeros(cols);
    let mut u = Matrix::zeros(rows, cols);
    let mut null_cols = Vec::new();
    for j in 0..cols {
        let sj = dot(work.row(j), work.row(j)).sqrt();
        s[j] = sj;
        if norm == 0.0 || sj <= NULL_COLUMN_SCALE * norm {
            null_cols.push(j);
            continue;
        }
        for i in 0..rows {
            u[(i, j)] = work[(j, i)] / sj;
        }
    }
    complete_basis(&mut u, &null_cols);
    Ok((u, s, vt.transpose()))
}

/// Replaces the listed (zero) columns of `u` with unit vectors orthogonal to
/// every other column via Gram–Schmidt against the standard basis.
fn complete_basis(u: &mut Matrix, null_cols: &[usize]) {
    if null_cols.is_empty() {
        return;
    }
    let (rows, cols) = u.shape();
    let mut filled: Vec<usize> = (0..cols).filter(|c| !null_cols.contains(c)).collect();
    let mut candidate = 0usize;
    for &target in null_cols {
        loop {
            assert!(candidate < rows, "ran out of basis candidates");
            let mut w = vec![0.0; rows];
            w[candidate] = 1.0;
            candidate += 1;
            // two passes of classical Gram–Schmidt
            for _ in 0..2 {
                for &c in &filled {
                    let proj: f64 = (0..rows).map(|i| u[(i, c)] * w[i]).sum();
                    for (i, wi) in w.iter_mut().enumerate() {
                        *wi -= proj * u[(i, c)];
                    }
                }
            }
            let n = dot(&w, &w).sqrt();
            if n > 1e-8 {
                for (i, wi) in w.iter().enumerate() {
                    u[(i, target)] = wi / n;
                }
                filled.push(target);
                break;
            }
        }
    }
}

fn rotate_rows(m: &mut Matrix, i: usize, j: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(j * cols);
    let ri = &mut head[i * cols..(i + 1) * cols];
    let rj = &mut tail[..cols];
    for (x, y) in ri.iter_mut().zip(rj.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Sorts by descending singular value and fixes column signs so that the
/// largest-magnitude entry of every `u` column is positive.
fn finish(u: Matrix, s: Vector, v: Matrix) -> SvdResult {
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

    let mut su = Matrix::zeros(u.rows(), k);
    let mut sv = Matrix::zeros(v.rows(), k);
    let mut ss = Vector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        ss[dst] = s[src];
        let mut pivot = 0.0f64;
        for i in 0..u.rows() {
            if u[(i, src)].abs() > pivot.abs() {
                pivot = u[(i, src)];
            }
        }
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..u.rows() {
            su[(i, dst)] = sign * u[(i, src)];
        }
        for i in 0..v.rows() {
            sv[(i, dst)] = sign * v[(i, src)];
        }
    }
    SvdResult { u: su, s: ss, v: sv }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matmul, matmul_tn};
    use crate::sampling::RngState;

    fn random_matrix(rows: usize, cols: usize, rng: &mut RngState) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| 2.0 * rng.uniform() - 1.0)
    }

    /// Cyclic Jacobi eigenvalue iteration for a symmetric matrix; independent
    /// of the one-sided SVD path.
    fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
        let n = a.rows();
        let mut a = a.clone();
        for _ in 0..200 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    fn orthonormality_error(q: &Matrix) -> f64 {
        let qtq = matmul_tn(q, q).unwrap();
        qtq.max_abs_diff(&Matrix::identity(q.cols())).unwrap()
    }

    #[test]
    fn diagonal_matrix() {
        let r = svd(&Matrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(r.s.as_slice(), &[3.0, 2.0, 1.0]);
        assert!(r.u.max_abs_diff(&Matrix::identity(3)).unwrap() < 1e-15);
    }

    #[test]
    fn orthogonal_matrix_has_unit_singular_values() {
        let mut rng = RngState::new(3);
        let q = svd(&random_matrix(5, 5, &mut rng)).unwrap().u;
        let r = svd(&q).unwrap();
        for &s in r.s.iter() {
            assert!((s - 1.0).abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn singular_values_match_eigen_oracle() {
        let mut rng = RngState::new(17);
        let m = random_matrix(6, 4, &mut rng);
        let r = svd(&m).unwrap();
        let ev = symmetric_eigenvalues(&matmul_tn(&m, &m).unwrap());
        for (s, e) in r.s.iter().zip(&ev) {
            assert!((s - e.max(0.0).sqrt()).abs() < 1e-8, "{s} vs {}", e.sqrt());
        }
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = RngState::new(23);
        for &(m, n) in &[(7, 3), (3, 7), (8, 8), (1, 5), (5, 1)] {
            let a = random_matrix(m, n, &mut rng);
            let r = svd(&a).unwrap();
            assert_eq!(r.rank(), m.min(n));
            assert!(r.reconstruct().max_abs_diff(&a).unwrap() < 1e-9);
            assert!(orthonormality_error(&r.u) < 1e-9);
            assert!(orthonormality_error(&r.v) < 1e-9);
            for w in r.s.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn rank_deficient_input_keeps_orthonormal_factors() {
        let mut rng = RngState::new(29);
        let a = random_matrix(6, 1, &mut rng);
        let b = random_matrix(1, 5, &mut rng);
        let rank1 = matmul(&a, &b).unwrap();
        let r = svd(&rank1).unwrap();
        assert!(r.s[1] < 1e-12 * r.s[0]);
        assert!(orthonormality_error(&r.u) < 1e-9);
        assert!(orthonormality_error(&r.v) < 1e-9);
        assert!(r.reconstruct().max_abs_diff(&rank1).unwrap() < 1e-12);

        let zero = svd(&Matrix::zeros(3, 2)).unwrap();
        assert_eq!(zero.s.as_slice(), &[0.0, 0.0]);
        assert!(orthonormality_error(&zero.u) < 1e-12);
    }

    #[test]
    fn sign_convention() {
        let mut rng = RngState::new(31);
        let r = svd(&random_matrix(5, 4, &mut rng)).unwrap();
        for j in 0..4 {
            let col = r.u.column(j);
            let pivot = col
                .iter()
                .copied()
                .fold(0.0f64, |p, x| if x.abs() > p.abs() { x } else { p });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn truncation_of_diagonal() {
        let r = svd(&Matrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        let t = truncate_rank(&r, 2).unwrap();
        assert!(t.max_abs_diff(&Matrix::diag(&[3.0, 2.0, 0.0])).unwrap() < 1e-15);
        assert!(truncate_rank(&r, 0).is_err());
        assert!(truncate_rank(&r, 4).is_err());
    }

    #[test]
    fn truncation_error_is_tail_energy() {
        let mut rng = RngState::new(37);
        let a = random_matrix(8, 6, &mut rng);
        let r = svd(&a).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let err = truncate_rank(&r, k).unwrap().sub(&a).unwrap().frobenius_norm();
            let tail = r.s.as_slice()[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
            assert!((err - tail).abs() < 1e-9);
            assert!(err <= prev + 1e-12);
            prev = err;
        }
    }

    #[test]
    fn truncation_beats_random_competitors() {
        let mut rng = RngState::new(41);
        let a = random_matrix(8, 8, &mut rng);
        let r = svd(&a).unwrap();
        let best = truncate_rank(&r, 3).unwrap();
        let best_err = best.sub(&a).unwrap().frobenius_norm();
        for _ in 0..100 {
            let l = random_matrix(8, 3, &mut rng);
            let rt = random_matrix(3, 8, &mut rng);
            let mut c = matmul(&l, &rt).unwrap();
            c.scale(best.frobenius_norm() / c.frobenius_norm());
            assert!(best_err <= c.sub(&a).unwrap().frobenius_norm());
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let mut m = Matrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(svd(&m).is_err());
    }
}
