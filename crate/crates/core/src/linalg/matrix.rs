use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Dense vector of `f64`.
#[derive(Clone, PartialEq, Default)]
pub struct Vector {
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "buffer of length {} cannot back a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector::from((0..self.rows).map(|i| self[(i, j)]).collect::<Vec<_>>())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Entry-wise difference `self - other`.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "cannot subtract {}x{} from {}x{}",
                other.rows, other.cols, self.rows, self.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self · v` for a vector of length `cols`.
    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        if v.len() != self.cols {
            return Err(Error::shape(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let out = (0..self.rows)
            .map(|i| dot(self.row(i), v.as_slice()))
            .collect::<Vec<_>>();
        Ok(Vector::from(out))
    }

    /// `selfᵀ · v` for a vector of length `rows`.
    pub fn matvec_t(&self, v: &Vector) -> Result<Vector> {
        if v.len() != self.rows {
            return Err(Error::shape(format!(
                "cannot multiply transpose of {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(Vector::from(out))
    }

    /// Accumulates the outer product `u vᵀ` into `self`.
    pub fn add_outer(&mut self, u: &Vector, v: &Vector) -> Result<()> {
        if u.len() != self.rows || v.len() != self.cols {
            return Err(Error::shape(format!(
                "outer product {}x{} does not fit {}x{} matrix",
                u.len(),
                v.len(),
                self.rows,
                self.cols
            )));
        }
        for i in 0..self.rows {
            let ui = u[i];
            let cols = self.cols;
            for (a, &vj) in self.data[i * cols..(i + 1) * cols].iter_mut().zip(v.as_slice()) {
                *a += ui * vj;
            }
        }
        Ok(())
    }

    pub(crate) fn view(&self) -> View<'_> {
        View {
            data: &self.data,
            rows: self.rows,
            cols: self.cols,
            rs: self.cols as isize,
            cs: 1,
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector { data: vec![0.0; len] }
    }

    pub fn filled(len: usize, v: f64) -> Self {
        Vector { data: vec![v; len] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector {
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "vector lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Vector {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Vector) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector { data }
    }
}

impl From<&[f64]> for Vector {
    fn from(data: &[f64]) -> Self {
        Vector { data: data.to_vec() }
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vector{:?}", self.data)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Strided read-only view used to feed the GEMM kernel without copies.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub rs: isize,
    pub cs: isize,
}

impl<'a> View<'a> {
    /// Row-major `rows x cols` view over a slice.
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        View {
            data,
            rows,
            cols,
            rs: cols as isize,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn max_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs as usize + (self.cols - 1) * self.cs as usize
        }
    }
}

/// `c = alpha · a · b + beta · c`, where `c` is a row-major `a.rows x b.cols` buffer.
///
/// Panics on inconsistent shapes; callers validate user-facing shapes first.
pub(crate) fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "gemm inner dimension mismatch");
    assert_eq!(c.len(), m * n, "gemm output buffer has wrong length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.fill(0.0);
        } else {
            c.iter_mut().for_each(|x| *x *= beta);
        }
        return;
    }
    assert!(a.max_index() < a.data.len(), "gemm lhs view out of bounds");
    assert!(b.max_index() < b.data.len(), "gemm rhs view out of bounds");
    // SAFETY: both views were bounds-checked above and `c` holds exactly m*n
    // contiguous elements addressed with row stride n and column stride 1.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm(1.0, a.view(), b.view(), 0.0, &mut out.data);
    Ok(out)
}

/// `a · bᵀ`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(format!(
            "cannot multiply {}x{} by transpose of {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    gemm(1.0, a.view(), b.view().t(), 0.0, &mut out.data);
    Ok(out)
}

/// `aᵀ · b`.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::shape(format!(
            "cannot multiply transpose of {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    gemm(1.0, a.view().t(), b.view(), 0.0, &mut out.data);
    Ok(out)
}

/// Logistic function; see [`super::kernels::sigmoid`].
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    super::kernels::sigmoid(x)
}

#[inline]
pub fn tanh_scalar(x: f64) -> f64 {
    super::kernels::tanh(x)
}

pub fn sigmoid(x: &Vector) -> Vector {
    x.map(sigmoid_scalar)
}

pub fn tanh_vec(x: &Vector) -> Vector {
    x.map(tanh_scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::RngState;
    use proptest::prelude::*;

    fn random_matrix(rows: usize, cols: usize, rng: &mut RngState) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| 2.0 * rng.uniform() - 1.0)
    }

    fn naive_product(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    #[test]
    fn identity_times_matrix() {
        let m = Matrix::from_rows(&[&[1.5, -2.0], &[0.25, 7.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &m).unwrap(), m);
    }

    #[test]
    fn hand_computed_product() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Matrix::from_rows(&[&[0.0], &[1.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), Matrix::from_rows(&[&[2.0], &[4.0]]));
    }

    #[test]
    fn product_matches_triple_loop() {
        let mut rng = RngState::new(11);
        let a = random_matrix(5, 7, &mut rng);
        let b = random_matrix(7, 3, &mut rng);
        let fast = matmul(&a, &b).unwrap();
        let slow = naive_product(&a, &b);
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-12);
    }

    #[test]
    fn transposed_products() {
        let mut rng = RngState::new(12);
        let a = random_matrix(4, 6, &mut rng);
        let b = random_matrix(5, 6, &mut rng);
        let nt = matmul_nt(&a, &b).unwrap();
        assert!(nt.max_abs_diff(&naive_product(&a, &b.transpose())).unwrap() < 1e-12);
        let c = random_matrix(4, 3, &mut rng);
        let tn = matmul_tn(&a, &c).unwrap();
        assert!(tn.max_abs_diff(&naive_product(&a.transpose(), &c)).unwrap() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("cannot multiply"), "{msg}");
    }

    #[test]
    fn matvec_and_transpose() {
        let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let v = Vector::from(vec![1.0, 0.0, -1.0]);
        assert_eq!(a.matvec(&v).unwrap().as_slice(), &[-2.0, -2.0]);
        let w = Vector::from(vec![1.0, 1.0]);
        assert_eq!(a.matvec_t(&w).unwrap().as_slice(), &[5.0, 7.0, 9.0]);
        assert!(a.matvec(&w).is_err());
    }

    #[test]
    fn sigmoid_fixed_points() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let big = sigmoid_scalar(100.0);
        assert!(big > 1.0 - 1e-15 && big <= 1.0);
        let tiny = sigmoid_scalar(-700.0);
        assert!(tiny > 0.0 && tiny.is_finite());
        assert!(sigmoid_scalar(700.0).is_finite());
    }

    #[test]
    fn tanh_sigmoid_identity() {
        let mut rng = RngState::new(5);
        let x = Vector::from((0..200).map(|_| 10.0 * rng.uniform() - 5.0).collect::<Vec<_>>());
        let t = tanh_vec(&x);
        let via_sigmoid = sigmoid(&x.map(|v| 2.0 * v)).map(|s| 2.0 * s - 1.0);
        assert!(t.max_abs_diff(&via_sigmoid) < 1e-12);
        assert_eq!(tanh_vec(&Vector::zeros(1))[0], 0.0);
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(x in -700.0f64..700.0) {
            prop_assert!((sigmoid_scalar(x) + sigmoid_scalar(-x) - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn tanh_is_odd(x in -50.0f64..50.0) {
            prop_assert!((tanh_scalar(x) + tanh_scalar(-x)).abs() <= 1e-15);
        }

        #[test]
        fn sigmoid_is_monotone(mut xs in proptest::collection::vec(-40.0f64..40.0, 2..50)) {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let s = sigmoid(&Vector::from(xs));
            for w in s.as_slice().windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }

        #[test]
        fn matmul_is_associative(seed in any::<u64>(), m in 1usize..6, k in 1usize..6, l in 1usize..6, n in 1usize..6) {
            let mut rng = RngState::new(seed);
            let a = random_matrix(m, k, &mut rng);
            let b = random_matrix(k, l, &mut rng);
            let c = random_matrix(l, n, &mut rng);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let rel = left.sub(&right).unwrap().frobenius_norm() / left.frobenius_norm().max(1e-300);
            prop_assert!(rel <= 1e-10);
        }
    }
}
