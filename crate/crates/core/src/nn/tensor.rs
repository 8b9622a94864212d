use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Dense row-major array of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Entries uniform in [-bound, bound].
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut SplitMix64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.iter_mut().for_each(|x| *x = rng.uniform(-bound, bound));
        t
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row `i` of a tensor of rank >= 2 (trailing dims flattened).
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.row_len();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// `out += m · x` for a row-major `rows × x.len()` matrix.
#[inline]
pub(crate) fn matvec_acc(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(m.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += mᵀ · y`.
#[inline]
pub(crate) fn matvec_t_acc(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(m.len(), y.len() * cols);
    for (yr, row) in y.iter().zip(m.chunks_exact(cols)) {
        axpy(*yr, row, out);
    }
}

/// `m += y ⊗ x`.
#[inline]
pub(crate) fn outer_acc(m: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (yr, row) in y.iter().zip(m.chunks_exact_mut(cols)) {
        axpy(*yr, x, row);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Row-major transpose of an `r × c` matrix.
pub(crate) fn transpose(m: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; m.len()];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = m[i * c + j];
        }
    }
    out
}

/// `C (m × n) += A (m × k) · B (k × n)` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + n - 1 < c.len());
    // SAFETY: the asserts above keep every accessed element in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// `out (n × r) += X (n × d) · Wᵀ` for `W` of shape `r × d`, i.e. each
/// output row gains `W·x_t`.
pub(crate) fn gemm_rows(x: &[f64], d: usize, w: &[f64], r: usize, out: &mut [f64]) {
    let n = x.len() / d.max(1);
    gemm_acc(n, d, r, x, (d, 1), w, (1, d), out, r);
}

/// `dw (r × d) += Aᵀ · X` for `A` of shape `n × r` and `X` of shape `n × d`.
pub(crate) fn gemm_at_x(a: &[f64], r: usize, x: &[f64], d: usize, dw: &mut [f64]) {
    let n = a.len() / r.max(1);
    gemm_acc(r, n, d, a, (1, r), x, (d, 1), dw, d);
}

/// `dx (n × w) += A · W[:, d-w..]` for `A` of shape `n × r` and `W` of
/// shape `r × d`; only the trailing `w` input columns are produced.
pub(crate) fn gemm_a_w_tail(a: &[f64], r: usize, w: &[f64], d: usize, dx: &mut [f64], width: usize) {
    let n = a.len() / r.max(1);
    gemm_acc(n, r, width, a, (r, 1), &w[d - width..], (d, 1), dx, width);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn shapes_and_rows() {
        let t = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(t.row(1), &[4., 5., 6.]);
        assert_eq!((t.rows(), t.row_len()), (2, 3));
        assert!(Tensor::from_vec(&[2, 2], vec![1.0]).is_err());
    }

    #[test]
    fn matvec_helpers_agree_with_loops() {
        let m = [1., 2., 3., 4., 5., 6.];
        let mut out = [0.0; 2];
        matvec_acc(&m, &[1., 0., -1.], &mut out);
        assert_eq!(out, [-2., -2.]);
        let mut back = [0.0; 3];
        matvec_t_acc(&m, &[1., 1.], &mut back);
        assert_eq!(back, [5., 7., 9.]);
        let mut g = [0.0; 6];
        outer_acc(&mut g, &[1., 2.], &[1., 0., 3.]);
        assert_eq!(g, [1., 0., 3., 2., 0., 6.]);
        let a: Vec<f64> = (0..11).map(f64::from).collect();
        assert_eq!(dot(&a, &a), (0..11).map(|i| (i * i) as f64).sum::<f64>());
    }

    fn naive_mm(a: &[f64], n: usize, k: usize, b: &[f64], m: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                for l in 0..k {
                    out[i * m + j] += a[i * k + l] * b[l * m + j];
                }
            }
        }
        out
    }

    #[test]
    fn blocked_kernels_match_naive_products() {
        let mut rng = SplitMix64::new(11);
        for &(n, d, r) in &[(1, 3, 5), (4, 2, 8), (7, 5, 6), (9, 4, 3)] {
            let x: Vec<f64> = (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let w: Vec<f64> = (0..r * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let a: Vec<f64> = (0..n * r).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let close = |p: &[f64], q: &[f64]| p.iter().zip(q).all(|(u, v)| (u - v).abs() < 1e-12);

            let mut out = vec![0.0; n * r];
            gemm_rows(&x, d, &w, r, &mut out);
            assert!(close(&out, &naive_mm(&x, n, d, &transpose(&w, r, d), r)));

            let mut dw = vec![0.0; r * d];
            gemm_at_x(&a, r, &x, d, &mut dw);
            assert!(close(&dw, &naive_mm(&transpose(&a, n, r), r, n, &x, d)));

            let full = naive_mm(&a, n, r, &w, d);
            for width in 0..=d {
                let mut dx = vec![0.0; n * width];
                gemm_a_w_tail(&a, r, &w, d, &mut dx, width);
                let want: Vec<f64> = (0..n).flat_map(|t| full[t * d + d - width..(t + 1) * d].to_vec()).collect();
                assert!(close(&dx, &want));
            }
        }
    }
}
