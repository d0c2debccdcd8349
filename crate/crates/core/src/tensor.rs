//! Dense row-major `f32` tensors and the kernels a transformer forward pass
//! needs.
//!
//! Matrix products accumulate in `f64` and store `f32`. Reductions that feed
//! token matching (`dot_f64`, `cosine_similarity`) use a fixed 8-lane
//! accumulation order so that every caller computing the same similarity gets
//! the same bits.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("dims must be positive, got {dims:?}")));
        }
        let expected = checked_numel(&dims)
            .ok_or_else(|| Error::Shape(format!("element count of {dims:?} overflows")))?;
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {expected} elements, buffer has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(Error::Shape("ragged rows".into()));
            }
            data.extend_from_slice(r.as_ref());
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        if dims.iter().product::<usize>() != self.data.len() || dims.contains(&0) {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        self.dims = dims;
        Ok(self)
    }

    /// `(rows, cols)` of a 2-d tensor.
    pub fn matrix_dims(&self) -> Result<(usize, usize)> {
        match self.dims[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!("expected a matrix, got {:?}", self.dims))),
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = *self.dims.last().unwrap();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = *self.dims.last().unwrap();
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Returns the first non-finite element, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Gathers the given rows of a matrix into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Tensor {
        let c = *self.dims.last().unwrap();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Tensor {
            dims: vec![rows.len(), c],
            data,
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "add of {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds `bias` to every row.
    pub fn add_row_bias(&mut self, bias: &[f32]) -> Result<()> {
        let c = *self.dims.last().unwrap();
        if bias.len() != c {
            return Err(Error::Shape(format!(
                "bias of length {} for rows of length {c}",
                bias.len()
            )));
        }
        for row in self.data.chunks_exact_mut(c) {
            for (x, b) in row.iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(())
    }
}

fn checked_numel(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// A strided read-only view of a matrix inside a flat `f32` buffer.
#[derive(Clone, Copy, Debug)]
pub struct MatView<'a> {
    pub data: &'a [f32],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatView<'a> {
    pub fn of(t: &'a Tensor) -> Result<Self> {
        let (rows, cols) = t.matrix_dims()?;
        Ok(Self {
            data: t.data(),
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        })
    }

    /// Columns `start..start + width` of a contiguous `rows × stride` buffer.
    pub fn columns(data: &'a [f32], rows: usize, stride: usize, start: usize, width: usize) -> Self {
        debug_assert!(start + width <= stride);
        Self {
            data: &data[start..],
            rows,
            cols: width,
            row_stride: stride,
            col_stride: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    /// Packs the view into `out` as a contiguous row-major `f64` matrix.
    pub fn pack_f64_into(self, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.rows * self.cols);
        for i in 0..self.rows {
            let base = i * self.row_stride;
            if self.col_stride == 1 {
                out.extend(self.data[base..base + self.cols].iter().map(|&v| v as f64));
            } else {
                out.extend((0..self.cols).map(|j| self.data[base + j * self.col_stride] as f64));
            }
        }
    }

    fn to_f64(self) -> Vec<f64> {
        let mut out = Vec::new();
        self.pack_f64_into(&mut out);
        out
    }
}

/// `out = a · b`, accumulated in `f64`. `out` is a contiguous `m × n` buffer.
pub fn gemm_into(a: MatView<'_>, b: MatView<'_>, out: &mut [f32]) -> Result<()> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul inner dims {}x{} · {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if out.len() != m * n {
        return Err(Error::Shape(format!(
            "output buffer {} for {m}x{n} product",
            out.len()
        )));
    }
    let a64 = a.to_f64();
    let b64 = b.to_f64();
    let mut c64 = vec![0.0f64; m * n];
    dgemm_packed(m, k, n, &a64, &b64, &mut c64);
    for (o, v) in out.iter_mut().zip(c64) {
        *o = v as f32;
    }
    Ok(())
}

/// `c = a · b` on contiguous row-major `f64` buffers.
///
/// Panics if a buffer is shorter than its stated dimensions.
pub fn dgemm_packed(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: lengths are checked above and all three matrices are
    // contiguous row-major, so every index dgemm touches is in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let av = MatView::of(a)?;
    let bv = MatView::of(b)?;
    let mut out = Tensor::zeros(&[av.rows, bv.cols]);
    gemm_into(av, bv, out.data_mut())?;
    Ok(out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let av = MatView::of(a)?;
    let bv = MatView::of(b)?.t();
    let mut out = Tensor::zeros(&[av.rows, bv.cols]);
    gemm_into(av, bv, out.data_mut())?;
    Ok(out)
}

/// Row-wise softmax in place over a contiguous `rows × cols` buffer.
pub fn softmax_rows_in_place(data: &mut [f32], cols: usize) {
    for row in data.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v as f64;
        }
        let inv = (1.0 / sum) as f32;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

pub fn softmax_rows(a: &Tensor) -> Result<Tensor> {
    let (_, cols) = a.matrix_dims()?;
    a.check_finite()?;
    let mut out = a.clone();
    softmax_rows_in_place(out.data_mut(), cols);
    Ok(out)
}

pub fn layer_norm(x: &Tensor, gamma: &[f32], beta: &[f32], eps: f32) -> Result<Tensor> {
    let (_, d) = x.matrix_dims()?;
    if gamma.len() != d || beta.len() != d {
        return Err(Error::Shape(format!(
            "layer norm affine params {}/{} for width {d}",
            gamma.len(),
            beta.len()
        )));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(d) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
        let var = row
            .iter()
            .map(|&v| {
                let c = v as f64 - mean;
                c * c
            })
            .sum::<f64>()
            / d as f64;
        let inv = 1.0 / (var + eps as f64).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gamma).zip(beta) {
            *v = ((*v as f64 - mean) * inv) as f32 * g + b;
        }
    }
    Ok(out)
}

/// GELU, tanh approximation.
pub fn gelu_scalar(x: f32) -> f32 {
    const SQRT_2_OVER_PI: f32 = 0.797_884_6;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

pub fn gelu_in_place(data: &mut [f32]) {
    for v in data {
        *v = gelu_scalar(*v);
    }
}

pub fn gelu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    gelu_in_place(out.data_mut());
    out
}

/// `exp(x)` for `f64`, branch-free so row loops vectorize.
///
/// Range reduction `x = k·ln2 + r` with `|r| ≤ ln2/2`, then a degree-12
/// Taylor polynomial for `exp(r)` and an exponent-bit shift for `2^k`.
/// Relative error stays below 1e-14 on `[-708, 709]`; inputs below -708
/// return 0 and inputs above 709 saturate near `f64::MAX`.
#[inline]
pub fn fast_exp(x: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // 1.5·2^52: adding it rounds to the nearest integer in the low mantissa
    // bits.
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    let underflow = x < -708.0;
    let x = x.clamp(-708.0, 709.0);
    let t = x * LOG2E + SHIFTER;
    let k = t - SHIFTER;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // k lies in [-1021, 1023] after the clamp, so 2^k is a normal number.
    let ki = t.to_bits().wrapping_sub(SHIFTER.to_bits()).wrapping_add(1023);
    let scale = f64::from_bits(ki << 52);
    let keep = if underflow { 0.0 } else { 1.0 };
    p * scale * keep
}

/// Softmax of one `f64` row in place.
pub fn softmax_row_f64(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for x in row.iter_mut() {
        *x = fast_exp(*x - max);
    }
    let mut acc = [0.0f64; 8];
    let mut chunks = row.chunks_exact(8);
    for c in &mut chunks {
        for l in 0..8 {
            acc[l] += c[l];
        }
    }
    let tail: f64 = chunks.remainder().iter().sum();
    let inv = 1.0 / (acc.iter().sum::<f64>() + tail);
    for x in row.iter_mut() {
        *x *= inv;
    }
}

/// Dot product in `f64` with eight interleaved accumulators.
pub fn dot_f64(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = u.len() / 8;
    for c in 0..chunks {
        let (uc, vc) = (&u[c * 8..c * 8 + 8], &v[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += uc[l] * vc[l];
        }
    }
    for i in chunks * 8..u.len() {
        acc[i % 8] += u[i] * v[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Unit vector in `f64`; the zero vector maps to zeros.
pub fn normalize_f64(u: &[f32]) -> Vec<f64> {
    let v: Vec<f64> = u.iter().map(|&x| x as f64).collect();
    let norm = dot_f64(&v, &v).sqrt();
    if norm == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x / norm).collect()
}

/// Similarity of two already-normalized vectors, clamped to `[-1, 1]`.
pub fn cosine_of_normalized(u: &[f64], v: &[f64]) -> f64 {
    dot_f64(u, v).clamp(-1.0, 1.0)
}

/// Cosine similarity; zero if either vector is zero.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine of lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(cosine_of_normalized(&normalize_f64(u), &normalize_f64(v)))
}
