use crate::error::{Error, Result};
use crate::tensor::{dgemm_packed, softmax_row_f64, MatView, Tensor};

/// `ln n` per key position, the additive bias of proportional attention.
pub fn log_sizes(sizes: &[u32]) -> Vec<f64> {
    sizes.iter().map(|&n| (n as f64).ln()).collect()
}

/// Reusable `f64` buffers for per-head attention.
#[derive(Default)]
struct Scratch {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    scores: Vec<f64>,
    out: Vec<f64>,
}

/// One head: `softmax(q·kᵀ/√d + bias)·v`, written as `f32` into a
/// contiguous `s × d` buffer. Everything in between stays in `f64`.
fn head_attention(
    q: MatView<'_>,
    k: MatView<'_>,
    v: MatView<'_>,
    bias: Option<&[f64]>,
    scratch: &mut Scratch,
    out: &mut [f32],
) {
    let (s, d, t) = (q.rows, q.cols, k.rows);
    let scale = 1.0 / (d as f64).sqrt();
    q.pack_f64_into(&mut scratch.q);
    k.t().pack_f64_into(&mut scratch.k);
    v.pack_f64_into(&mut scratch.v);
    scratch.scores.resize(s * t, 0.0);
    dgemm_packed(s, d, t, &scratch.q, &scratch.k, &mut scratch.scores);
    for row in scratch.scores.chunks_exact_mut(t) {
        match bias {
            Some(b) => {
                for (x, &l) in row.iter_mut().zip(b) {
                    *x = *x * scale + l;
                }
            }
            None => {
                for x in row.iter_mut() {
                    *x *= scale;
                }
            }
        }
        softmax_row_f64(row);
    }
    scratch.out.resize(s * v.cols, 0.0);
    dgemm_packed(s, t, v.cols, &scratch.scores, &scratch.v, &mut scratch.out);
    for (o, &x) in out.iter_mut().zip(&scratch.out) {
        *o = x as f32;
    }
}

/// Scaled dot-product attention with the optional `ln n` key bias.
///
/// `q`, `k`, `v` are `[H, S, d]`; the result is `[S, H·d]` with heads
/// concatenated, before any output projection. `sizes = None` is vanilla
/// attention.
pub fn proportional_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    sizes: Option<&[u32]>,
) -> Result<Tensor> {
    let [h, s, d] = match q.dims() {
        &[h, s, d] => [h, s, d],
        other => return Err(Error::Shape(format!("q must be [H, S, d], got {other:?}"))),
    };
    if k.dims() != q.dims() || v.dims() != q.dims() {
        return Err(Error::Shape(format!(
            "q {:?}, k {:?}, v {:?}",
            q.dims(),
            k.dims(),
            v.dims()
        )));
    }
    let bias = match sizes {
        Some(n) if n.len() != s => {
            return Err(Error::Shape(format!("{} sizes for {s} tokens", n.len())))
        }
        Some(n) => Some(log_sizes(n)),
        None => None,
    };
    let mut out = Tensor::zeros(&[s, h * d]);
    let mut scratch = Scratch::default();
    let mut head_out = vec![0.0f32; s * d];
    for head in 0..h {
        fn block(t: &Tensor, head: usize, s: usize, d: usize) -> MatView<'_> {
            MatView::columns(&t.data()[head * s * d..(head + 1) * s * d], s, d, 0, d)
        }
        let (q, k, v) = (block(q, head, s, d), block(k, head, s, d), block(v, head, s, d));
        head_attention(q, k, v, bias.as_deref(), &mut scratch, &mut head_out);
        for (i, row) in head_out.chunks_exact(d).enumerate() {
            out.row_mut(i)[head * d..(head + 1) * d].copy_from_slice(row);
        }
    }
    Ok(out)
}

/// Multi-head attention over one sequence stored as a packed `[s, 3·dim]`
/// QKV buffer (Q, then K, then V, heads contiguous inside each).
///
/// Writes the concatenated head outputs to `out` (`s × dim`).
pub(crate) fn attend_packed(
    qkv: &[f32],
    s: usize,
    dim: usize,
    heads: usize,
    bias: Option<&[f64]>,
    out: &mut [f32],
) -> Result<()> {
    let d = dim / heads;
    let stride = 3 * dim;
    debug_assert_eq!(qkv.len(), s * stride);
    let mut scratch = Scratch::default();
    let mut head_out = vec![0.0f32; s * d];
    for h in 0..heads {
        let q = MatView::columns(qkv, s, stride, h * d, d);
        let k = MatView::columns(qkv, s, stride, dim + h * d, d);
        let v = MatView::columns(qkv, s, stride, 2 * dim + h * d, d);
        head_attention(q, k, v, bias, &mut scratch, &mut head_out);
        for (i, row) in head_out.chunks_exact(d).enumerate() {
            out[i * dim + h * d..i * dim + (h + 1) * d].copy_from_slice(row);
        }
    }
    Ok(())
}

/// Keys averaged over heads, `[s, dim/heads]`, from a packed QKV matrix.
pub fn head_mean_keys(qkv: &Tensor, heads: usize) -> Result<Tensor> {
    let (s, stride) = qkv.matrix_dims()?;
    let dim = stride / 3;
    let d = dim / heads;
    let inv = 1.0 / heads as f64;
    let mut keys = Tensor::zeros(&[s, d]);
    for i in 0..s {
        let row = &qkv.row(i)[dim..2 * dim];
        let out = keys.row_mut(i);
        for (j, o) in out.iter_mut().enumerate() {
            let sum: f64 = (0..heads).map(|h| row[h * d + j] as f64).sum();
            *o = (sum * inv) as f32;
        }
    }
    Ok(keys)
}
