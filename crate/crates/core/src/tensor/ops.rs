use rayon::prelude::*;

use super::kernels::{axpy, dot, softmax_in_place, PAR_THRESHOLD};
use super::mac::record;
use super::Tensor;
use crate::{Error, Result};

/// Fills `out` row by row, fanning out to rayon once the job is big enough.
/// Each row is computed by exactly one call to `f`, so the result does not
/// depend on the thread count.
fn for_each_row<F>(out: &mut [f32], row_len: usize, work_per_row: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    let rows = out.len() / row_len;
    if rows > 1 && rows.saturating_mul(work_per_row) >= PAR_THRESHOLD {
        out.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, r)| f(i, r));
    } else {
        out.chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, r)| f(i, r));
    }
}

/// `[M, K] × [K, P] → [M, P]`
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, p) = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::shape(
            "matmul",
            format!("inner dimensions differ: [{m}, {k}] x [{k2}, {p}]"),
        ));
    }
    let mut out = vec![0.0f32; m * p];
    for_each_row(&mut out, p, k * p, |i, row| {
        for (kk, &av) in a.row(i).iter().enumerate() {
            axpy(row, av, &b.data[kk * p..(kk + 1) * p]);
        }
    });
    record((m * k * p) as u64);
    Ok(Tensor::from_parts(vec![m, p], out))
}

/// `[M, K] × [P, K]ᵀ → [M, P]`
pub fn matmul_transposed(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul_transposed")?;
    let (p, k2) = b.dims2("matmul_transposed")?;
    if k != k2 {
        return Err(Error::shape(
            "matmul_transposed",
            format!("inner dimensions differ: [{m}, {k}] x [{p}, {k2}]^T"),
        ));
    }
    let mut out = vec![0.0f32; m * p];
    for_each_row(&mut out, p, k * p, |i, row| {
        let ar = a.row(i);
        for (j, o) in row.iter_mut().enumerate() {
            *o = dot(ar, b.row(j));
        }
    });
    record((m * k * p) as u64);
    Ok(Tensor::from_parts(vec![m, p], out))
}

/// Affine map over the last dimension: `x · weight + bias`, with `weight`
/// stored as `[in, out]`. Leading dimensions are preserved.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (rows, k) = x.as_matrix();
    let (k2, p) = weight.dims2("linear")?;
    if k != k2 {
        return Err(Error::shape(
            "linear",
            format!("input has {k} features, weight expects {k2}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [p] {
            return Err(Error::shape(
                "linear",
                format!("bias shape {:?}, expected [{p}]", b.shape()),
            ));
        }
    }
    let w = weight.data();
    let mut out = vec![0.0f32; rows * p];
    for_each_row(&mut out, p, k * p, |i, row| {
        if let Some(b) = bias {
            row.copy_from_slice(b.data());
        }
        for (kk, &xv) in x.row(i).iter().enumerate() {
            axpy(row, xv, &w[kk * p..(kk + 1) * p]);
        }
    });
    record((rows * k * p) as u64);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = p;
    Ok(Tensor::from_parts(shape, out))
}

/// Softmax along the last dimension. A NaN anywhere is reported as an error
/// instead of being masked.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let (_, p) = x.as_matrix();
    let mut out = x.data.clone();
    let mut ok = true;
    for row in out.chunks_mut(p) {
        ok &= softmax_in_place(row);
    }
    if !ok {
        return Err(Error::NonFinite("softmax_rows"));
    }
    Ok(Tensor::from_parts(x.shape.clone(), out))
}

fn conv_out_dim(
    op: &'static str,
    size: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Param(format!(
            "{op}: kernel and stride must be >= 1 (kernel {kernel}, stride {stride})"
        )));
    }
    let padded = size + 2 * padding;
    if kernel > padded {
        return Err(Error::shape(
            op,
            format!("kernel {kernel} larger than padded input {padded}"),
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Strided 2D cross-correlation on an `[H, W, C_in]` map with weights laid
/// out `[k, k, C_in, C_out]`.
pub fn conv2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (h, w, cin) = x.dims3("conv2d")?;
    let (k, k2, wcin, cout) = match weight.shape()[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "weight must be [k, k, C_in, C_out], got {:?}",
                    weight.shape()
                ),
            ))
        }
    };
    if k != k2 || wcin != cin {
        return Err(Error::shape(
            "conv2d",
            format!(
                "weight {:?} does not fit input {:?}",
                weight.shape(),
                x.shape()
            ),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(
                "conv2d",
                format!("bias shape {:?}", b.shape()),
            ));
        }
    }
    let ho = conv_out_dim("conv2d", h, k, stride, padding)?;
    let wo = conv_out_dim("conv2d", w, k, stride, padding)?;
    let xd = x.data();
    let wd = weight.data();
    let mut out = vec![0.0f32; ho * wo * cout];
    for_each_row(&mut out, wo * cout, wo * cout * k * k * cin, |oy, row| {
        for (ox, px) in row.chunks_mut(cout).enumerate() {
            if let Some(b) = bias {
                px.copy_from_slice(b.data());
            }
            for ky in 0..k {
                let iy = (oy * stride + ky) as isize - padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * stride + kx) as isize - padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let xin = &xd[(iy as usize * w + ix as usize) * cin..][..cin];
                    let wbase = (ky * k + kx) * cin * cout;
                    for (ci, &xv) in xin.iter().enumerate() {
                        axpy(px, xv, &wd[wbase + ci * cout..][..cout]);
                    }
                }
            }
        }
    });
    record((ho * wo * cout * k * k * cin) as u64);
    Ok(Tensor::from_parts(vec![ho, wo, cout], out))
}

/// Depthwise 2D convolution on `[H, W, C]` with weights `[k, k, C]`.
pub fn depthwise_conv2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (h, w, c) = x.dims3("depthwise_conv2d")?;
    let (k, k2, wc) = weight.dims3("depthwise_conv2d")?;
    if k != k2 || wc != c {
        return Err(Error::shape(
            "depthwise_conv2d",
            format!(
                "weight {:?} does not fit input {:?}",
                weight.shape(),
                x.shape()
            ),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [c] {
            return Err(Error::shape(
                "depthwise_conv2d",
                format!("bias shape {:?}", b.shape()),
            ));
        }
    }
    let ho = conv_out_dim("depthwise_conv2d", h, k, stride, padding)?;
    let wo = conv_out_dim("depthwise_conv2d", w, k, stride, padding)?;
    let xd = x.data();
    let wd = weight.data();
    let mut out = vec![0.0f32; ho * wo * c];
    for_each_row(&mut out, wo * c, wo * c * k * k, |oy, row| {
        for (ox, px) in row.chunks_mut(c).enumerate() {
            if let Some(b) = bias {
                px.copy_from_slice(b.data());
            }
            for ky in 0..k {
                let iy = (oy * stride + ky) as isize - padding as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * stride + kx) as isize - padding as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let xin = &xd[(iy as usize * w + ix as usize) * c..][..c];
                    let wk = &wd[(ky * k + kx) * c..][..c];
                    for ((o, &xv), &wv) in px.iter_mut().zip(xin).zip(wk) {
                        *o += xv * wv;
                    }
                }
            }
        }
    });
    record((ho * wo * c * k * k) as u64);
    Ok(Tensor::from_parts(vec![ho, wo, c], out))
}

/// 2×2 average pooling with stride 2. Odd spatial dims are rejected rather
/// than padded, so the output always holds exactly a quarter of the tokens.
pub fn avgpool2d(x: &Tensor) -> Result<Tensor> {
    let (h, w, c) = x.dims3("avgpool2d")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            "avgpool2d",
            format!("spatial dims must be even, got {h}x{w}"),
        ));
    }
    let (ho, wo) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = vec![0.0f32; ho * wo * c];
    for (oy, row) in out.chunks_mut(wo * c).enumerate() {
        for (ox, px) in row.chunks_mut(c).enumerate() {
            let at = |dy: usize, dx: usize| &xd[((2 * oy + dy) * w + 2 * ox + dx) * c..][..c];
            let (a, b, cc, d) = (at(0, 0), at(0, 1), at(1, 0), at(1, 1));
            for ch in 0..c {
                px[ch] = ((a[ch] + b[ch]) + (cc[ch] + d[ch])) * 0.25;
            }
        }
    }
    Ok(Tensor::from_parts(vec![ho, wo, c], out))
}

/// Layer normalization over the last dimension.
pub fn layernorm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Param(format!(
            "layernorm eps must be > 0, got {eps}"
        )));
    }
    let (_, c) = x.as_matrix();
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(
            "layernorm",
            format!(
                "gamma {:?} / beta {:?} do not match {c} features",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let (g, bt) = (gamma.data(), beta.data());
    let mut out = x.data.clone();
    for_each_row(&mut out, c, 4 * c, |_, row| {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
        let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + eps as f64).sqrt();
        for (i, v) in row.iter_mut().enumerate() {
            *v = ((*v as f64 - mean) * inv) as f32 * g[i] + bt[i];
        }
    });
    Ok(Tensor::from_parts(x.shape.clone(), out))
}

/// Exact (erf-based) GELU.
pub fn gelu(x: &Tensor) -> Tensor {
    map(x, |v| {
        0.5 * v * (1.0 + libm::erff(v * std::f32::consts::FRAC_1_SQRT_2))
    })
}

pub fn relu(x: &Tensor) -> Tensor {
    map(x, |v| v.max(0.0))
}

fn map(x: &Tensor, f: impl Fn(f32) -> f32) -> Tensor {
    Tensor::from_parts(x.shape.clone(), x.data.iter().map(|&v| f(v)).collect())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "add",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_parts(a.shape.clone(), data))
}

/// Concatenates `[H, W, C_i]` maps along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat_channels", "no inputs"))?;
    let (h, w, _) = first.dims3("concat_channels")?;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (ph, pw, pc) = p.dims3("concat_channels")?;
        if (ph, pw) != (h, w) {
            return Err(Error::shape(
                "concat_channels",
                format!("spatial dims {ph}x{pw} differ from {h}x{w}"),
            ));
        }
        widths.push(pc);
    }
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(h * w * total);
    for px in 0..h * w {
        for (p, &c) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data[px * c..(px + 1) * c]);
        }
    }
    Ok(Tensor::from_parts(vec![h, w, total], out))
}

/// Bilinear resize of an `[H, W, C]` map (half-pixel centers, edge clamped).
/// Interpolation is written as `a + (b - a)·t`, so constant fields come out
/// bit-identical.
pub fn bilinear_resize(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = x.dims3("bilinear_resize")?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Param(
            "bilinear_resize target must be non-empty".into(),
        ));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let taps = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f32) {
        let scale = src_len as f32 / dst_len as f32;
        let pos = ((dst as f32 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (pos.floor() as usize).min(src_len - 1);
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, pos - i0 as f32)
    };
    let xs: Vec<_> = (0..out_w).map(|ox| taps(ox, w, out_w)).collect();
    let xd = x.data();
    let mut out = vec![0.0f32; out_h * out_w * c];
    for_each_row(&mut out, out_w * c, out_w * c * 4, |oy, row| {
        let (y0, y1, ty) = taps(oy, h, out_h);
        for (ox, px) in row.chunks_mut(c).enumerate() {
            let (x0, x1, tx) = xs[ox];
            let at = |yy: usize, xx: usize| &xd[(yy * w + xx) * c..][..c];
            let (a, b, cc, d) = (at(y0, x0), at(y0, x1), at(y1, x0), at(y1, x1));
            for ch in 0..c {
                let top = a[ch] + (b[ch] - a[ch]) * tx;
                let bot = cc[ch] + (d[ch] - cc[ch]) * tx;
                px[ch] = top + (bot - top) * ty;
            }
        }
    });
    Ok(Tensor::from_parts(vec![out_h, out_w, c], out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::MacCounter;
    use proptest::prelude::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let i = t(&[2, 2], &[1., 0., 0., 1.]);
        let b = t(&[2, 2], &[5., 6., 7., 8.]);
        assert_eq!(matmul(&i, &b).unwrap(), b);
    }

    #[test]
    fn matmul_row_times_column() {
        let a = t(&[1, 2], &[1., 2.]);
        let b = t(&[2, 1], &[3., 4.]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_counts_macs() {
        let a = Tensor::zeros([2, 3]).unwrap();
        let b = Tensor::zeros([3, 4]).unwrap();
        let (_, m) = MacCounter::measure(|| matmul(&a, &b).unwrap());
        assert_eq!(m.macs(), 24);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::zeros([2, 3]).unwrap();
        assert!(matches!(matmul(&a, &a), Err(Error::Shape { .. })));
        assert!(matmul_transposed(&a, &Tensor::zeros([2, 2]).unwrap()).is_err());
    }

    #[test]
    fn matmul_transposed_agrees_with_matmul() {
        let a = Tensor::from_fn([3, 5], |i| (i % 7) as f32 - 3.0).unwrap();
        let b = Tensor::from_fn([4, 5], |i| (i % 4) as f32).unwrap();
        let mut bt = vec![0.0; 20];
        for r in 0..4 {
            for c in 0..5 {
                bt[c * 4 + r] = b.data()[r * 5 + c];
            }
        }
        let bt = t(&[5, 4], &bt);
        assert_eq!(matmul_transposed(&a, &b).unwrap(), matmul(&a, &bt).unwrap());
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&t(&[1, 2], &[0., 0.])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&t(&[1, 2], &[1000., 0.])).unwrap();
        assert!((s.data()[0] - 1.0).abs() < 1e-6 && s.data()[1].abs() < 1e-6);
        let s = softmax_rows(&t(&[1, 2], &[1f32.ln(), 3f32.ln()])).unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-6);
        assert!((s.data()[1] - 0.75).abs() < 1e-6);
    }

    #[test]
    fn softmax_nan_is_an_error() {
        let r = softmax_rows(&t(&[1, 2], &[f32::NAN, 0.]));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn conv_block_sums() {
        let x = Tensor::from_fn([4, 4, 1], |i| i as f32).unwrap();
        let w = Tensor::full([2, 2, 1, 1], 1.0).unwrap();
        let y = conv2d(&x, &w, None, 2, 0).unwrap();
        assert_eq!(y.shape(), &[2, 2, 1]);
        // blocks of 0..16 laid out row-major on a 4x4 grid
        assert_eq!(y.data(), &[10., 18., 42., 50.]);
    }

    #[test]
    fn conv_identity_channels() {
        let x = Tensor::from_fn([3, 5, 2], |i| i as f32 * 0.5).unwrap();
        let w = t(&[1, 1, 2, 2], &[1., 0., 0., 1.]);
        assert_eq!(conv2d(&x, &w, None, 1, 0).unwrap(), x);
    }

    #[test]
    fn conv_stride_two_halves() {
        let x = Tensor::zeros([256, 256, 1]).unwrap();
        let w = Tensor::zeros([3, 3, 1, 1]).unwrap();
        assert_eq!(conv2d(&x, &w, None, 2, 1).unwrap().shape(), &[128, 128, 1]);
    }

    #[test]
    fn conv_counts_macs_and_rejects_oversized_kernel() {
        let x = Tensor::zeros([8, 6, 3]).unwrap();
        let w = Tensor::zeros([3, 3, 3, 4]).unwrap();
        let (y, m) = MacCounter::measure(|| conv2d(&x, &w, None, 2, 1).unwrap());
        assert_eq!(y.shape(), &[4, 3, 4]);
        assert_eq!(m.macs(), 4 * 3 * 4 * 9 * 3);
        let big = Tensor::zeros([5, 5, 3, 1]).unwrap();
        let small = Tensor::zeros([2, 2, 3]).unwrap();
        assert!(matches!(
            conv2d(&small, &big, None, 1, 1),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn depthwise_matches_per_channel_conv() {
        let x = Tensor::from_fn([5, 4, 2], |i| ((i * 7) % 11) as f32 - 5.0).unwrap();
        let w = Tensor::from_fn([3, 3, 2], |i| (i % 5) as f32 - 2.0).unwrap();
        let dw = depthwise_conv2d(&x, &w, None, 1, 1).unwrap();
        // expand to a full conv weight that is diagonal across channels
        let mut full = vec![0.0; 3 * 3 * 2 * 2];
        for tap in 0..9 {
            for c in 0..2 {
                full[tap * 4 + c * 2 + c] = w.data()[tap * 2 + c];
            }
        }
        let full = t(&[3, 3, 2, 2], &full);
        assert_eq!(dw, conv2d(&x, &full, None, 1, 1).unwrap());
    }

    #[test]
    fn avgpool_examples() {
        let y = avgpool2d(&t(&[2, 2, 1], &[1., 3., 5., 7.])).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let c = Tensor::full([6, 4, 3], 1.7).unwrap();
        assert_eq!(
            avgpool2d(&c).unwrap(),
            Tensor::full([3, 2, 3], 1.7).unwrap()
        );
        let g = Tensor::zeros([64, 64, 1]).unwrap();
        assert_eq!(avgpool2d(&g).unwrap().len(), 64 * 64 / 4);
        assert!(avgpool2d(&Tensor::zeros([3, 4, 1]).unwrap()).is_err());
    }

    #[test]
    fn layernorm_constant_row_is_zero() {
        let x = Tensor::full([2, 8], 3.0).unwrap();
        let g = Tensor::full([8], 1.0).unwrap();
        let b = Tensor::zeros([8]).unwrap();
        let y = layernorm(&x, &g, &b, 1e-6).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(matches!(layernorm(&x, &g, &b, 0.0), Err(Error::Param(_))));
    }

    #[test]
    fn gelu_zero() {
        let y = gelu(&t(&[3], &[0.0, 10.0, -10.0]));
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 10.0).abs() < 1e-5);
        assert!(y.data()[2].abs() < 1e-5);
    }

    #[test]
    fn resize_constant_is_exact() {
        let x = Tensor::full([5, 7, 2], 0.3).unwrap();
        for (h, w) in [(1, 1), (10, 14), (3, 2), (17, 9)] {
            let y = bilinear_resize(&x, h, w).unwrap();
            assert!(y.data().iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn concat_interleaves_channels() {
        let a = t(&[1, 2, 1], &[1., 2.]);
        let b = t(&[1, 2, 2], &[3., 4., 5., 6.]);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.data(), &[1., 3., 4., 2., 5., 6.]);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(row in prop::collection::vec(-20f32..20.0, 1..16), shift in -50f32..50.0) {
            let n = row.len();
            let x = Tensor::new([1, n], row.clone()).unwrap();
            let xs = Tensor::new([1, n], row.iter().map(|v| v + shift).collect()).unwrap();
            let a = softmax_rows(&x).unwrap();
            let b = softmax_rows(&xs).unwrap();
            prop_assert!(a.max_abs_diff(&b) <= 1e-6);
            let sum: f32 = a.data().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-6);
        }

        #[test]
        fn conv_output_dims(h in 1usize..20, w in 1usize..20, k in 1usize..5, s in 1usize..4, p in 0usize..3) {
            prop_assume!(h + 2 * p >= k && w + 2 * p >= k);
            let x = Tensor::zeros([h, w, 1]).unwrap();
            let wt = Tensor::zeros([k, k, 1, 2]).unwrap();
            let y = conv2d(&x, &wt, None, s, p).unwrap();
            prop_assert_eq!(y.shape(), &[(h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1, 2]);
        }

        #[test]
        fn avgpool_preserves_mass(h in 1usize..8, w in 1usize..8, seed in any::<u64>()) {
            let mut state = seed;
            let x = Tensor::from_fn([2 * h, 2 * w, 3], |_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
            }).unwrap();
            let y = avgpool2d(&x).unwrap();
            let sin: f64 = x.data().iter().map(|&v| v as f64).sum();
            let sout: f64 = y.data().iter().map(|&v| v as f64).sum::<f64>() * 4.0;
            let scale: f64 = x.data().iter().map(|&v| v.abs() as f64).sum();
            prop_assert!((sin - sout).abs() <= 1e-5 * scale);
        }

        #[test]
        fn layernorm_standardizes(row in prop::collection::vec(-10f32..10.0, 2..64)) {
            let n = row.len();
            prop_assume!(row.iter().any(|&v| (v - row[0]).abs() > 1e-2));
            let x = Tensor::new([1, n], row).unwrap();
            let g = Tensor::full([n], 1.0).unwrap();
            let b = Tensor::zeros([n]).unwrap();
            let y = layernorm(&x, &g, &b, 1e-12).unwrap();
            let mean: f64 = y.data().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            let var: f64 = y.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-5);
            prop_assert!((var - 1.0).abs() < 1e-5);
        }

        #[test]
        fn matmul_chain_mac_count_is_exact(m in 1usize..6, k in 1usize..6, p in 1usize..6, q in 1usize..6) {
            let a = Tensor::zeros([m, k]).unwrap();
            let b = Tensor::zeros([k, p]).unwrap();
            let c = Tensor::zeros([p, q]).unwrap();
            let (_, macs) = MacCounter::measure(|| {
                let ab = matmul(&a, &b).unwrap();
                matmul(&ab, &c).unwrap()
            });
            prop_assert_eq!(macs.macs(), (m * k * p + m * p * q) as u64);
        }
    }
}
