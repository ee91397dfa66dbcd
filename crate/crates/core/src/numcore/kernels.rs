//! Forward kernels shared by the plain tensor API and the autodiff graph.
//!
//! All loops are sequential with a fixed summation order so that results are
//! bit-reproducible across runs.

use super::{NumError, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const BCE_EPS: f64 = 1e-7;

fn dim_err(msg: String) -> NumError {
    NumError::Dimension(msg)
}

/// Matrix product `a[m×k] · b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, NumError> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(dim_err(format!(
            "matmul inner dimensions differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(&[m, n], out)
}

/// `g[m×n] · b[k×n]ᵀ`, the gradient of a matmul with respect to its left input.
pub(crate) fn matmul_bt(g: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = (g.shape()[0], g.shape()[1]);
    let k = b.shape()[0];
    let (gd, bd) = (g.data(), b.data());
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &bd[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::new(&[m, k], out).expect("matmul_bt shape")
}

/// `a[m×k]ᵀ · g[m×n]`, the gradient of a matmul with respect to its right input.
pub(crate) fn matmul_at(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = g.shape()[1];
    let (ad, gd) = (a.data(), g.data());
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    Tensor::new(&[k, n], out).expect("matmul_at shape")
}

/// Valid 1-D cross-correlation over time.
///
/// `x` is `T×D`, `kernels` is `C×k×D`; the output is `T'×C` with
/// `T' = floor((T−k)/stride)+1`. Each output sums over all input channels.
pub fn conv1d(x: &Tensor, kernels: &Tensor, stride: usize) -> Result<Tensor, NumError> {
    let (t, d) = x.dims2()?;
    let (c, k, kd) = match kernels.shape() {
        [c, k, kd] => (*c, *k, *kd),
        s => return Err(dim_err(format!("conv kernels must be C×k×D, got {s:?}"))),
    };
    if kd != d {
        return Err(dim_err(format!("kernel depth {kd} != input channels {d}")));
    }
    if stride == 0 {
        return Err(dim_err("conv stride must be positive".into()));
    }
    if k == 0 || k > t {
        return Err(dim_err(format!("kernel length {k} exceeds input length {t}")));
    }
    let out_t = (t - k) / stride + 1;
    let span = k * d;
    let (xd, kdata) = (x.data(), kernels.data());
    let mut out = vec![0.0; out_t * c];
    for step in 0..out_t {
        let patch = &xd[step * stride * d..step * stride * d + span];
        for ch in 0..c {
            let kern = &kdata[ch * span..(ch + 1) * span];
            out[step * c + ch] = patch.iter().zip(kern).map(|(a, b)| a * b).sum();
        }
    }
    Tensor::new(&[out_t, c], out)
}

/// Gradients of [`conv1d`] with respect to the input and the kernels.
pub(crate) fn conv1d_backward(
    x: &Tensor,
    kernels: &Tensor,
    stride: usize,
    g: &Tensor,
) -> (Tensor, Tensor) {
    let d = x.shape()[1];
    let (c, k) = (kernels.shape()[0], kernels.shape()[1]);
    let out_t = g.shape()[0];
    let span = k * d;
    let mut gx = Tensor::zeros(x.shape());
    let mut gk = Tensor::zeros(kernels.shape());
    let (xd, kdata, gd) = (x.data(), kernels.data(), g.data());
    {
        let gxd = gx.data_mut();
        for step in 0..out_t {
            let base = step * stride * d;
            for ch in 0..c {
                let gv = gd[step * c + ch];
                if gv == 0.0 {
                    continue;
                }
                let kern = &kdata[ch * span..(ch + 1) * span];
                for (o, &kv) in gxd[base..base + span].iter_mut().zip(kern) {
                    *o += gv * kv;
                }
            }
        }
    }
    {
        let gkd = gk.data_mut();
        for step in 0..out_t {
            let patch = &xd[step * stride * d..step * stride * d + span];
            for ch in 0..c {
                let gv = gd[step * c + ch];
                if gv == 0.0 {
                    continue;
                }
                for (o, &xv) in gkd[ch * span..(ch + 1) * span].iter_mut().zip(patch) {
                    *o += gv * xv;
                }
            }
        }
    }
    (gx, gk)
}

/// Splits a shape around `axis` into `(outer, len, inner)` strides.
pub(crate) fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize), NumError> {
    if axis >= shape.len() {
        return Err(dim_err(format!("axis {axis} out of range for shape {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Numerically stable softmax along `axis` (max-subtracted).
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor, NumError> {
    let (outer, n, inner) = axis_layout(x.shape(), axis)?;
    let xd = x.data();
    let mut out = vec![0.0; xd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let max = (0..n).map(|j| xd[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..n {
                let e = (xd[idx(j)] - max).exp();
                out[idx(j)] = e;
                total += e;
            }
            for j in 0..n {
                out[idx(j)] /= total;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

pub(crate) fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize) -> Tensor {
    let (outer, n, inner) = axis_layout(y.shape(), axis).expect("softmax axis");
    let (yd, gd) = (y.data(), g.data());
    let mut out = vec![0.0; yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let dot: f64 = (0..n).map(|j| yd[idx(j)] * gd[idx(j)]).sum();
            for j in 0..n {
                out[idx(j)] = yd[idx(j)] * (gd[idx(j)] - dot);
            }
        }
    }
    Tensor::new(y.shape(), out).expect("softmax grad shape")
}

/// Cached statistics of a layer-norm forward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

/// Per-row normalization over the last axis followed by `gain ⊙ x̂ + bias`.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor, NumError> {
    layer_norm_cached(x, gain, bias).map(|(y, _)| y)
}

pub(crate) fn layer_norm_cached(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
) -> Result<(Tensor, LayerNormCache), NumError> {
    let n = *x.shape().last().ok_or_else(|| dim_err("layer_norm of a scalar".into()))?;
    if n < 2 {
        return Err(dim_err("layer_norm needs at least 2 features".into()));
    }
    if gain.len() != n || bias.len() != n {
        return Err(dim_err(format!(
            "layer_norm affine params must have {n} values"
        )));
    }
    let rows = x.len() / n;
    let xd = x.data();
    let mut normalized = vec![0.0; xd.len()];
    let mut out = vec![0.0; xd.len()];
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &xd[r * n..(r + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(inv);
        for j in 0..n {
            let h = (row[j] - mean) * inv;
            normalized[r * n + j] = h;
            out[r * n + j] = h * gain.data()[j] + bias.data()[j];
        }
    }
    Ok((
        Tensor::new(x.shape(), out)?,
        LayerNormCache {
            normalized: Tensor::new(x.shape(), normalized)?,
            inv_std,
        },
    ))
}

/// Returns `(dx, dgain, dbias)`.
pub(crate) fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &Tensor,
    g: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let n = gain.len();
    let rows = g.len() / n;
    let (hd, gd, gn) = (cache.normalized.data(), g.data(), gain.data());
    let mut dx = vec![0.0; g.len()];
    let mut dgain = vec![0.0; n];
    let mut dbias = vec![0.0; n];
    for r in 0..rows {
        let mut sum_gh = 0.0;
        let mut sum_gh_h = 0.0;
        for j in 0..n {
            let gh = gd[r * n + j] * gn[j];
            sum_gh += gh;
            sum_gh_h += gh * hd[r * n + j];
            dgain[j] += gd[r * n + j] * hd[r * n + j];
            dbias[j] += gd[r * n + j];
        }
        let inv = cache.inv_std[r];
        for j in 0..n {
            let gh = gd[r * n + j] * gn[j];
            dx[r * n + j] = inv / n as f64 * (n as f64 * gh - sum_gh - hd[r * n + j] * sum_gh_h);
        }
    }
    (
        Tensor::new(g.shape(), dx).expect("ln dx"),
        Tensor::vector(dgain),
        Tensor::vector(dbias),
    )
}

/// Column-wise maximum of a `P×K` matrix together with the winning row per column.
pub(crate) fn global_max_pool_argmax(x: &Tensor) -> Result<(Tensor, Vec<usize>), NumError> {
    let (p, k) = x.dims2()?;
    if p == 0 {
        return Err(dim_err("global max pool of an empty input".into()));
    }
    let mut best = x.row(0).to_vec();
    let mut arg = vec![0; k];
    for r in 1..p {
        for (j, &v) in x.row(r).iter().enumerate() {
            if v > best[j] {
                best[j] = v;
                arg[j] = r;
            }
        }
    }
    Ok((Tensor::vector(best), arg))
}

pub fn global_max_pool(x: &Tensor) -> Result<Tensor, NumError> {
    global_max_pool_argmax(x).map(|(t, _)| t)
}

/// Binary cross-entropy of a single prediction; `pred` is clamped to `[ε, 1−ε]`.
pub fn bce_loss(pred: f64, target: f64) -> f64 {
    let p = pred.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

pub(crate) fn bce_grad(pred: f64, target: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&pred) {
        return 0.0;
    }
    -(target / pred) + (1.0 - target) / (1.0 - pred)
}

pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64, NumError> {
    if pred.shape() != target.shape() {
        return Err(dim_err(format!(
            "mse shape mismatch {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(total / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let eye = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(matmul(&eye, &a).unwrap(), a);
        let col = m(&[&[5.0], &[6.0]]);
        assert_eq!(matmul(&a, &col).unwrap().data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &a), Err(NumError::Dimension(_))));
    }

    #[test]
    fn conv1d_hand_cases() {
        let x = m(&[&[1.0], &[2.0], &[3.0]]);
        let ident = Tensor::new(&[1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv1d(&x, &ident, 1).unwrap().data(), &[1.0, 2.0, 3.0]);
        let pair = Tensor::new(&[1, 2, 1], vec![1.0, 1.0]).unwrap();
        assert_eq!(conv1d(&x, &pair, 1).unwrap().data(), &[3.0, 5.0]);
        let long = Tensor::new(&[1, 4, 1], vec![1.0; 4]).unwrap();
        assert!(conv1d(&x, &long, 1).is_err());
    }

    #[test]
    fn conv1d_stride_length() {
        let x = Tensor::zeros(&[10, 2]);
        let k = Tensor::zeros(&[3, 3, 2]);
        assert_eq!(conv1d(&x, &k, 2).unwrap().shape(), &[4, 3]);
    }

    #[test]
    fn softmax_closed_forms() {
        let s = softmax(&Tensor::vector(vec![0.0, 0.0]), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&Tensor::vector(vec![0.0, 3f64.ln()]), 0).unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-12);
        assert!((s.data()[1] - 0.75).abs() < 1e-12);
        let s = softmax(&Tensor::vector(vec![1000.0, 1000.0]), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_on_first_axis() {
        let x = m(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let s = softmax(&x, 0).unwrap();
        assert!(s.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn layer_norm_cases() {
        let ones = Tensor::full(&[3], 1.0);
        let zeros = Tensor::zeros(&[3]);
        let y = layer_norm(&Tensor::full(&[1, 3], 7.0), &ones, &zeros).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let y = layer_norm(&m(&[&[1.0, 3.0]]), &Tensor::full(&[2], 1.0), &Tensor::zeros(&[2]))
            .unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-5);
        assert!((y.data()[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn max_pool_cases() {
        let x = m(&[&[1.0, 5.0], &[3.0, 2.0]]);
        let (y, arg) = global_max_pool_argmax(&x).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);
        assert_eq!(arg, vec![1, 0]);
        let single = m(&[&[4.0, -1.0]]);
        assert_eq!(global_max_pool(&single).unwrap().data(), &[4.0, -1.0]);
        assert!(global_max_pool(&Tensor::zeros(&[0, 2])).is_err());
    }

    #[test]
    fn bce_and_mse_values() {
        assert!(bce_loss(1.0, 1.0) < 1e-6);
        assert!((bce_loss(0.5, 0.5) - 2f64.ln()).abs() < 1e-12);
        let a = Tensor::vector(vec![0.0, 0.0]);
        let b = Tensor::vector(vec![2.0, 0.0]);
        assert_eq!(mse_loss(&a, &b).unwrap(), 2.0);
        assert_eq!(mse_loss(&b, &a).unwrap(), 2.0);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        assert!(mse_loss(&a, &Tensor::zeros(&[3])).is_err());
    }
}
