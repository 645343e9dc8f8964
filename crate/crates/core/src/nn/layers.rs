//! Batched layer kernels over NCHW `f64` buffers.
//!
//! Every function processes `batch` samples stored back to back. Reductions
//! over the batch always run in sample order so results are bit-stable.

use super::{Layer, Shape};

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    beta: f64,
    c: &mut [f64],
    rsc: isize,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass buffers sized for the given dimensions and strides;
    // the debug assertions below document the extents.
    debug_assert!(a.0.len() >= 1 + (m - 1) * a.1.unsigned_abs() + (k - 1) * a.2.unsigned_abs());
    debug_assert!(b.0.len() >= 1 + (k - 1) * b.1.unsigned_abs() + (n - 1) * b.2.unsigned_abs());
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            rsc,
            1,
        );
    }
}

pub(crate) fn param_len(layer: &Layer) -> (usize, usize) {
    match *layer {
        Layer::Dense { inputs, outputs } => (inputs * outputs, outputs),
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
        } => (out_channels * in_channels * kernel * kernel, out_channels),
        _ => (0, 0),
    }
}

/// Output of `layer` for `batch` samples of `in_shape`.
pub fn forward(layer: &Layer, in_shape: Shape, params: &[f64], input: &[f64], batch: usize) -> Vec<f64> {
    debug_assert_eq!(input.len(), batch * in_shape.size());
    match *layer {
        Layer::Dense { inputs, outputs } => dense_forward(inputs, outputs, params, input, batch),
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
        } => {
            let (h, w) = in_shape.spatial();
            conv_forward(in_channels, out_channels, kernel, h, w, params, input, batch)
        }
        Layer::MaxPool { size } => {
            let (c, h, w) = in_shape.chw();
            maxpool_forward(c, h, w, size, input, batch)
        }
        Layer::Relu => input.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
        Layer::Flatten => input.to_vec(),
        Layer::SoftmaxXent => input.to_vec(),
    }
}

/// Gradients w.r.t. the layer input and its parameters, given the upstream
/// gradient `grad_out`. The input gradient is skipped (empty) when
/// `need_input_grad` is false.
pub fn backward(
    layer: &Layer,
    in_shape: Shape,
    params: &[f64],
    input: &[f64],
    grad_out: &[f64],
    batch: usize,
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>) {
    match *layer {
        Layer::Dense { inputs, outputs } => {
            dense_backward(inputs, outputs, params, input, grad_out, batch, need_input_grad)
        }
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
        } => {
            let (h, w) = in_shape.spatial();
            conv_backward(
                in_channels,
                out_channels,
                kernel,
                h,
                w,
                params,
                input,
                grad_out,
                batch,
                need_input_grad,
            )
        }
        Layer::MaxPool { size } => {
            let (c, h, w) = in_shape.chw();
            (maxpool_backward(c, h, w, size, input, grad_out, batch), Vec::new())
        }
        Layer::Relu => {
            // derivative at exactly 0 is 0
            let g = input
                .iter()
                .zip(grad_out)
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect();
            (g, Vec::new())
        }
        Layer::Flatten | Layer::SoftmaxXent => (grad_out.to_vec(), Vec::new()),
    }
}

fn dense_forward(inputs: usize, outputs: usize, params: &[f64], x: &[f64], batch: usize) -> Vec<f64> {
    let (weight, bias) = params.split_at(inputs * outputs);
    let mut y = vec![0.0; batch * outputs];
    // Y (B×out) = X (B×in) · Wᵀ
    gemm(
        batch,
        inputs,
        outputs,
        (x, inputs as isize, 1),
        (weight, 1, inputs as isize),
        0.0,
        &mut y,
        outputs as isize,
    );
    for row in y.chunks_exact_mut(outputs) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    y
}

fn dense_backward(
    inputs: usize,
    outputs: usize,
    params: &[f64],
    x: &[f64],
    dy: &[f64],
    batch: usize,
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>) {
    let weight = &params[..inputs * outputs];
    let mut grad = vec![0.0; inputs * outputs + outputs];
    let (dw, db) = grad.split_at_mut(inputs * outputs);
    // dW (out×in) = dYᵀ · X
    gemm(
        outputs,
        batch,
        inputs,
        (dy, 1, outputs as isize),
        (x, inputs as isize, 1),
        0.0,
        dw,
        inputs as isize,
    );
    for row in dy.chunks_exact(outputs) {
        for (b, g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    let dx = if need_input_grad {
        let mut dx = vec![0.0; batch * inputs];
        // dX (B×in) = dY · W
        gemm(
            batch,
            outputs,
            inputs,
            (dy, outputs as isize, 1),
            (weight, inputs as isize, 1),
            0.0,
            &mut dx,
            inputs as isize,
        );
        dx
    } else {
        Vec::new()
    };
    (dx, grad)
}

/// Unfold one `c×h×w` image into a `(c·k·k) × (h·w)` column matrix with
/// zero "same" padding.
fn im2col(img: &[f64], c: usize, h: usize, w: usize, k: usize, cols: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        let plane = &img[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out_row = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, o) in out_row.iter_mut().enumerate() {
                        let sx = x as isize + dx;
                        *o = if sx < 0 || sx >= w as isize { 0.0 } else { src[sx as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, img: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut img[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for x in 0..w {
                        let sx = x as isize + dx;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += src[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    cin: usize,
    cout: usize,
    k: usize,
    h: usize,
    w: usize,
    params: &[f64],
    x: &[f64],
    batch: usize,
) -> Vec<f64> {
    let ckk = cin * k * k;
    let hw = h * w;
    let (weight, bias) = params.split_at(cout * ckk);
    let mut cols = vec![0.0; ckk * hw];
    let mut y = vec![0.0; batch * cout * hw];
    for (img, out) in x.chunks_exact(cin * hw).zip(y.chunks_exact_mut(cout * hw)) {
        im2col(img, cin, h, w, k, &mut cols);
        gemm(
            cout,
            ckk,
            hw,
            (weight, ckk as isize, 1),
            (&cols, hw as isize, 1),
            0.0,
            out,
            hw as isize,
        );
        for (plane, b) in out.chunks_exact_mut(hw).zip(bias) {
            for v in plane {
                *v += b;
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    cin: usize,
    cout: usize,
    k: usize,
    h: usize,
    w: usize,
    params: &[f64],
    x: &[f64],
    dy: &[f64],
    batch: usize,
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>) {
    let ckk = cin * k * k;
    let hw = h * w;
    let weight = &params[..cout * ckk];
    let mut grad = vec![0.0; cout * ckk + cout];
    let mut dx = if need_input_grad { vec![0.0; batch * cin * hw] } else { Vec::new() };
    let mut cols = vec![0.0; ckk * hw];
    let mut dcols = vec![0.0; ckk * hw];
    for s in 0..batch {
        let img = &x[s * cin * hw..(s + 1) * cin * hw];
        let g = &dy[s * cout * hw..(s + 1) * cout * hw];
        im2col(img, cin, h, w, k, &mut cols);
        let (dw, db) = grad.split_at_mut(cout * ckk);
        // dW (cout×ckk) += dY_s · colsᵀ
        gemm(
            cout,
            hw,
            ckk,
            (g, hw as isize, 1),
            (&cols, 1, hw as isize),
            1.0,
            dw,
            ckk as isize,
        );
        for (b, plane) in db.iter_mut().zip(g.chunks_exact(hw)) {
            *b += plane.iter().sum::<f64>();
        }
        if need_input_grad {
            // dcols (ckk×hw) = Wᵀ · dY_s
            gemm(
                ckk,
                cout,
                hw,
                (weight, 1, ckk as isize),
                (g, hw as isize, 1),
                0.0,
                &mut dcols,
                hw as isize,
            );
            col2im(&dcols, cin, h, w, k, &mut dx[s * cin * hw..(s + 1) * cin * hw]);
        }
    }
    (dx, grad)
}

/// Flat index (within the sample) of the first maximum of each pooling window.
fn pool_argmax(c: usize, h: usize, w: usize, p: usize, img: &[f64], mut f: impl FnMut(usize, usize)) {
    let (oh, ow) = (h / p, w / p);
    for ch in 0..c {
        let plane = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = plane + oy * p * w + ox * p;
                for dy in 0..p {
                    for dx in 0..p {
                        let idx = plane + (oy * p + dy) * w + ox * p + dx;
                        if img[idx] > img[best] {
                            best = idx;
                        }
                    }
                }
                f((ch * oh + oy) * ow + ox, best);
            }
        }
    }
}

fn maxpool_forward(c: usize, h: usize, w: usize, p: usize, x: &[f64], batch: usize) -> Vec<f64> {
    let out_len = c * (h / p) * (w / p);
    let mut y = vec![0.0; batch * out_len];
    for (img, out) in x.chunks_exact(c * h * w).zip(y.chunks_exact_mut(out_len)) {
        pool_argmax(c, h, w, p, img, |o, i| out[o] = img[i]);
    }
    y
}

fn maxpool_backward(c: usize, h: usize, w: usize, p: usize, x: &[f64], dy: &[f64], batch: usize) -> Vec<f64> {
    let in_len = c * h * w;
    let out_len = c * (h / p) * (w / p);
    let mut dx = vec![0.0; batch * in_len];
    for s in 0..batch {
        let img = &x[s * in_len..(s + 1) * in_len];
        let g = &dy[s * out_len..(s + 1) * out_len];
        let d = &mut dx[s * in_len..(s + 1) * in_len];
        pool_argmax(c, h, w, p, img, |o, i| d[i] += g[o]);
    }
    dx
}

/// Feeds one hashable decision per non-smooth unit (ReLU sign, pooling
/// argmax) to `sink`. Two inputs with equal decisions lie in the same smooth
/// piece of the network.
pub(crate) fn decisions(layer: &Layer, in_shape: Shape, input: &[f64], batch: usize, sink: &mut impl FnMut(u64)) {
    match *layer {
        Layer::Relu => {
            for chunk in input.chunks(64) {
                let mut bits = 0u64;
                for (i, &x) in chunk.iter().enumerate() {
                    if x > 0.0 {
                        bits |= 1 << i;
                    }
                }
                sink(bits);
            }
        }
        Layer::MaxPool { size } => {
            let (c, h, w) = in_shape.chw();
            for img in input.chunks_exact(c * h * w).take(batch) {
                pool_argmax(c, h, w, size, img, |_, i| sink(i as u64));
            }
        }
        _ => {}
    }
}
