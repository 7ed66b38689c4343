//! Forward/backward kernels for the individual layer kinds.
//!
//! All buffers are `[n, c, h, w]` row-major batches. Backward functions
//! take the forward-time input and return the gradient with respect to it;
//! parameter gradients are computed only when requested so frozen layers
//! can skip the work and report exact zeros.

use crate::tensor::Tensor;

pub(crate) fn conv_output_hw(
    in_h: usize,
    in_w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
) -> Option<(usize, usize)> {
    if stride == 0 || in_h < kh || in_w < kw {
        return None;
    }
    Some(((in_h - kh) / stride + 1, (in_w - kw) / stride + 1))
}

#[allow(clippy::needless_range_loop)]
pub(crate) fn conv_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
) -> Tensor {
    let (n, ic, ih, iw) = shape4(input);
    let (oc, _, kh, kw) = shape4(weights);
    let (oh, ow) = conv_output_hw(ih, iw, kh, kw, stride).expect("shape checked upstream");
    let x = input.data();
    let w = weights.data();
    let b = bias.data();
    let mut out = vec![0.0; n * oc * oh * ow];
    for img in 0..n {
        for o in 0..oc {
            let out_base = (img * oc + o) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o];
                    for i in 0..ic {
                        let in_base = (img * ic + i) * ih * iw;
                        let w_base = (o * ic + i) * kh * kw;
                        for ky in 0..kh {
                            let row = in_base + (oy * stride + ky) * iw + ox * stride;
                            let w_row = w_base + ky * kw;
                            for kx in 0..kw {
                                acc += x[row + kx] * w[w_row + kx];
                            }
                        }
                    }
                    out[out_base + oy * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, oc, oh, ow], out).expect("consistent conv output")
}

/// Returns `(weight_grad, bias_grad)` when `want_param_grads`, plus the
/// input gradient (always).
#[allow(clippy::needless_range_loop)]
pub(crate) fn conv_backward(
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    grad_out: &Tensor,
    want_param_grads: bool,
) -> (Option<(Tensor, Tensor)>, Tensor) {
    let (n, ic, ih, iw) = shape4(input);
    let (oc, _, kh, kw) = shape4(weights);
    let (_, _, oh, ow) = shape4(grad_out);
    let x = input.data();
    let w = weights.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; if want_param_grads { w.len() } else { 0 }];
    let mut gb = vec![0.0; if want_param_grads { oc } else { 0 }];
    for img in 0..n {
        for o in 0..oc {
            let out_base = (img * oc + o) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let go = g[out_base + oy * ow + ox];
                    if want_param_grads {
                        gb[o] += go;
                    }
                    for i in 0..ic {
                        let in_base = (img * ic + i) * ih * iw;
                        let w_base = (o * ic + i) * kh * kw;
                        for ky in 0..kh {
                            let row = in_base + (oy * stride + ky) * iw + ox * stride;
                            let w_row = w_base + ky * kw;
                            for kx in 0..kw {
                                if want_param_grads {
                                    gw[w_row + kx] += go * x[row + kx];
                                }
                                gx[row + kx] += go * w[w_row + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    let params = want_param_grads.then(|| {
        (
            Tensor::new(weights.shape().to_vec(), gw).expect("weight grad shape"),
            Tensor::new(vec![oc], gb).expect("bias grad shape"),
        )
    });
    (
        params,
        Tensor::new(input.shape().to_vec(), gx).expect("input grad shape"),
    )
}

/// Max pooling; the second return value holds, for every output element,
/// the flat offset of the winning input element (first maximum wins ties).
pub(crate) fn maxpool_forward(
    input: &Tensor,
    window: usize,
    stride: usize,
) -> (Tensor, Vec<usize>) {
    let (n, c, ih, iw) = shape4(input);
    let (oh, ow) = conv_output_hw(ih, iw, window, window, stride).expect("shape checked upstream");
    let x = input.data();
    let mut out = vec![0.0; n * c * oh * ow];
    let mut argmax = vec![0usize; out.len()];
    for img in 0..n {
        for ch in 0..c {
            let in_base = (img * c + ch) * ih * iw;
            let out_base = (img * c + ch) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = in_base;
                    for dy in 0..window {
                        for dx in 0..window {
                            let at = in_base + (oy * stride + dy) * iw + ox * stride + dx;
                            if x[at] > best {
                                best = x[at];
                                best_at = at;
                            }
                        }
                    }
                    out[out_base + oy * ow + ox] = best;
                    argmax[out_base + oy * ow + ox] = best_at;
                }
            }
        }
    }
    (
        Tensor::new(vec![n, c, oh, ow], out).expect("consistent pool output"),
        argmax,
    )
}

pub(crate) fn maxpool_backward(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor,
) -> Tensor {
    let mut gx = vec![0.0; input_shape.iter().product()];
    for (g, &at) in grad_out.data().iter().zip(argmax) {
        gx[at] += g;
    }
    Tensor::new(input_shape.to_vec(), gx).expect("pool input grad shape")
}

pub(crate) fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("relu shape")
}

pub(crate) fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("relu grad shape")
}

pub(crate) fn tanh_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|v| v.tanh()).collect();
    Tensor::new(input.shape().to_vec(), data).expect("tanh shape")
}

pub(crate) fn tanh_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| {
            let t = x.tanh();
            g * (1.0 - t * t)
        })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("tanh grad shape")
}

/// Fully connected layer over per-example flattened features.
pub(crate) fn fc_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Tensor {
    let n = input.shape()[0];
    let features = input.len() / n;
    let units = weights.shape()[0];
    let x = input.data();
    let w = weights.data();
    let b = bias.data();
    let mut out = vec![0.0; n * units];
    for img in 0..n {
        let in_base = img * features;
        for u in 0..units {
            let mut acc = b[u];
            let w_base = u * features;
            for f in 0..features {
                acc += x[in_base + f] * w[w_base + f];
            }
            out[img * units + u] = acc;
        }
    }
    Tensor::new(vec![n, units], out).expect("fc output shape")
}

pub(crate) fn fc_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    want_param_grads: bool,
) -> (Option<(Tensor, Tensor)>, Tensor) {
    let n = input.shape()[0];
    let features = input.len() / n;
    let units = weights.shape()[0];
    let x = input.data();
    let w = weights.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; if want_param_grads { w.len() } else { 0 }];
    let mut gb = vec![0.0; if want_param_grads { units } else { 0 }];
    for img in 0..n {
        let in_base = img * features;
        for u in 0..units {
            let go = g[img * units + u];
            let w_base = u * features;
            if want_param_grads {
                gb[u] += go;
                for f in 0..features {
                    gw[w_base + f] += go * x[in_base + f];
                }
            }
            for f in 0..features {
                gx[in_base + f] += go * w[w_base + f];
            }
        }
    }
    let params = want_param_grads.then(|| {
        (
            Tensor::new(weights.shape().to_vec(), gw).expect("fc weight grad"),
            Tensor::new(vec![units], gb).expect("fc bias grad"),
        )
    });
    (
        params,
        Tensor::new(input.shape().to_vec(), gx).expect("fc input grad"),
    )
}

fn shape4(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}
