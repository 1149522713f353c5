//! Array primitives the model computes on: real FFT pair, amplitude,
//! causal depthwise convolution, masked row softmax, top-k row masking,
//! dimension broadcasting and activations.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ComplexArray, DenseArray, Tensor};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Mask sentinel: most-negative finite float. Kept finite so masked logits
/// never poison downstream arithmetic with NaN.
pub const MASK_SENTINEL: f64 = f64::MIN;

/// One-sided discrete Fourier transform of a real sequence.
/// Returns `floor(T/2)+1` bins; bin 0 is the DC component (sum of inputs).
///
/// Direct O(T^2) evaluation: windows are short (l_in = 16), so the
/// round-trip tests are the contract, not asymptotics.
pub fn rfft(series: &[f64]) -> Result<Vec<Complex64>> {
    let t_len = series.len();
    if t_len < 2 {
        return Err(Error::InvalidLength {
            op: "rfft",
            detail: format!("series length {t_len} < 2"),
        });
    }
    let h_len = t_len / 2 + 1;
    let mut bins = Vec::with_capacity(h_len);
    for h in 0..h_len {
        let mut re = 0.0;
        let mut im = 0.0;
        for (t, &x) in series.iter().enumerate() {
            let angle = 2.0 * PI * (h as f64) * (t as f64) / (t_len as f64);
            re += x * angle.cos();
            im -= x * angle.sin();
        }
        bins.push(Complex64::new(re, im));
    }
    Ok(bins)
}

/// Inverse of [`rfft`]: reconstructs the length-`t_len` real sequence from
/// one-sided bins. Imaginary parts of the DC (and Nyquist, for even length)
/// bins are discarded by the symmetric reconstruction.
pub fn irfft(bins: &[Complex64], t_len: usize) -> Result<Vec<f64>> {
    let h_len = t_len / 2 + 1;
    if bins.len() != h_len {
        return Err(Error::InvalidLength {
            op: "irfft",
            detail: format!("expected {h_len} bins for length {t_len}, got {}", bins.len()),
        });
    }
    let even = t_len % 2 == 0;
    let mut out = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut acc = bins[0].re;
        let interior_end = if even { h_len - 1 } else { h_len };
        for (h, bin) in bins.iter().enumerate().take(interior_end).skip(1) {
            let angle = 2.0 * PI * (h as f64) * (t as f64) / (t_len as f64);
            acc += 2.0 * (bin.re * angle.cos() - bin.im * angle.sin());
        }
        if even {
            let nyquist = bins[h_len - 1].re;
            acc += if t % 2 == 0 { nyquist } else { -nyquist };
        }
        out.push(acc / t_len as f64);
    }
    Ok(out)
}

/// Elementwise modulus of complex bins.
pub fn amplitude(bins: &ComplexArray) -> DenseArray {
    let data = bins.data().iter().map(|c| c.norm()).collect();
    Tensor::from_vec(bins.shape(), data).expect("amplitude preserves shape")
}

/// Modulus of a 1-D bin sequence.
pub fn amplitude_bins(bins: &[Complex64]) -> Vec<f64> {
    bins.iter().map(|c| c.norm()).collect()
}

/// Depthwise causal 1-D convolution over the time axis of an [N, T, D]
/// panel with left zero-padding: channel d sees only kernel row d, and
/// output at time t never reads inputs after t.
pub fn conv1d_causal<S: Scalar>(
    panel: &Tensor<S>,
    kernel: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    if panel.shape().len() != 3 {
        return Err(Error::shape("conv1d_causal", format!("panel {:?}", panel.shape())));
    }
    let (n, t_len, d) = (panel.shape()[0], panel.shape()[1], panel.shape()[2]);
    if kernel.shape().len() != 2 || kernel.shape()[0] != d || kernel.shape()[1] < 1 {
        return Err(Error::shape(
            "conv1d_causal",
            format!("kernel {:?} for {d} channels", kernel.shape()),
        ));
    }
    if bias.shape() != [d] {
        return Err(Error::shape(
            "conv1d_causal",
            format!("bias {:?} for {d} channels", bias.shape()),
        ));
    }
    let d_conv = kernel.shape()[1];
    let mut out = Tensor::zeros(&[n, t_len, d]);
    for stock in 0..n {
        for t in 0..t_len {
            for c in 0..d {
                let mut acc = bias.data()[c];
                for j in 0..d_conv.min(t + 1) {
                    acc = acc + kernel.at2(c, j) * panel.at3(stock, t - j, c);
                }
                out.set3(stock, t, c, acc);
            }
        }
    }
    Ok(out)
}

/// Row-wise softmax over a 2-D logit matrix. Entries equal to
/// [`MASK_SENTINEL`] map to exactly zero; remaining entries are normalized
/// with row-max subtraction. A fully masked row is an error.
pub fn row_softmax<S: Scalar>(logits: &Tensor<S>) -> Result<Tensor<S>> {
    if logits.shape().len() != 2 {
        return Err(Error::shape("row_softmax", format!("{:?}", logits.shape())));
    }
    let (rows, cols) = (logits.shape()[0], logits.shape()[1]);
    let mut out = Tensor::zeros(&[rows, cols]);
    for i in 0..rows {
        let mut row_max = f64::NEG_INFINITY;
        for j in 0..cols {
            let v = logits.at2(i, j).value();
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("row_softmax logits[{i},{j}]"),
                });
            }
            if v != MASK_SENTINEL && v > row_max {
                row_max = v;
            }
        }
        if row_max == f64::NEG_INFINITY {
            return Err(Error::FullyMaskedRow { row: i });
        }
        let shift = S::lift(row_max);
        let mut sum = S::zero();
        for j in 0..cols {
            let x = logits.at2(i, j);
            if x.value() == MASK_SENTINEL {
                continue;
            }
            let e = Scalar::exp(x - shift);
            out.set2(i, j, e);
            sum = sum + e;
        }
        for j in 0..cols {
            if logits.at2(i, j).value() == MASK_SENTINEL {
                out.set2(i, j, S::zero());
            } else {
                let v = out.at2(i, j) / sum;
                out.set2(i, j, v);
            }
        }
    }
    Ok(out)
}

/// Per row, flags the k entries with the largest values (ties keep the
/// smaller column). Entries already at the sentinel never win.
pub fn topk_row_select<S: Scalar>(logits: &Tensor<S>, k: usize) -> Result<Vec<bool>> {
    if logits.shape().len() != 2 {
        return Err(Error::shape("topk_row_mask", format!("{:?}", logits.shape())));
    }
    let (rows, cols) = (logits.shape()[0], logits.shape()[1]);
    if k < 1 || k + 1 > cols {
        return Err(Error::invalid(
            "topk_row_mask",
            format!("k = {k} outside [1, {}]", cols.saturating_sub(1)),
        ));
    }
    let mut keep = vec![false; rows * cols];
    let mut order: Vec<usize> = Vec::with_capacity(cols);
    for i in 0..rows {
        order.clear();
        order.extend(0..cols);
        let row = &logits.data()[i * cols..(i + 1) * cols];
        for (j, s) in row.iter().enumerate() {
            let v = s.value();
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("topk logits[{i},{j}]"),
                });
            }
        }
        order.sort_by(|&a, &b| {
            row[b].value()
                .partial_cmp(&row[a].value())
                .expect("finite by check above")
                .then(a.cmp(&b))
        });
        for &j in order.iter().take(k) {
            if row[j].value() != MASK_SENTINEL {
                keep[i * cols + j] = true;
            }
        }
    }
    Ok(keep)
}

/// Replaces every unkept entry with the mask sentinel, preserving kept
/// entries (and their gradient paths) untouched.
pub fn apply_row_mask<S: Scalar>(logits: &Tensor<S>, keep: &[bool]) -> Result<Tensor<S>> {
    if keep.len() != logits.len() {
        return Err(Error::shape(
            "apply_row_mask",
            format!("mask length {} vs logits {}", keep.len(), logits.len()),
        ));
    }
    let data = logits
        .data()
        .iter()
        .zip(keep)
        .map(|(&s, &k)| if k { s } else { S::lift(MASK_SENTINEL) })
        .collect();
    Ok(Tensor::from_vec(logits.shape(), data)?)
}

/// Top-k sparsification: per row keeps the k largest entries, masking the
/// rest to the sentinel. The caller pre-masks the diagonal so self is never
/// a candidate.
pub fn topk_row_mask<S: Scalar>(logits: &Tensor<S>, k: usize) -> Result<Tensor<S>> {
    let keep = topk_row_select(logits, k)?;
    apply_row_mask(logits, &keep)
}

/// Which axes of the [N, T, .] target a tensor is missing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplicateOver {
    /// Input [T, d] replicated across stocks.
    Stocks,
    /// Input [N, d] replicated across time.
    Time,
    /// Input [d] replicated across both.
    StocksAndTime,
}

/// Replicates a tensor along its missing axes to shape [N, T, d].
pub fn broadcast<S: Scalar>(
    x: &Tensor<S>,
    over: ReplicateOver,
    n: usize,
    t_len: usize,
) -> Result<Tensor<S>> {
    match over {
        ReplicateOver::Stocks => {
            if x.shape().len() != 2 || x.shape()[0] != t_len {
                return Err(Error::shape(
                    "broadcast",
                    format!("expected [T={t_len}, d], got {:?}", x.shape()),
                ));
            }
            let d = x.shape()[1];
            let mut out = Tensor::zeros(&[n, t_len, d]);
            for stock in 0..n {
                for t in 0..t_len {
                    for j in 0..d {
                        out.set3(stock, t, j, x.at2(t, j));
                    }
                }
            }
            Ok(out)
        }
        ReplicateOver::Time => {
            if x.shape().len() != 2 || x.shape()[0] != n {
                return Err(Error::shape(
                    "broadcast",
                    format!("expected [N={n}, d], got {:?}", x.shape()),
                ));
            }
            let d = x.shape()[1];
            let mut out = Tensor::zeros(&[n, t_len, d]);
            for stock in 0..n {
                for t in 0..t_len {
                    for j in 0..d {
                        out.set3(stock, t, j, x.at2(stock, j));
                    }
                }
            }
            Ok(out)
        }
        ReplicateOver::StocksAndTime => {
            if x.shape().len() != 1 {
                return Err(Error::shape(
                    "broadcast",
                    format!("expected [d], got {:?}", x.shape()),
                ));
            }
            let d = x.shape()[0];
            let mut out = Tensor::zeros(&[n, t_len, d]);
            for stock in 0..n {
                for t in 0..t_len {
                    for j in 0..d {
                        out.set3(stock, t, j, x.data()[j]);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Elementwise activation kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Silu,
    Softplus,
    Tanh,
}

/// Applies an activation elementwise.
pub fn activation<S: Scalar>(kind: Activation, x: &Tensor<S>) -> Tensor<S> {
    match kind {
        Activation::Sigmoid => x.map(Scalar::sigmoid),
        Activation::Silu => x.map(Scalar::silu),
        Activation::Softplus => x.map(Scalar::softplus),
        Activation::Tanh => x.map(Scalar::tanh),
    }
}
