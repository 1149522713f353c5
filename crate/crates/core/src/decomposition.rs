//! Index-guided frequency filtering decomposition.
//!
//! The stock panel is split into a commonality component (market-wide
//! trends) and a specificity component (what remains once commonality is
//! filtered away). Filter gains are produced per frequency bin by a sigmoid
//! readout of the index amplitude spectrum, shared across stocks and
//! features, and applied as real scales on the complex coefficients so
//! phase is preserved.

use crate::error::{Error, Result};
use crate::numerics::{amplitude_bins, rfft};
use crate::params::{fetch, ParamValues};
use crate::scalar::Scalar;
use crate::tensor::{DenseArray, Tensor};

/// Gain-generator matrices, one per filter. Both are [H, H] where
/// H = floor(T/2)+1.
#[derive(Clone, Debug)]
pub struct DecompParams<S> {
    pub w_commonality: Tensor<S>,
    pub w_specificity: Tensor<S>,
}

impl<S: Scalar> DecompParams<S> {
    pub fn from_values(values: &ParamValues<S>, h_len: usize) -> Result<Self> {
        Ok(DecompParams {
            w_commonality: fetch(values, "decomp.w_c", &[h_len, h_len])?.clone(),
            w_specificity: fetch(values, "decomp.w_s", &[h_len, h_len])?.clone(),
        })
    }
}

/// Decomposition result: commonality/specificity panels plus the gain
/// vectors as diagnostics.
#[derive(Clone, Debug)]
pub struct DecompOutput<S> {
    pub commonality: Tensor<S>,
    pub specificity: Tensor<S>,
    pub gain_commonality: Vec<S>,
    pub gain_specificity: Vec<S>,
}

/// Number of one-sided frequency bins for a window of length `t_len`.
pub fn bin_count(t_len: usize) -> usize {
    t_len / 2 + 1
}

/// gains = sigmoid(W^T amp): strictly inside (0, 1).
pub fn filter_gains<S: Scalar>(amp: &[S], weights: &Tensor<S>) -> Result<Vec<S>> {
    let h_len = amp.len();
    if weights.shape() != [h_len, h_len] {
        return Err(Error::shape(
            "filter_gains",
            format!("weights {:?} for {h_len} bins", weights.shape()),
        ));
    }
    let mut gains = Vec::with_capacity(h_len);
    for out_bin in 0..h_len {
        let mut acc = S::zero();
        for (in_bin, &a) in amp.iter().enumerate() {
            // W^T amp: column `out_bin` of W dotted with the amplitude vector
            acc = acc + weights.at2(in_bin, out_bin) * a;
        }
        gains.push(acc.sigmoid());
    }
    Ok(gains)
}

/// Splits the panel using gains derived from the index amplitude spectrum.
pub fn decompose<S: Scalar>(
    panel: &DenseArray,
    index: &[f64],
    params: &DecompParams<S>,
) -> Result<DecompOutput<S>> {
    let amp = index_amplitude(panel, index)?;
    let amp_lifted: Vec<S> = amp.iter().map(|&a| S::lift(a)).collect();
    let gain_c = filter_gains(&amp_lifted, &params.w_commonality)?;
    let sig_s = filter_gains(&amp_lifted, &params.w_specificity)?;
    let gain_s: Vec<S> = sig_s.into_iter().map(|g| S::one() - g).collect();
    decompose_with_gains(panel, gain_c, gain_s)
}

/// Amplitude spectrum of the index series, after validating panel/index
/// compatibility.
pub fn index_amplitude(panel: &DenseArray, index: &[f64]) -> Result<Vec<f64>> {
    if panel.shape().len() != 3 {
        return Err(Error::shape("decompose", format!("panel {:?}", panel.shape())));
    }
    let t_len = panel.shape()[1];
    if index.len() != t_len {
        return Err(Error::shape(
            "decompose",
            format!("index length {} vs panel T {}", index.len(), t_len),
        ));
    }
    if t_len < 2 {
        return Err(Error::InvalidLength {
            op: "decompose",
            detail: format!("window length {t_len} < 2"),
        });
    }
    if !panel.all_finite() || !index.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "decompose input".into(),
        });
    }
    Ok(amplitude_bins(&rfft(index)?))
}

/// Core of the decomposition given explicit per-bin gains (also used by the
/// index-free ablation, where gains come from free parameters).
///
/// Per bin h the filtered coefficients are
///   commonality:  X^f . g_c[h]
///   specificity: (X^f - X^f . g_c[h]) . g_s[h] = X^f . (1 - g_c[h]) . g_s[h]
/// and the inverse transform is evaluated as a linear combination of
/// per-bin time-domain contributions, which keeps the tape small: the
/// panel's own spectrum is constant, only the gains carry gradients.
pub fn decompose_with_gains<S: Scalar>(
    panel: &DenseArray,
    gain_c: Vec<S>,
    gain_s: Vec<S>,
) -> Result<DecompOutput<S>> {
    let (n, t_len, f) = (panel.shape()[0], panel.shape()[1], panel.shape()[2]);
    let h_len = bin_count(t_len);
    if gain_c.len() != h_len || gain_s.len() != h_len {
        return Err(Error::shape(
            "decompose",
            format!("{} gains for {h_len} bins", gain_c.len()),
        ));
    }

    // coefficient combinations per bin
    let coef_c: Vec<S> = gain_c.clone();
    let coef_s: Vec<S> = gain_c
        .iter()
        .zip(&gain_s)
        .map(|(&gc, &gs)| (S::one() - gc) * gs)
        .collect();

    // inverse-transform basis: cos/sin tables and per-bin weights
    let even = t_len % 2 == 0;
    let scale = 1.0 / t_len as f64;
    let mut cos_tab = vec![0.0; h_len * t_len];
    let mut sin_tab = vec![0.0; h_len * t_len];
    for h in 0..h_len {
        let double = h != 0 && !(even && h == h_len - 1);
        let w = if double { 2.0 * scale } else { scale };
        for t in 0..t_len {
            let angle = 2.0 * std::f64::consts::PI * (h as f64) * (t as f64) / (t_len as f64);
            cos_tab[h * t_len + t] = w * angle.cos();
            sin_tab[h * t_len + t] = w * angle.sin();
        }
    }

    let mut commonality = Tensor::zeros(&[n, t_len, f]);
    let mut specificity = Tensor::zeros(&[n, t_len, f]);
    let mut series = vec![0.0; t_len];
    for stock in 0..n {
        for feat in 0..f {
            for t in 0..t_len {
                series[t] = panel.at3(stock, t, feat);
            }
            let bins = rfft(&series)?;
            for t in 0..t_len {
                let mut acc_c = S::zero();
                let mut acc_s = S::zero();
                for (h, bin) in bins.iter().enumerate() {
                    // time-domain contribution of bin h at step t (constant)
                    let base =
                        bin.re * cos_tab[h * t_len + t] - bin.im * sin_tab[h * t_len + t];
                    let base = S::lift(base);
                    acc_c = acc_c + coef_c[h] * base;
                    acc_s = acc_s + coef_s[h] * base;
                }
                commonality.set3(stock, t, feat, acc_c);
                specificity.set3(stock, t, feat, acc_s);
            }
        }
    }

    Ok(DecompOutput {
        commonality,
        specificity,
        gain_commonality: gain_c,
        gain_specificity: gain_s,
    })
}
