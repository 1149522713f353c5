//! Zero-order-hold discretization, the sequential state-space scan, and the
//! node-independent selective block that models each stock on its own.

use crate::error::{Error, Result};
use crate::numerics::conv1d_causal;
use crate::params::{fetch, ParamValues};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-step selection parameters shared by the plain and the
/// information-guided blocks. For guided blocks the state is widened by the
/// guide dimension and `a_diag` covers the widened state.
#[derive(Clone, Debug)]
pub struct SelectionParams<S> {
    /// [d_model, d_state] input-matrix projection.
    pub w_input: Tensor<S>,
    /// [d_model, d_state] output-matrix projection.
    pub w_output: Tensor<S>,
    /// [d_model, d_model] step-size projection.
    pub w_step: Tensor<S>,
    /// [d_model] step-size bias inside the softplus.
    pub step_bias: Tensor<S>,
    /// [d_model, d_state + d_guide] diagonal state matrix, negative at init.
    pub a_diag: Tensor<S>,
}

impl<S: Scalar> SelectionParams<S> {
    pub fn from_values(
        values: &ParamValues<S>,
        prefix: &str,
        d_model: usize,
        d_state: usize,
        d_guide: usize,
    ) -> Result<Self> {
        let id = |name: &str| format!("{prefix}.{name}");
        Ok(SelectionParams {
            w_input: fetch(values, &id("w_input"), &[d_model, d_state])?.clone(),
            w_output: fetch(values, &id("w_output"), &[d_model, d_state])?.clone(),
            w_step: fetch(values, &id("w_step"), &[d_model, d_model])?.clone(),
            step_bias: fetch(values, &id("step_bias"), &[d_model])?.clone(),
            a_diag: fetched_a_diag(values, &id("a_diag"), d_model, d_state + d_guide)?,
        })
    }
}

fn fetched_a_diag<S: Scalar>(
    values: &ParamValues<S>,
    id: &str,
    d_model: usize,
    d_wide: usize,
) -> Result<Tensor<S>> {
    Ok(fetch(values, id, &[d_model, d_wide])?.clone())
}

/// Parameters of one node-independent selective block.
#[derive(Clone, Debug)]
pub struct SsmBlockParams<S> {
    /// [F_in, d_model] input embedding.
    pub in_proj: Tensor<S>,
    /// [d_model, d_conv] depthwise kernel.
    pub conv_kernel: Tensor<S>,
    /// [d_model] convolution bias.
    pub conv_bias: Tensor<S>,
    pub selection: SelectionParams<S>,
}

impl<S: Scalar> SsmBlockParams<S> {
    pub fn from_values(
        values: &ParamValues<S>,
        prefix: &str,
        f_in: usize,
        d_model: usize,
        d_state: usize,
        d_conv: usize,
    ) -> Result<Self> {
        let id = |name: &str| format!("{prefix}.{name}");
        Ok(SsmBlockParams {
            in_proj: fetch(values, &id("in_proj"), &[f_in, d_model])?.clone(),
            conv_kernel: fetch(values, &id("conv_kernel"), &[d_model, d_conv])?.clone(),
            conv_bias: fetch(values, &id("conv_bias"), &[d_model])?.clone(),
            selection: SelectionParams::from_values(values, prefix, d_model, d_state, 0)?,
        })
    }
}

/// Zero-order-hold discretization of the continuous parameters.
///
/// Per (t, channel c, state s) with z = step[t,c] * a_diag[c,s]:
///   a_bar = e^z
///   b_bar = ((e^z - 1)/z) * step[t,c] * b[t,s]
/// with the series 1 + z/2 + z^2/6 substituted for (e^z - 1)/z when |z| is
/// tiny, which removes the 0/0 singularity without losing accuracy.
pub fn discretize<S: Scalar>(
    a_diag: &Tensor<S>,
    b: &Tensor<S>,
    step: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    if a_diag.shape().len() != 2 || b.shape().len() != 2 || step.shape().len() != 2 {
        return Err(Error::shape(
            "discretize",
            format!("{:?}, {:?}, {:?}", a_diag.shape(), b.shape(), step.shape()),
        ));
    }
    let (d_model, d_state) = (a_diag.shape()[0], a_diag.shape()[1]);
    let t_len = b.shape()[0];
    if b.shape()[1] != d_state || step.shape() != [t_len, d_model] {
        return Err(Error::shape(
            "discretize",
            format!(
                "a {:?}, b {:?}, step {:?} are inconsistent",
                a_diag.shape(),
                b.shape(),
                step.shape()
            ),
        ));
    }
    for &dt in step.data() {
        if dt.value() <= 0.0 {
            return Err(Error::invalid(
                "discretize",
                format!("non-positive step size {}", dt.value()),
            ));
        }
    }

    let mut a_bar = Tensor::zeros(&[t_len, d_model, d_state]);
    let mut b_bar = Tensor::zeros(&[t_len, d_model, d_state]);
    let half = S::lift(0.5);
    let sixth = S::lift(1.0 / 6.0);
    for t in 0..t_len {
        for c in 0..d_model {
            let dt = step.at2(t, c);
            for s in 0..d_state {
                let z = dt * a_diag.at2(c, s);
                let ez = Scalar::exp(z);
                let phi = if z.value().abs() < 1e-6 {
                    S::one() + z * half + z * z * sixth
                } else {
                    (ez - S::one()) / z
                };
                a_bar.set3(t, c, s, ez);
                b_bar.set3(t, c, s, phi * dt * b.at2(t, s));
            }
        }
    }
    Ok((a_bar, b_bar))
}

/// Sequential state-space recurrence for one sequence:
///   h_t[c,s] = a_bar[t,c,s] h_{t-1}[c,s] + b_bar[t,c,s] x[t,c]
///   o_t[c]   = sum_s c_mat[t,s] h_t[c,s]
/// starting from h_0 = 0.
pub fn ssm_scan<S: Scalar>(
    a_bar: &Tensor<S>,
    b_bar: &Tensor<S>,
    c_mat: &Tensor<S>,
    x: &Tensor<S>,
) -> Result<Tensor<S>> {
    if a_bar.shape().len() != 3 {
        return Err(Error::shape("ssm_scan", format!("a_bar {:?}", a_bar.shape())));
    }
    let (t_len, d_model, d_state) = (a_bar.shape()[0], a_bar.shape()[1], a_bar.shape()[2]);
    if b_bar.shape() != [t_len, d_model, d_state]
        || c_mat.shape() != [t_len, d_state]
        || x.shape() != [t_len, d_model]
    {
        return Err(Error::shape(
            "ssm_scan",
            format!(
                "a {:?}, b {:?}, c {:?}, x {:?}",
                a_bar.shape(),
                b_bar.shape(),
                c_mat.shape(),
                x.shape()
            ),
        ));
    }

    let mut state = vec![S::zero(); d_model * d_state];
    let mut out = Tensor::zeros(&[t_len, d_model]);
    for t in 0..t_len {
        for c in 0..d_model {
            let xc = x.at2(t, c);
            let mut o = S::zero();
            let row = &mut state[c * d_state..(c + 1) * d_state];
            for (s, h) in row.iter_mut().enumerate() {
                *h = a_bar.at3(t, c, s) * *h + b_bar.at3(t, c, s) * xc;
                o = o + c_mat.at2(t, s) * *h;
            }
            out.set2(t, c, o);
        }
    }
    Ok(out)
}

/// Node-independent selective block: embeds features, extracts local
/// patterns with a causal convolution, generates per-step B, C and step
/// sizes from the sequence itself, scans, and adds the embedding back as a
/// residual. Stocks never exchange information here.
pub fn mamba_block<S: Scalar>(
    panel: &Tensor<S>,
    params: &SsmBlockParams<S>,
    residual: bool,
) -> Result<Tensor<S>> {
    if panel.shape().len() != 3 {
        return Err(Error::shape("mamba_block", format!("panel {:?}", panel.shape())));
    }
    let (n, t_len, f_in) = (panel.shape()[0], panel.shape()[1], panel.shape()[2]);
    if params.in_proj.shape()[0] != f_in {
        return Err(Error::shape(
            "mamba_block",
            format!("in_proj {:?} vs F {f_in}", params.in_proj.shape()),
        ));
    }
    let d_model = params.in_proj.shape()[1];

    // embed: [N,T,F] . [F,d_model]
    let mut embedded = Tensor::zeros(&[n, t_len, d_model]);
    for stock in 0..n {
        for t in 0..t_len {
            for c in 0..d_model {
                let mut acc = S::zero();
                for feat in 0..f_in {
                    acc = acc + panel.at3(stock, t, feat) * params.in_proj.at2(feat, c);
                }
                embedded.set3(stock, t, c, acc);
            }
        }
    }

    let conv = conv1d_causal(&embedded, &params.conv_kernel, &params.conv_bias)?;
    let activated = conv.map(Scalar::silu);

    let mut out = Tensor::zeros(&[n, t_len, d_model]);
    for stock in 0..n {
        let seq = sequence_slice(&activated, stock);
        let scan = selective_scan_sequence(&seq, params, None)?;
        for t in 0..t_len {
            for c in 0..d_model {
                let y = scan.at2(t, c);
                let v = if residual {
                    y + embedded.at3(stock, t, c)
                } else {
                    y
                };
                out.set3(stock, t, c, v);
            }
        }
    }
    Ok(out)
}

/// Copies one stock's [T, D] sequence out of an [N, T, D] panel.
pub fn sequence_slice<S: Scalar>(panel: &Tensor<S>, stock: usize) -> Tensor<S> {
    let (t_len, d) = (panel.shape()[1], panel.shape()[2]);
    let start = panel.off3(stock, 0, 0);
    Tensor::from_vec(&[t_len, d], panel.data()[start..start + t_len * d].to_vec())
        .expect("contiguous slice")
}

/// Selection + scan for one activated sequence [T, d_model]. When `guide`
/// is given as a [T, d_guide] sequence, it is concatenated into both the
/// input and output matrices along the state axis, widening the recurrent
/// state; `a_diag` must already cover the widened state.
pub fn selective_scan_sequence<S: Scalar>(
    seq: &Tensor<S>,
    params: &SsmBlockParams<S>,
    guide: Option<&Tensor<S>>,
) -> Result<Tensor<S>> {
    let (t_len, d_model) = (seq.shape()[0], seq.shape()[1]);
    let d_state = params.w_input.shape()[1];
    let d_guide = guide.map_or(0, |g| g.shape()[1]);
    let d_wide = d_state + d_guide;
    if params.a_diag.shape() != [d_model, d_wide] {
        return Err(Error::shape(
            "selective_scan",
            format!("a_diag {:?} vs widened state {d_wide}", params.a_diag.shape()),
        ));
    }
    if let Some(g) = guide {
        if g.shape()[0] != t_len {
            return Err(Error::shape(
                "selective_scan",
                format!("guide {:?} vs T {t_len}", g.shape()),
            ));
        }
    }

    // B, C: [T, d_state + d_guide] with the guide occupying the tail
    let mut b = Tensor::zeros(&[t_len, d_wide]);
    let mut c = Tensor::zeros(&[t_len, d_wide]);
    for t in 0..t_len {
        for s in 0..d_state {
            let mut acc_b = S::zero();
            let mut acc_c = S::zero();
            for ch in 0..d_model {
                let u = seq.at2(t, ch);
                acc_b = acc_b + u * params.w_input.at2(ch, s);
                acc_c = acc_c + u * params.w_output.at2(ch, s);
            }
            b.set2(t, s, acc_b);
            c.set2(t, s, acc_c);
        }
        if let Some(g) = guide {
            for j in 0..d_guide {
                b.set2(t, d_state + j, g.at2(t, j));
                c.set2(t, d_state + j, g.at2(t, j));
            }
        }
    }

    // step sizes: softplus(u . w_step + bias)
    let mut step = Tensor::zeros(&[t_len, d_model]);
    for t in 0..t_len {
        for c_out in 0..d_model {
            let mut acc = params.step_bias.data()[c_out];
            for ch in 0..d_model {
                acc = acc + seq.at2(t, ch) * params.w_step.at2(ch, c_out);
            }
            step.set2(t, c_out, acc.softplus());
        }
    }

    let (a_bar, b_bar) = discretize(&params.a_diag, &b, &step)?;
    ssm_scan(&a_bar, &b_bar, &c, seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::tensor::DenseArray;

    #[test]
    fn discretize_small_step_limit() {
        // step -> 0: a_bar -> 1, b_bar -> step * b
        let a = Tensor::from_vec(&[1, 1], vec![-2.0]).unwrap();
        let b = Tensor::from_vec(&[1, 1], vec![3.0]).unwrap();
        let dt = 1e-8;
        let step = Tensor::from_vec(&[1, 1], vec![dt]).unwrap();
        let (a_bar, b_bar) = discretize(&a, &b, &step).unwrap();
        assert!((a_bar.data()[0] - 1.0).abs() < 1e-7);
        let expected = dt * 3.0;
        assert!((b_bar.data()[0] - expected).abs() / expected < 1e-6);
    }

    #[test]
    fn discretize_closed_form_ln2() {
        // step = ln 2, a = 1, b = 1: a_bar = 2, b_bar = (2-1)/ln2 * ln2 = 1
        let a = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let b = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let step = Tensor::from_vec(&[1, 1], vec![2.0_f64.ln()]).unwrap();
        let (a_bar, b_bar) = discretize(&a, &b, &step).unwrap();
        assert!((a_bar.data()[0] - 2.0).abs() < 1e-12);
        assert!((b_bar.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discretize_closed_form_decay() {
        // a = -1, step = 1, b = 1: a_bar = e^-1, b_bar = 1 - e^-1
        let a = Tensor::from_vec(&[1, 1], vec![-1.0]).unwrap();
        let b = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let step = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let (a_bar, b_bar) = discretize(&a, &b, &step).unwrap();
        let e_inv = (-1.0_f64).exp();
        assert!((a_bar.data()[0] - e_inv).abs() < 1e-15);
        assert!((b_bar.data()[0] - (1.0 - e_inv)).abs() < 1e-15);
    }

    #[test]
    fn discretize_rejects_non_positive_step() {
        let a = Tensor::from_vec(&[1, 1], vec![-1.0]).unwrap();
        let b = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let step = Tensor::from_vec(&[1, 1], vec![0.0]).unwrap();
        assert!(discretize(&a, &b, &step).is_err());
    }

    #[test]
    fn scan_hand_unrolled_geometric() {
        // a_bar = 0.5, b_bar = 1, c = 1, x = [1,0,0] -> o = [1, 0.5, 0.25]
        let a_bar = Tensor::from_vec(&[3, 1, 1], vec![0.5; 3]).unwrap();
        let b_bar = Tensor::from_vec(&[3, 1, 1], vec![1.0; 3]).unwrap();
        let c_mat = Tensor::from_vec(&[3, 1], vec![1.0; 3]).unwrap();
        let x = Tensor::from_vec(&[3, 1], vec![1.0, 0.0, 0.0]).unwrap();
        let o = ssm_scan(&a_bar, &b_bar, &c_mat, &x).unwrap();
        assert_eq!(o.data(), &[1.0, 0.5, 0.25]);
    }

    #[test]
    fn scan_with_zero_transition_is_memoryless() {
        let mut rng = SeededRng::new(1);
        let t_len = 5;
        let a_bar = Tensor::zeros(&[t_len, 2, 2]);
        let b_bar = Tensor::from_vec(
            &[t_len, 2, 2],
            (0..t_len * 4).map(|_| rng.normal()).collect(),
        )
        .unwrap();
        let c_mat =
            Tensor::from_vec(&[t_len, 2], (0..t_len * 2).map(|_| rng.normal()).collect()).unwrap();
        let x =
            Tensor::from_vec(&[t_len, 2], (0..t_len * 2).map(|_| rng.normal()).collect()).unwrap();
        let o = ssm_scan(&a_bar, &b_bar, &c_mat, &x).unwrap();
        for t in 0..t_len {
            for c in 0..2 {
                let direct: f64 = (0..2)
                    .map(|s| c_mat.at2(t, s) * b_bar.at3(t, c, s) * x.at2(t, c))
                    .sum();
                assert!((o.at2(t, c) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scan_zero_input_zero_output() {
        let a_bar = Tensor::filled(&[4, 2, 3], 0.9);
        let b_bar = Tensor::filled(&[4, 2, 3], 0.7);
        let c_mat = Tensor::filled(&[4, 3], 1.1);
        let x = Tensor::zeros(&[4, 2]);
        let o = ssm_scan(&a_bar, &b_bar, &c_mat, &x).unwrap();
        assert!(o.data().iter().all(|&v| v == 0.0));
    }

    /// Dense oracle: materialize the full lower-triangular kernel
    /// o_t = sum_{j<=t} C_t (prod_{i=j+1..t} A_i) B_j x_j and compare.
    fn dense_scan_oracle(
        a_bar: &DenseArray,
        b_bar: &DenseArray,
        c_mat: &DenseArray,
        x: &DenseArray,
    ) -> DenseArray {
        let (t_len, d_model, d_state) = (a_bar.shape()[0], a_bar.shape()[1], a_bar.shape()[2]);
        let mut out = Tensor::zeros(&[t_len, d_model]);
        for t in 0..t_len {
            for c in 0..d_model {
                let mut acc = 0.0;
                for j in 0..=t {
                    for s in 0..d_state {
                        let mut decay = 1.0;
                        for i in (j + 1)..=t {
                            decay *= a_bar.at3(i, c, s);
                        }
                        acc += c_mat.at2(t, s) * decay * b_bar.at3(j, c, s) * x.at2(j, c);
                    }
                }
                out.set2(t, c, acc);
            }
        }
        out
    }

    #[test]
    fn scan_matches_dense_materialization() {
        let mut rng = SeededRng::new(99);
        for trial in 0..20 {
            let t_len = 2 + (trial % 15);
            let d_model = 1 + (trial % 4);
            let d_state = 1 + ((trial / 2) % 4);
            let rand_t = |rng: &mut SeededRng, shape: &[usize]| {
                let len: usize = shape.iter().product();
                DenseArray::from_vec(shape, (0..len).map(|_| rng.normal() * 0.6).collect()).unwrap()
            };
            let a_bar = rand_t(&mut rng, &[t_len, d_model, d_state]);
            let b_bar = rand_t(&mut rng, &[t_len, d_model, d_state]);
            let c_mat = rand_t(&mut rng, &[t_len, d_state]);
            let x = rand_t(&mut rng, &[t_len, d_model]);
            let fast = ssm_scan(&a_bar, &b_bar, &c_mat, &x).unwrap();
            let slow = dense_scan_oracle(&a_bar, &b_bar, &c_mat, &x);
            for (f, s) in fast.data().iter().zip(slow.data()) {
                assert!((f - s).abs() < 1e-10, "{f} vs {s}");
            }
        }
    }

    fn tiny_block_params(f_in: usize, d_model: usize, d_state: usize, seed: u64) -> SsmBlockParams<f64> {
        let mut rng = SeededRng::new(seed);
        let rand_t = |rng: &mut SeededRng, shape: &[usize]| {
            let len: usize = shape.iter().product();
            DenseArray::from_vec(shape, (0..len).map(|_| rng.normal() * 0.4).collect()).unwrap()
        };
        SsmBlockParams {
            in_proj: rand_t(&mut rng, &[f_in, d_model]),
            conv_kernel: rand_t(&mut rng, &[d_model, 2]),
            conv_bias: rand_t(&mut rng, &[d_model]),
            w_input: rand_t(&mut rng, &[d_model, d_state]),
            w_output: rand_t(&mut rng, &[d_model, d_state]),
            w_step: rand_t(&mut rng, &[d_model, d_model]),
            step_bias: rand_t(&mut rng, &[d_model]),
            a_diag: DenseArray::from_vec(
                &[d_model, d_state],
                (0..d_model * d_state)
                    .map(|i| -(1.0 + (i % d_state) as f64))
                    .collect(),
            )
            .unwrap(),
        }
    }

    #[test]
    fn identical_stocks_get_identical_outputs() {
        let mut rng = SeededRng::new(7);
        let series: Vec<f64> = (0..6 * 3).map(|_| rng.normal()).collect();
        let mut data = series.clone();
        data.extend_from_slice(&series);
        let panel = DenseArray::from_vec(&[2, 6, 3], data).unwrap();
        let params = tiny_block_params(3, 4, 2, 8);
        let out = mamba_block(&panel, &params, true).unwrap();
        for t in 0..6 {
            for c in 0..4 {
                assert_eq!(out.at3(0, t, c), out.at3(1, t, c));
            }
        }
    }

    #[test]
    fn stock_permutation_equivariance() {
        let mut rng = SeededRng::new(17);
        let panel = DenseArray::from_vec(
            &[3, 5, 2],
            (0..30).map(|_| rng.normal()).collect(),
        )
        .unwrap();
        let params = tiny_block_params(2, 3, 2, 18);
        let out = mamba_block(&panel, &params, true).unwrap();

        // permute stocks (2,0,1) and re-run
        let perm = [2usize, 0, 1];
        let mut permuted = DenseArray::zeros(&[3, 5, 2]);
        for (new_i, &old_i) in perm.iter().enumerate() {
            for t in 0..5 {
                for f in 0..2 {
                    permuted.set3(new_i, t, f, panel.at3(old_i, t, f));
                }
            }
        }
        let out_p = mamba_block(&permuted, &params, true).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            for t in 0..5 {
                for c in 0..3 {
                    assert_eq!(out_p.at3(new_i, t, c), out.at3(old_i, t, c));
                }
            }
        }
    }

    #[test]
    fn node_independence_is_exact() {
        let mut rng = SeededRng::new(27);
        let mut data: Vec<f64> = (0..2 * 5 * 2).map(|_| rng.normal()).collect();
        let params = tiny_block_params(2, 3, 2, 28);
        let before = mamba_block(&DenseArray::from_vec(&[2, 5, 2], data.clone()).unwrap(), &params, true).unwrap();
        // zero out stock 1 entirely; stock 0's output must not move a bit
        for v in data[10..].iter_mut() {
            *v = 0.0;
        }
        let after = mamba_block(&DenseArray::from_vec(&[2, 5, 2], data).unwrap(), &params, true).unwrap();
        for t in 0..5 {
            for c in 0..3 {
                assert_eq!(before.at3(0, t, c), after.at3(0, t, c));
            }
        }
    }

    #[test]
    fn block_causality() {
        let mut rng = SeededRng::new(37);
        let mut data: Vec<f64> = (0..1 * 6 * 2).map(|_| rng.normal()).collect();
        let params = tiny_block_params(2, 3, 2, 38);
        let before = mamba_block(&DenseArray::from_vec(&[1, 6, 2], data.clone()).unwrap(), &params, true).unwrap();
        // perturb the last two steps; outputs at t <= 3 must be unchanged
        for v in data[8..].iter_mut() {
            *v += 5.0;
        }
        let after = mamba_block(&DenseArray::from_vec(&[1, 6, 2], data).unwrap(), &params, true).unwrap();
        for t in 0..4 {
            for c in 0..3 {
                assert_eq!(before.at3(0, t, c), after.at3(0, t, c));
            }
        }
    }

    #[test]
    fn stability_at_initialization() {
        // a_diag < 0 and step in [1e-3, 0.1] keep |a_bar| < 1
        let a = Tensor::from_vec(&[2, 2], vec![-1.0, -2.0, -1.0, -2.0]).unwrap();
        let b = Tensor::filled(&[3, 2], 1.0);
        let step = Tensor::from_vec(&[3, 2], vec![1e-3, 0.05, 0.1, 0.02, 0.003, 0.07]).unwrap();
        let (a_bar, _) = discretize(&a, &b, &step).unwrap();
        for &v in a_bar.data() {
            assert!(v.abs() < 1.0);
        }
    }

    /// Independent straight-line re-implementation of the whole block used
    /// as a dual-implementation oracle. No shared helpers: embedding,
    /// convolution, selection, discretization and scan are written inline.
    fn naive_block(panel: &DenseArray, p: &SsmBlockParams<f64>) -> DenseArray {
        let (n, t_len, f_in) = (panel.shape()[0], panel.shape()[1], panel.shape()[2]);
        let d_model = p.in_proj.shape()[1];
        let d_state = p.w_input.shape()[1];
        let d_conv = p.conv_kernel.shape()[1];
        let mut out = Tensor::zeros(&[n, t_len, d_model]);
        for stock in 0..n {
            // embed
            let mut e = vec![vec![0.0; d_model]; t_len];
            for t in 0..t_len {
                for c in 0..d_model {
                    for f in 0..f_in {
                        e[t][c] += panel.at3(stock, t, f) * p.in_proj.at2(f, c);
                    }
                }
            }
            // conv + silu
            let mut u = vec![vec![0.0; d_model]; t_len];
            for t in 0..t_len {
                for c in 0..d_model {
                    let mut acc = p.conv_bias.data()[c];
                    for j in 0..d_conv {
                        if t >= j {
                            acc += p.conv_kernel.at2(c, j) * e[t - j][c];
                        }
                    }
                    let sig = 1.0 / (1.0 + (-acc).exp());
                    u[t][c] = acc * sig;
                }
            }
            // per-step selection and scan
            let mut h = vec![vec![0.0; d_state]; d_model];
            for t in 0..t_len {
                let mut b_row = vec![0.0; d_state];
                let mut c_row = vec![0.0; d_state];
                for s in 0..d_state {
                    for c in 0..d_model {
                        b_row[s] += u[t][c] * p.w_input.at2(c, s);
                        c_row[s] += u[t][c] * p.w_output.at2(c, s);
                    }
                }
                for c in 0..d_model {
                    let mut pre = p.step_bias.data()[c];
                    for ch in 0..d_model {
                        pre += u[t][ch] * p.w_step.at2(ch, c);
                    }
                    let dt = pre.exp().ln_1p();
                    let mut o = 0.0;
                    for s in 0..d_state {
                        let z = dt * p.a_diag.at2(c, s);
                        let a_bar = z.exp();
                        let phi = if z.abs() < 1e-6 {
                            1.0 + z / 2.0 + z * z / 6.0
                        } else {
                            (z.exp() - 1.0) / z
                        };
                        h[c][s] = a_bar * h[c][s] + phi * dt * b_row[s] * u[t][c];
                        o += c_row[s] * h[c][s];
                    }
                    out.set3(stock, t, c, o + e[t][c]);
                }
            }
        }
        out
    }

    #[test]
    fn block_matches_naive_reimplementation() {
        let mut rng = SeededRng::new(47);
        let panel = DenseArray::from_vec(
            &[3, 7, 2],
            (0..3 * 7 * 2).map(|_| rng.normal()).collect(),
        )
        .unwrap();
        let params = tiny_block_params(2, 3, 2, 48);
        let fast = mamba_block(&panel, &params, true).unwrap();
        let slow = naive_block(&panel, &params);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
