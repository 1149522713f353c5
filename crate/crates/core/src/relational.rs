//! Inter-stock structure: per-time-step sparse attention graphs and the
//! dense global graph built from specificity, neighborhood aggregation, and
//! the market-level macro vectors pooled from commonality.

use crate::error::{Error, Result};
use crate::numerics::{apply_row_mask, row_softmax, topk_row_select, MASK_SENTINEL};
use crate::params::{fetch, ParamValues};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Neighbors retained per row: ceil(0.3 * (N - 1)), computed in integer
/// arithmetic so float rounding can never change the count.
pub fn neighbor_count(n_stocks: usize) -> usize {
    (3 * (n_stocks - 1) + 9) / 10
}

/// Attention weights for the per-time-step graphs.
#[derive(Clone, Debug)]
pub struct TsGraphParams<S> {
    pub w_query: Tensor<S>,
    pub w_key: Tensor<S>,
}

impl<S: Scalar> TsGraphParams<S> {
    pub fn from_values(values: &ParamValues<S>, f: usize, d_attn: usize) -> Result<Self> {
        Ok(TsGraphParams {
            w_query: fetch(values, "ts_graph.w_query", &[f, d_attn])?.clone(),
            w_key: fetch(values, "ts_graph.w_key", &[f, d_attn])?.clone(),
        })
    }
}

/// Time-aggregation plus attention weights for the global graph.
#[derive(Clone, Debug)]
pub struct GlobalGraphParams<S> {
    pub w_time_agg: Tensor<S>,
    pub w_query: Tensor<S>,
    pub w_key: Tensor<S>,
}

impl<S: Scalar> GlobalGraphParams<S> {
    pub fn from_values(
        values: &ParamValues<S>,
        t_len: usize,
        f: usize,
        d_attn: usize,
    ) -> Result<Self> {
        Ok(GlobalGraphParams {
            w_time_agg: fetch(values, "global_graph.w_time_agg", &[t_len])?.clone(),
            w_query: fetch(values, "global_graph.w_query", &[f, d_attn])?.clone(),
            w_key: fetch(values, "global_graph.w_key", &[f, d_attn])?.clone(),
        })
    }
}

/// Stock-aggregation and feature-blend weights for per-step macro vectors.
#[derive(Clone, Debug)]
pub struct MacroTsParams<S> {
    pub w_stock_agg: Tensor<S>,
    pub w_blend: Tensor<S>,
    pub b_blend: Tensor<S>,
}

impl<S: Scalar> MacroTsParams<S> {
    pub fn from_values(values: &ParamValues<S>, n: usize, f: usize, d_te: usize) -> Result<Self> {
        Ok(MacroTsParams {
            w_stock_agg: fetch(values, "macro_ts.w_stock_agg", &[n])?.clone(),
            w_blend: fetch(values, "macro_ts.w_blend", &[f, d_te])?.clone(),
            b_blend: fetch(values, "macro_ts.b_blend", &[d_te])?.clone(),
        })
    }
}

/// Time-pooling and feature-blend weights for the global macro vector.
#[derive(Clone, Debug)]
pub struct MacroGlobalParams<S> {
    pub w_time_agg: Tensor<S>,
    pub w_blend: Tensor<S>,
    pub b_blend: Tensor<S>,
}

impl<S: Scalar> MacroGlobalParams<S> {
    pub fn from_values(
        values: &ParamValues<S>,
        t_len: usize,
        d_te: usize,
        d_ge: usize,
    ) -> Result<Self> {
        Ok(MacroGlobalParams {
            w_time_agg: fetch(values, "macro_g.w_time_agg", &[t_len])?.clone(),
            w_blend: fetch(values, "macro_g.w_blend", &[d_te, d_ge])?.clone(),
            b_blend: fetch(values, "macro_g.b_blend", &[d_ge])?.clone(),
        })
    }
}

/// One forward pass's per-step graphs plus the top-k selection actually
/// taken (reusable to freeze the selection during gradient checks).
#[derive(Clone, Debug)]
pub struct TsGraphs<S> {
    /// [T, N, N] row-stochastic-plus-identity adjacency per step.
    pub adjacency: Tensor<S>,
    /// Row-major [N*N] keep flags per step.
    pub keep: Vec<Vec<bool>>,
}

fn attention_logits<S: Scalar>(
    section: &Tensor<S>,
    w_query: &Tensor<S>,
    w_key: &Tensor<S>,
) -> Result<Tensor<S>> {
    let n = section.shape()[0];
    let d_attn = w_query.shape()[1];
    let queries = section.matmul(w_query)?;
    let keys = section.matmul(w_key)?;
    let scale = S::lift(1.0 / (d_attn as f64).sqrt());
    let mut logits = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                logits.set2(i, j, S::lift(MASK_SENTINEL));
                continue;
            }
            let mut acc = S::zero();
            for d in 0..d_attn {
                acc = acc + queries.at2(i, d) * keys.at2(j, d);
            }
            logits.set2(i, j, acc * scale);
        }
    }
    Ok(logits)
}

fn add_identity<S: Scalar>(mut adj: Tensor<S>) -> Tensor<S> {
    let n = adj.shape()[0];
    for i in 0..n {
        let v = adj.at2(i, i) + S::one();
        adj.set2(i, i, v);
    }
    adj
}

/// Sparse per-time-step graphs from specificity: attention logits, top-k
/// retention (30% of neighbors), row softmax, then identity added so the
/// diagonal is exactly one. `frozen` replays a previously taken selection.
pub fn temporal_section_graphs<S: Scalar>(
    specificity: &Tensor<S>,
    params: &TsGraphParams<S>,
    frozen: Option<&[Vec<bool>]>,
) -> Result<TsGraphs<S>> {
    if specificity.shape().len() != 3 {
        return Err(Error::shape(
            "temporal_section_graphs",
            format!("{:?}", specificity.shape()),
        ));
    }
    let (n, t_len, f) = (
        specificity.shape()[0],
        specificity.shape()[1],
        specificity.shape()[2],
    );
    if n < 2 {
        return Err(Error::invalid(
            "temporal_section_graphs",
            format!("need at least 2 stocks, got {n}"),
        ));
    }
    if let Some(fr) = frozen {
        if fr.len() != t_len {
            return Err(Error::shape(
                "temporal_section_graphs",
                format!("frozen selection covers {} steps, expected {t_len}", fr.len()),
            ));
        }
    }
    let k = neighbor_count(n);

    let mut adjacency = Tensor::zeros(&[t_len, n, n]);
    let mut keep_all = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut section = Tensor::zeros(&[n, f]);
        for stock in 0..n {
            for feat in 0..f {
                section.set2(stock, feat, specificity.at3(stock, t, feat));
            }
        }
        let logits = attention_logits(&section, &params.w_query, &params.w_key)?;
        let keep = match frozen {
            Some(fr) => fr[t].clone(),
            None => topk_row_select(&logits, k)?,
        };
        let masked = apply_row_mask(&logits, &keep)?;
        let normalized = add_identity(row_softmax(&masked)?);
        for i in 0..n {
            for j in 0..n {
                adjacency.set3(t, i, j, normalized.at2(i, j));
            }
        }
        keep_all.push(keep);
    }
    Ok(TsGraphs {
        adjacency,
        keep: keep_all,
    })
}

/// Dense global graph from time-aggregated specificity; no top-k, identity
/// added.
pub fn global_graph<S: Scalar>(
    specificity: &Tensor<S>,
    params: &GlobalGraphParams<S>,
) -> Result<Tensor<S>> {
    if specificity.shape().len() != 3 {
        return Err(Error::shape("global_graph", format!("{:?}", specificity.shape())));
    }
    let (n, t_len, f) = (
        specificity.shape()[0],
        specificity.shape()[1],
        specificity.shape()[2],
    );
    if n < 2 {
        return Err(Error::invalid(
            "global_graph",
            format!("need at least 2 stocks, got {n}"),
        ));
    }
    if params.w_time_agg.shape() != [t_len] {
        return Err(Error::shape(
            "global_graph",
            format!("w_time_agg {:?} vs T {t_len}", params.w_time_agg.shape()),
        ));
    }

    let mut pooled = Tensor::zeros(&[n, f]);
    for stock in 0..n {
        for feat in 0..f {
            let mut acc = S::zero();
            for t in 0..t_len {
                acc = acc + params.w_time_agg.data()[t] * specificity.at3(stock, t, feat);
            }
            pooled.set2(stock, feat, acc);
        }
    }
    let logits = attention_logits(&pooled, &params.w_query, &params.w_key)?;
    Ok(add_identity(row_softmax(&logits)?))
}

/// Applies adjacency to features per time step:
/// out[:, t, :] = adjacency(t) . features[:, t, :].
/// A 2-D adjacency is broadcast over time (the global graph); a 3-D stack
/// supplies one matrix per step. Exact zero coefficients are skipped, which
/// leaves results and gradients untouched because masked softmax entries
/// are constants.
pub fn neighbor_aggregate<S: Scalar>(
    adjacency: &Tensor<S>,
    features: &Tensor<S>,
) -> Result<Tensor<S>> {
    if features.shape().len() != 3 {
        return Err(Error::shape(
            "neighbor_aggregate",
            format!("features {:?}", features.shape()),
        ));
    }
    let (n, t_len, d) = (features.shape()[0], features.shape()[1], features.shape()[2]);
    let stacked = match adjacency.shape().len() {
        2 => {
            if adjacency.shape() != [n, n] {
                return Err(Error::shape(
                    "neighbor_aggregate",
                    format!("adjacency {:?} vs N {n}", adjacency.shape()),
                ));
            }
            false
        }
        3 => {
            if adjacency.shape() != [t_len, n, n] {
                return Err(Error::shape(
                    "neighbor_aggregate",
                    format!("adjacency {:?} vs [T={t_len}, N={n}]", adjacency.shape()),
                ));
            }
            true
        }
        _ => {
            return Err(Error::shape(
                "neighbor_aggregate",
                format!("adjacency {:?}", adjacency.shape()),
            ))
        }
    };

    let mut out = Tensor::zeros(&[n, t_len, d]);
    for t in 0..t_len {
        for i in 0..n {
            for j in 0..n {
                let w = if stacked {
                    adjacency.at3(t, i, j)
                } else {
                    adjacency.at2(i, j)
                };
                if w.value() == 0.0 {
                    continue;
                }
                for feat in 0..d {
                    let v = out.at3(i, t, feat) + w * features.at3(j, t, feat);
                    out.set3(i, t, feat, v);
                }
            }
        }
    }
    Ok(out)
}

/// Per-step macro vector: stocks of the commonality panel are blended by a
/// learned aggregation vector, then features are mapped to d_te.
pub fn timestep_macro<S: Scalar>(
    commonality: &Tensor<S>,
    params: &MacroTsParams<S>,
) -> Result<Tensor<S>> {
    if commonality.shape().len() != 3 {
        return Err(Error::shape(
            "timestep_macro",
            format!("{:?}", commonality.shape()),
        ));
    }
    let (n, t_len, f) = (
        commonality.shape()[0],
        commonality.shape()[1],
        commonality.shape()[2],
    );
    if params.w_stock_agg.shape() != [n] {
        return Err(Error::shape(
            "timestep_macro",
            format!("w_stock_agg {:?} vs N {n}", params.w_stock_agg.shape()),
        ));
    }
    let d_te = params.w_blend.shape()[1];

    let mut out = Tensor::zeros(&[t_len, d_te]);
    let mut agg = vec![S::zero(); f];
    for t in 0..t_len {
        for (feat, slot) in agg.iter_mut().enumerate() {
            let mut acc = S::zero();
            for stock in 0..n {
                acc = acc + params.w_stock_agg.data()[stock] * commonality.at3(stock, t, feat);
            }
            *slot = acc;
        }
        for d in 0..d_te {
            let mut acc = params.b_blend.data()[d];
            for (feat, &a) in agg.iter().enumerate() {
                acc = acc + a * params.w_blend.at2(feat, d);
            }
            out.set2(t, d, acc);
        }
    }
    Ok(out)
}

/// Window-level macro vector pooled over the per-step macro series.
pub fn global_macro<S: Scalar>(
    macro_series: &Tensor<S>,
    params: &MacroGlobalParams<S>,
) -> Result<Vec<S>> {
    if macro_series.shape().len() != 2 {
        return Err(Error::shape(
            "global_macro",
            format!("{:?}", macro_series.shape()),
        ));
    }
    let (t_len, d_te) = (macro_series.shape()[0], macro_series.shape()[1]);
    if params.w_time_agg.shape() != [t_len] || params.w_blend.shape()[0] != d_te {
        return Err(Error::shape(
            "global_macro",
            format!(
                "w_time_agg {:?}, w_blend {:?} vs series {:?}",
                params.w_time_agg.shape(),
                params.w_blend.shape(),
                macro_series.shape()
            ),
        ));
    }
    let d_ge = params.w_blend.shape()[1];

    let mut pooled = vec![S::zero(); d_te];
    for (d, slot) in pooled.iter_mut().enumerate() {
        let mut acc = S::zero();
        for t in 0..t_len {
            acc = acc + params.w_time_agg.data()[t] * macro_series.at2(t, d);
        }
        *slot = acc;
    }
    let mut out = Vec::with_capacity(d_ge);
    for g in 0..d_ge {
        let mut acc = params.b_blend.data()[g];
        for (d, &p) in pooled.iter().enumerate() {
            acc = acc + p * params.w_blend.at2(d, g);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Validates the per-step graph invariants: exact unit diagonal,
/// non-negative off-diagonal rows summing to one, and exactly
/// `neighbor_count(N)` nonzeros per row.
pub fn check_graph_stack<S: Scalar>(adjacency: &Tensor<S>) -> Result<()> {
    if adjacency.shape().len() != 3 || adjacency.shape()[1] != adjacency.shape()[2] {
        return Err(Error::shape(
            "check_graph_stack",
            format!("{:?}", adjacency.shape()),
        ));
    }
    let (t_len, n) = (adjacency.shape()[0], adjacency.shape()[1]);
    let k = neighbor_count(n);
    for t in 0..t_len {
        for i in 0..n {
            let diag = adjacency.at3(t, i, i).value();
            if diag != 1.0 {
                return Err(Error::invalid(
                    "check_graph_stack",
                    format!("diagonal [{t},{i}] = {diag}, expected exactly 1"),
                ));
            }
            let mut sum = 0.0;
            let mut nonzero = 0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let v = adjacency.at3(t, i, j).value();
                if v < 0.0 {
                    return Err(Error::invalid(
                        "check_graph_stack",
                        format!("negative weight [{t},{i},{j}] = {v}"),
                    ));
                }
                if v != 0.0 {
                    nonzero += 1;
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-8 {
                return Err(Error::invalid(
                    "check_graph_stack",
                    format!("row [{t},{i}] off-diagonal sum {sum}"),
                ));
            }
            if nonzero != k {
                return Err(Error::invalid(
                    "check_graph_stack",
                    format!("row [{t},{i}] has {nonzero} neighbors, expected {k}"),
                ));
            }
        }
    }
    Ok(())
}

/// Validates the global graph: exact unit diagonal and dense strictly
/// positive off-diagonal rows summing to one.
pub fn check_global_graph<S: Scalar>(adjacency: &Tensor<S>) -> Result<()> {
    if adjacency.shape().len() != 2 || adjacency.shape()[0] != adjacency.shape()[1] {
        return Err(Error::shape(
            "check_global_graph",
            format!("{:?}", adjacency.shape()),
        ));
    }
    let n = adjacency.shape()[0];
    for i in 0..n {
        let diag = adjacency.at2(i, i).value();
        if diag != 1.0 {
            return Err(Error::invalid(
                "check_global_graph",
                format!("diagonal [{i}] = {diag}, expected exactly 1"),
            ));
        }
        let mut sum = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let v = adjacency.at2(i, j).value();
            if v <= 0.0 {
                return Err(Error::invalid(
                    "check_global_graph",
                    format!("off-diagonal [{i},{j}] = {v}, expected strictly positive"),
                ));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(
                "check_global_graph",
                format!("row [{i}] off-diagonal sum {sum}"),
            ));
        }
    }
    Ok(())
}
