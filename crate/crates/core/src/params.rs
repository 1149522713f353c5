//! Named parameter storage, the gradient contract and its
//! finite-difference oracle.
//!
//! Gradients come from the reverse-mode tape; the oracle re-evaluates the
//! same objective in plain `f64` with central differences and never touches
//! the tape, so the two routes stay independent.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{self, Ad};
use crate::tensor::{DenseArray, Tensor};
use std::collections::BTreeMap;

/// Parameter values keyed by id; BTreeMap keeps iteration lexicographic.
pub type ParamValues<S> = BTreeMap<String, Tensor<S>>;

/// Gradients keyed by parameter id.
pub type GradMap = BTreeMap<String, DenseArray>;

/// Registered, shape-frozen model parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    values: ParamValues<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, id: &str, tensor: DenseArray) -> Result<()> {
        if self.values.contains_key(id) {
            return Err(Error::invalid("register", format!("duplicate parameter id `{id}`")));
        }
        if !tensor.all_finite() {
            return Err(Error::NonFinite {
                context: format!("parameter `{id}` at registration"),
            });
        }
        self.values.insert(id.to_string(), tensor);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&DenseArray> {
        self.values
            .get(id)
            .ok_or_else(|| Error::invalid("param lookup", format!("unknown parameter id `{id}`")))
    }

    /// Replaces values of an existing parameter; the shape is immutable.
    pub fn set(&mut self, id: &str, tensor: DenseArray) -> Result<()> {
        let slot = self
            .values
            .get_mut(id)
            .ok_or_else(|| Error::invalid("param set", format!("unknown parameter id `{id}`")))?;
        if slot.shape() != tensor.shape() {
            return Err(Error::shape(
                "param set",
                format!("`{id}`: {:?} vs registered {:?}", tensor.shape(), slot.shape()),
            ));
        }
        *slot = tensor;
        Ok(())
    }

    pub fn values(&self) -> &ParamValues<f64> {
        &self.values
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_coords(&self) -> usize {
        self.values.values().map(|t| t.len()).sum()
    }
}

/// Fetches a tensor by id with a shape check; shared by model forward code.
pub fn fetch<'a, S: Scalar>(
    values: &'a ParamValues<S>,
    id: &str,
    shape: &[usize],
) -> Result<&'a Tensor<S>> {
    let t = values
        .get(id)
        .ok_or_else(|| Error::invalid("param fetch", format!("missing parameter `{id}`")))?;
    if t.shape() != shape {
        return Err(Error::shape(
            "param fetch",
            format!("`{id}`: expected {:?}, got {:?}", shape, t.shape()),
        ));
    }
    Ok(t)
}

/// A deterministic scalar objective over the parameter set, evaluable both
/// in plain floats and on the tape.
pub trait Objective {
    fn eval<S: Scalar>(&self, params: &ParamValues<S>) -> Result<S>;
}

/// Analytic gradients of the objective for every registered parameter,
/// via one reverse sweep. Returns the loss value alongside.
pub fn gradients(obj: &impl Objective, store: &ParamStore) -> Result<(f64, GradMap)> {
    tape::reset();
    let mut lifted: ParamValues<Ad> = BTreeMap::new();
    let mut leaves: Vec<Ad> = Vec::with_capacity(store.total_coords());
    for (id, tensor) in store.values() {
        let ad = tensor.map(tape::leaf);
        leaves.extend_from_slice(ad.data());
        lifted.insert(id.clone(), ad);
    }

    let loss = obj.eval::<Ad>(&lifted)?;
    if !loss.value().is_finite() {
        let offender = store
            .values()
            .iter()
            .find(|(_, t)| !t.all_finite())
            .map(|(id, _)| id.clone())
            .unwrap_or_else(|| "loss (all parameters finite)".to_string());
        return Err(Error::NonFinite {
            context: format!("objective value {}; suspect: {offender}", loss.value()),
        });
    }

    let flat = tape::gradient(loss, &leaves);
    let mut grads = GradMap::new();
    let mut offset = 0;
    for (id, tensor) in store.values() {
        let n = tensor.len();
        let g = DenseArray::from_vec(tensor.shape(), flat[offset..offset + n].to_vec())?;
        if !g.all_finite() {
            return Err(Error::NonFinite {
                context: format!("gradient of `{id}`"),
            });
        }
        grads.insert(id.clone(), g);
        offset += n;
    }
    Ok((loss.value(), grads))
}

/// Relative error threshold above which a coordinate is flagged.
pub const GRAD_FLAG_THRESHOLD: f64 = 1e-4;

/// One checked coordinate of a parameter.
#[derive(Clone, Copy, Debug)]
pub struct CoordCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Check results for one parameter.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub analytic: DenseArray,
    pub coords: Vec<CoordCheck>,
    pub max_rel_error: f64,
}

/// Analytic-vs-numeric gradient comparison over the whole store.
#[derive(Clone, Debug)]
pub struct GradReport {
    pub params: BTreeMap<String, ParamCheck>,
    pub max_rel_error: f64,
    /// (parameter id, coordinate, relative error) above the flag threshold.
    pub flagged: Vec<(String, usize, f64)>,
    pub loss: f64,
}

impl GradReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central-difference oracle for [`gradients`].
///
/// `coords_per_param = None` checks every coordinate; otherwise at least 25
/// coordinates per parameter (or all, if the parameter is smaller) are
/// drawn with the seeded stream.
pub fn finite_diff_check(
    obj: &impl Objective,
    store: &ParamStore,
    eps: f64,
    coords_per_param: Option<usize>,
    seed: u64,
) -> Result<GradReport> {
    if eps <= 0.0 {
        return Err(Error::invalid("finite_diff_check", format!("eps = {eps} must be > 0")));
    }
    let (loss, analytic) = gradients(obj, store)?;

    let mut scratch: ParamValues<f64> = store.values().clone();
    let mut params = BTreeMap::new();
    let mut flagged = Vec::new();
    let mut max_rel = 0.0_f64;

    for (id, tensor) in store.values() {
        let n = tensor.len();
        let picked: Vec<usize> = match coords_per_param {
            None => (0..n).collect(),
            Some(m) => {
                let m = m.max(25);
                let mut rng = crate::rng::SeededRng::for_name(seed, id);
                rng.sample_indices(n, m)
            }
        };
        let mut coords = Vec::with_capacity(picked.len());
        let mut param_max = 0.0_f64;
        for &ci in &picked {
            let base = tensor.data()[ci];
            let slot = scratch.get_mut(id).expect("scratch mirrors store");
            slot.data_mut()[ci] = base + eps;
            let up = obj.eval::<f64>(&scratch)?;
            let slot = scratch.get_mut(id).expect("scratch mirrors store");
            slot.data_mut()[ci] = base - eps;
            let down = obj.eval::<f64>(&scratch)?;
            let slot = scratch.get_mut(id).expect("scratch mirrors store");
            slot.data_mut()[ci] = base;

            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[id].data()[ci];
            let re = rel_error(a, numeric);
            if re >= GRAD_FLAG_THRESHOLD {
                flagged.push((id.clone(), ci, re));
            }
            param_max = param_max.max(re);
            coords.push(CoordCheck {
                index: ci,
                analytic: a,
                numeric,
                rel_error: re,
            });
        }
        max_rel = max_rel.max(param_max);
        params.insert(
            id.clone(),
            ParamCheck {
                analytic: analytic[id].clone(),
                coords,
                max_rel_error: param_max,
            },
        );
    }

    Ok(GradReport {
        params,
        max_rel_error: max_rel,
        flagged,
        loss,
    })
}
