//! Thread-local reverse-mode tape and its scalar type [`Ad`].
//!
//! The tape is an append-only arena of nodes, each holding up to two parent
//! indices with the local partial derivatives computed during the forward
//! pass. Constants carry a sentinel index and never touch the tape, so
//! arithmetic on input data costs nothing until a parameter is involved.
//!
//! One gradient evaluation per thread at a time: callers reset the tape,
//! build leaves, run the computation, then call [`gradient`]. `Ad` values
//! must not outlive the tape session that created them.

use crate::scalar::{sigmoid_f64, softplus_f64, Scalar};
use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

const CONST_IDX: u32 = u32::MAX;

struct TapeBuf {
    parents: Vec<[u32; 2]>,
    partials: Vec<[f64; 2]>,
    adjoint_scratch: Vec<f64>,
}

thread_local! {
    static TAPE: RefCell<TapeBuf> = RefCell::new(TapeBuf {
        parents: Vec::new(),
        partials: Vec::new(),
        adjoint_scratch: Vec::new(),
    });
}

/// Clears the tape for a fresh gradient evaluation. Keeps buffers allocated.
pub fn reset() {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        t.parents.clear();
        t.partials.clear();
    });
}

/// Number of nodes currently recorded. Diagnostic only.
pub fn node_count() -> usize {
    TAPE.with(|t| t.borrow().parents.len())
}

/// A value recorded on the thread-local tape (or a free constant).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ad {
    val: f64,
    idx: u32,
}

/// Creates a differentiable leaf on the tape.
pub fn leaf(value: f64) -> Ad {
    let idx = push(CONST_IDX, 0.0, CONST_IDX, 0.0);
    Ad { val: value, idx }
}

fn push(p0: u32, d0: f64, p1: u32, d1: f64) -> u32 {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        let idx = t.parents.len() as u32;
        t.parents.push([p0, p1]);
        t.partials.push([d0, d1]);
        idx
    })
}

impl Ad {
    pub fn constant(value: f64) -> Ad {
        Ad {
            val: value,
            idx: CONST_IDX,
        }
    }

    pub fn is_constant(self) -> bool {
        self.idx == CONST_IDX
    }

    fn unary(self, val: f64, partial: f64) -> Ad {
        if self.idx == CONST_IDX {
            return Ad::constant(val);
        }
        let idx = push(self.idx, partial, CONST_IDX, 0.0);
        Ad { val, idx }
    }

    fn binary(self, rhs: Ad, val: f64, d_lhs: f64, d_rhs: f64) -> Ad {
        if self.idx == CONST_IDX && rhs.idx == CONST_IDX {
            return Ad::constant(val);
        }
        let idx = push(self.idx, d_lhs, rhs.idx, d_rhs);
        Ad { val, idx }
    }
}

impl Add for Ad {
    type Output = Ad;
    #[inline]
    fn add(self, rhs: Ad) -> Ad {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl Sub for Ad {
    type Output = Ad;
    #[inline]
    fn sub(self, rhs: Ad) -> Ad {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl Mul for Ad {
    type Output = Ad;
    #[inline]
    fn mul(self, rhs: Ad) -> Ad {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Ad {
    type Output = Ad;
    #[inline]
    fn div(self, rhs: Ad) -> Ad {
        let inv = 1.0 / rhs.val;
        self.binary(rhs, self.val * inv, inv, -self.val * inv * inv)
    }
}

impl Neg for Ad {
    type Output = Ad;
    #[inline]
    fn neg(self) -> Ad {
        self.unary(-self.val, -1.0)
    }
}

impl Scalar for Ad {
    #[inline]
    fn lift(x: f64) -> Self {
        Ad::constant(x)
    }

    #[inline]
    fn value(self) -> f64 {
        self.val
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }

    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.val);
        self.unary(s, s * (1.0 - s))
    }

    fn softplus(self) -> Self {
        self.unary(softplus_f64(self.val), sigmoid_f64(self.val))
    }
}

/// Backward sweep from `output`, returning the adjoint of each requested value.
/// Constants get adjoint 0.
pub fn gradient(output: Ad, wrt: &[Ad]) -> Vec<f64> {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        let n = t.parents.len();
        let seed = output.idx;

        let mut adjoints = std::mem::take(&mut t.adjoint_scratch);
        adjoints.clear();
        adjoints.resize(n, 0.0);
        if seed != CONST_IDX {
            adjoints[seed as usize] = 1.0;
            for i in (0..=seed as usize).rev() {
                let g = adjoints[i];
                if g == 0.0 {
                    continue;
                }
                let [p0, p1] = t.parents[i];
                let [d0, d1] = t.partials[i];
                if p0 != CONST_IDX {
                    adjoints[p0 as usize] += g * d0;
                }
                if p1 != CONST_IDX {
                    adjoints[p1 as usize] += g * d1;
                }
            }
        }

        let out = wrt
            .iter()
            .map(|a| {
                if a.idx == CONST_IDX {
                    0.0
                } else {
                    adjoints[a.idx as usize]
                }
            })
            .collect();
        t.adjoint_scratch = adjoints;
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        reset();
        let x = leaf(3.0);
        let y = x * x;
        assert_eq!(y.value(), 9.0);
        let g = gradient(y, &[x]);
        assert_eq!(g[0], 6.0);
    }

    #[test]
    fn chain_through_exp_and_div() {
        reset();
        let x = leaf(0.5);
        let y = Scalar::exp(x) / (x + Ad::constant(1.0));
        let g = gradient(y, &[x]);
        // d/dx e^x/(x+1) = e^x (x+1-1)/(x+1)^2 = e^x * x / (x+1)^2
        let expected = 0.5_f64.exp() * 0.5 / 1.5_f64.powi(2);
        assert!((g[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn constants_do_not_grow_tape() {
        reset();
        let before = node_count();
        let a = Ad::constant(2.0);
        let b = Ad::constant(3.0);
        let c = a * b + Scalar::exp(a);
        assert_eq!(c.value(), 6.0 + 2.0_f64.exp());
        assert_eq!(node_count(), before);
    }

    #[test]
    fn fan_out_accumulates() {
        reset();
        let x = leaf(2.0);
        let y = x * x + x * Ad::constant(3.0); // x^2 + 3x, dy/dx = 2x + 3 = 7
        let g = gradient(y, &[x]);
        assert_eq!(g[0], 7.0);
    }

    #[test]
    fn gradient_of_unrelated_leaf_is_zero() {
        reset();
        let x = leaf(1.0);
        let z = leaf(5.0);
        let y = x * x;
        let g = gradient(y, &[x, z]);
        assert_eq!(g, vec![2.0, 0.0]);
    }
}
