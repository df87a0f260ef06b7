//! Scalar reverse-mode tape.
//!
//! Records a Wengert list of elementary operations and replays it backwards
//! to produce the gradient of a scalar output with respect to every input in
//! one sweep. Used for gradients of arbitrary scalar closures over the
//! parameter vector; the training loop itself uses the structured network
//! backward pass, which is cross-checked against this tape in tests.

use crate::autodiff::ParamGradient;
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
    n_parents: u8,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct TapeVar(u32);

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: f64, parents: [u32; 2], partials: [f64; 2], n: u8) -> TapeVar {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { parents, partials, n_parents: n });
        self.values.push(value);
        TapeVar(id)
    }

    /// A leaf variable (input or constant).
    pub fn leaf(&mut self, value: f64) -> TapeVar {
        self.push(value, [0, 0], [0.0, 0.0], 0)
    }

    pub fn value(&self, v: TapeVar) -> f64 {
        self.values[v.0 as usize]
    }

    pub fn add(&mut self, a: TapeVar, b: TapeVar) -> TapeVar {
        self.push(self.value(a) + self.value(b), [a.0, b.0], [1.0, 1.0], 2)
    }

    pub fn sub(&mut self, a: TapeVar, b: TapeVar) -> TapeVar {
        self.push(self.value(a) - self.value(b), [a.0, b.0], [1.0, -1.0], 2)
    }

    pub fn mul(&mut self, a: TapeVar, b: TapeVar) -> TapeVar {
        let (va, vb) = (self.value(a), self.value(b));
        self.push(va * vb, [a.0, b.0], [vb, va], 2)
    }

    pub fn div(&mut self, a: TapeVar, b: TapeVar) -> TapeVar {
        let (va, vb) = (self.value(a), self.value(b));
        self.push(va / vb, [a.0, b.0], [1.0 / vb, -va / (vb * vb)], 2)
    }

    pub fn scale(&mut self, a: TapeVar, k: f64) -> TapeVar {
        self.push(self.value(a) * k, [a.0, 0], [k, 0.0], 1)
    }

    pub fn shift(&mut self, a: TapeVar, k: f64) -> TapeVar {
        self.push(self.value(a) + k, [a.0, 0], [1.0, 0.0], 1)
    }

    pub fn square(&mut self, a: TapeVar) -> TapeVar {
        let v = self.value(a);
        self.push(v * v, [a.0, 0], [2.0 * v, 0.0], 1)
    }

    pub fn tanh(&mut self, a: TapeVar) -> TapeVar {
        let t = self.value(a).tanh();
        self.push(t, [a.0, 0], [1.0 - t * t, 0.0], 1)
    }

    pub fn sin(&mut self, a: TapeVar) -> TapeVar {
        let (s, c) = self.value(a).sin_cos();
        self.push(s, [a.0, 0], [c, 0.0], 1)
    }

    pub fn cos(&mut self, a: TapeVar) -> TapeVar {
        let (s, c) = self.value(a).sin_cos();
        self.push(c, [a.0, 0], [-s, 0.0], 1)
    }

    pub fn exp(&mut self, a: TapeVar) -> TapeVar {
        let e = self.value(a).exp();
        self.push(e, [a.0, 0], [e, 0.0], 1)
    }

    /// Reverse sweep: adjoint of `output` with respect to every node.
    pub fn adjoints(&self, output: TapeVar) -> Vec<f64> {
        let mut adj = vec![0.0; self.nodes.len()];
        adj[output.0 as usize] = 1.0;
        for i in (0..self.nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = &self.nodes[i];
            for p in 0..node.n_parents as usize {
                adj[node.parents[p] as usize] += a * node.partials[p];
            }
        }
        adj
    }
}

/// Value and exact gradient of a scalar loss expressed over the parameter
/// vector. The closure receives one tape variable per parameter, in order.
pub fn loss_param_gradient<F>(params: &[f64], f: F) -> Result<(f64, ParamGradient)>
where
    F: FnOnce(&mut Tape, &[TapeVar]) -> TapeVar,
{
    let mut tape = Tape::new();
    let vars: Vec<TapeVar> = params.iter().map(|&p| tape.leaf(p)).collect();
    let out = f(&mut tape, &vars);
    let loss = tape.value(out);
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss value on tape".into()));
    }
    let adj = tape.adjoints(out);
    Ok((loss, vars.iter().map(|v| adj[v.0 as usize]).collect()))
}
