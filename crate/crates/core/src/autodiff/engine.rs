//! Augmented network evaluation: one forward sweep propagates the value plus
//! first- and second-derivative channels with respect to the (normalized)
//! inputs; one backward sweep turns adjoints of those channels into exact
//! gradients with respect to every weight and bias.
//!
//! Channel layout, stride = layer width, channel-major:
//!
//! * channel `0` — value
//! * channels `1..=n_in` — `d/dx_i` in input-coordinate order (time last)
//! * channels `1+n_in..` — `d2/dx_s2` for the spatial coordinates, i.e. the
//!   first `n_in - 1` inputs; the equations never need `d2/dt2` or mixed
//!   second partials.
//!
//! Derivatives are exact for the network's composition of affine maps and
//! tanh: affine layers map every channel linearly, and tanh couples them per
//! neuron via `h_i = g z_i`, `h_ii = g z_ii - 2 h g z_i^2` with `g = 1 - h^2`.

use crate::error::{Error, Result};
use crate::network::{LayerSlot, ModelParams, NetworkSpec};

/// Which derivative channels an evaluation carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivRequest {
    ValueOnly,
    FirstOrder,
    FirstAndSecond,
}

impl DerivRequest {
    pub fn channels(self, n_in: usize) -> usize {
        match self {
            DerivRequest::ValueOnly => 1,
            DerivRequest::FirstOrder => 1 + n_in,
            DerivRequest::FirstAndSecond => n_in + n_in, // 1 + n_in + (n_in - 1)
        }
    }
}

/// Value and input derivatives of one field output; unused slots stay zero.
/// Also the carrier for channel adjoints on the way back.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    /// `d/dx_i` per input coordinate, time last.
    pub first: [f64; 4],
    /// `d2/dx_s2` per spatial coordinate.
    pub second: [f64; 3],
}

/// Per-thread buffers for [`eval_with_input_derivs`] and [`backprop`]. The
/// forward pass retains pre- and post-activations so the backward pass can
/// run without re-evaluation.
pub struct EvalWorkspace {
    n_in: usize,

    c: usize,
    x: Vec<f64>,
    shared_z: Vec<f64>,
    shared_h: Vec<f64>,
    sub_z: Vec<Vec<Vec<f64>>>,
    sub_h: Vec<Vec<Vec<f64>>>,
    jets: Vec<FieldJet>,
    shared_h_bar: Vec<f64>,
    adj_a: Vec<f64>,
    adj_b: Vec<f64>,
}

impl EvalWorkspace {
    pub fn new(spec: &NetworkSpec) -> Self {
        let n_in = spec.input_dim;

        let c_max = DerivRequest::FirstAndSecond.channels(n_in);
        let mut max_width = spec.shared_width;
        let sub_z = spec
            .subnets
            .iter()
            .map(|sub| {
                (2..=sub.depth)
                    .map(|k| {
                        let rows = if k == sub.depth { 1 } else { sub.width };
                        max_width = max_width.max(rows);
                        vec![0.0; rows * c_max]
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        let sub_h = sub_z
            .iter()
            .map(|layers| layers[..layers.len() - 1].to_vec())
            .collect();
        EvalWorkspace {
            n_in,

            c: c_max,
            x: vec![0.0; n_in * c_max],
            shared_z: vec![0.0; spec.shared_width * c_max],
            shared_h: vec![0.0; spec.shared_width * c_max],
            sub_z,
            sub_h,
            jets: vec![FieldJet::default(); spec.subnets.len()],
            shared_h_bar: vec![0.0; spec.shared_width * c_max],
            adj_a: vec![0.0; max_width * c_max],
            adj_b: vec![0.0; max_width * c_max],
        }
    }

    pub fn jets(&self) -> &[FieldJet] {
        &self.jets
    }

    /// Value-channel activations feeding each subnet's output layer, from
    /// the most recent evaluation; for range checks in tests.
    pub fn last_hidden_values(&self, params: &ModelParams) -> Vec<f64> {
        let mut out = Vec::new();
        for (j, layers) in params.layout.subnet_layers.iter().enumerate() {
            let buf: &[f64] = if layers.len() == 1 {
                &self.shared_h
            } else {
                &self.sub_h[j][layers.len() - 2]
            };
            let width = layers.last().unwrap().cols;
            out.extend_from_slice(&buf[..width]);
        }
        out
    }
}

/// Dot product with four independent accumulator chains; a naive sequential
/// reduction cannot be reassociated by the compiler and runs at FP-add
/// latency instead of throughput.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..chunks {
        let i = 4 * k;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    ((s0 + s1) + (s2 + s3)) + tail
}

fn affine_fwd(
    slot: &LayerSlot,
    values: &[f64],
    input: &[f64],
    out: &mut [f64],
    channels: usize,
) {
    let w = slot.weights(values);
    let b = slot.biases(values);
    let (rows, cols) = (slot.rows, slot.cols);
    for ch in 0..channels {
        let xin = &input[ch * cols..(ch + 1) * cols];
        let zout = &mut out[ch * rows..(ch + 1) * rows];
        for r in 0..rows {
            let row = &w[r * cols..(r + 1) * cols];
            let base = if ch == 0 { b[r] } else { 0.0 };
            zout[r] = base + dot(row, xin);
        }
    }
}

fn tanh_fwd(z: &[f64], h: &mut [f64], width: usize, channels: usize, n_in: usize) {
    for o in 0..width {
        let hv = z[o].tanh();
        let g = 1.0 - hv * hv;
        h[o] = hv;
        let n_first = (channels - 1).min(n_in);
        for c in 1..=n_first {
            h[c * width + o] = g * z[c * width + o];
        }
        for c2 in (1 + n_in)..channels {
            let z1 = z[(c2 - n_in) * width + o];
            h[c2 * width + o] = g * z[c2 * width + o] - 2.0 * hv * g * z1 * z1;
        }
    }
}

/// Evaluate value and requested input derivatives of every field at one
/// normalized point, retaining intermediates in `ws` for [`backprop`].
pub fn eval_with_input_derivs(
    params: &ModelParams,
    x_norm: &[f64],
    req: DerivRequest,
    ws: &mut EvalWorkspace,
) -> Result<()> {
    let spec = &params.spec;
    let n_in = spec.input_dim;
    debug_assert_eq!(x_norm.len(), n_in);
    debug_assert_eq!(ws.n_in, n_in);
    if x_norm.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("network input {x_norm:?}")));
    }
    let channels = req.channels(n_in);
    ws.c = channels;

    // Seed input channels: value, then one-hot first derivatives.
    ws.x[..n_in * channels].fill(0.0);
    ws.x[..n_in].copy_from_slice(x_norm);
    if channels > 1 {
        for i in 0..n_in {
            ws.x[(1 + i) * n_in + i] = 1.0;
        }
    }

    affine_fwd(&params.layout.shared, &params.values, &ws.x, &mut ws.shared_z, channels);
    tanh_fwd(&ws.shared_z, &mut ws.shared_h, spec.shared_width, channels, n_in);

    for (j, layers) in params.layout.subnet_layers.iter().enumerate() {
        let last = layers.len() - 1;
        for (l, slot) in layers.iter().enumerate() {
            // Split borrows: output buffer vs input buffer of the previous layer.
            let (before, rest) = ws.sub_z[j].split_at_mut(l);
            let z_out = &mut rest[0];
            let input: &[f64] = if l == 0 { &ws.shared_h } else { &ws.sub_h[j][l - 1] };
            let _ = before;
            affine_fwd(slot, &params.values, input, z_out, channels);
            if l != last {
                tanh_fwd(
                    &ws.sub_z[j][l],
                    &mut ws.sub_h[j][l],
                    slot.rows,
                    channels,
                    n_in,
                );
            }
        }
        // Output layer has a single row: its channel buffer is the jet.
        let zs = &ws.sub_z[j][last];
        let mut jet = FieldJet::default();
        jet.value = zs[0];
        if channels > 1 {
            for i in 0..n_in {
                jet.first[i] = zs[1 + i];
            }
            for s in 0..channels.saturating_sub(1 + n_in) {
                jet.second[s] = zs[1 + n_in + s];
            }
        }
        if !jet.value.is_finite() {
            return Err(Error::NonFinite(format!(
                "field {} at normalized point {x_norm:?}",
                spec.subnets[j].var
            )));
        }
        ws.jets[j] = jet;
    }
    Ok(())
}

fn tanh_bwd(
    z: &[f64],
    h: &[f64],
    h_bar: &[f64],
    z_bar: &mut [f64],
    width: usize,
    channels: usize,
    n_in: usize,
) {
    for o in 0..width {
        let hv = h[o];
        let g = 1.0 - hv * hv;
        let mut acc = g * h_bar[o];
        let n_first = (channels - 1).min(n_in);
        for c in 1..=n_first {
            let hb = h_bar[c * width + o];
            acc += -2.0 * hv * g * z[c * width + o] * hb;
            z_bar[c * width + o] = g * hb;
        }
        for c2 in (1 + n_in)..channels {
            let c1 = c2 - n_in;
            let z1 = z[c1 * width + o];
            let hb2 = h_bar[c2 * width + o];
            acc += (-2.0 * hv * g * z[c2 * width + o] - 2.0 * (g * g - 2.0 * hv * hv * g) * z1 * z1)
                * hb2;
            z_bar[c1 * width + o] += -4.0 * hv * g * z1 * hb2;
            z_bar[c2 * width + o] = g * hb2;
        }
        z_bar[o] = acc;
    }
}

/// Accumulate weight/bias gradients and propagate the input adjoint.
fn affine_bwd(
    slot: &LayerSlot,
    values: &[f64],
    input: &[f64],
    out_adj: &[f64],
    channels: usize,
    grad: &mut [f64],
    mut in_adj: Option<&mut [f64]>,
) {
    let (rows, cols) = (slot.rows, slot.cols);
    if let Some(ia) = in_adj.as_deref_mut() {
        ia[..cols * channels].fill(0.0);
    }
    let w = slot.weights(values);
    for ch in 0..channels {
        let xin = &input[ch * cols..(ch + 1) * cols];
        let oadj = &out_adj[ch * rows..(ch + 1) * rows];
        for r in 0..rows {
            let a = oadj[r];
            if a != 0.0 {
                let wrow = &mut grad[slot.w_off + r * cols..slot.w_off + (r + 1) * cols];
                for (gi, xi) in wrow.iter_mut().zip(xin.iter()) {
                    *gi += a * xi;
                }
            }
            if ch == 0 {
                grad[slot.b_off + r] += a;
            }
            if let Some(ia) = in_adj.as_deref_mut() {
                if a != 0.0 {
                    let row = &w[r * cols..(r + 1) * cols];
                    let dst = &mut ia[ch * cols..(ch + 1) * cols];
                    for (di, wi) in dst.iter_mut().zip(row.iter()) {
                        *di += a * wi;
                    }
                }
            }
        }
    }
}

/// Backward pass matching the most recent [`eval_with_input_derivs`] on `ws`:
/// `out_adjoints[j]` carries the loss adjoint of field `j`'s jet channels;
/// weight and bias gradients are accumulated into `grad` (canonical layout).
pub fn backprop(
    params: &ModelParams,
    ws: &mut EvalWorkspace,
    out_adjoints: &[FieldJet],
    grad: &mut [f64],
) {
    let spec = &params.spec;
    let n_in = ws.n_in;
    let channels = ws.c;
    ws.shared_h_bar[..spec.shared_width * channels].fill(0.0);

    for (j, layers) in params.layout.subnet_layers.iter().enumerate() {
        let adj = &out_adjoints[j];
        let last = layers.len() - 1;
        // Seed the output-layer adjoint (single row per channel).
        ws.adj_a[..channels].fill(0.0);
        ws.adj_a[0] = adj.value;
        if channels > 1 {
            for i in 0..n_in {
                ws.adj_a[1 + i] = adj.first[i];
            }
            for s in 0..channels.saturating_sub(1 + n_in) {
                ws.adj_a[1 + n_in + s] = adj.second[s];
            }
        }
        for l in (0..=last).rev() {
            let slot = &layers[l];
            if l == 0 {
                // accumulate into the shared post-activation adjoint
                affine_bwd(
                    slot,
                    &params.values,
                    &ws.shared_h,
                    &ws.adj_a,
                    channels,
                    grad,
                    Some(&mut ws.adj_b),
                );
                for k in 0..spec.shared_width * channels {
                    ws.shared_h_bar[k] += ws.adj_b[k];
                }
            } else {
                affine_bwd(
                    slot,
                    &params.values,
                    &ws.sub_h[j][l - 1],
                    &ws.adj_a,
                    channels,
                    grad,
                    Some(&mut ws.adj_b),
                );
                // adj_b is H-bar of hidden layer l-1; convert to Z-bar.
                let width = layers[l - 1].rows;
                tanh_bwd(
                    &ws.sub_z[j][l - 1],
                    &ws.sub_h[j][l - 1],
                    &ws.adj_b,
                    &mut ws.adj_a,
                    width,
                    channels,
                    n_in,
                );
            }
        }
    }

    // Shared layer: tanh backward, then the affine against the seeded inputs.
    tanh_bwd(
        &ws.shared_z,
        &ws.shared_h,
        &ws.shared_h_bar,
        &mut ws.adj_a,
        spec.shared_width,
        channels,
        n_in,
    );
    affine_bwd(
        &params.layout.shared,
        &params.values,
        &ws.x,
        &ws.adj_a,
        channels,
        grad,
        None,
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::jet::Jet2;
    use crate::field::Var;
    use crate::network::{NetworkSpec, SubnetSpec};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_spec(input_dim: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            shared_width: 7,
            subnets: vec![
                SubnetSpec { var: Var::Tau, depth: 3, width: 6 },
                SubnetSpec { var: Var::W, depth: 4, width: 5 },
            ],
        }
    }

    fn random_params(spec: &NetworkSpec, seed: u64) -> ModelParams {
        ModelParams::init(spec, seed, &[])
    }

    /// Independent route: propagate scalar jets through the same weights.
    fn jet_forward(params: &ModelParams, x: &[f64]) -> Vec<Jet2> {
        let n_in = params.spec.input_dim;
        let inputs: Vec<Jet2> = (0..n_in).map(|i| Jet2::variable(x[i], i)).collect();
        let affine = |slot: &LayerSlot, input: &[Jet2]| -> Vec<Jet2> {
            let w = slot.weights(&params.values);
            let b = slot.biases(&params.values);
            (0..slot.rows)
                .map(|r| {
                    let mut acc = Jet2::constant(b[r]);
                    for i in 0..slot.cols {
                        acc = acc + input[i].scale(w[r * slot.cols + i]);
                    }
                    acc
                })
                .collect()
        };
        let shared: Vec<Jet2> = affine(&params.layout.shared, &inputs)
            .into_iter()
            .map(|j| j.tanh())
            .collect();
        params
            .layout
            .subnet_layers
            .iter()
            .map(|layers| {
                let mut a = shared.clone();
                let last = layers.len() - 1;
                for (l, slot) in layers.iter().enumerate() {
                    a = affine(slot, &a);
                    if l != last {
                        a = a.into_iter().map(|j| j.tanh()).collect();
                    }
                }
                a[0]
            })
            .collect()
    }

    #[test]
    fn engine_matches_scalar_jets() {
        for input_dim in [3usize, 4] {
            let spec = test_spec(input_dim);
            let params = random_params(&spec, 11);
            let mut ws = EvalWorkspace::new(&spec);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            for _ in 0..50 {
                let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                eval_with_input_derivs(&params, &x, DerivRequest::FirstAndSecond, &mut ws)
                    .unwrap();
                let oracle = jet_forward(&params, &x);
                for (jet, truth) in ws.jets().iter().zip(oracle.iter()) {
                    assert_abs_diff_eq!(jet.value, truth.value, epsilon = 1e-12);
                    for i in 0..input_dim {
                        assert_abs_diff_eq!(jet.first[i], truth.grad[i], epsilon = 1e-11);
                    }
                    for s in 0..input_dim - 1 {
                        assert_abs_diff_eq!(jet.second[s], truth.second[s], epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn engine_derivatives_match_finite_differences() {
        let spec = test_spec(3);
        let params = random_params(&spec, 4);
        let mut ws = EvalWorkspace::new(&spec);
        let h = 1e-4;
        let x = [0.31, -0.22, 0.55];
        eval_with_input_derivs(&params, &x, DerivRequest::FirstAndSecond, &mut ws).unwrap();
        let jets: Vec<FieldJet> = ws.jets().to_vec();

        let eval_at = |x: &[f64], ws: &mut EvalWorkspace| -> Vec<f64> {
            eval_with_input_derivs(&params, x, DerivRequest::ValueOnly, ws).unwrap();
            ws.jets().iter().map(|j| j.value).collect()
        };
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (eval_at(&xp, &mut ws), eval_at(&xm, &mut ws));
            let f0 = eval_at(&x, &mut ws);
            for j in 0..jets.len() {
                let fd1 = (fp[j] - fm[j]) / (2.0 * h);
                let rel = (jets[j].first[i] - fd1).abs() / fd1.abs().max(1e-6);
                assert!(rel < 1e-5, "first[{i}] field {j}: {} vs fd {fd1}", jets[j].first[i]);
                if i < 2 {
                    let fd2 = (fp[j] - 2.0 * f0[j] + fm[j]) / (h * h);
                    let rel = (jets[j].second[i] - fd2).abs() / fd2.abs().max(1e-4);
                    assert!(rel < 1e-5, "second[{i}] field {j}: {} vs fd {fd2}", jets[j].second[i]);
                }
            }
        }
    }

    /// Backprop against finite differences of a synthetic scalar loss built
    /// from all jet channels, touching every parameter.
    #[test]
    fn backprop_matches_finite_differences() {
        let spec = test_spec(3);
        let mut params = random_params(&spec, 8);
        let mut ws = EvalWorkspace::new(&spec);
        let x = [0.17, 0.42, -0.35];
        // loss = sum over fields of (value^2 + sum first^2 + sum second^2)/2
        let loss = |p: &ModelParams, ws: &mut EvalWorkspace| -> f64 {
            eval_with_input_derivs(p, &x, DerivRequest::FirstAndSecond, ws).unwrap();
            ws.jets()
                .iter()
                .map(|j| {
                    0.5 * (j.value * j.value
                        + j.first.iter().map(|v| v * v).sum::<f64>()
                        + j.second.iter().map(|v| v * v).sum::<f64>())
                })
                .sum()
        };
        loss(&params, &mut ws);
        let adjoints: Vec<FieldJet> = ws.jets().to_vec(); // d(loss)/d(channel) = channel
        let mut grad = vec![0.0; params.layout.total];
        backprop(&params, &mut ws, &adjoints, &mut grad);

        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let k = rng.random_range(0..params.layout.n_network());
            let orig = params.values[k];
            params.values[k] = orig + h;
            let lp = loss(&params, &mut ws);
            params.values[k] = orig - h;
            let lm = loss(&params, &mut ws);
            params.values[k] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[k] - fd).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-4, "param {k}: grad {} vs fd {fd}", grad[k]);
        }
    }

    #[test]
    fn value_only_request_matches_plain_forward() {
        let spec = test_spec(4);
        let params = random_params(&spec, 3);
        let mut ws = EvalWorkspace::new(&spec);
        let x = [0.1, -0.5, 0.9, 0.0];
        eval_with_input_derivs(&params, &x, DerivRequest::ValueOnly, &mut ws).unwrap();
        let plain = params.forward(&x).unwrap();
        for (jet, v) in ws.jets().iter().zip(plain.iter()) {
            assert_eq!(jet.value, *v);
            assert_eq!(jet.first, [0.0; 4]);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let spec = test_spec(3);
        let params = random_params(&spec, 3);
        let mut ws = EvalWorkspace::new(&spec);
        let err =
            eval_with_input_derivs(&params, &[f64::NAN, 0.0, 0.0], DerivRequest::ValueOnly, &mut ws)
                .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
