//! The parallel fully connected network sharing its first layer: one shared
//! affine layer feeding per-field tanh subnetworks of field-specific depth.
//!
//! A subnet of depth `K` computes `C_K ∘ tanh ∘ C_{K-1} ∘ … ∘ tanh ∘ C_2 ∘
//! tanh ∘ C_1(x)` where `C_1` is the shared affine layer and `C_K` maps to a
//! single output. All parameters live in one flat `Vec<f64>` in a canonical
//! order (shared layer, then each subnet's layers in order, weights row-major
//! before biases, PDE coefficients last) so snapshots, optimizer state, and
//! gradients share the same indexing.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Var;

/// Architecture of one per-field subnetwork.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubnetSpec {
    pub var: Var,
    /// Total layer count `K` including the shared layer and the output layer.
    pub depth: usize,
    /// Hidden width of this subnet's layers.
    pub width: usize,
}

/// Architecture of the full parallel network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// 3 in 2D mode `(x, z, t)`, 4 in 3D mode `(r, theta, phi, t)`.
    pub input_dim: usize,
    pub shared_width: usize,
    pub subnets: Vec<SubnetSpec>,
}

impl NetworkSpec {
    /// Paper-scale 2D network: shared width 128, depth 3 for temperature and
    /// depth 5 for the velocity and pressure subnets.
    pub fn default_2d() -> Self {
        Self::sized_2d(128, 3, 5)
    }

    /// 2D network with custom widths/depths, keeping the field order fixed.
    pub fn sized_2d(width: usize, tracer_depth: usize, dynamic_depth: usize) -> Self {
        let depth_of = |v: Var| match v {
            Var::Tau => tracer_depth,
            _ => dynamic_depth,
        };
        Self {
            input_dim: 3,
            shared_width: width,
            subnets: Var::ORDER_2D
                .iter()
                .map(|&var| SubnetSpec { var, depth: depth_of(var), width })
                .collect(),
        }
    }

    /// Paper-scale 3D network: depth 3 for temperature and salinity, depth 5
    /// for the dynamic fields, width 128 throughout.
    pub fn default_3d() -> Self {
        Self::sized_3d(128, 3, 5)
    }

    pub fn sized_3d(width: usize, tracer_depth: usize, dynamic_depth: usize) -> Self {
        let depth_of = |v: Var| match v {
            Var::Tau | Var::Sal => tracer_depth,
            _ => dynamic_depth,
        };
        Self {
            input_dim: 4,
            shared_width: width,
            subnets: Var::ORDER_3D
                .iter()
                .map(|&var| SubnetSpec { var, depth: depth_of(var), width })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected_fields = match self.input_dim {
            3 => 4,
            4 => 6,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "input_dim must be 3 or 4, got {other}"
                )))
            }
        };
        if self.subnets.len() != expected_fields {
            return Err(Error::InvalidArgument(format!(
                "{} subnets for input_dim {}, expected {expected_fields}",
                self.subnets.len(),
                self.input_dim
            )));
        }
        if self.shared_width == 0 {
            return Err(Error::InvalidArgument("shared_width must be >= 1".into()));
        }
        for s in &self.subnets {
            if s.depth < 2 {
                return Err(Error::InvalidArgument(format!(
                    "subnet {} depth {} < 2",
                    s.var, s.depth
                )));
            }
            if s.width == 0 {
                return Err(Error::InvalidArgument(format!("subnet {} width 0", s.var)));
            }
        }
        Ok(())
    }

    pub fn n_fields(&self) -> usize {
        self.subnets.len()
    }

    pub fn field_index(&self, var: Var) -> Option<usize> {
        self.subnets.iter().position(|s| s.var == var)
    }

    /// Spatial coordinate count; time is always the last input.
    pub fn n_spatial(&self) -> usize {
        self.input_dim - 1
    }
}

/// Location of one affine layer's parameters inside the flat vector.
#[derive(Clone, Copy, Debug)]
pub struct LayerSlot {
    pub w_off: usize,
    pub b_off: usize,
    pub rows: usize,
    pub cols: usize,
}

impl LayerSlot {
    pub fn weights<'a>(&self, values: &'a [f64]) -> &'a [f64] {
        &values[self.w_off..self.w_off + self.rows * self.cols]
    }

    pub fn biases<'a>(&self, values: &'a [f64]) -> &'a [f64] {
        &values[self.b_off..self.b_off + self.rows]
    }
}

/// Canonical flat layout: shared layer, then each subnet's affine layers in
/// order, then the unknown PDE coefficients.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    pub shared: LayerSlot,
    /// `subnet_layers[j]` lists subnet `j`'s layers `C_2 … C_K`.
    pub subnet_layers: Vec<Vec<LayerSlot>>,
    /// Offset of the PDE-coefficient tail.
    pub pde_off: usize,
    pub n_pde: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(spec: &NetworkSpec, n_pde: usize) -> Self {
        let mut off = 0usize;
        let mut slot = |rows: usize, cols: usize| {
            let s = LayerSlot { w_off: off, b_off: off + rows * cols, rows, cols };
            off += rows * cols + rows;
            s
        };
        let shared = slot(spec.shared_width, spec.input_dim);
        let subnet_layers = spec
            .subnets
            .iter()
            .map(|sub| {
                (2..=sub.depth)
                    .map(|k| {
                        let cols = if k == 2 { spec.shared_width } else { sub.width };
                        let rows = if k == sub.depth { 1 } else { sub.width };
                        slot(rows, cols)
                    })
                    .collect()
            })
            .collect();
        ParamLayout { shared, subnet_layers, pde_off: off, n_pde, total: off + n_pde }
    }

    pub fn n_network(&self) -> usize {
        self.pde_off
    }
}

/// All trainable quantities: network weights plus the unknown equation
/// coefficients, stored flat in canonical order.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub spec: NetworkSpec,
    pub layout: ParamLayout,
    pub values: Vec<f64>,
    /// Names of the PDE-coefficient tail entries, e.g. `["zeta", "zeta_tau"]`.
    pub pde_names: Vec<String>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, PDE coefficients at their
    /// configured initial values. Deterministic for a fixed seed.
    pub fn init(spec: &NetworkSpec, seed: u64, pde: &[(String, f64)]) -> Self {
        let layout = ParamLayout::new(spec, pde.len());
        let mut values = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |slot: &LayerSlot, values: &mut Vec<f64>| {
            let limit = (6.0 / (slot.cols + slot.rows) as f64).sqrt();
            for i in 0..slot.rows * slot.cols {
                values[slot.w_off + i] = rng.random_range(-limit..limit);
            }
            // biases stay zero
        };
        fill(&layout.shared, &mut values);
        for layers in &layout.subnet_layers {
            for slot in layers {
                fill(slot, &mut values);
            }
        }
        for (i, (_, init)) in pde.iter().enumerate() {
            values[layout.pde_off + i] = *init;
        }
        ModelParams {
            spec: spec.clone(),
            layout,
            values,
            pde_names: pde.iter().map(|(n, _)| n.clone()).collect(),
        }
    }

    pub fn pde_params(&self) -> &[f64] {
        &self.values[self.layout.pde_off..]
    }

    pub fn pde_param(&self, name: &str) -> Option<f64> {
        self.pde_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[self.layout.pde_off + i])
    }

    /// Closed-form parameter count: `sum (d_in + 1) * d_out` over affine
    /// layers plus the PDE-coefficient tail.
    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    /// Plain forward pass on a normalized input; one output per field.
    pub fn forward(&self, x_norm: &[f64]) -> Result<Vec<f64>> {
        let mut ws = ForwardScratch::new(&self.spec);
        self.forward_with(x_norm, &mut ws)
    }

    /// Forward pass reusing caller-owned scratch buffers.
    pub fn forward_with(&self, x_norm: &[f64], ws: &mut ForwardScratch) -> Result<Vec<f64>> {
        debug_assert_eq!(x_norm.len(), self.spec.input_dim);
        if x_norm.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let vals = &self.values;
        affine(&self.layout.shared, vals, x_norm, &mut ws.shared);
        tanh_inplace(&mut ws.shared);
        let mut out = Vec::with_capacity(self.spec.n_fields());
        for (j, layers) in self.layout.subnet_layers.iter().enumerate() {
            ws.a.clear();
            ws.a.extend_from_slice(&ws.shared);
            let last = layers.len() - 1;
            for (k, slot) in layers.iter().enumerate() {
                affine(slot, vals, &ws.a, &mut ws.b);
                if k != last {
                    tanh_inplace(&mut ws.b);
                }
                std::mem::swap(&mut ws.a, &mut ws.b);
            }
            let y = ws.a[0];
            if !y.is_finite() {
                return Err(Error::NonFinite(format!(
                    "network output for field {}",
                    self.spec.subnets[j].var
                )));
            }
            out.push(y);
        }
        Ok(out)
    }
}

/// Reusable buffers for [`ModelParams::forward_with`].
pub struct ForwardScratch {
    shared: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ForwardScratch {
    pub fn new(spec: &NetworkSpec) -> Self {
        let w = spec
            .subnets
            .iter()
            .map(|s| s.width)
            .max()
            .unwrap_or(1)
            .max(spec.shared_width);
        ForwardScratch {
            shared: vec![0.0; spec.shared_width],
            a: Vec::with_capacity(w),
            b: vec![0.0; w],
        }
    }
}

fn affine(slot: &LayerSlot, values: &[f64], input: &[f64], out: &mut Vec<f64>) {
    let w = slot.weights(values);
    let b = slot.biases(values);
    out.clear();
    for r in 0..slot.rows {
        let row = &w[r * slot.cols..(r + 1) * slot.cols];
        let mut acc = b[r];
        let chunks = slot.cols / 4;
        let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..chunks {
            let i = 4 * k;
            s0 += row[i] * input[i];
            s1 += row[i + 1] * input[i + 1];
            s2 += row[i + 2] * input[i + 2];
            s3 += row[i + 3] * input[i + 3];
        }
        for i in 4 * chunks..slot.cols {
            acc += row[i] * input[i];
        }
        acc += (s0 + s1) + (s2 + s3);
        out.push(acc);
    }
}

fn tanh_inplace(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = x.tanh();
    }
}

/// Equation of state: `rho = rho0 * [1 - beta_tau (tau - tau0) + beta_sigma (sigma - sigma0)]`.
pub fn density_from_state(
    tau: f64,
    sigma: f64,
    beta_tau: f64,
    beta_sigma: f64,
    rho0: f64,
    tau0: f64,
    sigma0: f64,
) -> f64 {
    rho0 * (1.0 - beta_tau * (tau - tau0) + beta_sigma * (sigma - sigma0))
}

// ---------------------------------------------------------------------------
// Snapshot file format (documented in the README): JSON with a format tag,
// the spec header, PDE-coefficient names, and the flat 64-bit values in
// canonical order. Stable across versions.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    format: String,
    spec: NetworkSpec,
    pde_names: Vec<String>,
    values: Vec<f64>,
}

pub const SNAPSHOT_FORMAT: &str = "mdrf-snapshot-v1";

pub fn save_snapshot(params: &ModelParams, path: &Path) -> Result<()> {
    let file = SnapshotFile {
        format: SNAPSHOT_FORMAT.to_string(),
        spec: params.spec.clone(),
        pde_names: params.pde_names.clone(),
        values: params.values.clone(),
    };
    let json = serde_json::to_string(&file).expect("snapshot serialization");
    std::fs::write(path, json).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn load_snapshot(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let file: SnapshotFile = serde_json::from_str(&text)
        .map_err(|e| Error::SnapshotMismatch(format!("{}: {e}", path.display())))?;
    if file.format != SNAPSHOT_FORMAT {
        return Err(Error::SnapshotMismatch(format!(
            "format `{}`, expected `{SNAPSHOT_FORMAT}`",
            file.format
        )));
    }
    let layout = ParamLayout::new(&file.spec, file.pde_names.len());
    if file.values.len() != layout.total {
        return Err(Error::SnapshotMismatch(format!(
            "{} values for a layout of {}",
            file.values.len(),
            layout.total
        )));
    }
    Ok(ModelParams { spec: file.spec, layout, values: file.values, pde_names: file.pde_names })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            input_dim: 3,
            shared_width: 5,
            subnets: vec![
                SubnetSpec { var: Var::Tau, depth: 3, width: 4 },
                SubnetSpec { var: Var::V, depth: 2, width: 4 },
            ],
        }
    }

    /// Independent parameter count: sum over affine layers of (d_in+1)*d_out,
    /// enumerated directly from the spec rather than from the layout.
    fn count_by_formula(spec: &NetworkSpec, n_pde: usize) -> usize {
        let mut n = (spec.input_dim + 1) * spec.shared_width;
        for sub in &spec.subnets {
            for k in 2..=sub.depth {
                let d_in = if k == 2 { spec.shared_width } else { sub.width };
                let d_out = if k == sub.depth { 1 } else { sub.width };
                n += (d_in + 1) * d_out;
            }
        }
        n + n_pde
    }

    #[test]
    fn param_count_matches_closed_form() {
        for spec in [tiny_spec(), NetworkSpec::default_2d(), NetworkSpec::default_3d()] {
            let params = ModelParams::init(&spec, 42, &[("zeta".into(), 0.0), ("zeta_tau".into(), 0.0)]);
            assert_eq!(params.n_params(), count_by_formula(&spec, 2));
        }
    }

    #[test]
    fn default_2d_count_explicit() {
        // (3+1)*128 shared; tau: (128+1)*128 + (128+1)*1; v,w,p: (128+1)*128 +
        // 2*(128+1)*128 ... enumerated independently by count_by_formula.
        let spec = NetworkSpec::default_2d();
        let params = ModelParams::init(&spec, 1, &[]);
        assert_eq!(params.n_params(), count_by_formula(&spec, 0));
        assert_eq!(spec.subnets.len(), 4);
    }

    #[test]
    fn pde_params_take_initial_values() {
        let params = ModelParams::init(&tiny_spec(), 9, &[("zeta".into(), 0.0), ("zeta_tau".into(), 0.0)]);
        assert_eq!(params.pde_params(), &[0.0, 0.0]);
        let params = ModelParams::init(&tiny_spec(), 9, &[("beta_tau".into(), 2e-4)]);
        assert_eq!(params.pde_param("beta_tau"), Some(2e-4));
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelParams::init(&tiny_spec(), 42, &[]);
        let b = ModelParams::init(&tiny_spec(), 42, &[]);
        assert_eq!(a.values, b.values);
        let c = ModelParams::init(&tiny_spec(), 43, &[]);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn zero_params_map_to_zero_fields() {
        let spec = tiny_spec();
        let layout = ParamLayout::new(&spec, 0);
        let params = ModelParams {
            spec: spec.clone(),
            values: vec![0.0; layout.total],
            layout,
            pde_names: vec![],
        };
        let out = params.forward(&[0.3, -0.2, 0.9]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn single_copy_subnet_reproduces_shared_tanh() {
        // Subnet of depth 2 whose output layer copies shared unit 0 with
        // weight 1: output must equal tanh of the shared affine value.
        let spec = NetworkSpec {
            input_dim: 3,
            shared_width: 2,
            subnets: vec![SubnetSpec { var: Var::Tau, depth: 2, width: 2 }],
        };
        let layout = ParamLayout::new(&spec, 0);
        let mut values = vec![0.0; layout.total];
        // shared row 0: w = (0.3, -0.7, 0.1), b = 0.25
        values[layout.shared.w_off] = 0.3;
        values[layout.shared.w_off + 1] = -0.7;
        values[layout.shared.w_off + 2] = 0.1;
        values[layout.shared.b_off] = 0.25;
        // output layer picks shared unit 0
        values[layout.subnet_layers[0][0].w_off] = 1.0;
        let params = ModelParams { spec, layout, values, pde_names: vec![] };
        let x: [f64; 3] = [0.4, 0.2, -0.6];
        let expect = (0.3 * x[0] - 0.7 * x[1] + 0.1 * x[2] + 0.25).tanh();
        let out = params.forward(&x).unwrap();
        assert_abs_diff_eq!(out[0], expect, epsilon = 1e-15);
    }

    /// Golden snapshot: fixed seed, fixed point, values frozen from the
    /// first run. Guards the initialization draw order and the forward pass.
    #[test]
    fn fixed_seed_forward_matches_golden_values() {
        let spec = NetworkSpec::sized_2d(6, 3, 4);
        let params = ModelParams::init(&spec, 7, &[]);
        let out = params.forward(&[0.3, -0.5, 0.8]).unwrap();
        let golden: [f64; 4] = [
            -0.6379948894650778,
            0.6363557603668003,
            0.0505793637544405,
            0.281375379663245,
        ];
        for (o, g) in out.iter().zip(golden.iter()) {
            assert_eq!(o.to_bits(), g.to_bits());
        }
    }

    /// Hidden activations are tanh outputs: the final pre-output layer lies
    /// strictly inside (-1, 1) componentwise.
    #[test]
    fn pre_output_activations_stay_in_tanh_range() {
        let spec = NetworkSpec::sized_2d(6, 3, 4);
        let params = ModelParams::init(&spec, 13, &[]);
        let mut ws = crate::autodiff::EvalWorkspace::new(&spec);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..200 {
            let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            crate::autodiff::engine::eval_with_input_derivs(
                &params,
                &x,
                crate::autodiff::DerivRequest::ValueOnly,
                &mut ws,
            )
            .unwrap();
            for h in ws.last_hidden_values(&params) {
                assert!(h > -1.0 && h < 1.0, "activation {h} escaped (-1, 1)");
            }
        }
    }

    #[test]
    fn subnets_independent_above_shared_layer() {
        let spec = tiny_spec();
        let mut params = ModelParams::init(&spec, 5, &[]);
        let x = [0.1, 0.2, 0.3];
        let before = params.forward(&x).unwrap();
        // perturb only subnet 1's parameters
        let slot = params.layout.subnet_layers[1][0];
        params.values[slot.w_off + 3] += 0.5;
        let after = params.forward(&x).unwrap();
        assert_eq!(before[0].to_bits(), after[0].to_bits());
        assert_ne!(before[1], after[1]);
    }

    #[test]
    fn density_reference_state_and_substitution() {
        assert_eq!(density_from_state(10.0, 35.0, 2e-4, 8e-4, 1025.0, 10.0, 35.0), 1025.0);
        assert_eq!(density_from_state(11.0, 35.0, 0.2, 0.0, 1000.0, 10.0, 35.0), 800.0);
        // 1025 * (1 - 2e-4*5 + 8e-4*(-1)) = 1025 * (1 - 1e-3 - 8e-4)
        assert_abs_diff_eq!(
            density_from_state(15.0, 34.0, 2e-4, 8e-4, 1025.0, 10.0, 35.0),
            1023.155,
            epsilon = 1e-9
        );
    }

    #[test]
    fn snapshot_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        let params = ModelParams::init(&tiny_spec(), 3, &[("zeta".into(), 0.25)]);
        save_snapshot(&params, &path).unwrap();
        let loaded = load_snapshot(&path).unwrap();
        assert_eq!(loaded.values, params.values);
        assert_eq!(loaded.spec, params.spec);
        assert_eq!(loaded.pde_names, params.pde_names);
    }
}
