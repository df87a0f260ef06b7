//! Two-step training: phase one fits observations only; phase two adds the
//! equation and boundary residual terms and optimizes the unknown
//! coefficients jointly with the network weights.

pub mod adam;
pub mod assembly;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ObservationRecord;
use crate::network::{ModelParams, NetworkSpec};
use crate::physics::PdeConstants2D;

use adam::Adam;
pub use assembly::{
    Assembled2D, Assembled3D, CounterSnapshot, LossAssembly, Problem2D, Problem3D, SamplingPlan,
};

/// Training phase: data term only, or the full objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Step1,
    Step2,
}

/// The three residual families as root-weighted-sums-of-squares, the
/// multipliers in effect, and the combined objective
/// `total = e_data^2 + lambda1 e_pde^2 + lambda2 e_icbc^2`.
///
/// During the data-only phase both multipliers are zero: the residual
/// components are still reported, but excluded from the total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub e_data: f64,
    pub e_pde: f64,
    pub e_icbc: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn from_squares(phase: Phase, ed2: f64, ep2: f64, ei2: f64, l1: f64, l2: f64) -> Self {
        let (lambda1, lambda2) = match phase {
            Phase::Step1 => (0.0, 0.0),
            Phase::Step2 => (l1, l2),
        };
        LossBreakdown {
            e_data: ed2.sqrt(),
            e_pde: ep2.sqrt(),
            e_icbc: ei2.sqrt(),
            lambda1,
            lambda2,
            total: ed2 + lambda1 * ep2 + lambda2 * ei2,
        }
    }
}

/// An unknown equation coefficient: starting value and projection bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnknownCoeff {
    pub name: String,
    pub init: f64,
    pub lower_bound: f64,
}

impl UnknownCoeff {
    pub fn from_zero(name: &str) -> Self {
        Self { name: name.into(), init: 0.0, lower_bound: 0.0 }
    }
}

/// Optimization schedule and hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub step1_iters: usize,
    pub step2_iters: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seed: u64,
    /// Checkpoint cadence of the trace, in optimizer steps.
    pub trace_every: usize,
    /// Unknown coefficients with initial values and lower bounds; names must
    /// match the constants flagged unknown.
    pub unknowns: Vec<UnknownCoeff>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step1_iters: 5_000,
            step2_iters: 45_000,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lambda1: 1.0,
            lambda2: 1.0,
            seed: 0,
            trace_every: 100,
            unknowns: vec![],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.trace_every == 0 {
            return Err(Error::InvalidArgument("trace_every must be >= 1".into()));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::InvalidArgument("lambda multipliers must be >= 0".into()));
        }
        Ok(())
    }

    fn resolve_unknown(&self, name: &str) -> UnknownCoeff {
        self.unknowns
            .iter()
            .find(|u| u.name == name)
            .cloned()
            .unwrap_or_else(|| UnknownCoeff::from_zero(name))
    }
}

/// One checkpoint of the optimization trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub loss: LossBreakdown,
    pub coeffs: Vec<f64>,
}

/// Per-checkpoint history of losses and unknown-coefficient values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub coeff_names: Vec<String>,
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    /// CSV with columns `iter,e_data,e_pde,e_icbc,total,<coefficients...>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,e_data,e_pde,e_icbc,total");
        for name in &self.coeff_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}",
                r.iter, r.loss.e_data, r.loss.e_pde, r.loss.e_icbc, r.loss.total
            ));
            for c in &r.coeffs {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Final parameters, trace, and instrumentation counters. `divergence`
/// carries the abort context when the loss went non-finite; the trace and
/// parameters then cover the iterations up to the failure.
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: TrainTrace,
    pub counters: CounterSnapshot,
    pub divergence: Option<String>,
}

/// Diagnostic loss at the current parameters (value-only evaluation).
pub fn loss<A: LossAssembly>(
    asm: &A,
    params: &ModelParams,
    cfg: &TrainConfig,
    phase: Phase,
) -> Result<LossBreakdown> {
    let ed2 = asm.data_sq(params, None)?;
    let ep2 = asm.pde_sq(params, 1.0, None)?;
    let ei2 = asm.icbc_sq(params, 1.0, None)?;
    Ok(LossBreakdown::from_squares(phase, ed2, ep2, ei2, cfg.lambda1, cfg.lambda2))
}

fn coeff_values(params: &ModelParams) -> Vec<f64> {
    params.pde_params().to_vec()
}

/// The two-phase optimization loop over a prepared assembly.
pub fn run<A: LossAssembly>(
    asm: &A,
    mut params: ModelParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n_net = params.layout.n_network();
    let n_total = params.layout.total;
    let mut adam = Adam::new(n_total, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut grad = vec![0.0; n_total];
    let mut trace = TrainTrace {
        coeff_names: params.pde_names.clone(),
        records: Vec::new(),
    };
    let bounds: Vec<(usize, f64)> = params
        .pde_names
        .iter()
        .enumerate()
        .map(|(i, name)| (params.layout.pde_off + i, cfg.resolve_unknown(name).lower_bound))
        .collect();

    let mut global = 0usize;

    macro_rules! diverged {
        ($ctx:expr) => {
            return Ok(TrainOutcome {
                params,
                trace,
                counters: asm.counters().snapshot(),
                divergence: Some(format!("iteration {global}: {}", $ctx)),
            })
        };
    }

    for _ in 0..cfg.step1_iters {
        grad.fill(0.0);
        let ed2 = asm.data_sq(&params, Some(&mut grad))?;
        if !ed2.is_finite() {
            diverged!("non-finite data loss");
        }
        if global % cfg.trace_every == 0 {
            let ep2 = asm.pde_sq(&params, 1.0, None)?;
            let ei2 = asm.icbc_sq(&params, 1.0, None)?;
            trace.records.push(TraceRecord {
                iter: global,
                loss: LossBreakdown::from_squares(Phase::Step1, ed2, ep2, ei2, cfg.lambda1, cfg.lambda2),
                coeffs: coeff_values(&params),
            });
        }
        adam.step(&mut params.values, &grad, n_net);
        global += 1;
    }

    for _ in 0..cfg.step2_iters {
        grad.fill(0.0);
        let ed2 = asm.data_sq(&params, Some(&mut grad))?;
        let ep2 = if cfg.lambda1 > 0.0 {
            asm.pde_sq(&params, cfg.lambda1, Some(&mut grad))?
        } else {
            0.0
        };
        let ei2 = if cfg.lambda2 > 0.0 {
            asm.icbc_sq(&params, cfg.lambda2, Some(&mut grad))?
        } else {
            0.0
        };
        let total = ed2 + cfg.lambda1 * ep2 + cfg.lambda2 * ei2;
        if !total.is_finite() {
            diverged!(format!("non-finite loss (data {ed2}, pde {ep2}, icbc {ei2})"));
        }
        if global % cfg.trace_every == 0 {
            // multiplier-zero terms are recomputed diagnostically
            let ep2_rec = if cfg.lambda1 > 0.0 { ep2 } else { asm.pde_sq(&params, 1.0, None)? };
            let ei2_rec = if cfg.lambda2 > 0.0 { ei2 } else { asm.icbc_sq(&params, 1.0, None)? };
            trace.records.push(TraceRecord {
                iter: global,
                loss: LossBreakdown::from_squares(Phase::Step2, ed2, ep2_rec, ei2_rec, cfg.lambda1, cfg.lambda2),
                coeffs: coeff_values(&params),
            });
        }
        adam.step(&mut params.values, &grad, n_total);
        for (slot, lb) in &bounds {
            if params.values[*slot] < *lb {
                params.values[*slot] = *lb;
            }
        }
        global += 1;
    }

    // final checkpoint at the trained state
    let phase = if cfg.step2_iters > 0 { Phase::Step2 } else { Phase::Step1 };
    let final_loss = loss(asm, &params, cfg, phase)?;
    if trace.records.last().map(|r| r.iter) != Some(global) {
        trace.records.push(TraceRecord { iter: global, loss: final_loss, coeffs: coeff_values(&params) });
    }

    Ok(TrainOutcome {
        params,
        trace,
        counters: asm.counters().snapshot(),
        divergence: None,
    })
}

/// Coefficient tail entries (name, initial value) for the 2D inverse problem.
pub fn pde_entries_2d(constants: &PdeConstants2D, cfg: &TrainConfig) -> Vec<(String, f64)> {
    let mut entries = Vec::new();
    if constants.zeta_unknown {
        let u = cfg.resolve_unknown("zeta");
        entries.push((u.name, u.init));
    }
    if constants.zeta_tau_unknown {
        let u = cfg.resolve_unknown("zeta_tau");
        entries.push((u.name, u.init));
    }
    entries
}

/// Coefficient tail entries for the 3D inverse problem.
pub fn pde_entries_3d(
    constants: &crate::physics::threed::PdeConstants3D,
    cfg: &TrainConfig,
) -> Vec<(String, f64)> {
    let mut entries = Vec::new();
    if constants.beta_tau_unknown {
        let u = cfg.resolve_unknown("beta_tau");
        entries.push((u.name, u.init));
    }
    if constants.beta_sigma_unknown {
        let u = cfg.resolve_unknown("beta_sigma");
        entries.push((u.name, u.init));
    }
    entries
}

/// Train the 2D model end to end: init, assemble, run both phases.
pub fn train_2d(
    problem: &Problem2D,
    net: &NetworkSpec,
    obs: &[ObservationRecord],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let entries = pde_entries_2d(&problem.constants, cfg);
    let params = ModelParams::init(net, cfg.seed, &entries);
    let asm = Assembled2D::new(problem, net, &params, obs)?;
    run(&asm, params, cfg)
}

/// Train one 3D sub-learner on (already rotated) observations.
pub fn train_3d(
    problem: &Problem3D,
    net: &NetworkSpec,
    obs: &[ObservationRecord],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let entries = pde_entries_3d(&problem.constants, cfg);
    let params = ModelParams::init(net, cfg.seed, &entries);
    let asm = Assembled3D::new(problem, net, &params, obs)?;
    run(&asm, params, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Var;
    use crate::network::SubnetSpec;
    use crate::oracle::{self, ObservationPlan, TaylorGreenParams};
    use approx::assert_abs_diff_eq;

    fn tiny_net() -> NetworkSpec {
        NetworkSpec {
            input_dim: 3,
            shared_width: 6,
            subnets: vec![
                SubnetSpec { var: Var::Tau, depth: 3, width: 5 },
                SubnetSpec { var: Var::V, depth: 3, width: 5 },
                SubnetSpec { var: Var::W, depth: 2, width: 5 },
                SubnetSpec { var: Var::P, depth: 3, width: 5 },
            ],
        }
    }

    fn tiny_problem() -> Problem2D {
        Problem2D::simulation_study(SamplingPlan {
            n_pde: 24,
            n_icbc_per_piece: 6,
            mode: crate::sampling::SampleMode::UniformRandom,
            seed: 3,
        })
    }

    fn tiny_obs(n: usize) -> Vec<crate::field::ObservationRecord> {
        oracle::generate_observations(
            &ObservationPlan::new(n, 11),
            &crate::geometry::Domain2D::unit(),
            &TaylorGreenParams::default(),
        )
        .unwrap()
    }

    fn cfg_unknowns() -> Vec<UnknownCoeff> {
        vec![UnknownCoeff::from_zero("zeta"), UnknownCoeff::from_zero("zeta_tau")]
    }

    /// Full-loss parameter gradient against central finite differences on a
    /// miniature fixture, every parameter including the coefficient tail.
    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        let problem = tiny_problem();
        let net = tiny_net();
        let cfg = TrainConfig { unknowns: cfg_unknowns(), lambda1: 0.7, lambda2: 1.3, seed: 5, ..TrainConfig::default() };
        let entries = pde_entries_2d(&problem.constants, &cfg);
        let mut params = ModelParams::init(&net, 5, &entries);
        // move coefficients off zero so their gradient has both signs
        let off = params.layout.pde_off;
        params.values[off] = 0.012;
        params.values[off + 1] = 0.018;
        let asm = Assembled2D::new(&problem, &net, &params, &tiny_obs(20)).unwrap();

        let total = |p: &ModelParams| -> f64 {
            let ed2 = asm.data_sq(p, None).unwrap();
            let ep2 = asm.pde_sq(p, 1.0, None).unwrap();
            let ei2 = asm.icbc_sq(p, 1.0, None).unwrap();
            ed2 + cfg.lambda1 * ep2 + cfg.lambda2 * ei2
        };

        let mut grad = vec![0.0; params.layout.total];
        asm.data_sq(&params, Some(&mut grad)).unwrap();
        asm.pde_sq(&params, cfg.lambda1, Some(&mut grad)).unwrap();
        asm.icbc_sq(&params, cfg.lambda2, Some(&mut grad)).unwrap();

        let h = 1e-4;
        let n = params.layout.total;
        assert!(n <= 200, "fixture must stay miniature, has {n} params");
        let mut worst = 0.0f64;
        for k in 0..n {
            let orig = params.values[k];
            params.values[k] = orig + h;
            let lp = total(&params);
            params.values[k] = orig - h;
            let lm = total(&params);
            params.values[k] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad[k] - fd).abs() / fd.abs().max(1e-5);
            worst = worst.max(rel);
            assert!(rel < 1e-4, "param {k}: grad {} vs fd {fd} (rel {rel})", grad[k]);
        }
        // coefficient tail must have nonzero gradient in this fixture
        assert!(grad[off].abs() > 0.0 && grad[off + 1].abs() > 0.0);
        let _ = worst;
    }

    /// Independent route agreement: the structured backward pass against the
    /// scalar reverse tape on the data term of a one-subnet network.
    #[test]
    fn structured_gradient_matches_tape_on_data_term() {
        let net = NetworkSpec {
            input_dim: 3,
            shared_width: 3,
            subnets: vec![SubnetSpec { var: Var::Tau, depth: 2, width: 3 }],
        };
        let params = ModelParams::init(&net, 9, &[]);
        let point = [0.3, -0.4, 0.2];
        let y = 0.7;

        // structured route
        let mut ws = crate::autodiff::EvalWorkspace::new(&net);
        crate::autodiff::engine::eval_with_input_derivs(
            &params,
            &point,
            crate::autodiff::DerivRequest::ValueOnly,
            &mut ws,
        )
        .unwrap();
        let r = ws.jets()[0].value - y;
        let mut adj = [crate::autodiff::FieldJet::default(); 1];
        adj[0].value = 2.0 * r;
        let mut grad = vec![0.0; params.layout.total];
        crate::autodiff::engine::backprop(&params, &mut ws, &adj, &mut grad);

        // tape route: u = w2 tanh(W1 x + b1) + b2, loss = (u - y)^2
        let layout = params.layout.clone();
        let (_, tape_grad) = crate::autodiff::loss_param_gradient(&params.values, |tape, vars| {
            let shared = layout.shared;
            let out = layout.subnet_layers[0][0];
            let mut hidden = Vec::new();
            for rix in 0..shared.rows {
                let mut acc = vars[shared.b_off + rix];
                for c in 0..shared.cols {
                    let term = tape.scale(vars[shared.w_off + rix * shared.cols + c], point[c]);
                    acc = tape.add(acc, term);
                }
                hidden.push(tape.tanh(acc));
            }
            let mut u = vars[out.b_off];
            for c in 0..out.cols {
                let term = tape.mul(vars[out.w_off + c], hidden[c]);
                u = tape.add(u, term);
            }
            let res = tape.shift(u, -y);
            tape.square(res)
        })
        .unwrap();

        for k in 0..params.layout.total {
            assert_abs_diff_eq!(grad[k], tape_grad[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn perfect_fit_has_zero_data_loss() {
        // zero network outputs, observations fabricated at exactly zero
        let net = tiny_net();
        let layout = crate::network::ParamLayout::new(&net, 0);
        let params = ModelParams {
            spec: net.clone(),
            values: vec![0.0; layout.total],
            layout,
            pde_names: vec![],
        };
        let obs: Vec<crate::field::ObservationRecord> = (0..10)
            .map(|i| crate::field::ObservationRecord {
                point: [0.05 * i as f64 + 0.1, 0.3, 0.5, 0.0],
                var: Var::Tau,
                value: 0.0,
                weight: None,
            })
            .collect();
        let asm = Assembled2D::new(&tiny_problem(), &net, &params, &obs).unwrap();
        let cfg = TrainConfig::default();
        let b = loss(&asm, &params, &cfg, Phase::Step1).unwrap();
        assert_eq!(b.e_data, 0.0);
        assert_eq!(b.total, 0.0);
        // residual terms are reported but carry zero multipliers in step1
        assert!(b.e_pde > 0.0);
        assert_eq!(b.lambda1, 0.0);
    }

    #[test]
    fn lambda_zero_step2_matches_step1_extension_bitwise() {
        let problem = tiny_problem();
        let net = tiny_net();
        let obs = tiny_obs(15);
        let base = TrainConfig {
            step1_iters: 40,
            step2_iters: 0,
            trace_every: 10,
            unknowns: cfg_unknowns(),
            ..TrainConfig::default()
        };
        let pure = TrainConfig { step1_iters: 20, step2_iters: 20, lambda1: 0.0, lambda2: 0.0, ..base.clone() };
        let a = train_2d(&problem, &net, &obs, &base).unwrap();
        let b = train_2d(&problem, &net, &obs, &pure).unwrap();
        assert_eq!(a.params.values, b.params.values);
    }

    #[test]
    fn step1_never_reads_residuals_for_gradients() {
        let problem = tiny_problem();
        let net = tiny_net();
        let cfg = TrainConfig {
            step1_iters: 25,
            step2_iters: 0,
            trace_every: 10,
            unknowns: cfg_unknowns(),
            ..TrainConfig::default()
        };
        let out = train_2d(&problem, &net, &tiny_obs(12), &cfg).unwrap();
        assert_eq!(out.counters.pde_grad_points, 0);
        assert_eq!(out.counters.icbc_grad_points, 0);
        // diagnostics did run for the trace
        assert!(out.counters.pde_value_points > 0);
    }

    #[test]
    fn data_fitting_improves_and_is_deterministic() {
        let problem = tiny_problem();
        let net = tiny_net();
        let obs = tiny_obs(30);
        let cfg = TrainConfig {
            step1_iters: 300,
            step2_iters: 0,
            trace_every: 50,
            unknowns: cfg_unknowns(),
            seed: 2,
            ..TrainConfig::default()
        };
        let out = train_2d(&problem, &net, &obs, &cfg).unwrap();
        assert!(out.divergence.is_none());
        let first = &out.trace.records.first().unwrap();
        let last = &out.trace.records.last().unwrap();
        assert!(last.loss.e_data < first.loss.e_data, "{} !< {}", last.loss.e_data, first.loss.e_data);
        // iterations strictly increasing
        assert!(out.trace.records.windows(2).all(|w| w[0].iter < w[1].iter));

        let again = train_2d(&problem, &net, &obs, &cfg).unwrap();
        assert_eq!(out.params.values, again.params.values);
    }

    #[test]
    fn unknown_coefficients_respect_lower_bounds() {
        let problem = tiny_problem();
        let net = tiny_net();
        let cfg = TrainConfig {
            step1_iters: 5,
            step2_iters: 60,
            trace_every: 10,
            unknowns: cfg_unknowns(),
            ..TrainConfig::default()
        };
        let out = train_2d(&problem, &net, &tiny_obs(12), &cfg).unwrap();
        for r in &out.trace.records {
            for c in &r.coeffs {
                assert!(*c >= 0.0, "coefficient dipped below bound: {c}");
            }
        }
        for c in out.params.pde_params() {
            assert!(*c >= 0.0);
        }
    }

    /// The oracle fields drive the step-2 residual terms to the noise floor:
    /// e_pde and e_icbc of the closed forms over the exact sampled sets.
    #[test]
    fn oracle_model_residual_terms_vanish() {
        let problem = tiny_problem();
        let plan = &problem.sampling;
        let tg = TaylorGreenParams::default();
        let interior = crate::sampling::sample_interior_2d(
            &problem.domain,
            plan.n_pde,
            plan.seed,
            plan.mode,
        )
        .unwrap();
        let mut ep2 = 0.0;
        for p in &interior.points {
            let jets = oracle::exact_jets(p[0], p[1], p[2], &tg);
            for r in crate::physics::residual_2d(&jets, &problem.constants, p[0], p[1], p[2]) {
                ep2 += interior.weight * r * r;
            }
        }
        assert!(ep2.sqrt() <= 1e-8, "e_pde = {}", ep2.sqrt());

        let mut ei2 = 0.0;
        for batch in crate::sampling::sample_boundary_2d(
            &problem.domain,
            plan.n_icbc_per_piece,
            plan.seed ^ 0x9e3779b97f4a7c15,
        )
        .unwrap()
        {
            for p in &batch.points.points {
                let jets = oracle::exact_jets(p[0], p[1], p[2], &tg);
                let r = crate::physics::icbc_residual_2d(
                    &jets,
                    &problem.icbc,
                    &problem.domain,
                    batch.tag,
                    p[0],
                    p[1],
                    p[2],
                )
                .unwrap();
                for v in r.as_slice() {
                    ei2 += batch.points.weight * v * v;
                }
            }
        }
        assert!(ei2.sqrt() <= 1e-8, "e_icbc = {}", ei2.sqrt());
    }

    #[test]
    fn breakdown_total_consistent_with_components() {
        let b = LossBreakdown::from_squares(Phase::Step2, 0.04, 0.09, 0.16, 0.5, 2.0);
        let recomputed = b.e_data.powi(2) + b.lambda1 * b.e_pde.powi(2) + b.lambda2 * b.e_icbc.powi(2);
        assert_abs_diff_eq!(b.total, recomputed, epsilon = 1e-12);
    }
}
