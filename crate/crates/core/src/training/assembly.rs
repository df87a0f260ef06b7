//! Loss assembly: turns collocation sets, boundary data, and observations
//! into the three loss terms and their exact parameter gradients.
//!
//! Every term is evaluated over fixed blocks of points; blocks run in
//! parallel and their partial sums merge in block order, so results are
//! bit-identical for any thread count.
//!
//! The source term of the temperature equation is precomputed per point from
//! the configured constants and held fixed: it is a prescribed forcing, not a
//! function of the coefficient estimates being trained.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::autodiff::engine::{backprop, eval_with_input_derivs, DerivRequest, EvalWorkspace, FieldJet};
use crate::autodiff::VDual;
use crate::error::{Error, Result};
use crate::field::ObservationRecord;
use crate::geometry::{BoundaryTag, Domain2D, Domain3D, Normalizer};
use crate::network::{ModelParams, NetworkSpec};
use crate::oracle;
use crate::physics::icbc::{icbc_residual_3d_generic, BoundaryData3At, IcbcSpec2D, IcbcSpec3D};
use crate::physics::threed::{Coeffs3, Jet3D, Jets3D, PdeConstants3D};
use crate::physics::{residual_2d_generic, Coeffs2, Jet2D, Jets2D, PdeConstants2D};
use crate::sampling::{self, SampleMode};

const BLOCK: usize = 256;

/// Sampling counts and seed for the collocation sets.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplingPlan {
    pub n_pde: usize,
    pub n_icbc_per_piece: usize,
    pub mode: SampleMode,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self { n_pde: 10_000, n_icbc_per_piece: 1_000, mode: SampleMode::UniformRandom, seed: 0 }
    }
}

/// An unknown equation coefficient: trained slot, projection bound.
#[derive(Clone, Debug)]
pub struct UnknownSlot {
    pub name: String,
    pub param_index: usize,
    pub lower_bound: f64,
}

/// Evaluation counters; gradient counters stay zero whenever the optimizer
/// has not touched the corresponding residual family.
#[derive(Default)]
pub struct Counters {
    pub pde_grad_points: AtomicU64,
    pub icbc_grad_points: AtomicU64,
    pub pde_value_points: AtomicU64,
    pub icbc_value_points: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CounterSnapshot {
    pub pde_grad_points: u64,
    pub icbc_grad_points: u64,
    pub pde_value_points: u64,
    pub icbc_value_points: u64,
}

impl Counters {
    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            pde_grad_points: self.pde_grad_points.load(Ordering::Relaxed),
            icbc_grad_points: self.icbc_grad_points.load(Ordering::Relaxed),
            pde_value_points: self.pde_value_points.load(Ordering::Relaxed),
            icbc_value_points: self.icbc_value_points.load(Ordering::Relaxed),
        }
    }
}

/// One grouped observation location: subnet-indexed targets.
struct DataPoint {
    point: [f64; 4],
    entries: Vec<(usize, f64)>,
}

fn group_observations(
    spec: &NetworkSpec,
    obs: &[ObservationRecord],
) -> Result<Vec<DataPoint>> {
    let mut grouped: Vec<DataPoint> = Vec::new();
    for rec in obs {
        let idx = spec.field_index(rec.var).ok_or_else(|| {
            Error::InvalidArgument(format!("observed variable {} has no subnet", rec.var))
        })?;
        if !rec.value.is_finite() {
            return Err(Error::NonFinite(format!("observation of {} at {:?}", rec.var, rec.point)));
        }
        match grouped.last_mut() {
            Some(last) if last.point == rec.point => last.entries.push((idx, rec.value)),
            _ => grouped.push(DataPoint { point: rec.point, entries: vec![(idx, rec.value)] }),
        }
    }
    Ok(grouped)
}

/// Common parallel pattern: per-block partial loss plus gradient, merged in
/// block order.
fn par_blocks<T: Sync>(
    items: &[T],
    n_params: usize,
    body: impl Fn(&[T], &mut EvalWorkspace, &mut [f64]) -> Result<f64> + Sync,
    spec: &NetworkSpec,
    grad: &mut [f64],
) -> Result<f64> {
    let parts: Vec<Result<(f64, Vec<f64>)>> = items
        .par_chunks(BLOCK)
        .map(|block| {
            let mut ws = EvalWorkspace::new(spec);
            let mut g = vec![0.0; n_params];
            let s = body(block, &mut ws, &mut g)?;
            Ok((s, g))
        })
        .collect();
    let mut sum = 0.0;
    for part in parts {
        let (s, g) = part?;
        sum += s;
        for (acc, gi) in grad.iter_mut().zip(g.iter()) {
            *acc += gi;
        }
    }
    Ok(sum)
}

fn par_values<T: Sync>(
    items: &[T],
    body: impl Fn(&[T], &mut EvalWorkspace) -> Result<f64> + Sync,
    spec: &NetworkSpec,
) -> Result<f64> {
    let parts: Vec<Result<f64>> = items
        .par_chunks(BLOCK)
        .map(|block| {
            let mut ws = EvalWorkspace::new(spec);
            body(block, &mut ws)
        })
        .collect();
    let mut sum = 0.0;
    for part in parts {
        sum += part?;
    }
    Ok(sum)
}

/// Access to the three loss terms; implemented per mode.
pub trait LossAssembly: Sync {
    fn spec(&self) -> &NetworkSpec;
    fn normalizer(&self) -> &Normalizer;
    fn unknowns(&self) -> &[UnknownSlot];
    fn counters(&self) -> &Counters;

    /// Weighted squared data misfit; gradient accumulated when `grad` given.
    fn data_sq(&self, params: &ModelParams, grad: Option<&mut [f64]>) -> Result<f64>;
    /// Weighted squared equation residual; `chain` multiplies the gradient
    /// (the regularization weight), never the returned value.
    fn pde_sq(&self, params: &ModelParams, chain: f64, grad: Option<&mut [f64]>) -> Result<f64>;
    fn icbc_sq(&self, params: &ModelParams, chain: f64, grad: Option<&mut [f64]>) -> Result<f64>;
}

// ---------------------------------------------------------------------------
// 2D assembly
// ---------------------------------------------------------------------------

/// The 2D problem statement: domain, constants, boundary data, sampling.
#[derive(Clone, Debug)]
pub struct Problem2D {
    pub domain: Domain2D,
    pub constants: PdeConstants2D,
    pub icbc: IcbcSpec2D,
    pub sampling: SamplingPlan,
}

impl Problem2D {
    /// Simulation-study problem: unit box, default constants, closed-form
    /// boundary data.
    pub fn simulation_study(sampling: SamplingPlan) -> Self {
        let constants = PdeConstants2D::default();
        Self {
            domain: Domain2D::unit(),
            icbc: IcbcSpec2D::taylor_green(constants.source_params()),
            constants,
            sampling,
        }
    }
}

struct IcbcPoint2 {
    point: [f64; 3],
    weight: f64,
    /// Dirichlet targets as (subnet index, value).
    targets: Vec<(usize, f64)>,
}

/// Slot layout of the 2D dual pass: 4 fields x 6 components, then the two
/// coefficients.
const N2: usize = 26;
const SLOT_ZETA: usize = 24;
const SLOT_ZETA_TAU: usize = 25;

pub struct Assembled2D {
    spec: NetworkSpec,
    norm: Normalizer,
    constants: PdeConstants2D,
    /// Interior collocation points with their precomputed source values.
    interior: Vec<([f64; 3], f64)>,
    w_pde: f64,
    icbc: Vec<IcbcPoint2>,
    data: Vec<DataPoint>,
    w_data: f64,
    unknowns: Vec<UnknownSlot>,
    counters: Counters,
}

impl Assembled2D {
    pub fn new(
        problem: &Problem2D,
        spec: &NetworkSpec,
        params: &ModelParams,
        obs: &[ObservationRecord],
    ) -> Result<Self> {
        spec.validate()?;
        problem.icbc.validate()?;
        if obs.is_empty() {
            return Err(Error::InvalidArgument("observation set is empty".into()));
        }
        let norm = problem.domain.normalizer();
        let plan = &problem.sampling;
        let interior_set =
            sampling::sample_interior_2d(&problem.domain, plan.n_pde, plan.seed, plan.mode)?;
        let src_params = problem.constants.source_params();
        let interior: Vec<([f64; 3], f64)> = interior_set
            .points
            .iter()
            .map(|p| ([p[0], p[1], p[2]], oracle::source(p[0], p[1], p[2], &src_params)))
            .collect();

        let mut icbc = Vec::new();
        for batch in
            sampling::sample_boundary_2d(&problem.domain, plan.n_icbc_per_piece, plan.seed ^ 0x9e3779b97f4a7c15)?
        {
            let w = batch.points.weight;
            for p in &batch.points.points {
                let targets = problem
                    .icbc
                    .targets(batch.tag, p[0], p[1], p[2])?
                    .into_iter()
                    .map(|(var, g)| {
                        let idx = spec.field_index(var).ok_or_else(|| {
                            Error::InvalidArgument(format!("condition on unmodeled field {var}"))
                        })?;
                        if !g.is_finite() {
                            return Err(Error::NonFinite(format!(
                                "boundary data for {var} at {p:?}"
                            )));
                        }
                        Ok((idx, g))
                    })
                    .collect::<Result<Vec<_>>>()?;
                icbc.push(IcbcPoint2 { point: [p[0], p[1], p[2]], weight: w, targets });
            }
        }

        let data = group_observations(spec, obs)?;
        let w_data = 1.0 / data.len() as f64;

        let mut unknowns = Vec::new();
        let pde_off = params.layout.pde_off;
        for (i, name) in params.pde_names.iter().enumerate() {
            unknowns.push(UnknownSlot {
                name: name.clone(),
                param_index: pde_off + i,
                lower_bound: 0.0,
            });
        }

        Ok(Assembled2D {
            spec: spec.clone(),
            norm,
            constants: problem.constants,
            interior,

            w_pde: interior_set.weight,
            icbc,
            data,
            w_data,
            unknowns,
            counters: Counters::default(),
        })
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_icbc(&self) -> usize {
        self.icbc.len()
    }

    pub fn n_data_points(&self) -> usize {
        self.data.len()
    }

    /// Coefficient values for this parameter state: trained slots read from
    /// the vector, known ones from the constants.
    fn coeff_values(&self, params: &ModelParams) -> (f64, f64) {
        let zeta = params.pde_param("zeta").unwrap_or(self.constants.zeta);
        let zeta_tau = params.pde_param("zeta_tau").unwrap_or(self.constants.zeta_tau);
        (zeta, zeta_tau)
    }

    fn scales(&self) -> [f64; 3] {
        [self.norm.deriv_scale(0), self.norm.deriv_scale(1), self.norm.deriv_scale(2)]
    }

    fn physical_jets(&self, ws: &EvalWorkspace, s: &[f64; 3]) -> Jets2D<f64> {
        let j = |i: usize| {
            let jet = &ws.jets()[i];
            Jet2D {
                val: jet.value,
                dt: jet.first[2] * s[2],
                dx: jet.first[0] * s[0],
                dz: jet.first[1] * s[1],
                dxx: jet.second[0] * s[0] * s[0],
                dzz: jet.second[1] * s[1] * s[1],
            }
        };
        Jets2D { tau: j(0), v: j(1), w: j(2), p: j(3) }
    }
}

fn seeded_jets_2d(ws: &EvalWorkspace, s: &[f64; 3]) -> Jets2D<VDual<N2>> {
    let mk = |i: usize| {
        let jet = &ws.jets()[i];
        let b = i * 6;
        Jet2D {
            val: VDual::seeded(jet.value, b, 1.0),
            dt: VDual::seeded(jet.first[2] * s[2], b + 1, 1.0),
            dx: VDual::seeded(jet.first[0] * s[0], b + 2, 1.0),
            dz: VDual::seeded(jet.first[1] * s[1], b + 3, 1.0),
            dxx: VDual::seeded(jet.second[0] * s[0] * s[0], b + 4, 1.0),
            dzz: VDual::seeded(jet.second[1] * s[1] * s[1], b + 5, 1.0),
        }
    };
    Jets2D { tau: mk(0), v: mk(1), w: mk(2), p: mk(3) }
}

/// Convert dual-slot adjoints (physical components) into engine channel
/// adjoints (normalized components) for the 2D layout.
fn adjoints_2d(adj: &[f64; N2], s: &[f64; 3]) -> [FieldJet; 4] {
    std::array::from_fn(|i| {
        let b = i * 6;
        FieldJet {
            value: adj[b],
            first: [adj[b + 2] * s[0], adj[b + 3] * s[1], adj[b + 1] * s[2], 0.0],
            second: [adj[b + 4] * s[0] * s[0], adj[b + 5] * s[1] * s[1], 0.0],
        }
    })
}

impl LossAssembly for Assembled2D {
    fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    fn normalizer(&self) -> &Normalizer {
        &self.norm
    }

    fn unknowns(&self) -> &[UnknownSlot] {
        &self.unknowns
    }

    fn counters(&self) -> &Counters {
        &self.counters
    }

    fn data_sq(&self, params: &ModelParams, grad: Option<&mut [f64]>) -> Result<f64> {
        let w = self.w_data;
        let run = |block: &[DataPoint], ws: &mut EvalWorkspace, g: Option<&mut [f64]>| -> Result<f64> {
            let mut g = g;
            let mut sum = 0.0;
            let mut xn = [0.0; 3];
            for dp in block {
                self.norm.normalize(&dp.point[..3], &mut xn)?;
                eval_with_input_derivs(params, &xn, DerivRequest::ValueOnly, ws)?;
                let mut adj = [FieldJet::default(); 4];
                let mut touched = false;
                for &(idx, y) in &dp.entries {
                    let r = ws.jets()[idx].value - y;
                    sum += w * r * r;
                    adj[idx].value += 2.0 * w * r;
                    touched = true;
                }
                if let Some(g) = g.as_deref_mut() {
                    if touched {
                        backprop(params, ws, &adj, g);
                    }
                }
            }
            Ok(sum)
        };
        match grad {
            Some(g) => par_blocks(
                &self.data,
                params.layout.total,
                |b, ws, g| run(b, ws, Some(g)),
                &self.spec,
                g,
            ),
            None => par_values(&self.data, |b, ws| run(b, ws, None), &self.spec),
        }
    }

    fn pde_sq(&self, params: &ModelParams, chain: f64, grad: Option<&mut [f64]>) -> Result<f64> {
        let s = self.scales();
        let w = self.w_pde;
        let (zeta, zeta_tau) = self.coeff_values(params);

        let grad_body = |block: &[([f64; 3], f64)], ws: &mut EvalWorkspace, g: &mut [f64]| -> Result<f64> {
            let mut sum = 0.0;
            let mut xn = [0.0; 3];
            let coeffs = Coeffs2::<VDual<N2>> {
                eta: VDual::constant(self.constants.eta),
                zeta: VDual::seeded(zeta, SLOT_ZETA, 1.0),
                eta_tau: VDual::constant(self.constants.eta_tau),
                zeta_tau: VDual::seeded(zeta_tau, SLOT_ZETA_TAU, 1.0),
            };
            for (p, q) in block {
                self.norm.normalize(&p[..], &mut xn)?;
                eval_with_input_derivs(params, &xn, DerivRequest::FirstAndSecond, ws)?;
                let jets = seeded_jets_2d(ws, &s);
                let r = residual_2d_generic(&jets, &coeffs, *q);
                let mut adj = [0.0f64; N2];
                for rk in &r {
                    sum += w * rk.v * rk.v;
                    let a = chain * 2.0 * w * rk.v;
                    for (acc, d) in adj.iter_mut().zip(rk.d.iter()) {
                        *acc += a * d;
                    }
                }
                backprop(params, ws, &adjoints_2d(&adj, &s), g);
                for u in &self.unknowns {
                    let slot = match u.name.as_str() {
                        "zeta" => SLOT_ZETA,
                        "zeta_tau" => SLOT_ZETA_TAU,
                        _ => continue,
                    };
                    g[u.param_index] += adj[slot];
                }
            }
            self.counters.pde_grad_points.fetch_add(block.len() as u64, Ordering::Relaxed);
            Ok(sum)
        };

        let value_body = |block: &[([f64; 3], f64)], ws: &mut EvalWorkspace| -> Result<f64> {
            let mut sum = 0.0;
            let mut xn = [0.0; 3];
            let coeffs = Coeffs2 { eta: self.constants.eta, zeta, eta_tau: self.constants.eta_tau, zeta_tau };
            for (p, q) in block {
                self.norm.normalize(&p[..], &mut xn)?;
                eval_with_input_derivs(params, &xn, DerivRequest::FirstAndSecond, ws)?;
                let jets = self.physical_jets(ws, &s);
                for rk in residual_2d_generic(&jets, &coeffs, *q) {
                    sum += w * rk * rk;
                }
            }
            self.counters.pde_value_points.fetch_add(block.len() as u64, Ordering::Relaxed);
            Ok(sum)
        };

        match grad {
            Some(g) => par_blocks(&self.interior, params.layout.total, grad_body, &self.spec, g),
            None => par_values(&self.interior, value_body, &self.spec),
        }
    }

    fn icbc_sq(&self, params: &ModelParams, chain: f64, grad: Option<&mut [f64]>) -> Result<f64> {
        let run = |block: &[IcbcPoint2], ws: &mut EvalWorkspace, g: Option<&mut [f64]>| -> Result<f64> {
            let mut g = g;
            let mut sum = 0.0;
            let mut xn = [0.0; 3];
            for pt in block {
                self.norm.normalize(&pt.point, &mut xn)?;
                eval_with_input_derivs(params, &xn, DerivRequest::ValueOnly, ws)?;
                let mut adj = [FieldJet::default(); 4];
                for &(idx, target) in &pt.targets {
                    let r = ws.jets()[idx].value - target;
                    sum += pt.weight * r * r;
                    adj[idx].value += chain * 2.0 * pt.weight * r;
                }
                if let Some(g) = g.as_deref_mut() {
                    backprop(params, ws, &adj, g);
                }
            }
            Ok(sum)
        };
        match grad {
            Some(g) => {
                self.counters.icbc_grad_points.fetch_add(self.icbc.len() as u64, Ordering::Relaxed);
                par_blocks(
                    &self.icbc,
                    params.layout.total,
                    |b, ws, g| run(b, ws, Some(g)),
                    &self.spec,
                    g,
                )
            }
            None => {
                self.counters.icbc_value_points.fetch_add(self.icbc.len() as u64, Ordering::Relaxed);
                par_values(&self.icbc, |b, ws| run(b, ws, None), &self.spec)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 3D assembly
// ---------------------------------------------------------------------------

/// The 3D problem statement.
#[derive(Clone, Debug)]
pub struct Problem3D {
    pub domain: Domain3D,
    pub constants: PdeConstants3D,
    pub sampling: SamplingPlan,
}

struct IcbcPoint3 {
    point: [f64; 4],
    weight: f64,
    tag: BoundaryTag,
    data: BoundaryData3At,
}

/// Slot layout of the 3D dual pass: 6 fields x 8 components, then the two
/// expansion coefficients.
const N3: usize = 50;
const SLOT_BETA_TAU: usize = 48;
const SLOT_BETA_SIGMA: usize = 49;

pub struct Assembled3D {
    spec: NetworkSpec,
    norm: Normalizer,
    constants: PdeConstants3D,
    icbc_spec: IcbcSpec3D,
    interior: Vec<[f64; 4]>,
    w_pde: f64,
    icbc: Vec<IcbcPoint3>,
    data: Vec<DataPoint>,
    w_data: f64,
    unknowns: Vec<UnknownSlot>,
    counters: Counters,
}

impl Assembled3D {
    pub fn new(
        problem: &Problem3D,
        spec: &NetworkSpec,
        params: &ModelParams,
        obs: &[ObservationRecord],
    ) -> Result<Self> {
        spec.validate()?;
        problem.domain.validate()?;
        problem.constants.validate()?;
        if obs.is_empty() {
            return Err(Error::InvalidArgument("observation set is empty".into()));
        }
        let norm = problem.domain.normalizer();
        let plan = &problem.sampling;
        let interior_set =
            sampling::sample_interior_3d(&problem.domain, plan.n_pde, plan.seed, plan.mode)?;

        let mut icbc = Vec::new();
        for batch in sampling::sample_boundary_3d(
            &problem.domain,
            plan.n_icbc_per_piece,
            plan.seed ^ 0x9e3779b97f4a7c15,
        )? {
            let w = batch.points.weight;
            for p in &batch.points.points {
                icbc.push(IcbcPoint3 {
                    point: *p,
                    weight: w,
                    tag: batch.tag,
                    data: problem.constants.icbc.data_at(p)?,
                });
            }
        }

        let data = group_observations(spec, obs)?;
        let w_data = 1.0 / data.len() as f64;

        let pde_off = params.layout.pde_off;
        let unknowns = params
            .pde_names
            .iter()
            .enumerate()
            .map(|(i, name)| UnknownSlot {
                name: name.clone(),
                param_index: pde_off + i,
                lower_bound: 0.0,
            })
            .collect();

        Ok(Assembled3D {
            spec: spec.clone(),
            norm,
            icbc_spec: problem.constants.icbc.clone(),
            constants: problem.constants.clone(),
            interior: interior_set.points,
            w_pde: interior_set.weight,
            icbc,
            data,
            w_data,
            unknowns,
            counters: Counters::default(),
        })
    }

    fn beta_values(&self, params: &ModelParams) -> (f64, f64) {
        (
            params.pde_param("beta_tau").unwrap_or(self.constants.beta_tau),
            params.pde_param("beta_sigma").unwrap_or(self.constants.beta_sigma),
        )
    }

    fn scales(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.norm.deriv_scale(i))
    }
}

fn seeded_jets_3d(ws: &EvalWorkspace, s: &[f64; 4]) -> Jets3D<VDual<N3>> {
    let mk = |i: usize| {
        let jet = &ws.jets()[i];
        let b = i * 8;
        Jet3D {
            val: VDual::seeded(jet.value, b, 1.0),
            dt: VDual::seeded(jet.first[3] * s[3], b + 1, 1.0),
            dr: VDual::seeded(jet.first[0] * s[0], b + 2, 1.0),
            dth: VDual::seeded(jet.first[1] * s[1], b + 3, 1.0),
            dph: VDual::seeded(jet.first[2] * s[2], b + 4, 1.0),
            drr: VDual::seeded(jet.second[0] * s[0] * s[0], b + 5, 1.0),
            dthth: VDual::seeded(jet.second[1] * s[1] * s[1], b + 6, 1.0),
            dphph: VDual::seeded(jet.second[2] * s[2] * s[2], b + 7, 1.0),
        }
    };
    Jets3D { tau: mk(0), sal: mk(1), w: mk(2), v_theta: mk(3), v_phi: mk(4), p: mk(5) }
}

fn physical_jets_3d(ws: &EvalWorkspace, s: &[f64; 4]) -> Jets3D<f64> {
    let mk = |i: usize| {
        let jet = &ws.jets()[i];
        Jet3D {
            val: jet.value,
            dt: jet.first[3] * s[3],
            dr: jet.first[0] * s[0],
            dth: jet.first[1] * s[1],
            dph: jet.first[2] * s[2],
            drr: jet.second[0] * s[0] * s[0],
            dthth: jet.second[1] * s[1] * s[1],
            dphph: jet.second[2] * s[2] * s[2],
        }
    };
    Jets3D { tau: mk(0), sal: mk(1), w: mk(2), v_theta: mk(3), v_phi: mk(4), p: mk(5) }
}

fn adjoints_3d(adj: &[f64; N3], s: &[f64; 4]) -> [FieldJet; 6] {
    std::array::from_fn(|i| {
        let b = i * 8;
        FieldJet {
            value: adj[b],
            first: [adj[b + 2] * s[0], adj[b + 3] * s[1], adj[b + 4] * s[2], adj[b + 1] * s[3]],
            second: [
                adj[b + 5] * s[0] * s[0],
                adj[b + 6] * s[1] * s[1],
                adj[b + 7] * s[2] * s[2],
            ],
        }
    })
}

impl LossAssembly for Assembled3D {
    fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    fn normalizer(&self) -> &Normalizer {
        &self.norm
    }

    fn unknowns(&self) -> &[UnknownSlot] {
        &self.unknowns
    }

    fn counters(&self) -> &Counters {
        &self.counters
    }

    fn data_sq(&self, params: &ModelParams, grad: Option<&mut [f64]>) -> Result<f64> {
        let w = self.w_data;
        let run = |block: &[DataPoint], ws: &mut EvalWorkspace, g: Option<&mut [f64]>| -> Result<f64> {
            let mut g = g;
            let mut sum = 0.0;
            let mut xn = [0.0; 4];
            for dp in block {
                self.norm.normalize(&dp.point, &mut xn)?;
                eval_with_input_derivs(params, &xn, DerivRequest::ValueOnly, ws)?;
                let mut adj = [FieldJet::default(); 6];
                for &(idx, y) in &dp.entries {
                    let r = ws.jets()[idx].value - y;
                    sum += w * r * r;
                    adj[idx].value += 2.0 * w * r;
                }
                if let Some(g) = g.as_deref_mut() {
                    backprop(params, ws, &adj, g);
                }
            }
            Ok(sum)
        };
        match grad {
            Some(g) => par_blocks(
                &self.data,
                params.layout.total,
                |b, ws, g| run(b, ws, Some(g)),
                &self.spec,
                g,
            ),
            None => par_values(&self.data, |b, ws| run(b, ws, None), &self.spec),
        }
    }

    fn pde_sq(&self, params: &ModelParams, chain: f64, grad: Option<&mut [f64]>) -> Result<f64> {
        let s = self.scales();
        let w = self.w_pde;
        let (beta_tau, beta_sigma) = self.beta_values(params);

        let grad_body = |block: &[[f64; 4]], ws: &mut EvalWorkspace, g: &mut [f64]| -> Result<f64> {
            let mut sum = 0.0;
            let mut xn = [0.0; 4];
            let coeffs = Coeffs3::<VDual<N3>> {
                beta_tau: VDual::seeded(beta_tau, SLOT_BETA_TAU, 1.0),
                beta_sigma: VDual::seeded(beta_sigma, SLOT_BETA_SIGMA, 1.0),
            };
            for p in block {
                self.norm.normalize(p, &mut xn)?;
                eval_with_input_derivs(params, &xn, DerivRequest::FirstAndSecond, ws)?;
                let jets = seeded_jets_3d(ws, &s);
                let r = crate::physics::threed::residual_3d_generic(&jets, &coeffs, &self.constants, p[1]);
                let mut adj = [0.0f64; N3];
                for rk in &r {
                    sum += w * rk.v * rk.v;
                    let a = chain * 2.0 * w * rk.v;
                    for (acc, d) in adj.iter_mut().zip(rk.d.iter()) {
                        *acc += a * d;
                    }
                }
                backprop(params, ws, &adjoints_3d(&adj, &s), g);
                for u in &self.unknowns {
                    let slot = match u.name.as_str() {
                        "beta_tau" => SLOT_BETA_TAU,
                        "beta_sigma" => SLOT_BETA_SIGMA,
                        _ => continue,
                    };
                    g[u.param_index] += adj[slot];
                }
            }
            self.counters.pde_grad_points.fetch_add(block.len() as u64, Ordering::Relaxed);
            Ok(sum)
        };

        let value_body = |block: &[[f64; 4]], ws: &mut EvalWorkspace| -> Result<f64> {
            let mut sum = 0.0;
            let mut xn = [0.0; 4];
            let coeffs = Coeffs3 { beta_tau, beta_sigma };
            for p in block {
                self.norm.normalize(p, &mut xn)?;
                eval_with_input_derivs(params, &xn, DerivRequest::FirstAndSecond, ws)?;
                let jets = physical_jets_3d(ws, &s);
                for rk in crate::physics::threed::residual_3d_generic(&jets, &coeffs, &self.constants, p[1]) {
                    sum += w * rk * rk;
                }
            }
            self.counters.pde_value_points.fetch_add(block.len() as u64, Ordering::Relaxed);
            Ok(sum)
        };

        match grad {
            Some(g) => par_blocks(&self.interior, params.layout.total, grad_body, &self.spec, g),
            None => par_values(&self.interior, value_body, &self.spec),
        }
    }

    fn icbc_sq(&self, params: &ModelParams, chain: f64, grad: Option<&mut [f64]>) -> Result<f64> {
        let s = self.scales();
        let alpha = self.constants.alpha;
        let lateral = self.icbc_spec.lateral;

        let run = |block: &[IcbcPoint3], ws: &mut EvalWorkspace, g: Option<&mut [f64]>| -> Result<f64> {
            let mut g = g;
            let mut sum = 0.0;
            let mut xn = [0.0; 4];
            for pt in block {
                self.norm.normalize(&pt.point, &mut xn)?;
                eval_with_input_derivs(params, &xn, DerivRequest::FirstOrder, ws)?;
                let jets = seeded_jets_3d(ws, &s);
                let r = icbc_residual_3d_generic(&jets, pt.tag, &pt.data, alpha, lateral, pt.point[1]);
                let mut adj = [0.0f64; N3];
                for rk in r.as_slice() {
                    sum += pt.weight * rk.v * rk.v;
                    let a = chain * 2.0 * pt.weight * rk.v;
                    for (acc, d) in adj.iter_mut().zip(rk.d.iter()) {
                        *acc += a * d;
                    }
                }
                if let Some(g) = g.as_deref_mut() {
                    backprop(params, ws, &adjoints_3d(&adj, &s), g);
                }
            }
            Ok(sum)
        };

        match grad {
            Some(g) => {
                self.counters.icbc_grad_points.fetch_add(self.icbc.len() as u64, Ordering::Relaxed);
                par_blocks(
                    &self.icbc,
                    params.layout.total,
                    |b, ws, g| run(b, ws, Some(g)),
                    &self.spec,
                    g,
                )
            }
            None => {
                self.counters.icbc_value_points.fetch_add(self.icbc.len() as u64, Ordering::Relaxed);
                par_values(&self.icbc, |b, ws| run(b, ws, None), &self.spec)
            }
        }
    }
}
