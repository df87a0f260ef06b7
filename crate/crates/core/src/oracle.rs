//! Closed-form decaying-vortex ground truth for the 2D system and synthetic
//! observation generation.
//!
//! With source `Q = pi cos(2 pi x) sin(4 pi z) exp[-4 pi^2 (eta+zeta+zeta_tau) t]`
//! the 2D system admits the exact solution
//!
//! ```text
//! v   = -sin(2 pi x) cos(2 pi z) E_v        E_v   = exp[-4 pi^2 (eta+zeta) t]
//! w   =  cos(2 pi x) sin(2 pi z) E_v
//! tau =  sin(2 pi z) E_tau                  E_tau = exp[-4 pi^2 zeta_tau t]
//! p   =  1/4 cos(4 pi x) E_v^2 + 1/(2 pi) cos(2 pi z) E_tau
//! ```
//!
//! The velocity fields depend only on `eta + zeta` and are independent of
//! `zeta_tau`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Fields2, ObservationRecord, Var};
use crate::geometry::Domain2D;
use crate::physics::Jets2D;

/// Coefficients of the manufactured solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorGreenParams {
    pub eta: f64,
    pub zeta: f64,
    pub zeta_tau: f64,
}

impl Default for TaylorGreenParams {
    fn default() -> Self {
        Self { eta: 0.01, zeta: 0.01, zeta_tau: 0.02 }
    }
}

impl TaylorGreenParams {
    fn decay_v(&self, t: f64) -> f64 {
        (-4.0 * PI * PI * (self.eta + self.zeta) * t).exp()
    }

    fn decay_tau(&self, t: f64) -> f64 {
        (-4.0 * PI * PI * self.zeta_tau * t).exp()
    }
}

/// Evaluate the four closed forms exactly.
///
/// Kept as a single machine-code instance so every call site rounds
/// identically; per-site auto-vectorization of the trig calls would
/// otherwise produce 1-ulp discrepancies between code paths.
#[inline(never)]
pub fn exact(x: f64, z: f64, t: f64, p: &TaylorGreenParams) -> Fields2 {
    let ev = p.decay_v(t);
    let et = p.decay_tau(t);
    let (s2x, c2x) = (2.0 * PI * x).sin_cos();
    let (s2z, c2z) = (2.0 * PI * z).sin_cos();
    Fields2 {
        tau: s2z * et,
        v: -s2x * c2z * ev,
        w: c2x * s2z * ev,
        p: 0.25 * (4.0 * PI * x).cos() * ev * ev + c2z * et / (2.0 * PI),
    }
}

/// The periodic source term of the temperature equation.
#[inline(never)]
pub fn source(x: f64, z: f64, t: f64, p: &TaylorGreenParams) -> f64 {
    PI * (2.0 * PI * x).cos()
        * (4.0 * PI * z).sin()
        * (-4.0 * PI * PI * (self_sum(p)) * t).exp()
}

fn self_sum(p: &TaylorGreenParams) -> f64 {
    p.eta + p.zeta + p.zeta_tau
}

/// Hand-derived closed-form derivatives of the exact solution, independent of
/// any automatic-differentiation path. Test oracle for the residual kernels.
pub fn exact_jets(x: f64, z: f64, t: f64, p: &TaylorGreenParams) -> Jets2D<f64> {
    let ev = p.decay_v(t);
    let et = p.decay_tau(t);
    let kv = -4.0 * PI * PI * (p.eta + p.zeta);
    let kt = -4.0 * PI * PI * p.zeta_tau;
    let (s2x, c2x) = (2.0 * PI * x).sin_cos();
    let (s2z, c2z) = (2.0 * PI * z).sin_cos();
    let (s4x, c4x) = (4.0 * PI * x).sin_cos();
    let f = exact(x, z, t, p);

    let tau = crate::physics::Jet2D {
        val: f.tau,
        dt: kt * f.tau,
        dx: 0.0,
        dz: 2.0 * PI * c2z * et,
        dxx: 0.0,
        dzz: -4.0 * PI * PI * f.tau,
    };
    let v = crate::physics::Jet2D {
        val: f.v,
        dt: kv * f.v,
        dx: -2.0 * PI * c2x * c2z * ev,
        dz: 2.0 * PI * s2x * s2z * ev,
        dxx: -4.0 * PI * PI * f.v,
        dzz: -4.0 * PI * PI * f.v,
    };
    let w = crate::physics::Jet2D {
        val: f.w,
        dt: kv * f.w,
        dx: -2.0 * PI * s2x * s2z * ev,
        dz: 2.0 * PI * c2x * c2z * ev,
        dxx: -4.0 * PI * PI * f.w,
        dzz: -4.0 * PI * PI * f.w,
    };
    let p_jet = crate::physics::Jet2D {
        val: f.p,
        dt: 2.0 * kv * 0.25 * c4x * ev * ev + kt * c2z * et / (2.0 * PI),
        dx: -PI * s4x * ev * ev,
        dz: -s2z * et,
        dxx: -4.0 * PI * PI * c4x * ev * ev,
        dzz: -2.0 * PI * c2z * et,
    };
    Jets2D { tau, v, w, p: p_jet }
}

/// Rounded-rectangle data mask in the x-z plane: the observation layout of
/// the simulation study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundedRect {
    pub cx: f64,
    pub cz: f64,
    pub half_w: f64,
    pub half_h: f64,
    pub radius: f64,
}

impl RoundedRect {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 0.0 || self.radius > self.half_w.min(self.half_h) {
            return Err(Error::InvalidArgument(format!(
                "corner radius {} must lie in [0, min(half_w, half_h)]",
                self.radius
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let dx = ((x - self.cx).abs() - (self.half_w - self.radius)).max(0.0);
        let dz = ((z - self.cz).abs() - (self.half_h - self.radius)).max(0.0);
        if (x - self.cx).abs() > self.half_w || (z - self.cz).abs() > self.half_h {
            return false;
        }
        dx * dx + dz * dz <= self.radius * self.radius
    }

    /// Exact area: `4 hw hh - (4 - pi) r^2`.
    pub fn area(&self) -> f64 {
        4.0 * self.half_w * self.half_h - (4.0 - PI) * self.radius * self.radius
    }
}

/// Synthetic-observation settings for [`generate_observations`].
#[derive(Clone, Debug)]
pub struct ObservationPlan {
    pub n: usize,
    pub seed: u64,
    /// Observed variables; pressure is excluded by default.
    pub variables: Vec<Var>,
    /// Standard deviation of additive Gaussian noise; 0 disables the draw.
    pub noise_sd: f64,
    pub mask: Option<RoundedRect>,
}

impl ObservationPlan {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, variables: vec![Var::Tau, Var::V, Var::W], noise_sd: 0.0, mask: None }
    }
}

/// Draw `n` observation locations uniformly over the data subdomain and emit
/// one record per requested variable, values from [`exact`], grouped by
/// location. Deterministic per seed.
pub fn generate_observations(
    plan: &ObservationPlan,
    domain: &Domain2D,
    params: &TaylorGreenParams,
) -> Result<Vec<ObservationRecord>> {
    if plan.n == 0 {
        return Err(Error::InvalidArgument("observation count must be >= 1".into()));
    }
    if plan.variables.is_empty() {
        return Err(Error::InvalidArgument("observation variable set is empty".into()));
    }
    for v in &plan.variables {
        if !Var::ORDER_2D.contains(v) {
            return Err(Error::InvalidArgument(format!("variable {v} not in the 2D system")));
        }
    }
    if let Some(mask) = &plan.mask {
        mask.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let noise = if plan.noise_sd > 0.0 {
        Some(Normal::new(0.0, plan.noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let mut records = Vec::with_capacity(plan.n * plan.variables.len());
    for _ in 0..plan.n {
        let (x, z) = loop {
            let x = rng.random_range(domain.x.lo..domain.x.hi);
            let z = rng.random_range(domain.z.lo..domain.z.hi);
            match &plan.mask {
                Some(m) if !m.contains(x, z) => continue,
                _ => break (x, z),
            }
        };
        let t = rng.random_range(domain.t.lo..domain.t.hi);
        let fields = exact(x, z, t, params);
        for &var in &plan.variables {
            let mut value = fields.get(var).expect("2D variable");
            if let Some(n) = &noise {
                value += n.sample(&mut rng);
            }
            records.push(ObservationRecord { point: [x, z, t, 0.0], var, value, weight: None });
        }
    }
    Ok(records)
}

/// Smooth synthetic 3D fields for reduced-scale runs: well-scaled deviations
/// around the reference state with a hydrostatic pressure column. A smoke
/// fixture for the spherical pipeline, not a solution of the equations.
#[inline(never)]
pub fn synthetic_field_3d(
    p: &[f64; 4],
    domain: &crate::geometry::Domain3D,
    rho0: f64,
    g: f64,
    tau0: f64,
    sigma0: f64,
) -> crate::field::Fields3 {
    let [r, theta, phi, t] = *p;
    let depth = crate::geometry::EARTH_RADIUS_M - r;
    let t_frac = (t - domain.t.lo) / domain.t.length();
    let depth_frac = depth / (crate::geometry::EARTH_RADIUS_M - domain.r.lo).max(1.0);
    crate::field::Fields3 {
        tau: tau0 + 2.0 * theta.sin() * phi.cos() - 3.0 * depth_frac
            + 0.2 * (2.0 * PI * t_frac).sin(),
        sal: sigma0 + 0.5 * (2.0 * theta).cos() + 0.2 * phi.sin(),
        w: 1e-5 * theta.sin() * phi.sin(),
        v_theta: 0.1 * theta.sin() * phi.cos(),
        v_phi: 0.2 * theta.sin(),
        p: rho0 * g * depth,
    }
}

/// Synthetic 3D observations over a spherical sector, grouped per location
/// with the horizontal velocity components adjacent (the rotation machinery
/// transforms them jointly). Deterministic per seed.
pub fn generate_observations_3d(
    n: usize,
    seed: u64,
    variables: &[Var],
    noise_sd: f64,
    domain: &crate::geometry::Domain3D,
    rho0: f64,
    g: f64,
    tau0: f64,
    sigma0: f64,
) -> Result<Vec<ObservationRecord>> {
    if n == 0 {
        return Err(Error::InvalidArgument("observation count must be >= 1".into()));
    }
    if variables.is_empty() {
        return Err(Error::InvalidArgument("observation variable set is empty".into()));
    }
    let mut ordered: Vec<Var> = Var::ORDER_3D.iter().copied().filter(|v| variables.contains(v)).collect();
    if ordered.len() != variables.len() {
        return Err(Error::InvalidArgument(format!("variables {variables:?} not all in the 3D system")));
    }
    if ordered.contains(&Var::VPhi) && !ordered.contains(&Var::VTheta) {
        ordered.insert(ordered.iter().position(|v| *v == Var::VPhi).unwrap(), Var::VTheta);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let margin = 1e-3;
    let th_lo = domain.theta.lo.max(margin);
    let th_hi = domain.theta.hi.min(PI - margin);
    let mut records = Vec::with_capacity(n * ordered.len());
    for _ in 0..n {
        let p = [
            rng.random_range(domain.r.lo..domain.r.hi),
            rng.random_range(th_lo..th_hi),
            rng.random_range(domain.phi.lo..domain.phi.hi),
            rng.random_range(domain.t.lo..domain.t.hi),
        ];
        let fields = synthetic_field_3d(&p, domain, rho0, g, tau0, sigma0);
        for &var in &ordered {
            let mut value = fields.get(var).expect("3D variable");
            if let Some(nd) = &noise {
                value += nd.sample(&mut rng);
            }
            records.push(ObservationRecord { point: p, var, value, weight: None });
        }
    }
    Ok(records)
}
