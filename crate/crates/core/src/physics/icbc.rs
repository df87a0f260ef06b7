//! Initial- and boundary-condition residual operators.
//!
//! 2D mode: the study's conditions are Dirichlet data on every piece — the
//! initial slab pins all four fields including pressure, which otherwise only
//! enters the equations through its gradient. 3D mode follows the primitive
//! equations' operators: wind stress and heat exchange at the surface,
//! Dirichlet data at the bottom, and a configurable lateral variant.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::field::Var;
use crate::geometry::{BoundaryTag, Domain2D, Domain3D, EARTH_RADIUS_M};
use crate::physics::fields::FieldSource;
use crate::physics::threed::Jets3D;
use crate::physics::Jets2D;

/// Residuals of one boundary point; at most six entries.
#[derive(Clone, Copy, Debug)]
pub struct IcbcResidual<S> {
    pub values: [S; 6],
    pub len: usize,
}

impl<S: Scalar> IcbcResidual<S> {
    fn new() -> Self {
        IcbcResidual { values: [S::from_f64(0.0); 6], len: 0 }
    }

    fn push(&mut self, v: S) {
        self.values[self.len] = v;
        self.len += 1;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values[..self.len]
    }
}

// ---------------------------------------------------------------------------
// 2D mode
// ---------------------------------------------------------------------------

/// Dirichlet data per boundary piece of the 2D box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcbcSpec2D {
    /// Conditions applied on the `t = t_lo` slab.
    pub initial: Vec<(Var, FieldSource)>,
    /// Conditions applied on each spatial boundary piece.
    pub spatial: Vec<(Var, FieldSource)>,
}

impl IcbcSpec2D {
    /// The simulation study's setup: all four fields pinned to the vortex
    /// closed forms on the initial slab and every spatial piece.
    pub fn taylor_green(params: crate::oracle::TaylorGreenParams) -> Self {
        let all = || {
            Var::ORDER_2D
                .iter()
                .map(|&var| (var, FieldSource::TaylorGreen { var, params }))
                .collect::<Vec<_>>()
        };
        Self { initial: all(), spatial: all() }
    }

    pub fn validate(&self) -> Result<()> {
        for (var, src) in self.initial.iter().chain(self.spatial.iter()) {
            if !Var::ORDER_2D.contains(var) {
                return Err(Error::InvalidArgument(format!("{var} is not a 2D field")));
            }
            src.validate(&["x", "z", "t"])?;
        }
        Ok(())
    }

    pub fn conditions(&self, tag: BoundaryTag) -> &[(Var, FieldSource)] {
        match tag {
            BoundaryTag::Initial => &self.initial,
            _ => &self.spatial,
        }
    }

    /// Dirichlet targets at one boundary point, in condition order.
    pub fn targets(&self, tag: BoundaryTag, x: f64, z: f64, t: f64) -> Result<Vec<(Var, f64)>> {
        let bind = [("x", x), ("z", z), ("t", t)];
        self.conditions(tag)
            .iter()
            .map(|(var, src)| Ok((*var, src.eval(&bind)?)))
            .collect()
    }
}

fn on_edge(value: f64, edge: f64, span: f64) -> bool {
    (value - edge).abs() <= 1e-9 * span.max(1.0)
}

/// Check the point lies on the tagged piece of the 2D box.
pub fn check_on_boundary_2d(domain: &Domain2D, tag: BoundaryTag, x: f64, z: f64, t: f64) -> Result<()> {
    let ok = match tag {
        BoundaryTag::Initial => on_edge(t, domain.t.lo, domain.t.length()),
        BoundaryTag::Surface => on_edge(z, domain.z.hi, domain.z.length()),
        BoundaryTag::Bottom => on_edge(z, domain.z.lo, domain.z.length()),
        BoundaryTag::LateralXLo => on_edge(x, domain.x.lo, domain.x.length()),
        BoundaryTag::LateralXHi => on_edge(x, domain.x.hi, domain.x.length()),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::ContractViolation(format!(
            "point ({x}, {z}, {t}) is not on boundary piece {tag:?}"
        )))
    }
}

/// Dirichlet residuals `u_j - g_j` given precomputed targets.
pub fn icbc_residual_2d_generic<S: Scalar>(
    jets: &Jets2D<S>,
    targets: &[(Var, f64)],
) -> IcbcResidual<S> {
    let mut out = IcbcResidual::new();
    for (var, g) in targets {
        let u = match var {
            Var::Tau => jets.tau.val,
            Var::V => jets.v.val,
            Var::W => jets.w.val,
            Var::P => jets.p.val,
            _ => unreachable!("validated 2D variable"),
        };
        out.push(u.shift(-*g));
    }
    out
}

/// Boundary residual of the 2D system at a tagged point.
pub fn icbc_residual_2d(
    jets: &Jets2D<f64>,
    spec: &IcbcSpec2D,
    domain: &Domain2D,
    tag: BoundaryTag,
    x: f64,
    z: f64,
    t: f64,
) -> Result<IcbcResidual<f64>> {
    check_on_boundary_2d(domain, tag, x, z, t)?;
    let targets = spec.targets(tag, x, z, t)?;
    Ok(icbc_residual_2d_generic(jets, &targets))
}

// ---------------------------------------------------------------------------
// 3D mode
// ---------------------------------------------------------------------------

/// Lateral-boundary flavor: the equations' statement (Dirichlet velocity,
/// Neumann tracers) or fully Dirichlet data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralVariant {
    DirichletVelocityNeumannTracer,
    FullyDirichlet,
}

/// Boundary and initial data fields of the 3D system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcbcSpec3D {
    pub lateral: LateralVariant,
    /// Initial horizontal velocity, temperature, salinity.
    pub i_v_theta: FieldSource,
    pub i_v_phi: FieldSource,
    pub i_tau: FieldSource,
    pub i_sigma: FieldSource,
    /// Wind-stress components on the surface.
    pub delta_v_theta: FieldSource,
    pub delta_v_phi: FieldSource,
    /// Apparent atmospheric equilibrium temperature on the surface.
    pub tau_a: FieldSource,
    /// Bottom temperature and salinity.
    pub b_tau: FieldSource,
    pub b_sigma: FieldSource,
}

impl IcbcSpec3D {
    /// Rest-state data: everything zero, tracers at the given references.
    pub fn rest(tau0: f64, sigma0: f64) -> Self {
        Self {
            lateral: LateralVariant::DirichletVelocityNeumannTracer,
            i_v_theta: FieldSource::Constant(0.0),
            i_v_phi: FieldSource::Constant(0.0),
            i_tau: FieldSource::Constant(tau0),
            i_sigma: FieldSource::Constant(sigma0),
            delta_v_theta: FieldSource::Constant(0.0),
            delta_v_phi: FieldSource::Constant(0.0),
            tau_a: FieldSource::Constant(tau0),
            b_tau: FieldSource::Constant(tau0),
            b_sigma: FieldSource::Constant(sigma0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let allowed: [&str; 4] = ["r", "theta", "phi", "t"];
        for src in [
            &self.i_v_theta,
            &self.i_v_phi,
            &self.i_tau,
            &self.i_sigma,
            &self.delta_v_theta,
            &self.delta_v_phi,
            &self.tau_a,
            &self.b_tau,
            &self.b_sigma,
        ] {
            src.validate(&allowed)?;
        }
        Ok(())
    }
}

pub fn check_on_boundary_3d(
    domain: &Domain3D,
    tag: BoundaryTag,
    p: &[f64; 4],
) -> Result<()> {
    let [r, theta, phi, t] = *p;
    let ok = match tag {
        BoundaryTag::Initial => on_edge(t, domain.t.lo, domain.t.length()),
        BoundaryTag::Surface => on_edge(r, domain.r.hi, domain.r.length()),
        BoundaryTag::Bottom => on_edge(r, domain.r.lo, domain.r.length()),
        BoundaryTag::LateralThetaLo => on_edge(theta, domain.theta.lo, domain.theta.length()),
        BoundaryTag::LateralThetaHi => on_edge(theta, domain.theta.hi, domain.theta.length()),
        BoundaryTag::LateralPhiLo => on_edge(phi, domain.phi.lo, domain.phi.length()),
        BoundaryTag::LateralPhiHi => on_edge(phi, domain.phi.hi, domain.phi.length()),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::ContractViolation(format!(
            "point {p:?} is not on boundary piece {tag:?}"
        )))
    }
}

/// Precomputed boundary data at one point, so the scalar-generic residual
/// needs no field evaluation of its own.
#[derive(Clone, Copy, Debug, Default)]
pub struct BoundaryData3At {
    pub i_v_theta: f64,
    pub i_v_phi: f64,
    pub i_tau: f64,
    pub i_sigma: f64,
    pub delta_v_theta: f64,
    pub delta_v_phi: f64,
    pub tau_a: f64,
    pub b_tau: f64,
    pub b_sigma: f64,
}

impl IcbcSpec3D {
    pub fn data_at(&self, p: &[f64; 4]) -> Result<BoundaryData3At> {
        let bind = [("r", p[0]), ("theta", p[1]), ("phi", p[2]), ("t", p[3])];
        Ok(BoundaryData3At {
            i_v_theta: self.i_v_theta.eval(&bind)?,
            i_v_phi: self.i_v_phi.eval(&bind)?,
            i_tau: self.i_tau.eval(&bind)?,
            i_sigma: self.i_sigma.eval(&bind)?,
            delta_v_theta: self.delta_v_theta.eval(&bind)?,
            delta_v_phi: self.delta_v_phi.eval(&bind)?,
            tau_a: self.tau_a.eval(&bind)?,
            b_tau: self.b_tau.eval(&bind)?,
            b_sigma: self.b_sigma.eval(&bind)?,
        })
    }
}

/// Boundary residuals of the 3D system at a tagged point.
///
/// * initial slab: `v - i`, `tau - i_tau`, `sigma - i_sigma`
/// * surface: `dv/dr - delta_v`, `w`, `dtau/dr + alpha (tau - tau_a)`, `dsigma/dr`
/// * bottom: `v`, `w`, `tau - b_tau`, `sigma - b_sigma`
/// * lateral: `v`, `w`, then Neumann or Dirichlet tracers per the variant.
///
/// The lateral normal derivative is the scaled angular derivative
/// `(1/r_e) d/dtheta` or `(1/(r_e sin theta)) d/dphi`; its sign is immaterial
/// inside a squared loss.
pub fn icbc_residual_3d_generic<S: Scalar>(
    jets: &Jets3D<S>,
    tag: BoundaryTag,
    data: &BoundaryData3At,
    alpha: f64,
    lateral: LateralVariant,
    theta: f64,
) -> IcbcResidual<S> {
    let mut out = IcbcResidual::new();
    match tag {
        BoundaryTag::Initial => {
            out.push(jets.v_theta.val.shift(-data.i_v_theta));
            out.push(jets.v_phi.val.shift(-data.i_v_phi));
            out.push(jets.tau.val.shift(-data.i_tau));
            out.push(jets.sal.val.shift(-data.i_sigma));
        }
        BoundaryTag::Surface => {
            out.push(jets.v_theta.dr.shift(-data.delta_v_theta));
            out.push(jets.v_phi.dr.shift(-data.delta_v_phi));
            out.push(jets.w.val);
            out.push(jets.tau.dr + jets.tau.val.shift(-data.tau_a).scale(alpha));
            out.push(jets.sal.dr);
        }
        BoundaryTag::Bottom => {
            out.push(jets.v_theta.val);
            out.push(jets.v_phi.val);
            out.push(jets.w.val);
            out.push(jets.tau.val.shift(-data.b_tau));
            out.push(jets.sal.val.shift(-data.b_sigma));
        }
        // The X tags belong to the 2D box; empty residual if they reach here.
        BoundaryTag::LateralXLo | BoundaryTag::LateralXHi => {}
        BoundaryTag::LateralThetaLo
        | BoundaryTag::LateralThetaHi
        | BoundaryTag::LateralPhiLo
        | BoundaryTag::LateralPhiHi => {
            out.push(jets.v_theta.val);
            out.push(jets.v_phi.val);
            out.push(jets.w.val);
            match lateral {
                LateralVariant::DirichletVelocityNeumannTracer => {
                    let along_theta = matches!(
                        tag,
                        BoundaryTag::LateralThetaLo | BoundaryTag::LateralThetaHi
                    );
                    let (t_n, s_n) = if along_theta {
                        (jets.tau.dth.scale(1.0 / EARTH_RADIUS_M), jets.sal.dth.scale(1.0 / EARTH_RADIUS_M))
                    } else {
                        let k = 1.0 / (EARTH_RADIUS_M * theta.sin());
                        (jets.tau.dph.scale(k), jets.sal.dph.scale(k))
                    };
                    out.push(t_n);
                    out.push(s_n);
                }
                LateralVariant::FullyDirichlet => {
                    out.push(jets.tau.val.shift(-data.b_tau));
                    out.push(jets.sal.val.shift(-data.b_sigma));
                }
            }
        }
    }
    out
}

/// Convenience wrapper validating the point location first.
pub fn icbc_residual_3d(
    jets: &Jets3D<f64>,
    spec: &IcbcSpec3D,
    domain: &Domain3D,
    tag: BoundaryTag,
    p: &[f64; 4],
    alpha: f64,
) -> Result<IcbcResidual<f64>> {
    check_on_boundary_3d(domain, tag, p)?;
    let data = spec.data_at(p)?;
    Ok(icbc_residual_3d_generic(jets, tag, &data, alpha, spec.lateral, p[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exact_jets, TaylorGreenParams};
    use crate::physics::threed::Jet3D;
    use approx::assert_abs_diff_eq;

    #[test]
    fn initial_residuals_vanish_on_exact_fields() {
        let tg = TaylorGreenParams::default();
        let spec = IcbcSpec2D::taylor_green(tg);
        spec.validate().unwrap();
        let d = Domain2D::unit();
        for (x, z) in [(0.1, 0.9), (0.7, 0.3)] {
            let jets = exact_jets(x, z, 0.0, &tg);
            let r = icbc_residual_2d(&jets, &spec, &d, BoundaryTag::Initial, x, z, 0.0).unwrap();
            assert_eq!(r.len, 4);
            for v in r.as_slice() {
                assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn off_boundary_point_is_a_contract_violation() {
        let spec = IcbcSpec2D::taylor_green(TaylorGreenParams::default());
        let jets = exact_jets(0.5, 0.5, 0.5, &TaylorGreenParams::default());
        let err = icbc_residual_2d(&jets, &spec, &Domain2D::unit(), BoundaryTag::Initial, 0.5, 0.5, 0.5)
            .unwrap_err();
        assert!(matches!(err, Error::ContractViolation(_)));
    }

    fn const_jets3(tau: f64, sal: f64, w: f64, vt: f64, vp: f64) -> Jets3D<f64> {
        let c = |val: f64| Jet3D { val, ..Jet3D::default() };
        Jets3D { tau: c(tau), sal: c(sal), w: c(w), v_theta: c(vt), v_phi: c(vp), p: c(0.0) }
    }

    #[test]
    fn bottom_residuals_vanish_for_matching_data() {
        let spec = IcbcSpec3D::rest(10.0, 35.0);
        spec.validate().unwrap();
        let jets = const_jets3(10.0, 35.0, 0.0, 0.0, 0.0);
        let d = Domain3D {
            r: crate::geometry::Interval { lo: EARTH_RADIUS_M - 1000.0, hi: EARTH_RADIUS_M },
            theta: crate::geometry::Interval { lo: 0.5, hi: 1.5 },
            phi: crate::geometry::Interval { lo: 0.0, hi: 1.0 },
            t: crate::geometry::Interval { lo: 0.0, hi: 100.0 },
        };
        let p = [d.r.lo, 1.0, 0.5, 50.0];
        let r = icbc_residual_3d(&jets, &spec, &d, BoundaryTag::Bottom, &p, 0.1).unwrap();
        assert_eq!(r.len, 5);
        for v in r.as_slice() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn surface_heat_flux_residual_vanishes_on_linear_profile() {
        // tau(r) = tau_a - (dtau/dr)/alpha fixture: choose dtau/dr = -alpha*(tau - tau_a)
        let alpha = 0.37;
        let tau_a = 12.0;
        let tau_surface = 14.0;
        let dtau_dr = -alpha * (tau_surface - tau_a);
        let mut jets = const_jets3(tau_surface, 35.0, 0.0, 0.0, 0.0);
        jets.tau.dr = dtau_dr;
        let spec = IcbcSpec3D {
            tau_a: FieldSource::Constant(tau_a),
            ..IcbcSpec3D::rest(10.0, 35.0)
        };
        let data = spec.data_at(&[0.0, 1.0, 0.5, 0.0]).unwrap();
        let r = icbc_residual_3d_generic(
            &jets,
            BoundaryTag::Surface,
            &data,
            alpha,
            LateralVariant::DirichletVelocityNeumannTracer,
            1.0,
        );
        // heat-flux entry is the fourth
        assert_abs_diff_eq!(r.as_slice()[3], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn lateral_variants_differ_in_tracer_conditions() {
        let mut jets = const_jets3(11.0, 34.0, 0.0, 0.0, 0.0);
        jets.tau.dth = 0.5;
        let spec = IcbcSpec3D::rest(10.0, 35.0);
        let data = spec.data_at(&[0.0, 1.0, 0.5, 0.0]).unwrap();
        let neumann = icbc_residual_3d_generic(
            &jets,
            BoundaryTag::LateralThetaLo,
            &data,
            0.1,
            LateralVariant::DirichletVelocityNeumannTracer,
            1.0,
        );
        assert_abs_diff_eq!(neumann.as_slice()[3], 0.5 / EARTH_RADIUS_M, epsilon = 1e-18);
        let dirichlet = icbc_residual_3d_generic(
            &jets,
            BoundaryTag::LateralThetaLo,
            &data,
            0.1,
            LateralVariant::FullyDirichlet,
            1.0,
        );
        assert_abs_diff_eq!(dirichlet.as_slice()[3], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dirichlet.as_slice()[4], -1.0, epsilon = 1e-12);
    }
}
