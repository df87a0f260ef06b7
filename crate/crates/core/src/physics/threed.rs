//! Residuals of the spherical primitive equations under the thin-shell
//! convention: metric factors are evaluated at `r = r_e`, and `d/dr_a` and
//! `d/dr` coincide because `r = r_a + r_e`.
//!
//! Componentwise operator expansions used throughout (documented here as the
//! repo's convention; the horizontal advection and Laplacian act on each
//! velocity component as on a scalar, without curvature coupling terms):
//!
//! ```text
//! adv(f)   = (v_theta / r_e) f_theta + (v_phi / (r_e sin theta)) f_phi + w f_r
//! lap_h(f) = (f_theta_theta + cot(theta) f_theta + f_phi_phi / sin^2 theta) / r_e^2
//! grad_h p = (p_theta / r_e, p_phi / (r_e sin theta))
//! div  v   = (v_theta_theta + cot(theta) v_theta) / r_e + v_phi_phi' / (r_e sin theta)
//! coriolis = 2 omega_e cos(theta) (-v_phi, +v_theta)
//! ```

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::geometry::EARTH_RADIUS_M;
use crate::physics::icbc::IcbcSpec3D;

/// Value and input derivatives of one 3D field in physical coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet3D<S> {
    pub val: S,
    pub dt: S,
    pub dr: S,
    pub dth: S,
    pub dph: S,
    pub drr: S,
    pub dthth: S,
    pub dphph: S,
}

/// Jets of all six 3D fields at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jets3D<S> {
    pub tau: Jet3D<S>,
    pub sal: Jet3D<S>,
    pub w: Jet3D<S>,
    pub v_theta: Jet3D<S>,
    pub v_phi: Jet3D<S>,
    pub p: Jet3D<S>,
}

/// Expansion coefficients of the equation of state, scalar-generic because
/// they are the 3D system's unknowns.
#[derive(Clone, Copy, Debug)]
pub struct Coeffs3<S> {
    pub beta_tau: S,
    pub beta_sigma: S,
}

/// Configured constants of the 3D system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeConstants3D {
    pub rho0: f64,
    pub tau0: f64,
    pub sigma0: f64,
    /// Earth's angular speed, rad/s.
    pub omega_e: f64,
    pub g: f64,
    pub eta: f64,
    pub zeta: f64,
    pub eta_tau: f64,
    pub zeta_tau: f64,
    pub eta_sigma: f64,
    pub zeta_sigma: f64,
    pub beta_tau: f64,
    pub beta_sigma: f64,
    pub beta_tau_unknown: bool,
    pub beta_sigma_unknown: bool,
    /// Surface heat-exchange constant.
    pub alpha: f64,
    /// Per-equation nondimensionalization factors applied to the residuals
    /// before weighting, order `[mom_theta, mom_phi, hydrostatic, continuity,
    /// temperature, salinity]`.
    pub residual_scales: [f64; 6],
    pub icbc: IcbcSpec3D,
}

impl PdeConstants3D {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho0", self.rho0), ("g", self.g), ("alpha", self.alpha)] {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.residual_scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument("residual_scales must be positive".into()));
        }
        self.icbc.validate()
    }

    /// A small, well-scaled rest ocean used by tests and the smoke run.
    pub fn rest_fixture() -> Self {
        Self {
            rho0: 1025.0,
            tau0: 10.0,
            sigma0: 35.0,
            omega_e: 7.2921e-5,
            g: 9.81,
            eta: 1e-4,
            zeta: 1e2,
            eta_tau: 1e-5,
            zeta_tau: 1e2,
            eta_sigma: 1e-5,
            zeta_sigma: 1e2,
            beta_tau: 2e-4,
            beta_sigma: 8e-4,
            beta_tau_unknown: true,
            beta_sigma_unknown: true,
            alpha: 1e-3,
            residual_scales: [1.0; 6],
            icbc: IcbcSpec3D::rest(10.0, 35.0),
        }
    }
}

/// Residual order of the 3D system.
pub const RESIDUALS_3D: [&str; 6] = [
    "momentum_theta",
    "momentum_phi",
    "hydrostatic",
    "continuity",
    "temperature",
    "salinity",
];

/// Margin below which `1/sin(theta)` factors are considered singular.
pub const POLE_MARGIN: f64 = 1e-6;

/// Six residuals of the spherical system at polar angle `theta`, given
/// precomputed jets in physical coordinates. `coeffs` carries the unknowns;
/// everything else is a known constant of `c`.
pub fn residual_3d_generic<S: Scalar>(
    j: &Jets3D<S>,
    coeffs: &Coeffs3<S>,
    c: &PdeConstants3D,
    theta: f64,
) -> [S; 6] {
    let re = EARTH_RADIUS_M;
    let (sin_t, cos_t) = theta.sin_cos();
    let cot = cos_t / sin_t;
    let inv_re = 1.0 / re;
    let inv_re_sin = 1.0 / (re * sin_t);
    let inv_re2 = inv_re * inv_re;
    let cor = 2.0 * c.omega_e * cos_t;

    let adv = |f: &Jet3D<S>| {
        j.v_theta.val * f.dth.scale(inv_re) + j.v_phi.val * f.dph.scale(inv_re_sin)
            + j.w.val * f.dr
    };
    let lap_h = |f: &Jet3D<S>| {
        (f.dthth + f.dth.scale(cot) + f.dphph.scale(1.0 / (sin_t * sin_t))).scale(inv_re2)
    };

    let mom_theta = j.v_theta.dt + adv(&j.v_theta) + j.p.dth.scale(inv_re / c.rho0)
        - j.v_phi.val.scale(cor)
        - lap_h(&j.v_theta).scale(c.zeta)
        - j.v_theta.drr.scale(c.eta);
    let mom_phi = j.v_phi.dt + adv(&j.v_phi) + j.p.dph.scale(inv_re_sin / c.rho0)
        + j.v_theta.val.scale(cor)
        - lap_h(&j.v_phi).scale(c.zeta)
        - j.v_phi.drr.scale(c.eta);

    // rho = rho0 [1 - beta_tau (tau - tau0) + beta_sigma (sigma - sigma0)]
    let rho = (S::from_f64(1.0) - coeffs.beta_tau * j.tau.val.shift(-c.tau0)
        + coeffs.beta_sigma * j.sal.val.shift(-c.sigma0))
    .scale(c.rho0);
    let hyd = j.p.dr + rho.scale(c.g);

    let cont = (j.v_theta.dth + j.v_theta.val.scale(cot)).scale(inv_re)
        + j.v_phi.dph.scale(inv_re_sin)
        + j.w.dr;

    let temp = j.tau.dt + adv(&j.tau) - lap_h(&j.tau).scale(c.zeta_tau) - j.tau.drr.scale(c.eta_tau);
    let sal =
        j.sal.dt + adv(&j.sal) - lap_h(&j.sal).scale(c.zeta_sigma) - j.sal.drr.scale(c.eta_sigma);

    [
        mom_theta.scale(c.residual_scales[0]),
        mom_phi.scale(c.residual_scales[1]),
        hyd.scale(c.residual_scales[2]),
        cont.scale(c.residual_scales[3]),
        temp.scale(c.residual_scales[4]),
        sal.scale(c.residual_scales[5]),
    ]
}

/// Residuals with the constants' own coefficient values; errors within
/// [`POLE_MARGIN`] of either pole.
pub fn residual_3d(j: &Jets3D<f64>, c: &PdeConstants3D, theta: f64) -> Result<[f64; 6]> {
    if theta < POLE_MARGIN || theta > std::f64::consts::PI - POLE_MARGIN {
        return Err(Error::PoleSingularity { theta, margin: POLE_MARGIN });
    }
    let coeffs = Coeffs3 { beta_tau: c.beta_tau, beta_sigma: c.beta_sigma };
    Ok(residual_3d_generic(j, &coeffs, c, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn jets_zero() -> Jets3D<f64> {
        let z = Jet3D::default();
        Jets3D { tau: z, sal: z, w: z, v_theta: z, v_phi: z, p: z }
    }

    /// Rest state: reference tracers, no motion, hydrostatic pressure.
    #[test]
    fn rest_state_has_zero_residuals() {
        let c = PdeConstants3D::rest_fixture();
        let mut j = jets_zero();
        j.tau.val = c.tau0;
        j.sal.val = c.sigma0;
        j.p.dr = -c.rho0 * c.g;
        for theta in [0.3, 1.0, 1.57, 2.8] {
            let r = residual_3d(&j, &c, theta).unwrap();
            for (k, rk) in r.iter().enumerate() {
                assert_abs_diff_eq!(*rk, 0.0, epsilon = 1e-8 * (1.0 + c.rho0 * c.g));
                let _ = k;
            }
        }
    }

    #[test]
    fn continuity_vanishes_without_motion() {
        let c = PdeConstants3D::rest_fixture();
        let mut j = jets_zero();
        j.tau.val = 14.0;
        j.sal.val = 33.0;
        j.tau.dth = 5.0;
        j.p.val = 1e4;
        let r = residual_3d(&j, &c, 1.1).unwrap();
        assert_eq!(r[3], 0.0);
    }

    #[test]
    fn pole_proximity_is_an_error() {
        let c = PdeConstants3D::rest_fixture();
        let j = jets_zero();
        assert!(matches!(
            residual_3d(&j, &c, 1e-7).unwrap_err(),
            Error::PoleSingularity { .. }
        ));
        assert!(residual_3d(&j, &c, std::f64::consts::PI - 1e-7).is_err());
    }

    /// Manufactured fields with hand-derived residuals at one point.
    ///
    /// Take theta0 with sin = s, cos = c0, and fields
    ///   v_theta = a (constant), v_phi = 0, w = 0,
    ///   tau = tau0 + k * theta  =>  tau_dth = k, others 0,
    ///   sigma = sigma0, p = 0.
    /// Hand algebra (thin shell, scales = 1):
    ///   mom_theta = 0
    ///   mom_phi   = 2 omega_e c0 a
    ///   hyd       = rho0 [1 - beta_tau k theta0] g
    ///   cont      = a c0 / (s r_e)
    ///   temp      = a k / r_e - zeta_tau k c0 / (s r_e^2)
    ///   sal       = 0
    #[test]
    fn manufactured_fields_match_hand_residuals() {
        let c = PdeConstants3D::rest_fixture();
        let (a, k, theta0) = (0.4, 3.0, 1.2f64);
        let (s, c0) = theta0.sin_cos();
        let re = EARTH_RADIUS_M;

        let mut j = jets_zero();
        j.v_theta.val = a;
        j.tau.val = c.tau0 + k * theta0;
        j.tau.dth = k;
        j.sal.val = c.sigma0;

        let r = residual_3d(&j, &c, theta0).unwrap();
        assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(r[1], 2.0 * c.omega_e * c0 * a, epsilon = 1e-8);
        assert_abs_diff_eq!(
            r[2],
            c.rho0 * (1.0 - c.beta_tau * k * theta0) * c.g,
            epsilon = 1e-8 * c.rho0 * c.g
        );
        assert_abs_diff_eq!(r[3], a * c0 / (s * re), epsilon = 1e-8);
        assert_abs_diff_eq!(
            r[4],
            a * k / re - c.zeta_tau * k * c0 / (s * re * re),
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(r[5], 0.0, epsilon = 1e-12);
    }

    /// The dual route reports the hydrostatic residual's exact sensitivity to
    /// the unknown expansion coefficients.
    #[test]
    fn beta_sensitivities_through_duals() {
        use crate::autodiff::VDual;
        let c = PdeConstants3D::rest_fixture();
        let mut j = jets_zero();
        j.tau.val = c.tau0 + 5.0;
        j.sal.val = c.sigma0 - 2.0;
        let lift = |f: &Jet3D<f64>| Jet3D::<VDual<2>> {
            val: VDual::constant(f.val),
            dt: VDual::constant(f.dt),
            dr: VDual::constant(f.dr),
            dth: VDual::constant(f.dth),
            dph: VDual::constant(f.dph),
            drr: VDual::constant(f.drr),
            dthth: VDual::constant(f.dthth),
            dphph: VDual::constant(f.dphph),
        };
        let jd = Jets3D {
            tau: lift(&j.tau),
            sal: lift(&j.sal),
            w: lift(&j.w),
            v_theta: lift(&j.v_theta),
            v_phi: lift(&j.v_phi),
            p: lift(&j.p),
        };
        let coeffs = Coeffs3 {
            beta_tau: VDual::seeded(c.beta_tau, 0, 1.0),
            beta_sigma: VDual::seeded(c.beta_sigma, 1, 1.0),
        };
        let r = residual_3d_generic(&jd, &coeffs, &c, 1.0);
        // d(hyd)/d(beta_tau) = -rho0 g (tau - tau0); d/d(beta_sigma) = rho0 g (sigma - sigma0)
        assert_abs_diff_eq!(r[2].d[0], -c.rho0 * c.g * 5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r[2].d[1], c.rho0 * c.g * (-2.0), epsilon = 1e-6);
    }
}
