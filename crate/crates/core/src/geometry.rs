//! Equation domains, coordinate conventions, normalization, and the
//! prime-meridian rotation family used by the ensemble.
//!
//! Coordinate order is fixed throughout the crate: `(x, z, t)` in 2D mode and
//! `(r, theta, phi, t)` in 3D mode, time always last. `theta` is the polar
//! angle in `[0, pi]`, `phi` the azimuthal angle in `[0, 2*pi)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6.371e6;

/// A nonempty closed interval with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "interval [{lo}, {hi}] must be finite and nonempty with lo < hi"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Dimensionless Cartesian box for the 2D system: `x`, `z`, plus time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain2D {
    pub x: Interval,
    pub z: Interval,
    pub t: Interval,
}

impl Domain2D {
    /// Unit box in space and time; the vortex fields have period 1 in x and z.
    pub fn unit() -> Self {
        let u = Interval { lo: 0.0, hi: 1.0 };
        Self { x: u, z: u, t: u }
    }

    pub fn intervals(&self) -> [Interval; 3] {
        [self.x, self.z, self.t]
    }

    pub fn coord_names() -> [&'static str; 3] {
        ["x", "z", "t"]
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        self.x.contains(p[0]) && self.z.contains(p[1]) && self.t.contains(p[2])
    }

    pub fn normalizer(&self) -> Normalizer {
        Normalizer::from_intervals(&self.intervals(), &Self::coord_names())
    }
}

/// Spherical shell sector for the 3D system: radial distance `r = r_e + r_a`
/// (with `r_a <= 0` below the surface), polar angle, azimuthal angle, time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain3D {
    pub r: Interval,
    pub theta: Interval,
    pub phi: Interval,
    pub t: Interval,
}

impl Domain3D {
    pub fn validate(&self) -> Result<()> {
        if self.r.hi > EARTH_RADIUS_M + 1.0 {
            return Err(Error::InvalidArgument(format!(
                "r range [{}, {}] extends above the surface r_e = {EARTH_RADIUS_M}",
                self.r.lo, self.r.hi
            )));
        }
        if self.theta.lo < 0.0 || self.theta.hi > std::f64::consts::PI {
            return Err(Error::InvalidArgument(format!(
                "theta range [{}, {}] must lie within [0, pi]",
                self.theta.lo, self.theta.hi
            )));
        }
        if self.phi.lo < 0.0 || self.phi.hi > 2.0 * std::f64::consts::PI {
            return Err(Error::InvalidArgument(format!(
                "phi range [{}, {}] must lie within [0, 2*pi]",
                self.phi.lo, self.phi.hi
            )));
        }
        Ok(())
    }

    pub fn intervals(&self) -> [Interval; 4] {
        [self.r, self.theta, self.phi, self.t]
    }

    pub fn coord_names() -> [&'static str; 4] {
        ["r", "theta", "phi", "t"]
    }

    pub fn contains(&self, p: &[f64; 4]) -> bool {
        self.intervals()
            .iter()
            .zip(p.iter())
            .all(|(iv, &v)| iv.contains(v))
    }

    pub fn normalizer(&self) -> Normalizer {
        Normalizer::from_intervals(&self.intervals(), &Self::coord_names())
    }
}

/// Per-coordinate affine maps from physical units onto `[-1, 1]`.
///
/// Raw units (e.g. `r` near 6.371e6 m) are untrainable; every network input
/// goes through one of these. `forward` followed by `inverse` is the identity
/// to 1e-12 relative error.
#[derive(Clone, Debug)]
pub struct Normalizer {
    names: Vec<&'static str>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Normalizer {
    pub fn from_intervals(ivs: &[Interval], names: &[&'static str]) -> Self {
        assert_eq!(ivs.len(), names.len());
        Self {
            names: names.to_vec(),
            lo: ivs.iter().map(|iv| iv.lo).collect(),
            hi: ivs.iter().map(|iv| iv.hi).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Map a physical point onto `[-1, 1]^dim`. Errors if any coordinate lies
    /// outside the domain the normalizer was built from.
    pub fn normalize(&self, phys: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(phys.len(), self.dim());
        for i in 0..self.dim() {
            let (lo, hi) = (self.lo[i], self.hi[i]);
            if phys[i] < lo || phys[i] > hi {
                return Err(Error::OutOfDomain {
                    coord: self.names[i],
                    value: phys[i],
                    lo,
                    hi,
                });
            }
            out[i] = 2.0 * (phys[i] - lo) / (hi - lo) - 1.0;
        }
        Ok(())
    }

    /// Inverse of [`Normalizer::normalize`].
    pub fn denormalize(&self, unit: &[f64], out: &mut [f64]) {
        debug_assert_eq!(unit.len(), self.dim());
        for i in 0..self.dim() {
            out[i] = self.lo[i] + 0.5 * (unit[i] + 1.0) * (self.hi[i] - self.lo[i]);
        }
    }

    /// `d(normalized)/d(physical)` for coordinate `i`; constant per coordinate.
    pub fn deriv_scale(&self, i: usize) -> f64 {
        2.0 / (self.hi[i] - self.lo[i])
    }
}

/// One piece of the space-time boundary. `Surface`/`Bottom` are the top and
/// bottom of the vertical coordinate (`z` in 2D, `r` in 3D), `Initial` the
/// `t = t_lo` slab, the lateral tags the sides of the horizontal extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Initial,
    Surface,
    Bottom,
    LateralXLo,
    LateralXHi,
    LateralThetaLo,
    LateralThetaHi,
    LateralPhiLo,
    LateralPhiHi,
}

impl BoundaryTag {
    pub const PIECES_2D: [BoundaryTag; 5] = [
        BoundaryTag::Initial,
        BoundaryTag::Surface,
        BoundaryTag::Bottom,
        BoundaryTag::LateralXLo,
        BoundaryTag::LateralXHi,
    ];

    pub const PIECES_3D: [BoundaryTag; 7] = [
        BoundaryTag::Initial,
        BoundaryTag::Surface,
        BoundaryTag::Bottom,
        BoundaryTag::LateralThetaLo,
        BoundaryTag::LateralThetaHi,
        BoundaryTag::LateralPhiLo,
        BoundaryTag::LateralPhiHi,
    ];
}

/// Rotation of the spherical coordinate system about the equatorial axis
/// through longitudes +-pi/2, so the poles travel along the prime meridian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    /// Rotation angle in radians.
    pub angle: f64,
}

/// Unit direction vector of the point `(theta, phi)` in the frame where the
/// x axis pierces the prime meridian at the equator and z the north pole.
pub fn unit_vector(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Recover `(theta, phi)` with `theta` in `[0, pi]`, `phi` in `[0, 2*pi)`.
pub fn spherical_angles(v: [f64; 3]) -> (f64, f64) {
    let theta = v[2].clamp(-1.0, 1.0).acos();
    let mut phi = v[1].atan2(v[0]);
    if phi < 0.0 {
        phi += 2.0 * std::f64::consts::PI;
    }
    if phi >= 2.0 * std::f64::consts::PI {
        phi = 0.0;
    }
    (theta, phi)
}

impl Rotation {
    pub fn identity() -> Self {
        Self { angle: 0.0 }
    }

    pub fn inverse(&self) -> Self {
        Self { angle: -self.angle }
    }

    /// Apply the rotation to the direction of `(theta, phi)`: the rotation
    /// matrix is `R_y(angle)` in the frame of [`unit_vector`].
    pub fn rotate(&self, theta: f64, phi: f64) -> (f64, f64) {
        let (sa, ca) = self.angle.sin_cos();
        let u = unit_vector(theta, phi);
        let v = [ca * u[0] + sa * u[2], u[1], -sa * u[0] + ca * u[2]];
        spherical_angles(v)
    }

    /// Transform local tangent components `(v_theta, v_phi)` at `(theta, phi)`
    /// into the rotated frame's tangent basis at the image point.
    ///
    /// Undefined within floating-point noise of either frame's poles, where
    /// the tangent basis degenerates; callers keep samples off the poles.
    pub fn rotate_tangent(
        &self,
        theta: f64,
        phi: f64,
        v_theta: f64,
        v_phi: f64,
    ) -> (f64, f64) {
        let (sa, ca) = self.angle.sin_cos();
        let rot = |u: [f64; 3]| [ca * u[0] + sa * u[2], u[1], -sa * u[0] + ca * u[2]];

        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let e_theta = [ct * cp, ct * sp, -st];
        let e_phi = [-sp, cp, 0.0];

        let (theta_r, phi_r) = self.rotate(theta, phi);
        let (st_r, ct_r) = theta_r.sin_cos();
        let (sp_r, cp_r) = phi_r.sin_cos();
        let f_theta = [ct_r * cp_r, ct_r * sp_r, -st_r];
        let f_phi = [-sp_r, cp_r, 0.0];

        let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let img_theta = rot(e_theta);
        let img_phi = rot(e_phi);
        (
            v_theta * dot(img_theta, f_theta) + v_phi * dot(img_phi, f_theta),
            v_theta * dot(img_theta, f_phi) + v_phi * dot(img_phi, f_phi),
        )
    }
}

/// `n_ro` rotations evenly spaced in angle over `[0, pi)`, the first being
/// the identity.
pub fn rotation_schedule(n_ro: usize) -> Result<Vec<Rotation>> {
    if n_ro == 0 {
        return Err(Error::InvalidArgument(
            "rotation schedule needs n_ro >= 1".into(),
        ));
    }
    Ok((0..n_ro)
        .map(|k| Rotation {
            angle: k as f64 * std::f64::consts::PI / n_ro as f64,
        })
        .collect())
}
