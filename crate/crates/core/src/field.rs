//! Field identifiers and value tuples shared across the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A modeled ocean variable. 2D mode uses `{tau, v, w, p}`, 3D mode
/// `{tau, sal, w, v_theta, v_phi, p}`; density is derived, never a subnet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Var {
    Tau,
    Sal,
    W,
    VTheta,
    VPhi,
    P,
    /// Horizontal velocity of the 2D system.
    V,
}

impl Var {
    pub fn csv_name(&self) -> &'static str {
        match self {
            Var::Tau => "tau",
            Var::Sal => "sal",
            Var::W => "w",
            Var::VTheta => "v_theta",
            Var::VPhi => "v_phi",
            Var::P => "p",
            Var::V => "v",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "tau" => Var::Tau,
            "sal" => Var::Sal,
            "w" => Var::W,
            "v_theta" => Var::VTheta,
            "v_phi" => Var::VPhi,
            "p" => Var::P,
            "v" => Var::V,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown variable `{other}`"
                )))
            }
        })
    }

    /// Canonical subnet order of the 2D system.
    pub const ORDER_2D: [Var; 4] = [Var::Tau, Var::V, Var::W, Var::P];
    /// Canonical subnet order of the 3D system.
    pub const ORDER_3D: [Var; 6] = [Var::Tau, Var::Sal, Var::W, Var::VTheta, Var::VPhi, Var::P];
}

impl std::fmt::Display for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.csv_name())
    }
}

/// Field values of the 2D system at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fields2 {
    pub tau: f64,
    pub v: f64,
    pub w: f64,
    pub p: f64,
}

impl Fields2 {
    pub fn get(&self, var: Var) -> Option<f64> {
        match var {
            Var::Tau => Some(self.tau),
            Var::V => Some(self.v),
            Var::W => Some(self.w),
            Var::P => Some(self.p),
            _ => None,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.tau, self.v, self.w, self.p]
    }
}

/// Field values of the 3D system at one point, density derived separately.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fields3 {
    pub tau: f64,
    pub sal: f64,
    pub w: f64,
    pub v_theta: f64,
    pub v_phi: f64,
    pub p: f64,
}

impl Fields3 {
    pub fn get(&self, var: Var) -> Option<f64> {
        match var {
            Var::Tau => Some(self.tau),
            Var::Sal => Some(self.sal),
            Var::W => Some(self.w),
            Var::VTheta => Some(self.v_theta),
            Var::VPhi => Some(self.v_phi),
            Var::P => Some(self.p),
            Var::V => None,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.tau, self.sal, self.w, self.v_theta, self.v_phi, self.p]
    }
}

/// One measurement: a space-time location, the observed variable, its value,
/// and an optional quadrature weight override.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationRecord {
    /// `(x, z, t, 0)` in 2D mode, `(r, theta, phi, t)` in 3D mode.
    pub point: [f64; 4],
    pub var: Var,
    pub value: f64,
    pub weight: Option<f64>,
}
