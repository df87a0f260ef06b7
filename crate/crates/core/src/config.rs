//! Run configuration: a JSON document, schema-checked on load (unknown keys
//! rejected, with the offending path in the error), covering the domain, the
//! network shape, physics constants with unknown flags, sampling counts,
//! the training schedule, and the ensemble shape.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::geometry::{Domain2D, Domain3D};
use crate::network::NetworkSpec;
use crate::oracle::RoundedRect;
use crate::physics::threed::PdeConstants3D;
use crate::physics::{IcbcSpec2D, PdeConstants2D};
use crate::training::{SamplingPlan, TrainConfig};

/// Network shape knobs; the subnet set itself is fixed per mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub shared_width: usize,
    /// Depth of the tracer subnets (temperature, salinity).
    pub tracer_depth: usize,
    /// Depth of the velocity and pressure subnets.
    pub dynamic_depth: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { shared_width: 128, tracer_depth: 3, dynamic_depth: 5 }
    }
}

impl NetworkConfig {
    pub fn to_spec_2d(&self) -> NetworkSpec {
        let mut spec = NetworkSpec::sized_2d(self.shared_width, self.tracer_depth, self.dynamic_depth);
        spec.shared_width = self.shared_width;
        spec
    }

    pub fn to_spec_3d(&self) -> NetworkSpec {
        let mut spec = NetworkSpec::sized_3d(self.shared_width, self.tracer_depth, self.dynamic_depth);
        spec.shared_width = self.shared_width;
        spec
    }
}

fn mode_2d() -> String {
    "2d".into()
}

fn mode_3d() -> String {
    "3d".into()
}

/// 2D run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config2D {
    #[serde(default = "mode_2d")]
    pub mode: String,
    #[serde(default = "Domain2D::unit")]
    pub domain: Domain2D,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub physics: PdeConstants2D,
    /// Boundary/initial data; defaults to the closed-form vortex data built
    /// from the physics constants.
    #[serde(default)]
    pub icbc: Option<IcbcSpec2D>,
    #[serde(default)]
    pub sampling: SamplingPlan,
    #[serde(default)]
    pub training: TrainConfig,
    /// Observation mask recorded for region reports.
    #[serde(default)]
    pub data_mask: Option<RoundedRect>,
}

impl Default for Config2D {
    fn default() -> Self {
        Self {
            mode: mode_2d(),
            domain: Domain2D::unit(),
            network: NetworkConfig::default(),
            physics: PdeConstants2D::default(),
            icbc: None,
            sampling: SamplingPlan::default(),
            training: TrainConfig::default(),
            data_mask: None,
        }
    }
}

/// 3D run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config3D {
    #[serde(default = "mode_3d")]
    pub mode: String,
    pub domain: Domain3D,
    #[serde(default)]
    pub network: NetworkConfig,
    pub physics: PdeConstants3D,
    #[serde(default)]
    pub sampling: SamplingPlan,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
}

/// A complete run configuration, dispatched on the document's `mode` key.
#[derive(Clone, Debug, PartialEq)]
pub enum RunConfig {
    TwoD(Config2D),
    ThreeD(Config3D),
}

impl RunConfig {
    pub fn to_json_pretty(&self) -> String {
        match self {
            RunConfig::TwoD(c) => serde_json::to_string_pretty(c).expect("config serialization"),
            RunConfig::ThreeD(c) => serde_json::to_string_pretty(c).expect("config serialization"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            RunConfig::TwoD(c) => {
                check(c.mode == "2d", "mode", "\"2d\"")?;
                check(c.network.tracer_depth >= 2, "network.tracer_depth", ">= 2")?;
                check(c.network.dynamic_depth >= 2, "network.dynamic_depth", ">= 2")?;
                check(c.network.shared_width >= 1, "network.shared_width", ">= 1")?;
                check(c.sampling.n_pde >= 1, "sampling.n_pde", ">= 1")?;
                check(c.sampling.n_icbc_per_piece >= 1, "sampling.n_icbc_per_piece", ">= 1")?;
                for (name, iv) in [
                    ("domain.x", c.domain.x),
                    ("domain.z", c.domain.z),
                    ("domain.t", c.domain.t),
                ] {
                    check(iv.lo < iv.hi && iv.lo.is_finite() && iv.hi.is_finite(), name, "a nonempty interval")?;
                }
                if let Some(mask) = &c.data_mask {
                    mask.validate()?;
                }
                if let Some(icbc) = &c.icbc {
                    icbc.validate()?;
                }
                c.training
                    .validate()
                    .map_err(|e| Error::Config { path: "training".into(), message: e.to_string() })?;
                c.network
                    .to_spec_2d()
                    .validate()
                    .map_err(|e| Error::Config { path: "network".into(), message: e.to_string() })
            }
            RunConfig::ThreeD(c) => {
                check(c.mode == "3d", "mode", "\"3d\"")?;
                c.domain
                    .validate()
                    .map_err(|e| Error::Config { path: "domain".into(), message: e.to_string() })?;
                c.physics
                    .validate()
                    .map_err(|e| Error::Config { path: "physics".into(), message: e.to_string() })?;
                check(c.ensemble.n_ro >= 1, "ensemble.n_ro", ">= 1")?;
                c.training
                    .validate()
                    .map_err(|e| Error::Config { path: "training".into(), message: e.to_string() })?;
                c.network
                    .to_spec_3d()
                    .validate()
                    .map_err(|e| Error::Config { path: "network".into(), message: e.to_string() })
            }
        }
    }

    /// Effective boundary data of a 2D run.
    pub fn icbc_2d(c: &Config2D) -> IcbcSpec2D {
        c.icbc
            .clone()
            .unwrap_or_else(|| IcbcSpec2D::taylor_green(c.physics.source_params()))
    }
}

fn check(ok: bool, path: &str, expect: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config { path: path.into(), message: format!("must be {expect}") })
    }
}

/// Parse and validate a configuration document; schema violations carry the
/// JSON path of the offending field.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config {
        path: ".".into(),
        message: e.to_string(),
    })?;
    let mode = probe
        .get("mode")
        .and_then(|m| m.as_str())
        .ok_or_else(|| Error::Config {
            path: "mode".into(),
            message: "missing or non-string; expected \"2d\" or \"3d\"".into(),
        })?;
    let path_err = |e: serde_path_to_error::Error<serde_json::Error>| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    };
    let cfg = match mode {
        "2d" => {
            let de = &mut serde_json::Deserializer::from_str(text);
            RunConfig::TwoD(serde_path_to_error::deserialize(de).map_err(path_err)?)
        }
        "3d" => {
            let de = &mut serde_json::Deserializer::from_str(text);
            RunConfig::ThreeD(serde_path_to_error::deserialize(de).map_err(path_err)?)
        }
        other => {
            return Err(Error::Config {
                path: "mode".into(),
                message: format!("unknown mode `{other}`; expected \"2d\" or \"3d\""),
            })
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&crate::io::read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_2d_config_parses_with_defaults() {
        let cfg = parse_config(r#"{ "mode": "2d" }"#).unwrap();
        match cfg {
            RunConfig::TwoD(c) => {
                assert_eq!(c.network.shared_width, 128);
                assert_eq!(c.sampling.n_pde, 10_000);
                assert_eq!(c.training.step1_iters, 5_000);
                assert_eq!(c.physics.zeta_unknown, true);
            }
            _ => panic!("expected 2d"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let err = parse_config(r#"{ "mode": "2d", "network": { "shared_width": 8, "bogus": 1 } }"#)
            .unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert!(path.contains("network"), "{path}");
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn invalid_values_name_their_field() {
        let err = parse_config(
            r#"{ "mode": "2d", "training": { "step1_iters": 1, "step2_iters": 0,
                 "learning_rate": -0.5, "adam_beta1": 0.9, "adam_beta2": 0.999,
                 "adam_eps": 1e-8, "lambda1": 1.0, "lambda2": 1.0, "seed": 0,
                 "trace_every": 100, "unknowns": [] } }"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "training"));
    }

    #[test]
    fn full_2d_config_roundtrips() {
        let cfg = RunConfig::TwoD(Config2D {
            data_mask: Some(RoundedRect { cx: 0.5, cz: 0.5, half_w: 0.35, half_h: 0.35, radius: 0.1 }),
            ..Config2D::default()
        });
        cfg.validate().unwrap();
        let json = cfg.to_json_pretty();
        let back = parse_config(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn three_d_config_parses() {
        let json = r#"{
            "mode": "3d",
            "domain": {
                "r": { "lo": 6369000.0, "hi": 6371000.0 },
                "theta": { "lo": 0.5, "hi": 2.5 },
                "phi": { "lo": 0.0, "hi": 6.28 },
                "t": { "lo": 0.0, "hi": 86400.0 }
            },
            "physics": {
                "rho0": 1025.0, "tau0": 10.0, "sigma0": 35.0,
                "omega_e": 7.2921e-5, "g": 9.81,
                "eta": 1e-4, "zeta": 100.0,
                "eta_tau": 1e-5, "zeta_tau": 100.0,
                "eta_sigma": 1e-5, "zeta_sigma": 100.0,
                "beta_tau": 0.0, "beta_sigma": 0.0,
                "beta_tau_unknown": true, "beta_sigma_unknown": true,
                "alpha": 0.001,
                "residual_scales": [1.0, 1.0, 0.0001, 1.0, 1.0, 1.0],
                "icbc": {
                    "lateral": "dirichlet_velocity_neumann_tracer",
                    "i_v_theta": { "constant": 0.0 },
                    "i_v_phi": { "constant": 0.0 },
                    "i_tau": { "expr": "10 + sin(theta)" },
                    "i_sigma": { "constant": 35.0 },
                    "delta_v_theta": { "constant": 0.0 },
                    "delta_v_phi": { "constant": 0.0 },
                    "tau_a": { "constant": 10.0 },
                    "b_tau": { "constant": 10.0 },
                    "b_sigma": { "constant": 35.0 }
                }
            },
            "ensemble": { "n_ro": 2, "weight_variant": "paper_verbatim" }
        }"#;
        let cfg = parse_config(json).unwrap();
        match cfg {
            RunConfig::ThreeD(c) => {
                assert_eq!(c.ensemble.n_ro, 2);
                assert_eq!(c.physics.residual_scales[2], 1e-4);
            }
            _ => panic!("expected 3d"),
        }
    }
}
