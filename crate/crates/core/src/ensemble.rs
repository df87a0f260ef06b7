//! Rotated-coordinate sub-learners fused by logistic polar-angle weights.
//!
//! Each sub-learner sees the training data with coordinates (and tangent
//! velocity components) mapped through its rotation and solves the same
//! equations in its own frame. A query point is mapped through every
//! rotation, evaluated, mapped back, and the per-field results are combined
//! as a convex combination with weights from the rotated polar angle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Fields3, ObservationRecord, Var};
use crate::geometry::{rotation_schedule, Rotation};
use crate::network::{ModelParams, NetworkSpec};
use crate::training::{train_3d, Problem3D, TrainConfig, TrainOutcome, TrainTrace};

/// Which logistic weight to use. The verbatim formula is monotone in the
/// polar angle and so down-weights only one pole; the pole-symmetric variant
/// down-weights both. The verbatim form is the default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightVariant {
    PaperVerbatim,
    PoleSymmetric,
}

/// Ensemble shape: sub-learner count and weighting variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_ro: usize,
    pub weight_variant: WeightVariant,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self { n_ro: 2, weight_variant: WeightVariant::PaperVerbatim }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fusion weight at the rotated polar angle, in (0, 1).
pub fn weight(theta_r: f64, variant: WeightVariant) -> f64 {
    match variant {
        WeightVariant::PaperVerbatim => logistic(10.0 * (theta_r / std::f64::consts::PI - 0.5)),
        WeightVariant::PoleSymmetric => {
            let folded = theta_r.min(std::f64::consts::PI - theta_r);
            logistic(10.0 * (2.0 * folded / std::f64::consts::PI - 0.5))
        }
    }
}

/// Weighted mean of per-sub-learner predictions, a convex combination per
/// field. Every prediction carries the polar angle of its rotated frame.
pub fn fuse(predictions: &[(Vec<f64>, f64)], variant: WeightVariant) -> Result<Vec<f64>> {
    let first = predictions
        .first()
        .ok_or_else(|| Error::InvalidArgument("fuse needs at least one prediction".into()))?;
    if predictions.len() == 1 {
        return Ok(first.0.clone());
    }
    let n_fields = first.0.len();
    let mut acc = vec![0.0; n_fields];
    let mut wsum = 0.0;
    for (values, theta_r) in predictions {
        if values.len() != n_fields {
            return Err(Error::InvalidArgument(format!(
                "prediction arity mismatch: {} vs {n_fields}",
                values.len()
            )));
        }
        let m = weight(*theta_r, variant);
        wsum += m;
        for (a, v) in acc.iter_mut().zip(values.iter()) {
            *a += m * v;
        }
    }
    if wsum <= 0.0 {
        return Err(Error::InvalidArgument("fusion weights sum to zero".into()));
    }
    for a in &mut acc {
        *a /= wsum;
    }
    Ok(acc)
}

/// One trained sub-learner: its rotation and parameters.
pub struct SubLearner {
    pub rotation: Rotation,
    pub params: ModelParams,
    pub trace: TrainTrace,
}

/// The fused predictor over rotated sub-learners.
pub struct EnsemblePredictor {
    pub spec: EnsembleSpec,
    pub subs: Vec<SubLearner>,
    norm: crate::geometry::Normalizer,
}

impl EnsemblePredictor {
    pub fn new(spec: EnsembleSpec, subs: Vec<SubLearner>, norm: crate::geometry::Normalizer) -> Self {
        Self { spec, subs, norm }
    }

    /// Predict all six fields at a physical point `(r, theta, phi, t)`.
    /// Each sub-learner is queried in its own frame; tangent velocity
    /// components are mapped back before fusing.
    pub fn predict(&self, p: &[f64; 4]) -> Result<Fields3> {
        let mut per_sub = Vec::with_capacity(self.subs.len());
        for sub in &self.subs {
            // identity rotations skip the transform entirely, so a single
            // sub-learner fuses to itself bitwise
            let identity = sub.rotation.angle == 0.0;
            let (theta_r, phi_r) = if identity { (p[1], p[2]) } else { sub.rotation.rotate(p[1], p[2]) };
            let mut xn = [0.0; 4];
            self.norm.normalize(&[p[0], theta_r, phi_r, p[3]], &mut xn)?;
            let out = sub.params.forward(&xn)?;
            // out is in the rotated frame's tangent basis; rotate v back
            let (vt, vp) = if identity {
                (out[3], out[4])
            } else {
                sub.rotation.inverse().rotate_tangent(theta_r, phi_r, out[3], out[4])
            };
            per_sub.push((vec![out[0], out[1], out[2], vt, vp, out[5]], theta_r));
        }
        let fused = fuse(&per_sub, self.spec.weight_variant)?;
        Ok(Fields3 {
            tau: fused[0],
            sal: fused[1],
            w: fused[2],
            v_theta: fused[3],
            v_phi: fused[4],
            p: fused[5],
        })
    }
}

/// Map observations into a rotated frame: coordinates always, tangent
/// components for the horizontal velocity pair.
///
/// Velocity components transform jointly, so both must be observed at the
/// same location to rotate them; the 3D generator emits them together.
pub fn rotate_observations(
    obs: &[ObservationRecord],
    rotation: &Rotation,
) -> Result<Vec<ObservationRecord>> {
    let mut out = Vec::with_capacity(obs.len());
    let mut i = 0;
    while i < obs.len() {
        let rec = &obs[i];
        let (theta_r, phi_r) = rotation.rotate(rec.point[1], rec.point[2]);
        let point = [rec.point[0], theta_r, phi_r, rec.point[3]];
        match rec.var {
            Var::VTheta | Var::VPhi => {
                let pair = obs.get(i + 1).filter(|n| n.point == rec.point);
                let (vt, vp) = match (rec.var, pair) {
                    (Var::VTheta, Some(n)) if n.var == Var::VPhi => (rec.value, n.value),
                    (Var::VPhi, Some(n)) if n.var == Var::VTheta => (n.value, rec.value),
                    _ => {
                        return Err(Error::InvalidArgument(
                            "rotating velocity observations requires v_theta and v_phi at the same location"
                                .into(),
                        ))
                    }
                };
                let (vt_r, vp_r) = rotation.rotate_tangent(rec.point[1], rec.point[2], vt, vp);
                out.push(ObservationRecord { point, var: Var::VTheta, value: vt_r, weight: rec.weight });
                out.push(ObservationRecord { point, var: Var::VPhi, value: vp_r, weight: rec.weight });
                i += 2;
            }
            _ => {
                out.push(ObservationRecord { point, ..*rec });
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Outcome of one ensemble training run.
pub struct EnsembleOutcome {
    pub predictor: EnsemblePredictor,
    pub outcomes: Vec<TrainOutcome>,
}

/// Train `n_ro` sub-learners on rotated data and return the fused predictor.
/// The rotation schedule starts at the identity, so the first sub-learner
/// sees the data unchanged; with `n_ro = 1` the fused predictor reproduces
/// that single sub-learner bitwise.
pub fn train_ensemble(
    problem: &Problem3D,
    net: &NetworkSpec,
    obs: &[ObservationRecord],
    cfg: &TrainConfig,
    spec: EnsembleSpec,
) -> Result<EnsembleOutcome> {
    if spec.n_ro > 1 {
        // Rotations map the sphere onto itself; rotated data stays inside the
        // domain only when the angular extent covers the whole sphere.
        let d = &problem.domain;
        let full_theta = d.theta.lo <= 1e-9 && d.theta.hi >= std::f64::consts::PI - 1e-9;
        let full_phi = d.phi.lo <= 1e-9 && d.phi.hi >= 2.0 * std::f64::consts::PI - 1e-6;
        if !(full_theta && full_phi) {
            return Err(Error::InvalidArgument(format!(
                "rotation ensemble (n_ro = {}) needs full-sphere angular coverage; \
                 got theta [{}, {}], phi [{}, {}]",
                spec.n_ro, d.theta.lo, d.theta.hi, d.phi.lo, d.phi.hi
            )));
        }
    }
    let rotations = rotation_schedule(spec.n_ro)?;
    let mut subs = Vec::with_capacity(rotations.len());
    let mut outcomes = Vec::with_capacity(rotations.len());
    for (k, rotation) in rotations.iter().enumerate() {
        let rotated = rotate_observations(obs, rotation)?;
        let sub_cfg = TrainConfig { seed: cfg.seed.wrapping_add(k as u64), ..cfg.clone() };
        let outcome = train_3d(problem, net, &rotated, &sub_cfg).map_err(|e| {
            Error::InvalidArgument(format!("sub-learner {k} (angle {}): {e}", rotation.angle))
        })?;
        if let Some(ctx) = &outcome.divergence {
            return Err(Error::Diverged { iter: 0, context: format!("sub-learner {k}: {ctx}") });
        }
        subs.push(SubLearner {
            rotation: *rotation,
            params: outcome.params.clone(),
            trace: outcome.trace.clone(),
        });
        outcomes.push(outcome);
    }
    Ok(EnsembleOutcome {
        predictor: EnsemblePredictor { spec, subs, norm: problem.domain.normalizer() },
        outcomes,
    })
}

// ---------------------------------------------------------------------------
// Snapshot format: sub-learner snapshots plus rotation angles and the
// weighting variant.
// ---------------------------------------------------------------------------

pub const ENSEMBLE_FORMAT: &str = "mdrf-ensemble-v1";

#[derive(Serialize, Deserialize)]
struct SubFile {
    angle: f64,
    spec: NetworkSpec,
    pde_names: Vec<String>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    format: String,
    weight_variant: WeightVariant,
    subs: Vec<SubFile>,
}

pub fn save_ensemble(pred: &EnsemblePredictor, path: &std::path::Path) -> Result<()> {
    let file = EnsembleFile {
        format: ENSEMBLE_FORMAT.to_string(),
        weight_variant: pred.spec.weight_variant,
        subs: pred
            .subs
            .iter()
            .map(|s| SubFile {
                angle: s.rotation.angle,
                spec: s.params.spec.clone(),
                pde_names: s.params.pde_names.clone(),
                values: s.params.values.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&file).expect("ensemble serialization");
    crate::io::write_text(path, &json)
}

pub fn load_ensemble(
    path: &std::path::Path,
    domain: &crate::geometry::Domain3D,
) -> Result<EnsemblePredictor> {
    let text = crate::io::read_text(path)?;
    let file: EnsembleFile = serde_json::from_str(&text)
        .map_err(|e| Error::SnapshotMismatch(format!("{}: {e}", path.display())))?;
    if file.format != ENSEMBLE_FORMAT {
        return Err(Error::SnapshotMismatch(format!(
            "format `{}`, expected `{ENSEMBLE_FORMAT}`",
            file.format
        )));
    }
    if file.subs.is_empty() {
        return Err(Error::SnapshotMismatch("ensemble snapshot has no sub-learners".into()));
    }
    let n_ro = file.subs.len();
    let subs = file
        .subs
        .into_iter()
        .map(|s| {
            let layout = crate::network::ParamLayout::new(&s.spec, s.pde_names.len());
            if s.values.len() != layout.total {
                return Err(Error::SnapshotMismatch(format!(
                    "{} values for a layout of {}",
                    s.values.len(),
                    layout.total
                )));
            }
            Ok(SubLearner {
                rotation: Rotation { angle: s.angle },
                params: ModelParams {
                    spec: s.spec,
                    layout,
                    values: s.values,
                    pde_names: s.pde_names,
                },
                trace: TrainTrace::default(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsemblePredictor {
        spec: EnsembleSpec { n_ro, weight_variant: file.weight_variant },
        subs,
        norm: domain.normalizer(),
    })
}
