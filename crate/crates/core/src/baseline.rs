//! Gaussian-process-regression baseline: zero-mean GP with a squared-
//! exponential kernel, exact dense inference via Cholesky, one independent
//! model per observed variable. Purely data-driven — it sees no equations,
//! which is the point of the comparison.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ObservationRecord, Var};

/// Kernel hyperparameters: per-dimension length scales and observation-noise
/// variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GprHyper {
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl GprHyper {
    pub fn isotropic(dim: usize, length: f64, noise_variance: f64) -> Self {
        Self { length_scales: vec![length; dim], noise_variance }
    }

    /// Study defaults: length scale 0.2 per coordinate, noise 1e-6.
    pub fn default_for_dim(dim: usize) -> Self {
        Self::isotropic(dim, 0.2, 1e-6)
    }
}

/// Fixed hyperparameters or a small grid search scored by held-out RMSE.
#[derive(Clone, Debug)]
pub enum GprFitSpec {
    Fixed(GprHyper),
    GridSearch {
        lengths: Vec<f64>,
        noise_variances: Vec<f64>,
        holdout_frac: f64,
        seed: u64,
    },
}

/// Hard cap on training points; inference is an exact dense solve.
pub const TRAIN_CAP: usize = 2_000;

fn kernel(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((x, y), l) in a.iter().zip(b.iter()).zip(ls.iter()) {
        let d = (x - y) / l;
        s += d * d;
    }
    (-0.5 * s).exp()
}

/// In-place lower Cholesky factor of a symmetric positive definite matrix.
fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Indefinite { pivot: j });
        }
        let dj = d.sqrt();
        a[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / dj;
        }
    }
    // zero strict upper triangle for cleanliness
    for i in 0..n {
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

fn solve_lower(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

fn solve_lower_t(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Exact GP posterior for one variable.
pub struct GprVarModel {
    pub hyper: GprHyper,
    dim: usize,
    inputs: Vec<[f64; 4]>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

impl GprVarModel {
    fn fit(inputs: Vec<[f64; 4]>, targets: &[f64], dim: usize, hyper: GprHyper) -> Result<Self> {
        let n = inputs.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel(&inputs[i][..dim], &inputs[j][..dim], &hyper.length_scales);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
            k[i * n + i] += hyper.noise_variance;
        }
        cholesky(&mut k, n)?;
        let mut alpha = targets.to_vec();
        solve_lower(&k, n, &mut alpha);
        solve_lower_t(&k, n, &mut alpha);
        Ok(Self { hyper, dim, inputs, chol: k, alpha })
    }

    /// Posterior mean and latent variance at one point.
    pub fn predict(&self, point: &[f64]) -> (f64, f64) {
        let n = self.inputs.len();
        let mut kstar = vec![0.0; n];
        for (ks, xi) in kstar.iter_mut().zip(self.inputs.iter()) {
            *ks = kernel(point, &xi[..self.dim], &self.hyper.length_scales);
        }
        let mean = kstar.iter().zip(self.alpha.iter()).map(|(a, b)| a * b).sum();
        let mut v = kstar;
        solve_lower(&self.chol, n, &mut v);
        let explained: f64 = v.iter().map(|x| x * x).sum();
        let variance = (1.0 - explained).max(0.0); // k(x,x) = 1 for this kernel
        (mean, variance)
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }
}

/// Per-variable GP models over a shared input dimensionality.
pub struct GprModel {
    pub dim: usize,
    pub vars: BTreeMap<Var, GprVarModel>,
}

impl GprModel {
    pub fn predict(&self, var: Var, point: &[f64]) -> Option<(f64, f64)> {
        self.vars.get(&var).map(|m| m.predict(point))
    }
}

fn holdout_rmse(
    train_in: &[[f64; 4]],
    train_y: &[f64],
    test_in: &[[f64; 4]],
    test_y: &[f64],
    dim: usize,
    hyper: &GprHyper,
) -> Result<f64> {
    let model = GprVarModel::fit(train_in.to_vec(), train_y, dim, hyper.clone())?;
    let mut se = 0.0;
    for (x, y) in test_in.iter().zip(test_y.iter()) {
        let (m, _) = model.predict(&x[..dim]);
        se += (m - y) * (m - y);
    }
    Ok((se / test_y.len() as f64).sqrt())
}

/// Fit one GP per requested variable. Variables without observations are
/// rejected with an explicit no-data error — a purely data-driven method has
/// nothing to say about them.
pub fn gpr_fit(
    obs: &[ObservationRecord],
    dim: usize,
    variables: &[Var],
    spec: &GprFitSpec,
) -> Result<GprModel> {
    let mut by_var: BTreeMap<Var, (Vec<[f64; 4]>, Vec<f64>)> = BTreeMap::new();
    for rec in obs {
        let entry = by_var.entry(rec.var).or_default();
        entry.0.push(rec.point);
        entry.1.push(rec.value);
    }
    let mut vars = BTreeMap::new();
    for &var in variables {
        let (inputs, targets) = by_var
            .remove(&var)
            .ok_or_else(|| Error::NoData(var.csv_name().to_string()))?;
        if inputs.len() > TRAIN_CAP {
            return Err(Error::InvalidArgument(format!(
                "{} training points for {var}; exact solve is capped at {TRAIN_CAP}",
                inputs.len()
            )));
        }
        let hyper = match spec {
            GprFitSpec::Fixed(h) => h.clone(),
            GprFitSpec::GridSearch { lengths, noise_variances, holdout_frac, seed } => {
                let n = inputs.len();
                let n_hold = ((n as f64 * holdout_frac) as usize).clamp(1, n - 1);
                let mut order: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                order.shuffle(&mut rng);
                let (hold, train) = order.split_at(n_hold);
                let pick = |ix: &[usize]| -> (Vec<[f64; 4]>, Vec<f64>) {
                    (ix.iter().map(|&i| inputs[i]).collect(), ix.iter().map(|&i| targets[i]).collect())
                };
                let (hx, hy) = pick(hold);
                let (tx, ty) = pick(train);
                let mut best: Option<(f64, GprHyper)> = None;
                for &l in lengths {
                    for &nv in noise_variances {
                        let hyper = GprHyper::isotropic(dim, l, nv);
                        if let Ok(rmse) = holdout_rmse(&tx, &ty, &hx, &hy, dim, &hyper) {
                            if best.as_ref().map(|(b, _)| rmse < *b).unwrap_or(true) {
                                best = Some((rmse, hyper));
                            }
                        }
                    }
                }
                best.ok_or_else(|| {
                    Error::InvalidArgument("grid search found no factorizable candidate".into())
                })?
                .1
            }
        };
        vars.insert(var, GprVarModel::fit(inputs, &targets, dim, hyper)?);
    }
    Ok(GprModel { dim, vars })
}
