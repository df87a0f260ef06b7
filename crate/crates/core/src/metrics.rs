//! Cross-model evaluation: region RMSE with Monte Carlo standard errors,
//! RMSE-over-time curves, and binned spatial error profiles.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Fields2, Var};
use crate::geometry::{Domain2D, Interval, Normalizer};
use crate::network::{ForwardScratch, ModelParams};
use crate::oracle::{self, RoundedRect, TaylorGreenParams};

/// Anything that can predict field values at a space-time point. A model may
/// be unable to produce some variable at all (a data-only baseline never saw
/// pressure); that is reported as absent, never as zero.
pub trait Predictor: Sync {
    fn name(&self) -> &str;
    fn predict(&self, point: &[f64; 4], var: Var) -> Option<f64>;
}

/// The trained 2D network as a predictor.
pub struct NetPredictor2 {
    pub name: String,
    pub params: ModelParams,
    norm: Normalizer,
}

impl NetPredictor2 {
    pub fn new(name: impl Into<String>, params: ModelParams, domain: &Domain2D) -> Self {
        Self { name: name.into(), params, norm: domain.normalizer() }
    }

    pub fn fields(&self, point: &[f64; 4], scratch: &mut ForwardScratch) -> Result<Fields2> {
        let mut xn = [0.0; 3];
        self.norm.normalize(&point[..3], &mut xn)?;
        let out = self.params.forward_with(&xn, scratch)?;
        Ok(Fields2 { tau: out[0], v: out[1], w: out[2], p: out[3] })
    }
}

impl Predictor for NetPredictor2 {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, point: &[f64; 4], var: Var) -> Option<f64> {
        let mut scratch = ForwardScratch::new(&self.params.spec);
        let f = self.fields(point, &mut scratch).ok()?;
        f.get(var)
    }
}

/// The GPR baseline as a predictor; unseen variables are absent.
pub struct GprPredictor {
    pub name: String,
    pub model: crate::baseline::GprModel,
}

impl Predictor for GprPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, point: &[f64; 4], var: Var) -> Option<f64> {
        self.model.predict(var, &point[..self.model.dim]).map(|(mean, _)| mean)
    }
}

/// The closed-form solution as a predictor (and as truth).
pub struct OraclePredictor {
    pub params: TaylorGreenParams,
}

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, point: &[f64; 4], var: Var) -> Option<f64> {
        oracle::exact(point[0], point[1], point[2], &self.params).get(var)
    }
}

/// Evaluation region of the 2D study.
#[derive(Clone, Debug)]
pub enum Region2 {
    Whole,
    /// The observation mask (with the full time range).
    DataMask(RoundedRect),
    Custom { x: Interval, z: Interval, t: Interval },
}

impl Region2 {
    pub fn contains(&self, p: &[f64; 4]) -> bool {
        match self {
            Region2::Whole => true,
            Region2::DataMask(m) => m.contains(p[0], p[1]),
            Region2::Custom { x, z, t } => x.contains(p[0]) && z.contains(p[1]) && t.contains(p[2]),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Region2::Whole => "whole domain".into(),
            Region2::DataMask(m) => format!(
                "rounded rectangle centered ({}, {}) half-size ({}, {}) radius {}, all times",
                m.cx, m.cz, m.half_w, m.half_h, m.radius
            ),
            Region2::Custom { x, z, t } => format!(
                "x in [{}, {}], z in [{}, {}], t in [{}, {}]",
                x.lo, x.hi, z.lo, z.hi, t.lo, t.hi
            ),
        }
    }
}

/// RMSE of one variable with its Monte Carlo standard error; `rmse` absent
/// when the model cannot produce the variable.
#[derive(Clone, Debug, Serialize)]
pub struct VarRmse {
    pub var: Var,
    pub rmse: Option<f64>,
    pub std_error: Option<f64>,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionReport {
    pub region: String,
    pub definition: String,
    pub per_var: Vec<VarRmse>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TimePoint {
    pub t: f64,
    pub per_var: Vec<VarRmse>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileBin {
    pub center: f64,
    pub per_var: Vec<VarRmse>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Profile {
    pub coord: String,
    pub bins: Vec<ProfileBin>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelReport {
    pub model: String,
    pub regions: Vec<RegionReport>,
    pub rmse_vs_time: Vec<TimePoint>,
    pub profiles: Vec<Profile>,
}

/// The cross-model comparison: per-model, per-variable RMSE over named
/// regions, RMSE-over-time curves, and binned error profiles.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub regions_documented: Vec<(String, String)>,
    pub models: Vec<ModelReport>,
}

/// Evaluation-protocol settings.
#[derive(Clone, Debug)]
pub struct CompareConfig {
    /// Uniform points for region RMSE.
    pub n_region_points: usize,
    pub seed: u64,
    /// Space grid side for the time curves.
    pub space_grid: usize,
    /// Time-slice count for the curves.
    pub time_slices: usize,
    /// Bin count for the coordinate profiles.
    pub bins: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { n_region_points: 100_000, seed: 0, space_grid: 64, time_slices: 11, bins: 16 }
    }
}

fn rmse_accumulate(
    acc: &mut BTreeMap<Var, (f64, f64, usize)>,
    var: Var,
    pred: Option<f64>,
    truth: f64,
) -> bool {
    match pred {
        Some(p) => {
            let e2 = (p - truth) * (p - truth);
            let entry = acc.entry(var).or_insert((0.0, 0.0, 0));
            entry.0 += e2;
            entry.1 += e2 * e2;
            entry.2 += 1;
            true
        }
        None => false,
    }
}

fn rmse_finish(acc: &BTreeMap<Var, (f64, f64, usize)>, vars: &[Var], absent: &[Var]) -> Vec<VarRmse> {
    let mut out = Vec::new();
    for &var in vars {
        if absent.contains(&var) {
            out.push(VarRmse { var, rmse: None, std_error: None, n: 0 });
            continue;
        }
        let (s2, s4, n) = acc.get(&var).copied().unwrap_or((0.0, 0.0, 0));
        if n == 0 {
            out.push(VarRmse { var, rmse: None, std_error: None, n: 0 });
            continue;
        }
        let mean_sq = s2 / n as f64;
        let rmse = mean_sq.sqrt();
        // delta method: se(rmse) ~ se(mean_sq) / (2 rmse)
        let var_sq = (s4 / n as f64 - mean_sq * mean_sq).max(0.0);
        let se = if rmse > 0.0 { (var_sq / n as f64).sqrt() / (2.0 * rmse) } else { 0.0 };
        out.push(VarRmse { var, rmse: Some(rmse), std_error: Some(se), n });
    }
    out
}

/// RMSE of one predictor over labeled points inside a region.
pub fn evaluate(
    model: &dyn Predictor,
    labeled: &[([f64; 4], Fields2)],
    region: &Region2,
    vars: &[Var],
) -> Result<Vec<VarRmse>> {
    let mut acc = BTreeMap::new();
    let mut absent = Vec::new();
    let mut any = false;
    for (p, truth) in labeled.iter().filter(|(p, _)| region.contains(p)) {
        any = true;
        for &var in vars {
            let t = truth.get(var).expect("2D truth variable");
            if !rmse_accumulate(&mut acc, var, model.predict(p, var), t) && !absent.contains(&var) {
                absent.push(var);
            }
        }
    }
    if !any {
        return Err(Error::InvalidArgument(format!(
            "region `{}` contains no evaluation points",
            region.describe()
        )));
    }
    Ok(rmse_finish(&acc, vars, &absent))
}

/// RMSE per variable over sparse labeled rows (each row labels one variable
/// at one point); region filtering applies per row.
pub fn evaluate_sparse(
    model: &dyn Predictor,
    rows: &[crate::field::ObservationRecord],
    region: &Region2,
) -> Result<Vec<VarRmse>> {
    let mut acc = BTreeMap::new();
    let mut absent = Vec::new();
    let mut vars = Vec::new();
    let mut any = false;
    for rec in rows.iter().filter(|r| region.contains(&r.point)) {
        any = true;
        if !vars.contains(&rec.var) {
            vars.push(rec.var);
        }
        if !rmse_accumulate(&mut acc, rec.var, model.predict(&rec.point, rec.var), rec.value)
            && !absent.contains(&rec.var)
        {
            absent.push(rec.var);
        }
    }
    if !any {
        return Err(Error::InvalidArgument(format!(
            "region `{}` contains no labeled rows",
            region.describe()
        )));
    }
    Ok(rmse_finish(&acc, &vars, &absent))
}

/// Draw labeled evaluation points from the closed-form truth.
pub fn oracle_eval_set(
    domain: &Domain2D,
    params: &TaylorGreenParams,
    n: usize,
    seed: u64,
) -> Vec<([f64; 4], Fields2)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let p = [
                rng.random_range(domain.x.lo..domain.x.hi),
                rng.random_range(domain.z.lo..domain.z.hi),
                rng.random_range(domain.t.lo..domain.t.hi),
                0.0,
            ];
            (p, oracle::exact(p[0], p[1], p[2], params))
        })
        .collect()
}

/// Ground truth for the comparison: the closed form, or a labeled set.
pub enum TruthSource {
    Oracle(TaylorGreenParams),
    Labeled(Vec<([f64; 4], Fields2)>),
}

impl TruthSource {
    /// Labeled evaluation points for region RMSE and profiles.
    fn labeled(&self, domain: &Domain2D, cfg: &CompareConfig) -> Vec<([f64; 4], Fields2)> {
        match self {
            TruthSource::Oracle(p) => oracle_eval_set(domain, p, cfg.n_region_points, cfg.seed),
            TruthSource::Labeled(points) => points.clone(),
        }
    }
}

/// Run the full comparison protocol.
pub fn compare(
    models: &[&dyn Predictor],
    truth: &TruthSource,
    regions: &[(String, Region2)],
    domain: &Domain2D,
    cfg: &CompareConfig,
) -> Result<ComparisonReport> {
    let vars = Var::ORDER_2D;
    let labeled = truth.labeled(domain, cfg);
    let mut reports = Vec::new();
    for model in models {
        let mut region_reports = Vec::new();
        for (name, region) in regions {
            region_reports.push(RegionReport {
                region: name.clone(),
                definition: region.describe(),
                per_var: evaluate(*model, &labeled, region, &vars)?,
            });
        }

        // time curves: closed-form truth on a space grid at fixed slices, or
        // time-binned labeled points
        let mut curve = Vec::new();
        match truth {
            TruthSource::Oracle(tg) => {
                for k in 0..cfg.time_slices {
                    let t = domain.t.lo
                        + domain.t.length() * (k as f64) / (cfg.time_slices.max(2) - 1) as f64;
                    let mut acc = BTreeMap::new();
                    let mut absent = Vec::new();
                    let m = cfg.space_grid;
                    for i in 0..m {
                        for j in 0..m {
                            let x = domain.x.lo + (i as f64 + 0.5) / m as f64 * domain.x.length();
                            let z = domain.z.lo + (j as f64 + 0.5) / m as f64 * domain.z.length();
                            let p = [x, z, t, 0.0];
                            let truth_here = oracle::exact(x, z, t, tg);
                            for &var in &vars {
                                let tv = truth_here.get(var).expect("2D var");
                                if !rmse_accumulate(&mut acc, var, model.predict(&p, var), tv)
                                    && !absent.contains(&var)
                                {
                                    absent.push(var);
                                }
                            }
                        }
                    }
                    curve.push(TimePoint { t, per_var: rmse_finish(&acc, &vars, &absent) });
                }
            }
            TruthSource::Labeled(_) => {
                for k in 0..cfg.time_slices {
                    let lo = domain.t.lo + domain.t.length() * k as f64 / cfg.time_slices as f64;
                    let hi = domain.t.lo
                        + domain.t.length() * (k + 1) as f64 / cfg.time_slices as f64;
                    let mut acc = BTreeMap::new();
                    let mut absent = Vec::new();
                    for (p, truth_here) in
                        labeled.iter().filter(|(p, _)| p[2] >= lo && p[2] < hi)
                    {
                        for &var in &vars {
                            let tv = truth_here.get(var).expect("2D var");
                            if !rmse_accumulate(&mut acc, var, model.predict(p, var), tv)
                                && !absent.contains(&var)
                            {
                                absent.push(var);
                            }
                        }
                    }
                    curve.push(TimePoint {
                        t: 0.5 * (lo + hi),
                        per_var: rmse_finish(&acc, &vars, &absent),
                    });
                }
            }
        }

        // binned profiles over x, z, t using the labeled sample
        let mut profiles = Vec::new();
        for (coord, idx, iv) in
            [("x", 0usize, domain.x), ("z", 1, domain.z), ("t", 2, domain.t)]
        {
            let mut bins: Vec<BTreeMap<Var, (f64, f64, usize)>> = vec![BTreeMap::new(); cfg.bins];
            let mut absent = Vec::new();
            for (p, truth) in &labeled {
                let frac = ((p[idx] - iv.lo) / iv.length()).clamp(0.0, 1.0 - 1e-12);
                let b = (frac * cfg.bins as f64) as usize;
                for &var in &vars {
                    let tv = truth.get(var).expect("2D var");
                    if !rmse_accumulate(&mut bins[b], var, model.predict(p, var), tv)
                        && !absent.contains(&var)
                    {
                        absent.push(var);
                    }
                }
            }
            profiles.push(Profile {
                coord: coord.into(),
                bins: bins
                    .iter()
                    .enumerate()
                    .map(|(b, acc)| ProfileBin {
                        center: iv.lo + (b as f64 + 0.5) / cfg.bins as f64 * iv.length(),
                        per_var: rmse_finish(acc, &vars, &absent),
                    })
                    .collect(),
            });
        }

        reports.push(ModelReport {
            model: model.name().to_string(),
            regions: region_reports,
            rmse_vs_time: curve,
            profiles,
        });
    }
    Ok(ComparisonReport {
        regions_documented: regions
            .iter()
            .map(|(n, r)| (n.clone(), r.describe()))
            .collect(),
        models: reports,
    })
}

/// Flat CSV of region RMSE: `model,region,var,rmse,std_error,n`.
pub fn region_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("model,region,var,rmse,std_error,n\n");
    for m in &report.models {
        for r in &m.regions {
            for v in &r.per_var {
                let rmse = v.rmse.map(|x| x.to_string()).unwrap_or_default();
                let se = v.std_error.map(|x| x.to_string()).unwrap_or_default();
                out.push_str(&format!("{},{},{},{},{},{}\n", m.model, r.region, v.var, rmse, se, v.n));
            }
        }
    }
    out
}

/// Flat CSV of the time curves: `model,t,var,rmse`.
pub fn curve_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("model,t,var,rmse\n");
    for m in &report.models {
        for tp in &m.rmse_vs_time {
            for v in &tp.per_var {
                let rmse = v.rmse.map(|x| x.to_string()).unwrap_or_default();
                out.push_str(&format!("{},{},{},{}\n", m.model, tp.t, v.var, rmse));
            }
        }
    }
    out
}

/// Flat CSV of the binned profiles: `model,coord,center,var,rmse`.
pub fn profile_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("model,coord,center,var,rmse\n");
    for m in &report.models {
        for p in &m.profiles {
            for b in &p.bins {
                for v in &b.per_var {
                    let rmse = v.rmse.map(|x| x.to_string()).unwrap_or_default();
                    out.push_str(&format!("{},{},{},{},{}\n", m.model, p.coord, b.center, v.var, rmse));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct ZeroPredictor;
    impl Predictor for ZeroPredictor {
        fn name(&self) -> &str {
            "zero"
        }
        fn predict(&self, _point: &[f64; 4], _var: Var) -> Option<f64> {
            Some(0.0)
        }
    }

    struct ShiftedOracle(f64);
    impl Predictor for ShiftedOracle {
        fn name(&self) -> &str {
            "shifted"
        }
        fn predict(&self, p: &[f64; 4], var: Var) -> Option<f64> {
            oracle::exact(p[0], p[1], p[2], &TaylorGreenParams::default())
                .get(var)
                .map(|v| v + self.0)
        }
    }

    #[test]
    fn oracle_against_itself_is_exact() {
        let d = Domain2D::unit();
        let tg = TaylorGreenParams::default();
        let labeled = oracle_eval_set(&d, &tg, 2000, 3);
        let model = OraclePredictor { params: tg };
        let report = evaluate(&model, &labeled, &Region2::Whole, &Var::ORDER_2D).unwrap();
        for v in report {
            assert_eq!(v.rmse, Some(0.0));
        }
    }

    #[test]
    fn constant_shift_has_rmse_equal_to_shift() {
        let d = Domain2D::unit();
        let labeled = oracle_eval_set(&d, &TaylorGreenParams::default(), 3000, 4);
        let report = evaluate(&ShiftedOracle(0.5), &labeled, &Region2::Whole, &Var::ORDER_2D).unwrap();
        for v in report {
            assert_abs_diff_eq!(v.rmse.unwrap(), 0.5, epsilon = 1e-12);
        }
    }

    /// Zero predictor against the vortex at t = 0: RMSE(tau) is the RMS of
    /// sin(2 pi z), cross-checked here by midpoint-rule integration.
    #[test]
    fn zero_predictor_rmse_matches_quadrature() {
        let d = Domain2D::unit();
        let tg = TaylorGreenParams::default();
        // degenerate time interval at t = 0
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labeled: Vec<([f64; 4], Fields2)> = (0..60_000)
            .map(|_| {
                let p = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.0, 0.0];
                (p, oracle::exact(p[0], p[1], p[2], &tg))
            })
            .collect();
        let report = evaluate(&ZeroPredictor, &labeled, &Region2::Whole, &[Var::Tau]).unwrap();
        let got = report[0].rmse.unwrap();

        // quadrature oracle: mean square of sin(2 pi z) over [0, 1]
        let m = 100_000;
        let mean_sq: f64 = (0..m)
            .map(|i| {
                let z = (i as f64 + 0.5) / m as f64;
                (2.0 * std::f64::consts::PI * z).sin().powi(2)
            })
            .sum::<f64>()
            / m as f64;
        let expect = mean_sq.sqrt();
        assert_abs_diff_eq!(expect, 0.7071067811865476, epsilon = 1e-6);
        assert_abs_diff_eq!(got, expect, epsilon = 5e-3);
        // the reported standard error brackets the deviation
        let se = report[0].std_error.unwrap();
        assert!((got - expect).abs() < 6.0 * se + 1e-9);
    }

    #[test]
    fn absent_variables_are_recorded_not_zeroed() {
        struct NoPressure;
        impl Predictor for NoPressure {
            fn name(&self) -> &str {
                "no-p"
            }
            fn predict(&self, p: &[f64; 4], var: Var) -> Option<f64> {
                if var == Var::P {
                    None
                } else {
                    oracle::exact(p[0], p[1], p[2], &TaylorGreenParams::default()).get(var)
                }
            }
        }
        let d = Domain2D::unit();
        let labeled = oracle_eval_set(&d, &TaylorGreenParams::default(), 500, 5);
        let report = evaluate(&NoPressure, &labeled, &Region2::Whole, &Var::ORDER_2D).unwrap();
        let p_row = report.iter().find(|v| v.var == Var::P).unwrap();
        assert!(p_row.rmse.is_none());
        assert!(report.iter().any(|v| v.rmse.is_some()));
    }

    #[test]
    fn empty_region_is_an_error() {
        let labeled = oracle_eval_set(&Domain2D::unit(), &TaylorGreenParams::default(), 100, 6);
        let region = Region2::Custom {
            x: Interval { lo: 5.0, hi: 6.0 },
            z: Interval { lo: 0.0, hi: 1.0 },
            t: Interval { lo: 0.0, hi: 1.0 },
        };
        assert!(evaluate(&ZeroPredictor, &labeled, &region, &Var::ORDER_2D).is_err());
    }

    #[test]
    fn compare_emits_all_sections_and_csvs() {
        let d = Domain2D::unit();
        let tg = TaylorGreenParams::default();
        let labeled = oracle_eval_set(&d, &tg, 2000, 7);
        let oracle_model = OraclePredictor { params: tg };
        let zero = ZeroPredictor;
        let cfg = CompareConfig { n_region_points: 1000, space_grid: 8, time_slices: 3, bins: 4, ..Default::default() };
        let regions = vec![
            ("whole".to_string(), Region2::Whole),
            (
                "data".to_string(),
                Region2::DataMask(RoundedRect { cx: 0.5, cz: 0.5, half_w: 0.4, half_h: 0.4, radius: 0.1 }),
            ),
        ];
        let _ = labeled;
        let report = compare(
            &[&oracle_model as &dyn Predictor, &zero],
            &TruthSource::Oracle(tg),
            &regions,
            &d,
            &cfg,
        )
        .unwrap();
        assert_eq!(report.models.len(), 2);
        assert_eq!(report.models[0].regions.len(), 2);
        assert_eq!(report.models[0].rmse_vs_time.len(), 3);
        assert_eq!(report.models[0].profiles.len(), 3);
        // oracle rows are all zero
        for r in &report.models[0].regions {
            for v in &r.per_var {
                assert_eq!(v.rmse, Some(0.0));
            }
        }
        let csv = region_csv(&report);
        assert!(csv.starts_with("model,region,var,rmse,std_error,n\n"));
        assert!(csv.contains("zero,whole,tau,"));
        assert!(curve_csv(&report).contains("oracle,0,tau,0"));
        assert!(profile_csv(&report).lines().count() > 4);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("rmse_vs_time"));
    }
}
