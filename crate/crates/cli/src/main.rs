//! Command-line pipeline: simulate -> train -> evaluate -> export-grid.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 i/o error, 3 numeric
//! failure. Every command is deterministic given (config, seed, thread
//! count) and records all three in the run manifest. Worker count is capped
//! by the `MDRF_THREADS` environment variable (default: hardware
//! parallelism).

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use mdrf_core::config::{load_config, Config2D, Config3D, RunConfig};
use mdrf_core::ensemble::{load_ensemble, save_ensemble, train_ensemble};
use mdrf_core::error::{Error, Result};
use mdrf_core::field::Var;
use mdrf_core::geometry::Interval;
use mdrf_core::io::{self, RunManifest};
use mdrf_core::metrics::{
    compare, evaluate_sparse, CompareConfig, NetPredictor2, Predictor, Region2, TruthSource,
};
use mdrf_core::network::{density_from_state, load_snapshot, save_snapshot, ForwardScratch};
use mdrf_core::oracle::{self, generate_observations, ObservationPlan, RoundedRect};
use mdrf_core::training::{train_2d, Problem2D, Problem3D};

#[derive(Parser)]
#[command(name = "mdrf", version, about = "Physics-informed reconstruction of ocean dynamic fields")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic observations as CSV.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Observation locations (one row per observed variable each).
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Additive Gaussian noise standard deviation.
        #[arg(long)]
        noise_sd: Option<f64>,
        /// Rounded-rectangle data mask `cx,cz,half_w,half_h,radius` (2D).
        #[arg(long)]
        mask: Option<String>,
        /// Run configuration; required in 3D mode, optional in 2D.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `2d` (closed-form vortex) or `3d` (synthetic spherical fixture).
        #[arg(long, default_value = "2d")]
        mode: String,
    },
    /// Train from a configuration and an observation CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory for snapshot, trace, and manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a snapshot against ground truth and write report files.
    Evaluate {
        #[arg(long)]
        snapshot: PathBuf,
        /// `oracle` or a path to a labeled observation CSV.
        #[arg(long)]
        truth: String,
        /// Output directory for report files.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// `whole`, `data`, or `custom:x0,x1,z0,z1,t0,t1`.
        #[arg(long, default_value = "whole")]
        region: String,
        /// Evaluation points for region RMSE.
        #[arg(long, default_value_t = 100_000)]
        eval_points: usize,
        #[arg(long, default_value_t = 0)]
        eval_seed: u64,
    },
    /// Export predicted fields on a regular grid as CSV.
    ExportGrid {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `NXxNZ` (with `--time`) or `NXxNZxNT` in 2D; `NRxNTHxNPH` with
        /// `--time` in 3D.
        #[arg(long)]
        grid: String,
        /// Time of the slice: a real in 2D, ISO-8601 in 3D.
        #[arg(long)]
        time: Option<String>,
        #[arg(long)]
        allow_extrapolation: bool,
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() {
    let threads = std::env::var("MDRF_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate { out, n, seed, noise_sd, mask, config, mode } => {
            cmd_simulate(&out, n, seed, noise_sd, mask.as_deref(), config.as_deref(), &mode)
        }
        Cmd::Train { config, data, out } => cmd_train(&config, &data, &out),
        Cmd::Evaluate { snapshot, truth, report, config, region, eval_points, eval_seed } => {
            cmd_evaluate(&snapshot, &truth, &report, &config, &region, eval_points, eval_seed)
        }
        Cmd::ExportGrid { snapshot, out, grid, time, allow_extrapolation, config } => {
            cmd_export_grid(&snapshot, &out, &grid, time.as_deref(), allow_extrapolation, &config)
        }
    }
}

fn parse_mask(spec: &str) -> Result<RoundedRect> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 5 {
        return Err(Error::InvalidArgument(format!(
            "--mask expects `cx,cz,half_w,half_h,radius`, got `{spec}`"
        )));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::InvalidArgument(format!("--mask: malformed number `{s}`")))
    };
    let mask = RoundedRect {
        cx: num(parts[0])?,
        cz: num(parts[1])?,
        half_w: num(parts[2])?,
        half_h: num(parts[3])?,
        radius: num(parts[4])?,
    };
    mask.validate()?;
    Ok(mask)
}

fn config_2d(path: Option<&Path>) -> Result<Config2D> {
    match path {
        None => Ok(Config2D::default()),
        Some(p) => match load_config(p)? {
            RunConfig::TwoD(c) => Ok(c),
            RunConfig::ThreeD(_) => Err(Error::InvalidArgument(
                "expected a 2d configuration".into(),
            )),
        },
    }
}

fn config_3d(path: &Path) -> Result<Config3D> {
    match load_config(path)? {
        RunConfig::ThreeD(c) => Ok(c),
        RunConfig::TwoD(_) => Err(Error::InvalidArgument("expected a 3d configuration".into())),
    }
}

fn cmd_simulate(
    out: &Path,
    n: usize,
    seed: u64,
    noise_sd: Option<f64>,
    mask: Option<&str>,
    config: Option<&Path>,
    mode: &str,
) -> Result<()> {
    let started = Instant::now();
    let config_text = match config {
        Some(p) => io::read_text(p)?,
        None => String::new(),
    };
    match mode {
        "2d" => {
            let cfg = config_2d(config)?;
            let mut plan = ObservationPlan::new(n, seed);
            plan.noise_sd = noise_sd.unwrap_or(0.0);
            plan.mask = match mask {
                Some(m) => Some(parse_mask(m)?),
                None => cfg.data_mask,
            };
            let obs = generate_observations(&plan, &cfg.domain, &cfg.physics.source_params())?;
            io::write_text(out, &io::write_obs_csv_2d(&obs))?;
            sidecar_manifest(out, "simulate", &config_text, vec![("observations".into(), seed)], started)
        }
        "3d" => {
            let path = config.ok_or_else(|| {
                Error::InvalidArgument("3d simulate requires --config for the domain".into())
            })?;
            let cfg = config_3d(path)?;
            let vars = [Var::Tau, Var::Sal, Var::W, Var::VTheta, Var::VPhi];
            let obs = oracle::generate_observations_3d(
                n,
                seed,
                &vars,
                noise_sd.unwrap_or(0.0),
                &cfg.domain,
                cfg.physics.rho0,
                cfg.physics.g,
                cfg.physics.tau0,
                cfg.physics.sigma0,
            )?;
            io::write_text(out, &io::write_obs_csv_3d(&obs))?;
            sidecar_manifest(out, "simulate", &config_text, vec![("observations".into(), seed)], started)
        }
        other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config_text: &str,
    seeds: Vec<(String, u64)>,
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        seeds,
        threads: rayon::current_num_threads(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    io::write_text(
        &dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serialization"),
    )
}

/// Manifest written next to a single-file output as `<name>.manifest.json`.
fn sidecar_manifest(
    out: &Path,
    command: &str,
    config_text: &str,
    seeds: Vec<(String, u64)>,
    started: Instant,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        seeds,
        threads: rayon::current_num_threads(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    io::write_text(
        &out.with_file_name(name),
        &serde_json::to_string_pretty(&manifest).expect("manifest serialization"),
    )
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
}

fn cmd_train(config_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let started = Instant::now();
    let config_text = io::read_text(config_path)?;
    let cfg = mdrf_core::config::parse_config(&config_text)?;
    ensure_dir(out)?;
    match cfg {
        RunConfig::TwoD(c) => {
            let obs = io::read_obs_csv_2d(&io::read_text(data)?, &data.display().to_string())?;
            let problem = Problem2D {
                domain: c.domain,
                constants: c.physics,
                icbc: RunConfig::icbc_2d(&c),
                sampling: c.sampling,
            };
            let net = c.network.to_spec_2d();
            let outcome = train_2d(&problem, &net, &obs, &c.training)?;
            io::write_text(&out.join("trace.csv"), &outcome.trace.to_csv())?;
            save_snapshot(&outcome.params, &out.join("snapshot.json"))?;
            write_manifest(
                out,
                "train",
                &config_text,
                vec![
                    ("training".into(), c.training.seed),
                    ("sampling".into(), c.sampling.seed),
                ],
                started,
            )?;
            if let Some(ctx) = outcome.divergence {
                return Err(Error::Diverged { iter: 0, context: ctx });
            }
            Ok(())
        }
        RunConfig::ThreeD(c) => {
            let obs = io::read_obs_csv_3d(&io::read_text(data)?, &data.display().to_string())?;
            let problem = Problem3D {
                domain: c.domain,
                constants: c.physics.clone(),
                sampling: c.sampling,
            };
            let net = c.network.to_spec_3d();
            let ens = train_ensemble(&problem, &net, &obs, &c.training, c.ensemble)?;
            for (k, outcome) in ens.outcomes.iter().enumerate() {
                io::write_text(&out.join(format!("trace_sub{k}.csv")), &outcome.trace.to_csv())?;
            }
            save_ensemble(&ens.predictor, &out.join("snapshot.json"))?;
            write_manifest(
                out,
                "train",
                &config_text,
                vec![
                    ("training".into(), c.training.seed),
                    ("sampling".into(), c.sampling.seed),
                ],
                started,
            )
        }
    }
}

fn parse_region(spec: &str, cfg: &Config2D) -> Result<(String, Region2)> {
    match spec {
        "whole" => Ok(("whole".into(), Region2::Whole)),
        "data" => {
            let mask = cfg.data_mask.ok_or_else(|| {
                Error::InvalidArgument("--region data needs data_mask in the config".into())
            })?;
            Ok(("data".into(), Region2::DataMask(mask)))
        }
        custom if custom.starts_with("custom:") => {
            let nums: Vec<f64> = custom["custom:".len()..]
                .split(',')
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::InvalidArgument(format!("--region: bad number `{s}`")))
                })
                .collect::<Result<_>>()?;
            if nums.len() != 6 {
                return Err(Error::InvalidArgument(
                    "--region custom expects x0,x1,z0,z1,t0,t1".into(),
                ));
            }
            Ok((
                "custom".into(),
                Region2::Custom {
                    x: Interval::new(nums[0], nums[1])?,
                    z: Interval::new(nums[2], nums[3])?,
                    t: Interval::new(nums[4], nums[5])?,
                },
            ))
        }
        other => Err(Error::InvalidArgument(format!(
            "--region must be whole, data, or custom:...; got `{other}`"
        ))),
    }
}

fn cmd_evaluate(
    snapshot: &Path,
    truth: &str,
    report_dir: &Path,
    config_path: &Path,
    region: &str,
    eval_points: usize,
    eval_seed: u64,
) -> Result<()> {
    let started = Instant::now();
    let config_text = io::read_text(config_path)?;
    let cfg = mdrf_core::config::parse_config(&config_text)?;
    ensure_dir(report_dir)?;
    match cfg {
        RunConfig::TwoD(c) => {
            let params = load_snapshot(snapshot)?;
            if params.spec.input_dim != 3 {
                return Err(Error::SnapshotMismatch(
                    "snapshot is not a 2D model; check the configuration".into(),
                ));
            }
            let model = NetPredictor2::new("mdrf", params, &c.domain);
            let mut regions = vec![parse_region(region, &c)?];
            if region == "whole" {
                if let Some(mask) = c.data_mask {
                    regions.push(("data".into(), Region2::DataMask(mask)));
                }
            }
            let compare_cfg = CompareConfig {
                n_region_points: eval_points,
                seed: eval_seed,
                ..CompareConfig::default()
            };
            let truth_source = if truth == "oracle" {
                TruthSource::Oracle(c.physics.source_params())
            } else {
                let rows =
                    io::read_obs_csv_2d(&io::read_text(Path::new(truth))?, truth)?;
                // sparse rows: report per-variable RMSE directly
                let per_var = evaluate_sparse(&model, &rows, &regions[0].1)?;
                let json = serde_json::to_string_pretty(&per_var).expect("report serialization");
                io::write_text(&report_dir.join("report.json"), &json)?;
                return write_manifest(report_dir, "evaluate", &config_text, vec![], started);
            };
            let report = compare(&[&model as &dyn Predictor], &truth_source, &regions, &c.domain, &compare_cfg)?;
            io::write_text(
                &report_dir.join("report.json"),
                &serde_json::to_string_pretty(&report).expect("report serialization"),
            )?;
            io::write_text(&report_dir.join("region_rmse.csv"), &mdrf_core::metrics::region_csv(&report))?;
            io::write_text(&report_dir.join("rmse_vs_time.csv"), &mdrf_core::metrics::curve_csv(&report))?;
            io::write_text(&report_dir.join("profiles.csv"), &mdrf_core::metrics::profile_csv(&report))?;
            write_manifest(
                report_dir,
                "evaluate",
                &config_text,
                vec![("evaluation".into(), eval_seed)],
                started,
            )
        }
        RunConfig::ThreeD(c) => {
            if truth == "oracle" {
                return Err(Error::InvalidArgument(
                    "3d evaluation needs a labeled CSV; there is no closed-form 3d truth".into(),
                ));
            }
            let predictor = load_ensemble(snapshot, &c.domain)?;
            let rows = io::read_obs_csv_3d(&io::read_text(Path::new(truth))?, truth)?;
            let mut per_var: Vec<(String, f64, usize)> = Vec::new();
            let mut acc: std::collections::BTreeMap<Var, (f64, usize)> = Default::default();
            for rec in &rows {
                let f = predictor.predict(&rec.point)?;
                if let Some(v) = f.get(rec.var) {
                    let e = acc.entry(rec.var).or_insert((0.0, 0));
                    e.0 += (v - rec.value) * (v - rec.value);
                    e.1 += 1;
                }
            }
            for (var, (se, n)) in acc {
                per_var.push((var.csv_name().to_string(), (se / n as f64).sqrt(), n));
            }
            let json = serde_json::to_string_pretty(&per_var).expect("report serialization");
            io::write_text(&report_dir.join("report.json"), &json)?;
            write_manifest(report_dir, "evaluate", &config_text, vec![], started)
        }
    }
}

fn parse_grid(spec: &str) -> Result<Vec<usize>> {
    spec.split('x')
        .map(|s| {
            s.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::InvalidArgument(format!("--grid: bad count `{s}`")))
        })
        .collect()
}

fn centers(iv: Interval, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| iv.lo + (k as f64 + 0.5) / n as f64 * iv.length())
        .collect()
}

fn cmd_export_grid(
    snapshot: &Path,
    out: &Path,
    grid: &str,
    time: Option<&str>,
    allow_extrapolation: bool,
    config_path: &Path,
) -> Result<()> {
    let started = Instant::now();
    let config_text = io::read_text(config_path)?;
    let cfg = mdrf_core::config::parse_config(&config_text)?;
    match cfg {
        RunConfig::TwoD(c) => {
            let params = load_snapshot(snapshot)?;
            if params.spec.input_dim != 3 {
                return Err(Error::SnapshotMismatch("snapshot is not a 2D model".into()));
            }
            let dims = parse_grid(grid)?;
            let times: Vec<f64> = match (dims.len(), time) {
                (2, Some(t)) => {
                    let t: f64 = t
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("--time: bad number `{t}`")))?;
                    if !c.domain.t.contains(t) && !allow_extrapolation {
                        return Err(Error::InvalidArgument(format!(
                            "time {t} lies outside [{}, {}]; pass --allow-extrapolation to override",
                            c.domain.t.lo, c.domain.t.hi
                        )));
                    }
                    vec![t]
                }
                (3, None) => centers(c.domain.t, dims[2]),
                (2, None) => {
                    return Err(Error::InvalidArgument("--grid NXxNZ needs --time".into()))
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "2d --grid must be NXxNZ or NXxNZxNT".into(),
                    ))
                }
            };
            let model = NetPredictor2::new("mdrf", params, &c.domain);
            let mut scratch = ForwardScratch::new(&model.params.spec);
            let mut csv = String::from("x,z,t,tau,v,w,p\n");
            for &t in &times {
                for &x in &centers(c.domain.x, dims[0]) {
                    for &z in &centers(c.domain.z, dims[1]) {
                        let f = model.fields(&[x, z, t.clamp(c.domain.t.lo, c.domain.t.hi), 0.0], &mut scratch);
                        // extrapolated times evaluate on the clamped normalizer input
                        let f = match f {
                            Ok(f) => f,
                            Err(e) => return Err(e),
                        };
                        for v in f.as_array() {
                            if !v.is_finite() {
                                return Err(Error::NonFinite(format!("prediction at ({x}, {z}, {t})")));
                            }
                        }
                        csv.push_str(&format!("{x},{z},{t},{},{},{},{}\n", f.tau, f.v, f.w, f.p));
                    }
                }
            }
            io::write_text(out, &csv)?;
            sidecar_manifest(out, "export-grid", &config_text, vec![], started)
        }
        RunConfig::ThreeD(c) => {
            let predictor = load_ensemble(snapshot, &c.domain)?;
            let dims = parse_grid(grid)?;
            if dims.len() != 3 {
                return Err(Error::InvalidArgument("3d --grid must be NRxNTHxNPH".into()));
            }
            let t_iso = time.ok_or_else(|| {
                Error::InvalidArgument("3d export needs --time ISO8601".into())
            })?;
            let t = io::parse_iso8601(t_iso)? as f64;
            if !c.domain.t.contains(t) && !allow_extrapolation {
                return Err(Error::InvalidArgument(format!(
                    "time {t_iso} lies outside the trained range; pass --allow-extrapolation"
                )));
            }
            let margin = 1e-3;
            let theta_iv = Interval::new(
                c.domain.theta.lo.max(margin),
                c.domain.theta.hi.min(std::f64::consts::PI - margin),
            )?;
            let beta_tau = predictor.subs[0]
                .params
                .pde_param("beta_tau")
                .unwrap_or(c.physics.beta_tau);
            let beta_sigma = predictor.subs[0]
                .params
                .pde_param("beta_sigma")
                .unwrap_or(c.physics.beta_sigma);
            let mut csv =
                String::from("depth_m,lat_deg,lon_deg,time_iso8601,tau,sal,w,v_theta,v_phi,p,rho\n");
            let t_eval = t.clamp(c.domain.t.lo, c.domain.t.hi);
            for &r in &centers(c.domain.r, dims[0]) {
                for &theta in &centers(theta_iv, dims[1]) {
                    for &phi in &centers(c.domain.phi, dims[2]) {
                        let f = predictor.predict(&[r, theta, phi, t_eval])?;
                        let rho = density_from_state(
                            f.tau,
                            f.sal,
                            beta_tau,
                            beta_sigma,
                            c.physics.rho0,
                            c.physics.tau0,
                            c.physics.sigma0,
                        );
                        let all = [f.tau, f.sal, f.w, f.v_theta, f.v_phi, f.p, rho];
                        if all.iter().any(|v| !v.is_finite()) {
                            return Err(Error::NonFinite(format!(
                                "prediction at (r {r}, theta {theta}, phi {phi})"
                            )));
                        }
                        let (depth, lat, lon, _) = io::spherical_to_geo(&[r, theta, phi, t]);
                        csv.push_str(&format!(
                            "{depth},{lat},{lon},{t_iso},{},{},{},{},{},{},{rho}\n",
                            f.tau, f.sal, f.w, f.v_theta, f.v_phi, f.p
                        ));
                    }
                }
            }
            io::write_text(out, &csv)?;
            sidecar_manifest(out, "export-grid", &config_text, vec![], started)
        }
    }
}
