//! Monte Carlo campaigns, parameter sweeps and CSV persistence.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::calibrate;
use crate::error::{Error, Result};
use crate::hilbert::QubitState;
use crate::model::{ModelKind, PhysicalParams};
use crate::protocol::{ProtocolKind, ProtocolRunner, StageSchedule};
use crate::trajectory::{DetectorModel, RngStream};

pub const CSV_HEADER: &str = "sweep_var,sweep_value,protocol,model,n_traj,n_accepted,success_prob,avg_fidelity,stderr_fidelity,stderr_success,t_A_us,t_B_us,t_d_us,t_c_us,t_D_us,seed";

pub const LOG_HEADER: &str = "sweep_value,index,accepted,epsilon,fidelity,alpha_re,alpha_im,beta_re,beta_im";

/// Fidelity window (absolute) defining the low-κ plateau.
pub const PLATEAU_WINDOW: f64 = 0.01;

/// Haar-random qubit `cos(θ/2)|0> + e^{iφ} sin(θ/2)|1>`.
pub fn sample_input_state(rng: &mut RngStream) -> QubitState {
    let cos_theta = 2.0 * rng.uniform() - 1.0;
    let phi = TAU * rng.uniform();
    let c = ((1.0 + cos_theta) / 2.0).sqrt();
    let s = ((1.0 - cos_theta) / 2.0).sqrt();
    QubitState {
        alpha: Complex64::new(c, 0.0),
        beta: Complex64::from_polar(s, phi),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// κ′/2π in MHz.
    KappaT,
    /// 1 − η′.
    OverallInefficiency,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::KappaT => "kappa_t_mhz",
            Self::OverallInefficiency => "inefficiency",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl Sweep {
    /// κ/2π ∈ [0.02, 0.35] MHz in steps of 0.01.
    pub fn default_kappa() -> Self {
        Self {
            variable: SweepVariable::KappaT,
            values: (2..=35).map(|k| k as f64 / 100.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub params: PhysicalParams,
    pub detector: DetectorModel,
    pub protocol: ProtocolKind,
    pub model: ModelKind,
    pub n_traj: u64,
    pub base_seed: u64,
    pub m_index: u32,
    pub t_big_over_kappa: f64,
    pub sweep: Option<Sweep>,
    /// Summary CSV.
    pub output: Option<PathBuf>,
    /// Per-trajectory CSV.
    pub trajectory_log: Option<PathBuf>,
    /// Worker threads; `None` uses the default pool.
    pub workers: Option<usize>,
}

impl CampaignConfig {
    pub fn new(params: PhysicalParams, protocol: ProtocolKind, model: ModelKind, n_traj: u64, base_seed: u64) -> Self {
        Self {
            params,
            detector: DetectorModel::PERFECT,
            protocol,
            model,
            n_traj,
            base_seed,
            m_index: 0,
            t_big_over_kappa: 10.0,
            sweep: None,
            output: None,
            trajectory_log: None,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::InvalidParameter {
                name: "n_traj",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(self.t_big_over_kappa > 0.0) {
            return Err(Error::InvalidParameter {
                name: "t_big_over_kappa",
                value: self.t_big_over_kappa,
                reason: "must be positive",
            });
        }
        if let Some(s) = &self.sweep {
            for &v in &s.values {
                let ok = match s.variable {
                    SweepVariable::KappaT => v.is_finite() && v >= 0.0,
                    SweepVariable::OverallInefficiency => (0.0..=1.0).contains(&v),
                };
                if !ok {
                    return Err(Error::InvalidParameter {
                        name: "sweep_value",
                        value: v,
                        reason: "outside the sweep variable's domain",
                    });
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one trajectory, as persisted in the trajectory log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryResult {
    pub index: u64,
    pub input: QubitState,
    pub accepted: bool,
    pub epsilon: Option<i8>,
    pub fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub protocol: ProtocolKind,
    pub model: ModelKind,
    pub n_traj: u64,
    pub n_accepted: u64,
    pub success_prob: f64,
    pub avg_fidelity: f64,
    pub stderr_fidelity: f64,
    pub stderr_success: f64,
    pub schedule: Option<StageSchedule>,
    pub seed: u64,
    pub calibration_flags: Vec<String>,
    /// Set when the point could not be simulated.
    pub error: Option<String>,
}

impl PointSummary {
    fn failed(cfg: &CampaignConfig, var: &str, value: f64, err: &Error) -> Self {
        Self {
            sweep_var: var.to_string(),
            sweep_value: value,
            protocol: cfg.protocol,
            model: cfg.model,
            n_traj: 0,
            n_accepted: 0,
            success_prob: f64::NAN,
            avg_fidelity: f64::NAN,
            stderr_fidelity: f64::NAN,
            stderr_success: f64::NAN,
            schedule: None,
            seed: cfg.base_seed,
            calibration_flags: Vec::new(),
            error: Some(err.to_string()),
        }
    }

    pub fn csv_row(&self) -> String {
        let s = self.schedule;
        let t = |f: fn(&StageSchedule) -> f64| s.as_ref().map_or(f64::NAN, f);
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.sweep_var,
            self.sweep_value,
            self.protocol,
            self.model,
            self.n_traj,
            self.n_accepted,
            self.success_prob,
            self.avg_fidelity,
            self.stderr_fidelity,
            self.stderr_success,
            t(|s| s.t_a),
            t(|s| s.t_b),
            t(|s| s.t_d),
            t(|s| s.t_c),
            t(|s| s.t_big_d),
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub points: Vec<PointSummary>,
    /// Largest κ′/2π (MHz) whose fidelity stays within [`PLATEAU_WINDOW`]
    /// of the low-κ plateau; κ sweeps only.
    pub plateau_edge: Option<f64>,
}

impl CampaignSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        for p in &self.points {
            writeln!(out, "{}", p.csv_row()).unwrap();
        }
        out
    }
}

/// Mean and standard error (sample standard deviation over √n) in index
/// order.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn aggregate(results: &[TrajectoryResult]) -> (u64, f64, f64, f64, f64) {
    let n = results.len() as u64;
    let fids: Vec<f64> = results.iter().filter_map(|r| r.fidelity).collect();
    let n_acc = results.iter().filter(|r| r.accepted).count() as u64;
    let indicator: Vec<f64> = results.iter().map(|r| if r.accepted { 1.0 } else { 0.0 }).collect();
    let (_, se_s) = mean_and_stderr(&indicator);
    let (f, se_f) = mean_and_stderr(&fids);
    (n_acc, n_acc as f64 / n as f64, f, se_f, se_s)
}

fn run_one(runner: &ProtocolRunner, det: &DetectorModel, seed: u64, index: u64) -> Result<TrajectoryResult> {
    let mut rng = RngStream::new(seed, index);
    let input = sample_input_state(&mut rng);
    let o = runner.run(&input, det, &mut rng)?;
    Ok(TrajectoryResult {
        index,
        input,
        accepted: o.accepted,
        epsilon: o.epsilon,
        fidelity: o.fidelity,
    })
}

/// Runs trajectories `0..n` and returns them in index order.
pub fn run_trajectories(
    runner: &ProtocolRunner,
    det: &DetectorModel,
    seed: u64,
    n: u64,
    workers: Option<usize>,
) -> Result<Vec<TrajectoryResult>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let job = || {
            (0..n)
                .into_par_iter()
                .map(|i| run_one(runner, det, seed, i))
                .collect::<Result<Vec<_>>>()
        };
        match workers {
            Some(w) => rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::ThreadPool(e.to_string()))?
                .install(job),
            None => job(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        (0..n).map(|i| run_one(runner, det, seed, i)).collect()
    }
}

/// Calibrates and simulates one parameter point.
pub fn run_point(
    cfg: &CampaignConfig,
    params: &PhysicalParams,
    det: &DetectorModel,
    sweep_var: &str,
    sweep_value: f64,
) -> Result<(PointSummary, Vec<TrajectoryResult>)> {
    let report = calibrate::calibrate(cfg.protocol, params, cfg.model, cfg.m_index, cfg.t_big_over_kappa)?;
    let runner = ProtocolRunner::new(cfg.protocol, params, report.schedule, cfg.model)?;
    let results = run_trajectories(&runner, det, cfg.base_seed, cfg.n_traj, cfg.workers)?;
    let (n_accepted, success_prob, avg_fidelity, stderr_fidelity, stderr_success) = aggregate(&results);
    Ok((
        PointSummary {
            sweep_var: sweep_var.to_string(),
            sweep_value,
            protocol: cfg.protocol,
            model: cfg.model,
            n_traj: cfg.n_traj,
            n_accepted,
            success_prob,
            avg_fidelity,
            stderr_fidelity,
            stderr_success,
            schedule: Some(report.schedule),
            seed: cfg.base_seed,
            calibration_flags: report.flags,
            error: None,
        },
        results,
    ))
}

fn point_inputs(cfg: &CampaignConfig, variable: SweepVariable, value: f64) -> Result<(PhysicalParams, DetectorModel)> {
    match variable {
        SweepVariable::KappaT => Ok((cfg.params.with_kappa_t(TAU * value)?, cfg.detector)),
        SweepVariable::OverallInefficiency => {
            let det = cfg.detector.with_overall_efficiency(1.0 - value, cfg.params.eta_a())?;
            Ok((cfg.params, det))
        }
    }
}

fn log_rows(out: &mut String, value: f64, results: &[TrajectoryResult]) {
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            value,
            r.index,
            r.accepted as u8,
            r.epsilon.map_or(String::new(), |e| e.to_string()),
            opt(r.fidelity),
            r.input.alpha.re,
            r.input.alpha.im,
            r.input.beta.re,
            r.input.beta.im
        )
        .unwrap();
    }
}

/// Runs the configured campaign, one point or a sweep, and writes the
/// requested files. A point whose calibration or simulation fails is
/// recorded with its error and the sweep continues.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignSummary> {
    cfg.validate()?;
    let mut points = Vec::new();
    let mut log = cfg.trajectory_log.as_ref().map(|_| format!("{LOG_HEADER}\n"));
    match &cfg.sweep {
        None => {
            let (point, results) = run_point(cfg, &cfg.params, &cfg.detector, "none", 0.0)?;
            if let Some(l) = log.as_mut() {
                log_rows(l, 0.0, &results);
            }
            points.push(point);
        }
        Some(sweep) => {
            let name = sweep.variable.name();
            for &v in &sweep.values {
                let attempt = point_inputs(cfg, sweep.variable, v).and_then(|(p, d)| run_point(cfg, &p, &d, name, v));
                match attempt {
                    Ok((point, results)) => {
                        if let Some(l) = log.as_mut() {
                            log_rows(l, v, &results);
                        }
                        points.push(point);
                    }
                    Err(e) => {
                        log::warn!("{name} = {v}: {e}");
                        points.push(PointSummary::failed(cfg, name, v, &e));
                    }
                }
            }
        }
    }
    let plateau_edge = match &cfg.sweep {
        Some(s) if s.variable == SweepVariable::KappaT => plateau_edge(&points),
        _ => None,
    };
    let summary = CampaignSummary { points, plateau_edge };
    if let Some(path) = &cfg.output {
        write_file(path, &summary.to_csv())?;
    }
    if let (Some(path), Some(l)) = (&cfg.trajectory_log, &log) {
        write_file(path, l)?;
    }
    Ok(summary)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, contents)?;
    Ok(())
}

/// Sweep over κ′/2π values in MHz.
pub fn sweep_kappa(cfg: &CampaignConfig, values: &[f64]) -> Result<CampaignSummary> {
    run_campaign(&CampaignConfig {
        sweep: Some(Sweep {
            variable: SweepVariable::KappaT,
            values: values.to_vec(),
        }),
        ..cfg.clone()
    })
}

/// Sweep over the overall inefficiency 1 − η′.
pub fn sweep_inefficiency(cfg: &CampaignConfig, values: &[f64]) -> Result<CampaignSummary> {
    run_campaign(&CampaignConfig {
        sweep: Some(Sweep {
            variable: SweepVariable::OverallInefficiency,
            values: values.to_vec(),
        }),
        ..cfg.clone()
    })
}

/// The low-κ plateau is the mean fidelity of the first three valid points;
/// its edge is the last point of the leading run that stays within
/// [`PLATEAU_WINDOW`] of that mean.
pub fn plateau_edge(points: &[PointSummary]) -> Option<f64> {
    let valid: Vec<&PointSummary> = points.iter().filter(|p| p.avg_fidelity.is_finite()).collect();
    if valid.is_empty() {
        return None;
    }
    let head = valid.len().min(3);
    let reference = valid[..head].iter().map(|p| p.avg_fidelity).sum::<f64>() / head as f64;
    let mut edge = None;
    for p in valid {
        if (p.avg_fidelity - reference).abs() <= PLATEAU_WINDOW {
            edge = Some(p.sweep_value);
        } else {
            break;
        }
    }
    edge
}

/// Parses a trajectory log back into per-point results.
pub fn read_trajectory_log(text: &str) -> Result<Vec<(f64, TrajectoryResult)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LOG_HEADER) {
        return Err(Error::Parse("missing trajectory log header".into()));
    }
    let num = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}"))) };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Parse(format!("expected 9 fields in '{line}'")));
            }
            let input = QubitState {
                alpha: Complex64::new(num(f[5])?, num(f[6])?),
                beta: Complex64::new(num(f[7])?, num(f[8])?),
            };
            Ok((
                num(f[0])?,
                TrajectoryResult {
                    index: f[1].parse().map_err(|e| Error::Parse(format!("{e}")))?,
                    input,
                    accepted: f[2] == "1",
                    epsilon: if f[3].is_empty() {
                        None
                    } else {
                        Some(f[3].parse().map_err(|e| Error::Parse(format!("{e}")))?)
                    },
                    fidelity: if f[4].is_empty() { None } else { Some(num(f[4])?) },
                },
            ))
        })
        .collect()
}

/// Recomputes `(n_accepted, success_prob, avg_fidelity, stderr_fidelity,
/// stderr_success)` from logged trajectories.
pub fn summarize_results(results: &[TrajectoryResult]) -> (u64, f64, f64, f64, f64) {
    aggregate(results)
}
