use std::f64::consts::TAU;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cqed_teleport::analytic::{self, AnalyticTimes};
use cqed_teleport::calibrate;
use cqed_teleport::config::Settings;
use cqed_teleport::experiment::{
    run_campaign, sample_input_state, sweep_inefficiency, sweep_kappa, CampaignSummary, Sweep,
};
use cqed_teleport::hilbert::QubitState;
use cqed_teleport::protocol::ProtocolRunner;
use cqed_teleport::trajectory::RngStream;
use cqed_teleport::Result;

#[derive(Parser)]
#[command(
    name = "cqed-teleport",
    version,
    about = "Trajectory simulation of cavity-QED atomic teleportation"
)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Rates are ν-values in MHz (the code multiplies by 2π); dark counts in kHz.
#[derive(Args, Default)]
struct Opts {
    /// `key = value` file; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    delta_mhz: Option<f64>,
    #[arg(long, global = true)]
    omega_mhz: Option<f64>,
    #[arg(long, global = true)]
    g_mhz: Option<f64>,
    #[arg(long, global = true)]
    gamma_mhz: Option<f64>,
    /// Transmission part κ′ of the cavity decay.
    #[arg(long, global = true)]
    kappa_t_mhz: Option<f64>,
    /// Absorption part κ″ of the cavity decay.
    #[arg(long, global = true)]
    kappa_a_mhz: Option<f64>,
    /// Fraction of spontaneous decay ending in |0>.
    #[arg(long = "branching-to-0", global = true)]
    branching_to_0: Option<f64>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    eta_p: Option<f64>,
    #[arg(long, global = true)]
    dark_khz: Option<f64>,
    /// Read --dark-khz as the total over both detectors.
    #[arg(long, global = true)]
    dark_total: bool,
    /// original | modified
    #[arg(long, global = true)]
    protocol: Option<String>,
    /// full | effective
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    n_traj: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Detection-time branch m in t_d = π(2m+1)/δ.
    #[arg(long, global = true)]
    m_index: Option<u32>,
    /// Final wait in units of 1/κ.
    #[arg(long, global = true)]
    t_big_over_kappa: Option<f64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Summary CSV path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Per-trajectory CSV path.
    #[arg(long, global = true)]
    log_trajectories: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Calibrated stage times next to the closed-form seeds.
    Times,
    /// Closed-form quantities of the effective model.
    Analytic,
    /// One trajectory with its full event record.
    Run {
        /// Trajectory index within the seed's stream family.
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Single-point campaign; prints the summary CSV.
    Campaign,
    /// Sweep of κ′/2π (MHz).
    SweepKappa {
        /// Comma-separated values; defaults to 0.02..=0.35 in 0.01 steps.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Sweep of the overall detection inefficiency 1 − η′.
    SweepEta {
        /// Comma-separated values in [0, 1]; defaults to 0..=1 in 0.1 steps.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
}

fn settings(o: &Opts) -> Result<Settings> {
    let mut s = match &o.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let num = |x: Option<f64>| x.map(|v| v.to_string());
    let pairs = [
        ("delta_mhz", num(o.delta_mhz)),
        ("omega_mhz", num(o.omega_mhz)),
        ("g_mhz", num(o.g_mhz)),
        ("gamma_mhz", num(o.gamma_mhz)),
        ("kappa_t_mhz", num(o.kappa_t_mhz)),
        ("kappa_a_mhz", num(o.kappa_a_mhz)),
        ("branching_to_0", num(o.branching_to_0)),
        ("eta", num(o.eta)),
        ("eta_p", num(o.eta_p)),
        ("dark_khz", num(o.dark_khz)),
        ("dark_total", o.dark_total.then(|| "true".to_string())),
        ("protocol", o.protocol.clone()),
        ("model", o.model.clone()),
        ("n_traj", o.n_traj.map(|v| v.to_string())),
        ("seed", o.seed.map(|v| v.to_string())),
        ("m_index", o.m_index.map(|v| v.to_string())),
        ("t_big_over_kappa", num(o.t_big_over_kappa)),
        ("workers", o.workers.map(|v| v.to_string())),
        ("out", o.out.as_ref().map(|p| p.display().to_string())),
        (
            "log_trajectories",
            o.log_trajectories.as_ref().map(|p| p.display().to_string()),
        ),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            s.set(k, &v)?;
        }
    }
    Ok(s)
}

fn fmt_qubit(q: &QubitState) -> String {
    format!(
        "({:.4}{:+.4}i)|0> + ({:.4}{:+.4}i)|1>",
        q.alpha.re, q.alpha.im, q.beta.re, q.beta.im
    )
}

fn times(s: &Settings) -> Result<()> {
    let p = s.params()?;
    let r = calibrate::calibrate(s.protocol, &p, s.model, s.m_index, s.t_big_over_kappa)?;
    let seeds = r.seeds;
    let sch = r.schedule;
    println!(
        "protocol {} model {} kappa_t/2pi {} MHz",
        s.protocol, s.model, s.kappa_t_mhz
    );
    println!("{:<8} {:>14} {:>14}", "time", "calibrated", "closed form");
    let tc_seed = seeds.t_c.unwrap_or(f64::NAN);
    for (name, cal, seed) in [
        ("t_A", sch.t_a, seeds.t_a),
        ("t_B", sch.t_b, seeds.t_b),
        ("t_d", sch.t_d, seeds.t_d),
        ("t_c", sch.t_c, tc_seed),
        ("t_D", sch.t_big_d, f64::NAN),
    ] {
        println!("{name:<8} {cal:>14.6} {seed:>14.6}");
    }
    println!("theta+   {:>14.6}", sch.theta_plus);
    println!("theta-   {:>14.6}", sch.theta_minus);
    println!("mapping branch {}", r.mapping.branch);
    for f in &r.flags {
        println!("flag: {f}");
    }
    for w in p.saturation_warnings() {
        println!("warning: {w}");
    }
    Ok(())
}

fn analytic_report(s: &Settings) -> Result<()> {
    let p = s.params()?;
    let t = AnalyticTimes::compute(&p, s.m_index)?;
    let show = |x: Option<f64>| x.map_or("infeasible".to_string(), |v| format!("{v:.6}"));
    println!("delta        {:.6} rad/us", p.delta());
    println!("Omega_kappa  {:.6} rad/us", p.omega_kappa());
    println!("eta_a        {:.6}", p.eta_a());
    println!("t_A          {:.6} us", t.t_a);
    println!("t_B          {:.6} us", t.t_b);
    println!("t_d          {:.6} us", t.t_d);
    println!("t_c          {}", show(t.t_c));
    println!("t_c,max      {:.6} us", t.t_c_max);
    println!("t_d,max      {:.6} us", analytic::t_detect_max(&p)?);
    println!("P(no click, Bob prep)  {:.6}", analytic::prob_prep_bob(&p)?);
    match analytic::max_kappa_for_compensation(&p, s.m_index) {
        Ok(k) => println!("compensation possible up to kappa/2pi = {:.6} MHz", k / TAU),
        Err(e) => println!("compensation threshold: {e}"),
    }
    Ok(())
}

fn run_one(s: &Settings, index: u64) -> Result<()> {
    let p = s.params()?;
    let det = s.detector()?;
    let r = calibrate::calibrate(s.protocol, &p, s.model, s.m_index, s.t_big_over_kappa)?;
    let runner = ProtocolRunner::new(s.protocol, &p, r.schedule, s.model)?;
    let mut rng = RngStream::new(s.seed, index);
    let input = sample_input_state(&mut rng);
    let o = runner.run(&input, &det, &mut rng)?;
    println!("seed {} index {index}", s.seed);
    println!("input {}", fmt_qubit(&input));
    for (stage, rec) in &o.records {
        println!("stage {}: {} event(s)", stage.name(), rec.events.len());
        for e in &rec.events {
            println!(
                "  t = {:.6} us  {:?}{}",
                e.time,
                e.kind,
                if e.observed { "" } else { " (unobserved)" }
            );
        }
    }
    match (o.accepted, o.epsilon, o.fidelity) {
        (true, Some(eps), Some(f)) => println!("accepted, epsilon {eps:+}, fidelity {f:.6}"),
        _ => println!("rejected: {:?}", o.reject_reason),
    }
    Ok(())
}

fn emit(summary: &CampaignSummary, to_stdout: bool) {
    if to_stdout {
        print!("{}", summary.to_csv());
    }
    for pt in &summary.points {
        if let Some(e) = &pt.error {
            eprintln!("point {} = {}: {e}", pt.sweep_var, pt.sweep_value);
        }
        for f in &pt.calibration_flags {
            eprintln!("point {} = {}: {f}", pt.sweep_var, pt.sweep_value);
        }
    }
    if let Some(edge) = summary.plateau_edge {
        eprintln!("plateau edge: kappa_t/2pi = {edge} MHz");
    }
}

fn execute(cli: Cli) -> Result<()> {
    let s = settings(&cli.opts)?;
    match cli.cmd {
        Cmd::Times => times(&s),
        Cmd::Analytic => analytic_report(&s),
        Cmd::Run { index } => run_one(&s, index),
        Cmd::Campaign => {
            let sum = run_campaign(&s.campaign()?)?;
            emit(&sum, true);
            Ok(())
        }
        Cmd::SweepKappa { values } => {
            let values = values.unwrap_or_else(|| Sweep::default_kappa().values);
            let sum = sweep_kappa(&s.campaign()?, &values)?;
            emit(&sum, true);
            Ok(())
        }
        Cmd::SweepEta { values } => {
            let values = values.unwrap_or_else(|| (0..=10).map(|k| k as f64 / 10.0).collect());
            let sum = sweep_inefficiency(&s.campaign()?, &values)?;
            emit(&sum, true);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
