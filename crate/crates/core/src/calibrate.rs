//! Stage-time and recovery-phase calibration by deterministic (jump-free)
//! evolution, seeded by the closed-form values.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use num_complex::Complex64;

use crate::analytic::{self, AnalyticTimes};
use crate::error::{Error, Result};
use crate::hilbert::{JointBasis, MatrixOperator, QubitState, SiteBasis, StateVector};
use crate::linalg::I;
use crate::model::{self, Detector, LaserSetting, ModelKind, PhysicalParams};
use crate::protocol::{self, final_wait, ProtocolKind, StageSchedule};
use crate::search::{self, Maximum};
use crate::trajectory::no_jump_propagator;

/// Time tolerance (µs) of every optimizer in this module.
pub const TOL: f64 = 1e-10;

/// Allowed spread of calibrated times around their analytic seeds before a
/// flag is raised.
pub const SEED_BAND: f64 = 0.5;

/// Grid peaks refined by golden section in the compensation scan.
const REFINED_PEAKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub t: f64,
    pub objective: f64,
    pub iterations: usize,
}

/// Period (µs) of the fast excited-state oscillation seen in the full model.
pub fn ripple_period(p: &PhysicalParams) -> f64 {
    let d = p.delta_detuning;
    TAU / (d + (p.omega_laser.powi(2) + p.g_coupling.powi(2)) / d)
}

/// `‖ψ − t<t|ψ>‖² / ‖ψ‖²` for a unit target `t`: one minus the normalized
/// overlap, computed without cancellation.
fn leakage(psi: &StateVector, target: &StateVector) -> f64 {
    let c = target.inner(psi);
    let rest: f64 = psi
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(x, t)| (x - t * c).norm_sqr())
        .sum();
    rest / psi.norm_sqr()
}

fn site_evolve(
    p: &PhysicalParams,
    model: ModelKind,
    laser_on: bool,
    init: &StateVector,
    t: f64,
) -> Result<StateVector> {
    let h = model::site_hamiltonian(p, &SiteBasis::default(), laser_on, model)?;
    no_jump_propagator(&h, t).apply(init)
}

/// Normalized overlap of the no-jump state evolved from `|10>` with `|01>`.
pub fn mapping_overlap(p: &PhysicalParams, model: ModelKind, t: f64) -> Result<f64> {
    let sb = SiteBasis::default();
    let psi = site_evolve(p, model, true, &StateVector::basis_state(sb.dim(), sb.index(1, 0)), t)?;
    Ok(1.0 - leakage(&psi, &StateVector::basis_state(sb.dim(), sb.index(0, 1))))
}

/// Normalized overlap of the no-jump state evolved from `|10>` with
/// `(|10> + i|01>)/√2`.
pub fn entangling_overlap(p: &PhysicalParams, model: ModelKind, t: f64) -> Result<f64> {
    let sb = SiteBasis::default();
    let psi = site_evolve(p, model, true, &StateVector::basis_state(sb.dim(), sb.index(1, 0)), t)?;
    let mut target = StateVector::zeros(sb.dim());
    target.amplitudes_mut()[sb.index(1, 0)] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    target.amplitudes_mut()[sb.index(0, 1)] = Complex64::new(0.0, FRAC_1_SQRT_2);
    Ok(1.0 - leakage(&psi, &target))
}

/// Multi-start maximization of a leakage-type objective around `seed`.
/// Works on `-leakage` so that values near the optimum keep full precision.
fn maximize_near<F>(f: F, seed: f64, p: &PhysicalParams) -> Result<Vec<Maximum>>
where
    F: Fn(f64) -> Result<f64>,
{
    let lo = (seed * (1.0 - 0.2)).max(0.0);
    let hi = seed * (1.0 + 0.2);
    let n_grid = (((hi - lo) / (ripple_period(p) / 12.0)).ceil() as usize).clamp(64, 20_000);
    let mut failure = None;
    let maxima = search::refined_maxima(
        |t| match f(t) {
            Ok(v) => -v,
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        n_grid,
        TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(maxima.into_iter().map(|m| Maximum { value: -m.value, ..m }).collect())
}

fn best(maxima: &[Maximum]) -> Result<Maximum> {
    maxima
        .iter()
        .copied()
        // smallest leakage
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::BracketFailure("no local optimum in the search window".into()))
}

/// Candidate mapping times: every local optimum near the analytic seed,
/// as `(t, leakage)` pairs in the `x`/`value` fields.
pub fn mapping_candidates(p: &PhysicalParams, model: ModelKind) -> Result<Vec<Maximum>> {
    let seed = analytic::t_map(p)?;
    maximize_near(|t| mapping_overlap(p, model, t).map(|o| 1.0 - o), seed, p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingOptimum {
    pub optimum: Optimum,
    /// Offset of the chosen local optimum from the analytic seed in units of
    /// the excited-state ripple period. Jumps in this index are the
    /// discontinuities of t_A under parameter sweeps.
    pub branch: i64,
}

pub fn calibrate_mapping(p: &PhysicalParams, model: ModelKind) -> Result<MappingOptimum> {
    let seed = analytic::t_map(p)?;
    let cands = mapping_candidates(p, model)?;
    let b = best(&cands)?;
    let iterations = cands.iter().map(|m| m.iterations).sum();
    Ok(MappingOptimum {
        optimum: Optimum {
            t: b.x,
            objective: 1.0 - b.value,
            iterations,
        },
        branch: ((b.x - seed) / ripple_period(p)).round() as i64,
    })
}

pub fn calibrate_mapping_time(p: &PhysicalParams, model: ModelKind) -> Result<f64> {
    calibrate_mapping(p, model).map(|m| m.optimum.t)
}

pub fn calibrate_entangling(p: &PhysicalParams, model: ModelKind) -> Result<Optimum> {
    let seed = analytic::t_entangle(p)?;
    let cands = maximize_near(|t| entangling_overlap(p, model, t).map(|o| 1.0 - o), seed, p)?;
    let b = best(&cands)?;
    Ok(Optimum {
        t: b.x,
        objective: 1.0 - b.value,
        iterations: cands.iter().map(|m| m.iterations).sum(),
    })
}

pub fn calibrate_entangling_time(p: &PhysicalParams, model: ModelKind) -> Result<f64> {
    calibrate_entangling(p, model).map(|o| o.t)
}

/// Point where the optimal mapping time switches between two local optima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSwitch {
    pub kappa: f64,
    pub t_before: f64,
    pub t_after: f64,
    /// Leakage difference of the two optima at `kappa`.
    pub objective_gap: f64,
}

/// Refines the local mapping optimum closest to `t_guess` within half a
/// ripple period.
fn track_mapping_optimum(p: &PhysicalParams, model: ModelKind, t_guess: f64) -> Result<Maximum> {
    let half = ripple_period(p) / 2.0;
    let mut failure = None;
    let m = search::golden_section_max(
        |t| match mapping_overlap(p, model, t) {
            Ok(o) => o - 1.0,
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        },
        t_guess - half,
        t_guess + half,
        TOL,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(Maximum { value: -m.value, ..m }),
    }
}

/// Bisects total κ (through κ′) between two values with different mapping
/// branches to the point where both optima are equally good.
pub fn locate_mapping_switch(
    p: &PhysicalParams,
    model: ModelKind,
    kappa_lo: f64,
    kappa_hi: f64,
) -> Result<BranchSwitch> {
    let at = |k: f64| p.with_kappa_t(k - p.kappa_a);
    let lo = calibrate_mapping(&at(kappa_lo)?, model)?;
    let hi = calibrate_mapping(&at(kappa_hi)?, model)?;
    if lo.branch == hi.branch {
        return Err(Error::BracketFailure(format!(
            "mapping branch {} on both ends of [{kappa_lo}, {kappa_hi}]",
            lo.branch
        )));
    }
    let (mut a, mut b) = (kappa_lo, kappa_hi);
    let (mut ta, mut tb) = (lo.optimum.t, hi.optimum.t);
    let gap = |k: f64, ta: f64, tb: f64| -> Result<(f64, f64, f64)> {
        let q = at(k)?;
        let x = track_mapping_optimum(&q, model, ta)?;
        let y = track_mapping_optimum(&q, model, tb)?;
        Ok((x.value - y.value, x.x, y.x))
    };
    for _ in 0..80 {
        if b - a < 1e-12 * b.max(1.0) {
            break;
        }
        let mid = 0.5 * (a + b);
        let (g, xa, xb) = gap(mid, ta, tb)?;
        // g < 0: the first optimum is still better
        if g < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        ta = xa;
        tb = xb;
    }
    let k = 0.5 * (a + b);
    let (g, xa, xb) = gap(k, ta, tb)?;
    Ok(BranchSwitch {
        kappa: k,
        t_before: xa,
        t_after: xb,
        objective_gap: g.abs(),
    })
}

/// Durations of the preparation windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepTimes {
    pub t_a: f64,
    pub t_b: f64,
}

/// Deterministic reference evolution of the joint system with a detector
/// click imposed at the start of the detection stage.
struct ReferencePass<'a> {
    p: &'a PhysicalParams,
    model: ModelKind,
    basis: JointBasis,
}

impl<'a> ReferencePass<'a> {
    fn new(p: &'a PhysicalParams, model: ModelKind) -> Self {
        Self {
            p,
            model,
            basis: JointBasis::default(),
        }
    }

    fn evolve(&self, psi: &StateVector, lasers: LaserSetting, t: f64) -> Result<StateVector> {
        let h = model::joint_hamiltonian(self.p, &self.basis, lasers, self.model)?;
        no_jump_propagator(&h, t).apply(psi)
    }

    /// Co-terminated preparation followed by the click of detector `det`.
    fn after_click(&self, input: &QubitState, prep: PrepTimes, det: Detector) -> Result<StateVector> {
        let mut psi = protocol::initial_state(input, &self.basis);
        let (lead, lead_lasers) = if prep.t_a >= prep.t_b {
            (prep.t_a - prep.t_b, LaserSetting::ALICE)
        } else {
            (prep.t_b - prep.t_a, LaserSetting::BOB)
        };
        psi = self.evolve(&psi, lead_lasers, lead)?;
        psi = self.evolve(&psi, LaserSetting::BOTH, prep.t_a.min(prep.t_b))?;
        let ops = model::detection_collapse_ops(self.p, &self.basis)?;
        let click: &MatrixOperator = &ops
            .iter()
            .find(|c| c.channel == model::Channel::Detection(det))
            .unwrap()
            .op;
        click.apply(&psi)?.normalized()
    }

    /// As [`Self::after_click`] without normalization, so the norm carries
    /// the no-click survival and click density.
    fn after_click_weighted(&self, input: &QubitState, prep: PrepTimes, det: Detector) -> Result<StateVector> {
        let mut psi = protocol::initial_state(input, &self.basis);
        let (lead, lead_lasers) = if prep.t_a >= prep.t_b {
            (prep.t_a - prep.t_b, LaserSetting::ALICE)
        } else {
            (prep.t_b - prep.t_a, LaserSetting::BOB)
        };
        psi = self.evolve(&psi, lead_lasers, lead)?;
        psi = self.evolve(&psi, LaserSetting::BOTH, prep.t_a.min(prep.t_b))?;
        let ops = model::detection_collapse_ops(self.p, &self.basis)?;
        let click: &MatrixOperator = &ops
            .iter()
            .find(|c| c.channel == model::Channel::Detection(det))
            .unwrap()
            .op;
        click.apply(&psi)
    }

    fn amp(&self, psi: &StateVector, alice: (usize, usize), bob: (usize, usize)) -> Complex64 {
        psi.get(self.basis.ket_index(alice, bob))
    }
}

/// Jump-free Modified pass over the six Pauli eigenstates, used to score
/// compensation times by output fidelity. These inputs form a qubit
/// 3-design, so the acceptance-weighted mean below equals the Haar average
/// of the pass.
pub struct CompensationProbe {
    inputs: Vec<QubitState>,
    after_detection: Vec<StateVector>,
    bob_h: MatrixOperator,
    final_wait: MatrixOperator,
    basis: JointBasis,
}

impl CompensationProbe {
    pub fn new(p: &PhysicalParams, model: ModelKind, prep: PrepTimes, t_d: f64, t_big_d: f64) -> Result<Self> {
        let pass = ReferencePass::new(p, model);
        let s = FRAC_1_SQRT_2;
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let inputs = vec![
            QubitState::zero(),
            QubitState::one(),
            QubitState::new(c(s, 0.0), c(s, 0.0))?,
            QubitState::new(c(s, 0.0), c(-s, 0.0))?,
            QubitState::new(c(s, 0.0), c(0.0, s))?,
            QubitState::new(c(s, 0.0), c(0.0, -s))?,
        ];
        let off = model::joint_hamiltonian(p, &pass.basis, LaserSetting::OFF, model)?;
        let detect = no_jump_propagator(&off, t_d);
        let after_detection = inputs
            .iter()
            .map(|q| detect.apply(&pass.after_click_weighted(q, prep, Detector::Plus)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            inputs,
            after_detection,
            bob_h: model::joint_hamiltonian(p, &pass.basis, LaserSetting::BOB, model)?,
            final_wait: no_jump_propagator(&off, t_big_d),
            basis: pass.basis,
        })
    }

    /// Weighted mean fidelity after compensation of length `t_c`, with the
    /// recovery phase chosen optimally.
    pub fn fidelity(&self, t_c: f64) -> Result<f64> {
        let u = no_jump_propagator(&self.bob_h, t_c);
        let states = self
            .after_detection
            .iter()
            .map(|psi| u.apply(psi))
            .collect::<Result<Vec<_>>>()?;
        self.score(&states)
    }

    /// `fidelity` on the uniform grid `k * hi / n`, `k = 0..=n`, by repeated
    /// application of one step propagator.
    pub fn fidelity_grid(&self, hi: f64, n: usize) -> Result<Vec<(f64, f64)>> {
        let step = no_jump_propagator(&self.bob_h, hi / n as f64);
        let mut states = self.after_detection.clone();
        let mut out = Vec::with_capacity(n + 1);
        for k in 0..=n {
            if k > 0 {
                states = states.iter().map(|psi| step.apply(psi)).collect::<Result<Vec<_>>>()?;
            }
            out.push((hi * k as f64 / n as f64, self.score(&states)?));
        }
        Ok(out)
    }

    fn score(&self, after_compensation: &[StateVector]) -> Result<f64> {
        let (mut diag, mut coh, mut weight) = (0.0, Complex64::new(0.0, 0.0), 0.0);
        for (q, psi) in self.inputs.iter().zip(after_compensation) {
            let out = self.final_wait.apply(psi)?;
            let w = out.norm_sqr();
            if w == 0.0 {
                continue;
            }
            let rho = crate::hilbert::reduced_density_bob_atom(&out, &self.basis)?.mapv(|z| z * w);
            diag += (q.alpha.norm_sqr() * rho[[0, 0]] + q.beta.norm_sqr() * rho[[1, 1]]).re;
            coh += q.beta.conj() * q.alpha * rho[[1, 0]];
            weight += w;
        }
        if weight == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok((diag + 2.0 * coh.norm()) / weight)
    }
}

/// Phase error (rad) of Bob's photon-to-atom amplitude ratio, with Alice
/// in `|00>`, relative to `−i` after a detection window of length `t_d`.
pub fn detection_phase_error(p: &PhysicalParams, model: ModelKind, prep: PrepTimes, t_d: f64) -> Result<f64> {
    let pass = ReferencePass::new(p, model);
    let psi = pass.after_click(&QubitState::one(), prep, Detector::Plus)?;
    let psi = pass.evolve(&psi, LaserSetting::OFF, t_d)?;
    let c10 = pass.amp(&psi, (0, 0), (1, 0));
    let c01 = pass.amp(&psi, (0, 0), (0, 1));
    if c10.norm() < 1e-150 || c01.norm() < 1e-150 {
        return Err(Error::DegenerateReference(format!(
            "vanishing amplitudes after detection window {t_d}"
        )));
    }
    Ok((c01 / c10 * I).arg())
}

/// The detection time with zero phase error closest to π(2m + 1)/δ.
/// `objective` is the cosine of the residual phase error.
pub fn calibrate_detection(p: &PhysicalParams, model: ModelKind, m: u32, prep: PrepTimes) -> Result<Optimum> {
    let seed = analytic::t_detect_choice(p, m);
    let half = PI / (2.0 * p.delta());
    let mut iterations = 0;
    let mut failure = None;
    let t = search::bisect(
        |t| {
            iterations += 1;
            match detection_phase_error(p, model, prep, t) {
                Ok(e) => e,
                Err(err) => {
                    failure = Some(err);
                    f64::NAN
                }
            }
        },
        (seed - half).max(0.0),
        seed + half,
        TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let t = t?;
    Ok(Optimum {
        t,
        objective: detection_phase_error(p, model, prep, t)?.cos(),
        iterations,
    })
}

pub fn calibrate_detection_time(p: &PhysicalParams, model: ModelKind, m: u32, prep: PrepTimes) -> Result<f64> {
    calibrate_detection(p, model, m, prep).map(|o| o.t)
}

/// Reference state after detection I for the amplitude-ratio objective.
struct RatioProbe<'a> {
    pass: ReferencePass<'a>,
    after_detection: StateVector,
    bob_h: MatrixOperator,
}

impl<'a> RatioProbe<'a> {
    fn new(p: &'a PhysicalParams, model: ModelKind, prep: PrepTimes, t_d: f64) -> Result<Self> {
        let pass = ReferencePass::new(p, model);
        let psi = pass.after_click(&QubitState::plus(), prep, Detector::Plus)?;
        let after_detection = pass.evolve(&psi, LaserSetting::OFF, t_d)?;
        let bob_h = model::joint_hamiltonian(p, &pass.basis, LaserSetting::BOB, model)?;
        Ok(Self {
            pass,
            after_detection,
            bob_h,
        })
    }

    fn ratio_of(&self, psi: &StateVector) -> Result<f64> {
        let c0 = self.pass.amp(psi, (0, 0), (0, 0));
        if c0.norm() < 1e-150 {
            return Err(Error::DegenerateReference("vanishing |0> amplitude".into()));
        }
        Ok(self.pass.amp(psi, (0, 0), (1, 0)).norm() / c0.norm())
    }

    fn ratio(&self, t_c: f64) -> Result<f64> {
        self.ratio_of(&no_jump_propagator(&self.bob_h, t_c).apply(&self.after_detection)?)
    }

    fn grid(&self, hi: f64, n: usize) -> Result<Vec<(f64, f64)>> {
        let step = no_jump_propagator(&self.bob_h, hi / n as f64);
        let mut psi = self.after_detection.clone();
        let mut out = Vec::with_capacity(n + 1);
        for k in 0..=n {
            if k > 0 {
                psi = step.apply(&psi)?;
            }
            out.push((hi * k as f64 / n as f64, self.ratio_of(&psi)?));
        }
        Ok(out)
    }
}

/// `|c(00_A, 10_B)| / |c(00_A, 00_B)|` after compensation of length `t_c`,
/// for the reference input `α = β`. Equals one when the damping of the
/// `|1>` amplitude has been undone.
pub fn compensation_ratio(p: &PhysicalParams, model: ModelKind, prep: PrepTimes, t_d: f64, t_c: f64) -> Result<f64> {
    RatioProbe::new(p, model, prep, t_d)?.ratio(t_c)
}

/// Refines the best `REFINED_PEAKS` local maxima of `grid` (spacing `h`,
/// domain `[0, hi]`) and returns the best.
fn refine_peaks<F>(grid: &[(f64, f64)], h: f64, hi: f64, f: F) -> Result<Maximum>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut peaks = search::local_maxima(grid);
    peaks.sort_by(|&i, &j| grid[j].1.total_cmp(&grid[i].1));
    let mut failure = None;
    let mut best: Option<Maximum> = None;
    for &k in peaks.iter().take(REFINED_PEAKS) {
        let (x0, f0) = grid[k];
        let mut m = search::golden_section_max(
            |x| match f(x) {
                Ok(v) => v,
                Err(e) => {
                    failure = Some(e);
                    f64::NEG_INFINITY
                }
            },
            (x0 - h).max(0.0),
            (x0 + h).min(hi),
            TOL,
        );
        if f0 > m.value {
            m.x = x0;
            m.value = f0;
        }
        m.iterations += grid.len();
        if best.is_none_or(|b| m.value > b.value) {
            best = Some(m);
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    best.ok_or_else(|| Error::BracketFailure(format!("no maximum on [0, {hi}]")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensationOptimum {
    pub t: f64,
    /// Achieved amplitude ratio (one when exact).
    pub ratio: f64,
    /// True when no t_c reaches ratio one and the ratio maximizer is used.
    pub saturated: bool,
    pub iterations: usize,
}

/// Smallest t_c restoring the `|1>` amplitude, or the ratio maximizer when
/// that is impossible.
pub fn calibrate_compensation(
    p: &PhysicalParams,
    model: ModelKind,
    prep: PrepTimes,
    t_d: f64,
) -> Result<CompensationOptimum> {
    if p.kappa() == 0.0 {
        return Ok(CompensationOptimum {
            t: 0.0,
            ratio: 1.0,
            saturated: false,
            iterations: 0,
        });
    }
    let probe = RatioProbe::new(p, model, prep, t_d)?;
    let r0 = probe.ratio(0.0)?;
    if r0 >= 1.0 {
        return Ok(CompensationOptimum {
            t: 0.0,
            ratio: r0,
            saturated: false,
            iterations: 1,
        });
    }
    let seed = analytic::t_compensate_max(p, t_d)?;
    let hi = 1.5 * seed + ripple_period(p);
    let n = ((hi / (ripple_period(p) / 12.0)).ceil() as usize).clamp(64, 20_000);
    let grid = probe.grid(hi, n)?;
    if let Some(k) = grid.iter().position(|&(_, r)| r >= 1.0) {
        let mut failure = None;
        let mut iterations = k + 1;
        let root = search::bisect(
            |x| {
                iterations += 1;
                match probe.ratio(x) {
                    Ok(r) => r - 1.0,
                    Err(e) => {
                        failure = Some(e);
                        f64::NAN
                    }
                }
            },
            grid[k - 1].0,
            grid[k].0,
            TOL,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let root = root?;
        return Ok(CompensationOptimum {
            t: root,
            ratio: probe.ratio(root)?,
            saturated: false,
            iterations,
        });
    }
    let m = refine_peaks(&grid, hi / n as f64, hi, |x| probe.ratio(x))?;
    Ok(CompensationOptimum {
        t: m.x,
        ratio: m.value,
        saturated: true,
        iterations: m.iterations,
    })
}

/// Like [`calibrate_compensation`] but fails when compensation is
/// impossible.
pub fn calibrate_compensation_time(p: &PhysicalParams, model: ModelKind, prep: PrepTimes, t_d: f64) -> Result<f64> {
    let c = calibrate_compensation(p, model, prep, t_d)?;
    if c.saturated {
        return Err(Error::CompensationInfeasible {
            kappa: p.kappa(),
            t_d,
            best_gain: c.ratio,
        });
    }
    Ok(c.t)
}

/// Compensation time maximizing the mean output fidelity of the jump-free
/// pass (see [`CompensationProbe`]) on `[0, 1.5 t_c,max + ripple]`. Unlike
/// the amplitude-ratio root this accounts for excited-state population left
/// by the compensation pulse.
pub fn calibrate_compensation_by_fidelity(
    p: &PhysicalParams,
    model: ModelKind,
    prep: PrepTimes,
    t_d: f64,
    t_big_d: f64,
) -> Result<Optimum> {
    let probe = CompensationProbe::new(p, model, prep, t_d, t_big_d)?;
    if p.kappa() == 0.0 {
        return Ok(Optimum {
            t: 0.0,
            objective: probe.fidelity(0.0)?,
            iterations: 1,
        });
    }
    let ripple = ripple_period(p);
    let hi = 1.5 * analytic::t_compensate_max(p, t_d)? + ripple;
    let n = ((hi / (ripple / 12.0)).ceil() as usize).clamp(64, 20_000);
    let grid = probe.fidelity_grid(hi, n)?;
    let m = refine_peaks(&grid, hi / n as f64, hi, |x| probe.fidelity(x))?;
    Ok(Optimum {
        t: m.x,
        objective: m.value,
        iterations: m.iterations,
    })
}

/// Final jump-free state of a protocol pass with detector `det` imposed at
/// the start of the (first) detection stage. Unnormalized.
pub fn reference_final_state(
    kind: ProtocolKind,
    p: &PhysicalParams,
    model: ModelKind,
    sched: &StageSchedule,
    input: &QubitState,
    det: Detector,
) -> Result<StateVector> {
    let pass = ReferencePass::new(p, model);
    let prep = PrepTimes {
        t_a: sched.t_a,
        t_b: sched.t_b,
    };
    let psi = pass.after_click(input, prep, det)?;
    match kind {
        ProtocolKind::Original => pass.evolve(&psi, LaserSetting::OFF, sched.t_big_d),
        ProtocolKind::Modified => {
            let psi = pass.evolve(&psi, LaserSetting::OFF, sched.t_d)?;
            let psi = pass.evolve(&psi, LaserSetting::BOB, sched.t_c)?;
            pass.evolve(&psi, LaserSetting::OFF, sched.t_big_d)
        }
    }
}

/// Relative phase `arg(c1/c0)` of Bob's atom with Alice in `|00>` and no
/// photon on Bob's side.
fn bob_relative_phase(psi: &StateVector, basis: &JointBasis) -> Result<f64> {
    let c0 = psi.get(basis.ket_index((0, 0), (0, 0)));
    let c1 = psi.get(basis.ket_index((0, 0), (1, 0)));
    if c0.norm() < 1e-150 || c1.norm() < 1e-150 {
        return Err(Error::DegenerateReference("vanishing Bob amplitude".into()));
    }
    Ok((c1 / c0).arg())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryPhase {
    pub theta: f64,
    /// Largest phase error over the extra check inputs (rad).
    pub input_dependence: f64,
}

/// Phase restoring the reference input `(|0> + |1>)/√2` after a jump-free
/// pass conditioned on detector sign `epsilon`.
pub fn calibrate_recovery(
    kind: ProtocolKind,
    p: &PhysicalParams,
    sched: &StageSchedule,
    model: ModelKind,
    epsilon: i8,
) -> Result<RecoveryPhase> {
    let det = Detector::from_epsilon(epsilon).ok_or(Error::InvalidParameter {
        name: "epsilon",
        value: epsilon as f64,
        reason: "must be +1 or -1",
    })?;
    let basis = JointBasis::default();
    let phase_for = |q: &QubitState| -> Result<f64> {
        let psi = reference_final_state(kind, p, model, sched, q, det)?;
        Ok((q.beta / q.alpha).arg() - bob_relative_phase(&psi, &basis)?)
    };
    let theta = phase_for(&QubitState::plus())?;
    let checks = [
        QubitState::normalize(Complex64::new(0.8, 0.0), Complex64::new(0.36, 0.48))?,
        QubitState::normalize(Complex64::new(0.3, -0.2), Complex64::new(-0.5, 0.9))?,
    ];
    let mut input_dependence: f64 = 0.0;
    for q in &checks {
        let d = (phase_for(q)? - theta + PI).rem_euclid(TAU) - PI;
        input_dependence = input_dependence.max(d.abs());
    }
    Ok(RecoveryPhase {
        theta: theta.rem_euclid(TAU),
        input_dependence,
    })
}

pub fn calibrate_recovery_phase(
    kind: ProtocolKind,
    p: &PhysicalParams,
    sched: &StageSchedule,
    model: ModelKind,
    epsilon: i8,
) -> Result<f64> {
    calibrate_recovery(kind, p, sched, model, epsilon).map(|r| r.theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub schedule: StageSchedule,
    pub seeds: AnalyticTimes,
    pub mapping: MappingOptimum,
    pub entangling: Optimum,
    pub detection: Optimum,
    /// Amplitude-ratio calibration; sets t_c for the effective model.
    pub compensation: CompensationOptimum,
    /// Fidelity calibration; sets t_c for the full model.
    pub compensation_fidelity: Option<Optimum>,
    pub recovery_plus: RecoveryPhase,
    pub recovery_minus: RecoveryPhase,
    /// Notes on calibrated values that left the ±50 % seed band or were
    /// otherwise approximate.
    pub flags: Vec<String>,
}

/// Calibrates every stage time and both recovery phases. The original
/// protocol ignores t_d and t_c; they are still reported.
pub fn calibrate(
    kind: ProtocolKind,
    p: &PhysicalParams,
    model: ModelKind,
    m: u32,
    t_big_over_kappa: f64,
) -> Result<CalibrationReport> {
    let seeds = AnalyticTimes::compute(p, m)?;
    let mapping = calibrate_mapping(p, model)?;
    let entangling = calibrate_entangling(p, model)?;
    let prep = PrepTimes {
        t_a: mapping.optimum.t,
        t_b: entangling.t,
    };
    let detection = calibrate_detection(p, model, m, prep)?;
    let compensation = calibrate_compensation(p, model, prep, detection.t)?;
    let t_big_d = final_wait(p, t_big_over_kappa)?;
    let compensation_fidelity = match model {
        ModelKind::Full => Some(calibrate_compensation_by_fidelity(
            p,
            model,
            prep,
            detection.t,
            t_big_d,
        )?),
        ModelKind::Effective => None,
    };
    let t_c = compensation_fidelity.map_or(compensation.t, |o| o.t);
    let mut flags = Vec::new();
    let modified = kind == ProtocolKind::Modified;
    if modified && compensation.saturated {
        let note = if compensation_fidelity.is_some() {
            "; t_c set by fidelity"
        } else {
            ""
        };
        flags.push(format!(
            "amplitude ratio cannot reach one (best {} at t_c = {}){note}",
            compensation.ratio, compensation.t
        ));
    }
    let mut seeded = vec![("t_A", prep.t_a, seeds.t_a), ("t_B", prep.t_b, seeds.t_b)];
    if modified {
        seeded.push(("t_d", detection.t, seeds.t_d));
        seeded.push(("t_c", t_c, seeds.t_c.unwrap_or(seeds.t_c_max)));
    }
    for (name, v, seed) in seeded {
        if seed > 0.0 && (v - seed).abs() > SEED_BAND * seed {
            flags.push(format!("{name} = {v} is outside ±50% of its seed {seed}"));
        }
    }
    let mut schedule = StageSchedule {
        t_a: prep.t_a,
        t_b: prep.t_b,
        t_d: detection.t,
        t_c,
        t_big_d,
        theta_plus: 0.0,
        theta_minus: 0.0,
    };
    let recovery_plus = calibrate_recovery(kind, p, &schedule, model, 1)?;
    let recovery_minus = calibrate_recovery(kind, p, &schedule, model, -1)?;
    for r in [recovery_plus, recovery_minus] {
        if r.input_dependence > 1e-3 {
            flags.push(format!(
                "recovery phase depends on the input by {} rad",
                r.input_dependence
            ));
        }
    }
    schedule.theta_plus = recovery_plus.theta;
    schedule.theta_minus = recovery_minus.theta;
    for f in &flags {
        log::warn!("{f}");
    }
    Ok(CalibrationReport {
        schedule,
        seeds,
        mapping,
        entangling,
        detection,
        compensation,
        compensation_fidelity,
        recovery_plus,
        recovery_minus,
        flags,
    })
}

/// Fidelity of the normalized jump-free reference output after recovery.
pub fn reference_fidelity(
    kind: ProtocolKind,
    p: &PhysicalParams,
    model: ModelKind,
    sched: &StageSchedule,
    input: &QubitState,
    epsilon: i8,
) -> Result<f64> {
    let det = Detector::from_epsilon(epsilon).ok_or(Error::ZeroNorm)?;
    let basis = JointBasis::default();
    let psi = reference_final_state(kind, p, model, sched, input, det)?;
    let psi = protocol::apply_recovery(&psi, epsilon, sched, &basis);
    crate::hilbert::qubit_fidelity(input, &psi, &basis)
}
