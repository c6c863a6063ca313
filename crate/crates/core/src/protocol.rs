//! Stage machines of the original and the compensated teleportation
//! protocols.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::analytic::AnalyticTimes;
use crate::error::{Error, Result};
use crate::hilbert::{qubit_fidelity, JointBasis, QubitState, StateVector};
use crate::model::{LaserSetting, ModelKind, PhysicalParams};
use crate::trajectory::{run_segment, CompiledSegment, DetectorModel, EventRecord, RngStream, SegmentSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    Original,
    Modified,
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" => Ok(Self::Original),
            "modified" => Ok(Self::Modified),
            other => Err(Error::Parse(format!("unknown protocol '{other}'"))),
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Original => "original",
            Self::Modified => "modified",
        })
    }
}

/// Stage durations (µs) and recovery phases (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSchedule {
    pub t_a: f64,
    pub t_b: f64,
    pub t_d: f64,
    pub t_c: f64,
    pub t_big_d: f64,
    pub theta_plus: f64,
    pub theta_minus: f64,
}

impl StageSchedule {
    /// Closed-form schedule of the effective model. When compensation is
    /// infeasible the gain-maximizing t_c is used instead.
    pub fn analytic(kind: ProtocolKind, p: &PhysicalParams, m: u32, t_big_over_kappa: f64) -> Result<Self> {
        let times = AnalyticTimes::compute(p, m)?;
        let t_c = times.t_c.unwrap_or(times.t_c_max);
        let t_big_d = final_wait(p, t_big_over_kappa)?;
        let shift = match kind {
            ProtocolKind::Original => p.delta() * times.t_a,
            ProtocolKind::Modified => p.delta() * (times.t_a + t_c),
        };
        Ok(Self {
            t_a: times.t_a,
            t_b: times.t_b,
            t_d: times.t_d,
            t_c,
            t_big_d,
            theta_plus: FRAC_PI_2 - shift,
            theta_minus: -FRAC_PI_2 - shift,
        })
    }

    pub fn theta(&self, epsilon: i8) -> f64 {
        if epsilon >= 0 {
            self.theta_plus
        } else {
            self.theta_minus
        }
    }

    pub fn validate(&self, p: &PhysicalParams) -> Result<()> {
        for (name, v) in [
            ("t_A", self.t_a),
            ("t_B", self.t_b),
            ("t_d", self.t_d),
            ("t_c", self.t_c),
            ("t_D", self.t_big_d),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "stage times must be finite and nonnegative",
                });
            }
        }
        if self.t_big_d * p.kappa() < 5.0 {
            log::warn!("t_D = {} µs is shorter than 5/kappa", self.t_big_d);
        }
        Ok(())
    }
}

/// `t_D = factor / κ`.
pub fn final_wait(p: &PhysicalParams, factor: f64) -> Result<f64> {
    if !(p.kappa() > 0.0) || !(factor > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_big_over_kappa",
            value: factor,
            reason: "needs positive kappa and factor",
        });
    }
    Ok(factor / p.kappa())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Preparation,
    /// Single detection stage of the original protocol.
    Detection,
    DetectionI,
    Compensation,
    DetectionII,
}

impl Stage {
    pub fn requires_single_click(self) -> bool {
        matches!(self, Self::Detection | Self::DetectionI)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Preparation => "preparation",
            Self::Detection => "detection",
            Self::DetectionI => "detection I",
            Self::Compensation => "compensation",
            Self::DetectionII => "detection II",
        }
    }
}

pub fn stages(kind: ProtocolKind) -> &'static [Stage] {
    match kind {
        ProtocolKind::Original => &[Stage::Preparation, Stage::Detection],
        ProtocolKind::Modified => &[
            Stage::Preparation,
            Stage::DetectionI,
            Stage::Compensation,
            Stage::DetectionII,
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    ClickInNoClickStage,
    WrongClickCountDetection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub accepted: bool,
    pub epsilon: Option<i8>,
    pub reject_reason: Option<RejectReason>,
}

impl Classification {
    fn reject(reason: RejectReason) -> Self {
        Self {
            accepted: false,
            epsilon: None,
            reject_reason: Some(reason),
        }
    }
}

/// Accepts iff every no-click stage has no observed event and the detection
/// stage has exactly one. Real and dark clicks are indistinguishable. A
/// stage absent from `records` counts as silent.
pub fn classify_record(kind: ProtocolKind, records: &[(Stage, EventRecord)]) -> Classification {
    let mut epsilon = None;
    for &stage in stages(kind) {
        let observed: Vec<_> = records
            .iter()
            .filter(|(s, _)| *s == stage)
            .flat_map(|(_, r)| r.observed())
            .collect();
        if stage.requires_single_click() {
            if observed.len() != 1 {
                return Classification::reject(RejectReason::WrongClickCountDetection);
            }
            epsilon = observed[0].kind.detector().map(|d| d.epsilon() as i8);
        } else if !observed.is_empty() {
            return Classification::reject(RejectReason::ClickInNoClickStage);
        }
    }
    Classification {
        accepted: true,
        epsilon,
        reject_reason: None,
    }
}

/// Multiplies every amplitude with Bob's atom in `|1>` by `e^{iθ}`.
pub fn apply_recovery_phase(psi: &StateVector, theta: f64, basis: &JointBasis) -> StateVector {
    let phase = Complex64::from_polar(1.0, theta);
    let mut out = psi.clone();
    for (idx, amp) in out.as_slice_mut().iter_mut().enumerate() {
        let (_, bob) = basis.split(idx);
        if basis.site.label(bob).0 == 1 {
            *amp *= phase;
        }
    }
    out
}

/// Recovery conditioned on the detector sign ε.
pub fn apply_recovery(psi: &StateVector, epsilon: i8, sched: &StageSchedule, basis: &JointBasis) -> StateVector {
    apply_recovery_phase(psi, sched.theta(epsilon), basis)
}

/// `(α|00> + β|10>)_A ⊗ |10>_B`.
pub fn initial_state(input: &QubitState, basis: &JointBasis) -> StateVector {
    let mut psi = StateVector::zeros(basis.dim());
    let bob = (1, 0);
    psi.amplitudes_mut()[basis.ket_index((0, 0), bob)] = input.alpha;
    psi.amplitudes_mut()[basis.ket_index((1, 0), bob)] = input.beta;
    psi
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub accepted: bool,
    pub epsilon: Option<i8>,
    pub fidelity: Option<f64>,
    /// Records of the stages that ran; stages after a rejection are skipped.
    pub records: Vec<(Stage, EventRecord)>,
    pub reject_reason: Option<RejectReason>,
}

/// How the two preparation windows are aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrepAlignment {
    /// Both windows end together.
    #[default]
    CoTerminate,
    /// Both windows start together.
    CoStart,
}

/// Compiled segments for one (protocol, parameters, schedule, model) tuple.
/// Reusable across trajectories and threads.
#[derive(Debug, Clone)]
pub struct ProtocolRunner {
    pub kind: ProtocolKind,
    pub schedule: StageSchedule,
    pub model: ModelKind,
    basis: JointBasis,
    /// Segments of each stage in order, with their start offsets (µs).
    plan: Vec<(Stage, Vec<(f64, CompiledSegment)>)>,
}

impl ProtocolRunner {
    pub fn new(kind: ProtocolKind, p: &PhysicalParams, schedule: StageSchedule, model: ModelKind) -> Result<Self> {
        Self::with_alignment(
            kind,
            p,
            schedule,
            model,
            PrepAlignment::default(),
            JointBasis::default(),
        )
    }

    pub fn with_alignment(
        kind: ProtocolKind,
        p: &PhysicalParams,
        schedule: StageSchedule,
        model: ModelKind,
        alignment: PrepAlignment,
        basis: JointBasis,
    ) -> Result<Self> {
        schedule.validate(p)?;
        let seg = |lasers, duration| -> Result<CompiledSegment> {
            Ok(CompiledSegment::new(&SegmentSpec::from_params(
                p, &basis, lasers, model, duration,
            )?))
        };
        let mut plan = Vec::new();
        plan.push((Stage::Preparation, prep_segments(&schedule, alignment, &seg)?));
        let off = LaserSetting::OFF;
        match kind {
            ProtocolKind::Original => {
                plan.push((Stage::Detection, vec![(0.0, seg(off, schedule.t_big_d)?)]));
            }
            ProtocolKind::Modified => {
                plan.push((Stage::DetectionI, vec![(0.0, seg(off, schedule.t_d)?)]));
                plan.push((Stage::Compensation, vec![(0.0, seg(LaserSetting::BOB, schedule.t_c)?)]));
                plan.push((Stage::DetectionII, vec![(0.0, seg(off, schedule.t_big_d)?)]));
            }
        }
        Ok(Self {
            kind,
            schedule,
            model,
            basis,
            plan,
        })
    }

    pub fn basis(&self) -> &JointBasis {
        &self.basis
    }

    /// Stage list with its segments, for deterministic reference passes.
    pub fn plan(&self) -> &[(Stage, Vec<(f64, CompiledSegment)>)] {
        &self.plan
    }

    /// One stochastic protocol run. Returns the outcome and the final state
    /// before recovery.
    pub fn run_with_state(
        &self,
        input: &QubitState,
        det: &DetectorModel,
        rng: &mut RngStream,
    ) -> Result<(RunOutcome, StateVector)> {
        let mut psi = initial_state(input, &self.basis);
        let mut records = Vec::with_capacity(self.plan.len());
        for (stage, segments) in &self.plan {
            let mut record = EventRecord::default();
            for (offset, seg) in segments {
                let out = run_segment(&psi, seg, det, rng)?;
                psi = out.state;
                record.events.extend(out.record.events.into_iter().map(|mut e| {
                    e.time += offset;
                    e
                }));
            }
            let observed = record.observed_count();
            records.push((*stage, record));
            let early_reject = if stage.requires_single_click() {
                observed != 1
            } else {
                observed > 0
            };
            if early_reject {
                break;
            }
        }
        let class = classify_record(self.kind, &records);
        let fidelity = match (class.accepted, class.epsilon) {
            (true, Some(eps)) => {
                let recovered = apply_recovery(&psi, eps, &self.schedule, &self.basis);
                Some(qubit_fidelity(input, &recovered, &self.basis)?)
            }
            _ => None,
        };
        let outcome = RunOutcome {
            accepted: class.accepted,
            epsilon: class.epsilon,
            fidelity,
            records,
            reject_reason: class.reject_reason,
        };
        Ok((outcome, psi))
    }

    pub fn run(&self, input: &QubitState, det: &DetectorModel, rng: &mut RngStream) -> Result<RunOutcome> {
        self.run_with_state(input, det, rng).map(|(o, _)| o)
    }
}

fn prep_segments<F>(s: &StageSchedule, alignment: PrepAlignment, seg: &F) -> Result<Vec<(f64, CompiledSegment)>>
where
    F: Fn(LaserSetting, f64) -> Result<CompiledSegment>,
{
    let (long, short, long_only) = if s.t_a >= s.t_b {
        (s.t_a, s.t_b, LaserSetting::ALICE)
    } else {
        (s.t_b, s.t_a, LaserSetting::BOB)
    };
    let lead = long - short;
    let mut out = Vec::new();
    match alignment {
        PrepAlignment::CoTerminate => {
            if lead > 0.0 {
                out.push((0.0, seg(long_only, lead)?));
            }
            out.push((lead, seg(LaserSetting::BOTH, short)?));
        }
        PrepAlignment::CoStart => {
            out.push((0.0, seg(LaserSetting::BOTH, short)?));
            if lead > 0.0 {
                out.push((short, seg(long_only, lead)?));
            }
        }
    }
    Ok(out)
}

/// Builds a runner and performs a single run.
pub fn run_protocol(
    kind: ProtocolKind,
    input: &QubitState,
    p: &PhysicalParams,
    sched: &StageSchedule,
    det: &DetectorModel,
    model: ModelKind,
    rng: &mut RngStream,
) -> Result<RunOutcome> {
    ProtocolRunner::new(kind, p, *sched, model)?.run(input, det, rng)
}
