//! Closed-form results of the adiabatically eliminated model.
//!
//! Everything here is restricted to the per-site subspace
//! `{|00>, |10>, |01>}` where the effective Hamiltonian has an exact
//! 2×2 solution with damped vacuum-Rabi frequency Ω_κ = sqrt(4δ² − κ²).

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{JointBasis, QubitState, StateVector};
use crate::linalg::{I, ONE, ZERO};
use crate::model::PhysicalParams;
use crate::search;

/// Root tolerance (µs) for the compensation and detection-limit solvers.
pub const TIME_TOL: f64 = 1e-12;

pub fn omega_kappa(p: &PhysicalParams) -> Result<f64> {
    let (d, k) = (p.delta(), p.kappa());
    if 2.0 * d <= k {
        return Err(Error::Overdamped {
            two_delta: 2.0 * d,
            kappa: k,
        });
    }
    Ok((4.0 * d * d - k * k).sqrt())
}

/// Amplitudes of `|00>`, `|10>`, `|01>` on one site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceAmplitudes {
    pub c00: Complex64,
    pub c10: Complex64,
    pub c01: Complex64,
}

impl SubspaceAmplitudes {
    pub fn new(c00: Complex64, c10: Complex64, c01: Complex64) -> Self {
        Self { c00, c10, c01 }
    }

    pub fn ground() -> Self {
        Self::new(ONE, ZERO, ZERO)
    }

    pub fn excited_atom() -> Self {
        Self::new(ZERO, ONE, ZERO)
    }

    pub fn photon() -> Self {
        Self::new(ZERO, ZERO, ONE)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c00.norm_sqr() + self.c10.norm_sqr() + self.c01.norm_sqr()
    }

    pub fn as_array(&self) -> [Complex64; 3] {
        [self.c00, self.c10, self.c01]
    }

    /// Embeds the amplitudes into a single-site state vector.
    pub fn to_site_vector(&self, basis: &crate::hilbert::SiteBasis) -> StateVector {
        let mut v = StateVector::zeros(basis.dim());
        for (level, amp) in SUBSPACE_LEVELS.iter().zip(self.as_array()) {
            v.amplitudes_mut()[basis.index(level.0, level.1)] = amp;
        }
        v
    }
}

/// `(atom level, photon number)` labels of the subspace, in storage order.
pub const SUBSPACE_LEVELS: [(usize, usize); 3] = [(0, 0), (1, 0), (0, 1)];

/// No-jump evolution for time `t` with the laser on or off.
pub fn propagate_closed_form(
    s: SubspaceAmplitudes,
    t: f64,
    laser_on: bool,
    p: &PhysicalParams,
) -> Result<SubspaceAmplitudes> {
    let (d, k) = (p.delta(), p.kappa());
    if !laser_on {
        let f = Complex64::from_polar((-k * t).exp(), d * t);
        return Ok(SubspaceAmplitudes::new(s.c00, s.c10, s.c01 * f));
    }
    let w = omega_kappa(p)?;
    let env = Complex64::from_polar((-k * t / 2.0).exp(), d * t);
    let (sn, cs) = (w * t / 2.0).sin_cos();
    let mix = I * (2.0 * d / w * sn);
    let c10 = env * ((cs + k / w * sn) * s.c10 + mix * s.c01);
    let c01 = env * (mix * s.c10 + (cs - k / w * sn) * s.c01);
    Ok(SubspaceAmplitudes::new(s.c00, c10, c01))
}

/// Mapping time t_A = (2/Ω_κ)[π − arctan(Ω_κ/κ)], which empties `|10>`.
pub fn t_map(p: &PhysicalParams) -> Result<f64> {
    let w = omega_kappa(p)?;
    Ok(2.0 / w * (PI - w.atan2(p.kappa())))
}

/// Entangling time t_B = (2/Ω_κ) arctan(Ω_κ/(2δ − κ)).
pub fn t_entangle(p: &PhysicalParams) -> Result<f64> {
    let w = omega_kappa(p)?;
    Ok(2.0 / w * w.atan2(2.0 * p.delta() - p.kappa()))
}

/// No-click probability of Alice's mapping operation.
pub fn prob_prep_alice(q: &QubitState, p: &PhysicalParams) -> Result<f64> {
    let ta = t_map(p)?;
    Ok(q.alpha.norm_sqr() + (-p.kappa() * ta).exp() * q.beta.norm_sqr())
}

/// No-click probability of Bob's entangling operation.
pub fn prob_prep_bob(p: &PhysicalParams) -> Result<f64> {
    let w = omega_kappa(p)?;
    let tb = t_entangle(p)?;
    let d = p.delta();
    Ok((-p.kappa() * tb).exp() * 8.0 * d * d / (w * w) * (w * tb / 2.0).sin().powi(2))
}

/// Detection-stage length π(2m + 1)/δ, for which e^{iδ t_d} = −1.
pub fn t_detect_choice(p: &PhysicalParams, m: u32) -> f64 {
    PI * (2 * m + 1) as f64 / p.delta()
}

/// The pair (φ(t_c), ϑ(t_c)) describing Bob's compensation rotation.
pub fn compensation_functions(t_c: f64, t_d: f64, p: &PhysicalParams) -> Result<(f64, f64)> {
    let w = omega_kappa(p)?;
    let (d, k) = (p.delta(), p.kappa());
    let e = (-k * t_d).exp();
    let (sn, cs) = (w * t_c / 2.0).sin_cos();
    let phi = e * cs - (2.0 * d + k * e) / w * sn;
    let theta = cs + (k + 2.0 * d * e) / w * sn;
    Ok((phi, theta))
}

/// e^{−κ(t_A + t_c)/2} ϑ(t_c): the modulus of the recovered `|1>` amplitude
/// relative to β. Compensation succeeds where this equals one.
pub fn compensation_gain(t_c: f64, t_d: f64, p: &PhysicalParams) -> Result<f64> {
    let ta = t_map(p)?;
    let (_, theta) = compensation_functions(t_c, t_d, p)?;
    Ok((-p.kappa() * (ta + t_c) / 2.0).exp() * theta)
}

/// Compensation time at which [`compensation_gain`] peaks.
pub fn t_compensate_max(p: &PhysicalParams, t_d: f64) -> Result<f64> {
    let w = omega_kappa(p)?;
    let (d, k) = (p.delta(), p.kappa());
    let e = (-k * t_d).exp();
    let num = 2.0 * d * w * e;
    let den = w * w + k * (k + 2.0 * d * e);
    Ok(2.0 / w * num.atan2(den))
}

/// Smallest t_c > 0 with unit compensation gain.
pub fn t_compensate(p: &PhysicalParams, t_d: f64) -> Result<f64> {
    if p.kappa() == 0.0 {
        return Ok(0.0);
    }
    let t_max = t_compensate_max(p, t_d)?;
    let best_gain = compensation_gain(t_max, t_d, p)?;
    if best_gain < 1.0 {
        return Err(Error::CompensationInfeasible {
            kappa: p.kappa(),
            t_d,
            best_gain,
        });
    }
    search::bisect(|tc| compensation_gain(tc, t_d, p).unwrap() - 1.0, 0.0, t_max, TIME_TOL)
}

fn peak_gain_excess(p: &PhysicalParams, t_d: f64) -> Result<f64> {
    let tc = t_compensate_max(p, t_d)?;
    Ok(compensation_gain(tc, t_d, p)? - 1.0)
}

/// Longest detection-I time for which compensation is still possible.
/// Infinite when κ = 0.
pub fn t_detect_max(p: &PhysicalParams) -> Result<f64> {
    let k = p.kappa();
    if k == 0.0 {
        return Ok(f64::INFINITY);
    }
    if peak_gain_excess(p, 0.0)? < 0.0 {
        return Err(Error::KappaTooLarge { kappa: k });
    }
    let f = |td: f64| peak_gain_excess(p, td).unwrap();
    search::bisect_expanding(f, 0.0, 1.0 / k, 1e4 / k, TIME_TOL).map_err(|_| Error::KappaTooLarge { kappa: k })
}

/// Largest total κ (varying the transmission part κ′) for which the
/// detection time π(2m+1)/δ still admits compensation.
pub fn max_kappa_for_compensation(p: &PhysicalParams, m: u32) -> Result<f64> {
    let target = t_detect_choice(p, m);
    let margin = |kappa: f64| -> f64 {
        let q = PhysicalParams {
            kappa_t: kappa - p.kappa_a,
            ..*p
        };
        match t_detect_max(&q) {
            Ok(td) => td - target,
            Err(_) => -target,
        }
    };
    let lo = p.kappa_a.max(1e-6 * p.delta());
    let hi = 2.0 * p.delta() * (1.0 - 1e-9);
    search::bisect(margin, lo, hi, 1e-12 * p.delta())
}

/// Stage times of the effective model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticTimes {
    pub t_a: f64,
    pub t_b: f64,
    pub t_d: f64,
    /// None when compensation is infeasible at `t_d`.
    pub t_c: Option<f64>,
    pub t_c_max: f64,
}

impl AnalyticTimes {
    pub fn compute(p: &PhysicalParams, m: u32) -> Result<Self> {
        let t_d = t_detect_choice(p, m);
        Ok(Self {
            t_a: t_map(p)?,
            t_b: t_entangle(p)?,
            t_d,
            t_c: match t_compensate(p, t_d) {
                Ok(tc) => Some(tc),
                Err(Error::CompensationInfeasible { .. }) => None,
                Err(e) => return Err(e),
            },
            t_c_max: t_compensate_max(p, t_d)?,
        })
    }
}

/// Amplitudes over `{|00>,|10>,|01>}_A ⊗ {|00>,|10>,|01>}_B`, indexed
/// `[alice][bob]` in [`SUBSPACE_LEVELS`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointAmplitudes {
    pub c: [[Complex64; 3]; 3],
}

impl JointAmplitudes {
    pub fn zero() -> Self {
        Self { c: [[ZERO; 3]; 3] }
    }

    pub fn product(a: &SubspaceAmplitudes, b: &SubspaceAmplitudes) -> Self {
        let mut out = Self::zero();
        for (i, x) in a.as_array().iter().enumerate() {
            for (j, y) in b.as_array().iter().enumerate() {
                out.c[i][j] = x * y;
            }
        }
        out
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    pub fn to_state_vector(&self, basis: &JointBasis) -> StateVector {
        let mut v = StateVector::zeros(basis.dim());
        for (i, la) in SUBSPACE_LEVELS.iter().enumerate() {
            for (j, lb) in SUBSPACE_LEVELS.iter().enumerate() {
                v.amplitudes_mut()[basis.ket_index(*la, *lb)] = self.c[i][j];
            }
        }
        v
    }
}

// subspace slots
const S00: usize = 0;
const S10: usize = 1;
const S01: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdealStage {
    /// Alice's site after mapping (Bob untouched).
    PostPrepA,
    /// Bob's site after entangling.
    PostPrepB,
    /// Joint state at the end of detection I given one click ε.
    PostDetectI,
    /// Joint state after Bob's compensation pulse.
    PostCompensation,
    /// Long-time limit of detection II (unwanted photon states gone).
    PostDetectII,
    /// Long-time limit of the single detection stage without compensation.
    OriginalFinal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IdealState {
    Site(SubspaceAmplitudes),
    Joint(JointAmplitudes),
}

/// Unnormalized conditional states of the ideal protocol.
pub fn ideal_stage_states(
    q: &QubitState,
    p: &PhysicalParams,
    epsilon: f64,
    stage: IdealStage,
    times: &AnalyticTimes,
) -> Result<IdealState> {
    let (d, k) = (p.delta(), p.kappa());
    let (a, b) = (q.alpha, q.beta);
    let ie = I * epsilon;
    // i e^{iδ t_A} e^{−κ t_A/2}
    let map_factor = Complex64::from_polar((-k * times.t_a / 2.0).exp(), d * times.t_a);
    let state = match stage {
        IdealStage::PostPrepA => IdealState::Site(SubspaceAmplitudes::new(a, ZERO, I * map_factor * b)),
        IdealStage::PostPrepB => {
            let w = omega_kappa(p)?;
            let tb = times.t_b;
            let amp = (-k * tb / 2.0).exp() * 2.0 * d / w * (w * tb / 2.0).sin();
            IdealState::Site(SubspaceAmplitudes::new(ZERO, Complex64::new(amp, 0.0), I * amp))
        }
        IdealStage::PostDetectI => {
            let mut j = JointAmplitudes::zero();
            let tail = I * map_factor * b * Complex64::from_polar((-k * times.t_d).exp(), d * times.t_d);
            j.c[S00][S00] = ie * a;
            j.c[S00][S10] = map_factor * b;
            j.c[S00][S01] = tail;
            j.c[S01][S00] = tail * ie;
            IdealState::Joint(j)
        }
        IdealStage::PostCompensation | IdealStage::PostDetectII => {
            let tc = times.t_c.unwrap_or(times.t_c_max);
            let (phi, theta) = compensation_functions(tc, times.t_d, p)?;
            let phase = Complex64::from_polar(1.0, d * (times.t_a + tc));
            let damp = (-k * (times.t_a + tc) / 2.0).exp();
            let mut j = JointAmplitudes::zero();
            j.c[S00][S00] = ie * a;
            j.c[S00][S10] = phase * b * damp * theta;
            if stage == IdealStage::PostCompensation {
                j.c[S01][S00] = phase * (-k * times.t_a / 2.0).exp() * b * (-k * (times.t_d + tc)).exp() * epsilon;
                j.c[S00][S01] = -I * phase * b * damp * phi;
            }
            IdealState::Joint(j)
        }
        IdealStage::OriginalFinal => {
            let mut j = JointAmplitudes::zero();
            j.c[S00][S00] = ie * a;
            j.c[S00][S10] = map_factor * b;
            IdealState::Joint(j)
        }
    };
    Ok(state)
}
