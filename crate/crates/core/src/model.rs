//! Hamiltonians and collapse operators of the two atom–cavity systems.
//!
//! Rates follow the amplitude-decay convention of the non-Hermitian
//! Hamiltonian: `-i gamma sigma_22` and `-i kappa a^dagger a` without the
//! usual factor 1/2, so populations decay at `2 gamma` and `2 kappa`. Every
//! collapse operator is normalized so that `sum_k C_k^dagger C_k` equals
//! `i (H - H^dagger)` exactly.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{annihilation, embed_site, flip, number, JointBasis, MatrixOperator, Site, SiteBasis};
use crate::linalg::I;

/// Physical rates in angular units (rad/µs). Times are in µs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Detuning Δ of laser and cavity from the excited state.
    pub delta_detuning: f64,
    /// Laser Rabi frequency Ω on |1> <-> |2>.
    pub omega_laser: f64,
    /// Cavity coupling g on |0> <-> |2>.
    pub g_coupling: f64,
    /// Amplitude decay rate γ of |2>.
    pub gamma: f64,
    /// Mirror-transmission decay κ′ (photons that reach the detectors).
    pub kappa_t: f64,
    /// Mirror-absorption decay κ″.
    pub kappa_a: f64,
    /// Fraction of spontaneous decay from |2> that ends in |0>; the rest
    /// goes to |1>.
    pub branching_to_0: f64,
}

impl PhysicalParams {
    /// Builds parameters from ν-values in MHz (the angular rate divided by 2π).
    pub fn from_mhz(delta: f64, omega: f64, g: f64, gamma: f64, kappa_t: f64, kappa_a: f64) -> Result<Self> {
        Self {
            delta_detuning: TAU * delta,
            omega_laser: TAU * omega,
            g_coupling: TAU * g,
            gamma: TAU * gamma,
            kappa_t: TAU * kappa_t,
            kappa_a: TAU * kappa_a,
            branching_to_0: 0.5,
        }
        .validated()
    }

    /// The parameter set used throughout the numerical study:
    /// (Δ; Ω; g)/2π = (100; 10; 10) MHz with the given γ/2π and κ/2π.
    pub fn reference(gamma_mhz: f64, kappa_mhz: f64) -> Result<Self> {
        Self::from_mhz(100.0, 10.0, 10.0, gamma_mhz, kappa_mhz, 0.0)
    }

    pub fn validated(self) -> Result<Self> {
        let checks: [(&'static str, f64); 6] = [
            ("delta_detuning", self.delta_detuning),
            ("omega_laser", self.omega_laser),
            ("g_coupling", self.g_coupling),
            ("gamma", self.gamma),
            ("kappa_t", self.kappa_t),
            ("kappa_a", self.kappa_a),
        ];
        for (name, value) in checks {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and nonnegative",
                });
            }
        }
        if self.delta_detuning <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "delta_detuning",
                value: self.delta_detuning,
                reason: "must be positive",
            });
        }
        if !(0.0..=1.0).contains(&self.branching_to_0) {
            return Err(Error::InvalidParameter {
                name: "branching_to_0",
                value: self.branching_to_0,
                reason: "must lie in [0, 1]",
            });
        }
        if 2.0 * self.delta() <= self.kappa() {
            return Err(Error::Overdamped {
                two_delta: 2.0 * self.delta(),
                kappa: self.kappa(),
            });
        }
        Ok(self)
    }

    pub fn with_kappa_t(self, kappa_t: f64) -> Result<Self> {
        Self { kappa_t, ..self }.validated()
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self> {
        Self { gamma, ..self }.validated()
    }

    /// Total cavity decay κ = κ′ + κ″.
    pub fn kappa(&self) -> f64 {
        self.kappa_t + self.kappa_a
    }

    /// Raman coupling δ = g²/Δ.
    pub fn delta(&self) -> f64 {
        self.g_coupling * self.g_coupling / self.delta_detuning
    }

    /// Ω_κ = sqrt(4δ² − κ²).
    pub fn omega_kappa(&self) -> f64 {
        let d = self.delta();
        let k = self.kappa();
        (4.0 * d * d - k * k).sqrt()
    }

    /// Fraction of leaked photons that leave through the transmitting mirror.
    pub fn eta_a(&self) -> f64 {
        let k = self.kappa();
        if k == 0.0 {
            1.0
        } else {
            self.kappa_t / k
        }
    }

    /// Non-fatal notes when the low-saturation assumptions are shaky.
    pub fn saturation_warnings(&self) -> Vec<String> {
        let d2 = self.delta_detuning * self.delta_detuning;
        let mut out = Vec::new();
        for (name, v) in [("g", self.g_coupling), ("omega", self.omega_laser)] {
            let ratio = v * v / d2;
            if ratio > 0.05 {
                out.push(format!("{name}^2/Delta^2 = {ratio:.3} is not small"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaserSetting {
    pub alice_on: bool,
    pub bob_on: bool,
}

impl LaserSetting {
    pub const OFF: Self = Self {
        alice_on: false,
        bob_on: false,
    };
    pub const BOTH: Self = Self {
        alice_on: true,
        bob_on: true,
    };
    pub const ALICE: Self = Self {
        alice_on: true,
        bob_on: false,
    };
    pub const BOB: Self = Self {
        alice_on: false,
        bob_on: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Three-level atoms with the excited state kept.
    Full,
    /// Adiabatically eliminated excited state (requires Ω = g).
    Effective,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "effective" => Ok(Self::Effective),
            other => Err(Error::Parse(format!("unknown model '{other}'"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Effective => "effective",
        })
    }
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn sum(ops: &[MatrixOperator]) -> MatrixOperator {
    let mut acc = MatrixOperator::zeros(ops[0].dim());
    for op in ops {
        acc = acc.try_add(op).expect("operators share one basis");
    }
    acc
}

/// `(Δ − iγ)σ22 + (Ωσ21 + g a σ20 + H.c.) − iκ a†a` on one site.
pub fn full_site_hamiltonian(p: &PhysicalParams, basis: &SiteBasis, laser_on: bool) -> MatrixOperator {
    let a = annihilation(basis);
    let omega = if laser_on { p.omega_laser } else { 0.0 };
    let laser = flip(basis, 2, 1).scaled(re(omega));
    let cavity = flip(basis, 2, 0)
        .try_mul(&a)
        .expect("same site")
        .scaled(re(p.g_coupling));
    let coupling = laser.try_add(&cavity).unwrap();
    sum(&[
        flip(basis, 2, 2).scaled(Complex64::new(p.delta_detuning, -p.gamma)),
        coupling.clone(),
        coupling.adjoint(),
        number(basis).scaled(Complex64::new(0.0, -p.kappa())),
    ])
}

/// Adiabatically eliminated Hamiltonian. Laser on:
/// `−δσ11 − δ a†a σ00 − (δ a σ10 + H.c.) − iκ a†a`; laser off:
/// `−δ a†a σ00 − iκ a†a`. Level |2> is kept as an inert spectator.
pub fn effective_site_hamiltonian(p: &PhysicalParams, basis: &SiteBasis, laser_on: bool) -> Result<MatrixOperator> {
    let (o, g) = (p.omega_laser, p.g_coupling);
    if (o - g).abs() > 1e-12 * o.abs().max(g.abs()).max(1.0) {
        return Err(Error::UnequalCouplings { omega: o, g });
    }
    let d = p.delta();
    let a = annihilation(basis);
    let n = number(basis);
    let dispersive = n.try_mul(&flip(basis, 0, 0)).unwrap().scaled(re(-d));
    let loss = n.scaled(Complex64::new(0.0, -p.kappa()));
    let mut terms = vec![dispersive, loss];
    if laser_on {
        let raman = a.try_mul(&flip(basis, 1, 0)).unwrap().scaled(re(-d));
        terms.push(flip(basis, 1, 1).scaled(re(-d)));
        terms.push(raman.adjoint());
        terms.push(raman);
    }
    Ok(sum(&terms))
}

pub fn site_hamiltonian(
    p: &PhysicalParams,
    basis: &SiteBasis,
    laser_on: bool,
    model: ModelKind,
) -> Result<MatrixOperator> {
    match model {
        ModelKind::Full => Ok(full_site_hamiltonian(p, basis, laser_on)),
        ModelKind::Effective => effective_site_hamiltonian(p, basis, laser_on),
    }
}

/// `H_A ⊗ I + I ⊗ H_B` with each site's laser switched independently.
pub fn joint_hamiltonian(
    p: &PhysicalParams,
    basis: &JointBasis,
    lasers: LaserSetting,
    model: ModelKind,
) -> Result<MatrixOperator> {
    let ha = site_hamiltonian(p, &basis.site, lasers.alice_on, model)?;
    let hb = site_hamiltonian(p, &basis.site, lasers.bob_on, model)?;
    embed_site(&ha, Site::Alice, basis)?.try_add(&embed_site(&hb, Site::Bob, basis)?)
}

/// Detector sign ε: +1 for D₊, −1 for D₋.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    Plus,
    Minus,
}

impl Detector {
    pub fn epsilon(self) -> f64 {
        match self {
            Self::Plus => 1.0,
            Self::Minus => -1.0,
        }
    }

    pub fn from_epsilon(eps: i8) -> Option<Self> {
        match eps {
            1 => Some(Self::Plus),
            -1 => Some(Self::Minus),
            _ => None,
        }
    }
}

/// Physical origin of a quantum jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Detection(Detector),
    Absorption(Site),
    Spontaneous { site: Site, to_level: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseOp {
    pub op: MatrixOperator,
    pub channel: Channel,
}

/// `C_ε = sqrt(κ′)(a_A + iε a_B)` for both detectors.
pub fn detection_collapse_ops(p: &PhysicalParams, basis: &JointBasis) -> Result<[CollapseOp; 2]> {
    let a = annihilation(&basis.site);
    let aa = embed_site(&a, Site::Alice, basis)?;
    let ab = embed_site(&a, Site::Bob, basis)?;
    let amp = re(p.kappa_t.sqrt());
    let make = |det: Detector| -> Result<CollapseOp> {
        let op = aa.try_add(&ab.scaled(I * det.epsilon()))?.scaled(amp);
        Ok(CollapseOp {
            op,
            channel: Channel::Detection(det),
        })
    };
    Ok([make(Detector::Plus)?, make(Detector::Minus)?])
}

/// `sqrt(2κ″) a_A` and `sqrt(2κ″) a_B`.
pub fn absorption_collapse_ops(p: &PhysicalParams, basis: &JointBasis) -> Result<[CollapseOp; 2]> {
    let a = annihilation(&basis.site).scaled(re((2.0 * p.kappa_a).sqrt()));
    Ok([
        CollapseOp {
            op: embed_site(&a, Site::Alice, basis)?,
            channel: Channel::Absorption(Site::Alice),
        },
        CollapseOp {
            op: embed_site(&a, Site::Bob, basis)?,
            channel: Channel::Absorption(Site::Bob),
        },
    ])
}

/// `|2> -> |0>` and `|2> -> |1>` on each site; total rate 2γ split by
/// `branching_to_0`.
pub fn spontaneous_collapse_ops(p: &PhysicalParams, basis: &JointBasis) -> Result<[CollapseOp; 4]> {
    let r0 = (2.0 * p.gamma * p.branching_to_0).sqrt();
    let r1 = (2.0 * p.gamma * (1.0 - p.branching_to_0)).sqrt();
    let to0 = flip(&basis.site, 0, 2).scaled(re(r0));
    let to1 = flip(&basis.site, 1, 2).scaled(re(r1));
    let mk = |op: &MatrixOperator, site: Site, to_level: usize| -> Result<CollapseOp> {
        Ok(CollapseOp {
            op: embed_site(op, site, basis)?,
            channel: Channel::Spontaneous { site, to_level },
        })
    };
    Ok([
        mk(&to0, Site::Alice, 0)?,
        mk(&to1, Site::Alice, 1)?,
        mk(&to0, Site::Bob, 0)?,
        mk(&to1, Site::Bob, 1)?,
    ])
}

/// Every jump channel of the chosen model. The effective model has no
/// excited-state population and therefore no spontaneous channels.
pub fn collapse_ops(p: &PhysicalParams, basis: &JointBasis, model: ModelKind) -> Result<Vec<CollapseOp>> {
    let mut ops = Vec::new();
    ops.extend(detection_collapse_ops(p, basis)?);
    ops.extend(absorption_collapse_ops(p, basis)?);
    if model == ModelKind::Full {
        ops.extend(spontaneous_collapse_ops(p, basis)?);
    }
    Ok(ops)
}

/// Largest entrywise deviation from `sum_k C_k† C_k = i(H − H†)`.
pub fn channel_completeness_residual(h: &MatrixOperator, ops: &[CollapseOp]) -> f64 {
    let mut rates = MatrixOperator::zeros(h.dim());
    for c in ops {
        rates = rates.try_add(&c.op.adjoint().try_mul(&c.op).unwrap()).unwrap();
    }
    let anti = h.try_sub(&h.adjoint()).unwrap().scaled(I);
    rates.max_abs_diff(&anti)
}
