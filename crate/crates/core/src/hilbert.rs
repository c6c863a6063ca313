//! Basis bookkeeping, states and operators for two atom–cavity sites.
//!
//! A site is a three-level atom times a truncated Fock space. The single-site
//! index of `|j n>` is `j * (n_max + 1) + n`; the joint index is
//! `alice_index * site_dim + bob_index`, i.e. Alice is the left tensor factor.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, ONE, ZERO};

pub const ATOM_LEVELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteBasis {
    n_max: usize,
}

impl SiteBasis {
    pub fn new(n_max: usize) -> Self {
        Self { n_max }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        ATOM_LEVELS * (self.n_max + 1)
    }

    /// Flattened index of `|atom_level, photon_number>`.
    pub fn index(&self, atom_level: usize, photon_number: usize) -> usize {
        assert!(atom_level < ATOM_LEVELS && photon_number <= self.n_max);
        atom_level * (self.n_max + 1) + photon_number
    }

    pub fn label(&self, index: usize) -> (usize, usize) {
        (index / (self.n_max + 1), index % (self.n_max + 1))
    }
}

impl Default for SiteBasis {
    fn default() -> Self {
        Self::new(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Site {
    Alice,
    Bob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct JointBasis {
    pub site: SiteBasis,
}

impl JointBasis {
    pub fn new(site: SiteBasis) -> Self {
        Self { site }
    }

    pub fn dim(&self) -> usize {
        self.site.dim() * self.site.dim()
    }

    pub fn index(&self, alice: usize, bob: usize) -> usize {
        alice * self.site.dim() + bob
    }

    /// Joint index of `|ja na>_A |jb nb>_B`.
    pub fn ket_index(&self, alice: (usize, usize), bob: (usize, usize)) -> usize {
        self.index(self.site.index(alice.0, alice.1), self.site.index(bob.0, bob.1))
    }

    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.site.dim(), index % self.site.dim())
    }
}

/// Dense square complex operator.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOperator {
    entries: Array2<Complex64>,
}

impl MatrixOperator {
    pub fn new(entries: Array2<Complex64>) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: Array2::zeros((dim, dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: Array2::eye(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<Complex64> {
        self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[[row, col]]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.t().mapv(|z| z.conj()),
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            entries: &self.entries * factor,
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim())?;
        Ok(Self {
            entries: &self.entries + &other.entries,
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim())?;
        Ok(Self {
            entries: &self.entries - &other.entries,
        })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim())?;
        Ok(Self {
            entries: self.entries.dot(&other.entries),
        })
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        self.check_dim(psi.dim())?;
        Ok(StateVector::from_array(self.entries.dot(psi.amplitudes())))
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&z| z == ZERO)
    }

    /// `exp(factor * self)`.
    pub fn exp_scaled(&self, factor: Complex64) -> Self {
        Self {
            entries: linalg::expm(&(&self.entries * factor)),
        }
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}

/// Kronecker product; entry `(i * db + k, j * db + l) = a[i, j] * b[k, l]`.
pub fn tensor(a: &MatrixOperator, b: &MatrixOperator) -> MatrixOperator {
    let (da, db) = (a.dim(), b.dim());
    let mut out = Array2::zeros((da * db, da * db));
    for i in 0..da {
        for j in 0..da {
            let aij = a.entries[[i, j]];
            if aij == ZERO {
                continue;
            }
            for k in 0..db {
                for l in 0..db {
                    out[[i * db + k, j * db + l]] = aij * b.entries[[k, l]];
                }
            }
        }
    }
    MatrixOperator { entries: out }
}

/// Lifts a single-site operator to the joint space.
pub fn embed_site(op: &MatrixOperator, site: Site, basis: &JointBasis) -> Result<MatrixOperator> {
    let sd = basis.site.dim();
    if op.dim() != sd {
        return Err(Error::DimensionMismatch {
            expected: sd,
            found: op.dim(),
        });
    }
    let id = MatrixOperator::identity(sd);
    Ok(match site {
        Site::Alice => tensor(op, &id),
        Site::Bob => tensor(&id, op),
    })
}

/// Cavity annihilation operator `a` on one site.
pub fn annihilation(basis: &SiteBasis) -> MatrixOperator {
    let mut m = MatrixOperator::zeros(basis.dim());
    for j in 0..ATOM_LEVELS {
        for n in 1..=basis.n_max() {
            m.entries[[basis.index(j, n - 1), basis.index(j, n)]] = Complex64::new((n as f64).sqrt(), 0.0);
        }
    }
    m
}

/// Atomic flip operator `sigma_ij = |i><j|` tensored with the mode identity.
pub fn flip(basis: &SiteBasis, i: usize, j: usize) -> MatrixOperator {
    let mut m = MatrixOperator::zeros(basis.dim());
    for n in 0..=basis.n_max() {
        m.entries[[basis.index(i, n), basis.index(j, n)]] = ONE;
    }
    m
}

/// Photon number `a^dagger a` on one site.
pub fn number(basis: &SiteBasis) -> MatrixOperator {
    let mut m = MatrixOperator::zeros(basis.dim());
    for idx in 0..basis.dim() {
        m.entries[[idx, idx]] = Complex64::new(basis.label(idx).1 as f64, 0.0);
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Array1<Complex64>,
}

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            amplitudes: Array1::zeros(dim),
        }
    }

    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut s = Self::zeros(dim);
        s.amplitudes[index] = ONE;
        s
    }

    pub fn from_array(amplitudes: Array1<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn from_vec(amplitudes: Vec<Complex64>) -> Self {
        Self {
            amplitudes: Array1::from(amplitudes),
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &Array1<Complex64> {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut Array1<Complex64> {
        &mut self.amplitudes
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.amplitudes.as_slice().expect("contiguous")
    }

    pub fn as_slice_mut(&mut self) -> &mut [Complex64] {
        self.amplitudes.as_slice_mut().expect("contiguous")
    }

    pub fn get(&self, index: usize) -> Complex64 {
        self.amplitudes[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.amplitudes.mapv_inplace(|z| z * factor);
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            amplitudes: &self.amplitudes / Complex64::new(n.sqrt(), 0.0),
        })
    }

    /// Product state `a ⊗ b` in the joint ordering.
    pub fn product(alice: &Self, bob: &Self) -> Self {
        let db = bob.dim();
        let mut out = Array1::zeros(alice.dim() * db);
        for (i, a) in alice.amplitudes.iter().enumerate() {
            for (k, b) in bob.amplitudes.iter().enumerate() {
                out[i * db + k] = a * b;
            }
        }
        Self { amplitudes: out }
    }
}

/// Input qubit `alpha|0> + beta|1>` stored in Alice's atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl QubitState {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if (n - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(Self { alpha, beta })
    }

    pub fn normalize(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            alpha: alpha / n,
            beta: beta / n,
        })
    }

    pub fn zero() -> Self {
        Self { alpha: ONE, beta: ZERO }
    }

    pub fn one() -> Self {
        Self { alpha: ZERO, beta: ONE }
    }

    pub fn plus() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self { alpha: h, beta: h }
    }

    /// Same ray with the global phase fixed so that `alpha` is real and
    /// nonnegative (or `beta` when `alpha` vanishes).
    pub fn canonical(&self) -> Self {
        let lead = if self.alpha.norm() > 0.0 { self.alpha } else { self.beta };
        let phase = Complex64::from_polar(1.0, -lead.arg());
        let mut alpha = self.alpha * phase;
        if self.alpha.norm() > 0.0 {
            alpha = Complex64::new(alpha.norm(), 0.0);
        }
        Self {
            alpha,
            beta: self.beta * phase,
        }
    }
}

/// Bob's atomic reduced density matrix (3×3), tracing Alice's whole site
/// and Bob's cavity mode. The input is normalized first.
pub fn reduced_density_bob_atom(psi: &StateVector, basis: &JointBasis) -> Result<Array2<Complex64>> {
    if psi.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: psi.dim(),
        });
    }
    let norm = psi.norm_sqr();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let sd = basis.site.dim();
    let nm = basis.site.n_max();
    let mut rho = Array2::<Complex64>::zeros((ATOM_LEVELS, ATOM_LEVELS));
    for a in 0..sd {
        for n in 0..=nm {
            for j in 0..ATOM_LEVELS {
                let cj = psi.get(basis.index(a, basis.site.index(j, n)));
                if cj == ZERO {
                    continue;
                }
                for k in 0..ATOM_LEVELS {
                    let ck = psi.get(basis.index(a, basis.site.index(k, n)));
                    rho[[j, k]] += cj * ck.conj();
                }
            }
        }
    }
    rho.mapv_inplace(|z| z / norm);
    Ok(rho)
}

/// `<psi_in| rho_B |psi_in>` with `psi_in` embedded in Bob's levels {0, 1}.
pub fn qubit_fidelity(input: &QubitState, psi_final: &StateVector, basis: &JointBasis) -> Result<f64> {
    let rho = reduced_density_bob_atom(psi_final, basis)?;
    let v = [input.alpha, input.beta];
    let mut f = ZERO;
    for j in 0..2 {
        for k in 0..2 {
            f += v[j].conj() * rho[[j, k]] * v[k];
        }
    }
    Ok(f.re.clamp(0.0, 1.0))
}
