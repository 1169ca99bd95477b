//! Truncated Fock-space linear algebra.
//!
//! The cavity mode is represented on the levels `0..=n_max`. Operators and
//! density matrices are dense complex matrices; all ladder-operator products
//! use the truncated matrices literally, so identities such as
//! `[a, a†] = 1` hold on every level except the top one.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Highest retained Fock level. The Hilbert-space dimension is `n_max + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FockTruncation {
    n_max: usize,
}

impl FockTruncation {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidParams(format!(
                "n_max must be at least 1, got {n_max}"
            )));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// Smallest truncation that satisfies [`displacement_guidance`] for `alpha`.
    pub fn for_displacement(alpha: Complex64) -> Self {
        Self {
            n_max: displacement_guidance(alpha).max(1),
        }
    }

    pub fn check_displacement(&self, alpha: Complex64) -> Result<()> {
        let needed = displacement_guidance(alpha);
        if self.n_max < needed {
            return Err(Error::TruncationTooSmall {
                needed,
                have: self.n_max,
            });
        }
        Ok(())
    }

    fn check_same(&self, other: &FockTruncation) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }
}

/// Minimal `n_max` for displacing by `alpha`: `|α|² + 10·sqrt(|α|² + 1)`,
/// rounded up.
pub fn displacement_guidance(alpha: Complex64) -> usize {
    let n = alpha.norm_sqr();
    (n + 10.0 * (n + 1.0).sqrt()).ceil() as usize
}

/// A cavity-mode operator on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityOperator {
    entries: CMatrix,
    trunc: FockTruncation,
}

impl CavityOperator {
    pub fn from_matrix(entries: CMatrix, trunc: FockTruncation) -> Result<Self> {
        if entries.nrows() != trunc.dim() || entries.ncols() != trunc.dim() {
            return Err(Error::DimensionMismatch {
                left: entries.nrows().max(entries.ncols()),
                right: trunc.dim(),
            });
        }
        Ok(Self { entries, trunc })
    }

    pub fn identity(trunc: FockTruncation) -> Self {
        Self {
            entries: CMatrix::identity(trunc.dim(), trunc.dim()),
            trunc,
        }
    }

    /// `⟨n−1|a|n⟩ = √n`.
    pub fn annihilation(trunc: FockTruncation) -> Self {
        let d = trunc.dim();
        let entries = CMatrix::from_fn(d, d, |i, j| {
            if j == i + 1 {
                Complex64::new((j as f64).sqrt(), 0.0)
            } else {
                ZERO
            }
        });
        Self { entries, trunc }
    }

    pub fn creation(trunc: FockTruncation) -> Self {
        Self::annihilation(trunc).adjoint()
    }

    pub fn number(trunc: FockTruncation) -> Self {
        let d = trunc.dim();
        let diag = DVector::from_fn(d, |i, _| Complex64::new(i as f64, 0.0));
        Self {
            entries: CMatrix::from_diagonal(&diag),
            trunc,
        }
    }

    /// `D(α) = exp(α a† − α* a)` on the truncated space.
    ///
    /// The generator is anti-Hermitian, so the exponential is taken through the
    /// eigendecomposition of the Hermitian matrix `i(α a† − α* a)`.
    pub fn displacement(trunc: FockTruncation, alpha: Complex64) -> Result<Self> {
        trunc.check_displacement(alpha)?;
        let a = Self::annihilation(trunc).entries;
        let ad = a.adjoint();
        let generator = ad * alpha - a * alpha.conj();
        let hermitian = generator * Complex64::i();
        Ok(Self {
            entries: exp_minus_i_hermitian(hermitian, 1.0),
            trunc,
        })
    }

    /// Single-mode squeeze `exp[−(r/2) e^{iθ} a†² + (r/2) e^{−iθ} a²]`.
    pub fn squeeze(trunc: FockTruncation, r: f64, theta: f64) -> Result<Self> {
        let needed = (4.0 * (2.0 * r).exp() + 10.0).ceil() as usize;
        if trunc.n_max() < needed {
            return Err(Error::TruncationTooSmall {
                needed,
                have: trunc.n_max(),
            });
        }
        let a = Self::annihilation(trunc).entries;
        let ad = a.adjoint();
        let zeta = Complex64::from_polar(r, theta);
        let generator = (&a * &a) * (zeta.conj() * 0.5) - (&ad * &ad) * (zeta * 0.5);
        Ok(Self {
            entries: exp_minus_i_hermitian(generator * Complex64::i(), 1.0),
            trunc,
        })
    }

    /// Phase rotation `exp(−iθ a†a)`.
    pub fn rotation(trunc: FockTruncation, theta: f64) -> Self {
        let d = trunc.dim();
        let diag = DVector::from_fn(d, |i, _| Complex64::from_polar(1.0, -theta * i as f64));
        Self {
            entries: CMatrix::from_diagonal(&diag),
            trunc,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
            trunc: self.trunc,
        }
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn truncation(&self) -> FockTruncation {
        self.trunc
    }

    pub fn compose(&self, other: &CavityOperator) -> Result<CavityOperator> {
        self.trunc.check_same(&other.trunc)?;
        Ok(Self {
            entries: &self.entries * &other.entries,
            trunc: self.trunc,
        })
    }

    pub fn commutator(&self, other: &CavityOperator) -> Result<CavityOperator> {
        self.trunc.check_same(&other.trunc)?;
        Ok(Self {
            entries: &self.entries * &other.entries - &other.entries * &self.entries,
            trunc: self.trunc,
        })
    }
}

/// `exp(−i t H)` for Hermitian `H`.
fn exp_minus_i_hermitian(h: CMatrix, t: f64) -> CMatrix {
    let h = hermitize(&h);
    let eig = SymmetricEigen::new(h);
    let phases = eig
        .eigenvalues
        .map(|lambda| Complex64::from_polar(1.0, -t * lambda));
    let v = &eig.eigenvectors;
    v * CMatrix::from_diagonal(&phases) * v.adjoint()
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub(crate) fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut eig: Vec<f64> = SymmetricEigen::new(hermitize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig
}

/// Trace norm `‖m‖₁` of a Hermitian matrix.
pub(crate) fn trace_norm(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).iter().map(|x| x.abs()).sum()
}

/// How strictly [`CavityState`] invariants are checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateTolerances {
    pub hermiticity: f64,
    pub trace: f64,
    pub positivity: f64,
    /// Maximum population allowed on the top Fock level.
    pub leakage: f64,
    pub positivity_mode: PositivityMode,
}

impl Default for StateTolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-12,
            trace: 1e-10,
            positivity: 1e-9,
            leakage: 1e-8,
            positivity_mode: PositivityMode::Report,
        }
    }
}

impl StateTolerances {
    pub fn without_leakage_check(mut self) -> Self {
        self.leakage = f64::INFINITY;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PositivityMode {
    /// Negative eigenvalues beyond tolerance are an error.
    Report,
    /// Negative eigenvalues are projected to zero and the trace restored.
    Clip,
}

/// Diagnostic summary of a density matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateReport {
    pub hermiticity_defect: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
    pub leakage: f64,
}

/// A cavity density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityState {
    matrix: CMatrix,
    trunc: FockTruncation,
}

impl CavityState {
    /// Validates against [`StateTolerances::default`].
    pub fn from_matrix(matrix: CMatrix, trunc: FockTruncation) -> Result<Self> {
        Self::from_matrix_with(matrix, trunc, &StateTolerances::default())
    }

    pub fn from_matrix_with(
        matrix: CMatrix,
        trunc: FockTruncation,
        tol: &StateTolerances,
    ) -> Result<Self> {
        if matrix.nrows() != trunc.dim() || matrix.ncols() != trunc.dim() {
            return Err(Error::DimensionMismatch {
                left: matrix.nrows().max(matrix.ncols()),
                right: trunc.dim(),
            });
        }
        let mut state = Self { matrix, trunc };
        if tol.positivity_mode == PositivityMode::Clip {
            state = state.clip_positivity()?;
        }
        state.check(tol)?;
        Ok(state)
    }

    /// Wraps a matrix already known to be a valid state.
    pub(crate) fn from_matrix_unchecked(matrix: CMatrix, trunc: FockTruncation) -> Self {
        Self { matrix, trunc }
    }

    pub fn vacuum(trunc: FockTruncation) -> Self {
        Self::fock_unchecked(trunc, 0)
    }

    pub fn fock(trunc: FockTruncation, n: usize) -> Result<Self> {
        if n > trunc.n_max() {
            return Err(Error::TruncationTooSmall {
                needed: n,
                have: trunc.n_max(),
            });
        }
        Ok(Self::fock_unchecked(trunc, n))
    }

    fn fock_unchecked(trunc: FockTruncation, n: usize) -> Self {
        let mut matrix = CMatrix::zeros(trunc.dim(), trunc.dim());
        matrix[(n, n)] = ONE;
        Self { matrix, trunc }
    }

    /// Geometric Fock distribution `P(n) ∝ (n̄/(1+n̄))ⁿ`, renormalized on the
    /// truncated space.
    pub fn thermal(trunc: FockTruncation, nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return Err(Error::InvalidParams(format!(
                "thermal occupation must be finite and non-negative, got {nbar}"
            )));
        }
        let ratio = nbar / (1.0 + nbar);
        let weights: Vec<f64> = (0..trunc.dim()).map(|n| ratio.powi(n as i32)).collect();
        let total: f64 = weights.iter().sum();
        let diag = DVector::from_fn(trunc.dim(), |n, _| Complex64::new(weights[n] / total, 0.0));
        Ok(Self {
            matrix: CMatrix::from_diagonal(&diag),
            trunc,
        })
    }

    /// `|α⟩⟨α|` built as `D(α)|0⟩`.
    pub fn coherent(trunc: FockTruncation, alpha: Complex64) -> Result<Self> {
        Self::vacuum(trunc).displaced(alpha)
    }

    /// `|ψ⟩⟨ψ|` for a normalized amplitude vector.
    pub fn from_pure(trunc: FockTruncation, psi: &DVector<Complex64>) -> Result<Self> {
        if psi.len() != trunc.dim() {
            return Err(Error::DimensionMismatch {
                left: psi.len(),
                right: trunc.dim(),
            });
        }
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "state vector norm is {norm}, expected 1"
            )));
        }
        Ok(Self {
            matrix: psi * psi.adjoint(),
            trunc,
        })
    }

    /// `D(α) ρ D†(α)`.
    pub fn displaced(&self, alpha: Complex64) -> Result<Self> {
        let d = CavityOperator::displacement(self.trunc, alpha)?;
        Ok(self.conjugated(&d))
    }

    /// `U ρ U†`, hermitized.
    pub fn conjugated(&self, u: &CavityOperator) -> Self {
        let m = &u.entries * &self.matrix * u.entries.adjoint();
        Self {
            matrix: hermitize(&m),
            trunc: self.trunc,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn truncation(&self) -> FockTruncation {
        self.trunc
    }

    /// Population of the top retained level.
    pub fn leakage(&self) -> f64 {
        let n = self.trunc.n_max();
        self.matrix[(n, n)].re
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)[0]
    }

    pub fn report(&self) -> StateReport {
        StateReport {
            hermiticity_defect: (&self.matrix - self.matrix.adjoint()).camax(),
            trace: trace(&self.matrix).re,
            min_eigenvalue: self.min_eigenvalue(),
            leakage: self.leakage(),
        }
    }

    pub fn check(&self, tol: &StateTolerances) -> Result<StateReport> {
        let report = self.report();
        if report.hermiticity_defect > tol.hermiticity {
            return Err(Error::InvalidState(format!(
                "not Hermitian: defect {:.3e}",
                report.hermiticity_defect
            )));
        }
        if (report.trace - 1.0).abs() > tol.trace {
            return Err(Error::InvalidState(format!(
                "trace is {} (tolerance {:.1e})",
                report.trace, tol.trace
            )));
        }
        if report.min_eigenvalue < -tol.positivity {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:.3e}",
                report.min_eigenvalue
            )));
        }
        if report.leakage > tol.leakage {
            return Err(Error::TruncationTooSmall {
                needed: self.trunc.n_max() + 1,
                have: self.trunc.n_max(),
            });
        }
        Ok(report)
    }

    /// Projects eigenvalues below zero onto zero and restores unit trace.
    pub fn clip_positivity(&self) -> Result<Self> {
        let eig = SymmetricEigen::new(hermitize(&self.matrix));
        let clipped = eig
            .eigenvalues
            .map(|x| Complex64::new(x.max(0.0), 0.0));
        let total: f64 = clipped.iter().map(|z| z.re).sum();
        if total <= 0.0 {
            return Err(Error::InvalidState("no positive spectrum to keep".into()));
        }
        let v = &eig.eigenvectors;
        let m = v * CMatrix::from_diagonal(&clipped) * v.adjoint() / Complex64::new(total, 0.0);
        Ok(Self {
            matrix: hermitize(&m),
            trunc: self.trunc,
        })
    }

    /// `Tr(ρ O)`.
    pub fn expectation(&self, op: &CavityOperator) -> Result<Complex64> {
        self.trunc.check_same(&op.trunc)?;
        Ok(trace_product(&self.matrix, &op.entries))
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.matrix
            .diagonal()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p.re)
            .sum()
    }

    /// `⟨a⟩ = Σ √(n+1) ρ_{n+1,n}`.
    pub fn mean_amplitude(&self) -> Complex64 {
        (0..self.trunc.n_max())
            .map(|n| self.matrix[(n + 1, n)] * ((n + 1) as f64).sqrt())
            .sum()
    }

    /// `⟨(a†a)²⟩`.
    pub fn photon_number_second_moment(&self) -> f64 {
        self.matrix
            .diagonal()
            .iter()
            .enumerate()
            .map(|(n, p)| (n * n) as f64 * p.re)
            .sum()
    }
}

/// `Tr(A B)` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let d = a.nrows();
    let mut acc = ZERO;
    for i in 0..d {
        for j in 0..d {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
pub fn fidelity(rho: &CavityState, sigma: &CavityState) -> Result<f64> {
    rho.trunc.check_same(&sigma.trunc)?;
    let sqrt_rho = psd_sqrt(&rho.matrix);
    let inner = &sqrt_rho * &sigma.matrix * &sqrt_rho;
    let root_sum: f64 = hermitian_eigenvalues(&inner)
        .into_iter()
        .map(|x| x.max(0.0).sqrt())
        .sum();
    Ok((root_sum * root_sum).clamp(0.0, 1.0))
}

/// `½‖ρ − σ‖₁`.
pub fn trace_distance(rho: &CavityState, sigma: &CavityState) -> Result<f64> {
    rho.trunc.check_same(&sigma.trunc)?;
    Ok(0.5 * trace_norm(&(&rho.matrix - &sigma.matrix)))
}

fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(hermitize(m));
    let roots = eig.eigenvalues.map(|x| Complex64::new(x.max(0.0).sqrt(), 0.0));
    let v = &eig.eigenvectors;
    v * CMatrix::from_diagonal(&roots) * v.adjoint()
}

/// Ladder-operator products in O(d²), matching the truncated dense matrices.
pub(crate) mod ladder {
    use super::CMatrix;

    /// `a X`
    pub fn a_left(x: &CMatrix) -> CMatrix {
        let d = x.nrows();
        CMatrix::from_fn(d, d, |p, q| {
            if p + 1 < d {
                x[(p + 1, q)] * ((p + 1) as f64).sqrt()
            } else {
                Default::default()
            }
        })
    }

    /// `a† X`
    pub fn ad_left(x: &CMatrix) -> CMatrix {
        let d = x.nrows();
        CMatrix::from_fn(d, d, |p, q| {
            if p >= 1 {
                x[(p - 1, q)] * (p as f64).sqrt()
            } else {
                Default::default()
            }
        })
    }

    /// `X a`
    pub fn a_right(x: &CMatrix) -> CMatrix {
        let d = x.nrows();
        CMatrix::from_fn(d, d, |p, q| {
            if q >= 1 {
                x[(p, q - 1)] * (q as f64).sqrt()
            } else {
                Default::default()
            }
        })
    }

    /// `X a†`
    pub fn ad_right(x: &CMatrix) -> CMatrix {
        let d = x.nrows();
        CMatrix::from_fn(d, d, |p, q| {
            if q + 1 < d {
                x[(p, q + 1)] * ((q + 1) as f64).sqrt()
            } else {
                Default::default()
            }
        })
    }
}
