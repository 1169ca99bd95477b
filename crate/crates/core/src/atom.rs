//! The injected two-level atom and the single-atom kick on the cavity.
//!
//! Joint operators use the ordering `atom ⊗ Fock` with atom basis `{|e⟩, |g⟩}`,
//! so joint index `k = atom · (n_max + 1) + n`.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{hermitize, trace, CMatrix, CavityState, FockTruncation};

/// Maximum trace the kick may lose through the top Fock level.
pub const KICK_LEAKAGE_TOLERANCE: f64 = 1e-8;

/// Density matrix entries of every injected atom: `[[p_e, λ], [λ*, p_g]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AtomParams {
    p_e: f64,
    p_g: f64,
    lambda: Complex64,
}

impl AtomParams {
    /// Atom with excited population `p_e`, `p_g = 1 − p_e`, and coherence `lambda`.
    pub fn new(p_e: f64, lambda: Complex64) -> Result<Self> {
        Self::from_populations(p_e, 1.0 - p_e, lambda)
    }

    pub fn from_populations(p_e: f64, p_g: f64, lambda: Complex64) -> Result<Self> {
        if !p_e.is_finite() || !p_g.is_finite() || !lambda.re.is_finite() || !lambda.im.is_finite()
        {
            return Err(Error::InvalidAtomState("non-finite entry".into()));
        }
        if !(0.0..=1.0).contains(&p_e) || !(0.0..=1.0).contains(&p_g) {
            return Err(Error::InvalidAtomState(format!(
                "populations must lie in [0, 1], got p_e = {p_e}, p_g = {p_g}"
            )));
        }
        if (p_e + p_g - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidAtomState(format!(
                "p_e + p_g = {} != 1",
                p_e + p_g
            )));
        }
        if lambda.norm_sqr() > p_e * p_g + 1e-12 {
            return Err(Error::InvalidAtomState(format!(
                "|lambda|^2 = {} exceeds p_e p_g = {}",
                lambda.norm_sqr(),
                p_e * p_g
            )));
        }
        Ok(Self { p_e, p_g, lambda })
    }

    pub fn excited() -> Self {
        Self {
            p_e: 1.0,
            p_g: 0.0,
            lambda: Complex64::new(0.0, 0.0),
        }
    }

    pub fn ground() -> Self {
        Self {
            p_e: 0.0,
            p_g: 1.0,
            lambda: Complex64::new(0.0, 0.0),
        }
    }

    pub fn p_e(&self) -> f64 {
        self.p_e
    }

    pub fn p_g(&self) -> f64 {
        self.p_g
    }

    pub fn lambda(&self) -> Complex64 {
        self.lambda
    }

    /// Same populations, coherence `λ*`.
    pub fn conjugate(&self) -> Self {
        Self {
            lambda: self.lambda.conj(),
            ..*self
        }
    }

    pub fn density(&self) -> Matrix2<Complex64> {
        atom_density(self)
    }
}

pub fn atom_density(params: &AtomParams) -> Matrix2<Complex64> {
    Matrix2::new(
        Complex64::new(params.p_e, 0.0),
        params.lambda,
        params.lambda.conj(),
        Complex64::new(params.p_g, 0.0),
    )
}

/// A cavity-space operator with a single nonzero diagonal: entry `(q + shift, q)`
/// holds `coeff[q]`.
#[derive(Debug, Clone)]
struct Band {
    shift: isize,
    coeff: Vec<Complex64>,
}

impl Band {
    fn at(&self, row: usize, col: usize) -> Complex64 {
        if row as isize - col as isize == self.shift {
            self.coeff[col]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// Accumulates `w · A ρ B†` into `out`.
    fn sandwich_into(a: &Band, rho: &CMatrix, b: &Band, w: Complex64, out: &mut CMatrix) {
        let d = rho.nrows() as isize;
        for q in 0..d {
            let j = q - b.shift;
            if j < 0 || j >= d {
                continue;
            }
            let bj = b.coeff[j as usize].conj() * w;
            if bj == Complex64::new(0.0, 0.0) {
                continue;
            }
            for p in 0..d {
                let i = p - a.shift;
                if i < 0 || i >= d {
                    continue;
                }
                out[(p as usize, q as usize)] +=
                    a.coeff[i as usize] * rho[(i as usize, j as usize)] * bj;
            }
        }
    }
}

/// The four cavity blocks `⟨m|U|j⟩` of the resonant Jaynes–Cummings propagator.
#[derive(Debug, Clone)]
struct JcBlocks {
    /// indexed `[m][j]` with 0 = e, 1 = g
    blocks: [[Band; 2]; 2],
}

impl JcBlocks {
    fn new(trunc: FockTruncation, g_tau: f64) -> Self {
        let d = trunc.dim();
        let zero = Complex64::new(0.0, 0.0);
        let minus_i = Complex64::new(0.0, -1.0);
        // ⟨e|U|e⟩ = cos(gτ√(aa†)): |n⟩ → cos(gτ√(n+1))|n⟩; the top level
        // would couple to |g, n_max+1⟩ and keeps only this diagonal
        let ee = Band {
            shift: 0,
            coeff: (0..d)
                .map(|n| Complex64::new((g_tau * ((n + 1) as f64).sqrt()).cos(), 0.0))
                .collect(),
        };
        // ⟨g|U|g⟩ = cos(gτ√(a†a))
        let gg = Band {
            shift: 0,
            coeff: (0..d)
                .map(|n| Complex64::new((g_tau * (n as f64).sqrt()).cos(), 0.0))
                .collect(),
        };
        // ⟨e|U|g⟩ = −i sin(gτ√(aa†))/√(aa†) a: |n⟩ → −i sin(gτ√n)|n−1⟩
        let eg = Band {
            shift: -1,
            coeff: (0..d)
                .map(|n| {
                    if n == 0 {
                        zero
                    } else {
                        minus_i * (g_tau * (n as f64).sqrt()).sin()
                    }
                })
                .collect(),
        };
        // ⟨g|U|e⟩ = −i a† sin(gτ√(aa†))/√(aa†): |n⟩ → −i sin(gτ√(n+1))|n+1⟩
        let ge = Band {
            shift: 1,
            coeff: (0..d)
                .map(|n| {
                    if n + 1 < d {
                        minus_i * (g_tau * ((n + 1) as f64).sqrt()).sin()
                    } else {
                        zero
                    }
                })
                .collect(),
        };
        Self {
            blocks: [[ee, eg], [ge, gg]],
        }
    }
}

/// Joint atom–cavity operator of dimension `2(n_max + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOperator {
    entries: CMatrix,
    trunc: FockTruncation,
}

impl JointOperator {
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn truncation(&self) -> FockTruncation {
        self.trunc
    }

    /// `‖U†U − 1‖_F`, nonzero only through the top-level boundary pair.
    pub fn boundary_leakage(&self) -> f64 {
        let n = self.entries.nrows();
        (self.entries.adjoint() * &self.entries - CMatrix::identity(n, n)).norm()
    }
}

/// The resonant Jaynes–Cummings propagator for the dimensionless pulse area `gτ`.
pub fn jc_unitary(trunc: FockTruncation, g_tau: f64) -> JointOperator {
    let d = trunc.dim();
    let blocks = JcBlocks::new(trunc, g_tau);
    let entries = CMatrix::from_fn(2 * d, 2 * d, |r, c| {
        blocks.blocks[r / d][c / d].at(r % d, c % d)
    });
    JointOperator { entries, trunc }
}

/// The single-atom kick `ρ ↦ Tr_a[U (ρ ⊗ ρ_a) U†]`, precomputed for reuse.
#[derive(Debug, Clone)]
pub struct InteractionMap {
    blocks: JcBlocks,
    atom: Matrix2<Complex64>,
    trunc: FockTruncation,
}

impl InteractionMap {
    pub fn new(trunc: FockTruncation, atom: &AtomParams, g_tau: f64) -> Self {
        Self {
            blocks: JcBlocks::new(trunc, g_tau),
            atom: atom.density(),
            trunc,
        }
    }

    pub fn truncation(&self) -> FockTruncation {
        self.trunc
    }

    /// Applies the map to an arbitrary matrix (linear extension).
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = self.trunc.dim();
        let mut out = CMatrix::zeros(d, d);
        for m in 0..2 {
            for j in 0..2 {
                for l in 0..2 {
                    let w = self.atom[(j, l)];
                    if w == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    Band::sandwich_into(
                        &self.blocks.blocks[m][j],
                        rho,
                        &self.blocks.blocks[m][l],
                        w,
                        &mut out,
                    );
                }
            }
        }
        out
    }

    /// Applies the map to a state, failing if more than
    /// [`KICK_LEAKAGE_TOLERANCE`] of the trace escapes the truncation.
    pub fn apply_state(&self, rho: &CavityState) -> Result<CavityState> {
        if rho.truncation() != self.trunc {
            return Err(Error::DimensionMismatch {
                left: rho.truncation().dim(),
                right: self.trunc.dim(),
            });
        }
        let out = self.apply(rho.matrix());
        let lost = trace(rho.matrix()).re - trace(&out).re;
        if lost > KICK_LEAKAGE_TOLERANCE {
            return Err(Error::TruncationTooSmall {
                needed: self.trunc.n_max() + 1,
                have: self.trunc.n_max(),
            });
        }
        Ok(CavityState::from_matrix_unchecked(hermitize(&out), self.trunc))
    }
}

/// One atom passing through the cavity: `M(τ)ρ`.
pub fn interaction_map(rho: &CavityState, atom: &AtomParams, g_tau: f64) -> Result<CavityState> {
    InteractionMap::new(rho.truncation(), atom, g_tau).apply_state(rho)
}

/// Reference implementation of [`interaction_map`]: explicit joint-space
/// conjugation with [`jc_unitary`] followed by the partial trace over the atom.
pub fn interaction_map_dense(
    rho: &CavityState,
    atom: &AtomParams,
    g_tau: f64,
) -> Result<CavityState> {
    let trunc = rho.truncation();
    let d = trunc.dim();
    let u = jc_unitary(trunc, g_tau);
    let rho_a = atom.density();
    let joint = CMatrix::from_fn(2 * d, 2 * d, |r, c| {
        rho_a[(r / d, c / d)] * rho.matrix()[(r % d, c % d)]
    });
    let evolved = u.entries() * joint * u.entries().adjoint();
    let out = evolved.view((0, 0), (d, d)) + evolved.view((d, d), (d, d));
    let lost = trace(rho.matrix()).re - trace(&out).re;
    if lost > KICK_LEAKAGE_TOLERANCE {
        return Err(Error::TruncationTooSmall {
            needed: trunc.n_max() + 1,
            have: trunc.n_max(),
        });
    }
    Ok(CavityState::from_matrix_unchecked(hermitize(&out), trunc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn atom_density_matrices() {
        let e = AtomParams::excited().density();
        assert_eq!(e, Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)));

        let plus = AtomParams::new(0.5, c(0.5, 0.0)).unwrap().density();
        let v = nalgebra::Vector2::new(c(1.0 / SQRT_2, 0.0), c(1.0 / SQRT_2, 0.0));
        assert!((plus - v * v.adjoint()).camax() < 1e-15);
        // rank one: determinant vanishes
        assert!(plus.determinant().norm() < 1e-15);
    }

    #[test]
    fn atom_validation() {
        assert!(matches!(
            AtomParams::new(0.5, c(0.6, 0.0)),
            Err(Error::InvalidAtomState(_))
        ));
        assert!(AtomParams::new(1.2, c(0.0, 0.0)).is_err());
        assert!(AtomParams::from_populations(0.5, 0.6, c(0.0, 0.0)).is_err());
        assert!(AtomParams::new(0.3, c(0.2, 0.3)).is_ok());
    }

    fn basis(d: usize, atom: usize, n: usize) -> DVector<Complex64> {
        let mut v = DVector::zeros(2 * d);
        v[atom * d + n] = c(1.0, 0.0);
        v
    }

    #[test]
    fn rabi_transfers() {
        let t = FockTruncation::new(4).unwrap();
        let d = t.dim();
        let u = jc_unitary(t, FRAC_PI_2);
        let out = u.entries() * basis(d, 0, 0);
        assert!((out - basis(d, 1, 1) * c(0.0, -1.0)).camax() < 1e-15);

        let u = jc_unitary(t, FRAC_PI_2 / SQRT_2);
        let out = u.entries() * basis(d, 0, 1);
        assert!((out - basis(d, 1, 2) * c(0.0, -1.0)).camax() < 1e-15);

        for g_tau in [0.0, 0.3, 2.1] {
            let u = jc_unitary(t, g_tau);
            let out = u.entries() * basis(d, 1, 0);
            assert!((out - basis(d, 1, 0)).camax() < 1e-15);
        }
    }

    #[test]
    fn unitary_away_from_boundary() {
        let t = FockTruncation::new(6).unwrap();
        let u = jc_unitary(t, 0.7);
        let d = t.dim();
        let gram = u.entries().adjoint() * u.entries();
        for r in 0..2 * d {
            for col in 0..2 * d {
                if r == d - 1 || col == d - 1 {
                    continue; // |e, n_max⟩
                }
                let expected = if r == col { 1.0 } else { 0.0 };
                assert!((gram[(r, col)] - c(expected, 0.0)).norm() < 1e-14);
            }
        }
        let defect = (0.7 * 7f64.sqrt()).sin().powi(2);
        assert_relative_eq!(gram[(d - 1, d - 1)].re, 1.0 - defect, epsilon = 1e-14);
        assert!(u.boundary_leakage() > 0.0);
        assert_relative_eq!(jc_unitary(t, 0.0).boundary_leakage(), 0.0);
    }

    #[test]
    fn full_rabi_transfer_of_excited_atom() {
        let t = FockTruncation::new(5).unwrap();
        let out = interaction_map(&CavityState::vacuum(t), &AtomParams::excited(), FRAC_PI_2).unwrap();
        assert!((out.matrix() - CavityState::fock(t, 1).unwrap().matrix()).camax() < 1e-15);
    }

    #[test]
    fn vacuum_excitation_law() {
        let t = FockTruncation::new(5).unwrap();
        for (p_e, lam, g_tau) in [(0.5, 0.5, 0.03), (0.2, 0.1, 0.9), (1.0, 0.0, 1.3)] {
            let atom = AtomParams::new(p_e, c(lam, 0.0)).unwrap();
            let out = interaction_map(&CavityState::vacuum(t), &atom, g_tau).unwrap();
            assert_relative_eq!(
                out.mean_photon_number(),
                p_e * g_tau.sin().powi(2),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn coherence_drives_amplitude() {
        // from vacuum U|e,0⟩ = cos(gτ)|e,0⟩ − i sin(gτ)|g,1⟩ and U|g,0⟩ = |g,0⟩,
        // so the traced-out coherence gives ⟨a⟩ = ρ_{1,0} = −i sin(gτ) λ
        let t = FockTruncation::new(6).unwrap();
        let atom = AtomParams::new(0.5, c(0.5, 0.0)).unwrap();
        let g_tau = 0.03;
        let out = interaction_map(&CavityState::vacuum(t), &atom, g_tau).unwrap();
        let expected = c(0.0, -1.0) * 0.5 * g_tau.sin();
        assert!((out.mean_amplitude() - expected).norm() < 1e-16);
        let dense = interaction_map_dense(&CavityState::vacuum(t), &atom, g_tau).unwrap();
        assert!((out.matrix() - dense.matrix()).camax() < 1e-15);
    }

    #[test]
    fn zero_pulse_is_identity() {
        let t = FockTruncation::new(4).unwrap();
        let rho = CavityState::thermal(t, 0.2).unwrap();
        let atom = AtomParams::new(0.3, c(0.2, 0.1)).unwrap();
        let out = interaction_map(&rho, &atom, 0.0).unwrap();
        assert!((out.matrix() - rho.matrix()).camax() < 1e-15);
    }

    #[test]
    fn leakage_is_rejected() {
        let t = FockTruncation::new(3).unwrap();
        let top = CavityState::fock(t, 3)
            .map(|s| s.into_matrix())
            .unwrap();
        let tol = crate::fock::StateTolerances::default().without_leakage_check();
        let rho = CavityState::from_matrix_with(top, t, &tol).unwrap();
        let err = interaction_map(&rho, &AtomParams::excited(), 0.5).unwrap_err();
        assert!(matches!(err, Error::TruncationTooSmall { .. }));
    }
}
