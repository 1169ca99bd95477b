//! Closed moment hierarchy of the effective master equation.
//!
//! Moment order: `⟨(a†a)²⟩, ⟨a†aa†⟩, ⟨aa†a⟩, ⟨a†²⟩, ⟨a†a⟩, ⟨a²⟩, ⟨a†⟩, ⟨a⟩`.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{CavityOperator, CavityState};
use crate::lindblad::SystemParams;
use crate::ode::{integrate, OdeOptions};

pub type Matrix8 = SMatrix<Complex64, 8, 8>;
pub type Vector8 = SVector<Complex64, 8>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub const N2: usize = 0;
pub const N_ADAG: usize = 1;
pub const A_N: usize = 2;
pub const ADAG2: usize = 3;
pub const N: usize = 4;
pub const A2: usize = 5;
pub const ADAG: usize = 6;
pub const A: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentVector(pub [Complex64; 8]);

impl MomentVector {
    pub fn vacuum() -> Self {
        Self([ZERO; 8])
    }

    pub fn from_vector(v: &Vector8) -> Self {
        let mut out = [ZERO; 8];
        out.copy_from_slice(v.as_slice());
        Self(out)
    }

    pub fn to_vector(&self) -> Vector8 {
        Vector8::from_column_slice(&self.0)
    }

    /// Expectation values in `state`.
    pub fn from_state(state: &CavityState) -> Self {
        let t = state.truncation();
        let a = CavityOperator::annihilation(t);
        let ad = a.adjoint();
        let num = CavityOperator::number(t);
        let ev = |op: &CavityOperator| state.expectation(op).expect("same truncation");
        let prod = |x: &CavityOperator, y: &CavityOperator| x.compose(y).expect("same truncation");
        let mut m = [ZERO; 8];
        m[N2] = Complex64::new(state.photon_number_second_moment(), 0.0);
        m[N_ADAG] = ev(&prod(&num, &ad));
        m[A_N] = ev(&prod(&a, &num));
        m[ADAG2] = ev(&prod(&ad, &ad));
        m[N] = Complex64::new(state.mean_photon_number(), 0.0);
        m[A2] = ev(&prod(&a, &a));
        m[ADAG] = ev(&ad);
        m[A] = ev(&a);
        Self(m)
    }

    pub fn n2(&self) -> f64 {
        self.0[N2].re
    }

    pub fn n(&self) -> f64 {
        self.0[N].re
    }

    pub fn a(&self) -> Complex64 {
        self.0[A]
    }

    pub fn a2(&self) -> Complex64 {
        self.0[A2]
    }

    /// Photon-number variance `⟨(a†a)²⟩ − ⟨a†a⟩²`.
    pub fn variance(&self) -> f64 {
        self.n2() - self.n() * self.n()
    }

    /// Largest violation of the reality and conjugation relations.
    pub fn symmetry_defect(&self) -> f64 {
        let m = &self.0;
        [
            m[N2].im.abs(),
            m[N].im.abs(),
            (m[ADAG2] - m[A2].conj()).norm(),
            (m[ADAG] - m[A].conj()).norm(),
            (m[N_ADAG] - m[A_N].conj()).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn check(&self) -> Result<()> {
        let defect = self.symmetry_defect();
        if defect > 1e-10 {
            return Err(Error::UnphysicalMoments(format!(
                "conjugation relations violated by {defect:.3e}"
            )));
        }
        if self.variance() < -1e-10 {
            return Err(Error::UnphysicalMoments(format!(
                "negative photon-number variance {:.3e}",
                self.variance()
            )));
        }
        Ok(())
    }

    /// Averages conjugate pairs and drops imaginary parts of real moments.
    fn symmetrized(mut self) -> Self {
        let m = &mut self.0;
        m[N2] = Complex64::new(m[N2].re, 0.0);
        m[N] = Complex64::new(m[N].re, 0.0);
        for (x, y) in [(ADAG2, A2), (ADAG, A), (N_ADAG, A_N)] {
            let v = (m[y] + m[x].conj()) * 0.5;
            m[y] = v;
            m[x] = v.conj();
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentDrift {
    pub m: Matrix8,
    pub b: Vector8,
}

impl MomentDrift {
    /// `M A + B`.
    pub fn rate(&self, moments: &MomentVector) -> Vector8 {
        self.m * moments.to_vector() + self.b
    }
}

/// The moment equations `Ȧ = M A + B`.
pub fn drift(params: &SystemParams) -> MomentDrift {
    let g1 = params.gamma1();
    let g2 = params.gamma2();
    let delta = g1 - g2;
    let s1 = 3.0 * g1 + g2;
    let s2 = g1 + g2;
    let xi = params.xi();
    let xc = xi.conj();
    let c = |x: f64| Complex64::new(x, 0.0);

    let mut m = Matrix8::zeros();
    m[(N2, N2)] = c(2.0 * delta);
    m[(N2, N_ADAG)] = -2.0 * I * xi;
    m[(N2, A_N)] = 2.0 * I * xc;
    m[(N2, N)] = c(s1);
    m[(N2, ADAG)] = I * xi;
    m[(N2, A)] = -I * xc;

    m[(N_ADAG, N_ADAG)] = c(1.5 * delta);
    m[(N_ADAG, ADAG2)] = -I * xi;
    m[(N_ADAG, N)] = 2.0 * I * xc;
    m[(N_ADAG, ADAG)] = c(s2);

    m[(A_N, A_N)] = c(1.5 * delta);
    m[(A_N, N)] = -2.0 * I * xi;
    m[(A_N, A2)] = I * xc;
    m[(A_N, A)] = c(s2);

    m[(ADAG2, ADAG2)] = c(delta);
    m[(ADAG2, ADAG)] = 2.0 * I * xc;

    m[(N, N)] = c(delta);
    m[(N, ADAG)] = -I * xi;
    m[(N, A)] = I * xc;

    m[(A2, A2)] = c(delta);
    m[(A2, A)] = -2.0 * I * xi;

    m[(ADAG, ADAG)] = c(0.5 * delta);
    m[(A, A)] = c(0.5 * delta);

    let b = Vector8::from_column_slice(&[c(g1), I * xc, -I * xi, ZERO, c(g1), ZERO, I * xc, -I * xi]);
    MomentDrift { m, b }
}

/// Solves `M A + B = 0` by dense LU.
pub fn steady_moments(params: &SystemParams) -> Result<MomentVector> {
    params.check_stable()?;
    let d = drift(params);
    let x = d
        .m
        .lu()
        .solve(&(-d.b))
        .ok_or_else(|| Error::NoConvergence("singular moment matrix".into()))?;
    Ok(MomentVector::from_vector(&x).symmetrized())
}

/// Steady moments by back-substitution, using that `M` is upper triangular.
pub fn steady_moments_back_substitution(params: &SystemParams) -> Result<MomentVector> {
    params.check_stable()?;
    let d = drift(params);
    let mut x = Vector8::zeros();
    for i in (0..8).rev() {
        let mut acc = -d.b[i];
        for j in i + 1..8 {
            acc -= d.m[(i, j)] * x[j];
        }
        x[i] = acc / d.m[(i, i)];
    }
    Ok(MomentVector::from_vector(&x))
}

/// Closed-form steady moments of the effective model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormMoments {
    pub a: Complex64,
    pub a2: Complex64,
    pub n: f64,
    pub n2: f64,
}

pub fn closed_form_moments(params: &SystemParams) -> Result<ClosedFormMoments> {
    params.check_stable()?;
    let g1 = params.gamma1();
    let g2 = params.gamma2();
    let xi = params.xi();
    let x2 = xi.norm_sqr();
    let d = g2 - g1;
    Ok(ClosedFormMoments {
        a: 2.0 * I * xi / (g1 - g2),
        a2: -4.0 * xi * xi / (d * d),
        n: g1 / d + 4.0 * x2 / (d * d),
        n2: g1 * (g1 + g2) / (d * d) - 4.0 * (3.0 * g1 + g2) * x2 / (g1 - g2).powi(3)
            + 16.0 * x2 * x2 / d.powi(4),
    })
}

/// Integrates the moment equations from `initial` for `duration`.
pub fn evolve_moments(
    initial: &MomentVector,
    params: &SystemParams,
    duration: f64,
    reltol: f64,
) -> Result<MomentVector> {
    let opts = OdeOptions::with_reltol(reltol)?;
    let d = drift(params);
    let mut y = initial.0.to_vec();
    integrate(
        |_, y, dy| {
            let v = d.m * Vector8::from_column_slice(y) + d.b;
            dy.copy_from_slice(v.as_slice());
        },
        0.0,
        duration,
        &mut y,
        &opts,
    )?;
    Ok(MomentVector::from_vector(&Vector8::from_column_slice(&y)))
}

/// Leading-order photon number `N_c(gτ)² p_e + 4 N_c² (gτ)² |λ|²`.
pub fn approx_photon_number(params: &SystemParams) -> f64 {
    let eps = params.expansion_parameter();
    if eps > 0.1 {
        log::warn!("N_c (g tau)^2 = {eps:.3} is outside the weak-coupling regime");
    }
    let n_c = params.n_c();
    let gt2 = params.g_tau().powi(2);
    eps * params.atom.p_e() + 4.0 * n_c * n_c * gt2 * params.atom.lambda().norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::AtomParams;
    use crate::fock::FockTruncation;
    use crate::lindblad::{Generator, GeneratorKind};
    use approx::assert_relative_eq;

    fn params(g_tau: f64, n_c: f64, lambda: Complex64) -> SystemParams {
        let atom = AtomParams::new(0.5, lambda).unwrap();
        SystemParams::from_products(g_tau, n_c, 1.0, 1e-3, atom).unwrap()
    }

    fn real(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn diagonal_and_spot_entries() {
        let p = params(0.03, 10.0, real(0.5));
        let d = drift(&p);
        let delta = p.gamma1() - p.gamma2();
        let diag = [2.0, 1.5, 1.5, 1.0, 1.0, 1.0, 0.5, 0.5];
        for (i, f) in diag.iter().enumerate() {
            assert_relative_eq!(d.m[(i, i)].re, f * delta, max_relative = 1e-15);
        }
        assert_eq!(d.m[(0, 4)], real(3.0 * p.gamma1() + p.gamma2()));
        for i in 0..8 {
            for j in 0..i {
                assert_eq!(d.m[(i, j)], ZERO);
            }
        }
    }

    #[test]
    fn incoherent_drift() {
        let p = params(0.03, 10.0, real(0.0));
        let d = drift(&p);
        let g1 = real(p.gamma1());
        assert_eq!(d.b.as_slice(), &[g1, ZERO, ZERO, ZERO, g1, ZERO, ZERO, ZERO]);
        for i in 0..8 {
            for j in 0..8 {
                if i != j && !(i == 0 && j == 4) && !(i < 3 && j >= 6) {
                    assert_eq!(d.m[(i, j)], ZERO, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn amplitude_row() {
        let p = params(0.01, 10.0, real(0.5));
        let d = drift(&p);
        let moments = MomentVector::from_vector(&Vector8::from_fn(|i, _| Complex64::new(i as f64, 1.0)));
        let rate = d.rate(&moments);
        let delta = p.gamma1() - p.gamma2();
        let expected = moments.a() * (delta / 2.0) - I * p.xi();
        assert!((rate[A] - expected).norm() < 1e-15);
    }

    #[test]
    fn closed_forms_at_reference_point() {
        let p = params(0.01, 10.0, real(0.5));
        let s = steady_moments(&p).unwrap();
        assert!((s.a() - Complex64::new(0.0, -0.1)).norm() < 1e-14);
        assert!((s.a2() - real(-0.01)).norm() < 1e-15);
        assert_relative_eq!(s.n(), 0.0105, max_relative = 1e-12);
        assert_relative_eq!(s.n2(), 0.0106205, max_relative = 1e-12);
        assert_relative_eq!(s.variance(), 0.01051025, max_relative = 1e-12);
    }

    #[test]
    fn solve_matches_closed_forms_and_back_substitution() {
        for (g_tau, n_c, lambda) in [
            (0.01, 10.0, real(0.5)),
            (0.03, 10.0, real(0.5)),
            (0.03, 10.0, real(0.0)),
            (0.05, 4.0, Complex64::from_polar(0.4, 1.1)),
        ] {
            let p = params(g_tau, n_c, lambda);
            let s = steady_moments(&p).unwrap();
            let c = closed_form_moments(&p).unwrap();
            assert!((s.a() - c.a).norm() <= 1e-12 * c.a.norm().max(1e-300));
            assert!((s.a2() - c.a2).norm() <= 1e-12 * c.a2.norm().max(1e-300));
            assert_relative_eq!(s.n(), c.n, max_relative = 1e-12);
            assert_relative_eq!(s.n2(), c.n2, max_relative = 1e-12);
            let b = steady_moments_back_substitution(&p).unwrap();
            for i in 0..8 {
                assert!((s.0[i] - b.0[i]).norm() <= 1e-12 * s.0[i].norm().max(1e-12));
            }
            let d = drift(&p);
            assert!(d.rate(&s).norm() <= 1e-12 * d.b.norm());
            assert!(s.symmetry_defect() == 0.0);
        }
    }

    #[test]
    fn incoherent_photon_number() {
        let p = params(0.03, 10.0, real(0.0));
        let s = steady_moments(&p).unwrap();
        assert_eq!(s.a(), ZERO);
        assert_eq!(s.a2(), ZERO);
        assert_relative_eq!(s.n(), p.gamma1() / p.relaxation_gap(), max_relative = 1e-14);
    }

    #[test]
    fn drift_matches_generator() {
        // d⟨X⟩/dt = Tr(X L ρ) on a mixed state well inside the truncation
        let t = FockTruncation::new(30).unwrap();
        let p = params(0.05, 4.0, Complex64::from_polar(0.4, 0.7));
        let rho = CavityState::coherent(t, Complex64::new(0.3, -0.5)).unwrap();
        let mixed = CavityState::from_matrix(
            rho.matrix() * real(0.6) + CavityState::thermal(t, 0.4).unwrap().matrix() * real(0.4),
            t,
        )
        .unwrap();
        let gen = Generator::new(&p, GeneratorKind::EffectiveSecondOrder, t);
        let lrho = CavityState::from_matrix_unchecked(gen.apply(mixed.matrix()), t);
        let numeric = MomentVector::from_state(&lrho);
        let predicted = drift(&p).rate(&MomentVector::from_state(&mixed));
        for i in 0..8 {
            assert!((numeric.0[i] - predicted[i]).norm() < 1e-10, "entry {i}");
        }
    }

    #[test]
    fn unstable_rejected() {
        let atom = AtomParams::excited();
        let p = SystemParams::from_products(1.0, 10.0, 1.0, 1.0, atom).unwrap();
        assert!(matches!(steady_moments(&p), Err(Error::UnstableSystem { .. })));
    }

    #[test]
    fn approximate_photon_number() {
        assert_relative_eq!(approx_photon_number(&params(0.01, 10.0, real(0.5))), 0.0105, max_relative = 1e-12);
        assert_relative_eq!(approx_photon_number(&params(0.01, 10.0, real(0.0))), 5e-4, max_relative = 1e-12);
        assert_relative_eq!(approx_photon_number(&params(0.01, 7.3, real(0.5))), 5.694e-3, max_relative = 1e-12);
    }

    #[test]
    fn time_evolution_relaxes() {
        let p = params(0.03, 10.0, real(0.5));
        let late = evolve_moments(&MomentVector::vacuum(), &p, 60.0, 1e-10).unwrap();
        let s = steady_moments(&p).unwrap();
        for i in 0..8 {
            assert!((late.0[i] - s.0[i]).norm() < 1e-9);
        }
    }
}
