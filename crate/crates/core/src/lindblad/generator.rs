use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SystemParams;
use crate::atom::InteractionMap;
use crate::error::Result;
use crate::fock::{ladder, CMatrix, CavityState, FockTruncation};

/// Which master equation drives the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeneratorKind {
    /// `r[M(τ) − 1]ρ + κ D[a]ρ` with the exact single-atom kick.
    FullCoarseGrained,
    /// `i[ρ, H_eff] + γ1 D[a†]ρ + γ2 D[a]ρ`, second order in `τ`.
    EffectiveSecondOrder,
    /// `κ D[a]ρ` only.
    DecayOnly,
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::FullCoarseGrained => "full",
            GeneratorKind::EffectiveSecondOrder => "effective",
            GeneratorKind::DecayOnly => "decay",
        }
    }
}

/// `D[a]ρ = aρa† − ½(a†aρ + ρa†a)`.
fn lowering_dissipator(rho: &CMatrix) -> CMatrix {
    let jump = ladder::a_left(&ladder::ad_right(rho));
    let d = rho.nrows();
    CMatrix::from_fn(d, d, |p, q| {
        jump[(p, q)] - rho[(p, q)] * (0.5 * (p + q) as f64)
    })
}

/// `D[a†]ρ = a†ρa − ½(aa†ρ + ρaa†)` with the truncated `aa†`.
fn raising_dissipator(rho: &CMatrix) -> CMatrix {
    let jump = ladder::ad_left(&ladder::a_right(rho));
    let d = rho.nrows();
    // truncated aa† = diag(1, 2, …, n_max, 0)
    let aad = |n: usize| if n + 1 < d { (n + 1) as f64 } else { 0.0 };
    CMatrix::from_fn(d, d, |p, q| {
        jump[(p, q)] - rho[(p, q)] * (0.5 * (aad(p) + aad(q)))
    })
}

/// `(κ/2)(2aρa† − a†aρ − ρa†a)`.
pub fn apply_decay_dissipator(rho: &CavityState, kappa: f64) -> CMatrix {
    lowering_dissipator(rho.matrix()) * Complex64::new(kappa, 0.0)
}

/// A master-equation generator bound to parameters and a truncation.
#[derive(Debug, Clone)]
pub struct Generator {
    kind: GeneratorKind,
    params: SystemParams,
    trunc: FockTruncation,
    kick: Option<InteractionMap>,
}

impl Generator {
    pub fn new(params: &SystemParams, kind: GeneratorKind, trunc: FockTruncation) -> Self {
        let kick = match kind {
            GeneratorKind::FullCoarseGrained => {
                Some(InteractionMap::new(trunc, &params.atom, params.g_tau()))
            }
            _ => None,
        };
        Self {
            kind,
            params: *params,
            trunc,
            kick,
        }
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn truncation(&self) -> FockTruncation {
        self.trunc
    }

    /// `dρ/dt` for an arbitrary (not necessarily physical) matrix.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let p = &self.params;
        match self.kind {
            GeneratorKind::DecayOnly => lowering_dissipator(rho) * Complex64::new(p.kappa, 0.0),
            GeneratorKind::EffectiveSecondOrder => {
                let xi = p.xi();
                // −i[H, ρ] with H = ξa† + ξ*a
                let h_rho = ladder::ad_left(rho) * xi + ladder::a_left(rho) * xi.conj();
                let rho_h = ladder::ad_right(rho) * xi + ladder::a_right(rho) * xi.conj();
                (h_rho - rho_h) * Complex64::new(0.0, -1.0)
                    + raising_dissipator(rho) * Complex64::new(p.gamma1(), 0.0)
                    + lowering_dissipator(rho) * Complex64::new(p.gamma2(), 0.0)
            }
            GeneratorKind::FullCoarseGrained => {
                let kick = self.kick.as_ref().expect("kick map built for full generator");
                (kick.apply(rho) - rho) * Complex64::new(p.r, 0.0)
                    + lowering_dissipator(rho) * Complex64::new(p.kappa, 0.0)
            }
        }
    }

    /// Column-major vectorized superoperator: `vec(Lρ) = S vec(ρ)` with
    /// `vec` stacking columns.
    pub fn superoperator(&self) -> CMatrix {
        let d = self.trunc.dim();
        let n = d * d;
        let mut s = CMatrix::zeros(n, n);
        let mut basis = CMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                basis[(i, j)] = Complex64::new(1.0, 0.0);
                let image = self.apply(&basis);
                basis[(i, j)] = Complex64::new(0.0, 0.0);
                let col = i + j * d;
                for (k, v) in image.iter().enumerate() {
                    if *v != Complex64::new(0.0, 0.0) {
                        s[(k, col)] = *v;
                    }
                }
            }
        }
        s
    }
}

/// `dρ/dt` for a physical state.
///
/// The full generator checks that a single kick keeps the truncation leak
/// below tolerance.
pub fn apply_generator(
    rho: &CavityState,
    params: &SystemParams,
    kind: GeneratorKind,
) -> Result<CMatrix> {
    let generator = Generator::new(params, kind, rho.truncation());
    if let Some(kick) = &generator.kick {
        kick.apply_state(rho)?;
    }
    Ok(generator.apply(rho.matrix()))
}

/// Exact amplitude-damping channel `exp(t κ D[a])` on the truncated space.
///
/// `ρ'_{mn} = Σ_k √(C(m+k,k) C(n+k,k)) η^{(m+n)/2} (1−η)^k ρ_{m+k,n+k}` with
/// `η = e^{−κt}`.
#[derive(Debug, Clone)]
pub struct DecayChannel {
    dim: usize,
    /// `sqrt_binom[m * dim + k] = √C(m+k, k)`
    sqrt_binom: Vec<f64>,
}

impl DecayChannel {
    pub fn new(trunc: FockTruncation) -> Self {
        let dim = trunc.dim();
        let mut sqrt_binom = vec![0.0; dim * dim];
        for m in 0..dim {
            let mut binom = 1.0f64;
            for k in 0..dim {
                if k > 0 {
                    binom *= (m + k) as f64 / k as f64;
                }
                sqrt_binom[m * dim + k] = binom.sqrt();
            }
        }
        Self { dim, sqrt_binom }
    }

    /// Applies `exp(t κ D[a])` for `kappa_t = κ t ≥ 0`.
    pub fn apply(&self, rho: &CMatrix, kappa_t: f64) -> CMatrix {
        let d = self.dim;
        let eta = (-kappa_t).exp();
        let loss = -(-kappa_t).exp_m1();
        let sqrt_eta = eta.sqrt();
        let sqrt_loss = loss.sqrt();
        // coeff[m][k] = √C(m+k,k) η^{m/2} (1−η)^{k/2}
        let mut eta_pow = vec![1.0; d];
        let mut loss_pow = vec![1.0; d];
        for i in 1..d {
            eta_pow[i] = eta_pow[i - 1] * sqrt_eta;
            loss_pow[i] = loss_pow[i - 1] * sqrt_loss;
        }
        let mut coeff = vec![0.0; d * d];
        for m in 0..d {
            for k in 0..d - m {
                coeff[m * d + k] = self.sqrt_binom[m * d + k] * eta_pow[m] * loss_pow[k];
            }
        }
        let mut out = CMatrix::zeros(d, d);
        for n in 0..d {
            for m in 0..d {
                let kmax = d - m.max(n);
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..kmax {
                    let w = coeff[m * d + k] * coeff[n * d + k];
                    if w == 0.0 {
                        break;
                    }
                    acc += rho[(m + k, n + k)] * w;
                }
                out[(m, n)] = acc;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atom::AtomParams;
    use crate::fock::CavityOperator;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params(g_tau: f64, lambda: f64) -> SystemParams {
        let atom = AtomParams::new(0.5, c(lambda, 0.0)).unwrap();
        SystemParams::from_products(g_tau, 10.0, 1.0, 1e-3, atom).unwrap()
    }

    #[test]
    fn decay_dissipator_examples() {
        let t = FockTruncation::new(4).unwrap();
        let vac = CavityState::vacuum(t);
        assert_eq!(apply_decay_dissipator(&vac, 2.0), CMatrix::zeros(5, 5));
        let one = CavityState::fock(t, 1).unwrap();
        let out = apply_decay_dissipator(&one, 2.0);
        let mut expected = CMatrix::zeros(5, 5);
        expected[(0, 0)] = c(2.0, 0.0);
        expected[(1, 1)] = c(-2.0, 0.0);
        assert!((out - expected).camax() < 1e-15);
    }

    #[test]
    fn dissipators_match_dense_formula() {
        let t = FockTruncation::new(5).unwrap();
        let a = CavityOperator::annihilation(t).entries().clone();
        let ad = a.adjoint();
        let x = CMatrix::from_fn(6, 6, |i, j| c((i + 2 * j) as f64 * 0.1, (i as f64 - j as f64) * 0.2));
        let half = c(0.5, 0.0);
        let lower = &a * &x * &ad - (&ad * &a * &x + &x * &ad * &a) * half;
        let raise = &ad * &x * &a - (&a * &ad * &x + &x * &a * &ad) * half;
        assert!((lowering_dissipator(&x) - lower).camax() < 1e-13);
        assert!((raising_dissipator(&x) - raise).camax() < 1e-13);
    }

    #[test]
    fn effective_without_coherence_keeps_diagonal() {
        let p = params(0.01, 0.0);
        assert_eq!(p.xi(), c(0.0, 0.0));
        let t = FockTruncation::new(6).unwrap();
        let rho = CavityState::thermal(t, 0.3).unwrap();
        let out = apply_generator(&rho, &p, GeneratorKind::EffectiveSecondOrder).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                if i != j {
                    assert_eq!(out[(i, j)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn effective_drive_on_vacuum() {
        let p = params(0.01, 0.5);
        let t = FockTruncation::new(8).unwrap();
        let out = apply_generator(&CavityState::vacuum(t), &p, GeneratorKind::EffectiveSecondOrder).unwrap();
        let a = CavityOperator::annihilation(t);
        let da = crate::fock::trace_product(&out, a.entries());
        assert!((da - c(0.0, -1.0) * p.xi()).norm() < 1e-15);
    }

    #[test]
    fn coarse_graining_defect_is_third_order() {
        let t = FockTruncation::new(10).unwrap();
        let vac = CavityState::vacuum(t);
        let defect = |g_tau: f64| {
            let p = params(g_tau, 0.5);
            let full = apply_generator(&vac, &p, GeneratorKind::FullCoarseGrained).unwrap();
            let eff = apply_generator(&vac, &p, GeneratorKind::EffectiveSecondOrder).unwrap();
            (full - eff).norm()
        };
        for g_tau in [0.04, 0.02, 0.01] {
            let ratio = defect(g_tau) / defect(g_tau / 2.0);
            assert!(ratio >= 8.0 * 0.99, "g_tau {g_tau}: ratio {ratio}");
        }
    }

    #[test]
    fn superoperator_matches_apply() {
        let p = params(0.2, 0.3);
        let t = FockTruncation::new(4).unwrap();
        for kind in [
            GeneratorKind::FullCoarseGrained,
            GeneratorKind::EffectiveSecondOrder,
            GeneratorKind::DecayOnly,
        ] {
            let g = Generator::new(&p, kind, t);
            let s = g.superoperator();
            let x = CMatrix::from_fn(5, 5, |i, j| c((i * j) as f64 * 0.1 + 0.2, i as f64 - 0.5 * j as f64));
            let vec = nalgebra::DVector::from_column_slice(x.as_slice());
            let image = &s * vec;
            let direct = g.apply(&x);
            assert!((nalgebra::DVector::from_column_slice(direct.as_slice()) - image).camax() < 1e-13);
        }
    }

    #[test]
    fn decay_channel_single_photon() {
        let t = FockTruncation::new(5).unwrap();
        let channel = DecayChannel::new(t);
        let one = CavityState::fock(t, 1).unwrap();
        let out = channel.apply(one.matrix(), 1.0);
        let eta = (-1.0f64).exp();
        assert!((out[(1, 1)].re - eta).abs() < 1e-15);
        assert!((out[(0, 0)].re - (1.0 - eta)).abs() < 1e-15);
        assert_eq!(channel.apply(one.matrix(), 0.0), one.matrix().clone());
    }

    #[test]
    fn decay_channel_coherent_state_stays_coherent() {
        let t = FockTruncation::new(30).unwrap();
        let alpha = c(0.8, -0.4);
        let coh = CavityState::coherent(t, alpha).unwrap();
        let out = DecayChannel::new(t).apply(coh.matrix(), 0.7);
        let expected = CavityState::coherent(t, alpha * (-0.35f64).exp()).unwrap();
        assert!((out - expected.matrix()).camax() < 1e-9);
    }
}
