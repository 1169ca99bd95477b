//! Gaussian description of the steady state: displaced (squeezed) thermal
//! states recovered from first and second moments, and the two-component
//! weak-coupling decomposition.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{displacement_guidance, CavityOperator, CavityState, FockTruncation};
use crate::lindblad::SystemParams;
use crate::moments::MomentVector;

/// Top-level weight of the untruncated thermal distribution that `build_state`
/// tolerates.
const THERMAL_TAIL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianSpec {
    pub z0: Complex64,
    /// `coth(β/2) = 2n̄ + 1`.
    pub q: f64,
    pub r0: f64,
    pub theta0: f64,
    pub theta1: f64,
}

impl GaussianSpec {
    pub fn displaced_thermal(z0: Complex64, q: f64) -> Self {
        Self {
            z0,
            q,
            r0: 0.0,
            theta0: 0.0,
            theta1: 0.0,
        }
    }

    /// `n̄ = (Q − 1)/2` of the undisplaced thermal core.
    pub fn thermal_occupation(&self) -> f64 {
        ((self.q - 1.0) / 2.0).max(0.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.q >= 1.0 - 1e-12) {
            return Err(Error::InvalidState(format!("Q must be at least 1, got {}", self.q)));
        }
        if !(self.r0 >= -1e-12) || !self.r0.is_finite() {
            return Err(Error::InvalidState(format!("squeezing must be non-negative, got {}", self.r0)));
        }
        if !self.z0.re.is_finite() || !self.z0.im.is_finite() {
            return Err(Error::InvalidState("displacement is not finite".into()));
        }
        Ok(())
    }

    /// A truncation large enough for [`build_state`].
    pub fn suggested_truncation(&self) -> FockTruncation {
        let nbar = self.thermal_occupation();
        let thermal = if nbar > 0.0 {
            let ratio = nbar / (1.0 + nbar);
            (THERMAL_TAIL_TOLERANCE.ln() / ratio.ln()).ceil() as usize
        } else {
            1
        };
        let squeeze = if self.r0 > 1e-12 {
            (4.0 * (2.0 * self.r0).exp() + 10.0).ceil() as usize
        } else {
            1
        };
        let n = displacement_guidance(self.z0) + thermal.max(squeeze);
        FockTruncation::new(n.max(1)).expect("n_max >= 1")
    }
}

fn wrap_angle(theta: f64) -> f64 {
    if theta <= -PI {
        theta + 2.0 * PI
    } else {
        theta
    }
}

/// Recovers `(z0, Q, r0, θ0, θ1)` from the first and second moments.
pub fn reconstruct(moments: &MomentVector) -> Result<GaussianSpec> {
    moments.check()?;
    let z0 = moments.a();
    // ⟨a²⟩ = −2μ_A* + z0²
    let mu = ((z0 * z0 - moments.a2()) / 2.0).conj();
    let tau0 = moments.n() + 0.5 - z0.norm_sqr();
    if tau0 < 0.5 - 1e-10 {
        return Err(Error::UnphysicalMoments(format!(
            "quadrature noise below vacuum: tau0 = {tau0}"
        )));
    }
    let ratio = 2.0 * mu.norm() / tau0;
    if ratio >= 1.0 {
        return Err(Error::UnphysicalMoments(format!(
            "2|mu_A| / tau0 = {ratio} is not below 1"
        )));
    }
    let x0 = ratio.atanh();
    let theta0 = if mu.norm() == 0.0 { 0.0 } else { wrap_angle(-mu.arg()) };
    Ok(GaussianSpec {
        z0,
        q: 2.0 * tau0 / x0.cosh(),
        r0: x0 / 2.0,
        theta0,
        theta1: 0.0,
    })
}

/// `D(z0) S(r0, θ0) ρ_T S† D†` with `ρ_T` thermal at `n̄ = (Q − 1)/2`.
pub fn build_state(spec: &GaussianSpec, trunc: FockTruncation) -> Result<CavityState> {
    spec.validate()?;
    let nbar = spec.thermal_occupation();
    let ratio = nbar / (1.0 + nbar);
    let tail = ratio.powi(trunc.n_max() as i32);
    if tail > THERMAL_TAIL_TOLERANCE {
        return Err(Error::TruncationTooSmall {
            needed: spec.suggested_truncation().n_max(),
            have: trunc.n_max(),
        });
    }
    let mut state = CavityState::thermal(trunc, nbar)?;
    if spec.r0 > 1e-12 {
        let s = CavityOperator::squeeze(trunc, spec.r0, spec.theta0)?;
        state = state.conjugated(&s);
    }
    if spec.z0.norm() > 0.0 {
        state = state.displaced(spec.z0)?;
    }
    if state.leakage() > THERMAL_TAIL_TOLERANCE {
        return Err(Error::TruncationTooSmall {
            needed: spec.suggested_truncation().n_max().max(trunc.n_max() + 1),
            have: trunc.n_max(),
        });
    }
    Ok(state)
}

/// `Q = (γ1 + γ2)/(γ2 − γ1)`, consistent with the steady moments.
pub fn q_from_rates(params: &SystemParams) -> f64 {
    let g1 = params.gamma1();
    let g2 = params.gamma2();
    (g1 + g2) / (g2 - g1)
}

/// `[1 + p_e N_c(gτ)²]/[1 + (1 − 2p_e) N_c(gτ)²]`, kept for comparison with
/// [`q_from_rates`]; the two differ at first order in `N_c(gτ)²`.
pub fn q_printed_form(params: &SystemParams) -> f64 {
    let eps = params.expansion_parameter();
    let p_e = params.atom.p_e();
    (1.0 + p_e * eps) / (1.0 + (1.0 - 2.0 * p_e) * eps)
}

/// Weak-coupling steady state as a mixture of `|α0⟩` and `D(α0)|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyDecomposition {
    pub alpha0: Complex64,
    /// Weight of the displaced one-photon component, `p_e N_c (gτ)²`.
    pub x: f64,
}

impl SteadyDecomposition {
    /// `(p1, p2) = (1 − x, x)`.
    pub fn weights(&self) -> [f64; 2] {
        [1.0 - self.x, self.x]
    }

    /// `D(α0)|n − 1⟩` for `n ∈ {1, 2}`.
    pub fn component(&self, n: usize, trunc: FockTruncation) -> Result<CavityState> {
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidParams(format!("component index must be 1 or 2, got {n}")));
        }
        CavityState::fock(trunc, n - 1)?.displaced(self.alpha0)
    }

    pub fn mixture(&self, trunc: FockTruncation) -> Result<CavityState> {
        let [p1, p2] = self.weights();
        let m = self.component(1, trunc)?.matrix() * Complex64::new(p1, 0.0)
            + self.component(2, trunc)?.matrix() * Complex64::new(p2, 0.0);
        CavityState::from_matrix(m, trunc)
    }

    /// `(1 − x)|α0|² + x(|α0|² + 1)`.
    pub fn mixture_photon_number(&self) -> f64 {
        let a2 = self.alpha0.norm_sqr();
        (1.0 - self.x) * a2 + self.x * (a2 + 1.0)
    }
}

/// `α0 = −2i N_c λ gτ`, `x = p_e N_c (gτ)²`.
pub fn decompose(params: &SystemParams) -> Result<SteadyDecomposition> {
    let x = params.atom.p_e() * params.expansion_parameter();
    if x >= 0.5 {
        return Err(Error::InvalidParams(format!(
            "mixing weight p_e N_c (g tau)^2 = {x} is outside the expansion"
        )));
    }
    if x > 0.1 {
        log::warn!("mixing weight p_e N_c (g tau)^2 = {x:.3} is not small");
    }
    let alpha0 = Complex64::new(0.0, -2.0) * params.atom.lambda() * (params.n_c() * params.g_tau());
    Ok(SteadyDecomposition { alpha0, x })
}
