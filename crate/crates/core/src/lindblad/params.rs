use num_complex::Complex64;
use serde::Serialize;

use crate::atom::AtomParams;
use crate::error::{Error, Result};

/// Physical rates of the injected-atom cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemParams {
    /// Atom–cavity coupling strength (rad/s).
    pub g: f64,
    /// Transit time of one atom (s).
    pub tau: f64,
    /// Mean injection rate (1/s).
    pub r: f64,
    /// Cavity field decay rate (1/s).
    pub kappa: f64,
    pub atom: AtomParams,
}

impl SystemParams {
    pub fn new(g: f64, tau: f64, r: f64, kappa: f64, atom: AtomParams) -> Result<Self> {
        for (name, v) in [("g", g), ("tau", tau), ("r", r), ("kappa", kappa)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if kappa <= 0.0 {
            return Err(Error::InvalidParams("kappa must be positive".into()));
        }
        Ok(Self {
            g,
            tau,
            r,
            kappa,
            atom,
        })
    }

    /// Builds from the dimensionless products `gτ` and `N_c = r/κ`.
    pub fn from_products(
        g_tau: f64,
        n_c: f64,
        kappa: f64,
        tau: f64,
        atom: AtomParams,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParams(format!("tau must be positive, got {tau}")));
        }
        Self::new(g_tau / tau, tau, n_c * kappa, kappa, atom)
    }

    pub fn with_g(&self, g: f64) -> Self {
        Self { g, ..*self }
    }

    pub fn with_atom(&self, atom: AtomParams) -> Self {
        Self { atom, ..*self }
    }

    pub fn g_tau(&self) -> f64 {
        self.g * self.tau
    }

    /// Effective atom number `N_c = r/κ`.
    pub fn n_c(&self) -> f64 {
        self.r / self.kappa
    }

    /// Coherent drive amplitude `ξ = r g τ λ`.
    pub fn xi(&self) -> Complex64 {
        self.atom.lambda() * (self.r * self.g_tau())
    }

    /// `α = r (gτ)²`.
    pub fn alpha_rate(&self) -> f64 {
        self.r * self.g_tau().powi(2)
    }

    /// Gain rate `γ1 = α p_e`.
    pub fn gamma1(&self) -> f64 {
        self.alpha_rate() * self.atom.p_e()
    }

    /// Loss rate `γ2 = α p_g + κ`.
    pub fn gamma2(&self) -> f64 {
        self.alpha_rate() * self.atom.p_g() + self.kappa
    }

    /// `γ2 − γ1`; the effective model has a steady state only when positive.
    pub fn relaxation_gap(&self) -> f64 {
        self.gamma2() - self.gamma1()
    }

    /// `N_c (gτ)²`, the small parameter of the second-order expansion.
    pub fn expansion_parameter(&self) -> f64 {
        self.n_c() * self.g_tau().powi(2)
    }

    /// Steady amplitude of the effective model, `2iξ/(γ1 − γ2)`.
    pub fn effective_amplitude(&self) -> Complex64 {
        self.xi() * Complex64::new(0.0, 2.0) / (self.gamma1() - self.gamma2())
    }

    pub fn check_stable(&self) -> Result<()> {
        let delta = self.gamma1() - self.gamma2();
        if !(delta < 0.0) {
            return Err(Error::UnstableSystem { delta });
        }
        Ok(())
    }
}

/// Self-describing record of the parameters and their derived rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedParams {
    pub g: f64,
    pub tau: f64,
    pub r: f64,
    pub kappa: f64,
    pub p_e: f64,
    pub p_g: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub g_tau: f64,
    pub n_c: f64,
    pub xi_re: f64,
    pub xi_im: f64,
    pub alpha: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl From<&SystemParams> for ResolvedParams {
    fn from(p: &SystemParams) -> Self {
        Self {
            g: p.g,
            tau: p.tau,
            r: p.r,
            kappa: p.kappa,
            p_e: p.atom.p_e(),
            p_g: p.atom.p_g(),
            lambda_re: p.atom.lambda().re,
            lambda_im: p.atom.lambda().im,
            g_tau: p.g_tau(),
            n_c: p.n_c(),
            xi_re: p.xi().re,
            xi_im: p.xi().im,
            alpha: p.alpha_rate(),
            gamma1: p.gamma1(),
            gamma2: p.gamma2(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derived_rates() {
        let atom = AtomParams::new(0.5, Complex64::new(0.5, 0.0)).unwrap();
        let p = SystemParams::from_products(0.01, 10.0, 1.0, 1e-3, atom).unwrap();
        assert_relative_eq!(p.n_c(), 10.0);
        assert_relative_eq!(p.g_tau(), 0.01, max_relative = 1e-15);
        assert_relative_eq!(p.xi().re, 0.05, max_relative = 1e-14);
        assert_relative_eq!(p.alpha_rate(), 1e-3, max_relative = 1e-14);
        assert_relative_eq!(p.gamma1(), 5e-4, max_relative = 1e-14);
        assert_relative_eq!(p.gamma2(), 1.0005, max_relative = 1e-14);
        assert_relative_eq!(p.relaxation_gap(), 1.0, max_relative = 1e-14);
        let amp = p.effective_amplitude();
        assert_relative_eq!(amp.im, -0.1, max_relative = 1e-13);
    }

    #[test]
    fn gap_identity() {
        for (p_e, g_tau, n_c) in [(0.2, 0.05, 3.0), (0.9, 0.1, 40.0), (0.5, 0.03, 10.0)] {
            let atom = AtomParams::new(p_e, Complex64::new(0.0, 0.0)).unwrap();
            let p = SystemParams::from_products(g_tau, n_c, 2.5, 1e-6, atom).unwrap();
            let expected = p.kappa * (1.0 + n_c * g_tau * g_tau * (atom.p_g() - p_e));
            assert_relative_eq!(p.relaxation_gap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn validation() {
        let atom = AtomParams::ground();
        assert!(SystemParams::new(1.0, 1.0, 1.0, 0.0, atom).is_err());
        assert!(SystemParams::new(-1.0, 1.0, 1.0, 1.0, atom).is_err());
        assert!(SystemParams::new(1.0, 1.0, f64::NAN, 1.0, atom).is_err());
        // inverted pump: gain exceeds loss
        let p = SystemParams::from_products(1.0, 10.0, 1.0, 1.0, AtomParams::excited()).unwrap();
        assert!(matches!(p.check_stable(), Err(Error::UnstableSystem { .. })));
    }
}
