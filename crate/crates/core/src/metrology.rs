//! Estimation error of the coupling strength `g` from the steady photon
//! number, working-regime margins and `N_c` scaling scans.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::atom::AtomParams;
use crate::error::{Error, Result};
use crate::fock::{CavityOperator, FockTruncation};
use crate::gaussian::decompose;
use crate::lindblad::SystemParams;
use crate::moments::closed_form_moments;

/// Highest `N_c` reported as achieved experimentally.
pub const EXPERIMENTAL_NC: f64 = 7.3;

/// Default bound for the "much less than" regime conditions.
pub const DEFAULT_STRICTNESS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluctuationResult {
    /// `Var(a†a) / (∂⟨a†a⟩/∂g)²` from the exact steady moments (1/s²).
    pub delta_g2_exact: f64,
    /// Leading-order `1/(4τ² N_c (p_e + 4 N_c |λ|²))`.
    pub delta_g2_approx: f64,
    pub variance: f64,
    /// Analytic `∂⟨a†a⟩/∂g` (s).
    pub derivative: f64,
    /// Central finite-difference `∂⟨a†a⟩/∂g` with step `g·1e-6`.
    pub derivative_fd: f64,
}

/// Analytic `∂⟨a†a⟩/∂g` of the effective steady state.
pub fn photon_number_derivative(params: &SystemParams) -> Result<f64> {
    params.check_stable()?;
    let SystemParams { g, tau, r, atom, .. } = *params;
    let t2 = tau * tau;
    let d = params.relaxation_gap();
    let g1 = params.gamma1();
    let x2 = params.xi().norm_sqr();
    let dg1 = 2.0 * r * g * t2 * atom.p_e();
    let dd = 2.0 * r * g * t2 * (atom.p_g() - atom.p_e());
    let dx2 = 2.0 * r * r * t2 * atom.lambda().norm_sqr() * g;
    Ok(dg1 / d - g1 * dd / (d * d) + 4.0 * dx2 / (d * d) - 8.0 * x2 * dd / d.powi(3))
}

/// Central difference of the closed-form photon number, step `g·1e-6`.
pub fn photon_number_derivative_fd(params: &SystemParams) -> Result<f64> {
    let h = params.g * 1e-6;
    if !(h > 0.0) {
        return Err(Error::ZeroSensitivity);
    }
    let up = closed_form_moments(&params.with_g(params.g + h))?.n;
    let down = closed_form_moments(&params.with_g(params.g - h))?.n;
    Ok((up - down) / (2.0 * h))
}

/// Leading-order fluctuation `1/(4τ² N_c (p_e + 4 N_c |λ|²))`.
pub fn fluctuation_approx(params: &SystemParams) -> Result<f64> {
    let n_c = params.n_c();
    let denom = 4.0
        * params.tau
        * params.tau
        * n_c
        * (params.atom.p_e() + 4.0 * n_c * params.atom.lambda().norm_sqr());
    if !(denom > 0.0) {
        return Err(Error::ZeroSensitivity);
    }
    Ok(1.0 / denom)
}

pub fn fluctuation(params: &SystemParams) -> Result<FluctuationResult> {
    let moments = closed_form_moments(params)?;
    let derivative = photon_number_derivative(params)?;
    if !(derivative.abs() > 0.0) {
        return Err(Error::ZeroSensitivity);
    }
    let derivative_fd = photon_number_derivative_fd(params)?;
    let variance = moments.n2 - moments.n * moments.n;
    Ok(FluctuationResult {
        delta_g2_exact: variance / (derivative * derivative),
        delta_g2_approx: fluctuation_approx(params)?,
        variance,
        derivative,
        derivative_fd,
    })
}

fn coherence_squared(params: &SystemParams) -> Result<f64> {
    let l2 = params.atom.lambda().norm_sqr();
    if l2 == 0.0 {
        return Err(Error::ZeroCoherence);
    }
    Ok(l2)
}

/// Fluctuation for the pure component `D(α0)|n − 1⟩`: `(2n − 1)/(16 N_c² τ² |λ|²)`.
pub fn component_fluctuation(n: usize, params: &SystemParams) -> Result<f64> {
    if !(1..=2).contains(&n) {
        return Err(Error::InvalidParams(format!("component index must be 1 or 2, got {n}")));
    }
    let l2 = coherence_squared(params)?;
    let n_c = params.n_c();
    Ok((2 * n - 1) as f64 / (16.0 * n_c * n_c * params.tau * params.tau * l2))
}

/// [`component_fluctuation`] evaluated on the Fock-space component state:
/// variance from the built state, derivative `∂|α0|²/∂g = 2|α0|²/g`.
pub fn component_fluctuation_numeric(n: usize, params: &SystemParams) -> Result<f64> {
    coherence_squared(params)?;
    if !(params.g > 0.0) {
        return Err(Error::ZeroSensitivity);
    }
    let dec = decompose(params)?;
    let trunc = FockTruncation::new(crate::fock::displacement_guidance(dec.alpha0) + 2 * n)?;
    let state = dec.component(n, trunc)?;
    let number = CavityOperator::number(trunc);
    let mean = state.expectation(&number)?.re;
    let second = state.expectation(&number.compose(&number)?)?.re;
    let derivative = 2.0 * dec.alpha0.norm_sqr() / params.g;
    Ok((second - mean * mean) / (derivative * derivative))
}

/// Fluctuation for a mixture with `g`-independent weight `y` on the
/// displaced one-photon component.
pub fn hypothetical_mixture_fluctuation(y: f64, params: &SystemParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::InvalidParams(format!("mixing weight must lie in [0, 1], got {y}")));
    }
    let l2 = coherence_squared(params)?;
    if !(params.g > 0.0) {
        return Err(Error::InvalidParams("g must be positive".into()));
    }
    let n_c = params.n_c();
    let t2 = params.tau * params.tau;
    let first = (2.0 * y + 1.0) / (16.0 * n_c * n_c * t2 * l2);
    let second = (y - y * y) / (64.0 * n_c.powi(4) * params.g * params.g * t2 * t2 * l2 * l2);
    Ok(first + second)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    pub strictness: f64,
    /// `N_c (gτ)²`
    pub expansion: f64,
    /// `1/(N_c τ g)`
    pub coupling: f64,
    /// `N_c τ κ`
    pub decay: f64,
    /// `r τ`, mean number of atoms inside the cavity.
    pub single_occupancy: f64,
    /// `κ/g`
    pub kappa_over_g: f64,
    pub expansion_ok: bool,
    pub coupling_ok: bool,
    pub decay_ok: bool,
    pub single_occupancy_ok: bool,
    pub strong_coupling: bool,
    pub experimental_n_c: f64,
    pub exceeds_experimental_n_c: bool,
}

impl RegimeReport {
    /// The three conditions of the weak-coupling analysis.
    pub fn all_ok(&self) -> bool {
        self.expansion_ok && self.coupling_ok && self.decay_ok
    }
}

pub fn regime_check(params: &SystemParams) -> RegimeReport {
    regime_check_with(params, DEFAULT_STRICTNESS)
}

pub fn regime_check_with(params: &SystemParams, strictness: f64) -> RegimeReport {
    let n_c = params.n_c();
    let expansion = params.expansion_parameter();
    let coupling = if params.g > 0.0 {
        1.0 / (n_c * params.tau * params.g)
    } else {
        f64::INFINITY
    };
    let decay = n_c * params.tau * params.kappa;
    let single_occupancy = params.r * params.tau;
    let kappa_over_g = if params.g > 0.0 {
        params.kappa / params.g
    } else {
        f64::INFINITY
    };
    RegimeReport {
        strictness,
        expansion,
        coupling,
        decay,
        single_occupancy,
        kappa_over_g,
        expansion_ok: expansion <= strictness,
        coupling_ok: coupling <= strictness,
        decay_ok: decay <= strictness,
        single_occupancy_ok: single_occupancy <= strictness,
        strong_coupling: kappa_over_g <= strictness,
        experimental_n_c: EXPERIMENTAL_NC,
        exceeds_experimental_n_c: n_c > EXPERIMENTAL_NC,
    }
}

/// Pure atom `cos(θ/2)|g⟩ + sin(θ/2)|e⟩`: `p_e = sin²(θ/2)`, `λ = sin(θ)/2`.
pub fn theta_to_atom(theta: f64) -> Result<AtomParams> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::InvalidAtomState(format!("theta must lie in [0, pi], got {theta}")));
    }
    // half-angle forms; cos(π/2) rounds to 6e-17, snap it so θ = π/2 gives p_e = 1/2 exactly
    let c = theta.cos();
    let c = if c.abs() < f64::EPSILON { 0.0 } else { c };
    AtomParams::from_populations((1.0 - c) / 2.0, (1.0 + c) / 2.0, Complex64::new(theta.sin() / 2.0, 0.0))
}

/// `n` points log-spaced between `lo` and `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || n == 0 {
        return Err(Error::InvalidParams(format!("bad log grid [{lo}, {hi}] with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect())
}

/// `d ln Δg²/d ln N_c` of the leading-order fluctuation.
pub fn local_slope(p_e: f64, lambda: f64, n_c: f64) -> f64 {
    let coh = 4.0 * n_c * lambda * lambda;
    -1.0 - coh / (p_e + coh)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanConfig {
    pub n_c_grid: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub tau: f64,
    pub p_e: f64,
    pub kappa: f64,
    pub g_tau: f64,
    pub fit_window: (f64, f64),
    pub exact: bool,
    pub strictness: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            n_c_grid: log_grid(1.0, 1e5, 51).expect("valid grid"),
            lambdas: vec![0.0, 0.3, 0.5],
            tau: 1e-7,
            p_e: 0.5,
            kappa: 1.0,
            g_tau: 0.01,
            fit_window: (1e3, 1e5),
            exact: true,
            strictness: DEFAULT_STRICTNESS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub n_c: f64,
    pub lambda: f64,
    pub delta_g2_approx: f64,
    pub delta_g2_exact: Option<f64>,
    pub regime_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub lambda: f64,
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of `log10 Δg²` about the fitted line.
    pub residual: f64,
    pub points: usize,
    pub window: (f64, f64),
}

/// Least-squares line through `(log10 x, log10 y)` for `x` inside `window`.
pub fn fit_slope(xs: &[f64], ys: &[f64], window: (f64, f64)) -> Result<(f64, f64, f64, usize)> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, _)| **x >= window.0 * (1.0 - 1e-12) && **x <= window.1 * (1.0 + 1e-12))
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return Err(Error::EmptyWindow { points: n });
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::EmptyWindow { points: 1 });
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok((slope, intercept, (rss / n as f64).sqrt(), n))
}

fn scan_row(cfg: &ScanConfig, n_c: f64, lambda: f64) -> Result<ScanRow> {
    let atom = AtomParams::new(cfg.p_e, Complex64::new(lambda, 0.0))?;
    let params = SystemParams::from_products(cfg.g_tau, n_c, cfg.kappa, cfg.tau, atom)?;
    let delta_g2_exact = if cfg.exact {
        Some(fluctuation(&params)?.delta_g2_exact)
    } else {
        None
    };
    Ok(ScanRow {
        n_c,
        lambda,
        delta_g2_approx: fluctuation_approx(&params)?,
        delta_g2_exact,
        regime_ok: regime_check_with(&params, cfg.strictness).all_ok(),
    })
}

/// Rows ordered by `lambda` then grid position.
pub fn scan(cfg: &ScanConfig) -> Result<Vec<ScanRow>> {
    let jobs: Vec<(f64, f64)> = cfg
        .lambdas
        .iter()
        .flat_map(|&l| cfg.n_c_grid.iter().map(move |&n| (l, n)))
        .collect();
    jobs.par_iter()
        .map(|&(lambda, n_c)| scan_row(cfg, n_c, lambda))
        .collect()
}

/// One slope fit per `lambda` on the leading-order column of [`scan`] rows.
pub fn fit_scan(cfg: &ScanConfig, rows: &[ScanRow]) -> Result<Vec<SlopeFit>> {
    let mut fits = Vec::with_capacity(cfg.lambdas.len());
    for &lambda in &cfg.lambdas {
        let block: Vec<&ScanRow> = rows.iter().filter(|r| r.lambda == lambda).collect();
        let xs: Vec<f64> = block.iter().map(|r| r.n_c).collect();
        let ys: Vec<f64> = block.iter().map(|r| r.delta_g2_approx).collect();
        let (slope, intercept, residual, points) = fit_slope(&xs, &ys, cfg.fit_window)?;
        fits.push(SlopeFit {
            lambda,
            slope,
            intercept,
            residual,
            points,
            window: cfg.fit_window,
        });
    }
    Ok(fits)
}

pub fn scan_and_fit(cfg: &ScanConfig) -> Result<(Vec<ScanRow>, Vec<SlopeFit>)> {
    let rows = scan(cfg)?;
    let fits = fit_scan(cfg, &rows)?;
    Ok((rows, fits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn params(n_c: f64, g_tau: f64, lambda: f64) -> SystemParams {
        let atom = AtomParams::new(0.5, Complex64::new(lambda, 0.0)).unwrap();
        SystemParams::from_products(g_tau, n_c, 1.0, 1e-7, atom).unwrap()
    }

    #[test]
    fn approx_values() {
        assert_relative_eq!(fluctuation_approx(&params(10.0, 0.01, 0.5)).unwrap(), 1.0 / 4.2e-12, max_relative = 1e-12);
        assert_relative_eq!(fluctuation_approx(&params(10.0, 0.01, 0.0)).unwrap(), 5.0e12, max_relative = 1e-12);
        for (n_c, l) in [(3.0, 0.2), (1e4, 0.5), (0.5, 0.0)] {
            let p = params(n_c, 0.01, l);
            let v = fluctuation_approx(&p).unwrap();
            assert_relative_eq!(v * 4.0 * 1e-14 * n_c * (0.5 + 4.0 * n_c * l * l), 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn enhancement_ratios() {
        let base = fluctuation_approx(&params(10.0, 0.01, 0.0)).unwrap();
        let r3 = base / fluctuation_approx(&params(10.0, 0.01, 0.3)).unwrap();
        let r5 = base / fluctuation_approx(&params(10.0, 0.01, 0.5)).unwrap();
        assert_relative_eq!(r3, 8.2, max_relative = 1e-12);
        assert_relative_eq!(r5, 21.0, max_relative = 1e-12);
    }

    #[test]
    fn derivatives_agree() {
        for (n_c, g_tau, l) in [(10.0, 0.01, 0.5), (10.0, 0.03, 0.0), (3.0, 0.05, 0.3)] {
            let r = fluctuation(&params(n_c, g_tau, l)).unwrap();
            assert_relative_eq!(r.derivative, r.derivative_fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn exact_approaches_approx() {
        let gap = |g_tau: f64| {
            let r = fluctuation(&params(10.0, g_tau, 0.5)).unwrap();
            (r.delta_g2_exact - r.delta_g2_approx).abs() / r.delta_g2_approx
        };
        for g_tau in [0.04, 0.02, 0.01] {
            assert!(gap(g_tau) / gap(g_tau / 2.0) >= 3.0);
            assert!(gap(g_tau) <= 5.0 * 10.0 * g_tau * g_tau);
        }
    }

    #[test]
    fn zero_sensitivity() {
        let atom = AtomParams::ground();
        let p = SystemParams::from_products(0.01, 10.0, 1.0, 1e-7, atom).unwrap();
        assert!(matches!(fluctuation(&p), Err(Error::ZeroSensitivity)));
        let p = params(10.0, 0.0, 0.5);
        assert!(matches!(fluctuation(&p), Err(Error::ZeroSensitivity)));
    }

    #[test]
    fn components() {
        let p = params(10.0, 0.01, 0.5);
        assert_relative_eq!(component_fluctuation(1, &p).unwrap(), 2.5e11, max_relative = 1e-12);
        assert_relative_eq!(component_fluctuation(2, &p).unwrap(), 7.5e11, max_relative = 1e-12);
        for n in [1, 2] {
            assert_relative_eq!(
                component_fluctuation_numeric(n, &p).unwrap(),
                component_fluctuation(n, &p).unwrap(),
                max_relative = 1e-6
            );
        }
        assert!(matches!(component_fluctuation(1, &params(10.0, 0.01, 0.0)), Err(Error::ZeroCoherence)));
    }

    #[test]
    fn mixture_endpoints() {
        let p = params(10.0, 0.01, 0.5);
        assert_eq!(hypothetical_mixture_fluctuation(0.0, &p).unwrap(), component_fluctuation(1, &p).unwrap());
        assert_eq!(hypothetical_mixture_fluctuation(1.0, &p).unwrap(), component_fluctuation(2, &p).unwrap());
        // 5e11 + 0.25/(64·1e4·1e10·1e-28·0.0625)
        assert_relative_eq!(hypothetical_mixture_fluctuation(0.5, &p).unwrap(), 6.75e12, max_relative = 1e-12);
    }

    #[test]
    fn component_tends_to_full_fluctuation() {
        let ratio = |n_c: f64| {
            let p = params(n_c, 0.01, 0.5);
            component_fluctuation(1, &p).unwrap() / fluctuation_approx(&p).unwrap()
        };
        assert!((ratio(1e4) - 1.0).abs() < (ratio(10.0) - 1.0).abs());
        assert!((ratio(1e6) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn regime_margins() {
        let p = params(10.0, 0.01, 0.5);
        let rep = regime_check(&p);
        assert_relative_eq!(rep.expansion, 1e-3, max_relative = 1e-12);
        assert!(rep.expansion_ok);
        assert!(rep.exceeds_experimental_n_c);
        let rep = regime_check(&params(10.0, 0.0, 0.5));
        assert!(rep.coupling.is_infinite());
        assert!(!rep.coupling_ok);
    }

    #[test]
    fn theta_parametrization() {
        let a = theta_to_atom(0.0).unwrap();
        assert_eq!((a.p_e(), a.lambda().norm()), (0.0, 0.0));
        let a = theta_to_atom(PI / 2.0).unwrap();
        assert_eq!(a, AtomParams::new(0.5, Complex64::new(0.5, 0.0)).unwrap());
        let a = theta_to_atom(PI).unwrap();
        assert_relative_eq!(a.p_e(), 1.0, max_relative = 1e-15);
        assert!(a.lambda().norm() < 1e-15);
        for theta in [0.1, 1.0, 2.0, 3.0] {
            let a = theta_to_atom(theta).unwrap();
            assert_relative_eq!(a.lambda().norm_sqr(), a.p_e() * a.p_g(), max_relative = 1e-12);
        }
        assert!(theta_to_atom(-0.1).is_err());
    }

    #[test]
    fn slopes() {
        let cfg = ScanConfig::default();
        let (rows, fits) = scan_and_fit(&cfg).unwrap();
        assert_eq!(rows.len(), 3 * cfg.n_c_grid.len());
        assert!((fits[0].slope + 1.0).abs() < 1e-12);
        assert!((fits[1].slope + 2.0).abs() < 0.01);
        assert!((fits[2].slope + 2.0).abs() < 0.01);
        let narrow = ScanConfig {
            lambdas: vec![0.3],
            fit_window: (1.0, 10.0),
            ..ScanConfig::default()
        };
        let (_, fits) = scan_and_fit(&narrow).unwrap();
        assert!(fits[0].slope > -2.0 && fits[0].slope < -1.0);
    }

    #[test]
    fn local_slope_monotone() {
        let grid = log_grid(0.1, 1e6, 200).unwrap();
        let s: Vec<f64> = grid.iter().map(|&n| local_slope(0.5, 0.3, n)).collect();
        assert!(s.windows(2).all(|w| w[1] < w[0]));
        assert!(s[0] > -1.5 && *s.last().unwrap() < -1.999);
    }

    #[test]
    fn empty_window() {
        let cfg = ScanConfig {
            n_c_grid: vec![10.0],
            lambdas: vec![0.5],
            ..ScanConfig::default()
        };
        assert!(matches!(scan_and_fit(&cfg), Err(Error::EmptyWindow { points: 0 })));
        assert!(matches!(
            fit_slope(&[10.0], &[1.0], (1.0, 100.0)),
            Err(Error::EmptyWindow { points: 1 })
        ));
    }
}
