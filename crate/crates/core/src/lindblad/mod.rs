//! Master equations for the cavity: the coarse-grained generator built on the
//! exact single-atom kick, its second-order effective form, and pure decay.
//! Time evolution and steady-state solvers live here too.

mod generator;
mod params;

pub use generator::{apply_decay_dissipator, apply_generator, DecayChannel, Generator, GeneratorKind};
pub use params::{ResolvedParams, SystemParams};

use faer::linalg::solvers::Solve;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{hermitize, trace, trace_norm, CMatrix, CavityState, FockTruncation};
use crate::ode::{integrate, OdeOptions, OdeStats};

/// Leakage tolerated on the top Fock level after evolution.
pub const EVOLUTION_LEAKAGE_TOLERANCE: f64 = 1e-8;

/// Largest `n_max` the automatic truncation search will try.
pub const MAX_AUTO_N_MAX: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SteadyMethod {
    /// Integrate from the vacuum until the state stops changing.
    LongTime,
    /// Kernel of the vectorized generator.
    NullSpace,
}

impl SteadyMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SteadyMethod::LongTime => "long_time",
            SteadyMethod::NullSpace => "null_space",
        }
    }
}

fn flatten(rho: &CMatrix) -> Vec<Complex64> {
    rho.as_slice().to_vec()
}

fn unflatten(y: &[Complex64], d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, y)
}

/// Integrates `generator` from `rho0` for `duration`.
pub fn evolve_with(
    rho0: &CavityState,
    generator: &Generator,
    duration: f64,
    opts: &OdeOptions,
) -> Result<(CavityState, OdeStats)> {
    let trunc = generator.truncation();
    if rho0.truncation() != trunc {
        return Err(Error::DimensionMismatch {
            left: rho0.truncation().dim(),
            right: trunc.dim(),
        });
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidParams(format!(
            "evolution time must be finite and non-negative, got {duration}"
        )));
    }
    let d = trunc.dim();
    let mut y = flatten(rho0.matrix());
    let stats = integrate(
        |_, y, dy| {
            let image = generator.apply(&unflatten(y, d));
            dy.copy_from_slice(image.as_slice());
        },
        0.0,
        duration,
        &mut y,
        opts,
    )?;
    let rho = hermitize(&unflatten(&y, d));
    let drift = (trace(&rho) - trace(rho0.matrix())).norm();
    let state = CavityState::from_matrix_unchecked(rho, trunc);
    // the truncated kick drops weight pushed past the top level
    let boundary_loss = generator.kind() == GeneratorKind::FullCoarseGrained && drift > 1e-9;
    if boundary_loss || state.leakage() > EVOLUTION_LEAKAGE_TOLERANCE {
        return Err(Error::TruncationTooSmall {
            needed: trunc.n_max() + 1,
            have: trunc.n_max(),
        });
    }
    if drift > 1e-9 {
        return Err(Error::NoConvergence(format!("trace drifted by {drift:.3e}")));
    }
    Ok((state, stats))
}

/// `ρ(t_final)` under the chosen master equation.
pub fn evolve(
    rho0: &CavityState,
    params: &SystemParams,
    kind: GeneratorKind,
    t_final: f64,
    reltol: f64,
) -> Result<CavityState> {
    let opts = OdeOptions::with_reltol(reltol)?;
    let generator = Generator::new(params, kind, rho0.truncation());
    evolve_with(rho0, &generator, t_final, &opts).map(|(s, _)| s)
}

/// States at each of the ascending `times` (starting from `rho0` at `t = 0`).
pub fn evolve_sampled(
    rho0: &CavityState,
    params: &SystemParams,
    kind: GeneratorKind,
    times: &[f64],
    reltol: f64,
) -> Result<Vec<CavityState>> {
    let opts = OdeOptions::with_reltol(reltol)?;
    let generator = Generator::new(params, kind, rho0.truncation());
    let mut out = Vec::with_capacity(times.len());
    let mut current = rho0.clone();
    let mut t = 0.0;
    for &target in times {
        if target < t {
            return Err(Error::InvalidParams("sample times must be ascending and non-negative".into()));
        }
        current = evolve_with(&current, &generator, target - t, &opts)?.0;
        t = target;
        out.push(current.clone());
    }
    Ok(out)
}

/// Rate used to pace the long-time search and the relaxation clock.
fn relaxation_rate(params: &SystemParams, kind: GeneratorKind) -> Result<f64> {
    match kind {
        GeneratorKind::EffectiveSecondOrder => {
            params.check_stable()?;
            Ok(params.relaxation_gap())
        }
        GeneratorKind::FullCoarseGrained => {
            let gap = params.relaxation_gap();
            Ok(if gap > 0.0 { gap } else { params.kappa })
        }
        GeneratorKind::DecayOnly => Ok(params.kappa),
    }
}

/// Steady state with an automatically selected truncation.
pub fn steady_state(
    params: &SystemParams,
    kind: GeneratorKind,
    method: SteadyMethod,
) -> Result<CavityState> {
    let trunc = auto_truncation(params, kind)?;
    steady_state_in(params, kind, method, trunc)
}

/// Steady state on a fixed truncation.
pub fn steady_state_in(
    params: &SystemParams,
    kind: GeneratorKind,
    method: SteadyMethod,
    trunc: FockTruncation,
) -> Result<CavityState> {
    let rate = relaxation_rate(params, kind)?;
    let generator = Generator::new(params, kind, trunc);
    let state = match method {
        SteadyMethod::NullSpace => {
            let kernel = null_space_eigen(&generator)?;
            normalize_kernel(kernel, trunc)?
        }
        SteadyMethod::LongTime => long_time(&generator, rate)?,
    };
    if state.leakage() > EVOLUTION_LEAKAGE_TOLERANCE {
        return Err(Error::TruncationTooSmall {
            needed: trunc.n_max() + 1,
            have: trunc.n_max(),
        });
    }
    Ok(state)
}

/// Long-time convergence threshold on the trace-norm change per relaxation time.
const LONG_TIME_THRESHOLD: f64 = 1e-11;
const LONG_TIME_MAX_CHUNKS: usize = 20_000;

fn long_time(generator: &Generator, rate: f64) -> Result<CavityState> {
    let chunk = 1.0 / rate;
    let opts = OdeOptions {
        reltol: 1e-11,
        abstol: 1e-15,
        ..Default::default()
    };
    let mut current = CavityState::vacuum(generator.truncation());
    for _ in 0..LONG_TIME_MAX_CHUNKS {
        let (next, _) = evolve_with(&current, generator, chunk, &opts)?;
        let change = trace_norm(&(next.matrix() - current.matrix()));
        current = next;
        if change < LONG_TIME_THRESHOLD {
            return Ok(current);
        }
    }
    Err(Error::NoConvergence(format!(
        "state still changing after {LONG_TIME_MAX_CHUNKS} relaxation times"
    )))
}

fn to_faer(m: &CMatrix) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Zero eigenvalues are those within this fraction of the spectral radius.
const NULL_SPACE_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Kernel vector of the vectorized generator from its eigendecomposition.
fn null_space_eigen(generator: &Generator) -> Result<Vec<Complex64>> {
    let s = to_faer(&generator.superoperator());
    let eig = s
        .eigen()
        .map_err(|e| Error::NoConvergence(format!("eigendecomposition failed: {e:?}")))?;
    let values = eig.S();
    let n = s.nrows();
    let radius = (0..n).map(|i| values[i].norm()).fold(0.0, f64::max).max(1.0);
    let tol = NULL_SPACE_RELATIVE_TOLERANCE * radius;
    let zeros: Vec<usize> = (0..n).filter(|&i| values[i].norm() <= tol).collect();
    if zeros.len() != 1 {
        return Err(Error::DegenerateNullSpace { count: zeros.len() });
    }
    let u = eig.U();
    Ok((0..n).map(|i| u[(i, zeros[0])]).collect())
}

/// Kernel vector from a dense LU solve with one population equation replaced
/// by the trace condition. Cheaper than [`null_space_eigen`]; used for
/// truncation scans.
fn null_space_lu(generator: &Generator) -> Vec<Complex64> {
    let d = generator.truncation().dim();
    let mut s = to_faer(&generator.superoperator());
    // Σ_i ⟨i|Lρ|i⟩ = 0, so the (0,0) equation is redundant
    for col in 0..d * d {
        s[(0, col)] = Complex64::new(0.0, 0.0);
    }
    for i in 0..d {
        s[(0, i + i * d)] = Complex64::new(1.0, 0.0);
    }
    let mut rhs = faer::Mat::<Complex64>::zeros(d * d, 1);
    rhs[(0, 0)] = Complex64::new(1.0, 0.0);
    let x = s.partial_piv_lu().solve(&rhs);
    (0..d * d).map(|i| x[(i, 0)]).collect()
}

fn normalize_kernel(v: Vec<Complex64>, trunc: FockTruncation) -> Result<CavityState> {
    let d = trunc.dim();
    let m = unflatten(&v, d);
    let tr = trace(&m);
    if tr.norm() < 1e-300 {
        return Err(Error::NoConvergence("kernel vector is traceless".into()));
    }
    let rho = hermitize(&(m / tr));
    Ok(CavityState::from_matrix_unchecked(rho, trunc))
}

/// Initial `n_max` for the truncation search: `|α0|² + 10√(|α0|²+1) + 10`.
pub fn initial_truncation(params: &SystemParams, kind: GeneratorKind) -> FockTruncation {
    let amp2 = match kind {
        GeneratorKind::DecayOnly => 0.0,
        _ if params.relaxation_gap() > 0.0 => params.effective_amplitude().norm_sqr(),
        _ => 0.0,
    };
    let n = (amp2 + 10.0 * (amp2 + 1.0).sqrt() + 10.0).ceil() as usize;
    FockTruncation::new(n.max(1)).expect("n_max >= 1")
}

/// Doubles the truncation until the steady `⟨a†a⟩` changes by less than
/// `1e-8` relative, returning the smaller of the last two truncations.
pub fn auto_truncation(params: &SystemParams, kind: GeneratorKind) -> Result<FockTruncation> {
    relaxation_rate(params, kind)?;
    let mut trunc = initial_truncation(params, kind);
    if kind == GeneratorKind::DecayOnly {
        return Ok(trunc);
    }
    let photons = |t: FockTruncation| -> Result<f64> {
        let v = null_space_lu(&Generator::new(params, kind, t));
        Ok(normalize_kernel(v, t)?.mean_photon_number())
    };
    let mut current = photons(trunc)?;
    loop {
        let doubled = FockTruncation::new(trunc.n_max() * 2)?;
        if doubled.n_max() > MAX_AUTO_N_MAX {
            return Err(Error::TruncationTooSmall {
                needed: doubled.n_max(),
                have: MAX_AUTO_N_MAX,
            });
        }
        let next = photons(doubled)?;
        if (next - current).abs() <= 1e-8 * next.abs() {
            return Ok(trunc);
        }
        trunc = doubled;
        current = next;
    }
}

/// Frobenius norm of the generator applied to `rho`.
pub fn generator_residual(rho: &CavityState, params: &SystemParams, kind: GeneratorKind) -> f64 {
    Generator::new(params, kind, rho.truncation())
        .apply(rho.matrix())
        .norm()
}
