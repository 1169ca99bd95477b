//! Stochastic injection: atoms arrive as a Poisson process of rate `r`, each
//! applying an instantaneous kick, with pure cavity decay in between. Each
//! trajectory carries a full density matrix; only the arrival times are random.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::Serialize;

use crate::atom::InteractionMap;
use crate::error::{Error, Result};
use crate::fock::{hermitize, CMatrix, CavityState, FockTruncation};
use crate::lindblad::{DecayChannel, SystemParams};

/// Recorded in outputs so runs can be reproduced: trajectory `i` draws from
/// stream `i` of a ChaCha8 generator seeded with the 64-bit seed.
pub const RNG_STREAM_ID: &str = "chacha8/seed_from_u64/stream=trajectory_index";

/// `rτ` above which single occupancy becomes questionable.
pub const OCCUPANCY_WARNING: f64 = 0.1;

/// Trajectories evaluated per parallel batch.
const CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    pub params: SystemParams,
    pub t_final: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    /// Ascending times in `[0, t_final]`.
    pub sample_times: Vec<f64>,
    pub initial: CavityState,
}

impl TrajectoryConfig {
    /// Starts every trajectory in the vacuum of `trunc`.
    pub fn new(
        params: SystemParams,
        t_final: f64,
        n_trajectories: usize,
        seed: u64,
        sample_times: Vec<f64>,
        trunc: FockTruncation,
    ) -> Self {
        Self {
            params,
            t_final,
            n_trajectories,
            seed,
            sample_times,
            initial: CavityState::vacuum(trunc),
        }
    }

    pub fn with_initial(mut self, initial: CavityState) -> Self {
        self.initial = initial;
        self
    }

    pub fn truncation(&self) -> FockTruncation {
        self.initial.truncation()
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidParams(format!("t_final must be finite and non-negative, got {}", self.t_final)));
        }
        let mut prev = 0.0;
        for &t in &self.sample_times {
            if !(t >= prev) || t > self.t_final {
                return Err(Error::InvalidParams(
                    "sample times must be ascending and within [0, t_final]".into(),
                ));
            }
            prev = t;
        }
        Ok(())
    }
}

/// Observables of one trajectory at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observation {
    pub a: Complex64,
    pub n: f64,
    pub n2: f64,
}

impl Observation {
    fn of(state: &CMatrix, trunc: FockTruncation) -> Self {
        let s = CavityState::from_matrix_unchecked(state.clone(), trunc);
        Self {
            a: s.mean_amplitude(),
            n: s.mean_photon_number(),
            n2: s.photon_number_second_moment(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub observations: Vec<Observation>,
    pub final_state: CavityState,
    pub arrivals: usize,
}

struct Propagator {
    kick: InteractionMap,
    decay: DecayChannel,
    kappa: f64,
}

impl Propagator {
    fn new(cfg: &TrajectoryConfig) -> Self {
        let trunc = cfg.truncation();
        Self {
            kick: InteractionMap::new(trunc, &cfg.params.atom, cfg.params.g_tau()),
            decay: DecayChannel::new(trunc),
            kappa: cfg.params.kappa,
        }
    }
}

fn run(cfg: &TrajectoryConfig, prop: &Propagator, index: u64) -> Result<TrajectoryRecord> {
    let trunc = cfg.truncation();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let gaps = if cfg.params.r > 0.0 {
        Some(Exp::new(cfg.params.r).map_err(|e| Error::InvalidParams(e.to_string()))?)
    } else {
        None
    };
    let draw = |rng: &mut ChaCha8Rng| gaps.as_ref().map_or(f64::INFINITY, |e| rng.sample(e));

    let mut rho = cfg.initial.matrix().clone();
    let mut t = 0.0;
    let mut next = draw(&mut rng);
    let mut arrivals = 0;
    let mut observations = Vec::with_capacity(cfg.sample_times.len());

    let mut advance = |rho: &mut CMatrix, t: &mut f64, target: f64, rng: &mut ChaCha8Rng| -> Result<()> {
        while next <= target {
            *rho = prop.decay.apply(rho, prop.kappa * (next - *t));
            let kicked = prop
                .kick
                .apply_state(&CavityState::from_matrix_unchecked(rho.clone(), trunc))?;
            *rho = kicked.into_matrix();
            *t = next;
            arrivals += 1;
            next += draw(rng);
        }
        if target > *t {
            *rho = prop.decay.apply(rho, prop.kappa * (target - *t));
            *t = target;
        }
        Ok(())
    };

    for &ts in &cfg.sample_times {
        advance(&mut rho, &mut t, ts, &mut rng)?;
        observations.push(Observation::of(&rho, trunc));
    }
    advance(&mut rho, &mut t, cfg.t_final, &mut rng)?;
    let final_state = CavityState::from_matrix_unchecked(hermitize(&rho), trunc);
    if final_state.leakage() > crate::lindblad::EVOLUTION_LEAKAGE_TOLERANCE {
        return Err(Error::TruncationTooSmall {
            needed: trunc.n_max() + 1,
            have: trunc.n_max(),
        });
    }
    Ok(TrajectoryRecord {
        observations,
        final_state,
        arrivals,
    })
}

/// One trajectory; `(seed, trajectory_index)` fixes the arrival sequence.
pub fn simulate_trajectory(cfg: &TrajectoryConfig, trajectory_index: u64) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    run(cfg, &Propagator::new(cfg), trajectory_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleSample {
    pub t: f64,
    pub a: Complex64,
    pub a_stderr: Complex64,
    pub n: f64,
    pub n_stderr: f64,
    pub n2: f64,
    pub n2_stderr: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub samples: Vec<EnsembleSample>,
    pub final_state: CavityState,
    pub n_trajectories: usize,
    pub seed: u64,
    pub mean_arrivals: f64,
}

/// Pairwise summation; the order is fixed by the slice order.
fn pairwise_sum<T: Copy + std::ops::Add<Output = T>>(xs: &[T], zero: T) -> T {
    match xs.len() {
        0 => zero,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2], zero) + pairwise_sum(&xs[n / 2..], zero),
    }
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs, 0.0) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = pairwise_sum(&dev, 0.0) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample means and standard errors over `n_trajectories` independent runs.
/// Bit-identical for fixed inputs regardless of thread count.
pub fn ensemble_average(cfg: &TrajectoryConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    if cfg.n_trajectories < 2 {
        return Err(Error::InvalidParams("need at least 2 trajectories".into()));
    }
    let rtau = cfg.params.r * cfg.params.tau;
    if rtau > OCCUPANCY_WARNING {
        log::warn!("r tau = {rtau:.3}: more than one atom may occupy the cavity");
    }
    let prop = Propagator::new(cfg);
    let trunc = cfg.truncation();
    let d = trunc.dim();
    let n_samples = cfg.sample_times.len();

    let mut obs: Vec<Vec<Observation>> = vec![Vec::with_capacity(cfg.n_trajectories); n_samples];
    let mut chunk_states = Vec::new();
    let mut arrivals = Vec::with_capacity(cfg.n_trajectories);
    for start in (0..cfg.n_trajectories).step_by(CHUNK) {
        let end = (start + CHUNK).min(cfg.n_trajectories);
        let records = (start..end)
            .into_par_iter()
            .map(|i| run(cfg, &prop, i as u64))
            .collect::<Result<Vec<_>>>()?;
        let finals: Vec<CMatrix> = records.iter().map(|r| r.final_state.matrix().clone()).collect();
        chunk_states.push(pairwise_matrix_sum(&finals, d));
        for r in records {
            arrivals.push(r.arrivals as f64);
            for (k, o) in r.observations.into_iter().enumerate() {
                obs[k].push(o);
            }
        }
    }

    let samples = cfg
        .sample_times
        .iter()
        .zip(&obs)
        .map(|(&t, col)| {
            let column = |f: fn(&Observation) -> f64| col.iter().map(f).collect::<Vec<_>>();
            let (re, re_se) = mean_and_stderr(&column(|o| o.a.re));
            let (im, im_se) = mean_and_stderr(&column(|o| o.a.im));
            let (n, n_stderr) = mean_and_stderr(&column(|o| o.n));
            let (n2, n2_stderr) = mean_and_stderr(&column(|o| o.n2));
            EnsembleSample {
                t,
                a: Complex64::new(re, im),
                a_stderr: Complex64::new(re_se, im_se),
                n,
                n_stderr,
                n2,
                n2_stderr,
            }
        })
        .collect();

    let total = pairwise_matrix_sum(&chunk_states, d) / Complex64::new(cfg.n_trajectories as f64, 0.0);
    Ok(EnsembleResult {
        samples,
        final_state: CavityState::from_matrix_unchecked(hermitize(&total), trunc),
        n_trajectories: cfg.n_trajectories,
        seed: cfg.seed,
        mean_arrivals: pairwise_sum(&arrivals, 0.0) / cfg.n_trajectories as f64,
    })
}

fn pairwise_matrix_sum(ms: &[CMatrix], d: usize) -> CMatrix {
    match ms.len() {
        0 => CMatrix::zeros(d, d),
        1 => ms[0].clone(),
        n => pairwise_matrix_sum(&ms[..n / 2], d) + pairwise_matrix_sum(&ms[n / 2..], d),
    }
}
