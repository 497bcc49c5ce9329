//! Modified Cuckoo Search: a box-constrained, gradient-free maximizer.
//!
//! Each generation `G`:
//!
//! 1. nests are sorted by fitness, best first;
//! 2. the bottom `frac_abandon` share is replaced unconditionally by Lévy
//!    flights of size `A/√G` from their current positions;
//! 3. each of the top `frac_top` nests picks a random partner among the top
//!    nests. Drawing itself yields a Lévy flight of size `A/G²`; otherwise a
//!    new egg is placed `|x_i − x_j|/φ` from the worse parent toward the
//!    better one (the midpoint when fitnesses tie). The egg replaces a
//!    uniformly chosen nest only if it is strictly fitter.
//!
//! Candidates of one phase are generated first, evaluated (in parallel), then
//! applied in a fixed order, so results depend only on the seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::Scalar;

/// `φ = (1 + √5) / 2`.
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

#[derive(Debug, Error, PartialEq)]
pub enum McsError {
    #[error("evaluation budget {budget} is smaller than the {nests} initial nests")]
    BudgetTooSmall { budget: usize, nests: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective has dimension {objective}, bounds have {bounds}")]
    DimensionMismatch { objective: usize, bounds: usize },
}

/// Function to maximize. Must be deterministic in its argument.
pub trait Objective<T>: Sync {
    fn dimension(&self) -> usize;
    fn evaluate(&self, x: &[T]) -> T;
}

/// Adapts a closure into an [`Objective`].
pub struct FnObjective<F> {
    pub dimension: usize,
    pub f: F,
}

impl<T, F: Fn(&[T]) -> T + Sync> Objective<T> for FnObjective<F> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn evaluate(&self, x: &[T]) -> T {
        (self.f)(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nest<T> {
    pub position: Vec<T>,
    pub fitness: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McsConfig {
    pub n_nests: usize,
    pub frac_abandon: f64,
    pub frac_top: f64,
    /// `A`, in units of the per-dimension box width.
    pub max_levy_step: f64,
    pub max_evaluations: usize,
    /// Per-dimension `[lo, hi]`.
    pub bounds: Vec<(f64, f64)>,
    pub levy_exponent: f64,
    pub seed: u64,
}

impl McsConfig {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            n_nests: 25,
            frac_abandon: 0.75,
            frac_top: 0.25,
            max_levy_step: 1.0,
            max_evaluations: 2000,
            bounds,
            levy_exponent: 1.5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), McsError> {
        let bad = |m: &str| Err(McsError::InvalidConfig(m.to_string()));
        if self.n_nests < 4 {
            return bad("n_nests must be at least 4");
        }
        if !(self.frac_abandon > 0.0 && self.frac_abandon < 1.0) {
            return bad("frac_abandon must lie in (0, 1)");
        }
        if !(self.frac_top > 0.0 && self.frac_top < 1.0) {
            return bad("frac_top must lie in (0, 1)");
        }
        if !(self.max_levy_step > 0.0 && self.max_levy_step.is_finite()) {
            return bad("max_levy_step must be positive");
        }
        if !(self.levy_exponent > 0.0 && self.levy_exponent <= 2.0) {
            return bad("levy_exponent must lie in (0, 2]");
        }
        if self.bounds.is_empty() {
            return bad("bounds are empty");
        }
        if self.bounds.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return bad("every bound must satisfy lo < hi");
        }
        if self.max_evaluations < self.n_nests {
            return Err(McsError::BudgetTooSmall {
                budget: self.max_evaluations,
                nests: self.n_nests,
            });
        }
        Ok(())
    }

    pub fn abandon_count(&self) -> usize {
        (self.frac_abandon * self.n_nests as f64).floor() as usize
    }

    pub fn top_count(&self) -> usize {
        ((self.frac_top * self.n_nests as f64).floor() as usize).max(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepContext {
    Abandon,
    TopDuplicate,
}

/// Lévy step size for generation `G ≥ 1`: `A/√G` for abandoned nests,
/// `A/G²` when a top nest draws itself as partner.
pub fn step_schedule(generation: usize, max_step: f64, context: StepContext) -> f64 {
    let g = generation.max(1) as f64;
    match context {
        StepContext::Abandon => max_step / g.sqrt(),
        StepContext::TopDuplicate => max_step / (g * g),
    }
}

/// Mantegna's scale `σ_u` for the stable-ratio generator.
pub fn mantegna_sigma(beta: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let num = gamma(1.0 + beta) * (std::f64::consts::PI * beta / 2.0).sin();
    let den = gamma((1.0 + beta) / 2.0) * beta * 2f64.powf((beta - 1.0) / 2.0);
    (num / den).powf(1.0 / beta)
}

/// Heavy-tailed step of `p` components, each `step_size · u / |v|^(1/β)`
/// with `u ~ N(0, σ_u²)` and `v ~ N(0, 1)`.
pub fn levy_step<R: Rng + ?Sized>(p: usize, step_size: f64, beta: f64, rng: &mut R) -> Vec<f64> {
    let sigma = mantegna_sigma(beta);
    (0..p)
        .map(|_| {
            let u: f64 = StandardNormal.sample(rng);
            let v: f64 = StandardNormal.sample(rng);
            step_size * u * sigma / v.abs().powf(1.0 / beta)
        })
        .collect()
}

/// New egg on the segment between two parents: the worse one moves
/// `|x_i − x_j|/φ` toward the better; equal fitness gives the midpoint.
pub fn crossover_position<T: Scalar>(xi: &[T], fi: T, xj: &[T], fj: T) -> Vec<T> {
    if fi == fj {
        return xi.iter().zip(xj).map(|(&a, &b)| (a + b) / T::lit(2.0)).collect();
    }
    let (worse, better) = if fi < fj { (xi, xj) } else { (xj, xi) };
    let phi = T::lit(GOLDEN_RATIO);
    worse
        .iter()
        .zip(better)
        .map(|(&w, &b)| {
            let dx = (w - b).abs() / phi;
            if b >= w {
                w + dx
            } else {
                w - dx
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow<T> {
    pub generation: usize,
    pub evaluations: usize,
    pub best_fitness: T,
    pub best_position: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McsResult<T> {
    pub best: Nest<T>,
    pub evaluations: usize,
    pub generations: usize,
    pub trace: Vec<TraceRow<T>>,
}

struct Search<'a, T, O: ?Sized> {
    obj: &'a O,
    cfg: &'a McsConfig,
    rng: ChaCha8Rng,
    nests: Vec<Nest<T>>,
    best: Nest<T>,
    evaluations: usize,
}

impl<T: Scalar, O: Objective<T> + ?Sized> Search<'_, T, O> {
    fn clamp(&self, x: &mut [T]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.cfg.bounds) {
            *v = v.max(T::lit(lo)).min(T::lit(hi));
        }
    }

    fn levy_from(&mut self, x: &[T], step: f64) -> Vec<T> {
        let s = levy_step(x.len(), step, self.cfg.levy_exponent, &mut self.rng);
        let mut out: Vec<T> = x
            .iter()
            .zip(&s)
            .zip(&self.cfg.bounds)
            .map(|((&xv, &sv), &(lo, hi))| xv + T::lit(sv * (hi - lo)))
            .collect();
        self.clamp(&mut out);
        out
    }

    fn evaluate_all(&mut self, candidates: Vec<Vec<T>>) -> Vec<Nest<T>> {
        let obj = self.obj;
        let fitness: Vec<T> = candidates.par_iter().map(|x| obj.evaluate(x)).collect();
        self.evaluations += candidates.len();
        let out: Vec<Nest<T>> = candidates
            .into_iter()
            .zip(fitness)
            .map(|(position, fitness)| Nest { position, fitness })
            .collect();
        for n in &out {
            // Strict improvement only: first-encountered wins ties.
            if n.fitness > self.best.fitness {
                self.best = n.clone();
            }
        }
        out
    }

    fn remaining(&self) -> usize {
        self.cfg.max_evaluations - self.evaluations
    }

    fn sort(&mut self) {
        self.nests
            .sort_by(|a, b| b.fitness.partial_cmp(&a.fitness).unwrap_or(std::cmp::Ordering::Equal));
    }

    fn abandon_phase(&mut self, generation: usize) {
        let n = self.nests.len();
        let count = self.cfg.abandon_count().min(self.remaining());
        let step = step_schedule(generation, self.cfg.max_levy_step, StepContext::Abandon);
        let slots: Vec<usize> = (n - self.cfg.abandon_count()..n).take(count).collect();
        let candidates: Vec<Vec<T>> = slots
            .iter()
            .map(|&i| {
                let x = self.nests[i].position.clone();
                self.levy_from(&x, step)
            })
            .collect();
        let eggs = self.evaluate_all(candidates);
        for (i, egg) in slots.into_iter().zip(eggs) {
            self.nests[i] = egg;
        }
    }

    fn top_phase(&mut self, generation: usize) {
        let n = self.nests.len();
        let top = self.cfg.top_count().min(n);
        let count = top.min(self.remaining());
        let step = step_schedule(generation, self.cfg.max_levy_step, StepContext::TopDuplicate);
        let mut targets = Vec::with_capacity(count);
        let mut candidates = Vec::with_capacity(count);
        for i in 0..count {
            let j = self.rng.random_range(0..top);
            let egg = if i == j {
                let x = self.nests[i].position.clone();
                self.levy_from(&x, step)
            } else {
                let (a, b) = (&self.nests[i], &self.nests[j]);
                let mut x = crossover_position(&a.position, a.fitness, &b.position, b.fitness);
                self.clamp(&mut x);
                x
            };
            candidates.push(egg);
            targets.push(self.rng.random_range(0..n));
        }
        let eggs = self.evaluate_all(candidates);
        for (l, egg) in targets.into_iter().zip(eggs) {
            if egg.fitness > self.nests[l].fitness {
                self.nests[l] = egg;
            }
        }
    }

    fn trace_row(&self, generation: usize) -> TraceRow<T> {
        TraceRow {
            generation,
            evaluations: self.evaluations,
            best_fitness: self.best.fitness,
            best_position: self.best.position.clone(),
        }
    }
}

/// Maximizes `obj` inside `cfg.bounds`, never exceeding `cfg.max_evaluations`
/// objective calls. Returns the best nest ever evaluated and one trace row
/// per generation (generation 1 is the initial population).
pub fn optimize<T: Scalar, O: Objective<T> + ?Sized>(obj: &O, cfg: &McsConfig) -> Result<McsResult<T>, McsError> {
    cfg.validate()?;
    if obj.dimension() != cfg.bounds.len() {
        return Err(McsError::DimensionMismatch {
            objective: obj.dimension(),
            bounds: cfg.bounds.len(),
        });
    }
    let mut rng = rng::derived(cfg.seed, "mcs", 0);
    let initial: Vec<Vec<T>> = (0..cfg.n_nests)
        .map(|_| {
            cfg.bounds
                .iter()
                .map(|&(lo, hi)| T::lit(rng.random_range(lo..=hi)))
                .collect()
        })
        .collect();

    let mut search = Search {
        obj,
        cfg,
        rng,
        nests: Vec::new(),
        best: Nest {
            position: initial[0].clone(),
            fitness: T::neg_infinity(),
        },
        evaluations: 0,
    };
    search.nests = search.evaluate_all(initial);

    let mut generation = 1;
    let mut trace = vec![search.trace_row(generation)];
    while search.evaluations < cfg.max_evaluations {
        generation += 1;
        search.sort();
        search.abandon_phase(generation);
        if search.remaining() > 0 {
            search.top_phase(generation);
        }
        trace.push(search.trace_row(generation));
    }
    log::debug!(
        "mcs: {} generations, {} evaluations, best {}",
        generation,
        search.evaluations,
        search.best.fitness
    );
    Ok(McsResult {
        best: search.best,
        evaluations: search.evaluations,
        generations: generation,
        trace,
    })
}

/// Writes a trace as CSV: `generation,evaluations,best_fitness,x0,x1,...`.
pub fn write_trace_csv<T: Scalar, W: std::io::Write>(trace: &[TraceRow<T>], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = trace.first().map_or(0, |r| r.best_position.len());
    let mut header = vec!["generation".to_string(), "evaluations".into(), "best_fitness".into()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for row in trace {
        let mut rec = vec![row.generation.to_string(), row.evaluations.to_string(), row.best_fitness.to_string()];
        rec.extend(row.best_position.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
