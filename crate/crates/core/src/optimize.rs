//! Mirror-phase optimization: open loop against the spread cost, closed loop
//! against a simulated noisy experiment.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::ensemble::{fringe_scan, ScanSetup};
use crate::error::{Error, Result};
use crate::fit::fit_fringe;
use crate::multipath::{phases_cost, CostSpec};
use crate::rng::derive_seed;
use crate::sequence::{build_sequence, constrained_expand, PhaseTuple, SequenceSpec, TimingSpec};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Phases restricted to multiples of π/8, multi-start cyclic coordinate descent.
    DiscretePiOver8,
    /// Discrete search followed by a bounded pattern search.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimizerConfig {
    pub n_phases: usize,
    pub loops: usize,
    pub mode: SearchMode,
    pub max_evals: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4, 8, 16].contains(&self.n_phases) {
            return Err(Error::invalid("n_phases", "must be 1, 2, 4, 8 or 16"));
        }
        if self.loops == 0 || self.loops % self.n_phases != 0 {
            return Err(Error::LoopsNotMultiple {
                n: self.n_phases,
                loops: self.loops,
            });
        }
        if self.max_evals == 0 {
            return Err(Error::invalid("max_evals", "must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptFlag {
    /// Every candidate has zero cost.
    DegenerateObjective,
    /// The evaluation budget ran out before convergence.
    BudgetExhausted,
    /// A fringe fit had no defined phase.
    DegenerateFit,
}

impl OptFlag {
    pub fn label(self) -> &'static str {
        match self {
            OptFlag::DegenerateObjective => "degenerate_objective",
            OptFlag::BudgetExhausted => "budget_exhausted",
            OptFlag::DegenerateFit => "degenerate_fit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord<T> {
    pub index: usize,
    pub restart: usize,
    pub phases: Vec<T>,
    pub cost: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopResult<T> {
    /// Canonical tuple: first phase in `[0, π/4)`.
    pub tuple: PhaseTuple<T>,
    pub cost: T,
    pub log: Vec<EvalRecord<T>>,
    pub flags: Vec<OptFlag>,
}

/// Shifts `phases` globally so the first lies in `[0, π/4)`.
pub fn canonicalize<T: Real>(tuple: &PhaseTuple<T>) -> PhaseTuple<T> {
    let first = tuple.as_slice()[0];
    let quarter = T::FRAC_PI_4();
    let keep = first - (first / quarter).floor() * quarter;
    tuple.shifted(keep - first)
}

struct Objective<'a, T> {
    template: SequenceSpec<T>,
    cost: &'a CostSpec<T>,
    loops: usize,
    budget: usize,
    log: Vec<EvalRecord<T>>,
    cache: HashMap<Vec<u64>, T>,
}

impl<T: Real> Objective<'_, T> {
    fn remaining(&self) -> usize {
        self.budget - self.log.len()
    }

    fn expand(&self, base: &[T]) -> Vec<T> {
        (0..self.loops).map(|i| base[i % base.len()]).collect()
    }

    fn key(base: &[T]) -> Vec<u64> {
        base.iter().map(|p| p.to_f64_lossy().to_bits()).collect()
    }

    /// Costs of `batch`, evaluated in parallel; `None` once the budget is spent.
    fn eval_batch(&mut self, batch: &[Vec<T>], restart: usize) -> Vec<Option<T>> {
        let mut fresh: Vec<usize> = Vec::new();
        for (k, b) in batch.iter().enumerate() {
            if !self.cache.contains_key(&Self::key(b)) && !fresh.iter().any(|&j| batch[j] == *b) {
                fresh.push(k);
            }
        }
        fresh.truncate(self.remaining());
        let values: Vec<T> = fresh
            .par_iter()
            .map(|&k| phases_cost(&self.expand(&batch[k]), &self.template, self.cost))
            .collect();
        for (&k, &v) in fresh.iter().zip(&values) {
            self.cache.insert(Self::key(&batch[k]), v);
            self.log.push(EvalRecord {
                index: self.log.len(),
                restart,
                phases: batch[k].clone(),
                cost: v,
            });
        }
        batch.iter().map(|b| self.cache.get(&Self::key(b)).copied()).collect()
    }
}

fn grid_phase<T: Real>(k: usize) -> T {
    T::FRAC_PI_8() * T::from_usize_lossy(k % 16)
}

/// Minimizes the spread cost over the first `N` mirror phases of an `L`-loop sequence.
///
/// The cost does not change under a common shift of all phases, so the first
/// phase is held at zero during the search.
pub fn open_loop_optimize<T: Real>(
    cfg: &OptimizerConfig,
    cost: &CostSpec<T>,
    timing: &TimingSpec<T>,
) -> Result<OpenLoopResult<T>> {
    cfg.validate()?;
    cost.validate()?;
    let n = cfg.n_phases;
    let template = build_sequence(PhaseTuple::constant(n, T::zero())?, cfg.loops, *timing, T::zero())?;
    let mut obj = Objective {
        template,
        cost,
        loops: cfg.loops,
        budget: cfg.max_evals,
        log: Vec::new(),
        cache: HashMap::new(),
    };
    let mut flags = Vec::new();

    if cost.is_degenerate() {
        let zero = vec![T::zero(); n];
        let c = obj.eval_batch(&[zero.clone()], 0)[0].unwrap_or(T::zero());
        flags.push(OptFlag::DegenerateObjective);
        return Ok(OpenLoopResult {
            tuple: PhaseTuple::new(zero)?,
            cost: c,
            log: obj.log,
            flags,
        });
    }

    let mut best: Option<(T, Vec<usize>)> = None;
    let mut exhausted = false;
    'restarts: for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, r as u64));
        let mut x: Vec<usize> = (0..n).map(|k| if k == 0 { 0 } else { rng.random_range(0..16) }).collect();
        let phases = |x: &[usize]| x.iter().map(|&k| grid_phase::<T>(k)).collect::<Vec<T>>();
        let Some(mut fx) = obj.eval_batch(&[phases(&x)], r)[0] else {
            exhausted = true;
            break;
        };
        loop {
            let mut improved = false;
            for k in 1..n {
                let batch: Vec<Vec<T>> = (0..16)
                    .map(|v| {
                        let mut y = x.clone();
                        y[k] = v;
                        phases(&y)
                    })
                    .collect();
                let costs = obj.eval_batch(&batch, r);
                // Lowest cost, ties to the lowest value.
                let mut pick: Option<(T, usize)> = None;
                for (v, c) in costs.iter().enumerate() {
                    if let Some(c) = *c {
                        if pick.is_none_or(|(b, _)| c < b) {
                            pick = Some((c, v));
                        }
                    }
                }
                if let Some((c, v)) = pick {
                    if c < fx - fx.abs() * T::lit(1e-12) && v != x[k] {
                        x[k] = v;
                        fx = c;
                        improved = true;
                    }
                }
                if costs.iter().any(Option::is_none) {
                    exhausted = true;
                }
                if exhausted {
                    if best.as_ref().is_none_or(|(b, _)| fx < *b) {
                        best = Some((fx, x.clone()));
                    }
                    break 'restarts;
                }
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| fx < *b) {
            best = Some((fx, x));
        }
    }
    let (mut best_cost, best_x) = best.ok_or(Error::invalid("max_evals", "budget too small for one evaluation"))?;
    let mut best_phases: Vec<T> = best_x.iter().map(|&k| grid_phase(k)).collect();

    if cfg.mode == SearchMode::Continuous && !exhausted {
        let (p, c, ran_out) = pattern_search(&mut obj, best_phases, best_cost, cfg.restarts);
        best_phases = p;
        best_cost = c;
        exhausted |= ran_out;
    }
    if exhausted {
        flags.push(OptFlag::BudgetExhausted);
    }
    // A truncated batch or a sub-threshold gain can leave a cheaper point in
    // the log than the one the descent settled on.
    if let Some(rec) = obj.log.iter().reduce(|a, b| if b.cost < a.cost { b } else { a }) {
        if rec.cost < best_cost {
            best_cost = rec.cost;
            best_phases = rec.phases.clone();
        }
    }
    Ok(OpenLoopResult {
        tuple: canonicalize(&PhaseTuple::new(best_phases)?),
        cost: best_cost,
        log: obj.log,
        flags,
    })
}

/// Compass search on phases 2..N with step halving from π/16 down to 1e-4 rad.
fn pattern_search<T: Real>(obj: &mut Objective<'_, T>, mut x: Vec<T>, mut fx: T, tag: usize) -> (Vec<T>, T, bool) {
    let mut step = T::PI() / T::lit(16.0);
    let min_step = T::lit(1e-4);
    while step >= min_step {
        let mut batch = Vec::new();
        for k in 1..x.len() {
            for s in [step, -step] {
                let mut y = x.clone();
                y[k] = (y[k] + s).wrap_phase();
                batch.push(y);
            }
        }
        let costs = obj.eval_batch(&batch, tag);
        let ran_out = costs.iter().any(Option::is_none);
        let mut pick: Option<(T, usize)> = None;
        for (j, c) in costs.iter().enumerate() {
            if let Some(c) = *c {
                if c < fx && pick.is_none_or(|(b, _)| c < b) {
                    pick = Some((c, j));
                }
            }
        }
        match pick {
            Some((c, j)) => {
                x = batch[j].clone();
                fx = c;
            }
            None => step = step * T::lit(0.5),
        }
        if ran_out {
            return (x, fx, true);
        }
    }
    (x, fx, false)
}

/// One closed-loop measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessSample<T> {
    pub phi1: T,
    pub phi2: T,
    /// `v·cos⁴(Δφ₀/2)`.
    pub fitness: T,
    pub visibility: T,
    pub phase0: T,
    pub n_scans: usize,
    /// The fit had no defined phase; fitness is zero.
    pub degenerate: bool,
}

/// `v·cos⁴(Δφ₀/2)`.
pub fn fitness<T: Real>(visibility: T, phase0: T) -> T {
    visibility * (phase0 * T::lit(0.5)).cos().powi(4)
}

/// Fringe-scans the constrained sequence built from `(φ₁, φ₂)` with additive
/// Gaussian detection noise and scores it.
///
/// `template` supplies the loop count, timing and drive.
pub fn simulated_experiment<T: Real>(
    phi1: T,
    phi2: T,
    template: &SequenceSpec<T>,
    noise_sigma: T,
    seed: u64,
    setup: &ScanSetup<T>,
) -> Result<FitnessSample<T>> {
    if !(noise_sigma >= T::zero()) {
        return Err(Error::invalid("noise_sigma", "must be non-negative"));
    }
    let seq = build_sequence(constrained_expand(phi1, phi2), template.loops, template.timing, T::zero())?
        .with_drive(template.drive)
        .with_quantization(template.quantize_bits);
    let mut scan = fringe_scan(&seq, setup)?;
    if noise_sigma > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma.to_f64_lossy()).map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
        for p in scan.iter_mut() {
            p.1 += T::lit(normal.sample(&mut rng));
        }
    }
    let fit = fit_fringe(&scan)?;
    let (f, degenerate) = if fit.phase_defined {
        (fitness(fit.visibility, fit.phase), false)
    } else {
        (T::zero(), true)
    };
    Ok(FitnessSample {
        phi1: phi1.wrap_phase(),
        phi2: phi2.wrap_phase(),
        fitness: f,
        visibility: fit.visibility,
        phase0: fit.phase,
        n_scans: 1,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResult<T> {
    pub best: (T, T),
    /// Mean fitness of all measurements taken at `best`.
    pub best_fitness: T,
    pub trajectory: Vec<FitnessSample<T>>,
    pub flags: Vec<OptFlag>,
}

/// Compass search on the `(φ₁, φ₂)` torus driven only by simulated measurements.
///
/// Each iteration re-measures the incumbent and polls the four neighbours at
/// the current step; the incumbent's score is the running mean of its
/// measurements. The step starts at π/8, halves when no neighbour wins, and
/// the search stops below π/128 or when the budget is spent.
pub fn closed_loop_optimize<T: Real>(
    start: (T, T),
    template: &SequenceSpec<T>,
    noise_sigma: T,
    max_evals: usize,
    seed: u64,
    setup: &ScanSetup<T>,
) -> Result<ClosedLoopResult<T>> {
    if max_evals < 20 {
        return Err(Error::invalid("max_evals", "closed-loop search needs at least 20 evaluations"));
    }
    let mut trajectory: Vec<FitnessSample<T>> = Vec::new();
    let mut flags = Vec::new();
    let measure = |p: (T, T), trajectory: &mut Vec<FitnessSample<T>>| -> Result<FitnessSample<T>> {
        let s = simulated_experiment(p.0, p.1, template, noise_sigma, derive_seed(seed, trajectory.len() as u64), setup)?;
        trajectory.push(s);
        Ok(s)
    };
    let mut x = (start.0.wrap_phase(), start.1.wrap_phase());
    let first = measure(x, &mut trajectory)?;
    let (mut sum, mut count) = (first.fitness, 1usize);
    let mut step = T::FRAC_PI_8();
    let min_step = T::PI() / T::lit(128.0);
    let mut exhausted = false;
    while step >= min_step {
        if trajectory.len() + 5 > max_evals {
            exhausted = true;
            break;
        }
        if noise_sigma > T::zero() {
            sum += measure(x, &mut trajectory)?.fitness;
            count += 1;
        }
        let incumbent = sum / T::from_usize_lossy(count);
        let mut pick: Option<(T, (T, T))> = None;
        for (d1, d2) in [(step, T::zero()), (-step, T::zero()), (T::zero(), step), (T::zero(), -step)] {
            let p = ((x.0 + d1).wrap_phase(), (x.1 + d2).wrap_phase());
            let s = measure(p, &mut trajectory)?;
            if s.degenerate {
                flags.push(OptFlag::DegenerateFit);
            }
            if s.fitness > incumbent && pick.is_none_or(|(b, _)| s.fitness > b) {
                pick = Some((s.fitness, p));
            }
        }
        match pick {
            Some((f, p)) => {
                x = p;
                sum = f;
                count = 1;
            }
            None => step = step * T::lit(0.5),
        }
    }
    if exhausted {
        flags.push(OptFlag::BudgetExhausted);
    }
    flags.dedup();
    Ok(ClosedLoopResult {
        best: x,
        best_fitness: sum / T::from_usize_lossy(count),
        trajectory,
        flags,
    })
}

/// Fitness on a uniform `(φ₁, φ₂)` grid over the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape<T> {
    pub resolution: T,
    /// Cells per axis.
    pub n: usize,
    /// Row-major: index `i·n + j` holds `(φ₁, φ₂) = (i, j)·resolution`.
    pub values: Vec<T>,
}

impl<T: Real> Landscape<T> {
    /// Value at integer cell `(i, j)`, wrapping around the torus.
    pub fn cell(&self, i: isize, j: isize) -> T {
        let n = self.n as isize;
        self.values[(i.rem_euclid(n) * n + j.rem_euclid(n)) as usize]
    }

    /// Value of the cell nearest `(φ₁, φ₂)`.
    pub fn at(&self, phi1: T, phi2: T) -> T {
        let idx = |p: T| (p.wrap_phase() / self.resolution).round().to_isize().unwrap_or(0);
        self.cell(idx(phi1), idx(phi2))
    }

    pub fn argmax(&self) -> (T, T, T) {
        let mut best = 0;
        for k in 1..self.values.len() {
            if self.values[k] > self.values[best] {
                best = k;
            }
        }
        let (i, j) = (best / self.n, best % self.n);
        (
            T::from_usize_lossy(i) * self.resolution,
            T::from_usize_lossy(j) * self.resolution,
            self.values[best],
        )
    }

    pub fn phase(&self, i: usize) -> T {
        T::from_usize_lossy(i) * self.resolution
    }
}

/// Grid size for `resolution`, which must divide 2π.
pub fn grid_size<T: Real>(resolution: T) -> Result<usize> {
    if !(resolution > T::zero()) {
        return Err(Error::invalid("resolution", "must be positive"));
    }
    let n = (T::TAU() / resolution).round();
    if n < T::one() || ((n * resolution - T::TAU()) / T::TAU()).abs() > T::lit(1e-9) {
        return Err(Error::invalid("resolution", "must divide 2π"));
    }
    Ok(n.to_usize().unwrap_or(0))
}

pub fn landscape_scan<T: Real>(
    template: &SequenceSpec<T>,
    resolution: T,
    noise_sigma: T,
    seed: u64,
    setup: &ScanSetup<T>,
) -> Result<Landscape<T>> {
    let n = grid_size(resolution)?;
    let values = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let phi = |m: usize| T::from_usize_lossy(m) * resolution;
            simulated_experiment(phi(i), phi(j), template, noise_sigma, derive_seed(seed, k as u64), setup)
                .map(|s| s.fitness)
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(Landscape { resolution, n, values })
}
