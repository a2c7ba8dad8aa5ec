//! Exact lattice solvers for u(x) = P(M > x) and the killed u(y, x), plus
//! evaluators of the tail limit constant κ (lattice and non-lattice routes)
//! and the killed-tail prefactor.
//!
//! The free recursion on the span-h lattice is
//!
//!   u(x) = (1-p₀)P(X > x) + m·E[u(x-X); X ≤ x] - E[ψ(u(x-X)); X ≤ x]
//!
//! with u ≡ 1 below 0. Iterating from u⁽⁰⁾ = 1_{x<0} makes the k-th iterate
//! the exact k-generation tail P(M_k > x), so iterates increase monotonically
//! to u and stay under the martingale envelope e^{-γx} throughout.

use serde::Serialize;
use thiserror::Error;

use crate::brw::{sample_max_ensemble, BrwConfig, BrwError};
use crate::estimate::{Counter, Estimate, Welford};
use crate::exec::Workers;
use crate::laws::{model_fingerprint, solve_and_tilt, LawError, OffspringLaw, StepLaw};
use crate::walk::{tilt_fingerprint, LadderStats, MinDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TailError {
    #[error("step law is not lattice")]
    NotLattice,
    #[error("index error: {0}")]
    IndexError(&'static str),
    #[error("grid too small: {0}")]
    GridTooSmall(&'static str),
    #[error("ingredients were built from different models")]
    InconsistentModels,
    #[error("missing ingredient: {0}")]
    MissingIngredient(&'static str),
    #[error("kappa = {0} violates the (0, 1] range of the tail limit")]
    TheoryViolation(f64),
    #[error("insufficient coverage: envelope remainder {remainder:e} exceeds 10% of the correction term {correction:e}")]
    InsufficientCoverage { remainder: f64, correction: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(&'static str),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Brw(#[from] BrwError),
}

/// Lattice step as integer multiples of the span.
struct Lattice {
    h: f64,
    atoms: Vec<(i64, f64)>,
}

fn lattice_of(step: &StepLaw) -> Result<Lattice, TailError> {
    let h = step.span().ok_or(TailError::NotLattice)?;
    let atoms = step
        .atoms()
        .ok_or(TailError::NotLattice)?
        .iter()
        .map(|&(x, q)| ((x / h).round() as i64, q))
        .collect();
    Ok(Lattice { h, atoms })
}

/// Solved grid of u(ih) with the envelope/zero closure sandwich.
#[derive(Debug, Clone)]
pub struct TailFunction {
    h: f64,
    gamma: f64,
    values: Vec<f64>,
    lower: Vec<f64>,
    residuals: Vec<f64>,
    pub iterations: u64,
    pub fingerprint: u64,
}

impl TailFunction {
    pub fn span(&self) -> f64 {
        self.h
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn i_max(&self) -> usize {
        self.values.len() - 1
    }

    /// u at lattice index i with the boundary conventions: 1 below the
    /// origin, the e^{-γx} envelope beyond the grid.
    pub fn value_at(&self, i: i64) -> f64 {
        if i < 0 {
            1.0
        } else if (i as usize) < self.values.len() {
            self.values[i as usize]
        } else {
            self.envelope(i)
        }
    }

    /// min(1, e^{-γ·ih}).
    pub fn envelope(&self, i: i64) -> f64 {
        (-self.gamma * i as f64 * self.h).exp().min(1.0)
    }

    /// Width of the closure sandwich (envelope-closed minus zero-closed).
    pub fn sandwich(&self, i: usize) -> f64 {
        self.values[i] - self.lower[i]
    }

    pub fn max_sandwich(&self) -> f64 {
        (0..self.values.len()).map(|i| self.sandwich(i)).fold(0.0, f64::max)
    }

    pub fn residual(&self, i: usize) -> f64 {
        self.residuals[i]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// P(M > x) for arbitrary x (1 below 0; lattice-step function above).
    pub fn tail_at(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        self.value_at((x / self.h).floor() as i64)
    }

    /// CSV rows `i,x,u,envelope,residual`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "i,x,u,envelope,residual")?;
        for i in 0..self.values.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                i,
                i as f64 * self.h,
                self.values[i],
                self.envelope(i as i64),
                self.residuals[i]
            )?;
        }
        Ok(())
    }
}

enum Closure {
    Envelope,
    Zero,
}

struct FreeSolver<'a> {
    offspring: &'a OffspringLaw,
    lat: Lattice,
    gamma: f64,
    i_max: usize,
}

impl FreeSolver<'_> {
    fn tail_prob_above(&self, i: i64) -> f64 {
        self.lat.atoms.iter().filter(|&&(k, _)| k > i).map(|&(_, q)| q).sum()
    }

    fn apply(&self, u: &[f64], closure: &Closure, out: &mut [f64]) {
        let m = self.offspring.mean();
        let one_minus_p0 = 1.0 - self.offspring.p0();
        for (i, slot) in out.iter_mut().enumerate() {
            let mut v = one_minus_p0 * self.tail_prob_above(i as i64);
            for &(k, q) in &self.lat.atoms {
                // Steps above x belong to the (1-p0)·P(X > x) term only,
                // so l = i - k never goes negative here.
                if k > i as i64 {
                    continue;
                }
                let l = (i as i64 - k) as usize;
                let ul = if l <= self.i_max {
                    u[l]
                } else {
                    match closure {
                        Closure::Envelope => (-self.gamma * l as f64 * self.lat.h).exp(),
                        Closure::Zero => 0.0,
                    }
                };
                v += q * (m * ul - self.offspring.psi_unchecked(ul));
            }
            *slot = v;
        }
    }

    fn solve(&self, closure: Closure, tol: f64) -> Result<(Vec<f64>, u64), TailError> {
        let mut u = vec![0.0f64; self.i_max + 1];
        let mut next = vec![0.0f64; self.i_max + 1];
        let mut iterations = 0u64;
        loop {
            self.apply(&u, &closure, &mut next);
            iterations += 1;
            let mut abs_inc = 0.0f64;
            let mut rel_inc = 0.0f64;
            for i in 0..=self.i_max {
                let d = next[i] - u[i];
                // Monotone map: iterates are k-generation tails and may only grow.
                assert!(d >= -1e-15, "iterate decreased at i = {i}");
                let env = (-self.gamma * i as f64 * self.lat.h).exp().min(1.0);
                assert!(next[i] <= env * (1.0 + 1e-9) + 1e-300, "martingale envelope violated at i = {i}");
                abs_inc = abs_inc.max(d);
                if next[i] > 0.0 {
                    rel_inc = rel_inc.max(d / next[i]);
                }
            }
            std::mem::swap(&mut u, &mut next);
            // Monotone bounded iterates stall at the float fixed point in
            // finitely many sweeps; stopping there makes the residual exact.
            if abs_inc == 0.0 || (abs_inc < tol && rel_inc < 1e-13) {
                return Ok((u, iterations));
            }
            if iterations > 200_000 {
                return Err(TailError::NumericalFailure("fixed-point iteration did not converge"));
            }
        }
    }
}

/// Solves the free lattice recursion to fixed-point residual ≤ tol.
///
/// Runs the envelope-closed and zero-closed systems; reported values come
/// from the envelope run (an upper closure), the sandwich width bounds the
/// grid-truncation error.
pub fn solve_u_lattice(
    offspring: &OffspringLaw,
    step: &StepLaw,
    i_max: usize,
    tol: f64,
) -> Result<TailFunction, TailError> {
    let lat = lattice_of(step)?;
    let gamma = crate::laws::solve_gamma(step, offspring.mean())?;
    if (-gamma * i_max as f64 * lat.h).exp() >= tol {
        return Err(TailError::GridTooSmall("need e^{-gamma * i_max * h} < tol for the envelope closure"));
    }
    let solver = FreeSolver { offspring, lat, gamma, i_max };
    let (values, iterations) = solver.solve(Closure::Envelope, tol)?;
    let (lower, _) = solver.solve(Closure::Zero, tol)?;
    let mut residuals = vec![0.0f64; i_max + 1];
    let mut reapplied = vec![0.0f64; i_max + 1];
    solver.apply(&values, &Closure::Envelope, &mut reapplied);
    for i in 0..=i_max {
        residuals[i] = (reapplied[i] - values[i]).abs();
    }
    let tf = TailFunction {
        h: solver.lat.h,
        gamma,
        values,
        lower,
        residuals,
        iterations,
        fingerprint: model_fingerprint(offspring, step),
    };
    if tf.max_sandwich() > 10.0 * tol {
        return Err(TailError::GridTooSmall("closure sandwich exceeds 10 * tol"));
    }
    Ok(tf)
}

/// Exact k-generation tail P(M_k > ih) on the grid: the k-th monotone
/// iterate. Values at i are exact as long as i + k·max_step stays inside
/// the grid (the closure is never consulted there).
pub fn iterate_u_lattice(
    offspring: &OffspringLaw,
    step: &StepLaw,
    i_max: usize,
    generations: u32,
) -> Result<Vec<f64>, TailError> {
    let lat = lattice_of(step)?;
    let gamma = crate::laws::solve_gamma(step, offspring.mean())?;
    let solver = FreeSolver { offspring, lat, gamma, i_max };
    let mut u = vec![0.0f64; i_max + 1];
    let mut next = vec![0.0f64; i_max + 1];
    for _ in 0..generations {
        solver.apply(&u, &Closure::Envelope, &mut next);
        std::mem::swap(&mut u, &mut next);
    }
    Ok(u)
}

/// Killed tail values u(jh, x) on the corridor 0 < jh ≤ x for one fixed
/// x = x_index·h.
#[derive(Debug, Clone)]
pub struct KilledTailGrid {
    h: f64,
    x_index: usize,
    values: Vec<f64>,
    residuals: Vec<f64>,
    pub fingerprint: u64,
}

impl KilledTailGrid {
    pub fn span(&self) -> f64 {
        self.h
    }

    pub fn x_index(&self) -> usize {
        self.x_index
    }

    /// u(jh, x) with the convention u = 1 above x and u = 0 at or below 0
    /// (a dead start cannot exceed a positive threshold).
    pub fn value_at(&self, j: i64) -> f64 {
        if j <= 0 {
            0.0
        } else if j as usize > self.x_index {
            1.0
        } else {
            self.values[(j - 1) as usize]
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

struct KilledSolver<'a> {
    offspring: &'a OffspringLaw,
    lat: Lattice,
    x_index: usize,
}

impl KilledSolver<'_> {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let m = self.offspring.mean();
        let one_minus_p0 = 1.0 - self.offspring.p0();
        let x = self.x_index as i64;
        for j in 1..=x {
            let mut v = 0.0;
            for &(k, q) in &self.lat.atoms {
                let landing = j + k;
                if landing > x {
                    v += q * one_minus_p0;
                } else if landing > 0 {
                    let ul = u[(landing - 1) as usize];
                    v += q * (m * ul - self.offspring.psi_unchecked(ul));
                }
            }
            out[(j - 1) as usize] = v;
        }
    }
}

/// Solves the killed recursion on the corridor (0, x] with killing below 0
/// and success above x. `y_index` is validated against the corridor; the
/// returned grid covers every j.
pub fn solve_u_killed_lattice(
    offspring: &OffspringLaw,
    step: &StepLaw,
    y_index: usize,
    x_index: usize,
    tol: f64,
) -> Result<KilledTailGrid, TailError> {
    let lat = lattice_of(step)?;
    if y_index < 1 || y_index > x_index {
        return Err(TailError::IndexError("need 1 <= y_index <= x_index"));
    }
    let solver = KilledSolver { offspring, lat, x_index };
    let mut u = vec![0.0f64; x_index];
    let mut next = vec![0.0f64; x_index];
    let mut iterations = 0u64;
    loop {
        solver.apply(&u, &mut next);
        iterations += 1;
        let mut abs_inc = 0.0f64;
        let mut rel_inc = 0.0f64;
        for i in 0..x_index {
            let d = next[i] - u[i];
            assert!(d >= -1e-15, "killed iterate decreased at j = {}", i + 1);
            abs_inc = abs_inc.max(d);
            if next[i] > 0.0 {
                rel_inc = rel_inc.max(d / next[i]);
            }
        }
        std::mem::swap(&mut u, &mut next);
        if abs_inc == 0.0 || (abs_inc < tol && rel_inc < 1e-13) {
            break;
        }
        if iterations > 200_000 {
            return Err(TailError::NumericalFailure("killed fixed-point iteration did not converge"));
        }
    }
    let mut residuals = vec![0.0f64; x_index];
    solver.apply(&u, &mut next);
    for i in 0..x_index {
        residuals[i] = (next[i] - u[i]).abs();
    }
    Ok(KilledTailGrid {
        h: solver.lat.h,
        x_index,
        values: u,
        residuals,
        fingerprint: model_fingerprint(offspring, step),
    })
}

/// Exact k-generation killed tails on the corridor (0, x].
pub fn iterate_u_killed_lattice(
    offspring: &OffspringLaw,
    step: &StepLaw,
    x_index: usize,
    generations: u32,
) -> Result<Vec<f64>, TailError> {
    let lat = lattice_of(step)?;
    let solver = KilledSolver { offspring, lat, x_index };
    let mut u = vec![0.0f64; x_index];
    let mut next = vec![0.0f64; x_index];
    for _ in 0..generations {
        solver.apply(&u, &mut next);
        std::mem::swap(&mut u, &mut next);
    }
    Ok(u)
}

/// The two terms of the tail limit constant with their provenance.
#[derive(Debug, Clone, Serialize)]
pub struct KappaReport {
    pub kappa: f64,
    /// The (1-p₀) ladder term.
    pub term_boundary: f64,
    /// The ψ∘u renewal term (subtracted).
    pub term_correction: f64,
    /// 3·(pooled MC stderr) + deterministic truncation budgets.
    pub error_budget: f64,
    pub mc_stderr: f64,
    pub truncation_budget: f64,
    pub provenance: KappaProvenance,
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaProvenance {
    pub gamma: f64,
    pub drift: f64,
    pub lattice: bool,
    pub ladder_seed: u64,
    pub ladder_samples: u64,
    pub mins_seed: u64,
    pub mins_samples: u64,
    pub grid_points: usize,
}

fn boundary_term_with_se(
    p0: f64,
    m: f64,
    gamma: f64,
    span: Option<f64>,
    mean_h1: &Estimate,
    laplace_gamma: &Estimate,
) -> (f64, f64) {
    let denom_rate = match span {
        Some(h) => ((gamma * h).exp() - 1.0) / h,
        None => gamma,
    };
    let b = (1.0 - p0) * (1.0 - laplace_gamma.value) / (m * mean_h1.value * denom_rate);
    let d_laplace = (1.0 - p0) / (m * mean_h1.value * denom_rate);
    let d_mean = b / mean_h1.value;
    let se = ((d_laplace * laplace_gamma.stderr).powi(2) + (d_mean * mean_h1.stderr).powi(2)).sqrt();
    (b, se)
}

/// Σ_{i ≥ from} ψ(e^{-γ·ih})·e^{γ·ih}: the envelope bound on the truncated
/// part of the correction sum. ψ(s) = O(s²) makes the terms geometric.
fn envelope_tail_sum(offspring: &OffspringLaw, gamma: f64, h: f64, from: i64) -> f64 {
    let mut total = 0.0;
    for i in from..(from + 2000) {
        let x = i as f64 * h;
        let term = offspring.psi_unchecked((-gamma * x).exp().min(1.0)) * (gamma * x).exp();
        total += term;
        if term < 1e-18 * total.max(1e-300) {
            break;
        }
    }
    total
}

/// Lattice-route κ: the boundary ladder term minus the ψ∘u correction sum,
/// the latter averaged over the empirical I_∞ law.
pub fn kappa_lattice(
    offspring: &OffspringLaw,
    step: &StepLaw,
    u: &TailFunction,
    ladder: &LadderStats,
    mins: &MinDistribution,
) -> Result<KappaReport, TailError> {
    let h = step.span().ok_or(TailError::NotLattice)?;
    let tilted = solve_and_tilt(step, offspring.mean())?;
    if u.fingerprint != model_fingerprint(offspring, step)
        || ladder.fingerprint != tilt_fingerprint(&tilted)
        || mins.fingerprint != tilt_fingerprint(&tilted)
    {
        return Err(TailError::InconsistentModels);
    }
    let gamma = u.gamma();
    let laplace = ladder
        .laplace_at(gamma)
        .ok_or(TailError::MissingIngredient("ladder Laplace transform at theta = gamma"))?;
    let (boundary, se_boundary) =
        boundary_term_with_se(offspring.p0(), offspring.mean(), gamma, Some(h), &ladder.mean_h1, laplace);

    let i_max = u.i_max();
    let tail_beyond_grid = envelope_tail_sum(offspring, gamma, h, i_max as i64 + 1);
    let mut per_sample = Welford::new();
    for &s in mins.samples() {
        let i0 = ((-s) / h).round().max(0.0) as i64;
        let mut g = 0.0;
        for i in i0..=(i_max as i64) {
            g += offspring.psi_unchecked(u.value_at(i)) * (gamma * i as f64 * h).exp();
        }
        g += if i0 <= i_max as i64 { tail_beyond_grid } else { envelope_tail_sum(offspring, gamma, h, i0) };
        per_sample.push(g);
    }
    let scale = h / (offspring.mean() * tilted.drift());
    let correction = scale * per_sample.mean();
    let se_correction = scale * per_sample.stderr();

    // Deterministic budgets: per-point closure sandwich through the local
    // Lipschitz constant of ψ, plus the envelope replacement of the tail.
    let mut grid_budget = 0.0;
    for i in 0..=i_max {
        let upper = (u.value_at(i as i64) + u.sandwich(i)).min(1.0);
        let lip = psi_prime(offspring, upper);
        grid_budget += lip * u.sandwich(i) * (gamma * i as f64 * h).exp();
    }
    let truncation_budget = scale * (grid_budget + tail_beyond_grid);

    let mc_stderr = (se_boundary.powi(2) + se_correction.powi(2)).sqrt();
    let kappa = boundary - correction;
    let report = KappaReport {
        kappa,
        term_boundary: boundary,
        term_correction: correction,
        error_budget: 3.0 * mc_stderr + truncation_budget,
        mc_stderr,
        truncation_budget,
        provenance: KappaProvenance {
            gamma,
            drift: tilted.drift(),
            lattice: true,
            ladder_seed: ladder.mean_h1.seed,
            ladder_samples: ladder.mean_h1.n_samples,
            mins_seed: mins.seed,
            mins_samples: mins.len() as u64,
            grid_points: i_max + 1,
        },
    };
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(TailError::TheoryViolation(kappa));
    }
    Ok(report)
}

/// ψ'(s) = m - Σ n·p_n (1-s)^{n-1}, the local Lipschitz constant of ψ.
fn psi_prime(offspring: &OffspringLaw, s: f64) -> f64 {
    let m = offspring.mean();
    let mut sum = 0.0;
    let mut pw = 1.0; // (1-s)^{n-1}, starting at n = 1
    for (n, &p) in offspring.probs().iter().enumerate().skip(1) {
        sum += n as f64 * p * pw;
        pw *= 1.0 - s;
    }
    (m - sum).max(0.0)
}

/// Monte Carlo tail curve on a grid of levels, from one shared ensemble of
/// maxima. Per-point standard errors are Wilson.
#[derive(Debug, Clone)]
pub struct McTailCurve {
    pub zs: Vec<f64>,
    pub estimates: Vec<Estimate>,
    pub cap_aborted: u64,
    pub fingerprint: u64,
}

pub fn mc_tail_curve(
    config: &BrwConfig,
    zs: &[f64],
    n: u64,
    seed: u64,
    workers: Workers,
) -> Result<McTailCurve, TailError> {
    if zs.is_empty() || zs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TailError::IndexError("levels must be strictly increasing"));
    }
    let (maxima, aborted) = sample_max_ensemble(config, n, seed, workers, false)?;
    let estimates = zs
        .iter()
        .map(|&z| {
            let hits = maxima.iter().filter(|&&m| m > z).count() as u64;
            Counter { hits, total: maxima.len() as u64 }.estimate(seed)
        })
        .collect();
    Ok(McTailCurve {
        zs: zs.to_vec(),
        estimates,
        cap_aborted: aborted,
        fingerprint: model_fingerprint(&config.offspring, &config.step),
    })
}

impl McTailCurve {
    fn interp(&self, z: f64) -> (f64, f64) {
        match self.zs.binary_search_by(|a| a.total_cmp(&z)) {
            Ok(i) => (self.estimates[i].value, self.estimates[i].stderr),
            Err(0) => (self.estimates[0].value, self.estimates[0].stderr),
            Err(i) if i == self.zs.len() => {
                let last = self.estimates.len() - 1;
                (self.estimates[last].value, self.estimates[last].stderr)
            }
            Err(i) => {
                let t = (z - self.zs[i - 1]) / (self.zs[i] - self.zs[i - 1]);
                (
                    self.estimates[i - 1].value * (1.0 - t) + self.estimates[i].value * t,
                    self.estimates[i - 1].stderr * (1.0 - t) + self.estimates[i].stderr * t,
                )
            }
        }
    }

    pub fn max_z(&self) -> f64 {
        *self.zs.last().unwrap()
    }
}

/// Closed form of ∫_{z_max}^∞ ψ(e^{-γz}) e^{γz} dz. Substituting
/// t = e^{-γz} reduces it to a polynomial integral, finite because
/// ψ(t)/t² is a polynomial for finite-support offspring.
pub fn psi_envelope_remainder(offspring: &OffspringLaw, gamma: f64, z_max: f64) -> f64 {
    let tm = (-gamma * z_max).exp();
    let mut total = 0.0;
    for (n, &p) in offspring.probs().iter().enumerate().skip(2) {
        if p == 0.0 {
            continue;
        }
        // ∫₀^{tm} Σ_{k=2}^n C(n,k)(-1)^k t^{k-2} dt term by term.
        let nf = n as f64;
        let mut binom = nf * (nf - 1.0) / 2.0;
        let mut sign = 1.0;
        let mut tp = tm; // tm^{k-1} at k = 2
        let mut inner = 0.0;
        for k in 2..=n {
            inner += sign * binom * tp / (k as f64 - 1.0);
            binom *= (nf - k as f64) / (k as f64 + 1.0);
            sign = -sign;
            tp *= tm;
        }
        total += p * inner;
    }
    total / gamma
}

/// Non-lattice-route κ from a Monte Carlo tail curve: trapezoid quadrature
/// of e^{γz}ψ(u(z)) from -I_∞ to z_max per minimum sample, the envelope
/// remainder closing [z_max, ∞).
pub fn kappa_nonlattice(
    offspring: &OffspringLaw,
    step: &StepLaw,
    u_mc: &McTailCurve,
    ladder: &LadderStats,
    mins: &MinDistribution,
    z_max: f64,
) -> Result<KappaReport, TailError> {
    if step.is_lattice() {
        return Err(TailError::IndexError("kappa_nonlattice requires a non-lattice step"));
    }
    let tilted = solve_and_tilt(step, offspring.mean())?;
    if u_mc.fingerprint != model_fingerprint(offspring, step)
        || ladder.fingerprint != tilt_fingerprint(&tilted)
        || mins.fingerprint != tilt_fingerprint(&tilted)
    {
        return Err(TailError::InconsistentModels);
    }
    if z_max > u_mc.max_z() {
        return Err(TailError::IndexError("u_mc grid does not cover z_max"));
    }
    let gamma = tilted.gamma();
    let laplace = ladder
        .laplace_at(gamma)
        .ok_or(TailError::MissingIngredient("ladder Laplace transform at theta = gamma"))?;
    let (boundary, se_boundary) =
        boundary_term_with_se(offspring.p0(), offspring.mean(), gamma, None, &ladder.mean_h1, laplace);

    let integrand = |z: f64| {
        let (u, _) = u_mc.interp(z);
        (gamma * z).exp() * offspring.psi_unchecked(u.clamp(0.0, 1.0))
    };
    let se_integrand = |z: f64| {
        let (u, se) = u_mc.interp(z);
        (gamma * z).exp() * psi_prime(offspring, u.clamp(0.0, 1.0).min(1.0)) * se
    };
    let remainder = psi_envelope_remainder(offspring, gamma, z_max);

    let mut per_sample = Welford::new();
    let mut curve_budget_acc = Welford::new();
    for &s in mins.samples() {
        let lo = -s;
        per_sample.push(trapezoid(&integrand, lo, z_max, &u_mc.zs) + remainder);
        curve_budget_acc.push(trapezoid(&se_integrand, lo, z_max, &u_mc.zs));
    }
    let scale = 1.0 / (offspring.mean() * tilted.drift());
    let correction = scale * per_sample.mean();
    let se_correction = scale * per_sample.stderr();
    let truncation_budget = scale * (curve_budget_acc.mean() + remainder);
    if scale * remainder > 0.1 * correction {
        return Err(TailError::InsufficientCoverage { remainder: scale * remainder, correction });
    }

    let mc_stderr = (se_boundary.powi(2) + se_correction.powi(2)).sqrt();
    let kappa = boundary - correction;
    let report = KappaReport {
        kappa,
        term_boundary: boundary,
        term_correction: correction,
        error_budget: 3.0 * mc_stderr + truncation_budget,
        mc_stderr,
        truncation_budget,
        provenance: KappaProvenance {
            gamma,
            drift: tilted.drift(),
            lattice: false,
            ladder_seed: ladder.mean_h1.seed,
            ladder_samples: ladder.mean_h1.n_samples,
            mins_seed: mins.seed,
            mins_samples: mins.len() as u64,
            grid_points: u_mc.zs.len(),
        },
    };
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(TailError::TheoryViolation(kappa));
    }
    Ok(report)
}

/// Trapezoid rule over [lo, hi] using the given nodes plus the endpoints.
fn trapezoid(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, nodes: &[f64]) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    let mut xs: Vec<f64> = Vec::with_capacity(nodes.len() + 2);
    xs.push(lo);
    xs.extend(nodes.iter().copied().filter(|&z| z > lo && z < hi));
    xs.push(hi);
    let mut total = 0.0;
    for w in xs.windows(2) {
        total += 0.5 * (f(w[0]) + f(w[1])) * (w[1] - w[0]);
    }
    total
}

/// Theorem-1.3 prefactor e^{γy}·P̂₀(I_∞ > -y): the predicted limit of the
/// killed/free tail ratio.
pub fn killed_prefactor(gamma: f64, y: f64, mins: &MinDistribution) -> f64 {
    (gamma * y).exp() * mins.prob_gt(-y)
}

/// Same with the Wilson standard error attached.
pub fn killed_prefactor_estimate(gamma: f64, y: f64, mins: &MinDistribution) -> Estimate {
    let base = mins.prob_gt_estimate(-y);
    Estimate {
        value: (gamma * y).exp() * base.value,
        stderr: (gamma * y).exp() * base.stderr,
        n_samples: base.n_samples,
        seed: base.seed,
    }
}

/// Partial sums of Σ_{n≥1} ψ(e^{-γn}) e^{γn}, the summability diagnostic
/// behind the correction term's convergence.
pub fn psi_summability_diag(offspring: &OffspringLaw, gamma: f64, n_terms: usize) -> Vec<f64> {
    assert!(n_terms >= 10, "diagnostic needs at least 10 terms");
    let mut sums = Vec::with_capacity(n_terms);
    let mut acc = 0.0;
    for n in 1..=n_terms {
        let x = n as f64;
        acc += offspring.psi_unchecked((-gamma * x).exp()) * (gamma * x).exp();
        sums.push(acc);
    }
    sums
}
