//! Random-walk functionals under the tilted measure: ladder statistics, the
//! all-time minimum, the renewal function, and the overshoot/constrained
//! renewal sums whose x → ∞ limits the renewal lemmas predict.

use thiserror::Error;

use crate::estimate::{Counter, Estimate, Welford};
use crate::exec::{map_chunked, RngFactory, Workers};
use crate::laws::TiltedStepLaw;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("per-path step budget of {0} exceeded (drift too close to 0, or a bug)")]
    StepBudgetExceeded(u64),
    #[error("precondition violated: {0}")]
    PreconditionViolated(&'static str),
}

/// Tunables shared by the path samplers. Exceeding the step budget is an
/// error, never a silent truncation.
#[derive(Debug, Clone, Copy)]
pub struct SimParams {
    /// Hard cap on increments per sampled path.
    pub step_budget: u64,
    /// Adaptive-truncation target: doubling of the look-ahead window stops
    /// once the fraction of paths whose statistic changed falls below this.
    pub eps_trunc: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { step_budget: 100_000_000, eps_trunc: 1e-4 }
    }
}

/// Running state of one walk: position plus running extremes.
#[derive(Debug, Clone, Copy)]
pub struct WalkPath {
    start: f64,
    pos: f64,
    max: f64,
    min: f64,
    len: u64,
}

impl WalkPath {
    pub fn new(start: f64) -> Self {
        WalkPath { start, pos: start, max: start, min: start, len: 0 }
    }

    pub fn step(&mut self, dx: f64) {
        self.pos += dx;
        self.max = self.max.max(self.pos);
        self.min = self.min.min(self.pos);
        self.len += 1;
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn position(&self) -> f64 {
        self.pos
    }

    pub fn running_max(&self) -> f64 {
        self.max
    }

    pub fn running_min(&self) -> f64 {
        self.min
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Monte Carlo estimates of the ladder-height functionals and of
/// ρ = P̂₀(S_i > 0 for all i ≥ 1).
#[derive(Debug, Clone)]
pub struct LadderStats {
    pub mean_h1: Estimate,
    /// θ ↦ estimate of Ê₀[e^{-θ H₁}], in the order the θ list was given.
    pub laplace_h1: Vec<(f64, Estimate)>,
    pub rho: Estimate,
    pub fingerprint: u64,
}

impl LadderStats {
    /// Laplace estimate at a given θ (exact bit-match on the key).
    pub fn laplace_at(&self, theta: f64) -> Option<&Estimate> {
        self.laplace_h1.iter().find(|(t, _)| *t == theta).map(|(_, e)| e)
    }
}

/// Empirical law of I_∞ = min_{j≥0} S_j under the tilted measure.
#[derive(Debug, Clone)]
pub struct MinDistribution {
    samples: Vec<f64>,
    pub truncation_bound: f64,
    pub seed: u64,
    pub fingerprint: u64,
}

impl MinDistribution {
    fn new(mut samples: Vec<f64>, truncation_bound: f64, seed: u64, fingerprint: u64) -> Self {
        debug_assert!(samples.iter().all(|&s| s <= 0.0));
        samples.sort_by(f64::total_cmp);
        MinDistribution { samples, truncation_bound, seed, fingerprint }
    }

    /// Wraps an externally produced sample set (fixtures, file replay).
    /// Samples must be ≤ 0.
    pub fn from_samples(samples: Vec<f64>, seed: u64, fingerprint: u64) -> Self {
        assert!(samples.iter().all(|&s| s <= 0.0), "I_inf samples must be <= 0");
        Self::new(samples, f64::NAN, seed, fingerprint)
    }

    /// Sorted ascending.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// P̂(I_∞ ≥ z).
    pub fn prob_ge(&self, z: f64) -> f64 {
        let below = self.samples.partition_point(|&s| s < z);
        (self.samples.len() - below) as f64 / self.samples.len() as f64
    }

    /// P̂(I_∞ > z).
    pub fn prob_gt(&self, z: f64) -> f64 {
        let at_or_below = self.samples.partition_point(|&s| s <= z);
        (self.samples.len() - at_or_below) as f64 / self.samples.len() as f64
    }

    /// P̂(I_∞ > z) as an `Estimate` with Wilson standard error.
    pub fn prob_gt_estimate(&self, z: f64) -> Estimate {
        let n = self.samples.len() as u64;
        let hits = (self.prob_gt(z) * n as f64).round() as u64;
        Counter { hits, total: n }.estimate(self.seed)
    }
}

/// Ladder/min ensembles depend only on the tilted walk, so consistency
/// checks key on (base step, gamma).
pub fn tilt_fingerprint(tilted: &TiltedStepLaw) -> u64 {
    crate::laws::step_fingerprint(tilted.base()) ^ tilted.gamma().to_bits()
}

/// Walks from 0 until the first strict ascent; returns (T₁, H₁).
pub fn sample_until_first_ascent(
    tilted: &TiltedStepLaw,
    rng: &mut crate::exec::PathRng,
    params: &SimParams,
) -> Result<(u64, f64), WalkError> {
    debug_assert!(tilted.drift() > 0.0);
    let mut path = WalkPath::new(0.0);
    loop {
        path.step(tilted.sample(rng));
        if path.position() > 0.0 {
            return Ok((path.len(), path.position()));
        }
        if path.len() >= params.step_budget {
            return Err(WalkError::StepBudgetExceeded(params.step_budget));
        }
    }
}

type PathResult<T> = Result<T, WalkError>;

#[derive(Clone)]
struct FailFast<A> {
    acc: A,
    err: Option<WalkError>,
}

fn collect_paths<T: Send + Sync + Clone, F>(n: u64, workers: Workers, path_fn: F) -> PathResult<Vec<T>>
where
    F: Fn(u64) -> PathResult<T> + Sync,
{
    let out = map_chunked(
        n,
        workers,
        FailFast { acc: Vec::new(), err: None },
        path_fn,
        |a, r| match r {
            Ok(v) => a.acc.push(v),
            Err(e) => {
                if a.err.is_none() {
                    a.err = Some(e);
                }
            }
        },
        |a, b| {
            a.acc.extend(b.acc);
            if a.err.is_none() {
                a.err = b.err;
            }
        },
    );
    match out.err {
        Some(e) => Err(e),
        None => Ok(out.acc),
    }
}

/// One adaptively truncated minimum path: global min, min over steps ≥ 1.
fn min_path(tilted: &TiltedStepLaw, rng: &mut crate::exec::PathRng, window: f64, budget: u64) -> PathResult<(f64, f64)> {
    let mut path = WalkPath::new(0.0);
    let mut min_tail = f64::INFINITY;
    loop {
        path.step(tilted.sample(rng));
        min_tail = min_tail.min(path.position());
        if path.position() > path.running_min() + window {
            return Ok((path.running_min(), min_tail));
        }
        if path.len() >= budget {
            return Err(WalkError::StepBudgetExceeded(budget));
        }
    }
}

/// Runs an ensemble whose per-path statistic depends on a look-ahead window
/// B, doubling B from 20/γ until fewer than `eps_trunc` of paths change.
/// The closure re-simulates a path from its own stream, so every round sees
/// the same trajectory, just followed further.
fn adaptive_ensemble<T, F>(
    n: u64,
    gamma: f64,
    params: &SimParams,
    workers: Workers,
    run: F,
) -> PathResult<(Vec<T>, f64)>
where
    T: Send + Sync + Clone + PartialEq,
    F: Fn(u64, f64) -> PathResult<T> + Sync,
{
    let mut window = 20.0 / gamma;
    let mut prev: Option<Vec<T>> = None;
    for _ in 0..24 {
        let cur = collect_paths(n, workers, |path| run(path, window))?;
        if let Some(p) = prev {
            let changed = p.iter().zip(cur.iter()).filter(|(a, b)| a != b).count();
            if (changed as f64) < params.eps_trunc * n as f64 {
                return Ok((cur, window));
            }
        }
        prev = Some(cur);
        window *= 2.0;
    }
    Err(WalkError::StepBudgetExceeded(params.step_budget))
}

/// Ladder functionals: Ê[H₁], the Laplace transform at each θ, and ρ.
pub fn ladder_stats(
    tilted: &TiltedStepLaw,
    thetas: &[f64],
    n: u64,
    seed: u64,
    workers: Workers,
    params: &SimParams,
) -> Result<LadderStats, WalkError> {
    if n < 1000 {
        return Err(WalkError::PreconditionViolated("ladder_stats needs n >= 1000"));
    }
    if thetas.iter().any(|&t| t <= 0.0) {
        return Err(WalkError::PreconditionViolated("thetas must be positive"));
    }
    let factory = RngFactory::new(seed, 0x4c41_4444); // "LADD"
    let k = thetas.len();
    let folded = map_chunked(
        n,
        workers,
        FailFast { acc: (Welford::new(), vec![Welford::new(); k]), err: None },
        |path| {
            let mut rng = factory.path_rng(path);
            sample_until_first_ascent(tilted, &mut rng, params)
        },
        |a, r| match r {
            Ok((_t1, h1)) => {
                a.acc.0.push(h1);
                for (w, &theta) in a.acc.1.iter_mut().zip(thetas) {
                    w.push((-theta * h1).exp());
                }
            }
            Err(e) => {
                if a.err.is_none() {
                    a.err = Some(e);
                }
            }
        },
        |a, b| {
            a.acc.0.merge(&b.acc.0);
            for (wa, wb) in a.acc.1.iter_mut().zip(&b.acc.1) {
                wa.merge(wb);
            }
            if a.err.is_none() {
                a.err = b.err;
            }
        },
    );
    if let Some(e) = folded.err {
        return Err(e);
    }
    let (h1_acc, laplace_accs) = folded.acc;

    // ρ from a min-truncated ensemble under the same adaptive policy.
    let rho_factory = RngFactory::new(seed, 0x5248_4f21); // "RHO!"
    let (mins, _b) = adaptive_ensemble(n, tilted.gamma(), params, workers, |path, window| {
        let mut rng = rho_factory.path_rng(path);
        min_path(tilted, &mut rng, window, params.step_budget)
    })?;
    let mut rho_count = Counter::default();
    for &(_, min_tail) in &mins {
        rho_count.push(min_tail > 0.0);
    }

    Ok(LadderStats {
        mean_h1: h1_acc.estimate(seed),
        laplace_h1: thetas.iter().copied().zip(laplace_accs.iter().map(|w| w.estimate(seed))).collect(),
        rho: rho_count.estimate(seed),
        fingerprint: tilt_fingerprint(tilted),
    })
}

/// Samples the law of I_∞ with the adaptive stopping window.
pub fn sample_global_min(
    tilted: &TiltedStepLaw,
    n: u64,
    seed: u64,
    workers: Workers,
    params: &SimParams,
) -> Result<MinDistribution, WalkError> {
    if n == 0 {
        return Err(WalkError::PreconditionViolated("need at least one sample"));
    }
    let factory = RngFactory::new(seed, 0x4d49_4e53); // "MINS"
    let (mins, window) = adaptive_ensemble(n, tilted.gamma(), params, workers, |path, window| {
        let mut rng = factory.path_rng(path);
        min_path(tilted, &mut rng, window, params.step_budget)
    })?;
    let samples: Vec<f64> = mins.into_iter().map(|(m, _)| m).collect();
    Ok(MinDistribution::new(samples, window, seed, tilt_fingerprint(tilted)))
}

/// Estimates the renewal function U(y) = Σ_n P̂₀(S_n ≤ y) by counting
/// visits at or below y until the walk has climbed a window above both y
/// and its running minimum.
pub fn renewal_u(
    tilted: &TiltedStepLaw,
    y: f64,
    n: u64,
    seed: u64,
    workers: Workers,
    params: &SimParams,
) -> Result<Estimate, WalkError> {
    let factory = RngFactory::new(seed, 0x5245_4e55); // "RENU"
    let (counts, _) = adaptive_ensemble(n, tilted.gamma(), params, workers, |pathno, window| {
        let mut rng = factory.path_rng(pathno);
        let mut path = WalkPath::new(0.0);
        let mut count: u64 = (0.0 <= y) as u64; // S_0 = 0 counts when y >= 0
        loop {
            path.step(tilted.sample(&mut rng));
            if path.position() <= y {
                count += 1;
            }
            if path.position() > y + window && path.position() > path.running_min() + window {
                return Ok(count);
            }
            if path.len() >= params.step_budget {
                return Err(WalkError::StepBudgetExceeded(params.step_budget));
            }
        }
    })?;
    let mut w = Welford::new();
    for &c in &counts {
        w.push(c as f64);
    }
    Ok(w.estimate(seed))
}

/// Raw overshoot samples S_{T₀⁺} for the walk started at -x.
pub fn overshoot_samples(
    tilted: &TiltedStepLaw,
    x: f64,
    n: u64,
    seed: u64,
    workers: Workers,
    params: &SimParams,
) -> Result<Vec<f64>, WalkError> {
    if x <= 0.0 {
        return Err(WalkError::PreconditionViolated("overshoot start requires x > 0"));
    }
    let factory = RngFactory::new(seed, 0x4f56_5253); // "OVRS"
    collect_paths(n, workers, |pathno| {
        let mut rng = factory.path_rng(pathno);
        let mut path = WalkPath::new(-x);
        loop {
            path.step(tilted.sample(&mut rng));
            if path.position() > 0.0 {
                return Ok(path.position());
            }
            if path.len() >= params.step_budget {
                return Err(WalkError::StepBudgetExceeded(params.step_budget));
            }
        }
    })
}

/// Monte Carlo estimate of Ê₋ₓ[e^{-θ S_{T₀⁺}}].
pub fn overshoot_laplace(
    tilted: &TiltedStepLaw,
    x: f64,
    theta: f64,
    n: u64,
    seed: u64,
    workers: Workers,
    params: &SimParams,
) -> Result<Estimate, WalkError> {
    if theta <= 0.0 {
        return Err(WalkError::PreconditionViolated("theta must be positive"));
    }
    let samples = overshoot_samples(tilted, x, n, seed, workers, params)?;
    let mut w = Welford::new();
    for s in samples {
        w.push((-theta * s).exp());
    }
    Ok(w.estimate(seed))
}

/// x → ∞ limit of the overshoot Laplace transform, from ladder ingredients:
/// (1 - Ê[e^{-θH₁}])/(θ·Ê[H₁]) in the non-lattice case, and the lattice
/// analogue h(1 - Ê[e^{-θH₁}])/(Ê[H₁](e^{θh} - 1)).
pub fn overshoot_limit_formula(mean_h1: f64, laplace_theta: f64, theta: f64, span: Option<f64>) -> f64 {
    match span {
        None => (1.0 - laplace_theta) / (theta * mean_h1),
        Some(h) => h * (1.0 - laplace_theta) / (mean_h1 * ((theta * h).exp() - 1.0)),
    }
}

/// Nonnegative step function on a uniform grid, left-closed right-open
/// cells, zero outside. The DRI test-function class of the renewal checks.
#[derive(Debug, Clone)]
pub struct GridFunction {
    x0: f64,
    dx: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(x0: f64, dx: f64, values: Vec<f64>) -> Result<Self, WalkError> {
        if dx <= 0.0 || values.is_empty() {
            return Err(WalkError::PreconditionViolated("grid needs dx > 0 and at least one cell"));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(WalkError::PreconditionViolated("grid values must be nonnegative"));
        }
        Ok(GridFunction { x0, dx, values })
    }

    /// Indicator of the interval [lo, hi) as a single-cell grid.
    pub fn indicator(lo: f64, hi: f64) -> Result<Self, WalkError> {
        GridFunction::new(lo, hi - lo, vec![1.0])
    }

    pub fn eval(&self, z: f64) -> f64 {
        let idx = ((z - self.x0) / self.dx).floor();
        if idx < 0.0 || idx >= self.values.len() as f64 {
            0.0
        } else {
            self.values[idx as usize]
        }
    }

    /// ∫_{-∞}^{z} f.
    pub fn integral_below(&self, z: f64) -> f64 {
        let mut total = 0.0;
        for (i, &v) in self.values.iter().enumerate() {
            let lo = self.x0 + i as f64 * self.dx;
            let hi = lo + self.dx;
            if z <= lo {
                break;
            }
            total += v * (z.min(hi) - lo);
        }
        total
    }

    /// Σ_{i: ih ≤ z} f(ih) over the lattice of span h.
    pub fn lattice_sum_below(&self, z: f64, h: f64) -> f64 {
        let lo = (self.x0 / h).floor() as i64 - 1;
        let hi_x = self.x0 + self.values.len() as f64 * self.dx;
        let hi = (hi_x / h).ceil() as i64 + 1;
        let mut total = 0.0;
        for i in lo..=hi {
            let x = i as f64 * h;
            if x <= z + 1e-9 * h {
                total += self.eval(x);
            }
        }
        total
    }
}

/// Single-path accumulation Σ_{ℓ ≥ 1, max_{j ≤ ℓ} S_j ≤ 0} f(S_ℓ) for the
/// walk started at -x, averaged over paths. The sum truncates at the first
/// ascent above 0.
pub fn constrained_renewal_sum(
    tilted: &TiltedStepLaw,
    x: f64,
    f: &GridFunction,
    n: u64,
    seed: u64,
    workers: Workers,
    params: &SimParams,
) -> Result<Estimate, WalkError> {
    if x <= 0.0 {
        return Err(WalkError::PreconditionViolated("constrained sum requires x > 0"));
    }
    let factory = RngFactory::new(seed, 0x434f_4e53); // "CONS"
    let sums = collect_paths(n, workers, |pathno| {
        let mut rng = factory.path_rng(pathno);
        let mut path = WalkPath::new(-x);
        let mut acc = 0.0;
        loop {
            path.step(tilted.sample(&mut rng));
            if path.position() > 0.0 {
                return Ok(acc);
            }
            acc += f.eval(path.position());
            if path.len() >= params.step_budget {
                return Err(WalkError::StepBudgetExceeded(params.step_budget));
            }
        }
    })?;
    let mut w = Welford::new();
    for s in sums {
        w.push(s);
    }
    Ok(w.estimate(seed))
}

/// Predicted x → ∞ limit of [`constrained_renewal_sum`]: (1/Ê[S₁])·Ê[∫_{-∞}^{I_∞} f]
/// in the non-lattice case, (h/Ê[S₁])·Ê[Σ_{i ≤ I_∞/h} f(ih)] on a lattice.
/// Standard error propagates from the I_∞ sample.
pub fn constrained_limit_formula(
    f: &GridFunction,
    mins: &MinDistribution,
    drift: f64,
    span: Option<f64>,
) -> Estimate {
    let mut w = Welford::new();
    for &s in mins.samples() {
        let inner = match span {
            None => f.integral_below(s),
            Some(h) => h * f.lattice_sum_below(s, h),
        };
        w.push(inner / drift);
    }
    w.estimate(mins.seed)
}

/// Per-path killed renewal functional: starting at y - x, accumulate
/// e^{-γ S_ℓ} at the first ℓ with S_ℓ > 0 provided every earlier position
/// stayed in (-x, 0]; paths that exit below -x first contribute 0.
#[allow(clippy::too_many_arguments)]
pub fn killed_renewal_sum(
    tilted: &TiltedStepLaw,
    x: f64,
    y: f64,
    gamma: f64,
    n: u64,
    seed: u64,
    workers: Workers,
    params: &SimParams,
) -> Result<Estimate, WalkError> {
    if !(0.0 < y && y < x) {
        return Err(WalkError::PreconditionViolated("killed sum requires 0 < y < x"));
    }
    let factory = RngFactory::new(seed, 0x4b49_4c4c); // "KILL"
    let vals = collect_paths(n, workers, |pathno| {
        let mut rng = factory.path_rng(pathno);
        let mut path = WalkPath::new(y - x);
        loop {
            path.step(tilted.sample(&mut rng));
            if path.position() > 0.0 {
                return Ok((-gamma * path.position()).exp());
            }
            if path.position() <= -x {
                return Ok(0.0);
            }
            if path.len() >= params.step_budget {
                return Err(WalkError::StepBudgetExceeded(params.step_budget));
            }
        }
    })?;
    let mut w = Welford::new();
    for v in vals {
        w.push(v);
    }
    Ok(w.estimate(seed))
}

/// x → ∞ limit of [`killed_renewal_sum`]:
/// P̂₀(I_∞ > -y) · (1 - Ê[e^{-γH₁}])/(γ Ê[H₁]) (lattice analogue likewise).
pub fn killed_limit_formula(
    mins: &MinDistribution,
    mean_h1: f64,
    laplace_gamma: f64,
    gamma: f64,
    y: f64,
    span: Option<f64>,
) -> f64 {
    mins.prob_gt(-y) * overshoot_limit_formula(mean_h1, laplace_gamma, gamma, span)
}
