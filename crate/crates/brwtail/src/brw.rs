//! Branching random walk simulation (jump-then-branch) with optional
//! killing at 0, and the many-to-one / submartingale statistical checkers.
//!
//! A particle born at position w jumps to w + X and then produces N
//! children, all located at the landing spot. The landing counts towards
//! the maxima only when N ≥ 1; a childless root that jumped anywhere leaves
//! the global maximum at the root's birth position. Killed runs remove a
//! particle together with its never-created descendants as soon as its
//! landing is ≤ 0, and the killed maximum is 0 when nothing survives.

use rand::Rng;
use thiserror::Error;

use crate::estimate::{Counter, Estimate, Welford};
use crate::exec::{map_chunked, RngFactory, Workers};
use crate::laws::{solve_and_tilt, LawError, OffspringLaw, StepLaw};
use crate::walk::GridFunction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrwError {
    #[error("population cap of {0} nodes exceeded")]
    PopulationCapExceeded(u64),
    #[error("rare-event acceptance rate below 1e-6: {accepted} accepted in {attempts} attempts")]
    RareEventBudgetExceeded { attempts: u64, accepted: u64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(&'static str),
    #[error(transparent)]
    Law(#[from] LawError),
}

pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000;

#[derive(Debug, Clone)]
pub struct BrwConfig {
    pub offspring: OffspringLaw,
    pub step: StepLaw,
    /// 0 for unkilled runs, y > 0 for killed runs.
    pub start: f64,
    /// Optional generation cap: particles at this generation are created
    /// but never jump or branch.
    pub horizon: Option<u32>,
    pub population_cap: u64,
}

impl BrwConfig {
    pub fn new(offspring: OffspringLaw, step: StepLaw) -> Self {
        BrwConfig { offspring, step, start: 0.0, horizon: None, population_cap: DEFAULT_POPULATION_CAP }
    }

    pub fn with_start(mut self, start: f64) -> Self {
        self.start = start;
        self
    }

    pub fn with_horizon(mut self, horizon: Option<u32>) -> Self {
        self.horizon = horizon;
        self
    }
}

/// Extremal record of one realized tree.
#[derive(Debug, Clone)]
pub struct BrwOutcome {
    /// Global maximum M (includes the root's birth position).
    pub m: f64,
    /// Running maxima M_n by generation; nondecreasing, last entry = m.
    pub m_n: Vec<f64>,
    /// First generation with no particles.
    pub extinction_generation: u32,
    /// Particles ever created, root included.
    pub total_progeny: u64,
    /// Killed global maximum (0 when no particle survives the killing),
    /// tracked whenever start > 0.
    pub m0inf: Option<f64>,
    /// Killed running maxima by generation, floored at 0.
    pub m0inf_n: Option<Vec<f64>>,
}

impl BrwOutcome {
    /// M_{n} = max over generations 0..=n (saturates at extinction).
    pub fn max_up_to(&self, gen: u32) -> f64 {
        self.m_n[(gen as usize).min(self.m_n.len() - 1)]
    }

    pub fn killed_max_up_to(&self, gen: u32) -> Option<f64> {
        self.m0inf_n.as_ref().map(|v| v[(gen as usize).min(v.len() - 1)])
    }
}

struct Brood {
    birth: f64,
    gen: u32,
    alive: bool,
    remaining: u32,
}

fn simulate<R: Rng + ?Sized>(config: &BrwConfig, rng: &mut R, prune_killed: bool) -> Result<BrwOutcome, BrwError> {
    // Per-generation maximum of counted positions. Free runs count the
    // root's birth; killed overlays count surviving landings only.
    let mut gen_max: Vec<f64> = vec![config.start];
    let mut kill_gen_max: Vec<f64> = vec![f64::NEG_INFINITY];
    let track_killed = config.start > 0.0;
    let mut total: u64 = 1;
    let mut stack: Vec<Brood> = vec![Brood { birth: config.start, gen: 0, alive: true, remaining: 1 }];

    while let Some(top) = stack.last_mut() {
        if top.remaining == 0 {
            stack.pop();
            continue;
        }
        top.remaining -= 1;
        let (birth, gen, alive) = (top.birth, top.gen, top.alive);
        if config.horizon.is_some_and(|h| gen >= h) {
            continue;
        }
        let landing = birth + config.step.sample(rng);
        let child_alive = alive && landing > 0.0;
        if prune_killed && !child_alive {
            continue;
        }
        let n = config.offspring.sample_count(rng);
        if n == 0 {
            continue;
        }
        total += n as u64;
        if total > config.population_cap {
            return Err(BrwError::PopulationCapExceeded(config.population_cap));
        }
        let child_gen = (gen + 1) as usize;
        if gen_max.len() <= child_gen {
            gen_max.push(f64::NEG_INFINITY);
            kill_gen_max.push(f64::NEG_INFINITY);
        }
        gen_max[child_gen] = gen_max[child_gen].max(landing);
        if child_alive {
            kill_gen_max[child_gen] = kill_gen_max[child_gen].max(landing);
        }
        stack.push(Brood { birth: landing, gen: gen + 1, alive: child_alive, remaining: n as u32 });
    }

    let mut m_n = Vec::with_capacity(gen_max.len());
    let mut running = f64::NEG_INFINITY;
    for &g in &gen_max {
        running = running.max(g);
        m_n.push(running);
    }
    let (m0inf, m0inf_n) = if track_killed || prune_killed {
        let mut kn = Vec::with_capacity(kill_gen_max.len());
        let mut run = 0.0_f64;
        for &g in &kill_gen_max {
            run = run.max(g);
            kn.push(run);
        }
        (Some(*kn.last().unwrap()), Some(kn))
    } else {
        (None, None)
    };
    Ok(BrwOutcome {
        m: *m_n.last().unwrap(),
        extinction_generation: gen_max.len() as u32,
        total_progeny: total,
        m_n,
        m0inf,
        m0inf_n,
    })
}

/// Simulates one tree. For start > 0 the outcome also carries the killed
/// maxima computed from the same draws, so killed ≤ free holds pathwise.
pub fn simulate_brw<R: Rng + ?Sized>(config: &BrwConfig, rng: &mut R) -> Result<BrwOutcome, BrwError> {
    simulate(config, rng, false)
}

/// Simulates the killed tree only: particles landing in (-∞, 0] are removed
/// before breeding, so their descendants are never drawn.
pub fn simulate_killed_brw<R: Rng + ?Sized>(config: &BrwConfig, rng: &mut R) -> Result<BrwOutcome, BrwError> {
    if config.start <= 0.0 {
        return Err(BrwError::PreconditionViolated("killed runs require start > 0"));
    }
    simulate(config, rng, true)
}

/// Bernoulli tail estimate with the count of cap-aborted draws reported
/// out of band (aborted draws are excluded from the proportion).
#[derive(Debug, Clone)]
pub struct TailEstimate {
    pub estimate: Estimate,
    pub cap_aborted: u64,
}

#[derive(Clone, Default)]
struct TailAcc {
    counter: Counter,
    aborted: u64,
}

fn run_tail_ensemble<F>(n: u64, seed: u64, tag: u64, workers: Workers, hit: F) -> TailAcc
where
    F: Fn(&mut crate::exec::PathRng) -> Result<bool, BrwError> + Sync,
{
    let factory = RngFactory::new(seed, tag);
    map_chunked(
        n,
        workers,
        TailAcc::default(),
        |path| {
            let mut rng = factory.path_rng(path);
            hit(&mut rng)
        },
        |acc, r| match r {
            Ok(h) => acc.counter.push(h),
            Err(_) => acc.aborted += 1,
        },
        |a, b| {
            a.counter.merge(&b.counter);
            a.aborted += b.aborted;
        },
    )
}

/// Monte Carlo estimate of P(M > x), or of P_{δ_start}(M^{(0,∞)} > x) when
/// `killed`. For x < 0 the answer is exactly 1 by the M₀ = 0 convention.
pub fn estimate_tail(
    config: &BrwConfig,
    x: f64,
    n: u64,
    seed: u64,
    workers: Workers,
    killed: bool,
) -> Result<TailEstimate, BrwError> {
    if n < 1000 {
        return Err(BrwError::PreconditionViolated("estimate_tail needs n >= 1000"));
    }
    if killed && config.start <= 0.0 {
        return Err(BrwError::PreconditionViolated("killed runs require start > 0"));
    }
    if x < 0.0 {
        return Ok(TailEstimate { estimate: Estimate::exact(1.0, n, seed), cap_aborted: 0 });
    }
    let acc = run_tail_ensemble(n, seed, 0x5441_494c, workers, |rng| {
        if killed {
            Ok(simulate_killed_brw(config, rng)?.m0inf.unwrap() > x)
        } else {
            Ok(simulate_brw(config, rng)?.m > x)
        }
    });
    Ok(TailEstimate { estimate: acc.counter.estimate(seed), cap_aborted: acc.aborted })
}

/// Shared ensemble of maxima (free M, or killed M^{(0,∞)}): one simulation
/// pass serves a whole grid of tail points.
pub fn sample_max_ensemble(
    config: &BrwConfig,
    n: u64,
    seed: u64,
    workers: Workers,
    killed: bool,
) -> Result<(Vec<f64>, u64), BrwError> {
    if killed && config.start <= 0.0 {
        return Err(BrwError::PreconditionViolated("killed runs require start > 0"));
    }
    let factory = RngFactory::new(seed, 0x454e_5342);
    let acc = map_chunked(
        n,
        workers,
        (Vec::new(), 0u64),
        |path| {
            let mut rng = factory.path_rng(path);
            if killed {
                simulate_killed_brw(config, &mut rng).map(|o| o.m0inf.unwrap())
            } else {
                simulate_brw(config, &mut rng).map(|o| o.m)
            }
        },
        |acc, r| match r {
            Ok(m) => acc.0.push(m),
            Err(_) => acc.1 += 1,
        },
        |a, b| {
            a.0.extend(b.0);
            a.1 += b.1;
        },
    );
    Ok(acc)
}

/// Rejection estimate of P(M_{n_gen} ≥ c·n_gen | M ≥ c·n_gen).
#[derive(Debug, Clone)]
pub struct ConditionalEstimate {
    pub p_cond: Estimate,
    pub accepted: u64,
    pub attempts: u64,
    pub cap_aborted: u64,
}

/// Plain rejection: trees are simulated in stream order until `n_accept`
/// trees satisfy M ≥ c·n_gen. Refuses with `RareEventBudgetExceeded` once
/// the rule-of-three upper confidence bound for the acceptance rate drops
/// below 1e-6; no importance sampling is attempted.
pub fn conditional_mn(
    config: &BrwConfig,
    c: f64,
    n_gen: u32,
    n_accept: u64,
    seed: u64,
    workers: Workers,
    killed: bool,
) -> Result<ConditionalEstimate, BrwError> {
    if c <= 0.0 {
        return Err(BrwError::PreconditionViolated("c must be positive"));
    }
    if n_accept == 0 {
        return Err(BrwError::PreconditionViolated("need at least one accepted tree"));
    }
    if killed && config.start <= 0.0 {
        return Err(BrwError::PreconditionViolated("killed runs require start > 0"));
    }
    let threshold = c * n_gen as f64;
    let factory = RngFactory::new(seed, 0x434f_4e44);
    let mut counter = Counter::default();
    let mut accepted = 0u64;
    let mut attempts = 0u64;
    let mut aborted = 0u64;
    let mut batch = 4096u64.max(n_accept * 4).min(1 << 22);
    let mut next_path = 0u64;
    loop {
        let lo = next_path;
        let results: Vec<Option<(bool, bool)>> = map_chunked(
            batch,
            workers,
            Vec::new(),
            |i| {
                let mut rng = factory.path_rng(lo + i);
                let sim = if killed { simulate_killed_brw(config, &mut rng) } else { simulate_brw(config, &mut rng) };
                match sim {
                    Ok(out) => {
                        let (m, m_at_n) = if killed {
                            (out.m0inf.unwrap(), out.killed_max_up_to(n_gen).unwrap())
                        } else {
                            (out.m, out.max_up_to(n_gen))
                        };
                        Some((m >= threshold, m_at_n >= threshold))
                    }
                    Err(_) => None,
                }
            },
            |acc, v| acc.push(v),
            |a, b| a.extend(b),
        );
        next_path += batch;
        for r in results {
            attempts += 1;
            match r {
                Some((accept, hit)) => {
                    if accept {
                        accepted += 1;
                        counter.push(hit);
                        if accepted == n_accept {
                            return Ok(ConditionalEstimate {
                                p_cond: counter.estimate(seed),
                                accepted,
                                attempts,
                                cap_aborted: aborted,
                            });
                        }
                    }
                }
                None => aborted += 1,
            }
        }
        // Rule of three: acceptance rate is below (accepted + 3)/attempts at
        // ~95% confidence once attempts are large.
        if attempts >= 2_000_000 && ((accepted + 3) as f64) < 1e-6 * attempts as f64 {
            return Err(BrwError::RareEventBudgetExceeded { attempts, accepted });
        }
        batch = (batch * 2).min(1 << 22);
    }
}

/// Many-to-one check: compares the tree functional E[Σ_{|ω|=n} f(V(ω))]
/// against m^n·E₀[f(S_n)] under the untilted walk.
#[derive(Debug, Clone)]
pub struct ManyToOneCheck {
    pub tree: Estimate,
    pub walk: Estimate,
    pub z: f64,
}

pub fn many_to_one_check(
    config: &BrwConfig,
    n_gen: u32,
    f: &GridFunction,
    n: u64,
    seed: u64,
    workers: Workers,
) -> Result<ManyToOneCheck, BrwError> {
    let horizon_cfg = config.clone().with_horizon(Some(n_gen));
    let tree_factory = RngFactory::new(seed, 0x4d32_4f54);
    let tree_acc = map_chunked(
        n,
        workers,
        (Welford::new(), 0u64),
        |path| {
            let mut rng = tree_factory.path_rng(path);
            generation_sum(&horizon_cfg, &mut rng, n_gen, |pos| f.eval(pos))
        },
        |acc, r| match r {
            Ok(v) => acc.0.push(v),
            Err(_) => acc.1 += 1,
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1 += b.1;
        },
    );
    let walk_factory = RngFactory::new(seed, 0x4d32_4f57);
    let scale = config.offspring.mean().powi(n_gen as i32);
    let walk_acc = map_chunked(
        n,
        workers,
        Welford::new(),
        |path| {
            let mut rng = walk_factory.path_rng(path);
            let mut pos = config.start;
            for _ in 0..n_gen {
                pos += config.step.sample(&mut rng);
            }
            scale * f.eval(pos)
        },
        |acc, v| acc.push(v),
        |a, b| a.merge(&b),
    );
    let tree = tree_acc.0.estimate(seed);
    let walk = walk_acc.estimate(seed);
    Ok(ManyToOneCheck { z: tree.z_against(&walk), tree, walk })
}

/// Σ over generation-`n_gen` particles of g(V(ω)). Broods contribute their
/// particle count times g(landing).
fn generation_sum<R: Rng + ?Sized, G>(config: &BrwConfig, rng: &mut R, n_gen: u32, g: G) -> Result<f64, BrwError>
where
    G: Fn(f64) -> f64,
{
    if n_gen == 0 {
        return Ok(g(config.start));
    }
    let mut total: u64 = 1;
    let mut acc = 0.0;
    let mut stack: Vec<Brood> = vec![Brood { birth: config.start, gen: 0, alive: true, remaining: 1 }];
    while let Some(top) = stack.last_mut() {
        if top.remaining == 0 {
            stack.pop();
            continue;
        }
        top.remaining -= 1;
        let (birth, gen) = (top.birth, top.gen);
        if gen >= n_gen {
            continue;
        }
        let landing = birth + config.step.sample(rng);
        let n = config.offspring.sample_count(rng);
        if n == 0 {
            continue;
        }
        total += n as u64;
        if total > config.population_cap {
            return Err(BrwError::PopulationCapExceeded(config.population_cap));
        }
        if gen + 1 == n_gen {
            acc += n as f64 * g(landing);
        } else {
            stack.push(Brood { birth: landing, gen: gen + 1, alive: true, remaining: n as u32 });
        }
    }
    Ok(acc)
}

/// The D_n⁺ diagnostic: tree-side E[Σ_{|u|=n}(V(u) - n·drift)₊ e^{γV(u)}]
/// versus the walk-side Ê₀[(S_n - n·drift)₊] under the tilted measure. The
/// many-to-one identity makes them equal in expectation.
pub fn dplus_diag(
    config: &BrwConfig,
    n_gen: u32,
    n: u64,
    seed: u64,
    workers: Workers,
) -> Result<(Estimate, Estimate), BrwError> {
    let tilted = solve_and_tilt(&config.step, config.offspring.mean())?;
    let gamma = tilted.gamma();
    let drift = tilted.drift();
    let shift = n_gen as f64 * drift;

    let horizon_cfg = config.clone().with_horizon(Some(n_gen));
    let tree_factory = RngFactory::new(seed, 0x4450_5354);
    let tree_acc = map_chunked(
        n,
        workers,
        (Welford::new(), 0u64),
        |path| {
            let mut rng = tree_factory.path_rng(path);
            generation_sum(&horizon_cfg, &mut rng, n_gen, |pos| {
                (pos - shift).max(0.0) * (gamma * pos).exp()
            })
        },
        |acc, r| match r {
            Ok(v) => acc.0.push(v),
            Err(_) => acc.1 += 1,
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1 += b.1;
        },
    );
    let walk_factory = RngFactory::new(seed, 0x4450_5357);
    let walk_acc = map_chunked(
        n,
        workers,
        Welford::new(),
        |path| {
            let mut rng = walk_factory.path_rng(path);
            let mut pos = config.start;
            for _ in 0..n_gen {
                pos += tilted.sample(&mut rng);
            }
            (pos - shift).max(0.0)
        },
        |acc, v| acc.push(v),
        |a, b| a.merge(&b),
    );
    Ok((tree_acc.0.estimate(seed), walk_acc.estimate(seed)))
}
