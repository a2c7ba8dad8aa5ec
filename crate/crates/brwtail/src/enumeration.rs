//! Exact finite-horizon maximum distributions for lattice models.
//!
//! Exhausts every (step, offspring) outcome of every particle, one
//! generation at a time, aggregating siblings through independence. This is
//! the small-instance oracle used to validate the Monte Carlo simulator and
//! the fixed-point tail solver; it deliberately shares no code with either
//! (survival probabilities are tracked directly, offspring aggregation is
//! powering of the per-child CDF, and there is no grid closure or iteration
//! tolerance).

use crate::laws::{OffspringLaw, StepLaw};

/// Lattice step decomposed into integer multiples of the span.
struct LatticeAtoms {
    h: f64,
    /// (k, q): P(X = k·h) = q, sorted by k.
    atoms: Vec<(i64, f64)>,
    k_max: i64,
}

fn lattice_atoms(step: &StepLaw) -> Option<LatticeAtoms> {
    let h = step.span()?;
    let atoms: Vec<(i64, f64)> =
        step.atoms()?.iter().map(|&(x, q)| ((x / h).round() as i64, q)).collect();
    let k_max = atoms.iter().map(|&(k, _)| k).max()?;
    Some(LatticeAtoms { h, atoms, k_max })
}

/// P(at least one of N iid children exceeds, given each child exceeds with
/// probability t) = Σ_{n≥1} p_n (1 - (1-t)^n), evaluated stably for tiny t.
fn any_child_exceeds(probs: &[f64], t: f64) -> f64 {
    if t >= 0.5 {
        let mut sum = 0.0;
        let mut pw = 1.0 - t;
        for &p in probs.iter().skip(1) {
            sum += p * (1.0 - pw);
            pw *= 1.0 - t;
        }
        sum
    } else {
        // 1 - (1-t)^n expanded from k = 1: Σ_k C(n,k)(-1)^{k+1} t^k.
        let mut sum = 0.0;
        for (n, &p) in probs.iter().enumerate().skip(1) {
            if p == 0.0 {
                continue;
            }
            let nf = n as f64;
            let mut term = nf * t;
            let mut inner = term;
            for k in 1..n {
                term *= -(nf - k as f64) / (k as f64 + 1.0) * t;
                inner += term;
            }
            sum += p * inner;
        }
        sum
    }
}

/// Exact tail of the running maximum up to `depth` generations.
pub struct FreeMaxTail {
    pub h: f64,
    /// tails[i] = P(M_depth > i·h) for i = 0..=i_cap; zero beyond.
    pub tails: Vec<f64>,
}

impl FreeMaxTail {
    /// P(M_depth > x) for any x (1 for x < 0 by the M₀ = 0 convention).
    pub fn tail_at(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        let i = (x / self.h).floor() as usize;
        self.tails.get(i).copied().unwrap_or(0.0)
    }
}

/// Enumerates the distribution of M_depth for the unkilled process started
/// at 0. The `depth`-generation recursion exhausts every offspring count
/// and every step atom of every particle.
pub fn free_max_tail(offspring: &OffspringLaw, step: &StepLaw, depth: u32) -> Option<FreeMaxTail> {
    let lat = lattice_atoms(step)?;
    let probs = offspring.probs();
    let p_step_above = |i: i64| -> f64 {
        lat.atoms.iter().filter(|&&(k, _)| k > i).map(|&(_, q)| q).sum()
    };
    let i_cap = (lat.k_max.max(0) * depth as i64) as usize;
    // t[i] = P(future max of one just-born particle > i·h), horizon d.
    let mut t = vec![0.0f64; i_cap + 1];
    let one_minus_p0 = 1.0 - probs[0];
    for _ in 0..depth {
        let mut next = vec![0.0f64; i_cap + 1];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut v = one_minus_p0 * p_step_above(i as i64);
            for &(k, q) in &lat.atoms {
                if k <= i as i64 {
                    let l = i as i64 - k;
                    let child_t = if l as usize >= t.len() { 0.0 } else { t[l as usize] };
                    v += q * any_child_exceeds(probs, child_t);
                }
            }
            *slot = v;
        }
        t = next;
    }
    Some(FreeMaxTail { h: lat.h, tails: t })
}

/// Enumerates P_{δ_{y_index·h}}(killed max over `depth` generations >
/// v_index·h), with killing at (-∞, 0]. Returns 1 when the start already
/// exceeds the threshold (the convention for y > x).
pub fn killed_max_tail(
    offspring: &OffspringLaw,
    step: &StepLaw,
    depth: u32,
    y_index: i64,
    v_index: i64,
) -> Option<f64> {
    let lat = lattice_atoms(step)?;
    if y_index < 1 {
        return None;
    }
    if y_index > v_index {
        return Some(1.0);
    }
    let probs = offspring.probs();
    let one_minus_p0 = 1.0 - probs[0];
    // t[w-1] = P(killed future max of a particle born at w·h > v·h).
    let w_count = v_index as usize;
    let mut t = vec![0.0f64; w_count];
    for _ in 0..depth {
        let mut next = vec![0.0f64; w_count];
        for w in 1..=v_index {
            let mut v = 0.0;
            for &(k, q) in &lat.atoms {
                let landing = w + k;
                if landing > v_index {
                    v += q * one_minus_p0;
                } else if landing > 0 {
                    v += q * any_child_exceeds(probs, t[(landing - 1) as usize]);
                }
                // landing <= 0: killed, contributes nothing.
            }
            next[(w - 1) as usize] = v;
        }
        t = next;
    }
    Some(t[(y_index - 1) as usize])
}

/// Depth at which residual survival is far below f64 resolution, making
/// the finite-horizon tail indistinguishable from the global one.
pub fn global_depth(offspring: &OffspringLaw) -> u32 {
    // P(alive at n) decays like m^n; 1e-18 target with margin.
    let m = offspring.mean();
    ((1e-18f64.ln() / m.ln()).ceil() as u32).max(64)
}

/// Exact conditional probability P(M_n ≥ c·n | M ≥ c·n) for a lattice
/// model (killed variant conditions M^{(0,∞)} from start y_index·h).
pub fn conditional_oracle(
    offspring: &OffspringLaw,
    step: &StepLaw,
    c: f64,
    n_gen: u32,
    killed_start: Option<i64>,
) -> Option<f64> {
    let h = step.span()?;
    let threshold = c * n_gen as f64;
    // M ≥ cn on the lattice means M > (ceil(cn/h) - 1)·h.
    let i_thr = (threshold / h - 1e-9).ceil() as i64 - 1;
    let deep = global_depth(offspring).max(n_gen);
    match killed_start {
        None => {
            if i_thr < 0 {
                return Some(1.0); // both events are certain
            }
            let num = free_max_tail(offspring, step, n_gen)?.tail_at(i_thr as f64 * h);
            let den = free_max_tail(offspring, step, deep)?.tail_at(i_thr as f64 * h);
            Some(num / den)
        }
        Some(y_index) => {
            let num = killed_max_tail(offspring, step, n_gen, y_index, i_thr)?;
            let den = killed_max_tail(offspring, step, deep, y_index, i_thr)?;
            Some(num / den)
        }
    }
}
