//! Offspring and step-size laws, the generating functional, and the
//! exponential tilt.
//!
//! The tilt exponent is the positive root of E[e^{γX}] = 1/m. Under the
//! tilted measure the step law gains positive drift m·E[X e^{γX}], which is
//! what every renewal estimator in [`crate::walk`] relies on.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;


/// Absolute tolerance for probability-vector normalization.
pub const PROB_TOL: f64 = 1e-12;
/// Relative tolerance for lattice-span detection.
pub const SPAN_TOL: f64 = 1e-9;
/// Target residual of the tilt-exponent equation.
pub const GAMMA_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("not a probability vector: {0}")]
    NotAProbabilityVector(&'static str),
    #[error("offspring mean m = {0} lies outside (0,1)")]
    NotSubcritical(f64),
    #[error("degenerate extinction: p_0 = 1")]
    DegenerateExtinction,
    #[error("argument {0} outside domain {1}")]
    DomainError(f64, &'static str),
    #[error("no tilt exponent: essential supremum of X is <= 0")]
    NoTiltExists,
    #[error("numerical failure: {0}")]
    NumericalFailure(&'static str),
    #[error("tilted law failed normalization (wrong gamma?), |sum - 1| = {0:e}")]
    NotNormalized(f64),
    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("atoms are not multiples of the declared span {0}")]
    BadSpan(f64),
}

/// Finite-support reproduction law {p_0, ..., p_K} with mean in (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringLaw {
    probs: Vec<f64>,
    mean_m: f64,
    cum: Vec<f64>,
}

/// Validates `probs[k] = p_k` and caches the mean. Rejects vectors that are
/// not probabilities, supercritical/critical means, and p_0 = 1.
pub fn validate_offspring(probs: &[f64]) -> Result<OffspringLaw, LawError> {
    if probs.is_empty() {
        return Err(LawError::NotAProbabilityVector("empty vector"));
    }
    if probs.iter().any(|&p| !(0.0..=1.0).contains(&p) || !p.is_finite()) {
        return Err(LawError::NotAProbabilityVector("entries must lie in [0,1]"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(LawError::NotAProbabilityVector("entries must sum to 1"));
    }
    if probs[0] >= 1.0 - PROB_TOL {
        return Err(LawError::DegenerateExtinction);
    }
    let mean_m: f64 = probs.iter().enumerate().map(|(k, &p)| k as f64 * p).sum();
    if mean_m <= 0.0 || mean_m >= 1.0 {
        return Err(LawError::NotSubcritical(mean_m));
    }
    let mut cum = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cum.push(acc / total);
    }
    *cum.last_mut().unwrap() = 1.0;
    Ok(OffspringLaw { probs: probs.to_vec(), mean_m, cum })
}

impl OffspringLaw {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn p0(&self) -> f64 {
        self.probs[0]
    }

    pub fn mean(&self) -> f64 {
        self.mean_m
    }

    pub fn max_children(&self) -> usize {
        self.probs.len() - 1
    }

    /// Draws a child count by inverse CDF; consumes one uniform.
    pub fn sample_count<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cum.partition_point(|&c| c <= u)
    }

    /// ψ(s) = Σ p_n (1-s)^n + m s - 1 with 0^0 = 1.
    ///
    /// ψ(s) = Σ_{n≥1} p_n ((1-s)^n + ns - 1) is nonnegative and vanishes to
    /// second order at 0; for small s the expanded binomial form avoids the
    /// cancellation that makes the direct form useless below s ~ 1e-8.
    pub fn psi(&self, s: f64) -> Result<f64, LawError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(LawError::DomainError(s, "[0,1]"));
        }
        Ok(self.psi_unchecked(s))
    }

    pub(crate) fn psi_unchecked(&self, s: f64) -> f64 {
        // ψ ≥ 0 on [0,1] (Bernoulli inequality); the max clips rounding
        // noise on laws where ψ vanishes identically, e.g. support {0, 1}.
        if s >= 0.5 {
            let mut sum = 0.0;
            let mut pw = 1.0;
            for &p in &self.probs {
                sum += p * pw;
                pw *= 1.0 - s;
            }
            (sum + self.mean_m * s - 1.0).max(0.0)
        } else {
            // Σ_n p_n Σ_{k=2}^n C(n,k) (-s)^k, exact to roundoff for tiny s.
            let mut sum = 0.0;
            for (n, &p) in self.probs.iter().enumerate().skip(2) {
                if p == 0.0 {
                    continue;
                }
                let nf = n as f64;
                let mut term = nf * (nf - 1.0) / 2.0 * s * s;
                let mut inner = term;
                for k in 2..n {
                    term *= -(nf - k as f64) / (k as f64 + 1.0) * s;
                    inner += term;
                }
                sum += p * inner;
            }
            sum.max(0.0)
        }
    }

    /// H(s) = ψ(s)/(m s) on (0,1]; H(0) is the s → 0 limit, which is 0 for
    /// finite-support laws.
    pub fn big_h(&self, s: f64) -> Result<f64, LawError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(LawError::DomainError(s, "[0,1]"));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok(self.psi_unchecked(s) / (self.mean_m * s))
    }

    fn mix_fingerprint(&self, h: &mut Fnv) {
        for &p in &self.probs {
            h.write_u64(p.to_bits());
        }
    }
}

/// Step-size distribution: finitely many real atoms, or a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    /// Sorted by position; probabilities normalized.
    FiniteSupportReal(Vec<(f64, f64)>),
    Gaussian { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLaw {
    kind: StepKind,
    span: Option<f64>,
    cum: Vec<f64>,
}

impl StepLaw {
    /// Builds an atomic step law; atoms are sorted by position and duplicate
    /// positions merged, so permuting the input cannot change any output.
    pub fn from_atoms(atoms: &[(f64, f64)]) -> Result<Self, LawError> {
        let law = Self::atoms_unchecked_span(atoms)?;
        Ok(law)
    }

    /// Same, but with an explicitly declared lattice span. The declaration
    /// wins over detection; atoms must still sit on the declared lattice.
    pub fn from_atoms_with_span(atoms: &[(f64, f64)], span: f64) -> Result<Self, LawError> {
        let mut law = Self::atoms_unchecked_span(atoms)?;
        if span <= 0.0 || !span.is_finite() {
            return Err(LawError::BadSpan(span));
        }
        if let StepKind::FiniteSupportReal(ref sorted) = law.kind {
            if !sorted.iter().all(|&(x, _)| on_lattice(x, span)) {
                return Err(LawError::BadSpan(span));
            }
        }
        law.span = Some(span);
        Ok(law)
    }

    fn atoms_unchecked_span(atoms: &[(f64, f64)]) -> Result<Self, LawError> {
        if atoms.is_empty() {
            return Err(LawError::NotAProbabilityVector("empty atom list"));
        }
        if atoms.iter().any(|&(x, p)| !x.is_finite() || !p.is_finite() || p < 0.0) {
            return Err(LawError::NotAProbabilityVector("atoms need finite positions and p >= 0"));
        }
        let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(LawError::NotAProbabilityVector("atom masses must sum to 1"));
        }
        let mut sorted: Vec<(f64, f64)> = atoms.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        sorted.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        // Renormalize with the total summed in sorted order, so permuting
        // the input list cannot change any output bit.
        let canonical_total: f64 = sorted.iter().map(|&(_, p)| p).sum();
        for ap in sorted.iter_mut() {
            ap.1 /= canonical_total;
        }
        let span = detect_span(&sorted);
        let mut cum = Vec::with_capacity(sorted.len());
        let mut acc = 0.0;
        for &(_, p) in &sorted {
            acc += p;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(StepLaw { kind: StepKind::FiniteSupportReal(sorted), span, cum })
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self, LawError> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(LawError::InvalidSigma(sigma));
        }
        Ok(StepLaw { kind: StepKind::Gaussian { mu, sigma }, span: None, cum: Vec::new() })
    }

    pub fn kind(&self) -> &StepKind {
        &self.kind
    }

    pub fn span(&self) -> Option<f64> {
        self.span
    }

    pub fn is_lattice(&self) -> bool {
        self.span.is_some()
    }

    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match &self.kind {
            StepKind::FiniteSupportReal(a) => Some(a),
            StepKind::Gaussian { .. } => None,
        }
    }

    /// P(X > 0) > 0, the basic requirement for a tilt exponent.
    pub fn has_positive_mass(&self) -> bool {
        match &self.kind {
            StepKind::FiniteSupportReal(a) => a.iter().any(|&(x, p)| x > 0.0 && p > 0.0),
            StepKind::Gaussian { .. } => true,
        }
    }

    /// E[e^{θX}].
    pub fn mgf(&self, theta: f64) -> f64 {
        match &self.kind {
            StepKind::FiniteSupportReal(a) => a.iter().map(|&(x, p)| p * (theta * x).exp()).sum(),
            StepKind::Gaussian { mu, sigma } => (mu * theta + 0.5 * sigma * sigma * theta * theta).exp(),
        }
    }

    /// E[X e^{θX}].
    pub fn mgf_prime(&self, theta: f64) -> f64 {
        match &self.kind {
            StepKind::FiniteSupportReal(a) => a.iter().map(|&(x, p)| p * x * (theta * x).exp()).sum(),
            StepKind::Gaussian { mu, sigma } => {
                let s2 = sigma * sigma;
                (mu + theta * s2) * (mu * theta + 0.5 * s2 * theta * theta).exp()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            StepKind::FiniteSupportReal(a) => {
                let u: f64 = rng.random();
                a[self.cum.partition_point(|&c| c <= u)].0
            }
            StepKind::Gaussian { mu, sigma } => {
                Normal::new(*mu, *sigma).expect("valid sigma").sample(rng)
            }
        }
    }

    fn mix_fingerprint(&self, h: &mut Fnv) {
        match &self.kind {
            StepKind::FiniteSupportReal(a) => {
                h.write_u64(1);
                for &(x, p) in a {
                    h.write_u64(x.to_bits());
                    h.write_u64(p.to_bits());
                }
            }
            StepKind::Gaussian { mu, sigma } => {
                h.write_u64(2);
                h.write_u64(mu.to_bits());
                h.write_u64(sigma.to_bits());
            }
        }
        if let Some(s) = self.span {
            h.write_u64(s.to_bits());
        }
    }
}

fn on_lattice(x: f64, h: f64) -> bool {
    let q = x / h;
    (q - q.round()).abs() <= SPAN_TOL * q.abs().max(1.0)
}

/// Largest h > 0 such that every atom position is an integer multiple of h,
/// within a 1e-9 relative tolerance. `None` when no positive h works (the
/// non-lattice case) or all atoms sit at 0.
fn detect_span(atoms: &[(f64, f64)]) -> Option<f64> {
    let max_abs = atoms
        .iter()
        .filter(|&&(_, p)| p > 0.0)
        .map(|&(x, _)| x.abs())
        .fold(0.0f64, f64::max);
    if max_abs == 0.0 {
        return None;
    }
    let floor = SPAN_TOL * max_abs;
    let mut g: f64 = 0.0;
    for &(x, p) in atoms {
        if p == 0.0 || x == 0.0 {
            continue;
        }
        let mut a = g.max(x.abs());
        let mut b = g.min(x.abs());
        if b == 0.0 {
            g = a;
            continue;
        }
        while b > floor {
            let r = (a - b * (a / b).round()).abs();
            a = b;
            b = r;
        }
        g = a;
    }
    // A candidate of the order of the tolerance floor means the positions
    // are incommensurable, not that the lattice is that fine.
    if g <= 1e-6 * max_abs {
        return None;
    }
    if atoms.iter().all(|&(x, p)| p == 0.0 || on_lattice(x, g)) {
        Some(g)
    } else {
        None
    }
}

/// The step law reweighted by m·e^{γx}, together with its positive drift.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedStepLaw {
    base: StepLaw,
    tilted: StepLaw,
    gamma: f64,
    drift: f64,
}

/// Solves E[e^{γX}] = 1/m for γ > 0.
///
/// Gaussian laws use the closed-form positive root; atomic laws bracket the
/// root by doubling (E[e^{θX}] is convex with value 1 < 1/m at 0) and then
/// bisect down to one ulp.
pub fn solve_gamma(step: &StepLaw, m: f64) -> Result<f64, LawError> {
    if !(0.0 < m && m < 1.0) {
        return Err(LawError::NotSubcritical(m));
    }
    match step.kind() {
        StepKind::Gaussian { mu, sigma } => {
            let s2 = sigma * sigma;
            Ok((-mu + (mu * mu - 2.0 * s2 * m.ln()).sqrt()) / s2)
        }
        StepKind::FiniteSupportReal(atoms) => {
            if !step.has_positive_mass() {
                return Err(LawError::NoTiltExists);
            }
            let target = 1.0 / m;
            let max_atom = atoms.last().expect("nonempty").0;
            let cap = 700.0 / max_atom;
            let mut hi = 1.0_f64.min(cap);
            while step.mgf(hi) < target {
                hi *= 2.0;
                if hi >= cap {
                    hi = cap;
                    if step.mgf(hi) < target {
                        return Err(LawError::NumericalFailure("bracket expansion exceeded"));
                    }
                    break;
                }
            }
            let mut lo = 0.0_f64;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let v = step.mgf(mid);
                if v == target {
                    return Ok(mid);
                }
                if v < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let gamma = if (step.mgf(lo) - target).abs() <= (step.mgf(hi) - target).abs() { lo } else { hi };
            if (step.mgf(gamma) - target).abs() > GAMMA_TOL {
                return Err(LawError::NumericalFailure("bisection residual above tolerance"));
            }
            Ok(gamma)
        }
    }
}

/// Reweights the step law by m·e^{γx} and computes the drift m·E[X e^{γX}].
///
/// Fails with `NotNormalized` when the reweighted masses do not sum to 1,
/// which means γ does not solve the tilt equation for this (step, m).
pub fn tilt(step: &StepLaw, m: f64, gamma: f64) -> Result<TiltedStepLaw, LawError> {
    if !(0.0 < m && m < 1.0) {
        return Err(LawError::NotSubcritical(m));
    }
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(LawError::DomainError(gamma, "(0, inf)"));
    }
    let drift = m * step.mgf_prime(gamma);
    let tilted = match step.kind() {
        StepKind::FiniteSupportReal(atoms) => {
            let weighted: Vec<(f64, f64)> =
                atoms.iter().map(|&(x, p)| (x, m * (gamma * x).exp() * p)).collect();
            let total: f64 = weighted.iter().map(|&(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(LawError::NotNormalized((total - 1.0).abs()));
            }
            let normalized: Vec<(f64, f64)> = weighted.iter().map(|&(x, p)| (x, p / total)).collect();
            match step.span() {
                Some(h) => StepLaw::from_atoms_with_span(&normalized, h)?,
                None => StepLaw::from_atoms(&normalized)?,
            }
        }
        StepKind::Gaussian { mu, sigma } => {
            let norm = m * step.mgf(gamma);
            if (norm - 1.0).abs() > 1e-9 {
                return Err(LawError::NotNormalized((norm - 1.0).abs()));
            }
            StepLaw::gaussian(mu + gamma * sigma * sigma, *sigma)?
        }
    };
    if drift <= 0.0 {
        return Err(LawError::NotNormalized(drift));
    }
    Ok(TiltedStepLaw { base: step.clone(), tilted, gamma, drift })
}

impl TiltedStepLaw {
    pub fn base(&self) -> &StepLaw {
        &self.base
    }

    pub fn tilted(&self) -> &StepLaw {
        &self.tilted
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Ê₀[S₁] = m·E[X e^{γX}], also the critical speed of the phase
    /// transition in c.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn span(&self) -> Option<f64> {
        self.base.span()
    }

    /// Mean of the tilted law computed from the reweighted representation;
    /// an independent route to Ê₀[S₁] used by consistency checks.
    pub fn tilted_mean(&self) -> f64 {
        match self.tilted.kind() {
            StepKind::FiniteSupportReal(atoms) => atoms.iter().map(|&(x, p)| x * p).sum(),
            StepKind::Gaussian { mu, .. } => *mu,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.tilted.sample(rng)
    }
}

/// Convenience bundle: solve γ and tilt in one step.
pub fn solve_and_tilt(step: &StepLaw, m: f64) -> Result<TiltedStepLaw, LawError> {
    let gamma = solve_gamma(step, m)?;
    tilt(step, m, gamma)
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x1000_0000_01b3);
        }
    }
}

/// Hash of the model parameters, used to refuse mixing estimates that were
/// produced under different (offspring, step) pairs.
pub fn model_fingerprint(offspring: &OffspringLaw, step: &StepLaw) -> u64 {
    let mut h = Fnv::new();
    offspring.mix_fingerprint(&mut h);
    step.mix_fingerprint(&mut h);
    h.0
}

/// Fingerprint of the step law alone, for estimates that do not depend on
/// the offspring law (ladder and minimum ensembles).
pub fn step_fingerprint(step: &StepLaw) -> u64 {
    let mut h = Fnv::new();
    step.mix_fingerprint(&mut h);
    h.0
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ref_offspring() -> OffspringLaw {
        validate_offspring(&[0.6, 0.0, 0.4]).unwrap()
    }

    pub(crate) fn ref_step() -> StepLaw {
        StepLaw::from_atoms(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    #[test]
    fn validate_offspring_examples() {
        assert!((ref_offspring().mean() - 0.8).abs() < 1e-15);
        assert!(matches!(validate_offspring(&[0.0, 1.0]), Err(LawError::NotSubcritical(_))));
        let half = validate_offspring(&[0.5, 0.5]).unwrap();
        assert!((half.mean() - 0.5).abs() < 1e-15);
        assert!(matches!(validate_offspring(&[1.0]), Err(LawError::DegenerateExtinction)));
        assert!(matches!(
            validate_offspring(&[0.5, 0.4]),
            Err(LawError::NotAProbabilityVector(_))
        ));
    }

    #[test]
    fn psi_examples() {
        let law = ref_offspring();
        assert_eq!(law.psi(0.0).unwrap(), 0.0);
        let at_one = law.psi(1.0).unwrap();
        assert!((at_one - (0.6 + 0.8 - 1.0)).abs() < 1e-15);
        // Expanding 0.6 + 0.4(1-s)^2 + 0.8 s - 1 at s = 1/2 gives 0.4 s^2 = 0.1.
        assert!((law.psi(0.5).unwrap() - 0.1).abs() < 1e-15);
        assert!(law.psi(1.5).is_err());
        assert!(law.psi(-0.1).is_err());
    }

    #[test]
    fn psi_nonnegative_and_monotone_on_grid() {
        let law = validate_offspring(&[0.6, 0.1, 0.15, 0.1, 0.0, 0.05]).unwrap();
        let mut prev = 0.0;
        for i in 0..=1000 {
            let s = i as f64 / 1000.0;
            let v = law.psi(s).unwrap();
            assert!(v >= 0.0, "psi({s}) = {v} < 0");
            assert!(v - prev >= -1e-9, "psi decreasing at s = {s}");
            prev = v;
        }
    }

    #[test]
    fn psi_small_s_is_stable() {
        let law = ref_offspring();
        for k in [10, 20, 40, 60] {
            let s = 2f64.powi(-k);
            let v = law.psi(s).unwrap();
            let exact = 0.4 * s * s;
            assert!((v - exact).abs() <= 1e-12 * exact, "k = {k}");
        }
    }

    #[test]
    fn big_h_examples() {
        let law = ref_offspring();
        assert!((law.big_h(1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((law.big_h(0.5).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(law.big_h(0.0).unwrap(), 0.0);
        assert!(law.big_h(0.2).unwrap() <= law.big_h(0.8).unwrap());
        // H(1) = 1 - (1 - p0)/m < 1.
        assert!(law.big_h(1.0).unwrap() < 1.0);
    }

    #[test]
    fn gamma_cosh_closed_form() {
        let gamma = solve_gamma(&ref_step(), 0.8).unwrap();
        assert!((gamma - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((ref_step().mgf(gamma) - 1.25).abs() <= 1e-12);
    }

    #[test]
    fn gamma_gaussian_closed_form() {
        let step = StepLaw::gaussian(0.0, 1.0).unwrap();
        let m = (-0.5f64).exp();
        let gamma = solve_gamma(&step, m).unwrap();
        assert!((gamma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_all_negative_step_fails() {
        let step = StepLaw::from_atoms(&[(-1.0, 1.0)]).unwrap();
        assert!(matches!(solve_gamma(&step, 0.5), Err(LawError::NoTiltExists)));
    }

    #[test]
    fn tilt_reference_model() {
        let tilted = solve_and_tilt(&ref_step(), 0.8).unwrap();
        let atoms = tilted.tilted().atoms().unwrap();
        assert!((atoms[1].1 - 0.8).abs() < 1e-12);
        assert!((atoms[0].1 - 0.2).abs() < 1e-12);
        assert!((tilted.drift() - 0.6).abs() < 1e-12);
        assert!((tilted.drift() - tilted.tilted_mean()).abs() < 1e-12);
    }

    #[test]
    fn tilt_gaussian_identity() {
        let step = StepLaw::gaussian(0.0, 1.0).unwrap();
        let m = (-0.5f64).exp();
        let tilted = solve_and_tilt(&step, m).unwrap();
        match tilted.tilted().kind() {
            StepKind::Gaussian { mu, sigma } => {
                assert!((mu - 1.0).abs() < 1e-12);
                assert!((sigma - 1.0).abs() < 1e-15);
            }
            _ => panic!("tilt must preserve the Gaussian kind"),
        }
        assert!((tilted.drift() - 1.0).abs() < 1e-12);
        assert!((tilted.drift() - tilted.tilted_mean()).abs() < 1e-12);
    }

    #[test]
    fn tilt_rejects_wrong_gamma() {
        assert!(matches!(tilt(&ref_step(), 0.8, 1.0), Err(LawError::NotNormalized(_))));
    }

    #[test]
    fn span_detection() {
        assert_eq!(ref_step().span(), Some(1.0));
        let halves = StepLaw::from_atoms(&[(-1.0, 0.5), (0.5, 0.5)]).unwrap();
        assert!((halves.span().unwrap() - 0.5).abs() < 1e-12);
        let degenerate = StepLaw::from_atoms(&[(0.75, 1.0)]).unwrap();
        assert!((degenerate.span().unwrap() - 0.75).abs() < 1e-12);
        let irrational = StepLaw::from_atoms(&[(-1.0, 0.5), (std::f64::consts::SQRT_2, 0.5)]).unwrap();
        assert_eq!(irrational.span(), None);
        assert_eq!(StepLaw::gaussian(0.0, 1.0).unwrap().span(), None);
    }

    #[test]
    fn declared_span_wins() {
        let law = StepLaw::from_atoms_with_span(&[(-2.0, 0.5), (2.0, 0.5)], 1.0).unwrap();
        assert_eq!(law.span(), Some(1.0));
        assert!(StepLaw::from_atoms_with_span(&[(-1.5, 0.5), (2.0, 0.5)], 1.0).is_err());
    }

    #[test]
    fn gamma_invariant_under_atom_permutation() {
        let a = StepLaw::from_atoms(&[(-1.0, 0.25), (2.0, 0.35), (0.5, 0.4)]).unwrap();
        let b = StepLaw::from_atoms(&[(0.5, 0.4), (-1.0, 0.25), (2.0, 0.35)]).unwrap();
        let ga = solve_gamma(&a, 0.7).unwrap();
        let gb = solve_gamma(&b, 0.7).unwrap();
        assert_eq!(ga.to_bits(), gb.to_bits());
    }

    #[test]
    fn fingerprint_distinguishes_models() {
        let f1 = model_fingerprint(&ref_offspring(), &ref_step());
        let f2 = model_fingerprint(&validate_offspring(&[0.5, 0.5]).unwrap(), &ref_step());
        let f3 = model_fingerprint(&ref_offspring(), &StepLaw::gaussian(0.0, 1.0).unwrap());
        assert_ne!(f1, f2);
        assert_ne!(f1, f3);
        assert_eq!(f1, model_fingerprint(&ref_offspring(), &ref_step()));
    }
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn offspring_strategy() -> impl Strategy<Value = OffspringLaw> {
        proptest::collection::vec(0.01f64..1.0, 2..6).prop_filter_map("subcritical", |weights| {
            let total: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            validate_offspring(&probs).ok()
        })
    }

    fn tiltable_strategy() -> impl Strategy<Value = (f64, StepLaw)> {
        (
            0.3f64..0.95,
            proptest::collection::vec((-3.0f64..3.0, 0.05f64..1.0), 1..5),
            0.2f64..3.0,
            0.05f64..1.0,
        )
            .prop_filter_map("normalizable", |(m, mut atoms, pos, w)| {
                atoms.push((pos, w)); // guarantees P(X > 0) > 0
                let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
                for a in atoms.iter_mut() {
                    a.1 /= total;
                }
                StepLaw::from_atoms(&atoms).ok().map(|s| (m, s))
            })
    }

    proptest! {
        #[test]
        fn psi_bounded_and_h_monotone(law in offspring_strategy(), s1 in 0.0f64..=1.0, s2 in 0.0f64..=1.0) {
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let psi_lo = law.psi(lo).unwrap();
            let psi_hi = law.psi(hi).unwrap();
            prop_assert!(psi_lo >= 0.0);
            prop_assert!(psi_hi + 1e-12 >= psi_lo);
            prop_assert!(psi_hi <= law.psi(1.0).unwrap() + 1e-12);
            prop_assert!(law.big_h(lo).unwrap() <= law.big_h(hi).unwrap() + 1e-12);
            prop_assert!(law.big_h(1.0).unwrap() < 1.0);
        }

        #[test]
        fn tilt_normalizes_and_drifts_forward((m, step) in tiltable_strategy()) {
            let tilted = solve_and_tilt(&step, m).unwrap();
            prop_assert!((step.mgf(tilted.gamma()) - 1.0 / m).abs() <= 1e-12);
            let total: f64 = tilted.tilted().atoms().unwrap().iter().map(|&(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(tilted.drift() > 0.0);
            prop_assert!((tilted.drift() - tilted.tilted_mean()).abs() <= 1e-12);
            // Paper's lower bound on the drift: (1/γ)·ln(1/m).
            prop_assert!(tilted.drift() >= (1.0 / m).ln() / tilted.gamma() - 1e-9);
        }

        #[test]
        fn span_invariant_under_permutation((m, step) in tiltable_strategy(), rotate in 0usize..4) {
            // Two builds of the same atom list in different orders must be
            // bit-identical in every derived quantity.
            let atoms = step.atoms().unwrap();
            let mut rotated = atoms.to_vec();
            let shift = rotate % rotated.len().max(1);
            rotated.rotate_left(shift);
            let a = StepLaw::from_atoms(atoms).unwrap();
            let b = StepLaw::from_atoms(&rotated).unwrap();
            prop_assert_eq!(a.span(), b.span());
            let ga = solve_gamma(&a, m).unwrap();
            let gb = solve_gamma(&b, m).unwrap();
            prop_assert_eq!(ga.to_bits(), gb.to_bits());
        }
    }
}
