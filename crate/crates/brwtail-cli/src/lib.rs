//! Implementation of the `brwtail` experiment runner.
//!
//! Every command is referentially transparent given (model file, flags,
//! seed): reruns produce byte-identical CSV/JSON at any worker count. The
//! timestamp header is the only exception and `--no-timestamp` removes it.

pub mod commands;
pub mod output;

use clap::{Parser, Subcommand, ValueEnum};

use brwtail::Workers;

#[derive(Parser, Debug)]
#[command(name = "brwtail", version, about = "Tail asymptotics of subcritical branching random walks")]
pub struct Cli {
    /// JSON model file (offspring law + step law).
    #[arg(long, global = true, default_value = "model.json")]
    pub model: String,

    /// Master seed; every estimate in the outputs records it.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Worker threads for the Monte Carlo ensembles (default: available
    /// parallelism). Results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Write outputs into this directory instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<String>,

    /// Suppress the timestamp header line, making outputs byte-reproducible.
    #[arg(long, global = true, default_value_t = false)]
    pub no_timestamp: bool,

    /// Emit a gnuplot sidecar script next to CSV outputs (needs --out).
    #[arg(long, global = true, default_value_t = false)]
    pub gnuplot: bool,

    /// Fixed-point solver tolerance.
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub tol: f64,

    /// Per-tree node cap; cap-aborted draws are reported, never imputed.
    #[arg(long, global = true, default_value_t = 10_000_000)]
    pub population_cap: u64,

    /// Adaptive-truncation target for minimum/renewal ensembles.
    #[arg(long, global = true, default_value_t = 1e-4)]
    pub eps_trunc: f64,

    /// Hard cap on increments per sampled walk path.
    #[arg(long, global = true, default_value_t = 100_000_000)]
    pub step_budget: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailMode {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhaseRoute {
    Mc,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RenewalWhich {
    Overshoot,
    Constrained,
    Killed,
    U,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print γ, the tilted law, the drift and the critical speed.
    Gamma,
    /// Tail curve u(x) = P(M > x): exact lattice DP or Monte Carlo.
    Tail {
        #[arg(long, value_enum, default_value_t = TailMode::Exact)]
        mode: TailMode,
        /// Grid size for exact mode: rows i = 0..=i_max.
        #[arg(long, default_value_t = 60)]
        i_max: usize,
        /// Levels for mc mode.
        #[arg(long, value_delimiter = ',')]
        x_grid: Vec<f64>,
        /// Trees for mc mode.
        #[arg(long, default_value_t = 100_000)]
        n: u64,
    },
    /// The tail limit constant κ with both terms and the error budget.
    Kappa {
        /// Also print the killed-tail prefactor at this start height.
        #[arg(long)]
        killed: Option<f64>,
        /// Monte Carlo samples for the ladder/minimum ingredients.
        #[arg(long, default_value_t = 1_000_000)]
        n: u64,
        /// Exact-route grid size (lattice models).
        #[arg(long, default_value_t = 120)]
        i_max: usize,
        /// MC-route tail-curve reach (non-lattice models).
        #[arg(long, default_value_t = 8.0)]
        z_max: f64,
        /// MC-route tail-curve points.
        #[arg(long, default_value_t = 33)]
        grid_points: usize,
        /// Trees for the MC-route tail curve.
        #[arg(long, default_value_t = 1_000_000)]
        curve_n: u64,
    },
    /// Phase transition: P(M_n ≥ cn | M ≥ cn) over (c, n) grids.
    Phase {
        #[arg(long, value_delimiter = ',', required = true)]
        c_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<u32>,
        /// Accepted trees per (c, n) cell in mc route.
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        /// Condition the killed process started at this height instead.
        #[arg(long)]
        killed: Option<f64>,
        #[arg(long, value_enum, default_value_t = PhaseRoute::Mc)]
        route: PhaseRoute,
    },
    /// Renewal lemma checks: Monte Carlo estimate vs asymptotic formula.
    RenewalCheck {
        #[arg(long, value_enum)]
        which: RenewalWhich,
        #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0, 20.0])]
        x_list: Vec<f64>,
        /// θ for the overshoot Laplace transform.
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        /// Start height for the killed renewal check.
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        /// Indicator test function [f_lo, f_hi) for the constrained check.
        #[arg(long, default_value_t = -1.0)]
        f_lo: f64,
        #[arg(long, default_value_t = 0.0)]
        f_hi: f64,
        /// Random (x, y) pairs for the subadditivity check.
        #[arg(long, default_value_t = 50)]
        pairs: usize,
        #[arg(long, default_value_t = 100_000)]
        n: u64,
    },
    /// Many-to-one identity z-scores over generations.
    ManyToOne {
        #[arg(long, value_delimiter = ',', default_values_t = vec![3, 5, 10])]
        n_gen_list: Vec<u32>,
        /// Test function: `one` (constant 1) or `expgamma` (e^{γx} capped).
        #[arg(long, default_value = "one")]
        f: String,
        #[arg(long, default_value_t = 100_000)]
        n: u64,
    },
    /// D_n⁺ submartingale diagnostic: tree vs walk estimates and the /n trend.
    Dplus {
        #[arg(long, value_delimiter = ',', default_values_t = vec![10, 20, 40])]
        n_gen_list: Vec<u32>,
        #[arg(long, default_value_t = 100_000)]
        n: u64,
    },
}

impl Cli {
    pub fn workers(&self) -> Workers {
        match self.workers {
            Some(n) => Workers::Fixed(n),
            None => Workers::Auto,
        }
    }

    pub fn sim_params(&self) -> brwtail::walk::SimParams {
        brwtail::walk::SimParams { step_budget: self.step_budget, eps_trunc: self.eps_trunc }
    }
}
