//! Distributed solve: agents answer prices with local plans, market
//! operators move prices along the coupling residuals.

use log::{debug, info, warn};
use qpcore::{Settings, Solver, Status};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{
    carbon_slack, pool_residual, subproblem, update_carbon_price, update_p2p_prices, update_pool_price, Agent,
    AgentView, Penalties, Subproblem,
};
use crate::central::system_objective;
use crate::model::{validate_scenario, CarbonCapMode, MarketDesign, PlanningSolution, PriceSet, Scenario};
use crate::network::build_ptdf;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Every agent answers the same published snapshot.
    #[default]
    Jacobi,
    /// Agents answer in turn and see the plans published before them.
    GaussSeidel,
}

impl std::str::FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "jacobi" => Ok(Schedule::Jacobi),
            "gauss_seidel" => Ok(Schedule::GaussSeidel),
            other => Err(format!("unknown schedule '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub q_trade: f64,
    pub q_grid: f64,
    pub q_pool: f64,
    pub q_co2: f64,
    pub max_iter: usize,
    /// Tolerances are multiplied by the scenario's energy scale.
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub schedule: Schedule,
    pub residual_balancing: bool,
    /// Proximal weight on each agent's own coupled variables, as a multiple
    /// of the penalties (see [`Penalties::proximal`]).
    pub proximal: f64,
    /// Worker threads; `None` reads `GRIDPLAN_THREADS`, then rayon's default.
    pub threads: Option<usize>,
    /// Store a price snapshot every this many iterations (0 disables).
    pub price_snapshot_every: usize,
    /// Iterations per window of the divergence test.
    pub divergence_window: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            q_trade: 1.0,
            q_grid: 1.0,
            q_pool: 1.0,
            q_co2: 1.0,
            max_iter: 20_000,
            eps_primal: 1e-4,
            eps_dual: 1e-4,
            schedule: Schedule::Jacobi,
            residual_balancing: false,
            proximal: 1.0,
            threads: None,
            price_snapshot_every: 0,
            divergence_window: 200,
        }
    }
}

impl AdmmConfig {
    pub fn penalties(&self) -> Penalties {
        Penalties {
            trade: self.q_trade,
            grid: self.q_grid,
            pool: self.q_pool,
            co2: self.q_co2,
            proximal: self.proximal,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let q = [self.q_trade, self.q_grid, self.q_pool, self.q_co2];
        let mut bad = Vec::new();
        if !q.iter().all(|v| v.is_finite() && *v > 0.0) {
            bad.push("penalties must be positive");
        }
        if !(self.proximal >= 0.0 && self.proximal.is_finite()) {
            bad.push("proximal weight must be nonnegative");
        }
        if !(self.eps_primal > 0.0 && self.eps_dual > 0.0) {
            bad.push("tolerances must be positive");
        }
        if self.max_iter == 0 {
            bad.push("max_iter must be at least 1");
        }
        if self.divergence_window == 0 {
            bad.push("divergence_window must be at least 1");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::NotConverged(format!("invalid ADMM configuration: {}", bad.join(", "))))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
    #[serde(skip)]
    pub price_snapshots: Vec<(usize, PriceSet)>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    pub solution: PlanningSolution,
    pub trace: ConvergenceTrace,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest violation of the relaxed coupling rows of the design.
pub fn primal_residual(s: &Scenario, sol: &PlanningSolution) -> f64 {
    let mut r: f64 = 0.0;
    for t in 0..s.time_steps {
        if s.market != MarketDesign::Pool {
            for (n, m) in s.trade_pairs() {
                r = r.max((sol.trade(n, m, t) + sol.trade(m, n, t)).abs());
                r = r.max((sol.trade(n, m, t) - sol.tso_bilateral(n, m, t)).abs());
            }
        }
        if s.market != MarketDesign::P2p {
            for n in 0..s.num_prosumers() {
                r = r.max(pool_residual(s, sol, n, t).abs());
            }
        }
    }
    if s.has_carbon_cap() {
        let excess = sol.total_emissions() - s.carbon_cap;
        r = r.max(match s.carbon_cap_mode {
            CarbonCapMode::Inequality => excess.max(0.0),
            CarbonCapMode::Equality => excess.abs(),
        });
    }
    r
}

/// Largest penalty-weighted change of a coupled variable between two
/// iterates.
pub fn dual_residual(s: &Scenario, sol: &PlanningSolution, prev: &PlanningSolution, q: &Penalties) -> f64 {
    let mut r: f64 = 0.0;
    for t in 0..s.time_steps {
        if s.market != MarketDesign::Pool {
            for (n, m) in s.trade_pairs() {
                r = r.max(q.trade * (sol.trade(n, m, t) - prev.trade(n, m, t)).abs());
                r = r.max(q.grid * (sol.tso_bilateral(n, m, t) - prev.tso_bilateral(n, m, t)).abs());
            }
        }
        if s.market != MarketDesign::P2p {
            for n in 0..s.num_prosumers() {
                r = r.max(q.pool * (sol.tso_pool(n, t) - prev.tso_pool(n, t)).abs());
            }
        }
    }
    if s.has_carbon_cap() {
        for n in 0..s.num_prosumers() {
            r = r.max(q.co2 * (sol.emission(n) - prev.emission(n)).abs());
        }
    }
    r
}

/// `(primal, dual)` residual norms of `sol` following `prev`.
pub fn residuals(s: &Scenario, sol: &PlanningSolution, prev: &PlanningSolution, cfg: &AdmmConfig) -> (f64, f64) {
    (primal_residual(s, sol), dual_residual(s, sol, prev, &cfg.penalties()))
}

// Splitting with warm starts from the agent's previous answer; the polish
// makes the answers exact, and consecutive iterates are close.
fn subproblem_settings() -> Settings {
    Settings::default()
}

/// Iterations between residual-balancing checks.
const BALANCE_INTERVAL: usize = 50;

/// One agent with its cached solver and last local solution.
struct Worker {
    agent: Agent,
    solver: Option<Solver>,
    warm: Option<(Vec<f64>, Vec<f64>)>,
}

impl Worker {
    fn new(agent: Agent) -> Self {
        Worker { agent, solver: None, warm: None }
    }

    fn reset(&mut self) {
        self.solver = None;
    }

    fn solve(&mut self, s: &Scenario, view: &AgentView) -> Result<(Subproblem, Vec<f64>), Error> {
        let fail =
            |reason: String| Error::Subproblem { agent: self.agent.to_string(), iteration: view.iteration, reason };
        let sub = subproblem(s, self.agent, view)?;
        let qp = &sub.program.qp;
        let solver = match &mut self.solver {
            Some(solver) => {
                solver.update_q(&qp.q)?;
                solver
            }
            slot => slot.insert(Solver::new(qp, &subproblem_settings())?),
        };
        if let Some((x, y)) = &self.warm {
            solver.warm_start(x, y)?;
        }
        let sol = solver.solve()?;
        let (x, y) = match sol.status {
            Status::Optimal => (sol.x, sol.y),
            other => {
                let alt = qpcore::solve_qp(qp, &Settings::interior_point())?;
                if alt.status != Status::Optimal {
                    return Err(fail(format!(
                        "local solve returned {} (primal {:.1e}, dual {:.1e})",
                        other.as_str(),
                        sol.primal_residual,
                        sol.dual_residual,
                    )));
                }
                (alt.x, alt.y)
            }
        };
        self.warm = Some((x.clone(), y));
        Ok((sub, x))
    }
}

/// Coordinator state between iterations.
struct State {
    iterate: PlanningSolution,
    prices: PriceSet,
    slack: f64,
    penalties: Penalties,
}

impl State {
    fn view(&self, s: &Scenario, iteration: usize) -> AgentView {
        let mut v = AgentView::from_iterate(s, &self.iterate, &self.prices, self.penalties);
        v.iteration = iteration;
        v.carbon_slack = self.slack;
        v
    }
}

fn thread_count(cfg: &AdmmConfig) -> usize {
    cfg.threads
        .or_else(|| std::env::var("GRIDPLAN_THREADS").ok().and_then(|v| v.parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or(0)
}

/// Copy the coupled and local variables of a fresh plan over the iterate.
fn publish(s: &Scenario, sub: &Subproblem, x: &[f64], iterate: &mut PlanningSolution) {
    sub.decode(s, x, iterate);
}

pub fn run_admm(s: &Scenario, cfg: &AdmmConfig) -> Result<AdmmOutcome, Error> {
    run_admm_from(s, cfg, None)
}

/// Run ADMM, optionally seeded with a plan and its prices (for example
/// a centralized optimum).
pub fn run_admm_from(s: &Scenario, cfg: &AdmmConfig, start: Option<&PlanningSolution>) -> Result<AdmmOutcome, Error> {
    cfg.validate()?;
    let v = validate_scenario(s);
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    build_ptdf(&s.lines, s.num_nodes, s.slack_node)?;
    let threads = thread_count(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::NotConverged(format!("thread pool: {e}")))?;
    pool.install(|| run(s, cfg, start))
}

fn run(s: &Scenario, cfg: &AdmmConfig, start: Option<&PlanningSolution>) -> Result<AdmmOutcome, Error> {
    let scale = s.energy_scale();
    let (eps_p, eps_d) = (cfg.eps_primal * scale, cfg.eps_dual * scale);
    let mut state = State {
        iterate: PlanningSolution { market: s.market, ..Default::default() },
        prices: PriceSet::default(),
        slack: 0.0,
        penalties: cfg.penalties(),
    };
    if let Some(st) = start {
        if st.market != s.market {
            return Err(Error::WrongMarket { expected: s.market, found: st.market });
        }
        state.iterate = st.clone();
        state.prices = st.prices.clone();
        if s.has_carbon_cap() && s.carbon_cap_mode == CarbonCapMode::Inequality {
            state.slack =
                carbon_slack(state.prices.carbon_price, st.total_emissions(), s.carbon_cap, state.penalties.co2);
        }
    }
    let mut workers: Vec<Worker> = (0..s.num_prosumers())
        .map(|n| Worker::new(Agent::Prosumer(n)))
        .chain(std::iter::once(Worker::new(Agent::Tso)))
        .collect();

    let mut trace = ConvergenceTrace::default();
    let mut converged = false;
    let mut iterations = 0;
    let mut window_best = f64::INFINITY;
    let mut earlier_best = f64::INFINITY;
    let mut first_primal = None;
    for k in 1..=cfg.max_iter {
        iterations = k;
        let prev = state.iterate.clone();
        match cfg.schedule {
            Schedule::Jacobi => {
                let view = state.view(s, k);
                let results: Vec<_> = workers.par_iter_mut().map(|w| w.solve(s, &view)).collect();
                for r in results {
                    let (sub, x) = r?;
                    publish(s, &sub, &x, &mut state.iterate);
                }
            }
            Schedule::GaussSeidel => {
                for w in workers.iter_mut() {
                    let view = state.view(s, k);
                    let (sub, x) = w.solve(s, &view)?;
                    publish(s, &sub, &x, &mut state.iterate);
                }
            }
        }
        update_prices(s, &mut state);

        let (primal, dual) =
            (primal_residual(s, &state.iterate), dual_residual(s, &state.iterate, &prev, &state.penalties));
        let objective = system_objective(s, &state.iterate);
        trace.rows.push(TraceRow { iteration: k, primal, dual, objective });
        if cfg.price_snapshot_every > 0 && k % cfg.price_snapshot_every == 0 {
            trace.price_snapshots.push((k, state.prices.clone()));
        }
        if k % 100 == 0 {
            debug!("iteration {k}: primal {primal:.3e} dual {dual:.3e} objective {objective:.6}");
        }
        if !(primal.is_finite() && dual.is_finite() && objective.is_finite()) {
            return Err(Error::Diverged(k));
        }
        if primal <= eps_p && dual <= eps_d {
            converged = true;
            break;
        }
        // divergence: runaway growth, or a whole window far above the
        // best earlier window
        let first = *first_primal.get_or_insert(primal);
        if primal > 1e6 * first.max(eps_p) {
            return Err(Error::Diverged(k));
        }
        window_best = window_best.min(primal);
        if k % cfg.divergence_window == 0 {
            if window_best > 1e3 * earlier_best.max(eps_p) {
                return Err(Error::Diverged(k));
            }
            earlier_best = earlier_best.min(window_best);
            window_best = f64::INFINITY;
        }
        if cfg.residual_balancing && k % BALANCE_INTERVAL == 0 {
            if primal > 10.0 * dual {
                rescale(&mut state, &mut workers, 2.0);
            } else if dual > 10.0 * primal {
                rescale(&mut state, &mut workers, 0.5);
            }
        }
    }
    if converged {
        info!("ADMM converged after {iterations} iterations");
    } else {
        warn!("ADMM stopped at the iteration limit ({iterations})");
    }
    let mut solution = state.iterate;
    solution.prices = state.prices;
    solution.objective = system_objective(s, &solution);
    solution.market = s.market;
    Ok(AdmmOutcome { solution, trace, converged, iterations })
}

fn rescale(state: &mut State, workers: &mut [Worker], factor: f64) {
    state.penalties = state.penalties.scaled(factor);
    // P changes with the penalties, so cached factorizations are stale
    for w in workers {
        w.reset();
    }
}

fn update_prices(s: &Scenario, state: &mut State) {
    let q = state.penalties;
    let sol = &state.iterate;
    if s.market != MarketDesign::Pool {
        state.prices = update_p2p_prices(s, &state.prices, sol, q.trade, q.grid);
    }
    if s.market != MarketDesign::P2p {
        state.prices = update_pool_price(s, &state.prices, sol, q.pool);
    }
    if s.has_carbon_cap() {
        let e: Vec<f64> = (0..s.num_prosumers()).map(|n| sol.emission(n)).collect();
        let total: f64 = e.iter().sum();
        let lam = state.prices.carbon_price;
        if s.carbon_cap_mode == CarbonCapMode::Inequality {
            state.slack = carbon_slack(lam, total, s.carbon_cap, q.co2);
        }
        state.prices.carbon_price = update_carbon_price(lam, &e, s.carbon_cap, q.co2, s.carbon_cap_mode);
    }
}

/// The trace as CSV with columns `iteration,primal,dual,objective`.
pub fn trace_csv(trace: &ConvergenceTrace) -> String {
    let mut out = String::from("iteration,primal,dual,objective\n");
    for r in &trace.rows {
        out.push_str(&format!("{},{:e},{:e},{:.12e}\n", r.iteration, r.primal, r.dual, r.objective));
    }
    out
}

/// Fraction of windows whose mean primal residual did not increase over
/// the previous window.
pub fn monotone_fraction(trace: &ConvergenceTrace, window: usize) -> f64 {
    let means: Vec<f64> = trace
        .rows
        .chunks(window.max(1))
        .filter(|c| c.len() == window.max(1))
        .map(|c| c.iter().map(|r| r.primal).sum::<f64>() / c.len() as f64)
        .collect();
    if means.len() < 2 {
        return 1.0;
    }
    let ok = means.windows(2).filter(|w| w[1] <= w[0]).count();
    ok as f64 / (means.len() - 1) as f64
}
