//! Agent subproblems for the distributed solve and the market operators'
//! price updates.
//!
//! Every subproblem is a pure function of the scenario and an [`AgentView`]:
//! the agent's own block from the centralized builder plus the linear price
//! terms and quadratic penalties of the coupling rows it takes part in,
//! with the other agents' coupled variables frozen at their published
//! values.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use qpcore::CscMatrix;

use crate::central::{add_prosumer, add_tso, supply_terms, trade_terms, LpBuilder, Program, Var};
use crate::model::{CarbonCapMode, MarketDesign, PlanningSolution, PriceSet, Scenario};
use crate::network::build_ptdf;
use crate::Error;

/// Penalty weights of the four coupling families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalties {
    pub trade: f64,
    pub grid: f64,
    pub pool: f64,
    pub co2: f64,
    /// Weight of `½(x − x̄)²` on an agent's own coupled variables, relative
    /// to the penalties of the rows they enter times the number of other
    /// agents in those rows. Zero disables it.
    pub proximal: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Self { trade: 1.0, grid: 1.0, pool: 1.0, co2: 1.0, proximal: 0.0 }
    }
}

impl Penalties {
    pub fn uniform(q: f64) -> Self {
        Self { trade: q, grid: q, pool: q, co2: q, proximal: 0.0 }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            trade: self.trade * factor,
            grid: self.grid * factor,
            pool: self.pool * factor,
            co2: self.co2 * factor,
            proximal: self.proximal,
        }
    }
}

/// Published state seen by the agents at one iteration. Missing entries
/// read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentView {
    pub iteration: usize,
    pub prices: PriceSet,
    pub penalties: Penalties,
    /// Bilateral trades `p[n,m,t]` as last published by their owners.
    pub trades: BTreeMap<(usize, usize, usize), f64>,
    /// Pool design: each prosumer's net injection; mixed design: its pool trade.
    pub pool_trades: BTreeMap<(usize, usize), f64>,
    pub tso_bilateral: BTreeMap<(usize, usize, usize), f64>,
    pub tso_pool: BTreeMap<(usize, usize), f64>,
    pub emissions: BTreeMap<usize, f64>,
    /// Slack of the inequality carbon cap held by the carbon market operator.
    pub carbon_slack: f64,
}

fn get3(m: &BTreeMap<(usize, usize, usize), f64>, k: (usize, usize, usize)) -> f64 {
    m.get(&k).copied().unwrap_or(0.0)
}

fn get2(m: &BTreeMap<(usize, usize), f64>, k: (usize, usize)) -> f64 {
    m.get(&k).copied().unwrap_or(0.0)
}

impl AgentView {
    /// Snapshot of an iterate and the current prices.
    pub fn from_iterate(s: &Scenario, sol: &PlanningSolution, prices: &PriceSet, penalties: Penalties) -> Self {
        let mut v = AgentView { prices: prices.clone(), penalties, ..Default::default() };
        v.trades = sol.trades_bilateral.clone();
        v.tso_bilateral = sol.tso_arbitrage_bilateral.clone();
        v.tso_pool = sol.tso_arbitrage_pool.clone();
        v.emissions = sol.emissions.clone();
        match s.market {
            MarketDesign::Pool => {
                for n in 0..s.num_prosumers() {
                    for t in 0..s.time_steps {
                        v.pool_trades.insert((n, t), sol.net_injection(s, n, t));
                    }
                }
            }
            MarketDesign::Mixed => v.pool_trades = sol.trades_pool.clone(),
            MarketDesign::P2p => {}
        }
        v
    }

    /// Emissions of everyone but `n`.
    pub fn others_emissions(&self, n: usize) -> f64 {
        self.emissions.iter().filter(|(m, _)| **m != n).map(|(_, e)| e).sum()
    }

    pub fn check(&self, s: &Scenario) -> Result<(), Error> {
        let np = s.num_prosumers();
        let nt = s.time_steps;
        let bad = |what: &str| Err(Error::View(what.to_string()));
        let q = &self.penalties;
        if ![q.trade, q.grid, q.pool, q.co2, q.proximal].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return bad("penalties must be finite and nonnegative");
        }
        let pair_ok = |&(n, m, t): &(usize, usize, usize)| n < np && t < nt && s.comm_graph[n].contains(&m);
        let node_ok = |&(n, t): &(usize, usize)| n < np && t < nt;
        let p = &self.prices;
        if !self.trades.keys().all(pair_ok)
            || !self.tso_bilateral.keys().all(pair_ok)
            || !p.trade_price.keys().all(pair_ok)
            || !p.grid_price.keys().all(pair_ok)
        {
            return bad("bilateral entry outside the communication graph or horizon");
        }
        if !self.pool_trades.keys().all(node_ok)
            || !self.tso_pool.keys().all(node_ok)
            || !p.nodal_price.keys().all(node_ok)
        {
            return bad("pool entry outside the prosumer set or horizon");
        }
        if self.emissions.keys().any(|&n| n >= np) {
            return bad("emission entry for an unknown prosumer");
        }
        if self.carbon_slack < 0.0 || !self.carbon_slack.is_finite() {
            return bad("carbon slack must be finite and nonnegative");
        }
        Ok(())
    }
}

/// Which agent a subproblem belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Agent {
    Prosumer(usize),
    Tso,
}

impl std::fmt::Display for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Agent::Prosumer(n) => write!(f, "prosumer {n}"),
            Agent::Tso => write!(f, "TSO"),
        }
    }
}

/// A local QP together with what is needed to read its solution back.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub agent: Agent,
    pub program: Program,
}

impl Subproblem {
    /// Write the agent's variables from `x` into `sol`.
    pub fn decode(&self, s: &Scenario, x: &[f64], sol: &mut PlanningSolution) {
        if let Agent::Prosumer(n) = self.agent {
            for t in 0..s.time_steps {
                for &m in &s.comm_graph[n] {
                    sol.trades_bilateral.remove(&(n, m, t));
                }
            }
        }
        crate::central::decode(&self.program.index, x, sol);
        if let (Agent::Prosumer(n), MarketDesign::Pool) = (self.agent, s.market) {
            for t in 0..s.time_steps {
                let v = sol.net_injection(s, n, t);
                sol.trades_pool.insert((n, t), v);
            }
        }
    }
}

fn prepare(s: &Scenario, n: Option<usize>, view: &AgentView, market: MarketDesign) -> Result<(), Error> {
    if s.market != market {
        return Err(Error::WrongMarket { expected: market, found: s.market });
    }
    if let Some(n) = n {
        if n >= s.num_prosumers() {
            return Err(Error::UnknownProsumer(n));
        }
    }
    view.check(s)
}

/// Price and penalty terms on `p[n,m,t]` for every partner of `n`.
fn add_bilateral_terms(b: &mut LpBuilder, s: &Scenario, n: usize, view: &AgentView) {
    let q = view.penalties;
    for &m in &s.comm_graph[n] {
        for t in 0..s.time_steps {
            let terms = trade_terms(b, n, m, t, 1.0);
            let lam = get3(&view.prices.trade_price, (n, m, t)) + get3(&view.prices.grid_price, (n, m, t));
            for &(c, v) in &terms {
                b.add_cost(c, lam * v);
            }
            b.square(q.trade, &terms, get3(&view.trades, (m, n, t)));
            b.square(q.grid, &terms, -get3(&view.tso_bilateral, (n, m, t)));
            b.square(q.proximal * (q.trade + q.grid), &terms, -get3(&view.trades, (n, m, t)));
        }
    }
}

fn add_carbon_terms(b: &mut LpBuilder, s: &Scenario, n: usize, view: &AgentView) {
    if !s.has_carbon_cap() {
        return;
    }
    let e = b.col(Var::Emission { prosumer: n });
    b.add_cost(e, view.prices.carbon_price);
    let slack = match s.carbon_cap_mode {
        CarbonCapMode::Inequality => view.carbon_slack,
        CarbonCapMode::Equality => 0.0,
    };
    let q = view.penalties;
    b.square(q.co2, &[(e, 1.0)], view.others_emissions(n) + slack - s.carbon_cap);
    // the cap row is shared by every prosumer, so its proximal weight grows
    // with the number of other blocks in it
    let others = (s.num_prosumers() - 1).max(1) as f64;
    b.square(q.proximal * others * q.co2, &[(e, 1.0)], -view.emissions.get(&n).copied().unwrap_or(0.0));
}

fn prosumer(s: &Scenario, n: usize, view: &AgentView, market: MarketDesign) -> Result<Subproblem, Error> {
    prepare(s, Some(n), view, market)?;
    let mut b = LpBuilder::new();
    add_prosumer(&mut b, s, n, market);
    if market != MarketDesign::Pool {
        add_bilateral_terms(&mut b, s, n, view);
    }
    let q = view.penalties;
    for t in 0..s.time_steps {
        let lam = get2(&view.prices.nodal_price, (n, t));
        let z = get2(&view.tso_pool, (n, t));
        let own = get2(&view.pool_trades, (n, t));
        match market {
            MarketDesign::Pool => {
                let d = s.prosumers[n].demand[t];
                let terms = supply_terms(&b, s, n, t);
                for &(c, v) in &terms {
                    b.add_cost(c, lam * v);
                }
                b.add_constant(-lam * d);
                b.square(q.pool, &terms, -d - z);
                b.square(q.proximal * q.pool, &terms, -d - own);
            }
            MarketDesign::Mixed => {
                let c = b.col(Var::PoolTrade { prosumer: n, t });
                b.add_cost(c, lam);
                b.square(q.pool, &[(c, 1.0)], -z);
                b.square(q.proximal * q.pool, &[(c, 1.0)], -own);
            }
            MarketDesign::P2p => {}
        }
    }
    add_carbon_terms(&mut b, s, n, view);
    Ok(Subproblem { agent: Agent::Prosumer(n), program: b.finish()? })
}

fn tso(s: &Scenario, view: &AgentView, market: MarketDesign) -> Result<Subproblem, Error> {
    prepare(s, None, view, market)?;
    let ptdf = build_ptdf(&s.lines, s.num_nodes, s.slack_node)?;
    let mut b = LpBuilder::new();
    add_tso(&mut b, s, &ptdf, market);
    let q = view.penalties;
    for t in 0..s.time_steps {
        if market != MarketDesign::Pool {
            for (n, m) in s.trade_pairs() {
                let z = b.col(Var::TsoBilateral { from: n, to: m, t });
                b.add_cost(z, -get3(&view.prices.grid_price, (n, m, t)));
                b.square(q.grid, &[(z, -1.0)], get3(&view.trades, (n, m, t)));
                b.square(q.proximal * q.grid, &[(z, 1.0)], -get3(&view.tso_bilateral, (n, m, t)));
            }
        }
        if market != MarketDesign::P2p {
            for n in 0..s.num_prosumers() {
                let z = b.col(Var::TsoPool { prosumer: n, t });
                b.add_cost(z, -get2(&view.prices.nodal_price, (n, t)));
                b.square(q.pool, &[(z, -1.0)], get2(&view.pool_trades, (n, t)));
                b.square(q.proximal * q.pool, &[(z, 1.0)], -get2(&view.tso_pool, (n, t)));
            }
        }
    }
    Ok(Subproblem { agent: Agent::Tso, program: b.finish()? })
}

pub fn prosumer_subproblem_p2p(s: &Scenario, n: usize, view: &AgentView) -> Result<Subproblem, Error> {
    prosumer(s, n, view, MarketDesign::P2p)
}

pub fn prosumer_subproblem_pool(s: &Scenario, n: usize, view: &AgentView) -> Result<Subproblem, Error> {
    prosumer(s, n, view, MarketDesign::Pool)
}

pub fn prosumer_subproblem_mixed(s: &Scenario, n: usize, view: &AgentView) -> Result<Subproblem, Error> {
    prosumer(s, n, view, MarketDesign::Mixed)
}

pub fn tso_subproblem_p2p(s: &Scenario, view: &AgentView) -> Result<Subproblem, Error> {
    tso(s, view, MarketDesign::P2p)
}

pub fn tso_subproblem_pool(s: &Scenario, view: &AgentView) -> Result<Subproblem, Error> {
    tso(s, view, MarketDesign::Pool)
}

pub fn tso_subproblem_mixed(s: &Scenario, view: &AgentView) -> Result<Subproblem, Error> {
    tso(s, view, MarketDesign::Mixed)
}

/// Subproblem of `agent` under the scenario's own market design.
pub fn subproblem(s: &Scenario, agent: Agent, view: &AgentView) -> Result<Subproblem, Error> {
    match agent {
        Agent::Prosumer(n) => prosumer(s, n, view, s.market),
        Agent::Tso => tso(s, view, s.market),
    }
}

/// Trade and grid price step from the bilateral residuals of an iterate.
pub fn update_p2p_prices(
    s: &Scenario,
    prices: &PriceSet,
    sol: &PlanningSolution,
    q_trade: f64,
    q_grid: f64,
) -> PriceSet {
    let mut out = prices.clone();
    for t in 0..s.time_steps {
        for (n, m) in s.trade_links() {
            let r = sol.trade(n, m, t) + sol.trade(m, n, t);
            let lam = get3(&prices.trade_price, (n, m, t)) + q_trade * r;
            out.trade_price.insert((n, m, t), lam);
            out.trade_price.insert((m, n, t), lam);
        }
        for (n, m) in s.trade_pairs() {
            let r = sol.trade(n, m, t) - sol.tso_bilateral(n, m, t);
            out.grid_price.insert((n, m, t), get3(&prices.grid_price, (n, m, t)) + q_grid * r);
        }
    }
    out
}

/// Pool residual of prosumer `n`: net injection (pool design) or pool
/// trade (mixed design) minus the TSO's pool arbitrage.
pub fn pool_residual(s: &Scenario, sol: &PlanningSolution, n: usize, t: usize) -> f64 {
    let traded = match s.market {
        MarketDesign::Pool => sol.net_injection(s, n, t),
        _ => sol.pool_trade(n, t),
    };
    traded - sol.tso_pool(n, t)
}

pub fn update_pool_price(s: &Scenario, prices: &PriceSet, sol: &PlanningSolution, q_pool: f64) -> PriceSet {
    let mut out = prices.clone();
    for n in 0..s.num_prosumers() {
        for t in 0..s.time_steps {
            let lam = get2(&prices.nodal_price, (n, t)) + q_pool * pool_residual(s, sol, n, t);
            out.nodal_price.insert((n, t), lam);
        }
    }
    out
}

/// Carbon price step; inequality caps keep the price nonnegative.
pub fn update_carbon_price(lambda: f64, emissions: &[f64], cap: f64, q: f64, mode: CarbonCapMode) -> f64 {
    let next = lambda + q * (emissions.iter().sum::<f64>() - cap);
    match mode {
        CarbonCapMode::Inequality => next.max(0.0),
        CarbonCapMode::Equality => next,
    }
}

/// Slack of an inequality cap minimizing the augmented Lagrangian for
/// the given emissions and price.
pub fn carbon_slack(lambda: f64, total_emissions: f64, cap: f64, q: f64) -> f64 {
    (cap - total_emissions - lambda / q).max(0.0)
}

/// Whether the symmetric matrix stored in `p` is positive semidefinite up
/// to a relative tolerance.
pub fn is_psd(p: &CscMatrix) -> bool {
    let n = p.ncols;
    let mut d = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for k in p.colptr[j]..p.colptr[j + 1] {
            d[(p.rowind[k], j)] = p.values[k];
        }
    }
    let d = d.symmetrize();
    let scale = d.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    d.symmetric_eigenvalues().iter().all(|&l| l >= -1e-9 * scale)
}

trait Symmetrize {
    fn symmetrize(self) -> Self;
}

impl Symmetrize for DMatrix<f64> {
    // only one triangle may be stored
    fn symmetrize(self) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                if i != j && self[(i, j)] == 0.0 {
                    out[(i, j)] = self[(j, i)];
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::central::solve_centralized;
    use crate::model::tests::triangle;
    use crate::model::{Line, Prosumer, Technology};
    use qpcore::{solve_qp, Settings};

    fn solve(sub: &Subproblem) -> Vec<f64> {
        let sol = solve_qp(&sub.program.qp, &Settings::interior_point()).unwrap();
        assert!(sol.is_optimal(), "{:?}", sol.status);
        sol.x
    }

    fn two_node(market: MarketDesign) -> Scenario {
        let mut s = Scenario {
            prosumers: vec![Prosumer::new("a", 0, 1, vec![0.0]), Prosumer::new("b", 1, 1, vec![0.0])],
            technologies: vec![Technology::generation("g", 10.0, 1.0, 1.0)],
            lines: vec![Line::new("l", 0, 1, 1.0)],
            num_nodes: 2,
            time_steps: 1,
            comm_graph: vec![],
            carbon_cap: f64::INFINITY,
            carbon_cap_mode: CarbonCapMode::Inequality,
            market,
            slack_node: 1,
        };
        s.complete_graph();
        s
    }

    #[test]
    fn zero_view_zero_demand() {
        let mut s = triangle();
        for (n, p) in s.prosumers.iter_mut().enumerate() {
            p.demand = vec![0.0; 2];
            for m in (0..3).filter(|&m| m != n) {
                p.preferences.insert(m, 0.1);
            }
        }
        let view = AgentView { penalties: Penalties::uniform(0.0), ..Default::default() };
        for market in MarketDesign::ALL {
            let s = s.with_market(market);
            for n in 0..3 {
                let sub = subproblem(&s, Agent::Prosumer(n), &view).unwrap();
                let x = solve(&sub);
                assert!(sub.program.objective(&x).abs() < 1e-7);
                assert!(x.iter().all(|v| v.abs() < 1e-6), "{market}");
            }
        }
    }

    #[test]
    fn trade_follows_frozen_partner() {
        // importing the partner's published 4 MWh covers demand for free
        let mut s = two_node(MarketDesign::P2p);
        s.prosumers[0].demand = vec![4.0];
        s.clear_preferences();
        let mut view = AgentView {
            penalties: Penalties { trade: 1.0, grid: 0.0, pool: 0.0, co2: 0.0, proximal: 0.0 },
            ..Default::default()
        };
        view.trades.insert((1, 0, 0), 4.0);
        let sub = prosumer_subproblem_p2p(&s, 0, &view).unwrap();
        let mut sol = PlanningSolution::default();
        sub.decode(&s, &solve(&sub), &mut sol);
        assert!((sol.trade(0, 1, 0) + 4.0).abs() < 1e-5, "{}", sol.trade(0, 1, 0));
        assert!(sol.gen_invest(0, 0).abs() < 1e-6);
    }

    #[test]
    fn tso_zero_case() {
        let mut s = two_node(MarketDesign::P2p);
        s.lines[0].capex_fom = 1.0;
        let sub = tso_subproblem_p2p(&s, &AgentView::default()).unwrap();
        let x = solve(&sub);
        let mut sol = PlanningSolution::default();
        sub.decode(&s, &x, &mut sol);
        assert!(sol.line_invest(0).abs() < 1e-6);
        assert!(sol.tso_arbitrage_bilateral.values().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn tso_passes_trades_through() {
        let mut s = two_node(MarketDesign::P2p);
        s.lines[0].existing_cap = 5.0;
        s.lines[0].capex_fom = 1.0;
        let mut view = AgentView::default();
        view.trades.insert((0, 1, 0), 2.0);
        view.trades.insert((1, 0, 0), -2.0);
        let sub = tso_subproblem_p2p(&s, &view).unwrap();
        let mut sol = PlanningSolution::default();
        sub.decode(&s, &solve(&sub), &mut sol);
        assert!((sol.tso_bilateral(0, 1, 0) - 2.0).abs() < 1e-6);
        assert!((sol.tso_bilateral(1, 0, 0) + 2.0).abs() < 1e-6);
        assert!(sol.line_invest(0).abs() < 1e-6);
    }

    #[test]
    fn tso_expands_congested_line() {
        // flow 3 on a line of capacity 1 at capex 0.1 per MW; only z[0,1]
        // moves the flow with the slack at node 1
        let mut s = two_node(MarketDesign::P2p);
        s.lines[0].existing_cap = 1.0;
        s.lines[0].capex_fom = 0.1;
        let mut view = AgentView::default();
        view.trades.insert((0, 1, 0), 3.0);
        view.trades.insert((1, 0, 0), -3.0);
        let sub = tso_subproblem_p2p(&s, &view).unwrap();
        let mut sol = PlanningSolution::default();
        sub.decode(&s, &solve(&sub), &mut sol);
        // stationarity: 0.1 = 3 − z → z = 2.9, k = 1.9
        assert!((sol.line_invest(0) - 1.9).abs() < 1e-5, "{}", sol.line_invest(0));
        assert!((sol.flow(0, 0) - 2.9).abs() < 1e-5);
        assert!((sol.tso_bilateral(1, 0, 0) + 3.0).abs() < 1e-5);
    }

    #[test]
    fn pool_tso_keeps_zero_sum() {
        let mut s = two_node(MarketDesign::Pool);
        s.lines[0].existing_cap = 10.0;
        let mut view = AgentView::default();
        view.pool_trades.insert((0, 0), 3.0);
        view.pool_trades.insert((1, 0), -1.0);
        let sub = tso_subproblem_pool(&s, &view).unwrap();
        let mut sol = PlanningSolution::default();
        sub.decode(&s, &solve(&sub), &mut sol);
        // projection of (3, -1) onto the zero-sum line
        assert!((sol.tso_pool(0, 0) - 2.0).abs() < 1e-6);
        assert!((sol.tso_pool(1, 0) + 2.0).abs() < 1e-6);
    }

    #[test]
    fn price_updates() {
        let s = two_node(MarketDesign::P2p);
        let mut sol = PlanningSolution::default();
        sol.trades_bilateral.insert((0, 1, 0), 0.5);
        let p0 = PriceSet::default();
        let p1 = update_p2p_prices(&s, &p0, &sol, 1.0, 1.0);
        assert_eq!(p1.trade_price[&(0, 1, 0)], 0.5);
        assert_eq!(p1.trade_price[&(1, 0, 0)], 0.5);
        assert_eq!(p1.grid_price[&(0, 1, 0)], 0.5);
        assert_eq!(p1.grid_price[&(1, 0, 0)], 0.0);
        let p2 = update_p2p_prices(&s, &p1, &sol, 1.0, 1.0);
        assert_eq!(p2.trade_price[&(0, 1, 0)], 1.0);
        sol.tso_arbitrage_bilateral.insert((0, 1, 0), 0.5);
        sol.tso_arbitrage_bilateral.insert((1, 0, 0), -0.5);
        sol.trades_bilateral.insert((1, 0, 0), -0.5);
        assert_eq!(update_p2p_prices(&s, &p2, &sol, 1.0, 1.0), p2);

        let s = two_node(MarketDesign::Mixed);
        let mut sol = PlanningSolution::default();
        sol.trades_pool.insert((0, 0), 1.5);
        sol.tso_arbitrage_pool.insert((0, 0), 1.0);
        let p = update_pool_price(&s, &PriceSet::default(), &sol, 2.0);
        assert_eq!(p.nodal_price[&(0, 0)], 1.0);
        assert_eq!(p.nodal_price[&(1, 0)], 0.0);

        assert_eq!(update_carbon_price(0.3, &[1.0, 2.0], 3.0, 5.0, CarbonCapMode::Inequality), 0.3);
        assert_eq!(update_carbon_price(0.0, &[2.0, 2.0], 3.0, 2.0, CarbonCapMode::Inequality), 2.0);
        let mut lam = 1.0;
        for _ in 0..5 {
            lam = update_carbon_price(lam, &[1.0], 3.0, 1.0, CarbonCapMode::Inequality);
        }
        assert_eq!(lam, 0.0);
        assert_eq!(update_carbon_price(1.0, &[1.0], 3.0, 1.0, CarbonCapMode::Equality), -1.0);
    }

    #[test]
    fn carbon_slack_matches_projection() {
        for &(lam, e, cap, q) in &[(0.5, 2.0, 3.0, 1.0), (2.0, 2.0, 3.0, 1.0), (0.0, 5.0, 3.0, 2.0)] {
            let s = carbon_slack(lam, e, cap, q);
            let direct = lam + q * (e + s - cap);
            assert!((direct - update_carbon_price(lam, &[e], cap, q, CarbonCapMode::Inequality)).abs() < 1e-12);
        }
    }

    #[test]
    fn subproblems_are_convex() {
        let mut view = AgentView { penalties: Penalties::uniform(3.0), ..Default::default() };
        view.emissions.insert(1, 2.0);
        for market in MarketDesign::ALL {
            let mut s = triangle().with_market(market);
            s.carbon_cap = 5.0;
            for agent in [Agent::Prosumer(0), Agent::Prosumer(2), Agent::Tso] {
                let sub = subproblem(&s, agent, &view).unwrap();
                assert!(is_psd(&sub.program.qp.p), "{market} {agent}");
            }
        }
        let mut p = qpcore::TripletBuilder::new(2, 2);
        p.push(0, 0, 1.0);
        p.push(0, 1, 2.0);
        p.push(1, 1, 1.0);
        assert!(!is_psd(&p.build()));
    }

    #[test]
    fn bad_views_are_rejected() {
        let s = triangle();
        let mut view = AgentView::default();
        view.trades.insert((0, 0, 0), 1.0);
        assert!(matches!(prosumer_subproblem_p2p(&s, 0, &view), Err(Error::View(_))));
        let mut view = AgentView::default();
        view.tso_pool.insert((0, 9), 1.0);
        assert!(matches!(tso_subproblem_p2p(&s, &view), Err(Error::View(_))));
        let view = AgentView { penalties: Penalties::uniform(-1.0), ..Default::default() };
        assert!(prosumer_subproblem_p2p(&s, 0, &view).is_err());
        assert!(matches!(prosumer_subproblem_p2p(&s, 7, &AgentView::default()), Err(Error::UnknownProsumer(7))));
        assert!(matches!(tso_subproblem_pool(&s, &AgentView::default()), Err(Error::WrongMarket { .. })));
    }

    #[test]
    fn mixed_extremes_match_pure_designs() {
        // with Φ = 1 the pool trade is pinned to zero and the objective
        // equals the p2p subproblem's at the same view
        let mut s = triangle();
        s.prosumers[0].existing_gen_cap[0] = 3.0;
        let central = solve_centralized(&s).unwrap();
        let view = AgentView::from_iterate(&s, &central, &central.prices, Penalties::default());
        let p2p = prosumer_subproblem_p2p(&s, 0, &view).unwrap();
        let mut mixed_s = s.with_market(MarketDesign::Mixed);
        mixed_s.set_phi(1.0);
        let mixed = prosumer_subproblem_mixed(&mixed_s, 0, &view).unwrap();
        let a = p2p.program.objective(&solve(&p2p));
        let b = mixed.program.objective(&solve(&mixed));
        assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{a} {b}");

        let pool_s = s.with_market(MarketDesign::Pool);
        let pool_c = solve_centralized(&pool_s).unwrap();
        let view = AgentView::from_iterate(&pool_s, &pool_c, &pool_c.prices, Penalties::default());
        let pool = prosumer_subproblem_pool(&pool_s, 0, &view).unwrap();
        mixed_s.set_phi(0.0);
        let mixed = prosumer_subproblem_mixed(&mixed_s, 0, &view).unwrap();
        let a = pool.program.objective(&solve(&pool));
        let b = mixed.program.objective(&solve(&mixed));
        assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()), "{a} {b}");
    }
}
