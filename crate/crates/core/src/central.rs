//! Centralized planning programs for the three market designs, and the
//! assembly machinery shared with the agent subproblems.

use std::collections::HashMap;

use log::debug;
use qpcore::{CscMatrix, QpSolution, QuadraticProgram, Settings, Status};

use crate::model::{
    annualized_prosumer_cost, differentiation_cost, tso_capex, validate_scenario, CarbonCapMode, MarketDesign,
    PlanningSolution, Scenario, TechKind,
};
use crate::network::{build_ptdf, PtdfMatrix};
use crate::Error;

const INF: f64 = f64::INFINITY;

/// Symbolic identity of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    GenInvest {
        tech: usize,
        prosumer: usize,
    },
    StorageInvest {
        tech: usize,
        prosumer: usize,
    },
    Production {
        tech: usize,
        prosumer: usize,
        t: usize,
    },
    Charge {
        tech: usize,
        prosumer: usize,
        t: usize,
    },
    Discharge {
        tech: usize,
        prosumer: usize,
        t: usize,
    },
    Soc {
        tech: usize,
        prosumer: usize,
        t: usize,
    },
    Emission {
        prosumer: usize,
    },
    /// Positive part of the bilateral trade `from → to`.
    TradePos {
        from: usize,
        to: usize,
        t: usize,
    },
    TradeNeg {
        from: usize,
        to: usize,
        t: usize,
    },
    PoolTrade {
        prosumer: usize,
        t: usize,
    },
    TsoBilateral {
        from: usize,
        to: usize,
        t: usize,
    },
    TsoPool {
        prosumer: usize,
        t: usize,
    },
    Flow {
        line: usize,
        t: usize,
    },
    LineInvest {
        line: usize,
    },
}

impl std::fmt::Display for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Var::GenInvest { tech, prosumer } => write!(f, "k[{tech},{prosumer}]"),
            Var::StorageInvest { tech, prosumer } => write!(f, "ks[{tech},{prosumer}]"),
            Var::Production { tech, prosumer, t } => write!(f, "p[{tech},{prosumer},{t}]"),
            Var::Charge { tech, prosumer, t } => write!(f, "pin[{tech},{prosumer},{t}]"),
            Var::Discharge { tech, prosumer, t } => write!(f, "pout[{tech},{prosumer},{t}]"),
            Var::Soc { tech, prosumer, t } => write!(f, "soc[{tech},{prosumer},{t}]"),
            Var::Emission { prosumer } => write!(f, "e[{prosumer}]"),
            Var::TradePos { from, to, t } => write!(f, "trade+[{from},{to},{t}]"),
            Var::TradeNeg { from, to, t } => write!(f, "trade-[{from},{to},{t}]"),
            Var::PoolTrade { prosumer, t } => write!(f, "pool[{prosumer},{t}]"),
            Var::TsoBilateral { from, to, t } => write!(f, "z[{from},{to},{t}]"),
            Var::TsoPool { prosumer, t } => write!(f, "zpool[{prosumer},{t}]"),
            Var::Flow { line, t } => write!(f, "f[{line},{t}]"),
            Var::LineInvest { line } => write!(f, "kl[{line}]"),
        }
    }
}

/// Bijection between variables and columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariableIndex {
    vars: Vec<Var>,
    pos: HashMap<Var, usize>,
}

impl VariableIndex {
    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn get(&self, v: Var) -> Option<usize> {
        self.pos.get(&v).copied()
    }

    pub fn var(&self, col: usize) -> Var {
        self.vars[col]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn push(&mut self, v: Var) -> usize {
        let col = self.vars.len();
        let prev = self.pos.insert(v, col);
        assert!(prev.is_none(), "variable {v} added twice");
        self.vars.push(v);
        col
    }

    /// Value of `v` in `x`, zero if the variable is absent.
    pub fn value(&self, x: &[f64], v: Var) -> f64 {
        self.get(v).map_or(0.0, |c| x[c])
    }
}

/// Semantic meaning of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintTag {
    NonNegative(Var),
    /// Net injection equals the bilateral trades (Φ-share in the mixed design).
    Balance {
        prosumer: usize,
        t: usize,
    },
    /// Mixed design: remaining (1 − Φ) share equals the pool trade.
    PoolShare {
        prosumer: usize,
        t: usize,
    },
    GenLimit {
        tech: usize,
        prosumer: usize,
        t: usize,
    },
    SocDynamics {
        tech: usize,
        prosumer: usize,
        t: usize,
    },
    SocLimit {
        tech: usize,
        prosumer: usize,
        t: usize,
    },
    ChargeLimit {
        tech: usize,
        prosumer: usize,
        t: usize,
    },
    DischargeLimit {
        tech: usize,
        prosumer: usize,
        t: usize,
    },
    EmissionDef {
        prosumer: usize,
    },
    /// `p[a,b] + p[b,a] = 0`, one row per unordered pair with `a < b`.
    Reciprocity {
        a: usize,
        b: usize,
        t: usize,
    },
    /// `p[from,to] − z[from,to] = 0`
    Grid {
        from: usize,
        to: usize,
        t: usize,
    },
    /// Pool design: `net − z = 0`; mixed design: `p^pool − z^pool = 0`.
    PoolBalance {
        prosumer: usize,
        t: usize,
    },
    TsoZeroSum {
        t: usize,
    },
    FlowDef {
        line: usize,
        t: usize,
    },
    FlowLimitUpper {
        line: usize,
        t: usize,
    },
    FlowLimitLower {
        line: usize,
        t: usize,
    },
    CarbonCap,
}

/// Incremental assembly of a QP with tagged rows.
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    pub index: VariableIndex,
    pub tags: Vec<ConstraintTag>,
    q: Vec<f64>,
    p: Vec<(usize, usize, f64)>,
    a: Vec<(usize, usize, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    constant: f64,
}

/// A built program: `min ½xᵀPx + qᵀx + constant` over tagged rows.
#[derive(Debug, Clone)]
pub struct Program {
    pub qp: QuadraticProgram,
    pub index: VariableIndex,
    pub tags: Vec<ConstraintTag>,
    pub constant: f64,
}

impl Program {
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.qp.objective(x) + self.constant
    }

    pub fn row(&self, tag: ConstraintTag) -> Option<usize> {
        self.tags.iter().position(|t| *t == tag)
    }
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a variable with a linear cost; nonnegative variables get a
    /// bound row.
    pub fn var(&mut self, v: Var, cost: f64, nonneg: bool) -> usize {
        let col = self.index.push(v);
        self.q.push(cost);
        if nonneg {
            self.row(ConstraintTag::NonNegative(v), &[(col, 1.0)], 0.0, INF);
        }
        col
    }

    pub fn col(&self, v: Var) -> usize {
        self.index.get(v).unwrap_or_else(|| panic!("variable {v} not in program"))
    }

    pub fn add_cost(&mut self, col: usize, c: f64) {
        self.q[col] += c;
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    pub fn row(&mut self, tag: ConstraintTag, terms: &[(usize, f64)], lower: f64, upper: f64) -> usize {
        let r = self.tags.len();
        for &(c, v) in terms {
            self.a.push((r, c, v));
        }
        self.tags.push(tag);
        self.lower.push(lower);
        self.upper.push(upper);
        r
    }

    /// Add `(weight/2)·(Σ coef·x + offset)²` to the objective.
    pub fn square(&mut self, weight: f64, terms: &[(usize, f64)], offset: f64) {
        if weight == 0.0 {
            return;
        }
        for &(i, a) in terms {
            for &(j, b) in terms {
                self.p.push((i, j, weight * a * b));
            }
            self.q[i] += weight * offset * a;
        }
        self.constant += 0.5 * weight * offset * offset;
    }

    pub fn finish(self) -> Result<Program, Error> {
        let n = self.q.len();
        let m = self.lower.len();
        let p = CscMatrix::from_triplets(n, n, &self.p);
        let a = CscMatrix::from_triplets(m, n, &self.a);
        let names = self.index.vars.iter().map(|v| v.to_string()).collect();
        let qp = QuadraticProgram::new(p, self.q, a, self.lower, self.upper)?.with_names(names)?;
        Ok(Program { qp, index: self.index, tags: self.tags, constant: self.constant })
    }
}

/// Add prosumer `n`'s investment, dispatch, storage and emission variables
/// with their planning costs and local constraints.
pub fn add_prosumer_block(b: &mut LpBuilder, s: &Scenario, n: usize) {
    let p = &s.prosumers[n];
    let nt = s.time_steps;
    let mut emission_terms = Vec::new();
    for (i, tech) in s.technologies.iter().enumerate() {
        let k = b.var(Var::GenInvest { tech: i, prosumer: n }, tech.capex_fom / tech.annuity, true);
        let cap = p.existing_gen_cap[i];
        match tech.kind {
            TechKind::Generation | TechKind::FossilGeneration => {
                for t in 0..nt {
                    let x = b.var(Var::Production { tech: i, prosumer: n, t }, tech.vom, true);
                    let e = p.availability[i][t];
                    b.row(ConstraintTag::GenLimit { tech: i, prosumer: n, t }, &[(x, 1.0), (k, -e)], -INF, e * cap);
                    if tech.emission() != 0.0 {
                        emission_terms.push((x, -tech.emission()));
                    }
                }
            }
            TechKind::Storage => {
                let ks =
                    b.var(Var::StorageInvest { tech: i, prosumer: n }, tech.storage_capex_fom / tech.annuity, true);
                let energy = p.existing_storage_energy[i];
                let mut soc = Vec::with_capacity(nt);
                let mut pin = Vec::with_capacity(nt);
                let mut pout = Vec::with_capacity(nt);
                for t in 0..nt {
                    pin.push(b.var(Var::Charge { tech: i, prosumer: n, t }, 0.0, true));
                    pout.push(b.var(Var::Discharge { tech: i, prosumer: n, t }, tech.vom, true));
                    soc.push(b.var(Var::Soc { tech: i, prosumer: n, t }, 0.0, true));
                }
                for t in 0..nt {
                    // cyclic horizon: step 0 follows the last step
                    let prev = soc[(t + nt - 1) % nt];
                    let mut terms =
                        vec![(soc[t], 1.0), (pin[t], -tech.charge_eff), (pout[t], 1.0 / tech.discharge_eff)];
                    if prev != soc[t] {
                        terms.push((prev, -1.0));
                    } else {
                        terms[0].1 = 0.0;
                    }
                    b.row(ConstraintTag::SocDynamics { tech: i, prosumer: n, t }, &terms, 0.0, 0.0);
                    b.row(
                        ConstraintTag::SocLimit { tech: i, prosumer: n, t },
                        &[(soc[t], 1.0), (ks, -1.0)],
                        -INF,
                        energy,
                    );
                    b.row(
                        ConstraintTag::ChargeLimit { tech: i, prosumer: n, t },
                        &[(pin[t], 1.0), (k, -1.0)],
                        -INF,
                        cap,
                    );
                    b.row(
                        ConstraintTag::DischargeLimit { tech: i, prosumer: n, t },
                        &[(pout[t], 1.0), (k, -1.0)],
                        -INF,
                        cap,
                    );
                }
            }
        }
    }
    let e = b.var(Var::Emission { prosumer: n }, 0.0, false);
    emission_terms.push((e, 1.0));
    b.row(ConstraintTag::EmissionDef { prosumer: n }, &emission_terms, 0.0, 0.0);
}

/// Columns and coefficients of prosumer `n`'s net injection at `t`
/// (demand excluded).
pub fn supply_terms(b: &LpBuilder, s: &Scenario, n: usize, t: usize) -> Vec<(usize, f64)> {
    let mut terms = Vec::new();
    for (i, tech) in s.technologies.iter().enumerate() {
        if tech.kind.is_generation() {
            terms.push((b.col(Var::Production { tech: i, prosumer: n, t }), 1.0));
        } else {
            terms.push((b.col(Var::Discharge { tech: i, prosumer: n, t }), 1.0));
            terms.push((b.col(Var::Charge { tech: i, prosumer: n, t }), -1.0));
        }
    }
    terms
}

/// Split bilateral trade variables of prosumer `n` with their
/// differentiation cost.
pub fn add_trade_block(b: &mut LpBuilder, s: &Scenario, n: usize) {
    for &m in &s.comm_graph[n] {
        let w = s.prosumers[n].preference(m);
        for t in 0..s.time_steps {
            b.var(Var::TradePos { from: n, to: m, t }, w, true);
            b.var(Var::TradeNeg { from: n, to: m, t }, w, true);
        }
    }
}

pub fn trade_terms(b: &LpBuilder, n: usize, m: usize, t: usize, sign: f64) -> [(usize, f64); 2] {
    [(b.col(Var::TradePos { from: n, to: m, t }), sign), (b.col(Var::TradeNeg { from: n, to: m, t }), -sign)]
}

/// Local balance rows of prosumer `n` for the given design. The pool design
/// has none: its balance couples to the TSO.
pub fn add_prosumer_balance(b: &mut LpBuilder, s: &Scenario, n: usize, market: MarketDesign) {
    let p = &s.prosumers[n];
    for t in 0..s.time_steps {
        let supply = supply_terms(b, s, n, t);
        let d = p.demand[t];
        match market {
            MarketDesign::P2p => {
                let mut terms = supply;
                for &m in &s.comm_graph[n] {
                    terms.extend(trade_terms(b, n, m, t, -1.0));
                }
                b.row(ConstraintTag::Balance { prosumer: n, t }, &terms, d, d);
            }
            MarketDesign::Pool => {}
            MarketDesign::Mixed => {
                let phi = p.phi;
                let mut terms: Vec<_> = supply.iter().map(|&(c, v)| (c, phi * v)).collect();
                for &m in &s.comm_graph[n] {
                    terms.extend(trade_terms(b, n, m, t, -1.0));
                }
                b.row(ConstraintTag::Balance { prosumer: n, t }, &terms, phi * d, phi * d);
                let mut terms: Vec<_> = supply.iter().map(|&(c, v)| (c, (1.0 - phi) * v)).collect();
                terms.push((b.col(Var::PoolTrade { prosumer: n, t }), -1.0));
                let rhs = (1.0 - phi) * d;
                b.row(ConstraintTag::PoolShare { prosumer: n, t }, &terms, rhs, rhs);
            }
        }
    }
}

/// Full local block of prosumer `n` under `market`: planning block, trade
/// variables and balance rows.
pub fn add_prosumer(b: &mut LpBuilder, s: &Scenario, n: usize, market: MarketDesign) {
    add_prosumer_block(b, s, n);
    if market != MarketDesign::Pool {
        add_trade_block(b, s, n);
    }
    if market == MarketDesign::Mixed {
        for t in 0..s.time_steps {
            b.var(Var::PoolTrade { prosumer: n, t }, 0.0, false);
        }
    }
    add_prosumer_balance(b, s, n, market);
}

/// TSO variables (line investment, flows, arbitrage trades) and its rows.
pub fn add_tso(b: &mut LpBuilder, s: &Scenario, ptdf: &PtdfMatrix, market: MarketDesign) {
    for (l, line) in s.lines.iter().enumerate() {
        b.var(Var::LineInvest { line: l }, line.length * line.capex_fom / line.annuity, true);
    }
    let bilateral = market != MarketDesign::Pool;
    let pool = market != MarketDesign::P2p;
    for t in 0..s.time_steps {
        if bilateral {
            for (n, m) in s.trade_pairs() {
                b.var(Var::TsoBilateral { from: n, to: m, t }, 0.0, false);
            }
        }
        if pool {
            for n in 0..s.num_prosumers() {
                b.var(Var::TsoPool { prosumer: n, t }, 0.0, false);
            }
        }
        for l in 0..s.lines.len() {
            b.var(Var::Flow { line: l, t }, 0.0, false);
        }
    }
    for t in 0..s.time_steps {
        if pool {
            let terms: Vec<_> = (0..s.num_prosumers()).map(|n| (b.col(Var::TsoPool { prosumer: n, t }), 1.0)).collect();
            b.row(ConstraintTag::TsoZeroSum { t }, &terms, 0.0, 0.0);
        }
        for (l, line) in s.lines.iter().enumerate() {
            let f = b.col(Var::Flow { line: l, t });
            let mut terms = vec![(f, 1.0)];
            for (n, pr) in s.prosumers.iter().enumerate() {
                let h = ptdf.get(l, pr.node);
                if h == 0.0 {
                    continue;
                }
                if bilateral {
                    for &m in &s.comm_graph[n] {
                        terms.push((b.col(Var::TsoBilateral { from: n, to: m, t }), -h));
                    }
                }
                if pool {
                    terms.push((b.col(Var::TsoPool { prosumer: n, t }), -h));
                }
            }
            b.row(ConstraintTag::FlowDef { line: l, t }, &terms, 0.0, 0.0);
            let k = b.col(Var::LineInvest { line: l });
            b.row(ConstraintTag::FlowLimitUpper { line: l, t }, &[(f, 1.0), (k, -1.0)], -INF, line.existing_cap);
            b.row(ConstraintTag::FlowLimitLower { line: l, t }, &[(f, 1.0), (k, 1.0)], -line.existing_cap, INF);
        }
    }
}

/// Carbon cap row bounds for the scenario's mode, or `None` without a cap.
pub fn carbon_bounds(s: &Scenario) -> Option<(f64, f64)> {
    if !s.has_carbon_cap() {
        return None;
    }
    Some(match s.carbon_cap_mode {
        CarbonCapMode::Equality => (s.carbon_cap, s.carbon_cap),
        CarbonCapMode::Inequality => (-INF, s.carbon_cap),
    })
}

fn check(s: &Scenario, market: MarketDesign) -> Result<PtdfMatrix, Error> {
    if s.market != market {
        return Err(Error::WrongMarket { expected: market, found: s.market });
    }
    let v = validate_scenario(s);
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    build_ptdf(&s.lines, s.num_nodes, s.slack_node)
}

fn add_carbon_row(b: &mut LpBuilder, s: &Scenario) {
    if let Some((lo, hi)) = carbon_bounds(s) {
        let terms: Vec<_> = (0..s.num_prosumers()).map(|n| (b.col(Var::Emission { prosumer: n }), 1.0)).collect();
        b.row(ConstraintTag::CarbonCap, &terms, lo, hi);
    }
}

fn add_bilateral_coupling(b: &mut LpBuilder, s: &Scenario) {
    for t in 0..s.time_steps {
        for (n, m) in s.trade_links() {
            let mut terms = trade_terms(b, n, m, t, 1.0).to_vec();
            terms.extend(trade_terms(b, m, n, t, 1.0));
            b.row(ConstraintTag::Reciprocity { a: n, b: m, t }, &terms, 0.0, 0.0);
        }
        for (n, m) in s.trade_pairs() {
            let mut terms = trade_terms(b, n, m, t, 1.0).to_vec();
            terms.push((b.col(Var::TsoBilateral { from: n, to: m, t }), -1.0));
            b.row(ConstraintTag::Grid { from: n, to: m, t }, &terms, 0.0, 0.0);
        }
    }
}

pub fn build_p2p_centralized(s: &Scenario) -> Result<Program, Error> {
    let ptdf = check(s, MarketDesign::P2p)?;
    let mut b = LpBuilder::new();
    for n in 0..s.num_prosumers() {
        add_prosumer(&mut b, s, n, MarketDesign::P2p);
    }
    add_tso(&mut b, s, &ptdf, MarketDesign::P2p);
    add_bilateral_coupling(&mut b, s);
    add_carbon_row(&mut b, s);
    b.finish()
}

pub fn build_pool_centralized(s: &Scenario) -> Result<Program, Error> {
    let ptdf = check(s, MarketDesign::Pool)?;
    let mut b = LpBuilder::new();
    for n in 0..s.num_prosumers() {
        add_prosumer(&mut b, s, n, MarketDesign::Pool);
    }
    add_tso(&mut b, s, &ptdf, MarketDesign::Pool);
    for t in 0..s.time_steps {
        for n in 0..s.num_prosumers() {
            let mut terms = supply_terms(&b, s, n, t);
            terms.push((b.col(Var::TsoPool { prosumer: n, t }), -1.0));
            let d = s.prosumers[n].demand[t];
            b.row(ConstraintTag::PoolBalance { prosumer: n, t }, &terms, d, d);
        }
    }
    add_carbon_row(&mut b, s);
    b.finish()
}

pub fn build_mixed_centralized(s: &Scenario) -> Result<Program, Error> {
    let ptdf = check(s, MarketDesign::Mixed)?;
    let mut b = LpBuilder::new();
    for n in 0..s.num_prosumers() {
        add_prosumer(&mut b, s, n, MarketDesign::Mixed);
    }
    add_tso(&mut b, s, &ptdf, MarketDesign::Mixed);
    add_bilateral_coupling(&mut b, s);
    for t in 0..s.time_steps {
        for n in 0..s.num_prosumers() {
            let terms =
                [(b.col(Var::PoolTrade { prosumer: n, t }), 1.0), (b.col(Var::TsoPool { prosumer: n, t }), -1.0)];
            b.row(ConstraintTag::PoolBalance { prosumer: n, t }, &terms, 0.0, 0.0);
        }
    }
    add_carbon_row(&mut b, s);
    b.finish()
}

pub fn build_centralized(s: &Scenario) -> Result<Program, Error> {
    match s.market {
        MarketDesign::P2p => build_p2p_centralized(s),
        MarketDesign::Pool => build_pool_centralized(s),
        MarketDesign::Mixed => build_mixed_centralized(s),
    }
}

/// Copy the variables of `index` found in `x` into `sol`. Trades are
/// accumulated from their split parts.
pub fn decode(index: &VariableIndex, x: &[f64], sol: &mut PlanningSolution) {
    for (col, v) in index.vars().iter().enumerate() {
        let val = x[col];
        match *v {
            Var::GenInvest { tech, prosumer } => {
                sol.gen_invest.insert((tech, prosumer), val);
            }
            Var::StorageInvest { tech, prosumer } => {
                sol.storage_invest.insert((tech, prosumer), val);
            }
            Var::Production { tech, prosumer, t } => {
                sol.production.insert((tech, prosumer, t), val);
            }
            Var::Charge { tech, prosumer, t } => {
                sol.charge.insert((tech, prosumer, t), val);
            }
            Var::Discharge { tech, prosumer, t } => {
                sol.discharge.insert((tech, prosumer, t), val);
            }
            Var::Soc { tech, prosumer, t } => {
                sol.soc.insert((tech, prosumer, t), val);
            }
            Var::Emission { prosumer } => {
                sol.emissions.insert(prosumer, val);
            }
            Var::TradePos { from, to, t } => {
                *sol.trades_bilateral.entry((from, to, t)).or_insert(0.0) += val;
            }
            Var::TradeNeg { from, to, t } => {
                *sol.trades_bilateral.entry((from, to, t)).or_insert(0.0) -= val;
            }
            Var::PoolTrade { prosumer, t } => {
                sol.trades_pool.insert((prosumer, t), val);
            }
            Var::TsoBilateral { from, to, t } => {
                sol.tso_arbitrage_bilateral.insert((from, to, t), val);
            }
            Var::TsoPool { prosumer, t } => {
                sol.tso_arbitrage_pool.insert((prosumer, t), val);
            }
            Var::Flow { line, t } => {
                sol.flows.insert((line, t), val);
            }
            Var::LineInvest { line } => {
                sol.line_invest.insert(line, val);
            }
        }
    }
}

/// In the pool design the prosumer's pool trade is its whole net injection.
pub fn fill_pool_trades(s: &Scenario, sol: &mut PlanningSolution) {
    if s.market == MarketDesign::Pool {
        for n in 0..s.num_prosumers() {
            for t in 0..s.time_steps {
                let v = sol.net_injection(s, n, t);
                sol.trades_pool.insert((n, t), v);
            }
        }
    }
}

/// Σ f_n + g + Σ I|p| evaluated at a solution.
pub fn system_objective(s: &Scenario, sol: &PlanningSolution) -> f64 {
    let mut total = tso_capex(s, sol);
    for n in 0..s.num_prosumers() {
        total += annualized_prosumer_cost(s, sol, n).unwrap_or(0.0) + differentiation_cost(s, sol, n);
    }
    total
}

/// Settings for centralized solves.
pub fn central_settings() -> Settings {
    Settings::interior_point()
}

fn solve_program(prog: &Program) -> Result<QpSolution, Error> {
    let sol = qpcore::solve_qp(&prog.qp, &central_settings())?;
    debug!(
        "centralized solve: {} after {} iterations, objective {:.9}",
        sol.status.as_str(),
        sol.iterations,
        sol.objective
    );
    if sol.status == Status::Optimal {
        return Ok(sol);
    }
    // fall back to the splitting method before giving up
    let alt = qpcore::solve_qp(&prog.qp, &Settings::default())?;
    match alt.status {
        Status::Optimal => Ok(alt),
        Status::PrimalInfeasible => Err(Error::Infeasible),
        Status::DualInfeasible => Err(Error::Unbounded),
        Status::MaxIter => match sol.status {
            Status::PrimalInfeasible => Err(Error::Infeasible),
            Status::DualInfeasible => Err(Error::Unbounded),
            _ => Err(Error::NotConverged(format!(
                "primal residual {:.2e}, dual residual {:.2e}",
                alt.primal_residual, alt.dual_residual
            ))),
        },
    }
}

/// Solve the program and read prices from the duals of the coupling rows.
pub fn solve_program_to_solution(s: &Scenario, prog: &Program) -> Result<PlanningSolution, Error> {
    let qsol = solve_program(prog)?;
    let mut sol = PlanningSolution { market: s.market, ..Default::default() };
    decode(&prog.index, &qsol.x, &mut sol);
    fill_pool_trades(s, &mut sol);
    for (r, tag) in prog.tags.iter().enumerate() {
        let y = qsol.y[r];
        match *tag {
            ConstraintTag::Reciprocity { a, b, t } => {
                sol.prices.trade_price.insert((a, b, t), y);
                sol.prices.trade_price.insert((b, a, t), y);
            }
            ConstraintTag::Grid { from, to, t } => {
                sol.prices.grid_price.insert((from, to, t), y);
            }
            ConstraintTag::PoolBalance { prosumer, t } => {
                sol.prices.nodal_price.insert((prosumer, t), y);
            }
            ConstraintTag::CarbonCap => sol.prices.carbon_price = y,
            _ => {}
        }
    }
    if s.carbon_cap_mode == CarbonCapMode::Inequality {
        sol.prices.carbon_price = sol.prices.carbon_price.max(0.0);
    }
    sol.objective = prog.objective(&qsol.x);
    Ok(sol)
}

pub fn solve_centralized(s: &Scenario) -> Result<PlanningSolution, Error> {
    let prog = build_centralized(s)?;
    solve_program_to_solution(s, &prog)
}

/// Largest violation of each physical constraint family.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FeasibilityAudit {
    pub balance: f64,
    pub nonnegativity: f64,
    pub generation_limit: f64,
    pub storage: f64,
    pub flow_definition: f64,
    pub flow_limit: f64,
    pub reciprocity: f64,
    pub grid_coupling: f64,
    pub zero_sum: f64,
    pub emission_definition: f64,
    pub carbon: f64,
}

impl FeasibilityAudit {
    pub fn max(&self) -> f64 {
        [
            self.balance,
            self.nonnegativity,
            self.generation_limit,
            self.storage,
            self.flow_definition,
            self.flow_limit,
            self.reciprocity,
            self.grid_coupling,
            self.zero_sum,
            self.emission_definition,
            self.carbon,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Re-check a solution against the raw constraints of its design,
/// independently of any assembled program.
pub fn audit_feasibility(s: &Scenario, sol: &PlanningSolution) -> Result<FeasibilityAudit, Error> {
    let ptdf = build_ptdf(&s.lines, s.num_nodes, s.slack_node)?;
    let mut a = FeasibilityAudit::default();
    let up = |a: &mut f64, v: f64| *a = a.max(v);
    let market = s.market;
    let np = s.num_prosumers();
    for n in 0..np {
        let p = &s.prosumers[n];
        let mut emis = 0.0;
        for (i, tech) in s.technologies.iter().enumerate() {
            let k = sol.gen_invest(i, n);
            up(&mut a.nonnegativity, -k);
            let cap = k + p.existing_gen_cap[i];
            for t in 0..s.time_steps {
                if tech.kind.is_generation() {
                    let x = sol.production(i, n, t);
                    up(&mut a.nonnegativity, -x);
                    up(&mut a.generation_limit, x - p.availability[i][t] * cap);
                    emis += tech.emission() * x;
                } else {
                    let ks = sol.storage_invest(i, n);
                    up(&mut a.nonnegativity, -ks);
                    let (pin, pout, soc) = (sol.charge(i, n, t), sol.discharge(i, n, t), sol.soc(i, n, t));
                    let prev = sol.soc(i, n, (t + s.time_steps - 1) % s.time_steps);
                    up(&mut a.nonnegativity, -pin.min(pout).min(soc));
                    up(&mut a.storage, (soc - prev - tech.charge_eff * pin + pout / tech.discharge_eff).abs());
                    up(&mut a.storage, soc - ks - p.existing_storage_energy[i]);
                    up(&mut a.storage, pin - cap);
                    up(&mut a.storage, pout - cap);
                }
            }
        }
        up(&mut a.emission_definition, (sol.emission(n) - emis).abs());
        for t in 0..s.time_steps {
            let net = sol.net_injection(s, n, t);
            let bi: f64 = s.comm_graph[n].iter().map(|&m| sol.trade(n, m, t)).sum();
            match market {
                MarketDesign::P2p => up(&mut a.balance, (net - bi).abs()),
                MarketDesign::Pool => up(&mut a.balance, (net - sol.tso_pool(n, t)).abs()),
                MarketDesign::Mixed => {
                    up(&mut a.balance, (p.phi * net - bi).abs());
                    up(&mut a.balance, ((1.0 - p.phi) * net - sol.pool_trade(n, t)).abs());
                    up(&mut a.balance, (sol.pool_trade(n, t) - sol.tso_pool(n, t)).abs());
                }
            }
            if market != MarketDesign::Pool {
                for &m in &s.comm_graph[n] {
                    up(&mut a.reciprocity, (sol.trade(n, m, t) + sol.trade(m, n, t)).abs());
                    up(&mut a.grid_coupling, (sol.trade(n, m, t) - sol.tso_bilateral(n, m, t)).abs());
                }
            }
        }
    }
    for t in 0..s.time_steps {
        if market != MarketDesign::P2p {
            let z: f64 = (0..np).map(|n| sol.tso_pool(n, t)).sum();
            up(&mut a.zero_sum, z.abs());
        }
        let mut inj = vec![0.0; s.num_nodes];
        for (n, pr) in s.prosumers.iter().enumerate() {
            inj[pr.node] += sol.tso_injection(s, n, t);
        }
        for (l, line) in s.lines.iter().enumerate() {
            let f = sol.flow(l, t);
            let expect: f64 = (0..s.num_nodes).map(|v| ptdf.get(l, v) * inj[v]).sum();
            up(&mut a.flow_definition, (f - expect).abs());
            up(&mut a.flow_limit, f.abs() - sol.line_invest(l) - line.existing_cap);
        }
    }
    for l in 0..s.lines.len() {
        up(&mut a.nonnegativity, -sol.line_invest(l));
    }
    if let Some((lo, hi)) = carbon_bounds(s) {
        let e = sol.total_emissions();
        up(&mut a.carbon, lo - e);
        up(&mut a.carbon, e - hi);
    }
    Ok(a)
}
