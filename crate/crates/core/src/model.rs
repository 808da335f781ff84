//! Domain types and scenario validation.
//!
//! Prosumers, technologies and lines are addressed by their position in the
//! scenario's lists. Per-technology data on a prosumer is stored in vectors
//! indexed by technology position.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TechKind {
    Generation,
    FossilGeneration,
    Storage,
}

impl TechKind {
    pub fn is_generation(self) -> bool {
        !matches!(self, TechKind::Storage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Technology {
    pub id: String,
    pub kind: TechKind,
    /// CapEx plus FOM per MW of conversion capacity.
    pub capex_fom: f64,
    pub annuity: f64,
    /// Variable cost per MWh produced (or discharged, for storage).
    pub vom: f64,
    pub charge_eff: f64,
    pub discharge_eff: f64,
    /// CapEx plus FOM per MWh of storage energy capacity.
    pub storage_capex_fom: f64,
    /// tCO2 per MWh, fossil technologies only.
    pub emission_factor: Option<f64>,
}

impl Technology {
    pub fn generation(id: &str, capex_fom: f64, annuity: f64, vom: f64) -> Self {
        Self {
            id: id.to_string(),
            kind: TechKind::Generation,
            capex_fom,
            annuity,
            vom,
            charge_eff: 1.0,
            discharge_eff: 1.0,
            storage_capex_fom: 0.0,
            emission_factor: None,
        }
    }

    pub fn fossil(id: &str, capex_fom: f64, annuity: f64, vom: f64, emission_factor: f64) -> Self {
        Self {
            kind: TechKind::FossilGeneration,
            emission_factor: Some(emission_factor),
            ..Self::generation(id, capex_fom, annuity, vom)
        }
    }

    pub fn storage(
        id: &str,
        capex_fom: f64,
        storage_capex_fom: f64,
        annuity: f64,
        vom: f64,
        charge_eff: f64,
        discharge_eff: f64,
    ) -> Self {
        Self {
            kind: TechKind::Storage,
            charge_eff,
            discharge_eff,
            storage_capex_fom,
            ..Self::generation(id, capex_fom, annuity, vom)
        }
    }

    pub fn emission(&self) -> f64 {
        self.emission_factor.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prosumer {
    pub id: String,
    pub node: usize,
    /// Existing conversion capacity per technology (MW).
    pub existing_gen_cap: Vec<f64>,
    /// Existing storage energy capacity per technology (MWh).
    pub existing_storage_energy: Vec<f64>,
    pub demand: Vec<f64>,
    /// Availability factor per technology and time step.
    pub availability: Vec<Vec<f64>>,
    /// Product differentiation cost per neighbour prosumer.
    pub preferences: BTreeMap<usize, f64>,
    /// Share of net injection traded bilaterally in the mixed design.
    pub phi: f64,
}

impl Prosumer {
    /// A prosumer with no existing capacity, full availability, no
    /// preferences and phi = 1.
    pub fn new(id: &str, node: usize, num_techs: usize, demand: Vec<f64>) -> Self {
        let t = demand.len();
        Self {
            id: id.to_string(),
            node,
            existing_gen_cap: vec![0.0; num_techs],
            existing_storage_energy: vec![0.0; num_techs],
            demand,
            availability: vec![vec![1.0; t]; num_techs],
            preferences: BTreeMap::new(),
            phi: 1.0,
        }
    }

    pub fn preference(&self, m: usize) -> f64 {
        self.preferences.get(&m).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from_node: usize,
    pub to_node: usize,
    pub reactance: f64,
    pub length: f64,
    pub existing_cap: f64,
    /// Cost per MW and km.
    pub capex_fom: f64,
    pub annuity: f64,
}

impl Line {
    pub fn new(id: &str, from_node: usize, to_node: usize, reactance: f64) -> Self {
        Self {
            id: id.to_string(),
            from_node,
            to_node,
            reactance,
            length: 1.0,
            existing_cap: 0.0,
            capex_fom: 0.0,
            annuity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MarketDesign {
    #[default]
    P2p,
    Pool,
    Mixed,
}

impl MarketDesign {
    pub const ALL: [MarketDesign; 3] = [MarketDesign::P2p, MarketDesign::Pool, MarketDesign::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            MarketDesign::P2p => "p2p",
            MarketDesign::Pool => "pool",
            MarketDesign::Mixed => "mixed",
        }
    }
}

impl std::fmt::Display for MarketDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MarketDesign {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p2p" => Ok(MarketDesign::P2p),
            "pool" => Ok(MarketDesign::Pool),
            "mixed" => Ok(MarketDesign::Mixed),
            other => Err(format!("unknown market design '{other}' (expected p2p, pool or mixed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CarbonCapMode {
    Equality,
    #[default]
    Inequality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub prosumers: Vec<Prosumer>,
    pub technologies: Vec<Technology>,
    pub lines: Vec<Line>,
    pub num_nodes: usize,
    pub time_steps: usize,
    /// Trading neighbours of each prosumer.
    pub comm_graph: Vec<BTreeSet<usize>>,
    /// Emission cap in tCO2; infinity means no cap.
    pub carbon_cap: f64,
    pub carbon_cap_mode: CarbonCapMode,
    pub market: MarketDesign,
    pub slack_node: usize,
}

impl Scenario {
    pub fn num_prosumers(&self) -> usize {
        self.prosumers.len()
    }

    pub fn has_carbon_cap(&self) -> bool {
        self.carbon_cap.is_finite()
    }

    /// Ordered trading pairs `(n, m)` with `m` a neighbour of `n`.
    pub fn trade_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (n, nb) in self.comm_graph.iter().enumerate() {
            for &m in nb {
                out.push((n, m));
            }
        }
        out
    }

    /// Unordered trading pairs `(n, m)` with `n < m`.
    pub fn trade_links(&self) -> Vec<(usize, usize)> {
        self.trade_pairs().into_iter().filter(|(n, m)| n < m).collect()
    }

    /// Prosumer located at each node.
    pub fn prosumer_at_node(&self) -> Vec<Option<usize>> {
        let mut at = vec![None; self.num_nodes];
        for (n, p) in self.prosumers.iter().enumerate() {
            if p.node < self.num_nodes {
                at[p.node] = Some(n);
            }
        }
        at
    }

    pub fn with_market(&self, market: MarketDesign) -> Scenario {
        Scenario { market, ..self.clone() }
    }

    /// Replace the trading graph by the complete graph.
    pub fn complete_graph(&mut self) {
        let n = self.prosumers.len();
        self.comm_graph = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
    }

    pub fn set_phi(&mut self, phi: f64) {
        for p in &mut self.prosumers {
            p.phi = phi;
        }
    }

    pub fn clear_preferences(&mut self) {
        for p in &mut self.prosumers {
            p.preferences.clear();
        }
    }

    /// Largest magnitude among demands and existing capacities, at least 1.
    pub fn energy_scale(&self) -> f64 {
        let mut s: f64 = 1.0;
        for p in &self.prosumers {
            s = p.demand.iter().chain(&p.existing_gen_cap).fold(s, |a, v| a.max(v.abs()));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PriceSet {
    pub trade_price: BTreeMap<(usize, usize, usize), f64>,
    pub grid_price: BTreeMap<(usize, usize, usize), f64>,
    pub nodal_price: BTreeMap<(usize, usize), f64>,
    pub carbon_price: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanningSolution {
    pub market: MarketDesign,
    /// (tech, prosumer) → MW
    pub gen_invest: BTreeMap<(usize, usize), f64>,
    /// (tech, prosumer) → MWh
    pub storage_invest: BTreeMap<(usize, usize), f64>,
    pub line_invest: BTreeMap<usize, f64>,
    /// (tech, prosumer, t)
    pub production: BTreeMap<(usize, usize, usize), f64>,
    pub charge: BTreeMap<(usize, usize, usize), f64>,
    pub discharge: BTreeMap<(usize, usize, usize), f64>,
    pub soc: BTreeMap<(usize, usize, usize), f64>,
    /// (n, m, t), positive when n sells to m
    pub trades_bilateral: BTreeMap<(usize, usize, usize), f64>,
    /// (n, t); the full net injection in the pool design
    pub trades_pool: BTreeMap<(usize, usize), f64>,
    pub tso_arbitrage_bilateral: BTreeMap<(usize, usize, usize), f64>,
    pub tso_arbitrage_pool: BTreeMap<(usize, usize), f64>,
    /// (line, t)
    pub flows: BTreeMap<(usize, usize), f64>,
    pub emissions: BTreeMap<usize, f64>,
    pub prices: PriceSet,
    pub objective: f64,
}

fn get2(m: &BTreeMap<(usize, usize), f64>, k: (usize, usize)) -> f64 {
    m.get(&k).copied().unwrap_or(0.0)
}

fn get3(m: &BTreeMap<(usize, usize, usize), f64>, k: (usize, usize, usize)) -> f64 {
    m.get(&k).copied().unwrap_or(0.0)
}

impl PlanningSolution {
    pub fn gen_invest(&self, i: usize, n: usize) -> f64 {
        get2(&self.gen_invest, (i, n))
    }
    pub fn storage_invest(&self, i: usize, n: usize) -> f64 {
        get2(&self.storage_invest, (i, n))
    }
    pub fn line_invest(&self, l: usize) -> f64 {
        self.line_invest.get(&l).copied().unwrap_or(0.0)
    }
    pub fn production(&self, i: usize, n: usize, t: usize) -> f64 {
        get3(&self.production, (i, n, t))
    }
    pub fn charge(&self, i: usize, n: usize, t: usize) -> f64 {
        get3(&self.charge, (i, n, t))
    }
    pub fn discharge(&self, i: usize, n: usize, t: usize) -> f64 {
        get3(&self.discharge, (i, n, t))
    }
    pub fn soc(&self, i: usize, n: usize, t: usize) -> f64 {
        get3(&self.soc, (i, n, t))
    }
    pub fn trade(&self, n: usize, m: usize, t: usize) -> f64 {
        get3(&self.trades_bilateral, (n, m, t))
    }
    pub fn pool_trade(&self, n: usize, t: usize) -> f64 {
        get2(&self.trades_pool, (n, t))
    }
    pub fn tso_bilateral(&self, n: usize, m: usize, t: usize) -> f64 {
        get3(&self.tso_arbitrage_bilateral, (n, m, t))
    }
    pub fn tso_pool(&self, n: usize, t: usize) -> f64 {
        get2(&self.tso_arbitrage_pool, (n, t))
    }
    pub fn flow(&self, l: usize, t: usize) -> f64 {
        get2(&self.flows, (l, t))
    }
    pub fn emission(&self, n: usize) -> f64 {
        self.emissions.get(&n).copied().unwrap_or(0.0)
    }

    /// Production plus storage discharge minus charge minus demand.
    pub fn net_injection(&self, s: &Scenario, n: usize, t: usize) -> f64 {
        let mut v = -s.prosumers[n].demand[t];
        for (i, tech) in s.technologies.iter().enumerate() {
            if tech.kind.is_generation() {
                v += self.production(i, n, t);
            } else {
                v += self.discharge(i, n, t) - self.charge(i, n, t);
            }
        }
        v
    }

    /// Injection the TSO schedules at prosumer `n`'s node.
    pub fn tso_injection(&self, s: &Scenario, n: usize, t: usize) -> f64 {
        let bi: f64 = s.comm_graph[n].iter().map(|&m| self.tso_bilateral(n, m, t)).sum();
        bi + self.tso_pool(n, t)
    }

    pub fn total_emissions(&self) -> f64 {
        self.emissions.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn check(&mut self, ok: bool, code: &str, message: impl FnOnce() -> String) {
        if !ok {
            self.0.push(Violation { code: code.to_string(), message: message() });
        }
    }
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

/// Every invariant violation of the scenario. An empty list means valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut c = Collector(Vec::new());
    let nt = s.technologies.len();
    let np = s.prosumers.len();

    c.check(s.time_steps >= 1, "TIME_STEPS", || "time horizon must contain at least one step".into());
    c.check(s.num_nodes >= 1, "NODE_COUNT", || "scenario must contain at least one node".into());

    for tech in &s.technologies {
        let id = &tech.id;
        c.check(tech.annuity.is_finite() && tech.annuity > 0.0, "ANNUITY_RANGE", || {
            format!("technology {id}: annuity {} must be positive", tech.annuity)
        });
        c.check(
            finite_nonneg(tech.capex_fom) && finite_nonneg(tech.vom) && finite_nonneg(tech.storage_capex_fom),
            "COST_NEGATIVE",
            || format!("technology {id}: costs must be finite and nonnegative"),
        );
        if tech.kind == TechKind::Storage {
            let ok = |e: f64| e > 0.0 && e <= 1.0;
            c.check(ok(tech.charge_eff) && ok(tech.discharge_eff), "EFFICIENCY_RANGE", || {
                format!("technology {id}: efficiencies must lie in (0, 1]")
            });
        }
        match (tech.kind, tech.emission_factor) {
            (TechKind::FossilGeneration, Some(w)) => {
                c.check(finite_nonneg(w), "EMISSION_FACTOR", || {
                    format!("technology {id}: emission factor {w} must be nonnegative")
                });
            }
            (TechKind::FossilGeneration, None) => c.check(false, "EMISSION_FACTOR", || {
                format!("technology {id}: fossil technology needs an emission factor")
            }),
            (_, Some(_)) => c.check(false, "EMISSION_FACTOR", || {
                format!("technology {id}: only fossil technologies carry an emission factor")
            }),
            (_, None) => {}
        }
    }

    let mut seen_nodes = BTreeMap::new();
    for (n, p) in s.prosumers.iter().enumerate() {
        let id = &p.id;
        c.check(p.node < s.num_nodes, "NODE_RANGE", || format!("prosumer {id}: node {} out of range", p.node));
        if let Some(other) = seen_nodes.insert(p.node, n) {
            c.check(false, "PROSUMER_PER_NODE", || {
                format!("prosumers {} and {id} share node {}", s.prosumers[other].id, p.node)
            });
        }
        c.check(p.existing_gen_cap.len() == nt && p.existing_storage_energy.len() == nt, "DIMENSION", || {
            format!("prosumer {id}: capacity vectors must have one entry per technology")
        });
        c.check(
            p.existing_gen_cap.iter().chain(&p.existing_storage_energy).all(|v| finite_nonneg(*v)),
            "CAPACITY_NEGATIVE",
            || format!("prosumer {id}: existing capacities must be nonnegative"),
        );
        c.check(p.demand.len() == s.time_steps, "DEMAND_LENGTH", || {
            format!("prosumer {id}: demand has {} steps, expected {}", p.demand.len(), s.time_steps)
        });
        c.check(p.demand.iter().all(|v| v.is_finite()), "NON_FINITE", || format!("prosumer {id}: demand not finite"));
        c.check(
            p.availability.len() == nt && p.availability.iter().all(|a| a.len() == s.time_steps),
            "DIMENSION",
            || format!("prosumer {id}: availability must cover every technology and time step"),
        );
        c.check(p.availability.iter().flatten().all(|v| (0.0..=1.0).contains(v)), "AVAILABILITY_RANGE", || {
            format!("prosumer {id}: availability values must lie in [0, 1]")
        });
        c.check(p.preferences.iter().all(|(&m, &v)| m < np && finite_nonneg(v)), "PREFERENCE_RANGE", || {
            format!("prosumer {id}: preferences must be nonnegative and refer to known prosumers")
        });
        c.check((0.0..=1.0).contains(&p.phi), "PHI_RANGE", || format!("prosumer {id}: phi {} outside [0, 1]", p.phi));
    }
    c.check(np == s.num_nodes, "PROSUMER_PER_NODE", || {
        format!("{} prosumers for {} nodes; exactly one per node required", np, s.num_nodes)
    });

    for line in &s.lines {
        let id = &line.id;
        c.check(line.from_node != line.to_node, "LINE_SELF_LOOP", || format!("line {id} connects a node to itself"));
        c.check(line.from_node < s.num_nodes && line.to_node < s.num_nodes, "NODE_RANGE", || {
            format!("line {id}: endpoint out of range")
        });
        c.check(line.reactance.is_finite() && line.reactance > 0.0, "REACTANCE_RANGE", || {
            format!("line {id}: reactance must be positive")
        });
        c.check(
            finite_nonneg(line.existing_cap) && finite_nonneg(line.length) && finite_nonneg(line.capex_fom),
            "LINE_DATA",
            || format!("line {id}: capacity, length and cost must be nonnegative"),
        );
        c.check(line.annuity.is_finite() && line.annuity > 0.0, "ANNUITY_RANGE", || {
            format!("line {id}: annuity must be positive")
        });
    }

    c.check(s.comm_graph.len() == np, "DIMENSION", || "trading graph needs one neighbour set per prosumer".into());
    for (n, nb) in s.comm_graph.iter().enumerate() {
        for &m in nb {
            if m >= np || m == n {
                c.check(false, "GRAPH_RANGE", || format!("prosumer {n}: invalid neighbour {m}"));
            } else if !s.comm_graph.get(m).is_some_and(|o| o.contains(&n)) {
                c.check(false, "GRAPH_ASYMMETRIC", || format!("{n} trades with {m} but not the reverse"));
            }
        }
    }

    c.check(s.carbon_cap >= 0.0 && !s.carbon_cap.is_nan(), "CARBON_CAP_RANGE", || {
        format!("carbon cap {} must be nonnegative", s.carbon_cap)
    });
    c.check(!(s.carbon_cap_mode == CarbonCapMode::Equality && s.carbon_cap.is_infinite()), "CARBON_CAP_RANGE", || {
        "equality mode needs a finite carbon cap".into()
    });
    c.check(s.slack_node < s.num_nodes, "SLACK_RANGE", || format!("slack node {} out of range", s.slack_node));

    if s.num_nodes > 0 && s.lines.iter().all(|l| l.from_node < s.num_nodes && l.to_node < s.num_nodes) {
        c.check(is_connected(s.num_nodes, &s.lines), "NETWORK_DISCONNECTED", || "network is not connected".into());
    }
    c.0
}

pub(crate) fn is_connected(num_nodes: usize, lines: &[Line]) -> bool {
    let mut adj = vec![Vec::new(); num_nodes];
    for l in lines {
        adj[l.from_node].push(l.to_node);
        adj[l.to_node].push(l.from_node);
    }
    let mut seen = vec![false; num_nodes];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen.into_iter().all(|v| v)
}

/// Investment, fixed and variable cost of prosumer `n`.
pub fn annualized_prosumer_cost(s: &Scenario, sol: &PlanningSolution, n: usize) -> Result<f64, Error> {
    if n >= s.prosumers.len() {
        return Err(Error::UnknownProsumer(n));
    }
    let mut cost = 0.0;
    for (i, tech) in s.technologies.iter().enumerate() {
        cost += tech.capex_fom * sol.gen_invest(i, n) / tech.annuity;
        if tech.kind == TechKind::Storage {
            cost += tech.storage_capex_fom * sol.storage_invest(i, n) / tech.annuity;
        }
        for t in 0..s.time_steps {
            let out = if tech.kind.is_generation() { sol.production(i, n, t) } else { sol.discharge(i, n, t) };
            cost += tech.vom * out;
        }
    }
    Ok(cost)
}

/// Annualized transmission investment cost.
pub fn tso_capex(s: &Scenario, sol: &PlanningSolution) -> f64 {
    s.lines.iter().enumerate().map(|(l, line)| line.length * line.capex_fom * sol.line_invest(l) / line.annuity).sum()
}

/// Σ I_{n,m}|p_{n,m,t}| over bilateral trades.
pub fn differentiation_cost(s: &Scenario, sol: &PlanningSolution, n: usize) -> f64 {
    let p = &s.prosumers[n];
    let mut c = 0.0;
    for &m in &s.comm_graph[n] {
        let w = p.preference(m);
        for t in 0..s.time_steps {
            c += w * sol.trade(n, m, t).abs();
        }
    }
    c
}
