//! Per-agent cost accounting of a solved plan and money-conservation audits.
//!
//! Cash entries follow the price convention of the crate: a prosumer pays
//! `λ·x` for every coupled quantity `x` it controls, so a negative entry is
//! income. The TSO collects `λ·z` on its arbitrage trades and the carbon
//! payments go to a government line.

use serde::{Deserialize, Serialize};

use crate::model::{annualized_prosumer_cost, differentiation_cost, tso_capex};
use crate::{Error, MarketDesign, PlanningSolution, Scenario};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProsumerLine {
    pub id: String,
    /// Investment, fixed and variable cost.
    pub planning_cost: f64,
    /// Bilateral plus pool energy payments.
    pub trade_cash: f64,
    pub bilateral_cash: f64,
    pub pool_cash: f64,
    pub grid_cost: f64,
    pub differentiation_cost: f64,
    pub carbon_cost: f64,
    pub total: f64,
}

impl ProsumerLine {
    fn close(&mut self) {
        self.trade_cash = self.bilateral_cash + self.pool_cash;
        self.total =
            self.planning_cost + self.trade_cash + self.grid_cost + self.differentiation_cost + self.carbon_cost;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TsoLine {
    pub capex: f64,
    pub grid_revenue: f64,
    pub pool_revenue: f64,
    pub congestion_revenue: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GovernmentLine {
    pub carbon_price: f64,
    /// `None` without a cap.
    pub cap: Option<f64>,
    pub carbon_revenue: f64,
    pub total: f64,
}

/// Money moved between agents through one price. `paid` is the sum of
/// payer entries, `received` the sum of receiver entries.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Transfer {
    pub channel: String,
    pub paid: f64,
    pub received: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SettlementReport {
    pub market: MarketDesign,
    pub prosumers: Vec<ProsumerLine>,
    pub tso: TsoLine,
    pub government: GovernmentLine,
    pub transfers: Vec<Transfer>,
    /// Sum of all agent totals including the government line.
    pub system_total: f64,
}

impl SettlementReport {
    /// System total with the intra-system transfers taken out; equals the
    /// resource cost of the plan.
    pub fn reconciled_total(&self) -> f64 {
        let prosumers: f64 = self.prosumers.iter().map(|p| p.total).sum();
        let moved: f64 = self.transfers.iter().map(|t| t.paid - t.received).sum();
        prosumers + self.tso.total - moved
    }

    /// Largest absolute entry, at least 1.
    pub fn scale(&self) -> f64 {
        let mut s: f64 = 1.0;
        for p in &self.prosumers {
            for v in
                [p.planning_cost, p.bilateral_cash, p.pool_cash, p.grid_cost, p.differentiation_cost, p.carbon_cost]
            {
                s = s.max(v.abs());
            }
        }
        for v in [self.tso.capex, self.tso.grid_revenue, self.tso.pool_revenue, self.government.carbon_revenue] {
            s = s.max(v.abs());
        }
        s
    }

    /// One row per agent with a common column set.
    pub fn to_csv(&self) -> String {
        // adding zero turns -0 into 0
        let row = |agent: &str, v: [f64; 8]| {
            let cells: Vec<String> = v.iter().map(|x| (x + 0.0).to_string()).collect();
            format!("{agent},{}\n", cells.join(","))
        };
        let mut out = String::from(
            "agent,planning_cost,trade_cash,grid_cost,differentiation_cost,carbon_cost,capex,congestion_revenue,total\n",
        );
        for p in &self.prosumers {
            out += &row(
                &p.id,
                [p.planning_cost, p.trade_cash, p.grid_cost, p.differentiation_cost, p.carbon_cost, 0.0, 0.0, p.total],
            );
        }
        let t = &self.tso;
        out += &row("tso", [0.0, 0.0, 0.0, 0.0, 0.0, t.capex, t.congestion_revenue, t.total]);
        let g = &self.government;
        out += &row("government", [0.0, 0.0, 0.0, 0.0, -g.carbon_revenue, 0.0, 0.0, g.total]);
        out.push_str(&format!("system,,,,,,,,{}\n", self.system_total + 0.0));
        out
    }
}

fn require_prices(s: &Scenario, sol: &PlanningSolution) -> Result<(), Error> {
    if sol.market != s.market {
        return Err(Error::WrongMarket { expected: s.market, found: sol.market });
    }
    let p = &sol.prices;
    for t in 0..s.time_steps {
        if s.market != MarketDesign::Pool {
            for (n, m) in s.trade_pairs() {
                if !p.trade_price.contains_key(&(n, m, t)) || !p.grid_price.contains_key(&(n, m, t)) {
                    return Err(Error::MissingPrices(format!("no trade or grid price for ({n}, {m}) at step {t}")));
                }
            }
        }
        if s.market != MarketDesign::P2p {
            for n in 0..s.num_prosumers() {
                if !p.nodal_price.contains_key(&(n, t)) {
                    return Err(Error::MissingPrices(format!("no pool price for prosumer {n} at step {t}")));
                }
            }
        }
    }
    Ok(())
}

/// Split a solved plan into per-agent costs at its prices.
pub fn settle(s: &Scenario, sol: &PlanningSolution) -> Result<SettlementReport, Error> {
    require_prices(s, sol)?;
    let prices = &sol.prices;
    let bilateral = s.market != MarketDesign::Pool;
    let pool = s.market != MarketDesign::P2p;
    let lam_co2 = if s.has_carbon_cap() { prices.carbon_price } else { 0.0 };

    let mut report = SettlementReport { market: s.market, ..Default::default() };
    let mut tso = TsoLine { capex: tso_capex(s, sol), ..Default::default() };
    for (n, p) in s.prosumers.iter().enumerate() {
        let mut line = ProsumerLine {
            id: p.id.clone(),
            planning_cost: annualized_prosumer_cost(s, sol, n)?,
            differentiation_cost: differentiation_cost(s, sol, n),
            carbon_cost: lam_co2 * sol.emission(n),
            ..Default::default()
        };
        for t in 0..s.time_steps {
            if bilateral {
                for &m in &s.comm_graph[n] {
                    let x = sol.trade(n, m, t);
                    line.bilateral_cash += prices.trade_price[&(n, m, t)] * x;
                    let g = prices.grid_price[&(n, m, t)];
                    line.grid_cost += g * x;
                    tso.grid_revenue += g * sol.tso_bilateral(n, m, t);
                }
            }
            if pool {
                let lam = prices.nodal_price[&(n, t)];
                let traded = match s.market {
                    MarketDesign::Pool => sol.net_injection(s, n, t),
                    _ => sol.pool_trade(n, t),
                };
                line.pool_cash += lam * traded;
                tso.pool_revenue += lam * sol.tso_pool(n, t);
            }
        }
        line.close();
        report.prosumers.push(line);
    }
    tso.congestion_revenue = tso.grid_revenue + tso.pool_revenue;
    tso.total = tso.capex - tso.congestion_revenue;

    let carbon_paid: f64 = report.prosumers.iter().map(|p| p.carbon_cost).sum();
    report.government = GovernmentLine {
        carbon_price: lam_co2,
        cap: s.has_carbon_cap().then_some(s.carbon_cap),
        carbon_revenue: carbon_paid,
        total: -carbon_paid,
    };
    let sum = |f: fn(&ProsumerLine) -> f64| report.prosumers.iter().map(f).sum::<f64>();
    report.transfers = vec![
        Transfer { channel: "bilateral".into(), paid: sum(|p| p.bilateral_cash), received: 0.0 },
        Transfer { channel: "grid".into(), paid: sum(|p| p.grid_cost), received: tso.grid_revenue },
        Transfer { channel: "pool".into(), paid: sum(|p| p.pool_cash), received: tso.pool_revenue },
        Transfer { channel: "carbon".into(), paid: carbon_paid, received: carbon_paid },
    ];
    report.tso = tso;
    report.system_total = sum(|p| p.total) + report.tso.total + report.government.total;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub check: String,
    pub imbalance: f64,
    pub message: String,
}

/// Money-conservation checks. An empty list means the books close.
pub fn audit_money(r: &SettlementReport) -> Vec<Finding> {
    let tol = 1e-4 * r.scale();
    let mut out = Vec::new();
    let mut check = |name: &str, imbalance: f64, what: &str| {
        if !(imbalance.abs() <= tol) {
            out.push(Finding {
                check: name.to_string(),
                imbalance,
                message: format!("{what} off by {imbalance:.6e} (tolerance {tol:.1e})"),
            });
        }
    };
    let sum = |f: fn(&ProsumerLine) -> f64| r.prosumers.iter().map(f).sum::<f64>();
    check("bilateral", sum(|p| p.bilateral_cash), "bilateral payments between prosumers");
    check("grid", sum(|p| p.grid_cost) - r.tso.grid_revenue, "grid payments versus TSO grid receipts");
    check("pool", sum(|p| p.pool_cash) - r.tso.pool_revenue, "pool payments versus TSO pool receipts");
    let g = &r.government;
    if let Some(cap) = g.cap {
        if g.carbon_price > 0.0 {
            check("carbon", sum(|p| p.carbon_cost) - g.carbon_price * cap, "carbon payments versus price times cap");
        }
    }
    out
}
