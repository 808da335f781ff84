//! Scenario fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use gridplan::model::{Line, Prosumer, Technology};
use gridplan::{CarbonCapMode, MarketDesign, Scenario};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const T: usize = 24;
/// Carbon cap of the binding-cap variant, about half its uncapped emissions.
pub const SUITE_CAP: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    NoStorage,
    Storage,
    BindingCap,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::NoStorage, Variant::Storage, Variant::BindingCap];

    pub fn name(self) -> &'static str {
        match self {
            Variant::NoStorage => "no-storage",
            Variant::Storage => "storage",
            Variant::BindingCap => "binding-cap",
        }
    }
}

fn solar_profile(scale: f64) -> Vec<f64> {
    (0..T)
        .map(|t| {
            let h = t as f64;
            if (6.0..=18.0).contains(&h) {
                scale * (PI * (h - 6.0) / 12.0).sin()
            } else {
                0.0
            }
        })
        .collect()
}

fn wind_profile(phase: f64) -> Vec<f64> {
    (0..T).map(|t| 0.45 + 0.35 * (2.0 * PI * t as f64 / T as f64 + phase).cos()).collect()
}

fn demand_profile(base: f64, peak: f64, peak_hour: f64) -> Vec<f64> {
    (0..T)
        .map(|t| {
            let d = (t as f64 - peak_hour).abs().min(T as f64 - (t as f64 - peak_hour).abs());
            base + peak * (-d * d / 18.0).exp()
        })
        .collect()
}

/// Three prosumers on a meshed triangle, one day at hourly resolution.
pub fn suite_scenario(variant: Variant, market: MarketDesign) -> Scenario {
    let solar = Technology::generation("solar", 400.0, 20.0, 0.5);
    let wind = Technology::generation("wind", 520.0, 20.0, 0.8);
    // cheap gas so that the cap has something to bind
    let gas_vom = if variant == Variant::BindingCap { 4.0 } else { 30.0 };
    let gas = Technology::fossil("gas", 300.0, 20.0, gas_vom, 0.45);
    let battery = Technology::storage("battery", 60.0, 90.0, 20.0, 0.2, 0.95, 0.92);
    let techs = match variant {
        Variant::Storage => vec![solar, gas, battery],
        _ => vec![solar, wind, gas],
    };
    let demand = [demand_profile(4.0, 6.0, 19.0), demand_profile(6.0, 3.0, 12.0), demand_profile(3.0, 5.0, 8.0)];
    let solar_scale = [0.95, 0.7, 0.55];
    let existing_gas = [0.0, 3.0, 6.0];
    let mut prosumers = Vec::new();
    for n in 0..3 {
        let mut p = Prosumer::new(&format!("p{n}"), n, techs.len(), demand[n].clone());
        for (i, tech) in techs.iter().enumerate() {
            p.availability[i] = match tech.id.as_str() {
                "solar" => solar_profile(solar_scale[n]),
                "wind" => wind_profile(n as f64 * 1.7).iter().map(|v| v * (0.6 + 0.2 * n as f64)).collect(),
                _ => vec![1.0; T],
            };
            if tech.id == "gas" {
                p.existing_gen_cap[i] = existing_gas[n];
            }
            if tech.id == "solar" {
                p.existing_gen_cap[i] = 1.0 + n as f64;
            }
        }
        for m in 0..3 {
            if m != n {
                p.preferences.insert(m, 0.05 + 0.04 * (n * 3 + m) as f64);
            }
        }
        p.phi = 0.6;
        prosumers.push(p);
    }
    let mut lines = vec![Line::new("l01", 0, 1, 0.10), Line::new("l12", 1, 2, 0.15), Line::new("l02", 0, 2, 0.20)];
    for (l, line) in lines.iter_mut().enumerate() {
        line.existing_cap = [2.0, 1.5, 1.0][l];
        line.length = [60.0, 80.0, 100.0][l];
        line.capex_fom = 1.5;
        line.annuity = 20.0;
    }
    let mut s = Scenario {
        prosumers,
        technologies: techs,
        lines,
        num_nodes: 3,
        time_steps: T,
        comm_graph: Vec::new(),
        carbon_cap: f64::INFINITY,
        carbon_cap_mode: CarbonCapMode::Inequality,
        market,
        slack_node: 0,
    };
    s.complete_graph();
    if variant == Variant::BindingCap {
        s.carbon_cap = SUITE_CAP;
    }
    s
}

/// Two nodes: a fossil plant with existing capacity at node 0 and cheap
/// but expensive-to-build renewables at node 1.
pub fn carbon_scenario(market: MarketDesign, cap: f64) -> Scenario {
    let techs =
        vec![Technology::fossil("coal", 200.0, 20.0, 10.0, 0.9), Technology::generation("wind", 800.0, 20.0, 1.0)];
    let mut a = Prosumer::new("fossil", 0, 2, demand_profile(2.0, 1.0, 18.0));
    a.existing_gen_cap[0] = 10.0;
    a.availability[1] = vec![0.0; T];
    let mut b = Prosumer::new("green", 1, 2, demand_profile(3.0, 2.0, 13.0));
    b.availability[0] = vec![0.0; T];
    b.availability[1] = wind_profile(0.5);
    a.preferences.insert(1, 0.2);
    b.preferences.insert(0, 0.3);
    let mut line = Line::new("l", 0, 1, 0.1);
    line.existing_cap = 4.0;
    line.length = 50.0;
    line.capex_fom = 2.0;
    line.annuity = 20.0;
    let mut s = Scenario {
        prosumers: vec![a, b],
        technologies: techs,
        lines: vec![line],
        num_nodes: 2,
        time_steps: T,
        comm_graph: Vec::new(),
        carbon_cap: cap,
        carbon_cap_mode: CarbonCapMode::Inequality,
        market,
        slack_node: 1,
    };
    s.complete_graph();
    s
}

/// Connected network on `n` nodes: a random spanning tree plus a few
/// extra lines, parallel ones included.
pub fn random_network(rng: &mut ChaCha8Rng, n: usize) -> Vec<Line> {
    let mut lines = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        lines.push(Line::new(&format!("t{v}"), u, v, rng.gen_range(0.05..1.0)));
    }
    for k in 0..rng.gen_range(0..=n) {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            lines.push(Line::new(&format!("x{k}"), a, b, rng.gen_range(0.05..1.0)));
        }
    }
    lines
}

/// Small random planning instance, feasible for any cap: solar is never
/// fully unavailable and can be built without limit.
pub fn random_scenario(rng: &mut ChaCha8Rng, market: MarketDesign) -> Scenario {
    let n = rng.gen_range(2..=3);
    let t_len = rng.gen_range(1..=4);
    let mut techs = vec![
        Technology::generation("solar", rng.gen_range(20.0..80.0), 10.0, rng.gen_range(0.0..2.0)),
        Technology::fossil("gas", rng.gen_range(10.0..40.0), 10.0, rng.gen_range(5.0..20.0), rng.gen_range(0.2..0.9)),
    ];
    if rng.gen_bool(0.5) {
        techs.push(Technology::storage("battery", 5.0, 8.0, 10.0, 0.5, 0.9, 0.95));
    }
    let mut prosumers = Vec::new();
    for v in 0..n {
        let demand = (0..t_len).map(|_| rng.gen_range(0.0..5.0)).collect();
        let mut p = Prosumer::new(&format!("n{v}"), v, techs.len(), demand);
        p.availability[0] = (0..t_len).map(|_| rng.gen_range(0.1..1.0)).collect();
        p.existing_gen_cap[1] = rng.gen_range(0.0..3.0);
        for m in 0..n {
            if m != v && rng.gen_bool(0.6) {
                p.preferences.insert(m, rng.gen_range(0.0..0.5));
            }
        }
        p.phi = rng.gen_range(0.0..=1.0);
        prosumers.push(p);
    }
    let mut lines = random_network(rng, n);
    for l in &mut lines {
        l.existing_cap = rng.gen_range(0.0..3.0);
        l.capex_fom = rng.gen_range(0.1..2.0);
        l.length = 10.0;
        l.annuity = 10.0;
    }
    let mut s = Scenario {
        prosumers,
        technologies: techs,
        lines,
        num_nodes: n,
        time_steps: t_len,
        comm_graph: Vec::new(),
        carbon_cap: f64::INFINITY,
        carbon_cap_mode: CarbonCapMode::Inequality,
        market,
        slack_node: rng.gen_range(0..n),
    };
    s.complete_graph();
    if rng.gen_bool(0.5) {
        s.carbon_cap = rng.gen_range(0.0..4.0);
    }
    s
}
