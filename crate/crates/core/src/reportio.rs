//! Scenario bundles on disk and result files.
//!
//! A bundle is a directory with `manifest.json` and CSV tables:
//!
//! | file | header | required |
//! |---|---|---|
//! | technologies.csv | `id,kind,capex_fom,annuity,vom,charge_eff,discharge_eff,storage_capex_fom,emission_factor` | yes |
//! | prosumers.csv | `id,node` | yes |
//! | lines.csv | `id,from_node,to_node,reactance,length,existing_cap,capex_fom,annuity` | yes |
//! | demand.csv | `prosumer,t,value` | yes, every (prosumer, t) |
//! | availability.csv | `tech,prosumer,t,value` | no, missing entries are 1 |
//! | existing.csv | `tech,prosumer,gen_cap,storage_energy` | no, missing entries are 0 |
//! | preferences.csv | `prosumer,partner,cost` | no, missing entries are 0 |
//! | phi.csv | `prosumer,phi` | no, missing entries are 1 |
//!
//! Prosumers and technologies are referenced by id, time steps from 0.
//! Currency and energy units are whatever the author uses consistently.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::admm::{trace_csv, ConvergenceTrace};
use crate::model::{validate_scenario, Line, Prosumer, TechKind, Technology};
use crate::settlement::SettlementReport;
use crate::{CarbonCapMode, Error, MarketDesign, PlanningSolution, Scenario};

const TECHNOLOGIES: &[&str] = &[
    "id",
    "kind",
    "capex_fom",
    "annuity",
    "vom",
    "charge_eff",
    "discharge_eff",
    "storage_capex_fom",
    "emission_factor",
];
const PROSUMERS: &[&str] = &["id", "node"];
const LINES: &[&str] = &["id", "from_node", "to_node", "reactance", "length", "existing_cap", "capex_fom", "annuity"];
const DEMAND: &[&str] = &["prosumer", "t", "value"];
const AVAILABILITY: &[&str] = &["tech", "prosumer", "t", "value"];
const EXISTING: &[&str] = &["tech", "prosumer", "gen_cap", "storage_energy"];
const PREFERENCES: &[&str] = &["prosumer", "partner", "cost"];
const PHI: &[&str] = &["prosumer", "phi"];

/// File names of a bundle. Unset entries use the default names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleFiles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub technologies: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prosumers: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lines: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub existing: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferences: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub time_steps: usize,
    /// Defaults to the number of prosumers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_nodes: Option<usize>,
    /// No cap when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon_cap: Option<f64>,
    #[serde(default)]
    pub carbon_cap_mode: CarbonCapMode,
    #[serde(default)]
    pub market: MarketDesign,
    #[serde(default)]
    pub slack_node: usize,
    /// Trading pairs by prosumer id; the complete graph when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trading: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "BundleFiles::is_default")]
    pub files: BundleFiles,
}

impl BundleFiles {
    fn is_default(&self) -> bool {
        *self == BundleFiles::default()
    }
}

fn data_err(file: &str, message: impl Into<String>) -> Error {
    Error::Data { file: file.to_string(), message: message.into() }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { file: path.display().to_string(), source }
}

/// Rows of a CSV table together with their line numbers in the file.
struct Table {
    file: String,
    header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, expected: &[&str]) -> Result<Table, Error> {
        let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> =
            rdr.headers().map_err(|e| data_err(&file, e.to_string()))?.iter().map(str::to_string).collect();
        if header != expected {
            return Err(data_err(
                &file,
                format!("header is '{}', expected '{}'", header.join(","), expected.join(",")),
            ));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| match e.position() {
                Some(p) => data_err(&file, format!("row {}: {e}", p.line())),
                None => data_err(&file, e.to_string()),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, rec));
        }
        Ok(Table { file, header, rows })
    }

    fn err(&self, row: u64, col: usize, message: impl std::fmt::Display) -> Error {
        data_err(&self.file, format!("row {row}, column {}: {message}", self.header[col]))
    }

    fn str<'a>(&self, row: u64, rec: &'a csv::StringRecord, col: usize) -> Result<&'a str, Error> {
        match rec.get(col) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.err(row, col, "missing value")),
        }
    }

    fn f64(&self, row: u64, rec: &csv::StringRecord, col: usize) -> Result<f64, Error> {
        let v = self.str(row, rec, col)?;
        v.parse().map_err(|_| self.err(row, col, format!("'{v}' is not a number")))
    }

    fn opt_f64(&self, row: u64, rec: &csv::StringRecord, col: usize) -> Result<Option<f64>, Error> {
        match rec.get(col) {
            None | Some("") => Ok(None),
            Some(_) => self.f64(row, rec, col).map(Some),
        }
    }

    fn usize(&self, row: u64, rec: &csv::StringRecord, col: usize) -> Result<usize, Error> {
        let v = self.str(row, rec, col)?;
        v.parse().map_err(|_| self.err(row, col, format!("'{v}' is not a nonnegative integer")))
    }

    fn lookup(
        &self,
        row: u64,
        rec: &csv::StringRecord,
        col: usize,
        ids: &BTreeMap<String, usize>,
    ) -> Result<usize, Error> {
        let v = self.str(row, rec, col)?;
        ids.get(v).copied().ok_or_else(|| self.err(row, col, format!("unknown id '{v}'")))
    }

    fn time(&self, row: u64, rec: &csv::StringRecord, col: usize, steps: usize) -> Result<usize, Error> {
        let t = self.usize(row, rec, col)?;
        if t >= steps {
            return Err(self.err(row, col, format!("time step {t} outside 0..{steps}")));
        }
        Ok(t)
    }
}

/// Tracks keys already seen in a table to report duplicates.
struct Keys<K: Ord>(BTreeMap<K, u64>);

impl<K: Ord + std::fmt::Debug> Keys<K> {
    fn new() -> Self {
        Keys(BTreeMap::new())
    }

    fn insert(&mut self, table: &Table, row: u64, key: K) -> Result<(), Error> {
        if let Some(first) = self.0.get(&key) {
            return Err(data_err(&table.file, format!("row {row}: duplicate key {key:?}, first seen on row {first}")));
        }
        self.0.insert(key, row);
        Ok(())
    }
}

fn resolve(dir: &Path, name: &Option<String>, default: &str, required: bool) -> Result<Option<PathBuf>, Error> {
    match name {
        Some(n) => {
            let p = dir.join(n);
            if !p.is_file() {
                return Err(data_err(n, "file referenced by the manifest does not exist"));
            }
            Ok(Some(p))
        }
        None => {
            let p = dir.join(default);
            if p.is_file() {
                Ok(Some(p))
            } else if required {
                Err(data_err(default, "required file is missing"))
            } else {
                Ok(None)
            }
        }
    }
}

fn id_map<'a>(ids: impl Iterator<Item = &'a String>) -> BTreeMap<String, usize> {
    ids.enumerate().map(|(i, id)| (id.clone(), i)).collect()
}

fn parse_kind(v: &str) -> Option<TechKind> {
    match v {
        "generation" => Some(TechKind::Generation),
        "fossil_generation" => Some(TechKind::FossilGeneration),
        "storage" => Some(TechKind::Storage),
        _ => None,
    }
}

fn kind_name(k: TechKind) -> &'static str {
    match k {
        TechKind::Generation => "generation",
        TechKind::FossilGeneration => "fossil_generation",
        TechKind::Storage => "storage",
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, Error> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| data_err("manifest.json", e.to_string()))
}

/// A loaded bundle and the optional tables that were absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub scenario: Scenario,
    pub defaulted: Vec<&'static str>,
}

/// Load and validate the bundle in `dir`. Warns when a mixed-design
/// bundle has no phi table.
pub fn load_scenario(dir: impl AsRef<Path>) -> Result<Scenario, Error> {
    let dir = dir.as_ref();
    let b = load_bundle(dir)?;
    if b.scenario.market == MarketDesign::Mixed && b.defaulted.contains(&"phi.csv") {
        warn!("{}: no phi.csv, every prosumer trades its whole position bilaterally (phi = 1)", dir.display());
    }
    Ok(b.scenario)
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Bundle, Error> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let mut defaulted = Vec::new();
    let f = &m.files;
    let steps = m.time_steps;

    let tab = Table::read(&resolve(dir, &f.technologies, "technologies.csv", true)?.unwrap(), TECHNOLOGIES)?;
    let mut technologies = Vec::new();
    let mut keys = Keys::new();
    for (row, rec) in &tab.rows {
        let row = *row;
        let id = tab.str(row, rec, 0)?.to_string();
        keys.insert(&tab, row, id.clone())?;
        let kind_s = tab.str(row, rec, 1)?;
        let kind = parse_kind(kind_s).ok_or_else(|| tab.err(row, 1, format!("unknown kind '{kind_s}'")))?;
        technologies.push(Technology {
            id,
            kind,
            capex_fom: tab.f64(row, rec, 2)?,
            annuity: tab.f64(row, rec, 3)?,
            vom: tab.f64(row, rec, 4)?,
            charge_eff: tab.opt_f64(row, rec, 5)?.unwrap_or(1.0),
            discharge_eff: tab.opt_f64(row, rec, 6)?.unwrap_or(1.0),
            storage_capex_fom: tab.opt_f64(row, rec, 7)?.unwrap_or(0.0),
            emission_factor: tab.opt_f64(row, rec, 8)?,
        });
    }
    let tech_ids = id_map(technologies.iter().map(|t| &t.id));
    let nt = technologies.len();

    let tab = Table::read(&resolve(dir, &f.prosumers, "prosumers.csv", true)?.unwrap(), PROSUMERS)?;
    let mut prosumers = Vec::new();
    let mut keys = Keys::new();
    for (row, rec) in &tab.rows {
        let id = tab.str(*row, rec, 0)?;
        keys.insert(&tab, *row, id.to_string())?;
        let node = tab.usize(*row, rec, 1)?;
        prosumers.push(Prosumer::new(id, node, nt, vec![0.0; steps]));
    }
    let ids = id_map(prosumers.iter().map(|p| &p.id));

    let tab = Table::read(&resolve(dir, &f.lines, "lines.csv", true)?.unwrap(), LINES)?;
    let mut lines = Vec::new();
    let mut keys = Keys::new();
    for (row, rec) in &tab.rows {
        let row = *row;
        let id = tab.str(row, rec, 0)?;
        keys.insert(&tab, row, id.to_string())?;
        lines.push(Line {
            id: id.to_string(),
            from_node: tab.usize(row, rec, 1)?,
            to_node: tab.usize(row, rec, 2)?,
            reactance: tab.f64(row, rec, 3)?,
            length: tab.f64(row, rec, 4)?,
            existing_cap: tab.f64(row, rec, 5)?,
            capex_fom: tab.f64(row, rec, 6)?,
            annuity: tab.f64(row, rec, 7)?,
        });
    }

    let tab = Table::read(&resolve(dir, &f.demand, "demand.csv", true)?.unwrap(), DEMAND)?;
    let mut keys = Keys::new();
    for (row, rec) in &tab.rows {
        let n = tab.lookup(*row, rec, 0, &ids)?;
        let t = tab.time(*row, rec, 1, steps)?;
        keys.insert(&tab, *row, (prosumers[n].id.clone(), t))?;
        prosumers[n].demand[t] = tab.f64(*row, rec, 2)?;
    }
    for p in &prosumers {
        if let Some(t) = (0..steps).find(|&t| !keys.0.contains_key(&(p.id.clone(), t))) {
            return Err(data_err(&tab.file, format!("no demand for prosumer {} at step {t}", p.id)));
        }
    }

    let found = resolve(dir, &f.availability, "availability.csv", false)?;
    if found.is_none() {
        defaulted.push("availability.csv");
    }
    if let Some(path) = found {
        let tab = Table::read(&path, AVAILABILITY)?;
        let mut keys = Keys::new();
        for (row, rec) in &tab.rows {
            let i = tab.lookup(*row, rec, 0, &tech_ids)?;
            let n = tab.lookup(*row, rec, 1, &ids)?;
            let t = tab.time(*row, rec, 2, steps)?;
            keys.insert(&tab, *row, (i, n, t))?;
            prosumers[n].availability[i][t] = tab.f64(*row, rec, 3)?;
        }
    }

    let found = resolve(dir, &f.existing, "existing.csv", false)?;
    if found.is_none() {
        defaulted.push("existing.csv");
    }
    if let Some(path) = found {
        let tab = Table::read(&path, EXISTING)?;
        let mut keys = Keys::new();
        for (row, rec) in &tab.rows {
            let i = tab.lookup(*row, rec, 0, &tech_ids)?;
            let n = tab.lookup(*row, rec, 1, &ids)?;
            keys.insert(&tab, *row, (i, n))?;
            prosumers[n].existing_gen_cap[i] = tab.f64(*row, rec, 2)?;
            prosumers[n].existing_storage_energy[i] = tab.opt_f64(*row, rec, 3)?.unwrap_or(0.0);
        }
    }

    let found = resolve(dir, &f.preferences, "preferences.csv", false)?;
    if found.is_none() {
        defaulted.push("preferences.csv");
    }
    if let Some(path) = found {
        let tab = Table::read(&path, PREFERENCES)?;
        let mut keys = Keys::new();
        for (row, rec) in &tab.rows {
            let n = tab.lookup(*row, rec, 0, &ids)?;
            let m = tab.lookup(*row, rec, 1, &ids)?;
            keys.insert(&tab, *row, (n, m))?;
            let v = tab.f64(*row, rec, 2)?;
            prosumers[n].preferences.insert(m, v);
        }
    }

    match resolve(dir, &f.phi, "phi.csv", false)? {
        Some(path) => {
            let tab = Table::read(&path, PHI)?;
            let mut keys = Keys::new();
            for (row, rec) in &tab.rows {
                let n = tab.lookup(*row, rec, 0, &ids)?;
                keys.insert(&tab, *row, n)?;
                prosumers[n].phi = tab.f64(*row, rec, 1)?;
            }
        }
        None => defaulted.push("phi.csv"),
    }

    let np = prosumers.len();
    let mut s = Scenario {
        num_nodes: m.num_nodes.unwrap_or(np),
        prosumers,
        technologies,
        lines,
        time_steps: steps,
        comm_graph: Vec::new(),
        carbon_cap: m.carbon_cap.unwrap_or(f64::INFINITY),
        carbon_cap_mode: m.carbon_cap_mode,
        market: m.market,
        slack_node: m.slack_node,
    };
    match &m.trading {
        None => s.complete_graph(),
        Some(pairs) => {
            s.comm_graph = vec![BTreeSet::new(); np];
            for (a, b) in pairs {
                let look = |id: &String| {
                    ids.get(id)
                        .copied()
                        .ok_or_else(|| data_err("manifest.json", format!("trading: unknown prosumer '{id}'")))
                };
                let (a, b) = (look(a)?, look(b)?);
                s.comm_graph[a].insert(b);
                s.comm_graph[b].insert(a);
            }
        }
    }
    let v = validate_scenario(&s);
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    Ok(Bundle { scenario: s, defaulted })
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    fs::write(path, content).map_err(|e| io_err(path, e))
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

struct CsvOut(String);

impl CsvOut {
    fn new(header: &[&str]) -> Self {
        CsvOut(header.join(",") + "\n")
    }

    fn row(&mut self, cells: &[String]) {
        self.0.push_str(&cells.join(","));
        self.0.push('\n');
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `s` as a bundle that [`load_scenario`] reads back unchanged.
pub fn write_scenario(s: &Scenario, dir: impl AsRef<Path>) -> Result<(), Error> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let np = s.num_prosumers();
    let complete = s.comm_graph.iter().enumerate().all(|(n, nb)| nb.len() + 1 == np && !nb.contains(&n));
    let manifest = Manifest {
        time_steps: s.time_steps,
        num_nodes: (s.num_nodes != np).then_some(s.num_nodes),
        carbon_cap: s.has_carbon_cap().then_some(s.carbon_cap),
        carbon_cap_mode: s.carbon_cap_mode,
        market: s.market,
        slack_node: s.slack_node,
        trading: (!complete).then(|| {
            s.trade_links().into_iter().map(|(a, b)| (s.prosumers[a].id.clone(), s.prosumers[b].id.clone())).collect()
        }),
        files: BundleFiles::default(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| data_err("manifest.json", e.to_string()))?;
    write_file(&dir.join("manifest.json"), &(json + "\n"))?;

    let mut c = CsvOut::new(TECHNOLOGIES);
    for t in &s.technologies {
        c.row(&[
            t.id.clone(),
            kind_name(t.kind).into(),
            t.capex_fom.to_string(),
            t.annuity.to_string(),
            t.vom.to_string(),
            t.charge_eff.to_string(),
            t.discharge_eff.to_string(),
            t.storage_capex_fom.to_string(),
            opt(t.emission_factor),
        ]);
    }
    write_file(&dir.join("technologies.csv"), &c.0)?;

    let mut c = CsvOut::new(PROSUMERS);
    for p in &s.prosumers {
        c.row(&[p.id.clone(), p.node.to_string()]);
    }
    write_file(&dir.join("prosumers.csv"), &c.0)?;

    let mut c = CsvOut::new(LINES);
    for l in &s.lines {
        c.row(&[
            l.id.clone(),
            l.from_node.to_string(),
            l.to_node.to_string(),
            l.reactance.to_string(),
            l.length.to_string(),
            l.existing_cap.to_string(),
            l.capex_fom.to_string(),
            l.annuity.to_string(),
        ]);
    }
    write_file(&dir.join("lines.csv"), &c.0)?;

    let mut demand = CsvOut::new(DEMAND);
    let mut avail = CsvOut::new(AVAILABILITY);
    let mut existing = CsvOut::new(EXISTING);
    let mut prefs = CsvOut::new(PREFERENCES);
    let mut phi = CsvOut::new(PHI);
    for p in &s.prosumers {
        for (t, d) in p.demand.iter().enumerate() {
            demand.row(&[p.id.clone(), t.to_string(), d.to_string()]);
        }
        for (i, tech) in s.technologies.iter().enumerate() {
            for (t, a) in p.availability[i].iter().enumerate() {
                avail.row(&[tech.id.clone(), p.id.clone(), t.to_string(), a.to_string()]);
            }
            existing.row(&[
                tech.id.clone(),
                p.id.clone(),
                p.existing_gen_cap[i].to_string(),
                p.existing_storage_energy[i].to_string(),
            ]);
        }
        for (&m, v) in &p.preferences {
            prefs.row(&[p.id.clone(), s.prosumers[m].id.clone(), v.to_string()]);
        }
        phi.row(&[p.id.clone(), p.phi.to_string()]);
    }
    write_file(&dir.join("demand.csv"), &demand.0)?;
    write_file(&dir.join("availability.csv"), &avail.0)?;
    write_file(&dir.join("existing.csv"), &existing.0)?;
    write_file(&dir.join("preferences.csv"), &prefs.0)?;
    write_file(&dir.join("phi.csv"), &phi.0)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestEntry {
    pub tech: String,
    pub prosumer: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineEntry {
    pub line: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Stats {
    fn of<'a>(values: impl Iterator<Item = &'a f64>) -> Option<Stats> {
        let v: Vec<f64> = values.copied().collect();
        if v.is_empty() {
            return None;
        }
        Some(Stats {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSummary {
    pub carbon_price: f64,
    pub trade_price: Option<Stats>,
    pub grid_price: Option<Stats>,
    pub nodal_price: Option<Stats>,
}

/// Contents of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub market: MarketDesign,
    pub objective: f64,
    pub gen_invest: Vec<InvestEntry>,
    pub storage_invest: Vec<InvestEntry>,
    pub line_invest: Vec<LineEntry>,
    pub emissions: BTreeMap<String, f64>,
    pub total_emissions: f64,
    pub prices: PriceSummary,
}

impl ResultsFile {
    pub fn new(s: &Scenario, sol: &PlanningSolution) -> Self {
        let invest = |m: &BTreeMap<(usize, usize), f64>| {
            m.iter()
                .map(|(&(i, n), &value)| InvestEntry {
                    tech: s.technologies[i].id.clone(),
                    prosumer: s.prosumers[n].id.clone(),
                    value,
                })
                .collect()
        };
        ResultsFile {
            market: sol.market,
            objective: sol.objective,
            gen_invest: invest(&sol.gen_invest),
            storage_invest: invest(&sol.storage_invest),
            line_invest: sol
                .line_invest
                .iter()
                .map(|(&l, &value)| LineEntry { line: s.lines[l].id.clone(), value })
                .collect(),
            emissions: (0..s.num_prosumers()).map(|n| (s.prosumers[n].id.clone(), sol.emission(n))).collect(),
            total_emissions: sol.total_emissions(),
            prices: PriceSummary {
                carbon_price: sol.prices.carbon_price,
                trade_price: Stats::of(sol.prices.trade_price.values()),
                grid_price: Stats::of(sol.prices.grid_price.values()),
                nodal_price: Stats::of(sol.prices.nodal_price.values()),
            },
        }
    }
}

/// Run metadata kept out of the payload files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub method: String,
    pub market: MarketDesign,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub elapsed_seconds: f64,
    pub finished_unix: u64,
}

/// JSON with object keys sorted, pretty printed.
fn sorted_json<T: Serialize>(value: &T, file: &str) -> Result<String, Error> {
    let v = serde_json::to_value(value).map_err(|e| data_err(file, e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| data_err(file, e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn trades_csv(s: &Scenario, sol: &PlanningSolution) -> String {
    let mut c = CsvOut::new(&["from", "to", "t", "quantity", "tso_quantity", "price", "grid_price"]);
    let id = |n: usize| s.prosumers[n].id.clone();
    if s.market != MarketDesign::Pool {
        for (n, m) in s.trade_pairs() {
            for t in 0..s.time_steps {
                c.row(&[
                    id(n),
                    id(m),
                    t.to_string(),
                    sol.trade(n, m, t).to_string(),
                    sol.tso_bilateral(n, m, t).to_string(),
                    opt(sol.prices.trade_price.get(&(n, m, t)).copied()),
                    opt(sol.prices.grid_price.get(&(n, m, t)).copied()),
                ]);
            }
        }
    }
    if s.market != MarketDesign::P2p {
        for n in 0..s.num_prosumers() {
            for t in 0..s.time_steps {
                c.row(&[
                    id(n),
                    "pool".into(),
                    t.to_string(),
                    sol.pool_trade(n, t).to_string(),
                    sol.tso_pool(n, t).to_string(),
                    opt(sol.prices.nodal_price.get(&(n, t)).copied()),
                    String::new(),
                ]);
            }
        }
    }
    c.0
}

pub fn flows_csv(s: &Scenario, sol: &PlanningSolution) -> String {
    let mut c = CsvOut::new(&["line", "t", "flow", "capacity"]);
    for (l, line) in s.lines.iter().enumerate() {
        let cap = line.existing_cap + sol.line_invest(l);
        for t in 0..s.time_steps {
            c.row(&[line.id.clone(), t.to_string(), sol.flow(l, t).to_string(), cap.to_string()]);
        }
    }
    c.0
}

pub fn dispatch_csv(s: &Scenario, sol: &PlanningSolution) -> String {
    let mut c = CsvOut::new(&["prosumer", "tech", "t", "production", "charge", "discharge", "soc"]);
    for (n, p) in s.prosumers.iter().enumerate() {
        for (i, tech) in s.technologies.iter().enumerate() {
            for t in 0..s.time_steps {
                c.row(&[
                    p.id.clone(),
                    tech.id.clone(),
                    t.to_string(),
                    sol.production(i, n, t).to_string(),
                    sol.charge(i, n, t).to_string(),
                    sol.discharge(i, n, t).to_string(),
                    sol.soc(i, n, t).to_string(),
                ]);
            }
        }
    }
    c.0
}

/// Write the payload files of a run. `convergence.csv` is written only
/// with a trace.
pub fn write_results(
    s: &Scenario,
    sol: &PlanningSolution,
    report: &SettlementReport,
    trace: Option<&ConvergenceTrace>,
    out_dir: impl AsRef<Path>,
) -> Result<(), Error> {
    let dir = out_dir.as_ref();
    create_dir(dir)?;
    write_file(&dir.join("results.json"), &sorted_json(&ResultsFile::new(s, sol), "results.json")?)?;
    write_file(&dir.join("trades.csv"), &trades_csv(s, sol))?;
    write_file(&dir.join("flows.csv"), &flows_csv(s, sol))?;
    write_file(&dir.join("dispatch.csv"), &dispatch_csv(s, sol))?;
    write_file(&dir.join("settlement.csv"), &report.to_csv())?;
    if let Some(trace) = trace {
        write_file(&dir.join("convergence.csv"), &trace_csv(trace))?;
    }
    Ok(())
}

pub fn write_meta(meta: &RunMeta, out_dir: impl AsRef<Path>) -> Result<(), Error> {
    let dir = out_dir.as_ref();
    create_dir(dir)?;
    write_file(&dir.join("meta.json"), &sorted_json(meta, "meta.json")?)
}

pub fn read_results(path: impl AsRef<Path>) -> Result<ResultsFile, Error> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| data_err("results.json", e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSummary {
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
    pub objective: f64,
    pub best_primal: f64,
}

/// Summary of a `convergence.csv` file.
pub fn read_trace_summary(path: impl AsRef<Path>) -> Result<TraceSummary, Error> {
    let path = path.as_ref();
    let tab = Table::read(path, &["iteration", "primal", "dual", "objective"])?;
    let mut out = None;
    let mut best = f64::INFINITY;
    for (row, rec) in &tab.rows {
        let primal = tab.f64(*row, rec, 1)?;
        best = best.min(primal);
        out = Some(TraceSummary {
            iterations: tab.usize(*row, rec, 0)?,
            primal,
            dual: tab.f64(*row, rec, 2)?,
            objective: tab.f64(*row, rec, 3)?,
            best_primal: best,
        });
    }
    out.ok_or_else(|| data_err(&tab.file, "trace has no rows"))
}
