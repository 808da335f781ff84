//! DC power flow: PTDF construction and line flow evaluation.

use nalgebra::{DMatrix, DVector};

use crate::model::{is_connected, Line};
use crate::Error;

/// Power transfer distribution factors, one row per line and one column
/// per node. Column `slack_node` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PtdfMatrix {
    pub entries: DMatrix<f64>,
    pub slack_node: usize,
}

impl PtdfMatrix {
    pub fn num_lines(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_nodes(&self) -> usize {
        self.entries.ncols()
    }

    pub fn get(&self, line: usize, node: usize) -> f64 {
        self.entries[(line, node)]
    }
}

/// Build the PTDF from line reactances. Parallel lines share their
/// corridor's flow in proportion to their susceptance.
pub fn build_ptdf(lines: &[Line], num_nodes: usize, slack: usize) -> Result<PtdfMatrix, Error> {
    if slack >= num_nodes {
        return Err(Error::Network(format!("slack node {slack} out of range")));
    }
    for l in lines {
        if l.from_node >= num_nodes || l.to_node >= num_nodes || l.from_node == l.to_node {
            return Err(Error::Network(format!("line {} has invalid endpoints", l.id)));
        }
        if !(l.reactance > 0.0 && l.reactance.is_finite()) {
            return Err(Error::Network(format!("line {} has nonpositive reactance", l.id)));
        }
    }
    if !is_connected(num_nodes, lines) {
        return Err(Error::Network("network is not connected".into()));
    }

    // reduced node numbering without the slack
    let red = |v: usize| {
        if v < slack {
            Some(v)
        } else if v > slack {
            Some(v - 1)
        } else {
            None
        }
    };
    let k = num_nodes - 1;
    let mut b = DMatrix::<f64>::zeros(k, k);
    for l in lines {
        let y = 1.0 / l.reactance;
        let (f, t) = (red(l.from_node), red(l.to_node));
        if let Some(f) = f {
            b[(f, f)] += y;
        }
        if let Some(t) = t {
            b[(t, t)] += y;
        }
        if let (Some(f), Some(t)) = (f, t) {
            b[(f, t)] -= y;
            b[(t, f)] -= y;
        }
    }
    let mut entries = DMatrix::<f64>::zeros(lines.len(), num_nodes);
    if k > 0 {
        let chol = b.cholesky().ok_or_else(|| Error::Network("reduced susceptance matrix is singular".into()))?;
        let x = chol.inverse();
        let angle = |v: Option<usize>, n: usize| match (v, red(n)) {
            (Some(v), Some(n)) => x[(v, n)],
            _ => 0.0,
        };
        for (li, l) in lines.iter().enumerate() {
            let y = 1.0 / l.reactance;
            for n in 0..num_nodes {
                entries[(li, n)] = y * (angle(red(l.from_node), n) - angle(red(l.to_node), n));
            }
        }
    }
    Ok(PtdfMatrix { entries, slack_node: slack })
}

/// Line flows for each time step; `injections[t][n]` must sum to zero
/// over `n` within 1e-6 times the injection magnitude.
pub fn line_flows(ptdf: &PtdfMatrix, injections: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, Error> {
    let mut out = Vec::with_capacity(injections.len());
    for (t, inj) in injections.iter().enumerate() {
        if inj.len() != ptdf.num_nodes() {
            return Err(Error::Network(format!("step {t}: {} injections for {} nodes", inj.len(), ptdf.num_nodes())));
        }
        let scale = inj.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let sum: f64 = inj.iter().sum();
        if sum.abs() > 1e-6 * scale {
            return Err(Error::Network(format!("step {t}: injections are imbalanced by {sum:e}")));
        }
        let f = &ptdf.entries * DVector::from_column_slice(inj);
        out.push(f.iter().copied().collect());
    }
    Ok(out)
}
