//! Plain-text dump of a problem in a matrix-market-like layout, for
//! inspecting problems offline.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::problem::QuadraticProgram;
use crate::sparse::CscMatrix;

fn matrix(out: &mut String, name: &str, m: &CscMatrix) {
    let _ = writeln!(out, "%%MatrixMarket matrix coordinate real general");
    let _ = writeln!(out, "% {name}");
    let _ = writeln!(out, "{} {} {}", m.nrows, m.ncols, m.nnz());
    for (r, c, v) in m.iter() {
        let _ = writeln!(out, "{} {} {:?}", r + 1, c + 1, v);
    }
}

fn vector(out: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(out, "%%MatrixMarket matrix array real general");
    let _ = writeln!(out, "% {name}");
    let _ = writeln!(out, "{} 1", v.len());
    for x in v {
        let _ = writeln!(out, "{x:?}");
    }
}

/// Render `P`, `q`, `A`, `l`, `u` (and variable names if present) as
/// consecutive sections.
pub fn to_string(prob: &QuadraticProgram) -> String {
    let mut out = String::new();
    matrix(&mut out, "P", &prob.p);
    vector(&mut out, "q", &prob.q);
    matrix(&mut out, "A", &prob.a);
    vector(&mut out, "lower", &prob.lower);
    vector(&mut out, "upper", &prob.upper);
    if let Some(names) = &prob.variable_names {
        let _ = writeln!(out, "% variables");
        for (j, n) in names.iter().enumerate() {
            let _ = writeln!(out, "% {} {}", j + 1, n);
        }
    }
    out
}

pub fn write(prob: &QuadraticProgram, path: &Path) -> io::Result<()> {
    std::fs::write(path, to_string(prob))
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Parse the output of [`to_string`].
pub fn from_str(text: &str) -> io::Result<QuadraticProgram> {
    let mut lines = text.lines().peekable();
    let mut names = Vec::new();
    let mut sections: Vec<(Vec<usize>, Vec<String>)> = Vec::new();
    while let Some(line) = lines.next() {
        if line.starts_with("%%") {
            // banner, then the section name, then the size line and entries
            lines.next();
            let size: Vec<usize> = lines
                .next()
                .ok_or_else(|| bad("missing size line"))?
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad(format!("bad size line in section {}", sections.len()))))
                .collect::<io::Result<_>>()?;
            let count = if size.len() == 3 { size[2] } else { size[0] };
            let body = (0..count)
                .map(|_| lines.next().map(str::to_string).ok_or_else(|| bad("truncated section")))
                .collect::<io::Result<_>>()?;
            sections.push((size, body));
        } else if let Some(rest) = line.strip_prefix("% ") {
            if rest != "variables" {
                let (_, name) = rest.split_once(' ').ok_or_else(|| bad("bad variable name line"))?;
                names.push(name.to_string());
            }
        }
    }
    if sections.len() != 5 {
        return Err(bad(format!("expected 5 sections, found {}", sections.len())));
    }
    let num = |v: &str| -> io::Result<f64> {
        match v {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => v.parse().map_err(|_| bad(format!("bad number '{v}'"))),
        }
    };
    let mat = |(size, body): &(Vec<usize>, Vec<String>)| -> io::Result<CscMatrix> {
        let mut trip = Vec::with_capacity(body.len());
        for l in body {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(format!("bad matrix entry '{l}'")));
            }
            let r: usize = f[0].parse().map_err(|_| bad("bad row"))?;
            let c: usize = f[1].parse().map_err(|_| bad("bad column"))?;
            trip.push((r - 1, c - 1, num(f[2])?));
        }
        Ok(CscMatrix::from_triplets(size[0], size[1], &trip))
    };
    let vec =
        |(_, body): &(Vec<usize>, Vec<String>)| body.iter().map(|l| num(l.trim())).collect::<io::Result<Vec<f64>>>();
    let prob = QuadraticProgram::new(
        mat(&sections[0])?,
        vec(&sections[1])?,
        mat(&sections[2])?,
        vec(&sections[3])?,
        vec(&sections[4])?,
    )
    .map_err(|e| bad(e.to_string()))?;
    if names.is_empty() {
        Ok(prob)
    } else {
        prob.with_names(names).map_err(|e| bad(e.to_string()))
    }
}

pub fn read(path: &Path) -> io::Result<QuadraticProgram> {
    from_str(&std::fs::read_to_string(path)?)
}
