//! Observed cohort `(x, z, w, m, delta)` stored column-wise.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One row of a cohort, borrowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row<'a> {
    pub x: u8,
    pub z: &'a [f64],
    pub w: &'a [f64],
    pub m: f64,
    pub delta: u8,
}

/// Observed rows. `z` and `w` may be multi-column; `delta` is `0` for
/// censoring and `1..=n_causes` for the observed cause.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    x: Vec<u8>,
    z: Vec<f64>,
    w: Vec<f64>,
    m: Vec<f64>,
    delta: Vec<u8>,
    z_dim: usize,
    w_dim: usize,
    n_causes: usize,
}

impl Cohort {
    pub fn new(
        x: Vec<u8>,
        z: Vec<f64>,
        z_dim: usize,
        w: Vec<f64>,
        w_dim: usize,
        m: Vec<f64>,
        delta: Vec<u8>,
        n_causes: usize,
    ) -> Result<Self> {
        let n = x.len();
        if m.len() != n || delta.len() != n || z.len() != n * z_dim || w.len() != n * w_dim {
            return Err(Error::LengthMismatch("cohort columns have different lengths".into()));
        }
        if n_causes == 0 {
            return Err(Error::InvalidCohort("number of causes must be at least 1".into()));
        }
        for i in 0..n {
            if x[i] > 1 {
                return Err(Error::InvalidCohort(format!("row {i}: group label {} not in {{0,1}}", x[i])));
            }
            if !(m[i].is_finite() && m[i] >= 0.0) {
                return Err(Error::InvalidCohort(format!("row {i}: observed time {} must be finite and >= 0", m[i])));
            }
            if delta[i] as usize > n_causes {
                return Err(Error::InvalidCohort(format!("row {i}: delta {} exceeds {n_causes} causes", delta[i])));
            }
        }
        if z.iter().chain(&w).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCohort("covariates must be finite".into()));
        }
        Ok(Cohort { x, z, w, m, delta, z_dim, w_dim, n_causes })
    }

    /// Single-column confounder and mediator.
    pub fn from_scalar_columns(x: Vec<u8>, z: Vec<f64>, w: Vec<f64>, m: Vec<f64>, delta: Vec<u8>, n_causes: usize) -> Result<Self> {
        Self::new(x, z, 1, w, 1, m, delta, n_causes)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn n_causes(&self) -> usize {
        self.n_causes
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn w_dim(&self) -> usize {
        self.w_dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> Row<'_> {
        Row {
            x: self.x[i],
            z: &self.z[i * self.z_dim..(i + 1) * self.z_dim],
            w: &self.w[i * self.w_dim..(i + 1) * self.w_dim],
            m: self.m[i],
            delta: self.delta[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn x(&self) -> &[u8] {
        &self.x
    }

    pub fn times(&self) -> &[f64] {
        &self.m
    }

    pub fn deltas(&self) -> &[u8] {
        &self.delta
    }

    pub fn count_group(&self, x: u8) -> usize {
        self.x.iter().filter(|&&v| v == x).count()
    }

    /// Fails unless both groups are present.
    pub fn require_both_groups(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyCohort);
        }
        for g in 0..2u8 {
            if self.count_group(g) == 0 {
                return Err(Error::DegenerateGroup(format!("no rows with x = {g}")));
            }
        }
        Ok(())
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> Cohort {
        let mut out = Cohort {
            x: Vec::with_capacity(idx.len()),
            z: Vec::with_capacity(idx.len() * self.z_dim),
            w: Vec::with_capacity(idx.len() * self.w_dim),
            m: Vec::with_capacity(idx.len()),
            delta: Vec::with_capacity(idx.len()),
            z_dim: self.z_dim,
            w_dim: self.w_dim,
            n_causes: self.n_causes,
        };
        for &i in idx {
            let r = self.row(i);
            out.x.push(r.x);
            out.z.extend_from_slice(r.z);
            out.w.extend_from_slice(r.w);
            out.m.push(r.m);
            out.delta.push(r.delta);
        }
        out
    }

    /// Same covariates and times with the indicators replaced.
    pub fn with_deltas(&self, delta: Vec<u8>, n_causes: usize) -> Result<Cohort> {
        Cohort::new(self.x.clone(), self.z.clone(), self.z_dim, self.w.clone(), self.w_dim, self.m.clone(), delta, n_causes)
    }

    /// True when every covariate value is an integer code.
    pub fn covariates_discrete(&self) -> bool {
        self.z.iter().chain(&self.w).all(|v| v.fract() == 0.0 && v.abs() < 1e15)
    }

    pub fn z_discrete(&self) -> bool {
        self.z.iter().all(|v| v.fract() == 0.0 && v.abs() < 1e15)
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["x".to_string()];
        h.extend(column_names("z", self.z_dim));
        h.extend(column_names("w", self.w_dim));
        h.push("m".into());
        h.push("delta".into());
        h
    }

    /// Writes CSV with header `x,z,w,m,delta` (or `z1..zp`, `w1..wq` for multi-column covariates).
    /// Lines in `comments` are written first, each prefixed with `# `.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{}", self.header().join(","))?;
        let mut line = String::new();
        for r in self.rows() {
            line.clear();
            line.push_str(&r.x.to_string());
            for v in r.z.iter().chain(r.w) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            line.push(',');
            line.push_str(&r.m.to_string());
            line.push(',');
            line.push_str(&r.delta.to_string());
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads the CSV layout written by [`Cohort::write_csv`]; `#` lines are comments.
    /// When `n_causes` is `None` it is taken as the largest observed `delta` (at least one).
    pub fn read_csv<R: Read>(input: R, n_causes: Option<usize>) -> Result<Cohort> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let x_col = find("x").ok_or_else(|| Error::Schema("missing column `x`".into()))?;
        let m_col = find("m").ok_or_else(|| Error::Schema("missing column `m`".into()))?;
        let d_col = find("delta").ok_or_else(|| Error::Schema("missing column `delta`".into()))?;
        let z_cols = covariate_columns(&headers, "z")?;
        let w_cols = covariate_columns(&headers, "w")?;

        let (mut x, mut z, mut w, mut m, mut delta) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let field = |c: usize, name: &str| -> Result<&str> {
                rec.get(c).ok_or_else(|| Error::Schema(format!("record {}: missing field `{name}`", line + 1)))
            };
            let parse_f = |c: usize, name: &str| -> Result<f64> {
                field(c, name)?
                    .parse::<f64>()
                    .map_err(|e| Error::Schema(format!("record {}: field `{name}`: {e}", line + 1)))
            };
            let xv: u8 = field(x_col, "x")?
                .parse()
                .map_err(|e| Error::Schema(format!("record {}: field `x`: {e}", line + 1)))?;
            x.push(xv);
            for &c in &z_cols {
                z.push(parse_f(c, &headers[c])?);
            }
            for &c in &w_cols {
                w.push(parse_f(c, &headers[c])?);
            }
            m.push(parse_f(m_col, "m")?);
            let dv: u8 = field(d_col, "delta")?
                .parse()
                .map_err(|e| Error::Schema(format!("record {}: field `delta`: {e}", line + 1)))?;
            delta.push(dv);
        }
        let k = n_causes.unwrap_or_else(|| delta.iter().copied().max().unwrap_or(0).max(1) as usize);
        Cohort::new(x, z, z_cols.len(), w, w_cols.len(), m, delta, k)
    }
}

fn column_names(prefix: &str, dim: usize) -> Vec<String> {
    match dim {
        0 => Vec::new(),
        1 => vec![prefix.to_string()],
        d => (1..=d).map(|j| format!("{prefix}{j}")).collect(),
    }
}

fn covariate_columns(headers: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>> {
    if let Some(c) = headers.iter().position(|h| h == prefix) {
        return Ok(vec![c]);
    }
    let mut cols = Vec::new();
    for j in 1.. {
        match headers.iter().position(|h| h == format!("{prefix}{j}")) {
            Some(c) => cols.push(c),
            None => break,
        }
    }
    Ok(cols)
}
