//! Feasibility of affine linear matrix inequalities.
//!
//! Problems are built by handing the builder a closure that assembles each
//! constraint from variable values; the constant and coefficient blocks are
//! recovered by probing. [`solve`] looks for a strictly feasible point.

pub mod eig;
mod solver;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use eig::{eig_extreme, schur_negdef_check, symmetric_eigenvalues};
pub use solver::{project_negdef, solve, violation, LmiSolution, SolveOptions, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Symmetric(usize),
    Matrix(usize, usize),
    Scalar,
}

impl VarKind {
    pub fn scalar_count(&self) -> usize {
        match *self {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Matrix(r, c) => r * c,
            VarKind::Scalar => 1,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Symmetric(n) => (n, n),
            VarKind::Matrix(r, c) => (r, c),
            VarKind::Scalar => (1, 1),
        }
    }

    /// Matrix value of the `k`-th scalar coordinate set to `v`.
    fn unit(&self, k: usize, v: f64) -> DMatrix<f64> {
        let (r, c) = self.shape();
        let mut m = DMatrix::zeros(r, c);
        match *self {
            VarKind::Symmetric(n) => {
                let (i, j) = sym_index(n, k);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            VarKind::Matrix(_, c) => m[(k / c, k % c)] = v,
            VarKind::Scalar => m[(0, 0)] = v,
        }
        m
    }
}

/// Upper-triangle position of the `k`-th coordinate, row by row.
fn sym_index(n: usize, mut k: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - i;
        if k < row {
            return (i, i + k);
        }
        k -= row;
    }
    panic!("symmetric coordinate out of range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `F(x) <= -margin I`
    NegDef,
    /// `F(x) >= margin I`
    PosDef,
}

/// `F(x) = F0 + sum_k x_k F_k` with one coefficient block per scalar unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub sense: Sense,
    pub constant: DMatrix<f64>,
    pub coefficients: Vec<DMatrix<f64>>,
}

impl Constraint {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for (xk, fk) in x.iter().zip(&self.coefficients) {
            if *xk != 0.0 {
                f += fk * *xk;
            }
        }
        f
    }
}

/// Variable values handed to constraint builders and returned by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Values {
    mats: Vec<DMatrix<f64>>,
}

impl Values {
    pub fn get(&self, id: VarId) -> &DMatrix<f64> {
        &self.mats[id.0]
    }

    pub fn scalar(&self, id: VarId) -> f64 {
        self.mats[id.0][(0, 0)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Margin is `margin_scale * (1 + ||F0||)` per constraint.
    pub margin_scale: f64,
}

impl Default for LmiProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl LmiProblem {
    pub fn new() -> Self {
        Self { variables: Vec::new(), constraints: Vec::new(), margin_scale: 1e-7 }
    }

    fn add_var(&mut self, name: &str, kind: VarKind) -> VarId {
        if !self.constraints.is_empty() {
            panic!("variables must be declared before constraints");
        }
        let offset = self.scalar_count();
        self.variables.push(Variable { name: name.to_string(), kind, offset });
        VarId(self.variables.len() - 1)
    }

    pub fn add_symmetric(&mut self, name: &str, n: usize) -> VarId {
        self.add_var(name, VarKind::Symmetric(n))
    }

    pub fn add_matrix(&mut self, name: &str, rows: usize, cols: usize) -> VarId {
        self.add_var(name, VarKind::Matrix(rows, cols))
    }

    pub fn add_scalar(&mut self, name: &str) -> VarId {
        self.add_var(name, VarKind::Scalar)
    }

    pub fn scalar_count(&self) -> usize {
        self.variables.iter().map(|v| v.kind.scalar_count()).sum()
    }

    /// Unpacks a flat coordinate vector into per-variable matrices.
    pub fn values(&self, x: &DVector<f64>) -> Values {
        let mats = self
            .variables
            .iter()
            .map(|v| {
                let (r, c) = v.kind.shape();
                let mut m = DMatrix::zeros(r, c);
                for k in 0..v.kind.scalar_count() {
                    m += v.kind.unit(k, x[v.offset + k]);
                }
                m
            })
            .collect();
        Values { mats }
    }

    fn values_for_coordinate(&self, index: usize, v: f64) -> Values {
        let mut x = DVector::zeros(self.scalar_count());
        x[index] = v;
        self.values(&x)
    }

    /// Adds a constraint given by `build`, which must be affine in the values
    /// and return a symmetric matrix.
    pub fn add_constraint<F>(&mut self, name: &str, sense: Sense, build: F) -> Result<()>
    where
        F: Fn(&Values) -> DMatrix<f64>,
    {
        let n = self.scalar_count();
        let constant = build(&self.values(&DVector::zeros(n)));
        let coefficients: Vec<_> = (0..n).map(|k| build(&self.values_for_coordinate(k, 1.0)) - &constant).collect();

        // affinity at an arbitrary point
        let probe = DVector::from_fn(n, |k, _| 0.7 * ((k + 1) as f64).sin());
        let direct = build(&self.values(&probe));
        let c = Constraint { name: name.to_string(), sense, constant, coefficients };
        let combined = c.evaluate(&probe);
        if (&direct - &combined).amax() > 1e-8 * (1.0 + direct.amax()) {
            return Err(Error::domain(format!("constraint '{name}' is not affine in the variables")));
        }
        self.push_constraint(c)
    }

    /// Adds a constraint given directly by its blocks.
    pub fn push_constraint(&mut self, c: Constraint) -> Result<()> {
        let d = c.constant.nrows();
        if d == 0 || !c.constant.is_square() {
            return Err(Error::domain(format!("constraint '{}' must be a non-empty square matrix", c.name)));
        }
        if c.coefficients.len() != self.scalar_count() {
            return Err(Error::domain(format!(
                "constraint '{}' has {} coefficient blocks, expected {}",
                c.name,
                c.coefficients.len(),
                self.scalar_count()
            )));
        }
        for m in std::iter::once(&c.constant).chain(&c.coefficients) {
            if m.shape() != (d, d) {
                return Err(Error::domain(format!("constraint '{}' has inconsistent block sizes", c.name)));
            }
            if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                return Err(Error::domain(format!("constraint '{}' is not symmetric", c.name)));
            }
        }
        self.constraints.push(c);
        Ok(())
    }

    /// Required definiteness margin of constraint `i`.
    pub fn margin(&self, i: usize) -> f64 {
        self.margin_scale * (1.0 + self.constraints[i].constant.norm())
    }

    /// Signed extreme eigenvalue of each constraint at `x` (max for negative
    /// definite, min for positive definite), from the independent checker.
    pub fn extremes(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        self.constraints
            .iter()
            .map(|c| {
                let (lo, hi) = eig_extreme(&c.evaluate(x))?;
                Ok(match c.sense {
                    Sense::NegDef => hi,
                    Sense::PosDef => lo,
                })
            })
            .collect()
    }

    /// Whether every constraint holds with its margin at `x`.
    pub fn is_feasible(&self, x: &DVector<f64>) -> Result<bool> {
        let ext = self.extremes(x)?;
        Ok(ext.iter().enumerate().all(|(i, &e)| match self.constraints[i].sense {
            Sense::NegDef => e <= -self.margin(i),
            Sense::PosDef => e >= self.margin(i),
        }))
    }

    /// Plain-text dump: dimensions, then every block row-major.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lmi 1");
        let _ = writeln!(s, "margin_scale {:e}", self.margin_scale);
        let _ = writeln!(s, "variables {}", self.variables.len());
        for v in &self.variables {
            match v.kind {
                VarKind::Symmetric(n) => writeln!(s, "var {} sym {n}", v.name),
                VarKind::Matrix(r, c) => writeln!(s, "var {} mat {r} {c}", v.name),
                VarKind::Scalar => writeln!(s, "var {} scalar", v.name),
            }
            .unwrap();
        }
        let _ = writeln!(s, "constraints {}", self.constraints.len());
        for c in &self.constraints {
            let sense = match c.sense {
                Sense::NegDef => "negdef",
                Sense::PosDef => "posdef",
            };
            let _ = writeln!(s, "constraint {} {sense} {}", c.name, c.dim());
            let _ = writeln!(s, "const {}", row_major(&c.constant));
            for (k, f) in c.coefficients.iter().enumerate() {
                if f.amax() != 0.0 {
                    let _ = writeln!(s, "coef {k} {}", row_major(f));
                }
            }
        }
        s
    }

    pub fn load(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).peekable();
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::parse(format!("unexpected end while reading {what}")));
        if next("header")? != "lmi 1" {
            return Err(Error::parse("missing 'lmi 1' header"));
        }
        let mut p = LmiProblem::new();
        p.margin_scale = keyed(next("margin")?, "margin_scale")?;
        let nv: usize = keyed(next("variable count")?, "variables")?;
        for _ in 0..nv {
            let line = next("variable")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let kind = match f.as_slice() {
                ["var", _, "sym", n] => VarKind::Symmetric(num(n)?),
                ["var", _, "mat", r, c] => VarKind::Matrix(num(r)?, num(c)?),
                ["var", _, "scalar"] => VarKind::Scalar,
                _ => return Err(Error::parse(format!("bad variable line '{line}'"))),
            };
            p.add_var(f[1], kind);
        }
        let n = p.scalar_count();
        let nc: usize = keyed(next("constraint count")?, "constraints")?;
        let rest: Vec<&str> = lines.collect();
        let mut it = rest.into_iter().peekable();
        for _ in 0..nc {
            let head = it.next().ok_or_else(|| Error::parse("missing constraint"))?;
            let f: Vec<&str> = head.split_whitespace().collect();
            let (name, sense, d) = match f.as_slice() {
                ["constraint", name, sense, d] => {
                    let sense = match *sense {
                        "negdef" => Sense::NegDef,
                        "posdef" => Sense::PosDef,
                        other => return Err(Error::parse(format!("unknown sense '{other}'"))),
                    };
                    (name.to_string(), sense, num::<usize>(d)?)
                }
                _ => return Err(Error::parse(format!("bad constraint line '{head}'"))),
            };
            let cl = it.next().ok_or_else(|| Error::parse("missing constant block"))?;
            let constant = parse_block(cl.strip_prefix("const ").ok_or_else(|| Error::parse("expected 'const'"))?, d)?;
            let mut coefficients = vec![DMatrix::zeros(d, d); n];
            while let Some(l) = it.peek() {
                let Some(body) = l.strip_prefix("coef ") else { break };
                let (k, vals) = body.split_once(' ').ok_or_else(|| Error::parse("bad coef line"))?;
                let k: usize = num(k)?;
                if k >= n {
                    return Err(Error::parse(format!("coefficient index {k} out of range")));
                }
                coefficients[k] = parse_block(vals, d)?;
                it.next();
            }
            p.push_constraint(Constraint { name, sense, constant, coefficients })?;
        }
        Ok(p)
    }
}

fn row_major(m: &DMatrix<f64>) -> String {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(format!("{:.16e}", m[(i, j)]));
        }
    }
    out.join(" ")
}

fn parse_block(s: &str, d: usize) -> Result<DMatrix<f64>> {
    let vals: Vec<f64> = s.split_whitespace().map(num).collect::<Result<_>>()?;
    if vals.len() != d * d {
        return Err(Error::parse(format!("block has {} entries, expected {}", vals.len(), d * d)));
    }
    Ok(DMatrix::from_row_slice(d, d, &vals))
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::parse(format!("cannot parse '{s}'")))
}

fn keyed<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    match line.split_once(' ') {
        Some((k, v)) if k == key => num(v.trim()),
        _ => Err(Error::parse(format!("expected '{key} <value>', got '{line}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_coordinates_cover_upper_triangle() {
        let seen: Vec<_> = (0..6).map(|k| sym_index(3, k)).collect();
        assert_eq!(seen, vec![(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]);
    }

    #[test]
    fn probing_recovers_blocks() {
        let mut p = LmiProblem::new();
        let x = p.add_symmetric("X", 2);
        let t = p.add_scalar("t");
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        p.add_constraint("lyap", Sense::NegDef, |v| {
            let xm = v.get(x);
            a.transpose() * xm + xm * &a + DMatrix::identity(2, 2) * v.scalar(t)
        })
        .unwrap();
        assert_eq!(p.scalar_count(), 4);
        let probe = DVector::from_vec(vec![1.0, 0.5, 2.0, -0.3]);
        let vals = p.values(&probe);
        let xm = vals.get(x);
        assert_eq!(xm[(0, 1)], 0.5);
        assert_eq!(xm[(1, 0)], 0.5);
        let direct = a.transpose() * xm + xm * &a - DMatrix::identity(2, 2) * 0.3;
        assert!((p.constraints[0].evaluate(&probe) - direct).amax() < 1e-14);
    }

    #[test]
    fn rejects_non_affine_and_asymmetric() {
        let mut p = LmiProblem::new();
        let t = p.add_scalar("t");
        assert!(p.add_constraint("sq", Sense::NegDef, |v| DMatrix::from_element(1, 1, v.scalar(t).powi(2))).is_err());
        assert!(p
            .add_constraint("asym", Sense::NegDef, |v| DMatrix::from_row_slice(2, 2, &[v.scalar(t), 1.0, 0.0, 0.0]))
            .is_err());
    }

    #[test]
    fn margin_grows_with_constant() {
        let mut p = LmiProblem::new();
        let t = p.add_scalar("t");
        p.add_constraint("a", Sense::PosDef, |v| DMatrix::from_element(1, 1, v.scalar(t))).unwrap();
        p.add_constraint("b", Sense::NegDef, |v| DMatrix::from_element(1, 1, v.scalar(t) - 3.0)).unwrap();
        assert_eq!(p.margin(0), 1e-7);
        assert!((p.margin(1) - 4e-7).abs() < 1e-20);
    }

    #[test]
    fn dump_load_roundtrip() {
        let mut p = LmiProblem::new();
        let x = p.add_symmetric("P", 2);
        let k = p.add_matrix("K", 1, 2);
        let t = p.add_scalar("tau");
        p.add_constraint("c0", Sense::NegDef, |v| {
            let mut m = v.get(x) * 1.5 - DMatrix::identity(2, 2) * (0.1 + v.scalar(t));
            m[(0, 1)] += v.get(k)[(0, 1)] / 3.0;
            m[(1, 0)] += v.get(k)[(0, 1)] / 3.0;
            m
        })
        .unwrap();
        p.add_constraint("c1", Sense::PosDef, |v| v.get(x).clone()).unwrap();
        let text = p.dump();
        let q = LmiProblem::load(&text).unwrap();
        assert_eq!(q.variables, p.variables);
        assert_eq!(q.constraints, p.constraints);
        assert_eq!(q.dump(), text);
        assert!(LmiProblem::load("lmi 2\n").is_err());
        assert!(LmiProblem::load(&text.replace("negdef", "sideways")).is_err());
    }
}
