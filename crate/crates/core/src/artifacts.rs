//! Text artifacts: trajectories, reductions, polytopes, gains and metrics.
//!
//! Numbers are written with 17 significant digits so parsed values round-trip
//! exactly. Keyed files are `key value...` lines; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix4, RowVector4};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::polytope::{Polytope, PolytopeConfig};
use crate::scheduling::{NormalizationLaw, PcaReduction, SchedulingVector, Trajectory, Vector5, THETA_DIM};
use crate::vehicle::VehicleParams;

pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn join(vals: impl IntoIterator<Item = f64>) -> String {
    vals.into_iter().map(fmt_num).collect::<Vec<_>>().join(" ")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parsed `key value...` file. Repeated keys keep every occurrence in order.
#[derive(Debug, Clone, Default)]
pub struct KeyedText {
    entries: Vec<(String, Vec<String>)>,
}

impl KeyedText {
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let mut it = l.split_whitespace().map(str::to_string);
                let key = it.next().unwrap_or_default();
                (key, it.collect())
            })
            .collect();
        Self { entries }
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a [String]> + 'a {
        self.entries.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_slice())
    }

    pub fn get(&self, key: &str) -> Result<&[String]> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::parse(format!("missing key '{key}'")))
    }

    pub fn word(&self, key: &str) -> Result<&str> {
        self.get(key)?.first().map(String::as_str).ok_or_else(|| Error::parse(format!("key '{key}' has no value")))
    }

    pub fn number<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        parse_num(self.word(key)?)
    }

    pub fn numbers(&self, key: &str, expected: usize) -> Result<Vec<f64>> {
        parse_list(self.get(key)?, expected, key)
    }
}

pub fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::parse(format!("cannot parse number '{s}'")))
}

fn parse_list(words: &[String], expected: usize, what: &str) -> Result<Vec<f64>> {
    if words.len() != expected {
        return Err(Error::parse(format!("'{what}' has {} values, expected {expected}", words.len())));
    }
    words.iter().map(|w| parse_num(w)).collect()
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

// ---- trajectory -----------------------------------------------------------

pub const TRAJECTORY_HEADER: &str = "t,vx,caf,car,theta1,theta2,theta3,theta4,theta5";

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::with_capacity(traj.len() * 200);
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for (k, th) in traj.samples.iter().enumerate() {
        let t = k as f64 * traj.period;
        let row = [t, th.vx(), th.c_af(), th.c_ar()].into_iter().chain(th.0.iter().copied());
        s.push_str(&row.map(fmt_num).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::parse("empty trajectory file"))?;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(Error::parse(format!("unexpected trajectory header '{header}'")));
    }
    let mut samples = Vec::new();
    let mut times = Vec::new();
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|w| parse_num(w.trim()))
            .collect::<Result<_>>()
            .map_err(|e| Error::parse(format!("row {}: {e}", i + 2)))?;
        if vals.len() != 4 + THETA_DIM {
            return Err(Error::parse(format!("row {} has {} columns, expected {}", i + 2, vals.len(), 4 + THETA_DIM)));
        }
        times.push(vals[0]);
        samples.push(SchedulingVector(Vector5::from_column_slice(&vals[4..])));
    }
    if samples.is_empty() {
        return Err(Error::parse("trajectory has no samples"));
    }
    let period = if times.len() > 1 { times[1] - times[0] } else { 0.01 };
    let traj = Trajectory { period, samples };
    traj.validate()?;
    Ok(traj)
}

// ---- reduction ------------------------------------------------------------

pub fn reduction_text(red: &PcaReduction) -> String {
    let mut s = String::from("# pca reduction, basis row-major 5 x m\n");
    let _ = writeln!(s, "m {}", red.dim());
    let _ = writeln!(s, "center {}", join(red.law.center.iter().copied()));
    let _ = writeln!(s, "half_range {}", join(red.law.half_range.iter().copied()));
    let _ = writeln!(s, "singular_values {}", join(red.singular_values.iter().copied()));
    let mut rows = Vec::new();
    for i in 0..THETA_DIM {
        for j in 0..red.dim() {
            rows.push(red.basis[(i, j)]);
        }
    }
    let _ = writeln!(s, "basis {}", join(rows));
    s
}

pub fn parse_reduction(text: &str) -> Result<PcaReduction> {
    let kv = KeyedText::parse(text);
    let m: usize = kv.number("m")?;
    if !(1..=THETA_DIM).contains(&m) {
        return Err(Error::parse(format!("reduction dimension {m} out of range")));
    }
    let center = Vector5::from_vec(kv.numbers("center", THETA_DIM)?);
    let half_range = Vector5::from_vec(kv.numbers("half_range", THETA_DIM)?);
    let singular_values = Vector5::from_vec(kv.numbers("singular_values", THETA_DIM)?);
    let basis = DMatrix::from_row_slice(THETA_DIM, m, &kv.numbers("basis", THETA_DIM * m)?);
    Ok(PcaReduction { basis, singular_values, law: NormalizationLaw { center, half_range } })
}

// ---- polytope -------------------------------------------------------------

pub fn polytope_text(poly: &Polytope) -> String {
    let m = poly.dim();
    let mut s = String::from("# simplex vertices, column-major m x (m+1)\n");
    let _ = writeln!(s, "m {m}");
    let _ = writeln!(s, "corners {}", poly.corners.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "));
    let _ = writeln!(s, "inflation {}", fmt_num(poly.inflation));
    let _ = writeln!(s, "vertices {}", join(poly.vertices.iter().copied()));
    for (p, th) in poly.vertex_thetas.iter().enumerate() {
        let _ = writeln!(s, "vertex_theta {p} {}", join(th.0.iter().copied()));
    }
    s
}

pub fn parse_polytope(
    text: &str,
    reduction: &PcaReduction,
    params: &VehicleParams,
    cfg: &PolytopeConfig,
) -> Result<Polytope> {
    let kv = KeyedText::parse(text);
    let m: usize = kv.number("m")?;
    if m != reduction.dim() {
        return Err(Error::Config(format!("polytope is {m}-dimensional but the reduction has m = {}", reduction.dim())));
    }
    let corners = kv.get("corners")?.iter().map(|w| parse_num(w)).collect::<Result<Vec<usize>>>()?;
    let inflation: f64 = kv.number("inflation")?;
    let vertices = DMatrix::from_column_slice(m, m + 1, &kv.numbers("vertices", m * (m + 1))?);
    Polytope::from_vertices(vertices, corners, inflation, reduction, params, cfg)
}

/// Hash tying gains to the reduction and polytope they were designed on.
pub fn provenance_hash(reduction: &PcaReduction, poly: &Polytope) -> String {
    let mut text = reduction_text(reduction);
    text.push_str(&polytope_text(poly));
    sha256_hex(text.as_bytes())
}

// ---- gains ----------------------------------------------------------------

pub fn gain_line(k: &RowVector4<f64>) -> String {
    join(k.iter().copied())
}

pub fn parse_gain(words: &[String], what: &str) -> Result<RowVector4<f64>> {
    Ok(RowVector4::from_row_slice(&parse_list(words, 4, what)?))
}

pub fn matrix4_line(m: &Matrix4<f64>) -> String {
    join(m.transpose().iter().copied())
}

pub fn parse_matrix4(words: &[String], what: &str) -> Result<Matrix4<f64>> {
    Ok(Matrix4::from_row_slice(&parse_list(words, 16, what)?))
}

// ---- metrics --------------------------------------------------------------

pub fn key_values_text(pairs: &[(&str, f64)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {}\n", fmt_num(*v))).collect()
}

pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(format!("expected 'key = value', got '{line}'")))?;
        out.insert(k.trim().to_string(), parse_num(v.trim())?);
    }
    Ok(out)
}

/// Coordinates of `eta` as a text line, for logs.
pub fn vector_line(v: &DVector<f64>) -> String {
    join(v.iter().copied())
}
