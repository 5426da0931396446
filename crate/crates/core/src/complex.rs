//! Chain complexes over GF(2) built from critical points and orbit parities:
//! the plain complex, the complex of phase circles, and the complex of
//! `{z, -z}` classes. Also homology, continuation maps and their induced
//! maps on homology.

use serde::{Deserialize, Serialize};

use crate::critical::{CritWindow, CriticalPoint};
use crate::error::{Error, Result};
use crate::gf2::MatGF2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Plain,
    S1,
    Z2,
}

/// Parity of the orbit count between two generators, given by their
/// positions in the window's point list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityEntry {
    pub from: usize,
    pub to: usize,
    /// `None` when the count is undecided.
    pub parity: Option<u8>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainComplexGF2 {
    pub flavor: Flavor,
    pub window: (f64, f64),
    /// Lowest occupied degree; degree `min_degree + k` is stored at slot `k`.
    pub min_degree: i64,
    /// Generators per degree.
    pub generators: Vec<Vec<CriticalPoint>>,
    /// Positions of the generators in the source window.
    pub generator_ids: Vec<Vec<usize>>,
    /// `boundary[k]` maps degree `min_degree + k` to the degree below; its
    /// shape is `(n_{k-1}, n_k)`, with `n_{-1} = 0`.
    pub boundary: Vec<MatGF2>,
    /// Lowest and highest occupied degree, `None` for an empty complex.
    pub edge_degrees: Option<(i64, i64)>,
}

impl ChainComplexGF2 {
    pub fn degrees(&self) -> Vec<i64> {
        (0..self.generators.len() as i64).map(|k| self.min_degree + k).collect()
    }

    pub fn rank_at(&self, degree: i64) -> usize {
        self.slot(degree).map_or(0, |k| self.generators[k].len())
    }

    fn slot(&self, degree: i64) -> Option<usize> {
        let k = degree - self.min_degree;
        (k >= 0 && (k as usize) < self.generators.len()).then_some(k as usize)
    }

    /// Boundary from `degree` to `degree - 1`, a zero matrix outside the range.
    pub fn boundary_at(&self, degree: i64) -> MatGF2 {
        match self.slot(degree) {
            Some(k) => self.boundary[k].clone(),
            None => MatGF2::zeros(self.rank_at(degree - 1), self.rank_at(degree)),
        }
    }

    /// Checks `d_{k-1} d_k = 0` for every degree; returns the failing degrees.
    pub fn d_squared_failures(&self) -> Vec<i64> {
        self.degrees()
            .into_iter()
            .filter(|&d| {
                let lower = self.boundary_at(d - 1);
                let upper = self.boundary_at(d);
                !lower.mul(&upper).map(|m| m.is_zero()).unwrap_or(false)
            })
            .collect()
    }

    pub fn is_edge(&self, degree: i64) -> bool {
        self.edge_degrees.is_some_and(|(lo, hi)| degree == lo || degree == hi)
    }

    /// Plain-text 0/1 grid of the boundary leaving `degree`, one row per line.
    pub fn boundary_text(&self, degree: i64) -> String {
        let m = self.boundary_at(degree);
        let mut out = format!("# boundary from degree {degree} ({} x {})\n", m.rows(), m.cols());
        for row in m.to_rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Groups window points by degree and fills the boundary from `entries`.
/// Every pair of generators with degree difference one needs a decided entry.
fn assemble(
    flavor: Flavor,
    window: &CritWindow,
    degree_of: impl Fn(&CriticalPoint) -> i64,
    entries: &[ParityEntry],
) -> Result<ChainComplexGF2> {
    let pts = &window.points;
    if pts.is_empty() {
        return Ok(ChainComplexGF2 {
            flavor,
            window: (window.a, window.b),
            min_degree: 0,
            generators: Vec::new(),
            generator_ids: Vec::new(),
            boundary: Vec::new(),
            edge_degrees: None,
        });
    }
    let degs: Vec<i64> = pts.iter().map(&degree_of).collect();
    let lo = *degs.iter().min().expect("nonempty");
    let hi = *degs.iter().max().expect("nonempty");
    let len = (hi - lo + 1) as usize;
    let mut ids: Vec<Vec<usize>> = vec![Vec::new(); len];
    for (i, d) in degs.iter().enumerate() {
        ids[(d - lo) as usize].push(i);
    }
    let generators: Vec<Vec<CriticalPoint>> =
        ids.iter().map(|v| v.iter().map(|&i| pts[i].clone()).collect()).collect();

    for e in entries {
        if e.from >= pts.len() || e.to >= pts.len() {
            return Err(Error::Complex(format!("parity entry ({}, {}) outside the window", e.from, e.to)));
        }
    }
    let mut boundary = Vec::with_capacity(len);
    let mut missing = Vec::new();
    for k in 0..len {
        let below: &[usize] = if k == 0 { &[] } else { &ids[k - 1] };
        let mut m = MatGF2::zeros(below.len(), ids[k].len());
        for (c, &from) in ids[k].iter().enumerate() {
            for (r, &to) in below.iter().enumerate() {
                match entries.iter().find(|e| e.from == from && e.to == to) {
                    Some(ParityEntry { parity: Some(p), .. }) => m.set(r, c, *p),
                    Some(_) => missing.push(format!("({from} -> {to}) undecided")),
                    None => missing.push(format!("({from} -> {to}) missing")),
                }
            }
        }
        boundary.push(m);
    }
    if !missing.is_empty() {
        return Err(Error::Undecided(format!("cannot assemble the complex: {}", missing.join(", "))));
    }
    let cx = ChainComplexGF2 {
        flavor,
        window: (window.a, window.b),
        min_degree: lo,
        generators,
        generator_ids: ids,
        boundary,
        edge_degrees: Some((lo, hi)),
    };
    let bad = cx.d_squared_failures();
    if !bad.is_empty() {
        return Err(Error::Complex(format!("boundary does not square to zero at degrees {bad:?}")));
    }
    Ok(cx)
}

/// Complex of individual critical points graded by relative index.
pub fn build_plain_complex(window: &CritWindow, parities: &[ParityEntry]) -> Result<ChainComplexGF2> {
    assemble(Flavor::Plain, window, |p| p.rel_index, parities)
}

/// Complex with one generator per phase circle, graded by the circle's
/// (even) relative index. `max_parities` holds the counts between the
/// maxima of the broken circles, indexed by circle position.
pub fn build_s1_complex(circles: &CritWindow, max_parities: &[ParityEntry]) -> Result<ChainComplexGF2> {
    assemble(Flavor::S1, circles, |p| p.rel_index, max_parities)
}

/// Complex of `{z, -z}` classes; entries are `<x, y> + <x, -y>` mod 2.
pub fn build_z2_complex(classes: &CritWindow, class_parities: &[ParityEntry]) -> Result<ChainComplexGF2> {
    assemble(Flavor::Z2, classes, |p| p.rel_index, class_parities)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomologyTable {
    pub flavor: Flavor,
    pub degrees: Vec<i64>,
    pub generators: Vec<usize>,
    pub dims: Vec<usize>,
    pub edge: Vec<bool>,
}

impl HomologyTable {
    pub fn dim(&self, degree: i64) -> usize {
        self.degrees.iter().position(|&d| d == degree).map_or(0, |k| self.dims[k])
    }

    /// Dimensions at degrees that are not window edges.
    pub fn interior(&self) -> Vec<(i64, usize)> {
        self.degrees
            .iter()
            .zip(&self.dims)
            .zip(&self.edge)
            .filter(|(_, e)| !**e)
            .map(|((d, n), _)| (*d, *n))
            .collect()
    }
}

/// `dim H_k = n_k - rank d_k - rank d_{k+1}`.
pub fn homology(cx: &ChainComplexGF2) -> HomologyTable {
    let degrees = cx.degrees();
    let mut dims = Vec::new();
    let mut generators = Vec::new();
    for &d in &degrees {
        let n = cx.rank_at(d);
        generators.push(n);
        dims.push(n - cx.boundary_at(d).rank() - cx.boundary_at(d + 1).rank());
    }
    let edge = degrees.iter().map(|&d| cx.is_edge(d)).collect();
    HomologyTable { flavor: cx.flavor, degrees, generators, dims, edge }
}

/// Per-degree matrices of a chain map between two complexes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationMap {
    pub degrees: Vec<i64>,
    /// `maps[k]` has shape `(n2_k, n1_k)`.
    pub maps: Vec<MatGF2>,
    /// Degrees where `d2 Phi + Phi d1` is nonzero.
    pub chain_map_failures: Vec<i64>,
}

impl ContinuationMap {
    pub fn at(&self, degree: i64) -> Option<&MatGF2> {
        self.degrees.iter().position(|&d| d == degree).map(|k| &self.maps[k])
    }

    pub fn is_chain_map(&self) -> bool {
        self.chain_map_failures.is_empty()
    }
}

/// Assembles `Phi` from parities of orbits between generators of equal
/// degree. Entries index the two source windows (`from` in the first,
/// `to` in the second); a missing entry is an error.
pub fn continuation_map(
    c1: &ChainComplexGF2,
    c2: &ChainComplexGF2,
    entries: &[ParityEntry],
) -> Result<ContinuationMap> {
    let lo = c1.min_degree.min(c2.min_degree);
    let hi = (c1.min_degree + c1.generators.len() as i64).max(c2.min_degree + c2.generators.len() as i64) - 1;
    let degrees: Vec<i64> = (lo..=hi).collect();
    let ids = |c: &ChainComplexGF2, d: i64| -> Vec<usize> { c.slot(d).map_or(Vec::new(), |k| c.generator_ids[k].clone()) };
    let mut maps = Vec::new();
    let mut missing = Vec::new();
    for &d in &degrees {
        let (src, dst) = (ids(c1, d), ids(c2, d));
        let mut m = MatGF2::zeros(dst.len(), src.len());
        for (c, &from) in src.iter().enumerate() {
            for (r, &to) in dst.iter().enumerate() {
                match entries.iter().find(|e| e.from == from && e.to == to) {
                    Some(ParityEntry { parity: Some(p), .. }) => m.set(r, c, *p),
                    Some(_) => missing.push(format!("({from} -> {to}) undecided")),
                    None => missing.push(format!("({from} -> {to}) missing")),
                }
            }
        }
        maps.push(m);
    }
    if !missing.is_empty() {
        return Err(Error::Undecided(format!("cannot assemble the continuation map: {}", missing.join(", "))));
    }
    let mut out = ContinuationMap { degrees, maps, chain_map_failures: Vec::new() };
    out.chain_map_failures = chain_map_failures(c1, c2, &out)?;
    Ok(out)
}

fn chain_map_failures(c1: &ChainComplexGF2, c2: &ChainComplexGF2, phi: &ContinuationMap) -> Result<Vec<i64>> {
    let mut bad = Vec::new();
    for &d in &phi.degrees {
        let phi_d = phi.at(d).cloned().unwrap_or_else(|| MatGF2::zeros(c2.rank_at(d), c1.rank_at(d)));
        let phi_below =
            phi.at(d - 1).cloned().unwrap_or_else(|| MatGF2::zeros(c2.rank_at(d - 1), c1.rank_at(d - 1)));
        let left = c2.boundary_at(d).mul(&phi_d)?;
        let right = phi_below.mul(&c1.boundary_at(d))?;
        if !left.add(&right)?.is_zero() {
            bad.push(d);
        }
    }
    Ok(bad)
}

/// Rank of the map induced on homology at each degree of `phi`, computed by
/// pushing a cycle basis forward and reducing modulo boundaries.
pub fn induced_ranks(c1: &ChainComplexGF2, c2: &ChainComplexGF2, phi: &ContinuationMap) -> Result<Vec<(i64, usize)>> {
    let mut out = Vec::new();
    for (k, &d) in phi.degrees.iter().enumerate() {
        let cycles = c1.boundary_at(d).nullspace();
        let n2 = c2.rank_at(d);
        let bnd = c2.boundary_at(d + 1);
        let base_rank = bnd.rank();
        // Columns: boundaries of degree d+1, then images of the cycles.
        let mut cols: Vec<Vec<u8>> = (0..bnd.cols()).map(|j| (0..n2).map(|i| bnd.get(i, j)).collect()).collect();
        for z in &cycles {
            let col = MatGF2::from_rows(&z.iter().map(|&v| vec![v]).collect::<Vec<_>>())?;
            let img = phi.maps[k].mul(&col)?;
            cols.push((0..n2).map(|i| img.get(i, 0)).collect());
        }
        let total = if cols.is_empty() || n2 == 0 {
            0
        } else {
            MatGF2::from_rows(&cols)?.rank()
        };
        out.push((d, total - base_rank));
    }
    Ok(out)
}

/// Checks `pi d = d_q pi` for a projection `pi` from a complex onto its
/// quotient, given per degree of `plain` as `(n_q, n_plain)` matrices.
pub fn quotient_square_commutes(
    plain: &ChainComplexGF2,
    quotient: &ChainComplexGF2,
    projection: &[(i64, MatGF2)],
) -> Result<bool> {
    let proj = |d: i64| -> MatGF2 {
        projection
            .iter()
            .find(|(k, _)| *k == d)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(|| MatGF2::zeros(quotient.rank_at(d), plain.rank_at(d)))
    };
    for d in plain.degrees() {
        let left = proj(d - 1).mul(&plain.boundary_at(d))?;
        let right = quotient.boundary_at(d).mul(&proj(d))?;
        if left != right {
            return Ok(false);
        }
    }
    Ok(true)
}
