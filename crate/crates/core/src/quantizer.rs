//! Voronoi vector quantization of an empirical candidate pool.
//!
//! The target law is known only through a large simulated pool. Lloyd's
//! fixed-point iteration (k-means) places `N` centroids; each centroid owns
//! the pool points nearer to it than to any other (ties go to the lowest
//! index), its cell probability is the fraction of pool points it owns, and
//! drawing uniformly among its points samples the law conditioned on the cell.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

/// Finite sample standing in for the law of a dependent block.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    points: Matrix,
}

impl CandidatePool {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::Config("candidate pool needs at least one row and one column".into()));
        }
        if let Some(pos) = points.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "candidate pool has a non-finite entry at row {}",
                pos / points.ncols()
            )));
        }
        Ok(Self { points })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn distinct_count(&self) -> usize {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let cmp = |a: &usize, b: &usize| {
            self.point(*a)
                .iter()
                .zip(self.point(*b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        };
        idx.sort_unstable_by(cmp);
        idx.dedup_by(|a, b| cmp(a, b).is_eq());
        idx.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LloydSettings {
    pub max_iter: usize,
    /// Stop once the relative distortion improvement falls below this.
    pub rel_tol: f64,
    /// Independent k-means++ starts; the lowest final distortion wins.
    pub restarts: usize,
}

impl LloydSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol.is_finite() && self.rel_tol >= 0.0) {
            return Err(Error::Config(format!("lloyd rel_tol must be finite and >= 0, got {}", self.rel_tol)));
        }
        if self.restarts == 0 {
            return Err(Error::Config("lloyd restarts must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for LloydSettings {
    fn default() -> Self {
        Self { max_iter: 200, rel_tol: 1e-8, restarts: 5 }
    }
}

/// Centroids, cell probabilities and the pool's cell membership.
#[derive(Debug, Clone)]
pub struct Quantizer {
    centroids: Matrix,
    probabilities: Vec<f64>,
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    distortion: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    restarts: usize,
}

impl Quantizer {
    /// Rebuilds a quantizer from centroids and a pool assignment.
    ///
    /// Validates that every cell is nonempty and every assigned index is the
    /// nearest centroid of its pool point.
    pub fn from_parts(centroids: Matrix, assignment: Vec<usize>, pool: &CandidatePool) -> Result<Self> {
        if centroids.ncols() != pool.dim() {
            return Err(Error::Dimension { expected: pool.dim(), found: centroids.ncols() });
        }
        if assignment.len() != pool.len() {
            return Err(Error::Dimension { expected: pool.len(), found: assignment.len() });
        }
        let n = centroids.nrows();
        let mut members = vec![Vec::new(); n];
        let mut total = 0.0;
        for (m, &cell) in assignment.iter().enumerate() {
            if cell >= n {
                return Err(Error::Format(format!("pool row {m} assigned to missing cell {cell}")));
            }
            let (nearest, d2) = nearest(&centroids, pool.point(m));
            if nearest != cell {
                return Err(Error::Format(format!(
                    "pool row {m} assigned to cell {cell} but nearest centroid is {nearest}"
                )));
            }
            total += d2;
            members[cell].push(m);
        }
        if let Some(empty) = members.iter().position(|c| c.is_empty()) {
            return Err(Error::Format(format!("cell {empty} owns no pool point")));
        }
        let probabilities = cell_probabilities(&members, pool.len());
        let distortion = total / pool.len() as f64;
        Ok(Self {
            centroids,
            probabilities,
            assignment,
            members,
            distortion,
            trace: vec![distortion],
            iterations: 0,
            converged: true,
            restarts: 0,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Pool row indices owned by `cell`.
    pub fn members(&self, cell: usize) -> &[usize] {
        &self.members[cell]
    }

    /// Empirical distortion of the returned centroids on the fitting pool.
    pub fn distortion(&self) -> f64 {
        self.distortion
    }

    /// Distortion after each assignment step of the winning restart.
    pub fn distortion_trace(&self) -> &[f64] {
        &self.trace
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// True when the iteration reached an exact fixed point (assignment stable).
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    /// Nearest centroid, lowest index on ties.
    pub fn assign(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), found: point.len() });
        }
        Ok(nearest(&self.centroids, point).0)
    }

    /// Draws uniformly among the pool points of `cell`.
    pub fn sample_cell<'p, R: Rng + ?Sized>(
        &self,
        pool: &'p CandidatePool,
        cell: usize,
        rng: &mut R,
    ) -> Result<&'p [f64]> {
        if cell >= self.n_cells() {
            return Err(Error::Config(format!("cell {cell} out of range ({} cells)", self.n_cells())));
        }
        if pool.len() != self.assignment.len() {
            return Err(Error::Dimension { expected: self.assignment.len(), found: pool.len() });
        }
        let members = &self.members[cell];
        if members.is_empty() {
            return Err(Error::Numerical(format!("cell {cell} is empty")));
        }
        Ok(pool.point(members[rng.random_range(0..members.len())]))
    }

    /// Writes centroids, probabilities and assignments as CSV sections.
    pub fn write_csv<W: Write>(&self, w: &mut W, metadata: &[String]) -> Result<()> {
        csvio::write_metadata(w, metadata)?;
        csvio::write_metadata(
            w,
            &[format!(
                "cells={} dim={} pool={} distortion={} restarts={}",
                self.n_cells(),
                self.dim(),
                self.assignment.len(),
                csvio::fmt_f64(self.distortion),
                self.restarts
            )],
        )?;
        writeln!(w, "[centroids]")?;
        let header: Vec<String> = (0..self.dim()).map(|j| format!("c{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.centroids.rows() {
            csvio::write_row(w, row)?;
        }
        writeln!(w, "[probabilities]")?;
        writeln!(w, "probability")?;
        for &p in &self.probabilities {
            csvio::write_row(w, &[p])?;
        }
        writeln!(w, "[assignments]")?;
        writeln!(w, "cell")?;
        for &a in &self.assignment {
            writeln!(w, "{a}")?;
        }
        Ok(())
    }

    /// Parses [`Quantizer::write_csv`] output against the pool it was fitted on.
    pub fn read_csv(text: &str, pool: &CandidatePool) -> Result<Self> {
        let mut section = "";
        let mut header_seen = false;
        let mut centroids = Vec::new();
        let mut probabilities = Vec::new();
        let mut assignment = Vec::new();
        let mut width = 0;
        for (no, line) in csvio::data_lines(text) {
            if line.starts_with('[') && line.ends_with(']') {
                section = match line {
                    "[centroids]" => "centroids",
                    "[probabilities]" => "probabilities",
                    "[assignments]" => "assignments",
                    other => return Err(Error::Format(format!("line {no}: unknown section {other}"))),
                };
                header_seen = false;
                continue;
            }
            if !header_seen {
                width = line.split(',').count();
                header_seen = true;
                continue;
            }
            match section {
                "centroids" => centroids.push(csvio::parse_row(no, line, width)?),
                "probabilities" => probabilities.push(csvio::parse_row(no, line, 1)?[0]),
                "assignments" => assignment.push(
                    line.parse::<usize>()
                        .map_err(|_| Error::Format(format!("line {no}: bad cell index '{line}'")))?,
                ),
                _ => return Err(Error::Format(format!("line {no}: data outside any section"))),
            }
        }
        let mut q = Self::from_parts(Matrix::from_rows(&centroids)?, assignment, pool)?;
        // the summary line carries the restart count of the original fit
        if let Some(r) = text
            .lines()
            .filter_map(|l| l.strip_prefix("# cells="))
            .flat_map(str::split_whitespace)
            .find_map(|f| f.strip_prefix("restarts="))
        {
            q.restarts = r.parse().map_err(|_| Error::Format(format!("bad restart count '{r}'")))?;
        }
        if probabilities.len() != q.n_cells()
            || probabilities.iter().zip(&q.probabilities).any(|(a, b)| a.to_bits() != b.to_bits())
        {
            return Err(Error::Format("stored probabilities disagree with the assignment counts".into()));
        }
        Ok(q)
    }
}

fn cell_probabilities(members: &[Vec<usize>], m: usize) -> Vec<f64> {
    members.iter().map(|c| c.len() as f64 / m as f64).collect()
}

#[inline]
fn nearest(centroids: &Matrix, point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.rows().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Nearest-centroid assignment of every pool point plus its squared distance.
#[cfg(test)]
fn assign_all(centroids: &Matrix, pool: &CandidatePool, out: &mut [(usize, f64)]) {
    Assigner::new(pool).assign(centroids, out);
}

/// Assignment strategy for one pool. Scalar pools are sorted once so each
/// assignment is a single merge-like sweep against the sorted centroids.
struct Assigner<'a> {
    pool: &'a CandidatePool,
    sorted: Option<Vec<usize>>,
}

impl<'a> Assigner<'a> {
    fn new(pool: &'a CandidatePool) -> Self {
        let sorted = (pool.dim() == 1).then(|| {
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            idx.sort_by(|&a, &b| pool.point(a)[0].total_cmp(&pool.point(b)[0]));
            idx
        });
        Self { pool, sorted }
    }

    fn assign(&self, centroids: &Matrix, out: &mut [(usize, f64)]) {
        match &self.sorted {
            Some(sorted) => assign_sorted_1d(centroids, self.pool, sorted, out),
            None => out
                .par_iter_mut()
                .with_min_len(1024)
                .enumerate()
                .for_each(|(m, slot)| *slot = nearest(centroids, self.pool.point(m))),
        }
    }
}

/// Nearest among the runs of equal centroid values at `p` and `p - 1`, where
/// `p` is the first sorted position with value `>= x`. Same tie rule as [`nearest`].
#[inline]
fn nearest_sorted(order: &[(f64, usize)], p: usize, x: f64) -> (usize, f64) {
    let k = order.len();
    let mut best = (usize::MAX, f64::INFINITY);
    let mut consider = |pos: usize| {
        let (c, idx) = order[pos];
        let d = (x - c) * (x - c);
        if d < best.1 || (d == best.1 && idx < best.0) {
            best = (idx, d);
        }
    };
    if p < k {
        let v = order[p].0;
        let mut q = p;
        while q < k && order[q].0 == v {
            consider(q);
            q += 1;
        }
    }
    if p > 0 {
        let v = order[p - 1].0;
        let mut q = p;
        while q > 0 && order[q - 1].0 == v {
            consider(q - 1);
            q -= 1;
        }
    }
    best
}

fn assign_sorted_1d(centroids: &Matrix, pool: &CandidatePool, sorted: &[usize], out: &mut [(usize, f64)]) {
    let mut order: Vec<(f64, usize)> = centroids.as_slice().iter().copied().zip(0..).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut p = 0;
    for &m in sorted {
        let x = pool.point(m)[0];
        while p < order.len() && order[p].0 < x {
            p += 1;
        }
        out[m] = nearest_sorted(&order, p, x);
    }
}

struct Run {
    centroids: Matrix,
    assignment: Vec<usize>,
    distortion: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Fits `n_cells` centroids to the pool with k-means++ seeding and Lloyd iterations.
pub fn lloyd<R: Rng + ?Sized>(
    pool: &CandidatePool,
    n_cells: usize,
    rng: &mut R,
    settings: &LloydSettings,
) -> Result<Quantizer> {
    if n_cells == 0 {
        return Err(Error::Config("number of cells must be at least 1".into()));
    }
    // fewer distinct points than cells is caught by the seeding
    if n_cells > pool.len() {
        return Err(Error::Config(format!("{n_cells} cells requested but the pool has only {} points", pool.len())));
    }
    let restarts = settings.restarts.max(1);
    let assigner = Assigner::new(pool);
    let mut best: Option<Run> = None;
    for _ in 0..restarts {
        let run = lloyd_run(&assigner, n_cells, rng, settings)?;
        if best.as_ref().is_none_or(|b| run.distortion < b.distortion) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    let mut members = vec![Vec::new(); n_cells];
    for (m, &c) in run.assignment.iter().enumerate() {
        members[c].push(m);
    }
    Ok(Quantizer {
        probabilities: cell_probabilities(&members, pool.len()),
        centroids: run.centroids,
        assignment: run.assignment,
        members,
        distortion: run.distortion,
        trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        restarts,
    })
}

fn kmeans_plus_plus<R: Rng + ?Sized>(pool: &CandidatePool, n_cells: usize, rng: &mut R) -> Result<Matrix> {
    let m = pool.len();
    let d = pool.dim();
    let mut centroids = Matrix::zeros(n_cells, d);
    let first = rng.random_range(0..m);
    centroids.row_mut(0).copy_from_slice(pool.point(first));
    let mut dist: Vec<f64> = (0..m).map(|i| squared_distance(pool.point(i), pool.point(first))).collect();
    for k in 1..n_cells {
        let total: f64 = dist.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config(format!(
                "{n_cells} cells requested but the pool has only {k} distinct points"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in dist.iter().enumerate() {
            acc += w;
            if w > 0.0 && acc > target {
                pick = Some(i);
                break;
            }
        }
        // rounding can leave target just above the final partial sum
        let pick = pick.unwrap_or_else(|| dist.iter().rposition(|&w| w > 0.0).expect("positive total"));
        centroids.row_mut(k).copy_from_slice(pool.point(pick));
        let c = centroids.row(k).to_vec();
        let data = pool.points().as_slice();
        if d == 1 {
            for (di, x) in dist.iter_mut().zip(data) {
                *di = di.min((x - c[0]) * (x - c[0]));
            }
        } else {
            for (di, p) in dist.iter_mut().zip(data.chunks_exact(d)) {
                *di = di.min(squared_distance(p, &c));
            }
        }
    }
    Ok(centroids)
}

fn lloyd_run<R: Rng + ?Sized>(
    assigner: &Assigner<'_>,
    n_cells: usize,
    rng: &mut R,
    settings: &LloydSettings,
) -> Result<Run> {
    let pool = assigner.pool;
    let m = pool.len();
    let d = pool.dim();
    let mut centroids = kmeans_plus_plus(pool, n_cells, rng)?;
    let mut slots = vec![(0usize, 0.0f64); m];
    let mut previous: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        assigner.assign(&centroids, &mut slots);
        repair_empty_cells(&mut centroids, assigner, &mut slots)?;
        let distortion = slots.iter().map(|s| s.1).sum::<f64>() / m as f64;
        let assignment: Vec<usize> = slots.iter().map(|s| s.0).collect();
        let stable = previous.as_ref() == Some(&assignment);
        let small_gain = trace.last().is_some_and(|&prev: &f64| {
            prev <= 0.0 || (prev - distortion) / prev < settings.rel_tol
        });
        trace.push(distortion);
        if stable || distortion == 0.0 || small_gain || iterations >= settings.max_iter {
            return Ok(Run {
                centroids,
                assignment,
                distortion,
                trace,
                iterations,
                converged: stable || distortion == 0.0,
            });
        }
        // move each centroid to the mean of its cell
        let mut sums = vec![0.0; n_cells * d];
        let mut counts = vec![0usize; n_cells];
        for (i, &(c, _)) in slots.iter().enumerate() {
            counts[c] += 1;
            for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(pool.point(i)) {
                *s += x;
            }
        }
        for c in 0..n_cells {
            let inv = counts[c] as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                *dst = s / inv;
            }
        }
        previous = Some(assignment);
        iterations += 1;
    }
}

/// Moves each empty centroid onto the pool point farthest from its own centroid.
fn repair_empty_cells(centroids: &mut Matrix, assigner: &Assigner<'_>, slots: &mut [(usize, f64)]) -> Result<()> {
    let pool = assigner.pool;
    let n = centroids.nrows();
    for _ in 0..=n {
        let mut counts = vec![0usize; n];
        for s in slots.iter() {
            counts[s.0] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return Ok(());
        };
        let (far, &(_, dmax)) = slots
            .iter()
            .enumerate()
            .fold((0, &(0, f64::NEG_INFINITY)), |acc, (i, s)| if s.1 > acc.1 .1 { (i, s) } else { acc });
        if dmax <= 0.0 {
            return Err(Error::Numerical("empty Voronoi cell with every pool point on a centroid".into()));
        }
        centroids.row_mut(empty).copy_from_slice(pool.point(far));
        assigner.assign(centroids, slots);
    }
    Err(Error::Numerical("empty-cell repair did not terminate".into()))
}

/// Mean squared distance from each pool point to its nearest centroid.
pub fn distortion(quantizer: &Quantizer, pool: &CandidatePool) -> Result<f64> {
    if pool.dim() != quantizer.dim() {
        return Err(Error::Dimension { expected: quantizer.dim(), found: pool.dim() });
    }
    let total: f64 = pool.points().rows().map(|p| nearest(&quantizer.centroids, p).1).sum();
    Ok(total / pool.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn four_points() -> CandidatePool {
        CandidatePool::from_rows(&[[0.0], [0.1], [10.0], [10.1]]).unwrap()
    }

    fn gaussian_pool(m: usize, d: usize, seed: u64) -> CandidatePool {
        let mut r = rng(seed);
        let data: Vec<f64> = (0..m * d).map(|_| StandardNormal.sample(&mut r)).collect();
        CandidatePool::new(Matrix::from_vec(m, d, data).unwrap()).unwrap()
    }

    /// Optimal 2-cluster partition by exhaustive enumeration.
    fn best_two_partition(xs: &[f64]) -> (f64, Vec<f64>) {
        let n = xs.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let (mut a, mut b) = (vec![], vec![]);
            for (i, &x) in xs.iter().enumerate() {
                if mask & (1 << i) != 0 { a.push(x) } else { b.push(x) }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (ma, mb) = (mean(&a), mean(&b));
            let cost: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>()
                + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
            if cost < best.0 {
                let mut c = vec![ma, mb];
                c.sort_by(f64::total_cmp);
                best = (cost / n as f64, c);
            }
        }
        best
    }

    #[test]
    fn single_cell_mean() {
        let pool = CandidatePool::from_rows(&[[0.0], [2.0]]).unwrap();
        let q = lloyd(&pool, 1, &mut rng(0), &LloydSettings::default()).unwrap();
        assert_eq!(q.centroids().row(0), &[1.0]);
        assert_eq!(q.probabilities(), &[1.0]);
        assert_eq!(distortion(&q, &pool).unwrap(), 1.0);
    }

    #[test]
    fn four_point_two_cells_match_enumeration() {
        let pool = four_points();
        let (oracle_cost, oracle_centroids) = best_two_partition(&[0.0, 0.1, 10.0, 10.1]);
        let q = lloyd(&pool, 2, &mut rng(4), &LloydSettings::default()).unwrap();
        let mut c: Vec<f64> = q.centroids().col(0);
        c.sort_by(f64::total_cmp);
        for (a, b) in c.iter().zip(&oracle_centroids) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((c[0] - 0.05).abs() < 1e-12 && (c[1] - 10.05).abs() < 1e-12);
        assert_eq!(q.probabilities(), &[0.5, 0.5]);
        assert!((q.distortion() - oracle_cost).abs() < 1e-12);
        // (0.05^2 * 4) / 4
        assert!((q.distortion() - 0.0025).abs() < 1e-12);
        let far = q.assign(&[9.9]).unwrap();
        assert!((q.centroids().get(far, 0) - 10.05).abs() < 1e-12);
    }

    #[test]
    fn one_point_per_cell() {
        let pool = gaussian_pool(12, 2, 5);
        let q = lloyd(&pool, 12, &mut rng(1), &LloydSettings::default()).unwrap();
        assert_eq!(distortion(&q, &pool).unwrap(), 0.0);
        assert!(q.probabilities().iter().all(|&p| p == 1.0 / 12.0));
    }

    #[test]
    fn too_many_cells() {
        let pool = CandidatePool::from_rows(&[[1.0], [1.0], [2.0]]).unwrap();
        assert!(matches!(lloyd(&pool, 3, &mut rng(0), &LloydSettings::default()), Err(Error::Config(_))));
        assert!(lloyd(&pool, 2, &mut rng(0), &LloydSettings::default()).is_ok());
        assert!(lloyd(&pool, 0, &mut rng(0), &LloydSettings::default()).is_err());
    }

    #[test]
    fn assignment_ties_go_low() {
        let pool = CandidatePool::from_rows(&[[0.0], [2.0]]).unwrap();
        let q = Quantizer::from_parts(Matrix::from_rows(&[[0.0], [2.0]]).unwrap(), vec![0, 1], &pool).unwrap();
        assert_eq!(q.assign(&[1.0]).unwrap(), 0);
        assert_eq!(q.assign(&[1.5]).unwrap(), 1);
        let wide = CandidatePool::from_rows(&[[0.0], [10.0]]).unwrap();
        let q2 = Quantizer::from_parts(Matrix::from_rows(&[[0.0], [10.0]]).unwrap(), vec![0, 1], &wide).unwrap();
        assert_eq!(q2.assign(&[1.0]).unwrap(), 0);
        assert!(matches!(q.assign(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn fast_scalar_assignment_agrees_with_general() {
        let pool = gaussian_pool(5000, 1, 8);
        let mut r = rng(2);
        // duplicated and tied centroids on purpose
        let mut cs: Vec<f64> = (0..40).map(|_| (rand::Rng::random::<f64>(&mut r) * 32.0 - 16.0).round() / 4.0).collect();
        cs.extend([0.0, 0.5, 0.25, 0.0]);
        let centroids = Matrix::from_vec(cs.len(), 1, cs).unwrap();
        let mut fast = vec![(0, 0.0); pool.len()];
        assign_all(&centroids, &pool, &mut fast);
        for (m, f) in fast.iter().enumerate() {
            assert_eq!(*f, nearest(&centroids, pool.point(m)));
        }
        for x in [0.125, 0.375, -0.25, 0.0] {
            let p = CandidatePool::from_rows(&[[x]]).unwrap();
            let mut s = vec![(0, 0.0)];
            assign_all(&centroids, &p, &mut s);
            assert_eq!(s[0], nearest(&centroids, &[x]));
        }
    }

    #[test]
    fn lloyd_invariants_on_gaussian_pool() {
        let pool = gaussian_pool(4000, 2, 7);
        let settings = LloydSettings { max_iter: 1000, rel_tol: 0.0, restarts: 2 };
        let q = lloyd(&pool, 25, &mut rng(3), &settings).unwrap();
        assert!(q.converged());
        for w in q.distortion_trace().windows(2) {
            assert!(w[1] <= w[0], "distortion increased: {w:?}");
        }
        let total: f64 = q.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for c in 0..q.n_cells() {
            let members = q.members(c);
            assert_eq!(q.probabilities()[c] * pool.len() as f64, members.len() as f64);
            for j in 0..2 {
                let mean = members.iter().map(|&m| pool.point(m)[j]).sum::<f64>() / members.len() as f64;
                assert!((mean - q.centroids().get(c, j)).abs() < 1e-9);
            }
        }
        for (m, &c) in q.assignment().iter().enumerate() {
            assert_eq!(q.assign(pool.point(m)).unwrap(), c);
        }
        for a in 0..q.n_cells() {
            for b in a + 1..q.n_cells() {
                assert_ne!(q.centroids().row(a), q.centroids().row(b));
            }
        }
        assert!((distortion(&q, &pool).unwrap() - q.distortion()).abs() < 1e-12);
    }

    #[test]
    fn sample_cell_behaviour() {
        let pool = four_points();
        let q = lloyd(&pool, 2, &mut rng(4), &LloydSettings::default()).unwrap();
        let low = q.assign(&[0.0]).unwrap();
        let mut r = rng(10);
        let mut zero = 0;
        for _ in 0..10_000 {
            let p = q.sample_cell(&pool, low, &mut r).unwrap();
            assert_eq!(q.assign(p).unwrap(), low);
            if p[0] == 0.0 {
                zero += 1;
            }
        }
        let freq = zero as f64 / 10_000.0;
        assert!((freq - 0.5).abs() < 0.02, "{freq}");
        assert!(q.sample_cell(&pool, 2, &mut r).is_err());

        let single = CandidatePool::from_rows(&[[1.0], [5.0]]).unwrap();
        let qs = lloyd(&single, 2, &mut rng(0), &LloydSettings::default()).unwrap();
        let c = qs.assign(&[5.0]).unwrap();
        assert_eq!(qs.sample_cell(&single, c, &mut r).unwrap(), &[5.0]);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let pool = gaussian_pool(500, 3, 1);
        let q = lloyd(&pool, 9, &mut rng(2), &LloydSettings::default()).unwrap();
        let mut buf = Vec::new();
        q.write_csv(&mut buf, &["seed=2".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = Quantizer::read_csv(&text, &pool).unwrap();
        assert_eq!(back.centroids(), q.centroids());
        assert_eq!(back.assignment(), q.assignment());
        for (a, b) in back.probabilities().iter().zip(q.probabilities()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let other = gaussian_pool(500, 3, 99);
        assert!(Quantizer::read_csv(&text, &other).is_err());
    }

    #[test]
    fn pool_rejects_non_finite() {
        assert!(CandidatePool::from_rows(&[[1.0], [f64::NAN]]).is_err());
        assert!(CandidatePool::new(Matrix::zeros(0, 2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lloyd_structure_holds(seed in 0u64..1000, n in 1usize..12, d in 1usize..4) {
            let pool = gaussian_pool(200, d, seed);
            let q = lloyd(&pool, n, &mut rng(seed), &LloydSettings { restarts: 1, ..Default::default() }).unwrap();
            prop_assert_eq!(q.n_cells(), n);
            prop_assert!((q.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(q.probabilities().iter().all(|&p| p > 0.0));
            for w in q.distortion_trace().windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            for (m, &c) in q.assignment().iter().enumerate() {
                prop_assert_eq!(q.assign(pool.point(m)).unwrap(), c);
            }
        }
    }
}
