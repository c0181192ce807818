//! Weighted sampling designs: Monte Carlo, LHS, LHS with a dependence copula,
//! random quantization and the two quantization-based Latin hypercube joins.

use std::fmt;
use std::io::Write;

use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::copula::{EmpiricalMarginal, GaussianCopula};
use crate::csvio;
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::quantizer::{CandidatePool, Quantizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Mc,
    Lhs,
    Lhsd,
    Rq,
    Qlhs,
    Q2lhs,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [Scheme::Mc, Scheme::Lhs, Scheme::Lhsd, Scheme::Rq, Scheme::Qlhs, Scheme::Q2lhs];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Mc => "mc",
            Scheme::Lhs => "lhs",
            Scheme::Lhsd => "lhsd",
            Scheme::Rq => "rq",
            Scheme::Qlhs => "qlhs",
            Scheme::Q2lhs => "q2lhs",
        }
    }

    /// Schemes whose rows carry Voronoi cell probabilities.
    pub fn is_quantized(self) -> bool {
        matches!(self, Scheme::Rq | Scheme::Qlhs | Scheme::Q2lhs)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Anything with a quantile function usable for an inverse-CDF transform.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Parametric(DistributionSpec),
    Empirical(EmpiricalMarginal),
}

impl Marginal {
    fn validate(&self) -> Result<()> {
        match self {
            Marginal::Parametric(d) => d.validate(),
            Marginal::Empirical(_) => Ok(()),
        }
    }

    /// Quantile for a level already known to lie in `[0, 1]`.
    fn quantile_fast(&self, u: f64) -> f64 {
        match self {
            Marginal::Parametric(d) => d.quantile_fast(u),
            Marginal::Empirical(e) => e.quantile_fast(u),
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        match self {
            Marginal::Parametric(d) => d.quantile(u),
            Marginal::Empirical(e) => e.quantile(u),
        }
    }
}

impl From<DistributionSpec> for Marginal {
    fn from(d: DistributionSpec) -> Self {
        Marginal::Parametric(d)
    }
}

/// An `N x d` sample with per-row weights.
///
/// MC, LHS and LHSD rows weigh `1/N`. RQ and QLHS rows carry the cell
/// probability of their dependent block. Q2LHS rows carry `p_i * q_pi(i)`,
/// which need not sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    points: Matrix,
    weights: Vec<f64>,
    scheme: Scheme,
    seed: Option<u64>,
    columns: Vec<String>,
    pairing: Option<Vec<usize>>,
}

impl Design {
    pub fn new(points: Matrix, weights: Vec<f64>, scheme: Scheme) -> Result<Self> {
        if weights.len() != points.nrows() {
            return Err(Error::Dimension { expected: points.nrows(), found: weights.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Weight("design weights must be finite and nonnegative".into()));
        }
        let columns = (0..points.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Self { points, weights, scheme, seed: None, columns, pairing: None })
    }

    fn uniform(points: Matrix, scheme: Scheme) -> Self {
        let n = points.nrows();
        let weights = vec![1.0 / n as f64; n];
        Self::new(points, weights, scheme).expect("uniform weights are valid")
    }

    pub fn with_columns(mut self, columns: Vec<String>) -> Result<Self> {
        if columns.len() != self.points.ncols() {
            return Err(Error::Dimension { expected: self.points.ncols(), found: columns.len() });
        }
        self.columns = columns;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    /// The permutation pairing dependent-block row `i` with block row `pi(i)`.
    pub fn pairing(&self) -> Option<&[usize]> {
        self.pairing.as_deref()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Header of column roles plus `weight`, then one row per design point.
    pub fn write_csv<W: Write>(&self, w: &mut W, metadata: &[String]) -> Result<()> {
        csvio::write_metadata(w, metadata)?;
        let mut header = self.columns.clone();
        header.push("weight".into());
        writeln!(w, "{}", header.join(","))?;
        let mut row = Vec::with_capacity(self.dim() + 1);
        for i in 0..self.n() {
            row.clear();
            row.extend_from_slice(self.row(i));
            row.push(self.weights[i]);
            csvio::write_row(w, &row)?;
        }
        Ok(())
    }
}

fn check_size(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::Config(format!("design needs n >= 1 and d >= 1, got n={n}, d={d}")));
    }
    Ok(())
}

/// Uniform random permutation of `0..n` by Fisher-Yates.
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Latin hypercube on `[0,1]^d`: `V_ij = (pi_j(i) + U_ij) / n` with 0-based `pi_j`.
pub fn lhs<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Design> {
    check_size(n, d)?;
    let uniforms: Vec<f64> = (0..n * d).map(|_| rng.sample(Open01)).collect();
    let mut points = Matrix::zeros(n, d);
    for j in 0..d {
        let perm = random_permutation(n, rng);
        for (i, &p) in perm.iter().enumerate() {
            points.set(i, j, (p as f64 + uniforms[i * d + j]) / n as f64);
        }
    }
    Ok(Design::uniform(points, Scheme::Lhs))
}

/// Latin hypercube pushed through each column's quantile function.
pub fn lhs_with_marginals<R: Rng + ?Sized>(n: usize, marginals: &[Marginal], rng: &mut R) -> Result<Design> {
    for m in marginals {
        m.validate()?;
    }
    let mut design = lhs(n, marginals.len(), rng)?;
    for i in 0..n {
        for (x, m) in design.points.row_mut(i).iter_mut().zip(marginals) {
            *x = m.quantile_fast(*x);
        }
    }
    Ok(design)
}

/// Latin hypercube with dependence: LHS, then sequential conditional copula
/// inversion row by row, then the marginal quantile transforms.
pub fn lhsd<R: Rng + ?Sized>(
    n: usize,
    copula: &GaussianCopula,
    marginals: &[Marginal],
    rng: &mut R,
) -> Result<Design> {
    if copula.dim() != marginals.len() {
        return Err(Error::Dimension { expected: copula.dim(), found: marginals.len() });
    }
    for m in marginals {
        m.validate()?;
    }
    let base = lhs(n, marginals.len(), rng)?;
    let mut points = Matrix::zeros(n, marginals.len());
    for i in 0..n {
        let u = copula.conditional_inverse(base.row(i))?;
        for ((x, m), ui) in points.row_mut(i).iter_mut().zip(marginals).zip(u) {
            *x = m.quantile_fast(ui);
        }
    }
    Ok(Design::uniform(points, Scheme::Lhsd))
}

/// Plain Monte Carlo rows, weight `1/N`.
pub fn mc_design(points: Matrix) -> Result<Design> {
    check_size(points.nrows(), points.ncols())?;
    Ok(Design::uniform(points, Scheme::Mc))
}

fn rq_points<R: Rng + ?Sized>(quantizer: &Quantizer, pool: &CandidatePool, rng: &mut R) -> Result<Matrix> {
    if quantizer.assignment().len() != pool.len() || quantizer.dim() != pool.dim() {
        return Err(Error::Config("quantizer was not fitted on this candidate pool".into()));
    }
    let mut points = Matrix::zeros(quantizer.n_cells(), quantizer.dim());
    for cell in 0..quantizer.n_cells() {
        let p = quantizer.sample_cell(pool, cell, rng)?;
        points.row_mut(cell).copy_from_slice(p);
    }
    Ok(points)
}

/// Random quantization: one conditional draw per Voronoi cell, weighted by the cell probability.
pub fn rq_design<R: Rng + ?Sized>(quantizer: &Quantizer, pool: &CandidatePool, rng: &mut R) -> Result<Design> {
    let points = rq_points(quantizer, pool, rng)?;
    Design::new(points, quantizer.probabilities().to_vec(), Scheme::Rq)
}

/// Quantization-based LHS: RQ rows `U_i` joined with LHS rows `V_pi(i)` of the
/// independent block; weight `p_i`.
pub fn qlhs_design<R: Rng + ?Sized>(
    quantizer: &Quantizer,
    pool: &CandidatePool,
    independent: &[Marginal],
    rng: &mut R,
) -> Result<Design> {
    if independent.is_empty() {
        return Err(Error::Config("quantization-based LHS needs at least one independent input".into()));
    }
    let u = rq_points(quantizer, pool, rng)?;
    let n = quantizer.n_cells();
    let v = lhs_with_marginals(n, independent, rng)?;
    let perm = random_permutation(n, rng);
    let v = Matrix::from_rows(&perm.iter().map(|&k| v.row(k)).collect::<Vec<_>>())?;
    let mut d = Design::new(u.hstack(&v)?, quantizer.probabilities().to_vec(), Scheme::Qlhs)?;
    d.pairing = Some(perm);
    Ok(d)
}

/// Double quantization LHS: two RQ samples joined by a random permutation;
/// weight `p_i * q_pi(i)`.
pub fn q2lhs_design<R: Rng + ?Sized>(
    quantizer_x: &Quantizer,
    pool_x: &CandidatePool,
    quantizer_y: &Quantizer,
    pool_y: &CandidatePool,
    rng: &mut R,
) -> Result<Design> {
    let n = quantizer_x.n_cells();
    if quantizer_y.n_cells() != n {
        return Err(Error::Config(format!(
            "double quantization needs equal cell counts, got {n} and {}",
            quantizer_y.n_cells()
        )));
    }
    let u = rq_points(quantizer_x, pool_x, rng)?;
    let v = rq_points(quantizer_y, pool_y, rng)?;
    let perm = random_permutation(n, rng);
    let v = Matrix::from_rows(&perm.iter().map(|&k| v.row(k)).collect::<Vec<_>>())?;
    let (p, q) = (quantizer_x.probabilities(), quantizer_y.probabilities());
    let weights = (0..n).map(|i| p[i] * q[perm[i]]).collect();
    let mut d = Design::new(u.hstack(&v)?, weights, Scheme::Q2lhs)?;
    d.pairing = Some(perm);
    Ok(d)
}
