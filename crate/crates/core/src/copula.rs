//! Gaussian copula: fitting from data, sequential conditional inversion, and
//! empirical marginals for laws known only through a sample.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distr::Open01;
use rand::Rng;

use crate::csvio;
use crate::distributions::{std_normal_cdf, std_normal_quantile};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Uniform inputs are clamped to this band before the normal quantile.
pub const UNIFORM_CLAMP: f64 = 1e-12;

/// Smallest eigenvalue kept when repairing a fitted correlation matrix.
pub const MIN_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCopula {
    correlation: Matrix,
    cholesky: Matrix,
}

impl GaussianCopula {
    /// Validates a correlation matrix (symmetric, unit diagonal, positive definite).
    pub fn new(correlation: Matrix) -> Result<Self> {
        let d = correlation.nrows();
        if d == 0 || correlation.ncols() != d {
            return Err(Error::Parameter("correlation matrix must be square and nonempty".into()));
        }
        for i in 0..d {
            if correlation.get(i, i) != 1.0 {
                return Err(Error::Parameter(format!("correlation diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                let (a, b) = (correlation.get(i, j), correlation.get(j, i));
                if !a.is_finite() || a != b {
                    return Err(Error::Parameter(format!("correlation not symmetric at ({i}, {j})")));
                }
                if a.abs() > 1.0 {
                    return Err(Error::Parameter(format!("correlation entry ({i}, {j}) = {a} outside [-1, 1]")));
                }
            }
        }
        let cholesky = cholesky(&correlation)
            .ok_or_else(|| Error::Parameter("correlation matrix is not positive definite".into()))?;
        Ok(Self { correlation, cholesky })
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m.set(i, i, 1.0);
        }
        Self { cholesky: m.clone(), correlation: m }
    }

    /// Identity except for the listed symmetric pairs.
    pub fn from_pairs(d: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = Self::identity(d).correlation;
        for &(i, j, rho) in pairs {
            if i >= d || j >= d || i == j {
                return Err(Error::Parameter(format!("bad correlation pair ({i}, {j}) for dimension {d}")));
            }
            m.set(i, j, rho);
            m.set(j, i, rho);
        }
        Self::new(m)
    }

    /// Joint copula of independent blocks.
    pub fn block_diagonal(blocks: &[&GaussianCopula]) -> Result<Self> {
        let d: usize = blocks.iter().map(|b| b.dim()).sum();
        let mut m = Matrix::zeros(d, d);
        let mut offset = 0;
        for b in blocks {
            for i in 0..b.dim() {
                for j in 0..b.dim() {
                    m.set(offset + i, offset + j, b.correlation.get(i, j));
                }
            }
            offset += b.dim();
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.correlation.nrows()
    }

    pub fn correlation(&self) -> &Matrix {
        &self.correlation
    }

    pub fn cholesky_factor(&self) -> &Matrix {
        &self.cholesky
    }

    /// Maps independent uniforms `z` to a vector with this copula's joint law.
    ///
    /// Coordinate `j` is `Phi(m_j + s_j * Phi^-1(z_j))` where `m_j`, `s_j` are the
    /// conditional mean and standard deviation of the latent Gaussian given the
    /// earlier coordinates, read off the Cholesky factor. Where a coordinate has
    /// no conditional shift (`m_j = 0`, `s_j = 1`) it is returned unchanged.
    pub fn conditional_inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if z.len() != d {
            return Err(Error::Dimension { expected: d, found: z.len() });
        }
        if let Some(bad) = z.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("copula input {bad} outside [0, 1]")));
        }
        let w: Vec<f64> = z
            .iter()
            .map(|&v| std_normal_quantile(v.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)))
            .collect();
        let mut out = Vec::with_capacity(d);
        for j in 0..d {
            let row = self.cholesky.row(j);
            let mean: f64 = row[..j].iter().zip(&w).map(|(l, x)| l * x).sum();
            let sd = row[j];
            if mean == 0.0 && sd == 1.0 {
                out.push(z[j]);
            } else {
                out.push(std_normal_cdf(mean + sd * w[j]));
            }
        }
        Ok(out)
    }

    /// One draw of the copula (uniform marginals).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(Open01)).collect();
        self.conditional_inverse(&z).expect("open-interval uniforms of the right length")
    }

    /// One draw of the latent Gaussian vector with this correlation.
    pub fn sample_normal<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let w: Vec<f64> = (0..self.dim()).map(|_| std_normal_quantile(rng.sample(Open01))).collect();
        (0..self.dim())
            .map(|j| self.cholesky.row(j)[..=j].iter().zip(&w).map(|(l, x)| l * x).sum())
            .collect()
    }

    /// Audit export: the correlation matrix as a CSV block.
    pub fn write_csv<W: Write>(&self, w: &mut W, names: &[String], metadata: &[String]) -> Result<()> {
        csvio::write_metadata(w, metadata)?;
        writeln!(w, "{}", names.join(","))?;
        for row in self.correlation.rows() {
            csvio::write_row(w, row)?;
        }
        Ok(())
    }
}

fn cholesky(m: &Matrix) -> Option<Matrix> {
    let d = m.nrows();
    let chol = DMatrix::from_row_slice(d, d, m.as_slice()).cholesky()?;
    let l = chol.l();
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            out.set(i, j, l[(i, j)]);
        }
    }
    Some(out)
}

/// Average ranks (1-based), ties sharing the mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && values[idx[e + 1]] == values[idx[k]] {
            e += 1;
        }
        let avg = (k + e) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=e] {
            out[i] = avg;
        }
        k = e + 1;
    }
    out
}

/// Fits the correlation of a Gaussian copula from data with empirical marginals.
///
/// Each column is replaced by its normal scores `Phi^-1((rank - 0.5) / M)` and
/// the Pearson correlation of the scores is returned, repaired to positive
/// definiteness when needed.
pub fn fit_gaussian_copula(data: &Matrix) -> Result<GaussianCopula> {
    let (m, d) = (data.nrows(), data.ncols());
    if d == 0 {
        return Err(Error::Config("copula fit needs at least one column".into()));
    }
    if m < d + 1 {
        return Err(Error::Config(format!("copula fit needs at least {} rows, got {m}", d + 1)));
    }
    let mut scores = Vec::with_capacity(d);
    for j in 0..d {
        let col = data.col(j);
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::Numerical(format!("column {j} is constant; its marginal is degenerate")));
        }
        let s: Vec<f64> = ranks(&col)
            .into_iter()
            .map(|r| std_normal_quantile((r - 0.5) / m as f64))
            .collect();
        let mean = s.iter().sum::<f64>() / m as f64;
        scores.push(s.into_iter().map(|v| v - mean).collect::<Vec<f64>>());
    }
    let mut corr = Matrix::zeros(d, d);
    for i in 0..d {
        corr.set(i, i, 1.0);
        for j in 0..i {
            let num: f64 = scores[i].iter().zip(&scores[j]).map(|(a, b)| a * b).sum();
            let den = (scores[i].iter().map(|a| a * a).sum::<f64>() * scores[j].iter().map(|b| b * b).sum::<f64>())
                .sqrt();
            let r = (num / den).clamp(-1.0, 1.0);
            corr.set(i, j, r);
            corr.set(j, i, r);
        }
    }
    let corr = nearest_positive_definite(&corr)?;
    GaussianCopula::new(corr).map_err(|e| Error::Numerical(format!("fitted correlation unusable: {e}")))
}

/// Raises eigenvalues below [`MIN_EIGENVALUE`] and rescales to a unit diagonal.
fn nearest_positive_definite(corr: &Matrix) -> Result<Matrix> {
    let d = corr.nrows();
    let dm = DMatrix::from_row_slice(d, d, corr.as_slice());
    let eig = SymmetricEigen::new(dm.clone());
    if eig.eigenvalues.iter().all(|&l| l >= MIN_EIGENVALUE) {
        return Ok(corr.clone());
    }
    let lambda = eig.eigenvalues.map(|l| l.max(MIN_EIGENVALUE));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&lambda) * eig.eigenvectors.transpose();
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v = if i == j { 1.0 } else { rebuilt[(i, j)] / (rebuilt[(i, i)] * rebuilt[(j, j)]).sqrt() };
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    if out.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("correlation repair produced non-finite entries".into()));
    }
    Ok(out)
}

/// Empirical law of one coordinate, stored as sorted observations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMarginal {
    sorted: Vec<f64>,
}

impl EmpiricalMarginal {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config("empirical marginal needs at least two observations".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("empirical marginal has non-finite observations".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// Piecewise-linear quantile through the order statistics at `(k - 0.5) / M`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile level {u} outside [0, 1]")));
        }
        Ok(self.quantile_fast(u))
    }

    pub(crate) fn quantile_fast(&self, u: f64) -> f64 {
        let m = self.sorted.len();
        let t = u * m as f64 + 0.5;
        if t <= 1.0 {
            return self.sorted[0];
        }
        if t >= m as f64 {
            return self.sorted[m - 1];
        }
        let k = t.floor() as usize;
        let frac = t - k as f64;
        let (lo, hi) = (self.sorted[k - 1], self.sorted[k]);
        lo + frac * (hi - lo)
    }
}

pub fn empirical_quantile(marg: &EmpiricalMarginal, u: f64) -> Result<f64> {
    marg.quantile(u)
}
