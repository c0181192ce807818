//! Input declarations and their translation into designs.
//!
//! An [`InputModel`] is a list of named blocks. Each block has a joint law and a
//! [`Role`] telling the quantization-based schemes whether it belongs to the
//! quantized (dependent) group or to the Latin hypercube group. Columns of every
//! design built from the model are ordered quantized blocks first, then Latin
//! hypercube blocks, each in declaration order.

use std::collections::HashSet;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::copula::{fit_gaussian_copula, EmpiricalMarginal, GaussianCopula};
use crate::designs::{self, Design, Marginal, Scheme};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::VgGenerator;
use crate::quantizer::{lloyd, CandidatePool, LloydSettings, Quantizer};

#[derive(Debug, Clone)]
pub enum BlockLaw {
    /// Parametric marginals tied by a Gaussian copula.
    Copula { marginals: Vec<DistributionSpec>, copula: GaussianCopula },
    /// Mutually independent parametric marginals.
    Independent { marginals: Vec<DistributionSpec> },
    /// Dependence known only through data: rows are resampled uniformly.
    Empirical { pool: CandidatePool },
    /// The synthetic Van Genuchten parameter generator.
    VanGenuchten(VgGenerator),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Sampled by random quantization in QLHS.
    Rq,
    /// Sampled by Latin hypercube in QLHS.
    Lhs,
}

#[derive(Debug, Clone)]
pub struct InputBlock {
    pub names: Vec<String>,
    pub law: BlockLaw,
}

impl InputBlock {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Independent parametric blocks default to the Latin hypercube group.
    pub fn default_role(&self) -> Role {
        match self.law {
            BlockLaw::Independent { .. } => Role::Lhs,
            _ => Role::Rq,
        }
    }

    fn law_dim(&self) -> usize {
        match &self.law {
            BlockLaw::Copula { marginals, .. } | BlockLaw::Independent { marginals } => marginals.len(),
            BlockLaw::Empirical { pool } => pool.dim(),
            BlockLaw::VanGenuchten(_) => 5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.names.is_empty() {
            return Err(Error::Config("input block has no columns".into()));
        }
        if self.law_dim() != self.dim() {
            return Err(Error::Config(format!(
                "input block [{}] names {} columns but its law has {}",
                self.names.join(", "),
                self.dim(),
                self.law_dim()
            )));
        }
        match &self.law {
            BlockLaw::Copula { marginals, copula } => {
                if copula.dim() != marginals.len() {
                    return Err(Error::Dimension { expected: marginals.len(), found: copula.dim() });
                }
                marginals.iter().try_for_each(DistributionSpec::validate)
            }
            BlockLaw::Independent { marginals } => marginals.iter().try_for_each(DistributionSpec::validate),
            BlockLaw::Empirical { pool } if pool.len() < 2 => {
                Err(Error::Config("an empirical block needs at least two rows".into()))
            }
            _ => Ok(()),
        }
    }

    /// One joint draw written into `out`.
    fn draw_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        match &self.law {
            BlockLaw::Copula { marginals, copula } => {
                for ((x, m), u) in out.iter_mut().zip(marginals).zip(copula.sample(rng)) {
                    *x = m.quantile_fast(u);
                }
            }
            BlockLaw::Independent { marginals } => {
                for (x, m) in out.iter_mut().zip(marginals) {
                    *x = m.quantile_fast(rng.sample(Open01));
                }
            }
            BlockLaw::Empirical { pool } => out.copy_from_slice(pool.point(rng.random_range(0..pool.len()))),
            BlockLaw::VanGenuchten(g) => out.copy_from_slice(&g.sample_row(rng)),
        }
    }

    /// A data sample standing for the block's law: the stored pool or `m` generator draws.
    fn reference_sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Option<Matrix>> {
        Ok(match &self.law {
            BlockLaw::Empirical { pool } => Some(pool.points().clone()),
            BlockLaw::VanGenuchten(g) => Some(g.pool(m, rng)?.points().clone()),
            _ => None,
        })
    }
}

/// Pool size and Lloyd settings for the data-dependent preparation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSettings {
    pub pool_size: usize,
    pub lloyd: LloydSettings,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        Self { pool_size: 10_000, lloyd: LloydSettings::default() }
    }
}

/// A candidate pool with the quantizer fitted on it.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub pool: CandidatePool,
    pub quantizer: Quantizer,
}

#[derive(Debug, Clone)]
enum Stage {
    Mc,
    Lhs(Vec<Marginal>),
    Lhsd(GaussianCopula, Vec<Marginal>),
    Rq(Fitted),
    Qlhs(Fitted, Vec<Marginal>),
    Q2lhs(Fitted, Fitted),
}

/// Everything a scheme needs before rows can be drawn: pools, quantizers,
/// empirical marginals, fitted copulas. Reusing one `Prepared` across
/// repetitions is the shared-quantizer regime.
#[derive(Debug, Clone)]
pub struct Prepared {
    scheme: Scheme,
    n: usize,
    stage: Stage,
}

impl Prepared {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Fitted quantizers, dependent group first.
    pub fn fitted(&self) -> Vec<&Fitted> {
        match &self.stage {
            Stage::Rq(f) | Stage::Qlhs(f, _) => vec![f],
            Stage::Q2lhs(a, b) => vec![a, b],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InputModel {
    blocks: Vec<(InputBlock, Role)>,
    columns: Vec<String>,
}

impl InputModel {
    /// Blocks with their default roles.
    pub fn new(blocks: Vec<InputBlock>) -> Result<Self> {
        Self::with_roles(blocks.into_iter().map(|b| {
            let r = b.default_role();
            (b, r)
        }))
    }

    pub fn with_roles(blocks: impl IntoIterator<Item = (InputBlock, Role)>) -> Result<Self> {
        let (mut rq, lhs): (Vec<_>, Vec<_>) = blocks.into_iter().partition(|(_, r)| *r == Role::Rq);
        rq.extend(lhs);
        if rq.is_empty() {
            return Err(Error::Config("no input blocks declared".into()));
        }
        let mut seen = HashSet::new();
        for (b, _) in &rq {
            b.validate()?;
            for n in &b.names {
                if !seen.insert(n.clone()) {
                    return Err(Error::Config(format!("input name '{n}' declared twice")));
                }
            }
        }
        let columns = rq.iter().flat_map(|(b, _)| b.names.clone()).collect();
        Ok(Self { blocks: rq, columns })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&InputBlock, Role)> {
        self.blocks.iter().map(|(b, r)| (b, *r))
    }

    fn group(&self, role: Role) -> Vec<&InputBlock> {
        self.blocks.iter().filter(|(_, r)| *r == role).map(|(b, _)| b).collect()
    }

    /// `n` joint Monte Carlo draws of the given blocks, side by side.
    fn draw_blocks<R: Rng + ?Sized>(blocks: &[&InputBlock], n: usize, rng: &mut R) -> Matrix {
        let d: usize = blocks.iter().map(|b| b.dim()).sum();
        let mut m = Matrix::zeros(n, d);
        for i in 0..n {
            let row = m.row_mut(i);
            let mut at = 0;
            for b in blocks {
                b.draw_into(&mut row[at..at + b.dim()], rng);
                at += b.dim();
            }
        }
        m
    }

    /// `n` Monte Carlo draws of the full input vector in column order.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Matrix {
        let all: Vec<&InputBlock> = self.blocks.iter().map(|(b, _)| b).collect();
        Self::draw_blocks(&all, n, rng)
    }

    fn fit<R: Rng + ?Sized>(blocks: &[&InputBlock], n: usize, settings: &SamplingSettings, rng: &mut R) -> Result<Fitted> {
        let pool = match blocks {
            [b] if matches!(b.law, BlockLaw::Empirical { .. }) => match &b.law {
                BlockLaw::Empirical { pool } => pool.clone(),
                _ => unreachable!(),
            },
            _ => {
                if settings.pool_size < n {
                    return Err(Error::Config(format!(
                        "pool size {} is smaller than the design size {n}",
                        settings.pool_size
                    )));
                }
                CandidatePool::new(Self::draw_blocks(blocks, settings.pool_size, rng))?
            }
        };
        let quantizer = lloyd(&pool, n, rng, &settings.lloyd)?;
        Ok(Fitted { pool, quantizer })
    }

    fn marginals<R: Rng + ?Sized>(
        blocks: &[&InputBlock],
        settings: &SamplingSettings,
        with_copula: bool,
        rng: &mut R,
    ) -> Result<(Vec<Marginal>, Vec<GaussianCopula>)> {
        let mut margs = Vec::new();
        let mut copulas = Vec::new();
        for b in blocks {
            match &b.law {
                BlockLaw::Copula { marginals, copula } => {
                    margs.extend(marginals.iter().cloned().map(Marginal::from));
                    copulas.push(copula.clone());
                }
                BlockLaw::Independent { marginals } => {
                    margs.extend(marginals.iter().cloned().map(Marginal::from));
                    copulas.push(GaussianCopula::identity(marginals.len()));
                }
                _ => {
                    let sample = b.reference_sample(settings.pool_size, rng)?.expect("data-driven block");
                    for j in 0..sample.ncols() {
                        margs.push(Marginal::Empirical(EmpiricalMarginal::new(sample.col(j))?));
                    }
                    if with_copula {
                        copulas.push(fit_gaussian_copula(&sample)?);
                    }
                }
            }
        }
        Ok((margs, copulas))
    }

    /// Builds pools, quantizers and fitted marginals for `scheme` at size `n`.
    pub fn prepare<R: Rng + ?Sized>(
        &self,
        scheme: Scheme,
        n: usize,
        settings: &SamplingSettings,
        rng: &mut R,
    ) -> Result<Prepared> {
        if n == 0 {
            return Err(Error::Config("design size n must be at least 1".into()));
        }
        let all: Vec<&InputBlock> = self.blocks.iter().map(|(b, _)| b).collect();
        let stage = match scheme {
            Scheme::Mc => Stage::Mc,
            Scheme::Lhs => Stage::Lhs(Self::marginals(&all, settings, false, rng)?.0),
            Scheme::Lhsd => {
                let (margs, copulas) = Self::marginals(&all, settings, true, rng)?;
                let refs: Vec<&GaussianCopula> = copulas.iter().collect();
                Stage::Lhsd(GaussianCopula::block_diagonal(&refs)?, margs)
            }
            Scheme::Rq => Stage::Rq(Self::fit(&all, n, settings, rng)?),
            Scheme::Qlhs => {
                let (dep, ind) = (self.group(Role::Rq), self.group(Role::Lhs));
                if dep.is_empty() || ind.is_empty() {
                    return Err(Error::Config(
                        "qlhs needs at least one block in each of the rq and lhs roles".into(),
                    ));
                }
                let fitted = Self::fit(&dep, n, settings, rng)?;
                Stage::Qlhs(fitted, Self::marginals(&ind, settings, false, rng)?.0)
            }
            Scheme::Q2lhs => {
                if all.len() != 2 {
                    return Err(Error::Config(format!("q2lhs needs exactly two input blocks, found {}", all.len())));
                }
                let x = Self::fit(&all[..1], n, settings, rng)?;
                let y = Self::fit(&all[1..], n, settings, rng)?;
                Stage::Q2lhs(x, y)
            }
        };
        Ok(Prepared { scheme, n, stage })
    }

    /// Draws one design from a prepared stage.
    pub fn design_from<R: Rng + ?Sized>(&self, prepared: &Prepared, rng: &mut R) -> Result<Design> {
        let n = prepared.n;
        let design = match &prepared.stage {
            Stage::Mc => designs::mc_design(self.draw(n, rng))?,
            Stage::Lhs(m) => designs::lhs_with_marginals(n, m, rng)?,
            Stage::Lhsd(c, m) => designs::lhsd(n, c, m, rng)?,
            Stage::Rq(f) => designs::rq_design(&f.quantizer, &f.pool, rng)?,
            Stage::Qlhs(f, m) => designs::qlhs_design(&f.quantizer, &f.pool, m, rng)?,
            Stage::Q2lhs(x, y) => designs::q2lhs_design(&x.quantizer, &x.pool, &y.quantizer, &y.pool, rng)?,
        };
        design.with_columns(self.columns.clone())
    }

    /// Prepares and draws in one go, consuming `rng` in that order.
    pub fn design<R: Rng + ?Sized>(
        &self,
        scheme: Scheme,
        n: usize,
        settings: &SamplingSettings,
        rng: &mut R,
    ) -> Result<Design> {
        let prepared = self.prepare(scheme, n, settings, rng)?;
        self.design_from(&prepared, rng)
    }
}
