//! Benchmark evaluators: analytic toy functions, the flood model and the Van
//! Genuchten retention and conductivity curves.
//!
//! Every model declares named inputs. [`ModelSpec::bind`] maps those names onto
//! the column order of a design so the same model works with any block layout.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::copula::GaussianCopula;
use crate::distributions::{std_normal_cdf, DistributionSpec};
use crate::error::{Error, Result};
use crate::inputs::{BlockLaw, InputBlock};
use crate::matrix::Matrix;
use crate::quantizer::CandidatePool;

/// Row evaluator used by the estimators and HSIC outputs.
pub trait RowEvaluator: Sync {
    fn eval(&self, row: &[f64]) -> Result<f64>;
}

impl<F: Fn(&[f64]) -> f64 + Sync> RowEvaluator for F {
    fn eval(&self, row: &[f64]) -> Result<f64> {
        Ok(self(row))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `x^2`
    Square,
    /// `x1 * x2`
    X1x2,
    /// `x^2 * y`
    X2y,
    /// `(x1 + x2)^2 * y`
    X1px2SqY,
    /// `x * y^2 + y^2`
    Xy2py2,
    /// Overflow height of the river flood model.
    Flood,
    /// Water content at suction head `h` (meters).
    VgTheta { h: f64 },
    /// Hydraulic conductivity at suction head `h` (meters).
    VgConductivity { h: f64 },
    /// `sum_j c_j x_j`, inputs named `x1..xd`.
    Additive { coefficients: Vec<f64> },
}

pub const FLOOD_INPUTS: [&str; 8] = ["Q", "Ks", "Zv", "Zm", "Hd", "Cb", "L", "B"];
pub const VG_INPUTS: [&str; 5] = ["theta_r", "theta_s", "alpha", "n", "ksat"];

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Square => "square",
            ModelSpec::X1x2 => "x1x2",
            ModelSpec::X2y => "x2y",
            ModelSpec::X1px2SqY => "x1px2_sq_y",
            ModelSpec::Xy2py2 => "xy2py2",
            ModelSpec::Flood => "flood",
            ModelSpec::VgTheta { .. } => "vg_theta",
            ModelSpec::VgConductivity { .. } => "vg_conductivity",
            ModelSpec::Additive { .. } => "additive",
        }
    }

    /// Input names in the order the evaluator expects them.
    pub fn input_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            ModelSpec::Square => &["x"],
            ModelSpec::X1x2 => &["x1", "x2"],
            ModelSpec::X2y | ModelSpec::Xy2py2 => &["x", "y"],
            ModelSpec::X1px2SqY => &["x1", "x2", "y"],
            ModelSpec::Flood => &FLOOD_INPUTS,
            ModelSpec::VgTheta { .. } | ModelSpec::VgConductivity { .. } => &VG_INPUTS,
            ModelSpec::Additive { coefficients } => {
                return (1..=coefficients.len()).map(|j| format!("x{j}")).collect();
            }
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::VgTheta { h } | ModelSpec::VgConductivity { h } if !(h.is_finite() && *h >= 0.0) => {
                Err(Error::Parameter(format!("suction head must be finite and >= 0, got {h}")))
            }
            ModelSpec::Additive { coefficients } if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) => {
                Err(Error::Parameter("additive model needs finite coefficients".into()))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates on a row ordered as [`ModelSpec::input_names`].
    pub fn eval(&self, row: &[f64]) -> Result<f64> {
        let d = self.input_names().len();
        if row.len() != d {
            return Err(Error::Dimension { expected: d, found: row.len() });
        }
        match self {
            ModelSpec::Square => Ok(row[0] * row[0]),
            ModelSpec::X1x2 => Ok(row[0] * row[1]),
            ModelSpec::X2y => Ok(row[0] * row[0] * row[1]),
            ModelSpec::X1px2SqY => Ok((row[0] + row[1]).powi(2) * row[2]),
            ModelSpec::Xy2py2 => Ok(row[0] * row[1] * row[1] + row[1] * row[1]),
            ModelSpec::Flood => flood_eval(row),
            ModelSpec::VgTheta { h } => vg_theta(*h, &VgParams::from_row(row)),
            ModelSpec::VgConductivity { h } => vg_conductivity(*h, &VgParams::from_row(row)),
            ModelSpec::Additive { coefficients } => Ok(coefficients.iter().zip(row).map(|(c, x)| c * x).sum()),
        }
    }

    /// Resolves the model's inputs against a design's column names.
    pub fn bind(&self, columns: &[String]) -> Result<BoundModel> {
        self.validate()?;
        let index = self
            .input_names()
            .iter()
            .map(|name| {
                columns
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::Config(format!("model '{}' needs an input named '{name}'", self.name())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundModel { model: self.clone(), index })
    }
}

/// A model whose inputs have been located in a design's columns.
#[derive(Debug, Clone)]
pub struct BoundModel {
    model: ModelSpec,
    index: Vec<usize>,
}

impl BoundModel {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }
}

impl RowEvaluator for BoundModel {
    fn eval(&self, row: &[f64]) -> Result<f64> {
        let mut buf = [0.0; 8];
        if self.index.len() <= buf.len() {
            for (b, &j) in buf.iter_mut().zip(&self.index) {
                *b = row[j];
            }
            self.model.eval(&buf[..self.index.len()])
        } else {
            let picked: Vec<f64> = self.index.iter().map(|&j| row[j]).collect();
            self.model.eval(&picked)
        }
    }
}

/// Flood model. Row order: `Q, Ks, Zv, Zm, Hd, Cb, L, B`.
pub fn flood_eval(row: &[f64]) -> Result<f64> {
    if row.len() != 8 {
        return Err(Error::Dimension { expected: 8, found: row.len() });
    }
    let [q, ks, zv, zm, hd, cb, l, b] = [row[0], row[1], row[2], row[3], row[4], row[5], row[6], row[7]];
    if !(zm > zv) || !(ks > 0.0) || !(b > 0.0) || !(l > 0.0) || !(q > 0.0) {
        return Err(Error::Domain(format!(
            "flood model needs Zm > Zv and positive Q, Ks, L, B; got Q={q}, Ks={ks}, Zv={zv}, Zm={zm}, L={l}, B={b}"
        )));
    }
    Ok(zv + flood_height(q, ks, zv, zm, l, b) - hd - cb)
}

/// Water height `H = (Q / (B Ks sqrt((Zm - Zv)/L)))^0.6`.
pub fn flood_height(q: f64, ks: f64, zv: f64, zm: f64, l: f64, b: f64) -> f64 {
    let ratio = q / (b * ks * ((zm - zv) / l).sqrt());
    (0.6 * ratio.ln()).exp()
}

/// The flood inputs as two blocks: a copula block for the dependent pairs and
/// an independent block for `Hd` and `Cb`.
pub fn flood_inputs() -> Vec<InputBlock> {
    let tri = DistributionSpec::triangular;
    let copula = GaussianCopula::from_pairs(6, &[(0, 1, 0.5), (2, 3, 0.3), (4, 5, 0.3)])
        .expect("flood correlation matrix is positive definite");
    vec![
        InputBlock {
            names: ["Q", "Ks", "Zv", "Zm", "L", "B"].map(String::from).to_vec(),
            law: BlockLaw::Copula {
                marginals: vec![
                    DistributionSpec::truncated(DistributionSpec::gumbel(1013.0, 558.0), 500.0, 3000.0),
                    DistributionSpec::truncated(DistributionSpec::normal(30.0, 8.0), 15.0, f64::INFINITY),
                    tri(49.0, 50.0, 51.0),
                    tri(54.0, 55.0, 56.0),
                    tri(4990.0, 5000.0, 5010.0),
                    tri(295.0, 300.0, 305.0),
                ],
                copula,
            },
        },
        InputBlock {
            names: ["Hd", "Cb"].map(String::from).to_vec(),
            law: BlockLaw::Independent { marginals: vec![DistributionSpec::uniform(7.0, 9.0), tri(55.0, 55.5, 56.0)] },
        },
    ]
}

/// Van Genuchten parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VgParams {
    pub theta_r: f64,
    pub theta_s: f64,
    pub alpha: f64,
    pub n: f64,
    pub ksat: f64,
}

impl VgParams {
    /// Row order: `theta_r, theta_s, alpha, n, ksat`.
    pub fn from_row(row: &[f64]) -> Self {
        Self { theta_r: row[0], theta_s: row[1], alpha: row[2], n: row[3], ksat: row[4] }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.theta_r >= 0.0
            && self.theta_r < self.theta_s
            && self.alpha > 0.0
            && self.n > 1.0
            && self.ksat > 0.0
            && self.theta_s.is_finite()
            && self.alpha.is_finite()
            && self.n.is_finite()
            && self.ksat.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "Van Genuchten parameters need 0 <= theta_r < theta_s, alpha > 0, n > 1, ksat > 0; got {self:?}"
            )))
        }
    }
}

fn effective_saturation(h: f64, p: &VgParams) -> f64 {
    let m = 1.0 - 1.0 / p.n;
    (1.0 + (p.alpha * h.abs()).powf(p.n)).powf(-m)
}

/// `theta_r + (theta_s - theta_r) / (1 + (alpha |h|)^n)^(1 - 1/n)`.
pub fn vg_theta(h: f64, p: &VgParams) -> Result<f64> {
    p.validate()?;
    if h == 0.0 {
        // theta_r + (theta_s - theta_r) can round away from theta_s
        return Ok(p.theta_s);
    }
    Ok(p.theta_r + (p.theta_s - p.theta_r) * effective_saturation(h, p))
}

/// Mualem conductivity `Ksat sqrt(S) (1 - (1 - S^(1/m))^m)^2` with `m = 1 - 1/n`.
pub fn vg_conductivity(h: f64, p: &VgParams) -> Result<f64> {
    p.validate()?;
    let m = 1.0 - 1.0 / p.n;
    let s = effective_saturation(h, p);
    // 1 - (1 - s^(1/m))^m loses everything to cancellation for tiny s.
    let inner = -(-s.powf(1.0 / m)).ln_1p() * m;
    let bracket = -(-inner).exp_m1();
    Ok(p.ksat * s.sqrt() * bracket * bracket)
}

/// 50 log-spaced suction heads on `[1e-4, 1e2]` meters.
pub fn vg_head_grid() -> Vec<f64> {
    let (lo, hi) = (-4.0f64, 2.0f64);
    (0..50).map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / 49.0)).collect()
}

/// Synthetic generator of correlated, physically valid Van Genuchten parameter
/// sets, standing in for field measurements.
///
/// A Gaussian latent vector with correlation [`VgGenerator::LATENT_CORRELATION`]
/// is mapped through `Phi` to uniforms and then to
/// - `theta_r = 0.3 * Beta(2, 6)`
/// - `theta_s = 0.25 + 0.35 * Beta(4, 3)`
/// - `alpha = LogNormal(ln 2, 0.8)` in 1/m
/// - `n = 1 + LogNormal(ln 0.5, 0.4)`
/// - `ksat = LogNormal(ln 1e-5, 1)` in m/s
///
/// Draws with `theta_r >= theta_s` are rejected and redrawn.
#[derive(Debug, Clone)]
pub struct VgGenerator {
    copula: GaussianCopula,
    theta_r: Beta,
    theta_s: Beta,
}

impl VgGenerator {
    pub const LATENT_CORRELATION: [[f64; 5]; 5] = [
        [1.0, 0.4, -0.2, -0.3, -0.3],
        [0.4, 1.0, 0.2, 0.0, 0.3],
        [-0.2, 0.2, 1.0, 0.5, 0.6],
        [-0.3, 0.0, 0.5, 1.0, 0.4],
        [-0.3, 0.3, 0.6, 0.4, 1.0],
    ];

    pub fn new() -> Self {
        let rows: Vec<&[f64]> = Self::LATENT_CORRELATION.iter().map(|r| r.as_slice()).collect();
        let corr = Matrix::from_rows(&rows).expect("5x5 matrix");
        Self {
            copula: GaussianCopula::new(corr).expect("latent correlation is positive definite"),
            theta_r: Beta::new(2.0, 6.0).expect("valid beta"),
            theta_s: Beta::new(4.0, 3.0).expect("valid beta"),
        }
    }

    pub fn latent_copula(&self) -> &GaussianCopula {
        &self.copula
    }

    pub fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 5] {
        loop {
            let z = self.copula.sample_normal(rng);
            let u = |k: usize| std_normal_cdf(z[k]).clamp(1e-12, 1.0 - 1e-12);
            let row = [
                0.3 * self.theta_r.inverse_cdf(u(0)),
                0.25 + 0.35 * self.theta_s.inverse_cdf(u(1)),
                (2f64.ln() + 0.8 * z[2]).exp(),
                1.0 + (0.5f64.ln() + 0.4 * z[3]).exp(),
                (1e-5f64.ln() + z[4]).exp(),
            ];
            if VgParams::from_row(&row).validate().is_ok() {
                return row;
            }
        }
    }

    pub fn pool<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<CandidatePool> {
        let mut data = Vec::with_capacity(m * 5);
        for _ in 0..m {
            data.extend(self.sample_row(rng));
        }
        CandidatePool::new(Matrix::from_vec(m, 5, data)?)
    }
}

impl Default for VgGenerator {
    fn default() -> Self {
        Self::new()
    }
}

/// Checks a 5-column base sample of Van Genuchten parameters row by row.
pub fn vg_pool_from_base(base: &Matrix) -> Result<CandidatePool> {
    if base.ncols() != 5 {
        return Err(Error::Dimension { expected: 5, found: base.ncols() });
    }
    let bad: Vec<usize> = (0..base.nrows()).filter(|&i| VgParams::from_row(base.row(i)).validate().is_err()).collect();
    if let Some(first) = bad.first() {
        return Err(Error::Domain(format!(
            "{} of {} Van Genuchten rows are physically invalid (first at row {})",
            bad.len(),
            base.nrows(),
            first + 1
        )));
    }
    CandidatePool::new(base.clone())
}
