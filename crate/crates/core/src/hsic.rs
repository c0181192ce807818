//! HSIC dependence measures with RBF kernels, the permutation independence
//! test and group screening.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::designs::{random_permutation, Design};
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

/// How the RBF bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Per-column standard deviation of the evaluation sample.
    EmpiricalStd,
    /// Median pairwise Euclidean distance.
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `exp(-|x - x'|^2 / (2 theta^2))` on raw coordinates.
    Rbf { bandwidth: Bandwidth },
    /// RBF on a multi-column block, optionally standardized column by column
    /// before the bandwidth rule is applied.
    GroupRbf { bandwidth: Bandwidth, standardize: bool },
}

impl KernelSpec {
    pub fn scalar() -> Self {
        KernelSpec::Rbf { bandwidth: Bandwidth::EmpiricalStd }
    }

    /// Standardized columns, `theta = 1`.
    pub fn group() -> Self {
        KernelSpec::GroupRbf { bandwidth: Bandwidth::Fixed(1.0), standardize: true }
    }

    /// Scalar kernel for one column, group kernel otherwise.
    pub fn default_for(columns: usize) -> Self {
        if columns == 1 {
            Self::scalar()
        } else {
            Self::group()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bw = match self {
            KernelSpec::Rbf { bandwidth } | KernelSpec::GroupRbf { bandwidth, .. } => bandwidth,
        };
        match bw {
            Bandwidth::Fixed(t) if !(t.is_finite() && *t > 0.0) => {
                Err(Error::Parameter(format!("kernel bandwidth must be positive, got {t}")))
            }
            _ => Ok(()),
        }
    }

    /// Per-column length scales `s_j` so that `k(x, x') = exp(-sum ((x_j - x'_j)/s_j)^2 / 2)`.
    fn scales(&self, sample: &Matrix) -> Result<Vec<f64>> {
        self.validate()?;
        let k = sample.ncols();
        let degenerate = |what: &str| Error::Kernel(format!("{what} of the sample is zero, bandwidth cannot be resolved"));
        let (bandwidth, standardize) = match *self {
            KernelSpec::Rbf { bandwidth } => (bandwidth, false),
            KernelSpec::GroupRbf { bandwidth, standardize } => (bandwidth, standardize),
        };
        let base = if standardize {
            let sd = column_std(sample);
            if sd.contains(&0.0) {
                return Err(degenerate("a column standard deviation"));
            }
            sd
        } else {
            vec![1.0; k]
        };
        match bandwidth {
            Bandwidth::Fixed(t) => Ok(base.iter().map(|b| b * t).collect()),
            Bandwidth::EmpiricalStd if standardize => Ok(base),
            Bandwidth::EmpiricalStd => {
                let sd = column_std(sample);
                if sd.contains(&0.0) {
                    return Err(degenerate("the standard deviation"));
                }
                Ok(sd)
            }
            Bandwidth::Median => {
                let scaled = scale_columns(sample, &base);
                let m = median_distance(&scaled);
                if m == 0.0 {
                    return Err(degenerate("the median pairwise distance"));
                }
                Ok(base.iter().map(|b| b * m).collect())
            }
        }
    }
}

fn column_std(sample: &Matrix) -> Vec<f64> {
    let n = sample.nrows() as f64;
    (0..sample.ncols())
        .map(|j| {
            let c = sample.col(j);
            let m = c.iter().sum::<f64>() / n;
            (c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect()
}

fn scale_columns(sample: &Matrix, scales: &[f64]) -> Matrix {
    let mut out = sample.clone();
    for i in 0..out.nrows() {
        for (x, s) in out.row_mut(i).iter_mut().zip(scales) {
            *x /= s;
        }
    }
    out
}

fn median_distance(sample: &Matrix) -> f64 {
    let n = sample.nrows();
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| squared_distance(sample.row(i), sample.row(j)).sqrt())
        .collect();
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    }
}

/// Symmetric `N x N` Gram matrix with unit diagonal.
pub fn gram(sample: &Matrix, kernel: &KernelSpec) -> Result<Matrix> {
    let n = sample.nrows();
    if n < 2 {
        return Err(Error::Config(format!("a Gram matrix needs at least 2 rows, got {n}")));
    }
    let scaled = scale_columns(sample, &kernel.scales(sample)?);
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        g.set(i, i, 1.0);
        for j in 0..i {
            let v = (-0.5 * squared_distance(scaled.row(i), scaled.row(j))).exp();
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    Ok(g)
}

/// `H L H` with `H = I - 11^T/N`, computed as `L - row mean - column mean + grand mean`.
fn center(l: &Matrix) -> Matrix {
    let n = l.nrows();
    let nf = n as f64;
    let means: Vec<f64> = (0..n).map(|i| l.row(i).iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / nf;
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c.set(i, j, l.get(i, j) - means[i] - means[j] + grand);
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HsicResult {
    pub hsic: f64,
    /// `n * hsic`.
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub n: usize,
    pub permutations: usize,
    pub alpha: Option<f64>,
    pub reject: Option<bool>,
}

impl HsicResult {
    fn plain(hsic: f64, n: usize) -> Self {
        Self { hsic, statistic: n as f64 * hsic, p_value: None, n, permutations: 0, alpha: None, reject: None }
    }
}

/// Input and output Gram matrices plus optional row weights, ready for repeated
/// evaluation under output permutations.
struct Statistic {
    n: usize,
    lx: Matrix,
    kind: StatKind,
}

enum StatKind {
    /// Centered output Gram; statistic `sum Lx .* Lc[s, s] / N^2`.
    Uniform { lc: Matrix },
    /// Three-term weighted form with `Kx p` and `p^T Kx p` cached.
    Weighted { ly: Matrix, p: Vec<f64>, kxp: Vec<f64>, pkxp: f64 },
}

impl Statistic {
    fn new(lx: Matrix, ly: Matrix, weights: Option<&[f64]>) -> Result<Self> {
        let n = lx.nrows();
        if ly.nrows() != n {
            return Err(Error::Dimension { expected: n, found: ly.nrows() });
        }
        let kind = match weights {
            None => StatKind::Uniform { lc: center(&ly) },
            Some(p) => {
                check_weights(p, n)?;
                let kxp: Vec<f64> = (0..n).map(|i| dot(lx.row(i), p)).collect();
                let pkxp = dot(p, &kxp);
                StatKind::Weighted { ly, p: p.to_vec(), kxp, pkxp }
            }
        };
        Ok(Self { n, lx, kind })
    }

    /// HSIC with output rows reordered by `perm` (`None` for the observed order).
    fn eval(&self, perm: Option<&[usize]>) -> f64 {
        let n = self.n;
        let idx = |i: usize| perm.map_or(i, |p| p[i]);
        match &self.kind {
            StatKind::Uniform { lc } => {
                let mut s = 0.0;
                for i in 0..n {
                    let (lxi, lci) = (self.lx.row(i), lc.row(idx(i)));
                    s += (0..n).map(|j| lxi[j] * lci[idx(j)]).sum::<f64>();
                }
                s / (n * n) as f64
            }
            StatKind::Weighted { ly, p, kxp, pkxp } => {
                let (mut first, mut cross, mut pkyp) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let (lxi, lyi) = (self.lx.row(i), ly.row(idx(i)));
                    let mut a = 0.0;
                    let mut b = 0.0;
                    for j in 0..n {
                        let k = lyi[idx(j)] * p[j];
                        a += k;
                        b += lxi[j] * k;
                    }
                    first += p[i] * b;
                    cross += p[i] * kxp[i] * a;
                    pkyp += p[i] * a;
                }
                first + pkxp * pkyp - 2.0 * cross
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_weights(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::Dimension { expected: n, found: p.len() });
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 || p.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Weight(format!("HSIC weights must be nonnegative and sum to 1, total is {total}")));
    }
    Ok(())
}

fn check_rows(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension { expected: x.nrows(), found: y.nrows() });
    }
    if x.nrows() < 2 {
        return Err(Error::Config("HSIC needs at least 2 rows".into()));
    }
    Ok(())
}

/// V-statistic `tr(Lx H Ly H) / N^2`.
pub fn hsic_v(x: &Matrix, y: &Matrix, kx: &KernelSpec, ky: &KernelSpec) -> Result<HsicResult> {
    check_rows(x, y)?;
    let s = Statistic::new(gram(x, kx)?, gram(y, ky)?, None)?;
    Ok(HsicResult::plain(s.eval(None), x.nrows()))
}

/// Weighted HSIC on a single sample with weights `p` summing to one.
pub fn hsic_weighted(x: &Matrix, y: &Matrix, p: &[f64], kx: &KernelSpec, ky: &KernelSpec) -> Result<HsicResult> {
    check_rows(x, y)?;
    let s = Statistic::new(gram(x, kx)?, gram(y, ky)?, Some(p))?;
    Ok(HsicResult::plain(s.eval(None), x.nrows()))
}

/// Weighted HSIC of all design columns against `outputs`, weights from the design.
pub fn hsic_rq(design: &Design, outputs: &[f64], kx: &KernelSpec, ky: &KernelSpec) -> Result<HsicResult> {
    hsic_weighted(design.points(), &Matrix::column(outputs), design.weights(), kx, ky)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestSettings {
    pub permutations: usize,
    pub alpha: f64,
}

impl TestSettings {
    pub fn validate(&self) -> Result<()> {
        if self.permutations < 100 {
            return Err(Error::Config(format!("permutations must be at least 100, got {}", self.permutations)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Relative slack below which a permuted statistic counts as a tie.
const TIE_TOLERANCE: f64 = 1e-12;

/// Permutation test of independence between `x` and `y`.
///
/// Output rows are permuted `B` times; input rows and their `weights` stay put.
/// `p = (1 + #{S_b >= S_obs}) / (B + 1)`, reject when `p < alpha`. Replica `b`
/// runs on its own generator stream derived from one draw of `rng`, so results
/// do not depend on thread count.
pub fn independence_test<R: Rng + ?Sized>(
    x: &Matrix,
    y: &Matrix,
    kx: &KernelSpec,
    ky: &KernelSpec,
    weights: Option<&[f64]>,
    settings: &TestSettings,
    rng: &mut R,
) -> Result<HsicResult> {
    settings.validate()?;
    check_rows(x, y)?;
    let stat = Statistic::new(gram(x, kx)?, gram(y, ky)?, weights)?;
    let observed = stat.eval(None);
    let n = x.nrows();
    let master: u64 = rng.random();
    let tol = TIE_TOLERANCE * observed.abs().max(1.0 / (n * n) as f64);
    let exceed = (0..settings.permutations as u64)
        .into_par_iter()
        .filter(|&b| {
            let mut r = ChaCha8Rng::seed_from_u64(master);
            r.set_stream(b);
            let perm = random_permutation(n, &mut r);
            stat.eval(Some(&perm)) >= observed - tol
        })
        .count();
    let p = (1 + exceed) as f64 / (settings.permutations + 1) as f64;
    Ok(HsicResult {
        p_value: Some(p),
        permutations: settings.permutations,
        alpha: Some(settings.alpha),
        reject: Some(p < settings.alpha),
        ..HsicResult::plain(observed, n)
    })
}

/// A named set of design columns tested together.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub name: String,
    pub columns: Vec<usize>,
    pub kernel: KernelSpec,
}

impl Group {
    /// Scalar kernel for one column, standardized group kernel otherwise.
    pub fn new(name: impl Into<String>, columns: Vec<usize>) -> Self {
        let kernel = KernelSpec::default_for(columns.len());
        Self { name: name.into(), columns, kernel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenRow {
    pub input: String,
    pub hsic: f64,
    pub p_value: f64,
    pub dependent: bool,
}

impl ScreenRow {
    pub fn decision(&self) -> &'static str {
        if self.dependent {
            "dependent"
        } else {
            "independent"
        }
    }
}

/// One independence test per group against the shared outputs.
///
/// Quantization-based designs are tested with their row weights (normalized to
/// sum to one); other designs use the plain V-statistic.
pub fn screen<R: Rng + ?Sized>(
    design: &Design,
    outputs: &[f64],
    groups: &[Group],
    output_kernel: &KernelSpec,
    settings: &TestSettings,
    rng: &mut R,
) -> Result<Vec<ScreenRow>> {
    if outputs.len() != design.n() {
        return Err(Error::Dimension { expected: design.n(), found: outputs.len() });
    }
    let weights: Option<Vec<f64>> = design.scheme().is_quantized().then(|| {
        let total: f64 = design.weights().iter().sum();
        design.weights().iter().map(|w| w / total).collect()
    });
    let y = Matrix::column(outputs);
    groups
        .iter()
        .map(|g| {
            if g.columns.is_empty() {
                return Err(Error::Config(format!("group '{}' has no columns", g.name)));
            }
            if let Some(&bad) = g.columns.iter().find(|&&c| c >= design.dim()) {
                return Err(Error::Config(format!(
                    "group '{}' refers to column {bad}, the design has {}",
                    g.name,
                    design.dim()
                )));
            }
            let x = design.points().select_columns(&g.columns)?;
            let r = independence_test(&x, &y, &g.kernel, output_kernel, weights.as_deref(), settings, rng)?;
            Ok(ScreenRow {
                input: g.name.clone(),
                hsic: r.hsic,
                p_value: r.p_value.expect("test ran"),
                dependent: r.reject.expect("test ran"),
            })
        })
        .collect()
}

/// `input,hsic,p_value,decision` table.
pub fn write_screen_csv<W: Write>(w: &mut W, rows: &[ScreenRow], metadata: &[String]) -> Result<()> {
    csvio::write_metadata(w, metadata)?;
    writeln!(w, "input,hsic,p_value,decision")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.input, csvio::fmt_f64(r.hsic), csvio::fmt_f64(r.p_value), r.decision())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::Scheme;
    use rand::distr::StandardUniform;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn fixed(t: f64) -> KernelSpec {
        KernelSpec::Rbf { bandwidth: Bandwidth::Fixed(t) }
    }

    fn random_matrix(n: usize, d: usize, r: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(n, d, (0..n * d).map(|_| r.sample::<f64, _>(StandardUniform)).collect()).unwrap()
    }

    /// Three-term double-sum expansion with uniform or given weights.
    fn brute(lx: &Matrix, ly: &Matrix, p: &[f64]) -> f64 {
        let n = p.len();
        let mut t1 = 0.0;
        let (mut sx, mut sy) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                t1 += p[i] * p[j] * lx.get(i, j) * ly.get(i, j);
                sx += p[i] * p[j] * lx.get(i, j);
                sy += p[i] * p[j] * ly.get(i, j);
            }
        }
        let mut t3 = 0.0;
        for i in 0..n {
            let a: f64 = (0..n).map(|j| p[j] * lx.get(i, j)).sum();
            let b: f64 = (0..n).map(|j| p[j] * ly.get(i, j)).sum();
            t3 += p[i] * a * b;
        }
        t1 + sx * sy - 2.0 * t3
    }

    #[test]
    fn gram_examples() {
        let t = 0.7;
        let s = Matrix::column(&[0.0, t * 2f64.sqrt(), 3.0, 3.0]);
        let g = gram(&s, &fixed(t)).unwrap();
        assert!((0..4).all(|i| g.get(i, i) == 1.0));
        assert!((g.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(g.get(2, 3), 1.0);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.get(i, j), g.get(j, i));
                assert!(g.get(i, j) > 0.0 && g.get(i, j) <= 1.0);
            }
        }
        let c = Matrix::column(&[2.0, 2.0, 2.0]);
        assert!(matches!(gram(&c, &KernelSpec::scalar()), Err(Error::Kernel(_))));
        assert!(matches!(gram(&c, &KernelSpec::Rbf { bandwidth: Bandwidth::Median }), Err(Error::Kernel(_))));
        assert!(gram(&c, &fixed(1.0)).unwrap().as_slice().iter().all(|&v| v == 1.0));
        assert!(gram(&Matrix::column(&[1.0]), &fixed(1.0)).is_err());
    }

    #[test]
    fn two_point_closed_form() {
        // Lx = [[1,a],[a,1]], Ly = [[1,b],[b,1]] -> (1-a)(1-b)/4
        let x = Matrix::column(&[0.0, 1.0]);
        let y = Matrix::column(&[0.0, 2.0]);
        let a = (-0.5f64).exp();
        let b = (-2.0f64).exp();
        let h = hsic_v(&x, &y, &fixed(1.0), &fixed(1.0)).unwrap();
        assert!((h.hsic - (1.0 - a) * (1.0 - b) / 4.0).abs() < 1e-15);
        assert_eq!(h.statistic, 2.0 * h.hsic);
        assert!(h.p_value.is_none());
    }

    #[test]
    fn constant_outputs_give_zero() {
        let mut r = rng(1);
        let x = random_matrix(20, 2, &mut r);
        let y = Matrix::column(&[5.0; 20]);
        assert_eq!(hsic_v(&x, &y, &KernelSpec::group(), &fixed(1.0)).unwrap().hsic, 0.0);
        let p = vec![0.05; 20];
        assert!(hsic_weighted(&x, &y, &p, &KernelSpec::group(), &fixed(1.0)).unwrap().hsic.abs() < 1e-12);
    }

    #[test]
    fn trace_form_matches_double_sum() {
        let mut r = rng(2);
        for _ in 0..50 {
            let x = random_matrix(10, 2, &mut r);
            let y = random_matrix(10, 1, &mut r);
            let (kx, ky) = (KernelSpec::group(), KernelSpec::scalar());
            let h = hsic_v(&x, &y, &kx, &ky).unwrap().hsic;
            let expected = brute(&gram(&x, &kx).unwrap(), &gram(&y, &ky).unwrap(), &[0.1; 10]);
            assert!((h - expected).abs() < 1e-12);
            assert!(h >= -1e-12);
            let u = hsic_weighted(&x, &y, &[0.1; 10], &kx, &ky).unwrap().hsic;
            assert!((u - h).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_three_point_oracle() {
        let x = Matrix::column(&[0.0, 0.5, 2.0]);
        let y = Matrix::column(&[1.0, 0.0, 3.0]);
        let p = [0.5, 0.3, 0.2];
        let h = hsic_weighted(&x, &y, &p, &fixed(1.0), &fixed(1.5)).unwrap().hsic;
        let expected = brute(&gram(&x, &fixed(1.0)).unwrap(), &gram(&y, &fixed(1.5)).unwrap(), &p);
        assert!((h - expected).abs() < 1e-15);
        assert!(matches!(hsic_weighted(&x, &y, &[0.5, 0.3, 0.1], &fixed(1.0), &fixed(1.0)), Err(Error::Weight(_))));
    }

    #[test]
    fn joint_permutation_invariance() {
        let mut r = rng(3);
        let x = random_matrix(15, 3, &mut r);
        let y = random_matrix(15, 1, &mut r);
        let perm = random_permutation(15, &mut r);
        let pick = |m: &Matrix| Matrix::from_rows(&perm.iter().map(|&i| m.row(i)).collect::<Vec<_>>()).unwrap();
        let a = hsic_v(&x, &y, &KernelSpec::group(), &KernelSpec::scalar()).unwrap().hsic;
        let b = hsic_v(&pick(&x), &pick(&y), &KernelSpec::group(), &KernelSpec::scalar()).unwrap().hsic;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn permutation_test_examples() {
        let mut r = rng(4);
        let x = random_matrix(50, 1, &mut r);
        let s = TestSettings { permutations: 200, alpha: 0.05 };
        let t = independence_test(&x, &x, &KernelSpec::scalar(), &KernelSpec::scalar(), None, &s, &mut r).unwrap();
        assert!(t.p_value.unwrap() < 0.01 && t.reject == Some(true));

        let c = Matrix::column(&[1.0; 50]);
        let s100 = TestSettings { permutations: 100, alpha: 0.05 };
        let t = independence_test(&x, &c, &KernelSpec::scalar(), &fixed(1.0), None, &s100, &mut r).unwrap();
        assert_eq!(t.p_value, Some(1.0));
        let w = vec![0.02; 50];
        let t = independence_test(&x, &c, &KernelSpec::scalar(), &fixed(1.0), Some(&w), &s100, &mut r).unwrap();
        assert_eq!(t.p_value, Some(1.0));

        let few = TestSettings { permutations: 50, alpha: 0.05 };
        assert!(matches!(independence_test(&x, &x, &fixed(1.0), &fixed(1.0), None, &few, &mut r), Err(Error::Config(_))));
    }

    #[test]
    fn dependence_beats_null_quantile() {
        let mut r = rng(5);
        let x = random_matrix(50, 1, &mut r);
        let (k, n) = (KernelSpec::scalar(), 50);
        let observed = hsic_v(&x, &x, &k, &k).unwrap().hsic;
        let mut null: Vec<f64> = (0..500)
            .map(|_| {
                let p = random_permutation(n, &mut r);
                let y = Matrix::from_rows(&p.iter().map(|&i| x.row(i)).collect::<Vec<_>>()).unwrap();
                hsic_v(&x, &y, &k, &k).unwrap().hsic
            })
            .collect();
        null.sort_by(f64::total_cmp);
        assert!(observed > 3.0 * null[475]);
    }

    #[test]
    fn test_results_do_not_depend_on_threads() {
        let mut r = rng(6);
        let x = random_matrix(40, 2, &mut r);
        let y = random_matrix(40, 1, &mut r);
        let s = TestSettings { permutations: 300, alpha: 0.05 };
        let run = || independence_test(&x, &y, &KernelSpec::group(), &KernelSpec::scalar(), None, &s, &mut rng(9)).unwrap();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
        assert_eq!(single, run());
    }

    #[test]
    fn screening_examples() {
        let mut r = rng(7);
        let x = random_matrix(200, 2, &mut r);
        let y: Vec<f64> = x.rows().map(|row| row[0]).collect();
        let d = Design::new(x.clone(), vec![1.0 / 200.0; 200], Scheme::Lhs).unwrap();
        let s = TestSettings { permutations: 200, alpha: 0.05 };
        let groups = [Group::new("x1", vec![0]), Group::new("x2", vec![1])];
        let rows = screen(&d, &y, &groups, &KernelSpec::scalar(), &s, &mut r).unwrap();
        assert!(rows[0].dependent);
        assert!(!rows[1].dependent, "{rows:?}");

        let all = [Group::new("all", vec![0, 1])];
        let a = screen(&d, &y, &all, &KernelSpec::scalar(), &s, &mut rng(11)).unwrap();
        let yc = Matrix::column(&y);
        let b = independence_test(&x, &yc, &KernelSpec::group(), &KernelSpec::scalar(), None, &s, &mut rng(11)).unwrap();
        assert_eq!((a[0].hsic, a[0].p_value), (b.hsic, b.p_value.unwrap()));

        assert!(screen(&d, &y, &[Group::new("e", vec![])], &KernelSpec::scalar(), &s, &mut r).is_err());
        assert!(screen(&d, &y, &[Group::new("o", vec![2])], &KernelSpec::scalar(), &s, &mut r).is_err());

        let mut buf = Vec::new();
        write_screen_csv(&mut buf, &rows, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("input,hsic,p_value,decision\nx1,"));
        assert!(text.contains(",dependent\n") && text.contains(",independent\n"));
    }

    #[test]
    fn standardization_exposes_small_scale_columns() {
        let mut r = rng(8);
        let scales = [1e-5, 1e-3, 1e-1, 1.0, 10.0];
        let mut x = random_matrix(30, 5, &mut r);
        for i in 0..30 {
            for (v, s) in x.row_mut(i).iter_mut().zip(scales) {
                *v *= s;
            }
        }
        let raw = KernelSpec::GroupRbf { bandwidth: Bandwidth::Fixed(1.0), standardize: false };
        // perturbing only the smallest-scale column
        let mut bumped = x.clone();
        for i in 0..30 {
            bumped.row_mut(i)[0] += 3e-5 * (i as f64 / 30.0);
        }
        let diff = |k: &KernelSpec| {
            let (a, b) = (gram(&x, k).unwrap(), gram(&bumped, k).unwrap());
            a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        };
        assert!(diff(&raw) < 1e-8);
        assert!(diff(&KernelSpec::group()) > 1e-2);
    }

    #[test]
    fn kernel_json_forms() {
        let k: KernelSpec = serde_json::from_str(r#"{"type":"rbf","bandwidth":"median"}"#).unwrap();
        assert_eq!(k, KernelSpec::Rbf { bandwidth: Bandwidth::Median });
        let k: KernelSpec = serde_json::from_str(r#"{"type":"group_rbf","bandwidth":{"fixed":2.0},"standardize":true}"#).unwrap();
        assert_eq!(k, KernelSpec::GroupRbf { bandwidth: Bandwidth::Fixed(2.0), standardize: true });
        assert!(fixed(0.0).validate().is_err());
    }
}
