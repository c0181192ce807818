//! Univariate marginal laws with exact CDF, quantile, density and seeded sampling.
//!
//! Every law is sampled by inversion: `sample = quantile(U)` with `U` uniform on
//! the open unit interval, so a design built from the same uniforms is
//! reproducible bit for bit.
//!
//! The Gumbel law uses the location/scale (maximum) convention
//! `F(x) = exp(-exp(-(x - mu) / beta))`. A flood-frequency table quoting
//! "G(1013, 558)" is read as `mu = 1013`, `beta = 558`.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile. Returns `-inf`/`+inf` at 0 and 1.
pub fn std_normal_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// A univariate marginal law.
///
/// JSON form: `{"type":"triangular","a":49,"c":50,"b":51}`. A truncation bound
/// that is absent or `null` means the corresponding side is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Uniform {
        a: f64,
        b: f64,
    },
    Normal {
        mu: f64,
        sigma: f64,
    },
    #[serde(rename = "lognormal")]
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Triangular {
        a: f64,
        c: f64,
        b: f64,
    },
    Gumbel {
        mu: f64,
        beta: f64,
    },
    Truncated {
        inner: Box<DistributionSpec>,
        #[serde(default = "neg_inf", with = "lower_bound")]
        lo: f64,
        #[serde(default = "pos_inf", with = "upper_bound")]
        hi: f64,
    },
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

mod lower_bound {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { s.serialize_f64(*v) } else { s.serialize_none() }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

mod upper_bound {
    use serde::{Deserialize, Deserializer};

    pub use super::lower_bound::serialize;

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl DistributionSpec {
    pub fn uniform(a: f64, b: f64) -> Self {
        Self::Uniform { a, b }
    }

    pub fn normal(mu: f64, sigma: f64) -> Self {
        Self::Normal { mu, sigma }
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Self {
        Self::LogNormal { mu, sigma }
    }

    pub fn triangular(a: f64, c: f64, b: f64) -> Self {
        Self::Triangular { a, c, b }
    }

    pub fn gumbel(mu: f64, beta: f64) -> Self {
        Self::Gumbel { mu, beta }
    }

    pub fn truncated(inner: DistributionSpec, lo: f64, hi: f64) -> Self {
        Self::Truncated { inner: Box::new(inner), lo, hi }
    }

    /// Checks parameter constraints, including positive mass under truncation.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        match *self {
            Self::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return bad(format!("uniform requires finite a < b, got a={a}, b={b}"));
                }
            }
            Self::Normal { mu, sigma } | Self::LogNormal { mu, sigma } => {
                if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
                    return bad(format!("normal/lognormal requires sigma > 0, got mu={mu}, sigma={sigma}"));
                }
            }
            Self::Triangular { a, c, b } => {
                if !(a.is_finite() && b.is_finite() && a <= c && c <= b && a < b) {
                    return bad(format!("triangular requires a <= c <= b and a < b, got ({a}, {c}, {b})"));
                }
            }
            Self::Gumbel { mu, beta } => {
                if !(mu.is_finite() && beta.is_finite() && beta > 0.0) {
                    return bad(format!("gumbel requires beta > 0, got mu={mu}, beta={beta}"));
                }
            }
            Self::Truncated { ref inner, lo, hi } => {
                inner.validate()?;
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return bad(format!("truncation requires lo < hi, got [{lo}, {hi}]"));
                }
                let mass = inner.cdf_unchecked(hi) - inner.cdf_unchecked(lo);
                if mass <= 0.0 {
                    return bad(format!("truncation interval [{lo}, {hi}] carries no probability mass"));
                }
            }
        }
        Ok(())
    }

    /// Closed support `(min, max)`; infinite ends for unbounded laws.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Uniform { a, b } | Self::Triangular { a, b, .. } => (a, b),
            Self::Normal { .. } | Self::Gumbel { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::LogNormal { .. } => (0.0, f64::INFINITY),
            Self::Truncated { ref inner, lo, hi } => {
                let (a, b) = inner.support();
                (a.max(lo), b.min(hi))
            }
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        if x.is_nan() {
            return Err(Error::Domain("cdf evaluated at NaN".into()));
        }
        Ok(self.cdf_unchecked(x))
    }

    fn cdf_unchecked(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Self::Normal { mu, sigma } => std_normal_cdf((x - mu) / sigma),
            Self::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((x.ln() - mu) / sigma)
                }
            }
            Self::Triangular { a, c, b } => {
                if x <= a {
                    0.0
                } else if x >= b {
                    1.0
                } else if x <= c {
                    (x - a) * (x - a) / ((b - a) * (c - a))
                } else {
                    1.0 - (b - x) * (b - x) / ((b - a) * (b - c))
                }
            }
            Self::Gumbel { mu, beta } => (-(-(x - mu) / beta).exp()).exp(),
            Self::Truncated { ref inner, lo, hi } => {
                if x <= lo {
                    return 0.0;
                }
                if x >= hi {
                    return 1.0;
                }
                let (flo, fhi) = inner.mass_bounds(lo, hi);
                ((inner.cdf_unchecked(x) - flo) / (fhi - flo)).clamp(0.0, 1.0)
            }
        }
    }

    fn mass_bounds(&self, lo: f64, hi: f64) -> (f64, f64) {
        let flo = if lo == f64::NEG_INFINITY { 0.0 } else { self.cdf_unchecked(lo) };
        let fhi = if hi == f64::INFINITY { 1.0 } else { self.cdf_unchecked(hi) };
        (flo, fhi)
    }

    /// Generalized inverse CDF on `[0, 1]`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        self.validate()?;
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile level {u} outside [0, 1]")));
        }
        Ok(self.quantile_unchecked(u))
    }

    fn quantile_unchecked(&self, u: f64) -> f64 {
        match *self {
            Self::Uniform { a, b } => a + u * (b - a),
            Self::Normal { mu, sigma } => mu + sigma * std_normal_quantile(u),
            Self::LogNormal { mu, sigma } => (mu + sigma * std_normal_quantile(u)).exp(),
            Self::Triangular { a, c, b } => {
                let fc = (c - a) / (b - a);
                if u < fc {
                    a + (u * (b - a) * (c - a)).sqrt()
                } else {
                    b - ((1.0 - u) * (b - a) * (b - c)).sqrt()
                }
            }
            Self::Gumbel { mu, beta } => {
                // ln(u) through ln_1p keeps precision near u = 1
                let log_u = if u > 0.5 { (u - 1.0).ln_1p() } else { u.ln() };
                mu - beta * (-log_u).ln()
            }
            Self::Truncated { ref inner, lo, hi } => {
                let (flo, fhi) = inner.mass_bounds(lo, hi);
                let level = (flo + u * (fhi - flo)).clamp(0.0, 1.0);
                inner.quantile_unchecked(level).clamp(lo, hi)
            }
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.pdf_unchecked(x))
    }

    fn pdf_unchecked(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { a, b } => {
                if (a..=b).contains(&x) { 1.0 / (b - a) } else { 0.0 }
            }
            Self::Normal { mu, sigma } => std_normal_pdf((x - mu) / sigma) / sigma,
            Self::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal_pdf((x.ln() - mu) / sigma) / (sigma * x)
                }
            }
            Self::Triangular { a, c, b } => {
                if x < a || x > b {
                    0.0
                } else if x < c || (x == c && c > a) {
                    2.0 * (x - a) / ((b - a) * (c - a))
                } else if x == c {
                    2.0 / (b - a)
                } else {
                    2.0 * (b - x) / ((b - a) * (b - c))
                }
            }
            Self::Gumbel { mu, beta } => {
                let z = (x - mu) / beta;
                (-(z + (-z).exp())).exp() / beta
            }
            Self::Truncated { ref inner, lo, hi } => {
                if x < lo || x > hi {
                    return 0.0;
                }
                let (flo, fhi) = inner.mass_bounds(lo, hi);
                inner.pdf_unchecked(x) / (fhi - flo)
            }
        }
    }

    /// One draw by inversion of an open-interval uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.validate()?;
        let u: f64 = rng.sample(Open01);
        Ok(self.quantile_unchecked(u))
    }

    /// Quantile without re-validating; callers must have validated `self` once.
    pub(crate) fn quantile_fast(&self, u: f64) -> f64 {
        self.quantile_unchecked(u.clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flood_q() -> DistributionSpec {
        DistributionSpec::truncated(DistributionSpec::gumbel(1013.0, 558.0), 500.0, 3000.0)
    }

    fn flood_ks() -> DistributionSpec {
        DistributionSpec::truncated(DistributionSpec::normal(30.0, 8.0), 15.0, f64::INFINITY)
    }

    fn all_variants() -> Vec<DistributionSpec> {
        vec![
            DistributionSpec::uniform(7.0, 9.0),
            DistributionSpec::normal(0.0, 1.0),
            DistributionSpec::lognormal(0.0, 1.0),
            DistributionSpec::triangular(49.0, 50.0, 51.0),
            DistributionSpec::triangular(55.0, 55.5, 56.0),
            DistributionSpec::triangular(0.0, 0.0, 1.0),
            DistributionSpec::gumbel(1013.0, 558.0),
            flood_q(),
            flood_ks(),
        ]
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(DistributionSpec::uniform(7.0, 9.0).cdf(8.0).unwrap(), 0.5);
        assert_eq!(DistributionSpec::triangular(49.0, 50.0, 51.0).cdf(50.0).unwrap(), 0.5);
        assert_eq!(flood_q().cdf(3000.0).unwrap(), 1.0);
        assert_eq!(flood_q().cdf(500.0).unwrap(), 0.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(DistributionSpec::normal(0.0, 1.0).quantile(0.5).unwrap(), 0.0);
        assert_eq!(DistributionSpec::uniform(7.0, 9.0).quantile(0.25).unwrap(), 7.5);
        assert!(DistributionSpec::normal(0.0, 1.0).quantile(1.5).is_err());
        assert!(DistributionSpec::normal(0.0, 1.0).quantile(-0.1).is_err());
    }

    /// Bisection on the CDF, independent of the analytic quantile path.
    fn bisect_quantile(d: &DistributionSpec, u: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if d.cdf(mid).unwrap() < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn truncated_normal_median_matches_bisection() {
        let d = flood_ks();
        let oracle = bisect_quantile(&d, 0.5, 15.0, 200.0);
        assert!((d.cdf(oracle).unwrap() - 0.5).abs() < 1e-9);
        let q = d.quantile(0.5).unwrap();
        assert!((q - oracle).abs() < 1e-8, "{q} vs {oracle}");
        assert!((d.cdf(q).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(DistributionSpec::normal(0.0, 0.0).cdf(1.0), Err(Error::Parameter(_))));
        assert!(DistributionSpec::normal(0.0, -1.0).quantile(0.5).is_err());
        assert!(DistributionSpec::triangular(1.0, 0.0, 2.0).validate().is_err());
        assert!(DistributionSpec::uniform(2.0, 2.0).validate().is_err());
        assert!(DistributionSpec::truncated(DistributionSpec::uniform(0.0, 1.0), 2.0, 3.0)
            .validate()
            .is_err());
        assert!(DistributionSpec::truncated(DistributionSpec::normal(0.0, 1.0), 1.0, 0.0)
            .validate()
            .is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let d = DistributionSpec::uniform(0.0, 1.0);
        let a = d.sample(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = d.sample(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normal_sample_mean() {
        let d = DistributionSpec::normal(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let mean = (0..n).map(|_| d.sample(&mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn truncated_samples_stay_inside_and_match_cdf() {
        let d = flood_q();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng).unwrap()).collect();
        assert!(xs.iter().all(|&x| (500.0..=3000.0).contains(&x)));
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = d.cdf(x).unwrap();
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn round_trip_and_monotonicity_every_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in all_variants() {
            for _ in 0..1000 {
                let u = 0.001 + 0.998 * rand::Rng::random::<f64>(&mut rng);
                let x = d.quantile(u).unwrap();
                let back = d.cdf(x).unwrap();
                assert!((back - u).abs() < 1e-9, "{d:?}: u={u} x={x} back={back}");
            }
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=1000 {
                let q = d.quantile(k as f64 / 1000.0).unwrap();
                assert!(q >= prev, "{d:?} not monotone at {k}");
                prev = q;
            }
        }
    }

    #[test]
    fn cdf_endpoints() {
        for d in all_variants() {
            let (lo, hi) = d.support();
            if lo.is_finite() {
                assert_eq!(d.cdf(lo).unwrap(), 0.0, "{d:?}");
            }
            if hi.is_finite() {
                assert_eq!(d.cdf(hi).unwrap(), 1.0, "{d:?}");
            }
        }
    }

    #[test]
    fn density_integrates_to_cdf_increment() {
        // trapezoid rule oracle for F(b) - F(a)
        for d in all_variants() {
            let a = d.quantile(0.2).unwrap();
            let b = d.quantile(0.7).unwrap();
            let n = 20_000;
            let h = (b - a) / n as f64;
            let mut s = 0.5 * (d.pdf(a).unwrap() + d.pdf(b).unwrap());
            for k in 1..n {
                s += d.pdf(a + k as f64 * h).unwrap();
            }
            assert!((s * h - 0.5).abs() < 1e-6, "{d:?}: {}", s * h);
        }
    }

    #[test]
    fn json_form() {
        let d: DistributionSpec =
            serde_json::from_str(r#"{"type":"triangular","a":49,"c":50,"b":51}"#).unwrap();
        assert_eq!(d, DistributionSpec::triangular(49.0, 50.0, 51.0));
        let t: DistributionSpec =
            serde_json::from_str(r#"{"type":"truncated","inner":{"type":"normal","mu":30,"sigma":8},"lo":15}"#)
                .unwrap();
        assert_eq!(t, flood_ks());
        let back: DistributionSpec = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<DistributionSpec>(r#"{"type":"uniform","a":0,"b":1,"c":2}"#).is_err());
    }

    proptest! {
        #[test]
        fn cdf_nondecreasing(x in -100.0f64..3100.0, dx in 0.0f64..50.0) {
            for d in all_variants() {
                prop_assert!(d.cdf(x).unwrap() <= d.cdf(x + dx).unwrap());
            }
        }
    }
}
