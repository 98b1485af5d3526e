//! The `sarmanov-config/1` JSON configuration.
//!
//! ```json
//! {
//!   "schema": "sarmanov-config/1",
//!   "dimension": 2,
//!   "margins": [{ "kernel": "hki", "params": { "p": 2 } }],
//!   "a": 0.5,
//!   "seed": 42,
//!   "n": 100000
//! }
//! ```
//!
//! A margin is one of `{"kernel": id, "params": {..}}`, `{"values": [..]}`
//! (a tabulated kernel on a uniform grid) or
//! `{"pair": {"pi": p, "f0": [..], "f1": [..]}}` (two cdfs on a uniform
//! grid). A single margin is reused for every coordinate. Bivariate configs
//! give exactly one of `a` and `theta`; higher dimensions give a
//! `bernoulli` section instead:
//! `{"type": "full_pmf", "pmf": [..]}`, `{"type": "exchangeable_sum", "w": [..]}`
//! or `{"type": "named", "coupling": "independent" | "comonotone" | "end" | "epd"}`.
//! `power` (an integer `r >= 1`, bivariate kernel margins and `a` only)
//! selects the powered copula. Unknown fields are rejected.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bernoulli::{BernoulliSpec, Certificate, NamedCoupling};
use crate::calibration::{calibrate_from_kernel, explicit_pair, CalibratedPair};
use crate::copula::{admissible_a_interval, build_powered, PoweredCopula, SarmanovCopula};
use crate::error::{Error, Result};
use crate::kernel::{catalog_lookup, tabulated_kernel, Kernel, RealFn};
use crate::numeric::Interval;

pub const SCHEMA: &str = "sarmanov-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopulaConfig {
    pub schema: String,
    pub dimension: usize,
    pub margins: Vec<MarginConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bernoulli: Option<BernoulliConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairTable {
    pub pi: f64,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BernoulliConfig {
    FullPmf { pmf: Vec<f64> },
    ExchangeableSum { w: Vec<f64> },
    Named { coupling: NamedCoupling },
}

/// A configured model, ready for sampling and measurement.
#[derive(Debug, Clone)]
pub enum Model {
    Sarmanov(SarmanovCopula),
    Powered(Box<PoweredCopula>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoweredCheck {
    pub r: u32,
    pub a: f64,
    /// Sufficient interval from the transformed kernels.
    pub interval: Interval,
    /// The true admissible range may be wider; the gap is not computed.
    pub gap: &'static str,
}

/// Outcome of `validate`: the certificate plus the parameter intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validation {
    pub admissible: bool,
    pub d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_interval: Option<Interval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub powered: Option<PoweredCheck>,
}

/// Linear interpolation of values on a uniform grid over `[0, 1]`.
fn interpolant(values: Vec<f64>) -> RealFn {
    let n = values.len();
    Arc::new(move |u: f64| {
        let x = u.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        let t = x - i as f64;
        values[i] + t * (values[i + 1] - values[i])
    })
}

impl MarginConfig {
    pub fn kernel(id: &str, params: &[(&str, f64)]) -> Self {
        Self {
            kernel: Some(id.to_string()),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            values: None,
            pair: None,
        }
    }

    /// The source kernel, if this margin has one.
    pub fn source_kernel(&self) -> Result<Option<Kernel>> {
        match (&self.kernel, &self.values, &self.pair) {
            (Some(id), None, None) => Ok(Some(catalog_lookup(id, &self.params)?)),
            (None, Some(v), None) if self.params.is_empty() => Ok(Some(tabulated_kernel(v.clone())?)),
            (None, None, Some(_)) if self.params.is_empty() => Ok(None),
            _ => Err(Error::Config("a margin needs exactly one of `kernel`, `values` or `pair`".into())),
        }
    }

    pub fn calibrated(&self) -> Result<CalibratedPair> {
        if let Some(k) = self.source_kernel()? {
            return calibrate_from_kernel(&k);
        }
        let table = self.pair.as_ref().expect("pair margin");
        if table.f0.len() < 2 || table.f0.len() != table.f1.len() {
            return Err(Error::Config("pair tables need two equal-length grids of at least 2 points".into()));
        }
        explicit_pair(interpolant(table.f0.clone()), interpolant(table.f1.clone()), table.pi)
    }
}

impl CopulaConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: CopulaConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_structure()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check_structure(&self) -> Result<()> {
        let d = self.dimension;
        if self.schema != SCHEMA {
            return Err(Error::Config(format!("unsupported schema `{}`; expected `{SCHEMA}`", self.schema)));
        }
        if d < 2 {
            return Err(Error::Config("dimension must be at least 2".into()));
        }
        if self.margins.len() != 1 && self.margins.len() != d {
            return Err(Error::Config(format!("{} margins given for dimension {d}", self.margins.len())));
        }
        if d == 2 {
            if self.a.is_some() == self.theta.is_some() {
                return Err(Error::Config("bivariate configs need exactly one of `a` and `theta`".into()));
            }
            if self.bernoulli.is_some() {
                return Err(Error::Config("bivariate configs take `a` or `theta`, not `bernoulli`".into()));
            }
        } else {
            if self.a.is_some() || self.theta.is_some() {
                return Err(Error::Config("`a` and `theta` apply to dimension 2 only".into()));
            }
            if self.bernoulli.is_none() {
                return Err(Error::Config(format!("dimension {d} needs a `bernoulli` section")));
            }
        }
        if let Some(r) = self.power {
            if d != 2 {
                return Err(Error::Config("`power` applies to dimension 2 only".into()));
            }
            if r == 0 {
                return Err(Error::Config("`power` must be a positive integer".into()));
            }
            if self.a.is_none() {
                return Err(Error::Config("powered configs are parametrized by `a`".into()));
            }
        }
        Ok(())
    }

    /// Margin configs expanded to one per coordinate.
    pub fn margin_list(&self) -> Vec<&MarginConfig> {
        (0..self.dimension).map(|m| &self.margins[m.min(self.margins.len() - 1)]).collect()
    }

    pub fn pairs(&self) -> Result<Vec<CalibratedPair>> {
        self.margin_list().into_iter().map(MarginConfig::calibrated).collect()
    }

    /// The Bernoulli law, with margins declared by the calibrated pairs.
    pub fn bernoulli_spec(&self, pairs: &[CalibratedPair]) -> Result<BernoulliSpec> {
        let pi: Vec<f64> = pairs.iter().map(|p| p.pi()).collect();
        match &self.bernoulli {
            None => {
                let theta = match (self.theta, self.a) {
                    (Some(t), _) => t,
                    (None, Some(a)) => a / (pairs[0].kernel_scale() * pairs[1].kernel_scale()),
                    (None, None) => unreachable!("checked on parse"),
                };
                BernoulliSpec::bivariate_theta(pi[0], pi[1], theta)
            }
            Some(BernoulliConfig::FullPmf { pmf }) => BernoulliSpec::full_pmf(pmf.clone(), Some(pi)),
            Some(BernoulliConfig::ExchangeableSum { w }) => {
                if pi.iter().any(|&p| (p - pi[0]).abs() > 1e-12) {
                    return Err(Error::Config("exchangeable laws need margins with a common pi".into()));
                }
                if w.len() != self.dimension + 1 {
                    return Err(Error::Config(format!("`w` needs {} entries", self.dimension + 1)));
                }
                BernoulliSpec::exchangeable_sum(w.clone(), Some(pi[0]))
            }
            Some(BernoulliConfig::Named { coupling }) => BernoulliSpec::named(*coupling, pi),
        }
    }

    fn powered_kernels(&self) -> Result<[Kernel; 2]> {
        let list = self.margin_list();
        let k = |m: usize| {
            list[m].source_kernel()?.ok_or_else(|| Error::Config("powered configs need kernel margins".into()))
        };
        Ok([k(0)?, k(1)?])
    }

    /// Admissibility certificate for the configured parameters.
    pub fn validate(&self) -> Result<Validation> {
        let d = self.dimension;
        if let (Some(r), Some(a)) = (self.power, self.a) {
            let [k1, k2] = self.powered_kernels()?;
            let (admissible, interval) = match build_powered(&k1, &k2, a, r) {
                Ok(p) => (true, p.interval()),
                Err(Error::NotAdmissibleForTransformed { lo, hi, .. }) => (false, Interval::new(lo, hi)),
                Err(e) => return Err(e),
            };
            return Ok(Validation {
                admissible,
                d,
                a: Some(a),
                a_interval: Some(interval),
                certificate: None,
                powered: Some(PoweredCheck { r, a, interval, gap: "unknown" }),
            });
        }
        let pairs = self.pairs()?;
        let spec = self.bernoulli_spec(&pairs)?;
        let cert = spec.admissibility_check();
        let (mut a, mut a_interval) = (None, None);
        if d == 2 {
            let list = self.margin_list();
            if let (Some(k1), Some(k2)) = (list[0].source_kernel()?, list[1].source_kernel()?) {
                a_interval = Some(admissible_a_interval(&k1, &k2)?);
            }
            let theta = spec.mixed_moment(&[0, 1])?;
            a = Some(self.a.unwrap_or(theta * pairs[0].kernel_scale() * pairs[1].kernel_scale()));
        }
        Ok(Validation { admissible: cert.admissible, d, a, a_interval, certificate: Some(cert), powered: None })
    }

    pub fn build(&self) -> Result<Model> {
        if let (Some(r), Some(a)) = (self.power, self.a) {
            let [k1, k2] = self.powered_kernels()?;
            return Ok(Model::Powered(Box::new(build_powered(&k1, &k2, a, r)?)));
        }
        let pairs = self.pairs()?;
        let spec = self.bernoulli_spec(&pairs)?;
        Ok(Model::Sarmanov(SarmanovCopula::new(pairs, spec)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<CopulaConfig> {
        CopulaConfig::from_json(text)
    }

    #[test]
    fn bivariate_fgm() {
        let cfg = parse(r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"}],"a":1}"#).unwrap();
        let v = cfg.validate().unwrap();
        assert!(v.admissible);
        assert_eq!(v.a_interval, Some(Interval::new(-1.0, 1.0)));
        assert!(matches!(cfg.build().unwrap(), Model::Sarmanov(_)));

        let bad = parse(r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"}],"a":1.01}"#).unwrap();
        assert!(!bad.validate().unwrap().admissible);
        assert!(matches!(bad.build(), Err(Error::NotAdmissible(_))));
    }

    #[test]
    fn structural_errors() {
        let cases = [
            r#"{"schema":"sarmanov-config/2","dimension":2,"margins":[{"kernel":"fgm"}],"a":1}"#,
            r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"}],"a":1,"theta":1}"#,
            r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"}]}"#,
            r#"{"schema":"sarmanov-config/1","dimension":3,"margins":[{"kernel":"fgm"}]}"#,
            r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"}],"a":1,"colour":"red"}"#,
            r#"{"schema":"sarmanov-config/1","dimension":3,"margins":[{"kernel":"fgm"}],"power":2,"bernoulli":{"type":"named","coupling":"epd"}}"#,
            r#"{"schema":"sarmanov-config/1","dimension":3,"margins":[{"kernel":"fgm"}],"bernoulli":{"type":"named","coupling":"epd","extra":1}}"#,
            r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"},{"kernel":"fgm"},{"kernel":"fgm"}],"a":1}"#,
            r#"not json"#,
        ];
        for text in cases {
            assert!(matches!(parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn trivariate_sections() {
        let epd = parse(r#"{"schema":"sarmanov-config/1","dimension":3,"margins":[{"kernel":"fgm"}],"bernoulli":{"type":"named","coupling":"epd"}}"#).unwrap();
        assert!(epd.validate().unwrap().admissible);
        let sum = parse(r#"{"schema":"sarmanov-config/1","dimension":3,"margins":[{"kernel":"checkerboard"}],"bernoulli":{"type":"exchangeable_sum","w":[0,0.5,0.5,0]}}"#).unwrap();
        let Model::Sarmanov(c) = sum.build().unwrap() else { panic!() };
        assert!((c.theta(0b011) + 1.0 / 3.0).abs() < 1e-15);
        let pmf = parse(r#"{"schema":"sarmanov-config/1","dimension":3,"margins":[{"kernel":"fgm"}],"bernoulli":{"type":"full_pmf","pmf":[0.125,0.125,0.125,0.125,0.125,0.125,0.125,0.125]}}"#).unwrap();
        assert!(pmf.validate().unwrap().admissible);
        let skew = parse(r#"{"schema":"sarmanov-config/1","dimension":3,"margins":[{"kernel":"fgm"}],"bernoulli":{"type":"full_pmf","pmf":[0.2,0.1,0.1,0.1,0.1,0.1,0.1,0.2]}}"#).unwrap();
        // margins recovered from the table are 0.5; the declared ones are 0.5 too
        assert!(skew.validate().unwrap().admissible);
    }

    #[test]
    fn pair_and_table_margins() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let f0: Vec<f64> = grid.iter().map(|u| u * u).collect();
        let f1: Vec<f64> = grid.iter().map(|u| 2.0 * u - u * u).collect();
        let values: Vec<f64> = grid.iter().map(|u| u * (1.0 - u)).collect();
        let cfg = CopulaConfig {
            schema: SCHEMA.into(),
            dimension: 2,
            margins: vec![
                MarginConfig { kernel: None, params: BTreeMap::new(), values: None, pair: Some(PairTable { pi: 0.5, f0, f1 }) },
                MarginConfig { kernel: None, params: BTreeMap::new(), values: Some(values), pair: None },
            ],
            a: None,
            theta: Some(0.5),
            bernoulli: None,
            power: None,
            seed: None,
            n: None,
        };
        let round = CopulaConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(round, cfg);
        let v = cfg.validate().unwrap();
        assert!(v.admissible);
        assert!(v.a_interval.is_none());
        let Model::Sarmanov(c) = cfg.build().unwrap() else { panic!() };
        let (u, w) = (0.3, 0.6);
        let expected = u * w + 0.5 * (0.5 * (2.0 * u - 2.0 * u * u)) * (w * (1.0 - w));
        assert!((c.cdf(&[u, w]).unwrap() - expected).abs() < 1e-3);
    }

    #[test]
    fn powered_configs() {
        let ok = parse(r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"}],"a":0.25,"power":2}"#).unwrap();
        let v = ok.validate().unwrap();
        assert!(v.admissible);
        assert_eq!(v.powered.unwrap().gap, "unknown");
        assert!(matches!(ok.build().unwrap(), Model::Powered(_)));
        let bad = parse(r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"}],"a":0.5,"power":3}"#).unwrap();
        assert!(!bad.validate().unwrap().admissible);
        assert!(matches!(bad.build(), Err(Error::NotAdmissibleForTransformed { .. })));
    }

    #[test]
    fn floats_parse_exactly() {
        let cfg = parse(r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"}],"a":0.30000000000000004}"#).unwrap();
        assert_eq!(cfg.a, Some(0.30000000000000004));
    }
}
