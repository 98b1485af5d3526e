//! Latent Bernoulli laws on `{0,1}^d`, their normalized mixed moments
//! `theta_S = E[prod_{m in S} (I_m - pi_m) / pi_m]`, and admissibility.
//!
//! States are bit masks: bit `m` of the mask is the index `I_{m+1}`. In
//! text form a state is written `i_1 i_2 ... i_d`, so the mask `0b01` of a
//! bivariate law prints as `"10"`.

use std::borrow::Cow;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::numeric::Interval;

/// Largest dimension handled by full enumeration of `{0,1}^d`.
pub const MAX_ENUM_DIM: usize = 20;
/// Largest dimension for exchangeable and named laws.
pub const MAX_DIM: usize = 10_000;
/// Entries in `[-PMF_TOL, 0)` are rounding dust and are clamped to zero.
pub const PMF_TOL: f64 = 1e-12;
/// Certificates embed the materialized pmf up to this dimension.
const CERT_PMF_DIM: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedCoupling {
    Independent,
    /// `I_m = 1{V < pi_m}` for a single uniform `V`.
    Comonotone,
    /// Extreme negative dependence, `d = 3`, `pi = 1/2`: `w = (0, 1/2, 1/2, 0)`.
    End,
    /// Extreme positive dependence, `pi = 1/2`: all zeros or all ones.
    Epd,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BernoulliLaw {
    /// Probability of every state, indexed by mask.
    FullPmf(Vec<f64>),
    /// Bivariate law with `theta = E[Z_1 Z_2]`.
    BivariateTheta(f64),
    /// Exchangeable law; `w[j]` is the probability that exactly `j` indices are 1.
    ExchangeableSum(Vec<f64>),
    Named(NamedCoupling),
}

/// A d-variate Bernoulli law with declared margins `pi_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliSpec {
    d: usize,
    pi: Vec<f64>,
    law: BernoulliLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmfEntry {
    pub state: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// State bitstring, `w_j`, `sum`, `mean` or `pi_m`.
    pub entry: String,
    pub value: f64,
    pub reason: String,
}

/// Outcome of an admissibility check. A failing certificate is a result,
/// not an error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub admissible: bool,
    pub d: usize,
    pub pi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_interval: Option<Interval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pmf: Option<Vec<PmfEntry>>,
    pub violations: Vec<Violation>,
}

impl Certificate {
    /// `state,probability` CSV of the embedded pmf.
    pub fn pmf_csv(&self) -> Option<String> {
        let pmf = self.pmf.as_ref()?;
        let mut out = String::from("state,probability\n");
        for e in pmf {
            out.push_str(&format!("{},{:.17e}\n", e.state, e.probability));
        }
        Some(out)
    }
}

/// Text form of a state mask.
pub fn state_string(mask: usize, d: usize) -> String {
    (0..d).map(|m| if mask >> m & 1 == 1 { '1' } else { '0' }).collect()
}

/// The exact `theta` interval keeping all four bivariate pmf entries nonnegative.
pub fn theta_range_bivariate(pi1: f64, pi2: f64) -> Interval {
    let lo = -(1.0f64).min((1.0 - pi1) * (1.0 - pi2) / (pi1 * pi2));
    let hi = ((1.0 - pi1) / pi1).min((1.0 - pi2) / pi2);
    Interval::new(lo, hi)
}

/// The four bivariate entries, indexed by mask, before clamping.
fn bivariate_pmf(pi1: f64, pi2: f64, theta: f64) -> [f64; 4] {
    let t = pi1 * pi2 * theta;
    [
        (1.0 - pi1) * (1.0 - pi2) + t,
        pi1 * (1.0 - pi2) - t,
        (1.0 - pi1) * pi2 - t,
        pi1 * pi2 + t,
    ]
}

fn clamp_dust(p: f64) -> f64 {
    if (-PMF_TOL..0.0).contains(&p) {
        0.0
    } else {
        p
    }
}

fn check_pi(pi: &[f64]) -> Result<()> {
    for (m, &p) in pi.iter().enumerate() {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidSpec(format!("pi_{} = {p} must lie in (0, 1)", m + 1)));
        }
    }
    Ok(())
}

fn check_dim(d: usize, max: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidSpec(format!("dimension {d} is below 2")));
    }
    if d > max {
        return Err(Error::DimensionTooLarge { d, max });
    }
    Ok(())
}

fn is_half(pi: &[f64]) -> bool {
    pi.iter().all(|&p| (p - 0.5).abs() <= PMF_TOL)
}

/// Binomial coefficient as an exact integer when it fits in 53 bits.
fn binomial_exact(n: usize, k: usize) -> Option<f64> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul((n - i) as u128)? / (i as u128 + 1);
        if c > 1 << 53 {
            return None;
        }
    }
    Some(c as f64)
}

/// Hypergeometric weights `P(l ones among k fixed indices | j ones among d)`
/// for `l = 0..=k`.
fn hypergeometric(d: usize, j: usize, k: usize) -> Vec<f64> {
    let lo = (k + j).saturating_sub(d);
    let hi = k.min(j);
    let mut out = vec![0.0; k + 1];
    let exact = binomial_exact(d, k);
    for (l, slot) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let terms = (binomial_exact(j, l), binomial_exact(d - j, k - l), exact);
        *slot = match terms {
            (Some(a), Some(b), Some(c)) => a * b / c,
            _ => (ln_binomial(j as u64, l as u64) + ln_binomial((d - j) as u64, (k - l) as u64)
                - ln_binomial(d as u64, k as u64))
            .exp(),
        };
    }
    out
}

/// `theta_k` of an exchangeable law with common margin `pi` and sum law `w`.
pub fn exchangeable_theta(pi: f64, w: &[f64], k: usize) -> f64 {
    let d = w.len() - 1;
    let z1 = (1.0 - pi) / pi;
    let pow1: Vec<f64> = (0..=k).map(|l| z1.powi(l as i32)).collect();
    let sign = |e: usize| if e.is_multiple_of(2) { 1.0 } else { -1.0 };
    w.iter()
        .enumerate()
        .filter(|(_, &wj)| wj != 0.0)
        .map(|(j, &wj)| {
            let h = hypergeometric(d, j, k);
            let inner: f64 = h.iter().enumerate().map(|(l, &p)| p * pow1[l] * sign(k - l)).sum();
            wj * inner
        })
        .sum()
}

impl BernoulliSpec {
    /// A law given by its full table. Margins are recovered from the table
    /// unless declared, in which case the certificate checks agreement.
    pub fn full_pmf(pmf: Vec<f64>, declared_pi: Option<Vec<f64>>) -> Result<Self> {
        let n = pmf.len();
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidSpec(format!("pmf has {n} entries; need 2^d with d >= 2")));
        }
        let d = n.trailing_zeros() as usize;
        check_dim(d, MAX_ENUM_DIM)?;
        if pmf.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidSpec("pmf contains a non-finite entry".into()));
        }
        let pi = match declared_pi {
            Some(pi) => {
                if pi.len() != d {
                    return Err(Error::InvalidSpec(format!("{} margins declared for d = {d}", pi.len())));
                }
                pi
            }
            None => recovered_margins(&pmf, d),
        };
        check_pi(&pi)?;
        Ok(Self { d, pi, law: BernoulliLaw::FullPmf(pmf) })
    }

    pub fn bivariate_theta(pi1: f64, pi2: f64, theta: f64) -> Result<Self> {
        let pi = vec![pi1, pi2];
        check_pi(&pi)?;
        if !theta.is_finite() {
            return Err(Error::InvalidSpec(format!("theta = {theta} is not finite")));
        }
        Ok(Self { d: 2, pi, law: BernoulliLaw::BivariateTheta(theta) })
    }

    /// Exchangeable law from the distribution `w` of the number of ones. The
    /// common margin is `sum_j j w_j / d` unless declared.
    pub fn exchangeable_sum(w: Vec<f64>, declared_pi: Option<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidSpec("empty weight vector".into()));
        }
        let d = w.len() - 1;
        check_dim(d, MAX_DIM)?;
        if w.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidSpec("weights contain a non-finite entry".into()));
        }
        let pi = declared_pi.unwrap_or_else(|| {
            let total: f64 = w.iter().sum();
            w.iter().enumerate().map(|(j, &wj)| j as f64 * wj).sum::<f64>() / (d as f64 * total)
        });
        check_pi(&[pi])?;
        Ok(Self { d, pi: vec![pi; d], law: BernoulliLaw::ExchangeableSum(w) })
    }

    pub fn named(coupling: NamedCoupling, pi: Vec<f64>) -> Result<Self> {
        let d = pi.len();
        let max = match coupling {
            NamedCoupling::Independent | NamedCoupling::Comonotone => MAX_DIM,
            NamedCoupling::Epd => MAX_DIM,
            NamedCoupling::End => 3,
        };
        check_dim(d, max)?;
        check_pi(&pi)?;
        if matches!(coupling, NamedCoupling::End | NamedCoupling::Epd) && !is_half(&pi) {
            return Err(Error::MarginsNotHalf);
        }
        if coupling == NamedCoupling::End && d != 3 {
            return Err(Error::InvalidSpec("END is available for d = 3 only".into()));
        }
        Ok(Self { d, pi, law: BernoulliLaw::Named(coupling) })
    }

    pub fn independent(pi: Vec<f64>) -> Result<Self> {
        Self::named(NamedCoupling::Independent, pi)
    }

    pub fn comonotone(pi: Vec<f64>) -> Result<Self> {
        Self::named(NamedCoupling::Comonotone, pi)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn law(&self) -> &BernoulliLaw {
        &self.law
    }

    pub fn is_independent(&self) -> bool {
        matches!(self.law, BernoulliLaw::Named(NamedCoupling::Independent))
    }

    /// `(pi, w)` when the law is exchangeable with a known sum distribution.
    pub fn exchangeable_form(&self) -> Option<(f64, Cow<'_, [f64]>)> {
        let common = self.pi.iter().all(|&p| p == self.pi[0]);
        match &self.law {
            BernoulliLaw::ExchangeableSum(w) => Some((self.pi[0], Cow::Borrowed(w))),
            BernoulliLaw::Named(NamedCoupling::End) => Some((0.5, Cow::Owned(vec![0.0, 0.5, 0.5, 0.0]))),
            BernoulliLaw::Named(NamedCoupling::Epd) => Some((0.5, Cow::Owned(extremes(self.d, 0.5)))),
            BernoulliLaw::Named(NamedCoupling::Comonotone) if common => {
                Some((self.pi[0], Cow::Owned(extremes(self.d, self.pi[0]))))
            }
            _ => None,
        }
    }

    fn canonical_subset(&self, s: &[usize]) -> Result<Vec<usize>> {
        let mut s = s.to_vec();
        s.sort_unstable();
        s.dedup();
        if s.len() < 2 || s.iter().any(|&m| m >= self.d) {
            return Err(Error::SubsetTooSmall { d: self.d });
        }
        Ok(s)
    }

    /// `theta_S` for a subset of 0-based indices with at least two elements.
    pub fn mixed_moment(&self, s: &[usize]) -> Result<f64> {
        let s = self.canonical_subset(s)?;
        if let Some((pi, w)) = self.exchangeable_form() {
            return Ok(exchangeable_theta(pi, &w, s.len()));
        }
        Ok(match &self.law {
            BernoulliLaw::Named(NamedCoupling::Independent) => 0.0,
            BernoulliLaw::BivariateTheta(t) => *t,
            BernoulliLaw::FullPmf(pmf) => {
                let z: Vec<[f64; 2]> = s.iter().map(|&m| z_values(self.pi[m])).collect();
                pmf.iter()
                    .enumerate()
                    .map(|(mask, &p)| {
                        let prod: f64 = s.iter().zip(&z).map(|(&m, zm)| zm[mask >> m & 1]).product();
                        clamp_dust(p) * prod
                    })
                    .sum()
            }
            BernoulliLaw::Named(NamedCoupling::Comonotone) => {
                let mut t: Vec<f64> = s.iter().map(|&m| self.pi[m]).collect();
                t.sort_by(f64::total_cmp);
                // on [t_(i-1), t_(i)) exactly the indices with threshold >= t_(i) are 1
                let mut prev = 0.0;
                let mut total = 0.0;
                for i in 0..=t.len() {
                    let right = if i < t.len() { t[i] } else { 1.0 };
                    let prod: f64 = t
                        .iter()
                        .enumerate()
                        .map(|(r, &p)| z_values(p)[(r >= i) as usize])
                        .product();
                    total += (right - prev) * prod;
                    prev = right;
                }
                total
            }
            _ => unreachable!("exchangeable forms handled above"),
        })
    }

    /// All `theta_S` indexed by subset mask (entries with `|S| < 2` are 0).
    pub fn theta_table(&self) -> Result<Vec<f64>> {
        check_dim(self.d, MAX_ENUM_DIM)?;
        let n = 1usize << self.d;
        if self.is_independent() {
            return Ok(vec![0.0; n]);
        }
        if let Some((pi, w)) = self.exchangeable_form() {
            let by_size: Vec<f64> =
                (0..=self.d).map(|k| if k < 2 { 0.0 } else { exchangeable_theta(pi, &w, k) }).collect();
            return Ok((0..n).map(|mask| by_size[mask.count_ones() as usize]).collect());
        }
        let mut t = self.materialize_pmf()?;
        for m in 0..self.d {
            let [z0, z1] = z_values(self.pi[m]);
            let bit = 1 << m;
            for mask in 0..n {
                if mask & bit == 0 {
                    let (a, b) = (t[mask], t[mask | bit]);
                    t[mask] = a + b;
                    t[mask | bit] = z0 * a + z1 * b;
                }
            }
        }
        for (mask, v) in t.iter_mut().enumerate() {
            if mask.count_ones() < 2 {
                *v = 0.0;
            }
        }
        Ok(t)
    }

    /// Probability of every state, with rounding dust clamped to zero.
    pub fn materialize_pmf(&self) -> Result<Vec<f64>> {
        check_dim(self.d, MAX_ENUM_DIM)?;
        let d = self.d;
        let n = 1usize << d;
        if let Some((_, w)) = self.exchangeable_form() {
            let per: Vec<f64> = (0..=d).map(|j| clamp_dust(w[j]) / binomial_count(d, j)).collect();
            return Ok((0..n).map(|mask| per[mask.count_ones() as usize]).collect());
        }
        Ok(match &self.law {
            BernoulliLaw::FullPmf(p) => p.iter().map(|&x| clamp_dust(x)).collect(),
            BernoulliLaw::BivariateTheta(t) => {
                bivariate_pmf(self.pi[0], self.pi[1], *t).iter().map(|&x| clamp_dust(x)).collect()
            }
            BernoulliLaw::Named(NamedCoupling::Independent) => (0..n)
                .map(|mask| (0..d).map(|m| if mask >> m & 1 == 1 { self.pi[m] } else { 1.0 - self.pi[m] }).product())
                .collect(),
            BernoulliLaw::Named(NamedCoupling::Comonotone) => {
                let mut order: Vec<usize> = (0..d).collect();
                order.sort_by(|&a, &b| self.pi[a].total_cmp(&self.pi[b]));
                let mut pmf = vec![0.0; n];
                let mut mask = n - 1;
                let mut prev = 0.0;
                for &m in &order {
                    pmf[mask] += self.pi[m] - prev;
                    prev = self.pi[m];
                    mask &= !(1 << m);
                }
                pmf[0] += 1.0 - prev;
                pmf
            }
            _ => unreachable!("exchangeable forms handled above"),
        })
    }

    /// Nonnegativity, normalization and margin checks.
    pub fn admissibility_check(&self) -> Certificate {
        let d = self.d;
        let mut violations = Vec::new();
        let mut theta_interval = None;
        let mut weights = None;
        let tol_sum = PMF_TOL * (d as f64).max(1.0);
        match &self.law {
            BernoulliLaw::FullPmf(pmf) => {
                for (mask, &p) in pmf.iter().enumerate() {
                    if p < -PMF_TOL {
                        violations.push(Violation {
                            entry: state_string(mask, d),
                            value: p,
                            reason: "negative probability".into(),
                        });
                    }
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > tol_sum {
                    violations.push(Violation { entry: "sum".into(), value: total, reason: "pmf does not sum to 1".into() });
                }
                for (m, r) in recovered_margins(pmf, d).into_iter().enumerate() {
                    if (r - self.pi[m]).abs() > tol_sum {
                        violations.push(Violation {
                            entry: format!("pi_{}", m + 1),
                            value: r,
                            reason: format!("recovered margin differs from declared {}", self.pi[m]),
                        });
                    }
                }
            }
            BernoulliLaw::BivariateTheta(t) => {
                let iv = theta_range_bivariate(self.pi[0], self.pi[1]);
                theta_interval = Some(iv);
                for (mask, &p) in bivariate_pmf(self.pi[0], self.pi[1], *t).iter().enumerate() {
                    if p < -PMF_TOL {
                        violations.push(Violation {
                            entry: state_string(mask, 2),
                            value: p,
                            reason: format!("negative probability; theta must lie in [{}, {}]", iv.lo, iv.hi),
                        });
                    }
                }
            }
            BernoulliLaw::ExchangeableSum(w) => {
                for (j, &wj) in w.iter().enumerate() {
                    if wj < -PMF_TOL {
                        violations.push(Violation { entry: format!("w_{j}"), value: wj, reason: "negative weight".into() });
                    }
                }
                let total: f64 = w.iter().sum();
                if (total - 1.0).abs() > tol_sum {
                    violations.push(Violation { entry: "sum".into(), value: total, reason: "weights do not sum to 1".into() });
                }
                let mean: f64 = w.iter().enumerate().map(|(j, &wj)| j as f64 * wj).sum();
                if (mean - d as f64 * self.pi[0]).abs() > tol_sum {
                    violations.push(Violation {
                        entry: "mean".into(),
                        value: mean,
                        reason: format!("sum_j j w_j must equal d pi = {}", d as f64 * self.pi[0]),
                    });
                }
                weights = Some(w.iter().map(|&x| clamp_dust(x)).collect());
            }
            BernoulliLaw::Named(_) => {
                if let Some((_, w)) = self.exchangeable_form() {
                    weights = Some(w.into_owned());
                }
            }
        }
        let admissible = violations.is_empty();
        let pmf = if admissible && d <= CERT_PMF_DIM {
            self.materialize_pmf().ok().map(|p| {
                p.into_iter()
                    .enumerate()
                    .map(|(mask, probability)| PmfEntry { state: state_string(mask, d), probability })
                    .collect()
            })
        } else {
            None
        };
        Certificate { admissible, d, pi: self.pi.clone(), theta_interval, weights, pmf, violations }
    }

    /// True iff the law is invariant under flipping every index.
    pub fn palindromic_check(&self) -> Result<bool> {
        if !is_half(&self.pi) {
            return Err(Error::MarginsNotHalf);
        }
        if let Some((_, w)) = self.exchangeable_form() {
            let d = self.d;
            return Ok((0..=d).all(|j| (w[j] - w[d - j]).abs() <= PMF_TOL));
        }
        Ok(match &self.law {
            BernoulliLaw::FullPmf(p) => {
                let full = p.len() - 1;
                (0..p.len()).all(|mask| (p[mask] - p[full ^ mask]).abs() <= PMF_TOL)
            }
            _ => true,
        })
    }

    /// Prepared sampler for index states; fails unless the law is admissible.
    pub fn index_sampler(&self) -> Result<IndexSampler> {
        let cert = self.admissibility_check();
        if !cert.admissible {
            let what: Vec<String> = cert.violations.iter().map(|v| format!("{} = {}", v.entry, v.value)).collect();
            return Err(Error::NotAdmissible(what.join(", ")));
        }
        if let Some((_, w)) = self.exchangeable_form() {
            return Ok(IndexSampler::Exchangeable { d: self.d, cdf: cumulative(w.iter().map(|&x| clamp_dust(x))) });
        }
        Ok(match &self.law {
            BernoulliLaw::Named(NamedCoupling::Independent) => IndexSampler::Independent { pi: self.pi.clone() },
            BernoulliLaw::Named(NamedCoupling::Comonotone) => IndexSampler::Comonotone { pi: self.pi.clone() },
            _ => IndexSampler::Table { cdf: cumulative(self.materialize_pmf()?.into_iter()) },
        })
    }

    /// `n` i.i.d. index states drawn with the index stream of `seed`.
    pub fn sample_indices(&self, n: usize, seed: u64) -> Result<Vec<Vec<bool>>> {
        let sampler = self.index_sampler()?;
        let mut rng = crate::sampler::index_stream(seed);
        Ok((0..n)
            .map(|row| {
                crate::sampler::seek_index_row(&mut rng, row);
                let mut state = vec![false; self.d];
                sampler.draw(&mut rng, &mut state);
                state
            })
            .collect())
    }
}

fn z_values(pi: f64) -> [f64; 2] {
    [-1.0, (1.0 - pi) / pi]
}

fn extremes(d: usize, pi: f64) -> Vec<f64> {
    let mut w = vec![0.0; d + 1];
    w[0] = 1.0 - pi;
    w[d] = pi;
    w
}

fn binomial_count(n: usize, k: usize) -> f64 {
    binomial_exact(n, k).unwrap_or_else(|| ln_binomial(n as u64, k as u64).exp())
}

fn recovered_margins(pmf: &[f64], d: usize) -> Vec<f64> {
    (0..d)
        .map(|m| pmf.iter().enumerate().filter(|(mask, _)| mask >> m & 1 == 1).map(|(_, &p)| p).sum())
        .collect()
}

fn cumulative<I: Iterator<Item = f64>>(p: I) -> Vec<f64> {
    let mut acc = 0.0;
    p.map(|x| {
        acc += x;
        acc
    })
    .collect()
}

/// Draws index states; built by [`BernoulliSpec::index_sampler`].
#[derive(Debug, Clone)]
pub enum IndexSampler {
    Table { cdf: Vec<f64> },
    Exchangeable { d: usize, cdf: Vec<f64> },
    Independent { pi: Vec<f64> },
    Comonotone { pi: Vec<f64> },
}

fn pick(cdf: &[f64], u: f64) -> usize {
    let target = u * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

impl IndexSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [bool]) {
        match self {
            IndexSampler::Table { cdf } => {
                let mask = pick(cdf, rng.gen::<f64>());
                for (m, bit) in out.iter_mut().enumerate() {
                    *bit = mask >> m & 1 == 1;
                }
            }
            IndexSampler::Exchangeable { d, cdf } => {
                let j = pick(cdf, rng.gen::<f64>());
                let (minority, fill) = if 2 * j <= *d { (j, false) } else { (d - j, true) };
                out.fill(fill);
                for m in index::sample(rng, *d, minority) {
                    out[m] = !fill;
                }
            }
            IndexSampler::Independent { pi } => {
                for (bit, &p) in out.iter_mut().zip(pi) {
                    *bit = rng.gen::<f64>() < p;
                }
            }
            IndexSampler::Comonotone { pi } => {
                let v = rng.gen::<f64>();
                for (bit, &p) in out.iter_mut().zip(pi) {
                    *bit = v < p;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn theta_ranges() {
        assert_eq!(theta_range_bivariate(0.5, 0.5), Interval::new(-1.0, 1.0));
        let iv = theta_range_bivariate(2.0 / 3.0, 2.0 / 3.0);
        assert_abs_diff_eq!(iv.lo, -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(iv.hi, 0.5, epsilon = 1e-15);
        assert!(theta_range_bivariate(1.0 - 1e-9, 0.3).hi < 1e-8);
    }

    #[test]
    fn named_moments() {
        let ind = BernoulliSpec::independent(vec![0.3, 0.6, 0.5]).unwrap();
        assert_eq!(ind.mixed_moment(&[0, 2]).unwrap(), 0.0);

        for &p in &[0.2, 0.5, 0.9] {
            let com = BernoulliSpec::comonotone(vec![p; 3]).unwrap();
            assert_abs_diff_eq!(com.mixed_moment(&[0, 1]).unwrap(), (1.0 - p) / p, epsilon = 1e-14);
        }

        let end = BernoulliSpec::exchangeable_sum(vec![0.0, 0.5, 0.5, 0.0], Some(0.5)).unwrap();
        assert_abs_diff_eq!(end.mixed_moment(&[0, 1]).unwrap(), -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(end.mixed_moment(&[0, 1, 2]).unwrap(), 0.0, epsilon = 1e-15);
        let named_end = BernoulliSpec::named(NamedCoupling::End, vec![0.5; 3]).unwrap();
        assert_eq!(named_end.theta_table().unwrap(), end.theta_table().unwrap());

        let epd = BernoulliSpec::named(NamedCoupling::Epd, vec![0.5; 3]).unwrap();
        assert_abs_diff_eq!(epd.mixed_moment(&[1, 2]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(epd.mixed_moment(&[0, 1, 2]).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn end_matches_eight_state_enumeration() {
        let w = [0.0, 0.5, 0.5, 0.0];
        let pmf: Vec<f64> = (0..8usize).map(|m| w[m.count_ones() as usize] / [1.0, 3.0, 3.0, 1.0][m.count_ones() as usize]).collect();
        let full = BernoulliSpec::full_pmf(pmf, None).unwrap();
        assert_abs_diff_eq!(full.mixed_moment(&[0, 2]).unwrap(), -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(full.mixed_moment(&[0, 1, 2]).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn theta_table_matches_enumeration() {
        let pmf = vec![0.1, 0.05, 0.2, 0.15, 0.1, 0.1, 0.05, 0.25];
        let spec = BernoulliSpec::full_pmf(pmf, None).unwrap();
        let table = spec.theta_table().unwrap();
        for (mask, &t) in table.iter().enumerate() {
            if mask.count_ones() >= 2 {
                let s: Vec<usize> = (0..3).filter(|m| mask >> m & 1 == 1).collect();
                assert_abs_diff_eq!(t, spec.mixed_moment(&s).unwrap(), epsilon = 1e-14);
            }
        }
        let com = BernoulliSpec::comonotone(vec![0.2, 0.7, 0.4]).unwrap();
        let table = com.theta_table().unwrap();
        assert_abs_diff_eq!(table[0b111], com.mixed_moment(&[0, 1, 2]).unwrap(), epsilon = 1e-13);
        assert_abs_diff_eq!(table[0b101], com.mixed_moment(&[0, 2]).unwrap(), epsilon = 1e-13);
    }

    #[test]
    fn subset_errors() {
        let spec = BernoulliSpec::independent(vec![0.5; 3]).unwrap();
        assert_eq!(spec.mixed_moment(&[1]), Err(Error::SubsetTooSmall { d: 3 }));
        assert_eq!(spec.mixed_moment(&[1, 1]), Err(Error::SubsetTooSmall { d: 3 }));
        assert_eq!(spec.mixed_moment(&[0, 3]), Err(Error::SubsetTooSmall { d: 3 }));
        let big = BernoulliSpec::full_pmf(vec![0.0; 1 << 21], None);
        assert_eq!(big, Err(Error::DimensionTooLarge { d: 21, max: MAX_ENUM_DIM }));
    }

    #[test]
    fn admissibility_examples() {
        let cert = BernoulliSpec::bivariate_theta(0.5, 0.5, 1.2).unwrap().admissibility_check();
        assert!(!cert.admissible);
        let bad: Vec<&str> = cert.violations.iter().map(|v| v.entry.as_str()).collect();
        assert_eq!(bad, ["10", "01"]);
        assert_abs_diff_eq!(cert.violations[0].value, -0.05, epsilon = 1e-15);

        let epd4 = BernoulliSpec::exchangeable_sum(vec![0.5, 0.0, 0.0, 0.0, 0.5], None).unwrap();
        let cert = epd4.admissibility_check();
        assert!(cert.admissible);
        assert_eq!(cert.pmf.as_ref().unwrap().len(), 16);
        assert!(epd4.palindromic_check().unwrap());

        let neg = BernoulliSpec::full_pmf(vec![0.26, 0.25, 0.5, -0.01], None).unwrap();
        assert!(!neg.admissibility_check().admissible);

        let dust = BernoulliSpec::full_pmf(vec![0.25, 0.25 + 5e-13, 0.25, 0.25 - 5e-13], None).unwrap();
        assert!(dust.admissibility_check().admissible);
    }

    #[test]
    fn exchangeable_mean_constraint() {
        let spec = BernoulliSpec::exchangeable_sum(vec![1.0, 0.0, 0.0, 0.0], Some(0.5)).unwrap();
        let cert = spec.admissibility_check();
        assert!(!cert.admissible);
        assert_eq!(cert.violations[0].entry, "mean");
        assert!(!spec.palindromic_check().unwrap());
    }

    #[test]
    fn palindromic_examples() {
        let epd = BernoulliSpec::exchangeable_sum(vec![0.5, 0.0, 0.0, 0.5], None).unwrap();
        assert!(epd.palindromic_check().unwrap());
        for d in [2, 5, 9] {
            assert!(BernoulliSpec::independent(vec![0.5; d]).unwrap().palindromic_check().unwrap());
        }
        let skew = BernoulliSpec::independent(vec![0.4, 0.5]).unwrap();
        assert_eq!(skew.palindromic_check(), Err(Error::MarginsNotHalf));
    }

    #[test]
    fn odd_moments_vanish_for_palindromic_laws() {
        for d in [3, 5, 7, 12] {
            let epd = BernoulliSpec::named(NamedCoupling::Epd, vec![0.5; d]).unwrap();
            for k in (3..=d).step_by(2) {
                let s: Vec<usize> = (0..k).collect();
                assert!(epd.mixed_moment(&s).unwrap().abs() < 1e-14);
            }
        }
        let mut w = vec![0.1, 0.15, 0.25, 0.25, 0.15, 0.1];
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let pal = BernoulliSpec::exchangeable_sum(w, None).unwrap();
        assert!(pal.mixed_moment(&[0, 2, 4]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn large_exchangeable_moments() {
        let d = 10_000;
        let spec = BernoulliSpec::named(NamedCoupling::Epd, vec![0.5; d]).unwrap();
        assert_abs_diff_eq!(spec.mixed_moment(&[3, 9999]).unwrap(), 1.0, epsilon = 1e-12);
        let binom: Vec<f64> = (0..=60).map(|j| binomial_count(60, j) / 2f64.powi(60)).collect();
        let ind = BernoulliSpec::exchangeable_sum(binom, None).unwrap();
        assert_abs_diff_eq!(ind.mixed_moment(&[0, 1]).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sampling_examples() {
        let com = BernoulliSpec::comonotone(vec![0.3, 0.5, 0.8]).unwrap();
        let sampler = com.index_sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = [false; 3];
        for _ in 0..1000 {
            sampler.draw(&mut rng, &mut s);
            // comonotone states are nested: a lower threshold implies a higher one
            assert!(!s[0] || s[1]);
            assert!(!s[1] || s[2]);
        }

        let eq = BernoulliSpec::named(NamedCoupling::Comonotone, vec![0.5; 4]).unwrap();
        for st in eq.sample_indices(500, 3).unwrap() {
            assert!(st.iter().all(|&b| b == st[0]));
        }

        let diag = BernoulliSpec::bivariate_theta(0.5, 0.5, 1.0).unwrap();
        for st in diag.sample_indices(2000, 11).unwrap() {
            assert_eq!(st[0], st[1]);
        }

        let bad = BernoulliSpec::bivariate_theta(0.5, 0.5, 1.5).unwrap();
        assert!(matches!(bad.sample_indices(10, 0), Err(Error::NotAdmissible(_))));
    }

    #[test]
    fn independent_marginal_frequencies() {
        let n = 1_000_000;
        let spec = BernoulliSpec::independent(vec![0.5; 3]).unwrap();
        let draws = spec.sample_indices(n, 2024).unwrap();
        for m in 0..3 {
            let freq = draws.iter().filter(|s| s[m]).count() as f64 / n as f64;
            assert!((freq - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
        }
    }

    #[test]
    fn sampled_moments_match() {
        let n = 1_000_000;
        let pmf = vec![0.2, 0.05, 0.1, 0.15, 0.05, 0.15, 0.1, 0.2];
        let spec = BernoulliSpec::full_pmf(pmf, None).unwrap();
        let draws = spec.sample_indices(n, 99).unwrap();
        for s in [vec![0, 1], vec![1, 2], vec![0, 1, 2]] {
            let z: Vec<f64> = draws
                .iter()
                .map(|st| s.iter().map(|&m| z_values(spec.pi()[m])[st[m] as usize]).product())
                .collect();
            let mean = z.iter().sum::<f64>() / n as f64;
            let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let exact = spec.mixed_moment(&s).unwrap();
            assert!((mean - exact).abs() < 4.0 * (var / n as f64).sqrt(), "S = {s:?}: {mean} vs {exact}");
        }
    }

    #[test]
    fn comonotone_maximizes_theta() {
        let (p1, p2) = (0.4, 0.7);
        let best = BernoulliSpec::comonotone(vec![p1, p2]).unwrap().mixed_moment(&[0, 1]).unwrap();
        // the bivariate law with these margins is determined by P(1,1)
        let steps = 400;
        let mut max_seen = f64::NEG_INFINITY;
        for i in 0..=steps {
            let p11 = i as f64 / steps as f64;
            let pmf = vec![1.0 - p1 - p2 + p11, p1 - p11, p2 - p11, p11];
            let spec = BernoulliSpec::full_pmf(pmf, Some(vec![p1, p2])).unwrap();
            if spec.admissibility_check().admissible {
                max_seen = max_seen.max(spec.mixed_moment(&[0, 1]).unwrap());
            }
        }
        assert!(max_seen <= best + 1e-12);
        assert_abs_diff_eq!(max_seen, best, epsilon = 1e-12);
    }
}
