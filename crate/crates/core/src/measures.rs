//! Dependence measures: closed forms from kernel areas and Bernoulli
//! moments, and rank-based estimates with asymptotic standard errors.

use serde::Serialize;

use crate::bernoulli::MAX_ENUM_DIM;
use crate::copula::SarmanovCopula;
use crate::error::{Error, Result};
use crate::numeric::Interval;
use crate::sampler::SampleBatch;

/// Smallest batch accepted by [`empirical_measures`].
pub const MIN_BATCH: usize = 1000;

fn bivariate_only(c: &SarmanovCopula) -> Result<()> {
    if c.d() != 2 {
        return Err(Error::InvalidSpec(format!("operation needs d = 2, got d = {}", c.d())));
    }
    Ok(())
}

/// `rho_S = 12 a G1 G2`, with `G_k` the kernel areas.
pub fn spearman_analytic(c: &SarmanovCopula) -> Result<f64> {
    bivariate_only(c)?;
    let [m1, m2] = [&c.margins()[0], &c.margins()[1]];
    Ok(12.0 * c.theta(0b11) * m1.kappa() * m2.kappa())
}

/// `tau = 2 rho_S / 3`.
pub fn kendall_analytic(c: &SarmanovCopula) -> Result<f64> {
    Ok(2.0 * spearman_analytic(c)? / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalBounds {
    pub interval: Interval,
    pub attained_by: &'static str,
}

/// Sharp bounds on Spearman's rho over the whole family.
pub fn rho_global_bounds() -> GlobalBounds {
    GlobalBounds {
        interval: Interval::new(-0.75, 0.75),
        attained_by: "checkerboard kernels g(u) = min(u, 1 - u) with theta = -1 or theta = 1",
    }
}

/// `c_d = (d + 1) / (2^d - d - 1)`.
fn orthant_constant(d: usize) -> f64 {
    let two_d = 2f64.powi(d as i32);
    (d as f64 + 1.0) / (two_d - d as f64 - 1.0)
}

/// Average lower- and upper-orthant Spearman rho, `(rho_minus, rho_plus)`.
pub fn orthant_rho(c: &SarmanovCopula) -> Result<(f64, f64)> {
    let d = c.d();
    if d > MAX_ENUM_DIM {
        return Err(Error::DimensionTooLarge { d, max: MAX_ENUM_DIM });
    }
    let kappa: Vec<f64> = c.margins().iter().map(|p| p.kappa()).collect();
    let n = 1usize << d;
    let mut kappa_s = vec![1.0; n];
    let (mut minus, mut plus) = (0.0, 0.0);
    for mask in 1..n {
        let low = mask.trailing_zeros() as usize;
        kappa_s[mask] = kappa_s[mask & (mask - 1)] * kappa[low];
        let size = mask.count_ones() as i32;
        if size < 2 {
            continue;
        }
        let theta = c.theta(mask);
        if theta == 0.0 {
            continue;
        }
        let term = 2f64.powi(size) * theta * kappa_s[mask];
        minus += term;
        plus += if size % 2 == 0 { term } else { -term };
    }
    let cd = orthant_constant(d);
    Ok((cd * minus, cd * plus))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    /// `K` in the envelope `C(u, u) / u <= K u`, `K = 1 + |a| L1 L2`.
    pub envelope_slope: f64,
}

impl TailReport {
    pub fn envelope(&self, u: f64) -> f64 {
        self.envelope_slope * u
    }
}

/// Tail dependence coefficients (always zero) with the certified envelope.
pub fn tail_dependence(c: &SarmanovCopula) -> Result<TailReport> {
    bivariate_only(c)?;
    let l: Vec<f64> = c.margins().iter().map(|p| p.lipschitz()).collect();
    Ok(TailReport { lambda_lower: 0.0, lambda_upper: 0.0, envelope_slope: 1.0 + c.a()?.abs() * l[0] * l[1] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `(value - target) / se`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target) / self.se
    }

    pub fn within(&self, target: f64, k_se: f64) -> bool {
        (self.value - target).abs() <= k_se * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasures {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// First two coordinates.
    pub spearman: Estimate,
    /// First two coordinates.
    pub kendall: Estimate,
    pub rho_plus: Estimate,
    pub rho_minus: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticMeasures {
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    pub rho_plus: Option<f64>,
    pub rho_minus: Option<f64>,
    pub lambda_lower: Option<f64>,
    pub lambda_upper: Option<f64>,
}

impl AnalyticMeasures {
    pub fn of(c: &SarmanovCopula) -> Self {
        let orthant = orthant_rho(c).ok();
        let tail = tail_dependence(c).ok();
        Self {
            spearman: spearman_analytic(c).ok(),
            kendall: kendall_analytic(c).ok(),
            rho_minus: orthant.map(|o| o.0),
            rho_plus: orthant.map(|o| o.1),
            lambda_lower: tail.as_ref().map(|t| t.lambda_lower),
            lambda_upper: tail.as_ref().map(|t| t.lambda_upper),
        }
    }

    pub fn none() -> Self {
        Self { spearman: None, kendall: None, rho_plus: None, rho_minus: None, lambda_lower: None, lambda_upper: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureReport {
    pub analytic: AnalyticMeasures,
    pub empirical: EmpiricalMeasures,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Ranks `0..n` of `xs`, ties broken by position.
fn ranks(xs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let mut r = vec![0; xs.len()];
    for (rank, &i) in order.iter().enumerate() {
        r[i] = rank;
    }
    r
}

/// Rank Spearman with an influence-function standard error.
fn spearman_estimate(ru: &[usize], rv: &[usize]) -> Estimate {
    let n = ru.len();
    let nf = n as f64;
    let scale = |r: usize| (r as f64 + 1.0) / (nf + 1.0);
    let u: Vec<f64> = ru.iter().map(|&r| scale(r)).collect();
    let v: Vec<f64> = rv.iter().map(|&r| scale(r)).collect();
    let mean_rank = (nf + 1.0) / 2.0;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        let (a, b) = (ru[i] as f64 + 1.0 - mean_rank, rv[i] as f64 + 1.0 - mean_rank);
        num += a * b;
        den += a * a;
    }
    let rho = num / den;
    // psi_i = u_i v_i + E[V 1{U >= u_i}] + E[U 1{V >= v_i}]
    let tail_sum = |by: &[usize], other: &[f64]| {
        let mut by_rank = vec![0.0; n];
        for i in 0..n {
            by_rank[by[i]] = other[i];
        }
        let mut suffix = vec![0.0; n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1] + by_rank[k];
        }
        (0..n).map(|i| suffix[by[i]] / nf).collect::<Vec<f64>>()
    };
    let a = tail_sum(ru, &v);
    let b = tail_sum(rv, &u);
    let psi: Vec<f64> = (0..n).map(|i| u[i] * v[i] + a[i] + b[i]).collect();
    let (_, sd) = mean_sd(&psi);
    Estimate { value: rho, se: 12.0 * sd / nf.sqrt() }
}

/// Kendall's tau from per-point concordance counts, `O(n log n)` with a
/// Fenwick tree; the standard error is the U-statistic projection variance.
fn kendall_estimate(ru: &[usize], rv: &[usize]) -> Estimate {
    let n = ru.len();
    let mut by_u = vec![0; n];
    for i in 0..n {
        by_u[ru[i]] = i;
    }
    let mut tree = vec![0u64; n + 1];
    let mut h = vec![0.0; n];
    for (pos, &i) in by_u.iter().enumerate() {
        let r = rv[i];
        let mut less_before = 0u64;
        let mut k = r;
        while k > 0 {
            less_before += tree[k];
            k &= k - 1;
        }
        let mut k = r + 1;
        while k <= n {
            tree[k] += 1;
            k += k & k.wrapping_neg();
        }
        let less_before = less_before as f64;
        let greater_before = pos as f64 - less_before;
        let less_after = r as f64 - less_before;
        let greater_after = (n - 1 - r) as f64 - greater_before;
        let concordant = less_before + greater_after;
        let discordant = greater_before + less_after;
        h[i] = (concordant - discordant) / (n as f64 - 1.0);
    }
    let (tau, sd) = mean_sd(&h);
    Estimate { value: tau, se: 2.0 * sd / (n as f64).sqrt() }
}

/// Plug-in orthant estimate `c_d (2^d mean(prod x) - 1)`.
fn orthant_estimate(batch: &SampleBatch, flip: bool) -> Estimate {
    let cd = orthant_constant(batch.d) * 2f64.powi(batch.d as i32);
    let prods: Vec<f64> = (0..batch.n)
        .map(|i| batch.row(i).iter().map(|&x| if flip { 1.0 - x } else { x }).product())
        .collect();
    let (mean, sd) = mean_sd(&prods);
    Estimate {
        value: cd * mean - orthant_constant(batch.d),
        se: cd * sd / (batch.n as f64).sqrt(),
    }
}

/// Rank Spearman and Kendall on the first two coordinates, plus orthant
/// estimates. The lower-orthant estimate uses `int C = E[prod (1 - U_m)]`.
pub fn empirical_measures(batch: &SampleBatch) -> Result<EmpiricalMeasures> {
    if batch.n < MIN_BATCH {
        return Err(Error::BatchTooSmall { n: batch.n, min: MIN_BATCH });
    }
    let ru = ranks(&batch.column(0));
    let rv = ranks(&batch.column(1));
    Ok(EmpiricalMeasures {
        n: batch.n,
        d: batch.d,
        seed: batch.seed,
        spearman: spearman_estimate(&ru, &rv),
        kendall: kendall_estimate(&ru, &rv),
        rho_plus: orthant_estimate(batch, false),
        rho_minus: orthant_estimate(batch, true),
    })
}

pub fn measure_report(c: &SarmanovCopula, batch: &SampleBatch) -> Result<MeasureReport> {
    Ok(MeasureReport { analytic: AnalyticMeasures::of(c), empirical: empirical_measures(batch)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernoulli::{BernoulliSpec, NamedCoupling};
    use crate::kernel::{catalog_default, catalog_lookup};
    use crate::sampler::sample;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn fgm_copula(a: f64) -> SarmanovCopula {
        let fgm = catalog_default("fgm").unwrap();
        SarmanovCopula::bivariate(&fgm, &fgm, a).unwrap()
    }

    #[test]
    fn closed_forms() {
        let c = fgm_copula(1.0);
        assert_abs_diff_eq!(spearman_analytic(&c).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kendall_analytic(&c).unwrap(), 2.0 / 9.0, epsilon = 1e-15);
        assert_eq!(kendall_analytic(&fgm_copula(0.0)).unwrap(), 0.0);
        let cb = catalog_default("checkerboard").unwrap();
        let c = SarmanovCopula::bivariate(&cb, &cb, 1.0).unwrap();
        assert_eq!(spearman_analytic(&c).unwrap(), 0.75);
        assert_eq!(kendall_analytic(&c).unwrap(), 0.5);
        let leg = catalog_default("legendre2").unwrap();
        for a in [-1.0, 0.5, 2.0] {
            assert_eq!(spearman_analytic(&SarmanovCopula::bivariate(&leg, &leg, a).unwrap()).unwrap(), 0.0);
        }
        assert_eq!(rho_global_bounds().interval, Interval::new(-0.75, 0.75));
    }

    #[test]
    fn orthant_examples() {
        let fgm = catalog_default("fgm").unwrap();
        let cb = catalog_default("checkerboard").unwrap();
        let epd = BernoulliSpec::named(NamedCoupling::Epd, vec![0.5; 3]).unwrap();
        let end = BernoulliSpec::named(NamedCoupling::End, vec![0.5; 3]).unwrap();
        let cases = [(&fgm, &epd, 1.0 / 3.0), (&fgm, &end, -1.0 / 9.0), (&cb, &epd, 0.75), (&cb, &end, -0.25)];
        for (k, b, want) in cases {
            let c = SarmanovCopula::from_kernels(&vec![k.clone(); 3], b.clone()).unwrap();
            let (minus, plus) = orthant_rho(&c).unwrap();
            assert_abs_diff_eq!(minus, want, epsilon = 1e-15);
            assert_eq!(minus, plus);
        }
        let c = fgm_copula(0.7);
        let (minus, plus) = orthant_rho(&c).unwrap();
        assert_abs_diff_eq!(minus, spearman_analytic(&c).unwrap(), epsilon = 1e-15);
        assert_abs_diff_eq!(plus, spearman_analytic(&c).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn tail_envelope() {
        let c = fgm_copula(1.0);
        let t = tail_dependence(&c).unwrap();
        assert_eq!((t.lambda_lower, t.lambda_upper), (0.0, 0.0));
        assert_eq!(t.envelope_slope, 2.0);
        assert!(c.cdf(&[0.01, 0.01]).unwrap() / 0.01 <= 0.02);
    }

    #[test]
    fn spearman_bound_by_slopes() {
        for row in crate::kernel::CATALOG.iter() {
            let k = catalog_lookup(row.id, &row.params.iter().map(|(p, v)| (p.to_string(), *v)).collect::<BTreeMap<_, _>>()).unwrap();
            let iv = crate::copula::admissible_a_interval(&k, &k).unwrap();
            for a in [iv.lo, iv.hi] {
                let c = SarmanovCopula::bivariate(&k, &k, a).unwrap();
                let rho = spearman_analytic(&c).unwrap();
                let span = k.lambda_plus() + k.lambda_minus().abs();
                assert!(rho.abs() <= 3.0 * a.abs() / (span * span) + 1e-12, "{}", row.id);
            }
        }
    }

    #[test]
    fn too_small_batch() {
        let batch = sample(&fgm_copula(0.5), 999, 1).unwrap();
        assert_eq!(empirical_measures(&batch), Err(Error::BatchTooSmall { n: 999, min: MIN_BATCH }));
    }

    #[test]
    fn kendall_matches_quadratic_count() {
        let batch = sample(&fgm_copula(0.9), 1500, 3).unwrap();
        let (u, v) = (batch.column(0), batch.column(1));
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in i + 1..u.len() {
                s += ((u[i] - u[j]) * (v[i] - v[j])).signum();
            }
        }
        let n = u.len() as f64;
        let brute = 2.0 * s / (n * (n - 1.0));
        let est = empirical_measures(&batch).unwrap();
        assert_abs_diff_eq!(est.kendall.value, brute, epsilon = 1e-12);
    }

    #[test]
    fn independence_estimates_near_zero() {
        let batch = sample(&fgm_copula(0.0), 200_000, 8).unwrap();
        let e = empirical_measures(&batch).unwrap();
        for est in [e.spearman, e.kendall, e.rho_plus, e.rho_minus] {
            assert!(est.within(0.0, 4.0), "{est:?}");
        }
    }
}
