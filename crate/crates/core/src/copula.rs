//! Copula assembly: `C(u) = Pi(u) + sum_{|S|>=2} theta_S prod_{m not in S} u_m prod_{m in S} g_m(u_m)`
//! where `g_m` is the induced kernel of margin `m`, plus its bivariate
//! density, parameter intervals and the powered (block-maxima) family.

use std::sync::Arc;

use crate::bernoulli::{BernoulliLaw, BernoulliSpec, NamedCoupling, MAX_ENUM_DIM};
use crate::calibration::{calibrate_from_kernel, CalibratedPair};
use crate::error::{Error, Result};
use crate::kernel::{custom_kernel, DerivativeSource, Kernel, RealFn};
use crate::numeric::Interval;

/// Expansion coefficients below this magnitude are dropped.
pub const THETA_SNAP: f64 = 1e-15;
/// Margin constants of the Bernoulli law and of the pairs must agree to this.
const PI_MATCH_TOL: f64 = 1e-12;
/// Slack when testing a parameter against its admissible interval.
const INTERVAL_TOL: f64 = 1e-12;

/// Admissible `a` for `C = uv + a g1(u) g2(v)`:
/// `[-min(L1 L2, l1 l2), min(L1 |l2|, L2 |l1|)]` with `L = Lambda`, `l = lambda`.
pub fn admissible_a_interval(k1: &Kernel, k2: &Kernel) -> Result<Interval> {
    let s1 = k1.slopes().ok_or(Error::DegenerateKernel)?;
    let s2 = k2.slopes().ok_or(Error::DegenerateKernel)?;
    let (big1, small1) = (s1.lambda_plus, s1.lambda_minus);
    let (big2, small2) = (s2.lambda_plus, s2.lambda_minus);
    Ok(Interval::new(
        -(big1 * big2).min(small1 * small2),
        (big1 * small2.abs()).min(big2 * small1.abs()),
    ))
}

#[derive(Debug, Clone)]
enum Expansion {
    Independent,
    /// Snapped `theta_S` for every subset mask, `d <= MAX_ENUM_DIM`.
    Subsets(Vec<f64>),
    /// Exchangeable law in high dimension, evaluated through its mixture form.
    Exchangeable { w: Vec<f64>, theta: Vec<f64> },
    /// Comonotone law with distinct margins in high dimension.
    Comonotone,
}

/// A d-variate Sarmanov copula: calibrated margins plus a Bernoulli law.
#[derive(Debug, Clone)]
pub struct SarmanovCopula {
    margins: Vec<CalibratedPair>,
    bern: BernoulliSpec,
    expansion: Expansion,
}

fn snap(t: f64) -> f64 {
    if t.abs() < THETA_SNAP {
        0.0
    } else {
        t
    }
}

impl SarmanovCopula {
    /// Assembles a copula; the Bernoulli law must be admissible and its
    /// margins must equal the pairs' constants.
    pub fn new(margins: Vec<CalibratedPair>, bern: BernoulliSpec) -> Result<Self> {
        let d = bern.d();
        if margins.len() != d {
            return Err(Error::InvalidSpec(format!("{} margins for a {d}-variate Bernoulli law", margins.len())));
        }
        for (m, (pair, &p)) in margins.iter().zip(bern.pi()).enumerate() {
            if (pair.pi() - p).abs() > PI_MATCH_TOL {
                return Err(Error::InvalidSpec(format!(
                    "margin {} has pi = {} but the Bernoulli law declares {p}",
                    m + 1,
                    pair.pi()
                )));
            }
        }
        let cert = bern.admissibility_check();
        if !cert.admissible {
            let what: Vec<String> = cert.violations.iter().map(|v| format!("{} = {}", v.entry, v.value)).collect();
            return Err(Error::NotAdmissible(what.join(", ")));
        }
        let expansion = if bern.is_independent() {
            Expansion::Independent
        } else if d <= MAX_ENUM_DIM {
            Expansion::Subsets(bern.theta_table()?.into_iter().map(snap).collect())
        } else if let Some((pi, w)) = bern.exchangeable_form() {
            let theta = (0..=d)
                .map(|k| if k < 2 { 0.0 } else { snap(crate::bernoulli::exchangeable_theta(pi, &w, k)) })
                .collect();
            Expansion::Exchangeable { w: w.into_owned(), theta }
        } else if matches!(bern.law(), BernoulliLaw::Named(NamedCoupling::Comonotone)) {
            Expansion::Comonotone
        } else {
            return Err(Error::DimensionTooLarge { d, max: MAX_ENUM_DIM });
        };
        Ok(Self { margins, bern, expansion })
    }

    /// Copula built from kernels, calibrating each margin.
    pub fn from_kernels(kernels: &[Kernel], bern: BernoulliSpec) -> Result<Self> {
        let margins = kernels.iter().map(calibrate_from_kernel).collect::<Result<Vec<_>>>()?;
        Self::new(margins, bern)
    }

    /// `C(u, v) = uv + a g1(u) g2(v)`; fails outside [`admissible_a_interval`].
    pub fn bivariate(k1: &Kernel, k2: &Kernel, a: f64) -> Result<Self> {
        let iv = admissible_a_interval(k1, k2)?;
        if !iv.contains_tol(a, INTERVAL_TOL) {
            return Err(Error::NotAdmissible(format!("a = {a} lies outside [{}, {}]", iv.lo, iv.hi)));
        }
        let theta = a / (k1.lambda_plus() * k2.lambda_plus());
        Self::bivariate_theta(k1, k2, theta)
    }

    /// Bivariate copula parametrized by the Bernoulli `theta`.
    pub fn bivariate_theta(k1: &Kernel, k2: &Kernel, theta: f64) -> Result<Self> {
        let p1 = calibrate_from_kernel(k1)?;
        let p2 = calibrate_from_kernel(k2)?;
        let bern = BernoulliSpec::bivariate_theta(p1.pi(), p2.pi(), theta)?;
        Self::new(vec![p1, p2], bern)
    }

    pub fn d(&self) -> usize {
        self.margins.len()
    }

    pub fn margins(&self) -> &[CalibratedPair] {
        &self.margins
    }

    pub fn bern(&self) -> &BernoulliSpec {
        &self.bern
    }

    /// Snapped `theta_S` by subset mask, when the full table is held.
    pub fn theta_table(&self) -> Option<&[f64]> {
        match &self.expansion {
            Expansion::Subsets(t) => Some(t),
            _ => None,
        }
    }

    /// Snapped `theta_S` for a subset mask (`d <= MAX_ENUM_DIM`).
    pub fn theta(&self, mask: usize) -> f64 {
        match &self.expansion {
            Expansion::Independent => 0.0,
            Expansion::Subsets(t) => t[mask],
            Expansion::Exchangeable { theta, .. } => theta[mask.count_ones() as usize],
            Expansion::Comonotone => {
                let s: Vec<usize> = (0..self.d()).filter(|m| mask >> m & 1 == 1).collect();
                self.bern.mixed_moment(&s).map(snap).unwrap_or(0.0)
            }
        }
    }

    /// Bivariate scalar `a = Lambda_1 Lambda_2 theta` relative to the source kernels.
    pub fn a(&self) -> Result<f64> {
        self.require_bivariate()?;
        Ok(self.theta(0b11) * self.margins[0].kernel_scale() * self.margins[1].kernel_scale())
    }

    fn require_bivariate(&self) -> Result<()> {
        if self.d() != 2 {
            return Err(Error::InvalidSpec(format!("operation needs d = 2, got d = {}", self.d())));
        }
        Ok(())
    }

    /// Copula cdf; coordinates are clamped to `[0, 1]`.
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        let d = self.d();
        if u.len() != d {
            return Err(Error::InvalidSpec(format!("point has {} coordinates, copula has {d}", u.len())));
        }
        let u: Vec<f64> = u.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        let value = match &self.expansion {
            Expansion::Independent => u.iter().product(),
            Expansion::Subsets(theta) => {
                // terms[mask] = prod_{m in mask} g_m(u_m) * prod_{m not in mask} u_m
                let mut terms = vec![1.0];
                for (m, &x) in u.iter().enumerate() {
                    let g = self.margins[m].g(x);
                    let mut next = vec![0.0; terms.len() * 2];
                    let (lo, hi) = next.split_at_mut(terms.len());
                    for (i, &t) in terms.iter().enumerate() {
                        lo[i] = t * x;
                        hi[i] = t * g;
                    }
                    terms = next;
                }
                terms[0]
                    + theta
                        .iter()
                        .zip(&terms)
                        .filter(|(&t, _)| t != 0.0)
                        .map(|(t, p)| t * p)
                        .sum::<f64>()
            }
            Expansion::Exchangeable { w, .. } => self.exchangeable_mixture_cdf(w, &u),
            Expansion::Comonotone => self.comonotone_mixture_cdf(&u),
        };
        Ok(value.clamp(0.0, 1.0))
    }

    /// `sum_j w_j E[prod F]` over uniform subsets of size `j` taking `F1`.
    fn exchangeable_mixture_cdf(&self, w: &[f64], u: &[f64]) -> f64 {
        let d = u.len();
        let mut f = vec![0.0; d + 1];
        f[0] = 1.0;
        for (i, &x) in u.iter().enumerate() {
            let n = (i + 1) as f64;
            let (a, b) = (self.margins[i].f0(x), self.margins[i].f1(x));
            for j in (0..=i + 1).rev() {
                let take = if j > 0 { j as f64 / n * b * f[j - 1] } else { 0.0 };
                let skip = (n - j as f64) / n * a * f[j];
                f[j] = take + skip;
            }
        }
        w.iter().zip(&f).map(|(wj, fj)| wj * fj).sum()
    }

    /// `int_0^1 prod_m F_{m, 1{v < pi_m}}(u_m) dv`.
    fn comonotone_mixture_cdf(&self, u: &[f64]) -> f64 {
        let d = u.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| self.margins[a].pi().total_cmp(&self.margins[b].pi()));
        let f0: Vec<f64> = order.iter().map(|&m| self.margins[m].f0(u[m])).collect();
        let f1: Vec<f64> = order.iter().map(|&m| self.margins[m].f1(u[m])).collect();
        let mut suffix_one = vec![1.0; d + 1];
        for i in (0..d).rev() {
            suffix_one[i] = suffix_one[i + 1] * f1[i];
        }
        let mut total = 0.0;
        let mut prefix_zero = 1.0;
        let mut prev = 0.0;
        for i in 0..=d {
            let right = if i < d { self.margins[order[i]].pi() } else { 1.0 };
            total += (right - prev) * prefix_zero * suffix_one[i];
            prev = right;
            if i < d {
                prefix_zero *= f0[i];
            }
        }
        total
    }

    /// `E[prod_m F_{m, I_m}(u_m)]` by enumerating the Bernoulli states.
    pub fn mixture_cdf(&self, u: &[f64]) -> Result<f64> {
        let pmf = self.bern.materialize_pmf()?;
        Ok(pmf
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(mask, &p)| {
                let prod: f64 = self
                    .margins
                    .iter()
                    .zip(u)
                    .enumerate()
                    .map(|(m, (pair, &x))| if mask >> m & 1 == 1 { pair.f1(x) } else { pair.f0(x) })
                    .product();
                p * prod
            })
            .sum())
    }

    /// The trivariate five-term form
    /// `u1u2u3 + t12 g1g2 u3 + t13 g1g3 u2 + t23 g2g3 u1 + t123 g1g2g3`.
    pub fn trivariate_cdf(&self, u: [f64; 3]) -> Result<f64> {
        if self.d() != 3 {
            return Err(Error::InvalidSpec(format!("operation needs d = 3, got d = {}", self.d())));
        }
        let u = u.map(|x| x.clamp(0.0, 1.0));
        let g: Vec<f64> = (0..3).map(|m| self.margins[m].g(u[m])).collect();
        Ok(u[0] * u[1] * u[2]
            + self.theta(0b011) * g[0] * g[1] * u[2]
            + self.theta(0b101) * g[0] * g[2] * u[1]
            + self.theta(0b110) * g[1] * g[2] * u[0]
            + self.theta(0b111) * g[0] * g[1] * g[2])
    }

    /// `c(u1, u2) = 1 + a phi1(u1) phi2(u2)`.
    pub fn density_bivariate(&self, u1: f64, u2: f64) -> Result<f64> {
        self.require_bivariate()?;
        let mut phis = [0.0; 2];
        for (m, x) in [u1, u2].into_iter().enumerate() {
            let k = self.margins[m].kernel().ok_or(Error::NoDerivative)?;
            if k.derivative_source() == DerivativeSource::Tabulated {
                return Err(Error::NoDerivative);
            }
            phis[m] = k.phi(x);
        }
        Ok(1.0 + self.a()? * phis[0] * phis[1])
    }
}

/// A kernel written as `g(u) = u h(u)`.
#[derive(Clone)]
pub struct NormalizedKernel {
    h: RealFn,
    h0: f64,
}

impl std::fmt::Debug for NormalizedKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NormalizedKernel").field("h0", &self.h0).finish()
    }
}

impl NormalizedKernel {
    /// Wraps `h`, taking `h(0)` as the limit at the origin when it exists.
    pub fn new(h: RealFn) -> Result<Self> {
        let probes: Vec<f64> = (4..=12).map(|k| h(10f64.powi(-k))).collect();
        let last = probes[probes.len() - 1];
        if probes.iter().any(|v| !v.is_finite()) || last.abs() > 1e8 {
            return Err(Error::UnboundedAtOrigin);
        }
        let earlier = probes[probes.len() - 5];
        if last.abs() > 1e3 && last.abs() > 10.0 * earlier.abs() {
            return Err(Error::UnboundedAtOrigin);
        }
        let at_zero = h(0.0);
        let h0 = if at_zero.is_finite() { at_zero } else { last };
        Ok(Self { h, h0 })
    }

    /// Normalized form of a kernel: `h = g / u`, `h(0) = phi(0)`.
    pub fn from_kernel(k: &Kernel) -> Self {
        let h0 = k.phi(0.0);
        let k = k.clone();
        Self { h: Arc::new(move |u| if u > 0.0 { k.g(u) / u } else { h0 }), h0 }
    }

    pub fn h(&self, u: f64) -> f64 {
        if u <= 0.0 {
            self.h0
        } else {
            (self.h)(u.min(1.0))
        }
    }
}

/// Farlie form `C = uv (1 + alpha h1(u) h2(v))` to Sarmanov form: the
/// kernel `g(u) = u h(u)` with `a = alpha`.
pub fn farlie_to_sarmanov(h: RealFn, alpha: f64) -> Result<(Kernel, f64)> {
    let nk = NormalizedKernel::new(h)?;
    let kernel = custom_kernel(Arc::new(move |u| if u <= 0.0 { 0.0 } else { u * nk.h(u) }), None)?;
    Ok((kernel, alpha))
}

/// Transformed kernel `x h(x^r)` with derivative `r phi(x^r) - (r - 1) h(x^r)`.
fn transformed_kernel(k: &Kernel, r: u32) -> Result<Kernel> {
    let nk = NormalizedKernel::from_kernel(k);
    let rf = r as f64;
    let g_nk = nk.clone();
    let g: RealFn = Arc::new(move |x: f64| if x <= 0.0 { 0.0 } else { x * g_nk.h(x.powi(r as i32)) });
    let phi: Option<RealFn> = (k.derivative_source() == DerivativeSource::Analytic).then(|| {
        let k = k.clone();
        Arc::new(move |x: f64| {
            let y = x.powi(r as i32);
            rf * k.phi(y) - (rf - 1.0) * nk.h(y)
        }) as RealFn
    });
    let breaks = k.breakpoints().iter().map(|b| b.powf(1.0 / rf)).collect();
    Ok(custom_kernel(g, phi)?.with_breakpoints(breaks))
}

/// `C_{a,r}(u1, u2) = u1 u2 (1 + a h1(u1) h2(u2))^r`, the law of
/// componentwise maxima of `r` draws from `C_a<r>(x, y) = xy (1 + a h1(x^r) h2(y^r))`,
/// raised to the power `r`.
#[derive(Debug, Clone)]
pub struct PoweredCopula {
    h: [NormalizedKernel; 2],
    a: f64,
    r: u32,
    transformed: [Kernel; 2],
    interval: Interval,
    aux: SarmanovCopula,
}

/// Powered copula from base kernels `g_m = u h_m`; `a` must lie in the
/// interval of the transformed kernels.
pub fn build_powered(k1: &Kernel, k2: &Kernel, a: f64, r: u32) -> Result<PoweredCopula> {
    if r == 0 {
        return Err(Error::InvalidSpec("power r must be a positive integer".into()));
    }
    let t1 = transformed_kernel(k1, r)?;
    let t2 = transformed_kernel(k2, r)?;
    let interval = admissible_a_interval(&t1, &t2)?;
    if !interval.contains_tol(a, INTERVAL_TOL) {
        return Err(Error::NotAdmissibleForTransformed { a, lo: interval.lo, hi: interval.hi });
    }
    let aux = SarmanovCopula::bivariate(&t1, &t2, a.clamp(interval.lo, interval.hi))?;
    Ok(PoweredCopula {
        h: [NormalizedKernel::from_kernel(k1), NormalizedKernel::from_kernel(k2)],
        a,
        r,
        transformed: [t1, t2],
        interval,
        aux,
    })
}

impl PoweredCopula {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    /// Sufficient admissible interval for `a` (from the transformed kernels).
    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn transformed(&self) -> &[Kernel; 2] {
        &self.transformed
    }

    /// The auxiliary copula `C_a<r>` whose block maxima give this copula.
    pub fn aux(&self) -> &SarmanovCopula {
        &self.aux
    }

    pub fn cdf(&self, u1: f64, u2: f64) -> f64 {
        let (u1, u2) = (u1.clamp(0.0, 1.0), u2.clamp(0.0, 1.0));
        u1 * u2 * (1.0 + self.a * self.h[0].h(u1) * self.h[1].h(u2)).powi(self.r as i32)
    }
}
