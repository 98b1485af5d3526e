//! Small numerical toolkit: adaptive Simpson quadrature, golden-section
//! refinement, bracketed root finding and the standard normal cdf/quantile.

use libm::erfc;
use statrs::function::erf::erfc_inv;

use serde::Serialize;

/// Closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Like `contains`, with slack `tol` on both ends.
    pub fn contains_tol(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn scale(&self, c: f64) -> Self {
        if c >= 0.0 {
            Self::new(self.lo * c, self.hi * c)
        } else {
            Self::new(self.hi * c, self.lo * c)
        }
    }
}

/// Absolute tolerance used for every kernel integral.
pub const QUAD_TOL: f64 = 1e-12;
/// Recursion limit for adaptive Simpson.
pub const QUAD_MAX_DEPTH: u32 = 60;

/// Panels each interval is split into before adaptive refinement starts.
/// Guards against the classic false-convergence of Simpson's rule on
/// integrands that happen to be symmetric over the whole interval.
const INITIAL_PANELS: usize = 16;

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / INITIAL_PANELS as f64;
    let panel_tol = tol / INITIAL_PANELS as f64;
    (0..INITIAL_PANELS)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = if i + 1 == INITIAL_PANELS { b } else { lo + h };
            let (flo, fmid, fhi) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            simpson_step(&f, lo, hi, flo, fmid, fhi, whole, panel_tol, QUAD_MAX_DEPTH)
        })
        .sum()
}

/// Integral over `[0, 1]`, split at the given interior breakpoints.
pub fn integrate_unit<F: Fn(f64) -> f64>(f: F, breaks: &[f64]) -> f64 {
    let mut cuts = vec![0.0];
    cuts.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < 1.0));
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let pieces = (cuts.len() - 1) as f64;
    cuts.windows(2)
        .map(|w| integrate(&f, w[0], w[1], QUAD_TOL / pieces))
        .sum()
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
/// Returns `(argmax, max)`; stops when the bracket is narrower than `tol`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // endpoints are candidates too: the extremum may sit on the bracket edge
    let mid = 0.5 * (a + b);
    [(a, f(a)), (mid, f(mid)), (b, f(b)), (c, fc), (d, fd)]
        .into_iter()
        .fold((mid, f64::NEG_INFINITY), |best, cand| {
            if cand.1 > best.1 {
                cand
            } else {
                best
            }
        })
}

/// Bisection for a root of `f` on `[lo, hi]`, assuming a sign change.
pub fn bisect_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Standard normal cdf.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile; returns `-inf`/`+inf` at 0 and 1.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        // statrs erfc_inv is good to roughly 1e-10; two Newton steps on the cdf
        // bring the result to full precision
        let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
        for _ in 0..2 {
            let density = norm_pdf(x);
            if density > 0.0 {
                x -= (norm_cdf(x) - p) / density;
            }
        }
        x
    }
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_polynomials_and_transcendentals() {
        assert_abs_diff_eq!(integrate(|x| x * x, 0.0, 1.0, 1e-13), 1.0 / 3.0, epsilon = 1e-14);
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(
            integrate(|x| (pi * x).sin(), 0.0, 1.0, 1e-13),
            2.0 / pi,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(integrate(f64::exp, 0.0, 1.0, 1e-13), std::f64::consts::E - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unit_integral_respects_breakpoints() {
        let tent = |u: f64| u.min(1.0 - u);
        assert_abs_diff_eq!(integrate_unit(tent, &[0.5]), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn golden_finds_interior_and_edge_maxima() {
        let (x, fx) = golden_max(|x| -(x - 0.3).powi(2), 0.0, 1.0, 1e-12);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(fx, 0.0, epsilon = 1e-12);
        let (x, _) = golden_max(|x| x, 0.0, 1.0, 1e-12);
        assert_abs_diff_eq!(x, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn normal_round_trip() {
        for &p in &[1e-10, 1e-4, 0.025, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            assert_abs_diff_eq!(norm_cdf(norm_quantile(p)), p, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(norm_cdf(1.959963984540054), 0.975, epsilon = 1e-14);
    }

    #[test]
    fn bisection_converges() {
        let r = bisect_root(|y: f64| y * y.tan() - 2.0, 0.0, std::f64::consts::FRAC_PI_2 - 1e-12, 1e-15);
        assert_abs_diff_eq!(r * r.tan(), 2.0, epsilon = 1e-9);
    }
}
