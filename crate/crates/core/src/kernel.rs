//! Sarmanov kernels: functions `g` on `[0, 1]` vanishing at both ends,
//! together with their derivative bounds and signed area.
//!
//! For a kernel with a.e. derivative `phi = g'` we store
//! `lambda_plus = 1 / ess sup phi > 0` and `lambda_minus = 1 / ess inf phi < 0`.
//! These two numbers fix the Bernoulli success probability of the margin
//! and the admissible range of the dependence parameter.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use statrs::function::beta::beta;

use crate::error::{Error, Result};
use crate::numeric::{bisect_root, golden_max, integrate_unit, norm_cdf, norm_quantile};

/// Shared real function on `[0, 1]`.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Grid size used for numeric extremization of `phi`.
pub const SLOPE_GRID: usize = 200_000;
/// Golden-section tolerance when refining a grid extremum.
pub const SLOPE_REFINE_TOL: f64 = 1e-10;
/// Boundary tolerance for user kernels.
pub const ANCHOR_TOL: f64 = 1e-9;

const DEGENERATE_TOL: f64 = 1e-14;
/// Growth factor of the grid extremum under 10x refinement that we treat as divergence.
const DIVERGENCE_RATIO: f64 = 1.5;

/// Reciprocal derivative bounds of a non-degenerate kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slopes {
    /// `1 / ess sup phi`, strictly positive.
    pub lambda_plus: f64,
    /// `1 / ess inf phi`, strictly negative.
    pub lambda_minus: f64,
}

impl Slopes {
    /// Success probability `lambda_plus / (lambda_plus - lambda_minus)` of the calibrated pair.
    pub fn pi(&self) -> f64 {
        self.lambda_plus / (self.lambda_plus - self.lambda_minus)
    }

    /// Lipschitz constant `max(1/lambda_plus, -1/lambda_minus)` of the kernel.
    pub fn lipschitz(&self) -> f64 {
        (1.0 / self.lambda_plus).max(-1.0 / self.lambda_minus)
    }
}

/// Where the derivative of a kernel comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    Analytic,
    /// Central differences of a closed-form `g`.
    Numeric,
    /// Central differences of a tabulated `g`.
    Tabulated,
}

#[derive(Clone)]
enum Shape {
    Fgm,
    Hki { p: f64 },
    Hkii { q: f64 },
    Bkb { p: f64, q: f64 },
    Sine,
    SineSquared,
    Checkerboard,
    LaiXie { a: f64, b: f64 },
    LeeQuadratic,
    LeePower { k: f64 },
    LeeExp,
    LeeNormal,
    ExpTilt,
    Rational,
    Legendre2,
    SinAsym,
    RationalQuadratic,
    RationalCubic,
    ExpDamped,
    AsymTent,
    Closure { g: RealFn, phi: Option<RealFn>, step: f64 },
    Table { values: Vec<f64>, slopes: Vec<f64> },
}

/// Catalog row description used for lookup and listing.
#[derive(Debug, Clone, Copy)]
pub struct CatalogRow {
    pub row: usize,
    pub id: &'static str,
    pub formula: &'static str,
    /// `(name, default used for listing)`.
    pub params: &'static [(&'static str, f64)],
}

/// The twenty tabulated kernels, in table order.
pub const CATALOG: [CatalogRow; 20] = [
    CatalogRow { row: 1, id: "fgm", formula: "u(1-u)", params: &[] },
    CatalogRow { row: 2, id: "hki", formula: "u(1-u^p)", params: &[("p", 2.0)] },
    CatalogRow { row: 3, id: "hkii", formula: "u(1-u)^q", params: &[("q", 2.0)] },
    CatalogRow { row: 4, id: "bkb", formula: "u(1-u^p)^q", params: &[("p", 2.0), ("q", 2.0)] },
    CatalogRow { row: 5, id: "sin", formula: "sin(pi u)/pi", params: &[] },
    CatalogRow { row: 6, id: "sin2", formula: "sin^2(pi u)/pi", params: &[] },
    CatalogRow { row: 7, id: "checkerboard", formula: "min(u,1-u)", params: &[] },
    CatalogRow { row: 8, id: "lai_xie", formula: "u^b(1-u)^a", params: &[("a", 2.0), ("b", 2.0)] },
    CatalogRow { row: 9, id: "lee_quadratic", formula: "u(u-1)/2", params: &[] },
    CatalogRow { row: 10, id: "lee_power", formula: "(u^(k+1)-u)/(k+1)", params: &[("k", 1.0)] },
    CatalogRow { row: 11, id: "lee_exp", formula: "(1-e^-u)-(1-e^-1)u", params: &[] },
    CatalogRow { row: 12, id: "lee_normal", formula: "e^(2/3)/sqrt3 (Phi(sqrt3 Phi^-1(u)+2/sqrt3)-u)", params: &[] },
    CatalogRow { row: 13, id: "exp_tilt", formula: "u(e^(2(1-u))-1)/(e^2-1)", params: &[] },
    CatalogRow { row: 14, id: "rational", formula: "u(1-u)/(1+u)", params: &[] },
    CatalogRow { row: 15, id: "legendre2", formula: "u(1-u)(1-2u)", params: &[] },
    CatalogRow { row: 16, id: "sin_asym", formula: "(1-u)sin(pi u)/pi", params: &[] },
    CatalogRow { row: 17, id: "rational_quadratic", formula: "u(1-u)/(1+u^2)", params: &[] },
    CatalogRow { row: 18, id: "rational_cubic", formula: "u(1-u)^2/(1+u)", params: &[] },
    CatalogRow { row: 19, id: "exp_damped", formula: "u(1-u)e^-u", params: &[] },
    CatalogRow { row: 20, id: "asym_tent", formula: "3u on [0,1/4], 1-u on (1/4,1]", params: &[] },
];

/// A kernel `g` with cached slope bounds and area.
#[derive(Clone)]
pub struct Kernel {
    id: String,
    params: BTreeMap<String, f64>,
    shape: Shape,
    slopes: Option<Slopes>,
    kappa: f64,
    sign_constant: bool,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("id", &self.id)
            .field("params", &self.params)
            .field("slopes", &self.slopes)
            .field("kappa", &self.kappa)
            .field("sign_constant", &self.sign_constant)
            .finish()
    }
}

fn lee_normal_scale() -> f64 {
    (2.0f64 / 3.0).exp() / 3f64.sqrt()
}

/// Root of `y tan y = 2` on `(0, pi/2)`.
pub fn sin_asym_root() -> f64 {
    bisect_root(|y: f64| y * y.tan() - 2.0, 1e-6, PI / 2.0 - 1e-12, 1e-16)
}

impl Shape {
    fn g(&self, u: f64) -> f64 {
        match *self {
            Shape::Fgm => u * (1.0 - u),
            Shape::Hki { p } => u * (1.0 - u.powf(p)),
            Shape::Hkii { q } => u * (1.0 - u).powf(q),
            Shape::Bkb { p, q } => u * (1.0 - u.powf(p)).powf(q),
            Shape::Sine => (PI * u).sin() / PI,
            Shape::SineSquared => (PI * u).sin().powi(2) / PI,
            Shape::Checkerboard => u.min(1.0 - u),
            Shape::LaiXie { a, b } => u.powf(b) * (1.0 - u).powf(a),
            Shape::LeeQuadratic => u * (u - 1.0) / 2.0,
            Shape::LeePower { k } => (u.powf(k + 1.0) - u) / (k + 1.0),
            Shape::LeeExp => (1.0 - (-u).exp()) - (1.0 - (-1f64).exp()) * u,
            Shape::LeeNormal => {
                if u <= 0.0 || u >= 1.0 {
                    return 0.0;
                }
                let s3 = 3f64.sqrt();
                let z = norm_quantile(u);
                lee_normal_scale() * (norm_cdf(s3 * z + 2.0 / s3) - u)
            }
            Shape::ExpTilt => u * ((2.0 * (1.0 - u)).exp() - 1.0) / (E * E - 1.0),
            Shape::Rational => u * (1.0 - u) / (1.0 + u),
            Shape::Legendre2 => u * (1.0 - u) * (1.0 - 2.0 * u),
            Shape::SinAsym => (1.0 - u) * (PI * u).sin() / PI,
            Shape::RationalQuadratic => u * (1.0 - u) / (1.0 + u * u),
            Shape::RationalCubic => u * (1.0 - u).powi(2) / (1.0 + u),
            Shape::ExpDamped => u * (1.0 - u) * (-u).exp(),
            Shape::AsymTent => {
                if u <= 0.25 {
                    3.0 * u
                } else {
                    1.0 - u
                }
            }
            Shape::Closure { ref g, .. } => g(u),
            Shape::Table { ref values, .. } => interp(values, u),
        }
    }

    fn phi(&self, u: f64) -> f64 {
        match *self {
            Shape::Fgm => 1.0 - 2.0 * u,
            Shape::Hki { p } => 1.0 - (p + 1.0) * u.powf(p),
            Shape::Hkii { q } => (1.0 - u).powf(q - 1.0) * (1.0 - (q + 1.0) * u),
            Shape::Bkb { p, q } => {
                let t = u.powf(p);
                (1.0 - t).powf(q - 1.0) * (1.0 - (1.0 + p * q) * t)
            }
            Shape::Sine => (PI * u).cos(),
            Shape::SineSquared => (2.0 * PI * u).sin(),
            Shape::Checkerboard => {
                if u < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
            Shape::LaiXie { a, b } => u.powf(b - 1.0) * (1.0 - u).powf(a - 1.0) * (b - (a + b) * u),
            Shape::LeeQuadratic => u - 0.5,
            Shape::LeePower { k } => u.powf(k) - 1.0 / (k + 1.0),
            Shape::LeeExp => (-u).exp() - (1.0 - (-1f64).exp()),
            Shape::LeeNormal => {
                if u <= 0.0 || u >= 1.0 {
                    return -lee_normal_scale();
                }
                let z = norm_quantile(u);
                lee_normal_scale() * (3f64.sqrt() * (-(z + 1.0).powi(2) + 1.0 / 3.0).exp() - 1.0)
            }
            Shape::ExpTilt => ((2.0 * (1.0 - u)).exp() * (1.0 - 2.0 * u) - 1.0) / (E * E - 1.0),
            Shape::Rational => (1.0 - 2.0 * u - u * u) / (1.0 + u).powi(2),
            Shape::Legendre2 => 1.0 - 6.0 * u + 6.0 * u * u,
            Shape::SinAsym => (1.0 - u) * (PI * u).cos() - (PI * u).sin() / PI,
            Shape::RationalQuadratic => (1.0 - 2.0 * u - u * u) / (1.0 + u * u).powi(2),
            Shape::RationalCubic => {
                (1.0 - 4.0 * u + u * u + 2.0 * u * u * u) / (1.0 + u).powi(2)
            }
            Shape::ExpDamped => (-u).exp() * (1.0 - 3.0 * u + u * u),
            Shape::AsymTent => {
                if u < 0.25 {
                    3.0
                } else {
                    -1.0
                }
            }
            Shape::Closure { ref g, ref phi, step } => match phi {
                Some(phi) => phi(u),
                None => central_difference(g.as_ref(), u, step),
            },
            Shape::Table { ref slopes, .. } => interp(slopes, u),
        }
    }

    /// Analytic `(kappa, lambda_plus, lambda_minus)` from the table.
    fn analytic(&self) -> Option<(f64, f64, f64)> {
        let s3 = 3f64.sqrt();
        let row = match *self {
            Shape::Fgm => (1.0 / 6.0, 1.0, -1.0),
            Shape::Hki { p } => (p / (2.0 * (p + 2.0)), 1.0, -1.0 / p),
            Shape::Hkii { q } => (
                1.0 / ((q + 1.0) * (q + 2.0)),
                1.0,
                -((q + 1.0) / (q - 1.0)).powf(q - 1.0),
            ),
            Shape::Bkb { p, q } => (
                beta(2.0 / p, q + 1.0) / p,
                1.0,
                -(1.0 + p * q).powf(q - 1.0) / (p.powf(q) * (q - 1.0).powf(q - 1.0)),
            ),
            Shape::Sine => (2.0 / (PI * PI), 1.0, -1.0),
            Shape::SineSquared => (1.0 / (2.0 * PI), 1.0, -1.0),
            Shape::Checkerboard => (0.25, 1.0, -1.0),
            Shape::LaiXie { a, b } => {
                let s = (a * b).sqrt() / (a + b - 1.0).sqrt();
                let num = (a + b).powf(a + b - 2.0) * (a + b - 1.0).sqrt();
                let root_ab = (a * b).sqrt();
                (
                    beta(b + 1.0, a + 1.0),
                    num / (root_ab * (b - s).powf(b - 1.0) * (a + s).powf(a - 1.0)),
                    -num / (root_ab * (b + s).powf(b - 1.0) * (a - s).powf(a - 1.0)),
                )
            }
            Shape::LeeQuadratic => (-1.0 / 12.0, 2.0, -2.0),
            Shape::LeePower { k } => (-k / (2.0 * (k + 1.0) * (k + 2.0)), (k + 1.0) / k, -(k + 1.0)),
            Shape::LeeExp => ((3.0 - E) / (2.0 * E), E, -E / (E - 2.0)),
            Shape::LeeNormal => {
                let c = lee_normal_scale();
                (c * (norm_cdf(1.0 / s3) - 0.5), 1.0 / (E - c), -s3 * (-2.0f64 / 3.0).exp())
            }
            Shape::ExpTilt => ((E * E - 5.0) / (4.0 * (E * E - 1.0)), 1.0, -(E * E - 1.0) / 2.0),
            Shape::Rational => (1.5 - 4f64.ln(), 1.0, -2.0),
            Shape::Legendre2 => (0.0, 1.0, -2.0),
            Shape::SinAsym => {
                let y = sin_asym_root();
                (1.0 / (PI * PI), 1.0, -PI * (y * y + 4.0).sqrt() / (y * y + 2.0))
            }
            Shape::RationalQuadratic => (-1.0 + 2f64.ln() / 2.0 + PI / 4.0, 1.0, -2.0),
            Shape::RationalCubic => (17.0 / 6.0 - 16f64.ln(), 1.0, 1.0 / (3.0 * 4f64.cbrt() - 5.0)),
            Shape::ExpDamped => (-1.0 + 3.0 / E, 1.0, -E),
            Shape::AsymTent => (3.0 / 8.0, 1.0 / 3.0, -1.0),
            Shape::Closure { .. } | Shape::Table { .. } => return None,
        };
        Some(row)
    }
}

fn central_difference(g: &(dyn Fn(f64) -> f64 + Send + Sync), u: f64, step: f64) -> f64 {
    // second-order one-sided stencils at the boundary
    if u - step < 0.0 {
        return (-3.0 * g(u) + 4.0 * g(u + step) - g(u + 2.0 * step)) / (2.0 * step);
    }
    if u + step > 1.0 {
        return (3.0 * g(u) - 4.0 * g(u - step) + g(u - 2.0 * step)) / (2.0 * step);
    }
    (g(u + step) - g(u - step)) / (2.0 * step)
}

/// Linear interpolation on a uniform grid over `[0, 1]`.
fn interp(values: &[f64], u: f64) -> f64 {
    let n = values.len();
    let x = u.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = (x.floor() as usize).min(n - 2);
    let t = x - i as f64;
    values[i] * (1.0 - t) + values[i + 1] * t
}

/// Central differences of a table on a uniform grid; one-sided at the ends.
fn table_derivative(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let h = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|i| match i {
            0 => (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h),
            i if i == n - 1 => (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h),
            i => (values[i + 1] - values[i - 1]) / (2.0 * h),
        })
        .collect()
}

fn grid_point(i: usize, n: usize) -> f64 {
    i as f64 / (n - 1) as f64
}

/// `(sup, inf)` of `phi` on a uniform grid of `n` points, refined by golden
/// section around the extremal grid points.
pub fn extremize<F: Fn(f64) -> f64>(phi: F, n: usize, refine: bool) -> (f64, f64) {
    let mut arg_max = 0;
    let mut arg_min = 0;
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for i in 0..n {
        let v = phi(grid_point(i, n));
        if v > max {
            max = v;
            arg_max = i;
        }
        if v < min {
            min = v;
            arg_min = i;
        }
    }
    if !refine || !max.is_finite() || !min.is_finite() {
        return (max, min);
    }
    let bracket = |i: usize| (grid_point(i.saturating_sub(1), n), grid_point((i + 1).min(n - 1), n));
    let (a, b) = bracket(arg_max);
    let (_, refined_max) = golden_max(&phi, a, b, SLOPE_REFINE_TOL);
    let (a, b) = bracket(arg_min);
    let (_, neg_min) = golden_max(|u| -phi(u), a, b, SLOPE_REFINE_TOL);
    (max.max(refined_max), min.min(-neg_min))
}

fn slopes_from_extremes(sup: f64, inf: f64) -> Option<Slopes> {
    (sup > 0.0 && inf < 0.0).then(|| Slopes { lambda_plus: 1.0 / sup, lambda_minus: 1.0 / inf })
}

fn detect_sign_constant<F: Fn(f64) -> f64>(g: F) -> bool {
    let n = 10_001;
    let (mut pos, mut neg) = (false, false);
    for i in 1..n - 1 {
        let v = g(grid_point(i, n));
        pos |= v > DEGENERATE_TOL;
        neg |= v < -DEGENERATE_TOL;
    }
    !(pos && neg)
}

fn is_degenerate<F: Fn(f64) -> f64>(g: F) -> bool {
    let n = 10_001;
    (0..n).all(|i| g(grid_point(i, n)).abs() <= DEGENERATE_TOL)
}

fn param(
    kernel: &str,
    params: &BTreeMap<String, f64>,
    name: &str,
    valid: impl Fn(f64) -> bool,
    expected: &str,
) -> Result<f64> {
    let value = params.get(name).copied().unwrap_or(f64::NAN);
    if value.is_finite() && valid(value) {
        Ok(value)
    } else {
        Err(Error::ParamOutOfRange {
            kernel: kernel.to_string(),
            name: name.to_string(),
            value,
            expected: expected.to_string(),
        })
    }
}

/// Looks up a catalog kernel by id and parameters.
pub fn catalog_lookup(name: &str, params: &BTreeMap<String, f64>) -> Result<Kernel> {
    let row = CATALOG
        .iter()
        .find(|r| r.id == name)
        .ok_or_else(|| Error::UnknownKernel(name.to_string()))?;
    if let Some(extra) = params.keys().find(|k| !row.params.iter().any(|(p, _)| p == k)) {
        return Err(Error::ParamOutOfRange {
            kernel: name.to_string(),
            name: extra.clone(),
            value: params[extra],
            expected: "no such parameter".into(),
        });
    }
    let shape = match name {
        "fgm" => Shape::Fgm,
        "hki" => Shape::Hki { p: param(name, params, "p", |p| p > 0.0, "p > 0")? },
        "hkii" => Shape::Hkii { q: param(name, params, "q", |q| q > 1.0, "q > 1 (phi unbounded otherwise)")? },
        "bkb" => Shape::Bkb {
            p: param(name, params, "p", |p| p > 0.0, "p > 0")?,
            q: param(name, params, "q", |q| q > 1.0, "q > 1 (phi unbounded otherwise)")?,
        },
        "sin" => Shape::Sine,
        "sin2" => Shape::SineSquared,
        "checkerboard" => Shape::Checkerboard,
        "lai_xie" => Shape::LaiXie {
            a: param(name, params, "a", |a| a > 1.0, "a > 1")?,
            b: param(name, params, "b", |b| b > 1.0, "b > 1")?,
        },
        "lee_quadratic" => Shape::LeeQuadratic,
        "lee_power" => Shape::LeePower {
            k: param(name, params, "k", |k| k >= 1.0 && k.fract() == 0.0, "integer k >= 1")?,
        },
        "lee_exp" => Shape::LeeExp,
        "lee_normal" => Shape::LeeNormal,
        "exp_tilt" => Shape::ExpTilt,
        "rational" => Shape::Rational,
        "legendre2" => Shape::Legendre2,
        "sin_asym" => Shape::SinAsym,
        "rational_quadratic" => Shape::RationalQuadratic,
        "rational_cubic" => Shape::RationalCubic,
        "exp_damped" => Shape::ExpDamped,
        "asym_tent" => Shape::AsymTent,
        _ => unreachable!("catalog ids are matched above"),
    };
    let (kappa, lambda_plus, lambda_minus) = shape.analytic().expect("catalog rows are analytic");
    let breakpoints = match shape {
        Shape::Checkerboard => vec![0.5],
        Shape::AsymTent => vec![0.25],
        _ => Vec::new(),
    };
    let sign_constant = detect_sign_constant(|u| shape.g(u));
    Ok(Kernel {
        id: name.to_string(),
        params: params.clone(),
        shape,
        slopes: Some(Slopes { lambda_plus, lambda_minus }),
        kappa,
        sign_constant,
        breakpoints,
    })
}

/// Catalog kernel with no parameters, or its documented defaults.
pub fn catalog_default(name: &str) -> Result<Kernel> {
    let row = CATALOG
        .iter()
        .find(|r| r.id == name)
        .ok_or_else(|| Error::UnknownKernel(name.to_string()))?;
    let params = row.params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    catalog_lookup(name, &params)
}

/// All catalog kernels at their listing defaults.
pub fn catalog_entries() -> Vec<Kernel> {
    CATALOG
        .iter()
        .map(|r| catalog_default(r.id).expect("listing defaults are valid"))
        .collect()
}

/// Kernel area `kappa = int_0^1 g`.
pub fn kernel_area(k: &Kernel) -> f64 {
    k.kappa()
}

/// User-defined kernel from a closed-form `g`, with an optional derivative.
///
/// Without `phi`, the derivative is approximated by central differences on
/// a grid of `SLOPE_GRID + 1` points. The slope bounds are estimated by
/// grid extremization with golden-section refinement; the area by adaptive
/// quadrature.
pub fn custom_kernel(g: RealFn, phi: Option<RealFn>) -> Result<Kernel> {
    let (g0, g1) = (g(0.0), g(1.0));
    if !(g0.abs() <= ANCHOR_TOL && g1.abs() <= ANCHOR_TOL) {
        return Err(Error::NotAnchored { g0, g1 });
    }
    let shape = Shape::Closure { g, phi, step: 1.0 / SLOPE_GRID as f64 };
    let kappa = integrate_unit(|u| shape.g(u), &[]);
    let degenerate = is_degenerate(|u| shape.g(u));
    let slopes = if degenerate {
        None
    } else {
        let coarse_n = SLOPE_GRID / 10 + 1;
        let coarse = match &shape {
            Shape::Closure { g, phi: None, .. } => {
                let step = 1.0 / (coarse_n - 1) as f64;
                extremize(|u| central_difference(g.as_ref(), u, step), coarse_n, false)
            }
            _ => extremize(|u| shape.phi(u), coarse_n, false),
        };
        let fine = extremize(|u| shape.phi(u), SLOPE_GRID + 1, true);
        check_bounded(coarse, fine)?;
        slopes_from_extremes(fine.0, fine.1)
    };
    Ok(Kernel {
        id: "custom".into(),
        params: BTreeMap::new(),
        sign_constant: detect_sign_constant(|u| shape.g(u)),
        shape,
        slopes,
        kappa,
        breakpoints: Vec::new(),
    })
}

/// User-defined kernel from values of `g` on a uniform grid over `[0, 1]`.
///
/// `g` is linearly interpolated; `phi` uses central differences with step
/// `1/(n-1)` (one-sided at the endpoints).
pub fn tabulated_kernel(values: Vec<f64>) -> Result<Kernel> {
    if values.len() < 101 {
        return Err(Error::Config(format!(
            "tabulated kernel needs at least 101 points, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("tabulated kernel contains non-finite values".into()));
    }
    let (g0, g1) = (values[0], values[values.len() - 1]);
    if !(g0.abs() <= ANCHOR_TOL && g1.abs() <= ANCHOR_TOL) {
        return Err(Error::NotAnchored { g0, g1 });
    }
    let slopes_table = table_derivative(&values);
    let n = values.len();
    let h = 1.0 / (n - 1) as f64;
    let kappa = h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]));
    let degenerate = values.iter().all(|v| v.abs() <= DEGENERATE_TOL);
    let slopes = if degenerate {
        None
    } else {
        let subsampled: Vec<f64> = values.iter().step_by(10).copied().collect();
        let coarse_table = table_derivative(&subsampled);
        let extremes = |t: &[f64]| {
            t.iter().fold((f64::NEG_INFINITY, f64::INFINITY), |(mx, mn), &v| (mx.max(v), mn.min(v)))
        };
        let fine = extremes(&slopes_table);
        check_bounded(extremes(&coarse_table), fine)?;
        slopes_from_extremes(fine.0, fine.1)
    };
    let shape = Shape::Table { values, slopes: slopes_table };
    Ok(Kernel {
        id: "custom".into(),
        params: BTreeMap::new(),
        sign_constant: detect_sign_constant(|u| shape.g(u)),
        shape,
        slopes,
        kappa,
        breakpoints: Vec::new(),
    })
}

fn check_bounded(coarse: (f64, f64), fine: (f64, f64)) -> Result<()> {
    let c = coarse.0.abs().max(coarse.1.abs());
    let f = fine.0.abs().max(fine.1.abs());
    if !f.is_finite() || (c > 0.0 && f > DIVERGENCE_RATIO * c) {
        return Err(Error::UnboundedDerivative { coarse: c, fine: f });
    }
    Ok(())
}

impl Kernel {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Kernel value `g(u)`; `u` is clamped to `[0, 1]`.
    pub fn g(&self, u: f64) -> f64 {
        self.shape.g(u.clamp(0.0, 1.0))
    }

    /// A.e. derivative `phi(u) = g'(u)` (analytic for catalog kernels).
    pub fn phi(&self, u: f64) -> f64 {
        self.shape.phi(u.clamp(0.0, 1.0))
    }

    pub fn derivative_source(&self) -> DerivativeSource {
        match &self.shape {
            Shape::Closure { phi: None, .. } => DerivativeSource::Numeric,
            Shape::Table { .. } => DerivativeSource::Tabulated,
            _ => DerivativeSource::Analytic,
        }
    }

    /// `None` when the kernel is identically zero.
    pub fn slopes(&self) -> Option<Slopes> {
        self.slopes
    }

    pub fn is_degenerate(&self) -> bool {
        self.slopes.is_none()
    }

    /// `Lambda = 1 / ess sup phi`, or NaN for a degenerate kernel.
    pub fn lambda_plus(&self) -> f64 {
        self.slopes.map_or(f64::NAN, |s| s.lambda_plus)
    }

    /// `lambda = 1 / ess inf phi`, or NaN for a degenerate kernel.
    pub fn lambda_minus(&self) -> f64 {
        self.slopes.map_or(f64::NAN, |s| s.lambda_minus)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// True iff `g` has no sign change on `(0, 1)`.
    pub fn sign_constant(&self) -> bool {
        self.sign_constant
    }

    /// Interior points where `g` has a kink.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn is_catalog(&self) -> bool {
        self.shape.analytic().is_some()
    }

    /// Slope bounds re-derived from `phi` by grid extremization, ignoring
    /// any stored analytic values.
    pub fn numeric_slopes(&self) -> Option<Slopes> {
        let (sup, inf) = extremize(|u| self.phi(u), SLOPE_GRID + 1, true);
        slopes_from_extremes(sup, inf)
    }

    /// Area re-derived by adaptive quadrature.
    pub fn numeric_kappa(&self) -> f64 {
        integrate_unit(|u| self.g(u), &self.breakpoints)
    }

    /// Same kernel with the given interior kink locations, used to split quadrature.
    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Kernel {
        self.breakpoints = breakpoints;
        if self.shape.analytic().is_none() {
            let shape = &self.shape;
            self.kappa = integrate_unit(|u| shape.g(u), &self.breakpoints);
        }
        self
    }

    /// The kernel `c * g`, retaining the derivative source.
    pub fn scaled(&self, c: f64) -> Result<Kernel> {
        let base = self.clone();
        let base_phi = self.clone();
        let phi: Option<RealFn> = match self.derivative_source() {
            DerivativeSource::Analytic => Some(Arc::new(move |u| c * base_phi.phi(u))),
            _ => None,
        };
        let mut k = custom_kernel(Arc::new(move |u| c * base.g(u)), phi)?;
        k.breakpoints = self.breakpoints.clone();
        Ok(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn lookup_examples() {
        let fgm = catalog_lookup("fgm", &params(&[])).unwrap();
        assert_eq!((fgm.lambda_plus(), fgm.lambda_minus()), (1.0, -1.0));
        assert_abs_diff_eq!(fgm.kappa(), 1.0 / 6.0, epsilon = 1e-15);

        let hki = catalog_lookup("hki", &params(&[("p", 2.0)])).unwrap();
        assert_eq!((hki.lambda_plus(), hki.lambda_minus()), (1.0, -0.5));
        assert_abs_diff_eq!(hki.kappa(), 0.25, epsilon = 1e-15);

        let hkii = catalog_lookup("hkii", &params(&[("q", 2.0)])).unwrap();
        assert_abs_diff_eq!(hkii.lambda_minus(), -3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hkii.kappa(), 1.0 / 12.0, epsilon = 1e-15);

        let leg = catalog_lookup("legendre2", &params(&[])).unwrap();
        assert_eq!((leg.lambda_plus(), leg.lambda_minus(), leg.kappa()), (1.0, -2.0, 0.0));
        assert_abs_diff_eq!(leg.g(0.25), 0.25 * 0.75 * 0.5, epsilon = 1e-16);

        let cb = catalog_lookup("checkerboard", &params(&[])).unwrap();
        assert_eq!((cb.lambda_plus(), cb.lambda_minus(), cb.kappa()), (1.0, -1.0, 0.25));
        assert_eq!(cb.g(0.3), 0.3);
        assert_eq!(cb.g(0.8), 1.0 - 0.8);
    }

    #[test]
    fn lookup_errors() {
        assert_eq!(
            catalog_lookup("nope", &params(&[])).unwrap_err(),
            Error::UnknownKernel("nope".into())
        );
        assert!(matches!(
            catalog_lookup("hkii", &params(&[("q", 1.0)])),
            Err(Error::ParamOutOfRange { .. })
        ));
        assert!(matches!(
            catalog_lookup("bkb", &params(&[("p", 2.0), ("q", 0.5)])),
            Err(Error::ParamOutOfRange { .. })
        ));
        assert!(matches!(catalog_lookup("hki", &params(&[])), Err(Error::ParamOutOfRange { .. })));
        assert!(matches!(
            catalog_lookup("lee_power", &params(&[("k", 1.5)])),
            Err(Error::ParamOutOfRange { .. })
        ));
        assert!(matches!(
            catalog_lookup("fgm", &params(&[("p", 1.0)])),
            Err(Error::ParamOutOfRange { .. })
        ));
    }

    #[test]
    fn areas() {
        assert_abs_diff_eq!(kernel_area(&catalog_default("fgm").unwrap()), 1.0 / 6.0, epsilon = 1e-15);
        assert_eq!(kernel_area(&catalog_default("legendre2").unwrap()), 0.0);
        assert_abs_diff_eq!(
            kernel_area(&catalog_default("sin").unwrap()),
            2.0 / (PI * PI),
            epsilon = 1e-15
        );
    }

    #[test]
    fn analytic_phi_matches_finite_differences() {
        for k in catalog_entries() {
            let h = 1e-6;
            for i in 1..40 {
                let u = i as f64 / 40.0 + 0.0037;
                if k.breakpoints().iter().any(|b| (u - b).abs() < 1e-3) {
                    continue;
                }
                let fd = (k.g(u + h) - k.g(u - h)) / (2.0 * h);
                assert_abs_diff_eq!(k.phi(u), fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn anchored_and_mean_zero_derivative() {
        for k in catalog_entries() {
            assert!(k.g(0.0).abs() < 1e-12 && k.g(1.0).abs() < 1e-12, "{}", k.id());
            let integral = integrate_unit(|u| k.phi(u), k.breakpoints());
            assert_abs_diff_eq!(integral, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn sign_changes() {
        // lee_normal dips below zero on (0, Phi(-2 / (3 - sqrt 3))) ~ (0, 0.0574)
        let changes = ["legendre2", "lee_normal"];
        for k in catalog_entries() {
            assert_eq!(k.sign_constant(), !changes.contains(&k.id()), "{}", k.id());
        }
        let ln = catalog_default("lee_normal").unwrap();
        assert!(ln.g(0.01) < 0.0 && ln.g(0.06) > 0.0);
        let switch = norm_cdf(-2.0 / (3.0 - 3f64.sqrt()));
        assert!(ln.g(switch - 1e-6) < 0.0 && ln.g(switch + 1e-6) > 0.0);
    }

    #[test]
    fn lipschitz_envelope_and_area_bound() {
        for k in catalog_entries() {
            let s = k.slopes().unwrap();
            assert!(s.lambda_minus < 0.0 && s.lambda_plus > 0.0);
            let l = s.lipschitz();
            for i in 0..=1000 {
                let u = i as f64 / 1000.0;
                assert!(k.g(u).abs() <= l * u.min(1.0 - u) + 1e-12, "{} at {u}", k.id());
            }
            assert!(k.kappa().abs() <= 1.0 / (2.0 * (s.lambda_plus - s.lambda_minus)) + 1e-12);
        }
    }

    #[test]
    fn sin_asym_root_value() {
        let k = catalog_default("sin_asym").unwrap();
        assert_abs_diff_eq!(k.lambda_minus(), -2.2585010314, epsilon = 1e-8);
    }

    #[test]
    fn tabulated_fgm_recovers_slopes() {
        let n = 100_000;
        let values: Vec<f64> = (0..n).map(|i| {
            let u = i as f64 / (n - 1) as f64;
            u * (1.0 - u)
        }).collect();
        let k = tabulated_kernel(values).unwrap();
        assert_eq!(k.derivative_source(), DerivativeSource::Tabulated);
        assert_abs_diff_eq!(k.lambda_plus(), 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(k.lambda_minus(), -1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(k.kappa(), 1.0 / 6.0, epsilon = 1e-9);
    }

    #[test]
    fn closure_kernels() {
        let k = custom_kernel(Arc::new(|u| u * (1.0 - u)), None).unwrap();
        assert_relative_eq!(k.lambda_plus(), 1.0, max_relative = 1e-6);
        assert_relative_eq!(k.lambda_minus(), -1.0, max_relative = 1e-6);
        assert_abs_diff_eq!(k.kappa(), 1.0 / 6.0, epsilon = 1e-12);

        let zero = custom_kernel(Arc::new(|_| 0.0), None).unwrap();
        assert!(zero.is_degenerate());
        assert!(zero.lambda_plus().is_nan());

        assert!(matches!(custom_kernel(Arc::new(|u| u), None), Err(Error::NotAnchored { .. })));

        // HKII with q = 1/2: phi blows up at u = 1
        let sqrt_kernel = custom_kernel(Arc::new(|u: f64| u * (1.0 - u).sqrt()), None);
        assert!(matches!(sqrt_kernel, Err(Error::UnboundedDerivative { .. })));
    }

    #[test]
    fn scaled_kernel() {
        let k = catalog_default("fgm").unwrap().scaled(0.5).unwrap();
        assert_relative_eq!(k.lambda_plus(), 2.0, max_relative = 1e-9);
        assert_abs_diff_eq!(k.kappa(), 1.0 / 12.0, epsilon = 1e-13);
    }
}
