//! Calibrated cdf pairs: two cdfs on `[0, 1]` whose `pi`-mixture is uniform.
//!
//! A margin draws from `F0` when its Bernoulli index is 0 and from `F1`
//! when it is 1. Pairs come either from a kernel, with
//! `F0 = u - Lambda g`, `F1 = u - lambda g`, `pi = Lambda / (Lambda - lambda)`,
//! or from two user cdfs that satisfy `(1 - pi) F0 + pi F1 = u`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::{Kernel, RealFn, Slopes};
use crate::numeric::integrate_unit;

/// Points in the verification grid (plus kernel breakpoints).
pub const VERIFY_GRID: usize = 1001;
/// Calibration tolerance for kernel-built pairs.
pub const CALIBRATION_TOL: f64 = 1e-10;
/// Calibration tolerance for user-supplied pairs.
pub const EXPLICIT_CALIBRATION_TOL: f64 = 1e-8;
const MONOTONE_TOL: f64 = 1e-12;
const REFLECTION_TOL: f64 = 1e-9;
const BISECTION_STEPS: usize = 80;

/// Which mixture component a margin draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    /// Drawn when the Bernoulli index is 0.
    Zero,
    /// Drawn when the Bernoulli index is 1.
    One,
}

impl From<bool> for Component {
    fn from(bit: bool) -> Self {
        if bit {
            Component::One
        } else {
            Component::Zero
        }
    }
}

/// How a pair was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSource {
    FromKernel,
    Explicit,
}

#[derive(Clone)]
enum Cdfs {
    Kernel { kernel: Kernel, slopes: Slopes },
    Explicit { f0: RealFn, f1: RealFn },
}

#[derive(Debug, Clone, Copy)]
enum Inverse {
    Sqrt,
    OneMinusSqrt,
    Power(f64),
    HkiiTwo,
    UpperHalf,
    LowerHalf,
    Bisection,
}

/// A `pi`-calibrated pair of cdfs together with its inverse-cdf rules.
#[derive(Clone)]
pub struct CalibratedPair {
    pi: f64,
    cdfs: Cdfs,
    inverse: [Inverse; 2],
    breakpoints: Vec<f64>,
}

impl fmt::Debug for CalibratedPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("CalibratedPair");
        s.field("pi", &self.pi).field("source", &self.source());
        if let Cdfs::Kernel { kernel, .. } = &self.cdfs {
            s.field("kernel", &kernel.id());
        }
        s.finish()
    }
}

fn verification_grid(breakpoints: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..VERIFY_GRID).map(|i| i as f64 / (VERIFY_GRID - 1) as f64).collect();
    grid.extend(breakpoints.iter().copied());
    grid.sort_by(f64::total_cmp);
    grid
}

fn closed_form_inverses(kernel: &Kernel) -> [Inverse; 2] {
    let param = |name: &str| kernel.params().get(name).copied();
    match kernel.id() {
        "fgm" => [Inverse::Sqrt, Inverse::OneMinusSqrt],
        "hki" => [Inverse::Power(1.0 / (param("p").unwrap_or(1.0) + 1.0)), Inverse::Bisection],
        "hkii" if param("q") == Some(2.0) => [Inverse::Bisection, Inverse::HkiiTwo],
        "checkerboard" => [Inverse::UpperHalf, Inverse::LowerHalf],
        _ => [Inverse::Bisection, Inverse::Bisection],
    }
}

/// Builds the pair `F0 = u - Lambda g`, `F1 = u - lambda g` from a kernel.
pub fn calibrate_from_kernel(k: &Kernel) -> Result<CalibratedPair> {
    let slopes = k.slopes().ok_or(Error::DegenerateKernel)?;
    let pair = CalibratedPair {
        pi: slopes.pi(),
        inverse: if k.is_catalog() { closed_form_inverses(k) } else { [Inverse::Bisection; 2] },
        breakpoints: k.breakpoints().to_vec(),
        cdfs: Cdfs::Kernel { kernel: k.clone(), slopes },
    };
    pair.verify(CALIBRATION_TOL)?;
    Ok(pair)
}

/// Accepts two user cdfs as a `pi`-calibrated pair after checking the
/// mixture identity and monotonicity on the verification grid.
pub fn explicit_pair(f0: RealFn, f1: RealFn, pi: f64) -> Result<CalibratedPair> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::Config(format!("pi = {pi} must lie in (0, 1)")));
    }
    let pair = CalibratedPair {
        pi,
        cdfs: Cdfs::Explicit { f0, f1 },
        inverse: [Inverse::Bisection; 2],
        breakpoints: Vec::new(),
    };
    pair.verify(EXPLICIT_CALIBRATION_TOL)?;
    Ok(pair)
}

/// The pair `F0 = F1 = identity`: a margin that carries no dependence.
pub fn independent_pair(pi: f64) -> CalibratedPair {
    let id: RealFn = Arc::new(|u| u);
    explicit_pair(id.clone(), id, pi).expect("identity pair is calibrated")
}

/// True iff `pi = 1/2` and `F1(u) = 1 - F0(1 - u)` on the verification grid.
pub fn reflection_check(pair: &CalibratedPair) -> bool {
    if (pair.pi - 0.5).abs() > 1e-12 {
        return false;
    }
    verification_grid(&pair.breakpoints)
        .into_iter()
        .all(|u| (pair.f1(u) - (1.0 - pair.f0(1.0 - u))).abs() <= REFLECTION_TOL)
}

/// Quantile of one component, `inf { u : F(u) >= q }`.
pub fn component_quantile(pair: &CalibratedPair, which: Component, q: f64) -> f64 {
    pair.quantile(which, q)
}

impl CalibratedPair {
    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn source(&self) -> PairSource {
        match self.cdfs {
            Cdfs::Kernel { .. } => PairSource::FromKernel,
            Cdfs::Explicit { .. } => PairSource::Explicit,
        }
    }

    /// The kernel this pair was calibrated from, if any.
    pub fn kernel(&self) -> Option<&Kernel> {
        match &self.cdfs {
            Cdfs::Kernel { kernel, .. } => Some(kernel),
            Cdfs::Explicit { .. } => None,
        }
    }

    pub fn f0(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.cdfs {
            Cdfs::Kernel { kernel, slopes } => (u - slopes.lambda_plus * kernel.g(u)).clamp(0.0, 1.0),
            Cdfs::Explicit { f0, .. } => f0(u),
        }
    }

    pub fn f1(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.cdfs {
            Cdfs::Kernel { kernel, slopes } => (u - slopes.lambda_minus * kernel.g(u)).clamp(0.0, 1.0),
            Cdfs::Explicit { f1, .. } => f1(u),
        }
    }

    pub fn cdf(&self, which: Component, u: f64) -> f64 {
        match which {
            Component::Zero => self.f0(u),
            Component::One => self.f1(u),
        }
    }

    /// `Delta(u) = F1(u) - F0(u)`.
    pub fn delta(&self, u: f64) -> f64 {
        match &self.cdfs {
            Cdfs::Kernel { kernel, slopes } => {
                (slopes.lambda_plus - slopes.lambda_minus) * kernel.g(u.clamp(0.0, 1.0))
            }
            Cdfs::Explicit { .. } => self.f1(u) - self.f0(u),
        }
    }

    /// Induced kernel `pi * Delta(u)`. For a kernel-built pair this is
    /// `Lambda * g(u)`.
    pub fn g(&self, u: f64) -> f64 {
        match &self.cdfs {
            Cdfs::Kernel { kernel, slopes } => slopes.lambda_plus * kernel.g(u.clamp(0.0, 1.0)),
            Cdfs::Explicit { .. } => self.pi * self.delta(u),
        }
    }

    /// Area of the induced kernel.
    pub fn kappa(&self) -> f64 {
        match &self.cdfs {
            Cdfs::Kernel { kernel, slopes } => slopes.lambda_plus * kernel.kappa(),
            Cdfs::Explicit { .. } => integrate_unit(|u| self.g(u), &self.breakpoints),
        }
    }

    /// Ratio between the induced kernel and the source kernel: `Lambda` for
    /// a kernel-built pair, 1 for an explicit pair.
    pub fn kernel_scale(&self) -> f64 {
        match &self.cdfs {
            Cdfs::Kernel { slopes, .. } => slopes.lambda_plus,
            Cdfs::Explicit { .. } => 1.0,
        }
    }

    /// Lipschitz constant of the source kernel (for explicit pairs, of the
    /// induced kernel, estimated on the verification grid).
    pub fn lipschitz(&self) -> f64 {
        match &self.cdfs {
            Cdfs::Kernel { slopes, .. } => slopes.lipschitz(),
            Cdfs::Explicit { .. } => {
                let grid = verification_grid(&self.breakpoints);
                grid.windows(2)
                    .filter(|w| w[1] > w[0])
                    .map(|w| ((self.g(w[1]) - self.g(w[0])) / (w[1] - w[0])).abs())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// True when the induced kernel is identically zero on the grid.
    pub fn is_trivial(&self) -> bool {
        verification_grid(&self.breakpoints).into_iter().all(|u| self.g(u).abs() <= 1e-14)
    }

    pub fn quantile(&self, which: Component, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let rule = self.inverse[which as usize];
        match rule {
            Inverse::Sqrt => q.sqrt(),
            Inverse::OneMinusSqrt => 1.0 - (1.0 - q).sqrt(),
            Inverse::Power(e) => q.powf(e),
            Inverse::HkiiTwo => (2.0 / 3.0 + ((q - 8.0 / 9.0) / 3.0).cbrt()).clamp(0.0, 1.0),
            Inverse::UpperHalf => {
                if q <= 0.0 {
                    0.0
                } else {
                    0.5 + 0.5 * q
                }
            }
            Inverse::LowerHalf => 0.5 * q,
            Inverse::Bisection => self.bisect_quantile(which, q),
        }
    }

    /// Generic inverse by bisection on `[0, 1]`, returning the left end of
    /// any flat segment at level `q`.
    pub fn bisect_quantile(&self, which: Component, q: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        if self.cdf(which, 0.0) >= q {
            return 0.0;
        }
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(which, mid) >= q {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    fn verify(&self, tol: f64) -> Result<()> {
        let grid = verification_grid(&self.breakpoints);
        for f in [self.f0(0.0), self.f1(0.0)] {
            if f.abs() > tol {
                return Err(Error::NotCalibrated { deviation: f.abs(), at: 0.0 });
            }
        }
        for f in [self.f0(1.0), self.f1(1.0)] {
            if (f - 1.0).abs() > tol {
                return Err(Error::NotCalibrated { deviation: (f - 1.0).abs(), at: 1.0 });
            }
        }
        let (mut prev0, mut prev1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut worst = (0.0, 0.0);
        for &u in &grid {
            let (a, b) = (self.f0(u), self.f1(u));
            if a < prev0 - MONOTONE_TOL || b < prev1 - MONOTONE_TOL {
                return Err(Error::NotMonotone { at: u });
            }
            prev0 = a;
            prev1 = b;
            let dev = ((1.0 - self.pi) * a + self.pi * b - u).abs();
            if dev > worst.0 {
                worst = (dev, u);
            }
        }
        if worst.0 > tol {
            return Err(Error::NotCalibrated { deviation: worst.0, at: worst.1 });
        }
        Ok(())
    }
}
