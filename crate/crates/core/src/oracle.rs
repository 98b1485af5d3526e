//! Brute-force d-increasing check: every cell of a uniform grid over
//! `[0, 1]^d` must receive a nonnegative inclusion–exclusion increment.

use rayon::prelude::*;
use serde::Serialize;

/// Increments below this are violations.
pub const VIOLATION_TOL: f64 = -1e-9;
/// Groundedness and margin deviations above this fail the report.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Largest dimension the oracle accepts.
pub const MAX_ORACLE_DIM: usize = 6;
/// Number of cells kept in the report.
pub const WORST_CELLS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellIncrement {
    /// Lower-corner grid indices of the cell, one per coordinate.
    pub cell: Vec<usize>,
    pub increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub d: usize,
    pub grid_n: usize,
    pub min_increment: f64,
    /// The cell attaining `min_increment`.
    pub min_cell: Vec<usize>,
    /// Set when `min_increment < VIOLATION_TOL`.
    pub violation: Option<CellIncrement>,
    /// Largest `|C|` on lattice points with a zero coordinate.
    pub grounded_error: f64,
    /// Largest `|C(1, .., u_j, .., 1) - u_j|` on the lattice.
    pub margin_error: f64,
    /// The most negative cells, ascending.
    pub worst: Vec<CellIncrement>,
    pub passed: bool,
}

impl OracleReport {
    /// `c1..cd,increment` rows for the worst cells, then a summary comment line.
    pub fn to_csv(&self) -> String {
        let header: Vec<String> = (1..=self.d).map(|m| format!("c{m}")).collect();
        let mut out = format!("{},increment\n", header.join(","));
        for w in &self.worst {
            let idx: Vec<String> = w.cell.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!("{},{:.17e}\n", idx.join(","), w.increment));
        }
        out.push_str(&format!(
            "# d={} grid_n={} min_increment={:.17e} grounded_error={:.3e} margin_error={:.3e} passed={}\n",
            self.d, self.grid_n, self.min_increment, self.grounded_error, self.margin_error, self.passed
        ));
        out
    }
}

fn unrank(mut idx: usize, base: usize, d: usize) -> Vec<usize> {
    let mut out = vec![0; d];
    for slot in out.iter_mut() {
        *slot = idx % base;
        idx /= base;
    }
    out
}

/// Runs the check on a `grid_n^d` partition. Panics if `d` exceeds
/// [`MAX_ORACLE_DIM`] or `grid_n` is zero.
pub fn d_increasing_oracle<F>(d: usize, cdf: F, grid_n: usize) -> OracleReport
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert!((1..=MAX_ORACLE_DIM).contains(&d), "oracle supports 1 <= d <= {MAX_ORACLE_DIM}");
    assert!(grid_n > 0, "grid_n must be positive");
    let base = grid_n + 1;
    let points = base.pow(d as u32);
    let coord = |i: usize| i as f64 / grid_n as f64;
    let values: Vec<f64> = (0..points)
        .into_par_iter()
        .map(|p| {
            let x: Vec<f64> = unrank(p, base, d).into_iter().map(coord).collect();
            cdf(&x)
        })
        .collect();

    let mut grounded_error = 0.0f64;
    let mut margin_error = 0.0f64;
    for (p, &v) in values.iter().enumerate() {
        let idx = unrank(p, base, d);
        if idx.contains(&0) {
            grounded_error = grounded_error.max(v.abs());
        }
        let not_top: Vec<usize> = (0..d).filter(|&m| idx[m] != grid_n).collect();
        match not_top.as_slice() {
            [] => margin_error = margin_error.max((v - 1.0).abs()),
            [j] => margin_error = margin_error.max((v - coord(idx[*j])).abs()),
            _ => {}
        }
    }

    let strides: Vec<usize> = (0..d).map(|m| base.pow(m as u32)).collect();
    let corners: Vec<(usize, f64)> = (0..1usize << d)
        .map(|mask| {
            let offset = (0..d).filter(|m| mask >> m & 1 == 1).map(|m| strides[m]).sum();
            let sign = if (d - mask.count_ones() as usize).is_multiple_of(2) { 1.0 } else { -1.0 };
            (offset, sign)
        })
        .collect();
    let cells = grid_n.pow(d as u32);
    let increments: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|c| {
            let lower: usize = unrank(c, grid_n, d).iter().zip(&strides).map(|(i, s)| i * s).sum();
            corners.iter().map(|&(off, sign)| sign * values[lower + off]).sum()
        })
        .collect();

    let mut order: Vec<usize> = (0..cells).collect();
    order.sort_by(|&a, &b| increments[a].total_cmp(&increments[b]).then(a.cmp(&b)));
    let worst: Vec<CellIncrement> = order
        .iter()
        .take(WORST_CELLS)
        .map(|&c| CellIncrement { cell: unrank(c, grid_n, d), increment: increments[c] })
        .collect();
    let min = worst[0].clone();
    let violation = (min.increment < VIOLATION_TOL).then(|| min.clone());
    let passed = violation.is_none() && grounded_error <= BOUNDARY_TOL && margin_error <= BOUNDARY_TOL;
    OracleReport {
        d,
        grid_n,
        min_increment: min.increment,
        min_cell: min.cell,
        violation,
        grounded_error,
        margin_error,
        worst,
        passed,
    }
}
