//! Discretization of the nonlocal nonlinear diffusion operator on a bounded
//! interval with zero exterior values.
//!
//! The operator acts on a uniform cell-centered grid over Omega = (a, b):
//!
//!   (Lu)_i = sum_{j != i} |u_i - u_j|^(p-2) (u_i - u_j) w_ij
//!            + |u_i|^(p-2) u_i t_i,
//!
//! where w_ij = h / |x_i - x_j|^(1 + ps) is the midpoint quadrature weight of
//! the interaction kernel and t_i is the exact integral of the kernel over
//! the exterior of Omega (where the field vanishes identically):
//!
//!   t_i = [ (x_i - a)^(-ps) + (b - x_i)^(-ps) ] / (ps).
//!
//! The energy pairing halves the ordered double sum, matching the convention
//! <Lu, v> = 1/2 * iint |u(x)-u(y)|^(p-2)(u(x)-u(y))(v(x)-v(y)) dmu + tail,
//! and satisfies summation by parts against the pointwise operator exactly.

use crate::algebra::{odd_power, odd_power_reg};
use crate::error::{Error, Result};

/// Uniform cell-centered mesh of a bounded open interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDomain {
    x_left: f64,
    x_right: f64,
    m: usize,
}

impl GridDomain {
    /// At least two cells; nodes sit at cell centers, strictly inside.
    pub fn new(x_left: f64, x_right: f64, m: usize) -> Result<Self> {
        if !x_left.is_finite() || !x_right.is_finite() || !(x_left < x_right) {
            return Err(Error::InvalidParameter(format!(
                "need a bounded interval, got ({x_left}, {x_right})"
            )));
        }
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 cells, got {m}"
            )));
        }
        Ok(GridDomain { x_left, x_right, m })
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        (self.x_right - self.x_left) / self.m as f64
    }

    /// i-th cell center. Offsets are formed from the index so that grids
    /// translated by a constant produce bitwise-identical geometry.
    pub fn node(&self, i: usize) -> f64 {
        self.x_left + (i as f64 + 0.5) * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.node(i)).collect()
    }

    pub fn width(&self) -> f64 {
        self.x_right - self.x_left
    }
}

/// Nonlinearity exponent p, differentiation order s, effective dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracParams {
    p: f64,
    s: f64,
    n_eff: u32,
}

impl FracParams {
    /// Requires p > 1 and s in (0, 1). The subcritical constraint ps < N_eff
    /// is NOT enforced here: the kernel table, the operator, and the time
    /// stepper are well defined for every ps > 0, and the supercritical
    /// exponents are exercised deliberately (fast- vs slow-diffusion
    /// comparisons). Operations that genuinely need ps < N_eff (the critical
    /// Sobolev exponent and everything built on it) check it themselves.
    pub fn new(p: f64, s: f64, n_eff: u32) -> Result<Self> {
        if !p.is_finite() || p <= 1.0 {
            return Err(Error::InvalidParameter(format!("need p > 1, got {p}")));
        }
        if !s.is_finite() || s <= 0.0 || s >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "need s in (0, 1), got {s}"
            )));
        }
        if n_eff < 1 {
            return Err(Error::InvalidParameter("need N_eff >= 1".into()));
        }
        Ok(FracParams { p, s, n_eff })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn n_eff(&self) -> u32 {
        self.n_eff
    }

    pub fn ps(&self) -> f64 {
        self.p * self.s
    }

    /// Critical Sobolev exponent p N / (N - ps); only defined while ps < N.
    pub fn critical_exponent(&self) -> Result<f64> {
        let n = self.n_eff as f64;
        if self.ps() >= n {
            return Err(Error::InvalidParameter(format!(
                "critical exponent needs ps < N_eff, got ps = {}, N_eff = {}",
                self.ps(),
                self.n_eff
            )));
        }
        Ok(self.p * n / (n - self.ps()))
    }
}

/// Grid function tagged with its time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn new(values: Vec<f64>, time: f64) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) || !time.is_finite() {
            return Err(Error::InvalidParameter(
                "field entries and time must be finite".into(),
            ));
        }
        Ok(Field { values, time })
    }

    pub fn zeros(grid: &GridDomain, time: f64) -> Self {
        Field {
            values: vec![0.0; grid.m()],
            time,
        }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &GridDomain, time: f64, f: F) -> Result<Self> {
        let values: Vec<f64> = (0..grid.m()).map(|i| f(grid.node(i))).collect();
        Field::new(values, time)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Precomputed pairwise kernel weights and exterior-tail coefficients.
/// Immutable after construction; the nonlinearity exponent p is applied at
/// evaluation time, so one table serves every p with the same ps.
#[derive(Debug, Clone)]
pub struct KernelTable {
    m: usize,
    h: f64,
    ps: f64,
    weights: Vec<f64>,
    tail: Vec<f64>,
}

impl KernelTable {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn ps(&self) -> f64 {
        self.ps
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.m + j]
    }

    pub fn tail(&self, i: usize) -> f64 {
        self.tail[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tails(&self) -> &[f64] {
        &self.tail
    }
}

/// Builds the dense symmetric weight table and the closed-form exterior
/// tail. O(M^2) construction. Distances are formed from index differences,
/// so the table depends on the interval only through its width.
pub fn build_kernel_table(grid: &GridDomain, params: &FracParams) -> Result<KernelTable> {
    let m = grid.m();
    let h = grid.h();
    let ps = params.ps();
    let expo = 1.0 + ps;
    let mut weights = vec![0.0; m * m];
    // one row of distances serves the whole Toeplitz structure
    let row: Vec<f64> = (0..m)
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                h / (d as f64 * h).powf(expo)
            }
        })
        .collect();
    for i in 0..m {
        for j in 0..m {
            weights[i * m + j] = row[i.abs_diff(j)];
        }
    }
    let tail: Vec<f64> = (0..m)
        .map(|i| {
            let dl = (i as f64 + 0.5) * h;
            let dr = (m as f64 - i as f64 - 0.5) * h;
            (dl.powf(-ps) + dr.powf(-ps)) / ps
        })
        .collect();
    Ok(KernelTable {
        m,
        h,
        ps,
        weights,
        tail,
    })
}

fn check_apply_inputs(u: &Field, table: &KernelTable, params: &FracParams) -> Result<()> {
    if u.len() != table.m {
        return Err(Error::ShapeMismatch {
            expected: table.m,
            got: u.len(),
        });
    }
    if (params.ps() - table.ps).abs() > 1e-14 * (1.0 + table.ps) {
        return Err(Error::InvalidParameter(format!(
            "table built for ps = {}, called with ps = {}",
            table.ps,
            params.ps()
        )));
    }
    Ok(())
}

fn apply_with<Phi: Fn(f64) -> f64>(u: &Field, table: &KernelTable, phi: Phi) -> Vec<f64> {
    let m = table.m;
    let mut out = vec![0.0; m];
    for i in 0..m {
        let ui = u.values[i];
        let mut acc = 0.0;
        for j in 0..m {
            if j != i {
                acc += phi(ui - u.values[j]) * table.weight(i, j);
            }
        }
        out[i] = acc + phi(ui) * table.tail[i];
    }
    out
}

/// Pointwise operator application (Lu)_i; odd in u.
pub fn apply_operator(u: &Field, table: &KernelTable, params: &FracParams) -> Result<Field> {
    check_apply_inputs(u, table, params)?;
    let p = params.p();
    let values = apply_with(u, table, |d| odd_power(d, p));
    Ok(Field {
        values,
        time: u.time,
    })
}

/// Operator application with the regularized odd power (the stepper's
/// linearization target); eps = 0 recovers `apply_operator`.
pub fn apply_operator_reg(
    u: &Field,
    table: &KernelTable,
    params: &FracParams,
    eps: f64,
) -> Result<Field> {
    check_apply_inputs(u, table, params)?;
    let p = params.p();
    let values = apply_with(u, table, |d| odd_power_reg(d, p, eps));
    Ok(Field {
        values,
        time: u.time,
    })
}

fn pairing_with<Phi: Fn(f64) -> f64>(u: &Field, v: &Field, table: &KernelTable, phi: Phi) -> f64 {
    let m = table.m;
    let h = table.h;
    let mut double = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let du = u.values[i] - u.values[j];
            let dv = v.values[i] - v.values[j];
            double += phi(du) * dv * table.weight(i, j);
        }
    }
    // ordered double sum is twice the i<j sum; the pairing halves it
    let mut tail = 0.0;
    for i in 0..m {
        tail += phi(u.values[i]) * v.values[i] * table.tail[i];
    }
    (double + tail) * h
}

/// Energy pairing: half the ordered pairwise sum plus the exterior tail,
/// both weighted by the cell measure h. Satisfies
/// sum_i (Lu)_i v_i h = energy_pairing(u, v) exactly (summation by parts).
pub fn energy_pairing(u: &Field, v: &Field, table: &KernelTable, params: &FracParams) -> Result<f64> {
    check_apply_inputs(u, table, params)?;
    if v.len() != table.m {
        return Err(Error::ShapeMismatch {
            expected: table.m,
            got: v.len(),
        });
    }
    let p = params.p();
    Ok(pairing_with(u, v, table, |d| odd_power(d, p)))
}

/// Energy pairing through the regularized odd power; eps = 0 recovers
/// `energy_pairing`.
pub fn energy_pairing_reg(
    u: &Field,
    v: &Field,
    table: &KernelTable,
    params: &FracParams,
    eps: f64,
) -> Result<f64> {
    check_apply_inputs(u, table, params)?;
    if v.len() != table.m {
        return Err(Error::ShapeMismatch {
            expected: table.m,
            got: v.len(),
        });
    }
    let p = params.p();
    Ok(pairing_with(u, v, table, |d| odd_power_reg(d, p, eps)))
}

/// Interior Gagliardo seminorm
/// [ sum_{i != j} |u_i - u_j|^q h^2 / |x_i - x_j|^(1 + q s1) ]^(1/q).
/// Double sum over Omega x Omega only — no exterior contribution, matching
/// the seminorm convention rather than the energy convention.
pub fn gagliardo_seminorm(u: &Field, grid: &GridDomain, s1: f64, q: f64) -> Result<f64> {
    if !(s1 > 0.0 && s1 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need s1 in (0, 1), got {s1}"
        )));
    }
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!("need q > 0, got {q}")));
    }
    if u.len() != grid.m() {
        return Err(Error::ShapeMismatch {
            expected: grid.m(),
            got: u.len(),
        });
    }
    let m = grid.m();
    let h = grid.h();
    let expo = 1.0 + q * s1;
    // kernel row over index distances, as in the weight table
    let row: Vec<f64> = (0..m)
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                (d as f64 * h).powf(-expo)
            }
        })
        .collect();
    let mut acc = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let du = (u.values[i] - u.values[j]).abs();
            if du > 0.0 {
                acc += du.powf(q) * row[j - i];
            }
        }
    }
    Ok((2.0 * acc * h * h).powf(1.0 / q))
}
