//! Characteristic roots of the two-delay system
//!
//! ```text
//! det(sI - A - B1 e^{-τ1 s} - B2 e^{-τ2 s}) = 0
//! ```
//!
//! The rightmost roots are located in two stages. A Chebyshev collocation of
//! the infinitesimal generator of the delay equation on `[-max τ, 0]` turns
//! the problem into a finite matrix eigenproblem whose rightmost eigenvalues
//! approximate the rightmost characteristic roots; each of those is then
//! polished by complex Newton iteration on the determinant itself, using
//! `d/ds det M(s) = det M(s) · tr(M(s)⁻¹ M'(s))`.

use std::io::{self, Write};

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dde::{simulate, InitialHistory, SimConfig};
use crate::dynamics::DelaySystem;
use crate::error::{Error, Result};
use crate::fmt_g15;
use crate::linalg;

pub type C64 = Complex<f64>;

/// Abscissa half-width of the critical band.
pub const DEFAULT_EPSILON: f64 = 0.02;

/// `det(sI - A - B1 e^{-τ1 s} - B2 e^{-τ2 s})`.
pub fn char_fn(s: C64, sys: &DelaySystem) -> C64 {
    char_matrix(s, sys).lu().determinant()
}

fn char_matrix(s: C64, sys: &DelaySystem) -> DMatrix<C64> {
    let n = sys.dim();
    let e1 = (-s * sys.tau1).exp();
    let e2 = (-s * sys.tau2).exp();
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { s } else { C64::new(0.0, 0.0) };
        diag - sys.a[(i, j)] - e1 * sys.b1[(i, j)] - e2 * sys.b2[(i, j)]
    })
}

fn char_matrix_derivative(s: C64, sys: &DelaySystem) -> DMatrix<C64> {
    let n = sys.dim();
    let e1 = (-s * sys.tau1).exp() * sys.tau1;
    let e2 = (-s * sys.tau2).exp() * sys.tau2;
    DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { 1.0 } else { 0.0 };
        e1 * sys.b1[(i, j)] + e2 * sys.b2[(i, j)] + diag
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicEvaluation {
    pub s: C64,
    pub value: C64,
}

pub fn evaluate(s: C64, sys: &DelaySystem) -> CharacteristicEvaluation {
    CharacteristicEvaluation {
        s,
        value: char_fn(s, sys),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Chebyshev collocation degree (N + 1 nodes).
    pub nodes: usize,
    pub epsilon: f64,
    /// Newton stops once `|char_fn| < newton_tol`.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Number of rightmost spectral estimates handed to Newton.
    pub candidates: usize,
    /// Residual below which a refined root is accepted.
    pub accept_tol: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            nodes: 24,
            epsilon: DEFAULT_EPSILON,
            newton_tol: 1e-10,
            max_newton: 50,
            candidates: 8,
            accept_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityLabel {
    Stable,
    Unstable,
    Critical,
}

impl StabilityLabel {
    pub fn classify(abscissa: f64, epsilon: f64) -> Self {
        if abscissa < -epsilon {
            Self::Stable
        } else if abscissa > epsilon {
            Self::Unstable
        } else {
            Self::Critical
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Unstable => "unstable",
            Self::Critical => "critical",
        }
    }
}

impl std::fmt::Display for StabilityLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    /// Real part of the rightmost root (1/s).
    pub abscissa: f64,
    pub rightmost: C64,
    pub label: StabilityLabel,
    pub epsilon: f64,
    /// `|char_fn(rightmost)|`.
    pub residual: f64,
    /// False when no candidate converged under Newton and the verdict rests
    /// on the raw spectral estimate.
    pub refined: bool,
}

/// Chebyshev extreme points `cos(jπ/N)` and the differentiation matrix.
fn chebyshev(n: usize) -> (Vec<f64>, DMatrix<f64>) {
    let x: Vec<f64> = (0..=n)
        .map(|j| (std::f64::consts::PI * j as f64 / n as f64).cos())
        .collect();
    let c = |i: usize| {
        let base = if i == 0 || i == n { 2.0 } else { 1.0 };
        if i.is_multiple_of(2) { base } else { -base }
    };
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    for i in 0..=n {
        let row_sum: f64 = (0..=n).filter(|j| *j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -row_sum;
    }
    (x, d)
}

/// Barycentric Lagrange weights of the Chebyshev nodes at `target`.
fn lagrange_weights(x: &[f64], target: f64) -> Vec<f64> {
    let n = x.len() - 1;
    if let Some(k) = x.iter().position(|xi| (xi - target).abs() < 1e-14) {
        let mut w = vec![0.0; n + 1];
        w[k] = 1.0;
        return w;
    }
    let bary: Vec<f64> = (0..=n)
        .map(|j| {
            let half = if j == 0 || j == n { 0.5 } else { 1.0 };
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            half * sign / (target - x[j])
        })
        .collect();
    let total: f64 = bary.iter().sum();
    bary.into_iter().map(|b| b / total).collect()
}

/// Collocation matrix of the infinitesimal generator on `N + 1` nodes.
fn generator_matrix(sys: &DelaySystem, nodes: usize) -> DMatrix<f64> {
    let n = sys.dim();
    let tau_max = sys.max_delay();
    let (x, d) = chebyshev(nodes);
    let size = n * (nodes + 1);
    let mut g = DMatrix::zeros(size, size);

    // Boundary row: ė(0) = A e(0) + B1 e(-τ1) + B2 e(-τ2).
    g.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    for (b, tau) in [(&sys.b1, sys.tau1), (&sys.b2, sys.tau2)] {
        let w = lagrange_weights(&x, 1.0 - 2.0 * tau / tau_max);
        for (j, wj) in w.iter().enumerate() {
            if *wj != 0.0 {
                let mut blk = g.view_mut((0, j * n), (n, n));
                blk += b * *wj;
            }
        }
    }
    // Interior rows: derivative of the interpolant, rescaled to [-τ, 0].
    let scale = 2.0 / tau_max;
    for i in 1..=nodes {
        for j in 0..=nodes {
            let v = d[(i, j)] * scale;
            if v != 0.0 {
                for k in 0..n {
                    g[(i * n + k, j * n + k)] = v;
                }
            }
        }
    }
    g
}

/// Approximate characteristic roots from the collocated generator. With no
/// delay these are the exact eigenvalues of `A + B1 + B2`.
pub fn spectral_estimates(sys: &DelaySystem, nodes: usize) -> Vec<C64> {
    if sys.max_delay() == 0.0 {
        linalg::eigenvalues(&sys.zero_delay_matrix())
    } else {
        linalg::eigenvalues(&generator_matrix(sys, nodes.max(2)))
    }
}

/// Complex Newton on `char_fn` from `s0`. Returns the final iterate and its
/// residual.
pub fn newton_refine(sys: &DelaySystem, s0: C64, opts: &RootOptions) -> (C64, f64) {
    let mut s = s0;
    for _ in 0..opts.max_newton {
        let m = char_matrix(s, sys);
        let lu = m.lu();
        let det = lu.determinant();
        if det.norm().is_nan() || det.norm() < opts.newton_tol {
            break;
        }
        let Some(inv) = lu.try_inverse() else {
            break;
        };
        let trace = (inv * char_matrix_derivative(s, sys)).trace();
        if trace.norm() == 0.0 || !trace.re.is_finite() || !trace.im.is_finite() {
            break;
        }
        let step = C64::new(1.0, 0.0) / trace;
        s -= step;
        if step.norm() <= 1e-14 * (1.0 + s.norm()) {
            break;
        }
    }
    (s, char_fn(s, sys).norm())
}

/// Rightmost characteristic root and the resulting stability label.
pub fn rightmost_root(sys: &DelaySystem, opts: &RootOptions) -> Result<StabilityVerdict> {
    let estimates = spectral_estimates(sys, opts.nodes);
    let mut candidates: Vec<C64> = estimates
        .into_iter()
        .filter(|z| z.re.is_finite() && z.im.is_finite() && z.im >= -1e-9)
        .collect();
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no spectral estimates".into()));
    }
    candidates.sort_by(|a, b| b.re.total_cmp(&a.re));
    let raw_best = candidates[0];
    candidates.truncate(opts.candidates.max(1));

    let mut best: Option<(C64, f64)> = None;
    for c in candidates {
        let (root, residual) = newton_refine(sys, c, opts);
        if residual.is_finite() && residual < opts.accept_tol {
            let better = best.is_none_or(|(b, _)| root.re > b.re);
            if better {
                best = Some((root, residual));
            }
        }
    }
    let (root, residual, refined) = match best {
        Some((r, res)) => (r, res, true),
        None => (raw_best, char_fn(raw_best, sys).norm(), false),
    };
    // Report the upper member of a conjugate pair.
    let root = if root.im.abs() < 1e-12 {
        C64::new(root.re, 0.0)
    } else {
        C64::new(root.re, root.im.abs())
    };
    Ok(StabilityVerdict {
        abscissa: root.re,
        rightmost: root,
        label: StabilityLabel::classify(root.re, opts.epsilon),
        epsilon: opts.epsilon,
        residual,
        refined,
    })
}

/// Selectable delay presets applied as `τ1 = τ2 = τ`.
pub const PRESET_DELAYS: [(&str, f64, StabilityLabel); 3] = [
    ("unstable", 0.6, StabilityLabel::Unstable),
    ("stable", 0.8, StabilityLabel::Stable),
    ("critical", 1.035, StabilityLabel::Critical),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PresetVerdict {
    pub name: &'static str,
    pub tau: f64,
    pub verdict: StabilityVerdict,
    /// Log growth rate of the simulated `‖e‖` envelope (1/s).
    pub growth_rate: f64,
    /// Label the preset is named after.
    pub nominal: StabilityLabel,
}

impl PresetVerdict {
    pub fn matches_nominal(&self) -> bool {
        self.verdict.label == self.nominal
    }
}

/// Time-domain oracle settings used by [`classify_presets`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthOracle {
    pub horizon: f64,
    pub dt: f64,
    /// Length of the two envelope windows at the middle and end of the run.
    pub window: f64,
    pub initial: f64,
}

impl Default for GrowthOracle {
    fn default() -> Self {
        Self {
            horizon: 30.0,
            dt: 0.001,
            window: 5.0,
            initial: 0.1,
        }
    }
}

impl GrowthOracle {
    /// Envelope growth rate of a simulated run started from a constant
    /// history with every component equal to `initial`.
    pub fn growth_rate(&self, sys: &DelaySystem) -> Result<f64> {
        let history = InitialHistory::Constant(vec![self.initial; sys.dim()]);
        let mut dt = self.dt;
        for tau in [sys.tau1, sys.tau2] {
            if tau > 0.0 {
                dt = dt.min(tau / 4.0);
            }
        }
        let traj = simulate(sys, &SimConfig::new(self.horizon, history).with_dt(dt))?;
        if traj.diverged() {
            return Ok(f64::INFINITY);
        }
        let envelope = |lo: f64, hi: f64| {
            traj.times
                .iter()
                .zip(traj.states())
                .filter(|(t, _)| **t >= lo && **t <= hi)
                .map(|(_, e)| e.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
        };
        let mid = 0.5 * self.horizon;
        let early = envelope(mid - self.window, mid);
        let late = envelope(self.horizon - self.window, self.horizon);
        if early == 0.0 {
            return Ok(if late == 0.0 { f64::NEG_INFINITY } else { f64::INFINITY });
        }
        Ok((late / early).ln() / (self.horizon - mid))
    }
}

/// Whether a spectral verdict and a simulated growth rate tell the same
/// story. Inside the critical band a slow rate of either sign is accepted.
pub fn consistent(verdict: &StabilityVerdict, growth_rate: f64) -> bool {
    let same_sign = (verdict.abscissa > 0.0) == (growth_rate > 0.0);
    same_sign || (verdict.label == StabilityLabel::Critical && growth_rate.abs() < 2.5 * verdict.epsilon)
}

/// Verdicts for the three presets on the diagonal `τ1 = τ2`, each checked
/// against the time-domain oracle.
pub fn classify_presets(
    sys: &DelaySystem,
    opts: &RootOptions,
    oracle: &GrowthOracle,
) -> Result<Vec<PresetVerdict>> {
    PRESET_DELAYS
        .iter()
        .map(|&(name, tau, nominal)| {
            let at = sys.with_delays(tau, tau)?;
            let verdict = rightmost_root(&at, opts)?;
            let growth_rate = oracle.growth_rate(&at)?;
            if !consistent(&verdict, growth_rate) {
                return Err(Error::Inconsistent(format!(
                    "preset {name} (τ = {tau}): abscissa {:.6} but envelope growth {:.6}",
                    verdict.abscissa, growth_rate
                )));
            }
            Ok(PresetVerdict {
                name,
                tau,
                verdict,
                growth_rate,
                nominal,
            })
        })
        .collect()
}

/// Verdict grid over the delay plane; `verdicts[i * tau2.len() + j]`
/// belongs to `(tau1[i], tau2[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMap {
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    pub verdicts: Vec<StabilityVerdict>,
}

impl StabilityMap {
    pub fn get(&self, i: usize, j: usize) -> &StabilityVerdict {
        &self.verdicts[i * self.tau2.len() + j]
    }

    /// `tau1,tau2,abscissa,label`, rows ordered by τ1 then τ2.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "tau1,tau2,abscissa,label")?;
        for (i, t1) in self.tau1.iter().enumerate() {
            for (j, t2) in self.tau2.iter().enumerate() {
                let v = self.get(i, j);
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_g15(*t1),
                    fmt_g15(*t2),
                    fmt_g15(v.abscissa),
                    v.label
                )?;
            }
        }
        Ok(())
    }

    /// Consecutive diagonal grid points `(τ_a, τ_b)` between which the
    /// abscissa changes sign. Requires identical τ1 and τ2 grids.
    pub fn diagonal_crossings(&self) -> Vec<(f64, f64)> {
        if self.tau1 != self.tau2 {
            return Vec::new();
        }
        let diag: Vec<f64> = (0..self.tau1.len()).map(|i| self.get(i, i).abscissa).collect();
        (1..diag.len())
            .filter(|&i| (diag[i - 1] < 0.0) != (diag[i] < 0.0))
            .map(|i| (self.tau1[i - 1], self.tau1[i]))
            .collect()
    }

    /// Sign changes of the abscissa along τ1 for the τ2 column `j`.
    pub fn crossings_along_tau1(&self, j: usize) -> Vec<(f64, f64)> {
        let col: Vec<f64> = (0..self.tau1.len()).map(|i| self.get(i, j).abscissa).collect();
        (1..col.len())
            .filter(|&i| (col[i - 1] < 0.0) != (col[i] < 0.0))
            .map(|i| (self.tau1[i - 1], self.tau1[i]))
            .collect()
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Rightmost-root verdicts for the matrices of `sys` over a grid of delay
/// pairs. Cells are evaluated in parallel; the result does not depend on the
/// evaluation order.
pub fn stability_map(
    sys: &DelaySystem,
    tau1_range: (f64, f64),
    tau2_range: (f64, f64),
    n1: usize,
    n2: usize,
    opts: &RootOptions,
) -> Result<StabilityMap> {
    if n1 < 2 || n2 < 2 {
        return Err(Error::InvalidParameter("map needs at least 2 points per axis".into()));
    }
    for (lo, hi) in [tau1_range, tau2_range] {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo) {
            return Err(Error::InvalidParameter(format!(
                "delay range [{lo}, {hi}] must be non-negative and ascending"
            )));
        }
    }
    let tau1 = linspace(tau1_range.0, tau1_range.1, n1);
    let tau2 = linspace(tau2_range.0, tau2_range.1, n2);
    let cells: Vec<(f64, f64)> = tau1
        .iter()
        .flat_map(|a| tau2.iter().map(move |b| (*a, *b)))
        .collect();
    let verdicts = cells
        .par_iter()
        .map(|&(a, b)| rightmost_root(&sys.with_delays(a, b)?, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityMap {
        tau1,
        tau2,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::benchmarks;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn char_fn_of_diagonal_system_at_origin() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -2.0, -3.0, -4.0]));
        let z = DMatrix::zeros(4, 4);
        let sys = DelaySystem::new(a, z.clone(), z, 0.3, 0.7).unwrap();
        let v = char_fn(C64::new(0.0, 0.0), &sys);
        assert_abs_diff_eq!(v.re, 24.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn char_fn_vanishes_at_hayes_root() {
        let sys = benchmarks::scalar_hayes(PI / 2.0);
        let v = char_fn(C64::new(0.0, 1.0), &sys);
        assert!(v.norm() < 1e-15, "{v}");
    }

    #[test]
    fn lagrange_weights_are_exact_at_nodes_and_partition_unity() {
        let (x, _) = chebyshev(12);
        let w = lagrange_weights(&x, x[3]);
        assert_eq!(w[3], 1.0);
        assert_eq!(w.iter().filter(|v| **v == 0.0).count(), 12);
        let w = lagrange_weights(&x, 0.123);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        // Reproduces a cubic.
        let f = |t: f64| t * t * t - 2.0 * t;
        let interp: f64 = w.iter().zip(&x).map(|(wi, xi)| wi * f(*xi)).sum();
        assert_abs_diff_eq!(interp, f(0.123), epsilon = 1e-13);
    }

    #[test]
    fn chebyshev_differentiates_polynomials() {
        let (x, d) = chebyshev(10);
        let f = nalgebra::DVector::from_iterator(11, x.iter().map(|t| t.powi(4)));
        let df = d * f;
        for (i, t) in x.iter().enumerate() {
            assert_abs_diff_eq!(df[i], 4.0 * t.powi(3), epsilon = 1e-11);
        }
    }

    #[test]
    fn labels() {
        assert_eq!(StabilityLabel::classify(-0.5, 0.02), StabilityLabel::Stable);
        assert_eq!(StabilityLabel::classify(0.5, 0.02), StabilityLabel::Unstable);
        assert_eq!(StabilityLabel::classify(0.01, 0.02), StabilityLabel::Critical);
        assert_eq!(StabilityLabel::classify(-0.02, 0.02), StabilityLabel::Critical);
    }

    #[test]
    fn map_rejects_degenerate_grids() {
        let sys = benchmarks::scalar_hayes(0.0);
        let o = RootOptions::default();
        assert!(stability_map(&sys, (0.0, 1.0), (0.0, 1.0), 1, 3, &o).is_err());
        assert!(stability_map(&sys, (-1.0, 1.0), (0.0, 1.0), 3, 3, &o).is_err());
    }
}
