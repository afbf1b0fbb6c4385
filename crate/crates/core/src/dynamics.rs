//! Pursuer plant, LQR synthesis and the two-delay error dynamics.
//!
//! The pursuer is a damped point mass on the plane. Its state is ordered
//! `[x, ẋ, y, ẏ]` and the two input channels are the x and y forces. The
//! tracking error `e = z_p - z_e` obeys the same plant matrices, and once the
//! full-state feedback `u = -k·e` is split by sensing delay the closed loop
//! becomes
//!
//! ```text
//! ė(t) = A e(t) + B1 e(t - τ1) + B2 e(t - τ2)
//! ```
//!
//! where `B1` carries the position gains and `B2` the velocity gains.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
pub use crate::riccati::solve_care;

/// Mass and viscous damping of the pursuer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// kg
    pub m: f64,
    /// N·s/m
    pub c: f64,
}

impl PlantParams {
    pub fn new(m: f64, c: f64) -> Result<Self> {
        let p = Self { m, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mass must be positive and finite, got {}",
                self.m
            )));
        }
        if !(self.c.is_finite() && self.c >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must be non-negative and finite, got {}",
                self.c
            )));
        }
        Ok(())
    }
}

impl Default for PlantParams {
    /// Unit mass with heavy damping. Together with [`LqrWeights::default`]
    /// this keeps the equal-delay loop stable at 0.8 s and puts the loss of
    /// stability close to 1.035 s.
    fn default() -> Self {
        Self { m: 1.0, c: 28.0 }
    }
}

/// Planar position/velocity state of one agent, ordered `[x, ẋ, y, ẏ]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub vx: f64,
    pub y: f64,
    pub vy: f64,
}

impl AgentState {
    pub const fn new(x: f64, vx: f64, y: f64, vy: f64) -> Self {
        Self { x, vx, y, vy }
    }

    pub const fn at_rest(x: f64, y: f64) -> Self {
        Self::new(x, 0.0, y, 0.0)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.vx, self.y, self.vy]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Tracking error `e = z_p - z_e`, same ordering as [`AgentState`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorState(pub [f64; 4]);

impl ErrorState {
    pub fn between(pursuer: &AgentState, evader: &AgentState) -> Self {
        let p = pursuer.to_array();
        let e = evader.to_array();
        Self([p[0] - e[0], p[1] - e[1], p[2] - e[2], p[3] - e[3]])
    }

    pub fn position(&self) -> [f64; 2] {
        [self.0[0], self.0[2]]
    }

    pub fn position_norm(&self) -> f64 {
        self.0[0].hypot(self.0[2])
    }
}

/// Continuous-time state-space pair `(A, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Builds the decoupled planar point-mass plant.
///
/// The position rows carry a plain 1 (ẋ = ẋ); the mass only scales the
/// force input and the damping term.
pub fn build_plant(params: &PlantParams) -> Result<StateMatrices> {
    params.validate()?;
    let PlantParams { m, c } = *params;
    let mut a = DMatrix::zeros(4, 4);
    a[(0, 1)] = 1.0;
    a[(1, 1)] = -c / m;
    a[(2, 3)] = 1.0;
    a[(3, 3)] = -c / m;
    let mut b = DMatrix::zeros(4, 2);
    b[(1, 0)] = 1.0 / m;
    b[(3, 1)] = 1.0 / m;
    Ok(StateMatrices { a, b })
}

/// State and input weights of the quadratic cost.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

/// Control-effort weight used by [`LqrWeights::default`]. With `Q = I` it
/// yields a position gain of 40 N/m, so a 1 N step force leaves a 25 mm
/// steady-state offset.
pub const DEFAULT_EFFORT_WEIGHT: f64 = 6.25e-4;

impl LqrWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(Error::Dimension("Q and R must be square".into()));
        }
        if !linalg::all_finite(&q) || !linalg::all_finite(&r) {
            return Err(Error::InvalidParameter("Q and R must be finite".into()));
        }
        let sym_tol = |m: &DMatrix<f64>| 1e-12 * (1.0 + m.amax());
        if !linalg::is_symmetric(&q, sym_tol(&q)) {
            return Err(Error::InvalidParameter("Q is not symmetric".into()));
        }
        if !linalg::is_symmetric(&r, sym_tol(&r)) {
            return Err(Error::InvalidParameter("R is not symmetric".into()));
        }
        let q = linalg::symmetrize(&q);
        let r = linalg::symmetrize(&r);
        let q_min = q.symmetric_eigenvalues().min();
        if q_min < -1e-12 {
            return Err(Error::InvalidParameter(format!(
                "Q is not positive semidefinite (eigenvalue {q_min:e})"
            )));
        }
        let r_min = r.symmetric_eigenvalues().min();
        if r_min <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "R is not positive definite (eigenvalue {r_min:e})"
            )));
        }
        Ok(Self { q, r })
    }

    /// `Q = I_n`, `R = I_m`.
    pub fn identity(states: usize, inputs: usize) -> Self {
        Self {
            q: DMatrix::identity(states, states),
            r: DMatrix::identity(inputs, inputs),
        }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            q: DMatrix::identity(4, 4),
            r: DMatrix::identity(2, 2) * DEFAULT_EFFORT_WEIGHT,
        }
    }
}

/// Full-state feedback gain, control law `u = -k·e`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    pub k: DMatrix<f64>,
}

impl GainMatrix {
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        if !linalg::all_finite(&k) {
            return Err(Error::InvalidParameter("gain matrix is not finite".into()));
        }
        Ok(Self { k })
    }
}

/// LQR gain `k = R⁻¹ Bᵀ P` from the stabilizing Riccati solution.
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &LqrWeights) -> Result<GainMatrix> {
    let p = solve_care(a, b, w)?;
    let rhs = b.transpose() * &p;
    let k = w
        .r()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("R is not positive definite".into()))?
        .solve(&rhs);
    let abscissa = linalg::spectral_abscissa(&(a - b * &k));
    if abscissa.is_nan() || abscissa >= 0.0 {
        return Err(Error::NotHurwitz(abscissa));
    }
    GainMatrix::new(k)
}

/// How the feedback gain is distributed over the two delayed channels.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitMode {
    /// Position gains act on `e(t - τ1)`, velocity gains on `e(t - τ2)`;
    /// cross-axis gain entries are dropped.
    PositionVelocity,
    /// Delay matrices supplied verbatim.
    Custom { b1: DMatrix<f64>, b2: DMatrix<f64> },
}

/// Linear system with two discrete state delays,
/// `ė = A e(t) + B1 e(t - τ1) + B2 e(t - τ2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySystem {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub tau1: f64,
    pub tau2: f64,
}

impl DelaySystem {
    pub fn new(
        a: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        tau1: f64,
        tau2: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        for (name, m) in [("B1", &b1), ("B2", &b2)] {
            if m.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "{name} must be {n}x{n}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        for (name, m) in [("A", &a), ("B1", &b1), ("B2", &b2)] {
            if !linalg::all_finite(m) {
                return Err(Error::InvalidParameter(format!("{name} has non-finite entries")));
            }
        }
        validate_delay(tau1)?;
        validate_delay(tau2)?;
        Ok(Self {
            a,
            b1,
            b2,
            tau1,
            tau2,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn max_delay(&self) -> f64 {
        self.tau1.max(self.tau2)
    }

    /// Same matrices with a different delay pair.
    pub fn with_delays(&self, tau1: f64, tau2: f64) -> Result<Self> {
        validate_delay(tau1)?;
        validate_delay(tau2)?;
        Ok(Self {
            tau1,
            tau2,
            ..self.clone()
        })
    }

    /// `A + B1 + B2`, the dynamics when both delays vanish.
    pub fn zero_delay_matrix(&self) -> DMatrix<f64> {
        &self.a + &self.b1 + &self.b2
    }
}

pub fn zero_delay_matrix(sys: &DelaySystem) -> DMatrix<f64> {
    sys.zero_delay_matrix()
}

pub(crate) fn validate_delay(tau: f64) -> Result<()> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "delays must be finite and non-negative, got {tau}"
        )))
    }
}

/// Distributes `k` over the delayed channels. Delays start at zero; use
/// [`DelaySystem::with_delays`] to set them.
///
/// For the position/velocity split the entries are taken from `B·k`, so with
/// zero cross-axis gains `A + B1 + B2 = A - B·k` exactly. For unit mass
/// these are the raw gains `-k11, -k23` (position) and `-k12, -k24`
/// (velocity).
pub fn assemble_delay_system(
    plant: &StateMatrices,
    k: &GainMatrix,
    split: &SplitMode,
) -> Result<DelaySystem> {
    match split {
        SplitMode::PositionVelocity => {
            if plant.a.shape() != (4, 4) || plant.b.shape() != (4, 2) || k.k.shape() != (2, 4) {
                return Err(Error::Dimension(
                    "position/velocity split needs a 4-state, 2-input plant and a 2x4 gain".into(),
                ));
            }
            let bk = &plant.b * &k.k;
            let mut b1 = DMatrix::zeros(4, 4);
            let mut b2 = DMatrix::zeros(4, 4);
            b1[(1, 0)] = -bk[(1, 0)];
            b1[(3, 2)] = -bk[(3, 2)];
            b2[(1, 1)] = -bk[(1, 1)];
            b2[(3, 3)] = -bk[(3, 3)];
            DelaySystem::new(plant.a.clone(), b1, b2, 0.0, 0.0)
        }
        SplitMode::Custom { b1, b2 } => {
            DelaySystem::new(plant.a.clone(), b1.clone(), b2.clone(), 0.0, 0.0)
        }
    }
}

/// Built-in benchmark instances.
pub mod benchmarks {
    use nalgebra::DMatrix;

    use super::DelaySystem;

    /// Identifier of the printed error-dynamics benchmark.
    pub const FIG9: &str = "fig9";
    /// Identifier of the scalar test equation `ẋ = -x(t - τ)`.
    pub const SCALAR: &str = "scalar";

    pub fn fig9_a() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                -305.0, -279.0, -1.0, 1.0, //
                0.0, 0.0, 0.0, 1.0, //
                -1.0, 1.0, -40.0, -2.0,
            ],
        )
    }

    pub fn fig9_b1() -> DMatrix<f64> {
        let mut b1 = DMatrix::zeros(4, 4);
        b1.row_mut(1)
            .copy_from_slice(&[-14.514, -1.285, 22.941, -0.283]);
        b1
    }

    pub fn fig9_b2() -> DMatrix<f64> {
        let mut b2 = DMatrix::zeros(4, 4);
        b2.row_mut(3).copy_from_slice(&[-14.0, -1.0, 23.0, -0.283]);
        b2
    }

    /// The printed error dynamics with both delays set to zero.
    pub fn fig9() -> DelaySystem {
        DelaySystem {
            a: fig9_a(),
            b1: fig9_b1(),
            b2: fig9_b2(),
            tau1: 0.0,
            tau2: 0.0,
        }
    }

    /// Scalar `ẋ = -x(t - τ)`.
    pub fn scalar_hayes(tau: f64) -> DelaySystem {
        DelaySystem {
            a: DMatrix::zeros(1, 1),
            b1: DMatrix::from_element(1, 1, -1.0),
            b2: DMatrix::zeros(1, 1),
            tau1: tau,
            tau2: 0.0,
        }
    }

    pub fn by_id(id: &str) -> Option<DelaySystem> {
        match id {
            FIG9 => Some(fig9()),
            SCALAR => Some(scalar_hayes(0.0)),
            _ => None,
        }
    }
}
