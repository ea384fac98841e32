//! Time integration of the projected L1-descent flow `dM/dt = -π(∇)`.
//!
//! The default integrator is classical fixed-step RK4, which makes runs
//! bit-reproducible. An adaptive mode with step-doubling error control is
//! available for stiff late-stage convergence; it honours `abs_tol` and
//! `rel_tol` from the configuration.
//!
//! Stopping rules, evaluated in order at every check point:
//!
//! 1. the recorded L1 loss exceeded the previous recorded loss
//!    (or the running minimum, if configured),
//! 2. the iterate drifted off the orthogonal manifold beyond `epsilon`,
//! 3. the integrated time reached the budget.
//!
//! Whatever the stop reason, the returned map is the accepted iterate with
//! the smallest recorded loss, never a drifted or worse one.

use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::procrustes::{l1_gradient, l1_loss, orthogonality_error, tangent_project, AlignedPairMatrices, OrthogonalMap};

/// How the flow is advanced in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMode {
    /// Classical RK4 with the fixed step `dt`.
    FixedRk4,
    /// RK4 with step-doubling error estimation; `dt` is the initial step.
    AdaptiveRk4,
}

/// Solver knobs. The defaults are the reference configuration this crate
/// is calibrated for: `alpha = 1e8`, `epsilon = 1e-5`, `dt = 1e-6`, a
/// total time budget of `5e-3`, and tolerances `1e-7`/`1e-5`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Smoothing coefficient of the tanh surrogate.
    pub alpha: f64,
    /// Orthogonality-drift threshold for stopping rule (2).
    pub epsilon: f64,
    /// Integration step (initial step in adaptive mode).
    pub dt: f64,
    /// Total integration time cap.
    pub t_budget: f64,
    /// Absolute tolerance (adaptive mode).
    pub abs_tol: f64,
    /// Relative tolerance (adaptive mode).
    pub rel_tol: f64,
    /// Advisory maximum order for adaptive integrators; recorded, unused
    /// by the shipped RK4 schemes.
    pub max_order: usize,
    /// Steps between stopping-criteria checks.
    pub loss_check_stride: usize,
    /// Compare against the running-minimum loss instead of the
    /// immediately-previous one in stopping rule (1).
    pub compare_to_running_min: bool,
    pub mode: IntegratorMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1e8,
            epsilon: 1e-5,
            dt: 1e-6,
            t_budget: 5e-3,
            abs_tol: 1e-7,
            rel_tol: 1e-5,
            max_order: 15,
            loss_check_stride: 1,
            compare_to_running_min: false,
            mode: IntegratorMode::FixedRk4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 6] = [
            ("alpha", self.alpha),
            ("epsilon", self.epsilon),
            ("dt", self.dt),
            ("t_budget", self.t_budget),
            ("abs_tol", self.abs_tol),
            ("rel_tol", self.rel_tol),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    msg: format!("must be finite and positive, got {value}"),
                });
            }
        }
        if self.dt > self.t_budget {
            return Err(Error::InvalidParameter {
                name: "dt",
                msg: format!("step {} exceeds time budget {}", self.dt, self.t_budget),
            });
        }
        if self.loss_check_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "loss_check_stride",
                msg: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// Why the integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LossIncreased,
    OrthoDrift,
    BudgetExhausted,
}

/// Bookkeeping for one solver run. Serializes to the report JSON schema
/// `{stop_reason, steps_taken, final_ortho_error, wall_time_s, loss_trace}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementReport {
    pub stop_reason: StopReason,
    pub steps_taken: usize,
    /// `max|MᵀM - I|` of the returned map.
    pub final_ortho_error: f64,
    pub wall_time_s: f64,
    /// `(t, l1_loss)` at every check point, starting at `t = 0`.
    pub loss_trace: Vec<(f64, f64)>,
}

/// One accepted iterate, as passed to a flow observer.
pub struct FlowSample<'a> {
    pub t: f64,
    pub map: ArrayView2<'a, f64>,
    pub loss: f64,
    pub ortho_error: f64,
}

/// Integrates the projected descent flow from `m0`.
///
/// `m0` must be orthogonal within `cfg.epsilon`. Returns the best accepted
/// iterate together with the run report.
pub fn integrate_l1_flow(
    pairs: &AlignedPairMatrices,
    m0: &OrthogonalMap,
    cfg: &SolverConfig,
) -> Result<(OrthogonalMap, RefinementReport)> {
    integrate_l1_flow_observed(pairs, m0, cfg, |_| {})
}

/// Same as [`integrate_l1_flow`], invoking `observer` on every accepted
/// iterate (including the initial one).
pub fn integrate_l1_flow_observed(
    pairs: &AlignedPairMatrices,
    m0: &OrthogonalMap,
    cfg: &SolverConfig,
    mut observer: impl FnMut(FlowSample<'_>),
) -> Result<(OrthogonalMap, RefinementReport)> {
    cfg.validate()?;
    if m0.dim() != pairs.dim() {
        return Err(Error::DimensionMismatch { left: m0.dim(), right: pairs.dim() });
    }
    if m0.ortho_error() > cfg.epsilon {
        return Err(Error::NotOrthogonal { error: m0.ortho_error(), epsilon: cfg.epsilon });
    }

    let start = Instant::now();
    let mut state = RunState::new(pairs, m0, cfg);
    observer(FlowSample {
        t: 0.0,
        map: state.current.view(),
        loss: state.best_loss,
        ortho_error: m0.ortho_error(),
    });

    let stop_reason = match cfg.mode {
        IntegratorMode::FixedRk4 => run_fixed(pairs, cfg, &mut state, &mut observer)?,
        IntegratorMode::AdaptiveRk4 => run_adaptive(pairs, cfg, &mut state, &mut observer)?,
    };

    let final_ortho_error = orthogonality_error(state.best.view());
    let report = RefinementReport {
        stop_reason,
        steps_taken: state.steps_taken,
        final_ortho_error,
        wall_time_s: start.elapsed().as_secs_f64(),
        loss_trace: state.trace,
    };
    let map = OrthogonalMap::from_matrix(state.best)?;
    Ok((map, report))
}

/// Shared bookkeeping between the two integrators.
struct RunState {
    current: Array2<f64>,
    best: Array2<f64>,
    best_loss: f64,
    prev_loss: f64,
    trace: Vec<(f64, f64)>,
    steps_taken: usize,
}

impl RunState {
    fn new(pairs: &AlignedPairMatrices, m0: &OrthogonalMap, _cfg: &SolverConfig) -> Self {
        let current = m0.matrix().to_owned();
        let loss0 = l1_loss(pairs, current.view());
        Self {
            best: current.clone(),
            current,
            best_loss: loss0,
            prev_loss: loss0,
            trace: vec![(0.0, loss0)],
            steps_taken: 0,
        }
    }

    /// Records a check point and applies the stopping rules in order.
    /// Returns `Some(reason)` when the run must stop.
    fn check(
        &mut self,
        pairs: &AlignedPairMatrices,
        cfg: &SolverConfig,
        t: f64,
        at_budget: bool,
        observer: &mut impl FnMut(FlowSample<'_>),
    ) -> Option<StopReason> {
        let loss = l1_loss(pairs, self.current.view());
        self.trace.push((t, loss));
        let reference = if cfg.compare_to_running_min { self.best_loss } else { self.prev_loss };
        if loss > reference {
            return Some(StopReason::LossIncreased);
        }
        self.prev_loss = loss;
        let ortho = orthogonality_error(self.current.view());
        if ortho > cfg.epsilon {
            return Some(StopReason::OrthoDrift);
        }
        observer(FlowSample { t, map: self.current.view(), loss, ortho_error: ortho });
        if loss <= self.best_loss {
            self.best_loss = loss;
            self.best.assign(&self.current);
        }
        at_budget.then_some(StopReason::BudgetExhausted)
    }
}

fn run_fixed(
    pairs: &AlignedPairMatrices,
    cfg: &SolverConfig,
    state: &mut RunState,
    observer: &mut impl FnMut(FlowSample<'_>),
) -> Result<StopReason> {
    // Slack keeps t_budget/dt from rounding up an extra step.
    let max_steps = ((cfg.t_budget / cfg.dt - 1e-9).ceil() as usize).max(1);
    for step in 1..=max_steps {
        rk4_step(pairs, &mut state.current, cfg.dt, cfg.alpha);
        ensure_finite(state.current.view(), step)?;
        state.steps_taken = step;
        let at_budget = step == max_steps;
        if step % cfg.loss_check_stride == 0 || at_budget {
            let t = step as f64 * cfg.dt;
            if let Some(reason) = state.check(pairs, cfg, t, at_budget, observer) {
                return Ok(reason);
            }
        }
    }
    Ok(StopReason::BudgetExhausted)
}

fn run_adaptive(
    pairs: &AlignedPairMatrices,
    cfg: &SolverConfig,
    state: &mut RunState,
    observer: &mut impl FnMut(FlowSample<'_>),
) -> Result<StopReason> {
    let h_min = cfg.dt * 1e-9;
    let mut h = cfg.dt;
    let mut t = 0.0;
    let mut accepted = 0usize;
    loop {
        h = h.min(cfg.t_budget - t);
        // One full step against two half steps.
        let mut full = state.current.clone();
        rk4_step(pairs, &mut full, h, cfg.alpha);
        let mut halved = state.current.clone();
        rk4_step(pairs, &mut halved, h * 0.5, cfg.alpha);
        rk4_step(pairs, &mut halved, h * 0.5, cfg.alpha);

        let step_no = accepted + 1;
        ensure_finite(full.view(), step_no)?;
        ensure_finite(halved.view(), step_no)?;

        let diff = &full - &halved;
        let err = crate::linalg::max_abs(diff.view());
        let tol = cfg.abs_tol + cfg.rel_tol * crate::linalg::max_abs(halved.view());

        if err <= tol {
            state.current = halved;
            t += h;
            accepted += 1;
            state.steps_taken = accepted;
            let at_budget = t >= cfg.t_budget * (1.0 - 1e-12);
            if accepted.is_multiple_of(cfg.loss_check_stride) || at_budget {
                if let Some(reason) = state.check(pairs, cfg, t, at_budget, observer) {
                    return Ok(reason);
                }
            }
            let grow = 0.9 * (tol / err.max(1e-300)).powf(0.2);
            h *= grow.clamp(1.0, 5.0);
        } else {
            let shrink = 0.9 * (tol / err).powf(0.2);
            h *= shrink.clamp(0.2, 0.9);
            if h < h_min {
                return Err(Error::Numerical {
                    step: step_no,
                    msg: format!("adaptive step collapsed below {h_min:.3e}"),
                });
            }
        }
    }
}

/// One classical RK4 step of `dM/dt = -π(∇)` in place.
fn rk4_step(pairs: &AlignedPairMatrices, m: &mut Array2<f64>, h: f64, alpha: f64) {
    let field = |m: &Array2<f64>| -> Array2<f64> {
        let g = l1_gradient(pairs, m.view(), alpha);
        -tangent_project(m.view(), g.view())
    };
    let k1 = field(m);
    let k2 = field(&(&*m + &(&k1 * (h * 0.5))));
    let k3 = field(&(&*m + &(&k2 * (h * 0.5))));
    let k4 = field(&(&*m + &(&k3 * h)));
    *m += &((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
}

fn ensure_finite(m: ArrayView2<'_, f64>, step: usize) -> Result<()> {
    if crate::linalg::all_finite(m) {
        Ok(())
    } else {
        Err(Error::Numerical { step, msg: "iterate contains non-finite entries".into() })
    }
}
