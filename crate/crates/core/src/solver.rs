//! ADMM loop for low-tubal-rank completion with quadratic-variation smoothing.
//!
//! One iteration, in order:
//!
//! 1. `ρ ← min(growth·ρ, ρ_max)`
//! 2. `X ← SVT_{1/ρ}(Q(Z) − T/ρ)` slice-wise in the `Φ` domain
//! 3. `Z ← smooth(Q⁻¹(X + T/ρ))`, then observed entries reset to `Y`
//! 4. `T ← T + ρ (X − Q(Z))`
//! 5. every `phi_refresh_period` completed iterations, `Φ` is refitted to
//!    `Q(Z) − T/ρ` (data-driven transforms only)
//!
//! The loop stops once `‖X̂ₗ₊₁ − X̂ₗ‖²_F / ‖P_Ω(Y)‖²_F < ε` with
//! `X̂ = Q⁻¹(X)`, or after `max_iters` iterations.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proximal::{tensor_svt_with_reports, SvtReport};
use crate::smoothing::{build_system, quadratic_variation, solve_smoothing, SmoothingSystem};
use crate::tensor::{
    matricize, overwrite_observed_in_place, project, tensorize, ObservationMask,
    SpatioTemporalMatrix, Tensor3, TensorDims,
};
use crate::transform::{build_transform, dct_matrix, fit_data_driven, TransformKind, TransformMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rho0: f64,
    pub rho_max: f64,
    pub rho_growth: f64,
    /// `λ = lambda_coef · ρ`; zero disables smoothing.
    pub lambda_coef: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Refit cadence for data-driven `Φ`; zero never refits.
    pub phi_refresh_period: usize,
    pub transform: TransformKind,
    pub seed: u64,
}

impl SolverConfig {
    /// Defaults with the given initial `ρ` and `ρ_max = 1e5 · ρ₀`.
    pub fn with_rho0(rho0: f64) -> Self {
        Self {
            rho0,
            rho_max: 1e5 * rho0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rho0", self.rho0)?;
        positive("rho_max", self.rho_max)?;
        positive("epsilon", self.epsilon)?;
        if self.rho0 > self.rho_max {
            return Err(Error::InvalidParameter(format!(
                "rho0 ({}) exceeds rho_max ({})",
                self.rho0, self.rho_max
            )));
        }
        if !(self.rho_growth >= 1.0) || !self.rho_growth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rho_growth must be at least 1, got {}",
                self.rho_growth
            )));
        }
        if !(self.lambda_coef >= 0.0) || !self.lambda_coef.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda_coef must be nonnegative, got {}",
                self.lambda_coef
            )));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho0: 1e-3,
            rho_max: 1e2,
            rho_growth: 1.05,
            lambda_coef: 1e-3,
            epsilon: 1e-3,
            max_iters: 200,
            phi_refresh_period: 10,
            transform: TransformKind::DataDriven,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Tensor3,
    pub z: SpatioTemporalMatrix,
    pub dual: Tensor3,
    pub rho: f64,
    pub phi: TransformMatrix,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub rho: f64,
    pub metric: f64,
    /// Sum over slices of the thresholded singular values.
    pub nuclear_norm: f64,
    pub quadratic_variation: f64,
    pub ranks: Vec<usize>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_metric(&self) -> Option<f64> {
        self.records.last().map(|r| r.metric)
    }

    /// Delimited text: a `# converged=… iterations=…` line, a header, then
    /// one line per iteration. `ranks` is `;`-separated per slice.
    pub fn to_delimited(&self) -> String {
        let mut out = format!(
            "# converged={} iterations={}\n",
            self.converged,
            self.iterations()
        );
        out.push_str("iteration,rho,metric,nuclear_norm,quadratic_variation,ranks,wall_secs\n");
        for r in &self.records {
            let ranks: Vec<String> = r.ranks.iter().map(usize::to_string).collect();
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{},{:.6}\n",
                r.iteration,
                r.rho,
                r.metric,
                r.nuclear_norm,
                r.quadratic_variation,
                ranks.join(";"),
                r.wall_secs
            ));
        }
        out
    }
}

fn check_inputs(y: &SpatioTemporalMatrix, mask: &ObservationMask, dims: TensorDims) -> Result<()> {
    let shape = (dims.sensors(), dims.total_time());
    if y.shape() != shape {
        return Err(Error::ShapeMismatch {
            expected: shape,
            actual: y.shape(),
        });
    }
    if mask.shape() != shape {
        return Err(Error::ShapeMismatch {
            expected: shape,
            actual: mask.shape(),
        });
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if mask.iter().any(|(r, c)| !y.get(r, c).is_finite()) {
        return Err(Error::InvalidParameter(
            "observed entries must be finite".into(),
        ));
    }
    Ok(())
}

pub fn initialize(
    y: &SpatioTemporalMatrix,
    mask: &ObservationMask,
    dims: TensorDims,
    config: &SolverConfig,
) -> Result<SolverState> {
    config.validate()?;
    check_inputs(y, mask, dims)?;
    let z = project(y, mask)?;
    if z.frobenius_norm() == 0.0 {
        return Err(Error::InvalidParameter(
            "observed entries are all zero; the convergence ratio is undefined".into(),
        ));
    }
    let qz = tensorize(&z, dims)?;
    let phi = match config.transform {
        TransformKind::DataDriven => fit_data_driven(&qz)?,
        TransformKind::Dct => dct_matrix(dims.days())?,
        TransformKind::Identity => TransformMatrix::identity(dims.days()),
    };
    Ok(SolverState {
        x: qz,
        z,
        dual: Tensor3::zeros(dims),
        rho: config.rho0,
        phi,
        iteration: 0,
    })
}

/// `SVT_{1/ρ}(Q(Z) − T/ρ)` under the current `Φ`.
pub fn update_x(state: &SolverState) -> Result<Tensor3> {
    update_x_with_reports(state).map(|(x, _)| x)
}

pub fn update_x_with_reports(state: &SolverState) -> Result<(Tensor3, Vec<SvtReport>)> {
    let qz = tensorize(&state.z, state.x.dims())?;
    let target = qz.axpy(-1.0 / state.rho, &state.dual)?;
    tensor_svt_with_reports(&target, &state.phi, 1.0 / state.rho)
}

/// Z-update using `state.x` (already updated) and the previous dual.
pub fn update_z(
    state: &SolverState,
    y: &SpatioTemporalMatrix,
    mask: &ObservationMask,
    config: &SolverConfig,
) -> Result<SpatioTemporalMatrix> {
    let system = smoothing_system(state.z.cols(), config)?;
    update_z_with(state, y, mask, system.as_ref())
}

fn smoothing_system(t: usize, config: &SolverConfig) -> Result<Option<SmoothingSystem>> {
    if config.lambda_coef == 0.0 {
        Ok(None)
    } else {
        // α = ρ/λ = 1/c does not depend on ρ.
        build_system(t, 1.0 / config.lambda_coef).map(Some)
    }
}

fn update_z_with(
    state: &SolverState,
    y: &SpatioTemporalMatrix,
    mask: &ObservationMask,
    system: Option<&SmoothingSystem>,
) -> Result<SpatioTemporalMatrix> {
    let target = matricize(&state.x.axpy(1.0 / state.rho, &state.dual)?);
    let mut z = match system {
        Some(sys) => solve_smoothing(&target, sys)?,
        None => target,
    };
    overwrite_observed_in_place(&mut z, y, mask)?;
    Ok(z)
}

/// `T + ρ (X − Q(Z))`.
pub fn update_dual(state: &SolverState) -> Result<Tensor3> {
    let qz = tensorize(&state.z, state.x.dims())?;
    let residual = state.x.axpy(-1.0, &qz)?;
    state.dual.axpy(state.rho, &residual)
}

/// `‖x_new − x_old‖²_F / ‖P_Ω(y)‖²_F`.
pub fn convergence_metric(
    x_new: &SpatioTemporalMatrix,
    x_old: &SpatioTemporalMatrix,
    y: &SpatioTemporalMatrix,
    mask: &ObservationMask,
) -> Result<f64> {
    let observed = project(y, mask)?.frobenius_norm().powi(2);
    if observed == 0.0 {
        return Err(Error::InvalidParameter(
            "observed data has zero norm; convergence ratio undefined".into(),
        ));
    }
    metric_with_norm(x_new, x_old, observed)
}

fn metric_with_norm(
    x_new: &SpatioTemporalMatrix,
    x_old: &SpatioTemporalMatrix,
    observed_sq: f64,
) -> Result<f64> {
    if x_new.shape() != x_old.shape() {
        return Err(Error::ShapeMismatch {
            expected: x_old.shape(),
            actual: x_new.shape(),
        });
    }
    Ok((x_new.values() - x_old.values()).norm_squared() / observed_sq)
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub recovered: SpatioTemporalMatrix,
    pub trace: SolverTrace,
    pub state: SolverState,
}

/// Runs the solver to convergence or `max_iters`.
pub fn run(
    y: &SpatioTemporalMatrix,
    mask: &ObservationMask,
    dims: TensorDims,
    config: &SolverConfig,
) -> Result<(SpatioTemporalMatrix, SolverTrace)> {
    run_from(initialize(y, mask, dims, config)?, y, mask, config).map(|o| (o.recovered, o.trace))
}

/// Runs from an explicit initial state. Lets callers supply their own `Φ`.
pub fn run_from(
    mut state: SolverState,
    y: &SpatioTemporalMatrix,
    mask: &ObservationMask,
    config: &SolverConfig,
) -> Result<SolverOutput> {
    config.validate()?;
    let dims = state.x.dims();
    check_inputs(y, mask, dims)?;
    let observed_sq = project(y, mask)?.frobenius_norm().powi(2);
    if observed_sq == 0.0 {
        return Err(Error::InvalidParameter(
            "observed data has zero norm; convergence ratio undefined".into(),
        ));
    }
    let system = smoothing_system(dims.total_time(), config)?;
    let mut previous = project(y, mask)?;
    let mut trace = SolverTrace::default();

    while state.iteration < config.max_iters {
        let started = Instant::now();
        state.rho = (config.rho_growth * state.rho).min(config.rho_max);

        let (x, reports) = update_x_with_reports(&state)?;
        state.x = x;
        state.z = update_z_with(&state, y, mask, system.as_ref())?;
        state.dual = update_dual(&state)?;
        state.iteration += 1;

        if !(state.x.is_finite() && state.z.is_finite() && state.dual.is_finite()) {
            return Err(Error::NonFinite {
                iteration: state.iteration,
            });
        }

        let current = matricize(&state.x);
        let metric = metric_with_norm(&current, &previous, observed_sq)?;
        previous = current;
        trace.records.push(IterationRecord {
            iteration: state.iteration,
            rho: state.rho,
            metric,
            nuclear_norm: reports.iter().map(|r| r.shrunk_nuclear_norm).sum(),
            quadratic_variation: quadratic_variation(&state.z),
            ranks: reports.iter().map(|r| r.retained_rank).collect(),
            wall_secs: started.elapsed().as_secs_f64(),
        });
        log::debug!(
            "iteration {} rho={:.4e} metric={:.4e}",
            state.iteration,
            state.rho,
            metric
        );

        if metric < config.epsilon {
            trace.converged = true;
            break;
        }
        if config.transform == TransformKind::DataDriven
            && config.phi_refresh_period > 0
            && state.iteration % config.phi_refresh_period == 0
        {
            let basis = tensorize(&state.z, dims)?.axpy(-1.0 / state.rho, &state.dual)?;
            state.phi = build_transform(TransformKind::DataDriven, &basis)?;
        }
    }
    if trace.converged && trace.records.last().is_some_and(|r| r.ranks.iter().all(|&k| k == 0)) {
        log::warn!(
            "converged to zero: threshold 1/rho = {:.3e} removed every singular value; try a larger rho0",
            1.0 / config.rho0
        );
    }
    if !trace.converged {
        log::warn!(
            "stopped after {} iterations without reaching epsilon {}",
            state.iteration,
            config.epsilon
        );
    }
    Ok(SolverOutput {
        recovered: previous,
        trace,
        state,
    })
}
