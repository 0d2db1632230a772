//! Low-tubal-rank smoothing tensor completion for sensor × time-of-day × day data.
//!
//! The model keeps a tensor estimate `X` that is low rank slice-by-slice
//! after an orthogonal transform along the day axis, and a matrix estimate
//! `Z` that agrees with the observations and is smooth in time. ADMM
//! alternates between the two (see [`solver`]).
//!
//! ```
//! use lstc_core::{run, synth, ObservationMask, SolverConfig, TensorDims};
//!
//! let dims = TensorDims::new(12, 8, 4).unwrap();
//! let y = synth(dims, 2, 0.0, 7).unwrap();
//! let mask = ObservationMask::from_fn(12, 32, |m, t| (m + t) % 4 != 0);
//! let (recovered, trace) = run(&y, &mask, dims, &SolverConfig::with_rho0(1e-2)).unwrap();
//! assert_eq!(recovered.shape(), (12, 32));
//! assert!(trace.iterations() > 0);
//! ```

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod proximal;
pub mod smoothing;
pub mod solver;
pub mod synth;
pub mod tensor;
pub mod transform;

pub use error::{Error, Result};
pub use evaluation::{evaluate, generate_mask, residuals, spectrum, EvalReport, MaskSpec, MissingPattern};
pub use proximal::{matrix_svt, tensor_svt, SvtReport};
pub use smoothing::{build_system, quadratic_variation, solve_smoothing, SmoothingSystem};
pub use solver::{run, SolverConfig, SolverState, SolverTrace};
pub use synth::synth;
pub use tensor::{
    fold, matricize, overwrite_observed, project, tensorize, unfold, ObservationMask,
    SpatioTemporalMatrix, Tensor3, TensorDims,
};
pub use transform::{dct_matrix, fit_data_driven, forward, inverse, TransformKind, TransformMatrix};
