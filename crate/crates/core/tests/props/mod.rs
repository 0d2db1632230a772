//! Property checks, one function per invariant. Each runs at least 200 cases
//! from a fixed seed and returns the first failure as text.

use std::collections::BTreeSet;

use lstc_core::evaluation::generate_mask;
use lstc_core::io::{read_matrix, write_atomically, write_matrix, MatrixFormat, RunManifest};
use lstc_core::proximal::singular_values;
use lstc_core::smoothing::{build_system, quadratic_variation, solve_smoothing};
use lstc_core::solver::{initialize, run_from};
use lstc_core::transform::{build_transform, day_gram, orthogonality_error, TransformKind};
use lstc_core::{
    dct_matrix, evaluate, fit_data_driven, fold, forward, inverse, matricize, matrix_svt,
    overwrite_observed, project, residuals, run, tensor_svt, tensorize, unfold, Error, MaskSpec,
    MissingPattern, ObservationMask, SolverConfig, SpatioTemporalMatrix, Tensor3, TensorDims,
    TransformMatrix,
};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::common::*;

pub const CASES: u32 = 200;

pub type Check = fn() -> Result<(), String>;

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        rng_seed: RngSeed::Fixed(0x5eed_1a57),
        failure_persistence: None,
        max_global_rejects: 4096,
        ..Config::default()
    })
}

fn check<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

fn dims_up_to(m: usize, i: usize, j: usize) -> impl Strategy<Value = (TensorDims, u64)> {
    (1..=m, 1..=i, 1..=j, any::<u64>())
        .prop_map(|(m, i, j, seed)| (TensorDims::new(m, i, j).unwrap(), seed))
}

fn random_mask(r: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize, p: f64) -> ObservationMask {
    ObservationMask::from_fn(rows, cols, |_, _| r.random::<f64>() < p)
}

fn random_kind(k: u8) -> TransformKind {
    match k % 3 {
        0 => TransformKind::DataDriven,
        1 => TransformKind::Dct,
        _ => TransformKind::Identity,
    }
}

fn min_relative_gap(x: &Tensor3) -> f64 {
    let mut ev: Vec<f64> = SymmetricEigen::new(day_gram(x)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let top = ev[0].abs().max(f64::MIN_POSITIVE);
    ev.windows(2).map(|w| (w[0] - w[1]) / top).fold(f64::INFINITY, f64::min)
}

fn same_up_to_column_sign(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (0..a.ncols()).all(|k| {
        let plus = (a.column(k) - b.column(k)).amax();
        let minus = (a.column(k) + b.column(k)).amax();
        plus.min(minus) <= tol
    })
}

// tensor-core

pub fn fold_unfold_round_trip() -> Result<(), String> {
    check(dims_up_to(8, 8, 8), |(dims, seed)| {
        let t = random_tensor(&mut rng(seed), dims);
        for mode in 1..=3 {
            let u = unfold(&t, mode).unwrap();
            let back = fold(&u, mode, dims).unwrap();
            prop_assert_eq!(back.as_slice(), t.as_slice());
        }
        let (m, i) = (dims.sensors(), dims.intervals());
        let u1 = unfold(&t, 1).unwrap();
        let u2 = unfold(&t, 2).unwrap();
        let u3 = unfold(&t, 3).unwrap();
        for j in 0..dims.days() {
            for ii in 0..i {
                for mm in 0..m {
                    let v = t.get(mm, ii, j);
                    prop_assert_eq!(u1[(mm, ii + i * j)], v);
                    prop_assert_eq!(u2[(ii, mm + m * j)], v);
                    prop_assert_eq!(u3[(j, mm + m * ii)], v);
                }
            }
        }
        Ok(())
    })
}

pub fn tensorize_matricize_round_trip() -> Result<(), String> {
    check(dims_up_to(8, 8, 8), |(dims, seed)| {
        let y = spatio(random_matrix(&mut rng(seed), dims.sensors(), dims.total_time()));
        let x = tensorize(&y, dims).unwrap();
        prop_assert_eq!(matricize(&x), y.clone());
        let looped = loop_tensorize(y.values(), dims);
        prop_assert_eq!(x.as_slice(), looped.as_slice());
        Ok(())
    })
}

pub fn project_linear_idempotent_contractive() -> Result<(), String> {
    check((1..10usize, 1..10usize, any::<u64>(), -3.0..3.0f64, -3.0..3.0f64), |(rows, cols, seed, a, b)| {
        let mut r = rng(seed);
        let y1 = spatio(random_matrix(&mut r, rows, cols));
        let y2 = spatio(random_matrix(&mut r, rows, cols));
        let p: f64 = r.random();
        let mask = random_mask(&mut r, rows, cols, p);
        let combo = spatio(y1.values() * a + y2.values() * b);
        let lhs = project(&combo, &mask).unwrap();
        let rhs = project(&y1, &mask).unwrap().values() * a + project(&y2, &mask).unwrap().values() * b;
        prop_assert!(max_abs_diff(lhs.values().as_slice(), rhs.as_slice()) < 1e-12);
        let once = project(&y1, &mask).unwrap();
        prop_assert_eq!(project(&once, &mask).unwrap(), once.clone());
        prop_assert!(once.frobenius_norm() <= y1.frobenius_norm());
        Ok(())
    })
}

pub fn overwrite_selects_per_entry() -> Result<(), String> {
    check((1..10usize, 1..10usize, any::<u64>()), |(rows, cols, seed)| {
        let mut r = rng(seed);
        let z = spatio(random_matrix(&mut r, rows, cols));
        let y = spatio(random_matrix(&mut r, rows, cols));
        let p: f64 = r.random();
        let mask = random_mask(&mut r, rows, cols, p);
        let out = overwrite_observed(&z, &y, &mask).unwrap();
        for row in 0..rows {
            for col in 0..cols {
                let want = if mask.contains(row, col) { y.get(row, col) } else { z.get(row, col) };
                prop_assert_eq!(out.get(row, col), want);
            }
        }
        Ok(())
    })
}

pub fn mask_membership_and_complement() -> Result<(), String> {
    check((1..30usize, 1..30usize, any::<u64>(), 0.0..1.0f64), |(rows, cols, seed, p)| {
        let mut r = rng(seed);
        let mask = random_mask(&mut r, rows, cols, p);
        let members: Vec<_> = mask.iter().collect();
        prop_assert_eq!(members.len(), mask.observed_count());
        prop_assert!(members.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(members.iter().all(|&(a, b)| a < rows && b < cols));
        let comp = mask.complement();
        prop_assert_eq!(comp.observed_count() + mask.observed_count(), rows * cols);
        prop_assert!(comp.iter().all(|(a, b)| !mask.contains(a, b)));
        let rebuilt = ObservationMask::from_linear(rows, cols, mask.linear_indices()).unwrap();
        prop_assert_eq!(rebuilt, mask);
        Ok(())
    })
}

// transforms

pub fn transforms_are_orthogonal() -> Result<(), String> {
    check((dims_up_to(6, 6, 12), any::<u8>()), |((dims, seed), k)| {
        let x = random_tensor(&mut rng(seed), dims);
        let phi = build_transform(random_kind(k), &x).unwrap();
        prop_assert!(orthogonality_error(phi.matrix()) <= 1e-8);
        Ok(())
    })
}

pub fn forward_inverse_round_trip() -> Result<(), String> {
    check((dims_up_to(6, 6, 12), any::<u8>()), |((dims, seed), k)| {
        let x = random_tensor(&mut rng(seed), dims);
        let phi = build_transform(random_kind(k), &x).unwrap();
        let f = forward(&x, &phi).unwrap();
        prop_assert!((f.frobenius_norm() - x.frobenius_norm()).abs() <= 1e-10 * x.frobenius_norm().max(1.0));
        prop_assert!(max_abs_diff(inverse(&f, &phi).unwrap().as_slice(), x.as_slice()) <= 1e-10);
        prop_assert!(max_abs_diff(forward(&inverse(&x, &phi).unwrap(), &phi).unwrap().as_slice(), x.as_slice()) <= 1e-10);
        prop_assert!(tensor_diff(&f, &loop_forward(&x, phi.matrix())) <= 1e-10);
        Ok(())
    })
}

pub fn data_driven_ignores_sensor_and_interval_order() -> Result<(), String> {
    check(dims_up_to(6, 6, 8), |(dims, seed)| {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, dims);
        prop_assume!(min_relative_gap(&x) > 1e-6);
        let mut pm: Vec<usize> = (0..dims.sensors()).collect();
        let mut pi: Vec<usize> = (0..dims.intervals()).collect();
        pm.shuffle(&mut r);
        pi.shuffle(&mut r);
        let permuted = Tensor3::from_fn(dims, |m, i, j| x.get(pm[m], pi[i], j));
        let a = fit_data_driven(&x).unwrap();
        let b = fit_data_driven(&permuted).unwrap();
        prop_assert!(same_up_to_column_sign(a.matrix(), b.matrix(), 1e-7));
        Ok(())
    })
}

pub fn transforms_are_linear() -> Result<(), String> {
    check((dims_up_to(6, 6, 10), any::<u8>(), -5.0..5.0f64, -5.0..5.0f64), |((dims, seed), k, a, b)| {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, dims);
        let y = random_tensor(&mut r, dims);
        let phi = build_transform(random_kind(k), &x).unwrap();
        let combo = x.scaled(a).axpy(b, &y).unwrap();
        let lhs = forward(&combo, &phi).unwrap();
        let rhs = forward(&x, &phi).unwrap().scaled(a).axpy(b, &forward(&y, &phi).unwrap()).unwrap();
        prop_assert!(max_abs_diff(lhs.as_slice(), rhs.as_slice()) <= 1e-10);
        Ok(())
    })
}

// proximal

fn svt_inputs() -> impl Strategy<Value = (TensorDims, u64, u8, f64)> {
    (dims_up_to(7, 7, 5), any::<u8>(), 0.01..2.0f64).prop_map(|((d, s), k, tau)| (d, s, k, tau))
}

pub fn svt_matches_oracle() -> Result<(), String> {
    check((1..=20usize, 1..=20usize, any::<u64>(), 0..3usize), |(rows, cols, seed, t)| {
        let tau = [0.01, 0.3, 2.0][t];
        let a = random_matrix(&mut rng(seed), rows, cols) * 3.0;
        let (x, report) = matrix_svt(&a, tau).unwrap();
        prop_assert!((&x - oracle_svt(&a, tau)).norm() <= 1e-9);
        let want: Vec<f64> = oracle_singular_values(&a).iter().map(|s| (s - tau).max(0.0)).collect();
        let got = oracle_singular_values(&x);
        prop_assert!(max_abs_diff(&got, &want) <= 1e-8);
        prop_assert!(report.retained_rank <= rows.min(cols));
        Ok(())
    })
}

pub fn tensor_svt_is_nonexpansive() -> Result<(), String> {
    check(svt_inputs(), |(dims, seed, k, tau)| {
        let mut r = rng(seed);
        let z1 = random_tensor(&mut r, dims);
        let z2 = random_tensor(&mut r, dims);
        let phi = build_transform(random_kind(k), &z1).unwrap();
        let d_out = tensor_svt(&z1, &phi, tau).unwrap().axpy(-1.0, &tensor_svt(&z2, &phi, tau).unwrap()).unwrap();
        let d_in = z1.axpy(-1.0, &z2).unwrap();
        prop_assert!(d_out.frobenius_norm() <= d_in.frobenius_norm() + 1e-12);
        Ok(())
    })
}

pub fn tensor_svt_spectral_contract() -> Result<(), String> {
    check(svt_inputs(), |(dims, seed, k, tau)| {
        let z = random_tensor(&mut rng(seed), dims).scaled(2.0);
        let phi = build_transform(random_kind(k), &z).unwrap();
        let x = tensor_svt(&z, &phi, tau).unwrap();
        prop_assert!(x.frobenius_norm() <= z.frobenius_norm() + 1e-12);
        let (fz, fx) = (loop_forward(&z, phi.matrix()), loop_forward(&x, phi.matrix()));
        for j in 0..dims.days() {
            let slice = |t: &Tensor3| DMatrix::from_fn(dims.sensors(), dims.intervals(), |m, i| t.get(m, i, j));
            let want: Vec<f64> = oracle_singular_values(&slice(&fz)).iter().map(|s| (s - tau).max(0.0)).collect();
            prop_assert!(max_abs_diff(&oracle_singular_values(&slice(&fx)), &want) <= 1e-8);
        }
        Ok(())
    })
}

pub fn tensor_svt_commutes_with_day_permutation() -> Result<(), String> {
    check(svt_inputs(), |(dims, seed, _, tau)| {
        let mut r = rng(seed);
        let z = random_tensor(&mut r, dims);
        prop_assume!(min_relative_gap(&z) > 1e-6);
        let mut perm: Vec<usize> = (0..dims.days()).collect();
        perm.shuffle(&mut r);
        let zp = Tensor3::from_fn(dims, |m, i, j| z.get(m, i, perm[j]));
        let x = tensor_svt(&z, &fit_data_driven(&z).unwrap(), tau).unwrap();
        let xp = tensor_svt(&zp, &fit_data_driven(&zp).unwrap(), tau).unwrap();
        let expected = Tensor3::from_fn(dims, |m, i, j| x.get(m, i, perm[j]));
        prop_assert!(tensor_diff(&xp, &expected) <= 1e-8);
        Ok(())
    })
}

// smoothing

fn smoothing_inputs() -> impl Strategy<Value = (usize, usize, u64, f64)> {
    (1..=6usize, 1..=50usize, any::<u64>(), prop_oneof![Just(0.01), Just(1.0), Just(100.0), 1e-3..1e3f64])
}

fn smooth(b: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let sys = build_system(b.ncols(), alpha).unwrap();
    solve_smoothing(&spatio(b.clone()), &sys).unwrap().into_inner()
}

pub fn smoothing_reduces_variation() -> Result<(), String> {
    check(smoothing_inputs(), |(m, t, seed, alpha)| {
        let b = random_matrix(&mut rng(seed), m, t);
        let z = smooth(&b, alpha);
        prop_assert!(quadratic_variation(&spatio(z)) <= quadratic_variation(&spatio(b)) * (1.0 + 1e-12) + 1e-15);
        Ok(())
    })
}

pub fn smoothing_limits() -> Result<(), String> {
    check((1..=6usize, 1..=20usize, any::<u64>()), |(m, t, seed)| {
        let b = random_matrix(&mut rng(seed), m, t).add_scalar(3.0);
        let stiff = smooth(&b, 1e8);
        prop_assert!((&stiff - &b).norm() <= 1e-6 * b.norm());
        let loose = smooth(&b, 1e-9);
        for row in 0..m {
            let mean = b.row(row).mean();
            for col in 0..t {
                prop_assert!((loose[(row, col)] - mean).abs() <= 1e-5 * mean.abs().max(1.0));
            }
        }
        Ok(())
    })
}

pub fn smoothing_preserves_row_sums() -> Result<(), String> {
    check(smoothing_inputs(), |(m, t, seed, alpha)| {
        let b = random_matrix(&mut rng(seed), m, t);
        let z = smooth(&b, alpha);
        for row in 0..m {
            let scale = b.row(row).abs().sum().max(1e-300);
            prop_assert!((z.row(row).sum() - b.row(row).sum()).abs() <= 1e-8 * scale);
        }
        Ok(())
    })
}

pub fn smoothing_matches_dense_inverse() -> Result<(), String> {
    check(smoothing_inputs(), |(m, t, seed, alpha)| {
        let b = random_matrix(&mut rng(seed), m, t);
        prop_assert!(max_abs_diff(smooth(&b, alpha).as_slice(), dense_smoothing(&b, alpha).as_slice()) <= 1e-10);
        Ok(())
    })
}

// solver

#[derive(Debug, Clone)]
struct Problem {
    dims: TensorDims,
    y: SpatioTemporalMatrix,
    mask: ObservationMask,
    config: SolverConfig,
}

fn problem(max_j: usize) -> impl Strategy<Value = Problem> {
    (dims_up_to(5, 4, max_j), 0.3..3.0f64, prop_oneof![Just(0.0), 1e-3..0.5f64], any::<u8>(), 1..12usize)
        .prop_filter_map("empty mask", |((dims, seed), rho0, c, k, iters)| {
            let mut r = rng(seed);
            let y = spatio(random_matrix(&mut r, dims.sensors(), dims.total_time()));
            let mask = random_mask(&mut r, dims.sensors(), dims.total_time(), 0.7);
            if mask.is_empty() {
                return None;
            }
            let config = SolverConfig {
                lambda_coef: c,
                transform: random_kind(k),
                max_iters: iters,
                phi_refresh_period: 3,
                rho_max: rho0 * (1.0 + r.random::<f64>() * 2.0),
                epsilon: [1e-300, 1e-4, 1e-2][r.random_range(0..3)],
                ..SolverConfig::with_rho0(rho0)
            };
            Some(Problem { dims, y, mask, config })
        })
}

pub fn observed_entries_pinned_every_iteration() -> Result<(), String> {
    check(problem(4), |p| {
        let cfg = SolverConfig { epsilon: 1e-300, ..p.config.clone() };
        let mut state = initialize(&p.y, &p.mask, p.dims, &cfg).unwrap();
        for k in 0..cfg.max_iters {
            let step = SolverConfig { max_iters: k + 1, ..cfg.clone() };
            state = run_from(state, &p.y, &p.mask, &step).unwrap().state;
            for (row, col) in p.mask.iter() {
                prop_assert_eq!(state.z.get(row, col).to_bits(), p.y.get(row, col).to_bits());
            }
            prop_assert!(state.x.is_finite() && state.z.is_finite() && state.dual.is_finite());
        }
        Ok(())
    })
}

pub fn rho_is_nondecreasing_and_capped() -> Result<(), String> {
    check(problem(4), |p| {
        let (_, trace) = run(&p.y, &p.mask, p.dims, &p.config).unwrap();
        let rhos: Vec<f64> = trace.records.iter().map(|r| r.rho).collect();
        prop_assert!(rhos.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(rhos.iter().all(|&r| r <= p.config.rho_max && r >= p.config.rho0));
        Ok(())
    })
}

pub fn column_sign_flip_does_not_change_output() -> Result<(), String> {
    check((problem(4), any::<usize>()), |(p, col)| {
        let cfg = SolverConfig { epsilon: 1e-300, phi_refresh_period: 0, ..p.config.clone() };
        let state = initialize(&p.y, &p.mask, p.dims, &cfg).unwrap();
        let mut flipped = state.clone();
        flipped.phi = state.phi.with_flipped_column(col % p.dims.days());
        let a = run_from(state, &p.y, &p.mask, &cfg).unwrap().recovered;
        let b = run_from(flipped, &p.y, &p.mask, &cfg).unwrap().recovered;
        prop_assert!(max_abs_diff(a.values().as_slice(), b.values().as_slice()) <= 1e-8);
        Ok(())
    })
}

pub fn single_day_identity_matches_matrix_admm() -> Result<(), String> {
    check((1..=6usize, 1..=6usize, any::<u64>(), 0.3..3.0f64, prop_oneof![Just(0.0), 1e-3..0.5f64]), |(m, i, seed, rho0, c)| {
        let dims = TensorDims::new(m, i, 1).unwrap();
        let mut r = rng(seed);
        let y = random_matrix(&mut r, m, i);
        let mask = random_mask(&mut r, m, i, 0.7);
        prop_assume!(!mask.is_empty());
        let config = SolverConfig {
            transform: TransformKind::Identity,
            lambda_coef: c,
            epsilon: 1e-300,
            ..SolverConfig::with_rho0(rho0)
        };
        let expected = matrix_admm(&y, &mask, rho0, config.rho_max, c, 6);
        let mut state = initialize(&spatio(y.clone()), &mask, dims, &config).unwrap();
        for (k, x_ref) in expected.iter().enumerate() {
            let step = SolverConfig { max_iters: k + 1, ..config.clone() };
            state = run_from(state, &spatio(y.clone()), &mask, &step).unwrap().state;
            prop_assert!((loop_matricize(&state.x) - x_ref).norm() <= 1e-8, "iteration {}", k + 1);
        }
        Ok(())
    })
}

pub fn trace_is_consistent() -> Result<(), String> {
    check(problem(4), |p| {
        let (_, trace) = run(&p.y, &p.mask, p.dims, &p.config).unwrap();
        let n = trace.iterations();
        prop_assert_eq!(trace.records.len(), n);
        prop_assert!(trace.records.iter().enumerate().all(|(k, r)| r.iteration == k + 1));
        let below = |r: &lstc_core::solver::IterationRecord| r.metric < p.config.epsilon;
        if trace.converged {
            prop_assert!(below(trace.records.last().unwrap()));
            prop_assert!(!trace.records[..n - 1].iter().any(below));
        } else {
            prop_assert_eq!(n, p.config.max_iters);
            prop_assert!(!trace.records.iter().any(below));
        }
        Ok(())
    })
}

pub fn solver_is_deterministic() -> Result<(), String> {
    check(problem(4), |p| {
        let (a, ta) = run(&p.y, &p.mask, p.dims, &p.config).unwrap();
        let (b, tb) = run(&p.y, &p.mask, p.dims, &p.config).unwrap();
        prop_assert_eq!(a, b);
        let strip = |t: &lstc_core::SolverTrace| t.records.iter().map(|r| (r.iteration, r.rho.to_bits(), r.metric.to_bits(), r.ranks.clone())).collect::<Vec<_>>();
        prop_assert_eq!(strip(&ta), strip(&tb));
        Ok(())
    })
}

// evaluation

fn mask_inputs() -> impl Strategy<Value = (TensorDims, u64, bool, f64, bool)> {
    (dims_up_to(8, 6, 6), any::<bool>(), 0.1..0.9f64, any::<bool>()).prop_map(|((d, s), nm, rate, q)| (d, s, nm, rate, q))
}

fn split(dims: TensorDims, seed: u64, nm: bool, rate: f64, quota: bool) -> Option<(ObservationMask, ObservationMask, ObservationMask, MaskSpec)> {
    let mut r = rng(seed);
    let p = 0.5 + 0.5 * r.random::<f64>();
    let base = random_mask(&mut r, dims.sensors(), dims.total_time(), p);
    let spec = MaskSpec {
        pattern: if nm { MissingPattern::Nm } else { MissingPattern::Rm },
        rate,
        seed,
        exact_quota: quota,
    };
    match generate_mask(&base, dims, &spec) {
        Ok((train, test)) => Some((base, train, test, spec)),
        Err(Error::EmptySplit(_) | Error::EmptyMask) => None,
        Err(e) => panic!("unexpected error {e}"),
    }
}

pub fn mask_split_is_a_deterministic_partition() -> Result<(), String> {
    check(mask_inputs(), |(dims, seed, nm, rate, quota)| {
        let Some((base, train, test, spec)) = split(dims, seed, nm, rate, quota) else {
            return Err(TestCaseError::reject("degenerate split"));
        };
        let b: BTreeSet<_> = base.iter().collect();
        let tr: BTreeSet<_> = train.iter().collect();
        let te: BTreeSet<_> = test.iter().collect();
        prop_assert!(tr.is_disjoint(&te));
        prop_assert_eq!(tr.union(&te).copied().collect::<BTreeSet<_>>(), b);
        let (train2, test2) = generate_mask(&base, dims, &spec).unwrap();
        prop_assert_eq!(train2, train);
        prop_assert_eq!(test2, test);
        Ok(())
    })
}

pub fn nm_never_splits_a_fiber() -> Result<(), String> {
    check(mask_inputs(), |(dims, seed, _, rate, quota)| {
        let Some((base, _, test, _)) = split(dims, seed, true, rate, quota) else {
            return Err(TestCaseError::reject("degenerate split"));
        };
        let i = dims.intervals();
        for m in 0..dims.sensors() {
            for j in 0..dims.days() {
                let fiber: Vec<bool> = (0..i)
                    .map(|ii| j * i + ii)
                    .filter(|&t| base.contains(m, t))
                    .map(|t| test.contains(m, t))
                    .collect();
                prop_assert!(fiber.iter().all(|&v| v) || fiber.iter().all(|&v| !v));
            }
        }
        Ok(())
    })
}

pub fn evaluate_ignores_entry_order() -> Result<(), String> {
    check((1..10usize, 1..10usize, any::<u64>()), |(rows, cols, seed)| {
        let mut r = rng(seed);
        let truth = random_matrix(&mut r, rows, cols).add_scalar(5.0);
        let rec = &truth + random_matrix(&mut r, rows, cols);
        let test = random_mask(&mut r, rows, cols, 0.5);
        prop_assume!(!test.is_empty());
        let mut pr: Vec<usize> = (0..rows).collect();
        let mut pc: Vec<usize> = (0..cols).collect();
        pr.shuffle(&mut r);
        pc.shuffle(&mut r);
        let perm = |a: &DMatrix<f64>| DMatrix::from_fn(rows, cols, |i, j| a[(pr[i], pc[j])]);
        let ptest = ObservationMask::from_fn(rows, cols, |i, j| test.contains(pr[i], pc[j]));
        let a = evaluate(&spatio(truth.clone()), &spatio(rec.clone()), &test).unwrap();
        let b = evaluate(&spatio(perm(&truth)), &spatio(perm(&rec)), &ptest).unwrap();
        prop_assert_eq!(a.n_eval, b.n_eval);
        prop_assert!((a.mape - b.mape).abs() <= 1e-12 * a.mape.max(1.0));
        prop_assert!((a.rmse - b.rmse).abs() <= 1e-12 * a.rmse.max(1.0));
        let res = residuals(&spatio(truth.clone()), &spatio(rec.clone()), &test).unwrap();
        let mut want = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if test.contains(i, j) {
                    want.push(truth[(i, j)] - rec[(i, j)]);
                }
            }
        }
        prop_assert_eq!(res, want);
        Ok(())
    })
}

pub fn constant_shift_rmse() -> Result<(), String> {
    check((1..10usize, 1..10usize, any::<u64>(), -50.0..50.0f64), |(rows, cols, seed, delta)| {
        let mut r = rng(seed);
        let truth = random_matrix(&mut r, rows, cols).add_scalar(2.0);
        let test = random_mask(&mut r, rows, cols, 0.5);
        prop_assume!(!test.is_empty());
        let rec = truth.add_scalar(delta);
        let rep = evaluate(&spatio(truth), &spatio(rec), &test).unwrap();
        prop_assert!((rep.rmse - delta.abs()).abs() <= 1e-12 * delta.abs().max(1.0));
        prop_assert!(rep.mape >= 0.0 && rep.n_eval == test.observed_count());
        Ok(())
    })
}

// io

fn nan_masked(dims: TensorDims, seed: u64) -> (SpatioTemporalMatrix, ObservationMask) {
    let mut r = rng(seed);
    let y = random_matrix(&mut r, dims.sensors(), dims.total_time()).map(|v| v * 10f64.powi(r.random_range(-20..20)));
    let mask = random_mask(&mut r, dims.sensors(), dims.total_time(), 0.8);
    (project(&spatio(y), &mask).unwrap(), mask)
}

fn io_round_trip(format: MatrixFormat, ext: &str) -> Result<(), String> {
    check(dims_up_to(6, 6, 6), |(dims, seed)| {
        let (y, mask) = nan_masked(dims, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("data.{ext}"));
        write_matrix(&path, &y, &mask, dims, format).unwrap();
        let (back, back_mask, back_dims) = read_matrix(&path, format, Some(dims.intervals())).unwrap();
        prop_assert_eq!(back_dims, dims);
        prop_assert_eq!(back_mask, mask);
        let bits = |m: &SpatioTemporalMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&y));
        Ok(())
    })
}

pub fn binary_round_trip_is_bit_exact() -> Result<(), String> {
    io_round_trip(MatrixFormat::Binary, "lstc")
}

pub fn delimited_round_trip_is_value_exact() -> Result<(), String> {
    io_round_trip(MatrixFormat::Delimited, "csv")
}

pub fn manifest_round_trips() -> Result<(), String> {
    check((any::<u64>(), 0.01..0.99f64, "[a-z]{1,8}", proptest::option::of(any::<u64>())), |(seed, rate, name, solver_seed)| {
        let mut m = RunManifest::new(name.clone());
        m.inputs.push(format!("{name}.in").into());
        m.outputs.push(format!("{name}.out").into());
        m.seed = Some(seed);
        m.mask = Some(MaskSpec { pattern: MissingPattern::Nm, rate, seed, exact_quota: seed % 2 == 0 });
        if let Some(s) = solver_seed {
            m.solver = Some(SolverConfig { seed: s, rho0: rate, ..SolverConfig::default() });
        }
        m.extra.insert("rate".into(), rate.into());
        prop_assert_eq!(RunManifest::from_text(&m.to_text().unwrap()).unwrap(), m);
        Ok(())
    })
}

pub fn failed_writes_leave_no_output() -> Result<(), String> {
    check((any::<bool>(), proptest::collection::vec(any::<u8>(), 0..64)), |(preexisting, bytes)| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.bin");
        if preexisting {
            std::fs::write(&path, b"old").unwrap();
        }
        let res = write_atomically(&path, |w| {
            use std::io::Write;
            w.write_all(&bytes)?;
            Err(Error::Format("injected".into()))
        });
        prop_assert!(res.is_err());
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        if preexisting {
            prop_assert_eq!(std::fs::read(&path).unwrap(), b"old".to_vec());
            prop_assert_eq!(entries.len(), 1);
        } else {
            prop_assert!(!path.exists());
            prop_assert_eq!(entries.len(), 0);
        }
        Ok(())
    })
}

pub fn spectrum_conserves_energy() -> Result<(), String> {
    check((dims_up_to(6, 6, 6), any::<u8>()), |((dims, seed), k)| {
        let x = random_tensor(&mut rng(seed), dims);
        let phi: TransformMatrix = build_transform(random_kind(k), &x).unwrap();
        let spec = lstc_core::spectrum(&x, &phi).unwrap();
        let energy: f64 = spec.iter().flatten().map(|s| s * s).sum();
        prop_assert!((energy - x.frobenius_norm().powi(2)).abs() <= 1e-8 * energy.max(1.0));
        prop_assert!(spec.iter().all(|l| l.windows(2).all(|w| w[0] >= w[1]) && l.iter().all(|&s| s >= 0.0)));
        let direct = singular_values(&DMatrix::from_fn(dims.sensors(), dims.intervals(), |m, i| loop_forward(&x, phi.matrix()).get(m, i, 0))).unwrap();
        prop_assert!(max_abs_diff(&direct, &spec[0]) <= 1e-10);
        Ok(())
    })
}

pub fn dct_is_orthonormal_for_all_orders() -> Result<(), String> {
    check(1..=64usize, |order| {
        prop_assert!(orthogonality_error(dct_matrix(order).unwrap().matrix()) <= 1e-12);
        Ok(())
    })
}

pub const ALL: &[(&str, Check)] = &[
    ("fold_unfold_round_trip", fold_unfold_round_trip),
    ("tensorize_matricize_round_trip", tensorize_matricize_round_trip),
    ("project_linear_idempotent_contractive", project_linear_idempotent_contractive),
    ("overwrite_selects_per_entry", overwrite_selects_per_entry),
    ("mask_membership_and_complement", mask_membership_and_complement),
    ("transforms_are_orthogonal", transforms_are_orthogonal),
    ("forward_inverse_round_trip", forward_inverse_round_trip),
    ("data_driven_ignores_sensor_and_interval_order", data_driven_ignores_sensor_and_interval_order),
    ("transforms_are_linear", transforms_are_linear),
    ("dct_is_orthonormal_for_all_orders", dct_is_orthonormal_for_all_orders),
    ("svt_matches_oracle", svt_matches_oracle),
    ("tensor_svt_is_nonexpansive", tensor_svt_is_nonexpansive),
    ("tensor_svt_spectral_contract", tensor_svt_spectral_contract),
    ("tensor_svt_commutes_with_day_permutation", tensor_svt_commutes_with_day_permutation),
    ("smoothing_reduces_variation", smoothing_reduces_variation),
    ("smoothing_limits", smoothing_limits),
    ("smoothing_preserves_row_sums", smoothing_preserves_row_sums),
    ("smoothing_matches_dense_inverse", smoothing_matches_dense_inverse),
    ("observed_entries_pinned_every_iteration", observed_entries_pinned_every_iteration),
    ("rho_is_nondecreasing_and_capped", rho_is_nondecreasing_and_capped),
    ("column_sign_flip_does_not_change_output", column_sign_flip_does_not_change_output),
    ("single_day_identity_matches_matrix_admm", single_day_identity_matches_matrix_admm),
    ("trace_is_consistent", trace_is_consistent),
    ("solver_is_deterministic", solver_is_deterministic),
    ("mask_split_is_a_deterministic_partition", mask_split_is_a_deterministic_partition),
    ("nm_never_splits_a_fiber", nm_never_splits_a_fiber),
    ("evaluate_ignores_entry_order", evaluate_ignores_entry_order),
    ("constant_shift_rmse", constant_shift_rmse),
    ("spectrum_conserves_energy", spectrum_conserves_energy),
    ("binary_round_trip_is_bit_exact", binary_round_trip_is_bit_exact),
    ("delimited_round_trip_is_value_exact", delimited_round_trip_is_value_exact),
    ("manifest_round_trips", manifest_round_trips),
    ("failed_writes_leave_no_output", failed_writes_leave_no_output),
];
