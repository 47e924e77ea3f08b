//! Structural invariants on randomized instances.

use std::collections::BTreeMap;

use proptest::prelude::*;

use longrun_core::dyadic::Dyadic;
use longrun_core::invariant::{invariant_measure, INVARIANT_RESIDUAL_TOL};
use longrun_core::kernel::TransitionKernel;
use longrun_core::risk::{build_tilted_kernel, psi_apply, solve_poisson, RiskParams};
use longrun_core::space::StateSpace;
use longrun_core::weight::span_seminorm;
use longrun_core::csv_io::fmt_f64;

fn labeled_space(n: usize) -> StateSpace {
    StateSpace::from_labels((0..n).map(|i| format!("s{i}")).collect()).unwrap()
}

/// Row-normalized positive matrices: every chain drawn here is ergodic.
fn kernel_of(n: usize) -> impl Strategy<Value = TransitionKernel> {
    prop::collection::vec(0.05..1.0f64, n * n).prop_map(move |raw| {
        let rows: Vec<f64> = raw
            .chunks(n)
            .flat_map(|row| {
                let sum: f64 = row.iter().sum();
                row.iter().map(|v| v / sum).collect::<Vec<_>>()
            })
            .collect();
        TransitionKernel::new(labeled_space(n), rows, Dyadic::one()).unwrap()
    })
}

fn kernels(max_n: usize) -> impl Strategy<Value = TransitionKernel> {
    (2..=max_n).prop_flat_map(kernel_of)
}

fn rewards(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

fn alphas() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(-2.0),
        Just(-1.0),
        Just(-0.1),
        Just(0.1),
        Just(1.0)
    ]
}

fn chain_instances() -> impl Strategy<Value = (TransitionKernel, Vec<f64>, f64)> {
    kernels(6).prop_flat_map(|k| {
        let n = k.len();
        (Just(k), rewards(n), alphas())
    })
}

proptest! {
    #[test]
    fn psi_translation_equivariance((kernel, c, alpha) in chain_instances(), shift in -3.0..3.0f64) {
        let tilted = build_tilted_kernel(&kernel, &c, alpha, 0).unwrap();
        let g: Vec<f64> = c.iter().map(|v| v * 0.7).collect();
        let shifted: Vec<f64> = g.iter().map(|v| v + shift).collect();
        let psi_g = psi_apply(&tilted, &g).unwrap();
        let psi_shifted = psi_apply(&tilted, &shifted).unwrap();
        for (a, b) in psi_g.iter().zip(&psi_shifted) {
            prop_assert!((b - a - shift).abs() <= 1e-12, "{a} + {shift} vs {b}");
        }
    }

    #[test]
    fn psi_monotone((kernel, c, alpha) in chain_instances(), bumps in prop::collection::vec(0.0..2.0f64, 6)) {
        let tilted = build_tilted_kernel(&kernel, &c, alpha, 0).unwrap();
        let g: Vec<f64> = c.iter().map(|v| -v).collect();
        let larger: Vec<f64> = g.iter().zip(bumps.iter().cycle()).map(|(v, b)| v + b).collect();
        let psi_g = psi_apply(&tilted, &g).unwrap();
        let psi_larger = psi_apply(&tilted, &larger).unwrap();
        for (a, b) in psi_g.iter().zip(&psi_larger) {
            prop_assert!(*b >= *a - 1e-12, "monotonicity broken: {a} -> {b}");
        }
    }

    #[test]
    fn psi_span_nonexpansive((kernel, c, alpha) in chain_instances(), other in prop::collection::vec(-2.0..2.0f64, 6)) {
        let tilted = build_tilted_kernel(&kernel, &c, alpha, 0).unwrap();
        let g: Vec<f64> = c.iter().map(|v| v * 0.3).collect();
        let g_other: Vec<f64> = other.iter().take(kernel.len()).copied().collect();
        let psi_g = psi_apply(&tilted, &g).unwrap();
        let psi_other = psi_apply(&tilted, &g_other).unwrap();
        let input_gap: Vec<f64> = g.iter().zip(&g_other).map(|(a, b)| a - b).collect();
        let output_gap: Vec<f64> = psi_g.iter().zip(&psi_other).map(|(a, b)| a - b).collect();
        prop_assert!(
            span_seminorm(&output_gap) <= span_seminorm(&input_gap) + 1e-12,
            "span grew: {} -> {}",
            span_seminorm(&input_gap),
            span_seminorm(&output_gap)
        );
    }

    #[test]
    fn invariant_measure_is_stationary(kernel in kernels(8)) {
        let mu = invariant_measure(&kernel).unwrap();
        let pushed = kernel.apply_measure(mu.weights()).unwrap();
        let residual: f64 = pushed.iter().zip(mu.weights()).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(residual <= INVARIANT_RESIDUAL_TOL, "residual {residual}");
        let total: f64 = mu.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn dobrushin_is_submultiplicative((a, b) in (2usize..=5).prop_flat_map(|n| (kernel_of(n), kernel_of(n)))) {
        let composed = a.compose(&b).unwrap();
        let bound = a.dobrushin_delta() * b.dobrushin_delta();
        prop_assert!(
            composed.dobrushin_delta() <= bound + 1e-12,
            "{} > {bound}",
            composed.dobrushin_delta()
        );
    }

    #[test]
    fn jensen_ordering_holds((kernel, c, _) in chain_instances()) {
        let j = longrun_core::average_reward_exact_chain(&kernel, &c, 0).unwrap().value;
        let low = solve_poisson(
            &build_tilted_kernel(&kernel, &c, -0.7, 0).unwrap(),
            &RiskParams::new(-0.7).unwrap(),
        )
        .unwrap()
        .lambda;
        let high = solve_poisson(
            &build_tilted_kernel(&kernel, &c, 0.7, 0).unwrap(),
            &RiskParams::new(0.7).unwrap(),
        )
        .unwrap()
        .lambda;
        prop_assert!(low <= j + 1e-9, "risk-averse value {low} above mean {j}");
        prop_assert!(j <= high + 1e-9, "risk-seeking value {high} below mean {j}");
    }

    #[test]
    fn lambda_agrees_across_solver_and_oracle((kernel, c, alpha) in chain_instances()) {
        let tilted = build_tilted_kernel(&kernel, &c, alpha, 0).unwrap();
        let solved = solve_poisson(&tilted, &RiskParams::new(alpha).unwrap()).unwrap();
        let oracle = longrun_core::perron_oracle(&tilted).unwrap();
        prop_assert!(
            (solved.lambda - oracle).abs() <= 1e-8,
            "solver {} vs oracle {oracle}",
            solved.lambda
        );
    }

    #[test]
    fn dyadic_addition_is_exact_and_commutative(a in 1u64..1000, b in 1u64..1000, ka in 0u32..12, kb in 0u32..12) {
        let x = Dyadic::new(a, ka);
        let y = Dyadic::new(b, kb);
        prop_assert_eq!(x.add(y), y.add(x));
        let as_float = x.add(y).as_f64();
        let expected = a as f64 / (1u64 << ka) as f64 + b as f64 / (1u64 << kb) as f64;
        prop_assert_eq!(as_float.to_bits(), expected.to_bits());
    }

    #[test]
    fn float_csv_round_trip(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        let back: f64 = fmt_f64(x).parse().unwrap();
        if x.is_nan() {
            prop_assert!(back.is_nan());
        } else {
            prop_assert_eq!(back.to_bits(), x.to_bits(), "{}", x);
        }
    }
}

#[test]
fn rate_matrix_levels_share_one_invariant_measure() {
    let space = labeled_space(3);
    let q = vec![-1.0, 0.6, 0.4, 0.3, -0.5, 0.2, 0.7, 0.1, -0.8];
    let mut measures = BTreeMap::new();
    for m in [0u32, 3, 6] {
        let substep = TransitionKernel::from_rate_matrix(space.clone(), &q, m).unwrap();
        measures.insert(m, invariant_measure(&substep).unwrap());
    }
    let reference = &measures[&0];
    for (m, mu) in &measures {
        for (a, b) in mu.weights().iter().zip(reference.weights()) {
            assert!((a - b).abs() < 1e-12, "level {m} drifted: {a} vs {b}");
        }
    }
}
