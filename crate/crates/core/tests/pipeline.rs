#![allow(clippy::needless_range_loop)]

use dust_einstein::background::CosmologyParams;
use dust_einstein::checkpoint::{self, Checkpoint, CheckpointError};
use dust_einstein::evolution::{EvolutionConfig, Evolver, StepperConfig};
use dust_einstein::grid::Grid3;
use dust_einstein::initial_data::{construct_modified_data, perturbed_flrw, random_state, PerturbationSpec};
use dust_einstein::lorentz::{solve_u0, Mat4, MetricPoint};
use dust_einstein::rhs::gauge_residual_max;
use dust_einstein::state::{self, FieldState};
use proptest::prelude::*;

fn params() -> CosmologyParams {
    CosmologyParams::new(3.0, 1.0).expect("valid")
}

fn evolve(grid: &Grid3, initial: FieldState, first_step: u64, steps: u64) -> FieldState {
    let cfg = EvolutionConfig::new(StepperConfig::new(Some(0.01), 10.0));
    let mut ev = Evolver::new(grid, &params(), &cfg, initial, first_step).expect("valid config");
    for _ in 0..steps {
        ev.advance().expect("no breakdown");
    }
    ev.into_state()
}

#[test]
fn flrw_state_is_a_fixed_point_of_the_evolver() {
    let grid = Grid3::new(8).unwrap();
    let p = params();
    let end = evolve(&grid, FieldState::flrw(8, &p, 0.0), 0, 20);
    let drift = end.perturbation_max(&p).into_iter().fold(0.0f64, f64::max);
    assert!(drift <= 1e-12, "FLRW drifted by {drift:e}");
    assert!((end.t - 0.2).abs() < 1e-12);
}

#[test]
fn restarting_from_an_intermediate_state_is_bitwise_identical() {
    let grid = Grid3::new(8).unwrap();
    let initial = random_state(&grid, &params(), 0.0, 1e-3, 11, 2);
    let straight = evolve(&grid, initial.clone(), 0, 6);
    let halfway = evolve(&grid, initial, 0, 3);
    let mut buf = Vec::new();
    checkpoint::write_to(&mut buf, &Checkpoint { config_hash: 42, step: 3, state: halfway }).unwrap();
    let restored = checkpoint::read_from(buf.as_slice(), Some(42)).unwrap();
    let resumed = evolve(&grid, restored.state, restored.step, 3);
    assert_eq!(straight, resumed);
}

#[test]
fn checkpoint_from_another_config_is_rejected() {
    let ck = Checkpoint { config_hash: 1, step: 0, state: FieldState::flrw(8, &params(), 0.0) };
    let mut buf = Vec::new();
    checkpoint::write_to(&mut buf, &ck).unwrap();
    let err = checkpoint::read_from(buf.as_slice(), Some(2)).unwrap_err();
    assert!(matches!(err, CheckpointError::ConfigMismatch { expected: 2, found: 1 }), "{err:?}");
}

#[test]
fn constructed_data_is_finite_with_positive_density() {
    let grid = Grid3::new(8).unwrap();
    let p = params();
    let geo = perturbed_flrw(&grid, &p, &PerturbationSpec::random(1e-2, 5)).unwrap();
    let st = construct_modified_data(&grid, &geo, &p).unwrap();
    assert!(st.is_finite());
    assert!(st.field(state::RHO).iter().all(|&r| r > 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn constructed_data_satisfies_the_gauge(amplitude in 0.0f64..1e-3, seed in 0u64..1000) {
        let grid = Grid3::new(8).unwrap();
        let p = params();
        let geo = perturbed_flrw(&grid, &p, &PerturbationSpec::random(amplitude, seed)).unwrap();
        let st = construct_modified_data(&grid, &geo, &p).unwrap();
        let residual = gauge_residual_max(&grid, &st, &p).unwrap();
        prop_assert!(residual <= 1e-10, "gauge residual {residual:e}");
    }

    #[test]
    fn u0_agrees_with_the_quadratic_root(
        pert in proptest::array::uniform10(-0.1f64..0.1),
        usp in proptest::array::uniform3(-0.5f64..0.5),
    ) {
        let mut g: Mat4 = [[0.0; 4]; 4];
        let mut it = pert.iter();
        for mu in 0..4 {
            for nu in mu..4 {
                let base = match (mu, nu) {
                    (0, 0) => -1.0,
                    (m, n) if m == n => 1.0,
                    _ => 0.0,
                };
                g[mu][nu] = base + it.next().unwrap();
                g[nu][mu] = g[mu][nu];
            }
        }
        let ours = solve_u0(&MetricPoint::from_matrix(&g), &usp).unwrap();
        let oracle = dust_einstein_reference::normalized_u0(&g, &usp).unwrap();
        prop_assert!((ours - oracle).abs() <= 1e-12 * oracle.abs(), "{ours} vs {oracle}");
    }
}
