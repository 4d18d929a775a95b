use std::fs::File;
use std::io::BufReader;

use proptest::prelude::*;
use tugobs::geometry::{Domain, SpaceTimeLattice};
use tugobs::io::{read_field_csv, write_field_csv};
use tugobs::problem_data::{BoundaryData, Expr, GameParameters, Obstacle, Problem};
use tugobs::dpp_solver::{solve_time_marching, DppOperator};

fn problem(p: f64) -> Problem {
    Problem::new(
        GameParameters::new(p, 1, 0.2, 0.1).unwrap(),
        Domain::interval(-1.0, 1.0).unwrap(),
        BoundaryData {
            f: Expr::constant(0.0),
            lipschitz: 0.0,
        },
        Obstacle {
            psi: Expr::constant(-1.0),
            lipschitz: 0.0,
        },
    )
    .unwrap()
}

fn lattice(pr: &Problem) -> SpaceTimeLattice {
    SpaceTimeLattice::new(pr.domain.clone(), pr.params.eps, pr.params.eps / 8.0, pr.params.t_final).unwrap()
}

fn level(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_is_monotone(p in 2.0..10.0f64, seed in level(64), bump in level(64)) {
        let pr = problem(p);
        let lat = lattice(&pr);
        let n = lat.node_count();
        let v: Vec<f64> = (0..n).map(|i| seed[i % seed.len()]).collect();
        let w: Vec<f64> = (0..n).map(|i| v[i] + bump[(i * 7) % bump.len()].abs()).collect();
        let op = DppOperator::new(&lat, &pr).unwrap();
        for node in lat.interior_nodes() {
            prop_assert!(op.apply(&w, node, 1) >= op.apply(&v, node, 1) - 1e-12);
        }
    }

    #[test]
    fn operator_is_nonexpansive(p in 2.0..10.0f64, seed in level(64), bump in level(64)) {
        let pr = problem(p);
        let lat = lattice(&pr);
        let n = lat.node_count();
        let v: Vec<f64> = (0..n).map(|i| seed[i % seed.len()]).collect();
        let w: Vec<f64> = (0..n).map(|i| v[i] + bump[(i * 3) % bump.len()]).collect();
        let gap = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let op = DppOperator::new(&lat, &pr).unwrap();
        for node in lat.interior_nodes() {
            prop_assert!((op.apply(&w, node, 1) - op.apply(&v, node, 1)).abs() <= gap + 1e-12);
        }
    }

    #[test]
    fn constants_commute(p in 2.0..10.0f64, seed in level(64), shift in -3.0..3.0f64) {
        let pr = problem(p);
        let lat = lattice(&pr);
        let n = lat.node_count();
        let v: Vec<f64> = (0..n).map(|i| seed[i % seed.len()]).collect();
        let w: Vec<f64> = v.iter().map(|x| x + shift).collect();
        let op = DppOperator::new(&lat, &pr).unwrap();
        for node in lat.interior_nodes() {
            prop_assert!((op.averaging(&w, node) - op.averaging(&v, node) - shift).abs() <= 1e-12);
        }
    }
}

#[test]
fn field_survives_a_file() {
    let pr = problem(3.0);
    let u = solve_time_marching(&pr, 0.025).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.csv");
    write_field_csv(&u, File::create(&path).unwrap()).unwrap();
    let back = read_field_csv(BufReader::new(File::open(&path).unwrap()), &pr, 0.025).unwrap();
    assert_eq!(u.max_abs_diff(&back), 0.0);
}
