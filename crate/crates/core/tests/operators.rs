mod common;

use std::f64::consts::PI;

use common::DenseOps;
use kwc::grid::{div, grad, inner_face, inner_h, neumann_laplacian, norm_h, FaceField};
use kwc::{Grid, ScalarField};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    prop_oneof![
        (2usize..40, 0.1f64..10.0).prop_map(|(n, l)| Grid::line(n, l).unwrap()),
        (2usize..12, 2usize..12, 0.1f64..10.0, 0.1f64..10.0).prop_map(|(a, b, l1, l2)| Grid::new(
            2,
            &[a, b],
            &[l1, l2]
        )
        .unwrap()),
    ]
}

fn field(grid: &Grid, seed: &[f64]) -> ScalarField {
    ScalarField::from_values(
        grid,
        (0..grid.num_cells())
            .map(|i| seed[i % seed.len()] * (1.0 + i as f64).sin())
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn div_is_negative_adjoint_of_grad(grid in grid_strategy(), s in prop::collection::vec(-1.0f64..1.0, 1..8)) {
        let z = field(&grid, &s);
        let axes = (0..grid.dim())
            .map(|k| (0..grid.num_faces(k)).map(|f| s[f % s.len()] * (f as f64).cos()).collect())
            .collect();
        let w = FaceField::from_axes(&grid, axes).unwrap();
        let lhs = inner_face(&grad(&z), &w).unwrap();
        let rhs = -inner_h(&z, &div(&w)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn laplacian_matches_dense_assembly(grid in grid_strategy(), s in prop::collection::vec(-1.0f64..1.0, 1..8)) {
        let z = field(&grid, &s);
        let ops = DenseOps::new(&grid);
        let a = ops.laplacian_matrix();
        let ours = neumann_laplacian(&z);
        for (i, row) in a.iter().enumerate() {
            let dense: f64 = row.iter().zip(z.values()).map(|(x, y)| x * y).sum();
            prop_assert!((dense - ours.values()[i]).abs() <= 1e-10 * (1.0 + dense.abs()));
        }
        // symmetric, rows sum to zero
        for (i, row) in a.iter().enumerate() {
            prop_assert!(row.iter().sum::<f64>().abs() <= 1e-9 * row[i].abs().max(1.0));
            for (j, x) in row.iter().enumerate().take(i) {
                prop_assert_eq!(*x, a[j][i]);
            }
        }
    }

    #[test]
    fn constants_are_in_the_kernel(grid in grid_strategy(), c in -5.0f64..5.0) {
        let z = ScalarField::constant(&grid, c);
        prop_assert_eq!(neumann_laplacian(&z).max_abs(), 0.0);
        prop_assert!(grad(&z).axes().iter().flatten().all(|&x| x == 0.0));
    }
}

fn laplacian_error(n: usize) -> f64 {
    let grid = Grid::line(n, 1.0).unwrap();
    let z = ScalarField::from_fn(&grid, |x| (PI * x[0]).cos());
    let exact = z.scale(PI * PI);
    neumann_laplacian(&z).sub(&exact).max_abs()
}

#[test]
fn laplacian_is_second_order_on_a_neumann_mode() {
    let errs: Vec<f64> = [16, 32, 64, 128]
        .iter()
        .map(|&n| laplacian_error(n))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "observed order {order}, errors {errs:?}");
    }
}

#[test]
fn two_dimensional_mode_is_an_approximate_eigenfunction() {
    let grid = Grid::new(2, &[32, 48], &[1.0, 2.0]).unwrap();
    let z = ScalarField::from_fn(&grid, |x| (PI * x[0]).cos() * (PI * x[1] / 2.0).cos());
    let lambda = PI * PI * 1.25;
    let r = neumann_laplacian(&z).sub(&z.scale(lambda));
    assert!(norm_h(&r) / norm_h(&z) < 0.01);
}
