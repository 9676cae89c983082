use proptest::prelude::*;

use dddopt::estimator::exact_full_gradient;
use dddopt::grid::{DataGrid, LabelKind};
use dddopt::losses::{loss_value, per_obs_gradient, LossKind, LossModel};

const ALL: [LossKind; 4] = [
    LossKind::Hinge,
    LossKind::SmoothedHinge,
    LossKind::Logistic,
    LossKind::LeastSquares,
];

fn small_grid(kind: LossKind, x: &[f64], y: &[f64]) -> DataGrid {
    let m = x.len() / y.len();
    if kind.needs_sign_labels() {
        let labels = y
            .iter()
            .map(|&v| if v >= 0.0 { 1.0 } else { -1.0 })
            .collect();
        DataGrid::from_dense(m, x.to_vec(), labels, LabelKind::Classification).unwrap()
    } else {
        DataGrid::from_dense(m, x.to_vec(), y.to_vec(), LabelKind::Regression).unwrap()
    }
}

fn problem() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..6, 1usize..5).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-2.0..2.0f64, n * m),
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-3.0..3.0f64, m),
            prop::collection::vec(-3.0..3.0f64, m),
        )
    })
}

proptest! {
    #[test]
    fn convex_along_segments((x, y, u, v) in problem(), s in 0.0..1.0f64, l2 in 0.0..1.0f64) {
        for kind in ALL {
            let grid = small_grid(kind, &x, &y);
            let model = LossModel::new(kind).with_l2(l2);
            let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| s * a + (1.0 - s) * b).collect();
            let f_mid = loss_value(&model, &grid, &mid).unwrap();
            let chord = s * loss_value(&model, &grid, &u).unwrap() + (1.0 - s) * loss_value(&model, &grid, &v).unwrap();
            prop_assert!(f_mid <= chord + 1e-10 * (1.0 + chord.abs()), "{:?}: {} > {}", kind, f_mid, chord);
        }
    }

    #[test]
    fn gradient_is_a_subgradient((x, y, u, v) in problem()) {
        for kind in ALL {
            let grid = small_grid(kind, &x, &y);
            let model = LossModel::new(kind);
            let g = exact_full_gradient(&model, &grid, &u, true).unwrap();
            let fu = loss_value(&model, &grid, &u).unwrap();
            let fv = loss_value(&model, &grid, &v).unwrap();
            let lin: f64 = g.iter().zip(v.iter().zip(&u)).map(|(gk, (a, b))| gk * (a - b)).sum();
            prop_assert!(fv >= fu + lin - 1e-9 * (1.0 + fv.abs()), "{:?}", kind);
        }
    }

    #[test]
    fn smooth_losses_match_central_differences((x, y, u, _v) in problem(), l2 in 0.0..0.5f64) {
        for kind in ALL.into_iter().filter(|k| k.is_smooth()) {
            let grid = small_grid(kind, &x, &y);
            let model = LossModel::new(kind).with_l2(l2);
            let g = exact_full_gradient(&model, &grid, &u, true).unwrap();
            for k in 0..u.len() {
                let h = 1e-6;
                let mut up = u.clone();
                let mut dn = u.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (loss_value(&model, &grid, &up).unwrap() - loss_value(&model, &grid, &dn).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0), "{:?} k={}: {} vs {}", kind, k, fd, g[k]);
            }
        }
    }
}

#[test]
fn per_observation_gradients_average_to_the_full_gradient() {
    let x = [1.0, -0.5, 0.3, 2.0, 0.0, -1.0];
    let grid = DataGrid::from_dense(
        2,
        x.to_vec(),
        vec![1.0, -1.0, 1.0],
        LabelKind::Classification,
    )
    .unwrap();
    let w = [0.4, -0.2];
    for kind in ALL {
        let model = LossModel::new(kind).with_l2(0.3);
        let full = exact_full_gradient(&model, &grid, &w, true).unwrap();
        let mut avg = [0.0; 2];
        for j in 0..3 {
            let g = per_obs_gradient(&model, &grid, j, &w, true).unwrap();
            avg[0] += g[0] / 3.0;
            avg[1] += g[1] / 3.0;
        }
        assert!(
            (avg[0] - full[0]).abs() < 1e-14 && (avg[1] - full[1]).abs() < 1e-14,
            "{kind:?}"
        );
    }
}
