use asmd_core::asmd::{self, AlphaSchedule, AsmdConfig, StartPoint};
use asmd_core::bregman::{DistanceGenerator, Generator};
use asmd_core::data::{self, load_libsvm, write_libsvm};
use asmd_core::linalg;
use asmd_core::prox::prox_l1;
use asmd_core::smoothing::{ScalarSmoother, SmootherKind};
use proptest::prelude::*;

proptest! {
    #[test]
    fn soft_threshold_satisfies_optimality(
        v in -10.0f64..10.0, z0 in -10.0f64..10.0, theta in 0.1f64..10.0, lambda in 0.0f64..5.0,
    ) {
        let x = prox_l1(&[v], theta, &[z0], lambda).unwrap().point[0];
        // 0 ∈ v + λ∂|x| + θ(x − z₀)
        let g = v + theta * (x - z0);
        if x != 0.0 {
            prop_assert!((g + lambda * x.signum()).abs() <= 1e-9 * (1.0 + g.abs()));
        } else {
            prop_assert!(g.abs() <= lambda + 1e-9);
        }
    }

    #[test]
    fn euclidean_distance_is_half_squared_norm(x in prop::collection::vec(-50.0f64..50.0, 1..8), shift in -5.0f64..5.0) {
        let y: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let d = Generator::Euclidean.distance(&x, &y).unwrap();
        prop_assert!((d - 0.5 * shift * shift * x.len() as f64).abs() <= 1e-9 * (1.0 + d));
    }

    #[test]
    fn schedule_weights_are_a_convex_combination(nu in 2.0f64..20.0, frac in 0.05f64..1.0, s in 4usize..100_000) {
        let alpha3 = frac * (nu - 1.0) / (nu + 1.0);
        let w = AlphaSchedule::new(nu, alpha3).unwrap().at(s);
        prop_assert!(w.alpha1 >= 0.0 && w.alpha2 > 0.0 && w.alpha3 > 0.0);
        prop_assert!((w.alpha1 + w.alpha2 + w.alpha3 - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn smoothers_are_convex_and_monotone(mu in 1e-3f64..1.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        for kind in [SmootherKind::Sqrt, SmootherKind::Neural] {
            let f = ScalarSmoother::new(kind, mu).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(f.value(lo) <= f.value(hi) + 1e-15);
            let mid = 0.5 * (a + b);
            prop_assert!(f.value(mid) <= 0.5 * (f.value(a) + f.value(b)) + 1e-12);
        }
    }
}

#[test]
fn libsvm_file_round_trip() {
    let data = data::generate_synthetic_classification(25, 6, 0.2, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy_scale.txt");
    write_libsvm(&data, std::fs::File::create(&path).unwrap()).unwrap();
    let back = load_libsvm(&path).unwrap();
    assert!(back.scaled());
    assert_eq!(back.dim(), data.dim());
    assert_eq!(back.features(), data.features());
    assert_eq!(back.labels(), data.labels());
}

#[test]
fn asmd_decreases_lasso_objective_from_a_libsvm_file() {
    let (data, _) = data::generate_synthetic_lasso(120, 6, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lasso.txt");
    write_libsvm(&data, std::fs::File::create(&path).unwrap()).unwrap();
    let loaded = load_libsvm(&path).unwrap();
    let p = data::build_lasso_problem(&loaded, 0.05).unwrap();
    let x0 = vec![0.0; 6];
    let f0 = p.objective_value(&x0).unwrap();
    let t = asmd::run(&p, AsmdConfig::new(120, 10, 3), &StartPoint::at(&x0)).unwrap();
    let f = t.last().unwrap().objective;
    assert!(f < 1e-2 * f0, "{f} vs {f0}");
    assert_eq!(t.last().unwrap().gradient_evaluations, 10 * (120 + 2 * 120));
    assert!(linalg::all_finite(&t.final_point));
}
