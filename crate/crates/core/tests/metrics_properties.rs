use inn_core::metrics::{coverage, direction_sweep, pwcc};
use inn_core::Tensor;
use proptest::collection::vec;
use proptest::prelude::*;

fn row(v: &[f64]) -> Tensor {
    Tensor::from_rows(&[v]).unwrap()
}

proptest! {
    #[test]
    fn coverage_is_monotone_in_lambda(
        data in vec((-2.0f64..2.0, 0.0f64..1.0, 0.0f64..1.0), 1..40),
        beta in 0.001f64..0.5,
    ) {
        let pred: Vec<f64> = data.iter().map(|d| d.0).collect();
        let lo = row(&data.iter().map(|d| d.0 - d.1).collect::<Vec<_>>());
        let hi = row(&data.iter().map(|d| d.0 + d.2).collect::<Vec<_>>());
        let y = row(&pred.iter().enumerate().map(|(i, p)| p + (i as f64 * 0.37).sin()).collect::<Vec<_>>());
        let mut last = 0.0;
        for lambda in [0.0, 0.5, 1.0, 2.0, 4.0, 10.0, 100.0] {
            let c = coverage(&lo, &hi, &y, lambda, beta).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn pwcc_ignores_positive_affine_rescaling(
        data in vec((-1.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0), 3..30),
        a in 0.01f64..100.0,
        b in -10.0f64..10.0,
    ) {
        let pred: Vec<f64> = data.iter().map(|d| d.0).collect();
        let y: Vec<f64> = data.iter().map(|d| d.1).collect();
        let u: Vec<f64> = data.iter().map(|d| d.2).collect();
        let v: Vec<f64> = u.iter().map(|x| a * x + b).collect();
        match (pwcc(&pred, &y, &u), pwcc(&pred, &y, &v)) {
            (Ok(p), Ok(q)) => prop_assert!((p - q).abs() <= 1e-8 * p.abs().max(1.0)),
            (Err(_), Err(_)) => {}
            (p, q) => prop_assert!(false, "{:?} vs {:?}", p, q),
        }
    }

    #[test]
    fn direction_proportion_is_nonincreasing(
        data in vec((-1.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0), 1..40),
    ) {
        let pred = row(&data.iter().map(|d| d.0).collect::<Vec<_>>());
        let lo = row(&data.iter().map(|d| d.0 - d.1).collect::<Vec<_>>());
        let hi = row(&data.iter().map(|d| d.0 + d.2).collect::<Vec<_>>());
        let y = row(&data.iter().map(|d| d.0 + d.3).collect::<Vec<_>>());
        let ts = [1.0, 1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 100.0];
        let sweep = direction_sweep(&pred, &lo, &hi, &y, &ts).unwrap();
        for w in sweep.windows(2) {
            prop_assert!(w[1].proportion <= w[0].proportion);
        }
        for p in &sweep {
            prop_assert!((0.0..=1.0).contains(&p.proportion));
            if let Some(a) = p.accuracy {
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }
    }
}
