use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use knobforge::eval::mape;
use knobforge::regress::gpr::{fit_gpr, log_marginal_likelihood};
use knobforge::regress::mlp::fit_mlp;
use knobforge::regress::{GprHyperparams, MlpHyperparams};

/// `y = 3x + 2` for x evenly spaced on [1, 10]; the network sees x
/// standardized, as the pipeline would pass it.
fn linear_task(n: usize) -> (DMatrix<f64>, Vec<f64>) {
    let raw: Vec<f64> = (0..n).map(|i| 1.0 + 9.0 * i as f64 / (n - 1) as f64).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let x = DMatrix::from_fn(n, 1, |i, _| (raw[i] - mean) / sd);
    let y = raw.iter().map(|v| 3.0 * v + 2.0).collect();
    (x, y)
}

#[test]
fn mlp_learns_a_line() {
    let (x, y) = linear_task(40);
    let hp = MlpHyperparams {
        epochs: 1500,
        ..MlpHyperparams::default()
    };
    // A fixed learning rate on an L1-type loss oscillates around the optimum
    // instead of settling, so check the best epoch rather than the last.
    let m = fit_mlp(&x, &y, &hp, 0).unwrap();
    let best = m.loss_trace.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(best < 0.02, "best fractional MAPE {best}");
}

#[test]
fn default_budget_beats_the_mean_predictor() {
    let (x, y) = linear_task(40);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let baseline = mape(&y, &vec![mean; y.len()]).unwrap();
    let m = fit_mlp(&x, &y, &MlpHyperparams::default(), 0).unwrap();
    let err = mape(&y, &m.predict(&x)).unwrap();
    assert!(err < baseline / 5.0, "MAPE {err} vs mean predictor {baseline}");
}

#[test]
fn mlp_loss_drops_within_fifty_epochs() {
    let (x, y) = linear_task(40);
    for seed in 0..5 {
        let hp = MlpHyperparams {
            epochs: 50,
            ..MlpHyperparams::default()
        };
        let m = fit_mlp(&x, &y, &hp, seed).unwrap();
        let (first, last) = (m.loss_trace[0], *m.loss_trace.last().unwrap());
        assert!(last < first, "seed {seed}: {first} -> {last}");
    }
}

#[test]
fn mlp_fit_is_seed_deterministic() {
    let (x, y) = linear_task(20);
    let hp = MlpHyperparams {
        epochs: 30,
        ..MlpHyperparams::default()
    };
    assert_eq!(fit_mlp(&x, &y, &hp, 7).unwrap(), fit_mlp(&x, &y, &hp, 7).unwrap());
    assert_ne!(fit_mlp(&x, &y, &hp, 7).unwrap(), fit_mlp(&x, &y, &hp, 8).unwrap());
}

#[test]
fn huge_alpha_lowers_the_likelihood_of_a_sinusoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = DMatrix::from_fn(30, 1, |i, _| i as f64 / 3.0);
    let y: Vec<f64> = x
        .iter()
        .map(|v| 20.0 + 5.0 * v.sin() + rng.random_range(-0.5..0.5))
        .collect();
    let lml = |alpha| {
        log_marginal_likelihood(
            &x,
            &y,
            &GprHyperparams {
                alpha,
                length_scale: 1.0,
                signal_variance: 10.0,
                optimize_kernel: false,
            },
        )
        .unwrap()
    };
    assert!(lml(1e-1) > lml(1e5));

    let (train, val): (Vec<usize>, Vec<usize>) = (0..30).partition(|i| i % 3 != 0);
    let xt = x.select_rows(train.iter());
    let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let yv: Vec<f64> = val.iter().map(|&i| y[i]).collect();
    let err = |alpha| {
        let m = fit_gpr(
            &xt,
            &yt,
            &GprHyperparams {
                alpha,
                ..GprHyperparams::default()
            },
        )
        .unwrap();
        mape(&yv, &m.predict(&x.select_rows(val.iter()))).unwrap()
    };
    assert!(err(1e-1) < err(1e5));
}
