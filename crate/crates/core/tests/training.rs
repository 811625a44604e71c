use wavelearn::dataio::{generate, GenKind, GenParams};
use wavelearn::dwt::basis_function_1d;
use wavelearn::objective::ConditionMask;
use wavelearn::trainer::{train, Termination, TrainConfig};
use wavelearn::Dataset;

fn point_like(side: usize, count: usize, seed: u64) -> Dataset {
    generate(
        GenKind::PointLike,
        &[side, side],
        count,
        seed,
        &GenParams::default(),
    )
    .unwrap()
}

fn small_config(n_filt: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        n_filt,
        learning_rate: 1e-4,
        lambda_final: 100.0,
        anneal_steps: 200,
        batch_size: 16,
        max_steps: 400,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn identical_inputs_give_identical_histories() {
    let data = point_like(8, 40, 11);
    let cfg = small_config(4, 5);
    let (fa, ha) = train(&data, &cfg).unwrap();
    let (fb, hb) = train(&data, &cfg).unwrap();
    assert_eq!(fa, fb);
    assert_eq!(ha, hb);

    let other = TrainConfig { seed: 6, ..cfg };
    let (_, hc) = train(&data, &other).unwrap();
    assert_ne!(ha.records[0].a, hc.records[0].a);
}

#[test]
fn running_best_never_increases() {
    let data = point_like(8, 40, 12);
    let (fb, history) = train(&data, &small_config(6, 1)).unwrap();
    assert_eq!(history.records.len(), history.steps);
    assert!(history.steps <= 400);
    let best = history.running_best();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));

    let chosen = history.best().unwrap();
    assert_eq!(chosen.objective, *best.last().unwrap());
    assert_eq!(chosen.a, fb.coeffs());
}

#[test]
fn strong_penalty_yields_a_valid_wavelet() {
    let data = point_like(8, 60, 13);
    for (n_filt, seed) in [(2, 0), (4, 2), (6, 3)] {
        let cfg = TrainConfig {
            max_steps: 1500,
            anneal_steps: 500,
            batch_size: 20,
            ..small_config(n_filt, seed)
        };
        let (fb, history) = train(&data, &cfg).unwrap();
        let total = fb.conditions().total;
        assert!(total < 1e-3, "n_filt {n_filt}: conditions {total:e}");
        assert_eq!(history.termination, Termination::MaxSteps);
    }
}

#[test]
fn orthonormality_alone_learns_the_pixel_basis() {
    let data = point_like(16, 100, 14);
    let cfg = TrainConfig {
        n_filt: 8,
        learning_rate: 3e-4,
        lambda_final: 100.0,
        anneal_steps: 500,
        batch_size: 32,
        max_steps: 6000,
        seed: 4,
        conditions: ConditionMask([false, true, true, false, false]),
        ..TrainConfig::default()
    };
    let (fb, _) = train(&data, &cfg).unwrap();
    for index in 0..16 {
        let f = basis_function_1d(index, 4, &fb).unwrap();
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let peak = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(
            peak > 0.9 * norm,
            "basis {index}: peak {peak}, norm {norm}, taps {:?}",
            fb.coeffs()
        );
    }
}
