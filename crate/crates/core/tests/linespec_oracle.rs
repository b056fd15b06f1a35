use lofar_core::linespec::{
    calibrate, extract_linespectrum, extract_with_thresholds, gamma_from_noise, path_cost,
    track_window, windows_covering, CostWeights, SearchMode, Thresholds, TrackerConfig, A_GUARD,
};
use lofar_core::signal::{AmplitudeScale, Spectrogram};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn linear(a: Array2<f64>) -> Spectrogram {
    Spectrogram::from_amplitudes(a, AmplitudeScale::Linear).unwrap()
}

/// Cost of one path, evaluated term by term in frame order.
fn oracle_cost(a: &Array2<f64>, rows: &[usize], w: &CostWeights) -> f64 {
    let mut sum_a = 0.0;
    let mut bends = 0.0;
    let mut breaks = 0usize;
    for (t, &r) in rows.iter().enumerate() {
        sum_a += a[(r, t)];
        if a[(r, t)] < w.epsilon {
            breaks += 1;
        }
        if t >= 2 {
            let before = rows[t - 2] as f64 - rows[t - 1] as f64;
            let after = rows[t - 1] as f64 - rows[t] as f64;
            bends += (before - after).abs();
        }
    }
    (w.lambda_f * bends + w.mu_t * breaks as f64) / sum_a.max(A_GUARD)
}

/// Lowest cost over all `L^N` paths of the window at `start`.
fn brute_force(a: &Array2<f64>, start: usize, w: &CostWeights) -> (f64, Vec<usize>) {
    let (l, n) = (w.window_len, a.ncols());
    let mut best = (f64::INFINITY, Vec::new());
    let mut digits = vec![0usize; n];
    loop {
        let rows: Vec<usize> = digits.iter().map(|d| start + d).collect();
        let c = oracle_cost(a, &rows, w);
        if c < best.0 {
            best = (c, rows);
        }
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < l {
                break;
            }
            digits[i] = 0;
        }
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Array2<f64>, CostWeights) {
    let m = rng.random_range(3..=10);
    let n = rng.random_range(1..=6);
    let l = rng.random_range(2..=3.min(m));
    let a = Array2::from_shape_fn((m, n), |_| {
        if rng.random_bool(0.15) {
            0.0
        } else {
            rng.random_range(0.0..4.0)
        }
    });
    let w = CostWeights {
        lambda_f: rng.random_range(0.0..2.0),
        mu_t: rng.random_range(0.1..2.0),
        epsilon: rng.random_range(0.0..2.0),
        window_len: l,
    };
    (a, w)
}

fn rayleigh(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((m, n), |_| {
        let x: f64 = StandardNormal.sample(&mut rng);
        let y: f64 = StandardNormal.sample(&mut rng);
        x.hypot(y)
    })
}

#[test]
fn exact_search_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..100 {
        let (a, w) = random_instance(&mut rng);
        let start = rng.random_range(0..=a.nrows() - w.window_len);
        let spec = linear(a.clone());
        let got = track_window(&spec, start, &w, SearchMode::Exact).unwrap();
        let (want, _) = brute_force(&a, start, &w);
        assert_eq!(got.state.cost, want, "trial {trial}");
        assert_eq!(oracle_cost(&a, &got.bins, &w), want, "trial {trial}");
        assert!(got.bins.iter().all(|&r| (start..start + w.window_len).contains(&r)));
    }
}

#[test]
fn greedy_search_is_never_better_than_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (a, w) = random_instance(&mut rng);
        let spec = linear(a.clone());
        let exact = track_window(&spec, 0, &w, SearchMode::Exact).unwrap();
        let greedy = track_window(&spec, 0, &w, SearchMode::Greedy).unwrap();
        assert!(greedy.state.cost >= exact.state.cost);
        assert_eq!(oracle_cost(&a, &greedy.bins, &w), greedy.state.cost);
    }
}

#[test]
fn gamma_is_the_smallest_window_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let a = Array2::from_shape_fn((8, 5), |_| rng.random_range(0.1..3.0));
        let w = CostWeights {
            lambda_f: 1.0,
            mu_t: 1.0,
            epsilon: 1.0,
            window_len: 3,
        };
        let want = (0..=5)
            .map(|k| brute_force(&a, k, &w).0)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(gamma_from_noise(&linear(a.clone()), &w, SearchMode::Exact).unwrap(), want);

        let louder = a.mapv(|v| 1.5 * v);
        let g2 = gamma_from_noise(&linear(louder), &w, SearchMode::Exact).unwrap();
        assert!(g2 <= want);
    }
}

#[test]
fn path_cost_agrees_with_term_by_term_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let (a, w) = random_instance(&mut rng);
        let rows: Vec<usize> = (0..a.ncols()).map(|_| rng.random_range(0..a.nrows())).collect();
        let amps: Vec<f64> = rows.iter().enumerate().map(|(t, &r)| a[(r, t)]).collect();
        assert_eq!(path_cost(&amps, &rows, &w).cost, oracle_cost(&a, &rows, &w));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Amplitudes stay above epsilon so the breakpoint count is fixed.
    #[test]
    fn boosting_the_best_path_keeps_it_best(
        seed in any::<u64>(),
        gain in 1.0f64..4.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((6, 5), |_| rng.random_range(0.5..3.0));
        let w = CostWeights { lambda_f: 1.0, mu_t: 1.0, epsilon: 0.25, window_len: 3 };
        let before = track_window(&linear(a.clone()), 1, &w, SearchMode::Exact).unwrap();
        let mut boosted = a.clone();
        for (t, &r) in before.bins.iter().enumerate() {
            boosted[(r, t)] *= gain;
        }
        let own = oracle_cost(&boosted, &before.bins, &w);
        prop_assert!(own <= before.state.cost);
        let (best, _) = brute_force(&boosted, 1, &w);
        prop_assert_eq!(own, best);
    }

    #[test]
    fn counts_never_exceed_window_coverage(
        seed in any::<u64>(),
        gamma in 0.0f64..3.0,
    ) {
        let a = rayleigh(12, 6, seed);
        let cfg = TrackerConfig { window_len: 3, ..TrackerConfig::default() };
        let th = Thresholds { epsilon: 1.0, gamma };
        let map = extract_with_thresholds(&linear(a), &cfg, &th).unwrap();
        for ((row, _), &c) in map.counts.indexed_iter() {
            prop_assert!(c as usize <= windows_covering(12, 3, row));
        }
        prop_assert!(map.detections <= map.windows);
        prop_assert_eq!(map.counts.sum() as usize, map.detections * 6);
    }
}

#[test]
fn broken_line_is_completed() {
    let (m, n, row) = (256, 64, 120);
    let noise = linear(rayleigh(m, n, 1));
    let cfg = TrackerConfig::default();
    let th = calibrate(std::slice::from_ref(&noise), &cfg).unwrap();

    let mut a = rayleigh(m, n, 2);
    for t in 0..n {
        a[(row, t)] += 3.0;
    }
    let gaps: Vec<usize> = (0..n).filter(|t| t % 5 == 2).collect();
    assert!(gaps.len() as f64 >= 0.2 * n as f64);
    for &t in &gaps {
        a[(row, t)] = 0.0;
    }
    let map = extract_with_thresholds(&linear(a), &cfg, &th).unwrap();
    let supported = (0..n).filter(|&t| map.counts[(row, t)] > 0).count();
    assert!(supported as f64 >= 0.95 * n as f64, "{supported}/{n}");
    assert!(gaps.iter().all(|&t| map.counts[(row, t)] > 0));

    let own = extract_with_thresholds(&noise, &cfg, &th).unwrap();
    assert!(own.detection_rate() <= 0.05);
    let fresh = extract_with_thresholds(&linear(rayleigh(m, n, 3)), &cfg, &th).unwrap();
    assert!(fresh.detection_rate() <= 0.05, "{}", fresh.detection_rate());
}

#[test]
fn separated_lines_give_separate_ridges() {
    let mut a = Array2::zeros((40, 10));
    a.row_mut(10).fill(5.0);
    a.row_mut(22).fill(5.0);
    let cfg = TrackerConfig::default();
    let th = Thresholds { epsilon: 1.0, gamma: 0.5 };
    let map = extract_with_thresholds(&linear(a), &cfg, &th).unwrap();
    let rows: Vec<usize> = (0..40).filter(|&r| map.counts.row(r).sum() > 0).collect();
    assert_eq!(rows, vec![10, 22]);
    assert_eq!(map.counts[(10, 0)] as usize, windows_covering(40, 5, 10));
}

#[test]
fn thread_count_does_not_change_counts() {
    let noise = linear(rayleigh(128, 32, 8));
    let mut a = rayleigh(128, 32, 9);
    a.row_mut(40).mapv_inplace(|v| v + 4.0);
    let spec = linear(a);
    let cfg = TrackerConfig::default();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| extract_linespectrum(&spec, &noise, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn shapes_must_agree() {
    let cfg = TrackerConfig::default();
    let a = linear(Array2::ones((10, 4)));
    let b = linear(Array2::ones((10, 5)));
    assert!(extract_linespectrum(&a, &b, &cfg).is_err());
    let log = Spectrogram::from_amplitudes(Array2::ones((10, 4)), AmplitudeScale::LogAmplitude).unwrap();
    let th = Thresholds { epsilon: 0.0, gamma: 0.0 };
    assert!(extract_with_thresholds(&log, &cfg, &th).is_err());
}
