//! Property tests across module boundaries.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use vlcloc::channel::{synthesize_received, ChannelParams, LedConfig, PdPose, Window, SPEED_OF_LIGHT};
use vlcloc::eval::error_cdf;
use vlcloc::fusion::{gi_ls_fit, ls_svd_weights, FusionMode, PredictionMatrix};
use vlcloc::linalg::{min_norm_lstsq, normal_equations};
use vlcloc::spectral::{mean_fingerprints, periodogram, DbMeta, FingerprintDb};
use vlcloc::Point2;

fn matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, &data[..rows * cols])
}

/// Tall matrix with a strong diagonal so it is comfortably full rank.
fn full_rank() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (2usize..5)
        .prop_flat_map(|h| (Just(h), h + 2..30))
        .prop_flat_map(|(h, l)| {
            (
                Just((l, h)),
                prop::collection::vec(-1.0f64..1.0, l * h),
                prop::collection::vec(-2.0f64..2.0, l),
            )
        })
        .prop_map(|((l, h), a, b)| {
            let mut m = matrix(l, h, &a);
            for k in 0..h {
                m[(k, k)] += 3.0;
            }
            (m, DVector::from_vec(b))
        })
}

fn norm(v: &DVector<f64>) -> f64 {
    v.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_solution_equals_normal_equations((a, b) in full_rank()) {
        let svd = min_norm_lstsq(&a, &b, 1e-12).unwrap();
        let ne = normal_equations(&a, &b, 1e-12).unwrap();
        prop_assert_eq!(svd.rank, a.ncols());
        prop_assert!((&svd.x - &ne).norm() <= 1e-8 * ne.norm().max(1.0));
    }

    #[test]
    fn residual_is_orthogonal_to_columns((a, b) in full_rank()) {
        let w = min_norm_lstsq(&a, &b, 1e-12).unwrap().x;
        let r = &b - &a * &w;
        let g = a.transpose() * r;
        prop_assert!(g.amax() <= 1e-9 * (a.norm() * b.norm()).max(1.0));
    }

    /// Duplicating a column adds a null-space direction; any move along it
    /// keeps the residual and lengthens the solution.
    #[test]
    fn minimum_norm_under_null_space_moves((a, b) in full_rank(), step in 0.05f64..2.0) {
        let (l, h) = a.shape();
        let dup = DMatrix::from_fn(l, h + 1, |i, j| a[(i, j.min(h - 1))]);
        let w = min_norm_lstsq(&dup, &b, 1e-10).unwrap();
        prop_assert_eq!(w.rank, h);
        let mut null = DVector::zeros(h + 1);
        null[h - 1] = step;
        null[h] = -step;
        let moved = &w.x + &null;
        let r0 = (&b - &dup * &w.x).norm();
        let r1 = (&b - &dup * &moved).norm();
        prop_assert!((r0 - r1).abs() <= 1e-9 * r0.max(1.0));
        prop_assert!(norm(&moved) > norm(&w.x));
    }

    /// Reordering the classifiers reorders the fused weights the same way.
    #[test]
    fn fusion_weights_follow_classifier_order(
        (a, b) in full_rank(),
        shift in 0usize..4,
    ) {
        let (l, h) = a.shape();
        let perm: Vec<usize> = (0..h).map(|j| (j + shift) % h).collect();
        let permuted = DMatrix::from_fn(l, h, |i, j| a[(i, perm[j])]);
        let names: Vec<String> = (0..h).map(|j| format!("c{j}")).collect();
        let truth: Vec<Point2> = b.iter().map(|&v| Point2::new(v, -v)).collect();
        let p0 = PredictionMatrix::new(a.clone(), a.clone(), names.clone()).unwrap();
        let p1 = PredictionMatrix::new(permuted.clone(), permuted, perm.iter().map(|&j| names[j].clone()).collect()).unwrap();
        let w0 = gi_ls_fit(&p0, &truth, FusionMode::SvdLs, None).unwrap();
        let w1 = gi_ls_fit(&p1, &truth, FusionMode::SvdLs, None).unwrap();
        for (j, &src) in perm.iter().enumerate() {
            prop_assert!((w1.wx[j] - w0.wx[src]).abs() <= 1e-9 * (1.0 + w0.wx[src].abs()));
            prop_assert!((w1.wy[j] - w0.wy[src]).abs() <= 1e-9 * (1.0 + w0.wy[src].abs()));
        }
    }

    /// Scaling the truth scales the weights.
    #[test]
    fn weights_are_linear_in_truth((a, b) in full_rank(), c in -5.0f64..5.0) {
        let w = ls_svd_weights(&a, &b, None).unwrap().weights;
        let wc = ls_svd_weights(&a, &(&b * c), None).unwrap().weights;
        prop_assert!((&wc - &w * c).norm() <= 1e-9 * (1.0 + w.norm() * c.abs()));
    }

    /// The noise-free received signal is the sum of the single-LED signals.
    #[test]
    fn noise_free_signal_superposes(x in -0.5f64..0.5, y in -0.5f64..0.5) {
        let led = |px: f64, f: f64| LedConfig { position: [px, 0.3, 1.5], frequency_hz: f, amplitude: 1.0, gain: 100.0 };
        let a = led(0.8, 800e3);
        let b = led(-0.8, 900e3);
        let params = ChannelParams {
            lambertian_order: 1.0,
            pd_area: 1e-4,
            noise_std: 0.0,
            speed_of_light: SPEED_OF_LIGHT,
            sample_rate: 4e6,
            window: Window::Rectangular,
        };
        let pd = PdPose::new(x, y);
        let both = synthesize_received(&[a, b], &pd, &params, 256, 0).unwrap();
        let ya = synthesize_received(&[a], &pd, &params, 256, 0).unwrap();
        let yb = synthesize_received(&[b], &pd, &params, 256, 0).unwrap();
        for t in 0..256 {
            prop_assert!((both[t] - ya[t] - yb[t]).abs() <= 1e-15 + 1e-12 * both[t].abs());
        }
    }

    #[test]
    fn periodogram_is_parseval_exact(samples in prop::collection::vec(-10.0f64..10.0, 2..300)) {
        let psd = periodogram(&samples, 1.0).unwrap();
        let freq: f64 = psd.bin_values.iter().sum();
        let time: f64 = samples.iter().map(|v| v * v).sum();
        prop_assert!((freq - time).abs() <= 1e-9 * time.max(1e-300));
    }

    /// Mean fingerprints ignore the order of blocks within a grid point.
    #[test]
    fn mean_fingerprint_ignores_block_order(
        values in prop::collection::vec(-90.0f64..-10.0, 24),
        rot in 0usize..6,
    ) {
        let grid = vec![Point2::new(0.0, 0.0), Point2::new(0.05, 0.0)];
        let blocks = |g: usize, order: &dyn Fn(usize) -> usize| -> Vec<Vec<f64>> {
            (0..6).map(|q| values[g * 12 + order(q) * 2..g * 12 + order(q) * 2 + 2].to_vec()).collect()
        };
        let meta = DbMeta { fft_len: 2000, sample_rate: 4e6 };
        let tones = vec![800e3, 900e3];
        let plain = FingerprintDb::new(grid.clone(), (0..2).map(|g| blocks(g, &|q| q)).collect(), tones.clone(), meta).unwrap();
        let rotated = FingerprintDb::new(grid, (0..2).map(|g| blocks(g, &|q| (q + rot) % 6)).collect(), tones, meta).unwrap();
        let (a, b) = (mean_fingerprints(&plain), mean_fingerprints(&rotated));
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs());
            }
        }
    }

    /// A quantized database survives the text format bit for bit.
    #[test]
    fn db_text_round_trip(values in prop::collection::vec(-300.0f64..0.0, 12)) {
        let db = FingerprintDb::new(
            vec![Point2::new(0.1, 0.2), Point2::new(-0.35, 1.0 / 3.0)],
            vec![vec![values[0..3].to_vec(), values[3..6].to_vec()], vec![values[6..9].to_vec(), values[9..12].to_vec()]],
            vec![800e3, 850e3, 900e3],
            DbMeta { fft_len: 2000, sample_rate: 4e6 },
        )
        .unwrap()
        .quantized();
        let back = FingerprintDb::from_text(&db.to_text()).unwrap();
        prop_assert_eq!(back, db);
    }

    #[test]
    fn cdf_is_monotone_and_reaches_one(errors in prop::collection::vec(0.0f64..2.0, 1..200)) {
        let worst = errors.iter().copied().fold(0.0, f64::max);
        let thresholds: Vec<f64> = (0..=40).map(|i| i as f64 * worst / 40.0).collect();
        let cdf = error_cdf(&errors, &thresholds);
        prop_assert!(cdf.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*cdf.last().unwrap(), 1.0);
    }
}
