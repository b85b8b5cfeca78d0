//! Translation-kernel profiles, iterated means and envelopes against closed
//! forms and packing bounds computed here.

use matrix_compactness::almost_periodic::*;
use matrix_compactness::envelope::*;
use matrix_compactness::fubini::*;
use matrix_compactness::kernel::IndexSampling;
use matrix_compactness::SampledKernel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rows_of(k: &SampledKernel) -> Vec<Vec<f64>> {
    (0..k.n_rows()).map(|i| k.row(i).to_vec()).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Size of a greedily built set of rows pairwise more than `2 eps` apart: a
/// lower bound for any `eps`-cover.
fn packing(vs: &[Vec<f64>], eps: f64) -> usize {
    let mut chosen: Vec<&Vec<f64>> = Vec::new();
    for v in vs {
        if chosen.iter().all(|c| dist(c, v) > 2.0 * eps) {
            chosen.push(v);
        }
    }
    chosen.len()
}

fn window_kernel(f: fn(f64) -> f64, w: f64) -> SampledKernel {
    let s = window_sampling(w, 8.0, GroupOp::RealAddition).unwrap();
    ap_kernel(f, s.clone(), s, GroupOp::RealAddition, None).unwrap()
}

#[test]
fn cos_counts_stay_below_the_phase_cover() {
    // |cos(x + y) - cos(c + y)| <= 2 |sin((x - c) / 2)|, so centers every
    // 4 asin(eps / 2) in phase cover every row.
    let eps = 0.5;
    let phase_cover = (std::f64::consts::TAU / (4.0 * (eps / 2.0f64).asin())).ceil() as usize + 1;
    let p = ap_profile(f64::cos, &[8.0, 16.0, 32.0], 8.0, &[eps], GroupOp::RealAddition).unwrap();
    for &c in &p.profile.counts[0] {
        assert!(c <= phase_cover, "{c} > {phase_cover}");
    }
    assert_eq!(p.profile.counts[0][1], p.profile.counts[0][2]);
    assert_eq!(p.classification, ApClassification::AlmostPeriodicConsistent);
}

#[test]
fn chirp_packings_grow() {
    let chirp = |x: f64| (x * x).sin();
    let packs: Vec<usize> = [8.0, 16.0, 32.0].iter().map(|&w| packing(&rows_of(&window_kernel(chirp, w)), 0.5)).collect();
    assert!(packs.windows(2).all(|w| w[1] as f64 >= 1.5 * w[0] as f64), "{packs:?}");
    let p = ap_profile(chirp, &[8.0, 16.0, 32.0], 8.0, &[0.5], GroupOp::RealAddition).unwrap();
    for (c, pk) in p.profile.counts[0].iter().zip(&packs) {
        assert!(c >= pk);
    }
    assert!(p.profile.counts[0].windows(2).all(|w| w[1] > w[0]));
    assert_eq!(p.classification, ApClassification::NotAlmostPeriodic);
}

#[test]
fn translation_kernels_depend_on_the_sum() {
    let k = window_kernel(f64::cos, 4.0);
    let s = window_sampling(4.0, 8.0, GroupOp::RealAddition).unwrap();
    for i in 0..k.n_rows() {
        for j in 0..k.n_cols() {
            assert_eq!(k.get(i, j), (s.coords(i)[0] + s.coords(j)[0]).cos());
        }
    }
    let c = IndexSampling::from_coords(&[1.0, 4.0, 6.0]).unwrap();
    let circle = ap_kernel(f64::cos, c.clone(), c, GroupOp::CircleAddition, None).unwrap();
    assert!((circle.get(1, 2) - (10.0 - std::f64::consts::TAU).cos()).abs() < 1e-15);
}

#[test]
fn iterated_means_equal_the_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let (m, n) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let rows = IndexSampling::integers(0, m - 1).unwrap();
        let cols = IndexSampling::integers(0, n - 1).unwrap();
        let vals: Vec<f64> = (0..m * n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let k = SampledKernel::from_values(rows.clone(), cols.clone(), vals.clone()).unwrap();
        let weights = |len: i64, rng: &mut ChaCha8Rng| {
            let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect::<Vec<_>>()
        };
        let (wr, wc) = (weights(m, &mut rng), weights(n, &mut rng));
        let mean = |w: &[f64]| DiscreteMean::new(w.iter().enumerate().map(|(i, &x)| (i.to_string(), x)).collect()).unwrap();
        let (mr, mc) = (mean(&wr), mean(&wc));
        let mut direct = 0.0;
        for i in 0..m as usize {
            for j in 0..n as usize {
                direct += wr[i] * wc[j] * vals[i * n as usize + j];
            }
        }
        for order in [Order::RowsFirst, Order::ColsFirst] {
            let v = iterated_integral(&k, &mr, &mc, order).unwrap();
            assert!((v - direct).abs() <= 1e-12 * k.bound(), "{v} vs {direct}");
        }
    }
}

#[test]
fn indicator_limits() {
    // k(m, n) = 1 when n <= m: along increasing sequences the inner limit in n
    // is 0 and the inner limit in m is 1.
    let s = IndexSampling::integers(1, 32).unwrap();
    let k = SampledKernel::from_expr("ind(y <= x)", s.clone(), s).unwrap();
    let seq: Vec<usize> = (0..32).collect();
    let r = double_limit_positions(&k, &seq, &seq, &DoubleLimitConfig::default()).unwrap();
    assert!(r.converged);
    assert_eq!((r.limit_row_first, r.limit_col_first, r.gap), (0.0, 1.0, 1.0));
}

#[test]
fn envelopes_of_closed_forms() {
    let cfg = EnvelopeConfig::default();
    // upper and lower envelopes of sin(1/s) + s at 0 are 1 and -1
    let f = DyadicFunction::new((0.0, 1.0), Ends::RIGHT, 16, |s| (1.0 / s).sin() + s).unwrap();
    let e = envelope(&f, 0.0, &cfg).unwrap();
    assert!((e.upper - 1.0).abs() < 1e-3 && (e.lower + 1.0).abs() < 1e-3, "{} {}", e.upper, e.lower);
    assert_eq!(classify_envelope(&e, 1e-6).label(), "not-extendable");

    // |s - 1/2| is continuous: the bracket closes on the value
    let g = DyadicFunction::new((0.0, 1.0), Ends::CLOSED, 12, |s| (s - 0.5).abs()).unwrap();
    for t in [1.0 / 3.0, 0.5, 0.9] {
        let e = envelope(&g, t, &cfg).unwrap();
        assert_eq!(classify_envelope(&e, 1e-6).value().map(|v| (v - (t - 0.5).abs()).abs() < 1e-6), Some(true));
    }

    // a jump of height 3 at 1/3 (not a dyadic point)
    let h = DyadicFunction::new((0.0, 1.0), Ends::OPEN, 12, |s| if s < 1.0 / 3.0 { -1.0 } else { 2.0 }).unwrap();
    let e = envelope(&h, 1.0 / 3.0, &cfg).unwrap();
    assert!((e.gap - 3.0).abs() <= 1e-12);
}
