//! Covering counts bracketed by exhaustive minimal covers, and nets checked
//! by an all-pairs distance scan written here.

use matrix_compactness::covering::*;
use matrix_compactness::kernel::IndexSampling;
use matrix_compactness::SampledKernel;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Smallest number of family members whose closed `eps`-balls cover the
/// family, by trying every subset.
fn exact_cover(vs: &[Vec<f64>], eps: f64) -> usize {
    let n = vs.len();
    (1u32..1 << n)
        .filter(|mask| {
            vs.iter()
                .all(|v| (0..n).any(|c| mask & (1 << c) != 0 && dist(v, &vs[c]) <= eps))
        })
        .map(u32::count_ones)
        .min()
        .unwrap_or(0) as usize
}

fn covers(vs: &[Vec<f64>], centers: &[Vec<f64>], eps: f64) -> bool {
    vs.iter().all(|v| centers.iter().any(|c| dist(v, c) <= eps))
}

fn random_family(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn family(vs: &[Vec<f64>]) -> VectorFamily {
    VectorFamily::new((0..vs.len()).map(|i| format!("v{i}")).collect(), vs.to_vec()).unwrap()
}

fn kernel(vs: &[Vec<f64>]) -> SampledKernel {
    let rows = IndexSampling::integers(0, vs.len() as i64 - 1).unwrap();
    let cols = IndexSampling::integers(0, vs[0].len() as i64 - 1).unwrap();
    SampledKernel::from_values(rows, cols, vs.concat()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // The count is an eps-cover, so at least the minimum; its centers are
    // more than eps apart, so no eps/2-ball holds two of them.
    #[test]
    fn count_lies_between_exact_covers(seed in any::<u64>(), n in 1usize..11, dim in 1usize..5, eps in 0.05f64..1.5) {
        let vs = random_family(seed, n, dim);
        let c = covering_count(&family(&vs), eps).unwrap();
        prop_assert!(c >= exact_cover(&vs, eps));
        prop_assert!(c <= exact_cover(&vs, eps / 2.0));
    }

    #[test]
    fn greedy_nets_pass_the_all_pairs_scan(seed in any::<u64>(), n in 1usize..40, dim in 1usize..12, eps in 0.01f64..1.0) {
        let vs = random_family(seed, n, dim);
        let net = greedy_net(&family(&vs), eps).unwrap();
        prop_assert!(net.verified);
        let centers: Vec<Vec<f64>> = net.member_ids.iter().map(|id| vs[id[1..].parse::<usize>().unwrap()].clone()).collect();
        prop_assert!(covers(&vs, &centers, eps));
        for (a, ca) in centers.iter().enumerate() {
            for cb in &centers[a + 1..] {
                prop_assert!(dist(ca, cb) > eps);
            }
        }
    }

    #[test]
    fn transferred_nets_cover_columns(seed in any::<u64>(), m in 2usize..30, n in 2usize..30, eps in 0.05f64..0.5, delta in 0.05f64..0.5) {
        let vs = random_family(seed, m, n);
        let k = kernel(&vs);
        let row_net = greedy_net(&VectorFamily::rows(&k), eps).unwrap();
        let col_net = transfer_net(&k, &row_net, delta).unwrap();
        let cols: Vec<Vec<f64>> = (0..n).map(|j| k.column(j)).collect();
        let slack = 1e-12 * k.bound();
        prop_assert!(col_net.verified);
        prop_assert!(covers(&cols, &col_net.centers, delta + 2.0 * eps + slack));
        prop_assert!((col_net.len() as f64) <= box_covering_bound(k.bound(), delta, row_net.len()));
    }

    #[test]
    fn sum_nets_cover_sums(seed in any::<u64>(), m in 2usize..25, n in 2usize..25, e1 in 0.05f64..0.5, e2 in 0.05f64..0.5) {
        let f = kernel(&random_family(seed, m, n));
        let g = kernel(&random_family(seed ^ 1, m, n));
        let nf = greedy_net(&VectorFamily::rows(&f), e1).unwrap();
        let ng = greedy_net(&VectorFamily::rows(&g), e2).unwrap();
        let net = sum_net(&f, &nf, &g, &ng).unwrap();
        let sum = f.add(&g).unwrap();
        let rows: Vec<Vec<f64>> = (0..m).map(|i| sum.row(i).to_vec()).collect();
        prop_assert!(net.verified);
        prop_assert!(covers(&rows, &net.centers, e1 + e2 + 1e-12 * (f.bound() + g.bound())));
        prop_assert!(net.len() <= nf.len() * ng.len());
    }
}

#[test]
fn profile_counts_match_direct_counts() {
    let eps = [0.3, 0.1];
    let kernels: Vec<SampledKernel> = [16, 32, 64]
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            let g = IndexSampling::grid(0.0, 1.0, n).unwrap().with_level(l as u32);
            SampledKernel::from_expr("cos(x+y)", g.clone(), g).unwrap()
        })
        .collect();
    let p = compactness_profile(&kernels, &eps, Orientation::Cols).unwrap();
    for (e, &r) in eps.iter().enumerate() {
        for (l, k) in kernels.iter().enumerate() {
            let cols: Vec<Vec<f64>> = (0..k.n_cols()).map(|j| k.column(j)).collect();
            let direct = covering_count(&family(&cols), r).unwrap();
            assert_eq!(p.counts[e][l], direct);
        }
    }
    assert_eq!(p.sizes, vec![16, 32, 64]);
}
