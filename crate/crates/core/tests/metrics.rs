use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cadseq::cad::{emit_matrix, TokenMatrix};
use cadseq::geometry::{chamfer_distance, PointCloud};
use cadseq::metrics::{accuracy_counts, coverage_mmd, jsd, kmeans, silhouette, uniqueness};
use cadseq::synth::{synth_dataset, SynthConfig};

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new((0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect())
}

fn brute(p: &PointCloud, q: &PointCloud) -> f64 {
    let dir = |a: &PointCloud, b: &PointCloud| {
        let mut sum = 0.0;
        for x in &a.points {
            let mut best = f64::INFINITY;
            for y in &b.points {
                let (dx, dy, dz) = (x[0] - y[0], x[1] - y[1], x[2] - y[2]);
                best = best.min(dx * dx + dy * dy + dz * dz);
            }
            sum += best;
        }
        sum / a.len() as f64
    };
    dir(p, q) + dir(q, p)
}

fn distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random() }).collect();
    v[0] += 1e-3;
    let t: f64 = v.iter().sum();
    v.iter().map(|x| x / t).collect()
}

proptest! {
    #[test]
    fn chamfer_matches_brute_force(seed in any::<u64>(), n in 1usize..=200, m in 1usize..=200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, q) = (cloud(&mut rng, n), cloud(&mut rng, m));
        let cd = chamfer_distance(&p, &q).unwrap();
        prop_assert_eq!(cd, brute(&p, &q));
        prop_assert_eq!(cd, chamfer_distance(&q, &p).unwrap());
        prop_assert_eq!(chamfer_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn jsd_is_bounded(seed in any::<u64>(), n in 2usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, q) = (distribution(&mut rng, n), distribution(&mut rng, n));
        let d = jsd(&p, &q);
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&d));
        prop_assert_eq!(jsd(&p, &p), 0.0);
    }

    #[test]
    fn coverage_and_mmd_ranges(seed in any::<u64>(), g in 1usize..20, r in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cd: Vec<Vec<f64>> = (0..g).map(|_| (0..r).map(|_| rng.random()).collect()).collect();
        let (cov, mmd) = coverage_mmd(&cd, r);
        prop_assert!((0.0..=1.0).contains(&cov));
        prop_assert!(mmd >= 0.0);
        let zero: Vec<Vec<f64>> = (0..r).map(|i| (0..r).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        prop_assert_eq!(coverage_mmd(&zero, r), (1.0, 0.0));
    }

    #[test]
    fn kmeans_sse_never_rises_and_silhouette_is_bounded(seed in any::<u64>(), n in 4usize..40, k in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random(), rng.random()]).collect();
        let km = kmeans(&z, k, seed).unwrap();
        prop_assert!(km.sse_trace.windows(2).all(|w| w[1] <= w[0]));
        let sc = silhouette(&z, &km.labels).unwrap();
        prop_assert!((-1.0..=1.0).contains(&sc));
    }
}

#[test]
fn self_accuracy_is_one() {
    let cfg = SynthConfig::default();
    for (_, s) in synth_dataset(20, 5, &cfg) {
        let m = emit_matrix(&s);
        for eta in 1..4 {
            let c = accuracy_counts(&m, &m, eta, false).unwrap();
            assert_eq!((c.acc_cmd(), c.acc_param()), (1.0, 1.0));
        }
    }
}

#[test]
fn uniqueness_counts_first_occurrences() {
    let cfg = SynthConfig::default();
    let ms: Vec<TokenMatrix> = synth_dataset(4, 6, &cfg).iter().map(|(_, s)| emit_matrix(s)).collect();
    let set = vec![ms[0].clone(), ms[1].clone(), ms[0].clone(), ms[2].clone()];
    assert_eq!(uniqueness(&set), 0.75);
    assert_eq!(uniqueness(&ms), 1.0);
}
