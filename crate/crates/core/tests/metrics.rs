mod oracles;

use maga_core::metrics::{
    conn_metric, evaluate, grad_metric, gradient_magnitude, mse, sad, Metric, CONN_STEP, GRAD_SIGMA, REPORT_SCALE,
};
use maga_core::rng::SplitMix64;
use maga_core::Tensor;
use proptest::prelude::*;

fn plane(h: usize, w: usize, v: Vec<f64>) -> Tensor {
    Tensor::new(&[1, h, w], v).unwrap()
}

fn random_matte(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    // a mix of saturated and fractional values so thresholds split regions
    (0..n)
        .map(|_| match rng.range(0, 4) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.next_f64(),
        })
        .collect()
}

#[test]
fn sad_and_mse_match_naive_loops() {
    let mut rng = SplitMix64::new(5);
    for _ in 0..50 {
        let (h, w) = (5, 5);
        let p: Vec<f64> = (0..25).map(|_| rng.next_f64()).collect();
        let g: Vec<f64> = (0..25).map(|_| rng.next_f64()).collect();
        let m: Vec<f64> = (0..25).map(|_| (rng.range(0, 2)) as f64).collect();
        let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
        for i in 0..h {
            for j in 0..w {
                let k = i * w + j;
                if m[k] != 0.0 {
                    abs += (p[k] - g[k]).abs();
                    sq += (p[k] - g[k]) * (p[k] - g[k]);
                    n += 1;
                }
            }
        }
        let (pt, gt, mt) = (plane(h, w, p), plane(h, w, g), plane(h, w, m));
        assert_eq!(sad(&pt, &gt, &mt).unwrap(), abs / 1000.0);
        let expect = if n == 0 { 0.0 } else { sq / n as f64 * 1000.0 };
        assert_eq!(mse(&pt, &gt, &mt).unwrap(), expect);
    }
}

#[test]
fn gradient_matches_dense_filter_oracle() {
    let mut rng = SplitMix64::new(11);
    let mut worst = 0.0f64;
    for &(h, w) in &[(9, 9), (8, 8), (3, 12), (1, 1), (16, 7)] {
        for _ in 0..5 {
            let img: Vec<f64> = (0..h * w).map(|_| rng.next_f64()).collect();
            let fast = gradient_magnitude(&img, h, w, GRAD_SIGMA);
            let dense = oracles::dense_gradient_magnitude(&img, h, w, GRAD_SIGMA);
            for (a, b) in fast.iter().zip(&dense) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn step_edge_against_shifted_step_on_9x9() {
    let step = |at: usize| -> Vec<f64> { (0..81).map(|k| if k % 9 >= at { 1.0 } else { 0.0 }).collect() };
    let (p, g) = (step(4), step(5));
    let mask = vec![1.0; 81];
    let gp = oracles::dense_gradient_magnitude(&p, 9, 9, GRAD_SIGMA);
    let gg = oracles::dense_gradient_magnitude(&g, 9, 9, GRAD_SIGMA);
    let expect: f64 = gp.iter().zip(&gg).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 1000.0;
    let got = grad_metric(&plane(9, 9, p), &plane(9, 9, g), &plane(9, 9, mask), GRAD_SIGMA).unwrap();
    assert!(expect > 0.0);
    assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
}

#[test]
fn connectivity_matches_flood_fill_on_all_binary_3x3_pairs() {
    let mask = vec![true; 9];
    let ones = Tensor::ones(&[1, 3, 3]);
    let bits = |code: usize| -> Vec<f64> { (0..9).map(|k| ((code >> k) & 1) as f64).collect() };
    for a in 0..512 {
        let p = bits(a);
        let pt = plane(3, 3, p.clone());
        for b in 0..512 {
            let g = bits(b);
            let expect = oracles::conn_raw(&p, &g, &mask, 3, 3, 10) / 1000.0;
            let got = conn_metric(&pt, &plane(3, 3, g), &ones, CONN_STEP).unwrap();
            assert_eq!(got, expect, "pred {a:09b} gt {b:09b}");
        }
    }
}

#[test]
fn connectivity_matches_flood_fill_on_random_8x8_pairs() {
    let mut rng = SplitMix64::new(23);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let p = random_matte(&mut rng, 64);
        let g = random_matte(&mut rng, 64);
        let m: Vec<bool> = (0..64).map(|_| rng.range(0, 4) != 0).collect();
        let expect = oracles::conn_raw(&p, &g, &m, 8, 8, 10) / 1000.0;
        let mask = plane(8, 8, m.iter().map(|b| *b as u8 as f64).collect());
        let got = conn_metric(&plane(8, 8, p), &plane(8, 8, g), &mask, CONN_STEP).unwrap();
        worst = worst.max((got - expect).abs());
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn isolated_pixel_is_penalized_alone() {
    let (h, w) = (5, 5);
    let block: Vec<f64> = (0..25).map(|k| if k % w < 3 { 1.0 } else { 0.0 }).collect();
    let mut flipped = block.clone();
    flipped[24] = 1.0;
    let all = Tensor::ones(&[1, h, w]);
    let total = conn_metric(&plane(h, w, block.clone()), &plane(h, w, flipped.clone()), &all, CONN_STEP).unwrap();
    assert!(total > 0.0);
    let mut only = vec![0.0; 25];
    only[24] = 1.0;
    let local = conn_metric(&plane(h, w, block.clone()), &plane(h, w, flipped.clone()), &plane(h, w, only), CONN_STEP).unwrap();
    assert_eq!(local, total);
    let mut rest = vec![1.0; 25];
    rest[24] = 0.0;
    let elsewhere = conn_metric(&plane(h, w, block), &plane(h, w, flipped), &plane(h, w, rest), CONN_STEP).unwrap();
    assert_eq!(elsewhere, 0.0);
}

#[test]
fn report_matches_per_metric_oracles() {
    let mut rng = SplitMix64::new(3);
    let (h, w) = (8, 8);
    let p = random_matte(&mut rng, 64);
    let g = random_matte(&mut rng, 64);
    let tri: Vec<f64> = (0..64).map(|_| [0.0, 0.5, 1.0][rng.range(0, 3)]).collect();
    let m: Vec<bool> = tri.iter().map(|t| *t == 0.5).collect();
    let n = m.iter().filter(|b| **b).count();
    let r = evaluate(&plane(h, w, p.clone()), &plane(h, w, g.clone()), &plane(h, w, tri)).unwrap();
    let sel = |f: &dyn Fn(usize) -> f64| (0..64).filter(|&i| m[i]).map(f).sum::<f64>();
    assert_eq!(r.n_unknown, n);
    assert!(!r.empty_mask);
    assert!((r.sad - sel(&|i| (p[i] - g[i]).abs()) / 1000.0).abs() < 1e-15);
    assert!((r.mse - sel(&|i| (p[i] - g[i]).powi(2)) / n as f64 * 1000.0).abs() < 1e-12);
    let gp = oracles::dense_gradient_magnitude(&p, h, w, GRAD_SIGMA);
    let gg = oracles::dense_gradient_magnitude(&g, h, w, GRAD_SIGMA);
    assert!((r.grad - sel(&|i| (gp[i] - gg[i]).powi(2)) / 1000.0).abs() < 1e-10);
    assert!((r.conn - oracles::conn_raw(&p, &g, &m, h, w, 10) / 1000.0).abs() < 1e-10);
}

#[test]
fn scale_round_trip_is_a_factor_of_a_thousand() {
    assert_eq!(REPORT_SCALE, 1000.0);
    for m in Metric::ALL {
        for raw in [0.0, 1.0, 12.5, 3.0e4] {
            assert_eq!(m.to_raw(m.to_reported(raw)), raw);
        }
    }
}

fn matte_pair(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(0.0..=1.0f64, n),
        prop::collection::vec(0.0..=1.0f64, n),
        prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0]), n),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identical_mattes_give_a_zero_report((p, _, tri) in matte_pair(36)) {
        let a = plane(6, 6, p);
        let r = evaluate(&a, &a, &plane(6, 6, tri)).unwrap();
        prop_assert_eq!((r.sad, r.mse, r.grad, r.conn), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn sad_and_mse_are_symmetric((p, g, tri) in matte_pair(36)) {
        let (a, b, t) = (plane(6, 6, p), plane(6, 6, g), plane(6, 6, tri));
        let (x, y) = (evaluate(&a, &b, &t).unwrap(), evaluate(&b, &a, &t).unwrap());
        prop_assert_eq!(x.sad, y.sad);
        prop_assert_eq!(x.mse, y.mse);
        prop_assert!(x.sad >= 0.0 && x.mse >= 0.0 && x.grad >= 0.0 && x.conn >= 0.0);
    }

    #[test]
    fn worsening_one_pixel_never_lowers_sad((p, g, _) in matte_pair(25), at in 0usize..25, by in 0.0..1.0f64) {
        let mask = Tensor::ones(&[1, 5, 5]);
        let before = sad(&plane(5, 5, p.clone()), &plane(5, 5, g.clone()), &mask).unwrap();
        let mut worse = p.clone();
        // push the prediction further from the truth, clamped to [0, 1]
        worse[at] = if p[at] >= g[at] { (p[at] + by).min(1.0) } else { (p[at] - by).max(0.0) };
        let after = sad(&plane(5, 5, worse), &plane(5, 5, g), &mask).unwrap();
        prop_assert!(after >= before);
    }
}
