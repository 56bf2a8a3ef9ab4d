mod oracles;

use maga_core::autodiff::{ActiveSiteMask, OpKind};
use maga_core::gradcheck::{self, OP_TOLERANCE};
use maga_core::rng::SplitMix64;
use maga_core::{Graph, Tensor};

fn uniform(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

#[test]
fn every_op_passes_finite_differences_on_twenty_seeds() {
    let reports = gradcheck::op_suite(0, 20, None).unwrap();
    assert_eq!(reports.len(), OpKind::ALL.len());
    for (r, op) in reports.iter().zip(OpKind::ALL) {
        assert_eq!(r.op, op);
        assert!(r.passed(OP_TOLERANCE), "{op}: {:?}", r.outcome);
        assert!(r.outcome.probes > 0);
    }
}

#[test]
fn corrupted_gradient_is_caught() {
    let reports = gradcheck::op_suite(0, 2, Some(OpKind::Matmul)).unwrap();
    for r in reports {
        assert_eq!(r.passed(OP_TOLERANCE), r.op != OpKind::Matmul, "{}", r.op);
    }
}

#[test]
fn backward_closed_forms() {
    let mut rng = SplitMix64::new(1);
    let x = Tensor::new(&[3, 4], uniform(&mut rng, 12)).unwrap();
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let s = g.sum(xv);
    let grads = g.backward(s).unwrap();
    assert!(grads.get(&g, xv).data().iter().all(|v| *v == 1.0));

    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let sq = g.mul(xv, xv).unwrap();
    let s = g.sum(sq);
    let half = g.scale(s, 0.5);
    let unused = g.leaf(Tensor::ones(&[2]));
    let grads = g.backward(half).unwrap();
    assert_eq!(grads.get(&g, xv), x);
    assert!(!grads.reached(unused));
    assert_eq!(grads.get(&g, unused), Tensor::zeros(&[2]));
}

#[test]
fn all_active_sparse_convolution_equals_dense_oracle() {
    let mut rng = SplitMix64::new(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (c, o) = (rng.range(1, 5), rng.range(1, 5));
        let (h, w) = (rng.range(1, 9), rng.range(1, 9));
        let k = [3, 5, 7][rng.range(0, 3)];
        let x = uniform(&mut rng, c * h * w);
        let kern = uniform(&mut rng, o * c * k * k);
        let mut g = Graph::new();
        let xv = g.leaf(Tensor::new(&[c, h, w], x.clone()).unwrap());
        let wv = g.leaf(Tensor::new(&[o, c, k, k], kern.clone()).unwrap());
        let y = g.conv2d_sparse(xv, wv, &ActiveSiteMask::all_active(h, w)).unwrap();
        let expected = oracles::dense_conv_same(&x, c, h, w, &kern, o, k, k, 1);
        for (a, b) in g.value(y).data().iter().zip(&expected) {
            worst = worst.max((a - b).abs());
        }

        let z = g.conv2d_sparse(xv, wv, &ActiveSiteMask::all_inactive(h, w)).unwrap();
        assert!(g.value(z).data().iter().all(|v| *v == 0.0));
    }
    assert!(worst < 1e-12, "{worst:e}");
}

#[test]
fn partial_mask_sees_only_active_sites() {
    let mut rng = SplitMix64::new(9);
    for _ in 0..30 {
        let (c, h, w, k) = (rng.range(1, 4), rng.range(2, 8), rng.range(2, 8), 3);
        let active: Vec<bool> = (0..h * w).map(|_| rng.next_f64() < 0.5).collect();
        let x = uniform(&mut rng, c * h * w);
        let kern = uniform(&mut rng, c * k * k);
        let mut g = Graph::new();
        let xv = g.leaf(Tensor::new(&[c, h, w], x.clone()).unwrap());
        let wv = g.leaf(Tensor::new(&[1, c, k, k], kern.clone()).unwrap());
        let mask = ActiveSiteMask::from_fn(h, w, |i, j| active[i * w + j]);
        let y = g.conv2d_sparse(xv, wv, &mask).unwrap();
        let zeroed: Vec<f64> = x.iter().enumerate().map(|(i, v)| if active[i % (h * w)] { *v } else { 0.0 }).collect();
        let dense = oracles::dense_conv_same(&zeroed, c, h, w, &kern, 1, k, k, 1);
        for p in 0..h * w {
            let want = if active[p] { dense[p] } else { 0.0 };
            assert!((g.value(y).data()[p] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn max_gradient_routes_only_to_winners() {
    let mut rng = SplitMix64::new(3);
    for _ in 0..100 {
        let (b, c, n) = (rng.range(1, 5), rng.range(1, 4), rng.range(1, 10));
        // coarse values so ties occur
        let x: Vec<f64> = (0..b * c * n).map(|_| rng.range(0, 4) as f64).collect();
        let up = uniform(&mut rng, c * n);
        let mut g = Graph::new();
        let xv = g.leaf(Tensor::new(&[b, c, n], x.clone()).unwrap());
        let (m, winners) = g.max_over_axis(xv, 0).unwrap();
        let u = g.constant(Tensor::new(&[c, n], up.clone()).unwrap());
        let p = g.mul(m, u).unwrap();
        let s = g.sum(p);
        let grad = g.backward(s).unwrap().get(&g, xv);
        for i in 0..c * n {
            let column: Vec<f64> = (0..b).map(|k| x[k * c * n + i]).collect();
            let best = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let first = column.iter().position(|v| *v == best).unwrap();
            assert_eq!(winners[i], first);
            assert_eq!(g.value(m).data()[i], best);
            let routed: Vec<f64> = (0..b).map(|k| grad.data()[k * c * n + i]).collect();
            assert_eq!(routed.iter().sum::<f64>(), up[i]);
            for (k, r) in routed.iter().enumerate() {
                assert_eq!(*r, if k == first { up[i] } else { 0.0 });
            }
        }
    }
}
