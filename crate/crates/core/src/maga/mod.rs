//! Morpho-aware global attention.
//!
//! The query map is passed through up to four directional branches built
//! from `1 x k` and `k x 1` depthwise kernels. Each branch is instance
//! normalized; per-(branch, channel) standard deviations are mixed by a
//! 1-D convolution and squashed by a sigmoid into reweighting factors; the
//! reweighted branches are fused by an elementwise max (morpho-active
//! learning). The fused map gates the original query, and the resulting
//! enriched query attends over unmodified keys and values.

mod block;
mod config;
mod ops;

pub(crate) use block::normal as normal_init;
pub use block::{delta_kernel, maga_block, BlockOutput, MagaBlockParams, MorphoParams, INIT_STD};
pub use config::{Branch, BranchSet, MagaConfig};
pub use ops::{
    attention, maga_gate, map_to_tokens, morpho_reweight, tetris_branches, tokens_to_map, BranchKernels,
    BranchStack, MorphoOutput,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ActiveSiteMask, Graph};
    use crate::autodiff::sigmoid;
    use crate::optim::ParamStore;
    use crate::rng::SplitMix64;
    use crate::tensor::Tensor;

    fn rand_tensor(seed: u64, shape: &[usize]) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0))
    }

    fn delta_kernels(g: &mut Graph, set: BranchSet, c: usize, k: usize) -> Vec<BranchKernels> {
        set.branches()
            .into_iter()
            .map(|b| BranchKernels {
                branch: b,
                stages: b
                    .stages()
                    .iter()
                    .map(|&h| g.leaf(if h { delta_kernel(c, 1, k) } else { delta_kernel(c, k, 1) }))
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn single_token_grid() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::new(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let m = tokens_to_map(&mut g, p, 1, 1).unwrap();
        assert_eq!(g.shape(m), &[3, 1, 1]);
        assert_eq!(g.value(m).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn token_map_roundtrip_and_ordering() {
        let (hp, wp, d) = (4, 4, 5);
        let mut g = Graph::new();
        let pv = rand_tensor(1, &[hp * wp, d]);
        let p = g.leaf(pv.clone());
        let m = tokens_to_map(&mut g, p, hp, wp).unwrap();
        for i in 0..hp * wp {
            for c in 0..d {
                let (r, col) = (i / wp, i % wp);
                assert_eq!(g.value(m).data()[(c * hp + r) * wp + col], pv.data()[i * d + c]);
            }
        }
        let back = map_to_tokens(&mut g, m).unwrap();
        assert_eq!(g.value(back), &pv);
        assert!(tokens_to_map(&mut g, p, 3, 5).is_err());
    }

    #[test]
    fn delta_kernels_reproduce_query_in_every_branch() {
        let mut g = Graph::new();
        let qv = rand_tensor(2, &[3, 5, 4]);
        let q = g.leaf(qv.clone());
        let kernels = delta_kernels(&mut g, BranchSet::all(), 3, 5);
        let stack = tetris_branches(&mut g, q, &kernels, &ActiveSiteMask::all_active(5, 4)).unwrap();
        assert_eq!(stack.branches, Branch::ALL.to_vec());
        for m in stack.maps {
            assert_eq!(g.value(m), &qv);
        }
    }

    #[test]
    fn zero_query_gives_zero_branches() {
        let mut g = Graph::new();
        let q = g.leaf(Tensor::zeros(&[2, 4, 4]));
        let kernels: Vec<_> = Branch::ALL
            .into_iter()
            .map(|b| BranchKernels {
                branch: b,
                stages: b
                    .stages()
                    .iter()
                    .enumerate()
                    .map(|(i, &h)| g.leaf(rand_tensor(10 + i as u64, if h { &[2, 1, 1, 3] } else { &[2, 1, 3, 1] })))
                    .collect(),
            })
            .collect();
        let stack = tetris_branches(&mut g, q, &kernels, &ActiveSiteMask::all_active(4, 4)).unwrap();
        for m in stack.maps {
            assert!(g.value(m).data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn composite_branch_spreads_impulse_into_box() {
        let k = 3;
        let mut g = Graph::new();
        let q = g.leaf(Tensor::from_fn(&[1, 7, 7], |i| if i == 24 { 1.0 } else { 0.0 }));
        let col = g.leaf(Tensor::ones(&[1, 1, k, 1]));
        let row = g.leaf(Tensor::ones(&[1, 1, 1, k]));
        let kernels = [BranchKernels { branch: Branch::VerticalThenHorizontal, stages: vec![col, row] }];
        let stack = tetris_branches(&mut g, q, &kernels, &ActiveSiteMask::all_active(7, 7)).unwrap();
        let out = g.value(stack.maps[0]).data();
        for i in 0..7 {
            for j in 0..7 {
                let inside = (2..=4).contains(&i) && (2..=4).contains(&j);
                assert_eq!(out[i * 7 + j], if inside { 1.0 } else { 0.0 }, "({i},{j})");
            }
        }
    }

    #[test]
    fn empty_branch_list_is_config_error() {
        let mut g = Graph::new();
        let q = g.leaf(Tensor::ones(&[1, 3, 3]));
        assert!(matches!(
            tetris_branches(&mut g, q, &[], &ActiveSiteMask::all_active(3, 3)),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn single_branch_with_delta_reweight() {
        let mut g = Graph::new();
        let m = g.leaf(rand_tensor(3, &[2, 3, 3]));
        let stack = BranchStack { branches: vec![Branch::Horizontal], maps: vec![m] };
        let delta = g.leaf(Tensor::new(&[3], vec![0.0, 1.0, 0.0]).unwrap());
        let out = morpho_reweight(&mut g, &stack, delta, 1e-5).unwrap();
        let qn = g.value(out.normalized).data().to_vec();
        let std = g.value(out.std).data().to_vec();
        let fused = g.value(out.fused).data();
        for c in 0..2 {
            for i in 0..9 {
                assert_eq!(fused[c * 9 + i], sigmoid(std[c]) * qn[c * 9 + i]);
            }
        }
    }

    #[test]
    fn dominant_branch_wins_everywhere() {
        // Branch 1 holds |values| far larger after normalization scaling: make
        // branch 0 constant (normalizes to zero) and branch 1 strictly positive
        // after normalization except where branch 0 ties at 0.
        let mut g = Graph::new();
        let b0 = g.leaf(Tensor::full(&[1, 2, 2], 4.0));
        let b1 = g.leaf(Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let stack = BranchStack { branches: vec![Branch::Horizontal, Branch::Vertical], maps: vec![b0, b1] };
        let kern = g.leaf(Tensor::zeros(&[3]));
        let out = morpho_reweight(&mut g, &stack, kern, 1e-5).unwrap();
        // weights are all sigmoid(0) = 0.5; normalized branch 1 is [-a, -b, b, a]
        let n1: Vec<f64> = g.value(out.normalized).data()[4..].to_vec();
        let fused = g.value(out.fused).data();
        for i in 0..4 {
            assert_eq!(fused[i], (0.5 * n1[i]).max(0.0));
        }
        assert_eq!(out.winners, vec![0, 0, 1, 1]);
    }

    #[test]
    fn gate_examples() {
        let mut g = Graph::new();
        let q = g.leaf(Tensor::new(&[1, 2, 2], vec![1.5, -2.0, 0.25, 4.0]).unwrap());
        let ones = g.leaf(Tensor::ones(&[1, 2, 2]));
        let zeros = g.leaf(Tensor::zeros(&[1, 2, 2]));
        let f = g.leaf(Tensor::new(&[1, 2, 2], vec![2.0, 0.5, -4.0, 0.125]).unwrap());
        let a = maga_gate(&mut g, ones, q).unwrap();
        assert_eq!(g.value(a), g.value(q));
        let b = maga_gate(&mut g, zeros, q).unwrap();
        assert!(g.value(b).data().iter().all(|v| *v == 0.0));
        let c = maga_gate(&mut g, f, q).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, -1.0, -1.0, 0.5]);
        let wrong = g.leaf(Tensor::ones(&[1, 4]));
        assert!(maga_gate(&mut g, wrong, q).is_err());
    }

    #[test]
    fn single_token_attention_returns_value() {
        let mut g = Graph::new();
        let q = g.leaf(rand_tensor(4, &[1, 4]));
        let k = g.leaf(rand_tensor(5, &[1, 4]));
        let v = g.leaf(rand_tensor(6, &[1, 4]));
        let (out, _) = attention(&mut g, q, k, v, 2).unwrap();
        assert_eq!(g.value(out), g.value(v));
    }

    #[test]
    fn zero_query_averages_values() {
        let mut g = Graph::new();
        let q = g.leaf(Tensor::zeros(&[3, 2]));
        let k = g.leaf(rand_tensor(7, &[3, 2]));
        let vv = Tensor::new(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]).unwrap();
        let v = g.leaf(vv);
        let (out, _) = attention(&mut g, q, k, v, 1).unwrap();
        for row in g.value(out).data().chunks_exact(2) {
            assert!((row[0] - 3.0).abs() < 1e-15);
            assert!((row[1] - 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn heads_must_divide_dim() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::ones(&[2, 4]));
        assert!(matches!(attention(&mut g, x, x, x, 3), Err(crate::Error::Config(_))));
    }

    #[test]
    fn zeroed_block_is_pure_residual() {
        let cfg = MagaConfig { embed_dim: 4, ..MagaConfig::default() };
        let mut store = ParamStore::new();
        let p = MagaBlockParams::register(&mut store, "b", &cfg, true, &mut SplitMix64::new(0));
        for name in ["attn.w_q", "attn.w_k", "attn.w_v", "attn.w_o", "mlp.w1", "mlp.w2"] {
            let id = store.id(&format!("b.{name}")).unwrap();
            let shape = store.get(id).shape().to_vec();
            store.set(id, Tensor::zeros(&shape)).unwrap();
        }
        for (_, ids) in &p.morpho.as_ref().unwrap().branches {
            for id in ids {
                let shape = store.get(*id).shape().to_vec();
                store.set(*id, Tensor::zeros(&shape)).unwrap();
            }
        }
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let xv = rand_tensor(8, &[4, 4]);
        let x = g.leaf(xv.clone());
        let out = maga_block(&mut g, &bound, &p, &cfg, x, 2, 2).unwrap();
        assert_eq!(g.value(out.tokens), &xv);
    }

    #[test]
    fn block_shapes_do_not_depend_on_branches() {
        for set in BranchSet::ablation_rows() {
            for k in MagaConfig::KERNEL_SIZES {
                let cfg = MagaConfig { embed_dim: 4, kernel_size: k, branches: set, ..MagaConfig::default() };
                let mut store = ParamStore::new();
                let p = MagaBlockParams::register(&mut store, "b", &cfg, true, &mut SplitMix64::new(1));
                let mut g = Graph::new();
                let bound = store.bind(&mut g);
                let x = g.leaf(rand_tensor(9, &[6, 4]));
                let out = maga_block(&mut g, &bound, &p, &cfg, x, 2, 3).unwrap();
                assert_eq!(g.shape(out.tokens), &[6, 4]);
                assert_eq!(g.shape(out.morpho.unwrap().fused), &[4, 2, 3]);
            }
        }
    }
}
