//! Property tests for the structural invariants.

use proptest::prelude::*;

use graphfed::{
    aggregate, decode_frame, deserialize_params, encode_frame, induced_subgraph, micro_f1,
    normalize_adjacency, serialize_params, spmm, DenseMatrix, FrameKind, Graph, ModelConfig,
    ModelParams,
};

fn arb_edges(max_n: usize) -> impl Strategy<Value = (Vec<(u32, u32)>, usize)> {
    (2..max_n).prop_flat_map(|n| {
        let edge = (0..n as u32, 0..n as u32);
        (proptest::collection::vec(edge, 0..n * 3), Just(n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_list_round_trips_deduplicated((edges, n) in arb_edges(40)) {
        let g = Graph::from_edge_list(&edges, n).unwrap();
        // oracle: canonical set of the input
        let mut expected: Vec<(u32, u32)> = edges
            .iter()
            .filter(|(u, v)| u != v)
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .collect();
        expected.sort_unstable();
        expected.dedup();
        let got: Vec<(u32, u32)> = g.edges().collect();
        prop_assert_eq!(got, expected);

        // symmetry: u in N(v) <=> v in N(u)
        for v in 0..n as u32 {
            for &u in g.neighbors(v) {
                prop_assert!(g.neighbors(u).contains(&v));
            }
        }
    }

    #[test]
    fn normalized_adjacency_is_exactly_symmetric((edges, n) in arb_edges(30)) {
        let g = Graph::from_edge_list(&edges, n).unwrap();
        let a = normalize_adjacency::<f64>(&g);
        for u in 0..n as u32 {
            let (cols, weights) = a.row(u);
            for (&v, &w) in cols.iter().zip(weights) {
                prop_assert_eq!(a.entry(v, u), Some(w));
            }
        }
    }

    #[test]
    fn spmm_matches_dense_reference((edges, n) in arb_edges(50), cols in 1usize..6) {
        let g = Graph::from_edge_list(&edges, n).unwrap();
        let a = normalize_adjacency::<f64>(&g);
        let x = DenseMatrix::from_vec(
            n,
            cols,
            (0..n * cols).map(|i| ((i * 37 + 11) % 100) as f64 / 10.0 - 5.0).collect(),
        )
        .unwrap();
        let sparse = spmm(&a, &x).unwrap();

        // dense oracle
        let mut dense = DenseMatrix::<f64>::zeros(n, n);
        for u in 0..n as u32 {
            let (cs, ws) = a.row(u);
            for (&c, &w) in cs.iter().zip(ws) {
                dense.set(u as usize, c as usize, w);
            }
        }
        let reference = dense.matmul(&x).unwrap();
        prop_assert!(sparse.max_abs_diff(&reference) < 1e-6);
    }

    #[test]
    fn induced_subgraph_never_gains_edges((edges, n) in arb_edges(30), keep_mask in proptest::collection::vec(any::<bool>(), 30)) {
        let g = Graph::from_edge_list(&edges, n).unwrap();
        let ids: Vec<u32> = (0..n as u32).filter(|&v| keep_mask[v as usize]).collect();
        let (sub, map) = induced_subgraph(&g, &ids).unwrap();
        prop_assert!(sub.num_edges() <= g.num_edges());
        // every surviving edge exists in the original
        for (lu, lv) in sub.edges() {
            let (gu, gv) = (map.to_global(lu), map.to_global(lv));
            prop_assert!(g.neighbors(gu).contains(&gv));
        }
        // full vertex set keeps the edge count
        let all: Vec<u32> = (0..n as u32).collect();
        let (full, _) = induced_subgraph(&g, &all).unwrap();
        prop_assert_eq!(full.num_edges(), g.num_edges());
    }

    #[test]
    fn frame_round_trip(payload in proptest::collection::vec(any::<u8>(), 0..1024), kind_idx in 0u8..5) {
        let kind = match kind_idx {
            0 => FrameKind::Hello,
            1 => FrameKind::Assign,
            2 => FrameKind::StartEpoch,
            3 => FrameKind::Params,
            _ => FrameKind::Shutdown,
        };
        let bytes = encode_frame(kind, &payload).unwrap();
        let (k, p) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(k, kind);
        prop_assert_eq!(p, payload);
    }

    #[test]
    fn params_wire_round_trip_is_bit_exact(
        rows in 1usize..6,
        cols in 1usize..6,
        seed in any::<u32>(),
    ) {
        let data: Vec<f32> = (0..rows * cols)
            .map(|i| {
                let x = (seed as u64 + 1)
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(i as u64)
                    .wrapping_mul(1442695040888963407);
                ((x >> 40) as f32) / (1u64 << 24) as f32 * 2.0 - 1.0
            })
            .collect();
        let params = ModelParams::<f32> {
            layers: vec![DenseMatrix::from_vec(rows, cols, data).unwrap()],
        };
        let back = deserialize_params(&serialize_params(&params)).unwrap();
        prop_assert_eq!(back, params);
    }

    #[test]
    fn aggregate_is_permutation_invariant(
        values in proptest::collection::vec(-1e3f32..1e3, 12),
        swap_a in 0usize..4,
        swap_b in 0usize..4,
    ) {
        let list: Vec<ModelParams<f32>> = values
            .chunks(3)
            .map(|c| ModelParams {
                layers: vec![DenseMatrix::from_vec(1, 3, c.to_vec()).unwrap()],
            })
            .collect();
        let mut permuted = list.clone();
        permuted.swap(swap_a, swap_b);
        permuted.reverse();
        prop_assert_eq!(aggregate(&list).unwrap(), aggregate(&permuted).unwrap());
    }

    #[test]
    fn micro_f1_is_accuracy(
        pairs in proptest::collection::vec((0u32..5, 0u32..5), 1..60),
    ) {
        let preds: Vec<u32> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        let mask: Vec<u32> = (0..pairs.len() as u32).collect();
        let f1 = micro_f1(&preds, &labels, &mask).unwrap();
        let acc = preds.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64
            / pairs.len() as f64;
        prop_assert_eq!(f1, acc);
    }
}

#[test]
fn model_params_glorot_shapes() {
    // plain sanity anchor for the strategy-driven tests above
    let cfg = ModelConfig::kw_gcn();
    let p: ModelParams<f32> = graphfed::init_params(&cfg, 10, 4, 0).unwrap();
    assert_eq!(p.shapes(), vec![(10, 128), (128, 4)]);
}
