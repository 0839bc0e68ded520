use ggd_core::discriminate::{train, TrainConfig};
use ggd_core::encoder::EncoderParams;
use ggd_core::graph::{
    load_edge_list, load_features, load_labels, save_edge_list, save_features, save_labels, NodeIdMap,
};
use ggd_core::inference::EmbeddingSet;
use ggd_core::probe::{sbm_generate, SbmConfig};
use ggd_core::rng::{RngState, Stream};
use proptest::prelude::*;

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SbmConfig {
        n: 120,
        k: 3,
        p_in: 0.1,
        p_out: 0.01,
        feat_dim: 20,
        ..Default::default()
    };
    let (g, x, split) = sbm_generate(&cfg, &mut RngState::new(3, Stream::Data)).unwrap();
    let (ep, fp, lp) = (dir.path().join("g.edges"), dir.path().join("x.ggdf"), dir.path().join("y.labels"));
    save_edge_list(&g, &ep).unwrap();
    save_features(&x, &fp).unwrap();
    save_labels(&split, &NodeIdMap::Identity(g.num_nodes()), &lp).unwrap();

    let loaded = load_edge_list(&ep, false).unwrap();
    assert_eq!(loaded.graph, g);
    assert_eq!(load_features(&fp).unwrap(), x);
    let back = load_labels(&lp, &loaded.ids, g.num_nodes()).unwrap();
    assert_eq!(back.labels, split.labels);
    let sorted = |v: &[usize]| {
        let mut v = v.to_vec();
        v.sort_unstable();
        v
    };
    assert_eq!(sorted(&back.train), sorted(&split.train));
    assert_eq!(sorted(&back.test), sorted(&split.test));
}

#[test]
fn checkpoint_and_embeddings_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sbm = SbmConfig {
        n: 90,
        k: 3,
        p_in: 0.1,
        p_out: 0.01,
        feat_dim: 16,
        ..Default::default()
    };
    let (g, x, _) = sbm_generate(&sbm, &mut RngState::new(1, Stream::Data)).unwrap();
    let cfg = TrainConfig {
        hidden: 8,
        epochs: 3,
        ..Default::default()
    };
    let (p, _) = train(&g, &x, &cfg).unwrap();
    let ck = dir.path().join("model.ggdp");
    p.save(&ck).unwrap();
    let q = EncoderParams::load(&ck).unwrap();
    assert_eq!(p.flatten(), q.flatten());

    let emb = EmbeddingSet::compute(&g, &x, &q, 5, cfg.seed, &cfg.hash()).unwrap();
    let ep = dir.path().join("emb.ggdf");
    emb.save(&ep).unwrap();
    let back = EmbeddingSet::load(&ep).unwrap();
    assert_eq!(back, emb);
    assert_eq!(back.meta.graph_checksum, g.checksum());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sparse_ids_are_remapped_in_order(ids in proptest::collection::btree_set(-1000i64..1000, 2..20)) {
        let ids: Vec<i64> = ids.into_iter().collect();
        let text: String = ids.windows(2).map(|w| format!("{} {}\n", w[0], w[1])).collect();
        let loaded = ggd_core::graph::parse_edge_list(text.as_bytes(), true).unwrap();
        prop_assert_eq!(loaded.graph.num_nodes(), ids.len());
        for (dense, &orig) in ids.iter().enumerate() {
            prop_assert_eq!(loaded.ids.original(dense), orig);
            prop_assert_eq!(loaded.ids.to_dense(orig), Some(dense));
        }
        for k in 0..ids.len() - 1 {
            prop_assert!(loaded.graph.has_edge(k, k + 1) && loaded.graph.has_edge(k + 1, k));
        }
    }
}
