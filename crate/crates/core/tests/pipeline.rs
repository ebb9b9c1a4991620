use blockmix::coupling::{CoupledChain, DistanceWeights};
use blockmix::dynamics::{
    greedy_initial, run_chain, Chain, ChainKind, ChainSpec, Configuration, Probe,
};
use blockmix::graph::named;
use blockmix::percolation::{beta_weights, tail_experiment, Variant};
use blockmix::rng::replica_stream;
use blockmix::spectral::{block_units, enumerate_states, kernel, stationary, KernelKind};
use blockmix::synth::{build, Shape, SynthSpec};
use blockmix::{gen_gnp, validate_partition, BlockPartition, Graph, Params};

fn p(d: f64, k: usize, n: usize) -> Params {
    Params::new(0.2, d, k, n).unwrap()
}

#[test]
fn partition_file_round_trip_preserves_blocks() {
    let g = named::path(9);
    let part =
        BlockPartition::from_blocks(&g, vec![vec![0, 1, 2], vec![3], vec![4, 5, 6, 7], vec![8]])
            .unwrap();
    let text = serde_json::to_string(&part.to_file()).unwrap();
    let back = BlockPartition::from_file(&g, &serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back.owner, part.owner);
    assert_eq!(back.boundary, part.boundary);
    assert!(validate_partition(&g, &back, &p(2.0, 4, 9)).structural_ok());
}

#[test]
fn graph_text_round_trip() {
    let g = gen_gnp(500, 4.0, 11).unwrap();
    let back = Graph::read_text(g.to_text().as_bytes()).unwrap();
    assert_eq!(back.n(), g.n());
    assert_eq!(
        back.edges().collect::<Vec<_>>(),
        g.edges().collect::<Vec<_>>()
    );
}

#[test]
fn block_chain_with_probes_keeps_colorings_proper() {
    let s = build(&SynthSpec {
        m: 12,
        d: 3.0,
        shape: Shape::Path,
        cap: Some(4),
        cycle: Some(5),
        hub_degree: None,
        seed: 2,
    });
    let k = 6;
    let cfg = greedy_initial(&s.g, k, 1).unwrap();
    let spec = ChainSpec {
        kind: ChainKind::Block,
        partition: Some(&s.part),
        seed: 5,
        force: false,
    };
    let mut chain = Chain::new(&s.g, spec, cfg).unwrap();
    let g = &s.g;
    let mut probes = [Probe {
        name: "valid".into(),
        cadence: 50,
        f: Box::new(move |c: &Configuration| vec![c.is_valid(g) as u8 as f64]),
    }];
    let recs = run_chain(&mut chain, 2000, &mut probes).unwrap();
    assert_eq!(recs.len(), 40);
    assert!(recs.iter().all(|r| r.values == [1.0]));
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let g = gen_gnp(200, 3.0, 4).unwrap();
    let part = BlockPartition::singletons(&g);
    let k = g.max_degree() + 3;
    let spec = ChainSpec {
        kind: ChainKind::Block,
        partition: Some(&part),
        seed: 8,
        force: false,
    };
    let start = greedy_initial(&g, k, 3).unwrap();
    let mut a = Chain::new(&g, spec.clone(), start.clone()).unwrap();
    for _ in 0..500 {
        a.step().unwrap();
    }
    let json = serde_json::to_string(&a.checkpoint()).unwrap();
    for _ in 0..500 {
        a.step().unwrap();
    }
    let (cfg, rng) = serde_json::from_str::<blockmix::dynamics::Checkpoint>(&json)
        .unwrap()
        .restore(g.n())
        .unwrap();
    let mut b = Chain::with_rng(&g, spec, cfg, rng).unwrap();
    for _ in 0..500 {
        b.step().unwrap();
    }
    assert_eq!(a.cfg.spins, b.cfg.spins);
}

#[test]
fn coupled_chain_coalesces_on_a_small_tree() {
    let g = named::star(4);
    let part = BlockPartition::from_blocks(&g, vec![vec![0, 1, 2], vec![3], vec![4]]).unwrap();
    let w = DistanceWeights::new(&g, &part);
    let x = Configuration::coloring(vec![0, 1, 1, 2, 3], 6);
    let y = Configuration::coloring(vec![1, 0, 2, 3, 0], 6);
    let mut ch = CoupledChain::new(&g, &part, x, y, replica_stream(3, 0));
    let start = ch.state.dist(&w);
    while !ch.state.coalesced() && ch.state.t < 10_000 {
        ch.step().unwrap();
        assert!(ch.state.check_bookkeeping());
        assert!(ch.state.x.is_valid(&g) && ch.state.y.is_valid(&g));
    }
    assert!(ch.state.coalesced());
    assert!(start > ch.state.dist(&w));
}

#[test]
fn block_kernel_on_unicyclic_block_is_gibbs_stationary() {
    // A 4-cycle block plus a pendant singleton, hard-core with λ = 1.5.
    let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 4)]).unwrap();
    let part = BlockPartition::from_blocks(&g, vec![vec![0, 1, 2, 3], vec![4]]).unwrap();
    let space = enumerate_states(&g, blockmix::dynamics::Model::Hardcore { lambda: 1.5 }).unwrap();
    let kern = kernel(&space, &block_units(&part), KernelKind::Discrete);
    let pi = stationary(&kern).unwrap();
    let gibbs = space.gibbs();
    let dev = pi
        .iter()
        .zip(&gibbs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(dev < 1e-12, "deviation {dev}");
}

#[test]
fn tail_rows_agree_with_report() {
    let s = build(&SynthSpec {
        m: 40,
        d: 20.0,
        shape: Shape::Recursive,
        cap: Some(20),
        cycle: None,
        hub_degree: None,
        seed: 6,
    });
    let params = p(20.0, 40, 1000);
    let block = &s.part.blocks[s.block];
    let (rep, rows) =
        tail_experiment(&s.g, block, s.u_star, &params, Variant::Simple, 5000, 1).unwrap();
    assert_eq!(rows.len(), 5000);
    let mean = rows.iter().map(|r| r.cluster as f64).sum::<f64>() / rows.len() as f64;
    assert!((mean - rep.mean_cluster).abs() < 1e-12);
    assert!(rows.iter().all(|r| r.p <= r.cluster && r.z >= 0.0));
    let beta = beta_weights(&s.g, block, s.u_star, &params, Variant::Simple).unwrap();
    assert!(beta.beta.iter().all(|&b| (0.0..=1.0).contains(&b)));
}
