use trustnet::attack::AttackPolicy;
use trustnet::bounds::BoundInputs;
use trustnet::harness::{compare_to_bounds, run_batch, SimConfig, Simulator};
use trustnet::rng::{RngStreams, TOPOLOGY};
use trustnet::topology::{Topology, TopologyParams};

const POLICIES: [AttackPolicy; 4] = [
    AttackPolicy::Persistent,
    AttackPolicy::Stationary { p: 0.5 },
    AttackPolicy::SoftmaxDecay { r1: 0.8, eps2: 5.0 },
    AttackPolicy::LogisticSchedule { p_bar: 0.3, r2: 0.005 },
];

fn generate(seed: u64) -> Topology {
    Topology::generate(&TopologyParams::default(), &mut RngStreams::new(seed).stream(TOPOLOGY, 0)).unwrap()
}

#[test]
fn generated_graphs_hold_their_invariants() {
    for seed in 0..100 {
        let g = generate(seed);
        let n = g.n_agents();
        assert_eq!(n, 50);
        for i in 0..n {
            assert!(!g.are_adjacent(i, i), "seed {seed}: self loop at {i}");
            for j in 0..n {
                assert_eq!(g.are_adjacent(i, j), g.are_adjacent(j, i), "seed {seed}: ({i},{j})");
            }
        }
        for i in 0..g.n_legit() {
            assert!(!g.legit_neighbors(i).unwrap().is_empty(), "seed {seed}: agent {i}");
        }
        let legit_edges = g.edges().filter(|&(a, b)| a < 20 && b < 20).count();
        assert_eq!(legit_edges, 40, "seed {seed}");
        assert!(g.is_legit_subgraph_connected());
        assert_eq!(generate(seed), g);
    }
}

#[test]
fn decomposition_and_weights_stay_consistent() {
    for policy in POLICIES {
        let mut cfg = SimConfig::benchmark(policy);
        cfg.base_seed = 3;
        let sim = Simulator::new(cfg.clone()).unwrap();
        for k in 0..20 {
            let r = sim.run_index(k).unwrap();
            assert!(r.decomposition_residual <= 1e-9, "{policy:?} run {k}: {}", r.decomposition_residual);
            if let Some(tf) = r.tf {
                let from = r.nominal_from.expect("nominal weights after T_f");
                assert!(from <= tf.max(cfg.t0 - 1), "{policy:?} run {k}: tf={tf} nominal from {from}");
            }
        }
    }
}

#[test]
fn batch_output_ignores_pool_size() {
    let mut cfg = SimConfig::benchmark(AttackPolicy::Stationary { p: 0.5 });
    cfg.n_runs = 12;
    let sim = Simulator::new(cfg).unwrap();
    let with_threads = |n: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| run_batch(&sim, 12).unwrap())
    };
    let (a, b) = (with_threads(1), with_threads(4));
    assert_eq!(a.runs, b.runs);
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn persistent_benchmark_respects_every_bound() {
    let cfg = SimConfig::benchmark(AttackPolicy::Persistent);
    let sim = Simulator::new(cfg.clone()).unwrap();
    let batch = run_batch(&sim, cfg.n_runs).unwrap();
    let inputs: BoundInputs = cfg.bound_inputs(0.005, 5.0, 0.1);
    let rows = compare_to_bounds(&batch, &sim, &inputs, &[25, 50, 100, 200], 1.0).unwrap();
    for check in ["legit_exclusion", "malicious_inclusion", "tf_tail", "deviation_horizon", "rate_conditional"] {
        assert!(rows.iter().any(|r| r.check == check), "missing {check}");
    }
    let failing: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    assert!(failing.is_empty(), "{failing:?}");
}
