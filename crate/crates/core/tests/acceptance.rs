//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `cargo test -p blockmix --test acceptance`. The process exits 0
//! regardless of failures unless `ACCEPTANCE_STRICT=1` is set.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use blockmix::bias::check_block;
use blockmix::blocksampler::{
    count_list_colorings, count_unicyclic, sample_block_coloring, ColorLists,
};
use blockmix::cost::{loglog_slope, time_update};
use blockmix::coupling::{contraction_experiment, coupling_time};
use blockmix::dynamics::{greedy_initial_retry, hardcore_glauber_step, Configuration, Model};
use blockmix::graph::named;
use blockmix::params::regime_k;
use blockmix::percolation::{beta_weights, domination_test, tail_experiment, Variant};
use blockmix::rng::seeded;
use blockmix::spectral::{
    block_units, chi_square, comparison_check, enumerate_states, glauber_units, kernel, relaxation,
    stationary, KernelKind,
};
use blockmix::synth::{build, Shape, SynthSpec};
use blockmix::uniformity::{pick_probes, uniformity_experiment};
use blockmix::{build_partition, gen_gnp, validate_partition, BlockPartition, Graph, Params};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed <= limit
}

fn stationary_uniformity() -> Outcome {
    let t = Instant::now();
    let g = named::path(4);
    let space = enumerate_states(&g, Model::Coloring { k: 3 }).unwrap();
    let part = BlockPartition::from_blocks(&g, vec![vec![0, 1], vec![2, 3]]).unwrap();
    let mut worst = 0.0f64;
    for units in [glauber_units(4), block_units(&part)] {
        let pi = stationary(&kernel(&space, &units, KernelKind::Discrete)).unwrap();
        worst = worst.max(
            pi.iter()
                .map(|x| (x - 1.0 / 24.0).abs())
                .fold(0.0, f64::max),
        );
    }
    let el = t.elapsed();
    outcome(
        space.len() == 24 && worst < 1e-10 && within(el, Duration::from_secs(1)),
        format!(
            "states={} max deviation={worst:.2e} time={el:.2?}",
            space.len()
        ),
    )
}

fn stationary_hardcore() -> Outcome {
    let g = named::complete(3);
    let model = Model::Hardcore { lambda: 0.5 };
    let space = enumerate_states(&g, model).unwrap();
    let k = kernel(&space, &glauber_units(3), KernelKind::Discrete);
    let pi = stationary(&k).unwrap();
    let mut exact_ok = true;
    for (i, s) in space.states.iter().enumerate() {
        let expect = if s.iter().sum::<usize>() == 0 {
            0.4
        } else {
            0.2
        };
        exact_ok &= (pi[i] - expect).abs() < 1e-12;
    }
    // Thin by a multiple of the relaxation time so recorded states are
    // close to independent.
    let tau = relaxation(&k).unwrap();
    let thin = (5.0 * tau).ceil() as u64;
    let mut cfg = Configuration::empty_hardcore(3, 0.5);
    let mut rng = seeded(2024);
    let mut counts = vec![0u64; space.len()];
    let steps = 1_000_000u64;
    for t in 1..=steps {
        hardcore_glauber_step(&mut cfg, &g, &mut rng);
        if t % thin == 0 {
            counts[space.index[&cfg.spins]] += 1;
        }
    }
    let (stat, df, p) = chi_square(&counts, &pi);
    outcome(
        exact_ok && p > 0.001,
        format!(
            "pi={pi:.4?} chi2={stat:.2} df={df} p={p:.4} thin={thin} samples={}",
            counts.iter().sum::<u64>()
        ),
    )
}

fn brute_count(adj: &[Vec<usize>], lists: &[Vec<usize>]) -> u64 {
    fn rec(v: usize, adj: &[Vec<usize>], lists: &[Vec<usize>], cur: &mut Vec<usize>) -> u64 {
        if v == adj.len() {
            return 1;
        }
        let mut total = 0;
        for &c in &lists[v] {
            if adj[v].iter().all(|&w| w >= v || cur[w] != c) {
                cur[v] = c;
                total += rec(v + 1, adj, lists, cur);
            }
        }
        total
    }
    rec(0, adj, lists, &mut vec![0; adj.len()])
}

fn exact_counts() -> Outcome {
    let t = Instant::now();
    let mut rng = seeded(77);
    let mut mismatches = 0;
    let mut unicyclic = 0;
    for _ in 0..1000 {
        let m = rng.random_range(1..=7);
        let k = rng.random_range(1..=4);
        let mut adj = vec![Vec::new(); m];
        for i in 1..m {
            let j = rng.random_range(0..i);
            adj[i].push(j);
            adj[j].push(i);
        }
        let cyclic = m >= 3 && rng.random::<bool>();
        if cyclic {
            let pairs: Vec<(usize, usize)> = (0..m)
                .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
                .filter(|&(a, b)| !adj[a].contains(&b))
                .collect();
            let (a, b) = pairs[rng.random_range(0..pairs.len())];
            adj[a].push(b);
            adj[b].push(a);
            unicyclic += 1;
        }
        let lists: Vec<Vec<usize>> = (0..m)
            .map(|_| (0..k).filter(|_| rng.random::<f64>() < 0.75).collect())
            .collect();
        let cl = ColorLists::new(k, lists.clone()).unwrap();
        let got = if cyclic {
            count_unicyclic(&adj, &cl)
        } else {
            count_list_colorings(&adj, &cl)
        };
        let want = brute_count(&adj, &lists);
        if got
            .map(|x| x != num_bigint::BigUint::from(want))
            .unwrap_or(true)
        {
            mismatches += 1;
        }
    }
    let el = t.elapsed();
    outcome(
        mismatches == 0 && within(el, Duration::from_secs(30)),
        format!("instances=1000 unicyclic={unicyclic} mismatches={mismatches} time={el:.2?}"),
    )
}

fn sampler_exactness() -> Outcome {
    let g = named::star(3);
    let part = BlockPartition::whole(&g);
    let block = &part.blocks[0];
    let mut rng = seeded(5);
    let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
    let colors = vec![0; 4];
    for _ in 0..100_000 {
        *counts
            .entry(sample_block_coloring(&g, block, &colors, 3, &mut rng).unwrap())
            .or_default() += 1;
    }
    let obs: Vec<u64> = counts.values().copied().collect();
    let probs = vec![1.0 / 24.0; obs.len()];
    let (stat, df, p) = chi_square(&obs, &probs);
    outcome(
        counts.len() == 24 && p > 0.001,
        format!("states={} chi2={stat:.2} df={df} p={p:.4}", counts.len()),
    )
}

fn contraction() -> Outcome {
    let t = Instant::now();
    let g = named::heawood();
    let r = contraction_experiment(&g, &BlockPartition::singletons(&g), 7, 100_000, 1).unwrap();
    let el = t.elapsed();
    let ceiling = r.bound + 3.0 * r.std_error;
    outcome(
        r.trials >= 100_000 && r.mean_ratio <= ceiling && within(el, Duration::from_secs(120)),
        format!(
            "ratio={:.5} se={:.5} bound={:.5} trials={} time={el:.2?}",
            r.mean_ratio, r.std_error, r.bound, r.trials
        ),
    )
}

fn comparison() -> Outcome {
    let mut cases: Vec<(String, Graph, BlockPartition, usize)> = Vec::new();
    let mut add = |name: &str, g: Graph, blocks: Option<Vec<Vec<usize>>>, k: usize| {
        let parts = [
            ("singletons", BlockPartition::singletons(&g)),
            ("one-block", BlockPartition::whole(&g)),
        ];
        for (pn, p) in parts {
            cases.push((format!("{name}/{pn}/k={k}"), g.clone(), p, k));
        }
        if let Some(b) = blocks {
            cases.push((
                format!("{name}/two-block/k={k}"),
                g.clone(),
                BlockPartition::from_blocks(&g, b).unwrap(),
                k,
            ));
        }
    };
    add("P3", named::path(3), Some(vec![vec![0, 1], vec![2]]), 3);
    add("P4", named::path(4), Some(vec![vec![0, 1], vec![2, 3]]), 3);
    add(
        "P5",
        named::path(5),
        Some(vec![vec![0, 1], vec![2, 3, 4]]),
        3,
    );
    add("C4", named::cycle(4), Some(vec![vec![0, 1], vec![2, 3]]), 3);
    add(
        "C5",
        named::cycle(5),
        Some(vec![vec![0, 1, 2], vec![3, 4]]),
        4,
    );
    add(
        "star3",
        named::star(3),
        Some(vec![vec![0, 1], vec![2], vec![3]]),
        3,
    );
    add("P4", named::path(4), Some(vec![vec![0], vec![1, 2, 3]]), 4);
    add("C4", named::cycle(4), Some(vec![vec![0, 1, 2], vec![3]]), 4);
    let mut failures = Vec::new();
    let mut min_slack = f64::INFINITY;
    for (name, g, part, k) in &cases {
        let rep = match comparison_check(g, part, Model::Coloring { k: *k }) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        min_slack = min_slack.min(rep.slack);
        if !rep.inequality_holds {
            failures.push(name.clone());
        }
    }
    outcome(
        failures.is_empty() && cases.len() >= 20,
        format!(
            "instances={} failures={failures:?} min slack={min_slack:.3e}",
            cases.len()
        ),
    )
}

fn gnp_params(n: usize, d: f64) -> Params {
    Params::new(0.2, d, regime_k(0.2, d), n).unwrap()
}

fn beta_boundary() -> Outcome {
    let (n, d) = (100_000, 30.0);
    let p = gnp_params(n, d);
    let mut built = 0;
    let mut validated = 0;
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut errors = Vec::new();
    for seed in 0..10 {
        let g = gen_gnp(n, d, 1000 + seed).unwrap();
        let part = match build_partition(&g, &p) {
            Ok(part) => part,
            Err(e) => {
                errors.push(e.to_string());
                continue;
            }
        };
        built += 1;
        if !validate_partition(&g, &part, &p).structural_ok() {
            continue;
        }
        validated += 1;
        let boundary = part.boundary_mask();
        for b in part.blocks.iter().filter(|b| b.len() > 1) {
            for &u in &b.outer_boundary {
                let Ok(beta) = beta_weights(&g, b, u, &p, Variant::Simple) else {
                    continue;
                };
                for (i, &w) in b.vertices.iter().enumerate() {
                    if boundary[w] {
                        checked += 1;
                        violations += (beta.beta[i] < 0.5) as usize;
                    }
                }
            }
        }
    }
    let first = errors.first().cloned().unwrap_or_default();
    outcome(
        validated == 10 && violations == 0,
        format!(
            "samples=10 built={built} validated={validated} boundary checks={checked} violations={violations}; construction errors={} (first: {first})",
            errors.len()
        ),
    )
}

fn domination_blocks() -> Vec<SynthSpec> {
    let shapes = [
        (10, Shape::Recursive),
        (20, Shape::Hub { children: 8 }),
        (30, Shape::Recursive),
        (40, Shape::Hub { children: 8 }),
        (40, Shape::Recursive),
    ];
    shapes
        .iter()
        .enumerate()
        .map(|(i, &(m, shape))| SynthSpec {
            m,
            d: 20.0,
            shape,
            cap: Some(20),
            cycle: None,
            hub_degree: None,
            seed: 10 + i as u64,
        })
        .collect()
}

fn domination() -> Outcome {
    let t = Instant::now();
    let p = Params::new(0.2, 20.0, 40, 1000).unwrap();
    let mut verdicts = Vec::new();
    let mut all = true;
    for (i, spec) in domination_blocks().iter().enumerate() {
        let s = build(spec);
        let rep = domination_test(
            &s.g,
            &s.part,
            &p,
            s.block,
            s.u_star,
            Variant::Slack,
            100_000,
            300 + i as u64,
        )
        .unwrap();
        let worst = rep
            .points
            .iter()
            .map(|q| (q.real - q.percolation) / q.sigma.max(1e-12))
            .fold(f64::MIN, f64::max);
        all &= rep.dominated;
        verdicts.push(format!(
            "({}, {}, {worst:.2})",
            rep.block_size, rep.dominated
        ));
    }
    let el = t.elapsed();
    outcome(
        all && within(el, Duration::from_secs(600)),
        format!(
            "synthetic blocks (size, dominated, worst z)=[{}] time={el:.2?}",
            verdicts.join(", ")
        ),
    )
}

fn tail_shape() -> Outcome {
    let p = Params::new(0.2, 20.0, 40, 1000).unwrap();
    let mut slopes = Vec::new();
    let mut ok = true;
    for seed in 1..=3 {
        let s = build(&SynthSpec {
            m: 200,
            d: 20.0,
            shape: Shape::Recursive,
            cap: Some(20),
            cycle: None,
            hub_degree: None,
            seed,
        });
        let (rep, _) = tail_experiment(
            &s.g,
            &s.part.blocks[s.block],
            s.u_star,
            &p,
            Variant::Simple,
            100_000,
            40 + seed,
        )
        .unwrap();
        match rep.fit_p {
            Some(f) => {
                ok &= f.slope < 0.0 && f.slope_ci95.1 <= -0.2;
                slopes.push((f.slope, f.slope_ci95.1));
            }
            None => ok = false,
        }
    }
    outcome(
        ok,
        format!("200-vertex random trees, (slope, upper 95%)={slopes:.3?}"),
    )
}

fn local_uniformity() -> Outcome {
    let t = Instant::now();
    let g = gen_gnp(5000, 20.0, 7).unwrap();
    let p = Params::new(0.2, 20.0, 40, 5000).unwrap();
    let probes = pick_probes(&g, &p, 200, 8).unwrap();
    let rep = uniformity_experiment(
        &g,
        &BlockPartition::singletons(&g),
        &p,
        5.0,
        5.0,
        &probes,
        9,
        |_| {},
    )
    .unwrap();
    let el = t.elapsed();
    outcome(
        rep.fraction <= 0.01 && within(el, Duration::from_secs(600)),
        format!(
            "singleton blocks, violating={}/{} ({:.3}, 95% CI {:.3?}) threshold above k-Δ={} time={el:.2?}",
            rep.violating,
            probes.len(),
            rep.fraction,
            rep.fraction_ci95,
            rep.threshold_above_worst_case
        ),
    )
}

fn partition_validity() -> Outcome {
    let (n, d) = (100_000, 30.0);
    let p = gnp_params(n, d);
    let mut ok = 0;
    let mut notes = Vec::new();
    for seed in 0..5 {
        let g = gen_gnp(n, d, 2000 + seed).unwrap();
        match build_partition(&g, &p) {
            Ok(part) => {
                let v = validate_partition(&g, &part, &p);
                let good = v.structural_ok() && v.cond2a.rate() <= 0.05 && v.cond2c.rate() <= 0.05;
                ok += good as usize;
                notes.push(format!(
                    "c1={} c2a={:.3} c2b={} c2c={:.3} c3={}",
                    v.cond1.violations,
                    v.cond2a.rate(),
                    v.cond2b.violations,
                    v.cond2c.rate(),
                    v.cond3.violations
                ));
            }
            Err(e) => notes.push(format!("construction failed: {e}")),
        }
    }
    outcome(
        ok == 5,
        format!("samples=5 passing={ok}; {}", notes.join(" | ")),
    )
}

fn block_cost() -> Outcome {
    let sizes = [100usize, 316, 1000, 3162, 10_000];
    let ts: Vec<f64> = sizes
        .iter()
        .map(|&m| {
            time_update(m, 16, (20_000 / m).max(3), 5, 1)
                .unwrap()
                .seconds
        })
        .collect();
    let sb = loglog_slope(&sizes.map(|x| x as f64), &ts);
    let ks = [8usize, 16, 32, 64];
    let tk: Vec<f64> = ks
        .iter()
        .map(|&k| time_update(200, k, 50, 5, 2).unwrap().seconds)
        .collect();
    let sk = loglog_slope(&ks.map(|x| x as f64), &tk);
    outcome(
        sb <= 1.2 && sk <= 3.2,
        format!("exponent in |B|={sb:.3} in k={sk:.3}"),
    )
}

fn coupling_scaling() -> Outcome {
    let mut ratios = Vec::new();
    let mut censored = 0;
    for n in [500usize, 1000, 2000, 4000] {
        let g = gen_gnp(n, 20.0, n as u64).unwrap();
        let nl = n as f64 * (n as f64).ln();
        let times = coupling_time(
            &g,
            &BlockPartition::singletons(&g),
            40,
            (100.0 * nl) as u64,
            15,
            5,
        )
        .unwrap();
        censored += times.iter().filter(|t| t.is_none()).count();
        let mut v: Vec<u64> = times.iter().map(|t| t.unwrap_or(u64::MAX)).collect();
        v.sort_unstable();
        ratios.push(v[v.len() / 2] as f64 / nl);
    }
    let spread = ratios.iter().copied().fold(f64::MIN, f64::max)
        / ratios.iter().copied().fold(f64::MAX, f64::min);
    outcome(
        spread < 3.0 && censored == 0,
        format!("singleton blocks, median/(N ln N)={ratios:.3?} spread={spread:.2}x censored={censored}"),
    )
}

fn marginal_bias() -> Outcome {
    let p = Params::new(0.2, 20.0, 40, 1000).unwrap();
    let mut checks = 0;
    let mut violations = 0;
    let mut deep = 0;
    for i in 0..100u64 {
        let shape = match i % 3 {
            0 => Shape::Recursive,
            1 => Shape::Hub { children: 6 },
            _ => Shape::Path,
        };
        let spec = SynthSpec {
            m: 5 + (i as usize % 16),
            d: 20.0,
            shape,
            cap: Some(20),
            cycle: (i % 4 == 3).then_some(3 + (i as usize % 3)),
            hub_degree: (i % 3 == 1).then_some(22 + (i as usize % 9)),
            seed: 100 + i,
        };
        let s = build(&spec);
        let sigma = greedy_initial_retry(&s.g, p.k, i, 16).unwrap().spins;
        let b = &s.part.blocks[s.block];
        let mut rng = seeded(i);
        let pinned: Vec<usize> = if i % 2 == 0 {
            Vec::new()
        } else {
            b.vertices
                .iter()
                .copied()
                .filter(|_| rng.random::<f64>() < 0.3)
                .collect()
        };
        for c in check_block(&s.g, b, &sigma, &p, &pinned).unwrap() {
            checks += 1;
            violations += (!c.ok) as usize;
            deep += (c.kind == blockmix::bias::BoundKind::Deep) as usize;
        }
    }
    outcome(
        violations == 0,
        format!("blocks=100 vertex checks={checks} (deep {deep}) violations={violations}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("stationary uniformity (coloring)", stationary_uniformity),
        ("stationary correctness (hard-core)", stationary_hardcore),
        ("exact-count oracle", exact_counts),
        ("sampler exactness", sampler_exactness),
        ("contraction", contraction),
        ("comparison inequality", comparison),
        ("beta boundary bound", beta_boundary),
        ("stochastic domination", domination),
        ("percolation tail shape", tail_shape),
        ("local uniformity", local_uniformity),
        ("partition validity", partition_validity),
        ("block-update cost", block_cost),
        ("coupling-time scaling", coupling_scaling),
        ("marginal-bias bounds", marginal_bias),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        failed += (!o.pass) as usize;
        println!(
            "{} [{:02}] {name}: {} ({:.1?})",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
