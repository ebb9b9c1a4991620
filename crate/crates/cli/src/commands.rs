//! Subcommand implementations. Each returns the run status; outputs are
//! written into the pending [`OutDir`].

use std::fmt;
use std::fs::File;
use std::io::BufReader;

use anyhow::{anyhow, bail, Result};
use blockmix::cost::{loglog_slope, time_update};
use blockmix::coupling::{
    contraction_experiment, coupling_time, propagation_probe, CoupledChain, DistanceWeights,
};
use blockmix::dynamics::{
    greedy_initial_retry, resample_block, run_chain, Chain, ChainKind, ChainSpec, Configuration,
    Model, Probe, ProbeFn, Scratch,
};
use blockmix::graph::named;
use blockmix::params::regime_k;
use blockmix::partition::{path_density, PartitionFile};
use blockmix::percolation::{beta_weights, domination_test, tail_experiment};
use blockmix::rng::replica_stream;
use blockmix::spectral::{
    block_units, comparison_check, enumerate_states, exact_tmix, glauber_units, kernel, relaxation,
    stationary, KernelKind, SpectralError,
};
use blockmix::synth::{build, SyntheticBlock};
use blockmix::uniformity::{pick_probes, uniformity_experiment};
use blockmix::{build_partition, gen_gnp, validate_partition, BlockPartition, Graph, Params};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::*;
use crate::output::OutDir;

/// Problems with the configuration itself; mapped to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.into()))
}

/// Outcome of a run whose outputs are complete.
pub enum Status {
    Ok,
    /// The run finished but a validation check failed.
    Invalid(String),
}

pub struct Ctx {
    pub cfg: Config,
    pub seed: u64,
    pub force: bool,
}

/// Loaded graph with the synthetic construction when there is one.
pub struct Loaded {
    pub g: Graph,
    pub synth: Option<SyntheticBlock>,
    /// Degree parameter implied by the source.
    pub source_d: Option<f64>,
}

pub fn load_graph(cfg: &Config) -> Result<Loaded> {
    let src = cfg
        .graph
        .as_ref()
        .ok_or_else(|| config_err("config has no \"graph\" section"))?;
    Ok(match src {
        GraphSource::Generate { n, d, seed } => Loaded {
            g: gen_gnp(*n, *d, *seed).map_err(|e| config_err(format!("graph generation: {e}")))?,
            synth: None,
            source_d: Some(*d),
        },
        GraphSource::File(path) => {
            let f = File::open(path)
                .map_err(|e| config_err(format!("opening {}: {e}", path.display())))?;
            let g = Graph::read_text(BufReader::new(f))
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            Loaded {
                g,
                synth: None,
                source_d: None,
            }
        }
        GraphSource::Named(name) => Loaded {
            g: named::by_name(name)
                .ok_or_else(|| config_err(format!("unknown named graph {name:?}")))?,
            synth: None,
            source_d: None,
        },
        GraphSource::Synthetic(spec) => {
            let s = build(spec);
            Loaded {
                g: s.g.clone(),
                source_d: Some(spec.d),
                synth: Some(s),
            }
        }
    })
}

/// Resolves the parameter bundle and writes the resolved values back into
/// the config.
pub fn resolve_params(cfg: &mut Config, l: &Loaded) -> Result<Params> {
    let pc = &mut cfg.params;
    let g = &l.g;
    let eps = *pc.epsilon.get_or_insert(0.2);
    let avg = if g.n() == 0 {
        0.0
    } else {
        2.0 * g.m() as f64 / g.n() as f64
    };
    let d = *pc.d.get_or_insert(l.source_d.unwrap_or(avg.max(1.0)));
    let k = *pc.k.get_or_insert_with(|| regime_k(eps, d));
    let mut p = Params::new(eps, d, k, g.n()).map_err(|e| config_err(format!("params: {e}")))?;
    if let Some(r) = pc.r {
        p = p.with_r(r);
    }
    if let Some(lambda) = pc.lambda {
        p = p
            .with_lambda(lambda)
            .map_err(|e| config_err(format!("params: {e}")))?;
    }
    if let Some(delta) = pc.delta {
        p = p
            .with_delta(delta)
            .map_err(|e| config_err(format!("params: {e}")))?;
    }
    pc.r = Some(p.r);
    pc.lambda = Some(p.lambda);
    pc.delta = Some(p.delta);
    Ok(p)
}

/// Partition per the config. Construction failures are returned as `Err`
/// of the inner result so callers can report them.
pub fn load_partition(
    cfg: &Config,
    l: &Loaded,
    p: &Params,
) -> Result<std::result::Result<BlockPartition, String>> {
    Ok(Ok(match &cfg.partition {
        PartitionSource::Singletons => BlockPartition::singletons(&l.g),
        PartitionSource::Whole => BlockPartition::whole(&l.g),
        PartitionSource::Build => match build_partition(&l.g, p) {
            Ok(part) => part,
            Err(e) => return Ok(Err(e.to_string())),
        },
        PartitionSource::File(path) => {
            let f = File::open(path)
                .map_err(|e| config_err(format!("opening {}: {e}", path.display())))?;
            let file: PartitionFile = serde_json::from_reader(BufReader::new(f))
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            BlockPartition::from_file(&l.g, &file)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        PartitionSource::Synthetic => match &l.synth {
            Some(s) => s.part.clone(),
            None => bail!(config_err(
                "partition \"synthetic\" needs a synthetic graph"
            )),
        },
    }))
}

fn require_partition(cfg: &Config, l: &Loaded, p: &Params) -> Result<BlockPartition> {
    load_partition(cfg, l, p)?.map_err(|e| anyhow!("partition construction failed: {e}"))
}

fn model(cfg: &Config, p: &Params) -> Model {
    match cfg.chain.model {
        ModelConfig::Coloring => Model::Coloring { k: p.k },
        ModelConfig::Hardcore => Model::Hardcore { lambda: p.lambda },
    }
}

fn initial(g: &Graph, m: Model, seed: u64) -> Result<Configuration> {
    Ok(match m {
        Model::Coloring { k } => greedy_initial_retry(g, k, seed, 16)?,
        Model::Hardcore { lambda } => Configuration::empty_hardcore(g.n(), lambda),
    })
}

/// Default focus block: the synthetic block, else the first multi-vertex
/// block, else block 0.
fn focus_block(l: &Loaded, part: &BlockPartition, requested: Option<usize>) -> Result<usize> {
    let b = requested
        .or(l.synth.as_ref().map(|s| s.block))
        .or_else(|| part.blocks.iter().position(|b| b.len() > 1))
        .unwrap_or(0);
    if b >= part.len() {
        bail!(config_err(format!(
            "block {b} out of range ({} blocks)",
            part.len()
        )));
    }
    Ok(b)
}

fn focus_u_star(
    l: &Loaded,
    part: &BlockPartition,
    b: usize,
    requested: Option<usize>,
) -> Result<usize> {
    if let Some(u) = requested {
        return Ok(u);
    }
    if let Some(s) = l.synth.as_ref().filter(|s| s.block == b) {
        return Ok(s.u_star);
    }
    part.blocks[b]
        .outer_boundary
        .first()
        .copied()
        .ok_or_else(|| anyhow!("block {b} has an empty outer boundary"))
}

fn require_coloring(m: Model, what: &str) -> Result<usize> {
    match m {
        Model::Coloring { k } => Ok(k),
        Model::Hardcore { .. } => bail!(config_err(format!("{what} supports colorings only"))),
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| config_err(format!("config has no \"{name}\" section")))
}

fn write_rows<T: Serialize>(
    out: &OutDir,
    name: &str,
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut w = out.csv(name)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn gen_graph(ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
    let l = load_graph(&ctx.cfg)?;
    let g = &l.g;
    out.text("graph.txt", &g.to_text())?;
    out.json(
        "graph.json",
        &json!({
            "n": g.n(),
            "m": g.m(),
            "max_degree": g.max_degree(),
            "mean_degree": if g.n() == 0 { 0.0 } else { 2.0 * g.m() as f64 / g.n() as f64 },
        }),
    )?;
    Ok(Status::Ok)
}

pub fn partition(ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
    if matches!(ctx.cfg.partition, PartitionSource::Singletons) && ctx.cfg.graph.is_some() {
        // The subcommand exists to build; singletons is only the global default.
        ctx.cfg.partition = PartitionSource::Build;
    }
    let l = load_graph(&ctx.cfg)?;
    let p = resolve_params(&mut ctx.cfg, &l)?;
    let part = match load_partition(&ctx.cfg, &l, &p)? {
        Ok(part) => part,
        Err(e) => {
            out.json("partition-error.json", &json!({ "error": e }))?;
            return Ok(Status::Invalid(format!(
                "partition construction failed: {e}"
            )));
        }
    };
    out.json("partition.json", &part.to_file())?;
    report_validation(&l.g, &part, &p, out)
}

pub fn validate(ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
    let l = load_graph(&ctx.cfg)?;
    let p = resolve_params(&mut ctx.cfg, &l)?;
    let part = require_partition(&ctx.cfg, &l, &p)?;
    report_validation(&l.g, &part, &p, out)
}

fn report_validation(g: &Graph, part: &BlockPartition, p: &Params, out: &OutDir) -> Result<Status> {
    let rep = validate_partition(g, part, p);
    out.json(
        "validation.json",
        &json!({ "structural_ok": rep.structural_ok(), "all_ok": rep.all_ok(), "report": rep }),
    )?;
    out.json("path-density.json", &path_density(g, part, p))?;
    Ok(if rep.structural_ok() {
        Status::Ok
    } else {
        Status::Invalid(format!(
            "partition violates the structural conditions (cond1 {}, cond2b {}, cond3 {})",
            rep.cond1.violations, rep.cond2b.violations, rep.cond3.violations
        ))
    })
}

pub fn sample(ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
    let l = load_graph(&ctx.cfg)?;
    let p = resolve_params(&mut ctx.cfg, &l)?;
    let part = require_partition(&ctx.cfg, &l, &p)?;
    let sc = ctx.cfg.sample.clone().unwrap_or(SampleConfig {
        block: None,
        draws: 1,
    });
    let b = focus_block(&l, &part, sc.block)?;
    let m = model(&ctx.cfg, &p);
    let base = initial(&l.g, m, ctx.seed)?;
    let block = &part.blocks[b];
    let draws: Vec<Vec<usize>> = (0..sc.draws)
        .into_par_iter()
        .map(|d| -> Result<Vec<usize>> {
            let mut rng = replica_stream(ctx.seed, d as u64);
            let mut cfg = base.clone();
            resample_block(&mut cfg, &l.g, &part, b, &mut rng, &mut Scratch::default())?;
            Ok(block.vertices.iter().map(|&v| cfg.spins[v]).collect())
        })
        .collect::<Result<_>>()?;
    let mut w = out.csv("samples.csv")?;
    w.write_record(["draw", "vertex", "value"])?;
    for (d, vals) in draws.iter().enumerate() {
        for (&v, x) in block.vertices.iter().zip(vals) {
            w.write_record([d.to_string(), v.to_string(), x.to_string()])?;
        }
    }
    w.flush()?;
    out.json(
        "sample.json",
        &json!({ "block": b, "block_size": block.len(), "draws": sc.draws, "model": m }),
    )?;
    Ok(Status::Ok)
}

fn make_probe<'p>(kind: ProbeKind, cadence: u64, g: &'p Graph, m: Model) -> Result<Probe<'p>> {
    let f: ProbeFn<'p> = match kind {
        ProbeKind::Valid => Box::new(move |c: &Configuration| vec![c.is_valid(g) as u8 as f64]),
        ProbeKind::ColorCounts => {
            let q = match m {
                Model::Coloring { k } => k,
                Model::Hardcore { .. } => 2,
            };
            Box::new(move |c: &Configuration| {
                let mut counts = vec![0.0; q];
                for &s in &c.spins {
                    counts[s] += 1.0;
                }
                counts
            })
        }
        ProbeKind::Occupancy => {
            if !matches!(m, Model::Hardcore { .. }) {
                bail!(config_err("the occupancy probe needs the hard-core model"));
            }
            Box::new(|c: &Configuration| vec![c.spins.iter().filter(|&&s| s == 1).count() as f64])
        }
        ProbeKind::Spins => {
            Box::new(|c: &Configuration| c.spins.iter().map(|&s| s as f64).collect())
        }
    };
    let name = serde_json::to_value(kind)?
        .as_str()
        .unwrap_or_default()
        .to_string();
    Ok(Probe { name, cadence, f })
}

pub fn run(ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
    let l = load_graph(&ctx.cfg)?;
    let p = resolve_params(&mut ctx.cfg, &l)?;
    let chain = ctx.cfg.chain.clone();
    let part = match chain.kind {
        ChainKindConfig::Block => Some(require_partition(&ctx.cfg, &l, &p)?),
        ChainKindConfig::Glauber => None,
    };
    let m = model(&ctx.cfg, &p);
    for pc in &ctx.cfg.probes {
        make_probe(pc.kind, pc.cadence, &l.g, m)?;
    }
    let (seed, force, probes) = (ctx.seed, ctx.force, ctx.cfg.probes.clone());
    let results: Vec<_> = (0..chain.replicas)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let start = initial(&l.g, m, seed.wrapping_add(r as u64))?;
            let spec = ChainSpec {
                kind: match chain.kind {
                    ChainKindConfig::Glauber => ChainKind::Glauber,
                    ChainKindConfig::Block => ChainKind::Block,
                },
                partition: part.as_ref(),
                seed: seed.wrapping_add(r as u64),
                force,
            };
            let mut ch = Chain::with_rng(&l.g, spec, start, replica_stream(seed, r as u64))?;
            let mut ps: Vec<Probe> = probes
                .iter()
                .map(|pc| make_probe(pc.kind, pc.cadence, &l.g, m))
                .collect::<Result<_>>()?;
            let recs = run_chain(&mut ch, chain.steps, &mut ps)?;
            Ok((recs, ch.checkpoint(), ch.cfg.is_valid(&l.g)))
        })
        .collect::<Result<_>>()?;
    let mut summary = Vec::new();
    for (r, (recs, cp, valid)) in results.iter().enumerate() {
        let mut w = out.csv_flexible(&format!("probes-{r}.csv"))?;
        w.write_record(["step", "probe", "value"])?;
        for rec in recs {
            let mut row = vec![rec.step.to_string(), rec.probe.clone()];
            row.extend(rec.values.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        out.json(&format!("checkpoint-{r}.json"), cp)?;
        summary.push(json!({ "replica": r, "steps": cp.step_count, "final_valid": valid, "records": recs.len() }));
    }
    out.json("run.json", &summary)?;
    Ok(if results.iter().all(|x| x.2) {
        Status::Ok
    } else {
        Status::Invalid("a final state is not valid".into())
    })
}

pub fn couple(ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
    let cc = section(&ctx.cfg.couple, "couple")?.clone();
    let l = load_graph(&ctx.cfg)?;
    let p = resolve_params(&mut ctx.cfg, &l)?;
    let part = require_partition(&ctx.cfg, &l, &p)?;
    let k = require_coloring(model(&ctx.cfg, &p), "couple")?;
    let n_blocks = part.len() as f64;
    let default_tmax = (100.0 * n_blocks * n_blocks.max(2.0).ln()).ceil() as u64;
    match cc.mode {
        CoupleMode::Contraction => {
            let rep = contraction_experiment(&l.g, &part, k, cc.pairs, ctx.seed)?;
            out.json("contraction.json", &rep)?;
        }
        CoupleMode::Time => {
            let t_max = cc.t_max.unwrap_or(default_tmax);
            let times = coupling_time(&l.g, &part, k, t_max, cc.replicas, ctx.seed)?;
            let mut w = out.csv("coupling-times.csv")?;
            w.write_record(["replica", "time", "censored"])?;
            for (r, t) in times.iter().enumerate() {
                w.write_record([
                    r.to_string(),
                    t.unwrap_or(t_max).to_string(),
                    t.is_none().to_string(),
                ])?;
            }
            w.flush()?;
            let mut done: Vec<u64> = times.iter().flatten().copied().collect();
            done.sort_unstable();
            out.json(
                "coupling.json",
                &json!({
                    "blocks": part.len(),
                    "t_max": t_max,
                    "replicas": cc.replicas,
                    "censored": times.len() - done.len(),
                    "median": done.get(done.len() / 2),
                    "n_ln_n": n_blocks * n_blocks.max(2.0).ln(),
                }),
            )?;
        }
        CoupleMode::Trace => {
            let t_max = cc.t_max.unwrap_or(default_tmax);
            let x = greedy_initial_retry(&l.g, k, ctx.seed, 16)?;
            let y = greedy_initial_retry(&l.g, k, ctx.seed.wrapping_add(1), 16)?;
            let w8 = DistanceWeights::new(&l.g, &part);
            let mut ch = CoupledChain::new(&l.g, &part, x, y, replica_stream(ctx.seed, 0));
            let mut w = out.csv("coupling.csv")?;
            w.serialize(ch.state.record(&w8))?;
            while ch.state.t < t_max && !ch.state.coalesced() {
                ch.step()?;
                if ch.state.t.is_multiple_of(cc.cadence.max(1)) || ch.state.coalesced() {
                    w.serialize(ch.state.record(&w8))?;
                }
            }
            w.flush()?;
            let coalesced = ch.state.coalesced();
            out.json(
                "trace.json",
                &json!({ "t_max": t_max, "coalesced": coalesced, "t": ch.state.t }),
            )?;
        }
        CoupleMode::Propagation => {
            let b = focus_block(&l, &part, cc.block)?;
            let u = focus_u_star(&l, &part, b, cc.u_star)?;
            let rep = propagation_probe(&l.g, &part, k, b, u, cc.pairs, ctx.seed)?;
            let mut w = out.csv("propagation.csv")?;
            w.write_record(["vertex", "frequency", "std_error"])?;
            for (v, f, se) in &rep.frequencies {
                w.write_record([v.to_string(), f.to_string(), se.to_string()])?;
            }
            w.flush()?;
            out.json("propagation.json", &rep)?;
        }
    }
    Ok(Status::Ok)
}

pub fn percolate(ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
    let pc = section(&ctx.cfg.percolate, "percolate")?.clone();
    let l = load_graph(&ctx.cfg)?;
    if l.synth.is_some() && matches!(ctx.cfg.partition, PartitionSource::Singletons) {
        ctx.cfg.partition = PartitionSource::Synthetic;
    }
    let p = resolve_params(&mut ctx.cfg, &l)?;
    let part = require_partition(&ctx.cfg, &l, &p)?;
    let b = focus_block(&l, &part, pc.block)?;
    let u = focus_u_star(&l, &part, b, pc.u_star)?;
    let block = &part.blocks[b];
    match pc.mode {
        PercolateMode::Tail => {
            let (rep, rows) = tail_experiment(&l.g, block, u, &p, pc.variant, pc.trials, ctx.seed)?;
            write_rows(out, "percolation.csv", rows)?;
            out.json(
                "tail.json",
                &json!({ "block": b, "u_star": u, "block_size": block.len(), "report": rep }),
            )?;
        }
        PercolateMode::Domination => {
            let rep = domination_test(&l.g, &part, &p, b, u, pc.variant, pc.trials, ctx.seed)?;
            write_rows(out, "domination.csv", &rep.points)?;
            out.json("domination.json", &rep)?;
        }
        PercolateMode::Beta => {
            let bw = beta_weights(&l.g, block, u, &p, pc.variant)?;
            let mut w = out.csv("beta.csv")?;
            w.write_record(["vertex", "beta", "parent"])?;
            for (i, &v) in block.vertices.iter().enumerate() {
                w.write_record([
                    v.to_string(),
                    bw.beta[i].to_string(),
                    bw.parent[i].to_string(),
                ])?;
            }
            w.flush()?;
            // Low-degree inner-boundary vertices off the cycle must carry β ≥ 1/2.
            let checked: Vec<usize> = block
                .inner_boundary
                .iter()
                .copied()
                .filter(|&v| p.is_low_degree(l.g.degree(v)) && !block.on_cycle(v))
                .collect();
            let bad: Vec<usize> = checked
                .iter()
                .copied()
                .filter(|&v| bw.beta[block.position(v).unwrap()] < 0.5)
                .collect();
            out.json(
                "beta.json",
                &json!({ "block": b, "u_star": u, "checked": checked.len(), "violations": bad }),
            )?;
        }
    }
    Ok(Status::Ok)
}

pub fn uniformity(ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
    let uc = section(&ctx.cfg.uniformity, "uniformity")?.clone();
    let l = load_graph(&ctx.cfg)?;
    let p = resolve_params(&mut ctx.cfg, &l)?;
    let part = require_partition(&ctx.cfg, &l, &p)?;
    require_coloring(model(&ctx.cfg, &p), "uniformity")?;
    let probes = pick_probes(&l.g, &p, uc.probes, ctx.seed)?;
    let mut w = out.csv("uniformity.csv")?;
    let mut write_err = None;
    let rep = uniformity_experiment(&l.g, &part, &p, uc.c0, uc.c, &probes, ctx.seed, |r| {
        if write_err.is_none() {
            if let Err(e) = w.serialize(r) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    w.flush()?;
    out.json("uniformity.json", &rep)?;
    Ok(Status::Ok)
}

pub fn spectral(ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
    let sc = ctx.cfg.spectral.clone().unwrap_or_default();
    let l = load_graph(&ctx.cfg)?;
    let p = resolve_params(&mut ctx.cfg, &l)?;
    let part = require_partition(&ctx.cfg, &l, &p)?;
    let m = model(&ctx.cfg, &p);
    let space = match enumerate_states(&l.g, m) {
        Ok(s) => s,
        Err(e @ SpectralError::TooLarge) => bail!(config_err(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let gibbs = space.gibbs();
    let discrete = kernel(&space, &glauber_units(l.g.n()), KernelKind::Discrete);
    let block_discrete = kernel(&space, &block_units(&part), KernelKind::Discrete);
    let mut report = json!({
        "model": m,
        "states": space.len(),
        "irreducible": discrete.irreducible(),
        "aperiodic": discrete.aperiodic(),
        "rows_ok": discrete.rows_ok(1e-12),
    });
    let mut problems = Vec::new();
    match stationary(&discrete) {
        Ok(pi) => {
            let dev = pi
                .iter()
                .zip(&gibbs)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            report["stationary_max_dev"] = json!(dev);
            report["balance_defect"] = json!(discrete.balance_defect(&gibbs));
            report["block_balance_defect"] = json!(block_discrete.balance_defect(&gibbs));
            if dev >= 1e-10 {
                problems.push(format!("stationary law deviates from Gibbs by {dev:e}"));
            }
        }
        Err(e) => problems.push(format!("stationary law: {e}")),
    }
    let eps = sc.eps.unwrap_or(0.25);
    let max_steps = sc.max_steps.unwrap_or(100_000);
    report["tmix"] = match exact_tmix(&discrete, eps, max_steps) {
        Ok(t) => json!({ "eps": eps, "steps": t }),
        Err(e) => json!({ "eps": eps, "error": e.to_string() }),
    };
    report["relaxation_glauber"] = relaxation(&kernel(
        &space,
        &glauber_units(l.g.n()),
        KernelKind::Generator,
    ))
    .ok()
    .map_or(json!(null), |x| json!(x));
    match comparison_check(&l.g, &part, m) {
        Ok(c) => {
            if !c.inequality_holds {
                problems.push("comparison inequality fails".into());
            }
            report["comparison"] = serde_json::to_value(c)?;
        }
        Err(e) => report["comparison"] = json!({ "error": e.to_string() }),
    }
    report["problems"] = json!(problems);
    out.json("spectral.json", &report)?;
    Ok(if problems.is_empty() {
        Status::Ok
    } else {
        Status::Invalid(problems.join("; "))
    })
}

pub fn bench(ctx: &mut Ctx, out: &OutDir) -> Result<Status> {
    let bc = section(&ctx.cfg.bench, "bench")?.clone();
    if bc.block_sizes.len() < 2 && bc.ks.len() < 2 {
        bail!(config_err(
            "bench needs at least two block sizes or two k values"
        ));
    }
    let updates = |m: usize, k: usize| (200_000 / (m * k * k).max(1)).clamp(3, 2000);
    let mut points = Vec::new();
    for &m in &bc.block_sizes {
        points.push(time_update(
            m,
            bc.fixed_k,
            updates(m, bc.fixed_k),
            bc.batches,
            ctx.seed,
        )?);
    }
    for &k in &bc.ks {
        points.push(time_update(
            bc.fixed_size,
            k,
            updates(bc.fixed_size, k),
            bc.batches,
            ctx.seed,
        )?);
    }
    write_rows(out, "bench.csv", &points)?;
    let (by_size, by_k) = points.split_at(bc.block_sizes.len());
    let slope = |pts: &[blockmix::cost::CostPoint], x: fn(&blockmix::cost::CostPoint) -> f64| {
        (pts.len() >= 2).then(|| {
            let xs: Vec<f64> = pts.iter().map(x).collect();
            let ys: Vec<f64> = pts.iter().map(|q| q.seconds).collect();
            loglog_slope(&xs, &ys)
        })
    };
    out.json(
        "bench.json",
        &json!({
            "exponent_block_size": slope(by_size, |q| q.block_size as f64),
            "exponent_k": slope(by_k, |q| q.k as f64),
            "fixed_k": bc.fixed_k,
            "fixed_size": bc.fixed_size,
        }),
    )?;
    Ok(Status::Ok)
}
