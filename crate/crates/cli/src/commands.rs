use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;
use serde_json::json;
use trinity_core::sim::{read_curve_csv, write_curve_csv};
use trinity_core::tradeoff::read_samples_csv;
use trinity_core::units::{gb_to_bytes, parse_size, GB};
use trinity_core::{
    comm_cost, expected_compute, fit_curve, frontier_min_bandwidth, generate_trace, load_trace,
    marginal_benefit, memory_deficit, replay, sweep, write_trace, CacheCostParams, DeficitParams,
    DepthBand, Error, FitFamily, GeneratorConfig, HitRateModel, PerResolution, Resolution,
    ReuseDepthPolicy, SimConfig, Trace,
};

use crate::args::*;
use crate::manifest::{self, RunManifest};
use crate::{CliError, SEED_ENV};

/// What a file-producing command touched, for its manifest.
struct RunRecord {
    subcommand: &'static str,
    params: serde_json::Value,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
    manifest_at: Option<PathBuf>,
}

/// Runs one invocation. `seed_override` pins the RNG seed for `rerun`.
pub fn run(argv: &[String], seed_override: Option<u64>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    let record = match cli.command {
        Command::Deficit(a) => return deficit(&a),
        Command::ExpectedCompute(a) => return economics(&a, false),
        Command::Marginal(a) => return economics(&a, true),
        Command::Frontier(a) => return frontier(&a),
        Command::Rerun(a) => return rerun(&a.manifest),
        Command::Gen(a) => gen(&a, seed_override)?,
        Command::Replay(a) => replay_cmd(&a)?,
        Command::Sweep(a) => sweep_cmd(&a)?,
        Command::Fit(a) => fit(&a)?,
    };
    write_manifest(argv, record)
}

fn write_manifest(argv: &[String], r: RunRecord) -> Result<(), CliError> {
    let m = RunManifest {
        tool: manifest::TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: r.subcommand.into(),
        argv: argv.iter().skip(1).cloned().collect(),
        cwd: std::env::current_dir()?,
        params: r.params,
        inputs: manifest::digests(&r.inputs)?,
        seed: r.seed,
        outputs: manifest::digests(&r.outputs)?,
    };
    match r.manifest_at {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut f, &m).map_err(io::Error::from)?;
            f.write_all(b"\n")?;
            f.flush()?;
        }
        None => eprintln!("{}", serde_json::to_string(&m).map_err(io::Error::from)?),
    }
    Ok(())
}

fn rerun(path: &Path) -> Result<(), CliError> {
    let m = manifest::read(path)?;
    std::env::set_current_dir(&m.cwd)?;
    for (input, digest) in &m.inputs {
        let now = manifest::sha256_file(Path::new(input))?;
        if &now != digest {
            return Err(CliError::InputChanged(format!(
                "{input} has sha256 {now}, manifest recorded {digest}"
            )));
        }
    }
    let mut argv = vec![manifest::TOOL.to_string()];
    argv.extend(m.argv.iter().cloned());
    run(&argv, m.seed)?;
    let mut mismatched = Vec::new();
    for (output, digest) in &m.outputs {
        if &manifest::sha256_file(Path::new(output))? != digest {
            mismatched.push(output.clone());
        }
    }
    print_json(&json!({
        "manifest": path.display().to_string(),
        "reproduced": mismatched.is_empty(),
        "mismatched_outputs": mismatched,
    }))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(io::Error::from)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

fn params<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn invalid(msg: String) -> CliError {
    CliError::Core(Error::InvalidInput(msg))
}

fn deficit(a: &DeficitArgs) -> Result<(), CliError> {
    let p = DeficitParams {
        total_memory: a.total,
        device_count: a.devices,
        device_memory: a.per_device,
        allreduce_factor: a.allreduce,
        state_volume: a.state,
        deficit_bandwidth_factor: a.k,
    };
    p.validate()?;
    print_json(&json!({
        "memory_deficit_gb": memory_deficit(&p),
        "comm_cost": comm_cost(&p),
    }))
}

fn hit_model(m: &ModelArgs, entry_size_gb: f64) -> Result<HitRateModel, CliError> {
    let given = [m.hit.is_some(), m.beta.is_some(), m.kappa.is_some(), m.points.is_some()];
    if given.iter().filter(|&&g| g).count() != 1 {
        return Err(invalid(
            "give exactly one hit-rate model: --hit, --beta, --kappa/--gamma or --points".into(),
        ));
    }
    let model = if let Some(h) = m.hit {
        HitRateModel::constant(h)?
    } else if let Some(beta) = m.beta {
        HitRateModel::exponential(beta, entry_size_gb)?
    } else if let (Some(kappa), Some(gamma)) = (m.kappa, m.gamma) {
        HitRateModel::power_law(kappa, gamma)?
    } else {
        HitRateModel::empirical(parse_points(m.points.as_deref().unwrap_or_default())?)?
    };
    Ok(model)
}

fn economics(a: &EconomicsArgs, marginal: bool) -> Result<(), CliError> {
    let entry_size = parse_size(&a.entry_size)? / GB;
    let capacity = parse_size(&a.capacity)? / GB;
    let cost = CacheCostParams {
        total_steps: a.steps,
        step_cost: a.step_cost,
        reuse_depth: a.reuse,
        entry_size,
    };
    let model = hit_model(&a.model, entry_size)?;
    if marginal {
        let benefit = marginal_benefit(&cost, &model, capacity)?;
        print_json(&json!({
            "capacity_gb": capacity,
            "marginal_benefit_flops_per_gb": benefit,
            "model": model,
        }))
    } else {
        let econ = expected_compute(&cost, &model, capacity)?;
        print_json(&json!({ "economics": econ, "model": model }))
    }
}

fn frontier(a: &FrontierArgs) -> Result<(), CliError> {
    let samples = read_samples_csv(File::open(&a.samples)?)?;
    let point = frontier_min_bandwidth(&samples, a.quality, a.budget)?;
    print_json(&point)
}

fn gen(a: &GenArgs, seed_override: Option<u64>) -> Result<RunRecord, CliError> {
    let seed = match (seed_override, std::env::var(SEED_ENV)) {
        (Some(s), _) => s,
        (None, Ok(v)) => v
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?,
        (None, Err(_)) => a.seed,
    };
    let config = GeneratorConfig {
        num_requests: a.requests,
        num_clusters: a.clusters,
        zipf_exponent: a.zipf,
        noise_sigma: a.sigma,
        dimension: a.dim,
        resolution_mix: parse_mix(&a.mix)?,
        seed,
    };
    let trace = generate_trace(&config)?;
    match &a.out {
        Some(path) => write_trace(&trace, BufWriter::new(File::create(path)?))?,
        None => write_trace(&trace, BufWriter::new(io::stdout().lock()))?,
    }
    Ok(RunRecord {
        subcommand: "gen",
        params: json!({ "args": params(a), "generator": config }),
        inputs: vec![],
        seed: Some(seed),
        outputs: a.out.iter().cloned().collect(),
        manifest_at: a.out.as_deref().map(manifest::path_for),
    })
}

fn read_trace(path: &Path, dim: Option<usize>) -> Result<Trace, CliError> {
    Ok(load_trace(BufReader::new(File::open(path)?), dim)?)
}

fn sim_config(s: &SimArgs, capacity: u64) -> Result<SimConfig, CliError> {
    let mut cfg = SimConfig::new(capacity);
    cfg.total_steps = s.steps;
    cfg.step_cost = parse_step_cost(&s.step_cost)?;
    cfg.stored_depths = parse_list(&s.depths, "depth")?;
    cfg.policy = parse_policy(&s.policy)?;
    cfg.insert_on_hit = s.insert_on_hit;
    cfg.cross_resolution_match = s.cross_resolution;
    cfg.validate()?;
    Ok(cfg)
}

fn replay_cmd(a: &ReplayArgs) -> Result<RunRecord, CliError> {
    let trace = read_trace(&a.trace, a.sim.dim)?;
    let cfg = sim_config(&a.sim, capacity_bytes(&a.capacity)?)?;
    let report = replay(&trace, &cfg)?;
    let result = json!({ "capacity_bytes": report.capacity_bytes, "summary": report.summary });
    match &a.out {
        Some(path) => write_json_file(path, &result)?,
        None => print_json(&result)?,
    }
    if let Some(log) = &a.log {
        report.write_request_log(BufWriter::new(File::create(log)?))?;
    }
    Ok(RunRecord {
        subcommand: "replay",
        params: json!({ "args": params(a), "config": cfg }),
        inputs: vec![a.trace.clone()],
        seed: None,
        outputs: a.out.iter().chain(a.log.iter()).cloned().collect(),
        manifest_at: a.out.as_deref().or(a.log.as_deref()).map(manifest::path_for),
    })
}

fn sweep_cmd(a: &SweepArgs) -> Result<RunRecord, CliError> {
    let trace = read_trace(&a.trace, a.sim.dim)?;
    let capacities = a
        .capacities
        .split(',')
        .map(capacity_bytes)
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = sim_config(&a.sim, 0)?;
    let curve = sweep(&trace, &cfg, &capacities, a.jobs)?;
    match &a.out {
        Some(path) => write_curve_csv(&curve, BufWriter::new(File::create(path)?))?,
        None => print_json(&curve)?,
    }
    Ok(RunRecord {
        subcommand: "sweep",
        params: json!({ "args": params(a), "config": cfg }),
        inputs: vec![a.trace.clone()],
        seed: None,
        outputs: a.out.iter().cloned().collect(),
        manifest_at: a.out.as_deref().map(manifest::path_for),
    })
}

fn fit(a: &FitArgs) -> Result<RunRecord, CliError> {
    let family: FitFamily = a.family.parse()?;
    let entry_size = parse_size(&a.entry_size)? / GB;
    let curve = read_curve_csv(File::open(&a.curve)?)?;
    let result = fit_curve(&curve, family, entry_size)?;
    match &a.out {
        Some(path) => write_json_file(path, &result)?,
        None => print_json(&result)?,
    }
    Ok(RunRecord {
        subcommand: "fit",
        params: params(a),
        inputs: vec![a.curve.clone()],
        seed: None,
        outputs: a.out.iter().cloned().collect(),
        manifest_at: a.out.as_deref().map(manifest::path_for),
    })
}

fn capacity_bytes(s: &str) -> Result<u64, CliError> {
    let bytes = parse_size(s)?;
    if bytes > u64::MAX as f64 {
        return Err(invalid(format!("capacity {s:?} is too large")));
    }
    Ok(gb_to_bytes(bytes / GB))
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| invalid(format!("cannot parse {what} {s:?}")))
}

fn parse_list(s: &str, what: &str) -> Result<Vec<u32>, CliError> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| invalid(format!("cannot parse {what} {x:?}"))))
        .collect()
}

fn split_pair<'a>(item: &'a str, sep: char, what: &str) -> Result<(&'a str, &'a str), CliError> {
    item.split_once(sep)
        .ok_or_else(|| invalid(format!("expected {what}, got {item:?}")))
}

/// `720p=0.6,1080p=0.3,2k=0.1`; missing resolutions get weight 0.
fn parse_mix(s: &str) -> Result<PerResolution<f64>, CliError> {
    let mut mix = PerResolution::uniform(0.0);
    for item in s.split(',') {
        let (res, w) = split_pair(item, '=', "RES=WEIGHT")?;
        let res: Resolution = res.trim().parse()?;
        mix.set(res, parse_f64(w, "mix weight")?);
    }
    Ok(mix)
}

/// One number for every resolution, or a full `RES=FLOPS` map.
fn parse_step_cost(s: &str) -> Result<PerResolution<f64>, CliError> {
    if !s.contains('=') {
        return Ok(PerResolution::uniform(parse_f64(s, "step cost")?));
    }
    let mut seen = Vec::new();
    let mut costs = PerResolution::uniform(0.0);
    for item in s.split(',') {
        let (res, c) = split_pair(item, '=', "RES=FLOPS")?;
        let res: Resolution = res.trim().parse()?;
        costs.set(res, parse_f64(c, "step cost")?);
        seen.push(res);
    }
    if let Some(missing) = Resolution::ALL.iter().find(|r| !seen.contains(r)) {
        return Err(invalid(format!("no step cost given for {missing}")));
    }
    Ok(costs)
}

fn parse_policy(s: &str) -> Result<ReuseDepthPolicy, CliError> {
    let bands = s
        .split(',')
        .map(|item| {
            let (above, depth) = split_pair(item, ':', "SIM:DEPTH")?;
            Ok(DepthBand {
                above: parse_f64(above, "similarity bound")?,
                depth: depth
                    .trim()
                    .parse()
                    .map_err(|_| invalid(format!("cannot parse depth {depth:?}")))?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(ReuseDepthPolicy::new(bands)?)
}

fn parse_points(s: &str) -> Result<Vec<(f64, f64)>, CliError> {
    s.split(',')
        .map(|item| {
            let (gb, h) = split_pair(item, ':', "GB:RATE")?;
            Ok((parse_f64(gb, "capacity")?, parse_f64(h, "hit rate")?))
        })
        .collect()
}

