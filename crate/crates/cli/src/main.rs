use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use loopqoc::config::{EngineKind, RunConfig};
use loopqoc::ensemble::{fringe_scan, robustness_scan};
use loopqoc::optimize::{closed_loop_optimize, landscape_scan, open_loop_optimize};
use loopqoc::response::response_vs_offset;
use loopqoc::se_analysis::{decayed_bloch_trace, spurious_signature};

#[derive(Parser)]
#[command(name = "loopqoc", version, about = "Resonant atom interferometer simulation and phase optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fringe P_e(φ_b) of the configured sequence.
    Fringe(Common),
    /// Discrete or continuous search over mirror phases against the multipath cost.
    OptimizeOpen(Common),
    /// Closed-loop search over (φ₁, φ₂) driven by simulated noisy fringes.
    OptimizeClosed(Common),
    /// Fringe phase and visibility under a common detuning or Rabi offset.
    ScanRobustness(Common),
    /// Phase response versus signal frequency around resonance.
    Response(Common),
    /// Decayed-subensemble Bloch vectors and spurious-interference signature.
    SeAnalysis(Common),
    /// Noiseless closed-loop fitness on a (φ₁, φ₂) grid.
    Landscape(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Lindblad,
    Jump,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = "LOOPQOC_OUT", default_value = "out")]
    out: PathBuf,
    /// Master seed; replaces every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct Seeds {
    master: Option<u64>,
    ensemble: u64,
    engine: u64,
    optimize: u64,
}

#[derive(Serialize)]
struct Versions {
    loopqoc: &'static str,
    cli: &'static str,
}

#[derive(Serialize)]
struct OutputFile {
    file: String,
    sha256: String,
    rows: usize,
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    config_path: String,
    config_sha256: String,
    seeds: Seeds,
    engine: &'static str,
    versions: Versions,
    duration_s: f64,
    outputs: Vec<OutputFile>,
}

struct Table {
    name: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&str]) -> Self {
        Self {
            name,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }

    fn write(&self, dir: &Path) -> Result<OutputFile> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().context("flushing CSV")?;
        let path = dir.join(self.name);
        fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(OutputFile {
            file: self.name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            rows: self.rows.len(),
        })
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn flag_list<F: Copy>(flags: &[F], label: impl Fn(F) -> &'static str) -> String {
    flags.iter().map(|&f| label(f)).collect::<Vec<_>>().join(";")
}

fn fringe(cfg: &RunConfig) -> Result<Vec<Table>> {
    let seq = cfg.sequence.build()?;
    let mut t = Table::new("fringe.csv", &["phi_b", "p_e"]);
    for (phi, pe) in fringe_scan(&seq, &cfg.scan_setup()?)? {
        t.push([num(phi), num(pe)]);
    }
    Ok(vec![t])
}

fn optimize_open(cfg: &RunConfig) -> Result<Vec<Table>> {
    let opt = cfg.optimizer();
    let r = open_loop_optimize(&opt, &cfg.cost, &cfg.sequence.timing()?)?;
    let mut header = vec!["eval_index".to_string()];
    header.extend((1..=opt.n_phases).map(|k| format!("phi{k}")));
    header.extend(["cost".to_string(), "flag".to_string()]);
    let mut t = Table {
        name: "optimize_open.csv",
        header,
        rows: Vec::new(),
    };
    for e in &r.log {
        let mut row = vec![e.index.to_string()];
        row.extend(e.phases.iter().map(|&p| num(p)));
        row.extend([num(e.cost), String::new()]);
        t.push(row);
    }
    let mut row = vec![r.log.len().to_string()];
    row.extend(r.tuple.as_slice().iter().map(|&p| num(p)));
    let flags = flag_list(&r.flags, |f| f.label());
    row.extend([num(r.cost), if flags.is_empty() { "best".into() } else { format!("best;{flags}") }]);
    t.push(row);
    Ok(vec![t])
}

fn optimize_closed(cfg: &RunConfig) -> Result<Vec<Table>> {
    let o = &cfg.optimize;
    let template = cfg.sequence.build_unsignaled()?;
    let r = closed_loop_optimize(o.start, &template, o.noise_sigma, o.closed_max_evals, o.seed, &cfg.scan_setup()?)?;
    let mut t = Table::new("optimize_closed.csv", &["eval_index", "phi1", "phi2", "fitness", "flag"]);
    for (k, s) in r.trajectory.iter().enumerate() {
        let flag = if s.degenerate { "degenerate_fit" } else { "" };
        t.push([k.to_string(), num(s.phi1), num(s.phi2), num(s.fitness), flag.to_string()]);
    }
    let flags = flag_list(&r.flags, |f| f.label());
    t.push([
        r.trajectory.len().to_string(),
        num(r.best.0),
        num(r.best.1),
        num(r.best_fitness),
        if flags.is_empty() { "best".into() } else { format!("best;{flags}") },
    ]);
    Ok(vec![t])
}

fn scan_robustness(cfg: &RunConfig) -> Result<Vec<Table>> {
    let seq = cfg.sequence.build()?;
    let pts = robustness_scan(&seq, &cfg.scan_setup()?, cfg.robustness.axis, &cfg.robustness.offsets)?;
    let mut t = Table::new("robustness.csv", &["offset", "v_norm", "phase", "v_err", "phase_err"]);
    for p in pts {
        t.push([
            num(p.offset),
            num(p.visibility_norm),
            num(p.fit.phase),
            num(p.fit.visibility_err),
            num(p.fit.phase_err),
        ]);
    }
    Ok(vec![t])
}

fn response(cfg: &RunConfig) -> Result<Vec<Table>> {
    if cfg.sequence.signal.is_some() {
        bail!("config key `signal`: the response scan injects its own signal; remove the [signal] table");
    }
    let template = cfg.sequence.build_unsignaled()?;
    let curve = response_vs_offset(&template, cfg.response.delta_phi, &cfg.response.offsets_hz, &cfg.scan_setup()?)?;
    let mut t = Table::new("response.csv", &["delta_f_hz", "response_signed", "response_abs"]);
    for p in curve.points {
        t.push([num(p.offset_hz), num(p.signed), num(p.magnitude)]);
    }
    Ok(vec![t])
}

fn se_analysis(cfg: &RunConfig) -> Result<Vec<Table>> {
    let template = cfg.sequence.build_unsignaled()?;
    let setup = cfg.scan_setup()?;
    let trace = decayed_bloch_trace(&template, &setup.ensemble, cfg.se.n_trajectories, cfg.engine.seed)?;
    let mut bloch = Table::new("bloch_trace.csv", &["pulse_index", "u", "v", "w", "decayed_fraction"]);
    for p in &trace.points {
        bloch.push([p.pulse.to_string(), num(p.u), num(p.v), num(p.w), num(p.decayed_fraction)]);
    }
    let base = cfg.sequence.base()?;
    let sig = spurious_signature(&base, cfg.sequence.loops, &template, &cfg.se.delta_phis, &setup)?;
    let engine = cfg.engine.kind.label();
    let mut signature = Table::new(
        "signature.csv",
        &["delta_phi", "v", "v_err", "dphase", "dphase_err", "engine"],
    );
    for p in sig {
        signature.push([
            num(p.delta_phi),
            num(p.visibility),
            num(p.visibility_err),
            num(p.dphase),
            num(p.dphase_err),
            engine.to_string(),
        ]);
    }
    Ok(vec![bloch, signature])
}

fn landscape(cfg: &RunConfig) -> Result<Vec<Table>> {
    let template = cfg.sequence.build_unsignaled()?;
    let land = landscape_scan(
        &template,
        cfg.optimize.landscape_resolution,
        0.0,
        cfg.optimize.seed,
        &cfg.scan_setup()?,
    )?;
    let mut t = Table::new("landscape.csv", &["phi1", "phi2", "fitness"]);
    for (k, &f) in land.values.iter().enumerate() {
        t.push([num(land.phase(k / land.n)), num(land.phase(k % land.n)), num(f)]);
    }
    Ok(vec![t])
}

fn run(name: &'static str, common: &Common, body: fn(&RunConfig) -> Result<Vec<Table>>) -> Result<()> {
    let start = Instant::now();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let text = fs::read(&common.config).with_context(|| format!("reading {}", common.config.display()))?;
    let mut cfg = RunConfig::from_toml(std::str::from_utf8(&text).context("config is not UTF-8")?)?;
    if let Some(master) = common.seed {
        cfg.reseed(master);
    }
    if let Some(e) = common.engine {
        cfg.engine.kind = match e {
            EngineArg::Lindblad => EngineKind::Lindblad,
            EngineArg::Jump => EngineKind::Jump,
        };
    }
    let tables = body(&cfg)?;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let outputs = tables
        .iter()
        .map(|t| t.write(&common.out))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        command: name,
        config_path: common.config.display().to_string(),
        config_sha256: hex::encode(Sha256::digest(&text)),
        seeds: Seeds {
            master: common.seed,
            ensemble: cfg.ensemble.seed,
            engine: cfg.engine.seed,
            optimize: cfg.optimize.seed,
        },
        engine: cfg.engine.kind.label(),
        versions: Versions {
            loopqoc: loopqoc::VERSION,
            cli: env!("CARGO_PKG_VERSION"),
        },
        duration_s: start.elapsed().as_secs_f64(),
        outputs,
    };
    let path = common.out.join(format!("{name}_manifest.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    for o in &manifest.outputs {
        println!("{}", common.out.join(&o.file).display());
    }
    println!("{}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Fringe(c) => run("fringe", c, fringe),
        Command::OptimizeOpen(c) => run("optimize_open", c, optimize_open),
        Command::OptimizeClosed(c) => run("optimize_closed", c, optimize_closed),
        Command::ScanRobustness(c) => run("scan_robustness", c, scan_robustness),
        Command::Response(c) => run("response", c, response),
        Command::SeAnalysis(c) => run("se_analysis", c, se_analysis),
        Command::Landscape(c) => run("landscape", c, landscape),
    }
}
