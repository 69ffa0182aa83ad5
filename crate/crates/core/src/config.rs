//! TOML run configuration.
//!
//! Top-level keys describe the sequence; optional tables configure the other
//! stages. Phases are numbers in radians or strings such as `"3/8 pi"`.
//!
//! ```toml
//! base_phases = ["3/8 pi", "7/8 pi", "15/8 pi", "11/8 pi", "11/8 pi", "15/8 pi", "7/8 pi", "3/8 pi"]
//! loops = 64
//! pi_duration_ns = 80
//! deadtime_ns = 80
//! quantize_bits = 16
//!
//! [signal]
//! delta_phi = 0.001
//! freq_hz = 3.125e6
//! theta0 = "1/2 pi"
//! ```

use std::path::Path;

use toml::{Table, Value};

use crate::dynamics::EXCITED_LIFETIME;
use crate::ensemble::{sample_ensemble, Engine, Ensemble, EnsembleSpec, RobustnessAxis, ScanSetup};
use crate::error::{Error, Result};
use crate::multipath::{ArmDistance, CostSpec, RECOIL_PHASE_RATE};
use crate::optimize::{OptimizerConfig, SearchMode};
use crate::sequence::{build_sequence, inject_signal, PhaseTuple, SequenceSpec, TimingSpec};

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Parses `"3/8 pi"`, `"-pi/2"`, `"2 pi"`, `"0.25*pi"` or a plain number into radians.
pub fn parse_phase(text: &str) -> Option<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    let s = s.replace('π', "pi");
    if let Ok(x) = s.parse::<f64>() {
        return Some(x);
    }
    let pos = s.find("pi")?;
    let (before, after) = (&s[..pos], &s[pos + 2..]);
    let coef = match before.trim_end_matches('*') {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => parse_ratio(c)?,
    };
    let div = match after {
        "" => 1.0,
        a => a.strip_prefix('/')?.parse::<f64>().ok()?,
    };
    if div == 0.0 {
        return None;
    }
    Some(coef * std::f64::consts::PI / div)
}

fn parse_ratio(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => {
            let d: f64 = d.parse().ok()?;
            (d != 0.0).then_some(n.parse::<f64>().ok()? / d)
        }
        None => s.parse().ok(),
    }
}

/// Read access to one table with key-qualified errors.
struct Section<'a> {
    path: String,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn key(&self, k: &str) -> String {
        if self.path.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.path)
        }
    }

    fn deny_unknown(&self, allowed: &[&str]) -> Result<()> {
        for k in self.table.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(config_err(&self.key(k), "unknown key"));
            }
        }
        Ok(())
    }

    fn get(&self, k: &str) -> Option<&'a Value> {
        self.table.get(k)
    }

    fn require(&self, k: &str) -> Result<&'a Value> {
        self.get(k).ok_or_else(|| config_err(&self.key(k), "missing required key"))
    }

    fn number(&self, k: &str, v: &Value) -> Result<f64> {
        let x = match v {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            _ => return Err(config_err(&self.key(k), "expected a number")),
        };
        if !x.is_finite() {
            return Err(config_err(&self.key(k), "must be finite"));
        }
        Ok(x)
    }

    fn f64_or(&self, k: &str, default: f64) -> Result<f64> {
        self.get(k).map_or(Ok(default), |v| self.number(k, v))
    }

    fn positive_or(&self, k: &str, default: f64) -> Result<f64> {
        let x = self.f64_or(k, default)?;
        if x <= 0.0 {
            return Err(config_err(&self.key(k), "must be positive"));
        }
        Ok(x)
    }

    fn uint(&self, k: &str, v: &Value) -> Result<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            _ => Err(config_err(&self.key(k), "expected a non-negative integer")),
        }
    }

    fn usize_req(&self, k: &str) -> Result<usize> {
        Ok(self.uint(k, self.require(k)?)? as usize)
    }

    fn usize_or(&self, k: &str, default: usize) -> Result<usize> {
        self.get(k).map_or(Ok(default), |v| Ok(self.uint(k, v)? as usize))
    }

    fn u64_or(&self, k: &str, default: u64) -> Result<u64> {
        self.get(k).map_or(Ok(default), |v| self.uint(k, v))
    }

    fn bool_or(&self, k: &str, default: bool) -> Result<bool> {
        match self.get(k) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(config_err(&self.key(k), "expected true or false")),
        }
    }

    fn str_or(&self, k: &str, default: &'a str) -> Result<&'a str> {
        match self.get(k) {
            None => Ok(default),
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(config_err(&self.key(k), "expected a string")),
        }
    }

    fn phase_value(&self, k: &str, v: &Value) -> Result<f64> {
        match v {
            Value::String(s) => parse_phase(s)
                .ok_or_else(|| config_err(&self.key(k), format!("cannot parse phase {s:?}"))),
            other => self.number(k, other),
        }
    }

    fn phase_or(&self, k: &str, default: f64) -> Result<f64> {
        self.get(k).map_or(Ok(default), |v| self.phase_value(k, v))
    }

    fn list(&self, k: &str) -> Result<Option<&'a Vec<Value>>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(_) => Err(config_err(&self.key(k), "expected an array")),
        }
    }

    fn phase_list(&self, k: &str) -> Result<Option<Vec<f64>>> {
        self.list(k)?
            .map(|a| a.iter().map(|v| self.phase_value(k, v)).collect())
            .transpose()
    }

    fn number_list(&self, k: &str) -> Result<Option<Vec<f64>>> {
        self.list(k)?
            .map(|a| a.iter().map(|v| self.number(k, v)).collect())
            .transpose()
    }

    fn sub(&self, k: &str) -> Result<Option<Section<'a>>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Section {
                path: self.key(k),
                table: t,
            })),
            Some(_) => Err(config_err(&self.key(k), "expected a table")),
        }
    }
}

/// Resonant phase signal, `freq_hz` in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalConfig {
    pub delta_phi: f64,
    pub freq_hz: f64,
    pub theta0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceConfig {
    pub base_phases: Vec<f64>,
    pub loops: usize,
    pub pi_duration_ns: f64,
    pub deadtime_ns: f64,
    pub beamsplitter_ns: f64,
    pub quantize_bits: Option<u32>,
    /// Excited-state lifetime; `None` disables decay.
    pub lifetime_us: Option<f64>,
    pub final_bs_phase: f64,
    pub signal: Option<SignalConfig>,
}

impl SequenceConfig {
    pub fn timing(&self) -> Result<TimingSpec<f64>> {
        TimingSpec::new(
            self.pi_duration_ns * 1e-9,
            self.deadtime_ns * 1e-9,
            self.beamsplitter_ns * 1e-9,
        )
    }

    pub fn decay_rate(&self) -> f64 {
        self.lifetime_us.map_or(0.0, |t| 1.0 / (t * 1e-6))
    }

    pub fn base(&self) -> Result<PhaseTuple<f64>> {
        PhaseTuple::new(self.base_phases.clone())
    }

    /// The configured sequence, signal included.
    pub fn build(&self) -> Result<SequenceSpec<f64>> {
        let seq = self.build_unsignaled()?;
        match self.signal {
            Some(s) => inject_signal(&seq, s.delta_phi, std::f64::consts::TAU * s.freq_hz, s.theta0),
            None => Ok(seq),
        }
    }

    pub fn build_unsignaled(&self) -> Result<SequenceSpec<f64>> {
        Ok(build_sequence(self.base()?, self.loops, self.timing()?, self.final_bs_phase)?
            .with_decay_rate(self.decay_rate())
            .with_quantization(self.quantize_bits))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    /// Zero selects a single ideal atom with perfect pulses.
    pub n_atoms: usize,
    pub doppler_sigma_over_rabi: f64,
    pub waist_over_cloud: f64,
    pub target_transfer: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Lindblad,
    Jump,
}

impl EngineKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lindblad" => Some(EngineKind::Lindblad),
            "jump" => Some(EngineKind::Jump),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EngineKind::Lindblad => "lindblad",
            EngineKind::Jump => "jump",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub kind: EngineKind,
    pub trajectories: usize,
    pub seed: u64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub n_phases: usize,
    pub mode: SearchMode,
    pub max_evals: usize,
    pub restarts: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub start: (f64, f64),
    pub closed_max_evals: usize,
    pub landscape_resolution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessConfig {
    pub axis: RobustnessAxis,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseConfig {
    pub delta_phi: f64,
    pub offsets_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeConfig {
    pub n_trajectories: usize,
    pub delta_phis: Vec<f64>,
}

/// Everything a CLI run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sequence: SequenceConfig,
    pub ensemble: EnsembleConfig,
    pub engine: EngineConfig,
    pub cost: CostSpec<f64>,
    pub optimize: OptimizeConfig,
    pub robustness: RobustnessConfig,
    pub response: ResponseConfig,
    pub se: SeConfig,
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| config_err("<file>", format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| config_err("<syntax>", e.message()))?;
        let root = Section {
            path: String::new(),
            table: &table,
        };
        root.deny_unknown(&[
            "base_phases",
            "loops",
            "pi_duration_ns",
            "deadtime_ns",
            "beamsplitter_ns",
            "quantize_bits",
            "lifetime_us",
            "decay",
            "final_bs_phase",
            "signal",
            "ensemble",
            "engine",
            "cost",
            "optimize",
            "robustness",
            "response",
            "se",
        ])?;
        let sequence = parse_sequence(&root)?;
        Ok(Self {
            ensemble: parse_ensemble(root.sub("ensemble")?)?,
            engine: parse_engine(root.sub("engine")?)?,
            cost: parse_cost(root.sub("cost")?)?,
            optimize: parse_optimize(root.sub("optimize")?, sequence.base_phases.len())?,
            robustness: parse_robustness(root.sub("robustness")?)?,
            response: parse_response(root.sub("response")?)?,
            se: parse_se(root.sub("se")?)?,
            sequence,
        })
    }

    pub fn sample_ensemble(&self) -> Result<Ensemble<f64>> {
        let timing = self.sequence.timing()?;
        if self.ensemble.n_atoms == 0 {
            return Ok(Ensemble::ideal(&timing));
        }
        let mut spec = EnsembleSpec::for_timing(&timing, self.ensemble.n_atoms, self.ensemble.seed);
        spec.doppler_sigma_over_rabi = self.ensemble.doppler_sigma_over_rabi;
        spec.waist_over_cloud = self.ensemble.waist_over_cloud;
        spec.target_transfer = self.ensemble.target_transfer;
        sample_ensemble(&spec)
    }

    pub fn engine(&self) -> Engine {
        match self.engine.kind {
            EngineKind::Lindblad => Engine::Lindblad,
            EngineKind::Jump => Engine::Jump {
                trajectories: self.engine.trajectories,
                seed: self.engine.seed,
            },
        }
    }

    pub fn scan_setup(&self) -> Result<ScanSetup<f64>> {
        let mut setup = ScanSetup::new(self.sample_ensemble()?, self.engine());
        setup.n_points = self.engine.n_points;
        Ok(setup)
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            n_phases: self.optimize.n_phases,
            loops: self.sequence.loops,
            mode: self.optimize.mode,
            max_evals: self.optimize.max_evals,
            seed: self.optimize.seed,
            restarts: self.optimize.restarts,
        }
    }

    /// Replaces every seed with values derived from `master`.
    pub fn reseed(&mut self, master: u64) {
        use crate::rng::derive_seed;
        self.ensemble.seed = derive_seed(master, 0);
        self.engine.seed = derive_seed(master, 1);
        self.optimize.seed = derive_seed(master, 2);
    }
}

fn parse_sequence(root: &Section<'_>) -> Result<SequenceConfig> {
    let base_phases = root
        .phase_list("base_phases")?
        .ok_or_else(|| config_err("base_phases", "missing required key"))?;
    if base_phases.is_empty() {
        return Err(config_err("base_phases", "needs at least one phase"));
    }
    let loops = root.usize_req("loops")?;
    if loops == 0 || loops % base_phases.len() != 0 {
        return Err(config_err(
            "loops",
            format!("must be a positive multiple of the {} base phases", base_phases.len()),
        ));
    }
    let quantize_bits = match root.get("quantize_bits") {
        None => None,
        Some(v) => {
            let b = root.uint("quantize_bits", v)?;
            if !(1..=32).contains(&b) {
                return Err(config_err("quantize_bits", "must be in [1, 32]"));
            }
            Some(b as u32)
        }
    };
    let lifetime = root.positive_or("lifetime_us", EXCITED_LIFETIME * 1e6)?;
    let signal = match root.sub("signal")? {
        None => None,
        Some(s) => {
            s.deny_unknown(&["delta_phi", "freq_hz", "theta0"])?;
            Some(SignalConfig {
                delta_phi: s.phase_value("delta_phi", s.require("delta_phi")?)?,
                freq_hz: s.number("freq_hz", s.require("freq_hz")?)?,
                theta0: s.phase_or("theta0", std::f64::consts::FRAC_PI_2)?,
            })
        }
    };
    Ok(SequenceConfig {
        base_phases,
        loops,
        pi_duration_ns: root.positive_or("pi_duration_ns", 80.0)?,
        deadtime_ns: {
            let d = root.f64_or("deadtime_ns", 80.0)?;
            if d < 0.0 {
                return Err(config_err("deadtime_ns", "must be non-negative"));
            }
            d
        },
        beamsplitter_ns: root.positive_or("beamsplitter_ns", 40.0)?,
        quantize_bits,
        lifetime_us: root.bool_or("decay", true)?.then_some(lifetime),
        final_bs_phase: root.phase_or("final_bs_phase", 0.0)?,
        signal,
    })
}

fn parse_ensemble(sec: Option<Section<'_>>) -> Result<EnsembleConfig> {
    let mut out = EnsembleConfig {
        n_atoms: 2000,
        doppler_sigma_over_rabi: 0.1,
        waist_over_cloud: 3.0,
        target_transfer: Some(0.9),
        seed: 1,
    };
    if let Some(s) = sec {
        s.deny_unknown(&["n_atoms", "doppler_sigma_over_rabi", "waist_over_cloud", "target_transfer", "seed"])?;
        out.n_atoms = s.usize_or("n_atoms", out.n_atoms)?;
        out.doppler_sigma_over_rabi = s.f64_or("doppler_sigma_over_rabi", out.doppler_sigma_over_rabi)?;
        out.waist_over_cloud = s.positive_or("waist_over_cloud", out.waist_over_cloud)?;
        if let Some(v) = s.get("target_transfer") {
            let t = s.number("target_transfer", v)?;
            out.target_transfer = (t > 0.0).then_some(t);
        }
        out.seed = s.u64_or("seed", out.seed)?;
    }
    Ok(out)
}

fn parse_engine(sec: Option<Section<'_>>) -> Result<EngineConfig> {
    let mut out = EngineConfig {
        kind: EngineKind::Lindblad,
        trajectories: 10_000,
        seed: 2,
        n_points: 24,
    };
    if let Some(s) = sec {
        s.deny_unknown(&["kind", "trajectories", "seed", "n_points"])?;
        let kind = s.str_or("kind", "lindblad")?;
        out.kind = EngineKind::parse(kind).ok_or_else(|| config_err(&s.key("kind"), "expected \"lindblad\" or \"jump\""))?;
        out.trajectories = s.usize_or("trajectories", out.trajectories)?;
        out.seed = s.u64_or("seed", out.seed)?;
        out.n_points = s.usize_or("n_points", out.n_points)?;
        if out.n_points < 5 {
            return Err(config_err(&s.key("n_points"), "must be at least 5"));
        }
    }
    Ok(out)
}

fn parse_cost(sec: Option<Section<'_>>) -> Result<CostSpec<f64>> {
    let mut out = CostSpec::default();
    if let Some(s) = sec {
        s.deny_unknown(&[
            "weight_exponent",
            "prune_threshold",
            "pulse_errors",
            "detuning_ratios",
            "snapshot_stride",
            "distance",
            "recoil_phase_rate",
        ])?;
        out.weight_exponent = s.f64_or("weight_exponent", out.weight_exponent)?;
        out.prune_threshold = s.f64_or("prune_threshold", out.prune_threshold)?;
        let eps = s.number_list("pulse_errors")?.unwrap_or_else(|| vec![0.15, 0.2048, 0.25]);
        let det = s.number_list("detuning_ratios")?.unwrap_or_else(|| vec![-0.1, 0.0, 0.1]);
        out.error_samples = eps.iter().flat_map(|&e| det.iter().map(move |&d| (e, d))).collect();
        out.snapshot_stride = s.usize_or("snapshot_stride", out.snapshot_stride)?;
        out.distance = match s.str_or("distance", "state_matched")? {
            "state_matched" => ArmDistance::StateMatched,
            "nearest" => ArmDistance::Nearest,
            _ => return Err(config_err(&s.key("distance"), "expected \"state_matched\" or \"nearest\"")),
        };
        out.recoil_phase_rate = s.f64_or("recoil_phase_rate", RECOIL_PHASE_RATE)?;
        out.validate().map_err(|e| config_err(&s.path, e.to_string()))?;
    }
    Ok(out)
}

fn parse_optimize(sec: Option<Section<'_>>, n_base: usize) -> Result<OptimizeConfig> {
    let mut out = OptimizeConfig {
        n_phases: n_base,
        mode: SearchMode::DiscretePiOver8,
        max_evals: 20_000,
        restarts: 8,
        seed: 3,
        noise_sigma: 0.01,
        start: (std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2 + std::f64::consts::FRAC_PI_4),
        closed_max_evals: 200,
        landscape_resolution: std::f64::consts::PI / 32.0,
    };
    if let Some(s) = sec {
        s.deny_unknown(&[
            "n_phases",
            "mode",
            "max_evals",
            "restarts",
            "seed",
            "noise_sigma",
            "start_phi1",
            "start_phi2",
            "closed_max_evals",
            "landscape_resolution",
        ])?;
        out.n_phases = s.usize_or("n_phases", out.n_phases)?;
        out.mode = match s.str_or("mode", "discrete_pi_over_8")? {
            "discrete_pi_over_8" => SearchMode::DiscretePiOver8,
            "continuous" => SearchMode::Continuous,
            _ => return Err(config_err(&s.key("mode"), "expected \"discrete_pi_over_8\" or \"continuous\"")),
        };
        out.max_evals = s.usize_or("max_evals", out.max_evals)?;
        out.restarts = s.usize_or("restarts", out.restarts)?;
        out.seed = s.u64_or("seed", out.seed)?;
        out.noise_sigma = s.f64_or("noise_sigma", out.noise_sigma)?;
        if out.noise_sigma < 0.0 {
            return Err(config_err(&s.key("noise_sigma"), "must be non-negative"));
        }
        out.start = (s.phase_or("start_phi1", out.start.0)?, s.phase_or("start_phi2", out.start.1)?);
        out.closed_max_evals = s.usize_or("closed_max_evals", out.closed_max_evals)?;
        out.landscape_resolution = s.phase_or("landscape_resolution", out.landscape_resolution)?;
    }
    Ok(out)
}

fn parse_robustness(sec: Option<Section<'_>>) -> Result<RobustnessConfig> {
    let mut out = RobustnessConfig {
        axis: RobustnessAxis::Detuning,
        offsets: (-10..=10).map(|k| k as f64 * 0.01).collect(),
    };
    if let Some(s) = sec {
        s.deny_unknown(&["axis", "offsets"])?;
        out.axis = match s.str_or("axis", "detuning")? {
            "detuning" => RobustnessAxis::Detuning,
            "rabi" => RobustnessAxis::Rabi,
            _ => return Err(config_err(&s.key("axis"), "expected \"detuning\" or \"rabi\"")),
        };
        if let Some(o) = s.number_list("offsets")? {
            out.offsets = o;
        }
    }
    Ok(out)
}

fn parse_response(sec: Option<Section<'_>>) -> Result<ResponseConfig> {
    let mut out = ResponseConfig {
        delta_phi: 1e-3,
        offsets_hz: (-40..=40).map(|k| k as f64 * 2.5e4).collect(),
    };
    if let Some(s) = sec {
        s.deny_unknown(&["delta_phi", "offsets_hz"])?;
        out.delta_phi = s.phase_or("delta_phi", out.delta_phi)?;
        if let Some(o) = s.number_list("offsets_hz")? {
            out.offsets_hz = o;
        }
    }
    Ok(out)
}

fn parse_se(sec: Option<Section<'_>>) -> Result<SeConfig> {
    let mut out = SeConfig {
        n_trajectories: 10_000,
        delta_phis: (-8..=8).map(|k| k as f64 * 0.025).collect(),
    };
    if let Some(s) = sec {
        s.deny_unknown(&["n_trajectories", "delta_phis"])?;
        out.n_trajectories = s.usize_or("n_trajectories", out.n_trajectories)?;
        if let Some(d) = s.phase_list("delta_phis")? {
            out.delta_phis = d;
        }
    }
    Ok(out)
}
