//! Declarative scenarios: a TOML file picks a design pipeline, the system
//! dimensions and an optional one-dimensional sweep; running it yields one
//! result row per grid point.
//!
//! The system realization (channel, observation model, CSI error, BCD
//! initialization, heterogeneous noise levels) is drawn from the scenario
//! seed and shared by every grid point, so a sweep compares like with like
//! and designs run with the same seed see the same channel, estimate and
//! starting point. Each grid point gets its own Monte Carlo seed,
//! `seed ^ splitmix64(index)`. Every purpose has its own ChaCha stream, and
//! rows do not depend on thread scheduling.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::{lmmse_floor, monte_carlo_mse, monte_carlo_mse_csi, Transceiver};
use crate::channel::{assemble_channel, draw_clusters, perturb_csi};
use crate::digital::Problem;
use crate::error::{Error, Result};
use crate::hybrid::hybridize;
use crate::model::{BcdParams, ObservationModel, SystemConfig};
use crate::noiseless::noiseless_design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Gain-ordered RF selection with interlacing baseband precoders; no FC noise.
    Noiseless,
    Digital,
    Hybrid,
    /// Digital design averaging over the CSI error.
    Robust,
    RobustHybrid,
    /// Digital design that treats the channel estimate as exact.
    Agnostic,
    AgnosticHybrid,
}

impl Design {
    pub fn uses_rf(self) -> bool {
        matches!(
            self,
            Design::Noiseless | Design::Hybrid | Design::RobustHybrid | Design::AgnosticHybrid
        )
    }

    pub fn uses_csi(self) -> bool {
        matches!(
            self,
            Design::Robust | Design::RobustHybrid | Design::Agnostic | Design::AgnosticHybrid
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Design::Noiseless => "noiseless",
            Design::Digital => "digital",
            Design::Hybrid => "hybrid",
            Design::Robust => "robust",
            Design::RobustHybrid => "robust-hybrid",
            Design::Agnostic => "agnostic",
            Design::AgnosticHybrid => "agnostic-hybrid",
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseProfile {
    #[default]
    Homogeneous,
    /// Per-node observation noise power drawn uniformly from -10..=9 dB.
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    SnrObDb,
    SnrFcDb,
    NRfNode,
    NRfFc,
    NNodes,
    Q,
    Sigma2Csi,
}

impl Axis {
    pub const ALL: [Axis; 7] = [
        Axis::SnrObDb,
        Axis::SnrFcDb,
        Axis::NRfNode,
        Axis::NRfFc,
        Axis::NNodes,
        Axis::Q,
        Axis::Sigma2Csi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::SnrObDb => "snr_ob_db",
            Axis::SnrFcDb => "snr_fc_db",
            Axis::NRfNode => "n_rf_node",
            Axis::NRfFc => "n_rf_fc",
            Axis::NNodes => "n_nodes",
            Axis::Q => "q",
            Axis::Sigma2Csi => "sigma2_csi",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, Axis::NRfNode | Axis::NRfFc | Axis::NNodes | Axis::Q)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep axis `{s}`")))
    }
}

/// One budget for every node, or one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Budget {
    Uniform(f64),
    PerNode(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
}

/// Scenario file contents. Missing keys take the desk-scale defaults; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub design: Design,
    pub noise_profile: NoiseProfile,
    pub n_nodes: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub q: usize,
    pub l: usize,
    pub clusters: usize,
    pub n_rf_node: usize,
    pub n_rf_fc: usize,
    pub rho: Budget,
    pub snr_ob_db: f64,
    pub snr_fc_db: f64,
    pub sigma2_csi: f64,
    pub seed: u64,
    /// Monte Carlo trials per channel realization.
    pub trials: usize,
    /// Independent channel / observation-model draws averaged per point.
    pub realizations: usize,
    pub bcd_max_iter: usize,
    pub bcd_epsilon: f64,
    pub spacing_rx: f64,
    pub spacing_tx: f64,
    pub sweep: Option<Sweep>,
}

impl Default for Scenario {
    fn default() -> Self {
        let desk = SystemConfig::desk(10);
        Self {
            id: "scenario".into(),
            design: Design::Digital,
            noise_profile: NoiseProfile::Homogeneous,
            n_nodes: desk.n_nodes,
            n_tx: desk.n_tx,
            n_rx: desk.n_rx,
            q: desk.q,
            l: desk.l,
            clusters: desk.clusters,
            n_rf_node: desk.n_rf_node,
            n_rf_fc: desk.n_rf_fc,
            rho: Budget::Uniform(1.0),
            snr_ob_db: 10.0,
            snr_fc_db: 10.0,
            sigma2_csi: 0.0,
            seed: 0,
            trials: desk.trials,
            realizations: 1,
            bcd_max_iter: desk.bcd.max_iter,
            bcd_epsilon: desk.bcd.epsilon,
            spacing_rx: desk.spacing_rx,
            spacing_tx: desk.spacing_tx,
            sweep: None,
        }
    }
}

/// Output row; numeric fields are empty when the point failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario_id: String,
    pub design: String,
    pub sweep_axis: String,
    pub sweep_value: Option<f64>,
    pub trials: usize,
    pub mse_analytic: Option<f64>,
    pub mse_mc: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub benchmark: Option<f64>,
    pub wall_time_ms: Option<f64>,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Fill `wall_time_ms`; off by default so identical runs give identical
    /// bytes.
    pub timing: bool,
}

pub fn db_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ splitmix64(index as u64)
}

/// Independent random streams inside one grid point.
#[derive(Debug, Clone, Copy)]
pub enum Purpose {
    Channel = 0,
    Observation = 1,
    Csi = 2,
    Init = 3,
    MonteCarlo = 4,
    NoiseProfile = 5,
}

pub fn stream(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.trials < 2 {
            return Err(Error::Config("trials must be at least 2".into()));
        }
        if let Budget::PerNode(v) = &self.rho {
            if v.len() != self.n_nodes {
                return Err(Error::Config(format!(
                    "rho lists {} budgets for {} nodes",
                    v.len(),
                    self.n_nodes
                )));
            }
        }
        if !self.design.uses_csi() && self.sigma2_csi != 0.0 {
            return Err(Error::Config(format!(
                "sigma2_csi is only meaningful for CSI-error designs, not `{}`",
                self.design
            )));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep grid is empty".into()));
            }
            self.check_axis(sweep.axis)?;
            for &v in &sweep.values {
                self.with_axis(sweep.axis, v)?.base_config()?;
            }
        } else {
            self.base_config()?;
        }
        Ok(())
    }

    /// Whether the design and noise profile give the axis a meaning.
    pub fn check_axis(&self, axis: Axis) -> Result<()> {
        let ok = match axis {
            Axis::NRfNode => self.design.uses_rf(),
            Axis::NRfFc => self.design.uses_rf() && self.design != Design::Noiseless,
            Axis::Sigma2Csi => self.design.uses_csi(),
            Axis::SnrFcDb => self.design != Design::Noiseless,
            Axis::SnrObDb => self.noise_profile == NoiseProfile::Homogeneous,
            Axis::NNodes => !matches!(self.rho, Budget::PerNode(_)),
            Axis::Q => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "axis `{axis}` is not valid for design `{}` with {:?} noise and {:?} budgets",
                self.design, self.noise_profile, self.rho
            )))
        }
    }

    /// Copy with one axis set to `value`.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self> {
        let mut s = self.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value < 1e9 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{axis} needs a positive integer, got {value}")))
            }
        };
        if !value.is_finite() || (axis.is_count() && count().is_err()) {
            return Err(Error::Config(format!("invalid value {value} for {axis}")));
        }
        match axis {
            Axis::SnrObDb => s.snr_ob_db = value,
            Axis::SnrFcDb => s.snr_fc_db = value,
            Axis::NRfNode => s.n_rf_node = count()?,
            Axis::NRfFc => s.n_rf_fc = count()?,
            Axis::NNodes => s.n_nodes = count()?,
            Axis::Q => s.q = count()?,
            Axis::Sigma2Csi => {
                if value < 0.0 {
                    return Err(Error::Config(format!("sigma2_csi must be >= 0, got {value}")));
                }
                s.sigma2_csi = value
            }
        }
        Ok(s)
    }

    /// System configuration before any per-point random draw; heterogeneous
    /// noise levels are filled in by [`Scenario::config`].
    pub fn base_config(&self) -> Result<SystemConfig> {
        let n = self.n_nodes;
        let rho = match &self.rho {
            Budget::Uniform(r) => vec![*r; n],
            Budget::PerNode(v) => v.clone(),
        };
        let noiseless = self.design == Design::Noiseless;
        let cfg = SystemConfig {
            n_nodes: n,
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            q: self.q,
            l: self.l,
            clusters: self.clusters,
            n_rf_node: self.n_rf_node,
            n_rf_fc: if noiseless { self.n_rf_node } else { self.n_rf_fc },
            rho,
            sigma2_obs: vec![db_to_noise_variance(self.snr_ob_db); n],
            sigma2_fc: if noiseless { 0.0 } else { db_to_noise_variance(self.snr_fc_db) },
            sigma2_csi: self.sigma2_csi,
            seed: self.seed,
            trials: self.trials,
            bcd: BcdParams {
                max_iter: self.bcd_max_iter,
                epsilon: self.bcd_epsilon,
            },
            spacing_rx: self.spacing_rx,
            spacing_tx: self.spacing_tx,
        };
        cfg.validate()?;
        if !(self.bcd_epsilon >= 0.0) || self.bcd_max_iter == 0 {
            return Err(Error::Config("bcd_max_iter must be >= 1 and bcd_epsilon >= 0".into()));
        }
        Ok(cfg)
    }

    pub fn config(&self, seed: u64) -> Result<SystemConfig> {
        let mut cfg = self.base_config()?;
        if self.noise_profile == NoiseProfile::Heterogeneous {
            let mut rng = stream(seed, Purpose::NoiseProfile);
            for s in &mut cfg.sigma2_obs {
                let db: i32 = rng.random_range(-10..=9);
                *s = 10f64.powf(db as f64 / 10.0);
            }
        }
        Ok(cfg)
    }

    /// Grid points as (axis, value); a scenario without sweep has one point.
    pub fn points(&self) -> Vec<Option<(Axis, f64)>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some((s.axis, v))).collect(),
            None => vec![None],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mse_analytic: f64,
    pub mse_mc: f64,
    pub mc_stderr: f64,
    pub benchmark: f64,
}

/// Draws one realization under `seed` and runs the design pipeline on it;
/// `mc_seed` drives the Monte Carlo trials.
pub fn evaluate(scenario: &Scenario, seed: u64, mc_seed: u64) -> Result<Evaluation> {
    let cfg = scenario.config(seed)?;
    let clusters = draw_clusters(&cfg, &mut stream(seed, Purpose::Channel));
    let channel = assemble_channel(&clusters, &cfg)?;
    let model = ObservationModel::random(&cfg, &mut stream(seed, Purpose::Observation))?;
    let benchmark = lmmse_floor(&model);
    let mut init = stream(seed, Purpose::Init);
    let mut mc = stream(mc_seed, Purpose::MonteCarlo);
    let perfect = Problem::perfect(&channel.h, &model);

    let design = scenario.design;
    let (analytic, (mse_mc, mc_stderr)) = if design.uses_csi() {
        let csi = perturb_csi(&channel, cfg.sigma2_csi, &mut stream(seed, Purpose::Csi));
        let averaged = Problem {
            h: &csi.h_hat,
            model: &model,
            sigma2_csi: cfg.sigma2_csi,
        };
        let robust = matches!(design, Design::Robust | Design::RobustHybrid);
        let designer = if robust { averaged } else { Problem::perfect(&csi.h_hat, &model) };
        let (digital, _) = designer.bcd(&cfg.rho, &cfg.bcd, &mut init)?;
        let t: Box<dyn Transceiver> = if design.uses_rf() {
            Box::new(hybridize(&digital, &channel, &designer, cfg.n_rf_node, cfg.n_rf_fc)?)
        } else {
            Box::new(digital)
        };
        let a = averaged.mse(&t.combiner(), &t.precoders())?;
        (a, monte_carlo_mse_csi(t.as_ref(), &csi.h_hat, cfg.sigma2_csi, &model, cfg.trials, &mut mc)?)
    } else {
        let t: Box<dyn Transceiver> = match design {
            Design::Noiseless => Box::new(noiseless_design(&clusters, &channel, &model, cfg.n_rf_node)?),
            Design::Digital => Box::new(perfect.bcd(&cfg.rho, &cfg.bcd, &mut init)?.0),
            Design::Hybrid => {
                let (digital, _) = perfect.bcd(&cfg.rho, &cfg.bcd, &mut init)?;
                Box::new(hybridize(&digital, &channel, &perfect, cfg.n_rf_node, cfg.n_rf_fc)?)
            }
            _ => unreachable!("CSI designs handled above"),
        };
        let a = perfect.mse(&t.combiner(), &t.precoders())?;
        (a, monte_carlo_mse(t.as_ref(), &channel.h, &model, cfg.trials, &mut mc)?)
    };
    Ok(Evaluation {
        mse_analytic: analytic,
        mse_mc,
        mc_stderr,
        benchmark,
    })
}

/// Seed of realization `r` under `seed`; realization 0 uses `seed` itself.
pub fn realization_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        splitmix64(seed ^ splitmix64(r as u64))
    }
}

/// Averages `realizations` independent evaluations of one grid point whose
/// Monte Carlo seed is `point_seed`.
pub fn evaluate_point(scenario: &Scenario, point_seed: u64) -> Result<Evaluation> {
    let evals = (0..scenario.realizations)
        .map(|r| {
            evaluate(
                scenario,
                realization_seed(scenario.seed, r),
                realization_seed(point_seed, r),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let n = evals.len() as f64;
    let mean = |f: fn(&Evaluation) -> f64| evals.iter().map(f).sum::<f64>() / n;
    Ok(Evaluation {
        mse_analytic: mean(|e| e.mse_analytic),
        mse_mc: mean(|e| e.mse_mc),
        mc_stderr: evals.iter().map(|e| e.mc_stderr * e.mc_stderr).sum::<f64>().sqrt() / n,
        benchmark: mean(|e| e.benchmark),
    })
}

pub fn run_scenario(scenario: &Scenario, options: RunOptions) -> Result<Vec<ResultRow>> {
    scenario.validate()?;
    let points = scenario.points();
    let rows = points
        .par_iter()
        .enumerate()
        .map(|(index, point)| {
            let seed = point_seed(scenario.seed, index);
            let start = Instant::now();
            let result = match point {
                Some((axis, v)) => scenario.with_axis(*axis, *v).and_then(|s| evaluate_point(&s, seed)),
                None => evaluate_point(scenario, seed),
            };
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            let mut row = ResultRow {
                scenario_id: scenario.id.clone(),
                design: scenario.design.name().into(),
                sweep_axis: point.map(|(a, _)| a.name().to_string()).unwrap_or_default(),
                sweep_value: point.map(|(_, v)| v),
                trials: scenario.trials * scenario.realizations,
                mse_analytic: None,
                mse_mc: None,
                mc_stderr: None,
                benchmark: None,
                wall_time_ms: options.timing.then_some(elapsed),
                seed,
                error: None,
            };
            match result {
                Ok(e) => {
                    row.mse_analytic = Some(e.mse_analytic);
                    row.mse_mc = Some(e.mse_mc);
                    row.mc_stderr = Some(e.mc_stderr);
                    row.benchmark = Some(e.benchmark);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    Ok(rows)
}

/// Outer overrides for `sweep`: every combination of the given axis values
/// becomes its own scenario, with the overrides appended to the id.
pub fn expand_overrides(scenario: &Scenario, overrides: &[(Axis, Vec<f64>)]) -> Result<Vec<Scenario>> {
    let inner = scenario.sweep.as_ref().map(|s| s.axis);
    let mut out = vec![(scenario.clone(), Vec::<String>::new())];
    for (axis, values) in overrides {
        if Some(*axis) == inner {
            return Err(Error::Config(format!("axis `{axis}` is already swept by the scenario")));
        }
        if values.is_empty() {
            return Err(Error::Config(format!("no values given for `{axis}`")));
        }
        scenario.check_axis(*axis)?;
        let mut next = Vec::with_capacity(out.len() * values.len());
        for (s, tags) in &out {
            for &v in values {
                let mut tags = tags.clone();
                tags.push(format!("{axis}={v}"));
                next.push((s.with_axis(*axis, v)?, tags));
            }
        }
        out = next;
    }
    Ok(out
        .into_iter()
        .map(|(mut s, tags)| {
            if !tags.is_empty() {
                s.id = format!("{}[{}]", s.id, tags.join(";"));
            }
            s
        })
        .collect())
}

pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonReport<'a> {
    scenario: &'a [Scenario],
    rows: &'a [ResultRow],
}

pub fn to_json(scenarios: &[Scenario], rows: &[ResultRow]) -> Result<String> {
    serde_json::to_string_pretty(&JsonReport {
        scenario: scenarios,
        rows,
    })
    .map_err(|e| Error::Config(e.to_string()))
}

/// Centralized floor of each grid point, averaged over realizations.
pub fn benchmark_points(scenario: &Scenario) -> Result<Vec<(Option<(Axis, f64)>, f64)>> {
    scenario.validate()?;
    scenario
        .points()
        .into_iter()
        .map(|point| {
            let s = match point {
                Some((axis, v)) => scenario.with_axis(axis, v)?,
                None => scenario.clone(),
            };
            let mut total = 0.0;
            for r in 0..s.realizations {
                let rs = realization_seed(s.seed, r);
                let cfg = s.config(rs)?;
                let model = ObservationModel::random(&cfg, &mut stream(rs, Purpose::Observation))?;
                total += lmmse_floor(&model);
            }
            Ok((point, total / s.realizations as f64))
        })
        .collect()
}
