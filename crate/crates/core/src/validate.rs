//! Self-check suite run by `lde validate`: every module invariant evaluated on
//! seeded random instances, plus a tracker asserting that no design evaluated
//! along the way beats the centralized floor.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::{centralized_benchmark, monte_carlo_mse};
use crate::channel::{
    array_response, assemble_channel, channel_from_text, channel_to_text, draw_clusters, perturb_csi, ChannelRealization,
    ClusterSet,
};
use crate::digital::Problem;
use crate::error::Result;
use crate::hybrid::{hybrid_precoder, hybridize};
use crate::linalg::{self, fro_norm, CMat};
use crate::model::{stack_model, transmit_power, ObservationModel, SystemConfig};
use crate::noiseless::{design_bb_precoders, error_covariance, noiseless_design, noiseless_mse, select_rf};
use crate::robust::{lemma1_cross_mc, lemma1_cross_rhs, lemma1_lhs_mc, lemma1_rhs};
use crate::scenario::{point_seed, stream, Purpose};

/// Slack allowed below the centralized floor.
pub const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloorRecord {
    pub label: String,
    pub mse: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub floor: Vec<FloorRecord>,
    /// Observations that are reported but not asserted.
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Smallest `mse − floor` seen; negative means a design beat the floor.
    pub fn worst_floor_margin(&self) -> f64 {
        self.floor
            .iter()
            .map(|r| r.mse - r.floor)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{tag}  {:<34} {}", c.name, c.detail);
        }
        for n in &self.notes {
            let _ = writeln!(out, "NOTE  {n}");
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(out, "{} checks, {failed} failed", self.checks.len());
        out
    }

    fn check(&mut self, name: &'static str, outcome: Result<std::result::Result<String, String>>) {
        let (passed, detail) = match outcome {
            Ok(Ok(d)) => (true, d),
            Ok(Err(d)) => (false, d),
            Err(e) => (false, format!("error: {e}")),
        };
        self.checks.push(CheckResult { name, passed, detail });
    }
}

fn record(records: &mut Vec<FloorRecord>, label: String, mse: f64, floor: f64) {
    records.push(FloorRecord { label, mse, floor });
}

fn verdict(ok: bool, detail: String) -> std::result::Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Instance {
    cfg: SystemConfig,
    clusters: ClusterSet,
    channel: ChannelRealization,
    model: ObservationModel,
}

fn instance(cfg: SystemConfig, seed: u64) -> Result<Instance> {
    let clusters = draw_clusters(&cfg, &mut stream(seed, Purpose::Channel));
    let channel = assemble_channel(&clusters, &cfg)?;
    let model = ObservationModel::random(&cfg, &mut stream(seed, Purpose::Observation))?;
    Ok(Instance {
        cfg,
        clusters,
        channel,
        model,
    })
}

/// Desk-scale configuration with unit prior and unit observation noise, the
/// setting in which the centralized floor applies verbatim.
fn matched(n: usize) -> SystemConfig {
    let mut cfg = SystemConfig::desk(n);
    cfg.sigma2_obs = vec![1.0; n];
    cfg
}

pub fn validate(seed: u64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut floor = Vec::new();
    let s = |i: usize| point_seed(seed, i);

    report.check("channel.array_response_unit_norm", {
        let mut rng = ChaCha8Rng::seed_from_u64(s(0));
        let worst = (0..50)
            .map(|_| {
                let phi = rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::PI);
                (array_response(phi, 16, 0.5).norm() - 1.0).abs()
            })
            .fold(0.0, f64::max);
        Ok(verdict(worst < 1e-12, format!("max |‖a‖ − 1| = {worst:.1e}")))
    });

    report.check("channel.text_round_trip", (|| {
        let inst = instance(SystemConfig::desk(3), s(1))?;
        let back = channel_from_text(&channel_to_text(&inst.channel))?;
        Ok(verdict(back == inst.channel, "exact".into()))
    })());

    report.check("channel.zero_csi_error_is_exact", (|| {
        let inst = instance(SystemConfig::desk(3), s(2))?;
        let csi = perturb_csi(&inst.channel, 0.0, &mut stream(s(2), Purpose::Csi));
        Ok(verdict(csi.h_hat == inst.channel.h, "Ĥ = H bit for bit".into()))
    })());

    report.check("model.transmit_power_unitary_invariance", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(s(3));
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let p = linalg::cn_matrix(5, 2, 1.0, &mut rng);
            let c = linalg::cn_matrix(2, 3, 1.0, &mut rng);
            let u = linalg::cn_matrix(5, 5, 1.0, &mut rng).qr().q();
            let base = transmit_power(&p, &c, &linalg::identity(3), &linalg::scaled_identity(2, 0.1));
            let rot = transmit_power(&(u * &p), &c, &linalg::identity(3), &linalg::scaled_identity(2, 0.1));
            worst = worst.max((base - rot).abs() / base.max(1.0));
        }
        Ok(verdict(worst < 1e-10, format!("max relative change {worst:.1e}")))
    })());

    report.check("model.stacking_round_trip", (|| {
        let inst = instance(SystemConfig::desk(4), s(4))?;
        let p = Problem::perfect(&inst.channel.h, &inst.model).initial_precoders(&inst.cfg.rho, &mut ChaCha8Rng::seed_from_u64(s(4)));
        let st = stack_model(&inst.model.c, &inst.channel.h, &p)?;
        let ok = (0..4).all(|n| {
            st.observation_block(n) == inst.model.c[n]
                && st.channel_block(n) == inst.channel.h[n]
                && st.precoder_block(n) == p[n]
        });
        let product = fro_norm(&(&st.h * &st.p * &st.c - Problem::perfect(&inst.channel.h, &inst.model).signal(&p)));
        Ok(verdict(ok && product < 1e-10, format!("blocks exact, product residual {product:.1e}")))
    })());

    report.check("digital.bcd_descent_and_kkt", (|| {
        let mut worst_rise: f64 = 0.0;
        let mut worst_kkt: f64 = 0.0;
        let mut unconverged = 0;
        for i in 0..5 {
            let inst = instance(matched(10), s(10 + i))?;
            let problem = Problem::perfect(&inst.channel.h, &inst.model);
            let (t, trace) = problem.bcd(&inst.cfg.rho, &inst.cfg.bcd, &mut stream(s(10 + i), Purpose::Init))?;
            for w in trace.mse_per_iter.windows(2) {
                worst_rise = worst_rise.max(w[1] - w[0]);
            }
            unconverged += usize::from(!trace.converged);
            for (n, pw) in problem.powers(&t.precoders).into_iter().enumerate() {
                let rho = inst.cfg.rho[n];
                let over = (pw - rho).max(0.0) / rho;
                let slack = (t.lambdas[n] * (pw - rho)).abs();
                worst_kkt = worst_kkt.max(over).max(slack).max(-t.lambdas[n]);
            }
            record(&mut floor, format!("digital seed#{i}"), trace.final_mse(), centralized_benchmark(&inst.model.stacked_c()));
        }
        Ok(verdict(
            worst_rise <= 1e-9 && worst_kkt < 1e-6,
            format!("max rise {worst_rise:.1e}, max KKT violation {worst_kkt:.1e}, {unconverged}/5 hit the iteration cap"),
        ))
    })());

    report.check("digital.monte_carlo_agreement", (|| {
        let inst = instance(SystemConfig::desk(6), s(20))?;
        let problem = Problem::perfect(&inst.channel.h, &inst.model);
        let (t, trace) = problem.bcd(&inst.cfg.rho, &inst.cfg.bcd, &mut stream(s(20), Purpose::Init))?;
        let analytic = problem.mse(&t.combiner, &t.precoders)?;
        let (mean, se) = monte_carlo_mse(&t, &inst.channel.h, &inst.model, 4000, &mut stream(s(20), Purpose::MonteCarlo))?;
        let z = (mean - analytic).abs() / se;
        let consistent = (analytic - trace.final_mse()).abs() <= 1e-9 * analytic;
        Ok(verdict(z < 5.0 && consistent, format!("analytic {analytic:.5}, MC {mean:.5} ± {se:.5} ({z:.2}σ)")))
    })());

    report.check("robust.zero_variance_degeneracy", (|| {
        let inst = instance(SystemConfig::desk(5), s(30))?;
        let perfect = Problem::perfect(&inst.channel.h, &inst.model);
        let robust = Problem {
            sigma2_csi: 0.0,
            ..perfect
        };
        let a = perfect.bcd(&inst.cfg.rho, &inst.cfg.bcd, &mut stream(s(30), Purpose::Init))?;
        let b = robust.bcd(&inst.cfg.rho, &inst.cfg.bcd, &mut stream(s(30), Purpose::Init))?;
        Ok(verdict(a == b, "bit-identical".into()))
    })());

    report.check("robust.expectation_identity", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(s(31));
        let mut worst: f64 = 0.0;
        for _ in 0..3 {
            let h = linalg::cn_matrix(6, 4, 1.0, &mut rng);
            let hj = linalg::cn_matrix(6, 4, 1.0, &mut rng);
            let k = linalg::cn_matrix(4, 2, 1.0, &mut rng);
            let sigma2 = 0.1;
            let (mean, se) = lemma1_lhs_mc(&h, sigma2, &k, 20_000, &mut rng);
            worst = worst.max(fro_norm(&(mean - lemma1_rhs(&h, sigma2, &k))) / se);
            let (mean, se) = lemma1_cross_mc(&h, &hj, sigma2, &k, 20_000, &mut rng);
            worst = worst.max(fro_norm(&(mean - lemma1_cross_rhs(&h, &hj, &k))) / se);
        }
        Ok(verdict(worst < 3.0, format!("worst deviation {worst:.2} standard errors")))
    })());

    report.check("robust.dominates_agnostic", (|| {
        let sigma2 = 0.05;
        let seeds = 10;
        let mut wins = 0;
        for i in 0..seeds {
            let seed = s(40 + i);
            let inst = instance(SystemConfig::desk(10), seed)?;
            let csi = perturb_csi(&inst.channel, sigma2, &mut stream(seed, Purpose::Csi));
            let averaged = Problem {
                h: &csi.h_hat,
                model: &inst.model,
                sigma2_csi: sigma2,
            };
            let agnostic = Problem::perfect(&csi.h_hat, &inst.model);
            let (r, _) = averaged.bcd(&inst.cfg.rho, &inst.cfg.bcd, &mut stream(seed, Purpose::Init))?;
            let (g, _) = agnostic.bcd(&inst.cfg.rho, &inst.cfg.bcd, &mut stream(seed, Purpose::Init))?;
            if averaged.mse(&r.combiner, &r.precoders)? <= averaged.mse(&g.combiner, &g.precoders)? {
                wins += 1;
            }
        }
        Ok(verdict(wins * 10 >= seeds * 9, format!("{wins}/{seeds} seeds at σ_H² = {sigma2}")))
    })());

    report.check("hybrid.somp_exact_at_full_dictionary", (|| {
        let inst = instance(SystemConfig::desk(4), s(50))?;
        let problem = Problem::perfect(&inst.channel.h, &inst.model);
        let (t, _) = problem.bcd(&inst.cfg.rho, &inst.cfg.bcd, &mut stream(s(50), Purpose::Init))?;
        let mut worst: f64 = 0.0;
        let mut modulus: f64 = 0.0;
        let m = 1.0 / (inst.cfg.n_tx as f64).sqrt();
        for (n, p) in t.precoders.iter().enumerate() {
            let f = hybrid_precoder(p, &inst.channel.a_s[n], inst.cfg.clusters)?;
            worst = worst.max(fro_norm(&(p - &f.p_rf * &f.p_bb)) / fro_norm(p));
            modulus = modulus.max(f.p_rf.iter().map(|z| (z.norm() - m).abs()).fold(0.0, f64::max));
        }
        Ok(verdict(
            worst < 1e-8 && modulus < 1e-12,
            format!("max relative residual {worst:.1e}, unit-modulus error {modulus:.1e}"),
        ))
    })());

    report.check("noiseless.saturation", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(s(60));
        let mut ok = true;
        for _ in 0..10 {
            let c = linalg::cn_matrix(12, 4, 1.0, &mut rng);
            let bench = centralized_benchmark(&c);
            let mut prev = f64::INFINITY;
            for r in 1..=8 {
                let m = noiseless_mse(&c, r, 4);
                ok &= m <= prev + 1e-12 && m >= bench - FLOOR_SLACK;
                ok &= r < 4 || (m - bench).abs() < 1e-8;
                prev = m;
            }
        }
        Ok(verdict(ok, "non-increasing, flat at the benchmark from r = q".into()))
    })());

    report.check("noiseless.pipeline_matches_law", (|| {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            let mut cfg = matched(5);
            cfg.n_rx = 5;
            cfg.sigma2_fc = 0.0;
            let inst = instance(cfg, s(70 + i))?;
            for r in 1..=3 {
                let sel = select_rf(&inst.clusters, &inst.channel, r, r)?;
                let p_bb = design_bb_precoders(&inst.channel, &sel, &inst.model)?;
                let e = error_covariance(&inst.channel, &sel, &p_bb, &inst.model).trace().re;
                let law = noiseless_mse(&inst.model.stacked_c(), r, inst.cfg.q);
                worst = worst.max((e - law).abs());
                record(&mut floor, format!("noiseless seed#{i} r={r}"), e, centralized_benchmark(&inst.model.stacked_c()));
            }
        }
        Ok(verdict(worst < 1e-6, format!("max |error − law| = {worst:.1e}")))
    })());

    report.check("bench.benchmark_eigen_oracle", {
        let mut rng = ChaCha8Rng::seed_from_u64(s(80));
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let c = linalg::cn_matrix(10, 3, 1.0, &mut rng);
            let eig = linalg::hermitian_eigen(&(c.adjoint() * &c)).values;
            let oracle: f64 = eig.iter().map(|l| 1.0 / (1.0 + l)).sum();
            worst = worst.max((centralized_benchmark(&c) - oracle).abs());
        }
        Ok(verdict(worst < 1e-10, format!("max deviation {worst:.1e}")))
    });

    report.check("bench.designs_respect_floor", (|| {
        for i in 0..3 {
            let seed = s(90 + i);
            let inst = instance(matched(10), seed)?;
            let bound = centralized_benchmark(&inst.model.stacked_c());
            let problem = Problem::perfect(&inst.channel.h, &inst.model);
            let (digital, _) = problem.bcd(&inst.cfg.rho, &inst.cfg.bcd, &mut stream(seed, Purpose::Init))?;
            let hybrid = hybridize(&digital, &inst.channel, &problem, inst.cfg.n_rf_node, inst.cfg.n_rf_fc)?;
            record(&mut floor, format!("hybrid seed#{i}"), problem.mse(&hybrid.combiner(), &hybrid.precoders())?, bound);

            let csi = perturb_csi(&inst.channel, 0.05, &mut stream(seed, Purpose::Csi));
            let averaged = Problem {
                h: &csi.h_hat,
                model: &inst.model,
                sigma2_csi: 0.05,
            };
            let (robust, _) = averaged.bcd(&inst.cfg.rho, &inst.cfg.bcd, &mut stream(seed, Purpose::Init))?;
            record(&mut floor, format!("robust seed#{i}"), averaged.mse(&robust.combiner, &robust.precoders)?, bound);
            record(&mut floor, format!("robust on true H seed#{i}"), problem.mse(&robust.combiner, &robust.precoders)?, bound);

            let mut quiet = inst.cfg.clone();
            quiet.sigma2_fc = 0.0;
            let model = ObservationModel::new(inst.model.c.clone(), inst.model.r_noise.clone(), inst.model.r_theta.clone(), linalg::zeros(quiet.n_rx, quiet.n_rx))?;
            let t = noiseless_design(&inst.clusters, &inst.channel, &model, inst.cfg.n_rf_node)?;
            let quiet_problem = Problem::perfect(&inst.channel.h, &model);
            record(&mut floor, format!("noiseless design seed#{i}"), quiet_problem.mse(&t.combiner(), &t.precoders())?, bound);
        }
        let margin = floor.iter().map(|r| r.mse - r.floor).fold(f64::INFINITY, f64::min);
        Ok(verdict(
            margin >= -FLOOR_SLACK,
            format!("{} evaluations, smallest margin above the floor {margin:.3e}", floor.len()),
        ))
    })());

    report.floor = floor;
    if let Ok(note) = heterogeneity_note(s(100)) {
        report.notes.push(note);
    }
    report
}

/// Digital MSE with homogeneous versus heterogeneous observation noise on
/// the same channel; the ordering depends on the draw and is only reported.
fn heterogeneity_note(seed: u64) -> Result<String> {
    let homo = instance(SystemConfig::desk(10), seed)?;
    let mut rng = stream(seed, Purpose::NoiseProfile);
    let r_noise: Vec<CMat> = (0..10)
        .map(|_| {
            let db: i32 = rand::Rng::random_range(&mut rng, -10..=9);
            linalg::scaled_identity(homo.cfg.l, 10f64.powf(db as f64 / 10.0))
        })
        .collect();
    let hetero = ObservationModel::new(homo.model.c.clone(), r_noise, homo.model.r_theta.clone(), homo.model.r_w.clone())?;
    let mse = |model: &ObservationModel| -> Result<f64> {
        let problem = Problem::perfect(&homo.channel.h, model);
        let (_, trace) = problem.bcd(&homo.cfg.rho, &homo.cfg.bcd, &mut stream(seed, Purpose::Init))?;
        Ok(trace.final_mse())
    };
    Ok(format!(
        "digital MSE homogeneous {:.5}, heterogeneous {:.5}",
        mse(&homo.model)?,
        mse(&hetero)?
    ))
}
