//! Transceiver design that averages the MSE over Gaussian channel error
//! `H_n = Ĥ_n + ΔH_n`, `ΔH_n` with i.i.d. CN(0, σ_H²) entries.
//!
//! For any fixed `M`, `E[H M H^H] = Ĥ M Ĥ^H + σ_H² Tr(M) I` while cross-node
//! products keep their mean `Ĥ_n M Ĥ_j^H`; the averaged objective is therefore
//! the perfect-CSI one on `Ĥ` plus `σ_H² Σ_n Tr(P_n Q_n P_n^H) Tr(A A^H)`.

use rand::Rng;

use crate::digital::{BcdTrace, DigitalTransceiver, Problem};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{BcdParams, ObservationModel};

#[derive(Debug, Clone, Copy)]
pub struct RobustContext<'a> {
    pub h_hat: &'a [CMat],
    pub sigma2_csi: f64,
    pub model: &'a ObservationModel,
}

impl<'a> RobustContext<'a> {
    pub fn new(h_hat: &'a [CMat], sigma2_csi: f64, model: &'a ObservationModel) -> Result<Self> {
        if !(sigma2_csi >= 0.0) || !sigma2_csi.is_finite() {
            return Err(Error::Config(format!("CSI error variance must be >= 0, got {sigma2_csi}")));
        }
        Ok(Self {
            h_hat,
            sigma2_csi,
            model,
        })
    }

    pub fn problem(&self) -> Problem<'a> {
        Problem {
            h: self.h_hat,
            model: self.model,
            sigma2_csi: self.sigma2_csi,
        }
    }
}

pub fn robust_mse(a: &CMat, precoders: &[CMat], ctx: &RobustContext) -> Result<f64> {
    ctx.problem().mse(a, precoders)
}

pub fn robust_update_combiner(precoders: &[CMat], ctx: &RobustContext) -> Result<CMat> {
    ctx.problem().combiner(precoders)
}

pub fn robust_update_precoder(
    n: usize,
    a: &CMat,
    precoders: &[CMat],
    lambda: f64,
    ctx: &RobustContext,
) -> Result<CMat> {
    ctx.problem().precoder(n, a, precoders, lambda)
}

pub fn robust_solve_dual(n: usize, a: &CMat, precoders: &[CMat], ctx: &RobustContext, rho: f64) -> Result<f64> {
    ctx.problem().dual(n, a, precoders, rho)
}

pub fn robust_bcd_design<R: Rng + ?Sized>(
    ctx: &RobustContext,
    rho: &[f64],
    params: &BcdParams,
    init_rng: &mut R,
) -> Result<(DigitalTransceiver, BcdTrace)> {
    ctx.problem().bcd(rho, params, init_rng)
}

/// Monte Carlo mean of `H M H^H` with `M = K K^H`, `H = Ĥ + ΔH`, and the
/// Frobenius standard error of that mean.
pub fn lemma1_lhs_mc<R: Rng + ?Sized>(
    h_hat: &CMat,
    sigma2_csi: f64,
    k: &CMat,
    trials: usize,
    rng: &mut R,
) -> (CMat, f64) {
    let kk = k * k.adjoint();
    sample_mean(trials, || {
        let h = h_hat + linalg::cn_matrix(h_hat.nrows(), h_hat.ncols(), sigma2_csi, rng);
        &h * &kk * h.adjoint()
    })
}

/// `Ĥ K K^H Ĥ^H + σ_H² Tr(K K^H) I`.
pub fn lemma1_rhs(h_hat: &CMat, sigma2_csi: f64, k: &CMat) -> CMat {
    let kk = k * k.adjoint();
    let mut out = h_hat * &kk * h_hat.adjoint();
    if sigma2_csi != 0.0 {
        linalg::add_diagonal(&mut out, sigma2_csi * kk.trace().re);
    }
    out
}

/// Monte Carlo mean of `H_n K K^H H_j^H` for two nodes with independent
/// channel errors.
pub fn lemma1_cross_mc<R: Rng + ?Sized>(
    h_hat_n: &CMat,
    h_hat_j: &CMat,
    sigma2_csi: f64,
    k: &CMat,
    trials: usize,
    rng: &mut R,
) -> (CMat, f64) {
    let kk = k * k.adjoint();
    sample_mean(trials, || {
        let hn = h_hat_n + linalg::cn_matrix(h_hat_n.nrows(), h_hat_n.ncols(), sigma2_csi, rng);
        let hj = h_hat_j + linalg::cn_matrix(h_hat_j.nrows(), h_hat_j.ncols(), sigma2_csi, rng);
        &hn * &kk * hj.adjoint()
    })
}

pub fn lemma1_cross_rhs(h_hat_n: &CMat, h_hat_j: &CMat, k: &CMat) -> CMat {
    h_hat_n * (k * k.adjoint()) * h_hat_j.adjoint()
}

/// Entrywise sample mean and `sqrt(Σ_entries var / trials)`.
fn sample_mean(trials: usize, mut draw: impl FnMut() -> CMat) -> (CMat, f64) {
    let first = draw();
    let mut sum = first.clone();
    let mut sum_sq: Vec<f64> = first.iter().map(|z| z.norm_sqr()).collect();
    for _ in 1..trials {
        let x = draw();
        for (s, z) in sum_sq.iter_mut().zip(x.iter()) {
            *s += z.norm_sqr();
        }
        sum += x;
    }
    let t = trials as f64;
    let mean = sum.unscale(t);
    if trials < 2 {
        return (mean, f64::INFINITY);
    }
    let var: f64 = sum_sq
        .iter()
        .zip(mean.iter())
        .map(|(s, m)| ((s - t * m.norm_sqr()) / (t - 1.0)).max(0.0))
        .sum();
    (mean, (var / t).sqrt())
}
