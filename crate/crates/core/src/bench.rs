//! Performance floors and Monte Carlo evaluation of designed transceivers.

use rand::Rng;

use crate::digital::DigitalTransceiver;
use crate::error::{Error, Result};
use crate::hybrid::HybridTransceiver;
use crate::linalg::{self, CMat, CVec};
use crate::model::ObservationModel;

/// Anything that yields a combiner `A` (θ̂ = A y) and per-node precoders.
pub trait Transceiver {
    fn combiner(&self) -> CMat;
    fn precoders(&self) -> Vec<CMat>;
}

impl Transceiver for DigitalTransceiver {
    fn combiner(&self) -> CMat {
        self.combiner.clone()
    }

    fn precoders(&self) -> Vec<CMat> {
        self.precoders.clone()
    }
}

impl Transceiver for HybridTransceiver {
    fn combiner(&self) -> CMat {
        HybridTransceiver::combiner(self)
    }

    fn precoders(&self) -> Vec<CMat> {
        HybridTransceiver::precoders(self)
    }
}

/// `Tr[(I + C^H C)^{-1}]`: the MSE with every observation available at the
/// FC, for unit prior and unit observation noise.
pub fn centralized_benchmark(c: &CMat) -> f64 {
    let mut m = c.adjoint() * c;
    linalg::add_diagonal(&mut m, 1.0);
    linalg::hpd_inverse(&m)
        .expect("I + C^H C is positive definite")
        .trace()
        .re
}

/// Centralized LMMSE error `Tr[R_θ − R_θ C^H (C R_θ C^H + R_v)⁺ C R_θ]` for
/// general prior and block-diagonal observation noise.
pub fn lmmse_floor(model: &ObservationModel) -> f64 {
    let c = model.stacked_c();
    let rt = &model.r_theta;
    let cov = &c * rt * c.adjoint() + linalg::block_diagonal(&model.r_noise);
    let e = rt - rt * c.adjoint() * linalg::pseudo_inverse(&cov, 1e-12) * &c * rt;
    e.trace().re
}

/// Sampler for `θ`, the node observations and the FC noise.
struct Sampler<'a> {
    model: &'a ObservationModel,
    theta_root: CMat,
    noise_roots: Vec<CMat>,
    fc_root: CMat,
}

impl<'a> Sampler<'a> {
    fn new(model: &'a ObservationModel) -> Self {
        Self {
            model,
            theta_root: linalg::hermitian_sqrt(&model.r_theta),
            noise_roots: model.r_noise.iter().map(linalg::hermitian_sqrt).collect(),
            fc_root: linalg::hermitian_sqrt(&model.r_w),
        }
    }

    /// One trial: returns `‖A y − θ‖²` for the given channels.
    fn squared_error<R: Rng + ?Sized>(&self, a: &CMat, precoders: &[CMat], h: &[CMat], rng: &mut R) -> f64 {
        let theta = linalg::cn_vector_with_sqrt(&self.theta_root, rng);
        let mut y: CVec = linalg::cn_vector_with_sqrt(&self.fc_root, rng);
        for n in 0..self.model.n_nodes() {
            let x = &self.model.c[n] * &theta + linalg::cn_vector_with_sqrt(&self.noise_roots[n], rng);
            y += &h[n] * (&precoders[n] * x);
        }
        (a * y - theta).norm_squared()
    }
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let t = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / t;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < 2 {
        return Err(Error::Config(format!("Monte Carlo needs at least 2 trials, got {trials}")));
    }
    Ok(())
}

/// Sample mean and standard error of `‖θ̂ − θ‖²` over `trials` draws of the
/// parameter, the observation noise and the FC noise.
pub fn monte_carlo_mse<T: Transceiver + ?Sized, R: Rng + ?Sized>(
    transceiver: &T,
    h: &[CMat],
    model: &ObservationModel,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_trials(trials)?;
    let (a, p) = (transceiver.combiner(), transceiver.precoders());
    let sampler = Sampler::new(model);
    let samples: Vec<f64> = (0..trials).map(|_| sampler.squared_error(&a, &p, h, rng)).collect();
    Ok(mean_and_stderr(&samples))
}

/// As [`monte_carlo_mse`] but every trial also draws a fresh channel error,
/// transmitting over `H_n = Ĥ_n + ΔH_n`; its expectation is the averaged
/// objective the CSI-error-aware design minimizes.
pub fn monte_carlo_mse_csi<T: Transceiver + ?Sized, R: Rng + ?Sized>(
    transceiver: &T,
    h_hat: &[CMat],
    sigma2_csi: f64,
    model: &ObservationModel,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_trials(trials)?;
    let (a, p) = (transceiver.combiner(), transceiver.precoders());
    let sampler = Sampler::new(model);
    let samples: Vec<f64> = (0..trials)
        .map(|_| {
            let h: Vec<CMat> = h_hat
                .iter()
                .map(|x| x + linalg::cn_matrix(x.nrows(), x.ncols(), sigma2_csi, rng))
                .collect();
            sampler.squared_error(&a, &p, &h, rng)
        })
        .collect();
    Ok(mean_and_stderr(&samples))
}
