//! Fully-digital MMSE transceiver design by block coordinate descent.
//!
//! The objective is `E‖A y − θ‖²` for `y = Σ_n H_n P_n x_n + w`. The combiner
//! block is the LMMSE filter; each precoder block is a convex quadratic
//! program under a transmit-power budget, solved through its KKT conditions
//! with a scalar bisection on the dual variable.
//!
//! The same engine serves the CSI-error-aware design: with per-entry channel
//! error variance `σ_H² > 0` every quadratic term `A H_n M H_n^H A^H` picks up
//! `σ_H² Tr(M) A A^H`. At `σ_H² = 0` the inflation code paths are skipped, so
//! both designs produce bit-identical results.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::model::{transmit_power, BcdParams, ObservationModel};

/// Imaginary part of a trace tolerated (relative) before it is reported as a
/// numerical inconsistency.
pub const IMAG_TOL: f64 = 1e-6;
/// Eigenvalues of the precoder quadratic form below this fraction of the
/// largest are treated as its null space.
pub const NULL_EIG_REL: f64 = 1e-10;
const BISECTION_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DigitalTransceiver {
    /// Per node, N_t × l.
    pub precoders: Vec<CMat>,
    /// q × N_r, applied as `θ̂ = A y`.
    pub combiner: CMat,
    /// Dual variables of the per-node power constraints.
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdTrace {
    /// Objective before the first precoder sweep, then after every sweep.
    pub mse_per_iter: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl BcdTrace {
    pub fn final_mse(&self) -> f64 {
        *self.mse_per_iter.last().expect("trace is never empty")
    }
}

/// Design problem over a fixed set of (possibly estimated) channels.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub h: &'a [CMat],
    pub model: &'a ObservationModel,
    /// Per-entry variance of the channel error; 0 for perfect CSI.
    pub sigma2_csi: f64,
}

/// Precoder sub-problem for one node with the combiner and the other
/// precoders held fixed: minimize `Tr(P^H X P Q) − 2 Re Tr(P^H B)` subject to
/// `Tr(P Q P^H) ≤ ρ`, whose stationary point is `P(λ) = (X + λI)^{-1} B Q^{-1}`.
#[derive(Debug, Clone)]
pub struct PrecoderSubproblem {
    /// Eigenvalues of `X`, descending.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
    /// `B Q^{-1}`.
    pub y: CMat,
    /// Diagonal of `U^H Y Q Y^H U`.
    pub z: Vec<f64>,
    active: Vec<bool>,
}

impl PrecoderSubproblem {
    pub fn new(x: &CMat, b: &CMat, q: &CMat, node: usize) -> Result<Self> {
        let y = linalg::hpd_solve(q, &b.adjoint())
            .ok_or_else(|| Error::Singular(format!("node {node}: observation covariance is singular")))?
            .adjoint();
        let eig = linalg::hermitian_eigen(x);
        let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
        let active: Vec<bool> = eig
            .values
            .iter()
            .map(|&v| v > NULL_EIG_REL * top && v > 0.0)
            .collect();
        let w = eig.vectors.adjoint() * &y;
        let wq = &w * q;
        let z = (0..w.nrows())
            .map(|k| (wq.row(k) * w.row(k).adjoint())[(0, 0)].re.max(0.0))
            .collect();
        Ok(Self {
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
            y,
            z,
            active,
        })
    }

    /// `P(λ)`; directions in the null space of `X` are dropped, which gives
    /// the minimum-norm minimizer at `λ = 0`.
    pub fn precoder(&self, lambda: f64) -> CMat {
        let mut scaled = self.eigenvectors.adjoint() * &self.y;
        for (k, (&v, &on)) in self.eigenvalues.iter().zip(&self.active).enumerate() {
            let f = if on { 1.0 / (v + lambda) } else { 0.0 };
            scaled.row_mut(k).scale_mut(f);
        }
        &self.eigenvectors * scaled
    }

    /// Transmit power of `P(λ)`: `Σ_k z_kk / (λ_k + λ)²`.
    pub fn power(&self, lambda: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.z)
            .zip(&self.active)
            .filter(|(_, &on)| on)
            .map(|((&v, &z), _)| z / ((v + lambda) * (v + lambda)))
            .sum()
    }

    /// Smallest `λ ≥ 0` whose precoder meets the budget; 0 when the
    /// unconstrained minimizer is already feasible. The returned value always
    /// satisfies `power(λ) ≤ ρ`.
    pub fn solve_dual(&self, rho: f64) -> f64 {
        if self.power(0.0) <= rho {
            return 0.0;
        }
        let total: f64 = self.z.iter().sum();
        let mut hi = (total / rho).sqrt();
        if !(hi > 0.0) {
            hi = 1.0;
        }
        while self.power(hi) > rho {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..BISECTION_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.power(mid) > rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

impl<'a> Problem<'a> {
    pub fn perfect(h: &'a [CMat], model: &'a ObservationModel) -> Self {
        Self {
            h,
            model,
            sigma2_csi: 0.0,
        }
    }

    pub fn check(&self, precoders: &[CMat]) -> Result<()> {
        let n = self.model.n_nodes();
        if self.h.len() != n || precoders.len() != n {
            return Err(Error::Dimension(format!(
                "{} channels and {} precoders for {n} nodes",
                self.h.len(),
                precoders.len()
            )));
        }
        for (i, (h, p)) in self.h.iter().zip(precoders).enumerate() {
            if h.nrows() != self.model.n_rx() {
                return Err(Error::NodeDimension {
                    node: i,
                    detail: format!("H_n has {} rows, FC has {} antennas", h.nrows(), self.model.n_rx()),
                });
            }
            if p.shape() != (h.ncols(), self.model.c[i].nrows()) {
                return Err(Error::NodeDimension {
                    node: i,
                    detail: format!(
                        "P_n is {:?}, expected {}x{}",
                        p.shape(),
                        h.ncols(),
                        self.model.c[i].nrows()
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn powers(&self, precoders: &[CMat]) -> Vec<f64> {
        precoders
            .iter()
            .enumerate()
            .map(|(n, p)| transmit_power(p, &self.model.c[n], &self.model.r_theta, &self.model.r_noise[n]))
            .collect()
    }

    /// `Σ_n H_n P_n C_n`, the effective observation matrix at the FC.
    pub fn signal(&self, precoders: &[CMat]) -> CMat {
        let mut s = linalg::zeros(self.model.n_rx(), self.model.q());
        for (n, p) in precoders.iter().enumerate() {
            s += &self.h[n] * p * &self.model.c[n];
        }
        s
    }

    /// Covariance of the received vector, including the CSI-error inflation
    /// `σ_H² Σ_n Tr(P_n Q_n P_n^H) I`.
    pub fn received_covariance(&self, precoders: &[CMat]) -> Result<CMat> {
        self.check(precoders)?;
        let s = self.signal(precoders);
        let mut r = &s * &self.model.r_theta * s.adjoint() + &self.model.r_w;
        for (n, p) in precoders.iter().enumerate() {
            let hp = &self.h[n] * p;
            r += &hp * &self.model.r_noise[n] * hp.adjoint();
        }
        if self.sigma2_csi != 0.0 {
            let infl = self.sigma2_csi * self.powers(precoders).iter().sum::<f64>();
            linalg::add_diagonal(&mut r, infl);
        }
        Ok(linalg::hermitian_part(&r))
    }

    /// Objective value, evaluated term by term: node quadratics, the
    /// cross-node terms, the two linear terms, FC noise and the prior.
    pub fn mse(&self, a: &CMat, precoders: &[CMat]) -> Result<f64> {
        self.check(precoders)?;
        if a.shape() != (self.model.q(), self.model.n_rx()) {
            return Err(Error::Dimension(format!(
                "combiner is {:?}, expected {}x{}",
                a.shape(),
                self.model.q(),
                self.model.n_rx()
            )));
        }
        let m = self.model;
        let n = m.n_nodes();
        let mut total = c(0.0, 0.0);
        let mut t = Vec::with_capacity(n);
        for i in 0..n {
            let ahp = a * &self.h[i] * &precoders[i];
            total += (&ahp * m.observation_covariance(i) * ahp.adjoint()).trace();
            t.push(&ahp * &m.c[i]);
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    total += (&t[i] * &m.r_theta * t[j].adjoint()).trace();
                }
            }
        }
        let linear: num_complex::Complex64 = t.iter().map(|ti| (ti * &m.r_theta).trace()).sum();
        total -= linear + linear.conj();
        total += (a * &m.r_w * a.adjoint()).trace();
        total += m.r_theta.trace();
        if self.sigma2_csi != 0.0 {
            let power: f64 = self.powers(precoders).iter().sum();
            total += self.sigma2_csi * power * linalg::fro_norm_sqr(a);
        }
        real_part(total)
    }

    /// LMMSE combiner `R_θ S^H R_yy^{-1}`.
    pub fn combiner(&self, precoders: &[CMat]) -> Result<CMat> {
        let r = self.received_covariance(precoders)?;
        let s = self.signal(precoders);
        let ah = linalg::hpd_solve(&r, &(&s * &self.model.r_theta))
            .ok_or_else(|| Error::Singular("received covariance is not positive definite".into()))?;
        Ok(ah.adjoint())
    }

    /// Sub-problem for node `n`; `others` is `Σ_{j≠n} H_j P_j C_j`.
    pub fn subproblem(&self, n: usize, a: &CMat, others: &CMat) -> Result<PrecoderSubproblem> {
        let m = self.model;
        let ah = a * &self.h[n];
        let mut x = ah.adjoint() * &ah;
        if self.sigma2_csi != 0.0 {
            linalg::add_diagonal(&mut x, self.sigma2_csi * linalg::fro_norm_sqr(a));
        }
        let residual_prior = &m.r_theta - a * others * &m.r_theta;
        let b = ah.adjoint() * residual_prior * m.c[n].adjoint();
        PrecoderSubproblem::new(&x, &b, &m.observation_covariance(n), n)
    }

    fn others(&self, n: usize, precoders: &[CMat]) -> CMat {
        let mut s = linalg::zeros(self.model.n_rx(), self.model.q());
        for (j, p) in precoders.iter().enumerate() {
            if j != n {
                s += &self.h[j] * p * &self.model.c[j];
            }
        }
        s
    }

    pub fn precoder(&self, n: usize, a: &CMat, precoders: &[CMat], lambda: f64) -> Result<CMat> {
        self.check(precoders)?;
        Ok(self.subproblem(n, a, &self.others(n, precoders))?.precoder(lambda))
    }

    pub fn dual(&self, n: usize, a: &CMat, precoders: &[CMat], rho: f64) -> Result<f64> {
        self.check(precoders)?;
        if !(rho > 0.0) {
            return Err(Error::Config(format!("node {n}: power budget must be positive")));
        }
        Ok(self.subproblem(n, a, &self.others(n, precoders))?.solve_dual(rho))
    }

    /// Random CN(0, 1) precoders scaled to meet every budget with equality.
    pub fn initial_precoders<R: Rng + ?Sized>(&self, rho: &[f64], rng: &mut R) -> Vec<CMat> {
        (0..self.model.n_nodes())
            .map(|n| {
                let p = linalg::cn_matrix(self.h[n].ncols(), self.model.c[n].nrows(), 1.0, rng);
                let pw = transmit_power(&p, &self.model.c[n], &self.model.r_theta, &self.model.r_noise[n]);
                if pw > 0.0 {
                    p.scale((rho[n] / pw).sqrt())
                } else {
                    p
                }
            })
            .collect()
    }

    /// Alternates the combiner update with an ascending sweep of precoder
    /// updates until the relative objective change drops below
    /// `params.epsilon` or `params.max_iter` sweeps have run.
    pub fn bcd<R: Rng + ?Sized>(
        &self,
        rho: &[f64],
        params: &BcdParams,
        rng: &mut R,
    ) -> Result<(DigitalTransceiver, BcdTrace)> {
        let n_nodes = self.model.n_nodes();
        if rho.len() != n_nodes || rho.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Config(format!("need {n_nodes} positive power budgets")));
        }
        if params.max_iter == 0 {
            return Err(Error::Config("BCD needs at least one iteration".into()));
        }
        let init = self.initial_precoders(rho, rng);
        self.bcd_from(init, rho, params)
    }

    pub fn bcd_from(
        &self,
        mut precoders: Vec<CMat>,
        rho: &[f64],
        params: &BcdParams,
    ) -> Result<(DigitalTransceiver, BcdTrace)> {
        self.check(&precoders)?;
        let mut lambdas = vec![0.0; precoders.len()];
        let mut trace = BcdTrace {
            mse_per_iter: Vec::new(),
            iterations: 0,
            converged: false,
        };
        let mut a = linalg::zeros(self.model.q(), self.model.n_rx());
        for it in 1..=params.max_iter {
            a = self.combiner(&precoders)?;
            if it == 1 {
                trace.mse_per_iter.push(self.mse(&a, &precoders)?);
            }
            let mut s = self.signal(&precoders);
            for n in 0..precoders.len() {
                let own = &self.h[n] * &precoders[n] * &self.model.c[n];
                let others = &s - own;
                let sub = self.subproblem(n, &a, &others)?;
                lambdas[n] = sub.solve_dual(rho[n]);
                precoders[n] = sub.precoder(lambdas[n]);
                s = others + &self.h[n] * &precoders[n] * &self.model.c[n];
            }
            let prev = *trace.mse_per_iter.last().unwrap();
            let now = self.mse(&a, &precoders)?;
            trace.mse_per_iter.push(now);
            trace.iterations = it;
            if (prev - now).abs() <= params.epsilon * prev.abs() {
                trace.converged = true;
                break;
            }
        }
        Ok((
            DigitalTransceiver {
                precoders,
                combiner: a,
                lambdas,
            },
            trace,
        ))
    }
}

pub(crate) fn real_part(z: num_complex::Complex64) -> Result<f64> {
    if z.im.abs() > IMAG_TOL * z.re.abs().max(1.0) {
        return Err(Error::Inconsistent { real: z.re, imag: z.im });
    }
    Ok(z.re.max(0.0))
}

pub fn mse_analytic(a: &CMat, precoders: &[CMat], h: &[CMat], model: &ObservationModel) -> Result<f64> {
    Problem::perfect(h, model).mse(a, precoders)
}

pub fn received_covariance(precoders: &[CMat], h: &[CMat], model: &ObservationModel) -> Result<CMat> {
    Problem::perfect(h, model).received_covariance(precoders)
}

pub fn update_combiner(precoders: &[CMat], h: &[CMat], model: &ObservationModel) -> Result<CMat> {
    Problem::perfect(h, model).combiner(precoders)
}

pub fn update_precoder(
    n: usize,
    a: &CMat,
    precoders: &[CMat],
    lambda: f64,
    h: &[CMat],
    model: &ObservationModel,
) -> Result<CMat> {
    Problem::perfect(h, model).precoder(n, a, precoders, lambda)
}

pub fn solve_dual(
    n: usize,
    a: &CMat,
    precoders: &[CMat],
    h: &[CMat],
    model: &ObservationModel,
    rho: f64,
) -> Result<f64> {
    Problem::perfect(h, model).dual(n, a, precoders, rho)
}

pub fn bcd_design<R: Rng + ?Sized>(
    h: &[CMat],
    model: &ObservationModel,
    rho: &[f64],
    params: &BcdParams,
    init_rng: &mut R,
) -> Result<(DigitalTransceiver, BcdTrace)> {
    Problem::perfect(h, model).bcd(rho, params, init_rng)
}
