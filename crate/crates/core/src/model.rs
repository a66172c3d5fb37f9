//! Scenario configuration and the linear observation model.
//!
//! Node `n` observes `x_n = C_n θ + v_n` with `v_n ~ CN(0, R_n)` and forwards
//! `P_n x_n` over a coherent MAC; the fusion center sees
//! `y = Σ_n H_n P_n x_n + w` with `w ~ CN(0, R_w)`. Node indices are 0-based
//! throughout the crate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

/// Stopping rule for the block-coordinate descent loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcdParams {
    pub max_iter: usize,
    /// Relative change of the objective below which the loop stops.
    pub epsilon: f64,
}

impl Default for BcdParams {
    fn default() -> Self {
        Self {
            max_iter: 40,
            epsilon: 1e-4,
        }
    }
}

/// All scenario dimensions, powers and noise levels. Variances are linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_nodes: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Parameter dimension.
    pub q: usize,
    /// Observations per node.
    pub l: usize,
    pub clusters: usize,
    pub n_rf_node: usize,
    pub n_rf_fc: usize,
    /// Per-node power budgets in watts.
    pub rho: Vec<f64>,
    /// Per-node observation noise variances.
    pub sigma2_obs: Vec<f64>,
    pub sigma2_fc: f64,
    pub sigma2_csi: f64,
    pub seed: u64,
    pub trials: usize,
    pub bcd: BcdParams,
    pub spacing_rx: f64,
    pub spacing_tx: f64,
}

impl SystemConfig {
    /// Desk-scale defaults: N_t = 5, N_r = 10, K = 5, q = 3, l = 2,
    /// SNR_OB = SNR_FC = 10 dB, unit power budgets.
    pub fn desk(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            n_tx: 5,
            n_rx: 10,
            q: 3,
            l: 2,
            clusters: 5,
            n_rf_node: 3,
            n_rf_fc: 5,
            rho: vec![1.0; n_nodes],
            sigma2_obs: vec![0.1; n_nodes],
            sigma2_fc: 0.1,
            sigma2_csi: 0.0,
            seed: 0,
            trials: 2000,
            bcd: BcdParams::default(),
            spacing_rx: 0.5,
            spacing_tx: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_nodes", self.n_nodes),
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("q", self.q),
            ("l", self.l),
            ("clusters", self.clusters),
            ("n_rf_node", self.n_rf_node),
            ("n_rf_fc", self.n_rf_fc),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.n_rf_node > self.n_tx {
            return Err(Error::Config(format!(
                "n_rf_node ({}) exceeds n_tx ({})",
                self.n_rf_node, self.n_tx
            )));
        }
        if self.n_rf_fc > self.n_rx {
            return Err(Error::Config(format!(
                "n_rf_fc ({}) exceeds n_rx ({})",
                self.n_rf_fc, self.n_rx
            )));
        }
        if self.rho.len() != self.n_nodes || self.sigma2_obs.len() != self.n_nodes {
            return Err(Error::Config(format!(
                "rho and sigma2_obs need {} entries (got {} and {})",
                self.n_nodes,
                self.rho.len(),
                self.sigma2_obs.len()
            )));
        }
        if let Some(r) = self.rho.iter().find(|r| !(**r > 0.0)) {
            return Err(Error::Config(format!("power budget {r} is not positive")));
        }
        let variances = self
            .sigma2_obs
            .iter()
            .chain([&self.sigma2_fc, &self.sigma2_csi]);
        for v in variances {
            if !(*v >= 0.0) {
                return Err(Error::Config(format!("variance {v} is negative")));
            }
        }
        if !(self.spacing_rx > 0.0 && self.spacing_tx > 0.0) {
            return Err(Error::Config("antenna spacing ratios must be positive".into()));
        }
        Ok(())
    }
}

/// Per-node observation matrices and noise covariances plus the parameter
/// prior and the FC noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub c: Vec<CMat>,
    pub r_noise: Vec<CMat>,
    pub r_theta: CMat,
    pub r_w: CMat,
}

impl ObservationModel {
    pub fn new(c: Vec<CMat>, r_noise: Vec<CMat>, r_theta: CMat, r_w: CMat) -> Result<Self> {
        let model = Self {
            c,
            r_noise,
            r_theta,
            r_w,
        };
        model.validate()?;
        Ok(model)
    }

    /// `C_n` with i.i.d. CN(0, 1) entries, `R_n = σ_n² I`, `R_θ = I`,
    /// `R_w = σ_fc² I`.
    pub fn random<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = (0..config.n_nodes)
            .map(|_| linalg::cn_matrix(config.l, config.q, 1.0, rng))
            .collect();
        let r_noise = config
            .sigma2_obs
            .iter()
            .map(|&s| linalg::scaled_identity(config.l, s))
            .collect();
        Self::new(
            c,
            r_noise,
            linalg::identity(config.q),
            linalg::scaled_identity(config.n_rx, config.sigma2_fc),
        )
    }

    pub fn n_nodes(&self) -> usize {
        self.c.len()
    }

    pub fn q(&self) -> usize {
        self.r_theta.nrows()
    }

    pub fn l(&self) -> usize {
        self.c.first().map_or(0, |c| c.nrows())
    }

    pub fn n_rx(&self) -> usize {
        self.r_w.nrows()
    }

    /// `C_n R_θ C_n^H + R_n`, the covariance of node `n`'s observation.
    pub fn observation_covariance(&self, n: usize) -> CMat {
        &self.c[n] * &self.r_theta * self.c[n].adjoint() + &self.r_noise[n]
    }

    /// Stacked observation matrix `C` (Nl × q).
    pub fn stacked_c(&self) -> CMat {
        linalg::vstack(&self.c)
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.r_theta.nrows();
        if self.c.is_empty() {
            return Err(Error::Dimension("observation model has no nodes".into()));
        }
        if self.r_noise.len() != self.c.len() {
            return Err(Error::Dimension(format!(
                "{} observation matrices but {} noise covariances",
                self.c.len(),
                self.r_noise.len()
            )));
        }
        check_covariance("R_theta", &self.r_theta)?;
        check_covariance("R_w", &self.r_w)?;
        for (n, (c, r)) in self.c.iter().zip(&self.r_noise).enumerate() {
            if c.ncols() != q {
                return Err(Error::NodeDimension {
                    node: n,
                    detail: format!("C_n has {} columns, expected q = {q}", c.ncols()),
                });
            }
            if r.shape() != (c.nrows(), c.nrows()) {
                return Err(Error::NodeDimension {
                    node: n,
                    detail: format!("R_n is {:?}, expected {}x{}", r.shape(), c.nrows(), c.nrows()),
                });
            }
            check_covariance(&format!("R_{n}"), r)?;
        }
        Ok(())
    }
}

fn check_covariance(name: &str, m: &CMat) -> Result<()> {
    if !linalg::is_hermitian(m, linalg::HERMITIAN_TOL) {
        return Err(Error::Config(format!("{name} is not Hermitian")));
    }
    if !linalg::is_psd(m) {
        return Err(Error::Config(format!("{name} is not positive semidefinite")));
    }
    Ok(())
}

/// Stacked quantities for the whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedModel {
    /// Nl × q.
    pub c: CMat,
    /// N_r × N·N_t.
    pub h: CMat,
    /// N·N_t × N·l, block diagonal.
    pub p: CMat,
    l: usize,
    n_tx: usize,
}

impl StackedModel {
    pub fn observation_block(&self, n: usize) -> CMat {
        self.c.rows(n * self.l, self.l).into_owned()
    }

    pub fn channel_block(&self, n: usize) -> CMat {
        self.h.columns(n * self.n_tx, self.n_tx).into_owned()
    }

    pub fn precoder_block(&self, n: usize) -> CMat {
        self.p
            .view((n * self.n_tx, n * self.l), (self.n_tx, self.l))
            .into_owned()
    }
}

pub fn stack_model(c_list: &[CMat], h_list: &[CMat], p_list: &[CMat]) -> Result<StackedModel> {
    let n = c_list.len();
    if n == 0 {
        return Err(Error::Dimension("no nodes to stack".into()));
    }
    if h_list.len() != n || p_list.len() != n {
        return Err(Error::Dimension(format!(
            "{} observation matrices, {} channels, {} precoders",
            n,
            h_list.len(),
            p_list.len()
        )));
    }
    let (l, q) = c_list[0].shape();
    let (n_rx, n_tx) = h_list[0].shape();
    for i in 0..n {
        let bad = |detail: String| Err(Error::NodeDimension { node: i, detail });
        if c_list[i].shape() != (l, q) {
            return bad(format!("C_n is {:?}, expected {:?}", c_list[i].shape(), (l, q)));
        }
        if h_list[i].shape() != (n_rx, n_tx) {
            return bad(format!("H_n is {:?}, expected {:?}", h_list[i].shape(), (n_rx, n_tx)));
        }
        if p_list[i].shape() != (n_tx, l) {
            return bad(format!("P_n is {:?}, expected {:?}", p_list[i].shape(), (n_tx, l)));
        }
    }
    Ok(StackedModel {
        c: linalg::vstack(c_list),
        h: linalg::hstack(h_list),
        p: linalg::block_diagonal(p_list),
        l,
        n_tx,
    })
}

/// Draws `x_n = C_n θ + v_n`.
pub fn observe<R: Rng + ?Sized>(
    model: &ObservationModel,
    n: usize,
    theta: &CVec,
    rng: &mut R,
) -> Result<CVec> {
    if n >= model.n_nodes() {
        return Err(Error::Dimension(format!(
            "node index {n} out of range for {} nodes",
            model.n_nodes()
        )));
    }
    if theta.len() != model.q() {
        return Err(Error::Dimension(format!(
            "theta has length {}, expected q = {}",
            theta.len(),
            model.q()
        )));
    }
    let noise = linalg::cn_vector_with_sqrt(&linalg::hermitian_sqrt(&model.r_noise[n]), rng);
    Ok(&model.c[n] * theta + noise)
}

/// Average transmit power `Tr[P_n (C_n R_θ C_n^H + R_n) P_n^H]`.
pub fn transmit_power(p: &CMat, c: &CMat, r_theta: &CMat, r_n: &CMat) -> f64 {
    let cov = c * r_theta * c.adjoint() + r_n;
    (p * cov * p.adjoint()).trace().re.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c as cx, cn_matrix, fro_norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_node_stack_is_identity() {
        let mut r = rng(1);
        let c = cn_matrix(2, 3, 1.0, &mut r);
        let h = cn_matrix(4, 5, 1.0, &mut r);
        let p = cn_matrix(5, 2, 1.0, &mut r);
        let s = stack_model(std::slice::from_ref(&c), std::slice::from_ref(&h), std::slice::from_ref(&p)).unwrap();
        assert_eq!(s.c, c);
        assert_eq!(s.h, h);
        assert_eq!(s.p, p);
    }

    #[test]
    fn block_placement_of_observations() {
        let c1 = linalg::zeros(2, 2);
        let c2 = linalg::identity(2);
        let h = vec![linalg::identity(2); 2];
        let p = vec![linalg::identity(2); 2];
        let s = stack_model(&[c1, c2], &h, &p).unwrap();
        let expected = linalg::vstack(&[linalg::zeros(2, 2), linalg::identity(2)]);
        assert_eq!(s.c, expected);
    }

    #[test]
    fn three_nodes_match_loop_oracle() {
        let mut r = rng(2);
        let (l, q, nr, nt) = (2, 3, 4, 3);
        let c: Vec<_> = (0..3).map(|_| cn_matrix(l, q, 1.0, &mut r)).collect();
        let h: Vec<_> = (0..3).map(|_| cn_matrix(nr, nt, 1.0, &mut r)).collect();
        let p: Vec<_> = (0..3).map(|_| cn_matrix(nt, l, 1.0, &mut r)).collect();
        let s = stack_model(&c, &h, &p).unwrap();
        for n in 0..3 {
            for i in 0..l {
                for j in 0..q {
                    assert_eq!(s.c[(n * l + i, j)], c[n][(i, j)]);
                }
            }
            for i in 0..nr {
                for j in 0..nt {
                    assert_eq!(s.h[(i, n * nt + j)], h[n][(i, j)]);
                }
            }
        }
        for row in 0..3 * nt {
            for col in 0..3 * l {
                let (bn, bm) = (row / nt, col / l);
                let expected = if bn == bm {
                    p[bn][(row % nt, col % l)]
                } else {
                    cx(0.0, 0.0)
                };
                assert_eq!(s.p[(row, col)], expected);
            }
        }
        for n in 0..3 {
            assert_eq!(s.observation_block(n), c[n]);
            assert_eq!(s.channel_block(n), h[n]);
            assert_eq!(s.precoder_block(n), p[n]);
        }
    }

    #[test]
    fn stack_reports_offending_node() {
        let c = vec![linalg::zeros(2, 2), linalg::zeros(3, 2)];
        let h = vec![linalg::zeros(2, 2); 2];
        let p = vec![linalg::zeros(2, 2); 2];
        match stack_model(&c, &h, &p) {
            Err(Error::NodeDimension { node, .. }) => assert_eq!(node, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn toy_model(sigma2: f64, c: CMat) -> ObservationModel {
        let (l, q) = c.shape();
        ObservationModel::new(
            vec![c],
            vec![linalg::scaled_identity(l, sigma2)],
            linalg::identity(q),
            linalg::identity(1),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_observation_picks_column() {
        let c = cn_matrix(3, 2, 1.0, &mut rng(3));
        let model = toy_model(0.0, c.clone());
        let theta = CVec::from_vec(vec![cx(1.0, 0.0), cx(0.0, 0.0)]);
        let x = observe(&model, 0, &theta, &mut rng(4)).unwrap();
        assert_eq!(x, c.column(0).into_owned());
    }

    #[test]
    fn observation_noise_has_requested_covariance() {
        let mut r = rng(5);
        let g = cn_matrix(2, 2, 1.0, &mut r);
        let r_n = &g * g.adjoint() + linalg::scaled_identity(2, 0.2);
        let model = ObservationModel::new(
            vec![linalg::zeros(2, 2)],
            vec![r_n.clone()],
            linalg::identity(2),
            linalg::identity(1),
        )
        .unwrap();
        let theta = CVec::from_element(2, cx(1.0, 0.0));
        let draws = 100_000;
        let mut acc = linalg::zeros(2, 2);
        for _ in 0..draws {
            let x = observe(&model, 0, &theta, &mut r).unwrap();
            acc += &x * x.adjoint();
        }
        let sample = acc.unscale(draws as f64);
        assert!(fro_norm(&(sample - &r_n)) < 0.05 * fro_norm(&r_n));
    }

    #[test]
    fn observation_noise_is_zero_mean() {
        let model = toy_model(1.0, linalg::zeros(2, 2));
        let theta = CVec::zeros(2);
        let mut r = rng(6);
        let draws = 10_000;
        let mut sum = CVec::zeros(2);
        for _ in 0..draws {
            sum += observe(&model, 0, &theta, &mut r).unwrap();
        }
        let mean = sum.unscale(draws as f64);
        // per-component stderr of real/imag parts: sqrt(0.5 / draws)
        let stderr = (0.5 / draws as f64).sqrt();
        for z in mean.iter() {
            assert!(z.re.abs() < 3.0 * stderr && z.im.abs() < 3.0 * stderr, "{z}");
        }
    }

    #[test]
    fn observe_is_reproducible() {
        let model = toy_model(0.5, cn_matrix(2, 2, 1.0, &mut rng(7)));
        let theta = CVec::from_element(2, cx(0.3, -0.1));
        let a = observe(&model, 0, &theta, &mut rng(8)).unwrap();
        let b = observe(&model, 0, &theta, &mut rng(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_of_zero_precoder() {
        let c = cn_matrix(2, 3, 1.0, &mut rng(9));
        let p = linalg::zeros(4, 2);
        assert_eq!(transmit_power(&p, &c, &linalg::identity(3), &linalg::identity(2)), 0.0);
    }

    #[test]
    fn power_of_identity_precoder_on_noise() {
        let l = 3;
        let p = linalg::identity(l);
        let power = transmit_power(
            &p,
            &linalg::zeros(l, 2),
            &linalg::identity(2),
            &linalg::scaled_identity(l, 0.7),
        );
        assert!((power - 0.7 * l as f64).abs() < 1e-14);
    }

    #[test]
    fn power_matches_sample_average() {
        let mut r = rng(10);
        let c = cn_matrix(2, 3, 1.0, &mut r);
        let p = cn_matrix(4, 2, 1.0, &mut r);
        let model = toy_model(0.4, c.clone());
        let power = transmit_power(&p, &c, &model.r_theta, &model.r_noise[0]);
        let draws = 10_000;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        let theta_sqrt = linalg::identity(3);
        for _ in 0..draws {
            let theta = linalg::cn_vector_with_sqrt(&theta_sqrt, &mut r);
            let x = observe(&model, 0, &theta, &mut r).unwrap();
            let e = (&p * x).norm_squared();
            sum += e;
            sum_sq += e * e;
        }
        let mean = sum / draws as f64;
        let var = (sum_sq / draws as f64 - mean * mean) * draws as f64 / (draws - 1) as f64;
        let stderr = (var / draws as f64).sqrt();
        assert!((mean - power).abs() < 3.0 * stderr, "{mean} vs {power} ± {stderr}");
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = SystemConfig::desk(4);
        assert!(cfg.validate().is_ok());
        cfg.n_rf_node = 6;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::desk(4);
        cfg.rho[2] = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::desk(4);
        cfg.sigma2_fc = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn model_rejects_non_psd_covariance() {
        let bad = linalg::scaled_identity(2, -1.0);
        let r = ObservationModel::new(
            vec![linalg::zeros(2, 2)],
            vec![bad],
            linalg::identity(2),
            linalg::identity(1),
        );
        assert!(r.is_err());
    }
}
