//! Hybrid design for a fusion center without receiver noise.
//!
//! The RF stages pick the strongest array-response directions: per node by
//! path-gain magnitude, at the FC by gain magnitude summed over nodes. The
//! baseband precoders then shape the effective `r × Nl` channel into the
//! conjugate transpose of the `r` dominant eigenvectors of the (whitened)
//! stacked observation matrix, which makes the LMMSE error of the whole
//! network equal to `(q − r)⁺ + Σ_{k ≤ min(r, q)} 1/(1 + λ_k)` with `λ_k` the
//! largest eigenvalues of `C C^H`.

use crate::channel::{ChannelRealization, ClusterSet};
use crate::error::{Error, Result};
use crate::hybrid::HybridTransceiver;
use crate::linalg::{self, CMat};
use crate::model::ObservationModel;

/// Relative singular-value threshold for the effective channel inversion.
pub const RANK_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RfSelection {
    pub node_columns: Vec<Vec<usize>>,
    pub fc_columns: Vec<usize>,
    pub p_rf: Vec<CMat>,
    pub a_rf: CMat,
}

/// Indices of the `k` largest scores, ties kept in index order.
fn top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::DictionaryExhausted {
            requested: k,
            available: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(k);
    Ok(order)
}

pub fn select_rf_precoder(
    clusters: &ClusterSet,
    channel: &ChannelRealization,
    n: usize,
    n_rf: usize,
) -> Result<(Vec<usize>, CMat)> {
    let gains: Vec<f64> = clusters.alphas.row(n).iter().map(|z| z.norm()).collect();
    let cols = top_k(&gains, n_rf)?;
    let p_rf = linalg::select_columns(&channel.a_s[n], &cols);
    Ok((cols, p_rf))
}

pub fn select_rf_combiner(
    clusters: &ClusterSet,
    channel: &ChannelRealization,
    n_rf: usize,
) -> Result<(Vec<usize>, CMat)> {
    let sums: Vec<f64> = (0..clusters.n_clusters())
        .map(|k| clusters.alphas.column(k).iter().map(|z| z.norm()).sum())
        .collect();
    let cols = top_k(&sums, n_rf)?;
    let a_rf = linalg::select_columns(&channel.a_fc, &cols);
    Ok((cols, a_rf))
}

pub fn select_rf(
    clusters: &ClusterSet,
    channel: &ChannelRealization,
    n_rf_node: usize,
    n_rf_fc: usize,
) -> Result<RfSelection> {
    let mut node_columns = Vec::with_capacity(channel.n_nodes());
    let mut p_rf = Vec::with_capacity(channel.n_nodes());
    for n in 0..channel.n_nodes() {
        let (cols, m) = select_rf_precoder(clusters, channel, n, n_rf_node)?;
        node_columns.push(cols);
        p_rf.push(m);
    }
    let (fc_columns, a_rf) = select_rf_combiner(clusters, channel, n_rf_fc)?;
    Ok(RfSelection {
        node_columns,
        fc_columns,
        p_rf,
        a_rf,
    })
}

/// `R_n^{-1/2} C_n` stacked over nodes.
pub fn whitened_observations(model: &ObservationModel) -> Result<CMat> {
    let blocks = (0..model.n_nodes())
        .map(|n| {
            let inv_root = inverse_sqrt(&model.r_noise[n])
                .ok_or_else(|| Error::Singular(format!("node {n}: observation noise covariance is singular")))?;
            Ok(inv_root * &model.c[n])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(linalg::vstack(&blocks))
}

fn inverse_sqrt(m: &CMat) -> Option<CMat> {
    let eig = linalg::hermitian_eigen(m);
    let top = eig.values.first().copied().unwrap_or(0.0);
    if eig.values.iter().any(|&v| !(v > RANK_REL_TOL * top)) {
        return None;
    }
    let mut scaled = eig.vectors.clone();
    for (j, v) in eig.values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / v.sqrt());
    }
    Some(&scaled * eig.vectors.adjoint())
}

/// Target effective channel: the first `r` rows of `U^H`, where `U` holds the
/// eigenvectors of `C C^H` in decreasing eigenvalue order.
pub fn target_effective_channel(c: &CMat, r: usize) -> Result<CMat> {
    let rows = c.nrows();
    if r > rows {
        return Err(Error::Dimension(format!(
            "{r} RF chains exceed the {rows} stacked observations"
        )));
    }
    let eig = linalg::hermitian_eigen(&(c * c.adjoint()));
    Ok(eig.vectors.columns(0, r).adjoint())
}

/// `P_BB,n = H̄_n⁺ H̃_n R_n^{-1/2}` with `H̄_n = A_RF^H H_n P_RF,n` and `H̃_n`
/// the node's `l` columns of the target effective channel.
pub fn design_bb_precoders(
    channel: &ChannelRealization,
    selection: &RfSelection,
    model: &ObservationModel,
) -> Result<Vec<CMat>> {
    let r = selection.a_rf.ncols();
    let whitened = whitened_observations(model)?;
    let target = target_effective_channel(&whitened, r)?;
    let mut out = Vec::with_capacity(channel.n_nodes());
    let mut offset = 0;
    for n in 0..channel.n_nodes() {
        let l = model.c[n].nrows();
        if selection.p_rf[n].ncols() != r {
            return Err(Error::NodeDimension {
                node: n,
                detail: format!(
                    "{} node RF chains but {r} at the FC; the noiseless design needs them equal",
                    selection.p_rf[n].ncols()
                ),
            });
        }
        let effective = selection.a_rf.adjoint() * &channel.h[n] * &selection.p_rf[n];
        let sv = linalg::singular_values(&effective);
        let (smax, smin) = (sv[0], sv[sv.len() - 1]);
        if !(smin > RANK_REL_TOL * smax) {
            return Err(Error::RankDeficient {
                node: n,
                detail: format!("singular values span [{smin:e}, {smax:e}]"),
            });
        }
        let inv_root = inverse_sqrt(&model.r_noise[n]).expect("checked by whitened_observations");
        let slice = target.columns(offset, l).into_owned();
        out.push(linalg::pseudo_inverse(&effective, RANK_REL_TOL) * slice * inv_root);
        offset += l;
    }
    Ok(out)
}

/// Gain and noise covariance of the FC's RF-stage output for given
/// precoders: `G = Σ H̄_n P_BB,n C_n`, `N = Σ H̄_n P_BB,n R_n P_BB,n^H H̄_n^H`.
fn effective_model(
    channel: &ChannelRealization,
    selection: &RfSelection,
    p_bb: &[CMat],
    model: &ObservationModel,
) -> (CMat, CMat) {
    let r = selection.a_rf.ncols();
    let mut g = linalg::zeros(r, model.q());
    let mut noise = linalg::zeros(r, r);
    for n in 0..channel.n_nodes() {
        let t = selection.a_rf.adjoint() * &channel.h[n] * &selection.p_rf[n] * &p_bb[n];
        g += &t * &model.c[n];
        noise += &t * &model.r_noise[n] * t.adjoint();
    }
    (g, noise)
}

/// LMMSE error covariance `R_θ − R_θ G^H (G R_θ G^H + N)⁺ G R_θ` of the
/// estimate formed from the RF-stage output.
pub fn error_covariance(
    channel: &ChannelRealization,
    selection: &RfSelection,
    p_bb: &[CMat],
    model: &ObservationModel,
) -> CMat {
    let (g, noise) = effective_model(channel, selection, p_bb, model);
    let rt = &model.r_theta;
    let cov = &g * rt * g.adjoint() + noise;
    rt - rt * g.adjoint() * linalg::pseudo_inverse(&cov, RANK_REL_TOL) * &g * rt
}

/// Baseband combiner `A_BB` (so that `A_BB^H = R_θ G^H (G R_θ G^H + N)⁺`).
pub fn bb_combiner(
    channel: &ChannelRealization,
    selection: &RfSelection,
    p_bb: &[CMat],
    model: &ObservationModel,
) -> CMat {
    let (g, noise) = effective_model(channel, selection, p_bb, model);
    let rt = &model.r_theta;
    let cov = &g * rt * g.adjoint() + noise;
    (rt * g.adjoint() * linalg::pseudo_inverse(&cov, RANK_REL_TOL)).adjoint()
}

/// Full noiseless hybrid design with `r` RF chains at every node and at the FC.
pub fn noiseless_design(
    clusters: &ClusterSet,
    channel: &ChannelRealization,
    model: &ObservationModel,
    r: usize,
) -> Result<HybridTransceiver> {
    let selection = select_rf(clusters, channel, r, r)?;
    let p_bb = design_bb_precoders(channel, &selection, model)?;
    let a_bb = bb_combiner(channel, &selection, &p_bb, model);
    Ok(HybridTransceiver {
        node_columns: selection.node_columns,
        fc_columns: selection.fc_columns,
        p_rf: selection.p_rf,
        p_bb,
        a_rf: selection.a_rf,
        a_bb,
    })
}

/// Closed-form MSE with `n_rf` RF chains per node for unit prior and noise
/// covariances: the `min(n_rf, q)` strongest modes of `C` are estimated, the
/// remaining `q − n_rf` parameters keep their prior variance.
pub fn noiseless_mse(c: &CMat, n_rf: usize, q: usize) -> f64 {
    let sv = linalg::singular_values(c);
    let used = n_rf.min(q);
    let modes: f64 = (0..used)
        .map(|k| 1.0 / (1.0 + sv.get(k).map_or(0.0, |s| s * s)))
        .sum();
    (q - used) as f64 + modes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::centralized_benchmark;
    use crate::channel::{assemble_channel, draw_clusters};
    use crate::linalg::{c as cx, cn_matrix, fro_norm, identity};
    use crate::model::SystemConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, n: usize, k: usize) -> (SystemConfig, ClusterSet, ChannelRealization) {
        let mut cfg = SystemConfig::desk(n);
        cfg.clusters = k;
        let cl = draw_clusters(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let ch = assemble_channel(&cl, &cfg).unwrap();
        (cfg, cl, ch)
    }

    #[test]
    fn precoder_selection_by_gain() {
        let (_, mut cl, ch) = setup(1, 1, 3);
        for (k, g) in [3.0, 1.0, 2.0].into_iter().enumerate() {
            cl.alphas[(0, k)] = cx(0.0, g);
        }
        let (cols, p_rf) = select_rf_precoder(&cl, &ch, 0, 2).unwrap();
        assert_eq!(cols, vec![0, 2]);
        assert_eq!(p_rf.ncols(), 2);
        let (all, _) = select_rf_precoder(&cl, &ch, 0, 3).unwrap();
        assert_eq!(all, vec![0, 2, 1]);
    }

    #[test]
    fn selection_matches_sorting_oracle_and_is_unit_modulus() {
        let (cfg, cl, ch) = setup(2, 6, 5);
        let sel = select_rf(&cl, &ch, 3, 3).unwrap();
        for n in 0..6 {
            let mut idx: Vec<usize> = (0..5).collect();
            idx.sort_by(|&a, &b| cl.alphas[(n, b)].norm().partial_cmp(&cl.alphas[(n, a)].norm()).unwrap());
            assert_eq!(sel.node_columns[n], idx[..3].to_vec());
            let m = 1.0 / (cfg.n_tx as f64).sqrt();
            assert!(sel.p_rf[n].iter().all(|z| (z.norm() - m).abs() < 1e-12));
        }
        let sums: Vec<f64> = (0..5).map(|k| (0..6).map(|n| cl.alphas[(n, k)].norm()).sum()).collect();
        let mut idx: Vec<usize> = (0..5).collect();
        idx.sort_by(|&a, &b| sums[b].partial_cmp(&sums[a]).unwrap());
        assert_eq!(sel.fc_columns, idx[..3].to_vec());
        let m = 1.0 / (cfg.n_rx as f64).sqrt();
        assert!(sel.a_rf.iter().all(|z| (z.norm() - m).abs() < 1e-12));
    }

    #[test]
    fn single_node_combiner_ranking_matches_precoder_ranking() {
        let (_, cl, ch) = setup(3, 1, 5);
        let (a, _) = select_rf_combiner(&cl, &ch, 4).unwrap();
        let (b, _) = select_rf_precoder(&cl, &ch, 0, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn combiner_prefers_larger_sum() {
        let (_, mut cl, ch) = setup(4, 2, 2);
        cl.alphas[(0, 0)] = cx(2.0, 0.0);
        cl.alphas[(1, 0)] = cx(3.0, 0.0);
        cl.alphas[(0, 1)] = cx(0.0, 4.0);
        cl.alphas[(1, 1)] = cx(0.0, 0.0);
        let (cols, _) = select_rf_combiner(&cl, &ch, 1).unwrap();
        assert_eq!(cols, vec![0]);
    }

    #[test]
    fn too_many_chains_is_an_error() {
        let (_, cl, ch) = setup(5, 2, 3);
        assert!(matches!(
            select_rf_precoder(&cl, &ch, 0, 4),
            Err(Error::DictionaryExhausted { .. })
        ));
        assert!(select_rf_combiner(&cl, &ch, 4).is_err());
    }

    #[test]
    fn zero_observation_matrix_keeps_prior() {
        assert_eq!(noiseless_mse(&linalg::zeros(6, 3), 2, 3), 3.0);
        assert_eq!(noiseless_mse(&linalg::zeros(6, 3), 5, 3), 3.0);
    }

    #[test]
    fn equal_eigenvalues_case() {
        let c = linalg::vstack(&[identity(3), identity(3)]);
        assert!((noiseless_mse(&c, 3, 3) - 1.0).abs() < 1e-14);
        assert!((noiseless_mse(&c, 4, 3) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn law_matches_eigen_oracle_below_saturation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = cn_matrix(10, 4, 1.0, &mut rng);
        let eig = linalg::hermitian_eigen(&(&c * c.adjoint())).values;
        let expected = 1.0 + (0..3).map(|k| 1.0 / (1.0 + eig[k])).sum::<f64>();
        assert!((noiseless_mse(&c, 3, 4) - expected).abs() < 1e-12);
    }

    #[test]
    fn identity_effective_channel_passes_target_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r = 3;
        let c = cn_matrix(6, 3, 1.0, &mut rng);
        let target = target_effective_channel(&c, r).unwrap();
        // A single node with H̄ = I: P_BB must be the target block itself.
        let effective = identity(r);
        let p = linalg::pseudo_inverse(&effective, RANK_REL_TOL) * &target;
        assert_eq!(p, target);
    }

    #[test]
    fn baseband_reconstructs_target() {
        let (_, cl, ch) = setup(8, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut cfg = SystemConfig::desk(4);
        cfg.sigma2_obs = vec![1.0; 4];
        let model = ObservationModel::random(&cfg, &mut rng).unwrap();
        let sel = select_rf(&cl, &ch, 3, 3).unwrap();
        let p_bb = design_bb_precoders(&ch, &sel, &model).unwrap();
        let target = target_effective_channel(&model.stacked_c(), 3).unwrap();
        for n in 0..4 {
            let eff = sel.a_rf.adjoint() * &ch.h[n] * &sel.p_rf[n];
            let got = eff * &p_bb[n];
            assert!(fro_norm(&(got - target.columns(2 * n, 2))) < 1e-9);
        }
    }

    #[test]
    fn end_to_end_error_matches_law() {
        for seed in 0..5 {
            let mut cfg = SystemConfig::desk(5);
            cfg.n_rx = 5;
            cfg.sigma2_obs = vec![1.0; 5];
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let cl = draw_clusters(&cfg, &mut rng);
            let ch = assemble_channel(&cl, &cfg).unwrap();
            let model = ObservationModel::random(&cfg, &mut rng).unwrap();
            // With r close to N_r = N_t = K the effective channel is a product
            // of nearly square array Gram matrices and becomes numerically
            // singular for some angle draws.
            for r in 1..=3 {
                let sel = select_rf(&cl, &ch, r, r).unwrap();
                let p_bb = design_bb_precoders(&ch, &sel, &model).unwrap();
                let e = error_covariance(&ch, &sel, &p_bb, &model);
                let law = noiseless_mse(&model.stacked_c(), r, cfg.q);
                assert!((e.trace().re - law).abs() < 1e-8, "r={r}: {} vs {law}", e.trace().re);
            }
        }
    }

    #[test]
    fn saturated_law_is_the_benchmark() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let c = cn_matrix(8, 4, 1.0, &mut rng);
        let mut prev = f64::INFINITY;
        for r in 1..=8 {
            let m = noiseless_mse(&c, r, 4);
            assert!(m <= prev + 1e-15);
            if r >= 4 {
                assert!((m - centralized_benchmark(&c)).abs() < 1e-10);
            }
            prev = m;
        }
    }

    #[test]
    fn silent_node_is_rank_deficient() {
        let (cfg, mut cl, _) = setup(13, 3, 5);
        for k in 0..5 {
            cl.alphas[(2, k)] = cx(0.0, 0.0);
        }
        let ch = assemble_channel(&cl, &cfg).unwrap();
        let model = ObservationModel::random(&cfg, &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
        let sel = select_rf(&cl, &ch, 3, 3).unwrap();
        assert!(matches!(
            design_bb_precoders(&ch, &sel, &model),
            Err(Error::RankDeficient { node: 2, .. })
        ));
    }

    #[test]
    fn mismatched_chain_counts_are_rejected() {
        let (_, cl, ch) = setup(11, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = ObservationModel::random(&SystemConfig::desk(3), &mut rng).unwrap();
        let sel = select_rf(&cl, &ch, 2, 3).unwrap();
        assert!(matches!(
            design_bb_precoders(&ch, &sel, &model),
            Err(Error::NodeDimension { node: 0, .. })
        ));
    }
}
