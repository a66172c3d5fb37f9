//! Hybrid (RF + baseband) factorization of fully-digital transceivers by
//! simultaneous orthogonal matching pursuit over array-response dictionaries.
//!
//! Every precoder column lies in the span of its node's transmit array
//! responses and every combiner row in the span of the FC's receive array
//! responses, so those matrices serve as dictionaries; their entries already
//! have the constant modulus an analog phase-shifter network requires.

use crate::channel::ChannelRealization;
use crate::digital::{DigitalTransceiver, Problem};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

pub use crate::digital::received_covariance;

/// Smallest singular value of the selected columns, relative to the largest,
/// below which the selection is rejected as linearly dependent.
pub const DEPENDENCE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SompResult {
    /// Selected dictionary columns, in selection order.
    pub columns: Vec<usize>,
    /// `k × targets` least-squares coefficients over the selected columns.
    pub coeffs: CMat,
    /// Final (weighted) residual Frobenius norm.
    pub residual: f64,
    /// Residual norm after each selection.
    pub residual_history: Vec<f64>,
}

/// Greedy joint-sparse approximation `target ≈ dictionary[:, S] · coeffs`
/// with `|S| = k`.
///
/// Each step correlates the residual with every dictionary column, picks the
/// unselected column with the largest row energy of `dictionary^H · residual`
/// (lowest index on ties) and refits all coefficients by least squares. With
/// a weight `W` the fit minimizes `‖W^{1/2} (target − dictionary · coeffs)‖_F`.
pub fn somp_factorize(target: &CMat, dictionary: &CMat, k: usize, weight: Option<&CMat>) -> Result<SompResult> {
    if target.nrows() != dictionary.nrows() {
        return Err(Error::Dimension(format!(
            "target has {} rows, dictionary {}",
            target.nrows(),
            dictionary.nrows()
        )));
    }
    if k > dictionary.ncols() {
        return Err(Error::DictionaryExhausted {
            requested: k,
            available: dictionary.ncols(),
        });
    }
    let (t, d) = match weight {
        Some(w) => {
            if w.shape() != (target.nrows(), target.nrows()) {
                return Err(Error::Dimension(format!("weight is {:?}", w.shape())));
            }
            let root = linalg::hermitian_sqrt(w);
            (&root * target, &root * dictionary)
        }
        None => (target.clone(), dictionary.clone()),
    };

    let mut columns: Vec<usize> = Vec::with_capacity(k);
    let mut coeffs = linalg::zeros(0, target.ncols());
    let mut residual = t.clone();
    let mut history = Vec::with_capacity(k);
    for _ in 0..k {
        let psi = d.adjoint() * &residual;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..d.ncols() {
            if columns.contains(&i) {
                continue;
            }
            let energy: f64 = psi.row(i).iter().map(|z| z.norm_sqr()).sum();
            if best.is_none_or(|(_, e)| energy > e) {
                best = Some((i, energy));
            }
        }
        columns.push(best.expect("k <= dictionary size").0);
        let sel = linalg::select_columns(&d, &columns);
        let sv = linalg::singular_values(&sel);
        if !(sv[sv.len() - 1] > DEPENDENCE_REL_TOL * sv[0]) {
            return Err(Error::Singular(format!(
                "selected dictionary columns {columns:?} are dependent"
            )));
        }
        // Least squares through the SVD rather than the normal equations,
        // whose squared conditioning fails on near-square array dictionaries.
        coeffs = linalg::pseudo_inverse(&sel, DEPENDENCE_REL_TOL) * &t;
        residual = &t - &sel * &coeffs;
        history.push(linalg::fro_norm(&residual));
    }
    Ok(SompResult {
        columns,
        residual: history.last().copied().unwrap_or_else(|| linalg::fro_norm(&t)),
        coeffs,
        residual_history: history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    pub columns: Vec<usize>,
    /// N_t × N_RF analog stage.
    pub p_rf: CMat,
    /// N_RF × l baseband stage.
    pub p_bb: CMat,
}

/// Factorizes one node's precoder over its transmit array responses and
/// rescales the baseband stage so the product keeps the Frobenius norm (and so
/// the power scale) of the fully-digital precoder.
pub fn hybrid_precoder(p: &CMat, a_s: &CMat, n_rf: usize) -> Result<HybridPrecoder> {
    let fit = somp_factorize(p, a_s, n_rf, None)?;
    let p_rf = linalg::select_columns(a_s, &fit.columns);
    let mut p_bb = fit.coeffs;
    let achieved = linalg::fro_norm(&(&p_rf * &p_bb));
    if achieved > 0.0 {
        p_bb.scale_mut(linalg::fro_norm(p) / achieved);
    }
    Ok(HybridPrecoder {
        columns: fit.columns,
        p_rf,
        p_bb,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridCombiner {
    pub columns: Vec<usize>,
    /// N_r × N_RF analog stage.
    pub a_rf: CMat,
    /// N_RF × q baseband stage; the combiner is `A_BB^H A_RF^H`.
    pub a_bb: CMat,
}

/// Factorizes `A^H ≈ A_RF A_BB` over the FC array responses, weighting the
/// fit by the received covariance so that errors are penalized where the
/// signal lives.
pub fn hybrid_combiner(a: &CMat, a_fc: &CMat, n_rf: usize, r_yy: &CMat) -> Result<HybridCombiner> {
    let fit = somp_factorize(&a.adjoint(), a_fc, n_rf, Some(r_yy))?;
    Ok(HybridCombiner {
        a_rf: linalg::select_columns(a_fc, &fit.columns),
        columns: fit.columns,
        a_bb: fit.coeffs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridTransceiver {
    pub node_columns: Vec<Vec<usize>>,
    pub fc_columns: Vec<usize>,
    pub p_rf: Vec<CMat>,
    pub p_bb: Vec<CMat>,
    pub a_rf: CMat,
    pub a_bb: CMat,
}

impl HybridTransceiver {
    pub fn precoders(&self) -> Vec<CMat> {
        self.p_rf.iter().zip(&self.p_bb).map(|(rf, bb)| rf * bb).collect()
    }

    pub fn combiner(&self) -> CMat {
        self.a_bb.adjoint() * self.a_rf.adjoint()
    }
}

/// Turns a fully-digital design into a hybrid one: factorize every precoder,
/// refit the combiner to the factorized precoders with the same objective
/// (`problem` carries the CSI-error variance for the robust variant), then
/// factorize that combiner with the received covariance as weight.
pub fn hybridize(
    digital: &DigitalTransceiver,
    channel: &ChannelRealization,
    problem: &Problem,
    n_rf_node: usize,
    n_rf_fc: usize,
) -> Result<HybridTransceiver> {
    let mut node_columns = Vec::with_capacity(digital.precoders.len());
    let mut p_rf = Vec::with_capacity(digital.precoders.len());
    let mut p_bb = Vec::with_capacity(digital.precoders.len());
    for (n, p) in digital.precoders.iter().enumerate() {
        let f = hybrid_precoder(p, &channel.a_s[n], n_rf_node).map_err(|e| match e {
            Error::Singular(d) => Error::NodeDimension { node: n, detail: d },
            other => other,
        })?;
        node_columns.push(f.columns);
        p_rf.push(f.p_rf);
        p_bb.push(f.p_bb);
    }
    let precoders: Vec<CMat> = p_rf.iter().zip(&p_bb).map(|(rf, bb)| rf * bb).collect();
    let a = problem.combiner(&precoders)?;
    let r_yy = problem.received_covariance(&precoders)?;
    let comb = hybrid_combiner(&a, &channel.a_fc, n_rf_fc, &r_yy)?;
    Ok(HybridTransceiver {
        node_columns,
        fc_columns: comb.columns,
        p_rf,
        p_bb,
        a_rf: comb.a_rf,
        a_bb: comb.a_bb,
    })
}
