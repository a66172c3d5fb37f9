//! Clustered mmWave channel: array responses, per-node channels and
//! synthetic CSI error.
//!
//! `H_n = A_FC D_n A_s,n^H` where the columns of `A_FC` and `A_s,n` are
//! unit-norm ULA responses and `D_n = sqrt(N_r N_t / K) diag(α_{·,n})`.
//! Arrival angles are shared by all nodes within a cluster; departure angles
//! and gains are per node.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec};
use crate::model::SystemConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    /// N × K complex path gains.
    pub alphas: CMat,
    /// K arrival angles at the FC, radians in [0, π].
    pub aoa: Vec<f64>,
    /// N × K departure angles, radians in [0, π].
    pub aod: DMatrix<f64>,
    pub spacing_rx: f64,
    pub spacing_tx: f64,
}

impl ClusterSet {
    pub fn n_nodes(&self) -> usize {
        self.alphas.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.alphas.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// N_r × K.
    pub a_fc: CMat,
    /// Per node, N_t × K.
    pub a_s: Vec<CMat>,
    /// Per node, K × K diagonal gain matrices including the array-size scale.
    pub d: Vec<CMat>,
    /// Per node, N_r × N_t.
    pub h: Vec<CMat>,
}

impl ChannelRealization {
    pub fn n_nodes(&self) -> usize {
        self.h.len()
    }

    /// Horizontal concatenation `[H_1, …, H_N]`.
    pub fn concatenated(&self) -> CMat {
        linalg::hstack(&self.h)
    }
}

/// Estimated channels and the error that separates them from the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiRealization {
    pub h_hat: Vec<CMat>,
    pub delta: Vec<CMat>,
    pub sigma2_csi: f64,
}

/// ULA response: entry `m` is `exp(-j m 2π (d/λ) cos(angle)) / sqrt(count)`.
pub fn array_response(angle: f64, count: usize, spacing_ratio: f64) -> CVec {
    let step = 2.0 * PI * spacing_ratio * angle.cos();
    let scale = 1.0 / (count as f64).sqrt();
    CVec::from_fn(count, |m, _| {
        let phase = -(m as f64) * step;
        c(scale * phase.cos(), scale * phase.sin())
    })
}

pub fn array_response_matrix(angles: &[f64], count: usize, spacing_ratio: f64) -> CMat {
    let mut m = linalg::zeros(count, angles.len());
    for (k, &a) in angles.iter().enumerate() {
        m.set_column(k, &array_response(a, count, spacing_ratio));
    }
    m
}

/// Draws gains `α_{k,n} ~ CN(0, 1)` (node-major), then the K shared arrival
/// angles, then the N × K departure angles, all uniform on [0, π].
pub fn draw_clusters<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> ClusterSet {
    let (n, k) = (config.n_nodes, config.clusters);
    let alphas = linalg::cn_matrix(n, k, 1.0, rng);
    let aoa = (0..k).map(|_| rng.random_range(0.0..=PI)).collect();
    let mut aod = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            aod[(i, j)] = rng.random_range(0.0..=PI);
        }
    }
    ClusterSet {
        alphas,
        aoa,
        aod,
        spacing_rx: config.spacing_rx,
        spacing_tx: config.spacing_tx,
    }
}

pub fn assemble_channel(clusters: &ClusterSet, config: &SystemConfig) -> Result<ChannelRealization> {
    let (n, k) = (clusters.n_nodes(), clusters.n_clusters());
    if n != config.n_nodes || k != config.clusters || clusters.aoa.len() != k {
        return Err(Error::Dimension(format!(
            "cluster set is {n} nodes x {k} clusters, config expects {} x {}",
            config.n_nodes, config.clusters
        )));
    }
    let a_fc = array_response_matrix(&clusters.aoa, config.n_rx, clusters.spacing_rx);
    let scale = ((config.n_rx * config.n_tx) as f64 / k as f64).sqrt();
    let mut a_s = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for node in 0..n {
        let angles: Vec<f64> = clusters.aod.row(node).iter().copied().collect();
        let a_node = array_response_matrix(&angles, config.n_tx, clusters.spacing_tx);
        let gains = CVec::from_fn(k, |j, _| clusters.alphas[(node, j)] * scale);
        let d_node = CMat::from_diagonal(&gains);
        h.push(&a_fc * &d_node * a_node.adjoint());
        a_s.push(a_node);
        d.push(d_node);
    }
    Ok(ChannelRealization { a_fc, a_s, d, h })
}

/// Draws `ΔH_n` with i.i.d. CN(0, σ_H²) entries and sets `Ĥ_n = H_n − ΔH_n`.
///
/// Each error component keeps its exact Gaussian draw unless nudging it by a
/// few ulps makes `Ĥ_n + ΔH_n` reproduce `H_n` bit for bit. When the entry of
/// `H_n` has low-order bits that neither `Ĥ_n` nor `ΔH_n` can carry (both much
/// larger in magnitude), no such pair of doubles exists and the reconstruction
/// is off by at most one ulp of the larger part instead; redrawing those components would bias
/// the error variance.
pub fn perturb_csi<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    sigma2_csi: f64,
    rng: &mut R,
) -> CsiRealization {
    let mut h_hat = Vec::with_capacity(channel.n_nodes());
    let mut delta = Vec::with_capacity(channel.n_nodes());
    for h in &channel.h {
        let d = linalg::cn_matrix(h.nrows(), h.ncols(), sigma2_csi, rng);
        let mut hh = h - &d;
        let mut dd = d;
        for ((x, e), d) in h.iter().zip(hh.iter_mut()).zip(dd.iter_mut()) {
            let (er, dr) = split_exact(x.re, d.re);
            let (ei, di) = split_exact(x.im, d.im);
            *e = c(er, ei);
            *d = c(dr, di);
        }
        h_hat.push(hh);
        delta.push(dd);
    }
    CsiRealization {
        h_hat,
        delta,
        sigma2_csi,
    }
}

fn split_exact(x: f64, err: f64) -> (f64, f64) {
    let est = x - err;
    let (mut up, mut down) = (err, err);
    for _ in 0..=16 {
        if est + up == x {
            return (est, up);
        }
        if est + down == x {
            return (est, down);
        }
        up = up.next_up();
        down = down.next_down();
    }
    (est, err)
}

// Text fixture format:
//
//   lde-channel 1
//   dims <nodes> <n_rx> <n_tx> <clusters>
//   matrix <label> <node> <rows> <cols>
//   <re> <im> <re> <im> ...            one line per matrix row
//
// Labels are A_FC (node 0), A_S, D and H. Values use the shortest decimal
// form that round-trips, so parsing restores every entry bit for bit.

const MAGIC: &str = "lde-channel 1";

pub fn channel_to_text(ch: &ChannelRealization) -> String {
    let (n_rx, k) = ch.a_fc.shape();
    let n_tx = ch.a_s.first().map_or(0, |a| a.nrows());
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "dims {} {} {} {}", ch.n_nodes(), n_rx, n_tx, k).unwrap();
    write_matrix(&mut out, "A_FC", 0, &ch.a_fc);
    for n in 0..ch.n_nodes() {
        write_matrix(&mut out, "A_S", n, &ch.a_s[n]);
        write_matrix(&mut out, "D", n, &ch.d[n]);
        write_matrix(&mut out, "H", n, &ch.h[n]);
    }
    out
}

fn write_matrix(out: &mut String, label: &str, node: usize, m: &CMat) {
    writeln!(out, "matrix {label} {node} {} {}", m.nrows(), m.ncols()).unwrap();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{} {}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
}

pub fn channel_from_text(text: &str) -> Result<ChannelRealization> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let perr = |line: usize, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };
    let (ln, first) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
    if first != MAGIC {
        return Err(perr(ln, "missing lde-channel header"));
    }
    let (ln, dims) = lines.next().ok_or_else(|| perr(2, "missing dims line"))?;
    let nums = parse_fields(ln, dims, "dims", 4)?;
    let (nodes, n_rx, n_tx, k) = (nums[0], nums[1], nums[2], nums[3]);

    let mut read = |label: &str, node: usize, rows: usize, cols: usize| -> Result<CMat> {
        let (ln, header) = lines
            .next()
            .ok_or_else(|| perr(0, &format!("missing matrix {label} {node}")))?;
        let f = parse_fields(ln, header, "matrix", 3)?;
        let found_label = header.split_whitespace().nth(1).unwrap_or("");
        if found_label != label || f[0] != node || f[1] != rows || f[2] != cols {
            return Err(perr(ln, &format!("expected matrix {label} {node} {rows} {cols}")));
        }
        let mut m = linalg::zeros(rows, cols);
        for i in 0..rows {
            let (ln, row) = lines.next().ok_or_else(|| perr(0, "truncated matrix"))?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| perr(ln, &e.to_string())))
                .collect::<Result<_>>()?;
            if vals.len() != 2 * cols {
                return Err(perr(ln, &format!("expected {} numbers", 2 * cols)));
            }
            for j in 0..cols {
                m[(i, j)] = c(vals[2 * j], vals[2 * j + 1]);
            }
        }
        Ok(m)
    };

    let a_fc = read("A_FC", 0, n_rx, k)?;
    let mut a_s = Vec::with_capacity(nodes);
    let mut d = Vec::with_capacity(nodes);
    let mut h = Vec::with_capacity(nodes);
    for n in 0..nodes {
        a_s.push(read("A_S", n, n_tx, k)?);
        d.push(read("D", n, k, k)?);
        h.push(read("H", n, n_rx, n_tx)?);
    }
    Ok(ChannelRealization { a_fc, a_s, d, h })
}

/// Parses `<keyword> <label?> n n n n`: the numeric fields are the last
/// `count` whitespace-separated tokens.
fn parse_fields(line: usize, text: &str, keyword: &str, count: usize) -> Result<Vec<usize>> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.first() != Some(&keyword) || tokens.len() < count + 1 {
        return Err(Error::Parse {
            line,
            msg: format!("expected `{keyword}` line"),
        });
    }
    tokens[tokens.len() - count..]
        .iter()
        .map(|t| {
            t.parse::<usize>().map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })
        })
        .collect()
}
