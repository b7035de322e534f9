//! Multi-user zero-forcing precoding and link scoring.
//!
//! The effective channels of all users in a precoding unit are stacked into
//! `Ĥ_all` (`S_tot × Nt`), inverted with `W = Ĥ_all^H (Ĥ_all Ĥ_all^H)^{-1}`,
//! and scaled under one of three power normalizations. Each user combines
//! its `M` antennas with an MMSE-IRC receiver that whitens all streams plus
//! noise; per-stream SINR then feeds a Shannon sum-rate proxy.

use std::fmt;
use std::str::FromStr;

use crate::channel::ChannelTensor;
use crate::error::{arg, Error, Result};
use crate::linalg::{gram, hermitian_eig, hpd_inverse, matmul, ComplexMatrix};
use crate::reconstruct::EffectiveChannel;

/// Largest accepted condition number of `Ĥ_all Ĥ_all^H`.
pub const MAX_CONDITION: f64 = 1e12;

/// Ceiling used by [`RateModel::Capped64Qam`], bits per stream per channel use.
pub const QAM64_BITS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Normalization {
    /// `‖W‖_F² = P`.
    Entire,
    /// Each user's column block carries `P/K`.
    PerUser,
    /// Each column carries `P/S_tot`.
    PerStream,
}

impl Normalization {
    pub const ALL: [Normalization; 3] = [
        Normalization::Entire,
        Normalization::PerUser,
        Normalization::PerStream,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Normalization::Entire => "entire",
            Normalization::PerUser => "per_user",
            Normalization::PerStream => "per_stream",
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "entire" => Ok(Normalization::Entire),
            "per_user" | "user" => Ok(Normalization::PerUser),
            "per_stream" | "stream" => Ok(Normalization::PerStream),
            other => arg(format!("unknown normalization `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateModel {
    /// `log2(1 + SINR)`.
    Shannon,
    /// `min(log2(1 + SINR), 6)`.
    Capped64Qam,
}

impl RateModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateModel::Shannon => "shannon",
            RateModel::Capped64Qam => "capped",
        }
    }

    pub fn rate(&self, sinr: f64) -> f64 {
        let r = (1.0 + sinr).log2();
        match self {
            RateModel::Shannon => r,
            RateModel::Capped64Qam => r.min(QAM64_BITS),
        }
    }
}

impl FromStr for RateModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shannon" => Ok(RateModel::Shannon),
            "capped" | "capped64qam" | "64qam" => Ok(RateModel::Capped64Qam),
            other => arg(format!("unknown rate model `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodeResult {
    /// `Nt × S_tot`, user blocks in stacking order.
    pub w: ComplexMatrix,
    pub normalization: Normalization,
    pub power_budget: f64,
    pub streams_per_user: Vec<usize>,
}

impl PrecodeResult {
    /// Column range of user `k`.
    pub fn user_columns(&self, k: usize) -> std::ops::Range<usize> {
        user_range(&self.streams_per_user, k)
    }
}

fn user_range(streams_per_user: &[usize], k: usize) -> std::ops::Range<usize> {
    let start: usize = streams_per_user[..k].iter().sum();
    start..start + streams_per_user[k]
}

/// Stacks effective channels row-wise; returns `Ĥ_all` and the per-user
/// stream counts.
pub fn stack_effective<'a>(
    effectives: impl IntoIterator<Item = &'a ComplexMatrix>,
) -> Result<(ComplexMatrix, Vec<usize>)> {
    let mut rows = Vec::new();
    let mut streams = Vec::new();
    let mut nt = None;
    for h in effectives {
        if *nt.get_or_insert(h.cols()) != h.cols() {
            return arg("effective channels differ in Nt");
        }
        streams.push(h.rows());
        rows.extend((0..h.rows()).map(|r| h.row(r).to_vec()));
    }
    if rows.is_empty() {
        return arg("no effective channels to stack");
    }
    Ok((ComplexMatrix::from_rows(&rows)?, streams))
}

/// `W = Ĥ^H (Ĥ Ĥ^H)^{-1}`.
pub fn zf_precoder(stacked: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (s_tot, nt) = stacked.shape();
    if s_tot == 0 || s_tot > nt {
        return arg(format!("{s_tot} stacked streams for {nt} transmit antennas"));
    }
    let g = gram(stacked);
    let eig = hermitian_eig(&g, s_tot)?;
    let (max, min) = (eig.values[0], eig.values[s_tot - 1]);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularPrecoder { condition });
    }
    // G^{-1} = V Λ^{-1} V^H
    let v = &eig.vectors;
    let scaled = ComplexMatrix::from_fn(s_tot, s_tot, |r, c| v.get(r, c) / eig.values[c]);
    let inv = matmul(&scaled, &v.conj_transpose())?;
    matmul(&stacked.conj_transpose(), &inv)
}

/// Rescales `w` so it meets the power constraint of `mode`; column
/// directions are unchanged.
pub fn normalize(
    w: &ComplexMatrix,
    streams_per_user: &[usize],
    mode: Normalization,
    power_budget: f64,
) -> Result<PrecodeResult> {
    let s_tot: usize = streams_per_user.iter().sum();
    if s_tot != w.cols() {
        return arg(format!(
            "stream counts sum to {s_tot} but W has {} columns",
            w.cols()
        ));
    }
    if !(power_budget > 0.0) {
        return arg("power budget must be positive");
    }
    let col_power: Vec<f64> = (0..w.cols())
        .map(|c| (0..w.rows()).map(|r| w.get(r, c).norm_sqr()).sum())
        .collect();
    let mut scale = vec![0.0; w.cols()];
    match mode {
        Normalization::Entire => {
            let total: f64 = col_power.iter().sum();
            if !(total > 0.0) {
                return arg("precoder has zero norm");
            }
            scale.fill((power_budget / total).sqrt());
        }
        Normalization::PerUser => {
            let k = streams_per_user.len() as f64;
            for u in 0..streams_per_user.len() {
                let range = user_range(streams_per_user, u);
                let block: f64 = col_power[range.clone()].iter().sum();
                if !(block > 0.0) {
                    return arg(format!("precoder block of user {u} has zero norm"));
                }
                let f = (power_budget / k / block).sqrt();
                scale[range].fill(f);
            }
        }
        Normalization::PerStream => {
            for (c, &p) in col_power.iter().enumerate() {
                if !(p > 0.0) {
                    return arg(format!("precoder column {c} has zero norm"));
                }
                scale[c] = (power_budget / s_tot as f64 / p).sqrt();
            }
        }
    }
    let w = ComplexMatrix::from_fn(w.rows(), w.cols(), |r, c| w.get(r, c) * scale[c]);
    Ok(PrecodeResult {
        w,
        normalization: mode,
        power_budget,
        streams_per_user: streams_per_user.to_vec(),
    })
}

/// MMSE-IRC combiner `E_k = D_k^H (Σ_l H_k W_l W_l^H H_k^H + σ² I)^{-1}`
/// with `D_k = H_k W_k`. `w` holds every user's columns; `columns` selects
/// user `k`'s block.
pub fn mmse_irc_receiver(
    h_k: &ComplexMatrix,
    w: &ComplexMatrix,
    columns: std::ops::Range<usize>,
    noise_power: f64,
) -> Result<ComplexMatrix> {
    if !(noise_power > 0.0) {
        return arg("noise power must be positive");
    }
    if columns.end > w.cols() {
        return arg("user column block exceeds precoder width");
    }
    let hw = matmul(h_k, w)?;
    mmse_from_product(&hw, columns, noise_power)
}

fn mmse_from_product(
    hw: &ComplexMatrix,
    columns: std::ops::Range<usize>,
    noise_power: f64,
) -> Result<ComplexMatrix> {
    let mut cov = gram(hw);
    for i in 0..cov.rows() {
        cov.set(i, i, cov.get(i, i) + noise_power);
    }
    let inv = hpd_inverse(&cov)?;
    let d_adj = hw.column_block(columns.start, columns.len()).conj_transpose();
    matmul(&d_adj, &inv)
}

/// Post-combining SINR of each of user `k`'s streams:
/// `ρ|g_ii|² / (ρ Σ_{j≠i} |g_ij|² + σ² ‖e_i‖²)` with `G = E_k H_k W`.
pub fn stream_sinr(
    hw: &ComplexMatrix,
    e_k: &ComplexMatrix,
    columns: std::ops::Range<usize>,
    rho: f64,
    sigma2: f64,
) -> Result<Vec<f64>> {
    let g = matmul(e_k, hw)?;
    let mut out = Vec::with_capacity(columns.len());
    for (i, col) in columns.enumerate() {
        let row = g.row(i);
        let desired = rho * row[col].norm_sqr();
        if desired == 0.0 {
            out.push(0.0);
            continue;
        }
        let interference: f64 = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != col)
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            * rho;
        let noise = sigma2 * e_k.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>();
        out.push(desired / (interference + noise));
    }
    Ok(out)
}

/// Link-level result for one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkScore {
    /// Indexed `[subcarrier][user][stream]`, linear.
    pub sinr: Vec<Vec<Vec<f64>>>,
    /// Mean over subcarriers of the per-subcarrier stream-rate sum, bits/s/Hz.
    pub sum_rate: f64,
    pub noise_power: f64,
    pub rho: f64,
}

/// Operating point of [`link_score`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub normalization: Normalization,
    /// Transmit power scale ρ_f.
    pub rho: f64,
    /// Receiver noise power σ².
    pub noise_power: f64,
    /// Total precoder power; `None` uses `S_tot`.
    pub power_budget: Option<f64>,
    pub rate_model: RateModel,
}

impl LinkParams {
    /// ρ_f = 1 with σ² set from a per-stream SNR in dB.
    pub fn from_snr_db(normalization: Normalization, snr_db: f64) -> Self {
        Self {
            normalization,
            rho: 1.0,
            noise_power: 10f64.powf(-snr_db / 10.0),
            power_budget: None,
            rate_model: RateModel::Shannon,
        }
    }
}

/// Builds the normalized precoder for one precoding unit.
pub fn precode_unit(effectives: &[EffectiveChannel], params: &LinkParams) -> Result<PrecodeResult> {
    let (stacked, streams) = stack_effective(effectives.iter().map(|e| &e.matrix))?;
    let w = zf_precoder(&stacked)?;
    let budget = params.power_budget.unwrap_or(stacked.rows() as f64);
    normalize(&w, &streams, params.normalization, budget)
}

/// Scores a drop. `effectives[pu][user]` are the reconstructions of precoding
/// unit `pu`, which spans `granularity` resource blocks; its precoder is
/// applied to every subcarrier in that unit.
pub fn link_score(
    tensor: &ChannelTensor,
    effectives: &[Vec<EffectiveChannel>],
    granularity: usize,
    params: &LinkParams,
) -> Result<LinkScore> {
    if !(params.rho > 0.0) {
        return arg("rho must be positive");
    }
    let n_users = tensor.meta.n_users;
    let n_sub = tensor.n_subcarriers();
    let width = granularity * tensor.meta.n_sc;
    if granularity == 0 || effectives.len() != n_sub.div_ceil(width) {
        return arg(format!(
            "{} precoding units supplied for granularity {granularity}",
            effectives.len()
        ));
    }
    let mut sinr = Vec::with_capacity(n_sub);
    let mut rate_sum = 0.0;
    for (pu, unit) in effectives.iter().enumerate() {
        if unit.len() != n_users {
            return arg(format!("unit {pu} has {} users, expected {n_users}", unit.len()));
        }
        let pre = precode_unit(unit, params)?;
        for sc in pu * width..((pu + 1) * width).min(n_sub) {
            let mut per_user = Vec::with_capacity(n_users);
            for k in 0..n_users {
                let cols = pre.user_columns(k);
                let hw = matmul(&tensor.users[k][sc], &pre.w)?;
                let e = mmse_from_product(&hw, cols.clone(), params.noise_power / params.rho)?;
                let s = stream_sinr(&hw, &e, cols, params.rho, params.noise_power)?;
                rate_sum += s.iter().map(|&x| params.rate_model.rate(x)).sum::<f64>();
                per_user.push(s);
            }
            sinr.push(per_user);
        }
    }
    Ok(LinkScore {
        sinr,
        sum_rate: rate_sum / n_sub as f64,
        noise_power: params.noise_power,
        rho: params.rho,
    })
}
