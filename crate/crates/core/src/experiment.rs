//! Seeded experiment runs and their CSV output.
//!
//! Each drop index `i` draws its channels from `derive_seed(base_seed, [i])`,
//! so any subset of methods, normalizations or granularities reproduces the
//! same per-row numbers. Drops run in parallel; rows are always emitted in
//! seed → method → normalization → granularity order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::channel::{derive_seed, generate_drop, ChannelTensor};
use crate::config::ExperimentConfig;
use crate::error::{arg, Error, Result};
use crate::flops::{cost, cost_direct, CostConfig, SweepRow};
use crate::precode::{link_score, LinkParams, Normalization};
use crate::reconstruct::{reconstruct, EffectiveChannel, Method, PuView};

pub const CSV_HEADER: [&str; 7] = [
    "method",
    "seed",
    "pu_granularity",
    "normalization",
    "sum_rate_bps_hz",
    "flops_total",
    "flops_ratio",
];

pub const FLOPS_CSV_HEADER: [&str; 9] = [
    "n_azimuth",
    "n_elevation",
    "n_pol",
    "nt",
    "v_a",
    "v_e",
    "method",
    "flops_total",
    "flops_ratio",
];

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "MR_THREADS";

/// Why a row carries no sum rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowStatus {
    DegenerateRank,
    SingularPrecoder,
}

impl RowStatus {
    pub fn token(&self) -> &'static str {
        match self {
            RowStatus::DegenerateRank => "degenerate_rank",
            RowStatus::SingularPrecoder => "singular_precoder",
        }
    }

    fn classify(e: Error) -> Result<RowStatus> {
        match e {
            Error::DegenerateRank { .. } => Ok(RowStatus::DegenerateRank),
            Error::SingularPrecoder { .. } => Ok(RowStatus::SingularPrecoder),
            other => Err(other),
        }
    }
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub seed: u64,
    pub granularity: usize,
    pub normalization: Normalization,
    pub sum_rate: std::result::Result<f64, RowStatus>,
    pub flops_total: u64,
    pub flops_ratio: f64,
}

impl ResultRow {
    pub fn csv_fields(&self) -> [String; 7] {
        [
            self.method.to_string(),
            self.seed.to_string(),
            self.granularity.to_string(),
            self.normalization.to_string(),
            match self.sum_rate {
                Ok(r) => format!("{r:.6}"),
                Err(s) => s.token().to_string(),
            },
            self.flops_total.to_string(),
            format!("{:.6}", self.flops_ratio),
        ]
    }
}

/// Reconstructs every user in every precoding unit of `granularity` RBs.
/// Returns `[pu][user]`.
pub fn reconstruct_drop(
    tensor: &ChannelTensor,
    method: Method,
    granularity: usize,
    streams: usize,
) -> Result<Vec<Vec<EffectiveChannel>>> {
    let (n_a, n_e, n_pol) = tensor
        .layout()
        .ok_or_else(|| Error::Argument("tensor carries no array layout".into()))?;
    if granularity == 0 || !tensor.meta.n_rb.is_multiple_of(granularity) {
        return arg(format!(
            "granularity {granularity} does not divide {} resource blocks",
            tensor.meta.n_rb
        ));
    }
    let v_a = n_a * n_pol;
    let groups: Vec<usize> = (0..v_a).map(|c| c / n_a).collect();
    (0..tensor.meta.n_rb / granularity)
        .map(|pu| {
            (0..tensor.meta.n_users)
                .map(|k| {
                    let view = PuView::new(tensor.pu_slice(k, pu, granularity), v_a, n_e, streams)?
                        .with_groups(&groups)?;
                    reconstruct(method, &view)
                })
                .collect()
        })
        .collect()
}

fn tensor_cost_config(tensor: &ChannelTensor, streams: usize, granularity: usize) -> Result<CostConfig> {
    let (n_a, n_e, n_pol) = tensor
        .layout()
        .ok_or_else(|| Error::Argument("tensor carries no array layout".into()))?;
    Ok(CostConfig {
        nt: tensor.meta.nt as u64,
        v_a: (n_a * n_pol) as u64,
        v_e: n_e as u64,
        m: tensor.meta.m as u64,
        s: streams as u64,
        n_rb: granularity as u64,
        n_sc: tensor.meta.n_sc as u64,
        n_pol: n_pol as u64,
    })
}

/// Scores one tensor under every method, normalization and granularity of
/// `cfg`, labelling the rows with `seed`.
pub fn score_tensor(cfg: &ExperimentConfig, tensor: &ChannelTensor, seed: u64) -> Result<Vec<ResultRow>> {
    // Effective channels depend only on (method, granularity); normalization
    // only changes the precoder scaling.
    let mut effectives = BTreeMap::new();
    let mut costs = BTreeMap::new();
    for &g in &cfg.granularities {
        let cc = tensor_cost_config(tensor, cfg.streams, g)?;
        let direct = cost_direct(&cc)?.total as f64;
        for &m in &cfg.methods {
            let total = cost(m, &cc)?.total;
            costs.insert((m, g), (total, total as f64 / direct));
            let eff = match reconstruct_drop(tensor, m, g, cfg.streams) {
                Ok(e) => Ok(e),
                Err(e) => Err(RowStatus::classify(e)?),
            };
            effectives.insert((m, g), eff);
        }
    }
    let mut rows = Vec::new();
    for &m in &cfg.methods {
        for &n in &cfg.normalizations {
            let params: LinkParams = cfg.link_params(n);
            for &g in &cfg.granularities {
                let sum_rate = match &effectives[&(m, g)] {
                    Ok(eff) => match link_score(tensor, eff, g, &params) {
                        Ok(s) => Ok(s.sum_rate),
                        Err(e) => Err(RowStatus::classify(e)?),
                    },
                    Err(s) => Err(*s),
                };
                let (flops_total, flops_ratio) = costs[&(m, g)];
                rows.push(ResultRow {
                    method: m,
                    seed,
                    granularity: g,
                    normalization: n,
                    sum_rate,
                    flops_total,
                    flops_ratio,
                });
            }
        }
    }
    Ok(rows)
}

/// Channels of drop `seed` (an index, not the derived RNG seed).
pub fn drop_for_seed(cfg: &ExperimentConfig, seed: u64) -> Result<ChannelTensor> {
    generate_drop(&cfg.channel, derive_seed(cfg.base_seed, &[seed]))
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    score_tensor(cfg, &drop_for_seed(cfg, seed)?, seed)
}

/// Runs every configured drop on the current thread pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let seeds: Vec<u64> = cfg.seed_indices().collect();
    #[cfg(feature = "parallel")]
    let per_seed: Vec<Vec<ResultRow>> = {
        use rayon::prelude::*;
        seeds
            .par_iter()
            .map(|&s| run_seed(cfg, s))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let per_seed: Vec<Vec<ResultRow>> = seeds
        .iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Worker count from `MR_THREADS`; `None` when unset or unparsable.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// [`run_experiment`] on a dedicated pool of `threads` workers (global pool
/// when `None`).
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<ResultRow>> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::State(format!("thread pool: {e}")))?;
        return pool.install(|| run_experiment(cfg));
    }
    let _ = threads;
    run_experiment(cfg)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.csv_fields()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

/// Costs for an `n × n` dual-layout sweep, `n` over `sizes`.
pub fn square_sweep(sizes: impl IntoIterator<Item = u64>, base: &CostConfig) -> Vec<CostConfig> {
    sizes
        .into_iter()
        .map(|n| CostConfig::planar(n, n, base.n_pol, base.m, base.s, base.n_rb, base.n_sc))
        .collect()
}

pub fn compare_flops(configs: &[CostConfig], methods: &[Method]) -> Result<Vec<SweepRow>> {
    crate::flops::sweep(configs, methods)
}

pub fn write_flops_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(FLOPS_CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        let c = &r.config;
        w.write_record([
            (c.v_a / c.n_pol).to_string(),
            c.v_e.to_string(),
            c.n_pol.to_string(),
            c.nt.to_string(),
            c.v_a.to_string(),
            c.v_e.to_string(),
            r.method.to_string(),
            r.total.to_string(),
            format!("{:.6}", r.ratio),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean sum rate over seeds of one `(method, normalization, granularity)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMean {
    pub mean: f64,
    /// Seeds that produced a rate.
    pub count: usize,
    /// Seeds with a status token instead.
    pub failed: usize,
}

pub fn summarize(rows: &[ResultRow]) -> BTreeMap<(Method, Normalization, usize), CellMean> {
    let mut acc: BTreeMap<_, (f64, usize, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.method, r.normalization, r.granularity)).or_default();
        match r.sum_rate {
            Ok(x) => {
                e.0 += x;
                e.1 += 1;
            }
            Err(_) => e.2 += 1,
        }
    }
    acc.into_iter()
        .map(|(k, (sum, count, failed))| {
            let mean = if count > 0 { sum / count as f64 } else { f64::NAN };
            (k, CellMean { mean, count, failed })
        })
        .collect()
}
