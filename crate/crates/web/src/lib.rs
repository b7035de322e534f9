//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function returns a flat `Float64Array`; the layouts are
//! documented per function. The `*_impl` functions hold the logic and are
//! what the native tests exercise.

use std::f64::consts::{FRAC_PI_2, PI};

use wasm_bindgen::prelude::*;

use mr3d_core::channel::{element_position, unit_direction, ArrayGeometry, ElementPattern};
use mr3d_core::config::ExperimentConfig;
use mr3d_core::experiment::{drop_for_seed, reconstruct_drop, score_tensor};
use mr3d_core::flops::{cost, CostConfig};
use mr3d_core::linalg::C64;
use mr3d_core::precode::Normalization;
use mr3d_core::reconstruct::Method;

/// Angles sampled by [`beam_pattern`], degrees.
pub const BEAM_ANGLES: usize = 181;

fn demo_config(n: usize, users: usize, seed: u64) -> Result<ExperimentConfig, String> {
    if !(2..=8).contains(&n) {
        return Err(format!("array size {n} outside 2..=8"));
    }
    let mut cfg = ExperimentConfig::default();
    cfg.channel.tx = ArrayGeometry::new(n, n, vec![0.0, 90.0], 0.5, ElementPattern::SECTORED_DEFAULT)
        .map_err(|e| e.to_string())?;
    cfg.channel.n_users = users;
    cfg.channel.n_rb = 1;
    cfg.granularities = vec![1];
    cfg.base_seed = seed;
    cfg.n_seeds = 1;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Rows of `[n, direct, method1, method2, method3]` FLOP totals for square
/// `n × n` arrays, `n` in `from..=to`.
pub fn flop_sweep_impl(from: u32, to: u32, n_pol: u32, m: u32, s: u32, n_rb: u32) -> Result<Vec<f64>, String> {
    if from == 0 || from > to || to > 64 {
        return Err(format!("invalid sweep {from}..={to}"));
    }
    let mut out = Vec::new();
    for n in from..=to {
        let cfg = CostConfig::planar(n as u64, n as u64, n_pol as u64, m as u64, s as u64, n_rb as u64, 12);
        out.push(n as f64);
        for method in Method::ALL {
            out.push(cost(method, &cfg).map_err(|e| e.to_string())?.total as f64);
        }
    }
    Ok(out)
}

/// Array gain of user 0's first stream toward azimuth `−90°..=90°` in 1°
/// steps at the horizon, in dB. The beam has unit norm, so values stay at or
/// below `10·log10(Nt / n_pol)`. Layout: 4 method blocks of [`BEAM_ANGLES`]
/// values in `Method::ALL` order.
pub fn beam_pattern_impl(n: usize, seed: u64) -> Result<Vec<f64>, String> {
    let cfg = demo_config(n, 1, seed)?;
    let tensor = drop_for_seed(&cfg, 0).map_err(|e| e.to_string())?;
    let tx = &cfg.channel.tx;
    let nt = tx.n_elements();
    let positions: Vec<[f64; 3]> = (0..nt)
        .map(|i| element_position(tx, i).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let per_pol = nt / tx.n_pol;
    let mut out = Vec::with_capacity(4 * BEAM_ANGLES);
    for method in Method::ALL {
        let eff = reconstruct_drop(&tensor, method, 1, 1).map_err(|e| e.to_string())?;
        // Beamformer is the conjugate of the effective-channel row.
        let row = eff[0][0].matrix.row(0).to_vec();
        for k in 0..BEAM_ANGLES {
            let phi = (k as f64 - 90.0).to_radians();
            let r = unit_direction(FRAC_PI_2, phi);
            let mut gain = 0.0;
            for pol in 0..tx.n_pol {
                let sum: C64 = (pol * per_pol..(pol + 1) * per_pol)
                    .map(|i| {
                        let d = positions[i];
                        let phase = 2.0 * PI * (r[0] * d[0] + r[1] * d[1] + r[2] * d[2]);
                        C64::from_polar(1.0, phase) * row[i].conj()
                    })
                    .sum();
                gain += sum.norm_sqr();
            }
            out.push(10.0 * gain.max(1e-12).log10());
        }
    }
    Ok(out)
}

/// Sum rate of one drop for each method, `[direct, method1, method2,
/// method3]` in bits/s/Hz; `NaN` where a reconstruction was rank-deficient.
pub fn sum_rates_impl(n: usize, users: usize, seed: u64, snr_db: f64, normalization: &str) -> Result<Vec<f64>, String> {
    let mut cfg = demo_config(n, users, seed)?;
    cfg.snr_db = snr_db;
    cfg.normalizations = vec![normalization.parse::<Normalization>().map_err(|e| e.to_string())?];
    cfg.validate().map_err(|e| e.to_string())?;
    let tensor = drop_for_seed(&cfg, 0).map_err(|e| e.to_string())?;
    let rows = score_tensor(&cfg, &tensor, 0).map_err(|e| e.to_string())?;
    Ok(rows.iter().map(|r| r.sum_rate.unwrap_or(f64::NAN)).collect())
}

#[wasm_bindgen]
pub fn flop_sweep(from: u32, to: u32, n_pol: u32, m: u32, s: u32, n_rb: u32) -> Result<Vec<f64>, JsError> {
    flop_sweep_impl(from, to, n_pol, m, s, n_rb).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn beam_pattern(n: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    beam_pattern_impl(n as usize, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sum_rates(n: u32, users: u32, seed: u32, snr_db: f64, normalization: &str) -> Result<Vec<f64>, JsError> {
    sum_rates_impl(n as usize, users as usize, seed as u64, snr_db, normalization).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flop_sweep_layout() {
        let v = flop_sweep_impl(4, 8, 2, 8, 2, 1).unwrap();
        assert_eq!(v.len(), 5 * 5);
        let row = &v[20..25];
        assert_eq!(row[0], 8.0);
        assert!(row[1..].iter().skip(1).all(|&x| x < 0.1 * row[1]));
        assert!(flop_sweep_impl(5, 4, 2, 8, 2, 1).is_err());
    }

    #[test]
    fn beam_pattern_peaks_within_bounds() {
        let v = beam_pattern_impl(4, 7).unwrap();
        assert_eq!(v.len(), 4 * BEAM_ANGLES);
        assert!(v.iter().all(|x| x.is_finite()));
        // A unit-norm beam cannot exceed the coherent array gain.
        let bound = 10.0 * 16f64.log10();
        assert!(v.iter().all(|&x| x <= bound + 1e-9));
        assert!(v.iter().any(|&x| x > bound - 10.0));
    }

    #[test]
    fn sum_rates_per_method() {
        let v = sum_rates_impl(4, 3, 1, 20.0, "per_stream").unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.iter().all(|x| x.is_finite() && *x > 0.0));
        assert!(sum_rates_impl(4, 3, 1, 20.0, "bogus").is_err());
        assert!(sum_rates_impl(9, 3, 1, 20.0, "entire").is_err());
    }
}
