//! Experiment configuration in `key = value` form with `[section]` headers.
//!
//! Every key is optional; omitted keys keep the defaults of
//! [`ExperimentConfig::default`]. Unknown sections or keys are rejected so
//! typos do not silently fall back to defaults. List values are
//! comma-separated. [`ExperimentConfig::to_ini`] writes the full key set.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::channel::{ArrayGeometry, ChannelConfig, ElementPattern};
use crate::error::{Error, Result};
use crate::flops::CostConfig;
use crate::precode::{LinkParams, Normalization, RateModel};
use crate::reconstruct::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub channel: ChannelConfig,
    /// Streams per user, `S`.
    pub streams: usize,
    pub methods: Vec<Method>,
    pub normalizations: Vec<Normalization>,
    /// Resource blocks per precoding unit.
    pub granularities: Vec<usize>,
    /// Master seed; drop `i` uses `derive_seed(base_seed, [i])`.
    pub base_seed: u64,
    /// First drop index.
    pub first_seed: u64,
    pub n_seeds: usize,
    /// Per-stream `ρ_f/σ²` in dB.
    pub snr_db: f64,
    pub rho: f64,
    /// Total precoder power; `None` means `K·S`.
    pub power_budget: Option<f64>,
    pub rate_model: RateModel,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            streams: 2,
            methods: Method::ALL.to_vec(),
            normalizations: Normalization::ALL.to_vec(),
            granularities: vec![1, 2, 4],
            base_seed: 2024,
            first_seed: 0,
            n_seeds: 20,
            snr_db: 20.0,
            rho: 1.0,
            power_budget: None,
            rate_model: RateModel::Shannon,
            output: None,
        }
    }
}

fn cfg_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse<T: FromStr>(field: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.trim()
        .parse()
        .map_err(|e: T::Err| cfg_err(field, format!("cannot parse `{}`: {e}", v.trim())))
}

fn parse_list<T: FromStr>(field: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    let items: Vec<T> = v
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(field, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(cfg_err(field, "list must not be empty"));
    }
    Ok(items)
}

fn parse_optional(field: &str, v: &str) -> Result<Option<f64>> {
    match v.trim().to_ascii_lowercase().as_str() {
        "" | "none" | "off" => Ok(None),
        _ => parse(field, v).map(Some),
    }
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn optional(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| v.to_string())
}

/// Pattern keys of an array section, collected before the geometry is built.
#[derive(Default)]
struct PatternKeys {
    kind: Option<String>,
    beamwidth: Option<f64>,
    max_attenuation: Option<f64>,
    side_lobe: Option<f64>,
}

fn apply_array(
    section: &str,
    geom: &mut ArrayGeometry,
    pattern: &mut PatternKeys,
    key: &str,
    v: &str,
) -> Result<()> {
    let field = format!("{section}.{key}");
    let f = field.as_str();
    match key {
        "n_azimuth" => geom.n_azimuth = parse(f, v)?,
        "n_elevation" => geom.n_elevation = parse(f, v)?,
        "pol_slants_deg" => {
            geom.pol_slants_deg = parse_list(f, v)?;
            geom.n_pol = geom.pol_slants_deg.len();
        }
        "spacing_az" => geom.spacing_az = parse(f, v)?,
        "spacing_el" => geom.spacing_el = parse(f, v)?,
        "pattern" => pattern.kind = Some(v.trim().to_ascii_lowercase()),
        "beamwidth_deg" => pattern.beamwidth = Some(parse(f, v)?),
        "max_attenuation_db" => pattern.max_attenuation = Some(parse(f, v)?),
        "side_lobe_db" => pattern.side_lobe = Some(parse(f, v)?),
        _ => return Err(cfg_err(f, "unknown key")),
    }
    Ok(())
}

fn finish_pattern(section: &str, geom: &mut ArrayGeometry, keys: PatternKeys) -> Result<()> {
    let (bw, att, sla) = match geom.pattern {
        ElementPattern::Sectored {
            beamwidth_deg,
            max_attenuation_db,
            side_lobe_db,
        } => (beamwidth_deg, max_attenuation_db, side_lobe_db),
        ElementPattern::Isotropic => match ElementPattern::SECTORED_DEFAULT {
            ElementPattern::Sectored {
                beamwidth_deg,
                max_attenuation_db,
                side_lobe_db,
            } => (beamwidth_deg, max_attenuation_db, side_lobe_db),
            ElementPattern::Isotropic => unreachable!(),
        },
    };
    let sectored = match keys.kind.as_deref() {
        None => matches!(geom.pattern, ElementPattern::Sectored { .. }),
        Some("sectored") => true,
        Some("isotropic") => false,
        Some(other) => {
            return Err(cfg_err(
                &format!("{section}.pattern"),
                format!("expected `isotropic` or `sectored`, got `{other}`"),
            ))
        }
    };
    let tuned = keys.beamwidth.is_some() || keys.max_attenuation.is_some() || keys.side_lobe.is_some();
    if !sectored && tuned {
        return Err(cfg_err(
            &format!("{section}.pattern"),
            "sectored pattern keys given for an isotropic array",
        ));
    }
    geom.pattern = if sectored {
        let p = ElementPattern::Sectored {
            beamwidth_deg: keys.beamwidth.unwrap_or(bw),
            max_attenuation_db: keys.max_attenuation.unwrap_or(att),
            side_lobe_db: keys.side_lobe.unwrap_or(sla),
        };
        if let ElementPattern::Sectored { beamwidth_deg, .. } = p {
            if !(beamwidth_deg > 0.0) {
                return Err(cfg_err(&format!("{section}.beamwidth_deg"), "must be positive"));
            }
        }
        p
    } else {
        ElementPattern::Isotropic
    };
    geom.validate()
        .map_err(|e| cfg_err(section, e.to_string()))
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| cfg_err("<file>", e.to_string()))?;
        let mut cfg = Self::default();
        let mut bs = PatternKeys::default();
        let mut ue = PatternKeys::default();
        let mut zod_min = None;
        let mut zod_max = None;
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, v) in props.iter() {
                let field = format!("{section}.{key}");
                let f = field.as_str();
                let ch = &mut cfg.channel;
                let s = &mut ch.sampler;
                match (section, key) {
                    ("experiment", "seed") => cfg.base_seed = parse(f, v)?,
                    ("experiment", "first_seed") => cfg.first_seed = parse(f, v)?,
                    ("experiment", "seeds") => cfg.n_seeds = parse(f, v)?,
                    ("experiment", "methods") => cfg.methods = parse_list(f, v)?,
                    ("experiment", "normalizations") => cfg.normalizations = parse_list(f, v)?,
                    ("experiment", "pu_granularity") => cfg.granularities = parse_list(f, v)?,
                    ("experiment", "streams") => cfg.streams = parse(f, v)?,
                    ("experiment", "snr_db") => cfg.snr_db = parse(f, v)?,
                    ("experiment", "rho") => cfg.rho = parse(f, v)?,
                    ("experiment", "power_budget") => cfg.power_budget = parse_optional(f, v)?,
                    ("experiment", "rate_model") => cfg.rate_model = parse(f, v)?,
                    ("experiment", "output") => {
                        cfg.output = Some(v.trim()).filter(|p| !p.is_empty()).map(PathBuf::from)
                    }
                    ("channel", "users") => ch.n_users = parse(f, v)?,
                    ("channel", "n_rb") => ch.n_rb = parse(f, v)?,
                    ("channel", "n_sc") => ch.n_sc = parse(f, v)?,
                    ("channel", "subcarrier_spacing_hz") => ch.subcarrier_spacing_hz = parse(f, v)?,
                    ("channel", "carrier_hz") => ch.carrier_hz = parse(f, v)?,
                    ("channel", "time_s") => ch.time_s = parse(f, v)?,
                    ("bs_array", k) => apply_array(section, &mut ch.tx, &mut bs, k, v)?,
                    ("ue_array", k) => apply_array(section, &mut ch.rx, &mut ue, k, v)?,
                    ("sampler", "n_rays") => s.n_rays = parse(f, v)?,
                    ("sampler", "n_subpaths") => s.n_subpaths = parse(f, v)?,
                    ("sampler", "aod_spread_deg") => s.aod_spread_deg = parse(f, v)?,
                    ("sampler", "zod_spread_deg") => s.zod_spread_deg = parse(f, v)?,
                    ("sampler", "aoa_spread_deg") => s.aoa_spread_deg = parse(f, v)?,
                    ("sampler", "zoa_spread_deg") => s.zoa_spread_deg = parse(f, v)?,
                    ("sampler", "subpath_aod_spread_deg") => s.subpath_aod_spread_deg = parse(f, v)?,
                    ("sampler", "subpath_zod_spread_deg") => s.subpath_zod_spread_deg = parse(f, v)?,
                    ("sampler", "subpath_aoa_spread_deg") => s.subpath_aoa_spread_deg = parse(f, v)?,
                    ("sampler", "subpath_zoa_spread_deg") => s.subpath_zoa_spread_deg = parse(f, v)?,
                    ("sampler", "aod_mean_range_deg") => s.aod_mean_range_deg = parse(f, v)?,
                    ("sampler", "zod_mean_min_deg") => zod_min = Some(parse(f, v)?),
                    ("sampler", "zod_mean_max_deg") => zod_max = Some(parse(f, v)?),
                    ("sampler", "delay_spread_s") => s.delay_spread_s = parse(f, v)?,
                    ("sampler", "xpr_mean_db") => s.xpr_mean_db = parse(f, v)?,
                    ("sampler", "xpr_std_db") => s.xpr_std_db = parse(f, v)?,
                    ("sampler", "ricean_k_db") => s.ricean_k_db = parse_optional(f, v)?,
                    ("sampler", "speed_kmh") => s.user_speed_kmh = parse(f, v)?,
                    ("experiment" | "channel" | "sampler", _) => {
                        return Err(cfg_err(f, "unknown key"))
                    }
                    ("", _) => return Err(cfg_err(key, "key outside any section")),
                    _ => return Err(cfg_err(section, "unknown section")),
                }
            }
        }
        let zod = &mut cfg.channel.sampler.zod_mean_range_deg;
        *zod = (zod_min.unwrap_or(zod.0), zod_max.unwrap_or(zod.1));
        finish_pattern("bs_array", &mut cfg.channel.tx, bs)?;
        finish_pattern("ue_array", &mut cfg.channel.rx, ue)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full key set, parseable by [`ExperimentConfig::from_ini_str`].
    pub fn to_ini(&self) -> String {
        let mut ini = Ini::new();
        ini.with_section(Some("experiment"))
            .set("seed", self.base_seed.to_string())
            .set("first_seed", self.first_seed.to_string())
            .set("seeds", self.n_seeds.to_string())
            .set("methods", join(&self.methods))
            .set("normalizations", join(&self.normalizations))
            .set("pu_granularity", join(&self.granularities))
            .set("streams", self.streams.to_string())
            .set("snr_db", self.snr_db.to_string())
            .set("rho", self.rho.to_string())
            .set("power_budget", optional(self.power_budget))
            .set("rate_model", self.rate_model.as_str())
            .set(
                "output",
                self.output
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            );
        let ch = &self.channel;
        ini.with_section(Some("channel"))
            .set("users", ch.n_users.to_string())
            .set("n_rb", ch.n_rb.to_string())
            .set("n_sc", ch.n_sc.to_string())
            .set("subcarrier_spacing_hz", ch.subcarrier_spacing_hz.to_string())
            .set("carrier_hz", ch.carrier_hz.to_string())
            .set("time_s", ch.time_s.to_string());
        for (name, g) in [("bs_array", &ch.tx), ("ue_array", &ch.rx)] {
            let mut sec = ini.with_section(Some(name));
            let sec = sec
                .set("n_azimuth", g.n_azimuth.to_string())
                .set("n_elevation", g.n_elevation.to_string())
                .set("pol_slants_deg", join(&g.pol_slants_deg))
                .set("spacing_az", g.spacing_az.to_string())
                .set("spacing_el", g.spacing_el.to_string());
            match g.pattern {
                ElementPattern::Isotropic => {
                    sec.set("pattern", "isotropic");
                }
                ElementPattern::Sectored {
                    beamwidth_deg,
                    max_attenuation_db,
                    side_lobe_db,
                } => {
                    sec.set("pattern", "sectored")
                        .set("beamwidth_deg", beamwidth_deg.to_string())
                        .set("max_attenuation_db", max_attenuation_db.to_string())
                        .set("side_lobe_db", side_lobe_db.to_string());
                }
            }
        }
        let s = &ch.sampler;
        ini.with_section(Some("sampler"))
            .set("n_rays", s.n_rays.to_string())
            .set("n_subpaths", s.n_subpaths.to_string())
            .set("aod_spread_deg", s.aod_spread_deg.to_string())
            .set("zod_spread_deg", s.zod_spread_deg.to_string())
            .set("aoa_spread_deg", s.aoa_spread_deg.to_string())
            .set("zoa_spread_deg", s.zoa_spread_deg.to_string())
            .set("subpath_aod_spread_deg", s.subpath_aod_spread_deg.to_string())
            .set("subpath_zod_spread_deg", s.subpath_zod_spread_deg.to_string())
            .set("subpath_aoa_spread_deg", s.subpath_aoa_spread_deg.to_string())
            .set("subpath_zoa_spread_deg", s.subpath_zoa_spread_deg.to_string())
            .set("aod_mean_range_deg", s.aod_mean_range_deg.to_string())
            .set("zod_mean_min_deg", s.zod_mean_range_deg.0.to_string())
            .set("zod_mean_max_deg", s.zod_mean_range_deg.1.to_string())
            .set("delay_spread_s", s.delay_spread_s.to_string())
            .set("xpr_mean_db", s.xpr_mean_db.to_string())
            .set("xpr_std_db", s.xpr_std_db.to_string())
            .set("ricean_k_db", optional(s.ricean_k_db))
            .set("speed_kmh", s.user_speed_kmh.to_string());
        let mut out = Vec::new();
        ini.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("ini output is UTF-8")
    }

    pub fn nt(&self) -> usize {
        self.channel.tx.n_elements()
    }

    pub fn v_a(&self) -> usize {
        self.channel.tx.n_columns()
    }

    pub fn v_e(&self) -> usize {
        self.channel.tx.n_elevation
    }

    pub fn m(&self) -> usize {
        self.channel.rx.n_elements()
    }

    /// Cost-model dimensions for precoding units of `granularity` RBs.
    pub fn cost_config(&self, granularity: usize) -> CostConfig {
        CostConfig {
            nt: self.nt() as u64,
            v_a: self.v_a() as u64,
            v_e: self.v_e() as u64,
            m: self.m() as u64,
            s: self.streams as u64,
            n_rb: granularity as u64,
            n_sc: self.channel.n_sc as u64,
            n_pol: self.channel.tx.n_pol as u64,
        }
    }

    pub fn link_params(&self, normalization: Normalization) -> LinkParams {
        LinkParams {
            normalization,
            rho: self.rho,
            noise_power: self.rho * 10f64.powf(-self.snr_db / 10.0),
            power_budget: self.power_budget,
            rate_model: self.rate_model,
        }
    }

    /// Drop indices in run order.
    pub fn seed_indices(&self) -> std::ops::Range<u64> {
        self.first_seed..self.first_seed + self.n_seeds as u64
    }

    pub fn validate(&self) -> Result<()> {
        self.channel
            .validate()
            .map_err(|e| cfg_err("channel", e.to_string()))?;
        let (nt, m, s, k) = (self.nt(), self.m(), self.streams, self.channel.n_users);
        if s == 0 {
            return Err(cfg_err("experiment.streams", "must be positive"));
        }
        if s > m {
            return Err(cfg_err(
                "experiment.streams",
                format!("{s} streams exceed {m} user antennas"),
            ));
        }
        if k * s > nt {
            return Err(cfg_err(
                "experiment.streams",
                format!("K·S = {k}·{s} exceeds Nt = {nt}"),
            ));
        }
        let kron = self.methods.iter().any(|&mm| mm != Method::Direct);
        if kron && s > self.v_a() {
            return Err(cfg_err(
                "experiment.streams",
                format!("{s} streams exceed the {} azimuth columns", self.v_a()),
            ));
        }
        for &g in &self.granularities {
            if g == 0 || !self.channel.n_rb.is_multiple_of(g) {
                return Err(cfg_err(
                    "experiment.pu_granularity",
                    format!("{g} does not divide channel.n_rb = {}", self.channel.n_rb),
                ));
            }
        }
        if self.methods.is_empty() || self.normalizations.is_empty() || self.granularities.is_empty() {
            return Err(cfg_err("experiment", "method, normalization and granularity lists must be non-empty"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(cfg_err("experiment.rho", "must be positive"));
        }
        if !self.snr_db.is_finite() {
            return Err(cfg_err("experiment.snr_db", "must be finite"));
        }
        if let Some(p) = self.power_budget {
            if !(p > 0.0) {
                return Err(cfg_err("experiment.power_budget", "must be positive"));
            }
        }
        Ok(())
    }
}
