//! Symbolic FLOP model for channel reconstruction.
//!
//! Primitive costs follow the usual dense-algebra accounting, one FLOP per
//! real scalar add or multiply of the complex entries counted as a unit.
//! Each method's total is a declarative list of [`Term`]s so that an
//! alternative accounting is a one-line change.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{arg, Result};
use crate::reconstruct::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primitive {
    /// `A A^H` for `A` of shape `M × N`.
    Gram,
    /// `A B` for `M × N` by `N × L`.
    Matmul,
    Scale,
    Sum,
    Qr,
    /// SVD returning `Σ, U`.
    SvdSu,
    /// SVD returning `Σ, V`.
    SvdSv,
}

impl Primitive {
    pub const ALL: [Primitive; 7] = [
        Primitive::Gram,
        Primitive::Matmul,
        Primitive::Scale,
        Primitive::Sum,
        Primitive::Qr,
        Primitive::SvdSu,
        Primitive::SvdSv,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Primitive::Gram => "gram",
            Primitive::Matmul => "matmul",
            Primitive::Scale => "scale",
            Primitive::Sum => "sum",
            Primitive::Qr => "qr",
            Primitive::SvdSu => "svd_su",
            Primitive::SvdSv => "svd_sv",
        }
    }

    /// Cost of one application; `dims` is `[M, N]` or `[M, N, L]`.
    pub fn cost(&self, dims: &[u64]) -> Result<u64> {
        match (self, dims) {
            (Primitive::Gram, &[m, n]) => flops_gram(m, n),
            (Primitive::Matmul, &[m, n, l]) => flops_matmul(m, n, l),
            (Primitive::Scale, &[m, n]) => flops_scale(m, n),
            (Primitive::Sum, &[m, n]) => flops_sum(m, n),
            (Primitive::Qr, &[m, n]) => flops_qr(m, n),
            (Primitive::SvdSu, &[m, n]) => flops_svd_su(m, n),
            (Primitive::SvdSv, &[m, n]) => flops_svd_sv(m, n),
            _ => arg(format!("{} takes {} dimensions", self.label(), self.arity())),
        }
    }

    fn arity(&self) -> usize {
        if *self == Primitive::Matmul {
            3
        } else {
            2
        }
    }

    fn is_decomposition(&self) -> bool {
        matches!(self, Primitive::SvdSu | Primitive::SvdSv)
    }
}

fn positive(dims: &[u64]) -> Result<()> {
    if dims.contains(&0) {
        return arg(format!("FLOP dimensions must be positive, got {dims:?}"));
    }
    Ok(())
}

fn overflow() -> crate::Error {
    crate::Error::Argument("FLOP count overflows u64".into())
}

fn to_u64(x: u128) -> Result<u64> {
    u64::try_from(x).map_err(|_| overflow())
}

/// `M²N + M(N − M/2) − M/2`.
pub fn flops_gram(m: u64, n: u64) -> Result<u64> {
    positive(&[m, n])?;
    let (m, n) = (m as u128, n as u128);
    // Doubled to stay in integers; the numerator is always even.
    let twice = 2 * m * m * n + 2 * m * n - m * m - m;
    debug_assert_eq!(twice % 2, 0);
    to_u64(twice / 2)
}

/// `2MNL − ML`.
pub fn flops_matmul(m: u64, n: u64, l: u64) -> Result<u64> {
    positive(&[m, n, l])?;
    let (m, n, l) = (m as u128, n as u128, l as u128);
    to_u64(2 * m * n * l - m * l)
}

pub fn flops_scale(m: u64, n: u64) -> Result<u64> {
    positive(&[m, n])?;
    m.checked_mul(n).ok_or_else(overflow)
}

pub fn flops_sum(m: u64, n: u64) -> Result<u64> {
    positive(&[m, n])?;
    m.checked_mul(n).ok_or_else(overflow)
}

/// `4(M²N − MN² + N³/3)`, rounded up when `N` is not a multiple of 3.
pub fn flops_qr(m: u64, n: u64) -> Result<u64> {
    positive(&[m, n])?;
    let (m, n) = (m as i128, n as i128);
    // 3·(M²N − MN²) + N³ = (N − M)³ + M³ ≥ 0
    let num = 4 * (3 * m * m * n - 3 * m * n * n + n * n * n);
    to_u64(((num + 2) / 3) as u128)
}

/// `4M²N + 13N³`.
pub fn flops_svd_su(m: u64, n: u64) -> Result<u64> {
    positive(&[m, n])?;
    let (m, n) = (m as u128, n as u128);
    to_u64(4 * m * m * n + 13 * n * n * n)
}

/// `2MN² + 13N³`.
pub fn flops_svd_sv(m: u64, n: u64) -> Result<u64> {
    positive(&[m, n])?;
    let (m, n) = (m as u128, n as u128);
    to_u64(2 * m * n * n + 13 * n * n * n)
}

/// Dimensions that drive every cost composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CostConfig {
    pub nt: u64,
    pub v_a: u64,
    pub v_e: u64,
    pub m: u64,
    pub s: u64,
    pub n_rb: u64,
    pub n_sc: u64,
    pub n_pol: u64,
}

impl CostConfig {
    /// Dual-polarized `n_a × n_e` array.
    pub fn planar(n_a: u64, n_e: u64, n_pol: u64, m: u64, s: u64, n_rb: u64, n_sc: u64) -> Self {
        Self {
            nt: n_a * n_e * n_pol,
            v_a: n_a * n_pol,
            v_e: n_e,
            m,
            s,
            n_rb,
            n_sc,
            n_pol,
        }
    }

    /// 8×8 dual-pol, `M = 8`, `S = 2`, one RB of 12 subcarriers.
    pub fn reference() -> Self {
        Self::planar(8, 8, 2, 8, 2, 1, 12)
    }

    pub fn n_subcarriers(&self) -> u64 {
        self.n_rb * self.n_sc
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("nt", self.nt),
            ("v_a", self.v_a),
            ("v_e", self.v_e),
            ("m", self.m),
            ("s", self.s),
            ("n_rb", self.n_rb),
            ("n_sc", self.n_sc),
            ("n_pol", self.n_pol),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return arg(format!("cost config field `{name}` must be positive"));
        }
        if self.v_a.checked_mul(self.v_e) != Some(self.nt) {
            return arg(format!(
                "v_a·v_e = {}·{} does not equal nt = {}",
                self.v_a, self.v_e, self.nt
            ));
        }
        if !self.v_a.is_multiple_of(self.n_pol) {
            return arg(format!("n_pol = {} does not divide v_a = {}", self.n_pol, self.v_a));
        }
        if self.s > self.m.min(self.nt) {
            return arg(format!("s = {} exceeds min(m, nt)", self.s));
        }
        Ok(())
    }
}

/// One line of a composition: `count` applications of `primitive` on `dims`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub step: &'static str,
    pub primitive: Primitive,
    pub dims: Vec<u64>,
    pub count: u64,
}

impl Term {
    fn new(step: &'static str, primitive: Primitive, dims: &[u64], count: u64) -> Self {
        Self {
            step,
            primitive,
            dims: dims.to_vec(),
            count,
        }
    }

    pub fn flops(&self) -> Result<u64> {
        if self.count == 0 {
            return Ok(0);
        }
        self.primitive
            .cost(&self.dims)?
            .checked_mul(self.count)
            .ok_or_else(overflow)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostBreakdown {
    pub method: Method,
    pub config: CostConfig,
    pub terms: Vec<Term>,
    /// Every primitive label, zero when unused.
    pub by_label: BTreeMap<&'static str, u64>,
    pub total: u64,
    /// Number of eigendecompositions in the composition.
    pub svd_calls: u64,
}

impl CostBreakdown {
    fn from_terms(method: Method, config: CostConfig, terms: Vec<Term>) -> Result<Self> {
        let mut by_label: BTreeMap<&'static str, u64> =
            Primitive::ALL.iter().map(|p| (p.label(), 0)).collect();
        let mut total = 0u64;
        let mut svd_calls = 0u64;
        for t in &terms {
            let f = t.flops()?;
            let slot = by_label.get_mut(t.primitive.label()).expect("all labels seeded");
            *slot = slot.checked_add(f).ok_or_else(overflow)?;
            total = total.checked_add(f).ok_or_else(overflow)?;
            if t.primitive.is_decomposition() {
                svd_calls += t.count;
            }
        }
        Ok(Self {
            method,
            config,
            terms,
            by_label,
            total,
            svd_calls,
        })
    }

    pub fn get(&self, p: Primitive) -> u64 {
        self.by_label[p.label()]
    }

    /// `label=value` lines.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "method={}\nnt={}\nv_a={}\nv_e={}\nm={}\ns={}\nn_rb={}\nn_sc={}\nn_pol={}\n",
            self.method, c.nt, c.v_a, c.v_e, c.m, c.s, c.n_rb, c.n_sc, c.n_pol
        );
        for p in Primitive::ALL {
            out.push_str(&format!("{}={}\n", p.label(), self.get(p)));
        }
        out.push_str(&format!("svd_calls={}\ntotal={}\n", self.svd_calls, self.total));
        out
    }
}

impl fmt::Display for CostBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

pub fn cost_direct(cfg: &CostConfig) -> Result<CostBreakdown> {
    cfg.validate()?;
    let n = cfg.n_subcarriers();
    let nt = cfg.nt;
    let terms = vec![
        Term::new("correlation", Primitive::Gram, &[nt, cfg.m], n),
        Term::new("average", Primitive::Sum, &[nt, nt], n - 1),
        Term::new("average", Primitive::Scale, &[nt, nt], 1),
        Term::new("eigen", Primitive::SvdSv, &[nt, nt], 1),
    ];
    CostBreakdown::from_terms(Method::Direct, *cfg, terms)
}

/// Shared composition of the Kronecker-factored methods. `group_sizes`
/// holds the number of array columns pooled into each elevation
/// correlation.
fn kronecker_terms(cfg: &CostConfig, group_sizes: &[u64]) -> Vec<Term> {
    let n = cfg.n_subcarriers();
    let (v_a, v_e, m) = (cfg.v_a, cfg.v_e, cfg.m);
    let mut terms = vec![Term::new(
        "elevation correlation",
        Primitive::Gram,
        &[v_e, m],
        n * v_a,
    )];
    for &g in group_sizes {
        terms.push(Term::new("elevation average", Primitive::Sum, &[v_e, v_e], n * g - 1));
        terms.push(Term::new("elevation average", Primitive::Scale, &[v_e, v_e], 1));
    }
    terms.extend([
        Term::new(
            "elevation eigen",
            Primitive::SvdSv,
            &[v_e, v_e],
            group_sizes.len() as u64,
        ),
        // Block-diagonal projection: V_A independent (M × V_E)(V_E × 1).
        Term::new("equivalent channel", Primitive::Matmul, &[m, v_e, 1], n * v_a),
        Term::new("azimuth correlation", Primitive::Gram, &[v_a, m], n),
        Term::new("azimuth average", Primitive::Sum, &[v_a, v_a], n - 1),
        Term::new("azimuth average", Primitive::Scale, &[v_a, v_a], 1),
        Term::new("azimuth eigen", Primitive::SvdSv, &[v_a, v_a], 1),
        Term::new("recomposition", Primitive::Scale, &[cfg.s, cfg.nt], 1),
    ]);
    terms
}

pub fn cost_method1(cfg: &CostConfig) -> Result<CostBreakdown> {
    cfg.validate()?;
    let terms = kronecker_terms(cfg, &[cfg.v_a]);
    CostBreakdown::from_terms(Method::Method1, *cfg, terms)
}

pub fn cost_method2(cfg: &CostConfig) -> Result<CostBreakdown> {
    cfg.validate()?;
    let terms = kronecker_terms(cfg, &vec![1; cfg.v_a as usize]);
    CostBreakdown::from_terms(Method::Method2, *cfg, terms)
}

pub fn cost_method3(cfg: &CostConfig) -> Result<CostBreakdown> {
    cfg.validate()?;
    let per_pol = cfg.v_a / cfg.n_pol;
    let terms = kronecker_terms(cfg, &vec![per_pol; cfg.n_pol as usize]);
    CostBreakdown::from_terms(Method::Method3, *cfg, terms)
}

pub fn cost(method: Method, cfg: &CostConfig) -> Result<CostBreakdown> {
    match method {
        Method::Direct => cost_direct(cfg),
        Method::Method1 => cost_method1(cfg),
        Method::Method2 => cost_method2(cfg),
        Method::Method3 => cost_method3(cfg),
    }
}

/// `cost(method).total / cost_direct.total`.
pub fn ratio_to_direct(method: Method, cfg: &CostConfig) -> Result<f64> {
    Ok(cost(method, cfg)?.total as f64 / cost_direct(cfg)?.total as f64)
}

/// One row of a geometry sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: CostConfig,
    pub method: Method,
    pub total: u64,
    pub ratio: f64,
}

/// Costs every method on every configuration, in input order.
pub fn sweep(configs: &[CostConfig], methods: &[Method]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(configs.len() * methods.len());
    for cfg in configs {
        let direct = cost_direct(cfg)?.total as f64;
        for &method in methods {
            let total = cost(method, cfg)?.total;
            rows.push(SweepRow {
                config: *cfg,
                method,
                total,
                ratio: total as f64 / direct,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent evaluation of the published expressions in f64 rationals.
    fn gram_expr(m: f64, n: f64) -> f64 {
        m * m * n + m * (n - m / 2.0) - m / 2.0
    }

    #[test]
    fn primitive_spot_values() {
        assert_eq!(flops_gram(1, 1).unwrap(), 1);
        assert_eq!(flops_gram(2, 4).unwrap(), 21);
        assert_eq!(flops_matmul(2, 2, 2).unwrap(), 12);
        assert_eq!(flops_svd_sv(8, 8).unwrap(), 7680);
        assert_eq!(flops_svd_sv(128, 128).unwrap(), 31_457_280);
        assert_eq!(flops_scale(3, 5).unwrap(), 15);
        assert_eq!(flops_sum(3, 5).unwrap(), 15);
        assert_eq!(flops_svd_su(2, 3).unwrap(), 4 * 4 * 3 + 13 * 27);
        assert_eq!(flops_qr(3, 3).unwrap(), 36);
    }

    #[test]
    fn rejects_zero_dimensions() {
        assert!(flops_gram(0, 3).is_err());
        assert!(flops_matmul(1, 0, 1).is_err());
        assert!(flops_svd_sv(4, 0).is_err());
        assert!(Primitive::Matmul.cost(&[1, 2]).is_err());
    }

    proptest! {
        #[test]
        fn gram_matches_rational_expression(m in 1u64..=512, n in 1u64..=512) {
            let exact = gram_expr(m as f64, n as f64);
            prop_assert_eq!(exact.fract(), 0.0);
            prop_assert_eq!(flops_gram(m, n).unwrap(), exact as u64);
        }

        #[test]
        fn qr_is_ceiling_of_rational(m in 1u64..=512, n in 1u64..=512) {
            let (mf, nf) = (m as f64, n as f64);
            let exact = 4.0 * (mf * mf * nf - mf * nf * nf + nf * nf * nf / 3.0);
            let got = flops_qr(m, n).unwrap() as f64;
            prop_assert!(got >= exact - 1e-6 && got < exact + 1.0);
        }

        #[test]
        fn breakdown_total_is_sum_of_parts(n_a in 1u64..12, n_e in 1u64..12, pol in 1u64..=2, n_rb in 1u64..5) {
            let cfg = CostConfig::planar(n_a, n_e, pol, 4, 1, n_rb, 12);
            for m in Method::ALL {
                let c = cost(m, &cfg).unwrap();
                prop_assert_eq!(c.by_label.values().sum::<u64>(), c.total);
                let from_terms: u64 = c.terms.iter().map(|t| t.flops().unwrap()).sum();
                prop_assert_eq!(from_terms, c.total);
            }
            prop_assert!(cost_method2(&cfg).unwrap().total >= cost_method1(&cfg).unwrap().total);
        }
    }

    #[test]
    fn direct_spot_values() {
        let cfg = CostConfig {
            n_rb: 1,
            n_sc: 1,
            ..CostConfig::reference()
        };
        let c = cost_direct(&cfg).unwrap();
        assert_eq!(c.get(Primitive::Sum), 0);
        assert_eq!(c.get(Primitive::SvdSv), 31_457_280);
        assert_eq!(c.svd_calls, 1);
    }

    #[test]
    fn direct_increases_with_nt_and_tends_to_15_nt_cubed() {
        let mut prev = 0;
        for nt in 1..200u64 {
            let cfg = CostConfig {
                nt,
                v_a: nt,
                v_e: 1,
                m: 1,
                s: 1,
                n_rb: 1,
                n_sc: 12,
                n_pol: 1,
            };
            let t = cost_direct(&cfg).unwrap().total;
            assert!(t > prev);
            prev = t;
        }
        let nt = 1u64 << 14;
        let cfg = CostConfig {
            nt,
            v_a: nt,
            v_e: 1,
            m: 8,
            s: 2,
            n_rb: 1,
            n_sc: 12,
            n_pol: 1,
        };
        let r = cost_direct(&cfg).unwrap().total as f64 / (nt as f64).powi(3);
        assert!((r - 15.0).abs() < 0.05, "{r}");
    }

    #[test]
    fn svd_call_counts() {
        let cfg = CostConfig::reference();
        assert_eq!(cost_direct(&cfg).unwrap().svd_calls, 1);
        assert_eq!(cost_method1(&cfg).unwrap().svd_calls, 2);
        assert_eq!(cost_method2(&cfg).unwrap().svd_calls, cfg.v_a + 1);
        assert_eq!(cost_method3(&cfg).unwrap().svd_calls, cfg.n_pol + 1);
    }

    #[test]
    fn reference_ratios_below_ten_percent() {
        let cfg = CostConfig::reference();
        for m in [Method::Method1, Method::Method2, Method::Method3] {
            let r = ratio_to_direct(m, &cfg).unwrap();
            assert!(r < 0.10, "{m}: {r}");
        }
    }

    #[test]
    fn method_differences_match_decomposition_count() {
        let cfg = CostConfig::reference();
        let m1 = cost_method1(&cfg).unwrap().total;
        let m2 = cost_method2(&cfg).unwrap().total;
        let m3 = cost_method3(&cfg).unwrap().total;
        let one_eig = flops_svd_sv(cfg.v_e, cfg.v_e).unwrap();
        assert_eq!(m2 - m1, (cfg.v_a - 1) * one_eig);
        assert_eq!(m3 - m1, (cfg.n_pol - 1) * one_eig);
        assert!(m3.abs_diff(m1) < m2 - m1);
    }

    #[test]
    fn ratio_non_increasing_on_square_family() {
        for m in [Method::Method1, Method::Method2, Method::Method3] {
            let mut prev = f64::INFINITY;
            for n in 4..=16 {
                let r = ratio_to_direct(m, &CostConfig::planar(n, n, 2, 8, 2, 1, 12)).unwrap();
                assert!(r <= prev, "{m} at n={n}: {r} > {prev}");
                prev = r;
            }
        }
    }

    #[test]
    fn method1_grows_slower_than_direct() {
        // Kronecker cost is polynomial in the factor sizes; doubling both
        // factors multiplies it by far less than the 64× of a cubic in Nt.
        let small = cost_method1(&CostConfig::planar(8, 8, 1, 8, 2, 1, 12)).unwrap().total;
        let big = cost_method1(&CostConfig::planar(16, 16, 1, 8, 2, 1, 12)).unwrap().total;
        assert!((big as f64 / small as f64) < 16.0);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = CostConfig::reference();
        cfg.nt = 100;
        assert!(cost_direct(&cfg).is_err());
        let mut cfg = CostConfig::reference();
        cfg.n_pol = 3;
        assert!(cost_method3(&cfg).is_err());
        let mut cfg = CostConfig::reference();
        cfg.s = 9;
        assert!(cost_method1(&cfg).is_err());
    }

    #[test]
    fn sweep_and_text() {
        let rows = sweep(&[CostConfig::reference()], &Method::ALL).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].ratio, 1.0);
        let text = cost_method1(&CostConfig::reference()).unwrap().to_text();
        assert!(text.contains("svd_calls=2\n"));
        assert!(text.lines().all(|l| l.split_once('=').is_some()));
        for p in Primitive::ALL {
            assert!(text.contains(&format!("{}=", p.label())));
        }
    }
}
