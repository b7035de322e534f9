//! Effective-channel reconstruction per precoding unit.
//!
//! Every method maps the `N_RB·N_SC` subcarrier channels (`M × Nt`) of one
//! user in one precoding unit to an `S × Nt` matrix with orthonormal rows.
//!
//! * [`direct_svd`] eigendecomposes the full `Nt × Nt` averaged correlation.
//! * [`method1`], [`method2`] and [`method3`] factor the array into `V_A`
//!   columns of `V_E` elements. An elevation stage extracts one dominant
//!   `V_E` vector per column group (all columns, each column, or each
//!   polarization), the channel is projected onto those vectors to give an
//!   `M × V_A` azimuth channel, and an azimuth stage extracts `S` dominant
//!   `V_A` vectors. Row `i` of the result is the azimuth vector `i` spread over
//!   the columns, each column scaled onto its group's elevation vector.
//!
//! Column `v` occupies array indices `v·V_E .. (v+1)·V_E`, which matches the
//! element map of [`crate::channel::ArrayGeometry`].

use std::fmt;
use std::str::FromStr;

use crate::error::{arg, Error, Result};
use crate::linalg::{
    accumulate_adjoint_gram, accumulate_block_adjoint_gram, adjoint_of_columns, hermitian_eig,
    matmul, ComplexMatrix, C64,
};

/// A stream whose eigenvalue falls below this fraction of the dominant one is
/// treated as absent.
pub const DEGENERATE_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Full-array eigen-beamforming.
    Direct,
    /// One elevation vector shared by all columns.
    Method1,
    /// One elevation vector per column.
    Method2,
    /// One elevation vector per polarization group.
    Method3,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Direct,
        Method::Method1,
        Method::Method2,
        Method::Method3,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Method1 => "method1",
            Method::Method2 => "method2",
            Method::Method3 => "method3",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" | "direct_svd" | "svd" => Ok(Method::Direct),
            "method1" | "i" | "m1" => Ok(Method::Method1),
            "method2" | "ii" | "m2" => Ok(Method::Method2),
            "method3" | "iii" | "m3" => Ok(Method::Method3),
            other => arg(format!("unknown method `{other}`")),
        }
    }
}

/// The channels of one user inside one precoding unit.
#[derive(Debug, Clone, Copy)]
pub struct PuView<'a> {
    channels: &'a [ComplexMatrix],
    v_a: usize,
    v_e: usize,
    streams: usize,
    column_groups: Option<&'a [usize]>,
}

impl<'a> PuView<'a> {
    pub fn new(channels: &'a [ComplexMatrix], v_a: usize, v_e: usize, streams: usize) -> Result<Self> {
        let Some(first) = channels.first() else {
            return arg("precoding unit holds no subcarriers");
        };
        let (m, nt) = first.shape();
        if channels.iter().any(|h| h.shape() != (m, nt)) {
            return arg("subcarrier channels differ in shape");
        }
        if v_a == 0 || v_e == 0 || v_a * v_e != nt {
            return arg(format!("V_A={v_a} × V_E={v_e} does not equal Nt={nt}"));
        }
        if streams == 0 || streams > m.min(nt) {
            return arg(format!(
                "stream count {streams} outside 1..={}",
                m.min(nt)
            ));
        }
        Ok(Self {
            channels,
            v_a,
            v_e,
            streams,
            column_groups: None,
        })
    }

    /// Attaches the polarization group of each column (used by [`method3`]).
    pub fn with_groups(mut self, groups: &'a [usize]) -> Result<Self> {
        if groups.len() != self.v_a {
            return arg(format!(
                "{} column groups given for {} columns",
                groups.len(),
                self.v_a
            ));
        }
        let n_groups = groups.iter().max().map_or(0, |g| g + 1);
        if (0..n_groups).any(|g| !groups.contains(&g)) {
            return arg("column group ids must be contiguous from 0");
        }
        self.column_groups = Some(groups);
        Ok(self)
    }

    pub fn channels(&self) -> &'a [ComplexMatrix] {
        self.channels
    }

    pub fn nt(&self) -> usize {
        self.v_a * self.v_e
    }

    pub fn m(&self) -> usize {
        self.channels[0].rows()
    }

    pub fn v_a(&self) -> usize {
        self.v_a
    }

    pub fn v_e(&self) -> usize {
        self.v_e
    }

    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn column_groups(&self) -> Option<&'a [usize]> {
        self.column_groups
    }
}

/// Reconstructed `S × Nt` channel with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    /// Rows are orthonormal; row `i` is stream `i`.
    pub matrix: ComplexMatrix,
    pub method: Method,
    /// Dominant eigenvalues of the stream stage (full or azimuth correlation).
    pub eigenvalues: Vec<f64>,
    /// Dominant eigenvalue of each elevation group (empty for direct).
    pub elevation_eigenvalues: Vec<f64>,
    /// Number of eigendecompositions performed.
    pub eig_calls: usize,
}

/// `R = (1/N) Σ_n H_n^H H_n` over the unit's subcarriers.
pub fn average_correlation(pu: &PuView<'_>) -> ComplexMatrix {
    let nt = pu.nt();
    let mut r = ComplexMatrix::zeros(nt, nt);
    for h in pu.channels {
        accumulate_adjoint_gram(&mut r, h).expect("validated shapes");
    }
    r.scale_real_in_place(1.0 / pu.channels.len() as f64);
    r
}

/// `trace(Ĥ R Ĥ^H)`: correlation energy captured by the effective rows.
pub fn captured_energy(effective: &ComplexMatrix, r: &ComplexMatrix) -> Result<f64> {
    let hr = matmul(effective, r)?;
    let mut acc = 0.0;
    for i in 0..effective.rows() {
        let t: C64 = hr
            .row(i)
            .iter()
            .zip(effective.row(i))
            .map(|(a, b)| a * b.conj())
            .sum();
        acc += t.re;
    }
    Ok(acc)
}

fn check_rank(values: &[f64], streams: usize) -> Result<()> {
    let dominant = values[0];
    let floor = DEGENERATE_RATIO * dominant;
    let degenerate = if !(dominant > 0.0) {
        true
    } else {
        let below = |i: usize| values.get(i).is_none_or(|&v| v < floor);
        below(streams - 1) && below(streams)
    };
    if degenerate {
        return Err(Error::DegenerateRank {
            streams,
            index: streams,
            value: values[streams - 1],
            dominant,
        });
    }
    Ok(())
}

/// Full-array eigen-beamforming on the averaged `Nt × Nt` correlation.
pub fn direct_svd(pu: &PuView<'_>) -> Result<EffectiveChannel> {
    let r = average_correlation(pu);
    let s = pu.streams;
    let eig = hermitian_eig(&r, (s + 1).min(pu.nt()))?;
    check_rank(&eig.values, s)?;
    let columns: Vec<Vec<C64>> = (0..s).map(|i| eig.vector(i)).collect();
    Ok(EffectiveChannel {
        matrix: adjoint_of_columns(&columns)?,
        method: Method::Direct,
        eigenvalues: eig.values[..s].to_vec(),
        elevation_eigenvalues: Vec::new(),
        eig_calls: 1,
    })
}

/// Shared elevation vector over all columns.
pub fn method1(pu: &PuView<'_>) -> Result<EffectiveChannel> {
    let groups = vec![0; pu.v_a];
    kronecker(pu, &groups, Method::Method1)
}

/// Per-column elevation vectors.
pub fn method2(pu: &PuView<'_>) -> Result<EffectiveChannel> {
    let groups: Vec<usize> = (0..pu.v_a).collect();
    kronecker(pu, &groups, Method::Method2)
}

/// Per-polarization elevation vectors; needs column groups on the view.
pub fn method3(pu: &PuView<'_>) -> Result<EffectiveChannel> {
    let groups = pu
        .column_groups
        .ok_or_else(|| Error::Argument("method3 needs polarization groups".into()))?;
    kronecker(pu, groups, Method::Method3)
}

pub fn reconstruct(method: Method, pu: &PuView<'_>) -> Result<EffectiveChannel> {
    match method {
        Method::Direct => direct_svd(pu),
        Method::Method1 => method1(pu),
        Method::Method2 => method2(pu),
        Method::Method3 => method3(pu),
    }
}

fn kronecker(pu: &PuView<'_>, groups: &[usize], method: Method) -> Result<EffectiveChannel> {
    let (v_a, v_e, s) = (pu.v_a, pu.v_e, pu.streams);
    if s > v_a {
        return arg(format!("{s} streams exceed the {v_a} azimuth columns"));
    }
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    let n_sub = pu.channels.len() as f64;

    // Elevation stage: one correlation per group, averaged over its columns
    // and all subcarriers.
    let mut corr = vec![ComplexMatrix::zeros(v_e, v_e); n_groups];
    let mut members = vec![0usize; n_groups];
    for &g in groups {
        members[g] += 1;
    }
    for h in pu.channels {
        for (v, &g) in groups.iter().enumerate() {
            accumulate_block_adjoint_gram(&mut corr[g], h, v * v_e)?;
        }
    }
    let mut elevation = Vec::with_capacity(n_groups);
    let mut elevation_values = Vec::with_capacity(n_groups);
    for (g, r) in corr.iter_mut().enumerate() {
        r.scale_real_in_place(1.0 / (n_sub * members[g] as f64));
        let eig = hermitian_eig(r, 1)?;
        elevation_values.push(eig.values[0]);
        elevation.push(eig.vector(0));
    }

    // Equivalent azimuth channel H̄[:, v] = H_v · e_{g(v)}.
    let m = pu.m();
    let mut r_az = ComplexMatrix::zeros(v_a, v_a);
    let mut h_bar = ComplexMatrix::zeros(m, v_a);
    for h in pu.channels {
        for row in 0..m {
            let src = h.row(row);
            let dst = h_bar.row_mut(row);
            for (v, &g) in groups.iter().enumerate() {
                let e = &elevation[g];
                dst[v] = src[v * v_e..(v + 1) * v_e]
                    .iter()
                    .zip(e)
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
        accumulate_adjoint_gram(&mut r_az, &h_bar)?;
    }
    r_az.scale_real_in_place(1.0 / n_sub);

    let eig = hermitian_eig(&r_az, (s + 1).min(v_a))?;
    check_rank(&eig.values, s)?;

    // Recomposition: stream i, column v → a_i[v] · e_{g(v)}.
    let mut rows = Vec::with_capacity(s);
    for i in 0..s {
        let a = eig.vector(i);
        let mut x = Vec::with_capacity(v_a * v_e);
        for (v, &g) in groups.iter().enumerate() {
            x.extend(elevation[g].iter().map(|&e| (a[v] * e).conj()));
        }
        rows.push(x);
    }
    Ok(EffectiveChannel {
        matrix: ComplexMatrix::from_rows(&rows)?,
        method,
        eigenvalues: eig.values[..s].to_vec(),
        elevation_eigenvalues: elevation_values,
        eig_calls: n_groups + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron_vec, principal_angle, ComplexMatrix};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    struct Lcg(u64);
    impl Lcg {
        fn next(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        }
        fn cvec(&mut self, n: usize) -> Vec<C64> {
            (0..n).map(|_| c(self.next(), self.next())).collect()
        }
        fn unit(&mut self, n: usize) -> Vec<C64> {
            let v = self.cvec(n);
            let norm = crate::linalg::vec_norm(&v);
            v.into_iter().map(|z| z / norm).collect()
        }
        fn matrix(&mut self, r: usize, cc: usize) -> ComplexMatrix {
            ComplexMatrix::from_fn(r, cc, |_, _| c(self.next(), self.next()))
        }
    }

    fn outer_adjoint(g: &[C64], x: &[C64]) -> ComplexMatrix {
        ComplexMatrix::from_fn(g.len(), x.len(), |i, j| g[i] * x[j].conj())
    }

    fn rows_as_columns(h: &ComplexMatrix) -> ComplexMatrix {
        h.conj_transpose()
    }

    fn angle(a: &EffectiveChannel, b: &EffectiveChannel) -> f64 {
        principal_angle(&rows_as_columns(&a.matrix), &rows_as_columns(&b.matrix)).unwrap()
    }

    fn orthonormal_error(h: &ComplexMatrix) -> f64 {
        crate::linalg::gram(h)
            .sub(&ComplexMatrix::identity(h.rows()))
            .unwrap()
            .max_abs()
    }

    #[test]
    fn rank_one_exact_recovery() {
        let mut rng = Lcg(1);
        let (u, v) = (rng.unit(3), rng.unit(8));
        let h = outer_adjoint(&u.iter().map(|z| z * 2.5).collect::<Vec<_>>(), &v);
        let pu = PuView::new(std::slice::from_ref(&h), 4, 2, 1).unwrap();
        let eff = direct_svd(&pu).unwrap();
        // The phase convention applies to the eigenvector, i.e. to conj(row).
        let mut col = v.clone();
        crate::linalg::fix_phase(&mut col);
        let expected: Vec<C64> = col.iter().map(|z| z.conj()).collect();
        for (a, b) in eff.matrix.row(0).iter().zip(&expected) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!((eff.eigenvalues[0] - 6.25).abs() < 1e-12);
    }

    #[test]
    fn constant_unit_matches_single_subcarrier() {
        let mut rng = Lcg(2);
        let h = rng.matrix(2, 8);
        let many = vec![h.clone(); 5];
        let a = direct_svd(&PuView::new(std::slice::from_ref(&h), 4, 2, 2).unwrap()).unwrap();
        let b = direct_svd(&PuView::new(&many, 4, 2, 2).unwrap()).unwrap();
        assert!(a.matrix.sub(&b.matrix).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn direct_matches_independent_eigensolver() {
        use nalgebra::{Complex, DMatrix, SymmetricEigen};
        let mut rng = Lcg(3);
        let chans: Vec<ComplexMatrix> = (0..4).map(|_| rng.matrix(2, 8)).collect();
        let pu = PuView::new(&chans, 4, 2, 2).unwrap();
        let eff = direct_svd(&pu).unwrap();

        // Oracle: R assembled with nalgebra products, eigendecomposed by
        // nalgebra's Hermitian solver.
        let mut r = DMatrix::<Complex<f64>>::zeros(8, 8);
        for h in &chans {
            let m = DMatrix::from_row_slice(2, 8, h.data());
            r += m.adjoint() * m;
        }
        r /= Complex::new(4.0, 0.0);
        let eig = SymmetricEigen::new(r);
        let mut order: Vec<usize> = (0..8).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let cols: Vec<Vec<C64>> = order[..2]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        let oracle = ComplexMatrix::from_columns(&cols).unwrap();
        let got = rows_as_columns(&eff.matrix);
        assert!(principal_angle(&got, &oracle).unwrap() < 1e-8);
        for (k, &i) in order[..2].iter().enumerate() {
            assert!((eff.eigenvalues[k] - eig.eigenvalues[i]).abs() < 1e-10);
        }
    }

    fn separable(rng: &mut Lcg, v_a: usize, v_e: usize, m: usize, n_sub: usize) -> Vec<ComplexMatrix> {
        let a = rng.unit(v_a);
        let e = rng.unit(v_e);
        let x = kron_vec(&a, &e).unwrap();
        (0..n_sub).map(|_| outer_adjoint(&rng.cvec(m), &x)).collect()
    }

    #[test]
    fn separable_rank_one_agrees_with_direct() {
        let mut rng = Lcg(4);
        let chans = separable(&mut rng, 4, 3, 2, 3);
        let groups = [0, 0, 1, 1];
        let pu = PuView::new(&chans, 4, 3, 1).unwrap().with_groups(&groups).unwrap();
        let d = direct_svd(&pu).unwrap();
        for m in [Method::Method1, Method::Method2, Method::Method3] {
            let eff = reconstruct(m, &pu).unwrap();
            assert!(angle(&d, &eff) < 1e-8, "{m}");
        }
    }

    #[test]
    fn single_elevation_row_reduces_to_direct() {
        let mut rng = Lcg(5);
        let chans: Vec<ComplexMatrix> = (0..3).map(|_| rng.matrix(3, 6)).collect();
        let pu = PuView::new(&chans, 6, 1, 2).unwrap();
        let d = direct_svd(&pu).unwrap();
        let m1 = method1(&pu).unwrap();
        assert_eq!(d.matrix, m1.matrix);
    }

    #[test]
    fn single_column_method2_equals_method1() {
        let mut rng = Lcg(6);
        let chans: Vec<ComplexMatrix> = (0..3).map(|_| rng.matrix(2, 5)).collect();
        let pu = PuView::new(&chans, 1, 5, 1).unwrap();
        assert_eq!(method1(&pu).unwrap().matrix, method2(&pu).unwrap().matrix);
    }

    #[test]
    fn shared_elevation_statistics_make_method2_match_method1() {
        let mut rng = Lcg(7);
        let e = rng.unit(4);
        let (a1, a2) = (rng.unit(6), rng.unit(6));
        let x1 = kron_vec(&a1, &e).unwrap();
        let x2 = kron_vec(&a2, &e).unwrap();
        let chans: Vec<ComplexMatrix> = (0..4)
            .map(|_| {
                let mut h = outer_adjoint(&rng.cvec(3), &x1);
                h.add_assign(&outer_adjoint(&rng.cvec(3), &x2)).unwrap();
                h
            })
            .collect();
        let pu = PuView::new(&chans, 6, 4, 2).unwrap();
        let a = method1(&pu).unwrap();
        let b = method2(&pu).unwrap();
        assert!(angle(&a, &b) < 1e-6);
    }

    #[test]
    fn method3_grouping_extremes() {
        let mut rng = Lcg(8);
        let chans: Vec<ComplexMatrix> = (0..2).map(|_| rng.matrix(4, 12)).collect();
        let base = PuView::new(&chans, 4, 3, 2).unwrap();
        let one = [0, 0, 0, 0];
        let each = [0, 1, 2, 3];
        let m3_one = method3(&base.with_groups(&one).unwrap()).unwrap();
        let m3_each = method3(&base.with_groups(&each).unwrap()).unwrap();
        assert_eq!(m3_one.matrix, method1(&base).unwrap().matrix);
        assert_eq!(m3_each.matrix, method2(&base).unwrap().matrix);
        assert!(matches!(method3(&base), Err(Error::Argument(_))));
    }

    #[test]
    fn rows_orthonormal_for_every_method() {
        let mut rng = Lcg(9);
        let chans: Vec<ComplexMatrix> = (0..3).map(|_| rng.matrix(4, 32)).collect();
        let groups = [0, 0, 0, 0, 1, 1, 1, 1];
        let pu = PuView::new(&chans, 8, 4, 3).unwrap().with_groups(&groups).unwrap();
        for m in Method::ALL {
            let eff = reconstruct(m, &pu).unwrap();
            assert_eq!(eff.matrix.shape(), (3, 32));
            assert!(orthonormal_error(&eff.matrix) < 1e-9, "{m}");
        }
    }

    #[test]
    fn eig_call_counts() {
        let mut rng = Lcg(10);
        let chans: Vec<ComplexMatrix> = (0..2).map(|_| rng.matrix(4, 32)).collect();
        let groups = [0, 0, 0, 0, 1, 1, 1, 1];
        let pu = PuView::new(&chans, 8, 4, 2).unwrap().with_groups(&groups).unwrap();
        assert_eq!(direct_svd(&pu).unwrap().eig_calls, 1);
        assert_eq!(method1(&pu).unwrap().eig_calls, 2);
        assert_eq!(method2(&pu).unwrap().eig_calls, 9);
        assert_eq!(method3(&pu).unwrap().eig_calls, 3);
    }

    #[test]
    fn scaling_leaves_outputs_unchanged() {
        let mut rng = Lcg(11);
        let chans: Vec<ComplexMatrix> = (0..3).map(|_| rng.matrix(3, 12)).collect();
        let scaled: Vec<ComplexMatrix> = chans.iter().map(|h| h.scale(c(-1.7, 0.9))).collect();
        let groups = [0, 0, 1, 1];
        for m in Method::ALL {
            let a = reconstruct(m, &PuView::new(&chans, 4, 3, 2).unwrap().with_groups(&groups).unwrap()).unwrap();
            let b = reconstruct(m, &PuView::new(&scaled, 4, 3, 2).unwrap().with_groups(&groups).unwrap()).unwrap();
            assert!(a.matrix.sub(&b.matrix).unwrap().max_abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn subcarrier_order_is_irrelevant() {
        let mut rng = Lcg(12);
        let chans: Vec<ComplexMatrix> = (0..4).map(|_| rng.matrix(3, 12)).collect();
        let mut rev = chans.clone();
        rev.reverse();
        let groups = [0, 0, 1, 1];
        for m in Method::ALL {
            let a = reconstruct(m, &PuView::new(&chans, 4, 3, 2).unwrap().with_groups(&groups).unwrap()).unwrap();
            let b = reconstruct(m, &PuView::new(&rev, 4, 3, 2).unwrap().with_groups(&groups).unwrap()).unwrap();
            assert!(a.matrix.sub(&b.matrix).unwrap().max_abs() < 1e-9, "{m}");
        }
    }

    #[test]
    fn direct_captures_most_energy() {
        let mut rng = Lcg(13);
        for _ in 0..10 {
            let chans: Vec<ComplexMatrix> = (0..3).map(|_| rng.matrix(4, 16)).collect();
            let groups = [0, 0, 1, 1];
            let pu = PuView::new(&chans, 4, 4, 2).unwrap().with_groups(&groups).unwrap();
            let r = average_correlation(&pu);
            let best = captured_energy(&direct_svd(&pu).unwrap().matrix, &r).unwrap();
            for m in [Method::Method1, Method::Method2, Method::Method3] {
                let e = captured_energy(&reconstruct(m, &pu).unwrap().matrix, &r).unwrap();
                assert!(best >= e - 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_rank_is_reported() {
        let mut rng = Lcg(14);
        let chans = separable(&mut rng, 4, 2, 3, 2);
        let pu = PuView::new(&chans, 4, 2, 2).unwrap();
        for m in [Method::Direct, Method::Method1, Method::Method2] {
            assert!(matches!(reconstruct(m, &pu), Err(Error::DegenerateRank { .. })), "{m}");
        }
        let zero = vec![ComplexMatrix::zeros(2, 4)];
        let pu = PuView::new(&zero, 2, 2, 1).unwrap();
        assert!(matches!(direct_svd(&pu), Err(Error::DegenerateRank { .. })));
    }

    #[test]
    fn invalid_views_rejected() {
        let h = ComplexMatrix::zeros(2, 8);
        assert!(PuView::new(&[], 4, 2, 1).is_err());
        assert!(PuView::new(std::slice::from_ref(&h), 3, 2, 1).is_err());
        assert!(PuView::new(std::slice::from_ref(&h), 4, 2, 3).is_err());
        assert!(PuView::new(std::slice::from_ref(&h), 4, 2, 0).is_err());
        let pu = PuView::new(std::slice::from_ref(&h), 4, 2, 1).unwrap();
        assert!(pu.with_groups(&[0, 0, 2, 2]).is_err());
        assert!(pu.with_groups(&[0, 1]).is_err());
        let narrow = PuView::new(std::slice::from_ref(&h), 1, 8, 2).unwrap();
        assert!(matches!(method1(&narrow), Err(Error::Argument(_))));
    }

    #[test]
    fn method_labels_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("III".parse::<Method>().unwrap(), Method::Method3);
        assert!("method4".parse::<Method>().is_err());
    }
}
