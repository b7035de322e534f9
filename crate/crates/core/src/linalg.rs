//! Dense complex matrix kernel.
//!
//! Everything downstream (correlation averaging, eigen-beamforming, ZF
//! precoding, MMSE-IRC combining) is written against [`ComplexMatrix`], a
//! row-major `Vec<Complex64>` with explicit dimensions. Hermitian
//! eigendecomposition uses cyclic complex Jacobi rotations.

use std::fmt;

use num_complex::Complex64;

use crate::error::{arg, Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Sweep cap for the Jacobi eigensolver.
pub const JACOBI_MAX_SWEEPS: usize = 30;
/// Jacobi stops once the off-diagonal Frobenius mass drops below this
/// fraction of `‖A‖_F²`.
pub const JACOBI_OFF_TOLERANCE: f64 = 1e-24;
/// Relative tolerance used to accept a matrix as Hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;
/// Entries at or below this modulus are skipped when fixing eigenvector phase.
pub const PHASE_FLOOR: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self.get(r, c);
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return arg(format!(
                "entries length {} does not match {rows}x{cols}",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row vectors; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return arg("ragged rows");
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Convenience constructor from real entries.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return arg("ragged columns");
        }
        let mut m = Self::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            for (i, &z) in col.iter().enumerate() {
                m.data[i * m.cols + j] = z;
            }
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, z: C64) {
        self.data[r * self.cols + c] = z;
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [C64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Copies the sub-block of columns `start..start + width`.
    pub fn column_block(&self, start: usize, width: usize) -> ComplexMatrix {
        Self::from_fn(self.rows, width, |r, c| self.get(r, start + c))
    }

    /// Copies the sub-block of rows `start..start + height`.
    pub fn row_block(&self, start: usize, height: usize) -> ComplexMatrix {
        Self {
            rows: height,
            cols: self.cols,
            data: self.data[start * self.cols..(start + height) * self.cols].to_vec(),
        }
    }

    pub fn conj_transpose(&self) -> ComplexMatrix {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn scale(&self, s: C64) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real_in_place(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn add_assign(&mut self, other: &ComplexMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return arg(format!(
                "cannot add {:?} and {:?}",
                self.shape(),
                other.shape()
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.shape() != other.shape() {
            return arg(format!(
                "cannot subtract {:?} and {:?}",
                self.shape(),
                other.shape()
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    /// `‖A − A^H‖_F ≤ tol · ‖A‖_F`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        let mut diff = 0.0;
        for i in 0..n {
            for j in 0..n {
                diff += (self.get(i, j) - self.get(j, i).conj()).norm_sqr();
            }
        }
        diff.sqrt() <= tol * self.frobenius_norm()
    }
}

/// Dense product `A·B`.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols != b.rows {
        return arg(format!(
            "matmul shape mismatch {:?} x {:?}",
            a.shape(),
            b.shape()
        ));
    }
    let mut out = ComplexMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == ZERO {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `A·A^H`. Only the upper triangle is computed and mirrored, so the result
/// is exactly Hermitian with a real diagonal.
pub fn gram(a: &ComplexMatrix) -> ComplexMatrix {
    let n = a.rows;
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        let ri = a.row(i);
        for j in i..n {
            let rj = a.row(j);
            let z: C64 = ri.iter().zip(rj).map(|(x, y)| x * y.conj()).sum();
            if i == j {
                out.data[i * n + i] = C64::new(z.re, 0.0);
            } else {
                out.data[i * n + j] = z;
                out.data[j * n + i] = z.conj();
            }
        }
    }
    out
}

/// Accumulates `H^H·H` into `acc` (upper triangle and mirror, as [`gram`]).
pub fn accumulate_adjoint_gram(acc: &mut ComplexMatrix, h: &ComplexMatrix) -> Result<()> {
    let n = h.cols;
    if acc.shape() != (n, n) {
        return arg(format!(
            "accumulator {:?} does not match H^H H of {:?}",
            acc.shape(),
            h.shape()
        ));
    }
    for r in 0..h.rows {
        let row = h.row(r);
        for i in 0..n {
            let ci = row[i].conj();
            if ci == ZERO {
                continue;
            }
            let acc_row = &mut acc.data[i * n..(i + 1) * n];
            for j in i..n {
                acc_row[j] += ci * row[j];
            }
        }
    }
    for i in 0..n {
        acc.data[i * n + i].im = 0.0;
        for j in (i + 1)..n {
            acc.data[j * n + i] = acc.data[i * n + j].conj();
        }
    }
    Ok(())
}

/// Accumulates `B^H·B` into `acc`, where `B` is the column block of `h`
/// starting at `col_start` with width `acc.rows()`.
pub fn accumulate_block_adjoint_gram(
    acc: &mut ComplexMatrix,
    h: &ComplexMatrix,
    col_start: usize,
) -> Result<()> {
    let w = acc.rows;
    if acc.cols != w || col_start + w > h.cols {
        return arg(format!(
            "block of width {w} at column {col_start} does not fit {:?}",
            h.shape()
        ));
    }
    for r in 0..h.rows {
        let block = &h.row(r)[col_start..col_start + w];
        for i in 0..w {
            let ci = block[i].conj();
            let acc_row = &mut acc.data[i * w..(i + 1) * w];
            for j in i..w {
                acc_row[j] += ci * block[j];
            }
        }
    }
    for i in 0..w {
        acc.data[i * w + i].im = 0.0;
        for j in (i + 1)..w {
            acc.data[j * w + i] = acc.data[i * w + j].conj();
        }
    }
    Ok(())
}

/// `H^H·H`.
pub fn adjoint_gram(h: &ComplexMatrix) -> ComplexMatrix {
    let mut acc = ComplexMatrix::zeros(h.cols, h.cols);
    accumulate_adjoint_gram(&mut acc, h).expect("shape matches by construction");
    acc
}

pub fn conj_transpose(a: &ComplexMatrix) -> ComplexMatrix {
    a.conj_transpose()
}

/// Matrix-vector product.
pub fn matvec(a: &ComplexMatrix, x: &[C64]) -> Result<Vec<C64>> {
    if a.cols != x.len() {
        return arg(format!(
            "matvec shape mismatch {:?} x {}",
            a.shape(),
            x.len()
        ));
    }
    Ok((0..a.rows)
        .map(|r| a.row(r).iter().zip(x).map(|(p, q)| p * q).sum())
        .collect())
}

pub fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vec_norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Kronecker product of two vectors: `out[i·q + j] = a[i]·b[j]`.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Result<Vec<C64>> {
    if a.is_empty() || b.is_empty() {
        return arg("kron_vec requires non-empty vectors");
    }
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    Ok(out)
}

/// Eigenpairs of a Hermitian matrix, dominant first.
#[derive(Debug, Clone, PartialEq)]
pub struct EigPair {
    /// Descending.
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors as columns, in the order of `values`.
    pub vectors: ComplexMatrix,
}

impl EigPair {
    pub fn vector(&self, i: usize) -> Vec<C64> {
        self.vectors.column(i)
    }
}

/// Rotates `v` so its first entry with modulus above [`PHASE_FLOOR`] is real
/// and positive.
pub fn fix_phase(v: &mut [C64]) {
    if let Some(lead) = v.iter().find(|z| z.norm() > PHASE_FLOOR).copied() {
        let rot = lead.conj() / lead.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
        // Pin the lead entry exactly on the real axis.
        if let Some(z) = v.iter_mut().find(|z| z.norm() > PHASE_FLOOR) {
            z.im = 0.0;
        }
    }
}

/// Returns the `k` dominant eigenpairs of Hermitian `a`.
///
/// Cyclic complex Jacobi: each rotation first removes the phase of `a[p][q]`
/// with a diagonal unitary, then applies the real symmetric Jacobi rotation.
/// Sweeps until the off-diagonal mass falls below
/// `JACOBI_OFF_TOLERANCE · ‖A‖_F²` or `JACOBI_MAX_SWEEPS` is reached.
pub fn hermitian_eig(a: &ComplexMatrix, k: usize) -> Result<EigPair> {
    if !a.is_square() {
        return Err(Error::Structural(format!(
            "eigendecomposition needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    let n = a.rows;
    if k == 0 || k > n {
        return arg(format!("requested {k} eigenpairs of a {n}x{n} matrix"));
    }
    if !a.is_finite() {
        return Err(Error::Structural("matrix has non-finite entries".into()));
    }
    if !a.is_hermitian(HERMITIAN_TOLERANCE) {
        return Err(Error::Structural("matrix is not Hermitian".into()));
    }

    // Work on the exactly-Hermitian part.
    let mut w = a.clone();
    for i in 0..n {
        w.data[i * n + i] = C64::new(w.data[i * n + i].re, 0.0);
        for j in (i + 1)..n {
            let z = (w.data[i * n + j] + w.data[j * n + i].conj()) * 0.5;
            w.data[i * n + j] = z;
            w.data[j * n + i] = z.conj();
        }
    }
    // Rows of `vt` are the eigenvector columns, so updates stay contiguous.
    let mut vt = ComplexMatrix::identity(n);
    let total = w.frobenius_norm_sqr();

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += 2.0 * w.data[i * n + j].norm_sqr();
            }
        }
        if off <= JACOBI_OFF_TOLERANCE * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut w, &mut vt, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| w.data[i * n + i].re).collect();
    order.sort_by(|&x, &y| diag[y].total_cmp(&diag[x]).then(x.cmp(&y)));

    let mut values = Vec::with_capacity(k);
    let mut columns = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        values.push(diag[idx]);
        let mut v = vt.row(idx).to_vec();
        fix_phase(&mut v);
        columns.push(v);
    }
    Ok(EigPair {
        values,
        vectors: ComplexMatrix::from_columns(&columns)?,
    })
}

/// One complex Jacobi rotation annihilating `w[p][q]`.
fn rotate(w: &mut ComplexMatrix, vt: &mut ComplexMatrix, p: usize, q: usize) {
    let n = w.rows;
    let apq = w.data[p * n + q];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let app = w.data[p * n + p].re;
    let aqq = w.data[q * n + q].re;
    // Below the rounding of both diagonal entries: drop it.
    let g = 100.0 * mag;
    if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
        w.data[p * n + q] = ZERO;
        return;
    }
    let phase = apq / mag;
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // G = [[c, s], [-s·conj(e), c·conj(e)]] acting on (p, q).
    let s_e = phase * s;
    let c_e = phase * c;

    // A <- G^H A G on the upper triangle only; the lower triangle goes stale
    // and is never read. Row p/q entries left of the diagonal live in
    // columns p/q of earlier rows, conjugated.
    let s_ec = s_e.conj();
    let c_ec = c_e.conj();
    for k in 0..p {
        let x = w.data[k * n + p];
        let y = w.data[k * n + q];
        w.data[k * n + p] = x * c - s_ec * y;
        w.data[k * n + q] = x * s + c_ec * y;
    }
    for k in (p + 1)..q {
        let x = w.data[p * n + k];
        let y = w.data[k * n + q].conj();
        w.data[p * n + k] = x * c - s_e * y;
        w.data[k * n + q] = (x * s + c_e * y).conj();
    }
    {
        let (head, tail) = w.data.split_at_mut(q * n);
        let row_p = &mut head[p * n + q + 1..(p + 1) * n];
        let row_q = &mut tail[q + 1..n];
        for (x, y) in row_p.iter_mut().zip(row_q.iter_mut()) {
            let (a, b) = (*x, *y);
            *x = a * c - s_e * b;
            *y = a * s + c_e * b;
        }
    }
    w.data[p * n + p] = C64::new(app - t * mag, 0.0);
    w.data[q * n + q] = C64::new(aqq + t * mag, 0.0);
    w.data[p * n + q] = ZERO;

    // V <- V G, with V stored transposed.
    let (head, tail) = vt.data.split_at_mut(q * n);
    let vp = &mut head[p * n..(p + 1) * n];
    let vq = &mut tail[..n];
    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = a * c - s_ec * b;
        *y = a * s + c_ec * b;
    }
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn hpd_inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::Structural(format!(
            "inverse needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    let n = a.rows;
    // a = L L^H
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j).re;
        for k in 0..j {
            d -= l.get(j, k).norm_sqr();
        }
        if !(d > 0.0) {
            return Err(Error::Structural(
                "matrix is not positive definite".into(),
            ));
        }
        let d = d.sqrt();
        l.set(j, j, C64::new(d, 0.0));
        for i in (j + 1)..n {
            let mut z = a.get(i, j);
            for k in 0..j {
                z -= l.get(i, k) * l.get(j, k).conj();
            }
            l.set(i, j, z / d);
        }
    }
    // Solve L L^H X = I column by column.
    let mut inv = ComplexMatrix::zeros(n, n);
    let mut y = vec![ZERO; n];
    for col in 0..n {
        for i in 0..n {
            let mut z = if i == col { ONE } else { ZERO };
            for (k, yk) in y.iter().enumerate().take(i) {
                z -= l.get(i, k) * yk;
            }
            y[i] = z / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut z = y[i];
            for k in (i + 1)..n {
                z -= l.get(k, i).conj() * inv.get(k, col);
            }
            inv.set(i, col, z / l.get(i, i));
        }
    }
    // Restore exact Hermitian symmetry.
    for i in 0..n {
        inv.data[i * n + i].im = 0.0;
        for j in (i + 1)..n {
            let z = (inv.data[i * n + j] + inv.data[j * n + i].conj()) * 0.5;
            inv.data[i * n + j] = z;
            inv.data[j * n + i] = z.conj();
        }
    }
    Ok(inv)
}

/// Largest principal angle between the column spans of `u` and `v`.
///
/// Both inputs must have orthonormal columns. The angle is recovered with
/// `atan2(sin, cos)`, taking the sine from the residual `V − U·U^H·V` so
/// that angles near zero keep full relative precision.
pub fn principal_angle(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    if u.shape() != v.shape() {
        return arg(format!(
            "principal angle needs equal shapes, got {:?} and {:?}",
            u.shape(),
            v.shape()
        ));
    }
    if u.cols == 0 {
        return arg("principal angle of empty subspaces");
    }
    let k = u.cols;
    let cross = matmul(&u.conj_transpose(), v)?;
    let residual = v.sub(&matmul(u, &cross)?)?;
    let cos_sq = hermitian_eig(&adjoint_gram(&cross), k)?
        .values
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0);
    let sin_sq = hermitian_eig(&adjoint_gram(&residual), 1)?.values[0].max(0.0);
    Ok(sin_sq.sqrt().atan2(cos_sq.sqrt()))
}

/// Row-stacked matrix from row vectors that are each conjugated, i.e.
/// `[v_1, …, v_S]^H`.
pub fn adjoint_of_columns(columns: &[Vec<C64>]) -> Result<ComplexMatrix> {
    let rows: Vec<Vec<C64>> = columns
        .iter()
        .map(|c| c.iter().map(|z| z.conj()).collect())
        .collect();
    ComplexMatrix::from_rows(&rows)
}
