//! Dense complex matrices and the primitives everything else consumes:
//! operator norm, inversion, polar decomposition, Frobenius geometry.
//!
//! Matrices are immutable after construction and all entries are checked
//! finite at the boundaries. The operator norm is the largest singular value,
//! computed by full SVD; at the dimensions this crate works at (≤ ~64) that
//! is both cheap and bit-stable.

use nalgebra::{Complex, DMatrix};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

pub type C64 = Complex<f64>;

pub const ZERO: C64 = Complex::new(0.0, 0.0);
pub const ONE: C64 = Complex::new(1.0, 0.0);

/// Dense square or rectangular complex matrix, row-major JSON encoding
/// `{"rows": n, "cols": m, "data": [[re, im], ...]}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    inner: DMatrix<C64>,
}

impl ComplexMatrix {
    pub fn from_inner(inner: DMatrix<C64>) -> Self {
        ComplexMatrix { inner }
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.inner
    }

    /// Builds from row-major entries, rejecting NaN/Inf.
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        if entries.len() != rows * cols {
            return Err(Error::invalid(format!(
                "entry count {} does not match {}x{}",
                entries.len(),
                rows,
                cols
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        // nalgebra stores column-major; transpose the row-major input.
        let m = DMatrix::from_row_slice(rows, cols, &entries);
        Ok(ComplexMatrix { inner: m })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> C64) -> Self {
        ComplexMatrix {
            inner: DMatrix::from_fn(rows, cols, f),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        ComplexMatrix {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { entries[i] } else { ZERO })
    }

    /// Matrix unit e_{ij} in M_n.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == i && c == j { ONE } else { ZERO })
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.inner[(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.inner
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("matrix entries must be finite"))
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        ComplexMatrix {
            inner: &self.inner + &other.inner,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        ComplexMatrix {
            inner: &self.inner - &other.inner,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        ComplexMatrix {
            inner: &self.inner * &other.inner,
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        ComplexMatrix {
            inner: self.inner.map(|z| z * c),
        }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn adjoint(&self) -> Self {
        ComplexMatrix {
            inner: self.inner.adjoint(),
        }
    }

    pub fn trace(&self) -> C64 {
        self.inner.trace()
    }

    /// Hermitian part (x + x*)/2 of a square matrix.
    pub fn hermitian_part(&self) -> Self {
        ComplexMatrix {
            inner: (&self.inner + self.inner.adjoint()).map(|z| z * 0.5),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius inner product ⟨a, b⟩ = tr(b* a), linear in `self`.
    pub fn frobenius_inner(&self, other: &Self) -> C64 {
        self.inner
            .iter()
            .zip(other.inner.iter())
            .map(|(a, b)| b.conj() * a)
            .sum()
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let svd = self.inner.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).expect("singular values are finite"));
        sv
    }

    /// Operator norm = largest singular value.
    pub fn operator_norm(&self) -> f64 {
        if self.inner.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
            return 0.0;
        }
        self.singular_values()[0]
    }

    /// Checked operator norm for untrusted inputs.
    pub fn try_operator_norm(&self) -> Result<f64> {
        self.ensure_finite()?;
        Ok(self.operator_norm())
    }

    pub fn smallest_singular_value(&self) -> f64 {
        *self
            .singular_values()
            .last()
            .expect("matrix is non-empty")
    }

    /// Trace norm (sum of singular values); the dual norm of the operator
    /// norm, used for the κ₁ coefficient bounds.
    pub fn trace_norm(&self) -> f64 {
        self.singular_values().iter().sum()
    }

    fn singular_gate(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::invalid("matrix must be square"));
        }
        self.ensure_finite()?;
        let sv = self.singular_values();
        let sigma_min = *sv.last().unwrap();
        if sigma_min <= tol::SINGULARITY_REL * sv[0] {
            return Err(Error::RankDeficient { sigma_min });
        }
        Ok(())
    }

    /// Inverse, gated on the smallest singular value.
    pub fn inverse(&self) -> Result<Self> {
        self.singular_gate()?;
        match self.inner.clone().try_inverse() {
            Some(inv) => Ok(ComplexMatrix { inner: inv }),
            None => Err(Error::RankDeficient {
                sigma_min: self.smallest_singular_value(),
            }),
        }
    }

    /// Polar decomposition m = unitary · positive of an invertible square
    /// matrix, via SVD: U = u v*, P = v Σ v*.
    pub fn polar_decompose(&self) -> Result<(Self, Self)> {
        self.singular_gate()?;
        let svd = self.inner.clone().svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let n = self.rows();
        let sigma = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(svd.singular_values[i], 0.0)
            } else {
                ZERO
            }
        });
        let unitary = u * v_t;
        let positive = v_t.adjoint() * sigma * v_t;
        // symmetrize against roundoff
        let positive = (&positive + positive.adjoint()).map(|z| z * 0.5);
        Ok((
            ComplexMatrix { inner: unitary },
            ComplexMatrix { inner: positive },
        ))
    }

    /// exp(iθ h) for Hermitian h, via its eigendecomposition. The result is
    /// unitary and stays in any closed unital algebra containing h.
    pub fn unitary_exp_hermitian(h: &Self, theta: f64) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::invalid("hermitian exponential needs a square matrix"));
        }
        let herm = h.hermitian_part();
        let se = nalgebra::SymmetricEigen::new(herm.inner.clone());
        let n = h.rows();
        let phases = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                let phi = theta * se.eigenvalues[i];
                C64::new(phi.cos(), phi.sin())
            } else {
                ZERO
            }
        });
        let q = &se.eigenvectors;
        Ok(ComplexMatrix {
            inner: q * phases * q.adjoint(),
        })
    }

    /// Row-major entry vector, the coordinate representation used for
    /// Frobenius-space operations.
    pub fn vec_entries(&self) -> Vec<C64> {
        let (r, c) = (self.rows(), self.cols());
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }
}

impl std::ops::Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::add(self, rhs)
    }
}

impl std::ops::Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::sub(self, rhs)
    }
}

impl std::ops::Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::mul(self, rhs)
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct Data<'a>(&'a ComplexMatrix);
        impl Serialize for Data<'_> {
            fn serialize<S: Serializer>(
                &self,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                let m = self.0;
                let mut seq = serializer.serialize_seq(Some(m.rows() * m.cols()))?;
                for i in 0..m.rows() {
                    for j in 0..m.cols() {
                        let z = m.get(i, j);
                        seq.serialize_element(&[z.re, z.im])?;
                    }
                }
                seq.end()
            }
        }
        let mut s = serializer.serialize_struct("ComplexMatrix", 3)?;
        s.serialize_field("rows", &self.rows())?;
        s.serialize_field("cols", &self.cols())?;
        s.serialize_field("data", &Data(self))?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            rows: usize,
            cols: usize,
            data: Pairs,
        }
        struct Pairs(Vec<C64>);
        impl<'de> Deserialize<'de> for Pairs {
            fn deserialize<D: Deserializer<'de>>(
                deserializer: D,
            ) -> std::result::Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = Pairs;
                    fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                        f.write_str("a sequence of [re, im] pairs")
                    }
                    fn visit_seq<A: SeqAccess<'de>>(
                        self,
                        mut seq: A,
                    ) -> std::result::Result<Pairs, A::Error> {
                        let mut out = Vec::new();
                        while let Some([re, im]) = seq.next_element::<[f64; 2]>()? {
                            out.push(C64::new(re, im));
                        }
                        Ok(Pairs(out))
                    }
                }
                deserializer.deserialize_seq(V)
            }
        }
        let raw = Raw::deserialize(deserializer)?;
        ComplexMatrix::from_entries(raw.rows, raw.cols, raw.data.0)
            .map_err(|e| de::Error::custom(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Independent oracle: power iteration on m*m approximates the squared
    /// operator norm without going through the SVD path.
    pub(crate) fn power_iteration_norm(m: &ComplexMatrix, iters: usize) -> f64 {
        let gram = m.adjoint().mul(m);
        let n = gram.rows();
        let mut v: Vec<C64> = (0..n)
            .map(|k| C64::new(1.0 + (k as f64) * 0.1, 0.3 - (k as f64) * 0.07))
            .collect();
        let mut lambda = 0.0;
        for _ in 0..iters {
            let mut w = vec![ZERO; n];
            for i in 0..n {
                for (j, wv) in v.iter().enumerate() {
                    w[i] += gram.get(i, j) * wv;
                }
            }
            let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            for z in &mut w {
                *z /= norm;
            }
            lambda = norm;
            v = w;
        }
        lambda.sqrt()
    }

    fn sample_matrix(n: usize, salt: u64) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |i, j| {
            let s = (i * n + j) as f64 + salt as f64 * 0.61;
            C64::new((s * 0.917).sin(), (s * 1.331).cos())
        })
    }

    #[test]
    fn operator_norm_identity_and_diagonal() {
        assert_abs_diff_eq!(ComplexMatrix::identity(5).operator_norm(), 1.0, epsilon = 1e-14);
        let d = ComplexMatrix::diagonal(&[C64::new(3.0, 0.0), C64::new(4.0, 0.0)]);
        assert_abs_diff_eq!(d.operator_norm(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn operator_norm_matches_power_iteration_oracle() {
        let m = sample_matrix(6, 3);
        let oracle = power_iteration_norm(&m, 4000);
        assert_abs_diff_eq!(m.operator_norm(), oracle, epsilon = 1e-10);
    }

    #[test]
    fn operator_norm_rejects_non_finite() {
        let mut entries = vec![ZERO; 4];
        entries[2] = C64::new(f64::NAN, 0.0);
        assert!(ComplexMatrix::from_entries(2, 2, entries).is_err());
    }

    #[test]
    fn inverse_diagonal_and_residual() {
        let d = ComplexMatrix::diagonal(&[C64::new(2.0, 0.0), C64::new(4.0, 0.0)]);
        let inv = d.inverse().unwrap();
        assert_abs_diff_eq!(inv.get(0, 0).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(inv.get(1, 1).re, 0.25, epsilon = 1e-15);

        let m = sample_matrix(6, 9);
        // shift to make it well-conditioned
        let m = m.add(&ComplexMatrix::identity(6).scale_re(8.0));
        let inv = m.inverse().unwrap();
        let residual = m.mul(&inv).sub(&ComplexMatrix::identity(6)).operator_norm();
        assert!(residual <= 1e-10, "residual {residual:e}");
    }

    #[test]
    fn inverse_rejects_singular() {
        let m = ComplexMatrix::diagonal(&[ONE, ZERO]);
        match m.inverse() {
            Err(Error::RankDeficient { sigma_min }) => assert!(sigma_min < 1e-12),
            other => panic!("expected rank-deficient error, got {other:?}"),
        }
    }

    #[test]
    fn polar_of_unitary_is_identity_positive_part() {
        let h = sample_matrix(4, 1).hermitian_part();
        let v = ComplexMatrix::unitary_exp_hermitian(&h, 0.7).unwrap();
        let (u, p) = v.polar_decompose().unwrap();
        assert!(u.sub(&v).operator_norm() <= 1e-12);
        assert!(p.sub(&ComplexMatrix::identity(4)).operator_norm() <= 1e-12);
    }

    #[test]
    fn polar_of_positive_diagonal() {
        let d = ComplexMatrix::diagonal(&[C64::new(2.0, 0.0), C64::new(0.5, 0.0)]);
        let (u, p) = d.polar_decompose().unwrap();
        assert!(u.sub(&ComplexMatrix::identity(2)).operator_norm() <= 1e-12);
        assert!(p.sub(&d).operator_norm() <= 1e-12);
    }

    #[test]
    fn polar_reconstructs_random_invertible() {
        let m = sample_matrix(5, 7).add(&ComplexMatrix::identity(5).scale_re(6.0));
        let (u, p) = m.polar_decompose().unwrap();
        assert!(u.mul(&p).sub(&m).operator_norm() <= 1e-12 * m.operator_norm());
        assert!(
            u.adjoint().mul(&u).sub(&ComplexMatrix::identity(5)).operator_norm() <= 1e-12
        );
        // positive part is Hermitian positive-definite
        assert!(p.sub(&p.adjoint()).operator_norm() <= 1e-12);
        assert!(p.smallest_singular_value() > 0.0);
    }

    #[test]
    fn json_round_trip() {
        let m = sample_matrix(3, 5);
        let s = serde_json::to_string(&m).unwrap();
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert!(back.sub(&m).frobenius_norm() <= 1e-15 * m.frobenius_norm());
        // spot-check the wire format
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["rows"], 3);
        assert_eq!(v["data"][0][0], serde_json::json!(m.get(0, 0).re));
    }
}
