//! Unital subalgebras of M_N given by a Frobenius-orthonormal basis:
//! multiplicative closure, membership, operator-norm distance to the span,
//! and deterministic unit-ball sampling.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{C64, ComplexMatrix, ONE, ZERO};
use crate::tol;

/// A unital subalgebra of the N×N complex matrices.
///
/// The stored basis is Frobenius-orthonormal, spans a multiplicatively closed
/// subspace, and contains the ambient identity. `block_model`, when present,
/// records the semisimple model ⊕_k M_{n_k} the algebra is isomorphic to
/// (supplied by the scenario generator, never inferred).
#[derive(Clone, Debug)]
pub struct FdAlgebra {
    ambient_dim: usize,
    basis: Vec<ComplexMatrix>,
    block_model: Option<Vec<usize>>,
    adjoint_closed: bool,
    kappa1: f64,
    unit_coords: Vec<C64>,
}

/// Budget for the operator-norm distance descent.
#[derive(Clone, Copy, Debug)]
pub struct DistanceBudget {
    /// Skip the descent entirely when the Frobenius-projection bound is
    /// already below this value.
    pub skip_below: f64,
    /// Gradient steps per smoothing phase.
    pub phase_steps: usize,
    /// Final subgradient polish steps.
    pub polish_steps: usize,
}

impl Default for DistanceBudget {
    fn default() -> Self {
        DistanceBudget {
            skip_below: 1e-13,
            phase_steps: 40,
            polish_steps: 80,
        }
    }
}

/// Result of a distance query: a certified upper bound together with the
/// member of the algebra realizing it.
#[derive(Clone, Debug)]
pub struct DistanceOutcome {
    pub upper: f64,
    pub witness: ComplexMatrix,
}

fn mgs_orthonormalize(mats: &[ComplexMatrix], rank_tol: f64) -> Vec<ComplexMatrix> {
    let mut onb: Vec<ComplexMatrix> = Vec::new();
    for m in mats {
        let scale = m.frobenius_norm();
        if scale <= rank_tol {
            continue;
        }
        let mut v = m.scale_re(1.0 / scale);
        // two projection passes for numerical orthogonality
        for _ in 0..2 {
            for e in &onb {
                let c = v.frobenius_inner(e);
                v = v.sub(&e.scale(c));
            }
        }
        let norm = v.frobenius_norm();
        if norm > rank_tol {
            onb.push(v.scale_re(1.0 / norm));
        }
    }
    onb
}

impl FdAlgebra {
    fn assemble(
        ambient_dim: usize,
        basis: Vec<ComplexMatrix>,
        block_model: Option<Vec<usize>>,
    ) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::invalid("algebra basis must be non-empty"));
        }
        for b in &basis {
            if b.rows() != ambient_dim || b.cols() != ambient_dim {
                return Err(Error::DimensionMismatch {
                    expected: ambient_dim,
                    got: b.rows(),
                });
            }
        }
        let adjoint_closed = {
            let probe = FdAlgebra {
                ambient_dim,
                basis: basis.clone(),
                block_model: None,
                adjoint_closed: false,
                kappa1: 0.0,
                unit_coords: Vec::new(),
            };
            basis
                .iter()
                .all(|e| probe.span_residual(&e.adjoint()) <= tol::SPAN_MEMBERSHIP)
        };
        let kappa1 = basis.iter().map(|e| e.trace_norm()).sum();
        let mut alg = FdAlgebra {
            ambient_dim,
            basis,
            block_model,
            adjoint_closed,
            kappa1,
            unit_coords: Vec::new(),
        };
        let unit = ComplexMatrix::identity(ambient_dim);
        if alg.span_residual(&unit) > tol::SPAN_MEMBERSHIP * (ambient_dim as f64).sqrt() {
            return Err(Error::invalid(
                "algebra does not contain the ambient identity",
            ));
        }
        alg.unit_coords = alg.coords_unchecked(&unit);
        Ok(alg)
    }

    /// Builds from a spanning set that must already be multiplicatively
    /// closed (up to tolerance) and contain the identity in its span.
    pub fn from_spanning(
        ambient_dim: usize,
        spanning: &[ComplexMatrix],
        block_model: Option<Vec<usize>>,
    ) -> Result<Self> {
        // keep an already-orthonormal basis bit-for-bit
        let orthonormal = spanning.len() <= ambient_dim * ambient_dim
            && spanning.iter().enumerate().all(|(i, a)| {
                spanning.iter().enumerate().all(|(j, b)| {
                    let g = a.frobenius_inner(b);
                    let target = if i == j { ONE } else { ZERO };
                    (g - target).norm() <= 1e-12
                })
            });
        let basis = if orthonormal {
            spanning.to_vec()
        } else {
            let onb = mgs_orthonormalize(spanning, 1e-10);
            if onb.len() != spanning.len() {
                return Err(Error::invalid(
                    "spanning set is linearly dependent below tolerance",
                ));
            }
            onb
        };
        let alg = Self::assemble(ambient_dim, basis, block_model)?;
        let closure_residual = alg.multiplicative_closure_residual();
        if closure_residual > tol::SPAN_MEMBERSHIP {
            return Err(Error::invalid(format!(
                "span is not closed under multiplication (residual {closure_residual:.3e})"
            )));
        }
        Ok(alg)
    }

    /// Smallest unital subalgebra containing the generators: adjoins the
    /// unit, then grows the span by products until stable.
    pub fn generate_closure(
        ambient_dim: usize,
        generators: &[ComplexMatrix],
    ) -> Result<Self> {
        for g in generators {
            if g.rows() != ambient_dim || g.cols() != ambient_dim {
                return Err(Error::DimensionMismatch {
                    expected: ambient_dim,
                    got: g.rows(),
                });
            }
            if !g.is_finite() {
                return Err(Error::invalid("generators must have finite entries"));
            }
        }
        let mut seed: Vec<ComplexMatrix> = vec![ComplexMatrix::identity(ambient_dim)];
        seed.extend_from_slice(generators);
        let mut onb = mgs_orthonormalize(&seed, 1e-10);
        let cap = ambient_dim * ambient_dim;
        loop {
            let mut added = false;
            let current = onb.clone();
            for a in &current {
                for b in &current {
                    if onb.len() >= cap {
                        break;
                    }
                    let p = a.mul(b);
                    let mut r = p.clone();
                    for _ in 0..2 {
                        for e in &onb {
                            let c = r.frobenius_inner(e);
                            r = r.sub(&e.scale(c));
                        }
                    }
                    let norm = r.frobenius_norm();
                    if norm > 1e-10 * p.frobenius_norm().max(1.0) {
                        onb.push(r.scale_re(1.0 / norm));
                        added = true;
                    }
                }
            }
            if !added || onb.len() >= cap {
                break;
            }
        }
        Self::assemble(ambient_dim, onb, None)
    }

    /// The block-diagonal model ⊕_k M_{n_k} inside M_N, N = Σ n_k, with the
    /// exact matrix-unit basis (already orthonormal).
    pub fn block_diagonal_model(block_sizes: &[usize]) -> Result<Self> {
        if block_sizes.is_empty() || block_sizes.contains(&0) {
            return Err(Error::invalid("block sizes must be positive"));
        }
        let n: usize = block_sizes.iter().sum();
        let mut basis = Vec::new();
        let mut off = 0;
        for &k in block_sizes {
            for i in 0..k {
                for j in 0..k {
                    basis.push(ComplexMatrix::unit(n, off + i, off + j));
                }
            }
            off += k;
        }
        Self::assemble(n, basis, Some(block_sizes.to_vec()))
    }

    /// The full matrix algebra M_n.
    pub fn full(n: usize) -> Result<Self> {
        Self::block_diagonal_model(&[n])
    }

    /// Block upper-triangular algebra for the given diagonal block sizes
    /// (a non-selfadjoint container).
    pub fn upper_block_triangular(block_sizes: &[usize]) -> Result<Self> {
        if block_sizes.is_empty() || block_sizes.contains(&0) {
            return Err(Error::invalid("block sizes must be positive"));
        }
        let n: usize = block_sizes.iter().sum();
        let offsets: Vec<usize> = std::iter::once(0)
            .chain(block_sizes.iter().scan(0, |acc, &k| {
                *acc += k;
                Some(*acc)
            }))
            .collect();
        let mut basis = Vec::new();
        for bi in 0..block_sizes.len() {
            for bj in bi..block_sizes.len() {
                for i in offsets[bi]..offsets[bi + 1] {
                    for j in offsets[bj]..offsets[bj + 1] {
                        basis.push(ComplexMatrix::unit(n, i, j));
                    }
                }
            }
        }
        Self::assemble(n, basis, None)
    }

    /// Conjugated copy s0 · A · s0⁻¹ of `model`, re-orthonormalized. The
    /// block model is inherited: conjugation preserves the isomorphism class.
    pub fn conjugated(model: &FdAlgebra, s0: &ComplexMatrix) -> Result<Self> {
        if s0.rows() != model.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: model.ambient_dim,
                got: s0.rows(),
            });
        }
        let s0_inv = s0.inverse()?;
        let mapped: Vec<ComplexMatrix> = model
            .basis
            .iter()
            .map(|e| s0.mul(e).mul(&s0_inv))
            .collect();
        let onb = mgs_orthonormalize(&mapped, 1e-10);
        if onb.len() != model.basis.len() {
            return Err(Error::invalid("conjugation collapsed the basis"));
        }
        Self::assemble(model.ambient_dim, onb, model.block_model.clone())
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[ComplexMatrix] {
        &self.basis
    }

    pub fn block_model(&self) -> Option<&[usize]> {
        self.block_model.as_deref()
    }

    pub fn is_adjoint_closed(&self) -> bool {
        self.adjoint_closed
    }

    /// Certified bound on the ℓ¹ coefficient norm over the operator-norm
    /// unit ball: κ₁ = Σ_i ‖e_i‖_tr, since |⟨x, e_i⟩_F| ≤ ‖e_i‖_tr ‖x‖.
    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn unit(&self) -> ComplexMatrix {
        ComplexMatrix::identity(self.ambient_dim)
    }

    fn check_dim(&self, x: &ComplexMatrix) -> Result<()> {
        if x.rows() != self.ambient_dim || x.cols() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim,
                got: x.rows(),
            });
        }
        Ok(())
    }

    fn coords_unchecked(&self, x: &ComplexMatrix) -> Vec<C64> {
        self.basis.iter().map(|e| x.frobenius_inner(e)).collect()
    }

    /// Coefficients of the Frobenius-orthogonal projection of `x` onto the
    /// span, in the orthonormal basis.
    pub fn coords(&self, x: &ComplexMatrix) -> Result<Vec<C64>> {
        self.check_dim(x)?;
        Ok(self.coords_unchecked(x))
    }

    pub fn from_coords(&self, coords: &[C64]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.ambient_dim, self.ambient_dim);
        for (c, e) in coords.iter().zip(&self.basis) {
            out = out.add(&e.scale(*c));
        }
        out
    }

    /// Frobenius-orthogonal projection onto the span.
    pub fn project(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        Ok(self.from_coords(&self.coords(x)?))
    }

    /// Frobenius distance from `x` to the span.
    pub fn span_residual(&self, x: &ComplexMatrix) -> f64 {
        let coords = self.coords_unchecked(x);
        x.sub(&self.from_coords(&coords)).frobenius_norm()
    }

    pub fn contains(&self, x: &ComplexMatrix) -> bool {
        x.rows() == self.ambient_dim
            && x.cols() == self.ambient_dim
            && self.span_residual(x) <= tol::SPAN_MEMBERSHIP * x.frobenius_norm().max(1.0)
    }

    /// Max Frobenius residual of basis products against the span; near zero
    /// for an actual subalgebra.
    pub fn multiplicative_closure_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for a in &self.basis {
            for b in &self.basis {
                worst = worst.max(self.span_residual(&a.mul(b)));
            }
        }
        worst
    }

    pub fn coords_of_unit(&self) -> &[C64] {
        &self.unit_coords
    }

    /// Upper bound on the operator-norm distance inf_{y ∈ A} ‖x − y‖.
    pub fn distance_to(&self, x: &ComplexMatrix) -> Result<f64> {
        Ok(self
            .distance_to_detailed(x, &DistanceBudget::default())?
            .upper)
    }

    /// Distance bound with the realizing member. Deterministic: Frobenius
    /// projection start, Schatten-p smoothed descent, subgradient polish.
    /// The result never exceeds the Frobenius-projection distance, and the
    /// input is normalized first so the bound is exactly homogeneous.
    pub fn distance_to_detailed(
        &self,
        x: &ComplexMatrix,
        budget: &DistanceBudget,
    ) -> Result<DistanceOutcome> {
        self.check_dim(x)?;
        let scale = x.frobenius_norm();
        if scale == 0.0 {
            return Ok(DistanceOutcome {
                upper: 0.0,
                witness: ComplexMatrix::zeros(self.ambient_dim, self.ambient_dim),
            });
        }
        let xn = x.scale_re(1.0 / scale);
        let mut coords = self.coords_unchecked(&xn);
        let resid = |c: &[C64]| xn.sub(&self.from_coords(c));
        let mut best_val = resid(&coords).operator_norm();
        let mut best_coords = coords.clone();

        if best_val > budget.skip_below {
            // smoothed Schatten-p phases with backtracking on the true norm
            for p in [8.0_f64, 32.0, 128.0] {
                let mut step = 0.5_f64;
                for _ in 0..budget.phase_steps {
                    let r = resid(&coords);
                    let svd = r.inner().clone().svd(true, true);
                    let u = svd.u.as_ref().expect("u");
                    let vt = svd.v_t.as_ref().expect("v_t");
                    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
                    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
                    if smax <= budget.skip_below {
                        break;
                    }
                    for s in &mut sv {
                        *s /= smax;
                    }
                    let sum_p: f64 = sv.iter().map(|s| s.powf(p)).sum();
                    // α_j = (σ_j/σmax)^{p-1} / sum_p^{1-1/p}
                    let denom = sum_p.powf(1.0 - 1.0 / p);
                    let grad: Vec<C64> = self
                        .basis
                        .iter()
                        .map(|e| {
                            let mut g = ZERO;
                            for (j, s) in sv.iter().enumerate() {
                                let alpha = s.powf(p - 1.0) / denom;
                                if alpha < 1e-14 {
                                    continue;
                                }
                                // u_j^H (e v_j)
                                let ev = e.inner() * vt.row(j).adjoint();
                                let uj = u.column(j);
                                let dot: C64 =
                                    uj.iter().zip(ev.iter()).map(|(a, b)| a.conj() * b).sum();
                                g += dot * alpha;
                            }
                            g
                        })
                        .collect();
                    let gnorm: f64 = grad.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    if gnorm < 1e-15 {
                        break;
                    }
                    let f0 = resid(&coords).operator_norm();
                    let mut t = step;
                    let mut improved = false;
                    for _ in 0..25 {
                        let cand: Vec<C64> = coords
                            .iter()
                            .zip(&grad)
                            .map(|(c, g)| c + g.conj() * t)
                            .collect();
                        let f1 = resid(&cand).operator_norm();
                        if f1 < f0 - 1e-14 {
                            coords = cand;
                            if f1 < best_val {
                                best_val = f1;
                                best_coords = coords.clone();
                            }
                            step = (t * 2.0).min(0.5);
                            improved = true;
                            break;
                        }
                        t *= 0.5;
                    }
                    if !improved {
                        break;
                    }
                }
            }
            // subgradient polish on σ_max
            coords = best_coords.clone();
            for k in 0..budget.polish_steps {
                let r = resid(&coords);
                let svd = r.inner().clone().svd(true, true);
                let u = svd.u.as_ref().expect("u");
                let vt = svd.v_t.as_ref().expect("v_t");
                let (jmax, &f0) = svd
                    .singular_values
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap();
                if f0 <= budget.skip_below {
                    break;
                }
                let grad: Vec<C64> = self
                    .basis
                    .iter()
                    .map(|e| {
                        let ev = e.inner() * vt.row(jmax).adjoint();
                        let uj = u.column(jmax);
                        uj.iter().zip(ev.iter()).map(|(a, b)| a.conj() * b).sum()
                    })
                    .collect();
                let gsq: f64 = grad.iter().map(|z| z.norm_sqr()).sum();
                if gsq < 1e-30 {
                    break;
                }
                let t = ((f0 - best_val * 0.999_999).max(1e-13)) / gsq;
                let cand: Vec<C64> = coords
                    .iter()
                    .zip(&grad)
                    .map(|(c, g)| c + g.conj() * t)
                    .collect();
                let f1 = resid(&cand).operator_norm();
                if f1 < best_val {
                    best_val = f1;
                    best_coords = cand.clone();
                    coords = cand;
                } else {
                    // short diminishing step to escape the current face
                    let t2 = 1e-3 * f0 / ((k + 1) as f64) / gsq.sqrt();
                    coords = coords
                        .iter()
                        .zip(&grad)
                        .map(|(c, g)| c + g.conj() * t2)
                        .collect();
                    let f2 = resid(&coords).operator_norm();
                    if f2 < best_val {
                        best_val = f2;
                        best_coords = coords.clone();
                    }
                }
            }
        }

        let witness_coords: Vec<C64> = best_coords
            .iter()
            .map(|c| c * C64::new(scale, 0.0))
            .collect();
        Ok(DistanceOutcome {
            upper: best_val * scale,
            witness: self.from_coords(&witness_coords),
        })
    }

    /// Deterministic samples from the operator-norm unit ball of the
    /// algebra. The stream interleaves the unit, rescaled basis elements,
    /// random span members, and (for adjoint-closed algebras) unitary
    /// exponentials of Hermitian members.
    pub fn sample_unit_ball(&self, seed: i64, count: usize) -> Vec<ComplexMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let mut gauss = move || {
            // Box-Muller
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let mut rand_member = |this: &Self| {
            let coords: Vec<C64> = (0..this.dim())
                .map(|_| C64::new(gauss(), gauss()))
                .collect();
            this.from_coords(&coords)
        };
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let sample = if k == 0 {
                self.unit()
            } else if k % 4 == 0 && self.adjoint_closed {
                // unitary extreme point exp(iθ h)
                let h = rand_member(self).hermitian_part();
                let hn = h.operator_norm();
                if hn < 1e-12 {
                    self.unit()
                } else {
                    let theta = std::f64::consts::PI * ((k % 7 + 1) as f64) / 8.0;
                    ComplexMatrix::unitary_exp_hermitian(&h.scale_re(1.0 / hn), theta)
                        .expect("square hermitian")
                }
            } else if k % 4 == 1 {
                let e = &self.basis[(k / 4) % self.dim()];
                let n = e.operator_norm();
                e.scale_re(1.0 / n)
            } else {
                let m = rand_member(self);
                let n = m.operator_norm();
                if n < 1e-12 {
                    self.unit()
                } else {
                    m.scale_re(1.0 / n)
                }
            };
            out.push(sample);
        }
        out
    }

    /// Structural equality (same ambient dimension and basis, entrywise).
    pub fn same_as(&self, other: &FdAlgebra) -> bool {
        self.ambient_dim == other.ambient_dim
            && self.basis.len() == other.basis.len()
            && self
                .basis
                .iter()
                .zip(&other.basis)
                .all(|(a, b)| a.sub(b).frobenius_norm() <= 1e-12)
    }
}

/// Shared handle used by tensors, maps, and projections.
pub type AlgebraRef = Arc<FdAlgebra>;

#[derive(Serialize, Deserialize)]
struct FdAlgebraWire {
    ambient_dim: usize,
    basis: Vec<ComplexMatrix>,
    block_model: Option<Vec<usize>>,
}

impl Serialize for FdAlgebra {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FdAlgebraWire {
            ambient_dim: self.ambient_dim,
            basis: self.basis.clone(),
            block_model: self.block_model.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FdAlgebra {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = FdAlgebraWire::deserialize(d)?;
        FdAlgebra::from_spanning(wire.ambient_dim, &wire.basis, wire.block_model)
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent span-growth oracle: grows the set by all pairwise
    /// products and row-reduces the vectorized matrices by plain Gaussian
    /// elimination until the rank stops increasing. No shared code with
    /// `generate_closure`.
    fn closure_dim_oracle(ambient: usize, generators: &[ComplexMatrix]) -> usize {
        // returns the pivot rows of the row-reduced stack
        fn row_reduce(rows: Vec<Vec<C64>>) -> Vec<Vec<C64>> {
            let mut pivots: Vec<Vec<C64>> = Vec::new();
            for mut row in rows {
                for p in &pivots {
                    let lead = p.iter().position(|z| z.norm() > 1e-9).unwrap();
                    let factor = row[lead] / p[lead];
                    if factor.norm() > 0.0 {
                        for (r, q) in row.iter_mut().zip(p) {
                            *r -= factor * q;
                        }
                    }
                }
                let norm: f64 = row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm > 1e-9 {
                    let inv = 1.0 / norm;
                    for z in &mut row {
                        *z *= inv;
                    }
                    pivots.push(row);
                }
            }
            pivots
        }
        let mut basis: Vec<ComplexMatrix> = vec![ComplexMatrix::identity(ambient)];
        basis.extend_from_slice(generators);
        let mut rank = 0usize;
        loop {
            let mut rows: Vec<Vec<C64>> = basis.iter().map(|m| m.vec_entries()).collect();
            for a in &basis {
                for b in &basis {
                    rows.push(a.mul(b).vec_entries());
                }
            }
            let pivots = row_reduce(rows);
            let new_rank = pivots.len();
            // rebuild a spanning set of matrices from the pivot rows
            basis = pivots
                .into_iter()
                .map(|r| ComplexMatrix::from_entries(ambient, ambient, r).unwrap())
                .collect();
            if new_rank == rank {
                return rank;
            }
            rank = new_rank;
        }
    }

    fn clock_shift(n: usize) -> (ComplexMatrix, ComplexMatrix) {
        let x = ComplexMatrix::from_fn(n, n, |i, j| {
            if i == (j + 1) % n {
                ONE
            } else {
                ZERO
            }
        });
        let z = ComplexMatrix::from_fn(n, n, |i, j| {
            if i == j {
                let phi = 2.0 * std::f64::consts::PI * (j as f64) / (n as f64);
                C64::new(phi.cos(), phi.sin())
            } else {
                ZERO
            }
        });
        (x, z)
    }

    #[test]
    fn closure_of_e11_e12_has_dimension_three() {
        let gens = vec![ComplexMatrix::unit(2, 0, 0), ComplexMatrix::unit(2, 0, 1)];
        let alg = FdAlgebra::generate_closure(2, &gens).unwrap();
        assert_eq!(alg.dim(), 3);
        assert_eq!(closure_dim_oracle(2, &gens), 3);
    }

    #[test]
    fn clock_and_shift_generate_full_matrix_algebra() {
        for n in [2usize, 3, 4] {
            let (x, z) = clock_shift(n);
            let gens = vec![x, z];
            let alg = FdAlgebra::generate_closure(n, &gens).unwrap();
            assert_eq!(alg.dim(), n * n);
            assert_eq!(closure_dim_oracle(n, &gens), n * n);
        }
    }

    #[test]
    fn empty_generators_give_scalars() {
        let alg = FdAlgebra::generate_closure(3, &[]).unwrap();
        assert_eq!(alg.dim(), 1);
        assert!(alg.contains(&ComplexMatrix::identity(3).scale_re(2.5)));
    }

    #[test]
    fn closure_is_idempotent() {
        let gens = vec![ComplexMatrix::unit(3, 0, 1), ComplexMatrix::unit(3, 1, 2)];
        let alg = FdAlgebra::generate_closure(3, &gens).unwrap();
        let again = FdAlgebra::generate_closure(3, alg.basis()).unwrap();
        assert_eq!(alg.dim(), again.dim());
        for e in again.basis() {
            assert!(alg.span_residual(e) <= 1e-10);
        }
        for e in alg.basis() {
            assert!(again.span_residual(e) <= 1e-10);
        }
    }

    #[test]
    fn distance_of_member_is_zero() {
        let alg = FdAlgebra::block_diagonal_model(&[1, 1]).unwrap();
        let member = ComplexMatrix::diagonal(&[C64::new(0.3, 1.0), C64::new(-2.0, 0.2)]);
        assert!(alg.distance_to(&member).unwrap() <= 1e-12);
    }

    #[test]
    fn distance_e12_to_diagonals_is_one() {
        let diag = FdAlgebra::block_diagonal_model(&[1, 1]).unwrap();
        let e12 = ComplexMatrix::unit(2, 0, 1);
        let d = diag.distance_to(&e12).unwrap();
        // lower bound 1 from the (1,2) entry; upper bound from y = 0
        assert!((d - 1.0).abs() <= 1e-6, "distance {d}");
        // translation by a member leaves the distance unchanged
        let shifted = ComplexMatrix::identity(2).add(&e12);
        let d2 = diag.distance_to(&shifted).unwrap();
        assert!((d2 - 1.0).abs() <= 1e-6, "distance {d2}");
    }

    #[test]
    fn distance_never_exceeds_frobenius_projection() {
        let alg = FdAlgebra::block_diagonal_model(&[2, 1]).unwrap();
        for salt in 0..8 {
            let x = ComplexMatrix::from_fn(3, 3, |i, j| {
                let s = (i * 3 + j + salt) as f64;
                C64::new((1.7 * s).sin(), (0.9 * s).cos())
            });
            let coords = alg.coords(&x).unwrap();
            let frob = x.sub(&alg.from_coords(&coords)).operator_norm();
            let d = alg.distance_to(&x).unwrap();
            assert!(d <= frob + 1e-12);
        }
    }

    #[test]
    fn unit_ball_samples_are_members_with_norm_at_most_one() {
        let model = FdAlgebra::block_diagonal_model(&[2, 2]).unwrap();
        let samples = model.sample_unit_ball(42, 64);
        assert_eq!(samples.len(), 64);
        for s in &samples {
            assert!(s.operator_norm() <= 1.0 + 1e-12);
            assert!(model.span_residual(s) <= 1e-10);
        }
        // determinism
        let again = model.sample_unit_ball(42, 64);
        for (a, b) in samples.iter().zip(&again) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cstar_model_samples_contain_unitaries() {
        let model = FdAlgebra::block_diagonal_model(&[2, 1]).unwrap();
        assert!(model.is_adjoint_closed());
        let count = 64;
        let samples = model.sample_unit_ball(7, count);
        let unitary = samples
            .iter()
            .filter(|s| {
                s.adjoint()
                    .mul(s)
                    .sub(&ComplexMatrix::identity(3))
                    .operator_norm()
                    <= 1e-10
            })
            .count();
        assert!(unitary >= count / 4, "only {unitary} unitary samples");
    }

    #[test]
    fn triangular_algebra_is_not_adjoint_closed() {
        let tri = FdAlgebra::upper_block_triangular(&[1, 1]).unwrap();
        assert_eq!(tri.dim(), 3);
        assert!(!tri.is_adjoint_closed());
        assert!(tri.contains(&ComplexMatrix::unit(2, 0, 1)));
        assert!(!tri.contains(&ComplexMatrix::unit(2, 1, 0)));
    }

    #[test]
    fn json_round_trip_preserves_span() {
        let alg = FdAlgebra::block_diagonal_model(&[2, 1]).unwrap();
        let s = serde_json::to_string(&alg).unwrap();
        let back: FdAlgebra = serde_json::from_str(&s).unwrap();
        assert!(back.same_as(&alg));
    }
}
