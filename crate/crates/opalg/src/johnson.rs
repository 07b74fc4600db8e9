//! Correction of approximately multiplicative unital maps into exact
//! homomorphisms, inside the explicit budget δ = ε/(4‖u‖ + 8μ²‖u‖²).
//!
//! The default scheme averages against the virtual diagonal and
//! renormalizes by the averaged unit:
//!
//!   L′(a) = J⁻¹ · Σ_k L(a·a_k) L(b_k),   J = Σ_k L(a_k) L(b_k).
//!
//! A homomorphism is a fixed point (J = I), every iterate is exactly
//! unital, and the defect decays quadratically on small perturbations. The
//! plain un-normalized average stalls at the level of ‖J − I‖, which is why
//! the renormalization is part of the scheme. If the averaging stalls, a
//! Gauss–Newton solve of the structure-constant equations takes over; the
//! postconditions, not the scheme, are the contract.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraRef, FdAlgebra};
use crate::diagonal::TensorElement;
use crate::error::{Error, Result};
use crate::maps::AlgebraMap;
use crate::matrix::{C64, ComplexMatrix, ZERO};
use crate::tol;

/// The constants of one correction run: ‖L‖ ≤ μ, certified ‖u‖, target ε,
/// and the admissible defect δ = ε/(4‖u‖ + 8μ²‖u‖²).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct JohnsonBudget {
    pub mu: f64,
    pub u_norm: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl JohnsonBudget {
    /// Residual of the defining identity δ·(4‖u‖ + 8μ²‖u‖²) = ε.
    pub fn identity_residual(&self) -> f64 {
        (self.delta * (4.0 * self.u_norm + 8.0 * self.mu * self.mu * self.u_norm * self.u_norm)
            - self.epsilon)
            .abs()
    }
}

/// Computes the admissible defect for a target ε, map bound μ, and
/// certified diagonal norm ‖u‖ ≥ 1.
pub fn delta_threshold(epsilon: f64, mu: f64, u_norm: f64) -> Result<JohnsonBudget> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must lie in (0, 1)"));
    }
    if mu <= 0.0 {
        return Err(Error::invalid("mu must be positive"));
    }
    if u_norm < 1.0 {
        return Err(Error::invalid("diagonal norm bound must be at least one"));
    }
    let delta = epsilon / (4.0 * u_norm + 8.0 * mu * mu * u_norm * u_norm);
    Ok(JohnsonBudget {
        mu,
        u_norm,
        epsilon,
        delta,
    })
}

/// One row of the convergence trace.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub defect_upper: f64,
    pub distance_from_start: f64,
}

#[derive(Clone, Debug)]
pub struct CorrectionOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Algebra the images must stay inside (used by the Newton fallback and
    /// the membership postcondition).
    pub codomain: Option<AlgebraRef>,
    /// Externally certified bound on ‖L∨‖, taken as a minimum with the
    /// internal certified route when checking the δ premise.
    pub defect_upper_hint: Option<f64>,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        CorrectionOptions {
            tol: tol::CORRECTION_TOL,
            max_iterations: 200,
            codomain: None,
            defect_upper_hint: None,
        }
    }
}

/// A corrected homomorphism with its convergence trace.
#[derive(Clone, Debug)]
pub struct Correction {
    pub map: AlgebraMap,
    pub trace: Vec<TracePoint>,
    pub used_newton: bool,
    /// Certified bound on ‖t − π‖.
    pub distance_upper: f64,
}

struct Cached {
    domain: AlgebraRef,
    /// coords of e_i·a_k per (i, k)
    left_products: Vec<Vec<Vec<C64>>>,
    /// coords of a_k, b_k
    pair_coords: Vec<(Vec<C64>, Vec<C64>)>,
    /// coords of e_i·e_j per (i, j)
    structure: Vec<Vec<Vec<C64>>>,
}

impl Cached {
    fn build(domain: &AlgebraRef, u: &TensorElement) -> Cached {
        let basis = domain.basis();
        let pair_coords: Vec<_> = u
            .pairs()
            .iter()
            .map(|(a, b)| {
                (
                    domain.coords(a).expect("diagonal factor"),
                    domain.coords(b).expect("diagonal factor"),
                )
            })
            .collect();
        let left_products: Vec<Vec<Vec<C64>>> = crate::exec::map_range(basis.len(), |i| {
            u.pairs()
                .iter()
                .map(|(a, _)| domain.coords(&basis[i].mul(a)).expect("product"))
                .collect()
        });
        let structure: Vec<Vec<Vec<C64>>> = crate::exec::map_range(basis.len(), |i| {
            basis
                .iter()
                .map(|ej| domain.coords(&basis[i].mul(ej)).expect("product"))
                .collect()
        });
        Cached {
            domain: Arc::clone(domain),
            left_products,
            pair_coords,
            structure,
        }
    }

    fn eval(&self, images: &[ComplexMatrix], coords: &[C64]) -> ComplexMatrix {
        let n = images[0].rows();
        let mut out = ComplexMatrix::zeros(n, n);
        for (c, im) in coords.iter().zip(images) {
            if c.re != 0.0 || c.im != 0.0 {
                out = out.add(&im.scale(*c));
            }
        }
        out
    }

    /// Certified defect upper bound and the raw basis-pair maximum.
    fn defect_upper(&self, images: &[ComplexMatrix]) -> f64 {
        let d = self.domain.dim();
        let rows = crate::exec::map_range(d, |i| {
            let li = &images[i];
            let mut max_op = 0.0_f64;
            let mut sum_fr = 0.0_f64;
            for j in 0..d {
                let lij = self.eval(images, &self.structure[i][j]);
                let defect = lij.sub(&li.mul(&images[j]));
                max_op = max_op.max(defect.operator_norm());
                let f = defect.frobenius_norm();
                sum_fr += f * f;
            }
            (max_op, sum_fr)
        });
        let max_op = rows.iter().map(|r| r.0).fold(0.0_f64, f64::max);
        let hs: f64 = rows.iter().map(|r| r.1).sum::<f64>().sqrt();
        let kappa = self.domain.kappa1();
        let n = self.domain.ambient_dim() as f64;
        (kappa * kappa * max_op).min(n * hs)
    }

    /// Certified upper bound on the map norm of `images − reference`.
    fn distance_upper(&self, images: &[ComplexMatrix], reference: &[ComplexMatrix]) -> f64 {
        let diffs: Vec<ComplexMatrix> = images
            .iter()
            .zip(reference)
            .map(|(a, b)| a.sub(b))
            .collect();
        let kappa_route = self.domain.kappa1()
            * diffs
                .iter()
                .map(|m| m.operator_norm())
                .fold(0.0_f64, f64::max);
        // √N·σ_F route on the difference map
        let out_dim = diffs[0].rows();
        let m = nalgebra::DMatrix::<C64>::from_fn(out_dim * out_dim, diffs.len(), |r, c| {
            diffs[c].get(r / out_dim, r % out_dim)
        });
        let sigma = m
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max);
        kappa_route.min((self.domain.ambient_dim() as f64).sqrt() * sigma)
    }
}

/// Turns an approximately multiplicative unital map into an exact
/// homomorphism within the ε budget, or reports why it cannot.
pub fn correct_to_homomorphism(
    t: &AlgebraMap,
    u: &TensorElement,
    budget: &JohnsonBudget,
    opts: &CorrectionOptions,
) -> Result<Correction> {
    if !t.is_unital() {
        return Err(Error::PremiseNotCertified {
            quantity: "unitality of the input map".into(),
            upper: f64::INFINITY,
            threshold: tol::UNITALITY,
        });
    }
    if !t.domain().same_as(u.algebra()) {
        return Err(Error::invalid("diagonal and map must share one algebra"));
    }
    let report = u.verify_diagonal();
    if !report.passes() {
        return Err(Error::PremiseNotCertified {
            quantity: "virtual diagonal axioms".into(),
            upper: report
                .commutation_residual
                .max(report.multiplication_residual),
            threshold: tol::DIAGONAL_RESIDUAL,
        });
    }
    let map_upper = t.certified_norm_upper();
    if map_upper > budget.mu * (1.0 + 1e-12) {
        return Err(Error::PremiseNotCertified {
            quantity: "map norm".into(),
            upper: map_upper,
            threshold: budget.mu,
        });
    }
    let internal_defect = t.certified_defect_upper();
    let defect_upper = match opts.defect_upper_hint {
        Some(h) => internal_defect.min(h),
        None => internal_defect,
    };
    if defect_upper > budget.delta * (1.0 + 1e-12) {
        return Err(Error::PremiseNotCertified {
            quantity: "multiplicativity defect".into(),
            upper: defect_upper,
            threshold: budget.delta,
        });
    }

    let domain = Arc::clone(t.domain());
    let cache = Cached::build(&domain, u);
    let start: Vec<ComplexMatrix> = t.images().to_vec();
    let mut images = start.clone();
    let mut trace = Vec::new();
    let mut used_newton = false;
    let out_dim = t.output_dim();
    let d = domain.dim();

    let mut converged = false;
    for iteration in 0..=opts.max_iterations {
        let defect = cache.defect_upper(&images);
        let distance = if iteration == 0 {
            0.0
        } else {
            cache.distance_upper(&images, &start)
        };
        trace.push(TracePoint {
            iteration,
            defect_upper: defect,
            distance_from_start: distance,
        });
        if defect <= opts.tol {
            converged = true;
            break;
        }
        // stall detection: less than 10% decrease over the last 5 steps
        let stalled = trace.len() >= 6 && {
            let now = trace[trace.len() - 1].defect_upper;
            let then = trace[trace.len() - 6].defect_upper;
            now > 0.9 * then
        };
        if stalled {
            let solved = newton_polish(&cache, &images, opts, out_dim)?;
            images = solved;
            used_newton = true;
            let defect = cache.defect_upper(&images);
            trace.push(TracePoint {
                iteration: iteration + 1,
                defect_upper: defect,
                distance_from_start: cache.distance_upper(&images, &start),
            });
            converged = defect <= opts.tol;
            break;
        }
        // averaged update with unit renormalization
        let mut j = ComplexMatrix::zeros(out_dim, out_dim);
        for (ca, cb) in &cache.pair_coords {
            j = j.add(&cache.eval(&images, ca).mul(&cache.eval(&images, cb)));
        }
        let j_inv = j.inverse().map_err(|e| e.at_stage("unit renormalization"))?;
        let new_images: Vec<ComplexMatrix> = crate::exec::map_range(d, |i| {
            let mut acc = ComplexMatrix::zeros(out_dim, out_dim);
            for (k, (_, cb)) in cache.pair_coords.iter().enumerate() {
                let lea = cache.eval(&images, &cache.left_products[i][k]);
                acc = acc.add(&lea.mul(&cache.eval(&images, cb)));
            }
            j_inv.mul(&acc)
        });
        images = new_images;
    }

    if !converged {
        let tail: Vec<f64> = trace
            .iter()
            .rev()
            .take(5)
            .map(|p| p.defect_upper)
            .collect();
        return Err(Error::ConvergenceFailure {
            iterations: trace.len(),
            tail,
        });
    }

    // postconditions: never return a silent partial result
    let unit_residual = {
        let unit_image = cache.eval(&images, domain.coords_of_unit());
        unit_image
            .sub(&ComplexMatrix::identity(out_dim))
            .operator_norm()
    };
    if unit_residual > 1e-12 {
        return Err(Error::ConvergenceFailure {
            iterations: trace.len(),
            tail: vec![unit_residual],
        });
    }
    let distance_upper = cache.distance_upper(&images, &start);
    if distance_upper > budget.epsilon {
        return Err(Error::ConvergenceFailure {
            iterations: trace.len(),
            tail: vec![distance_upper, budget.epsilon],
        });
    }
    if let Some(codomain) = &opts.codomain {
        let worst = images
            .iter()
            .map(|im| codomain.span_residual(im))
            .fold(0.0_f64, f64::max);
        if worst > tol::MEMBERSHIP_RESIDUAL {
            return Err(Error::ConvergenceFailure {
                iterations: trace.len(),
                tail: vec![worst],
            });
        }
    }

    let pi = AlgebraMap::from_images(domain, images)?
        .with_norm_upper(map_upper + distance_upper);
    Ok(Correction {
        map: pi,
        trace,
        used_newton,
        distance_upper,
    })
}

/// Gauss–Newton on the polynomial system {π(e_i)π(e_j) = π(e_i e_j),
/// π(1) = I}, with images parameterized in the codomain basis so the
/// solution cannot drift out of the target algebra.
fn newton_polish(
    cache: &Cached,
    seed_images: &[ComplexMatrix],
    opts: &CorrectionOptions,
    out_dim: usize,
) -> Result<Vec<ComplexMatrix>> {
    let codomain: AlgebraRef = match &opts.codomain {
        Some(c) => Arc::clone(c),
        None => {
            let mut gens: Vec<ComplexMatrix> = seed_images.to_vec();
            gens.push(ComplexMatrix::identity(out_dim));
            Arc::new(FdAlgebra::generate_closure(out_dim, &gens)?)
        }
    };
    let d = cache.domain.dim();
    let dn = codomain.dim();
    let e2 = out_dim * out_dim;
    // unknowns: c[i*dn + l] with π_i = Σ_l c_il f_l
    let mut c: Vec<C64> = Vec::with_capacity(d * dn);
    for im in seed_images {
        c.extend(codomain.coords(im)?);
    }
    let unit_coords = cache.domain.coords_of_unit().to_vec();
    let f_basis = codomain.basis();

    let images_of = |c: &[C64]| -> Vec<ComplexMatrix> {
        (0..d)
            .map(|i| {
                let mut m = ComplexMatrix::zeros(out_dim, out_dim);
                for (l, f) in f_basis.iter().enumerate() {
                    let z = c[i * dn + l];
                    if z != ZERO {
                        m = m.add(&f.scale(z));
                    }
                }
                m
            })
            .collect()
    };
    let residual_of = |imgs: &[ComplexMatrix]| -> nalgebra::DVector<C64> {
        let mut r = nalgebra::DVector::<C64>::zeros((d * d + 1) * e2);
        for i in 0..d {
            for j in 0..d {
                let target = cache.eval(imgs, &cache.structure[i][j]);
                let prod = imgs[i].mul(&imgs[j]);
                let diff = prod.sub(&target);
                let base = (i * d + j) * e2;
                for (idx, z) in diff.vec_entries().into_iter().enumerate() {
                    r[base + idx] = z;
                }
            }
        }
        let unit_image = cache.eval(imgs, &unit_coords);
        let diff = unit_image.sub(&ComplexMatrix::identity(out_dim));
        let base = d * d * e2;
        for (idx, z) in diff.vec_entries().into_iter().enumerate() {
            r[base + idx] = z;
        }
        r
    };

    let mut imgs = images_of(&c);
    let mut rnorm = residual_of(&imgs).norm();
    for _round in 0..40 {
        if cache.defect_upper(&imgs) <= opts.tol {
            return Ok(imgs);
        }
        // complex Jacobian: the system is polynomial (no conjugates)
        let rows = (d * d + 1) * e2;
        let cols = d * dn;
        let mut jac = nalgebra::DMatrix::<C64>::zeros(rows, cols);
        for k in 0..d {
            for l in 0..dn {
                let col = k * dn + l;
                let f = &f_basis[l];
                for i in 0..d {
                    for j in 0..d {
                        // ∂(π_iπ_j − Σ_m s_m π_m)/∂c_kl
                        let mut block = ComplexMatrix::zeros(out_dim, out_dim);
                        if i == k {
                            block = block.add(&f.mul(&imgs[j]));
                        }
                        if j == k {
                            block = block.add(&imgs[i].mul(f));
                        }
                        let s = cache.structure[i][j][k];
                        if s != ZERO {
                            block = block.sub(&f.scale(s));
                        }
                        if i != k && j != k && s == ZERO {
                            continue;
                        }
                        let base = (i * d + j) * e2;
                        for (idx, z) in block.vec_entries().into_iter().enumerate() {
                            jac[(base + idx, col)] = z;
                        }
                    }
                }
                let w = unit_coords[k];
                if w != ZERO {
                    let base = d * d * e2;
                    for (idx, z) in f.scale(w).vec_entries().into_iter().enumerate() {
                        jac[(base + idx, col)] = z;
                    }
                }
            }
        }
        let r = residual_of(&imgs);
        let svd = jac.svd(true, true);
        let step = svd
            .solve(&r, 1e-12)
            .map_err(|_| Error::invalid("newton least-squares solve failed"))?;
        let mut accepted = false;
        let mut damping = 1.0_f64;
        for _ in 0..12 {
            let cand: Vec<C64> = c
                .iter()
                .zip(step.iter())
                .map(|(ci, si)| ci - si * damping)
                .collect();
            let cand_imgs = images_of(&cand);
            let cand_norm = residual_of(&cand_imgs).norm();
            if cand_norm < rnorm {
                c = cand;
                imgs = cand_imgs;
                rnorm = cand_norm;
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if cache.defect_upper(&imgs) <= opts.tol {
        Ok(imgs)
    } else {
        Err(Error::ConvergenceFailure {
            iterations: 40,
            tail: vec![cache.defect_upper(&imgs)],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::FdAlgebra;

    #[test]
    fn delta_matches_printed_formula() {
        // ε = 0.12, μ = 2, ‖u‖ = 1: δ = 0.12/36 = 1/300
        let b = delta_threshold(0.12, 2.0, 1.0).unwrap();
        assert!((b.delta - 1.0 / 300.0).abs() <= 1e-18);
        assert!(b.identity_residual() <= 1e-15);
        // μ = 1, ‖u‖ = 1: δ = ε/12
        for eps in [0.01, 0.3, 0.99] {
            let b = delta_threshold(eps, 1.0, 1.0).unwrap();
            assert!((b.delta - eps / 12.0).abs() <= 1e-16);
        }
    }

    #[test]
    fn delta_rejects_bad_ranges() {
        assert!(delta_threshold(0.0, 1.0, 1.0).is_err());
        assert!(delta_threshold(1.0, 1.0, 1.0).is_err());
        assert!(delta_threshold(0.5, 0.0, 1.0).is_err());
        assert!(delta_threshold(0.5, 1.0, 0.5).is_err());
    }

    #[test]
    fn delta_is_monotone_decreasing_in_mu_and_u() {
        let eps = 0.3;
        let mut prev = f64::INFINITY;
        for mu in [0.5, 1.0, 2.0, 4.0] {
            let b = delta_threshold(eps, mu, 1.0).unwrap();
            assert!(b.delta < prev);
            prev = b.delta;
        }
        let mut prev = f64::INFINITY;
        for un in [1.0, 1.5, 2.0, 4.0] {
            let b = delta_threshold(eps, 1.0, un).unwrap();
            assert!(b.delta < prev);
            prev = b.delta;
        }
    }

    #[test]
    fn exact_homomorphism_is_a_fixed_point() {
        let u = TensorElement::weyl_diagonal(&[2]).unwrap();
        let a = Arc::clone(u.algebra());
        let id = AlgebraMap::identity(Arc::clone(&a));
        let budget = delta_threshold(0.5, 1.0, 1.0).unwrap();
        let out = correct_to_homomorphism(&id, &u, &budget, &CorrectionOptions::default())
            .unwrap();
        assert!(out.distance_upper <= 1e-12);
        assert!(!out.used_newton);
        for (im, e) in out.map.images().iter().zip(a.basis()) {
            assert!(im.sub(e).operator_norm() <= 1e-12);
        }
    }

    #[test]
    fn corrects_rank_one_perturbation_of_identity_on_m2() {
        let u = TensorElement::weyl_diagonal(&[2]).unwrap();
        let a = Arc::clone(u.algebra());
        let e12 = ComplexMatrix::unit(2, 0, 1);
        // perturb id by 0.001·(tr(sz·a))·e12; vanishes at the unit, so L
        // stays unital
        let sz = ComplexMatrix::diagonal(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
        let images: Vec<ComplexMatrix> = a
            .basis()
            .iter()
            .map(|e| {
                let t = e.mul(&sz).trace();
                e.add(&e12.scale(t * C64::new(0.001, 0.0)))
            })
            .collect();
        let l = AlgebraMap::from_images(Arc::clone(&a), images).unwrap();
        assert!(l.is_unital());
        let mu = l.certified_norm_upper();
        let defect = l.certified_defect_upper();
        let u_bound = u.projective_norm_upper_bound();
        // pick ε so that the defect premise holds
        let eps = (defect * (4.0 * u_bound + 8.0 * mu * mu) * 1.5).min(0.9);
        let budget = delta_threshold(eps, mu, u_bound).unwrap();
        let out =
            correct_to_homomorphism(&l, &u, &budget, &CorrectionOptions::default()).unwrap();
        assert!(out.map.certified_defect_upper() <= 1e-10);
        assert!(out.distance_upper <= budget.epsilon);
        assert!(out.map.is_unital());
        // defect decreases monotonically below the threshold
        for w in out.trace.windows(2) {
            if w[0].defect_upper < budget.delta {
                assert!(w[1].defect_upper <= w[0].defect_upper * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn premise_violation_is_reported() {
        let u = TensorElement::weyl_diagonal(&[2]).unwrap();
        let a = Arc::clone(u.algebra());
        let id = AlgebraMap::identity(Arc::clone(&a));
        let l = {
            // large non-multiplicative bump
            let e12 = ComplexMatrix::unit(2, 0, 1);
            let images: Vec<ComplexMatrix> = id
                .images()
                .iter()
                .enumerate()
                .map(|(k, e)| {
                    if k == 1 {
                        e.add(&e12.scale_re(0.6))
                    } else {
                        e.clone()
                    }
                })
                .collect();
            AlgebraMap::from_images(Arc::clone(&a), images).unwrap()
        };
        // mu is generous so the defect premise is the one that fails
        let budget = delta_threshold(0.05, 8.0, 1.0).unwrap();
        match correct_to_homomorphism(&l, &u, &budget, &CorrectionOptions::default()) {
            Err(Error::PremiseNotCertified { quantity, upper, threshold }) => {
                assert!(quantity.contains("defect"), "fired: {quantity}");
                assert!(upper > threshold);
            }
            other => panic!("expected premise error, got {other:?}"),
        }
    }

    #[test]
    fn correction_stays_inside_declared_codomain() {
        // T = conditional expectation restricted to a conjugated diagonal
        let sizes = [1usize, 1];
        let model = Arc::new(FdAlgebra::block_diagonal_model(&sizes).unwrap());
        let u0 = TensorElement::weyl_diagonal_for(Arc::clone(&model)).unwrap();
        let v = ComplexMatrix::identity(2).add(&ComplexMatrix::unit(2, 0, 1).scale_re(1e-3));
        let a = Arc::new(FdAlgebra::conjugated(&model, &v).unwrap());
        let u = u0.transport(&v, Arc::clone(&a)).unwrap();
        let p = crate::maps::ProjectionOnto::conditional_expectation(&sizes).unwrap();
        let n = Arc::clone(p.range());
        let t = crate::maps::compress(&p, Arc::clone(&a)).unwrap();
        let mu = p.norm_upper();
        let u_bound = u.projective_norm_upper_bound().max(1.0);
        let defect = t.certified_defect_upper();
        let eps = (defect * (4.0 * u_bound + 8.0 * mu * mu * u_bound * u_bound) * 2.0).min(0.9);
        let budget = delta_threshold(eps, mu, u_bound).unwrap();
        let opts = CorrectionOptions {
            codomain: Some(Arc::clone(&n)),
            ..CorrectionOptions::default()
        };
        let out = correct_to_homomorphism(&t, &u, &budget, &opts).unwrap();
        for im in out.map.images() {
            assert!(n.span_residual(im) <= 1e-10);
        }
    }
}
