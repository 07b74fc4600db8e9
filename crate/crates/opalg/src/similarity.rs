//! The intertwiner construction for neighboring representations, the Ϝ
//! polynomial, the near-inclusion pipeline, and the unitary refinement.
//!
//! The pipeline follows the theorem's proof verbatim: compress the
//! projection to T = P|_A, correct T to a homomorphism π within the Johnson
//! budget, intertwine π with the identity representation through the virtual
//! diagonal, and check every conclusion directly on matrices.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraRef, DistanceBudget, FdAlgebra};
use crate::diagonal::TensorElement;
use crate::error::{Error, Result};
use crate::johnson::{self, CorrectionOptions, JohnsonBudget, TracePoint};
use crate::maps::{self, AlgebraMap, NormBudget, ProjectionOnto};
use crate::matrix::ComplexMatrix;
use crate::tol;

/// Ϝ(x, y) = (1 + x)(y + 4(x+2)y² + 8(x+2)x²y³) for x, y ≥ 1.
///
/// Projection norms and diagonal norms are both ≥ 1, so smaller inputs are
/// rejected; on that region Ϝ ≥ Ϝ(1,1) = 74.
pub fn digamma(x: f64, y: f64) -> Result<f64> {
    if !(x >= 1.0 && y >= 1.0) {
        return Err(Error::invalid("digamma arguments must be at least one"));
    }
    Ok((1.0 + x) * (y + 4.0 * (x + 2.0) * y * y + 8.0 * (x + 2.0) * x * x * y * y * y))
}

/// Diagnostics of one intertwiner construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntertwinerDiagnostics {
    /// max_i ‖π1(e_i)·S − S·π2(e_i)‖ / ‖e_i‖.
    pub intertwining_residual: f64,
    pub sigma_min: f64,
    pub s_minus_identity: f64,
    /// Certified ‖u‖·‖π1 − π2‖·min{‖π1‖, ‖π2‖} product.
    pub bound_value: f64,
    pub bound_satisfied: bool,
    /// Frobenius residual of S against the algebra generated by the images.
    pub membership_residual: f64,
    /// Whether ‖π1 − π2‖·‖u‖·min{‖π1‖,‖π2‖} < 1 was certified. The
    /// construction is still returned when not: the premise is sufficient,
    /// not necessary.
    pub premise_certified: bool,
    pub diff_upper: f64,
}

/// The intertwiner S = Ψ_{π1,π2}(u) for two unital homomorphisms.
pub struct Intertwiner {
    pub s: ComplexMatrix,
    pub diagnostics: IntertwinerDiagnostics,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IntertwinerOptions {
    /// Fail (rather than warn) when the premise is not certified.
    pub require_premise: bool,
    /// Externally certified bound on ‖π1 − π2‖, combined by minimum with
    /// the internal certified routes.
    pub diff_upper_hint: Option<f64>,
    /// Skip the generated-algebra membership check (the pipeline re-checks
    /// membership against A ∪ N itself).
    pub skip_membership: bool,
}

pub fn intertwiner(
    pi1: &AlgebraMap,
    pi2: &AlgebraMap,
    u: &TensorElement,
    opts: &IntertwinerOptions,
) -> Result<Intertwiner> {
    for (name, pi) in [("pi1", pi1), ("pi2", pi2)] {
        if !pi.is_unital() {
            return Err(Error::invalid(format!("{name} must be unital")));
        }
        let defect = pi.certified_defect_upper();
        if defect > tol::HOMOMORPHISM_DEFECT {
            return Err(Error::PremiseNotCertified {
                quantity: format!("{name} homomorphism defect"),
                upper: defect,
                threshold: tol::HOMOMORPHISM_DEFECT,
            });
        }
    }
    if !pi1.domain().same_as(pi2.domain()) || !pi1.domain().same_as(u.algebra()) {
        return Err(Error::invalid(
            "intertwiner needs both representations on the diagonal's algebra",
        ));
    }
    let u_upper = u.projective_norm_upper_bound().max(1.0);
    let diff = pi1.sub(pi2)?;
    let mut diff_upper = diff.certified_norm_upper();
    if let Some(h) = opts.diff_upper_hint {
        diff_upper = diff_upper.min(h);
    }
    let min_norm_upper = pi1
        .certified_norm_upper()
        .min(pi2.certified_norm_upper());
    let bound_value = u_upper * diff_upper * min_norm_upper;
    let premise_certified = bound_value < 1.0;
    if !premise_certified && opts.require_premise {
        return Err(Error::PremiseNotCertified {
            quantity: "‖π1 − π2‖·‖u‖·min{‖π1‖,‖π2‖}".into(),
            upper: bound_value,
            threshold: 1.0,
        });
    }

    let s = maps::psi_apply(pi1, pi2, u)?;
    let k = s.rows();
    let identity = ComplexMatrix::identity(k);
    let domain = pi1.domain();
    let mut intertwining_residual = 0.0_f64;
    for e in domain.basis() {
        let lhs = pi1.apply(e)?.mul(&s);
        let rhs = s.mul(&pi2.apply(e)?);
        intertwining_residual =
            intertwining_residual.max(lhs.sub(&rhs).operator_norm() / e.operator_norm());
    }
    let s_minus_identity = s.sub(&identity).operator_norm();
    let membership_residual = if opts.skip_membership {
        0.0
    } else {
        let mut gens: Vec<ComplexMatrix> = pi1.images().to_vec();
        gens.extend_from_slice(pi2.images());
        let generated = FdAlgebra::generate_closure(k, &gens)?;
        generated.span_residual(&s)
    };
    let diagnostics = IntertwinerDiagnostics {
        intertwining_residual,
        sigma_min: s.smallest_singular_value(),
        s_minus_identity,
        bound_value,
        bound_satisfied: s_minus_identity <= bound_value + tol::BOUND_SLACK,
        membership_residual,
        premise_certified,
        diff_upper,
    };
    Ok(Intertwiner { s, diagnostics })
}

/// Residuals attached to the unitary refinement of a certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnitaryReport {
    pub matrix: ComplexMatrix,
    /// ‖U*U − I‖.
    pub orthogonality_residual: f64,
    /// max_i distance(U e_i U*, N)/‖e_i‖.
    pub conjugation_residual: f64,
    pub u_minus_identity: f64,
    /// √2·Ϝ_P·γ / √(1 + √(1 − Ϝ_P²γ²)) with Ϝ_P = Ϝ(‖P‖, 1).
    pub bound_value: f64,
    pub bound_satisfied: bool,
    pub membership_residual: f64,
}

/// Machine-checkable record of one near-inclusion theorem run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub scenario_id: String,
    pub seed: i64,
    pub gamma_upper: f64,
    pub p_norm_upper: f64,
    pub u_norm_upper: f64,
    pub digamma_value: f64,
    pub threshold_ok: bool,
    pub epsilon: f64,
    pub delta: f64,
    pub similarity: ComplexMatrix,
    pub s_minus_identity: f64,
    pub conjugation_residual: f64,
    pub membership_residual: f64,
    pub intertwining_residual: f64,
    pub bound_satisfied: bool,
    pub convergence_trace: Vec<TracePoint>,
    pub unitary: Option<UnitaryReport>,
}

impl Certificate {
    /// The two decision predicates restated as pure functions of the record.
    pub fn recompute_threshold_ok(&self) -> bool {
        self.gamma_upper < 1.0 / self.digamma_value
    }

    pub fn recompute_bound_satisfied(&self) -> bool {
        self.s_minus_identity <= self.digamma_value * self.gamma_upper + tol::BOUND_SLACK
    }

    /// Whether every conclusion holds at the standard tolerances.
    pub fn conclusions_hold(&self) -> bool {
        self.threshold_ok
            && self.bound_satisfied
            && self.conjugation_residual <= tol::CONJUGATION_RESIDUAL
            && self.membership_residual <= tol::MEMBERSHIP_RESIDUAL
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub scenario_id: String,
    pub tol: f64,
    pub norm_budget: NormBudget,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            scenario_id: String::new(),
            tol: tol::CORRECTION_TOL,
            norm_budget: NormBudget::light(),
        }
    }
}

/// Runs the near-inclusion theorem end to end and fills a certificate.
///
/// Stages: threshold check γ < 1/Ϝ(‖P‖,‖u‖); T = P|_A with the two proof
/// inequalities sanity-checked; Johnson budget δ = (2+‖P‖)(1+‖P‖)γ,
/// ε = δ(4‖u‖+8μ²‖u‖²); correction T → π valued in N; S intertwining π
/// against the identity representation; conclusion residuals on S A S⁻¹.
pub fn near_inclusion_pipeline(
    a: &AlgebraRef,
    n: &AlgebraRef,
    p: &ProjectionOnto,
    u: &TensorElement,
    gamma_upper: f64,
    seed: i64,
    opts: &PipelineOptions,
) -> Result<Certificate> {
    // inputs
    if a.ambient_dim() != n.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.ambient_dim(),
            got: n.ambient_dim(),
        }
        .at_stage("inputs"));
    }
    if !p.range().same_as(n) {
        return Err(Error::invalid("projection range must be the container").at_stage("inputs"));
    }
    if !u.algebra().same_as(a) {
        return Err(Error::invalid("diagonal must live over the included algebra").at_stage("inputs"));
    }
    if gamma_upper < 0.0 {
        return Err(Error::invalid("gamma must be nonnegative").at_stage("inputs"));
    }
    let diag_report = u.verify_diagonal();
    if !diag_report.passes() {
        return Err(Error::PremiseNotCertified {
            quantity: "virtual diagonal axioms".into(),
            upper: diag_report
                .commutation_residual
                .max(diag_report.multiplication_residual),
            threshold: tol::DIAGONAL_RESIDUAL,
        }
        .at_stage("inputs"));
    }

    // threshold
    let u_upper = u.projective_norm_upper_bound().max(1.0);
    let p_upper = p.norm_upper().max(1.0);
    let digamma_value = digamma(p_upper, u_upper).map_err(|e| e.at_stage("threshold"))?;
    let threshold = 1.0 / digamma_value;
    if gamma_upper >= threshold {
        return Err(Error::ThresholdNotMet {
            gamma_upper,
            threshold,
        }
        .at_stage("threshold"));
    }

    // compression T = P|_A and the proof inequalities
    let t = maps::compress(p, Arc::clone(a)).map_err(|e| e.at_stage("compress"))?;
    if !t.is_unital() {
        return Err(Error::invalid("compression is not unital").at_stage("compress"));
    }
    let id_a = AlgebraMap::identity(Arc::clone(a));
    let eq4_bound = (1.0 + p_upper) * gamma_upper;
    let t_minus_id = t.sub(&id_a).map_err(|e| e.at_stage("compress"))?;
    let eq4_lower = t_minus_id.map_norm(seed, &opts.norm_budget).lower;
    if eq4_lower > eq4_bound + tol::BOUND_SLACK {
        return Err(Error::PremiseNotCertified {
            quantity: "‖T − id_A‖ against (1+‖P‖)γ".into(),
            upper: eq4_lower,
            threshold: eq4_bound,
        }
        .at_stage("compress"));
    }
    let delta = (2.0 + p_upper) * (1.0 + p_upper) * gamma_upper;
    let eq5_lower = t.defect_norm(seed, &opts.norm_budget).lower;
    if eq5_lower > delta + tol::BOUND_SLACK {
        return Err(Error::PremiseNotCertified {
            quantity: "‖T∨‖ against (2+‖P‖)(1+‖P‖)γ".into(),
            upper: eq5_lower,
            threshold: delta,
        }
        .at_stage("compress"));
    }

    // budget: ε = δ(4‖u‖ + 8μ²‖u‖²) with μ = ‖P‖
    let mu = p_upper;
    let epsilon = delta * (4.0 * u_upper + 8.0 * mu * mu * u_upper * u_upper);
    if gamma_upper > 0.0 && epsilon >= 1.0 {
        return Err(Error::invalid(format!("epsilon = {epsilon} escaped (0,1)")).at_stage("budget"));
    }
    // ε + (1+‖P‖)γ = Ϝγ/‖u‖ < 1/‖u‖
    if epsilon + eq4_bound >= 1.0 / u_upper + 1e-12 {
        return Err(Error::invalid("proof identity ε + (1+‖P‖)γ < 1/‖u‖ failed").at_stage("budget"));
    }
    let budget = JohnsonBudget {
        mu,
        u_norm: u_upper,
        epsilon: if epsilon > 0.0 { epsilon } else { f64::MIN_POSITIVE },
        delta: if delta > 0.0 { delta } else { f64::MIN_POSITIVE },
    };

    // Johnson correction, staying inside N
    let correction = johnson::correct_to_homomorphism(
        &t,
        u,
        &budget,
        &CorrectionOptions {
            tol: opts.tol,
            codomain: Some(Arc::clone(n)),
            defect_upper_hint: Some(budget.delta),
            ..CorrectionOptions::default()
        },
    )
    .map_err(|e| e.at_stage("johnson"))?;
    let pi = &correction.map;

    // intertwiner between π and the identity representation:
    // ad_S ∘ id_A = π, so S A S⁻¹ = π(A) ⊂ N.
    let diff_hint = correction.distance_upper + eq4_bound;
    let inter = intertwiner(
        pi,
        &id_a,
        u,
        &IntertwinerOptions {
            require_premise: true,
            diff_upper_hint: Some(diff_hint),
            skip_membership: true,
        },
    )
    .map_err(|e| e.at_stage("intertwiner"))?;
    let s = inter.s;
    let s_inv = s.inverse().map_err(|e| e.at_stage("intertwiner"))?;

    // conclusions, checked directly
    let dist_budget = DistanceBudget::default();
    let residuals = crate::exec::map_range(a.dim(), |i| {
        let e = &a.basis()[i];
        let conj = s.mul(e).mul(&s_inv);
        let d = n
            .distance_to_detailed(&conj, &dist_budget)
            .expect("dimensions agree")
            .upper;
        d / e.operator_norm()
    });
    let conjugation_residual = residuals.into_iter().fold(0.0_f64, f64::max);
    let membership_residual = {
        let mut gens: Vec<ComplexMatrix> = a.basis().to_vec();
        gens.extend_from_slice(n.basis());
        let generated =
            FdAlgebra::generate_closure(a.ambient_dim(), &gens).map_err(|e| e.at_stage("certificate"))?;
        generated.span_residual(&s)
    };
    let s_minus_identity = inter.diagnostics.s_minus_identity;
    Ok(Certificate {
        scenario_id: opts.scenario_id.clone(),
        seed,
        gamma_upper,
        p_norm_upper: p_upper,
        u_norm_upper: u_upper,
        digamma_value,
        threshold_ok: true,
        epsilon,
        delta,
        similarity: s,
        s_minus_identity,
        conjugation_residual,
        membership_residual,
        intertwining_residual: inter.diagnostics.intertwining_residual,
        bound_satisfied: s_minus_identity <= digamma_value * gamma_upper + tol::BOUND_SLACK,
        convergence_trace: correction.trace,
        unitary: None,
    })
}

/// Refines an accepted certificate with the polar unitary when the included
/// algebra is a C*-model (adjoint-closed, norm-one diagonal).
pub fn unitarize(
    cert: &Certificate,
    a: &AlgebraRef,
    n: &AlgebraRef,
) -> Result<Certificate> {
    if !a.is_adjoint_closed() {
        return Err(Error::invalid(
            "unitary refinement needs an adjoint-closed included algebra",
        ));
    }
    if (cert.u_norm_upper - 1.0).abs() > tol::BOUND_SLACK {
        return Err(Error::invalid(
            "unitary refinement needs a norm-one virtual diagonal",
        ));
    }
    let (unitary, _positive) = cert.similarity.polar_decompose()?;
    let k = unitary.rows();
    let orthogonality_residual = unitary
        .adjoint()
        .mul(&unitary)
        .sub(&ComplexMatrix::identity(k))
        .operator_norm();
    let dist_budget = DistanceBudget::default();
    let residuals = crate::exec::map_range(a.dim(), |i| {
        let e = &a.basis()[i];
        let conj = unitary.mul(e).mul(&unitary.adjoint());
        let d = n
            .distance_to_detailed(&conj, &dist_budget)
            .expect("dimensions agree")
            .upper;
        d / e.operator_norm()
    });
    let conjugation_residual = residuals.into_iter().fold(0.0_f64, f64::max);
    let u_minus_identity = unitary.sub(&ComplexMatrix::identity(k)).operator_norm();
    let digamma_p = digamma(cert.p_norm_upper, 1.0)?;
    let g = cert.gamma_upper;
    let fg = digamma_p * g;
    let bound_value = if fg < 1.0 {
        (2.0_f64).sqrt() * fg / (1.0 + (1.0 - fg * fg).sqrt()).sqrt()
    } else {
        f64::INFINITY
    };
    let membership_residual = {
        let mut gens: Vec<ComplexMatrix> = a.basis().to_vec();
        gens.extend_from_slice(n.basis());
        let generated = FdAlgebra::generate_closure(a.ambient_dim(), &gens)?;
        generated.span_residual(&unitary)
    };
    let mut out = cert.clone();
    out.unitary = Some(UnitaryReport {
        matrix: unitary,
        orthogonality_residual,
        conjugation_residual,
        u_minus_identity,
        bound_value,
        bound_satisfied: u_minus_identity <= bound_value + tol::BOUND_SLACK,
        membership_residual,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::C64;

    #[test]
    fn digamma_at_one_one_is_seventy_four() {
        assert_eq!(digamma(1.0, 1.0).unwrap(), 74.0);
    }

    #[test]
    fn digamma_at_two_one_matches_symbolic_expansion() {
        // (1+2)·(1 + 4·4·1 + 8·4·4·1) = 3·145 = 435
        assert_eq!(digamma(2.0, 1.0).unwrap(), 435.0);
    }

    #[test]
    fn digamma_rejects_sub_unit_arguments() {
        assert!(digamma(0.5, 1.0).is_err());
        assert!(digamma(1.0, 0.99).is_err());
    }

    #[test]
    fn digamma_monotone_and_at_least_74_on_grid() {
        let grid: Vec<f64> = (0..=12).map(|k| 1.0 + 0.25 * k as f64).collect();
        for &x in &grid {
            for &y in &grid {
                let f = digamma(x, y).unwrap();
                assert!(f >= 74.0);
                assert!(digamma(x + 0.25, y).unwrap() > f);
                assert!(digamma(x, y + 0.25).unwrap() > f);
            }
        }
    }

    #[test]
    fn intertwiner_of_equal_representations_is_identity() {
        let u = TensorElement::weyl_diagonal(&[3]).unwrap();
        let a = Arc::clone(u.algebra());
        let id = AlgebraMap::identity(Arc::clone(&a));
        let out = intertwiner(&id, &id, &u, &IntertwinerOptions::default()).unwrap();
        assert!(
            out.s
                .sub(&ComplexMatrix::identity(3))
                .operator_norm()
                <= 1e-10
        );
        assert!(out.diagnostics.premise_certified);
        assert!(out.diagnostics.intertwining_residual <= 1e-12);
    }

    #[test]
    fn intertwiner_matches_weyl_twirl_closed_form() {
        // π1 = id, π2 = ad_V: S = (tr V / n)·V⁻¹
        for n in [2usize, 3, 4] {
            let u = TensorElement::weyl_diagonal(&[n]).unwrap();
            let a = Arc::clone(u.algebra());
            let h = ComplexMatrix::from_fn(n, n, |i, j| {
                C64::new((2 * i + j) as f64 * 0.13, (i as f64) - 0.4 * (j as f64))
            })
            .hermitian_part();
            let v = ComplexMatrix::unitary_exp_hermitian(
                &h.scale_re(1.0 / h.operator_norm()),
                0.04,
            )
            .unwrap();
            let id = AlgebraMap::identity(Arc::clone(&a));
            let adv = AlgebraMap::ad(Arc::clone(&a), &v).unwrap();
            let out = intertwiner(&id, &adv, &u, &IntertwinerOptions::default()).unwrap();
            let expected = v
                .inverse()
                .unwrap()
                .scale(v.trace() / C64::new(n as f64, 0.0));
            assert!(out.s.sub(&expected).operator_norm() <= 1e-10);
            assert!(out.diagnostics.intertwining_residual <= 1e-10);
            assert!(out.diagnostics.bound_satisfied);
            assert!(out.diagnostics.sigma_min > 0.0);
        }
    }
}
