//! Scenario generation, near-inclusion constant estimation, batch
//! execution, certificate documents, and offline re-verification.
//!
//! A scenario plants a similarity: A = S₀·(⊕_k M_{n_k})·S₀⁻¹ sits near a
//! container algebra N that admits a bounded projection, and the virtual
//! diagonal is transported along S₀. The pipeline must then recover some
//! similarity with certified bounds.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraRef, DistanceBudget, FdAlgebra};
use crate::diagonal::{TensorElement, TensorElementWire};
use crate::error::{Error, Result};
use crate::exec;
use crate::maps::{Bracket, ProjectionOnto};
use crate::matrix::{C64, ComplexMatrix};
use crate::similarity::{self, Certificate, PipelineOptions};
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContainerKind {
    FullMatrixAlgebra,
    BlockDiagonal,
    UpperBlockTriangular,
}

impl ContainerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ContainerKind::FullMatrixAlgebra => "full",
            ContainerKind::BlockDiagonal => "bd",
            ContainerKind::UpperBlockTriangular => "ubt",
        }
    }
}

impl std::str::FromStr for ContainerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full-matrix-algebra" | "full" => Ok(ContainerKind::FullMatrixAlgebra),
            "block-diagonal" | "bd" => Ok(ContainerKind::BlockDiagonal),
            "upper-block-triangular" | "ubt" => Ok(ContainerKind::UpperBlockTriangular),
            other => Err(Error::invalid(format!("unknown container kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    /// Unitary plant: A stays a C*-model, the transported diagonal keeps
    /// norm one, and the corollary path applies.
    Unitary,
    /// General invertible plant I + s·G.
    General,
}

impl ContainerKind {
    /// Default plant: C*-compatible containers get unitary similarities.
    pub fn default_similarity(&self) -> SimilarityKind {
        match self {
            ContainerKind::BlockDiagonal | ContainerKind::FullMatrixAlgebra => {
                SimilarityKind::Unitary
            }
            ContainerKind::UpperBlockTriangular => SimilarityKind::General,
        }
    }
}

/// Generation parameters; see the CLI `generate` subcommand.
#[derive(Clone, Debug)]
pub struct ScenarioParams {
    pub block_sizes: Vec<usize>,
    pub ambient_dim: Option<usize>,
    pub container: ContainerKind,
    pub similarity: Option<SimilarityKind>,
    pub strength: f64,
}

/// A generated test-bed instance for the near-inclusion theorem.
#[derive(Clone, Debug)]
pub struct PerturbationScenario {
    pub seed: i64,
    pub ambient_dim: usize,
    pub block_sizes: Vec<usize>,
    pub container: ContainerKind,
    pub similarity_kind: SimilarityKind,
    pub similarity_strength: f64,
    /// The planted similarity S₀ with A = S₀·(block model)·S₀⁻¹.
    pub planted: ComplexMatrix,
    pub a: AlgebraRef,
    pub n: AlgebraRef,
    pub p: ProjectionOnto,
    pub u: TensorElement,
    pub gamma_bracket: Bracket,
}

impl PerturbationScenario {
    pub fn scenario_id(&self) -> String {
        let blocks = self
            .block_sizes
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join("+");
        format!(
            "{}-b{}-seed{}-s{:.3e}",
            self.container.tag(),
            blocks,
            self.seed,
            self.similarity_strength
        )
    }

    /// True when the corollary's C*-hypotheses hold.
    pub fn cstar_eligible(&self) -> bool {
        self.a.is_adjoint_closed()
            && (self.u.projective_norm_upper_bound() - 1.0).abs() <= tol::BOUND_SLACK
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    let entries: Vec<C64> = (0..n * n)
        .map(|_| C64::new(gaussian(rng), gaussian(rng)))
        .collect();
    ComplexMatrix::from_entries(n, n, entries).expect("gaussian entries are finite")
}

/// Planted similarity with ‖S₀ − I‖ equal to `strength` (up to roundoff).
fn planted_similarity(
    rng: &mut ChaCha8Rng,
    n: usize,
    kind: SimilarityKind,
    strength: f64,
) -> Result<ComplexMatrix> {
    if strength == 0.0 {
        return Ok(ComplexMatrix::identity(n));
    }
    match kind {
        SimilarityKind::Unitary => {
            let h = random_matrix(rng, n).hermitian_part();
            let hn = h.operator_norm();
            if hn < 1e-12 {
                return Ok(ComplexMatrix::identity(n));
            }
            // eigenvalues of h/‖h‖ reach ±1, so ‖exp(iθh) − I‖ = 2 sin(θ/2)
            let theta = 2.0 * (strength / 2.0).asin();
            ComplexMatrix::unitary_exp_hermitian(&h.scale_re(1.0 / hn), theta)
        }
        SimilarityKind::General => {
            if strength >= 1.0 {
                return Err(Error::invalid("general similarity strength must be < 1"));
            }
            let g = random_matrix(rng, n);
            let gn = g.operator_norm();
            Ok(ComplexMatrix::identity(n).add(&g.scale_re(strength / gn)))
        }
    }
}

/// Budget for gamma estimation.
#[derive(Clone, Copy, Debug)]
pub struct GammaBudget {
    pub samples: usize,
    pub distance: DistanceBudget,
}

impl Default for GammaBudget {
    fn default() -> Self {
        GammaBudget {
            samples: 48,
            distance: DistanceBudget::default(),
        }
    }
}

/// Brackets the near-inclusion constant γ of a ⊆^γ n.
///
/// Upper (certified): min of κ₁(A)·max_i dist(e_i, N) and
/// √N·σ_F((id − P_N)|_A), both one-sided. Lower (heuristic): best sampled
/// unit-ball distance, valid up to the descent's own upper-bound slack.
pub fn estimate_gamma(
    a: &AlgebraRef,
    n: &AlgebraRef,
    seed: i64,
    budget: &GammaBudget,
) -> Result<Bracket> {
    if a.ambient_dim() != n.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: a.ambient_dim(),
            got: n.ambient_dim(),
        });
    }
    let basis_dists = exec::map_range(a.dim(), |i| {
        let e = &a.basis()[i];
        n.distance_to_detailed(e, &budget.distance)
            .expect("dimensions agree")
            .upper
    });
    let kappa_route =
        a.kappa1() * basis_dists.iter().cloned().fold(0.0_f64, f64::max);
    // Frobenius route on the linear defect map x ↦ x − P_N(x)
    let ambient = a.ambient_dim();
    let defects: Vec<ComplexMatrix> = a
        .basis()
        .iter()
        .map(|e| e.sub(&n.project(e).expect("dimensions agree")))
        .collect();
    let m = nalgebra::DMatrix::<C64>::from_fn(ambient * ambient, defects.len(), |r, c| {
        defects[c].get(r / ambient, r % ambient)
    });
    let sigma = m
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    let frob_route = (ambient as f64).sqrt() * sigma;
    let upper = kappa_route.min(frob_route);

    let samples = a.sample_unit_ball(seed, budget.samples);
    let lows = exec::map_slice(&samples, |x| {
        n.distance_to_detailed(x, &budget.distance)
            .expect("dimensions agree")
            .upper
    });
    let lower = lows.into_iter().fold(0.0_f64, f64::max);
    Ok(Bracket::new(lower.min(upper), upper))
}

/// Two-sided Kadison–Kastler style report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KKDistanceReport {
    pub one_sided_a_in_b: Bracket,
    pub one_sided_b_in_a: Bracket,
    pub symmetric: Bracket,
}

pub fn kk_distance(
    a: &AlgebraRef,
    b: &AlgebraRef,
    seed: i64,
    budget: &GammaBudget,
) -> Result<KKDistanceReport> {
    let ab = estimate_gamma(a, b, seed, budget)?;
    let ba = estimate_gamma(b, a, seed, budget)?;
    Ok(KKDistanceReport {
        one_sided_a_in_b: ab,
        one_sided_b_in_a: ba,
        symmetric: Bracket::new(ab.lower.max(ba.lower), ab.upper.max(ba.upper)),
    })
}

/// Builds a deterministic scenario: model, planted similarity, container,
/// projection, transported diagonal, gamma bracket.
pub fn generate_scenario(params: &ScenarioParams, seed: i64) -> Result<PerturbationScenario> {
    if params.block_sizes.is_empty() || params.block_sizes.contains(&0) {
        return Err(Error::invalid("block sizes must be positive"));
    }
    let total: usize = params.block_sizes.iter().sum();
    let ambient = params.ambient_dim.unwrap_or(total);
    if ambient < total {
        return Err(Error::invalid(format!(
            "ambient dimension {ambient} is smaller than the block total {total}"
        )));
    }
    // pad the model with scalar blocks so its unit is the ambient identity
    let mut sizes = params.block_sizes.clone();
    sizes.extend(std::iter::repeat(1).take(ambient - total));

    let similarity_kind = params
        .similarity
        .unwrap_or_else(|| params.container.default_similarity());
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let planted = planted_similarity(&mut rng, ambient, similarity_kind, params.strength)?;

    let model = Arc::new(FdAlgebra::block_diagonal_model(&sizes)?);
    let u_model = TensorElement::weyl_diagonal_for(Arc::clone(&model))?;
    let a: AlgebraRef = Arc::new(FdAlgebra::conjugated(&model, &planted)?);
    let u = u_model.transport(&planted, Arc::clone(&a))?;

    let p = match params.container {
        ContainerKind::FullMatrixAlgebra => ProjectionOnto::identity(ambient)?,
        ContainerKind::BlockDiagonal => ProjectionOnto::conditional_expectation(&sizes)?,
        ContainerKind::UpperBlockTriangular => ProjectionOnto::triangular_truncation(&sizes)?,
    };
    let n = Arc::clone(p.range());

    if p.idempotency_residual() > tol::SPAN_MEMBERSHIP {
        return Err(Error::invalid("projection is not idempotent"));
    }
    let diag_report = u.verify_diagonal();
    if !diag_report.passes() {
        return Err(Error::invalid(format!(
            "transported diagonal failed verification (residuals {:.3e}/{:.3e})",
            diag_report.commutation_residual, diag_report.multiplication_residual
        )));
    }
    let gamma_bracket = estimate_gamma(&a, &n, seed, &GammaBudget::default())?;

    Ok(PerturbationScenario {
        seed,
        ambient_dim: ambient,
        block_sizes: sizes,
        container: params.container,
        similarity_kind,
        similarity_strength: params.strength,
        planted,
        a,
        n,
        p,
        u,
        gamma_bracket,
    })
}

#[derive(Serialize, Deserialize)]
struct ScenarioWire {
    seed: i64,
    ambient_dim: usize,
    block_sizes: Vec<usize>,
    container: ContainerKind,
    similarity_kind: SimilarityKind,
    similarity_strength: f64,
    planted: ComplexMatrix,
    a: FdAlgebra,
    n: FdAlgebra,
    p: ProjectionOnto,
    u: serde_json::Value,
    gamma_bracket: Bracket,
}

impl Serialize for PerturbationScenario {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = ScenarioWire {
            seed: self.seed,
            ambient_dim: self.ambient_dim,
            block_sizes: self.block_sizes.clone(),
            container: self.container,
            similarity_kind: self.similarity_kind,
            similarity_strength: self.similarity_strength,
            planted: self.planted.clone(),
            a: (*self.a).clone(),
            n: (*self.n).clone(),
            p: self.p.clone(),
            u: serde_json::to_value(&self.u).map_err(serde::ser::Error::custom)?,
            gamma_bracket: self.gamma_bracket,
        };
        wire.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PerturbationScenario {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = ScenarioWire::deserialize(d)?;
        let a: AlgebraRef = Arc::new(wire.a);
        let u_wire: TensorElementWire =
            serde_json::from_value(wire.u).map_err(serde::de::Error::custom)?;
        let u = u_wire
            .bind(Arc::clone(&a))
            .map_err(serde::de::Error::custom)?;
        let n: AlgebraRef = Arc::new(wire.n);
        Ok(PerturbationScenario {
            seed: wire.seed,
            ambient_dim: wire.ambient_dim,
            block_sizes: wire.block_sizes,
            container: wire.container,
            similarity_kind: wire.similarity_kind,
            similarity_strength: wire.similarity_strength,
            planted: wire.planted,
            a,
            n,
            p: wire.p,
            u,
            gamma_bracket: wire.gamma_bracket,
        })
    }
}

/// Outcome classes, also used as process exit codes by the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Certified,
    ThresholdNotMet,
    PremiseNotCertified,
    NumericalFailure,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Certified => 0,
            Outcome::ThresholdNotMet => 2,
            Outcome::PremiseNotCertified => 3,
            Outcome::NumericalFailure => 4,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Outcome::Certified => "certified",
            Outcome::ThresholdNotMet => "threshold-not-met",
            Outcome::PremiseNotCertified => "premise-not-certified",
            Outcome::NumericalFailure => "numerical-failure",
        }
    }
}

/// The document written next to a scenario after a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum CertificateDocument {
    Certified {
        scenario_file: String,
        certificate: Certificate,
    },
    ThresholdNotMet {
        scenario_file: String,
        scenario_id: String,
        seed: i64,
        gamma_upper: f64,
        digamma_value: f64,
        threshold: f64,
        margin: f64,
        threshold_ok: bool,
    },
    PremiseNotCertified {
        scenario_file: String,
        scenario_id: String,
        seed: i64,
        stage: String,
        quantity: String,
        upper: f64,
        threshold: f64,
    },
    NumericalFailure {
        scenario_file: String,
        scenario_id: String,
        seed: i64,
        stage: String,
        message: String,
    },
}

impl CertificateDocument {
    pub fn outcome(&self) -> Outcome {
        match self {
            CertificateDocument::Certified { certificate, .. } => {
                if certificate.conclusions_hold() {
                    Outcome::Certified
                } else {
                    Outcome::NumericalFailure
                }
            }
            CertificateDocument::ThresholdNotMet { .. } => Outcome::ThresholdNotMet,
            CertificateDocument::PremiseNotCertified { .. } => Outcome::PremiseNotCertified,
            CertificateDocument::NumericalFailure { .. } => Outcome::NumericalFailure,
        }
    }

    pub fn scenario_file(&self) -> &str {
        match self {
            CertificateDocument::Certified { scenario_file, .. }
            | CertificateDocument::ThresholdNotMet { scenario_file, .. }
            | CertificateDocument::PremiseNotCertified { scenario_file, .. }
            | CertificateDocument::NumericalFailure { scenario_file, .. } => scenario_file,
        }
    }
}

fn stage_of(err: &Error) -> String {
    match err {
        Error::Stage { stage, .. } => stage.to_string(),
        _ => "run".to_string(),
    }
}

/// Runs the pipeline on a scenario and classifies the outcome. The C*
/// refinement is attached automatically when the scenario is eligible.
pub fn run_scenario(
    scenario: &PerturbationScenario,
    tol: f64,
) -> (Option<Certificate>, CertificateDocument) {
    let scenario_file = format!("scenario-{}.json", scenario.scenario_id());
    let opts = PipelineOptions {
        scenario_id: scenario.scenario_id(),
        tol,
        ..PipelineOptions::default()
    };
    let result = similarity::near_inclusion_pipeline(
        &scenario.a,
        &scenario.n,
        &scenario.p,
        &scenario.u,
        scenario.gamma_bracket.upper,
        scenario.seed,
        &opts,
    )
    .and_then(|cert| {
        if scenario.cstar_eligible() {
            similarity::unitarize(&cert, &scenario.a, &scenario.n)
                .map_err(|e| e.at_stage("unitarize"))
        } else {
            Ok(cert)
        }
    });
    match result {
        Ok(cert) => (
            Some(cert.clone()),
            CertificateDocument::Certified {
                scenario_file,
                certificate: cert,
            },
        ),
        Err(err) => {
            let stage = stage_of(&err);
            let doc = match err.root() {
                Error::ThresholdNotMet {
                    gamma_upper,
                    threshold,
                } => CertificateDocument::ThresholdNotMet {
                    scenario_file,
                    scenario_id: scenario.scenario_id(),
                    seed: scenario.seed,
                    gamma_upper: *gamma_upper,
                    digamma_value: 1.0 / *threshold,
                    threshold: *threshold,
                    margin: gamma_upper - threshold,
                    threshold_ok: false,
                },
                Error::PremiseNotCertified {
                    quantity,
                    upper,
                    threshold,
                } => CertificateDocument::PremiseNotCertified {
                    scenario_file,
                    scenario_id: scenario.scenario_id(),
                    seed: scenario.seed,
                    stage,
                    quantity: quantity.clone(),
                    upper: *upper,
                    threshold: *threshold,
                },
                other => CertificateDocument::NumericalFailure {
                    scenario_file,
                    scenario_id: scenario.scenario_id(),
                    seed: scenario.seed,
                    stage,
                    message: other.to_string(),
                },
            };
            (None, doc)
        }
    }
}

/// Paths produced by one `run_report`.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub document: CertificateDocument,
    pub scenario_path: PathBuf,
    pub certificate_path: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    std::fs::write(path, body + "\n").map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let body = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&body)?)
}

/// Runs a scenario and writes `scenario-<id>.json` and
/// `certificate-<id>.json` under `out_dir`.
pub fn run_report(
    scenario: &PerturbationScenario,
    tol: f64,
    out_dir: &Path,
) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let id = scenario.scenario_id();
    let scenario_path = out_dir.join(format!("scenario-{id}.json"));
    let certificate_path = out_dir.join(format!("certificate-{id}.json"));
    write_json(&scenario_path, scenario)?;
    let (_, document) = run_scenario(scenario, tol);
    write_json(&certificate_path, &document)?;
    Ok(RunArtifacts {
        document,
        scenario_path,
        certificate_path,
    })
}

/// The decision fields a certificate commits to; replayed byte-for-byte.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DecisionFields {
    pub outcome: String,
    pub threshold_ok: bool,
    pub bound_satisfied: Option<bool>,
    pub conjugation_ok: Option<bool>,
    pub membership_ok: Option<bool>,
    pub unitary_bound_satisfied: Option<bool>,
    pub unitary_conjugation_ok: Option<bool>,
}

impl DecisionFields {
    fn from_document(doc: &CertificateDocument) -> DecisionFields {
        match doc {
            CertificateDocument::Certified { certificate, .. } => DecisionFields {
                outcome: doc.outcome().tag().to_string(),
                threshold_ok: certificate.threshold_ok,
                bound_satisfied: Some(certificate.bound_satisfied),
                conjugation_ok: Some(
                    certificate.conjugation_residual <= tol::CONJUGATION_RESIDUAL,
                ),
                membership_ok: Some(
                    certificate.membership_residual <= tol::MEMBERSHIP_RESIDUAL,
                ),
                unitary_bound_satisfied: certificate
                    .unitary
                    .as_ref()
                    .map(|u| u.bound_satisfied),
                unitary_conjugation_ok: certificate
                    .unitary
                    .as_ref()
                    .map(|u| u.conjugation_residual <= tol::CONJUGATION_RESIDUAL),
            },
            _ => DecisionFields {
                outcome: doc.outcome().tag().to_string(),
                threshold_ok: matches!(doc, CertificateDocument::Certified { .. }),
                bound_satisfied: None,
                conjugation_ok: None,
                membership_ok: None,
                unitary_bound_satisfied: None,
                unitary_conjugation_ok: None,
            },
        }
    }
}

/// Result of replaying a certificate against its scenario.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub matches: bool,
    pub original: DecisionFields,
    pub recomputed: DecisionFields,
}

/// Recomputes every residual of an emitted certificate from the stored
/// similarity and scenario, and compares the decision fields byte-for-byte.
pub fn verify_certificate(certificate_path: &Path) -> Result<VerifyReport> {
    let doc: CertificateDocument = read_json(certificate_path)?;
    let dir = certificate_path.parent().unwrap_or_else(|| Path::new("."));
    let scenario: PerturbationScenario = read_json(&dir.join(doc.scenario_file()))?;
    let original = DecisionFields::from_document(&doc);

    let recomputed = match &doc {
        CertificateDocument::Certified { certificate, .. } => {
            let s = &certificate.similarity;
            let s_inv = s.inverse()?;
            let a = &scenario.a;
            let n = &scenario.n;
            let dist_budget = DistanceBudget::default();
            let conj = exec::map_range(a.dim(), |i| {
                let e = &a.basis()[i];
                let m = s.mul(e).mul(&s_inv);
                n.distance_to_detailed(&m, &dist_budget)
                    .expect("dimensions agree")
                    .upper
                    / e.operator_norm()
            })
            .into_iter()
            .fold(0.0_f64, f64::max);
            let membership = {
                let mut gens: Vec<ComplexMatrix> = a.basis().to_vec();
                gens.extend_from_slice(n.basis());
                FdAlgebra::generate_closure(a.ambient_dim(), &gens)?.span_residual(s)
            };
            let smi = s
                .sub(&ComplexMatrix::identity(s.rows()))
                .operator_norm();
            let threshold_ok =
                certificate.gamma_upper < 1.0 / certificate.digamma_value;
            let bound_ok = smi
                <= certificate.digamma_value * certificate.gamma_upper + tol::BOUND_SLACK;
            let unitary_fields = match &certificate.unitary {
                None => (None, None),
                Some(ur) => {
                    let u_mat = &ur.matrix;
                    let k = u_mat.rows();
                    let uconj = exec::map_range(a.dim(), |i| {
                        let e = &a.basis()[i];
                        let m = u_mat.mul(e).mul(&u_mat.adjoint());
                        n.distance_to_detailed(&m, &dist_budget)
                            .expect("dimensions agree")
                            .upper
                            / e.operator_norm()
                    })
                    .into_iter()
                    .fold(0.0_f64, f64::max);
                    let umi = u_mat.sub(&ComplexMatrix::identity(k)).operator_norm();
                    let fp = similarity::digamma(certificate.p_norm_upper, 1.0)?;
                    let fg = fp * certificate.gamma_upper;
                    let bound = if fg < 1.0 {
                        (2.0_f64).sqrt() * fg / (1.0 + (1.0 - fg * fg).sqrt()).sqrt()
                    } else {
                        f64::INFINITY
                    };
                    (
                        Some(umi <= bound + tol::BOUND_SLACK),
                        Some(uconj <= tol::CONJUGATION_RESIDUAL),
                    )
                }
            };
            let all_ok = threshold_ok
                && bound_ok
                && conj <= tol::CONJUGATION_RESIDUAL
                && membership <= tol::MEMBERSHIP_RESIDUAL;
            DecisionFields {
                outcome: if all_ok {
                    Outcome::Certified.tag().to_string()
                } else {
                    Outcome::NumericalFailure.tag().to_string()
                },
                threshold_ok,
                bound_satisfied: Some(bound_ok),
                conjugation_ok: Some(conj <= tol::CONJUGATION_RESIDUAL),
                membership_ok: Some(membership <= tol::MEMBERSHIP_RESIDUAL),
                unitary_bound_satisfied: unitary_fields.0,
                unitary_conjugation_ok: unitary_fields.1,
            }
        }
        CertificateDocument::ThresholdNotMet { .. } => {
            // replay the threshold decision from the scenario's own data
            let u_upper = scenario.u.projective_norm_upper_bound().max(1.0);
            let p_upper = scenario.p.norm_upper().max(1.0);
            let digamma_value = similarity::digamma(p_upper, u_upper)?;
            let threshold_ok = scenario.gamma_bracket.upper < 1.0 / digamma_value;
            DecisionFields {
                outcome: if threshold_ok {
                    "unexpected-threshold-pass".to_string()
                } else {
                    Outcome::ThresholdNotMet.tag().to_string()
                },
                threshold_ok,
                bound_satisfied: None,
                conjugation_ok: None,
                membership_ok: None,
                unitary_bound_satisfied: None,
                unitary_conjugation_ok: None,
            }
        }
        CertificateDocument::PremiseNotCertified { .. }
        | CertificateDocument::NumericalFailure { .. } => {
            // replay the full run
            let (_, redoc) = run_scenario(&scenario, tol::CORRECTION_TOL);
            DecisionFields::from_document(&redoc)
        }
    };

    let matches = serde_json::to_string(&original)? == serde_json::to_string(&recomputed)?;
    Ok(VerifyReport {
        matches,
        original,
        recomputed,
    })
}

/// One CSV row of a batch sweep.
#[derive(Clone, Debug)]
pub struct BatchRow {
    pub seed: i64,
    pub gamma_upper: f64,
    pub digamma: f64,
    pub epsilon: Option<f64>,
    pub s_minus_identity: Option<f64>,
    pub bound_slack: Option<f64>,
    pub outcome: Outcome,
}

impl BatchRow {
    pub const CSV_HEADER: &'static str =
        "seed,gamma_upper,digamma,epsilon,s_minus_identity,bound_slack,outcome";

    pub fn to_csv(&self) -> String {
        let opt = |v: &Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        format!(
            "{},{:.17e},{:.17e},{},{},{},{}",
            self.seed,
            self.gamma_upper,
            self.digamma,
            opt(&self.epsilon),
            opt(&self.s_minus_identity),
            opt(&self.bound_slack),
            self.outcome.tag()
        )
    }
}

/// Runs the (seed × strength) grid in parallel, one row per cell, in
/// deterministic order.
pub fn run_batch(
    seeds: &[i64],
    strengths: &[f64],
    base: &ScenarioParams,
    tol: f64,
) -> Vec<BatchRow> {
    let grid: Vec<(i64, f64)> = seeds
        .iter()
        .flat_map(|&s| strengths.iter().map(move |&g| (s, g)))
        .collect();
    exec::map_slice(&grid, |&(seed, strength)| {
        let params = ScenarioParams {
            strength,
            ..base.clone()
        };
        match generate_scenario(&params, seed) {
            Err(_) => BatchRow {
                seed,
                gamma_upper: f64::NAN,
                digamma: f64::NAN,
                epsilon: None,
                s_minus_identity: None,
                bound_slack: None,
                outcome: Outcome::NumericalFailure,
            },
            Ok(scenario) => {
                let (cert, doc) = run_scenario(&scenario, tol);
                let digamma = match &doc {
                    CertificateDocument::Certified { certificate, .. } => {
                        certificate.digamma_value
                    }
                    CertificateDocument::ThresholdNotMet { digamma_value, .. } => *digamma_value,
                    _ => {
                        let u_upper =
                            scenario.u.projective_norm_upper_bound().max(1.0);
                        similarity::digamma(scenario.p.norm_upper().max(1.0), u_upper)
                            .unwrap_or(f64::NAN)
                    }
                };
                match cert {
                    Some(c) => BatchRow {
                        seed,
                        gamma_upper: c.gamma_upper,
                        digamma,
                        epsilon: Some(c.epsilon),
                        s_minus_identity: Some(c.s_minus_identity),
                        bound_slack: Some(
                            c.digamma_value * c.gamma_upper + tol::BOUND_SLACK
                                - c.s_minus_identity,
                        ),
                        outcome: doc.outcome(),
                    },
                    None => BatchRow {
                        seed,
                        gamma_upper: scenario.gamma_bracket.upper,
                        digamma,
                        epsilon: None,
                        s_minus_identity: None,
                        bound_slack: None,
                        outcome: doc.outcome(),
                    },
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_params(container: ContainerKind, strength: f64) -> ScenarioParams {
        ScenarioParams {
            block_sizes: vec![1, 1],
            ambient_dim: None,
            container,
            similarity: None,
            strength,
        }
    }

    #[test]
    fn zero_strength_gives_exact_inclusion() {
        let s = generate_scenario(&base_params(ContainerKind::BlockDiagonal, 0.0), 3).unwrap();
        assert!(s.gamma_bracket.lower <= 1e-12);
        assert!(s.gamma_bracket.upper <= 1e-12, "{:?}", s.gamma_bracket);
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let p = base_params(ContainerKind::BlockDiagonal, 1e-3);
        let s1 = generate_scenario(&p, 11).unwrap();
        let s2 = generate_scenario(&p, 11).unwrap();
        assert_eq!(
            serde_json::to_string(&s1).unwrap(),
            serde_json::to_string(&s2).unwrap()
        );
        let s3 = generate_scenario(&p, 12).unwrap();
        assert_ne!(
            serde_json::to_string(&s1).unwrap(),
            serde_json::to_string(&s3).unwrap()
        );
    }

    #[test]
    fn planted_strength_bounds_gamma() {
        let p = base_params(ContainerKind::BlockDiagonal, 1e-3);
        let s = generate_scenario(&p, 5).unwrap();
        // γ ≤ C·strength with a modest constant at this scale
        assert!(
            s.gamma_bracket.upper <= 4.0 * 1e-3,
            "gamma {:?}",
            s.gamma_bracket
        );
        assert!(s.gamma_bracket.lower <= s.gamma_bracket.upper);
        let planted_norm = s
            .planted
            .sub(&ComplexMatrix::identity(s.ambient_dim))
            .operator_norm();
        assert!((planted_norm - 1e-3).abs() <= 1e-9);
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let p = base_params(ContainerKind::UpperBlockTriangular, 1e-4);
        let s = generate_scenario(&p, 9).unwrap();
        let body = serde_json::to_string(&s).unwrap();
        let back: PerturbationScenario = serde_json::from_str(&body).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), body);
        assert!(back.a.same_as(&s.a));
        assert!(back.u.verify_diagonal().passes());
    }

    #[test]
    fn gamma_of_span_i_e12_against_diagonals() {
        let a: AlgebraRef = Arc::new(
            FdAlgebra::from_spanning(
                2,
                &[
                    ComplexMatrix::identity(2).scale_re(1.0 / (2.0_f64).sqrt()),
                    ComplexMatrix::unit(2, 0, 1),
                ],
                None,
            )
            .unwrap(),
        );
        let n: AlgebraRef = Arc::new(FdAlgebra::block_diagonal_model(&[1, 1]).unwrap());
        let b = estimate_gamma(&a, &n, 3, &GammaBudget::default()).unwrap();
        assert!(b.upper >= 1.0 - 1e-9, "upper {}", b.upper);
        assert!(b.lower >= 1.0 - 1e-6, "lower {}", b.lower);
    }

    #[test]
    fn kk_distance_is_symmetric_and_zero_on_equal_algebras() {
        let a: AlgebraRef = Arc::new(FdAlgebra::block_diagonal_model(&[2, 1]).unwrap());
        let r = kk_distance(&a, &a, 1, &GammaBudget::default()).unwrap();
        assert!(r.symmetric.upper <= 1e-10);
        let b: AlgebraRef = Arc::new(
            FdAlgebra::from_spanning(
                2,
                &[
                    ComplexMatrix::identity(2).scale_re(1.0 / (2.0_f64).sqrt()),
                    ComplexMatrix::unit(2, 0, 1),
                ],
                None,
            )
            .unwrap(),
        );
        let d: AlgebraRef = Arc::new(FdAlgebra::block_diagonal_model(&[1, 1]).unwrap());
        let r1 = kk_distance(&b, &d, 5, &GammaBudget::default()).unwrap();
        let r2 = kk_distance(&d, &b, 5, &GammaBudget::default()).unwrap();
        assert!(r1.symmetric.upper >= 1.0 - 1e-9);
        assert!((r1.symmetric.upper - r2.symmetric.upper).abs() <= 1e-12);
    }
}
