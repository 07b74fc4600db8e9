//! Command-line driver: scenario generation, pipeline runs, certificate
//! replay, batch sweeps, and Kadison–Kastler distance reports.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result, bail};
use clap::{Args, Parser, Subcommand};

use opalg::scenario::{
    self, BatchRow, ContainerKind, PerturbationScenario, ScenarioParams, SimilarityKind,
};
use opalg::{FdAlgebra, tol};

#[derive(Parser)]
#[command(
    name = "opalg",
    about = "Perturbation workbench for finite-dimensional operator algebras",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Block sizes of the semisimple model, e.g. `2,3`
    #[arg(long, value_delimiter = ',', default_value = "2,2")]
    blocks: Vec<usize>,
    /// Ambient dimension (defaults to the block total; extra room is padded
    /// with scalar blocks)
    #[arg(long)]
    ambient_dim: Option<usize>,
    /// Container algebra: full-matrix-algebra | block-diagonal | upper-block-triangular
    #[arg(long, default_value = "block-diagonal")]
    container: String,
    /// Planted similarity kind: unitary | general (default depends on the container)
    #[arg(long)]
    similarity: Option<String>,
    /// ‖S₀ − I‖ of the planted similarity
    #[arg(long, default_value_t = 1e-4)]
    strength: f64,
}

impl ScenarioArgs {
    fn params(&self) -> Result<ScenarioParams> {
        let container: ContainerKind = self.container.parse()?;
        let similarity = match self.similarity.as_deref() {
            None => None,
            Some("unitary") => Some(SimilarityKind::Unitary),
            Some("general") => Some(SimilarityKind::General),
            Some(other) => bail!("unknown similarity kind '{other}'"),
        };
        Ok(ScenarioParams {
            block_sizes: self.blocks.clone(),
            ambient_dim: self.ambient_dim,
            container,
            similarity,
            strength: self.strength,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file (and report its gamma bracket)
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: i64,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory (default: $OPALG_OUT_DIR or `.`)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the near-inclusion pipeline on a scenario file
    Run {
        /// Scenario JSON produced by `generate`
        #[arg(long)]
        scenario: PathBuf,
        /// Target defect for the homomorphism correction
        #[arg(long, default_value_t = tol::CORRECTION_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay an emitted certificate and compare the decision fields
    Verify {
        #[arg(long)]
        certificate: PathBuf,
    },
    /// Sweep seeds x strengths and write a CSV summary
    Bench {
        /// Seed range `A..B` (half-open) or a single seed
        #[arg(long, default_value = "0..8")]
        seeds: String,
        /// Sweep spec: `strength=logspace(1e-6,1e-1,20)` or `strength=1e-5,1e-4`
        #[arg(long, default_value = "strength=logspace(1e-6,1e-3,8)")]
        sweep: String,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = tol::CORRECTION_TOL)]
        tol: f64,
        /// CSV output path
        #[arg(long)]
        csv: PathBuf,
    },
    /// Bracket the Kadison–Kastler style distance between two algebras
    KkDistance {
        /// FdAlgebra JSON file, or `scenario.json:a` / `scenario.json:n`
        /// to pick an algebra out of a scenario file
        #[arg(long)]
        a: String,
        /// Second algebra, same syntax
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 0)]
        seed: i64,
    },
}

fn load_algebra(spec: &str) -> Result<FdAlgebra> {
    if let Some((path, field)) = spec.rsplit_once(':') {
        if field == "a" || field == "n" {
            let s: PerturbationScenario = scenario::read_json(Path::new(path))?;
            let alg = if field == "a" { &s.a } else { &s.n };
            return Ok((**alg).clone());
        }
    }
    Ok(scenario::read_json(Path::new(spec))?)
}

fn out_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os("OPALG_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn parse_seeds(spec: &str) -> Result<Vec<i64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let start: i64 = a.trim().parse().context("seed range start")?;
        let end: i64 = b.trim().parse().context("seed range end")?;
        if end < start {
            bail!("empty seed range '{spec}'");
        }
        Ok((start..end).collect())
    } else {
        Ok(vec![spec.trim().parse().context("seed")?])
    }
}

fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let Some((key, body)) = spec.split_once('=') else {
        bail!("sweep spec must look like strength=...");
    };
    if key.trim() != "strength" {
        bail!("only strength sweeps are supported, got '{key}'");
    }
    let body = body.trim();
    if let Some(args) = body
        .strip_prefix("logspace(")
        .and_then(|s| s.strip_suffix(')'))
    {
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            bail!("logspace needs (lo, hi, count)");
        }
        let lo: f64 = parts[0].parse().context("logspace lo")?;
        let hi: f64 = parts[1].parse().context("logspace hi")?;
        let count: usize = parts[2].parse().context("logspace count")?;
        if lo <= 0.0 || hi <= 0.0 || count == 0 {
            bail!("logspace needs positive bounds and a positive count");
        }
        if count == 1 {
            return Ok(vec![lo]);
        }
        let (llo, lhi) = (lo.log10(), hi.log10());
        Ok((0..count)
            .map(|k| 10f64.powf(llo + (lhi - llo) * (k as f64) / ((count - 1) as f64)))
            .collect())
    } else {
        body.split(',')
            .map(|s| s.trim().parse::<f64>().context("sweep value"))
            .collect()
    }
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { seed, scenario, out } => {
            let params = scenario.params()?;
            let s = scenario::generate_scenario(&params, seed)?;
            let dir = out_dir(out);
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(format!("scenario-{}.json", s.scenario_id()));
            let body = serde_json::to_string_pretty(&s)?;
            std::fs::write(&path, body + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
            println!(
                "wrote {} (gamma bracket [{:.6e}, {:.6e}])",
                path.display(),
                s.gamma_bracket.lower,
                s.gamma_bracket.upper
            );
            Ok(0)
        }
        Command::Run { scenario, tol, out } => {
            let s: PerturbationScenario = scenario::read_json(&scenario)?;
            let dir = out_dir(out);
            let artifacts = scenario::run_report(&s, tol, &dir)?;
            let outcome = artifacts.document.outcome();
            println!(
                "scenario {} -> {} (certificate: {})",
                s.scenario_id(),
                outcome.tag(),
                artifacts.certificate_path.display()
            );
            if let scenario::CertificateDocument::Certified { certificate, .. } =
                &artifacts.document
            {
                println!(
                    "  gamma {:.6e} | digamma {:.3} | ‖S−I‖ {:.6e} ≤ {:.6e} | conj {:.3e} | member {:.3e}",
                    certificate.gamma_upper,
                    certificate.digamma_value,
                    certificate.s_minus_identity,
                    certificate.digamma_value * certificate.gamma_upper,
                    certificate.conjugation_residual,
                    certificate.membership_residual,
                );
                if let Some(u) = &certificate.unitary {
                    println!(
                        "  unitary: ‖U−I‖ {:.6e} ≤ {:.6e} | conj {:.3e} | U*U−I {:.3e}",
                        u.u_minus_identity,
                        u.bound_value,
                        u.conjugation_residual,
                        u.orthogonality_residual,
                    );
                }
            }
            Ok(outcome.exit_code())
        }
        Command::Verify { certificate } => {
            let report = scenario::verify_certificate(&certificate)?;
            println!("original:   {}", serde_json::to_string(&report.original)?);
            println!("recomputed: {}", serde_json::to_string(&report.recomputed)?);
            if report.matches {
                println!("verify: decisions reproduced");
                Ok(0)
            } else {
                println!("verify: MISMATCH");
                Ok(4)
            }
        }
        Command::Bench {
            seeds,
            sweep,
            scenario,
            tol,
            csv,
        } => {
            let seeds = parse_seeds(&seeds)?;
            let strengths = parse_sweep(&sweep)?;
            let params = scenario.params()?;
            let rows = scenario::run_batch(&seeds, &strengths, &params, tol);
            let mut body = String::from(BatchRow::CSV_HEADER);
            body.push('\n');
            for row in &rows {
                body.push_str(&row.to_csv());
                body.push('\n');
            }
            if let Some(parent) = csv.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(&csv, body).with_context(|| format!("writing {}", csv.display()))?;
            let certified = rows
                .iter()
                .filter(|r| r.outcome == scenario::Outcome::Certified)
                .count();
            println!(
                "wrote {} ({} rows, {} certified, mode {})",
                csv.display(),
                rows.len(),
                certified,
                opalg::exec::mode()
            );
            Ok(0)
        }
        Command::KkDistance { a, b, seed } => {
            let alg_a = load_algebra(&a)?;
            let alg_b = load_algebra(&b)?;
            let report = scenario::kk_distance(
                &Arc::new(alg_a),
                &Arc::new(alg_b),
                seed,
                &scenario::GammaBudget::default(),
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
