use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use tentspace::atomic::{decompose, extension_threshold, validate_atom, verify_decomposition, AtomReport, DecompositionReport};
use tentspace::corpus::{random_open_set, random_point_in, CorpusBuilder, FieldKind};
use tentspace::gamma::GammaEngine;
use tentspace::geometry::{
    check_cone_containment, check_sector_lemma, cone_cover_points, greedy_ball_cover, verify_ball_cover, Ball, DirectionNet,
};
use tentspace::io::{read_grid_function, write_decomposition, write_grid_function};
use tentspace::maximal::{extension, weak_type_holds, WeakTypeConstants};
use tentspace::tentnorm::{Exponent, TentNorms};
use tentspace::{GridFunction, HalfSpaceGrid};

use crate::config::{Format, RunConfig};
use crate::CliError;

fn engine(config: &RunConfig) -> GammaEngine {
    GammaEngine::new(config.space).with_samples(config.samples).with_seed(config.seed)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(tentspace::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(tentspace::Error::from)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(tentspace::Error::from)?;
    Ok(())
}

fn prepare_out(config: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&config.out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", config.out.display())))?;
    Ok(&config.out)
}

fn read_input(path: &Path) -> Result<GridFunction, CliError> {
    read_grid_function(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Adopts the grid and value space of an input file.
fn adopt_input(config: &mut RunConfig, f: &GridFunction) {
    config.grid = f.grid().params();
    config.space = f.space();
}

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    kind: FieldKind,
    ball: Ball,
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    atom: Option<AtomReport>,
}

#[derive(Serialize)]
struct GenerateManifest<'a> {
    config: &'a RunConfig,
    count: usize,
    kinds: &'a [FieldKind],
    entries: Vec<ManifestEntry>,
}

pub fn generate(config: &RunConfig, count: usize, kinds: &[FieldKind], binary: bool) -> Result<String, CliError> {
    let out = prepare_out(config)?;
    let grid = Arc::new(config.grid.build()?);
    let engine = engine(config);
    let corpus = CorpusBuilder::new(grid, config.space, config.seed).with_kinds(kinds)?.build(count, &engine)?;
    let dir = out.join("corpus");
    fs::create_dir_all(&dir).map_err(tentspace::Error::from)?;
    let mut entries = Vec::with_capacity(corpus.len());
    let mut invalid = Vec::new();
    for e in corpus {
        let file = format!("corpus/{}.json", e.name);
        write_grid_function(&out.join(&file), &e.field, binary)?;
        let atom = (e.kind == FieldKind::Atom).then(|| validate_atom(&engine, &e.field, &e.ball));
        if atom.as_ref().is_some_and(|a| !a.valid) {
            invalid.push(e.name.clone());
        }
        entries.push(ManifestEntry { name: e.name, kind: e.kind, ball: e.ball, file, atom });
    }
    if config.format == Format::Csv {
        let mut csv = String::from("name,kind,center_x,center_y,radius,file\n");
        for e in &entries {
            let kind = serde_json::to_value(e.kind).map_err(tentspace::Error::from)?;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                e.name,
                kind.as_str().unwrap_or_default(),
                e.ball.center[0],
                e.ball.center[1],
                e.ball.radius,
                e.file
            );
        }
        write_text(&out.join("manifest.csv"), &csv)?;
    }
    write_json(&out.join("manifest.json"), &GenerateManifest { config, count, kinds, entries })?;
    if !invalid.is_empty() {
        return Err(CliError::Invariant(format!("atom entries fail validation: {}", invalid.join(", "))));
    }
    Ok(format!("generated {count} fields in {}", out.display()))
}

#[derive(Serialize)]
struct NormEntry {
    p: Exponent,
    alpha: f64,
    value: f64,
    stderr: f64,
    path: tentspace::gamma::GammaPath,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ball: Option<Ball>,
}

#[derive(Serialize)]
struct NormsReport<'a> {
    config: &'a RunConfig,
    input: &'a Path,
    norms: Vec<NormEntry>,
}

pub fn norms(mut config: RunConfig, input: &Path, ps: &[f64], alphas: &[f64]) -> Result<String, CliError> {
    let f = read_input(input)?;
    adopt_input(&mut config, &f);
    let out = prepare_out(&config)?;
    let base = engine(&config);
    let mut entries = Vec::new();
    for &alpha in alphas {
        let norms = TentNorms::new(base).with_aperture(alpha)?;
        for &p in ps {
            let report = if p.is_infinite() { norms.tent_norm_infty(&f)? } else { norms.tent_norm_p(&f, p)? };
            entries.push(NormEntry {
                p: report.p,
                alpha,
                value: report.value,
                stderr: report.stderr,
                path: report.path,
                per_x: report.per_x,
                ball: report.ball,
            });
        }
    }
    if config.format == Format::Csv {
        write_text(&out.join("per_x.csv"), &per_x_csv(f.grid(), &entries))?;
        for e in entries.iter_mut() {
            e.per_x = None;
        }
    }
    let summary = entries
        .iter()
        .map(|e| format!("p={} alpha={}: {:.6}", exponent_label(e.p), e.alpha, e.value))
        .collect::<Vec<_>>()
        .join("; ");
    write_json(&out.join("norms.json"), &NormsReport { config: &config, input, norms: entries })?;
    Ok(summary)
}

fn exponent_label(p: Exponent) -> String {
    match p {
        Exponent::Finite(p) => p.to_string(),
        Exponent::Infinite => "inf".into(),
    }
}

/// One row per base cell, one column per finite-exponent norm.
fn per_x_csv(grid: &HalfSpaceGrid, entries: &[NormEntry]) -> String {
    let base = grid.base();
    let columns: Vec<&NormEntry> = entries.iter().filter(|e| e.per_x.is_some()).collect();
    let mut csv = String::from(if base.dim() == 1 { "x" } else { "x,y" });
    for e in &columns {
        let _ = write!(csv, ",S_alpha{}_p{}", e.alpha, exponent_label(e.p));
    }
    csv.push('\n');
    for x in 0..base.len() {
        let c = base.center(x);
        let _ = if base.dim() == 1 { write!(csv, "{}", c[0]) } else { write!(csv, "{},{}", c[0], c[1]) };
        for e in &columns {
            let _ = write!(csv, ",{}", e.per_x.as_ref().map_or(0.0, |v| v[x]));
        }
        csv.push('\n');
    }
    csv
}

#[derive(Serialize)]
struct DecomposeReport<'a> {
    config: &'a RunConfig,
    input: &'a Path,
    manifest: PathBuf,
    report: DecompositionReport,
}

pub fn decompose_cmd(mut config: RunConfig, input: &Path, binary: bool) -> Result<String, CliError> {
    let f = read_input(input)?;
    adopt_input(&mut config, &f);
    let out = prepare_out(&config)?;
    let engine = engine(&config);
    let dec = decompose(&engine, &f)?;
    let report = verify_decomposition(&engine, &f, &dec, &WeakTypeConstants::default())?;
    let dir = out.join("decomposition");
    write_decomposition(&dir, &dec, &f, binary)?;
    if config.format == Format::Csv {
        let mut csv = String::from("index,lambda,k,j,center_x,center_y,radius\n");
        for (i, t) in dec.terms.iter().enumerate() {
            let _ = writeln!(csv, "{i},{},{},{},{},{},{}", t.lambda, t.k, t.j, t.ball.center[0], t.ball.center[1], t.ball.radius);
        }
        write_text(&out.join("terms.csv"), &csv)?;
    }
    let summary = format!(
        "{} atoms, sum |lambda| = {:.6}, |f|_T1 = {:.6}, bound {:.6}, reconstruction error {:.1e}",
        report.terms, report.lambda_sum, report.source_norm, report.bound, report.reconstruction_error
    );
    let passed = report.passed;
    write_json(
        &out.join("decompose_report.json"),
        &DecomposeReport { config: &config, input, manifest: PathBuf::from("decomposition/decomposition.json"), report },
    )?;
    if !passed {
        return Err(CliError::Invariant(format!("decomposition check failed: {summary}")));
    }
    Ok(summary)
}

#[derive(Debug, Default, Serialize)]
struct LemmaTotals {
    trials: usize,
    cover_balls: usize,
    cover_uncovered: usize,
    cover_overlaps: usize,
    cover_other: usize,
    weak_type_checks: usize,
    weak_type_violations: usize,
    cone_samples: usize,
    cone_near_boundary: usize,
    cone_flagged: usize,
    cone_violations: usize,
    sector_trials: usize,
    sector_within_grid_tolerance: usize,
    sector_violations: usize,
}

impl LemmaTotals {
    fn violations(&self) -> usize {
        self.cover_uncovered + self.cover_overlaps + self.cover_other + self.weak_type_violations + self.cone_violations + self.sector_violations
    }
}

#[derive(Serialize)]
struct LemmaReport<'a> {
    config: &'a RunConfig,
    extension_threshold: f64,
    weak_type_lambdas: &'a [f64],
    totals: &'a LemmaTotals,
    passed: bool,
}

const WEAK_TYPE_LAMBDAS: [f64; 4] = [0.1, 0.25, 0.5, 0.75];
const SECTOR_TRIALS: usize = 100;

pub fn verify_lemmas(config: &RunConfig, trials: usize) -> Result<String, CliError> {
    let out = prepare_out(config)?;
    let grid = config.grid.build()?;
    let base = grid.base();
    let n = grid.dim();
    let net = DirectionNet::build(n)?;
    let threshold = extension_threshold(n)?;
    let constants = WeakTypeConstants::default();
    let mut totals = LemmaTotals::default();
    for trial in 0..trials as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(trial + 1);
        let e = random_open_set(&mut rng, base);

        let cover = greedy_ball_cover(&e, &grid.t_centers());
        let check = verify_ball_cover(&e, &cover, &grid);
        totals.cover_balls += cover.balls.len();
        totals.cover_uncovered += check.uncovered.len();
        totals.cover_overlaps += check.overlapping.len();
        totals.cover_other += check.escaping.len() + check.radius_failures.len();

        for lambda in WEAK_TYPE_LAMBDAS {
            totals.weak_type_checks += 1;
            if !weak_type_holds(&e, &extension(&e, lambda)?, lambda, &constants) {
                totals.weak_type_violations += 1;
            }
        }

        let star = extension(&e, threshold)?;
        let x = random_point_in(&mut rng, &e)?;
        let cones = cone_cover_points(&e, &net, x)?;
        let sub_seed = config.seed ^ (trial << 20);
        let containment = check_cone_containment(&star, &cones, config.samples, base.h() / 2.0, sub_seed);
        totals.cone_samples += containment.accepted;
        totals.cone_near_boundary += containment.near_boundary;
        totals.cone_flagged += containment.skipped_flagged;
        totals.cone_violations += containment.violations;

        let sector = check_sector_lemma(&e, &star, &net, SECTOR_TRIALS, sub_seed ^ 0x5EC7)?;
        totals.sector_trials += sector.trials;
        totals.sector_within_grid_tolerance += sector.within_grid_tolerance;
        totals.sector_violations += sector.violations;
        totals.trials += 1;
    }
    let passed = totals.violations() == 0;
    if config.format == Format::Csv {
        let value = serde_json::to_value(&totals).map_err(tentspace::Error::from)?;
        let mut csv = String::from("check,count\n");
        if let Some(map) = value.as_object() {
            for (k, v) in map {
                let _ = writeln!(csv, "{k},{v}");
            }
        }
        write_text(&out.join("lemmas.csv"), &csv)?;
    }
    write_json(
        &out.join("lemmas.json"),
        &LemmaReport { config, extension_threshold: threshold, weak_type_lambdas: &WEAK_TYPE_LAMBDAS, totals: &totals, passed },
    )?;
    let summary = format!(
        "n={n}: {trials} sets, {} cone samples, {} violations ({} cover, {} weak type, {} cone, {} sector)",
        totals.cone_samples,
        totals.violations(),
        totals.cover_uncovered + totals.cover_overlaps + totals.cover_other,
        totals.weak_type_violations,
        totals.cone_violations,
        totals.sector_violations
    );
    if !passed {
        return Err(CliError::Invariant(summary));
    }
    Ok(summary)
}
