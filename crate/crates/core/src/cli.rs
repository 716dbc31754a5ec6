//! Experiment runner: turns a validated configuration into one of the
//! reproducible workflows and writes its JSON summary and CSV data files.
//! All results are collected in memory first; files are written by a single
//! writer at the end of the run.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::energy::{normalize_volume, yamabe_energy, EnergyReport};
use crate::error::{Error, Result};
use crate::hessian::{hessian_spectrum, Spectrum};
use crate::manifold::{Manifold, ManifoldSummary};
use crate::reduction::{
    classify_integrability, taylor_of_q, GraphNewtonOptions, HomogeneousPoly, KernelPolynomial,
    ReducedModel, ReductionContext, TaylorOptions,
};
use crate::report::{fmt_float, write_csv, write_summary};
use crate::solver::{continuation, minimize, SolveOptions};
use crate::spectral::Field;
use crate::stability::{
    fit_exponent, lojasiewicz_check, sample_deficit_distance, superquadratic_family, Direction,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubcommandKind {
    Minimize,
    Spectrum,
    Reduce,
    Exponent,
    Superquadratic,
    Bifurcate,
    Loja,
}

impl SubcommandKind {
    pub fn name(self) -> &'static str {
        match self {
            SubcommandKind::Minimize => "minimize",
            SubcommandKind::Spectrum => "spectrum",
            SubcommandKind::Reduce => "reduce",
            SubcommandKind::Exponent => "exponent",
            SubcommandKind::Superquadratic => "superquadratic",
            SubcommandKind::Bifurcate => "bifurcate",
            SubcommandKind::Loja => "loja",
        }
    }
}

/// Runs one subcommand. Exit codes: 0 success, 1 validation error (no files
/// written), 2 numerical failure (diagnostics written to `summary.json`).
pub fn run(kind: SubcommandKind, cfg: &ExperimentConfig) -> i32 {
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return 1;
    }
    match dispatch(kind, cfg) {
        Ok(()) => 0,
        Err(e @ (Error::Domain(_) | Error::Config(_))) => {
            eprintln!("error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            let diag = json!({ "error": e.to_string() });
            let _ = write_summary(&cfg.out_dir, kind.name(), &cfg.to_map(), diag);
            2
        }
    }
}

fn dispatch(kind: SubcommandKind, cfg: &ExperimentConfig) -> Result<()> {
    match kind {
        SubcommandKind::Minimize => run_minimize(cfg),
        SubcommandKind::Spectrum => run_spectrum(cfg),
        SubcommandKind::Reduce => run_reduce(cfg),
        SubcommandKind::Exponent => run_exponent(cfg),
        SubcommandKind::Superquadratic => run_superquadratic(cfg),
        SubcommandKind::Bifurcate => run_bifurcate(cfg),
        SubcommandKind::Loja => run_loja(cfg),
    }
}

fn solve_options(cfg: &ExperimentConfig) -> SolveOptions {
    SolveOptions {
        residual_tol: cfg.residual_tol,
        kernel_tol: cfg.kernel_tol,
        ..SolveOptions::default()
    }
}

fn graph_options(cfg: &ExperimentConfig) -> GraphNewtonOptions {
    GraphNewtonOptions {
        tol: cfg.newton_tol,
        radius: cfg.trust_radius,
        ..GraphNewtonOptions::default()
    }
}

fn setup(cfg: &ExperimentConfig) -> Result<(Manifold, std::sync::Arc<crate::spectral::Grid>)> {
    let man = Manifold::product(cfg.n, cfg.l)?;
    let grid = man.grid(cfg.grid_n)?;
    Ok((man, grid))
}

fn constant_base(man: &Manifold, grid: &std::sync::Arc<crate::spectral::Grid>) -> Result<Field> {
    normalize_volume(man, &Field::constant(grid.clone(), 1.0))
}

fn seed_field(grid: &std::sync::Arc<crate::spectral::Grid>, l: f64, rng: &mut ChaCha8Rng) -> Field {
    let phase: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
    Field::from_fn(grid.clone(), move |t| 1.0 + 0.1 * (t / l - phase).cos())
}

/// Minimizer plus reference level: the minimum energy over the critical
/// points found at this length (the constant is always one of them).
fn find_minimizers(
    man: &Manifold,
    grid: &std::sync::Arc<crate::spectral::Grid>,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Field>, f64, usize)> {
    let opts = solve_options(cfg);
    let v_const = constant_base(man, grid)?;
    let q_const = yamabe_energy(man, &v_const)?;
    let mut found = vec![(v_const, q_const)];
    let seeded = seed_field(grid, man.circle_len(), rng);
    if let Ok(cp) = minimize(man, &seeded, &opts) {
        found.push((cp.u, cp.q));
    }
    let y_ref = found.iter().map(|(_, q)| *q).fold(f64::INFINITY, f64::min);
    let minimizers: Vec<Field> = found
        .iter()
        .filter(|(_, q)| *q <= y_ref + 1e-9 * y_ref.abs().max(1.0))
        .map(|(u, _)| u.clone())
        .collect();
    let multi_start = found.len();
    Ok((minimizers, y_ref, multi_start))
}

fn run_minimize(cfg: &ExperimentConfig) -> Result<()> {
    let (man, grid) = setup(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u0 = seed_field(&grid, man.circle_len(), &mut rng);
    let cp = minimize(&man, &u0, &solve_options(cfg))?;
    let q_const = yamabe_energy(&man, &constant_base(&man, &grid)?)?;
    let y_ref = cp.q.min(q_const);
    let energy = EnergyReport::new(&man, &cp.u, y_ref)?;

    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|j| vec![fmt_float(grid.node(j)), fmt_float(cp.u.values()[j])])
        .collect();
    write_csv(
        &cfg.out_dir,
        "field.csv",
        &cfg.to_map(),
        &["theta", "u"],
        &rows,
    )?;
    write_summary(
        &cfg.out_dir,
        "minimize",
        &cfg.to_map(),
        json!({
            "manifold": ManifoldSummary::from(&man),
            "critical_point": cp.summary(),
            "energy": energy,
            "q_constant": q_const,
            "y_ref": y_ref,
        }),
    )?;
    Ok(())
}

fn run_spectrum(cfg: &ExperimentConfig) -> Result<()> {
    let (man, grid) = setup(cfg)?;
    let v = constant_base(&man, &grid)?;
    let spec = hessian_spectrum(&man, &v, cfg.kernel_tol)?;

    let rows: Vec<Vec<String>> = spec
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, ev)| vec![i.to_string(), fmt_float(*ev)])
        .collect();
    write_csv(
        &cfg.out_dir,
        "spectrum.csv",
        &cfg.to_map(),
        &["index", "eigenvalue"],
        &rows,
    )?;
    if cfg.dump_eigenfields {
        let count = spec.eigenfields().len().min(8);
        let mut cols = vec!["theta".to_string()];
        cols.extend((0..count).map(|i| format!("eig_{i}")));
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = (0..grid.len())
            .map(|j| {
                let mut row = vec![fmt_float(grid.node(j))];
                for f in spec.eigenfields().iter().take(count) {
                    row.push(fmt_float(f.values()[j]));
                }
                row
            })
            .collect();
        write_csv(
            &cfg.out_dir,
            "eigenfields.csv",
            &cfg.to_map(),
            &col_refs,
            &rows,
        )?;
    }
    write_summary(
        &cfg.out_dir,
        "spectrum",
        &cfg.to_map(),
        json!({
            "manifold": ManifoldSummary::from(&man),
            "spectrum": spec.summary(),
            "analytic_first_modes": (1..=4u32)
                .map(|k| crate::hessian::constant_base_mode_value(&man, k))
                .collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

fn reduce_at_constant(
    cfg: &ExperimentConfig,
    man: &Manifold,
    grid: &std::sync::Arc<crate::spectral::Grid>,
) -> Result<(Spectrum, Option<(ReductionContext, ReducedModel)>)> {
    let v = constant_base(man, grid)?;
    let spec = hessian_spectrum(man, &v, cfg.kernel_tol)?;
    if spec.kernel_dim() == 0 {
        return Ok((spec, None));
    }
    let ctx = ReductionContext::new(man, &v, &spec, graph_options(cfg))?;
    let model = taylor_of_q(
        &ctx,
        &TaylorOptions {
            radii: cfg.taylor_radii.clone(),
            j_max: cfg.j_max,
            directions_per_radius: cfg.taylor_directions,
            coeff_tol: cfg.coeff_tol,
            seed: cfg.seed,
            ..TaylorOptions::default()
        },
    )?;
    Ok((spec, Some((ctx, model))))
}

fn run_reduce(cfg: &ExperimentConfig) -> Result<()> {
    let (man, grid) = setup(cfg)?;
    let (spec, reduced) = reduce_at_constant(cfg, &man, &grid)?;
    match reduced {
        None => {
            write_summary(
                &cfg.out_dir,
                "reduce",
                &cfg.to_map(),
                json!({
                    "manifold": ManifoldSummary::from(&man),
                    "kernel_dim": 0,
                    "verdict": "nondegenerate",
                    "lambda1_l2": spec.lambda1_l2(),
                }),
            )?;
        }
        Some((_, model)) => {
            let verdict = classify_integrability(&model, cfg.coeff_tol);
            let mut rows = Vec::new();
            for part in &model.parts {
                for (e, c) in part.exponents.iter().zip(&part.coeffs) {
                    rows.push(vec![
                        part.degree.to_string(),
                        e.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
                        fmt_float(*c),
                    ]);
                }
            }
            write_csv(
                &cfg.out_dir,
                "taylor.csv",
                &cfg.to_map(),
                &["degree", "exponents", "coeff"],
                &rows,
            )?;
            write_summary(
                &cfg.out_dir,
                "reduce",
                &cfg.to_map(),
                json!({
                    "manifold": ManifoldSummary::from(&man),
                    "spectrum": spec.summary(),
                    "model": model,
                    "verdict": verdict,
                }),
            )?;
        }
    }
    Ok(())
}

fn run_exponent(cfg: &ExperimentConfig) -> Result<()> {
    let (man, grid) = setup(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (minimizers, y_ref, multi_start) = find_minimizers(&man, &grid, cfg, &mut rng)?;
    let v = minimizers[0].clone();
    let spec = hessian_spectrum(&man, &v, cfg.kernel_tol)?;

    let mut directions = match cfg.direction_mix.as_str() {
        "lowmode" => vec![Direction::LowModeRandom {
            count: cfg.direction_count,
            tail: cfg.direction_tail,
        }],
        "random" => vec![Direction::RandomTangent {
            count: cfg.direction_count,
            max_mode: 8,
        }],
        _ => (0..cfg.direction_count)
            .map(|i| Direction::Eigenfield { index: i })
            .collect(),
    };
    let ctx = if spec.kernel_dim() > 0 {
        let c = ReductionContext::new(&man, &v, &spec, graph_options(cfg))?;
        let mut dir = vec![0.0; spec.kernel_dim()];
        dir[0] = 1.0;
        directions.push(Direction::KernelLift { dir });
        Some(c)
    } else {
        None
    };

    let radii = cfg.radius_grid();
    let (samples, warnings) = sample_deficit_distance(
        &man,
        &v,
        &spec,
        ctx.as_ref(),
        &minimizers,
        &directions,
        &radii,
        &mut rng,
    )?;
    let fit = fit_exponent(&samples, (cfg.radius_min, cfg.radius_max), y_ref)?;

    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            vec![
                s.label.clone(),
                fmt_float(s.radius),
                fmt_float(s.distance),
                fmt_float(s.deficit),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir,
        "samples.csv",
        &cfg.to_map(),
        &["label", "radius", "distance", "deficit"],
        &rows,
    )?;
    write_summary(
        &cfg.out_dir,
        "exponent",
        &cfg.to_map(),
        json!({
            "manifold": ManifoldSummary::from(&man),
            "fit": fit,
            "y_ref": y_ref,
            "multi_start_count": multi_start,
            "minimizer_set": "solver-verified list (not the full minimizer set)",
            "distance_norm": "plain W^{1,2}, normalized by ||u||",
            "warnings": warnings,
        }),
    )?;
    Ok(())
}

fn run_superquadratic(cfg: &ExperimentConfig) -> Result<()> {
    let (man, grid) = setup(cfg)?;
    let (spec, reduced) = reduce_at_constant(cfg, &man, &grid)?;
    let (ctx, model) = reduced.ok_or_else(|| {
        Error::numerical(format!(
            "the constant base has no kernel at l = {} (critical length {}); \
             the superquadratic family needs a degenerate base",
            cfg.l,
            man.critical_length()
        ))
    })?;
    let _ = spec;
    let t_grid = cfg.sq_t_grid();
    let family = superquadratic_family(&ctx, &model, &t_grid, &cfg.gamma_grid)?;

    // slope of log(deficit) against log(distance) over the family
    let pts: Vec<(f64, f64)> = family
        .iter()
        .filter(|p| p.deficit > 0.0 && p.distance > 0.0)
        .map(|p| (p.distance.ln(), p.deficit.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();

    let mut ratio_summary = Vec::new();
    for (gi, g) in cfg.gamma_grid.iter().enumerate() {
        let ratios: Vec<f64> = family.iter().map(|p| p.ratios[gi]).collect();
        let monotone = ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        ratio_summary.push(json!({
            "gamma": g,
            "first": ratios.first(),
            "last": ratios.last(),
            "last_over_first": ratios.last().unwrap_or(&f64::NAN)
                / ratios.first().unwrap_or(&f64::NAN),
            "monotone_decreasing": monotone,
        }));
    }

    let mut cols = vec![
        "t".to_string(),
        "distance".to_string(),
        "deficit".to_string(),
        "dist_over_t".to_string(),
    ];
    cols.extend(cfg.gamma_grid.iter().map(|g| format!("ratio_gamma_{g}")));
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = family
        .iter()
        .map(|p| {
            let mut row = vec![
                fmt_float(p.t),
                fmt_float(p.distance),
                fmt_float(p.deficit),
                fmt_float(p.dist_over_t),
            ];
            row.extend(p.ratios.iter().map(|r| fmt_float(*r)));
            row
        })
        .collect();
    write_csv(&cfg.out_dir, "samples.csv", &cfg.to_map(), &col_refs, &rows)?;
    write_summary(
        &cfg.out_dir,
        "superquadratic",
        &cfg.to_map(),
        json!({
            "manifold": ManifoldSummary::from(&man),
            "order": model.order,
            "adams_simon": model.adams_simon,
            "slope": slope,
            "ratio_summary": ratio_summary,
            "family_len": family.len(),
        }),
    )?;
    Ok(())
}

fn run_bifurcate(cfg: &ExperimentConfig) -> Result<()> {
    let mut opts = solve_options(cfg);
    // the sweep crosses the degenerate length, where only descent accuracy
    // is achievable
    opts.residual_tol = cfg.residual_tol.max(1e-6);
    let diag = continuation(
        cfg.n,
        (cfg.l_min, cfg.l_max),
        cfg.l_steps,
        cfg.grid_n,
        cfg.seed,
        &opts,
    )?;
    let rows: Vec<Vec<String>> = diag
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_float(r.circle_len),
                fmt_float(r.eig_smallest),
                fmt_float(r.eig_second),
                fmt_float(r.q_constant),
                r.q_nonconstant.map(fmt_float).unwrap_or_default(),
                r.note.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir,
        "bifurcation.csv",
        &cfg.to_map(),
        &[
            "circle_len",
            "eig_smallest",
            "eig_second",
            "q_constant",
            "q_nonconstant",
            "note",
        ],
        &rows,
    )?;
    let man = Manifold::product(cfg.n, cfg.l_min)?;
    write_summary(
        &cfg.out_dir,
        "bifurcate",
        &cfg.to_map(),
        json!({
            "crossing": diag.crossing,
            "critical_length": man.critical_length(),
            "steps": diag.rows.len(),
        }),
    )?;
    Ok(())
}

fn run_loja(cfg: &ExperimentConfig) -> Result<()> {
    let (poly, source): (KernelPolynomial, Value) = match cfg.loja_poly.as_str() {
        "quad" => (
            KernelPolynomial {
                dim: 2,
                parts: vec![HomogeneousPoly::radial(2, 2)],
            },
            json!("synthetic |x|^2"),
        ),
        "quartic" => (
            KernelPolynomial {
                dim: 2,
                parts: vec![HomogeneousPoly::radial(2, 4)],
            },
            json!("synthetic |x|^4"),
        ),
        _ => {
            let (man, grid) = setup(cfg)?;
            let (_, reduced) = reduce_at_constant(cfg, &man, &grid)?;
            let (_, model) = reduced.ok_or_else(|| {
                Error::numerical(format!(
                    "the constant base has no kernel at l = {}; \
                     nothing to fit for the growth check",
                    cfg.l
                ))
            })?;
            let poly = model.polynomial();
            (poly, json!({ "fitted_order": model.order }))
        }
    };
    let res = lojasiewicz_check(&poly, cfg.loja_radius, cfg.loja_density, 1e-9)?;
    write_summary(
        &cfg.out_dir,
        "loja",
        &cfg.to_map(),
        json!({
            "source": source,
            "result": res,
        }),
    )?;
    Ok(())
}

/// Parses a repeatable `KEY=VAL` override.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VAL, got {s:?}"))
}

/// Builds the effective configuration from an optional file, `--set`
/// overrides, and the dedicated flags.
pub fn build_config(
    config_path: Option<&std::path::Path>,
    overrides: &[(String, String)],
    out: Option<std::path::PathBuf>,
    seed: Option<u64>,
) -> Result<ExperimentConfig> {
    let mut cfg = match config_path {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn config_map(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    cfg.to_map()
}
