//! One function per subcommand.  Each resolves the config, runs the
//! computation, writes CSV + metadata artifacts, and returns.

use std::time::Instant;

use serde_json::json;

use dno_core::mpnum::{MpReal, PrecisionCtx};
use dno_core::profiles::{self, Depth};
use dno_core::spectral::SurfaceField;
use dno_core::{afm, bim, cs, tfe};

use crate::config::{resolve, ExperimentConfig};
use crate::output::Artifacts;
use crate::CliError;

fn num(e: dno_core::DnoError) -> CliError {
    CliError::Numeric(e.to_string())
}

fn fmt(ctx: &PrecisionCtx, x: &MpReal) -> String {
    ctx.format_real(x)
}

fn rms_diff(a: &SurfaceField, b: &SurfaceField, ctx: &PrecisionCtx) -> MpReal {
    let mut acc = ctx.zero();
    for (x, y) in a.values().iter().zip(b.values()) {
        acc += (x.clone() - y).square();
    }
    acc /= ctx.real_from_i64(a.values().len() as i64);
    acc.sqrt()
}

fn parse_rescale(config: &ExperimentConfig, ctx: &PrecisionCtx) -> Result<Option<MpReal>, CliError> {
    match &config.rescale {
        None => Ok(None),
        Some(s) => ctx
            .parse_real(s)
            .map(Some)
            .map_err(|e| CliError::Config(format!("bad rescale {s:?}: {e}"))),
    }
}

/// Per-order operator-norm growth and cancellation report.
pub fn cs_growth(config: &ExperimentConfig) -> Result<(), CliError> {
    let p = resolve(config)?;
    let t0 = Instant::now();
    let rescale = parse_rescale(config, &p.ctx)?;
    let rep = cs::cancellation_report(
        &p.profile,
        config.order,
        config.grid,
        config.modes,
        config.filter,
        rescale.as_ref(),
        &p.ctx,
    )
    .map_err(num)?;
    let mut rows = Vec::new();
    for r in &rep.rows {
        rows.push(vec![
            r.order.to_string(),
            fmt(&p.ctx, &r.a_norm),
            fmt(&p.ctx, &r.g_norm),
            fmt(&p.ctx, &r.r_sym),
            r.a_norm_rescaled
                .as_ref()
                .map(|v| fmt(&p.ctx, v))
                .unwrap_or_default(),
            r.g_norm_rescaled
                .as_ref()
                .map(|v| fmt(&p.ctx, v))
                .unwrap_or_default(),
            r.noise_gap.map(|g| g.to_string()).unwrap_or_default(),
        ]);
    }
    let mut art = Artifacts::new(config, "cs-growth")?;
    art.write_csv(
        "",
        &[
            "n",
            "term_norm",
            "operator_norm",
            "symmetry_defect",
            "term_norm_rescaled",
            "operator_norm_rescaled",
            "noise_exponent_gap",
        ],
        &rows,
    )?;
    let flagged = rep.flagged_orders.clone();
    art.finish(
        config,
        t0.elapsed().as_secs_f64(),
        json!({ "flagged_orders": flagged }),
    )?;
    if !flagged.is_empty() {
        return Err(CliError::Numeric(format!(
            "precision-insufficiency heuristic tripped at orders {flagged:?} \
             (high-wavenumber rows have reached noise level); increase --bits"
        )));
    }
    Ok(())
}

/// Column norms of the expansion operators, order by order.
pub fn cs_columns(config: &ExperimentConfig) -> Result<(), CliError> {
    let p = resolve(config)?;
    let t0 = Instant::now();
    let mats = cs::gn_recursion(
        &p.profile,
        config.order,
        config.grid,
        config.modes,
        config.filter,
        &p.ctx,
    )
    .map_err(num)?;
    let half = (config.modes / 2) as i64;
    let mut rows = Vec::new();
    for mat in &mats {
        for j in 1..half {
            let mut acc = p.ctx.zero();
            for k in (-half + 1)..half {
                acc += mat.entry(k, j, &p.ctx).norm().real();
            }
            rows.push(vec![
                mat.order.to_string(),
                j.to_string(),
                fmt(&p.ctx, &acc.sqrt()),
            ]);
        }
    }
    let mut art = Artifacts::new(config, "cs-columns")?;
    art.write_csv("", &["n", "j", "column_norm"], &rows)?;
    art.finish(config, t0.elapsed().as_secs_f64(), json!({}))
}

/// Self-adjointness defect per order.
pub fn cs_sym(config: &ExperimentConfig) -> Result<(), CliError> {
    let p = resolve(config)?;
    let t0 = Instant::now();
    let rep = cs::cancellation_report(
        &p.profile,
        config.order,
        config.grid,
        config.modes,
        config.filter,
        None,
        &p.ctx,
    )
    .map_err(num)?;
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| vec![r.order.to_string(), fmt(&p.ctx, &r.r_sym)])
        .collect();
    let mut art = Artifacts::new(config, "cs-sym")?;
    art.write_csv("", &["n", "symmetry_defect"], &rows)?;
    art.finish(
        config,
        t0.elapsed().as_secs_f64(),
        json!({ "filtered": config.filter }),
    )
}

/// Partial-sum errors of the expansion applied to exact data.
pub fn cs_apply(config: &ExperimentConfig) -> Result<(), CliError> {
    let p = resolve(config)?;
    let exact = p.exact_neumann.as_ref().ok_or_else(|| {
        CliError::Config(
            "partial-sum errors need exact data: use --profile polepair:... \
             with --dirichlet exact"
                .into(),
        )
    })?;
    let t0 = Instant::now();
    let terms = cs::apply_gn_terms(&p.profile, &p.dirichlet, config.order, &p.ctx).map_err(num)?;
    let cutoff = config.mode_cutoff.unwrap_or(config.grid / 4);
    let errs = cs::partial_sum_errors(&terms, exact, cutoff, &p.ctx).map_err(num)?;
    let rows: Vec<Vec<String>> = errs
        .iter()
        .enumerate()
        .map(|(n, e)| vec![n.to_string(), fmt(&p.ctx, e)])
        .collect();
    let mut art = Artifacts::new(config, "cs-apply")?;
    art.write_csv("", &["n", "partial_sum_error"], &rows)?;
    art.finish(
        config,
        t0.elapsed().as_secs_f64(),
        json!({ "mode_cutoff": cutoff }),
    )
}

/// Pseudo-inverse cutoff sweep for the surface-adapted solvers.
pub fn afm_sweep(config: &ExperimentConfig) -> Result<(), CliError> {
    let p = resolve(config)?;
    let exact = p.exact_neumann.as_ref().ok_or_else(|| {
        CliError::Config(
            "the sweep needs exact data: use --profile polepair:... with \
             --dirichlet exact"
                .into(),
        )
    })?;
    let t0 = Instant::now();
    let sys = afm::build_system(&p.profile, config.modes, config.grid, &p.ctx).map_err(num)?;
    let sweep = afm::cutoff_sweep(&sys, &p.dirichlet, exact, &p.ctx).map_err(num)?;
    let rows: Vec<Vec<String>> = sweep
        .cutoffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            vec![
                c.to_string(),
                fmt(&p.ctx, &sweep.rms_afm[i]),
                fmt(&p.ctx, &sweep.rms_afmstar[i]),
            ]
        })
        .collect();
    let mut art = Artifacts::new(config, "afm-sweep")?;
    art.write_csv("", &["cutoff", "rms_direct", "rms_adjoint"], &rows)?;
    let sv = sys.singular_values().map_err(num)?;
    art.finish(
        config,
        t0.elapsed().as_secs_f64(),
        json!({
            "best_cutoff_direct": sweep.cutoffs[sweep.best_afm],
            "best_cutoff_adjoint": sweep.cutoffs[sweep.best_afmstar],
            "best_rms_direct": sweep.rms_afm[sweep.best_afm].to_f64(),
            "best_rms_adjoint": sweep.rms_afmstar[sweep.best_afmstar].to_f64(),
            "singular_value_ratio": (sv.first().unwrap().clone() / sv.last().unwrap()).to_f64(),
        }),
    )
}

/// Surface-adapted transform of the Neumann data vs plain Fourier.
pub fn afm_transform(config: &ExperimentConfig) -> Result<(), CliError> {
    let p = resolve(config)?;
    let t0 = Instant::now();
    let neumann = match &p.exact_neumann {
        Some(n) => n.clone(),
        None => {
            let (n, _) = bim::bim_dno(&p.profile, &p.dirichlet, bim::SolveMethod::Direct, &p.ctx)
                .map_err(num)?;
            n
        }
    };
    let sys = afm::build_system(&p.profile, config.modes, config.grid, &p.ctx).map_err(num)?;
    let adapted = afm::afm_transform(&sys, &neumann, &p.ctx).map_err(num)?;
    let mut rows = Vec::new();
    for (k, c) in adapted.iter().enumerate() {
        let fourier = neumann.mode(k as i64, &p.ctx).abs().real().clone();
        let a = c.clone().abs().real().clone();
        rows.push(vec![
            k.to_string(),
            fmt(&p.ctx, &fourier),
            fmt(&p.ctx, &a),
        ]);
    }
    let mut art = Artifacts::new(config, "afm-transform")?;
    art.write_csv("", &["k", "fourier_abs", "adapted_abs"], &rows)?;
    art.finish(config, t0.elapsed().as_secs_f64(), json!({}))
}

/// Second-kind integral-equation solve.
pub fn bim_solve(config: &ExperimentConfig) -> Result<(), CliError> {
    let p = resolve(config)?;
    let t0 = Instant::now();
    let method = if config.iterative {
        bim::SolveMethod::Iterative
    } else {
        bim::SolveMethod::Direct
    };
    let kernels = bim::assemble_kernels(&p.profile, config.grid, &p.ctx).map_err(num)?;
    let sol = bim::bim_solve(&kernels, &p.dirichlet, method, &p.ctx).map_err(num)?;
    let neumann = bim::bim_neumann(&kernels, &sol.mu, &p.ctx).map_err(num)?;
    let points = p.grid.points(&p.ctx);
    let mut header = vec!["x", "dirichlet", "neumann"];
    if p.exact_neumann.is_some() {
        header.push("exact_neumann");
        header.push("abs_error");
    }
    let mut rows = Vec::new();
    for (i, x) in points.iter().enumerate() {
        let mut row = vec![
            fmt(&p.ctx, x),
            fmt(&p.ctx, &p.dirichlet.values()[i]),
            fmt(&p.ctx, &neumann.values()[i]),
        ];
        if let Some(exact) = &p.exact_neumann {
            let e = (neumann.values()[i].clone() - &exact.values()[i]).abs();
            row.push(fmt(&p.ctx, &exact.values()[i]));
            row.push(fmt(&p.ctx, &e));
        }
        rows.push(row);
    }
    let mut art = Artifacts::new(config, "bim-solve")?;
    art.write_csv("", &header, &rows)?;
    art.finish(
        config,
        t0.elapsed().as_secs_f64(),
        json!({
            "condition": sol.condition.to_f64(),
            "iterations": sol.iterations,
            "fell_back": sol.fell_back,
        }),
    )?;
    if sol.fell_back {
        return Err(CliError::Numeric(
            "iterative solver did not converge; results come from the direct \
             fallback"
                .into(),
        ));
    }
    Ok(())
}

/// Flattened-layer expansion run with resolution diagnostics.
pub fn tfe_run(config: &ExperimentConfig) -> Result<(), CliError> {
    let p = resolve(config)?;
    if matches!(p.profile.depth(), Depth::Infinite) {
        return Err(CliError::Config(
            "the flattened-layer method needs a finite depth: pass --depth H".into(),
        ));
    }
    let t0 = Instant::now();
    let exp = tfe::tfe_expansion(&p.profile, &p.dirichlet, config.order, config.cheb, &p.ctx)
        .map_err(num)?;
    let mut rows = Vec::new();
    for (n, term) in exp.terms.iter().enumerate() {
        let mut acc = p.ctx.zero();
        for v in term.values() {
            acc += v.clone().square();
        }
        acc /= p.ctx.real_from_i64(term.values().len() as i64);
        rows.push(vec![n.to_string(), fmt(&p.ctx, &acc.sqrt())]);
    }
    let mut art = Artifacts::new(config, "tfe-run")?;
    art.write_csv("", &["n", "term_rms"], &rows)?;
    // resolution diagnostics: energy per Fourier bin and per vertical
    // polynomial degree
    let mut grows = Vec::new();
    for (n, g) in exp.gamma.iter().enumerate() {
        for (b, v) in g.iter().enumerate() {
            grows.push(vec![
                n.to_string(),
                p.grid.bin_to_mode(b).to_string(),
                fmt(&p.ctx, v),
            ]);
        }
    }
    art.write_csv(".modes", &["n", "k", "coefficient_norm"], &grows)?;
    let mut krows = Vec::new();
    for (n, kp) in exp.kappa.iter().enumerate() {
        for (j, v) in kp.iter().enumerate() {
            krows.push(vec![n.to_string(), j.to_string(), fmt(&p.ctx, v)]);
        }
    }
    art.write_csv(".vertical", &["n", "j", "coefficient_norm"], &krows)?;
    art.finish(config, t0.elapsed().as_secs_f64(), json!({}))
}

/// Truncated-series divergence demonstration.
pub fn demo_divergence(config: &ExperimentConfig) -> Result<(), CliError> {
    let p = resolve(config)?;
    let pair = p.pair.as_ref().ok_or_else(|| {
        CliError::Config("the demonstration needs --profile polepair:EPS".into())
    })?;
    if !pair.offset().is_zero() {
        return Err(CliError::Config(
            "the explicit series is for the zero-offset profile; use polepair:EPS:0".into(),
        ));
    }
    if config.truncations.is_empty() {
        return Err(CliError::Config("need at least one truncation order".into()));
    }
    let t0 = Instant::now();
    let points = p.grid.points(&p.ctx);
    let d_exact = pair.dirichlet_field(&p.grid, &p.ctx).map_err(num)?;
    let n_exact = pair.neumann_field(&p.grid, &p.ctx).map_err(num)?;
    let mut header = vec!["x".to_string(), "d_exact".into(), "n_exact".into()];
    let mut columns = Vec::new();
    for k in &config.truncations {
        header.push(format!("d_{k}"));
        header.push(format!("n_{k}"));
        columns.push(
            profiles::divergent_series_demo(pair.epsilon(), *k, &p.grid, &p.ctx).map_err(num)?,
        );
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows = Vec::new();
    for (i, x) in points.iter().enumerate() {
        let mut row = vec![
            fmt(&p.ctx, x),
            fmt(&p.ctx, &d_exact.values()[i]),
            fmt(&p.ctx, &n_exact.values()[i]),
        ];
        for (dv, nv) in &columns {
            row.push(fmt(&p.ctx, &dv[i]));
            row.push(fmt(&p.ctx, &nv[i]));
        }
        rows.push(row);
    }
    let mut art = Artifacts::new(config, "demo-divergence")?;
    art.write_csv("", &header_refs, &rows)?;
    art.finish(
        config,
        t0.elapsed().as_secs_f64(),
        json!({ "truncations": config.truncations }),
    )
}

/// Cross-method comparison against the best available oracle.
pub fn compare(config: &ExperimentConfig) -> Result<(), CliError> {
    let p = resolve(config)?;
    let t0 = Instant::now();
    let finite = !matches!(p.profile.depth(), Depth::Infinite);
    let requested: Vec<String> = if config.methods.is_empty() {
        let mut all = vec!["bim".to_string(), "cs".into(), "afm".into(), "afmstar".into()];
        if finite {
            all.insert(1, "tfe".into());
        }
        all
    } else {
        config.methods.clone()
    };
    // oracle: closed-form traces when available, otherwise the
    // integral solver at elevated precision
    let (oracle, oracle_name) = match &p.exact_neumann {
        Some(n) => (n.clone(), "closed form"),
        None => {
            let mut hi = config.clone();
            hi.bits = config.bits + 96;
            let ph = resolve(&hi)?;
            let (n_hi, _) =
                bim::bim_dno(&ph.profile, &ph.dirichlet, bim::SolveMethod::Direct, &ph.ctx)
                    .map_err(num)?;
            let values: Vec<MpReal> = n_hi
                .values()
                .iter()
                .map(|v| p.ctx.round_real(v))
                .collect();
            (
                SurfaceField::from_values(p.grid.clone(), values, &p.ctx).map_err(num)?,
                "elevated-precision integral solve",
            )
        }
    };
    let cutoff = config.cutoff.unwrap_or(config.modes - 1);
    let mut rows = Vec::new();
    let mut diagnostics = serde_json::Map::new();
    for name in &requested {
        let start = Instant::now();
        let (field, diag): (SurfaceField, serde_json::Value) = match name.as_str() {
            "bim" => {
                let kernels =
                    bim::assemble_kernels(&p.profile, config.grid, &p.ctx).map_err(num)?;
                let sol =
                    bim::bim_solve(&kernels, &p.dirichlet, bim::SolveMethod::Direct, &p.ctx)
                        .map_err(num)?;
                let n = bim::bim_neumann(&kernels, &sol.mu, &p.ctx).map_err(num)?;
                (n, json!({ "condition": sol.condition.to_f64() }))
            }
            "cs" => {
                let terms = cs::apply_gn_terms(&p.profile, &p.dirichlet, config.order, &p.ctx)
                    .map_err(num)?;
                let mut acc: Vec<MpReal> =
                    (0..p.grid.len()).map(|_| p.ctx.zero()).collect();
                for t in &terms {
                    for (a, v) in acc.iter_mut().zip(t.values()) {
                        *a += v;
                    }
                }
                (
                    SurfaceField::from_values(p.grid.clone(), acc, &p.ctx).map_err(num)?,
                    json!({ "orders": config.order }),
                )
            }
            "tfe" => {
                if !finite {
                    return Err(CliError::Config(
                        "method tfe needs a finite depth: pass --depth H".into(),
                    ));
                }
                let exp = tfe::tfe_expansion(
                    &p.profile,
                    &p.dirichlet,
                    config.order,
                    config.cheb,
                    &p.ctx,
                )
                .map_err(num)?;
                (
                    exp.neumann_partial(config.order, &p.ctx).map_err(num)?,
                    json!({ "orders": config.order, "vertical_degree": config.cheb }),
                )
            }
            "afm" | "afmstar" => {
                let sys =
                    afm::build_system(&p.profile, config.modes, config.grid, &p.ctx).map_err(num)?;
                let n = if name == "afm" {
                    afm::afm_neumann(&sys, &p.dirichlet, cutoff, &p.ctx).map_err(num)?
                } else {
                    afm::afmstar_neumann(&sys, &p.dirichlet, cutoff, &p.ctx).map_err(num)?
                };
                let sv = sys.singular_values().map_err(num)?;
                (
                    n,
                    json!({
                        "cutoff": cutoff,
                        "singular_value_ratio":
                            (sv.first().unwrap().clone() / sv.last().unwrap()).to_f64(),
                    }),
                )
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown method {other:?} (expected bim, cs, tfe, afm, afmstar)"
                )))
            }
        };
        let err = rms_diff(&field, &oracle, &p.ctx);
        rows.push(vec![
            name.clone(),
            fmt(&p.ctx, &err),
            format!("{:.6}", start.elapsed().as_secs_f64()),
        ]);
        diagnostics.insert(name.clone(), diag);
    }
    let mut art = Artifacts::new(config, "compare")?;
    art.write_csv("", &["method", "rms_error", "wall_seconds"], &rows)?;
    art.finish(
        config,
        t0.elapsed().as_secs_f64(),
        json!({ "oracle": oracle_name, "methods": requested, "per_method": diagnostics }),
    )
}
