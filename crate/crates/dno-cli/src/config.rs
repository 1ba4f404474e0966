//! Run configuration: JSON document with CLI flag overrides, resolved
//! into a concrete problem (profile, grid, Dirichlet data, optional
//! exact Neumann oracle) before any computation starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use dno_core::mpnum::PrecisionCtx;
use dno_core::profiles::{
    self, Depth, ExactPair, ProfileKind, WaveProfile,
};
use dno_core::spectral::{Grid, SurfaceField};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// working precision in bits
    pub bits: u32,
    /// number of collocation points M
    pub grid: usize,
    /// number of basis wavenumbers K (even)
    pub modes: usize,
    /// expansion order n_max
    pub order: usize,
    /// vertical polynomial degree for the flattened-layer solver
    pub cheb: usize,
    /// pseudo-inverse cutoff (defaults to full rank)
    pub cutoff: Option<usize>,
    /// wavenumber cutoff for partial-sum corrections
    pub mode_cutoff: Option<usize>,
    /// "inf" or a positive decimal depth
    pub depth: String,
    /// profile spec: flat | bandlimited | analytic[:kmax] | smooth[:kmax]
    /// | decay:alpha:beta[:kmax] | polepair:eps[:offset] | file:path
    pub profile: String,
    /// surface data spec: cos | exact | file
    pub dirichlet: String,
    /// enforce the structural zero pattern of single-harmonic profiles
    /// in the operator columns
    pub filter: bool,
    /// use the iterative integral-equation solver
    pub iterative: bool,
    /// deformation scale for rescaled norm reporting
    pub rescale: Option<String>,
    /// truncation orders for the divergence demonstration
    pub truncations: Vec<i64>,
    /// methods for the comparison table (empty = all applicable)
    pub methods: Vec<String>,
    /// output directory
    pub out: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            bits: 212,
            grid: 128,
            modes: 64,
            order: 16,
            cheb: 24,
            cutoff: None,
            mode_cutoff: None,
            depth: "inf".into(),
            profile: "polepair:0.5".into(),
            dirichlet: "cos".into(),
            filter: false,
            iterative: false,
            rescale: None,
            truncations: vec![16, 32, 64],
            methods: vec![],
            out: "out".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }
}

/// A fully resolved problem instance.
pub struct Problem {
    pub ctx: PrecisionCtx,
    pub profile: WaveProfile,
    pub grid: Grid,
    pub dirichlet: SurfaceField,
    pub exact_neumann: Option<SurfaceField>,
    pub pair: Option<ExactPair>,
}

fn parse_depth(spec: &str, ctx: &PrecisionCtx) -> Result<Depth, CliError> {
    if spec == "inf" {
        return Ok(Depth::Infinite);
    }
    let h = ctx
        .parse_real(spec)
        .map_err(|e| CliError::Config(format!("bad depth {spec:?}: {e}")))?;
    Depth::finite(h).map_err(|e| CliError::Config(format!("bad depth {spec:?}: {e}")))
}

fn parse_f64_field(part: Option<&str>, what: &str, default: f64) -> Result<f64, CliError> {
    match part {
        None => Ok(default),
        Some(s) => s
            .parse()
            .map_err(|_| CliError::Config(format!("bad {what} {s:?}"))),
    }
}

fn parse_kmax(part: Option<&str>, grid: usize) -> Result<i64, CliError> {
    match part {
        None => Ok((grid / 2 - 1).max(1) as i64),
        Some(s) => s
            .parse()
            .map_err(|_| CliError::Config(format!("bad profile truncation {s:?}"))),
    }
}

pub fn resolve(config: &ExperimentConfig) -> Result<Problem, CliError> {
    let ctx = PrecisionCtx::new(config.bits)
        .map_err(|e| CliError::Config(format!("bad precision: {e}")))?;
    let depth = parse_depth(&config.depth, &ctx)?;
    let grid = Grid::standard(config.grid, &ctx)
        .map_err(|e| CliError::Config(format!("bad grid size: {e}")))?;
    let parts: Vec<&str> = config.profile.split(':').collect();
    let mut pair: Option<ExactPair> = None;
    let mut file_data: Option<profiles::SurfaceData> = None;
    let profile = match parts[0] {
        "flat" => WaveProfile::new(vec![], depth, ctx.two_pi(), &ctx)
            .map_err(|e| CliError::Config(e.to_string()))?,
        "bandlimited" => {
            profiles::example_profile(ProfileKind::BandLimited, 1, depth, &ctx)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        "analytic" => profiles::example_profile(
            ProfileKind::Analytic,
            parse_kmax(parts.get(1).copied(), config.grid)?,
            depth,
            &ctx,
        )
        .map_err(|e| CliError::Config(e.to_string()))?,
        "smooth" => profiles::example_profile(
            ProfileKind::Smooth,
            parse_kmax(parts.get(1).copied(), config.grid)?,
            depth,
            &ctx,
        )
        .map_err(|e| CliError::Config(e.to_string()))?,
        "decay" => {
            let alpha = parse_f64_field(parts.get(1).copied(), "decay rate", 1.0)?;
            let beta = parse_f64_field(parts.get(2).copied(), "decay exponent", 1.0)?;
            profiles::decaying_family_profile(
                &ctx.real_from_f64(alpha),
                &ctx.real_from_f64(beta),
                parse_kmax(parts.get(3).copied(), config.grid)?,
                depth,
                &ctx,
            )
            .map_err(|e| CliError::Config(e.to_string()))?
        }
        "polepair" => {
            let eps = parse_f64_field(parts.get(1).copied(), "pole strength", 0.5)?;
            let offset = parse_f64_field(parts.get(2).copied(), "profile offset", 0.0)?;
            let p = profiles::polepair_exact(
                &ctx.real_from_f64(eps),
                &ctx.real_from_f64(offset),
                depth,
                &ctx,
            )
            .map_err(|e| CliError::Config(format!("pole-pair construction failed: {e}")))?;
            let prof = p.profile.clone();
            pair = Some(p);
            prof
        }
        "file" => {
            let path = config
                .profile
                .strip_prefix("file:")
                .filter(|p| !p.is_empty())
                .ok_or_else(|| CliError::Config("file profile needs a path".into()))?;
            let data = profiles::load_surface_file(Path::new(path), &ctx)
                .map_err(|e| CliError::Config(format!("surface file {path}: {e}")))?;
            let prof = data.profile.clone();
            file_data = Some(data);
            prof
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown profile kind {other:?} (expected flat, bandlimited, analytic, \
                 smooth, decay, polepair, or file)"
            )))
        }
    };
    let (dirichlet, exact_neumann) = match config.dirichlet.as_str() {
        "cos" => (
            SurfaceField::from_fn(grid.clone(), &ctx, |x| x.clone().cos())
                .map_err(|e| CliError::Config(e.to_string()))?,
            None,
        ),
        "exact" => {
            let p = pair.as_ref().ok_or_else(|| {
                CliError::Config(
                    "dirichlet=exact requires the polepair profile (it is the only \
                     built-in with closed-form traces)"
                        .into(),
                )
            })?;
            let d = p
                .dirichlet_field(&grid, &ctx)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            let n = p
                .neumann_field(&grid, &ctx)
                .map_err(|e| CliError::Numeric(e.to_string()))?;
            (d, Some(n))
        }
        "file" => {
            let data = file_data.as_ref().ok_or_else(|| {
                CliError::Config("dirichlet=file requires a file profile".into())
            })?;
            (
                data.dirichlet_field(&grid, &ctx)
                    .map_err(|e| CliError::Config(e.to_string()))?,
                None,
            )
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown dirichlet spec {other:?} (expected cos, exact, or file)"
            )))
        }
    };
    Ok(Problem {
        ctx,
        profile,
        grid,
        dirichlet,
        exact_neumann,
        pair,
    })
}
