use std::fs;
use std::io::Write;

use log::info;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use contlim_core::channels::{is_cptp, is_projector_channel, kraus_to_superop, CptpReport, SuperOp};
use contlim_core::divisibility::{
    coarse_divisibility, is_infinitely_divisible, plp_defect, spectrum, DivisibilityStatus,
    DivisibilityVerdict,
};
use contlim_core::formats::{
    canonical_form_to_value, format_float, gcmps_to_value, lindblad_to_value, parse_any,
    to_json_line, to_json_string, InputFile, JsonMatrix,
};
use contlim_core::gcmps::{from_verdict, GeneralizedCmps, Species};
use contlim_core::lindblad::{channel_at, markovian_test, MarkovianVerdict};
use contlim_core::mps::{transfer_matrix, Preset};
use contlim_core::numerics::fro_norm;
use contlim_core::projectors::{build_projector, canonical_form, thermo_liouvillian, verify_thermo_limit};

use crate::{Common, CorrelateArgs, Format};

/// Largest power tried when looking for a coarse continuum limit.
const COARSE_MAX_POWER: usize = 8;
/// Times at which the thermodynamic generator is compared with its limit.
const THERMO_TIMES: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0];
const THERMO_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] contlim_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("not divisible: {0}")]
    NotDivisible(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::NotDivisible(_) | Self::Core(contlim_core::Error::Unsupported(_)) => 2,
            Self::Inconclusive(_) => 3,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Debug, Serialize)]
struct SourceInfo {
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
}

struct Loaded {
    source: SourceInfo,
    file: InputFile,
}

fn validate(c: &Common) -> CliResult<()> {
    if !(c.tol > 0.0) || !c.tol.is_finite() {
        return Err(CliError::Usage(format!("--tol {} must be positive", c.tol)));
    }
    if !(c.spacing > 0.0) || !c.spacing.is_finite() {
        return Err(CliError::Usage(format!("--spacing {} must be positive", c.spacing)));
    }
    if !(c.gamma >= 0.0) || !c.gamma.is_finite() {
        return Err(CliError::Usage(format!("--gamma {} must be nonnegative", c.gamma)));
    }
    Ok(())
}

fn load(c: &Common) -> CliResult<Loaded> {
    validate(c)?;
    match (&c.input, &c.preset) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let file = parse_any(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            info!("loaded {} from {}", file.kind(), path.display());
            Ok(Loaded {
                source: SourceInfo {
                    kind: file.kind(),
                    input: Some(path.display().to_string()),
                    preset: None,
                    gamma: None,
                },
                file,
            })
        }
        (None, Some(name)) => {
            let preset = Preset::parse(name, c.gamma * c.spacing)?;
            let tensor = preset.tensor(c.spacing)?;
            Ok(Loaded {
                source: SourceInfo {
                    kind: "tensor",
                    input: None,
                    preset: Some(name.clone()),
                    gamma: matches!(preset, Preset::Bracket { .. }).then_some(c.gamma),
                },
                file: InputFile::Tensor(tensor),
            })
        }
        _ => Err(CliError::Usage("exactly one of --input or --preset is required".into())),
    }
}

/// The channel an input describes and the length it spans.
fn as_channel(file: &InputFile, spacing: f64) -> CliResult<(SuperOp, f64)> {
    Ok(match file {
        InputFile::Channel(k) => (kraus_to_superop(k), spacing),
        InputFile::Tensor(t) => (transfer_matrix(t), t.spacing),
        InputFile::CanonicalForm(cf) => (build_projector(cf)?, spacing),
        InputFile::Lindblad(g) => (channel_at(g, spacing)?, spacing),
        InputFile::Gcmps(g) => (g.transfer(spacing)?, spacing),
    })
}

fn emit(c: &Common, text: &str) -> CliResult<()> {
    match &c.out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn format_for(c: &Common, default: Format, allowed: &[Format]) -> CliResult<Format> {
    let f = c.format.unwrap_or(default);
    if !allowed.contains(&f) {
        return Err(CliError::Usage(format!("format {f:?} is not supported by this command")));
    }
    Ok(f)
}

fn json_text(v: &impl Serialize) -> CliResult<String> {
    Ok(to_json_string(v)?)
}

fn complex_text(z: [f64; 2]) -> String {
    format!("{}{:+.16e}i", format_float(z[0]), z[1])
}

#[derive(Serialize)]
struct CoarseReport {
    power: usize,
    generator: JsonMatrix,
}

#[derive(Serialize)]
struct AnalyzeReport {
    source: SourceInfo,
    dim: usize,
    spacing: f64,
    status: DivisibilityStatus,
    cptp: CptpReport,
    projector_channel: bool,
    markovian: &'static str,
    eigenvalues: Vec<[f64; 2]>,
    projector: Option<JsonMatrix>,
    generator: Option<JsonMatrix>,
    plp_defect: Option<f64>,
    coarse: Option<CoarseReport>,
    diagnostics: Vec<String>,
}

fn exit_for(status: DivisibilityStatus) -> u8 {
    match status {
        DivisibilityStatus::Divisible | DivisibilityStatus::Markovian => 0,
        DivisibilityStatus::NotDivisible => 2,
        DivisibilityStatus::Inconclusive => 3,
    }
}

pub fn analyze(c: &Common) -> CliResult<u8> {
    let format = format_for(c, Format::Json, &[Format::Json, Format::Text])?;
    let loaded = load(c)?;
    let (e, spacing) = as_channel(&loaded.file, c.spacing)?;
    let verdict = is_infinitely_divisible(&e, spacing, c.tol)?;
    info!("verdict {}", verdict.status.as_str());
    let markovian = match markovian_test(&e, c.tol) {
        MarkovianVerdict::Yes(_) => "yes",
        MarkovianVerdict::No(_) => "no",
        MarkovianVerdict::Inconclusive(_) => "inconclusive",
    };
    let coarse = if verdict.status == DivisibilityStatus::NotDivisible {
        coarse_divisibility(&e, COARSE_MAX_POWER, c.tol)?.map(|cd| CoarseReport {
            power: cd.power,
            generator: JsonMatrix::from(&cd.generator.matrix),
        })
    } else {
        None
    };
    let DivisibilityVerdict {
        status,
        projector,
        generator,
        diagnostics,
        ..
    } = verdict;
    let report = AnalyzeReport {
        source: loaded.source,
        dim: e.dim,
        spacing,
        status,
        cptp: is_cptp(&e, c.tol),
        projector_channel: is_projector_channel(&e, c.tol),
        markovian,
        eigenvalues: spectrum(&e)?.iter().map(|z| [z.re, z.im]).collect(),
        plp_defect: projector.as_ref().zip(generator.as_ref()).map(|(p, l)| plp_defect(p, l)),
        projector: projector.as_ref().map(|p| JsonMatrix::from(&p.matrix)),
        generator: generator.as_ref().map(|l| JsonMatrix::from(&l.matrix)),
        coarse,
        diagnostics,
    };
    let text = match format {
        Format::Text => {
            let mut s = format!("status: {}\nspacing: {}\n", status.as_str(), format_float(spacing));
            s += &format!("markovian: {}\nprojector channel: {}\n", report.markovian, report.projector_channel);
            let ev: Vec<String> = report.eigenvalues.iter().map(|&z| complex_text(z)).collect();
            s += &format!("eigenvalues: {}\n", ev.join(", "));
            if let Some(d) = report.plp_defect {
                s += &format!("plp defect: {}\n", format_float(d));
            }
            if let Some(cd) = &report.coarse {
                s += &format!("coarse power: {}\n", cd.power);
            }
            for d in &report.diagnostics {
                s += &format!("note: {d}\n");
            }
            s
        }
        _ => json_text(&report)?,
    };
    emit(c, &text)?;
    Ok(exit_for(status))
}

fn build_gcmps(c: &Common, file: &InputFile) -> CliResult<GeneralizedCmps> {
    if let InputFile::Gcmps(g) = file {
        return Ok(g.clone());
    }
    let (e, spacing) = as_channel(file, c.spacing)?;
    let verdict = is_infinitely_divisible(&e, spacing, c.tol)?;
    let why = verdict.diagnostics.join("; ");
    match verdict.status {
        DivisibilityStatus::NotDivisible => Err(CliError::NotDivisible(why)),
        DivisibilityStatus::Inconclusive => Err(CliError::Inconclusive(why)),
        _ => Ok(from_verdict(&verdict, c.tol)?),
    }
}

pub fn gcmps(c: &Common) -> CliResult<u8> {
    format_for(c, Format::Json, &[Format::Json])?;
    let loaded = load(c)?;
    let g = build_gcmps(c, &loaded.file)?;
    info!("K = {}, {} species", g.ancilla_dim(), g.species());
    emit(c, &json_text(&gcmps_to_value(&g))?)?;
    Ok(0)
}

pub fn correlate(args: &CorrelateArgs) -> CliResult<u8> {
    let c = &args.common;
    let format = format_for(c, Format::Csv, &[Format::Csv, Format::Json])?;
    let loaded = load(c)?;
    let g = build_gcmps(c, &loaded.file)?;
    let species = match (args.alpha, args.beta) {
        (Some(a), Some(b)) => Species::Pair(a, b),
        _ => Species::Total,
    };
    let points = g.one_body_grid(args.length, args.grid, species)?;
    let header = json!({
        "K": g.ancilla_dim(),
        "q": g.species(),
        "jump_norms": g.jumps.iter().map(fro_norm).collect::<Vec<_>>(),
        "gamma": loaded.source.gamma,
        "length": args.length,
        "grid": args.grid,
        "species": match species {
            Species::Total => Value::from("total"),
            Species::Pair(a, b) => json!([a, b]),
        },
    });
    let text = match format {
        Format::Json => {
            let rows: Vec<Value> = points
                .iter()
                .map(|p| json!({"x": p.x, "y": p.y, "re": p.value.re, "im": p.value.im}))
                .collect();
            json_text(&json!({"header": header, "points": rows}))?
        }
        _ => {
            let header_line = to_json_line(&header)?;
            let mut s = format!("# {header_line}\nx,y,re,im\n");
            for p in &points {
                s += &format!(
                    "{},{},{},{}\n",
                    format_float(p.x),
                    format_float(p.y),
                    format_float(p.value.re),
                    format_float(p.value.im)
                );
            }
            s
        }
    };
    emit(c, &text)?;
    Ok(0)
}

pub fn thermo(c: &Common) -> CliResult<u8> {
    let format = format_for(c, Format::Json, &[Format::Json, Format::Text])?;
    let loaded = load(c)?;
    let cf = match &loaded.file {
        InputFile::CanonicalForm(cf) => cf.clone(),
        other => {
            let (p, _) = as_channel(other, c.spacing)?;
            canonical_form(&p, c.tol, c.seed)?
        }
    };
    let p = build_projector(&cf)?;
    let generator = thermo_liouvillian(&cf)?;
    let table = verify_thermo_limit(&p, &generator, &THERMO_TIMES, THERMO_TOL)?;
    info!("thermodynamic generator converged: {}", table.passed);
    let text = match format {
        Format::Text => {
            let mut s = format!("converged: {}\nt,distance\n", table.passed);
            for pt in &table.points {
                s += &format!("{},{}\n", format_float(pt.t), format_float(pt.distance));
            }
            s
        }
        _ => json_text(&json!({
            "source": loaded.source,
            "canonical_form": canonical_form_to_value(&cf),
            "generator": lindblad_to_value(&generator),
            "table": table.points,
            "converged": table.passed,
            "tolerance": THERMO_TOL,
        }))?,
    };
    emit(c, &text)?;
    Ok(0)
}
