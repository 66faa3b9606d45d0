//! `chroma`: parameter tables, bound curves, constructions and certificates
//! for unit-distance-free colorings of spheres and balls.
//!
//! Exit status: 0 when every certificate passes, 1 when one fails, 2 on
//! usage, domain or I/O errors.

mod config;
mod pipeline;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use chroma::ball::{certify_ball, color_ball, BallConfig};
use chroma::covering::{
    certify_unit_pairs, color_sphere, fractional_cover_exact, transfer_cover, CoverFile, CoverResult,
    Hypergraph, SphereColoring, SphereConfig,
};
use chroma::forbidden::{
    analytic_density_bound, certify_forbidden, check_clearance, mc_density, CapPacking, ForbiddenSet,
    PackingConfig,
};
use chroma::io::{read_json, to_json_string, write_json};
use chroma::params::{
    r_star, shell_functions, small_r_params, x_large_branch, x_of_r, RadiusParams, Regime, ShellParams, SQRT5_HALF,
};

use config::{ExperimentConfig, SEED_ENV};

#[derive(Parser)]
#[command(name = "chroma", version, about = "Colorings of spheres and balls without unit distances")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solved parameters at one radius, as JSON.
    Params {
        #[arg(long = "R")]
        radius: f64,
        /// Dimension; sets the small-radius angle pi/4 - 1/n.
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Slack for the small-radius base and the shell parameters.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV of the bound base x(R) against 2R and 3.
    Curve {
        #[arg(long)]
        rmin: f64,
        #[arg(long)]
        rmax: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the packing and forbidden set and certify them.
    Construct {
        #[arg(long = "R")]
        radius: f64,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, visible_alias = "lambda-frac", default_value_t = 0.95)]
        lambda_fraction: f64,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Color a sphere and certify the coloring.
    ColorSphere {
        #[arg(long = "R")]
        radius: f64,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        rotations: usize,
        #[arg(long, visible_alias = "lambda-frac", default_value_t = 0.95)]
        lambda_fraction: f64,
        /// Inner shrink fraction (default 1/(2 n ln n)).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Color a ball by nested shells and certify the coloring.
    ColorBall {
        #[arg(long = "R")]
        radius: f64,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy and exact fractional cover of a small hypergraph file
    /// `{"vertices": k, "edges": [[...], ...]}`.
    CoverLab {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Re-check a stored sphere coloring (cover.json).
    Verify {
        #[arg(long)]
        cover: PathBuf,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Run the whole pipeline from an experiment config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

/// A certificate outcome: `Err` names the first failing check.
type Outcome = std::result::Result<(), String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(name)) => {
            eprintln!("certificate failed: {name}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Params { radius, n, eps, out } => cmd_params(radius, n, eps, out.as_deref()),
        Command::Curve { rmin, rmax, steps, out } => cmd_curve(rmin, rmax, steps, out.as_deref()),
        Command::Construct { radius, n, lambda_fraction, seed, samples, out } => {
            cmd_construct(radius, n, lambda_fraction, seed, samples, &out)
        }
        Command::ColorSphere { radius, n, seed, rotations, lambda_fraction, delta, samples, out } => {
            let config = SphereConfig {
                lambda_fraction,
                delta,
                rotations,
                max_rotations: rotations.max(1 << 14),
                transfer_samples: samples,
                density_samples: samples,
                seed,
                ..SphereConfig::default()
            };
            cmd_color_sphere(n, radius, &config, samples, &out)
        }
        Command::ColorBall { radius, n, eps, seed, samples, out } => cmd_color_ball(n, radius, eps, seed, samples, &out),
        Command::CoverLab { instance } => cmd_cover_lab(&instance),
        Command::Verify { cover, seed, samples } => cmd_verify(&cover, seed, samples),
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let report = pipeline::run_pipeline(&config)?;
            println!("{}", to_json_string(&report)?.trim_end());
            Ok(match report.first_failure {
                None => Ok(()),
                Some(name) => Err(name),
            })
        }
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_json(path, value)?,
        None => print!("{}", to_json_string(value)?),
    }
    Ok(())
}

#[derive(Serialize)]
struct Branches {
    /// Closed form for large radii, evaluated wherever it is defined (R >= 1).
    large: Option<f64>,
    two_r: f64,
}

#[derive(Serialize)]
struct ParamsOutput {
    #[serde(rename = "R")]
    radius: f64,
    regime: Regime,
    x: f64,
    branches: Branches,
    /// Present within 1e-6 of sqrt(5)/2: whether both branches agree to 1e-8.
    branch_agreement: Option<bool>,
    params: Option<RadiusParams>,
    /// Small-radius parameters at `phi = pi/4 - 1/n` with slack `eps` (default 0.01).
    small: Option<RadiusParams>,
    shell: Option<ShellParams>,
    r_star: Option<f64>,
}

fn cmd_params(radius: f64, n: usize, eps: Option<f64>, out: Option<&Path>) -> Result<Outcome> {
    if n < 2 {
        bail!("n must be at least 2, got {n}");
    }
    let x = x_of_r(radius)?;
    let large = x_large_branch(radius).ok();
    let near = (radius - SQRT5_HALF).abs() <= 1e-6;
    let (regime, params, small) = if radius > SQRT5_HALF {
        (Regime::LargeR, Some(RadiusParams::large(radius)?), None)
    } else {
        let phi = std::f64::consts::FRAC_PI_4 - 1.0 / n as f64;
        (Regime::SmallR, None, Some(small_r_params(radius, phi, eps.unwrap_or(0.01))?))
    };
    let (shell, r_star) = match eps {
        Some(e) if radius >= 0.5 => (Some(shell_functions(radius, e)?), Some(r_star(e)?)),
        _ => (None, None),
    };
    let output = ParamsOutput {
        radius,
        regime,
        x,
        branches: Branches { large, two_r: 2.0 * radius },
        branch_agreement: large.filter(|_| near).map(|l| (l - 2.0 * radius).abs() <= 1e-8),
        params,
        small,
        shell,
        r_star,
    };
    emit(&output, out)?;
    Ok(Ok(()))
}

fn cmd_curve(rmin: f64, rmax: f64, steps: usize, out: Option<&Path>) -> Result<Outcome> {
    if !(rmin > 0.5 && rmin < rmax && rmax.is_finite()) {
        bail!("need 1/2 < rmin < rmax, got rmin = {rmin}, rmax = {rmax}");
    }
    if steps < 2 {
        bail!("steps must be at least 2");
    }
    let mut csv = String::from("R,x,two_R,three\n");
    for k in 0..steps {
        let r = rmin + (rmax - rmin) * k as f64 / (steps - 1) as f64;
        csv.push_str(&format!("{r:.16e},{:.16e},{:.16e},3\n", x_of_r(r)?, 2.0 * r));
    }
    match out {
        Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(Ok(()))
}

#[derive(Serialize)]
struct ConstructReport {
    params: RadiusParams,
    lambda: f64,
    packing_size: usize,
    packing_saturation: chroma::forbidden::SaturationReport,
    min_separation: f64,
    forbidden: chroma::forbidden::ForbiddenCertificate,
    clearance: chroma::forbidden::ClearanceReport,
    density: chroma::forbidden::DensityEstimate,
    analytic_density_bound: f64,
    density_ok: bool,
}

fn cmd_construct(radius: f64, n: usize, fraction: f64, seed: u64, samples: usize, out: &Path) -> Result<Outcome> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        bail!("lambda fraction must lie in (0, 1], got {fraction}");
    }
    let spec = chroma::sphere::SphereSpec::new(n, radius)?;
    let params = RadiusParams::large(radius)?;
    let lambda = fraction * params.lambda0;
    let packing = CapPacking::build(&spec, params.phi, &PackingConfig::default(), seed)?;
    let fs = ForbiddenSet::new(packing, lambda)?;
    let forbidden = match certify_forbidden(&fs, 1.0, samples, seed) {
        Ok(c) => c,
        Err(e @ chroma::ChromaError::InvalidParameter(_)) => {
            eprintln!("{e}");
            return Ok(Err("forbidden".into()));
        }
        Err(e) => return Err(e.into()),
    };
    let clearance = check_clearance(&fs, (samples / 10).max(1000), seed);
    let density = mc_density(&fs, samples, seed);
    let bound = analytic_density_bound(params.phi, lambda, n)?;
    let report = ConstructReport {
        params,
        lambda,
        packing_size: fs.packing.len(),
        packing_saturation: fs.packing.saturation,
        min_separation: fs.packing.min_separation(),
        forbidden,
        clearance,
        density,
        analytic_density_bound: bound,
        density_ok: density.estimate >= bound - 3.0 * density.std_error,
    };
    write_json(&out.join("packing.json"), &fs.packing.to_file())?;
    write_json(&out.join("forbidden.json"), &fs.to_file())?;
    write_json(&out.join("report.json"), &report)?;
    Ok(if !report.forbidden.passed {
        Err("forbidden".into())
    } else if !report.clearance.passed {
        Err("clearance".into())
    } else if !report.density_ok {
        Err("density".into())
    } else {
        Ok(())
    })
}

#[derive(Serialize)]
struct SphereRunReport {
    sphere: chroma::covering::SphereReport,
    unit_pairs: chroma::covering::UnitPairReport,
}

fn cmd_color_sphere(n: usize, radius: f64, config: &SphereConfig, samples: usize, out: &Path) -> Result<Outcome> {
    let spec = chroma::sphere::SphereSpec::new(n, radius)?;
    let colored = color_sphere(&spec, config)?;
    let unit_pairs = certify_unit_pairs(&colored.coloring, samples, config.seed)?;
    write_json(&out.join("cover.json"), &colored.file)?;
    let report = SphereRunReport { sphere: colored.report, unit_pairs };
    write_json(&out.join("report.json"), &report)?;
    let transfer_ok = report.sphere.cover.as_ref().is_none_or(|c| c.result.violations == 0);
    Ok(if !transfer_ok {
        Err("transfer".into())
    } else if !report.unit_pairs.passed {
        Err("unit_pairs".into())
    } else {
        Ok(())
    })
}

#[derive(Serialize)]
struct BallRunReport {
    shells: usize,
    total_colors: usize,
    shell_colors_sum: usize,
    certificate: chroma::ball::BallCertificate,
}

fn cmd_color_ball(n: usize, radius: f64, eps: f64, seed: u64, samples: usize, out: &Path) -> Result<Outcome> {
    let config = BallConfig { eps, seed, ..BallConfig::default() };
    let bc = color_ball(n, radius, &config)?;
    let certificate = certify_ball(&bc, samples, seed);
    pipeline::write_ball_artifacts(out, &bc)?;
    let report = BallRunReport {
        shells: bc.plan.shell_count(),
        total_colors: bc.total_colors(),
        shell_colors_sum: bc.shells.iter().map(SphereColoring::color_count).sum(),
        certificate,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(if certificate.passed { Ok(()) } else { Err("ball".into()) })
}

#[derive(Serialize)]
struct CoverLabReport {
    vertices: usize,
    edges: usize,
    max_edge: usize,
    greedy: Vec<usize>,
    greedy_size: usize,
    fractional: f64,
    weights: Vec<f64>,
    /// Exact covering number, computed when there are at most 30 edges.
    exact: Option<usize>,
    /// `(1 + ln max|E|) * tau*`
    greedy_bound: f64,
    within_bound: bool,
}

fn cmd_cover_lab(path: &Path) -> Result<Outcome> {
    let raw: Hypergraph = read_json(path)?;
    let h = Hypergraph::new(raw.vertices, raw.edges)?;
    let greedy = h.greedy_cover()?;
    let lp = fractional_cover_exact(&h)?;
    let exact = if h.edges.len() <= 30 { Some(h.exact_cover_number()?) } else { None };
    let greedy_bound = (1.0 + (h.max_edge() as f64).ln()) * lp.value;
    let within_bound = greedy.len() as f64 <= greedy_bound + 1e-9;
    let report = CoverLabReport {
        vertices: h.vertices,
        edges: h.edges.len(),
        max_edge: h.max_edge(),
        greedy_size: greedy.len(),
        greedy,
        fractional: lp.value,
        weights: lp.weights,
        exact,
        greedy_bound,
        within_bound,
    };
    emit(&report, None)?;
    Ok(if within_bound { Ok(()) } else { Err("greedy_bound".into()) })
}

#[derive(Serialize)]
struct VerifyReport {
    colors: usize,
    transfer: Option<CoverResult>,
    unit_pairs: chroma::covering::UnitPairReport,
}

fn cmd_verify(path: &Path, seed: u64, samples: usize) -> Result<Outcome> {
    let file: CoverFile = read_json(path)?;
    let coloring = file.into_coloring()?;
    let transfer = match &coloring {
        SphereColoring::Pieces { fs, rotations } => {
            let claimed = CoverResult {
                chosen: (0..rotations.len()).collect(),
                cover_size: rotations.len(),
                verified_net: !rotations.is_empty(),
                verified_sphere_samples: 0,
                violations: 0,
            };
            Some(transfer_cover(&claimed, fs, rotations, samples, seed)?)
        }
        SphereColoring::Cells { .. } => None,
    };
    let unit_pairs = certify_unit_pairs(&coloring, samples, seed)?;
    let report = VerifyReport { colors: coloring.color_count(), transfer: transfer.clone(), unit_pairs };
    emit(&report, None)?;
    Ok(if transfer.is_some_and(|t| t.violations > 0) {
        Err("transfer".into())
    } else if !unit_pairs.passed {
        Err("unit_pairs".into())
    } else {
        Ok(())
    })
}
