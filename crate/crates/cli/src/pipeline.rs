use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;

use chroma::ball::{certify_ball, color_ball, BallCertificate, BallConfig};
use chroma::covering::{
    certify_unit_pairs, color_sphere, color_sphere_with, default_delta, haar_check, Construction, HaarReport,
    SphereConfig, SphereReport, UnitPairReport,
};
use chroma::forbidden::{
    analytic_density_bound, certify_forbidden, check_clearance, mc_density, CapPacking, ClearanceReport,
    DensityEstimate, ForbiddenCertificate, ForbiddenSet, PackingConfig,
};
use chroma::io::write_json;
use chroma::params::{x_of_r, RadiusParams, SQRT5_HALF};
use chroma::rng::derive_seed;
use chroma::sphere::{random_point, SphereSpec};
use chroma::ChromaError;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Serialize)]
pub struct DensityCheck {
    pub estimate: DensityEstimate,
    pub analytic_bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Stage<T> {
    Done(T),
    Refused { error: String },
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Certificates {
    pub forbidden: Option<Stage<ForbiddenCertificate>>,
    pub clearance: Option<ClearanceReport>,
    pub density: Option<DensityCheck>,
    pub haar: Option<HaarReport>,
    pub cover: Option<SphereReport>,
    pub unit_pairs: Option<UnitPairReport>,
    pub ball: Option<BallCertificate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub x: f64,
    pub params: Option<RadiusParams>,
    pub lambda: Option<f64>,
    pub bound_pre: Option<f64>,
    pub sphere_colors: Option<usize>,
    pub ball_colors: Option<usize>,
    pub certificates: Certificates,
    pub passed: bool,
    pub first_failure: Option<String>,
    /// Seconds per stage; the only field that differs between identical runs.
    pub timings: BTreeMap<String, f64>,
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn run<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.insert(name.to_string(), start.elapsed().as_secs_f64());
        out
    }
}

/// Packing and net settings shared by all pipeline stages.
pub fn sphere_config(config: &ExperimentConfig) -> SphereConfig {
    SphereConfig {
        lambda_fraction: config.lambda_fraction.min(1.0),
        rotations: config.rotations,
        max_rotations: config.rotations.max(1 << 14),
        transfer_samples: config.samples,
        density_samples: config.samples,
        seed: config.seed,
        ..SphereConfig::default()
    }
}

/// Runs every stage in order, stopping at the first failed certificate.
/// Artifacts are written only after the configuration validates.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let out = config.out_dir.as_path();
    let spec = SphereSpec::new(config.n, config.radius)?;
    let mut timer = Timer(BTreeMap::new());
    let mut report = RunReport {
        config: config.clone(),
        x: x_of_r(config.radius)?,
        params: None,
        lambda: None,
        bound_pre: None,
        sphere_colors: None,
        ball_colors: None,
        certificates: Certificates::default(),
        passed: false,
        first_failure: None,
        timings: BTreeMap::new(),
    };
    let finish = |mut report: RunReport, timer: Timer, failure: Option<&str>| -> Result<RunReport> {
        report.passed = failure.is_none();
        report.first_failure = failure.map(str::to_string);
        report.timings = timer.0;
        write_json(&out.join("report.json"), &report)?;
        Ok(report)
    };
    let sphere = sphere_config(config);

    if config.radius > SQRT5_HALF {
        let params = RadiusParams::large(config.radius)?;
        let lambda = config.lambda_fraction * params.lambda0;
        report.params = Some(params);
        report.lambda = Some(lambda);
        let delta = default_delta(config.n)?;
        report.bound_pre = chroma::covering::bound_pre(params.phi, lambda, config.n, delta).ok();

        let fs = timer.run("construct", || -> Result<ForbiddenSet> {
            let packing = CapPacking::build(&spec, params.phi, &PackingConfig::default(), config.seed)?;
            let fs = ForbiddenSet::new(packing, lambda)?;
            write_json(&out.join("packing.json"), &fs.packing.to_file())?;
            write_json(&out.join("forbidden.json"), &fs.to_file())?;
            Ok(fs)
        })?;

        let cert = timer.run("forbidden", || certify_forbidden(&fs, 1.0, config.samples, config.seed));
        match cert {
            Ok(c) => {
                let passed = c.passed;
                report.certificates.forbidden = Some(Stage::Done(c));
                if !passed {
                    return finish(report, timer, Some("forbidden"));
                }
            }
            Err(e @ ChromaError::InvalidParameter(_)) => {
                report.certificates.forbidden = Some(Stage::Refused { error: e.to_string() });
                return finish(report, timer, Some("forbidden"));
            }
            Err(e) => return Err(e.into()),
        }

        let clearance = timer.run("clearance", || {
            check_clearance(&fs, (config.samples / 10).max(1000), config.seed)
        });
        let passed = clearance.passed;
        report.certificates.clearance = Some(clearance);
        if !passed {
            return finish(report, timer, Some("clearance"));
        }

        let inner = fs.with_lambda((1.0 - delta) * lambda)?;
        let density = timer.run("density", || -> Result<DensityCheck> {
            let estimate = mc_density(&inner, config.samples, config.seed);
            let analytic_bound = analytic_density_bound(params.phi, inner.lambda, config.n)?;
            let passed = estimate.estimate >= analytic_bound - 3.0 * estimate.std_error;
            Ok(DensityCheck { estimate, analytic_bound, passed })
        })?;
        let passed = density.passed;
        report.certificates.density = Some(density);
        if !passed {
            return finish(report, timer, Some("density"));
        }

        let haar = timer.run("haar", || {
            let w = random_point(&spec, derive_seed(config.seed, 2));
            haar_check(&inner, &w, config.samples, config.seed)
        });
        let passed = haar.passed;
        report.certificates.haar = Some(haar);
        if !passed {
            return finish(report, timer, Some("haar"));
        }
    }

    let colored = timer.run("cover", || match (report.params, report.lambda) {
        (Some(p), Some(lambda)) => color_sphere_with(&spec, Construction::Pieces { phi: p.phi, lambda }, &sphere),
        _ => color_sphere(&spec, &sphere),
    })?;
    write_json(&out.join("cover.json"), &colored.file)?;
    report.sphere_colors = Some(colored.report.colors);
    let cover_ok = colored.report.cover.as_ref().is_none_or(|c| c.result.violations == 0 && c.edge_bound_holds);
    report.certificates.cover = Some(colored.report.clone());
    if !cover_ok {
        return finish(report, timer, Some("cover"));
    }

    let pairs = timer.run("unit_pairs", || certify_unit_pairs(&colored.coloring, config.samples, config.seed))?;
    let passed = pairs.passed;
    report.certificates.unit_pairs = Some(pairs);
    if !passed {
        return finish(report, timer, Some("unit_pairs"));
    }

    if config.ball {
        let ball_config = BallConfig { eps: config.eps, seed: config.seed, ..BallConfig::default() };
        let bc = timer.run("ball", || color_ball(config.n, config.radius, &ball_config))?;
        write_ball_artifacts(out, &bc)?;
        report.ball_colors = Some(bc.total_colors());
        let cert = timer.run("ball_certificate", || certify_ball(&bc, config.samples, config.seed));
        let passed = cert.passed;
        report.certificates.ball = Some(cert);
        if !passed {
            return finish(report, timer, Some("ball"));
        }
    }
    finish(report, timer, None)
}

#[derive(Serialize)]
struct PlanFile<'a> {
    n: usize,
    #[serde(rename = "R")]
    radius: f64,
    eps: f64,
    r_star: Option<f64>,
    radii: &'a [f64],
    delta: Vec<f64>,
    mode: Vec<&'static str>,
    colors: Vec<usize>,
    inner_radius: f64,
}

pub fn write_ball_artifacts(out: &Path, bc: &chroma::ball::BallColoring) -> Result<()> {
    let plan = &bc.plan;
    let file = PlanFile {
        n: plan.n,
        radius: plan.radius,
        eps: plan.eps,
        r_star: plan.shells.first().map(|s| s.r_star),
        radii: &plan.radii,
        delta: plan.shells.iter().map(|s| s.delta_r).collect(),
        mode: plan
            .shells
            .iter()
            .map(|s| match s.mode {
                chroma::params::ShellMode::Pieces => "pieces",
                chroma::params::ShellMode::Cells { .. } => "cells",
            })
            .collect(),
        colors: bc.shells.iter().map(|s| s.color_count()).collect(),
        inner_radius: plan.inner_radius,
    };
    write_json(&out.join("plan.json"), &file)?;
    for (j, f) in bc.shell_files.iter().enumerate() {
        write_json(&out.join("shells").join(format!("{j:05}")).join("cover.json"), f)?;
    }
    Ok(())
}
