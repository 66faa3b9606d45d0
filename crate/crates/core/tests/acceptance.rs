//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run alone with `cargo test -p chroma-core --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use chroma::ball::{certify_ball, color_ball, BallConfig};
use chroma::covering::{
    bound_pre_base, certify_unit_pairs, color_sphere, default_delta, fractional_cover_exact, haar_check, Hypergraph,
    SphereConfig,
};
use chroma::forbidden::{
    analytic_density_bound, certify_forbidden, check_clearance, mc_density, CapPacking, ForbiddenSet,
    PackingConfig,
};
use chroma::io::to_json_bytes;
use chroma::params::{
    lambda0, solve_phi, verify_system, x_large_branch, x_of_r, RadiusParams, SQRT5_HALF,
};
use chroma::rng::{stream, tag};
use chroma::sphere::{cap_measure, random_point, SphereSpec};
use chroma::ChromaError;

const SEED: u64 = 20_240_601;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    if took > budget {
        o.passed = false;
        o.detail.push_str(&format!("; over budget {budget:?}"));
    }
    (o, took)
}

fn c1_parameters() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut notes = Vec::new();
    for r in [0.75, 1.0, SQRT5_HALF + 1e-9, 1.2, 1.5, 2.0, 5.0, 100.0] {
        if r > SQRT5_HALF {
            let p = RadiusParams::large(r).expect("large regime");
            let res = verify_system(&p).max();
            worst = worst.max(res);
            ok &= res < 1e-10;
        } else {
            // No solution with phi < pi/4 exists here; the base is 2R.
            let refused = matches!(solve_phi(r), Err(ChromaError::Regime { .. }));
            ok &= refused && x_of_r(r).unwrap() == 2.0 * r;
            notes.push(format!("R={r}: regime refused={refused}, x=2R"));
        }
    }
    let jump = (x_large_branch(SQRT5_HALF).unwrap() - 2.0 * SQRT5_HALF).abs();
    let at = (x_of_r(SQRT5_HALF).unwrap() - 5f64.sqrt()).abs();
    ok &= jump < 1e-10 && at < 1e-10;
    let mut grid_ok = true;
    for k in 1..1000 {
        let r = SQRT5_HALF + (1.5 - SQRT5_HALF) * k as f64 / 1000.0;
        let x = x_of_r(r).unwrap();
        grid_ok &= x < 2.0 * r && x < 3.0;
    }
    for k in 0..=1000 {
        let r = SQRT5_HALF * (1e6 / SQRT5_HALF).powf(k as f64 / 1000.0) + 1e-12;
        grid_ok &= x_of_r(r).unwrap() < 3.0;
    }
    ok &= grid_ok;
    outcome(
        ok,
        format!(
            "max residual {worst:.2e} (<1e-10); branch gap {jump:.2e}, |x(sqrt5/2)-sqrt5| {at:.2e} (<1e-10); x<2R, x<3 grid {grid_ok}; {}",
            notes.join(", ")
        ),
    )
}

fn c2_cap_measure() -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    for n in 2..=10usize {
        for k in 1..=20 {
            let phi = 0.05 * k as f64;
            let theta = cap_measure(n, phi).unwrap();
            let lower = phi.sin().powi(n as i32) / (2.0 * std::f64::consts::PI * (n as f64 + 1.0)).sqrt();
            checked += 1;
            violations += (theta <= lower) as usize;
            for t in [1.1, 1.5, 2.0, 3.0] {
                if t * phi < std::f64::consts::FRAC_PI_2 {
                    checked += 1;
                    violations += (cap_measure(n, t * phi).unwrap() >= t.powi(n as i32) * theta) as usize;
                }
            }
        }
    }
    outcome(violations == 0, format!("{checked} inequalities, {violations} violations"))
}

fn random_hypergraph<R: Rng>(rng: &mut R) -> Hypergraph {
    let k = rng.random_range(1..=12);
    let m = rng.random_range(1..=30);
    let density = rng.random_range(0.1..0.6);
    let mut edges: Vec<Vec<usize>> = (0..m).map(|_| (0..k).filter(|_| rng.random_bool(density)).collect()).collect();
    for v in 0..k {
        if !edges.iter().any(|e| e.contains(&v)) {
            let i = rng.random_range(0..m);
            edges[i].push(v);
        }
    }
    Hypergraph::new(k, edges).unwrap()
}

fn c3_greedy_ratio() -> Outcome {
    let mut rng = stream(SEED, tag::HYPERGRAPH, 0);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = random_hypergraph(&mut rng);
        let greedy = h.greedy_cover().unwrap().len() as f64;
        let tau_star = fractional_cover_exact(&h).unwrap().value;
        let tau = h.exact_cover_number().unwrap() as f64;
        let bound = (1.0 + (h.max_edge() as f64).ln()) * tau_star;
        worst = worst.max(greedy / bound);
        if greedy > bound + 1e-9 || tau_star > tau + 1e-9 || tau > greedy {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("100 instances, {violations} violations, max greedy/bound {worst:.3}"))
}

fn forbidden_set() -> ForbiddenSet {
    let spec = SphereSpec::new(2, 2.0).unwrap();
    let phi = solve_phi(2.0).unwrap();
    let packing = CapPacking::build(&spec, phi, &PackingConfig::default(), SEED).unwrap();
    ForbiddenSet::new(packing, 0.95 * lambda0(2.0).unwrap()).unwrap()
}

fn c4_forbidden() -> Outcome {
    let fs = forbidden_set();
    let cert = certify_forbidden(&fs, 1.0, 1_000_000, SEED).unwrap();
    let clearance = check_clearance(&fs, 10_000, SEED);
    let margins = cert.diameter_bound < 1.0 && 1.0 < cert.separation_bound;
    outcome(
        margins && cert.passed && clearance.passed,
        format!(
            "D={:.6} S={:.6}; {} pairs, {} in [D+1e-9, S-1e-9], max within {:.6}, min cross {:.6}; \
             clearance min {:.6} vs phi-alpha {:.6} over {} points ({} facets)",
            cert.diameter_bound,
            cert.separation_bound,
            cert.pairs,
            cert.violations,
            cert.max_within_piece,
            cert.min_cross_piece,
            clearance.min_clearance,
            clearance.required,
            clearance.samples,
            clearance.active_facets
        ),
    )
}

fn c5_density() -> Outcome {
    let fs = forbidden_set();
    let delta = default_delta(2).unwrap();
    let inner = fs.with_lambda((1.0 - delta) * fs.lambda).unwrap();
    let est = mc_density(&inner, 1_000_000, SEED);
    let bound = analytic_density_bound(inner.phi(), inner.lambda, 2).unwrap();
    let density_ok = est.estimate >= bound - 3.0 * est.std_error;
    let haar = haar_check(&inner, &random_point(inner.spec(), SEED), 100_000, SEED);
    outcome(
        density_ok && haar.passed,
        format!(
            "inner density = {:.5} +- {:.5} >= bound {:.5} - 3 sigma: {density_ok}; haar fraction {:.5} vs {:.5}, z = {:.2} (<=3)",
            est.estimate, est.std_error, bound, haar.fraction, haar.density.estimate, haar.z
        ),
    )
}

fn sphere_config() -> SphereConfig {
    SphereConfig { transfer_samples: 100_000, density_samples: 100_000, seed: SEED, ..SphereConfig::default() }
}

fn c6_sphere() -> (Outcome, Vec<u8>) {
    let spec = SphereSpec::new(2, 2.0).unwrap();
    let out = color_sphere(&spec, &sphere_config()).unwrap();
    let stats = out.report.cover.as_ref().unwrap();
    let pairs = certify_unit_pairs(&out.coloring, 100_000, SEED).unwrap();
    let ok = stats.result.verified_net && stats.result.violations == 0 && pairs.passed;
    let o = outcome(
        ok,
        format!(
            "|W|={} covered by {} of {} rotations; transfer violations {}/{}; unit pairs mono {} uncolored {} of {}; \
             colors {} vs bound_pre {:.1} (ratio {:.3}), 1/rho'' proxy {:.1}",
            stats.net_size,
            stats.result.cover_size,
            stats.rotations_sampled,
            stats.result.violations,
            stats.result.verified_sphere_samples,
            pairs.monochromatic,
            pairs.uncolored,
            pairs.pairs,
            out.report.colors,
            stats.bound_pre,
            out.report.colors as f64 / stats.bound_pre,
            stats.tau_star_proxy.unwrap_or(f64::NAN)
        ),
    );
    (o, to_json_bytes(&out.file).unwrap())
}

fn c7_asymptotic() -> Outcome {
    let phi = solve_phi(2.0).unwrap();
    let lambda = 0.95 * lambda0(2.0).unwrap();
    let bases: Vec<f64> = [10usize, 100, 1000, 10_000]
        .iter()
        .map(|&n| bound_pre_base(phi, lambda, n, default_delta(n).unwrap()).unwrap())
        .collect();
    let decreasing = bases.windows(2).all(|w| w[1] < w[0]);
    let rel = (bases[3] * lambda - 1.0).abs();
    outcome(
        decreasing && rel < 0.05,
        format!(
            "bases {:?} decreasing {decreasing}; 1/lambda = {:.5}, relative gap at n=1e4 {rel:.2e} (<5e-2)",
            bases.iter().map(|b| format!("{b:.5}")).collect::<Vec<_>>(),
            1.0 / lambda
        ),
    )
}

fn c8_ball() -> Outcome {
    let config = BallConfig { eps: 0.01, seed: SEED, ..BallConfig::default() };
    let bc = color_ball(2, 2.0, &config).unwrap();
    let radii = &bc.plan.radii;
    let decreasing = radii.windows(2).all(|w| w[1] < w[0]);
    let ends = *radii.last().unwrap() < 0.5 && radii[..radii.len() - 1].iter().all(|&r| r >= 0.5);
    let sum: usize = bc.shells.iter().map(|s| s.color_count()).sum();
    let additive = bc.total_colors() == sum + 1;
    let cert = certify_ball(&bc, 100_000, SEED);
    outcome(
        decreasing && ends && additive && cert.passed,
        format!(
            "{} shells, radii decreasing {decreasing}, last {:.4} < 1/2; colors {} = {} + 1: {additive}; \
             {} uniform + {} same-shell pairs, mono {} uncolored {}; min delta {:.3e}",
            bc.plan.shell_count(),
            radii.last().unwrap(),
            bc.total_colors(),
            sum,
            cert.uniform_pairs,
            cert.same_shell_pairs,
            cert.monochromatic,
            cert.uncolored,
            cert.min_delta
        ),
    )
}

fn main() -> ExitCode {
    // The libtest harness passes flags such as --quiet; they are ignored here.
    let mut failed = 0;
    let mut report = |id: u32, name: &str, (o, took): (Outcome, Duration)| {
        let mark = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {id} [{mark}] {name} ({:.1}s): {}", took.as_secs_f64(), o.detail);
        failed += (!o.passed) as usize;
    };
    report(1, "parameter exactness", timed(Duration::from_secs(1), c1_parameters));
    report(2, "cap measure inequalities", timed(Duration::from_secs(10), c2_cap_measure));
    report(3, "greedy cover ratio", timed(Duration::from_secs(60), c3_greedy_ratio));
    report(4, "forbidden-set certificate", timed(Duration::from_secs(120), c4_forbidden));
    report(5, "density and Haar average", timed(Duration::from_secs(120), c5_density));
    let mut first_cover = Vec::new();
    report(
        6,
        "sphere coloring n=2 R=2",
        timed(Duration::from_secs(300), || {
            let (o, bytes) = c6_sphere();
            first_cover = bytes;
            o
        }),
    );
    report(7, "asymptotic base of the bound", timed(Duration::from_secs(1), c7_asymptotic));
    report(8, "ball coloring n=2 R=2 eps=0.01", timed(Duration::from_secs(600), c8_ball));
    report(
        9,
        "determinism of cover.json",
        timed(Duration::from_secs(300), || {
            let (_, again) = c6_sphere();
            let same = again == first_cover && !again.is_empty();
            outcome(same, format!("{} bytes, identical {same}", again.len()))
        }),
    );
    if failed == 0 {
        println!("acceptance: all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
