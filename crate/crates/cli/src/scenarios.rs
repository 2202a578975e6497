use crate::config::{parse_range, resolved_toml, ExperimentConfig, Reader, Scenario};
use crate::exit::{CliError, ErrorKind};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use toml::Value;
use torus_galerkin::bifurcation::{self, BranchConfig};
use torus_galerkin::center_manifold::{self as cm, Block, InvarianceConfig, ManifoldProblem, QuadratureConfig, SplitPolicy};
use torus_galerkin::elliptic_solver::{self, SolveConfig};
use torus_galerkin::linear_ops::{self, EllipticOperatorSpec, EvolutionOperatorSpec};
use torus_galerkin::par::Execution;
use torus_galerkin::spectral_space::{self, random_field, SpectralField};
use torus_galerkin::stats::loglog_slope;
use torus_galerkin::{Error, ScalarFunctionSpec, SpaceParams};

/// What a run produced: the summary text and the files written.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutcome {
    pub summary: String,
    pub files: Vec<String>,
}

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:e}")
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")
}

/// Append rows to a CSV, writing the header only into an empty file.
pub fn append_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(header)?;
    } else {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
        let first = rd.records().next().transpose()?.unwrap_or_default();
        if first.iter().ne(header.iter().copied()) {
            return Err(CliError::validation(format!("{} already holds a different report", path.display())));
        }
    }
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn write_summary(cfg: &ExperimentConfig, resolved: &BTreeMap<String, Value>, results: &str, out: &mut RunOutcome) -> Result<(), CliError> {
    let mut text = String::new();
    let _ = writeln!(text, "# {} summary", cfg.scenario);
    let _ = writeln!(text, "# resolved configuration");
    text.push_str(&resolved_toml(cfg, resolved));
    let _ = writeln!(text, "\n# results");
    text.push_str(results);
    let name = format!("{}_summary.txt", cfg.scenario);
    fs::write(cfg.path(&name), &text).map_err(|e| CliError::io(format!("{name}: {e}")))?;
    out.files.push(name);
    out.summary = text;
    Ok(())
}

fn check_dim(r: &mut Reader, dim: Option<usize>, nu: &[f64]) {
    if let Some(d) = dim {
        if d != nu.len() {
            r.invalid(format!("dim = {d} but nu has {} entries", nu.len()));
        }
    }
    if nu.iter().any(|&x| !(x > 0.0)) {
        r.invalid("nu entries must be positive");
    }
}

fn parse_f(r: &mut Reader, src: &str) -> Option<ScalarFunctionSpec> {
    if src.is_empty() {
        return None;
    }
    match ScalarFunctionSpec::parse(src) {
        Ok(f) => Some(f),
        Err(e) => {
            r.invalid(format!("f: {e}"));
            None
        }
    }
}

fn space(r: &mut Reader, rho: f64, rr: f64) -> SpaceParams {
    SpaceParams::new(rho, rr).unwrap_or_else(|e| {
        r.invalid(e.to_string());
        SpaceParams { rho: 0.0, r: 0.0 }
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(format!("{}: {e}", cfg.out_dir.display())))?;
    let start = std::time::Instant::now();
    let out = match cfg.scenario {
        Scenario::Solve | Scenario::Evolution => solve(cfg),
        Scenario::Scan => scan(cfg),
        Scenario::Bifurcate => bifurcate(cfg),
        Scenario::CenterManifold => center_manifold(cfg),
        Scenario::MeasureSweep => measure_sweep(cfg),
    };
    // wall-clock data stays out of the reports
    let status = match &out {
        Ok(_) => "ok".to_string(),
        Err(e) => format!("exit {}", e.code()),
    };
    if let Ok(mut log) = OpenOptions::new().create(true).append(true).open(cfg.path("run.log")) {
        let _ = writeln!(log, "{} seed={} {status} elapsed={:.3}s", cfg.scenario, cfg.seed, start.elapsed().as_secs_f64());
    }
    out
}

fn solve(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let evolution_cmd = cfg.scenario == Scenario::Evolution;
    let mut r = Reader::new(&cfg.params);
    let dim = r.opt_usize("dim");
    let nu = r.list("nu");
    let m = r.f64("m");
    let omega = if evolution_cmd { Some(r.list("omega")) } else { r.opt_list("omega") };
    let f_src = r.string("f");
    let eps = r.f64("epsilon");
    let radius = r.f64_or("radius", 0.5);
    let rho = r.f64_or("rho", 0.0);
    let rr = r.f64_or("r", 4.0);
    let cutoff = r.usize_or("cutoff", 32);
    let freq_cutoff = omega.as_ref().map(|_| r.usize_or("freq_cutoff", 8));
    let tol = r.f64_or("tol", 1e-12);
    let max_iter = r.usize_or("max_iter", 200);
    let starts = if omega.is_none() { r.usize_or("starts", 0) } else { 0 };
    let default_name = if omega.is_some() { "evolution" } else { "solve" };
    let out_field = r.string_or("out", &format!("{default_name}_solution.txt"));
    let report = r.string_or("report", &format!("{default_name}.csv"));
    check_dim(&mut r, dim, &nu);
    let f = parse_f(&mut r, &f_src);
    let sp = space(&mut r, rho, rr);
    if omega.as_ref().is_some_and(|o| o.is_empty()) {
        r.invalid("omega must have at least one entry");
    }
    let resolved = r.finish()?;
    let f = f.expect("validated");

    let mut scfg = SolveConfig::new(eps, radius, sp);
    scfg.tol = tol;
    scfg.max_iter = max_iter;
    scfg.seed = cfg.seed;
    let (res, spread) = match &omega {
        Some(om) => {
            let spec = EvolutionOperatorSpec::new(om.clone(), nu.clone(), m);
            (elliptic_solver::solve_evolution(&spec, &f, &scfg, freq_cutoff.unwrap(), cutoff)?, f64::NAN)
        }
        None => {
            let spec = EllipticOperatorSpec::new(nu.clone(), m);
            let res = elliptic_solver::solve_elliptic(&spec, &f, &scfg, cutoff)?;
            let mut spread: f64 = 0.0;
            for i in 0..starts {
                let u0 = elliptic_solver::random_start(&res.solution, radius, sp, cfg.seed.wrapping_add(1 + i as u64));
                let other = elliptic_solver::solve_elliptic_from(&spec, &f, &scfg, u0)?;
                spread = spread.max(other.solution.max_abs_diff(&res.solution)?);
            }
            (res, if starts > 0 { spread } else { f64::NAN })
        }
    };

    let mut out = RunOutcome::default();
    let mut w = create(&cfg.path(&out_field))?;
    spectral_space::write_field(&mut w, &res.solution, sp)?;
    w.flush()?;
    out.files.push(out_field);

    let header = [
        "dim", "nu", "m", "omega", "f", "epsilon", "radius", "rho", "r", "cutoff", "seed", "iterations", "residual",
        "contraction", "epsilon_star", "outside_certified", "starts", "start_spread",
    ];
    let row = vec![
        nu.len().to_string(),
        join(&nu),
        num(m),
        omega.as_deref().map(join).unwrap_or_default(),
        f_src.clone(),
        num(eps),
        num(radius),
        num(rho),
        num(rr),
        cutoff.to_string(),
        cfg.seed.to_string(),
        res.iterations.to_string(),
        num(res.residual),
        num(res.contraction_estimate),
        num(res.epsilon_star),
        res.outside_certified_regime.to_string(),
        starts.to_string(),
        num(spread),
    ];
    append_csv(&cfg.path(&report), &header, &[row])?;
    out.files.push(report);

    let mut s = String::new();
    let _ = writeln!(s, "iterations = {}", res.iterations);
    let _ = writeln!(s, "residual = {}", num(res.residual));
    let _ = writeln!(s, "contraction = {}", num(res.contraction_estimate));
    let _ = writeln!(s, "epsilon_star = {}", num(res.epsilon_star));
    let _ = writeln!(
        s,
        "certificate = {}",
        if res.outside_certified_regime { "none: epsilon exceeds epsilon_star, convergence observed only" } else { "epsilon <= epsilon_star" }
    );
    if starts > 0 {
        let _ = writeln!(s, "random_starts = {starts}");
        let _ = writeln!(s, "start_spread = {}", num(spread));
    }
    write_summary(cfg, &resolved, &s, &mut out)?;
    Ok(out)
}

fn scan(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let mut r = Reader::new(&cfg.params);
    let dim = r.opt_usize("dim");
    let nu = r.list("nu");
    let m = r.f64("m");
    let omega = r.opt_list("omega");
    let delta = r.f64_or("delta", 0.0);
    let kmax = r.usize_or("kmax", 64);
    let lmax = omega.as_ref().map(|_| r.usize_or("lmax", 8));
    let report = r.string_or("report", "scan_report.txt");
    check_dim(&mut r, dim, &nu);
    if !(delta >= 0.0) {
        r.invalid("delta must be non-negative");
    }
    let resolved = r.finish()?;
    let rep = match omega {
        Some(om) => linear_ops::evolution_resonance_scan(&EvolutionOperatorSpec::new(om, nu, m), delta, lmax.unwrap(), kmax),
        None => linear_ops::resonance_scan(&EllipticOperatorSpec::new(nu, m), delta, kmax),
    };
    let text = rep.to_kv();
    let mut out = RunOutcome::default();
    fs::write(cfg.path(&report), &text)?;
    out.files.push(report);
    write_summary(cfg, &resolved, &text, &mut out)?;
    Ok(out)
}

fn measure_sweep(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let mut r = Reader::new(&cfg.params);
    let dim = r.usize("dim");
    let m = r.f64("m");
    let deltas = r.list("deltas");
    let kmax = r.usize_or("kmax", 64);
    let samples = r.usize_or("samples", 100_000);
    let out_csv = r.string_or("out_csv", "measure.csv");
    if !(1..=3).contains(&dim) {
        r.invalid(format!("dim must be 1, 2 or 3, got {dim}"));
    }
    if deltas.iter().any(|&d| !(d > 0.0)) {
        r.invalid("deltas must be positive");
    }
    if samples == 0 {
        r.invalid("samples must be positive");
    }
    let resolved = r.finish()?;
    let est: Vec<_> = deltas
        .iter()
        .map(|&d| linear_ops::excluded_measure_estimate_with(dim, m, d, kmax, samples, cfg.seed, Execution::Auto))
        .collect();
    let rows: Vec<Vec<String>> = est
        .iter()
        .map(|e| vec![num(e.delta), num(e.analytic_bound), num(e.monte_carlo), num(e.stderr), e.seed.to_string()])
        .collect();
    let mut out = RunOutcome::default();
    append_csv(&cfg.path(&out_csv), &["delta", "analytic_bound", "mc_estimate", "mc_stderr", "seed"], &rows)?;
    out.files.push(out_csv);
    let mut s = String::new();
    let positive = est.iter().all(|e| e.monte_carlo > 0.0);
    if deltas.len() >= 2 && positive {
        let slope = loglog_slope(&deltas, &est.iter().map(|e| e.monte_carlo).collect::<Vec<_>>());
        let _ = writeln!(s, "loglog_slope = {}", num(slope));
    } else {
        let _ = writeln!(s, "loglog_slope = nan");
    }
    let within = est.iter().all(|e| e.monte_carlo <= e.analytic_bound + 3.0 * e.stderr);
    let _ = writeln!(s, "mc_within_bound_3sigma = {within}");
    write_summary(cfg, &resolved, &s, &mut out)?;
    Ok(out)
}

fn bifurcate(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let mut r = Reader::new(&cfg.params);
    let dim = r.opt_usize("dim");
    let nu = r.list("nu");
    let m0 = r.f64("m0");
    let range_src = r.string("eps_range");
    let phase = r.opt_list("phase");
    let cutoff = r.usize_or("cutoff", 32);
    let tol = r.f64_or("tol", 1e-12);
    let verify = r.bool_or("verify", false);
    let degree = r.usize_or("degree", 4);
    let out_csv = r.string_or("out_csv", "bifurcate.csv");
    check_dim(&mut r, dim, &nu);
    let eps_list = if range_src.is_empty() {
        vec![]
    } else {
        parse_range(&range_src).unwrap_or_else(|| {
            r.invalid("eps_range must be `lo:hi:n` or a comma list");
            vec![]
        })
    };
    let phase = phase.unwrap_or_else(|| vec![0.0; nu.len()]);
    if phase.len() != nu.len() {
        r.invalid(format!("phase has {} entries, need {}", phase.len(), nu.len()));
    }
    let resolved = r.finish()?;

    let basis = bifurcation::kernel_basis(&nu, m0, cutoff)?;
    let data = bifurcation::bifurcation_coefficients(&basis)?;
    let bcfg = BranchConfig { cutoff, tol, ..Default::default() };
    let d1 = basis.dim() == 1;
    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for &eps_m in &eps_list {
        if eps_m == 0.0 || eps_m * data.sigma < 0.0 {
            omitted.push(format!("{}: no branch on this side", num(eps_m)));
            continue;
        }
        match bifurcation::branch_solve(&basis, eps_m, &phase, &bcfg) {
            Ok(b) => rows.push(vec![
                num(eps_m),
                num(b.z[0]),
                if d1 { "nan".into() } else { num(b.z[1]) },
                num(b.norm),
                num(b.residual),
                num(data.sigma),
                num(data.a),
                if d1 { "nan".into() } else { num(data.b) },
            ]),
            Err(Error::Collapse(n)) => omitted.push(format!("{}: Newton collapsed (norm {})", num(eps_m), num(n))),
            Err(e) => return Err(e.into()),
        }
    }
    let mut out = RunOutcome::default();
    append_csv(&cfg.path(&out_csv), &["eps_m", "z1", "z2", "branch_norm", "residual", "sigma", "A", "B"], &rows)?;
    out.files.push(out_csv);

    let mut s = String::new();
    let modes: Vec<String> = basis.modes.iter().map(|k| format!("({})", k.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","))).collect();
    let _ = writeln!(s, "kernel_modes = {}", modes.join(" "));
    if d1 {
        let _ = writeln!(s, "M = {}", num(data.a));
    } else {
        let _ = writeln!(s, "A = {}", num(data.a));
        let _ = writeln!(s, "B = {}", num(data.b));
    }
    let _ = writeln!(s, "sigma = {}", num(data.sigma));
    let _ = writeln!(s, "branches = {}", rows.len());
    for o in &omitted {
        let _ = writeln!(s, "omitted = {o}");
    }
    if verify {
        let rep = bifurcation::branch_verify(&basis, degree)?;
        fs::write(cfg.path("verify.txt"), &rep.text)?;
        out.files.push("verify.txt".into());
        let _ = writeln!(s, "\n# expansion check");
        s.push_str(&rep.text);
    }
    write_summary(cfg, &resolved, &s, &mut out)?;
    Ok(out)
}

fn center_manifold(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let mut r = Reader::new(&cfg.params);
    let dim = r.opt_usize("dim");
    let nu = r.list("nu");
    let m = r.f64("m");
    let omega = r.list("omega");
    let f_src = r.string("f");
    let eps = r.f64("epsilon");
    let rho = r.f64_or("rho", 0.0);
    let rr = r.f64_or("r", 3.0);
    let cutoff = r.usize_or("cutoff", 4);
    let theta_modes = r.usize_or("theta_modes", 8);
    let phi_radius = r.f64_or("cutoff_radius", 4.0);
    let phi_order = r.usize_or("cutoff_order", 3);
    let tol = r.f64_or("tol", 1e-13);
    let max_iter = r.usize_or("max_iter", 20);
    let jet_out = r.string_or("jet_out", "jet.txt");
    let ode_out = r.string_or("ode_out", "reduced_ode.csv");
    let residual_report = r.string_or("residual_report", "invariance.csv");
    let z0 = r.opt_list("z0");
    let ode_radius = r.f64_or("ode_radius", 0.2);
    let ode_dt = r.f64_or("ode_dt", 0.05);
    let ode_steps = r.usize_or("ode_steps", 200);
    let radii = r.list_or("radii", &[0.2, 0.4, 0.8]);
    let samples = r.usize_or("samples", 8);
    check_dim(&mut r, dim, &nu);
    let f = parse_f(&mut r, &f_src);
    let sp = space(&mut r, rho, rr);
    if omega.is_empty() {
        r.invalid("omega must have at least one entry");
    }
    if radii.iter().any(|&x| !(x > 0.0 && x <= 0.5 * phi_radius)) {
        r.invalid(format!("radii must lie in (0, cutoff_radius/2 = {}]", 0.5 * phi_radius));
    }
    if !(ode_dt > 0.0) {
        r.invalid("ode_dt must be positive");
    }
    let resolved = r.finish()?;
    let f = f.expect("validated");

    let spec = EvolutionOperatorSpec::new(omega.clone(), nu.clone(), m);
    let quad = QuadratureConfig { theta_modes, ..Default::default() };
    let phi = cm::prepare_cutoff(phi_order, phi_radius)?;
    let problem = ManifoldProblem::new(&spec, &f, eps, cutoff, SplitPolicy::default(), quad, phi)?;
    let sol = cm::solve_manifold(&problem, tol, max_iter)?;
    if !sol.converged {
        return Err(CliError { kind: ErrorKind::Divergence, message: format!("Duhamel iteration not converged after {max_iter} steps") });
    }
    let nc = problem.center_dim();
    let zc: Vec<C64> = match &z0 {
        Some(v) => {
            if v.len() != 2 * nc {
                return Err(CliError::validation(format!("z0 needs {} numbers (re, im per center coordinate), got {}", 2 * nc, v.len())));
            }
            v.chunks(2).map(|p| C64::new(p[0], p[1])).collect()
        }
        None => problem.random_center_state(&mut ChaCha8Rng::seed_from_u64(cfg.seed), ode_radius),
    };

    let mut out = RunOutcome::default();
    let mut w = create(&cfg.path(&jet_out))?;
    cm::write_jet(&mut w, &problem, &sol.jet)?;
    w.flush()?;
    out.files.push(jet_out);

    let traj = cm::reduced_trajectory(&problem, &sol.jet, &vec![0.0; omega.len()], &zc, ode_dt, ode_steps);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=omega.len()).map(|j| format!("theta{j}")));
    for i in 0..nc {
        header.push(format!("z{i}_re"));
        header.push(format!("z{i}_im"));
    }
    let rows: Vec<Vec<String>> = traj
        .iter()
        .map(|(t, th, z)| {
            let mut row = vec![num(*t)];
            row.extend(th.iter().map(|&x| num(x)));
            for c in z {
                row.push(num(c.re));
                row.push(num(c.im));
            }
            row
        })
        .collect();
    append_csv(&cfg.path(&ode_out), &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    out.files.push(ode_out);

    let zero = cm::ManifoldJet::zeros(&problem);
    let mut res = Vec::new();
    let mut rows = Vec::new();
    for &rad in &radii {
        let ic = InvarianceConfig { radius: rad, samples, seed: cfg.seed, ..Default::default() };
        let a = cm::invariance_residual(&problem, &sol.jet, &ic)?;
        let b = cm::invariance_residual(&problem, &zero, &ic)?;
        res.push(a);
        rows.push(vec![num(rad), num(a), num(b)]);
    }
    append_csv(&cfg.path(&residual_report), &["radius", "residual", "zero_jet_residual"], &rows)?;
    out.files.push(residual_report);

    let rate = rate_check(&problem, sp, cutoff, cfg.seed)?;
    let mut s = String::new();
    let _ = writeln!(s, "center_dim = {nc}");
    let _ = writeln!(s, "hyperbolic_dim = {}", problem.hyperbolic_dim());
    let _ = writeln!(s, "beta1 = {}", num(problem.split.beta1));
    let _ = writeln!(s, "beta2 = {}", num(problem.split.beta2));
    let _ = writeln!(s, "beta3 = {}", num(problem.split.beta3_minus.max(problem.split.beta3_plus)));
    let _ = writeln!(s, "horizon = {}", num(problem.horizon));
    let _ = writeln!(s, "quadrature_nodes = {}", problem.nodes().len());
    let _ = writeln!(s, "iterations = {}", sol.iterations);
    let _ = writeln!(s, "distances = {}", join(&sol.distances));
    let _ = writeln!(s, "contraction = {}", num(sol.contraction));
    let _ = writeln!(s, "jet_is_zero = {}", sol.jet.is_zero());
    let slope = if res.len() >= 2 && res.iter().all(|&x| x > 0.0) { loglog_slope(&radii, &res) } else { f64::NAN };
    let _ = writeln!(s, "invariance_slope = {}", num(slope));
    let _ = writeln!(s, "invariance_scope = truncated prepared system only");
    let _ = writeln!(s, "rate_max_ratio = {}", num(rate));
    let _ = writeln!(s, "rate_inequalities = {}", if rate <= 1.0 + 1e-12 { "hold" } else { "violated" });
    write_summary(cfg, &resolved, &s, &mut out)?;
    Ok(out)
}

/// Largest ratio of ‖A^σ(t)Π_σ z‖_X to its exponential bound over a t-grid
/// and a few random states; ≤ 1 when the rate inequalities hold.
pub fn rate_check(problem: &ManifoldProblem, sp: SpaceParams, cutoff: usize, seed: u64) -> Result<f64, CliError> {
    let split = &problem.split;
    let d = problem.spec.nu.len();
    let beta3 = split.beta3_minus.max(split.beta3_plus);
    let template = SpectralField::zeros(d, cutoff);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        let z = cm::FirstOrderState::new(random_field(&template, &mut rng, 1.0, 0.0, true), random_field(&template, &mut rng, 1.0, 0.0, true))?;
        let norms = [Block::Stable, Block::Center, Block::Unstable].map(|b| split.x_norm(&split.project(b, &z), sp));
        for i in 0..=40 {
            let t = 0.1 * i as f64;
            let checks = [
                (Block::Stable, t, (-split.beta1 * t).exp() * norms[0]),
                (Block::Center, t, (beta3 * t).exp() * norms[1]),
                (Block::Center, -t, (beta3 * t).exp() * norms[1]),
                (Block::Unstable, -t, (-split.beta2 * t).exp() * norms[2]),
            ];
            for (b, tt, bound) in checks {
                let n = split.x_norm(&cm::semigroup_apply(split, b, tt, &z)?, sp);
                if bound > 0.0 {
                    worst = worst.max(n / bound);
                }
            }
        }
    }
    Ok(worst)
}
