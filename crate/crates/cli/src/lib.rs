//! Command-line front end: configuration, scenario drivers, reports and plots.

pub mod config;
pub mod exit;
pub mod plot;
pub mod scenarios;

use clap::{Args, Parser, Subcommand};
use config::{load_config_file, ExperimentConfig, Scenario};
pub use exit::{CliError, ErrorKind};
use std::collections::BTreeMap;
use std::path::PathBuf;

macro_rules! params {
    ($name:ident { $($(#[$m:meta])* $field:ident),* $(,)? }) => {
        #[derive(Args, Debug, Clone, Default)]
        pub struct $name {
            $(
                $(#[$m])*
                #[arg(long, allow_hyphen_values = true)]
                pub $field: Option<String>,
            )*
        }

        impl $name {
            pub fn pairs(self) -> Vec<(&'static str, Option<String>)> {
                vec![$((stringify!($field), self.$field)),*]
            }
        }
    };
}

params!(SolveArgs {
    /// Spatial dimension (checked against nu).
    dim,
    /// Comma list ν_1,…,ν_d.
    nu,
    m,
    /// Comma list of forcing frequencies; switches to the evolution problem.
    omega,
    /// Nonlinearity, e.g. "u^2 + cos(x)".
    f,
    epsilon,
    /// Ball radius s.
    radius,
    rho,
    r,
    cutoff,
    freq_cutoff,
    tol,
    max_iter,
    /// Extra random starts in the ball (uniqueness probe).
    starts,
    /// Field file.
    out,
    /// CSV report.
    report,
});

params!(ScanArgs { dim, nu, m, omega, delta, kmax, lmax, report });

params!(BifurcateParams {
    dim,
    nu,
    m0,
    /// `lo:hi:n` or a comma list of eps_m = m − m0.
    eps_range,
    /// Translation x* of the branch, one entry per axis.
    phase,
    cutoff,
    tol,
    degree,
    out_csv,
});

#[derive(Args, Debug, Clone, Default)]
pub struct BifurcateArgs {
    #[command(flatten)]
    pub params: BifurcateParams,
    /// Run the symbolic expansion check and print its report.
    #[arg(long)]
    pub verify: bool,
}

impl BifurcateArgs {
    pub fn pairs(self) -> Vec<(&'static str, Option<String>)> {
        let mut p = self.params.pairs();
        p.push(("verify", self.verify.then(|| "true".to_string())));
        p
    }
}

params!(CenterManifoldArgs {
    dim,
    nu,
    m,
    omega,
    f,
    epsilon,
    rho,
    r,
    cutoff,
    theta_modes,
    cutoff_radius,
    cutoff_order,
    tol,
    max_iter,
    /// Jet coefficient file.
    jet_out,
    /// Reduced ODE trajectory CSV.
    ode_out,
    /// Invariance residual CSV.
    residual_report,
    /// Initial center coordinates as re,im pairs.
    z0,
    ode_radius,
    ode_dt,
    ode_steps,
    radii,
    samples,
});

params!(MeasureArgs { dim, m, deltas, kmax, samples, out_csv });

#[derive(Args, Debug, Clone)]
pub struct PlotArgs {
    #[arg(long)]
    pub csv_in: PathBuf,
    #[arg(long)]
    pub svg_out: PathBuf,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Picard solve of L u = ε F(u) (or the response problem with --omega).
    Solve(SolveArgs),
    /// Resonance scan of the linear operator.
    Scan(ScanArgs),
    /// Bifurcating branches at a resonant m0.
    Bifurcate(BifurcateArgs),
    /// Response solution of the ill-posed evolution problem.
    Evolution(SolveArgs),
    /// Quadratic jet of the center manifold and its reduced ODE.
    CenterManifold(CenterManifoldArgs),
    /// Monte Carlo sweep of the excluded parameter measure.
    MeasureSweep(MeasureArgs),
    /// SVG bifurcation diagram from a `bifurcate` CSV.
    Plot(PlotArgs),
}

#[derive(Parser, Debug, Clone)]
#[command(name = "torus", version, about = "Spectral Galerkin experiments on tori")]
pub struct Cli {
    /// TOML configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

/// Resolve configuration and run. Returns the text to print.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    let (scenario, flags) = match cli.command {
        Command::Plot(p) => {
            plot::emit_bifurcation_diagram(&p.csv_in, &p.svg_out)?;
            return Ok(format!("wrote {}\n", p.svg_out.display()));
        }
        Command::Solve(a) => (Scenario::Solve, a.pairs()),
        Command::Evolution(a) => (Scenario::Evolution, a.pairs()),
        Command::Scan(a) => (Scenario::Scan, a.pairs()),
        Command::Bifurcate(a) => (Scenario::Bifurcate, a.pairs()),
        Command::CenterManifold(a) => (Scenario::CenterManifold, a.pairs()),
        Command::MeasureSweep(a) => (Scenario::MeasureSweep, a.pairs()),
    };
    let file = match &cli.config {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    let cfg = ExperimentConfig::resolve(scenario, file, flags, cli.seed, cli.out_dir, cli.verbose)?;
    let out = scenarios::run(&cfg)?;
    let mut text = out.summary;
    if cfg.verbose {
        for f in &out.files {
            text.push_str(&format!("wrote {}\n", cfg.path(f).display()));
        }
    }
    Ok(text)
}
