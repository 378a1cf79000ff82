use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tnls::dynamics::Sponge;
use tnls::experiments::{bundle, run_scenario, Config, ScenarioName};

#[derive(Parser)]
#[command(name = "tnls", version, about = "Threshold dynamics of the radial energy-critical NLS")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML file with [grid], [evolution], [profiles], [scenario]
    #[arg(long)]
    config: PathBuf,
    /// output directory for summary.json, CSVs and plot data
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// override [grid].dim
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Case {
    Sub,
    Crit,
    Super,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sign {
    Minus,
    Plus,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ground-state identities and the Sobolev constant
    Ground(Common),
    /// Eigenpair, kernel, Q-values and coercivity of the linearized operator
    Spectrum(Common),
    /// Approximate special solutions W_k^a and their residual rates
    Profiles {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        a: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        /// comma-separated times for the residual report
        #[arg(long, value_delimiter = ',')]
        t_list: Option<Vec<f64>>,
    },
    /// Evolve one initial datum
    Evolve {
        #[command(flatten)]
        common: Common,
        /// W | scaledW:c | profile:a,k,t0 | file:path
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// absorbing layer strength on the outer fifth of the grid
        #[arg(long)]
        sponge: Option<f64>,
    },
    /// Threshold classification runs
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        case: Option<Case>,
    },
    /// Special solutions W⁻ / W⁺ forward and backward
    Special {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        sign: Option<Sign>,
    },
    /// Modulation-tracked convergence rates against e₀
    Rates(Common),
}

fn prepare(common: &Common) -> Result<Config, String> {
    let mut cfg = Config::load(&common.config).map_err(|e| e.to_string())?;
    if let Some(s) = common.seed {
        cfg.scenario.seed = s;
    }
    if let Some(d) = common.dim {
        cfg.grid.dim = d;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, String> {
    let (common, family, cfg) = match &cli.cmd {
        Cmd::Ground(c) => (c, "ground", prepare(c)?),
        Cmd::Spectrum(c) => (c, "spectrum", prepare(c)?),
        Cmd::Rates(c) => (c, "rates", prepare(c)?),
        Cmd::Profiles { common, a, k, t_list } => {
            let mut cfg = prepare(common)?;
            if let Some(a) = a {
                cfg.profiles.a = *a;
                cfg.profiles.signs = vec![*a];
            }
            if let Some(k) = k {
                cfg.profiles.k = *k;
            }
            if let Some(t) = t_list {
                cfg.profiles.t_list = t.clone();
            }
            (common, "profiles", cfg)
        }
        Cmd::Evolve { common, init, t_end, dt, sponge } => {
            let mut cfg = prepare(common)?;
            if let Some(i) = init {
                cfg.scenario.init = i.clone();
            }
            if let Some(t) = t_end {
                cfg.evolution.t_end = *t;
            }
            if let Some(dt) = dt {
                cfg.evolution.dt = *dt;
            }
            if let Some(s) = sponge {
                let g = cfg.grid.build().map_err(|e| e.to_string())?;
                cfg.evolution.sponge = Some(Sponge::outer_fifth(&g, *s));
            }
            (common, "evolve", cfg)
        }
        Cmd::Classify { common, case } => {
            let mut cfg = prepare(common)?;
            if let Some(c) = case {
                cfg.scenario.name = Some(match c {
                    Case::Sub => ScenarioName::ClassifySub,
                    Case::Crit => ScenarioName::ClassifyCrit,
                    Case::Super => ScenarioName::ClassifySuper,
                });
            }
            (common, "classify", cfg)
        }
        Cmd::Special { common, sign } => {
            let mut cfg = prepare(common)?;
            if let Some(s) = sign {
                cfg.scenario.name = Some(match s {
                    Sign::Minus => ScenarioName::SpecialMinus,
                    Sign::Plus => ScenarioName::SpecialPlus,
                });
            }
            (common, "special", cfg)
        }
    };
    let name = cfg.resolve(family).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let summary = run_scenario(&cfg, name, common.out.as_deref()).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&bundle(&summary)).expect("json"));
    eprintln!("{name}: {} in {:.1?}", if summary.pass { "PASS" } else { "FAIL" }, start.elapsed());
    for k in summary.failed_checks() {
        eprintln!("  failed check: {k}");
    }
    for st in summary.stages.iter().filter(|s| !s.ok) {
        eprintln!("  failed stage {}: {}", st.name, st.error.as_deref().unwrap_or(""));
    }
    Ok(summary.pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
