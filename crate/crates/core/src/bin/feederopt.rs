use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use feederopt::config::Config;
use feederopt::controllers::{build_program, ControlProblem, ControllerKind};
use feederopt::experiments::write_sweep;
use feederopt::feeder::PlacementKind;
use feederopt::profiles::DailyProfile;
use feederopt::{Error, Result};

#[derive(Parser)]
#[command(name = "feederopt", version, about = "Feeder loss minimization with batteries and smart inverters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep and write results.csv and comparison.csv.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated inverter sizing ratios.
        #[arg(long, value_delimiter = ',')]
        smax: Option<Vec<f64>>,
        /// Comma-separated PV penetration fractions.
        #[arg(long, value_delimiter = ',')]
        penetration: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        placement: Option<Vec<PlacementKind>>,
        #[arg(long, value_delimiter = ',')]
        controller: Option<Vec<ControllerKind>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Also write per-scenario state, schedule and solver CSVs.
        #[arg(long)]
        detail: bool,
    },
    /// Write the built-in synthetic daily profile as CSV.
    Profile {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one scenario's quadratic program as sparse triplets.
    DumpQp {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.1)]
        smax: f64,
        #[arg(long, default_value_t = 0.5)]
        penetration: f64,
        #[arg(long, default_value = "rear")]
        placement: PlacementKind,
        #[arg(long, default_value = "global")]
        controller: ControllerKind,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::from_path(p),
        None => Ok(Config::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    config: Option<PathBuf>,
    out: PathBuf,
    smax: Option<Vec<f64>>,
    penetration: Option<Vec<f64>>,
    placement: Option<Vec<PlacementKind>>,
    controller: Option<Vec<ControllerKind>>,
    seed: Option<u64>,
    workers: Option<usize>,
    detail: bool,
) -> Result<bool> {
    let mut cfg = load_config(config.as_deref())?;
    cfg.s_max = smax.unwrap_or(cfg.s_max);
    cfg.penetration = penetration.unwrap_or(cfg.penetration);
    cfg.placements = placement.unwrap_or(cfg.placements);
    cfg.controllers = controller.unwrap_or(cfg.controllers);
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.workers = workers.unwrap_or(cfg.workers);
    cfg.validate()?;

    let results = write_sweep(&cfg, &out, detail)?;

    let mut all_conclusive = true;
    for r in &results {
        if !r.status.is_conclusive() {
            all_conclusive = false;
            eprintln!(
                "scenario s_max={} a={} {} {}: {:?}",
                r.spec.s_max, r.spec.a, r.spec.placement, r.spec.controller, r.status
            );
        }
    }
    eprintln!("{} scenarios written to {}", results.len(), out.join("results.csv").display());
    Ok(all_conclusive)
}

#[allow(clippy::too_many_arguments)]
fn dump_qp(
    config: Option<PathBuf>,
    out: PathBuf,
    smax: f64,
    penetration: f64,
    placement: PlacementKind,
    controller: ControllerKind,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = load_config(config.as_deref())?;
    let topology = cfg.topology(seed.unwrap_or(cfg.seed))?;
    let pv = cfg.placement(penetration, placement)?;
    let profiles = cfg.node_profiles(&cfg.daily_profile()?, smax, &pv)?;
    let problem = ControlProblem {
        topology: &topology,
        profiles: &profiles,
        pv_nodes: pv.nodes(),
        b_max: cfg.b_max()?,
        epsilon: cfg.epsilon,
    };
    let program = build_program(controller, &problem, &cfg.controller_options())?;
    program.qp.write_triplets(create(&out)?).map_err(|e| Error::io(&out, e))?;
    eprintln!(
        "{} variables, {} rows; power scale {:e}, loss scale {:e}, constant loss {:e}",
        program.qp.n(),
        program.qp.m(),
        program.power_ref,
        program.loss_ref,
        program.constant_loss
    );
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Sweep {
            config,
            out,
            smax,
            penetration,
            placement,
            controller,
            seed,
            workers,
            detail,
        } => sweep(config, out, smax, penetration, placement, controller, seed, workers, detail),
        Command::Profile { out } => {
            DailyProfile::synthetic().write_csv(create(&out)?)?;
            Ok(true)
        }
        Command::DumpQp {
            config,
            out,
            smax,
            penetration,
            placement,
            controller,
            seed,
        } => dump_qp(config, out, smax, penetration, placement, controller, seed).map(|_| true),
    }
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
