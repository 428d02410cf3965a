use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ddstab::batching::Batch;
use ddstab::lmi::{encode_output_lmi, encode_state_lmi};
use ddstab::numkit::Vector;
use ddstab::pipeline::{
    closed_loop_simulate, design_from_batch, output_interconnection, reproduce, run_output_design,
    run_state_design, state_interconnection, verify, Controller, DesignReport, ExperimentConfig,
    PlantSpec, Which,
};
use ddstab::Error;

#[derive(Parser)]
#[command(
    name = "ddstab",
    version,
    about = "Derivative-free data-driven stabilization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the LMI strictness margin.
    #[arg(long)]
    delta: Option<f64>,
    /// Write report.json and summary.txt here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    config: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Also write the sampled batch (CSV + JSON sidecar) to this directory.
    #[arg(long)]
    export_batch: Option<PathBuf>,
    /// Also write the LMI as a self-contained JSON problem.
    #[arg(long)]
    dump_lmi: Option<PathBuf>,
    /// Write exploration and closed-loop trajectories as CSV under --out.
    #[arg(long, requires = "out")]
    csv: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichArg {
    State,
    Output,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// State-feedback design from input/state data.
    DesignState(DesignArgs),
    /// Output-feedback design from input/output data.
    DesignOutput(DesignArgs),
    /// Design from a recorded batch directory, without the simulator.
    DesignFromBatch {
        dir: PathBuf,
        /// Ground-truth plant (JSON plant spec) for certification.
        #[arg(long)]
        plant: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-certify a stored report from its gain and plant.
    Verify { report: PathBuf },
    /// Run the two built-in reference examples with seeded sweeps.
    #[command(name = "reproduce-paper", alias = "reproduce")]
    Reproduce {
        #[arg(long, value_enum, default_value = "both")]
        which: WhichArg,
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path, common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = common.delta {
        cfg.delta = d;
    }
    Ok(cfg)
}

fn finish(report: &DesignReport, out: Option<&Path>) -> Result<bool, Error> {
    print!("{}", report.summary());
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report.certified)
}

fn write_closed_loop_csv(report: &DesignReport, dir: &Path) -> Result<(), Error> {
    let (Some(controller), Some(_)) = (&report.controller, &report.closed_loop) else {
        return Ok(());
    };
    let x0 = Vector::from_vec(report.x0.clone());
    let (m, zeta0) = match (report.config.plant.resolve()?, controller) {
        (ddstab::pipeline::Plant::State(p), Controller::State(c)) => {
            (state_interconnection(&p, c)?, c.zeta0.clone())
        }
        (ddstab::pipeline::Plant::Output(p), Controller::Output(c)) => {
            (output_interconnection(&p, c)?, c.zeta0.clone())
        }
        _ => return Ok(()),
    };
    let s0 = Vector::from_iterator(x0.len() + zeta0.len(), x0.iter().copied().chain(zeta0));
    let (traj, _) = closed_loop_simulate(&m, &s0, None)?;
    traj.write_csv(fs::File::create(dir.join("closed_loop.csv"))?)
}

fn dispatch(cmd: Command) -> Result<bool, Error> {
    match cmd {
        Command::DesignState(a) => {
            let cfg = load_config(&a.config, &a.common)?;
            let run = run_state_design(&cfg)?;
            if let Some(dir) = &a.export_batch {
                Batch::State(run.batch.clone()).write_dir(dir)?;
            }
            if let Some(path) = &a.dump_lmi {
                fs::write(path, encode_state_lmi(&run.batch, cfg.delta)?.to_json()?)?;
            }
            if a.csv {
                let dir = a.common.out.as_deref().expect("clap enforces --out");
                fs::create_dir_all(dir)?;
                run.exploration
                    .write_csv(fs::File::create(dir.join("exploration.csv"))?)?;
                write_closed_loop_csv(&run.report, dir)?;
            }
            finish(&run.report, a.common.out.as_deref())
        }
        Command::DesignOutput(a) => {
            let cfg = load_config(&a.config, &a.common)?;
            let run = run_output_design(&cfg)?;
            if let Some(dir) = &a.export_batch {
                Batch::Output(run.batch.clone()).write_dir(dir)?;
            }
            if let Some(path) = &a.dump_lmi {
                fs::write(path, encode_output_lmi(&run.batch, cfg.delta)?.to_json()?)?;
            }
            if a.csv {
                let dir = a.common.out.as_deref().expect("clap enforces --out");
                fs::create_dir_all(dir)?;
                run.exploration
                    .write_csv(fs::File::create(dir.join("exploration.csv"))?)?;
                write_closed_loop_csv(&run.report, dir)?;
            }
            finish(&run.report, a.common.out.as_deref())
        }
        Command::DesignFromBatch { dir, plant, common } => {
            let truth: Option<PlantSpec> = match plant {
                Some(p) => Some(serde_json::from_str(&fs::read_to_string(p)?)?),
                None => None,
            };
            let report = design_from_batch(
                &dir,
                common.delta.unwrap_or(ddstab::lmi::DEFAULT_DELTA),
                Default::default(),
                truth.as_ref(),
            )?;
            let ok = finish(&report, common.out.as_deref())?;
            // Without ground truth nothing can be certified; success means
            // the LMI was solved.
            Ok(match report.config.plant {
                PlantSpec::Batch { truth: None, .. } => report.lmi.solved(),
                _ => ok,
            })
        }
        Command::Verify { report } => {
            let r: DesignReport = serde_json::from_str(&fs::read_to_string(report)?)?;
            let v = verify(&r)?;
            println!("{:<24} {:.6}", "abscissa", v.abscissa);
            println!(
                "{:<24} {}",
                "eigenvalues",
                ddstab::pipeline::format_eigenvalues(&v.eigenvalues)
            );
            println!("{:<24} {}", "hurwitz", v.hurwitz);
            println!("{:<24} {}", "matches stored", v.consistent);
            Ok(v.hurwitz && v.consistent)
        }
        Command::Reproduce { which, seeds, out } => {
            let which = match which {
                WhichArg::State => Which::State,
                WhichArg::Output => Which::Output,
                WhichArg::Both => Which::Both,
            };
            let bundle = reproduce(which, seeds);
            print!("{}", bundle.summary());
            if let Some(dir) = out {
                bundle.write(&dir)?;
            }
            Ok(bundle.passed())
        }
    }
}
