use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use echolabel::harness::{
    sweep, write_sweep_csv, PipelineError, RunOptions, RunReport, ScenarioFile, Stage, SweepParameter, ThresholdChoice,
    Workspace,
};

#[derive(Parser)]
#[command(
    name = "echolabel",
    version,
    about = "Echo labeling and defect reconstruction for layered media"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate echoes and write echoes.json.
    Simulate(Common),
    /// Label echoes.json and write labels.json.
    Label(Common),
    /// Localize and reconstruct from echoes.json and labels.json.
    Reconstruct(Common),
    /// All stages in one go; writes report.json and timings.json.
    Run(Common),
    /// Monte Carlo sweep over one parameter; writes sweep.csv.
    Sweep(SweepArgs),
    /// Write plot tables from report.json.
    Export {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file; the bundled two-layer scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Node budget for the combination search and the MIS solver.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, conflicts_with = "calibrate")]
    tau_rel: Option<f64>,
    /// Calibrate the rank threshold from noise-only trials.
    #[arg(long)]
    calibrate: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// noise_sigma, receiver_count or tau_rel
    #[arg(long)]
    parameter: SweepParameter,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioFile, PipelineError> {
        match &self.scenario {
            Some(path) => ScenarioFile::load(path),
            None => Ok(ScenarioFile::bundled()),
        }
    }

    fn options(&self) -> RunOptions {
        let threshold = match (self.tau_rel, self.calibrate) {
            (Some(tau), _) => ThresholdChoice::Relative(tau),
            (None, true) => ThresholdChoice::Calibrate,
            (None, false) => ThresholdChoice::FromFile,
        };
        RunOptions {
            seed: self.seed,
            budget: self.budget,
            threshold,
        }
    }
}

fn summary(report: &RunReport) {
    let m = &report.metrics;
    println!(
        "{}: seed {} | feasible {} | graph {}/{} | mis {} | defects {} | recall {:.3} precision {:.3} rmse {}",
        report.name,
        report.seed,
        report.feasible_count,
        report.conflict_graph.nodes,
        report.conflict_graph.edges,
        report.mis_cardinality,
        report.defects.len(),
        m.recall,
        m.precision,
        m.rmse.map_or("-".into(), |r| format!("{r:.3e}")),
    );
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Simulate(c) => {
            let out = Workspace::new(&c.out)?.simulate(&c.scenario()?, &c.options())?;
            let counts: Vec<usize> = out.echoes.per_receiver_ranges.iter().map(Vec::len).collect();
            println!("seed {} | echoes per receiver {:?}", out.seed, counts);
        }
        Command::Label(c) => {
            let out = Workspace::new(&c.out)?.label(&c.scenario()?, &c.options())?;
            let l = &out.labeling;
            println!(
                "feasible {} | graph {}/{} | selected {} | explored {}",
                l.feasible_count,
                l.graph_nodes,
                l.graph_edges,
                l.sources.len(),
                l.explored
            );
        }
        Command::Reconstruct(c) => summary(&Workspace::new(&c.out)?.reconstruct(&c.scenario()?, &c.options())?),
        Command::Run(c) => summary(&Workspace::new(&c.out)?.run(&c.scenario()?, &c.options())?),
        Command::Sweep(s) => {
            let file = s.common.options().apply(&s.common.scenario()?);
            let rows = sweep(&file, s.parameter, &s.values, s.trials)?;
            std::fs::create_dir_all(&s.common.out)
                .map_err(|e| PipelineError::io(Stage::Sweep, format!("{}: {e}", s.common.out.display())))?;
            let path = s.common.out.join("sweep.csv");
            write_sweep_csv(&rows, &path)?;
            for r in &rows {
                println!(
                    "{}={} recall {:.3} precision {:.3} rmse {}",
                    r.parameter,
                    r.value,
                    r.recall_mean,
                    r.precision_mean,
                    r.rmse_mean.map_or("-".into(), |v| format!("{v:.3e}"))
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Export { out } => {
            let paths = Workspace::new(&out)?.export()?;
            for p in [paths.ground_truth, paths.sources, paths.comparison] {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
