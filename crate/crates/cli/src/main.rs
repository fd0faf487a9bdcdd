use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use g2p_core::rundir::{babble_phase, export, refine_phase, ExportSelection};
use g2p_core::{Error, ExperimentConfig, RunDir, TrialRecord};

/// Babble, fit and refine inverse maps for a simulated tendon-driven quadruped.
#[derive(Parser)]
#[command(name = "g2p", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Babble random activations and fit the initial inverse maps.
    Babble {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the refinement trials and the final evaluation.
    Refine {
        #[command(flatten)]
        run: RunArgs,
        /// Babble first if the run directory has no finished babble.
        #[arg(long)]
        with_babble: bool,
    },
    /// Write endpoint, joint and RMSE CSVs from a finished run.
    Export {
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        endpoints: bool,
        #[arg(long)]
        joints: bool,
        #[arg(long)]
        rmse: bool,
        /// Export only this trial (number of retunes before it ran).
        #[arg(long)]
        trial: Option<usize>,
    },
    /// Run complete experiments for consecutive seeds.
    Batch {
        #[command(flatten)]
        run: RunArgs,
        /// Number of seeds, starting at the configured seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Experiments run at once; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; defaults to the run directory's snapshot.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Task cycle period (s).
    #[arg(long)]
    cycle_period: Option<f64>,
    /// Babble duration (s).
    #[arg(long)]
    babble_duration: Option<f64>,
    #[arg(long)]
    refinements: Option<usize>,
    #[arg(long)]
    feedback_gain: Option<f64>,
    /// Continue a run that already completed this phase or part of it.
    #[arg(long)]
    resume: bool,
}

impl RunArgs {
    /// Flags override the config file, which overrides the defaults.
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), Error> {
        let file = match &self.config {
            Some(path) => Some(ExperimentConfig::load(path)?),
            None => None,
        };
        let out = self
            .out
            .clone()
            .or_else(|| file.as_ref().and_then(|c| c.out.clone()))
            .ok_or_else(|| Error::Config("out: no run directory given (use --out or set `out`)".into()))?;
        let mut cfg = match file {
            Some(cfg) => cfg,
            None => RunDir::new(&out).load_config()?.unwrap_or_default(),
        };
        cfg.out = Some(out.clone());
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.cycle_period {
            cfg.task.cycle_period = v;
        }
        if let Some(v) = self.babble_duration {
            cfg.babble.duration = v;
        }
        if let Some(v) = self.refinements {
            cfg.refinement.num_refinements = v;
        }
        if let Some(v) = self.feedback_gain {
            cfg.refinement.feedback_gain = v;
        }
        cfg.validate()?;
        Ok((cfg, out))
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Params(_) | Error::Trajectory(_) => 2,
        Error::Plant { .. } => 3,
        Error::Training { .. } => 4,
        Error::MissingArtifacts { .. } | Error::WouldOverwrite(_) => 5,
        _ => 1,
    }
}

fn report_trial(total: usize, rec: &TrialRecord) {
    let per: Vec<String> = rec.rmse.values().iter().map(|v| format!("{:.2}", v.to_degrees())).collect();
    eprintln!(
        "trial {}/{}: RMSE {:.3} deg [{}] ({:.1} s)",
        rec.index,
        total,
        rec.rmse.aggregate.to_degrees(),
        per.join(" "),
        rec.wall_clock
    );
}

fn print_rmse(rows: &[(usize, g2p_core::RmseReport)]) {
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        let (a, b) = (first.1.aggregate, last.1.aggregate);
        println!(
            "RMSE {:.3} deg after babble, {:.3} deg after {} refinements ({:.1}%)",
            a.to_degrees(),
            b.to_degrees(),
            last.0,
            100.0 * b / a
        );
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Babble { run } => {
            let (cfg, out) = run.resolve()?;
            let s = babble_phase(&cfg, &RunDir::new(&out), run.resume)?;
            if s.reused {
                eprintln!("babble already finished in {}", out.display());
            }
            for (i, (fit, base)) in s.fit_mse.iter().zip(&s.baseline_mse).enumerate() {
                println!("map {i}: {} samples, fit MSE {fit:.5} (mean-only {base:.5})", s.samples);
            }
        }
        Command::Refine { run, with_babble } => {
            let (cfg, out) = run.resolve()?;
            let total = cfg.refinement.num_refinements;
            let s = refine_phase(&cfg, &RunDir::new(&out), run.resume, with_babble, &mut |rec| {
                report_trial(total, rec)
            })?;
            print_rmse(&s.rmse);
            for p in &s.exports {
                println!("wrote {}", p.display());
            }
        }
        Command::Export {
            out,
            endpoints,
            joints,
            rmse,
            trial,
        } => {
            let sel = if endpoints || joints || rmse {
                ExportSelection { endpoints, joints, rmse }
            } else {
                ExportSelection::ALL
            };
            for p in export(&RunDir::new(&out), sel, trial)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Batch { run, seeds, jobs } => {
            let (cfg, out) = run.resolve()?;
            batch(&cfg, &out, seeds, jobs, run.resume)?;
        }
    }
    Ok(())
}

fn batch(cfg: &ExperimentConfig, out: &Path, seeds: u64, jobs: Option<usize>, resume: bool) -> Result<(), Error> {
    let jobs = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(u64, Result<(f64, f64), Error>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(seeds as usize) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed) as u64;
                if i >= seeds {
                    break;
                }
                let mut c = cfg.clone();
                c.seed = cfg.seed + i;
                let dir = out.join(format!("seed_{}", c.seed));
                c.out = Some(dir.clone());
                let r = refine_phase(&c, &RunDir::new(&dir), resume, true, &mut |_| {}).map(|s| {
                    let first = s.rmse.first().map_or(f64::NAN, |r| r.1.aggregate);
                    let last = s.rmse.last().map_or(f64::NAN, |r| r.1.aggregate);
                    (first, last)
                });
                match &r {
                    Ok((a, b)) => eprintln!(
                        "seed {}: {:.3} -> {:.3} deg",
                        c.seed,
                        a.to_degrees(),
                        b.to_degrees()
                    ),
                    Err(e) => eprintln!("seed {}: {e}", c.seed),
                }
                results.lock().unwrap().push((c.seed, r));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(seed, _)| *seed);
    let mut csv = String::from("seed,initial_deg,final_deg,ratio\n");
    let mut ratios = Vec::new();
    let mut first_err = None;
    for (seed, r) in results {
        match r {
            Ok((a, b)) => {
                csv.push_str(&format!("{seed},{:?},{:?},{:?}\n", a.to_degrees(), b.to_degrees(), b / a));
                ratios.push(b / a);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let path = out.join("summary.csv");
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.to_path_buf(),
        source,
    })?;
    std::fs::write(&path, csv).map_err(|source| Error::Io { path: path.clone(), source })?;
    if !ratios.is_empty() {
        ratios.sort_by(f64::total_cmp);
        let n = ratios.len();
        let median = (ratios[(n - 1) / 2] + ratios[n / 2]) / 2.0;
        println!("median final/initial RMSE ratio {median:.3} over {n} seeds");
    }
    println!("wrote {}", path.display());
    first_err.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
