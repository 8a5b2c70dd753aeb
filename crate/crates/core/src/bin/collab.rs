use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use collab::experiment::{
    export_weight_histograms, run_grid_sweep, run_noise_sweep, run_opt_mode_comparison, run_scaling_ablation,
    Experiment, ExperimentConfig, Overrides,
};

#[derive(Parser)]
#[command(name = "collab", version, about = "Collaborative multi-head training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed and write per-seed metrics plus a summary.
    Train(Common),
    /// Individual baseline against collaborative patterns across label-noise levels.
    NoiseSweep(Common),
    /// Compare no scaling, loss scaling and backprop rescaling.
    ScalingAblation(Common),
    /// Compare simultaneous and alternating optimization.
    OptCompare(Common),
    /// Grid over beta, temperature and split point.
    Sweep(Common),
    /// Train the first seed and export head-1 weight histograms.
    Histograms {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 51)]
        bins: usize,
        /// Export at initialization instead of after training.
        #[arg(long)]
        init: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Seeds to run (repeat or comma-separate); replaces the config's list.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    heads: Option<usize>,
    /// individual, multi-instance, simple-ilr[@split] or hierarchical-ilr[@s1+s2]
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    noise: Vec<f64>,
    /// simultaneous, alternative, none, loss-scale or backprop-rescale
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl Common {
    fn experiment(&self) -> anyhow::Result<Experiment> {
        let cfg = ExperimentConfig::load(&self.config)?;
        let cfg = Overrides {
            seeds: self.seed.clone(),
            out: self.out.clone(),
            heads: self.heads,
            pattern: self.pattern.clone(),
            beta: self.beta.clone(),
            tau: self.tau.clone(),
            noise: self.noise.clone(),
            mode: self.mode.clone(),
            epochs: self.epochs,
        }
        .apply(cfg)?;
        Ok(Experiment::new(cfg)?)
    }
}

fn out_dir(exp: &Experiment) -> PathBuf {
    PathBuf::from(
        exp.config
            .out_dir
            .clone()
            .unwrap_or_else(|| format!("runs/{}", exp.config.name)),
    )
}

fn print_table<R: serde::Serialize>(rows: &[R]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn train(common: &Common) -> anyhow::Result<()> {
    let exp = common.experiment()?;
    let out = out_dir(&exp);
    let result = exp.run()?;
    result.write(&out)?;
    let s = &result.summary;
    for r in &result.records {
        match &r.aborted {
            None => println!("seed {}: test error {:.4}", r.seed, r.final_error()),
            Some(why) => println!("seed {}: aborted ({why})", r.seed),
        }
    }
    println!(
        "{}: {:.4} +- {:.4} over {} seeds ({} training params, {} inference params)",
        s.label,
        s.mean_error,
        s.std_error,
        s.seeds.len(),
        s.training_params,
        s.inference_params
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn histograms(common: &Common, bins: usize, init: bool) -> anyhow::Result<()> {
    let mut exp = common.experiment()?;
    exp.config.histogram_bins = bins;
    let seed = exp.config.seeds[0];
    let out = out_dir(&exp);
    let hists = if init {
        export_weight_histograms(&exp.build_graph(seed)?, bins, Some(&out))?
    } else {
        let rec = exp.run_seed(seed)?;
        collab::experiment::write_histograms(&rec.histograms, &out)?;
        rec.histograms
    };
    println!("layer,params,std,range");
    for h in &hists {
        println!("{},{},{},{}", h.layer, h.total(), h.std, h.range);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train(c) => train(c),
        Command::NoiseSweep(c) => {
            let exp = c.experiment()?;
            let levels = exp.config.sweep.noise_levels.clone();
            print_table(&run_noise_sweep(&exp, &levels, Some(&out_dir(&exp)))?)
        }
        Command::ScalingAblation(c) => {
            let exp = c.experiment()?;
            print_table(&run_scaling_ablation(&exp, Some(&out_dir(&exp)))?)
        }
        Command::OptCompare(c) => {
            let exp = c.experiment()?;
            print_table(&run_opt_mode_comparison(&exp, Some(&out_dir(&exp)))?)
        }
        Command::Sweep(c) => {
            let exp = c.experiment()?;
            print_table(&run_grid_sweep(&exp, Some(Path::new(&out_dir(&exp))))?)
        }
        Command::Histograms { common, bins, init } => histograms(common, *bins, *init),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
