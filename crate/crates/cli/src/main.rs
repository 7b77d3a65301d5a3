//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use discolab::dae::{extract_attribute, train_dae, Attribute, DaeSpec, DaeTrainConfig, DistilledDataset, DistilledRow};
use discolab::eql::{learn_equation, parse_dictionary, Dataset, EqlSpec};
use discolab::exemplars::projectile::time_step;
use discolab::exemplars::{
    accel_objective, directivity_surrogate, grating_benchmark, magnetization_average, max_height,
    mean_equilibration_time, pattern_sweep, projectile_dataset, spin_init, EquilibriumCriterion,
};
use discolab::optimizer::{al_loop, read_jsonl, write_jsonl, AcqKind, AlConfig, SearchSpace};
use discolab::pipeline::{exit_code, gain_factor, read_gain_csv, resume_pipeline, run_pipeline, PipelineConfig};
use discolab::vae::{train_vae, Vae, VaeSpec, VaeTrainConfig};
use discolab::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "discolab", version, about = "Latent-space discovery toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a VAE on an exemplar's training set and save a JSON checkpoint.
    TrainVae(TrainVaeArgs),
    /// Run a GP active-learning loop and write its JSONL log.
    ActiveLearn(ActiveLearnArgs),
    /// Decode an AL run, train a directional autoencoder and write distilled rows.
    Distill(DistillArgs),
    /// Learn a sparse symbolic equation from a CSV table.
    LearnEquation(LearnEquationArgs),
    /// Ground-truth generators.
    #[command(subcommand)]
    Exemplar(ExemplarCommand),
    /// End-to-end runs and gain factors.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum VaeExemplar {
    Projectile,
    Pump,
}

#[derive(Args)]
struct TrainVaeArgs {
    #[arg(long, value_enum)]
    exemplar: VaeExemplar,
    #[arg(long, default_value_t = 600)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Weight on the summed squared reconstruction error.
    #[arg(long, default_value_t = 1.0)]
    recon_weight: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    /// Directivity polynomial over a 4-D latent box.
    Surrogate,
    /// Synthetic grating response over orders 1..=160.
    Grating,
    /// Negated acceleration objective of VAE-decoded trajectories.
    Projectile,
    /// Negated mean sweeps to equilibrium over the initial magnetization.
    Ising,
}

#[derive(Clone, Copy, ValueEnum)]
enum Acq {
    Ei,
    Ucb,
}

#[derive(Args)]
struct ActiveLearnArgs {
    #[arg(long, value_enum)]
    objective: Objective,
    #[arg(long, value_enum, default_value = "ei")]
    acq: Acq,
    #[arg(long, default_value_t = AcqKind::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    #[arg(long, default_value_t = 50)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Half-width of the latent search box.
    #[arg(long, default_value_t = 3.0)]
    half_width: f64,
    /// VAE checkpoint, required by the projectile objective.
    #[arg(long)]
    vae: Option<PathBuf>,
    /// Inverse temperature of the ising objective.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    /// The objective value logged by the AL run.
    Objective,
    /// Maximum of the decoded experiment.
    MaxHeight,
}

#[derive(Args)]
struct DistillArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    vae: PathBuf,
    /// Comma-separated attributes, paired with z_1, z_2, ... in order.
    #[arg(long, value_delimiter = ',')]
    attrs: Vec<Attribute>,
    #[arg(long, default_value_t = 4)]
    latent_dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "32,16")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep this fraction of the run, best objective first.
    #[arg(long, default_value_t = 1.0)]
    keep: f64,
    #[arg(long, value_enum, default_value = "objective")]
    y: Target,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LearnEquationArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    target: String,
    /// Comma-separated inputs; every other column by default.
    #[arg(long, value_delimiter = ',')]
    inputs: Vec<String>,
    #[arg(long, default_value = "sq,prod")]
    dict: String,
    #[arg(long, default_value_t = 0.9)]
    sparsity: f64,
    #[arg(long, default_value_t = 3)]
    copies: usize,
    #[arg(long, default_value_t = 1500)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    /// Coefficients below this fraction of the largest are dropped.
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    /// Train on z-scored inputs; the equation is reported in raw units.
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ExemplarCommand {
    /// Metropolis magnetization trace of a 2-D Ising lattice.
    Ising {
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 1000)]
        sweeps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        side: usize,
        #[arg(long, default_value_t = 0.0)]
        m_init: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Projectile training set, one trajectory per row.
    Projectile {
        #[arg(long)]
        make_dataset: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the directivity polynomial.
    Surrogate {
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        eval: Vec<f64>,
    },
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run (or resume) a pipeline from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Existing run directory to continue.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Gain factors of the rows of a CSV table.
    Gain {
        #[arg(long)]
        inputs: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(2, exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::TrainVae(a) => train_vae_cmd(a),
        Command::ActiveLearn(a) => active_learn_cmd(a),
        Command::Distill(a) => distill_cmd(a),
        Command::LearnEquation(a) => learn_equation_cmd(a),
        Command::Exemplar(c) => exemplar_cmd(c),
        Command::Pipeline(c) => pipeline_cmd(c),
    }
}

fn train_vae_cmd(a: TrainVaeArgs) -> anyhow::Result<()> {
    let (spec, rows) = match a.exemplar {
        VaeExemplar::Projectile => (VaeSpec::projectile(), projectile_dataset().into_iter().map(|t| t.y).collect()),
        VaeExemplar::Pump => (VaeSpec::pump_pattern(), pattern_sweep(8, 8, 8)),
    };
    let cfg = VaeTrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        seed: a.seed,
        target_recon: None,
        recon_weight: a.recon_weight,
    };
    let t = Instant::now();
    let (vae, report) = train_vae(spec, &rows, &cfg)?;
    vae.save(&a.out)?;
    println!(
        "trained on {} rows in {:.1} s; reconstruction mse {:.3e}; smoothed monotone {}",
        rows.len(),
        t.elapsed().as_secs_f64(),
        vae.reconstruction_mse(&rows)?,
        report.smoothed_monotone
    );
    Ok(())
}

fn active_learn_cmd(a: ActiveLearnArgs) -> anyhow::Result<()> {
    let acquisition = match a.acq {
        Acq::Ei => AcqKind::Ei,
        Acq::Ucb => AcqKind::Ucb { lambda: a.lambda },
    };
    let cfg = AlConfig { n_init: a.n_init, budget: a.budget, acquisition, seed: a.seed, ..Default::default() };
    let run = match a.objective {
        Objective::Surrogate => {
            al_loop(&mut |z| directivity_surrogate(z), &SearchSpace::cube(4, a.half_width), &cfg)?
        }
        Objective::Grating => al_loop(
            &mut |z| grating_benchmark(z[0].round() as i64).unwrap_or(f64::NAN),
            &SearchSpace::IntegerGrid { lower: 1, upper: 160 },
            &cfg,
        )?,
        Objective::Projectile => {
            let path = a.vae.as_deref().ok_or_else(|| anyhow!("--vae is required for the projectile objective"))?;
            let vae = Vae::load(path)?;
            let space = SearchSpace::cube(vae.latent_dim(), a.half_width);
            al_loop(
                &mut |z| vae.decode(z).ok().and_then(|y| accel_objective(&y, time_step()).ok()).map_or(f64::NAN, |v| -v),
                &space,
                &cfg,
            )?
        }
        Objective::Ising => {
            let crit = EquilibriumCriterion::default();
            let s = a.seed.wrapping_add(1);
            al_loop(
                &mut |z| {
                    mean_equilibration_time(32, z[0], a.beta, &crit, &[s, s + 1, s + 2]).map_or(f64::NAN, |t| -t)
                },
                &SearchSpace::Box { lower: vec![-1.0], upper: vec![1.0] },
                &cfg,
            )?
        }
    };
    write_jsonl(&a.out, &run.records)?;
    match run.best {
        Some(b) => println!("{} evaluations; best y {:.6} at z {:?}", run.records.len(), b.y, b.z),
        None => println!("{} evaluations; no finite observation", run.records.len()),
    }
    Ok(())
}

fn distill_cmd(a: DistillArgs) -> anyhow::Result<()> {
    if a.attrs.is_empty() {
        bail!("--attrs needs at least one attribute");
    }
    if !(a.keep > 0.0 && a.keep <= 1.0) {
        bail!("--keep must lie in (0, 1]");
    }
    let vae = Vae::load(&a.vae)?;
    let records = read_jsonl(&a.run)?;
    let mut scored: Vec<(f64, &Vec<f64>)> = records.iter().filter_map(|r| r.y.map(|y| (y, &r.z))).collect();
    scored.sort_by(|p, q| q.0.total_cmp(&p.0));
    scored.truncate(((scored.len() as f64 * a.keep).ceil() as usize).max(2).min(scored.len()));
    let zs: Vec<Vec<f64>> = scored.iter().map(|(_, z)| (*z).clone()).collect();
    let xs = vae.decode_batch(&zs)?;
    let attrs = a
        .attrs
        .iter()
        .map(|&at| xs.iter().map(|x| extract_attribute(x, at)).collect::<discolab::Result<Vec<_>>>())
        .collect::<discolab::Result<Vec<_>>>()?;
    let spec = DaeSpec {
        input_dim: xs.first().map_or(0, Vec::len),
        latent_dim: a.latent_dim,
        hidden: a.hidden.clone(),
        pairs: a.attrs.iter().copied().enumerate().collect(),
        gamma: a.gamma,
    };
    let tc = DaeTrainConfig { epochs: a.epochs, batch_size: a.batch_size, lr: a.lr, seed: a.seed };
    let (dae, report) = train_dae(spec, &xs, &attrs, &tc)?;
    let z = dae.encode_batch(&xs)?;
    let rows = z
        .into_iter()
        .enumerate()
        .map(|(i, z)| DistilledRow {
            z,
            attrs: attrs.iter().map(|c| c[i]).collect(),
            y: match a.y {
                Target::Objective => scored[i].0,
                Target::MaxHeight => max_height(&xs[i]),
            },
        })
        .collect();
    let names = a.attrs.iter().map(|at| at.name().to_string()).collect();
    let distilled = DistilledDataset::new(a.latent_dim, names, rows)?;
    distilled.write_csv(&a.out)?;
    println!("{} rows; spearman {:?}; flagged {}", distilled.len(), report.spearman, report.flagged);
    Ok(())
}

fn learn_equation_cmd(a: LearnEquationArgs) -> anyhow::Result<()> {
    let inputs = (!a.inputs.is_empty()).then_some(a.inputs.as_slice());
    let data = Dataset::read_csv(&a.data, &a.target, inputs)?;
    let mut spec = EqlSpec::from_dictionary(data.n_inputs(), &parse_dictionary(&a.dict)?, a.copies)?;
    spec.target_sparsity = a.sparsity;
    spec.epochs = a.epochs;
    spec.standardize_inputs = a.standardize;
    spec.seed = a.seed;
    let eq = learn_equation(&spec, &data, a.tau, a.restarts)?;
    let text = eq.expr.equation(&a.target);
    fs::write(&a.out, format!("{text}\n")).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{text}\nmse {:.3e}; sparsity {:.3}", eq.mse, eq.sparsity);
    Ok(())
}

fn exemplar_cmd(c: ExemplarCommand) -> anyhow::Result<()> {
    match c {
        ExemplarCommand::Ising { beta, sweeps, seed, side, m_init, out } => {
            if !(beta > 0.0) {
                bail!("--beta must be positive");
            }
            let mut lattice = spin_init(side, m_init, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut w = csv::Writer::from_path(&out)?;
            w.write_record(["sweep", "m", "energy"])?;
            w.write_record(["0".to_string(), lattice.magnetization().to_string(), lattice.energy().to_string()])?;
            for s in 1..=sweeps {
                lattice.metropolis_sweep(beta, &mut rng);
                w.write_record([s.to_string(), lattice.magnetization().to_string(), lattice.energy().to_string()])?;
            }
            w.flush()?;
            let (m, am) = magnetization_average(side, beta, 0, sweeps.max(1), seed);
            println!("{sweeps} sweeps; final m {:.4}; independent chain <M> {m:.4}, <|M|> {am:.4}", lattice.magnetization());
            Ok(())
        }
        ExemplarCommand::Projectile { make_dataset, out } => {
            if !make_dataset {
                bail!("nothing to do; pass --make-dataset");
            }
            write_projectiles(&out)
        }
        ExemplarCommand::Surrogate { eval } => {
            if eval.len() != 4 {
                bail!("--eval takes four comma-separated values, got {}", eval.len());
            }
            println!("{}", directivity_surrogate(&eval));
            Ok(())
        }
    }
}

fn write_projectiles(out: &Path) -> anyhow::Result<()> {
    let data = projectile_dataset();
    let mut w = csv::Writer::from_path(out)?;
    let n = data.first().map_or(0, |t| t.y.len());
    let mut header = vec!["u".to_string(), "theta_deg".into(), "beta".into(), "gamma".into()];
    header.extend((0..n).map(|k| format!("y_{k}")));
    w.write_record(&header)?;
    for t in &data {
        let p = t.params;
        let mut row = vec![p.u.to_string(), p.theta_deg.to_string(), p.beta.to_string(), p.gamma.to_string()];
        row.extend(t.y.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    println!("{} trajectories of {n} samples", data.len());
    Ok(())
}

fn pipeline_cmd(c: PipelineCommand) -> anyhow::Result<()> {
    match c {
        PipelineCommand::Run { config, resume } => {
            let cfg = PipelineConfig::load(&config)?;
            let t = Instant::now();
            let manifest = match resume {
                Some(dir) => resume_pipeline(&dir, &cfg)?,
                None => run_pipeline(&cfg)?,
            };
            for s in &manifest.stages {
                println!("{:<4} {:>8.1} s  {}", s.stage.to_string(), s.wall_ms / 1e3, s.artifacts.len());
            }
            println!("run {} in {:.1} s", manifest.run_dir.display(), t.elapsed().as_secs_f64());
            Ok(())
        }
        PipelineCommand::Gain { inputs } => {
            let rows = read_gain_csv(&inputs)?;
            println!("{:<16} {:>14}", "name", "gain");
            for r in rows {
                let g = gain_factor(&r.inputs)?;
                println!("{:<16} {:>14.6}", r.name, g.gain);
            }
            Ok(())
        }
    }
}
