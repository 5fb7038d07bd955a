use std::path::{Path, PathBuf};

use pilnm_core::physics::simulate::step_count;
use pilnm_core::physics::{generate_dataset, Dataset, GenerationConfig, TruthModel};
use pilnm_core::pipeline::{
    checkpoint_path, compare, held_out_events, train, write_comparison, Checkpoint, ModelKind, ReportSeeds,
};

use crate::error::CliError;
use crate::runs::{create_run_dir, dataset_digest, latest_run, output_root, write_json, CONFIG_FILE};
use crate::settings::{echo, CompareSettings, FileConfig, GenerateSettings, TrainSettings};
use crate::{Cli, Command, CompareArgs, GenerateArgs, TrainArgs};

const DATASET_MARKER: &str = "metadata.json";
const CHECKPOINT_FILE: &str = "checkpoint.json";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let root = output_root(cli.out.as_deref())?;
    let name = cli.run_name.as_deref();
    match cli.command {
        Command::Generate(args) => generate_cmd(resolve_generate(file.generate, args), &root, name),
        Command::Train(args) => train_cmd(resolve_train(file.train, args), &root, name),
        Command::Compare(args) => compare_cmd(resolve_compare(file.compare, args), &root, name),
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn resolve_generate(mut s: GenerateSettings, a: GenerateArgs) -> GenerateSettings {
    set(&mut s.k, a.k);
    set(&mut s.load_min, a.load_min);
    set(&mut s.load_max, a.load_max);
    set(&mut s.dt, a.dt);
    set(&mut s.horizon, a.horizon);
    set(&mut s.seed, a.seed);
    set(&mut s.t_m, a.t_m);
    s
}

fn resolve_train(mut s: TrainSettings, a: TrainArgs) -> TrainSettings {
    if a.dataset.is_some() {
        s.dataset = a.dataset;
    }
    set(&mut s.model, a.model);
    set(&mut s.batch_size, a.batch);
    set(&mut s.learning_rate, a.lr);
    set(&mut s.iterations, a.iters);
    set(&mut s.window, a.window);
    set(&mut s.perturbation, a.perturb);
    set(&mut s.seed, a.seed);
    set(&mut s.checkpoint_every, a.checkpoint_every);
    s
}

fn resolve_compare(mut s: CompareSettings, a: CompareArgs) -> CompareSettings {
    for (slot, flag) in [(&mut s.pilnm, a.pilnm), (&mut s.rnn, a.rnn), (&mut s.dataset, a.dataset)] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    set(&mut s.events, a.events);
    set(&mut s.horizon, a.horizon);
    set(&mut s.warmup, a.warmup);
    set(&mut s.seed, a.seed);
    s
}

fn print_effective(section: &str, settings: &impl serde::Serialize) -> Result<(), CliError> {
    println!("# effective configuration");
    print!("{}", echo(section, settings)?);
    println!();
    Ok(())
}

fn generate_cmd(s: GenerateSettings, root: &Path, name: Option<&str>) -> Result<(), CliError> {
    step_count(s.horizon, s.dt)?;
    let gen = GenerationConfig {
        dt: s.dt,
        horizon: s.horizon,
        truth: TruthModel {
            t_m: s.t_m,
            ..Default::default()
        },
        ..Default::default()
    };
    gen.truth.validate()?;
    gen.network.validate()?;
    print_effective("generate", &s)?;

    log::info!("simulating {} events", s.k);
    let ds = generate_dataset(s.k, (s.load_min, s.load_max), &gen, s.seed)?;
    let dir = create_run_dir(root, "generate", name)?;
    ds.save(&dir)?;
    write_json(&dir.join(CONFIG_FILE), &s)?;
    let digest = dataset_digest(&dir)?;
    println!("dataset    {}", dir.display());
    println!("events     {}", ds.len());
    println!("dt         {} s", s.dt);
    println!("horizon    {} s", s.horizon);
    println!("load range [{}, {}] p.u.", s.load_min, s.load_max);
    println!("seed       {}", s.seed);
    println!("digest     sha256:{digest}");
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    if !path.join(DATASET_MARKER).is_file() {
        return Err(CliError::Config(format!(
            "{} is not a dataset directory (no {DATASET_MARKER})",
            path.display()
        )));
    }
    Ok(Dataset::load(path)?)
}

fn latest_dataset(root: &Path) -> Result<PathBuf, CliError> {
    latest_run(root, DATASET_MARKER, |_| true).ok_or_else(|| {
        CliError::Config(format!(
            "no dataset under {}; run `pilnm generate` or pass --dataset",
            root.display()
        ))
    })
}

fn train_cmd(mut s: TrainSettings, root: &Path, name: Option<&str>) -> Result<(), CliError> {
    let dataset_dir = match s.dataset.take() {
        Some(p) => p,
        None => latest_dataset(root)?,
    };
    s.dataset = Some(dataset_dir.clone());
    let ds = load_dataset(&dataset_dir)?;
    let cfg = s.train_config();
    cfg.validate(ds.len(), ds.trajectories[0].len())?;
    print_effective("train", &s)?;

    let dir = create_run_dir(root, &format!("train-{}", s.model), name)?;
    write_json(&dir.join(CONFIG_FILE), &s)?;
    log::info!("training {} for {} iterations", s.model, s.iterations);
    let outcome = train(&ds, &cfg, Some(&dir))?;

    if let Some(last) = outcome.history.last() {
        println!("final loss       {:.6e}", last.loss);
        println!("reconstruction   {:.6e}", last.reconstruction);
    }
    if let pilnm_core::pipeline::ModelSpec::Pilnm { approx, .. } = &outcome.checkpoint.model {
        let truth = ds.config.truth.params;
        println!("prior gains      (approximate / true)");
        for (label, a, t) in [
            ("m_p", approx.m_p, truth.m_p),
            ("m_q", approx.m_q, truth.m_q),
            ("k_pv", approx.k_pv, truth.k_pv),
            ("k_iv", approx.k_iv, truth.k_iv),
        ] {
            println!("  {label:<5} {a:.6} / {t:.6}");
        }
    }
    println!("checkpoint       {}", checkpoint_path(&dir, None).display());
    Ok(())
}

/// Accepts a checkpoint file or a training run directory.
fn checkpoint_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(CHECKPOINT_FILE)
    } else {
        path.to_path_buf()
    }
}

fn run_settings(dir: &Path) -> Option<TrainSettings> {
    let text = std::fs::read_to_string(dir.join(CONFIG_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

fn latest_training(root: &Path, kind: ModelKind) -> Result<PathBuf, CliError> {
    latest_run(root, CHECKPOINT_FILE, |d| run_settings(d).is_some_and(|s| s.model == kind))
        .map(|d| d.join(CHECKPOINT_FILE))
        .ok_or_else(|| {
            CliError::Config(format!(
                "no {kind} training run under {}; run `pilnm train --model {kind}` or pass --{kind}",
                root.display()
            ))
        })
}

fn load_checkpoint(path: &Path, kind: ModelKind) -> Result<Checkpoint, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!("checkpoint {} not found (--{kind})", path.display())));
    }
    let ck = Checkpoint::load(path)?;
    if ck.kind() != kind {
        return Err(CliError::Config(format!(
            "{} holds a {} model, expected {kind}",
            path.display(),
            ck.kind()
        )));
    }
    Ok(ck)
}

fn compare_cmd(mut s: CompareSettings, root: &Path, name: Option<&str>) -> Result<(), CliError> {
    let pilnm_path = match s.pilnm.take() {
        Some(p) => checkpoint_file(&p),
        None => latest_training(root, ModelKind::Pilnm)?,
    };
    let rnn_path = match s.rnn.take() {
        Some(p) => checkpoint_file(&p),
        None => latest_training(root, ModelKind::Rnn)?,
    };
    let dataset_dir = match s.dataset.take() {
        Some(p) => p,
        None => match pilnm_path.parent().and_then(run_settings).and_then(|t| t.dataset) {
            Some(p) => p,
            None => latest_dataset(root)?,
        },
    };
    s.pilnm = Some(pilnm_path.clone());
    s.rnn = Some(rnn_path.clone());
    s.dataset = Some(dataset_dir.clone());

    let ds = load_dataset(&dataset_dir)?;
    let settings = s.eval_settings();
    settings.validate(ds.config.dt)?;
    let pilnm_ck = load_checkpoint(&pilnm_path, ModelKind::Pilnm)?;
    let rnn_ck = load_checkpoint(&rnn_path, ModelKind::Rnn)?;
    for (ck, path) in [(&pilnm_ck, &pilnm_path), (&rnn_ck, &rnn_path)] {
        if ck.training.dataset_seed != ds.seed {
            return Err(CliError::Config(format!(
                "{} was trained on dataset seed {}, but {} has seed {}",
                path.display(),
                ck.training.dataset_seed,
                dataset_dir.display(),
                ds.seed
            )));
        }
    }
    print_effective("compare", &s)?;

    let events = held_out_events(s.events, ds.load_range, s.seed, &ds.loads());
    let seeds = ReportSeeds {
        dataset: ds.seed,
        pilnm_train: pilnm_ck.training.seed,
        rnn_train: rnn_ck.training.seed,
        eval: s.seed,
    };
    log::info!("evaluating {} held-out events", events.len());
    let cmp = compare(&pilnm_ck.pilnm()?, &rnn_ck.rnn()?, &ds.config, &events, &settings, seeds)?;
    let dir = create_run_dir(root, "compare", name)?;
    write_comparison(&dir, &cmp)?;
    write_json(&dir.join(CONFIG_FILE), &s)?;
    print!("{}", cmp.report.table());
    println!("report           {}", dir.join("report.json").display());
    println!("event traces     {}", dir.join("events").display());
    Ok(())
}
