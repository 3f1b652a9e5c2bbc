//! `mirforge train` and `mirforge eval`: fit or score a stock model on one
//! of the bundled synthetic tasks.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use mirforge::optim::{evaluate, train, Metric, OptimizerKind, Sample, TrainConfig};
use mirforge::zoo::builders::{stock_models, TaskView};
use mirforge::zoo::pipeline::log_standardize;
use mirforge::zoo::tasks::{
    make_pitch_task, make_voice_task, recurrent_voice_samples, window_voice_samples, VOICE_WINDOW,
    VOICE_WINDOW_HOP,
};
use mirforge::zoo::{Model, ModelSpec};
use mirforge::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{resolve_seed, InStage, StageError};

/// Split sizes for the bundled tasks. Pitch is 50 train / 10 test clips per
/// class (600/120 overall); voice is counted in whole clips, each of which
/// expands to several windows or one sequence depending on the model.
const PITCH_TRAIN_PER_CLASS: usize = 50;
const PITCH_TEST_PER_CLASS: usize = 10;
const VOICE_TRAIN_CLIPS: usize = 24;
const VOICE_TEST_CLIPS: usize = 8;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    /// Twelve-class pitch identification from magnitude spectrograms.
    Pitch,
    /// Frame-wise voice activity from mel spectrograms.
    Voice,
}

impl TaskArg {
    fn name(self) -> &'static str {
        match self {
            TaskArg::Pitch => "pitch",
            TaskArg::Voice => "voice",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Stock model name; an unknown name lists the catalog.
    #[arg(long)]
    pub model: String,

    #[arg(long, value_enum)]
    pub task: TaskArg,

    /// Seed for data, weights, and shuffling; falls back to MIRFORGE_SEED,
    /// then 0.
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long, default_value_t = 50)]
    pub epochs: usize,

    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,

    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    pub optimizer: OptimizerArg,

    /// Directory receiving history.csv and params.mirf.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,

    /// Floor inside the ln(v + eps) input compression.
    #[arg(long, default_value_t = 1e-7)]
    pub eps: f64,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Stock model name the parameters belong to.
    #[arg(long)]
    pub model: String,

    #[arg(long, value_enum)]
    pub task: TaskArg,

    /// Parameter file written by `train`.
    #[arg(long)]
    pub params: PathBuf,

    /// Seed the task was generated with.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Floor inside the ln(v + eps) input compression.
    #[arg(long, default_value_t = 1e-7)]
    pub eps: f64,
}

fn find_model(name: &str) -> mirforge::Result<(ModelSpec, TaskView)> {
    let catalog = stock_models();
    let names: Vec<String> = catalog.iter().map(|(s, _)| s.name.clone()).collect();
    catalog
        .into_iter()
        .find(|(spec, _)| spec.name == name)
        .ok_or_else(|| {
            Error::Argument(format!(
                "unknown model {name:?}; available: {}",
                names.join(", ")
            ))
        })
}

fn expected_task(view: TaskView) -> TaskArg {
    match view {
        TaskView::PitchSpectrogram => TaskArg::Pitch,
        TaskView::VoiceWindows | TaskView::VoiceSequences => TaskArg::Voice,
    }
}

fn check_task(name: &str, view: TaskView, task: TaskArg) -> mirforge::Result<()> {
    let expected = expected_task(view);
    if task == expected {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "{name} trains on the {} task, not {}",
            expected.name(),
            task.name()
        )))
    }
}

/// Generates the split the model's view calls for and log-standardizes the
/// inputs, with statistics fitted on the train split only.
fn assemble(view: TaskView, seed: u64, eps: f64) -> mirforge::Result<(Vec<Sample>, Vec<Sample>, Metric)> {
    match view {
        TaskView::PitchSpectrogram => {
            let mut task = make_pitch_task(seed, PITCH_TRAIN_PER_CLASS, PITCH_TEST_PER_CLASS)?;
            log_standardize(&mut task.train, &mut task.test, eps)?;
            Ok((task.train, task.test, Metric::Accuracy))
        }
        TaskView::VoiceWindows => {
            let task = make_voice_task(seed, VOICE_TRAIN_CLIPS, VOICE_TEST_CLIPS)?;
            let mut train = window_voice_samples(&task.train, VOICE_WINDOW, VOICE_WINDOW_HOP);
            let mut test = window_voice_samples(&task.test, VOICE_WINDOW, VOICE_WINDOW_HOP);
            log_standardize(&mut train, &mut test, eps)?;
            Ok((train, test, Metric::BinaryAccuracy))
        }
        TaskView::VoiceSequences => {
            let task = make_voice_task(seed, VOICE_TRAIN_CLIPS, VOICE_TEST_CLIPS)?;
            let mut train = recurrent_voice_samples(&task.train);
            let mut test = recurrent_voice_samples(&task.test);
            log_standardize(&mut train, &mut test, eps)?;
            Ok((train, test, Metric::BinaryAccuracy))
        }
    }
}

pub fn run_train(args: &TrainArgs) -> Result<i32, StageError> {
    let seed = resolve_seed(args.seed)?;
    let (spec, view) = find_model(&args.model).stage("arguments")?;
    check_task(&args.model, view, args.task).stage("arguments")?;
    let (train_set, test_set, metric) = assemble(view, seed, args.eps).stage("data")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::build(spec, &mut rng).stage("build")?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        optimizer: match args.optimizer {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        },
        seed,
        metric: Some(metric),
        ..TrainConfig::default()
    };
    let history = train(&model, &train_set, Some(&test_set), &cfg).stage("train")?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(Error::from)
        .stage("write")?;
    std::fs::write(args.out_dir.join("history.csv"), history.to_csv())
        .map_err(Error::from)
        .stage("write")?;
    model
        .save_params(args.out_dir.join("params.mirf"))
        .stage("write")?;

    let (loss, score) = evaluate(&model, &test_set, metric).stage("evaluate")?;
    println!("test loss {loss:.6e} accuracy {score:.4}");
    Ok(0)
}

pub fn run_eval(args: &EvalArgs) -> Result<i32, StageError> {
    let seed = resolve_seed(args.seed)?;
    let (spec, view) = find_model(&args.model).stage("arguments")?;
    check_task(&args.model, view, args.task).stage("arguments")?;
    let (_, test_set, metric) = assemble(view, seed, args.eps).stage("data")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::build(spec, &mut rng).stage("build")?;
    model.load_params(&args.params).stage("load")?;

    let (loss, score) = evaluate(&model, &test_set, metric).stage("evaluate")?;
    println!("test loss {loss:.6e} accuracy {score:.4}");
    Ok(0)
}
