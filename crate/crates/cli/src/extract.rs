//! `mirforge extract`: WAV in, one time-frequency representation out.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use mirforge::audio::{load_wav, resample, Signal};
use mirforge::mirf::write_spectrogram;
use mirforge::timefreq::{
    chromagram, cqt, log_compress, magnitude, mel_filterbank, melspectrogram, stft, CqtConfig,
    Spectrogram, Window,
};
use mirforge::Error;

use crate::{InStage, StageError};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Stft,
    Mel,
    Cqt,
    Chroma,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Stft => "stft",
            Kind::Mel => "mel",
            Kind::Cqt => "cqt",
            Kind::Chroma => "chroma",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum WindowArg {
    Hann,
    Rect,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Mirf,
    Csv,
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Input WAV file (PCM; stereo is downmixed).
    #[arg(long)]
    pub input: PathBuf,

    /// Destination feature file.
    #[arg(long)]
    pub output: PathBuf,

    /// Representation to compute.
    #[arg(long, value_enum, default_value_t = Kind::Mel)]
    pub kind: Kind,

    /// Binary spectrogram container or plain CSV.
    #[arg(long, value_enum, default_value_t = Format::Mirf)]
    pub format: Format,

    /// Working sample rate; the input is resampled to this first.
    #[arg(long, default_value_t = 16_000)]
    pub sample_rate: u32,

    #[arg(long, default_value_t = 512)]
    pub n_fft: usize,

    #[arg(long, default_value_t = 256)]
    pub hop: usize,

    #[arg(long, value_enum, default_value_t = WindowArg::Hann)]
    pub window: WindowArg,

    /// Mel bands; only with --kind mel [default: 40].
    #[arg(long)]
    pub n_mels: Option<usize>,

    /// Lowest analyzed frequency: the mel band edge or the first constant-Q
    /// bin; not meaningful for stft [default: 32.70].
    #[arg(long)]
    pub f_min: Option<f64>,

    /// Upper mel band edge; only with --kind mel [default: half the sample rate].
    #[arg(long)]
    pub f_max: Option<f64>,

    /// Constant-Q bins per octave; only with --kind cqt or chroma [default: 12].
    #[arg(long)]
    pub beta: Option<usize>,

    /// Octaves above f_min; only with --kind cqt or chroma [default: 5].
    #[arg(long)]
    pub octaves: Option<usize>,

    /// Apply ln(v + eps) to the result.
    #[arg(long)]
    pub log: bool,

    /// Floor inside the log.
    #[arg(long, default_value_t = 1e-7)]
    pub eps: f64,
}

/// Rejects flags that contradict the chosen representation, so a typo like
/// `--kind mel --beta 24` fails instead of silently ignoring the 24.
fn check_flags(args: &ExtractArgs) -> mirforge::Result<()> {
    let reject = |flag: &str, wanted: &str| {
        Err(Error::Argument(format!(
            "--{flag} only applies to {wanted}, not --kind {}",
            args.kind.name()
        )))
    };
    if args.n_mels.is_some() && args.kind != Kind::Mel {
        return reject("n-mels", "--kind mel");
    }
    if args.f_max.is_some() && args.kind != Kind::Mel {
        return reject("f-max", "--kind mel");
    }
    if args.f_min.is_some() && args.kind == Kind::Stft {
        return reject("f-min", "mel, cqt, or chroma");
    }
    if args.beta.is_some() && !matches!(args.kind, Kind::Cqt | Kind::Chroma) {
        return reject("beta", "--kind cqt or chroma");
    }
    if args.octaves.is_some() && !matches!(args.kind, Kind::Cqt | Kind::Chroma) {
        return reject("octaves", "--kind cqt or chroma");
    }
    Ok(())
}

fn compute(args: &ExtractArgs, signal: &Signal) -> mirforge::Result<Spectrogram> {
    let window = match args.window {
        WindowArg::Hann => Window::Hann,
        WindowArg::Rect => Window::Rect,
    };
    let f_min = args.f_min.unwrap_or(32.70);
    let beta = args.beta.unwrap_or(12);
    match args.kind {
        Kind::Stft => Ok(magnitude(&stft(signal, args.n_fft, args.hop, window)?)),
        Kind::Mel => {
            let mag = magnitude(&stft(signal, args.n_fft, args.hop, window)?);
            let f_max = args.f_max.unwrap_or(args.sample_rate as f64 / 2.0);
            let fb = mel_filterbank(
                args.n_fft,
                args.sample_rate,
                args.n_mels.unwrap_or(40),
                f_min,
                f_max,
            )?;
            melspectrogram(&mag, &fb)
        }
        Kind::Cqt => {
            let cfg = CqtConfig::new(f_min, beta, args.octaves.unwrap_or(5), args.hop)?;
            cqt(signal, &cfg)
        }
        Kind::Chroma => {
            let cfg = CqtConfig::new(f_min, beta, args.octaves.unwrap_or(5), args.hop)?;
            chromagram(&cqt(signal, &cfg)?, beta)
        }
    }
}

pub fn run(args: &ExtractArgs) -> Result<i32, StageError> {
    check_flags(args).stage("arguments")?;
    let raw = load_wav(&args.input).stage("load")?;
    let signal = resample(&raw, args.sample_rate).stage("resample")?;
    let spec = compute(args, &signal).stage(args.kind.name())?;
    let spec = if args.log {
        log_compress(&spec, args.eps).stage("log-compress")?
    } else {
        spec
    };
    match args.format {
        Format::Mirf => write_spectrogram(&args.output, &spec).stage("write")?,
        Format::Csv => std::fs::write(&args.output, spec.to_csv())
            .map_err(Error::from)
            .stage("write")?,
    }
    println!("{} {}×{}", args.kind.name(), spec.f_bins(), spec.frames());
    Ok(0)
}
