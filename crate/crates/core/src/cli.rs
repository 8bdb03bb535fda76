//! The `vpaes` command line: encrypt, decrypt, analyze, select-score and
//! sensitivity.
//!
//! Exit codes: 0 success, 2 bad key, 3 bad image, 4 I/O, 5 bad container,
//! 6 a statistical test precondition was not met.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cipher::{CipherError, BLOCK_LEN};
use crate::imageio::{
    decode_image, read_container, save_cipher_view, save_image, write_atomic, write_container,
    CipherContainer, ContainerError, ImageBuffer, ImageError, MAGIC,
};
use crate::keystream::{
    key_to_integer, pi_fraction_bytes, required_byte_count, Key128, KeystreamError,
};
use crate::pipeline::{decrypt_image, encrypt_image, PipelineError};
use crate::randstat::{
    bits_msb_first, chi_square_tone_test, correlation, entropy, plaintext_selection_score,
    sample_adjacent_pairs, sensitivity_correlation, spectral_dft_test, Channel, Decision,
    Direction, StatError, TestReport, ToneHistogram, DEFAULT_SAMPLES,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad key: {0}")]
    BadKey(String),
    #[error("bad image: {0}")]
    BadImage(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad container: {0}")]
    BadContainer(String),
    #[error("test precondition unmet: {0}")]
    Precondition(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::BadKey(_) => 2,
            CliError::BadImage(_) => 3,
            CliError::Io(_) => 4,
            CliError::BadContainer(_) => 5,
            CliError::Precondition(_) => 6,
        }
    }
}

impl From<KeystreamError> for CliError {
    fn from(e: KeystreamError) -> Self {
        CliError::BadKey(e.to_string())
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::Io(io) => CliError::Io(io),
            other => CliError::BadImage(other.to_string()),
        }
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        match e {
            ContainerError::Io(io) => CliError::Io(io),
            other => CliError::BadContainer(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Cipher(CipherError::Keystream(k)) => k.into(),
            PipelineError::Cipher(other) => CliError::BadContainer(other.to_string()),
            PipelineError::Container(c) => c.into(),
            PipelineError::Image(i) => i.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vpaes", version, about = "AES-128 image encryption with per-block bit permutations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encrypt a PPM/PGM/BMP image into a VPAES container.
    Encrypt(EncryptArgs),
    /// Decrypt a VPAES container back to the original image.
    Decrypt(DecryptArgs),
    /// Run entropy, correlation, spectral and tone tests on an image or container.
    Analyze(AnalyzeArgs),
    /// Per-channel tone chi-square of a plaintext image.
    SelectScore(SelectScoreArgs),
    /// Correlate the cipher images of one image under keys k and k+1.
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Clone, Args)]
pub struct KeyArgs {
    /// AES-128 key as 32 hexadecimal digits.
    #[arg(long)]
    pub key: String,
    /// Also accept a 31-digit key, left-padded with one zero.
    #[arg(long)]
    pub allow_short_key: bool,
}

impl KeyArgs {
    pub fn parse(&self) -> Result<Key128, CliError> {
        let key = if self.allow_short_key {
            Key128::from_hex_padded(&self.key)?
        } else {
            Key128::from_hex(&self.key)?
        };
        if key.is_zero() {
            return Err(KeystreamError::ZeroMultiplier.into());
        }
        Ok(key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    match s {
        "0.01" | ".01" => Ok(0.01),
        "0.001" | ".001" => Ok(0.001),
        _ => Err("alpha must be 0.01 or 0.001".into()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct EncryptArgs {
    #[command(flatten)]
    pub key: KeyArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the ciphertext as a viewable P6 image.
    #[arg(long)]
    pub view: Option<PathBuf>,
    /// Worker threads for block encryption; 0 picks the machine default.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Print the first N key-stream bytes in hexadecimal.
    #[arg(long, value_name = "N")]
    pub dump_stream: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DecryptArgs {
    #[command(flatten)]
    pub key: KeyArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args)]
pub struct StatArgs {
    #[arg(long, value_parser = parse_alpha, default_value = "0.01")]
    pub alpha: f64,
    /// Pixel pairs per correlation estimate.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub report: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// An image, or a VPAES container (its cipher view is analysed).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub stat: StatArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SelectScoreArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub report: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub key: KeyArgs,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[command(flatten)]
    pub stat: StatArgs,
}

/// Parses arguments, runs the command, prints errors, and maps them to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(&cli.command) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err((output, e)) => {
            print!("{output}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Runs one command. On failure, any partial output is returned with the error.
pub fn execute(command: &Command) -> Result<String, (String, CliError)> {
    let no_output = |e| (String::new(), e);
    match command {
        Command::Encrypt(a) => cmd_encrypt(a).map_err(no_output),
        Command::Decrypt(a) => cmd_decrypt(a).map_err(no_output),
        Command::SelectScore(a) => cmd_select_score(a).map_err(no_output),
        Command::Sensitivity(a) => cmd_sensitivity(a).map_err(no_output),
        Command::Analyze(a) => cmd_analyze(a),
    }
}

fn load(path: &Path) -> Result<(ImageBuffer, Vec<u8>), CliError> {
    let bytes = fs::read(path)?;
    Ok((decode_image(&bytes)?, bytes))
}

pub fn cmd_encrypt(a: &EncryptArgs) -> Result<String, CliError> {
    let key = a.key.parse()?;
    let (img, _) = load(&a.input)?;
    let started = Instant::now();
    let container = encrypt_image(&img, &key, a.threads)?;
    let elapsed = started.elapsed();
    write_container(&container, &a.out)?;
    if let Some(view) = &a.view {
        save_cipher_view(&container, view)?;
    }
    let mut out = String::new();
    let _ = writeln!(out, "blocks: {}", container.payload.len() / BLOCK_LEN);
    let _ = writeln!(out, "pad_len: {}", container.pad_len);
    let _ = writeln!(out, "elapsed: {:.3} s", elapsed.as_secs_f64());
    if let Some(n) = a.dump_stream.filter(|&n| n > 0) {
        let stream = pi_fraction_bytes(&key_to_integer(&key), n)?;
        let _ = writeln!(out, "stream: {}", hex::encode(stream.bytes()));
    }
    Ok(out)
}

pub fn cmd_decrypt(a: &DecryptArgs) -> Result<String, CliError> {
    let key = a.key.parse()?;
    let container = read_container(&a.input)?;
    let started = Instant::now();
    let img = decrypt_image(&container, &key, a.threads)?;
    let elapsed = started.elapsed();
    save_image(&img, &a.out)?;
    Ok(format!(
        "{}x{}x{} restored\nelapsed: {:.3} s\n",
        img.width(),
        img.height(),
        img.channels(),
        elapsed.as_secs_f64()
    ))
}

/// One line of a machine-readable report: a test outcome or the reason it
/// could not run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub test: &'static str,
    pub channel: Option<Channel>,
    pub direction: Option<Direction>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub alpha: Option<f64>,
    pub decision: Option<Decision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReportEntry {
    fn from_result(
        test: &'static str,
        channel: Channel,
        direction: Option<Direction>,
        result: Result<TestReport, StatError>,
    ) -> Self {
        match result {
            Ok(r) => Self {
                test: r.test,
                channel: Some(channel),
                direction,
                statistic: Some(r.statistic),
                p_value: r.p_value,
                alpha: r.alpha,
                decision: r.decision,
                exact_p_value: r.exact_p_value,
                error: None,
            },
            Err(e) => Self {
                test,
                channel: Some(channel),
                direction,
                statistic: None,
                p_value: None,
                alpha: None,
                decision: None,
                exact_p_value: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub command: &'static str,
    pub input: String,
    pub input_sha256: String,
    pub source: &'static str,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub seed: u64,
    pub samples: usize,
    pub alpha: f64,
    pub reports: Vec<ReportEntry>,
}

/// Seed for the pair draw in one direction; channels share it.
fn direction_seed(seed: u64, direction: Direction) -> u64 {
    let index = Direction::ALL.iter().position(|&d| d == direction).unwrap() as u64;
    seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs every test of the battery on every channel of `img`.
pub fn run_battery(img: &ImageBuffer, alpha: f64, samples: usize, seed: u64) -> Vec<ReportEntry> {
    let mut entries = Vec::new();
    for &channel in Channel::all_for(img.channels()) {
        let hist = ToneHistogram::from_image(img, channel).expect("channel of image");
        entries.push(ReportEntry::from_result(
            "entropy",
            channel,
            None,
            entropy(&hist).map(|h| TestReport::measurement("entropy", h)),
        ));
        for direction in Direction::ALL {
            let r = sample_adjacent_pairs(img, direction, channel, samples, direction_seed(seed, direction))
                .and_then(|s| correlation(&s))
                .map(|r| TestReport::measurement("correlation", r));
            entries.push(ReportEntry::from_result("correlation", channel, Some(direction), r));
        }
        let plane = img.channel_plane(channel_index(img, channel));
        entries.push(ReportEntry::from_result(
            "spectral_dft",
            channel,
            None,
            spectral_dft_test(&bits_msb_first(&plane), alpha),
        ));
        entries.push(ReportEntry::from_result(
            "chi_square_tone",
            channel,
            None,
            chi_square_tone_test(&hist, alpha),
        ));
    }
    entries
}

fn channel_index(img: &ImageBuffer, channel: Channel) -> usize {
    Channel::all_for(img.channels())
        .iter()
        .position(|&ch| ch == channel)
        .expect("channel of image")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn emit(out: &Option<PathBuf>, text: String) -> Result<String, CliError> {
    match out {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.6}"))
}

pub fn render_analysis(report: &AnalysisReport, format: ReportFormat) -> String {
    if format == ReportFormat::Json {
        return serde_json::to_string_pretty(report).expect("serializable report") + "\n";
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "input {} ({}, {}x{}x{}) sha256 {}",
        report.input, report.source, report.width, report.height, report.channels, report.input_sha256
    );
    let _ = writeln!(out, "seed {} samples {} alpha {}", report.seed, report.samples, report.alpha);
    for e in &report.reports {
        let channel = e.channel.map_or_else(String::new, |c| c.to_string());
        let direction = e.direction.map_or_else(String::new, |d| d.to_string());
        let _ = match &e.error {
            Some(err) => writeln!(out, "{:<16} {:<6} {:<10} error: {err}", e.test, channel, direction),
            None => writeln!(
                out,
                "{:<16} {:<6} {:<10} statistic {:>14} p {:>9} {}",
                e.test,
                channel,
                direction,
                fmt_opt(e.statistic),
                fmt_opt(e.p_value),
                e.decision.map_or("", |d| match d {
                    Decision::Accepted => "accepted",
                    Decision::Rejected => "rejected",
                })
            ),
        };
    }
    out
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<String, (String, CliError)> {
    let fail = |e: CliError| (String::new(), e);
    let bytes = fs::read(&a.input).map_err(|e| fail(e.into()))?;
    let (img, source) = if bytes.starts_with(MAGIC) {
        let c = CipherContainer::from_bytes(&bytes).map_err(|e| fail(e.into()))?;
        (c.cipher_view(), "container")
    } else {
        (decode_image(&bytes).map_err(|e| fail(e.into()))?, "image")
    };
    let reports = run_battery(&img, a.stat.alpha, a.stat.samples, a.stat.seed);
    let failures: Vec<String> = reports
        .iter()
        .filter_map(|e| e.error.as_ref().map(|err| format!("{} {:?}: {err}", e.test, e.channel)))
        .collect();
    let report = AnalysisReport {
        command: "analyze",
        input: a.input.display().to_string(),
        input_sha256: sha256_hex(&bytes),
        source,
        width: img.width(),
        height: img.height(),
        channels: img.channels(),
        seed: a.stat.seed,
        samples: a.stat.samples,
        alpha: a.stat.alpha,
        reports,
    };
    let text = render_analysis(&report, a.stat.report);
    let printed = emit(&a.out, text).map_err(fail)?;
    if failures.is_empty() {
        Ok(printed)
    } else {
        Err((printed, CliError::Precondition(failures.join("; "))))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub command: &'static str,
    pub input: String,
    pub input_sha256: String,
    pub scores: Vec<ChannelValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelValue {
    pub channel: Channel,
    pub value: f64,
}

pub fn cmd_select_score(a: &SelectScoreArgs) -> Result<String, CliError> {
    let (img, bytes) = load(&a.input)?;
    let report = ScoreReport {
        command: "select-score",
        input: a.input.display().to_string(),
        input_sha256: sha256_hex(&bytes),
        scores: plaintext_selection_score(&img)
            .into_iter()
            .map(|(channel, value)| ChannelValue { channel, value })
            .collect(),
    };
    let text = match a.report {
        ReportFormat::Json => serde_json::to_string_pretty(&report).expect("serializable") + "\n",
        ReportFormat::Text => report
            .scores
            .iter()
            .map(|s| format!("{:<6} chi2 {:.2}\n", s.channel.to_string(), s.value))
            .collect(),
    };
    emit(&a.out, text)
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub command: &'static str,
    pub input: String,
    pub input_sha256: String,
    pub key: String,
    pub key_plus_one: String,
    pub seed: u64,
    pub samples: usize,
    pub correlations: Vec<ChannelValue>,
    pub max_abs: f64,
}

pub fn cmd_sensitivity(a: &SensitivityArgs) -> Result<String, CliError> {
    let key = a.key.parse()?;
    let next = key.wrapping_increment();
    if next.is_zero() {
        return Err(CliError::BadKey("k + 1 wraps to the all-zero key".into()));
    }
    let (img, bytes) = load(&a.input)?;
    let c1 = encrypt_image(&img, &key, a.threads)?;
    let c2 = encrypt_image(&img, &next, a.threads)?;
    let correlations: Vec<ChannelValue> = sensitivity_correlation(&c1, &c2, a.stat.samples, a.stat.seed)
        .map_err(|e| CliError::Precondition(e.to_string()))?
        .into_iter()
        .map(|(channel, value)| ChannelValue { channel, value })
        .collect();
    let max_abs = correlations.iter().map(|c| c.value.abs()).fold(0.0, f64::max);
    let report = SensitivityReport {
        command: "sensitivity",
        input: a.input.display().to_string(),
        input_sha256: sha256_hex(&bytes),
        key: key.to_hex(),
        key_plus_one: next.to_hex(),
        seed: a.stat.seed,
        samples: a.stat.samples,
        correlations,
        max_abs,
    };
    let text = match a.stat.report {
        ReportFormat::Json => serde_json::to_string_pretty(&report).expect("serializable") + "\n",
        ReportFormat::Text => {
            let mut out = String::new();
            for c in &report.correlations {
                let _ = writeln!(out, "{:<6} r {:+.6} |r| {:.6}", c.channel.to_string(), c.value, c.value.abs());
            }
            let _ = writeln!(out, "max |r| {:.6}", report.max_abs);
            out
        }
    };
    emit(&a.out, text)
}

/// Key-stream bytes an image of `bytes` plaintext bytes will consume.
pub fn stream_bytes_for(bytes: usize) -> usize {
    required_byte_count(bytes.div_ceil(BLOCK_LEN).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_args(key: &str) -> KeyArgs {
        KeyArgs {
            key: key.into(),
            allow_short_key: false,
        }
    }

    #[test]
    fn key_argument_rules() {
        assert!(key_args("000102030405060708090a0b0c0d0e0f").parse().is_ok());
        let short = "0123456789ABCDEFEDCBA9876543210";
        assert_eq!(key_args(short).parse().unwrap_err().exit_code(), 2);
        let lenient = KeyArgs {
            key: short.into(),
            allow_short_key: true,
        };
        assert_eq!(lenient.parse().unwrap().to_hex(), format!("0{short}"));
        assert_eq!(
            key_args(&"0".repeat(32)).parse().unwrap_err().exit_code(),
            2
        );
    }

    #[test]
    fn alpha_values() {
        assert_eq!(parse_alpha("0.01"), Ok(0.01));
        assert_eq!(parse_alpha("0.001"), Ok(0.001));
        assert!(parse_alpha("0.05").is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(ImageError::Unsupported("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(ContainerError::BadMagic).exit_code(), 5);
        assert_eq!(
            CliError::from(ContainerError::Io(std::io::Error::other("x"))).exit_code(),
            4
        );
        assert_eq!(CliError::Precondition("x".into()).exit_code(), 6);
    }

    #[test]
    fn battery_covers_every_channel() {
        let data = (0..64 * 64 * 3).map(|i: usize| (i * 7 % 251) as u8).collect();
        let img = ImageBuffer::new(64, 64, 3, data).unwrap();
        let entries = run_battery(&img, 0.01, 100, 1);
        // entropy + 3 correlations + spectral + tone, per channel
        assert_eq!(entries.len(), 18);
        assert!(entries.iter().all(|e| e.error.is_none()));
        assert_eq!(entries, run_battery(&img, 0.01, 100, 1));
    }

    #[test]
    fn battery_reports_unmet_preconditions() {
        let img = ImageBuffer::new(1, 1, 1, vec![5]).unwrap();
        let entries = run_battery(&img, 0.01, 100, 1);
        assert_eq!(entries.len(), 6);
        assert!(entries[0].error.is_none());
        assert!(entries[1..].iter().all(|e| e.error.is_some()));
    }

    #[test]
    fn stream_sizes() {
        assert_eq!(stream_bytes_for(512 * 512 * 3), 49_152 + 126);
        assert_eq!(stream_bytes_for(3), 127);
    }
}
