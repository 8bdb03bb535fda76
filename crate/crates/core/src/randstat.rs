//! Randomness battery for cipher images: adjacent-pixel correlation,
//! per-channel entropy, the DFT spectral test on channel bit strings, the
//! 255-degree chi-square tone test, and key-sensitivity correlation.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::imageio::{CipherContainer, ImageBuffer};

/// Pairs drawn per correlation estimate unless configured otherwise.
pub const DEFAULT_SAMPLES: usize = 3000;
/// Degrees of freedom of the tone test: 256 bins less one.
pub const TONE_DOF: f64 = 255.0;
/// Normal-approximation standard deviation of the tone statistic, `sqrt(2 * 255)`
/// as printed to four decimals.
pub const TONE_SIGMA: f64 = 22.5831;
/// Minimum histogram total for the tone test (ten expected per bin).
pub const TONE_MIN_TOTAL: u64 = 2560;
/// Minimum bit-string length for the spectral test.
pub const SPECTRAL_MIN_BITS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("image of {width}x{height} has no {direction} neighbour")]
    NoNeighbour {
        width: usize,
        height: usize,
        direction: Direction,
    },
    #[error("channel {channel} does not exist in a {channels}-channel image")]
    ChannelMismatch { channel: Channel, channels: usize },
    #[error("sample count must be positive")]
    NoSamples,
    #[error("correlation is undefined: a coordinate has zero variance")]
    ZeroVariance,
    #[error("correlation needs at least two pairs, got {0}")]
    TooFewPairs(usize),
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("tone test needs at least {TONE_MIN_TOTAL} samples, got {0}")]
    TooFewTones(u64),
    #[error("spectral test needs at least {SPECTRAL_MIN_BITS} bits, got {0}")]
    TooFewBits(usize),
    #[error("cipher images differ in shape: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Horizontal,
    Vertical,
    Diagonal,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Horizontal, Direction::Vertical, Direction::Diagonal];

    /// Column and row step to the neighbour.
    pub fn offset(self) -> (usize, usize) {
        match self {
            Direction::Horizontal => (1, 0),
            Direction::Vertical => (0, 1),
            Direction::Diagonal => (1, 1),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Horizontal => "horizontal",
            Direction::Vertical => "vertical",
            Direction::Diagonal => "diagonal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Red,
    Green,
    Blue,
    Gray,
}

impl Channel {
    /// Channels present in an image with `channels` samples per pixel.
    pub fn all_for(channels: usize) -> &'static [Channel] {
        if channels == 3 {
            &[Channel::Red, Channel::Green, Channel::Blue]
        } else {
            &[Channel::Gray]
        }
    }

    fn index_in(self, channels: usize) -> Result<usize, StatError> {
        match (self, channels) {
            (Channel::Gray, 1) => Ok(0),
            (Channel::Red, 3) => Ok(0),
            (Channel::Green, 3) => Ok(1),
            (Channel::Blue, 3) => Ok(2),
            _ => Err(StatError::ChannelMismatch {
                channel: self,
                channels,
            }),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Red => "red",
            Channel::Green => "green",
            Channel::Blue => "blue",
            Channel::Gray => "gray",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accepted,
    Rejected,
}

impl Decision {
    pub fn at(p_value: f64, alpha: f64) -> Self {
        if p_value >= alpha {
            Decision::Accepted
        } else {
            Decision::Rejected
        }
    }
}

/// One test outcome. For P-value tests `decision` is `Accepted` exactly
/// when `p_value >= alpha`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub test: &'static str,
    pub channel: Option<Channel>,
    pub direction: Option<Direction>,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub alpha: Option<f64>,
    pub decision: Option<Decision>,
    /// Chi-square tone test only: the exact chi-square(255) upper tail,
    /// reported next to the normal-approximation P-value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_p_value: Option<f64>,
}

impl TestReport {
    /// A descriptive value with no hypothesis attached.
    pub fn measurement(test: &'static str, statistic: f64) -> Self {
        Self::measure(test, None, statistic)
    }

    fn measure(test: &'static str, channel: Option<Channel>, statistic: f64) -> Self {
        Self {
            test,
            channel,
            direction: None,
            statistic,
            p_value: None,
            alpha: None,
            decision: None,
            exact_p_value: None,
        }
    }

    fn hypothesis(test: &'static str, statistic: f64, p_value: f64, alpha: f64) -> Self {
        Self {
            p_value: Some(p_value),
            alpha: Some(alpha),
            decision: Some(Decision::at(p_value, alpha)),
            ..Self::measure(test, None, statistic)
        }
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.channel = Some(channel);
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = Some(direction);
        self
    }

    pub fn accepted(&self) -> bool {
        self.decision == Some(Decision::Accepted)
    }
}

// ---------------------------------------------------------------------------
// Correlation

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSample {
    pub direction: Direction,
    pub channel: Channel,
    pub pairs: Vec<(u8, u8)>,
    pub seed: u64,
}

impl PairSample {
    pub fn count(&self) -> usize {
        self.pairs.len()
    }
}

/// Draws `count` base pixels uniformly among those that have a neighbour in
/// `direction` and pairs each with that neighbour. Base positions depend
/// only on the image shape, direction, count and seed, so the three colour
/// channels of one draw share positions.
pub fn sample_adjacent_pairs(
    img: &ImageBuffer,
    direction: Direction,
    channel: Channel,
    count: usize,
    seed: u64,
) -> Result<PairSample, StatError> {
    let c = channel.index_in(img.channels())?;
    if count == 0 {
        return Err(StatError::NoSamples);
    }
    let (dx, dy) = direction.offset();
    let (w, h) = (img.width(), img.height());
    if w <= dx || h <= dy {
        return Err(StatError::NoNeighbour {
            width: w,
            height: h,
            direction,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..count)
        .map(|_| {
            let x = rng.gen_range(0..w - dx);
            let y = rng.gen_range(0..h - dy);
            (img.sample(x, y, c), img.sample(x + dx, y + dy, c))
        })
        .collect();
    Ok(PairSample {
        direction,
        channel,
        pairs,
        seed,
    })
}

/// Pearson correlation with `1/M` normalised moments.
pub fn pearson(pairs: impl IntoIterator<Item = (f64, f64)> + Clone) -> Result<f64, StatError> {
    let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
    for (x, y) in pairs.clone() {
        n += 1;
        sx += x;
        sy += y;
    }
    if n < 2 {
        return Err(StatError::TooFewPairs(n));
    }
    let m = n as f64;
    let (mx, my) = (sx / m, sy / m);
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let (a, b) = (x - mx, y - my);
        cov += a * b;
        vx += a * a;
        vy += b * b;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(StatError::ZeroVariance);
    }
    let r = (cov / m) / ((vx / m) * (vy / m)).sqrt();
    Ok(r.clamp(-1.0, 1.0))
}

pub fn correlation(s: &PairSample) -> Result<f64, StatError> {
    pearson(s.pairs.iter().map(|&(x, y)| (x as f64, y as f64)))
}

// ---------------------------------------------------------------------------
// Histograms and entropy

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToneHistogram {
    pub channel: Channel,
    pub bins: [u64; 256],
    pub total: u64,
}

impl ToneHistogram {
    pub fn from_samples(channel: Channel, samples: impl IntoIterator<Item = u8>) -> Self {
        let mut bins = [0u64; 256];
        for s in samples {
            bins[s as usize] += 1;
        }
        Self::from_bins(channel, bins)
    }

    pub fn from_bins(channel: Channel, bins: [u64; 256]) -> Self {
        Self {
            channel,
            bins,
            total: bins.iter().sum(),
        }
    }

    pub fn from_image(img: &ImageBuffer, channel: Channel) -> Result<Self, StatError> {
        let c = channel.index_in(img.channels())?;
        Ok(Self::from_samples(
            channel,
            img.data().iter().skip(c).step_by(img.channels()).copied(),
        ))
    }
}

/// Shannon entropy in bits of the tone distribution, in `[0, 8]`.
pub fn entropy(h: &ToneHistogram) -> Result<f64, StatError> {
    if h.total == 0 {
        return Err(StatError::EmptyHistogram);
    }
    let total = h.total as f64;
    let sum: f64 = h
        .bins
        .iter()
        .filter(|&&f| f > 0)
        .map(|&f| {
            let p = f as f64 / total;
            -p * p.log2()
        })
        .sum();
    Ok(sum.clamp(0.0, 8.0))
}

// ---------------------------------------------------------------------------
// Normal distribution and erfc

/// Complementary error function.
pub fn erfc(z: f64) -> f64 {
    libm::erfc(z)
}

/// Standard normal CDF from the series
/// `Phi(x) = 1/2 + phi(x) * (x + x^3/3 + x^5/(3*5) + ...)`, with the
/// asymptotic tail expansion beyond `|x| > 10` where the series terms
/// would overflow.
pub fn phi(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z.abs() > 10.0 {
        let tail = upper_tail_asymptotic(z.abs());
        return if z > 0.0 { 1.0 - tail } else { tail };
    }
    let density = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    let mut k = 1.0;
    while term.abs() > sum.abs() * 1e-17 {
        k += 2.0;
        term *= z2 / k;
        sum += term;
    }
    (0.5 + density * sum).clamp(0.0, 1.0)
}

fn upper_tail_asymptotic(x: f64) -> f64 {
    let density = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let inv2 = 1.0 / (x * x);
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * inv2;
        series += term;
    }
    density / x * series
}

// ---------------------------------------------------------------------------
// Spectral (DFT) test

/// Bits of `bytes`, most significant first.
pub fn bits_msb_first(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
        .collect()
}

/// Count of `|f_j| < h` over `j = 1 .. n/2 - 1`, and the threshold `h`.
fn spectral_counts(bits: &[bool]) -> (usize, f64) {
    let n = bits.len();
    let mut buf: Vec<Complex<f64>> = bits
        .iter()
        .map(|&b| Complex::new(if b { 1.0 } else { -1.0 }, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let threshold = ((1.0f64 / 0.05).ln() * n as f64).sqrt();
    let below = buf[1..n / 2].iter().filter(|f| f.norm() < threshold).count();
    (below, threshold)
}

/// Discrete Fourier transform test on a bit string. An odd final bit is
/// dropped. The statistic reported is `d`.
pub fn spectral_dft_test(bits: &[bool], alpha: f64) -> Result<TestReport, StatError> {
    let n = bits.len() & !1;
    if n < SPECTRAL_MIN_BITS {
        return Err(StatError::TooFewBits(bits.len()));
    }
    let (n1, _) = spectral_counts(&bits[..n]);
    let nf = n as f64;
    let n0 = 0.95 * nf / 2.0;
    let d = (n1 as f64 - n0) / (nf * 0.95 * 0.05 / 4.0).sqrt();
    let p_value = erfc(d.abs() / SQRT_2);
    Ok(TestReport::hypothesis("spectral_dft", d, p_value, alpha))
}

// ---------------------------------------------------------------------------
// Chi-square tone test

fn tone_statistic(h: &ToneHistogram) -> f64 {
    let expected = h.total as f64 / 256.0;
    h.bins
        .iter()
        .map(|&o| {
            let diff = o as f64 - expected;
            diff * diff / expected
        })
        .sum()
}

/// Right-tail probability of the tone statistic under the normal
/// approximation with mean 255 and standard deviation 22.5831.
pub fn tone_p_value(chi2: f64) -> f64 {
    1.0 - phi((chi2 - TONE_DOF) / TONE_SIGMA)
}

pub fn chi_square_tone_test(h: &ToneHistogram, alpha: f64) -> Result<TestReport, StatError> {
    if h.total < TONE_MIN_TOTAL {
        return Err(StatError::TooFewTones(h.total));
    }
    let chi2 = tone_statistic(h);
    let exact = ChiSquared::new(TONE_DOF).expect("positive dof").sf(chi2);
    let mut report = TestReport::hypothesis("chi_square_tone", chi2, tone_p_value(chi2), alpha)
        .with_channel(h.channel);
    report.exact_p_value = Some(exact);
    Ok(report)
}

/// The tone statistic of each plaintext channel, as a difficulty score:
/// larger means a more ordered image.
pub fn plaintext_selection_score(img: &ImageBuffer) -> Vec<(Channel, f64)> {
    Channel::all_for(img.channels())
        .iter()
        .map(|&ch| {
            let h = ToneHistogram::from_image(img, ch).expect("channel matches image");
            let score = if h.total == 0 { 0.0 } else { tone_statistic(&h) };
            (ch, score)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Key sensitivity

/// Correlates two cipher images at the same `count` random pixel positions,
/// separately per colour channel of their cipher views.
pub fn sensitivity_correlation(
    c1: &CipherContainer,
    c2: &CipherContainer,
    count: usize,
    seed: u64,
) -> Result<Vec<(Channel, f64)>, StatError> {
    let shape = |c: &CipherContainer| (c.width, c.height, c.channels, c.payload.len());
    if shape(c1) != shape(c2) {
        return Err(StatError::ShapeMismatch(format!("{:?} vs {:?}", shape(c1), shape(c2))));
    }
    if count == 0 {
        return Err(StatError::NoSamples);
    }
    let (v1, v2) = (c1.cipher_view(), c2.cipher_view());
    let pixels = v1.pixel_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions: Vec<usize> = (0..count).map(|_| rng.gen_range(0..pixels)).collect();
    Channel::all_for(3)
        .iter()
        .enumerate()
        .map(|(c, &ch)| {
            let pairs = positions
                .iter()
                .map(|&p| (v1.data()[3 * p + c] as f64, v2.data()[3 * p + c] as f64));
            pearson(pairs).map(|r| (ch, r))
        })
        .collect()
}
