//! Doubly selective tapped-delay-line channel in the frequency domain.
//!
//! Every tap fades as an independent complex Gaussian process with a Jakes
//! Doppler spectrum, synthesized as a sum of sinusoids. The channel seen by
//! active subcarrier `k` at symbol `i` is
//! `h_i[k] = sum_l a_l(i * T) * exp(-j 2 pi k df tau_l)`, and the receiver
//! observes `y = h * x + n` element by element.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;
use crate::phy::FrameSpec;

/// Sinusoids per tap in the Doppler synthesis.
pub const SINUSOIDS_PER_TAP: usize = 32;

const DEFAULT_PROFILE: &str = include_str!("../profiles/vtv_sdww_illustrative.toml");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay_s: f64,
    /// Mean-square gain (linear).
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub name: String,
    pub taps: Vec<Tap>,
    pub doppler_hz: f64,
    pub symbol_duration_s: f64,
    pub subcarrier_spacing_hz: f64,
    /// Informational; the fading rate is set by `doppler_hz`.
    pub velocity_kmh: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    name: String,
    doppler_hz: f64,
    #[serde(default = "default_velocity")]
    velocity_kmh: f64,
    #[serde(default = "default_symbol_duration")]
    symbol_duration_s: f64,
    #[serde(default = "default_spacing")]
    subcarrier_spacing_hz: f64,
    taps: Vec<ProfileTap>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileTap {
    delay_ns: f64,
    power_db: f64,
}

fn default_velocity() -> f64 {
    100.0
}

fn default_symbol_duration() -> f64 {
    8e-6
}

fn default_spacing() -> f64 {
    10e6 / 64.0
}

impl ChannelModel {
    /// Validates a model. Tap powers must already sum to one.
    pub fn new(
        name: impl Into<String>,
        taps: Vec<Tap>,
        doppler_hz: f64,
        symbol_duration_s: f64,
        subcarrier_spacing_hz: f64,
        velocity_kmh: f64,
    ) -> Result<Self> {
        let model = Self {
            name: name.into(),
            taps,
            doppler_hz,
            symbol_duration_s,
            subcarrier_spacing_hz,
            velocity_kmh,
        };
        model.validate()?;
        Ok(model)
    }

    /// The bundled 12-tap profile at 550 Hz Doppler.
    pub fn vtv_sdww_illustrative() -> Self {
        Self::from_profile_str(DEFAULT_PROFILE).expect("bundled profile is valid")
    }

    /// Parses a TOML tap profile (`delay_ns`, `power_db` per tap) and
    /// normalizes tap powers to unit sum.
    pub fn from_profile_str(text: &str) -> Result<Self> {
        let file: ProfileFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("tap profile: {e}")))?;
        let linear: Vec<f64> = file
            .taps
            .iter()
            .map(|t| 10f64.powf(t.power_db / 10.0))
            .collect();
        let total: f64 = linear.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Config("tap profile has no power".into()));
        }
        let taps = file
            .taps
            .iter()
            .zip(&linear)
            .map(|(t, p)| Tap {
                delay_s: t.delay_ns * 1e-9,
                power: p / total,
            })
            .collect();
        Self::new(
            file.name,
            taps,
            file.doppler_hz,
            file.symbol_duration_s,
            file.subcarrier_spacing_hz,
            file.velocity_kmh,
        )
    }

    pub fn load_profile(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_profile_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::Config("channel model needs at least one tap".into()));
        }
        let total: f64 = self.taps.iter().map(|t| t.power).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("tap powers sum to {total}, expected 1")));
        }
        if self.taps.iter().any(|t| !t.power.is_finite() || t.power < 0.0) {
            return Err(Error::Config("tap powers must be nonnegative".into()));
        }
        if self.taps[0].delay_s < 0.0 {
            return Err(Error::Config("tap delays must be nonnegative".into()));
        }
        if self.taps.windows(2).any(|w| w[1].delay_s <= w[0].delay_s) {
            return Err(Error::Config("tap delays must be strictly increasing".into()));
        }
        if !(self.doppler_hz >= 0.0 && self.doppler_hz.is_finite()) {
            return Err(Error::Config(format!("invalid Doppler {}", self.doppler_hz)));
        }
        if !(self.symbol_duration_s > 0.0 && self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::Config(
                "symbol duration and subcarrier spacing must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Draws one fading realization for every tap.
    pub fn realize(&self, rng: &mut impl Rng) -> ChannelRealization {
        let taps = self
            .taps
            .iter()
            .map(|tap| TapFading::draw(tap.power, self.doppler_hz, rng))
            .collect();
        ChannelRealization { taps }
    }

    /// `exp(-j 2 pi k df tau_l)` for every (subcarrier, tap) pair, row-major by
    /// subcarrier.
    fn steering(&self, subcarriers: &[i32]) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(subcarriers.len() * self.taps.len());
        for &k in subcarriers {
            for tap in &self.taps {
                let phase = -TAU * f64::from(k) * self.subcarrier_spacing_hz * tap.delay_s;
                out.push(Complex64::from_polar(1.0, phase));
            }
        }
        out
    }
}

/// Sum-of-sinusoids realization of one tap:
/// `a(t) = sqrt(P / N) * sum_n exp(j (2 pi f_d cos(alpha_n) t + phi_n))` with
/// `alpha_n = (2 pi n + theta) / N`. Over the random `theta` and `phi_n` the
/// process has mean-square gain `P` and autocorrelation `P J0(2 pi f_d dt)`.
#[derive(Debug, Clone)]
pub struct TapFading {
    amplitude: f64,
    /// Angular Doppler frequency of each sinusoid, rad/s.
    omegas: Vec<f64>,
    phases: Vec<f64>,
}

impl TapFading {
    fn draw(power: f64, doppler_hz: f64, rng: &mut impl Rng) -> Self {
        let n = SINUSOIDS_PER_TAP as f64;
        let theta: f64 = rng.random_range(-PI..PI);
        let omegas = (0..SINUSOIDS_PER_TAP)
            .map(|i| TAU * doppler_hz * ((TAU * i as f64 + theta) / n).cos())
            .collect();
        let phases = (0..SINUSOIDS_PER_TAP)
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        Self {
            amplitude: (power / n).sqrt(),
            omegas,
            phases,
        }
    }

    pub fn gain_at(&self, t: f64) -> Complex64 {
        let sum: Complex64 = self
            .omegas
            .iter()
            .zip(&self.phases)
            .map(|(w, p)| Complex64::from_polar(1.0, w * t + p))
            .sum();
        sum * self.amplitude
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    taps: Vec<TapFading>,
}

impl ChannelRealization {
    pub fn taps(&self) -> &[TapFading] {
        &self.taps
    }

    /// Complex gain of every tap at time `t`.
    pub fn tap_gains(&self, t: f64) -> Vec<Complex64> {
        self.taps.iter().map(|tap| tap.gain_at(t)).collect()
    }
}

/// Frequency response at the given subcarriers for a frozen set of tap gains.
pub fn frequency_response(model: &ChannelModel, gains: &[Complex64], subcarriers: &[i32]) -> Vec<Complex64> {
    let steering = model.steering(subcarriers);
    let n_taps = model.taps.len();
    steering
        .chunks(n_taps)
        .map(|row| row.iter().zip(gains).map(|(s, g)| s * g).sum())
        .collect()
}

/// Deterministic random stream keyed by a global seed and a per-frame id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

/// Independent sub-streams drawn for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Bits,
    Fading,
    Noise,
    Other(u64),
}

impl StreamPurpose {
    fn salt(self) -> u64 {
        match self {
            StreamPurpose::Bits => 0x6269_7473,
            StreamPurpose::Fading => 0x6661_6465,
            StreamPurpose::Noise => 0x6e6f_6973,
            StreamPurpose::Other(x) => x.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x6f74_6872,
        }
    }
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self, purpose: StreamPurpose) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ purpose.salt());
        rng.set_stream(self.stream_id);
        rng
    }
}

/// True channel `h_i[k]` for every active subcarrier and every symbol of a
/// frame, preambles included.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResponse {
    pub grid: ComplexGrid,
}

/// Samples the tap processes at `t_i = i * T` for every frame symbol and maps
/// them onto the active subcarriers.
pub fn generate_response(model: &ChannelModel, spec: &FrameSpec, stream: RngStream) -> ChannelResponse {
    let mut rng = stream.rng(StreamPurpose::Fading);
    let realization = model.realize(&mut rng);
    let steering = model.steering(&spec.active_subcarriers);
    let n_taps = model.taps.len();
    let n_sym = spec.num_symbols();
    let mut grid = ComplexGrid::zeros(spec.num_active(), n_sym);
    for i in 0..n_sym {
        let gains = realization.tap_gains(i as f64 * model.symbol_duration_s);
        for (row, s) in steering.chunks(n_taps).enumerate() {
            grid[(row, i)] = s.iter().zip(&gains).map(|(s, g)| s * g).sum();
        }
    }
    ChannelResponse { grid }
}

/// Noise variance for a per-subcarrier SNR in dB with unit symbol energy.
/// An infinite SNR disables noise.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// Circularly symmetric complex Gaussian samples of the given variance.
pub fn awgn(rows: usize, cols: usize, variance: f64, rng: &mut impl Rng) -> ComplexGrid {
    let scale = (variance / 2.0).sqrt();
    ComplexGrid::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

/// `y = h * x + n`, elementwise, with `n` drawn for `snr_db`.
/// `f64::INFINITY` turns noise off.
pub fn apply_channel(
    frame: &ComplexGrid,
    response: &ChannelResponse,
    snr_db: f64,
    stream: RngStream,
) -> Result<ComplexGrid> {
    if frame.shape() != response.grid.shape() {
        return Err(Error::Shape(format!(
            "frame is {:?} but channel response is {:?}",
            frame.shape(),
            response.grid.shape()
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::Domain("SNR is NaN".into()));
    }
    let (rows, cols) = frame.shape();
    let faded = ComplexGrid::from_fn(rows, cols, |r, c| response.grid[(r, c)] * frame[(r, c)]);
    let variance = noise_variance(snr_db);
    if variance == 0.0 {
        return Ok(faded);
    }
    let noise = awgn(rows, cols, variance, &mut stream.rng(StreamPurpose::Noise));
    Ok(ComplexGrid::from_fn(rows, cols, |r, c| faded[(r, c)] + noise[(r, c)]))
}
