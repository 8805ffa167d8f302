//! Classical preamble- and data-pilot-aided channel estimators.
//!
//! All estimators take the full received frame (preamble columns first, then
//! data columns) plus an initial estimate `h0`, normally the LS estimate, and
//! return one estimate column per data symbol. Each symbol depends on the
//! previous one, so a frame is processed strictly in order.

mod interp;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;
use crate::phy::{Constellation, FrameSpec};

pub use interp::cubic_at;

/// Divisors smaller than this in magnitude are raised to it, keeping phase.
pub const EQUALIZATION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorId {
    Ls,
    Dpa,
    Sta,
    Cdp,
    Trfi,
    DpaTa,
    Tcn,
    TcnDpa,
    TcnDpaTa,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 9] = [
        EstimatorId::Ls,
        EstimatorId::Dpa,
        EstimatorId::Sta,
        EstimatorId::Cdp,
        EstimatorId::Trfi,
        EstimatorId::DpaTa,
        EstimatorId::Tcn,
        EstimatorId::TcnDpa,
        EstimatorId::TcnDpaTa,
    ];

    pub const CLASSICAL: [EstimatorId; 6] = [
        EstimatorId::Ls,
        EstimatorId::Dpa,
        EstimatorId::Sta,
        EstimatorId::Cdp,
        EstimatorId::Trfi,
        EstimatorId::DpaTa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorId::Ls => "ls",
            EstimatorId::Dpa => "dpa",
            EstimatorId::Sta => "sta",
            EstimatorId::Cdp => "cdp",
            EstimatorId::Trfi => "trfi",
            EstimatorId::DpaTa => "dpa-ta",
            EstimatorId::Tcn => "tcn",
            EstimatorId::TcnDpa => "tcn-dpa",
            EstimatorId::TcnDpaTa => "tcn-dpa-ta",
        }
    }

    /// Whether the estimator needs a trained network.
    pub fn needs_model(self) -> bool {
        matches!(self, EstimatorId::Tcn | EstimatorId::TcnDpa | EstimatorId::TcnDpaTa)
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator '{s}'")))
    }
}

/// Per-data-symbol channel estimate: one column per data symbol, one row per
/// active subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateGrid {
    pub grid: ComplexGrid,
    pub estimator: EstimatorId,
}

impl EstimateGrid {
    /// Repeats one estimate vector over `cols` symbols.
    pub fn constant(h: &[Complex64], cols: usize, estimator: EstimatorId) -> Self {
        Self {
            grid: ComplexGrid::from_fn(h.len(), cols, |r, _| h[r]),
            estimator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaConfig {
    /// Time-averaging weight; each new frequency-averaged estimate enters
    /// with weight `1 / alpha`.
    pub alpha: f64,
    /// Half-width of the frequency window (`2 beta + 1` subcarriers).
    pub beta: usize,
}

impl Default for StaConfig {
    fn default() -> Self {
        Self { alpha: 2.0, beta: 2 }
    }
}

impl StaConfig {
    pub fn validate(&self, spec: &FrameSpec) -> Result<()> {
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("STA alpha must be >= 1, got {}", self.alpha)));
        }
        if 2 * self.beta + 1 > spec.num_active() {
            return Err(Error::Config(format!(
                "STA window 2*{}+1 exceeds {} subcarriers",
                self.beta,
                spec.num_active()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaConfig {
    pub alpha: f64,
}

impl Default for TaConfig {
    fn default() -> Self {
        Self { alpha: 2.0 }
    }
}

impl TaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("TA alpha must be >= 1, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// `d` with its magnitude raised to at least [`EQUALIZATION_FLOOR`].
pub fn floor_divisor(d: Complex64) -> Complex64 {
    let mag = d.norm();
    if mag >= EQUALIZATION_FLOOR {
        d
    } else if mag > 0.0 {
        d * (EQUALIZATION_FLOOR / mag)
    } else {
        Complex64::new(EQUALIZATION_FLOOR, 0.0)
    }
}

/// Zero-forcing equalization `y / h` with the divisor floor applied.
pub fn equalize(y: Complex64, h: Complex64) -> Complex64 {
    y / floor_divisor(h)
}

/// LS estimate from the two received preambles: `(y1 + y2) / (2 p)`.
pub fn ls_estimate(y_p1: &[Complex64], y_p2: &[Complex64], spec: &FrameSpec) -> Result<Vec<Complex64>> {
    let n = spec.num_active();
    if y_p1.len() != n || y_p2.len() != n {
        return Err(Error::Shape(format!(
            "preambles must cover {n} subcarriers, got {} and {}",
            y_p1.len(),
            y_p2.len()
        )));
    }
    y_p1.iter()
        .zip(y_p2)
        .zip(&spec.preamble_values)
        .map(|((a, b), p)| {
            if *p == Complex64::default() {
                Err(Error::Config("preamble has an empty subcarrier".into()))
            } else {
                Ok((a + b) / (2.0 * p))
            }
        })
        .collect()
}

/// LS estimate read from the first two columns of a received frame.
pub fn ls_from_frame(rx: &ComplexGrid, spec: &FrameSpec) -> Result<Vec<Complex64>> {
    check_frame(rx, spec)?;
    ls_estimate(&rx.column(0), &rx.column(1), spec)
}

fn check_frame(rx: &ComplexGrid, spec: &FrameSpec) -> Result<()> {
    if spec.num_preambles < 2 {
        return Err(Error::Config("estimators need two preamble symbols".into()));
    }
    rx.check_shape(spec.num_active(), spec.num_symbols(), "received frame")
}

fn check_initial(h0: &[Complex64], spec: &FrameSpec) -> Result<()> {
    if h0.len() != spec.num_active() {
        return Err(Error::Shape(format!(
            "initial estimate has {} entries, expected {}",
            h0.len(),
            spec.num_active()
        )));
    }
    Ok(())
}

/// Hard decisions on one received column equalized by `h`: pilot rows carry
/// their known value, data rows the nearest constellation point.
pub(crate) fn decide(y: &[Complex64], h: &[Complex64], spec: &FrameSpec, c: &Constellation) -> Vec<Complex64> {
    let mut d: Vec<Complex64> = y
        .iter()
        .zip(h)
        .map(|(y, h)| c.point(c.slice(equalize(*y, *h))))
        .collect();
    for (&row, &p) in spec.pilot_rows().iter().zip(&spec.pilot_values) {
        d[row] = p;
    }
    d
}

/// One decision-directed step: `d = R(y / h_prev)`, `h = y / d`.
pub(crate) fn dpa_step(y: &[Complex64], prev: &[Complex64], spec: &FrameSpec, c: &Constellation) -> Vec<Complex64> {
    decide(y, prev, spec, c)
        .iter()
        .zip(y)
        .map(|(d, y)| y / d)
        .collect()
}

/// Decision-directed update driven by a fixed sequence of previous-symbol
/// estimates: column `i` of the output uses column `i - 1` of `reference`
/// (and `h0` for the first symbol).
pub(crate) fn dpa_with_reference(
    rx: &ComplexGrid,
    h0: &[Complex64],
    reference: &ComplexGrid,
    spec: &FrameSpec,
    c: &Constellation,
) -> ComplexGrid {
    let n = spec.num_data_symbols;
    let mut out = ComplexGrid::zeros(spec.num_active(), n);
    for i in 0..n {
        let prev = if i == 0 { h0.to_vec() } else { reference.column(i - 1) };
        let h = dpa_step(&rx.column(spec.num_preambles + i), &prev, spec, c);
        out.set_column(i, &h);
    }
    out
}

/// Data-pilot-aided estimate: each symbol is equalized with the previous
/// estimate, demapped, and divided by its own decisions.
pub fn dpa_estimate(rx: &ComplexGrid, h0: &[Complex64], spec: &FrameSpec, c: &Constellation) -> Result<EstimateGrid> {
    check_frame(rx, spec)?;
    check_initial(h0, spec)?;
    let mut out = ComplexGrid::zeros(spec.num_active(), spec.num_data_symbols);
    let mut prev = h0.to_vec();
    for i in 0..spec.num_data_symbols {
        prev = dpa_step(&rx.column(spec.num_preambles + i), &prev, spec, c);
        out.set_column(i, &prev);
    }
    Ok(EstimateGrid { grid: out, estimator: EstimatorId::Dpa })
}

/// Uniform moving average over `2 beta + 1` neighbouring subcarriers. At the
/// band edges the window is truncated and its weights renormalized.
pub fn frequency_average(h: &[Complex64], beta: usize) -> Vec<Complex64> {
    let n = h.len();
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(beta);
            let hi = (k + beta).min(n - 1);
            let sum: Complex64 = h[lo..=hi].iter().sum();
            sum / (hi - lo + 1) as f64
        })
        .collect()
}

/// `(1 - 1/alpha) prev + (1/alpha) new`, elementwise.
fn recursive_average(prev: &[Complex64], new: &[Complex64], alpha: f64) -> Vec<Complex64> {
    let w = 1.0 / alpha;
    prev.iter().zip(new).map(|(p, n)| p * (1.0 - w) + n * w).collect()
}

/// Spectral-temporal averaging: a DPA step on the running STA estimate, then
/// frequency averaging, then recursive time averaging.
pub fn sta_estimate(
    rx: &ComplexGrid,
    h0: &[Complex64],
    cfg: StaConfig,
    spec: &FrameSpec,
    c: &Constellation,
) -> Result<EstimateGrid> {
    check_frame(rx, spec)?;
    check_initial(h0, spec)?;
    cfg.validate(spec)?;
    let mut out = ComplexGrid::zeros(spec.num_active(), spec.num_data_symbols);
    let mut prev = h0.to_vec();
    for i in 0..spec.num_data_symbols {
        let dpa = dpa_step(&rx.column(spec.num_preambles + i), &prev, spec, c);
        let fd = frequency_average(&dpa, cfg.beta);
        prev = recursive_average(&prev, &fd, cfg.alpha);
        out.set_column(i, &prev);
    }
    Ok(EstimateGrid { grid: out, estimator: EstimatorId::Sta })
}

/// Reliability of each subcarrier for data symbol `i` (0-based): the previous
/// received symbol is equalized by the fresh DPA estimate and by the previous
/// output estimate; a data subcarrier is reliable when both demap to the same
/// point. Pilot subcarriers are always reliable. When the previous symbol is
/// the BPSK preamble it is demapped onto the preamble's own alphabet, since a
/// real +-1 sits on a quadrature decision boundary of the QAM grid.
fn reliability(
    i: usize,
    rx: &ComplexGrid,
    dpa: &[Complex64],
    prev: &[Complex64],
    spec: &FrameSpec,
    c: &Constellation,
) -> Vec<bool> {
    let y_prev = rx.column(spec.num_preambles + i - 1);
    let agree: fn(&Constellation, Complex64, Complex64) -> bool = if i == 0 {
        |_, a, b| (a.re >= 0.0) == (b.re >= 0.0)
    } else {
        |c, a, b| c.slice(a) == c.slice(b)
    };
    let mut reliable: Vec<bool> = y_prev
        .iter()
        .zip(dpa.iter().zip(prev))
        .map(|(y, (a, b))| agree(c, equalize(*y, *a), equalize(*y, *b)))
        .collect();
    for &row in spec.pilot_rows() {
        reliable[row] = true;
    }
    reliable
}

/// Constructed data pilots: keep the fresh DPA estimate where the previous
/// symbol demaps identically under both estimates, else hold the previous.
pub fn cdp_estimate(rx: &ComplexGrid, h0: &[Complex64], spec: &FrameSpec, c: &Constellation) -> Result<EstimateGrid> {
    check_frame(rx, spec)?;
    check_initial(h0, spec)?;
    let mut out = ComplexGrid::zeros(spec.num_active(), spec.num_data_symbols);
    let mut prev = h0.to_vec();
    for i in 0..spec.num_data_symbols {
        let col = spec.num_preambles + i;
        let dpa = dpa_step(&rx.column(col), &prev, spec, c);
        let reliable = reliability(i, rx, &dpa, &prev, spec, c);
        prev = prev
            .iter()
            .zip(&dpa)
            .zip(&reliable)
            .map(|((p, d), ok)| if *ok { *d } else { *p })
            .collect();
        out.set_column(i, &prev);
    }
    Ok(EstimateGrid { grid: out, estimator: EstimatorId::Cdp })
}

/// Fills the unreliable data subcarriers of `dpa` by cubic interpolation over
/// the reliable ones. With fewer than four reliable points `dpa` is returned.
pub fn interpolate_unreliable(dpa: &[Complex64], reliable: &[bool]) -> Vec<Complex64> {
    let known: Vec<usize> = (0..dpa.len()).filter(|&k| reliable[k]).collect();
    if known.len() < 4 {
        return dpa.to_vec();
    }
    let values: Vec<Complex64> = known.iter().map(|&k| dpa[k]).collect();
    (0..dpa.len())
        .map(|k| if reliable[k] { dpa[k] } else { cubic_at(&known, &values, k) })
        .collect()
}

/// Time-domain reliability test with frequency-domain interpolation.
pub fn trfi_estimate(rx: &ComplexGrid, h0: &[Complex64], spec: &FrameSpec, c: &Constellation) -> Result<EstimateGrid> {
    check_frame(rx, spec)?;
    check_initial(h0, spec)?;
    let mut out = ComplexGrid::zeros(spec.num_active(), spec.num_data_symbols);
    let mut prev = h0.to_vec();
    for i in 0..spec.num_data_symbols {
        let col = spec.num_preambles + i;
        let dpa = dpa_step(&rx.column(col), &prev, spec, c);
        let reliable = reliability(i, rx, &dpa, &prev, spec, c);
        prev = interpolate_unreliable(&dpa, &reliable);
        out.set_column(i, &prev);
    }
    Ok(EstimateGrid { grid: out, estimator: EstimatorId::Trfi })
}

/// Recursive temporal averaging over symbols, started from the first input
/// column. The estimator tag is carried through; DPA becomes DPA-TA and
/// TCN-DPA becomes TCN-DPA-TA.
pub fn ta_process(estimates: &EstimateGrid, cfg: TaConfig) -> Result<EstimateGrid> {
    cfg.validate()?;
    let g = &estimates.grid;
    let mut out = ComplexGrid::zeros(g.rows(), g.cols());
    if g.cols() > 0 {
        let mut prev = g.column(0);
        out.set_column(0, &prev);
        for i in 1..g.cols() {
            prev = recursive_average(&prev, &g.column(i), cfg.alpha);
            out.set_column(i, &prev);
        }
    }
    let estimator = match estimates.estimator {
        EstimatorId::Dpa => EstimatorId::DpaTa,
        EstimatorId::TcnDpa => EstimatorId::TcnDpaTa,
        other => other,
    };
    Ok(EstimateGrid { grid: out, estimator })
}
