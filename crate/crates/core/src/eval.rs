//! Bit error rate and NMSE metrics, multi-SNR sweeps over estimators, and
//! result files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, RngStream};
use crate::error::{Error, Result};
use crate::estimators::{
    cdp_estimate, dpa_estimate, equalize, ls_from_frame, sta_estimate, ta_process, trfi_estimate, EstimateGrid,
    EstimatorId, StaConfig, TaConfig,
};
use crate::grid::ComplexGrid;
use crate::link::simulate_frame;
use crate::phy::{Bit, Constellation, FrameSpec};
use crate::pipeline::TcnPipeline;

/// Reported NMSE when the estimate matches the truth exactly.
pub const NMSE_FLOOR_DB: f64 = -150.0;

/// Evaluation frames draw from stream ids at or above this offset, which
/// dataset generation (stream id = frame index) never reaches.
pub const EVAL_STREAM_OFFSET: u64 = 1 << 32;

/// Frames per SNR point are capped so stream ids of different points never
/// collide.
pub const MAX_FRAMES_PER_POINT: usize = 1 << 24;

pub const CSV_HEADER: &str = "snr_db,estimator,ber,nmse_db,frames,seed";

/// Fraction of differing bits.
pub fn compute_ber(tx: &[Bit], rx: &[Bit]) -> Result<f64> {
    if tx.len() != rx.len() || tx.is_empty() {
        return Err(Error::Shape(format!(
            "cannot compare {} transmitted with {} received bits",
            tx.len(),
            rx.len()
        )));
    }
    Ok(bit_errors(tx, rx) as f64 / tx.len() as f64)
}

fn bit_errors(tx: &[Bit], rx: &[Bit]) -> usize {
    tx.iter().zip(rx).filter(|(a, b)| a != b).count()
}

/// `sum |est - truth|^2 / sum |truth|^2` over all elements.
pub fn nmse_ratio(est: &ComplexGrid, truth: &ComplexGrid) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(Error::Shape(format!("estimate {:?} vs truth {:?}", est.shape(), truth.shape())));
    }
    let power: f64 = truth.values().iter().map(|h| h.norm_sqr()).sum();
    if power == 0.0 {
        return Err(Error::Domain("NMSE undefined for an all-zero channel".into()));
    }
    let err: f64 = est.values().iter().zip(truth.values()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(err / power)
}

/// Ratio in dB, clamped below at [`NMSE_FLOOR_DB`].
pub fn ratio_to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    } else {
        NMSE_FLOOR_DB
    }
}

/// NMSE in dB of a per-symbol estimate against the true data-symbol channel,
/// over data subcarriers only.
pub fn compute_nmse(est: &EstimateGrid, truth: &ComplexGrid, spec: &FrameSpec) -> Result<f64> {
    Ok(ratio_to_db(data_nmse_ratio(&est.grid, truth, spec)?))
}

fn data_nmse_ratio(est: &ComplexGrid, truth: &ComplexGrid, spec: &FrameSpec) -> Result<f64> {
    let shape = (spec.num_active(), spec.num_data_symbols);
    if est.shape() != shape || truth.shape() != shape {
        return Err(Error::Shape(format!(
            "expected {shape:?} grids, got {:?} and {:?}",
            est.shape(),
            truth.shape()
        )));
    }
    nmse_ratio(&est.select_rows(spec.data_rows()), &truth.select_rows(spec.data_rows()))
}

/// Zero-forcing equalization with the per-symbol estimate, then hard
/// demapping; bits come out in the order `assemble_frame` consumed them.
pub fn equalize_and_decode(rx: &ComplexGrid, est: &EstimateGrid, spec: &FrameSpec, c: &Constellation) -> Result<Vec<Bit>> {
    if rx.shape() != (spec.num_active(), spec.num_symbols()) {
        return Err(Error::Shape(format!("received frame is {:?}", rx.shape())));
    }
    if est.grid.shape() != (spec.num_active(), spec.num_data_symbols) {
        return Err(Error::Shape(format!("estimate is {:?}", est.grid.shape())));
    }
    let eq = ComplexGrid::from_fn(spec.num_active(), spec.num_data_symbols, |r, j| {
        equalize(rx[(r, spec.num_preambles + j)], est.grid[(r, j)])
    });
    c.demodulate(&spec.extract_data(&eq)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub snr_grid_db: Vec<f64>,
    pub estimators: Vec<EstimatorId>,
    pub frames_per_point: usize,
    pub seed: u64,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            snr_grid_db: (0..=8).map(|i| 5.0 * i as f64).collect(),
            estimators: EstimatorId::ALL.to_vec(),
            frames_per_point: 500,
            seed: 0,
        }
    }
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.snr_grid_db.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config("sweep needs at least one SNR and one estimator".into()));
        }
        if self.snr_grid_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("SNR grid contains NaN".into()));
        }
        if self.frames_per_point == 0 || self.frames_per_point > MAX_FRAMES_PER_POINT {
            return Err(Error::Config(format!(
                "frames per point must be in 1..={MAX_FRAMES_PER_POINT}"
            )));
        }
        Ok(())
    }

    /// Stream for frame `frame` of SNR point `point`.
    pub fn stream(&self, point: usize, frame: usize) -> RngStream {
        RngStream::new(
            self.seed,
            EVAL_STREAM_OFFSET + ((point as u64) << 24) + frame as u64,
        )
    }
}

/// Everything besides the plan that a sweep needs.
#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub spec: FrameSpec,
    pub constellation: Constellation,
    pub channel: ChannelModel,
    pub sta: StaConfig,
    pub ta: TaConfig,
    /// Required when any network-based estimator is requested.
    pub pipeline: Option<TcnPipeline>,
}

impl SweepSetup {
    pub fn new(channel: ChannelModel, pipeline: Option<TcnPipeline>) -> Self {
        Self {
            spec: FrameSpec::ieee80211p(),
            constellation: Constellation::qam16(),
            channel,
            sta: StaConfig::default(),
            ta: TaConfig::default(),
            pipeline,
        }
    }

    /// Runs estimator `id` on a received frame given its LS estimate.
    pub fn estimate(&self, id: EstimatorId, rx: &ComplexGrid, h_ls: &[Complex64]) -> Result<EstimateGrid> {
        let (spec, c) = (&self.spec, &self.constellation);
        match id {
            EstimatorId::Ls => Ok(EstimateGrid::constant(h_ls, spec.num_data_symbols, EstimatorId::Ls)),
            EstimatorId::Dpa => dpa_estimate(rx, h_ls, spec, c),
            EstimatorId::Sta => sta_estimate(rx, h_ls, self.sta, spec, c),
            EstimatorId::Cdp => cdp_estimate(rx, h_ls, spec, c),
            EstimatorId::Trfi => trfi_estimate(rx, h_ls, spec, c),
            EstimatorId::DpaTa => ta_process(&dpa_estimate(rx, h_ls, spec, c)?, self.ta),
            EstimatorId::Tcn | EstimatorId::TcnDpa | EstimatorId::TcnDpaTa => match &self.pipeline {
                Some(p) => p.estimate(id, rx, h_ls, spec, c),
                None => Err(missing_checkpoint(id)),
            },
        }
    }
}

fn missing_checkpoint(id: EstimatorId) -> Error {
    Error::Config(format!("estimator {id} needs a trained checkpoint"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub snr_db: f64,
    pub estimator: EstimatorId,
    pub ber: f64,
    pub nmse_db: f64,
    pub frames: usize,
    pub seed: u64,
}

/// Per-frame outcome for every estimator of the plan.
struct FrameScore {
    errors: Vec<usize>,
    nmse: Vec<f64>,
    bits: usize,
}

/// Monte-Carlo sweep. At each SNR point every estimator sees the same
/// frames. BER pools bit errors over all frames; NMSE is computed per frame
/// (linear, data subcarriers and data symbols) and averaged over frames
/// before conversion to dB. Records are ordered by estimator, then SNR.
pub fn run_sweep(plan: &SweepPlan, setup: &SweepSetup) -> Result<Vec<EvalRecord>> {
    plan.validate()?;
    if setup.pipeline.is_none() {
        if let Some(id) = plan.estimators.iter().find(|e| e.needs_model()) {
            return Err(missing_checkpoint(*id));
        }
    }
    let spec = &setup.spec;
    let c = &setup.constellation;
    let n_est = plan.estimators.len();
    let mut by_point = Vec::with_capacity(plan.snr_grid_db.len());
    for (p, &snr) in plan.snr_grid_db.iter().enumerate() {
        let scores: Vec<FrameScore> = (0..plan.frames_per_point)
            .into_par_iter()
            .map(|f| {
                let frame = simulate_frame(spec, c, &setup.channel, snr, plan.stream(p, f))?;
                let h_ls = ls_from_frame(&frame.rx, spec)?;
                let truth = frame.data_channel(spec);
                let mut score = FrameScore {
                    errors: Vec::with_capacity(n_est),
                    nmse: Vec::with_capacity(n_est),
                    bits: frame.bits.len(),
                };
                for &id in &plan.estimators {
                    let est = setup.estimate(id, &frame.rx, &h_ls)?;
                    let bits = equalize_and_decode(&frame.rx, &est, spec, c)?;
                    score.errors.push(bit_errors(&frame.bits, &bits));
                    score.nmse.push(data_nmse_ratio(&est.grid, &truth, spec)?);
                }
                Ok(score)
            })
            .collect::<Result<_>>()?;
        log::info!("swept {snr} dB ({} frames)", scores.len());
        by_point.push(scores);
    }

    let mut records = Vec::with_capacity(n_est * plan.snr_grid_db.len());
    for (e, &id) in plan.estimators.iter().enumerate() {
        for (p, &snr) in plan.snr_grid_db.iter().enumerate() {
            let scores = &by_point[p];
            let errors: usize = scores.iter().map(|s| s.errors[e]).sum();
            let bits: usize = scores.iter().map(|s| s.bits).sum();
            let nmse = scores.iter().map(|s| s.nmse[e]).sum::<f64>() / scores.len() as f64;
            records.push(EvalRecord {
                snr_db: snr,
                estimator: id,
                ber: errors as f64 / bits as f64,
                nmse_db: ratio_to_db(nmse),
                frames: scores.len(),
                seed: plan.seed,
            });
        }
    }
    Ok(records)
}

/// `%g`-style formatting with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

pub fn records_to_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            format_sig6(r.snr_db),
            r.estimator,
            format_sig6(r.ber),
            format_sig6(r.nmse_db),
            r.frames,
            r.seed
        )
        .expect("writing to a string");
    }
    out
}

pub fn write_csv(records: &[EvalRecord], path: &Path) -> Result<()> {
    fs::write(path, records_to_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<EvalRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::format(origin, "missing or unexpected CSV header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = |what: &str| Error::format(origin, format!("line {}: bad {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("field count"));
            }
            Ok(EvalRecord {
                snr_db: f[0].parse().map_err(|_| bad("snr_db"))?,
                estimator: f[1].parse().map_err(|_| bad("estimator"))?,
                ber: f[2].parse().map_err(|_| bad("ber"))?,
                nmse_db: f[3].parse().map_err(|_| bad("nmse_db"))?,
                frames: f[4].parse().map_err(|_| bad("frames"))?,
                seed: f[5].parse().map_err(|_| bad("seed"))?,
            })
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

/// Writes `<estimator>.dat` per estimator into `dir`: whitespace-separated
/// `snr_db ber nmse_db` rows sorted by SNR, readable by gnuplot.
pub fn write_plot_data(records: &[EvalRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids: Vec<EstimatorId> = Vec::new();
    for r in records {
        if !ids.contains(&r.estimator) {
            ids.push(r.estimator);
        }
    }
    let mut paths = Vec::with_capacity(ids.len());
    for id in ids {
        let mut rows: Vec<&EvalRecord> = records.iter().filter(|r| r.estimator == id).collect();
        rows.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
        let mut text = format!("# {id}\n# snr_db ber nmse_db\n");
        for r in rows {
            writeln!(text, "{} {} {}", format_sig6(r.snr_db), format_sig6(r.ber), format_sig6(r.nmse_db))
                .expect("writing to a string");
        }
        let path = dir.join(format!("{id}.dat"));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
