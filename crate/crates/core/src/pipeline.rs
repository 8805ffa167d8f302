//! TCN-aided estimators: the network refines a whole DPA grid at once, then a
//! single decision-directed pass re-derives the estimates from the refined
//! grid, optionally followed by temporal averaging.

use std::path::PathBuf;

use num_complex::Complex64;

use crate::dataset::interleave;
use crate::error::{Error, Result};
use crate::estimators::{dpa_estimate, dpa_with_reference, ta_process, EstimateGrid, EstimatorId, TaConfig};
use crate::grid::ComplexGrid;
use crate::phy::{Constellation, FrameSpec};
use crate::tcn::{load_checkpoint, TcnModel};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub model_checkpoint: PathBuf,
    pub ta: Option<TaConfig>,
    /// One of `tcn`, `tcn-dpa`, `tcn-dpa-ta`.
    pub estimator: EstimatorId,
}

/// A loaded network plus the averaging settings for TCN-DPA-TA.
#[derive(Debug, Clone)]
pub struct TcnPipeline {
    pub model: TcnModel<f32>,
    pub ta: TaConfig,
}

impl TcnPipeline {
    pub fn new(model: TcnModel<f32>, ta: TaConfig) -> Self {
        Self { model, ta }
    }

    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        if !cfg.estimator.needs_model() {
            return Err(Error::Config(format!("{} does not use a network", cfg.estimator)));
        }
        let model = load_checkpoint(&cfg.model_checkpoint)?;
        Ok(Self::new(model, cfg.ta.unwrap_or_default()))
    }

    /// Runs one of the network-based estimators on a received frame.
    pub fn estimate(
        &self,
        id: EstimatorId,
        rx: &ComplexGrid,
        h_ls: &[Complex64],
        spec: &FrameSpec,
        c: &Constellation,
    ) -> Result<EstimateGrid> {
        match id {
            EstimatorId::Tcn => tcn_baseline_estimate(rx, h_ls, &self.model, spec, c),
            EstimatorId::TcnDpa => tcn_dpa_estimate(rx, h_ls, &self.model, spec, c),
            EstimatorId::TcnDpaTa => tcn_dpa_ta_estimate(rx, h_ls, &self.model, spec, c, self.ta),
            other => Err(Error::Config(format!("{other} is not a network estimator"))),
        }
    }
}

fn check_model(model: &TcnModel<f32>, spec: &FrameSpec) -> Result<()> {
    let width = 2 * spec.num_data_symbols;
    if model.config.input_channels != width || model.config.output_channels != width {
        return Err(Error::Shape(format!(
            "network maps {} -> {} channels, frame needs {width} -> {width}",
            model.config.input_channels, model.config.output_channels
        )));
    }
    Ok(())
}

/// Passes a DPA grid through the network. Data rows come from the network
/// output; pilot rows are copied from the input.
pub fn tcn_refine(dpa: &EstimateGrid, model: &TcnModel<f32>, spec: &FrameSpec) -> Result<EstimateGrid> {
    check_model(model, spec)?;
    let shape = (spec.num_active(), spec.num_data_symbols);
    if dpa.grid.shape() != shape {
        return Err(Error::Shape(format!("DPA grid is {:?}, expected {shape:?}", dpa.grid.shape())));
    }
    let out = model.forward(&interleave(&dpa.grid).to_signal())?;
    let mut grid = dpa.grid.clone();
    for &row in spec.data_rows() {
        for j in 0..spec.num_data_symbols {
            grid[(row, j)] = Complex64::new(out.get(2 * j, row) as f64, out.get(2 * j + 1, row) as f64);
        }
    }
    Ok(EstimateGrid {
        grid,
        estimator: EstimatorId::Tcn,
    })
}

/// Final decision-directed pass over a refined grid: symbol `i` is equalized
/// with refined column `i - 1`, and the first symbol with refined column 0.
pub fn dpa_from_refined(
    rx: &ComplexGrid,
    refined: &ComplexGrid,
    spec: &FrameSpec,
    c: &Constellation,
) -> Result<EstimateGrid> {
    let shape = (spec.num_active(), spec.num_data_symbols);
    if refined.shape() != shape {
        return Err(Error::Shape(format!("refined grid is {:?}, expected {shape:?}", refined.shape())));
    }
    if rx.shape() != (spec.num_active(), spec.num_symbols()) {
        return Err(Error::Shape(format!("received frame is {:?}", rx.shape())));
    }
    let h0 = refined.column(0);
    Ok(EstimateGrid {
        grid: dpa_with_reference(rx, &h0, refined, spec, c),
        estimator: EstimatorId::TcnDpa,
    })
}

/// DPA, network refinement, then one decision-directed pass over the
/// refined estimates.
pub fn tcn_dpa_estimate(
    rx: &ComplexGrid,
    h_ls: &[Complex64],
    model: &TcnModel<f32>,
    spec: &FrameSpec,
    c: &Constellation,
) -> Result<EstimateGrid> {
    let dpa = dpa_estimate(rx, h_ls, spec, c)?;
    let refined = tcn_refine(&dpa, model, spec)?;
    dpa_from_refined(rx, &refined.grid, spec, c)
}

pub fn tcn_dpa_ta_estimate(
    rx: &ComplexGrid,
    h_ls: &[Complex64],
    model: &TcnModel<f32>,
    spec: &FrameSpec,
    c: &Constellation,
    ta: TaConfig,
) -> Result<EstimateGrid> {
    ta_process(&tcn_dpa_estimate(rx, h_ls, model, spec, c)?, ta)
}

/// Network output without any post-processing.
pub fn tcn_baseline_estimate(
    rx: &ComplexGrid,
    h_ls: &[Complex64],
    model: &TcnModel<f32>,
    spec: &FrameSpec,
    c: &Constellation,
) -> Result<EstimateGrid> {
    tcn_refine(&dpa_estimate(rx, h_ls, spec, c)?, model, spec)
}

/// A network that reproduces its input exactly: the first block splits the
/// input into positive and negative parts through its skip projection, the
/// residual branches are zero, and the head recombines the parts.
pub fn identity_model(channels: usize) -> TcnModel<f32> {
    use crate::tcn::{ConvLayer, ResidualBlock, TcnConfig};
    let hidden = 2 * channels;
    let zero = |i, o, d| ConvLayer::<f32>::zeros(i, o, 2, d);
    let mut proj = ConvLayer::zeros(channels, hidden, 1, 1);
    let mut head = ConvLayer::zeros(hidden, channels, 1, 1);
    for c in 0..channels {
        proj.weight[c * channels + c] = 1.0;
        proj.weight[(channels + c) * channels + c] = -1.0;
        head.weight[c * hidden + c] = 1.0;
        head.weight[c * hidden + channels + c] = -1.0;
    }
    TcnModel {
        config: TcnConfig {
            input_channels: channels,
            hidden_channels: hidden,
            output_channels: channels,
            kernel_size: 2,
            dilations: vec![1, 2],
            dropout: 0.0,
        },
        blocks: vec![
            ResidualBlock {
                conv1: zero(channels, hidden, 1),
                conv2: zero(hidden, hidden, 1),
                proj: Some(proj),
            },
            ResidualBlock {
                conv1: zero(hidden, hidden, 2),
                conv2: zero(hidden, hidden, 2),
                proj: None,
            },
        ],
        head,
    }
}
