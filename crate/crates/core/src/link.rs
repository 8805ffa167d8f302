//! One simulated transmission: random payload, frame assembly, fading and
//! noise.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{apply_channel, generate_response, ChannelModel, ChannelResponse, RngStream, StreamPurpose};
use crate::error::Result;
use crate::grid::ComplexGrid;
use crate::phy::{Bit, Constellation, FrameSpec};

#[derive(Debug, Clone)]
pub struct SimulatedFrame {
    pub bits: Vec<Bit>,
    pub tx: ComplexGrid,
    pub channel: ChannelResponse,
    pub rx: ComplexGrid,
}

impl SimulatedFrame {
    /// True channel over the data-symbol columns only.
    pub fn data_channel(&self, spec: &FrameSpec) -> ComplexGrid {
        self.channel.grid.columns(spec.num_preambles, spec.num_symbols())
    }

    /// Received preamble vectors, in transmission order.
    pub fn preambles(&self, spec: &FrameSpec) -> Vec<Vec<Complex64>> {
        (0..spec.num_preambles).map(|p| self.rx.column(p)).collect()
    }
}

pub fn random_bits(n: usize, rng: &mut impl Rng) -> Vec<Bit> {
    (0..n).map(|_| rng.random_range(0..2)).collect()
}

/// Draws payload bits, channel and noise for one frame from `stream`.
pub fn simulate_frame(
    spec: &FrameSpec,
    constellation: &Constellation,
    model: &ChannelModel,
    snr_db: f64,
    stream: RngStream,
) -> Result<SimulatedFrame> {
    let bits = random_bits(
        spec.data_bits_per_frame(constellation),
        &mut stream.rng(StreamPurpose::Bits),
    );
    let tx = spec.assemble_frame(&bits, constellation)?;
    let channel = generate_response(model, spec, stream);
    let rx = apply_channel(&tx, &channel, snr_db, stream)?;
    Ok(SimulatedFrame { bits, tx, channel, rx })
}
