//! Supervised samples for the TCN: DPA estimates in, true channel out, both
//! as real matrices with real and imaginary parts interleaved per symbol.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, RngStream};
use crate::error::{Error, Result};
use crate::estimators::{dpa_estimate, ls_from_frame};
use crate::grid::ComplexGrid;
use crate::link::simulate_frame;
use crate::phy::{Constellation, FrameSpec};
use crate::tcn::{SampleSet, Signal};

pub const DATASET_MAGIC: &[u8; 7] = b"V2XDS01";
pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Frames simulated in parallel before being written out in order.
const WRITE_BLOCK: usize = 512;

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl RealMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    /// `cols x rows` signal: one channel per matrix column, sequence along
    /// the rows.
    pub fn to_signal(&self) -> Signal<f32> {
        Signal::from_fn(self.cols, self.rows, |c, t| self.get(t, c) as f32)
    }

    pub fn from_signal(s: &Signal<f32>) -> Self {
        let (rows, cols) = (s.len(), s.channels());
        let mut values = vec![0.0; rows * cols];
        for c in 0..cols {
            for (t, v) in s.channel(c).iter().enumerate() {
                values[t * cols + c] = *v as f64;
            }
        }
        Self { rows, cols, values }
    }
}

/// Column `2j` holds `Re g[., j]` and column `2j + 1` holds `Im g[., j]`.
pub fn interleave(g: &ComplexGrid) -> RealMatrix {
    let (rows, cols) = g.shape();
    let values = g.values().iter().flat_map(|z| [z.re, z.im]).collect();
    RealMatrix {
        rows,
        cols: 2 * cols,
        values,
    }
}

pub fn deinterleave(m: &RealMatrix) -> Result<ComplexGrid> {
    if !m.cols.is_multiple_of(2) {
        return Err(Error::Shape(format!("cannot deinterleave {} columns", m.cols)));
    }
    let values = m.values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    ComplexGrid::from_vec(m.rows, m.cols / 2, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// All active subcarriers x interleaved data symbols.
    pub input: RealMatrix,
    /// Data subcarriers x interleaved data symbols.
    pub target: RealMatrix,
    pub snr_db: f64,
    pub frame_seed: u64,
}

/// Simulates frame `index` of the dataset drawn from `seed`.
pub fn make_sample(
    spec: &FrameSpec,
    c: &Constellation,
    model: &ChannelModel,
    snr_db: f64,
    seed: u64,
    index: u64,
) -> Result<Sample> {
    let frame = simulate_frame(spec, c, model, snr_db, RngStream::new(seed, index))?;
    let h0 = ls_from_frame(&frame.rx, spec)?;
    let dpa = dpa_estimate(&frame.rx, &h0, spec, c)?;
    let truth = frame.data_channel(spec).select_rows(spec.data_rows());
    Ok(Sample {
        input: interleave(&dpa.grid),
        target: interleave(&truth),
        snr_db,
        frame_seed: index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn inputs_path(self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_inputs.v2xds", self.name()))
    }

    pub fn targets_path(self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_targets.v2xds", self.name()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub total: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub train_snr_db: f64,
    pub profile: String,
    pub seed: u64,
    pub format_version: u32,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self::with_total(18_000, 0)
    }
}

impl DatasetManifest {
    /// Splits `total` as 2/3 train, 2/9 validation and the rest test.
    pub fn with_total(total: usize, seed: u64) -> Self {
        let train = (total * 6).div_ceil(9);
        let val = (total * 2 + 4) / 9;
        let val = val.min(total - train);
        Self::with_split(train, val, total - train - val, seed)
    }

    pub fn with_split(train: usize, val: usize, test: usize, seed: u64) -> Self {
        Self {
            total: train + val + test,
            train,
            val,
            test,
            train_snr_db: 40.0,
            profile: ChannelModel::vtv_sdww_illustrative().name,
            seed,
            format_version: DATASET_FORMAT_VERSION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train + self.val + self.test != self.total {
            return Err(Error::Config(format!(
                "split {}+{}+{} does not add up to {}",
                self.train, self.val, self.test, self.total
            )));
        }
        if self.total == 0 {
            return Err(Error::Config("dataset must contain at least one frame".into()));
        }
        if self.train_snr_db.is_nan() {
            return Err(Error::Config("training SNR is NaN".into()));
        }
        if self.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported dataset format {}", self.format_version)));
        }
        Ok(())
    }

    /// Contiguous frame-index range of a split.
    pub fn range(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => 0..self.train,
            Split::Val => self.train..self.train + self.val,
            Split::Test => self.train + self.val..self.total,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Header for `count` matrices of `rows x cols` f32 values.
fn write_header(w: &mut impl Write, count: usize, rows: usize, cols: usize) -> std::io::Result<()> {
    w.write_all(DATASET_MAGIC)?;
    for v in [count, rows, cols] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    Ok(())
}

fn write_matrix(w: &mut impl Write, m: &RealMatrix) -> std::io::Result<()> {
    for v in &m.values {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Contents of one dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl MatrixFile {
    pub fn matrix(&self, i: usize) -> RealMatrix {
        let n = self.rows * self.cols;
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values[i * n..(i + 1) * n].iter().map(|v| *v as f64).collect(),
        }
    }
}

pub fn read_matrix_file(path: &Path) -> Result<MatrixFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 19 || &bytes[..7] != DATASET_MAGIC {
        return Err(Error::format(path, "not a dataset file (bad magic)"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[7 + 4 * i..11 + 4 * i].try_into().unwrap()) as usize;
    let (count, rows, cols) = (word(0), word(1), word(2));
    let expected = count
        .checked_mul(rows)
        .and_then(|n| n.checked_mul(cols))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    if bytes.len() - 19 != expected {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, header implies {expected}", bytes.len() - 19),
        ));
    }
    let values = bytes[19..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(MatrixFile { count, rows, cols, values })
}

struct SplitWriter {
    inputs: BufWriter<File>,
    targets: BufWriter<File>,
    inputs_path: PathBuf,
    targets_path: PathBuf,
}

impl SplitWriter {
    fn create(dir: &Path, split: Split, count: usize, spec: &FrameSpec) -> Result<Self> {
        let inputs_path = split.inputs_path(dir);
        let targets_path = split.targets_path(dir);
        let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
        let mut w = Self {
            inputs: open(&inputs_path)?,
            targets: open(&targets_path)?,
            inputs_path,
            targets_path,
        };
        let cols = 2 * spec.num_data_symbols;
        write_header(&mut w.inputs, count, spec.num_active(), cols).map_err(|e| Error::io(&w.inputs_path, e))?;
        write_header(&mut w.targets, count, spec.data_rows().len(), cols)
            .map_err(|e| Error::io(&w.targets_path, e))?;
        Ok(w)
    }

    fn push(&mut self, s: &Sample) -> Result<()> {
        write_matrix(&mut self.inputs, &s.input).map_err(|e| Error::io(&self.inputs_path, e))?;
        write_matrix(&mut self.targets, &s.target).map_err(|e| Error::io(&self.targets_path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.inputs.flush().map_err(|e| Error::io(&self.inputs_path, e))?;
        self.targets.flush().map_err(|e| Error::io(&self.targets_path, e))
    }
}

/// Simulates every frame of the manifest at its training SNR and writes the
/// per-split inputs/targets files plus the manifest into `dir`. Frame `f`
/// uses stream id `f`; frames are simulated in parallel and written in index
/// order, so the output bytes depend only on the manifest and channel model.
pub fn generate_dataset(
    manifest: &DatasetManifest,
    dir: &Path,
    spec: &FrameSpec,
    c: &Constellation,
    model: &ChannelModel,
) -> Result<()> {
    manifest.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        let range = manifest.range(split);
        let mut writer = SplitWriter::create(dir, split, range.len(), spec)?;
        let indices: Vec<usize> = range.collect();
        for block in indices.chunks(WRITE_BLOCK) {
            let samples: Vec<Sample> = block
                .par_iter()
                .map(|&f| make_sample(spec, c, model, manifest.train_snr_db, manifest.seed, f as u64))
                .collect::<Result<_>>()?;
            for s in &samples {
                writer.push(s)?;
            }
        }
        writer.finish()?;
        log::info!("{}: {} frames", split.name(), manifest.range(split).len());
    }
    manifest.save(&dir.join(MANIFEST_FILE))
}

/// Loads a split as network samples: inputs are `2 * symbols x subcarriers`
/// signals, targets `2 * symbols x data subcarriers`, with the loss mask set
/// to the data-subcarrier positions.
pub fn load_split(dir: &Path, split: Split, spec: &FrameSpec) -> Result<SampleSet<f32>> {
    let inputs = read_matrix_file(&split.inputs_path(dir))?;
    let targets = read_matrix_file(&split.targets_path(dir))?;
    let cols = 2 * spec.num_data_symbols;
    if (inputs.rows, inputs.cols) != (spec.num_active(), cols) {
        return Err(Error::format(split.inputs_path(dir), "unexpected input dimensions"));
    }
    if (targets.rows, targets.cols) != (spec.data_rows().len(), cols) {
        return Err(Error::format(split.targets_path(dir), "unexpected target dimensions"));
    }
    if inputs.count != targets.count {
        return Err(Error::format(split.targets_path(dir), "input and target counts differ"));
    }
    let transpose = |f: &MatrixFile, i: usize| {
        let n = f.rows * f.cols;
        let m = &f.values[i * n..(i + 1) * n];
        Signal::from_fn(f.cols, f.rows, |c, t| m[t * f.cols + c])
    };
    let xs = (0..inputs.count).map(|i| transpose(&inputs, i)).collect();
    let ys = (0..targets.count).map(|i| transpose(&targets, i)).collect();
    SampleSet::new(xs, ys, Some(spec.data_rows().to_vec()))
}
