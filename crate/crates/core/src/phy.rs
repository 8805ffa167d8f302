//! IEEE 802.11p frame geometry, square-QAM mapping and frame assembly.
//!
//! Frames live entirely in the frequency domain: a [`ComplexGrid`] with one
//! row per active subcarrier (ordered from the lowest index to the highest,
//! DC excluded) and one column per OFDM symbol, preambles first.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ComplexGrid;

/// One transmitted bit, stored as 0 or 1.
pub type Bit = u8;

/// 802.11a/p long training sequence over subcarriers -26..=-1, 1..=26.
const LONG_TRAINING: [i8; 52] = [
    1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, //
    1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1,
];

/// Pilot subcarrier indices and their (fixed) BPSK values.
const PILOTS: [(i32, f64); 4] = [(-21, 1.0), (-7, 1.0), (7, 1.0), (21, -1.0)];

/// Subcarrier layout and symbol counts of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpec {
    pub fft_size: usize,
    /// Signed subcarrier indices in row order.
    pub active_subcarriers: Vec<i32>,
    pub pilot_indices: Vec<i32>,
    pub data_indices: Vec<i32>,
    pub num_data_symbols: usize,
    pub num_preambles: usize,
    /// One value per entry of `pilot_indices`.
    pub pilot_values: Vec<Complex64>,
    /// One value per active subcarrier (the known preamble `p[k]`).
    pub preamble_values: Vec<Complex64>,
    pilot_rows: Vec<usize>,
    data_rows: Vec<usize>,
}

impl FrameSpec {
    /// The 10 MHz 802.11p layout: 64-point FFT, 52 active subcarriers, four
    /// pilots at {-21, -7, 7, 21}, two long preambles and 50 data symbols.
    pub fn ieee80211p() -> Self {
        let active: Vec<i32> = (-26..=26).filter(|&k| k != 0).collect();
        let pilot_indices: Vec<i32> = PILOTS.iter().map(|p| p.0).collect();
        let data_indices: Vec<i32> = active
            .iter()
            .copied()
            .filter(|k| !pilot_indices.contains(k))
            .collect();
        let row_of = |k: &i32| active.iter().position(|a| a == k).unwrap();
        let pilot_rows = pilot_indices.iter().map(row_of).collect();
        let data_rows = data_indices.iter().map(row_of).collect();
        Self {
            fft_size: 64,
            pilot_values: PILOTS.iter().map(|p| Complex64::new(p.1, 0.0)).collect(),
            preamble_values: LONG_TRAINING
                .iter()
                .map(|&v| Complex64::new(f64::from(v), 0.0))
                .collect(),
            active_subcarriers: active,
            pilot_indices,
            data_indices,
            num_data_symbols: 50,
            num_preambles: 2,
            pilot_rows,
            data_rows,
        }
    }

    pub fn num_active(&self) -> usize {
        self.active_subcarriers.len()
    }

    /// Preambles plus data symbols.
    pub fn num_symbols(&self) -> usize {
        self.num_preambles + self.num_data_symbols
    }

    /// Row ordinals of the pilot subcarriers, in `pilot_indices` order.
    pub fn pilot_rows(&self) -> &[usize] {
        &self.pilot_rows
    }

    /// Row ordinals of the data subcarriers, in `data_indices` order.
    pub fn data_rows(&self) -> &[usize] {
        &self.data_rows
    }

    /// Known pilot value carried on `row`, if `row` is a pilot row.
    pub fn pilot_at_row(&self, row: usize) -> Option<Complex64> {
        self.pilot_rows
            .iter()
            .position(|&r| r == row)
            .map(|i| self.pilot_values[i])
    }

    /// Number of payload bits one frame carries.
    pub fn data_bits_per_frame(&self, c: &Constellation) -> usize {
        self.data_indices.len() * self.num_data_symbols * c.bits_per_symbol()
    }

    /// Builds the transmitted frame: preamble columns, then data columns with
    /// pilots at pilot rows and modulated payload at data rows. Bits fill one
    /// data symbol at a time, data rows in ascending subcarrier order.
    pub fn assemble_frame(&self, data_bits: &[Bit], c: &Constellation) -> Result<ComplexGrid> {
        let expected = self.data_bits_per_frame(c);
        if data_bits.len() != expected {
            return Err(Error::Shape(format!(
                "frame needs {expected} data bits, got {}",
                data_bits.len()
            )));
        }
        let symbols = c.modulate(data_bits)?;
        let n_data = self.data_rows.len();
        let mut grid = ComplexGrid::zeros(self.num_active(), self.num_symbols());
        for p in 0..self.num_preambles {
            grid.set_column(p, &self.preamble_values);
        }
        for j in 0..self.num_data_symbols {
            let col = self.num_preambles + j;
            for (&row, &v) in self.pilot_rows.iter().zip(&self.pilot_values) {
                grid[(row, col)] = v;
            }
            for (i, &row) in self.data_rows.iter().enumerate() {
                grid[(row, col)] = symbols[j * n_data + i];
            }
        }
        Ok(grid)
    }

    /// Reads the payload symbols back out of a data grid in the order
    /// `assemble_frame` wrote them. `grid` may be a full frame or its data
    /// columns only.
    pub fn extract_data(&self, grid: &ComplexGrid) -> Result<Vec<Complex64>> {
        let offset = match grid.cols() {
            c if c == self.num_symbols() => self.num_preambles,
            c if c == self.num_data_symbols => 0,
            c => {
                return Err(Error::Shape(format!(
                    "expected {} or {} columns, got {c}",
                    self.num_symbols(),
                    self.num_data_symbols
                )))
            }
        };
        if grid.rows() != self.num_active() {
            return Err(Error::Shape(format!(
                "expected {} rows, got {}",
                self.num_active(),
                grid.rows()
            )));
        }
        let mut out = Vec::with_capacity(self.data_rows.len() * self.num_data_symbols);
        for j in 0..self.num_data_symbols {
            out.extend(self.data_rows.iter().map(|&r| grid[(r, offset + j)]));
        }
        Ok(out)
    }
}

/// Gray-labelled square QAM constellation with unit average energy.
///
/// The label of a point is its index in `points`. The upper half of the label
/// bits selects the in-phase level, the lower half the quadrature level, each
/// through a binary-reflected Gray code.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    bits_per_symbol: usize,
    /// Normalized amplitude levels per axis, ascending.
    levels: Vec<f64>,
    /// Gray code of each entry of `levels`.
    codes: Vec<usize>,
}

impl Constellation {
    pub fn qam16() -> Self {
        Self::square_qam(2)
    }

    /// Square QAM with `bits_per_axis` bits on each of I and Q.
    pub fn square_qam(bits_per_axis: usize) -> Self {
        assert!(bits_per_axis >= 1, "need at least one bit per axis");
        let per_axis = 1usize << bits_per_axis;
        let l = per_axis as f64;
        let norm = (2.0 * (l * l - 1.0) / 3.0).sqrt();
        let levels: Vec<f64> = (0..per_axis)
            .map(|i| (2.0 * i as f64 - (l - 1.0)) / norm)
            .collect();
        let codes: Vec<usize> = (0..per_axis).map(|i| i ^ (i >> 1)).collect();
        let mut points = vec![Complex64::default(); per_axis * per_axis];
        for (i, &re) in levels.iter().enumerate() {
            for (q, &im) in levels.iter().enumerate() {
                points[(codes[i] << bits_per_axis) | codes[q]] = Complex64::new(re, im);
            }
        }
        Self {
            points,
            bits_per_symbol: 2 * bits_per_axis,
            levels,
            codes,
        }
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Points indexed by label.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Label of the point nearest to `z`; ties go to the lowest label.
    pub fn nearest_label(&self, z: Complex64) -> Result<usize> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Domain(format!("cannot demap non-finite value {z}")));
        }
        Ok(self.slice(z))
    }

    /// The hard decision `R(z)`: the constellation point nearest to `z`.
    pub fn nearest(&self, z: Complex64) -> Result<Complex64> {
        self.nearest_label(z).map(|l| self.points[l])
    }

    /// Per-axis slicer. Squared distance separates over I and Q, so the
    /// nearest point combines the nearest level on each axis; within an axis
    /// a tie keeps the smaller Gray code, which keeps the smaller label.
    pub(crate) fn slice(&self, z: Complex64) -> usize {
        let half = self.bits_per_symbol / 2;
        (self.slice_axis(z.re) << half) | self.slice_axis(z.im)
    }

    fn slice_axis(&self, x: f64) -> usize {
        let mut best_code = self.codes[0];
        let mut best = (x - self.levels[0]).powi(2);
        for (&level, &code) in self.levels.iter().zip(&self.codes).skip(1) {
            let d = (x - level).powi(2);
            if d < best || (d == best && code < best_code) {
                best = d;
                best_code = code;
            }
        }
        best_code
    }

    /// Maps each group of `bits_per_symbol` bits (first bit most significant)
    /// to the point carrying that label.
    pub fn modulate(&self, bits: &[Bit]) -> Result<Vec<Complex64>> {
        let m = self.bits_per_symbol;
        if !bits.len().is_multiple_of(m) {
            return Err(Error::Shape(format!(
                "bit count {} is not a multiple of {m}",
                bits.len()
            )));
        }
        bits.chunks(m)
            .map(|chunk| {
                let mut label = 0usize;
                for &b in chunk {
                    if b > 1 {
                        return Err(Error::Domain(format!("bit value {b} is not 0 or 1")));
                    }
                    label = (label << 1) | usize::from(b);
                }
                Ok(self.points[label])
            })
            .collect()
    }

    /// Hard-decision demodulation: nearest point, then its label bits.
    pub fn demodulate(&self, symbols: &[Complex64]) -> Result<Vec<Bit>> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for &z in symbols {
            let label = self.nearest_label(z)?;
            self.push_label_bits(label, &mut bits);
        }
        Ok(bits)
    }

    pub(crate) fn push_label_bits(&self, label: usize, out: &mut Vec<Bit>) {
        for shift in (0..self.bits_per_symbol).rev() {
            out.push(((label >> shift) & 1) as Bit);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_nearest(c: &Constellation, z: Complex64) -> usize {
        let mut best = 0;
        for (i, p) in c.points().iter().enumerate() {
            if (z - p).norm_sqr() < (z - c.points()[best]).norm_sqr() {
                best = i;
            }
        }
        best
    }

    #[test]
    fn canonical_frame_geometry() {
        let spec = FrameSpec::ieee80211p();
        assert_eq!(spec.fft_size, 64);
        assert_eq!(spec.pilot_indices, vec![-21, -7, 7, 21]);
        assert_eq!(spec.data_indices.len(), 48);
        assert_eq!(spec.active_subcarriers.len(), 52);
        assert_eq!(spec.num_data_symbols, 50);
        assert_eq!(spec.num_preambles, 2);
        assert!(!spec.active_subcarriers.contains(&0));
        for k in &spec.active_subcarriers {
            let pilot = spec.pilot_indices.contains(k);
            let data = spec.data_indices.contains(k);
            assert!(pilot ^ data, "subcarrier {k} must be exactly one of pilot/data");
        }
        assert_eq!(spec.preamble_values.len(), 52);
        assert!(spec.preamble_values.iter().all(|p| p.norm() == 1.0));
        assert_eq!(spec.pilot_rows(), &[5, 19, 32, 46]);
    }

    #[test]
    fn qam16_unit_energy() {
        let c = Constellation::qam16();
        assert_eq!(c.order(), 16);
        assert_eq!(c.bits_per_symbol(), 4);
        let e: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qam16_axis_neighbours_differ_in_one_bit() {
        let c = Constellation::qam16();
        let step = 2.0 / 10f64.sqrt();
        for (a, pa) in c.points().iter().enumerate() {
            for (b, pb) in c.points().iter().enumerate() {
                let d = pb - pa;
                let axis_neighbour = ((d.re.abs() - step).abs() < 1e-12 && d.im.abs() < 1e-12)
                    || ((d.im.abs() - step).abs() < 1e-12 && d.re.abs() < 1e-12);
                if axis_neighbour {
                    assert_eq!((a ^ b).count_ones(), 1, "labels {a:04b} and {b:04b}");
                }
            }
        }
    }

    #[test]
    fn label_table_corners() {
        let c = Constellation::qam16();
        let s = 10f64.sqrt();
        assert_eq!(c.modulate(&[0, 0, 0, 0]).unwrap(), vec![Complex64::new(-3.0 / s, -3.0 / s)]);
        assert!(c.modulate(&[]).unwrap().is_empty());
        assert_eq!(
            c.demodulate(&[Complex64::new(3.0 / s, 3.0 / s)]).unwrap(),
            vec![1, 0, 1, 0]
        );
    }

    #[test]
    fn modulate_rejects_ragged_input() {
        let c = Constellation::qam16();
        assert!(matches!(c.modulate(&[0, 1, 0]), Err(Error::Shape(_))));
        assert!(matches!(c.modulate(&[0, 1, 0, 2]), Err(Error::Domain(_))));
    }

    #[test]
    fn exhaustive_label_round_trip() {
        let c = Constellation::qam16();
        for label in 0..16usize {
            let bits: Vec<Bit> = (0..4).rev().map(|s| ((label >> s) & 1) as Bit).collect();
            let sym = c.modulate(&bits).unwrap();
            assert_eq!(c.nearest_label(sym[0]).unwrap(), label);
            assert_eq!(c.demodulate(&sym).unwrap(), bits);
        }
    }

    #[test]
    fn nearest_fixed_points_and_origin_tie() {
        let c = Constellation::qam16();
        for p in c.points() {
            assert_eq!(c.nearest(*p).unwrap(), *p);
        }
        // The four inner points are equidistant from the origin; label 0101
        // is the lowest among them.
        let s = 10f64.sqrt();
        assert_eq!(c.nearest_label(Complex64::new(0.0, 0.0)).unwrap(), 0b0101);
        assert_eq!(
            c.nearest(Complex64::new(0.0, 0.0)).unwrap(),
            Complex64::new(-1.0 / s, -1.0 / s)
        );
    }

    #[test]
    fn nearest_rejects_non_finite() {
        let c = Constellation::qam16();
        assert!(c.nearest(Complex64::new(f64::NAN, 0.0)).is_err());
        assert!(c.nearest(Complex64::new(0.0, f64::INFINITY)).is_err());
    }

    #[test]
    fn nearest_matches_brute_force_scan() {
        let c = Constellation::qam16();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let z = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            assert_eq!(c.nearest_label(z).unwrap(), brute_force_nearest(&c, z), "z = {z}");
        }
    }

    #[test]
    fn small_perturbation_keeps_label() {
        let c = Constellation::qam16();
        let half_dmin = 1.0 / 10f64.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let label = rng.random_range(0..16);
            let r = rng.random_range(0.0..0.999 * half_dmin);
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let z = c.point(label) + Complex64::from_polar(r, theta);
            assert_eq!(c.nearest_label(z).unwrap(), label);
        }
    }

    #[test]
    fn assembled_frame_layout() {
        let spec = FrameSpec::ieee80211p();
        let c = Constellation::qam16();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<Bit> = (0..spec.data_bits_per_frame(&c))
            .map(|_| rng.random_range(0..2))
            .collect();
        assert_eq!(bits.len(), 48 * 50 * 4);
        let frame = spec.assemble_frame(&bits, &c).unwrap();
        assert_eq!(frame.shape(), (52, 52));
        assert_eq!(frame.column(0), spec.preamble_values);
        assert_eq!(frame.column(1), spec.preamble_values);
        for col in 2..52 {
            for (&row, &v) in spec.pilot_rows().iter().zip(&spec.pilot_values) {
                assert_eq!(frame[(row, col)], v);
            }
        }
        let recovered = c.demodulate(&spec.extract_data(&frame).unwrap()).unwrap();
        assert_eq!(recovered, bits);
        assert!(matches!(
            spec.assemble_frame(&bits[1..], &c),
            Err(Error::Shape(_))
        ));
    }

    proptest! {
        #[test]
        fn demap_is_idempotent(re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let c = Constellation::qam16();
            let once = c.nearest(Complex64::new(re, im)).unwrap();
            prop_assert_eq!(c.nearest(once).unwrap(), once);
        }

        #[test]
        fn modulate_demodulate_round_trip(bits in proptest::collection::vec(0u8..2, 0..64)) {
            let c = Constellation::qam16();
            let n = bits.len() / 4 * 4;
            let bits = &bits[..n];
            prop_assert_eq!(c.demodulate(&c.modulate(bits).unwrap()).unwrap(), bits.to_vec());
        }
    }
}
