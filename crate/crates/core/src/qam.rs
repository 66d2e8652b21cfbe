//! Gray-coded square QAM.
//!
//! Bit layout per symbol: even-indexed bits drive the in-phase axis and
//! odd-indexed bits the quadrature axis, most significant first. Each axis uses a
//! reflected Gray code over its amplitude levels, ordered from the most positive
//! level down, so the all-zero pattern sits on the most positive amplitude.
//! Point indices are the symbol's bit pattern read as an integer with the first
//! bit most significant; nearest-point ties resolve toward the lower index.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Modulation {
    Qpsk,
    Qam16,
    Qam64,
}

impl Modulation {
    pub const ALL: [Modulation; 3] = [Modulation::Qpsk, Modulation::Qam16, Modulation::Qam64];

    pub fn order(self) -> u32 {
        match self {
            Modulation::Qpsk => 4,
            Modulation::Qam16 => 16,
            Modulation::Qam64 => 64,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        self.order().trailing_zeros() as usize
    }

    pub fn bits_per_axis(self) -> usize {
        self.bits_per_symbol() / 2
    }

    /// Number of amplitude levels per axis, `sqrt(M)`.
    pub fn levels(self) -> usize {
        1 << self.bits_per_axis()
    }

    /// Factor mapping the odd-integer grid to unit average symbol energy.
    pub fn scale(self) -> f64 {
        let m = self.order() as f64;
        (3.0 / (2.0 * (m - 1.0))).sqrt()
    }
}

impl TryFrom<u32> for Modulation {
    type Error = Error;

    fn try_from(m: u32) -> Result<Self> {
        match m {
            4 => Ok(Modulation::Qpsk),
            16 => Ok(Modulation::Qam16),
            64 => Ok(Modulation::Qam64),
            other => Err(Error::InvalidConfig(format!(
                "unsupported modulation order {other}; expected 4, 16 or 64"
            ))),
        }
    }
}

impl From<Modulation> for u32 {
    fn from(m: Modulation) -> u32 {
        m.order()
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modulation::Qpsk => write!(f, "QPSK"),
            other => write!(f, "{}QAM", other.order()),
        }
    }
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

/// Odd-integer amplitude of level `i` (0 = most positive).
fn level_amplitude(levels: usize, i: usize) -> i32 {
    levels as i32 - 1 - 2 * i as i32
}

#[derive(Debug, Clone)]
pub struct QamConstellation {
    modulation: Modulation,
    /// Indexed by bit pattern.
    points: Vec<C64>,
    /// Gray code -> level index, per axis.
    level_of_gray: Vec<usize>,
}

impl QamConstellation {
    pub fn new(modulation: Modulation) -> Self {
        let levels = modulation.levels();
        let mut level_of_gray = vec![0; levels];
        for i in 0..levels {
            level_of_gray[gray(i)] = i;
        }
        let mut c = QamConstellation {
            modulation,
            points: Vec::new(),
            level_of_gray,
        };
        let bps = modulation.bits_per_symbol();
        c.points = (0..modulation.order() as usize)
            .map(|idx| {
                let bits: Vec<u8> = (0..bps).map(|b| ((idx >> (bps - 1 - b)) & 1) as u8).collect();
                c.map_symbol(&bits)
            })
            .collect();
        c
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    fn axis_gray(bits: &[u8], offset: usize) -> usize {
        bits.iter()
            .skip(offset)
            .step_by(2)
            .fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }

    /// Odd-integer (unnormalized) coordinates of one symbol's bits.
    pub fn grid_point(&self, bits: &[u8]) -> (i32, i32) {
        let levels = self.modulation.levels();
        let i_level = self.level_of_gray[Self::axis_gray(bits, 0)];
        let q_level = self.level_of_gray[Self::axis_gray(bits, 1)];
        (level_amplitude(levels, i_level), level_amplitude(levels, q_level))
    }

    fn map_symbol(&self, bits: &[u8]) -> C64 {
        let (re, im) = self.grid_point(bits);
        C64::new(re as f64, im as f64) * self.modulation.scale()
    }

    /// Bits of the point with odd-integer coordinates `(re, im)`.
    pub fn grid_bits(&self, re: i32, im: i32, out: &mut Vec<u8>) {
        let levels = self.modulation.levels() as i32;
        let per_axis = self.modulation.bits_per_axis();
        let gi = gray(((levels - 1 - re) / 2) as usize);
        let gq = gray(((levels - 1 - im) / 2) as usize);
        for b in (0..per_axis).rev() {
            out.push(((gi >> b) & 1) as u8);
            out.push(((gq >> b) & 1) as u8);
        }
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<C64>> {
        let bps = self.modulation.bits_per_symbol();
        if !bits.len().is_multiple_of(bps) {
            return Err(Error::InvalidLength(format!(
                "{} bits is not a multiple of {bps} bits per symbol",
                bits.len()
            )));
        }
        Ok(bits.chunks(bps).map(|c| self.map_symbol(c)).collect())
    }

    /// Nearest level on one axis in grid units; ties go to the smaller Gray code,
    /// which is the lower point index with the other axis held fixed.
    fn slice_axis(&self, u: f64) -> i32 {
        let levels = self.modulation.levels();
        let mut best = (f64::INFINITY, usize::MAX, 0i32);
        for i in 0..levels {
            let a = level_amplitude(levels, i);
            let d = (u - a as f64).abs();
            let g = gray(i);
            if d < best.0 || (d == best.0 && g < best.1) {
                best = (d, g, a);
            }
        }
        best.2
    }

    /// Odd-integer coordinates of the nearest constellation point.
    pub fn nearest_grid(&self, symbol: C64) -> (i32, i32) {
        let u = symbol / self.modulation.scale();
        (self.slice_axis(u.re), self.slice_axis(u.im))
    }

    pub fn demodulate_nearest(&self, symbols: &[C64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.modulation.bits_per_symbol());
        for &s in symbols {
            let (re, im) = self.nearest_grid(s);
            self.grid_bits(re, im, &mut out);
        }
        out
    }
}

pub fn qam_modulate(bits: &[u8], modulation: Modulation) -> Result<Vec<C64>> {
    QamConstellation::new(modulation).modulate(bits)
}

pub fn qam_demodulate_nearest(symbols: &[C64], modulation: Modulation) -> Vec<u8> {
    QamConstellation::new(modulation).demodulate_nearest(symbols)
}
