//! Objective quality and rate metrics.

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

pub const PEAK_8BIT: f64 = 255.0;

/// Per-channel PSNR in dB; `f64::INFINITY` when the channel is lossless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsnrYuv {
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub mse: [f64; 3],
}

impl PsnrYuv {
    pub fn is_lossless(&self) -> bool {
        self.mse.iter().all(|&m| m == 0.0)
    }
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(orig: &[[f64; 3]], recon: &[[f64; 3]], peak: f64) -> Result<PsnrYuv> {
    if orig.is_empty() {
        return Err(Error::InsufficientData("PSNR of an empty signal".into()));
    }
    if orig.len() != recon.len() {
        return Err(Error::DimensionMismatch {
            expected: orig.len(),
            actual: recon.len(),
        });
    }
    let mut mse = [0.0; 3];
    for (a, b) in orig.iter().zip(recon) {
        for c in 0..3 {
            mse[c] += (a[c] - b[c]).powi(2);
        }
    }
    let mse = mse.map(|m| m / orig.len() as f64);
    Ok(PsnrYuv {
        y: psnr_from_mse(mse[0], peak),
        u: psnr_from_mse(mse[1], peak),
        v: psnr_from_mse(mse[2], peak),
        mse,
    })
}

/// Bits per input (pre-voxelization) point.
pub fn bpip(total_bits: u64, input_points: usize) -> Result<f64> {
    if input_points == 0 {
        return Err(Error::InvalidParameter("BPIP needs at least one input point".into()));
    }
    Ok(total_bits as f64 / input_points as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    /// BPIP
    pub rate: f64,
    pub psnr_y: f64,
    pub psnr_u: f64,
    pub psnr_v: f64,
}

/// Least-squares cubic `ln(rate) ≈ p(psnr)`, returned in the centered and
/// scaled variable `t = (psnr − shift) / scale` for conditioning.
struct CubicFit {
    coeffs: [f64; 4],
    shift: f64,
    scale: f64,
}

impl CubicFit {
    fn new(curve: &[RdPoint]) -> Result<Self> {
        let n = curve.len() as f64;
        let shift = curve.iter().map(|p| p.psnr_y).sum::<f64>() / n;
        let scale = curve
            .iter()
            .map(|p| (p.psnr_y - shift).abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut ata = Matrix::zeros(4, 4);
        let mut atb = [0.0; 4];
        for p in curve {
            let t = (p.psnr_y - shift) / scale;
            let row = [1.0, t, t * t, t * t * t];
            let y = p.rate.ln();
            for i in 0..4 {
                atb[i] += row[i] * y;
                for j in 0..4 {
                    ata[(i, j)] += row[i] * row[j];
                }
            }
        }
        let chol = Cholesky::new(&ata)
            .map_err(|_| Error::InsufficientData("RD curve needs 4 points with distinct PSNR".into()))?;
        let c = chol.solve(&atb);
        Ok(CubicFit {
            coeffs: [c[0], c[1], c[2], c[3]],
            shift,
            scale,
        })
    }

    /// `∫ p` over `[lo, hi]` in PSNR units.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |x: f64| {
            let t = (x - self.shift) / self.scale;
            let c = &self.coeffs;
            self.scale * (c[0] * t + c[1] * t * t / 2.0 + c[2] * t.powi(3) / 3.0 + c[3] * t.powi(4) / 4.0)
        };
        anti(hi) - anti(lo)
    }
}

/// Bjøntegaard delta rate of `curve_b` relative to `curve_a`, in percent
/// (negative: `b` needs fewer bits for the same luma PSNR).
pub fn bd_br(curve_a: &[RdPoint], curve_b: &[RdPoint]) -> Result<f64> {
    for (name, c) in [("a", curve_a), ("b", curve_b)] {
        if c.len() < 4 {
            return Err(Error::InsufficientData(format!(
                "curve {name} has {} points, BD-BR needs at least 4",
                c.len()
            )));
        }
        if c.iter().any(|p| !(p.rate > 0.0) || !p.psnr_y.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "curve {name} needs positive rates and finite PSNR"
            )));
        }
    }
    let range = |c: &[RdPoint]| {
        c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.psnr_y), hi.max(p.psnr_y))
        })
    };
    let (lo_a, hi_a) = range(curve_a);
    let (lo_b, hi_b) = range(curve_b);
    let lo = lo_a.max(lo_b);
    let hi = hi_a.min(hi_b);
    if !(hi > lo) {
        return Err(Error::InsufficientData("RD curves do not overlap in PSNR".into()));
    }
    let fa = CubicFit::new(curve_a)?;
    let fb = CubicFit::new(curve_b)?;
    let avg = (fb.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((avg.exp() - 1.0) * 100.0)
}
