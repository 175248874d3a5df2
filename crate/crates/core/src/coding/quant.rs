//! Uniform scalar quantization.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlock {
    pub indices: Vec<i64>,
    pub qstep: f64,
}

fn check_qstep(qstep: f64) -> Result<()> {
    if !(qstep > 0.0) || !qstep.is_finite() {
        return Err(Error::InvalidParameter(format!("qstep must be positive, got {qstep}")));
    }
    Ok(())
}

/// `round(c / qstep)`, ties away from zero.
pub fn quantize(coeffs: &[f64], qstep: f64) -> Result<QuantizedBlock> {
    check_qstep(qstep)?;
    Ok(QuantizedBlock {
        indices: coeffs.iter().map(|c| (c / qstep).round() as i64).collect(),
        qstep,
    })
}

pub fn dequantize(block: &QuantizedBlock) -> Vec<f64> {
    block.indices.iter().map(|&i| i as f64 * block.qstep).collect()
}
