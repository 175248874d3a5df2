use crate::error::{Error, Result};

/// Codec parameters shared by encoder and decoder.
///
/// Every field except the λ-model coefficients is carried in the bitstream
/// header, so a decoder reconstructs exactly the configuration used to
/// encode.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceConfig {
    /// Voxel grid resolution `N` (coordinates in `[0, N)`).
    pub grid_dim: u32,
    /// Mean number of voxels per geometry cluster.
    pub target_cluster_size: usize,
    /// Squared radius of the ε-neighborhood graph, in voxel units.
    pub epsilon_sq: f64,
    /// Gaussian kernel width of the normal-similarity edge weight.
    pub sigma_sq: f64,
    /// Neighborhood size for normal estimation.
    pub normal_k: usize,
    /// Reference search box expansion (3.0 = 300%).
    pub box_expand: f64,
    pub gop_size: usize,
    /// Quality factor, identical to the uniform quantization step.
    pub qstep: f64,
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            grid_dim: 4096,
            target_cluster_size: 600,
            epsilon_sq: 50.0,
            sigma_sq: 0.4,
            normal_k: 15,
            box_expand: 3.0,
            gop_size: 8,
            qstep: 8.0,
            lambda_alpha: 0.0624,
            lambda_beta: 1.6238,
        }
    }
}

impl SequenceConfig {
    pub fn with_qstep(mut self, qstep: f64) -> Self {
        self.qstep = qstep;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grid_dim", self.grid_dim as f64),
            ("target_cluster_size", self.target_cluster_size as f64),
            ("epsilon_sq", self.epsilon_sq),
            ("sigma_sq", self.sigma_sq),
            ("normal_k", self.normal_k as f64),
            ("gop_size", self.gop_size as f64),
            ("qstep", self.qstep),
            ("lambda_alpha", self.lambda_alpha),
            ("lambda_beta", self.lambda_beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.box_expand >= 0.0) || !self.box_expand.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "box_expand must be non-negative, got {}",
                self.box_expand
            )));
        }
        Ok(())
    }
}
