//! Lagrangian intra/inter mode decision and the λ(Q) model.

pub use crate::coding::CodingMode;
use crate::error::{Error, Result};

/// `λ(Q) = α·Q^β`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaModel {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LambdaModel {
    fn default() -> Self {
        LambdaModel {
            alpha: 0.0624,
            beta: 1.6238,
        }
    }
}

pub fn lambda_from_q(q: f64, model: &LambdaModel) -> Result<f64> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "quality factor must be positive, got {q}"
        )));
    }
    Ok(model.alpha * q.powf(model.beta))
}

/// Mean of the per-channel MSEs between two YUV signals.
pub fn distortion_yuv(orig: &[[f64; 3]], recon: &[[f64; 3]]) -> Result<f64> {
    if orig.len() != recon.len() {
        return Err(Error::DimensionMismatch {
            expected: orig.len(),
            actual: recon.len(),
        });
    }
    if orig.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = orig
        .iter()
        .zip(recon)
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>())
        .sum();
    Ok(sum / (3.0 * orig.len() as f64))
}

/// Cost of coding one cluster in one mode.
///
/// The rate term of `J` is in bits per voxel of the cluster, the unit of
/// the rate axis the λ(Q) model is fitted on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCost {
    pub mode: CodingMode,
    pub distortion: f64,
    /// Exact payload bits plus the mode bit.
    pub rate_bits: u64,
    pub cost: f64,
}

impl ModeCost {
    pub fn new(mode: CodingMode, distortion: f64, rate_bits: u64, points: usize, lambda: f64) -> Self {
        let rate = rate_bits as f64 / points.max(1) as f64;
        ModeCost {
            mode,
            distortion,
            rate_bits,
            cost: distortion + lambda * rate,
        }
    }
}

/// Lower `J` wins; ties go to intra.
pub fn choose_mode(intra: &ModeCost, inter: &ModeCost) -> CodingMode {
    if inter.cost < intra.cost {
        CodingMode::Inter
    } else {
        CodingMode::Intra
    }
}

/// One operating point of an RD curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdSample {
    pub q: f64,
    pub rate: f64,
    pub distortion: f64,
}

/// Fits `λ = α·Q^β` to the negated RD slopes between adjacent quality
/// factors. Each slope is attributed to the smaller Q of its pair.
pub fn fit_lambda_model(points: &[RdSample]) -> Result<LambdaModel> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.q.total_cmp(&b.q));
    pts.dedup_by(|a, b| a.q == b.q);
    if pts.len() < 3 {
        return Err(Error::LambdaFit(format!("need ≥ 3 points, got {}", pts.len())));
    }
    if pts.iter().any(|p| !(p.q > 0.0)) {
        return Err(Error::LambdaFit("quality factors must be positive".into()));
    }
    let bad: Vec<String> = pts
        .windows(2)
        .filter(|w| !(w[1].rate < w[0].rate))
        .map(|w| format!("Q={}→{}", w[0].q, w[1].q))
        .collect();
    if !bad.is_empty() {
        return Err(Error::LambdaFit(format!(
            "rate not strictly decreasing between {}",
            bad.join(", ")
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for w in pts.windows(2) {
        let lambda = -(w[1].distortion - w[0].distortion) / (w[1].rate - w[0].rate);
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::LambdaFit(format!(
                "non-positive slope {lambda} between Q={} and Q={}",
                w[0].q, w[1].q
            )));
        }
        xs.push(w[0].q.ln());
        ys.push(lambda.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let beta = sxy / sxx;
    let alpha = (my - beta * mx).exp();
    if !(alpha > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::LambdaFit(format!("degenerate fit (alpha {alpha}, beta {beta})")));
    }
    Ok(LambdaModel { alpha, beta })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// RD points whose adjacent slopes are exactly `model` at the left Q.
    fn power_law_curve(model: &LambdaModel, qs: &[f64]) -> Vec<RdSample> {
        let mut out = vec![RdSample {
            q: qs[0],
            rate: 10.0,
            distortion: 1.0,
        }];
        for w in qs.windows(2) {
            let prev = *out.last().unwrap();
            let rate = prev.rate * 0.6;
            let lambda = lambda_from_q(w[0], model).unwrap();
            out.push(RdSample {
                q: w[1],
                rate,
                distortion: prev.distortion - lambda * (rate - prev.rate),
            });
        }
        out
    }

    #[test]
    fn lambda_values() {
        let m = LambdaModel::default();
        assert_eq!(lambda_from_q(1.0, &m).unwrap(), 0.0624);
        assert!((lambda_from_q(16.0, &m).unwrap() - 5.630).abs() < 1e-3);
        assert!((lambda_from_q(32.0, &m).unwrap() - 17.35).abs() < 1e-2);
        // Independent evaluation through exp/ln.
        let direct = (0.0624f64.ln() + 1.6238 * 32f64.ln()).exp();
        assert!((lambda_from_q(32.0, &m).unwrap() - direct).abs() < 1e-9);
        assert!(lambda_from_q(0.0, &m).is_err());
        assert!(lambda_from_q(-2.0, &m).is_err());
        let mut prev = 0.0;
        for q in 1..64 {
            let l = lambda_from_q(q as f64, &m).unwrap();
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn distortion_examples() {
        let a = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(distortion_yuv(&a, &a).unwrap(), 0.0);
        assert_eq!(distortion_yuv(&[[0.0; 3]], &[[1.0, 2.0, 2.0]]).unwrap(), 3.0);
        // Per-channel MSE 3, 6, 9.
        let orig = [[0.0; 3]; 2];
        let recon = [[3f64.sqrt(), 6f64.sqrt(), 3.0], [-(3f64.sqrt()), -(6f64.sqrt()), -3.0]];
        assert!((distortion_yuv(&orig, &recon).unwrap() - 6.0).abs() < 1e-12);
        assert!(distortion_yuv(&a, &a[..1]).is_err());
    }

    #[test]
    fn mode_choice() {
        let mk = |mode, j| ModeCost {
            mode,
            distortion: j,
            rate_bits: 1,
            cost: j,
        };
        assert_eq!(
            choose_mode(&mk(CodingMode::Intra, 10.0), &mk(CodingMode::Inter, 8.0)),
            CodingMode::Inter
        );
        assert_eq!(
            choose_mode(&mk(CodingMode::Intra, 8.0), &mk(CodingMode::Inter, 8.0)),
            CodingMode::Intra
        );
        let c = ModeCost::new(CodingMode::Inter, 2.0, 600, 300, 1.5);
        assert_eq!(c.cost, 2.0 + 1.5 * 2.0);
    }

    #[test]
    fn fit_recovers_power_law() {
        let truth = LambdaModel::default();
        let curve = power_law_curve(&truth, &[2.0, 4.0, 8.0, 16.0, 32.0]);
        let fit = fit_lambda_model(&curve).unwrap();
        assert!((fit.alpha / truth.alpha - 1.0).abs() < 0.01);
        assert!((fit.beta / truth.beta - 1.0).abs() < 0.01);
    }

    #[test]
    fn minimal_fit_is_exact() {
        let truth = LambdaModel { alpha: 0.3, beta: 1.2 };
        let curve = power_law_curve(&truth, &[3.0, 5.0, 11.0]);
        let fit = fit_lambda_model(&curve).unwrap();
        assert!((fit.alpha - 0.3).abs() < 1e-9 && (fit.beta - 1.2).abs() < 1e-9);
    }

    #[test]
    fn fit_errors() {
        let one = [RdSample {
            q: 1.0,
            rate: 1.0,
            distortion: 1.0,
        }];
        let e = fit_lambda_model(&one).unwrap_err();
        assert!(e.to_string().contains("need ≥ 3 points"));
        let flat: Vec<RdSample> = [2.0, 4.0, 8.0]
            .iter()
            .enumerate()
            .map(|(i, &q)| RdSample {
                q,
                rate: 10.0 - i as f64,
                distortion: 5.0,
            })
            .collect();
        assert!(matches!(fit_lambda_model(&flat), Err(Error::LambdaFit(_))));
        let mut nonmono = flat.clone();
        nonmono[2].rate = 20.0;
        let msg = fit_lambda_model(&nonmono).unwrap_err().to_string();
        assert!(msg.contains("Q=4→8"), "{msg}");
    }
}
