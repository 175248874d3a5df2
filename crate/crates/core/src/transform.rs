//! Graph Fourier transforms and the GMRF inter-predictor.
//!
//! Encoder and decoder derive bases independently, so decompositions must be
//! bit-reproducible: [`symmetric_eigen`] is fully deterministic and fixes
//! the sign and ordering of eigenvectors.

use crate::error::{Error, Result};
use crate::graph::{GeneralizedLaplacian, LaplacianKind};
use crate::linalg::{dot, symmetric_eigen, Cholesky, Matrix};

/// Orthonormal eigenbasis of a (generalized) Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformBasis {
    /// `Φᵀ`: row `k` is the eigenvector for `eigenvalues[k]`.
    vectors: Matrix,
    pub eigenvalues: Vec<f64>,
    pub kind: LaplacianKind,
}

impl TransformBasis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Φ`, eigenvectors as columns.
    pub fn basis(&self) -> Matrix {
        self.vectors.transpose()
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        self.vectors.row(k)
    }

    /// Basis of `L + I` from the basis of `L`: same vectors, eigenvalues
    /// shifted by one. Sharing the vectors keeps the intra and inter bases
    /// consistent in degenerate eigenspaces.
    pub fn generalized(&self) -> TransformBasis {
        debug_assert_eq!(self.kind, LaplacianKind::Combinatorial);
        TransformBasis {
            vectors: self.vectors.clone(),
            eigenvalues: self.eigenvalues.iter().map(|v| v + 1.0).collect(),
            kind: LaplacianKind::Generalized,
        }
    }

    /// `‖ΦᵀΦ − I‖_F`
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim();
        let mut e2 = 0.0;
        for i in 0..n {
            for j in i..n {
                let g = dot(self.vectors.row(i), self.vectors.row(j)) - if i == j { 1.0 } else { 0.0 };
                e2 += if i == j { g * g } else { 2.0 * g * g };
            }
        }
        e2.sqrt()
    }

    /// `‖𝓛Φ − Φ diag(λ)‖_F`
    pub fn spectral_residual(&self, laplacian: &Matrix) -> f64 {
        let mut r2 = 0.0;
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let v = self.vectors.row(k);
            let lv = laplacian.mul_vec(v);
            r2 += lv.iter().zip(v).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>();
        }
        r2.sqrt()
    }
}

pub fn eigendecompose(laplacian: &GeneralizedLaplacian) -> Result<TransformBasis> {
    let eig = symmetric_eigen(&laplacian.matrix)?;
    Ok(TransformBasis {
        vectors: eig.vectors,
        eigenvalues: eig.values,
        kind: laplacian.kind,
    })
}

fn check_len(basis: &TransformBasis, len: usize) -> Result<()> {
    if basis.dim() != len {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            actual: len,
        });
    }
    Ok(())
}

/// `f̂ = Φᵀ f`
pub fn gft_forward(f: &[f64], basis: &TransformBasis) -> Result<Vec<f64>> {
    check_len(basis, f.len())?;
    Ok(basis.vectors.mul_vec(f))
}

/// `f = Φ f̂`
pub fn gft_inverse(coeffs: &[f64], basis: &TransformBasis) -> Result<Vec<f64>> {
    check_len(basis, coeffs.len())?;
    let mut out = vec![0.0; coeffs.len()];
    for (k, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            crate::linalg::axpy(c, basis.vectors.row(k), &mut out);
        }
    }
    Ok(out)
}

/// Forward transform of a prediction residual on the basis of `L + I`.
pub fn ggft_forward(residual: &[f64], basis: &TransformBasis) -> Result<Vec<f64>> {
    gft_forward(residual, basis)
}

pub fn ggft_inverse(coeffs: &[f64], basis: &TransformBasis) -> Result<Vec<f64>> {
    gft_inverse(coeffs, basis)
}

/// Conditional mean of the current attributes given the reference,
/// `p = (L + I)⁻¹ x_ref`, solved per channel with one Cholesky factorization.
pub fn inter_predict(laplacian: &GeneralizedLaplacian, ref_attrs: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
    let n = laplacian.dim();
    if ref_attrs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: ref_attrs.len(),
        });
    }
    let mut precision = laplacian.matrix.clone();
    if laplacian.kind == LaplacianKind::Combinatorial {
        precision.add_diagonal(1.0);
    }
    let chol = Cholesky::new(&precision)?;
    let mut out = vec![[0.0; 3]; n];
    for c in 0..3 {
        let rhs: Vec<f64> = ref_attrs.iter().map(|a| a[c]).collect();
        for (o, v) in out.iter_mut().zip(chol.solve(&rhs)) {
            o[c] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{combinatorial_laplacian, generalized_laplacian, SpatialGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_node() -> GeneralizedLaplacian {
        combinatorial_laplacian(&SpatialGraph {
            n: 2,
            edges: vec![(0, 1, 1.0)],
            epsilon_sq: 1.0,
            sigma_sq: 0.4,
        })
    }

    fn random_laplacian(n: usize, seed: u64) -> GeneralizedLaplacian {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.1 {
                    edges.push((i, j, rng.random_range(0.05..1.0)));
                }
            }
        }
        combinatorial_laplacian(&SpatialGraph {
            n,
            edges,
            epsilon_sq: 1.0,
            sigma_sq: 0.4,
        })
    }

    #[test]
    fn two_node_bases() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let b = eigendecompose(&two_node()).unwrap();
        assert!(b.eigenvalues[0].abs() < 1e-15 && (b.eigenvalues[1] - 2.0).abs() < 1e-14);
        for (got, want) in b.eigenvector(0).iter().zip([s, s]) {
            assert!((got - want).abs() < 1e-15);
        }
        for (got, want) in b.eigenvector(1).iter().zip([s, -s]) {
            assert!((got - want).abs() < 1e-15);
        }
        let g = eigendecompose(&generalized_laplacian(&two_node())).unwrap();
        assert!((g.eigenvalues[0] - 1.0).abs() < 1e-14 && (g.eigenvalues[1] - 3.0).abs() < 1e-14);
        assert!(g.basis().sub(&b.basis()).frobenius_norm() < 1e-14);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn two_node_gft() {
        let b = eigendecompose(&two_node()).unwrap();
        let f = gft_forward(&[3.0, 1.0], &b).unwrap();
        assert!((f[0] - 4.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((f[1] - 2.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((f[0] - 2.8284).abs() < 1e-4 && (f[1] - 1.4142).abs() < 1e-4);
        assert!(matches!(gft_forward(&[1.0], &b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            gft_inverse(&[1.0, 2.0, 3.0], &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_basis_invariants() {
        let l = generalized_laplacian(&random_laplacian(100, 1));
        let b = eigendecompose(&l).unwrap();
        assert!(b.orthonormality_error() < 1e-9);
        assert!(b.spectral_residual(&l.matrix) < 1e-8);
        assert!(b.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        for k in 0..b.dim() {
            let first = b.eigenvector(k).iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
        // Bit-identical on repetition.
        assert_eq!(eigendecompose(&l).unwrap(), b);
    }

    #[test]
    fn shifted_basis_matches_direct() {
        let l = random_laplacian(60, 2);
        let shifted = eigendecompose(&l).unwrap().generalized();
        let gl = generalized_laplacian(&l);
        assert!(shifted.spectral_residual(&gl.matrix) < 1e-8);
        let direct = eigendecompose(&gl).unwrap();
        for (a, b) in shifted.eigenvalues.iter().zip(&direct.eigenvalues) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn dc_coefficient_on_connected_graph() {
        // Path graph: connected.
        let n = 30;
        let edges = (0..n - 1).map(|i| (i, i + 1, 0.7)).collect();
        let l = combinatorial_laplacian(&SpatialGraph {
            n,
            edges,
            epsilon_sq: 1.0,
            sigma_sq: 0.4,
        });
        let b = eigendecompose(&l).unwrap();
        let f = gft_forward(&vec![2.5; n], &b).unwrap();
        assert!((f[0] - 2.5 * (n as f64).sqrt()).abs() < 1e-9);
        assert!(f[1..].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn round_trip_and_energy() {
        let l = random_laplacian(80, 3);
        let b = eigendecompose(&l).unwrap();
        let g = b.generalized();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let f: Vec<f64> = (0..80).map(|_| rng.random_range(-128.0..128.0)).collect();
            for basis in [&b, &g] {
                let c = gft_forward(&f, basis).unwrap();
                let e0: f64 = f.iter().map(|x| x * x).sum::<f64>().sqrt();
                let e1: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((e0 - e1).abs() < 1e-9);
                let back = gft_inverse(&c, basis).unwrap();
                let err = back.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-9);
            }
        }
    }

    #[test]
    fn ggft_trivial_cases() {
        let g = eigendecompose(&random_laplacian(20, 5)).unwrap().generalized();
        assert!(ggft_forward(&[0.0; 20], &g).unwrap().iter().all(|&c| c == 0.0));
        let c = ggft_forward(g.eigenvector(7), &g).unwrap();
        for (k, v) in c.iter().enumerate() {
            let want = if k == 7 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_examples() {
        let p = inter_predict(&two_node(), &[[3.0, 0.0, 0.0], [0.0, 3.0, 0.0]]).unwrap();
        // (1/3)[[2,1],[1,2]] applied per channel.
        let want = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0]];
        for (a, b) in p.iter().zip(&want) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12);
            }
        }
        let empty = combinatorial_laplacian(&SpatialGraph::edgeless(4));
        let refs = [[1.0, -2.0, 3.0], [4.0, 5.0, -6.0], [7.0, 8.0, 9.0], [0.5, 0.25, 0.0]];
        assert_eq!(inter_predict(&empty, &refs).unwrap(), refs.to_vec());

        let l = random_laplacian(50, 6);
        let constant = vec![[12.0, -3.0, 0.5]; 50];
        for (a, b) in inter_predict(&l, &constant).unwrap().iter().zip(&constant) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-9);
            }
        }
        // Same result whether given L or L + I.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let refs: Vec<[f64; 3]> = (0..50).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let a = inter_predict(&l, &refs).unwrap();
        let b = inter_predict(&generalized_laplacian(&l), &refs).unwrap();
        assert_eq!(a, b);
        let gl = generalized_laplacian(&l);
        for c in 0..3 {
            let p: Vec<f64> = a.iter().map(|v| v[c]).collect();
            let lp = gl.matrix.mul_vec(&p);
            let r: f64 = lp
                .iter()
                .zip(&refs)
                .map(|(x, y)| (x - y[c]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(r < 1e-8);
        }
        assert!(inter_predict(&l, &refs[..3]).is_err());
    }
}
