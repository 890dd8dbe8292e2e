use rand::Rng;

use crate::linalg::Matrix;

/// Two-layer attention MLP scoring each neighbor embedding individually:
/// `s = tanh(tanh(z W1 + b1) · w2)`. The outer `tanh` is the fixed
/// activation applied before the neighborhood softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionScorer {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerGrads {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ScorerCache {
    hidden: Matrix,
    pub scores: Vec<f64>,
}

impl AttentionScorer {
    /// All-zero scorer: every neighbor gets the same weight.
    pub fn uniform(proto_dim: usize, hidden: usize) -> Self {
        AttentionScorer {
            w1: Matrix::zeros(proto_dim, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, 1),
        }
    }

    pub fn random<R: Rng + ?Sized>(proto_dim: usize, hidden: usize, rng: &mut R) -> Self {
        AttentionScorer {
            w1: Matrix::glorot(proto_dim, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::glorot(hidden, 1, rng),
        }
    }

    pub fn proto_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn is_uniform(&self) -> bool {
        self.w2.as_slice().iter().all(|&x| x == 0.0)
    }

    /// Scores every row of `z`.
    pub fn forward(&self, z: &Matrix) -> ScorerCache {
        let mut hidden = z.matmul(&self.w1);
        hidden.add_row_vector(self.b1.as_slice());
        hidden.map_inplace(f64::tanh);
        let scores = hidden.matmul(&self.w2).into_vec().into_iter().map(f64::tanh).collect();
        ScorerCache { hidden, scores }
    }

    /// Given `dL/ds` per row, returns parameter gradients and adds the
    /// input gradient into `dz`.
    pub fn backward(&self, z: &Matrix, cache: &ScorerCache, d_scores: &[f64], dz: &mut Matrix) -> ScorerGrads {
        let n = z.rows();
        let d_e: Vec<f64> = d_scores
            .iter()
            .zip(&cache.scores)
            .map(|(g, s)| g * (1.0 - s * s))
            .collect();
        let d_e = Matrix::from_vec(n, 1, d_e);
        let w2 = cache.hidden.t_matmul(&d_e);
        let mut d_pre = d_e.matmul_t(&self.w2);
        for (d, t) in d_pre.as_mut_slice().iter_mut().zip(cache.hidden.as_slice()) {
            *d *= 1.0 - t * t;
        }
        let w1 = z.t_matmul(&d_pre);
        let b1 = Matrix::from_vec(1, d_pre.cols(), d_pre.column_sums());
        dz.add_assign(&d_pre.matmul_t(&self.w1));
        ScorerGrads { w1, b1, w2 }
    }

    pub fn params(&self) -> [&Matrix; 3] {
        [&self.w1, &self.b1, &self.w2]
    }

    pub fn params_mut(&mut self) -> [&mut Matrix; 3] {
        [&mut self.w1, &mut self.b1, &mut self.w2]
    }
}

impl ScorerGrads {
    pub fn zeros_like(s: &AttentionScorer) -> Self {
        ScorerGrads {
            w1: Matrix::zeros(s.w1.rows(), s.w1.cols()),
            b1: Matrix::zeros(1, s.b1.cols()),
            w2: Matrix::zeros(s.w2.rows(), 1),
        }
    }

    pub fn into_array(self) -> [Matrix; 3] {
        [self.w1, self.b1, self.w2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_scorer_scores_zero() {
        let s = AttentionScorer::uniform(3, 4);
        let z = Matrix::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]);
        assert_eq!(s.forward(&z).scores, vec![0.0, 0.0]);
    }

    #[test]
    fn scores_are_finite_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = AttentionScorer::random(4, 5, &mut rng);
        let z = Matrix::random_uniform(10, 4, 100.0, &mut rng);
        for x in s.forward(&z).scores {
            assert!(x.is_finite() && x.abs() <= 1.0);
        }
    }
}
