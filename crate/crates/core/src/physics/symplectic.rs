use ndarray::Array2;

/// Ω = [[0, Iₙ], [−Iₙ, 0]] acting on vectors laid out as `[q…, p…]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymplecticForm {
    pub n: usize,
}

impl SymplecticForm {
    pub fn new(n: usize) -> Self {
        Self { n }
    }

    /// Ω·v = (v_p, −v_q).
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), 2 * self.n, "vector length must be 2n");
        let (vq, vp) = v.split_at(self.n);
        vp.iter().copied().chain(vq.iter().map(|x| -x)).collect()
    }

    /// Ωᵀ·v = (−v_p, v_q).
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        self.apply(v).into_iter().map(|x| -x).collect()
    }

    pub fn matrix(&self) -> Array2<f64> {
        let n = self.n;
        let mut m = Array2::zeros((2 * n, 2 * n));
        for i in 0..n {
            m[[i, n + i]] = 1.0;
            m[[n + i, i]] = -1.0;
        }
        m
    }
}
