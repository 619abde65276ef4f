//! Analytic targets with known moments, used to calibrate the sampler in
//! tests and examples.

use super::Target;

/// Independent standard normals in `dim` dimensions.
#[derive(Debug, Clone)]
pub struct StdNormal {
    dim: usize,
}

impl StdNormal {
    pub fn new(dim: usize) -> StdNormal {
        StdNormal { dim }
    }
}

impl Target for StdNormal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn logp_grad(&mut self, position: &[f64], grad: &mut [f64]) -> f64 {
        let mut logp = 0.0;
        for (g, &q) in grad.iter_mut().zip(position) {
            *g = -q;
            logp -= 0.5 * q * q;
        }
        logp
    }
}

/// Bivariate normal with unit variances and correlation `rho`.
#[derive(Debug, Clone)]
pub struct CorrelatedGaussian {
    rho: f64,
}

impl CorrelatedGaussian {
    pub fn new(rho: f64) -> CorrelatedGaussian {
        assert!(rho.abs() < 1.0);
        CorrelatedGaussian { rho }
    }
}

impl Target for CorrelatedGaussian {
    fn dim(&self) -> usize {
        2
    }

    fn logp_grad(&mut self, position: &[f64], grad: &mut [f64]) -> f64 {
        let (x, y) = (position[0], position[1]);
        let det = 1.0 - self.rho * self.rho;
        // Sigma^{-1} = [[1, -rho], [-rho, 1]] / (1 - rho^2)
        let gx = (x - self.rho * y) / det;
        let gy = (y - self.rho * x) / det;
        grad[0] = -gx;
        grad[1] = -gy;
        -0.5 * (x * gx + y * gy)
    }
}

/// One-dimensional Student-t with `df` degrees of freedom.
#[derive(Debug, Clone)]
pub struct StudentT {
    df: f64,
}

impl StudentT {
    pub fn new(df: f64) -> StudentT {
        assert!(df > 0.0);
        StudentT { df }
    }

    /// Standard deviation of the target (finite for df > 2).
    pub fn sd(&self) -> f64 {
        (self.df / (self.df - 2.0)).sqrt()
    }
}

impl Target for StudentT {
    fn dim(&self) -> usize {
        1
    }

    fn logp_grad(&mut self, position: &[f64], grad: &mut [f64]) -> f64 {
        let q = position[0];
        grad[0] = -(self.df + 1.0) * q / (self.df + q * q);
        -0.5 * (self.df + 1.0) * (q * q / self.df).ln_1p()
    }
}
