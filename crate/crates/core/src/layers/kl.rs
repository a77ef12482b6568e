use super::tensor::VariationalTensor;

/// `KL(N(μ, σ²) ‖ N(0, σ₀²)) = ln(σ₀/σ) + (σ² + μ²)/(2σ₀²) − ½`.
#[inline]
pub fn gaussian_kl_entry(mu: f64, sigma: f64, sigma0: f64) -> f64 {
    (sigma0 / sigma).ln() + (sigma * sigma + mu * mu) / (2.0 * sigma0 * sigma0) - 0.5
}

pub fn gaussian_kl_tensor(t: &VariationalTensor, sigma0: f64) -> f64 {
    t.mu()
        .iter()
        .zip(t.sigma())
        .map(|(&m, &s)| gaussian_kl_entry(m, s, sigma0))
        .fold(0.0, |a, b| a + b)
}

/// `KL(Bern(γ) ‖ Bern(λ))`, with `0·ln 0 = 0`.
pub fn bernoulli_kl(gamma: f64, lambda: f64) -> f64 {
    let on = if gamma > 0.0 { gamma * (gamma / lambda).ln() } else { 0.0 };
    let off = if gamma < 1.0 {
        (1.0 - gamma) * ((1.0 - gamma) / (1.0 - lambda)).ln()
    } else {
        0.0
    };
    on + off
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_gaussians() {
        assert_eq!(gaussian_kl_entry(0.0, 1.3, 1.3), 0.0);
    }

    #[test]
    fn unit_mean_offset() {
        assert!((gaussian_kl_entry(1.0, 1.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_limits() {
        assert_eq!(bernoulli_kl(0.3, 0.3), 0.0);
        assert!((bernoulli_kl(1.0, 0.5) - 2f64.ln()).abs() < 1e-15);
        assert!(bernoulli_kl(0.0, 0.2) > 0.0);
    }
}
