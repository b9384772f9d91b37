//! The Gaussian streaming counter.
//!
//! At step `t` the counter releases `Σ_{s≤t} x_s + (L̂z)_t` where the
//! `z_t ~ N(0, C_{ε,δ}·Δ²)` are independent and `Δ = ‖R̂‖_{1→2}`. Noise for step
//! `t` is derived from `(seed, t)` alone, so nothing beyond the current
//! binning buffer has to be kept.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::binned::{StreamState, StreamingEvaluator};
use crate::binning::{BinningParams, RowSource};
use crate::error::{Error, Result};

/// `C_{ε,δ} = 2 ln(1.25/δ)/ε²`.
///
/// `ε = 1` is accepted (with a warning) although the usual Gaussian-mechanism
/// argument asks for `ε < 1`.
pub fn gaussian_constant(epsilon: f64, delta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::param(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if epsilon == 1.0 {
        log::warn!("epsilon = 1 is on the boundary of the Gaussian mechanism's range");
    }
    Ok(2.0 * (1.25 / delta).ln() / (epsilon * epsilon))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, seed: u64) -> Result<Self> {
        gaussian_constant(epsilon, delta)?;
        Ok(Self {
            epsilon,
            delta,
            seed,
        })
    }

    pub fn gaussian_constant(&self) -> f64 {
        gaussian_constant(self.epsilon, self.delta).expect("validated on construction")
    }
}

/// Counter-based Gaussian noise: `sample(t)` depends only on the seed and `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSource {
    seed: u64,
    sigma: f64,
}

impl NoiseSource {
    pub fn new(seed: u64, sigma: f64) -> Self {
        Self { seed, sigma }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `z_t` for 1-based step `t`.
    pub fn sample(&self, t: usize) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(t as u64);
        let g: f64 = rng.sample(StandardNormal);
        self.sigma * g
    }

    /// `z_1 … z_n`, for offline comparison.
    pub fn vector(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|t| self.sample(t)).collect()
    }
}

/// One release of the counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterOutput {
    pub step: usize,
    pub true_prefix: f64,
    pub noisy_prefix: f64,
    pub noise_component: f64,
}

/// Streaming private counter over a binned left factor.
pub struct PrivateCounter<S> {
    evaluator: StreamingEvaluator<S>,
    noise: NoiseSource,
    prefix: f64,
}

impl<S: RowSource> PrivateCounter<S> {
    /// `sensitivity` is `‖R̂‖_{1→2}` of the matching right factor, computed
    /// offline. A zero sensitivity disables noise.
    pub fn new(
        source: S,
        binning: BinningParams,
        sensitivity: f64,
        privacy: &PrivacyParams,
    ) -> Result<Self> {
        if !(sensitivity >= 0.0 && sensitivity.is_finite()) {
            return Err(Error::param(format!("invalid sensitivity {sensitivity}")));
        }
        let sigma = sensitivity * privacy.gaussian_constant().sqrt();
        Ok(Self {
            evaluator: StreamingEvaluator::new(source, binning),
            noise: NoiseSource::new(privacy.seed, sigma),
            prefix: 0.0,
        })
    }

    pub fn noise(&self) -> &NoiseSource {
        &self.noise
    }

    pub fn state(&self) -> &StreamState {
        self.evaluator.state()
    }

    pub fn push(&mut self, x: f64) -> Result<CounterOutput> {
        let step = self.evaluator.state().step() + 1;
        if step > self.evaluator.n() {
            return Err(Error::StreamTooLong {
                n: self.evaluator.n(),
            });
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InputOutOfRange { step, value: x });
        }
        let noise = self.evaluator.push(self.noise.sample(step))?;
        self.prefix += x;
        Ok(CounterOutput {
            step,
            true_prefix: self.prefix,
            noisy_prefix: self.prefix + noise,
            noise_component: noise,
        })
    }
}

/// Runs a counter over a whole stream.
pub fn run_private_counter<S: RowSource>(
    stream: &[f64],
    source: S,
    binning: BinningParams,
    sensitivity: f64,
    privacy: &PrivacyParams,
) -> Result<Vec<CounterOutput>> {
    if stream.len() > source.dim() {
        return Err(Error::StreamTooLong { n: source.dim() });
    }
    let mut counter = PrivateCounter::new(source, binning, sensitivity, privacy)?;
    stream.iter().map(|&x| counter.push(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binned::BinnedMatrixView;
    use crate::binning::build_binning;
    use crate::kernels::ToeplitzSpec;

    #[test]
    fn gaussian_constant_examples() {
        let c = gaussian_constant(1.0, 1.25 / std::f64::consts::E).unwrap();
        assert!((c - 2.0).abs() < 1e-12);
        let c = gaussian_constant(0.5, 1e-6).unwrap();
        let expect = 2.0 * (1.25e6f64).ln() / 0.25;
        assert!((c - expect).abs() < 1e-12);
        assert!((c - 112.31).abs() < 0.01);
        assert!(gaussian_constant(0.4, 1e-6).unwrap() > c);
        assert!(gaussian_constant(0.5, 1e-7).unwrap() > c);
        assert!(gaussian_constant(0.0, 0.1).is_err());
        assert!(gaussian_constant(1.5, 0.1).is_err());
        assert!(gaussian_constant(0.5, 1.0).is_err());
        assert!(gaussian_constant(0.5, 0.0).is_err());
    }

    #[test]
    fn noise_is_counter_based() {
        let a = NoiseSource::new(9, 1.0);
        let first = a.sample(17);
        let _ = a.sample(3);
        assert_eq!(a.sample(17), first);
        assert_ne!(a.sample(17), a.sample(18));
        assert_ne!(NoiseSource::new(10, 1.0).sample(17), first);
        assert_eq!(NoiseSource::new(9, 0.0).sample(17), 0.0);
    }

    #[test]
    fn zero_sensitivity_is_exact() {
        let spec = ToeplitzSpec::bennett(32).unwrap();
        let params = BinningParams::new(0.8, 1.0 / 32.0).unwrap();
        let privacy = PrivacyParams::new(0.5, 1e-6, 1).unwrap();
        let stream: Vec<f64> = (0..32).map(|t| (t % 3 == 0) as u8 as f64).collect();
        let out = run_private_counter(&stream, spec.sqrt_rows(), params, 0.0, &privacy).unwrap();
        let mut prefix = 0.0;
        for (o, x) in out.iter().zip(&stream) {
            prefix += x;
            assert_eq!(o.true_prefix, prefix);
            assert_eq!(o.noisy_prefix, o.true_prefix);
        }
    }

    #[test]
    fn noise_matches_dense_product() {
        let n = 64;
        let spec = ToeplitzSpec::bennett(n).unwrap();
        let rows = spec.sqrt_rows();
        let params = BinningParams::new(0.85, 1.0 / n as f64).unwrap();
        let privacy = PrivacyParams::new(0.5, 1e-6, 42).unwrap();
        let out = run_private_counter(&vec![0.0; n], &rows, params, 1.3, &privacy).unwrap();
        let sigma = 1.3 * privacy.gaussian_constant().sqrt();
        let z = NoiseSource::new(42, sigma).vector(n);
        let dense = BinnedMatrixView::new(&rows, build_binning(&rows, &params))
            .unwrap()
            .materialize()
            .matvec(&z)
            .unwrap();
        for (o, d) in out.iter().zip(&dense) {
            assert!((o.noise_component - d).abs() <= 1e-10 * d.abs().max(1.0));
            assert_eq!(o.noisy_prefix, o.true_prefix + o.noise_component);
        }
    }

    #[test]
    fn input_validation() {
        let spec = ToeplitzSpec::bennett(2).unwrap();
        let params = BinningParams::new(0.5, 0.5).unwrap();
        let privacy = PrivacyParams::new(0.5, 1e-6, 1).unwrap();
        assert_eq!(
            run_private_counter(&[0.0, 1.5], spec.sqrt_rows(), params, 1.0, &privacy).unwrap_err(),
            Error::InputOutOfRange {
                step: 2,
                value: 1.5
            }
        );
        assert_eq!(
            run_private_counter(&[0.0; 3], spec.sqrt_rows(), params, 1.0, &privacy).unwrap_err(),
            Error::StreamTooLong { n: 2 }
        );
        assert!(PrivateCounter::new(spec.sqrt_rows(), params, -1.0, &privacy).is_err());
        let mut counter = PrivateCounter::new(spec.sqrt_rows(), params, 1.0, &privacy).unwrap();
        counter.push(1.0).unwrap();
        counter.push(0.0).unwrap();
        assert_eq!(
            counter.push(0.0).unwrap_err(),
            Error::StreamTooLong { n: 2 }
        );
    }
}
