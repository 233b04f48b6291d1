//! Disturbance signals `d(t)` entering through the input channel `G`.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounded, piecewise-smooth disturbance with values in `R^dim`.
///
/// Vector-valued kinds point along fixed or random unit directions, so
/// `‖d(t)‖` is the scalar envelope and the sup-norm is known in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSignal {
    Zero {
        dim: usize,
    },
    /// `d = amplitude · 1/√dim`
    Constant {
        dim: usize,
        amplitude: f64,
    },
    /// `d(t) = amplitude · sin(2π f t) · 1/√dim`
    Sinusoid {
        dim: usize,
        amplitude: f64,
        frequency: f64,
    },
    /// Held for `dwell` seconds at `amplitude` times a random unit vector.
    /// Interval `k` draws from the ChaCha8 stream `k` of `seed`, so any
    /// interval can be evaluated without replaying the previous ones.
    PiecewiseConstantRandom {
        dim: usize,
        amplitude: f64,
        dwell: f64,
        seed: u64,
    },
    /// Phase-estimate error `e(t) = amplitude · sin(2π f t)` (constant when
    /// `f = 0`). The resulting `d` depends on the plant state and is derived
    /// by the mechanical plant.
    PhaseErrorDriven {
        amplitude: f64,
        frequency: f64,
    },
}

fn uniform_direction(dim: usize) -> DVector<f64> {
    DVector::from_element(dim, 1.0 / (dim as f64).sqrt())
}

impl DisturbanceSignal {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        match *self {
            Self::Zero { dim } | Self::Constant { dim, .. } if dim == 0 => {
                bad("disturbance dimension must be positive")
            }
            Self::Sinusoid { frequency, .. } if !(frequency >= 0.0) => {
                bad("sinusoid frequency must be non-negative")
            }
            Self::PiecewiseConstantRandom { dwell, .. } if !(dwell > 0.0) => {
                bad("random disturbance dwell time must be positive")
            }
            Self::PhaseErrorDriven { frequency, .. } if !(frequency >= 0.0) => {
                bad("phase error frequency must be non-negative")
            }
            _ => Ok(()),
        }
    }

    /// Returns a copy with the amplitude replaced.
    pub fn with_amplitude(&self, a: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Zero { .. } => {}
            Self::Constant { amplitude, .. }
            | Self::Sinusoid { amplitude, .. }
            | Self::PiecewiseConstantRandom { amplitude, .. }
            | Self::PhaseErrorDriven { amplitude, .. } => *amplitude = a,
        }
        out
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            Self::Zero { .. } => 0.0,
            Self::Constant { amplitude, .. }
            | Self::Sinusoid { amplitude, .. }
            | Self::PiecewiseConstantRandom { amplitude, .. }
            | Self::PhaseErrorDriven { amplitude, .. } => amplitude,
        }
    }

    pub fn is_phase_driven(&self) -> bool {
        matches!(self, Self::PhaseErrorDriven { .. })
    }

    /// `d(t)` for the exogenous kinds.
    pub fn sample(&self, t: f64) -> Result<DVector<f64>> {
        Ok(match *self {
            Self::Zero { dim } => DVector::zeros(dim),
            Self::Constant { dim, amplitude } => uniform_direction(dim) * amplitude,
            Self::Sinusoid {
                dim,
                amplitude,
                frequency,
            } => uniform_direction(dim) * (amplitude * (TAU * frequency * t).sin()),
            Self::PiecewiseConstantRandom {
                dim,
                amplitude,
                dwell,
                seed,
            } => {
                let interval = (t.max(0.0) / dwell).floor() as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(interval);
                let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = v.norm();
                let dir = if norm > 0.0 { v / norm } else { uniform_direction(dim) };
                dir * amplitude
            }
            Self::PhaseErrorDriven { .. } => {
                return Err(Error::Config(
                    "phase_error_driven disturbance depends on the plant state".into(),
                ))
            }
        })
    }

    /// Phase error `e(t)`; zero for the exogenous kinds.
    pub fn phase_error(&self, t: f64) -> f64 {
        match *self {
            Self::PhaseErrorDriven {
                amplitude,
                frequency,
            } => {
                if frequency == 0.0 {
                    amplitude
                } else {
                    amplitude * (TAU * frequency * t).sin()
                }
            }
            _ => 0.0,
        }
    }

    /// `sup_{0 ≤ t ≤ horizon} ‖d(t)‖`, exact for the exogenous kinds. The
    /// phase-driven kind needs a trajectory; see
    /// [`crate::simulator::refined_sup_norm`].
    pub fn sup_norm(&self, horizon: f64) -> Result<f64> {
        if !(horizon > 0.0) {
            return Err(Error::OutOfRange(format!("horizon = {horizon} must be positive")));
        }
        Ok(match *self {
            Self::Zero { .. } => 0.0,
            Self::Constant { amplitude, .. } => amplitude.abs(),
            Self::Sinusoid {
                amplitude,
                frequency,
                ..
            } => {
                let phase = TAU * frequency * horizon;
                if phase >= FRAC_PI_2 {
                    amplitude.abs()
                } else {
                    amplitude.abs() * phase.sin()
                }
            }
            Self::PiecewiseConstantRandom { amplitude, .. } => amplitude.abs(),
            Self::PhaseErrorDriven { .. } => {
                return Err(Error::Config(
                    "sup-norm of a phase-driven disturbance requires a trajectory".into(),
                ))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_signal() {
        let d = DisturbanceSignal::Zero { dim: 2 };
        for t in [0.0, 0.3, 100.0] {
            assert_eq!(d.sample(t).unwrap(), DVector::zeros(2));
        }
        assert_eq!(d.sup_norm(10.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_sup_is_abs() {
        let d = DisturbanceSignal::Constant {
            dim: 3,
            amplitude: -0.2,
        };
        assert!((d.sample(1.0).unwrap().norm() - 0.2).abs() < 1e-15);
        assert_eq!(d.sup_norm(1.0).unwrap(), 0.2);
    }

    #[test]
    fn sinusoid_bound() {
        let d = DisturbanceSignal::Sinusoid {
            dim: 2,
            amplitude: 0.3,
            frequency: 0.5,
        };
        assert_eq!(d.sup_norm(50.0).unwrap(), 0.3);
        let sampled = (0..20_001)
            .map(|i| d.sample(i as f64 * 1e-3).unwrap().norm())
            .fold(0.0, f64::max);
        assert!(sampled <= 0.3 + 1e-15 && sampled > 0.3 - 1e-6);
        // horizon shorter than a quarter period
        assert!((d.sup_norm(0.1).unwrap() - 0.3 * (TAU * 0.05f64).sin()).abs() < 1e-15);
    }

    #[test]
    fn random_is_deterministic_and_bounded() {
        let d = DisturbanceSignal::PiecewiseConstantRandom {
            dim: 2,
            amplitude: 0.05,
            dwell: 0.25,
            seed: 42,
        };
        let a: Vec<_> = (0..400).map(|i| d.sample(i as f64 * 0.01).unwrap()).collect();
        let b: Vec<_> = (0..400).map(|i| d.sample(i as f64 * 0.01).unwrap()).collect();
        assert_eq!(a, b);
        for v in &a {
            assert!((v.norm() - 0.05).abs() < 1e-15);
        }
        // held within an interval, changes across intervals
        assert_eq!(d.sample(0.26).unwrap(), d.sample(0.49).unwrap());
        assert_ne!(d.sample(0.1).unwrap(), d.sample(0.3).unwrap());
        let other = DisturbanceSignal::PiecewiseConstantRandom {
            dim: 2,
            amplitude: 0.05,
            dwell: 0.25,
            seed: 43,
        };
        assert_ne!(d.sample(0.1).unwrap(), other.sample(0.1).unwrap());
    }

    #[test]
    fn phase_driven_needs_state() {
        let d = DisturbanceSignal::PhaseErrorDriven {
            amplitude: 0.02,
            frequency: 0.0,
        };
        assert!(d.sample(0.0).is_err());
        assert!(d.sup_norm(1.0).is_err());
        assert_eq!(d.phase_error(3.0), 0.02);
    }

    #[test]
    fn rejects_bad_parameters() {
        let d = DisturbanceSignal::PiecewiseConstantRandom {
            dim: 1,
            amplitude: 0.1,
            dwell: 0.0,
            seed: 0,
        };
        assert!(d.validate().is_err());
        assert!(DisturbanceSignal::Zero { dim: 1 }.sup_norm(0.0).is_err());
    }

    proptest! {
        #[test]
        fn sup_norm_scales_linearly(a in 0.0f64..2.0, lambda in 0.0f64..10.0, kind in 0usize..3, seed in 0u64..100) {
            let base = match kind {
                0 => DisturbanceSignal::Constant { dim: 2, amplitude: a },
                1 => DisturbanceSignal::Sinusoid { dim: 2, amplitude: a, frequency: 0.7 },
                _ => DisturbanceSignal::PiecewiseConstantRandom { dim: 2, amplitude: a, dwell: 0.3, seed },
            };
            let scaled = base.with_amplitude(a * lambda);
            let s0 = base.sup_norm(20.0).unwrap();
            let s1 = scaled.sup_norm(20.0).unwrap();
            prop_assert!((s1 - lambda * s0).abs() <= 1e-12 * (1.0 + s1));
        }
    }
}
