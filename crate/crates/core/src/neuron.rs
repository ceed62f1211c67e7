//! Leaky integrate-and-fire neuron: closed-form rate curve, its inverse, and
//! the discrete-time update used by the spiking simulator.
//!
//! Membrane dynamics are `tau_m · dv/dt = −v + R·I`. Under constant input the
//! neuron fires at
//!
//! ```text
//! f(I) = 1 / (delta_ref + tau_m · ln(R·I / (R·I − v_th)))    for R·I > v_th
//! ```
//!
//! and is silent at or below the rheobase `v_th / R`.

use serde::{Deserialize, Serialize};

use crate::error::{LsoError, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Physical LIF constants shared by every neuron of a layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams<T> {
    /// Membrane time constant (s).
    pub tau_m: T,
    /// Membrane resistance (Ω).
    #[serde(rename = "R")]
    pub r: T,
    /// Firing threshold (V).
    pub v_th: T,
    /// Refractory period (s).
    pub delta_ref: T,
    /// Background current added to every neuron's input (A).
    pub i_bias: T,
    /// Network maximum firing rate (Hz).
    pub f_max: T,
}

impl<T: Real> Default for NeuronParams<T> {
    fn default() -> Self {
        Self {
            tau_m: T::lit(0.02),
            r: T::one(),
            v_th: T::one(),
            delta_ref: T::lit(0.001),
            i_bias: T::one(),
            f_max: T::lit(1000.0),
        }
    }
}

impl<T: Real> NeuronParams<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.tau_m,
            self.r,
            self.v_th,
            self.delta_ref,
            self.i_bias,
            self.f_max,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(LsoError::InvalidArgument(
                "neuron parameters must be finite".into(),
            ));
        }
        if self.tau_m <= T::zero() || self.r <= T::zero() || self.v_th <= T::zero() {
            return Err(LsoError::InvalidArgument(format!(
                "neuron requires tau_m > 0, R > 0, v_th > 0 (got {}, {}, {})",
                self.tau_m, self.r, self.v_th
            )));
        }
        if self.delta_ref < T::zero() || self.f_max <= T::zero() {
            return Err(LsoError::InvalidArgument(format!(
                "neuron requires delta_ref >= 0 and f_max > 0 (got {}, {})",
                self.delta_ref, self.f_max
            )));
        }
        if self.delta_ref > T::zero() && self.f_max * self.delta_ref > T::one() {
            return Err(LsoError::InvalidArgument(format!(
                "f_max {} exceeds the refractory limit 1/delta_ref = {}",
                self.f_max,
                T::one() / self.delta_ref
            )));
        }
        Ok(())
    }

    /// Minimum constant current that makes the neuron fire.
    #[inline]
    pub fn rheobase(&self) -> T {
        self.v_th / self.r
    }

    /// Rate asymptote `1 / delta_ref`, infinite without a refractory period.
    #[inline]
    pub fn rate_limit(&self) -> T {
        if self.delta_ref > T::zero() {
            T::one() / self.delta_ref
        } else {
            T::infinity()
        }
    }

    pub fn cast<U: Real>(&self) -> NeuronParams<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        NeuronParams {
            tau_m: c(self.tau_m),
            r: c(self.r),
            v_th: c(self.v_th),
            delta_ref: c(self.delta_ref),
            i_bias: c(self.i_bias),
            f_max: c(self.f_max),
        }
    }
}

/// Steady-state firing rate (Hz) under constant input current `i`, capped at `f_max`.
pub fn lif_rate<T: Real>(i: T, p: &NeuronParams<T>) -> T {
    let drive = p.r * i;
    if !(drive > p.v_th) {
        return T::zero();
    }
    // ln(RI / (RI - v_th)) = -ln(1 - v_th/RI)
    let log_term = -(-(p.v_th / drive)).ln_1p();
    let rate = T::one() / (p.delta_ref + p.tau_m * log_term);
    rate.min(p.f_max)
}

/// Current (A) that produces steady firing rate `f`. `f = 0` maps to the rheobase.
pub fn inv_lif<T: Real>(f: T, p: &NeuronParams<T>) -> Result<T> {
    if !(f >= T::zero()) || f >= p.rate_limit() {
        return Err(LsoError::Domain {
            function: "inv_lif",
            value: f.to_f64_lossy(),
            location: None,
        });
    }
    if f == T::zero() {
        return Ok(p.rheobase());
    }
    let c = (f.recip() - p.delta_ref) / p.tau_m;
    // e^C v_th / (R (e^C - 1)) = v_th / (R (1 - e^-C))
    let denom = -(-c).exp_m1();
    Ok(p.v_th / (p.r * denom))
}

/// Signed inverse used to turn target activations into target currents.
///
/// Positive rates map to `inv_lif(a) − i_bias`; negative rates are mirrored,
/// inverted and negated; zero maps to zero. The result is odd in `a`.
pub fn signed_inv_lif<T: Real>(a: &Matrix<T>, p: &NeuronParams<T>) -> Result<Matrix<T>> {
    let mut out = Matrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let v = a.get(i, j);
            if !v.is_finite() {
                return Err(LsoError::NonFinite {
                    context: "target activations".into(),
                    row: i,
                    col: j,
                    value: v.to_f64_lossy(),
                });
            }
            if v == T::zero() {
                continue;
            }
            let mag = inv_lif(v.abs(), p).map_err(|_| LsoError::Domain {
                function: "signed_inv_lif",
                value: v.to_f64_lossy(),
                location: Some((i, j)),
            })? - p.i_bias;
            out.set(i, j, if v > T::zero() { mag } else { -mag });
        }
    }
    Ok(out)
}

/// Membrane state of one neuron.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LifState<T> {
    pub v: T,
    pub refrac_remaining: T,
}

/// Advance one neuron by `dt` under constant current `i`.
///
/// Between events the membrane follows the exact exponential solution. The
/// firing time is located inside the step; at that instant `v_th` is
/// subtracted from the voltage (any excess is kept) and the refractory period
/// starts. A refractory neuron holds `v`; if its refractory period ends part
/// way through a step, only the rest of the step is integrated.
pub fn lif_step<T: Real>(
    state: LifState<T>,
    i: T,
    dt: T,
    p: &NeuronParams<T>,
) -> (LifState<T>, bool) {
    let mut v = state.v;
    let mut free = dt;
    if state.refrac_remaining > T::zero() {
        let mut remaining = state.refrac_remaining - dt;
        // absorb accumulated round-off from repeated decrements
        if remaining < dt * T::lit(1e-6) {
            remaining = T::zero();
        }
        if remaining > T::zero() || state.refrac_remaining >= dt {
            return (
                LifState {
                    v,
                    refrac_remaining: remaining,
                },
                false,
            );
        }
        free = dt - state.refrac_remaining;
    }

    let drive = p.r * i;
    let relax = |v0: T, t: T| drive + (v0 - drive) * (-t / p.tau_m).exp();
    let t_fire = if v >= p.v_th {
        T::zero()
    } else {
        let v_end = relax(v, free);
        if v_end < p.v_th {
            return (
                LifState {
                    v: v_end,
                    refrac_remaining: T::zero(),
                },
                false,
            );
        }
        let t = p.tau_m * ((drive - v) / (drive - p.v_th)).ln();
        v = p.v_th;
        t.max(T::zero()).min(free)
    };
    v = v - p.v_th;

    let after = free - t_fire;
    let refrac_remaining = if after > p.delta_ref {
        v = relax(v, after - p.delta_ref);
        T::zero()
    } else {
        p.delta_ref - after
    };
    (LifState { v, refrac_remaining }, true)
}

/// Element-wise `lif_rate(x + i_bias)`.
pub fn lif_rate_matrix<T: Real>(currents: &Matrix<T>, p: &NeuronParams<T>) -> Matrix<T> {
    currents.map(|c| lif_rate(c + p.i_bias, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn defaults() -> NeuronParams<f64> {
        NeuronParams::default()
    }

    /// Bisection on the closed-form rate curve: an inverse oracle that does not
    /// touch `inv_lif`.
    fn bisect_current(target: f64, p: &NeuronParams<f64>) -> f64 {
        let (mut lo, mut hi) = (p.rheobase(), 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if lif_rate(mid, p) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn rate_zero_at_and_below_rheobase() {
        let p = defaults();
        assert_eq!(lif_rate(1.0, &p), 0.0);
        assert_eq!(lif_rate(0.5, &p), 0.0);
        assert_eq!(lif_rate(-3.0, &p), 0.0);
    }

    #[test]
    fn rate_at_twice_rheobase() {
        // closed form: 1 / (0.001 + 0.02 ln 2) = 67.2814...
        let f = lif_rate(2.0, &defaults());
        assert!((f - 67.2814).abs() < 1e-3, "{f}");
    }

    #[test]
    fn rate_is_capped() {
        let p = NeuronParams {
            f_max: 100.0,
            ..defaults()
        };
        assert_eq!(lif_rate(1e4, &p), 100.0);
    }

    #[test]
    fn inverse_at_zero_is_rheobase() {
        assert_eq!(inv_lif(0.0, &defaults()).unwrap(), 1.0);
    }

    #[test]
    fn inverse_at_500hz_matches_bisection() {
        let p = defaults();
        let oracle = bisect_current(500.0, &p);
        assert!((oracle - 20.504).abs() < 1e-3, "oracle {oracle}");
        let i = inv_lif(500.0, &p).unwrap();
        assert!((i - oracle).abs() / oracle < 1e-9);
    }

    #[test]
    fn inverse_domain_errors() {
        let p = defaults();
        assert!(inv_lif(-1.0, &p).is_err());
        assert!(inv_lif(1000.0, &p).is_err());
        assert!(inv_lif(f64::NAN, &p).is_err());
        let no_ref = NeuronParams {
            delta_ref: 0.0,
            ..defaults()
        };
        assert!(inv_lif(5000.0, &no_ref).is_ok());
    }

    #[test]
    fn signed_inverse_is_antisymmetric() {
        let p = defaults();
        let a = Matrix::from_rows(&[[100.0, -100.0, 0.0]]);
        let g = signed_inv_lif(&a, &p).unwrap();
        let expect = inv_lif(100.0, &p).unwrap() - 1.0;
        assert_eq!(g.get(0, 0), expect);
        assert_eq!(g.get(0, 1), -expect);
        assert_eq!(g.get(0, 2), 0.0);
    }

    #[test]
    fn signed_inverse_reports_element() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, -5000.0]]);
        match signed_inv_lif(&a, &defaults()).unwrap_err() {
            LsoError::Domain { location, .. } => assert_eq!(location, Some((1, 1))),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn no_drive_never_spikes() {
        let p = defaults();
        let mut s = LifState::default();
        for _ in 0..1000 {
            let (next, spiked) = lif_step(s, 0.0, 1e-3, &p);
            assert!(!spiked);
            s = next;
        }
        assert_eq!(s.v, 0.0);
    }

    #[test]
    fn subtract_reset_keeps_residual() {
        let p = defaults();
        let s = LifState {
            v: 1.3,
            refrac_remaining: 0.0,
        };
        let (next, spiked) = lif_step(s, 5.0, 1e-3, &p);
        assert!(spiked);
        assert!((next.v - 0.3).abs() < 1e-15);
        assert_eq!(next.refrac_remaining, 0.0);
    }

    #[test]
    fn firing_time_inside_step() {
        let p = defaults();
        let s = LifState {
            v: 0.95,
            refrac_remaining: 0.0,
        };
        let i = 5.0;
        // crossing of the exact trajectory from 0.95 towards 5
        let t_fire = p.tau_m * ((i - 0.95) / (i - 1.0f64)).ln();
        let (next, spiked) = lif_step(s, i, 1e-3, &p);
        assert!(spiked);
        assert_eq!(next.v, 0.0);
        let want = p.delta_ref - (1e-3 - t_fire);
        assert!((next.refrac_remaining - want).abs() < 1e-15);
    }

    #[test]
    fn refractory_ending_mid_step_integrates_remainder() {
        let p = defaults();
        let s = LifState {
            v: 0.2,
            refrac_remaining: 4e-4,
        };
        let (next, spiked) = lif_step(s, 0.5, 1e-3, &p);
        assert!(!spiked);
        let want = 0.5 + (0.2 - 0.5) * (-6e-4f64 / p.tau_m).exp();
        assert!((next.v - want).abs() < 1e-15);
        assert_eq!(next.refrac_remaining, 0.0);
    }

    #[test]
    fn refractory_holds_voltage() {
        let p = defaults();
        let s = LifState {
            v: 0.3,
            refrac_remaining: 0.002,
        };
        let (s, spiked) = lif_step(s, 100.0, 1e-3, &p);
        assert!(!spiked);
        assert_eq!(s.v, 0.3);
        assert!((s.refrac_remaining - 0.001).abs() < 1e-15);
    }

    fn count_spikes(i: f64, dt: f64, duration: f64, p: &NeuronParams<f64>) -> (usize, Vec<usize>) {
        let steps = (duration / dt).round() as usize;
        let mut s = LifState::default();
        let mut spikes = Vec::new();
        for k in 0..steps {
            let (next, spiked) = lif_step(s, i, dt, p);
            s = next;
            if spiked {
                spikes.push(k);
            }
        }
        (spikes.len(), spikes)
    }

    #[test]
    fn stepping_at_200hz_counts_200_spikes() {
        let p = defaults();
        let i = inv_lif(200.0, &p).unwrap();
        let (n, _) = count_spikes(i, 1e-3, 1.0, &p);
        assert!((n as f64 - 200.0).abs() <= 4.0, "{n} spikes");
    }

    #[test]
    fn long_run_rate_tracks_closed_form() {
        let p = defaults();
        for target in [50.0, 100.0, 150.0, 250.0, 333.0, 400.0, 500.0, 700.0, 900.0] {
            let i = inv_lif(target, &p).unwrap();
            let (n, _) = count_spikes(i, 1e-3, 1.0, &p);
            let rel = (n as f64 - target).abs() / target;
            assert!(rel <= 0.02, "target {target}: {n} spikes");
        }
    }

    #[test]
    fn intervals_settle_quickly() {
        // with an ISI that is a whole number of steps the pattern is exactly periodic
        let p = defaults();
        let i = inv_lif(250.0, &p).unwrap() * 1.0001;
        let (_, spikes) = count_spikes(i, 1e-3, 0.2, &p);
        let isi: Vec<usize> = spikes.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(isi.len() > 10);
        let settled = &isi[3..];
        assert!(settled.iter().all(|&d| d == settled[0]), "{isi:?}");
    }

    #[test]
    fn f32_instantiation() {
        let p = NeuronParams::<f32>::default();
        let f = lif_rate(2.0f32, &p);
        assert!((f - 67.2834).abs() < 1e-2);
        let i = inv_lif(f, &p).unwrap();
        assert!((i - 2.0).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn rate_monotone(a in 0.0f64..200.0, b in 0.0f64..200.0) {
            let p = defaults();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(lif_rate(lo, &p) <= lif_rate(hi, &p));
            if lo > p.rheobase() && hi > lo * (1.0 + 1e-9) {
                prop_assert!(lif_rate(lo, &p) < lif_rate(hi, &p));
            }
        }

        #[test]
        fn inverse_round_trip(scale in 1e-6f64..99.0) {
            let p = defaults();
            let i = p.rheobase() * (1.0 + scale);
            let back = inv_lif(lif_rate(i, &p), &p).unwrap();
            prop_assert!((back - i).abs() / i < 1e-9);
        }

        #[test]
        fn signed_inverse_is_odd(a in -900.0f64..900.0) {
            let p = defaults();
            let pos = signed_inv_lif(&Matrix::from_rows(&[[a]]), &p).unwrap().get(0, 0);
            let neg = signed_inv_lif(&Matrix::from_rows(&[[-a]]), &p).unwrap().get(0, 0);
            prop_assert_eq!(pos, -neg);
        }

        #[test]
        fn bias_round_trip(a in 5.0f64..900.0) {
            let p = defaults();
            let g = signed_inv_lif(&Matrix::from_rows(&[[a]]), &p).unwrap().get(0, 0);
            let f = lif_rate(g + p.i_bias, &p);
            prop_assert!((f - a).abs() / a < 1e-9);
        }
    }
}
