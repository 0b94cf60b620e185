//! Mono-exponential T₂ estimation from multi-echo magnitudes.

use super::{EchoSeries, RasterError, Unit, VoxelGrid};
use crate::par::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Discard the first echo (stimulated-echo contamination) before fitting.
    pub drop_first_echo: bool,
    /// Polish the log-linear estimate with Gauss-Newton on the linear-domain residual.
    pub nonlinear_refinement: bool,
    pub execution: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { drop_first_echo: false, nonlinear_refinement: false, execution: Execution::Parallel }
    }
}

/// Per-voxel fit of `S(TE) = S0 · exp(-TE / T2)`.
#[derive(Clone, Debug)]
pub struct T2Fit {
    /// T₂ in ms, NaN where the fit is invalid.
    pub t2: VoxelGrid,
    /// Extrapolated signal at TE = 0, NaN where invalid.
    pub s0: VoxelGrid,
    pub invalid_count: usize,
}

pub fn fit_t2(series: &EchoSeries, opts: &FitOptions) -> Result<T2Fit, RasterError> {
    let skip = usize::from(opts.drop_first_echo);
    let times = &series.echo_times()[skip..];
    let grids = &series.grids()[skip..];
    if times.len() < 3 {
        return Err(RasterError::TooFewEchoes(times.len()));
    }
    let reference = &grids[0];
    let fits = par::map_indexed_with(
        reference.len(),
        opts.execution,
        || vec![0.0; times.len()],
        |signal, v| {
            for (s, g) in signal.iter_mut().zip(grids) {
                *s = g.values()[v];
            }
            fit_voxel(times, signal, opts.nonlinear_refinement)
        },
    );
    let invalid_count = fits.iter().filter(|f| f.is_none()).count();
    let (t2, s0): (Vec<f64>, Vec<f64>) =
        fits.into_iter().map(|f| f.unwrap_or((f64::NAN, f64::NAN))).unzip();
    Ok(T2Fit {
        t2: reference.with_values(t2, Unit::Ms)?,
        s0: reference.with_values(s0, Unit::ArbitrarySignal)?,
        invalid_count,
    })
}

/// Returns `(T2, S0)` or `None` when the voxel cannot be fitted.
pub(crate) fn fit_voxel(times: &[f64], signal: &[f64], refine: bool) -> Option<(f64, f64)> {
    if signal.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return None;
    }
    let n = times.len() as f64;
    let mean_t = times.iter().sum::<f64>() / n;
    let mean_y = signal.iter().map(|s| s.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&t, &s) in times.iter().zip(signal) {
        let dt = t - mean_t;
        sxy += dt * (s.ln() - mean_y);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) || !slope.is_finite() {
        return None;
    }
    let mut rate = -slope;
    let mut s0 = (mean_y - slope * mean_t).exp();
    if refine {
        if let Some((r, a)) = gauss_newton(times, signal, rate, s0) {
            rate = r;
            s0 = a;
        }
    }
    let t2 = 1.0 / rate;
    (t2.is_finite() && t2 > 0.0 && s0.is_finite()).then_some((t2, s0))
}

fn gauss_newton(times: &[f64], signal: &[f64], mut rate: f64, mut s0: f64) -> Option<(f64, f64)> {
    for _ in 0..50 {
        // normal equations for (s0, rate)
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&t, &s) in times.iter().zip(signal) {
            let e = (-rate * t).exp();
            let r = s - s0 * e;
            let j1 = e;
            let j2 = -s0 * t * e;
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            b1 += j1 * r;
            b2 += j2 * r;
        }
        let det = a11 * a22 - a12 * a12;
        if !(det.abs() > 0.0) {
            return None;
        }
        let d_s0 = (a22 * b1 - a12 * b2) / det;
        let d_rate = (a11 * b2 - a12 * b1) / det;
        s0 += d_s0;
        rate += d_rate;
        if !(rate > 0.0) || !s0.is_finite() {
            return None;
        }
        if d_rate.abs() <= 1e-14 * rate && d_s0.abs() <= 1e-14 * s0.abs() {
            break;
        }
    }
    Some((rate, s0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;

    fn series_from(times: &[f64], voxels: &[Vec<f64>]) -> EchoSeries {
        let grids = (0..times.len())
            .map(|e| {
                let vals = voxels.iter().map(|v| v[e]).collect();
                VoxelGrid::axis_aligned([voxels.len(), 1, 1], Vec3::repeat(1.0), Vec3::zeros(), vals, Unit::ArbitrarySignal)
                    .unwrap()
            })
            .collect();
        EchoSeries::new(times.to_vec(), grids).unwrap()
    }

    fn decay(s0: f64, t2: f64, times: &[f64]) -> Vec<f64> {
        times.iter().map(|t| s0 * (-t / t2).exp()).collect()
    }

    #[test]
    fn noiseless_decay_is_inverted() {
        let times: Vec<f64> = (1..=8).map(|i| 10.0 * i as f64).collect();
        let s = series_from(&times, &[decay(1000.0, 40.0, &times)]);
        let fit = fit_t2(&s, &FitOptions::default()).unwrap();
        assert!((fit.t2.values()[0] - 40.0).abs() / 40.0 < 1e-6);
        assert!((fit.s0.values()[0] - 1000.0).abs() / 1000.0 < 1e-6);
        assert_eq!(fit.invalid_count, 0);
    }

    #[test]
    fn recovers_full_range_with_and_without_refinement() {
        let times: Vec<f64> = (1..=8).map(|i| 10.0 * i as f64).collect();
        let t2s = [5.0, 12.5, 33.0, 75.0, 140.0, 200.0];
        let voxels: Vec<_> = t2s.iter().map(|&t| decay(730.0, t, &times)).collect();
        let s = series_from(&times, &voxels);
        for refine in [false, true] {
            let opts = FitOptions { nonlinear_refinement: refine, ..Default::default() };
            let fit = fit_t2(&s, &opts).unwrap();
            for (got, want) in fit.t2.values().iter().zip(t2s) {
                assert!((got - want).abs() / want < 1e-6, "{got} vs {want}");
            }
            for got in fit.s0.values() {
                assert!((got - 730.0).abs() / 730.0 < 1e-6);
            }
        }
    }

    #[test]
    fn flat_and_nonpositive_signals_are_invalid() {
        let times = [10.0, 20.0, 30.0, 40.0];
        let good = decay(500.0, 30.0, &times);
        let flat = vec![200.0; 4];
        let rising = vec![1.0, 2.0, 3.0, 4.0];
        let zero = vec![100.0, 50.0, 0.0, 10.0];
        let s = series_from(&times, &[good, flat, rising, zero]);
        let fit = fit_t2(&s, &FitOptions::default()).unwrap();
        let t2 = fit.t2.values();
        assert!((t2[0] - 30.0).abs() < 1e-9);
        assert!(t2[1].is_nan() && t2[2].is_nan() && t2[3].is_nan());
        assert_eq!(fit.invalid_count, 3);
    }

    #[test]
    fn dropping_first_echo_needs_three_left() {
        let times = [10.0, 20.0, 30.0];
        let s = series_from(&times, &[decay(500.0, 30.0, &times)]);
        let opts = FitOptions { drop_first_echo: true, ..Default::default() };
        assert_eq!(fit_t2(&s, &opts).unwrap_err(), RasterError::TooFewEchoes(2));

        // a contaminated first echo no longer biases the fit once dropped
        let times = [10.0, 20.0, 30.0, 40.0];
        let mut sig = decay(500.0, 30.0, &times);
        sig[0] *= 0.7;
        let s = series_from(&times, &[sig]);
        let fit = fit_t2(&s, &opts).unwrap();
        assert!((fit.t2.values()[0] - 30.0).abs() < 1e-9);
    }
}
