//! Time-domain waveform primitives, sources, spectra, and error norms.
//!
//! Everything downstream (circuit solves, port responses, cost functions)
//! exchanges data through [`TimeSignal`] and [`Spectrum`], so the sampling
//! conventions live here. Signals are immutable after construction and safe
//! to share across threads.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sampling grids do not match: {0}")]
    GridMismatch(String),
    #[error("reference spectrum is all zero; relative error undefined")]
    DegenerateReference,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, SignalError>;

/// Uniformly sampled real waveform.
///
/// `samples[k]` is the value at `t0 + k*dt`. The representation enforces
/// uniform sampling; there is no resampling between grids, so operations on
/// two signals require identical `(dt, len)` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    samples: Vec<f64>,
    dt: f64,
    t0: f64,
}

impl TimeSignal {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        Self::with_start(samples, dt, 0.0)
    }

    pub fn with_start(samples: Vec<f64>, dt: f64, t0: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SignalError::InvalidArgument(format!(
                "dt must be positive and finite, got {dt}"
            )));
        }
        if samples.is_empty() {
            return Err(SignalError::InvalidArgument(
                "signal must hold at least one sample".into(),
            ));
        }
        Ok(Self { samples, dt, t0 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction forbids empty signals
    }

    /// Time of sample `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    fn check_grid(&self, other: &TimeSignal) -> Result<()> {
        if self.len() != other.len() || self.dt != other.dt {
            return Err(SignalError::GridMismatch(format!(
                "len {} vs {}, dt {} vs {}",
                self.len(),
                other.len(),
                self.dt,
                other.dt
            )));
        }
        Ok(())
    }

    /// Two-column CSV (`time_s,value`) with a metadata comment carrying the
    /// exact grid so files round-trip bit-exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# t0_s={} dt_s={}", self.t0, self.dt);
        out.push_str("time_s,value\n");
        for (k, v) in self.samples.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.time_at(k), v);
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let meta = parse_meta_line(text, &["t0_s", "dt_s"])?;
        let samples = parse_csv_column(text, 1)?;
        Self::with_start(samples, meta[1], meta[0])
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Complex spectrum on a uniform frequency grid. `bins[m]` sits at
/// `f0 + m*df`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<Complex64>,
    df: f64,
    f0: f64,
}

impl Spectrum {
    pub fn new(bins: Vec<Complex64>, df: f64, f0: f64) -> Result<Self> {
        if !(df > 0.0) || !df.is_finite() {
            return Err(SignalError::InvalidArgument(format!(
                "df must be positive and finite, got {df}"
            )));
        }
        if bins.is_empty() {
            return Err(SignalError::InvalidArgument(
                "spectrum must hold at least one bin".into(),
            ));
        }
        Ok(Self { bins, df, f0 })
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn freq_at(&self, m: usize) -> f64 {
        self.f0 + m as f64 * self.df
    }

    /// Index of the bin closest to `f`, clamped to the grid.
    pub fn bin_nearest(&self, f: f64) -> usize {
        let idx = ((f - self.f0) / self.df).round();
        (idx.max(0.0) as usize).min(self.bins.len() - 1)
    }

    /// Magnitude at the bin nearest to `f`.
    pub fn magnitude_at(&self, f: f64) -> f64 {
        self.bins[self.bin_nearest(f)].norm()
    }

    /// Three-column CSV (`freq_hz,real,imag`).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# f0_hz={} df_hz={}", self.f0, self.df);
        out.push_str("freq_hz,real,imag\n");
        for (m, b) in self.bins.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", self.freq_at(m), b.re, b.im);
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let meta = parse_meta_line(text, &["f0_hz", "df_hz"])?;
        let re = parse_csv_column(text, 1)?;
        let im = parse_csv_column(text, 2)?;
        let bins = re
            .into_iter()
            .zip(im)
            .map(|(r, i)| Complex64::new(r, i))
            .collect();
        Self::new(bins, meta[1], meta[0])
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

fn parse_meta_line(text: &str, keys: &[&str]) -> Result<Vec<f64>> {
    let line = text
        .lines()
        .next()
        .ok_or_else(|| SignalError::InvalidArgument("empty file".into()))?;
    let line = line
        .strip_prefix('#')
        .ok_or_else(|| SignalError::InvalidArgument("missing metadata line".into()))?;
    let mut values = Vec::with_capacity(keys.len());
    for key in keys {
        let field = line
            .split_whitespace()
            .find_map(|tok| tok.strip_prefix(&format!("{key}=")).map(str::to_string))
            .ok_or_else(|| {
                SignalError::InvalidArgument(format!("metadata key {key} not found"))
            })?;
        let v: f64 = field
            .parse()
            .map_err(|_| SignalError::InvalidArgument(format!("bad value for {key}")))?;
        values.push(v);
    }
    Ok(values)
}

fn parse_csv_column(text: &str, col: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in text.lines().skip(2) {
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(col).ok_or_else(|| {
            SignalError::InvalidArgument(format!("row with fewer than {} columns", col + 1))
        })?;
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| SignalError::InvalidArgument(format!("bad number `{field}`")))?;
        out.push(v);
    }
    Ok(out)
}

/// Modulated-Gaussian voltage source description.
///
/// The waveform is `amplitude * cos(2*pi*f0*t) * exp(-(t - 6*sigma)^2 / (2*sigma^2))`
/// with `sigma = 3 / (2*pi*fbw)`. `delay_steps` shifts the waveform right by
/// whole timesteps when sampled onto a grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceSpec {
    pub f0: f64,
    pub fbw: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub delay_steps: u32,
}

impl SourceSpec {
    pub fn new(f0: f64, fbw: f64, amplitude: f64, delay_steps: u32) -> Result<Self> {
        if !(f0 > 0.0) {
            return Err(SignalError::InvalidArgument(format!("f0 must be > 0, got {f0}")));
        }
        if !(fbw > 0.0) {
            return Err(SignalError::InvalidArgument(format!("fbw must be > 0, got {fbw}")));
        }
        if !(amplitude >= 0.0) {
            return Err(SignalError::InvalidArgument(format!(
                "amplitude must be >= 0, got {amplitude}"
            )));
        }
        Ok(Self { f0, fbw, amplitude, delay_steps })
    }

    /// Envelope time constant `sigma = 3 / (2*pi*fbw)`.
    pub fn sigma(&self) -> f64 {
        3.0 / (2.0 * PI * self.fbw)
    }

    /// Gaussian envelope, peak 1 at `t = 6*sigma`.
    pub fn envelope(&self, t: f64) -> f64 {
        let s = self.sigma();
        let u = t - 6.0 * s;
        (-u * u / (2.0 * s * s)).exp()
    }

    /// Source value at time `t` (delay not applied; see [`SourceSpec::sampled`]).
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.f0 * t).cos() * self.envelope(t)
    }

    /// Sample the delayed waveform onto a grid: sample `k` is the source value
    /// at `(k - delay_steps) * dt`, zero before the delay expires.
    pub fn sampled(&self, dt: f64, n_steps: usize) -> Result<TimeSignal> {
        if n_steps == 0 {
            return Err(SignalError::InvalidArgument("n_steps must be >= 1".into()));
        }
        let d = self.delay_steps as usize;
        let samples = (0..n_steps)
            .map(|k| {
                if k < d {
                    0.0
                } else {
                    self.value((k - d) as f64 * dt)
                }
            })
            .collect();
        TimeSignal::new(samples, dt)
    }
}

/// Source value at time `t` for the modulated-Gaussian spec.
pub fn gaussian_cosine_source(spec: &SourceSpec, t: f64) -> f64 {
    spec.value(t)
}

/// Simulation stepsize `1 / (20 * (f0 + fbw))`.
pub fn default_timestep(f0: f64, fbw: f64) -> Result<f64> {
    let sum = f0 + fbw;
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(SignalError::InvalidArgument(format!(
            "f0 + fbw must be positive and finite, got {sum}"
        )));
    }
    Ok(1.0 / (20.0 * sum))
}

/// Discrete Fourier transform of a real signal.
///
/// Forward convention `X[m] = sum_k x[k] * exp(-j*2*pi*m*k/N)` with no 1/N
/// factor on the forward transform; `df = 1/(N*dt)`, first bin at 0 Hz.
pub fn dft(sig: &TimeSignal) -> Result<Spectrum> {
    let n = sig.len();
    if n < 2 {
        return Err(SignalError::InvalidArgument(
            "dft requires at least 2 samples".into(),
        ));
    }
    let mut buf: Vec<Complex64> = sig.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    Spectrum::new(buf, 1.0 / (n as f64 * sig.dt()), 0.0)
}

/// Relative L1 error between magnitude spectra:
/// `sum_k | |test_k| - |ref_k| | / sum_k |ref_k|`.
pub fn relative_l1_spectral_error(test: &Spectrum, reference: &Spectrum) -> Result<f64> {
    if test.len() != reference.len() || test.df() != reference.df() || test.f0() != reference.f0()
    {
        return Err(SignalError::GridMismatch(format!(
            "bins {} vs {}, df {} vs {}",
            test.len(),
            reference.len(),
            test.df(),
            reference.df()
        )));
    }
    let denom: f64 = reference.bins().iter().map(|b| b.norm()).sum();
    if denom == 0.0 {
        return Err(SignalError::DegenerateReference);
    }
    let num: f64 = test
        .bins()
        .iter()
        .zip(reference.bins())
        .map(|(t, r)| (t.norm() - r.norm()).abs())
        .sum();
    Ok(num / denom)
}

/// Discrete L2 norm of the difference, `sqrt(sum_k (a_k - b_k)^2 * dt)`.
pub fn l2_difference(a: &TimeSignal, b: &TimeSignal) -> Result<f64> {
    a.check_grid(b)?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok((sum * a.dt()).sqrt())
}

/// [`l2_difference`] normalized by the L2 norm of `b`.
pub fn relative_l2_difference(a: &TimeSignal, b: &TimeSignal) -> Result<f64> {
    let diff = l2_difference(a, b)?;
    let norm: f64 = b.samples().iter().map(|&y| y * y).sum::<f64>() * b.dt();
    if norm == 0.0 {
        return Err(SignalError::DegenerateReference);
    }
    Ok(diff / norm.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GHZ: f64 = 1.0e9;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn sigma_matches_bandwidth_formula() {
        let spec = SourceSpec::new(10.0 * GHZ, 2.0 * GHZ, 1.0, 0).unwrap();
        assert!(close(spec.sigma(), 2.387324146378430e-10, 1e-12));
    }

    #[test]
    fn envelope_peaks_at_six_sigma() {
        let spec = SourceSpec::new(10.0 * GHZ, 2.0 * GHZ, 1.0, 0).unwrap();
        assert_eq!(spec.envelope(6.0 * spec.sigma()), 1.0);
    }

    #[test]
    fn envelope_at_zero_is_exp_minus_18() {
        let spec = SourceSpec::new(10.0 * GHZ, 2.0 * GHZ, 1.0, 0).unwrap();
        assert!(close(spec.envelope(0.0), (-18.0f64).exp(), 1e-14));
        assert!(close(spec.envelope(0.0), 1.5229979744712628e-8, 1e-12));
    }

    #[test]
    fn envelope_symmetric_about_six_sigma() {
        let spec = SourceSpec::new(3.0 * GHZ, 0.8 * GHZ, 2.0, 0).unwrap();
        let s = spec.sigma();
        for k in 0..50 {
            let tau = k as f64 * 0.17 * s;
            let lo = spec.envelope(6.0 * s - tau);
            let hi = spec.envelope(6.0 * s + tau);
            assert!(close(lo, hi, 1e-13), "tau={tau}: {lo} vs {hi}");
        }
    }

    #[test]
    fn delayed_sampling_shifts_whole_steps() {
        let spec = SourceSpec::new(10.0 * GHZ, 2.0 * GHZ, 1.0, 7).unwrap();
        let dt = default_timestep(spec.f0, spec.fbw).unwrap();
        let sig = spec.sampled(dt, 64).unwrap();
        let undelayed = SourceSpec { delay_steps: 0, ..spec }.sampled(dt, 64).unwrap();
        for k in 0..7 {
            assert_eq!(sig.samples()[k], 0.0);
        }
        for k in 7..64 {
            assert_eq!(sig.samples()[k], undelayed.samples()[k - 7]);
        }
    }

    #[test]
    fn default_timestep_examples() {
        assert!(close(
            default_timestep(10.0 * GHZ, 2.0 * GHZ).unwrap(),
            4.166666666666667e-12,
            1e-14
        ));
        assert!(close(
            default_timestep(1.25 * GHZ, 0.75 * GHZ).unwrap(),
            2.5e-11,
            1e-14
        ));
        // fbw = 0 reduces to 1/(20 f0); the reduction is valid even though
        // SourceSpec itself requires fbw > 0.
        assert_eq!(default_timestep(4.0, 0.0).unwrap(), 1.0 / 80.0);
        assert!(default_timestep(-1.0, 1.0).is_err());
    }

    #[test]
    fn dft_constant_signal_concentrates_in_bin_zero() {
        let sig = TimeSignal::new(vec![3.5; 16], 1e-9).unwrap();
        let spec = dft(&sig).unwrap();
        assert!(close(spec.bins()[0].re, 16.0 * 3.5, 1e-12));
        assert!(spec.bins()[0].im.abs() < 1e-9);
        for m in 1..16 {
            assert!(spec.bins()[m].norm() < 1e-9, "bin {m} leaked");
        }
    }

    #[test]
    fn dft_cosine_shows_conjugate_peaks() {
        let n = 32;
        let m = 5;
        let samples: Vec<f64> = (0..n)
            .map(|k| (2.0 * PI * m as f64 * k as f64 / n as f64).cos())
            .collect();
        let spec = dft(&TimeSignal::new(samples, 1e-9).unwrap()).unwrap();
        for b in 0..n {
            let expect = if b == m || b == n - m { n as f64 / 2.0 } else { 0.0 };
            assert!(
                (spec.bins()[b].norm() - expect).abs() < 1e-9,
                "bin {b}: {}",
                spec.bins()[b].norm()
            );
        }
    }

    /// O(N^2) direct-summation DFT used as the independent oracle.
    fn dft_direct(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|m| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, &xk) in x.iter().enumerate() {
                    let phase = -2.0 * PI * (m * k) as f64 / n as f64;
                    acc += xk * Complex64::new(phase.cos(), phase.sin());
                }
                acc
            })
            .collect()
    }

    #[test]
    fn dft_matches_direct_sum_oracle() {
        // Fixed pseudo-random 16-sample signal.
        let mut state = 0x2545f4914f6cdd1du64;
        let mut x = Vec::with_capacity(16);
        for _ in 0..16 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            x.push(((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0);
        }
        let spec = dft(&TimeSignal::new(x.clone(), 2e-12).unwrap()).unwrap();
        let oracle = dft_direct(&x);
        let scale: f64 = oracle.iter().map(|b| b.norm()).fold(0.0, f64::max);
        for (a, b) in spec.bins().iter().zip(&oracle) {
            assert!((a - b).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn dft_rejects_short_signals() {
        let sig = TimeSignal::new(vec![1.0], 1e-9).unwrap();
        assert!(dft(&sig).is_err());
    }

    #[test]
    fn spectral_error_trivial_cases() {
        let r = Spectrum::new(vec![Complex64::new(1.0, 1.0); 8], 1.0, 0.0).unwrap();
        assert_eq!(relative_l1_spectral_error(&r, &r).unwrap(), 0.0);
        let doubled =
            Spectrum::new(r.bins().iter().map(|b| b * 2.0).collect(), 1.0, 0.0).unwrap();
        assert!(close(relative_l1_spectral_error(&doubled, &r).unwrap(), 1.0, 1e-14));
    }

    #[test]
    fn spectral_error_hand_built_four_bins() {
        // |test| = [1,2,3,4], |ref| = [2,2,2,2]: error = (1+0+1+2)/8 = 0.5.
        let test = Spectrum::new(
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 2.0),
                Complex64::new(-3.0, 0.0),
                Complex64::new(0.0, -4.0),
            ],
            1.0,
            0.0,
        )
        .unwrap();
        let reference = Spectrum::new(vec![Complex64::new(2.0, 0.0); 4], 1.0, 0.0).unwrap();
        assert!(close(
            relative_l1_spectral_error(&test, &reference).unwrap(),
            0.5,
            1e-15
        ));
    }

    #[test]
    fn spectral_error_rejects_mismatch_and_zero_reference() {
        let a = Spectrum::new(vec![Complex64::new(1.0, 0.0); 4], 1.0, 0.0).unwrap();
        let b = Spectrum::new(vec![Complex64::new(1.0, 0.0); 5], 1.0, 0.0).unwrap();
        assert!(relative_l1_spectral_error(&a, &b).is_err());
        let zero = Spectrum::new(vec![Complex64::new(0.0, 0.0); 4], 1.0, 0.0).unwrap();
        assert!(matches!(
            relative_l1_spectral_error(&a, &zero),
            Err(SignalError::DegenerateReference)
        ));
    }

    #[test]
    fn l2_difference_trivial_cases() {
        let dt = 2.5e-11;
        let a = TimeSignal::new(vec![1.0, -2.0, 0.5, 3.0], dt).unwrap();
        assert_eq!(l2_difference(&a, &a).unwrap(), 0.0);

        let c = 0.75;
        let b = TimeSignal::new(a.samples().iter().map(|x| x + c).collect(), dt).unwrap();
        let expect = c * (4.0 * dt).sqrt();
        assert!(close(l2_difference(&b, &a).unwrap(), expect, 1e-14));
    }

    #[test]
    fn l2_difference_matches_direct_sum() {
        let dt = 1e-10;
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let a: Vec<f64> = (0..64).map(|_| next()).collect();
        let b: Vec<f64> = (0..64).map(|_| next()).collect();
        let direct = {
            let mut s = 0.0;
            for k in 0..64 {
                s += (a[k] - b[k]) * (a[k] - b[k]) * dt;
            }
            s.sqrt()
        };
        let got = l2_difference(
            &TimeSignal::new(a, dt).unwrap(),
            &TimeSignal::new(b, dt).unwrap(),
        )
        .unwrap();
        assert!((got - direct).abs() <= 1e-14 * direct.max(1.0));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let spec = SourceSpec::new(10.0 * GHZ, 2.0 * GHZ, 1.0, 3).unwrap();
        let dt = default_timestep(spec.f0, spec.fbw).unwrap();
        let sig = spec.sampled(dt, 40).unwrap();
        let csv = sig.to_csv();
        let back = TimeSignal::from_csv(&csv).unwrap();
        assert_eq!(back, sig);
        assert_eq!(back.to_csv(), csv);

        let spectrum = dft(&sig).unwrap();
        let csv = spectrum.to_csv();
        let back = Spectrum::from_csv(&csv).unwrap();
        assert_eq!(back, spectrum);
        assert_eq!(back.to_csv(), csv);
    }

    proptest! {
        #[test]
        fn parseval_holds(samples in proptest::collection::vec(-10.0f64..10.0, 4..64)) {
            let n = samples.len() as f64;
            let time_sum: f64 = samples.iter().map(|x| x * x).sum();
            let sig = TimeSignal::new(samples, 1e-9).unwrap();
            let spec = dft(&sig).unwrap();
            let freq_sum: f64 = spec.bins().iter().map(|b| b.norm_sqr()).sum::<f64>() / n;
            prop_assert!((time_sum - freq_sum).abs() <= 1e-10 * time_sum.max(1e-30));
        }

        #[test]
        fn spectral_error_detects_scaling(
            samples in proptest::collection::vec(-5.0f64..5.0, 8..32),
            alpha in 0.0f64..4.0,
        ) {
            let sig = TimeSignal::new(samples, 1e-9).unwrap();
            let reference = dft(&sig).unwrap();
            prop_assume!(reference.bins().iter().map(|b| b.norm()).sum::<f64>() > 1e-9);
            let scaled = Spectrum::new(
                reference.bins().iter().map(|b| b * alpha).collect(),
                reference.df(),
                reference.f0(),
            ).unwrap();
            let err = relative_l1_spectral_error(&scaled, &reference).unwrap();
            prop_assert!((err - (alpha - 1.0).abs()) <= 1e-10);
        }

        #[test]
        fn l2_difference_is_a_metric(
            a in proptest::collection::vec(-5.0f64..5.0, 16),
            b in proptest::collection::vec(-5.0f64..5.0, 16),
            c in proptest::collection::vec(-5.0f64..5.0, 16),
        ) {
            let dt = 3e-12;
            let sa = TimeSignal::new(a, dt).unwrap();
            let sb = TimeSignal::new(b, dt).unwrap();
            let sc = TimeSignal::new(c, dt).unwrap();
            let dab = l2_difference(&sa, &sb).unwrap();
            let dba = l2_difference(&sb, &sa).unwrap();
            let dac = l2_difference(&sa, &sc).unwrap();
            let dcb = l2_difference(&sc, &sb).unwrap();
            prop_assert!((dab - dba).abs() <= 1e-15);
            prop_assert!(dab <= dac + dcb + 1e-12);
        }
    }
}
