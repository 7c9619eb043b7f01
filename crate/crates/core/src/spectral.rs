//! Periodic Fourier representation of real fields.
//!
//! The forward transform carries the `1/N` factor, so `u(x_j) = Σ_k û_k e^{iξ_k x_j}`
//! and the continuum `L²` norm on `[0, L)` is `(L Σ |û_k|²)^{1/2}`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{arg, ForgeError, Result};

/// Highest derivative order the spectral layer will produce.
pub const MAX_DERIVATIVE_ORDER: usize = 14;

struct GridInner {
    length: f64,
    n: usize,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid on `[0, L)` with `N` nodes.
///
/// Cloning is cheap; FFT plans are shared.
#[derive(Clone)]
pub struct SpectralGrid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("length", &self.inner.length)
            .field("n", &self.inner.n)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.inner.n == other.inner.n && self.inner.length == other.inner.length
    }
}

impl SpectralGrid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return arg(format!("domain length must be positive and finite, got {length}"));
        }
        if n < 8 || n % 2 != 0 {
            return arg(format!("resolution must be even and at least 8, got {n}"));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let wavenumbers = (0..n)
            .map(|j| 2.0 * std::f64::consts::PI * signed_index(j, n) as f64 / length)
            .collect();
        Ok(Self {
            inner: Arc::new(GridInner {
                length,
                n,
                wavenumbers,
                forward,
                inverse,
            }),
        })
    }

    pub fn length(&self) -> f64 {
        self.inner.length
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn spacing(&self) -> f64 {
        self.inner.length / self.inner.n as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n()).map(|j| j as f64 * h).collect()
    }

    /// Wavenumbers in FFT storage order: index `j` holds `ξ_k` with `k = j` for
    /// `j ≤ N/2` and `k = j − N` above.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.inner.wavenumbers
    }

    pub fn mode_index(&self, j: usize) -> i64 {
        signed_index(j, self.n())
    }

    /// Largest `|k|` kept by the 2/3 rule, i.e. the largest integer below `N/3`.
    pub fn dealias_cutoff(&self) -> usize {
        (self.n() + 2) / 3 - 1
    }

    /// Largest retained wavenumber magnitude after dealiasing.
    pub fn dealiased_max_wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.dealias_cutoff() as f64 / self.length()
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let n = self.n();
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.inner.forward.process(&mut buf);
        let scale = 1.0 / n as f64;
        for c in &mut buf {
            *c *= scale;
        }
        buf
    }

    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inner.inverse.process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Inverse transform returning the largest imaginary part alongside the values.
    pub fn inverse_checked(&self, spectrum: &[Complex64]) -> (Vec<f64>, f64) {
        let mut buf = spectrum.to_vec();
        self.inner.inverse.process(&mut buf);
        let imag = buf.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
        (buf.into_iter().map(|c| c.re).collect(), imag)
    }
}

fn signed_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// A real field sampled on a grid, with its spectrum kept in sync.
#[derive(Clone, Debug)]
pub struct StateFunction {
    grid: SpectralGrid,
    values: Vec<f64>,
    spectrum: Vec<Complex64>,
    time: f64,
}

impl StateFunction {
    pub fn from_values(grid: &SpectralGrid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.n() {
            return arg(format!(
                "expected {} samples, got {}",
                grid.n(),
                values.len()
            ));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(ForgeError::Evaluation {
                node,
                x: node as f64 * grid.spacing(),
            });
        }
        let spectrum = grid.forward(&values);
        Ok(Self {
            grid: grid.clone(),
            values,
            spectrum,
            time,
        })
    }

    pub fn from_fn(grid: &SpectralGrid, time: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        Self::from_values(grid, values, time)
    }

    pub fn zeros(grid: &SpectralGrid, time: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.n()],
            spectrum: vec![Complex64::new(0.0, 0.0); grid.n()],
            time,
        }
    }

    /// Builds a field from Fourier coefficients, projecting onto the Hermitian
    /// (real-valued) subspace first.
    pub fn from_spectrum(grid: &SpectralGrid, spectrum: Vec<Complex64>, time: f64) -> Result<Self> {
        let n = grid.n();
        if spectrum.len() != n {
            return arg(format!("expected {n} coefficients, got {}", spectrum.len()));
        }
        let mut sym = spectrum.clone();
        for j in 0..n {
            let jm = (n - j) % n;
            sym[j] = 0.5 * (spectrum[j] + spectrum[jm].conj());
        }
        let state = Self::from_hermitian_spectrum(grid, sym, time);
        if let Some(node) = state.values.iter().position(|v| !v.is_finite()) {
            return Err(ForgeError::Evaluation {
                node,
                x: node as f64 * grid.spacing(),
            });
        }
        Ok(state)
    }

    /// Trusted constructor: the caller guarantees Hermitian symmetry.
    pub(crate) fn from_hermitian_spectrum(grid: &SpectralGrid, spectrum: Vec<Complex64>, time: f64) -> Self {
        let values = grid.inverse(&spectrum);
        Self {
            grid: grid.clone(),
            values,
            spectrum,
            time,
        }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn derivative(&self, order: usize) -> Result<StateFunction> {
        derivative(self, order)
    }

    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        sobolev_norm(self, s)
    }

    /// `L²` norm, the `s = 0` case of [`sobolev_norm`].
    pub fn l2_norm(&self) -> f64 {
        weighted_norm(&self.grid, &self.spectrum, 0.0)
    }

    /// `H^s` norm for `s ≥ 0` known at the call site.
    pub fn h_norm(&self, s: u32) -> f64 {
        weighted_norm(&self.grid, &self.spectrum, s as f64)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.spectrum[0].re
    }

    /// Copy with every mode above the 2/3 cutoff removed.
    pub fn dealiased(&self) -> StateFunction {
        let cut = self.grid.dealias_cutoff() as i64;
        let mut spec = self.spectrum.clone();
        for (j, c) in spec.iter_mut().enumerate() {
            if self.grid.mode_index(j).abs() > cut {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        Self::from_hermitian_spectrum(&self.grid, spec, self.time)
    }

    /// Fraction of the `L²` energy carried by modes beyond the 2/3 cutoff.
    pub fn tail_fraction(&self) -> f64 {
        let cut = self.grid.dealias_cutoff() as i64;
        let mut total = 0.0;
        let mut tail = 0.0;
        for (j, c) in self.spectrum.iter().enumerate() {
            let e = c.norm_sqr();
            total += e;
            if self.grid.mode_index(j).abs() > cut {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<StateFunction> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self::from_values(&self.grid, values, self.time)
    }

    pub fn zip_values(&self, other: &StateFunction, f: impl Fn(f64, f64) -> f64) -> Result<StateFunction> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_values(&self.grid, values, self.time)
    }

    /// `self + c·other`, computed in spectral space so no extra transform is needed.
    pub fn axpy(&self, c: f64, other: &StateFunction) -> Result<StateFunction> {
        self.check_same_grid(other)?;
        let spectrum = self
            .spectrum
            .iter()
            .zip(&other.spectrum)
            .map(|(a, b)| a + c * b)
            .collect();
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
            spectrum,
            time: self.time,
        })
    }

    pub fn sub(&self, other: &StateFunction) -> Result<StateFunction> {
        self.axpy(-1.0, other)
    }

    pub fn scale(&self, c: f64) -> StateFunction {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            spectrum: self.spectrum.iter().map(|v| c * v).collect(),
            time: self.time,
        }
    }

    pub(crate) fn check_same_grid(&self, other: &StateFunction) -> Result<()> {
        if self.grid != other.grid {
            return arg("fields live on different grids");
        }
        Ok(())
    }
}

/// `(iξ)^j`, with the Nyquist mode dropped for `j ≥ 1` so that results stay
/// real and derivatives compose exactly.
pub(crate) fn derivative_symbol(grid: &SpectralGrid, j: usize, order: usize) -> Complex64 {
    if order == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let n = grid.n();
    if j == n / 2 {
        return Complex64::new(0.0, 0.0);
    }
    let xi = grid.wavenumbers()[j];
    let mag = xi.powi(order as i32);
    match order % 4 {
        0 => Complex64::new(mag, 0.0),
        1 => Complex64::new(0.0, mag),
        2 => Complex64::new(-mag, 0.0),
        _ => Complex64::new(0.0, -mag),
    }
}

pub fn derivative(u: &StateFunction, order: usize) -> Result<StateFunction> {
    if order > MAX_DERIVATIVE_ORDER {
        return arg(format!(
            "derivative order {order} exceeds {MAX_DERIVATIVE_ORDER}"
        ));
    }
    if order == 0 {
        return Ok(u.clone());
    }
    let grid = u.grid();
    let spectrum = u
        .spectrum()
        .iter()
        .enumerate()
        .map(|(j, c)| c * derivative_symbol(grid, j, order))
        .collect();
    Ok(StateFunction::from_hermitian_spectrum(grid, spectrum, u.time()))
}

fn weighted_norm(grid: &SpectralGrid, spectrum: &[Complex64], s: f64) -> f64 {
    let xi = grid.wavenumbers();
    let sum: f64 = if s == 0.0 {
        spectrum.iter().map(|c| c.norm_sqr()).sum()
    } else {
        spectrum
            .iter()
            .zip(xi)
            .map(|(c, &k)| (1.0 + k * k).powf(s) * c.norm_sqr())
            .sum()
    };
    (grid.length() * sum).sqrt()
}

pub fn sobolev_norm(u: &StateFunction, s: f64) -> Result<f64> {
    if !(s >= 0.0) || !s.is_finite() {
        return arg(format!("Sobolev index must be a finite nonnegative number, got {s}"));
    }
    Ok(weighted_norm(u.grid(), u.spectrum(), s))
}

/// `G(x) = ∫₀ˣ g`, stored as a linear ramp plus a periodic part.
#[derive(Clone, Debug)]
pub struct Antiderivative {
    slope: f64,
    periodic: StateFunction,
    ramp_tolerance: f64,
}

impl Antiderivative {
    /// Mean of the integrand; the coefficient of `x` in `G`.
    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn periodic_part(&self) -> &StateFunction {
        &self.periodic
    }

    /// True when the ramp is zero up to roundoff, i.e. `G` is `L`-periodic.
    pub fn is_periodic(&self) -> bool {
        self.slope.abs() <= self.ramp_tolerance
    }

    pub fn values(&self) -> Vec<f64> {
        let grid = self.periodic.grid();
        let h = grid.spacing();
        self.periodic
            .values()
            .iter()
            .enumerate()
            .map(|(j, p)| self.slope * (j as f64 * h) + p)
            .collect()
    }

    /// Sup norm over the grid nodes of the full (ramped) function.
    pub fn max_abs(&self) -> f64 {
        self.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `G′`, which reproduces the integrand.
    pub fn derivative(&self) -> StateFunction {
        let d = derivative(&self.periodic, 1).expect("order 1 is in range");
        let mut spec = d.spectrum().to_vec();
        spec[0] += Complex64::new(self.slope, 0.0);
        StateFunction::from_hermitian_spectrum(self.periodic.grid(), spec, self.periodic.time())
    }

    /// The periodic part as a field; equals `G` exactly when [`Self::is_periodic`].
    pub fn as_state(&self) -> &StateFunction {
        &self.periodic
    }
}

pub fn antiderivative_from_zero(g: &StateFunction) -> Antiderivative {
    let grid = g.grid();
    let n = grid.n();
    let xi = grid.wavenumbers();
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    let mut at_zero = Complex64::new(0.0, 0.0);
    for j in 1..n {
        if j == n / 2 {
            continue;
        }
        let c = g.spectrum()[j] / Complex64::new(0.0, xi[j]);
        spec[j] = c;
        at_zero += c;
    }
    spec[0] = -at_zero;
    spec[0].im = 0.0;
    let periodic = StateFunction::from_hermitian_spectrum(grid, spec, g.time());
    let slope = g.mean();
    let ramp_tolerance = 1e-12 * g.max_abs().max(1e-2);
    Antiderivative {
        slope,
        periodic,
        ramp_tolerance,
    }
}

/// Outcome of the interpolation inequality check.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct InterpolationReport {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Compares `‖u‖_{H^{7+θ}}` against `‖u‖_{H^{11}}^{θ/4} ‖u‖_{H^7}^{1−θ/4}`.
pub fn check_interpolation(u: &StateFunction, theta: f64) -> Result<InterpolationReport> {
    if !(0.0..=4.0).contains(&theta) {
        return arg(format!("interpolation parameter must lie in [0, 4], got {theta}"));
    }
    let lhs = weighted_norm(u.grid(), u.spectrum(), 7.0 + theta);
    let h7 = weighted_norm(u.grid(), u.spectrum(), 7.0);
    let h11 = weighted_norm(u.grid(), u.spectrum(), 11.0);
    let rhs = if h7 == 0.0 {
        0.0
    } else {
        h11.powf(theta / 4.0) * h7.powf(1.0 - theta / 4.0)
    };
    Ok(InterpolationReport {
        lhs,
        rhs,
        satisfied: lhs <= rhs * (1.0 + 1e-10),
    })
}
