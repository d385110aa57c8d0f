//! Ground-truth multipath channel generation, framed transmission and
//! pilot-based least-squares estimation for a single-antenna user and an
//! `Nr`-element uniform linear array at the base station.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation speed used to turn carrier frequency into wavelength.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Known pilot symbol.
pub const PILOT: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub n_paths: usize,
    /// Hz.
    pub carrier_freq: f64,
    /// Seconds.
    pub sample_period: f64,
    pub antenna_spacing_wavelengths: f64,
    /// m/s.
    pub user_speed: f64,
    pub path_gain_power: f64,
    /// Scale path-gain variance by `1/Np` so each antenna sees `path_gain_power`.
    pub normalize_channel_power: bool,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_antennas: 32,
            n_paths: 20,
            carrier_freq: 3.0e9,
            sample_period: 2.0e-5,
            antenna_spacing_wavelengths: 0.5,
            user_speed: 50.0,
            path_gain_power: 1.0,
            normalize_channel_power: true,
            snr_db: 20.0,
            seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_antennas < 2 {
            return Err(Error::invalid("n_antennas must be at least 2"));
        }
        if self.n_paths < 1 {
            return Err(Error::invalid("n_paths must be at least 1"));
        }
        if !(self.sample_period > 0.0) {
            return Err(Error::invalid("sample_period must be positive"));
        }
        if !(self.carrier_freq > 0.0) {
            return Err(Error::invalid("carrier_freq must be positive"));
        }
        if !(self.user_speed >= 0.0) {
            return Err(Error::invalid("user_speed must be non-negative"));
        }
        if !(self.path_gain_power > 0.0) {
            return Err(Error::invalid("path_gain_power must be positive"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid("snr_db must be finite"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Maximum Doppler shift `v / λ` in Hz.
    pub fn max_doppler(&self) -> f64 {
        self.user_speed / self.wavelength()
    }

    /// Variance of each complex path gain.
    pub fn gain_variance(&self) -> f64 {
        if self.normalize_channel_power {
            self.path_gain_power / self.n_paths as f64
        } else {
            self.path_gain_power
        }
    }

    /// Expected `|h_k(n)|²` for any antenna `k`.
    pub fn per_antenna_power(&self) -> f64 {
        self.gain_variance() * self.n_paths as f64
    }

    /// Noise variance per receive antenna for unit-power symbols.
    pub fn noise_var(&self) -> f64 {
        self.per_antenna_power() / 10f64.powf(self.snr_db / 10.0)
    }
}

/// Per-path gains, Doppler shifts and angles of arrival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub gains: Vec<Complex64>,
    pub doppler_freqs: Vec<f64>,
    pub aoas: Vec<f64>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Array response `a(θ)_k = exp(−j·2π·spacing·k·sin θ)`.
pub fn steering_vector(theta: f64, n_antennas: usize, spacing: f64) -> Vec<Complex64> {
    let step = -2.0 * PI * spacing * theta.sin();
    (0..n_antennas)
        .map(|k| Complex64::from_polar(1.0, step * k as f64))
        .collect()
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-PI..PI)
}

/// Draws one realisation of the path geometry.
///
/// Per path, the draw order is: angle of arrival, gain, motion angle. The
/// Doppler shift follows the Clarke model `ν = (v/λ)·cos ψ` with `ψ` uniform.
pub fn draw_paths<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> PathSet {
    let var = config.gain_variance();
    let fd = config.max_doppler();
    let mut gains = Vec::with_capacity(config.n_paths);
    let mut doppler_freqs = Vec::with_capacity(config.n_paths);
    let mut aoas = Vec::with_capacity(config.n_paths);
    for _ in 0..config.n_paths {
        aoas.push(uniform_angle(rng));
        gains.push(complex_gaussian(rng, var));
        let psi = uniform_angle(rng);
        doppler_freqs.push(fd * psi.cos());
    }
    PathSet {
        gains,
        doppler_freqs,
        aoas,
    }
}

/// `h(n) = Σ_i α_i · exp(j2π n ν_i Ts) · a(θ_i)`.
pub fn sample_channel(paths: &PathSet, config: &SystemConfig, n: usize) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); config.n_antennas];
    for ((alpha, nu), theta) in paths
        .gains
        .iter()
        .zip(&paths.doppler_freqs)
        .zip(&paths.aoas)
    {
        let rot = Complex64::from_polar(1.0, 2.0 * PI * n as f64 * nu * config.sample_period);
        let coef = alpha * rot;
        for (hk, ak) in h.iter_mut().zip(steering_vector(
            *theta,
            config.n_antennas,
            config.antenna_spacing_wavelengths,
        )) {
            *hk += coef * ak;
        }
    }
    h
}

/// A path realisation bound to its system configuration, with steering
/// vectors precomputed.
#[derive(Debug, Clone)]
pub struct ChannelProcess {
    config: SystemConfig,
    paths: PathSet,
    steering: Vec<Vec<Complex64>>,
}

impl ChannelProcess {
    pub fn new(config: SystemConfig, paths: PathSet) -> Self {
        let steering = paths
            .aoas
            .iter()
            .map(|&t| steering_vector(t, config.n_antennas, config.antenna_spacing_wavelengths))
            .collect();
        Self {
            config,
            paths,
            steering,
        }
    }

    pub fn draw<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Self {
        let paths = draw_paths(config, rng);
        Self::new(config.clone(), paths)
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn paths(&self) -> &PathSet {
        &self.paths
    }

    /// Same value as [`sample_channel`], summed path by path in the same order.
    pub fn sample(&self, n: usize) -> Vec<Complex64> {
        let mut h = vec![Complex64::new(0.0, 0.0); self.config.n_antennas];
        let ts = self.config.sample_period;
        for ((alpha, nu), a) in self
            .paths
            .gains
            .iter()
            .zip(&self.paths.doppler_freqs)
            .zip(&self.steering)
        {
            let coef = alpha * Complex64::from_polar(1.0, 2.0 * PI * n as f64 * nu * ts);
            for (hk, ak) in h.iter_mut().zip(a) {
                *hk += coef * ak;
            }
        }
        h
    }
}

/// `P` blocks of `M` groups, each group one pilot followed by `K − 1` data
/// symbols. Simulated as one flat index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameLayout {
    pub n_blocks: usize,
    pub groups_per_block: usize,
    pub group_len: usize,
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            n_blocks: 1,
            groups_per_block: 16,
            group_len: 10,
        }
    }
}

impl FrameLayout {
    pub fn validate(&self) -> Result<()> {
        if self.group_len < 1 || self.n_blocks < 1 || self.groups_per_block < 1 {
            return Err(Error::invalid(
                "frame layout needs n_blocks, groups_per_block and group_len of at least 1",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_blocks * self.groups_per_block * self.group_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_pilot(&self, n: usize) -> bool {
        n.is_multiple_of(self.group_len)
    }

    /// Index of the pilot whose estimate covers position `n`.
    pub fn pilot_for(&self, n: usize) -> usize {
        n - n % self.group_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStream {
    pub symbols: Vec<Complex64>,
    pub pilot_mask: Vec<bool>,
}

/// Pilots at every `K`-th index, unit-power QPSK elsewhere.
pub fn generate_frame<R: Rng + ?Sized>(layout: &FrameLayout, rng: &mut R) -> SymbolStream {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let n = layout.len();
    let mut symbols = Vec::with_capacity(n);
    let mut pilot_mask = Vec::with_capacity(n);
    for i in 0..n {
        if layout.is_pilot(i) {
            symbols.push(PILOT);
            pilot_mask.push(true);
        } else {
            let q: u8 = rng.random_range(0..4);
            let re = if q & 1 == 0 { a } else { -a };
            let im = if q & 2 == 0 { a } else { -a };
            symbols.push(Complex64::new(re, im));
            pilot_mask.push(false);
        }
    }
    SymbolStream {
        symbols,
        pilot_mask,
    }
}

/// `y = h·x + w` with `w ~ CN(0, noise_var·I)`.
pub fn receive<R: Rng + ?Sized>(
    h: &[Complex64],
    x: Complex64,
    noise_var: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    h.iter()
        .map(|&hk| {
            if noise_var > 0.0 {
                hk * x + complex_gaussian(rng, noise_var)
            } else {
                hk * x
            }
        })
        .collect()
}

pub fn ls_estimate(y: &[Complex64], pilot: Complex64) -> Result<Vec<Complex64>> {
    if pilot.norm_sqr() == 0.0 {
        return Err(Error::invalid("LS estimate with a zero pilot"));
    }
    Ok(y.iter().map(|v| v / pilot).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSeries {
    pub estimates: Vec<Vec<Complex64>>,
    pub source_pilot_index: Vec<usize>,
}

impl LsSeries {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// One simulated frame: true channels, symbols and received samples.
#[derive(Debug, Clone)]
pub struct SimulatedFrame {
    pub process: ChannelProcess,
    pub layout: FrameLayout,
    pub symbols: SymbolStream,
    pub channels: Vec<Vec<Complex64>>,
    pub received: Vec<Vec<Complex64>>,
}

/// Draws paths, then symbols, then per-index noise, all from `rng` in that
/// order.
pub fn simulate_frame<R: Rng + ?Sized>(
    config: &SystemConfig,
    layout: &FrameLayout,
    rng: &mut R,
) -> Result<SimulatedFrame> {
    config.validate()?;
    layout.validate()?;
    let process = ChannelProcess::draw(config, rng);
    let symbols = generate_frame(layout, rng);
    let noise_var = config.noise_var();
    let mut channels = Vec::with_capacity(layout.len());
    let mut received = Vec::with_capacity(layout.len());
    for (n, &x) in symbols.symbols.iter().enumerate() {
        let h = process.sample(n);
        received.push(receive(&h, x, noise_var, rng));
        channels.push(h);
    }
    Ok(SimulatedFrame {
        process,
        layout: *layout,
        symbols,
        channels,
        received,
    })
}

/// LS at each pilot, held over the following `K − 1` data positions.
pub fn build_ls_series(frame: &SimulatedFrame) -> Result<LsSeries> {
    let layout = &frame.layout;
    let mut estimates: Vec<Vec<Complex64>> = Vec::with_capacity(layout.len());
    let mut source_pilot_index = Vec::with_capacity(layout.len());
    for n in 0..layout.len() {
        let p = layout.pilot_for(n);
        if p == n {
            estimates.push(ls_estimate(&frame.received[n], frame.symbols.symbols[n])?);
        } else {
            let held = estimates[p].clone();
            estimates.push(held);
        }
        source_pilot_index.push(p);
    }
    Ok(LsSeries {
        estimates,
        source_pilot_index,
    })
}
