//! Engine-agnostic benchmarks: COD, binned off-diagonality, the minimal-energy
//! reference state, Gibbs matching, relative entropy and the Gaussian density
//! of states closed forms.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, QateError, Result};
use crate::exact_diag::{DenseOperator, DenseState};
use crate::linalg::{self, CMat, C64};

/// One row of benchmark output.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub energy: f64,
    pub e_min: f64,
    pub delta_e_qate: f64,
    pub delta_e_min: f64,
    pub variance: f64,
    pub var_min: f64,
    pub delta_var: f64,
    pub cod: f64,
    pub purity: f64,
    pub entropy: f64,
}

/// Window used to collect coherence mass around each histogram point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinWindow {
    /// Disjoint bins `[2 delta n - delta, 2 delta n + delta)` (first bin `[0, delta)`).
    TopHat,
    /// Peak-one Gaussian of standard deviation `delta` centred on each point.
    Gaussian,
}

/// Purity-normalized off-diagonal mass resolved by `|E_i - E_j|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodHistogram {
    pub bin_centers: Vec<f64>,
    pub bin_width: f64,
    pub values: Vec<f64>,
    pub purity_norm: f64,
    pub window: BinWindow,
}

impl BodHistogram {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Mean value over bins whose centres fall in `[lo, hi]`.
    pub fn mean_in(&self, lo: f64, hi: f64) -> Option<f64> {
        let sel: Vec<f64> = self
            .bin_centers
            .iter()
            .zip(&self.values)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .map(|(_, v)| *v)
            .collect();
        (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64)
    }
}

/// `-Tr([H, rho]^2) / Tr(rho^2)`.
pub fn cod(rho: &DenseState, h: &DenseOperator) -> Result<f64> {
    if rho.dim() != h.dim() {
        return Err(config!("state and Hamiltonian dimensions differ"));
    }
    let purity = rho.purity();
    if !(purity > 0.0) {
        return Err(domain!("state has zero purity"));
    }
    let hr = linalg::matmul(&h.mat, &rho.rho);
    let comm = &hr - hr.adjoint();
    // [H, rho] is anti-Hermitian, so -Tr(C^2) = ||C||_F^2.
    let frob: f64 = comm.iter().map(|z| z.norm_sqr()).sum();
    Ok(frob / purity)
}

/// `sum_ij |c_ij|^2 (E_i - E_j)^2 / sum_ij |c_ij|^2`.
pub fn cod_from_coefficients(c: &CMat, energies: &[f64]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            let w = c[(i, j)].norm_sqr();
            let d = energies[i] - energies[j];
            num += w * d * d;
            den += w;
        }
    }
    if !(den > 0.0) {
        return Err(domain!("coefficient matrix has zero purity"));
    }
    Ok(num / den)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(domain!("bin half-width delta must be positive, got {delta}"));
    }
    Ok(())
}

/// Top-hat histogram of width `2 delta`, diagonal mass in the first bin.
pub fn bod_exact(c: &CMat, energies: &[f64], delta: f64) -> Result<BodHistogram> {
    check_delta(delta)?;
    if c.nrows() != energies.len() || c.ncols() != energies.len() {
        return Err(config!("coefficient matrix and spectrum sizes differ"));
    }
    let span = energies.last().copied().unwrap_or(0.0) - energies.first().copied().unwrap_or(0.0);
    let bins = ((span.abs() + delta) / (2.0 * delta)).floor() as usize + 1;
    let mut values = vec![0.0; bins];
    let mut purity = 0.0;
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            let w = c[(i, j)].norm_sqr();
            purity += w;
            let d = (energies[i] - energies[j]).abs();
            let b = ((d + delta) / (2.0 * delta)).floor() as usize;
            values[b.min(bins - 1)] += w;
        }
    }
    if !(purity > 0.0) {
        return Err(domain!("coefficient matrix has zero purity"));
    }
    values.iter_mut().for_each(|v| *v /= purity);
    Ok(BodHistogram {
        bin_centers: (0..bins).map(|n| 2.0 * delta * n as f64).collect(),
        bin_width: 2.0 * delta,
        values,
        purity_norm: purity,
        window: BinWindow::TopHat,
    })
}

/// Exact BOD evaluated with a peak-one Gaussian window of std `delta` at the
/// points of `omega_grid`, folded onto `|omega|` exactly as `bod_filtered`.
pub fn bod_exact_gaussian(c: &CMat, energies: &[f64], delta: f64, omega_grid: &[f64]) -> Result<BodHistogram> {
    check_delta(delta)?;
    bod_exact_kernel(c, energies, delta, omega_grid, |x| (-0.5 * (x / delta).powi(2)).exp())
}

/// Exact BOD with an arbitrary peak-one window, e.g. `FilterSpec::kernel`.
pub fn bod_exact_kernel(
    c: &CMat,
    energies: &[f64],
    delta: f64,
    omega_grid: &[f64],
    window: impl Fn(f64) -> f64,
) -> Result<BodHistogram> {
    let n = energies.len();
    let mut diffs: Vec<(f64, f64)> = Vec::with_capacity(n * n);
    let mut purity = 0.0;
    for j in 0..n {
        for i in 0..n {
            let w = c[(i, j)].norm_sqr();
            purity += w;
            if w > 0.0 {
                diffs.push((energies[i] - energies[j], w));
            }
        }
    }
    if !(purity > 0.0) {
        return Err(domain!("coefficient matrix has zero purity"));
    }
    let values = omega_grid
        .iter()
        .map(|&om| {
            let f = |o: f64| diffs.iter().map(|&(d, w)| w * window(o - d)).sum::<f64>();
            let v = if om == 0.0 { f(0.0) } else { f(om) + f(-om) };
            v / purity
        })
        .collect();
    Ok(BodHistogram {
        bin_centers: omega_grid.to_vec(),
        bin_width: 2.0 * delta,
        values,
        purity_norm: purity,
        window: BinWindow::Gaussian,
    })
}

/// Binomial time-signal filter whose kernel is `cos(X / norm)^M_f`, a
/// Gaussian of standard deviation `delta` inside the validity domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub delta: f64,
    pub x: f64,
    pub dt: f64,
    /// `2 / dt`.
    pub norm: f64,
    pub r: usize,
    pub m_f: usize,
    /// `c_m` for `m = -R..=R`, stored at index `m + R`.
    pub coeffs: Vec<f64>,
}

pub const DEFAULT_FILTER_X: f64 = 5.0;

/// Designs the filter for target width `delta`, step `dt` and error parameter `x`.
pub fn filter_design(delta: f64, dt: f64, x: f64) -> Result<FilterSpec> {
    check_delta(delta)?;
    if !(dt > 0.0 && dt.is_finite()) || !(x > 0.0 && x.is_finite()) {
        return Err(domain!("filter step and x must be positive"));
    }
    let norm = 2.0 / dt;
    let ratio_sq = (norm / delta).powi(2);
    let m_f = ((ratio_sq / 2.0).round() as usize * 2).max(2);
    let half = m_f / 2;
    let r = ((x * (m_f as f64).sqrt()).ceil() as usize).min(half);
    // c_{m+1} / c_m = (M/2 - m) / (M/2 + m + 1), starting from c_0 = 1.
    let mut pos = vec![1.0f64; r + 1];
    for m in 0..r {
        pos[m + 1] = pos[m] * (half - m) as f64 / (half + m + 1) as f64;
    }
    let mut coeffs: Vec<f64> = pos.iter().rev().chain(pos[1..].iter()).copied().collect();
    let total: f64 = coeffs.iter().sum();
    coeffs.iter_mut().for_each(|c| *c /= total);
    Ok(FilterSpec {
        delta,
        x,
        dt,
        norm,
        r,
        m_f,
        coeffs,
    })
}

impl FilterSpec {
    /// Chooses `dt` so the validity domain covers `width` with a 1.2x margin.
    pub fn covering(delta: f64, width: f64, x: f64) -> Result<Self> {
        let norm = (1.2 * width.abs() * 2.0 / std::f64::consts::PI).max(4.0 * delta);
        filter_design(delta, 2.0 / norm, x)
    }

    /// Sample times `t_m = m dt`, `m = -R..=R`.
    pub fn times(&self) -> Vec<f64> {
        let r = self.r as i64;
        (-r..=r).map(|m| m as f64 * self.dt).collect()
    }

    /// `|omega| <= norm pi / 2`.
    pub fn validity_limit(&self) -> f64 {
        self.norm * std::f64::consts::FRAC_PI_2
    }

    /// `2 exp(-x^2 / 2)`.
    pub fn error_bound(&self) -> f64 {
        2.0 * (-0.5 * self.x * self.x).exp()
    }

    /// Exact kernel `cos(X / norm)^M_f` of the untruncated filter.
    pub fn kernel(&self, x: f64) -> f64 {
        (x / self.norm).cos().powi(self.m_f as i32)
    }

    fn check_omegas(&self, omega_grid: &[f64]) -> Result<()> {
        let lim = self.validity_limit();
        match omega_grid.iter().find(|w| w.abs() > lim || !w.is_finite()) {
            Some(w) => Err(domain!("omega = {w} outside filter validity domain |omega| <= {lim}")),
            None => Ok(()),
        }
    }
}

/// Applies the filter to a correlation signal `G(t_m)` sampled at
/// `filter.times()` and normalizes by `purity`.
pub fn bod_filtered(correlations: &[C64], filter: &FilterSpec, omega_grid: &[f64], purity: f64) -> Result<BodHistogram> {
    if correlations.len() != filter.coeffs.len() {
        return Err(config!(
            "correlation samples ({}) do not match the filter grid ({})",
            correlations.len(),
            filter.coeffs.len()
        ));
    }
    filter.check_omegas(omega_grid)?;
    if !(purity > 0.0) {
        return Err(domain!("purity must be positive"));
    }
    let times = filter.times();
    let eval = |om: f64| -> Result<f64> {
        let mut acc = C64::new(0.0, 0.0);
        let mut scale = 0.0;
        for ((&c, &t), &g) in filter.coeffs.iter().zip(&times).zip(correlations) {
            let term = C64::from_polar(c, om * t) * g;
            acc += term;
            scale += term.norm();
        }
        if acc.im.abs() > 1e-6 * scale.max(acc.norm()).max(1e-300) {
            return Err(domain!(
                "filtered signal has imaginary residue {} at omega = {om}",
                acc.im
            ));
        }
        Ok(acc.re)
    };
    let values = omega_grid
        .iter()
        .map(|&om| {
            let v = if om == 0.0 { eval(0.0)? } else { eval(om)? + eval(-om)? };
            Ok(v / purity)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BodHistogram {
        bin_centers: omega_grid.to_vec(),
        bin_width: 2.0 * filter.delta,
        values,
        purity_norm: purity,
        window: BinWindow::Gaussian,
    })
}

/// Correlation signal `Tr(e^{-iHt} rho e^{iHt} rho)` of a state given by its
/// eigenbasis coefficients, at the filter's sample times.
pub fn correlations_from_coefficients(c: &CMat, energies: &[f64], times: &[f64]) -> Vec<C64> {
    let n = energies.len();
    let mut pairs = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let w = c[(i, j)].norm_sqr();
            if w > 0.0 {
                pairs.push((energies[i] - energies[j], w));
            }
        }
    }
    times
        .iter()
        .map(|&t| pairs.iter().map(|&(d, w)| C64::from_polar(w, -d * t)).sum())
        .collect()
}

/// Pairs the largest weight with the lowest final energy. Returns the
/// populations aligned with the ascending energies and `E_min`.
pub fn rho_min_spectrum(init_weights: &[f64], final_energies: &[f64]) -> Result<(Vec<f64>, f64)> {
    if init_weights.len() != final_energies.len() {
        return Err(config!(
            "weights ({}) and energies ({}) differ in length",
            init_weights.len(),
            final_energies.len()
        ));
    }
    let total: f64 = init_weights.iter().sum();
    if (total - 1.0).abs() > 1e-8 || init_weights.iter().any(|w| *w < -1e-14) {
        return Err(domain!("weights must be a probability vector (sum = {total})"));
    }
    let mut w = init_weights.to_vec();
    w.sort_by(|a, b| b.total_cmp(a));
    let mut e = final_energies.to_vec();
    e.sort_by(f64::total_cmp);
    let e_min = w.iter().zip(&e).map(|(p, x)| p * x).sum();
    Ok((w, e_min))
}

/// Variance `sum p E^2 - (sum p E)^2` of a diagonal state.
pub fn diagonal_variance(pops: &[f64], energies: &[f64]) -> f64 {
    let mean: f64 = pops.iter().zip(energies).map(|(p, e)| p * e).sum();
    pops.iter().zip(energies).map(|(p, e)| p * (e - mean).powi(2)).sum()
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn entropy_of_weights(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

pub fn von_neumann_entropy(rho: &DenseState) -> f64 {
    entropy_of_weights(&rho.eigenvalues())
}

/// Thermal family over which Gibbs references are matched.
#[derive(Debug, Clone, Copy)]
pub enum ThermalSpectrum<'a> {
    /// Explicit many-body levels.
    Levels(&'a [f64]),
    /// Independent modes, `H = sum_k (+/-) eps_k / 2`, `eps_k >= 0`.
    FermionModes(&'a [f64]),
}

pub const BETA_BRACKET: (f64, f64) = (1e-6, 1e3);

impl ThermalSpectrum<'_> {
    pub fn energy(&self, beta: f64) -> f64 {
        match *self {
            ThermalSpectrum::Levels(e) => {
                let p = crate::exact_diag::gibbs_weights(e, beta);
                p.iter().zip(e).map(|(p, e)| p * e).sum()
            }
            ThermalSpectrum::FermionModes(eps) => eps.iter().map(|&e| -0.5 * e * (0.5 * beta * e).tanh()).sum(),
        }
    }

    pub fn entropy(&self, beta: f64) -> f64 {
        match *self {
            ThermalSpectrum::Levels(e) => entropy_of_weights(&crate::exact_diag::gibbs_weights(e, beta)),
            ThermalSpectrum::FermionModes(eps) => eps
                .iter()
                .map(|&e| {
                    let x = 0.5 * beta * e;
                    // ln(2 cosh x) - x tanh x, stable for large x.
                    let ln2cosh = x.abs() + (-2.0 * x.abs()).exp().ln_1p();
                    ln2cosh - x * x.tanh()
                })
                .sum(),
        }
    }

    pub fn variance(&self, beta: f64) -> f64 {
        match *self {
            ThermalSpectrum::Levels(e) => diagonal_variance(&crate::exact_diag::gibbs_weights(e, beta), e),
            ThermalSpectrum::FermionModes(eps) => eps
                .iter()
                .map(|&e| 0.25 * e * e * (1.0 - (0.5 * beta * e).tanh().powi(2)))
                .sum(),
        }
    }
}

/// Bisection in `ln beta` over `BETA_BRACKET` for a decreasing function.
fn bisect_decreasing(f: impl Fn(f64) -> f64, target: f64, what: &str) -> Result<f64> {
    let (lo, hi) = BETA_BRACKET;
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(target <= f_lo && target >= f_hi) {
        return Err(domain!("{what} target {target} outside attainable range [{f_hi}, {f_lo}]"));
    }
    let tol = 1e-10 * target.abs().max(1.0);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..400 {
        let mid = 0.5 * (a + b);
        let v = f(mid.exp());
        if (v - target).abs() <= tol * 1e-3 || b - a < 1e-15 {
            return Ok(mid.exp());
        }
        if v > target {
            a = mid;
        } else {
            b = mid;
        }
    }
    let beta = (0.5 * (a + b)).exp();
    if (f(beta) - target).abs() > tol {
        return Err(domain!("{what} bisection did not converge"));
    }
    Ok(beta)
}

/// Inverse temperature at which the Gibbs state of `spec` has entropy `s_target`.
pub fn beta_for_entropy(spec: ThermalSpectrum, s_target: f64) -> Result<f64> {
    bisect_decreasing(|b| spec.entropy(b), s_target, "entropy")
}

/// Inverse temperature at which the Gibbs state of `spec` has energy `e_target`.
pub fn beta_for_energy(spec: ThermalSpectrum, e_target: f64) -> Result<f64> {
    bisect_decreasing(|b| spec.energy(b), e_target, "energy")
}

/// `D(rho || sigma) = Tr rho ln rho - Tr rho ln sigma`.
pub fn relative_entropy(rho: &DenseState, sigma: &DenseState) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(config!("state dimensions differ"));
    }
    let eig = linalg::eigh(&sigma.rho);
    let top = eig.values.last().copied().unwrap_or(0.0);
    if eig.values.iter().any(|&m| m <= 1e-15 * top) {
        return Err(domain!("sigma is rank deficient"));
    }
    let rv = linalg::matmul(&rho.rho, &eig.vectors);
    let mut cross = 0.0;
    for (k, &mu) in eig.values.iter().enumerate() {
        let diag: C64 = eig.vectors.column(k).iter().zip(rv.column(k).iter()).map(|(v, w)| v.conj() * w).sum();
        cross += diag.re * mu.ln();
    }
    Ok(-von_neumann_entropy(rho) - cross)
}

/// `beta * Delta E_QATE`, the value `D(rho_QATE || rho_G)` takes for an
/// isospectral, isentropic protocol.
pub fn relative_entropy_isospectral_identity(beta: f64, delta_e: f64) -> f64 {
    beta * delta_e
}

/// Closed forms for a Gaussian density of states of width `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDosRecord {
    pub e_g_init: f64,
    pub entropy: f64,
    pub beta_final: f64,
    pub e_min: f64,
    pub e_g_final: f64,
    pub delta_e_min: f64,
    pub var_min: f64,
}

/// For a Gaussian density of states `E(beta) = -beta sigma^2` and
/// `S = N ln 2 - beta^2 sigma^2 / 2`. The isentropic match gives
/// `beta_f = beta sigma_i / sigma_f`, and the rearranged populations are
/// exactly the Gibbs populations of the final density at `beta_f`.
pub fn gaussian_dos_suite(beta: f64, sigma_init: f64, sigma_final: f64, n: usize) -> Result<GaussianDosRecord> {
    if !(sigma_init > 0.0 && sigma_final > 0.0) {
        return Err(domain!("sigmas must be positive"));
    }
    if !(beta >= 0.0) {
        return Err(domain!("beta must be >= 0"));
    }
    let gibbs_energy = |b: f64, s: f64| -b * s * s;
    let e_g_init = gibbs_energy(beta, sigma_init);
    let entropy = n as f64 * std::f64::consts::LN_2 - 0.5 * (beta * sigma_init).powi(2);
    let beta_final = beta * sigma_init / sigma_final;
    let e_min = gibbs_energy(beta_final, sigma_final);
    let e_g_final = gibbs_energy(beta_final, sigma_final);
    Ok(GaussianDosRecord {
        e_g_init,
        entropy,
        beta_final,
        e_min,
        e_g_final,
        delta_e_min: e_min - e_g_final,
        var_min: sigma_final * sigma_final,
    })
}

/// Validity check shared by the engines' benchmark assembly.
pub fn record_consistency(rec: &BenchmarkRecord) -> Result<()> {
    if rec.delta_e_qate < -1e-8 * rec.e_min.abs().max(1.0) {
        return Err(QateError::Domain(format!(
            "QATE energy below the minimal reference: delta_e_qate = {}",
            rec.delta_e_qate
        )));
    }
    Ok(())
}
