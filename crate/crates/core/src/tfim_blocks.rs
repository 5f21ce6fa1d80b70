//! Free-fermion engine for the translation-invariant TFIM with `J_bc = -P`.
//!
//! Each momentum pair `(k, -k)`, `k = 1..N/2-1`, evolves as an independent
//! 4x4 block in the Fourier basis
//! `(|0>, f^dag_{-k}|0>, f^dag_k|0>, f^dag_k f^dag_{-k}|0>)`. The modes `k = 0`
//! and `k = -N/2` are static: their number operators commute with every
//! Hamiltonian along the path.

use nalgebra::{Matrix4, SymmetricEigen};

use crate::error::{config, domain, QateError, Result};
use crate::linalg::{C64, I, ONE};
use crate::protocol::{ModelFamily, QateConfig, RampSchedule};
use crate::spectral::{
    self, beta_for_entropy, entropy_of_weights, BenchmarkRecord, BinWindow, BodHistogram, FilterSpec,
    ThermalSpectrum,
};

pub type Mat4 = Matrix4<C64>;

fn check_mode(k: i64, n: usize) -> Result<()> {
    if n == 0 || n % 2 != 0 {
        return Err(config!("block engine needs even N, got {n}"));
    }
    let half = (n / 2) as i64;
    if k < -half || k >= half {
        return Err(domain!("mode {k} outside -{half}..{half}"));
    }
    Ok(())
}

fn angle(k: i64, n: usize) -> f64 {
    2.0 * std::f64::consts::PI * k as f64 / n as f64
}

/// `eps_k = 2 sqrt(1 + g^2 + 2 g cos(2 pi k / N))`.
pub fn eigenmode(g: f64, k: i64, n: usize) -> Result<f64> {
    check_mode(k, n)?;
    let x = 1.0 + g * g + 2.0 * g * angle(k, n).cos();
    Ok(2.0 * x.max(0.0).sqrt())
}

/// All `N` single-particle energies, `k = -N/2..N/2-1`.
pub fn mode_energies(g: f64, n: usize) -> Result<Vec<f64>> {
    let half = (n / 2) as i64;
    (-half..half).map(|k| eigenmode(g, k, n)).collect()
}

/// `(s_k, t_k)` of the Bogoliubov rotation.
pub fn bogoliubov_coeffs(g: f64, k: i64, n: usize) -> Result<(f64, f64)> {
    let eps = eigenmode(g, k, n)?;
    let c = g + angle(k, n).cos();
    let sn = angle(k, n).sin();
    if !(eps > 1e-14) {
        return Err(QateError::Singularity(format!(
            "Bogoliubov rotation undefined at g = {g}, k = {k}, N = {n} (eps = {eps})"
        )));
    }
    if sn.abs() < 1e-15 * eps {
        // Unpaired momenta: the block is already diagonal. For c < 0 the
        // formulas tend to (1, 0) as sin -> 0.
        return Ok(if c > 0.0 { (0.0, 1.0) } else { (1.0, 0.0) });
    }
    // eps/2 + c without cancellation: (eps/2 + c)(eps/2 - c) = sin^2.
    let plus = if c >= 0.0 { 0.5 * eps + c } else { sn * sn / (0.5 * eps - c) };
    let den = (eps * plus).sqrt();
    Ok((sn / den, plus / den))
}

/// `T_k`: outer block from the Bogoliubov rotation, identity in the middle.
/// Its columns are the instantaneous eigenvectors in the Fourier basis.
pub fn block_transform(g: f64, k: i64, n: usize) -> Result<Mat4> {
    let (s, t) = bogoliubov_coeffs(g, k, n)?;
    let mut m = Mat4::identity();
    m[(0, 0)] = C64::new(s, 0.0);
    m[(3, 3)] = C64::new(s, 0.0);
    m[(0, 3)] = -I * t;
    m[(3, 0)] = -I * t;
    Ok(m)
}

/// Block energies `(-eps, 0, 0, eps)` in the instantaneous eigenbasis.
fn block_levels(eps: f64) -> [f64; 4] {
    [-eps, 0.0, 0.0, eps]
}

/// Gibbs populations of one block, ground-shifted: `diag(e^{b e}, 1, 1, e^{-b e}) / Z`.
fn thermal_pops(beta: f64, eps: f64) -> [f64; 4] {
    let x = (-beta * eps).exp();
    let z = (1.0 + x) * (1.0 + x);
    [1.0 / z, x / z, x / z, x * x / z]
}

/// One `(k, -k)` block in the Fourier basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub k: i64,
    pub n: usize,
    pub rho4: Mat4,
}

impl BlockState {
    pub fn purity(&self) -> f64 {
        self.rho4.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Ascending eigenvalues of the block density matrix.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = SymmetricEigen::new(hermitize4(&self.rho4));
        let mut v = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2], eig.eigenvalues[3]];
        v.sort_by(f64::total_cmp);
        v
    }

    /// The block in the eigenbasis of the Hamiltonian at coupling `g`.
    pub fn in_eigenbasis(&self, g: f64) -> Result<Mat4> {
        let t = block_transform(g, self.k, self.n)?;
        Ok(t.adjoint() * self.rho4 * t)
    }
}

fn hermitize4(m: &Mat4) -> Mat4 {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// `T_k diag(w) T_k^dag` with Gibbs weights at coupling `g`.
pub fn thermal_block(beta: f64, g: f64, k: i64, n: usize) -> Result<BlockState> {
    let eps = eigenmode(g, k, n)?;
    let t = block_transform(g, k, n)?;
    let p = thermal_pops(beta, eps);
    let d = Mat4::from_diagonal(&nalgebra::Vector4::from_fn(|i, _| C64::new(p[i], 0.0)));
    Ok(BlockState {
        k,
        n,
        rho4: hermitize4(&(t * d * t.adjoint())),
    })
}

const REUNITARIZE_EVERY: usize = 256;

/// One Newton-Schulz step `U (3 - U^dag U) / 2` towards the nearest unitary.
fn newton_schulz(u: &Mat4) -> Mat4 {
    let three = Mat4::identity() * C64::new(3.0, 0.0);
    u * (three - u.adjoint() * u) * C64::new(0.5, 0.0)
}

/// `exp(-i H_k(g) tau) = T e^{-i D tau} T^dag`.
pub fn block_propagator(g: f64, k: i64, n: usize, tau: f64) -> Result<Mat4> {
    let eps = eigenmode(g, k, n)?;
    let t = block_transform(g, k, n)?;
    let phase = Mat4::from_diagonal(&nalgebra::Vector4::new(
        C64::from_polar(1.0, eps * tau),
        ONE,
        ONE,
        C64::from_polar(1.0, -eps * tau),
    ));
    Ok(t * phase * t.adjoint())
}

/// Evolves a block for time `tau` under the Hamiltonian at coupling `g_prime`.
pub fn quench_step(block: &BlockState, g_prime: f64, tau: f64) -> Result<BlockState> {
    let u = block_propagator(g_prime, block.k, block.n, tau)?;
    Ok(BlockState {
        k: block.k,
        n: block.n,
        rho4: u * block.rho4 * u.adjoint(),
    })
}

/// An unpaired mode (`k = 0` or `k = -N/2`) with its fixed occupation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticMode {
    pub k: i64,
    pub n: usize,
    /// Probability that the mode is occupied.
    pub occupation: f64,
}

impl StaticMode {
    /// `c` in `H_mode = -c (2 n - 1)`.
    pub fn level(&self, g: f64) -> f64 {
        if self.k == 0 {
            1.0 + g
        } else {
            g - 1.0
        }
    }

    fn thermal(k: i64, n: usize, beta: f64, g: f64) -> Self {
        let mut m = StaticMode { k, n, occupation: 0.0 };
        // Occupied level sits 2c below the empty one.
        m.occupation = 1.0 / (1.0 + (-2.0 * beta * m.level(g)).exp());
        m
    }

    /// `(occupied, empty)` energies.
    fn energies(&self, g: f64) -> [f64; 2] {
        let c = self.level(g);
        [-c, c]
    }

    fn pops(&self) -> [f64; 2] {
        [self.occupation, 1.0 - self.occupation]
    }

    pub fn purity(&self) -> f64 {
        let [a, b] = self.pops();
        a * a + b * b
    }
}

/// A block rotated into the final eigenbasis, with the data needed for its
/// minimal-energy reference.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalBlock {
    pub k: i64,
    pub eps: f64,
    pub rho_b: Mat4,
    /// Initial thermal populations, lowest level first.
    pub init_pops: [f64; 4],
}

impl FinalBlock {
    pub fn coherence(&self) -> C64 {
        self.rho_b[(0, 3)]
    }

    /// Population of the lower paired level (`b_k`).
    pub fn lower(&self) -> f64 {
        self.rho_b[(0, 0)].re
    }

    /// `d_k = 1 - 2 / Z_k`.
    pub fn outer_weight(&self) -> f64 {
        self.init_pops[0] + self.init_pops[3]
    }

    pub fn purity(&self) -> f64 {
        self.rho_b.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn levels(&self) -> [f64; 4] {
        block_levels(self.eps)
    }

    pub fn energy(&self) -> f64 {
        (0..4).map(|i| self.rho_b[(i, i)].re * self.levels()[i]).sum()
    }

    pub fn variance(&self) -> f64 {
        let e = self.energy();
        (0..4).map(|i| self.rho_b[(i, i)].re * self.levels()[i].powi(2)).sum::<f64>() - e * e
    }

    /// `-Tr([rho, D]^2) / Tr(rho^2)` for this block.
    pub fn cod(&self) -> f64 {
        let lv = self.levels();
        let mut num = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                num += self.rho_b[(i, j)].norm_sqr() * (lv[i] - lv[j]).powi(2);
            }
        }
        num / self.purity()
    }

    /// Populations and energy of the block's minimal-energy reference.
    pub fn rho_min(&self) -> ([f64; 4], f64) {
        let (pops, e) = spectral::rho_min_spectrum(&self.init_pops, &self.levels())
            .expect("block populations form a probability vector");
        ([pops[0], pops[1], pops[2], pops[3]], e)
    }

    /// Largest entry that the final-form structure requires to vanish, and
    /// the largest deviation of the middle block from `1 / Z_k`.
    pub fn structure_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                let allowed = i == j || (i, j) == (0, 3) || (i, j) == (3, 0);
                if !allowed {
                    worst = worst.max(self.rho_b[(i, j)].norm());
                }
            }
        }
        for i in 1..3 {
            worst = worst.max((self.rho_b[(i, i)].re - self.init_pops[i]).abs());
        }
        worst
    }

    /// Signed-frequency weights `{0, +eps, -eps, +2eps, -2eps}` of the block's
    /// correlation function `sum_ij |rho_ij|^2 e^{-i (E_i - E_j) t}`.
    fn frequency_weights(&self) -> [f64; 5] {
        let lv = self.levels();
        let mut w = [0.0; 5];
        for i in 0..4 {
            for j in 0..4 {
                let d = (lv[i] - lv[j]) / self.eps;
                let slot = match d.round() as i64 {
                    0 => 0,
                    1 => 1,
                    -1 => 2,
                    2 => 3,
                    _ => 4,
                };
                w[slot] += self.rho_b[(i, j)].norm_sqr();
            }
        }
        w
    }
}

/// Translation-invariant TFIM ensemble after (or before) a QATE run.
#[derive(Debug, Clone)]
pub struct TfimEnsemble {
    pub n: usize,
    pub beta: f64,
    pub g_init: f64,
    pub g_final: f64,
    pub blocks: Vec<BlockState>,
    pub static_modes: [StaticMode; 2],
    /// `ln Tr(rho^2)` accumulated over blocks and static modes.
    pub log_purity: f64,
    /// `ln Tr(rho^2)` of the initial Gibbs state.
    pub initial_log_purity: f64,
    /// Largest relative per-step change of any block purity.
    pub max_step_purity_drift: f64,
    pub final_blocks: Vec<FinalBlock>,
}

impl TfimEnsemble {
    pub fn purity(&self) -> f64 {
        self.log_purity.exp()
    }

    /// Entropy from the blocks' current eigenvalues.
    pub fn entropy(&self) -> f64 {
        let blocks: f64 = self.blocks.iter().map(|b| entropy_of_weights(&b.eigenvalues())).sum();
        let statics: f64 = self.static_modes.iter().map(|m| entropy_of_weights(&m.pops())).sum();
        blocks + statics
    }

    /// Entropy of the initial Gibbs state, from closed-form populations.
    pub fn initial_entropy(&self) -> f64 {
        let blocks: f64 = self.final_blocks.iter().map(|b| entropy_of_weights(&b.init_pops)).sum();
        let statics: f64 = self.static_modes.iter().map(|m| entropy_of_weights(&m.pops())).sum();
        blocks + statics
    }

    /// Largest deviation of any block spectrum from its initial populations.
    pub fn spectrum_drift(&self) -> f64 {
        self.blocks
            .iter()
            .zip(&self.final_blocks)
            .map(|(b, f)| {
                let mut want = f.init_pops;
                want.sort_by(f64::total_cmp);
                b.eigenvalues()
                    .iter()
                    .zip(want)
                    .map(|(a, w)| (a - w).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    pub fn max_structure_defect(&self) -> f64 {
        self.final_blocks.iter().map(|b| b.structure_defect()).fold(0.0, f64::max)
    }

    /// Half the spectral width of the final Hamiltonian, `sum_k eps_k / 2`.
    pub fn final_norm(&self) -> Result<f64> {
        Ok(mode_energies(self.g_final, self.n)?.iter().sum::<f64>() * 0.5)
    }

    /// Many-body spectrum of the final Hamiltonian (only for small N).
    pub fn final_spectrum(&self) -> Result<Vec<f64>> {
        many_body_spectrum(&mode_energies(self.g_final, self.n)?)
    }
}

/// All `2^N` levels `sum_k (+/-) eps_k / 2`, ascending.
pub fn many_body_spectrum(modes: &[f64]) -> Result<Vec<f64>> {
    if modes.len() > 20 {
        return Err(QateError::Resource(format!("{} modes is too many to enumerate", modes.len())));
    }
    let mut out: Vec<f64> = (0..1usize << modes.len())
        .map(|mask| {
            modes
                .iter()
                .enumerate()
                .map(|(i, &e)| if mask >> i & 1 == 1 { 0.5 * e } else { -0.5 * e })
                .sum()
        })
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Checks that both endpoints are translation-invariant TFIM chains.
pub fn supports(config: &QateConfig) -> bool {
    config.h_init.family == ModelFamily::TfimTi && config.h_final.family == ModelFamily::TfimTi
}

/// Trotterized QATE on every block independently.
pub fn run_qate_blocks(config: &QateConfig) -> Result<TfimEnsemble> {
    if !supports(config) {
        return Err(config!("block engine needs tfim_ti at both endpoints"));
    }
    config.validate()?;
    let n = config.h_init.n;
    let (g0, g1) = (config.h_init.g, config.h_final.g);
    let (gammas, step) = config.gammas()?;
    let couplings: Vec<f64> = gammas.iter().map(|&gm| (1.0 - gm) * g0 + gm * g1).collect();
    let half = (n / 2) as i64;

    let mut blocks = Vec::new();
    let mut final_blocks = Vec::new();
    let mut initial_log_purity = 0.0;
    let mut log_purity = 0.0;
    let mut max_drift = 0.0f64;
    for k in 1..half {
        let mut block = thermal_block(config.beta, g0, k, n)?;
        let p0 = block.purity();
        initial_log_purity += p0.ln();
        // Accumulate the block propagator and apply it once, so the state's
        // spectrum is only exposed to the unitarity error of the product.
        let mut u = Mat4::identity();
        for (j, &g) in couplings.iter().enumerate() {
            u = block_propagator(g, k, n, step)? * u;
            if (j + 1) % REUNITARIZE_EVERY == 0 || j + 1 == couplings.len() {
                u = newton_schulz(&u);
                let rho = hermitize4(&(u * block.rho4 * u.adjoint()));
                let p = BlockState { rho4: rho, ..block }.purity();
                max_drift = max_drift.max((p - p0).abs() / p0);
            }
        }
        block.rho4 = hermitize4(&(u * block.rho4 * u.adjoint()));
        log_purity += block.purity().ln();
        let eps = eigenmode(g1, k, n)?;
        final_blocks.push(FinalBlock {
            k,
            eps,
            rho_b: block.in_eigenbasis(g1)?,
            init_pops: thermal_pops(config.beta, eigenmode(g0, k, n)?),
        });
        blocks.push(block);
    }
    let static_modes = [
        StaticMode::thermal(0, n, config.beta, g0),
        StaticMode::thermal(-half, n, config.beta, g0),
    ];
    for m in &static_modes {
        initial_log_purity += m.purity().ln();
        log_purity += m.purity().ln();
    }
    Ok(TfimEnsemble {
        n,
        beta: config.beta,
        g_init: g0,
        g_final: g1,
        blocks,
        static_modes,
        log_purity,
        initial_log_purity,
        max_step_purity_drift: max_drift,
        final_blocks,
    })
}

/// All benchmarks of a block ensemble in its final eigenbasis.
pub fn block_benchmarks(ens: &TfimEnsemble) -> Result<BenchmarkRecord> {
    let mut energy = 0.0;
    let mut e_min = 0.0;
    let mut variance = 0.0;
    let mut var_min = 0.0;
    let mut cod = 0.0;
    for b in &ens.final_blocks {
        energy += b.energy();
        variance += b.variance();
        cod += b.cod();
        let (pops, e) = b.rho_min();
        e_min += e;
        var_min += spectral::diagonal_variance(&pops, &b.levels());
    }
    for m in &ens.static_modes {
        let lv = m.energies(ens.g_final);
        let p = m.pops();
        energy += p[0] * lv[0] + p[1] * lv[1];
        variance += spectral::diagonal_variance(&p, &lv);
        let (pops, e) = spectral::rho_min_spectrum(&p, &lv)?;
        let mut sorted = lv;
        sorted.sort_by(f64::total_cmp);
        e_min += e;
        var_min += spectral::diagonal_variance(&pops, &sorted);
    }
    let entropy = ens.entropy();
    let modes = mode_energies(ens.g_final, ens.n)?;
    let thermal = ThermalSpectrum::FermionModes(&modes);
    let beta_g = beta_for_entropy(thermal, ens.initial_entropy())?;
    let e_g = thermal.energy(beta_g);
    Ok(BenchmarkRecord {
        energy,
        e_min,
        delta_e_qate: energy - e_min,
        delta_e_min: e_min - e_g,
        variance,
        var_min,
        delta_var: variance - var_min,
        cod,
        purity: ens.purity(),
        entropy,
    })
}

/// Closed forms for one block's energy and variance excess over its
/// minimal-energy reference: `Delta E_k ~ -2 |c|^2 eps^2 / E_min^k` (leading
/// order in small `Delta E_k`) and `Delta Var_k = 4 |c|^2 eps^2` (exact).
pub fn a6_identities(block: &FinalBlock, eps: f64) -> Result<(f64, f64)> {
    let c2 = block.coherence().norm_sqr();
    if c2 == 0.0 {
        return Ok((0.0, 0.0));
    }
    let d = block.outer_weight();
    let a = block.init_pops[0].max(block.init_pops[3]);
    let e_min = eps * (d - 2.0 * a);
    if e_min.abs() <= 1e-14 * eps.max(1.0) {
        return Err(QateError::Singularity(format!("E_min vanishes for block k = {}", block.k)));
    }
    Ok((-2.0 * c2 * eps * eps / e_min, 4.0 * c2 * eps * eps))
}

/// Direct per-block differences `(Delta E_k, Delta Var_k)` from populations.
pub fn a6_direct(block: &FinalBlock) -> (f64, f64) {
    let (pops, e_min) = block.rho_min();
    let var_min = spectral::diagonal_variance(&pops, &block.levels());
    (block.energy() - e_min, block.variance() - var_min)
}

/// Both sides of the conserved block purity,
/// `a^2 + (d - a)^2` and `b^2 + (d - b)^2 + 2 |c|^2`.
pub fn a6_purity_sides(block: &FinalBlock) -> (f64, f64) {
    let d = block.outer_weight();
    let a = block.init_pops[0];
    let b = block.lower();
    let c2 = block.coherence().norm_sqr();
    (a * a + (d - a).powi(2), b * b + (d - b).powi(2) + 2.0 * c2)
}

/// Purity-normalized correlation `Tr(e^{-iHt} rho e^{iHt} rho) / Tr(rho^2)`
/// as a product of block factors, accumulated as log-magnitude and phase.
pub fn normalized_correlation(ens: &TfimEnsemble, t: f64) -> C64 {
    correlation_from_factors(&block_factors(ens), t)
}

/// `(eps_k, frequency weights / block purity)` per block.
fn block_factors(ens: &TfimEnsemble) -> Vec<(f64, [f64; 5])> {
    ens.final_blocks
        .iter()
        .map(|b| {
            let p = b.purity();
            (b.eps, b.frequency_weights().map(|w| w / p))
        })
        .collect()
}

fn correlation_from_factors(factors: &[(f64, [f64; 5])], t: f64) -> C64 {
    let mut log_mag = 0.0;
    let mut phase = 0.0;
    for (eps, w) in factors {
        let e1 = C64::from_polar(1.0, -eps * t);
        let e2 = e1 * e1;
        let z = C64::new(w[0], 0.0) + e1 * w[1] + e1.conj() * w[2] + e2 * w[3] + e2.conj() * w[4];
        log_mag += 0.5 * z.norm_sqr().ln();
        phase += z.arg();
    }
    C64::from_polar(log_mag.exp(), phase)
}

/// Filtered BOD of a block ensemble on `omega_grid`.
pub fn bod_filtered_ti(ens: &TfimEnsemble, filter: &FilterSpec, omega_grid: &[f64]) -> Result<BodHistogram> {
    let factors = block_factors(ens);
    let signal: Vec<C64> = filter.times().iter().map(|&t| correlation_from_factors(&factors, t)).collect();
    let mut hist = spectral::bod_filtered(&signal, filter, omega_grid, 1.0)?;
    hist.purity_norm = ens.purity();
    Ok(hist)
}

/// Perturbative BOD contributions `(|omega|, mass)`: zeroth order on the
/// diagonal, first order within blocks at `2 eps_k`, second order from pairs
/// of blocks at `2 (eps_k + eps_l)` and `2 |eps_k - eps_l|`.
pub fn perturbative_masses(ens: &TfimEnsemble, order: usize) -> Result<Vec<(f64, f64)>> {
    if !(1..=2).contains(&order) {
        return Err(domain!("perturbative order must be 1 or 2, got {order}"));
    }
    let m: Vec<f64> = ens
        .final_blocks
        .iter()
        .map(|b| 2.0 * b.coherence().norm_sqr() / b.purity())
        .collect();
    let diag: f64 = m.iter().map(|x| 1.0 - x).product();
    let r: Vec<f64> = m.iter().map(|x| x / (1.0 - x)).collect();
    let eps: Vec<f64> = ens.final_blocks.iter().map(|b| b.eps).collect();
    let mut out = vec![(0.0, diag)];
    for (k, &rk) in r.iter().enumerate() {
        if rk > 0.0 {
            out.push((2.0 * eps[k], diag * rk));
        }
    }
    if order == 2 {
        for k in 0..r.len() {
            for l in k + 1..r.len() {
                let w = diag * r[k] * r[l];
                if w > 0.0 {
                    out.push((2.0 * (eps[k] + eps[l]), 0.5 * w));
                    out.push((2.0 * (eps[k] - eps[l]).abs(), 0.5 * w));
                }
            }
        }
    }
    Ok(out)
}

/// Perturbative BOD on top-hat bins of width `2 delta`.
pub fn bod_perturbative(ens: &TfimEnsemble, order: usize, delta: f64) -> Result<BodHistogram> {
    if !(delta > 0.0) {
        return Err(domain!("delta must be positive"));
    }
    let masses = perturbative_masses(ens, order)?;
    let top = masses.iter().map(|m| m.0).fold(0.0, f64::max);
    let bins = ((top + delta) / (2.0 * delta)).floor() as usize + 1;
    let mut values = vec![0.0; bins];
    for (w, m) in masses {
        values[((w + delta) / (2.0 * delta)).floor() as usize] += m;
    }
    Ok(BodHistogram {
        bin_centers: (0..bins).map(|n| 2.0 * delta * n as f64).collect(),
        bin_width: 2.0 * delta,
        values,
        purity_norm: ens.purity(),
        window: BinWindow::TopHat,
    })
}

/// Perturbative BOD evaluated with the same peak-one Gaussian window the
/// filtered BOD uses, so the two can be compared point by point.
pub fn bod_perturbative_gaussian(ens: &TfimEnsemble, order: usize, delta: f64, omega_grid: &[f64]) -> Result<BodHistogram> {
    if !(delta > 0.0) {
        return Err(domain!("delta must be positive"));
    }
    let masses = perturbative_masses(ens, order)?;
    let window = |x: f64| (-0.5 * (x / delta).powi(2)).exp();
    let values = omega_grid
        .iter()
        .map(|&om| {
            masses
                .iter()
                .map(|&(w, m)| {
                    // Each |omega| mass splits evenly between +w and -w, then
                    // the histogram folds -omega onto omega.
                    if w == 0.0 {
                        m * if om == 0.0 { window(0.0) } else { 2.0 * window(om) }
                    } else if om == 0.0 {
                        m * window(w)
                    } else {
                        m * (window(om - w) + window(om + w))
                    }
                })
                .sum()
        })
        .collect();
    Ok(BodHistogram {
        bin_centers: omega_grid.to_vec(),
        bin_width: 2.0 * delta,
        values,
        purity_norm: ens.purity(),
        window: BinWindow::Gaussian,
    })
}

/// Order-of-magnitude bound `max_s |d_s eps_k|^4 / (eps_k^6 T^2)` on the
/// final coherence `|c_k|^2` along the path `g(s)`; the O(1) prefactor is 1.
pub fn adiabatic_bound(g0: f64, g1: f64, schedule: &RampSchedule, k: i64, n: usize, total_time: f64) -> Result<f64> {
    check_mode(k, n)?;
    let cos = angle(k, n).cos();
    let sin = angle(k, n).sin();
    // eps_k vanishes only where sin = 0 and g = -cos.
    if sin.abs() < 1e-12 && (g0 + cos) * (g1 + cos) <= 0.0 {
        return Err(QateError::Singularity(format!("path {g0} -> {g1} closes the gap of mode {k}")));
    }
    let samples = 1000;
    let mut worst = 0.0f64;
    for i in 0..=samples {
        let s = i as f64 / samples as f64;
        let g = (1.0 - schedule.gamma(s)?) * g0 + schedule.gamma(s)? * g1;
        let eps = eigenmode(g, k, n)?;
        if eps < 1e-12 {
            return Err(QateError::Singularity(format!("eps_{k} vanishes at s = {s}")));
        }
        let deps = 4.0 * (g + cos) / eps * schedule.derivative(s) * (g1 - g0);
        worst = worst.max(deps.powi(4) / (eps.powi(6) * total_time * total_time));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm_hermitian, CMat, ZERO};
    use crate::protocol::HamiltonianSpec;

    /// Creation operators on the two-mode Fock space, index `n_{-k} + 2 n_k`,
    /// ordering `|n_k n_{-k}> = (f^dag_k)^{n_k} (f^dag_{-k})^{n_{-k}} |0>`.
    fn creation_ops() -> (CMat, CMat) {
        let mut fk = CMat::zeros(4, 4);
        let mut fmk = CMat::zeros(4, 4);
        for s in 0..4usize {
            let (nm, nk) = (s & 1, s >> 1);
            if nk == 0 {
                fk[(s | 2, s)] = ONE;
            }
            if nm == 0 {
                // f^dag_{-k} anticommutes past an occupied f^dag_k.
                fmk[(s | 1, s)] = if nk == 1 { -ONE } else { ONE };
            }
        }
        (fk, fmk)
    }

    /// `(f^dag_k, f_{-k}) h_k (f_k, f^dag_{-k})^T` with the 2x2 block matrix
    /// `h_k = [[-2c, 2i sin], [-2i sin, 2c]]`.
    fn fourier_block_hamiltonian(g: f64, k: i64, n: usize) -> CMat {
        let c = g + angle(k, n).cos();
        let sn = angle(k, n).sin();
        let (ck, cmk) = creation_ops();
        let (ak, amk) = (ck.adjoint(), cmk.adjoint());
        let row = [ck.clone(), amk.clone()];
        let col = [ak.clone(), cmk.clone()];
        let h = [
            [C64::new(-2.0 * c, 0.0), C64::new(0.0, 2.0 * sn)],
            [C64::new(0.0, -2.0 * sn), C64::new(2.0 * c, 0.0)],
        ];
        let mut out = CMat::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                out += (&row[i] * &col[j]) * h[i][j];
            }
        }
        out
    }

    fn to_dyn(m: &Mat4) -> CMat {
        CMat::from_fn(4, 4, |i, j| m[(i, j)])
    }

    #[test]
    fn eigenmode_examples() {
        assert!((eigenmode(1.5, 0, 4).unwrap() - 5.0).abs() < 1e-15);
        assert!((eigenmode(1.5, -2, 4).unwrap() - 1.0).abs() < 1e-15);
        // Closest paired mode to the critical one: eps = 2 sqrt(2 - 2 cos(2 pi / N)) ~ 4 pi / N.
        let eps = eigenmode(1.0, 49, 100).unwrap();
        assert!((eps - 4.0 * std::f64::consts::PI / 100.0).abs() < 1e-4);
        let eps_big = eigenmode(1.0, 499, 1000).unwrap();
        assert!((eps / eps_big - 10.0).abs() < 1e-2);
        assert!(eigenmode(1.0, 0, 5).is_err());
        assert!(eigenmode(1.0, 2, 4).is_err());
    }

    #[test]
    fn bogoliubov_examples() {
        let (s, t) = bogoliubov_coeffs(1.3, 0, 8).unwrap();
        assert!(s.abs() < 1e-15 && (t - 1.0).abs() < 1e-15);
        for &(g, k, n) in &[(1.5, 1, 4), (0.3, 3, 8), (0.8, 499, 1000), (2.0, -7, 20)] {
            let (s, t) = bogoliubov_coeffs(g, k, n).unwrap();
            assert!((s * s + t * t - 1.0).abs() < 1e-12);
        }
        // 2x2 check of U^dag h U = diag(eps, -eps).
        let (g, k, n) = (1.5, 1, 4);
        let (s, t) = bogoliubov_coeffs(g, k, n).unwrap();
        let c = g + angle(k, n).cos();
        let sn = angle(k, n).sin();
        let h = CMat::from_row_slice(2, 2, &[C64::new(-2.0 * c, 0.0), C64::new(0.0, 2.0 * sn), C64::new(0.0, -2.0 * sn), C64::new(2.0 * c, 0.0)]);
        let u = CMat::from_row_slice(2, 2, &[C64::new(s, 0.0), -I * t, -I * t, C64::new(s, 0.0)]);
        let d = u.adjoint() * h * &u;
        let eps = eigenmode(g, k, n).unwrap();
        assert!((d[(0, 0)].re - eps).abs() < 1e-12 && (d[(1, 1)].re + eps).abs() < 1e-12);
        assert!(d[(0, 1)].norm() < 1e-12);
        // Gap closing at k = -N/2, g = 1.
        assert!(matches!(bogoliubov_coeffs(1.0, -4, 8), Err(QateError::Singularity(_))));
    }

    #[test]
    fn block_transform_diagonalizes_fourier_block() {
        for &(g, k, n) in &[(1.5, 1, 4), (1.1, 2, 8), (0.4, 3, 8), (1.0, 5, 12)] {
            let t = block_transform(g, k, n).unwrap();
            assert!((t.adjoint() * t - Mat4::identity()).norm() < 1e-12);
            let eps = eigenmode(g, k, n).unwrap();
            let d = Mat4::from_diagonal(&nalgebra::Vector4::new(
                C64::new(-eps, 0.0),
                ZERO,
                ZERO,
                C64::new(eps, 0.0),
            ));
            let got = to_dyn(&(t * d * t.adjoint()));
            let want = fourier_block_hamiltonian(g, k, n);
            assert!((got - want).norm() < 1e-12, "g={g} k={k}");
        }
        // t = 0 at k = -N/2 below g = 1.
        assert_eq!(block_transform(0.5, -4, 8).unwrap(), Mat4::identity());
    }

    #[test]
    fn thermal_block_examples() {
        let b = thermal_block(0.0, 1.2, 1, 8).unwrap();
        assert!((b.rho4 - Mat4::identity() * C64::new(0.25, 0.0)).norm() < 1e-15);
        let z = ((-2.5f64).exp() + 2.5f64.exp()).powi(2);
        assert!((z - 150.4198).abs() < 1e-4);
        let p = thermal_pops(1.0, 5.0);
        assert!((p[0] - 5f64.exp() / z).abs() < 1e-12);
        let b = thermal_block(50.0, 1.5, 1, 4).unwrap();
        assert!((b.rho4.trace().re - 1.0).abs() < 1e-14);
        assert!((b.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quench_examples() {
        let b = thermal_block(1.0, 1.1, 1, 8).unwrap();
        let same = quench_step(&b, 1.1, 0.3).unwrap();
        assert!((same.rho4 - b.rho4).norm() < 1e-14);
        let zero = quench_step(&b, 1.5, 0.0).unwrap();
        assert!((zero.rho4 - b.rho4).norm() < 1e-15);
        let q = quench_step(&b, 1.5, 0.1).unwrap();
        let u = expm_hermitian(&fourier_block_hamiltonian(1.5, 1, 8), 0.1);
        let want = &u * to_dyn(&b.rho4) * u.adjoint();
        assert!((to_dyn(&q.rho4) - want).norm() < 1e-13);
    }

    fn tfim_config(n: usize, g0: f64, g1: f64, t: f64) -> QateConfig {
        QateConfig::new(HamiltonianSpec::tfim(n, g0), HamiltonianSpec::tfim(n, g1), 1.0, t)
    }

    #[test]
    fn run_invariants() {
        let ens = run_qate_blocks(&tfim_config(16, 1.1, 1.5, 5.0)).unwrap();
        assert!(ens.max_step_purity_drift < 1e-10);
        assert!((ens.log_purity - ens.initial_log_purity).abs() < 1e-10);
        assert!(ens.spectrum_drift() < 1e-10);
        assert!(ens.max_structure_defect() < 1e-12);
        assert!((ens.entropy() - ens.initial_entropy()).abs() < 1e-10);
        let init = [StaticMode::thermal(0, 16, 1.0, 1.1), StaticMode::thermal(-8, 16, 1.0, 1.1)];
        assert_eq!(ens.static_modes, init);
        for b in &ens.blocks {
            assert!((b.rho4 - b.rho4.adjoint()).norm() < 1e-12);
            assert!(b.eigenvalues()[0] > -1e-12);
            assert!((b.rho4.trace().re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_coupling_run_is_diagonal() {
        let ens = run_qate_blocks(&tfim_config(12, 1.3, 1.3, 4.0)).unwrap();
        let rec = block_benchmarks(&ens).unwrap();
        assert!(rec.cod < 1e-12);
        assert!(rec.delta_e_qate.abs() < 1e-12);
        assert!(rec.delta_e_min.abs() < 1e-9);
    }

    #[test]
    fn short_run_is_close_to_initial() {
        let ens = run_qate_blocks(&tfim_config(12, 1.1, 1.5, 1e-3).with_tau(1e-3)).unwrap();
        let rec = block_benchmarks(&ens).unwrap();
        assert!(rec.cod > 0.0);
        let thermal: f64 = (1..6)
            .map(|k| {
                let b = thermal_block(1.0, 1.1, k, 12).unwrap();
                (b.rho4 - ens.blocks[k as usize - 1].rho4).norm()
            })
            .fold(0.0, f64::max);
        assert!(thermal < 1e-2);
    }

    #[test]
    fn block_cod_matches_dense_commutator() {
        let eps = 1.7;
        let (a, b, z) = (0.6, 0.55, 10.0);
        let d = 1.0 - 2.0 / z;
        let c = C64::new(0.05, -0.12);
        let mut rho = Mat4::zeros();
        rho[(0, 0)] = C64::new(b, 0.0);
        rho[(1, 1)] = C64::new(1.0 / z, 0.0);
        rho[(2, 2)] = C64::new(1.0 / z, 0.0);
        rho[(3, 3)] = C64::new(d - b, 0.0);
        rho[(0, 3)] = c;
        rho[(3, 0)] = c.conj();
        let block = FinalBlock { k: 1, eps, rho_b: rho, init_pops: [a, 1.0 / z, 1.0 / z, d - a] };
        let h = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(-eps, 0.0), ZERO, ZERO, C64::new(eps, 0.0)]));
        let r = to_dyn(&rho);
        let comm = &r * &h - &h * &r;
        let want = -(&comm * &comm).trace().re / (&r * &r).trace().re;
        assert!((block.cod() - want).abs() < 1e-13);
        let formula = eps * eps * 8.0 * c.norm_sqr() / (b * b + (d - b).powi(2) + 2.0 / (z * z) + 2.0 * c.norm_sqr());
        assert!((block.cod() - formula).abs() < 1e-13);
    }

    #[test]
    fn a6_closed_forms() {
        let ens = run_qate_blocks(&tfim_config(20, 1.1, 1.5, 30.0)).unwrap();
        for b in &ens.final_blocks {
            let (de, dv) = a6_identities(b, b.eps).unwrap();
            let (de_direct, dv_direct) = a6_direct(b);
            assert!((de - de_direct).abs() <= 1e-3 * de_direct.abs() + 1e-15);
            assert!((dv - dv_direct).abs() <= 1e-6 * dv_direct.abs() + 1e-13);
            let (lhs, rhs) = a6_purity_sides(b);
            assert!((lhs - rhs).abs() < 1e-12);
        }
        let diag = run_qate_blocks(&tfim_config(8, 1.2, 1.2, 2.0)).unwrap();
        for b in &diag.final_blocks {
            let mut clean = b.clone();
            clean.rho_b[(0, 3)] = ZERO;
            assert_eq!(a6_identities(&clean, b.eps).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn diagonal_ensemble_bod_sits_at_zero() {
        let ens = run_qate_blocks(&tfim_config(8, 1.2, 1.2, 2.0)).unwrap();
        let f = FilterSpec::covering(0.1, 2.0 * ens.final_norm().unwrap(), 5.0).unwrap();
        let hist = bod_filtered_ti(&ens, &f, &[0.0, 1.0, 2.0]).unwrap();
        assert!((hist.values[0] - 1.0).abs() < 1e-10);
        assert!(hist.values[1].abs() < 1e-10);
        let pert = bod_perturbative(&ens, 2, 0.1).unwrap();
        assert!((pert.values[0] - 1.0).abs() < 1e-12);
        assert!(pert.values[1..].iter().all(|v| v.abs() < 1e-20));
        assert!(bod_perturbative(&ens, 3, 0.1).is_err());
    }

    #[test]
    fn perturbative_support_starts_at_the_gap() {
        let ens = run_qate_blocks(&tfim_config(40, 1.1, 1.5, 10.0)).unwrap();
        let masses = perturbative_masses(&ens, 1).unwrap();
        let lowest = masses[1..].iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
        let gap = 2.0 * (1..20).map(|k| eigenmode(1.5, k, 40).unwrap()).fold(f64::INFINITY, f64::min);
        assert!((lowest - gap).abs() < 1e-12);
        assert!(lowest > 2.0);
    }

    #[test]
    fn adiabatic_bound_examples() {
        let lin = RampSchedule::linear();
        assert_eq!(adiabatic_bound(1.2, 1.2, &lin, 3, 20, 10.0).unwrap(), 0.0);
        let b1 = adiabatic_bound(1.1, 1.5, &lin, 1, 100, 50.0).unwrap();
        let b2 = adiabatic_bound(1.1, 1.5, &lin, 1, 100, 100.0).unwrap();
        assert!((b1 / b2 - 4.0).abs() < 1e-12);
        assert!(adiabatic_bound(0.8, 1.2, &lin, -50, 100, 10.0).is_err());
        let ens = run_qate_blocks(&tfim_config(100, 1.1, 1.5, 100.0)).unwrap();
        assert!(ens.final_blocks[0].coherence().norm_sqr() < b2);
    }
}
