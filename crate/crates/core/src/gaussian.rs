//! Quadratic-fermion (BdG) engine.
//!
//! A quadratic operator is `H = 1/2 Psi^dag h Psi + offset` with
//! `Psi = (a_1..a_N, a^dag_1..a^dag_N)` and `h = [[A, B], [-B*, -A*]]`.
//! Gaussian states are `rho = e^{-K} / Tr e^{-K}` with `K = 1/2 Psi^dag kappa Psi`.
//! Jordan-Wigner: `sigma^z_j = 1 - 2 n_j`, so site `j` empty is spin up, the
//! same convention as the dense engine.

use crate::error::{config, domain, QateError, Result};
use crate::linalg::{self, eigh, expm_hermitian, ChebyshevPropagator, CMat, SparseOp, C64};
use crate::protocol::{HamiltonianSpec, ModelFamily, QateConfig};
use crate::spectral::{self, beta_for_entropy, BenchmarkRecord, ThermalSpectrum};

/// Largest inverse temperature accepted, keeping `e^{kappa}` finite.
pub const MAX_BETA: f64 = 50.0;

/// Up to this many modes `E_min` is taken from the enumerated many-body spectra.
pub const ENUMERATION_MODES: usize = 16;

#[derive(Debug, Clone)]
pub struct QuadraticHamiltonian {
    pub n: usize,
    pub bdg: CMat,
    pub offset: f64,
}

/// Builder for `sum A_ij a^dag_i a_j + 1/2 sum (B_ij a^dag_i a^dag_j + h.c.) + c0`.
struct Quadratic {
    n: usize,
    a: CMat,
    b: CMat,
    c0: f64,
}

impl Quadratic {
    fn new(n: usize) -> Self {
        Quadratic {
            n,
            a: CMat::zeros(n, n),
            b: CMat::zeros(n, n),
            c0: 0.0,
        }
    }

    /// Adds `coeff * sigma^z_j = coeff (1 - 2 n_j)`.
    fn z(&mut self, j: usize, coeff: f64) {
        self.a[(j, j)] += C64::new(-2.0 * coeff, 0.0);
        self.c0 += coeff;
    }

    /// Adds `coeff (a^dag_i - a_i)(a^dag_j + a_j)`, `i != j`, the fermionic
    /// form of `sigma^x_i sigma^x_j` on neighbouring sites.
    fn xx(&mut self, i: usize, j: usize, coeff: f64) {
        let c = C64::new(coeff, 0.0);
        self.a[(i, j)] += c;
        self.a[(j, i)] += c;
        self.b[(i, j)] += c;
        self.b[(j, i)] -= c;
    }

    fn finish(self) -> QuadraticHamiltonian {
        let n = self.n;
        let mut bdg = CMat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                bdg[(i, j)] = self.a[(i, j)];
                bdg[(i, n + j)] = self.b[(i, j)];
                bdg[(n + i, j)] = -self.b[(i, j)].conj();
                bdg[(n + i, n + j)] = -self.a[(i, j)].conj();
            }
        }
        let offset = 0.5 * linalg::trace(&self.a).re + self.c0;
        QuadraticHamiltonian { n, bdg, offset }
    }
}

/// Builds the BdG form of a `tfim_ti` or `z_field_isospectral` Hamiltonian.
pub fn bdg_from_spec(spec: &HamiltonianSpec) -> Result<QuadraticHamiltonian> {
    spec.validate()?;
    let n = spec.n;
    let mut q = Quadratic::new(n);
    match spec.family {
        ModelFamily::TfimTi => {
            // -sigma^x_j sigma^x_{j+1} = -(a^dag_j - a_j)(a^dag_{j+1} + a_{j+1}); with
            // J_bc = -P the boundary bond takes the same form, closing the ring.
            for j in 0..n {
                q.xx(j, (j + 1) % n, -spec.j);
            }
            for j in 0..n {
                q.z(j, -spec.g);
            }
        }
        ModelFamily::ZFieldIsospectral => {
            // Same field sign as the TFIM term -g Z.
            for (j, e) in crate::exact_diag::isospectral_fields(spec)?.into_iter().enumerate() {
                q.z(j, -0.5 * e);
            }
        }
        other => return Err(config!("the Gaussian engine does not support {other:?}")),
    }
    Ok(q.finish())
}

impl QuadraticHamiltonian {
    pub fn dim(&self) -> usize {
        2 * self.n
    }

    /// Largest violation of Hermiticity or particle-hole structure.
    pub fn structure_defect(&self) -> f64 {
        particle_hole_defect(&self.bdg, self.n)
    }

    /// Single-particle energies `eps_k >= 0`, ascending. The many-body levels
    /// are `offset + sum_k (+/-) eps_k / 2`.
    pub fn mode_energies(&self) -> Vec<f64> {
        let vals = linalg::eigvalsh(&self.bdg);
        vals[self.n..].iter().map(|v| v.max(0.0)).collect()
    }

    /// `a * x + b * y` for operators of equal size.
    pub fn combine(a: f64, x: &Self, b: f64, y: &Self) -> Result<Self> {
        if x.n != y.n {
            return Err(config!("BdG sizes differ: {} vs {}", x.n, y.n));
        }
        Ok(QuadraticHamiltonian {
            n: x.n,
            bdg: x.bdg.scale(a) + y.bdg.scale(b),
            offset: a * x.offset + b * y.offset,
        })
    }
}

fn particle_hole_defect(m: &CMat, n: usize) -> f64 {
    let mut worst = linalg::hermiticity_error(m);
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(n + i, n + j)] + m[(i, j)].conj()).norm());
            worst = worst.max((m[(n + i, j)] + m[(i, n + j)].conj()).norm());
            worst = worst.max((m[(i, n + j)] + m[(j, n + i)]).norm());
        }
    }
    worst
}

/// `rho = e^{-K} / Tr e^{-K}`, `K = 1/2 Psi^dag kappa Psi`.
#[derive(Debug, Clone)]
pub struct GaussianThermalState {
    pub n: usize,
    pub kappa: CMat,
    pub log_z: f64,
}

/// `ln(2 cosh(x / 2))`, stable for large `|x|`.
fn ln_2cosh_half(x: f64) -> f64 {
    let a = 0.5 * x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// `ln(1 / (1 + e^{-x}))`.
fn ln_fermi(x: f64) -> f64 {
    if x > 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl GaussianThermalState {
    /// Ascending eigenvalues of kappa.
    pub fn kappa_spectrum(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.kappa)
    }

    /// Mode values `lambda_k >= 0` (the upper half of kappa's spectrum).
    pub fn modes(&self) -> Vec<f64> {
        self.kappa_spectrum()[self.n..].iter().map(|v| v.max(0.0)).collect()
    }

    /// `G = <Psi Psi^dag> = (1 + e^{-kappa})^{-1}`.
    pub fn covariance(&self) -> CMat {
        let eig = eigh(&self.kappa);
        linalg::spectral_map(&eig, |l| C64::new(ln_fermi(l).exp(), 0.0))
    }

    pub fn log_purity(&self) -> f64 {
        self.modes()
            .iter()
            .map(|&l| {
                // cosh(l) / (2 cosh^2(l / 2)) in logs.
                (ln_2cosh_half(2.0 * l) - std::f64::consts::LN_2) - 2.0 * (ln_2cosh_half(l) - std::f64::consts::LN_2)
                    - std::f64::consts::LN_2
            })
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.modes()
            .iter()
            .map(|&l| ln_2cosh_half(l) - 0.5 * l * (0.5 * l).tanh())
            .sum()
    }

    /// Minority occupations `1 / (1 + e^{lambda_k})`, ascending in `lambda_k`.
    fn mode_fermi(&self) -> Vec<f64> {
        self.modes().iter().map(|&l| ln_fermi(-l).exp()).collect()
    }
}

/// Gibbs state of `h` at inverse temperature `beta`.
pub fn thermal_gaussian(h: &QuadraticHamiltonian, beta: f64) -> Result<GaussianThermalState> {
    if !(0.0..=MAX_BETA).contains(&beta) {
        return Err(domain!("beta must lie in [0, {MAX_BETA}], got {beta}"));
    }
    let kappa = h.bdg.scale(beta);
    let mut state = GaussianThermalState {
        n: h.n,
        kappa,
        log_z: 0.0,
    };
    state.log_z = state.modes().iter().map(|&l| ln_2cosh_half(l)).sum();
    Ok(state)
}

/// `kappa <- R kappa R^dag`, `R = exp(-i h tau)`.
pub fn evolve_step(state: &GaussianThermalState, h: &QuadraticHamiltonian, tau: f64) -> Result<GaussianThermalState> {
    if state.n != h.n {
        return Err(config!("state has N = {}, Hamiltonian N = {}", state.n, h.n));
    }
    let r = expm_hermitian(&h.bdg, tau);
    Ok(GaussianThermalState {
        n: state.n,
        kappa: linalg::hermitize(&linalg::mul_adjoint(&linalg::matmul(&r, &state.kappa), &r)),
        log_z: state.log_z,
    })
}

fn check_pair(state: &GaussianThermalState, h: &QuadraticHamiltonian) -> Result<()> {
    if state.n != h.n {
        return Err(config!("state has N = {}, Hamiltonian N = {}", state.n, h.n));
    }
    Ok(())
}

/// `Tr(rho H) = 1/2 (tr h - tr(h G)) + offset`.
pub fn energy(state: &GaussianThermalState, h: &QuadraticHamiltonian) -> Result<f64> {
    check_pair(state, h)?;
    let g = state.covariance();
    Ok(0.5 * (linalg::trace(&h.bdg) - linalg::trace_product(&h.bdg, &g)).re + h.offset)
}

/// `Tr(rho H^2) - Tr(rho H)^2 = 1/2 tr(h G h (1 - G))`.
pub fn variance(state: &GaussianThermalState, h: &QuadraticHamiltonian) -> Result<f64> {
    check_pair(state, h)?;
    let g = state.covariance();
    let one_minus = CMat::identity(g.nrows(), g.ncols()) - &g;
    let left = linalg::matmul(&h.bdg, &g);
    let right = linalg::matmul(&h.bdg, &one_minus);
    Ok(0.5 * linalg::trace_product(&left, &right).re)
}

pub fn purity(state: &GaussianThermalState) -> f64 {
    state.log_purity().exp()
}

/// `ln Tr(rho_a rho_b) = 1/2 ln det(G_a G_b + (1 - G_a)(1 - G_b))`.
pub fn log_overlap(a: &GaussianThermalState, b: &GaussianThermalState) -> Result<f64> {
    if a.n != b.n {
        return Err(config!("states differ in size"));
    }
    let (ga, gb) = (a.covariance(), b.covariance());
    let id = CMat::identity(ga.nrows(), ga.ncols());
    let m = linalg::matmul(&ga, &gb) + linalg::matmul(&(&id - &ga), &(&id - &gb));
    let ld = linalg::log_det(&m);
    Ok(0.5 * ld.re)
}

pub fn overlap(a: &GaussianThermalState, b: &GaussianThermalState) -> Result<f64> {
    Ok(log_overlap(a, b)?.exp())
}

/// `-Tr([H, rho]^2) / Tr(rho^2)` by Wick contraction under `rho^2 / Tr rho^2`,
/// with `Tr(H rho H rho)` from the conjugated operator `rho H rho^{-1}`. In the
/// eigenbasis of kappa (values `l_i`, `h' = W^dag h W`):
/// `COD = sum_ij |h'_ij|^2 g_j (1 - g_i) (1 - e^{l_i - l_j})`, `g = 1 / (1 + e^{-2 l})`.
pub fn cod_gaussian(state: &GaussianThermalState, h: &QuadraticHamiltonian) -> Result<f64> {
    check_pair(state, h)?;
    let eig = eigh(&state.kappa);
    let hp = linalg::adjoint_mul(&eig.vectors, &linalg::matmul(&h.bdg, &eig.vectors));
    let l = &eig.values;
    let dim = l.len();
    let mut total = 0.0;
    for j in 0..dim {
        let lg_j = ln_fermi(2.0 * l[j]);
        for i in 0..dim {
            let w = hp[(i, j)].norm_sqr();
            if w == 0.0 {
                continue;
            }
            let base = lg_j + ln_fermi(-2.0 * l[i]);
            total += w * (base.exp() - (base + l[i] - l[j]).exp());
        }
    }
    Ok(total.max(0.0))
}

/// Final state, benchmarks and conservation diagnostics of a Gaussian QATE run.
#[derive(Debug, Clone)]
pub struct GaussianRun {
    pub state: GaussianThermalState,
    pub record: BenchmarkRecord,
    /// Largest change of any kappa eigenvalue over the run.
    pub spectrum_drift: f64,
    /// Relative change of the purity over the run.
    pub purity_drift: f64,
    /// Change of the von Neumann entropy over the run.
    pub entropy_drift: f64,
}

/// Trotterized QATE. The accumulated single-particle propagator is built with
/// Chebyshev steps on the sparse instantaneous BdG matrix and applied to the
/// initial kappa once at the end.
pub fn run_qate_gaussian(config: &QateConfig) -> Result<GaussianRun> {
    config.validate()?;
    let hi = bdg_from_spec(&config.h_init)?;
    let hf = bdg_from_spec(&config.h_final)?;
    let init = thermal_gaussian(&hi, config.beta)?;
    let (si, sf) = (SparseOp::from_dense(&hi.bdg), SparseOp::from_dense(&hf.bdg));
    let (gammas, step) = config.gammas()?;
    let mut u = CMat::identity(hi.dim(), hi.dim());
    for &g in &gammas {
        let h = SparseOp::combine(1.0 - g, &si, g, &sf);
        u = ChebyshevPropagator::new(&h, step).apply(&h, &u);
    }
    let state = GaussianThermalState {
        n: init.n,
        kappa: linalg::hermitize(&linalg::mul_adjoint(&linalg::matmul(&u, &init.kappa), &u)),
        log_z: init.log_z,
    };
    let spectrum_drift = init
        .kappa_spectrum()
        .iter()
        .zip(state.kappa_spectrum())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let purity_drift = (state.log_purity() - init.log_purity()).exp_m1().abs();
    let entropy_drift = (state.entropy() - init.entropy()).abs();
    let record = gaussian_benchmarks(&init, &state, &hi, &hf, config.beta)?;
    Ok(GaussianRun {
        state,
        record,
        spectrum_drift,
        purity_drift,
        entropy_drift,
    })
}

/// Benchmarks of a final Gaussian state against `H_final`. `E_min` comes from
/// the enumerated many-body spectra up to `ENUMERATION_MODES` modes and from
/// the mode-wise rearrangement beyond, which is exact for isospectral endpoints.
pub fn gaussian_benchmarks(
    init: &GaussianThermalState,
    state: &GaussianThermalState,
    hi: &QuadraticHamiltonian,
    hf: &QuadraticHamiltonian,
    beta: f64,
) -> Result<BenchmarkRecord> {
    let energy_v = energy(state, hf)?;
    let var = variance(state, hf)?;
    let cod = cod_gaussian(state, hf)?;
    let entropy = state.entropy();
    let eps_f = hf.mode_energies();
    let eps_i = hi.mode_energies();
    let thermal = ThermalSpectrum::FermionModes(&eps_f);
    let beta_g = beta_for_entropy(thermal, init.entropy()).or_else(|e| match e {
        // A pure initial state has no finite matching temperature.
        QateError::Domain(_) if init.entropy() < 1e-12 => Ok(spectral::BETA_BRACKET.1),
        e => Err(e),
    })?;
    let e_g = thermal.energy(beta_g) + hf.offset;
    let (e_min, var_min) = if hi.n <= ENUMERATION_MODES {
        let levels_i = crate::tfim_blocks::many_body_spectrum(&eps_i)?;
        let levels_f = crate::tfim_blocks::many_body_spectrum(&eps_f)?;
        let weights = crate::exact_diag::gibbs_weights(&levels_i, beta);
        let (pops, e) = spectral::rho_min_spectrum(&weights, &levels_f)?;
        (e + hf.offset, spectral::diagonal_variance(&pops, &levels_f))
    } else {
        // Mode-wise rearrangement: the k-th smallest kappa mode (largest
        // minority occupation) goes to the k-th smallest final mode.
        let mut e = hf.offset;
        let mut v = 0.0;
        for (p, ef) in init.mode_fermi().iter().zip(&eps_f) {
            e -= 0.5 * ef * (1.0 - 2.0 * p);
            v += ef * ef * p * (1.0 - p);
        }
        (e, v)
    };
    Ok(BenchmarkRecord {
        energy: energy_v,
        e_min,
        delta_e_qate: energy_v - e_min,
        delta_e_min: e_min - e_g,
        variance: var,
        var_min,
        delta_var: var - var_min,
        cod,
        purity: state.log_purity().exp(),
        entropy,
    })
}

/// Correlation `Tr(e^{-iHt} rho e^{iHt} rho) / Tr(rho^2)` at each time, by
/// Gaussian overlaps.
pub fn normalized_correlations(
    state: &GaussianThermalState,
    h: &QuadraticHamiltonian,
    times: &[f64],
) -> Result<Vec<C64>> {
    check_pair(state, h)?;
    let eig = eigh(&h.bdg);
    let lp = state.log_purity();
    times
        .iter()
        .map(|&t| {
            let r = linalg::spectral_map(&eig, |e| C64::from_polar(1.0, -e * t));
            let moved = GaussianThermalState {
                n: state.n,
                kappa: linalg::hermitize(&linalg::mul_adjoint(&linalg::matmul(&r, &state.kappa), &r)),
                log_z: state.log_z,
            };
            Ok(C64::new((log_overlap(&moved, state)? - lp).exp(), 0.0))
        })
        .collect()
}

/// Filtered BOD of a Gaussian state with respect to `h`.
pub fn bod_gaussian(
    state: &GaussianThermalState,
    h: &QuadraticHamiltonian,
    filter: &spectral::FilterSpec,
    omega_grid: &[f64],
) -> Result<spectral::BodHistogram> {
    let signal = normalized_correlations(state, h, &filter.times())?;
    let mut hist = spectral::bod_filtered(&signal, filter, omega_grid, 1.0)?;
    hist.purity_norm = purity(state);
    Ok(hist)
}

/// Largest structure violation of a state's kappa.
pub fn kappa_structure_defect(state: &GaussianThermalState) -> f64 {
    particle_hole_defect(&state.kappa, state.n)
}
