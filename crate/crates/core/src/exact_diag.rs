//! Dense exact-diagonalization engine for spin chains.
//!
//! Site `i` (0-based) is bit `i` of the computational-basis index and
//! `sigma^z |0> = +|0>`. Full-state evolution uses dense propagators; the
//! purified representation evolves `rho = W diag(p) W^dagger` one-sidedly with
//! a sparse Chebyshev propagator, which is what makes N = 10 sweeps cheap.

use std::ops::Range;

use crate::error::{config, domain, QateError, Result};
use crate::linalg::{
    self, eigh, expm_hermitian, ChebyshevPropagator, CMat, Eigh, SparseOp, C64, ONE, ZERO,
};
use crate::protocol::{Boundary, HamiltonianSpec, ModelFamily, QateConfig};
use crate::spectral::{self, BenchmarkRecord};
use crate::tfim_blocks;

/// Largest chain `build_hamiltonian` accepts by default.
pub const DEFAULT_HARD_CAP: usize = 14;

/// A dense operator on `n` spins.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub n: usize,
    pub mat: CMat,
}

/// A dense density matrix on `n` spins.
#[derive(Debug, Clone)]
pub struct DenseState {
    pub n: usize,
    pub rho: CMat,
}

/// Ascending eigendecomposition of a Hamiltonian.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub energies: Vec<f64>,
    pub vectors: CMat,
}

impl DenseOperator {
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn eigen(&self) -> EigenDecomposition {
        let Eigh { values, vectors } = eigh(&self.mat);
        EigenDecomposition {
            energies: values,
            vectors,
        }
    }

    pub fn sparse(&self) -> SparseOp {
        SparseOp::from_dense(&self.mat)
    }
}

impl EigenDecomposition {
    /// `|| H - V diag(E) V^dagger ||_F`.
    pub fn reconstruction_error(&self, h: &DenseOperator) -> f64 {
        let back = self.rebuild(|e| C64::new(e, 0.0));
        (back - &h.mat).norm()
    }

    /// `V diag(f(E)) V^dagger`.
    pub fn rebuild(&self, f: impl Fn(f64) -> C64) -> CMat {
        let eig = Eigh {
            values: self.energies.clone(),
            vectors: self.vectors.clone(),
        };
        linalg::spectral_map(&eig, f)
    }
}

impl DenseState {
    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.rho).re
    }

    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Ascending eigenvalues of the density matrix.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::eigvalsh(&self.rho)
    }

    pub fn expectation(&self, op: &DenseOperator) -> f64 {
        linalg::trace_product(&self.rho, &op.mat).re
    }
}

/// One Pauli-string term `coeff * Z^{z_mask} X^{x_mask}` (X factors act first).
#[derive(Debug, Clone, Copy)]
struct PauliTerm {
    coeff: f64,
    x_mask: usize,
    z_mask: usize,
}

fn assemble(n: usize, terms: &[PauliTerm]) -> CMat {
    let dim = 1usize << n;
    let mut m = CMat::zeros(dim, dim);
    for b in 0..dim {
        for t in terms {
            let out = b ^ t.x_mask;
            let sign = if (out & t.z_mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            m[(out, b)] += C64::new(t.coeff * sign, 0.0);
        }
    }
    m
}

fn x_term(coeff: f64, sites: &[usize]) -> PauliTerm {
    PauliTerm {
        coeff,
        x_mask: sites.iter().map(|s| 1usize << s).sum(),
        z_mask: 0,
    }
}

fn z_term(coeff: f64, sites: &[usize]) -> PauliTerm {
    PauliTerm {
        coeff,
        x_mask: 0,
        z_mask: sites.iter().map(|s| 1usize << s).sum(),
    }
}

/// Builds the dense Hamiltonian with the default hard cap.
pub fn build_hamiltonian(spec: &HamiltonianSpec) -> Result<DenseOperator> {
    build_hamiltonian_capped(spec, DEFAULT_HARD_CAP)
}

pub fn build_hamiltonian_capped(spec: &HamiltonianSpec, cap: usize) -> Result<DenseOperator> {
    if spec.n > cap {
        return Err(QateError::Resource(format!(
            "N = {} exceeds the dense cap of {cap}",
            spec.n
        )));
    }
    spec.validate()?;
    let n = spec.n;
    let mat = match spec.family {
        ModelFamily::MixedFieldIsing => {
            let mut terms = Vec::new();
            for i in 0..n.saturating_sub(1) {
                terms.push(z_term(spec.j, &[i, i + 1]));
            }
            for i in 0..n {
                terms.push(z_term(spec.h, &[i]));
                terms.push(x_term(spec.g, &[i]));
            }
            assemble(n, &terms)
        }
        ModelFamily::TfimTi => {
            debug_assert_eq!(spec.boundary, Boundary::ParitySector);
            let mut terms = Vec::new();
            for i in 0..n - 1 {
                terms.push(x_term(-spec.j, &[i, i + 1]));
            }
            for i in 0..n {
                terms.push(z_term(-spec.g, &[i]));
            }
            // -J_bc X_N X_1 with J_bc = -P: the string P X_N X_1.
            let all: Vec<usize> = (0..n).collect();
            let mut bc = x_term(spec.j, &[n - 1, 0]);
            bc.z_mask = z_term(1.0, &all).z_mask;
            terms.push(bc);
            assemble(n, &terms)
        }
        ModelFamily::ZFieldIsospectral => {
            let eps = isospectral_fields(spec)?;
            // Field sign matches the TFIM term -g Z, so both ground states are polarized alike.
            let terms: Vec<PauliTerm> = eps
                .iter()
                .enumerate()
                .map(|(i, &e)| z_term(-0.5 * e, &[i]))
                .collect();
            assemble(n, &terms)
        }
        ModelFamily::DenseCustom => {
            let entries = spec.matrix.as_ref().ok_or_else(|| config!("dense_custom needs a matrix"))?;
            let dim = 1usize << n;
            let m = CMat::from_fn(dim, dim, |r, c| {
                let (re, im) = entries[r * dim + c];
                C64::new(re, im)
            });
            if linalg::hermiticity_error(&m) > 1e-12 * m.norm().max(1.0) {
                return Err(config!("dense_custom matrix is not Hermitian"));
            }
            linalg::hermitize(&m)
        }
    };
    Ok(DenseOperator { n, mat })
}

/// On-site energies `eps_k`, `k = 1..N`, of the isospectral field Hamiltonian.
pub fn isospectral_fields(spec: &HamiltonianSpec) -> Result<Vec<f64>> {
    let n = spec.n;
    (1..=n)
        .map(|k| {
            let k = k as i64;
            let k = if k >= n as i64 / 2 { k - n as i64 } else { k };
            tfim_blocks::eigenmode(spec.g, k, n)
        })
        .collect()
}

/// Gibbs weights `e^{-beta E} / Z` for an ascending spectrum, ground-shifted.
pub fn gibbs_weights(energies: &[f64], beta: f64) -> Vec<f64> {
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|&e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub fn gibbs(h: &DenseOperator, beta: f64) -> Result<DenseState> {
    if !(beta >= 0.0) {
        return Err(domain!("beta must be >= 0, got {beta}"));
    }
    let eig = h.eigen();
    let p = gibbs_weights(&eig.energies, beta);
    let mut scaled = eig.vectors.clone();
    for (j, &pj) in p.iter().enumerate() {
        scaled.column_mut(j).scale_mut(pj.sqrt());
    }
    let rho = linalg::mul_adjoint(&scaled, &scaled);
    Ok(DenseState {
        n: h.n,
        rho: linalg::hermitize(&rho),
    })
}

/// Instantaneous Hamiltonians `(1 - gamma) H_i + gamma H_f` along the grid.
fn endpoint_operators(config: &QateConfig, cap: usize) -> Result<(DenseOperator, DenseOperator)> {
    config.validate()?;
    Ok((
        build_hamiltonian_capped(&config.h_init, cap)?,
        build_hamiltonian_capped(&config.h_final, cap)?,
    ))
}

/// Trotterized QATE with exact dense propagators `exp(-i H(s_j) tau)`.
pub fn qate_evolve(rho: &DenseState, config: &QateConfig) -> Result<DenseState> {
    let (hi, hf) = endpoint_operators(config, DEFAULT_HARD_CAP)?;
    if hi.dim() != rho.dim() {
        return Err(config!("state dimension {} does not match N = {}", rho.dim(), hi.n));
    }
    let (gammas, step) = config.gammas()?;
    let mut cur = rho.rho.clone();
    for &g in &gammas {
        let h = hi.mat.scale(1.0 - g) + hf.mat.scale(g);
        let u = expm_hermitian(&h, step);
        cur = linalg::mul_adjoint(&linalg::matmul(&u, &cur), &u);
    }
    Ok(DenseState {
        n: rho.n,
        rho: linalg::hermitize(&cur),
    })
}

/// `rho = W diag(p) W^dagger` with orthonormal columns of `W`.
#[derive(Debug, Clone)]
pub struct PurifiedState {
    pub n: usize,
    pub weights: Vec<f64>,
    pub vectors: CMat,
}

impl PurifiedState {
    /// Spectral purification of a dense state.
    pub fn from_dense(state: &DenseState) -> Self {
        let eig = eigh(&state.rho);
        PurifiedState {
            n: state.n,
            weights: eig.values.iter().map(|&p| p.max(0.0)).collect(),
            vectors: eig.vectors,
        }
    }

    /// Gibbs state of `h`, built directly in its eigenbasis.
    pub fn gibbs(h: &DenseOperator, eig: &EigenDecomposition, beta: f64) -> Self {
        PurifiedState {
            n: h.n,
            weights: gibbs_weights(&eig.energies, beta),
            vectors: eig.vectors.clone(),
        }
    }

    fn scaled_vectors(&self) -> CMat {
        let mut w = self.vectors.clone();
        for (j, &p) in self.weights.iter().enumerate() {
            w.column_mut(j).scale_mut(p.sqrt());
        }
        w
    }

    pub fn to_dense(&self) -> DenseState {
        let w = self.scaled_vectors();
        DenseState {
            n: self.n,
            rho: linalg::hermitize(&linalg::mul_adjoint(&w, &w)),
        }
    }

    /// Eigenvalues of `W diag(p) W^dagger`, descending, from the nonzero
    /// spectrum of `diag(sqrt p) W^dagger W diag(sqrt p)`.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut m = linalg::adjoint_mul(&self.vectors, &self.vectors);
        let roots: Vec<f64> = self.weights.iter().map(|p| p.max(0.0).sqrt()).collect();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                m[(i, j)] *= roots[i] * roots[j];
            }
        }
        let mut vals = linalg::eigvalsh(&linalg::hermitize(&m));
        vals.reverse();
        vals
    }

    /// `max |W^dagger W - I|`, the accumulated loss of unitarity.
    pub fn unitarity_defect(&self) -> f64 {
        let gram = linalg::adjoint_mul(&self.vectors, &self.vectors);
        let dim = gram.nrows();
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((gram[(i, j)] - target).norm());
            }
        }
        worst
    }

    pub fn energy(&self, h: &SparseOp) -> f64 {
        let hw = h.apply(&self.vectors);
        column_dots(&self.vectors, &hw)
            .iter()
            .zip(&self.weights)
            .map(|(d, p)| p * d.re)
            .sum()
    }

    /// Energy, variance and purity-normalized COD with respect to `h`.
    pub fn moments(&self, h: &SparseOp) -> StateMoments {
        let hw = h.apply(&self.vectors);
        let e_cols = column_dots(&self.vectors, &hw);
        let h2_cols = column_dots(&hw, &hw);
        let energy: f64 = e_cols.iter().zip(&self.weights).map(|(d, p)| p * d.re).sum();
        let second: f64 = h2_cols.iter().zip(&self.weights).map(|(d, p)| p * d.re).sum();
        let purity: f64 = self.weights.iter().map(|p| p * p).sum();
        // Tr(H^2 rho^2) = sum_k p_k^2 |H w_k|^2 for orthonormal W, and
        // Tr(H rho H rho) = sum_kl p_k p_l |(W^dagger H W)_kl|^2.
        let a = linalg::adjoint_mul(&self.vectors, &hw);
        let mut hrhr = 0.0;
        for l in 0..a.ncols() {
            for k in 0..a.nrows() {
                hrhr += self.weights[k] * self.weights[l] * a[(k, l)].norm_sqr();
            }
        }
        let h2r2: f64 = h2_cols
            .iter()
            .zip(&self.weights)
            .map(|(d, p)| p * p * d.re)
            .sum();
        StateMoments {
            energy,
            variance: second - energy * energy,
            cod: (2.0 * (h2r2 - hrhr) / purity).max(0.0),
            purity,
        }
    }

    /// Reduced state on `sites` (0-based, contiguous).
    pub fn reduced_density(&self, sites: Range<usize>) -> Result<DenseState> {
        let w = self.scaled_vectors();
        partial_trace_columns(self.n, &w, sites)
    }
}

/// Energy-type moments of a state with respect to one Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMoments {
    pub energy: f64,
    pub variance: f64,
    pub cod: f64,
    pub purity: f64,
}

fn column_dots(a: &CMat, b: &CMat) -> Vec<C64> {
    (0..a.ncols())
        .map(|j| a.column(j).iter().zip(b.column(j).iter()).map(|(x, y)| x.conj() * y).sum())
        .collect()
}

/// Trotterized QATE on a purified state using Chebyshev propagators on the
/// sparse instantaneous Hamiltonian. Agrees with `qate_evolve` to machine
/// precision but never forms a dense propagator.
pub fn qate_evolve_purified(state: &PurifiedState, config: &QateConfig, cap: usize) -> Result<PurifiedState> {
    let (hi, hf) = endpoint_operators(config, cap)?;
    if hi.dim() != state.vectors.nrows() {
        return Err(config!("state dimension does not match N = {}", hi.n));
    }
    let (si, sf) = (hi.sparse(), hf.sparse());
    let (gammas, step) = config.gammas()?;
    let mut w = state.vectors.clone();
    for &g in &gammas {
        let h = SparseOp::combine(1.0 - g, &si, g, &sf);
        let prop = ChebyshevPropagator::new(&h, step);
        w = prop.apply(&h, &w);
    }
    Ok(PurifiedState {
        n: state.n,
        weights: state.weights.clone(),
        vectors: w,
    })
}

/// Final state, references and benchmarks of an exact-diagonalization QATE run.
#[derive(Debug, Clone)]
pub struct EdRun {
    pub state: PurifiedState,
    /// `rho_min`: initial weights sorted onto ascending final eigenstates.
    pub rho_min: PurifiedState,
    pub final_eigen: EigenDecomposition,
    pub record: BenchmarkRecord,
    /// `max |W^dagger W - I|` of the evolved purification.
    pub unitarity_defect: f64,
    /// Eigenvalues of the evolved state, descending.
    pub final_weights: Vec<f64>,
}

/// QATE of the Gibbs state of `H_init` with the purified propagator, plus
/// benchmarks against `H_final`. `E_min` is the global rearrangement over all
/// many-body levels.
pub fn run_qate_ed(config: &QateConfig, cap: usize) -> Result<EdRun> {
    let (hi, hf) = endpoint_operators(config, cap)?;
    let eig_i = hi.eigen();
    let final_eigen = hf.eigen();
    let init = PurifiedState::gibbs(&hi, &eig_i, config.beta);
    let state = qate_evolve_purified(&init, config, cap)?;
    let m = state.moments(&hf.sparse());
    let levels = &final_eigen.energies;
    let (pops, e_min) = spectral::rho_min_spectrum(&init.weights, levels)?;
    let entropy = spectral::entropy_of_weights(&init.weights);
    let thermal = spectral::ThermalSpectrum::Levels(levels);
    let e_g = thermal.energy(spectral::beta_for_entropy(thermal, entropy)?);
    let var_min = spectral::diagonal_variance(&pops, levels);
    let record = BenchmarkRecord {
        energy: m.energy,
        e_min,
        delta_e_qate: m.energy - e_min,
        delta_e_min: e_min - e_g,
        variance: m.variance,
        var_min,
        delta_var: m.variance - var_min,
        cod: m.cod,
        purity: m.purity,
        entropy,
    };
    let unitarity_defect = state.unitarity_defect();
    let final_weights = state.spectrum();
    let rho_min = PurifiedState {
        n: hf.n,
        weights: pops,
        vectors: final_eigen.vectors.clone(),
    };
    Ok(EdRun {
        state,
        rho_min,
        final_eigen,
        record,
        unitarity_defect,
        final_weights,
    })
}

/// `c = V^dagger rho V`.
pub fn coefficients_in_eigenbasis(rho: &DenseState, eig: &EigenDecomposition) -> CMat {
    let tmp = linalg::matmul(&rho.rho, &eig.vectors);
    linalg::hermitize(&linalg::adjoint_mul(&eig.vectors, &tmp))
}

/// Partial trace onto the contiguous 0-based `sites`; an empty range gives
/// the 1x1 matrix `[Tr rho]`.
pub fn reduced_density(rho: &DenseState, sites: Range<usize>) -> Result<DenseState> {
    check_sites(rho.n, &sites)?;
    if sites.start == 0 && sites.end == rho.n {
        return Ok(rho.clone());
    }
    let (a, b) = (sites.start, sites.end);
    let k = b - a;
    let dim = rho.dim();
    let mut out = CMat::zeros(1 << k, 1 << k);
    let low = (1usize << a) - 1;
    let rest_of = |i: usize| (i & low) | ((i >> b) << a);
    let kept_of = |i: usize| (i >> a) & ((1 << k) - 1);
    for c in 0..dim {
        for r in 0..dim {
            if rest_of(r) == rest_of(c) {
                out[(kept_of(r), kept_of(c))] += rho.rho[(r, c)];
            }
        }
    }
    Ok(DenseState { n: k, rho: out })
}

fn check_sites(n: usize, sites: &Range<usize>) -> Result<()> {
    if sites.start > sites.end || sites.end > n {
        return Err(domain!("site range {:?} outside 0..{n}", sites));
    }
    Ok(())
}

/// `Tr_B (W W^dagger)` without forming the full density matrix.
fn partial_trace_columns(n: usize, w: &CMat, sites: Range<usize>) -> Result<DenseState> {
    check_sites(n, &sites)?;
    let (a, b) = (sites.start, sites.end);
    let k = b - a;
    let kd = 1usize << k;
    let rd = 1usize << (n - k);
    let low = (1usize << a) - 1;
    // Reshape every column into a kd x rd matrix M and accumulate M M^dagger.
    let mut out = CMat::zeros(kd, kd);
    let mut m = CMat::zeros(kd, rd);
    for col in w.column_iter() {
        for (i, &z) in col.iter().enumerate() {
            let kept = (i >> a) & (kd - 1);
            let rest = (i & low) | ((i >> b) << a);
            m[(kept, rest)] = z;
        }
        out += &m * m.adjoint();
    }
    Ok(DenseState { n: k, rho: out })
}

/// Sum of singular values of `a - b`.
pub fn trace_norm_distance(a: &DenseState, b: &DenseState) -> f64 {
    let d = &a.rho - &b.rho;
    linalg::eigvalsh(&linalg::hermitize(&d)).iter().map(|x| x.abs()).sum()
}
