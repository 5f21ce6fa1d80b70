use qate_core::exact_diag::{build_hamiltonian, qate_evolve, qate_evolve_purified, DenseState, PurifiedState, DEFAULT_HARD_CAP};
use qate_core::linalg;
use qate_core::protocol::{HamiltonianSpec, QateConfig};
use qate_core::spectral::{self, entropy_of_weights, rho_min_spectrum, ThermalSpectrum};
use qate_core::tfim_blocks::{block_benchmarks, run_qate_blocks};

fn tfim_config(n: usize, t: f64) -> QateConfig {
    QateConfig::new(HamiltonianSpec::tfim(n, 1.1), HamiltonianSpec::tfim(n, 1.5), 1.0, t)
}

#[test]
fn block_engine_matches_dense_ed() {
    for n in [4, 6, 8] {
        let cfg = tfim_config(n, 10.0);
        let ens = run_qate_blocks(&cfg).unwrap();
        let rec = block_benchmarks(&ens).unwrap();

        let hi = build_hamiltonian(&cfg.h_init).unwrap();
        let hf = build_hamiltonian(&cfg.h_final).unwrap();
        let eig_i = hi.eigen();
        let eig_f = hf.eigen();
        let pure = PurifiedState::gibbs(&hi, &eig_i, cfg.beta);
        let out = qate_evolve_purified(&pure, &cfg, DEFAULT_HARD_CAP).unwrap();
        let m = out.moments(&hf.sparse());

        let spec = ens.final_spectrum().unwrap();
        for (a, b) in spec.iter().zip(&eig_f.energies) {
            assert!((a - b).abs() < 1e-10, "N={n}: spectrum {a} vs {b}");
        }
        assert!((rec.energy - m.energy).abs() < 1e-8, "N={n}: energy {} vs {}", rec.energy, m.energy);
        assert!((rec.cod - m.cod).abs() < 1e-8, "N={n}: cod {} vs {}", rec.cod, m.cod);
        assert!((rec.purity - m.purity).abs() < 1e-8);
        assert!((rec.variance - m.variance).abs() < 1e-8, "N={n}: var {} vs {}", rec.variance, m.variance);
        assert!((rec.entropy - entropy_of_weights(&out.weights)).abs() < 1e-8);

        let (_, e_min) = rho_min_spectrum(&out.weights, &eig_f.energies).unwrap();
        let s = entropy_of_weights(&out.weights);
        let e_g = ThermalSpectrum::Levels(&eig_f.energies).energy(spectral::beta_for_entropy(ThermalSpectrum::Levels(&eig_f.energies), s).unwrap());
        println!("N={n}: E_min blocks {} global {}  E_G blocks {} dense {}", rec.e_min, e_min, rec.e_min - rec.delta_e_min, e_g);
    }
}

#[test]
fn dense_and_purified_ed_agree_with_blocks_at_n4() {
    let cfg = tfim_config(4, 3.0);
    let hi = build_hamiltonian(&cfg.h_init).unwrap();
    let rho0 = qate_core::exact_diag::gibbs(&hi, 1.0).unwrap();
    let dense: DenseState = qate_evolve(&rho0, &cfg).unwrap();
    let pure = qate_evolve_purified(&PurifiedState::from_dense(&rho0), &cfg, DEFAULT_HARD_CAP).unwrap();
    assert!((pure.to_dense().rho - &dense.rho).norm() < 1e-10);
    let hf = build_hamiltonian(&cfg.h_final).unwrap();
    let rec = block_benchmarks(&run_qate_blocks(&cfg).unwrap()).unwrap();
    assert!((rec.cod - spectral::cod(&dense, &hf).unwrap()).abs() < 1e-8);
    assert!((rec.energy - linalg::trace_product(&dense.rho, &hf.mat).re).abs() < 1e-8);
}

#[test]
fn gaussian_engine_matches_dense_ed() {
    use qate_core::gaussian::run_qate_gaussian;
    for (init, fin) in [
        (HamiltonianSpec::z_field_isospectral(6, 1.3), HamiltonianSpec::tfim(6, 1.3)),
        (HamiltonianSpec::tfim(6, 0.6), HamiltonianSpec::tfim(6, 1.4)),
    ] {
        let cfg = QateConfig::new(init, fin, 1.0, 10.0);
        let run = run_qate_gaussian(&cfg).unwrap();
        let rec = run.record;

        let hi = build_hamiltonian(&cfg.h_init).unwrap();
        let hf = build_hamiltonian(&cfg.h_final).unwrap();
        let eig_i = hi.eigen();
        let eig_f = hf.eigen();
        let out = qate_evolve_purified(&PurifiedState::gibbs(&hi, &eig_i, cfg.beta), &cfg, DEFAULT_HARD_CAP).unwrap();
        let m = out.moments(&hf.sparse());
        let (_, e_min) = rho_min_spectrum(&out.weights, &eig_f.energies).unwrap();

        assert!((rec.energy - m.energy).abs() < 1e-7, "energy {} vs {}", rec.energy, m.energy);
        assert!((rec.variance - m.variance).abs() < 1e-7, "var {} vs {}", rec.variance, m.variance);
        assert!((rec.cod - m.cod).abs() < 1e-7, "cod {} vs {}", rec.cod, m.cod);
        assert!((rec.purity - m.purity).abs() < 1e-7);
        assert!((rec.entropy - entropy_of_weights(&out.weights)).abs() < 1e-7);
        assert!((rec.e_min - e_min).abs() < 1e-7, "e_min {} vs {}", rec.e_min, e_min);
        assert!(run.spectrum_drift < 1e-9);
        assert!(run.purity_drift < 1e-9);
    }
}

#[test]
fn gaussian_correlations_match_dense() {
    use qate_core::gaussian::{bdg_from_spec, normalized_correlations, run_qate_gaussian};
    use qate_core::exact_diag::coefficients_in_eigenbasis;
    let cfg = QateConfig::new(HamiltonianSpec::tfim(6, 0.6), HamiltonianSpec::tfim(6, 1.4), 1.0, 4.0);
    let run = run_qate_gaussian(&cfg).unwrap();
    let hi = build_hamiltonian(&cfg.h_init).unwrap();
    let hf = build_hamiltonian(&cfg.h_final).unwrap();
    let eig_f = hf.eigen();
    let rho = qate_evolve(&qate_core::exact_diag::gibbs(&hi, 1.0).unwrap(), &cfg).unwrap();
    let c = coefficients_in_eigenbasis(&rho, &eig_f);
    let times = [0.0, 0.3, 1.7, 5.0];
    let dense = spectral::correlations_from_coefficients(&c, &eig_f.energies, &times);
    let gauss = normalized_correlations(&run.state, &bdg_from_spec(&cfg.h_final).unwrap(), &times).unwrap();
    let p = rho.purity();
    for (d, g) in dense.iter().zip(&gauss) {
        assert!((d / p - g).norm() < 1e-8, "{d} vs {g}");
    }
}
