use diffgeo::cloud::gen_torus;
use diffgeo::engine::Engine;
use diffgeo::frames::TruncationConfig;
use diffgeo::hodge::{assemble, solve};
use diffgeo::kernel::{build_markov, spectral_basis, KernelConfig};

#[test]
fn torus_h1_sweep() {
    for (bigr, smallr) in [(2.0f64, 0.5f64), (1.5, 1.0)] {
        let pc = gen_torus(3000, bigr, smallr, 0.0, 13).unwrap();
        let op = build_markov(&pc, &KernelConfig::new(35)).unwrap();
        let basis = spectral_basis(&op, 35).unwrap();
        println!("R {bigr} r {smallr} fn-eigs {:?}",
            basis.eigenvalues.as_slice().unwrap()[..8].iter()
                .map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>());
        let mut e = Engine::new(basis, TruncationConfig::new(35, 10, 4), Engine::default_tau()).unwrap();
        e.ensure_degree(2).unwrap();
        let h = assemble(&e, 1, None).unwrap();
        let spec = solve(&e, &h, 6).unwrap();
        println!("  hodge eigs {:?} gap {:.2}",
            spec.eigenvalues.as_slice().unwrap().iter()
                .map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            spec.eigenvalues[2] / spec.eigenvalues[1]);
    }
}
