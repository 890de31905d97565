//! The graph semigroup against closed forms.

use reebflow::coeffs::{CoefficientTables, TableOptions};
use reebflow::graphgen::GeneratorMatrix;
use reebflow::hamiltonian::{Hamiltonian, HamiltonianSpec};
use reebflow::reeb::{build_reeb, GraphPoint};

/// For `H = ½|x|²`, `2H(X_t)` is `|x + W_t|²`, a scaled non-central χ²:
/// `E e^{iθ|X_t|²} = exp(iθ|x|²/(1 − 2iθt)) / (1 − 2iθt)`.
fn radial_sin(z0: f64, t: f64, freq: f64, phase: f64) -> f64 {
    let theta = 0.5 * freq;
    let r2 = 2.0 * z0;
    // 1 / (1 − 2iθt) = (1 + 2iθt) / (1 + 4θ²t²)
    let d = 1.0 + 4.0 * theta * theta * t * t;
    let (ir, ii) = (1.0 / d, 2.0 * theta * t / d);
    // exponent iθr²·(ir + i·ii)
    let (er, ei) = (-theta * r2 * ii, theta * r2 * ir);
    let m = er.exp();
    let (cr, ci) = (m * ei.cos(), m * ei.sin());
    let (zr, zi) = (cr * ir - ci * ii, cr * ii + ci * ir);
    // Im(e^{i·phase} · z)
    phase.sin() * zr + phase.cos() * zi
}

#[test]
fn radial_semigroup_matches_noncentral_chi_square() {
    let h = Hamiltonian::new(HamiltonianSpec::Radial, 4.5).unwrap();
    let cps = h.find_critical_points(128).unwrap().points;
    let reeb = build_reeb(&h, &cps, 8.0, 300).unwrap();
    let tables = CoefficientTables::build(&h, &reeb, &TableOptions::default()).unwrap();
    let q = GeneratorMatrix::discretize(&reeb.graph, &tables, 0.02).unwrap().with_absorbing_cap();
    let f = q.project_fn(&tables, |z, _| (2.0 * z + 0.3).sin());
    for (z0, t) in [(0.25, 0.25), (0.5, 0.25), (0.5, 0.5)] {
        let v = q.apply_semigroup(&f, t, 0.005).unwrap();
        let got = q.eval(&v, GraphPoint { z: z0, k: 0 });
        let want = radial_sin(z0, t, 2.0, 0.3);
        assert!((got - want).abs() < 2e-3, "z0 {z0} t {t}: {got} vs {want}");
    }
}
