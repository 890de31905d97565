//! Spatially homogeneous Wiener noise with a finite atomic spectral
//! measure, its real basis and the graph-averaged noise.

use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientTables, GraphFunction};
use crate::graphgen::GeneratorMatrix;
use crate::reeb::{GraphPoint, ReebGraph};
use crate::{Error, Point, Result};

/// One atom `c·δ_λ` of the spectral measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub lambda: [f64; 2],
    pub weight: f64,
}

/// A finite atomic measure, closed under `λ ↦ −λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    atoms: Vec<Atom>,
}

fn mirror_of(atoms: &[Atom], a: &Atom) -> Option<usize> {
    atoms.iter().position(|b| b.lambda[0] == -a.lambda[0] && b.lambda[1] == -a.lambda[1])
}

impl SpectralMeasure {
    /// Accepts only symmetric atom lists with positive weights.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(Error::Parameter(format!("atom weight must be positive, got {}", a.weight)));
            }
            match mirror_of(&atoms, a) {
                Some(i) if atoms[i].weight == a.weight => {}
                Some(_) => {
                    return Err(Error::Asymmetric(format!("atoms ±({}, {}) have different weights", a.lambda[0], a.lambda[1])))
                }
                None => return Err(Error::Asymmetric(format!("atom ({}, {}) has no mirror", a.lambda[0], a.lambda[1]))),
            }
        }
        Ok(Self { atoms })
    }

    /// Adds missing mirror atoms and equalises mismatched pairs.
    pub fn symmetrized(atoms: Vec<Atom>) -> Result<Self> {
        let mut out: Vec<Atom> = Vec::new();
        for a in atoms {
            if let Some(i) = out.iter().position(|b| b.lambda == a.lambda) {
                out[i].weight += a.weight;
            } else {
                out.push(a);
            }
        }
        let mut i = 0;
        while i < out.len() {
            let a = out[i];
            match mirror_of(&out, &a) {
                Some(j) if out[j].weight != a.weight => {
                    log::info!("spectral measure: equalising weights of ±({}, {})", a.lambda[0], a.lambda[1]);
                    let w = 0.5 * (a.weight + out[j].weight);
                    out[i].weight = w;
                    out[j].weight = w;
                }
                Some(_) => {}
                None => {
                    log::info!("spectral measure: adding mirror atom of ({}, {})", a.lambda[0], a.lambda[1]);
                    out.push(Atom { lambda: [-a.lambda[0], -a.lambda[1]], weight: a.weight });
                }
            }
            i += 1;
        }
        Self::new(out)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `μ(R²)`.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `Λ(x) = Σ c_l cos⟨λ_l, x⟩`.
    pub fn covariance(&self, x: Point) -> f64 {
        self.atoms.iter().map(|a| a.weight * (a.lambda[0] * x[0] + a.lambda[1] * x[1]).cos()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Cos,
    Sin,
    Const,
}

/// One real basis field `amp · cos⟨λ, x⟩`, `amp · sin⟨λ, x⟩` or `amp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisField {
    pub shape: Shape,
    pub lambda: [f64; 2],
    pub amp: f64,
}

impl BasisField {
    pub fn eval(&self, x: Point) -> f64 {
        let phase = self.lambda[0] * x[0] + self.lambda[1] * x[1];
        match self.shape {
            Shape::Cos => self.amp * phase.cos(),
            Shape::Sin => self.amp * phase.sin(),
            Shape::Const => self.amp,
        }
    }
}

/// The real basis of the noise and its graph averages.
#[derive(Debug, Clone)]
pub struct NoiseBasis {
    pub fields: Vec<BasisField>,
    /// `e_j^∧` on the table grids.
    pub averages: Vec<GraphFunction>,
}

/// Real fields `e_j` with `Σ_j e_j(x) e_j(y) = Λ(x − y)`.
pub fn basis_fields(mu: &SpectralMeasure) -> Vec<BasisField> {
    let mut fields = Vec::new();
    let atoms = mu.atoms();
    for (i, a) in atoms.iter().enumerate() {
        if a.lambda == [0.0, 0.0] {
            fields.push(BasisField { shape: Shape::Const, lambda: a.lambda, amp: a.weight.sqrt() });
            continue;
        }
        // One representative per ± pair: the first in list order.
        let j = mirror_of(atoms, a).expect("measure is symmetric");
        if j < i {
            continue;
        }
        let amp = (2.0 * a.weight).sqrt();
        fields.push(BasisField { shape: Shape::Cos, lambda: a.lambda, amp });
        fields.push(BasisField { shape: Shape::Sin, lambda: a.lambda, amp });
    }
    fields
}

impl NoiseBasis {
    pub fn build(mu: &SpectralMeasure, tables: &CoefficientTables, graph: &ReebGraph) -> Self {
        let fields = basis_fields(mu);
        let averages = fields.iter().map(|f| GraphFunction::average_of(tables, graph, |x| f.eval(x))).collect();
        Self { fields, averages }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// `Σ_j e_j(x) e_j(y)`.
    pub fn kernel(&self, x: Point, y: Point) -> f64 {
        self.fields.iter().map(|f| f.eval(x) * f.eval(y)).sum()
    }

    /// `e_j^∧` projected onto generator cells, one vector per field.
    pub fn cell_averages(&self, q: &GeneratorMatrix, tables: &CoefficientTables) -> Vec<Vec<f64>> {
        self.averages.iter().map(|a| q.project_graph_fn(tables, a)).collect()
    }

    /// `ΔW̄ = Σ_j e_j^∧ √dt ξ_j` at a graph point.
    pub fn graph_increment_at(&self, tables: &CoefficientTables, p: GraphPoint, dt: f64, xi: &[f64]) -> f64 {
        dt.sqrt() * self.averages.iter().zip(xi).map(|(a, x)| a.eval(tables, p) * x).sum::<f64>()
    }

    /// `ΔW = Σ_j e_j(x) √dt ξ_j` at a plane point.
    pub fn field_increment_at(&self, x: Point, dt: f64, xi: &[f64]) -> f64 {
        dt.sqrt() * self.fields.iter().zip(xi).map(|(f, v)| f.eval(x) * v).sum::<f64>()
    }

    /// Exact graph covariance
    /// `t ∫ (e^{i⟨λ,·⟩})^∧(p) (e^{−i⟨λ,·⟩})^∧(q) dμ(λ)` from the cosine and
    /// sine averages, evaluated atom by atom.
    pub fn graph_covariance(tables: &CoefficientTables, mu: &SpectralMeasure, p: GraphPoint, q: GraphPoint, t: f64) -> f64 {
        let mut total = 0.0;
        for a in mu.atoms() {
            let cosf = BasisField { shape: Shape::Cos, lambda: a.lambda, amp: 1.0 };
            let sinf = BasisField { shape: Shape::Sin, lambda: a.lambda, amp: 1.0 };
            let avg = |f: &BasisField, pt: GraphPoint| {
                let e = tables.edge(pt.k);
                let vals = e.averages(|x| f.eval(x));
                crate::interp::linear(e.sample_zs(), &vals, pt.z)
            };
            let (c1, s1) = (avg(&cosf, p), avg(&sinf, p));
            let (c2, s2) = (avg(&cosf, q), avg(&sinf, q));
            // (C₁ + iS₁)(C₂ − iS₂); the imaginary part cancels over ±λ.
            total += a.weight * (c1 * c2 + s1 * s2);
        }
        t * total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(l: [f64; 2], c: f64) -> Vec<Atom> {
        vec![Atom { lambda: l, weight: c }, Atom { lambda: [-l[0], -l[1]], weight: c }]
    }

    #[test]
    fn covariance_values() {
        let mut atoms = pair([1.0, 0.5], 0.3);
        atoms.push(Atom { lambda: [0.0, 0.0], weight: 0.2 });
        let mu = SpectralMeasure::new(atoms).unwrap();
        assert!((mu.covariance([0.0, 0.0]) - 0.8).abs() < 1e-15);
        let x = [0.7, -0.2];
        let want = 0.6 * (0.7f64 - 0.1).cos() + 0.2;
        assert!((mu.covariance(x) - want).abs() < 1e-14);
        assert_eq!(mu.covariance(x), mu.covariance([-x[0], -x[1]]));
    }

    #[test]
    fn asymmetric_measure_is_rejected_and_symmetrized() {
        let atoms = vec![Atom { lambda: [1.0, 0.0], weight: 0.5 }];
        assert!(matches!(SpectralMeasure::new(atoms.clone()), Err(Error::Asymmetric(_))));
        let mu = SpectralMeasure::symmetrized(atoms).unwrap();
        assert_eq!(mu.atoms().len(), 2);
        assert_eq!(mu.total_mass(), 1.0);
    }

    proptest! {
        #[test]
        fn basis_reproduces_covariance(x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, y0 in -3.0f64..3.0, y1 in -3.0f64..3.0) {
            let mut atoms = pair([1.0, 0.5], 0.3);
            atoms.extend(pair([-0.4, 2.0], 0.1));
            atoms.push(Atom { lambda: [0.0, 0.0], weight: 0.2 });
            let mu = SpectralMeasure::new(atoms).unwrap();
            let fields = basis_fields(&mu);
            prop_assert_eq!(fields.len(), 5);
            let k: f64 = fields.iter().map(|f| f.eval([x0, x1]) * f.eval([y0, y1])).sum();
            prop_assert!((k - mu.covariance([x0 - y0, x1 - y1])).abs() <= 1e-12);
        }
    }

    fn bessel_j0(r: f64) -> f64 {
        // (1/π) ∫_0^π cos(r sin θ) dθ, trapezoid on a periodic integrand.
        let n = 400;
        (0..n).map(|i| (r * (std::f64::consts::PI * i as f64 / n as f64).sin()).cos()).sum::<f64>() / n as f64
    }

    fn radial_setup() -> (crate::reeb::Reeb, CoefficientTables) {
        use crate::coeffs::TableOptions;
        use crate::hamiltonian::{Hamiltonian, HamiltonianSpec};
        let h = Hamiltonian::new(HamiltonianSpec::Radial, 3.0).unwrap();
        let cps = h.find_critical_points(128).unwrap().points;
        let r = crate::reeb::build_reeb(&h, &cps, 2.0, 300).unwrap();
        let opts = TableOptions { n_core: 12, cross_checks: false, ..Default::default() };
        let t = CoefficientTables::build(&h, &r, &opts).unwrap();
        (r, t)
    }

    #[test]
    fn radial_averages_are_bessel() {
        let (r, t) = radial_setup();
        let c = 0.25;
        let lam = [1.2, -0.7];
        let mu = SpectralMeasure::new(pair(lam, c)).unwrap();
        let basis = NoiseBasis::build(&mu, &t, &r.graph);
        let norm = (lam[0] * lam[0] + lam[1] * lam[1]).sqrt();
        let e = t.edge(0);
        for (i, &z) in e.sample_zs().iter().enumerate() {
            let want = (2.0 * c).sqrt() * bessel_j0(norm * (2.0 * z).sqrt());
            let got = basis.averages[0].edges[0][i];
            assert!((got - want).abs() <= 5e-3 * (2.0 * c).sqrt(), "z={z} got={got} want={want}");
            // sin averages vanish by symmetry.
            assert!(basis.averages[1].edges[0][i].abs() < 1e-6);
        }
    }

    #[test]
    fn averaged_variance_is_dominated() {
        let (r, t) = radial_setup();
        let mut atoms = pair([1.0, 0.3], 0.3);
        atoms.extend(pair([0.2, -2.0], 0.1));
        atoms.push(Atom { lambda: [0.0, 0.0], weight: 0.05 });
        let mu = SpectralMeasure::new(atoms).unwrap();
        let basis = NoiseBasis::build(&mu, &t, &r.graph);
        for &z in t.edge(0).sample_zs() {
            let p = GraphPoint { z, k: 0 };
            let s: f64 = basis.averages.iter().map(|a| a.eval(&t, p).powi(2)).sum();
            assert!(s <= mu.total_mass() * (1.0 + 1e-9));
            let direct = NoiseBasis::graph_covariance(&t, &mu, p, p, 1.0);
            assert!((s - direct).abs() <= 1e-9 * mu.total_mass());
        }
    }
}
