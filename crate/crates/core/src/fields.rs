//! Named and random test functions on the plane and on the graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::Hamiltonian;
use crate::Point;

/// A test function `u: R² → R` from the named library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { value: f64 },
    /// `x_index` (0 or 1).
    Coordinate { index: usize },
    /// `H(x)` itself.
    Energy,
    /// `sin(freq·H(x) + phase)`, a function of `H` only.
    EnergyWave { freq: f64, phase: f64 },
    /// `exp(−|x − centre|² / (2 radius²))`.
    Bump { centre: Point, radius: f64 },
    /// A random trigonometric field drawn from `seed`.
    Random { seed: u64 },
}

impl TestFunction {
    pub fn name(&self) -> String {
        match self {
            TestFunction::Constant { value } => format!("const({value})"),
            TestFunction::Coordinate { index } => format!("x{}", index + 1),
            TestFunction::Energy => "H".into(),
            TestFunction::EnergyWave { freq, phase } => format!("sin({freq}H+{phase})"),
            TestFunction::Bump { centre, radius } => format!("bump({},{};{radius})", centre[0], centre[1]),
            TestFunction::Random { seed } => format!("random({seed})"),
        }
    }

    /// Whether `u` is constant on level sets, so that averaging is exact.
    pub fn depends_on_energy_only(&self) -> bool {
        matches!(self, TestFunction::Constant { .. } | TestFunction::Energy | TestFunction::EnergyWave { .. })
    }

    pub fn field(&self, h: &Hamiltonian) -> Field {
        Field { kind: self.clone(), h: h.clone(), random: match self {
            TestFunction::Random { seed } => Some(SmoothField::random(*seed)),
            _ => None,
        } }
    }
}

/// An evaluable test function.
#[derive(Debug, Clone)]
pub struct Field {
    kind: TestFunction,
    h: Hamiltonian,
    random: Option<SmoothField>,
}

impl Field {
    pub fn eval(&self, x: Point) -> f64 {
        match &self.kind {
            TestFunction::Constant { value } => *value,
            TestFunction::Coordinate { index } => x[*index],
            TestFunction::Energy => self.h.value(x),
            TestFunction::EnergyWave { freq, phase } => (freq * self.h.value(x) + phase).sin(),
            TestFunction::Bump { centre, radius } => {
                let d2 = (x[0] - centre[0]).powi(2) + (x[1] - centre[1]).powi(2);
                (-d2 / (2.0 * radius * radius)).exp()
            }
            TestFunction::Random { .. } => self.random.as_ref().expect("random field is built").eval(x),
        }
    }
}

/// `u(x) = Σ a_m cos(⟨ω_m, x⟩ + φ_m)` with bounded random coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothField {
    pub terms: Vec<([f64; 2], f64, f64)>,
    pub offset: f64,
}

impl SmoothField {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = (0..4)
            .map(|_| {
                let w = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
                (w, rng.random_range(-1.0..1.0), rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Self { terms, offset: rng.random_range(-0.5..0.5) }
    }

    pub fn eval(&self, x: Point) -> f64 {
        self.offset + self.terms.iter().map(|(w, a, p)| a * (w[0] * x[0] + w[1] * x[1] + p).cos()).sum::<f64>()
    }
}

/// A smooth random function of `z`, one independent draw per edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomGraphFn {
    pub per_edge: Vec<Vec<(f64, f64, f64)>>,
}

impl RandomGraphFn {
    pub fn new(seed: u64, edges: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_edge = (0..edges)
            .map(|_| {
                (0..3)
                    .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.2..3.0), rng.random_range(0.0..std::f64::consts::TAU)))
                    .collect()
            })
            .collect();
        Self { per_edge }
    }

    pub fn eval(&self, z: f64, k: usize) -> f64 {
        self.per_edge[k].iter().map(|(a, w, p)| a * (w * z + p).cos()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianSpec;

    #[test]
    fn named_functions() {
        let h = Hamiltonian::new(HamiltonianSpec::Radial, 2.0).unwrap();
        assert_eq!(TestFunction::Energy.field(&h).eval([1.0, 1.0]), 1.0);
        assert_eq!(TestFunction::Coordinate { index: 1 }.field(&h).eval([1.0, 3.0]), 3.0);
        let b = TestFunction::Bump { centre: [1.0, 0.0], radius: 0.5 }.field(&h);
        assert_eq!(b.eval([1.0, 0.0]), 1.0);
        let r1 = TestFunction::Random { seed: 3 }.field(&h);
        let r2 = TestFunction::Random { seed: 3 }.field(&h);
        assert_eq!(r1.eval([0.3, 0.2]), r2.eval([0.3, 0.2]));
    }

    #[test]
    fn test_functions_serialize_by_kind() {
        let t: TestFunction = serde_json::from_str(r#"{"kind":"bump","centre":[0.5,0.0],"radius":0.3}"#).unwrap();
        assert_eq!(t, TestFunction::Bump { centre: [0.5, 0.0], radius: 0.3 });
    }
}
