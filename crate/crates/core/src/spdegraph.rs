//! Mild solutions of the stochastic reaction–diffusion equation on the
//! graph, `dū = (L̄ū + B(ū)) dt + G(ū) dW̄`, by exponential Euler:
//! `ū_{n+1} = S̄(dt)[ū_n + dt B(ū_n) + G(ū_n) ΔW̄_n]`.

use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientTables, Weight};
use crate::exec::Exec;
use crate::graphgen::{CrankNicolson, GeneratorMatrix};
use crate::noise::NoiseBasis;
use crate::rng::NormalStream;
use crate::stats::{Accumulator, Estimate};
use crate::{Error, Result};

/// Norms above this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Scalar reaction and noise coefficients `b(u)`, `g(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    Constant { value: f64 },
    /// `slope · u + intercept`.
    Affine { slope: f64, intercept: f64 },
    /// `offset + amplitude · sin(frequency · u)`.
    Sine { amplitude: f64, frequency: f64, offset: f64 },
    /// `offset + amplitude · tanh(u)`.
    Tanh { amplitude: f64, offset: f64 },
}

impl Nonlinearity {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Affine { slope, intercept } => slope * u + intercept,
            Self::Sine { amplitude, frequency, offset } => offset + amplitude * (frequency * u).sin(),
            Self::Tanh { amplitude, offset } => offset + amplitude * u.tanh(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Self::Constant { .. } => 0.0,
            Self::Affine { slope, .. } => slope.abs(),
            Self::Sine { amplitude, frequency, .. } => (amplitude * frequency).abs(),
            Self::Tanh { amplitude, .. } => amplitude.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSpdeConfig {
    pub dt: f64,
    pub t_end: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Keep every `snapshot_every`-th state; the final state is always kept.
    pub snapshot_every: usize,
    pub exec: Exec,
}

impl Default for GraphSpdeConfig {
    fn default() -> Self {
        Self { dt: 1e-2, t_end: 1.0, replicas: 100, seed: 1, snapshot_every: 10, exec: Exec::Parallel }
    }
}

impl GraphSpdeConfig {
    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round().max(1.0) as u64
    }
}

/// States of one replica at the snapshot times.
#[derive(Debug, Clone, Serialize)]
pub struct GraphPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// `E sup_t |ū(t)|^p_{H̄_γ}` for `p = 2, 4` with 95% intervals.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub replicas: usize,
    pub t_end: f64,
    pub moments: Vec<Moment>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Moment {
    pub p: u32,
    pub estimate: Estimate,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// `sup_t |ū − v̄|²_{H̄_γ} / |ū₀ − v̄₀|²_{H̄_γ}` over replicas.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityReport {
    pub ratio: Estimate,
    pub max_ratio: f64,
}

/// The graph equation on a finite-volume generator.
pub struct GraphSpde<'a> {
    pub q: &'a GeneratorMatrix,
    cn: CrankNicolson<'a>,
    /// `e_j^∧` on the cells.
    noise: Vec<Vec<f64>>,
    pub cfg: GraphSpdeConfig,
}

impl<'a> GraphSpde<'a> {
    pub fn new(q: &'a GeneratorMatrix, tables: &CoefficientTables, basis: &NoiseBasis, cfg: GraphSpdeConfig) -> Result<Self> {
        if basis.len() > crate::rng::MAX_NORMALS_PER_STEP {
            return Err(Error::Parameter(format!("{} noise modes exceed the per-step limit", basis.len())));
        }
        let cn = CrankNicolson::new(q, cfg.dt)?;
        Ok(Self { q, cn, noise: basis.cell_averages(q, tables), cfg })
    }

    pub fn modes(&self) -> usize {
        self.noise.len()
    }

    /// One exponential-Euler step with the given standard normals.
    pub fn step(&self, u: &[f64], b: &Nonlinearity, g: &Nonlinearity, xi: &[f64], t: f64) -> Result<Vec<f64>> {
        let dt = self.cfg.dt;
        let sdt = dt.sqrt();
        let v: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(i, &ui)| {
                let dw: f64 = self.noise.iter().zip(xi).map(|(e, x)| e[i] * x).sum::<f64>() * sdt;
                ui + dt * b.eval(ui) + g.eval(ui) * dw
            })
            .collect();
        let w = self.cn.step(&v)?;
        let norm = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Divergence { norm, t });
        }
        Ok(w)
    }

    /// Runs replica `replica`, calling `visit(step, state)` at the start and
    /// after every step.
    pub fn run(&self, u0: &[f64], b: &Nonlinearity, g: &Nonlinearity, replica: u64, mut visit: impl FnMut(u64, &[f64])) -> Result<()> {
        let mut stream = NormalStream::new(self.cfg.seed, replica);
        let mut xi = vec![0.0; self.modes()];
        let mut u = u0.to_vec();
        visit(0, &u);
        for n in 0..self.cfg.steps() {
            stream.fill(n, &mut xi);
            u = self.step(&u, b, g, &xi, (n + 1) as f64 * self.cfg.dt)?;
            visit(n + 1, &u);
        }
        Ok(())
    }

    pub fn solve_mild(&self, u0: &[f64], b: &Nonlinearity, g: &Nonlinearity, replica: u64) -> Result<GraphPath> {
        let steps = self.cfg.steps();
        let every = self.cfg.snapshot_every.max(1) as u64;
        let mut path = GraphPath { times: Vec::new(), states: Vec::new() };
        self.run(u0, b, g, replica, |n, u| {
            if n % every == 0 || n == steps {
                path.times.push(n as f64 * self.cfg.dt);
                path.states.push(u.to_vec());
            }
        })?;
        Ok(path)
    }

    fn sup_norms(&self, u0: &[f64], b: &Nonlinearity, g: &Nonlinearity, weight: &Weight) -> Result<Vec<f64>> {
        self.cfg.exec.try_map(self.cfg.replicas, |r| {
            let mut sup = 0.0f64;
            self.run(u0, b, g, r as u64, |_, u| sup = sup.max(self.q.weighted_norm_sq(weight, u)))?;
            Ok(sup)
        })
    }

    pub fn moment_report(&self, u0: &[f64], b: &Nonlinearity, g: &Nonlinearity, weight: &Weight) -> Result<MomentReport> {
        if self.cfg.replicas < 10 {
            return Err(Error::Parameter("moment report needs at least 10 replicas".into()));
        }
        let sups = self.sup_norms(u0, b, g, weight)?;
        let moments = [2u32, 4]
            .iter()
            .map(|&p| {
                let vals: Vec<f64> = sups.iter().map(|s| s.powf(p as f64 / 2.0)).collect();
                let estimate = Estimate::from_samples(&vals);
                Moment { p, estimate, ci_low: estimate.mean - 1.96 * estimate.std_error, ci_high: estimate.mean + 1.96 * estimate.std_error }
            })
            .collect();
        Ok(MomentReport { replicas: self.cfg.replicas, t_end: self.cfg.steps() as f64 * self.cfg.dt, moments })
    }

    /// Runs two initial conditions on the same noise.
    pub fn lipschitz_stability(&self, u0: &[f64], v0: &[f64], b: &Nonlinearity, g: &Nonlinearity, weight: &Weight) -> Result<StabilityReport> {
        let diff0: Vec<f64> = u0.iter().zip(v0).map(|(a, c)| a - c).collect();
        let d0 = self.q.weighted_norm_sq(weight, &diff0);
        if !(d0 > 0.0) {
            return Err(Error::Parameter("initial conditions coincide".into()));
        }
        let ratios = self.cfg.exec.try_map(self.cfg.replicas, |r| {
            let mut vs = Vec::new();
            self.run(v0, b, g, r as u64, |_, v| vs.push(v.to_vec()))?;
            let mut sup = 0.0f64;
            self.run(u0, b, g, r as u64, |n, u| {
                let d: Vec<f64> = u.iter().zip(&vs[n as usize]).map(|(a, c)| a - c).collect();
                sup = sup.max(self.q.weighted_norm_sq(weight, &d));
            })?;
            Ok::<_, Error>(sup / d0)
        })?;
        Ok(StabilityReport { ratio: Estimate::from_samples(&ratios), max_ratio: ratios.iter().fold(0.0, |m: f64, &x| m.max(x)) })
    }

    /// `t,edge,z,value` rows for every snapshot.
    pub fn write_snapshots_csv(&self, path: &GraphPath, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "t,edge,z,value")?;
        for (t, u) in path.times.iter().zip(&path.states) {
            for (c, v) in u.iter().enumerate() {
                let p = self.q.point_of(c);
                writeln!(w, "{t},{},{},{v}", p.k, p.z)?;
            }
        }
        Ok(())
    }
}

/// Terminal values of `du = b(u) dt + σ g(u) dβ` by Euler–Maruyama, the
/// reference for spatially constant solutions driven by a constant noise
/// mode of weight `σ²`.
#[allow(clippy::too_many_arguments)]
pub fn scalar_reference(b: &Nonlinearity, g: &Nonlinearity, sigma: f64, u0: f64, t_end: f64, steps: usize, paths: usize, seed: u64, exec: Exec) -> Vec<f64> {
    let dt = t_end / steps as f64;
    let sdt = dt.sqrt();
    exec.map(paths, |p| {
        let mut stream = NormalStream::new(seed, p as u64);
        let mut buf = [0.0; 64];
        let mut u = u0;
        for n in 0..steps {
            if n % 64 == 0 {
                stream.fill((n / 64) as u64, &mut buf);
            }
            u += b.eval(u) * dt + sigma * g.eval(u) * sdt * buf[n % 64];
        }
        u
    })
}

/// Mean and standard error of `φ` over samples.
pub fn functional(samples: &[f64], phi: impl Fn(f64) -> f64) -> Estimate {
    let mut acc = Accumulator::default();
    for &s in samples {
        acc.push(phi(s));
    }
    acc.estimate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::TableOptions;
    use crate::hamiltonian::{Hamiltonian, HamiltonianSpec};
    use crate::noise::{Atom, SpectralMeasure};
    use crate::reeb::{build_reeb, Reeb};

    fn setup() -> (Reeb, CoefficientTables) {
        let h = Hamiltonian::new(HamiltonianSpec::two_well(), 3.0).unwrap();
        let cps = h.find_critical_points(128).unwrap().points;
        let r = build_reeb(&h, &cps, 2.0, 300).unwrap();
        let opts = TableOptions { n_core: 12, cross_checks: false, ..Default::default() };
        let t = CoefficientTables::build(&h, &r, &opts).unwrap();
        (r, t)
    }

    fn constant_noise(c: f64) -> SpectralMeasure {
        SpectralMeasure::new(vec![Atom { lambda: [0.0, 0.0], weight: c }]).unwrap()
    }

    #[test]
    fn constant_data_reduces_to_scalar_scheme() {
        let (r, t) = setup();
        let q = GeneratorMatrix::discretize(&r.graph, &t, 0.1).unwrap();
        let mu = constant_noise(0.25);
        let basis = NoiseBasis::build(&mu, &t, &r.graph);
        let cfg = GraphSpdeConfig { dt: 0.05, t_end: 0.5, replicas: 1, seed: 3, ..Default::default() };
        let s = GraphSpde::new(&q, &t, &basis, cfg).unwrap();
        let b = Nonlinearity::Affine { slope: -1.0, intercept: 0.5 };
        let g = Nonlinearity::Sine { amplitude: 0.3, frequency: 1.0, offset: 1.0 };
        let path = s.solve_mild(&vec![0.2; q.len()], &b, &g, 0).unwrap();
        let last = path.states.last().unwrap();
        let spread = last.iter().fold(0.0f64, |m, v| m.max((v - last[0]).abs()));
        assert!(spread < 1e-9, "spread {spread}");
        // Same scheme by hand.
        let mut stream = NormalStream::new(3, 0);
        let mut u = 0.2;
        for n in 0..10 {
            let xi = stream.normal(n, 0);
            u += 0.05 * b.eval(u) + g.eval(u) * 0.5 * 0.05f64.sqrt() * xi;
        }
        assert!((last[0] - u).abs() < 1e-9);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (r, t) = setup();
        let q = GeneratorMatrix::discretize(&r.graph, &t, 0.1).unwrap();
        let mut atoms = vec![Atom { lambda: [1.0, 0.5], weight: 0.2 }, Atom { lambda: [-1.0, -0.5], weight: 0.2 }];
        atoms.push(Atom { lambda: [0.0, 0.0], weight: 0.1 });
        let basis = NoiseBasis::build(&SpectralMeasure::new(atoms).unwrap(), &t, &r.graph);
        let cfg = GraphSpdeConfig { dt: 0.02, t_end: 0.2, replicas: 12, seed: 9, ..Default::default() };
        let s = GraphSpde::new(&q, &t, &basis, cfg).unwrap();
        let b = Nonlinearity::Tanh { amplitude: -1.0, offset: 0.0 };
        let g = Nonlinearity::Constant { value: 1.0 };
        let u0 = q.project_fn(&t, |z, _| (-z).exp());
        let a = s.solve_mild(&u0, &b, &g, 4).unwrap();
        let c = s.solve_mild(&u0, &b, &g, 4).unwrap();
        assert_eq!(a.states, c.states);

        let w = Weight::new(0.5, 2.0).unwrap();
        let m = s.moment_report(&u0, &b, &g, &w).unwrap();
        assert!(m.moments[0].estimate.mean > 0.0 && m.moments[1].estimate.mean > 0.0);
        let v0: Vec<f64> = u0.iter().map(|x| x + 0.1).collect();
        let st = s.lipschitz_stability(&u0, &v0, &b, &g, &w).unwrap();
        // Contraction of S̄ and the Lipschitz bounds give e^{2(L_b + L_g²…)t}; for
        // additive noise the difference is deterministic and ≤ e^{2 L_b t}.
        assert!(st.max_ratio <= (2.0 * 0.2f64).exp() * (1.0 + 1e-9) && st.ratio.std_error < 1e-9);
    }

    #[test]
    fn blow_up_is_reported() {
        let (r, t) = setup();
        let q = GeneratorMatrix::discretize(&r.graph, &t, 0.2).unwrap();
        let basis = NoiseBasis::build(&constant_noise(0.1), &t, &r.graph);
        let cfg = GraphSpdeConfig { dt: 0.1, t_end: 50.0, ..Default::default() };
        let s = GraphSpde::new(&q, &t, &basis, cfg).unwrap();
        let b = Nonlinearity::Affine { slope: 5.0, intercept: 0.0 };
        let g = Nonlinearity::Constant { value: 0.0 };
        assert!(matches!(s.solve_mild(&vec![1.0; q.len()], &b, &g, 0), Err(Error::Divergence { .. })));
    }

    #[test]
    fn scalar_reference_matches_ou_moments() {
        let b = Nonlinearity::Affine { slope: -1.0, intercept: 0.0 };
        let g = Nonlinearity::Constant { value: 1.0 };
        let s = scalar_reference(&b, &g, 0.5, 1.0, 1.0, 200, 20_000, 5, Exec::Parallel);
        let m = functional(&s, |u| u);
        let v = functional(&s, |u| u * u);
        let e = (-1.0f64).exp();
        assert!((m.mean - e).abs() < 4.0 * m.std_error + 5e-3);
        let want = e * e + 0.25 * 0.5 * (1.0 - e * e);
        assert!((v.mean - want).abs() < 4.0 * v.std_error + 5e-3);
    }
}
