//! Finite-state Markov random walks: a driving chain on `N` states plus a
//! finitely supported step distribution on each positive edge, with all step
//! vectors constrained to the model's subgroup of the plane.

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::linalg::ComplexEigen;
use num_complex::Complex64;

const ROW_SUM_TOL: f64 = 1e-12;
const DRIFT_TOL: f64 = 1e-8;

/// One atom of a step distribution: jump `v` with probability `p`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepAtom {
    pub v: [f64; 2],
    pub p: f64,
}

/// Step law attached to the edge `from -> to` of the driving chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeStep {
    pub from: usize,
    pub to: usize,
    pub atoms: Vec<StepAtom>,
}

/// Wire format of a model: lattice, kernel and sparse per-edge step laws.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub lattice: LatticeSpec,
    pub kernel: Vec<Vec<f64>>,
    pub steps: Vec<EdgeStep>,
}

impl ModelSpec {
    /// Build and validate; rejects non-centered models.
    pub fn build(self) -> Result<FiniteMRW> {
        FiniteMRW::from_spec(self, true)
    }

    /// Build with structural validation only. The centering check is skipped
    /// so that diagnostic pipelines can load a defective model and report the
    /// measured drift instead of refusing to construct it.
    pub fn build_lenient(self) -> Result<FiniteMRW> {
        FiniteMRW::from_spec(self, false)
    }
}

/// Stationary probability vector of the driving chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StationaryLaw {
    pub pi: Vec<f64>,
}

impl StationaryLaw {
    /// Stationary mean of a weight vector.
    pub fn mean(&self, weights: &[f64]) -> f64 {
        self.pi.iter().zip(weights).map(|(p, w)| p * w).sum()
    }
}

/// Immutable finite Markov random walk model.
#[derive(Clone, Debug)]
pub struct FiniteMRW {
    lattice: LatticeSpec,
    kernel: DMatrix<f64>,
    /// Step atoms per (from, to); empty vector on zero edges.
    steps: Vec<Vec<StepAtom>>,
    n_states: usize,
}

impl FiniteMRW {
    fn from_spec(spec: ModelSpec, check_centering: bool) -> Result<Self> {
        let n = spec.kernel.len();
        if n == 0 {
            return Err(Error::InvalidModel("kernel has no states".into()));
        }
        for (i, row) in spec.kernel.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!(
                    "kernel row {i} has length {} instead of {n}",
                    row.len()
                )));
            }
            if row.iter().any(|&q| q < 0.0 || !q.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "kernel row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "kernel row {i} sums to {sum}, expected 1"
                )));
            }
        }
        let kernel = DMatrix::from_fn(n, n, |i, j| spec.kernel[i][j]);

        let mut steps = vec![Vec::new(); n * n];
        for edge in &spec.steps {
            if edge.from >= n || edge.to >= n {
                return Err(Error::InvalidModel(format!(
                    "step edge ({}, {}) out of range for {n} states",
                    edge.from, edge.to
                )));
            }
            let slot = &mut steps[edge.from * n + edge.to];
            if !slot.is_empty() {
                return Err(Error::InvalidModel(format!(
                    "duplicate step law on edge ({}, {})",
                    edge.from, edge.to
                )));
            }
            let mut total = 0.0;
            for atom in &edge.atoms {
                if atom.p < 0.0 || !atom.p.is_finite() {
                    return Err(Error::InvalidModel("step atom has invalid probability".into()));
                }
                let v = Vector2::new(atom.v[0], atom.v[1]);
                if !spec.lattice.contains(&v) {
                    return Err(Error::InvalidModel(format!(
                        "step vector ({}, {}) on edge ({}, {}) is off the lattice",
                        atom.v[0], atom.v[1], edge.from, edge.to
                    )));
                }
                total += atom.p;
            }
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "step law on edge ({}, {}) sums to {total}, expected 1",
                    edge.from, edge.to
                )));
            }
            *slot = edge.atoms.clone();
        }
        for x in 0..n {
            for y in 0..n {
                if kernel[(x, y)] > 0.0 && steps[x * n + y].is_empty() {
                    return Err(Error::InvalidModel(format!(
                        "edge ({x}, {y}) has positive kernel weight but no step law"
                    )));
                }
            }
        }

        let model = Self {
            lattice: spec.lattice,
            kernel,
            steps,
            n_states: n,
        };

        if check_centering {
            // Only checkable when the stationary law is unambiguous.
            if let Ok(pi) = model.stationary() {
                let d = model.drift(&pi);
                if d.norm() > DRIFT_TOL {
                    return Err(Error::NotCentered(d.x, d.y));
                }
            }
        }
        Ok(model)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn step_atoms(&self, from: usize, to: usize) -> &[StepAtom] {
        &self.steps[from * self.n_states + to]
    }

    /// Serializable view of the model.
    pub fn to_spec(&self) -> ModelSpec {
        let n = self.n_states;
        let kernel = (0..n)
            .map(|i| (0..n).map(|j| self.kernel[(i, j)]).collect())
            .collect();
        let mut steps = Vec::new();
        for x in 0..n {
            for y in 0..n {
                let atoms = &self.steps[x * n + y];
                if !atoms.is_empty() {
                    steps.push(EdgeStep {
                        from: x,
                        to: y,
                        atoms: atoms.clone(),
                    });
                }
            }
        }
        ModelSpec {
            lattice: self.lattice.clone(),
            kernel,
            steps,
        }
    }

    /// Stationary law of the driving chain: dense linear solve up to 64
    /// states, power iteration beyond. Errors when several closed
    /// communicating classes make the law ambiguous.
    pub fn stationary(&self) -> Result<StationaryLaw> {
        let closed = self.closed_classes();
        if closed.len() > 1 {
            return Err(Error::AmbiguousStationary(closed));
        }
        let n = self.n_states;
        if n == 1 {
            return Ok(StationaryLaw { pi: vec![1.0] });
        }
        let pi = if n <= 64 {
            // Solve pi (Q - I) = 0 with the normalization row sum(pi) = 1.
            let mut m = self.kernel.transpose() - DMatrix::identity(n, n);
            for j in 0..n {
                m[(n - 1, j)] = 1.0;
            }
            let mut rhs = nalgebra::DVector::zeros(n);
            rhs[n - 1] = 1.0;
            let sol = m
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numeric("stationary solve failed".into()))?;
            sol.iter().copied().collect::<Vec<f64>>()
        } else {
            let mut pi = vec![1.0 / n as f64; n];
            let mut next = vec![0.0; n];
            for _ in 0..100_000 {
                for y in 0..n {
                    next[y] = (0..n).map(|x| pi[x] * self.kernel[(x, y)]).sum();
                }
                let diff: f64 = pi
                    .iter()
                    .zip(&next)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                std::mem::swap(&mut pi, &mut next);
                if diff < 1e-14 {
                    break;
                }
            }
            pi
        };
        let mut pi = pi;
        // Clip tiny negative round-off and renormalize.
        for p in pi.iter_mut() {
            if *p < 0.0 && *p > -1e-12 {
                *p = 0.0;
            }
        }
        let total: f64 = pi.iter().sum();
        for p in pi.iter_mut() {
            *p /= total;
        }
        Ok(StationaryLaw { pi })
    }

    /// Mean step vector per source state, weighted over outgoing edges.
    pub fn state_mean_step(&self, x: usize) -> Vector2<f64> {
        let mut m = Vector2::zeros();
        for y in 0..self.n_states {
            let q = self.kernel[(x, y)];
            if q == 0.0 {
                continue;
            }
            for atom in self.step_atoms(x, y) {
                m += q * atom.p * Vector2::new(atom.v[0], atom.v[1]);
            }
        }
        m
    }

    /// Stationary drift `E[S_1]`.
    pub fn drift(&self, pi: &StationaryLaw) -> Vector2<f64> {
        let mut d = Vector2::zeros();
        for x in 0..self.n_states {
            d += pi.pi[x] * self.state_mean_step(x);
        }
        d
    }

    /// Second-largest eigenvalue modulus of the kernel; errors when the chain
    /// is reducible or periodic.
    pub fn ergodicity_gap(&self) -> Result<f64> {
        if !self.is_irreducible() {
            return Err(Error::NonErgodic("chain is reducible".into()));
        }
        let p = self.period();
        if p != 1 {
            return Err(Error::NonErgodic(format!("chain has period {p}")));
        }
        if self.n_states == 1 {
            return Ok(0.0);
        }
        let qc = DMatrix::from_fn(self.n_states, self.n_states, |i, j| {
            Complex64::new(self.kernel[(i, j)], 0.0)
        });
        let eig = ComplexEigen::new(&qc)?;
        let idx = eig.dominant_index();
        Ok(eig.subdominant_modulus(idx))
    }

    /// Finite irreducible chains are Harris recurrent.
    pub fn is_harris(&self) -> bool {
        self.is_irreducible()
    }

    pub fn is_irreducible(&self) -> bool {
        let reach = self.reachability();
        (0..self.n_states).all(|i| (0..self.n_states).all(|j| reach[i * self.n_states + j]))
    }

    /// Period of an irreducible chain: gcd of `level(u) + 1 - level(v)` over
    /// edges, from a breadth-first search. Returns 1 for single states with a
    /// self loop.
    pub fn period(&self) -> usize {
        let n = self.n_states;
        let mut level = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        level[0] = 0;
        queue.push_back(0);
        let mut g: i64 = 0;
        while let Some(x) = queue.pop_front() {
            for y in 0..n {
                if self.kernel[(x, y)] == 0.0 {
                    continue;
                }
                if level[y] == usize::MAX {
                    level[y] = level[x] + 1;
                    queue.push_back(y);
                } else {
                    let d = level[x] as i64 + 1 - level[y] as i64;
                    g = gcd(g.abs(), d.abs());
                }
            }
        }
        if g == 0 {
            0
        } else {
            g as usize
        }
    }

    /// Closed communicating classes of the driving chain.
    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        let n = self.n_states;
        let reach = self.reachability();
        let mut seen = vec![false; n];
        let mut classes = Vec::new();
        for i in 0..n {
            if seen[i] {
                continue;
            }
            let class: Vec<usize> = (0..n)
                .filter(|&j| reach[i * n + j] && reach[j * n + i])
                .collect();
            for &j in &class {
                seen[j] = true;
            }
            // Closed iff nothing outside the class is reachable from it.
            let closed = class
                .iter()
                .all(|&j| (0..n).all(|k| !reach[j * n + k] || (reach[k * n + j])));
            if closed {
                classes.push(class);
            }
        }
        classes
    }

    fn reachability(&self) -> Vec<bool> {
        let n = self.n_states;
        let mut reach = vec![false; n * n];
        for i in 0..n {
            // BFS from i.
            let mut queue = std::collections::VecDeque::new();
            reach[i * n + i] = true;
            queue.push_back(i);
            while let Some(x) = queue.pop_front() {
                for y in 0..n {
                    if self.kernel[(x, y)] > 0.0 && !reach[i * n + y] {
                        reach[i * n + y] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        reach
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Initial distribution of the driving chain.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialLaw {
    Dirac(usize),
    Stationary,
    Vector(Vec<f64>),
}

impl InitialLaw {
    pub fn weights(&self, model: &FiniteMRW) -> Result<Vec<f64>> {
        match self {
            InitialLaw::Dirac(x) => {
                if *x >= model.n_states() {
                    return Err(Error::Domain(format!(
                        "initial state {x} out of range for {} states",
                        model.n_states()
                    )));
                }
                let mut w = vec![0.0; model.n_states()];
                w[*x] = 1.0;
                Ok(w)
            }
            InitialLaw::Stationary => Ok(model.stationary()?.pi),
            InitialLaw::Vector(w) => {
                if w.len() != model.n_states() {
                    return Err(Error::Domain("initial law has wrong length".into()));
                }
                let sum: f64 = w.iter().sum();
                if (sum - 1.0).abs() > 1e-10 || w.iter().any(|&p| p < 0.0) {
                    return Err(Error::Domain("initial law is not a probability vector".into()));
                }
                Ok(w.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix2;

    fn two_state_spec() -> ModelSpec {
        ModelSpec {
            lattice: LatticeSpec::h3(Matrix2::identity()).unwrap(),
            kernel: vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            steps: vec![
                EdgeStep {
                    from: 0,
                    to: 0,
                    atoms: zero_mean_atoms_x(),
                },
                EdgeStep {
                    from: 0,
                    to: 1,
                    atoms: zero_mean_atoms_x(),
                },
                EdgeStep {
                    from: 1,
                    to: 0,
                    atoms: zero_mean_atoms_y(),
                },
                EdgeStep {
                    from: 1,
                    to: 1,
                    atoms: zero_mean_atoms_y(),
                },
            ],
        }
    }

    fn zero_mean_atoms_x() -> Vec<StepAtom> {
        vec![
            StepAtom { v: [1.0, 0.0], p: 0.5 },
            StepAtom { v: [-1.0, 0.0], p: 0.5 },
        ]
    }

    fn zero_mean_atoms_y() -> Vec<StepAtom> {
        vec![
            StepAtom { v: [0.0, 1.0], p: 0.5 },
            StepAtom { v: [0.0, -1.0], p: 0.5 },
        ]
    }

    #[test]
    fn stationary_two_state() {
        let model = two_state_spec().build().unwrap();
        let pi = model.stationary().unwrap();
        assert_abs_diff_eq!(pi.pi[0], 4.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi.pi[1], 3.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn stationary_trivial_cases() {
        let single = fixtures::lazy2d();
        let pi = single.stationary().unwrap();
        assert_eq!(pi.pi, vec![1.0]);

        let mut spec = two_state_spec();
        spec.kernel = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let model = spec.build().unwrap();
        let pi = model.stationary().unwrap();
        assert_abs_diff_eq!(pi.pi[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pi.pi[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_ambiguous_for_identity_kernel() {
        let mut spec = two_state_spec();
        spec.kernel = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        spec.steps = vec![
            EdgeStep { from: 0, to: 0, atoms: zero_mean_atoms_x() },
            EdgeStep { from: 1, to: 1, atoms: zero_mean_atoms_y() },
        ];
        let model = spec.build().unwrap();
        match model.stationary() {
            Err(Error::AmbiguousStationary(classes)) => assert_eq!(classes.len(), 2),
            other => panic!("expected ambiguity, got {other:?}"),
        }
    }

    #[test]
    fn drift_examples() {
        let lazy = fixtures::lazy2d();
        let pi = lazy.stationary().unwrap();
        assert!(lazy.drift(&pi).norm() < 1e-15);

        let ts1 = fixtures::ts1();
        let pi = ts1.stationary().unwrap();
        assert!(ts1.drift(&pi).norm() < 1e-15);
    }

    #[test]
    fn builder_rejects_drifted_model() {
        let spec = ModelSpec {
            lattice: LatticeSpec::h3(Matrix2::identity()).unwrap(),
            kernel: vec![vec![1.0]],
            steps: vec![EdgeStep {
                from: 0,
                to: 0,
                atoms: vec![StepAtom { v: [1.0, 0.0], p: 1.0 }],
            }],
        };
        match spec.clone().build() {
            Err(Error::NotCentered(dx, _)) => assert_abs_diff_eq!(dx, 1.0, epsilon = 1e-14),
            other => panic!("expected centering rejection, got {other:?}"),
        }
        // The lenient path constructs it and reports the drift.
        let model = spec.build_lenient().unwrap();
        let pi = model.stationary().unwrap();
        let d = model.drift(&pi);
        assert_abs_diff_eq!(d.x, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d.y, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn builder_rejects_off_lattice_step() {
        let spec = ModelSpec {
            lattice: LatticeSpec::h3(Matrix2::identity()).unwrap(),
            kernel: vec![vec![1.0]],
            steps: vec![EdgeStep {
                from: 0,
                to: 0,
                atoms: vec![
                    StepAtom { v: [0.5, 0.0], p: 0.5 },
                    StepAtom { v: [-0.5, 0.0], p: 0.5 },
                ],
            }],
        };
        assert!(matches!(spec.build(), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn ergodicity_gap_examples() {
        let model = two_state_spec().build().unwrap();
        assert_abs_diff_eq!(model.ergodicity_gap().unwrap(), 0.3, epsilon = 1e-12);

        let lazy = fixtures::lazy2d();
        assert_eq!(lazy.ergodicity_gap().unwrap(), 0.0);

        let mut spec = two_state_spec();
        spec.kernel = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let model = spec.build().unwrap();
        assert!(matches!(model.ergodicity_gap(), Err(Error::NonErgodic(_))));
    }

    #[test]
    fn harris_examples() {
        let model = two_state_spec().build().unwrap();
        assert!(model.is_harris());

        let mut spec = two_state_spec();
        spec.kernel = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        spec.steps = vec![
            EdgeStep { from: 0, to: 0, atoms: zero_mean_atoms_x() },
            EdgeStep { from: 1, to: 1, atoms: zero_mean_atoms_y() },
        ];
        assert!(!spec.build().unwrap().is_harris());

        let mut spec = two_state_spec();
        spec.kernel = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(spec.build().unwrap().is_harris());
    }

    #[test]
    fn relabeling_commutes_with_stationary() {
        // Swap the two states of TS1 and check the stationary law swaps.
        let ts1 = fixtures::ts1();
        let pi = ts1.stationary().unwrap();
        let spec = ts1.to_spec();
        let swapped = ModelSpec {
            lattice: spec.lattice.clone(),
            kernel: vec![
                vec![spec.kernel[1][1], spec.kernel[1][0]],
                vec![spec.kernel[0][1], spec.kernel[0][0]],
            ],
            steps: spec
                .steps
                .iter()
                .map(|e| EdgeStep {
                    from: 1 - e.from,
                    to: 1 - e.to,
                    atoms: e.atoms.clone(),
                })
                .collect(),
        };
        let pi_swapped = swapped.build().unwrap().stationary().unwrap();
        assert_abs_diff_eq!(pi_swapped.pi[0], pi.pi[1], epsilon = 1e-12);
        assert_abs_diff_eq!(pi_swapped.pi[1], pi.pi[0], epsilon = 1e-12);
    }

    #[test]
    fn model_json_round_trip() {
        let spec = two_state_spec();
        let s = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        let model = back.build().unwrap();
        assert_eq!(model.n_states(), 2);
    }
}
