//! Built-in models used by tests, benchmarks and the command line.

use nalgebra::Matrix2;

use crate::chain::{EdgeStep, FiniteMRW, ModelSpec, StepAtom};
use crate::lattice::LatticeSpec;
use crate::montecarlo::{AffineRecursion, ContractiveIfs};

fn unit_lattice() -> LatticeSpec {
    LatticeSpec::h3(Matrix2::identity()).expect("identity basis")
}

fn single_state(atoms: Vec<StepAtom>) -> FiniteMRW {
    ModelSpec {
        lattice: unit_lattice(),
        kernel: vec![vec![1.0]],
        steps: vec![EdgeStep { from: 0, to: 0, atoms }],
    }
    .build()
    .expect("fixture must validate")
}

/// Lazy walk on `Z^2`: hold with probability 1/3, step to one of the four
/// neighbours with probability 1/6 each. Aperiodic, non-arithmetic.
pub fn lazy2d() -> FiniteMRW {
    single_state(vec![
        StepAtom { v: [0.0, 0.0], p: 1.0 / 3.0 },
        StepAtom { v: [1.0, 0.0], p: 1.0 / 6.0 },
        StepAtom { v: [-1.0, 0.0], p: 1.0 / 6.0 },
        StepAtom { v: [0.0, 1.0], p: 1.0 / 6.0 },
        StepAtom { v: [0.0, -1.0], p: 1.0 / 6.0 },
    ])
}

/// Simple random walk on `Z^2`: the four neighbours with probability 1/4.
/// Arithmetic: the walk alternates between the even and odd sublattices.
pub fn srw2d() -> FiniteMRW {
    single_state(vec![
        StepAtom { v: [1.0, 0.0], p: 0.25 },
        StepAtom { v: [-1.0, 0.0], p: 0.25 },
        StepAtom { v: [0.0, 1.0], p: 0.25 },
        StepAtom { v: [0.0, -1.0], p: 0.25 },
    ])
}

/// Diagonal walk on `Z^2`: steps `(1,1)` and `(-1,-1)` with probability 1/2.
/// Lives on the sublattice `x_1 = x_2`, so it is arithmetic in `Z^2`.
pub fn diag2d() -> FiniteMRW {
    single_state(vec![
        StepAtom { v: [1.0, 1.0], p: 0.5 },
        StepAtom { v: [-1.0, -1.0], p: 0.5 },
    ])
}

/// Two-state modulated walk: kernel `[[0.7, 0.3], [0.4, 0.6]]`; from state 0
/// the walk holds with probability 1/2 or steps `+-e1` with probability 1/4
/// each, from state 1 the same along `e2`.
pub fn ts1() -> FiniteMRW {
    let hold_x = vec![
        StepAtom { v: [0.0, 0.0], p: 0.5 },
        StepAtom { v: [1.0, 0.0], p: 0.25 },
        StepAtom { v: [-1.0, 0.0], p: 0.25 },
    ];
    let hold_y = vec![
        StepAtom { v: [0.0, 0.0], p: 0.5 },
        StepAtom { v: [0.0, 1.0], p: 0.25 },
        StepAtom { v: [0.0, -1.0], p: 0.25 },
    ];
    ModelSpec {
        lattice: unit_lattice(),
        kernel: vec![vec![0.7, 0.3], vec![0.4, 0.6]],
        steps: vec![
            EdgeStep { from: 0, to: 0, atoms: hold_x.clone() },
            EdgeStep { from: 0, to: 1, atoms: hold_x },
            EdgeStep { from: 1, to: 0, atoms: hold_y.clone() },
            EdgeStep { from: 1, to: 1, atoms: hold_y },
        ],
    }
    .build()
    .expect("fixture must validate")
}

/// Two-state walk whose per-state mean steps cancel only on average: the
/// sticky kernel makes the `x` increments persistent, so the covariance picks
/// up a genuine correction from the fundamental matrix (`Gamma_11 = 4`).
pub fn seesaw2() -> FiniteMRW {
    let from_0 = vec![
        StepAtom { v: [1.0, 1.0], p: 0.5 },
        StepAtom { v: [1.0, -1.0], p: 0.5 },
    ];
    let from_1 = vec![
        StepAtom { v: [-1.0, 1.0], p: 0.5 },
        StepAtom { v: [-1.0, -1.0], p: 0.5 },
    ];
    ModelSpec {
        lattice: unit_lattice(),
        kernel: vec![vec![0.8, 0.2], vec![0.2, 0.8]],
        steps: vec![
            EdgeStep { from: 0, to: 0, atoms: from_0.clone() },
            EdgeStep { from: 0, to: 1, atoms: from_0 },
            EdgeStep { from: 1, to: 0, atoms: from_1.clone() },
            EdgeStep { from: 1, to: 1, atoms: from_1 },
        ],
    }
    .build()
    .expect("fixture must validate")
}

/// Critical affine recursion: `X_n = A_n X_{n-1} + B_n` with
/// `A = exp(sigma Z - sigma^2) R(theta)`, `theta` uniform, `B` standard
/// gaussian. `E|A|^2 = 1` exactly, which forces the `sqrt(n log n)`
/// normalization of the partial sums of `X_k`. The volatility is set where
/// the slowly varying factor is still clearly visible between horizons 1e4
/// and 4e4, the range the stabilization diagnostics probe.
pub fn af1() -> AffineRecursion {
    AffineRecursion {
        scale: 1.0,
        sigma: 0.15,
        b_std: 1.0,
        m0: Some([0.0, 0.0]),
    }
}

/// Contractive iterated map `X_n = X_{n-1}/2 + theta_n` observed through a
/// bounded Lipschitz map; satisfies the standard CLT.
pub fn ifs1() -> ContractiveIfs {
    ContractiveIfs {
        contraction: 0.5,
        noise_std: 1.0,
    }
}

/// Finite fixtures by name, as accepted by the command line.
pub fn finite_by_name(name: &str) -> Option<FiniteMRW> {
    match name.to_ascii_lowercase().as_str() {
        "lazy2d" => Some(lazy2d()),
        "srw2d" => Some(srw2d()),
        "diag2d" => Some(diag2d()),
        "ts1" => Some(ts1()),
        "seesaw2" => Some(seesaw2()),
        _ => None,
    }
}
