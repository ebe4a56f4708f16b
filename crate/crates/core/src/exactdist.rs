//! Exact evolution of the joint law of (driving state, walk position) on a
//! truncated window of an H3 lattice. This is the brute-force oracle behind
//! every local-limit claim: probabilities are computed by direct convolution,
//! with all truncated mass accounted for in `lost_mass` so that the window
//! error is always visible.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::{FiniteMRW, InitialLaw};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::spectral::{covariance, NormalizerKind};

/// Compensated (Neumaier) summation; used wherever probabilities are compared
/// against 1 at the 1e-12 level.
pub(crate) fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Truncation policy of the window: a hard cap on lattice coordinates plus a
/// budget on the probability mass that may fall off a capped window.
#[derive(Clone, Copy, Debug)]
pub struct WindowPolicy {
    pub cap: [i64; 2],
    pub budget: f64,
}

impl WindowPolicy {
    pub fn new(cap: [i64; 2], budget: f64) -> Self {
        Self { cap, budget }
    }

    /// Cap wide enough for `n_max` steps: eight standard deviations of the
    /// walk in lattice coordinates plus one step-support radius, with a mass
    /// budget of 1e-12. Gaussian tails keep a capped run far below budget.
    pub fn for_horizon(model: &FiniteMRW, n_max: usize) -> Result<Self> {
        let gamma = covariance(model)?.gamma;
        let basis_inv = model
            .lattice()
            .basis()
            .ok_or(Error::UnsupportedLattice(model.lattice().variant_name()))?
            .try_inverse()
            .expect("H3 basis is invertible");
        let cov_k: Matrix2<f64> = basis_inv * gamma * basis_inv.transpose();
        let lambda_max = cov_k
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0_f64, |a, &b| a.max(b));
        let (rx, ry) = support_radius(model)?;
        let reach = (8.0 * (n_max as f64 * lambda_max).sqrt()).ceil() as i64;
        Ok(Self {
            cap: [reach + rx, reach + ry],
            budget: 1e-12,
        })
    }
}

fn support_radius(model: &FiniteMRW) -> Result<(i64, i64)> {
    let mut rx = 0i64;
    let mut ry = 0i64;
    let n = model.n_states();
    for x in 0..n {
        for y in 0..n {
            for atom in model.step_atoms(x, y) {
                let k = model
                    .lattice()
                    .integer_coords(&Vector2::new(atom.v[0], atom.v[1]))?;
                rx = rx.max(k[0].abs());
                ry = ry.max(k[1].abs());
            }
        }
    }
    Ok((rx, ry))
}

/// Weight over driving states used when reading probabilities off the
/// distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight {
    Ones,
    State(usize),
    Vector(Vec<f64>),
}

impl Weight {
    pub fn value(&self, state: usize) -> f64 {
        match self {
            Weight::Ones => 1.0,
            Weight::State(s) => {
                if state == *s {
                    1.0
                } else {
                    0.0
                }
            }
            Weight::Vector(v) => v[state],
        }
    }

    pub fn values(&self, n_states: usize) -> Vec<f64> {
        (0..n_states).map(|x| self.value(x)).collect()
    }
}

/// Exact joint law of `(X_n, S_n)` restricted to a rectangular window of
/// lattice coordinates; `lost_mass` upper-bounds the total-variation error of
/// every probability read from it.
#[derive(Clone, Debug)]
pub struct LatticeDistribution {
    n: usize,
    n_states: usize,
    lo: [i64; 2],
    hi: [i64; 2],
    mass: Vec<f64>,
    lost_mass: f64,
}

impl LatticeDistribution {
    /// Time-zero law `mu (x) delta_0`.
    pub fn initial(model: &FiniteMRW, init: &InitialLaw) -> Result<Self> {
        if model.lattice().basis().is_none() {
            return Err(Error::UnsupportedLattice(model.lattice().variant_name()));
        }
        let weights = init.weights(model)?;
        Ok(Self::from_weights_at_origin(model.n_states(), &weights))
    }

    fn from_weights_at_origin(n_states: usize, weights: &[f64]) -> Self {
        Self {
            n: 0,
            n_states,
            lo: [0, 0],
            hi: [0, 0],
            mass: weights.to_vec(),
            lost_mass: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn window(&self) -> ([i64; 2], [i64; 2]) {
        (self.lo, self.hi)
    }

    pub fn lost_mass(&self) -> f64 {
        self.lost_mass
    }

    #[inline]
    fn width(&self) -> usize {
        (self.hi[0] - self.lo[0] + 1) as usize
    }

    #[inline]
    fn height(&self) -> usize {
        (self.hi[1] - self.lo[1] + 1) as usize
    }

    #[inline]
    fn index(&self, state: usize, kx: i64, ky: i64) -> Option<usize> {
        if kx < self.lo[0] || kx > self.hi[0] || ky < self.lo[1] || ky > self.hi[1] {
            return None;
        }
        let w = self.width();
        Some(state * w * self.height() + (ky - self.lo[1]) as usize * w + (kx - self.lo[0]) as usize)
    }

    pub fn mass_at(&self, state: usize, k: [i64; 2]) -> f64 {
        self.index(state, k[0], k[1]).map_or(0.0, |i| self.mass[i])
    }

    /// Per-state masses at one lattice coordinate.
    pub fn state_masses(&self, k: [i64; 2]) -> Vec<f64> {
        (0..self.n_states).map(|x| self.mass_at(x, k)).collect()
    }

    /// Windowed mass plus lost mass; equals 1 up to float round-off.
    pub fn total_mass(&self) -> f64 {
        neumaier_sum(self.mass.iter().copied()) + self.lost_mass
    }

    /// Mean and raw second moment of `S_n` over the window.
    pub fn moments(&self, lattice: &LatticeSpec) -> (Vector2<f64>, Matrix2<f64>) {
        let basis = lattice.basis().expect("H3 lattice");
        let mut mean = Vector2::zeros();
        let mut second = Matrix2::zeros();
        let w = self.width();
        let h = self.height();
        for state in 0..self.n_states {
            for iy in 0..h {
                for ix in 0..w {
                    let m = self.mass[state * w * h + iy * w + ix];
                    if m == 0.0 {
                        continue;
                    }
                    let k = Vector2::new(
                        (self.lo[0] + ix as i64) as f64,
                        (self.lo[1] + iy as i64) as f64,
                    );
                    let s = basis * k;
                    mean += m * s;
                    second += m * s * s.transpose();
                }
            }
        }
        (mean, second)
    }

    /// Fourier transform of the windowed law against a per-state weight:
    /// `sum_{x,k} mass(x,k) exp(i <t, B k>) w(x)`. Coincides with the
    /// corresponding power of the Fourier matrix up to lost mass.
    pub fn fourier_transform(
        &self,
        lattice: &LatticeSpec,
        t: &Vector2<f64>,
        weights: &[Complex64],
    ) -> Complex64 {
        let basis = lattice.basis().expect("H3 lattice");
        let mut acc = Complex64::new(0.0, 0.0);
        let w = self.width();
        let h = self.height();
        for state in 0..self.n_states {
            let wx = weights[state];
            for iy in 0..h {
                for ix in 0..w {
                    let m = self.mass[state * w * h + iy * w + ix];
                    if m == 0.0 {
                        continue;
                    }
                    let k = Vector2::new(
                        (self.lo[0] + ix as i64) as f64,
                        (self.lo[1] + iy as i64) as f64,
                    );
                    let s = basis * k;
                    acc += wx * Complex64::from_polar(m, t.dot(&s));
                }
            }
        }
        acc
    }

    /// Serializable snapshot with window bounds and per-state mass arrays.
    pub fn snapshot(&self) -> Snapshot {
        let w = self.width();
        let h = self.height();
        Snapshot {
            n: self.n,
            window_lo: self.lo,
            window_hi: self.hi,
            lost_mass: self.lost_mass,
            mass: (0..self.n_states)
                .map(|s| self.mass[s * w * h..(s + 1) * w * h].to_vec())
                .collect(),
        }
    }
}

/// JSON export of a distribution snapshot.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub n: usize,
    pub window_lo: [i64; 2],
    pub window_hi: [i64; 2],
    pub lost_mass: f64,
    pub mass: Vec<Vec<f64>>,
}

/// Scatter stencil of one source state: `(target state, dk, Q_xy * p)`.
type Stencil = Vec<Vec<(usize, [i64; 2], f64)>>;

fn build_stencil(model: &FiniteMRW) -> Result<Stencil> {
    let n = model.n_states();
    let mut stencil = vec![Vec::new(); n];
    for x in 0..n {
        for y in 0..n {
            let q = model.kernel()[(x, y)];
            if q == 0.0 {
                continue;
            }
            for atom in model.step_atoms(x, y) {
                let k = model
                    .lattice()
                    .integer_coords(&Vector2::new(atom.v[0], atom.v[1]))?;
                stencil[x].push((y, k, q * atom.p));
            }
        }
    }
    Ok(stencil)
}

/// Serial evolution engine holding the precomputed stencil.
pub struct Evolver<'m> {
    model: &'m FiniteMRW,
    stencil: Stencil,
    policy: WindowPolicy,
    dist: LatticeDistribution,
    min_dk: [i64; 2],
    max_dk: [i64; 2],
}

impl<'m> Evolver<'m> {
    pub fn new(model: &'m FiniteMRW, init: &InitialLaw, policy: WindowPolicy) -> Result<Self> {
        let dist = LatticeDistribution::initial(model, init)?;
        Self::with_distribution(model, dist, policy)
    }

    /// Start from an arbitrary (possibly sub-probability) mass vector at the
    /// origin; used to restart the transfer operator from a conditional law.
    pub fn from_state_weights(
        model: &'m FiniteMRW,
        weights: &[f64],
        policy: WindowPolicy,
    ) -> Result<Self> {
        if model.lattice().basis().is_none() {
            return Err(Error::UnsupportedLattice(model.lattice().variant_name()));
        }
        if weights.len() != model.n_states() {
            return Err(Error::Domain("weight vector length mismatch".into()));
        }
        let dist = LatticeDistribution::from_weights_at_origin(model.n_states(), weights);
        Self::with_distribution(model, dist, policy)
    }

    fn with_distribution(
        model: &'m FiniteMRW,
        dist: LatticeDistribution,
        policy: WindowPolicy,
    ) -> Result<Self> {
        let stencil = build_stencil(model)?;
        let mut min_dk = [0i64; 2];
        let mut max_dk = [0i64; 2];
        for per_state in &stencil {
            for &(_, dk, _) in per_state {
                for d in 0..2 {
                    min_dk[d] = min_dk[d].min(dk[d]);
                    max_dk[d] = max_dk[d].max(dk[d]);
                }
            }
        }
        Ok(Self {
            model,
            stencil,
            policy,
            dist,
            min_dk,
            max_dk,
        })
    }

    pub fn dist(&self) -> &LatticeDistribution {
        &self.dist
    }

    pub fn model(&self) -> &FiniteMRW {
        self.model
    }

    /// One transfer-operator step; the window grows by the step support until
    /// the cap and everything scattered outside is added to `lost_mass`.
    pub fn step(&mut self) -> Result<()> {
        let d = &self.dist;
        let mut capped = false;
        let mut lo = [0i64; 2];
        let mut hi = [0i64; 2];
        for axis in 0..2 {
            lo[axis] = d.lo[axis] + self.min_dk[axis];
            hi[axis] = d.hi[axis] + self.max_dk[axis];
            if lo[axis] < -self.policy.cap[axis] {
                lo[axis] = -self.policy.cap[axis];
                capped = true;
            }
            if hi[axis] > self.policy.cap[axis] {
                hi[axis] = self.policy.cap[axis];
                capped = true;
            }
        }
        let new_w = (hi[0] - lo[0] + 1) as usize;
        let new_h = (hi[1] - lo[1] + 1) as usize;
        let mut next = vec![0.0f64; d.n_states * new_w * new_h];
        let mut lost = 0.0f64;

        let w = d.width();
        let h = d.height();
        for state in 0..d.n_states {
            let per_state = &self.stencil[state];
            for iy in 0..h {
                let ky = d.lo[1] + iy as i64;
                let row = state * w * h + iy * w;
                for ix in 0..w {
                    let m = d.mass[row + ix];
                    if m == 0.0 {
                        continue;
                    }
                    let kx = d.lo[0] + ix as i64;
                    for &(target, dk, weight) in per_state {
                        let tx = kx + dk[0];
                        let ty = ky + dk[1];
                        let contribution = m * weight;
                        if tx < lo[0] || tx > hi[0] || ty < lo[1] || ty > hi[1] {
                            lost += contribution;
                        } else {
                            let idx = target * new_w * new_h
                                + (ty - lo[1]) as usize * new_w
                                + (tx - lo[0]) as usize;
                            next[idx] += contribution;
                        }
                    }
                }
            }
        }

        let lost_mass = d.lost_mass + lost;
        if capped && lost_mass > self.policy.budget {
            return Err(Error::TruncationOverflow {
                lost: lost_mass,
                budget: self.policy.budget,
            });
        }
        self.dist = LatticeDistribution {
            n: d.n + 1,
            n_states: d.n_states,
            lo,
            hi,
            mass: next,
            lost_mass,
        };
        Ok(())
    }

    pub fn run_to(&mut self, n: usize) -> Result<()> {
        while self.dist.n < n {
            self.step()?;
        }
        Ok(())
    }
}

/// One transfer-operator step as a pure function.
pub fn evolve(
    model: &FiniteMRW,
    dist: &LatticeDistribution,
    policy: &WindowPolicy,
) -> Result<LatticeDistribution> {
    let mut evolver = Evolver::with_distribution(model, dist.clone(), *policy)?;
    evolver.step()?;
    Ok(evolver.dist)
}

/// Probability that the walk sits in `B(s, eps)`, weighted by `f` over the
/// driving state. For H3 and `eps < epsilon_S` the ball holds the single
/// lattice point `s`.
pub fn ball_mass(
    dist: &LatticeDistribution,
    lattice: &LatticeSpec,
    s: &Vector2<f64>,
    eps: f64,
    f: &Weight,
) -> Result<f64> {
    if !(eps > 0.0) || eps >= lattice.epsilon_s() {
        return Err(Error::BallTooLarge {
            eps,
            epsilon_s: lattice.epsilon_s(),
        });
    }
    let k = lattice.integer_coords(s)?;
    Ok((0..dist.n_states())
        .map(|x| f.value(x) * dist.mass_at(x, k))
        .sum())
}

/// One row of a local-limit series.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LltRow {
    pub n: usize,
    pub a_n: f64,
    pub p_n: f64,
    pub prediction: f64,
    pub ratio: f64,
}

/// Ratio series `p_n / (D_S pi(f) A_n^{-2} m_S(B))`, which tends to 1 under
/// the local limit theorem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LltSeries {
    pub s: [f64; 2],
    pub eps: f64,
    pub d_s: f64,
    pub pi_f: f64,
    pub ball_measure: f64,
    pub rows: Vec<LltRow>,
    /// Mean ratio over the last decade of n.
    pub tail_mean: f64,
}

impl LltSeries {
    pub fn final_ratio(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.ratio)
    }
}

pub fn llt_series(
    model: &FiniteMRW,
    init: &InitialLaw,
    s: &Vector2<f64>,
    eps: f64,
    f: &Weight,
    n_max: usize,
    policy: Option<WindowPolicy>,
) -> Result<LltSeries> {
    let pi = model.stationary()?;
    let pi_f = pi.mean(&f.values(model.n_states()));
    if pi_f <= 0.0 {
        return Err(Error::DegenerateWeight);
    }
    let gamma = covariance(model)?.gamma;
    let d_s = model.lattice().llt_constant(&gamma)?;
    let ball = model.lattice().haar_ball(s, eps)?;
    let k = model.lattice().integer_coords(s)?;
    let policy = match policy {
        Some(p) => p,
        None => WindowPolicy::for_horizon(model, n_max)?,
    };
    let norm = NormalizerKind::Standard;

    let mut evolver = Evolver::new(model, init, policy)?;
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        evolver.step()?;
        let p_n: f64 = (0..model.n_states())
            .map(|x| f.value(x) * evolver.dist().mass_at(x, k))
            .sum();
        let a_inv_sq = norm.a_inv_sq(n)?;
        let prediction = d_s * pi_f * a_inv_sq * ball;
        rows.push(LltRow {
            n,
            a_n: norm.a_n(n)?,
            p_n,
            prediction,
            ratio: p_n / prediction,
        });
    }
    let tail_start = (n_max / 10).max(1);
    let tail: Vec<f64> = rows
        .iter()
        .filter(|r| r.n > tail_start)
        .map(|r| r.ratio)
        .collect();
    let tail_mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    Ok(LltSeries {
        s: [s.x, s.y],
        eps,
        d_s,
        pi_f,
        ball_measure: ball,
        rows,
        tail_mean,
    })
}

/// Bivariate local-limit check at times `(n, n + m)`: the exact joint
/// probability of hitting `B(s, eps)` at both times against the product
/// prediction `D_S^2 a_n a_m m_S(B)^2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BivariateReport {
    pub s: [f64; 2],
    pub eps: f64,
    pub n: usize,
    pub m: usize,
    pub joint: f64,
    pub prediction: f64,
    pub ratio: f64,
}

pub fn bivariate_llt(
    model: &FiniteMRW,
    init: &InitialLaw,
    s: &Vector2<f64>,
    eps: f64,
    n: usize,
    m: usize,
    policy: Option<WindowPolicy>,
) -> Result<BivariateReport> {
    if m == 0 || n == 0 {
        return Err(Error::Domain("bivariate ratio needs n >= 1 and m >= 1".into()));
    }
    let gamma = covariance(model)?.gamma;
    let d_s = model.lattice().llt_constant(&gamma)?;
    let ball = model.lattice().haar_ball(s, eps)?;
    let k = model.lattice().integer_coords(s)?;
    let policy = match policy {
        Some(p) => p,
        None => WindowPolicy::for_horizon(model, n.max(m))?,
    };

    // Law at time n restricted to S_n = s, by state.
    let mut first = Evolver::new(model, init, policy)?;
    first.run_to(n)?;
    let conditional = first.dist().state_masses(k);
    if conditional.iter().all(|&q| q < 1e-300) {
        return Err(Error::Underpowered(format!(
            "mass at (n = {n}, s = ({}, {})) is below 1e-300",
            s.x, s.y
        )));
    }

    // Markov-additive restart: evolve the conditional row m more steps with a
    // fresh origin and collect the mass that returns to zero displacement.
    let mut second = Evolver::from_state_weights(model, &conditional, policy)?;
    second.run_to(m)?;
    let joint: f64 = second.dist().state_masses([0, 0]).iter().sum();

    let norm = NormalizerKind::Standard;
    let prediction = d_s * d_s * norm.a_inv_sq(n)? * norm.a_inv_sq(m)? * ball * ball;
    Ok(BivariateReport {
        s: [s.x, s.y],
        eps,
        n,
        m,
        joint,
        prediction,
        ratio: joint / prediction,
    })
}

/// Marginal and restart series feeding the Kochen-Stone machinery: `q[n-1][x]`
/// is the joint probability of `S_n = s, X_n = x`, and `u[m-1][x]` is the
/// probability that a walk started at `x` returns to zero displacement after
/// `m` steps. The bivariate probability factors exactly as
/// `p_{n,m} = <q_n, u_m>`.
#[derive(Clone, Debug)]
pub struct OracleSeries {
    pub q: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl OracleSeries {
    pub fn horizon(&self) -> usize {
        self.q.len()
    }

    /// Marginal hit probabilities `p_n`.
    pub fn p(&self) -> Vec<f64> {
        self.q.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn joint(&self, n: usize, m: usize) -> f64 {
        self.q[n - 1]
            .iter()
            .zip(&self.u[m - 1])
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub fn kochen_series(
    model: &FiniteMRW,
    init: &InitialLaw,
    s: &Vector2<f64>,
    eps: f64,
    horizon: usize,
    policy: Option<WindowPolicy>,
) -> Result<OracleSeries> {
    kochen_series_multi(model, init, &[*s], eps, horizon, policy)
        .map(|mut v| v.pop().expect("one target"))
}

/// Like [`kochen_series`] but shares the two expensive evolutions across
/// targets: one hit run records every target's per-state masses and one set
/// of return runs serves all of them.
pub fn kochen_series_multi(
    model: &FiniteMRW,
    init: &InitialLaw,
    targets: &[Vector2<f64>],
    eps: f64,
    horizon: usize,
    policy: Option<WindowPolicy>,
) -> Result<Vec<OracleSeries>> {
    if !(eps > 0.0) || eps >= model.lattice().epsilon_s() {
        return Err(Error::BallTooLarge {
            eps,
            epsilon_s: model.lattice().epsilon_s(),
        });
    }
    let ks = targets
        .iter()
        .map(|s| model.lattice().integer_coords(s))
        .collect::<Result<Vec<_>>>()?;
    let policy = match policy {
        Some(p) => p,
        None => WindowPolicy::for_horizon(model, horizon)?,
    };
    let n_states = model.n_states();

    let mut q_per_target = vec![Vec::with_capacity(horizon); targets.len()];
    let mut evolver = Evolver::new(model, init, policy)?;
    for _ in 0..horizon {
        evolver.step()?;
        for (q, k) in q_per_target.iter_mut().zip(&ks) {
            q.push(evolver.dist().state_masses(*k));
        }
    }

    // Return probabilities from each starting state, shared by all targets.
    let mut u = vec![vec![0.0; n_states]; horizon];
    for x0 in 0..n_states {
        let mut evolver = Evolver::new(model, &InitialLaw::Dirac(x0), policy)?;
        for m in 0..horizon {
            evolver.step()?;
            u[m][x0] = evolver.dist().state_masses([0, 0]).iter().sum();
        }
    }
    Ok(q_per_target
        .into_iter()
        .map(|q| OracleSeries { q, u: u.clone() })
        .collect())
}
