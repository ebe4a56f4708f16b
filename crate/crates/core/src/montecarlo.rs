//! Trajectory simulation for models beyond exact reach, plus validation runs
//! for the finite fixtures. Every trajectory draws from its own
//! counter-indexed stream of a ChaCha generator, so batches are bit-identical
//! for a given seed no matter how work is distributed across threads.

use nalgebra::{Matrix2, Vector2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::FiniteMRW;
use crate::error::{Error, Result};
use crate::spectral::NormalizerKind;

/// Affine recursion `X_n = A_n X_{n-1} + B_n` driven by similarities:
/// `A = scale * exp(sigma Z - sigma^2) R(theta)` with `Z` standard normal and
/// `theta` uniform, `B` isotropic gaussian. With `scale = 1` the second
/// moment `E|A|^2` is exactly 1, the critical regime with the
/// `sqrt(n log n)` limit for partial sums of `X_k - m0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineRecursion {
    pub scale: f64,
    pub sigma: f64,
    pub b_std: f64,
    /// Stationary mean; estimated by a burn-in run when absent.
    pub m0: Option<[f64; 2]>,
}

/// Contractive iterated map `X_n = c X_{n-1} + theta_n` on the plane with
/// gaussian innovations, observed through the bounded Lipschitz map
/// `tanh` applied coordinatewise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractiveIfs {
    pub contraction: f64,
    pub noise_std: f64,
}

/// A model the simulator can drive.
#[derive(Clone, Debug)]
pub enum SimModel {
    Finite(FiniteMRW),
    Affine(AffineRecursion),
    Ifs(ContractiveIfs),
}

/// Starting point of a trajectory.
#[derive(Clone, Copy, Debug)]
pub enum SimStart {
    State(usize),
    Point([f64; 2]),
}

/// Moment and contraction audits of a model's sampler.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    pub passed: bool,
    pub notes: Vec<String>,
}

impl SimModel {
    /// Sample-based audit: `E|A|^2 = 1` style moment checks for the affine
    /// recursion, an empirical Lipschitz constant below one for iterated
    /// maps. Finite models were validated at construction.
    pub fn audit(&self, seed: u64, draws: usize) -> AuditReport {
        match self {
            SimModel::Finite(_) => AuditReport {
                passed: true,
                notes: vec!["finite model validated at construction".into()],
            },
            SimModel::Affine(aff) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u64::MAX);
                let mut sum_a2 = 0.0;
                let mut sum_a2_log = 0.0;
                let mut sum_b2 = 0.0;
                for _ in 0..draws {
                    let z: f64 = rng.sample(StandardNormal);
                    let a = aff.scale * (aff.sigma * z - aff.sigma * aff.sigma).exp();
                    let _theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    let bx: f64 = rng.sample::<f64, _>(StandardNormal) * aff.b_std;
                    let by: f64 = rng.sample::<f64, _>(StandardNormal) * aff.b_std;
                    sum_a2 += a * a;
                    if a > 0.0 {
                        sum_a2_log += a * a * a.ln();
                    }
                    sum_b2 += bx * bx + by * by;
                }
                let n = draws as f64;
                let mean_a2 = sum_a2 / n;
                let mean_a2_log = sum_a2_log / n;
                let mean_b2 = sum_b2 / n;
                let critical = aff.scale == 1.0;
                let tol = 0.02f64.max(6.0 / n.sqrt());
                let passed = !critical || (mean_a2 - 1.0).abs() < tol;
                AuditReport {
                    passed,
                    notes: vec![
                        format!("E|A|^2 = {mean_a2:.6} over {draws} draws"),
                        format!("E[|A|^2 log|A|] = {mean_a2_log:.6}"),
                        format!("E|B|^2 = {mean_b2:.6}"),
                    ],
                }
            }
            SimModel::Ifs(ifs) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u64::MAX);
                let mut max_ratio = 0.0f64;
                for _ in 0..draws.min(10_000) {
                    let x = Vector2::new(
                        rng.sample::<f64, _>(StandardNormal) * 3.0,
                        rng.sample::<f64, _>(StandardNormal) * 3.0,
                    );
                    let y = Vector2::new(
                        rng.sample::<f64, _>(StandardNormal) * 3.0,
                        rng.sample::<f64, _>(StandardNormal) * 3.0,
                    );
                    if (x - y).norm() < 1e-12 {
                        continue;
                    }
                    // The innovation cancels in the difference for this family,
                    // but sample it anyway to keep the audit honest about F.
                    let _theta: f64 = rng.sample(StandardNormal);
                    let fx = ifs.contraction * x;
                    let fy = ifs.contraction * y;
                    max_ratio = max_ratio.max((fx - fy).norm() / (x - y).norm());
                }
                AuditReport {
                    passed: max_ratio < 1.0,
                    notes: vec![format!("empirical Lipschitz constant {max_ratio:.6}")],
                }
            }
        }
    }

    /// Stationary mean used to center affine sums: the configured value, a
    /// burn-in estimate, or zero for models that are centered by symmetry.
    pub fn resolve_m0(&self, seed: u64) -> [f64; 2] {
        match self {
            SimModel::Affine(aff) => {
                if let Some(m0) = aff.m0 {
                    return m0;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u64::MAX - 1);
                let mut x = Vector2::zeros();
                let burn = 10_000usize;
                let keep = 200_000usize;
                let mut acc = Vector2::zeros();
                for i in 0..burn + keep {
                    x = affine_step(aff, &mut rng, x);
                    if i >= burn {
                        acc += x;
                    }
                }
                [acc.x / keep as f64, acc.y / keep as f64]
            }
            _ => [0.0, 0.0],
        }
    }
}

fn affine_step(aff: &AffineRecursion, rng: &mut ChaCha8Rng, x: Vector2<f64>) -> Vector2<f64> {
    let z: f64 = rng.sample(StandardNormal);
    let a = aff.scale * (aff.sigma * z - aff.sigma * aff.sigma).exp();
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (sin, cos) = theta.sin_cos();
    let rotated = Vector2::new(cos * x.x - sin * x.y, sin * x.x + cos * x.y);
    let b = Vector2::new(
        rng.sample::<f64, _>(StandardNormal) * aff.b_std,
        rng.sample::<f64, _>(StandardNormal) * aff.b_std,
    );
    a * rotated + b
}

/// Simulation request: horizon, batch size, seed, checkpoint times for the
/// running sums, and targets whose hits are counted per step.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub n_steps: usize,
    pub n_traj: usize,
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    pub targets: Vec<([f64; 2], f64)>,
}

/// Checkpointed sums and per-step hit counts of a batch of trajectories.
#[derive(Clone, Debug)]
pub struct TrajectoryBatch {
    pub n_traj: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    /// `sums[c][i]` = running sum of trajectory `i` at checkpoint `c`;
    /// excluded trajectories hold NaN.
    pub sums: Vec<Vec<[f64; 2]>>,
    pub targets: Vec<([f64; 2], f64)>,
    /// `hit_counts[target][n - 1]` = trajectories with `|S_n - s| < eps`.
    pub hit_counts: Vec<Vec<u64>>,
    /// Trajectories dropped after overflowing to non-finite values.
    pub excluded: u64,
}

struct ChunkAcc {
    sums: Vec<Vec<[f64; 2]>>,
    hits: Vec<Vec<u64>>,
    excluded: u64,
}

pub fn simulate(model: &SimModel, start: SimStart, config: &SimConfig) -> Result<TrajectoryBatch> {
    if config.checkpoints.iter().any(|&c| c == 0 || c > config.n_steps) {
        return Err(Error::Domain("checkpoints must lie in [1, n_steps]".into()));
    }
    let mut checkpoints = config.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    if let (SimModel::Finite(m), SimStart::State(x)) = (model, start) {
        if x >= m.n_states() {
            return Err(Error::Domain("start state out of range".into()));
        }
    }
    let m0 = model.resolve_m0(config.seed);

    // Per-state sampling tables for finite models.
    let finite_table: Option<Vec<Vec<(f64, usize, [f64; 2])>>> = match model {
        SimModel::Finite(m) => {
            let mut tables = Vec::with_capacity(m.n_states());
            for x in 0..m.n_states() {
                let mut rows = Vec::new();
                let mut acc = 0.0;
                for y in 0..m.n_states() {
                    let q = m.kernel()[(x, y)];
                    if q == 0.0 {
                        continue;
                    }
                    for atom in m.step_atoms(x, y) {
                        acc += q * atom.p;
                        rows.push((acc, y, atom.v));
                    }
                }
                tables.push(rows);
            }
            Some(tables)
        }
        _ => None,
    };

    let chunk_size = 256usize;
    let n_chunks = config.n_traj.div_ceil(chunk_size);
    let partials: Vec<ChunkAcc> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let first = chunk * chunk_size;
            let last = ((chunk + 1) * chunk_size).min(config.n_traj);
            let mut acc = ChunkAcc {
                sums: vec![Vec::with_capacity(last - first); checkpoints.len()],
                hits: vec![vec![0u64; config.n_steps]; config.targets.len()],
                excluded: 0,
            };
            for traj in first..last {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(traj as u64 + 1);
                let mut s = Vector2::<f64>::zeros();
                let mut state = match start {
                    SimStart::State(x) => x,
                    SimStart::Point(_) => 0,
                };
                let mut x = match start {
                    SimStart::Point(p) => Vector2::new(p[0], p[1]),
                    SimStart::State(_) => Vector2::zeros(),
                };
                let mut cp_iter = checkpoints.iter().peekable();
                let mut alive = true;
                for n in 1..=config.n_steps {
                    match model {
                        SimModel::Finite(_) => {
                            let rows = &finite_table.as_ref().unwrap()[state];
                            let u: f64 = rng.gen();
                            let mut chosen = rows.len() - 1;
                            for (i, row) in rows.iter().enumerate() {
                                if u < row.0 {
                                    chosen = i;
                                    break;
                                }
                            }
                            let (_, y, v) = rows[chosen];
                            state = y;
                            s.x += v[0];
                            s.y += v[1];
                        }
                        SimModel::Affine(aff) => {
                            x = affine_step(aff, &mut rng, x);
                            s.x += x.x - m0[0];
                            s.y += x.y - m0[1];
                        }
                        SimModel::Ifs(ifs) => {
                            let noise = Vector2::new(
                                rng.sample::<f64, _>(StandardNormal) * ifs.noise_std,
                                rng.sample::<f64, _>(StandardNormal) * ifs.noise_std,
                            );
                            x = ifs.contraction * x + noise;
                            s.x += x.x.tanh();
                            s.y += x.y.tanh();
                        }
                    }
                    if !s.x.is_finite() || !s.y.is_finite() {
                        alive = false;
                        break;
                    }
                    for (ti, (target, eps)) in config.targets.iter().enumerate() {
                        let dx = s.x - target[0];
                        let dy = s.y - target[1];
                        if (dx * dx + dy * dy).sqrt() < *eps {
                            acc.hits[ti][n - 1] += 1;
                        }
                    }
                    while let Some(&&cp) = cp_iter.peek() {
                        if cp == n {
                            let ci = checkpoints.iter().position(|&c| c == cp).unwrap();
                            acc.sums[ci].push([s.x, s.y]);
                            cp_iter.next();
                        } else {
                            break;
                        }
                    }
                }
                if !alive {
                    // Drop the whole trajectory: overwrite checkpoints already
                    // recorded and pad the missing ones.
                    acc.excluded += 1;
                    let idx = traj - first;
                    for ci in 0..checkpoints.len() {
                        if acc.sums[ci].len() > idx {
                            acc.sums[ci][idx] = [f64::NAN, f64::NAN];
                        } else {
                            acc.sums[ci].push([f64::NAN, f64::NAN]);
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut sums = vec![Vec::with_capacity(config.n_traj); checkpoints.len()];
    let mut hit_counts = vec![vec![0u64; config.n_steps]; config.targets.len()];
    let mut excluded = 0u64;
    for part in partials {
        for (ci, v) in part.sums.into_iter().enumerate() {
            sums[ci].extend(v);
        }
        for (ti, v) in part.hits.into_iter().enumerate() {
            for (n, c) in v.into_iter().enumerate() {
                hit_counts[ti][n] += c;
            }
        }
        excluded += part.excluded;
    }
    Ok(TrajectoryBatch {
        n_traj: config.n_traj,
        n_steps: config.n_steps,
        seed: config.seed,
        checkpoints,
        sums,
        targets: config.targets.clone(),
        hit_counts,
        excluded,
    })
}

impl TrajectoryBatch {
    /// Histogram of checkpoint sums on integer lattice points; meaningful for
    /// finite lattice models whose sums are exact integers in floating point.
    pub fn checkpoint_histogram(&self, checkpoint: usize) -> std::collections::HashMap<(i64, i64), u64> {
        let mut map = std::collections::HashMap::new();
        for s in &self.sums[checkpoint] {
            if s[0].is_finite() {
                *map.entry((s[0].round() as i64, s[1].round() as i64)).or_insert(0) += 1;
            }
        }
        map
    }
}

/// Per-checkpoint covariance of the normalized sums plus a gaussianity
/// statistic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointStat {
    pub n: usize,
    pub cov: [[f64; 2]; 2],
    /// Median squared radius of the normalized sums divided by `2 ln 2`, so
    /// it equals the per-coordinate variance for an isotropic gaussian. The
    /// raw second moment of critical models diverges on rare excursions; this
    /// bounded-influence scale tracks the bulk the limit law constrains.
    pub bulk_scale: f64,
    pub degenerate: bool,
    pub normality_stat: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CltReport {
    pub normalizer: NormalizerKind,
    pub checkpoints: Vec<CheckpointStat>,
    /// Ratios of consecutive `bulk_scale` values; near 1 exactly when the
    /// normalizer matches the walk's scaling.
    pub stabilization: Vec<f64>,
    /// Trace ratios of the raw covariances; erratic for heavy-tailed models,
    /// reported for comparison.
    pub stabilization_raw: Vec<f64>,
}

fn sample_cov(pts: &[Vector2<f64>]) -> Matrix2<f64> {
    let mean = pts.iter().sum::<Vector2<f64>>() / pts.len() as f64;
    let mut cov = Matrix2::zeros();
    for p in pts {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov / (pts.len() - 1) as f64
}

fn median_sq_radius(pts: &[Vector2<f64>]) -> f64 {
    let mut r2: Vec<f64> = pts.iter().map(|p| p.norm_squared()).collect();
    r2.sort_by(f64::total_cmp);
    let n = r2.len();
    if n % 2 == 0 {
        0.5 * (r2[n / 2 - 1] + r2[n / 2])
    } else {
        r2[n / 2]
    }
}

/// Sample covariance and bulk scale of the checkpointed sums under a
/// normalizer, with an energy-distance gaussianity statistic and a parametric
/// bootstrap p-value.
pub fn empirical_clt(batch: &TrajectoryBatch, kind: NormalizerKind) -> Result<CltReport> {
    if batch.checkpoints.len() < 2 {
        return Err(Error::Domain(
            "empirical CLT needs at least two checkpoints".into(),
        ));
    }
    let mut stats = Vec::new();
    for (ci, &n) in batch.checkpoints.iter().enumerate() {
        let a_n = kind.a_n(n)?;
        let pts: Vec<Vector2<f64>> = batch.sums[ci]
            .iter()
            .filter(|s| s[0].is_finite())
            .map(|s| Vector2::new(s[0] / a_n, s[1] / a_n))
            .collect();
        if pts.len() < 8 {
            return Err(Error::Underpowered(format!(
                "only {} usable trajectories at checkpoint {n}",
                pts.len()
            )));
        }
        let cov = sample_cov(&pts);
        let bulk_scale = median_sq_radius(&pts) / (2.0 * std::f64::consts::LN_2);
        let scale = cov.norm().max(1e-300);
        let degenerate = cov.determinant() <= 1e-12 * scale * scale;
        let (stat, p_value) = if degenerate {
            (None, None)
        } else {
            let (s, p) = energy_normality(&pts, &cov, batch.seed ^ (ci as u64) << 32);
            (Some(s), Some(p))
        };
        stats.push(CheckpointStat {
            n,
            cov: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
            bulk_scale,
            degenerate,
            normality_stat: stat,
            p_value,
        });
    }
    let stabilization = stats
        .windows(2)
        .map(|w| w[1].bulk_scale / w[0].bulk_scale)
        .collect();
    let stabilization_raw = stats
        .windows(2)
        .map(|w| (w[1].cov[0][0] + w[1].cov[1][1]) / (w[0].cov[0][0] + w[0].cov[1][1]))
        .collect();
    Ok(CltReport {
        normalizer: kind,
        checkpoints: stats,
        stabilization,
        stabilization_raw,
    })
}

/// Energy distance between the whitened sample and the standard gaussian,
/// with a parametric bootstrap p-value.
fn energy_normality(pts: &[Vector2<f64>], cov: &Matrix2<f64>, seed: u64) -> (f64, f64) {
    let chol = match nalgebra::Cholesky::new(*cov) {
        Some(c) => c,
        None => return (f64::NAN, f64::NAN),
    };
    let inv_l = chol.l().try_inverse().expect("triangular inverse");
    let m = pts.len().min(512);
    let stride = pts.len() / m;
    let sample: Vec<Vector2<f64>> = (0..m).map(|i| inv_l * pts[i * stride]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - 2);
    let gauss = |rng: &mut ChaCha8Rng| {
        Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    };
    let reference: Vec<Vector2<f64>> = (0..m).map(|_| gauss(&mut rng)).collect();

    let stat = energy_distance(&sample, &reference);
    let boots = 60;
    let mut worse = 0usize;
    for _ in 0..boots {
        let a: Vec<Vector2<f64>> = (0..m).map(|_| gauss(&mut rng)).collect();
        let b: Vec<Vector2<f64>> = (0..m).map(|_| gauss(&mut rng)).collect();
        if energy_distance(&a, &b) >= stat {
            worse += 1;
        }
    }
    (stat, (worse + 1) as f64 / (boots + 1) as f64)
}

fn energy_distance(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> f64 {
    let cross = mean_pair_dist(a, b);
    let within_a = mean_pair_dist(a, a);
    let within_b = mean_pair_dist(b, b);
    2.0 * cross - within_a - within_b
}

fn mean_pair_dist(a: &[Vector2<f64>], b: &[Vector2<f64>]) -> f64 {
    let mut acc = 0.0;
    for x in a {
        for y in b {
            acc += (x - y).norm();
        }
    }
    acc / (a.len() as f64 * b.len() as f64)
}

/// Hit-frequency series with Wilson confidence intervals, consumable by the
/// certificate machinery.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HitSeries {
    pub s: [f64; 2],
    pub eps: f64,
    pub n_traj: usize,
    pub p_hat: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn empirical_hits(batch: &TrajectoryBatch, target: usize) -> Result<HitSeries> {
    let counts = batch
        .hit_counts
        .get(target)
        .ok_or_else(|| Error::Domain(format!("no hit counter for target {target}")))?;
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Underpowered(format!(
            "no hits recorded over {} trajectories; try at least {}",
            batch.n_traj,
            batch.n_traj.saturating_mul(100)
        )));
    }
    let n = batch.n_traj as f64;
    let z = 1.96f64;
    let mut p_hat = Vec::with_capacity(counts.len());
    let mut lo = Vec::with_capacity(counts.len());
    let mut hi = Vec::with_capacity(counts.len());
    for &c in counts {
        let p = c as f64 / n;
        let denom = 1.0 + z * z / n;
        let center = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        p_hat.push(p);
        lo.push((center - half).max(0.0));
        hi.push((center + half).min(1.0));
    }
    let (s, eps) = batch.targets[target];
    Ok(HitSeries {
        s,
        eps,
        n_traj: batch.n_traj,
        p_hat,
        lo,
        hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn small_config() -> SimConfig {
        SimConfig {
            n_steps: 64,
            n_traj: 400,
            seed: 42,
            checkpoints: vec![32, 64],
            targets: vec![([0.0, 0.0], 0.5)],
        }
    }

    #[test]
    fn seed_determinism() {
        let model = SimModel::Finite(fixtures::lazy2d());
        let a = simulate(&model, SimStart::State(0), &small_config()).unwrap();
        let b = simulate(&model, SimStart::State(0), &small_config()).unwrap();
        assert_eq!(a.sums, b.sums);
        assert_eq!(a.hit_counts, b.hit_counts);
    }

    #[test]
    fn finite_simulation_tracks_oracle_one_step() {
        // After one step the lazy walk holds with probability 1/3.
        let model = SimModel::Finite(fixtures::lazy2d());
        let config = SimConfig {
            n_steps: 1,
            n_traj: 40_000,
            seed: 7,
            checkpoints: vec![1],
            targets: vec![([0.0, 0.0], 0.5)],
        };
        let batch = simulate(&model, SimStart::State(0), &config).unwrap();
        let p = batch.hit_counts[0][0] as f64 / config.n_traj as f64;
        let se = (p * (1.0 - p) / config.n_traj as f64).sqrt();
        assert!((p - 1.0 / 3.0).abs() < 4.0 * se, "p = {p}");
    }

    #[test]
    fn affine_degenerate_scale_zero_is_iid() {
        // A = 0 collapses to X_n = B_n; the standard CLT applies.
        let model = SimModel::Affine(AffineRecursion {
            scale: 0.0,
            sigma: 0.3,
            b_std: 1.0,
            m0: Some([0.0, 0.0]),
        });
        let config = SimConfig {
            n_steps: 400,
            n_traj: 2000,
            seed: 3,
            checkpoints: vec![100, 400],
            targets: vec![],
        };
        let batch = simulate(&model, SimStart::Point([0.0, 0.0]), &config).unwrap();
        let report = empirical_clt(&batch, NormalizerKind::Standard).unwrap();
        for c in &report.checkpoints {
            assert!((c.cov[0][0] - 1.0).abs() < 0.15, "cov11 {}", c.cov[0][0]);
            assert!((c.cov[1][1] - 1.0).abs() < 0.15, "cov22 {}", c.cov[1][1]);
        }
        assert!((report.stabilization[0] - 1.0).abs() < 0.15);
    }

    #[test]
    fn ifs_audit_and_clt() {
        let ifs = fixtures::ifs1();
        let model = SimModel::Ifs(ifs);
        let audit = model.audit(1, 5000);
        assert!(audit.passed, "{:?}", audit.notes);

        let config = SimConfig {
            n_steps: 1600,
            n_traj: 1500,
            seed: 11,
            checkpoints: vec![400, 1600],
            targets: vec![],
        };
        let batch = simulate(&model, SimStart::Point([0.0, 0.0]), &config).unwrap();
        let report = empirical_clt(&batch, NormalizerKind::Standard).unwrap();
        assert!(
            (report.stabilization[0] - 1.0).abs() < 0.2,
            "stabilization {:?}",
            report.stabilization
        );
    }

    #[test]
    fn affine_audit_moments() {
        let model = SimModel::Affine(fixtures::af1());
        let audit = model.audit(5, 200_000);
        assert!(audit.passed, "{:?}", audit.notes);
    }

    #[test]
    fn degenerate_covariance_is_flagged() {
        // One-dimensional walk: the second coordinate never moves.
        use crate::chain::{EdgeStep, ModelSpec, StepAtom};
        let spec = ModelSpec {
            lattice: crate::lattice::LatticeSpec::h3(nalgebra::Matrix2::identity()).unwrap(),
            kernel: vec![vec![1.0]],
            steps: vec![EdgeStep {
                from: 0,
                to: 0,
                atoms: vec![
                    StepAtom { v: [1.0, 0.0], p: 0.5 },
                    StepAtom { v: [-1.0, 0.0], p: 0.5 },
                ],
            }],
        };
        let model = SimModel::Finite(spec.build().unwrap());
        let config = SimConfig {
            n_steps: 64,
            n_traj: 500,
            seed: 5,
            checkpoints: vec![32, 64],
            targets: vec![],
        };
        let batch = simulate(&model, SimStart::State(0), &config).unwrap();
        let report = empirical_clt(&batch, NormalizerKind::Standard).unwrap();
        assert!(report.checkpoints.iter().all(|c| c.degenerate));
        assert!(report.checkpoints.iter().all(|c| c.p_value.is_none()));
    }

    #[test]
    fn explosive_model_excludes_trajectories() {
        // E|A|^2 = 9 makes the recursion blow up to non-finite values.
        let model = SimModel::Affine(AffineRecursion {
            scale: 3.0,
            sigma: 0.5,
            b_std: 1.0,
            m0: Some([0.0, 0.0]),
        });
        let config = SimConfig {
            n_steps: 2000,
            n_traj: 64,
            seed: 22,
            checkpoints: vec![2000],
            targets: vec![],
        };
        let batch = simulate(&model, SimStart::Point([1.0, 0.0]), &config).unwrap();
        assert!(batch.excluded > 0, "expected overflowing trajectories");
    }

    #[test]
    fn huge_ball_hits_everything() {
        let model = SimModel::Finite(fixtures::lazy2d());
        let config = SimConfig {
            n_steps: 16,
            n_traj: 100,
            seed: 9,
            checkpoints: vec![16],
            targets: vec![([0.0, 0.0], 1e6)],
        };
        let batch = simulate(&model, SimStart::State(0), &config).unwrap();
        let series = empirical_hits(&batch, 0).unwrap();
        assert!(series.p_hat.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn zero_hits_is_underpowered() {
        let model = SimModel::Finite(fixtures::lazy2d());
        let config = SimConfig {
            n_steps: 4,
            n_traj: 50,
            seed: 13,
            checkpoints: vec![4],
            targets: vec![([500.0, 500.0], 0.5)],
        };
        let batch = simulate(&model, SimStart::State(0), &config).unwrap();
        assert!(matches!(
            empirical_hits(&batch, 0),
            Err(Error::Underpowered(_))
        ));
    }

    #[test]
    fn hits_against_oracle_value() {
        // p_8(0) from the exact convolution vs the empirical frequency.
        use crate::chain::InitialLaw;
        use crate::exactdist::{Evolver, WindowPolicy};
        let lazy = fixtures::lazy2d();
        let mut evolver = Evolver::new(
            &lazy,
            &InitialLaw::Dirac(0),
            WindowPolicy::new([16, 16], 1e-12),
        )
        .unwrap();
        evolver.run_to(8).unwrap();
        let p_exact = evolver.dist().mass_at(0, [0, 0]);

        let model = SimModel::Finite(lazy.clone());
        let config = SimConfig {
            n_steps: 8,
            n_traj: 30_000,
            seed: 17,
            checkpoints: vec![8],
            targets: vec![([0.0, 0.0], 0.5)],
        };
        let batch = simulate(&model, SimStart::State(0), &config).unwrap();
        let p_hat = batch.hit_counts[0][7] as f64 / config.n_traj as f64;
        let se = (p_exact * (1.0 - p_exact) / config.n_traj as f64).sqrt();
        assert!((p_hat - p_exact).abs() < 4.0 * se, "{p_hat} vs {p_exact}");
    }
}
