//! Second-moment Borel-Cantelli machinery: certificates bounding the
//! probability of returning near a target infinitely often, amplification of
//! a family of such bounds to an everywhere-recurrence verdict, and the
//! transience flag for series whose hit probabilities are summable.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::chain::{FiniteMRW, InitialLaw};
use crate::error::{Error, Result};
use crate::exactdist::{kochen_series_multi, OracleSeries, WindowPolicy};
use crate::spectral::{
    arithmeticity_scan, covariance, NormalizerKind, ScanOptions, ScanReport, ScanVerdict,
};

/// Bivariate hit-probability source `p_{n,m} = P(S_n in B, S_{n+m} in B)`.
pub trait JointSeries {
    fn joint(&self, n: usize, m: usize) -> f64;
}

impl JointSeries for OracleSeries {
    fn joint(&self, n: usize, m: usize) -> f64 {
        OracleSeries::joint(self, n, m)
    }
}

/// Independent surrogate `p_{n,m} = p_n p_m`.
pub struct ProductJoint<'a>(pub &'a [f64]);

impl JointSeries for ProductJoint<'_> {
    fn joint(&self, n: usize, m: usize) -> f64 {
        self.0[n - 1] * self.0[m - 1]
    }
}

/// Fully tabulated joint series.
pub struct DenseJoint(pub Vec<Vec<f64>>);

impl JointSeries for DenseJoint {
    fn joint(&self, n: usize, m: usize) -> f64 {
        self.0[n - 1][m - 1]
    }
}

/// Certificate extracted from the hit series of one target.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KochenStoneCertificate {
    pub s: [f64; 2],
    pub eps: f64,
    pub horizon: usize,
    /// Partial sum of hit probabilities up to the horizon.
    pub sum_p: f64,
    /// `sum_{n,m<=N} p_{n,m} / (sum_{n<=N} p_n)^2` at the final horizon.
    pub ratio: f64,
    /// Minimum of the ratio over the final quarter of horizons.
    pub d_est: f64,
    /// `1 / (2 d_est)`, capped at 1.
    pub lower_bound: f64,
    /// Whether the partial sums still grow like a divergent series.
    pub divergence_flag: bool,
    /// Set by a successful amplification over a family of targets.
    pub amplified: bool,
}

impl KochenStoneCertificate {
    pub fn conclusion(&self) -> String {
        format!(
            "P(|S_n - ({}, {})| < {} infinitely often) >= {:.4}",
            self.s[0], self.s[1], self.eps, self.lower_bound
        )
    }
}

/// Outcome when the hit series looks summable instead.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransienceReport {
    pub s: [f64; 2],
    pub eps: f64,
    pub horizon: usize,
    pub sum_p: f64,
    /// Increment of the partial sums over the final decade of horizons.
    pub tail_increment: f64,
    /// Same increment one decade earlier, for the decay comparison.
    pub previous_increment: f64,
    pub caveat: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum KochenStoneOutcome {
    #[serde(rename = "CERTIFIED")]
    Certificate(KochenStoneCertificate),
    #[serde(rename = "TRANSIENT")]
    Transient(TransienceReport),
}

impl KochenStoneOutcome {
    pub fn certificate(&self) -> Option<&KochenStoneCertificate> {
        match self {
            Self::Certificate(c) => Some(c),
            Self::Transient(_) => None,
        }
    }
}

/// Decade-wise growth of the partial sums: harmonic-like series keep adding
/// comparable amounts per decade, summable ones decay geometrically. Returns
/// `(final_increment, previous_increment)`.
fn decade_increments(partial: &[f64]) -> (f64, f64) {
    let n = partial.len();
    let at = |k: usize| if k == 0 { 0.0 } else { partial[k - 1] };
    if n >= 100 {
        (at(n) - at(n / 10), at(n / 10) - at(n / 100))
    } else {
        (at(n) - at(n / 2), at(n / 2) - at(n / 4))
    }
}

/// Build the certificate (or the transience verdict) for one target from its
/// per-step hit probabilities and a bivariate series.
pub fn kochen_stone(
    s: [f64; 2],
    eps: f64,
    p: &[f64],
    joint: &dyn JointSeries,
    horizon: usize,
) -> Result<KochenStoneOutcome> {
    if horizon == 0 || p.len() < horizon {
        return Err(Error::Domain(format!(
            "horizon {horizon} exceeds the {} supplied probabilities",
            p.len()
        )));
    }
    // Partial sums of p and running ratio of the double sum to sum^2.
    let mut partial = Vec::with_capacity(horizon);
    let mut acc = 0.0;
    for &pn in &p[..horizon] {
        acc += pn;
        partial.push(acc);
    }
    let sum_p = partial[horizon - 1];

    let (tail_inc, prev_inc) = decade_increments(&partial);
    let divergent = tail_inc >= 1e-6 && (prev_inc <= 0.0 || tail_inc >= 0.5 * prev_inc);
    if !divergent {
        return Ok(KochenStoneOutcome::Transient(TransienceReport {
            s,
            eps,
            horizon,
            sum_p,
            tail_increment: tail_inc,
            previous_increment: prev_inc,
            caveat: "convergence judged from decade increments at a finite horizon".into(),
        }));
    }

    // Incremental double sum over the square [1..=k]^2.
    let mut double = 0.0;
    let mut ratios = vec![f64::NAN; horizon];
    for k in 1..=horizon {
        double += joint.joint(k, k);
        for n in 1..k {
            double += joint.joint(n, k) + joint.joint(k, n);
        }
        let denom = partial[k - 1];
        if denom > 0.0 {
            ratios[k - 1] = double / (denom * denom);
        }
    }
    let ratio = ratios[horizon - 1];
    let tail_start = (3 * horizon) / 4;
    let d_est = ratios[tail_start.max(1) - 1..]
        .iter()
        .copied()
        .filter(|r| r.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !d_est.is_finite() || d_est <= 0.0 {
        return Err(Error::Numeric("hit-probability series is identically zero".into()));
    }
    let lower_bound = (1.0 / (2.0 * d_est)).min(1.0);
    Ok(KochenStoneOutcome::Certificate(KochenStoneCertificate {
        s,
        eps,
        horizon,
        sum_p,
        ratio,
        d_est,
        lower_bound,
        divergence_flag: true,
        amplified: false,
    }))
}

/// Certificate from simulated hit frequencies: the point estimate plus a
/// conservative bound that charges the full Wilson-score width of the
/// marginal sums against the denominator of the second-moment ratio.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McCertificate {
    pub outcome: KochenStoneOutcome,
    /// `1 / (2 d)` with `d` evaluated at the Wilson lower bound of `sum_p`.
    pub conservative_bound: Option<f64>,
    pub sum_p_interval: (f64, f64),
    pub caveat: String,
}

/// Kochen-Stone certificate from a Monte Carlo hit series. The bivariate
/// input is still supplied by the caller (empirical or a product surrogate);
/// the marginal uncertainty is propagated into a conservative bound.
pub fn kochen_stone_from_hits(
    hits: &crate::montecarlo::HitSeries,
    joint: &dyn JointSeries,
    horizon: usize,
) -> Result<McCertificate> {
    let outcome = kochen_stone(hits.s, hits.eps, &hits.p_hat, joint, horizon)?;
    let sum_lo: f64 = hits.lo[..horizon].iter().sum();
    let sum_hi: f64 = hits.hi[..horizon].iter().sum();
    let conservative_bound = outcome.certificate().map(|c| {
        if sum_lo > 0.0 {
            let d_worst = c.d_est * (c.sum_p / sum_lo).powi(2);
            (1.0 / (2.0 * d_worst)).min(1.0)
        } else {
            0.0
        }
    });
    Ok(McCertificate {
        outcome,
        conservative_bound,
        sum_p_interval: (sum_lo, sum_hi),
        caveat: "joint series from simulation carries no per-pair error bars; \
                 marginal Wilson bounds charged against the ratio denominator"
            .into(),
    })
}

/// Verdict of the amplification step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AmplifyVerdict {
    #[serde(rename = "RECURRENT_EVERYWHERE")]
    RecurrentEverywhere,
    #[serde(rename = "WITHHELD")]
    Withheld,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmplifyReport {
    pub verdict: AmplifyVerdict,
    /// Common lower bound over the sampled family.
    pub e_eps: Option<f64>,
    /// Target that blocked the verdict, if any.
    pub failing: Option<[f64; 2]>,
    pub note: String,
}

/// Upgrade a family of certificates to an everywhere-recurrence verdict: a
/// uniform positive bound over targets implies probability one for every
/// start and target. The verdict extrapolates from the finite sample of
/// targets, which the note records.
pub fn amplify(family: &mut [KochenStoneOutcome], min_bound: f64) -> AmplifyReport {
    if family.is_empty() {
        return AmplifyReport {
            verdict: AmplifyVerdict::Withheld,
            e_eps: None,
            failing: None,
            note: "empty certificate family".into(),
        };
    }
    let mut e_eps = f64::INFINITY;
    for outcome in family.iter() {
        match outcome {
            KochenStoneOutcome::Transient(t) => {
                return AmplifyReport {
                    verdict: AmplifyVerdict::Withheld,
                    e_eps: None,
                    failing: Some(t.s),
                    note: "a target in the family is transient".into(),
                };
            }
            KochenStoneOutcome::Certificate(c) => {
                if !c.divergence_flag || c.lower_bound < min_bound {
                    return AmplifyReport {
                        verdict: AmplifyVerdict::Withheld,
                        e_eps: None,
                        failing: Some(c.s),
                        note: format!(
                            "bound {:.4} below the required {min_bound} or divergence unclear",
                            c.lower_bound
                        ),
                    };
                }
                e_eps = e_eps.min(c.lower_bound);
            }
        }
    }
    for outcome in family.iter_mut() {
        if let KochenStoneOutcome::Certificate(c) = outcome {
            c.amplified = true;
        }
    }
    AmplifyReport {
        verdict: AmplifyVerdict::RecurrentEverywhere,
        e_eps: Some(e_eps),
        failing: None,
        note: "uniform positive bound over all sampled (x, s) upgrades to probability one; \
               extrapolated from a finite sample of targets"
            .into(),
    }
}

/// One row of the recurrence report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecurrenceRow {
    pub s: [f64; 2],
    pub eps: f64,
    pub sum_p: f64,
    pub ratio: Option<f64>,
    pub bound: Option<f64>,
    pub verdict: String,
    /// `sum_p` against the predicted `D_S m_S(B) sum a_n`.
    pub agreement: f64,
}

/// Full recurrence report over a grid of targets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecurrenceReport {
    pub model: String,
    pub route: String,
    pub harris: bool,
    pub horizon: usize,
    pub d_s: f64,
    pub rows: Vec<RecurrenceRow>,
    pub amplify: AmplifyReport,
    pub scan: ScanReport,
}

/// Certificates for every `(s, eps)` pair plus the local-limit cross check.
/// Refuses arithmetic models, pointing at a sublattice witness frequency, and
/// reducible driving chains.
pub fn recurrence_report(
    model: &FiniteMRW,
    model_label: &str,
    init: &InitialLaw,
    s_grid: &[Vector2<f64>],
    eps_list: &[f64],
    horizon: usize,
    scan_grid: usize,
    scan_tol: f64,
) -> Result<RecurrenceReport> {
    model.ergodicity_gap()?;
    let scan = arithmeticity_scan(model, scan_grid, scan_tol, &ScanOptions::default())?;
    if scan.verdict == ScanVerdict::Arithmetic {
        let witness = scan
            .g_points
            .iter()
            .filter(|p| {
                let t = Vector2::new(p[0], p[1]);
                model.lattice().reduce_mod_dual(&t).norm()
                    > scan.grid_spacing * std::f64::consts::SQRT_2
            })
            .max_by(|a, b| a[2].total_cmp(&b[2]))
            .map(|p| (p[0], p[1]))
            .unwrap_or((f64::NAN, f64::NAN));
        return Err(Error::Arithmetic(witness.0, witness.1));
    }

    let gamma = covariance(model)?.gamma;
    let d_s = model.lattice().llt_constant(&gamma)?;
    let policy = WindowPolicy::for_horizon(model, horizon)?;
    let predicted_tail = NormalizerKind::Standard.partial_sum(horizon);

    // One shared pair of evolutions serves every target; for H3 the series
    // do not depend on eps below the lattice constant.
    let min_eps = eps_list.iter().copied().fold(f64::INFINITY, f64::min);
    let all_series = kochen_series_multi(model, init, s_grid, min_eps, horizon, Some(policy))?;

    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (s, series) in s_grid.iter().zip(&all_series) {
        for &eps in eps_list {
            let p = series.p();
            let ball = model.lattice().haar_ball(s, eps)?;
            let outcome = kochen_stone([s.x, s.y], eps, &p, series, horizon)?;
            let (sum_p, ratio, bound, verdict) = match &outcome {
                KochenStoneOutcome::Certificate(c) => (
                    c.sum_p,
                    Some(c.ratio),
                    Some(c.lower_bound),
                    "CERTIFIED".to_string(),
                ),
                KochenStoneOutcome::Transient(t) => {
                    (t.sum_p, None, None, "TRANSIENT".to_string())
                }
            };
            rows.push(RecurrenceRow {
                s: [s.x, s.y],
                eps,
                sum_p,
                ratio,
                bound,
                verdict,
                agreement: sum_p / (d_s * ball * predicted_tail),
            });
            outcomes.push(outcome);
        }
    }
    let amplify_report = amplify(&mut outcomes, 0.01);
    Ok(RecurrenceReport {
        model: model_label.to_string(),
        route: "TheoremII".to_string(),
        harris: model.is_harris(),
        horizon,
        d_s,
        rows,
        amplify: amplify_report,
        scan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn product_joint_gives_unit_ratio() {
        let n = 400;
        let p: Vec<f64> = (1..=n).map(|k| 1.0 / k as f64).collect();
        let joint = ProductJoint(&p);
        let out = kochen_stone([0.0, 0.0], 0.5, &p, &joint, n).unwrap();
        let cert = out.certificate().expect("harmonic series certifies");
        assert_abs_diff_eq!(cert.ratio, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.d_est, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cert.lower_bound, 0.5, epsilon = 1e-12);
        assert!(cert.divergence_flag);
    }

    #[test]
    fn summable_series_is_transient() {
        // Hit probabilities of an index-3/2 stable regime: p_n = n^{-4/3}.
        let n = 2000;
        let p: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-4.0 / 3.0)).collect();
        let joint = ProductJoint(&p);
        let out = kochen_stone([0.0, 0.0], 0.5, &p, &joint, n).unwrap();
        match out {
            KochenStoneOutcome::Transient(t) => {
                assert!(t.tail_increment < 0.5 * t.previous_increment);
            }
            other => panic!("expected transience, got {other:?}"),
        }
    }

    #[test]
    fn slow_divergence_still_certifies() {
        // p_n = 1/(n log n) diverges and must not be misread as summable.
        let n = 2000;
        let p: Vec<f64> = (1..=n)
            .map(|k| {
                let k = k as f64 + 1.0;
                1.0 / (k * k.ln())
            })
            .collect();
        let joint = ProductJoint(&p);
        let out = kochen_stone([0.0, 0.0], 0.5, &p, &joint, n).unwrap();
        assert!(out.certificate().is_some());
    }

    #[test]
    fn amplify_over_family() {
        let n = 500;
        let p: Vec<f64> = (1..=n).map(|k| 1.0 / k as f64).collect();
        let joint = ProductJoint(&p);
        let mut family: Vec<KochenStoneOutcome> = (0..4)
            .map(|i| kochen_stone([i as f64, 0.0], 0.5, &p, &joint, n).unwrap())
            .collect();
        let report = amplify(&mut family, 0.01);
        assert_eq!(report.verdict, AmplifyVerdict::RecurrentEverywhere);
        assert_abs_diff_eq!(report.e_eps.unwrap(), 0.5, epsilon = 1e-12);
        assert!(family
            .iter()
            .all(|o| o.certificate().map_or(false, |c| c.amplified)));

        // Insert a synthetic transient member: verdict withheld.
        let pt: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-4.0 / 3.0)).collect();
        let jt = ProductJoint(&pt);
        family.push(kochen_stone([9.0, 9.0], 0.5, &pt, &jt, n).unwrap());
        let report = amplify(&mut family, 0.01);
        assert_eq!(report.verdict, AmplifyVerdict::Withheld);
        assert_eq!(report.failing, Some([9.0, 9.0]));
    }

    #[test]
    fn report_refuses_arithmetic_model() {
        let srw = fixtures::srw2d();
        let err = recurrence_report(
            &srw,
            "srw2d",
            &InitialLaw::Dirac(0),
            &[nalgebra::Vector2::zeros()],
            &[0.5],
            100,
            64,
            1e-6,
        )
        .unwrap_err();
        match err {
            Error::Arithmetic(tx, ty) => {
                let pi = std::f64::consts::PI;
                assert!((tx.abs() - pi).abs() < 0.2, "witness x {tx}");
                assert!((ty.abs() - pi).abs() < 0.2, "witness y {ty}");
            }
            other => panic!("expected arithmetic refusal, got {other:?}"),
        }
    }

    #[test]
    fn report_refuses_reducible_chain() {
        use crate::chain::{EdgeStep, ModelSpec, StepAtom};
        let spec = ModelSpec {
            lattice: crate::lattice::LatticeSpec::h3(nalgebra::Matrix2::identity()).unwrap(),
            kernel: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            steps: vec![
                EdgeStep {
                    from: 0,
                    to: 0,
                    atoms: vec![
                        StepAtom { v: [1.0, 0.0], p: 0.5 },
                        StepAtom { v: [-1.0, 0.0], p: 0.5 },
                    ],
                },
                EdgeStep {
                    from: 1,
                    to: 1,
                    atoms: vec![
                        StepAtom { v: [0.0, 1.0], p: 0.5 },
                        StepAtom { v: [0.0, -1.0], p: 0.5 },
                    ],
                },
            ],
        };
        let model = spec.build().unwrap();
        let err = recurrence_report(
            &model,
            "reducible",
            &InitialLaw::Dirac(0),
            &[nalgebra::Vector2::zeros()],
            &[0.5],
            50,
            16,
            1e-6,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonErgodic(_)));
    }

    #[test]
    fn mc_certificate_is_conservative() {
        use crate::montecarlo::{empirical_hits, simulate, SimConfig, SimModel, SimStart};
        let lazy = fixtures::lazy2d();
        let horizon = 400;
        let batch = simulate(
            &SimModel::Finite(lazy),
            SimStart::State(0),
            &SimConfig {
                n_steps: horizon,
                n_traj: 20_000,
                seed: 31,
                checkpoints: vec![horizon],
                targets: vec![([0.0, 0.0], 0.5)],
            },
        )
        .unwrap();
        let hits = empirical_hits(&batch, 0).unwrap();
        let joint = ProductJoint(&hits.p_hat);
        let mc = kochen_stone_from_hits(&hits, &joint, horizon).unwrap();
        let cert = mc.outcome.certificate().expect("lazy walk certifies");
        let conservative = mc.conservative_bound.unwrap();
        assert!(conservative <= cert.lower_bound);
        assert!(conservative > 0.3, "conservative bound {conservative}");
        assert!(mc.sum_p_interval.0 < cert.sum_p && cert.sum_p < mc.sum_p_interval.1);
    }

    #[test]
    fn ts1_amplifies_from_both_starts() {
        let ts1 = fixtures::ts1();
        let targets = [nalgebra::Vector2::zeros(), nalgebra::Vector2::new(2.0, -1.0)];
        let horizon = 400;
        let mut family = Vec::new();
        for start in 0..2 {
            let series_set = crate::exactdist::kochen_series_multi(
                &ts1,
                &InitialLaw::Dirac(start),
                &targets,
                0.5,
                horizon,
                None,
            )
            .unwrap();
            for (s, series) in targets.iter().zip(&series_set) {
                let p = series.p();
                family.push(kochen_stone([s.x, s.y], 0.5, &p, series, horizon).unwrap());
            }
        }
        let report = amplify(&mut family, 0.01);
        assert_eq!(report.verdict, AmplifyVerdict::RecurrentEverywhere);
        assert!(report.e_eps.unwrap() > 0.1);
    }

    #[test]
    fn lazy_certificate_monotone_in_horizon() {
        let lazy = fixtures::lazy2d();
        let series = crate::exactdist::kochen_series(
            &lazy,
            &InitialLaw::Dirac(0),
            &nalgebra::Vector2::zeros(),
            0.5,
            1000,
            None,
        )
        .unwrap();
        let p = series.p();
        let mut last_flag = true;
        for n in [250usize, 500, 1000] {
            let out = kochen_stone([0.0, 0.0], 0.5, &p, &series, n).unwrap();
            let cert = out.certificate().expect("lazy walk certifies");
            assert!(cert.divergence_flag, "flag flipped at horizon {n}");
            last_flag = cert.divergence_flag;
        }
        assert!(last_flag);
    }
}
