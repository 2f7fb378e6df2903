//! Second-order correlation: three-level model, CW histogram fitting and the
//! pulsed peak-ratio estimator.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

/// One histogram bin: delay (ns) and coincidence count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub tau_ns: f64,
    pub counts: f64,
}

/// Three-level emitter correlation with an additive background floor.
///
/// `g(t) = g2_zero + (1 - g2_zero) [1 - (1 + a) e^{-|t|/tau1} + a e^{-|t|/tau2}]`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Model {
    /// Bunching amplitude.
    pub a: f64,
    /// Antibunching time constant, ns.
    pub tau1: f64,
    /// Bunching time constant, ns.
    pub tau2: f64,
    /// Value at zero delay (the floor).
    pub g2_zero: f64,
    /// One-sigma uncertainty of `g2_zero`.
    pub uncertainty: f64,
}

impl G2Model {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau1 > 0.0 && self.tau2 > 0.0) {
            return Err(invalid("three-level time constants must be positive"));
        }
        Ok(())
    }
}

pub fn g2_three_level(tau: f64, model: &G2Model) -> f64 {
    let t = tau.abs();
    let e1 = (-t / model.tau1).exp();
    let e2 = (-t / model.tau2).exp();
    let shape = 1.0 - (1.0 + model.a) * e1 + model.a * e2;
    model.g2_zero + (1.0 - model.g2_zero) * shape
}

/// Result of [`fit_g2_cw`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwFitReport {
    pub model: G2Model,
    /// Counts corresponding to `g = 1`.
    pub normalization: f64,
    /// Parameter order: normalization, g2_zero, a, tau1, tau2.
    pub parameter_names: Vec<String>,
    pub covariance_diagonal: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

const N_PARAMS: usize = 5;

struct Bounds {
    lo: [f64; N_PARAMS],
    hi: [f64; N_PARAMS],
}

impl Bounds {
    fn clamp(&self, p: &mut [f64; N_PARAMS]) {
        for i in 0..N_PARAMS {
            p[i] = p[i].clamp(self.lo[i], self.hi[i]);
        }
    }
}

fn model_and_jacobian(tau: f64, p: &[f64; N_PARAMS]) -> (f64, [f64; N_PARAMS]) {
    let [norm, c, a, t1, t2] = *p;
    let t = tau.abs();
    let e1 = (-t / t1).exp();
    let e2 = (-t / t2).exp();
    let f = 1.0 - (1.0 + a) * e1 + a * e2;
    let g = c + (1.0 - c) * f;
    let k = norm * (1.0 - c);
    (norm * g, [g, norm * (1.0 - f), k * (e2 - e1), -k * (1.0 + a) * e1 * t / (t1 * t1), k * a * e2 * t / (t2 * t2)])
}

fn chi2(data: &[HistogramBin], p: &[f64; N_PARAMS]) -> f64 {
    data.iter()
        .map(|b| {
            let (m, _) = model_and_jacobian(b.tau_ns, p);
            let r = b.counts - m;
            r * r / b.counts.max(1.0)
        })
        .sum()
}

fn normal_equations(data: &[HistogramBin], p: &[f64; N_PARAMS]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut jtj = vec![vec![0.0; N_PARAMS]; N_PARAMS];
    let mut jtr = vec![0.0; N_PARAMS];
    for b in data {
        let (m, j) = model_and_jacobian(b.tau_ns, p);
        let w = 1.0 / b.counts.max(1.0);
        let r = b.counts - m;
        for r_i in 0..N_PARAMS {
            jtr[r_i] += w * j[r_i] * r;
            for c_i in 0..N_PARAMS {
                jtj[r_i][c_i] += w * j[r_i] * j[c_i];
            }
        }
    }
    (jtj, jtr)
}

struct LmOutcome {
    params: [f64; N_PARAMS],
    chi2: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(data: &[HistogramBin], start: [f64; N_PARAMS], bounds: &Bounds) -> LmOutcome {
    const MAX_ITER: usize = 400;
    let mut p = start;
    bounds.clamp(&mut p);
    let mut cost = chi2(data, &p);
    let mut lambda = 1e-3;
    for iter in 1..=MAX_ITER {
        let (jtj, jtr) = normal_equations(data, &p);
        let mut accepted = false;
        while lambda < 1e12 {
            let mut damped = jtj.clone();
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-12);
            }
            let Some(step) = linalg::solve(damped, jtr.clone()) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for i in 0..N_PARAMS {
                trial[i] += step[i];
            }
            bounds.clamp(&mut trial);
            let trial_cost = chi2(data, &trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let improvement = cost - trial_cost;
                let moved = (0..N_PARAMS).map(|i| ((trial[i] - p[i]) / p[i].abs().max(1e-9)).abs()).fold(0.0, f64::max);
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if improvement <= 1e-10 * cost.max(1.0) && moved < 1e-8 {
                    return LmOutcome { params: p, chi2: cost, iterations: iter, converged: true };
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step exists at any damping: a (possibly bound-constrained) minimum.
            return LmOutcome { params: p, chi2: cost, iterations: iter, converged: true };
        }
    }
    LmOutcome { params: p, chi2: cost, iterations: MAX_ITER, converged: false }
}

/// Fits the three-level model plus floor to a CW coincidence histogram by
/// Poisson-weighted Levenberg-Marquardt with a small multi-start grid.
pub fn fit_g2_cw(histogram: &[HistogramBin]) -> Result<CwFitReport> {
    if histogram.len() < 10 {
        return Err(invalid(format!("need at least 10 histogram bins, got {}", histogram.len())));
    }
    if let Some(b) = histogram.iter().find(|b| !(b.counts >= 0.0) || !b.tau_ns.is_finite()) {
        return Err(invalid(format!("invalid bin at tau = {} ns: counts = {}", b.tau_ns, b.counts)));
    }
    let mut taus: Vec<f64> = histogram.iter().map(|b| b.tau_ns).collect();
    taus.sort_by(f64::total_cmp);
    let span = taus.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let min_bin = taus.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    if !(span > 0.0) || !min_bin.is_finite() {
        return Err(invalid("histogram must span a nonzero delay range"));
    }

    // g = 1 level from the outer third of the delay range.
    let outer: Vec<f64> = histogram.iter().filter(|b| b.tau_ns.abs() >= 2.0 * span / 3.0).map(|b| b.counts).collect();
    let norm0 = (outer.iter().sum::<f64>() / outer.len().max(1) as f64).max(1.0);
    let center =
        histogram.iter().min_by(|x, y| x.tau_ns.abs().total_cmp(&y.tau_ns.abs())).map(|b| b.counts).unwrap_or(norm0);
    let floor0 = (center / norm0).clamp(0.0, 1.0);

    let bounds = Bounds {
        lo: [1e-12, 0.0, 0.0, 0.5 * min_bin, 0.5 * min_bin],
        hi: [f64::INFINITY, 10.0, 100.0, span, 100.0 * span],
    };

    let mut best: Option<LmOutcome> = None;
    let mut any_converged = false;
    for frac1 in [0.005, 0.02, 0.08] {
        for frac2 in [0.1, 0.4] {
            for a0 in [0.0, 0.5] {
                let start = [norm0, floor0, a0, frac1 * span, frac2 * span];
                let out = levenberg_marquardt(histogram, start, &bounds);
                any_converged |= out.converged;
                let better = match &best {
                    None => true,
                    Some(b) => (out.converged && !b.converged) || (out.converged == b.converged && out.chi2 < b.chi2),
                };
                if better {
                    best = Some(out);
                }
            }
        }
    }
    let best = best.expect("multi-start grid is non-empty");
    if !any_converged || !best.chi2.is_finite() {
        return Err(Error::NonConvergence {
            iterations: best.iterations,
            reason: format!("chi2 = {} at parameters {:?}", best.chi2, best.params),
        });
    }

    let (jtj, _) = normal_equations(histogram, &best.params);
    let max_diag = (0..N_PARAMS).map(|i| jtj[i][i]).fold(0.0, f64::max);
    let mut reg = jtj.clone();
    for (i, row) in reg.iter_mut().enumerate() {
        // Directions the data do not constrain (e.g. lifetimes at g2 = 1) get a
        // negligible ridge so the remaining block stays invertible.
        row[i] += 1e-12 * max_diag.max(1e-300);
    }
    let cov = linalg::invert(&reg).ok_or_else(|| Error::NonConvergence {
        iterations: best.iterations,
        reason: "singular curvature matrix at the optimum".into(),
    })?;
    let cov_diag: Vec<f64> = (0..N_PARAMS).map(|i| cov[i][i].max(0.0)).collect();
    let [norm, c, a, t1, t2] = best.params;
    Ok(CwFitReport {
        model: G2Model { a, tau1: t1, tau2: t2, g2_zero: c, uncertainty: cov_diag[1].sqrt() },
        normalization: norm,
        parameter_names: ["normalization", "g2_zero", "a", "tau1", "tau2"].map(String::from).to_vec(),
        covariance_diagonal: cov_diag,
        chi2: best.chi2,
        dof: histogram.len().saturating_sub(N_PARAMS),
        iterations: best.iterations,
    })
}

/// Pulsed peak-ratio estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsedG2 {
    pub g2_zero: f64,
    pub uncertainty: f64,
    pub central_counts: f64,
    pub side_peak_mean: f64,
    pub side_peaks: usize,
}

/// Pulsed g2(0) with the default half-period integration window.
pub fn pulsed_g2(histogram: &[HistogramBin], rep_period_ns: f64) -> Result<PulsedG2> {
    pulsed_g2_with_window(histogram, rep_period_ns, rep_period_ns / 2.0)
}

/// Ratio of the zero-delay peak area to the mean side-peak area. `window_ns`
/// is the half-width integrated around each peak center `k * rep_period`.
pub fn pulsed_g2_with_window(histogram: &[HistogramBin], rep_period_ns: f64, window_ns: f64) -> Result<PulsedG2> {
    if !(rep_period_ns > 0.0) || !(window_ns > 0.0) || window_ns > rep_period_ns / 2.0 {
        return Err(invalid("need rep_period > 0 and 0 < window <= rep_period / 2"));
    }
    if histogram.is_empty() {
        return Err(invalid("empty histogram"));
    }
    let (lo, hi) =
        histogram.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b.tau_ns), hi.max(b.tau_ns)));
    let mut taus: Vec<f64> = histogram.iter().map(|b| b.tau_ns).collect();
    taus.sort_by(f64::total_cmp);
    let bin = taus.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    let slack = if bin.is_finite() { bin } else { 0.0 };
    let complete = |k: i64| {
        let c = k as f64 * rep_period_ns;
        lo <= c - window_ns + slack && hi >= c + window_ns - slack
    };
    let count_side = |dir: i64| (1..).take_while(|&k| complete(k * dir)).count();
    let (left, right) = (count_side(-1), count_side(1));
    if left < 5 || right < 5 || !complete(0) {
        return Err(invalid(format!(
            "need at least 5 complete side peaks on each side, found {left} left and {right} right"
        )));
    }
    let (kmin, kmax) = (-(left as i64), right as i64);
    let mut areas = vec![0.0; (kmax - kmin + 1) as usize];
    for b in histogram {
        let k = (b.tau_ns / rep_period_ns).round() as i64;
        if k < kmin || k > kmax || (b.tau_ns - k as f64 * rep_period_ns).abs() > window_ns {
            continue;
        }
        areas[(k - kmin) as usize] += b.counts;
    }
    let central = areas[(-kmin) as usize];
    let side_total: f64 = areas.iter().sum::<f64>() - central;
    let n_side = left + right;
    let side_mean = side_total / n_side as f64;
    if !(side_mean > 0.0) {
        return Err(invalid("side peaks contain no counts"));
    }
    let g2 = central / side_mean;
    let uncertainty = if central > 0.0 { g2 * (1.0 / central + 1.0 / side_total).sqrt() } else { 1.0 / side_mean };
    Ok(PulsedG2 { g2_zero: g2, uncertainty, central_counts: central, side_peak_mean: side_mean, side_peaks: n_side })
}

/// Poisson-noised CW histogram drawn from `model` with `normalization` counts at g = 1.
pub fn synthetic_cw_histogram<R: Rng + ?Sized>(
    model: &G2Model,
    normalization: f64,
    half_span_ns: f64,
    bin_ns: f64,
    rng: &mut R,
) -> Vec<HistogramBin> {
    let n = (half_span_ns / bin_ns).round() as i64;
    (-n..=n)
        .map(|i| {
            let tau = i as f64 * bin_ns;
            let mean = normalization * g2_three_level(tau, model);
            HistogramBin { tau_ns: tau, counts: poisson(mean, rng) }
        })
        .collect()
}

/// Parameters of a synthetic pulsed coincidence train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulsedTrain {
    pub rep_period_ns: f64,
    /// Exponential decay constant of each peak, ns.
    pub peak_decay_ns: f64,
    /// Mean integrated counts of a side peak.
    pub side_peak_counts: f64,
    /// True ratio of central to side peak area.
    pub ratio: f64,
    pub side_peaks_each_side: usize,
    pub bin_ns: f64,
}

pub fn synthetic_pulsed_histogram<R: Rng + ?Sized>(train: &PulsedTrain, rng: &mut R) -> Vec<HistogramBin> {
    let period = train.rep_period_ns;
    let half = train.side_peaks_each_side as f64 * period + period / 2.0;
    let n = (half / train.bin_ns).floor() as i64;
    // Normalize the sampled peak shape so each peak's expected area is exact.
    let offsets: Vec<f64> = (-n..=n).map(|i| i as f64 * train.bin_ns).collect();
    let shape = |dt: f64| (-dt.abs() / train.peak_decay_ns).exp();
    let per_k = offsets.iter().filter(|t| ((*t / period).round() as i64) == 0).map(|t| shape(*t)).sum::<f64>();
    offsets
        .iter()
        .map(|&tau| {
            let k = (tau / period).round();
            let dt = tau - k * period;
            let area = if k == 0.0 { train.ratio * train.side_peak_counts } else { train.side_peak_counts };
            HistogramBin { tau_ns: tau, counts: poisson(area * shape(dt) / per_k, rng) }
        })
        .collect()
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(mean)
}
