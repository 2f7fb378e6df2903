use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const COARSE_POINTS: usize = 121;
const GRID_STEP: f64 = 1e-4;
const GOLDEN_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditPoint {
    pub p_key: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    GoldenSection,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizationStatus {
    Optimum,
    NoPositiveKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub p_key: f64,
    pub rate: f64,
    pub status: OptimizationStatus,
    pub method: SearchMethod,
    /// False when the coarse scan found more than one local maximum.
    pub unimodal: bool,
    /// Every evaluation, in evaluation order.
    pub audit: Vec<AuditPoint>,
}

/// Whether `rates` rises (or stays flat) and then falls, allowing for
/// relative noise `tol`.
fn is_unimodal(rates: &[f64], tol: f64) -> bool {
    let scale = rates.iter().cloned().fold(0.0, f64::max) * tol;
    let mut falling = false;
    for w in rates.windows(2) {
        if w[1] < w[0] - scale {
            falling = true;
        } else if falling && w[1] > w[0] + scale {
            return false;
        }
    }
    true
}

/// Maximizes `objective` over key-basis probabilities in `(lo, hi)`.
///
/// A coarse scan, uniform in `-log10(1 - p)`, checks unimodality and brackets
/// the maximum; golden-section search then refines it. If the scan is not
/// unimodal a full grid at 1e-4 spacing is used instead. The reported optimum
/// is the best of all evaluations.
pub fn optimize_basis_probability<F>(objective: F, lo: f64, hi: f64) -> Result<OptimizationReport>
where
    F: Fn(f64) -> f64 + Sync,
{
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(invalid(format!("search interval ({lo}, {hi}) must lie inside (0, 1)")));
    }
    let eval = |p: f64| {
        let r = objective(p);
        AuditPoint { p_key: p, rate: if r.is_finite() { r } else { 0.0 } }
    };
    let (u_lo, u_hi) = (-(1.0 - lo).log10(), -(1.0 - hi).log10());
    let coarse: Vec<f64> = (0..COARSE_POINTS)
        .map(|i| {
            let u = u_lo + (u_hi - u_lo) * i as f64 / (COARSE_POINTS - 1) as f64;
            (1.0 - 10f64.powf(-u)).clamp(lo, hi)
        })
        .collect();
    let mut audit: Vec<AuditPoint> = coarse.par_iter().map(|&p| eval(p)).collect();
    let rates: Vec<f64> = audit.iter().map(|a| a.rate).collect();
    let unimodal = is_unimodal(&rates, 1e-9);

    let method = if unimodal {
        let best = argmax(&audit);
        let (mut a, mut b) = (coarse[best.saturating_sub(1)], coarse[(best + 1).min(COARSE_POINTS - 1)]);
        if rates[best] > 0.0 {
            let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
            let mut c = b - inv_phi * (b - a);
            let mut d = a + inv_phi * (b - a);
            let (mut fc, mut fd) = (eval(c), eval(d));
            audit.extend([fc, fd]);
            while b - a > GOLDEN_TOL {
                if fc.rate >= fd.rate {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - inv_phi * (b - a);
                    fc = eval(c);
                    audit.push(fc);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + inv_phi * (b - a);
                    fd = eval(d);
                    audit.push(fd);
                }
            }
        }
        SearchMethod::GoldenSection
    } else {
        let steps = ((hi - lo) / GRID_STEP).floor() as usize;
        let grid: Vec<AuditPoint> = (0..=steps).into_par_iter().map(|i| eval(lo + i as f64 * GRID_STEP)).collect();
        audit.extend(grid);
        SearchMethod::Grid
    };

    let best = audit[argmax(&audit)];
    let status = if best.rate > 0.0 { OptimizationStatus::Optimum } else { OptimizationStatus::NoPositiveKey };
    Ok(OptimizationReport { p_key: best.p_key, rate: best.rate, status, method, unimodal, audit })
}

fn argmax(points: &[AuditPoint]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.rate > points[best].rate {
            best = i;
        }
    }
    best
}
