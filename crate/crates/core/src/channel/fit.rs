//! Least-squares circle fit on the unit sphere.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg;
use crate::polarization::StokesVector;
use crate::scalar::Real;

use super::TrajectoryPoint;

/// Circle `{x : angle(x, axis) = cone_angle}` fitted to a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcFit<T> {
    /// Rotation axis of the circle (principal-state estimate).
    pub axis: StokesVector<T>,
    /// Angular radius of the circle, radians.
    pub cone_angle: T,
    /// Azimuthal extent of the data about `axis`, radians.
    pub rotation_angle: T,
    /// Extent of the data along the circle as seen from the sphere center,
    /// `sin(cone_angle) * rotation_angle`.
    pub central_angle: T,
    /// RMS angular distance of the points from the circle, radians.
    pub residual: T,
    /// Set when all points coincide and the axis is undefined.
    pub degenerate: bool,
}

/// Fits a circle to trajectory points by minimizing great-circle residuals,
/// starting from the algebraic plane fit. Points are assumed ordered along
/// the trajectory so that azimuths can be unwrapped.
pub fn fit_arc<T: Real>(points: &[TrajectoryPoint<T>]) -> Result<ArcFit<T>> {
    if points.len() < 3 {
        return Err(invalid(format!("arc fit needs at least 3 points, got {}", points.len())));
    }
    let p: Vec<StokesVector<T>> = points.iter().map(|t| t.stokes.unit()).collect::<Result<_>>()?;

    let spread = p.iter().map(|x| x.angle_to(&p[0])).fold(T::zero(), T::max);
    if spread <= T::epsilon() * T::lit(64.0) {
        return Ok(ArcFit {
            axis: p[0],
            cone_angle: T::zero(),
            rotation_angle: T::zero(),
            central_angle: T::zero(),
            residual: T::zero(),
            degenerate: true,
        });
    }

    let n_pts = T::from_usize_lossy(p.len());
    let mean = p.iter().fold(StokesVector::default(), |acc, x| acc + *x).scale(T::one() / n_pts);
    let mut cov = [[T::zero(); 3]; 3];
    for x in &p {
        let d = (*x - mean).to_array();
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] = cov[r][c] + d[r] * d[c];
            }
        }
    }
    let (_, vecs) = linalg::symmetric_eigen3(cov);
    let mut axis = StokesVector::from_array(vecs[0]).unit()?;
    if axis.dot(&mean) < T::zero() {
        axis = -axis;
    }
    let mut cone = p.iter().fold(T::zero(), |acc, x| acc + x.angle_to(&axis)) / n_pts;

    let cost = |axis: &StokesVector<T>, cone: T| {
        p.iter().fold(T::zero(), |acc, x| {
            let r = x.angle_to(axis) - cone;
            acc + r * r
        })
    };
    let mut current = cost(&axis, cone);
    let mut lambda = T::lit(1e-3);
    for _ in 0..100 {
        let u = axis.any_orthogonal();
        let v = axis.cross(&u);
        let mut jtj = vec![vec![T::zero(); 3]; 3];
        let mut jtr = vec![T::zero(); 3];
        for x in &p {
            let theta = x.angle_to(&axis);
            let sin = theta.sin();
            if sin <= T::epsilon() {
                continue;
            }
            let j = [-x.dot(&u) / sin, -x.dot(&v) / sin, -T::one()];
            let r = theta - cone;
            for a in 0..3 {
                jtr[a] = jtr[a] - j[a] * r;
                for b in 0..3 {
                    jtj[a][b] = jtj[a][b] + j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        while lambda < T::lit(1e10) {
            let mut damped = jtj.clone();
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] = row[i] + lambda * (jtj[i][i] + T::epsilon());
            }
            if let Some(step) = linalg::solve(damped, jtr.clone()) {
                let trial_axis = (axis + u.scale(step[0]) + v.scale(step[1])).unit()?;
                let trial_cone = cone + step[2];
                let trial = cost(&trial_axis, trial_cone);
                if trial <= current {
                    let gain = current - trial;
                    axis = trial_axis;
                    cone = trial_cone;
                    current = trial;
                    lambda = (lambda / T::lit(10.0)).max(T::lit(1e-12));
                    improved = gain > current * T::epsilon() * T::lit(16.0) && gain > T::min_positive_value();
                    break;
                }
            }
            lambda = lambda * T::lit(10.0);
        }
        if !improved {
            break;
        }
    }
    if cone > T::FRAC_PI_2() + T::FRAC_PI_4() {
        // Same circle, opposite orientation: keep the axis on the trajectory's side.
        axis = -axis;
        cone = T::PI() - cone;
    }

    let u = axis.any_orthogonal();
    let v = axis.cross(&u);
    let mut prev = None;
    let mut unwrapped = T::zero();
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for x in &p {
        let phi = x.dot(&v).atan2(x.dot(&u));
        unwrapped = match prev {
            None => phi,
            Some(last) => {
                let mut d = phi - last;
                while d > T::PI() {
                    d = d - T::TAU();
                }
                while d < -T::PI() {
                    d = d + T::TAU();
                }
                unwrapped + d
            }
        };
        prev = Some(phi);
        lo = lo.min(unwrapped);
        hi = hi.max(unwrapped);
    }
    let rotation = hi - lo;
    Ok(ArcFit {
        axis,
        cone_angle: cone,
        rotation_angle: rotation,
        central_angle: cone.sin() * rotation,
        residual: (current / n_pts).sqrt(),
        degenerate: false,
    })
}
