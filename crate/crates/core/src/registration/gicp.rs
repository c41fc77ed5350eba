use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Isometry3, Matrix3, Matrix6, Point3, SymmetricEigen, Vector3, Vector6};
use rayon::prelude::*;

use super::{RegistrationParams, RegistrationResult};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::scan::LidarScan;

/// Variance assigned along the estimated surface normal; the two tangent
/// directions get unit variance.
const PLANE_EPSILON: f64 = 1e-3;

/// Centroid of the points falling in each occupied voxel, in voxel-key order.
pub fn voxel_downsample(points: &[Vector3<f64>], voxel_size: f64) -> Vec<Vector3<f64>> {
    let mut voxels: BTreeMap<(i64, i64, i64), (Vector3<f64>, usize)> = BTreeMap::new();
    for p in points {
        let key = (
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        );
        let entry = voxels.entry(key).or_insert((Vector3::zeros(), 0));
        entry.0 += p;
        entry.1 += 1;
    }
    voxels.into_values().map(|(sum, n)| sum / n as f64).collect()
}

struct Cloud {
    points: Vec<Vector3<f64>>,
    covariances: Vec<Matrix3<f64>>,
    tree: ImmutableKdTree<f64, 3>,
}

impl Cloud {
    fn build(raw: &[Vector3<f64>], params: &RegistrationParams) -> Result<Self> {
        let points = voxel_downsample(raw, params.voxel_size);
        let k = params.neighbor_count_for_covariance;
        if points.len() < k {
            return Err(Error::InsufficientPoints {
                needed: k,
                found: points.len(),
            });
        }
        let entries: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = ImmutableKdTree::new_from_slice(&entries)
            .map_err(|e| Error::InvalidGeometry(format!("kd-tree construction failed: {e:?}")))?;
        let k = NonZeroUsize::new(k).expect("validated");
        let covariances = entries
            .par_iter()
            .map(|q| {
                let neighbors = tree.query(q).nearest_n::<SquaredEuclidean<f64>>(k).execute();
                plane_covariance(neighbors.iter().map(|n| &points[n.item as usize]))
            })
            .collect();
        Ok(Cloud {
            points,
            covariances,
            tree,
        })
    }
}

/// Sample covariance of the neighborhood, with its spectrum replaced by
/// `(ε, 1, 1)` so each point acts as a small planar patch.
fn plane_covariance<'a>(neighbors: impl Iterator<Item = &'a Vector3<f64>> + Clone) -> Matrix3<f64> {
    let n = neighbors.clone().count() as f64;
    let mean = neighbors.clone().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let cov = neighbors.fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let normal_idx = eig.eigenvalues.imin();
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        let v = eig.eigenvectors.column(i);
        let lambda = if i == normal_idx { PLANE_EPSILON } else { 1.0 };
        out += lambda * v * v.transpose();
    }
    out
}

struct Evaluation {
    /// Sum of capped squared residuals over every source point.
    cost: f64,
    /// Source points with a correspondence inside the cap.
    matched: usize,
    hessian: Matrix6<f64>,
    gradient: Vector6<f64>,
    /// Nearest target point of each source point, if within the distance cap.
    pairs: Vec<Option<usize>>,
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

// Mahalanobis costs are rescaled by 2ε so that, for two coplanar patches,
// the residual reads as the point-to-plane distance in meters.
const COST_SCALE: f64 = 2.0 * PLANE_EPSILON;
/// Relative damping beyond which steps are negligible and a stage stops.
const MAX_DAMPING: f64 = 1e4;

/// Scaled information matrix, difference and squared residual of one pair;
/// `None` when the pair falls outside the cap.
fn pair_term(
    source: &Cloud,
    target: &Cloud,
    i: usize,
    j: usize,
    q: &Vector3<f64>,
    rot: &Matrix3<f64>,
    cap: f64,
) -> Option<(Matrix3<f64>, Vector3<f64>, f64)> {
    let d = target.points[j] - q;
    let combined = target.covariances[j] + rot * source.covariances[i] * rot.transpose();
    let w = combined.try_inverse()? * COST_SCALE;
    let r2 = (d.transpose() * w * d)[(0, 0)];
    (r2 < cap).then_some((w, d, r2))
}

/// Target index, Hessian block and gradient of one matched pair.
type Linearized = (usize, Matrix6<f64>, Vector6<f64>);

fn evaluate(source: &Cloud, target: &Cloud, pose: &Isometry3<f64>, max_dist: f64) -> Evaluation {
    let cap = max_dist * max_dist;
    let rot = pose.rotation.to_rotation_matrix().into_inner();
    let terms: Vec<(f64, Option<Linearized>)> = source
        .points
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let q = pose.transform_point(&Point3::from(*s)).coords;
            let nn = target
                .tree
                .query(&[q.x, q.y, q.z])
                .nearest_one::<SquaredEuclidean<f64>>()
                .execute();
            if nn.distance > cap {
                return (cap, None);
            }
            let j = nn.item as usize;
            let Some((w, d, r2)) = pair_term(source, target, i, j, &q, &rot, cap) else {
                return (cap, None);
            };
            // d(ξ) ≈ d + [q]× ω − v for a left perturbation ξ = (ω, v)
            let mut jac = nalgebra::Matrix3x6::zeros();
            jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&q));
            jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));
            let jt_w = jac.transpose() * w;
            (r2, Some((j, jt_w * jac, jt_w * d)))
        })
        .collect();

    // sequential reduction keeps results bit-identical across thread counts
    let mut eval = Evaluation {
        cost: 0.0,
        matched: 0,
        hessian: Matrix6::zeros(),
        gradient: Vector6::zeros(),
        pairs: Vec::with_capacity(terms.len()),
    };
    for (r2, lin) in terms {
        eval.cost += r2;
        match lin {
            Some((j, h, g)) => {
                eval.matched += 1;
                eval.hessian += h;
                eval.gradient += g;
                eval.pairs.push(Some(j));
            }
            None => eval.pairs.push(None),
        }
    }
    eval
}

/// Capped cost at `pose` keeping the pairs of a previous evaluation, which
/// makes it a smooth function of the pose.
fn paired_cost(source: &Cloud, target: &Cloud, pose: &Isometry3<f64>, pairs: &[Option<usize>], max_dist: f64) -> f64 {
    let cap = max_dist * max_dist;
    let rot = pose.rotation.to_rotation_matrix().into_inner();
    let costs: Vec<f64> = source
        .points
        .par_iter()
        .zip(pairs.par_iter())
        .enumerate()
        .map(|(i, (s, pair))| {
            let Some(j) = *pair else { return cap };
            let q = pose.transform_point(&Point3::from(*s)).coords;
            pair_term(source, target, i, j, &q, &rot, cap).map_or(cap, |t| t.2)
        })
        .collect();
    costs.iter().sum()
}

fn rms(cost: f64, n: usize) -> f64 {
    (cost / n as f64).sqrt()
}

fn positions(scan: &LidarScan) -> Vec<Vector3<f64>> {
    scan.points.iter().map(|p| p.position).collect()
}

/// Capped RMS distribution-to-distribution residual (meters) of `source`
/// mapped through `pose` onto `target`; unmatched points count at the cap.
pub fn registration_residual(
    source: &LidarScan,
    target: &LidarScan,
    pose: &RigidTransform,
    params: &RegistrationParams,
) -> Result<f64> {
    params.validate()?;
    let src = Cloud::build(&positions(source), params)?;
    let tgt = Cloud::build(&positions(target), params)?;
    let cost = fresh_cost(&src, &tgt, pose.isometry(), params.fine_correspondence_distance);
    Ok(rms(cost, src.points.len()))
}

/// Capped cost of `pose` with fresh nearest-neighbor pairs.
fn fresh_cost(source: &Cloud, target: &Cloud, pose: &Isometry3<f64>, max_dist: f64) -> f64 {
    let cap = max_dist * max_dist;
    let rot = pose.rotation.to_rotation_matrix().into_inner();
    let costs: Vec<f64> = source
        .points
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let q = pose.transform_point(&Point3::from(*s)).coords;
            let nn = target
                .tree
                .query(&[q.x, q.y, q.z])
                .nearest_one::<SquaredEuclidean<f64>>()
                .execute();
            if nn.distance > cap {
                return cap;
            }
            pair_term(source, target, i, nn.item as usize, &q, &rot, cap).map_or(cap, |t| t.2)
        })
        .collect();
    costs.iter().sum()
}

struct Solver<'a> {
    src: &'a Cloud,
    tgt: &'a Cloud,
    params: &'a RegistrationParams,
    /// Cap of the reported residual.
    score_dist: f64,
    iterations: usize,
    last_cost: f64,
    history: Vec<f64>,
}

impl Solver<'_> {
    fn residual(&self, cost: f64) -> f64 {
        rms(cost, self.src.points.len())
    }

    fn record(&mut self, cost: f64) {
        self.last_cost = cost;
        self.history.push(self.residual(cost));
    }

    /// Levenberg–Marquardt iterations with pairs inside `max_dist`, from
    /// `pose`; returns the last iterate and whether it converged.
    ///
    /// At the scoring distance a step must also not raise the cost under
    /// fresh pairs, and every accepted iterate is recorded. Convergence is
    /// judged on the undamped update, or on the last attempted update once
    /// damping has ruled out every descent step.
    fn stage(&mut self, mut pose: Isometry3<f64>, max_dist: f64) -> (Isometry3<f64>, bool) {
        let (src, tgt) = (self.src, self.tgt);
        let scored = max_dist == self.score_dist;
        let mut current = evaluate(src, tgt, &pose, max_dist);
        let mut lambda = 1e-4;
        let eps = (self.params.translation_epsilon, self.params.rotation_epsilon);
        let below =
            |step: &Vector6<f64>| step.fixed_rows::<3>(3).norm() < eps.0 && step.fixed_rows::<3>(0).norm() < eps.1;
        while self.iterations < self.params.max_iterations {
            // six unknowns need at least six constraints
            if current.matched < 6 {
                break;
            }
            self.iterations += 1;
            if current
                .hessian
                .cholesky()
                .is_some_and(|c| below(&-c.solve(&current.gradient)))
            {
                return (pose, true);
            }
            loop {
                let mut damped = current.hessian;
                for i in 0..6 {
                    damped[(i, i)] += lambda * current.hessian[(i, i)].max(1e-9);
                }
                let Some(step) = damped.cholesky().map(|c| -c.solve(&current.gradient)) else {
                    return (pose, false);
                };
                let omega = step.fixed_rows::<3>(0).into_owned();
                let v = step.fixed_rows::<3>(3).into_owned();
                let mut candidate = Isometry3::new(v, omega) * pose;
                candidate.rotation.renormalize();
                if paired_cost(src, tgt, &candidate, &current.pairs, max_dist) <= current.cost
                    && (!scored || fresh_cost(src, tgt, &candidate, max_dist) <= current.cost)
                {
                    pose = candidate;
                    current = evaluate(src, tgt, &pose, max_dist);
                    lambda = (lambda * 0.1).max(1e-9);
                    break;
                }
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    // no descent left: converged if the attempted update has
                    // shrunk below the epsilons
                    return (pose, below(&step));
                }
            }
            if scored {
                self.record(current.cost);
            }
        }
        (pose, false)
    }
}

/// Refines `init` (`target ← source`) with voxelized generalized ICP.
///
/// A coarse stage pairs points within `max_correspondence_distance`, then a
/// fine stage within `fine_correspondence_distance`, sharing one iteration
/// budget. Each iteration pairs every source point with its nearest target
/// point and takes a Levenberg–Marquardt step on SE(3), accepted only if it
/// lowers the cost over those fixed pairs. Convergence means the update of
/// the last stage fell below both epsilons.
///
/// Residuals are RMS capped costs at the fine distance, with fresh pairs.
/// Fine steps must not raise it, and the fine stage starts from the coarse
/// result only if that did not raise it either, so the history is
/// non-increasing.
pub fn gicp_refine(
    source: &LidarScan,
    target: &LidarScan,
    init: &RigidTransform,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    params.validate()?;
    if init.source_frame() != &source.sensor_frame {
        return Err(Error::FrameMismatch {
            left: init.source_frame().to_string(),
            right: source.sensor_frame.to_string(),
        });
    }
    if init.target_frame() != &target.sensor_frame {
        return Err(Error::FrameMismatch {
            left: target.sensor_frame.to_string(),
            right: init.target_frame().to_string(),
        });
    }
    let src = Cloud::build(&positions(source), params)?;
    let tgt = Cloud::build(&positions(target), params)?;
    let fine = params.fine_correspondence_distance;
    let init_pose = *init.isometry();
    let init_cost = fresh_cost(&src, &tgt, &init_pose, fine);

    let mut solver = Solver {
        src: &src,
        tgt: &tgt,
        params,
        score_dist: fine,
        iterations: 0,
        last_cost: init_cost,
        history: Vec::new(),
    };
    solver.history.push(solver.residual(init_cost));
    let mut pose = init_pose;
    if fine < params.max_correspondence_distance {
        let (coarse, _) = solver.stage(pose, params.max_correspondence_distance);
        let cost = fresh_cost(&src, &tgt, &coarse, fine);
        if cost <= init_cost {
            pose = coarse;
            solver.record(cost);
        }
    }
    let (pose, converged) = solver.stage(pose, fine);

    Ok(RegistrationResult {
        transform: RigidTransform::from_isometry(pose, init.source_frame().clone(), init.target_frame().clone()),
        converged,
        iterations: solver.iterations,
        initial_residual: solver.residual(init_cost),
        final_residual: solver.residual(solver.last_cost),
        residual_history: solver.history,
    })
}
