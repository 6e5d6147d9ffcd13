//! Forward kinematics, body points, and Jacobians for planar serial
//! manipulators, plus the pullback of task-space cost gradients into the
//! configuration space.
//!
//! A degenerate point robot (identity kinematics, n = d) is provided so the
//! same flow machinery can morph task-space points directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Query};
use crate::net::OccupancyNet;

/// Robot model. Immutable; all operations are pure and thread-safe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Manipulator {
    PlanarArm(PlanarArm),
    PointRobot(PointRobot),
}

/// Serial chain of revolute joints in the plane. Joint `k` contributes the
/// cumulative angle `q_0 + … + q_k` to link `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarArm {
    /// Link lengths in meters, all positive.
    pub links: Vec<f64>,
    /// Base position in the workspace.
    pub base: Vec<f64>,
    /// Per-joint `[low, high]` in radians.
    pub limits: Vec<(f64, f64)>,
    /// `(link index, fraction along link)` pairs; must include the
    /// end-effector `(last link, 1.0)`.
    pub body_points: Vec<(usize, f64)>,
    /// Documented joint-space start/goal pairs.
    #[serde(default)]
    pub queries: Vec<Query>,
}

/// Identity kinematics: the configuration space is the workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRobot {
    pub point_limits: Vec<(f64, f64)>,
}

/// Midpoint of every link plus the end-effector.
pub fn default_body_points(n_links: usize) -> Vec<(usize, f64)> {
    let mut pts: Vec<(usize, f64)> = (0..n_links).map(|i| (i, 0.5)).collect();
    pts.push((n_links - 1, 1.0));
    pts
}

impl Manipulator {
    pub fn planar_arm(
        links: Vec<f64>,
        base: Vec<f64>,
        limits: Vec<(f64, f64)>,
        body_points: Vec<(usize, f64)>,
    ) -> Result<Self> {
        if links.is_empty() || links.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidConfig("links must be positive".into()));
        }
        if base.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: base.len(),
            });
        }
        if limits.len() != links.len() || limits.iter().any(|(lo, hi)| lo >= hi) {
            return Err(Error::InvalidConfig(
                "need one (low < high) limit pair per joint".into(),
            ));
        }
        let ee = (links.len() - 1, 1.0);
        if body_points.is_empty() || !body_points.contains(&ee) {
            return Err(Error::InvalidConfig(
                "body points must include the end-effector".into(),
            ));
        }
        if body_points
            .iter()
            .any(|(l, f)| *l >= links.len() || !(0.0..=1.0).contains(f))
        {
            return Err(Error::InvalidConfig("body point off the chain".into()));
        }
        Ok(Self::PlanarArm(PlanarArm {
            links,
            base,
            limits,
            body_points,
            queries: Vec::new(),
        }))
    }

    pub fn point_robot(limits: Vec<(f64, f64)>) -> Self {
        Self::PointRobot(PointRobot {
            point_limits: limits,
        })
    }

    /// Point robot whose limits are the workspace bounds.
    pub fn point_robot_in(bounds: &Aabb) -> Self {
        Self::point_robot(
            bounds
                .min
                .iter()
                .zip(&bounds.max)
                .map(|(lo, hi)| (*lo, *hi))
                .collect(),
        )
    }

    /// The 3-link arm documented with the `divider2d` benchmark world. Its
    /// only collision-free route to the far side is through the wall gap.
    pub fn divider_arm() -> Self {
        let links = vec![0.26, 0.22, 0.34];
        let mut arm = PlanarArm {
            body_points: default_body_points(links.len()),
            links,
            base: vec![0.30, 0.10],
            limits: vec![
                (-std::f64::consts::PI, std::f64::consts::PI),
                (-2.9, 2.9),
                (-2.9, 2.9),
            ],
            queries: Vec::new(),
        };
        // Start: folded upward on the near side. Goal: wrist at the gap
        // entrance, last link threaded straight through to the far side.
        arm.queries.push(Query {
            start: vec![1.95, -1.2, 1.0],
            goal: vec![1.9091, -1.1288, -0.7803],
        });
        Self::PlanarArm(arm)
    }

    /// Number of joints (configuration-space dimension).
    pub fn n_joints(&self) -> usize {
        match self {
            Self::PlanarArm(a) => a.links.len(),
            Self::PointRobot(p) => p.point_limits.len(),
        }
    }

    /// Workspace dimension of body points.
    pub fn work_dim(&self) -> usize {
        match self {
            Self::PlanarArm(a) => a.base.len(),
            Self::PointRobot(p) => p.point_limits.len(),
        }
    }

    pub fn joint_limits(&self) -> &[(f64, f64)] {
        match self {
            Self::PlanarArm(a) => &a.limits,
            Self::PointRobot(p) => &p.point_limits,
        }
    }

    pub fn body_point_count(&self) -> usize {
        match self {
            Self::PlanarArm(a) => a.body_points.len(),
            Self::PointRobot(_) => 1,
        }
    }

    pub fn queries(&self) -> &[Query] {
        match self {
            Self::PlanarArm(a) => &a.queries,
            Self::PointRobot(_) => &[],
        }
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.n_joints()
            && q.iter()
                .zip(self.joint_limits())
                .all(|(qi, (lo, hi))| *qi >= *lo && *qi <= *hi)
    }

    pub fn clamp_to_limits(&self, q: &mut [f64]) {
        for (qi, (lo, hi)) in q.iter_mut().zip(self.joint_limits()) {
            *qi = qi.clamp(*lo, *hi);
        }
    }

    /// Euclidean diameter of the joint-limit box.
    pub fn cspace_diameter(&self) -> f64 {
        self.joint_limits()
            .iter()
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    fn check_config(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n_joints() {
            return Err(Error::DimensionMismatch {
                expected: self.n_joints(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Workspace position of body point `i` at configuration `q`.
    pub fn fk_body_point(&self, q: &[f64], i: usize) -> Result<Vec<f64>> {
        self.check_config(q)?;
        match self {
            Self::PointRobot(_) => {
                if i != 0 {
                    return Err(Error::IndexOutOfRange { index: i, len: 1 });
                }
                Ok(q.to_vec())
            }
            Self::PlanarArm(arm) => {
                let &(link, frac) = arm.body_points.get(i).ok_or(Error::IndexOutOfRange {
                    index: i,
                    len: arm.body_points.len(),
                })?;
                Ok(arm.point_on_link(q, link, frac))
            }
        }
    }

    /// Jacobian of body point `i` with respect to the joints, row-major
    /// `work_dim × n_joints`. Columns for joints distal to the point are zero.
    pub fn jacobian_body_point(&self, q: &[f64], i: usize) -> Result<Vec<f64>> {
        self.check_config(q)?;
        let n = self.n_joints();
        match self {
            Self::PointRobot(_) => {
                if i != 0 {
                    return Err(Error::IndexOutOfRange { index: i, len: 1 });
                }
                let mut jac = vec![0.0; n * n];
                for d in 0..n {
                    jac[d * n + d] = 1.0;
                }
                Ok(jac)
            }
            Self::PlanarArm(arm) => {
                let &(link, frac) = arm.body_points.get(i).ok_or(Error::IndexOutOfRange {
                    index: i,
                    len: arm.body_points.len(),
                })?;
                let mut jac = vec![0.0; 2 * n];
                let angles = arm.cumulative_angles(q);
                // d/dq_j of sum_{k>=j} len_k * (cos, sin)(theta_k), truncated
                // at the body point.
                for j in 0..=link {
                    let mut dx = 0.0;
                    let mut dy = 0.0;
                    for k in j..=link {
                        let span = if k == link { frac * arm.links[k] } else { arm.links[k] };
                        dx -= span * angles[k].sin();
                        dy += span * angles[k].cos();
                    }
                    jac[j] = dx;
                    jac[n + j] = dy;
                }
                Ok(jac)
            }
        }
    }

    /// Positions of all body points, flattened `(count × work_dim)`.
    pub fn fk_all_body_points(&self, q: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self {
            Self::PointRobot(_) => out.extend_from_slice(q),
            Self::PlanarArm(arm) => {
                let angles = arm.cumulative_angles(q);
                // Joint positions once, body points from the prefix.
                let joints = arm.joint_positions(&angles);
                for &(link, frac) in &arm.body_points {
                    let len = frac * arm.links[link];
                    out.push(joints[2 * link] + len * angles[link].cos());
                    out.push(joints[2 * link + 1] + len * angles[link].sin());
                }
            }
        }
    }
}

impl PlanarArm {
    fn cumulative_angles(&self, q: &[f64]) -> Vec<f64> {
        let mut angles = Vec::with_capacity(q.len());
        let mut acc = 0.0;
        for qi in q {
            acc += qi;
            angles.push(acc);
        }
        angles
    }

    /// Start position of every link, flattened pairs; index `2k` is the
    /// proximal end of link `k`.
    fn joint_positions(&self, angles: &[f64]) -> Vec<f64> {
        let mut joints = Vec::with_capacity(2 * self.links.len());
        let (mut x, mut y) = (self.base[0], self.base[1]);
        for (len, th) in self.links.iter().zip(angles) {
            joints.push(x);
            joints.push(y);
            x += len * th.cos();
            y += len * th.sin();
        }
        joints
    }

    fn point_on_link(&self, q: &[f64], link: usize, frac: f64) -> Vec<f64> {
        let angles = self.cumulative_angles(q);
        let (mut x, mut y) = (self.base[0], self.base[1]);
        for k in 0..link {
            x += self.links[k] * angles[k].cos();
            y += self.links[k] * angles[k].sin();
        }
        let len = frac * self.links[link];
        vec![x + len * angles[link].cos(), y + len * angles[link].sin()]
    }
}

/// Pulls the occupancy gradient into the configuration space:
/// `sum_i J_i(q)^T · grad_x f(psi_i(q))` over all body points, with a single
/// batched net-gradient call.
pub fn cspace_grad(m: &Manipulator, net: &OccupancyNet, q: &[f64]) -> Result<Vec<f64>> {
    let d = m.work_dim();
    if net.input_dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: net.input_dim(),
        });
    }
    let mut pts = Vec::new();
    m.fk_all_body_points(q, &mut pts);
    let grads = net.input_grad_batch(&pts)?;
    let n = m.n_joints();
    let mut out = vec![0.0; n];
    for i in 0..m.body_point_count() {
        let g = &grads[i * d..(i + 1) * d];
        let jac = m.jacobian_body_point(q, i)?;
        for j in 0..n {
            let mut acc = 0.0;
            for (r, gr) in g.iter().enumerate() {
                acc += jac[r * n + j] * gr;
            }
            out[j] += acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Layer, OccupancyNet};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_link() -> Manipulator {
        Manipulator::planar_arm(
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![(-3.2, 3.2), (-3.2, 3.2)],
            default_body_points(2),
        )
        .unwrap()
    }

    fn ee_index(m: &Manipulator) -> usize {
        match m {
            Manipulator::PlanarArm(a) => a
                .body_points
                .iter()
                .position(|bp| *bp == (a.links.len() - 1, 1.0))
                .unwrap(),
            Manipulator::PointRobot(_) => 0,
        }
    }

    /// Independent oracle: compose 3x3 homogeneous transforms
    /// Rot(q_k) * Trans(len_k, 0) and apply the prefix to the body point.
    fn fk_oracle(arm: &PlanarArm, q: &[f64], link: usize, frac: f64) -> [f64; 2] {
        fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
            let mut c = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for (k, bk) in b.iter().enumerate() {
                        c[i][j] += a[i][k] * bk[j];
                    }
                }
            }
            c
        }
        let mut t = [
            [1.0, 0.0, arm.base[0]],
            [0.0, 1.0, arm.base[1]],
            [0.0, 0.0, 1.0],
        ];
        for k in 0..=link {
            let (s, c) = q[k].sin_cos();
            let rot = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
            t = mat_mul(&t, &rot);
            let span = if k == link { frac * arm.links[k] } else { arm.links[k] };
            let trans = [[1.0, 0.0, span], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            t = mat_mul(&t, &trans);
        }
        [t[0][2], t[1][2]]
    }

    #[test]
    fn straight_chain() {
        let m = two_link();
        let p = m.fk_body_point(&[0.0, 0.0], ee_index(&m)).unwrap();
        assert!((p[0] - 2.0).abs() < 1e-15 && p[1].abs() < 1e-15);
    }

    #[test]
    fn quarter_turn() {
        let m = two_link();
        let p = m
            .fk_body_point(&[std::f64::consts::FRAC_PI_2, 0.0], ee_index(&m))
            .unwrap();
        assert!(p[0].abs() < 1e-15 && (p[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn jacobian_two_link_at_zero() {
        let m = two_link();
        let j = m.jacobian_body_point(&[0.0, 0.0], ee_index(&m)).unwrap();
        // Row-major 2x2: x-row [0, 0], y-row [2, 1].
        assert_eq!(j, vec![0.0, 0.0, 2.0, 1.0]);
    }

    #[test]
    fn distal_joint_column_is_zero() {
        let m = Manipulator::planar_arm(
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![(-3.2, 3.2), (-3.2, 3.2)],
            vec![(0, 0.0), (1, 1.0)],
        )
        .unwrap();
        let j = m.jacobian_body_point(&[0.7, -0.3], 0).unwrap();
        assert_eq!(j[1], 0.0);
        assert_eq!(j[3], 0.0);
        // And the whole point is stationary: fraction 0 on link 0 is the base.
        assert_eq!(j, vec![0.0; 4]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = Manipulator::planar_arm(
            vec![0.5, 0.4, 0.3],
            vec![0.1, -0.2],
            vec![(-3.2, 3.2); 3],
            default_body_points(3),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for _ in 0..50 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.5..2.5)).collect();
            for i in 0..m.body_point_count() {
                let jac = m.jacobian_body_point(&q, i).unwrap();
                for j in 0..3 {
                    let mut qp = q.clone();
                    let mut qm = q.clone();
                    qp[j] += h;
                    qm[j] -= h;
                    let fp = m.fk_body_point(&qp, i).unwrap();
                    let fm = m.fk_body_point(&qm, i).unwrap();
                    for r in 0..2 {
                        let fd = (fp[r] - fm[r]) / (2.0 * h);
                        assert!(
                            (jac[r * 3 + j] - fd).abs() < 1e-6,
                            "body {i} joint {j} row {r}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn point_robot_identity() {
        let m = Manipulator::point_robot(vec![(0.0, 1.0), (0.0, 1.0)]);
        let q = [0.3, 0.8];
        assert_eq!(m.fk_body_point(&q, 0).unwrap(), q.to_vec());
        assert_eq!(m.jacobian_body_point(&q, 0).unwrap(), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.n_joints(), 2);
        assert_eq!(m.body_point_count(), 1);
    }

    #[test]
    fn index_and_dimension_errors() {
        let m = two_link();
        assert!(matches!(
            m.fk_body_point(&[0.0, 0.0], 99),
            Err(crate::Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            m.fk_body_point(&[0.0], 0),
            Err(crate::Error::DimensionMismatch { .. })
        ));
    }

    /// sigma(4*y) has input gradient exactly (0, 1) at points with y-logit 0.
    #[test]
    fn one_link_pullback_hand_case() {
        let net = OccupancyNet::from_layers(
            vec![Layer {
                rows: 1,
                cols: 2,
                w: vec![0.0, 4.0],
                b: vec![0.0],
            }],
            None,
        )
        .unwrap();
        let m = Manipulator::planar_arm(
            vec![1.0],
            vec![0.0, 0.0],
            vec![(-3.2, 3.2)],
            vec![(0, 1.0)],
        )
        .unwrap();
        let g = cspace_grad(&m, &net, &[0.0]).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g[0] - 1.0).abs() < 1e-12, "got {}", g[0]);
    }

    #[test]
    fn pullback_matches_composed_finite_differences() {
        // Random small net; compare against central differences of
        // q -> sum_i f(psi_i(q)).
        let net = crate::net::init_net(
            &crate::net::NetArch::new(2, vec![8, 8]).unwrap(),
            77,
        )
        .unwrap();
        let m = Manipulator::planar_arm(
            vec![0.5, 0.4, 0.3],
            vec![0.0, 0.0],
            vec![(-3.2, 3.2); 3],
            default_body_points(3),
        )
        .unwrap();
        let composed = |q: &[f64]| -> f64 {
            let mut pts = Vec::new();
            m.fk_all_body_points(q, &mut pts);
            net.forward_batch(&pts).unwrap().iter().sum()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-5;
        for _ in 0..30 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let grad = cspace_grad(&m, &net, &q).unwrap();
            for j in 0..3 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[j] += h;
                qm[j] -= h;
                let fd = (composed(&qp) - composed(&qm)) / (2.0 * h);
                let denom = grad[j].abs().max(1e-8);
                assert!(
                    ((grad[j] - fd) / denom).abs() < 1e-3,
                    "joint {j}: {} vs {fd}",
                    grad[j]
                );
            }
        }
    }

    proptest! {
        #[test]
        fn fk_matches_transform_oracle(
            q0 in -3.0f64..3.0,
            q1 in -3.0f64..3.0,
            q2 in -3.0f64..3.0,
            frac in 0.0f64..1.0,
            link in 0usize..3,
        ) {
            let arm = PlanarArm {
                links: vec![0.6, 0.5, 0.4],
                base: vec![0.2, -0.1],
                limits: vec![(-3.2, 3.2); 3],
                body_points: vec![(link, frac), (2, 1.0)],
                queries: vec![],
            };
            let m = Manipulator::PlanarArm(arm.clone());
            let q = [q0, q1, q2];
            let got = m.fk_body_point(&q, 0).unwrap();
            let want = fk_oracle(&arm, &q, link, frac);
            prop_assert!((got[0] - want[0]).abs() < 1e-12);
            prop_assert!((got[1] - want[1]).abs() < 1e-12);
        }

        #[test]
        fn perturbing_distal_joint_keeps_proximal_points(
            q0 in -3.0f64..3.0,
            q1 in -3.0f64..3.0,
            dq in -1.0f64..1.0,
        ) {
            let m = Manipulator::planar_arm(
                vec![0.7, 0.5],
                vec![0.0, 0.0],
                vec![(-3.2, 3.2), (-4.2, 4.2)],
                vec![(0, 0.5), (1, 1.0)],
            ).unwrap();
            let a = m.fk_body_point(&[q0, q1], 0).unwrap();
            let b = m.fk_body_point(&[q0, q1 + dq], 0).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
