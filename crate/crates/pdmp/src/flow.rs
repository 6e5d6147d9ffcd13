//! The diffeomorphism and its approximate inverse, built by numerically
//! integrating the (negative) cost-gradient flow.
//!
//! Forward morphing runs explicit Euler on `-grad f_c`; the inverse runs the
//! positive field and is exact only in the continuous limit. Per-step
//! gradients are clipped by norm, which bounds the displacement per step and
//! keeps the discrete map injective for small enough steps.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kinematics::Manipulator;
use crate::net::OccupancyNet;

/// Batched evaluation contract for the vector field `grad f_c`. Must be
/// pure, deterministic, and thread-safe; per-point results must not depend
/// on what else is in the batch.
pub trait CostGradField: Send + Sync {
    fn dim(&self) -> usize;

    /// Gradients for a flat batch (`count × dim`), same layout as the input.
    fn grad_batch(&self, points: &[f64]) -> Result<Vec<f64>>;
}

/// Integration settings for the flow map.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FlowSpec {
    /// Total flow time `t`; zero disables morphing entirely.
    pub horizon_t: f64,
    /// Euler step count `K`; the step size is `t / K`.
    pub steps: usize,
    /// Per-step gradient norm bound `g_max` (rescale when exceeded).
    pub grad_clip: f64,
    /// Scalar multiplier on the cost gradient, applied before clipping.
    pub lambda: f64,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Midpoint,
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            horizon_t: 1.0,
            steps: 20,
            grad_clip: 1.0,
            lambda: 1.0,
            integrator: Integrator::Euler,
        }
    }
}

impl FlowSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.horizon_t.is_finite()
            && self.horizon_t >= 0.0
            && (self.horizon_t == 0.0 || self.steps >= 1)
            && self.grad_clip > 0.0
            && self.lambda.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad flow spec {self:?}")))
        }
    }

    pub fn step_size(&self) -> f64 {
        if self.horizon_t == 0.0 {
            0.0
        } else {
            self.horizon_t / self.steps as f64
        }
    }
}

#[derive(Clone, Copy)]
enum Direction {
    /// `y - h * g`: descend the cost.
    Forward,
    /// `z + h * g`: the inverse flow.
    Inverse,
}

/// Scale by lambda, then rescale to the clip norm if exceeded. Returns the
/// signed step factor to apply to each gradient component.
#[inline]
fn clip_factor(g: &[f64], lambda: f64, g_max: f64) -> Result<f64> {
    let mut norm2 = 0.0;
    for v in g {
        if !v.is_finite() {
            return Err(Error::NonFiniteField);
        }
        norm2 += lambda * v * lambda * v;
    }
    let norm = norm2.sqrt();
    if norm > g_max {
        Ok(lambda * g_max / norm)
    } else {
        Ok(lambda)
    }
}

fn apply_step(points: &mut [f64], grads: &[f64], dim: usize, h: f64, spec: &FlowSpec, dir: Direction) -> Result<()> {
    let sign = match dir {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    for (p, g) in points.chunks_mut(dim).zip(grads.chunks(dim)) {
        let f = clip_factor(g, spec.lambda, spec.grad_clip)?;
        for (pj, gj) in p.iter_mut().zip(g) {
            *pj += sign * h * f * gj;
        }
    }
    Ok(())
}

fn integrate_chunk(
    field: &dyn CostGradField,
    points: &mut [f64],
    spec: &FlowSpec,
    dir: Direction,
) -> Result<()> {
    if spec.horizon_t == 0.0 || points.is_empty() {
        return Ok(());
    }
    let dim = field.dim();
    let h = spec.step_size();
    match spec.integrator {
        Integrator::Euler => {
            for _ in 0..spec.steps {
                let grads = field.grad_batch(points)?;
                apply_step(points, &grads, dim, h, spec, dir)?;
            }
        }
        Integrator::Midpoint => {
            let mut mid = vec![0.0; points.len()];
            for _ in 0..spec.steps {
                let grads = field.grad_batch(points)?;
                mid.copy_from_slice(points);
                apply_step(&mut mid, &grads, dim, 0.5 * h, spec, dir)?;
                let grads_mid = field.grad_batch(&mid)?;
                apply_step(points, &grads_mid, dim, h, spec, dir)?;
            }
        }
    }
    Ok(())
}

/// The flow map `phi`: `K` explicit Euler steps along the clipped negative
/// field. Identity when `horizon_t` is zero.
pub fn morph_forward(field: &dyn CostGradField, y: &[f64], spec: &FlowSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut out = y.to_vec();
    integrate_chunk(field, &mut out, spec, Direction::Forward)?;
    Ok(out)
}

/// The approximate inverse: Euler steps along the positive field. Exact only
/// in the continuous limit; the round-trip error shrinks at first order in
/// the step size.
pub fn morph_inverse(field: &dyn CostGradField, z: &[f64], spec: &FlowSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut out = z.to_vec();
    integrate_chunk(field, &mut out, spec, Direction::Inverse)?;
    Ok(out)
}

/// Morphs a flat batch (`count × dim`), splitting it across `workers`
/// threads. The result is bitwise identical to the sequential per-point map
/// for any worker count: per-point arithmetic never depends on the batch
/// composition. The field is invoked once per Euler step over each worker's
/// whole chunk.
pub fn morph_batch(
    field: &dyn CostGradField,
    points: &[f64],
    spec: &FlowSpec,
    workers: usize,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if workers < 1 {
        return Err(Error::InvalidConfig("workers must be >= 1".into()));
    }
    let dim = field.dim();
    if points.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: points.len() % dim,
        });
    }
    let mut out = points.to_vec();
    let count = points.len() / dim;
    if workers == 1 || count < 2 * workers {
        integrate_chunk(field, &mut out, spec, Direction::Forward)?;
        return Ok(out);
    }
    let per = count.div_ceil(workers) * dim;
    let mut result = Ok(());
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk in out.chunks_mut(per) {
            handles.push(scope.spawn(move || integrate_chunk(field, chunk, spec, Direction::Forward)));
        }
        for h in handles {
            let r = h.join().expect("morph worker panicked");
            if r.is_err() && result.is_ok() {
                result = r;
            }
        }
    });
    result.map(|()| out)
}

/// Smooth low-occupancy gate for net-backed fields: the gradient is scaled
/// by `sigma((p - threshold) / width)`, so confidently-free regions become
/// stationary under the flow while occupied bands still evacuate at full
/// speed. The gated field equals `grad W(p)` for a smooth increasing `W`
/// (the integral of the gate), so it is still a cost-gradient field with
/// Lipschitz smoothness and the flow remains a diffeomorphism generator.
/// Without it, learned gradient tails slowly drain thin free pockets next
/// to obstacles, which thins the morphed support exactly where planners
/// need it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FieldGate {
    pub threshold: f64,
    pub width: f64,
}

impl Default for FieldGate {
    fn default() -> Self {
        Self {
            threshold: 0.25,
            width: 0.06,
        }
    }
}

impl FieldGate {
    #[inline]
    fn factor(&self, p: f64) -> f64 {
        1.0 / (1.0 + (-(p - self.threshold) / self.width).exp())
    }
}

/// Task-space occupancy field: the net's input gradient, optionally gated.
pub struct NetField {
    net: Arc<OccupancyNet>,
    gate: Option<FieldGate>,
}

impl NetField {
    pub fn new(net: Arc<OccupancyNet>) -> Self {
        Self { net, gate: None }
    }

    pub fn gated(net: Arc<OccupancyNet>, gate: FieldGate) -> Self {
        Self {
            net,
            gate: Some(gate),
        }
    }
}

impl CostGradField for NetField {
    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn grad_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        match self.gate {
            None => self.net.input_grad_batch(points),
            Some(gate) => {
                let d = self.net.input_dim();
                let (probs, mut grads) = self.net.forward_and_input_grad_batch(points)?;
                for (s, p) in probs.iter().enumerate() {
                    let w = gate.factor(*p);
                    for g in &mut grads[s * d..(s + 1) * d] {
                        *g *= w;
                    }
                }
                Ok(grads)
            }
        }
    }
}

/// Configuration-space field: the occupancy gradient at every body point,
/// pulled through the transpose kinematic Jacobians. An optional gate
/// applies per body point.
pub struct PulledField {
    net: Arc<OccupancyNet>,
    robot: Manipulator,
    gate: Option<FieldGate>,
}

impl PulledField {
    pub fn new(net: Arc<OccupancyNet>, robot: Manipulator) -> Self {
        Self {
            net,
            robot,
            gate: None,
        }
    }

    pub fn gated(net: Arc<OccupancyNet>, robot: Manipulator, gate: FieldGate) -> Self {
        Self {
            net,
            robot,
            gate: Some(gate),
        }
    }
}

impl CostGradField for PulledField {
    fn dim(&self) -> usize {
        self.robot.n_joints()
    }

    fn grad_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        // Body points of every configuration in the chunk go through the
        // net in a single batched gradient call; the per-config transpose
        // Jacobians then pull them back into C-space.
        let n = self.robot.n_joints();
        let d = self.robot.work_dim();
        let b = self.robot.body_point_count();
        let count = points.len() / n;
        let mut body = Vec::with_capacity(count * b * d);
        let mut scratch = Vec::new();
        for q in points.chunks(n) {
            self.robot.fk_all_body_points(q, &mut scratch);
            body.extend_from_slice(&scratch);
        }
        let (probs, mut grads) = self.net.forward_and_input_grad_batch(&body)?;
        if let Some(gate) = self.gate {
            for (s, p) in probs.iter().enumerate() {
                let w = gate.factor(*p);
                for g in &mut grads[s * d..(s + 1) * d] {
                    *g *= w;
                }
            }
        }
        let mut out = vec![0.0; points.len()];
        for (ci, q) in points.chunks(n).enumerate() {
            let oq = &mut out[ci * n..(ci + 1) * n];
            for i in 0..b {
                let g = &grads[(ci * b + i) * d..(ci * b + i + 1) * d];
                let jac = self.robot.jacobian_body_point(q, i)?;
                for j in 0..n {
                    let mut acc = 0.0;
                    for (r, gr) in g.iter().enumerate() {
                        acc += jac[r * n + j] * gr;
                    }
                    oq[j] += acc;
                }
            }
        }
        Ok(out)
    }
}

/// `grad (1/2)|y|^2 = y`; the closed-form test field with solution
/// `y_k = (1 - h)^k y_0`.
pub struct QuadraticField {
    pub dim: usize,
}

impl CostGradField for QuadraticField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn grad_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        Ok(points.to_vec())
    }
}

/// Identically zero field; the flow is the identity map.
pub struct ZeroField {
    pub dim: usize,
}

impl CostGradField for ZeroField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn grad_batch(&self, points: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; points.len()])
    }
}
