//! Workspaces, exact obstacle geometry, the ground-truth collision oracle,
//! and synthetic occupancy datasets.
//!
//! Obstacles are closed sets: a point on the boundary counts as occupied.
//! The same convention is used everywhere a collision decision is made, so
//! planner paths cannot graze a surface.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Manipulator;

/// Axis-aligned box given by its min/max corners (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Aabb {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::DimensionMismatch {
                expected: min.len(),
                got: max.len(),
            });
        }
        if min.is_empty() {
            return Err(Error::InvalidEnvironment("empty bounds".into()));
        }
        for (lo, hi) in min.iter().zip(&max) {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidEnvironment(format!(
                    "bad box extent [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Closed containment: boundary points are inside.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.min.iter().zip(&self.max))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn extent(&self) -> Vec<f64> {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(lo, hi)| hi - lo)
            .collect()
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        self.extent().iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    /// One uniform draw over the box.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(lo, hi)| lo + rng.gen::<f64>() * (hi - lo))
            .collect()
    }
}

/// Exact obstacle primitive. Closed: boundaries count as occupied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Obstacle {
    Box { min: Vec<f64>, max: Vec<f64> },
    Sphere { center: Vec<f64>, radius: f64 },
}

impl Obstacle {
    pub fn dim(&self) -> usize {
        match self {
            Obstacle::Box { min, .. } => min.len(),
            Obstacle::Sphere { center, .. } => center.len(),
        }
    }

    /// Closed membership test.
    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            Obstacle::Box { min, max } => p
                .iter()
                .zip(min.iter().zip(max))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi),
            Obstacle::Sphere { center, radius } => {
                let d2: f64 = p
                    .iter()
                    .zip(center)
                    .map(|(x, c)| (x - c) * (x - c))
                    .sum();
                d2 <= radius * radius
            }
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Obstacle::Box { min, max } => {
                if min.len() != dim || max.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: min.len().max(max.len()),
                    });
                }
                for (lo, hi) in min.iter().zip(max) {
                    if !lo.is_finite() || !hi.is_finite() || lo > hi {
                        return Err(Error::InvalidEnvironment(
                            "box obstacle with min > max".into(),
                        ));
                    }
                }
            }
            Obstacle::Sphere { center, radius } => {
                if center.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: center.len(),
                    });
                }
                if !(*radius > 0.0) || !radius.is_finite() || center.iter().any(|c| !c.is_finite())
                {
                    return Err(Error::InvalidEnvironment(
                        "sphere obstacle needs finite center and radius > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Whether the obstacle touches the workspace box at all.
    fn intersects(&self, bounds: &Aabb) -> bool {
        match self {
            Obstacle::Box { min, max } => min
                .iter()
                .zip(max)
                .zip(bounds.min.iter().zip(&bounds.max))
                .all(|((lo, hi), (blo, bhi))| *hi >= *blo && *lo <= *bhi),
            Obstacle::Sphere { center, radius } => {
                // Distance from center to the box, squared.
                let d2: f64 = center
                    .iter()
                    .zip(bounds.min.iter().zip(&bounds.max))
                    .map(|(c, (lo, hi))| {
                        let gap = if c < lo {
                            lo - c
                        } else if c > hi {
                            c - hi
                        } else {
                            0.0
                        };
                        gap * gap
                    })
                    .sum();
                d2 <= radius * radius
            }
        }
    }
}

/// A start/goal pair. Point-robot queries hold workspace coordinates; a
/// manipulator carries joint-space queries of its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
}

/// Exact world description: workspace bounds, obstacle list, and the
/// documented planning queries. Immutable after construction and safe to
/// share across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    pub name: String,
    pub bounds: Aabb,
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub queries: Vec<Query>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manipulator: Option<Manipulator>,
}

impl Environment {
    /// Validates the construction invariants: every obstacle intersects the
    /// bounds and some free space remains (probed on a coarse grid).
    pub fn new(
        name: impl Into<String>,
        bounds: Aabb,
        obstacles: Vec<Obstacle>,
        queries: Vec<Query>,
    ) -> Result<Self> {
        let dim = bounds.dim();
        for ob in &obstacles {
            ob.validate(dim)?;
            if !ob.intersects(&bounds) {
                return Err(Error::InvalidEnvironment(
                    "obstacle lies entirely outside bounds".into(),
                ));
            }
        }
        let env = Self {
            name: name.into(),
            bounds,
            obstacles,
            queries,
            manipulator: None,
        };
        if !env.has_free_space() {
            return Err(Error::InvalidEnvironment("no free space left".into()));
        }
        Ok(env)
    }

    fn has_free_space(&self) -> bool {
        // 17^d grid probe; enough for the primitive shapes used here.
        let dim = self.bounds.dim();
        let steps = 17usize;
        let total = steps.pow(dim as u32);
        let mut p = vec![0.0; dim];
        for idx in 0..total {
            let mut rest = idx;
            for d in 0..dim {
                let k = rest % steps;
                rest /= steps;
                p[d] = self.bounds.min[d]
                    + (k as f64 + 0.5) / steps as f64 * (self.bounds.max[d] - self.bounds.min[d]);
            }
            if !point_in_collision(self, &p) {
                return true;
            }
        }
        false
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Environment = serde_json::from_str(text)?;
        // Re-run the construction checks on data read from disk.
        let rebuilt = Environment::new(
            env.name.clone(),
            env.bounds.clone(),
            env.obstacles.clone(),
            env.queries.clone(),
        )?;
        Ok(Self {
            manipulator: env.manipulator,
            ..rebuilt
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Ground-truth occupancy: true iff `p` lies inside any obstacle.
/// Boundary points count as occupied; workspace bounds are not consulted.
pub fn point_in_collision(env: &Environment, p: &[f64]) -> bool {
    env.obstacles.iter().any(|ob| ob.contains(p))
}

/// Labeled occupancy samples drawn uniformly over an environment's bounds.
/// Points are stored flat, row-major (`len * dim`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupancyDataset {
    pub dim: usize,
    pub points: Vec<f64>,
    pub labels: Vec<u8>,
    pub seed: u64,
    /// Sampling domain; training derives its input normalization from it.
    pub bounds: Aabb,
}

impl OccupancyDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().map(|&l| l as usize).sum::<usize>() as f64 / self.labels.len() as f64
    }

    /// CSV export with header `x1..xd,label`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let header: Vec<String> = (1..=self.dim)
            .map(|i| format!("x{i}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let coords: Vec<String> = self.point(i).iter().map(|x| x.to_string()).collect();
            writeln!(w, "{},{}", coords.join(","), self.labels[i])?;
        }
        Ok(())
    }
}

/// Draws `n` points uniformly over `env.bounds` and labels them with the
/// exact collision oracle. Pure function of `(env, n, seed)`.
pub fn generate_dataset(env: &Environment, n: usize, seed: u64) -> OccupancyDataset {
    assert!(n >= 1, "dataset size must be at least 1");
    let dim = env.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let p = env.bounds.sample(&mut rng);
        labels.push(point_in_collision(env, &p) as u8);
        points.extend_from_slice(&p);
    }
    OccupancyDataset {
        dim,
        points,
        labels,
        seed,
        bounds: env.bounds.clone(),
    }
}

/// Expanded copy of `env` whose margin band outside the original bounds is
/// filled with slab obstacles. A net trained on this world learns that
/// leaving the workspace is occupied, so the morph also steers arm body
/// points back inside the bounds that the exact validity check enforces.
pub fn with_boundary_walls(env: &Environment, margin: f64) -> Result<Environment> {
    assert!(margin > 0.0);
    let dim = env.dim();
    let min: Vec<f64> = env.bounds.min.iter().map(|v| v - margin).collect();
    let max: Vec<f64> = env.bounds.max.iter().map(|v| v + margin).collect();
    let mut obstacles = env.obstacles.clone();
    for d in 0..dim {
        let mut lo_max = max.clone();
        lo_max[d] = env.bounds.min[d];
        obstacles.push(Obstacle::Box {
            min: min.clone(),
            max: lo_max,
        });
        let mut hi_min = min.clone();
        hi_min[d] = env.bounds.max[d];
        obstacles.push(Obstacle::Box {
            min: hi_min,
            max: max.clone(),
        });
    }
    let mut walled = Environment::new(
        format!("{}+walls", env.name),
        Aabb::new(min, max)?,
        obstacles,
        env.queries.clone(),
    )?;
    walled.manipulator = env.manipulator.clone();
    Ok(walled)
}

/// Names accepted by [`make_benchmark_env`].
pub const BENCHMARK_ENVS: [&str; 3] = ["divider2d", "shelves2d", "clutter2d"];

/// Builds one of the documented benchmark worlds.
///
/// * `divider2d`: a thick divider wall with one narrow gap on a cluttered
///   table; carries a 3-link planar arm whose only way across is through
///   the gap.
/// * `shelves2d`: nested compartments with small offset openings.
/// * `clutter2d`: twelve scattered discs.
pub fn make_benchmark_env(name: &str) -> Result<Environment> {
    match name {
        "divider2d" => divider2d(),
        "shelves2d" => shelves2d(),
        "clutter2d" => clutter2d(),
        other => Err(Error::UnknownEnvironment(other.to_string())),
    }
}

fn bx(min: [f64; 2], max: [f64; 2]) -> Obstacle {
    Obstacle::Box {
        min: min.to_vec(),
        max: max.to_vec(),
    }
}

fn disc(center: [f64; 2], radius: f64) -> Obstacle {
    Obstacle::Sphere {
        center: center.to_vec(),
        radius,
    }
}

fn divider2d() -> Result<Environment> {
    let bounds = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    let obstacles = vec![
        // Divider: 0.24 m thick wall, gap y in [0.475, 0.525] (5% of height).
        bx([0.38, 0.0], [0.62, 0.475]),
        bx([0.38, 0.525], [0.62, 1.0]),
        // Table clutter on both sides, kept clear of the arm's base column
        // and its approach corridor to the gap. Items are sized so their
        // cores stay occupied under the learned-gradient morph while the
        // boundary bands evacuate.
        bx([0.04, 0.04], [0.22, 0.20]),
        disc([0.08, 0.46], 0.10),
        bx([0.06, 0.86], [0.26, 1.0]),
        disc([0.82, 0.18], 0.115),
        disc([0.78, 0.38], 0.115),
        bx([0.66, 0.70], [0.85, 0.89]),
    ];
    let queries = vec![Query {
        start: vec![0.06, 0.30],
        goal: vec![0.92, 0.62],
    }];
    let mut env = Environment::new("divider2d", bounds, obstacles, queries)?;
    env.manipulator = Some(Manipulator::divider_arm());
    Ok(env)
}

fn shelves2d() -> Result<Environment> {
    let bounds = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    let obstacles = vec![
        // Outer shell.
        bx([0.15, 0.10], [0.19, 0.90]),
        bx([0.15, 0.10], [0.85, 0.14]),
        bx([0.15, 0.86], [0.85, 0.90]),
        // Right wall, opening y in [0.22, 0.34] into the lower compartment.
        bx([0.81, 0.10], [0.85, 0.22]),
        bx([0.81, 0.34], [0.85, 0.90]),
        // Shelf splitting the interior, opening x in [0.37, 0.49].
        bx([0.19, 0.48], [0.37, 0.52]),
        bx([0.49, 0.48], [0.81, 0.52]),
    ];
    let queries = vec![Query {
        start: vec![0.93, 0.28],
        goal: vec![0.50, 0.70],
    }];
    Environment::new("shelves2d", bounds, obstacles, queries)
}

fn clutter2d() -> Result<Environment> {
    let bounds = Aabb::new(vec![0.0, 0.0], vec![1.0, 1.0])?;
    let obstacles = vec![
        disc([0.22, 0.25], 0.090),
        disc([0.45, 0.15], 0.080),
        disc([0.70, 0.25], 0.090),
        disc([0.85, 0.45], 0.075),
        disc([0.30, 0.50], 0.085),
        disc([0.55, 0.42], 0.080),
        disc([0.15, 0.70], 0.080),
        disc([0.42, 0.72], 0.090),
        disc([0.68, 0.62], 0.075),
        disc([0.85, 0.80], 0.080),
        disc([0.55, 0.90], 0.070),
        disc([0.08, 0.45], 0.060),
    ];
    let queries = vec![Query {
        start: vec![0.05, 0.05],
        goal: vec![0.95, 0.95],
    }];
    Environment::new("clutter2d", bounds, obstacles, queries)
}
