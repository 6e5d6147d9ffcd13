//! Minimal SVG emission: 2-D scene renders (environment, samples, path, arm
//! poses) and simple line charts for the report curves. No external deps;
//! the output is plain shapes with a fixed margin and a y-up data frame.

use std::fmt::Write as _;

use crate::geometry::{Environment, Obstacle};
use crate::kinematics::Manipulator;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 48.0;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Maps a data rectangle onto the pixel canvas (y flipped).
struct Frame {
    x0: f64,
    y0: f64,
    sx: f64,
    sy: f64,
}

impl Frame {
    fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Self {
        let dx = (xmax - xmin).max(1e-12);
        let dy = (ymax - ymin).max(1e-12);
        Self {
            x0: xmin,
            y0: ymin,
            sx: (W - 2.0 * MARGIN) / dx,
            sy: (H - 2.0 * MARGIN) / dy,
        }
    }

    fn x(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) * self.sx
    }

    fn y(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) * self.sy
    }
}

struct SvgDoc {
    body: String,
}

impl SvgDoc {
    fn new() -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
        );
        let _ = writeln!(body, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
        Self { body }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Renders the environment with optional sample scatter, path, and arm
/// poses along the path. Samples are (x, y, morphed?) workspace points.
pub fn render_scene(
    env: &Environment,
    robot: Option<&Manipulator>,
    path: &[Vec<f64>],
    samples: &[(f64, f64, bool)],
) -> String {
    let f = Frame::new(
        env.bounds.min[0],
        env.bounds.max[0],
        env.bounds.min[1],
        env.bounds.max[1],
    );
    let mut doc = SvgDoc::new();
    let b = &mut doc.body;
    let _ = writeln!(
        b,
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#333\"/>",
        f.x(env.bounds.min[0]),
        f.y(env.bounds.max[1]),
        (env.bounds.max[0] - env.bounds.min[0]) * f.sx,
        (env.bounds.max[1] - env.bounds.min[1]) * f.sy,
    );
    for ob in &env.obstacles {
        match ob {
            Obstacle::Box { min, max } => {
                let _ = writeln!(
                    b,
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#b0b0b0\"/>",
                    f.x(min[0]),
                    f.y(max[1]),
                    (max[0] - min[0]) * f.sx,
                    (max[1] - min[1]) * f.sy,
                );
            }
            Obstacle::Sphere { center, radius } => {
                let _ = writeln!(
                    b,
                    "<ellipse cx=\"{:.1}\" cy=\"{:.1}\" rx=\"{:.1}\" ry=\"{:.1}\" fill=\"#b0b0b0\"/>",
                    f.x(center[0]),
                    f.y(center[1]),
                    radius * f.sx,
                    radius * f.sy,
                );
            }
        }
    }
    for (x, y, morphed) in samples {
        let color = if *morphed { "#1f77b4" } else { "#ff7f0e" };
        let _ = writeln!(
            b,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"1.2\" fill=\"{color}\" fill-opacity=\"0.5\"/>",
            f.x(*x),
            f.y(*y)
        );
    }
    match robot {
        Some(Manipulator::PlanarArm(arm)) if !path.is_empty() => {
            // Arm silhouettes along the path, end-effector trace on top.
            let n_poses = 12.min(path.len());
            let mut trace = String::new();
            for (k, q) in path.iter().enumerate() {
                let mut pts = vec![arm.base.clone()];
                let mut acc = 0.0;
                let (mut x, mut y) = (arm.base[0], arm.base[1]);
                for (len, qi) in arm.links.iter().zip(q) {
                    acc += qi;
                    x += len * acc.cos();
                    y += len * acc.sin();
                    pts.push(vec![x, y]);
                }
                let _ = write!(trace, "{:.1},{:.1} ", f.x(x), f.y(y));
                if k % (path.len() / n_poses).max(1) == 0 || k == path.len() - 1 {
                    let poly: String = pts
                        .iter()
                        .map(|p| format!("{:.1},{:.1}", f.x(p[0]), f.y(p[1])))
                        .collect::<Vec<_>>()
                        .join(" ");
                    let _ = writeln!(
                        b,
                        "<polyline points=\"{poly}\" fill=\"none\" stroke=\"#2ca02c\" stroke-width=\"1.5\" stroke-opacity=\"0.6\"/>"
                    );
                }
            }
            let _ = writeln!(
                b,
                "<polyline points=\"{trace}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>"
            );
        }
        _ if !path.is_empty() => {
            let poly: String = path
                .iter()
                .map(|p| format!("{:.1},{:.1}", f.x(p[0]), f.y(p[1])))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(
                b,
                "<polyline points=\"{poly}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>"
            );
        }
        _ => {}
    }
    for q in &env.queries {
        if q.start.len() == 2 {
            let _ = writeln!(
                b,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"#2ca02c\"/>",
                f.x(q.start[0]),
                f.y(q.start[1])
            );
            let _ = writeln!(
                b,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"#d62728\"/>",
                f.x(q.goal[0]),
                f.y(q.goal[1])
            );
        }
    }
    let _ = writeln!(
        b,
        "<text x=\"{MARGIN}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
        env.name
    );
    doc.finish()
}

/// One labeled polyline.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Simple line chart with axes, tick labels at the extremes, and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut doc = SvgDoc::new();
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (0.0f64, f64::NEG_INFINITY);
    for s in series {
        for (x, y) in &s.points {
            xmin = xmin.min(*x);
            xmax = xmax.max(*x);
            ymin = ymin.min(*y);
            ymax = ymax.max(*y);
        }
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let f = Frame::new(xmin, xmax, ymin, ymax);
    let b = &mut doc.body;
    let _ = writeln!(
        b,
        "<line x1=\"{0:.1}\" y1=\"{1:.1}\" x2=\"{2:.1}\" y2=\"{1:.1}\" stroke=\"#333\"/>",
        f.x(xmin),
        f.y(ymin),
        f.x(xmax)
    );
    let _ = writeln!(
        b,
        "<line x1=\"{0:.1}\" y1=\"{1:.1}\" x2=\"{0:.1}\" y2=\"{2:.1}\" stroke=\"#333\"/>",
        f.x(xmin),
        f.y(ymin),
        f.y(ymax)
    );
    let _ = writeln!(
        b,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{xmin:.3}</text>",
        f.x(xmin) - 30.0,
        f.y(ymin) + 14.0
    );
    let _ = writeln!(
        b,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{xmax:.3}</text>",
        f.x(xmax) - 10.0,
        f.y(ymin) + 14.0
    );
    let _ = writeln!(
        b,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{ymax:.2}</text>",
        f.x(xmin) - 38.0,
        f.y(ymax) + 4.0
    );
    let _ = writeln!(
        b,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{x_label}</text>",
        (f.x(xmin) + f.x(xmax)) / 2.0 - 30.0,
        H - 12.0
    );
    let _ = writeln!(
        b,
        "<text x=\"14\" y=\"{0:.1}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {0:.1})\">{y_label}</text>",
        (f.y(ymin) + f.y(ymax)) / 2.0
    );
    let _ = writeln!(
        b,
        "<text x=\"{MARGIN}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">{title}</text>"
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.points.is_empty() {
            let poly: String = s
                .points
                .iter()
                .map(|(x, y)| format!("{:.1},{:.1}", f.x(*x), f.y(*y)))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(
                b,
                "<polyline points=\"{poly}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>"
            );
        }
        let ly = 34.0 + 16.0 * i as f64;
        let _ = writeln!(
            b,
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>",
            W - 220.0,
            W - 196.0
        );
        let _ = writeln!(
            b,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            W - 190.0,
            ly + 4.0,
            s.label
        );
    }
    doc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_benchmark_env;

    #[test]
    fn scene_contains_obstacles_and_path() {
        let env = make_benchmark_env("clutter2d").unwrap();
        let path = vec![vec![0.05, 0.05], vec![0.5, 0.6], vec![0.95, 0.95]];
        let svg = render_scene(&env, None, &path, &[(0.3, 0.3, true)]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<ellipse").count(), env.obstacles.len());
        assert!(svg.contains("<polyline"));
    }

    #[test]
    fn chart_has_one_polyline_per_series() {
        let svg = line_chart(
            "t",
            "x",
            "y",
            &[
                Series {
                    label: "a".into(),
                    points: vec![(0.0, 0.0), (1.0, 1.0)],
                },
                Series {
                    label: "b".into(),
                    points: vec![(0.0, 1.0), (1.0, 0.0)],
                },
            ],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">a</text>"));
    }

    #[test]
    fn empty_chart_is_valid() {
        let svg = line_chart("empty", "x", "y", &[]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
