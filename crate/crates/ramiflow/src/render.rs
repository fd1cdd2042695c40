//! Deterministic SVG rendering of graphs, plans and consolidated fluxes.
//!
//! Output is plain text built in a fixed order with fixed-precision
//! formatting, so identical inputs produce byte-identical documents.

use thiserror::Error;

use crate::graph::{ConsolidatedFlux, TransportGraph};
use crate::measures::{DiscreteMeasure, Point};
use crate::patterns::IrrigationPlan;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("cannot render dimension {0}; pass the projection flag to draw the first two coordinates")]
    UnsupportedDimension(usize),
}

/// Anything the renderer can draw.
pub enum Renderable<'a> {
    Graph(&'a TransportGraph),
    Plan(&'a IrrigationPlan),
    Flux(&'a ConsolidatedFlux),
}

#[derive(Debug, Clone)]
pub struct RenderStyle {
    /// Canvas width in pixels (height follows the aspect ratio).
    pub width: f64,
    /// Margin fraction around the bounding box.
    pub margin: f64,
    /// Stroke width of the heaviest edge, in pixels.
    pub max_stroke: f64,
    /// Project higher-dimensional instances onto their first two
    /// coordinates instead of failing.
    pub project: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            width: 640.0,
            margin: 0.1,
            max_stroke: 10.0,
            project: false,
        }
    }
}

struct Canvas {
    svg: String,
    scale: f64,
    offset: (f64, f64),
    height: f64,
}

impl Canvas {
    fn map(&self, p: &Point) -> (f64, f64) {
        let x = (p.0[0] - self.offset.0) * self.scale;
        let y = self.height - (p.0[1] - self.offset.1) * self.scale;
        (x, y)
    }
}

pub fn render_svg(object: &Renderable<'_>, style: &RenderStyle) -> Result<String, RenderError> {
    let dim = match object {
        Renderable::Graph(g) => g.dim(),
        Renderable::Plan(p) => p.dim(),
        Renderable::Flux(f) => f.dim,
    };
    if dim != 2 && !(style.project && dim > 2) {
        return Err(RenderError::UnsupportedDimension(dim));
    }

    // Bounding box over everything drawn.
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut collect = |p: &Point| points.push((p.0[0], p.0[1]));
    match object {
        Renderable::Graph(g) => {
            for v in g.vertices() {
                collect(v);
            }
            for m in [g.source(), g.sink()] {
                for a in m.atoms() {
                    collect(&a.pos);
                }
            }
        }
        Renderable::Plan(plan) => {
            for path in plan.paths() {
                for p in &path.points {
                    collect(p);
                }
            }
        }
        Renderable::Flux(f) => {
            for s in &f.segments {
                collect(&s.a);
                collect(&s.b);
            }
        }
    }
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (-1.0f64, 1.0f64, -1.0f64, 1.0f64);
    for &(x, y) in &points {
        lo_x = lo_x.min(x);
        hi_x = hi_x.max(x);
        lo_y = lo_y.min(y);
        hi_y = hi_y.max(y);
    }
    let span_x = (hi_x - lo_x).max(1e-9);
    let span_y = (hi_y - lo_y).max(1e-9);
    let pad = style.margin * span_x.max(span_y);
    let (lo_x, hi_x, lo_y, hi_y) = (lo_x - pad, hi_x + pad, lo_y - pad, hi_y + pad);
    let scale = style.width / (hi_x - lo_x);
    let height = (hi_y - lo_y) * scale;

    let mut canvas = Canvas {
        svg: String::new(),
        scale,
        offset: (lo_x, lo_y),
        height,
    };
    canvas.svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.1}\" height=\"{:.1}\" \
         viewBox=\"0 0 {:.1} {:.1}\">\n",
        style.width, height, style.width, height
    ));
    canvas
        .svg
        .push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Coordinate axes through the origin.
    let axis = |canvas: &Canvas, a: Point, b: Point| {
        let (x1, y1) = canvas.map(&a);
        let (x2, y2) = canvas.map(&b);
        format!(
            "<line x1=\"{x1:.4}\" y1=\"{y1:.4}\" x2=\"{x2:.4}\" y2=\"{y2:.4}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n"
        )
    };
    if lo_y <= 0.0 && hi_y >= 0.0 {
        let line = axis(
            &canvas,
            Point(vec![lo_x, 0.0]),
            Point(vec![hi_x, 0.0]),
        );
        canvas.svg.push_str(&line);
    }
    if lo_x <= 0.0 && hi_x >= 0.0 {
        let line = axis(
            &canvas,
            Point(vec![0.0, lo_y]),
            Point(vec![0.0, hi_y]),
        );
        canvas.svg.push_str(&line);
    }

    match object {
        Renderable::Graph(g) => {
            let max_w = g
                .edges()
                .iter()
                .map(|e| e.weight)
                .fold(0.0f64, f64::max)
                .max(1e-12);
            for e in g.edges() {
                draw_arrow(
                    &mut canvas,
                    &g.vertices()[e.tail],
                    &g.vertices()[e.head],
                    e.weight / max_w * style.max_stroke,
                    "#336699",
                );
            }
            draw_measure(&mut canvas, g.source(), "#22aa77");
            draw_measure(&mut canvas, g.sink(), "#cc5544");
        }
        Renderable::Plan(plan) => {
            let max_w = plan
                .paths()
                .iter()
                .map(|p| p.weight)
                .fold(0.0f64, f64::max)
                .max(1e-12);
            for path in plan.paths() {
                let stroke = path.weight / max_w * style.max_stroke;
                for seg in path.points.windows(2) {
                    draw_arrow(&mut canvas, &seg[0], &seg[1], stroke, "#663399");
                }
            }
        }
        Renderable::Flux(f) => {
            let max_t = f
                .segments
                .iter()
                .map(|s| s.theta_norm())
                .fold(0.0f64, f64::max)
                .max(1e-12);
            for s in &f.segments {
                let (from, to) = if s.scalar >= 0.0 {
                    (s.a.clone(), s.b.clone())
                } else {
                    (s.b.clone(), s.a.clone())
                };
                draw_arrow(
                    &mut canvas,
                    &from,
                    &to,
                    s.theta_norm() / max_t * style.max_stroke,
                    "#996600",
                );
            }
        }
    }

    canvas.svg.push_str("</svg>\n");
    Ok(canvas.svg)
}

fn draw_arrow(canvas: &mut Canvas, from: &Point, to: &Point, stroke: f64, colour: &str) {
    let (x1, y1) = canvas.map(from);
    let (x2, y2) = canvas.map(to);
    let stroke = stroke.max(0.4);
    canvas.svg.push_str(&format!(
        "<line x1=\"{x1:.4}\" y1=\"{y1:.4}\" x2=\"{x2:.4}\" y2=\"{y2:.4}\" \
         stroke=\"{colour}\" stroke-width=\"{stroke:.4}\" stroke-linecap=\"round\"/>\n"
    ));
    // Arrowhead at two thirds of the way.
    let (dx, dy) = (x2 - x1, y2 - y1);
    let len = (dx * dx + dy * dy).sqrt();
    if len < 1e-9 {
        return;
    }
    let (ux, uy) = (dx / len, dy / len);
    let (px, py) = (-uy, ux);
    let tipx = x1 + 0.667 * dx;
    let tipy = y1 + 0.667 * dy;
    let size = (3.0 + stroke).min(len / 3.0);
    canvas.svg.push_str(&format!(
        "<polygon points=\"{:.4},{:.4} {:.4},{:.4} {:.4},{:.4}\" fill=\"{colour}\"/>\n",
        tipx,
        tipy,
        tipx - size * ux + 0.5 * size * px,
        tipy - size * uy + 0.5 * size * py,
        tipx - size * ux - 0.5 * size * px,
        tipy - size * uy - 0.5 * size * py,
    ));
}

fn draw_measure(canvas: &mut Canvas, m: &DiscreteMeasure, colour: &str) {
    let max_mass = m
        .atoms()
        .iter()
        .map(|a| a.mass)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    for a in m.atoms() {
        let (x, y) = canvas.map(&a.pos);
        // Disc area proportional to mass.
        let r = 4.0 + 8.0 * (a.mass / max_mass).sqrt();
        canvas.svg.push_str(&format!(
            "<circle cx=\"{x:.4}\" cy=\"{y:.4}\" r=\"{r:.4}\" fill=\"{colour}\" \
             fill-opacity=\"0.75\"/>\n"
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::TransportGraph;
    use crate::samples;

    #[test]
    fn empty_graph_renders_axes() {
        let empty = DiscreteMeasure::new(2, vec![]).unwrap();
        let g = TransportGraph::new(2, vec![], vec![], empty.clone(), empty).unwrap();
        let svg = render_svg(&Renderable::Graph(&g), &RenderStyle::default()).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<line").count(), 2, "both axes drawn");
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut rng = samples::rng(3);
        let g = samples::flow_graph(&mut rng, &samples::FlowGraphConfig::default());
        let a = render_svg(&Renderable::Graph(&g), &RenderStyle::default()).unwrap();
        let b = render_svg(&Renderable::Graph(&g), &RenderStyle::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.matches("<line").count() >= g.edges().len());
    }

    #[test]
    fn higher_dimensions_rejected_without_projection() {
        let m = DiscreteMeasure::new(3, vec![(Point(vec![0.0, 0.0, 0.0]), 1.0)]).unwrap();
        let g = TransportGraph::new(3, vec![], vec![], m.clone(), m).unwrap();
        assert!(matches!(
            render_svg(&Renderable::Graph(&g), &RenderStyle::default()),
            Err(RenderError::UnsupportedDimension(3))
        ));
        let style = RenderStyle {
            project: true,
            ..Default::default()
        };
        assert!(render_svg(&Renderable::Graph(&g), &style).is_ok());
    }

    #[test]
    fn stroke_widths_follow_weights() {
        let g = crate::graph::tests::single_edge(1.0);
        let svg = render_svg(&Renderable::Graph(&g), &RenderStyle::default()).unwrap();
        assert!(svg.contains("stroke-width=\"10.0000\""));
    }
}
