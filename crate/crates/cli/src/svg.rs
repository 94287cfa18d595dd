//! Hand-written SVG for the metric plot and the trajectory frames.

use std::fmt::Write as _;

use corral::coverage::VirtualDomain;
use corral::forces::Obstacle;
use corral::geometry::bounded_voronoi;
use corral::leader_network::mesh_vertex_indices;
use corral::simulator::StepRecord;
use corral::Vec2;

const FONT: &str = "font-family=\"sans-serif\" font-size=\"12\"";

struct Doc {
    out: String,
}

impl Doc {
    fn new(width: f64, height: f64) -> Self {
        let mut out = String::new();
        writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
        )
        .unwrap();
        writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
        Self { out }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }

    fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        if pts.len() < 2 {
            return;
        }
        self.out.push_str("<polyline points=\"");
        for (i, (x, y)) in pts.iter().enumerate() {
            if i > 0 {
                self.out.push(' ');
            }
            write!(self.out, "{x:.2},{y:.2}").unwrap();
        }
        writeln!(self.out, "\" fill=\"none\" {style}/>").unwrap();
    }

    fn polygon(&mut self, pts: &[(f64, f64)], style: &str) {
        self.out.push_str("<polygon points=\"");
        for (i, (x, y)) in pts.iter().enumerate() {
            if i > 0 {
                self.out.push(' ');
            }
            write!(self.out, "{x:.2},{y:.2}").unwrap();
        }
        writeln!(self.out, "\" {style}/>").unwrap();
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), style: &str) {
        writeln!(self.out, "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" {style}/>", a.0, a.1, b.0, b.1)
            .unwrap();
    }

    fn circle(&mut self, c: (f64, f64), r: f64, style: &str) {
        writeln!(self.out, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r:.2}\" {style}/>", c.0, c.1).unwrap();
    }

    fn text(&mut self, at: (f64, f64), anchor: &str, s: &str) {
        writeln!(
            self.out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"{anchor}\" {FONT}>{}</text>",
            at.0,
            at.1,
            escape(s)
        )
        .unwrap();
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps world coordinates into a pixel box, y up, equal scale on both axes.
#[derive(Debug, Clone, Copy)]
struct View {
    min: Vec2,
    scale: f64,
    left: f64,
    bottom: f64,
}

impl View {
    fn fit(min: Vec2, max: Vec2, left: f64, top: f64, width: f64, height: f64) -> Self {
        let span = Vec2::new((max.x - min.x).max(1e-9), (max.y - min.y).max(1e-9));
        let scale = (width / span.x).min(height / span.y);
        // center the content in the box
        let used = Vec2::new(span.x * scale, span.y * scale);
        Self {
            min,
            scale,
            left: left + (width - used.x) / 2.0,
            bottom: top + height - (height - used.y) / 2.0,
        }
    }

    fn px(&self, p: Vec2) -> (f64, f64) {
        (self.left + (p.x - self.min.x) * self.scale, self.bottom - (p.y - self.min.y) * self.scale)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// One panel of the metric plot.
fn panel(doc: &mut Doc, top: f64, title: &str, ts: &[f64], ys: &[f64], color: &str) {
    let (left, width, height) = (70.0, 700.0, 220.0);
    let t_max = ts.last().copied().unwrap_or(1.0).max(1e-9);
    let y_max = ys.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max).max(1e-9) * 1.05;
    let x = |t: f64| left + t / t_max * width;
    let y = |v: f64| top + height - v / y_max * height;
    doc.line((left, top + height), (left + width, top + height), "stroke=\"black\"");
    doc.line((left, top), (left, top + height), "stroke=\"black\"");
    for t in ticks(0.0, t_max) {
        doc.line((x(t), top + height), (x(t), top + height + 5.0), "stroke=\"black\"");
        doc.text((x(t), top + height + 18.0), "middle", &fmt_tick(t));
    }
    for v in ticks(0.0, y_max) {
        doc.line((left - 5.0, y(v)), (left, y(v)), "stroke=\"black\"");
        doc.line((left, y(v)), (left + width, y(v)), "stroke=\"#ddd\"");
        doc.text((left - 8.0, y(v) + 4.0), "end", &fmt_tick(v));
    }
    doc.text((left + width / 2.0, top - 8.0), "middle", title);
    doc.text((left + width / 2.0, top + height + 34.0), "middle", "t (s)");
    let pts: Vec<(f64, f64)> = ts.iter().zip(ys).filter(|(_, v)| v.is_finite()).map(|(t, v)| (x(*t), y(*v))).collect();
    doc.polyline(&pts, &format!("stroke=\"{color}\" stroke-width=\"1.5\""));
}

/// Tracking error and coverage error against time, stacked.
pub fn metrics_svg(records: &[StepRecord]) -> String {
    let ts: Vec<f64> = records.iter().map(|r| r.t).collect();
    let eg: Vec<f64> = records.iter().map(|r| r.e_gamma).collect();
    let ec: Vec<f64> = records.iter().map(|r| r.e_c).collect();
    let mut doc = Doc::new(800.0, 600.0);
    panel(&mut doc, 30.0, "tracking error E_Γ (m)", &ts, &eg, "#1f77b4");
    panel(&mut doc, 330.0, "aggregate coverage error E_c (m)", &ts, &ec, "#d62728");
    doc.finish()
}

/// Scene data not carried by the log.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub obstacles: Vec<Obstacle>,
    pub path: Vec<Vec2>,
    /// Virtual cell width and height; inferred from the initial leader
    /// spacing when unknown.
    pub cell: Option<(f64, f64)>,
}

fn bounds(points: impl Iterator<Item = Vec2>) -> (Vec2, Vec2) {
    points.fold((Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY)), |(lo, hi), p| {
        (Vec2::new(lo.x.min(p.x), lo.y.min(p.y)), Vec2::new(hi.x.max(p.x), hi.y.max(p.y)))
    })
}

fn obstacle_points(o: &Obstacle) -> Vec<Vec2> {
    match o {
        Obstacle::Circle { center, radius } => {
            vec![*center - Vec2::new(*radius, *radius), *center + Vec2::new(*radius, *radius)]
        }
        Obstacle::Polygon { vertices } => vertices.clone(),
    }
}

/// Real-domain snapshot at `records[idx]` with the virtual domain inset below.
pub fn frame_svg(records: &[StepRecord], idx: usize, scene: &Scene) -> String {
    let r = &records[idx];
    let m = r.leaders.len();
    let meshes = m / 2 - 1;

    // one fixed view for the whole run so frames line up
    let all = records
        .iter()
        .flat_map(|r| r.leaders.iter().copied())
        .chain(scene.path.iter().copied())
        .chain(scene.obstacles.iter().flat_map(obstacle_points));
    let (lo, hi) = bounds(all);
    let pad = Vec2::new(0.5, 0.5);
    let (width, inset_h) = (900.0, 170.0);
    let span = hi - lo + pad * 2.0;
    let real_h = ((width - 20.0) * span.y / span.x).clamp(150.0, 500.0);
    let view = View::fit(lo - pad, hi + pad, 10.0, 30.0, width - 20.0, real_h);

    let mut doc = Doc::new(width, 30.0 + real_h + 40.0 + inset_h + 20.0);
    doc.text((width / 2.0, 20.0), "middle", &format!("t = {} s", fmt_tick(r.t)));

    for o in &scene.obstacles {
        match o {
            Obstacle::Circle { center, radius } => {
                doc.circle(view.px(*center), radius * view.scale, "fill=\"#888\" stroke=\"#444\"");
            }
            Obstacle::Polygon { vertices } => {
                let pts: Vec<_> = vertices.iter().map(|v| view.px(*v)).collect();
                doc.polygon(&pts, "fill=\"#888\" stroke=\"#444\"");
            }
        }
    }
    let path: Vec<_> = scene.path.iter().map(|p| view.px(*p)).collect();
    doc.polyline(&path, "stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"");
    let head: Vec<_> = records[..=idx].iter().map(|r| view.px((r.leaders[0] + r.leaders[1]) * 0.5)).collect();
    doc.polyline(&head, "stroke=\"#1f77b4\" stroke-width=\"2\"");

    for h in 0..meshes {
        let quad = mesh_vertex_indices(h).map(|k| view.px(r.leaders[k]));
        doc.polygon(&quad, "fill=\"#1f77b4\" fill-opacity=\"0.06\" stroke=\"none\"");
    }
    let mut springs = Vec::new();
    for j in 0..m / 2 {
        springs.push((2 * j, 2 * j + 1));
        if j + 1 < m / 2 {
            springs.extend([(2 * j, 2 * j + 2), (2 * j + 1, 2 * j + 3), (2 * j, 2 * j + 3), (2 * j + 1, 2 * j + 2)]);
        }
    }
    for (a, b) in springs {
        doc.line(view.px(r.leaders[a]), view.px(r.leaders[b]), "stroke=\"#555\" stroke-width=\"1\"");
    }
    for p in &r.followers {
        doc.circle(view.px(*p), 2.5, "fill=\"#d62728\"");
    }
    for p in &r.leaders {
        doc.circle(view.px(*p), 6.0, "fill=\"white\" stroke=\"black\" stroke-width=\"1.5\"");
    }

    // virtual domain inset
    let (cw, ch) = scene.cell.unwrap_or_else(|| {
        let l = records[0].leaders[0].distance(records[0].leaders[1]);
        (l, l)
    });
    let inset_top = 30.0 + real_h + 40.0;
    doc.text((width / 2.0, inset_top - 10.0), "middle", "virtual domain");
    if let Ok(vd) = VirtualDomain::new(meshes, cw, ch) {
        let iv = View::fit(vd.rect.min_corner, vd.rect.max_corner(), 10.0, inset_top, width - 20.0, inset_h);
        for h in 0..meshes {
            let cell: Vec<_> = vd.cell(h).vertices().iter().map(|v| iv.px(*v)).collect();
            doc.polygon(&cell, "fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"");
        }
        if let Ok(cells) = bounded_voronoi(&r.followers_virtual, &vd.rect) {
            for c in cells {
                let pts: Vec<_> = c.vertices.iter().map(|v| iv.px(*v)).collect();
                doc.polygon(&pts, "fill=\"none\" stroke=\"#d62728\" stroke-width=\"0.8\"");
            }
        }
        for p in &r.followers_virtual {
            doc.circle(iv.px(*p), 2.5, "fill=\"#d62728\"");
        }
    }
    doc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 18.0), vec![0.0, 5.0, 10.0, 15.0]);
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(fmt_tick(0.6000000000000001), "0.6");
        assert_eq!(fmt_tick(-0.0), "0");
    }

    #[test]
    fn view_flips_y() {
        let v = View::fit(Vec2::ZERO, Vec2::new(2.0, 1.0), 0.0, 0.0, 200.0, 100.0);
        assert_eq!(v.px(Vec2::ZERO), (0.0, 100.0));
        assert_eq!(v.px(Vec2::new(2.0, 1.0)), (200.0, 0.0));
    }

    #[test]
    fn text_is_escaped() {
        assert_eq!(escape("a<b & c>"), "a&lt;b &amp; c&gt;");
    }
}
