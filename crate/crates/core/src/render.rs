//! Static SVG scene drawings. Drivable probability is shaded from red (0)
//! to green (1); agents are black, the expert purple, the selected plan blue
//! and the other finalists thin grey. Coordinates are printed with fixed
//! decimals so output is byte-stable.

use std::fmt::Write;

use crate::geometry::{OrientedBox, Pose2, Vec2};
use crate::pipeline::Evaluation;
use crate::world::{LightState, Scenario};

const PX_PER_M: f64 = 8.0;
const MARGIN: f64 = 12.0;
const MAX_CELLS: f64 = 120.0;

const EXPERT: &str = "#8e44ad";
const SELECTED: &str = "#1f5fd6";
const FINALIST: &str = "#9a9a9a";

struct View {
    min: Vec2,
    max: Vec2,
}

impl View {
    fn x(&self, p: Vec2) -> f64 {
        (p.x - self.min.x) * PX_PER_M
    }

    fn y(&self, p: Vec2) -> f64 {
        (self.max.y - p.y) * PX_PER_M
    }

    fn pt(&self, p: Vec2) -> String {
        format!("{:.2},{:.2}", self.x(p), self.y(p))
    }

    fn points(&self, ps: impl IntoIterator<Item = Vec2>) -> String {
        ps.into_iter().map(|p| self.pt(p)).collect::<Vec<_>>().join(" ")
    }
}

fn view_for(scenario: &Scenario, evaluation: Option<&Evaluation>) -> View {
    let mut pts: Vec<Vec2> = vec![scenario.ego.pose.position()];
    let mut add = |traj: &[Pose2]| pts.extend(traj.iter().map(|p| p.position()));
    if let Some(e) = &scenario.expert {
        add(e);
    }
    for a in &scenario.agents {
        add(std::slice::from_ref(&a.current));
        add(&a.future);
    }
    if let Some(ev) = evaluation {
        for f in &ev.finalists {
            add(&f.trajectory);
        }
    }
    let (mut min, mut max) = (pts[0], pts[0]);
    for p in &pts {
        min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
        max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
    }
    View {
        min: Vec2::new((min.x - MARGIN).floor(), (min.y - MARGIN).floor()),
        max: Vec2::new((max.x + MARGIN).ceil(), (max.y + MARGIN).ceil()),
    }
}

fn shade(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let mix = |a: f64, b: f64| (a + (b - a) * v).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(214.0, 170.0), mix(120.0, 218.0), mix(120.0, 160.0))
}

fn polygon(out: &mut String, view: &View, b: &OrientedBox, style: &str) {
    let _ = writeln!(out, r#"<polygon points="{}" {style}/>"#, view.points(b.corners()));
}

fn polyline(out: &mut String, view: &View, ps: impl IntoIterator<Item = Vec2>, style: &str) {
    let _ = writeln!(out, r#"<polyline points="{}" fill="none" {style}/>"#, view.points(ps));
}

fn with_origin(origin: Pose2, traj: &[Pose2]) -> impl Iterator<Item = Vec2> + '_ {
    std::iter::once(origin.position()).chain(traj.iter().map(|p| p.position()))
}

/// Draws the scenario and, if given, the candidates and choice from `evaluation`.
pub fn render_svg(scenario: &Scenario, evaluation: Option<&Evaluation>) -> String {
    let view = view_for(scenario, evaluation);
    let (w, h) = ((view.max.x - view.min.x) * PX_PER_M, (view.max.y - view.min.y) * PX_PER_M);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(&scenario.name));

    // Drivable map, resampled to a bounded number of cells.
    let grid = &scenario.road.drivable;
    let span = (view.max.x - view.min.x).max(view.max.y - view.min.y);
    let cell = (span / MAX_CELLS).max(grid.resolution());
    let (nx, ny) = (
        ((view.max.x - view.min.x) / cell).ceil() as usize,
        ((view.max.y - view.min.y) / cell).ceil() as usize,
    );
    let _ = writeln!(out, r#"<g id="drivable" stroke="none" shape-rendering="crispEdges">"#);
    for row in 0..ny {
        let y = view.min.y + (row as f64 + 0.5) * cell;
        let fills: Vec<String> = (0..nx)
            .map(|col| shade(grid.sample_or_zero(Vec2::new(view.min.x + (col as f64 + 0.5) * cell, y))))
            .collect();
        // one rect per run of equal colour
        let mut start = 0;
        for col in 1..=nx {
            if col < nx && fills[col] == fills[start] {
                continue;
            }
            let top = Vec2::new(view.min.x + start as f64 * cell, view.min.y + (row + 1) as f64 * cell);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                view.x(top),
                view.y(top),
                (col - start) as f64 * cell * PX_PER_M,
                cell * PX_PER_M,
                fills[start]
            );
            start = col;
        }
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g id="road">"#);
    for c in &scenario.road.centerlines {
        polyline(&mut out, &view, c.points().iter().copied(), r##"stroke="#ffffff" stroke-width="1" stroke-dasharray="6 4""##);
    }
    polyline(&mut out, &view, scenario.route.points().iter().copied(), r##"stroke="#f0c419" stroke-width="2" opacity="0.7""##);
    for z in &scenario.road.give_way_zones {
        let _ = writeln!(
            out,
            r##"<polygon points="{}" fill="#f39c12" fill-opacity="0.25" stroke="#f39c12"/>"##,
            view.points(z.polygon.iter().copied())
        );
    }
    for light in &scenario.road.traffic_lights {
        let colour = match light.state_at(0.0) {
            LightState::Red => "#e01b1b",
            LightState::Green => "#2ec27e",
        };
        polyline(&mut out, &view, light.stop_line, &format!(r#"stroke="{colour}" stroke-width="3""#));
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g id="agents">"#);
    for a in &scenario.agents {
        polyline(
            &mut out,
            &view,
            with_origin(a.current, &a.future),
            r##"stroke="#000000" stroke-width="1" stroke-dasharray="2 2""##,
        );
        polygon(&mut out, &view, &a.box_at(a.current), r##"fill="#000000" fill-opacity="0.8""##);
    }
    let _ = writeln!(out, "</g>");

    let origin = scenario.ego.pose;
    let _ = writeln!(out, r#"<g id="plans">"#);
    if let Some(ev) = evaluation {
        for f in ev.finalists.iter().filter(|f| f.index != ev.selected) {
            polyline(&mut out, &view, with_origin(origin, &f.trajectory), &format!(r#"stroke="{FINALIST}" stroke-width="1" opacity="0.6""#));
        }
    }
    if let Some(ev) = evaluation {
        let sel = ev.selected_record();
        polyline(&mut out, &view, with_origin(origin, &sel.trajectory), &format!(r#"stroke="{SELECTED}" stroke-width="5""#));
        if let Some(last) = sel.trajectory.last() {
            polygon(&mut out, &view, &scenario.ego_box(*last), &format!(r#"fill="none" stroke="{SELECTED}" stroke-dasharray="3 2""#));
        }
    }
    // drawn last and thinner so it stays visible over a matching selection
    if let Some(e) = &scenario.expert {
        polyline(&mut out, &view, with_origin(origin, e), &format!(r#"stroke="{EXPERT}" stroke-width="2""#));
    }
    polygon(&mut out, &view, &scenario.ego_box(origin), &format!(r##"fill="{SELECTED}" stroke="#000000""##));
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "</svg>");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
