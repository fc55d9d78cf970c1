//! SVG rendering of trajectory logs: robot paths per time window and a
//! stacked task-priority chart per robot.

use std::fmt::Write as _;
use std::path::Path;

use super::trajectory::TrajectoryLog;
use super::HarnessError;
use crate::world::WeightClass;

const PANELS: usize = 4;
const PANEL: f64 = 280.0;
const MARGIN: f64 = 20.0;
const CHART_HEIGHT: f64 = 60.0;
const CHART_GAP: f64 = 24.0;
const WIDTH: f64 = MARGIN + PANELS as f64 * (PANEL + MARGIN);
const OBJECT_COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const ROBOT_COLORS: [&str; 6] = ["#333333", "#7f7f7f", "#bcbd22", "#6b3e26", "#005f5f", "#aa0077"];

fn color(palette: &[&'static str], k: usize) -> &'static str {
    palette[k % palette.len()]
}

/// Vertical extents `(top, bottom)` of each object's band in the stacked
/// priority chart at every logged step, for a chart of height `height`.
pub fn priority_bands(log: &TrajectoryLog, robot: usize, height: f64) -> Vec<Vec<(f64, f64)>> {
    log.steps
        .iter()
        .map(|s| {
            let phi = s.robots.get(robot).map(|r| r.priority.as_slice()).unwrap_or(&[]);
            let mut y = height;
            phi.iter()
                .map(|&p| {
                    let top = y - p * height;
                    let band = (top, y);
                    y = top;
                    band
                })
                .collect()
        })
        .collect()
}

struct Frame {
    min_x: f64,
    min_y: f64,
    scale: f64,
}

impl Frame {
    fn fit(log: &TrajectoryLog) -> Self {
        let mut pts: Vec<[f64; 2]> = Vec::new();
        if let Some(h) = &log.header {
            pts.extend(h.goals.iter().copied());
            pts.extend(h.initial_objects.iter().copied());
            pts.extend(h.initial_robots.iter().map(|r| [r[0], r[1]]));
        }
        for s in &log.steps {
            pts.extend(s.robots.iter().map(|r| r.position));
            pts.extend(s.objects.iter().map(|o| o.position));
        }
        if pts.is_empty() {
            pts.push([0.0, 0.0]);
        }
        let fold = |f: fn(f64, f64) -> f64, k: usize, init: f64| pts.iter().map(|p| p[k]).fold(init, f);
        let (x0, x1) = (fold(f64::min, 0, f64::INFINITY) - 0.5, fold(f64::max, 0, f64::NEG_INFINITY) + 0.5);
        let (y0, y1) = (fold(f64::min, 1, f64::INFINITY) - 0.5, fold(f64::max, 1, f64::NEG_INFINITY) + 0.5);
        let span = (x1 - x0).max(y1 - y0).max(1.0);
        Self { min_x: (x0 + x1) / 2.0 - span / 2.0, min_y: (y0 + y1) / 2.0 - span / 2.0, scale: PANEL / span }
    }

    /// Panel-local pixel coordinates (y up in the world, down on screen).
    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.min_x) * self.scale, PANEL - (p[1] - self.min_y) * self.scale)
    }
}

fn cross(out: &mut String, x: f64, y: f64, c: &str) {
    let _ = write!(
        out,
        r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{c}" stroke-width="2"/>"#,
        x - 5.0,
        y - 5.0,
        x + 5.0,
        y + 5.0,
        x - 5.0,
        y + 5.0,
        x + 5.0,
        y - 5.0
    );
}

/// Renders the whole figure as an SVG document.
pub fn render_svg(log: &TrajectoryLog) -> String {
    let robots = log.header.as_ref().map_or(0, |h| h.initial_robots.len());
    let has_priorities = log.steps.iter().any(|s| s.robots.iter().any(|r| !r.priority.is_empty()));
    let chart_rows = if has_priorities { robots } else { 0 };
    let height = 2.0 * MARGIN + 30.0 + PANEL + CHART_GAP + chart_rows as f64 * (CHART_HEIGHT + CHART_GAP) + 20.0;
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    svg.push_str(r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let Some(header) = &log.header else {
        let _ = write!(svg, r#"<text x="{MARGIN}" y="{}">empty trajectory log</text></svg>"#, MARGIN + 12.0);
        return svg;
    };
    let _ = write!(
        svg,
        r#"<text x="{MARGIN}" y="{}">{} | seed {} | {} robots, {} objects | {} steps</text>"#,
        MARGIN + 12.0,
        header.policy,
        header.seed,
        robots,
        header.goals.len(),
        log.steps.len()
    );
    for (k, w) in log.warnings.iter().enumerate() {
        let _ = write!(svg, r##"<text x="{}" y="{}" fill="#b00000">warning: {}</text>"##, WIDTH / 2.0, MARGIN + 12.0 + 12.0 * k as f64, xml_escape(w));
    }

    let frame = Frame::fit(log);
    let total = log.steps.len();
    let top = MARGIN + 30.0;
    for panel in 0..PANELS {
        let (start, end) = (panel * total / PANELS, (panel + 1) * total / PANELS);
        let ox = MARGIN + panel as f64 * (PANEL + MARGIN);
        let _ = write!(svg, r#"<g transform="translate({ox:.2} {top:.2})">"#);
        svg.push_str(&format!(r##"<rect width="{PANEL}" height="{PANEL}" fill="none" stroke="#999999"/>"##));
        let label = if total == 0 { "no steps".to_string() } else { format!("steps {}-{}", start + 1, end.max(start + 1)) };
        let _ = write!(svg, r#"<text x="4" y="12">{label}</text>"#);
        for (l, g) in header.goals.iter().enumerate() {
            let (x, y) = frame.px(*g);
            cross(&mut svg, x, y, color(&OBJECT_COLORS, l));
        }
        // Object positions at the end of the window.
        let objects: Vec<([f64; 2], bool)> = if end > 0 && end <= total {
            log.steps[end - 1].objects.iter().map(|o| (o.position, o.completed)).collect()
        } else {
            header.initial_objects.iter().map(|&p| (p, false)).collect()
        };
        for (l, (p, done)) in objects.iter().enumerate() {
            let (x, y) = frame.px(*p);
            let r = header.scenario.physics.object_radius * frame.scale;
            let heavy = header.classes.get(l) == Some(&WeightClass::Heavy);
            let fill = if *done { "#dddddd" } else { color(&OBJECT_COLORS, l) };
            let dash = if heavy { r#" stroke-dasharray="3 2""# } else { "" };
            let _ = write!(svg, r##"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}" fill-opacity="0.5" stroke="#000000"{dash}/>"##);
        }
        for i in 0..robots {
            let mut pts: Vec<[f64; 2]> = Vec::new();
            if start == 0 {
                let r = header.initial_robots[i];
                pts.push([r[0], r[1]]);
            }
            pts.extend(log.steps[start.min(total)..end].iter().filter_map(|s| s.robots.get(i).map(|r| r.position)));
            let c = color(&ROBOT_COLORS, i);
            if pts.iter().all(|p| p == &pts[0]) {
                if let Some(p) = pts.first() {
                    let (x, y) = frame.px(*p);
                    let _ = write!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{c}"/>"#);
                }
            } else {
                let d: Vec<String> = pts.iter().map(|p| frame.px(*p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = write!(svg, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, d.join(" "));
                let (x, y) = frame.px(*pts.last().unwrap());
                let _ = write!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{c}"/>"#);
            }
        }
        svg.push_str("</g>");
    }

    if has_priorities && total > 0 {
        let chart_w = WIDTH - 2.0 * MARGIN;
        let dx = chart_w / total as f64;
        for i in 0..robots {
            let oy = top + PANEL + CHART_GAP + i as f64 * (CHART_HEIGHT + CHART_GAP);
            let _ = write!(svg, r#"<g transform="translate({MARGIN:.2} {oy:.2})">"#);
            let _ = write!(svg, r#"<text x="0" y="-4">robot {i} task priority</text>"#);
            for (t, bands) in priority_bands(log, i, CHART_HEIGHT).iter().enumerate() {
                for (l, (y0, y1)) in bands.iter().enumerate() {
                    if y1 > y0 {
                        let _ = write!(
                            svg,
                            r#"<rect x="{:.2}" y="{y0:.3}" width="{:.2}" height="{:.3}" fill="{}"/>"#,
                            t as f64 * dx,
                            dx + 0.05,
                            y1 - y0,
                            color(&OBJECT_COLORS, l)
                        );
                    }
                }
            }
            let _ = write!(svg, r##"<rect width="{chart_w:.2}" height="{CHART_HEIGHT}" fill="none" stroke="#999999"/>"##);
            svg.push_str("</g>");
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the figure for `log` to `path`; returns the log's warnings.
pub fn replay_render(log: &TrajectoryLog, path: &Path) -> Result<Vec<String>, HarnessError> {
    std::fs::write(path, render_svg(log))?;
    for w in &log.warnings {
        log::warn!("{w}");
    }
    Ok(log.warnings.clone())
}
