//! Scatter plots of point clouds.

use std::fmt::Write as _;
use std::path::Path;

use crate::datasets::{CloudLabel, PointCloud};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const RADIUS: f64 = 2.5;

pub fn color(label: CloudLabel) -> &'static str {
    match label {
        CloudLabel::Source => "#8B4513",
        CloudLabel::Target => "#4B0082",
        CloudLabel::Generated => "#FFC0CB",
    }
}

/// Data bounds `(min_x, min_y, max_x, max_y)` widened by 5% per side.
fn bounds(clouds: &[&PointCloud]) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in clouds.iter().flat_map(|c| &c.points) {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].min(p[1]);
        b[2] = b[2].max(p[0]);
        b[3] = b[3].max(p[1]);
    }
    let span_x = (b[2] - b[0]).max(1e-9);
    let span_y = (b[3] - b[1]).max(1e-9);
    [b[0] - 0.05 * span_x, b[1] - 0.05 * span_y, b[2] + 0.05 * span_x, b[3] + 0.05 * span_y]
}

/// One circle per point, drawn in the order given; y points up.
pub fn render_scatter_svg(clouds: &[&PointCloud]) -> Result<String> {
    if clouds.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let [x0, y0, x1, y1] = bounds(clouds);
    let sx = WIDTH / (x1 - x0);
    let sy = HEIGHT / (y1 - y0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for cloud in clouds {
        let _ = writeln!(s, r#"<g fill="{}" fill-opacity="0.8" class="{}">"#, color(cloud.label), cloud.label);
        for p in &cloud.points {
            let cx = (p[0] - x0) * sx;
            let cy = HEIGHT - (p[1] - y0) * sy;
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{RADIUS}"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_scatter_svg(clouds: &[&PointCloud], path: &Path) -> Result<()> {
    let svg = render_scatter_svg(clouds)?;
    std::fs::write(path, svg)?;
    Ok(())
}
