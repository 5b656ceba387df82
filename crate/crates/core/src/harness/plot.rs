//! Planar state-space plot as a deterministic SVG 1.1 document.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::certificate::InvariantEllipsoid;
use crate::error::{Error, Result};
use crate::linalg::sqrt_and_inv_sqrt;
use crate::sampling::SampleSet;
use crate::system::SwitchedAffineSystem;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 48.0;
const ELLIPSE_SEGMENTS: usize = 360;

struct Frame {
    scale: f64,
    centre: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        self.centre + v * self.scale
    }
    fn y(&self, v: f64) -> f64 {
        self.centre - v * self.scale
    }
}

fn ellipse_points(ell: &InvariantEllipsoid) -> Result<Vec<(f64, f64)>> {
    let (_, inv_half) = sqrt_and_inv_sqrt(&ell.p)
        .ok_or_else(|| Error::Domain("ellipsoid matrix is not positive definite".into()))?;
    Ok((0..ELLIPSE_SEGMENTS)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / ELLIPSE_SEGMENTS as f64;
            let u = DVector::from_vec(vec![t.cos(), t.sin()]);
            let x = &inv_half * u * ell.level;
            (x[0], x[1])
        })
        .collect())
}

/// SVG text: sampling circle, initial states, successors, and the ellipse
/// `xᵀPx = level²` when given. Equal aspect ratio.
pub fn render_state_svg(
    sys: &SwitchedAffineSystem,
    omega: &SampleSet,
    ell: Option<&InvariantEllipsoid>,
    title: &str,
) -> Result<String> {
    if sys.dim() != 2 {
        return Err(Error::UnsupportedDimension(sys.dim()));
    }
    if omega.dim != 2 {
        return Err(Error::UnsupportedDimension(omega.dim));
    }
    let radius = omega.config.radius;
    let ellipse = ell.map(ellipse_points).transpose()?;
    let mut extent = radius;
    for s in &omega.samples {
        extent = extent.max(s.x1[0].abs()).max(s.x1[1].abs());
    }
    if let Some(pts) = &ellipse {
        for (x, y) in pts {
            extent = extent.max(x.abs()).max(y.abs());
        }
    }
    extent *= 1.08;
    let frame = Frame {
        scale: (SIZE / 2.0 - MARGIN) / extent,
        centre: SIZE / 2.0,
    };

    let mut svg = String::new();
    let w = &mut svg;
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#).unwrap();
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(w, r#"<title>{}</title>"#, escape(title)).unwrap();
    writeln!(w, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#).unwrap();

    // Axes through the origin.
    let (lo, hi) = (frame.x(-extent), frame.x(extent));
    writeln!(
        w,
        r##"<g stroke="#999999" stroke-width="1"><line x1="{lo:.3}" y1="{c:.3}" x2="{hi:.3}" y2="{c:.3}"/><line x1="{c:.3}" y1="{lo:.3}" x2="{c:.3}" y2="{hi:.3}"/></g>"##,
        c = frame.centre
    )
    .unwrap();
    writeln!(
        w,
        r##"<g font-family="sans-serif" font-size="11" fill="#555555"><text x="{:.3}" y="{:.3}">x1</text><text x="{:.3}" y="{:.3}">x2</text></g>"##,
        hi - 14.0,
        frame.centre - 6.0,
        frame.centre + 6.0,
        lo + 12.0
    )
    .unwrap();
    // Tick labels at ±R on both axes.
    writeln!(w, r##"<g font-family="sans-serif" font-size="10" fill="#555555">"##).unwrap();
    for v in [-radius, radius] {
        writeln!(w, r#"<text x="{:.3}" y="{:.3}">{v}</text>"#, frame.x(v) + 2.0, frame.centre + 12.0).unwrap();
        writeln!(w, r#"<text x="{:.3}" y="{:.3}">{v}</text>"#, frame.centre + 4.0, frame.y(v) - 2.0).unwrap();
    }
    writeln!(w, "</g>").unwrap();

    writeln!(
        w,
        r##"<circle cx="{c:.3}" cy="{c:.3}" r="{:.3}" fill="none" stroke="#333333" stroke-width="1.2" stroke-dasharray="4 3"/>"##,
        radius * frame.scale,
        c = frame.centre
    )
    .unwrap();

    if let Some(pts) = &ellipse {
        let mut d = String::new();
        for (k, (x, y)) in pts.iter().enumerate() {
            let cmd = if k == 0 { 'M' } else { 'L' };
            write!(d, "{cmd}{:.3} {:.3} ", frame.x(*x), frame.y(*y)).unwrap();
        }
        d.push('Z');
        writeln!(
            w,
            r##"<path d="{d}" fill="#2ca02c" fill-opacity="0.15" stroke="#2ca02c" stroke-width="1.5"/>"##
        )
        .unwrap();
    }

    writeln!(w, r##"<g fill="#1f77b4">"##).unwrap();
    for s in &omega.samples {
        writeln!(w, r#"<circle cx="{:.3}" cy="{:.3}" r="2.2"/>"#, frame.x(s.x0[0]), frame.y(s.x0[1])).unwrap();
    }
    writeln!(w, "</g>").unwrap();
    writeln!(w, r##"<g stroke="#d62728" stroke-width="1.2">"##).unwrap();
    for s in &omega.samples {
        let (x, y) = (frame.x(s.x1[0]), frame.y(s.x1[1]));
        writeln!(
            w,
            r#"<path d="M{:.3} {:.3} L{:.3} {:.3} M{:.3} {:.3} L{:.3} {:.3}"/>"#,
            x - 2.5,
            y - 2.5,
            x + 2.5,
            y + 2.5,
            x - 2.5,
            y + 2.5,
            x + 2.5,
            y - 2.5
        )
        .unwrap();
    }
    writeln!(w, "</g>").unwrap();

    // Legend.
    let lx = SIZE - 190.0;
    let mut ly = 20.0;
    writeln!(
        w,
        r##"<g font-family="sans-serif" font-size="12"><rect x="{:.3}" y="8" width="182" height="{}" fill="white" stroke="#cccccc"/>"##,
        lx - 8.0,
        if ellipse.is_some() { 80 } else { 62 }
    )
    .unwrap();
    writeln!(w, r##"<circle cx="{:.3}" cy="{ly:.3}" r="3" fill="#1f77b4"/><text x="{:.3}" y="{:.3}">initial state x0</text>"##, lx, lx + 12.0, ly + 4.0).unwrap();
    ly += 18.0;
    writeln!(
        w,
        r##"<path d="M{:.3} {:.3} L{:.3} {:.3} M{:.3} {:.3} L{:.3} {:.3}" stroke="#d62728" stroke-width="1.2"/><text x="{:.3}" y="{:.3}">successor x1</text>"##,
        lx - 3.0, ly - 3.0, lx + 3.0, ly + 3.0, lx - 3.0, ly + 3.0, lx + 3.0, ly - 3.0, lx + 12.0, ly + 4.0
    )
    .unwrap();
    ly += 18.0;
    writeln!(
        w,
        r##"<line x1="{:.3}" y1="{ly:.3}" x2="{:.3}" y2="{ly:.3}" stroke="#333333" stroke-dasharray="4 3"/><text x="{:.3}" y="{:.3}">sampling sphere R = {radius}</text>"##,
        lx - 5.0, lx + 5.0, lx + 12.0, ly + 4.0
    )
    .unwrap();
    if ellipse.is_some() {
        ly += 18.0;
        writeln!(
            w,
            r##"<rect x="{:.3}" y="{:.3}" width="10" height="8" fill="#2ca02c" fill-opacity="0.3" stroke="#2ca02c"/><text x="{:.3}" y="{:.3}">invariant ellipsoid</text>"##,
            lx - 5.0, ly - 4.0, lx + 12.0, ly + 4.0
        )
        .unwrap();
    }
    writeln!(w, "</g>").unwrap();
    writeln!(w, "</svg>").unwrap();
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes [`render_state_svg`] to `path`.
pub fn plot_state_space(
    sys: &SwitchedAffineSystem,
    omega: &SampleSet,
    ell: Option<&InvariantEllipsoid>,
    path: &Path,
) -> Result<()> {
    let title = path.file_stem().and_then(|s| s.to_str()).unwrap_or("state space");
    let svg = render_state_svg(sys, omega, ell, title)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, svg)?;
    Ok(())
}
