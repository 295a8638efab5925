//! SVG overlay of a scene: class-colored structures, detection markers and,
//! when a score report is supplied, per-instance count labels.
//!
//! Palette:
//!
//! | element                | color     |
//! |------------------------|-----------|
//! | glomerulus             | `#1f77b4` |
//! | peritubular capillary  | `#2ca02c` |
//! | artery                 | `#d62728` |
//! | other structure        | `#7f7f7f` |
//! | lymphocyte             | `#ff7f0e` |
//! | monocyte               | `#9467bd` |
//! | other cell             | `#17becf` |

use std::fmt::Write;

use crate::geometry::{BoundingBox, Point2, Ring};
use crate::ingest::{CellClass, SectionScene, StructureClass};
use crate::scalar::Scalar;
use crate::scoring::ScoreReport;
use crate::synth::{parse_canvas, CANVAS_KEY};

const DEFAULT_CANVAS: [f64; 4] = [0.0, 0.0, 1024.0, 1024.0];
const MARKER_RADIUS: f64 = 3.0;

pub fn structure_color(class: &StructureClass) -> &'static str {
    match class {
        StructureClass::Glomerulus => "#1f77b4",
        StructureClass::PeritubularCapillary => "#2ca02c",
        StructureClass::Artery => "#d62728",
        StructureClass::Other(_) => "#7f7f7f",
    }
}

pub fn cell_color(class: &CellClass) -> &'static str {
    match class {
        CellClass::Lymphocyte => "#ff7f0e",
        CellClass::Monocyte => "#9467bd",
        CellClass::Other(_) => "#17becf",
    }
}

fn css_class(class: &StructureClass) -> &'static str {
    match class {
        StructureClass::Glomerulus => "glomerulus",
        StructureClass::PeritubularCapillary => "peritubular-capillary",
        StructureClass::Artery => "artery",
        StructureClass::Other(_) => "other",
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn xy<T: Scalar>(p: &Point2<T>) -> (f64, f64) {
    (p.x.to_f64_exact(), p.y.to_f64_exact())
}

fn ring_points<T: Scalar>(ring: &Ring<T>) -> String {
    ring.vertices()
        .iter()
        .map(|p| {
            let (x, y) = xy(p);
            format!("{},{}", num(x), num(y))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn ring_path<T: Scalar>(ring: &Ring<T>) -> String {
    let mut d = String::new();
    for (i, p) in ring.vertices().iter().enumerate() {
        let (x, y) = xy(p);
        let _ = write!(d, "{}{} {} ", if i == 0 { "M" } else { "L" }, num(x), num(y));
    }
    d.push('Z');
    d
}

fn canvas_of<T: Scalar>(scene: &SectionScene<T>) -> BoundingBox<f64> {
    if let Some(c) = scene.metadata.get(CANVAS_KEY).and_then(|s| parse_canvas(s)) {
        return c;
    }
    let pts: Vec<Point2<f64>> = scene
        .instances
        .iter()
        .flat_map(|i| [i.polygon.bbox().min, i.polygon.bbox().max])
        .chain(scene.detections.iter().map(|d| d.point))
        .map(|p| {
            let (x, y) = xy(&p);
            Point2::new(x, y)
        })
        .collect();
    BoundingBox::enclosing(&pts)
        .filter(|b| b.width() > 0.0 && b.height() > 0.0)
        .unwrap_or_else(|| {
            let [x0, y0, x1, y1] = DEFAULT_CANVAS;
            BoundingBox {
                min: Point2::new(x0, y0),
                max: Point2::new(x1, y1),
            }
        })
}

/// Renders the scene as a standalone SVG document. `comments` are emitted as
/// XML comments right after the root element opens.
pub fn render_svg<T: Scalar>(scene: &SectionScene<T>, report: Option<&ScoreReport>, comments: &[String]) -> String {
    let canvas = canvas_of(scene);
    let (x0, y0, w, h) = (canvas.min.x, canvas.min.y, canvas.width(), canvas.height());
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"{}\" height=\"{}\">",
        num(x0),
        num(y0),
        num(w),
        num(h),
        num(w),
        num(h)
    );
    for c in comments {
        let _ = writeln!(s, "<!-- {} -->", c.replace("--", "- -"));
    }
    let _ = writeln!(s, "<title>{}</title>", escape(&scene.section_id));
    let _ = writeln!(
        s,
        "<rect class=\"canvas\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#ffffff\" stroke=\"#000000\"/>",
        num(x0),
        num(y0),
        num(w),
        num(h)
    );

    s.push_str("<g class=\"instances\" fill-opacity=\"0.25\" stroke-width=\"1.5\">\n");
    for inst in &scene.instances {
        let color = structure_color(&inst.class);
        let class = css_class(&inst.class);
        let id = escape(&inst.id);
        if inst.polygon.holes().is_empty() {
            let _ = writeln!(
                s,
                "<polygon class=\"instance {class}\" data-id=\"{id}\" points=\"{}\" fill=\"{color}\" stroke=\"{color}\"/>",
                ring_points(inst.polygon.exterior())
            );
        } else {
            let d = std::iter::once(inst.polygon.exterior())
                .chain(inst.polygon.holes())
                .map(ring_path)
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(
                s,
                "<path class=\"instance {class}\" data-id=\"{id}\" d=\"{d}\" fill-rule=\"evenodd\" fill=\"{color}\" stroke=\"{color}\"/>"
            );
        }
    }
    s.push_str("</g>\n");

    s.push_str("<g class=\"detections\">\n");
    for det in &scene.detections {
        let (x, y) = xy(&det.point);
        let _ = writeln!(
            s,
            "<circle class=\"detection {}\" data-id=\"{}\" cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>",
            escape(det.class.label()),
            escape(&det.id),
            num(x),
            num(y),
            num(MARKER_RADIUS),
            cell_color(&det.class)
        );
    }
    s.push_str("</g>\n");

    if let Some(report) = report {
        let counts = report.instance_counts();
        s.push_str("<g class=\"labels\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">\n");
        for inst in &scene.instances {
            if let Some(n) = counts.get(inst.id.as_str()) {
                let c = inst.polygon.bbox().center();
                let (x, y) = xy(&c);
                let _ = writeln!(
                    s,
                    "<text class=\"count\" data-id=\"{}\" x=\"{}\" y=\"{}\">{n}</text>",
                    escape(&inst.id),
                    num(x),
                    num(y)
                );
            }
        }
        s.push_str("</g>\n");
        let grade = |g: Option<crate::scoring::BanffGrade>| g.map_or_else(|| "NA".to_string(), |g| g.to_string());
        let [g, ptc, v] = report.grades();
        let _ = writeln!(
            s,
            "<text class=\"grades\" x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"18\">g={} ptc={} v={}</text>",
            num(x0 + 10.0),
            num(y0 + 24.0),
            grade(g),
            grade(ptc),
            grade(v)
        );
    }
    s.push_str("</svg>\n");
    s
}
