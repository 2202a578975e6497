//! Static SVG of branch norm against eps_m from a `bifurcate` CSV.

use crate::exit::CliError;
use std::fmt::Write as _;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BranchPoints {
    pub points: Vec<(f64, f64)>,
    pub sigma: Option<f64>,
}

pub fn read_branch_csv(path: &Path) -> Result<BranchPoints, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    parse_branch_csv(&text)
}

pub fn parse_branch_csv(text: &str) -> Result<BranchPoints, CliError> {
    if text.trim().is_empty() {
        return Ok(BranchPoints { points: vec![], sigma: None });
    }
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::validation(format!("malformed CSV: no `{name}` column")))
    };
    let (ie, inorm, isig) = (col("eps_m")?, col("branch_norm")?, col("sigma")?);
    let mut points = Vec::new();
    let mut sigma = None;
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::validation(format!("malformed CSV: row {} column {}", line + 2, headers[i].to_string())))
        };
        points.push((get(ie)?, get(inorm)?));
        sigma = Some(get(isig)?);
    }
    Ok(BranchPoints { points, sigma })
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn label(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.abs() >= 1e-2 && x.abs() < 1e3 {
        format!("{}", (x * 1e6).round() / 1e6)
    } else {
        format!("{x:.1e}")
    }
}

pub fn render_svg(data: &BranchPoints) -> String {
    let (mut x0, mut x1, mut y1) = (-1.0f64, 1.0f64, 1.0f64);
    if !data.points.is_empty() {
        let emax = data.points.iter().fold(0.0f64, |m, p| m.max(p.0.abs()));
        x0 = -emax * 1.1;
        x1 = emax * 1.1;
        y1 = data.points.iter().fold(0.0f64, |m, p| m.max(p.1)) * 1.1;
        if y1 == 0.0 {
            y1 = 1.0;
        }
    }
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - y / y1 * (H - TOP - BOTTOM);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if let Some(sig) = data.sigma {
        let (a, b) = if sig > 0.0 { (px(0.0), px(x1)) } else { (px(x0), px(0.0)) };
        let _ = writeln!(s, r##"<rect x="{a:.2}" y="{TOP}" width="{:.2}" height="{:.2}" fill="#eef4fb"/>"##, b - a, H - TOP - BOTTOM);
        let side = if sig > 0.0 { "σ = +1: branches for eps_m > 0" } else { "σ = −1: branches for eps_m < 0" };
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{side}</text>"#, (a + b) / 2.0, TOP + 16.0);
    }
    let (bx, by) = (H - BOTTOM, LEFT);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{bx}" x2="{:.2}" y2="{bx}" stroke="black"/>"#, W - RIGHT);
    let _ = writeln!(s, r#"<line x1="{by}" y1="{TOP}" x2="{by}" y2="{bx}" stroke="black"/>"#);
    let _ = writeln!(s, r##"<line x1="{0:.2}" y1="{TOP}" x2="{0:.2}" y2="{bx}" stroke="#999" stroke-dasharray="4 3"/>"##, px(0.0));
    for t in nice_ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{bx}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, bx + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, bx + 18.0, label(t));
    }
    for t in nice_ticks(0.0, y1) {
        let y = py(t);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, label(t));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">eps_m = m − m₀</text>"#, (LEFT + W - RIGHT) / 2.0, H - 15.0);
    let _ = writeln!(s, r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">branch norm</text>"#, (TOP + H - BOTTOM) / 2.0, (TOP + H - BOTTOM) / 2.0);
    let mut pts = data.points.clone();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() >= 2 {
        let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>"##, path.join(" "));
    }
    for p in &pts {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f5fa8"/>"##, px(p.0), py(p.1));
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_bifurcation_diagram(csv_in: &Path, svg_out: &Path) -> Result<(), CliError> {
    let data = read_branch_csv(csv_in)?;
    std::fs::write(svg_out, render_svg(&data)).map_err(|e| CliError::io(format!("{}: {e}", svg_out.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_bare_axes() {
        let d = parse_branch_csv("").unwrap();
        let svg = render_svg(&d);
        assert!(svg.starts_with("<svg") && !svg.contains("<circle"));
        let d = parse_branch_csv("eps_m,z1,z2,branch_norm,residual,sigma,A,B\n").unwrap();
        assert!(d.points.is_empty());
    }

    #[test]
    fn malformed_rows_are_rejected() {
        assert!(parse_branch_csv("a,b\n1,2\n").is_err());
        assert!(parse_branch_csv("eps_m,branch_norm,sigma\nx,1,1\n").is_err());
    }

    #[test]
    fn points_stay_on_sigma_side() {
        let d = parse_branch_csv("eps_m,branch_norm,sigma\n-1e-3,0.02,-1\n-4e-4,0.013,-1\n").unwrap();
        let svg = render_svg(&d);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("branches for eps_m < 0"));
    }
}
