//! Plain SVG line charts of run outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::transfer::MetricReport;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6a4c93", "#00798c", "#8c564b", "#333333"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart with axes over the given ranges; non-finite points are skipped.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64), series: &[Series]) -> String {
    let sx = |v: f64| PAD + (v - x.0) / (x.1 - x.0).max(1e-12) * (W - 2.0 * PAD);
    let sy = |v: f64| H - PAD - (v - y.0) / (y.1 - y.0).max(1e-12) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, esc(title));
    let (x0, x1, y0, y1) = (sx(x.0), sx(x.1), sy(y.0), sy(y.1));
    let _ = writeln!(s, r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" stroke="black" fill="none"/>"#);
    for i in 0..=5 {
        let vx = x.0 + (x.1 - x.0) * i as f64 / 5.0;
        let vy = y.0 + (y.1 - y.0) * i as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(vx), y0 + 16.0, trim(vx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, sy(vy) + 4.0, trim(vy));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| format!("{:.1},{:.1}", sx(*a), sy(*b)))
            .collect();
        let dash = if ser.dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.6"{dash}/>"#, pts.join(" "));
        for p in &pts {
            let (a, b) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{a}" cy="{b}" r="2.5" fill="{color}"/>"#);
        }
        let ly = PAD + 14.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}"{dash}/>"#, W - PAD - 150.0, W - PAD - 130.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, W - PAD - 125.0, ly + 4.0, esc(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn trim(v: f64) -> String {
    let t = format!("{v:.2}");
    t.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One AUC-by-week chart per (reference, target, policy) and one reliability
/// chart per calibration file.
pub fn render(run: &Path, out: &Path) -> io::Result<()> {
    fs::create_dir_all(out)?;
    let mut rdr = csv::Reader::from_path(run.join("results.csv")).map_err(io::Error::other)?;
    let mut groups: BTreeMap<(String, String, String), BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    let mut max_week = 1.0f64;
    for r in rdr.deserialize::<MetricReport>() {
        let r = r.map_err(io::Error::other)?;
        let key = (r.reference.clone(), r.target.clone(), r.policy.as_str().to_string());
        let label = format!("{} {}", r.learner, r.strategy.as_str());
        groups.entry(key).or_default().entry(label).or_default().push((f64::from(r.week), r.auc));
        max_week = max_week.max(f64::from(r.week));
    }
    for ((reference, target, policy), lines) in groups {
        let series: Vec<Series> = lines
            .into_iter()
            .map(|(label, points)| Series { dashed: label.ends_with("early_reset"), label, points })
            .collect();
        let title = format!("AUC by week: {reference} -> {target} ({policy})");
        let svg = line_chart(&title, "week", "AUC", (1.0, max_week), (0.0, 1.0), &series);
        fs::write(out.join(format!("auc__{reference}__{target}__{policy}.svg")), svg)?;
    }

    let cal = run.join("calibration");
    if cal.is_dir() {
        let mut files: Vec<_> = fs::read_dir(&cal)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        files.sort();
        for f in files.into_iter().filter(|f| f.extension().is_some_and(|e| e == "csv")) {
            let mut rdr = csv::Reader::from_path(&f).map_err(io::Error::other)?;
            let mut stages: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for rec in rdr.records() {
                let rec = rec.map_err(io::Error::other)?;
                let num = |i: usize| rec.get(i).and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN);
                stages.entry(rec.get(0).unwrap_or_default().to_string()).or_default().push((num(2), num(3)));
            }
            let mut series = vec![Series { label: "ideal".into(), points: vec![(0.0, 0.0), (1.0, 1.0)], dashed: true }];
            series.extend(stages.into_iter().map(|(label, points)| Series { label, points, dashed: false }));
            let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("calibration");
            let svg = line_chart(stem, "mean predicted", "observed", (0.0, 1.0), (0.0, 1.0), &series);
            fs::write(out.join(format!("calibration__{stem}.svg")), svg)?;
        }
    }
    Ok(())
}
