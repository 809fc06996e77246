use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::Result;

use crate::failure::data_error;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub tagset: String,
    pub alpha: f64,
    pub masked_fraction: f64,
    pub seed: u64,
    pub zar_f1: f64,
}

pub fn parse_sweep(text: &str) -> Result<Vec<SweepPoint>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| data_error(format!("sweep row {}: {e}", n + 2)))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| data_error(format!("sweep row {}: bad column {}", n + 2, i + 1)))
        };
        out.push(SweepPoint {
            tagset: rec.get(0).unwrap_or_default().to_string(),
            alpha: num(1)?,
            masked_fraction: num(2)?,
            seed: num(3)? as u64,
            zar_f1: num(4)?,
        });
    }
    Ok(out)
}

/// Seed means per (tagset, α): (masked fraction, ZAR F1).
fn curves(points: &[SweepPoint]) -> BTreeMap<String, Vec<(f64, f64, f64)>> {
    let mut acc: BTreeMap<(String, u64), (f64, f64, f64, usize)> = BTreeMap::new();
    for p in points {
        let e = acc
            .entry((p.tagset.clone(), p.alpha.to_bits()))
            .or_insert((p.alpha, 0.0, 0.0, 0));
        e.1 += p.masked_fraction;
        e.2 += p.zar_f1;
        e.3 += 1;
    }
    let mut out: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for ((tagset, _), (alpha, m, z, n)) in acc {
        out.entry(tagset)
            .or_default()
            .push((alpha, m / n as f64, z / n as f64));
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
    }
    out
}

pub fn sweep_ascii(points: &[SweepPoint]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>6} {:>10} {:>8}",
        "tagset", "alpha", "masked", "ZAR F1"
    );
    for (tagset, pts) in curves(points) {
        for (alpha, m, z) in pts {
            let _ = writeln!(s, "{tagset:<16} {alpha:>6.2} {m:>10.4} {:>8.2}", 100.0 * z);
        }
    }
    s
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// ZAR F1 against the masked-token proportion, one line per tagset.
pub fn sweep_svg(points: &[SweepPoint]) -> String {
    let (w, h, pad) = (640.0, 420.0, 56.0);
    let c = curves(points);
    let xs = c.values().flatten().map(|p| p.1);
    let ys = c.values().flatten().map(|p| p.2);
    let (x0, x1) = (0.0, xs.fold(0.0f64, f64::max).max(1e-6));
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
        (lo.min(y), hi.max(y))
    });
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 < 1e-6 {
        y0 -= 0.005;
        y1 += 0.005;
    }
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{0}" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.2}</text>"#,
            px(fx),
            h - pad + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.1}</text>"#,
            pad - 6.0,
            py(fy) + 4.0,
            100.0 * fy
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">proportion of masked tokens</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {0})" text-anchor="middle">ZAR F1</text>"#,
        h / 2.0
    );
    for (i, (tagset, pts)) in c.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.1},{:.1}", px(p.1), py(p.2)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for p in pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                px(p.1),
                py(p.2)
            );
        }
        let ly = pad + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{tagset}</text>"#,
            w - pad - 110.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "tagset,alpha,masked_fraction,seed,zar_f1,dep_f1,all_f1\nall,0.1,0.05,1,0.5,0.9,0.8\nall,0.1,0.07,2,0.7,0.9,0.8\n\"NOUN,VERB\",0.5,0.2,1,0.6,0.9,0.8\n";

    #[test]
    fn parses_and_averages() {
        let p = parse_sweep(CSV).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[2].tagset, "NOUN,VERB");
        let c = curves(&p);
        let (alpha, m, z) = c["all"][0];
        assert_eq!(alpha, 0.1);
        assert!((m - 0.06).abs() < 1e-12 && (z - 0.6).abs() < 1e-12);
        assert!(sweep_svg(&p).contains("<polyline"));
        assert!(sweep_ascii(&p).contains("NOUN,VERB"));
    }
}
