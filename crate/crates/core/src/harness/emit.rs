//! CSV and SVG output of sweep tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{SummaryRow, SweepAxis, SweepTable, TrialRecord};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "seed,v_f,n,T,lambda,delta_hat,delta_se,retain_err,retain_se,forget_err,forget_se";

/// CSV text of a table. Floats use the shortest representation that parses
/// back to the same bits.
pub fn csv_string(table: &SweepTable) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &table.records {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.v_f,
            r.n,
            r.temperature,
            r.lambda,
            r.delta_hat,
            r.delta_se,
            r.retain_err,
            r.retain_se,
            r.forget_err,
            r.forget_se
        )
        .expect("writing to a String cannot fail");
    }
    s
}

pub fn write_csv(table: &SweepTable, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(table)).map_err(|e| Error::io(path, e))
}

/// Parses CSV text written by [`csv_string`]; `wall_time` comes back as 0.
pub fn parse_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("CSV header mismatch".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let bad = |what: &str| Error::Config(format!("CSV row {}: {what}", i + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(bad("expected 11 columns"));
        }
        let f = |k: usize| cols[k].parse::<f64>().map_err(|_| bad(&format!("column {} is not a number", k + 1)));
        out.push(TrialRecord {
            seed: cols[0].parse().map_err(|_| bad("seed is not an unsigned integer"))?,
            v_f: f(1)?,
            n: cols[2].parse().map_err(|_| bad("n is not an unsigned integer"))?,
            temperature: f(3)?,
            lambda: f(4)?,
            delta_hat: f(5)?,
            delta_se: f(6)?,
            retain_err: f(7)?,
            retain_se: f(8)?,
            forget_err: f(9)?,
            forget_se: f(10)?,
            wall_time: 0.0,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Retain,
    Forget,
}

impl Metric {
    fn label(self) -> &'static str {
        match self {
            Metric::Retain => "Retain Error",
            Metric::Forget => "Forget Error",
        }
    }

    fn file_tag(self) -> &'static str {
        match self {
            Metric::Retain => "retain",
            Metric::Forget => "forget",
        }
    }

    fn pick(self, r: &SummaryRow) -> (f64, f64) {
        match self {
            Metric::Retain => (r.retain_mean, r.retain_se),
            Metric::Forget => (r.forget_mean, r.forget_se),
        }
    }
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 55.0;

fn series_label(axis: SweepAxis, v_f: f64, n: usize) -> String {
    match axis {
        SweepAxis::ForgetVariance => format!("v_f = {v_f:e}"),
        SweepAxis::SampleSize => format!("n = {n}"),
    }
}

/// Line chart of the across-trial mean of one metric against `T`, one
/// series per setting, with a ±1 SE band.
pub fn svg_string(table: &SweepTable, metric: Metric) -> String {
    let series: Vec<(String, Vec<SummaryRow>)> =
        table.settings().into_iter().map(|(v, n)| (series_label(table.axis, v, n), table.summary(v, n))).collect();
    let points: Vec<(f64, f64, f64)> = series
        .iter()
        .flat_map(|(_, rows)| rows.iter().map(|r| (r.temperature, metric.pick(r).0, metric.pick(r).1)))
        .filter(|p| p.1.is_finite())
        .collect();

    let (mut x0, mut x1) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) =
        points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1 - p.2), b.max(p.1 + p.2)));
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (1.0, 3.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let lo_mean = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let log_scale = lo_mean > 0.0 && y1 / lo_mean > 100.0;
    if log_scale {
        y0 = lo_mean / 1.5;
        y1 *= 1.5;
    } else {
        y0 = y0.min(0.0);
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        y1 += 0.05 * (y1 - y0);
    }
    let tr = |y: f64| if log_scale { y.max(y0).log10() } else { y };
    let (ty0, ty1) = (tr(y0), tr(y1));
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| MARGIN_T + ph - (tr(y) - ty0) / (ty1 - ty0) * ph;

    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ =
        writeln!(w, r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let x = x0 + (x1 - x0) * i as f64 / 4.0;
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.2}</text>"#,
            px(x),
            MARGIN_T + ph + 18.0,
            x
        );
    }
    for i in 0..=4 {
        let t = ty0 + (ty1 - ty0) * i as f64 / 4.0;
        let y = if log_scale { 10f64.powf(t) } else { t };
        let _ =
            writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3e}</text>"#, MARGIN_L - 6.0, py(y) + 4.0, y);
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Temperature T</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 12.0
    );
    let scale = if log_scale { " (log scale)" } else { "" };
    let _ = writeln!(
        w,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        metric.label(),
        scale
    );

    for (k, (label, rows)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let rows: Vec<&SummaryRow> = rows.iter().filter(|r| metric.pick(r).0.is_finite()).collect();
        if rows.is_empty() {
            continue;
        }
        let upper = rows.iter().map(|r| {
            let (m, se) = metric.pick(r);
            format!("{:.2},{:.2}", px(r.temperature), py(m + se))
        });
        let lower = rows.iter().rev().map(|r| {
            let (m, se) = metric.pick(r);
            format!("{:.2},{:.2}", px(r.temperature), py(m - se))
        });
        let band: Vec<String> = upper.chain(lower).collect();
        let _ =
            writeln!(w, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> =
            rows.iter().map(|r| format!("{:.2},{:.2}", px(r.temperature), py(metric.pick(r).0))).collect();
        let _ = writeln!(w, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = MARGIN_T + 16.0 + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_R + 10.0;
        let _ = writeln!(
            w,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(w, r#"<text x="{}" y="{}">{label}</text>"#, lx + 24.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<name>_retain.svg` and `<name>_forget.svg` into `dir`.
pub fn write_svgs(table: &SweepTable, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for metric in [Metric::Retain, Metric::Forget] {
        let path = dir.join(format!("{}_{}.svg", table.name, metric.file_tag()));
        std::fs::write(&path, svg_string(table, metric)).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes the CSV, both charts and the effective config into `dir`.
pub fn emit(table: &SweepTable, config_toml: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{}.csv", table.name));
    write_csv(table, &csv)?;
    let cfg = dir.join(format!("{}_config.toml", table.name));
    std::fs::write(&cfg, config_toml).map_err(|e| Error::io(&cfg, e))?;
    let mut paths = vec![csv, cfg];
    paths.extend(write_svgs(table, dir)?);
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64, v_f: f64, n: usize, t: f64, f: f64) -> TrialRecord {
        TrialRecord {
            seed,
            v_f,
            n,
            temperature: t,
            lambda: 1e-3,
            delta_hat: 0.1 + 0.2,
            delta_se: 1e-300,
            retain_err: f64::MIN_POSITIVE / 3.0,
            retain_se: 0.0,
            forget_err: f,
            forget_se: 1.0 / 3.0,
            wall_time: 2.5,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = SweepTable::new("e", SweepAxis::ForgetVariance);
        assert_eq!(csv_string(&t), format!("{CSV_HEADER}\n"));
        assert!(parse_csv(&csv_string(&t)).unwrap().is_empty());
    }

    #[test]
    fn one_row_round_trips_bit_exactly() {
        let mut t = SweepTable::new("one", SweepAxis::ForgetVariance);
        t.records.push(record(u64::MAX, 1e-6, 100, 1.1, -0.0));
        let text = csv_string(&t);
        assert_eq!(text.lines().count(), 2);
        let back = parse_csv(&text).unwrap();
        let (a, b) = (&t.records[0], &back[0]);
        let bits = |r: &TrialRecord| {
            [
                r.v_f,
                r.temperature,
                r.lambda,
                r.delta_hat,
                r.delta_se,
                r.retain_err,
                r.retain_se,
                r.forget_err,
                r.forget_se,
            ]
            .map(f64::to_bits)
        };
        assert_eq!(bits(a), bits(b));
        assert_eq!((a.seed, a.n), (b.seed, b.n));
        assert!(!text.contains("2.5"), "wall time must stay out of the CSV");
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(parse_csv("a,b\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,2,3\n")).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,x,3,4,5,6,7,8,9,10,11\n")).is_err());
    }

    #[test]
    fn one_chart_per_metric_with_a_series_per_setting() {
        let mut t = SweepTable::new("sweep_vf", SweepAxis::ForgetVariance);
        for (k, v) in [1e-6, 1e-3, 1.0].into_iter().enumerate() {
            for s in 0..3 {
                for temp in [1.0, 2.0, 3.0] {
                    t.records.push(record(s, v, 100, temp, (k + 1) as f64 * temp + s as f64));
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let paths = emit(&t, "trials = 3\n", dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        let svgs: Vec<&PathBuf> = paths.iter().filter(|p| p.extension().is_some_and(|e| e == "svg")).collect();
        assert_eq!(svgs.len(), 2);
        for p in svgs {
            let s = std::fs::read_to_string(p).unwrap();
            assert!(s.starts_with("<svg"));
            assert_eq!(s.matches("<polyline").count(), 3);
            assert_eq!(s.matches("<polygon").count(), 3);
            assert!(s.contains("Temperature T"));
            assert!(s.contains("v_f = 1e-6"));
        }
        let csv = std::fs::read_to_string(dir.path().join("sweep_vf.csv")).unwrap();
        assert_eq!(parse_csv(&csv).unwrap().len(), 27);
    }

    #[test]
    fn write_errors_carry_the_path() {
        let t = SweepTable::new("x", SweepAxis::SampleSize);
        let err = write_csv(&t, Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
