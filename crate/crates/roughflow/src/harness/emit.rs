//! CSV, JSON and log-log SVG output of sweep records.

use super::sweep::{SweepRecord, SCHEMA_VERSION};
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" | "svg-plots" => Ok(Self::Svg),
            _ => Err(invalid(format!("unknown output format {s:?}"))),
        }
    }
}

pub const CSV_COLUMNS: [&str; 19] = [
    "epsilon",
    "nu",
    "alpha",
    "N",
    "grid_x1",
    "grid_x2",
    "T0",
    "q_l2_scaled",
    "q_linf",
    "q_curl_scaled",
    "resid_linf",
    "resid_l2",
    "runtime_s",
    "status",
    "resolution",
    "regime",
    "wall_tangent_linf",
    "ledger_drift",
    "error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn tag<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn row(r: &SweepRecord) -> Vec<String> {
    let m = r.measure;
    vec![
        format!("{:e}", r.epsilon),
        format!("{:e}", r.nu),
        format!("{}", r.alpha),
        r.order.to_string(),
        r.grid_x1.to_string(),
        r.grid_x2.to_string(),
        format!("{}", r.t0),
        opt(m.map(|m| m.q_l2_scaled)),
        opt(m.map(|m| m.q_linf)),
        opt(m.map(|m| m.q_curl_scaled)),
        opt(m.map(|m| m.resid_linf)),
        opt(m.map(|m| m.resid_l2)),
        r.runtime_s.map(|t| format!("{t:.3}")).unwrap_or_default(),
        tag(&r.status),
        tag(&r.resolution),
        tag(&r.regime),
        opt(m.map(|m| m.wall_tangent_linf)),
        opt(m.map(|m| m.ledger_drift)),
        r.error.clone().unwrap_or_default(),
    ]
}

pub fn write_csv<W: std::io::Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record(row(r))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonDoc {
    schema_version: u32,
    records: Vec<SweepRecord>,
}

pub fn to_json(records: &[SweepRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&JsonDoc {
        schema_version: SCHEMA_VERSION,
        records: records.to_vec(),
    })?)
}

pub fn from_json(text: &str) -> Result<Vec<SweepRecord>> {
    let doc: JsonDoc = serde_json::from_str(text)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(invalid(format!(
            "schema version {} is not {SCHEMA_VERSION}",
            doc.schema_version
        )));
    }
    Ok(doc.records)
}

pub fn read_json(path: &Path) -> Result<Vec<SweepRecord>> {
    from_json(&std::fs::read_to_string(path)?)
}

const W: f64 = 560.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 3] = ["#1b6ca8", "#c0392b", "#27864a"];

/// Log-log plot of the three rate quantities against `ε`.
pub fn to_svg(records: &[SweepRecord]) -> String {
    type Pick = fn(&SweepRecord) -> Option<f64>;
    let series: [(&str, Pick); 3] = [
        ("ε^-1/2 |u-u_app|_L2", |r| r.measure.map(|m| m.q_l2_scaled)),
        ("|u-u_app|_Linf", |r| r.measure.map(|m| m.q_linf)),
        ("ε |curl(u-u_app)|_Linf", |r| {
            r.measure.map(|m| m.q_curl_scaled)
        }),
    ];
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, pick)| {
            let mut p: Vec<(f64, f64)> = records
                .iter()
                .filter_map(|r| {
                    pick(r)
                        .filter(|v| *v > 0.0)
                        .map(|v| (r.epsilon.log10(), v.log10()))
                })
                .collect();
            p.sort_by(|a, b| a.0.total_cmp(&b.0));
            p
        })
        .collect();
    let all: Vec<&(f64, f64)> = pts.iter().flatten().collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if all.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">no data</text></svg>"#,
            W / 2.0,
            H / 2.0
        );
        return svg;
    }
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = all
            .iter()
            .map(|p| f(p))
            .fold(f64::INFINITY, f64::min)
            .floor();
        let hi = all
            .iter()
            .map(|p| f(p))
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil();
        (lo, if hi > lo { hi } else { lo + 1.0 })
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let _ = writeln!(
        svg,
        r#"<path d="M{a} {b} H{c} M{a} {b} V{d}" stroke="black" fill="none"/>"#,
        a = PAD,
        b = H - PAD,
        c = W - PAD,
        d = PAD
    );
    for k in x0 as i32..=x1 as i32 {
        let x = sx(k as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle">1e{k}</text>"#,
            H - PAD + 18.0
        );
    }
    for k in y0 as i32..=y1 as i32 {
        let y = sy(k as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{y}" text-anchor="end">1e{k}</text>"#,
            PAD - 6.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">ε</text>"#,
        W / 2.0,
        H - 15.0
    );
    for (i, ((name, _), p)) in series.iter().zip(&pts).enumerate() {
        let path: Vec<String> = p
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" stroke="{}" fill="none" stroke-width="2"/>"#,
            path.join(" "),
            COLORS[i]
        );
        for &(x, y) in p {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                sx(x),
                sy(y),
                COLORS[i]
            );
        }
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" fill="{}">{name}</text>"#,
            PAD + 10.0,
            COLORS[i]
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `sweep.<ext>` for each format into `dir`.
pub fn emit(records: &[SweepRecord], formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    formats
        .iter()
        .map(|f| {
            let path = dir.join(match f {
                Format::Csv => "sweep.csv",
                Format::Json => "sweep.json",
                Format::Svg => "sweep.svg",
            });
            match f {
                Format::Csv => write_csv(records, std::fs::File::create(&path)?)?,
                Format::Json => std::fs::write(&path, to_json(records)?)?,
                Format::Svg => std::fs::write(&path, to_svg(records))?,
            }
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::{PairMeasure, Status};
    use crate::ns::{Resolution, ViscosityRegime};

    fn record(eps: f64) -> SweepRecord {
        SweepRecord {
            schema_version: SCHEMA_VERSION,
            epsilon: eps,
            nu: eps.powi(7),
            alpha: 0.5,
            order: 3,
            grid_x1: 64,
            grid_x2: 193,
            t0: 0.5,
            resolution: Resolution::Resolved,
            regime: ViscosityRegime::InWindow,
            measure: Some(PairMeasure {
                q_l2_scaled: 0.1 * eps,
                q_linf: eps.sqrt() / 3.0,
                q_curl_scaled: 1.7,
                resid_linf: 0.2,
                resid_l2: 0.01,
                wall_tangent_linf: 0.4,
                ledger_drift: 1e-3,
            }),
            runtime_s: Some(1.25),
            status: Status::Ok,
            error: None,
        }
    }

    fn csv_of(r: &[SweepRecord]) -> String {
        let mut buf = Vec::new();
        write_csv(r, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_list_gives_header_only() {
        let s = csv_of(&[]);
        assert_eq!(s.lines().count(), 1);
        assert!(s.starts_with("epsilon,nu,alpha,N,grid_x1,grid_x2,T0,q_l2_scaled,q_linf,q_curl_scaled,resid_linf,resid_l2,runtime_s,status"));
    }

    #[test]
    fn one_record_one_row_of_full_arity() {
        let s = csv_of(&[record(0.25)]);
        let mut rd = csv::Reader::from_reader(s.as_bytes());
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].len(), CSV_COLUMNS.len());
        assert_eq!(&rows[0][13], "ok");
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut r = vec![record(0.25), record(0.125)];
        r[1].measure = None;
        r[1].status = Status::Failed;
        r[1].error = Some("boom".into());
        r[0].nu = 0.1 + 0.2;
        assert_eq!(from_json(&to_json(&r).unwrap()).unwrap(), r);
    }

    #[test]
    fn svg_has_one_polyline_per_quantity() {
        let s = to_svg(&[record(0.25), record(0.125), record(0.0625)]);
        assert_eq!(s.matches("<polyline").count(), 3);
        assert!(to_svg(&[]).contains("no data"));
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("f");
        std::fs::write(&file, "x").unwrap();
        assert!(emit(&[], &[Format::Csv], &file.join("sub")).is_err());
    }
}
