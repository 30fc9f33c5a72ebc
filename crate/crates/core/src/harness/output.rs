//! CSV, JSON and SVG emission. Floats in CSV files use `%.6g` formatting.

use std::fmt::Write as _;
use std::io::Write;

use crate::bounds::Plot1Row;
use crate::error::Result;
use crate::model::ModelSpec;

use super::SweepResult;

pub const SWEEP_HEADER: &str = "model,n,k,m,sigma2,beta,decoder,trials,successes,success_rate,ci_low,ci_high,seed";

/// Six significant digits, formatted like C's `%.6g`.
pub fn fmt_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_g6(v: Option<f64>) -> String {
    v.map(fmt_g6).unwrap_or_default()
}

fn model_columns(model: &ModelSpec) -> (String, String) {
    (opt_g6(model.sigma2()), opt_g6(model.beta()))
}

pub fn write_sweep_csv<W: Write>(mut w: W, result: &SweepResult) -> Result<()> {
    let c = &result.config;
    let (sigma2, beta) = model_columns(&c.model);
    writeln!(w, "{SWEEP_HEADER}")?;
    for row in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.model.name(),
            c.n,
            c.k,
            row.m,
            sigma2,
            beta,
            c.decoder,
            row.trials,
            row.successes,
            fmt_g6(row.success_rate),
            fmt_g6(row.ci_low),
            fmt_g6(row.ci_high),
            c.master_seed
        )?;
    }
    Ok(())
}

pub fn write_plot1_csv<W: Write>(mut w: W, rows: &[Plot1Row]) -> Result<()> {
    writeln!(w, "k,m1,m2")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.k, fmt_g6(r.m1), fmt_g6(r.m2))?;
    }
    Ok(())
}

/// Minimal line chart of `m1` and `m2` against `k`.
pub fn plot1_svg(rows: &[Plot1Row]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const PAD: f64 = 60.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if rows.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let kmin = rows.iter().map(|r| r.k).min().unwrap_or(0) as f64;
    let kmax = rows.iter().map(|r| r.k).max().unwrap_or(1) as f64;
    let ymax = rows.iter().map(|r| r.m1.max(r.m2)).fold(0.0, f64::max);
    let xspan = (kmax - kmin).max(1.0);
    let yspan = if ymax > 0.0 { ymax } else { 1.0 };
    let px = |k: f64| PAD + (k - kmin) / xspan * (W - 2.0 * PAD);
    let py = |v: f64| H - PAD - v / yspan * (H - 2.0 * PAD);

    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {top} V{bottom} H{right}" stroke="black" fill="none"/>"#,
        top = PAD,
        bottom = H - PAD,
        right = W - PAD
    );
    for (frac, anchor) in [(0.0, "start"), (1.0, "end")] {
        let k = kmin + frac * xspan;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="{anchor}">{}</text>"#,
            px(k),
            H - PAD + 18.0,
            fmt_g6(k)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="end">{}</text>"#,
        PAD - 6.0,
        py(ymax) + 4.0,
        fmt_g6(ymax)
    );
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">k</text>"#, W / 2.0, H - 20.0);

    for (label, colour, pick, dy) in [
        ("m1", "#1f77b4", (|r: &Plot1Row| r.m1) as fn(&Plot1Row) -> f64, 0.0),
        ("m2", "#ff7f0e", |r: &Plot1Row| r.m2, 16.0),
    ] {
        let points: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.k as f64), py(pick(r))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" stroke="{colour}" stroke-width="2" fill="none"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" fill="{colour}">{label}</text>"#,
            PAD + 10.0,
            PAD + dy
        );
    }
    svg.push_str("</svg>\n");
    svg
}
