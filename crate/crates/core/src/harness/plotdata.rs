//! Plot-data emission: generic `(x, y, series)` tables, gnuplot-ready text
//! blocks, and a minimal SVG line renderer. No interactivity.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// One named line series.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Parses a headered CSV into named columns.
pub fn read_csv_columns(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::EmptyInput("csv".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput("csv body".into()));
    }
    Ok((header, rows))
}

/// Extracts `(x, y, series)` triples from a CSV using the named columns.
pub fn series_from_csv(
    text: &str,
    x_col: &str,
    y_col: &str,
    series_col: Option<&str>,
) -> Result<Vec<Series>> {
    let (header, rows) = read_csv_columns(text)?;
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let xi = find(x_col)?;
    let yi = find(y_col)?;
    let si = series_col.map(find).transpose()?;
    let mut out: Vec<Series> = Vec::new();
    for row in rows {
        let x: f64 = row[xi].parse().map_err(|_| Error::BadConfig {
            path: x_col.into(),
            reason: format!("bad numeric '{}'", row[xi]),
        })?;
        let y: f64 = row[yi].parse().map_err(|_| Error::BadConfig {
            path: y_col.into(),
            reason: format!("bad numeric '{}'", row[yi]),
        })?;
        let name = si.map(|i| row[i].clone()).unwrap_or_else(|| y_col.to_string());
        match out.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((x, y)),
            None => out.push(Series {
                name,
                points: vec![(x, y)],
            }),
        }
    }
    Ok(out)
}

/// Writes gnuplot-ready plot data: series separated by double blank lines,
/// each preceded by a `# name` comment.
pub fn write_plot_data<W: Write>(series: &[Series], mut w: W) -> Result<()> {
    for (i, s) in series.iter().enumerate() {
        if i > 0 {
            writeln!(w)?;
            writeln!(w)?;
        }
        writeln!(w, "# {}", s.name)?;
        for (x, y) in &s.points {
            writeln!(w, "{x} {y}")?;
        }
    }
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Renders the series as a fixed-size SVG line plot with linear axes.
pub fn render_svg(series: &[Series], title: &str) -> Result<String> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::EmptyInput("no points to plot".into()));
    }
    let (w, h) = (720.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if xmax <= xmin {
        xmax = xmin + 1.0;
    }
    if ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let sx = |x: f64| ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    out.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n<text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        title
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    for i in 0..=4 {
        let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
        let fy = ymin + (ymax - ymin) * i as f64 / 4.0;
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.3}</text>\n",
            sx(fx),
            h - mb + 18.0,
            fx
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
            ml - 6.0,
            sy(fy) + 4.0,
            fy
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            w - mr - 150.0,
            mt + 16.0 * (i as f64 + 1.0),
            s.name
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Reads a CSV file and emits both the plot-data text and the SVG next to
/// the requested output stem. Errors leave no partial output behind.
pub fn plot_emit(
    csv_path: &Path,
    x_col: &str,
    y_col: &str,
    series_col: Option<&str>,
    out_stem: &Path,
) -> Result<()> {
    let text = std::fs::read_to_string(csv_path)?;
    let series = series_from_csv(&text, x_col, y_col, series_col)?;
    let svg = render_svg(&series, &out_stem.file_name().unwrap_or_default().to_string_lossy())?;
    let mut dat = Vec::new();
    write_plot_data(&series, &mut dat)?;
    std::fs::write(out_stem.with_extension("dat"), dat)?;
    std::fs::write(out_stem.with_extension("svg"), svg)?;
    Ok(())
}
