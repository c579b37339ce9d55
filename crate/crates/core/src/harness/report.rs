use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{AccuracyRow, ClassificationReport, HarnessError, MetricRow, RulReport, SweepReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Text of the first line of every emitted file; writers add the comment
/// marker.
pub fn header_line(fingerprint: &str) -> String {
    format!("batlife {TOOL_VERSION} fingerprint={fingerprint}")
}

/// Writes `# `-prefixed header lines followed by a CSV table of `rows`.
pub fn write_csv<W: Write, T: Serialize>(
    out: W,
    header: &[String],
    rows: &[T],
) -> Result<(), HarnessError> {
    let mut out = std::io::BufWriter::new(out);
    for line in header {
        writeln!(out, "{}", comment(line))?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| HarnessError::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV table written by [`write_csv`]; `#` lines are skipped.
pub fn read_csv<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    rdr.deserialize()
        .map(|r| r.map_err(|e| HarnessError::Format(e.to_string())))
        .collect()
}

/// Writes header lines, then pretty JSON.
pub fn write_json<W: Write, T: Serialize + ?Sized>(
    out: W,
    header: &[String],
    value: &T,
) -> Result<(), HarnessError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Format(e.to_string()))?;
    write_text(out, header, &text)
}

pub fn write_text<W: Write>(mut out: W, header: &[String], body: &str) -> Result<(), HarnessError> {
    for line in header {
        writeln!(out, "{}", comment(line))?;
    }
    out.write_all(body.as_bytes())?;
    if !body.ends_with('\n') {
        writeln!(out)?;
    }
    Ok(())
}

/// Body of a file written by [`write_text`], without its leading `#` lines.
pub fn strip_header<R: Read>(input: R) -> Result<String, HarnessError> {
    let mut body = String::new();
    let mut in_header = true;
    for line in BufReader::new(input).lines() {
        let line = line?;
        if in_header && line.starts_with('#') {
            continue;
        }
        in_header = false;
        body.push_str(&line);
        body.push('\n');
    }
    Ok(body)
}

pub fn read_json<R: Read, T: DeserializeOwned>(input: R) -> Result<T, HarnessError> {
    serde_json::from_str(&strip_header(input)?).map_err(|e| HarnessError::Format(e.to_string()))
}

fn comment(line: &str) -> String {
    if line.starts_with('#') {
        line.to_string()
    } else {
        format!("# {line}")
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, std::fs::File), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = std::fs::File::create(&path)?;
    Ok((path, file))
}

fn write_csv_file<T: Serialize>(
    dir: &Path,
    name: &str,
    header: &[String],
    rows: &[T],
) -> Result<PathBuf, HarnessError> {
    let (path, file) = create(dir, name)?;
    write_csv(file, header, rows)?;
    Ok(path)
}

fn write_json_file<T: Serialize>(
    dir: &Path,
    name: &str,
    header: &[String],
    value: &T,
) -> Result<PathBuf, HarnessError> {
    let (path, file) = create(dir, name)?;
    write_json(file, header, value)?;
    Ok(path)
}

fn write_svg_file(
    dir: &Path,
    name: &str,
    header: &[String],
    svg: &str,
) -> Result<PathBuf, HarnessError> {
    let (path, mut file) = create(dir, name)?;
    for line in header {
        writeln!(file, "<!-- {} -->", line.trim_start_matches('#').trim())?;
    }
    file.write_all(svg.as_bytes())?;
    Ok(path)
}

impl RulReport {
    /// Writes `{prefix}predictions.csv`, `metrics.csv`, `importance.csv`,
    /// `summary.json` and, with `plots`, a predicted-vs-true scatter.
    pub fn write(
        &self,
        dir: &Path,
        prefix: &str,
        header: &[String],
        plots: bool,
    ) -> Result<Vec<PathBuf>, HarnessError> {
        let mut paths = vec![
            write_csv_file(
                dir,
                &format!("{prefix}predictions.csv"),
                header,
                &self.predictions,
            )?,
            write_csv_file(dir, &format!("{prefix}metrics.csv"), header, &self.metrics)?,
            write_csv_file(
                dir,
                &format!("{prefix}importance.csv"),
                header,
                &self.importance,
            )?,
            write_json_file(dir, &format!("{prefix}summary.json"), header, self)?,
        ];
        if plots {
            let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
            for p in &self.predictions {
                let key = format!("{} {}", p.chemistry, p.condition);
                match series.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, pts)) => pts.push((p.rul, p.predicted)),
                    None => series.push((key, vec![(p.rul, p.predicted)])),
                }
            }
            let svg = Plot::new(
                &format!("RUL, {}", self.config.feature_set),
                "true RUL (cycles)",
                "predicted RUL (cycles)",
            )
            .diagonal()
            .scatter(&series);
            paths.push(write_svg_file(
                dir,
                &format!("{prefix}rul_scatter.svg"),
                header,
                &svg,
            )?);
        }
        Ok(paths)
    }
}

impl ClassificationReport {
    /// Writes `{prefix}predictions.csv`, `accuracy.csv`, `confusion.csv`,
    /// `summary.json` and, with `plots`, a probability-vs-SOH scatter.
    pub fn write(
        &self,
        dir: &Path,
        prefix: &str,
        header: &[String],
        plots: bool,
    ) -> Result<Vec<PathBuf>, HarnessError> {
        let mut paths = vec![
            write_csv_file(
                dir,
                &format!("{prefix}predictions.csv"),
                header,
                &self.predictions,
            )?,
            write_csv_file(
                dir,
                &format!("{prefix}accuracy.csv"),
                header,
                &self.accuracy,
            )?,
            write_csv_file(
                dir,
                &format!("{prefix}confusion.csv"),
                header,
                &self.confusion,
            )?,
            write_json_file(dir, &format!("{prefix}summary.json"), header, self)?,
        ];
        if plots {
            let series: Vec<(String, Vec<(f64, f64)>)> = crate::gpc::LifetimeLabel::ALL
                .iter()
                .map(|l| {
                    let pts = self
                        .predictions
                        .iter()
                        .filter(|p| p.predicted == *l)
                        .map(|p| (p.soh, p.probability))
                        .collect();
                    (l.as_str().to_string(), pts)
                })
                .collect();
            let svg = Plot::new(
                &format!("classification, {}", self.config.feature_set),
                "SOH",
                "probability of predicted class",
            )
            .scatter(&series);
            paths.push(write_svg_file(
                dir,
                &format!("{prefix}class_scatter.svg"),
                header,
                &svg,
            )?);
        }
        Ok(paths)
    }
}

impl SweepReport {
    /// Writes the sweep table and, with `plots`, RMSE against sweep level
    /// for each chemistry aggregate.
    pub fn write(
        &self,
        dir: &Path,
        name: &str,
        header: &[String],
        plots: bool,
    ) -> Result<Vec<PathBuf>, HarnessError> {
        let mut paths = vec![write_csv_file(
            dir,
            &format!("{name}.csv"),
            header,
            &self.rows,
        )?];
        if plots {
            let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
            let full = self
                .rows
                .iter()
                .filter_map(|r| r.level.parse::<f64>().ok())
                .fold(0.0, f64::max)
                * 1.25;
            for r in self
                .rows
                .iter()
                .filter(|r| r.condition == super::ALL_CONDITIONS)
            {
                let x = r.minutes.or_else(|| r.level.parse().ok()).unwrap_or(full);
                let key = r.chemistry.to_string();
                match series.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, pts)) => pts.push((x, r.rmse)),
                    None => series.push((key, vec![(x, r.rmse)])),
                }
            }
            let svg = Plot::new(name, "level", "RMSE (cycles)").lines(&series);
            paths.push(write_svg_file(dir, &format!("{name}.svg"), header, &svg)?);
        }
        Ok(paths)
    }
}

impl RulReport {
    /// Default header: tool version and the report's fingerprint.
    pub fn header(&self) -> Vec<String> {
        vec![header_line(&self.fingerprint)]
    }
}

impl ClassificationReport {
    pub fn header(&self) -> Vec<String> {
        vec![header_line(&self.fingerprint)]
    }
}

impl SweepReport {
    pub fn header(&self) -> Vec<String> {
        vec![header_line(&self.fingerprint)]
    }
}

/// Metric rows of several reports in one table.
pub fn table_rows(reports: &[RulReport]) -> Vec<MetricRow> {
    reports
        .iter()
        .flat_map(|r| r.metrics.iter().cloned())
        .collect()
}

pub fn accuracy_table_rows(reports: &[ClassificationReport]) -> Vec<AccuracyRow> {
    reports
        .iter()
        .flat_map(|r| r.accuracy.iter().cloned())
        .collect()
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];
const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Minimal SVG chart writer.
struct Plot {
    title: String,
    xlabel: String,
    ylabel: String,
    diagonal: bool,
}

impl Plot {
    fn new(title: &str, xlabel: &str, ylabel: &str) -> Self {
        Self {
            title: title.into(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
            diagonal: false,
        }
    }

    fn diagonal(mut self) -> Self {
        self.diagonal = true;
        self
    }

    fn scatter(&self, series: &[(String, Vec<(f64, f64)>)]) -> String {
        self.render(series, false)
    }

    fn lines(&self, series: &[(String, Vec<(f64, f64)>)]) -> String {
        self.render(series, true)
    }

    fn render(&self, series: &[(String, Vec<(f64, f64)>)], lines: bool) -> String {
        let pts = series
            .iter()
            .flat_map(|(_, p)| p.iter().copied())
            .filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for (x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if self.diagonal {
            x0 = x0.min(y0);
            y0 = x0;
            x1 = x1.max(y1);
            y1 = x1;
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
            m = MARGIN,
            b = H - MARGIN,
            r = W - MARGIN
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
                sx(xv),
                H - MARGIN + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN - 6.0,
                sy(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 16.0,
            escape(&self.xlabel)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
            H / 2.0,
            escape(&self.ylabel)
        );
        if self.diagonal {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 4"/>"#,
                sx(x0),
                sy(y0),
                sx(x1),
                sy(y1)
            );
        }
        for (k, (name, points)) in series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            if lines && points.len() > 1 {
                let d: Vec<String> = points
                    .iter()
                    .map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y)))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}"/>"#,
                    d.join(" ")
                );
            }
            for (x, y) in points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
            {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}" fill-opacity="0.6"/>"#,
                    sx(*x),
                    sy(*y)
                );
            }
            let ly = MARGIN + 16.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="4" fill="{color}"/>"#,
                W - MARGIN - 110.0,
                ly
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{}</text>"#,
                W - MARGIN - 100.0,
                ly + 4.0,
                escape(name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
