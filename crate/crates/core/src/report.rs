//! Output formats: metrics and benchmark CSV, the SWNN parameter container,
//! binary PGM images and SVG line charts.

use std::fmt::Write as _;

use crate::activations::ActivationKind;
use crate::bench::{BenchReport, BenchResult, BenchRow};
use crate::error::{Error, Result};
use crate::nn::{Model, ParamKey};
use crate::tensor::{Precision, Scalar, Tensor};
use crate::train::{EpochMetrics, MatrixRow, TrainStatus};

pub const METRICS_HEADER: &str = "epoch,train_acc,train_loss,test_acc,test_loss,wall_time_s";

fn metrics_line(out: &mut String, tag: &str, m: &EpochMetrics) {
    writeln!(
        out,
        "{tag},{:.6},{:.6},{:.6},{:.6},{:.6}",
        m.train_accuracy, m.train_loss, m.test_accuracy, m.test_loss, m.wall_time_seconds
    )
    .expect("writing to a String");
}

/// One row per epoch, then a `final` row repeating the last epoch.
pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::new();
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for m in metrics {
        metrics_line(&mut out, &m.epoch.to_string(), m);
    }
    if let Some(last) = metrics.last() {
        metrics_line(&mut out, "final", last);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub epochs: Vec<EpochMetrics>,
    pub summary: Option<EpochMetrics>,
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: {column} value {field:?} is not a number")))
}

pub fn parse_metrics_csv(text: &str) -> Result<MetricsTable> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.trim_end() == METRICS_HEADER => {}
        Some((n, h)) => {
            return Err(Error::Format(format!(
                "line {n}: expected header {METRICS_HEADER:?}, found {h:?}"
            )))
        }
        None => return Err(Error::Format("line 1: empty metrics file".into())),
    }
    let columns: Vec<&str> = METRICS_HEADER.split(',').collect();
    let mut table = MetricsTable {
        epochs: Vec::new(),
        summary: None,
    };
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Format(format!(
                "line {n}: expected {} fields, found {}",
                columns.len(),
                fields.len()
            )));
        }
        let mut v = [0.0; 5];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = parse_f64(fields[i + 1], n, columns[i + 1])?;
        }
        let row = |epoch| EpochMetrics {
            epoch,
            train_accuracy: v[0],
            train_loss: v[1],
            test_accuracy: v[2],
            test_loss: v[3],
            wall_time_seconds: v[4],
        };
        if fields[0] == "final" {
            table.summary = Some(row(table.epochs.last().map_or(0, |e| e.epoch)));
        } else {
            let epoch = fields[0]
                .parse()
                .map_err(|_| Error::Format(format!("line {n}: epoch {:?} is not an integer", fields[0])))?;
            table.epochs.push(row(epoch));
        }
    }
    Ok(table)
}

/// The metrics CSV with the wall-time column removed.
pub fn without_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Final metrics of every matrix row in one table.
pub fn matrix_csv<T>(rows: &[MatrixRow<T>]) -> String {
    let mut out = String::from("conv,dense,status,epochs,train_acc,train_loss,test_acc,test_loss\n");
    for r in rows {
        let status = match r.outcome.status {
            TrainStatus::Completed => "completed",
            TrainStatus::EarlyStopped { .. } => "early_stopped",
            TrainStatus::Diverged { .. } => "diverged",
        };
        write!(
            out,
            "{},{},{status},{}",
            r.row.conv.name(),
            r.row.dense.name(),
            r.outcome.metrics.len()
        )
        .expect("writing to a String");
        match r.outcome.last() {
            Some(m) => writeln!(
                out,
                ",{:.6},{:.6},{:.6},{:.6}",
                m.train_accuracy, m.train_loss, m.test_accuracy, m.test_loss
            ),
            None => writeln!(out, ",nan,nan,nan,nan"),
        }
        .expect("writing to a String");
    }
    out
}

pub const BENCH_HEADER: &str =
    "kind,elements,sign_mix,reps,ns_per_element,throughput_gelem_s,ratio_vs_relu,input_checksum,output_checksum";

/// Benchmark table preceded by a `# machine=` comment line. Floats use the
/// shortest representation that parses back to the same value.
pub fn bench_csv(report: &BenchReport) -> String {
    let mut out = format!("# machine={}\n{BENCH_HEADER}\n", report.machine.replace('\n', " "));
    for row in &report.rows {
        let r = &row.result;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.kind.name(),
            r.elements,
            r.sign_mix,
            r.reps,
            r.ns_per_element,
            r.throughput_gelem_s,
            row.ratio_vs_relu,
            r.input_checksum,
            r.output_checksum
        )
        .expect("writing to a String");
    }
    out
}

pub fn parse_bench_csv(text: &str) -> Result<BenchReport> {
    let mut machine = String::new();
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if let Some(rest) = line.strip_prefix("# machine=") {
            machine = rest.to_string();
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line != BENCH_HEADER {
                return Err(Error::Format(format!("line {n}: expected header {BENCH_HEADER:?}")));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Format(format!("line {n}: expected 9 fields, found {}", f.len())));
        }
        let kind: ActivationKind = f[0].parse().map_err(|e| Error::Format(format!("line {n}: {e}")))?;
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("line {n}: {s:?} is not an integer")))
        };
        rows.push(BenchRow {
            result: BenchResult {
                kind,
                elements: int(f[1])?,
                sign_mix: parse_f64(f[2], n, "sign_mix")?,
                reps: int(f[3])?,
                ns_per_element: parse_f64(f[4], n, "ns_per_element")?,
                throughput_gelem_s: parse_f64(f[5], n, "throughput_gelem_s")?,
                input_checksum: parse_f64(f[7], n, "input_checksum")?,
                output_checksum: parse_f64(f[8], n, "output_checksum")?,
            },
            ratio_vs_relu: parse_f64(f[6], n, "ratio_vs_relu")?,
        });
    }
    if !header_seen {
        return Err(Error::Format("missing benchmark header".into()));
    }
    Ok(BenchReport { machine, rows })
}

pub const SWNN_MAGIC: &[u8; 4] = b"SWNN";
pub const SWNN_VERSION: u32 = 1;

/// Encodes every parameter of `model`.
///
/// Layout, all integers little-endian u32: magic `SWNN`, version, scalar
/// width in bytes (4 or 8), tensor count; then per tensor the name length,
/// UTF-8 name (`layer{L}.weight` / `layer{L}.bias`), rank, extents and the
/// raw little-endian scalars in row-major order.
pub fn encode_swnn<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let params = model.params();
    let mut out = Vec::new();
    out.extend_from_slice(SWNN_MAGIC);
    let put =
        |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
    put(&mut out, SWNN_VERSION as usize);
    put(&mut out, T::BYTES);
    put(&mut out, params.len());
    for (key, t) in params {
        let name = key.to_string();
        put(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put(&mut out, t.rank());
        for &e in t.shape() {
            put(&mut out, e);
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("model file truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

fn swnn_header(bytes: &[u8]) -> Result<(Cursor<'_>, usize, usize)> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4)? != SWNN_MAGIC {
        return Err(Error::Format("not a SWNN model file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != SWNN_VERSION as usize {
        return Err(Error::Format(format!("unsupported SWNN version {version}")));
    }
    let width = c.u32()?;
    let count = c.u32()?;
    Ok((c, width, count))
}

/// Scalar precision recorded in a SWNN header.
pub fn swnn_precision(bytes: &[u8]) -> Result<Precision> {
    match swnn_header(bytes)?.1 {
        4 => Ok(Precision::Single),
        8 => Ok(Precision::Double),
        w => Err(Error::Format(format!("unsupported scalar width {w}"))),
    }
}

pub fn decode_swnn<T: Scalar>(bytes: &[u8]) -> Result<Vec<(ParamKey, Tensor<T>)>> {
    let (mut c, width, count) = swnn_header(bytes)?;
    if width != T::BYTES {
        return Err(Error::Format(format!(
            "model stores {width}-byte scalars, expected {}",
            T::BYTES
        )));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u32()?;
        let name = std::str::from_utf8(c.take(len)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let key: ParamKey = name
            .parse()
            .map_err(|_| Error::Format(format!("unrecognized tensor name {name:?}")))?;
        let rank = c.u32()?;
        let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(
            n.checked_mul(width)
                .ok_or_else(|| Error::Format("tensor too large".into()))?,
        )?;
        let data = raw.chunks_exact(width).map(T::read_le).collect();
        out.push((key, Tensor::new(shape, data)?));
    }
    if c.at != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - c.at
        )));
    }
    Ok(out)
}

/// Copies decoded tensors into `model`; names and shapes must match its
/// parameter list exactly.
pub fn load_params<T: Scalar>(model: &mut Model<T>, tensors: Vec<(ParamKey, Tensor<T>)>) -> Result<()> {
    let expected: Vec<(ParamKey, Vec<usize>)> = model.params().iter().map(|(k, t)| (*k, t.shape().to_vec())).collect();
    let found: Vec<(ParamKey, Vec<usize>)> = tensors.iter().map(|(k, t)| (*k, t.shape().to_vec())).collect();
    if expected != found {
        return Err(Error::Consistency(
            "model file parameters do not match the architecture".into(),
        ));
    }
    for (key, t) in tensors {
        *model.param_mut(key).expect("checked above") = t;
    }
    Ok(())
}

/// Min-max scales to 0..=255; a constant channel maps to all zeros.
pub fn normalize_channel<T: Scalar>(values: &[T]) -> Vec<u8> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        let v = v.to_f64_lossless();
        (lo.min(v), hi.max(v))
    });
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v.to_f64_lossless() - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

/// Binary 8-bit PGM.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pgm pixel count");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// `(width, height, pixels)` of a binary 8-bit PGM.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut at = 0;
    while fields.len() < 4 {
        while at < bytes.len() && bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if start == at {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..at]).unwrap_or("").to_string());
    }
    at += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(Error::Format("expected an 8-bit P5 image".into()));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM extent {s:?}")))
    };
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    let pixels = bytes.get(at..).unwrap_or_default();
    if pixels.len() != w * h {
        return Err(Error::Format(format!(
            "PGM declares {w}x{h} pixels but holds {}",
            pixels.len()
        )));
    }
    Ok((w, h, pixels.to_vec()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    /// `(epoch, value)`.
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Line chart with linear axes, one polyline per series and a legend.
pub fn plot_svg(title: &str, y_label: &str, series: &[PlotSeries]) -> String {
    let (w, h) = (800.0, 500.0);
    let (left, right, top, bottom) = (70.0, 200.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let all = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let mut put = |s: String| svg.push_str(&s);
    put(format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    put(format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    put(format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        left + pw / 2.0,
        xml_escape(title)
    ));
    put(format!(
        "<line x1=\"{left}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{0}\" stroke=\"black\"/>\n",
        top + ph,
        left + pw
    ));
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        put(format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            sx(xv),
            top + ph + 18.0,
            tick_label(xv)
        ));
        put(format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            left - 6.0,
            sy(yv) + 4.0,
            tick_label(yv)
        ));
        put(format!(
            "<line x1=\"{left}\" y1=\"{0:.1}\" x2=\"{1}\" y2=\"{0:.1}\" stroke=\"#dddddd\"/>\n",
            sy(yv),
            left + pw
        ));
    }
    put(format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">epoch</text>\n",
        left + pw / 2.0,
        h - 10.0
    ));
    put(format!(
        "<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
        top + ph / 2.0,
        xml_escape(y_label)
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        put(format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        let ly = top + 14.0 + 20.0 * i as f64;
        put(format!(
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n<text x=\"{2}\" y=\"{3}\">{4}</text>\n",
            left + pw + 12.0,
            left + pw + 36.0,
            left + pw + 42.0,
            ly + 4.0,
            xml_escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
