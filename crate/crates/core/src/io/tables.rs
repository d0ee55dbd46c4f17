//! CSV ingestion and emission for spectra and transient-absorption surfaces.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kinetics::TADataset;
use crate::spectrum::Spectrum;

fn csv_error(path: &str, row: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_string(),
        row,
        message: message.into(),
    }
}

/// Non-comment records with their 1-based line numbers.
fn records<R: Read>(reader: R, path: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            csv_error(path, row, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn parse_cell(path: &str, row: usize, col: usize, cell: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(csv_error(
            path,
            row,
            format!("column {}: '{cell}' is not a finite number", col + 1),
        )),
    }
}

fn is_numeric(cell: &str) -> bool {
    cell.parse::<f64>().is_ok()
}

/// Time-unit header to factor converting into ps.
fn time_unit(header: &str) -> Option<f64> {
    match header {
        "time_fs" => Some(1e-3),
        "time_ps" => Some(1.0),
        "time_ns" => Some(1e3),
        "time_us" => Some(1e6),
        "time_ms" => Some(1e9),
        _ => None,
    }
}

pub fn load_spectrum_csv(path: &Path) -> Result<Spectrum<f64>> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path)?;
    parse_spectrum_csv(file, &name)
}

/// Two columns (field, intensity). An optional header row names the field
/// unit: `field_mT` or `field_G`.
pub fn parse_spectrum_csv<R: Read>(reader: R, path: &str) -> Result<Spectrum<f64>> {
    let rows = records(reader, path)?;
    let mut field_scale = 1.0;
    let mut body = &rows[..];
    if let Some((line, first)) = rows.first() {
        if !first.iter().all(|c| is_numeric(c)) {
            field_scale = match first[0].as_str() {
                "field_mT" => 1.0,
                "field_G" => 0.1,
                other => {
                    return Err(csv_error(
                        path,
                        *line,
                        format!("field column header must be field_mT or field_G, got '{other}'"),
                    ))
                }
            };
            body = &rows[1..];
        }
    }
    let mut field = Vec::with_capacity(body.len());
    let mut intensity = Vec::with_capacity(body.len());
    for (line, rec) in body {
        if rec.len() != 2 {
            return Err(csv_error(
                path,
                *line,
                format!("expected 2 columns, found {}", rec.len()),
            ));
        }
        let b = parse_cell(path, *line, 0, &rec[0])? * field_scale;
        let y = parse_cell(path, *line, 1, &rec[1])?;
        if let Some(prev) = field.last() {
            if !(b > *prev) {
                return Err(csv_error(
                    path,
                    *line,
                    format!("field axis not strictly increasing ({b} after {prev})"),
                ));
            }
        }
        field.push(b);
        intensity.push(y);
    }
    if field.len() < 2 {
        return Err(csv_error(path, 0, "a spectrum needs at least two rows"));
    }
    let mut s = Spectrum::new(field, intensity)?;
    s.metadata.insert("source".into(), path.to_string());
    Ok(s)
}

pub fn load_ta_csv(path: &Path) -> Result<TADataset<f64>> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path)?;
    parse_ta_csv(file, &name)
}

/// First row: time-unit header then wavelengths (nm). Following rows: time
/// then ΔA (mOD) per wavelength. Times are converted to ps.
pub fn parse_ta_csv<R: Read>(reader: R, path: &str) -> Result<TADataset<f64>> {
    let rows = records(reader, path)?;
    let Some((hline, header)) = rows.first() else {
        return Err(csv_error(path, 0, "file is empty"));
    };
    let scale = time_unit(&header[0]).ok_or_else(|| {
        csv_error(
            path,
            *hline,
            format!("first header cell must name the time unit (time_fs, time_ps, time_ns, time_us, time_ms), got '{}'", header[0]),
        )
    })?;
    if header.len() < 2 {
        return Err(csv_error(path, *hline, "header lists no wavelengths"));
    }
    let mut wavelengths = Vec::with_capacity(header.len() - 1);
    for (c, cell) in header.iter().enumerate().skip(1) {
        let w = parse_cell(path, *hline, c, cell)?;
        if let Some(prev) = wavelengths.last() {
            if !(w > *prev) {
                return Err(csv_error(
                    path,
                    *hline,
                    format!(
                        "wavelength axis not strictly increasing at column {}",
                        c + 1
                    ),
                ));
            }
        }
        wavelengths.push(w);
    }
    let n_wl = wavelengths.len();
    let mut times = Vec::with_capacity(rows.len() - 1);
    let mut values = Vec::with_capacity((rows.len() - 1) * n_wl);
    for (line, rec) in &rows[1..] {
        if rec.len() != n_wl + 1 {
            return Err(csv_error(
                path,
                *line,
                format!("expected {} columns, found {}", n_wl + 1, rec.len()),
            ));
        }
        let t = parse_cell(path, *line, 0, &rec[0])? * scale;
        if let Some(prev) = times.last() {
            if !(t > *prev) {
                return Err(csv_error(
                    path,
                    *line,
                    format!("time axis not strictly increasing ({t} ps after {prev} ps)"),
                ));
            }
        }
        times.push(t);
        for (c, cell) in rec.iter().enumerate().skip(1) {
            values.push(parse_cell(path, *line, c, cell)?);
        }
    }
    if times.is_empty() {
        return Err(csv_error(path, *hline, "no data rows"));
    }
    let delta_a = DMatrix::from_row_slice(times.len(), n_wl, &values);
    TADataset::new(times, wavelengths, delta_a)
}

/// `field_mT,intensity` with shortest round-trip number formatting.
pub fn spectrum_csv(s: &Spectrum<f64>) -> String {
    let mut out = String::with_capacity(s.len() * 32);
    out.push_str("field_mT,intensity\n");
    for (b, y) in s.field.iter().zip(&s.intensity) {
        let _ = writeln!(out, "{b:?},{y:?}");
    }
    out
}

/// Sidecar metadata as `key = "value"` TOML.
pub fn spectrum_metadata(s: &Spectrum<f64>) -> String {
    let mut t = toml::Table::new();
    for (k, v) in &s.metadata {
        t.insert(k.clone(), toml::Value::String(v.clone()));
    }
    t.insert("n_points".into(), toml::Value::Integer(s.len() as i64));
    toml::to_string(&t).unwrap_or_default()
}

pub fn ta_csv(d: &TADataset<f64>) -> String {
    let mut out = String::from("time_ps");
    for w in &d.wavelengths {
        let _ = write!(out, ",{w:?}");
    }
    out.push('\n');
    for (i, t) in d.times.iter().enumerate() {
        let _ = write!(out, "{t:?}");
        for j in 0..d.wavelengths.len() {
            let _ = write!(out, ",{:?}", d.delta_a[(i, j)]);
        }
        out.push('\n');
    }
    out
}

/// Gnuplot script plotting each CSV's first two columns.
pub fn plot_script(title: &str, csv_files: &[String], xlabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot script");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set title \"{title}\"");
    let _ = writeln!(s, "set xlabel \"{xlabel}\"");
    let _ = writeln!(s, "set ylabel \"intensity (arb. u.)\"");
    let _ = writeln!(s, "set xzeroaxis");
    let plots: Vec<String> = csv_files
        .iter()
        .map(|f| format!("'{f}' using 1:2 with lines"))
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}
