//! Flat-file formats: universes as CSV, reports and decompositions as JSON,
//! sweeps as CSV. All writes go through a temp file and a rename.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Universe;

use super::measure::{BenchRow, BENCH_HEADER};

/// Writes `bytes` to `path` atomically: a sibling temp file is written,
/// synced and renamed over the target.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Parse(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// CSV layout: a first record `m=<dim>` (plus `labeled` when rows carry a
/// leading label column), then one row per point. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_universe_csv<W: Write>(u: &Universe, w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(w);
    let m = format!("m={}", u.dim());
    match u.labels() {
        Some(labels) => {
            out.write_record([m.as_str(), "labeled"])?;
            for (label, row) in labels.iter().zip(u.rows()) {
                let mut rec = vec![label.clone()];
                rec.extend(row.iter().map(|v| v.to_string()));
                out.write_record(&rec)?;
            }
        }
        None => {
            out.write_record([m.as_str()])?;
            for row in u.rows() {
                out.write_record(row.iter().map(|v| v.to_string()))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn universe_to_csv(u: &Universe) -> Result<String> {
    let mut buf = Vec::new();
    write_universe_csv(u, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_universe_csv<R: Read>(r: R) -> Result<Universe> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Parse("empty universe file".into()))??;
    let m: usize = header
        .get(0)
        .and_then(|h| h.strip_prefix("m="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse("first record must be m=<dimension>".into()))?;
    let labeled = header.get(1) == Some("labeled");
    let mut labels = Vec::new();
    let mut pts = Vec::new();
    for (line, rec) in records.enumerate() {
        let rec = rec?;
        let mut fields = rec.iter();
        if labeled {
            labels.push(fields.next().unwrap_or_default().to_string());
        }
        let before = pts.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad number {f:?}", line + 1)))?;
            pts.push(v);
        }
        if pts.len() - before != m {
            return Err(Error::Parse(format!(
                "row {}: expected {m} coordinates, found {}",
                line + 1,
                pts.len() - before
            )));
        }
    }
    let u = Universe::new(m, pts)?;
    if labeled {
        u.with_labels(labels)
    } else {
        Ok(u)
    }
}

pub fn load_universe(path: &Path) -> Result<Universe> {
    read_universe_csv(fs::File::open(path)?)
}

pub fn save_universe(u: &Universe, path: &Path) -> Result<()> {
    atomic_write(path, universe_to_csv(u)?.as_bytes())
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(BENCH_HEADER)?;
    for r in rows {
        out.write_record([
            r.universe.clone(),
            r.mechanism.clone(),
            r.n.to_string(),
            r.rho_or_eps.to_string(),
            r.alpha.map(|a| a.to_string()).unwrap_or_default(),
            r.err2_mean.to_string(),
            r.err2_sd.to_string(),
            r.errinf_mean.to_string(),
            r.bound_ub.to_string(),
            r.bound_lb.to_string(),
            r.seed.to_string(),
        ])?;
    }
    let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}
