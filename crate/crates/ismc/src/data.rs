//! Observation files: plain text or CSV with one observation per line. A
//! non-numeric first line is treated as a header; only the first column is
//! read.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{PipelineError, Result};

pub fn read_observations_from<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let Some(field) = rec.get(0) else { continue };
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(_) => return Err(PipelineError::Data(format!("non-finite value on line {}", line + 1))),
            Err(_) if line == 0 => continue,
            Err(_) => return Err(PipelineError::Data(format!("cannot parse '{field}' on line {}", line + 1))),
        }
    }
    if out.is_empty() {
        return Err(PipelineError::Data("no observations".into()));
    }
    Ok(out)
}

pub fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let f = std::fs::File::open(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    read_observations_from(f)
}

/// Writes `y` under a header, followed by the latent columns if any.
pub fn write_series<W: Write>(writer: W, y: &[f64], latent: &[Vec<f64>], latent_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string()];
    header.extend(latent_names.iter().cloned());
    w.write_record(&header)?;
    for (t, v) in y.iter().enumerate() {
        let mut row = vec![format!("{v}")];
        if let Some(z) = latent.get(t) {
            row.extend(z.iter().map(|x| format!("{x}")));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_header() {
        let mut buf = Vec::new();
        write_series(&mut buf, &[1.0, 0.0, 3.5], &[vec![0.1], vec![0.2], vec![0.3]], &["u".into()]).unwrap();
        assert_eq!(read_observations_from(buf.as_slice()).unwrap(), vec![1.0, 0.0, 3.5]);
    }

    #[test]
    fn plain_lines_and_errors() {
        assert_eq!(read_observations_from("1\n2\n\n3\n".as_bytes()).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(read_observations_from("1\nx\n".as_bytes()).is_err());
        assert!(read_observations_from("".as_bytes()).is_err());
    }
}
