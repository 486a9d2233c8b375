//! On-disk database format and atomic file output.
//!
//! A database directory holds three UTF-8 CSV files with mandatory headers:
//!
//! | file               | columns                         |
//! |--------------------|---------------------------------|
//! | `polarization.csv` | `t_h,j_A_cm2,u_V`               |
//! | `r_ohm.csv`        | `t_h,j_A_cm2,r_ohm_cm2`         |
//! | `voltage.csv`      | `t_h,u_V` (one row per hour from 0) |
//!
//! Floats are written in shortest round-trip form, so a write/read cycle is bit-exact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::identification::{CurvePoint, PolarizationCurve};
use crate::synthdata::Database;

pub const POLARIZATION_FILE: &str = "polarization.csv";
pub const R_OHM_FILE: &str = "r_ohm.csv";
pub const VOLTAGE_FILE: &str = "voltage.csv";
pub const TRUTH_FILE: &str = "truth.json";

const POLARIZATION_HEADER: [&str; 3] = ["t_h", "j_A_cm2", "u_V"];
const R_OHM_HEADER: [&str; 3] = ["t_h", "j_A_cm2", "r_ohm_cm2"];
const VOLTAGE_HEADER: [&str; 2] = ["t_h", "u_V"];

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().ok_or_else(|| Error::format(path, "not a file path"))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Numerical(format!("serialization failed: {e}")))?;
    v.push(b'\n');
    Ok(v)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// CSV document built in memory, one record per call.
pub struct CsvBuffer {
    w: csv::Writer<Vec<u8>>,
}

impl CsvBuffer {
    pub fn new(header: &[&str]) -> Self {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(header).expect("writing to memory");
        Self { w }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).expect("writing to memory");
    }

    pub fn floats(&mut self, fields: &[f64]) {
        self.row(fields.iter().map(|v| v.to_string()));
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.w.into_inner().expect("flushing to memory")
    }
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        })?;
    let got = r.headers().map_err(|e| Error::format(path, e))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(Error::format(
            path,
            format!(
                "expected header {}, found {}",
                header.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| Error::format(path, e))?;
            rec.iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::format(path, format!("line {}: cannot parse {f:?} as a number", i + 2)))
                })
                .collect()
        })
        .collect()
}

/// Consecutive rows sharing the first column, as `(t, rest)` groups.
fn group_by_time(rows: Vec<Vec<f64>>) -> Vec<(f64, Vec<(f64, f64)>)> {
    let mut out: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some((t, g)) if *t == r[0] => g.push((r[1], r[2])),
            _ => out.push((r[0], vec![(r[1], r[2])])),
        }
    }
    out
}

pub fn write_database(dir: &Path, db: &Database) -> Result<()> {
    let mut pol = CsvBuffer::new(&POLARIZATION_HEADER);
    let mut res = CsvBuffer::new(&R_OHM_HEADER);
    for c in &db.curves {
        for p in &c.points {
            pol.floats(&[c.t, p.j, p.u]);
        }
        for (j, r) in &c.r_ohm_profile {
            res.floats(&[c.t, *j, *r]);
        }
    }
    let mut volt = CsvBuffer::new(&VOLTAGE_HEADER);
    for (k, v) in db.voltage.iter().enumerate() {
        volt.floats(&[k as f64, *v]);
    }
    write_atomic(&dir.join(POLARIZATION_FILE), &pol.into_bytes())?;
    write_atomic(&dir.join(R_OHM_FILE), &res.into_bytes())?;
    write_atomic(&dir.join(VOLTAGE_FILE), &volt.into_bytes())
}

pub fn read_database(dir: &Path) -> Result<Database> {
    let pol_path = dir.join(POLARIZATION_FILE);
    let res_path = dir.join(R_OHM_FILE);
    let volt_path = dir.join(VOLTAGE_FILE);
    let pol = group_by_time(read_rows(&pol_path, &POLARIZATION_HEADER)?);
    let res = group_by_time(read_rows(&res_path, &R_OHM_HEADER)?);
    if pol.len() != res.len() || pol.iter().zip(&res).any(|(a, b)| a.0 != b.0) {
        return Err(Error::format(
            &res_path,
            "resistance profiles must list the same characterization times as the polarization curves",
        ));
    }
    let curves = pol
        .into_iter()
        .zip(res)
        .map(|((t, pts), (_, prof))| PolarizationCurve {
            t,
            points: pts.into_iter().map(|(j, u)| CurvePoint { j, u }).collect(),
            r_ohm_profile: prof,
        })
        .collect::<Vec<_>>();
    if let Some(w) = curves.windows(2).find(|w| w[1].t <= w[0].t) {
        return Err(Error::format(
            &pol_path,
            format!("characterization times must increase, got {} then {}", w[0].t, w[1].t),
        ));
    }
    let rows = read_rows(&volt_path, &VOLTAGE_HEADER)?;
    let voltage = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            if r[0] == k as f64 {
                Ok(r[1])
            } else {
                Err(Error::format(
                    &volt_path,
                    format!("row {} has t_h = {}, expected {k}", k + 2, r[0]),
                ))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    for c in &curves {
        c.validate()?;
    }
    Ok(Database { curves, voltage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aging_laws::JlimModel;
    use crate::synthdata::{generate_database, GroundTruth, PlantedJlim};

    fn small_db() -> Database {
        let gt = GroundTruth {
            horizon: 1500,
            jlim: PlantedJlim::Law(JlimModel::Model1 { a1: 1.8, k1: 0.2 }),
            ..Default::default()
        };
        generate_database(&gt, 0).unwrap()
    }

    #[test]
    fn database_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let db = small_db();
        write_database(dir.path(), &db).unwrap();
        let back = read_database(dir.path()).unwrap();
        assert_eq!(back, db);
        let text = fs::read_to_string(dir.path().join(VOLTAGE_FILE)).unwrap();
        assert!(text.starts_with("t_h,u_V\n0,"));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 1502);
    }

    #[test]
    fn malformed_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_database(dir.path(), &small_db()).unwrap();
        fs::write(dir.path().join(VOLTAGE_FILE), "t,u\n0,0.6\n").unwrap();
        assert!(matches!(read_database(dir.path()), Err(Error::Format { .. })));
        fs::write(dir.path().join(VOLTAGE_FILE), "t_h,u_V\n0,abc\n").unwrap();
        assert!(matches!(read_database(dir.path()), Err(Error::Format { .. })));
        fs::write(dir.path().join(VOLTAGE_FILE), "t_h,u_V\n1,0.6\n").unwrap();
        assert!(matches!(read_database(dir.path()), Err(Error::Format { .. })));
        fs::remove_file(dir.path().join(VOLTAGE_FILE)).unwrap();
        assert!(read_database(dir.path()).unwrap_err().is_io());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.json");
        write_json(&p, &vec![1.0, 2.5]).unwrap();
        write_json(&p, &vec![3.0]).unwrap();
        let v: Vec<f64> = read_json(&p).unwrap();
        assert_eq!(v, vec![3.0]);
        let leftovers = fs::read_dir(p.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
