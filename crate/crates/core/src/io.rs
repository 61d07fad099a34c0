//! CSV and JSON output. Reports are written as pretty JSON with a trailing
//! newline; anything run-dependent (timestamps, thread counts) goes to a
//! separate metadata file so reports stay byte-identical across reruns.

use crate::characteristics::{EmpiricalTriplet, HISTOGRAM_EDGES};
use crate::error::Result;
use crate::geo_sde::Solution;
use crate::lab::SampleSet;
use crate::path::CadlagPath;
use serde::Serialize;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

fn parent_dirs(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    Ok(())
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    parent_dirs(path)?;
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    version: &'a str,
    unix_time: u64,
    parallel: bool,
}

/// Run metadata kept out of the report proper.
pub fn write_meta(path: &Path, command: &str) -> Result<()> {
    let unix_time = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    write_json(path, &Meta { command, version: env!("CARGO_PKG_VERSION"), unix_time, parallel: crate::par::is_parallel() })
}

/// One row per node: `path,t,z0..z{k},jump,j0..j{d}` where z are the global
/// coordinates of the node and j the algebra coordinates of the jump at that
/// node (zeros and `jump = 0` when there is none).
pub fn write_paths_csv(path: &Path, paths: &[CadlagPath]) -> Result<()> {
    parent_dirs(path)?;
    let mut w = csv::Writer::from_path(path)?;
    let Some(first) = paths.first() else {
        w.write_record(["path", "t"])?;
        w.flush()?;
        return Ok(());
    };
    let group = first.group();
    let (k, d) = (group.coordinate_count(), group.dim());
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((0..k).map(|i| format!("z{i}")));
    header.push("jump".into());
    header.extend((0..d).map(|i| format!("j{i}")));
    w.write_record(&header)?;
    for (p, z) in paths.iter().enumerate() {
        for (i, (t, node)) in z.times().iter().zip(z.nodes()).enumerate() {
            let mut row = vec![p.to_string(), t.to_string()];
            row.extend(group.coordinates(node).iter().map(|v| v.to_string()));
            let jump = if i == 0 { None } else { z.increments()[i - 1].jump.as_ref() };
            match jump {
                Some(j) => {
                    row.push("1".into());
                    row.extend(group.log(j)?.iter().map(|v| v.to_string()));
                }
                None => {
                    row.push("0".into());
                    row.extend((0..d).map(|_| "0".to_string()));
                }
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per node: `path,t,x0..x{m}`.
pub fn write_states_csv(path: &Path, sols: &[Solution]) -> Result<()> {
    parent_dirs(path)?;
    let mut w = csv::Writer::from_path(path)?;
    let m = sols.first().and_then(|s| s.states.first()).map_or(0, Vec::len);
    let mut header = vec!["path".to_string(), "t".to_string()];
    header.extend((0..m).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (p, s) in sols.iter().enumerate() {
        for (t, x) in s.times.iter().zip(&s.states) {
            let mut row = vec![p.to_string(), t.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Jump intensity per radius bin of ‖log Δ‖.
pub fn write_histogram_csv(path: &Path, est: &EmpiricalTriplet) -> Result<()> {
    parent_dirs(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["r_min", "r_max", "intensity"])?;
    for (i, v) in est.histogram.iter().enumerate() {
        w.write_record([HISTOGRAM_EDGES[i].to_string(), HISTOGRAM_EDGES[i + 1].to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format `observable,side,index,component,value`.
pub fn write_samples_csv(path: &Path, sets: &[SampleSet]) -> Result<()> {
    parent_dirs(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["observable", "side", "index", "component", "value"])?;
    for s in sets {
        for (side, rows) in [("reference", &s.reference), ("transformed", &s.transformed)] {
            for (i, row) in rows.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    w.write_record([s.observable.as_str(), side, &i.to_string(), &c.to_string(), &v.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{DriverSpec, Grid, JumpLaw, PreparedDriver};
    use crate::lie::LieGroup;

    #[test]
    fn paths_csv_has_one_row_per_node() {
        let spec = DriverSpec::CompoundPoisson { group: LieGroup::additive(2), rate: 5.0, law: JumpLaw::IsotropicGaussian { sigma: 1.0 } };
        let d = PreparedDriver::new(spec).unwrap();
        let z = d.simulate(&Grid::new(1.0, 0.125).unwrap(), 3, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("sub/paths.csv");
        write_paths_csv(&f, std::slice::from_ref(&z)).unwrap();
        let text = fs::read_to_string(&f).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path,t,z0,z1,jump,j0,j1");
        assert_eq!(lines.len(), z.len() + 1);
        let jumps = lines[1..].iter().filter(|l| l.split(',').nth(4) == Some("1")).count();
        assert_eq!(jumps, z.jumps().len());
    }

    #[test]
    fn json_is_stable() {
        let v = serde_json::json!({"b": [1.0, 0.1], "a": 2});
        assert_eq!(to_json_string(&v).unwrap(), to_json_string(&v).unwrap());
        assert!(to_json_string(&v).unwrap().ends_with("}\n"));
    }
}
