//! CSV readers and writers. Floats are written with 17 significant digits so
//! that re-reading reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::elliptic::StripField;
use crate::error::{Error, Result};
use crate::evolution::{DiagRow, Trajectory};
use crate::geometry::Grid;

pub const TRAJECTORY_HEADER: &str = "step,t,mass,d1,d2,dp,dq,dinf,energy";

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn coord_header(grid: &Grid) -> &'static str {
    if grid.dim() == 2 {
        "x,y"
    } else {
        "x"
    }
}

fn coords(grid: &Grid, i: usize) -> String {
    grid.node(i)
        .iter()
        .map(|c| num(*c))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for (k, (t, d)) in traj.times.iter().zip(&traj.diag).enumerate() {
        let _ = writeln!(
            s,
            "{k},{},{},{},{},{},{},{},{}",
            num(*t),
            num(d.mass),
            num(d.d1),
            num(d.d2),
            num(d.dp),
            num(d.dq),
            num(d.dinf),
            num(d.energy)
        );
    }
    s
}

/// Reads times and diagnostics back; states are not stored in the file.
pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty trajectory file".into()))?;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(Error::Parse(format!("unexpected header `{header}`")));
    }
    let mut traj = Trajectory::default();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Parse(format!("line {}: expected 9 fields", ln + 2)));
        }
        let v = |i: usize| -> Result<f64> {
            f[i].trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {}: bad number `{}`", ln + 2, f[i])))
        };
        traj.times.push(v(1)?);
        traj.diag.push(DiagRow {
            mass: v(2)?,
            d1: v(3)?,
            d2: v(4)?,
            dp: v(5)?,
            dq: v(6)?,
            dinf: v(7)?,
            energy: v(8)?,
        });
    }
    Ok(traj)
}

pub fn grid_csv(grid: &Grid) -> String {
    let mut s = format!("index,{},class,bdist,mu\n", coord_header(grid));
    for i in 0..grid.len() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{}",
            coords(grid, i),
            grid.class(i).as_str(),
            num(grid.bdist()[i]),
            num(grid.mu()[i])
        );
    }
    s
}

pub fn full_field_csv(grid: &Grid, u: &[f64]) -> String {
    let mut s = format!("index,{},class,value\n", coord_header(grid));
    for (i, v) in u.iter().enumerate().take(grid.len()) {
        let _ = writeln!(
            s,
            "{i},{},{},{}",
            coords(grid, i),
            grid.class(i).as_str(),
            num(*v)
        );
    }
    s
}

pub fn strip_field_csv(grid: &Grid, g: &[f64]) -> String {
    let mut s = format!("index,{},value\n", coord_header(grid));
    for (k, &i) in grid.strip_indices().iter().enumerate() {
        let _ = writeln!(s, "{i},{},{}", coords(grid, i), num(g[k]));
    }
    s
}

/// Parses `index,value` rows (global node indices) covering every strip node.
pub fn parse_strip_values(grid: &Grid, text: &str) -> Result<StripField> {
    let mut values = vec![None; grid.strip_indices().len()];
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with("index")) {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `index,value`", ln + 1)))?;
        let idx: usize = a
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad index", ln + 1)))?;
        let val: f64 = b
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad value", ln + 1)))?;
        if idx >= grid.len() || !grid.is_strip(idx) {
            return Err(Error::Parse(format!(
                "line {}: node {idx} is not a strip node",
                ln + 1
            )));
        }
        values[grid.local_index(idx)] = Some(val);
    }
    let missing = values.iter().filter(|v| v.is_none()).count();
    if missing > 0 {
        return Err(Error::Parse(format!("{missing} strip nodes have no value")));
    }
    Ok(StripField(
        values.into_iter().map(|v| v.unwrap_or(0.0)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainBox;
    use proptest::prelude::*;

    #[test]
    fn grid_dump_1d() {
        let g = Grid::build(DomainBox::unit(1).unwrap(), 0.25, 0.25).unwrap();
        let s = grid_csv(&g);
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("index,x,class,bdist,mu"));
        assert!(lines
            .next()
            .unwrap()
            .starts_with("0,1.2500000000000000e-1,strip,"));
        assert_eq!(s.lines().count(), 5);
    }

    #[test]
    fn strip_values_need_every_node() {
        let g = Grid::build(DomainBox::unit(1).unwrap(), 0.25, 0.25).unwrap();
        let ok = parse_strip_values(&g, "index,value\n0,1.5\n3,-2\n").unwrap();
        assert_eq!(ok.0, vec![1.5, -2.0]);
        assert!(parse_strip_values(&g, "0,1.5\n").is_err());
        assert!(parse_strip_values(&g, "0,1\n1,2\n3,3\n").is_err());
    }

    proptest! {
        #[test]
        fn trajectory_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 8..40)) {
            let mut tr = Trajectory::default();
            for (k, v) in vals.iter().enumerate() {
                tr.times.push(k as f64 * 0.1);
                tr.diag.push(DiagRow { mass: *v, d1: v.abs(), d2: v / 3.0, dp: v * 1e-7, dq: 1.0 / (1.0 + v.abs()), dinf: 0.0, energy: v * v });
            }
            let back = parse_trajectory_csv(&trajectory_csv(&tr)).unwrap();
            prop_assert_eq!(back.times, tr.times);
            prop_assert_eq!(back.diag, tr.diag);
        }
    }
}
