use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ultranet::padic::Prime;
use ultranet::CellFunction;

use crate::CliError;

/// 17 significant digits; `inf`, `-inf` and `nan` spelled out, `-0` as `0`.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        "0.0000000000000000e0".into()
    } else if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Cell densities over a time grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    /// `(basin name, cell digits)` per column.
    pub columns: Vec<(String, String)>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(names: &[String], p: Prime, like: &CellFunction) -> Result<Self, CliError> {
        let mut columns = Vec::new();
        for (k, name) in names.iter().enumerate() {
            for i in 0..like.cells_per_basin() {
                let cell = like.cell(k, i).map_err(CliError::Core)?;
                columns.push((name.clone(), cell.digit_label(p)));
            }
        }
        Ok(Series {
            columns,
            times: Vec::new(),
            rows: Vec::new(),
        })
    }

    pub fn push(&mut self, t: f64, f: &CellFunction) {
        self.times.push(t);
        self.rows.push(f.flatten());
    }

    pub fn long_csv(&self) -> String {
        let mut s = String::from("t,basin,cell,value\n");
        for (t, row) in self.times.iter().zip(&self.rows) {
            for ((b, c), v) in self.columns.iter().zip(row) {
                let _ = writeln!(s, "{},{b},{c},{}", num(*t), num(*v));
            }
        }
        s
    }

    pub fn columns_dat(&self) -> String {
        let mut s = String::from("# t");
        for (b, c) in &self.columns {
            let _ = write!(s, " {b}:{c}");
        }
        s.push('\n');
        for (t, row) in self.times.iter().zip(&self.rows) {
            s.push_str(&num(*t));
            for v in row {
                s.push(' ');
                s.push_str(&num(*v));
            }
            s.push('\n');
        }
        s
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// `<stem>.csv` in long format and `<stem>.dat` with one column per cell.
pub fn emit_plotdata(dir: &Path, stem: &str, series: &Series) -> Result<(), CliError> {
    write_file(dir, &format!("{stem}.csv"), &series.long_csv())?;
    write_file(dir, &format!("{stem}.dat"), &series.columns_dat())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(-0.0), "0.0000000000000000e0");
    }

    #[test]
    fn empty_series_is_header_only() {
        let s = Series::default();
        assert_eq!(s.long_csv(), "t,basin,cell,value\n");
        assert_eq!(s.columns_dat(), "# t\n");
    }

    #[test]
    fn cartesian_row_count() {
        let p = Prime::new(2).unwrap();
        let f = CellFunction::new(p, 2, vec![0], vec![vec![0.5, 0.25]]).unwrap();
        let mut s = Series::new(&["A".to_string()], p, &f).unwrap();
        for t in [0.0, 1.0, 2.0] {
            s.push(t, &f);
        }
        assert_eq!(s.long_csv().lines().count(), 1 + 6);
        assert_eq!(s.columns_dat().lines().count(), 1 + 3);
        assert!(s.long_csv().contains("A,1,2.5000000000000000e-1"));
    }

    #[test]
    fn unwritable_dir() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let err = emit_plotdata(&file.join("sub"), "d", &Series::default()).unwrap_err();
        assert!(matches!(err, CliError::Io(_)));
    }
}
