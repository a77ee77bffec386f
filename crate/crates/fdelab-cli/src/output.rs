//! Output directory layout: `series.csv`, `fits.csv`, `report.txt`,
//! `config.echo` and gnuplot scripts under `plots/`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Fixed 17-significant-digit form used for every float in CSV output.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV table: `#` comment lines describing each column, then a header row.
pub struct Table {
    title: String,
    columns: Vec<(String, String)>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), columns: Vec::new(), rows: Vec::new() }
    }

    pub fn column(mut self, name: &str, meaning: &str) -> Self {
        self.columns.push((name.into(), meaning.into()));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut head = format!("# {}\n", self.title);
        for (name, meaning) in &self.columns {
            head.push_str(&format!("# {name}: {meaning}\n"));
        }
        f.write_all(head.as_bytes()).map_err(|e| CliError::io(path, e))?;
        let mut w = csv::Writer::from_writer(f);
        let names: Vec<&str> = self.columns.iter().map(|c| c.0.as_str()).collect();
        w.write_record(&names).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

/// A gnuplot script reading one of the CSV files; run from the output directory.
pub struct Plot {
    pub name: String,
    pub title: String,
    pub data: &'static str,
    pub logx: bool,
    pub logy: bool,
    pub xlabel: String,
    /// `(x column, y column, legend)`, 1-based as gnuplot counts.
    pub curves: Vec<(usize, usize, String)>,
}

impl Plot {
    fn script(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# {}\n# usage: gnuplot -persist plots/{}.gp  (from the output directory)\n", self.title, self.name));
        s.push_str("set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n");
        s.push_str(&format!("set title '{}'\nset xlabel '{}'\n", self.title, self.xlabel));
        if self.logx {
            s.push_str("set logscale x\n");
        }
        if self.logy {
            s.push_str("set logscale y\nset format y '%.0e'\n");
        }
        let parts: Vec<String> = self
            .curves
            .iter()
            .map(|(x, y, t)| format!("'{}' using {x}:{y} with lines title '{t}'", self.data))
            .collect();
        s.push_str(&format!("plot {}\n", parts.join(", \\\n     ")));
        s
    }
}

pub struct Artifacts {
    pub series: Table,
    pub fits: Table,
    pub report: Vec<String>,
    pub plots: Vec<Plot>,
}

pub fn write_all(dir: &Path, config_echo: &str, a: &Artifacts) -> Result<(), CliError> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| CliError::io(&plots, e))?;
    a.series.write(&dir.join("series.csv"))?;
    a.fits.write(&dir.join("fits.csv"))?;
    let report = dir.join("report.txt");
    fs::write(&report, a.report.join("\n") + "\n").map_err(|e| CliError::io(&report, e))?;
    let echo = dir.join("config.echo");
    fs::write(&echo, config_echo).map_err(|e| CliError::io(&echo, e))?;
    for p in &a.plots {
        let path = plots.join(format!("{}.gp", p.name));
        fs::write(&path, p.script()).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

/// `[output] dir`, else `$FDELAB_OUT/<kind>`, else `fdelab-out/<kind>`.
pub fn resolve_dir(configured: Option<&str>, kind: &str) -> PathBuf {
    if let Some(d) = configured {
        return PathBuf::from(d);
    }
    match std::env::var_os("FDELAB_OUT") {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(kind),
        _ => PathBuf::from("fdelab-out").join(kind),
    }
}
