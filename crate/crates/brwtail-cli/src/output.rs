//! CSV/JSON emission with the resolved experiment spec attached.
//!
//! CSV goes to stdout (or `<out>/<name>.csv`) with `#`-prefixed comment
//! lines carrying the spec; file outputs also get a sibling
//! `<name>.meta.json`. JSON reports embed the spec as a field.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::commands::CliError;

pub struct Emitter {
    out_dir: Option<PathBuf>,
    no_timestamp: bool,
    gnuplot: bool,
    spec: Value,
}

impl Emitter {
    pub fn new(out_dir: Option<&str>, no_timestamp: bool, gnuplot: bool, spec: Value) -> Result<Self, CliError> {
        let out_dir = match out_dir {
            Some(d) => {
                let p = PathBuf::from(d);
                fs::create_dir_all(&p)?;
                Some(p)
            }
            None => None,
        };
        Ok(Emitter { out_dir, no_timestamp, gnuplot, spec })
    }

    fn timestamp(&self) -> Option<u64> {
        if self.no_timestamp {
            None
        } else {
            Some(SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
        }
    }

    /// Emits one CSV table. Rows are already formatted cells.
    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut buf: Vec<u8> = Vec::new();
        writeln!(buf, "# spec: {}", serde_json::to_string(&self.spec)?)?;
        if let Some(ts) = self.timestamp() {
            writeln!(buf, "# generated_at_unix: {ts}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for row in rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        match &self.out_dir {
            Some(dir) => {
                let path = dir.join(format!("{name}.csv"));
                fs::write(&path, &buf)?;
                fs::write(
                    dir.join(format!("{name}.meta.json")),
                    serde_json::to_string_pretty(&self.meta_value())? + "\n",
                )?;
                if self.gnuplot {
                    fs::write(dir.join(format!("{name}.gnuplot")), gnuplot_script(name, header))?;
                }
            }
            None => {
                std::io::stdout().write_all(&buf)?;
            }
        }
        Ok(())
    }

    /// Emits one JSON report with the spec (and timestamp) embedded.
    pub fn json(&self, name: &str, mut body: Value) -> Result<(), CliError> {
        let obj = body.as_object_mut().expect("json reports are objects");
        obj.insert("spec".into(), self.spec.clone());
        if let Some(ts) = self.timestamp() {
            obj.insert("generated_at_unix".into(), json!(ts));
        }
        let text = serde_json::to_string_pretty(&body)? + "\n";
        match &self.out_dir {
            Some(dir) => fs::write(dir.join(format!("{name}.json")), text)?,
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    fn meta_value(&self) -> Value {
        match self.timestamp() {
            Some(ts) => json!({"spec": self.spec, "generated_at_unix": ts}),
            None => json!({"spec": self.spec}),
        }
    }
}

fn gnuplot_script(name: &str, header: &[&str]) -> String {
    let ylabel = header.get(1).copied().unwrap_or("value");
    format!(
        "set datafile separator ','\n\
         set datafile commentschars '#'\n\
         set key autotitle columnhead\n\
         set xlabel '{x}'\n\
         set ylabel '{y}'\n\
         plot '{name}.csv' using 1:2 with linespoints\n",
        x = header.first().copied().unwrap_or("x"),
        y = ylabel,
        name = name
    )
}

/// Formats an f64 with the shortest round-trip representation.
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// Reads back one of our CSV files: skips `#` comments, returns header and
/// rows. Used by tests to verify round-tripping.
pub fn read_csv(content: &str) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(content.as_bytes());
    let header = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
