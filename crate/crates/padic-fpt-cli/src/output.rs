//! Table emission: CSV with '.' decimals, '\n' line endings and
//! 17-significant-digit floats, or the same values mirrored as JSON.

use std::io::Write;

use crate::config::OutputFormat;

/// A rectangular numeric table with named columns.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = String::from("{\"columns\":[");
        for (i, c) in self.columns.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&format!("{:?}", c));
        }
        s.push_str("],\"rows\":[");
        for (i, row) in self.rows.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push('[');
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                s.push_str(&format!("{v:.16e}"));
            }
            s.push(']');
        }
        s.push_str("]}");
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Write rendered content to a path, surfacing the path in any I/O error.
pub fn write_output(content: &str, path: &str) -> Result<(), String> {
    let mut f = std::fs::File::create(path).map_err(|e| format!("{path}: {e}"))?;
    f.write_all(content.as_bytes()).map_err(|e| format!("{path}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_shape_and_precision() {
        let mut t = Table::new(vec!["t".into(), "f".into()]);
        t.push(vec![0.1, 1.0 / 3.0]);
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,f");
        let row = lines.next().unwrap();
        let cells: Vec<&str> = row.split(',').collect();
        // 17 significant digits round-trip exactly.
        assert_eq!(cells[1].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn json_mirrors_csv_values() {
        let mut t = Table::new(vec!["a".into()]);
        t.push(vec![std::f64::consts::PI]);
        let json = t.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["rows"][0][0].as_f64().unwrap(), std::f64::consts::PI);
    }
}
