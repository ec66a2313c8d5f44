use serde::{Deserialize, Serialize};

use super::{reduction, ErrorSummary, EvalError};
use crate::hand::{Hand, HandPair};
use crate::params::Parameter;

/// Model and baseline errors for one parameter, in stored (SI) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub parameter: Parameter,
    pub mad: HandPair<f64>,
    pub model: HandPair<ErrorSummary>,
    pub baseline: HandPair<ErrorSummary>,
    pub reduction_mean: HandPair<i64>,
    pub reduction_median: HandPair<i64>,
}

impl ErrorReport {
    pub fn new(
        parameter: Parameter,
        mad: HandPair<f64>,
        model: HandPair<ErrorSummary>,
        baseline: HandPair<ErrorSummary>,
    ) -> Result<Self, EvalError> {
        let reduction_mean = HandPair::try_from_fn(|h| reduction(baseline.get(h).mean, model.get(h).mean))?;
        let reduction_median = HandPair::try_from_fn(|h| reduction(baseline.get(h).median, model.get(h).median))?;
        Ok(Self {
            parameter,
            mad,
            model,
            baseline,
            reduction_mean,
            reduction_median,
        })
    }

    /// The report's numbers in table units (hand opening in cm).
    pub fn table_row(&self) -> TableRow {
        let k = self.parameter.report_scale();
        TableRow {
            parameter: self.parameter,
            mad: self.mad.map(|_, v| v * k),
            mean: self.model.map(|_, s| s.mean * k),
            baseline_mean: self.baseline.map(|_, s| s.mean * k),
            reduction_mean: self.reduction_mean,
            median: self.model.map(|_, s| s.median * k),
            baseline_median: self.baseline.map(|_, s| s.median * k),
            reduction_median: self.reduction_median,
        }
    }
}

/// One table row in report units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub parameter: Parameter,
    pub mad: HandPair<f64>,
    pub mean: HandPair<f64>,
    pub baseline_mean: HandPair<f64>,
    pub reduction_mean: HandPair<i64>,
    pub median: HandPair<f64>,
    pub baseline_median: HandPair<f64>,
    pub reduction_median: HandPair<i64>,
}

impl TableRow {
    /// Rendered cells: MAD, then (error (baseline), reduction) for mean L,
    /// mean R, median L, median R.
    pub fn cells(&self) -> Vec<String> {
        let mut cells = vec![format!("{:.2}/ {:.2}", self.mad.left, self.mad.right)];
        for (err, base, red) in [
            (&self.mean, &self.baseline_mean, &self.reduction_mean),
            (&self.median, &self.baseline_median, &self.reduction_median),
        ] {
            for hand in Hand::BOTH {
                cells.push(format!("{:.2} ({:.2})", err.get(hand), base.get(hand)));
                cells.push(format!("{}%", red.get(hand)));
            }
        }
        cells
    }
}

pub const TABLE_CSV_HEADER: [&str; 15] = [
    "parameter",
    "mad_L",
    "mad_R",
    "mean_L",
    "baseline_mean_L",
    "red_mean_L",
    "mean_R",
    "baseline_mean_R",
    "red_mean_R",
    "median_L",
    "baseline_median_L",
    "red_median_L",
    "median_R",
    "baseline_median_R",
    "red_median_R",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTable {
    pub rows: Vec<TableRow>,
    pub csv: String,
    pub text: String,
}

/// Orders reports by parameter and renders CSV (full precision, table
/// units) and an aligned text table. With `require_all`, every parameter
/// must be present.
pub fn emit_table(reports: &[ErrorReport], require_all: bool) -> Result<RenderedTable, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty("report set"));
    }
    let mut rows = Vec::new();
    for p in Parameter::ALL {
        match reports.iter().find(|r| r.parameter == p) {
            Some(r) => rows.push(r.table_row()),
            None if require_all => return Err(EvalError::MissingRow(p)),
            None => {}
        }
    }

    let mut csv = TABLE_CSV_HEADER.join(",");
    csv.push('\n');
    for r in &rows {
        let mut fields = vec![r.parameter.name().to_string(), r.mad.left.to_string(), r.mad.right.to_string()];
        for (err, base, red) in [
            (&r.mean, &r.baseline_mean, &r.reduction_mean),
            (&r.median, &r.baseline_median, &r.reduction_median),
        ] {
            for hand in Hand::BOTH {
                fields.push(err.get(hand).to_string());
                fields.push(base.get(hand).to_string());
                fields.push(red.get(hand).to_string());
            }
        }
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }

    let text = render_text(&rows);
    Ok(RenderedTable { rows, csv, text })
}

/// Aligned text table of rows in report units.
pub fn render_text(rows: &[TableRow]) -> String {
    let header: Vec<String> = ["", "MAD L/R", "ē L", "red.", "ē R", "red.", "ẽ L", "red.", "ẽ R", "red."]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut grid = vec![header];
    for r in rows {
        let mut line = vec![r.parameter.label().to_string()];
        line.extend(r.cells());
        grid.push(line);
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for row in &grid {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        text.push_str(line.join("  ").trim_end());
        text.push('\n');
    }
    text
}

/// Reads a CSV written by [`emit_table`].
pub fn parse_table_csv(text: &str) -> Result<Vec<TableRow>, EvalError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| EvalError::Table(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != TABLE_CSV_HEADER {
        return Err(EvalError::Table("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| EvalError::Table(e.to_string()))?;
        let parameter: Parameter = rec[0].parse().map_err(|e: crate::params::ParamError| EvalError::Table(e.to_string()))?;
        let f = |i: usize| -> Result<f64, EvalError> {
            rec[i].parse().map_err(|_| EvalError::Table(format!("bad number `{}`", &rec[i])))
        };
        let n = |i: usize| -> Result<i64, EvalError> {
            rec[i].parse().map_err(|_| EvalError::Table(format!("bad reduction `{}`", &rec[i])))
        };
        rows.push(TableRow {
            parameter,
            mad: HandPair::new(f(1)?, f(2)?),
            mean: HandPair::new(f(3)?, f(6)?),
            baseline_mean: HandPair::new(f(4)?, f(7)?),
            reduction_mean: HandPair::new(n(5)?, n(8)?),
            median: HandPair::new(f(9)?, f(12)?),
            baseline_median: HandPair::new(f(10)?, f(13)?),
            reduction_median: HandPair::new(n(11)?, n(14)?),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(p: Parameter, scale: f64) -> ErrorReport {
        let s = |m: f64, d: f64| ErrorSummary {
            mean: m * scale,
            median: d * scale,
        };
        ErrorReport::new(
            p,
            HandPair::new(0.34 * scale, 0.37 * scale),
            HandPair::new(s(0.31, 0.24), s(0.35, 0.28)),
            HandPair::new(s(0.38, 0.27), s(0.43, 0.31)),
        )
        .unwrap()
    }

    #[test]
    fn rows_follow_parameter_order() {
        let reports = vec![report(Parameter::HandOpening, 0.01), report(Parameter::MaxVelocity, 1.0)];
        let t = emit_table(&reports, false).unwrap();
        assert_eq!(t.rows[0].parameter, Parameter::MaxVelocity);
        assert_eq!(t.rows[1].cells()[0], "0.34/ 0.37");
        assert_eq!(t.rows[0].cells()[1], "0.31 (0.38)");
        assert!(t.text.lines().nth(2).unwrap().starts_with("hand opening (cm)"));
        assert_eq!(
            emit_table(&reports, true).unwrap_err(),
            EvalError::MissingRow(Parameter::InitialAcceleration)
        );
    }

    #[test]
    fn empty_report_set() {
        assert_eq!(emit_table(&[], false).unwrap_err(), EvalError::Empty("report set"));
    }

    #[test]
    fn csv_round_trip() {
        let reports: Vec<ErrorReport> = Parameter::ALL.iter().map(|&p| report(p, 1.0 / 3.0)).collect();
        let t = emit_table(&reports, true).unwrap();
        assert_eq!(parse_table_csv(&t.csv).unwrap(), t.rows);
    }
}
