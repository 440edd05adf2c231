//! Result records, aligned tables and CSV output.

use std::io::Write;

use pmedian::{SolveResult, SolveStatus};

/// One row of a results table.
#[derive(Debug, Clone)]
pub struct Record {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub outcome: Result<SolveResult, String>,
}

impl Record {
    pub fn from_result(r: SolveResult) -> Self {
        Record {
            name: r.name.clone(),
            n: r.n_clients,
            p: r.p,
            outcome: Ok(r),
        }
    }

    pub fn solved(&self) -> bool {
        matches!(&self.outcome, Ok(r) if r.status == SolveStatus::Optimal)
    }
}

pub const HEADER: [&str; 10] = ["name", "N=M", "p", "OPT/BKN", "LB1", "UB1", "T1", "gap", "iter", "Ttot"];

fn fields(rec: &Record) -> Vec<String> {
    let mut out = vec![rec.name.clone(), rec.n.to_string(), rec.p.to_string()];
    match &rec.outcome {
        Ok(r) => {
            let ttot = if r.status == SolveStatus::Feasible {
                "TL".to_string()
            } else {
                format!("{:.2}", r.ttot)
            };
            out.extend([
                r.value.to_string(),
                format!("{:.2}", r.lb1),
                r.ub1.to_string(),
                format!("{:.2}", r.t1),
                format!("{:.2}%", 100.0 * r.gap),
                r.iterations.to_string(),
                ttot,
            ]);
        }
        Err(e) => {
            out.push(format!("error: {e}"));
            out.extend(std::iter::repeat(String::from("-")).take(6));
        }
    }
    out
}

/// Mean total time over records solved to optimality.
pub fn average_time(records: &[Record]) -> Option<f64> {
    let times: Vec<f64> = records
        .iter()
        .filter(|r| r.solved())
        .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.ttot))
        .collect();
    (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
}

pub fn write_table(mut w: impl Write, records: &[Record], with_average: bool) -> std::io::Result<()> {
    let mut rows: Vec<Vec<String>> = vec![HEADER.iter().map(|s| s.to_string()).collect()];
    rows.extend(records.iter().map(fields));
    if with_average {
        let avg = average_time(records).map_or("-".to_string(), |t| format!("{t:.2}"));
        let mut row = vec![String::from("average"); 1];
        row.extend(std::iter::repeat(String::new()).take(8));
        row.push(avg);
        rows.push(row);
    }
    let widths: Vec<usize> = (0..HEADER.len())
        .map(|c| rows.iter().map(|r| r.get(c).map_or(0, |s| s.chars().count())).max().unwrap_or(0))
        .collect();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        writeln!(w, "{}", line.join("  ").trim_end())?;
    }
    Ok(())
}

pub fn write_csv(w: impl Write, records: &[Record], header: bool) -> csv::Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    if header {
        out.write_record(HEADER)?;
    }
    for rec in records {
        out.write_record(fields(rec))?;
    }
    out.flush()?;
    Ok(())
}
