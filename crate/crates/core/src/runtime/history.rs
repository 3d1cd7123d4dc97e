use std::io;
use std::path::Path;

use super::EvaluationRecord;
use crate::constraints::ConstraintValues;
use crate::domain::{Point, Scope, Value};
use crate::problem::Problem;

/// Columns: `eval_index, cached, feasible, objective`, every variable in
/// declaration order (empty when nonacting), then every constraint.
fn header(problem: &Problem) -> Vec<String> {
    let mut h: Vec<String> = ["eval_index", "cached", "feasible", "objective"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(problem.domain.variables().iter().map(|v| v.id.clone()));
    h.extend(problem.constraints.constraints().iter().map(|c| c.id.clone()));
    h
}

/// Renders records as CSV. Numbers use the shortest round-trip form, so the
/// output is a pure function of the records.
pub fn history_csv(problem: &Problem, records: &[EvaluationRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(problem)).expect("in-memory write");
    for r in records {
        let mut row = vec![
            r.index.to_string(),
            r.cached.to_string(),
            r.feasible.to_string(),
            format!("{}", r.objective),
        ];
        for spec in problem.domain.variables() {
            row.push(
                problem
                    .domain
                    .value_of(&r.point, &spec.id)
                    .map(|v| spec.render(v))
                    .unwrap_or_default(),
            );
        }
        for c in problem.constraints.constraints() {
            row.push(r.constraints.get(&c.id).map(|v| format!("{v}")).unwrap_or_default());
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn write_history(problem: &Problem, records: &[EvaluationRecord], path: impl AsRef<Path>) -> io::Result<()> {
    std::fs::write(path, history_csv(problem, records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub index: usize,
    pub cached: bool,
    pub feasible: bool,
    pub objective: f64,
    pub point: Point,
    pub constraints: ConstraintValues,
}

/// Parses a history file written by [`write_history`].
pub fn read_history(problem: &Problem, text: &str) -> Result<Vec<HistoryRow>, String> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let expected = header(problem);
    let got: Vec<String> = rd
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(str::to_owned)
        .collect();
    if got != expected {
        return Err("history header does not match the problem".into());
    }
    let domain = &problem.domain;
    let n_vars = domain.variables().len();
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let bad = |what: &str| format!("row {}: bad {what}", line + 1);
        let parse_bool = |s: &str, what: &str| s.parse::<bool>().map_err(|_| bad(what));
        let mut point = Point::default();
        for (k, spec) in domain.variables().iter().enumerate() {
            let cell = &rec[4 + k];
            if cell.is_empty() {
                continue;
            }
            let v = spec.parse_value(cell).ok_or_else(|| bad(&spec.id))?;
            if spec.var_type.is_meta() {
                point.meta.insert(spec.id.clone(), v);
            } else {
                match (&spec.scope, v) {
                    (Scope::Categorical { .. }, Value::Category(c)) => {
                        point.categorical.insert(spec.id.clone(), c);
                    }
                    (_, v) => {
                        point.standard.insert(spec.id.clone(), v.as_f64());
                    }
                }
            }
        }
        let mut constraints = ConstraintValues::new();
        for (k, c) in problem.constraints.constraints().iter().enumerate() {
            let cell = &rec[4 + n_vars + k];
            if !cell.is_empty() {
                constraints.insert(c.id.clone(), cell.parse().map_err(|_| bad(&c.id))?);
            }
        }
        rows.push(HistoryRow {
            index: rec[0].parse().map_err(|_| bad("eval_index"))?,
            cached: parse_bool(&rec[1], "cached")?,
            feasible: parse_bool(&rec[2], "feasible")?,
            objective: rec[3].parse().map_err(|_| bad("objective"))?,
            point,
            constraints,
        });
    }
    Ok(rows)
}
