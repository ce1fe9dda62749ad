use std::fmt::Write as _;
use std::str::FromStr;

use super::ScenarioError;
use crate::state::{EnvironmentState, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceFormat {
    #[default]
    Csv,
    Jsonl,
}

impl FromStr for TraceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "jsonl" => Ok(TraceFormat::Jsonl),
            other => Err(format!("unknown trace format `{other}` (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub entity: String,
    pub slot: String,
    pub unit: String,
}

impl Column {
    /// `<entity>.<slot>[unit]`.
    pub fn header(&self) -> String {
        format!("{}.{}[{}]", self.entity, self.slot, self.unit)
    }

    fn parse(header: &str) -> Option<Column> {
        let (name, rest) = header.split_once('[')?;
        let unit = rest.strip_suffix(']')?;
        let (entity, slot) = name.split_once('.')?;
        Some(Column {
            entity: entity.into(),
            slot: slot.into(),
            unit: unit.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub event: String,
}

/// Sampled slot values plus the log of fired events.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub columns: Vec<Column>,
    pub times: Vec<f64>,
    /// Row-major, one entry per column.
    pub rows: Vec<Vec<f64>>,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub(crate) fn for_env(env: &EnvironmentState, columns: &[(String, String)]) -> Self {
        let columns = columns
            .iter()
            .map(|(e, s)| Column {
                entity: e.clone(),
                slot: s.clone(),
                unit: env
                    .read_slot(e, s)
                    .map(|r| r.unit)
                    .unwrap_or(Unit::Count)
                    .symbol()
                    .into(),
            })
            .collect();
        Trace {
            columns,
            ..Default::default()
        }
    }

    pub(crate) fn record(&mut self, env: &EnvironmentState) {
        let row = self
            .columns
            .iter()
            .map(|c| env.read_slot(&c.entity, &c.slot).map(|r| r.value).unwrap_or(f64::NAN))
            .collect();
        self.times.push(env.time());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, entity: &str, slot: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.entity == entity && c.slot == slot)
    }

    /// Values of one column, in row order.
    pub fn series(&self, entity: &str, slot: &str) -> Option<Vec<f64>> {
        let i = self.column_index(entity, slot)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn header(&self) -> String {
        let mut h = String::from("time_s");
        for c in &self.columns {
            h.push(',');
            h.push_str(&c.header());
        }
        h
    }

    pub fn to_csv(&self) -> Result<String, ScenarioError> {
        if self.is_empty() {
            return Err(ScenarioError::EmptyTrace);
        }
        let mut out = self.header();
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.rows) {
            write!(out, "{t}").unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Rows and events merged by time; on equal times rows come first.
    pub fn to_jsonl(&self) -> Result<String, ScenarioError> {
        if self.is_empty() {
            return Err(ScenarioError::EmptyTrace);
        }
        let keys: Vec<String> = self
            .columns
            .iter()
            .map(|c| serde_json::to_string(&c.header()).unwrap())
            .collect();
        let num = |v: f64| serde_json::to_string(&v).unwrap();
        let mut out = String::new();
        let mut ev = self.events.iter().peekable();
        for (t, row) in self.times.iter().zip(&self.rows) {
            while let Some(e) = ev.next_if(|e| e.time < *t) {
                write_event(&mut out, e);
            }
            write!(out, "{{\"time_s\":{}", num(*t)).unwrap();
            for (k, v) in keys.iter().zip(row) {
                write!(out, ",{k}:{}", num(*v)).unwrap();
            }
            out.push_str("}\n");
        }
        for e in ev {
            write_event(&mut out, e);
        }
        Ok(out)
    }

    pub fn emit(&self, format: TraceFormat) -> Result<String, ScenarioError> {
        match format {
            TraceFormat::Csv => self.to_csv(),
            TraceFormat::Jsonl => self.to_jsonl(),
        }
    }
}

fn write_event(out: &mut String, e: &TraceEvent) {
    writeln!(
        out,
        "{{\"t\":{},\"event\":{}}}",
        serde_json::to_string(&e.time).unwrap(),
        serde_json::to_string(&e.event).unwrap()
    )
    .unwrap();
}

/// Reads a csv produced by [`Trace::to_csv`]. The event stream is not part
/// of the csv and comes back empty.
pub fn parse_csv(text: &str) -> Result<Trace, ScenarioError> {
    let bad = |line: usize, msg: String| ScenarioError::Parse {
        line,
        column: 1,
        message: msg,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or(ScenarioError::EmptyTrace)?;
    let mut fields = header.split(',');
    if fields.next() != Some("time_s") {
        return Err(bad(1, "header must start with `time_s`".into()));
    }
    let columns = fields
        .map(|h| Column::parse(h).ok_or_else(|| bad(1, format!("bad column header `{h}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut trace = Trace {
        columns,
        ..Default::default()
    };
    for (i, line) in lines.enumerate() {
        let values = line
            .split(',')
            .map(|f| f.parse::<f64>().map_err(|_| bad(i + 2, format!("bad number `{f}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != trace.columns.len() + 1 {
            return Err(bad(
                i + 2,
                format!("expected {} fields, got {}", trace.columns.len() + 1, values.len()),
            ));
        }
        trace.times.push(values[0]);
        trace.rows.push(values[1..].to_vec());
    }
    if trace.is_empty() {
        return Err(ScenarioError::EmptyTrace);
    }
    Ok(trace)
}
