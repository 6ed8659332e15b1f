use std::fmt::Display;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// Ordered `key=value` parameter list, rendered as `k1=v1;k2=v2`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params(Vec<(String, String)>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Display) -> Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse(text: &str) -> Self {
        Self(
            text.split(';')
                .filter(|s| !s.is_empty())
                .map(|kv| match kv.split_once('=') {
                    Some((k, v)) => (k.to_string(), v.to_string()),
                    None => (kv.to_string(), String::new()),
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema_version: u32,
    pub experiment: String,
    pub params: String,
    pub metric: String,
    pub value: Option<f64>,
    pub dispersion: Option<f64>,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn value(experiment: &str, params: &Params, metric: &str, value: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            params: params.render(),
            metric: metric.to_string(),
            value: Some(value),
            dispersion: None,
            error: None,
        }
    }

    pub fn with_dispersion(mut self, dispersion: f64) -> Self {
        self.dispersion = Some(dispersion);
        self
    }

    pub fn failed(experiment: &str, params: &Params, metric: &str, error: impl Display) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            params: params.render(),
            metric: metric.to_string(),
            value: None,
            dispersion: None,
            error: Some(error.to_string()),
        }
    }

    pub fn param(&self, key: &str) -> Option<String> {
        Params::parse(&self.params).get(key).map(str::to_string)
    }
}

/// Append-only result table with a fixed CSV layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ResultRow>) {
        self.rows.extend(rows);
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn has_errors(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }

    /// Rows with the given metric whose params contain every `(key, value)`.
    pub fn select<'a>(
        &'a self,
        metric: &'a str,
        filter: &'a [(&'a str, &'a str)],
    ) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| {
            if r.metric != metric {
                return false;
            }
            let p = Params::parse(&r.params);
            filter.iter().all(|(k, v)| p.get(k) == Some(*v))
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "schema_version",
                "experiment",
                "params",
                "metric",
                "value",
                "dispersion",
                "error",
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let p = Params::new().with("B", 12).with("lambda", 0.05);
        let mut t = ResultTable::new();
        t.push(ResultRow::value("e", &p, "omega", 1.25).with_dispersion(0.5));
        t.push(ResultRow::failed("e", &p, "omega", "too big, really"));
        let text = t.to_csv_string().unwrap();
        assert!(text.starts_with("schema_version,experiment,params,metric,value,dispersion,error\n"));
        assert!(text.contains("1,e,B=12;lambda=0.05,omega,1.25,0.5,\n"));
        let back = ResultTable::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert!(back.has_errors());
        assert_eq!(back.select("omega", &[("B", "12")]).count(), 2);
        assert_eq!(back.rows()[0].param("lambda").as_deref(), Some("0.05"));
    }

    #[test]
    fn empty_table_still_has_header() {
        let text = ResultTable::new().to_csv_string().unwrap();
        assert_eq!(text.lines().count(), 1);
    }
}
