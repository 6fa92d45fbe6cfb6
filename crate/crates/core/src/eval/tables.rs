//! CSV score tables: `topic_id,metric,value` for per-topic results and
//! `condition,size,seed,topic_id,value` for cross-validation grids.

use std::collections::BTreeMap;
use std::io::Read;

use super::{Metric, MetricResult, ScoreGrid};
use crate::error::{Error, Result};

pub fn score_table_csv(results: &[MetricResult]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["topic_id", "metric", "value"]).expect("write to Vec");
    for r in results {
        let metric = r.metric.to_string();
        for (topic, v) in &r.per_topic {
            w.write_record([topic.as_str(), metric.as_str(), v.to_string().as_str()])
                .expect("write to Vec");
        }
    }
    w.into_inner().expect("flush to Vec")
}

fn csv_err(what: &'static str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(what, line, e.to_string())
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, what: &'static str, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_err(what, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(what, 1, format!("expected header {}", expected.join(","))));
    }
    Ok(())
}

/// Reads a score table; one [`MetricResult`] per metric, in first-seen order.
pub fn read_score_table<R: Read>(reader: R) -> Result<Vec<MetricResult>> {
    const WHAT: &str = "score table";
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, WHAT, &["topic_id", "metric", "value"])?;
    let mut order: Vec<Metric> = Vec::new();
    let mut tables: BTreeMap<Metric, BTreeMap<String, f64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(WHAT, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let metric: Metric = rec[1].parse().map_err(|e: String| Error::parse(WHAT, line, e))?;
        let value: f64 = rec[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::parse(WHAT, line, format!("value {:?} is not a finite number", &rec[2])))?;
        if !tables.contains_key(&metric) {
            order.push(metric);
        }
        if tables.entry(metric).or_default().insert(rec[0].to_string(), value).is_some() {
            return Err(Error::Duplicate {
                what: WHAT,
                line,
                id: format!("{} {metric}", &rec[0]),
            });
        }
    }
    Ok(order
        .into_iter()
        .map(|m| MetricResult::from_per_topic(m, tables.remove(&m).unwrap(), Vec::new()))
        .collect())
}

pub fn read_grid_csv<R: Read>(reader: R) -> Result<ScoreGrid> {
    const WHAT: &str = "score grid";
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, WHAT, &["condition", "size", "seed", "topic_id", "value"])?;
    let mut grid = ScoreGrid::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(WHAT, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| Error::parse(WHAT, line, msg);
        let size: u64 = rec[1].parse().map_err(|_| bad(format!("size {:?} is not an integer", &rec[1])))?;
        let seed: u64 = rec[2].parse().map_err(|_| bad(format!("seed {:?} is not an integer", &rec[2])))?;
        let value: f64 = rec[4]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad(format!("value {:?} is not a finite number", &rec[4])))?;
        grid.insert(&rec[0], size, seed, &rec[3], value)
            .map_err(|e| bad(e.to_string()))?;
    }
    Ok(grid)
}
