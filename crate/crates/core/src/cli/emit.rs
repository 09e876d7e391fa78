//! Canonical event logs and batch summaries.
//!
//! JSON objects have sorted keys and every float is rounded to 12
//! significant digits before printing, so equal trajectories give equal
//! bytes.

use std::io::{self, Write};

use serde_json::{json, Map, Value};

use crate::montecarlo::{BatchSummary, Event, Payload, SnapshotEntry, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

/// `x` rounded to 12 significant digits; non-finite values become null.
pub fn canonical_number(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    // normalise -0 so that it prints like 0
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
}

fn num(x: f64) -> Value {
    canonical_number(x)
}

pub fn payload_json(payload: &Payload) -> Value {
    match payload {
        Payload::Hit {
            component,
            rate,
            since_interaction,
        } => json!({
            "component": component.0,
            "rate": num(*rate),
            "since_interaction": num(*since_interaction),
        }),
        Payload::PhaseComplete { component, process } => json!({
            "component": component.0,
            "process": process.as_str(),
        }),
        Payload::Phantomized {
            component,
            modulus,
            superseded_by,
        } => json!({
            "component": component.0,
            "modulus": num(*modulus),
            "superseded_by": superseded_by.map(|c| c.0),
        }),
        Payload::Pruned { component, modulus } => json!({
            "component": component.0,
            "modulus": num(*modulus),
        }),
        Payload::Cutoff { from, to } => json!({ "from": from.0, "to": to.0 }),
        Payload::Experience {
            agent,
            state,
            cause,
        } => json!({
            "agent": agent.as_str(),
            "state": state,
            "cause": cause,
        }),
        Payload::ObservationStart { components } => json!({
            "components": components.iter().map(|c| c.0).collect::<Vec<_>>(),
        }),
        Payload::ObservationComplete { component } => json!({ "component": component.0 }),
        Payload::InteractionStart { source, ready } => json!({
            "source": source.0,
            "ready": ready.0,
        }),
        Payload::Warning { message } => json!({ "message": message }),
    }
}

fn snapshot_json(snapshot: &[SnapshotEntry]) -> Value {
    Value::Array(
        snapshot
            .iter()
            .map(|s| {
                json!({
                    "component": s.id.0,
                    "kind": s.kind.as_str(),
                    "labels": s.display_labels(),
                })
            })
            .collect(),
    )
}

pub fn event_json(event: &Event) -> Value {
    json!({
        "id": event.id,
        "t": num(event.t),
        "kind": event.kind.as_str(),
        "payload": payload_json(&event.payload),
        "labels_after": snapshot_json(&event.snapshot),
    })
}

fn flat_payload(payload: &Payload) -> String {
    let Value::Object(map) = payload_json(payload) else {
        return String::new();
    };
    map.iter()
        .map(|(k, v)| match v {
            Value::String(s) => format!("{k}={s}"),
            other => format!("{k}={other}"),
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn flat_snapshot(snapshot: &[SnapshotEntry]) -> String {
    snapshot
        .iter()
        .map(|s| format!("{}:{}", s.kind.as_str(), s.display_labels()))
        .collect::<Vec<_>>()
        .join(" + ")
}

fn csv_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub fn emit_events<W: Write>(
    trajectory: &Trajectory,
    format: Format,
    out: &mut W,
) -> io::Result<()> {
    match format {
        Format::Jsonl => {
            for event in &trajectory.events {
                serde_json::to_writer(&mut *out, &event_json(event))?;
                out.write_all(b"\n")?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(["id", "t", "kind", "payload", "labels_after"])
                .map_err(csv_error)?;
            for e in &trajectory.events {
                let id = e.id.map(|i| i.to_string()).unwrap_or_default();
                w.write_record([
                    id,
                    num(e.t).to_string(),
                    e.kind.as_str().to_string(),
                    flat_payload(&e.payload),
                    flat_snapshot(&e.snapshot),
                ])
                .map_err(csv_error)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn opt_num(x: Option<f64>) -> String {
    x.map(|x| num(x).to_string()).unwrap_or_default()
}

/// `metric,value` rows followed by one `outcome:<labels>` row per terminal set.
pub fn emit_summary_csv<W: Write>(summary: &BatchSummary, out: &mut W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(&mut *out);
    let rows = [
        ("scenario", summary.scenario.clone()),
        ("n_trials", summary.n_trials.to_string()),
        ("hits", summary.hits.to_string()),
        ("hit_fraction", num(summary.hit_fraction).to_string()),
        ("ks_statistic", opt_num(summary.ks_statistic)),
        ("paradox_violations", summary.paradox_violations.to_string()),
    ];
    w.write_record(["metric", "value"]).map_err(csv_error)?;
    for (k, v) in rows {
        w.write_record([k.to_string(), v]).map_err(csv_error)?;
    }
    for (labels, count) in &summary.outcome_counts {
        w.write_record([format!("outcome:{labels}"), count.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()
}

pub fn emit_histogram_csv<W: Write>(summary: &BatchSummary, out: &mut W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(&mut *out);
    w.write_record(["bin_lo", "bin_hi", "count"])
        .map_err(csv_error)?;
    for (lo, hi, count) in summary.histogram.bins() {
        w.write_record([num(lo).to_string(), num(hi).to_string(), count.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()
}

pub fn summary_json(summary: &BatchSummary) -> Value {
    let outcomes: Map<String, Value> = summary
        .outcome_counts
        .iter()
        .map(|(k, v)| (k.clone(), json!(v)))
        .collect();
    let bins: Vec<Value> = summary
        .histogram
        .bins()
        .map(|(lo, hi, count)| json!({ "lo": num(lo), "hi": num(hi), "count": count }))
        .collect();
    json!({
        "scenario": summary.scenario,
        "n_trials": summary.n_trials,
        "hits": summary.hits,
        "hit_fraction": num(summary.hit_fraction),
        "ks_statistic": summary.ks_statistic.map(num),
        "paradox_violations": summary.paradox_violations,
        "outcome_counts": outcomes,
        "hit_time_histogram": bins,
    })
}

pub fn emit_summary_json<W: Write>(summary: &BatchSummary, out: &mut W) -> io::Result<()> {
    serde_json::to_writer(&mut *out, &summary_json(summary))?;
    out.write_all(b"\n")
}
