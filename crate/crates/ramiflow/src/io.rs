//! JSON interchange formats.
//!
//! Measures, graphs and plans carry their reals as decimal strings so values
//! survive round trips exactly (Rust's shortest-roundtrip float formatting
//! guarantees parse(format(x)) == x). Cost specifications use plain JSON
//! numbers.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::costs::{CostError, Family, TransportCost};
use crate::distance::DistanceBounds;
use crate::graph::{Edge, GraphError, TransportGraph};
use crate::hierarchy::NadicGraph;
use crate::measures::{DiscreteMeasure, MeasureError, Point};
use crate::patterns::{IrrigationPlan, PatternError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

fn real_to_value(x: f64) -> Value {
    Value::String(format!("{x}"))
}

fn real_from_value(v: &Value, what: &str) -> Result<f64, IoError> {
    match v {
        Value::String(s) => s
            .parse::<f64>()
            .map_err(|e| IoError::Schema(format!("{what}: bad real '{s}': {e}"))),
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| IoError::Schema(format!("{what}: non-finite number"))),
        _ => Err(IoError::Schema(format!(
            "{what}: expected a decimal string"
        ))),
    }
}

fn point_to_value(p: &Point) -> Value {
    Value::Array(p.0.iter().map(|&c| real_to_value(c)).collect())
}

fn point_from_value(v: &Value, what: &str) -> Result<Point, IoError> {
    let arr = v
        .as_array()
        .ok_or_else(|| IoError::Schema(format!("{what}: expected coordinate array")))?;
    Ok(Point(
        arr.iter()
            .map(|c| real_from_value(c, what))
            .collect::<Result<_, _>>()?,
    ))
}

pub fn measure_to_json(m: &DiscreteMeasure) -> Value {
    json!({
        "dim": m.dim(),
        "atoms": m.atoms().iter().map(|a| json!({
            "x": point_to_value(&a.pos),
            "m": real_to_value(a.mass),
        })).collect::<Vec<_>>(),
    })
}

pub fn measure_from_json(v: &Value) -> Result<DiscreteMeasure, IoError> {
    let dim = v
        .get("dim")
        .and_then(Value::as_u64)
        .ok_or_else(|| IoError::Schema("measure: missing 'dim'".into()))? as usize;
    let atoms = v
        .get("atoms")
        .and_then(Value::as_array)
        .ok_or_else(|| IoError::Schema("measure: missing 'atoms'".into()))?;
    let list = atoms
        .iter()
        .map(|a| {
            let pos = point_from_value(
                a.get("x")
                    .ok_or_else(|| IoError::Schema("atom: missing 'x'".into()))?,
                "atom position",
            )?;
            let mass = real_from_value(
                a.get("m")
                    .ok_or_else(|| IoError::Schema("atom: missing 'm'".into()))?,
                "atom mass",
            )?;
            Ok((pos, mass))
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    Ok(DiscreteMeasure::new(dim, list)?)
}

pub fn graph_to_json(g: &TransportGraph) -> Value {
    json!({
        "vertices": g.vertices().iter().map(point_to_value).collect::<Vec<_>>(),
        "edges": g.edges().iter().map(|e| json!({
            "t": e.tail,
            "h": e.head,
            "w": real_to_value(e.weight),
        })).collect::<Vec<_>>(),
        "source": measure_to_json(g.source()),
        "sink": measure_to_json(g.sink()),
    })
}

pub fn graph_from_json(v: &Value) -> Result<TransportGraph, IoError> {
    let vertices = v
        .get("vertices")
        .and_then(Value::as_array)
        .ok_or_else(|| IoError::Schema("graph: missing 'vertices'".into()))?
        .iter()
        .map(|p| point_from_value(p, "vertex"))
        .collect::<Result<Vec<_>, _>>()?;
    let edges = v
        .get("edges")
        .and_then(Value::as_array)
        .ok_or_else(|| IoError::Schema("graph: missing 'edges'".into()))?
        .iter()
        .map(|e| {
            let tail = e.get("t").and_then(Value::as_u64).ok_or_else(|| {
                IoError::Schema("edge: missing tail index 't'".into())
            })? as usize;
            let head = e.get("h").and_then(Value::as_u64).ok_or_else(|| {
                IoError::Schema("edge: missing head index 'h'".into())
            })? as usize;
            let weight = real_from_value(
                e.get("w")
                    .ok_or_else(|| IoError::Schema("edge: missing weight 'w'".into()))?,
                "edge weight",
            )?;
            Ok(Edge { tail, head, weight })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let source = measure_from_json(
        v.get("source")
            .ok_or_else(|| IoError::Schema("graph: missing 'source'".into()))?,
    )?;
    let sink = measure_from_json(
        v.get("sink")
            .ok_or_else(|| IoError::Schema("graph: missing 'sink'".into()))?,
    )?;
    let dim = source.dim();
    Ok(TransportGraph::new(dim, vertices, edges, source, sink)?)
}

/// Graph format plus the per-edge level annotations of an n-adic tree.
pub fn nadic_to_json(tree: &NadicGraph) -> Value {
    let mut v = graph_to_json(tree.graph());
    if let Value::Object(map) = &mut v {
        map.insert(
            "levels".into(),
            Value::Array(
                tree.levels()
                    .iter()
                    .map(|&l| Value::Number(l.into()))
                    .collect(),
            ),
        );
    }
    v
}

pub fn plan_to_json(plan: &IrrigationPlan) -> Value {
    json!({
        "dim": plan.dim(),
        "paths": plan.paths().iter().map(|p| json!({
            "pts": p.points.iter().map(point_to_value).collect::<Vec<_>>(),
            "w": real_to_value(p.weight),
        })).collect::<Vec<_>>(),
    })
}

pub fn plan_from_json(v: &Value) -> Result<IrrigationPlan, IoError> {
    let paths = v
        .get("paths")
        .and_then(Value::as_array)
        .ok_or_else(|| IoError::Schema("plan: missing 'paths'".into()))?
        .iter()
        .map(|p| {
            let pts = p
                .get("pts")
                .and_then(Value::as_array)
                .ok_or_else(|| IoError::Schema("path: missing 'pts'".into()))?
                .iter()
                .map(|q| point_from_value(q, "path point"))
                .collect::<Result<Vec<_>, _>>()?;
            let w = real_from_value(
                p.get("w")
                    .ok_or_else(|| IoError::Schema("path: missing 'w'".into()))?,
                "path weight",
            )?;
            Ok((pts, w))
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let dim = v
        .get("dim")
        .and_then(Value::as_u64)
        .map(|d| d as usize)
        .or_else(|| paths.first().and_then(|(pts, _)| pts.first()).map(|p| p.dim()))
        .ok_or_else(|| IoError::Schema("plan: cannot infer dimension".into()))?;
    Ok(IrrigationPlan::new(dim, paths)?)
}

pub fn cost_to_json(tau: &TransportCost) -> Value {
    let mut map = Map::new();
    match tau.family() {
        Family::Wasserstein { a } => {
            map.insert("family".into(), json!("wasserstein"));
            map.insert("a".into(), json!(a));
        }
        Family::Branched { alpha } => {
            map.insert("family".into(), json!("branched"));
            map.insert("alpha".into(), json!(alpha));
        }
        Family::Urban { a, eps } => {
            map.insert("family".into(), json!("urban"));
            map.insert("a".into(), json!(a));
            map.insert("eps".into(), json!(eps));
        }
        Family::Discrete => {
            map.insert("family".into(), json!("discrete"));
        }
        Family::Step { delta, height } => {
            map.insert("family".into(), json!("step"));
            map.insert("delta".into(), json!(delta));
            if height != delta {
                map.insert("height".into(), json!(height));
            }
        }
        Family::Tabulated { points } => {
            map.insert("family".into(), json!("tabulated"));
            map.insert("points".into(), json!(points));
        }
    }
    if tau.mass_scale() != 1.0 {
        map.insert("mass_scale".into(), json!(tau.mass_scale()));
    }
    if tau.output_scale() != 1.0 {
        map.insert("output_scale".into(), json!(tau.output_scale()));
    }
    Value::Object(map)
}

pub fn cost_from_json(v: &Value) -> Result<TransportCost, IoError> {
    let family = v
        .get("family")
        .and_then(Value::as_str)
        .ok_or_else(|| IoError::Schema("cost: missing 'family'".into()))?;
    let num = |key: &str| -> Result<f64, IoError> {
        v.get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| IoError::Schema(format!("cost: missing number '{key}'")))
    };
    let base = match family {
        "wasserstein" => TransportCost::wasserstein(num("a")?)?,
        "branched" => TransportCost::branched(num("alpha")?)?,
        "urban" => TransportCost::urban(num("a")?, num("eps")?)?,
        "discrete" => TransportCost::discrete(),
        "step" => {
            let delta = num("delta")?;
            match v.get("height") {
                Some(h) => TransportCost::step_with_height(
                    delta,
                    h.as_f64()
                        .ok_or_else(|| IoError::Schema("cost: bad 'height'".into()))?,
                )?,
                None => TransportCost::step(delta)?,
            }
        }
        "tabulated" => {
            let pts: Vec<(f64, f64)> = serde_json::from_value(
                v.get("points")
                    .cloned()
                    .ok_or_else(|| IoError::Schema("cost: missing 'points'".into()))?,
            )?;
            TransportCost::tabulated(&pts)?
        }
        other => {
            return Err(IoError::Schema(format!("cost: unknown family '{other}'")));
        }
    };
    let mass_scale = v.get("mass_scale").and_then(Value::as_f64).unwrap_or(1.0);
    let output_scale = v.get("output_scale").and_then(Value::as_f64).unwrap_or(1.0);
    if mass_scale == 1.0 && output_scale == 1.0 {
        return Ok(base);
    }
    Ok(TransportCost::from_parts(
        base.family().clone(),
        mass_scale,
        output_scale,
    )?)
}

/// Distance bounds with the explicit reminder that these certify an
/// interval around `d_τ`, not its exact value.
pub fn bounds_to_json(b: &DistanceBounds) -> Value {
    json!({
        "kind": "certified-bounds",
        "lower": real_to_value(b.lower),
        "upper": real_to_value(b.upper),
        "gap": real_to_value(b.gap),
        "certificate": {
            "lambda": real_to_value(b.lower_certificate.lambda),
            "w1": real_to_value(b.lower_certificate.w1),
        },
        "witness": graph_to_json(&b.witness),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::p2;
    use crate::samples;

    #[test]
    fn measure_roundtrip_is_exact() {
        let mut rng = samples::rng(2);
        let m = samples::probability_measure(&mut rng, 2, 7);
        let v = measure_to_json(&m);
        let back = measure_from_json(&v).unwrap();
        assert!(m.canonical_eq(&back));
        // Non-dyadic values survive via shortest-roundtrip strings.
        let odd = DiscreteMeasure::new(2, vec![(p2(0.1, 0.3), 0.7)]).unwrap();
        let back = measure_from_json(&measure_to_json(&odd)).unwrap();
        assert_eq!(odd.atoms()[0].mass, back.atoms()[0].mass);
        assert_eq!(odd.atoms()[0].pos, back.atoms()[0].pos);
    }

    #[test]
    fn graph_roundtrip() {
        let mut rng = samples::rng(5);
        let g = samples::flow_graph(&mut rng, &samples::FlowGraphConfig::default());
        let v = graph_to_json(&g);
        let back = graph_from_json(&v).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn plan_roundtrip() {
        let plan = IrrigationPlan::new(
            2,
            vec![
                (vec![p2(0.0, 0.0), p2(1.0, 0.5)], 0.5),
                (vec![p2(0.25, 0.25)], 0.5),
            ],
        )
        .unwrap();
        let back = plan_from_json(&plan_to_json(&plan)).unwrap();
        assert_eq!(plan, back);
    }

    #[test]
    fn cost_specs_parse() {
        for (text, check_w, expect) in [
            (r#"{"family":"branched","alpha":0.75}"#, 0.25, 0.25f64.powf(0.75)),
            (r#"{"family":"step","delta":0.3}"#, 0.35, 0.6),
            (r#"{"family":"step","delta":0.45,"height":1.0}"#, 1.0, 3.0),
            (r#"{"family":"urban","a":2.0,"eps":0.1}"#, 0.05, 0.1),
            (r#"{"family":"discrete"}"#, 0.5, 1.0),
        ] {
            let v: Value = serde_json::from_str(text).unwrap();
            let tau = cost_from_json(&v).unwrap();
            assert!((tau.eval(check_w) - expect).abs() < 1e-12, "{text}");
            let back = cost_from_json(&cost_to_json(&tau)).unwrap();
            assert_eq!(tau, back);
        }
    }

    #[test]
    fn bad_inputs_are_schema_errors() {
        let v: Value = serde_json::from_str(r#"{"atoms":[]}"#).unwrap();
        assert!(matches!(measure_from_json(&v), Err(IoError::Schema(_))));
        let v: Value = serde_json::from_str(r#"{"family":"nope"}"#).unwrap();
        assert!(matches!(cost_from_json(&v), Err(IoError::Schema(_))));
        let v: Value =
            serde_json::from_str(r#"{"dim":2,"atoms":[{"x":["a","b"],"m":"1"}]}"#).unwrap();
        assert!(matches!(measure_from_json(&v), Err(IoError::Schema(_))));
    }
}
