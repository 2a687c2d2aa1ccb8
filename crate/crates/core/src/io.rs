//! JSON and CSV exchange formats: spaces with their region, node fields,
//! coarea profiles and Whitney coverings.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::calculus::CoareaProfile;
use crate::error::{Error, Result};
use crate::space::{Edge, Node, NodeClass, Region, Space, Stencil};
use crate::whitney::Covering;

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    x: f64,
    y: f64,
    mu: f64,
    rho: f64,
    /// Written so the cell area survives the round trip bit for bit; `mu/rho` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    i: usize,
    j: usize,
    len: f64,
    w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    witness: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RegionRecord {
    omega: Vec<usize>,
    exterior: Vec<usize>,
    null: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpaceDocument {
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
    region: RegionRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    #[serde(default = "graph_stencil")]
    stencil: Stencil,
}

fn graph_stencil() -> Stencil {
    Stencil::Graph
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Malformed(msg.into())
}

pub fn write_space_json<W: Write>(space: &Space, region: &Region, out: W) -> Result<()> {
    let nodes = space
        .nodes()
        .iter()
        .enumerate()
        .map(|(id, n)| NodeRecord { id, x: n.pos[0], y: n.pos[1], mu: n.measure(), rho: n.density, area: Some(n.area) })
        .collect();
    let edges = space
        .edges()
        .iter()
        .map(|e| EdgeRecord { i: e.i, j: e.j, len: e.len, w: e.crofton, witness: e.witness })
        .collect();
    let region = RegionRecord { omega: region.omega().iter().collect(), exterior: region.exterior().iter().collect(), null: region.null().iter().collect() };
    let doc = SpaceDocument { nodes, edges, region, h: space.h(), stencil: space.stencil() };
    serde_json::to_writer(out, &doc)?;
    Ok(())
}

/// Reads a document written by [`write_space_json`]. Node ids must be `0..n`
/// in order and every node must appear in exactly one region class.
pub fn read_space_json<R: Read>(input: R) -> Result<(Space, Region)> {
    let doc: SpaceDocument = serde_json::from_reader(input)?;
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (k, r) in doc.nodes.iter().enumerate() {
        if r.id != k {
            return Err(malformed(format!("node record {k} has id {}", r.id)));
        }
        if !(r.rho > 0.0) {
            return Err(malformed(format!("node {k} has non-positive density {}", r.rho)));
        }
        nodes.push(Node { pos: [r.x, r.y], area: r.area.unwrap_or(r.mu / r.rho), density: r.rho });
    }
    let n = nodes.len();
    let edges = doc
        .edges
        .iter()
        .map(|e| Edge { i: e.i, j: e.j, len: e.len, crofton: e.w, witness: e.witness })
        .collect();
    let space = Space::from_parts(nodes, edges, doc.stencil, doc.h)?;
    let mut class = vec![None; n];
    let groups = [(&doc.region.omega, NodeClass::Omega), (&doc.region.exterior, NodeClass::Exterior), (&doc.region.null, NodeClass::Null)];
    for (ids, c) in groups {
        for &i in ids {
            let slot = class.get_mut(i).ok_or(Error::UnknownNode(i))?;
            if slot.replace(c).is_some() {
                return Err(malformed(format!("node {i} is listed in two region classes")));
            }
        }
    }
    let class = class
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| malformed(format!("node {i} has no region class"))))
        .collect::<Result<Vec<_>>>()?;
    let region = Region::new(&space, class)?;
    Ok((space, region))
}

fn csv_error(e: csv::Error) -> Error {
    malformed(e.to_string())
}

/// Writes `node_id,x,y,value` rows for every node.
pub fn write_field_csv<W: Write>(space: &Space, values: &[f64], out: W) -> Result<()> {
    if values.len() != space.len() {
        return Err(malformed(format!("field has {} values for {} nodes", values.len(), space.len())));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node_id", "x", "y", "value"]).map_err(csv_error)?;
    for (i, v) in values.iter().enumerate() {
        let p = space.pos(i);
        w.serialize((i, p[0], p[1], v)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct FieldRow {
    node_id: usize,
    #[allow(dead_code)]
    x: f64,
    #[allow(dead_code)]
    y: f64,
    value: f64,
}

/// Reads a node dump back into a field on `space`. Rows may come in any
/// order but every node needs exactly one.
pub fn read_field_csv<R: Read>(space: &Space, input: R) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = vec![None; space.len()];
    for row in r.deserialize() {
        let row: FieldRow = row.map_err(csv_error)?;
        let slot = out.get_mut(row.node_id).ok_or(Error::UnknownNode(row.node_id))?;
        if slot.replace(row.value).is_some() {
            return Err(malformed(format!("node {} appears twice", row.node_id)));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| malformed(format!("no value for node {i}"))))
        .collect()
}

/// Writes `threshold,perimeter` rows.
pub fn write_coarea_csv<W: Write>(profile: &CoareaProfile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "perimeter"]).map_err(csv_error)?;
    for (t, p) in profile.thresholds.iter().zip(&profile.perimeters) {
        w.serialize((t, p)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_covering_json<W: Write>(cover: &Covering, out: W) -> Result<()> {
    serde_json::to_writer(out, cover)?;
    Ok(())
}
