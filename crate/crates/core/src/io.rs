//! JSON and binary containers for cell functions, DN maps, traces, phases and
//! stability records.
//!
//! Binary layout: `b"FCGO"`, a kind byte, a little-endian `u32` header length,
//! the JSON header, then interleaved little-endian `f64` real/imaginary pairs
//! in row-major order.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cgo::{AxialFrequency, CgoPhase};
use crate::error::{Error, Result};
use crate::fiber::{DnMap, FiberMesh, TraceFunction};
use crate::grid::{CellGeometry, GridSpec, Interval};
use crate::lattice::CellFunction;
use crate::recovery::StabilityRecord;
use crate::C64;

const MAGIC: &[u8; 4] = b"FCGO";
const KIND_CELL: u8 = 1;
const KIND_DN: u8 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellHeader {
    pub n: usize,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "N0")]
    pub n0: usize,
    #[serde(rename = "N")]
    pub n_grid: usize,
    pub omega_box: Vec<Interval>,
}

impl CellHeader {
    fn of(grid: &GridSpec, geom: &CellGeometry) -> Self {
        Self { n: geom.n(), r: geom.half_width(), n0: grid.n0(), n_grid: grid.n(), omega_box: geom.omega_box().to_vec() }
    }

    fn layout(&self) -> Result<(GridSpec, CellGeometry)> {
        let geom = CellGeometry::new(self.r, self.omega_box.clone())?;
        if geom.n() != self.n {
            return Err(Error::Format(format!("header n = {} disagrees with omega_box", self.n)));
        }
        Ok((GridSpec::new(self.n0, self.n_grid)?, geom))
    }
}

#[derive(Serialize, Deserialize)]
struct CellJson {
    header: CellHeader,
    values: Vec<[f64; 2]>,
}

pub fn cell_to_json(f: &CellFunction) -> Result<String> {
    let doc = CellJson {
        header: CellHeader::of(f.grid(), f.geometry()),
        values: f.values().iter().map(|v| [v.re, v.im]).collect(),
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn cell_from_json(s: &str) -> Result<CellFunction> {
    let doc: CellJson = serde_json::from_str(s)?;
    let (grid, geom) = doc.header.layout()?;
    CellFunction::from_values(grid, geom, doc.values.iter().map(|p| C64::new(p[0], p[1])).collect())
}

fn write_container<W: Write>(mut w: W, kind: u8, header: &impl Serialize, values: &[C64]) -> Result<()> {
    let head = serde_json::to_vec(header)?;
    let len = u32::try_from(head.len()).map_err(|_| Error::Format("header too large".into()))?;
    w.write_all(MAGIC)?;
    w.write_all(&[kind])?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&head)?;
    for v in values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_container<R: Read, H: for<'de> Deserialize<'de>>(mut r: R, kind: u8) -> Result<(H, Vec<C64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut k = [0u8; 1];
    r.read_exact(&mut k)?;
    if k[0] != kind {
        return Err(Error::Format(format!("container kind {} where {kind} was expected", k[0])));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut head = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut head)?;
    let header: H = serde_json::from_slice(&head)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() % 16 != 0 {
        return Err(Error::Format("payload is not a whole number of complex samples".into()));
    }
    let values = body
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect();
    Ok((header, values))
}

pub fn write_cell_binary<W: Write>(w: W, f: &CellFunction) -> Result<()> {
    write_container(w, KIND_CELL, &CellHeader::of(f.grid(), f.geometry()), f.values())
}

pub fn read_cell_binary<R: Read>(r: R) -> Result<CellFunction> {
    let (h, values): (CellHeader, _) = read_container(r, KIND_CELL)?;
    let (grid, geom) = h.layout()?;
    CellFunction::from_values(grid, geom, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DnHeader {
    pub theta: f64,
    pub grid: GridSpec,
    pub geometry: CellGeometry,
    pub dim: usize,
}

pub fn write_dn_binary<W: Write>(w: W, a: &DnMap) -> Result<()> {
    let h = DnHeader { theta: a.theta, grid: *a.mesh().grid(), geometry: a.mesh().geometry().clone(), dim: a.dim() };
    write_container(w, KIND_DN, &h, a.matrix())
}

pub fn read_dn_binary<R: Read>(r: R) -> Result<DnMap> {
    let (h, values): (DnHeader, _) = read_container(r, KIND_DN)?;
    let mesh = Arc::new(FiberMesh::new(h.grid, h.geometry)?);
    if mesh.trace_len() != h.dim {
        return Err(Error::Format(format!("header dim {} but the trace grid has {} slots", h.dim, mesh.trace_len())));
    }
    DnMap::from_parts(h.theta, mesh, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub layer: usize,
    /// Face labels such as `x1-` (edge and corner nodes carry several).
    pub faces: Vec<String>,
    pub index: Vec<usize>,
    pub value: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceJson {
    pub grid: GridSpec,
    pub geometry: CellGeometry,
    pub restricted_to_gamma1: bool,
    pub samples: Vec<TraceSample>,
}

pub fn trace_to_json(mesh: &FiberMesh, f: &TraceFunction) -> Result<String> {
    if f.values.len() != mesh.trace_len() {
        return Err(Error::Shape("trace length does not match the mesh".into()));
    }
    let samples = f
        .values
        .iter()
        .enumerate()
        .map(|(t, v)| {
            let (layer, b) = mesh.trace_slot(t);
            let node = &mesh.boundary_nodes()[b];
            TraceSample {
                layer,
                faces: node.faces.iter().map(|fc| fc.label()).collect(),
                index: node.index.clone(),
                value: [v.re, v.im],
            }
        })
        .collect();
    let doc = TraceJson {
        grid: *mesh.grid(),
        geometry: mesh.geometry().clone(),
        restricted_to_gamma1: f.restricted_to_gamma1,
        samples,
    };
    Ok(serde_json::to_string(&doc)?)
}

/// Reads a trace back onto `mesh`; sample order and node indices must match.
pub fn trace_from_json(mesh: &FiberMesh, s: &str) -> Result<TraceFunction> {
    let doc: TraceJson = serde_json::from_str(s)?;
    if doc.grid != *mesh.grid() || doc.geometry != *mesh.geometry() || doc.samples.len() != mesh.trace_len() {
        return Err(Error::Format("trace file does not match the mesh".into()));
    }
    let mut values = Vec::with_capacity(doc.samples.len());
    for (t, s) in doc.samples.iter().enumerate() {
        let (layer, b) = mesh.trace_slot(t);
        if s.layer != layer || s.index != mesh.boundary_nodes()[b].index {
            return Err(Error::Format(format!("trace sample {t} is out of order")));
        }
        values.push(C64::new(s.value[0], s.value[1]));
    }
    let f = TraceFunction { values, restricted_to_gamma1: doc.restricted_to_gamma1 };
    if f.restricted_to_gamma1 {
        return f.check_gamma1(mesh, 0.0);
    }
    Ok(f)
}

/// Flat phase record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub theta: f64,
    pub k: AxialFrequency,
    pub r: f64,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub l: Vec<f64>,
    pub tau: f64,
    pub zeta1: Vec<[f64; 2]>,
    pub zeta2: Vec<[f64; 2]>,
    pub sigma_k: f64,
}

impl From<&CgoPhase> for PhaseRecord {
    fn from(ph: &CgoPhase) -> Self {
        let pair = |v: &[C64]| v.iter().map(|z| [z.re, z.im]).collect();
        Self {
            theta: ph.params.theta,
            k: ph.params.k,
            r: ph.params.r,
            xi: ph.params.xi.clone(),
            eta: ph.params.eta.clone(),
            l: ph.l.clone(),
            tau: ph.tau,
            zeta1: pair(&ph.zeta1),
            zeta2: pair(&ph.zeta2),
            sigma_k: ph.sigma_k,
        }
    }
}

pub fn phase_to_json(ph: &CgoPhase) -> Result<String> {
    Ok(serde_json::to_string(&PhaseRecord::from(ph))?)
}

/// CSV row of a [`StabilityRecord`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub scale: f64,
    pub delta: f64,
    pub rho: f64,
    pub r: f64,
    pub epsilon: f64,
    pub h_minus1_bound: f64,
    pub h_minus1_actual: f64,
    pub linf_actual: f64,
    pub theta_star: f64,
    pub n: usize,
    #[serde(rename = "N0")]
    pub n0: usize,
    #[serde(rename = "N")]
    pub n_grid: usize,
    #[serde(rename = "R")]
    pub half_width: f64,
    pub alpha: f64,
}

impl From<&StabilityRecord> for StabilityRow {
    fn from(s: &StabilityRecord) -> Self {
        Self {
            scale: s.scale,
            delta: s.delta,
            rho: s.rho,
            r: s.r,
            epsilon: s.epsilon,
            h_minus1_bound: s.h_minus1_bound,
            h_minus1_actual: s.h_minus1_actual,
            linf_actual: s.linf_actual,
            theta_star: s.theta_star,
            n: s.n,
            n0: s.n0,
            n_grid: s.n_grid,
            half_width: s.half_width,
            alpha: s.schedule.alpha,
        }
    }
}

/// Serializable rows as RFC-4180 CSV with a header line.
pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_stability_csv<W: Write>(w: W, records: &[StabilityRecord]) -> Result<()> {
    let rows: Vec<StabilityRow> = records.iter().map(StabilityRow::from).collect();
    write_csv(w, &rows)
}

pub fn read_stability_csv<R: Read>(r: R) -> Result<Vec<StabilityRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(|e| Error::Format(e.to_string())))
        .collect()
}

pub fn stability_to_json(records: &[StabilityRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgo::{build_phase, CgoParams};
    use crate::fiber::{assemble_dn, Potential};

    fn layout() -> (GridSpec, CellGeometry) {
        (GridSpec::new(4, 8).unwrap(), CellGeometry::centered(1.0, &[1.0], 0.5).unwrap())
    }

    #[test]
    fn cell_round_trips() {
        let (grid, geom) = layout();
        let f = CellFunction::from_fn(grid, geom, |x| C64::new(x[0] + x[1], x[2].sin()));
        assert_eq!(cell_from_json(&cell_to_json(&f).unwrap()).unwrap(), f);
        let mut buf = Vec::new();
        write_cell_binary(&mut buf, &f).unwrap();
        assert_eq!(read_cell_binary(buf.as_slice()).unwrap(), f);
        buf[4] = KIND_DN;
        assert!(read_cell_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn dn_round_trips() {
        let (grid, geom) = layout();
        let q = Potential::zero(grid, geom);
        let a = assemble_dn(&q, 0.4).unwrap();
        let mut buf = Vec::new();
        write_dn_binary(&mut buf, &a).unwrap();
        let b = read_dn_binary(buf.as_slice()).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn trace_round_trips() {
        let (grid, geom) = layout();
        let mesh = FiberMesh::new(grid, geom).unwrap();
        let f = mesh.trace_from_fn(|x| C64::new(x[1], x[0])).restrict_to_gamma1(&mesh);
        let s = trace_to_json(&mesh, &f).unwrap();
        assert!(s.contains("\"x1-\""));
        assert_eq!(trace_from_json(&mesh, &s).unwrap(), f);
    }

    #[test]
    fn phase_record_fields() {
        let p = CgoParams {
            theta: 0.0,
            k: AxialFrequency::half(0),
            r: 1.0,
            xi: vec![1.0, 0.0, 0.0],
            eta: vec![0.0, 2.0, 0.0],
        };
        let v: serde_json::Value = serde_json::from_str(&phase_to_json(&build_phase(&p).unwrap()).unwrap()).unwrap();
        for key in ["theta", "k", "r", "xi", "eta", "l", "tau", "zeta1", "zeta2"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["k"], 0.5);
    }
}
