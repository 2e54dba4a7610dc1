//! Fibre-bundle geometry, lattice layout and axial discretisation.
//!
//! Axial coordinates run from the fixed end plate (0) to the moving plate
//! (fibre length). A mirrored fibre carries its segments in reverse order.

use std::f64::consts::PI;
use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::materials::{LinearElasticModel, MaterialModel, YeohModel};

/// Printed material grade; decides the friction pairing of a contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MaterialGrade {
    ShoreA30,
    ShoreA85,
    ShoreD,
}

impl MaterialGrade {
    pub fn default_model(self) -> MaterialModel {
        match self {
            MaterialGrade::ShoreA30 => MaterialModel::Yeoh(YeohModel::SHORE_A30),
            MaterialGrade::ShoreA85 => MaterialModel::Linear(LinearElasticModel::SHORE_A85),
            MaterialGrade::ShoreD => MaterialModel::Rigid,
        }
    }
}

impl fmt::Display for MaterialGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaterialGrade::ShoreA30 => "A30",
            MaterialGrade::ShoreA85 => "A85",
            MaterialGrade::ShoreD => "D",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairingClass {
    A30A30,
    A30A85,
    A85A85,
}

impl PairingClass {
    pub fn from_grades(a: MaterialGrade, b: MaterialGrade) -> Result<Self> {
        use MaterialGrade::*;
        match (a, b) {
            (ShoreA30, ShoreA30) => Ok(PairingClass::A30A30),
            (ShoreA30, ShoreA85) | (ShoreA85, ShoreA30) => Ok(PairingClass::A30A85),
            (ShoreA85, ShoreA85) => Ok(PairingClass::A85A85),
            _ => Err(Error::Classification(a.to_string(), b.to_string())),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PairingClass::A30A30 => "A30-A30",
            PairingClass::A30A85 => "A30-A85",
            PairingClass::A85A85 => "A85-A85",
        }
    }
}

/// Coulomb coefficients per material pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionTable {
    pub mu_a30_a30: f64,
    pub mu_a30_a85: f64,
    pub mu_a85_a85: f64,
}

impl FrictionTable {
    /// Values identified against the jammed tensile tests.
    pub const CALIBRATED: FrictionTable = FrictionTable {
        mu_a30_a30: 0.74,
        mu_a30_a85: 0.75,
        mu_a85_a85: 0.99,
    };

    pub const FRICTIONLESS: FrictionTable = FrictionTable {
        mu_a30_a30: 0.0,
        mu_a30_a85: 0.0,
        mu_a85_a85: 0.0,
    };

    /// Unlimited slip capacity: every interface sticks under any vacuum.
    pub const BONDED: FrictionTable = FrictionTable {
        mu_a30_a30: f64::INFINITY,
        mu_a30_a85: f64::INFINITY,
        mu_a85_a85: f64::INFINITY,
    };

    pub fn new(mu_a30_a30: f64, mu_a30_a85: f64, mu_a85_a85: f64) -> Result<Self> {
        let t = Self {
            mu_a30_a30,
            mu_a30_a85,
            mu_a85_a85,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for mu in self.as_array() {
            if mu.is_nan() || mu < 0.0 {
                return Err(Error::Configuration(format!("friction coefficient {mu} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn coefficient(&self, class: PairingClass) -> f64 {
        match class {
            PairingClass::A30A30 => self.mu_a30_a30,
            PairingClass::A30A85 => self.mu_a30_a85,
            PairingClass::A85A85 => self.mu_a85_a85,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.mu_a30_a30, self.mu_a30_a85, self.mu_a85_a85]
    }

    pub fn from_array(mu: [f64; 3]) -> Self {
        Self {
            mu_a30_a30: mu[0],
            mu_a30_a85: mu[1],
            mu_a85_a85: mu[2],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_array(self.as_array().map(|m| m * factor))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FibreSegmentSpec {
    pub grade: MaterialGrade,
    pub material: MaterialModel,
    pub length: f64,
    pub diameter: f64,
}

impl FibreSegmentSpec {
    pub fn new(grade: MaterialGrade, length: f64, diameter: f64) -> Self {
        Self {
            grade,
            material: grade.default_model(),
            length,
            diameter,
        }
    }

    pub fn area(&self) -> f64 {
        PI * 0.25 * self.diameter * self.diameter
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FibreSpec {
    /// Segments from the fixed plate to the moving plate, before mirroring.
    pub segments: Vec<FibreSegmentSpec>,
    pub mirrored: bool,
    pub position: [f64; 2],
}

impl FibreSpec {
    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Segments in axial order with their start coordinate.
    pub fn layout(&self) -> Vec<(f64, &FibreSegmentSpec)> {
        let mut out = Vec::with_capacity(self.segments.len());
        let mut at = 0.0;
        let ordered: Box<dyn Iterator<Item = &FibreSegmentSpec>> = if self.mirrored {
            Box::new(self.segments.iter().rev())
        } else {
            Box::new(self.segments.iter())
        };
        for seg in ordered {
            out.push((at, seg));
            at += seg.length;
        }
        out
    }

    /// Segment boundaries in axial order, both plates included.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.layout().iter().map(|(s, _)| *s).collect();
        pts.push(self.length());
        pts
    }

    fn grade_at(&self, x: f64) -> MaterialGrade {
        let layout = self.layout();
        for (start, seg) in layout.iter().rev() {
            if x >= *start {
                return seg.grade;
            }
        }
        layout[0].1.grade
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TendonSpec {
    pub fibres: Vec<FibreSpec>,
    /// Centre spacing of neighbouring fibres, mm.
    pub pitch: f64,
    /// Linear membrane spring acting between the end plates, N/mm.
    pub membrane_stiffness: f64,
    pub free_length: f64,
}

const POSITION_TOL: f64 = 1e-6;

impl TendonSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fibres.is_empty() {
            return Err(Error::Geometry("tendon has no fibres".into()));
        }
        if !(self.pitch > 0.0) {
            return Err(Error::Geometry(format!("pitch must be positive, got {}", self.pitch)));
        }
        if !(self.membrane_stiffness >= 0.0) || !self.membrane_stiffness.is_finite() {
            return Err(Error::Configuration(format!(
                "membrane stiffness must be >= 0, got {}",
                self.membrane_stiffness
            )));
        }
        for (i, f) in self.fibres.iter().enumerate() {
            if f.segments.is_empty() {
                return Err(Error::Geometry(format!("fibre {i} has no segments")));
            }
            for s in &f.segments {
                if !(s.length > 0.0) || !(s.diameter > 0.0) {
                    return Err(Error::Geometry(format!(
                        "fibre {i} has a non-positive segment dimension"
                    )));
                }
                s.material.validate()?;
            }
            if (f.length() - self.free_length).abs() > 1e-9 * self.free_length.max(1.0) {
                return Err(Error::Geometry(format!(
                    "fibre {i} is {} mm long but the tendon free length is {} mm",
                    f.length(),
                    self.free_length
                )));
            }
        }
        let min_gap = self.pitch * (1.0 - POSITION_TOL);
        for i in 0..self.fibres.len() {
            for j in i + 1..self.fibres.len() {
                let d = distance(self.fibres[i].position, self.fibres[j].position);
                if d < min_gap {
                    return Err(Error::Geometry(format!(
                        "fibres {i} and {j} overlap ({d:.6} mm apart, pitch {} mm)",
                        self.pitch
                    )));
                }
            }
        }
        Ok(())
    }

    /// Short stable digest of the full specification.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(format!("{self:?}").as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Geometry knobs for a bundle of identical two-segment fibres.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleParams {
    pub fibre_count: usize,
    pub pitch: f64,
    pub diameter: f64,
    pub soft_length: f64,
    pub stiff_length: f64,
    pub soft_material: MaterialModel,
    pub stiff_material: MaterialModel,
    pub membrane_stiffness: f64,
}

impl Default for BundleParams {
    fn default() -> Self {
        Self {
            fibre_count: 18,
            pitch: 2.0,
            diameter: 2.0,
            soft_length: 30.0,
            stiff_length: 55.0,
            soft_material: MaterialGrade::ShoreA30.default_model(),
            stiff_material: MaterialGrade::ShoreA85.default_model(),
            membrane_stiffness: 0.0,
        }
    }
}

impl BundleParams {
    /// Every second fibre in lattice order is mirrored.
    pub fn build(&self) -> Result<TendonSpec> {
        let positions = hex_positions(self.fibre_count, self.pitch)?;
        let fibres = positions
            .into_iter()
            .enumerate()
            .map(|(i, position)| FibreSpec {
                segments: vec![
                    FibreSegmentSpec {
                        grade: MaterialGrade::ShoreA30,
                        material: self.soft_material,
                        length: self.soft_length,
                        diameter: self.diameter,
                    },
                    FibreSegmentSpec {
                        grade: MaterialGrade::ShoreA85,
                        material: self.stiff_material,
                        length: self.stiff_length,
                        diameter: self.diameter,
                    },
                ],
                mirrored: i % 2 == 1,
                position,
            })
            .collect();
        let spec = TendonSpec {
            fibres,
            pitch: self.pitch,
            membrane_stiffness: self.membrane_stiffness,
            free_length: self.soft_length + self.stiff_length,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Eighteen 2 mm fibres, 30 mm Shore A-30 plus 55 mm Shore A-85, on a
/// two-ring hexagonal lattice with the centre left empty.
pub fn default_tendon_spec() -> TendonSpec {
    BundleParams::default()
        .build()
        .expect("default bundle parameters are valid")
}

/// Sites of ring `k` of a triangular lattice, sorted by polar angle.
fn ring_sites(k: usize, pitch: f64) -> Vec<[f64; 2]> {
    if k == 0 {
        return vec![[0.0, 0.0]];
    }
    let corner = |c: usize| {
        let a = (c % 6) as f64 * PI / 3.0;
        [k as f64 * pitch * a.cos(), k as f64 * pitch * a.sin()]
    };
    let mut sites = Vec::with_capacity(6 * k);
    for c in 0..6 {
        let (p, q) = (corner(c), corner(c + 1));
        for s in 0..k {
            let t = s as f64 / k as f64;
            sites.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    let angle = |p: &[f64; 2]| p[1].atan2(p[0]).rem_euclid(2.0 * PI);
    sites.sort_by(|a, b| angle(a).total_cmp(&angle(b)));
    sites
}

/// Positions of `n` fibres on a triangular lattice, filled centre-out by
/// ring then angle. When `n` is one short of a complete hexagon the centre
/// site is the one left empty, keeping the bundle symmetric.
pub fn hex_positions(n: usize, pitch: f64) -> Result<Vec<[f64; 2]>> {
    if n == 0 {
        return Err(Error::EmptyInput("fibre count"));
    }
    if !(pitch > 0.0) {
        return Err(Error::Geometry(format!("pitch must be positive, got {pitch}")));
    }
    let mut rings = 0;
    while 3 * rings * (rings + 1) + 1 < n {
        rings += 1;
    }
    let full = 3 * rings * (rings + 1) + 1;
    let skip_centre = n > 1 && full == n + 1;
    let sites = (0..=rings)
        .flat_map(|k| ring_sites(k, pitch))
        .skip(usize::from(skip_centre))
        .take(n)
        .collect();
    Ok(sites)
}

/// A span along the fibres where the pairing class is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactStation {
    pub start: f64,
    pub end: f64,
    pub class: PairingClass,
}

impl ContactStation {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Lattice-adjacent fibre pair; `fibres.0 < fibres.1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPair {
    pub fibres: (usize, usize),
    pub stations: Vec<ContactStation>,
}

impl ContactPair {
    pub fn connects(&self, a: usize, b: usize) -> bool {
        self.fibres == (a.min(b), a.max(b))
    }
}

fn adjacent(a: [f64; 2], b: [f64; 2], pitch: f64) -> bool {
    distance(a, b) <= pitch * (1.0 + POSITION_TOL)
}

/// One entry per adjacent fibre pair, split into stations wherever either
/// fibre changes material.
pub fn contact_graph(spec: &TendonSpec) -> Result<Vec<ContactPair>> {
    spec.validate()?;
    let mut pairs = Vec::new();
    for i in 0..spec.fibres.len() {
        for j in i + 1..spec.fibres.len() {
            let (fi, fj) = (&spec.fibres[i], &spec.fibres[j]);
            if !adjacent(fi.position, fj.position, spec.pitch) {
                continue;
            }
            let mut cuts: Vec<f64> = fi.breakpoints();
            cuts.extend(fj.breakpoints());
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            let mut stations = Vec::new();
            for w in cuts.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let class = PairingClass::from_grades(fi.grade_at(mid), fj.grade_at(mid))?;
                stations.push(ContactStation {
                    start: w[0],
                    end: w[1],
                    class,
                });
            }
            pairs.push(ContactPair {
                fibres: (i, j),
                stations,
            });
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub fibre: usize,
    /// Global node indices, fixed-plate side first.
    pub nodes: (usize, usize),
    pub grade: MaterialGrade,
    pub material: MaterialModel,
    pub reference_length: f64,
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub fibre: usize,
    pub coord: f64,
}

/// Frictional coupling between two overlapping elements of adjacent fibres.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub fibres: (usize, usize),
    pub elements: (usize, usize),
    /// Axial coordinate where relative slip is measured (overlap midpoint).
    pub station: f64,
    pub overlap_length: f64,
    pub class: PairingClass,
    /// Multiplier on the applied vacuum for this interface's normal load.
    pub pressure_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshedTendon {
    pub nodes: Vec<Node>,
    pub elements: Vec<Element>,
    pub interfaces: Vec<Interface>,
    /// Node indices per fibre in axial order.
    pub fibre_nodes: Vec<Vec<usize>>,
    pub fibre_length: f64,
    pub membrane_stiffness: f64,
    pub spec_hash: String,
}

impl MeshedTendon {
    pub fn fibre_count(&self) -> usize {
        self.fibre_nodes.len()
    }

    pub fn elements_of(&self, fibre: usize) -> impl Iterator<Item = (usize, &Element)> {
        self.elements.iter().enumerate().filter(move |(_, e)| e.fibre == fibre)
    }

    /// Interpolation weights of the element's two nodes at axial `x`.
    pub fn shape(&self, element: usize, x: f64) -> (f64, f64) {
        let e = &self.elements[element];
        let xa = self.nodes[e.nodes.0].coord;
        let t = ((x - xa) / e.reference_length).clamp(0.0, 1.0);
        (1.0 - t, t)
    }
}

/// Split the fibre length across segments so every boundary is a node.
fn split_counts(lengths: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = lengths.iter().sum();
    let ideal: Vec<f64> = lengths.iter().map(|l| total as f64 * l / sum).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|v| (v.floor() as usize).max(1)).collect();
    // largest remainder
    while counts.iter().sum::<usize>() < total {
        let (k, _) = ideal.iter().zip(&counts).map(|(v, c)| v - *c as f64).enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (k, r)| if r > best.1 { (k, r) } else { best },
        );
        counts[k] += 1;
    }
    while counts.iter().sum::<usize>() > total {
        let (k, _) = ideal
            .iter()
            .zip(&counts)
            .map(|(v, c)| *c as f64 - v)
            .enumerate()
            .filter(|(k, _)| counts[*k] > 1)
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (k, r)| if r > best.1 { (k, r) } else { best },
            );
        counts[k] -= 1;
    }
    counts
}

pub fn mesh(spec: &TendonSpec, elements_per_fibre: usize) -> Result<MeshedTendon> {
    if elements_per_fibre < 2 {
        return Err(Error::Resolution(format!(
            "need at least 2 elements per fibre, got {elements_per_fibre}"
        )));
    }
    let graph = contact_graph(spec)?;

    let mut nodes = Vec::new();
    let mut elements = Vec::new();
    let mut fibre_nodes = Vec::with_capacity(spec.fibres.len());
    let mut fibre_elements: Vec<Vec<usize>> = Vec::with_capacity(spec.fibres.len());

    for (fi, fibre) in spec.fibres.iter().enumerate() {
        let layout = fibre.layout();
        if elements_per_fibre < layout.len() {
            return Err(Error::Resolution(format!(
                "{elements_per_fibre} elements cannot resolve {} segments",
                layout.len()
            )));
        }
        let lengths: Vec<f64> = layout.iter().map(|(_, s)| s.length).collect();
        let counts = split_counts(&lengths, elements_per_fibre);

        let mut ids = vec![nodes.len()];
        nodes.push(Node { fibre: fi, coord: 0.0 });
        let mut elems = Vec::new();
        for ((start, seg), count) in layout.iter().zip(&counts) {
            let h = seg.length / *count as f64;
            for k in 0..*count {
                let coord = if k + 1 == *count {
                    start + seg.length
                } else {
                    start + (k + 1) as f64 * h
                };
                let id = nodes.len();
                nodes.push(Node { fibre: fi, coord });
                let a = *ids.last().unwrap();
                elems.push(elements.len());
                elements.push(Element {
                    fibre: fi,
                    nodes: (a, id),
                    grade: seg.grade,
                    material: seg.material,
                    reference_length: coord - nodes[a].coord,
                    area: seg.area(),
                });
                ids.push(id);
            }
        }
        fibre_nodes.push(ids);
        fibre_elements.push(elems);
    }

    let mut interfaces = Vec::new();
    for pair in &graph {
        let (i, j) = pair.fibres;
        for &ei in &fibre_elements[i] {
            let (a0, a1) = span(&nodes, &elements[ei]);
            for &ej in &fibre_elements[j] {
                let (b0, b1) = span(&nodes, &elements[ej]);
                let lo = a0.max(b0);
                let hi = a1.min(b1);
                if hi - lo <= 1e-9 {
                    continue;
                }
                let class = PairingClass::from_grades(elements[ei].grade, elements[ej].grade)?;
                interfaces.push(Interface {
                    fibres: (i, j),
                    elements: (ei, ej),
                    station: 0.5 * (lo + hi),
                    overlap_length: hi - lo,
                    class,
                    pressure_scale: 1.0,
                });
            }
        }
    }

    Ok(MeshedTendon {
        nodes,
        elements,
        interfaces,
        fibre_nodes,
        fibre_length: spec.free_length,
        membrane_stiffness: spec.membrane_stiffness,
        spec_hash: spec.fingerprint(),
    })
}

fn span(nodes: &[Node], e: &Element) -> (f64, f64) {
    (nodes[e.nodes.0].coord, nodes[e.nodes.1].coord)
}
