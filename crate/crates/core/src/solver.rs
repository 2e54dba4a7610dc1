//! Quasi-static tensile solver for the meshed fibre bundle.
//!
//! Fibres are axial rods clamped to a fixed plate at `x = 0` and a moving
//! plate at `x = L`. Adjacent fibres interact only through tangential
//! friction at each interface: an elastic stick spring whose force is capped
//! at the Coulomb limit `mu * |p| * w * l` (elastic-perfectly-plastic). Each
//! load step is solved by Newton iteration with a consistent tangent and a
//! backward-Euler return map on the interface slip.

use std::io::Write;

use crate::error::{Error, Result};
use crate::tendon::{FrictionTable, MeshedTendon, PairingClass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadCase {
    /// End-plate travel, mm.
    pub max_displacement: f64,
    /// mm/s; recorded only, the model is rate independent.
    pub displacement_rate: f64,
    pub n_steps: usize,
    /// kPa, zero or negative.
    pub vacuum_pressure: f64,
}

impl Default for LoadCase {
    fn default() -> Self {
        Self {
            max_displacement: 20.0,
            displacement_rate: 5.0,
            n_steps: 100,
            vacuum_pressure: -50.0,
        }
    }
}

impl LoadCase {
    pub fn at_pressure(vacuum_pressure: f64) -> Self {
        Self {
            vacuum_pressure,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_displacement >= 0.0) || !self.max_displacement.is_finite() {
            return Err(Error::Configuration(format!(
                "max displacement must be >= 0, got {}",
                self.max_displacement
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::Configuration("load case needs at least one step".into()));
        }
        if !(self.vacuum_pressure <= 0.0) {
            return Err(Error::Configuration(format!(
                "vacuum pressure must be <= 0 kPa, got {}",
                self.vacuum_pressure
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub newton_tolerance: f64,
    pub max_newton_iterations: usize,
    /// Penalty stiffness of a sticking interface, N/mm.
    pub stick_stiffness: f64,
    /// Effective width of the line contact between two fibres, mm.
    pub contact_strip_width: f64,
    /// Times a load step may be bisected before giving up.
    pub max_step_cuts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            newton_tolerance: 1e-8,
            max_newton_iterations: 50,
            stick_stiffness: 1e3,
            contact_strip_width: 0.5,
            max_step_cuts: 8,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tolerance > 0.0) {
            return Err(Error::Configuration("newton tolerance must be positive".into()));
        }
        if !(self.stick_stiffness > 0.0) || !self.stick_stiffness.is_finite() {
            return Err(Error::Configuration("stick stiffness must be positive".into()));
        }
        if !(self.contact_strip_width > 0.0) {
            return Err(Error::Configuration("contact strip width must be positive".into()));
        }
        if self.max_newton_iterations == 0 {
            return Err(Error::Configuration("need at least one Newton iteration".into()));
        }
        Ok(())
    }

    fn describe(&self) -> Vec<(String, String)> {
        vec![
            ("newton_tolerance".into(), format!("{:?}", self.newton_tolerance)),
            ("max_newton_iterations".into(), self.max_newton_iterations.to_string()),
            ("stick_stiffness_n_per_mm".into(), format!("{:?}", self.stick_stiffness)),
            (
                "contact_strip_width_mm".into(),
                format!("{:?}", self.contact_strip_width),
            ),
        ]
    }
}

/// Ordered `(displacement mm, force N)` samples of one tensile run.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceDisplacementCurve {
    pub samples: Vec<(f64, f64)>,
    pub pressure_kpa: f64,
    pub spec_hash: String,
    /// Extra `key=value` pairs echoed into the CSV header.
    pub metadata: Vec<(String, String)>,
}

impl ForceDisplacementCurve {
    pub fn new(samples: Vec<(f64, f64)>, pressure_kpa: f64) -> Self {
        Self {
            samples,
            pressure_kpa,
            spec_hash: String::new(),
            metadata: Vec::new(),
        }
    }

    pub fn displacements(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    pub fn forces(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    /// Trapezoidal integral of force over displacement (N mm = mJ).
    pub fn external_work(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum()
    }

    /// Piecewise-linear interpolation; clamps outside the sampled range.
    pub fn interpolate(&self, x: f64) -> Option<f64> {
        let s = &self.samples;
        let first = s.first()?;
        if x <= first.0 {
            return Some(first.1);
        }
        for w in s.windows(2) {
            if x <= w[1].0 {
                let t = (x - w[0].0) / (w[1].0 - w[0].0);
                return Some(w[0].1 + t * (w[1].1 - w[0].1));
            }
        }
        s.last().map(|l| l.1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# pressure_kpa={:?}", self.pressure_kpa)?;
        writeln!(out, "# spec_hash={}", self.spec_hash)?;
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}={v}")?;
        }
        writeln!(out, "displacement_mm,force_n")?;
        for (d, f) in &self.samples {
            writeln!(out, "{d:?},{f:?}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Parses the format written by [`write_csv`](Self::write_csv).
    pub fn parse_csv(text: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            what: "force-displacement CSV".into(),
            message,
        };
        let mut curve = ForceDisplacementCurve::new(Vec::new(), 0.0);
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k.trim() {
                        "pressure_kpa" => {
                            curve.pressure_kpa = v.trim().parse().map_err(|e| parse_err(format!("{e}")))?
                        }
                        "spec_hash" => curve.spec_hash = v.trim().to_string(),
                        other => curve.metadata.push((other.to_string(), v.trim().to_string())),
                    }
                }
                continue;
            }
            if !header_seen {
                if line != "displacement_mm,force_n" {
                    return Err(parse_err(format!("unexpected header `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let (d, f) = line
                .split_once(',')
                .ok_or_else(|| parse_err(format!("line {}: expected two columns", lineno + 1)))?;
            let d: f64 = d
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("line {}: {e}", lineno + 1)))?;
            let f: f64 = f
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("line {}: {e}", lineno + 1)))?;
            curve.samples.push((d, f));
        }
        if !header_seen {
            return Err(parse_err("missing `displacement_mm,force_n` header".into()));
        }
        if curve.samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(parse_err("displacements must be strictly increasing".into()));
        }
        Ok(curve)
    }
}

pub fn peak_force(curve: &ForceDisplacementCurve) -> Result<f64> {
    curve
        .forces()
        .fold(None, |best: Option<f64>, f| Some(best.map_or(f, |b| b.max(f))))
        .ok_or(Error::EmptyInput("force-displacement curve"))
}

/// Coulomb capacity of one interface in N.
pub fn interface_slip_limit(
    class: PairingClass,
    friction: &FrictionTable,
    pressure_kpa: f64,
    overlap_length: f64,
    strip_width: f64,
) -> Result<f64> {
    if !(pressure_kpa <= 0.0) {
        return Err(Error::Input(format!(
            "vacuum pressure must be <= 0 kPa, got {pressure_kpa}"
        )));
    }
    if !(overlap_length > 0.0) || !(strip_width > 0.0) {
        return Err(Error::Input("contact lengths must be positive".into()));
    }
    if pressure_kpa == 0.0 {
        return Ok(0.0);
    }
    let normal = -pressure_kpa * 1e-3 * strip_width * overlap_length;
    Ok(friction.coefficient(class) * normal)
}

/// Nodal displacements and interface history of a solved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    /// Axial displacement of every mesh node, mm.
    pub displacements: Vec<f64>,
    /// Accumulated plastic slip per interface, mm.
    pub plastic_slip: Vec<f64>,
    pub end_displacement: f64,
    pub converged: bool,
}

impl SolveState {
    pub fn undeformed(mesh: &MeshedTendon) -> Self {
        Self {
            displacements: vec![0.0; mesh.nodes.len()],
            plastic_slip: vec![0.0; mesh.interfaces.len()],
            end_displacement: 0.0,
            converged: true,
        }
    }
}

/// Stretch of every element, in mesh element order.
pub fn strain_profile(state: &SolveState, mesh: &MeshedTendon) -> Result<Vec<f64>> {
    if !state.converged {
        return Err(Error::State("strain profile requested from an unconverged state"));
    }
    if state.displacements.len() != mesh.nodes.len() {
        return Err(Error::State("state does not belong to this mesh"));
    }
    Ok(mesh
        .elements
        .iter()
        .map(|e| 1.0 + (state.displacements[e.nodes.1] - state.displacements[e.nodes.0]) / e.reference_length)
        .collect())
}

#[derive(Debug, Clone)]
pub struct TensileRun {
    pub curve: ForceDisplacementCurve,
    pub state: SolveState,
    /// Plastic work of the interfaces, N mm.
    pub dissipated_energy: f64,
    /// Elastic energy in fibres, stick springs and membrane at the end, N mm.
    pub stored_energy: f64,
    pub newton_iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Symmetric positive definite matrix in lower band storage.
struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(r - c <= self.bw);
        self.data[r * (self.bw + 1) + (r - c)] += v;
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.bw + 1) + (r - c)]
    }

    /// In-place Cholesky, then solves `A x = b` into `b`. `None` if the
    /// matrix is not positive definite.
    fn factor_solve(&mut self, b: &mut [f64]) -> Option<()> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for j in 0..n {
            let k0 = j.saturating_sub(bw);
            let mut s = self.at(j, j);
            for k in k0..j {
                let l = self.data[j * w + (j - k)];
                s -= l * l;
            }
            if !(s > 0.0) {
                return None;
            }
            let djj = s.sqrt();
            self.data[j * w] = djj;
            for i in j + 1..(j + bw + 1).min(n) {
                let k0 = i.saturating_sub(bw);
                let mut s = self.at(i, j);
                for k in k0..j {
                    s -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                self.data[i * w + (i - j)] = s / djj;
            }
        }
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[i * w + (i - k)] * b[k];
            }
            b[i] = s / self.data[i * w];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.data[k * w + (k - i)] * b[k];
            }
            b[i] = s / self.data[i * w];
        }
        Some(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dof {
    FixedPlate,
    MovingPlate,
    Free(usize),
}

struct Assembly {
    residual: Vec<f64>,
    reaction: f64,
    /// Norm of all nodal internal forces, used to scale the residual.
    force_scale: f64,
    trial_slip: Vec<f64>,
    interface_force: Vec<f64>,
    /// Incremental potential of the step; Newton minimises it.
    potential: f64,
}

/// Per-mesh solver data that does not change between load steps.
struct Bundle<'a> {
    mesh: &'a MeshedTendon,
    opts: &'a SolverOptions,
    dofs: Vec<Dof>,
    n_free: usize,
    bandwidth: usize,
    limits: Vec<f64>,
    weights: Vec<[(usize, f64); 4]>,
    rigid_modulus: f64,
}

impl<'a> Bundle<'a> {
    fn new(mesh: &'a MeshedTendon, friction: &FrictionTable, pressure: f64, opts: &'a SolverOptions) -> Result<Self> {
        let moduli: Vec<f64> = mesh
            .elements
            .iter()
            .filter_map(|e| e.material.initial_modulus())
            .collect();
        if moduli.is_empty() {
            return Err(Error::Configuration(
                "every element is rigid; the stiffness matrix would be singular".into(),
            ));
        }
        let rigid_modulus = 1e3 * moduli.iter().cloned().fold(0.0, f64::max);

        // Free nodes numbered by axial coordinate, then fibre, which keeps
        // interface couplings inside a narrow band.
        let length = mesh.fibre_length;
        let tol = 1e-9 * length.max(1.0);
        let mut order: Vec<usize> = (0..mesh.nodes.len()).collect();
        order.sort_by(|&a, &b| {
            let (na, nb) = (&mesh.nodes[a], &mesh.nodes[b]);
            na.coord.total_cmp(&nb.coord).then(na.fibre.cmp(&nb.fibre))
        });
        let mut dofs = vec![Dof::FixedPlate; mesh.nodes.len()];
        let mut n_free = 0;
        for &i in &order {
            let x = mesh.nodes[i].coord;
            dofs[i] = if x.abs() <= tol {
                Dof::FixedPlate
            } else if (x - length).abs() <= tol {
                Dof::MovingPlate
            } else {
                n_free += 1;
                Dof::Free(n_free - 1)
            };
        }

        let mut limits = Vec::with_capacity(mesh.interfaces.len());
        let mut weights = Vec::with_capacity(mesh.interfaces.len());
        for itf in &mesh.interfaces {
            let lim = interface_slip_limit(
                itf.class,
                friction,
                pressure * itf.pressure_scale,
                itf.overlap_length,
                opts.contact_strip_width,
            )?;
            limits.push(lim);
            let (ei, ej) = itf.elements;
            let (wa, wb) = mesh.shape(ei, itf.station);
            let (va, vb) = mesh.shape(ej, itf.station);
            let (a, b) = mesh.elements[ei].nodes;
            let (c, d) = mesh.elements[ej].nodes;
            weights.push([(a, wa), (b, wb), (c, -va), (d, -vb)]);
        }

        let mut bandwidth = 0;
        let mut widen = |nodes: &[usize]| {
            for &p in nodes {
                for &q in nodes {
                    if let (Dof::Free(i), Dof::Free(j)) = (dofs[p], dofs[q]) {
                        bandwidth = bandwidth.max(i.abs_diff(j));
                    }
                }
            }
        };
        for e in &mesh.elements {
            widen(&[e.nodes.0, e.nodes.1]);
        }
        for w in &weights {
            widen(&[w[0].0, w[1].0, w[2].0, w[3].0]);
        }

        Ok(Self {
            mesh,
            opts,
            dofs,
            n_free,
            bandwidth,
            limits,
            weights,
            rigid_modulus,
        })
    }

    fn element_law(&self, e: &crate::tendon::Element, stretch: f64) -> (f64, f64, f64) {
        match e.material.stress_unchecked(stretch) {
            Some(p) => (
                p,
                e.material.tangent_unchecked(stretch).unwrap_or(0.0),
                e.material.energy_unchecked(stretch).unwrap_or(0.0),
            ),
            None => {
                let k = self.rigid_modulus;
                (k * (stretch - 1.0), k, 0.5 * k * (stretch - 1.0).powi(2))
            }
        }
    }

    /// Internal forces at `u` (and the tangent into `k` when given).
    fn assemble(&self, u: &[f64], slip_old: &[f64], mut k: Option<&mut BandedSpd>) -> Option<Assembly> {
        let mesh = self.mesh;
        let mut f = vec![0.0; mesh.nodes.len()];
        let mut potential = 0.0;
        if let Some(k) = k.as_deref_mut() {
            k.clear();
        }

        for e in &mesh.elements {
            let (a, b) = e.nodes;
            let stretch = 1.0 + (u[b] - u[a]) / e.reference_length;
            if !(stretch > 0.2) {
                return None;
            }
            let (p, dp, w) = self.element_law(e, stretch);
            potential += e.area * e.reference_length * w;
            let n = e.area * p;
            f[a] -= n;
            f[b] += n;
            if let Some(k) = k.as_deref_mut() {
                let ke = e.area * dp / e.reference_length;
                self.scatter(k, &[(a, 1.0), (b, -1.0)], ke);
            }
        }

        let ks = self.opts.stick_stiffness;
        let mut trial_slip = slip_old.to_vec();
        let mut interface_force = vec![0.0; mesh.interfaces.len()];
        for (i, w) in self.weights.iter().enumerate() {
            let gap: f64 = w.iter().map(|(n, c)| c * u[*n]).sum();
            let delta = gap - slip_old[i];
            let mut t = ks * delta;
            let lim = self.limits[i];
            let kt = if t.abs() <= lim {
                potential += 0.5 * ks * delta * delta;
                ks
            } else {
                t = lim.copysign(t);
                trial_slip[i] = gap - t / ks;
                potential += lim * delta.abs() - 0.5 * lim * lim / ks;
                0.0
            };
            interface_force[i] = t;
            for (n, c) in w {
                f[*n] += c * t;
            }
            if kt > 0.0 {
                if let Some(k) = k.as_deref_mut() {
                    self.scatter(k, w, kt);
                }
            }
        }

        let mut residual = vec![0.0; self.n_free];
        let mut reaction = 0.0;
        for (node, dof) in self.dofs.iter().enumerate() {
            match dof {
                Dof::Free(i) => residual[*i] = f[node],
                Dof::MovingPlate => reaction += f[node],
                Dof::FixedPlate => {}
            }
        }
        let force_scale = norm(&f);
        Some(Assembly {
            residual,
            reaction,
            force_scale,
            trial_slip,
            interface_force,
            potential,
        })
    }

    fn scatter(&self, k: &mut BandedSpd, b: &[(usize, f64)], stiffness: f64) {
        for (p, cp) in b {
            let Dof::Free(i) = self.dofs[*p] else { continue };
            for (q, cq) in b {
                let Dof::Free(j) = self.dofs[*q] else { continue };
                if j <= i {
                    k.add(i, j, stiffness * cp * cq);
                }
            }
        }
    }

    fn impose(&self, u: &mut [f64], d: f64) {
        for (node, dof) in self.dofs.iter().enumerate() {
            match dof {
                Dof::FixedPlate => u[node] = 0.0,
                Dof::MovingPlate => u[node] = d,
                Dof::Free(_) => {}
            }
        }
    }

    /// Newton solve at end displacement `d` starting from `state`, with a
    /// backtracking line search on the incremental potential.
    fn newton(
        &self,
        state: &SolveState,
        guess: Vec<f64>,
        d: f64,
        k: &mut BandedSpd,
    ) -> Option<(SolveState, Assembly, usize)> {
        let mut u = guess;
        self.impose(&mut u, d);
        let mut rhs = vec![0.0; self.n_free];
        let mut trial = u.clone();
        let mut asm = self.assemble(&u, &state.plastic_slip, Some(k))?;
        for iter in 0..self.opts.max_newton_iterations {
            let rnorm = norm(&asm.residual);
            if rnorm <= self.opts.newton_tolerance * asm.force_scale || asm.force_scale == 0.0 {
                let next = SolveState {
                    displacements: u,
                    plastic_slip: asm.trial_slip.clone(),
                    end_displacement: d,
                    converged: true,
                };
                return Some((next, asm, iter));
            }
            for (r, v) in rhs.iter_mut().zip(&asm.residual) {
                *r = -v;
            }
            k.factor_solve(&mut rhs)?;
            // residual is the potential gradient, so this is the directional slope
            let slope: f64 = asm.residual.iter().zip(&rhs).map(|(r, s)| r * s).sum();
            let mut alpha = 1.0;
            let accepted = loop {
                for (node, dof) in self.dofs.iter().enumerate() {
                    if let Dof::Free(i) = dof {
                        trial[node] = u[node] + alpha * rhs[*i];
                    }
                }
                self.impose(&mut trial, d);
                if let Some(next) = self.assemble(&trial, &state.plastic_slip, None) {
                    let decrease = next.potential - asm.potential;
                    let flat = decrease.abs() <= 1e-14 * asm.potential.abs().max(1.0);
                    if decrease <= 1e-4 * alpha * slope || (flat && norm(&next.residual) < rnorm) {
                        break true;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-10 {
                    break false;
                }
            };
            if !accepted {
                return None;
            }
            std::mem::swap(&mut u, &mut trial);
            asm = self.assemble(&u, &state.plastic_slip, Some(k))?;
        }
        None
    }

    fn stored_energy(&self, state: &SolveState) -> f64 {
        let u = &state.displacements;
        let mut energy = 0.0;
        for e in &self.mesh.elements {
            let stretch = 1.0 + (u[e.nodes.1] - u[e.nodes.0]) / e.reference_length;
            energy += e.area * e.reference_length * self.element_law(e, stretch).2;
        }
        let ks = self.opts.stick_stiffness;
        for (i, w) in self.weights.iter().enumerate() {
            let gap: f64 = w.iter().map(|(n, c)| c * u[*n]).sum();
            energy += 0.5 * ks * (gap - state.plastic_slip[i]).powi(2);
        }
        energy + 0.5 * self.mesh.membrane_stiffness * state.end_displacement.powi(2)
    }
}

pub fn solve_tensile(
    mesh: &MeshedTendon,
    friction: &FrictionTable,
    load: &LoadCase,
    opts: &SolverOptions,
) -> Result<ForceDisplacementCurve> {
    solve_tensile_run(mesh, friction, load, opts).map(|run| run.curve)
}

/// Full tensile solve, returning the final state and energy bookkeeping.
pub fn solve_tensile_run(
    mesh: &MeshedTendon,
    friction: &FrictionTable,
    load: &LoadCase,
    opts: &SolverOptions,
) -> Result<TensileRun> {
    load.validate()?;
    opts.validate()?;
    friction.validate()?;
    let bundle = Bundle::new(mesh, friction, load.vacuum_pressure, opts)?;
    let mut k = BandedSpd::zeros(bundle.n_free, bundle.bandwidth);

    let mut metadata = opts.describe();
    metadata.push(("displacement_rate_mm_s".into(), format!("{:?}", load.displacement_rate)));
    metadata.push(("mu_a30_a30".into(), format!("{:?}", friction.mu_a30_a30)));
    metadata.push(("mu_a30_a85".into(), format!("{:?}", friction.mu_a30_a85)));
    metadata.push(("mu_a85_a85".into(), format!("{:?}", friction.mu_a85_a85)));
    let mut curve = ForceDisplacementCurve {
        samples: vec![(0.0, 0.0)],
        pressure_kpa: load.vacuum_pressure,
        spec_hash: mesh.spec_hash.clone(),
        metadata,
    };

    let mut state = SolveState::undeformed(mesh);
    let mut previous: Option<SolveState> = None;
    let mut dissipated = 0.0;
    let mut iterations = 0;
    if load.max_displacement > 0.0 {
        let n = load.n_steps;
        for step in 1..=n {
            let target = load.max_displacement * step as f64 / n as f64;
            let mut pending = vec![(target, 0usize)];
            let mut reaction = 0.0;
            while let Some((d, depth)) = pending.pop() {
                // extrapolate the last increment as the starting guess
                let guess = match &previous {
                    Some(prev) if state.end_displacement > prev.end_displacement => {
                        let t = (d - state.end_displacement) / (state.end_displacement - prev.end_displacement);
                        state
                            .displacements
                            .iter()
                            .zip(&prev.displacements)
                            .map(|(a, b)| a + t * (a - b))
                            .collect()
                    }
                    _ => state.displacements.clone(),
                };
                match bundle.newton(&state, guess, d, &mut k) {
                    Some((next, asm, its)) => {
                        iterations += its;
                        dissipated += state
                            .plastic_slip
                            .iter()
                            .zip(&next.plastic_slip)
                            .zip(&asm.interface_force)
                            .map(|((old, new), t)| t.abs() * (new - old).abs())
                            .sum::<f64>();
                        reaction = asm.reaction;
                        previous = Some(std::mem::replace(&mut state, next));
                    }
                    None if depth < opts.max_step_cuts => {
                        let mid = 0.5 * (state.end_displacement + d);
                        pending.push((d, depth + 1));
                        pending.push((mid, depth + 1));
                    }
                    None => {
                        return Err(Error::NonConvergence {
                            step,
                            displacement: d,
                            partial: Box::new(curve),
                        });
                    }
                }
            }
            curve
                .samples
                .push((target, reaction + mesh.membrane_stiffness * target));
        }
    }

    let stored_energy = bundle.stored_energy(&state);
    Ok(TensileRun {
        curve,
        state,
        dissipated_energy: dissipated,
        stored_energy,
        newton_iterations: iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{LinearElasticModel, MaterialModel};
    use crate::tendon::{mesh, BundleParams, FibreSegmentSpec, FibreSpec, MaterialGrade, TendonSpec};
    use std::f64::consts::PI;

    fn single_rod(length: f64, material: MaterialModel) -> TendonSpec {
        let mut seg = FibreSegmentSpec::new(MaterialGrade::ShoreA85, length, 2.0);
        seg.material = material;
        TendonSpec {
            fibres: vec![FibreSpec {
                segments: vec![seg],
                mirrored: false,
                position: [0.0, 0.0],
            }],
            pitch: 2.0,
            membrane_stiffness: 0.0,
            free_length: length,
        }
    }

    #[test]
    fn slip_limit_examples() {
        let f = FrictionTable::CALIBRATED;
        let l = interface_slip_limit(PairingClass::A85A85, &f, -50.0, 5.0, 0.5).unwrap();
        assert!((l - 0.12375).abs() < 1e-15);
        assert_eq!(
            interface_slip_limit(PairingClass::A30A85, &f, 0.0, 5.0, 0.5).unwrap(),
            0.0
        );
        assert_eq!(
            interface_slip_limit(PairingClass::A85A85, &FrictionTable::BONDED, 0.0, 5.0, 0.5).unwrap(),
            0.0
        );
        let l = interface_slip_limit(PairingClass::A30A30, &f, -10.0, 5.0, 0.5).unwrap();
        assert!((l - 0.0185).abs() < 1e-15);
        assert!(interface_slip_limit(PairingClass::A30A30, &f, 5.0, 5.0, 0.5).is_err());
    }

    #[test]
    fn zero_displacement_gives_single_sample() {
        let m = mesh(&crate::tendon::default_tendon_spec(), 17).unwrap();
        let load = LoadCase {
            max_displacement: 0.0,
            ..LoadCase::default()
        };
        let c = solve_tensile(&m, &FrictionTable::CALIBRATED, &load, &SolverOptions::default()).unwrap();
        assert_eq!(c.samples, vec![(0.0, 0.0)]);
    }

    #[test]
    fn single_linear_rod_matches_ea_over_l() {
        let spec = single_rod(85.0, MaterialModel::Linear(LinearElasticModel::SHORE_A85));
        let m = mesh(&spec, 10).unwrap();
        let load = LoadCase {
            max_displacement: 1.0,
            n_steps: 4,
            vacuum_pressure: 0.0,
            ..LoadCase::default()
        };
        let c = solve_tensile(&m, &FrictionTable::CALIBRATED, &load, &SolverOptions::default()).unwrap();
        let expected = 7.34 * PI / 85.0;
        let got = c.samples.last().unwrap().1;
        assert!(((got - expected) / expected).abs() < 1e-9, "{got} vs {expected}");
        assert!((got - 0.2713).abs() < 1e-4);
    }

    #[test]
    fn all_rigid_mesh_rejected() {
        let spec = single_rod(10.0, MaterialModel::Rigid);
        let m = mesh(&spec, 4).unwrap();
        let err = solve_tensile(
            &m,
            &FrictionTable::CALIBRATED,
            &LoadCase::at_pressure(0.0),
            &SolverOptions::default(),
        );
        assert!(matches!(err, Err(Error::Configuration(_))));
    }

    #[test]
    fn banded_cholesky_solves_tridiagonal() {
        let n = 6;
        let mut k = BandedSpd::zeros(n, 1);
        for i in 0..n {
            k.add(i, i, 2.0);
            if i > 0 {
                k.add(i, i - 1, -1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = 2.0 * x_true[i];
                if i > 0 {
                    s -= x_true[i - 1];
                }
                if i + 1 < n {
                    s -= x_true[i + 1];
                }
                s
            })
            .collect();
        k.factor_solve(&mut b).unwrap();
        for i in 0..n {
            assert!((b[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn banded_cholesky_rejects_indefinite() {
        let mut k = BandedSpd::zeros(2, 1);
        k.add(0, 0, 1.0);
        k.add(1, 0, 2.0);
        k.add(1, 1, 1.0);
        assert!(k.factor_solve(&mut [1.0, 1.0]).is_none());
    }

    #[test]
    fn peak_force_examples() {
        let c = ForceDisplacementCurve::new(vec![(0.0, 0.0), (10.0, 5.0), (20.0, 4.0)], 0.0);
        assert_eq!(peak_force(&c).unwrap(), 5.0);
        let c = ForceDisplacementCurve::new(vec![(0.0, 0.0)], 0.0);
        assert_eq!(peak_force(&c).unwrap(), 0.0);
        let c = ForceDisplacementCurve::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)], 0.0);
        assert_eq!(peak_force(&c).unwrap(), 3.0);
        let c = ForceDisplacementCurve::new(vec![], 0.0);
        assert!(matches!(peak_force(&c), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn undeformed_profile_is_unit_stretch() {
        let m = mesh(&crate::tendon::default_tendon_spec(), 17).unwrap();
        let s = SolveState::undeformed(&m);
        assert!(strain_profile(&s, &m).unwrap().iter().all(|l| *l == 1.0));
        let bad = SolveState { converged: false, ..s };
        assert!(matches!(strain_profile(&bad, &m), Err(Error::State(_))));
    }

    #[test]
    fn csv_round_trip_and_format() {
        let m = mesh(
            &BundleParams {
                fibre_count: 2,
                ..BundleParams::default()
            }
            .build()
            .unwrap(),
            17,
        )
        .unwrap();
        let load = LoadCase {
            n_steps: 10,
            vacuum_pressure: 0.0,
            ..LoadCase::default()
        };
        let c = solve_tensile(&m, &FrictionTable::CALIBRATED, &load, &SolverOptions::default()).unwrap();
        let text = c.to_csv_string();
        assert!(text.contains("\ndisplacement_mm,force_n\n0.0,0.0\n"));
        assert!(text.starts_with("# pressure_kpa=0.0\n# spec_hash="));
        let back = ForceDisplacementCurve::parse_csv(&text).unwrap();
        assert_eq!(back, c);
    }
}
