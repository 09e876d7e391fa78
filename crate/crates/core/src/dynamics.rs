//! Executable reduction dynamics.
//!
//! * Currents carry square modulus along active edges (midpoint rule).
//! * A stochastic hit on a ready component happens with probability
//!   `(Σ J_n) / s` per unit time, summed over ready components receiving
//!   positive current.
//! * Interactions spawn ready components; ready and phantom components can
//!   only receive current.
//! * A hit realizes the chosen component and removes every other one within
//!   the same step.
//! * Ready components that stop receiving current become frozen phantoms.

use rand::Rng;
use thiserror::Error;

use crate::model::{
    Component, ComponentId, CurrentEdge, Interaction, Kind, ModelError, Process, ProcessKind,
    ProcessStatus, Slot, StateLabel, Superposition,
};

/// Largest admissible hit probability in a single step.
pub const MAX_STEP_PROBABILITY: f64 = 0.1;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("hit probability {probability:.4} per step exceeds {MAX_STEP_PROBABILITY}; use a smaller dt")]
    StepTooLarge { probability: f64 },
    #[error("ready or phantom component {from} emits current")]
    SinkViolation { from: ComponentId },
    #[error("rule violation: {0}")]
    Rule(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown component {0}")]
    UnknownComponent(ComponentId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateForm {
    ExponentialDecay { lambda: f64 },
    Constant { level: f64 },
    Ramp { slope: f64 },
}

/// Time-dependent current `J(t)` along one edge, zero outside `[start, cutoff)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFunction {
    pub form: RateForm,
    pub start: f64,
    pub cutoff: f64,
}

impl RateFunction {
    pub fn exponential_decay(lambda: f64, start: f64, cutoff: f64) -> Self {
        Self {
            form: RateForm::ExponentialDecay { lambda },
            start,
            cutoff,
        }
    }

    pub fn constant(level: f64, start: f64, cutoff: f64) -> Self {
        Self {
            form: RateForm::Constant { level },
            start,
            cutoff,
        }
    }

    pub fn ramp(slope: f64, start: f64, cutoff: f64) -> Self {
        Self {
            form: RateForm::Ramp { slope },
            start,
            cutoff,
        }
    }

    /// Same shape, moved so that it starts at `start`.
    pub fn starting_at(self, start: f64) -> Self {
        Self {
            start,
            cutoff: start + (self.cutoff - self.start),
            ..self
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self.form {
            RateForm::ExponentialDecay { lambda } => lambda == 0.0,
            RateForm::Constant { level } => level == 0.0,
            RateForm::Ramp { slope } => slope == 0.0,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        decay_current(t, self)
    }

    /// Midpoint-rule mass transferred over `[t, t + dt]`, clipped to the
    /// support of the function.
    pub fn transferred(&self, t: f64, dt: f64) -> f64 {
        let lo = t.max(self.start);
        let hi = (t + dt).min(self.cutoff);
        if hi <= lo {
            return 0.0;
        }
        self.at(0.5 * (lo + hi)) * (hi - lo)
    }
}

/// Instantaneous current `J(t)`; zero before the start and at or after the cutoff.
pub fn decay_current(t: f64, rf: &RateFunction) -> f64 {
    if t < rf.start || t >= rf.cutoff {
        return 0.0;
    }
    let tau = t - rf.start;
    let j = match rf.form {
        RateForm::ExponentialDecay { lambda } => lambda * (-lambda * tau).exp(),
        RateForm::Constant { level } => level,
        RateForm::Ramp { slope } => slope * tau,
    };
    j.max(0.0)
}

/// Denominator used for the hit rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Mass of the realized components, the rows that still carry their own
    /// evolution. Ready and phantom components are dead ends.
    #[default]
    RealizedModulus,
    /// The total square modulus of the system, phantoms included.
    TotalModulus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HitEvent {
    /// Instant of the hit, inside the step that produced it.
    pub time: f64,
    pub chosen: ComponentId,
    pub rate_at_hit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferClamp {
    pub edge: usize,
    pub requested: f64,
    pub available: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// Processes that reached their final configuration during the step.
    pub completions: Vec<(ComponentId, ProcessKind)>,
    /// Realized components whose state moved during the step.
    pub evolved: Vec<ComponentId>,
    pub clamps: Vec<TransferClamp>,
}

/// Moves mass along active edges and runs realized components' classical
/// processes over `[t, t + dt]`.
pub fn advance(sup: &mut Superposition, t: f64, dt: f64) -> Result<StepReport, DynamicsError> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(DynamicsError::Domain(format!("dt = {dt} must be positive")));
    }
    let mut report = StepReport::default();
    let mid = t + 0.5 * dt;

    for i in 0..sup.edges.len() {
        if !sup.edges[i].active {
            continue;
        }
        if t >= sup.edges[i].active_until - TIME_EPS {
            sup.edges[i].active = false;
            continue;
        }
        let edge = &sup.edges[i];
        let from_idx = sup
            .index_of(edge.from)
            .ok_or(DynamicsError::UnknownComponent(edge.from))?;
        let to_idx = sup
            .index_of(edge.to)
            .ok_or(DynamicsError::UnknownComponent(edge.to))?;
        if sup.components[from_idx].kind != Kind::Realized && edge.rate().at(mid) > 0.0 {
            return Err(DynamicsError::SinkViolation { from: edge.from });
        }
        let requested = edge.rate().transferred(t, dt);
        let available = sup.components[from_idx].modulus;
        let amount = if requested > available {
            report.clamps.push(TransferClamp {
                edge: i,
                requested,
                available,
            });
            available
        } else {
            requested
        };
        sup.components[from_idx].modulus -= amount;
        sup.components[to_idx].modulus += amount;
    }

    let coupling = sup.coupling.as_ref();
    for c in sup.components.iter_mut() {
        if c.kind != Kind::Realized || !c.has_running_process() {
            continue;
        }
        report.evolved.push(c.id);
        let mut finished = Vec::new();
        for (pi, p) in c.processes.iter_mut().enumerate() {
            if p.status != ProcessStatus::Running {
                continue;
            }
            p.progress = if p.duration > 0.0 {
                (p.progress + dt / p.duration).min(1.0)
            } else {
                1.0
            };
            if p.progress >= 1.0 - TIME_EPS {
                p.progress = 1.0;
                p.status = ProcessStatus::Complete;
                finished.push(pi);
            }
        }
        for pi in 0..c.processes.len() {
            let (kind, progress) = (c.processes[pi].kind, c.processes[pi].progress);
            if let Some(slot) = kind.phase_slot() {
                if let Some(label) = c.label_mut(slot) {
                    label.phase = Some(progress);
                }
            }
        }
        for pi in finished {
            let kind = c.processes[pi].kind;
            let rewrites = c.processes[pi].rewrites.clone();
            for rw in &rewrites {
                if let Some(label) = c.label_mut(rw.slot) {
                    if label.symbol == rw.from {
                        label.symbol = rw.to;
                    }
                }
            }
            if let Some(coupling) = coupling {
                if kind == ProcessKind::Observation {
                    coupling.board(c);
                }
                coupling.sync(c);
            }
            report.completions.push((c.id, kind));
        }
    }
    Ok(report)
}

/// Net positive current into each ready component at `t`.
pub fn ready_currents(sup: &Superposition, t: f64) -> Vec<(ComponentId, f64)> {
    let mut out: Vec<(ComponentId, f64)> = Vec::new();
    for e in sup.edges.iter().filter(|e| e.active) {
        let j = e.rate().at(t);
        if j <= 0.0 {
            continue;
        }
        let Some(to) = sup.get(e.to) else { continue };
        if to.kind != Kind::Ready {
            continue;
        }
        match out.iter_mut().find(|(id, _)| *id == e.to) {
            Some((_, acc)) => *acc += j,
            None => out.push((e.to, j)),
        }
    }
    out.retain(|(_, j)| *j > 0.0);
    out
}

fn denominator(sup: &Superposition, norm: Normalization) -> f64 {
    match norm {
        Normalization::RealizedModulus => sup.realized().map(|c| c.modulus).sum(),
        Normalization::TotalModulus => sup.total_s,
    }
}

/// Probability per unit time of a stochastic hit at `t`.
pub fn hit_rate(sup: &Superposition, t: f64) -> Result<f64, DynamicsError> {
    hit_rate_with(sup, t, Normalization::default())
}

pub fn hit_rate_with(
    sup: &Superposition,
    t: f64,
    norm: Normalization,
) -> Result<f64, DynamicsError> {
    if sup.total_s <= 0.0 {
        return Err(DynamicsError::Domain("total square modulus is zero".into()));
    }
    let currents: f64 = ready_currents(sup, t).iter().map(|(_, j)| j).sum();
    if currents == 0.0 {
        return Ok(0.0);
    }
    let s = denominator(sup, norm);
    if s <= 0.0 {
        return Err(DynamicsError::Domain(
            "no realized mass left to normalize the hit rate".into(),
        ));
    }
    Ok(currents / s)
}

/// Per-step Bernoulli draw for a hit during `[t, t + dt]`.
///
/// The rate is taken at the step midpoint. One uniform `u` is drawn whenever
/// the rate is positive and a hit happens when `u < p`. Given a hit, `u / p`
/// is uniform on `[0, 1)`: it picks the component proportionally to its
/// current, and its residual inside that component's share places the hit
/// instant within the step.
pub fn sample_hit<R: Rng + ?Sized>(
    sup: &Superposition,
    t: f64,
    dt: f64,
    rng: &mut R,
) -> Result<Option<HitEvent>, DynamicsError> {
    sample_hit_with(sup, t, dt, rng, Normalization::default())
}

pub fn sample_hit_with<R: Rng + ?Sized>(
    sup: &Superposition,
    t: f64,
    dt: f64,
    rng: &mut R,
    norm: Normalization,
) -> Result<Option<HitEvent>, DynamicsError> {
    let mid = t + 0.5 * dt;
    let currents = ready_currents(sup, mid);
    if currents.is_empty() {
        return Ok(None);
    }
    let rate = hit_rate_with(sup, mid, norm)?;
    let p = rate * dt;
    if p >= MAX_STEP_PROBABILITY {
        return Err(DynamicsError::StepTooLarge { probability: p });
    }
    let u: f64 = rng.gen();
    if u >= p {
        return Ok(None);
    }
    let (chosen, offset) = pick_with_residual(&currents, u / p);
    Ok(Some(HitEvent {
        time: t + offset * dt,
        chosen,
        rate_at_hit: rate,
    }))
}

/// Picks the component whose cumulative share of the current covers `frac`.
pub fn pick_proportional(currents: &[(ComponentId, f64)], frac: f64) -> ComponentId {
    pick_with_residual(currents, frac).0
}

/// As [`pick_proportional`], also returning where `frac` falls inside the
/// chosen share, rescaled to `[0, 1)`.
pub fn pick_with_residual(currents: &[(ComponentId, f64)], frac: f64) -> (ComponentId, f64) {
    let total: f64 = currents.iter().map(|(_, j)| j).sum();
    let target = frac * total;
    let mut acc = 0.0;
    for &(id, j) in currents {
        if target < acc + j {
            return (id, ((target - acc) / j).clamp(0.0, 1.0));
        }
        acc += j;
    }
    let &(id, j) = &currents[currents.len() - 1];
    (id, ((target - (acc - j)) / j).clamp(0.0, 1.0))
}

fn spawned_labels(source: &Component, interaction: &Interaction) -> Vec<StateLabel> {
    source
        .labels
        .iter()
        .map(|l| {
            interaction
                .new_labels
                .iter()
                .find(|n| n.slot() == l.slot())
                .unwrap_or(l)
                .clone()
        })
        .collect()
}

fn spawned_processes(source: &Component, interaction: &Interaction) -> Vec<Process> {
    let mut processes = source.processes.clone();
    processes.extend(interaction.armed.iter().cloned());
    processes
}

/// Creates a zero-modulus ready component from a realized source and feeds
/// it with a new current edge. Every new state is a ready state.
pub fn spawn_ready(
    sup: &mut Superposition,
    source: ComponentId,
    interaction: &Interaction,
    t: f64,
) -> Result<ComponentId, DynamicsError> {
    let src = sup
        .get(source)
        .ok_or(DynamicsError::UnknownComponent(source))?;
    if src.kind != Kind::Realized {
        return Err(DynamicsError::Rule(format!(
            "{source} is {} and can only receive current",
            src.kind.as_str()
        )));
    }
    if interaction.new_labels.is_empty() {
        return Err(ModelError::Schema(
            "an interaction must produce at least one new (ready) state".into(),
        )
        .into());
    }
    let labels = spawned_labels(src, interaction);
    let processes = spawned_processes(src, interaction);
    let marked: Vec<Slot> = interaction.new_labels.iter().map(|l| l.slot()).collect();
    let mut ready = sup.make_component(labels, 0.0, Kind::Ready, &marked, t)?;
    ready.processes = processes;
    let to = sup.insert(ready);
    sup.edges.push(CurrentEdge {
        from: source,
        to,
        active_until: interaction.rate.cutoff,
        interaction: interaction.clone(),
        active: true,
        phantom_count: 0,
    });
    Ok(to)
}

/// Realizes the chosen ready component and removes every other component.
pub fn reduce(sup: &mut Superposition, hit: &HitEvent) -> Result<(), DynamicsError> {
    let idx = sup
        .index_of(hit.chosen)
        .ok_or(DynamicsError::UnknownComponent(hit.chosen))?;
    if sup.components[idx].kind != Kind::Ready {
        return Err(DynamicsError::Rule(format!(
            "{} is {}, only ready components can be chosen",
            hit.chosen,
            sup.components[idx].kind.as_str()
        )));
    }
    let mut chosen = sup.components.swap_remove(idx);
    chosen.kind = Kind::Realized;
    chosen.ready_symbols.clear();
    for p in chosen.processes.iter_mut() {
        if p.status == ProcessStatus::Armed {
            p.status = ProcessStatus::Running;
        }
    }
    sup.total_s = chosen.modulus;
    sup.components.clear();
    sup.components.push(chosen);
    sup.edges.clear();
    Ok(())
}

/// Deactivates edges whose cutoff has been reached by `t`; returns their indices.
pub fn expire_edges(sup: &mut Superposition, t: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, e) in sup.edges.iter_mut().enumerate() {
        if e.active && e.active_until <= t + TIME_EPS {
            e.active = false;
            out.push(i);
        }
    }
    out
}

/// Turns every ready component without an active feeding edge into a phantom.
pub fn phantomize(sup: &mut Superposition, _t: f64) -> Vec<(ComponentId, f64)> {
    let fed: Vec<ComponentId> = sup
        .edges
        .iter()
        .filter(|e| e.active)
        .map(|e| e.to)
        .collect();
    let mut out = Vec::new();
    for c in sup.components.iter_mut() {
        if c.kind == Kind::Ready && !fed.contains(&c.id) {
            c.kind = Kind::Phantom;
            out.push((c.id, c.modulus));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Superseded {
    pub phantom: ComponentId,
    pub modulus: f64,
    pub live: ComponentId,
}

/// Continuum of ready states behind an evolving source row: each tracking
/// edge whose source evolved leaves its current ready component behind as a
/// phantom and feeds a fresh one copied from the source's present state.
///
/// The live ready component keeps its id, its `born_at` moves to `t` and its
/// modulus restarts from zero.
pub fn continue_continuum(
    sup: &mut Superposition,
    t: f64,
    evolved: &[ComponentId],
) -> Result<Vec<Superseded>, DynamicsError> {
    let mut out = Vec::new();
    for i in 0..sup.edges.len() {
        let edge = &sup.edges[i];
        if !edge.active || !edge.interaction.tracks_source || !evolved.contains(&edge.from) {
            continue;
        }
        let (from, to) = (edge.from, edge.to);
        let src = sup.get(from).ok_or(DynamicsError::UnknownComponent(from))?;
        let labels = spawned_labels(src, &edge.interaction);
        let processes = spawned_processes(src, &edge.interaction);
        let live_idx = sup
            .index_of(to)
            .ok_or(DynamicsError::UnknownComponent(to))?;
        let live = &sup.components[live_idx];
        if live.kind != Kind::Ready || live.born_at >= t - TIME_EPS {
            continue;
        }
        let phantom_id = sup.fresh_id();
        let live = &mut sup.components[live_idx];
        let mut phantom = live.clone();
        phantom.id = phantom_id;
        phantom.kind = Kind::Phantom;
        live.labels = labels;
        live.processes = processes;
        live.modulus = 0.0;
        live.born_at = t;
        out.push(Superseded {
            phantom: phantom_id,
            modulus: phantom.modulus,
            live: to,
        });
        sup.components.push(phantom);
        sup.edges[i].phantom_count += 1;
    }
    Ok(out)
}

/// Drops phantom components; the total is recomputed over the survivors.
pub fn prune_phantoms(sup: &mut Superposition) -> Vec<(ComponentId, f64)> {
    let mut pruned = Vec::new();
    sup.components.retain(|c| {
        if c.kind == Kind::Phantom {
            pruned.push((c.id, c.modulus));
            false
        } else {
            true
        }
    });
    if pruned.is_empty() {
        return pruned;
    }
    let removed: f64 = pruned.iter().map(|(_, m)| m).sum();
    sup.total_s -= removed;
    sup.pruned_mass += removed;
    sup.edges
        .retain(|e| !pruned.iter().any(|(id, _)| *id == e.to || *id == e.from));
    pruned
}

/// Starts dormant processes of `kind` on every realized component.
pub fn begin_processes(sup: &mut Superposition, kind: ProcessKind) -> Vec<ComponentId> {
    let mut started = Vec::new();
    for c in sup
        .components
        .iter_mut()
        .filter(|c| c.kind == Kind::Realized)
    {
        let mut any = false;
        for p in c.processes.iter_mut() {
            if p.kind == kind && p.status == ProcessStatus::Dormant {
                p.status = ProcessStatus::Running;
                any = true;
            }
        }
        if any {
            started.push(c.id);
        }
    }
    started
}

/// Attaches a running copy of `process` to every realized component.
pub fn attach_process(sup: &mut Superposition, process: &Process) -> Vec<ComponentId> {
    let mut out = Vec::new();
    for c in sup
        .components
        .iter_mut()
        .filter(|c| c.kind == Kind::Realized)
    {
        let mut p = process.clone();
        p.status = ProcessStatus::Running;
        c.processes.push(p);
        out.push(c.id);
    }
    out
}
