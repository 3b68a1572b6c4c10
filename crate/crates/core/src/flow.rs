//! Heat (gradient) flow u_t = τ(u) of nonlinear Hodge maps.
//!
//! Forward Euler on interior nodes with Dirichlet boundary values held
//! fixed. A trial step is accepted only if the energy does not increase
//! beyond round-off, which enforces the monotone energy decay of the
//! continuous flow step by step; otherwise dt is halved and retried.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{HodgeError, Result};
use crate::grid::Grid;
use crate::output::fmt17;
use crate::state::{
    argmax, check_admissible_field, compute_q, energy_from_q, jacobian_and_q, project_sphere, supersonic_error, MapField,
    Target,
};
use crate::tension::{tension_from_parts, TensionField};

/// Consecutive halvings of dt tolerated inside one step.
pub const MAX_HALVINGS: usize = 40;
/// Relative slack on energy increase for an accepted step.
pub const ENERGY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    pub residual_tol: f64,
    pub max_steps: usize,
    pub t_max: f64,
    /// Fraction of the explicit stability bound used for dt, in (0, 1].
    pub safety: f64,
    /// Initial data must satisfy max Q < q_crit - subsonic_margin.
    pub subsonic_margin: f64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            residual_tol: 1e-8,
            max_steps: 1_000_000,
            t_max: f64::INFINITY,
            safety: 0.9,
            subsonic_margin: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxSteps,
    TimeLimit,
}

/// Evolving state of the flow. `dt` is the step that produced this state
/// (the planned first step for the initial state). `q` and `tension` are
/// cached for the stored map so a step needs one new gradient evaluation.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub u: MapField,
    pub t: f64,
    pub step: usize,
    pub dt: f64,
    pub energy: f64,
    pub max_q: f64,
    pub residual: f64,
    q: Vec<f64>,
    tension: TensionField,
    next_dt: f64,
}

impl FlowState {
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn tension(&self) -> &TensionField {
        &self.tension
    }

    /// Stability-limited dt the next step will try first.
    pub fn next_dt(&self) -> f64 {
        self.next_dt
    }

    fn build(u: MapField, jac: &[f64], q: Vec<f64>, energy: f64, t: f64, step: usize, flow: &Flow) -> Result<Self> {
        let mut rho = Vec::with_capacity(q.len());
        let mut diffusivity: f64 = 0.0;
        for &qk in &q {
            let r = flow.model.rho(qk)?;
            let ell = r + 2.0 * qk * flow.model.drho(qk)?;
            diffusivity = diffusivity.max(r).max(ell).max(0.5 * r);
            rho.push(r);
        }
        let tension = tension_from_parts(&u, jac, &rho)?;
        let dt = dt_from_diffusivity(u.grid(), diffusivity, flow.safety)?;
        Ok(Self {
            t,
            step,
            dt,
            next_dt: dt,
            energy,
            max_q: argmax(&q).1,
            residual: tension.max_norm(),
            q,
            tension,
            u,
        })
    }

    fn record(&self) -> TraceRecord {
        TraceRecord {
            step: self.step,
            t: self.t,
            energy: self.energy,
            max_q: self.max_q,
            residual: self.residual,
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub max_q: f64,
    pub residual: f64,
    /// dt of the step that produced this record; for the initial record,
    /// the planned first step.
    pub dt: f64,
}

/// Append-only log of the flow; the first record is the initial state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowTrace {
    pub records: Vec<TraceRecord>,
}

impl FlowTrace {
    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of accepted steps (records after the initial one).
    pub fn accepted_steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// Accepted steps whose energy rose by more than the round-off slack.
    pub fn dissipation_violations(&self) -> usize {
        self.records
            .windows(2)
            .filter(|w| w[1].energy - w[0].energy > ENERGY_SLACK * w[0].energy.abs().max(1.0))
            .count()
    }

    /// CSV with header `step,t,energy,max_q,residual,dt`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,t,energy,max_q,residual,dt\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.step,
                fmt17(r.t),
                fmt17(r.energy),
                fmt17(r.max_q),
                fmt17(r.residual),
                fmt17(r.dt)
            );
        }
        s
    }
}

/// dt = safety h^2 / (2 n D), D = max over nodes of
/// max(rho, rho + 2 Q rho', rho / 2).
pub fn stable_dt(u: &MapField, model: &DensityModel, safety: f64) -> Result<f64> {
    stable_dt_from_q(u.grid(), &compute_q(u), model, safety)
}

fn stable_dt_from_q(grid: &Grid, q: &[f64], model: &DensityModel, safety: f64) -> Result<f64> {
    check_admissible_field(grid, q, model)?;
    let mut diffusivity: f64 = 0.0;
    for &qk in q {
        let rho = model.rho(qk)?;
        let ell = rho + 2.0 * qk * model.drho(qk)?;
        diffusivity = diffusivity.max(rho).max(ell).max(0.5 * rho);
    }
    dt_from_diffusivity(grid, diffusivity, safety)
}

fn dt_from_diffusivity(grid: &Grid, diffusivity: f64, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(HodgeError::InvalidArgument(format!("safety {safety} not in (0, 1]")));
    }
    if !(diffusivity > 0.0) {
        return Err(HodgeError::EllipticityLoss(diffusivity));
    }
    let h = grid.spacing();
    Ok(safety * h * h / (2.0 * grid.dim() as f64 * diffusivity))
}

/// Flow driver for one density model.
#[derive(Debug, Clone)]
pub struct Flow {
    pub model: DensityModel,
    pub safety: f64,
    q_crit: Option<f64>,
}

impl Flow {
    pub fn new(model: DensityModel, safety: f64) -> Self {
        Self {
            q_crit: model.q_crit(),
            model,
            safety,
        }
    }

    pub fn q_crit(&self) -> Option<f64> {
        self.q_crit
    }

    /// Initial flow state (t = 0, step 0).
    pub fn start(&self, u: MapField) -> Result<FlowState> {
        let (jac, q) = jacobian_and_q(&u);
        let e = energy_from_q(u.grid(), &q, &self.model)?;
        FlowState::build(u, &jac, q, e, 0.0, 0, self)
    }

    /// One accepted forward Euler step, halving dt until the energy does
    /// not increase.
    pub fn step(&self, state: &FlowState) -> Result<FlowState> {
        let u = &state.u;
        let grid = u.grid();
        let m = u.components();
        let tau = state.tension.values();
        let slack = ENERGY_SLACK * state.energy.abs().max(1.0);
        let mut dt = state.next_dt;
        let mut last_supersonic = None;

        for _ in 0..=MAX_HALVINGS {
            let mut trial = u.values().to_vec();
            for (k, chunk) in trial.chunks_mut(m).enumerate() {
                if grid.is_boundary(k) {
                    continue;
                }
                for (i, v) in chunk.iter_mut().enumerate() {
                    *v += dt * tau[k * m + i];
                }
            }
            if u.target() == Target::Sphere {
                trial = project_sphere(&trial, m)?;
            }
            let trial = u.with_values(trial)?;
            let (jac, q) = jacobian_and_q(&trial);
            let max_q = argmax(&q).1;
            let sonic = self.q_crit.is_some_and(|qc| max_q >= qc);
            if sonic || self.model.check_admissible(max_q).is_err() {
                last_supersonic = Some(supersonic_error(
                    grid,
                    &q,
                    format!("flow step at t = {} left the subsonic range", state.t),
                ));
                dt *= 0.5;
                continue;
            }
            last_supersonic = None;
            let e = energy_from_q(grid, &q, &self.model)?;
            if e <= state.energy + slack {
                let mut next = FlowState::build(trial, &jac, q, e, state.t + dt, state.step + 1, self)?;
                next.dt = dt;
                return Ok(next);
            }
            dt *= 0.5;
        }
        Err(last_supersonic.unwrap_or(HodgeError::StalledFlow {
            step: state.step,
            halvings: MAX_HALVINGS,
        }))
    }
}

impl Flow {
    /// Flows `u0` until the first stop criterion holds, appending every
    /// accepted state to `trace` (which survives an error).
    pub fn run_traced(&self, u0: MapField, stop: &StopCriteria, trace: &mut FlowTrace) -> Result<(FlowState, StopReason)> {
        let q0 = compute_q(&u0);
        check_admissible_field(u0.grid(), &q0, &self.model)?;
        if let Some(qc) = self.q_crit {
            let limit = qc - stop.subsonic_margin;
            if argmax(&q0).1 >= limit {
                return Err(supersonic_error(
                    u0.grid(),
                    &q0,
                    format!("initial data not subsonic: need max Q < q_crit - margin = {limit}"),
                ));
            }
        }
        let mut state = self.start(u0)?;
        trace.push(state.record());
        loop {
            if state.residual <= stop.residual_tol {
                return Ok((state, StopReason::Converged));
            }
            if state.step >= stop.max_steps {
                return Ok((state, StopReason::MaxSteps));
            }
            if state.t >= stop.t_max {
                return Ok((state, StopReason::TimeLimit));
            }
            state = self.step(&state)?;
            trace.push(state.record());
        }
    }

    pub fn run(&self, u0: MapField, stop: &StopCriteria) -> Result<FlowOutcome> {
        let mut trace = FlowTrace::default();
        let (state, reason) = self.run_traced(u0, stop, &mut trace)?;
        Ok(FlowOutcome { state, trace, reason })
    }
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub state: FlowState,
    pub trace: FlowTrace,
    pub reason: StopReason,
}

impl FlowOutcome {
    pub fn converged(&self) -> bool {
        self.reason == StopReason::Converged
    }
}

/// One step of the flow with the default safety factor.
pub fn step(state: &FlowState, model: &DensityModel) -> Result<FlowState> {
    Flow::new(*model, StopCriteria::default().safety).step(state)
}

pub fn run(u0: MapField, model: &DensityModel, stop: &StopCriteria) -> Result<FlowOutcome> {
    Flow::new(*model, stop.safety).run(u0, stop)
}

/// Log-log fit of max Q against t over a time window of the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupQMonitor {
    pub applicable: bool,
    pub slope: Option<f64>,
    /// -n / (2 (q + 1)) for power-law densities.
    pub reference_exponent: Option<f64>,
    pub points: usize,
    pub note: String,
}

/// Fits the decay exponent of sup Q over `t_window`. Needs at least 10
/// accepted steps in the window with max Q non-increasing and not constant.
pub fn supq_monitor(trace: &FlowTrace, t_window: (f64, f64), model: &DensityModel, dim: usize) -> SupQMonitor {
    let reference_exponent = match *model {
        DensityModel::PowerLaw { q_exp, .. } => Some(-(dim as f64) / (2.0 * (q_exp + 1.0))),
        _ => None,
    };
    let window: Vec<&TraceRecord> = trace
        .records
        .iter()
        .skip(1)
        .filter(|r| r.t > 0.0 && r.t >= t_window.0 && r.t <= t_window.1)
        .collect();
    let inapplicable = |note: &str, points| SupQMonitor {
        applicable: false,
        slope: None,
        reference_exponent,
        points,
        note: note.to_string(),
    };
    if window.len() < 10 {
        return inapplicable("fewer than 10 accepted steps in window", window.len());
    }
    if window.windows(2).any(|w| w[1].max_q > w[0].max_q) {
        return inapplicable("max_q not monotone over window", window.len());
    }
    let first = window[0].max_q;
    let last = window[window.len() - 1].max_q;
    if !(last < first) || last <= 0.0 {
        return inapplicable("max_q constant over window", window.len());
    }
    let xs: Vec<f64> = window.iter().map(|r| r.t.ln()).collect();
    let ys: Vec<f64> = window.iter().map(|r| r.max_q.ln()).collect();
    SupQMonitor {
        applicable: true,
        slope: Some(least_squares_slope(&xs, &ys)),
        reference_exponent,
        points: window.len(),
        note: String::new(),
    }
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::from_box(&[0.0], &[1.0], &[n]).unwrap())
    }

    #[test]
    fn stable_dt_examples() {
        let g = Arc::new(Grid::from_box(&[0.0, 0.0], &[1.0, 1.0], &[11, 11]).unwrap());
        let zero = MapField::from_fn(g.clone(), 1, Target::Flat, |_| vec![0.0]).unwrap();
        let dt = stable_dt(&zero, &DensityModel::Constant, 1.0).unwrap();
        assert!((dt - 0.0025).abs() < 1e-15);
        let poly = DensityModel::Polytropic { gamma_a: 3.0 };
        assert_eq!(stable_dt(&zero, &poly, 1.0).unwrap(), dt);

        // Q ≡ 0.49 everywhere: D = rho(0.49) = sqrt(0.51)
        let ramp = MapField::from_fn(g, 1, Target::Flat, |p| vec![0.7 * p[0]]).unwrap();
        let dt_fast = stable_dt(&ramp, &poly, 1.0).unwrap();
        assert!((dt_fast - 0.0025 / 0.51f64.sqrt()).abs() < 1e-12);
        assert!(stable_dt(&ramp, &poly, 1.5).is_err());
    }

    #[test]
    fn stationary_input_stops_at_step_zero() {
        let g = line(17);
        let u = MapField::from_fn(g, 1, Target::Flat, |p| vec![0.3 * p[0]]).unwrap();
        let out = run(u.clone(), &DensityModel::MinimalSurface, &StopCriteria::default()).unwrap();
        assert_eq!(out.reason, StopReason::Converged);
        assert_eq!(out.state.step, 0);
        assert_eq!(out.trace.len(), 1);

        let flow = Flow::new(DensityModel::MinimalSurface, 0.9);
        let s0 = flow.start(u.clone()).unwrap();
        let s1 = flow.step(&s0).unwrap();
        assert!(s1.u.max_abs_diff(u.values()) < 1e-15);
    }

    #[test]
    fn dirichlet_energy_decays_to_zero_map() {
        let g = Arc::new(Grid::from_box(&[0.0, 0.0], &[1.0, 1.0], &[13, 13]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..g.n_nodes())
            .map(|k| if g.is_boundary(k) { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let u = MapField::new(g, 1, vals, Target::Flat).unwrap();
        let stop = StopCriteria { residual_tol: 1e-9, ..Default::default() };
        let out = run(u, &DensityModel::Constant, &stop).unwrap();
        assert!(out.converged());
        assert_eq!(out.trace.dissipation_violations(), 0);
        let e = &out.trace.records;
        assert!(e.windows(2).all(|w| w[1].energy < w[0].energy));
        assert!(out.state.u.values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn sphere_flow_stays_on_sphere() {
        let g = Arc::new(Grid::from_box(&[0.0, 0.0], &[1.0, 1.0], &[9, 9]).unwrap());
        let u = MapField::from_fn(g, 3, Target::Sphere, |p| {
            vec![(3.0 * p[0]).cos(), (3.0 * p[0]).sin() * p[1], 0.5 + p[1] * p[0]]
        })
        .unwrap();
        let stop = StopCriteria { max_steps: 200, ..Default::default() };
        let mut trace = FlowTrace::default();
        let flow = Flow::new(DensityModel::Constant, 0.9);
        let (state, _) = flow.run_traced(u, &stop, &mut trace).unwrap();
        assert!(state.u.sphere_defect() <= 1e-12);
        assert_eq!(trace.dissipation_violations(), 0);
    }

    #[test]
    fn supersonic_initial_data_is_rejected() {
        let g = line(17);
        let u = MapField::from_fn(g, 1, Target::Flat, |p| vec![0.75 * p[0]]).unwrap();
        let err = run(u, &DensityModel::Polytropic { gamma_a: 3.0 }, &StopCriteria::default()).unwrap_err();
        assert!(matches!(err, HodgeError::SupersonicState { .. }));
    }

    #[test]
    fn supq_monitor_cases() {
        let flat = FlowTrace {
            records: (0..20)
                .map(|j| TraceRecord { step: j, t: j as f64 * 0.1, energy: 1.0, max_q: 0.3, residual: 0.0, dt: 0.1 })
                .collect(),
        };
        let m = supq_monitor(&flat, (0.0, 10.0), &DensityModel::Constant, 1);
        assert!(!m.applicable);

        let decay = FlowTrace {
            records: (0..40)
                .map(|j| {
                    let t = 0.05 * j as f64;
                    TraceRecord { step: j, t, energy: 1.0, max_q: if j == 0 { 9.0 } else { t.powf(-0.25) }, residual: 0.0, dt: 0.05 }
                })
                .collect(),
        };
        let pl = DensityModel::PowerLaw { k: 0.1, q_exp: 1.0 };
        let m = supq_monitor(&decay, (0.0, 10.0), &pl, 1);
        assert!(m.applicable);
        assert!((m.slope.unwrap() + 0.25).abs() < 1e-12);
        assert_eq!(m.reference_exponent, Some(-0.25));
    }
}
