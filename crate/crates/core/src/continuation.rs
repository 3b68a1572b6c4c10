//! Continuation in the amplitude of the boundary data.
//!
//! The family u_t solves the stationary problem with Dirichlet data t·g.
//! Increasing t drives max Q upwards; the sweep stops at the first t whose
//! flow cannot stay subsonic, and the critical amplitude is bracketed by
//! bisection between the last converged and the first failed value.

use std::fmt::Write as _;

use serde::Serialize;

use crate::density::DensityModel;
use crate::error::{HodgeError, Result};
use crate::flow::{Flow, FlowTrace, StopCriteria, StopReason};
use crate::output::fmt17;
use crate::presets::{initial_field, scale_map, InitSpec};
use crate::state::{argmax, compute_q, supersonic_error, MapField, Target};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuationRecord {
    pub t: f64,
    pub max_q: f64,
    pub energy: f64,
    pub converged: bool,
    pub residual: f64,
}

/// Why the sweep stopped at `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFailure {
    pub t: f64,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ContinuationCurve {
    /// Increasing in t. Only the last record may be unconverged.
    pub records: Vec<ContinuationRecord>,
    pub failure: Option<SweepFailure>,
    /// Accepted flow steps over all solves, and how many raised the energy
    /// beyond the acceptance slack.
    pub accepted_steps: usize,
    pub dissipation_violations: usize,
    last_solution: Option<MapField>,
}

impl ContinuationCurve {
    pub fn converged(&self) -> impl Iterator<Item = &ContinuationRecord> {
        self.records.iter().filter(|r| r.converged)
    }

    pub fn last_converged(&self) -> Option<&ContinuationRecord> {
        self.converged().last()
    }

    /// Converged solution at the largest converged t.
    pub fn last_solution(&self) -> Option<&MapField> {
        self.last_solution.as_ref()
    }

    /// Values of t at which max Q dropped below its value at the previous
    /// converged t.
    pub fn monotonicity_warnings(&self) -> Vec<f64> {
        let conv: Vec<_> = self.converged().collect();
        conv.windows(2)
            .filter(|w| w[1].max_q < w[0].max_q)
            .map(|w| w[1].t)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,max_q,energy,converged,residual\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt17(r.t),
                fmt17(r.max_q),
                fmt17(r.energy),
                r.converged,
                fmt17(r.residual)
            );
        }
        s
    }

    fn absorb(&mut self, trace: &FlowTrace) {
        self.accepted_steps += trace.accepted_steps();
        self.dissipation_violations += trace.dissipation_violations();
    }
}

/// Bracket on the critical amplitude. `upper` is `None` when no failure
/// was observed (t_crit lies beyond the sweep).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TCritEstimate {
    pub lower: f64,
    pub upper: Option<f64>,
    pub max_q_at_last: f64,
    pub bisections: usize,
}

impl TCritEstimate {
    pub fn width(&self) -> Option<f64> {
        self.upper.map(|u| u - self.lower)
    }
}

/// Continuation of boundary data `data` (flat target) for one density.
#[derive(Debug, Clone)]
pub struct Continuation {
    pub data: MapField,
    pub model: DensityModel,
    pub stop: StopCriteria,
}

enum Solve {
    Converged(MapField, ContinuationRecord),
    Failed(ContinuationRecord, SweepFailure),
}

impl Continuation {
    pub fn new(data: MapField, model: DensityModel, stop: StopCriteria) -> Result<Self> {
        if data.target() != Target::Flat {
            return Err(HodgeError::InvalidArgument(
                "continuation needs a flat target".into(),
            ));
        }
        model.validate()?;
        Ok(Self { data, model, stop })
    }

    /// Harmonic (rho ≡ 1) extension of the data at amplitude t = 1.
    fn harmonic_extension(&self) -> Result<MapField> {
        initial_field(&self.data, &InitSpec::BoundaryHarmonicExtension, &self.stop)
    }

    /// Data t·g on the boundary, interior from `guess`.
    fn start_at(&self, t: f64, guess: &MapField) -> Result<MapField> {
        let values = guess.values().to_vec();
        initial_field(&scale_map(&self.data, t)?, &InitSpec::File { values }, &self.stop)
    }

    fn solve(&self, t: f64, u0: MapField, curve: &mut ContinuationCurve) -> Result<Solve> {
        let flow = Flow::new(self.model, self.stop.safety);
        let mut trace = FlowTrace::default();
        let result = flow.run_traced(u0, &self.stop, &mut trace);
        curve.absorb(&trace);
        match result {
            Ok((state, reason)) => {
                let rec = ContinuationRecord {
                    t,
                    max_q: state.max_q,
                    energy: state.energy,
                    converged: reason == StopReason::Converged,
                    residual: state.residual,
                };
                if rec.converged {
                    Ok(Solve::Converged(state.u, rec))
                } else {
                    let message = format!("flow stopped unconverged ({reason:?}) with residual {}", state.residual);
                    Ok(Solve::Failed(
                        rec,
                        SweepFailure { t, kind: "unconverged".into(), message },
                    ))
                }
            }
            Err(e @ (HodgeError::SupersonicState { .. } | HodgeError::StalledFlow { .. })) => {
                let max_q = match &e {
                    HodgeError::SupersonicState { max_q, .. } => *max_q,
                    _ => f64::NAN,
                };
                let rec = ContinuationRecord {
                    t,
                    max_q,
                    energy: f64::NAN,
                    converged: false,
                    residual: f64::NAN,
                };
                let failure = SweepFailure {
                    t,
                    kind: e.kind().into(),
                    message: e.to_string(),
                };
                Ok(Solve::Failed(rec, failure))
            }
            Err(e) => Err(e),
        }
    }

    /// Sweeps `t_values` (strictly increasing, positive), warm starting each
    /// solve from the previous solution scaled by t / t_prev.
    pub fn sweep(&self, t_values: &[f64]) -> Result<ContinuationCurve> {
        if t_values.is_empty() {
            return Err(HodgeError::InvalidArgument("empty list of t values".into()));
        }
        if t_values.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(HodgeError::InvalidArgument("t values must be finite and positive".into()));
        }
        if t_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HodgeError::InvalidArgument("t values must be strictly increasing".into()));
        }

        let harmonic = self.harmonic_extension()?;
        let t0 = t_values[0];
        let guess0 = scale_map(&harmonic, t0)?;
        if let Some(qc) = self.model.q_crit() {
            let q = compute_q(&guess0);
            let limit = qc - self.stop.subsonic_margin;
            if argmax(&q).1 >= limit {
                return Err(supersonic_error(
                    guess0.grid(),
                    &q,
                    format!("harmonic extension at t = {t0} is not below q_crit - margin = {limit}"),
                ));
            }
        }

        let mut curve = ContinuationCurve {
            records: Vec::with_capacity(t_values.len()),
            failure: None,
            accepted_steps: 0,
            dissipation_violations: 0,
            last_solution: None,
        };
        let mut prev: Option<(f64, MapField)> = None;
        for &t in t_values {
            let guess = match &prev {
                None => guess0.clone(),
                Some((tp, u)) => scale_map(u, t / tp)?,
            };
            let u0 = self.start_at(t, &guess)?;
            match self.solve(t, u0, &mut curve)? {
                Solve::Converged(u, rec) => {
                    curve.records.push(rec);
                    prev = Some((t, u));
                }
                Solve::Failed(rec, failure) => {
                    if prev.is_none() && failure.kind != "unconverged" {
                        return Err(HodgeError::SupersonicState {
                            max_q: rec.max_q,
                            node: 0,
                            position: Vec::new(),
                            detail: format!("first continuation value already fails: {}", failure.message),
                        });
                    }
                    curve.records.push(rec);
                    curve.failure = Some(failure);
                    break;
                }
            }
        }
        curve.last_solution = prev.map(|(_, u)| u);
        Ok(curve)
    }

    /// Refines [last converged t, first failed t] by bisection until its
    /// width is at most `tol`. Converged midpoints are inserted into the
    /// curve; the failure record moves down to the smallest failed t.
    pub fn estimate_t_crit(&self, curve: &mut ContinuationCurve, tol: f64) -> Result<TCritEstimate> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(HodgeError::InvalidArgument(format!("bracket tolerance {tol} must be positive")));
        }
        let n_conv = curve.converged().count();
        if n_conv < 2 {
            return Err(HodgeError::InvalidArgument(format!(
                "t_crit estimate needs at least 2 converged records, curve has {n_conv}"
            )));
        }
        let last = *curve.last_converged().expect("checked above");
        let Some(failure) = curve.failure.clone() else {
            return Ok(TCritEstimate {
                lower: last.t,
                upper: None,
                max_q_at_last: last.max_q,
                bisections: 0,
            });
        };
        let mut lo = last;
        let mut hi = failure.t;
        let mut u_lo = curve.last_solution.clone().expect("converged curve keeps its solution");
        let mut failed = curve.records.pop().expect("failure record present");
        let mut failure = failure;
        let mut bisections = 0;
        while hi - lo.t > tol {
            let mid = 0.5 * (lo.t + hi);
            let u0 = self.start_at(mid, &scale_map(&u_lo, mid / lo.t)?)?;
            bisections += 1;
            match self.solve(mid, u0, curve)? {
                Solve::Converged(u, rec) => {
                    curve.records.push(rec);
                    lo = rec;
                    u_lo = u;
                }
                Solve::Failed(rec, f) => {
                    hi = mid;
                    failed = rec;
                    failure = f;
                }
            }
        }
        curve.records.push(failed);
        curve.failure = Some(failure);
        curve.last_solution = Some(u_lo);
        Ok(TCritEstimate {
            lower: lo.t,
            upper: Some(hi),
            max_q_at_last: lo.max_q,
            bisections,
        })
    }
}

pub fn continue_boundary(
    data: &MapField,
    t_values: &[f64],
    model: &DensityModel,
    stop: &StopCriteria,
) -> Result<ContinuationCurve> {
    Continuation::new(data.clone(), *model, *stop)?.sweep(t_values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::presets::{channel_speed, MapPreset};
    use std::sync::Arc;

    fn channel(flux: f64, model: &DensityModel) -> MapField {
        let g = Arc::new(Grid::from_box(&[0.0], &[1.0], &[21]).unwrap());
        MapPreset::ChannelFlux { flux }.sample(g, model).unwrap()
    }

    fn stop() -> StopCriteria {
        StopCriteria { residual_tol: 1e-10, ..Default::default() }
    }

    #[test]
    fn linear_problem_scales_quadratically() {
        let g = Arc::new(Grid::from_box(&[0.0, 0.0], &[1.0, 1.0], &[9, 9]).unwrap());
        let data = MapPreset::HarmonicQuadratic.sample(g, &DensityModel::Constant).unwrap();
        let c = Continuation::new(data, DensityModel::Constant, stop()).unwrap();
        let mut curve = c.sweep(&[0.5, 1.0, 2.0]).unwrap();
        let q1 = curve.records[1].max_q;
        for r in &curve.records {
            assert!(r.converged);
            assert!((r.max_q - r.t * r.t * q1).abs() <= 1e-9 * q1);
        }
        let est = c.estimate_t_crit(&mut curve, 1e-3).unwrap();
        assert_eq!(est.upper, None);
        assert_eq!(est.lower, 2.0);
    }

    #[test]
    fn zero_data_stays_at_rest() {
        let data = channel(0.0, &DensityModel::Constant);
        let model = DensityModel::polytropic(3.0).unwrap();
        let c = Continuation::new(data, model, stop()).unwrap();
        let mut curve = c.sweep(&[1.0, 10.0, 100.0]).unwrap();
        assert!(curve.records.iter().all(|r| r.converged && r.max_q == 0.0));
        assert!(c.estimate_t_crit(&mut curve, 1e-3).unwrap().upper.is_none());
    }

    #[test]
    fn channel_sweep_approaches_sonic_limit() {
        let model = DensityModel::polytropic(3.0).unwrap();
        let data = channel(0.45, &model);
        let c = Continuation::new(data, model, stop()).unwrap();
        let ts: Vec<f64> = (0..8).map(|j| 0.8 + 0.1 * j as f64).collect();
        let mut curve = c.sweep(&ts).unwrap();
        assert!(curve.failure.is_some());
        assert!(curve.monotonicity_warnings().is_empty());
        let est = c.estimate_t_crit(&mut curve, 1e-3).unwrap();
        assert!(est.width().unwrap() <= 1e-3);
        assert!((est.max_q_at_last - 0.5).abs() < 1e-2, "{}", est.max_q_at_last);
        assert!(curve.records.windows(2).all(|w| w[0].t < w[1].t));
        assert!(!curve.records.last().unwrap().converged);
        let s = channel_speed(&model, 0.45).unwrap();
        for r in curve.converged() {
            assert!((r.max_q - (r.t * s).powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn supersonic_first_value_is_an_error() {
        let model = DensityModel::polytropic(3.0).unwrap();
        let c = Continuation::new(channel(0.45, &model), model, stop()).unwrap();
        assert!(matches!(c.sweep(&[2.0, 3.0]), Err(HodgeError::SupersonicState { .. })));
        assert!(c.sweep(&[]).is_err());
        assert!(c.sweep(&[1.0, 0.5]).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let model = DensityModel::Constant;
        let c = Continuation::new(channel(0.2, &model), model, stop()).unwrap();
        let curve = c.sweep(&[1.0, 2.0]).unwrap();
        let csv = curve.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "t,max_q,energy,converged,residual");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(&format!(",true,{}", fmt17(curve.records[0].residual))));
    }
}
