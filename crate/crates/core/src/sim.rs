//! Step-loop simulation of the platoon and metric extraction.
//!
//! Followers are propagated in the leader-relative frame `δᵢ = xᵢ − x₀ − ∇ᵢ,₀`
//! and absolute states are rebuilt from the leader for the trace.

use std::io::{self, Write};

use crate::attack::{affected_intervals, AffectedIntervals, AttackSchedule};
use crate::error::{PlatoonError, Result};
use crate::gain::Gain;
use crate::graph::Topology;
use crate::linalg::Matrix;
use crate::plant::{PlantModel, VehicleState};
use crate::trigger::{
    combined_measurement, compute_s_constants, dynamic_should_trigger, measurement_error, static_should_trigger,
    update_mu, BroadcastTable, StaticTriggerParams, TriggerScheme,
};

/// Any state component beyond this magnitude marks the run as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e9;
pub const DEFAULT_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySwitch {
    pub topology: Topology,
    pub step: usize,
}

/// Fully resolved simulation input.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: PlantModel<f64>,
    pub topology: Topology,
    pub switch: Option<TopologySwitch>,
    pub leader: VehicleState<f64>,
    pub followers: Vec<VehicleState<f64>>,
    pub gain: Gain<f64>,
    /// Riccati solution used for `V` and the s-constants.
    pub p: Matrix<f64>,
    /// Full Riccati residual; `W₁` is `w1_fraction·W`.
    pub w: Matrix<f64>,
    pub static_params: StaticTriggerParams<f64>,
    /// Keep `β` fixed across a switch instead of re-centring it.
    pub explicit_beta: bool,
    pub scheme: TriggerScheme<f64>,
    pub attack: AttackSchedule,
    pub horizon: usize,
    pub threshold: f64,
    pub tail_steps: usize,
}

impl Scenario {
    pub fn n_followers(&self) -> usize {
        self.followers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_followers();
        if self.topology.n_followers() != n || self.plant.spacing().len() != n {
            return Err(PlatoonError::Dimension(format!(
                "{n} followers but topology has {} and spacing has {}",
                self.topology.n_followers(),
                self.plant.spacing().len()
            )));
        }
        if self.horizon == 0 {
            return Err(PlatoonError::InvalidParameter("horizon must be at least one step".into()));
        }
        if !self.topology.is_leader_connected() {
            return Err(PlatoonError::InvalidTopology("initial topology is not leader-connected".into()));
        }
        if let Some(sw) = &self.switch {
            if sw.step >= self.horizon {
                return Err(PlatoonError::InvalidParameter(format!(
                    "switch step {} is outside the horizon {}",
                    sw.step, self.horizon
                )));
            }
            if sw.topology.n_followers() != n {
                return Err(PlatoonError::Dimension("switch topology has a different follower count".into()));
            }
        }
        if !(self.threshold > 0.0) {
            return Err(PlatoonError::InvalidParameter(format!("threshold must be positive, got {}", self.threshold)));
        }
        if !self.leader.is_finite() || self.followers.iter().any(|x| !x.is_finite()) || !self.gain.is_finite() {
            return Err(PlatoonError::NonFinite("initial states or gain"));
        }
        Ok(())
    }

    /// Trigger parameters after the switch, rebuilt on the new `H`.
    pub fn switched_params(&self) -> Result<Option<StaticTriggerParams<f64>>> {
        let Some(sw) = &self.switch else { return Ok(None) };
        let w1 = self.w.scale(self.static_params.w1_fraction);
        let s =
            compute_s_constants(&sw.topology.h_matrix(), &self.p, &self.plant.a(), &self.plant.b(), self.gain, &w1)?;
        self.static_params.rederive(s, self.explicit_beta).map(Some)
    }

    fn offset(&self, i: usize) -> f64 {
        self.plant.spacing()[i]
    }

    fn relative(&self, i: usize, x: VehicleState<f64>, leader: VehicleState<f64>) -> VehicleState<f64> {
        VehicleState::new(x.position - leader.position - self.offset(i), x.velocity - leader.velocity)
    }

    fn absolute(&self, i: usize, d: VehicleState<f64>, leader: VehicleState<f64>) -> VehicleState<f64> {
        VehicleState::new(leader.position + self.offset(i) + d.position, leader.velocity + d.velocity)
    }
}

/// One recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub leader: VehicleState<f64>,
    pub followers: Vec<VehicleState<f64>>,
    pub delta: Vec<VehicleState<f64>>,
    pub triggered: Vec<bool>,
    pub attacked: Vec<bool>,
    pub u: Vec<f64>,
    /// Internal variables at the start of the step; empty for the static scheme.
    pub mu: Vec<f64>,
    pub lyapunov: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub sample_time: f64,
    pub n_followers: usize,
    /// Step whose state exceeded the divergence guard.
    pub diverged_at: Option<usize>,
}

impl Trace {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sorted trigger steps per vehicle.
    pub fn trigger_steps(&self) -> Vec<Vec<usize>> {
        (0..self.n_followers).map(|i| self.rows.iter().filter(|r| r.triggered[i]).map(|r| r.step).collect()).collect()
    }
}

fn quad(p: &Matrix<f64>, d: VehicleState<f64>) -> f64 {
    p.quadratic_form(&d.as_array())
}

/// `V = Σᵢ δᵢᵀ P δᵢ`.
pub fn lyapunov_value(p: &Matrix<f64>, delta: &[VehicleState<f64>]) -> f64 {
    delta.iter().map(|&d| quad(p, d)).sum()
}

pub fn lyapunov_series(tr: &Trace, p: &Matrix<f64>) -> Vec<f64> {
    tr.rows.iter().map(|r| lyapunov_value(p, &r.delta)).collect()
}

fn exceeds_guard(x: VehicleState<f64>) -> bool {
    !(x.position.abs() <= DIVERGENCE_LIMIT && x.velocity.abs() <= DIVERGENCE_LIMIT)
}

/// Runs the scenario for `horizon` steps or until the divergence guard trips.
pub fn run(sc: &Scenario) -> Result<Trace> {
    sc.validate()?;
    let n = sc.n_followers();
    let switched = sc.switched_params()?;
    let origin = VehicleState::zero();

    let mut leader = sc.leader;
    let mut delta: Vec<_> = sc.followers.iter().enumerate().map(|(i, &x)| sc.relative(i, x, leader)).collect();
    let mut table = BroadcastTable::new(&delta);
    let mut topo = &sc.topology;
    let mut sp = sc.static_params;
    let mut held_gain = vec![sc.gain; n];
    let mut held_q = vec![[0.0; 2]; n];
    let mut mu = match sc.scheme {
        TriggerScheme::Dynamic(dp) => vec![dp.mu0; n],
        TriggerScheme::Static => Vec::new(),
    };
    let mut rows = Vec::with_capacity(sc.horizon);
    let mut diverged_at = None;

    for t in 0..sc.horizon {
        let mut force = t == 0;
        if let (Some(sw), Some(p)) = (&sc.switch, switched) {
            if sw.step == t {
                topo = &sw.topology;
                sp = p;
                force = true;
            }
        }

        let errors: Vec<[f64; 2]> = (0..n).map(|i| measurement_error(i, &table, delta[i])).collect();
        let q_pre: Vec<[f64; 2]> = (0..n).map(|i| combined_measurement(i, &table, topo, origin)).collect();
        let triggered: Vec<bool> = (0..n)
            .map(|i| {
                force
                    || match sc.scheme {
                        TriggerScheme::Static => static_should_trigger(errors[i], q_pre[i], &sp),
                        TriggerScheme::Dynamic(dp) => dynamic_should_trigger(errors[i], q_pre[i], mu[i], &sp, &dp),
                    }
            })
            .collect();

        for i in (0..n).filter(|&i| triggered[i]) {
            table.record(i, delta[i], t);
        }
        for i in (0..n).filter(|&i| triggered[i]) {
            held_q[i] = combined_measurement(i, &table, topo, origin);
            held_gain[i] = sc.attack.effective_gain(sc.gain, i, t);
        }
        let u: Vec<f64> = (0..n).map(|i| held_gain[i].apply(held_q[i])).collect();

        rows.push(TraceRow {
            step: t,
            time: t as f64 * sc.plant.sample_time(),
            leader,
            followers: (0..n).map(|i| sc.absolute(i, delta[i], leader)).collect(),
            delta: delta.clone(),
            triggered: triggered.clone(),
            attacked: (0..n).map(|i| sc.attack.is_attacked(i, t)).collect(),
            u: u.clone(),
            mu: mu.clone(),
            lyapunov: lyapunov_value(&sc.p, &delta),
        });

        if let TriggerScheme::Dynamic(dp) = sc.scheme {
            for i in 0..n {
                let e_post = measurement_error(i, &table, delta[i]);
                mu[i] = update_mu(mu[i], e_post, q_pre[i], &sp, &dp);
            }
        }

        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            match sc.plant.step_follower(delta[i], u[i]) {
                Ok(d) => next.push(d),
                Err(_) => break,
            }
        }
        leader = sc.plant.step_leader(leader);
        if next.len() < n
            || next.iter().enumerate().any(|(i, &d)| exceeds_guard(d) || exceeds_guard(sc.absolute(i, d, leader)))
        {
            diverged_at = Some(t + 1);
            break;
        }
        delta = next;
    }

    Ok(Trace { rows, sample_time: sc.plant.sample_time(), n_followers: n, diverged_at })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// First step after which the velocity error stays below the threshold.
    pub consensus_step: Option<usize>,
    pub consensus_time: Option<f64>,
    /// `Qᵢ` over `[0, t_c]`, or over the whole trace when consensus is not reached.
    pub trigger_counts: Vec<usize>,
    pub total_triggers: usize,
    /// Triggers over the full trace.
    pub horizon_triggers: usize,
    /// `ΣQᵢ/(N·t_c)`; zero for `t_c = 0`, `None` without consensus.
    pub triggering_rate: Option<f64>,
    pub affected: AffectedIntervals,
    pub max_velocity_error: f64,
    pub max_spacing_error: f64,
    pub diverged: bool,
}

impl Metrics {
    pub fn delta_star(&self) -> f64 {
        self.affected.delta_star
    }
}

/// First index after which `errors` stays below `threshold`.
fn settle_index(errors: &[f64], threshold: f64) -> Option<usize> {
    let last_bad = errors.iter().rposition(|&e| !(e < threshold));
    match last_bad {
        None => Some(0),
        Some(k) if k + 1 < errors.len() => Some(k + 1),
        Some(_) => None,
    }
}

fn max_abs(rows: &[TraceRow], f: impl Fn(&VehicleState<f64>) -> f64) -> f64 {
    rows.iter().flat_map(|r| r.delta.iter().map(&f)).fold(0.0, f64::max)
}

pub fn metrics(tr: &Trace, sc: &Scenario) -> Metrics {
    let n = tr.n_followers;
    let vel_err: Vec<f64> =
        tr.rows.iter().map(|r| r.delta.iter().map(|d| d.velocity.abs()).fold(0.0, f64::max)).collect();
    let consensus_step = if tr.diverged() { None } else { settle_index(&vel_err, sc.threshold) };
    let consensus_time = consensus_step.map(|k| k as f64 * tr.sample_time);

    let counted = match consensus_step {
        Some(k) => &tr.rows[..(k + 1).min(tr.rows.len())],
        None => &tr.rows[..],
    };
    let trigger_counts: Vec<usize> = (0..n).map(|i| counted.iter().filter(|r| r.triggered[i]).count()).collect();
    let total_triggers = trigger_counts.iter().sum();
    let horizon_triggers = tr.rows.iter().map(|r| r.triggered.iter().filter(|&&f| f).count()).sum();
    let triggering_rate = consensus_time.map(|tc| if tc > 0.0 { total_triggers as f64 / (n as f64 * tc) } else { 0.0 });

    let affected = affected_intervals(&sc.attack, &tr.trigger_steps(), tr.rows.len(), tr.sample_time);
    let tail = &tr.rows[tr.rows.len().saturating_sub(sc.tail_steps)..];
    Metrics {
        consensus_step,
        consensus_time,
        trigger_counts,
        total_triggers,
        horizon_triggers,
        triggering_rate,
        affected,
        max_velocity_error: max_abs(tail, |d| d.velocity.abs()),
        max_spacing_error: max_abs(tail, |d| d.position.abs()),
        diverged: tr.diverged(),
    }
}

/// CSV header for `n` followers.
pub fn csv_header(n: usize) -> String {
    let mut cols = vec!["step".to_string(), "time".into(), "p0".into(), "v0".into()];
    for i in 1..=n {
        for c in ["p", "v", "trig", "att", "u", "mu"] {
            cols.push(format!("{c}{i}"));
        }
    }
    cols.push("V".into());
    cols.join(",")
}

pub fn write_csv<W: Write>(tr: &Trace, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", csv_header(tr.n_followers))?;
    for r in &tr.rows {
        write!(out, "{},{},{},{}", r.step, r.time, r.leader.position, r.leader.velocity)?;
        for i in 0..tr.n_followers {
            let x = r.followers[i];
            let mu = r.mu.get(i).map_or(String::new(), f64::to_string);
            write!(
                out,
                ",{},{},{},{},{},{}",
                x.position,
                x.velocity,
                u8::from(r.triggered[i]),
                u8::from(r.attacked[i]),
                r.u[i],
                mu
            )?;
        }
        writeln!(out, ",{}", r.lyapunov)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::AttackInterval;
    use crate::gain::{GainDesign, DEFAULT_MARI_MAX_ITER, DEFAULT_MARI_TOL};
    use crate::trigger::{DynamicTriggerParams, DEFAULT_PARTIAL, DEFAULT_W1_FRACTION};

    fn scenario(followers: Vec<VehicleState<f64>>, leader: VehicleState<f64>) -> Scenario {
        let topology = Topology::builtin("BD").unwrap();
        let plant = PlantModel::with_uniform_gap(0.2, 20.0, 6).unwrap();
        let d = GainDesign::synthesize(
            &plant,
            &topology,
            0.99,
            &Matrix::identity(2),
            DEFAULT_MARI_TOL,
            DEFAULT_MARI_MAX_ITER,
        )
        .unwrap();
        let w1 = d.w.scale(DEFAULT_W1_FRACTION);
        let s = compute_s_constants(&topology.h_matrix(), &d.p, &plant.a(), &plant.b(), d.gain, &w1).unwrap();
        let static_params = StaticTriggerParams::new(DEFAULT_PARTIAL, None, DEFAULT_W1_FRACTION, s).unwrap();
        Scenario {
            plant,
            topology,
            switch: None,
            leader,
            followers,
            gain: d.gain,
            p: d.p,
            w: d.w,
            static_params,
            explicit_beta: false,
            scheme: TriggerScheme::Static,
            attack: AttackSchedule::none(6),
            horizon: 50,
            threshold: DEFAULT_THRESHOLD,
            tail_steps: 10,
        }
    }

    fn on_formation(leader: VehicleState<f64>) -> Vec<VehicleState<f64>> {
        (1..=6).map(|i| VehicleState::new(leader.position - 20.0 * i as f64, leader.velocity)).collect()
    }

    #[test]
    fn zero_error_stays_zero() {
        let leader = VehicleState::new(100.0, 12.0);
        let sc = scenario(on_formation(leader), leader);
        let tr = run(&sc).unwrap();
        assert_eq!(tr.len(), 50);
        assert!(tr.rows[0].triggered.iter().all(|&f| f));
        assert!(tr.rows[1..].iter().all(|r| r.triggered.iter().all(|&f| !f)));
        assert!(tr.rows.iter().all(|r| r.lyapunov == 0.0 && r.u.iter().all(|&u| u == 0.0)));
        let m = metrics(&tr, &sc);
        assert_eq!(m.consensus_time, Some(0.0));
        assert_eq!(m.triggering_rate, Some(0.0));
    }

    #[test]
    fn control_is_held_between_triggers() {
        let leader = VehicleState::new(100.0, 12.0);
        let mut f = on_formation(leader);
        f[2].velocity += 1.0;
        let mut sc = scenario(f, leader);
        sc.scheme = TriggerScheme::Dynamic(DynamicTriggerParams::new(0.1, 0.6, 90.0, 20.0).unwrap());
        let tr = run(&sc).unwrap();
        for w in tr.rows.windows(2) {
            for i in 0..6 {
                if !w[1].triggered[i] {
                    assert_eq!(w[0].u[i], w[1].u[i]);
                }
            }
        }
        assert!(tr.rows.iter().all(|r| r.mu.iter().all(|&m| m > 0.0)));
    }

    #[test]
    fn switch_forces_broadcast() {
        let leader = VehicleState::new(0.0, 10.0);
        let mut f = on_formation(leader);
        f[0].position += 3.0;
        let mut sc = scenario(f, leader);
        sc.scheme = TriggerScheme::Dynamic(DynamicTriggerParams::new(0.1, 0.6, 90.0, 1e9).unwrap());
        sc.switch = Some(TopologySwitch { topology: Topology::builtin("Switched").unwrap(), step: 20 });
        let tr = run(&sc).unwrap();
        assert!(tr.rows[20].triggered.iter().all(|&f| f));
        assert!(tr.rows[19].triggered.iter().any(|&f| !f));
    }

    #[test]
    fn divergence_is_flagged() {
        let leader = VehicleState::new(0.0, 10.0);
        let mut f = on_formation(leader);
        for (i, x) in f.iter_mut().enumerate() {
            x.velocity += i as f64 - 2.5;
        }
        let mut sc = scenario(f, leader);
        sc.horizon = 2000;
        sc.attack = AttackSchedule::new(vec![AttackInterval { start: 0, duration: 2000 }], 1.0, vec![true; 6]).unwrap();
        let tr = run(&sc).unwrap();
        assert!(tr.diverged());
        assert!(tr.len() < 2000);
        let m = metrics(&tr, &sc);
        assert_eq!(m.consensus_time, None);
        assert_eq!(m.triggering_rate, None);
    }

    #[test]
    fn settle_index_cases() {
        assert_eq!(settle_index(&[0.0, 0.0], 0.1), Some(0));
        assert_eq!(settle_index(&[1.0, 0.0, 0.05], 0.1), Some(1));
        assert_eq!(settle_index(&[1.0, 0.0, 0.5], 0.1), None);
        assert_eq!(settle_index(&[], 0.1), Some(0));
    }

    #[test]
    fn lyapunov_identity_single_vehicle() {
        let d = [VehicleState::new(3.0, 4.0)];
        assert_eq!(lyapunov_value(&Matrix::identity(2), &d), 25.0);
    }

    #[test]
    fn csv_shape() {
        let leader = VehicleState::new(0.0, 10.0);
        let sc = scenario(on_formation(leader), leader);
        let tr = run(&sc).unwrap();
        let mut buf = Vec::new();
        write_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 51);
        let cols = lines[0].split(',').count();
        assert_eq!(cols, 4 + 36 + 1);
        assert!(lines.iter().all(|l| l.split(',').count() == cols));
    }
}
