//! Sequential gain-modification attacks on the velocity gain `k_v`.
//!
//! Attack intervals are half-open step ranges `[h, h+τ)`. Budget constants are
//! in seconds and converted with the sample time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PlatoonError, Result};
use crate::gain::Gain;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackInterval {
    pub start: usize,
    pub duration: usize,
}

impl AttackInterval {
    pub fn end(&self) -> usize {
        self.start + self.duration
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t < self.end()
    }

    /// Converts `[h, h+τ)` in seconds to steps, flooring the start and
    /// ceiling the end.
    pub fn from_seconds(h: f64, tau: f64, sample_time: f64) -> Result<Self> {
        if !(h >= 0.0 && tau > 0.0 && h.is_finite() && tau.is_finite()) {
            return Err(PlatoonError::InvalidParameter(format!(
                "attack h={h}, tau={tau} must be finite with h ≥ 0, tau > 0"
            )));
        }
        let start = snap(h / sample_time, f64::floor);
        let end = snap((h + tau) / sample_time, f64::ceil).max(start + 1);
        Ok(Self { start, duration: end - start })
    }
}

/// Rounds a step count, absorbing float noise such as `40/0.2 = 199.99999…`.
fn snap(x: f64, round: fn(f64) -> f64) -> usize {
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        nearest as usize
    } else {
        round(x) as usize
    }
}

/// Immutable attack plan.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSchedule {
    intervals: Vec<AttackInterval>,
    g_tilde_v: f64,
    targets: Vec<bool>,
}

impl AttackSchedule {
    /// `targets[i]` marks follower `i` (zero-based) as attackable; the leader
    /// is never part of the follower list.
    pub fn new(intervals: Vec<AttackInterval>, g_tilde_v: f64, targets: Vec<bool>) -> Result<Self> {
        if !g_tilde_v.is_finite() {
            return Err(PlatoonError::NonFinite("attack perturbation"));
        }
        for w in intervals.windows(2) {
            if w[0].end() > w[1].start {
                return Err(PlatoonError::InvalidParameter(format!(
                    "attack intervals overlap or are unsorted: [{}, {}) then [{}, {})",
                    w[0].start,
                    w[0].end(),
                    w[1].start,
                    w[1].end()
                )));
            }
        }
        if intervals.iter().any(|iv| iv.duration == 0) {
            return Err(PlatoonError::InvalidParameter("attack duration must be at least one step".into()));
        }
        Ok(Self { intervals, g_tilde_v, targets })
    }

    pub fn none(n_followers: usize) -> Self {
        Self { intervals: Vec::new(), g_tilde_v: 0.0, targets: vec![true; n_followers] }
    }

    pub fn intervals(&self) -> &[AttackInterval] {
        &self.intervals
    }

    pub fn g_tilde_v(&self) -> f64 {
        self.g_tilde_v
    }

    pub fn targets(&self) -> &[bool] {
        &self.targets
    }

    pub fn is_target(&self, i: usize) -> bool {
        self.targets.get(i).copied().unwrap_or(false)
    }

    pub fn active(&self, t: usize) -> bool {
        self.intervals.iter().any(|iv| iv.contains(t))
    }

    /// `ϱᵢ(t)`.
    pub fn is_attacked(&self, i: usize, t: usize) -> bool {
        self.is_target(i) && self.active(t)
    }

    /// Gain sampled by vehicle `i` when it triggers at `t_trigger`.
    pub fn effective_gain(&self, k: Gain<f64>, i: usize, t_trigger: usize) -> Gain<f64> {
        if self.is_attacked(i, t_trigger) {
            Gain::new(k.kp, k.kv + self.g_tilde_v)
        } else {
            k
        }
    }

    /// Same intervals with a different perturbation.
    pub fn with_perturbation(&self, g_tilde_v: f64) -> Self {
        Self { g_tilde_v, ..self.clone() }
    }
}

/// Duration and frequency budget `(ζ₀, τ₀, 𝓕₀, f₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackBudget {
    pub zeta0: f64,
    pub tau0: f64,
    pub big_f0: f64,
    pub f0: f64,
}

impl AttackBudget {
    pub fn new(zeta0: f64, tau0: f64, big_f0: f64, f0: f64) -> Result<Self> {
        if !(zeta0 >= 0.0 && big_f0 >= 0.0) {
            return Err(PlatoonError::InvalidParameter("ζ₀ and 𝓕₀ must be non-negative".into()));
        }
        if !(tau0 > 0.0 && tau0 < 1.0) {
            return Err(PlatoonError::InvalidParameter(format!("τ₀ must lie in (0, 1), got {tau0}")));
        }
        if !(f0 > 0.0) {
            return Err(PlatoonError::InvalidParameter(format!("f₀ must be positive, got {f0}")));
        }
        Ok(Self { zeta0, tau0, big_f0, f0 })
    }
}

/// Window `[t0, t)` in steps with its remaining budget (negative = violated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetWindow {
    pub t0: usize,
    pub t: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetReport {
    pub duration_ok: bool,
    pub frequency_ok: bool,
    pub worst_duration: BudgetWindow,
    pub worst_frequency: BudgetWindow,
}

impl BudgetReport {
    pub fn ok(&self) -> bool {
        self.duration_ok && self.frequency_ok
    }

    /// The tighter of the two worst windows.
    pub fn worst_window(&self) -> BudgetWindow {
        if self.worst_duration.slack <= self.worst_frequency.slack {
            self.worst_duration
        } else {
            self.worst_frequency
        }
    }
}

/// Checks the duration and frequency budget over every window
/// `0 ≤ t0 ≤ t ≤ horizon` at step granularity.
pub fn verify_budget(s: &AttackSchedule, b: &AttackBudget, horizon: usize, sample_time: f64) -> BudgetReport {
    let mut attacked = vec![0usize; horizon + 1];
    let mut launches = vec![0usize; horizon + 1];
    for k in 0..horizon {
        attacked[k + 1] = attacked[k] + usize::from(s.active(k));
        launches[k + 1] = launches[k] + s.intervals.iter().filter(|iv| iv.start == k).count();
    }
    let mut worst_d = BudgetWindow { t0: 0, t: 0, slack: f64::INFINITY };
    let mut worst_f = BudgetWindow { t0: 0, t: 0, slack: f64::INFINITY };
    for t0 in 0..=horizon {
        for t in t0..=horizon {
            let span = (t - t0) as f64 * sample_time;
            let dur = (attacked[t] - attacked[t0]) as f64 * sample_time;
            let slack_d = b.zeta0 + b.tau0 * span - dur;
            if slack_d < worst_d.slack {
                worst_d = BudgetWindow { t0, t, slack: slack_d };
            }
            let count = (launches[t] - launches[t0]) as f64;
            let slack_f = b.big_f0 + b.f0 * span - count;
            if slack_f < worst_f.slack {
                worst_f = BudgetWindow { t0, t, slack: slack_f };
            }
        }
    }
    BudgetReport {
        duration_ok: worst_d.slack >= 0.0,
        frequency_ok: worst_f.slack >= 0.0,
        worst_duration: worst_d,
        worst_frequency: worst_f,
    }
}

/// Span during which attack `attack` corrupts some held control gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffectedInterval {
    pub attack: usize,
    /// First target trigger inside the attack.
    pub h_att: usize,
    /// Step at which the last corrupted gain is replaced by a clean one.
    pub h_safe: usize,
    /// No clean re-broadcast before the horizon; `h_safe` is the horizon.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffectedIntervals {
    pub intervals: Vec<AffectedInterval>,
    /// Largest excess of an affected interval over its attack, in seconds.
    pub delta_star: f64,
}

/// Derives affected intervals from per-vehicle sorted trigger steps.
///
/// An attack with no target trigger inside it never reaches a control law and
/// is skipped. Affected spans are counted inclusively, so immediate
/// re-broadcast yields an excess of one step.
pub fn affected_intervals(
    s: &AttackSchedule,
    trigger_steps: &[Vec<usize>],
    horizon: usize,
    sample_time: f64,
) -> AffectedIntervals {
    let first_at_or_after = |steps: &[usize], t: usize| steps.get(steps.partition_point(|&k| k < t)).copied();
    let mut intervals = Vec::new();
    let mut delta_star = 0.0f64;
    for (j, iv) in s.intervals.iter().enumerate() {
        let mut h_att: Option<usize> = None;
        let mut h_safe = iv.end();
        let mut truncated = false;
        for (i, steps) in trigger_steps.iter().enumerate() {
            if !s.is_target(i) {
                continue;
            }
            let Some(first) = first_at_or_after(steps, iv.start).filter(|&k| k < iv.end()) else {
                continue;
            };
            h_att = Some(h_att.map_or(first, |h| h.min(first)));
            match first_at_or_after(steps, iv.end()).filter(|&k| k < horizon) {
                Some(clean) => h_safe = h_safe.max(clean),
                None => {
                    truncated = true;
                    h_safe = h_safe.max(horizon);
                }
            }
        }
        let Some(h_att) = h_att else { continue };
        let affected = h_safe + 1 - h_att;
        let excess = affected.saturating_sub(iv.duration) as f64 * sample_time;
        delta_star = delta_star.max(excess);
        intervals.push(AffectedInterval { attack: j, h_att, h_safe, truncated });
    }
    AffectedIntervals { intervals, delta_star }
}

const MAX_SCHEDULE_ATTEMPTS: usize = 1000;

/// Seeded, rejection-sampled schedule that satisfies `budget` over `horizon`.
///
/// Launch gaps are drawn around the mean `1/f₀` seconds and durations as a
/// random fraction of `τ₀` times the gap; rejected draws shrink durations.
pub fn random_schedule(
    seed: u64,
    budget: &AttackBudget,
    g_tilde_v: f64,
    targets: Vec<bool>,
    horizon: usize,
    sample_time: f64,
) -> Result<AttackSchedule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon_s = horizon as f64 * sample_time;
    let mean_gap = 1.0 / budget.f0;
    let mut shrink = 1.0;
    for _ in 0..MAX_SCHEDULE_ATTEMPTS {
        let mut intervals: Vec<AttackInterval> = Vec::new();
        let mut t = rng.gen_range(0.0..mean_gap);
        while t < horizon_s {
            let gap = mean_gap * rng.gen_range(0.5..1.5);
            let dur = (shrink * budget.tau0 * gap * rng.gen_range(0.2..1.0)).max(sample_time);
            let iv = AttackInterval::from_seconds(t, dur, sample_time)?;
            if intervals.last().is_some_and(|prev| prev.end() > iv.start) || iv.start >= horizon {
                t += gap;
                continue;
            }
            intervals.push(iv);
            t += gap.max(dur + sample_time);
        }
        let schedule = AttackSchedule::new(intervals, g_tilde_v, targets.clone())?;
        if verify_budget(&schedule, budget, horizon, sample_time).ok() {
            return Ok(schedule);
        }
        shrink *= 0.9;
    }
    Err(PlatoonError::BudgetInfeasible { attempts: MAX_SCHEDULE_ATTEMPTS })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(ivs: &[(usize, usize)]) -> AttackSchedule {
        let ivs = ivs.iter().map(|&(start, duration)| AttackInterval { start, duration }).collect();
        AttackSchedule::new(ivs, 0.58, vec![true; 6]).unwrap()
    }

    #[test]
    fn half_open_intervals() {
        let s = sched(&[(10, 5)]);
        assert!(!s.is_attacked(0, 9));
        assert!(s.is_attacked(0, 10));
        assert!(s.is_attacked(3, 14));
        assert!(!s.is_attacked(0, 15));
        let partial =
            AttackSchedule::new(vec![AttackInterval { start: 0, duration: 3 }], 0.5, vec![true, false]).unwrap();
        assert!(!partial.is_attacked(1, 1));
        assert!(!partial.is_attacked(7, 1));
    }

    #[test]
    fn gain_perturbation() {
        let s = sched(&[(10, 5)]);
        let k = Gain::new(0.1259, 2.5252);
        let kg = s.effective_gain(k, 0, 12);
        assert_eq!(kg.kp, k.kp);
        assert!((kg.kv - 3.1052).abs() < 1e-12);
        assert_eq!(s.effective_gain(k, 0, 15), k);
        assert_eq!(s.with_perturbation(0.0).effective_gain(k, 0, 12), k);
    }

    #[test]
    fn rejects_overlap() {
        let ivs = vec![AttackInterval { start: 0, duration: 5 }, AttackInterval { start: 4, duration: 2 }];
        assert!(AttackSchedule::new(ivs, 0.1, vec![true]).is_err());
        assert!(AttackSchedule::new(vec![AttackInterval { start: 0, duration: 0 }], 0.1, vec![true]).is_err());
    }

    #[test]
    fn seconds_conversion() {
        let iv = AttackInterval::from_seconds(40.0, 3.0, 0.2).unwrap();
        assert_eq!((iv.start, iv.end()), (200, 215));
        let iv = AttackInterval::from_seconds(0.3, 0.1, 0.2).unwrap();
        assert_eq!((iv.start, iv.end()), (1, 2));
    }

    #[test]
    fn budget_cases() {
        let b = AttackBudget::new(3.0, 0.12, 4.0, 0.05).unwrap();
        let empty = AttackSchedule::none(6);
        assert!(verify_budget(&empty, &b, 500, 0.2).ok());
        // 100 s attack > ζ₀ + τ₀·100 s = 15 s
        let long = sched(&[(0, 500)]);
        let r = verify_budget(&long, &b, 500, 0.2);
        assert!(!r.duration_ok);
        assert!(r.frequency_ok);
        assert!(r.worst_window().slack < 0.0);
        assert!(AttackBudget::new(3.0, 3.0, 4.0, 0.05).is_err());
    }

    #[test]
    fn affected_with_every_step_triggers() {
        let s = sched(&[(10, 5), (40, 3)]);
        let every: Vec<Vec<usize>> = vec![(0..100).collect(); 6];
        let a = affected_intervals(&s, &every, 100, 0.2);
        assert_eq!(a.intervals.len(), 2);
        assert_eq!((a.intervals[0].h_att, a.intervals[0].h_safe), (10, 15));
        assert!((a.delta_star - 0.2).abs() < 1e-12);
    }

    #[test]
    fn attack_without_triggers_has_no_effect() {
        let s = sched(&[(10, 5)]);
        let sparse: Vec<Vec<usize>> = vec![vec![0, 3, 20]; 6];
        let a = affected_intervals(&s, &sparse, 100, 0.2);
        assert!(a.intervals.is_empty());
        assert_eq!(a.delta_star, 0.0);
    }

    #[test]
    fn late_clean_broadcast_and_truncation() {
        let s = sched(&[(10, 5), (50, 5)]);
        let steps = vec![vec![0, 11, 18, 52]; 6];
        let a = affected_intervals(&s, &steps, 60, 0.2);
        assert_eq!((a.intervals[0].h_att, a.intervals[0].h_safe), (11, 18));
        // [11, 18] spans 8 steps against a 5-step attack
        assert!(a.intervals[1].truncated);
        assert_eq!(a.intervals[1].h_safe, 60);
        assert!((a.delta_star - 0.2 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn random_schedules() {
        let loose = AttackBudget::new(20.0, 0.9, 50.0, 1.0).unwrap();
        let dense = random_schedule(1, &loose, 0.58, vec![true; 6], 500, 0.2).unwrap();
        assert!(dense.intervals().len() > 10);
        let tight = AttackBudget::new(0.0, 0.01, 0.0, 0.001).unwrap();
        let sparse = random_schedule(1, &tight, 0.58, vec![true; 6], 50, 0.2).unwrap();
        assert!(sparse.intervals().len() <= 1);
        let b = AttackBudget::new(3.0, 0.12, 4.0, 0.05).unwrap();
        let a = random_schedule(42, &b, 0.58, vec![true; 6], 500, 0.2).unwrap();
        assert_eq!(a, random_schedule(42, &b, 0.58, vec![true; 6], 500, 0.2).unwrap());
        assert!(verify_budget(&a, &b, 500, 0.2).ok());
        assert!(!a.intervals().is_empty());
    }
}
