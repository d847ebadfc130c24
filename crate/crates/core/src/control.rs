//! PD control, torque relaxation, domain randomization and action delay.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Desired joint positions: `q_default + a`.
pub fn action_to_target(a: &[f64], q_default: &[f64]) -> Result<Vec<f64>> {
    check_len("action", q_default.len(), a.len())?;
    Ok(a.iter().zip(q_default).map(|(a, q)| q + a).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

impl PdGains {
    pub fn new(kp: Vec<f64>, kd: Vec<f64>) -> Result<Self> {
        check_len("kd", kp.len(), kd.len())?;
        if kp.iter().chain(&kd).any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidArgument("PD gains must be non-negative".into()));
        }
        Ok(Self { kp, kd })
    }

    pub fn uniform(dof: usize, kp: f64, kd: f64) -> Result<Self> {
        Self::new(vec![kp; dof], vec![kd; dof])
    }

    pub fn dof(&self) -> usize {
        self.kp.len()
    }

    pub fn scaled(&self, kp_scale: f64, kd_scale: f64) -> Self {
        Self {
            kp: self.kp.iter().map(|k| k * kp_scale).collect(),
            kd: self.kd.iter().map(|k| k * kd_scale).collect(),
        }
    }
}

/// `kp (q_des - q) - kd q̇`, clamped to `±limit_i · strength_i`.
pub fn pd_torque(
    gains: &PdGains,
    q_des: &[f64],
    q: &[f64],
    qd: &[f64],
    limits: &[f64],
    strength: &[f64],
) -> Result<Vec<f64>> {
    let k = gains.dof();
    for (what, len) in [("q_des", q_des.len()), ("q", q.len()), ("qd", qd.len()), ("limits", limits.len())] {
        check_len(what, k, len)?;
    }
    check_len("motor strength", k, strength.len())?;
    Ok((0..k)
        .map(|i| {
            let tau = gains.kp[i] * (q_des[i] - q[i]) - gains.kd[i] * qd[i];
            let lim = limits[i] * strength[i];
            tau.clamp(-lim, lim)
        })
        .collect())
}

/// Elementwise relaxation `τ ⊙ w`.
pub fn modulate(tau: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_len("relaxation vector", tau.len(), w.len())?;
    if let Some(bad) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("relaxation level {bad} outside [0, 1]")));
    }
    Ok(tau.iter().zip(w).map(|(t, w)| t * w).collect())
}

/// Closed ranges `[lo, hi]` for each randomized quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainRandRanges {
    pub link_mass_scale: [f64; 2],
    /// Metres, per axis.
    pub com_offset: [f64; 2],
    pub friction: [f64; 2],
    pub motor_strength_scale: [f64; 2],
    pub kp_scale: [f64; 2],
    pub kd_scale: [f64; 2],
    pub action_delay_ms: [f64; 2],
}

impl Default for DomainRandRanges {
    fn default() -> Self {
        Self {
            link_mass_scale: [0.8, 1.2],
            com_offset: [-0.1, 0.1],
            friction: [0.5, 1.5],
            motor_strength_scale: [0.8, 1.2],
            kp_scale: [0.75, 1.25],
            kd_scale: [0.75, 1.25],
            action_delay_ms: [5.0, 25.0],
        }
    }
}

impl DomainRandRanges {
    pub fn channels(&self) -> [(&'static str, [f64; 2]); 7] {
        [
            ("link_mass_scale", self.link_mass_scale),
            ("com_offset", self.com_offset),
            ("friction", self.friction),
            ("motor_strength_scale", self.motor_strength_scale),
            ("kp_scale", self.kp_scale),
            ("kd_scale", self.kd_scale),
            ("action_delay_ms", self.action_delay_ms),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in self.channels() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument(format!("range {name} = [{lo}, {hi}] is not ordered")));
            }
        }
        if self.action_delay_ms[0] < 0.0 {
            return Err(Error::InvalidArgument("action delay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainRandSample {
    /// One scale per link.
    pub link_mass_scale: Vec<f64>,
    pub com_offset: [f64; 3],
    pub friction: f64,
    /// One scale per actuated joint.
    pub motor_strength_scale: Vec<f64>,
    pub kp_scale: f64,
    pub kd_scale: f64,
    pub action_delay_ms: f64,
}

impl DomainRandSample {
    /// The unperturbed sample.
    pub fn nominal(links: usize, dof: usize) -> Self {
        Self {
            link_mass_scale: vec![1.0; links],
            com_offset: [0.0; 3],
            friction: 1.0,
            motor_strength_scale: vec![1.0; dof],
            kp_scale: 1.0,
            kd_scale: 1.0,
            action_delay_ms: 0.0,
        }
    }

    pub fn within(&self, r: &DomainRandRanges) -> bool {
        let inside = |v: f64, [lo, hi]: [f64; 2]| (lo..=hi).contains(&v);
        self.link_mass_scale.iter().all(|&v| inside(v, r.link_mass_scale))
            && self.com_offset.iter().all(|&v| inside(v, r.com_offset))
            && inside(self.friction, r.friction)
            && self.motor_strength_scale.iter().all(|&v| inside(v, r.motor_strength_scale))
            && inside(self.kp_scale, r.kp_scale)
            && inside(self.kd_scale, r.kd_scale)
            && inside(self.action_delay_ms, r.action_delay_ms)
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Independent uniform draws for every channel.
pub fn sample_domain_rand<R: Rng + ?Sized>(
    ranges: &DomainRandRanges,
    links: usize,
    dof: usize,
    rng: &mut R,
) -> Result<DomainRandSample> {
    ranges.validate()?;
    let link_mass_scale = (0..links).map(|_| draw(rng, ranges.link_mass_scale)).collect();
    let com_offset = [draw(rng, ranges.com_offset), draw(rng, ranges.com_offset), draw(rng, ranges.com_offset)];
    let friction = draw(rng, ranges.friction);
    let motor_strength_scale = (0..dof).map(|_| draw(rng, ranges.motor_strength_scale)).collect();
    let kp_scale = draw(rng, ranges.kp_scale);
    let kd_scale = draw(rng, ranges.kd_scale);
    let action_delay_ms = draw(rng, ranges.action_delay_ms);
    Ok(DomainRandSample {
        link_mass_scale,
        com_offset,
        friction,
        motor_strength_scale,
        kp_scale,
        kd_scale,
        action_delay_ms,
    })
}

/// Holds timestamped actions and releases them once they are `delay_ms` old.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayBuffer {
    delay_ms: f64,
    queue: VecDeque<(f64, Vec<f64>)>,
}

impl DelayBuffer {
    pub fn new(delay_ms: f64) -> Result<Self> {
        if !(delay_ms >= 0.0) {
            return Err(Error::InvalidArgument(format!("delay {delay_ms} ms must be non-negative")));
        }
        Ok(Self { delay_ms, queue: VecDeque::new() })
    }

    pub fn delay_ms(&self) -> f64 {
        self.delay_ms
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Pushes `action` at `now_ms` and returns the newest action aged at least
    /// the delay, or the oldest buffered one while warming up.
    pub fn apply(&mut self, now_ms: f64, action: &[f64]) -> Result<Vec<f64>> {
        if let Some(&(last, _)) = self.queue.back() {
            if now_ms < last {
                return Err(Error::TimeRegression { now: now_ms, last });
            }
        }
        self.queue.push_back((now_ms, action.to_vec()));
        let ready = self.queue.iter().rposition(|(ts, _)| now_ms - ts >= self.delay_ms);
        if let Some(i) = ready {
            // Anything older than the released entry can never be released again.
            self.queue.drain(..i);
        }
        Ok(self.queue.front().unwrap().1.clone())
    }
}
