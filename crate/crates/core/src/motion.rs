//! Timed pose sequences.

use crate::error::{check_len, Error, Result};
use crate::motion_model::Pose;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub fps: f64,
    pub frames: Vec<Pose>,
    /// Optional per-frame joint velocities, rad/s.
    pub velocities: Option<Vec<Vec<f64>>>,
}

impl MotionSequence {
    pub fn new(fps: f64, frames: Vec<Pose>) -> Result<Self> {
        let seq = Self {
            fps,
            frames,
            velocities: None,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn with_velocities(mut self, velocities: Vec<Vec<f64>>) -> Result<Self> {
        self.velocities = Some(velocities);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {}", self.fps)));
        }
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("motion sequence has no frames".into()))?;
        let k = first.q.len();
        for f in &self.frames {
            check_len("frame q", k, f.q.len())?;
        }
        if let Some(v) = &self.velocities {
            check_len("velocity frames", self.frames.len(), v.len())?;
            for row in v {
                check_len("frame velocity", k, row.len())?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.frames.first().map_or(0, |f| f.q.len())
    }

    /// Recording length, `frames / fps` seconds (each frame covers one period).
    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    /// Time between the first and last frame, seconds.
    pub fn span(&self) -> f64 {
        self.frames.len().saturating_sub(1) as f64 / self.fps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fps
    }

    /// Joint velocities: the stored ones, or central differences of `q`.
    pub fn joint_velocities(&self) -> Vec<Vec<f64>> {
        match &self.velocities {
            Some(v) => v.clone(),
            None => self.differentiated_velocities(),
        }
    }

    /// Central differences (one-sided at the ends) of the joint positions.
    pub fn differentiated_velocities(&self) -> Vec<Vec<f64>> {
        let q: Vec<&[f64]> = self.frames.iter().map(|f| f.q.as_slice()).collect();
        differentiate(&q, self.fps)
    }

    /// Joint position channel `j` across frames.
    pub fn channel(&self, j: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.q[j]).collect()
    }
}

/// Central-difference derivative of vector samples taken at `rate` Hz.
pub fn differentiate(samples: &[&[f64]], rate: f64) -> Vec<Vec<f64>> {
    let n = samples.len();
    let k = samples.first().map_or(0, |s| s.len());
    if n < 2 {
        return vec![vec![0.0; k]; n];
    }
    (0..n)
        .map(|t| {
            let (a, b, span) = if t == 0 {
                (0, 1, 1.0)
            } else if t == n - 1 {
                (n - 2, n - 1, 1.0)
            } else {
                (t - 1, t + 1, 2.0)
            };
            (0..k)
                .map(|j| (samples[b][j] - samples[a][j]) * rate / span)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_from_fps() {
        let seq = MotionSequence::new(50.0, vec![Pose::zero(2); 100]).unwrap();
        assert!((seq.duration() - 2.0).abs() < 1e-15);
        assert!((seq.span() - 1.98).abs() < 1e-12);
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(MotionSequence::new(50.0, vec![]).is_err());
        assert!(MotionSequence::new(0.0, vec![Pose::zero(1)]).is_err());
        assert!(MotionSequence::new(50.0, vec![Pose::zero(1), Pose::zero(2)]).is_err());
    }

    #[test]
    fn central_differences_on_ramp() {
        let frames: Vec<Pose> = (0..5)
            .map(|i| {
                let mut p = Pose::zero(1);
                p.q[0] = 0.1 * i as f64;
                p
            })
            .collect();
        let seq = MotionSequence::new(10.0, frames).unwrap();
        for v in seq.differentiated_velocities() {
            assert!((v[0] - 1.0).abs() < 1e-12);
        }
    }
}
