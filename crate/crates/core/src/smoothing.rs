//! Retarget smoothing: downsample, causal moving average, median filter,
//! then interpolation back to the source frame rate.

use nalgebra::{Quaternion, UnitQuaternion, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::MotionSequence;
use crate::motion_model::Pose;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub downsample_factor: usize,
    pub ma_window: usize,
    pub median_window: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            downsample_factor: 2,
            ma_window: 5,
            median_window: 5,
        }
    }
}

impl SmoothingConfig {
    pub const IDENTITY: Self = Self {
        downsample_factor: 1,
        ma_window: 1,
        median_window: 1,
    };

    pub fn validate(&self) -> Result<()> {
        if self.downsample_factor < 1 || self.ma_window < 1 || self.median_window < 1 {
            return Err(Error::InvalidArgument(
                "smoothing factors and windows must be at least 1".into(),
            ));
        }
        if self.median_window % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "median window must be odd, got {}",
                self.median_window
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// Keeps every `factor`-th frame starting at frame 0.
pub fn downsample(seq: &MotionSequence, factor: usize) -> Result<MotionSequence> {
    if factor < 1 {
        return Err(Error::InvalidArgument("downsample factor must be at least 1".into()));
    }
    Ok(MotionSequence {
        fps: seq.fps / factor as f64,
        frames: seq.frames.iter().step_by(factor).cloned().collect(),
        velocities: seq
            .velocities
            .as_ref()
            .map(|v| v.iter().step_by(factor).cloned().collect()),
    })
}

/// `out[t]` is the mean of `input[max(0, t + 1 - window) ..= t]`.
pub fn causal_moving_average(input: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..input.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(window);
            let slice = &input[lo..=t];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Centered sliding median; samples beyond the ends replicate the boundary.
pub fn median_filter(input: &[f64], window: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "median window must be odd, got {window}"
        )));
    }
    let n = input.len() as isize;
    let half = (window / 2) as isize;
    let mut buf = Vec::with_capacity(window);
    Ok((0..n)
        .map(|t| {
            buf.clear();
            buf.extend((-half..=half).map(|k| input[(t + k).clamp(0, n - 1) as usize]));
            buf.sort_by(f64::total_cmp);
            buf[half as usize]
        })
        .collect())
}

fn aligned(q: &UnitQuaternion<f64>, reference: &UnitQuaternion<f64>) -> Vector4<f64> {
    let v = q.as_ref().coords;
    if v.dot(&reference.as_ref().coords) < 0.0 {
        -v
    } else {
        v
    }
}

fn sample_pose(seq: &MotionSequence, u: f64) -> (Pose, Option<Vec<f64>>) {
    let n = seq.frames.len();
    let u = u.max(0.0);
    let i = (u.floor() as usize).min(n - 1);
    let frac = u - i as f64;
    if i + 1 >= n || frac == 0.0 {
        let v = seq.velocities.as_ref().map(|v| v[i].clone());
        return (seq.frames[i].clone(), v);
    }
    let (a, b) = (&seq.frames[i], &seq.frames[i + 1]);
    let lerp = |x: f64, y: f64| x + (y - x) * frac;
    let q = a.q.iter().zip(&b.q).map(|(&x, &y)| lerp(x, y)).collect();
    let pos = a.root_position + (b.root_position - a.root_position) * frac;
    let qb = UnitQuaternion::new_unchecked(Quaternion::from(aligned(&b.root_orientation, &a.root_orientation)));
    let rot = a.root_orientation.slerp(&qb, frac);
    let vel = seq.velocities.as_ref().map(|v| {
        v[i].iter().zip(&v[i + 1]).map(|(&x, &y)| lerp(x, y)).collect()
    });
    (Pose::new(pos, rot, q), vel)
}

/// Resamples to `count` frames at `target_fps` starting at the first frame;
/// times past the last source frame hold the last frame.
pub fn resample(seq: &MotionSequence, target_fps: f64, count: usize) -> Result<MotionSequence> {
    if !(target_fps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target fps must be positive, got {target_fps}"
        )));
    }
    if seq.is_empty() {
        return Err(Error::InvalidArgument("motion sequence has no frames".into()));
    }
    if seq.len() == 1 && count > 1 {
        return Err(Error::InvalidArgument(
            "cannot interpolate a single frame to several frames".into(),
        ));
    }
    let ratio = seq.fps / target_fps;
    let (frames, vels): (Vec<Pose>, Vec<Option<Vec<f64>>>) =
        (0..count).map(|k| sample_pose(seq, k as f64 * ratio)).unzip();
    Ok(MotionSequence {
        fps: target_fps,
        frames,
        velocities: seq
            .velocities
            .as_ref()
            .map(|_| vels.into_iter().map(Option::unwrap).collect()),
    })
}

/// Linear joint interpolation and root slerp onto a uniform grid at
/// `target_fps` spanning the same time as the source.
pub fn interpolate_to_rate(seq: &MotionSequence, target_fps: f64) -> Result<MotionSequence> {
    if !(target_fps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target fps must be positive, got {target_fps}"
        )));
    }
    let count = (seq.span() * target_fps + 1e-9).floor() as usize + 1;
    resample(seq, target_fps, count)
}

fn smooth_channel(channel: &[f64], cfg: &SmoothingConfig) -> Vec<f64> {
    let ma = causal_moving_average(channel, cfg.ma_window);
    median_filter(&ma, cfg.median_window).expect("validated odd window")
}

/// Full pipeline; output keeps the input frame count and rate.
pub fn smooth_pipeline(seq: &MotionSequence, cfg: &SmoothingConfig) -> Result<MotionSequence> {
    cfg.validate()?;
    seq.validate()?;
    if cfg.is_identity() {
        return Ok(seq.clone());
    }
    let mut ds = downsample(seq, cfg.downsample_factor)?;
    let m = ds.len();

    for j in 0..seq.dof() {
        let smoothed = smooth_channel(&ds.channel(j), cfg);
        for (f, v) in ds.frames.iter_mut().zip(smoothed) {
            f.q[j] = v;
        }
    }
    for axis in 0..3 {
        let ch: Vec<f64> = ds.frames.iter().map(|f| f.root_position[axis]).collect();
        for (f, v) in ds.frames.iter_mut().zip(smooth_channel(&ch, cfg)) {
            f.root_position[axis] = v;
        }
    }
    // quaternions: sign-aligned moving average, renormalized; no median stage
    let mut comps: Vec<Vector4<f64>> = Vec::with_capacity(m);
    for f in &ds.frames {
        let v = match comps.last() {
            Some(prev) if f.root_orientation.as_ref().coords.dot(prev) < 0.0 => {
                -f.root_orientation.as_ref().coords
            }
            _ => f.root_orientation.as_ref().coords,
        };
        comps.push(v);
    }
    let averaged: Vec<Vec<f64>> = (0..4)
        .map(|c| {
            let ch: Vec<f64> = comps.iter().map(|v| v[c]).collect();
            causal_moving_average(&ch, cfg.ma_window)
        })
        .collect();
    for (t, f) in ds.frames.iter_mut().enumerate() {
        let v = Vector4::new(averaged[0][t], averaged[1][t], averaged[2][t], averaged[3][t]);
        f.root_orientation = UnitQuaternion::from_quaternion(Quaternion::from(v));
    }

    let mut out = resample(&ds, seq.fps, seq.len())?;
    if seq.velocities.is_some() {
        out.velocities = Some(out.differentiated_velocities());
    }
    Ok(out)
}
