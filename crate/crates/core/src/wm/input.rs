use crate::error::{Error, Result};
use crate::motion::MotionSequence;

pub const HISTORY_LEN: usize = 4;
pub const FUTURE_LEN: usize = 5;
/// History, current and future frames per input vector.
pub const WINDOW_FRAMES: usize = HISTORY_LEN + 1 + FUTURE_LEN;

/// Network input x_t: `[q_{t-4}, …, q_{t-1}, q_t, q_{t+δ}, …, q_{t+δ+4}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WmInput(pub Vec<f64>);

impl WmInput {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Frame slot `i` (0..10) of the window.
    pub fn frame(&self, i: usize, dof: usize) -> &[f64] {
        &self.0[i * dof..(i + 1) * dof]
    }

    /// Concatenates explicit history, current and future frames.
    pub fn from_parts(history: &[Vec<f64>], current: &[f64], future: &[Vec<f64>]) -> Result<Self> {
        if history.len() != HISTORY_LEN || future.len() != FUTURE_LEN {
            return Err(Error::InvalidArgument(format!(
                "expected {HISTORY_LEN} history and {FUTURE_LEN} future frames, got {} and {}",
                history.len(),
                future.len()
            )));
        }
        let k = current.len();
        let mut out = Vec::with_capacity(WINDOW_FRAMES * k);
        for f in history.iter().map(Vec::as_slice).chain([current]).chain(future.iter().map(Vec::as_slice)) {
            if f.len() != k {
                return Err(Error::dims("input frame", k, f.len()));
            }
            out.extend_from_slice(f);
        }
        Ok(Self(out))
    }
}

/// Frame indices read for time `t` with future offset `delta`, clamped to the sequence.
pub fn window_indices(n: usize, t: usize, delta: i64) -> [usize; WINDOW_FRAMES] {
    let last = n as i64 - 1;
    let mut idx = [0usize; WINDOW_FRAMES];
    let t = t as i64;
    for (slot, i) in idx.iter_mut().enumerate() {
        let frame = if slot < HISTORY_LEN {
            t - HISTORY_LEN as i64 + slot as i64
        } else if slot == HISTORY_LEN {
            t
        } else {
            t + delta + (slot - HISTORY_LEN - 1) as i64
        };
        *i = frame.clamp(0, last) as usize;
    }
    idx
}

pub fn build_input(seq: &MotionSequence, t: usize, delta: i64) -> Result<WmInput> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument("motion sequence has no frames".into()));
    }
    let k = seq.dof();
    let mut out = Vec::with_capacity(WINDOW_FRAMES * k);
    for i in window_indices(seq.len(), t.min(seq.len() - 1), delta) {
        out.extend_from_slice(&seq.frames[i].q);
    }
    Ok(WmInput(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_model::Pose;

    fn ramp(n: usize, k: usize) -> MotionSequence {
        let frames = (0..n)
            .map(|i| {
                let mut p = Pose::zero(k);
                p.q.iter_mut().for_each(|v| *v = i as f64);
                p
            })
            .collect();
        MotionSequence::new(50.0, frames).unwrap()
    }

    #[test]
    fn layout_and_clamping() {
        let seq = ramp(100, 23);
        let x = build_input(&seq, 50, -3).unwrap();
        assert_eq!(x.0.len(), 230);
        let firsts: Vec<f64> = (0..10).map(|i| x.frame(i, 23)[0]).collect();
        assert_eq!(firsts, vec![46., 47., 48., 49., 50., 47., 48., 49., 50., 51.]);
        let x0 = build_input(&seq, 0, 0).unwrap();
        assert!((0..5).all(|i| x0.frame(i, 23)[0] == 0.0));
        let xe = build_input(&seq, 99, 10).unwrap();
        assert!((5..10).all(|i| xe.frame(i, 23)[0] == 99.0));
    }

    #[test]
    fn constant_sequence_repeats_pose() {
        let mut p = Pose::zero(3);
        p.q = vec![0.1, 0.2, 0.3];
        let seq = MotionSequence::new(50.0, vec![p; 12]).unwrap();
        let x = build_input(&seq, 7, -5).unwrap();
        for i in 0..10 {
            assert_eq!(x.frame(i, 3), &[0.1, 0.2, 0.3]);
        }
    }

    #[test]
    fn parts_must_have_window_lengths() {
        assert!(WmInput::from_parts(&vec![vec![0.0]; 3], &[0.0], &vec![vec![0.0]; 5]).is_err());
        assert!(WmInput::from_parts(&vec![vec![0.0]; 4], &[0.0], &vec![vec![0.0]; 5]).is_ok());
    }
}
