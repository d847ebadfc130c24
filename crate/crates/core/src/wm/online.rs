use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::input::WmInput;
use super::network::{LstmState, WmNetwork};
use crate::error::Result;

/// Deployment-time wrapper holding recurrent state across control ticks.
#[derive(Clone, Debug)]
pub struct OnlineWm {
    net: WmNetwork,
    state: LstmState,
}

impl OnlineWm {
    pub fn new(net: WmNetwork) -> Self {
        let state = net.zero_state();
        Self { net, state }
    }

    pub fn network(&self) -> &WmNetwork {
        &self.net
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// Measured history (4 frames) and current pose with 5 reference future frames.
    pub fn infer(&mut self, q_history: &[Vec<f64>], q_current: &[f64], q_ref_future: &[Vec<f64>]) -> Result<Vec<f64>> {
        let x = WmInput::from_parts(q_history, q_current, q_ref_future)?;
        // Evaluation mode never draws from the generator.
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        self.net.forward(x.as_slice(), &mut self.state, false, &mut unused)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wm::Architecture;

    #[test]
    fn zero_net_gives_half() {
        let net = WmNetwork::zeroed(Architecture::for_dof(23)).unwrap();
        let mut on = OnlineWm::new(net);
        let w = on.infer(&vec![vec![0.3; 23]; 4], &[0.1; 23], &vec![vec![0.2; 23]; 5]).unwrap();
        assert_eq!(w, vec![0.5; 23]);
    }

    #[test]
    fn wrong_history_length_rejected() {
        let net = WmNetwork::zeroed(Architecture::for_dof(2)).unwrap();
        let mut on = OnlineWm::new(net);
        assert!(on.infer(&vec![vec![0.0; 2]; 5], &[0.0; 2], &vec![vec![0.0; 2]; 5]).is_err());
    }
}
