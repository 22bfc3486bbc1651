//! Fixtures shared by the benchmarks.

use l2pc_core::fixedpoint::quantize;
use l2pc_core::protocol::{Client, Party, PartyId, SessionSeeds};
use l2pc_core::{Dims, FixedPointMatrix, ProtocolParams, RealMatrix, Result, Seed};

/// Parameters at `n`, `q = 2^108`, `t` with `(k, l)` from the window.
pub fn params(n: usize, t: usize) -> ProtocolParams {
    ProtocolParams::from_window(n, 108, t, Dims::new(1, 2, 1), (-10f64).exp2())
        .expect("window is nonempty")
}

/// Client and parties after setup and offline, ready for online steps.
pub struct Session {
    pub client: Client,
    pub parties: [Party; 2],
    pub y: FixedPointMatrix,
    pub step: u64,
}

impl Session {
    pub fn new(p: &ProtocolParams) -> Result<Self> {
        let spec = p.fp()?;
        let x = quantize(&RealMatrix::from_rows(&[vec![3.84, -2.4]])?, spec).matrix;
        let y = quantize(&RealMatrix::column(&[0.7, -1.3]), spec).matrix;
        let seeds = SessionSeeds::from_master(Seed::from_u64(1));
        let mut client = Client::new(*p, 1, seeds)?;
        let mut parties = [
            Party::new(PartyId::P0, 1, seeds.party0),
            Party::new(PartyId::P1, 1, seeds.party1),
        ];
        let (_, setup) = client.setup(false)?;
        let offline = client.offline(&x)?;
        for (party, m) in parties.iter_mut().zip(&offline) {
            party.handle_setup(&setup)?;
            party.handle_offline(m)?;
        }
        Ok(Self {
            client,
            parties,
            y,
            step: 0,
        })
    }

    /// One full online evaluation; returns `Z_bar[0][0]`.
    pub fn online(&mut self) -> Result<i128> {
        let step = self.step;
        self.step += 1;
        let [y0, y1] = self.client.online_begin(step, &self.y)?;
        let h0 = self.parties[0].phase1(&y0, None)?;
        let h1 = self.parties[1].phase1(&y1, None)?;
        let z0 = self.parties[0].phase2(&h1)?;
        let z1 = self.parties[1].phase2(&h0)?;
        Ok(self.client.online_finish(&z0, &z1)?.z_bar.get(0, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn online_steps_track_the_product() {
        let p = params(64, 256);
        let mut s = Session::new(&p).unwrap();
        let want = 3.84 * 0.7 + 2.4 * 1.3;
        for _ in 0..3 {
            let z = s.online().unwrap() as f64 / (2.0 * p.l as f64).exp2();
            assert!((z - want).abs() < 1e-6);
        }
    }
}
