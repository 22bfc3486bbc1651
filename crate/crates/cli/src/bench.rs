//! Per-phase timing over a grid of `(n, t)`, measured on direct calls so
//! that transport latency does not enter the numbers.

use std::time::{Duration, Instant};

use l2pc_core::fixedpoint::quantize;
use l2pc_core::protocol::{Client, Party, PartyId, SessionSeeds};
use l2pc_core::sampling::{RngStream, StreamId};
use l2pc_core::transport::Frame;
use l2pc_core::{ProtocolParams, RealMatrix, Seed};

use crate::CliError;

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub n: usize,
    pub t: usize,
    pub k: u32,
    pub l: u32,
    pub offline: Duration,
    pub client_share: Duration,
    pub phase1: Duration,
    pub phase2: Duration,
    pub client_reconstruct: Duration,
    pub h_bytes: usize,
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

fn random_real(rng: &mut RngStream, rows: usize, cols: usize) -> RealMatrix {
    let data = (0..rows * cols)
        .map(|_| (rng.next_u128() >> 75) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
        .collect();
    RealMatrix::new(rows, cols, data).expect("shape matches data")
}

/// Times every phase `reps` times for one parameter set and keeps the median.
pub fn bench_one(p: &ProtocolParams, seed: Seed, reps: usize) -> Result<BenchRow, CliError> {
    let spec = p.fp()?;
    let d = p.dims;
    let mut rng = RngStream::new(seed, StreamId(u64::MAX));
    let x = quantize(&random_real(&mut rng, d.d1, d.d2), spec).matrix;
    let seeds = SessionSeeds::from_master(seed);
    let mut client = Client::new(*p, 1, seeds)?;
    let mut parties = [
        Party::new(PartyId::P0, 1, seeds.party0),
        Party::new(PartyId::P1, 1, seeds.party1),
    ];

    let start = Instant::now();
    let (_, setup) = client.setup(false)?;
    let offline_msgs = client.offline(&x)?;
    let offline = start.elapsed();
    for (party, m) in parties.iter_mut().zip(&offline_msgs) {
        party.handle_setup(&setup)?;
        party.handle_offline(m)?;
    }

    let (mut share, mut ph1, mut ph2, mut rec) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut h_bytes = 0;
    for step in 0..reps.max(1) as u64 {
        let y = quantize(&random_real(&mut rng, d.d2, d.d3), spec).matrix;
        let s = Instant::now();
        let [y0, y1] = client.online_begin(step, &y)?;
        share.push(s.elapsed());
        let s = Instant::now();
        let h0 = parties[0].phase1(&y0, None)?;
        ph1.push(s.elapsed());
        let h1 = parties[1].phase1(&y1, None)?;
        h_bytes = Frame::from_message(&h0).encoded_len();
        let s = Instant::now();
        let z0 = parties[0].phase2(&h1)?;
        ph2.push(s.elapsed());
        let z1 = parties[1].phase2(&h0)?;
        let s = Instant::now();
        client.online_finish(&z0, &z1)?;
        rec.push(s.elapsed());
    }
    Ok(BenchRow {
        n: p.lwe.n,
        t: p.sis.t,
        k: p.k,
        l: p.l,
        offline,
        client_share: median(share),
        phase1: median(ph1),
        phase2: median(ph2),
        client_reconstruct: median(rec),
        h_bytes,
    })
}

fn ms(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}

pub fn render(rows: &[BenchRow]) -> String {
    let header = [
        "n",
        "t",
        "k",
        "l",
        "offline_ms",
        "client_share_ms",
        "party_phase1_ms",
        "party_phase2_ms",
        "client_reconst_ms",
        "h_bytes",
    ];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.t.to_string(),
                r.k.to_string(),
                r.l.to_string(),
                ms(r.offline),
                ms(r.client_share),
                ms(r.phase1),
                ms(r.phase2),
                ms(r.client_reconstruct),
                r.h_bytes.to_string(),
            ]
        })
        .collect();
    let width: Vec<usize> = (0..header.len())
        .map(|i| {
            cells
                .iter()
                .map(|c| c[i].len())
                .chain([header[i].len()])
                .max()
                .unwrap()
        })
        .collect();
    let line = |c: &[&str]| {
        c.iter()
            .zip(&width)
            .map(|(s, w)| format!("{s:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(&header);
    out.push('\n');
    for c in &cells {
        out.push_str(&line(&c.iter().map(String::as_str).collect::<Vec<_>>()));
        out.push('\n');
    }
    out
}
