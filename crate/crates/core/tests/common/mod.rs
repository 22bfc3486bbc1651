#![allow(dead_code)]

use l2pc_core::fixedpoint::{encode_l, FixedPointMatrix, FixedPointSpec};
use l2pc_core::params::{Dims, ProtocolParams};
use l2pc_core::protocol::{Client, OfflineSecrets, OnlineOutput, Party, PartyId, SessionSeeds};
use l2pc_core::ring::ZqMatrix;
use l2pc_core::sampling::{RngStream, Seed, StreamId, StreamObject, StreamPhase, StreamRole};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;

pub fn test_rng(index: u32) -> RngStream {
    RngStream::new(
        Seed::from_u64(0x5eed),
        StreamId::new(
            StreamRole::Test,
            StreamPhase::Misc,
            StreamObject::Generic,
            index,
        ),
    )
}

/// Small validated parameter set with `d1 = d2 = d3 = d`.
pub fn small_params(n: usize, q_bits: u32, t: usize, d: usize, epsilon: f64) -> ProtocolParams {
    ProtocolParams::from_window(n, q_bits, t, Dims::new(d, d, d), epsilon).unwrap()
}

/// Uniform mantissas over the whole `k`-bit range.
pub fn random_fixed(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    spec: FixedPointSpec,
) -> FixedPointMatrix {
    let span = 1u128 << spec.k();
    let m = (0..rows * cols)
        .map(|_| (rng.next_u128() % span) as i64 + spec.min_mantissa())
        .collect();
    FixedPointMatrix::from_mantissas(spec, rows, cols, m).unwrap()
}

/// `X Y` over the rationals, row-major.
pub fn exact_product(x: &FixedPointMatrix, y: &FixedPointMatrix) -> Vec<BigRational> {
    let den = BigInt::from(1) << (2 * x.spec().l());
    let mut out = Vec::with_capacity(x.rows() * y.cols());
    for i in 0..x.rows() {
        for j in 0..y.cols() {
            let s: BigInt = (0..x.cols())
                .map(|k| BigInt::from(x.mantissa(i, k)) * BigInt::from(y.mantissa(k, j)))
                .sum();
            out.push(BigRational::new(s, den.clone()));
        }
    }
    out
}

pub fn max_abs_diff(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .max()
        .expect("non-empty")
}

pub fn epsilon_exact(params: &ProtocolParams) -> BigRational {
    BigRational::from_float(params.epsilon).unwrap()
}

/// One protocol execution without a transport, exposing `S, E, E'` and the
/// reconstructed short randomness of every step.
pub struct DirectRun {
    pub outputs: Vec<OnlineOutput>,
    pub secrets: OfflineSecrets,
    pub r: Vec<ZqMatrix>,
}

pub fn run_direct(
    params: &ProtocolParams,
    x: &FixedPointMatrix,
    ys: &[FixedPointMatrix],
    master: Seed,
) -> DirectRun {
    let seeds = SessionSeeds::from_master(master);
    let mut client = Client::new(*params, 1, seeds).unwrap();
    let mut parties = [
        Party::new(PartyId::P0, 1, seeds.party0),
        Party::new(PartyId::P1, 1, seeds.party1),
    ];
    let (_, setup) = client.setup(false).unwrap();
    let (offline, secrets) = client.offline_exposed(x).unwrap();
    for (p, m) in parties.iter_mut().zip(&offline) {
        p.handle_setup(&setup).unwrap();
        p.handle_offline(m).unwrap();
    }
    let mut outputs = Vec::new();
    let mut r = Vec::new();
    for (step, y) in ys.iter().enumerate() {
        let step = step as u64;
        let [y0, y1] = client.online_begin(step, y).unwrap();
        let h0 = parties[0].phase1(&y0, None).unwrap();
        let h1 = parties[1].phase1(&y1, None).unwrap();
        let z0 = parties[0].phase2(&h1).unwrap();
        let z1 = parties[1].phase2(&h0).unwrap();
        outputs.push(client.online_finish(&z0, &z1).unwrap());
        r.push(
            parties[0]
                .r_share(step)
                .unwrap()
                .checked_add(&parties[1].r_share(step).unwrap())
                .unwrap(),
        );
    }
    DirectRun {
        outputs,
        secrets,
        r,
    }
}

/// `X_bar Y_bar + E^T Y_bar + E'^T R` computed with plain ring operations.
pub fn lemma_rhs(
    x: &FixedPointMatrix,
    y: &FixedPointMatrix,
    secrets: &OfflineSecrets,
    r: &ZqMatrix,
) -> ZqMatrix {
    let m = r.modulus();
    let x_bar = encode_l(x, m).unwrap();
    let y_bar = encode_l(y, m).unwrap();
    x_bar
        .matmul(&y_bar)
        .unwrap()
        .checked_add(&secrets.e.transpose().matmul(&y_bar).unwrap())
        .unwrap()
        .checked_add(&secrets.e_prime.transpose().matmul(r).unwrap())
        .unwrap()
}
