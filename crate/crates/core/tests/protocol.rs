mod common;

use std::time::Duration;

use common::*;
use l2pc_core::fixedpoint::{encode_l, FixedPointMatrix, FixedPointSpec};
use l2pc_core::params::{Dims, ProtocolParams};
use l2pc_core::protocol::runner::{run_mult, Deployment, RunOptions};
use l2pc_core::protocol::{
    Client, Message, MsgType, OfflineSecrets, Operator, Party, PartyId, Payload, SessionSeeds,
};
use l2pc_core::ring::ZqMatrix;
use l2pc_core::sampling::Seed;
use l2pc_core::secretshare::{reconst, SharePair};
use l2pc_core::transport::{transcript_round_count, Role};
use l2pc_core::Error;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;

fn params() -> ProtocolParams {
    small_params(32, 48, 128, 2, (-4f64).exp2())
}

struct Setup {
    client: Client,
    parties: [Party; 2],
    offline: [Message; 2],
    secrets: OfflineSecrets,
}

fn setup(p: &ProtocolParams, x: &FixedPointMatrix, master: u64) -> Setup {
    let seeds = SessionSeeds::from_master(Seed::from_u64(master));
    let mut client = Client::new(*p, 7, seeds).unwrap();
    let mut parties = [
        Party::new(PartyId::P0, 7, seeds.party0),
        Party::new(PartyId::P1, 7, seeds.party1),
    ];
    let (_, s) = client.setup(false).unwrap();
    let (offline, secrets) = client.offline_exposed(x).unwrap();
    for (party, m) in parties.iter_mut().zip(&offline) {
        party.handle_setup(&s).unwrap();
        party.handle_offline(m).unwrap();
    }
    Setup {
        client,
        parties,
        offline,
        secrets,
    }
}

fn material(m: &Message) -> &l2pc_core::protocol::OfflineMaterial {
    match &m.payload {
        Payload::Offline(o) => o,
        _ => panic!("not offline material"),
    }
}

#[test]
fn key_shares_reconstruct_to_the_key() {
    let p = params();
    let x = random_fixed(&mut test_rng(1), 2, 2, p.fp().unwrap());
    let s = setup(&p, &x, 1);
    let (a, b) = (material(&s.offline[0]), material(&s.offline[1]));
    assert_eq!(a.c, b.c);
    assert_eq!(a.c_prime, b.c_prime);
    let key = reconst(&SharePair::from_parts(a.s_share.clone(), b.s_share.clone()).unwrap());
    assert_eq!(key, s.secrets.s);
    assert_ne!(a.s_share, b.s_share);
}

#[test]
fn zero_noise_offline_is_plain_encoding() {
    let p = params();
    let m = p.modulus();
    let x = random_fixed(&mut test_rng(2), 2, 2, p.fp().unwrap());
    let seeds = SessionSeeds::from_master(Seed::from_u64(2));
    let mut client = Client::new(p, 1, seeds).unwrap();
    client.setup(false).unwrap();
    let zero = OfflineSecrets {
        s: ZqMatrix::zeros(p.lwe.n, 2, m),
        e: ZqMatrix::zeros(2, 2, m),
        e_prime: ZqMatrix::zeros(p.sis.t, 2, m),
    };
    let msgs = client.offline_with(&x, &zero).unwrap();
    let o = material(&msgs[0]);
    assert_eq!(o.c, encode_l(&x, m).unwrap().transpose());
    assert!(o.c_prime.is_zero());
}

#[test]
fn zero_noise_online_is_exact_product() {
    let p = params();
    let m = p.modulus();
    let spec = p.fp().unwrap();
    let mut rng = test_rng(20);
    let x = random_fixed(&mut rng, 2, 2, spec);
    let y = random_fixed(&mut rng, 2, 2, spec);
    let seeds = SessionSeeds::from_master(Seed::from_u64(20));
    let mut client = Client::new(p, 1, seeds).unwrap();
    let mut parties = [
        Party::new(PartyId::P0, 1, seeds.party0),
        Party::new(PartyId::P1, 1, seeds.party1),
    ];
    let (_, s) = client.setup(false).unwrap();
    let zero = OfflineSecrets {
        s: ZqMatrix::zeros(p.lwe.n, 2, m),
        e: ZqMatrix::zeros(2, 2, m),
        e_prime: ZqMatrix::zeros(p.sis.t, 2, m),
    };
    let offline = client.offline_with(&x, &zero).unwrap();
    for (party, msg) in parties.iter_mut().zip(&offline) {
        party.handle_setup(&s).unwrap();
        party.handle_offline(msg).unwrap();
    }
    let [y0, y1] = client.online_begin(0, &y).unwrap();
    let h0 = parties[0].phase1(&y0, None).unwrap();
    let h1 = parties[1].phase1(&y1, None).unwrap();
    let out = client
        .online_finish(
            &parties[0].phase2(&h1).unwrap(),
            &parties[1].phase2(&h0).unwrap(),
        )
        .unwrap();
    assert_eq!(out.to_exact(), exact_product(&x, &y));
}

#[test]
fn online_shares_reconstruct_to_encoded_input() {
    let p = params();
    let spec = p.fp().unwrap();
    let x = random_fixed(&mut test_rng(3), 2, 2, spec);
    let y = random_fixed(&mut test_rng(4), 2, 2, spec);
    let mut s = setup(&p, &x, 3);
    let [y0, y1] = s.client.online_begin(0, &y).unwrap();
    assert_eq!((y0.step, y0.msg_type()), (0, MsgType::YShare));
    let (a, b) = (y0.share().unwrap().clone(), y1.share().unwrap().clone());
    assert_eq!(a.shape(), (2, 2));
    assert_eq!(
        reconst(&SharePair::from_parts(a, b).unwrap()),
        encode_l(&y, p.modulus()).unwrap()
    );
}

#[test]
fn zero_inputs_give_zero_commitment() {
    let p = params();
    let spec = p.fp().unwrap();
    let x = random_fixed(&mut test_rng(5), 2, 2, spec);
    let mut s = setup(&p, &x, 5);
    let y_zero = Message::new(7, 0, Payload::YShare(ZqMatrix::zeros(2, 2, p.modulus())));
    let h = s.parties[0]
        .phase1_with_r(&y_zero, None, ZqMatrix::zeros(p.sis.t, 2, p.modulus()))
        .unwrap();
    assert_eq!(h.msg_type(), MsgType::HShare);
    assert!(h.share().unwrap().is_zero());
    assert_eq!(h.share().unwrap().shape(), (p.lwe.n, 2));
}

#[test]
fn lemma_identity_over_several_steps() {
    let p = params();
    let spec = p.fp().unwrap();
    let mut rng = test_rng(6);
    let x = random_fixed(&mut rng, 2, 2, spec);
    let ys: Vec<_> = (0..5).map(|_| random_fixed(&mut rng, 2, 2, spec)).collect();
    let run = run_direct(&p, &x, &ys, Seed::from_u64(6));
    for ((out, y), r) in run.outputs.iter().zip(&ys).zip(&run.r) {
        assert_eq!(out.z_bar, lemma_rhs(&x, y, &run.secrets, r));
        assert!(r.as_slice().iter().all(|v| (-2..=2).contains(v)));
    }
}

#[test]
fn identity_gain_returns_input() {
    let p = params();
    let spec = p.fp().unwrap();
    let id = FixedPointMatrix::from_mantissas(spec, 2, 2, vec![1 << spec.l(), 0, 0, 1 << spec.l()])
        .unwrap();
    let mut rng = test_rng(7);
    let ys: Vec<_> = (0..3).map(|_| random_fixed(&mut rng, 2, 2, spec)).collect();
    let run = run_direct(&p, &id, &ys, Seed::from_u64(7));
    for (out, y) in run.outputs.iter().zip(&ys) {
        let want: Vec<BigRational> = y.to_rational();
        assert!(max_abs_diff(&out.to_exact(), &want) < epsilon_exact(&p));
    }
}

#[test]
fn zero_gain_output_is_pure_noise_within_bound() {
    let p = params();
    let spec = p.fp().unwrap();
    let zero = FixedPointMatrix::from_mantissas(spec, 2, 2, vec![0; 4]).unwrap();
    let mut rng = test_rng(8);
    let ys: Vec<_> = (0..3).map(|_| random_fixed(&mut rng, 2, 2, spec)).collect();
    let run = run_direct(&p, &zero, &ys, Seed::from_u64(8));
    // 2^(k - 2l + 4) (d2 + t)
    let bound = BigRational::new(
        BigInt::from(p.dims.d2 + p.sis.t) << (spec.k() + 4),
        BigInt::from(1) << (2 * spec.l()),
    );
    for out in &run.outputs {
        let m = out.to_exact().iter().map(|v| v.abs()).max().unwrap();
        assert!(m <= bound);
    }
}

#[test]
fn zero_reference_matches_plain_protocol() {
    let p = params();
    let spec = p.fp().unwrap();
    let mut rng = test_rng(9);
    let x = random_fixed(&mut rng, 2, 2, spec);
    let y = random_fixed(&mut rng, 2, 2, spec);
    let plain = run_direct(&p, &x, std::slice::from_ref(&y), Seed::from_u64(9));

    let seeds = SessionSeeds::from_master(Seed::from_u64(9));
    let mut client = Client::new(p, 1, seeds).unwrap();
    let mut parties = [
        Party::new(PartyId::P0, 1, seeds.party0),
        Party::new(PartyId::P1, 1, seeds.party1),
    ];
    let operator = Operator::new(p, 1, seeds.operator).unwrap();
    let (_, s) = client.setup(true).unwrap();
    let offline = client.offline(&x).unwrap();
    for (party, m) in parties.iter_mut().zip(&offline) {
        party.handle_setup(&s).unwrap();
        party.handle_offline(m).unwrap();
        assert!(party.with_reference());
    }
    let v = FixedPointMatrix::from_mantissas(spec, 2, 2, vec![0; 4]).unwrap();
    let [v0, v1] = operator.share_reference(0, &v).unwrap();
    assert!(!v0.share().unwrap().is_zero());
    let [y0, y1] = client.online_begin(0, &y).unwrap();
    let h0 = parties[0].phase1(&y0, Some(&v0)).unwrap();
    let h1 = parties[1].phase1(&y1, Some(&v1)).unwrap();
    let z0 = parties[0].phase2(&h1).unwrap();
    let z1 = parties[1].phase2(&h0).unwrap();
    assert_eq!(
        client.online_finish(&z0, &z1).unwrap().z_bar,
        plain.outputs[0].z_bar
    );
}

#[test]
fn reference_share_is_added_exactly() {
    let p = params();
    let spec = p.fp().unwrap();
    let mut rng = test_rng(10);
    let x = random_fixed(&mut rng, 2, 2, spec);
    let y = random_fixed(&mut rng, 2, 2, spec);
    let v = random_fixed(&mut rng, 2, 2, spec);
    let plain = run_direct(&p, &x, std::slice::from_ref(&y), Seed::from_u64(10));
    let seeds = SessionSeeds::from_master(Seed::from_u64(10));
    let mut client = Client::new(p, 1, seeds).unwrap();
    let mut parties = [
        Party::new(PartyId::P0, 1, seeds.party0),
        Party::new(PartyId::P1, 1, seeds.party1),
    ];
    let operator = Operator::new(p, 1, seeds.operator).unwrap();
    let (_, s) = client.setup(true).unwrap();
    let offline = client.offline(&x).unwrap();
    for (party, m) in parties.iter_mut().zip(&offline) {
        party.handle_setup(&s).unwrap();
        party.handle_offline(m).unwrap();
    }
    let [v0, v1] = operator.share_reference(0, &v).unwrap();
    let [y0, y1] = client.online_begin(0, &y).unwrap();
    let h0 = parties[0].phase1(&y0, Some(&v0)).unwrap();
    let h1 = parties[1].phase1(&y1, Some(&v1)).unwrap();
    let z = client
        .online_finish(
            &parties[0].phase2(&h1).unwrap(),
            &parties[1].phase2(&h0).unwrap(),
        )
        .unwrap();
    let v_bar = l2pc_core::fixedpoint::encode_2l(&v, p.modulus()).unwrap();
    assert_eq!(z.z_bar, plain.outputs[0].z_bar.checked_add(&v_bar).unwrap());
}

#[test]
fn party_enforces_phase_order_and_replay() {
    let p = params();
    let spec = p.fp().unwrap();
    let mut rng = test_rng(11);
    let x = random_fixed(&mut rng, 2, 2, spec);
    let y = random_fixed(&mut rng, 2, 2, spec);
    let mut s = setup(&p, &x, 11);
    let [y0, y1] = s.client.online_begin(3, &y).unwrap();
    let h1 = s.parties[1].phase1(&y1, None).unwrap();
    // peer commitment before own phase 1
    assert!(s.parties[0].phase2(&h1).is_err());
    s.parties[0].phase1(&y0, None).unwrap();
    // second phase 1 while waiting for the peer
    assert!(s.parties[0].phase1(&y0, None).is_err());
    let z0 = s.parties[0].phase2(&h1).unwrap();
    // replay of a finished step
    assert!(s.parties[0].phase1(&y0, None).is_err());
    let stale = Message::new(7, 2, y0.payload.clone());
    assert!(s.parties[0].phase1(&stale, None).is_err());
    // unexpected reference share in plain mode
    let next = Message::new(7, 4, y0.payload.clone());
    let bogus_v = Message::new(7, 4, Payload::VShare(ZqMatrix::zeros(2, 2, p.modulus())));
    assert!(s.parties[0].phase1(&next, Some(&bogus_v)).is_err());
    // session checks
    let foreign = Message::new(8, 9, y0.payload.clone());
    assert!(matches!(
        s.parties[0].phase1(&foreign, None),
        Err(Error::SessionMismatch { .. })
    ));
    let z_foreign = Message::new(8, 3, z0.payload.clone());
    assert!(matches!(
        s.client.online_finish(&z0, &z_foreign),
        Err(Error::SessionMismatch { .. })
    ));
    // setup and offline cannot be replayed either
    assert!(s.parties[1].handle_offline(&s.offline[1]).is_err());
}

#[test]
fn online_requires_offline() {
    let p = params();
    let spec = p.fp().unwrap();
    let y = random_fixed(&mut test_rng(12), 2, 2, spec);
    let mut client = Client::new(p, 1, SessionSeeds::from_master(Seed::from_u64(12))).unwrap();
    assert!(client.online_begin(0, &y).is_err());
    assert!(client.offline(&y).is_err());
    let mut party = Party::new(PartyId::P0, 1, Seed::from_u64(1));
    let y0 = Message::new(1, 0, Payload::YShare(ZqMatrix::zeros(2, 2, p.modulus())));
    assert!(party.phase1(&y0, None).is_err());
}

#[test]
fn wrong_shapes_rejected() {
    let p = params();
    let spec = p.fp().unwrap();
    let mut client = Client::new(p, 1, SessionSeeds::from_master(Seed::from_u64(13))).unwrap();
    client.setup(false).unwrap();
    let bad = random_fixed(&mut test_rng(13), 3, 2, spec);
    assert!(matches!(
        client.offline(&bad),
        Err(Error::DimensionMismatch { .. })
    ));
    let other_spec = FixedPointSpec::new(spec.k(), spec.l() - 1).unwrap();
    let x = random_fixed(&mut test_rng(13), 2, 2, other_spec);
    assert!(client.offline(&x).is_err());
}

fn opts() -> RunOptions {
    RunOptions {
        session: 3,
        timeout: Duration::from_secs(30),
        ..RunOptions::default()
    }
}

#[test]
fn run_mult_is_one_round_per_step() {
    let p = small_params(32, 48, 128, 1, (-4f64).exp2());
    let spec = p.fp().unwrap();
    let mut rng = test_rng(14);
    let x = random_fixed(&mut rng, 1, 1, spec);
    let ys: Vec<_> = (0..4).map(|_| random_fixed(&mut rng, 1, 1, spec)).collect();
    let run = run_mult(&p, &x, &ys, &Deployment::InProc, Seed::from_u64(14), opts()).unwrap();
    assert_eq!(run.outputs.len(), 4);
    let entries = run.transcript.entries();
    for step in 0..4u64 {
        assert_eq!(transcript_round_count(&entries, step), 1);
        let count = |from, to, t| {
            entries
                .iter()
                .filter(|e| e.step == step && e.from == from && e.to == to && e.msg_type == t)
                .count()
        };
        assert_eq!(count(Role::Party0, Role::Party1, MsgType::HShare), 1);
        assert_eq!(count(Role::Party1, Role::Party0, MsgType::HShare), 1);
        assert_eq!(count(Role::Client, Role::Party0, MsgType::YShare), 1);
        assert_eq!(count(Role::Client, Role::Party1, MsgType::YShare), 1);
        assert_eq!(count(Role::Party0, Role::Client, MsgType::ZShare), 1);
        assert_eq!(count(Role::Party1, Role::Client, MsgType::ZShare), 1);
        let h_bytes = entries
            .iter()
            .find(|e| e.step == step && e.msg_type == MsgType::HShare)
            .unwrap()
            .bytes;
        assert_eq!(h_bytes, 30 + 10 + 16 * p.lwe.n * p.dims.d3);
    }
    // the offline phase carries no rounds
    assert!(entries
        .iter()
        .filter(|e| e.msg_type == MsgType::Offline)
        .all(|e| e.from == Role::Client && e.round == 0));
    for (out, y) in run.outputs.iter().zip(&ys) {
        assert!(max_abs_diff(&out.to_exact(), &exact_product(&x, y)) < epsilon_exact(&p));
    }
}

#[test]
fn run_mult_matches_direct_execution_and_is_deterministic() {
    let p = params();
    let spec = p.fp().unwrap();
    let mut rng = test_rng(15);
    let x = random_fixed(&mut rng, 2, 2, spec);
    let ys: Vec<_> = (0..3).map(|_| random_fixed(&mut rng, 2, 2, spec)).collect();
    let a = run_mult(&p, &x, &ys, &Deployment::InProc, Seed::from_u64(15), opts()).unwrap();
    let b = run_mult(
        &p,
        &x,
        &ys,
        &Deployment::TcpLoopback,
        Seed::from_u64(15),
        opts(),
    )
    .unwrap();
    let direct = run_direct(&p, &x, &ys, Seed::from_u64(15));
    assert_eq!(a.outputs, direct.outputs);
    assert_eq!(a.outputs, b.outputs);
    assert_eq!(a.transcript.canonical(), b.transcript.canonical());
    let c = run_mult(&p, &x, &ys, &Deployment::InProc, Seed::from_u64(16), opts()).unwrap();
    assert_ne!(a.outputs, c.outputs);
}

#[test]
fn run_mult_rejects_invalid_params() {
    let mut p = params();
    p.l = p.k;
    let spec = FixedPointSpec::new(p.k, p.k - 1).unwrap();
    let x = random_fixed(&mut test_rng(17), 2, 2, spec);
    let err = run_mult(&p, &x, &[], &Deployment::InProc, Seed::from_u64(1), opts()).unwrap_err();
    assert!(matches!(err, Error::InvalidParams(_)), "{err}");
}

#[test]
fn theorem_bound_across_small_sweep() {
    for (n, q_bits, t, d, eps) in [
        (16, 40, 64, 1, 1.0),
        (32, 56, 256, 2, (-6f64).exp2()),
        (64, 64, 512, 3, (-8f64).exp2()),
        (16, 100, 2048, 2, (-20f64).exp2()),
    ] {
        let p = ProtocolParams::from_window(n, q_bits, t, Dims::new(d, d, d), eps).unwrap();
        let spec = p.fp().unwrap();
        let mut rng = test_rng(100 + q_bits);
        for trial in 0..5u64 {
            let x = random_fixed(&mut rng, d, d, spec);
            let y = random_fixed(&mut rng, d, d, spec);
            let run = run_direct(&p, &x, std::slice::from_ref(&y), Seed::from_u64(trial));
            let err = max_abs_diff(&run.outputs[0].to_exact(), &exact_product(&x, &y));
            assert!(err < epsilon_exact(&p), "q = 2^{q_bits}, trial {trial}");
        }
    }
}
