//! Acceptance suite. Prints one `criterion N: PASS|FAIL` line per criterion
//! and exits nonzero if any fails. Runs at the full `paper-sec128` size are
//! enabled with `L2PC_ACCEPTANCE_LONG=1`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use l2pc_core::control::{run_encrypted_loop, ControllerSpec, PlantModel};
use l2pc_core::params::{feasible_window, k_admissible, l_admissible, Dims, ProtocolParams};
use l2pc_core::protocol::runner::{run_mult, Deployment, RunOptions};
use l2pc_core::ring::Modulus;
use l2pc_core::sampling::{sample_uniform_zq, GaussianSpec, GaussianTable, RngStream, Seed};
use l2pc_core::secretshare::{
    reconst, share, share_add, share_mul_left, share_mul_right, share_sub, share_transpose,
};
use l2pc_core::transport::transcript_round_count;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

/// CI-scale runs of the loop must finish within this.
const CI_WALL: Duration = Duration::from_secs(300);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn long_mode() -> bool {
    std::env::var("L2PC_ACCEPTANCE_LONG").is_ok_and(|v| v == "1")
}

fn opts(session: u64) -> RunOptions {
    RunOptions {
        session,
        timeout: Duration::from_secs(600),
        ..RunOptions::default()
    }
}

fn log2_rational(x: &BigRational) -> f64 {
    x.to_f64().map_or(f64::NAN, |v| v.log2())
}

fn lemma_identity() -> Outcome {
    let mut trials = 0;
    for d in [1usize, 2, 4] {
        let p = small_params(64, 40, 256, d, 1.0);
        let spec = p.fp().unwrap();
        let mut rng = test_rng(100 + d as u32);
        for trial in 0..1000u64 {
            let x = random_fixed(&mut rng, d, d, spec);
            let y = random_fixed(&mut rng, d, d, spec);
            let run = run_direct(
                &p,
                &x,
                std::slice::from_ref(&y),
                Seed::from_u64(d as u64 * 100_000 + trial),
            );
            if run.outputs[0].z_bar != lemma_rhs(&x, &y, &run.secrets, &run.r[0]) {
                return outcome(false, format!("mismatch at d={d}, trial {trial}"));
            }
            trials += 1;
        }
    }
    outcome(true, format!("{trials} trials, d in {{1,2,4}}, exact"))
}

/// Worst `log2 ||XY - Z||_max` over `trials` runs of `steps` steps each, or
/// the failing trial.
fn theorem_trials(p: &ProtocolParams, trials: u64, steps: usize, salt: u32) -> Result<f64, String> {
    let spec = p.fp().unwrap();
    let eps = epsilon_exact(p);
    let d = p.dims;
    let mut rng = test_rng(200 + salt);
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..trials {
        let x = random_fixed(&mut rng, d.d1, d.d2, spec);
        let ys: Vec<_> = (0..steps)
            .map(|_| random_fixed(&mut rng, d.d2, d.d3, spec))
            .collect();
        let run = run_direct(p, &x, &ys, Seed::from_u64(((salt as u64) << 32) | trial));
        for (out, y) in run.outputs.iter().zip(&ys) {
            let err = max_abs_diff(&exact_product(&x, y), &out.to_exact());
            if err >= eps {
                return Err(format!(
                    "trial {trial}: error 2^{:.2} >= eps",
                    log2_rational(&err)
                ));
            }
            worst = worst.max(log2_rational(&err));
        }
    }
    Ok(worst)
}

fn theorem_bound() -> Outcome {
    let sweep = [
        (
            "n32/q48/t128/d2",
            small_params(32, 48, 128, 2, (-4f64).exp2()),
        ),
        (
            "n64/q64/t256/d1",
            small_params(64, 64, 256, 1, (-8f64).exp2()),
        ),
        (
            "n64/q80/t512/d3",
            small_params(64, 80, 512, 3, (-10f64).exp2()),
        ),
        (
            "n128/q100/t1024/d(2,3,2)",
            ProtocolParams::from_window(128, 100, 1024, Dims::new(2, 3, 2), (-16f64).exp2())
                .unwrap(),
        ),
        ("ci", ProtocolParams::ci()),
    ];
    let mut parts = Vec::new();
    for (i, (name, p)) in sweep.iter().enumerate() {
        match theorem_trials(p, 20, 3, i as u32) {
            Ok(worst) => parts.push(format!(
                "{name} (k,l)=({},{}) worst 2^{worst:.2} < 2^{:.0}",
                p.k,
                p.l,
                p.epsilon.log2()
            )),
            Err(e) => return outcome(false, format!("{name}: {e}")),
        }
    }
    if long_mode() {
        let p = ProtocolParams::paper_sec128();
        let start = Instant::now();
        match theorem_trials(&p, 1, 1, 99) {
            Ok(worst) => parts.push(format!(
                "paper-sec128 worst 2^{worst:.2} < 2^-10 ({:.0}s)",
                start.elapsed().as_secs_f64()
            )),
            Err(e) => return outcome(false, format!("paper-sec128: {e}")),
        }
    } else {
        parts.push("paper-sec128 skipped (L2PC_ACCEPTANCE_LONG=1)".into());
    }
    outcome(true, parts.join("; "))
}

fn paper_window() -> Outcome {
    let p = ProtocolParams::paper_sec128();
    let w = feasible_window(&p.lwe, p.sis.t, p.dims, p.epsilon);
    let m = p.modulus();
    let k_max = w.k_max.unwrap_or(f64::NAN);
    let l_min = w.l_min(53.5);
    let k_ok = (k_max - 53.5).abs() <= 0.01;
    let l_ok = (l_min - 43.7).abs() <= 0.05;
    let pair_ok = k_admissible(53, m, p.sis.t, p.dims.d2)
        && l_admissible(44, 53, p.dims.d2, p.sis.t, p.epsilon);
    outcome(
        k_ok && l_ok && pair_ok && p.sis.t == 884_736,
        format!(
            "t={} k_max={k_max:.4} (want 53.5+-0.01: {}) l_min(53.5)={l_min:.4} (want 43.7+-0.05: {}) l_min(53)={:.4} (53,44) admissible: {pair_ok}; window \"{}\"",
            p.sis.t,
            if k_ok { "ok" } else { "off" },
            if l_ok { "ok" } else { "off" },
            w.l_min(53.0),
            w.render()
        ),
    )
}

fn control_loop() -> Outcome {
    let eps = BigRational::new(BigInt::from(1), BigInt::from(1) << 10u32);
    let p = ProtocolParams::ci();
    let start = Instant::now();
    let trace = match run_encrypted_loop(
        &p,
        &PlantModel::paper(),
        &ControllerSpec::paper(),
        50,
        &Deployment::InProc,
        Seed::from_u64(4),
        opts(4),
    ) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("ci loop: {e}")),
    };
    let took = start.elapsed();
    let ci_err = trace.max_err_quant();
    let mut pass = trace.records.len() == 51 && ci_err < eps && took < CI_WALL;
    let mut parts = vec![format!(
        "ci (k,l)=({},{}) max err_quant 2^{:.2} < 2^-10 in {:.1}s",
        p.k,
        p.l,
        log2_rational(&ci_err),
        took.as_secs_f64()
    )];
    if long_mode() {
        let p = ProtocolParams::paper_sec128();
        let start = Instant::now();
        match run_encrypted_loop(
            &p,
            &PlantModel::paper(),
            &ControllerSpec::paper(),
            50,
            &Deployment::InProc,
            Seed::from_u64(4),
            opts(5),
        ) {
            Ok(trace) => {
                let q = trace.max_err_quant();
                let t = trace.max_err_true();
                let guard = BigRational::new(BigInt::from(1), BigInt::from(100));
                pass &= q < eps && t < guard;
                parts.push(format!(
                    "paper-sec128 max err_quant 2^{:.2} < 2^-10, max err_true {:.3e} < 1e-2 in {:.0}s",
                    log2_rational(&q),
                    t.to_f64().unwrap_or(f64::NAN),
                    start.elapsed().as_secs_f64()
                ));
                if let Ok(path) = std::env::var("L2PC_ACCEPTANCE_CSV") {
                    let _ = std::fs::write(path, trace.to_csv());
                }
            }
            Err(e) => {
                pass = false;
                parts.push(format!("paper-sec128: {e}"));
            }
        }
    } else {
        parts.push("paper-sec128 skipped (L2PC_ACCEPTANCE_LONG=1)".into());
    }
    outcome(pass, parts.join("; "))
}

fn one_round() -> Outcome {
    let p = small_params(64, 64, 256, 2, (-8f64).exp2());
    let spec = p.fp().unwrap();
    let mut rng = test_rng(500);
    let x = random_fixed(&mut rng, 2, 2, spec);
    let ys: Vec<_> = (0..5).map(|_| random_fixed(&mut rng, 2, 2, spec)).collect();
    let mut parts = Vec::new();
    for (name, dep) in [
        ("inproc", Deployment::InProc),
        ("tcp", Deployment::TcpLoopback),
    ] {
        let run = match run_mult(&p, &x, &ys, &dep, Seed::from_u64(5), opts(50)) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("{name}: {e}")),
        };
        let entries = run.transcript.entries();
        let rounds: Vec<u32> = (0..ys.len() as u64)
            .map(|s| transcript_round_count(&entries, s))
            .collect();
        if rounds.iter().any(|&r| r != 1) {
            return outcome(false, format!("{name}: rounds per step {rounds:?}"));
        }
        parts.push(format!("{name} rounds {rounds:?}"));
    }
    outcome(true, parts.join("; "))
}

fn share_algebra() -> Outcome {
    let mut rng = test_rng(600);
    let mut checks = 0u32;
    let dim = |rng: &mut RngStream| 1 + (rng.next_u128() % 4) as usize;
    for i in 0..10_000u32 {
        let m = Modulus::new(2 + (rng.next_u128() % 126) as u32).unwrap();
        let (r, c, k) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
        let x = sample_uniform_zq(&mut rng, r, c, m);
        let y = sample_uniform_zq(&mut rng, r, c, m);
        let left = sample_uniform_zq(&mut rng, k, r, m);
        let right = sample_uniform_zq(&mut rng, c, k, m);
        let (sx, sy) = (share(&x, &mut rng), share(&y, &mut rng));
        let ok = reconst(&sx) == x
            && reconst(&share_add(&sx, &sy).unwrap()) == x.checked_add(&y).unwrap()
            && reconst(&share_sub(&sx, &sy).unwrap()) == x.checked_sub(&y).unwrap()
            && reconst(&share_mul_left(&left, &sx).unwrap()) == left.matmul(&x).unwrap()
            && reconst(&share_mul_right(&sx, &right).unwrap()) == x.matmul(&right).unwrap()
            && reconst(&share_transpose(&sx)) == x.transpose();
        if !ok {
            return outcome(false, format!("check {i} failed at q=2^{}", m.bits()));
        }
        checks += 1;
    }
    outcome(
        true,
        format!("{checks} randomized checks of add/sub/left/right/transpose, exact"),
    )
}

fn sampler() -> Outcome {
    const N: usize = 10_000_000;
    let spec = GaussianSpec::paper_default();
    let table = GaussianTable::new(spec);
    let b = 32i64;
    let mut counts = vec![0u64; (2 * b + 1) as usize];
    let mut rng = test_rng(700);
    let mut outside = 0u64;
    for _ in 0..N {
        let s = table.sample(&mut rng);
        if s.abs() >= b {
            outside += 1;
        } else {
            counts[(s + b) as usize] += 1;
        }
    }
    // exact truncated rho_sigma on (-32, 32)
    let rho: Vec<f64> = (-b..=b)
        .map(|x| {
            if x.abs() >= b {
                0.0
            } else {
                (-std::f64::consts::PI * (x * x) as f64 / (spec.sigma * spec.sigma)).exp()
            }
        })
        .collect();
    let total: f64 = rho.iter().sum();
    let tv = 0.5
        * rho
            .iter()
            .zip(&counts)
            .map(|(w, &c)| (w / total - c as f64 / N as f64).abs())
            .sum::<f64>()
        + 0.5 * outside as f64 / N as f64;
    outcome(
        tv < 1e-3 && outside == 0,
        format!("TV {tv:.2e} < 1e-3 over {N} samples, {outside} samples with |x| >= 32"),
    )
}

fn transport_equivalence() -> Outcome {
    let p = ProtocolParams::ci();
    let mut csv = Vec::new();
    let start = Instant::now();
    for dep in [Deployment::InProc, Deployment::TcpLoopback] {
        match run_encrypted_loop(
            &p,
            &PlantModel::paper(),
            &ControllerSpec::paper(),
            50,
            &dep,
            Seed::from_u64(8),
            opts(8),
        ) {
            Ok(t) => csv.push(t.to_csv()),
            Err(e) => return outcome(false, format!("{dep:?}: {e}")),
        }
    }
    let took = start.elapsed();
    outcome(
        csv[0] == csv[1] && took < CI_WALL,
        format!(
            "inproc and tcp CSVs {} ({} bytes) in {:.1}s",
            if csv[0] == csv[1] {
                "identical"
            } else {
                "differ"
            },
            csv[0].len(),
            took.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, lemma_identity),
        (2, theorem_bound),
        (3, paper_window),
        (4, control_loop),
        (5, one_round),
        (6, share_algebra),
        (7, sampler),
        (8, transport_equivalence),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        let o = f();
        println!(
            "criterion {n}: {} {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
