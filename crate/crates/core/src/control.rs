//! Encrypted state feedback `u = K x + v`: the plant, the exact and
//! quantized control laws, and a closed loop that evaluates the law through
//! the two-party protocol with the reference `v` shared by an operator.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::fixedpoint::{quantize, FixedPointMatrix, FixedPointSpec, RealMatrix};
use crate::params::ProtocolParams;
use crate::protocol::runner::{Cluster, Deployment, RunOptions};
use crate::sampling::Seed;

/// `x(tau + 1) = A x(tau) + B u(tau)` with initial state `x0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantModel {
    pub a: RealMatrix,
    pub b: RealMatrix,
    pub x0: Vec<f64>,
}

impl PlantModel {
    pub fn new(a: RealMatrix, b: RealMatrix, x0: Vec<f64>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n || b.rows() != n || x0.len() != n {
            return Err(Error::DimensionMismatch {
                op: "plant",
                left: a.shape(),
                right: b.shape(),
            });
        }
        Ok(Self { a, b, x0 })
    }

    /// `A = [1.1 -0.5; 0 0.1]`, `B = [0; 0.5]`, `x0 = [1; -1]`.
    pub fn paper() -> Self {
        Self {
            a: RealMatrix::from_rows(&[vec![1.1, -0.5], vec![0.0, 0.1]]).unwrap(),
            b: RealMatrix::from_rows(&[vec![0.0], vec![0.5]]).unwrap(),
            x0: vec![1.0, -1.0],
        }
    }

    pub fn n_x(&self) -> usize {
        self.a.rows()
    }

    pub fn n_u(&self) -> usize {
        self.b.cols()
    }
}

pub fn plant_step(m: &PlantModel, x: &[f64], u: &[f64]) -> Vec<f64> {
    let ax = m.a.matmul(&RealMatrix::column(x)).expect("state dimension");
    let bu = m.b.matmul(&RealMatrix::column(u)).expect("input dimension");
    ax.add(&bu).expect("same shape").as_slice().to_vec()
}

/// Reference input, the same value on every input channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reference {
    Zero,
    /// `amplitude * sin(omega * tau)`.
    Sine {
        amplitude: f64,
        omega: f64,
    },
}

impl Reference {
    /// `10 sin(0.2 pi tau)`.
    pub fn paper() -> Self {
        Reference::Sine {
            amplitude: 10.0,
            omega: 0.2 * PI,
        }
    }

    pub fn at(&self, tau: u64) -> f64 {
        match *self {
            Reference::Zero => 0.0,
            Reference::Sine { amplitude, omega } => amplitude * (omega * tau as f64).sin(),
        }
    }
}

pub fn reference_signal(tau: u64) -> f64 {
    Reference::paper().at(tau)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerSpec {
    /// `n_u x n_x` gain.
    pub k: RealMatrix,
    pub reference: Reference,
}

impl ControllerSpec {
    /// `K = [3.84 -2.4]` with the sinusoidal reference.
    pub fn paper() -> Self {
        Self {
            k: RealMatrix::from_rows(&[vec![3.84, -2.4]]).unwrap(),
            reference: Reference::paper(),
        }
    }

    pub fn v(&self, tau: u64) -> Vec<f64> {
        vec![self.reference.at(tau); self.k.rows()]
    }
}

/// `u = K x + v` in double precision.
pub fn true_control(c: &ControllerSpec, x: &[f64], tau: u64) -> Vec<f64> {
    let kx = c.k.matmul(&RealMatrix::column(x)).expect("state dimension");
    kx.as_slice()
        .iter()
        .zip(c.v(tau))
        .map(|(a, b)| a + b)
        .collect()
}

/// The quantized law `u~ = K~ x~ + v~` and the quantized operands.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLaw {
    pub k: FixedPointMatrix,
    pub x: FixedPointMatrix,
    pub v: FixedPointMatrix,
    /// `2^(2l) u~`, an exact integer per input channel.
    pub scaled: Vec<BigInt>,
    /// Entries clamped by the quantizer across `K`, `x` and `v`.
    pub saturated: usize,
}

impl QuantizedLaw {
    pub fn exact(&self) -> Vec<BigRational> {
        let den = BigInt::from(1) << (2 * self.k.spec().l());
        self.scaled
            .iter()
            .map(|s| BigRational::new(s.clone(), den.clone()))
            .collect()
    }
}

pub fn quantized_control(
    c: &ControllerSpec,
    x: &[f64],
    tau: u64,
    spec: FixedPointSpec,
) -> QuantizedLaw {
    let k = quantize(&c.k, spec);
    let xq = quantize(&RealMatrix::column(x), spec);
    let vq = quantize(&RealMatrix::column(&c.v(tau)), spec);
    let scaled = (0..k.matrix.rows())
        .map(|i| {
            let kx: BigInt = (0..k.matrix.cols())
                .map(|j| {
                    BigInt::from(k.matrix.mantissa(i, j)) * BigInt::from(xq.matrix.mantissa(j, 0))
                })
                .sum();
            kx + (BigInt::from(vq.matrix.mantissa(i, 0)) << spec.l())
        })
        .collect();
    QuantizedLaw {
        saturated: k.saturated + xq.saturated + vq.saturated,
        k: k.matrix,
        x: xq.matrix,
        v: vq.matrix,
        scaled,
    }
}

/// One row of the loop trace.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub tau: u64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub u_true: Vec<f64>,
    pub u_quant: Vec<BigRational>,
    pub u_enc: Vec<BigRational>,
    /// `||u~ - u^||_max`, exact.
    pub err_quant: BigRational,
    /// `||u - u^||_max` with `u` taken as its exact `f64` value.
    pub err_true: BigRational,
    pub saturated: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopTrace {
    pub records: Vec<StepRecord>,
}

fn max_abs_diff(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .max()
        .unwrap_or_else(BigRational::zero)
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn exact_f64(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite control value")
}

impl LoopTrace {
    pub fn max_err_quant(&self) -> BigRational {
        self.records
            .iter()
            .map(|r| r.err_quant.clone())
            .max()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn max_err_true(&self) -> BigRational {
        self.records
            .iter()
            .map(|r| r.err_true.clone())
            .max()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn saturated(&self) -> usize {
        self.records.iter().map(|r| r.saturated).sum()
    }

    /// `tau,x1,..,v,u_true,u_quant,u_enc,err_quant,err_true`, 17 significant
    /// digits per value. Channels beyond the first get a numeric suffix.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.records.first() else {
            return out;
        };
        let (n_x, n_u) = (first.x.len(), first.v.len());
        let names = |base: &str| -> Vec<String> {
            if n_u == 1 {
                vec![base.to_string()]
            } else {
                (1..=n_u).map(|i| format!("{base}{i}")).collect()
            }
        };
        let mut header = vec!["tau".to_string()];
        header.extend((1..=n_x).map(|i| format!("x{i}")));
        for base in ["v", "u_true", "u_quant", "u_enc"] {
            header.extend(names(base));
        }
        header.push("err_quant".into());
        header.push("err_true".into());
        out.push_str(&header.join(","));
        out.push('\n');
        for r in &self.records {
            let mut row = vec![r.tau.to_string()];
            let f = |v: f64| format!("{v:.16e}");
            row.extend(r.x.iter().copied().map(f));
            row.extend(r.v.iter().copied().map(f));
            row.extend(r.u_true.iter().copied().map(f));
            row.extend(r.u_quant.iter().map(|v| f(to_f64(v))));
            row.extend(r.u_enc.iter().map(|v| f(to_f64(v))));
            row.push(f(to_f64(&r.err_quant)));
            row.push(f(to_f64(&r.err_true)));
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

fn check_dims(params: &ProtocolParams, plant: &PlantModel, c: &ControllerSpec) -> Result<()> {
    let d = params.dims;
    if c.k.shape() != (plant.n_u(), plant.n_x())
        || (d.d1, d.d2, d.d3) != (plant.n_u(), plant.n_x(), 1)
    {
        return Err(Error::DimensionMismatch {
            op: "control dims vs protocol dims",
            left: c.k.shape(),
            right: (d.d1, d.d2),
        });
    }
    Ok(())
}

/// Closed loop with the control law evaluated by the protocol for
/// `tau = 0..=steps`. The plant is driven by the decrypted `u^`.
pub fn run_encrypted_loop(
    params: &ProtocolParams,
    plant: &PlantModel,
    controller: &ControllerSpec,
    steps: u64,
    deployment: &Deployment,
    master: Seed,
    opts: RunOptions,
) -> Result<LoopTrace> {
    let params = params.validated()?;
    check_dims(&params, plant, controller)?;
    let spec = params.fp()?;
    let refs = (0..=steps)
        .map(|tau| quantize(&RealMatrix::column(&controller.v(tau)), spec).matrix)
        .collect();
    let k = quantize(&controller.k, spec).matrix;

    let mut cluster = Cluster::launch(&params, deployment, master, opts)?;
    let run = |cluster: &mut Cluster| -> Result<Vec<StepRecord>> {
        cluster.spawn_operator(refs)?;
        cluster.driver.setup(true)?;
        cluster.driver.offline(&k)?;
        let mut x = plant.x0.clone();
        let mut records = Vec::with_capacity(steps as usize + 1);
        for tau in 0..=steps {
            let law = quantized_control(controller, &x, tau, spec);
            let out = cluster.driver.step(tau, &law.x)?;
            let u_enc = out.to_exact();
            let u_quant = law.exact();
            let u_true = true_control(controller, &x, tau);
            let u_true_exact: Vec<_> = u_true.iter().map(|&v| exact_f64(v)).collect();
            let u_apply: Vec<f64> = u_enc.iter().map(to_f64).collect();
            records.push(StepRecord {
                tau,
                x: x.clone(),
                v: controller.v(tau),
                err_quant: max_abs_diff(&u_quant, &u_enc),
                err_true: max_abs_diff(&u_true_exact, &u_enc),
                u_true,
                u_quant,
                u_enc,
                saturated: law.saturated,
            });
            x = plant_step(plant, &x, &u_apply);
        }
        Ok(records)
    };
    match run(&mut cluster) {
        Ok(records) => {
            cluster.finish()?;
            Ok(LoopTrace { records })
        }
        Err(e) => Err(cluster.abort(e)),
    }
}

/// State trajectory of the plaintext quantized loop (plant driven by `u~`).
pub fn run_plaintext_quantized_loop(
    plant: &PlantModel,
    controller: &ControllerSpec,
    steps: u64,
    spec: FixedPointSpec,
) -> Vec<Vec<f64>> {
    let mut x = plant.x0.clone();
    let mut out = Vec::with_capacity(steps as usize + 1);
    for tau in 0..=steps {
        out.push(x.clone());
        let u: Vec<f64> = quantized_control(controller, &x, tau, spec)
            .exact()
            .iter()
            .map(to_f64)
            .collect();
        x = plant_step(plant, &x, &u);
    }
    out
}

/// Largest state difference between an encrypted trace and a plaintext trajectory.
pub fn state_divergence(trace: &LoopTrace, plain: &[Vec<f64>]) -> f64 {
    trace
        .records
        .iter()
        .zip(plain)
        .flat_map(|(r, p)| r.x.iter().zip(p).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn plant_examples() {
        let p = PlantModel::paper();
        assert_eq!(plant_step(&p, &[0.0, 0.0], &[0.0]), vec![0.0, 0.0]);
        // x(1) for x(0) = [1, -1] and u(0) = 6.24
        approx(&plant_step(&p, &[1.0, -1.0], &[6.24]), &[1.6, 3.02], 1e-12);
        let (x1, x2, u1, u2) = ([0.3, -2.0], [1.5, 0.25], [0.7], [-4.0]);
        let sum = plant_step(&p, &[x1[0] + x2[0], x1[1] + x2[1]], &[u1[0] + u2[0]]);
        let a = plant_step(&p, &x1, &u1);
        let b = plant_step(&p, &x2, &u2);
        approx(&sum, &[a[0] + b[0], a[1] + b[1]], 1e-12);
    }

    #[test]
    fn control_law_examples() {
        let c = ControllerSpec::paper();
        approx(&true_control(&c, &[1.0, -1.0], 0), &[6.24], 1e-12);
        // v(1) = 5 sin(pi / 2) = 5
        let five = ControllerSpec {
            k: c.k.clone(),
            reference: Reference::Sine {
                amplitude: 5.0,
                omega: PI / 2.0,
            },
        };
        approx(&true_control(&five, &[0.0, 0.0], 1), &[5.0], 1e-12);
        assert_eq!(reference_signal(0), 0.0);
        assert!(reference_signal(5).abs() < 1e-12);
        assert!((reference_signal(1) - 5.877852522924732).abs() < 1e-12);
    }

    #[test]
    fn quantized_law_matches_when_exact() {
        // K, x and v all dyadic with few fractional bits
        let c = ControllerSpec {
            k: RealMatrix::from_rows(&[vec![3.75, -2.5]]).unwrap(),
            reference: Reference::Sine {
                amplitude: 0.5,
                omega: PI / 2.0,
            },
        };
        let spec = FixedPointSpec::new(20, 8).unwrap();
        let law = quantized_control(&c, &[1.0, -1.0], 1, spec);
        assert_eq!(law.saturated, 0);
        assert_eq!(law.exact(), vec![exact_f64(6.75)]);
    }

    #[test]
    fn quantized_law_close_to_true_law() {
        let c = ControllerSpec::paper();
        let spec = FixedPointSpec::new(53, 44).unwrap();
        let x = [1.0, -1.0];
        let law = quantized_control(&c, &x, 0, spec);
        let u = exact_f64(true_control(&c, &x, 0)[0]);
        // |K~ - K| <= 2^-45 per entry, x exact, v = 0
        let bound = BigRational::new(BigInt::from(2), BigInt::from(1) << 45u32);
        assert!((&law.exact()[0] - u).abs() <= bound);
        assert_eq!(law.saturated, 0);
    }

    #[test]
    fn saturation_is_counted() {
        let c = ControllerSpec::paper();
        let spec = FixedPointSpec::new(8, 4).unwrap();
        // range is [-8, 8), so x1 = 100 clamps
        assert_eq!(quantized_control(&c, &[100.0, 0.0], 0, spec).saturated, 1);
    }

    #[test]
    fn csv_layout() {
        let trace = LoopTrace {
            records: vec![StepRecord {
                tau: 0,
                x: vec![1.0, -1.0],
                v: vec![0.0],
                u_true: vec![6.24],
                u_quant: vec![exact_f64(6.24)],
                u_enc: vec![exact_f64(6.25)],
                err_quant: exact_f64(0.01),
                err_true: exact_f64(0.01),
                saturated: 0,
            }],
        };
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("tau,x1,x2,v,u_true,u_quant,u_enc,err_quant,err_true")
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "0");
        assert_eq!(row[1], "1.0000000000000000e0");
        assert_eq!(row[4].parse::<f64>().unwrap(), 6.24);
    }
}
