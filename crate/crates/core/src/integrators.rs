//! Fixed-step explicit Runge-Kutta integrators.
//!
//! Three methods are provided: forward Euler (order 1), the classical
//! four-stage method (order 4), and the Dormand-Prince order-8 method
//! (12 propagation stages, the tableau underlying the well-known "853"
//! solver, used here with fixed steps and the order-8 weights only).
//!
//! All integration is deterministic: identical inputs produce bitwise
//! identical trajectories, and integrating an interval in one call equals
//! integrating its sub-intervals in sequence when the step sizes match.

use thiserror::Error;

/// Any state component beyond this magnitude (or any non-finite value)
/// aborts the step as a blow-up.
pub const BLOWUP_LIMIT: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum IntegrationError {
    #[error("solution blew up at t = {t}: component {component} = {value}")]
    BlowUp {
        t: f64,
        component: usize,
        value: f64,
    },
    #[error("step count must be at least 1")]
    ZeroSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RkMethod {
    Rk1,
    Rk4,
    Rk8,
}

impl RkMethod {
    pub fn order(self) -> u32 {
        match self {
            RkMethod::Rk1 => 1,
            RkMethod::Rk4 => 4,
            RkMethod::Rk8 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RkMethod::Rk1 => "rk1",
            RkMethod::Rk4 => "rk4",
            RkMethod::Rk8 => "rk8",
        }
    }
}

impl std::str::FromStr for RkMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rk1" => Ok(RkMethod::Rk1),
            "rk4" => Ok(RkMethod::Rk4),
            "rk8" => Ok(RkMethod::Rk8),
            other => Err(format!(
                "unknown integrator '{other}' (expected rk1, rk4 or rk8)"
            )),
        }
    }
}

/// An integrator choice plus its fixed step count per time interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SolverSpec {
    pub method: RkMethod,
    pub steps: u32,
}

impl SolverSpec {
    pub fn new(method: RkMethod, steps: u32) -> Self {
        Self { method, steps }
    }
}

pub(crate) const RK8_STAGES: usize = 12;
#[rustfmt::skip]
pub(crate) const RK8_C: [f64; RK8_STAGES] = [
    0.0, 0.05260015195876773, 0.0789002279381516, 0.1183503419072274,
    0.2816496580927726, 0.3333333333333333, 0.25, 0.3076923076923077,
    0.6512820512820513, 0.6, 0.8571428571428571, 1.0,
];
#[rustfmt::skip]
pub(crate) const RK8_B: [f64; RK8_STAGES] = [
    0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409,
    1.8915178993145003, -5.801203960010585, 0.3111643669578199,
    -0.1521609496625161, 0.20136540080403034, 0.04471061572777259,
];
#[rustfmt::skip]
pub(crate) const RK8_A: [[f64; RK8_STAGES]; RK8_STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996, 0.0, 0.0, 0.0, 0.0],
    [0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627, 0.0, 0.0, 0.0],
    [-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196, 0.0, 0.0],
    [2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636, 0.0],
];

/// One explicit Runge-Kutta step of size `dt` from `(t, state)`.
///
/// Every intermediate stage state and the final result are screened for
/// blow-up ([`BLOWUP_LIMIT`]).
pub fn rk_step<F>(
    method: RkMethod,
    rhs: &F,
    t: f64,
    dt: f64,
    state: &[f64],
) -> Result<Vec<f64>, IntegrationError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let d = state.len();
    let check = |u: &[f64], at: f64| -> Result<(), IntegrationError> {
        for (i, &v) in u.iter().enumerate() {
            if !v.is_finite() || v.abs() > BLOWUP_LIMIT {
                return Err(IntegrationError::BlowUp {
                    t: at,
                    component: i,
                    value: v,
                });
            }
        }
        Ok(())
    };
    check(state, t)?;
    match method {
        RkMethod::Rk1 => {
            let mut k = vec![0.0; d];
            rhs(t, state, &mut k);
            let out: Vec<f64> = state.iter().zip(&k).map(|(u, ki)| u + dt * ki).collect();
            check(&out, t + dt)?;
            Ok(out)
        }
        RkMethod::Rk4 => {
            let mut k1 = vec![0.0; d];
            let mut k2 = vec![0.0; d];
            let mut k3 = vec![0.0; d];
            let mut k4 = vec![0.0; d];
            let mut tmp = vec![0.0; d];
            rhs(t, state, &mut k1);
            for i in 0..d {
                tmp[i] = state[i] + 0.5 * dt * k1[i];
            }
            check(&tmp, t)?;
            rhs(t + 0.5 * dt, &tmp, &mut k2);
            for i in 0..d {
                tmp[i] = state[i] + 0.5 * dt * k2[i];
            }
            check(&tmp, t)?;
            rhs(t + 0.5 * dt, &tmp, &mut k3);
            for i in 0..d {
                tmp[i] = state[i] + dt * k3[i];
            }
            check(&tmp, t)?;
            rhs(t + dt, &tmp, &mut k4);
            let out: Vec<f64> = (0..d)
                .map(|i| state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect();
            check(&out, t + dt)?;
            Ok(out)
        }
        RkMethod::Rk8 => {
            let mut ks = vec![vec![0.0; d]; RK8_STAGES];
            let mut tmp = vec![0.0; d];
            for s in 0..RK8_STAGES {
                tmp.copy_from_slice(state);
                for (j, kj) in ks.iter().enumerate().take(s) {
                    let a = RK8_A[s][j];
                    if a == 0.0 {
                        continue;
                    }
                    for i in 0..d {
                        tmp[i] += dt * a * kj[i];
                    }
                }
                check(&tmp, t + RK8_C[s] * dt)?;
                let (head, tail) = ks.split_at_mut(s);
                let _ = head;
                rhs(t + RK8_C[s] * dt, &tmp, &mut tail[0]);
            }
            let mut out = state.to_vec();
            for (j, kj) in ks.iter().enumerate() {
                let b = RK8_B[j];
                if b == 0.0 {
                    continue;
                }
                for i in 0..d {
                    out[i] += dt * b * kj[i];
                }
            }
            check(&out, t + dt)?;
            Ok(out)
        }
    }
}

/// Integrates `state` from `t0` to `t1` with `spec.steps` equal steps.
pub fn integrate_interval<F>(
    spec: SolverSpec,
    rhs: &F,
    t0: f64,
    t1: f64,
    state: &[f64],
) -> Result<Vec<f64>, IntegrationError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if spec.steps == 0 {
        return Err(IntegrationError::ZeroSteps);
    }
    let dt = (t1 - t0) / spec.steps as f64;
    let mut u = state.to_vec();
    for s in 0..spec.steps {
        let t = t0 + s as f64 * dt;
        u = rk_step(spec.method, rhs, t, dt, &u)?;
    }
    Ok(u)
}

/// Least-squares slope of log2(error) against log2(steps); the negated slope
/// is the observed convergence order.
pub fn observed_order(steps: &[u32], errors: &[f64]) -> f64 {
    assert_eq!(steps.len(), errors.len());
    let xs: Vec<f64> = steps.iter().map(|&s| (s as f64).log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|&e| e.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    -(num / den)
}
