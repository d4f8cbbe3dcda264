//! Continuous-time systems, fixed-step RK4 integration, and snapshot-pair
//! data generation.
//!
//! The discrete map x_{t+1} = F(x_t) is realized as `substeps` RK4 steps of
//! size dt/substeps. Everything downstream (data generation, ensembles) is a
//! deterministic function of (config, seed): each initial point gets its own
//! seeded random stream and reductions are order-fixed.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{BoxDomain, Region};
use crate::numeric::{steps_for, substream};

/// Stream tag for domain/set sampling (see `numeric::substream`).
const SAMPLE_STREAM: u64 = 0x5a;

/// Vector field f(x). `out` receives the time-derivative. The input slice
/// may be longer than `out` for parameter-extended systems: the base field
/// reads appended parameter coordinates but only writes state derivatives.
pub type Rhs = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub struct DynamicalSystem {
    pub name: String,
    pub dim: usize,
    pub domain: BoxDomain,
    rhs: Rhs,
}

impl fmt::Debug for DynamicalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicalSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .finish()
    }
}

impl DynamicalSystem {
    pub fn new(name: impl Into<String>, dim: usize, domain: BoxDomain, rhs: Rhs) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidState("state dimension must be >= 1".into()));
        }
        if domain.dim() != dim {
            return Err(Error::InvalidState(format!(
                "domain has {} axes but the system has {} states",
                domain.dim(),
                dim
            )));
        }
        Ok(Self {
            name: name.into(),
            dim,
            domain,
            rhs,
        })
    }

    pub fn eval_rhs(&self, x: &[f64], out: &mut [f64]) {
        (self.rhs)(x, out);
    }

    /// Same vector field restricted to a different box.
    pub fn with_domain(&self, domain: BoxDomain) -> Result<DynamicalSystem> {
        if domain.dim() != self.dim {
            return Err(Error::InvalidState(format!(
                "domain dim {} does not match system dim {}",
                domain.dim(),
                self.dim
            )));
        }
        Ok(DynamicalSystem {
            name: self.name.clone(),
            dim: self.dim,
            domain,
            rhs: Arc::clone(&self.rhs),
        })
    }

    /// Append constant-parameter coordinates: the new state is (x, p) with
    /// dp/dt = 0, and the domain box is extended by the parameter ranges.
    pub fn extend_with_parameters(&self, ranges: &[(f64, f64)]) -> Result<DynamicalSystem> {
        if ranges.is_empty() {
            return Err(Error::InvalidState(
                "at least one parameter range is required".into(),
            ));
        }
        let base_dim = self.dim;
        let base_rhs = Arc::clone(&self.rhs);
        let mut bounds = self.domain.bounds.clone();
        bounds.extend_from_slice(ranges);
        let rhs: Rhs = Arc::new(move |x: &[f64], out: &mut [f64]| {
            let (state_out, param_out) = out.split_at_mut(base_dim);
            base_rhs(x, state_out);
            param_out.fill(0.0);
        });
        DynamicalSystem::new(
            format!("{}+{}p", self.name, ranges.len()),
            base_dim + ranges.len(),
            BoxDomain::new(bounds)?,
            rhs,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }
}

/// Columnwise snapshot data (X, Y) with y_k the image of x_k after exactly
/// one dt step of the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPairs {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub dt: f64,
    /// Trajectories dropped because the integration diverged.
    pub dropped: usize,
}

impl SnapshotPairs {
    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }
}

fn check_finite(t: f64, x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegrationDiverged {
            time: t,
            state: x.to_vec(),
        })
    }
}

fn rk4_step_at(system: &DynamicalSystem, t: f64, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let d = x.len();
    let mut k1 = vec![0.0; d];
    let mut k2 = vec![0.0; d];
    let mut k3 = vec![0.0; d];
    let mut k4 = vec![0.0; d];
    let mut stage = vec![0.0; d];

    system.eval_rhs(x, &mut k1);
    check_finite(t, &k1)?;
    for i in 0..d {
        stage[i] = x[i] + 0.5 * dt * k1[i];
    }
    system.eval_rhs(&stage, &mut k2);
    check_finite(t, &k2)?;
    for i in 0..d {
        stage[i] = x[i] + 0.5 * dt * k2[i];
    }
    system.eval_rhs(&stage, &mut k3);
    check_finite(t, &k3)?;
    for i in 0..d {
        stage[i] = x[i] + dt * k3[i];
    }
    system.eval_rhs(&stage, &mut k4);
    check_finite(t, &k4)?;

    let mut next = vec![0.0; d];
    for i in 0..d {
        next[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    check_finite(t + dt, &next)?;
    Ok(next)
}

/// One classical 4-stage Runge-Kutta step.
pub fn rk4_step(system: &DynamicalSystem, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    assert!(dt > 0.0, "dt must be positive");
    check_finite(0.0, x)?;
    rk4_step_at(system, 0.0, x, dt)
}

/// The time-dt flow map, realized as `substeps` RK4 steps of size
/// dt/substeps.
pub fn flow_map(system: &DynamicalSystem, x: &[f64], dt: f64, substeps: usize) -> Result<Vec<f64>> {
    flow_map_at(system, 0.0, x, dt, substeps)
}

fn flow_map_at(
    system: &DynamicalSystem,
    t0: f64,
    x: &[f64],
    dt: f64,
    substeps: usize,
) -> Result<Vec<f64>> {
    assert!(substeps >= 1, "substeps must be >= 1");
    let h = dt / substeps as f64;
    let mut state = x.to_vec();
    for s in 0..substeps {
        state = rk4_step_at(system, t0 + s as f64 * h, &state, h)?;
    }
    Ok(state)
}

/// Integrate from x0 with sample interval dt until the horizon;
/// states[i] is the state at time i*dt, so the result has
/// floor(horizon/dt) + 1 entries.
pub fn simulate_trajectory(
    system: &DynamicalSystem,
    x0: &[f64],
    dt: f64,
    horizon: f64,
    substeps: usize,
) -> Result<Trajectory> {
    assert!(horizon >= dt, "horizon must cover at least one step");
    check_finite(0.0, x0)?;
    let steps = steps_for(horizon, dt);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    for i in 0..steps {
        let t = i as f64 * dt;
        match flow_map_at(system, t, states.last().unwrap(), dt, substeps) {
            Ok(next) => states.push(next),
            Err(e) => {
                log::warn!("trajectory diverged after {} of {} steps: {}", i, steps, e);
                return Err(e);
            }
        }
    }
    Ok(Trajectory { dt, states })
}

/// n uniform points in the region, deterministic per seed (one independent
/// stream per point, so the result does not depend on iteration order).
pub fn sample_domain(region: &Region, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    assert!(n >= 1);
    region.validate()?;
    Ok((0..n)
        .map(|i| {
            let mut rng = substream(seed, SAMPLE_STREAM, i as u64);
            region.sample_point(&mut rng)
        })
        .collect())
}

/// Simulate every initial point for the horizon and collect all consecutive
/// state pairs columnwise. Diverging trajectories are dropped (counted in
/// the result), never aborting the build.
pub fn build_snapshot_pairs(
    system: &DynamicalSystem,
    points: &[Vec<f64>],
    dt: f64,
    horizon: f64,
    substeps: usize,
) -> Result<SnapshotPairs> {
    let trajectories: Vec<Result<Trajectory>> = points
        .par_iter()
        .map(|x0| simulate_trajectory(system, x0, dt, horizon, substeps))
        .collect();

    let dropped = trajectories.iter().filter(|t| t.is_err()).count();
    if dropped > 0 {
        log::warn!(
            "dropped {dropped} of {} diverging trajectories",
            points.len()
        );
    }
    let kept: Vec<&Trajectory> = trajectories
        .iter()
        .filter_map(|t| t.as_ref().ok())
        .collect();
    let n: usize = kept.iter().map(|t| t.len() - 1).sum();
    if n == 0 {
        return Err(Error::EmptyData);
    }

    let dim = system.dim;
    let mut x = DMatrix::zeros(dim, n);
    let mut y = DMatrix::zeros(dim, n);
    let mut col = 0;
    for traj in &kept {
        for w in traj.states.windows(2) {
            x.column_mut(col).copy_from_slice(&w[0]);
            y.column_mut(col).copy_from_slice(&w[1]);
            col += 1;
        }
    }

    // spot-check that Y really is the one-step image of X
    let checks = [0, n / 2, n - 1];
    for &k in checks.iter() {
        let xk: Vec<f64> = x.column(k).iter().copied().collect();
        let image = flow_map(system, &xk, dt, substeps)?;
        let yk: Vec<f64> = y.column(k).iter().copied().collect();
        if image != yk {
            return Err(Error::InvalidData {
                index: k,
                reason: "snapshot image does not match the one-step flow".into(),
            });
        }
    }

    Ok(SnapshotPairs { x, y, dt, dropped })
}

/// Registered built-in systems.
pub fn builtin_system(name: &str) -> Option<DynamicalSystem> {
    match name {
        "example1" => Some(example1()),
        "toggle_switch" => Some(toggle_switch()),
        "dubins" => Some(dubins()),
        "linear2d" => Some(linear2d()),
        _ => None,
    }
}

pub fn builtin_names() -> &'static [&'static str] {
    &["example1", "toggle_switch", "dubins", "linear2d"]
}

/// Planar system with a stable origin and a cubic velocity term:
/// x1' = x2, x2' = -1.5 x1 - x2 + x2^3/9.
pub fn example1() -> DynamicalSystem {
    let rhs: Rhs = Arc::new(|x, out| {
        out[0] = x[1];
        out[1] = -1.5 * x[0] - x[1] + x[1].powi(3) / 9.0;
    });
    DynamicalSystem::new(
        "example1",
        2,
        BoxDomain::new(vec![(-3.0, 3.0), (-3.0, 3.0)]).unwrap(),
        rhs,
    )
    .unwrap()
}

/// Bistable genetic toggle switch: two mutually repressing proteins,
/// x1' = 1/(1 + x2^3.55) - 0.5 x1, x2' = 1/(1 + x1^3.53) - 0.5 x2.
pub fn toggle_switch() -> DynamicalSystem {
    let rhs: Rhs = Arc::new(|x, out| {
        out[0] = 1.0 / (1.0 + x[1].powf(3.55)) - 0.5 * x[0];
        out[1] = 1.0 / (1.0 + x[0].powf(3.53)) - 0.5 * x[1];
    });
    DynamicalSystem::new(
        "toggle_switch",
        2,
        BoxDomain::new(vec![(0.0, 2.5), (0.0, 2.5)]).unwrap(),
        rhs,
    )
    .unwrap()
}

/// Dubins vehicle under the fixed feedback v = 0.6 cos(th) + 0.6 sin(th),
/// w = (0.6 cos(th) - 0.6 sin(th))/2, already substituted into the
/// kinematics. The heading converges to pi/4 and the terminal velocity
/// approaches (0.6, 0.6).
pub fn dubins() -> DynamicalSystem {
    let rhs: Rhs = Arc::new(|x, out| {
        let (sin_t, cos_t) = x[2].sin_cos();
        let v = 0.6 * cos_t + 0.6 * sin_t;
        out[0] = v * cos_t;
        out[1] = v * sin_t;
        out[2] = 0.5 * (0.6 * cos_t - 0.6 * sin_t);
    });
    DynamicalSystem::new(
        "dubins",
        3,
        BoxDomain::new(vec![(-4.0, 6.0), (-4.0, 6.0), (-1.5, 1.5)]).unwrap(),
        rhs,
    )
    .unwrap()
}

/// Linear benchmark x' = Ax with A = [[0, 1], [-1.5, -1]] (the
/// linearization of example1 at the origin); used by the exactness oracles.
pub fn linear2d() -> DynamicalSystem {
    let rhs: Rhs = Arc::new(|x, out| {
        out[0] = x[1];
        out[1] = -1.5 * x[0] - x[1];
    });
    DynamicalSystem::new(
        "linear2d",
        2,
        BoxDomain::new(vec![(-3.0, 3.0), (-3.0, 3.0)]).unwrap(),
        rhs,
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Region;

    fn zero_field() -> DynamicalSystem {
        let rhs: Rhs = Arc::new(|_, out| out.fill(0.0));
        DynamicalSystem::new(
            "zero",
            2,
            BoxDomain::new(vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap(),
            rhs,
        )
        .unwrap()
    }

    fn decay1d() -> DynamicalSystem {
        let rhs: Rhs = Arc::new(|x, out| out[0] = -x[0]);
        DynamicalSystem::new("decay", 1, BoxDomain::new(vec![(-2.0, 2.0)]).unwrap(), rhs).unwrap()
    }

    #[test]
    fn zero_field_fixes_every_point() {
        let sys = zero_field();
        let x = vec![1.0, 2.0];
        assert_eq!(rk4_step(&sys, &x, 0.2).unwrap(), x);
        assert_eq!(flow_map(&sys, &x, 0.2, 4).unwrap(), x);
    }

    #[test]
    fn rk4_linear_decay_matches_taylor_truncation() {
        // one RK4 step on x' = -x reproduces the degree-4 Taylor
        // polynomial of e^{-dt} exactly
        let sys = decay1d();
        let got = rk4_step(&sys, &[1.0], 0.1).unwrap()[0];
        assert!((got - 0.9048375).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        let sys = decay1d();
        let exact = (-1.0f64).exp();
        let err = |dt: f64| {
            let steps = steps_for(1.0, dt);
            let mut x = vec![1.0];
            for _ in 0..steps {
                x = rk4_step(&sys, &x, dt).unwrap();
            }
            (x[0] - exact).abs()
        };
        let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
        for ratio in [e1 / e2, e2 / e3] {
            assert!((8.0..32.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn flow_semigroup_is_bitwise() {
        // halving dt and substeps together takes the identical
        // arithmetic path
        let sys = example1();
        let x = vec![0.7, -1.2];
        let two = flow_map(&sys, &x, 0.4, 8).unwrap();
        let one = flow_map(&sys, &flow_map(&sys, &x, 0.2, 4).unwrap(), 0.2, 4).unwrap();
        assert_eq!(two, one);
    }

    #[test]
    fn example1_origin_is_fixed() {
        let sys = example1();
        assert_eq!(
            flow_map(&sys, &[0.0, 0.0], 0.2, 10).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn example1_disc_trajectories_stay_finite() {
        let sys = example1();
        let region = Region::Ball {
            center: vec![0.0, 0.0],
            radius: 3.0,
        };
        for x0 in sample_domain(&region, 20, 7).unwrap() {
            let traj = simulate_trajectory(&sys, &x0, 0.2, 10.0, 10).unwrap();
            assert_eq!(traj.len(), 51);
        }
    }

    #[test]
    fn trajectory_lengths_match_protocol() {
        let sys = zero_field();
        let t = simulate_trajectory(&sys, &[0.0, 0.0], 0.2, 10.0, 1).unwrap();
        assert_eq!(t.len(), 51);
        let t = simulate_trajectory(&sys, &[0.0, 0.0], 0.2, 4.0, 1).unwrap();
        assert_eq!(t.len(), 21);
    }

    #[test]
    fn divergence_is_reported_with_time_and_state() {
        let rhs: Rhs = Arc::new(|x, out| out[0] = x[0] * x[0]);
        let sys = DynamicalSystem::new(
            "blowup",
            1,
            BoxDomain::new(vec![(-1.0, 10.0)]).unwrap(),
            rhs,
        )
        .unwrap();
        // x' = x^2 from x = 1 blows up at t = 1
        let err = simulate_trajectory(&sys, &[1.0], 0.5, 10.0, 10).unwrap_err();
        match err {
            Error::IntegrationDiverged { time, .. } => assert!(time >= 0.5),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn dubins_heading_converges_to_quarter_pi() {
        let sys = dubins();
        let target = std::f64::consts::FRAC_PI_4;
        for theta0 in [-1.4, -0.5, 0.3, 1.4] {
            let traj = simulate_trajectory(&sys, &[0.0, 0.0, theta0], 0.2, 30.0, 10).unwrap();
            let thetas: Vec<f64> = traj.states.iter().map(|s| s[2]).collect();
            assert!(
                (thetas.last().unwrap() - target).abs() < 1e-3,
                "theta0 {theta0}"
            );
            // the heading error shrinks monotonically
            for w in thetas.windows(2) {
                assert!((w[1] - target).abs() <= (w[0] - target).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn toggle_switch_equilibria() {
        // the two stable equilibria sit near (0.16, 2.0) and (2.0, 0.16),
        // each reached from the basin its protocol set lies in
        let sys = toggle_switch();
        let a = simulate_trajectory(&sys, &[0.4, 0.8], 0.2, 80.0, 10).unwrap();
        let end_a = a.states.last().unwrap();
        assert!((end_a[0] - 0.16).abs() < 0.01, "x1 -> {}", end_a[0]);
        assert!((end_a[1] - 2.0).abs() < 0.01, "x2 -> {}", end_a[1]);

        let b = simulate_trajectory(&sys, &[1.3, 0.6], 0.2, 80.0, 10).unwrap();
        let end_b = b.states.last().unwrap();
        assert!((end_b[0] - 2.0).abs() < 0.01, "x1 -> {}", end_b[0]);
        assert!((end_b[1] - 0.16).abs() < 0.01, "x2 -> {}", end_b[1]);
    }

    #[test]
    fn snapshot_pairs_count_and_identity_data() {
        let sys = zero_field();
        let points: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64 * 0.1, 0.2]).collect();
        let pairs = build_snapshot_pairs(&sys, &points, 0.2, 1.0, 4).unwrap();
        assert_eq!(pairs.n(), 15); // 3 trajectories x 5 steps
        assert_eq!(pairs.x, pairs.y);
        assert_eq!(pairs.dropped, 0);
    }

    #[test]
    fn snapshot_pairs_single_step() {
        let sys = decay1d();
        let pairs = build_snapshot_pairs(&sys, &[vec![1.0]], 0.2, 0.2, 10).unwrap();
        assert_eq!(pairs.n(), 1);
    }

    #[test]
    fn diverging_initial_points_are_dropped() {
        let rhs: Rhs = Arc::new(|x, out| out[0] = x[0] * x[0]);
        let sys = DynamicalSystem::new(
            "blowup",
            1,
            BoxDomain::new(vec![(-10.0, 10.0)]).unwrap(),
            rhs,
        )
        .unwrap();
        let points = vec![vec![0.1], vec![5.0], vec![-0.2]];
        let pairs = build_snapshot_pairs(&sys, &points, 0.5, 5.0, 10).unwrap();
        assert_eq!(pairs.dropped, 1);
        assert_eq!(pairs.n(), 20); // 2 surviving trajectories x 10 steps
    }

    #[test]
    fn sampling_is_deterministic_and_in_region() {
        let region = Region::Ball {
            center: vec![0.0, 0.0],
            radius: 3.0,
        };
        let a = sample_domain(&region, 300, 42).unwrap();
        let b = sample_domain(&region, 300, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p[0] * p[0] + p[1] * p[1] <= 9.0));
        let c = sample_domain(&region, 1, 42).unwrap();
        assert_eq!(c[0], a[0]);
    }

    #[test]
    fn extended_system_keeps_parameters_bitwise_constant() {
        // parameter-aware field: x' = -p * x with p appended to the state
        let rhs: Rhs = Arc::new(|x, out| out[0] = -x[1] * x[0]);
        let base =
            DynamicalSystem::new("pdecay", 1, BoxDomain::new(vec![(-2.0, 2.0)]).unwrap(), rhs)
                .unwrap();
        let ext = base.extend_with_parameters(&[(0.5, 1.5)]).unwrap();
        assert_eq!(ext.dim, 2);

        let traj = simulate_trajectory(&ext, &[1.0, 0.75], 0.2, 4.0, 10).unwrap();
        for s in &traj.states {
            assert_eq!(s[1].to_bits(), 0.75f64.to_bits());
        }
        // the state coordinate actually decays
        assert!(traj.states.last().unwrap()[0] < 0.1);

        let pairs = build_snapshot_pairs(&ext, &[vec![1.0, 0.75]], 0.2, 2.0, 10).unwrap();
        for k in 0..pairs.n() {
            assert_eq!(pairs.x[(1, k)].to_bits(), pairs.y[(1, k)].to_bits());
        }
    }
}
