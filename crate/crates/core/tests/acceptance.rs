//! End-to-end acceptance suite: eight numbered criteria covering accuracy
//! against Monte Carlo, reachability geometry, speed, operator duality,
//! analytic oracles, and statistical sanity. Each test prints one
//! PASS/FAIL line with its measured figures (visible with --nocapture).
//!
//! The criteria share fitted models and comparison runs through lazy
//! statics, and serialize on a mutex so wall-clock measurements are not
//! distorted by concurrent work.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use koopman_uq::commands::{
    cmd_benchmark, load_model_for, moment_group_sums, reach_with, SPEEDUP_BOUND,
};
use koopman_uq::config::{self, ExperimentConfig};
use koopman_uq::dictionary::{gram_matrix, monomial_dictionary};
use koopman_uq::dynamics::{
    build_snapshot_pairs, builtin_system, flow_map, sample_domain, DynamicalSystem, Rhs,
};
use koopman_uq::error::Result;
use koopman_uq::geometry::{BoxDomain, Region};
use koopman_uq::montecarlo::{
    compare_pipelines, empirical_moments_se, ensemble_simulate, marginal_projection,
    sample_uncertainty_set, ComparisonReport,
};
use koopman_uq::numeric::substream;
use koopman_uq::operator::{edmd_fit, save_operator, OperatorModel};
use koopman_uq::quadrature::QuadratureSpec;
use koopman_uq::reference::{expm, spectral_distance};
use koopman_uq::uncertainty::{
    initial_moments, moments_to_coefficients, MomentVector, UncertaintySet,
};
use koopman_uq::Registry;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn registry() -> &'static Registry {
    static R: OnceLock<Registry> = OnceLock::new();
    R.get_or_init(Registry::with_builtins)
}

struct Fitted {
    model: OperatorModel,
    system: DynamicalSystem,
}

fn fit(config: &ExperimentConfig) -> Fitted {
    let (model, system) = koopman_uq::commands::fit_model(config, registry()).unwrap();
    Fitted { model, system }
}

fn ex1() -> &'static Fitted {
    static F: OnceLock<Fitted> = OnceLock::new();
    F.get_or_init(|| fit(&config::example1()))
}

fn ex2() -> &'static Fitted {
    static F: OnceLock<Fitted> = OnceLock::new();
    F.get_or_init(|| fit(&config::example2a()))
}

fn ex3() -> &'static Fitted {
    static F: OnceLock<Fitted> = OnceLock::new();
    F.get_or_init(|| fit(&config::example3()))
}

type Comparison = (ComparisonReport, Vec<MomentVector>, Vec<MomentVector>);

fn comparison(config: &ExperimentConfig, fitted: &Fitted) -> Result<Comparison> {
    let set = UncertaintySet::new(config.uncertainty_set.clone())?;
    compare_pipelines(
        &fitted.system,
        &fitted.model,
        &set,
        config.propagation.steps,
        config.mc.n_samples,
        config.mc.seed,
        &config.quadrature,
        config.data.substeps,
        &config.name,
    )
}

struct Reports {
    ex1: Comparison,
    /// Computed through a saved-then-reloaded operator file shared by both
    /// toggle-switch sets.
    ex2a: Comparison,
    ex2b: Comparison,
    ex3: Comparison,
}

fn reports() -> &'static Reports {
    static R: OnceLock<Reports> = OnceLock::new();
    R.get_or_init(|| {
        let config_a = config::example2a();
        let config_b = config::example2b();
        let fitted2 = ex2();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("operator.json");
        save_operator(&fitted2.model, &path).unwrap();
        let loaded = Fitted {
            model: load_model_for(&path, &config_a, &fitted2.system).unwrap(),
            system: fitted2.system.clone(),
        };
        Reports {
            ex1: comparison(&config::example1(), ex1()).unwrap(),
            ex2a: comparison(&config_a, &loaded).unwrap(),
            ex2b: comparison(&config_b, &loaded).unwrap(),
            ex3: comparison(&config::example3(), ex3()).unwrap(),
        }
    })
}

#[test]
fn criterion_1_planar_system_accuracy_and_runtime() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let outcome = cmd_benchmark("example1", registry(), dir.path()).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = outcome.pass && elapsed < 60.0;
    println!(
        "criterion 1 [{}]: example1 fit + 50-step propagation in {elapsed:.1} s; {}",
        verdict(ok),
        outcome.lines.join("; ")
    );
    assert!(ok, "{:?} (elapsed {elapsed:.1} s)", outcome.lines);
}

#[test]
fn criterion_2_bistable_sets_share_one_operator_file() {
    let _g = serial();
    let r = reports();
    let dict = &ex2().model.dictionary;
    let bound = koopman_uq::commands::ERROR_BOUND_EXAMPLE2;
    let err_a = r.ex2a.0.max_error;
    let err_b = r.ex2b.0.max_error;

    // grow/decay is a statement about the true moments, so it is read off
    // the sampled reference; the group that dies toward zero sits below the
    // estimator's noise floor, where signed drift is meaningless
    let (a_x1_0, a_x2_0) = moment_group_sums(dict, &r.ex2a.2[0]);
    let (a_x1_t, a_x2_t) = moment_group_sums(dict, r.ex2a.2.last().unwrap());
    let (b_x1_0, b_x2_0) = moment_group_sums(dict, &r.ex2b.2[0]);
    let (b_x1_t, b_x2_t) = moment_group_sums(dict, r.ex2b.2.last().unwrap());
    let drift = a_x2_t > a_x2_0 && a_x1_t < a_x1_0 && b_x1_t > b_x1_0 && b_x2_t < b_x2_0;

    // the estimated moments must reproduce the headline flip: which group
    // dominates at the end of the run switches between the two sets
    let (a_ox1, a_ox2) = moment_group_sums(dict, r.ex2a.1.last().unwrap());
    let (b_ox1, b_ox2) = moment_group_sums(dict, r.ex2b.1.last().unwrap());
    let flip = a_ox2 > a_ox1 && b_ox1 > b_ox2;

    let ok = err_a <= bound && err_b <= bound && drift && flip;
    println!(
        "criterion 2 [{}]: max errors {err_a:.4} / {err_b:.4} (bound {bound}); \
         reference disc groups x1 {a_x1_0:.3}->{a_x1_t:.3}, x2 {a_x2_0:.3}->{a_x2_t:.3}; \
         reference square groups x1 {b_x1_0:.3}->{b_x1_t:.3}, x2 {b_x2_0:.3}->{b_x2_t:.3}; \
         estimated final dominance {a_ox2:.3} over {a_ox1:.3} (disc), \
         {b_ox1:.3} over {b_ox2:.3} (square)",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_3_vehicle_supports_cover_samples_with_trends() {
    let _g = serial();
    let fitted = ex3();
    let dir = tempfile::tempdir().unwrap();
    let reach = reach_with(
        &config::example3(),
        &fitted.system,
        &fitted.model,
        dir.path(),
    )
    .unwrap();
    // superset is the estimator's promise; the width trends describe the
    // true reachable set, so they are read off the sampled reference
    let t = &reach.trends_mc;
    let trends = t.theta_shrinks && t.x_grows && t.y_grows && t.y_covers_x_finally;
    let ok = reach.superset && trends;
    let widths: Vec<String> = reach
        .supports_mc
        .iter()
        .map(|s| format!("t={} axis{} width {:.2}", s.t, s.axis, s.hi - s.lo))
        .collect();
    println!(
        "criterion 3 [{}]: estimated supports cover sample ranges: {}, sample-range trends {:?}; {}",
        verdict(ok),
        reach.superset,
        t,
        widths.join(", ")
    );
    assert!(ok);
}

#[test]
fn criterion_4_operator_propagation_is_faster_than_sampling() {
    let _g = serial();
    let r = reports();
    let all = [
        ("example1", &r.ex1.0),
        ("example2a", &r.ex2a.0),
        ("example2b", &r.ex2b.0),
        ("example3", &r.ex3.0),
    ];
    let ok = all.iter().all(|(_, rep)| rep.prop_speedup >= SPEEDUP_BOUND);
    let detail: Vec<String> = all
        .iter()
        .map(|(name, rep)| format!("{name} {:.0}x", rep.prop_speedup))
        .collect();
    println!(
        "criterion 4 [{}]: propagation vs MC-phase speedups {} (floor {SPEEDUP_BOUND}x)",
        verdict(ok),
        detail.join(", ")
    );
    assert!(ok, "{detail:?}");
}

#[test]
fn criterion_5_transfer_operator_duality() {
    let _g = serial();
    let mut worst_resid = 0.0f64;
    let mut worst_spec = 0.0f64;
    let mut worst_bilinear = 0.0f64;
    for fitted in [ex1(), ex2(), ex3()] {
        let model = &fitted.model;
        let lam = model.gram.regularized();
        let target = model.k.transpose() * lam;
        let resid = (lam * &model.p - &target).norm() / target.norm();
        worst_resid = worst_resid.max(resid);

        worst_spec = worst_spec.max(spectral_distance(&model.p, &model.k));

        let k_dim = model.k.nrows();
        let scale = model.k.norm() * lam.norm();
        for i in 0..100u64 {
            let mut rng = substream(0x5eed_ab1e, 0x33, i);
            let a = DVector::from_fn(k_dim, |_, _| rng.gen_range(-1.0..1.0));
            let b = DVector::from_fn(k_dim, |_, _| rng.gen_range(-1.0..1.0));
            let lhs = (&model.k * &b).dot(&(lam * &a));
            let rhs = b.dot(&(lam * (&model.p * &a)));
            let rel = (lhs - rhs).abs() / (scale * a.norm() * b.norm());
            worst_bilinear = worst_bilinear.max(rel);
        }
    }
    let ok = worst_resid <= 1e-9 && worst_spec <= 1e-8 && worst_bilinear <= 1e-8;
    println!(
        "criterion 5 [{}]: defining residual {worst_resid:.2e} (<= 1e-9), \
         spectra gap {worst_spec:.2e} (<= 1e-8), bilinear pairing {worst_bilinear:.2e} (<= 1e-8)",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_6_linear_system_matches_matrix_exponential() {
    let _g = serial();
    let system = builtin_system("linear2d").unwrap();
    let dict = monomial_dictionary(2, 1, &[1.0, 1.0]).unwrap();
    let points = sample_domain(
        &Region::Box {
            bounds: system.domain.bounds.clone(),
        },
        10_000,
        6,
    )
    .unwrap();
    let dt = 0.2;
    let pairs = build_snapshot_pairs(&system, &points, dt, dt, 100).unwrap();
    let gram = gram_matrix(&dict, &system.domain, &QuadratureSpec::default()).unwrap();
    let model = edmd_fit(&pairs, &dict, &gram).unwrap();

    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.5, -1.0]);
    let truth = expm(&(dt * a));
    let kt = model.k.transpose();
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            worst = worst.max((kt[(i + 1, j + 1)] - truth[(i, j)]).abs());
        }
    }
    let ok = worst <= 1e-6;
    println!(
        "criterion 6 [{}]: learned one-step matrix vs matrix exponential, \
         max entry gap {worst:.2e} (<= 1e-6)",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_7_conservation_and_moment_consistency() {
    let _g = serial();

    // identity data -> identity operator
    let rhs: Rhs = std::sync::Arc::new(|_, out| out.fill(0.0));
    let frozen = DynamicalSystem::new(
        "frozen",
        2,
        BoxDomain::new(vec![(-3.0, 3.0), (-3.0, 3.0)]).unwrap(),
        rhs,
    )
    .unwrap();
    let points = sample_domain(
        &Region::Box {
            bounds: frozen.domain.bounds.clone(),
        },
        200,
        7,
    )
    .unwrap();
    let pairs = build_snapshot_pairs(&frozen, &points, 0.2, 0.2, 1).unwrap();
    let dict = monomial_dictionary(2, 2, &[3.0, 3.0]).unwrap();
    let gram = gram_matrix(&dict, &frozen.domain, &QuadratureSpec::default()).unwrap();
    let identity_fit = edmd_fit(&pairs, &dict, &gram).unwrap();
    let eye = DMatrix::<f64>::identity(dict.k(), dict.k());
    let identity_gap = (&identity_fit.k - &eye).amax();

    // the constant function is (approximately) invariant on real fits
    let mut constant_drift = 0.0f64;
    for fitted in [ex1(), ex2()] {
        let k_dim = fitted.model.k_dim();
        let mut e0 = DVector::zeros(k_dim);
        e0[0] = 1.0;
        constant_drift = constant_drift.max((&fitted.model.k * &e0 - &e0).norm());
    }

    // moment -> coefficient round trip and the two propagation routes
    let presets = [
        (config::example1(), ex1()),
        (config::example2a(), ex2()),
        (config::example2b(), ex2()),
        (config::example3(), ex3()),
    ];
    let mut round_trip = 0.0f64;
    let mut square_gap = 0.0f64;
    for (config, fitted) in &presets {
        let model = &fitted.model;
        let set = UncertaintySet::new(config.uncertainty_set.clone()).unwrap();
        let m0 = initial_moments(&set, &model.dictionary, &config.quadrature).unwrap();
        let w = moments_to_coefficients(&model.gram, &m0).unwrap();
        round_trip = round_trip.max((model.gram.regularized() * &w - &m0.m).norm() / m0.m.norm());

        let m1 = MomentVector {
            t: m0.t + model.meta.dt,
            m: model.k.tr_mul(&m0.m),
        };
        let lhs = moments_to_coefficients(&model.gram, &m1).unwrap();
        let rhs = &model.p * &w;
        square_gap = square_gap.max((&lhs - &rhs).norm() / lhs.norm().max(1e-300));
    }

    let ok =
        identity_gap <= 1e-10 && constant_drift <= 0.05 && round_trip <= 1e-8 && square_gap <= 1e-8;
    println!(
        "criterion 7 [{}]: identity-fit gap {identity_gap:.2e} (<= 1e-10), \
         constant drift {constant_drift:.3} (<= 0.05), moment round trip {round_trip:.2e} \
         (<= 1e-8), propagation-route gap {square_gap:.2e} (<= 1e-8)",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_8_statistical_oracles() {
    let _g = serial();

    // quadrature initial moments sit inside the sampling error band
    let presets = [
        (config::example1(), ex1()),
        (config::example2a(), ex2()),
        (config::example2b(), ex2()),
        (config::example3(), ex3()),
    ];
    let mut worst_z = 0.0f64;
    for (config, fitted) in &presets {
        let dict = &fitted.model.dictionary;
        let set = UncertaintySet::new(config.uncertainty_set.clone()).unwrap();
        let exact = initial_moments(&set, dict, &config.quadrature).unwrap();
        let samples = sample_uncertainty_set(&set, 20_000, config.mc.seed).unwrap();
        let (mean, se) = empirical_moments_se(&samples, dict).unwrap();
        for k in 0..dict.k() {
            let z = (mean.m[k] - exact.m[k]).abs() / se[k].max(1e-15);
            worst_z = worst_z.max(z);
        }
    }
    let moments_ok = worst_z <= 3.0;

    // smoothed marginals of a propagated ensemble integrate to ~1
    let config = config::example1();
    let set = UncertaintySet::new(config.uncertainty_set.clone()).unwrap();
    let points = sample_uncertainty_set(&set, config.mc.n_samples, config.mc.seed).unwrap();
    let ensemble = ensemble_simulate(
        &ex1().system,
        &points,
        config.data.dt,
        config.propagation.steps as f64 * config.data.dt,
        config.data.substeps,
    )
    .unwrap();
    let last = ensemble.snapshots.last().unwrap();
    let mut masses = Vec::new();
    for axis in 0..2 {
        masses.push(marginal_projection(last, axis, 200).unwrap().integral());
    }
    let kde_ok = masses.iter().all(|m| (0.98..=1.02).contains(m));

    // one-step integrator shows 4th-order error decay on exp(-t)
    let rhs: Rhs = std::sync::Arc::new(|x, out| out[0] = -x[0]);
    let scalar =
        DynamicalSystem::new("decay", 1, BoxDomain::new(vec![(-2.0, 2.0)]).unwrap(), rhs).unwrap();
    let exact = (-1.0f64).exp();
    let err = |substeps: usize| -> f64 {
        (flow_map(&scalar, &[1.0], 1.0, substeps).unwrap()[0] - exact).abs()
    };
    let (e8, e16, e32) = (err(8), err(16), err(32));
    let ratios = [e8 / e16, e16 / e32];
    let rk4_ok = ratios.iter().all(|r| (12.0..=20.0).contains(r));

    let ok = moments_ok && kde_ok && rk4_ok;
    println!(
        "criterion 8 [{}]: worst moment z-score {worst_z:.2} (<= 3), \
         marginal masses {masses:?} (in [0.98, 1.02]), \
         integrator error ratios {ratios:?} (in [12, 20])",
        verdict(ok)
    );
    assert!(ok);
}
