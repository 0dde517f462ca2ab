//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use alto::calibration::CalibrationProfile;
use alto::geometry::{
    delta_from_tdoa, oracle_solve, resolve_quadrant, solve_closed_form, solve_closed_form_scaled,
    ClosedFormCoefficients, DeltaDistance, GeometryError, HyperbolaIntercepts, OracleConfig, SearchBox, SensorLayout,
};
use alto::harness::{locate_tap, run_calibrate, run_experiment, run_sampling_sweep, ExperimentKind, ExperimentSpec};
use alto::signal::{pair_tdoa, run_detector, Channel, DetectorConfig, OnsetEvent, Pair, TdoaObservation};
use alto::sim::{arrival_times, RenderConfig, Simulator, SurfaceModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPEED_X: f64 = 45_014.0;
const SPEED_Y: f64 = 37_259.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn exact_observations(
    p: (f64, f64),
    layout: &SensorLayout<f64>,
    surface: &SurfaceModel,
) -> (TdoaObservation<f64>, TdoaObservation<f64>) {
    let t = arrival_times(p, layout, surface);
    (TdoaObservation::new(Pair::LeftRight, t[1] - t[0]), TdoaObservation::new(Pair::TopBottom, t[3] - t[2]))
}

fn round_trip_exactness() -> Outcome {
    let start = Instant::now();
    let layout = SensorLayout::prototype();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for i in 0..1000 {
        let (vx, vy) = if i % 2 == 0 { (SPEED_X, SPEED_Y) } else { (40_000.0, 40_000.0) };
        let surface = SurfaceModel { speed_x: vx, speed_y: vy, ..SurfaceModel::default() };
        let profile = CalibrationProfile::exact(vx, vy, layout);
        let p = (rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
        let (lr, tb) = exact_observations(p, &layout, &surface);
        match locate_tap(&lr, &tb, &profile) {
            Ok(e) => worst = worst.max((e.x - p.0).abs().max((e.y - p.1).abs())),
            Err(_) => failures += 1,
        }
    }
    let elapsed = start.elapsed();
    check(
        failures == 0 && worst <= 1e-6 && elapsed < Duration::from_secs(5),
        format!("1000 taps, max error {worst:.3e} cm, {failures} errors, {:.3} s", elapsed.as_secs_f64()),
    )
}

/// Agreement count and exterior-tap count over 1000 taps drawn uniformly from
/// the square of the given half-width.
fn oracle_agreement(half_width: f64, seed: u64) -> (usize, usize) {
    let layout = SensorLayout::prototype();
    let surface = SurfaceModel::default();
    let k = SPEED_X / SPEED_Y;
    let config = OracleConfig { anisotropy: k, ..OracleConfig::new(SearchBox::square(60.0), 1.0) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut agree, mut exterior) = (0, 0);
    for _ in 0..1000 {
        let p: (f64, f64) = (rng.random_range(-half_width..half_width), rng.random_range(-half_width..half_width));
        if p.0.abs() > layout.half_sep_x || p.1.abs() > layout.half_sep_y {
            exterior += 1;
        }
        let (lr, tb) = exact_observations(p, &layout, &surface);
        let d_lr = delta_from_tdoa(&lr, SPEED_X, &layout).unwrap();
        let d_tb = delta_from_tdoa(&tb, SPEED_Y, &layout).unwrap();
        let intercepts = HyperbolaIntercepts::from_deltas(&d_lr, &d_tb, resolve_quadrant(&lr, &tb));
        let closed = solve_closed_form_scaled(&intercepts, &layout, k);
        let oracle = oracle_solve(&d_lr, &d_tb, &layout, &config);
        if let (Ok(c), Ok(o)) = (closed, oracle) {
            if (c.x - o.x).hypot(c.y - o.y) <= 0.1 {
                agree += 1;
            }
        }
    }
    (agree, exterior)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    // Square around the cross with a 4 cm exterior band on every side.
    let (agree, exterior) = oracle_agreement(30.0, 202);
    let elapsed = start.elapsed();
    // Far-field sample reported for context; agreement there is limited by
    // how flat the residual valley becomes near the axis extensions.
    let (far_agree, far_exterior) = oracle_agreement(45.0, 202);
    check(
        agree >= 990 && elapsed < Duration::from_secs(120),
        format!(
            "{agree}/1000 agree within 0.1 cm in the 60 cm square ({exterior} exterior taps), {:.2} s; \
             90 cm square: {far_agree}/1000 ({far_exterior} exterior)",
            elapsed.as_secs_f64()
        ),
    )
}

fn coefficient_specialization() -> Outcome {
    let c = ClosedFormCoefficients::new(&SensorLayout::new(26.0, 26.0).unwrap());
    let literal_n = [-1.0, 52.0, 52.0, -2704.0, 1.0, -104.0, 3380.0, -35152.0];
    let literal_d = [676.0, -35152.0, 676.0, -35152.0, 456976.0];
    let literal_y = [-1.0, 1.0, 104.0, -52.0, -3380.0, 35152.0];
    let literal_z = [-1.0, 52.0, -676.0];
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut worst: f64 = 0.0;
    for (got, want) in c
        .x_numerator
        .iter()
        .zip(literal_n)
        .chain(c.x_denominator.iter().zip(literal_d))
        .chain(c.y_numerator.iter().zip(literal_y))
        .chain(c.y_denominator.iter().zip(literal_z))
    {
        worst = worst.max(rel(*got, want));
    }
    // the literal expressions, written out term by term
    let x2_literal = |a: f64, b: f64| {
        let num =
            -(-a * a * b + 52.0 * a * a + 52.0 * a * b - 2704.0 * a + b * b * b - 104.0 * b * b + 3380.0 * b - 35152.0);
        let den = -(676.0 * a * a - 35152.0 * a + 676.0 * b * b - 35152.0 * b + 456976.0);
        (a - 26.0) * (a - 26.0) * b * num / den
    };
    let y2_literal = |a: f64, x: f64| {
        (-a.powi(4) + a * a * x * x + 104.0 * a.powi(3) - 52.0 * a * x * x - 3380.0 * a * a + 35152.0 * a)
            / (-a * a + 52.0 * a - 676.0)
    };
    for &(p, q) in &[(16.0, 20.0), (3.5, 11.25), (25.0, 1.0), (7.0, 7.0)] {
        let x2 = c.x_squared(p, q);
        worst = worst.max(rel(x2, x2_literal(p, q)));
        let x = x2.sqrt();
        worst = worst.max(rel(c.y_squared(p, x), y2_literal(p, x)));
    }
    check(worst <= 1e-12, format!("max relative deviation {worst:.3e}"))
}

fn sampling_rate_finding() -> Outcome {
    let spec = ExperimentSpec::default_for(ExperimentKind::SamplingSweep);
    let report = match run_sampling_sweep(&spec) {
        Ok(r) => r,
        Err(e) => return check(false, format!("sweep failed: {e}")),
    };
    let (low, high) = spec.sweep_rates;
    let lo: Vec<_> = report.series(&format!("rate_{low}")).collect();
    let hi: Vec<_> = report.series(&format!("rate_{high}")).collect();
    let better = lo.iter().zip(&hi).filter(|(l, h)| h.tdoa.1 < l.tdoa.1).count();
    let r2_lo = report.fit(&format!("rate_{low}")).map_or(f64::NAN, |f| f.r_squared);
    let r2_hi = report.fit(&format!("rate_{high}")).map_or(f64::NAN, |f| f.r_squared);
    let n = lo.len();
    check(
        n == 10 && better * 10 >= 8 * n && r2_hi > r2_lo,
        format!(
            "{} taps per rate, stddev lower at {better}/{n} locations, r_squared {r2_lo:.6} -> {r2_hi:.6}",
            spec.grid.requested()
        ),
    )
}

fn calibration_recovery() -> Outcome {
    let spec = ExperimentSpec::default_for(ExperimentKind::Calibrate);
    let report = match run_calibrate(&spec) {
        Ok(r) => r,
        Err(e) => return check(false, format!("calibration failed: {e}")),
    };
    let p = report.profile.unwrap();
    let ex = (p.speed_x_cm_per_s - SPEED_X).abs() / SPEED_X;
    let ey = (p.speed_y_cm_per_s - SPEED_Y).abs() / SPEED_Y;
    check(
        ex < 0.01 && ey < 0.01 && p.r2_x >= 0.99 && p.r2_y >= 0.99,
        format!(
            "speed_x {:.1} ({:.3}%), speed_y {:.1} ({:.3}%), r2 {:.5}/{:.5}",
            p.speed_x_cm_per_s,
            100.0 * ex,
            p.speed_y_cm_per_s,
            100.0 * ey,
            p.r2_x,
            p.r2_y
        ),
    )
}

fn accuracy_band() -> Outcome {
    let start = Instant::now();
    let spec = ExperimentSpec::default_for(ExperimentKind::Accuracy2d);
    let noisy = match run_experiment(&spec, None) {
        Ok(r) => r,
        Err(e) => return check(false, format!("noisy run failed: {e}")),
    };
    let mut quiet_spec = spec.clone();
    quiet_spec.scenario.surface = quiet_spec.scenario.surface.noiseless();
    let exact = CalibrationProfile::exact(SPEED_X, SPEED_Y, quiet_spec.scenario.layout);
    let quiet = match run_experiment(&quiet_spec, Some(&exact)) {
        Ok(r) => r,
        Err(e) => return check(false, format!("noiseless run failed: {e}")),
    };
    let elapsed = start.elapsed();
    let nan = (f64::NAN, f64::NAN);
    let (nx, ny) = noisy.mean_abs_error.unwrap_or(nan);
    let (qx, qy) = quiet.mean_abs_error.unwrap_or(nan);
    check(
        nx <= 3.0
            && ny <= 3.0
            && qx <= 0.3
            && qy <= 0.3
            && noisy.solved() == noisy.requested()
            && quiet.solved() == quiet.requested()
            && elapsed < Duration::from_secs(60),
        format!(
            "noise profile MAE x {nx:.3} y {ny:.3} cm ({}/{} solved); noise off MAE x {qx:.4} y {qy:.4} cm; {:.2} s",
            noisy.solved(),
            noisy.requested(),
            elapsed.as_secs_f64()
        ),
    )
}

fn degeneracy_suite() -> Outcome {
    let layout = SensorLayout::prototype();
    let s = layout.half_sep_x;
    let finite = |r: &Result<alto::TapEstimate64, GeometryError>| match r {
        Ok(e) => [e.x, e.y, e.residual_lr, e.residual_tb].iter().all(|v| v.is_finite()),
        Err(_) => true,
    };
    let mut problems = Vec::new();
    let mut expect = |name: &str, ok: bool| {
        if !ok {
            problems.push(name.to_string());
        }
    };

    let a0 = solve_closed_form(&HyperbolaIntercepts::new(0.0, 5.0), &layout);
    expect("a = 0", finite(&a0) && matches!(a0, Ok(e) if e.x == 0.0 && (e.y - 5.0).abs() < 1e-12));
    let b0 = solve_closed_form(&HyperbolaIntercepts::new(-7.0, 0.0), &layout);
    expect("b = 0", finite(&b0) && matches!(b0, Ok(e) if e.y == 0.0 && (e.x + 7.0).abs() < 1e-12));
    let both = solve_closed_form(&HyperbolaIntercepts::new(0.0, 0.0), &layout);
    expect("a = b = 0", matches!(both, Ok(e) if e.x == 0.0 && e.y == 0.0 && finite(&both)));

    for eps in [1e-3, 1e-6, 1e-9, 1e-12] {
        let near = solve_closed_form(&HyperbolaIntercepts::new(s - eps, 3.0), &layout);
        expect(&format!("|a| = s - {eps:e}"), finite(&near));
    }
    let at = solve_closed_form(&HyperbolaIntercepts::new(s, 3.0), &layout);
    expect("|a| = s", matches!(at, Err(GeometryError::InfeasibleIntercept { .. })));
    let beyond = solve_closed_form(&HyperbolaIntercepts::new(-s - 1.0, 3.0), &layout);
    expect("|a| > s", matches!(beyond, Err(GeometryError::InfeasibleIntercept { .. })));

    let too_far = TdoaObservation::new(Pair::LeftRight, 53.0 / SPEED_X);
    let d = delta_from_tdoa(&too_far, SPEED_X, &layout);
    expect("|Δ| > 2s", matches!(d, Err(GeometryError::Infeasible { .. })));
    let ok_tb = TdoaObservation::new(Pair::TopBottom, 0.0);
    let profile = CalibrationProfile::exact(SPEED_X, SPEED_Y, layout);
    expect("locate |Δ| > 2s", matches!(locate_tap(&too_far, &ok_tb, &profile), Err(GeometryError::Infeasible { .. })));
    let nan_obs = TdoaObservation::new(Pair::LeftRight, f64::NAN);
    let r = locate_tap(&nan_obs, &ok_tb, &profile);
    expect("NaN lag", r.is_err() || finite(&r));

    let dl = DeltaDistance::from_axis_offset(Pair::LeftRight, 0.0);
    let dt = DeltaDistance::from_axis_offset(Pair::TopBottom, 0.0);
    let o = oracle_solve(&dl, &dt, &layout, &OracleConfig::new(SearchBox::square(30.0), 1.0));
    expect("oracle at origin", matches!(o, Ok(e) if e.x.abs() < 0.02 && e.y.abs() < 0.02 && finite(&o)));

    check(
        problems.is_empty(),
        if problems.is_empty() {
            "all degenerate inputs handled".into()
        } else {
            format!("failed: {}", problems.join(", "))
        },
    )
}

fn pipeline_invariants() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let rates = [44_100u32, 48_000, 96_000, 192_000];
    let layout = SensorLayout::prototype();
    let (mut quant, mut anti, mut offset, mut single) = (0usize, 0usize, 0usize, 0usize);
    let cases = 10_000;
    for case in 0..cases {
        let rate = rates[rng.random_range(0..rates.len())];
        let detector = DetectorConfig { chunk_size: 1024, sample_rate: rate, ..DetectorConfig::default() };
        let surface = SurfaceModel {
            speed_x: rng.random_range(20_000.0..60_000.0),
            speed_y: rng.random_range(20_000.0..60_000.0),
            noise_stddev: 0.0,
            peak_amplitude: rng.random_range(4_000.0..32_000.0),
            attenuation_per_cm: rng.random_range(0.0..0.01),
            rise_samples: rng.random_range(1..=16),
            decay_constant: rng.random_range(20.0..200.0),
            onset_jitter_stddev: 0.0,
            region_speed: None,
        };
        let render = RenderConfig {
            stream_chunks: 4,
            lead_in_samples: (0, 1024),
            max_device_offset_s: 0.004,
            tap_spacing_chunks: 10,
        };
        let p = (rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
        let sim = Simulator::new(layout, surface, detector, render, case as u64).unwrap();
        let planned = sim.plan(case as u64, p);
        let rendering = sim.synthesize(&planned).unwrap();
        let bound = (2.0 + surface.rise_samples as f64) / rate as f64;
        let t = planned.arrival_times;
        let truth = [t[1] - t[0], t[3] - t[2]];
        let mut observed = [f64::NAN; 2];
        for (i, pair) in [Pair::LeftRight, Pair::TopBottom].into_iter().enumerate() {
            let det = run_detector(rendering.stream(pair).chunks(detector.chunk_size), detector).unwrap();
            if let [d] = det.as_slice() {
                observed[i] = d.observation.tdoa;
            }
        }
        if (0..2).all(|i| (observed[i] - truth[i]).abs() <= bound) {
            quant += 1;
        }

        let shift = [rng.random_range(0u32..400), rng.random_range(0u32..400)];
        let mut moved = planned.clone();
        for (start, samples) in moved.device_start_offsets.iter_mut().zip(shift) {
            *start += samples as f64 / rate as f64;
        }
        let shifted = sim.synthesize(&moved).unwrap();
        let mut same = true;
        for (i, pair) in [Pair::LeftRight, Pair::TopBottom].into_iter().enumerate() {
            let det = run_detector(shifted.stream(pair).chunks(detector.chunk_size), detector).unwrap();
            same &= matches!(det.as_slice(), [d] if d.observation.tdoa == observed[i]);
        }
        if same {
            offset += 1;
        }

        let noisy_surface =
            SurfaceModel { noise_stddev: rng.random_range(0.0..60.0), onset_jitter_stddev: 2.0, ..surface };
        let noisy = Simulator::new(layout, noisy_surface, detector, render, case as u64).unwrap();
        let r = noisy.render_tap(case as u64, p).unwrap();
        let counts = [Pair::LeftRight, Pair::TopBottom]
            .map(|pair| run_detector(r.stream(pair).chunks(detector.chunk_size), detector).unwrap().len());
        if counts == [1, 1] {
            single += 1;
        }

        let pair = if rng.random_bool(0.5) { Pair::LeftRight } else { Pair::TopBottom };
        let [c0, c1] = pair.channels();
        let a = OnsetEvent::new(c0, rng.random_range(0..1u64 << 40), rate);
        let b = OnsetEvent::new(c1, rng.random_range(0..1u64 << 40), rate);
        let ab = pair_tdoa(&a, &b).unwrap();
        let ba = pair_tdoa(&b, &a).unwrap();
        if ab.tdoa == -ba.tdoa && ab.earliest_channel() == ba.earliest_channel() && ab.sensors == [c0, c1] {
            anti += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        [quant, anti, offset, single].iter().all(|&n| n == cases),
        format!(
            "{cases} cases: quantization {quant}, antisymmetry {anti}, device offset {offset}, single emission {single}; {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("round-trip exactness", round_trip_exactness),
        ("oracle equivalence", oracle_equivalence),
        ("coefficient specialization", coefficient_specialization),
        ("sampling-rate finding", sampling_rate_finding),
        ("calibration recovery", calibration_recovery),
        ("2D accuracy band", accuracy_band),
        ("degeneracy suite", degeneracy_suite),
        ("pipeline invariants", pipeline_invariants),
    ];
    let _ = Channel::ALL;
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            failed += 1;
        }
        println!("criterion {} [{name}]: {verdict} - {}", i + 1, outcome.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
