//! End-to-end acceptance checks. Runs as a plain binary (no libtest harness)
//! so that the criteria execute one after another — the timing check is not
//! disturbed by its neighbours — and each prints a single PASS/FAIL line.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use cmm_core::error_models::{propagate_common_biases, CommonBiasVector, NoiseConfig};
use cmm_core::filter::{measurement_geometry, FilterConfig, RangeModel, Rbpf, VehicleEkfState, VehicleInit};
use cmm_core::map_constraints::{containment_probability, Lane, LaneMap, Polygon};
use cmm_core::multipath::{dll_discriminator_zero, multipath_range_error, DllModel};
use cmm_core::rng::stream;
use cmm_core::{SatelliteId, VehicleId, SPEED_OF_LIGHT};
use cmm_sim::metrics::{compute_summary, mean_signed_error, MetricsRecord, Summary};
use cmm_sim::runner::{run_algorithm, simulated_bias_prior, Algorithm};
use cmm_sim::scenario::{load_scenario, Scenario, Trajectory, VehicleSpec};
use cmm_sim::simulate::{simulate_log, MeasurementLog};
use nalgebra::{DMatrix, DVector, Matrix2, Matrix6, Vector2, Vector3, Vector6};
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Per-algorithm runs over [`SEEDS`] plus the wall time they took.
struct Batch {
    runs: BTreeMap<Algorithm, Vec<Vec<MetricsRecord>>>,
    elapsed: Duration,
}

impl Batch {
    fn summary(&self, algo: Algorithm) -> Summary {
        compute_summary(&self.runs[&algo]).expect("runs have records")
    }
}

fn run_batch(scn: &Scenario, algos: &[Algorithm]) -> Batch {
    let started = Instant::now();
    let mut runs: BTreeMap<Algorithm, Vec<Vec<MetricsRecord>>> = BTreeMap::new();
    for seed in SEEDS {
        let log = simulate_log(scn, seed).expect("simulation");
        let prior = simulated_bias_prior(&log);
        for &a in algos {
            let records = run_algorithm(scn, &log, a, &prior, seed).expect("run");
            runs.entry(a).or_default().push(records);
        }
    }
    Batch {
        runs,
        elapsed: started.elapsed(),
    }
}

fn reference_batch() -> &'static Batch {
    static BATCH: OnceLock<Batch> = OnceLock::new();
    BATCH.get_or_init(|| {
        let scn = load_scenario("fig2_intersection").unwrap();
        run_batch(&scn, &[Algorithm::Rbpf, Algorithm::Smoothed, Algorithm::Static])
    })
}

fn table2_multipath_free() -> Outcome {
    let b = reference_batch();
    let (r, sm, st) = (
        b.summary(Algorithm::Rbpf),
        b.summary(Algorithm::Smoothed),
        b.summary(Algorithm::Static),
    );
    let minutes = b.elapsed.as_secs_f64() / 60.0;
    let pass = r.mean_error_m <= 0.8
        && (0.5..=1.5).contains(&sm.mean_error_m)
        && st.mean_error_m >= 1.5
        && r.mean_error_m < sm.mean_error_m
        && sm.mean_error_m < st.mean_error_m
        && minutes < 3.0;
    outcome(
        pass,
        format!(
            "mean error rbpf {:.3}±{:.3} m (≤ 0.8), smoothed {:.3}±{:.3} m ([0.5, 1.5]), static {:.3}±{:.3} m (≥ 1.5); {:.1} s",
            r.mean_error_m,
            r.three_sigma_m,
            sm.mean_error_m,
            sm.three_sigma_m,
            st.mean_error_m,
            st.three_sigma_m,
            b.elapsed.as_secs_f64()
        ),
    )
}

fn multipath_scenario() -> Outcome {
    let scn = load_scenario("multipath").unwrap();
    let b = run_batch(&scn, &[Algorithm::Rbpf, Algorithm::Smoothed]);
    let (r, sm) = (b.summary(Algorithm::Rbpf), b.summary(Algorithm::Smoothed));
    outcome(
        r.mean_error_m <= 1.5 && sm.mean_error_m >= 2.0 * r.mean_error_m,
        format!(
            "rbpf {:.3} m (≤ 1.5), smoothed {:.3} m (≥ 2 × rbpf = {:.3})",
            r.mean_error_m,
            sm.mean_error_m,
            2.0 * r.mean_error_m
        ),
    )
}

fn covariance_contraction() -> Outcome {
    let b = reference_batch();
    let (r, sm) = (b.summary(Algorithm::Rbpf), b.summary(Algorithm::Smoothed));
    let ratio = r.median_cov_det_m4 / sm.median_cov_det_m4;
    outcome(
        ratio <= 1e-2,
        format!(
            "median det rbpf {:.3e} m⁴ / smoothed {:.3e} m⁴ = {:.2e} (≤ 1e-2)",
            r.median_cov_det_m4, sm.median_cov_det_m4, ratio
        ),
    )
}

/// Flag rate of the filter itself on the multipath-free runs: every
/// (particle, vehicle, satellite, step) is one classification, and the record
/// holds the particle-weighted flag count per vehicle.
fn false_alarm_rate() -> Outcome {
    let b = reference_batch();
    let runs = &b.runs[&Algorithm::Rbpf];
    let (mut flagged, mut total) = (0.0, 0usize);
    for v in runs.iter().flatten().flat_map(|r| &r.vehicles) {
        flagged += v.n_flagged;
        total += v.n_sats_used;
    }
    let classifications = total * load_scenario("fig2_intersection").unwrap().config.filter.n_particles;
    let rate = flagged / total as f64;
    outcome(
        (rate - 0.025).abs() <= 0.01 && classifications >= 100_000,
        format!("rate {:.4} over {classifications} classifications (0.025 ± 0.01)", rate),
    )
}

fn dll_oracle() -> Outcome {
    let dll = DllModel::default();
    let chip = 2.0 * dll.chip_half_time;
    let direct = 2.1e7;
    let mut worst: f64 = 0.0;
    let n = 600;
    for k in 1..n {
        let td = 1.5 * chip * k as f64 / n as f64;
        let reflected = direct + SPEED_OF_LIGHT * td;
        let tp = dll_discriminator_zero(direct, Some(reflected), &dll).unwrap();
        let numeric = SPEED_OF_LIGHT * tp - direct;
        let analytic = multipath_range_error(direct, reflected, &dll).unwrap();
        worst = worst.max((numeric - analytic).abs());
    }
    outcome(
        worst < 0.1,
        format!(
            "max |c(t_p − t₀) − ρ| = {worst:.2e} m over {} delays in (0, 1.5) chips",
            n - 1
        ),
    )
}

fn scaled_scenario(n_vehicles: usize, n_particles: usize, steps: usize) -> (Scenario, MeasurementLog) {
    let mut scn = load_scenario("fig2_intersection").unwrap();
    scn.config.steps = steps;
    scn.config.filter.n_particles = n_particles;
    // spread vehicles over the four approach lanes
    let lanes = [
        (-1.0, 0.0, -1.75, 0.0),
        (1.0, 0.0, 1.75, 180.0),
        (0.0, -1.0, 1.75, 90.0),
        (0.0, 1.0, -1.75, 270.0),
    ];
    scn.config.vehicles = (0..n_vehicles)
        .map(|i| {
            let (sx, sy, off, heading) = lanes[i % 4];
            let d = 40.0 + 15.0 * (i / 4) as f64;
            let start = if sx != 0.0 { [sx * d, off] } else { [off, sy * d] };
            VehicleSpec {
                id: VehicleId(i as u32),
                trajectory: Trajectory::Straight {
                    start,
                    heading_deg: heading,
                    speed: 5.0,
                },
            }
        })
        .collect();
    let log = simulate_log(&scn, 11).unwrap();
    (scn, log)
}

fn time_filter(n_vehicles: usize, n_particles: usize) -> f64 {
    let (scn, log) = scaled_scenario(n_vehicles, n_particles, 20);
    let prior = simulated_bias_prior(&log);
    (0..3)
        .map(|_| {
            let t = Instant::now();
            run_algorithm(&scn, &log, Algorithm::Rbpf, &prior, 11).unwrap();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn linear_complexity() -> Outcome {
    let np = [100.0, 200.0, 400.0, 800.0];
    let tp: Vec<f64> = np.iter().map(|n| time_filter(4, *n as usize)).collect();
    let nv = [2.0, 4.0, 8.0, 16.0];
    let tv: Vec<f64> = nv.iter().map(|n| time_filter(*n as usize, 200)).collect();
    let (sp, sv) = (log_log_slope(&np, &tp), log_log_slope(&nv, &tv));
    outcome(
        (0.9..=1.1).contains(&sp) && (0.9..=1.1).contains(&sv),
        format!("log-log slope vs particles {sp:.3}, vs vehicles {sv:.3} (both in [0.9, 1.1])"),
    )
}

/// Reference extended Kalman filter written out from the motion and range
/// models, independent of the filter crate.
struct ReferenceEkf {
    x: DVector<f64>,
    p: DMatrix<f64>,
}

impl ReferenceEkf {
    fn predict(&mut self, dt: f64, noise: &NoiseConfig, heading: f64) {
        let mut f = DMatrix::<f64>::identity(6, 6);
        for i in [0, 2, 4] {
            f[(i, i + 1)] = dt;
        }
        // white accelerations (along, cross) rotated into east/north, and
        // (drift-rate, bias-rate) noise for the clock
        let (c, s) = (heading.cos(), heading.sin());
        let rot = Matrix2::new(c, -s, s, c);
        let acc = rot * Matrix2::new(noise.sigma_ax.powi(2), 0.0, 0.0, noise.sigma_ay.powi(2)) * rot.transpose();
        let mut g = DMatrix::<f64>::zeros(6, 4);
        g[(0, 0)] = 0.5 * dt * dt;
        g[(1, 0)] = dt;
        g[(2, 1)] = 0.5 * dt * dt;
        g[(3, 1)] = dt;
        g[(4, 2)] = 0.5 * dt * dt;
        g[(4, 3)] = dt;
        g[(5, 2)] = dt;
        let mut w = DMatrix::<f64>::zeros(4, 4);
        w[(0, 0)] = acc[(0, 0)];
        w[(0, 1)] = acc[(0, 1)];
        w[(1, 0)] = acc[(1, 0)];
        w[(1, 1)] = acc[(1, 1)];
        w[(2, 2)] = noise.sigma_d.powi(2);
        w[(3, 3)] = noise.sigma_b.powi(2);
        self.x = &f * &self.x;
        self.p = &f * &self.p * f.transpose() + &g * w * g.transpose();
    }

    /// Batch update; `model` returns the predicted range and its gradient
    /// with respect to (x, y) at the current mean.
    fn update(
        &mut self,
        obs: &[(f64, f64, Vector3<f64>)],
        sigma_z: f64,
        model: impl Fn(&Vector2<f64>, &Vector3<f64>) -> (f64, Vector2<f64>),
    ) {
        if obs.is_empty() {
            return;
        }
        let m = obs.len();
        let pos = Vector2::new(self.x[0], self.x[2]);
        let mut h = DMatrix::<f64>::zeros(m, 6);
        let mut nu = DVector::<f64>::zeros(m);
        for (i, (z, bias, sat)) in obs.iter().enumerate() {
            let (range, grad) = model(&pos, sat);
            h[(i, 0)] = grad.x;
            h[(i, 2)] = grad.y;
            h[(i, 4)] = 1.0;
            nu[i] = z - (range + bias + self.x[4]);
        }
        let s = &h * &self.p * h.transpose() + DMatrix::<f64>::identity(m, m) * sigma_z * sigma_z;
        let k = &self.p * h.transpose() * s.try_inverse().expect("invertible");
        self.x += &k * nu;
        self.p = (DMatrix::<f64>::identity(6, 6) - &k * &h) * &self.p;
        self.p = 0.5 * (&self.p + self.p.transpose());
    }
}

/// Single particle, exact biases, no gating or map: the filter must collapse
/// to one EKF per vehicle. Returns the largest deviation from the reference.
fn single_particle_vs_reference(model: RangeModel) -> f64 {
    let mut scn = load_scenario("fig2_intersection").unwrap();
    scn.config.steps = 100;
    scn.config.noise.sigma_c = 0.0;
    let log = simulate_log(&scn, 21).unwrap();
    let e0 = &log.epochs[0];
    let cfg = FilterConfig {
        n_particles: 1,
        gating: false,
        map_constraint: false,
        range_model: model,
        noise: NoiseConfig {
            sigma_init_common: 0.0,
            ..scn.config.noise
        },
        ..FilterConfig::default()
    };
    let sats: Vec<SatelliteId> = log.satellite_ids();
    let biases: Vec<f64> = sats.iter().map(|s| e0.truth_biases[s]).collect();
    let mut inits = Vec::new();
    let mut refs = Vec::new();
    for v in &scn.config.vehicles {
        let p = e0.truth_of(v.id).unwrap() + Vector2::new(0.7, -0.4);
        let mean = Vector6::new(p.x, 0.0, p.y, 0.0, 0.3, 0.0);
        let mut cov = Matrix6::from_diagonal(&Vector6::new(4.0, 25.0, 4.0, 25.0, 9.0, 1.0));
        cov[(0, 2)] = 0.5;
        cov[(2, 0)] = 0.5;
        inits.push(VehicleInit {
            id: v.id,
            state: VehicleEkfState::new(mean, cov),
            heading: v.trajectory.heading(),
        });
        refs.push(ReferenceEkf {
            x: DVector::from_column_slice(mean.as_slice()),
            p: DMatrix::from_column_slice(6, 6, cov.as_slice()),
        });
    }
    let mut filter = Rbpf::new(cfg.clone(), LaneMap::default(), &sats, &biases, &inits, 3).unwrap();
    let mut worst: f64 = 0.0;
    for e in &log.epochs[1..] {
        filter.step(&e.measurements, &e.satellites).unwrap();
        for (vi, (init, r)) in inits.iter().zip(refs.iter_mut()).enumerate() {
            r.predict(cfg.noise.delta_t, &cfg.noise, init.heading);
            let obs: Vec<(f64, f64, Vector3<f64>)> = e
                .measurements_of(init.id)
                .map(|m| {
                    let i = sats.binary_search(&m.satellite_id).unwrap();
                    let s = e.satellites.iter().find(|s| s.satellite_id == m.satellite_id).unwrap();
                    (m.range, biases[i], s.position.0)
                })
                .collect();
            match &cfg.range_model {
                RangeModel::Spherical => r.update(&obs, cfg.noise.sigma_z, |p, s| {
                    let d = Vector3::new(p.x, p.y, 0.0) - s;
                    (d.norm(), Vector2::new(d.x, d.y) / d.norm())
                }),
                RangeModel::PlaneWave { reference } => {
                    let r0 = Vector3::new(reference[0], reference[1], reference[2]);
                    r.update(&obs, cfg.noise.sigma_z, |p, s| {
                        let u = (r0 - s) / (r0 - s).norm();
                        let range = (r0 - s).norm() + u.dot(&(Vector3::new(p.x, p.y, 0.0) - r0));
                        (range, Vector2::new(u.x, u.y))
                    })
                }
            }
            let got = &filter.particles()[0].ekfs[vi];
            for i in 0..6 {
                worst = worst.max((got.mean[i] - r.x[i]).abs());
                for j in 0..6 {
                    worst = worst.max((got.cov[(i, j)] - r.p[(i, j)]).abs());
                }
            }
        }
    }
    worst
}

fn oracle_equivalences() -> Outcome {
    let a = single_particle_vs_reference(RangeModel::Spherical);
    let b = single_particle_vs_reference(RangeModel::PlaneWave {
        reference: [0.0, 0.0, 0.0],
    });
    // containment of a Gaussian in a straight lane against the normal CDF
    let strip = LaneMap::new(vec![Lane {
        polygon: Polygon::rectangle(Vector2::new(-1e5, -1.75), Vector2::new(1e5, 1.75)).unwrap(),
        altitude: None,
    }]);
    let cases = [
        (Vector2::<f64>::new(0.0, 0.0), Matrix2::<f64>::new(1.0, 0.0, 0.0, 1.0)),
        (Vector2::new(3.0, 0.8), Matrix2::new(2.0, 0.3, 0.3, 0.5)),
        (Vector2::new(-7.0, -1.5), Matrix2::new(0.2, -0.1, -0.1, 4.0)),
        (Vector2::new(0.0, 2.5), Matrix2::new(9.0, 1.0, 1.0, 0.3)),
    ];
    let mut c: f64 = 0.0;
    let mut rng = stream(31, 0, 0, 0);
    for (mean, cov) in cases {
        let sd: f64 = cov[(1, 1)];
        let sd = sd.sqrt();
        let n = Normal::new(mean.y, sd).unwrap();
        let exact = n.cdf(1.75) - n.cdf(-1.75);
        let mc = containment_probability(&mean, &cov, &strip, 10_000, &mut rng).unwrap();
        c = c.max((mc - exact).abs());
    }
    outcome(
        a <= 1e-9 && b <= 1e-9 && c <= 0.02,
        format!("(a) 1-particle vs EKF {a:.1e} (≤ 1e-9); (b) linear vs KF {b:.1e} (≤ 1e-9); (c) containment vs erf {c:.4} (≤ 0.02)"),
    )
}

fn statistical_model_checks() -> Outcome {
    // Gauss-Markov increments of the common biases
    let noise = NoiseConfig::default();
    let n = 200_000;
    let mut rng = stream(41, 0, 0, 0);
    let next = propagate_common_biases(&CommonBiasVector::zeros(n), &noise, &mut rng);
    let m = next.values.iter().sum::<f64>() / n as f64;
    let var = next.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let expected = (noise.sigma_c * noise.delta_t).powi(2);
    let gm = (var / expected - 1.0).abs();

    // measurement Jacobian against central differences of the predicted range
    let mut jac: f64 = 0.0;
    let mut rng = stream(42, 0, 0, 0);
    for _ in 0..200 {
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let mean = Vector6::new(50.0 * draw(), draw(), 50.0 * draw(), draw(), 10.0 * draw(), draw());
        let ekf = VehicleEkfState::new(mean, Matrix6::identity());
        let sat = Vector3::new(1.5e7 * draw(), 1.5e7 * draw(), 2.0e7 + 1e6 * draw());
        let g = measurement_geometry(&ekf, 3.0, &sat, 0.0, 0.0, 1.0, &RangeModel::Spherical, true).unwrap();
        let h = 0.5;
        for i in [0, 2, 4] {
            let mut up = ekf.clone();
            up.mean[i] += h;
            let mut down = ekf.clone();
            down.mean[i] -= h;
            let zu = measurement_geometry(&up, 3.0, &sat, 0.0, 0.0, 1.0, &RangeModel::Spherical, true).unwrap();
            let zd = measurement_geometry(&down, 3.0, &sat, 0.0, 0.0, 1.0, &RangeModel::Spherical, true).unwrap();
            let fd = (zu.predicted - zd.predicted) / (2.0 * h);
            jac = jac.max((fd - g.jacobian[i]).abs());
        }
    }

    // weights sum to one after every step of a full run
    let scn = load_scenario("fig2_intersection").unwrap();
    let log = simulate_log(&scn, 43).unwrap();
    let prior = simulated_bias_prior(&log);
    let sats = log.satellite_ids();
    let prior: Vec<f64> = sats.iter().map(|s| prior[s]).collect();
    let inits: Vec<VehicleInit> = scn
        .config
        .vehicles
        .iter()
        .map(|v| {
            let p = log.epochs[0].truth_of(v.id).unwrap();
            VehicleInit {
                id: v.id,
                state: VehicleEkfState::new(
                    Vector6::new(p.x, 0.0, p.y, 0.0, 0.0, 0.0),
                    Matrix6::from_diagonal(&Vector6::new(4.0, 25.0, 4.0, 25.0, 1.0, 1.0)),
                ),
                heading: v.trajectory.heading(),
            }
        })
        .collect();
    let mut filter = Rbpf::new(scn.config.filter_config(), scn.lanes.clone(), &sats, &prior, &inits, 43).unwrap();
    let mut norm: f64 = 0.0;
    for e in &log.epochs[1..] {
        filter.step(&e.measurements, &e.satellites).unwrap();
        let total: f64 = filter.particles().iter().map(|p| p.weight()).sum();
        norm = norm.max((total - 1.0).abs());
    }
    outcome(
        gm <= 0.05 && jac <= 1e-6 && norm <= 1e-12,
        format!(
            "increment variance off by {:.2}% (≤ 5%); Jacobian vs finite differences {jac:.1e} (≤ 1e-6); weight sum off by {norm:.1e} (≤ 1e-12)",
            100.0 * gm
        ),
    )
}

/// Size of each run's mean estimate-minus-truth for one vehicle, averaged
/// over runs. The common biases are zero-mean across seeds, so averaging the
/// signed vectors first would cancel a systematic offset that every single
/// run exhibits.
fn seed_averaged_bias(runs: &[Vec<MetricsRecord>], vehicle: VehicleId) -> f64 {
    let norms: Vec<f64> = runs
        .iter()
        .map(|r| mean_signed_error(r, vehicle).expect("truth available").norm())
        .collect();
    norms.iter().sum::<f64>() / norms.len() as f64
}

/// Length of the signed error averaged over runs; reported for reference.
fn pooled_signed_error(runs: &[Vec<MetricsRecord>], vehicle: VehicleId) -> f64 {
    let sum: Vector2<f64> = runs
        .iter()
        .map(|r| mean_signed_error(r, vehicle).expect("truth available"))
        .sum();
    (sum / runs.len() as f64).norm()
}

fn blockage_robustness() -> Outcome {
    let scn = load_scenario("blockage").unwrap();
    let blocked = scn.config.blocked[0].vehicle;
    let b = run_batch(&scn, &[Algorithm::Rbpf, Algorithm::Static]);
    let (rbpf, stat) = (&b.runs[&Algorithm::Rbpf], &b.runs[&Algorithm::Static]);
    let r = seed_averaged_bias(rbpf, blocked);
    let s = seed_averaged_bias(stat, blocked);
    outcome(
        r <= 0.5 && s > 1.0,
        format!(
            "blocked vehicle per-run mean signed error: rbpf {r:.3} m (≤ 0.5), static {s:.3} m (> 1); \
             pooled over seeds rbpf {:.3} m, static {:.3} m",
            pooled_signed_error(rbpf, blocked),
            pooled_signed_error(stat, blocked)
        ),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1", "multipath-free error ordering", table2_multipath_free),
        ("2", "multipath scenario", multipath_scenario),
        ("3", "covariance contraction", covariance_contraction),
        ("4", "chi-square false-alarm rate", false_alarm_rate),
        ("5", "DLL lock point vs analytic error", dll_oracle),
        ("6", "linear complexity", linear_complexity),
        ("7", "oracle equivalences", oracle_equivalences),
        ("8", "statistical model checks", statistical_model_checks),
        ("9", "blockage robustness", blockage_robustness),
    ];
    let started = Instant::now();
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {id} [{}] {name}: {} ({:.1} s)",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            t.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed.push(id);
        }
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        criteria.len() - failed.len(),
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
