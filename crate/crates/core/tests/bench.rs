use carelink_core::bench::{check_monotonicity, run_cell, run_experiment, summarize, Arrivals, BenchError, ExperimentSpec, Format};
use carelink_core::deployment::{Deployment, DeploymentConfig};
use carelink_core::domain::{Medicine, PrescriptionDraft};
use carelink_core::link::SimTime;

fn spec(arrivals: Arrivals) -> ExperimentSpec {
    ExperimentSpec { arrivals, ..ExperimentSpec::default() }
}

#[test]
fn fixed_grid_is_monotone() {
    let samples = run_experiment(&spec(Arrivals::Fixed)).unwrap();
    println!("{}", summarize(&samples, Format::Table).unwrap());
    assert_eq!(samples.len(), 9);
    assert!(samples.iter().all(|s| s.n >= 200 && s.mean_latency_s <= s.p95_latency_s));
    let report = check_monotonicity(&samples);
    assert!(report.passed(), "{report:?}");
}

#[test]
fn poisson_grid_is_monotone_and_shows_queueing() {
    let samples = run_experiment(&spec(Arrivals::Poisson)).unwrap();
    println!("{}", summarize(&samples, Format::Table).unwrap());
    let report = check_monotonicity(&samples);
    assert!(report.passed(), "{report:?}");
    let at = |r: f64, m: usize| samples.iter().find(|s| s.rate == r && s.medicines == m).unwrap().mean_latency_s;
    assert!(at(10.0, 10) > at(1.0, 10));
}

#[test]
fn every_submission_is_accounted_for() {
    let mut s = spec(Arrivals::Poisson);
    s.link.loss_prob = 0.3;
    s.min_samples = 50;
    for rate in [2.0, 20.0] {
        let cell = run_cell(&s, rate, 5).unwrap();
        assert_eq!(cell.n + cell.failed + cell.in_flight, cell.submitted);
    }
}

#[test]
fn identical_specs_give_identical_csv() {
    let mut s = spec(Arrivals::Poisson);
    s.rates = vec![2.0, 8.0];
    s.medicine_counts = vec![1, 4];
    s.min_samples = 40;
    s.link.loss_prob = 0.05;
    let a = summarize(&run_experiment(&s).unwrap(), Format::Csv).unwrap();
    let b = summarize(&run_experiment(&s).unwrap(), Format::Csv).unwrap();
    assert_eq!(a, b);
    s.seed += 1;
    assert_ne!(summarize(&run_experiment(&s).unwrap(), Format::Csv).unwrap(), a);
}

#[test]
fn lone_submission_matches_closed_form() {
    // one prescription per window: no queueing, no loss
    let s = ExperimentSpec { rates: vec![0.01], min_samples: 1, ..ExperimentSpec::default() };
    let frame = 0.004615;
    let bits_per_frame = 270_833.0 / 8.0 * frame;
    for m in [1, 5, 10] {
        let cell = run_cell(&s, 0.01, m).unwrap();
        assert_eq!(cell.n, 1);

        // replay the same submission by hand to see the message sizes
        let d = Deployment::new(DeploymentConfig::default()).unwrap();
        let token = d.clinic_login("dr-grey").unwrap();
        let draft = PrescriptionDraft {
            patient_id: "pat-ann".into(),
            pharmacy_id: "main".into(),
            medicines: (0..m).map(|i| Medicine::new(format!("medicine-{i:02}"), "1 tablet daily", 30, 1).unwrap()).collect(),
        };
        let pending = d.clinic.prepare_submission(&token, draft, SimTime::ZERO, 0).unwrap();
        let up_frames = (pending.envelope_len() as f64 * 8.0 / bits_per_frame).ceil();
        let r = d.clinic.complete_submission(pending).unwrap();
        assert_eq!(r.uplink_frames as f64, up_frames);
        let service = (20.0 + 5.0 * m as f64) / 1000.0;
        let expect = (up_frames + r.downlink_frames as f64) * frame + service;
        assert!((cell.mean_latency_s - expect).abs() <= frame, "{} vs {expect}", cell.mean_latency_s);
        assert!((r.latency_s - expect).abs() < 1e-6);
    }
}

#[test]
fn unreachable_pharmacy_is_reported() {
    let mut s = spec(Arrivals::Fixed);
    s.link.loss_prob = 1.0;
    s.min_samples = 1;
    assert!(matches!(run_cell(&s, 1.0, 1), Err(BenchError::ServiceUnavailable(_))));
}
