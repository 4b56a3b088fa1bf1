//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod support;

use carelink_core::bench::{check_monotonicity, run_experiment, Arrivals, ExperimentSpec};
use carelink_core::broker::NodeState;
use carelink_core::domain::{authorize, Action, Decision, Event, PharmacyId, Principal, ResourceKind, ResourceRef, Role, Status};
use carelink_core::link::{
    arfcn_to_frequencies, simulate_transfer, slot_throughput, tx_power_limit, Arfcn, Band, LinkConfig, RateMode, SimTime, TdmaClock,
};
use carelink_core::security::{apply_keystream, SessionKey, StreamCipher, A51};
use carelink_core::sync::{parse_atom, to_atom, Cursor, ReplicaStore};
use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};
use support::a51_oracle;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn gsm_constants() -> Outcome {
    for n in 1..=124i64 {
        let (up, down) = arfcn_to_frequencies(n).map_err(|e| e.to_string())?;
        let a = Arfcn::new(n).unwrap();
        ensure(a.downlink_khz() - a.uplink_khz() == 45_000, format!("duplex spacing at n={n}"))?;
        ensure((down - up - 45.0).abs() < 1e-9, format!("duplex spacing in MHz at n={n}"))?;
        // oracle: 890 + 0.2 n
        ensure((up - (890.0 + 0.2 * n as f64)).abs() < 1e-9, format!("uplink at n={n}"))?;
        ensure(up > 890.0 && up < 915.0 && down > 935.0 && down < 960.0, format!("band edges at n={n}"))?;
    }
    ensure(arfcn_to_frequencies(0).is_err() && arfcn_to_frequencies(125).is_err(), "channels outside 1..=124 accepted")?;
    ensure(arfcn_to_frequencies(1).unwrap() == (890.2, 935.2), "n=1")?;
    ensure(arfcn_to_frequencies(124).unwrap() == (914.8, 959.8), "n=124")?;
    let full = LinkConfig { timeslots: 8, ..LinkConfig::default() };
    ensure(slot_throughput(&full).aggregate_floor() == 270_833, "aggregate rate at 8 slots")?;
    ensure(TdmaClock::FRAME_DURATION_S == 0.004615 && TdmaClock::FRAME_DURATION == SimTime::from_nanos(4_615_000), "frame")?;
    ensure(tx_power_limit(Band::Gsm850_900) == 2.0 && tx_power_limit(Band::Gsm1800_1900) == 1.0, "power limits")?;
    Ok("124 channels, 270833 bit/s, 4.615 ms, 2 W / 1 W".into())
}

fn transfer_timing() -> Outcome {
    let cfg = LinkConfig { timeslots: 1, rate: RateMode::Full, loss_prob: 0.0, ..LinkConfig::default() };
    let got = simulate_transfer(1000, &cfg, SimTime::ZERO).map_err(|e| e.to_string())?.duration().as_secs_f64();
    // closed form: 8000 bits at 270833 / 8 bit/s
    let oracle = 8000.0 / (270_833.0 / 8.0);
    let tol = 0.004615;
    ensure((got - oracle).abs() <= tol, format!("{got:.6} s vs {oracle:.6} s"))?;
    ensure((oracle - 0.2363).abs() < 1e-4, "oracle drifted from 0.2363 s")?;
    Ok(format!("{got:.6} s vs closed form {oracle:.6} s, tolerance {tol} s"))
}

fn fig8_shape() -> Outcome {
    let mut notes = Vec::new();
    for arrivals in [Arrivals::Fixed, Arrivals::Poisson] {
        let started = Instant::now();
        let spec = ExperimentSpec { arrivals, ..ExperimentSpec::default() };
        let samples = run_experiment(&spec).map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();
        ensure(samples.len() == 9, "expected a 3 x 3 grid")?;
        let short = samples.iter().find(|s| s.n < 200);
        ensure(short.is_none(), format!("{arrivals:?}: cell with fewer than 200 samples: {short:?}"))?;
        let report = check_monotonicity(&samples);
        ensure(
            report.passed(),
            format!("{arrivals:?}: {} of {} adjacent pairs decrease, {} allowed", report.violations, report.pairs, report.allowed),
        )?;
        ensure(elapsed < Duration::from_secs(30), format!("{arrivals:?} grid took {elapsed:?}"))?;
        notes.push(format!("{arrivals:?} {}/{} violations in {:.1?}", report.violations, report.pairs, elapsed));
    }
    Ok(notes.join(", "))
}

fn a51_keystream() -> Outcome {
    let pairs: [([u8; 8], u32); 4] = [
        ([0x12, 0x23, 0x45, 0x67, 0x89, 0xAB, 0xCD, 0xEF], 0x134),
        ([0; 8], 0),
        ([0xFF; 8], (1 << 22) - 1),
        ([0x5A, 0x01, 0xC3, 0x77, 0x10, 0xEE, 0x42, 0x99], 0x2_1F3C),
    ];
    for (key, frame) in pairs {
        let ks = A51.keystream(SessionKey(u64::from_be_bytes(key)), frame, 228).map_err(|e| e.to_string())?;
        let lib: Vec<bool> = (0..ks.len_bits()).map(|i| ks.bit(i)).collect();
        ensure(lib == a51_oracle::keystream(key, frame, 228), format!("keystream differs for frame {frame:#x}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..1000 {
        let len = rng.random_range(0..=28);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let ks = A51.keystream(SessionKey(rng.random()), rng.random_range(0..1 << 22), 228).unwrap();
        let twice = apply_keystream(&apply_keystream(&payload, &ks).unwrap(), &ks).unwrap();
        ensure(twice == payload, "XOR is not an involution")?;
    }
    Ok(format!("{} (key, frame) pairs x 228 bits, 1000 involutions", pairs.len()))
}

fn acl_table() -> Outcome {
    #[derive(Clone, Copy, Debug, PartialEq)]
    enum Relation {
        Creator,
        Subject,
        SamePharmacy,
        Unrelated,
    }
    // expected decisions written out case by case
    let expected = |role: Role, rel: Relation, kind: ResourceKind, action: Action| -> bool {
        match (role, rel) {
            (_, Relation::Creator) => true,
            (Role::Privileged, _) => true,
            (Role::Patient, Relation::Subject) => action == Action::Read,
            (Role::Pharmacist, Relation::SamePharmacy) => kind == ResourceKind::Prescription,
            _ => false,
        }
    };
    let mut cases = 0;
    for role in Role::ALL {
        for rel in [Relation::Creator, Relation::Subject, Relation::SamePharmacy, Relation::Unrelated] {
            for kind in [ResourceKind::Prescription, ResourceKind::Appointment, ResourceKind::Note] {
                for action in [Action::Read, Action::Write] {
                    let actor = if role == Role::Pharmacist {
                        let home = if rel == Relation::SamePharmacy { "main" } else { "elsewhere" };
                        Principal::pharmacist("actor".into(), "A", PharmacyId::new(home))
                    } else {
                        Principal::new("actor".into(), role, "A")
                    };
                    let res = ResourceRef {
                        kind,
                        id: "r-1".into(),
                        creator_id: if rel == Relation::Creator { "actor" } else { "dr-other" }.into(),
                        patient_id: if rel == Relation::Subject { "actor" } else { "pat-other" }.into(),
                        pharmacy_id: (kind == ResourceKind::Prescription).then(|| PharmacyId::new("main")),
                    };
                    let want = expected(role, rel, kind, action);
                    ensure(
                        authorize(&actor, &res, action).is_allowed() == want,
                        format!("{role:?} {rel:?} {kind:?} {action:?} should be {want}"),
                    )?;
                    cases += 1;
                }
            }
        }
    }
    // the two physician-isolation cases
    let owner = Principal::new("dr-grey".into(), Role::Physician, "G");
    let other = Principal::new("dr-shep".into(), Role::Physician, "S");
    let rx = ResourceRef {
        kind: ResourceKind::Prescription,
        id: "rx-1".into(),
        creator_id: "dr-grey".into(),
        patient_id: "pat-ann".into(),
        pharmacy_id: Some("main".into()),
    };
    ensure(authorize(&owner, &rx, Action::Read) == Decision::Allow, "creator physician denied")?;
    ensure(authorize(&other, &rx, Action::Read) == Decision::Deny, "other physician allowed")?;
    Ok(format!("{cases} role x relation x kind x action cases"))
}

fn sync_convergence() -> Outcome {
    let t0 = Utc.with_ymd_and_hms(2024, 3, 4, 8, 0, 0).unwrap();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = ReplicaStore::new("device-a");
        let mut b = ReplicaStore::new("server-b");
        for step in 0..200 {
            let (store, local) = if step % 2 == 0 { (&mut a, "a") } else { (&mut b, "b") };
            // ids s0..s9 are shared by both nodes
            let id = if rng.random_bool(0.5) { format!("s{}", rng.random_range(0..10)) } else { format!("{local}{}", rng.random_range(0..20)) };
            let now = t0 + chrono::Duration::seconds(step);
            if rng.random_bool(0.15) {
                store.delete(&id, now);
            } else {
                store.upsert(&id, "note", &serde_json::json!({ "body": format!("{local}-{step}") }), now);
            }
            if rng.random_bool(0.05) {
                let feed = parse_atom(&to_atom(&a.generate_feed(Cursor::START).unwrap())).map_err(|e| e.to_string())?;
                b.apply_feed(&feed);
            }
        }
        let fa = parse_atom(&to_atom(&a.generate_feed(Cursor::START).unwrap())).map_err(|e| e.to_string())?;
        let fb = parse_atom(&to_atom(&b.generate_feed(Cursor::START).unwrap())).map_err(|e| e.to_string())?;
        b.apply_feed(&fa);
        a.apply_feed(&fb);
        ensure(a.canonical_bytes() == b.canonical_bytes(), format!("seed {seed}: stores differ"))?;
        let before = a.canonical_bytes();
        let again = a.apply_feed(&fb);
        ensure(again.applied == 0 && a.canonical_bytes() == before, format!("seed {seed}: second apply changed state"))?;
    }
    Ok("20 seeds x 100 ops per node, byte-identical, idempotent".into())
}

fn broker_failover() -> Outcome {
    let d = support::deployment();
    let grey = d.clinic_login("dr-grey").map_err(|e| e.to_string())?;
    let mut ids = HashSet::new();
    let primary = d.primary().clone();
    for i in 0..100 {
        // primary loses replies from 30 on and is dead from 60 on
        match i {
            30 => d.set_node(&primary, NodeState::DropReplies),
            60 => d.set_node(&primary, NodeState::Down),
            _ => {}
        }
        let r = d
            .clinic
            .submit_prescription(&grey, support::draft("pat-ann", 1 + i % 5, 1))
            .map_err(|e| format!("submission {i}: {e}"))?;
        if i >= 30 {
            ensure(r.served_by == "pharmacy-b", format!("submission {i} served by {}", r.served_by))?;
        }
        ids.insert(r.prescription_id);
    }
    let stored = d.pharmacy.prescriptions();
    let (effects, replays) = d.pharmacy.with_ledger(|l| (l.effects(), l.replays()));
    ensure(ids.len() == 100 && stored.len() == 100, format!("{} stored", stored.len()))?;
    ensure(stored.iter().all(|p| ids.contains(p.id())), "unexpected prescription stored")?;
    ensure(effects == 100, format!("{effects} effects for 100 prescriptions"))?;
    ensure(replays == 30, format!("expected 30 duplicate deliveries, saw {replays}"))?;
    Ok(format!("100/100 via replica, {effects} effects, {replays} duplicates absorbed"))
}

fn state_machine() -> Outcome {
    use Event::*;
    use Status::*;
    let table = [
        (Submitted, Receive, Received),
        (Received, StartFill, Filling),
        (Filling, MarkReady, Ready),
        (Ready, PickUp, PickedUp),
        (Ready, Deliver, Delivered),
    ];
    let mut legal = 0;
    for s in Status::ALL {
        for e in Event::ALL {
            let want = table.iter().find(|(from, ev, _)| *from == s && *ev == e).map(|t| t.2);
            ensure(s.next(e) == want, format!("{s:?} + {e:?}"))?;
            legal += usize::from(want.is_some());
        }
        if matches!(s, PickedUp | Delivered) {
            ensure(Event::ALL.iter().all(|e| s.next(*e).is_none()), format!("{s:?} is not absorbing"))?;
        }
    }
    ensure(legal == 5, format!("{legal} legal pairs"))?;
    Ok("30 pairs, 5 legal, terminal states absorbing".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("GSM constants", gsm_constants, Duration::from_secs(1)),
        ("transfer timing", transfer_timing, Duration::from_secs(1)),
        ("latency grid shape", fig8_shape, Duration::from_secs(60)),
        ("A5/1 keystream", a51_keystream, Duration::from_secs(5)),
        ("ACL decision table", acl_table, Duration::from_secs(1)),
        ("sync convergence", sync_convergence, Duration::from_secs(10)),
        ("broker failover", broker_failover, Duration::from_secs(20)),
        ("state machine", state_machine, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let started = Instant::now();
        let outcome = check();
        let elapsed = started.elapsed();
        let outcome = outcome.and_then(|msg| {
            if elapsed <= limit {
                Ok(msg)
            } else {
                Err(format!("took {elapsed:.2?}, limit {limit:?}"))
            }
        });
        match outcome {
            Ok(msg) => println!("PASS  {name:<20} {msg} ({elapsed:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name:<20} {msg} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
