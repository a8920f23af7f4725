//! Randomized audits of the engine and its trace.

use std::io::BufReader;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wioptnd::energy::{cycles_per_slot, cycles_to_charge};
use wioptnd::experiment::simulate;
use wioptnd::metrics::compute_metrics;
use wioptnd::model::{ProtocolChoice, RasterPlot, RasterSource, SimConfig};
use wioptnd::sim::{replay, run, SimTrace};

fn random_config(rng: &mut ChaCha8Rng) -> SimConfig {
    let protocol = ProtocolChoice::ALL[rng.random_range(0..3)];
    let mut cfg = SimConfig {
        protocol,
        duration_s: rng.random_range(0.05..0.4),
        seed: rng.random(),
        emission_slots: rng.random_range(1..=3),
        min_emission_gap: rng.random_range(0..=2),
        start_empty: rng.random_bool(0.3),
        cf_broadcast_charging: rng.random_bool(0.5),
        raster: RasterSource::Poisson {
            rate_hz: rng.random_range(20.0..300.0),
        },
        ..SimConfig::default()
    };
    let devices = rng.random_range(1..=8);
    cfg.set_device_count(devices);
    match protocol {
        ProtocolChoice::ChargeAndFire => cfg.frequency_count = devices,
        ProtocolChoice::PsdwRandom => {
            cfg.frequency_count = rng.random_range(1..=12);
            cfg.window_width = rng.random_range(1..=6);
        }
        ProtocolChoice::PsdwMarkov => {
            cfg.frequency_count = rng.random_range(1..=24);
            cfg.window_width = rng.random_range(4..=6);
        }
    }
    if rng.random_bool(0.2) {
        cfg.energy.f_us = 500.0;
    }
    cfg
}

fn check_classification(trace: &SimTrace, raster: &RasterPlot) {
    let mut seen = vec![vec![0u8; raster.slots()]; raster.devices()];
    for r in &trace.records {
        for &d in r.covered.iter().chain(&r.missed) {
            seen[d][r.slot] += 1;
            assert!(raster.get(d, r.slot));
        }
        for &d in &r.spurious {
            assert!(!raster.get(d, r.slot));
            assert!(r.fired.contains(&d));
        }
        for &d in &r.covered {
            assert!(r.fired.contains(&d));
        }
        assert!(r.fired.iter().all(|d| !r.failed.contains(d)));
    }
    for (d, t) in raster.spikes() {
        assert_eq!(seen[d][t], 1, "spike ({d}, {t}) classified {} times", seen[d][t]);
    }
}

#[test]
fn replay_equals_run_on_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let cfg = random_config(&mut rng);
        let out = simulate(&cfg, None).unwrap();
        let t = &out.trace;
        assert_eq!(replay(t).unwrap(), t.counts());
        check_classification(t, &out.raster);

        let m = compute_metrics(t);
        assert_eq!(m.n_mis + m.n_covered, m.total_spikes);
        if let (Some(g), Some(e)) = (m.gamma_mis, m.eta_stim_pct) {
            assert!((e + 100.0 * g - 100.0).abs() < 1e-12);
        }
        assert!(t.records.windows(2).all(|w| w[0].slot + 1 == w[1].slot));
        assert!(t
            .records
            .iter()
            .all(|r| r.emitted.is_none_or(|f| f < cfg.frequency_count)));
        if cfg.protocol == ProtocolChoice::ChargeAndFire {
            assert!(m.gamma_stim.is_none_or(|g| g <= 1.0));
        }

        let back = SimTrace::read(&t.summary_json(), BufReader::new(t.to_jsonl().as_bytes())).unwrap();
        assert_eq!(&back, t);
    }
}

#[test]
fn same_inputs_give_identical_serialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let cfg = random_config(&mut rng);
        let a = simulate(&cfg, None).unwrap().trace;
        let b = simulate(&cfg, None).unwrap().trace;
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert_eq!(a.summary_json(), b.summary_json());
    }
}

#[test]
fn deleted_record_is_reported_at_its_slot() {
    let cfg = SimConfig {
        duration_s: 0.05,
        ..SimConfig::default()
    };
    let mut t = simulate(&cfg, None).unwrap().trace;
    t.records.remove(17);
    let err = replay(&t).unwrap_err();
    assert!(matches!(err, wioptnd::error::Error::Trace { slot: 17, .. }), "{err}");
}

#[test]
fn collision_free_charge_and_fire_never_misses() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let devices = rng.random_range(1..=6);
        let slots = 200;
        let mut raster = RasterPlot::new(devices, slots, 1.0);
        for t in 0..slots {
            if rng.random_bool(0.4) {
                raster.set(rng.random_range(0..devices), t, true);
            }
        }
        let mut cfg = SimConfig::default();
        cfg.set_device_count(devices);
        cfg.frequency_count = devices;
        let m = compute_metrics(&run(&cfg, &raster, None).unwrap());
        assert_eq!(m.n_mis, 0);
        assert_eq!(m.n_spurious, 0);
        assert_eq!(m.n_emissions, m.total_spikes);
    }
}

#[test]
fn discharges_need_a_full_capacitor() {
    let mut cfg = SimConfig::default();
    cfg.energy.a_eh = 1e-6;
    cfg.start_empty = true;
    // a tiny harvester needs far more than one slot of charging
    assert!(cycles_to_charge(&cfg.energy).unwrap() > 10 * cycles_per_slot(&cfg.energy, 1.0));
    let raster = RasterPlot::from_spikes(4, 20, 1.0, [(0, 2), (1, 5), (2, 9)]).unwrap();
    let t = run(&cfg, &raster, None).unwrap();
    let m = compute_metrics(&t);
    assert_eq!(m.n_covered, 0);
    assert_eq!(m.n_mis, 3);
    assert_eq!(t.counts().failed_discharges, 3);

    cfg.start_empty = false;
    let m = compute_metrics(&run(&cfg, &raster, None).unwrap());
    assert_eq!(m.n_covered, 3);
}

#[test]
fn empty_raster_is_quiet() {
    for p in ProtocolChoice::ALL {
        let mut cfg = SimConfig {
            protocol: p,
            raster: RasterSource::Poisson { rate_hz: 0.0 },
            duration_s: 0.1,
            ..SimConfig::default()
        };
        cfg.window_width = 4;
        let out = simulate(&cfg, None).unwrap();
        let c = out.trace.counts();
        assert_eq!((c.total_spikes, c.emissions, c.spurious), (0, 0, 0));
        assert!(out.trace.records.iter().all(|r| r.fired.is_empty()));
        assert_eq!(out.report.gamma_mis, None);
    }
}
