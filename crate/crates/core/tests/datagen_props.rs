use metacgnn::datagen::{self, GaussMechanism};
use metacgnn::{CeDatabase, Direction, Family};

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    for family in [Family::Net, Family::Gauss, Family::Multi] {
        let a = datagen::generate(family, 8, 60, 42).unwrap();
        let b = datagen::generate(family, 8, 60, 42).unwrap();
        let c = datagen::generate(family, 8, 60, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.entries[0].causal.y, c.entries[0].causal.y);
    }
}

#[test]
fn every_pair_regenerates_from_its_pair_spec() {
    for family in [Family::Net, Family::Gauss, Family::Multi] {
        let db = datagen::generate(family, 10, 50, 7).unwrap();
        for e in &db.entries {
            let spec = e.spec.as_ref().unwrap();
            assert_eq!(spec.generate().unwrap(), e.causal);
        }
    }
}

#[test]
fn outputs_are_standardized_and_labelled() {
    for family in [Family::Net, Family::Gauss, Family::Multi] {
        let db = datagen::generate(family, 12, 200, 3).unwrap();
        for e in &db.entries {
            assert_eq!(e.causal.label, Direction::XToY);
            for col in [&e.causal.x, &e.causal.y] {
                let m = col.iter().sum::<f64>() / col.len() as f64;
                let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / col.len() as f64;
                assert!(m.abs() < 1e-10 && (v.sqrt() - 1.0).abs() < 1e-2, "{}: mean {m} var {v}", e.causal.name);
            }
            let p = e.presented();
            assert_eq!(p.label, if e.flipped { Direction::YToX } else { Direction::XToY });
        }
    }
}

#[test]
fn orientation_is_balanced() {
    let db = datagen::gen_ce_multi(400, 10, 1).unwrap();
    let flipped = db.entries.iter().filter(|e| e.flipped).count();
    assert!((160..=240).contains(&flipped), "{flipped} of 400 flipped");
}

#[test]
fn save_load_roundtrip_preserves_data_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let db = datagen::gen_ce_gauss(6, 40, 9).unwrap();
    db.save(dir.path()).unwrap();
    let back = CeDatabase::load(dir.path()).unwrap();
    assert_eq!(back, db);
}

#[test]
fn mixture_causes_are_often_multimodal() {
    let db = datagen::gen_ce_net(60, 1000, 11).unwrap();
    let multimodal = db.entries.iter().filter(|e| e.diagnostics["cause_modes"] >= 2.0).count();
    assert!(multimodal >= 10, "{multimodal} multimodal causes");
    let multi = datagen::gen_ce_multi(30, 1000, 11).unwrap();
    let unimodal = multi.entries.iter().filter(|e| datagen::histogram_modes(&e.causal.x, 10) == 1).count();
    assert!(unimodal >= 20, "{unimodal} unimodal Gaussian causes");
}

#[test]
fn multi_covers_every_noise_mode() {
    let db = datagen::gen_ce_multi(80, 10, 2).unwrap();
    for mode in datagen::NOISE_MODES {
        let n = db.entries.iter().filter(|e| e.spec.as_ref().unwrap().noise_mode == Some(mode)).count();
        assert!(n > 5, "{mode:?}: {n}");
    }
    assert!(db.entries.iter().all(|e| e.spec.as_ref().unwrap().noise_mode.is_some()));
}

#[test]
fn gauss_mechanism_is_smooth() {
    for seed in 0..20 {
        let m = GaussMechanism::random(seed);
        let bound = m.lipschitz_bound();
        for i in 0..400 {
            let a = -4.0 + i as f64 * 0.02;
            let slope = (m.eval(a + 0.02) - m.eval(a)).abs() / 0.02;
            assert!(slope <= bound + 1e-9, "seed {seed}: slope {slope} > {bound}");
        }
    }
}

#[test]
fn rejects_bad_sizes() {
    assert!(datagen::gen_ce_multi(0, 10, 0).is_err());
    assert!(datagen::gen_ce_multi(3, 1, 0).is_err());
    assert!("weird".parse::<Family>().is_err());
}
