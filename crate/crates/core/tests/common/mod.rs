//! Oracles and fixtures shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use metacgnn::embeddings::CmeConfig;
use metacgnn::kernels::{gaussian_kernel, BandwidthSet, MmdEstimator, RffMap};
use metacgnn::nn::{assign_values, finite_diff_check_steps, flatten_grads, flatten_values};
use metacgnn::trainer::MetaObjective;
use metacgnn::{rng, Direction, EncoderKind, GeneratorConfig, GeneratorModel, PairDataset, Variant};

/// Textbook double loop, written independently of the library estimator.
pub fn oracle_mmd2(u: &[Vec<f64>], v: &[Vec<f64>], etas: &[f64]) -> f64 {
    let k = |a: &[f64], b: &[f64]| -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        etas.iter().map(|e| (-e * d2).exp()).sum()
    };
    let (m, n) = (u.len() as f64, v.len() as f64);
    let mut xx = 0.0;
    for i in 0..u.len() {
        for j in 0..u.len() {
            if i != j {
                xx += k(&u[i], &u[j]);
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..v.len() {
        for j in 0..v.len() {
            if i != j {
                yy += k(&v[i], &v[j]);
            }
        }
    }
    let mut xy = 0.0;
    for a in u {
        for b in v {
            xy += k(a, b);
        }
    }
    xx / (m * (m - 1.0)) + yy / (n * (n - 1.0)) - 2.0 * xy / (m * n)
}

pub fn random_set(r: &mut rng::Rng, n: usize, dim: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| shift + 1.5 * rng::normal(r)).collect()).collect()
}

/// Largest deviation of the library MMD from the oracle over `trials` random set pairs of sizes 2-30.
pub fn mmd_oracle_max_error(trials: usize, seed: u64) -> f64 {
    use rand::Rng;
    let bands = BandwidthSet::default();
    let mut r = rng::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let dim = r.gen_range(1..=3);
        let (m, n, shift) = (r.gen_range(2..=30), r.gen_range(2..=30), r.gen_range(-1.0..1.0));
        let u = random_set(&mut r, m, dim, 0.0);
        let v = random_set(&mut r, n, dim, shift);
        let got = metacgnn::kernels::mmd2_unbiased(&u.concat(), &v.concat(), dim, &bands).unwrap();
        worst = worst.max((got - oracle_mmd2(&u, &v, bands.etas())).abs());
    }
    worst
}

/// Mean |z(a)'z(b) - k(a, b)| over `pairs` Gaussian point pairs, averaged over `maps` RFF maps.
pub fn rff_mean_abs_error(eta: f64, features: usize, maps: u64, pairs: usize) -> f64 {
    let mut total = 0.0;
    for map_seed in 0..maps {
        let map = RffMap::for_bandwidth(eta, 2, features, map_seed).unwrap();
        let mut r = rng::rng(1000 + map_seed);
        let mut err = 0.0;
        for _ in 0..pairs {
            let a = [rng::normal(&mut r), rng::normal(&mut r)];
            let b = [rng::normal(&mut r), rng::normal(&mut r)];
            let za = map.features(&a).unwrap();
            let zb = map.features(&b).unwrap();
            let approx: f64 = za.iter().zip(&zb).map(|(p, q)| p * q).sum();
            err += (approx - gaussian_kernel(&a, &b, eta).unwrap()).abs();
        }
        total += err / pairs as f64;
    }
    total / maps as f64
}

/// Average precision straight from its definition: mean over positives of the
/// precision among everything scored at least as high.
pub fn oracle_ap(scores: &[(f64, bool)]) -> f64 {
    let positives: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    let mut total = 0.0;
    for &t in &positives {
        let above: Vec<&(f64, bool)> = scores.iter().filter(|s| s.0 >= t).collect();
        total += above.iter().filter(|s| s.1).count() as f64 / above.len() as f64;
    }
    total / positives.len() as f64
}

/// Random instances of 1-8 scores with frequent ties; returns (largest deviation, instances checked).
pub fn auprc_oracle_max_error(trials: usize, seed: u64) -> (f64, usize) {
    use rand::Rng;
    let mut r = rng::rng(seed);
    let (mut worst, mut checked) = (0.0f64, 0);
    for _ in 0..trials {
        let n = r.gen_range(1..=8);
        let scores: Vec<(f64, bool)> = (0..n).map(|_| (r.gen_range(0..4) as f64 * 0.5, r.gen_bool(0.5))).collect();
        let pos = scores.iter().filter(|s| s.1).count();
        match metacgnn::metrics::auprc(&scores) {
            Ok(v) => {
                worst = worst.max((v - oracle_ap(&scores)).abs());
                checked += 1;
            }
            Err(_) if pos == 0 || pos == n => {}
            Err(_) => return (f64::INFINITY, checked),
        }
    }
    (worst, checked)
}

pub fn toy(seed: u64, m: usize) -> PairDataset {
    let x = rng::normals(seed, m);
    let e = rng::normals(seed + 100, m);
    let y = x.iter().zip(&e).map(|(a, b)| 0.8 * a + 0.3 * a * a + 0.4 * b).collect();
    metacgnn::standardize(&PairDataset::new(format!("toy{seed}"), x, y, Direction::XToY).unwrap()).unwrap()
}

pub fn model(kind: EncoderKind, variant: Variant, h: usize, seed: u64) -> GeneratorModel {
    GeneratorModel::new(GeneratorConfig {
        encoder_kind: kind,
        variant,
        decoder_hidden: h,
        cme: CmeConfig { features: 20, seed: seed + 7, ..CmeConfig::default() },
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

/// Central differences of the frozen-noise meta loss over every trainable parameter.
/// Entries near 1e-8 need the larger steps; entries next to a ReLU kink need the small one.
pub fn loss_gradient_error(kind: EncoderKind, variant: Variant) -> f64 {
    let mut gen = model(kind, variant, 6, 3);
    let datasets = vec![toy(1, 12), toy(2, 9)];
    let obj = MetaObjective::new(&gen, datasets, &BandwidthSet::default(), MmdEstimator::Quadratic, 11).unwrap();
    let noise = vec![rng::normals(21, 12), rng::normals(22, 9)];
    let batch = [0, 1];
    gen.zero_grad();
    obj.batch_loss(&mut gen, &batch, &noise, true, 0).unwrap();
    let point = flatten_values(gen.trainable_params());
    let analytic = flatten_grads(gen.trainable_params());
    let mut probe = gen.clone();
    finite_diff_check_steps(&point, &analytic, &[1e-6, 1e-5, 1e-4], |p| {
        assign_values(probe.trainable_params_mut(), p).unwrap();
        obj.batch_loss(&mut probe, &batch, &noise, false, 0).unwrap()
    })
}

/// Largest CME primal/dual gap and largest change under a row permutation.
pub fn cme_errors() -> (f64, f64) {
    use metacgnn::embeddings::{fit_cmeo, fit_cmeo_dual};
    let cfg = CmeConfig { features: 40, ..CmeConfig::default() };
    let (fx, fy) = cfg.maps().unwrap();
    let d = toy(13, 30);
    let primal = fit_cmeo(&d, &fx, &fy, 0.5).unwrap();
    let dual = fit_cmeo_dual(&d, &fx, &fy, 0.5).unwrap();
    let perm: Vec<usize> = (0..30).map(|i| (i * 7) % 30).collect();
    let shuffled = fit_cmeo(&d.select(&perm), &fx, &fy, 0.5).unwrap();
    let (mut gap, mut perm_err) = (0.0f64, 0.0f64);
    for x in [-2.0, -0.3, 0.0, 0.9, 3.0] {
        let (a, b, c) = (primal.embed(x), dual.embed(x), shuffled.embed(x));
        for i in 0..a.len() {
            gap = gap.max((a[i] - b[i]).abs());
            perm_err = perm_err.max((a[i] - c[i]).abs());
        }
    }
    (gap, perm_err)
}

/// Largest change of the DeepSets feature under a row permutation.
pub fn deepsets_permutation_error() -> f64 {
    let enc = metacgnn::DeepSetsEncoder::new(10, 4).unwrap();
    let d = toy(12, 40);
    let mut perm: Vec<usize> = (0..40).collect();
    perm.rotate_left(13);
    perm.swap(0, 31);
    let a = enc.embed(&d).unwrap();
    let b = enc.embed(&d.select(&perm)).unwrap();
    a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// FiLM with gamma 1 and beta 0 is the identity, and a zeroed FiLM net with
/// unit gamma bias makes the full model generate exactly what the no-FiLM model does.
pub fn film_identity_holds() -> bool {
    use metacgnn::generator::{film_modulate, FilmNet};
    let hidden = [0.3, -1.7, 2.5e-7, 1e300];
    if film_modulate(&[0.0; 4], &[1.0; 4], &hidden).unwrap() != hidden.to_vec() {
        return false;
    }
    let mut full = model(EncoderKind::DeepSets, Variant::Full, 7, 2);
    let mut film = FilmNet::new(10, 7, 0).unwrap();
    for p in film.net.params_mut() {
        p.values.iter_mut().for_each(|v| *v = 0.0);
    }
    let last = film.net.params_mut().last_mut().unwrap();
    last.values[7..].iter_mut().for_each(|v| *v = 1.0);
    full.film = film;
    let mut plain = full.clone();
    plain.config.variant = Variant::NoFilm;
    let d = toy(3, 15);
    full.generate(&d, 4).unwrap() == plain.generate(&d, 4).unwrap()
}

/// Smallest amortized sigma over `draws` random parameter and feature draws; NaN if any is non-finite.
pub fn min_amortized_sigma(draws: usize) -> f64 {
    use metacgnn::generator::AmortizationNet;
    use rand::Rng;
    let mut r = rng::rng(99);
    let mut net = AmortizationNet::new(10, 1).unwrap();
    let mut lowest = f64::INFINITY;
    for trial in 0..draws {
        if trial % 100 == 0 {
            let scale = [0.1, 1.0, 10.0, 100.0][(trial / 100) % 4];
            for p in net.net.params_mut() {
                p.values.iter_mut().for_each(|v| *v = scale * rng::normal(&mut r));
            }
        }
        let feature: Vec<f64> = (0..10).map(|_| r.gen_range(-50.0..50.0)).collect();
        let (_, sigma) = net.latent_params(&feature).unwrap();
        if !sigma.is_finite() {
            return f64::NAN;
        }
        lowest = lowest.min(sigma);
    }
    lowest
}
