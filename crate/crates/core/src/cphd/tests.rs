use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::models::{ClutterModel, MeasurementModel, ModelSet, MotionModel, Region, SurvivalDetectionParams};

fn bundle(p_s: f64) -> ModelBundle {
    let region = Region::square(100.0);
    ModelBundle {
        motion: ModelSet::single(MotionModel::constant_velocity(0.5)),
        measurement: MeasurementModel::position(1.0),
        birth: BirthModel::none(),
        clutter: ClutterModel { region, lambda: 1.0 },
        rates: SurvivalDetectionParams { p_s, p_d: 0.9 },
    }
}

fn gaussian(x: f64, y: f64, var: f64) -> GaussianDensity {
    GaussianDensity::new(
        DVector::from_vec(vec![x, y, 0.0, 0.0]),
        DMatrix::identity(4, 4) * var,
    )
    .unwrap()
}

fn component(w: f64, x: f64, y: f64, tag: Tag) -> GaussianComponent {
    GaussianComponent {
        weight: w,
        density: gaussian(x, y, 2.0),
        model: 0,
        tag,
    }
}

fn filter(n_max: usize) -> CphdFilter {
    CphdFilter::new(
        bundle(0.95),
        CphdConfig {
            n_max,
            ..CphdConfig::default()
        },
    )
    .unwrap()
}

// Independent statement of the CPHD update with explicit factorials, explicit
// Poisson clutter cardinality and subset-enumerated symmetric functions.
struct Oracle {
    card: Vec<f64>,
    weights_missed: Vec<f64>,
    weights_detected: Vec<Vec<f64>>,
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn esf_brute(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len() + 1];
    for mask in 0u32..(1 << v.len()) {
        let mut prod = 1.0;
        for (i, x) in v.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prod *= x;
            }
        }
        out[mask.count_ones() as usize] += prod;
    }
    out
}

fn gauss_pdf(z: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = z - mean;
    let inv = cov.clone().try_inverse().unwrap();
    let q = (d.transpose() * inv * &d)[(0, 0)];
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(z.len() as i32) * cov.determinant()).sqrt()
}

fn oracle(
    comps: &[GaussianComponent],
    rho: &[f64],
    zs: &[DVector<f64>],
    lambda: f64,
    p_d: f64,
    b: &ModelBundle,
) -> Oracle {
    let volume = b.clutter.region.area();
    let h = &b.measurement.h;
    let r = &b.measurement.r;
    let psi: Vec<Vec<f64>> = comps
        .iter()
        .map(|c| {
            let s = h * c.density.cov() * h.transpose() + r;
            let zhat = h * c.density.mean();
            zs.iter().map(|z| p_d * volume * gauss_pdf(z, &zhat, &s)).collect()
        })
        .collect();
    let w: f64 = comps.iter().map(|c| c.weight).sum();
    let xi_of = |subset: &[usize]| -> Vec<f64> {
        subset
            .iter()
            .map(|&k| comps.iter().zip(&psi).map(|(c, p)| c.weight * p[k]).sum())
            .collect()
    };
    let rho_k = |c: usize| (-lambda).exp() * lambda.powi(c as i32) / fact(c);
    let upsilon = |u: usize, subset: &[usize], n: usize| -> f64 {
        let e = esf_brute(&xi_of(subset));
        let m = subset.len();
        let mut sum = 0.0;
        for (j, ej) in e.iter().enumerate().take(m.min(n) + 1) {
            if j + u > n {
                continue;
            }
            let perm = fact(n) / fact(n - j - u);
            sum += fact(m - j) * rho_k(m - j) * perm * ((1.0 - p_d) * w).powi((n - j - u) as i32) / w.powi(n as i32)
                * ej;
        }
        sum
    };
    let all: Vec<usize> = (0..zs.len()).collect();
    let inner = |u: usize, subset: &[usize]| -> f64 { (0..rho.len()).map(|n| rho[n] * upsilon(u, subset, n)).sum() };
    let l0 = inner(0, &all);
    let card: Vec<f64> = (0..rho.len()).map(|n| rho[n] * upsilon(0, &all, n) / l0).collect();
    let miss = inner(1, &all) / l0;
    let weights_missed = comps.iter().map(|c| c.weight * (1.0 - p_d) * miss).collect();
    let weights_detected = (0..zs.len())
        .map(|k| {
            let rest: Vec<usize> = all.iter().copied().filter(|&i| i != k).collect();
            let ratio = inner(1, &rest) / l0;
            comps.iter().zip(&psi).map(|(c, p)| c.weight * p[k] * ratio).collect()
        })
        .collect();
    Oracle {
        card,
        weights_missed,
        weights_detected,
    }
}

fn points(zs: &[(f64, f64)]) -> Vec<Point> {
    zs.iter().map(|&(x, y)| Point::new(x, y)).collect()
}

fn check_against_oracle(comps: Vec<GaussianComponent>, rho: Vec<f64>, zs: &[(f64, f64)], lambda: f64, p_d: f64) {
    let n_max = rho.len() - 1;
    let f = filter(n_max);
    let state = CphdState::new(comps.clone(), CardinalityDistribution::new(rho.clone()).unwrap(), 1);
    let pts = points(zs);
    let out = f.update(&state, &pts, lambda, p_d).unwrap();
    let vecs: Vec<DVector<f64>> = pts.iter().map(|p| DVector::from_column_slice(p.as_slice())).collect();
    let o = oracle(&comps, &rho, &vecs, lambda, p_d, f.bundle());

    for (a, b) in out.cardinality.probs().iter().zip(&o.card) {
        assert!((a - b).abs() <= 1e-9 * b.max(1e-3), "cardinality {a} vs {b}");
    }
    let mut expected: Vec<f64> = o.weights_missed.iter().copied().filter(|w| *w > 0.0).collect();
    for row in &o.weights_detected {
        expected.extend(row.iter().copied().filter(|w| *w > 0.0));
    }
    let got: Vec<f64> = out.components.iter().map(|c| c.weight).collect();
    assert_eq!(got.len(), expected.len());
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-12), "weight {a} vs {b}");
    }
}

#[test]
fn update_matches_explicit_formula_small_case() {
    let comps = vec![component(0.7, 20.0, 20.0, 1), component(0.5, 50.0, 52.0, 2)];
    let rho = vec![0.2, 0.4, 0.3, 0.1, 0.0];
    check_against_oracle(comps, rho, &[(20.5, 19.0), (51.0, 52.5), (80.0, 10.0)], 2.0, 0.8);
}

#[test]
fn update_matches_explicit_formula_without_measurements() {
    let comps = vec![component(1.3, 20.0, 20.0, 1)];
    check_against_oracle(comps, vec![0.1, 0.5, 0.3, 0.1], &[], 3.0, 0.6);
}

#[test]
fn update_matches_explicit_formula_with_zero_clutter() {
    let comps = vec![component(0.9, 10.0, 10.0, 1), component(0.9, 60.0, 60.0, 2)];
    check_against_oracle(comps, vec![0.0, 0.3, 0.7], &[(10.0, 11.0), (59.0, 60.0)], 0.0, 0.9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn update_matches_explicit_formula_random(
        comps in prop::collection::vec((0.05f64..1.5, 5.0f64..95.0, 5.0f64..95.0), 1..4),
        zs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 0..5),
        rho in prop::collection::vec(0.01f64..1.0, 2..7),
        lambda in 0.1f64..5.0,
        p_d in 0.05f64..0.99,
    ) {
        let total: f64 = rho.iter().sum();
        let rho: Vec<f64> = rho.iter().map(|r| r / total).collect();
        let comps: Vec<_> = comps
            .iter()
            .enumerate()
            .map(|(i, &(w, x, y))| component(w, x, y, i as Tag + 1))
            .collect();
        check_against_oracle(comps, rho, &zs, lambda, p_d);
    }

    #[test]
    fn posterior_mass_equals_cardinality_mean(
        comps in prop::collection::vec((0.1f64..1.5, 5.0f64..95.0, 5.0f64..95.0), 1..5),
        zs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 0..8),
        lambda in 0.5f64..10.0,
        p_d in 0.1f64..0.99,
    ) {
        let comps: Vec<_> = comps.iter().map(|&(w, x, y)| component(w, x, y, 1)).collect();
        let f = filter(20);
        let mass: f64 = comps.iter().map(|c| c.weight).sum();
        let rho = CardinalityDistribution::poisson(mass, 20).unwrap();
        let out = f.update(&CphdState::new(comps, rho, 1), &points(&zs), lambda, p_d).unwrap();
        let mean = out.cardinality.mean();
        prop_assert!((out.total_weight() - mean).abs() < 1e-6 * mean.max(1.0));
    }

    #[test]
    fn update_is_invariant_to_measurement_order(
        zs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..7),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let comps = vec![component(0.8, 30.0, 30.0, 1), component(0.6, 70.0, 40.0, 2)];
        let f = filter(10);
        let state = CphdState::new(comps, CardinalityDistribution::poisson(1.4, 10).unwrap(), 1);
        let mut shuffled = zs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = f.update(&state, &points(&zs), 3.0, 0.85).unwrap();
        let b = f.update(&state, &points(&shuffled), 3.0, 0.85).unwrap();
        for (x, y) in a.cardinality.probs().iter().zip(b.cardinality.probs()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        let key = |s: &CphdState| {
            let mut v: Vec<(f64, f64, f64)> = s
                .components
                .iter()
                .map(|c| (c.weight, c.density.mean()[0], c.density.mean()[1]))
                .collect();
            v.sort_by(|p, q| p.partial_cmp(q).unwrap());
            v
        };
        for (p, q) in key(&a).iter().zip(key(&b)) {
            prop_assert!((p.0 - q.0).abs() < 1e-10 * p.0.max(1e-12));
            prop_assert!((p.1 - q.1).abs() < 1e-9 && (p.2 - q.2).abs() < 1e-9);
        }
    }
}

#[test]
fn single_target_without_clutter_reduces_to_kalman() {
    let f = filter(3);
    let prior = component(1.0, 40.0, 40.0, 7);
    let state = CphdState::new(vec![prior.clone()], CardinalityDistribution::delta(1, 3), 1);
    let out = f.update(&state, &[Point::new(41.0, 39.5)], 0.0, 1.0).unwrap();
    assert_eq!(out.components.len(), 1);
    let c = &out.components[0];
    assert!((c.weight - 1.0).abs() < 1e-12);
    assert!((out.cardinality.probs()[1] - 1.0).abs() < 1e-12);

    // Kalman by hand: P = 2I, R = I, H picks position -> gain 2/3 on position.
    let m = c.density.mean();
    assert!((m[0] - (40.0 + 2.0 / 3.0)).abs() < 1e-12);
    assert!((m[1] - (40.0 - 1.0 / 3.0)).abs() < 1e-12);
    assert!((c.density.cov()[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
    assert!((c.density.cov()[(2, 2)] - 2.0).abs() < 1e-12);
    assert_eq!(c.tag, 7);
}

#[test]
fn zero_detection_probability_keeps_means() {
    let f = filter(6);
    let comps = vec![component(0.7, 20.0, 20.0, 1), component(1.1, 50.0, 52.0, 2)];
    let state = CphdState::new(comps.clone(), CardinalityDistribution::poisson(1.8, 6).unwrap(), 1);
    let out = f.update(&state, &points(&[(20.0, 20.0), (3.0, 4.0)]), 4.0, 0.0).unwrap();
    assert_eq!(out.components.len(), 2);
    let ratio = out.components[0].weight / comps[0].weight;
    for (a, b) in out.components.iter().zip(&comps) {
        assert_eq!(a.density, b.density);
        assert!((a.weight / b.weight - ratio).abs() < 1e-12);
    }
}

#[test]
fn clutter_only_scene_stays_empty() {
    let f = filter(10);
    let mut state = f.initial_state();
    for k in 0..5 {
        let (next, tracks) = f.step(&state, &points(&[(10.0 + k as f64, 20.0), (70.0, 3.0)]), 2.0, 0.9).unwrap();
        assert!(tracks.is_empty());
        assert!(next.components.is_empty());
        assert!((next.cardinality.probs()[0] - 1.0).abs() < 1e-12);
        state = next;
    }
}

#[test]
fn zero_clutter_rate_is_handled() {
    let f = filter(4);
    let state = CphdState::new(vec![component(1.0, 40.0, 40.0, 1)], CardinalityDistribution::delta(1, 4), 1);
    let out = f.update(&state, &[], 0.0, 0.9).unwrap();
    assert!((out.cardinality.probs()[1] - 1.0).abs() < 1e-12);
    assert!((out.components[0].weight - 1.0).abs() < 1e-12);
}

#[test]
fn impossible_measurement_count_collapses() {
    let f = filter(1);
    let state = CphdState::new(vec![component(1.0, 40.0, 40.0, 1)], CardinalityDistribution::delta(1, 1), 3);
    let err = f.update(&state, &points(&[(40.0, 40.0), (10.0, 10.0)]), 0.0, 1.0).unwrap_err();
    assert!(matches!(err, Error::CardinalityCollapse { frame: 3 }));
}

#[test]
fn invalid_rates_are_rejected() {
    let f = filter(4);
    let state = f.initial_state();
    assert!(f.update(&state, &[], -1.0, 0.5).is_err());
    assert!(f.update(&state, &[], 1.0, 1.5).is_err());
    assert!(f.update(&state, &[], f64::NAN, 0.5).is_err());
}

#[test]
fn prediction_scales_mass_and_cardinality() {
    let mut b = bundle(0.9);
    b.motion = ModelSet::default();
    b.birth = BirthModel {
        components: vec![(0.3, gaussian(50.0, 50.0, 100.0))],
        cardinality: CardinalityDistribution::poisson(0.3, 20).unwrap(),
    };
    let f = CphdFilter::new(b, CphdConfig { n_max: 20, ..CphdConfig::default() }).unwrap();
    let comps = vec![component(1.0, 20.0, 20.0, 1), component(2.0, 60.0, 60.0, 2)];
    let state = CphdState::new(comps, CardinalityDistribution::poisson(3.0, 20).unwrap(), 4);
    let out = f.predict(&state).unwrap();
    assert!((out.total_weight() - (0.9 * 3.0 + 0.3)).abs() < 1e-12);
    assert!((out.cardinality.mean() - (0.9 * 3.0 + 0.3)).abs() < 1e-6);
    // two models: every survivor spawns two components, birth splits in two
    assert_eq!(out.components.len(), 6);
    let birth_tags: Vec<Tag> = out.components[4..].iter().map(|c| c.tag).collect();
    assert_eq!(birth_tags[0], birth_tags[1]);
    assert!(birth_tags[0] > 2);
    assert_eq!(out.frame, 5);
}

#[test]
fn first_prediction_uses_initial_birth_mass() {
    let mut b = bundle(0.9);
    b.birth = BirthModel {
        components: vec![(0.2, gaussian(50.0, 50.0, 100.0))],
        cardinality: CardinalityDistribution::poisson(0.2, 40).unwrap(),
    };
    let f = CphdFilter::new(
        b,
        CphdConfig {
            n_max: 40,
            initial_birth_mean: 8.0,
            ..CphdConfig::default()
        },
    )
    .unwrap();
    let first = f.predict(&f.initial_state()).unwrap();
    assert!((first.total_weight() - 8.0).abs() < 1e-12);
    assert!((first.cardinality.mean() - 8.0).abs() < 1e-6);
    let second = f.predict(&first).unwrap();
    assert!((second.total_weight() - (0.9 * 8.0 + 0.2)).abs() < 1e-9);
}

#[test]
fn detections_of_newborn_components_get_distinct_tags() {
    let mut b = bundle(0.9);
    b.birth = BirthModel {
        components: vec![(2.0, gaussian(50.0, 50.0, 900.0))],
        cardinality: CardinalityDistribution::poisson(2.0, 10).unwrap(),
    };
    let f = CphdFilter::new(b, CphdConfig { n_max: 10, ..CphdConfig::default() }).unwrap();
    let predicted = f.predict(&f.initial_state()).unwrap();
    let birth_tag = predicted.components[0].tag;
    let out = f.update(&predicted, &points(&[(20.0, 20.0), (80.0, 80.0)]), 1.0, 0.9).unwrap();
    let mut tags: Vec<Tag> = out.components.iter().map(|c| c.tag).collect();
    assert_eq!(tags[0], birth_tag);
    tags.sort_unstable();
    tags.dedup();
    assert_eq!(tags.len(), 3);
}

#[test]
fn reduction_merges_prunes_caps_and_rescales() {
    let params = ReductionParams {
        prune_threshold: 0.01,
        merge_threshold: 4.0,
        max_components: 2,
    };
    let comps = vec![
        component(0.5, 10.0, 10.0, 1),
        component(0.5, 10.0, 10.0, 2),
        component(0.001, 50.0, 50.0, 3),
        component(0.2, 80.0, 80.0, 4),
        component(0.1, 30.0, 80.0, 5),
    ];
    let out = reduce(comps, &params);
    assert_eq!(out.len(), 2);
    let total = 0.5 + 0.5 + 0.001 + 0.2 + 0.1;
    assert!((out.iter().map(|c| c.weight).sum::<f64>() - total).abs() < 1e-12);
    assert_eq!(out[0].tag, 1);
    assert_eq!(out[0].density, gaussian(10.0, 10.0, 2.0));
    assert!((out[0].weight / out[1].weight - 1.0 / 0.2).abs() < 1e-12);
}

#[test]
fn merge_matches_moment_oracle() {
    let a = component(0.3, 0.0, 0.0, 1);
    let b = component(0.1, 2.0, 0.0, 2);
    let out = reduce(vec![a, b], &ReductionParams::default());
    assert_eq!(out.len(), 1);
    let m = out[0].density.mean();
    assert!((m[0] - 0.5).abs() < 1e-12);
    // cov_xx = 2 + (0.75·0.25 + 0.25·2.25) = 2.75
    assert!((out[0].density.cov()[(0, 0)] - 2.75).abs() < 1e-12);
    assert!((out[0].density.cov()[(1, 1)] - 2.0).abs() < 1e-12);
    assert_eq!(out[0].tag, 1);
}

#[test]
fn reduction_never_merges_across_models() {
    let mut b = component(0.5, 10.0, 10.0, 2);
    b.model = 1;
    let out = reduce(vec![component(0.5, 10.0, 10.0, 1), b], &ReductionParams::default());
    assert_eq!(out.len(), 2);
}

#[test]
fn extraction_emits_mode_with_unique_tags() {
    let comps = vec![
        component(0.9, 10.0, 10.0, 1),
        component(0.8, 10.5, 10.0, 1),
        component(0.7, 60.0, 60.0, 1),
        component(0.6, 30.0, 30.0, 2),
    ];
    let mut state = CphdState::new(comps, CardinalityDistribution::delta(3, 5), 2);
    let tracks = extract(&mut state, 4.0);
    assert_eq!(tracks.len(), 3);
    let mut tags: Vec<Tag> = tracks.iter().map(|t| t.tag).collect();
    assert_eq!(tags[0], 1);
    assert_eq!(tags[2], 2);
    assert!(tags[1] > 2);
    tags.sort_unstable();
    tags.dedup();
    assert_eq!(tags.len(), 3);
    assert!((tracks[1].state[0] - 60.0).abs() < 1e-12);
}

#[test]
fn extraction_of_empty_state() {
    let mut state = CphdState::empty(5);
    assert!(extract(&mut state, 4.0).is_empty());
}
