use boab_core::balancing::{StrategyKind, StrategySpec};
use boab_core::boab::{boab_search, ComplexitySpec};
use boab_core::datagen::{dose_means, gen_dose, gen_hard, gen_topology, GenDoseParams, GenHardParams, TopologyKind};
use boab_core::dataset::Dataset;
use boab_core::eval::{adrf, interpolate_effect, pehe, pehe_from_means};
use boab_core::model::predict_means;
use boab_core::model_file::{decode, encode};
use boab_core::train::{train, TrainConfig};

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 40,
        d_z: 4,
        phi_hidden: vec![8],
        head_hidden: vec![4],
        ..TrainConfig::default()
    }
}

#[test]
fn generators_repeat_under_a_seed() {
    let p = GenHardParams { n: 200, seed: 3, ..GenHardParams::default() };
    assert_eq!(gen_hard(&p).unwrap(), gen_hard(&p).unwrap());
    assert_ne!(gen_hard(&p).unwrap().y, gen_hard(&GenHardParams { seed: 4, ..p }).unwrap().y);
    let d = GenDoseParams { n: 150, ..GenDoseParams::default() };
    assert_eq!(gen_dose(&d).unwrap(), gen_dose(&d).unwrap());
}

#[test]
fn csv_roundtrip_keeps_every_value() {
    let ds = gen_hard(&GenHardParams { n: 50, d: 5, k: 3, ..GenHardParams::default() }).unwrap();
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).unwrap();
    let back = Dataset::read_csv(&buf[..], ds.provenance.clone()).unwrap();
    assert_eq!(back.x, ds.x);
    assert_eq!(back.t, ds.t);
    assert_eq!(back.y, ds.y);
    assert_eq!(back.truth, ds.truth);
}

#[test]
fn truth_means_have_zero_pehe_and_dose_minimum_at_four() {
    let ds = gen_dose(&GenDoseParams { n: 300, ..GenDoseParams::default() }).unwrap();
    let truth = ds.truth.clone().unwrap();
    assert_eq!(pehe_from_means(&truth, &truth).unwrap().pehe, 0.0);
    let means = truth.column_means();
    let argmin = means.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(argmin, 4);
    let row = dose_means(ds.x.row(0), 10);
    assert_eq!(row[4] + 16.0, row[0]);
}

#[test]
fn training_is_deterministic_and_models_reload_bit_exact() {
    let ds = gen_hard(&GenHardParams { n: 160, d: 5, k: 3, seed: 2, ..GenHardParams::default() }).unwrap();
    let spec = StrategySpec::new(StrategyKind::Pair);
    let a = train(&ds, 0.5, &spec, &quick(), None).unwrap();
    let b = train(&ds, 0.5, &spec, &quick(), None).unwrap();
    assert_eq!(a.model, b.model);
    let back = decode(&encode(&a.model).unwrap()).unwrap();
    assert_eq!(back, a.model);
    assert_eq!(predict_means(&back, &ds.x).unwrap(), predict_means(&a.model, &ds.x).unwrap());
}

#[test]
fn adrf_differences_are_mean_effects() {
    let ds = gen_hard(&GenHardParams { n: 120, d: 5, k: 3, ..GenHardParams::default() }).unwrap();
    let fit = train(&ds, 0.0, &StrategySpec::new(StrategyKind::Ova), &quick(), None).unwrap();
    let curve = adrf(&fit.model, &ds).unwrap();
    let m = predict_means(&fit.model, &ds.x).unwrap();
    let mean_tau: f64 = (0..ds.n()).map(|i| m.get(i, 0) - m.get(i, 2)).sum::<f64>() / ds.n() as f64;
    assert!((curve[0] - curve[2] - mean_tau).abs() < 1e-12);
    let r = pehe(&fit.model, &ds).unwrap();
    assert!((r.per_pair.sum() - r.pehe).abs() < 1e-12);
}

#[test]
fn interpolation_endpoints_are_the_arm_means() {
    let (ds, graph) = gen_topology(TopologyKind::Tree, 140, 0.1, 1).unwrap();
    let spec = StrategySpec { geodesic_weight: 5.0, ..StrategySpec::new(StrategyKind::Agg) };
    let fit = train(&ds, 1.0, &spec, &quick(), Some(&graph)).unwrap();
    let curve = interpolate_effect(&fit.model, 3, 6, 4, &ds).unwrap();
    let means = adrf(&fit.model, &ds).unwrap();
    assert!((curve[0].1 - means[3]).abs() < 1e-10);
    assert!((curve[4].1 - means[6]).abs() < 1e-10);

    let multi = train(&ds, 0.0, &StrategySpec::new(StrategyKind::Pair), &quick(), None).unwrap();
    assert!(interpolate_effect(&multi.model, 3, 6, 4, &ds).is_err());
}

#[test]
fn boab_declares_a_grid_weight() {
    let ds = gen_hard(&GenHardParams { n: 150, d: 5, k: 3, ..GenHardParams::default() }).unwrap();
    let grid = [0.1, 0.5, 1.0, 5.0];
    let res = boab_search(&ds, &grid, &StrategySpec::new(StrategyKind::Agg), &quick(), &ComplexitySpec::default(), None, 2).unwrap();
    assert_eq!(res.points.len(), 4);
    assert!(grid.contains(&res.alpha_hat));
    let best = res.points.iter().map(|p| p.qhat).fold(f64::MAX, f64::min);
    assert_eq!(res.points[res.index].qhat, best);
}
