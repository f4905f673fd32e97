mod common;

use common::*;
use rand::Rng;
use rangeseg::net::{FilterSpec, Network, NetworkConfig};
use rangeseg::projection::{IndexMap, RangeImage};
use rangeseg::train::*;
use rangeseg::Error;

fn small_config(steps: usize) -> TrainConfig {
    let data = DataConfig {
        scans: 4,
        height: 16,
        width: 64,
        ..DataConfig::default()
    };
    TrainConfig {
        steps,
        batch_size: 2,
        network: NetworkConfig {
            filters: FilterSpec::Explicit([8, 8, 8, 8, 8, 8]),
            blocks: [1, 1, 1, 1, 1, 1],
            num_classes: 4,
            ..NetworkConfig::default()
        },
        data,
        ..TrainConfig::default()
    }
}

fn small_data(cfg: &TrainConfig) -> Vec<Sample> {
    synthetic_dataset(&cfg.data, cfg.projection).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn loss_decreases_and_runs_repeat_exactly() {
    let cfg = small_config(30);
    let data = small_data(&cfg);
    let (mut a, ra) = train(&cfg, &data).unwrap();
    let head: f64 = ra.loss_trace[..5].iter().sum();
    let tail: f64 = ra.loss_trace[25..].iter().sum();
    assert!(tail < head, "{:?}", ra.loss_trace);

    let (mut b, rb) = train(&cfg, &data).unwrap();
    assert_eq!(bits(&ra.loss_trace), bits(&rb.loss_trace));
    assert_eq!(a.tensors(), b.tensors());
    assert_eq!(ra.train.pixel, rb.train.pixel);
    assert_eq!(ra.param_count, a.count_params());
}

#[test]
fn evaluate_reproduces_the_report() {
    let cfg = small_config(5);
    let data = small_data(&cfg);
    let (net, report) = train(&cfg, &data).unwrap();
    let again = evaluate(&net, &data, true).unwrap();
    assert_eq!(again.pixel, report.train.pixel);
    assert_eq!(again.point, report.train.point);
}

#[test]
fn zero_learning_rate_keeps_the_loss_constant() {
    let mut cfg = small_config(4);
    cfg.optimizer = OptimizerConfig::Adam {
        lr: 0.0,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
    cfg.batch_size = 1;
    let data = small_data(&cfg);
    let (_, r) = train(&cfg, &data[..1]).unwrap();
    assert!(
        r.loss_trace.iter().all(|l| l.to_bits() == r.loss_trace[0].to_bits()),
        "{:?}",
        r.loss_trace
    );
}

#[test]
fn every_loss_switch_trains() {
    for loss in [LossKind::CrossEntropy, LossKind::Dice, LossKind::Both] {
        let mut cfg = small_config(3);
        cfg.loss = loss;
        cfg.optimizer = OptimizerConfig::Sgd { lr: 0.05 };
        let (_, r) = train(&cfg, &small_data(&cfg)).unwrap();
        assert!(r.loss_trace.iter().all(|l| l.is_finite()), "{loss:?}");
    }
}

#[test]
fn divergence_aborts_with_step() {
    let mut cfg = small_config(10);
    cfg.optimizer = OptimizerConfig::Sgd { lr: 1e300 };
    match train(&cfg, &small_data(&cfg)) {
        Err(Error::Diverged { step, .. }) => assert!((1..10).contains(&step)),
        other => panic!("expected divergence, got {:?}", other.map(|(_, r)| r.loss_trace)),
    }
}

#[test]
fn inconsistent_datasets_are_rejected() {
    let cfg = small_config(1);
    let mut data = small_data(&cfg);
    assert!(train(&cfg, &[]).is_err());
    let other = synthetic_dataset(
        &DataConfig {
            width: 128,
            ..cfg.data.clone()
        },
        cfg.projection,
    )
    .unwrap();
    data.push(other[0].clone());
    assert!(matches!(train(&cfg, &data), Err(Error::Shape(_))));

    let mut narrow = cfg.clone();
    narrow.network.num_classes = 2;
    assert!(train(&narrow, &small_data(&cfg)).is_err());
}

/// IoU of class c when predictions and truth are independent with marginals
/// p_c and q_c: E|P and T| / E|P or T| = pq / (p + q - pq).
fn independent_miou(preds: &[Vec<u16>], truth: &[&[u16]], classes: &[u16]) -> f64 {
    let n: usize = truth.iter().map(|t| t.len()).sum();
    let frac = |v: &mut dyn Iterator<Item = u16>, c: u16| v.filter(|&x| x == c).count() as f64 / n as f64;
    classes
        .iter()
        .map(|&c| {
            let p = frac(&mut preds.iter().flatten().copied(), c);
            let q = frac(&mut truth.iter().flat_map(|t| t.iter().copied()), c);
            if p + q == 0.0 {
                0.0
            } else {
                p * q / (p + q - p * q)
            }
        })
        .sum::<f64>()
        / classes.len() as f64
}

#[test]
fn untrained_network_scores_at_chance() {
    let mut g = rng(77);
    let (h, w) = (16, 64);
    let samples: Vec<Sample> = (0..6)
        .map(|s| {
            let n = h * w;
            let depth = (0..n).map(|_| g.random_range(1.0..50.0)).collect();
            let refl = (0..n).map(|_| g.random_range(0.0..1.0)).collect();
            let label = (0..n).map(|_| g.random_range(1..=3)).collect();
            Sample {
                seed: s,
                image: RangeImage::from_planes(h, w, depth, refl, label, vec![true; n]).unwrap(),
                index: IndexMap::default(),
                point_labels: Vec::new(),
            }
        })
        .collect();
    let cfg = small_config(1).network_config();
    let net = Network::build(&cfg).unwrap();
    let m = evaluate(&net, &samples, false).unwrap();

    let preds: Vec<Vec<u16>> = samples
        .iter()
        .map(|s| {
            let x = input_tensor(&[&s.image]).unwrap();
            rangeseg::objectives::argmax(&net.forward(&x).unwrap())
        })
        .collect();
    let truth: Vec<&[u16]> = samples.iter().map(|s| s.targets()).collect();
    let expected = independent_miou(&preds, &truth, &[1, 2, 3]);
    let got = m.pixel.mean.unwrap();
    assert!(
        (got - expected).abs() < 0.02,
        "mIoU {got}, independence oracle {expected}"
    );
    assert!(got < 1.0 / 3.0 + 0.1);
}

#[test]
fn per_point_scores_do_not_exceed_per_pixel_with_occlusions() {
    let cfg = DataConfig {
        scans: 3,
        height: 32,
        width: 256,
        ego_velocity: 12.0,
        ..DataConfig::default()
    };
    let samples = synthetic_dataset(&cfg, ProjectionMode::Ego).unwrap();
    assert!(samples.iter().all(|s| !s.index.occluded.is_empty()));
    let perfect: Vec<Vec<u16>> = samples.iter().map(|s| s.targets().to_vec()).collect();
    let m = evaluate_labels(&samples, &perfect, 4, true).unwrap();
    let (pixel, point) = (m.pixel.mean.unwrap(), m.point.unwrap().mean.unwrap());
    assert_eq!(pixel, 1.0);
    assert!(point < pixel, "point {point}");

    let unfolded = synthetic_dataset(&cfg, ProjectionMode::Unfold).unwrap();
    let perfect: Vec<Vec<u16>> = unfolded.iter().map(|s| s.targets().to_vec()).collect();
    let m = evaluate_labels(&unfolded, &perfect, 4, true).unwrap();
    assert_eq!(m.point.unwrap().mean, Some(1.0));
}

#[test]
fn report_text_carries_config_and_metrics() {
    let cfg = small_config(2);
    let (_, r) = train(&cfg, &small_data(&cfg)).unwrap();
    let parsed: toml::Table = r.to_text().parse().unwrap();
    assert_eq!(parsed["steps"].as_integer(), Some(2));
    assert_eq!(parsed["config"]["data"]["width"].as_integer(), Some(64));
    assert!(parsed["train"]["point_miou"].as_float().is_some());
}
