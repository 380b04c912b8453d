mod common;

use orbitsynth::distill::{
    constant_colour_images, distill, distill_loss, loss_trace_csv, reshape_tokens, student_dims, teacher_dims,
    upsample_features, DistillConfig, FeatureMap, MockTeacher, Reduction, TeacherProvider, ToyStudent,
};
use orbitsynth::{Error, Kernel};
use proptest::prelude::*;

fn small_run(seed: u64) -> (orbitsynth::distill::DistillOutcome, ToyStudent) {
    let data = constant_colour_images(6, 32, 32, seed).unwrap();
    let teacher = MockTeacher::new(4, seed).unwrap();
    let mut student = ToyStudent::new(8, 4, seed + 1).unwrap();
    let cfg = DistillConfig { channels: 4, epochs: 5, batch: 4, ..DistillConfig::default() };
    (distill(&teacher, &mut student, &data, &cfg).unwrap(), student)
}

#[test]
fn fixed_seeds_give_identical_traces() {
    let (a, sa) = small_run(3);
    let (b, sb) = small_run(3);
    assert_eq!(a.trace.len(), 5);
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert_eq!(x.mean_loss.to_bits(), y.mean_loss.to_bits());
    }
    assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
    assert_eq!(sa, sb);
    assert_ne!(small_run(4).0.trace, a.trace);
}

#[test]
fn trace_csv_layout() {
    let (out, _) = small_run(5);
    let csv = loss_trace_csv(&out.trace);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,mean_loss");
    assert_eq!(lines.len(), 6);
    let (epoch, loss) = lines[1].split_once(',').unwrap();
    assert_eq!(epoch.parse::<usize>().unwrap(), out.trace[0].epoch);
    assert_eq!(loss.parse::<f64>().unwrap(), out.trace[0].mean_loss);
}

#[test]
fn shapes_for_the_standard_input() {
    assert_eq!(teacher_dims(224, 224), (14, 14));
    assert_eq!(student_dims(224, 224), (28, 28));
    let teacher = MockTeacher::new(16, 0).unwrap();
    let img = constant_colour_images(1, 224, 224, 0).unwrap().remove(0);
    let t = teacher.features(&img).unwrap();
    assert_eq!(t.dims(), (14, 14, 16));
    let up = upsample_features(&t, 28, 28, Kernel::Bicubic).unwrap();
    let z = ToyStudent::new(8, 16, 0).unwrap().forward(&img).unwrap();
    assert_eq!(up.dims(), z.dims());
}

#[test]
fn align_corners_keeps_the_corners() {
    let data: Vec<f64> = (0..3 * 4 * 2).map(|i| i as f64 * 0.5).collect();
    let fm = FeatureMap::from_data(3, 4, 2, data).unwrap();
    for kernel in [Kernel::Bilinear, Kernel::Bicubic] {
        let up = upsample_features(&fm, 7, 10, kernel).unwrap();
        for ch in 0..2 {
            assert_eq!(up.get(0, 0, ch), fm.get(0, 0, ch));
            assert_eq!(up.get(6, 9, ch), fm.get(2, 3, ch));
            assert_eq!(up.get(6, 0, ch), fm.get(2, 0, ch));
        }
    }
    assert!(upsample_features(&fm, 2, 10, Kernel::Bilinear).is_err());
}

#[test]
fn loss_reductions() {
    let z = FeatureMap::from_data(1, 2, 1, vec![1.0, 3.0]).unwrap();
    let t = FeatureMap::from_data(1, 2, 1, vec![0.0, 1.0]).unwrap();
    let (sum, g_sum) = distill_loss(&z, &t, Reduction::SumSq).unwrap();
    let (mean, g_mean) = distill_loss(&z, &t, Reduction::MeanSq).unwrap();
    assert_eq!(sum, 5.0);
    assert_eq!(mean, 2.5);
    assert_eq!(g_sum.data(), &[2.0, 4.0]);
    assert_eq!(g_mean.data(), &[1.0, 2.0]);
    let other = FeatureMap::zeros(2, 1, 1);
    assert!(distill_loss(&z, &other, Reduction::MeanSq).is_err());
}

#[test]
fn divergence_is_reported() {
    let data = constant_colour_images(4, 32, 32, 1).unwrap();
    let teacher = MockTeacher::new(4, 1).unwrap();
    let mut student = ToyStudent::new(8, 4, 2).unwrap();
    let cfg = DistillConfig { channels: 4, eta: 1e6, epochs: 50, batch: 1, ..DistillConfig::default() };
    assert!(matches!(distill(&teacher, &mut student, &data, &cfg), Err(Error::Divergence { .. })));
}

#[test]
fn config_validation() {
    let teacher = MockTeacher::new(4, 1).unwrap();
    let data = constant_colour_images(2, 32, 32, 1).unwrap();
    let mut student = ToyStudent::new(8, 4, 2).unwrap();
    for cfg in [
        DistillConfig { channels: 4, eta: 0.0, ..DistillConfig::default() },
        DistillConfig { channels: 4, batch: 0, ..DistillConfig::default() },
    ] {
        assert!(distill(&teacher, &mut student, &data, &cfg).is_err());
    }
    let wrong = DistillConfig { channels: 5, ..DistillConfig::default() };
    assert!(distill(&teacher, &mut student, &data, &wrong).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reshape_places_token_i_at_its_patch(gh in 1usize..5, gw in 1usize..5, c in 1usize..4, extra_h in 0usize..16, extra_w in 0usize..16) {
        let (h, w) = (gh * 16 + extra_h, gw * 16 + extra_w);
        let tokens: Vec<Vec<f64>> = (0..c).map(|ch| (0..gh * gw).map(|i| (ch * 1000 + i) as f64).collect()).collect();
        let fm = reshape_tokens(&tokens, h, w).unwrap();
        prop_assert_eq!(fm.dims(), (gh, gw, c));
        for i in 0..gh * gw {
            for ch in 0..c {
                prop_assert_eq!(fm.get(i / gw, i % gw, ch), (ch * 1000 + i) as f64);
            }
        }
    }

    #[test]
    fn upsampled_teacher_matches_student_shape(gh in 1usize..6, gw in 1usize..6) {
        let (h, w) = (gh * 16, gw * 16);
        let img = constant_colour_images(1, h, w, 0).unwrap().remove(0);
        let t = MockTeacher::new(3, 0).unwrap().features(&img).unwrap();
        let (sh, sw) = student_dims(h, w);
        let up = upsample_features(&t, sh, sw, Kernel::Bicubic).unwrap();
        prop_assert_eq!(up.dims(), ToyStudent::new(8, 3, 0).unwrap().forward(&img).unwrap().dims());
    }

    #[test]
    fn losses_are_non_negative_and_zero_on_equal_maps(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = common::rng(seed);
        let a: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        let z = FeatureMap::from_data(1, n, 1, a.clone()).unwrap();
        let t = FeatureMap::from_data(1, n, 1, b).unwrap();
        for r in [Reduction::SumSq, Reduction::MeanSq] {
            prop_assert!(distill_loss(&z, &t, r).unwrap().0 >= 0.0);
            prop_assert_eq!(distill_loss(&z, &z, r).unwrap().0, 0.0);
        }
    }
}
