use proptest::prelude::*;

use scenediff::eval::tv_distance;
use scenediff::graph_diffusion::{apply_cfg, build_schedule_with, KernelKind, ScheduleOptions};
use scenediff::io::{parse_scene, scene_to_string};
use scenediff::layout_diffusion::{rotation_decode, rotation_encode};
use scenediff::quantizer::Codebook;
use scenediff::relation::{relation_between, RelationLabel};
use scenediff::scene::{normalize_angle, ObjectInstance, Scene, SceneConfig};

fn kernel() -> impl Strategy<Value = KernelKind> {
    prop::sample::select(KernelKind::ALL.to_vec())
}

fn object() -> impl Strategy<Value = ObjectInstance> {
    (
        0usize..8,
        prop::array::uniform3(-5.0f64..5.0),
        prop::array::uniform3(0.1f64..2.5),
        -3.14f64..3.14,
        prop::collection::vec(-1.0f64..1.0, 16),
    )
        .prop_map(|(c, loc, size, r, f)| ObjectInstance::new(c, loc, size, r, f))
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let t: f64 = v.iter().sum();
        v.into_iter().map(|x| x / t).collect()
    })
}

proptest! {
    #[test]
    fn schedules_are_column_stochastic(
        kernel in kernel(), k in 1usize..8, steps in 1usize..30, leak in 0.0f64..0.5, freeze in any::<bool>()
    ) {
        let s = build_schedule_with(steps, k, kernel, ScheduleOptions { leak, freeze_empty: freeze }).unwrap();
        for t in 0..=steps {
            for from in 0..s.num_states() {
                let col: f64 = (0..s.num_states()).map(|to| s.qbar(t).prob(to, from)).sum();
                prop_assert!((col - 1.0).abs() < 1e-12);
                prop_assert!((0..s.num_states()).all(|to| s.qbar(t).prob(to, from) >= 0.0));
            }
            if kernel.uses_mask() {
                prop_assert_eq!(s.qbar(t).prob(s.mask_state(), s.mask_state()), 1.0);
            }
        }
    }

    #[test]
    fn relations_are_antisymmetric(a in object(), b in object()) {
        prop_assume!(a.location[0] != b.location[0] || a.location[1] != b.location[1]);
        prop_assert_eq!(relation_between(&b, &a), relation_between(&a, &b).inverse());
    }

    #[test]
    fn guided_predictions_are_distributions(p in distribution(6), u in distribution(6), s in 0.0f64..8.0) {
        let g = apply_cfg(&p, &u, s).unwrap();
        prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(g.iter().all(|x| *x >= 0.0));
        prop_assert_eq!(apply_cfg(&p, &p, s).unwrap(), p);
    }

    #[test]
    fn codes_survive_decode_then_encode(k in 1usize..12, codes in prop::collection::vec(0usize..12, 1..5)) {
        let codes: Vec<usize> = codes.into_iter().map(|c| c % k).collect();
        let entries = (0..k).map(|i| vec![i as f64, -(i as f64) * 0.5]).collect();
        let cb = Codebook::new(entries, codes.len()).unwrap();
        prop_assert_eq!(cb.encode(&cb.decode(&codes).unwrap()).unwrap(), codes);
    }

    #[test]
    fn scene_json_roundtrip(objects in prop::collection::vec(object(), 0..6)) {
        let config = SceneConfig::desk_default();
        let scene = Scene::new("p", objects);
        let text = scene_to_string(&scene, &config, true).unwrap();
        prop_assert_eq!(parse_scene(&text, &config, true).unwrap(), scene);
    }

    #[test]
    fn tv_is_a_bounded_distance(samples in prop::collection::vec(0u8..5, 1..200), w in distribution(5)) {
        let reference: Vec<(u8, f64)> = (0u8..5).zip(w).collect();
        let tv = tv_distance(&samples, &reference).unwrap();
        prop_assert!((0.0..=1.0).contains(&tv));
        let own: Vec<(u8, f64)> = samples.iter().map(|&s| (s, 1.0)).collect();
        prop_assert!(tv_distance(&samples, &own).unwrap() < 1e-12);
    }

    #[test]
    fn rotation_roundtrip(r in -10.0f64..10.0) {
        let back = rotation_decode(rotation_encode(r)).unwrap();
        let diff = normalize_angle(back - r);
        prop_assert!(diff.abs() < 1e-12);
    }
}

#[test]
fn none_is_its_own_inverse() {
    assert_eq!(RelationLabel::None.inverse(), RelationLabel::None);
}
