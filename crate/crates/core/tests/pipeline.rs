use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scenediff::datagen::{toy_support, DatasetBundle};
use scenediff::eval::triplet_counts;
use scenediff::graph_diffusion::KernelKind;
use scenediff::instruction::{parse_instruction, Instruction, Triplet};
use scenediff::io::{load_bundle, save_bundle};
use scenediff::pipeline::{GenerationConfig, Synthesizer};
use scenediff::relation::RelationLabel;
use scenediff::rng::stream_rng;
use scenediff::scene::{Scene, SceneConfig};
use scenediff::Error;

fn bundle() -> DatasetBundle {
    toy_support(&SceneConfig::desk_default(), 4).unwrap()
}

#[test]
fn generated_scenes_are_valid_and_follow_the_instruction() {
    let b = bundle();
    let synth = Synthesizer::new(&b, GenerationConfig::default()).unwrap();
    let instr = parse_instruction("Place a chair in front of a desk.", &b.config).unwrap();
    let assets: Vec<&str> = b.library.entries.iter().map(|e| e.asset_id.as_str()).collect();
    for i in 0..40 {
        let s = synth.generate(Some(&instr), &mut stream_rng(1, i)).unwrap();
        s.scene.validate(&b.config).unwrap();
        assert!(!s.graph.has_mask());
        assert_eq!(triplet_counts(&s.scene, &instr), (1, 1));
        for o in &s.scene.objects {
            assert!(assets.contains(&o.asset_id.as_str()), "{}", o.asset_id);
            let entry = b.library.entries.iter().find(|e| e.asset_id == o.asset_id).unwrap();
            assert_eq!(entry.category, o.category);
        }
    }
}

#[test]
fn every_kernel_generates() {
    let b = bundle();
    for kernel in KernelKind::ALL {
        let config = GenerationConfig {
            kernel,
            t_graph: 30,
            ..GenerationConfig::default()
        };
        let synth = Synthesizer::new(&b, config).unwrap();
        let s = synth.unconditional(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(!s.scene.objects.is_empty(), "{kernel:?}");
        assert!(b.graphs.contains(&s.graph), "{kernel:?} left the support");
    }
}

#[test]
fn completing_a_full_scene_against_its_instruction_fails() {
    let b = bundle();
    let synth = Synthesizer::new(&b, GenerationConfig::default()).unwrap();
    let mut objects = b.scenes[0].objects.clone();
    while objects.len() < b.config.max_objects {
        let mut o = objects[0].clone();
        o.location[0] += 10.0 * objects.len() as f64;
        objects.push(o);
    }
    let full = Scene::new("full", objects);
    let never = Instruction::from_triplets(vec![Triplet::new(2, RelationLabel::Above, 5)]);
    let res = synth.complete(&full, Some(&never), &mut ChaCha8Rng::seed_from_u64(3));
    assert!(matches!(res, Err(Error::Unsatisfiable { .. })), "{res:?}");
    let ok = synth.complete(&full, None, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(ok.scene, full);
}

#[test]
fn completion_adds_objects_consistent_with_the_data() {
    let b = bundle();
    let synth = Synthesizer::new(&b, GenerationConfig::default()).unwrap();
    let source = &b.scenes[5];
    let partial = Scene::new("p", source.objects[..2].to_vec());
    for i in 0..20 {
        let out = synth.complete(&partial, None, &mut stream_rng(4, i)).unwrap();
        assert_eq!(&out.scene.objects[..2], &partial.objects[..]);
        let mut got: Vec<usize> = out.scene.objects.iter().map(|o| o.category).collect();
        got.sort_unstable();
        assert!(b.graphs.iter().any(|g| {
            let mut cats: Vec<usize> = g.categories.iter().copied().filter(|&c| c < b.config.num_categories()).collect();
            cats.sort_unstable();
            cats == got
        }));
    }
}

#[test]
fn rearrange_and_stylize_keep_their_contracts() {
    let b = bundle();
    let synth = Synthesizer::new(&b, GenerationConfig::default()).unwrap();
    let scene = &b.scenes[3];
    let r = synth.rearrange(scene, None, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    for (a, o) in scene.objects.iter().zip(&r.scene.objects) {
        assert_eq!((a.category, a.size, &a.asset_id), (o.category, o.size, &o.asset_id));
    }
    let s = synth.stylize(scene, None, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    for (a, o) in scene.objects.iter().zip(&s.scene.objects) {
        assert_eq!((a.category, a.location, a.size, a.rotation), (o.category, o.location, o.size, o.rotation));
        assert!(o.codes.is_some() && o.feature.is_empty());
    }
}

#[test]
fn same_seed_same_scene() {
    let b = bundle();
    let synth = Synthesizer::new(&b, GenerationConfig::default()).unwrap();
    let a = synth.unconditional(&mut stream_rng(7, 0)).unwrap();
    let c = synth.unconditional(&mut stream_rng(7, 0)).unwrap();
    assert_eq!(a, c);
}

#[test]
fn bundles_survive_a_disk_roundtrip() {
    let b = bundle();
    let tmp = tempfile::tempdir().unwrap();
    save_bundle(&b, tmp.path()).unwrap();
    let back = load_bundle(tmp.path(), true).unwrap();
    assert_eq!(back.scenes, b.scenes);
    assert_eq!(back.graphs, b.graphs);
    assert_eq!(back.codebook, b.codebook);
    assert_eq!(back.stats, b.stats);
}

#[test]
fn slot_count_must_match_the_dataset() {
    let b = bundle();
    let config = GenerationConfig {
        n_max: Some(b.config.max_objects + 1),
        ..GenerationConfig::default()
    };
    assert!(Synthesizer::new(&b, config).is_err());
}
