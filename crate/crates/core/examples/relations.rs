//! Spatial relations read off box geometry.

use scenediff::relation::{extract_relations, relation_between};
use scenediff::scene::{ObjectInstance, Scene, SceneConfig};

fn main() {
    let config = SceneConfig::desk_default();
    let cat = |name: &str| config.category_index(name).unwrap();
    let bed = ObjectInstance::new(cat("bed"), [0.0, 0.0, 0.25], [2.0, 1.6, 0.5], 0.0, Vec::new());
    let nightstand = ObjectInstance::new(cat("nightstand"), [-1.4, 0.3, 0.275], [0.45, 0.4, 0.55], 0.0, Vec::new());
    let lamp = ObjectInstance::new(cat("lamp"), [-1.4, 0.3, 0.8], [0.3, 0.3, 0.5], 0.0, Vec::new());
    let wardrobe = ObjectInstance::new(cat("wardrobe"), [4.0, 2.0, 1.0], [1.2, 0.6, 2.0], 0.0, Vec::new());

    println!("nightstand -> bed: {}", relation_between(&nightstand, &bed));
    let scene = Scene::new("bedroom", vec![bed, nightstand, lamp, wardrobe]);
    let m = extract_relations(&scene);
    let n = scene.objects.len();
    for j in 0..n {
        for k in 0..n {
            if j != k {
                let (a, b) = (&scene.objects[j], &scene.objects[k]);
                println!(
                    "{:>10} {:<20} {}",
                    config.category_name(a.category),
                    m.get(j, k).to_string(),
                    config.category_name(b.category)
                );
            }
        }
    }
}
