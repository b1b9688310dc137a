//! Parsing and rendering instructions with the built-in template grammar.

use scenediff::instruction::{parse_instruction, render_instruction, Grammar, Instruction, StyleConstraint, Triplet};
use scenediff::relation::RelationLabel;
use scenediff::scene::SceneConfig;

fn main() -> scenediff::Result<()> {
    let config = SceneConfig::desk_default();
    let text = "Put a lamp on top of a nightstand and place a chair just in front of a desk. Make the chair code-3-*-*-1.";
    let instr = parse_instruction(text, &config)?;
    for t in &instr.triplets {
        println!(
            "({}, {}, {})",
            config.category_name(t.subject),
            t.relation,
            config.category_name(t.object)
        );
    }
    if let Some(style) = &instr.style {
        println!("style {} on {:?}", style.name(), style.category.map(|c| config.category_name(c)));
    }

    let built = Instruction::from_triplets(vec![Triplet::new(1, RelationLabel::CloselyLeftOf, 0)]).with_style(
        StyleConstraint {
            category: None,
            codes: vec![Some(2), None, None, None],
        },
    );
    println!("canonical: {}", Grammar::builtin().render_canonical(&built, &config));
    for seed in 0..3 {
        let text = render_instruction(&built, &config, seed);
        assert_eq!(parse_instruction(&text, &config)?, built);
        println!("seed {seed}: {text}");
    }

    match parse_instruction("Place a dragon left of a bed.", &config) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
