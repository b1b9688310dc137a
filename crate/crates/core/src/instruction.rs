//! Structured instructions and the template grammar that renders and parses
//! them.
//!
//! An instruction is up to two `(subject, relation, object)` triplets plus an
//! optional style constraint on quantized feature codes. Text is produced
//! from `grammar.txt` and parsed back with regular expressions compiled from
//! the same file, so `parse(render(i)) == i` for every seed.

use std::sync::OnceLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relation::RelationLabel;
use crate::rng::stream_rng;
use crate::scene::{SceneConfig, SemanticGraph};

pub const MAX_TRIPLETS: usize = 2;

const GRAMMAR_SOURCE: &str = include_str!("grammar.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub subject: usize,
    pub relation: RelationLabel,
    pub object: usize,
}

impl Triplet {
    pub fn new(subject: usize, relation: RelationLabel, object: usize) -> Self {
        Triplet {
            subject,
            relation,
            object,
        }
    }
}

/// Target code signature, optionally restricted to one category.
/// `None` positions are unconstrained.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StyleConstraint {
    pub category: Option<usize>,
    pub codes: Vec<Option<usize>>,
}

impl StyleConstraint {
    pub fn applies_to(&self, category: usize) -> bool {
        self.category.is_none_or(|c| c == category)
    }

    pub fn accepts(&self, codes: &[usize]) -> bool {
        codes.len() == self.codes.len() && self.codes.iter().zip(codes).all(|(t, c)| t.is_none_or(|t| t == *c))
    }

    pub fn name(&self) -> String {
        let parts: Vec<String> = self
            .codes
            .iter()
            .map(|c| c.map_or_else(|| "*".to_string(), |c| c.to_string()))
            .collect();
        format!("code-{}", parts.join("-"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub triplets: Vec<Triplet>,
    #[serde(default)]
    pub style: Option<StyleConstraint>,
}

impl Instruction {
    pub fn unconditional() -> Self {
        Instruction::default()
    }

    pub fn from_triplets(triplets: Vec<Triplet>) -> Self {
        Instruction { triplets, style: None }
    }

    pub fn with_style(mut self, style: StyleConstraint) -> Self {
        self.style = Some(style);
        self
    }

    pub fn is_unconditional(&self) -> bool {
        self.triplets.is_empty() && self.style.is_none()
    }

    pub fn validate(&self, config: &SceneConfig) -> Result<()> {
        if self.triplets.len() > MAX_TRIPLETS {
            return Err(Error::invalid(format!(
                "instruction has {} triplets, at most {MAX_TRIPLETS} are supported",
                self.triplets.len()
            )));
        }
        let k = config.num_categories();
        for t in &self.triplets {
            for c in [t.subject, t.object] {
                if c >= k {
                    return Err(Error::OutOfRange { label: c, size: k });
                }
            }
        }
        if let Some(style) = &self.style {
            if style.codes.len() != config.codes_per_object {
                return Err(Error::DimensionMismatch {
                    expected: config.codes_per_object,
                    found: style.codes.len(),
                });
            }
            if let Some(c) = style.category.filter(|&c| c >= k) {
                return Err(Error::OutOfRange { label: c, size: k });
            }
            if let Some(c) = style.codes.iter().flatten().find(|&&c| c >= config.codebook_size) {
                return Err(Error::OutOfRange {
                    label: *c,
                    size: config.codebook_size,
                });
            }
        }
        Ok(())
    }
}

/// Whether a triplet is realized by some ordered pair of distinct nodes.
pub fn triplet_holds(graph: &SemanticGraph, t: &Triplet) -> bool {
    let n = graph.num_nodes();
    (0..n).any(|j| {
        graph.categories[j] == t.subject
            && (0..n).any(|k| k != j && graph.categories[k] == t.object && graph.relation(j, k) == Some(t.relation))
    })
}

/// Style semantics: a category-restricted constraint needs at least one
/// node of that category and every such node must match; a room-level
/// constraint needs every real node to match.
pub fn style_holds(graph: &SemanticGraph, style: &StyleConstraint) -> bool {
    let mut considered = 0;
    for j in 0..graph.num_nodes() {
        if graph.is_empty_node(j) || !style.applies_to(graph.categories[j]) {
            continue;
        }
        considered += 1;
        if !style.accepts(graph.codes_of(j)) {
            return false;
        }
    }
    considered > 0
}

/// Conjunctive satisfaction test on a clean graph.
pub fn instruction_matches(graph: &SemanticGraph, instr: &Instruction) -> Result<bool> {
    if graph.has_mask() {
        return Err(Error::invalid("instruction matching needs a mask-free graph"));
    }
    Ok(instruction_matches_unchecked(graph, instr))
}

pub(crate) fn instruction_matches_unchecked(graph: &SemanticGraph, instr: &Instruction) -> bool {
    instr.triplets.iter().all(|t| triplet_holds(graph, t)) && instr.style.as_ref().is_none_or(|s| style_holds(graph, s))
}

/// Parsed grammar tables.
#[derive(Debug)]
pub struct Grammar {
    verbs: Vec<String>,
    templates: Vec<String>,
    relations: Vec<(RelationLabel, Vec<String>)>,
    joins: Vec<String>,
    style_object: String,
    style_room: String,
    clause_res: Vec<Regex>,
    style_object_re: Regex,
    style_room_re: Regex,
}

impl Grammar {
    pub fn builtin() -> &'static Grammar {
        static GRAMMAR: OnceLock<Grammar> = OnceLock::new();
        GRAMMAR.get_or_init(|| Grammar::parse(GRAMMAR_SOURCE).expect("bundled grammar is valid"))
    }

    pub fn parse(source: &str) -> Result<Grammar> {
        let mut verbs = Vec::new();
        let mut templates = Vec::new();
        let mut relations = Vec::new();
        let mut joins = Vec::new();
        let mut style_object = None;
        let mut style_room = None;
        for (lineno, raw) in source.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("grammar line {}: missing ':'", lineno + 1)))?;
            let value = value.trim().to_lowercase();
            match key.trim() {
                "verb" => verbs.push(value),
                "template" => templates.push(value),
                "join" => joins.push(value),
                "style-object" => style_object = Some(value),
                "style-room" => style_room = Some(value),
                "relation" => {
                    let (label, phrases) = value
                        .split_once('=')
                        .ok_or_else(|| Error::Parse(format!("grammar line {}: missing '='", lineno + 1)))?;
                    let label: RelationLabel = label.trim().parse()?;
                    let phrases: Vec<String> = phrases.split('|').map(|p| p.trim().to_string()).collect();
                    relations.push((label, phrases));
                }
                other => return Err(Error::Parse(format!("grammar line {}: unknown key '{other}'", lineno + 1))),
            }
        }
        if verbs.is_empty() || templates.is_empty() || joins.is_empty() {
            return Err(Error::Parse("grammar needs verbs, templates and joins".into()));
        }
        for label in RelationLabel::ALL {
            if !relations.iter().any(|(l, _)| *l == label) {
                return Err(Error::Parse(format!("grammar has no phrase for '{label}'")));
            }
        }
        let style_object = style_object.ok_or_else(|| Error::Parse("grammar lacks style-object".into()))?;
        let style_room = style_room.ok_or_else(|| Error::Parse("grammar lacks style-room".into()))?;

        let mut all_phrases: Vec<&str> = relations.iter().flat_map(|(_, p)| p.iter().map(String::as_str)).collect();
        all_phrases.sort_by_key(|p| std::cmp::Reverse(p.len()));
        let rel_group = format!("({})", alternation(&all_phrases));
        let verb_alt = alternation(&verbs.iter().map(String::as_str).collect::<Vec<_>>());
        let compile = |template: &str| -> Result<Regex> {
            let template = template.replace("{art} {cat}", "{artcat}");
            let mut pattern = String::from("^");
            let mut rest = template.as_str();
            while let Some(start) = rest.find('{') {
                pattern.push_str(&regex::escape(&rest[..start]));
                let end = rest[start..]
                    .find('}')
                    .ok_or_else(|| Error::Parse(format!("unterminated placeholder in '{template}'")))?
                    + start;
                pattern.push_str(match &rest[start + 1..end] {
                    "verb" => verb_alt.as_str(),
                    "artcat" => "(?:a|an) (.+?)",
                    "cat" => "(.+?)",
                    "rel" => rel_group.as_str(),
                    "style" => r"code((?:-(?:\d+|\*))+)",
                    other => return Err(Error::Parse(format!("unknown placeholder '{{{other}}}'"))),
                });
                rest = &rest[end + 1..];
            }
            pattern.push_str(&regex::escape(rest));
            pattern.push('$');
            Regex::new(&pattern).map_err(|e| Error::Parse(e.to_string()))
        };
        let clause_res = templates.iter().map(|t| compile(t)).collect::<Result<Vec<_>>>()?;
        let style_object_re = compile(&style_object)?;
        let style_room_re = compile(&style_room)?;
        Ok(Grammar {
            verbs,
            templates,
            relations,
            joins,
            style_object,
            style_room,
            clause_res,
            style_object_re,
            style_room_re,
        })
    }

    fn phrases(&self, label: RelationLabel) -> &[String] {
        &self
            .relations
            .iter()
            .find(|(l, _)| *l == label)
            .expect("every label has phrases")
            .1
    }

    fn phrase_label(&self, phrase: &str) -> Option<RelationLabel> {
        self.relations
            .iter()
            .find(|(_, ps)| ps.iter().any(|p| p == phrase))
            .map(|(l, _)| *l)
    }

    /// Renders with the choice function `pick(n)` selecting among `n`
    /// alternatives at each free choice.
    fn render_with(&self, instr: &Instruction, config: &SceneConfig, pick: &mut dyn FnMut(usize) -> usize) -> String {
        let mut sentences: Vec<String> = Vec::new();
        let mut clauses: Vec<String> = Vec::new();
        for t in &instr.triplets {
            let template = &self.templates[pick(self.templates.len())];
            let verb = &self.verbs[pick(self.verbs.len())];
            let phrases = self.phrases(t.relation);
            let phrase = &phrases[pick(phrases.len())];
            let cats = [config.category_name(t.subject), config.category_name(t.object)];
            clauses.push(fill(template, verb, phrase, &cats, None));
        }
        if let Some((first, rest)) = clauses.split_first() {
            let mut sentence = first.clone();
            for clause in rest {
                match self.joins[pick(self.joins.len())].as_str() {
                    "then" => {
                        sentences.push(sentence);
                        sentence = format!("then {clause}");
                    }
                    join => sentence = format!("{sentence} {join} {clause}"),
                }
            }
            sentences.push(sentence);
        }
        if let Some(style) = &instr.style {
            let name = style.name();
            sentences.push(match style.category {
                Some(c) => fill(&self.style_object, "", "", &[config.category_name(c)], Some(&name)),
                None => fill(&self.style_room, "", "", &[], Some(&name)),
            });
        }
        sentences.iter().map(|s| format!("{}.", capitalize(s))).collect::<Vec<_>>().join(" ")
    }

    pub fn render(&self, instr: &Instruction, config: &SceneConfig, seed: u64) -> String {
        let mut rng = stream_rng(seed, 0x1257);
        self.render_with(instr, config, &mut |n| rng.random_range(0..n))
    }

    /// Rendering with the first alternative at every choice.
    pub fn render_canonical(&self, instr: &Instruction, config: &SceneConfig) -> String {
        self.render_with(instr, config, &mut |_| 0)
    }

    pub fn parse_text(&self, text: &str, config: &SceneConfig) -> Result<Instruction> {
        let lower = text.trim().to_lowercase();
        let mut instr = Instruction::unconditional();
        for sentence in lower.split('.').map(str::trim).filter(|s| !s.is_empty()) {
            let sentence = sentence.strip_prefix("then ").unwrap_or(sentence);
            if let Some(style) = self.parse_style(sentence, config)? {
                if instr.style.replace(style).is_some() {
                    return Err(Error::Parse("more than one style sentence".into()));
                }
                continue;
            }
            for clause in sentence.split(" and ") {
                instr.triplets.push(self.parse_clause(clause.trim(), config)?);
            }
        }
        instr.validate(config).map_err(|e| match e {
            Error::Invalid(m) => Error::Parse(m),
            other => other,
        })?;
        Ok(instr)
    }

    fn parse_clause(&self, clause: &str, config: &SceneConfig) -> Result<Triplet> {
        for re in &self.clause_res {
            if let Some(caps) = re.captures(clause) {
                let subject = lookup_category(&caps[1], config)?;
                let label = self
                    .phrase_label(&caps[2])
                    .ok_or_else(|| Error::UnknownVocabulary(caps[2].to_string()))?;
                let object = lookup_category(&caps[3], config)?;
                return Ok(Triplet::new(subject, label, object));
            }
        }
        Err(Error::Parse(format!("'{clause}' does not match any instruction template")))
    }

    fn parse_style(&self, sentence: &str, config: &SceneConfig) -> Result<Option<StyleConstraint>> {
        let (category, codes) = if let Some(caps) = self.style_object_re.captures(sentence) {
            (Some(lookup_category(&caps[1], config)?), caps[2].to_string())
        } else if let Some(caps) = self.style_room_re.captures(sentence) {
            (None, caps[1].to_string())
        } else {
            return Ok(None);
        };
        let codes = codes
            .trim_start_matches('-')
            .split('-')
            .map(|p| match p {
                "*" => Ok(None),
                digits => digits
                    .parse::<usize>()
                    .map(Some)
                    .map_err(|e| Error::Parse(format!("bad style code '{digits}': {e}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(StyleConstraint { category, codes }))
    }
}

fn alternation(items: &[&str]) -> String {
    let escaped: Vec<String> = items.iter().map(|s| regex::escape(s)).collect();
    format!("(?:{})", escaped.join("|"))
}

fn lookup_category(name: &str, config: &SceneConfig) -> Result<usize> {
    config
        .category_index(name)
        .ok_or_else(|| Error::UnknownVocabulary(name.trim().to_string()))
}

fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn fill(template: &str, verb: &str, phrase: &str, cats: &[&str], style: Option<&str>) -> String {
    let template = template.replace("{art} {cat}", "{artcat}");
    let mut out = String::new();
    let mut cat_iter = cats.iter().map(|c| c.to_lowercase());
    let mut rest = template.as_str();
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let end = rest[start..].find('}').expect("grammar validated") + start;
        match &rest[start + 1..end] {
            "verb" => out.push_str(verb),
            "rel" => out.push_str(phrase),
            "style" => out.push_str(style.unwrap_or_default()),
            "cat" => out.push_str(&cat_iter.next().expect("category per placeholder")),
            "artcat" => {
                let cat = cat_iter.next().expect("category per placeholder");
                out.push_str(article(&cat));
                out.push(' ');
                out.push_str(&cat);
            }
            _ => unreachable!("grammar validated"),
        }
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    // Templates are stored lowercased.
    out.split(' ').map(|w| if w == "i" { "I" } else { w }).collect::<Vec<_>>().join(" ")
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Renders with grammar choices drawn from `seed`.
pub fn render_instruction(instr: &Instruction, config: &SceneConfig, seed: u64) -> String {
    Grammar::builtin().render(instr, config, seed)
}

pub fn parse_instruction(text: &str, config: &SceneConfig) -> Result<Instruction> {
    Grammar::builtin().parse_text(text, config)
}
