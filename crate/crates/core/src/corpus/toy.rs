//! Synthetic worlds with a planted two-hop interest shift.
//!
//! Entities are films and people. Every planted start film has exactly one
//! `directed_by` edge to a bridge person, whose only `directed` edge leads to
//! the target film; start and target are never adjacent. Remaining relations
//! add distractor edges. Each dialog mentions a start film, and the system
//! recommends its target while verbalising the route.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dialog::{Dialog, Speaker, Turn};
use super::templates::RelationTemplates;
use crate::error::{DicrError, Result};
use crate::kg::{EntityId, KnowledgeGraph, Mention};

pub const SHIFT_FIRST: &str = "directed_by";
pub const SHIFT_SECOND: &str = "directed";

#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub seed: u64,
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_dialogs: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            seed: 7,
            num_entities: 200,
            num_relations: 5,
            num_dialogs: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedShift {
    pub start: EntityId,
    pub bridge: EntityId,
    pub target: EntityId,
}

#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub kg: KnowledgeGraph,
    pub dialogs: Vec<Dialog>,
    pub templates: RelationTemplates,
    pub planted: Vec<PlantedShift>,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Film,
    Person,
}

const DISTRACTORS: [(&str, Kind, Kind); 5] = [
    ("starred_actors", Kind::Film, Kind::Person),
    ("similar_to", Kind::Film, Kind::Film),
    ("acted_in", Kind::Person, Kind::Film),
    ("written_by", Kind::Film, Kind::Person),
    ("worked_with", Kind::Person, Kind::Person),
];

const GREETINGS: [&str; 3] = [
    "hi , can you recommend a film ?",
    "hello , i need a film suggestion .",
    "hey , i am looking for something to watch .",
];
const QUESTIONS: [&str; 3] = [
    "sure , what films do you like ?",
    "of course . which films have you enjoyed ?",
    "happy to help . what did you watch recently ?",
];
const LIKES: [&str; 3] = [
    "i really liked {s} .",
    "i enjoyed {s} a lot .",
    "{s} is one of my favorites .",
];
const RECOMMENDATIONS: [&str; 3] = [
    "{s} is directed by {b} . {b} directed {t} . you should try {t} .",
    "since you liked {s} , try {t} . {s} is directed by {b} who directed {t} .",
    "{b} directed {s} and also {t} . i recommend {t} .",
];
const THANKS: [&str; 3] = [
    "thanks , i will watch {t} .",
    "great , {t} sounds good .",
    "ok , i will check out {t} .",
];
const CLOSINGS: [&str; 3] = [
    "enjoy the film !",
    "have fun watching !",
    "you are welcome !",
];

fn gen_err(msg: impl Into<String>) -> DicrError {
    DicrError::Generation(msg.into())
}

fn fill(template: &str, slots: &[(&str, &str, EntityId)]) -> (Vec<String>, Vec<Mention>) {
    let mut text = Vec::new();
    let mut mentions = Vec::new();
    for tok in template.split_whitespace() {
        match slots.iter().find(|(k, _, _)| *k == tok) {
            Some((_, label, e)) => {
                mentions.push(Mention {
                    start: text.len(),
                    end: text.len() + 1,
                    entity: *e,
                });
                text.push(label.to_string());
            }
            None => text.push(tok.to_string()),
        }
    }
    (text, mentions)
}

fn turn(speaker: Speaker, (text, entity_mentions): (Vec<String>, Vec<Mention>)) -> Turn {
    Turn {
        speaker,
        text,
        entity_mentions,
        recommended_items: Vec::new(),
    }
}

pub fn generate_toy_world(cfg: &ToyConfig) -> Result<ToyWorld> {
    if cfg.num_entities < 8 {
        return Err(gen_err(format!(
            "need at least 8 entities to plant the pattern, got {}",
            cfg.num_entities
        )));
    }
    if cfg.num_relations < 2 {
        return Err(gen_err(format!(
            "need at least 2 relations to plant the pattern, got {}",
            cfg.num_relations
        )));
    }
    if cfg.num_dialogs < 3 {
        return Err(gen_err(format!(
            "need at least 3 dialogs, got {}",
            cfg.num_dialogs
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_films = cfg.num_entities / 2;
    let n_people = cfg.num_entities - n_films;
    let width = cfg.num_entities.to_string().len().max(3);
    let films: Vec<String> = (0..n_films).map(|i| format!("film_{i:0width$}")).collect();
    let people: Vec<String> = (0..n_people)
        .map(|i| format!("person_{i:0width$}"))
        .collect();

    let n_starts = (n_films.min(n_people) * 2 / 5).max(2);
    let mut film_order: Vec<usize> = (0..n_films).collect();
    film_order.shuffle(&mut rng);
    let mut person_order: Vec<usize> = (0..n_people).collect();
    person_order.shuffle(&mut rng);
    let starts = &film_order[..n_starts];
    let bridges = &person_order[..n_starts];
    let targets: Vec<usize> = starts
        .iter()
        .map(|&s| loop {
            let t = rng.gen_range(0..n_films);
            if t != s {
                break t;
            }
        })
        .collect();

    let mut records: Vec<(String, String, String)> = Vec::new();
    for i in 0..n_starts {
        records.push((
            films[starts[i]].clone(),
            SHIFT_FIRST.into(),
            people[bridges[i]].clone(),
        ));
        records.push((
            people[bridges[i]].clone(),
            SHIFT_SECOND.into(),
            films[targets[i]].clone(),
        ));
    }
    let is_start = |f: usize| starts.contains(&f);
    let is_bridge = |p: usize| bridges.contains(&p);
    let others: Vec<usize> = (0..n_people).filter(|p| !is_bridge(*p)).collect();
    if !others.is_empty() {
        for f in (0..n_films).filter(|f| !is_start(*f)) {
            let p = others[rng.gen_range(0..others.len())];
            records.push((films[f].clone(), SHIFT_FIRST.into(), people[p].clone()));
        }
        for &p in &others {
            for _ in 0..rng.gen_range(1..=2) {
                let f = rng.gen_range(0..n_films);
                records.push((people[p].clone(), SHIFT_SECOND.into(), films[f].clone()));
            }
        }
    }

    let forbidden: Vec<(String, String)> = (0..n_starts)
        .map(|i| (films[starts[i]].clone(), films[targets[i]].clone()))
        .collect();
    let n_distractor = cfg.num_relations - 2;
    for k in 0..n_distractor {
        let (name, from, to) = DISTRACTORS[k % DISTRACTORS.len()];
        let name = if k < DISTRACTORS.len() {
            name.to_string()
        } else {
            format!("related_to_{k}")
        };
        let pool = |kind: Kind| if kind == Kind::Film { &films } else { &people };
        let heads = pool(from);
        let tails = pool(to);
        let n_edges = cfg.num_entities * 2 / n_distractor.max(1);
        let mut placed = 0;
        let mut attempts = 0;
        while placed < n_edges && attempts < n_edges * 20 {
            attempts += 1;
            let h = &heads[rng.gen_range(0..heads.len())];
            let t = &tails[rng.gen_range(0..tails.len())];
            if h == t || forbidden.iter().any(|(s, g)| s == h && g == t) {
                continue;
            }
            records.push((h.clone(), name.clone(), t.clone()));
            placed += 1;
        }
    }
    let kg = KnowledgeGraph::from_records(records)?;
    let ent = |label: &str| kg.entity(label).expect("generated label is in the graph");
    let planted: Vec<PlantedShift> = (0..n_starts)
        .map(|i| PlantedShift {
            start: ent(&films[starts[i]]),
            bridge: ent(&people[bridges[i]]),
            target: ent(&films[targets[i]]),
        })
        .collect();

    let mut dialogs = Vec::with_capacity(cfg.num_dialogs);
    for d in 0..cfg.num_dialogs {
        let shift = planted[rng.gen_range(0..planted.len())];
        let (s, b, t) = (
            kg.entity_label(shift.start),
            kg.entity_label(shift.bridge),
            kg.entity_label(shift.target),
        );
        let slots = [
            ("{s}", s, shift.start),
            ("{b}", b, shift.bridge),
            ("{t}", t, shift.target),
        ];
        let mut pick = |xs: &[&'static str]| xs[rng.gen_range(0..xs.len())];
        let mut rec = turn(Speaker::System, fill(pick(&RECOMMENDATIONS), &slots));
        rec.recommended_items = vec![shift.target];
        let turns = vec![
            turn(Speaker::User, fill(pick(&GREETINGS), &slots)),
            turn(Speaker::System, fill(pick(&QUESTIONS), &slots)),
            turn(Speaker::User, fill(pick(&LIKES), &slots)),
            rec,
            turn(Speaker::User, fill(pick(&THANKS), &slots)),
            turn(Speaker::System, fill(pick(&CLOSINGS), &slots)),
        ];
        dialogs.push(Dialog {
            dialog_id: format!("toy-{d:05}"),
            turns,
        });
    }

    let mut templates = RelationTemplates::new();
    templates.insert(SHIFT_FIRST, "{h} is directed by {t}")?;
    templates.insert(SHIFT_SECOND, "{h} directed {t}")?;
    Ok(ToyWorld {
        kg,
        dialogs,
        templates,
        planted,
    })
}
