//! Acceptance suite. Prints one PASS/FAIL line per criterion, then fails if
//! any criterion failed.
//!
//! Criteria 4, 6, 8 and 9 share two full toy runs driven through the CLI.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dicr_core::converse::{
    generate, mim_loss, path_posterior, prepare_input, semantic_score, turn_losses, ConverseConfig,
    ConverseInput, ConverseModel, Decoding, Mode, Objective, PathWeights, MIM_EPS,
};
use dicr_core::corpus::{WordVocab, BOS};
use dicr_core::eval::{recall_at_k, MetricsReport};
use dicr_core::kg::{EmbeddingTable, EntityId, KnowledgeGraph, ReasonPath};
use dicr_core::nn::{gradcheck, Gradients, ParamId, Tape, Tensor, Var};
use dicr_core::reasoner::{
    actor_critic_loss, compute_targets, discriminator_loss, fit_threshold, greedy_recall1,
    segment_scores, threshold_accuracy, PolicyConfig, PolicyNetworks, ReasoningEnv, RecExample,
    RolloutMode, DISC_EPS,
};
use dicr_core::trainer::{
    checkpoint_path, DataSet, Models, Stage, TrainConfig, Trainer, TurnSet, REPORT_FILE,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn guarded<T, F: FnOnce() -> Result<T, String>>(f: F) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

/// Process CPU seconds from procfs, when available.
fn cpu_seconds() -> Option<f64> {
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    let rest = &stat[stat.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let utime: f64 = fields.get(11)?.parse().ok()?;
    let stime: f64 = fields.get(12)?.parse().ok()?;
    Some((utime + stime) / 100.0)
}

// ---------------------------------------------------------------- CLI runs

fn dicr(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dicr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| format!("spawning dicr: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "`dicr {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn toy_run(root: &Path) -> Result<(), String> {
    let r = root.to_str().unwrap();
    dicr(&[
        "toygen",
        "--out",
        r,
        "--seed",
        "7",
        "--entities",
        "200",
        "--relations",
        "5",
        "--dialogs",
        "500",
    ])?;
    dicr(&["train", "--out", r, "--stage", "all", "--seed", "7"])?;
    Ok(())
}

fn report_at(path: &Path) -> Result<MetricsReport, String> {
    MetricsReport::load(path).map_err(|e| format!("{}: {e}", path.display()))
}

// ------------------------------------------------------- small model fixtures

fn branching_graph(seed: u64, nodes: usize, branching: usize) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for h in 0..nodes {
        let k = rng.gen_range(1..=branching);
        for _ in 0..k {
            let t = rng.gen_range(0..nodes);
            if t != h {
                records.push((
                    format!("n{h:03}"),
                    format!("r{}", rng.gen_range(0..3)),
                    format!("n{t:03}"),
                ));
            }
        }
    }
    KnowledgeGraph::from_records(records).unwrap()
}

fn random_table(kg: &KnowledgeGraph, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = |n: usize| {
        Tensor::from_vec(
            n,
            dim,
            (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    };
    EmbeddingTable {
        dim,
        entities: gen(kg.num_entities()),
        relations: gen(kg.num_relations()),
    }
}

fn policy_nets(
    emb: &EmbeddingTable,
    hidden: usize,
    disc_hidden: usize,
    seed: u64,
) -> PolicyNetworks {
    let cfg = PolicyConfig {
        dim: emb.dim,
        history: 1,
        hidden,
        disc_hidden,
    };
    PolicyNetworks::new(cfg, emb, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_pref(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn env<'a>(
    nets: &'a PolicyNetworks,
    kg: &'a KnowledgeGraph,
    emb: &'a EmbeddingTable,
) -> ReasoningEnv<'a> {
    ReasoningEnv {
        nets,
        kg,
        emb,
        cap: 250,
        max_len: 3,
    }
}

fn tiny_converse_cfg() -> ConverseConfig {
    ConverseConfig {
        word_dim: 4,
        hidden: 3,
        layers: 1,
        attn_dim: 4,
        dec_hidden: 5,
        mlp_hidden: 5,
        max_context: 8,
        max_response: 6,
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn tiny_vocab() -> WordVocab {
    WordVocab::from_tokens(words(
        "thor is written by stan_lee . you like iron_man try it directed hulk_writer",
    ))
}

fn tiny_inputs(v: &WordVocab) -> Vec<ConverseInput> {
    let turns = [
        (
            "<usr> i like thor",
            "try stan_lee . hulk_writer ?",
            "thor is written by stan_lee .",
        ),
        (
            "<usr> you like iron_man",
            "iron_man is written by stan_lee",
            "iron_man is written by stan_lee .",
        ),
        (
            "<usr> thor is it",
            "try hulk_writer .",
            "thor is written by hulk_writer .",
        ),
    ];
    let paths = vec![
        words("thor is written by stan_lee ."),
        words("thor is written by hulk_writer ."),
        words("iron_man is directed by stan_lee ."),
    ];
    turns
        .iter()
        .map(|(c, r, s)| prepare_input(v, &words(c), Some(&words(r)), Some(&words(s)), &paths, 8))
        .collect()
}

fn tiny_converse(vocab: &WordVocab, seed: u64) -> ConverseModel {
    ConverseModel::new(
        tiny_converse_cfg(),
        vocab.len(),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap()
}

fn close_to_one(xs: &[f64]) -> bool {
    (xs.iter().sum::<f64>() - 1.0).abs() <= 1e-6 && xs.iter().all(|p| *p >= 0.0)
}

// ------------------------------------------------------ 1. invariants

fn invariants() -> Outcome {
    let clock = Instant::now();
    let mut checked = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    // Reasoner: policy normalisation, discriminator range, beam validity.
    let kg = branching_graph(3, 80, 4);
    let emb = random_table(&kg, 8, 4);
    let nets = policy_nets(&emb, 16, 8, 5);
    let e = env(&nets, &kg, &emb);
    for s in 0..kg.num_entities() {
        let start = EntityId(s);
        let pref = random_pref(8, &mut rng);
        let ex = RecExample {
            start,
            preference: pref.clone(),
            gold_items: vec![],
            gold_path: None,
        };
        let roll = e
            .rollout(&ex, RolloutMode::Sample, &mut rng)
            .map_err(|x| x.to_string())?;
        for step in &roll.steps {
            ensure(
                close_to_one(&step.probs),
                format!(
                    "policy at {start:?} sums to {}",
                    step.probs.iter().sum::<f64>()
                ),
            )?;
            ensure(
                step.probs.len() == step.space.len(),
                "policy support differs from the action space",
            )?;
            for a in &step.space.actions {
                let d = nets.disc(&step.state, a).map_err(|x| x.to_string())?;
                ensure(
                    (DISC_EPS..=1.0 - DISC_EPS).contains(&d),
                    format!("discriminator score {d} outside its clamp"),
                )?;
            }
            checked += 1;
        }
        ensure(
            roll.path.is_valid(&kg) && roll.path.len() <= 3,
            "rollout left the graph",
        )?;
        let beam = e
            .beam_search(start, &pref, 25, 10)
            .map_err(|x| x.to_string())?;
        ensure(
            !beam.is_empty() && beam.len() <= 10,
            "beam size out of range",
        )?;
        for (i, p) in beam.iter().enumerate() {
            ensure(
                p.is_valid(&kg) && p.origin() == start && p.len() <= 3,
                "beam path invalid",
            )?;
            ensure(
                i == 0 || beam[i - 1].score >= p.score,
                "beam not sorted by score",
            )?;
            ensure(
                beam[..i].iter().all(|q| !q.same_route(p)),
                "beam holds a duplicate route",
            )?;
        }
        checked += beam.len();
    }

    // Generator: prior, posterior and step distributions; semantic score clamp.
    let vocab = tiny_vocab();
    for seed in 0..10 {
        let m = tiny_converse(&vocab, 100 + seed);
        for input in tiny_inputs(&vocab) {
            let post = path_posterior(&m, &input).map_err(|x| x.to_string())?;
            ensure(close_to_one(&post), "posterior not normalised")?;
            let g = generate(&m, &vocab, &input, Decoding::Greedy, 6).map_err(|x| x.to_string())?;
            ensure(
                close_to_one(&g.prior) && g.prior.len() == input.paths.len(),
                "prior not normalised",
            )?;

            let mut t = Tape::new(&m.store);
            let enc = m
                .encode_turn(&mut t, &input, Mode::Infer)
                .map_err(|x| x.to_string())?;
            let o_c = enc.context.summary;
            let paths: Vec<Var> = enc.paths.iter().map(|p| p.summary).collect();
            let w = m
                .path_weights(&mut t, o_c, None, &paths)
                .map_err(|x| x.to_string())?;
            let o_s = m
                .semantic_aggregate(&mut t, o_c, &paths)
                .map_err(|x| x.to_string())?;
            let h0 = m.merge_state(&mut t, o_s, o_c);
            let dc = m.decode_context(&mut t, &enc, &input, Some(w.prior));
            let out = m.step(&mut t, &dc, h0, BOS);
            let dist = t.value(out.dist).to_vec();
            ensure(
                dist.len() == input.ext_size() && close_to_one(&dist),
                "step distribution not normalised",
            )?;
            let xi = t.scalar(out.xi);
            ensure(
                (0.0..=1.0).contains(&xi),
                format!("copy gate {xi} outside [0, 1]"),
            )?;

            let x: Vec<f64> = t.value(o_s).to_vec();
            let y: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let s = semantic_score(&m, &x, &y).map_err(|x| x.to_string())?;
            ensure(
                (MIM_EPS..=1.0 - MIM_EPS).contains(&s),
                format!("semantic score {s} outside its clamp"),
            )?;
            checked += 4;
        }
        // KL(p || p) = 0 and KL >= 0.
        let mut t = Tape::new(&m.store);
        let a: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (av, bv) = (t.constant(a), t.constant(b));
        let same = PathWeights {
            prior: t.softmax(av),
            log_posterior: Some(t.log_softmax(av)),
            posterior: Some(t.softmax(av)),
        };
        let kl_same = m.kl_loss(&mut t, &same).map_err(|x| x.to_string())?;
        let kl_same = t.scalar(kl_same);
        ensure(
            kl_same.abs() < 1e-12,
            format!("KL of identical distributions is {kl_same}"),
        )?;
        let other = PathWeights {
            prior: t.softmax(bv),
            ..same
        };
        let kl = m.kl_loss(&mut t, &other).map_err(|x| x.to_string())?;
        ensure(t.scalar(kl) >= 0.0, "negative KL")?;
        checked += 2;
    }

    // Recall@K never decreases with K.
    for _ in 0..2000 {
        let n = rng.gen_range(0..40);
        let mut ranked: Vec<EntityId> = (0..60).map(EntityId).collect();
        ranked.shuffle(&mut rng);
        ranked.truncate(n);
        let gold: Vec<EntityId> = (0..rng.gen_range(1..3))
            .map(|_| EntityId(rng.gen_range(0..60)))
            .collect();
        let r: Vec<f64> = [1, 10, 25]
            .iter()
            .map(|&k| recall_at_k(&ranked, &gold, k).unwrap())
            .collect();
        ensure(
            r[0] <= r[1] && r[1] <= r[2],
            format!("recall not monotone: {r:?}"),
        )?;
        checked += 1;
    }

    let secs = clock.elapsed().as_secs_f64();
    ensure(secs < 120.0, format!("took {secs:.1}s"))?;
    Ok(format!("{checked} checks in {secs:.1}s"))
}

// --------------------------------------------------- 2. gradient checks

const FD_STEP: f64 = 1e-4;
const FD_FLOOR: f64 = 1e-6;
const FD_TOL: f64 = 1e-4;

fn gradients() -> Outcome {
    let clock = Instant::now();
    let mut lines = Vec::new();
    let mut worst: f64 = 0.0;
    let mut record = |name: &str, r: gradcheck::GradCheck| -> Result<(), String> {
        worst = worst.max(r.max_rel_err);
        lines.push(format!("{name} {:.1e}", r.max_rel_err));
        ensure(
            r.checked > 0 && r.max_rel_err < FD_TOL,
            format!("{name}: {r:?}"),
        )
    };

    // Reasoner objectives on a graph with 4-dim embeddings and ≤ 8-wide layers.
    let kg = branching_graph(21, 12, 3);
    let emb = random_table(&kg, 4, 22);
    let mut nets = policy_nets(&emb, 6, 5, 23);
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let pref = random_pref(4, &mut rng);
    let (steps, targets, fake, real) = {
        let e = env(&nets, &kg, &emb);
        let mut pick = |s: usize| {
            let ex = RecExample {
                start: EntityId(s),
                preference: pref.clone(),
                gold_items: vec![],
                gold_path: None,
            };
            e.rollout(&ex, RolloutMode::Sample, &mut rng).unwrap()
        };
        let roll = (0..kg.num_entities())
            .map(&mut pick)
            .find(|r| r.steps.len() >= 2)
            .expect("a multi-step episode");
        let gold = (0..kg.num_entities())
            .map(&mut pick)
            .find(|r| !r.path.is_empty())
            .unwrap()
            .path;
        let rewards: Vec<f64> = (0..roll.steps.len())
            .map(|k| 0.2 + 0.1 * k as f64)
            .collect();
        let targets =
            compute_targets(&nets, &roll.steps, &rewards, 1.0).map_err(|x| x.to_string())?;
        let fake: Vec<_> = roll
            .steps
            .iter()
            .map(|s| (s.state.clone(), s.action()))
            .collect();
        let real = e.gold_segments(&pref, &gold);
        (roll.steps, targets, fake, real)
    };
    let shell = nets.clone();
    let grads = {
        let e = env(&nets, &kg, &emb);
        let mut t = Tape::new(&nets.store);
        let l = actor_critic_loss(&mut t, &e, &steps, &targets, 0.01);
        t.backward(l)
    };
    let ids: Vec<ParamId> = nets
        .actor_params()
        .into_iter()
        .chain(nets.critic_params())
        .collect();
    record(
        "actor-critic",
        gradcheck::check(&mut nets.store, &ids, &grads, FD_STEP, FD_FLOOR, |store| {
            let mut n = shell.clone();
            n.store = store.clone();
            let e = env(&n, &kg, &emb);
            let mut t = Tape::new(&n.store);
            let l = actor_critic_loss(&mut t, &e, &steps, &targets, 0.01);
            t.scalar(l)
        }),
    )?;
    let grads = {
        let mut t = Tape::new(&nets.store);
        let l = discriminator_loss(&mut t, &nets, &fake, &real);
        t.backward(l)
    };
    let ids = nets.disc_params();
    record(
        "discriminator",
        gradcheck::check(&mut nets.store, &ids, &grads, FD_STEP, FD_FLOOR, |store| {
            let mut n = shell.clone();
            n.store = store.clone();
            let mut t = Tape::new(&n.store);
            let l = discriminator_loss(&mut t, &n, &fake, &real);
            t.scalar(l)
        }),
    )?;

    // Generator objectives on the tiny model.
    let vocab = tiny_vocab();
    let inputs = tiny_inputs(&vocab);
    let m = tiny_converse(&vocab, 31);
    let fd = |f: &dyn Fn(&mut Tape) -> Var| -> gradcheck::GradCheck {
        let grads: Gradients = {
            let mut t = Tape::new(&m.store);
            let l = f(&mut t);
            t.backward(l)
        };
        let mut store = m.store.clone();
        let ids: Vec<ParamId> = (0..store.len()).collect();
        gradcheck::check(&mut store, &ids, &grads, FD_STEP, FD_FLOOR, |s| {
            let mut t = Tape::new(s);
            let l = f(&mut t);
            t.scalar(l)
        })
    };
    let term = |t: &mut Tape, which: &str| -> Var {
        let l = turn_losses(&m, t, &inputs[0], Objective::Generation).unwrap();
        match which {
            "kl" => l.kl.unwrap(),
            "bow" => l.bow,
            _ => l.nll.unwrap(),
        }
    };
    record("KL", fd(&|t| term(t, "kl")))?;
    record("BOW", fd(&|t| term(t, "bow")))?;
    record("NLL", fd(&|t| term(t, "nll")))?;
    record(
        "BCE",
        fd(&|t| {
            let turns: Vec<_> = inputs
                .iter()
                .map(|i| turn_losses(&m, t, i, Objective::Imitation).unwrap())
                .collect();
            let pos: Vec<(Var, Var)> = turns
                .iter()
                .map(|l| (l.aggregate, l.statement.unwrap()))
                .collect();
            let neg: Vec<(Var, Var)> = (0..turns.len())
                .map(|k| {
                    (
                        turns[(k + 1) % turns.len()].aggregate,
                        turns[k].statement.unwrap(),
                    )
                })
                .collect();
            mim_loss(&m, t, &pos, &neg).unwrap()
        }),
    )?;

    let secs = clock.elapsed().as_secs_f64();
    ensure(secs < 300.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "max rel err {worst:.1e} ({}) in {secs:.1}s",
        lines.join(", ")
    ))
}

// ------------------------------------------------ 3. metric oracles

struct FixtureRecord {
    context: Vec<String>,
    gold_response: Vec<String>,
    gold_items: Vec<String>,
    gold_entities: Vec<String>,
    generated: Vec<String>,
    generated_entities: Vec<String>,
    paths: Vec<Vec<String>>,
    ranked: Vec<String>,
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

fn fixture() -> (Vec<(String, String, String)>, Vec<FixtureRecord>, Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/metrics_fixture.json");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let triplets = v["triplets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            let s = strings(t);
            (s[0].clone(), s[1].clone(), s[2].clone())
        })
        .collect();
    let records = v["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| FixtureRecord {
            context: strings(&r["context_entities"]),
            gold_response: words(r["gold_response"].as_str().unwrap()),
            gold_items: strings(&r["gold_items"]),
            gold_entities: strings(&r["gold_entities"]),
            generated: words(r["generated"].as_str().unwrap()),
            generated_entities: strings(&r["generated_entities"]),
            paths: r["candidate_paths"]
                .as_array()
                .unwrap()
                .iter()
                .map(strings)
                .collect(),
            ranked: strings(&r["ranked_items"]),
        })
        .collect();
    (triplets, records, v["expected"].clone())
}

fn library_report(
    triplets: &[(String, String, String)],
    records: &[FixtureRecord],
) -> MetricsReport {
    let kg = KnowledgeGraph::from_records(triplets.iter().cloned()).unwrap();
    let ids =
        |xs: &[String]| -> Vec<EntityId> { xs.iter().map(|x| kg.entity(x).unwrap()).collect() };
    let recs: Vec<_> = records
        .iter()
        .map(|r| dicr_core::eval::EvalRecord {
            context_entities: ids(&r.context),
            gold_response: r.gold_response.clone(),
            gold_items: ids(&r.gold_items),
            gold_entities: ids(&r.gold_entities),
            generated: r.generated.clone(),
            generated_entities: ids(&r.generated_entities),
            candidate_paths: r
                .paths
                .iter()
                .map(|p| {
                    let hops: Vec<_> = p[1..]
                        .chunks(2)
                        .map(|c| (kg.relation(&c[0]).unwrap(), kg.entity(&c[1]).unwrap()))
                        .collect();
                    ReasonPath::from_hops(kg.entity(&p[0]).unwrap(), &hops)
                })
                .collect(),
            ranked_items: ids(&r.ranked),
        })
        .collect();
    MetricsReport::compute(&recs, &kg, 1).unwrap()
}

fn grams(tokens: &[String], n: usize) -> Vec<&[String]> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| &tokens[i..i + n]).collect()
}

fn count(xs: &[&[String]], g: &[String]) -> usize {
    xs.iter().filter(|x| **x == g).count()
}

fn oracle_bleu(records: &[FixtureRecord], n: usize) -> f64 {
    let cand_len: usize = records.iter().map(|r| r.generated.len()).sum();
    let ref_len: usize = records.iter().map(|r| r.gold_response.len()).sum();
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    for r in records {
        for order in 1..=n {
            let c = grams(&r.generated, order);
            let rf = grams(&r.gold_response, order);
            total[order - 1] += c.len();
            let mut seen: Vec<&[String]> = Vec::new();
            for g in &c {
                if !seen.contains(g) {
                    seen.push(g);
                    matched[order - 1] += count(&c, g).min(count(&rf, g));
                }
            }
        }
    }
    if cand_len == 0 || matched[0] == 0 {
        return 0.0;
    }
    let mut logs = 0.0;
    let mut used = 0;
    for k in 0..n {
        if total[k] > 0 {
            let m = if matched[k] == 0 {
                1e-9
            } else {
                matched[k] as f64
            };
            logs += (m / total[k] as f64).ln();
            used += 1;
        }
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    bp * (logs / used as f64).exp()
}

fn oracle_distinct(records: &[FixtureRecord], n: usize) -> f64 {
    let all: Vec<&[String]> = records
        .iter()
        .flat_map(|r| grams(&r.generated, n))
        .collect();
    let mut distinct: Vec<&[String]> = Vec::new();
    for g in &all {
        if !distinct.contains(g) {
            distinct.push(g);
        }
    }
    if all.is_empty() {
        0.0
    } else {
        distinct.len() as f64 / all.len() as f64
    }
}

fn dedup(xs: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for x in xs {
        if !out.contains(x) {
            out.push(x.clone());
        }
    }
    out
}

fn oracle_f1(r: &FixtureRecord) -> f64 {
    let g = dedup(&r.generated_entities);
    let t = dedup(&r.gold_entities);
    if g.is_empty() && t.is_empty() {
        return 1.0;
    }
    let common = g.iter().filter(|x| t.contains(x)).count() as f64;
    if common == 0.0 {
        return 0.0;
    }
    let (p, rc) = (common / g.len() as f64, common / t.len() as f64);
    2.0 * p * rc / (p + rc)
}

/// Explainability by enumerating every entity pair of every record.
fn oracle_explain(
    triplets: &[(String, String, String)],
    records: &[FixtureRecord],
    graph: bool,
    inter: bool,
) -> f64 {
    let mut considered = 0usize;
    let mut ok = 0usize;
    for r in records.iter().filter(|r| !r.generated.is_empty()) {
        considered += 1;
        let resp = dedup(&r.generated_entities);
        let mut pairs = Vec::new();
        if inter {
            for c in &r.context {
                for e in &resp {
                    if c != e {
                        pairs.push((c.clone(), e.clone()));
                    }
                }
            }
        } else {
            for i in 0..resp.len() {
                for j in i + 1..resp.len() {
                    pairs.push((resp[i].clone(), resp[j].clone()));
                }
            }
        }
        let linked = |a: &String, b: &String| -> bool {
            if graph {
                triplets
                    .iter()
                    .any(|(h, _, t)| (h == a && t == b) || (h == b && t == a))
            } else {
                r.paths.iter().any(|p| {
                    (0..p.len().saturating_sub(2))
                        .step_by(2)
                        .any(|i| (&p[i] == a && &p[i + 2] == b) || (&p[i] == b && &p[i + 2] == a))
                })
            }
        };
        if pairs.iter().any(|(a, b)| linked(a, b)) {
            ok += 1;
        }
    }
    if considered == 0 {
        0.0
    } else {
        ok as f64 / considered as f64
    }
}

fn oracle_report(
    triplets: &[(String, String, String)],
    records: &[FixtureRecord],
) -> Vec<(&'static str, f64)> {
    let recall = |k: usize| {
        let scored: Vec<f64> = records
            .iter()
            .filter(|r| !r.gold_items.is_empty())
            .map(|r| {
                let hit = (0..k.min(r.ranked.len())).any(|i| r.gold_items.contains(&r.ranked[i]));
                if hit {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        scored.iter().sum::<f64>() / scored.len() as f64
    };
    let with_gold: Vec<&FixtureRecord> = records
        .iter()
        .filter(|r| !r.gold_items.is_empty())
        .collect();
    let hits = with_gold
        .iter()
        .filter(|r| {
            let text = r.generated.join(" ").to_lowercase();
            r.gold_items
                .iter()
                .any(|i| text.contains(&i.to_lowercase()))
        })
        .count();
    vec![
        ("recall_at_1", recall(1)),
        ("recall_at_10", recall(10)),
        ("recall_at_25", recall(25)),
        ("bleu1", oracle_bleu(records, 1)),
        ("bleu2", oracle_bleu(records, 2)),
        ("dist1", oracle_distinct(records, 1)),
        ("dist2", oracle_distinct(records, 2)),
        (
            "f1",
            records.iter().map(oracle_f1).sum::<f64>() / records.len() as f64,
        ),
        ("hit", hits as f64 / with_gold.len() as f64),
        ("g_inter", oracle_explain(triplets, records, true, true)),
        ("g_inner", oracle_explain(triplets, records, true, false)),
        ("p_inter", oracle_explain(triplets, records, false, true)),
        ("p_inner", oracle_explain(triplets, records, false, false)),
    ]
}

fn metric_oracles() -> Outcome {
    let (triplets, records, expected) = fixture();
    let lib = library_report(&triplets, &records);
    let lib_values: Vec<(&str, f64)> = lib.metrics();
    let mut worst_committed: f64 = 0.0;
    for (name, want) in oracle_report(&triplets, &records) {
        let got = lib_values
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| format!("library has no metric `{name}`"))?;
        ensure(
            got == want,
            format!("{name}: library {got} vs oracle {want}"),
        )?;
        let committed = expected[name]
            .as_f64()
            .ok_or_else(|| format!("fixture lacks `{name}`"))?;
        worst_committed = worst_committed.max((got - committed).abs());
        ensure(
            (got - committed).abs() <= 1e-12,
            format!("{name}: {got} vs committed {committed}"),
        )?;
    }
    Ok(format!(
        "13 metrics identical to brute-force oracles; max deviation from committed values {worst_committed:.1e}"
    ))
}

// ---------------------------------------------- 4-5. recommendation stage

struct RecOutcome {
    recall: Outcome,
    discriminator: Outcome,
}

fn rec_stage(root: &Path, scratch: &Path) -> RecOutcome {
    let trained = guarded(|| -> Result<(Models, DataSet, String), String> {
        let data = DataSet::load(&root.join("data")).map_err(|e| e.to_string())?;
        let mut cfg = TrainConfig::toy();
        cfg.apply_text(
            &std::fs::read_to_string(root.join("data/train.conf")).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        cfg.seed = 7;
        let run = scratch.join("rec-run");
        let (cpu0, wall) = (cpu_seconds(), Instant::now());
        let trainer = Trainer::new(cfg, data.clone(), &run).map_err(|e| e.to_string())?;
        trainer.run(Stage::Rec).map_err(|e| e.to_string())?;
        let wall = wall.elapsed().as_secs_f64();
        let cpu = cpu_seconds().zip(cpu0).map(|(b, a)| b - a);
        let budget = cpu.unwrap_or(wall);
        ensure(
            budget < 900.0,
            format!("stage took {budget:.0} CPU-seconds"),
        )?;
        let ours = std::fs::read(checkpoint_path(&run, Stage::Rec)).map_err(|e| e.to_string())?;
        let cli = std::fs::read(checkpoint_path(&root.join("run"), Stage::Rec))
            .map_err(|e| e.to_string())?;
        let same = if ours == cli {
            "identical to the CLI run"
        } else {
            "differs from the CLI run"
        };
        let models = Models::load(&checkpoint_path(&run, Stage::Rec)).map_err(|e| e.to_string())?;
        let timing = match cpu {
            Some(c) => format!("{c:.0} CPU-s, {wall:.0}s wall, checkpoint {same}"),
            None => format!("{wall:.0}s wall, checkpoint {same}"),
        };
        Ok((models, data, timing))
    });
    let (models, data, timing) = match trained {
        Ok(x) => x,
        Err(e) => {
            return RecOutcome {
                recall: Err(e.clone()),
                discriminator: Err(format!("no trained reasoner: {e}")),
            }
        }
    };
    let recall = guarded(|| {
        let test = TurnSet::build(&data, &models.cfg, &models.emb, "test", false)
            .map_err(|e| e.to_string())?;
        let e = models.env(&data.kg);
        let r1 = greedy_recall1(&e, &test.rec).map_err(|e| e.to_string())?;
        // A uniformly random item ranking puts a gold item first with
        // probability |gold| / |E|.
        let n = data.kg.num_entities() as f64;
        let with_gold: Vec<&RecExample> = test
            .rec
            .iter()
            .filter(|r| !r.gold_items.is_empty())
            .collect();
        let baseline = with_gold
            .iter()
            .map(|r| (r.gold_items.len() as f64 / n).min(1.0))
            .sum::<f64>()
            / with_gold.len() as f64;
        ensure(r1 >= 0.8, format!("greedy Recall@1 {r1:.3} < 0.8"))?;
        ensure(
            baseline <= 0.01,
            format!("random baseline {baseline:.4} > 0.01"),
        )?;
        Ok(format!(
            "greedy Recall@1 {r1:.3} on {} test turns vs random {baseline:.4} ({timing})",
            with_gold.len()
        ))
    });
    let discriminator = guarded(|| {
        let e = models.env(&data.kg);
        let train = TurnSet::build(&data, &models.cfg, &models.emb, "train", true)
            .map_err(|e| e.to_string())?;
        let test = TurnSet::build(&data, &models.cfg, &models.emb, "test", true)
            .map_err(|e| e.to_string())?;
        let fit = segment_scores(&e, &train.rec, 1).map_err(|e| e.to_string())?;
        let held = segment_scores(&e, &test.rec, 2).map_err(|e| e.to_string())?;
        let threshold = fit_threshold(&fit);
        let acc = threshold_accuracy(&held, threshold);
        let at_half = threshold_accuracy(&held, 0.5);
        ensure(
            acc >= 0.9,
            format!(
                "held-out accuracy {acc:.3} < 0.9 (threshold {threshold:.3}; {at_half:.3} at 0.5)"
            ),
        )?;
        Ok(format!(
            "held-out accuracy {acc:.3} on {} segments (threshold {threshold:.3} fitted on train; {at_half:.3} at 0.5)",
            held.len()
        ))
    });
    RecOutcome {
        recall,
        discriminator,
    }
}

// --------------------------------------------------- 6. end to end

fn end_to_end(root: &Path) -> Outcome {
    let joint = report_at(&root.join("run").join(REPORT_FILE))?;
    let gen_path = root.join("gen_report.txt");
    let ckpt = checkpoint_path(&root.join("run"), Stage::Gen);
    dicr(&[
        "eval",
        "--out",
        root.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--report",
        gen_path.to_str().unwrap(),
    ])?;
    let gen = report_at(&gen_path)?;
    let hit = joint.hit.ok_or("joint report has no hit rate")?;
    let gen_hit = gen.hit.ok_or("pre-joint report has no hit rate")?;
    ensure(hit >= 0.7, format!("Hit {hit:.3} < 0.7"))?;
    ensure(
        joint.p_inter >= 0.6,
        format!("P-Inter {:.3} < 0.6", joint.p_inter),
    )?;
    ensure(
        hit >= gen_hit - 0.02,
        format!("joint Hit {hit:.3} fell below pre-joint {gen_hit:.3}"),
    )?;
    Ok(format!(
        "Hit {hit:.3}, P-Inter {:.3}; pre-joint Hit {gen_hit:.3} (P-Inter {:.3})",
        joint.p_inter, gen.p_inter
    ))
}

// ------------------------------------------------ 7. beam oracle

/// Best complete path by exhaustive enumeration: `(route, score, runner-up score)`.
fn exhaustive_best(e: &ReasoningEnv, pref: &[f64], start: EntityId) -> (ReasonPath, f64, f64) {
    fn walk(e: &ReasoningEnv, pref: &[f64], p: ReasonPath, out: &mut Vec<ReasonPath>) {
        if p.terminal {
            out.push(p);
            return;
        }
        let state = e.state(pref, &p);
        let space = e.space(pref, &p).unwrap();
        let probs = e.nets.policy(&state, &space, e.emb).unwrap();
        for (a, pr) in space.actions.iter().zip(&probs) {
            let next = match a.relation {
                None => {
                    let mut q = p.clone();
                    q.score += pr.ln();
                    q.terminal = true;
                    q
                }
                Some(r) => {
                    let mut q = p.extend(r, a.entity, pr.ln());
                    q.terminal = q.len() >= e.max_len;
                    q
                }
            };
            walk(e, pref, next, out);
        }
    }
    let mut all = Vec::new();
    walk(e, pref, ReasonPath::start(start), &mut all);
    let mut best = 0;
    for i in 1..all.len() {
        if all[i].score > all[best].score {
            best = i;
        }
    }
    let runner_up = all
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, p)| p.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let s = all[best].score;
    (all.swap_remove(best), s, runner_up)
}

fn beam_oracle() -> Outcome {
    let kg = branching_graph(71, 150, 4);
    ensure(
        (0..kg.num_entities()).all(|i| kg.outgoing(EntityId(i)).unwrap().len() <= 4),
        "graph exceeds branching 4",
    )?;
    let emb = random_table(&kg, 8, 72);
    let nets = policy_nets(&emb, 16, 8, 73);
    let e = env(&nets, &kg, &emb);
    let mut rng = ChaCha8Rng::seed_from_u64(74);
    let mut starts: Vec<usize> = (0..kg.num_entities()).collect();
    starts.shuffle(&mut rng);
    let mut agree = 0;
    let mut min_gap = f64::INFINITY;
    for &s in starts.iter().take(100) {
        let pref = random_pref(8, &mut rng);
        let (best, score, runner_up) = exhaustive_best(&e, &pref, EntityId(s));
        min_gap = min_gap.min(score - runner_up);
        // Width 25 covers every two-hop prefix when branching is at most 4.
        let top = e
            .beam_search(EntityId(s), &pref, 25, 1)
            .map_err(|x| x.to_string())?;
        if top
            .first()
            .is_some_and(|p| p.same_route(&best) && (p.score - score).abs() < 1e-12)
        {
            agree += 1;
        }
    }
    ensure(agree == 100, format!("{agree}/100 starts agree"))?;
    Ok(format!(
        "100/100 starts agree (smallest best-vs-runner-up gap {min_gap:.2e})"
    ))
}

// ------------------------------------------------ 8. determinism

fn determinism(a: &Path, b: &Path) -> Outcome {
    let ra = std::fs::read(a.join("run").join(REPORT_FILE)).map_err(|e| e.to_string())?;
    let rb = std::fs::read(b.join("run").join(REPORT_FILE)).map_err(|e| e.to_string())?;
    ensure(ra == rb, "reports differ")?;
    let ca =
        std::fs::read(checkpoint_path(&a.join("run"), Stage::Joint)).map_err(|e| e.to_string())?;
    let cb =
        std::fs::read(checkpoint_path(&b.join("run"), Stage::Joint)).map_err(|e| e.to_string())?;
    Ok(format!(
        "reports byte-identical ({} bytes); final checkpoints {}",
        ra.len(),
        if ca == cb { "identical too" } else { "differ" }
    ))
}

// ------------------------------------------------ 9. path-count sweep

fn path_sweep(root: &Path) -> Outcome {
    dicr(&["sweep", "--out", root.to_str().unwrap(), "--np", "1,5,10"])?;
    let reports: Vec<MetricsReport> = [1, 5, 10]
        .iter()
        .map(|n| report_at(&root.join("sweep").join(format!("report_np{n}.txt"))))
        .collect::<Result<_, _>>()?;
    ensure(
        root.join("sweep/sweep.png").is_file(),
        "sweep chart missing",
    )?;
    for w in reports.windows(2) {
        ensure(
            w[1].p_inter >= w[0].p_inter - 0.02 && w[1].p_inner >= w[0].p_inner - 0.02,
            format!(
                "decrease from N_p {} to {}: P-Inter {:.3} -> {:.3}, P-Inner {:.3} -> {:.3}",
                w[0].n_paths, w[1].n_paths, w[0].p_inter, w[1].p_inter, w[0].p_inner, w[1].p_inner
            ),
        )?;
    }
    let trend: Vec<String> = reports
        .iter()
        .map(|r| format!("{}: {:.3}/{:.3}", r.n_paths, r.p_inter, r.p_inner))
        .collect();
    Ok(format!("P-Inter/P-Inner by N_p {}", trend.join(", ")))
}

// ------------------------------------------------------------- driver

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));

    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "invariant suite", guarded(invariants)),
        (2, "gradient checks", guarded(gradients)),
        (3, "metric oracles", guarded(metric_oracles)),
    ];
    let run_a = toy_run(&a);
    let run_b = run_a.clone().and_then(|_| toy_run(&b));
    let needs = |run: &Result<(), String>, f: &dyn Fn() -> Outcome| match run {
        Ok(()) => guarded(f),
        Err(e) => Err(format!("toy run failed: {e}")),
    };
    let rec = match &run_a {
        Ok(()) => rec_stage(&a, dir.path()),
        Err(e) => RecOutcome {
            recall: Err(format!("toy run failed: {e}")),
            discriminator: Err(format!("toy run failed: {e}")),
        },
    };
    results.push((4, "toy recommendation learning", rec.recall));
    results.push((5, "path discriminator", rec.discriminator));
    results.push((6, "toy end to end", needs(&run_a, &|| end_to_end(&a))));
    results.push((7, "beam search oracle", guarded(beam_oracle)));
    results.push((8, "determinism", needs(&run_b, &|| determinism(&a, &b))));
    results.push((9, "path count sweep", needs(&run_a, &|| path_sweep(&a))));

    // Written straight to stdout so the lines show without --nocapture.
    let mut out = std::io::stdout().lock();
    let mut failed = Vec::new();
    for (id, name, r) in &results {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(*id);
                ("FAIL", d)
            }
        };
        writeln!(out, "[{tag}] {id}. {name}: {detail}").unwrap();
    }
    out.flush().unwrap();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
