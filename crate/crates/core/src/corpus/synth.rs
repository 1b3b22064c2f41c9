use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{io_err, write_examples, CorpusError, DataPaths, RawExample, Split, Target, TaskDescriptor, TaskRegistry, TaskType};
use crate::confparse::{render, ConfigObject, ConfigTree, ConfigValue, Source};
use crate::tensor::RunRng;

pub const INTERMEDIATE_TASK: &str = "synth_intermediate";
pub const TARGET_TASK: &str = "synth_target";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub vocab_size: usize,
    /// Words whose presence decides the label in the transfer pair.
    pub num_triggers: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub intermediate_train: usize,
    pub target_train: usize,
    /// Val and test size for the transfer pair.
    pub eval_size: usize,
    /// Train size for the remaining tasks.
    pub aux_train: usize,
    /// Val and test size for the remaining tasks.
    pub aux_eval: usize,
    pub num_choices: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            vocab_size: 200,
            num_triggers: 20,
            min_len: 5,
            max_len: 12,
            intermediate_train: 2048,
            target_train: 32,
            eval_size: 256,
            aux_train: 200,
            aux_eval: 100,
            num_choices: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSuite {
    pub root: PathBuf,
    /// Task definitions block, loadable with `include`.
    pub tasks_conf: PathBuf,
    pub descriptors: Vec<TaskDescriptor>,
    pub triggers: Vec<String>,
}

impl SynthSuite {
    pub fn descriptor(&self, name: &str) -> Option<&TaskDescriptor> {
        self.descriptors.iter().find(|d| d.name == name)
    }

    pub fn registry(&self) -> TaskRegistry {
        let mut reg = TaskRegistry::new();
        for d in &self.descriptors {
            reg.register(d.clone()).expect("generated tasks are valid");
        }
        reg
    }

    /// The latent labelling rule shared by the transfer pair.
    pub fn has_trigger(&self, text: &str) -> bool {
        text.split_whitespace().any(|w| self.triggers.iter().any(|t| t == w))
    }
}

struct Lexicon {
    plain: Vec<String>,
    triggers: Vec<String>,
    trigger_set: HashSet<String>,
}

impl Lexicon {
    fn new(params: &SynthParams, rng: &mut RunRng) -> Self {
        let mut words: Vec<String> = (0..params.vocab_size).map(|i| format!("w{i:03}")).collect();
        words.shuffle(rng);
        let plain = words.split_off(params.num_triggers);
        let mut triggers = words;
        triggers.sort();
        let trigger_set = triggers.iter().cloned().collect();
        Lexicon { plain, triggers, trigger_set }
    }

    fn plain_words(&self, rng: &mut RunRng, n: usize) -> Vec<String> {
        (0..n).map(|_| self.plain.choose(rng).unwrap().clone()).collect()
    }

    fn sentence(&self, rng: &mut RunRng, params: &SynthParams, positive: bool) -> Vec<String> {
        let len = rng.gen_range(params.min_len..=params.max_len);
        let mut words = self.plain_words(rng, len);
        if positive {
            let k = rng.gen_range(1..=2.min(len));
            for _ in 0..k {
                let pos = rng.gen_range(0..len);
                words[pos] = self.triggers.choose(rng).unwrap().clone();
            }
        }
        words
    }

    fn tag_of(&self, word: &str) -> &'static str {
        if self.trigger_set.contains(word) {
            "TRG"
        } else if word[1..].parse::<usize>().unwrap_or(0) % 2 == 0 {
            "EVEN"
        } else {
            "ODD"
        }
    }
}

fn example(split: Split, i: usize, text_a: String, text_b: Option<String>, choices: Option<Vec<String>>, target: Target) -> RawExample {
    RawExample { guid: format!("{split}-{i}"), text_a, text_b, choices, target: Some(target) }
}

type Gen<'a> = Box<dyn Fn(&mut RunRng, Split, usize) -> RawExample + 'a>;

fn classify<'a>(lex: &'a Lexicon, params: &'a SynthParams, labels: [&'static str; 2]) -> Gen<'a> {
    Box::new(move |rng, split, i| {
        let positive = rng.gen_bool(0.5);
        let words = lex.sentence(rng, params, positive);
        example(split, i, words.join(" "), None, None, Target::Label(labels[positive as usize].to_string()))
    })
}

/// Writes a deterministic suite of tasks under `out_dir`: a transfer pair
/// sharing the trigger rule plus one task per remaining type.
pub fn generate_synthetic_suite(seed: u64, params: &SynthParams, out_dir: &Path) -> Result<SynthSuite, CorpusError> {
    let invalid = |message: &str| CorpusError::InvalidDescriptor { task: "synthetic suite".to_string(), message: message.to_string() };
    if params.num_triggers == 0 || params.num_triggers >= params.vocab_size || params.vocab_size > 1000 {
        return Err(invalid("need 0 < num_triggers < vocab_size <= 1000"));
    }
    if params.min_len == 0 || params.min_len > params.max_len || params.num_choices < 2 {
        return Err(invalid("need 0 < min_len <= max_len and num_choices >= 2"));
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let lex = Lexicon::new(params, &mut RunRng::with_stream(seed, 0));
    let lex = &lex;

    let pair: Gen<'_> = Box::new(move |rng, split, i| {
        let positive = rng.gen_bool(0.5);
        let a = lex.sentence(rng, params, positive);
        let entailed = rng.gen_bool(0.5);
        let n = rng.gen_range(1..=3.min(a.len()));
        let mut b: Vec<String> = (0..n).map(|_| a.choose(rng).unwrap().clone()).collect();
        if !entailed {
            let fresh: Vec<&String> = lex.plain.iter().filter(|w| !a.contains(w)).collect();
            let pos = rng.gen_range(0..n);
            b[pos] = (*fresh.choose(rng).unwrap()).clone();
        }
        let label = if entailed { "entailed" } else { "not_entailed" };
        example(split, i, a.join(" "), Some(b.join(" ")), None, Target::Label(label.to_string()))
    });
    let regression: Gen<'_> = Box::new(move |rng, split, i| {
        let positive = rng.gen_bool(0.7);
        let words = lex.sentence(rng, params, positive);
        let hits = words.iter().filter(|w| lex.trigger_set.contains(*w)).count();
        let value = hits as f64 / words.len() as f64;
        example(split, i, words.join(" "), None, None, Target::Value(value))
    });
    let tagging: Gen<'_> = Box::new(move |rng, split, i| {
        let positive = rng.gen_bool(0.5);
        let words = lex.sentence(rng, params, positive);
        let tags = words.iter().map(|w| lex.tag_of(w).to_string()).collect();
        example(split, i, words.join(" "), None, None, Target::Tags(tags))
    });
    let choice: Gen<'_> = Box::new(move |rng, split, i| {
        let context = lex.sentence(rng, params, false);
        let answer = rng.gen_range(0..params.num_choices);
        let choices = (0..params.num_choices)
            .map(|c| {
                let n = rng.gen_range(1..=3);
                let mut words = lex.plain_words(rng, n);
                if c == answer {
                    let pos = rng.gen_range(0..n);
                    words[pos] = lex.triggers.choose(rng).unwrap().clone();
                }
                words.join(" ")
            })
            .collect();
        example(split, i, context.join(" "), None, Some(choices), Target::Choice(answer))
    });

    let (big, small, aux, aux_eval) = (params.intermediate_train, params.target_train, params.aux_train, params.aux_eval);
    let eval = params.eval_size;
    let plan: Vec<(&str, TaskType, Vec<&str>, [usize; 3], Gen<'_>)> = vec![
        (INTERMEDIATE_TASK, TaskType::SingleClassification, vec!["neg", "pos"], [big, eval, eval], classify(lex, params, ["neg", "pos"])),
        (TARGET_TASK, TaskType::SingleClassification, vec!["no", "yes"], [small, eval, eval], classify(lex, params, ["no", "yes"])),
        ("synth_pair", TaskType::PairClassification, vec!["entailed", "not_entailed"], [aux, aux_eval, aux_eval], pair),
        ("synth_regression", TaskType::Regression, vec![], [aux, aux_eval, aux_eval], regression),
        ("synth_tagging", TaskType::Tagging, vec!["EVEN", "ODD", "TRG"], [aux, aux_eval, aux_eval], tagging),
        ("synth_mc", TaskType::MultipleChoice, vec![], [aux, aux_eval, aux_eval], choice),
    ];

    let mut descriptors = Vec::new();
    let mut conf = ConfigObject::new();
    for (stream, (name, task_type, labels, sizes, gen)) in plan.into_iter().enumerate() {
        let mut desc = TaskDescriptor::new(name, task_type, DataPaths::in_dir(&out_dir.join(name), task_type)).with_labels(labels.clone());
        if task_type == TaskType::MultipleChoice {
            desc = desc.with_num_choices(params.num_choices);
        }
        let mut rng = RunRng::with_stream(seed, stream as u64 + 1);
        for (split, n) in Split::ALL.into_iter().zip(sizes) {
            let examples: Vec<RawExample> = (0..n).map(|i| gen(&mut rng, split, i)).collect();
            let path = desc.data_paths.get(split);
            std::fs::create_dir_all(path.parent().unwrap()).map_err(io_err(path))?;
            crate::codec::write_atomic(path, write_examples(&desc, &examples)?.as_bytes()).map_err(io_err(path))?;
        }

        let mut def = ConfigObject::new();
        def.insert("type".into(), ConfigValue::String(task_type.as_str().into()));
        if !labels.is_empty() {
            def.insert("labels".into(), ConfigValue::List(labels.iter().map(|l| ConfigValue::String(l.to_string())).collect()));
        }
        if let Some(n) = desc.num_choices {
            def.insert("num_choices".into(), ConfigValue::Int(n as i64));
        }
        conf.insert(name.to_string(), ConfigValue::Object(def));
        descriptors.push(desc);
    }

    let mut root = ConfigObject::new();
    root.insert("tasks".into(), ConfigValue::Object(conf));
    let tasks_conf = out_dir.join("tasks.conf");
    let text = render(&ConfigTree::from_object(root, Source::Inline));
    crate::codec::write_atomic(&tasks_conf, text.as_bytes()).map_err(io_err(&tasks_conf))?;

    Ok(SynthSuite { root: out_dir.to_path_buf(), tasks_conf, descriptors, triggers: lex.triggers.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_examples;

    fn small() -> SynthParams {
        SynthParams { intermediate_train: 64, eval_size: 16, aux_train: 12, aux_eval: 6, ..SynthParams::default() }
    }

    fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_synthetic_suite(7, &small(), a.path()).unwrap();
        generate_synthetic_suite(7, &small(), b.path()).unwrap();
        generate_synthetic_suite(8, &small(), c.path()).unwrap();
        assert_eq!(read_tree(a.path()), read_tree(b.path()));
        assert_ne!(read_tree(a.path()), read_tree(c.path()));
    }

    #[test]
    fn transfer_pair_follows_trigger_rule() {
        let dir = tempfile::tempdir().unwrap();
        let suite = generate_synthetic_suite(3, &small(), dir.path()).unwrap();
        for (name, pos) in [(INTERMEDIATE_TASK, "pos"), (TARGET_TASK, "yes")] {
            let desc = suite.descriptor(name).unwrap();
            for split in Split::ALL {
                for ex in load_examples(desc, split).unwrap() {
                    let label = matches!(&ex.target, Some(Target::Label(l)) if l == pos);
                    assert_eq!(label, suite.has_trigger(&ex.text_a));
                }
            }
        }
    }

    #[test]
    fn example_counts_match_files() {
        let dir = tempfile::tempdir().unwrap();
        let params = SynthParams { target_train: 32, intermediate_train: 2048, ..small() };
        let suite = generate_synthetic_suite(1, &params, dir.path()).unwrap();
        let lines = |p: &Path| std::fs::read_to_string(p).unwrap().lines().count();
        assert_eq!(lines(&suite.descriptor(TARGET_TASK).unwrap().data_paths.train), 32);
        assert_eq!(lines(&suite.descriptor(INTERMEDIATE_TASK).unwrap().data_paths.train), 2048);
        assert_eq!(load_examples(suite.descriptor("synth_mc").unwrap(), Split::Train).unwrap().len(), 12);
        assert_eq!(load_examples(suite.descriptor("synth_tagging").unwrap(), Split::Val).unwrap().len(), 6);
    }

    #[test]
    fn tasks_conf_registers_every_task() {
        let dir = tempfile::tempdir().unwrap();
        let suite = generate_synthetic_suite(1, &small(), dir.path()).unwrap();
        let tree = crate::confparse::parse_config_file(&suite.tasks_conf).unwrap();
        let reg = TaskRegistry::from_config(tree.get("tasks").unwrap().as_object().unwrap(), dir.path()).unwrap();
        assert_eq!(reg, suite.registry());
    }
}
