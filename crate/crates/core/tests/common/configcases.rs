//! Hand-derived parse/merge/override cases and a random tree generator.

use std::path::Path;

use phasekit::confparse::{merge, parse_config_file, parse_overrides, ConfigError, ConfigObject, ConfigTree, ConfigValue, Source};
use phasekit::tensor::RunRng;
use rand::Rng;

pub const REFERENCE_CONFIG: &str = r#"// Config for BERT experiments.

// Get default configs from a file:
include "defaults.conf"
exp_name = "bert-large-cased"

// Data and preprocessing settings
max_seq_len = 256

// Model settings
input_module = "bert-large-cased"
transformers_output_mode = "top"
s2s = {
    attention = none
}
sent_enc = "none"
sep_embs_for_skip = 1
classifier = log_reg
// fine-tune entire BERT model
transfer_paradigm = finetune

// Training settings
dropout = 0.1
optimizer = bert_adam
batch_size = 4
max_epochs = 10
lr = .00001
min_lr = .0000001
lr_patience = 4
patience = 20
max_vals = 10000

// Phase configuration
do_pretrain = 1
do_target_task_training = 1
do_full_eval = 1
write_preds = "val,test"
write_strict_glue_format = 1

// Task specific configuration
commitbank = {
    val_interval = 60
    max_epochs = 40
}
"#;

pub const REFERENCE_DEFAULTS: &str = "exp_name = defaults\nmax_seq_len = 64\nbatch_size = 32\nseed = 1234\nrun_name = base\ncommitbank { val_interval = 100, lr = 0.1 }\n";

/// The override argument as delivered after the shell joins the continued line.
pub const CLI_OVERRIDES: &str = "target_tasks = swag,                run_name = swag_01";

pub enum Value {
    S(&'static str),
    I(i64),
    F(f64),
    B(bool),
    L(Vec<Value>),
    O(Vec<(&'static str, Value)>),
}

pub fn value(v: &Value) -> ConfigValue {
    match v {
        Value::S(s) => ConfigValue::String(s.to_string()),
        Value::I(i) => ConfigValue::Int(*i),
        Value::F(f) => ConfigValue::Float(*f),
        Value::B(b) => ConfigValue::Bool(*b),
        Value::L(items) => ConfigValue::List(items.iter().map(value).collect()),
        Value::O(fields) => ConfigValue::Object(object(fields)),
    }
}

pub fn object(fields: &[(&'static str, Value)]) -> ConfigObject {
    fields.iter().map(|(k, v)| (k.to_string(), value(v))).collect()
}

pub struct Case {
    pub name: &'static str,
    /// Files written side by side; all but `include`-only files are composed
    /// left to right in `compose` order.
    pub files: Vec<(&'static str, &'static str)>,
    pub compose: Vec<&'static str>,
    pub overrides: Option<&'static str>,
    pub expected: Result<Vec<(&'static str, Value)>, &'static str>,
}

/// Parses and merges a case in `dir`. Errors are reported by variant name.
pub fn evaluate(case: &Case, dir: &Path) -> Result<ConfigTree, String> {
    for (name, text) in &case.files {
        std::fs::write(dir.join(name), text).map_err(|e| e.to_string())?;
    }
    let kind = |e: ConfigError| {
        let name = format!("{e:?}");
        name.split([' ', '{', '(']).next().unwrap_or_default().to_string()
    };
    let mut tree = ConfigTree::new();
    for name in &case.compose {
        tree = merge(&tree, &parse_config_file(&dir.join(name)).map_err(kind)?);
    }
    if let Some(o) = case.overrides {
        tree = merge(&tree, &parse_overrides(o).map_err(kind)?);
    }
    Ok(tree)
}

/// Runs a case and describes any difference from its expectation.
pub fn check(case: &Case, dir: &Path) -> Result<(), String> {
    match (evaluate(case, dir), &case.expected) {
        (Ok(tree), Ok(fields)) => {
            let expected = object(fields);
            if tree.root == expected {
                Ok(())
            } else {
                Err(format!("got {:?}, expected {:?}", tree.root, expected))
            }
        }
        (Err(kind), Err(want)) if kind == *want => Ok(()),
        (Ok(tree), Err(want)) => Err(format!("parsed {:?}, expected {want}", tree.root)),
        (Err(kind), _) => Err(format!("failed with {kind}")),
    }
}

use Value::*;

fn single(name: &'static str, text: &'static str, expected: Vec<(&'static str, Value)>) -> Case {
    Case { name, files: vec![("main.conf", text)], compose: vec!["main.conf"], overrides: None, expected: Ok(expected) }
}

fn failing(name: &'static str, text: &'static str, kind: &'static str) -> Case {
    Case { name, files: vec![("main.conf", text)], compose: vec!["main.conf"], overrides: None, expected: Err(kind) }
}

fn reference_expected(with_overrides: bool) -> Vec<(&'static str, Value)> {
    let mut fields = vec![
        ("exp_name", S("bert-large-cased")),
        ("max_seq_len", I(256)),
        ("batch_size", I(4)),
        ("seed", I(1234)),
        ("run_name", S(if with_overrides { "swag_01" } else { "base" })),
        ("commitbank", O(vec![("val_interval", I(60)), ("lr", F(0.1)), ("max_epochs", I(40))])),
        ("input_module", S("bert-large-cased")),
        ("transformers_output_mode", S("top")),
        ("s2s", O(vec![("attention", S("none"))])),
        ("sent_enc", S("none")),
        ("sep_embs_for_skip", I(1)),
        ("classifier", S("log_reg")),
        ("transfer_paradigm", S("finetune")),
        ("dropout", F(0.1)),
        ("optimizer", S("bert_adam")),
        ("max_epochs", I(10)),
        ("lr", F(0.00001)),
        ("min_lr", F(0.0000001)),
        ("lr_patience", I(4)),
        ("patience", I(20)),
        ("max_vals", I(10000)),
        ("do_pretrain", I(1)),
        ("do_target_task_training", I(1)),
        ("do_full_eval", I(1)),
        ("write_preds", S("val,test")),
        ("write_strict_glue_format", I(1)),
    ];
    if with_overrides {
        fields.push(("target_tasks", S("swag")));
    }
    fields
}

pub fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "reference config over its defaults",
            files: vec![("defaults.conf", REFERENCE_DEFAULTS), ("main.conf", REFERENCE_CONFIG)],
            compose: vec!["main.conf"],
            overrides: None,
            expected: Ok(reference_expected(false)),
        },
        Case {
            name: "reference config with command-line overrides",
            files: vec![("defaults.conf", REFERENCE_DEFAULTS), ("main.conf", REFERENCE_CONFIG)],
            compose: vec!["main.conf"],
            overrides: Some(CLI_OVERRIDES),
            expected: Ok(reference_expected(true)),
        },
        Case {
            name: "override string alone",
            files: vec![],
            compose: vec![],
            overrides: Some(CLI_OVERRIDES),
            expected: Ok(vec![("target_tasks", S("swag")), ("run_name", S("swag_01"))]),
        },
        single("integers, floats, booleans", "a = 1\nb = -2\nc = 1.5\nd = .25\ne = 1e3\nf = true\ng = false", vec![
            ("a", I(1)),
            ("b", I(-2)),
            ("c", F(1.5)),
            ("d", F(0.25)),
            ("e", F(1000.0)),
            ("f", B(true)),
            ("g", B(false)),
        ]),
        single("quoted and unquoted strings", "a = \"x y\"\nb = plain words\nc = \"1\"\nd = \"esc \\\"q\\\" \\\\ \\n\"", vec![
            ("a", S("x y")),
            ("b", S("plain words")),
            ("c", S("1")),
            ("d", S("esc \"q\" \\ \n")),
        ]),
        single("colon separator and bare object", "a : 3\nb { c = 4 }", vec![("a", I(3)), ("b", O(vec![("c", I(4))]))]),
        single("dotted keys nest", "a.b.c = 1\na.b.d = 2", vec![("a", O(vec![("b", O(vec![("c", I(1)), ("d", I(2))]))]))]),
        single("later duplicate wins", "a = 1\na = 2", vec![("a", I(2))]),
        single("duplicate objects merge", "a { x = 1, y = 2 }\na { y = 3, z = 4 }", vec![("a", O(vec![("x", I(1)), ("y", I(3)), ("z", I(4))]))]),
        single("scalar replaces object", "a { x = 1 }\na = 5", vec![("a", I(5))]),
        single("object replaces scalar", "a = 5\na { x = 1 }", vec![("a", O(vec![("x", I(1))]))]),
        single("lists replace wholesale", "a = [1, 2, 3]\na = [\"x\"]", vec![("a", L(vec![S("x")]))]),
        single("nested lists and objects", "a = [[1, 2], { b = c }, []]", vec![("a", L(vec![L(vec![I(1), I(2)]), O(vec![("b", S("c"))]), L(vec![])]))]),
        single("comments of both styles", "# hash\na = 1 // trailing\n// whole line\nb = 2 # trailing", vec![("a", I(1)), ("b", I(2))]),
        single("quoted keys keep dots", "\"a.b\" = 1", vec![("a.b", I(1))]),
        single("empty object", "a {}", vec![("a", O(vec![]))]),
        Case {
            name: "include then local override",
            files: vec![("base.conf", "a = 1\nb { c = 2, d = 3 }"), ("main.conf", "include \"base.conf\"\nb.c = 9")],
            compose: vec!["main.conf"],
            overrides: None,
            expected: Ok(vec![("a", I(1)), ("b", O(vec![("c", I(9)), ("d", I(3))]))]),
        },
        Case {
            name: "include after assignment wins",
            files: vec![("base.conf", "a = 1"), ("main.conf", "a = 2\ninclude \"base.conf\"")],
            compose: vec!["main.conf"],
            overrides: None,
            expected: Ok(vec![("a", I(1))]),
        },
        Case {
            name: "nested includes resolve relative to the including file",
            files: vec![("inner.conf", "x = inner"), ("mid.conf", "include \"inner.conf\"\ny = mid"), ("main.conf", "include \"mid.conf\"\nz = main")],
            compose: vec!["main.conf"],
            overrides: None,
            expected: Ok(vec![("x", S("inner")), ("y", S("mid")), ("z", S("main"))]),
        },
        Case {
            name: "later config file wins",
            files: vec![("a.conf", "lr = 0.1\nt { p = 1, q = 2 }"), ("b.conf", "lr = 0.2\nt { q = 3 }")],
            compose: vec!["a.conf", "b.conf"],
            overrides: None,
            expected: Ok(vec![("lr", F(0.2)), ("t", O(vec![("p", I(1)), ("q", I(3))]))]),
        },
        Case {
            name: "dotted override merges into block",
            files: vec![("main.conf", "commitbank { val_interval = 60, max_epochs = 40 }")],
            compose: vec!["main.conf"],
            overrides: Some("commitbank.val_interval = 10"),
            expected: Ok(vec![("commitbank", O(vec![("val_interval", I(10)), ("max_epochs", I(40))]))]),
        },
        Case {
            name: "override with newlines and quoted commas",
            files: vec![],
            compose: vec![],
            overrides: Some("pretrain_tasks = \"a,b\"\nlr = 0.5"),
            expected: Ok(vec![("pretrain_tasks", S("a,b")), ("lr", F(0.5))]),
        },
        Case {
            name: "override equals an appended assignment",
            files: vec![("main.conf", "a = 1\nb = 2")],
            compose: vec!["main.conf"],
            overrides: Some("a = 3"),
            expected: Ok(vec![("a", I(3)), ("b", I(2))]),
        },
        failing("unterminated string", "a = \"oops", "Syntax"),
        failing("unbalanced brace", "a { b = 1", "Syntax"),
        failing("substitution rejected", "a = ${b}", "Syntax"),
        failing("missing include", "include \"nowhere.conf\"", "MissingInclude"),
        Case {
            name: "include cycle",
            files: vec![("x.conf", "include \"y.conf\""), ("y.conf", "include \"x.conf\"")],
            compose: vec!["x.conf"],
            overrides: None,
            expected: Err("IncludeCycle"),
        },
        Case {
            name: "override without assignment",
            files: vec![],
            compose: vec![],
            overrides: Some("target_tasks swag"),
            expected: Err("MalformedOverride"),
        },
    ]
}

const KEYS: &[&str] = &["a", "b", "c", "d"];

fn random_value(rng: &mut RunRng, depth: u32) -> ConfigValue {
    match rng.gen_range(0..if depth == 0 { 5 } else { 7 }) {
        0 => ConfigValue::Int(rng.gen_range(-3..4)),
        1 => ConfigValue::Float(rng.gen_range(-4..4) as f64 * 0.5),
        2 => ConfigValue::Bool(rng.gen_bool(0.5)),
        3 => ConfigValue::String(KEYS[rng.gen_range(0..KEYS.len())].to_string()),
        4 => ConfigValue::List((0..rng.gen_range(0..3)).map(|_| ConfigValue::Int(rng.gen_range(0..3))).collect()),
        _ => ConfigValue::Object(random_object(rng, depth - 1)),
    }
}

fn random_object(rng: &mut RunRng, depth: u32) -> ConfigObject {
    let mut obj = ConfigObject::new();
    for _ in 0..rng.gen_range(0..4) {
        obj.insert(KEYS[rng.gen_range(0..KEYS.len())].to_string(), random_value(rng, depth));
    }
    obj
}

/// A random tree over a small key alphabet, sometimes itself a merge so that
/// type-conflict replacements are exercised.
pub fn random_tree(rng: &mut RunRng) -> ConfigTree {
    let leaf = |rng: &mut RunRng| {
        let source = if rng.gen_bool(0.5) { Source::Override } else { Source::Inline };
        ConfigTree::from_object(random_object(rng, 3), source)
    };
    let tree = leaf(rng);
    if rng.gen_bool(0.3) {
        let other = leaf(rng);
        merge(&tree, &other)
    } else {
        tree
    }
}

/// Equality on values and provenance.
pub fn same(a: &ConfigTree, b: &ConfigTree) -> bool {
    a.root == b.root && a.provenance == b.provenance
}
