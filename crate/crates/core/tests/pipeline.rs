use phasekit::corpus::{generate_synthetic_suite, load_examples, write_examples, Split, SynthParams, TaskDescriptor};
use phasekit::pipeline::{build_vocab, build_vocab_for_tasks, preprocess, tokenize, CacheStatus, PreprocessOptions, SPECIAL_TOKENS};
use proptest::prelude::*;

fn small_suite(dir: &std::path::Path) -> phasekit::corpus::SynthSuite {
    let params = SynthParams { intermediate_train: 40, target_train: 10, eval_size: 12, aux_train: 20, aux_eval: 8, ..SynthParams::default() };
    generate_synthetic_suite(3, &params, dir).unwrap()
}

proptest! {
    #[test]
    fn tokenizing_joined_tokens_is_identity(text in "\\PC{0,60}") {
        let tokens = tokenize(&text);
        prop_assert_eq!(tokenize(&tokens.join(" ")), tokens);
    }

    #[test]
    fn vocab_ignores_sequence_order(words in prop::collection::vec("[a-e]{1,2}", 1..60), seed in any::<u64>()) {
        let seqs: Vec<Vec<String>> = words.chunks(3).map(|c| c.to_vec()).collect();
        let mut shuffled = seqs.clone();
        let n = shuffled.len();
        shuffled.rotate_left((seed as usize) % n);
        let a = build_vocab(seqs, 20).unwrap();
        let b = build_vocab(shuffled, 20).unwrap();
        prop_assert_eq!(a.tokens(), b.tokens());
        prop_assert_eq!(&a.tokens()[..SPECIAL_TOKENS.len()], SPECIAL_TOKENS);
    }
}

#[test]
fn load_of_write_is_identity_for_every_task_type() {
    let dir = tempfile::tempdir().unwrap();
    let suite = small_suite(dir.path());
    for desc in &suite.descriptors {
        for split in [Split::Train, Split::Val, Split::Test] {
            let original = load_examples(desc, split).unwrap();
            let text = write_examples(desc, &original).unwrap();
            let copy_dir = dir.path().join("copy").join(&desc.name);
            std::fs::create_dir_all(&copy_dir).unwrap();
            let path = copy_dir.join(format!("{split}.txt"));
            std::fs::write(&path, &text).unwrap();
            let mut copy: TaskDescriptor = desc.clone();
            match split {
                Split::Train => copy.data_paths.train = path,
                Split::Val => copy.data_paths.val = path,
                Split::Test => copy.data_paths.test = path,
            }
            assert_eq!(load_examples(&copy, split).unwrap(), original, "{} {split}", desc.name);
        }
    }
}

#[test]
fn vocab_is_deterministic_and_built_from_train_only() {
    let dir = tempfile::tempdir().unwrap();
    let suite = small_suite(dir.path());
    let a = build_vocab_for_tasks(suite.descriptors.iter(), 1000).unwrap();
    let b = build_vocab_for_tasks(suite.descriptors.iter(), 1000).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(a.hash(), b.hash());
    let capped = build_vocab_for_tasks(suite.descriptors.iter(), 10).unwrap();
    assert_eq!(capped.len(), 10 + SPECIAL_TOKENS.len());
    assert_eq!(capped.tokens(), &a.tokens()[..capped.len()]);
}

#[test]
fn cache_hits_equal_cold_results_and_invalidate_on_length() {
    let dir = tempfile::tempdir().unwrap();
    let suite = small_suite(&dir.path().join("data"));
    let vocab = build_vocab_for_tasks(suite.descriptors.iter(), 1000).unwrap();
    let opts = PreprocessOptions::new(16, Some(dir.path().join("cache")));
    for desc in &suite.descriptors {
        let (cold, s1) = preprocess(desc, Split::Val, &vocab, &opts).unwrap();
        let (warm, s2) = preprocess(desc, Split::Val, &vocab, &opts).unwrap();
        assert_eq!((s1, s2), (CacheStatus::Miss, CacheStatus::Hit));
        assert_eq!(cold, warm);
        let longer = PreprocessOptions::new(17, Some(dir.path().join("cache")));
        assert_eq!(preprocess(desc, Split::Val, &vocab, &longer).unwrap().1, CacheStatus::Miss);
    }
}
