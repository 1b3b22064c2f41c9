use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, CorpusError, RawExample, Split, Target, TaskDescriptor, TaskType};

/// Reads one split in file order. Test splits may omit targets.
pub fn load_examples(desc: &TaskDescriptor, split: Split) -> Result<Vec<RawExample>, CorpusError> {
    let path = desc.data_paths.get(split);
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    match desc.task_type {
        TaskType::Tagging => load_conll(desc, split, path, &text),
        TaskType::MultipleChoice => load_jsonl(desc, split, path, &text),
        _ => load_tsv(desc, split, path, &text),
    }
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRow { path: path.to_path_buf(), line, message: message.into() }
}

fn load_tsv(desc: &TaskDescriptor, split: Split, path: &Path, text: &str) -> Result<Vec<RawExample>, CorpusError> {
    let text_cols = if desc.task_type == TaskType::PairClassification { 2 } else { 1 };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let has_target = match cols.len() {
            n if n == text_cols + 1 => true,
            n if n == text_cols && split == Split::Test => false,
            n => return Err(malformed(path, line_no, format!("expected {} columns, found {n}", text_cols + 1))),
        };
        let target = if has_target {
            let raw = cols[text_cols].trim();
            Some(if desc.task_type == TaskType::Regression {
                let v: f64 = raw.parse().map_err(|_| malformed(path, line_no, format!("target {raw:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(malformed(path, line_no, format!("target {raw:?} is not finite")));
                }
                Target::Value(v)
            } else {
                if desc.label_index(raw).is_none() {
                    return Err(malformed(path, line_no, format!("unknown label {raw:?}")));
                }
                Target::Label(raw.to_string())
            })
        } else {
            None
        };
        out.push(RawExample {
            guid: format!("{split}-{}", out.len()),
            text_a: cols[0].to_string(),
            text_b: (text_cols == 2).then(|| cols[1].to_string()),
            choices: None,
            target,
        });
    }
    Ok(out)
}

fn load_conll(desc: &TaskDescriptor, split: Split, path: &Path, text: &str) -> Result<Vec<RawExample>, CorpusError> {
    let mut out = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<String> = Vec::new();
    let mut start = 0;

    let flush = |tokens: &mut Vec<String>, tags: &mut Vec<String>, start: usize, out: &mut Vec<RawExample>| {
        if tokens.is_empty() {
            return Ok(());
        }
        let target = if tags.is_empty() && split == Split::Test {
            None
        } else if tags.len() != tokens.len() {
            return Err(CorpusError::TagMismatch { path: path.to_path_buf(), line: start, tokens: tokens.len(), tags: tags.len() });
        } else {
            Some(Target::Tags(std::mem::take(tags)))
        };
        out.push(RawExample {
            guid: format!("{split}-{}", out.len()),
            text_a: tokens.join(" "),
            text_b: None,
            choices: None,
            target,
        });
        tokens.clear();
        tags.clear();
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, start, &mut out)?;
            continue;
        }
        if tokens.is_empty() {
            start = line_no;
        }
        let mut cols = line.split('\t');
        let token = cols.next().unwrap_or_default().trim();
        if token.is_empty() || token.contains(char::is_whitespace) {
            return Err(malformed(path, line_no, format!("bad token {token:?}")));
        }
        tokens.push(token.to_string());
        if let Some(tag) = cols.next() {
            let tag = tag.trim();
            if desc.label_index(tag).is_none() {
                return Err(malformed(path, line_no, format!("unknown tag {tag:?}")));
            }
            tags.push(tag.to_string());
        }
        if cols.next().is_some() {
            return Err(malformed(path, line_no, "expected token<TAB>tag"));
        }
    }
    flush(&mut tokens, &mut tags, start, &mut out)?;
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ChoiceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    guid: Option<String>,
    context: String,
    choices: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_idx: Option<usize>,
}

fn load_jsonl(desc: &TaskDescriptor, split: Split, path: &Path, text: &str) -> Result<Vec<RawExample>, CorpusError> {
    let num_choices = desc.num_choices.unwrap_or(0);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ChoiceRecord = serde_json::from_str(line).map_err(|e| malformed(path, line_no, e.to_string()))?;
        if rec.choices.len() != num_choices {
            return Err(malformed(path, line_no, format!("expected {num_choices} choices, found {}", rec.choices.len())));
        }
        let target = match rec.answer_idx {
            Some(a) if a >= num_choices => return Err(malformed(path, line_no, format!("answer_idx {a} out of range"))),
            Some(a) => Some(Target::Choice(a)),
            None if split == Split::Test => None,
            None => return Err(malformed(path, line_no, "missing answer_idx")),
        };
        out.push(RawExample {
            guid: rec.guid.unwrap_or_else(|| format!("{split}-{}", out.len())),
            text_a: rec.context,
            text_b: None,
            choices: Some(rec.choices),
            target,
        });
    }
    Ok(out)
}

/// Serializes examples in the task's on-disk format. The inverse of
/// [`load_examples`] on example content.
pub fn write_examples(desc: &TaskDescriptor, examples: &[RawExample]) -> Result<String, CorpusError> {
    let bad = |message: String| CorpusError::InvalidDescriptor { task: desc.name.clone(), message };
    let mut out = String::new();
    for ex in examples {
        match desc.task_type {
            TaskType::Tagging => {
                let tags = match &ex.target {
                    Some(Target::Tags(t)) => Some(t),
                    None => None,
                    _ => return Err(bad("tagging example without tags".into())),
                };
                for (i, tok) in ex.text_a.split_whitespace().enumerate() {
                    match tags {
                        Some(t) => writeln!(out, "{tok}\t{}", t[i]).unwrap(),
                        None => writeln!(out, "{tok}").unwrap(),
                    }
                }
                out.push('\n');
            }
            TaskType::MultipleChoice => {
                let rec = ChoiceRecord {
                    guid: Some(ex.guid.clone()),
                    context: ex.text_a.clone(),
                    choices: ex.choices.clone().unwrap_or_default(),
                    answer_idx: match ex.target {
                        Some(Target::Choice(a)) => Some(a),
                        _ => None,
                    },
                };
                out.push_str(&serde_json::to_string(&rec).expect("serializable record"));
                out.push('\n');
            }
            _ => {
                out.push_str(&ex.text_a);
                if let Some(b) = &ex.text_b {
                    out.push('\t');
                    out.push_str(b);
                }
                match &ex.target {
                    Some(Target::Label(l)) => write!(out, "\t{l}").unwrap(),
                    Some(Target::Value(v)) => write!(out, "\t{v}").unwrap(),
                    None => {}
                    Some(_) => return Err(bad("target kind does not match task type".into())),
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DataPaths;
    use std::path::PathBuf;

    fn task(dir: &Path, task_type: TaskType) -> TaskDescriptor {
        let d = TaskDescriptor::new("t", task_type, DataPaths::in_dir(dir, task_type));
        match task_type {
            TaskType::Tagging => d.with_labels(["D", "N", "V"]),
            TaskType::MultipleChoice => d.with_num_choices(2),
            TaskType::Regression => d,
            _ => d.with_labels(["neg", "pos"]),
        }
    }

    fn write(path: &PathBuf, text: &str) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, text).unwrap();
    }

    #[test]
    fn two_column_tsv_row() {
        let dir = tempfile::tempdir().unwrap();
        let d = task(dir.path(), TaskType::SingleClassification);
        write(&d.data_paths.train, "great movie\tpos\n");
        let ex = load_examples(&d, Split::Train).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].text_a, "great movie");
        assert_eq!(ex[0].target, Some(Target::Label("pos".into())));
    }

    #[test]
    fn conll_block_of_three_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let d = task(dir.path(), TaskType::Tagging);
        write(&d.data_paths.train, "the\tD\ncat\tN\nsat\tV\n\n");
        let ex = load_examples(&d, Split::Train).unwrap();
        assert_eq!(ex[0].target, Some(Target::Tags(vec!["D".into(), "N".into(), "V".into()])));
    }

    #[test]
    fn two_tags_for_three_tokens_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let d = task(dir.path(), TaskType::Tagging);
        write(&d.data_paths.train, "a\tD\nb\tN\n\nthe\tD\ncat\tN\nsat\n");
        match load_examples(&d, Split::Train) {
            Err(CorpusError::TagMismatch { line, tokens, tags, .. }) => assert_eq!((line, tokens, tags), (4, 3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let d = task(dir.path(), TaskType::SingleClassification);
        write(&d.data_paths.train, "ok\tpos\nno label here\n");
        assert!(matches!(load_examples(&d, Split::Train), Err(CorpusError::MalformedRow { line: 2, .. })));

        let r = task(dir.path(), TaskType::Regression);
        std::fs::remove_file(&d.data_paths.train).unwrap();
        write(&r.data_paths.train, "x\t0.5\ny\tNaN\n");
        assert!(matches!(load_examples(&r, Split::Train), Err(CorpusError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn test_split_may_lack_targets() {
        let dir = tempfile::tempdir().unwrap();
        let d = task(dir.path(), TaskType::PairClassification);
        write(&d.data_paths.test, "a b\tc d\n");
        let ex = load_examples(&d, Split::Test).unwrap();
        assert_eq!(ex[0].text_b.as_deref(), Some("c d"));
        assert_eq!(ex[0].target, None);
        write(&d.data_paths.train, "a b\tc d\n");
        assert!(load_examples(&d, Split::Train).is_err());
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let d = task(dir.path(), TaskType::MultipleChoice);
        assert!(matches!(load_examples(&d, Split::Val), Err(CorpusError::MissingFile(_))));
    }

    #[test]
    fn jsonl_choices_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = task(dir.path(), TaskType::MultipleChoice);
        write(&d.data_paths.val, "{\"guid\":\"q1\",\"context\":\"pick\",\"choices\":[\"x\",\"y\"],\"answer_idx\":1}\n");
        let ex = load_examples(&d, Split::Val).unwrap();
        assert_eq!(ex[0].target, Some(Target::Choice(1)));
        assert_eq!(write_examples(&d, &ex).unwrap(), std::fs::read_to_string(&d.data_paths.val).unwrap());
        write(&d.data_paths.val, "{\"context\":\"pick\",\"choices\":[\"x\",\"y\"],\"answer_idx\":2}\n");
        assert!(matches!(load_examples(&d, Split::Val), Err(CorpusError::MalformedRow { line: 1, .. })));
    }
}
