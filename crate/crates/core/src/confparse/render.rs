use std::fmt::Write;

use super::value::{ConfigObject, ConfigTree, ConfigValue};

/// Renders a tree as config text that parses back to an equal tree.
pub fn render(tree: &ConfigTree) -> String {
    let mut out = String::new();
    render_fields(&tree.root, 0, &mut out);
    out
}

fn render_fields(obj: &ConfigObject, indent: usize, out: &mut String) {
    for (key, value) in obj {
        out.push_str(&"  ".repeat(indent));
        out.push_str(&render_key(key));
        match value {
            ConfigValue::Object(inner) if !inner.is_empty() => {
                out.push_str(" {\n");
                render_fields(inner, indent + 1, out);
                out.push_str(&"  ".repeat(indent));
                out.push_str("}\n");
            }
            _ => {
                out.push_str(" = ");
                render_value(value, out);
                out.push('\n');
            }
        }
    }
}

fn render_value(value: &ConfigValue, out: &mut String) {
    match value {
        ConfigValue::String(s) => out.push_str(&quote(s)),
        ConfigValue::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ConfigValue::Float(v) => out.push_str(&render_float(*v)),
        ConfigValue::Bool(v) => {
            let _ = write!(out, "{v}");
        }
        ConfigValue::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_value(item, out);
            }
            out.push(']');
        }
        ConfigValue::Object(obj) => {
            out.push('{');
            for (i, (key, item)) in obj.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&render_key(key));
                out.push_str(" = ");
                render_value(item, out);
            }
            out.push('}');
        }
    }
}

/// Shortest round-tripping representation that still reads as a float.
pub(crate) fn render_float(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn render_key(key: &str) -> String {
    let bare = !key.is_empty() && key.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-');
    if bare && key != "include" {
        key.to_string()
    } else {
        quote(key)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
