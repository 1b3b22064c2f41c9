use std::collections::{BTreeMap, BTreeSet};

use super::value::{leaf_paths_of_object, ConfigObject, ConfigTree, ConfigValue, KeyPath};

/// Deep merge: objects merge recursively, anything else in `overlay` replaces
/// what is in `base`. Neither input is modified.
///
/// An object that lands on a non-object becomes a reset point: merging the
/// result over a further base replaces that base's value at the same path
/// instead of merging into it.
pub fn merge(base: &ConfigTree, overlay: &ConfigTree) -> ConfigTree {
    let mut root = base.root.clone();
    let mut resets = base.resets.clone();
    merge_into(&mut root, &mut resets, &overlay.root, &overlay.resets, &mut Vec::new());

    let mut provenance = BTreeMap::new();
    for path in leaf_paths_of_object(&root, &[]) {
        let source = overlay.provenance.get(&path).or_else(|| base.provenance.get(&path));
        if let Some(source) = source {
            provenance.insert(path, source.clone());
        }
    }
    ConfigTree { root, provenance, resets }
}

fn merge_into(
    target: &mut ConfigObject,
    target_resets: &mut BTreeSet<KeyPath>,
    overlay: &ConfigObject,
    overlay_resets: &BTreeSet<KeyPath>,
    path: &mut KeyPath,
) {
    for (key, value) in overlay {
        path.push(key.clone());
        match value {
            ConfigValue::Object(incoming) => {
                let replaces = overlay_resets.contains(path.as_slice());
                match target.get_mut(key) {
                    Some(ConfigValue::Object(existing)) if !replaces => {
                        merge_into(existing, target_resets, incoming, overlay_resets, path);
                    }
                    existing => {
                        let had_scalar = matches!(existing, Some(v) if !matches!(v, ConfigValue::Object(_)));
                        drop_subtree(target_resets, path);
                        copy_subtree(target_resets, overlay_resets, path);
                        if had_scalar {
                            target_resets.insert(path.clone());
                        }
                        target.insert(key.clone(), value.clone());
                    }
                }
            }
            _ => {
                drop_subtree(target_resets, path);
                target.insert(key.clone(), value.clone());
            }
        }
        path.pop();
    }
}

fn drop_subtree(resets: &mut BTreeSet<KeyPath>, prefix: &[String]) {
    resets.retain(|p| !p.starts_with(prefix));
}

fn copy_subtree(into: &mut BTreeSet<KeyPath>, from: &BTreeSet<KeyPath>, prefix: &[String]) {
    into.extend(from.iter().filter(|p| p.starts_with(prefix)).cloned());
}
