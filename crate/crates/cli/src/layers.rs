//! Merging of workload file, config file and flags into one key-value doc.
//!
//! Later layers replace earlier ones key by key. Keys that select between
//! alternatives (`profile`/`segment`, `size_buckets`/`size_fixed`,
//! `workload`/`snapshot`) clear their siblings, so a flag always wins over a
//! conflicting entry in a file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use wrench_core::kv::KvDoc;

/// Keys naming input files, resolved against the directory of the file
/// that mentions them.
const PATH_KEYS: &[&str] = &["profile", "workload", "snapshot"];

const EXCLUSIVE: &[&[&str]] = &[&["profile", "segment"], &["size_buckets", "size_fixed"], &["workload", "snapshot"]];

#[derive(Debug, Default)]
pub struct Layers {
    doc: KvDoc,
}

impl Layers {
    pub fn add(&mut self, layer: &KvDoc) {
        let mut keys: Vec<&str> = layer.entries().iter().map(|e| e.key.as_str()).collect();
        keys.sort_unstable();
        keys.dedup();
        for key in &keys {
            self.doc.remove(key);
            for group in EXCLUSIVE.iter().filter(|g| g.contains(key)) {
                for sibling in *group {
                    self.doc.remove(sibling);
                }
            }
        }
        self.doc.extend(layer);
    }

    pub fn doc(&self) -> &KvDoc {
        &self.doc
    }
}

/// Reads a kv file and makes its relative input paths absolute.
pub fn read_file_layer(path: &Path) -> Result<KvDoc> {
    let doc = KvDoc::read(path).with_context(|| format!("in {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = KvDoc::default();
    for e in doc.entries() {
        let mut e = e.clone();
        if PATH_KEYS.contains(&e.key.as_str()) {
            e.value = resolve(base, &e.value).display().to_string();
        }
        out.push_entry(&e);
    }
    Ok(out)
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

/// Builds the merged doc: the workload file named by the config or flags,
/// then the config file, then flags.
pub fn merge(config: Option<&Path>, flags: &KvDoc) -> Result<KvDoc> {
    let config_doc = config.map(read_file_layer).transpose()?.unwrap_or_default();
    let mut chosen = Layers::default();
    chosen.add(&config_doc);
    chosen.add(flags);

    let mut layers = Layers::default();
    if let Some(e) = chosen.doc().get("workload") {
        let workload = read_file_layer(Path::new(&e.value))?;
        if let Some(bad) = workload.entries().iter().find(|e| e.key == "workload" || e.key == "snapshot") {
            anyhow::bail!("line {}: a workload file cannot name another `{}`", bad.line, bad.key);
        }
        layers.add(&workload);
    }
    layers.add(&config_doc);
    layers.add(flags);
    Ok(layers.doc().clone())
}
