#![allow(dead_code)]

use std::path::{Path, PathBuf};

/// Three short documents in two manifest entries; the second entry is
/// deduplicated.
pub fn tiny_corpus(dir: &Path) -> PathBuf {
    std::fs::create_dir_all(dir.join("data")).unwrap();
    std::fs::write(
        dir.join("data/wiki.jsonl"),
        concat!(
            r#"{"id":"w1","source":"wiki","text":"Die Katze schläft auf dem Sofa. Der Hund bellt laut! Am 3. Mai regnet es."}"#,
            "\n",
            r#"{"id":"w2","source":"wiki","text":"Berlin ist die Hauptstadt. Dr. Müller wohnt dort seit 1990."}"#,
            "\n"
        ),
    )
    .unwrap();
    std::fs::write(
        dir.join("data/news.jsonl"),
        concat!(
            r#"{"id":"n1","source":"news","text":"Ein neuer Bericht über Hamburg und München erscheint heute."}"#,
            "\n",
            r#"{"id":"n2","source":"news","text":"Ein neuer  Bericht über Hamburg und München erscheint heute."}"#,
            "\n"
        ),
    )
    .unwrap();
    let manifest = dir.join("manifest.toml");
    std::fs::write(
        &manifest,
        r#"
[[entry]]
name = "Wiki"
source = "wiki"
paths = ["data/wiki.jsonl"]
dedup = false
expected_documents = 2

[[entry]]
name = "News"
source = "news"
paths = ["data/news.jsonl"]
dedup = true
"#,
    )
    .unwrap();
    manifest
}

pub fn pipeline_config(dir: &Path, out: &str, seed: u64) -> PathBuf {
    tiny_corpus(dir);
    let path = dir.join(format!("{out}.toml"));
    std::fs::write(
        &path,
        format!(
            "manifest = \"manifest.toml\"\nout_dir = \"{out}\"\nseed = {seed}\nvocab_size = 400\n"
        ),
    )
    .unwrap();
    path
}
