//! A self-contained synthetic project: a generated source book, noisy
//! pseudo-translations with their gold alignments, and a config file.

use std::path::{Path, PathBuf};

use crate::model::AlignmentResult;
use crate::schema;
use crate::segmentation::{split_sentences, SegmenterConfig};
use crate::synthetic::{generate, synthetic_book, NoiseProfile, SynthError};

use super::input::{parse_plain, write_plain};

#[derive(Debug, thiserror::Error)]
pub enum ProjectError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Schema(#[from] schema::SchemaError),
}

#[derive(Debug, Clone)]
pub struct SyntheticTranslation {
    pub key: String,
    pub lang: String,
    pub label: String,
    pub profile: NoiseProfile,
}

#[derive(Debug, Clone)]
pub struct SyntheticProject {
    pub chapters: usize,
    pub sentences_per_chapter: usize,
    pub seed: u64,
    pub source_lang: String,
    pub translations: Vec<SyntheticTranslation>,
}

impl SyntheticProject {
    /// Two translations: one with structural edits and light character
    /// noise, one with omissions and insertions.
    pub fn standard(chapters: usize, sentences_per_chapter: usize, seed: u64) -> Self {
        let edited = NoiseProfile { merge_rate: 0.08, split_rate: 0.08, char_noise: 0.02, ..NoiseProfile::clean(seed) };
        let gappy = NoiseProfile { omit_rate: 0.06, insert_rate: 0.04, char_noise: 0.02, ..NoiseProfile::clean(seed + 1) };
        SyntheticProject {
            chapters,
            sentences_per_chapter,
            seed,
            source_lang: "it".into(),
            translations: vec![
                SyntheticTranslation { key: "en".into(), lang: "en".into(), label: "English (synthetic)".into(), profile: edited },
                SyntheticTranslation { key: "fr".into(), lang: "fr".into(), label: "French (synthetic)".into(), profile: gappy },
            ],
        }
    }

    /// Writes `source.txt`, one `<key>.txt` per translation (each with a
    /// `.meta.toml` sidecar), gold alignments under `gold/<key>/<chapter>.json`
    /// and `mde.toml`. Returns the config path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, ProjectError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| ProjectError::Io { path: path.clone(), source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let book = synthetic_book(self.chapters, self.sentences_per_chapter, self.seed);
        let write = |name: &str, text: &str| -> Result<(), ProjectError> {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(io(&p))
        };
        write("source.txt", &book)?;
        write("source.txt.meta.toml", &format!("doc_id = \"source\"\nlang = \"{}\"\nlabel = \"Source\"\n", self.source_lang))?;

        let chapters = parse_plain(&book, "source.txt").expect("generated books are well formed");
        let cfg = SegmenterConfig::for_language(&self.source_lang);
        let mut config = String::from("title = \"Synthetic edition\"\noutput = \"out\"\n\n[source]\npath = \"source.txt\"\n");
        for tr in &self.translations {
            let mut target_chapters = Vec::new();
            for (c, (key, body)) in chapters.iter().enumerate() {
                let source = split_sentences(body, "source", &cfg);
                let synthetic = generate(&source, &tr.profile.with_seed(tr.profile.seed.wrapping_add(c as u64 * 1000)), &tr.key)?;
                let gold: AlignmentResult = synthetic.gold;
                schema::write_file(&dir.join("gold").join(&tr.key).join(format!("{key}.json")), "alignment", &gold)?;
                let lines: Vec<String> = synthetic
                    .target
                    .chunks(4)
                    .map(|chunk| chunk.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" "))
                    .collect();
                target_chapters.push((key.clone(), lines.join("\n")));
            }
            write(&format!("{}.txt", tr.key), &write_plain(&target_chapters))?;
            write(
                &format!("{}.txt.meta.toml", tr.key),
                &format!("doc_id = \"{}\"\nlang = \"{}\"\nlabel = \"{}\"\n", tr.key, tr.lang, tr.label),
            )?;
            config.push_str(&format!("\n[[translations]]\npath = \"{}.txt\"\n", tr.key));
        }
        config.push_str("\n[segmentation]\ngranularities = [\"sentence\", \"phrase\"]\nstrategy = \"punctuation\"\n");
        config.push_str("\n[alignment]\nS = 3\nT = 3\nlambda = 0.15\nsigma = 0.1\n");
        config.push_str("\n[analysis.projection]\nseed = 7\n");
        let path = dir.join("mde.toml");
        std::fs::write(&path, config).map_err(io(&path))?;
        Ok(path)
    }
}
