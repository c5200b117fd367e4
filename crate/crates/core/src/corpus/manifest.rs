use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::Container;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `file#entry`: a named entry of a tensor container.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EntryRef {
    pub file: PathBuf,
    pub entry: String,
}

impl FromStr for EntryRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.rsplit_once('#') {
            Some((file, entry)) if !file.is_empty() && !entry.is_empty() => Ok(EntryRef {
                file: file.into(),
                entry: entry.into(),
            }),
            _ => Err(Error::Config(format!("expected file#entry, got {s:?}"))),
        }
    }
}

impl fmt::Display for EntryRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.file.display(), self.entry)
    }
}

/// Where an utterance's acoustic input comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Audio(PathBuf),
    Features(EntryRef),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Audio(p) => write!(f, "{}", p.display()),
            Source::Features(r) => r.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub utt_id: String,
    pub source: Source,
    pub transcript: Vec<String>,
    pub image_id: String,
    pub image_ref: EntryRef,
    pub split: Split,
}

/// Relative paths in a manifest are resolved against its directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parse_line(line: &str) -> std::result::Result<ManifestRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 6 {
        return Err(format!("expected 6 tab-separated fields, found {}", fields.len()));
    }
    let nonempty = |i: usize, what: &str| {
        if fields[i].is_empty() {
            Err(format!("empty {what}"))
        } else {
            Ok(fields[i].to_string())
        }
    };
    let source = if fields[1].contains('#') {
        Source::Features(fields[1].parse().map_err(|e: Error| e.to_string())?)
    } else {
        Source::Audio(nonempty(1, "source")?.into())
    };
    Ok(ManifestRecord {
        utt_id: nonempty(0, "utt_id")?,
        source,
        transcript: fields[2].split_whitespace().map(String::from).collect(),
        image_id: nonempty(3, "image_id")?,
        image_ref: fields[4].parse().map_err(|e: Error| e.to_string())?,
        split: fields[5].parse().map_err(|e: Error| e.to_string())?,
    })
}

/// Parses manifest text; `path` is used for diagnostics only.
pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg,
        };
        let rec = parse_line(line).map_err(err)?;
        if !seen.insert(rec.utt_id.clone()) {
            return Err(err(format!("duplicate utt_id {:?}", rec.utt_id)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Reads a manifest and checks that every referenced file and container
/// entry exists.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::MissingResource(format!("{}: {e}", path.display())))?;
    let records = parse_manifest(&text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut containers = ContainerCache::default();
    for r in &records {
        match &r.source {
            Source::Audio(p) => {
                let full = resolve(base, p);
                if !full.is_file() {
                    return Err(Error::MissingResource(format!("audio {} for {}", full.display(), r.utt_id)));
                }
            }
            Source::Features(e) => {
                containers.get(base, e)?;
            }
        }
        containers.get(base, &r.image_ref)?;
    }
    Ok(records)
}

pub fn format_manifest(records: &[ManifestRecord]) -> String {
    let mut s = String::from("# utt_id\tsource\ttranscript\timage_id\timage_vec_ref\tsplit\n");
    for r in records {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.utt_id,
            r.source,
            r.transcript.join(" "),
            r.image_id,
            r.image_ref,
            r.split
        ));
    }
    s
}

pub fn save_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    std::fs::write(path, format_manifest(records))?;
    Ok(())
}

/// Containers opened while resolving references, keyed by resolved path.
#[derive(Default)]
pub struct ContainerCache {
    open: HashMap<PathBuf, Container>,
}

impl ContainerCache {
    pub fn container(&mut self, file: &Path) -> Result<&Container> {
        if !self.open.contains_key(file) {
            let c = Container::load(file)
                .map_err(|e| Error::MissingResource(format!("{}: {e}", file.display())))?;
            self.open.insert(file.to_path_buf(), c);
        }
        Ok(&self.open[file])
    }

    pub fn get(&mut self, base: &Path, r: &EntryRef) -> Result<&crate::numcore::Tensor<f32>> {
        let c = self.container(&resolve(base, &r.file))?;
        c.get(&r.entry)
            .ok_or_else(|| Error::MissingResource(format!("entry {r}")))
    }
}
