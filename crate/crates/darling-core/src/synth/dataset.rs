//! Dataset persistence: `manifest.jsonl` (a header line plus one record per
//! pair) alongside 8-bit RGB PNGs, with SHA-256 integrity checks.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PairSample, StyleSpec};
use crate::error::{Error, Result};
use crate::image::{Image, HEIGHT, WIDTH};
use crate::par;

pub const MANIFEST_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestHeader {
    version: String,
    count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: u64,
    pub image_a_path: String,
    pub image_b_path: String,
    pub background_path: String,
    pub text_a: String,
    pub text_b: String,
    pub style: StyleSpec,
    pub seed: u64,
    pub sha256_a: String,
    pub sha256_b: String,
    pub sha256_background: String,
}

#[derive(Debug)]
pub struct DatasetManifest {
    pub version: String,
    pub records: Vec<PairRecord>,
    /// Directory the record paths are relative to.
    pub root: PathBuf,
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::integrity(format!("missing dataset file {}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write pairs as PNGs plus a manifest. `pair_id` is the index within
/// `pairs`. Returns the manifest that was written.
pub fn write_dataset(pairs: &[PairSample], out_dir: &Path) -> Result<DatasetManifest> {
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir)?;

    // Writers never share a file: each pair owns three distinct paths.
    let records: Vec<Result<PairRecord>> = par::map_range(pairs.len(), |i| {
        let pair = &pairs[i];
        let id = i as u64;
        let rel_a = format!("images/{id:06}_a.png");
        let rel_b = format!("images/{id:06}_b.png");
        let rel_bg = format!("images/{id:06}_bg.png");
        pair.image_a.save_png(&out_dir.join(&rel_a))?;
        pair.image_b.save_png(&out_dir.join(&rel_b))?;
        pair.background.save_png(&out_dir.join(&rel_bg))?;
        Ok(PairRecord {
            pair_id: id,
            sha256_a: file_sha256(&out_dir.join(&rel_a))?,
            sha256_b: file_sha256(&out_dir.join(&rel_b))?,
            sha256_background: file_sha256(&out_dir.join(&rel_bg))?,
            image_a_path: rel_a,
            image_b_path: rel_b,
            background_path: rel_bg,
            text_a: pair.text_a.clone(),
            text_b: pair.text_b.clone(),
            style: pair.style.clone(),
            seed: pair.seed,
        })
    });
    let records: Vec<PairRecord> = records.into_iter().collect::<Result<_>>()?;

    let manifest_path = out_dir.join("manifest.jsonl");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&manifest_path)?);
    let header = ManifestHeader {
        version: MANIFEST_VERSION.to_string(),
        count: records.len(),
    };
    writeln!(file, "{}", serde_json::to_string(&header)?)?;
    for rec in &records {
        writeln!(file, "{}", serde_json::to_string(rec)?)?;
    }
    file.flush()?;

    Ok(DatasetManifest {
        version: MANIFEST_VERSION.to_string(),
        records,
        root: out_dir.to_path_buf(),
    })
}

/// Parse and validate a manifest file (header, version, record count,
/// pair-id uniqueness). File contents are verified lazily by `read_pair`.
pub fn read_manifest(manifest_path: &Path) -> Result<DatasetManifest> {
    let file = std::fs::File::open(manifest_path).map_err(|e| {
        Error::integrity(format!("cannot open manifest {}: {e}", manifest_path.display()))
    })?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::integrity("manifest is empty"))??;
    let header: ManifestHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::integrity(format!("bad manifest header: {e}")))?;
    if header.version != MANIFEST_VERSION {
        return Err(Error::UnsupportedVersion {
            context: "dataset manifest",
            found: header.version,
            supported: MANIFEST_VERSION,
        });
    }
    let mut records = Vec::with_capacity(header.count);
    let mut seen = std::collections::HashSet::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line)
            .map_err(|e| Error::integrity(format!("bad manifest record: {e}")))?;
        if !seen.insert(rec.pair_id) {
            return Err(Error::integrity(format!("duplicate pair_id {}", rec.pair_id)));
        }
        records.push(rec);
    }
    if records.len() != header.count {
        return Err(Error::integrity(format!(
            "manifest declares {} records but contains {}",
            header.count,
            records.len()
        )));
    }
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(DatasetManifest {
        version: header.version,
        records,
        root,
    })
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Load one pair, verifying checksums and shapes.
    pub fn read_pair(&self, index: usize) -> Result<PairSample> {
        let rec = self
            .records
            .get(index)
            .ok_or_else(|| Error::validation(format!("pair index {index} out of range")))?;
        let load = |rel: &str, sha: &str| -> Result<Image> {
            let path = self.root.join(rel);
            let actual = file_sha256(&path)?;
            if actual != sha {
                return Err(Error::integrity(format!(
                    "checksum mismatch for {} (expected {sha}, got {actual})",
                    path.display()
                )));
            }
            let img = Image::load_png(&path)?;
            if img.height() != HEIGHT || img.width() != WIDTH {
                return Err(Error::integrity(format!(
                    "{} is {}x{}, expected {WIDTH}x{HEIGHT}",
                    path.display(),
                    img.width(),
                    img.height()
                )));
            }
            Ok(img)
        };
        Ok(PairSample {
            image_a: load(&rec.image_a_path, &rec.sha256_a)?,
            image_b: load(&rec.image_b_path, &rec.sha256_b)?,
            background: load(&rec.background_path, &rec.sha256_background)?,
            text_a: rec.text_a.clone(),
            text_b: rec.text_b.clone(),
            style: rec.style.clone(),
            seed: rec.seed,
        })
    }

    /// Iterate over all pairs, verifying as they load.
    pub fn iter_pairs(&self) -> impl Iterator<Item = Result<PairSample>> + '_ {
        (0..self.records.len()).map(|i| self.read_pair(i))
    }

    /// Load every pair (parallel, order-stable).
    pub fn read_all(&self) -> Result<Vec<PairSample>> {
        par::map_range(self.records.len(), |i| self.read_pair(i))
            .into_iter()
            .collect()
    }
}

/// Read a dataset from its manifest path and load every pair.
pub fn read_dataset(manifest_path: &Path) -> Result<Vec<PairSample>> {
    read_manifest(manifest_path)?.read_all()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_pairs, lexicon::builtin_lexicon, AssetCatalog};

    fn small_catalog() -> AssetCatalog {
        let mut c = AssetCatalog::builtin();
        c.backgrounds.truncate(6);
        c
    }

    #[test]
    fn roundtrip_preserves_pixels_and_texts() {
        let cat = small_catalog();
        let lex = builtin_lexicon();
        let pairs = generate_pairs(42, 10, &lex, &cat).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&pairs, dir.path()).unwrap();
        let loaded = read_dataset(&dir.path().join("manifest.jsonl")).unwrap();
        assert_eq!(loaded.len(), 10);
        for (orig, back) in pairs.iter().zip(&loaded) {
            assert_eq!(orig.image_a, back.image_a);
            assert_eq!(orig.image_b, back.image_b);
            assert_eq!(orig.background, back.background);
            assert_eq!(orig.text_a, back.text_a);
            assert_eq!(orig.text_b, back.text_b);
            assert_eq!(orig.style, back.style);
        }
    }

    #[test]
    fn missing_file_is_named_in_error() {
        let cat = small_catalog();
        let lex = builtin_lexicon();
        let pairs = generate_pairs(1, 3, &lex, &cat).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(&pairs, dir.path()).unwrap();
        let victim = dir.path().join(&manifest.records[1].image_b_path);
        std::fs::remove_file(&victim).unwrap();
        let err = manifest.read_pair(1).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        assert!(err.to_string().contains("000001_b.png"), "{err}");
    }

    #[test]
    fn corrupted_image_fails_checksum() {
        let cat = small_catalog();
        let lex = builtin_lexicon();
        let pairs = generate_pairs(2, 2, &lex, &cat).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(&pairs, dir.path()).unwrap();
        let victim = dir.path().join(&manifest.records[0].image_a_path);
        let mut bytes = std::fs::read(&victim).unwrap();
        let n = bytes.len();
        bytes[n - 20] ^= 0xff;
        std::fs::write(&victim, bytes).unwrap();
        let err = manifest.read_pair(0).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn unsupported_version_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        std::fs::write(&path, "{\"version\":\"999\",\"count\":0}\n").unwrap();
        let err = read_manifest(&path).unwrap_err();
        assert!(matches!(err, Error::UnsupportedVersion { .. }));
        assert!(err.to_string().contains("999"));
    }

    #[test]
    fn dataset_bytes_are_reproducible_from_master_seed() {
        let cat = small_catalog();
        let lex = builtin_lexicon();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_dataset(&generate_pairs(77, 6, &lex, &cat).unwrap(), dir_a.path()).unwrap();
        write_dataset(&generate_pairs(77, 6, &lex, &cat).unwrap(), dir_b.path()).unwrap();

        let digest_tree = |root: &Path| -> Vec<(String, String)> {
            let mut out = Vec::new();
            let mut stack = vec![root.to_path_buf()];
            while let Some(dir) = stack.pop() {
                let mut entries: Vec<_> = std::fs::read_dir(&dir)
                    .unwrap()
                    .map(|e| e.unwrap().path())
                    .collect();
                entries.sort();
                for p in entries {
                    if p.is_dir() {
                        stack.push(p);
                    } else {
                        let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                        out.push((rel, file_sha256(&p).unwrap()));
                    }
                }
            }
            out.sort();
            out
        };
        assert_eq!(digest_tree(dir_a.path()), digest_tree(dir_b.path()));
    }
}
