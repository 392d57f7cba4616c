//! Bitmap fonts for the procedural renderer.
//!
//! Three built-in typefaces are derived from the public-domain 8x8 glyph set
//! (regular, a dilated bold, and a sheared italic). User fonts can be loaded
//! from a directory of JSON glyph sheets.

use std::collections::HashMap;
use std::path::Path;

use font8x8::legacy::BASIC_LEGACY;
use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BitmapFont {
    pub name: String,
    pub glyph_h: usize,
    pub glyph_w: usize,
    glyphs: HashMap<char, Vec<bool>>,
}

impl BitmapFont {
    pub fn new(
        name: impl Into<String>,
        glyph_h: usize,
        glyph_w: usize,
        glyphs: HashMap<char, Vec<bool>>,
    ) -> Result<Self> {
        if glyph_h == 0 || glyph_w == 0 {
            return Err(Error::config("glyph cell must be non-empty"));
        }
        let name = name.into();
        for (c, cell) in &glyphs {
            if cell.len() != glyph_h * glyph_w {
                return Err(Error::config(format!(
                    "font {name}: glyph {c:?} has {} cells, expected {}",
                    cell.len(),
                    glyph_h * glyph_w
                )));
            }
        }
        Ok(BitmapFont {
            name,
            glyph_h,
            glyph_w,
            glyphs,
        })
    }

    /// Row-major `glyph_h * glyph_w` coverage for `c`, if present.
    pub fn glyph(&self, c: char) -> Option<&[bool]> {
        self.glyphs.get(&c).map(|v| v.as_slice())
    }

    pub fn has_glyph(&self, c: char) -> bool {
        self.glyphs.contains_key(&c)
    }

    fn from_rows(name: &str, glyph_h: usize, glyph_w: usize, rows: HashMap<char, Vec<bool>>) -> Self {
        BitmapFont {
            name: name.to_string(),
            glyph_h,
            glyph_w,
            glyphs: rows,
        }
    }
}

fn base_glyph(c: char) -> [u8; 8] {
    BASIC_LEGACY[c as usize]
}

fn unpack(rows: [u8; 8]) -> Vec<bool> {
    let mut out = Vec::with_capacity(64);
    for row in rows {
        for bit in 0..8 {
            out.push(row >> bit & 1 == 1);
        }
    }
    out
}

/// The regular, bold, and italic built-in faces covering the full 94
/// printable-character inventory.
pub fn builtin_fonts() -> Vec<BitmapFont> {
    let chars: Vec<char> = (0x21u8..=0x7e).map(|b| b as char).collect();

    let mut regular = HashMap::new();
    let mut bold = HashMap::new();
    for &c in &chars {
        let rows = base_glyph(c);
        regular.insert(c, unpack(rows));
        let mut b = rows;
        for r in b.iter_mut() {
            *r |= *r << 1;
        }
        bold.insert(c, unpack(b));
    }

    // Italic: shear rows right by up to 2 pixels, widening the cell to 10.
    let mut italic = HashMap::new();
    for &c in &chars {
        let rows = base_glyph(c);
        let mut cell = vec![false; 8 * 10];
        for (y, row) in rows.iter().enumerate() {
            let shift = (7 - y) / 3; // 2, 1, or 0
            for x in 0..8 {
                if row >> x & 1 == 1 {
                    cell[y * 10 + x + shift] = true;
                }
            }
        }
        italic.insert(c, cell);
    }

    vec![
        BitmapFont::from_rows("mono8", 8, 8, regular),
        BitmapFont::from_rows("mono8-bold", 8, 8, bold),
        BitmapFont::from_rows("mono8-italic", 8, 10, italic),
    ]
}

#[derive(Deserialize)]
struct FontFile {
    name: String,
    glyph_h: usize,
    glyph_w: usize,
    /// Each glyph is `glyph_h` strings of `glyph_w` characters, `#` = ink.
    glyphs: HashMap<String, Vec<String>>,
}

/// Load a single JSON glyph sheet.
pub fn load_font_file(path: &Path) -> Result<BitmapFont> {
    let text = std::fs::read_to_string(path)?;
    let file: FontFile = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("bad font file {}: {e}", path.display())))?;
    if file.glyph_h == 0 || file.glyph_w == 0 || file.glyph_w > 64 {
        return Err(Error::config(format!(
            "font {}: glyph cell {}x{} out of range",
            file.name, file.glyph_h, file.glyph_w
        )));
    }
    let mut glyphs = HashMap::new();
    for (key, rows) in &file.glyphs {
        let mut it = key.chars();
        let (c, extra) = (it.next(), it.next());
        let c = match (c, extra) {
            (Some(c), None) => c,
            _ => {
                return Err(Error::config(format!(
                    "font {}: glyph key {key:?} must be a single character",
                    file.name
                )))
            }
        };
        if rows.len() != file.glyph_h || rows.iter().any(|r| r.chars().count() != file.glyph_w) {
            return Err(Error::config(format!(
                "font {}: glyph {c:?} must be {} rows of {} chars",
                file.name, file.glyph_h, file.glyph_w
            )));
        }
        let mut cell = Vec::with_capacity(file.glyph_h * file.glyph_w);
        for r in rows {
            for ch in r.chars() {
                cell.push(ch == '#');
            }
        }
        glyphs.insert(c, cell);
    }
    Ok(BitmapFont {
        name: file.name,
        glyph_h: file.glyph_h,
        glyph_w: file.glyph_w,
        glyphs,
    })
}

/// Load every `*.json` font in a directory, sorted by filename.
pub fn load_font_dir(dir: &Path) -> Result<Vec<BitmapFont>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::config(format!("cannot read font dir {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::config(format!(
            "font dir {} contains no .json fonts",
            dir.display()
        )));
    }
    paths.iter().map(|p| load_font_file(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_cover_full_inventory() {
        for font in builtin_fonts() {
            for b in 0x21u8..=0x7e {
                assert!(
                    font.has_glyph(b as char),
                    "font {} missing {:?}",
                    font.name,
                    b as char
                );
            }
        }
    }

    #[test]
    fn builtin_variants_differ() {
        let fonts = builtin_fonts();
        let a = fonts[0].glyph('A').unwrap();
        let b = fonts[1].glyph('A').unwrap();
        assert_ne!(a, b);
        let ink = |g: &[bool]| g.iter().filter(|&&v| v).count();
        assert!(ink(b) > ink(a), "bold should add ink");
    }

    #[test]
    fn json_font_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.json");
        std::fs::write(
            &path,
            "{\"name\":\"tiny\",\"glyph_h\":2,\"glyph_w\":3,\"glyphs\":{\"A\":[\"###\",\"#.#\"]}}",
        )
        .unwrap();
        let font = load_font_file(&path).unwrap();
        assert_eq!(font.glyph_w, 3);
        assert_eq!(
            font.glyph('A').unwrap(),
            &[true, true, true, true, false, true]
        );
        let fonts = load_font_dir(dir.path()).unwrap();
        assert_eq!(fonts.len(), 1);
    }

    #[test]
    fn bad_font_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            "{\"name\":\"bad\",\"glyph_h\":2,\"glyph_w\":3,\"glyphs\":{\"A\":[\"##\"]}}",
        )
        .unwrap();
        assert!(load_font_file(&path).is_err());
    }
}
