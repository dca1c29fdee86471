use serde::{Deserialize, Serialize};

use super::MemoryError;

const SEP: &str = "\n\n";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub max_chars: usize,
    pub overlap_chars: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            max_chars: 2000,
            overlap_chars: 200,
        }
    }
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn tail_chars(s: &str, n: usize) -> &str {
    let len = char_len(s);
    if len <= n {
        return s;
    }
    match s.char_indices().nth(len - n) {
        Some((idx, _)) => &s[idx..],
        None => "",
    }
}

fn split_every(s: &str, n: usize) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    chars.chunks(n).map(|c| c.iter().collect()).collect()
}

/// Split text at paragraph boundaries into chunks of at most `max_chars`
/// characters. Each chunk after the first begins with the last
/// `overlap_chars` characters of its predecessor. Paragraphs too long to fit
/// are cut at character boundaries.
pub fn chunk_text(text: &str, cfg: &ChunkingConfig) -> Result<Vec<String>, MemoryError> {
    if cfg.max_chars <= cfg.overlap_chars + SEP.len() {
        return Err(MemoryError::InvalidArgument(format!(
            "max_chars ({}) must exceed overlap_chars ({}) + {}",
            cfg.max_chars,
            cfg.overlap_chars,
            SEP.len()
        )));
    }
    let unit_max = cfg.max_chars - cfg.overlap_chars - SEP.len();
    let mut units = Vec::new();
    let mut para = String::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            let p = para.trim();
            if !p.is_empty() {
                if char_len(p) > unit_max {
                    units.extend(split_every(p, unit_max));
                } else {
                    units.push(p.to_string());
                }
            }
            para.clear();
        } else {
            if !para.is_empty() {
                para.push('\n');
            }
            para.push_str(line);
        }
    }

    let mut chunks = Vec::new();
    let mut current = String::new();
    let mut has_content = false;
    for unit in units {
        let sep = if current.is_empty() { 0 } else { SEP.len() };
        if has_content && char_len(&current) + sep + char_len(&unit) > cfg.max_chars {
            let carry = tail_chars(&current, cfg.overlap_chars).to_string();
            chunks.push(std::mem::replace(&mut current, carry));
        }
        if !current.is_empty() {
            current.push_str(SEP);
        }
        current.push_str(&unit);
        has_content = true;
    }
    if has_content {
        chunks.push(current);
    }
    Ok(chunks)
}
