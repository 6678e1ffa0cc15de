//! Append-only record file of search results.
//!
//! Record layout, integers little-endian:
//!
//! ```text
//! key[32] complete[1] count:u32 (len:u32 text[len])* checksum[8]
//! ```
//!
//! The checksum is the first 8 bytes of the SHA-256 of everything before
//! it in the record. A record that fails to decode ends the scan; later
//! records for the same key replace earlier ones.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::ConsistentSet;
use crate::grammar::program_text;
use crate::table::Table;

pub fn cache_key(example_id: &str, config_digest: &[u8; 32], fingerprint: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((example_id.len() as u32).to_le_bytes());
    h.update(example_id.as_bytes());
    h.update(config_digest);
    h.update(fingerprint);
    h.finalize().into()
}

struct Record {
    complete: bool,
    texts: Vec<String>,
}

pub struct SearchCache {
    path: PathBuf,
    records: HashMap<[u8; 32], Record>,
    /// Bytes after the last good record; counted but not recovered.
    pub corrupt_tail: usize,
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> Option<&'a [u8]> {
    let s = buf.get(*pos..pos.checked_add(n)?)?;
    *pos += n;
    Some(s)
}

fn take_u32(buf: &[u8], pos: &mut usize) -> Option<u32> {
    take(buf, pos, 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
}

fn decode(buf: &[u8], pos: &mut usize) -> Option<([u8; 32], Record)> {
    let start = *pos;
    let key: [u8; 32] = take(buf, pos, 32)?.try_into().unwrap();
    let complete = match take(buf, pos, 1)?[0] {
        0 => false,
        1 => true,
        _ => return None,
    };
    let count = take_u32(buf, pos)? as usize;
    let mut texts = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = take_u32(buf, pos)? as usize;
        texts.push(String::from_utf8(take(buf, pos, len)?.to_vec()).ok()?);
    }
    let body_end = *pos;
    let sum = take(buf, pos, 8)?;
    if Sha256::digest(&buf[start..body_end])[..8] != *sum {
        return None;
    }
    Some((key, Record { complete, texts }))
}

fn encode(key: &[u8; 32], complete: bool, texts: &[String]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(key);
    out.push(complete as u8);
    out.extend_from_slice(&(texts.len() as u32).to_le_bytes());
    for t in texts {
        out.extend_from_slice(&(t.len() as u32).to_le_bytes());
        out.extend_from_slice(t.as_bytes());
    }
    let sum = Sha256::digest(&out);
    out.extend_from_slice(&sum[..8]);
    out
}

impl SearchCache {
    /// Opens (or starts) the cache file at `path`.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let buf = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        let mut records = HashMap::new();
        let mut pos = 0;
        let mut corrupt_tail = 0;
        while pos < buf.len() {
            let mut p = pos;
            match decode(&buf, &mut p) {
                Some((k, r)) => {
                    records.insert(k, r);
                    pos = p;
                }
                None => {
                    corrupt_tail = buf.len() - pos;
                    log::warn!("search cache {}: corrupt record at byte {pos}, ignoring {corrupt_tail} bytes", path.display());
                    break;
                }
            }
        }
        Ok(Self { path, records, corrupt_tail })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Cached set for `key`; texts that no longer parse count as a miss.
    pub fn get(&self, key: &[u8; 32], example_id: &str, table: &Table) -> Option<ConsistentSet> {
        let r = self.records.get(key)?;
        let programs = r
            .texts
            .iter()
            .map(|t| program_text::parse(t, table))
            .collect::<Result<Vec<_>, _>>()
            .ok()?;
        Some(ConsistentSet::from_programs(example_id, &programs, table, r.complete))
    }

    pub fn put(&mut self, key: [u8; 32], set: &ConsistentSet, table: &Table) -> std::io::Result<()> {
        let texts = set.texts(table);
        let bytes = encode(&key, set.complete, &texts);
        if self.corrupt_tail > 0 {
            // Appending after garbage would make the new record unreachable.
            let keep = std::fs::metadata(&self.path)?.len() - self.corrupt_tail as u64;
            OpenOptions::new().write(true).open(&self.path)?.set_len(keep)?;
            self.corrupt_tail = 0;
        }
        if let Some(dir) = self.path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut f: File = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(&bytes)?;
        self.records.insert(key, Record { complete: set.complete, texts });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::program_text::parse;
    use crate::table::{CellValue, Column, ColumnType};

    fn table() -> Table {
        Table::new(
            "t",
            vec![Column { name_tokens: vec!["x".into()], ctype: ColumnType::Number, cells: vec![CellValue::Number(1.0)] }],
        )
        .unwrap()
    }

    fn set(t: &Table) -> ConsistentSet {
        let ps = vec![parse("count(all_rows)", t).unwrap(), parse("max(all_rows, col:x)", t).unwrap()];
        ConsistentSet::from_programs("7", &ps, t, true)
    }

    #[test]
    fn put_get_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let t = table();
        let key = cache_key("7", &[1; 32], &[2; 32]);
        let mut c = SearchCache::open(&path).unwrap();
        assert!(c.get(&key, "7", &t).is_none());
        c.put(key, &set(&t), &t).unwrap();
        assert_eq!(c.get(&key, "7", &t), Some(set(&t)));
        let c2 = SearchCache::open(&path).unwrap();
        assert_eq!(c2.get(&key, "7", &t), Some(set(&t)));
        let other = cache_key("7", &[3; 32], &[2; 32]);
        assert!(c2.get(&other, "7", &t).is_none());
    }

    #[test]
    fn corrupt_record_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let t = table();
        let k1 = cache_key("1", &[0; 32], &[0; 32]);
        let k2 = cache_key("2", &[0; 32], &[0; 32]);
        let mut c = SearchCache::open(&path).unwrap();
        c.put(k1, &set(&t), &t).unwrap();
        c.put(k2, &set(&t), &t).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        let mut c = SearchCache::open(&path).unwrap();
        assert!(c.get(&k1, "1", &t).is_some());
        assert!(c.get(&k2, "2", &t).is_none());
        assert!(c.corrupt_tail > 0);
        c.put(k2, &set(&t), &t).unwrap();
        assert!(SearchCache::open(&path).unwrap().get(&k2, "2", &t).is_some());
    }

    #[test]
    fn encoding_is_stable() {
        let t = table();
        let key = [9u8; 32];
        let a = encode(&key, true, &set(&t).texts(&t));
        let b = encode(&key, true, &set(&t).texts(&t));
        assert_eq!(a, b);
        let mut p = 0;
        let (k, r) = decode(&a, &mut p).unwrap();
        assert_eq!((k, r.complete, r.texts.len(), p), (key, true, 2, a.len()));
    }
}
