//! Record/replay store: one `<key>.fixture` file per response, holding a
//! short text header followed by the raw body.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{GenAiError, ServiceKind};

const MAGIC: &str = "mangaroll-fixture 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureRecord {
    pub kind: ServiceKind,
    pub key: String,
    pub body: Vec<u8>,
}

impl FixtureRecord {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!(
            "{MAGIC}\nkind: {}\nkey: {}\nlength: {}\n\n",
            self.kind,
            self.key,
            self.body.len()
        )
        .into_bytes();
        out.extend_from_slice(&self.body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        let mut rest = bytes;
        let mut line = || -> Result<&str, String> {
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or("truncated header")?;
            let l = std::str::from_utf8(&rest[..nl]).map_err(|_| "header is not utf-8")?;
            rest = &rest[nl + 1..];
            Ok(l)
        };
        if line()? != MAGIC {
            return Err("bad magic line".into());
        }
        let mut field = |name: &str| -> Result<String, String> {
            let l = line()?;
            l.strip_prefix(name)
                .and_then(|v| v.strip_prefix(": "))
                .map(str::to_owned)
                .ok_or_else(|| format!("expected {name} field"))
        };
        let kind = field("kind")?;
        let kind = ServiceKind::parse(&kind).ok_or_else(|| format!("unknown kind {kind}"))?;
        let key = field("key")?;
        let length: usize = field("length")?
            .parse()
            .map_err(|_| "bad length".to_string())?;
        if !line()?.is_empty() {
            return Err("missing blank line after header".into());
        }
        if rest.len() != length {
            return Err(format!("body is {} bytes, header says {length}", rest.len()));
        }
        Ok(Self {
            kind,
            key,
            body: rest.to_vec(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.fixture"))
    }

    pub fn get(&self, kind: ServiceKind, key: &str) -> Result<Option<Vec<u8>>, GenAiError> {
        let bytes = match fs::read(self.path_for(key)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GenAiError::Fixture(e.to_string())),
        };
        let rec = FixtureRecord::decode(&bytes)
            .map_err(|e| GenAiError::Fixture(format!("{key}: {e}")))?;
        if rec.kind != kind || rec.key != key {
            return Err(GenAiError::Fixture(format!(
                "{key}: header names {} {}",
                rec.kind, rec.key
            )));
        }
        Ok(Some(rec.body))
    }

    pub fn put(&self, kind: ServiceKind, key: &str, body: &[u8]) -> Result<(), GenAiError> {
        let err = |e: std::io::Error| GenAiError::Fixture(e.to_string());
        fs::create_dir_all(&self.dir).map_err(err)?;
        let rec = FixtureRecord {
            kind,
            key: key.to_owned(),
            body: body.to_vec(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(err)?;
        tmp.write_all(&rec.encode()).map_err(err)?;
        tmp.persist(self.path_for(key))
            .map_err(|e| GenAiError::Fixture(e.to_string()))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|rd| {
                rd.filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "fixture"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
