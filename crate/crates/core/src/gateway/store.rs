use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::ResponseRecord;
use crate::prompt::PromptKey;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {source}")]
    Parse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Append-only JSON-lines response store, one file per
/// `(model, temperature)`.
#[derive(Debug, Clone)]
pub struct RunStore {
    dir: PathBuf,
}

type Triple = (PromptKey, String, u64);

impl RunStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<RunStore, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(RunStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn file_name(model_id: &str, temperature: f64) -> String {
        let safe: String = model_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
            .collect();
        format!("{safe}__t{temperature}.jsonl")
    }

    pub fn path_for(&self, model_id: &str, temperature: f64) -> PathBuf {
        self.dir.join(Self::file_name(model_id, temperature))
    }

    fn files(&self) -> Result<Vec<PathBuf>, StoreError> {
        let mut files: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(io_err(&self.dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        files.sort();
        Ok(files)
    }

    fn read_file(path: &Path) -> Result<Vec<ResponseRecord>, StoreError> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(r) => out.push(r),
                // a torn final line from an interrupted run
                Err(e) if e.is_eof() => log::warn!("{}:{}: skipping truncated record", path.display(), i + 1),
                Err(source) => {
                    return Err(StoreError::Parse {
                        path: path.display().to_string(),
                        line: i + 1,
                        source,
                    })
                }
            }
        }
        Ok(out)
    }

    /// Every record in file order.
    pub fn records(&self) -> Result<Vec<ResponseRecord>, StoreError> {
        let mut all = Vec::new();
        for f in self.files()? {
            all.extend(Self::read_file(&f)?);
        }
        Ok(all)
    }

    /// Triples that already have a successful response.
    pub fn completed(&self) -> Result<HashSet<Triple>, StoreError> {
        Ok(self
            .records()?
            .iter()
            .filter(|r| !r.is_error())
            .map(ResponseRecord::triple)
            .collect())
    }

    pub fn writer(&self) -> StoreWriter<'_> {
        StoreWriter {
            store: self,
            open: HashMap::new(),
        }
    }

    /// Rewrites every file sorted by prompt key with one record per triple,
    /// preferring a successful record over a failed one.
    pub fn compact(&self) -> Result<(), StoreError> {
        for path in self.files()? {
            let mut best: BTreeMap<(PromptKey, String, u64), ResponseRecord> = BTreeMap::new();
            for r in Self::read_file(&path)? {
                let key = r.triple();
                match best.get(&key) {
                    Some(existing) if !existing.is_error() => {}
                    _ => {
                        best.insert(key, r);
                    }
                }
            }
            let tmp = path.with_extension("jsonl.tmp");
            {
                let file = File::create(&tmp).map_err(io_err(&tmp))?;
                let mut w = BufWriter::new(file);
                for r in best.values() {
                    let line = serde_json::to_string(r).expect("records serialize");
                    writeln!(w, "{line}").map_err(io_err(&tmp))?;
                }
                w.flush().map_err(io_err(&tmp))?;
            }
            fs::rename(&tmp, &path).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// Single writer over the store's files.
pub struct StoreWriter<'a> {
    store: &'a RunStore,
    open: HashMap<PathBuf, BufWriter<File>>,
}

impl StoreWriter<'_> {
    pub fn append(&mut self, record: &ResponseRecord) -> Result<(), StoreError> {
        let path = self.store.path_for(&record.model_id, record.temperature);
        if !self.open.contains_key(&path) {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io_err(&path))?;
            self.open.insert(path.clone(), BufWriter::new(file));
        }
        let w = self.open.get_mut(&path).expect("just inserted");
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(w, "{line}").map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        for (path, w) in &mut self.open {
            w.flush().map_err(io_err(path))?;
        }
        Ok(())
    }
}
