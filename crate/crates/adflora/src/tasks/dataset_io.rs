//! Flat binary persistence for generated classification datasets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "ADFD"
//! version  u32      1
//! clients  u32
//! features u32
//! classes  u32
//! base     features·classes f64 (row-major)
//! per client:
//!   train_count u32, eval_count u32
//!   train features (train_count·features f64), train labels (i32)
//!   eval  features (eval_count·features f64),  eval  labels (i32)
//! ```

use super::logistic::{ClientShard, LogisticTask};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"ADFD";
const VERSION: u32 = 1;

pub fn save_logistic(task: &LogisticTask, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    write_u32(&mut buf, VERSION);
    write_u32(&mut buf, task.n_clients() as u32);
    write_u32(&mut buf, task.n_features() as u32);
    write_u32(&mut buf, task.n_classes() as u32);
    for &x in task.base().entries() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for i in 0..task.n_clients() {
        let shard = task.client(i);
        let eval_count = shard.eval_y.len();
        write_u32(&mut buf, shard.train_y.len() as u32);
        write_u32(&mut buf, eval_count as u32);
        for &x in shard.train_x.entries() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for &y in &shard.train_y {
            buf.extend_from_slice(&(y as i32).to_le_bytes());
        }
        if let Some(ex) = &shard.eval_x {
            for &x in ex.entries() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        for &y in &shard.eval_y {
            buf.extend_from_slice(&(y as i32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(&buf).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_logistic(path: &Path) -> Result<LogisticTask> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0, path };

    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(cur.malformed("bad magic"));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(cur.malformed(&format!("unsupported version {version}")));
    }
    let n_clients = cur.u32()? as usize;
    let n_features = cur.u32()? as usize;
    let n_classes = cur.u32()? as usize;
    if n_clients == 0 || n_features == 0 || n_classes < 2 {
        return Err(cur.malformed("degenerate dimensions"));
    }
    let base = cur.matrix(n_features, n_classes)?;

    let mut clients = Vec::with_capacity(n_clients);
    for _ in 0..n_clients {
        let train_count = cur.u32()? as usize;
        let eval_count = cur.u32()? as usize;
        if train_count == 0 {
            return Err(cur.malformed("empty training shard"));
        }
        let train_x = cur.matrix(train_count, n_features)?;
        let train_y = cur.labels(train_count, n_classes)?;
        let eval_x = if eval_count > 0 {
            Some(cur.matrix(eval_count, n_features)?)
        } else {
            None
        };
        let eval_y = cur.labels(eval_count, n_classes)?;
        clients.push(ClientShard {
            train_x,
            train_y,
            eval_x,
            eval_y,
        });
    }
    if cur.pos != bytes.len() {
        return Err(cur.malformed("trailing bytes"));
    }
    Ok(LogisticTask::from_parts(base, clients, n_classes))
}

fn write_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn malformed(&self, detail: &str) -> Error {
        Error::Malformed {
            what: format!("dataset file {}", self.path.display()),
            detail: format!("{detail} (at byte {})", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.malformed("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        let v = f64::from_le_bytes(b.try_into().unwrap());
        if !v.is_finite() {
            return Err(self.malformed("non-finite entry"));
        }
        Ok(v)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64()?);
        }
        Ok(Matrix::new(rows, cols, data))
    }

    fn labels(&mut self, n: usize, n_classes: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let b = self.take(4)?;
            let y = i32::from_le_bytes(b.try_into().unwrap());
            if y < 0 || y as usize >= n_classes {
                return Err(self.malformed(&format!("label {y} out of range")));
            }
            out.push(y as usize);
        }
        Ok(out)
    }
}
