//! `NATC` checkpoint container.
//!
//! Layout: magic `NATC`, format version (u32 LE), then until end of file one
//! record per named block: name length (u32 LE), UTF-8 name, rows (u32 LE),
//! cols (u32 LE), `rows * cols` little-endian f64 values.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{ModelConfig, ModelParams};
use crate::numerics::Matrix;

pub const MAGIC: [u8; 4] = *b"NATC";
pub const VERSION: u32 = 1;

/// Ordered collection of named matrices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub blocks: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams) -> Self {
        let mut ckpt = Self::default();
        ckpt.push_params("", params);
        ckpt
    }

    /// Appends every block of `params` with `prefix` prepended to its name.
    pub fn push_params(&mut self, prefix: &str, params: &ModelParams) {
        params.for_each_block(|name, _, m| self.blocks.push((format!("{prefix}{name}"), m.clone())));
    }

    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.blocks.push((name.into(), m));
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Rebuilds model parameters from unprefixed blocks, inferring the architecture.
    pub fn to_params(&self) -> Result<ModelParams> {
        self.params_with_prefix("")
    }

    pub fn params_with_prefix(&self, prefix: &str) -> Result<ModelParams> {
        let need = |name: &str| {
            self.get(&format!("{prefix}{name}"))
                .ok_or_else(|| Error::Inconsistent(format!("checkpoint lacks block {prefix}{name}")))
        };
        let embed = need("embed")?;
        let out_w = need("out.w")?;
        let mut hidden = Vec::new();
        while let Some(w) = self.get(&format!("{prefix}lstm.{}.w", hidden.len())) {
            hidden.push(w.rows() / 4);
        }
        if hidden.is_empty() {
            return Err(Error::Inconsistent("checkpoint has no LSTM layers".into()));
        }
        let vocab_size = out_w.rows();
        let embed_dim = embed.cols();
        let l0 = need("lstm.0.w")?;
        let input_dim = (l0.cols() - hidden[0])
            .checked_sub(1 + embed_dim)
            .ok_or_else(|| Error::Inconsistent("layer 0 too narrow for its embedding".into()))?;
        let config = ModelConfig {
            input_dim,
            embed_dim,
            hidden,
            vocab_size,
        };
        let mut params = ModelParams::zeros(&config)?;
        let mut err = None;
        params.for_each_block_mut(|name, _, m| {
            if err.is_some() {
                return;
            }
            match self.get(&format!("{prefix}{name}")) {
                Some(src) if src.shape() == m.shape() => *m = src.clone(),
                Some(src) => {
                    err = Some(Error::Inconsistent(format!(
                        "block {name} is {:?}, architecture needs {:?}",
                        src.shape(),
                        m.shape()
                    )))
                }
                None => err = Some(Error::Inconsistent(format!("checkpoint lacks block {prefix}{name}"))),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(params),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for (name, m) in &self.blocks {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let magic: [u8; 4] = take(&mut cur, 4, "magic")?.try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: magic,
            });
        }
        let version = take_u32(&mut cur, "version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let mut blocks = Vec::new();
        while !cur.is_empty() {
            let len = take_u32(&mut cur, "block name length")? as usize;
            let name = std::str::from_utf8(take(&mut cur, len, "block name")?)
                .map_err(|e| Error::Inconsistent(format!("block name is not UTF-8: {e}")))?
                .to_string();
            let rows = take_u32(&mut cur, "block rows")? as usize;
            let cols = take_u32(&mut cur, "block cols")? as usize;
            let n = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| Error::Inconsistent(format!("block {name} is absurdly large")))?;
            let payload = take(&mut cur, n, "block payload")?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blocks.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        Ok(Self { blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            self.write_to(&mut f)?;
            f.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn take<'a>(cur: &mut &'a [u8], n: usize, what: &'static str) -> Result<&'a [u8]> {
    if cur.len() < n {
        return Err(Error::Truncated(what));
    }
    let (head, tail) = cur.split_at(n);
    *cur = tail;
    Ok(head)
}

pub(crate) fn take_u32(cur: &mut &[u8], what: &'static str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(cur, 4, what)?.try_into().unwrap()))
}
