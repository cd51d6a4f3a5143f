//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic "NERTL" | version u32 | payload | checksum u64
//! payload = hyperparameters | vocabulary | layer count u64 | layers
//! layer   = layer id u8 | block count u64 | (name str, rows u64, cols u64, rows·cols f64)*
//! str     = byte length u64 | UTF-8 bytes
//! ```
//!
//! The checksum is the first 8 bytes of SHA-256 over everything before it.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::Vocabulary;
use crate::error::{NerError, Result};
use crate::math::SeededRng;
use crate::network::{Hyperparameters, LayerId, NerModel};

pub const MAGIC: &[u8; 5] = b"NERTL";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = MAGIC.len() + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerBlocks {
    pub layer: LayerId,
    pub blocks: Vec<NamedBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub hyper: Hyperparameters,
    pub vocab: Vocabulary,
    pub layers: Vec<LayerBlocks>,
    pub checksum: u64,
}

fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn strs<'a>(&mut self, items: impl ExactSizeIterator<Item = &'a str>) {
        self.usize(items.len());
        for s in items {
            self.str(s);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn truncated() -> NerError {
    NerError::Integrity("unexpected end of checkpoint".into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or_else(truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| NerError::Integrity("length overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| NerError::Integrity("invalid UTF-8 string".into()))
    }

    fn strs(&mut self) -> Result<Vec<String>> {
        let n = self.usize()?;
        if n > self.bytes.len() {
            return Err(truncated());
        }
        (0..n).map(|_| self.str()).collect()
    }
}

fn write_hyper(w: &mut Writer, h: &Hyperparameters) {
    w.usize(h.token_emb_dim);
    w.usize(h.char_emb_dim);
    w.usize(h.char_lstm_hidden);
    w.usize(h.token_lstm_hidden);
    w.f64(h.learning_rate);
    w.f64(h.dropout_rate);
    w.f64(h.grad_clip_norm);
    w.usize(h.max_epochs);
    w.usize(h.patience);
    w.u64(h.seed);
    w.u8(u8::from(h.bidirectional));
    w.usize(h.min_token_freq);
}

fn read_hyper(r: &mut Reader) -> Result<Hyperparameters> {
    Ok(Hyperparameters {
        token_emb_dim: r.usize()?,
        char_emb_dim: r.usize()?,
        char_lstm_hidden: r.usize()?,
        token_lstm_hidden: r.usize()?,
        learning_rate: r.f64()?,
        dropout_rate: r.f64()?,
        grad_clip_norm: r.f64()?,
        max_epochs: r.usize()?,
        patience: r.usize()?,
        seed: r.u64()?,
        bidirectional: match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(NerError::Integrity(format!("bad boolean byte {b}"))),
        },
        min_token_freq: r.usize()?,
    })
}

fn write_vocab(w: &mut Writer, v: &Vocabulary) {
    w.usize(v.min_token_freq());
    w.strs(v.tokens()[2..].iter().map(String::as_str));
    w.strs(v.chars()[2..].iter().map(String::as_str));
    w.strs(v.labels().iter().map(String::as_str));
    let singles: Vec<&str> = v.singletons().collect();
    w.strs(singles.into_iter());
}

fn read_vocab(r: &mut Reader) -> Result<Vocabulary> {
    let min_freq = r.usize()?;
    let tokens = r.strs()?;
    let chars = r
        .strs()?
        .into_iter()
        .map(|s| {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(NerError::Integrity(format!("character entry {s:?} is not one char"))),
            }
        })
        .collect::<Result<Vec<char>>>()?;
    let labels = r.strs()?;
    let singletons = r.strs()?;
    Vocabulary::from_parts(tokens, chars, labels, min_freq, &singletons)
        .map_err(|e| NerError::Integrity(format!("vocabulary: {e}")))
}

impl Checkpoint {
    pub fn from_model(model: &NerModel) -> Self {
        let mut layers: Vec<LayerBlocks> = LayerId::ALL
            .iter()
            .map(|&layer| LayerBlocks { layer, blocks: Vec::new() })
            .collect();
        for b in model.blocks() {
            layers[usize::from(b.layer.index()) - 1].blocks.push(NamedBlock {
                name: b.name.to_string(),
                rows: b.rows,
                cols: b.cols,
                data: b.data.to_vec(),
            });
        }
        let mut c = Checkpoint {
            format_version: FORMAT_VERSION,
            hyper: model.hyper().clone(),
            vocab: model.vocab().clone(),
            layers,
            checksum: 0,
        };
        let bytes = c.encode_unsealed();
        c.checksum = checksum(&bytes);
        c
    }

    fn encode_unsealed(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.0.extend_from_slice(&self.format_version.to_le_bytes());
        write_hyper(&mut w, &self.hyper);
        write_vocab(&mut w, &self.vocab);
        w.usize(self.layers.len());
        for l in &self.layers {
            w.u8(l.layer.index());
            w.usize(l.blocks.len());
            for b in &l.blocks {
                w.str(&b.name);
                w.usize(b.rows);
                w.usize(b.cols);
                for &x in &b.data {
                    w.f64(x);
                }
            }
        }
        w.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = self.encode_unsealed();
        let sum = checksum(&bytes);
        bytes.extend_from_slice(&sum.to_le_bytes());
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + 8 {
            return Err(truncated());
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(NerError::Integrity("bad magic bytes".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if checksum(body) != stored {
            return Err(NerError::Integrity("checksum mismatch".into()));
        }
        let version = u32::from_le_bytes(body[MAGIC.len()..HEADER_LEN].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(NerError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let mut r = Reader {
            bytes: body,
            pos: HEADER_LEN,
        };
        let hyper = read_hyper(&mut r)?;
        let vocab = read_vocab(&mut r)?;
        let n_layers = r.usize()?;
        if n_layers != LayerId::ALL.len() {
            return Err(NerError::Integrity(format!("expected 6 layers, found {n_layers}")));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for expected in LayerId::ALL {
            let id = r.u8()?;
            if id != expected.index() {
                return Err(NerError::Integrity(format!("layer {id} out of order")));
            }
            let n_blocks = r.usize()?;
            let mut blocks = Vec::new();
            for _ in 0..n_blocks {
                let name = r.str()?;
                let rows = r.usize()?;
                let cols = r.usize()?;
                let len = rows
                    .checked_mul(cols)
                    .filter(|&n| n <= body.len() / 8)
                    .ok_or_else(truncated)?;
                let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                blocks.push(NamedBlock { name, rows, cols, data });
            }
            layers.push(LayerBlocks {
                layer: expected,
                blocks,
            });
        }
        if r.pos != body.len() {
            return Err(NerError::Integrity("trailing bytes after parameters".into()));
        }
        Ok(Checkpoint {
            format_version: version,
            hyper,
            vocab,
            layers,
            checksum: stored,
        })
    }

    /// Rebuilds the model, checking every block against the shapes implied
    /// by the hyperparameters and vocabulary.
    pub fn to_model(&self) -> Result<NerModel> {
        let mut model = NerModel::new(self.vocab.clone(), self.hyper.clone(), &SeededRng::new(0))?;
        let stored: Vec<&NamedBlock> = self.layers.iter().flat_map(|l| &l.blocks).collect();
        let layer_of: Vec<LayerId> = self
            .layers
            .iter()
            .flat_map(|l| l.blocks.iter().map(move |_| l.layer))
            .collect();
        let mut targets = model.blocks_mut();
        if targets.len() != stored.len() {
            return Err(NerError::Integrity(format!(
                "expected {} parameter blocks, found {}",
                targets.len(),
                stored.len()
            )));
        }
        for ((t, s), layer) in targets.iter_mut().zip(stored).zip(layer_of) {
            if t.layer != layer || t.name != s.name || (t.rows, t.cols) != (s.rows, s.cols) {
                return Err(NerError::Integrity(format!(
                    "block {layer}.{} ({}x{}) does not match expected {}.{} ({}x{})",
                    s.name, s.rows, s.cols, t.layer, t.name, t.rows, t.cols
                )));
            }
            t.data.copy_from_slice(&s.data);
        }
        drop(targets);
        Ok(model)
    }
}

pub fn save_checkpoint(model: &NerModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, Checkpoint::from_model(model).to_bytes()).map_err(|e| NerError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NerModel, Checkpoint)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| NerError::io(path, e))?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;
    let model = ckpt.to_model()?;
    Ok((model, ckpt))
}
