//! Versioned binary container for trained models.
//!
//! One format, `tm-model-v1`, carries both model variants behind a variant
//! tag: standard clause banks with plain and negated automata, or monotone
//! pools with plain automata only. The payload embeds the vocabulary hash
//! and the pipeline config hash so artifacts refuse to load under a
//! mismatched setup, plus the class labels or sub-intent names so a model
//! file is self-describing.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic            12 bytes  "tm-model-v1\n"
//! variant           1 byte   0 standard, 1 monotone
//! vocab_hash        8
//! config_hash       8
//! input_width       4
//! num_banks         4        classes (standard) or sub-intents (monotone)
//! clauses_per_bank  4
//! threshold         4
//! specificity       8        f64 bits
//! states_per_action 2
//! flags             1        bit 0: weighted (standard only)
//! seed              8
//! names             num_banks x (u16 length + utf8)
//! banks             num_banks x clauses_per_bank x clause
//! ```
//!
//! A standard clause is `weight u32, include width x u16, negate width x
//! u16`; a monotone clause omits the negate array entirely. Decoding is
//! strict: unknown variants or flags, truncation, trailing bytes, and any
//! state outside [1, 2n] are errors, never panics.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::ntm::{MonotoneClause, NTMModel, NtmParams, SubIntent};
use crate::tm::{Clause, TMModel, TmParams};

const MAGIC: &[u8; 12] = b"tm-model-v1\n";
const VARIANT_STANDARD: u8 = 0;
const VARIANT_MONOTONE: u8 = 1;
const FLAG_WEIGHTED: u8 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("not a tm-model-v1 file")]
    BadMagic,
    #[error("unknown model variant {0}")]
    UnknownVariant(u8),
    #[error("file holds a {actual} model, expected {expected}")]
    WrongVariant { expected: &'static str, actual: &'static str },
    #[error("unknown flag bits {0:#04x}")]
    UnknownFlags(u8),
    #[error("truncated file while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after the model payload")]
    TrailingBytes(usize),
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn variant_name(v: u8) -> &'static str {
    match v {
        VARIANT_STANDARD => "standard",
        VARIANT_MONOTONE => "monotone",
        _ => "unknown",
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Cursor<'a> {
        Cursor { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8], ModelIoError> {
        if self.remaining() < len {
            return Err(ModelIoError::Truncated(what));
        }
        let slice = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, ModelIoError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, ModelIoError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, ModelIoError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, ModelIoError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, ModelIoError> {
        Ok(f64::from_bits(self.u64(what)?))
    }

    fn states(&mut self, width: usize, what: &'static str) -> Result<Vec<u16>, ModelIoError> {
        let bytes = self.take(width.checked_mul(2).ok_or(ModelIoError::Truncated(what))?, what)?;
        Ok(bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
    }
}

struct Header {
    vocab_hash: u64,
    config_hash: u64,
    input_width: usize,
    num_banks: usize,
    clauses_per_bank: usize,
    threshold: u32,
    specificity: f64,
    states_per_action: u16,
    flags: u8,
    seed: u64,
    names: Vec<String>,
}

fn read_header(cur: &mut Cursor, expected_variant: u8) -> Result<Header, ModelIoError> {
    if cur.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let variant = cur.u8("variant")?;
    if variant != VARIANT_STANDARD && variant != VARIANT_MONOTONE {
        return Err(ModelIoError::UnknownVariant(variant));
    }
    if variant != expected_variant {
        return Err(ModelIoError::WrongVariant {
            expected: variant_name(expected_variant),
            actual: variant_name(variant),
        });
    }
    let vocab_hash = cur.u64("vocab hash")?;
    let config_hash = cur.u64("config hash")?;
    let input_width = cur.u32("input width")? as usize;
    let num_banks = cur.u32("bank count")? as usize;
    let clauses_per_bank = cur.u32("clauses per bank")? as usize;
    let threshold = cur.u32("threshold")?;
    let specificity = cur.f64("specificity")?;
    let states_per_action = cur.u16("states per action")?;
    let flags = cur.u8("flags")?;
    let known = if variant == VARIANT_STANDARD { FLAG_WEIGHTED } else { 0 };
    if flags & !known != 0 {
        return Err(ModelIoError::UnknownFlags(flags));
    }
    let seed = cur.u64("seed")?;

    // Cheap feasibility bound before any allocation: every clause costs at
    // least one weight, so wildly inflated counts die here instead of OOMing.
    let clause_count = num_banks
        .checked_mul(clauses_per_bank)
        .ok_or_else(|| ModelIoError::Malformed("clause count overflows".into()))?;
    let min_clause_len = input_width
        .checked_mul(2)
        .and_then(|n| n.checked_add(4))
        .ok_or_else(|| ModelIoError::Malformed("clause size overflows".into()))?;
    if clause_count.checked_mul(min_clause_len).is_none_or(|need| need > cur.remaining()) {
        return Err(ModelIoError::Truncated("clause banks"));
    }

    let mut names = Vec::with_capacity(num_banks);
    for _ in 0..num_banks {
        let len = cur.u16("name length")? as usize;
        let bytes = cur.take(len, "name")?;
        let name = std::str::from_utf8(bytes)
            .map_err(|_| ModelIoError::Malformed("name is not valid utf-8".into()))?;
        names.push(name.to_string());
    }
    Ok(Header {
        vocab_hash,
        config_hash,
        input_width,
        num_banks,
        clauses_per_bank,
        threshold,
        specificity,
        states_per_action,
        flags,
        seed,
        names,
    })
}

fn write_header<W: Write>(
    w: &mut W,
    variant: u8,
    vocab_hash: u64,
    config_hash: u64,
    input_width: usize,
    num_banks: usize,
    clauses_per_bank: usize,
    threshold: u32,
    specificity: f64,
    states_per_action: u16,
    flags: u8,
    seed: u64,
    names: &[String],
) -> Result<(), ModelIoError> {
    w.write_all(MAGIC)?;
    w.write_all(&[variant])?;
    w.write_all(&vocab_hash.to_le_bytes())?;
    w.write_all(&config_hash.to_le_bytes())?;
    w.write_all(&u32::try_from(input_width).map_err(|_| oversize("input width"))?.to_le_bytes())?;
    w.write_all(&u32::try_from(num_banks).map_err(|_| oversize("bank count"))?.to_le_bytes())?;
    w.write_all(
        &u32::try_from(clauses_per_bank).map_err(|_| oversize("clause count"))?.to_le_bytes(),
    )?;
    w.write_all(&threshold.to_le_bytes())?;
    w.write_all(&specificity.to_bits().to_le_bytes())?;
    w.write_all(&states_per_action.to_le_bytes())?;
    w.write_all(&[flags])?;
    w.write_all(&seed.to_le_bytes())?;
    for name in names {
        let len = u16::try_from(name.len()).map_err(|_| oversize("name"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
    }
    Ok(())
}

fn oversize(what: &str) -> ModelIoError {
    ModelIoError::Malformed(format!("{what} too large for the container"))
}

fn write_states<W: Write>(w: &mut W, states: &[u16]) -> Result<(), ModelIoError> {
    let mut bytes = Vec::with_capacity(states.len() * 2);
    for s in states {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Serialize a standard model. The config hash binds the artifact to the
/// run configuration that produced it.
pub fn write_tm_model<W: Write>(
    w: &mut W,
    model: &TMModel,
    config_hash: u64,
) -> Result<(), ModelIoError> {
    let p = model.params();
    write_header(
        w,
        VARIANT_STANDARD,
        model.vocab_hash(),
        config_hash,
        model.input_width(),
        p.num_classes,
        p.clauses_per_class,
        p.threshold,
        p.specificity,
        p.states_per_action,
        if p.weighted { FLAG_WEIGHTED } else { 0 },
        p.seed,
        model.labels(),
    )?;
    for bank in model.banks() {
        for clause in bank {
            w.write_all(&clause.weight().to_le_bytes())?;
            write_states(w, clause.include_states())?;
            write_states(w, clause.negate_states())?;
        }
    }
    Ok(())
}

pub fn save_tm_model(path: &Path, model: &TMModel, config_hash: u64) -> Result<(), ModelIoError> {
    let mut bytes = Vec::new();
    write_tm_model(&mut bytes, model, config_hash)?;
    Ok(std::fs::write(path, bytes)?)
}

/// Decode a standard model and the config hash it was saved under.
pub fn decode_tm_model(bytes: &[u8]) -> Result<(TMModel, u64), ModelIoError> {
    let mut cur = Cursor::new(bytes);
    let h = read_header(&mut cur, VARIANT_STANDARD)?;
    let params = TmParams {
        clauses_per_class: h.clauses_per_bank,
        num_classes: h.num_banks,
        threshold: h.threshold,
        specificity: h.specificity,
        states_per_action: h.states_per_action,
        weighted: h.flags & FLAG_WEIGHTED != 0,
        seed: h.seed,
    };
    let mut banks = Vec::with_capacity(h.num_banks);
    for _ in 0..h.num_banks {
        let mut bank = Vec::with_capacity(h.clauses_per_bank);
        for _ in 0..h.clauses_per_bank {
            let weight = cur.u32("clause weight")?;
            let include = cur.states(h.input_width, "include states")?;
            let negate = cur.states(h.input_width, "negate states")?;
            bank.push(
                Clause::from_states(include, negate, weight, h.states_per_action)
                    .map_err(|e| ModelIoError::Malformed(e.to_string()))?,
            );
        }
        banks.push(bank);
    }
    if cur.remaining() != 0 {
        return Err(ModelIoError::TrailingBytes(cur.remaining()));
    }
    let model = TMModel::from_parts(params, h.input_width, h.vocab_hash, h.names, banks)
        .map_err(|e| ModelIoError::Malformed(e.to_string()))?;
    Ok((model, h.config_hash))
}

pub fn read_tm_model<R: Read>(r: &mut R) -> Result<(TMModel, u64), ModelIoError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_tm_model(&bytes)
}

pub fn load_tm_model(path: &Path) -> Result<(TMModel, u64), ModelIoError> {
    read_tm_model(&mut File::open(path)?)
}

/// Serialize a monotone sub-intent model. Only the sub-intent names are
/// stored; explanations live with the generated corpus, not the model.
pub fn write_ntm_model<W: Write>(
    w: &mut W,
    model: &NTMModel,
    config_hash: u64,
) -> Result<(), ModelIoError> {
    let p = model.params();
    let names: Vec<String> = model.subintents().iter().map(|s| s.name.clone()).collect();
    write_header(
        w,
        VARIANT_MONOTONE,
        model.vocab_hash(),
        config_hash,
        model.input_width(),
        names.len(),
        p.clauses_per_subintent,
        p.threshold,
        p.specificity,
        p.states_per_action,
        0,
        p.seed,
        &names,
    )?;
    for pool in model.pools() {
        for clause in pool {
            w.write_all(&clause.weight().to_le_bytes())?;
            write_states(w, clause.include_states())?;
        }
    }
    Ok(())
}

pub fn save_ntm_model(
    path: &Path,
    model: &NTMModel,
    config_hash: u64,
) -> Result<(), ModelIoError> {
    let mut bytes = Vec::new();
    write_ntm_model(&mut bytes, model, config_hash)?;
    Ok(std::fs::write(path, bytes)?)
}

pub fn decode_ntm_model(bytes: &[u8]) -> Result<(NTMModel, u64), ModelIoError> {
    let mut cur = Cursor::new(bytes);
    let h = read_header(&mut cur, VARIANT_MONOTONE)?;
    let params = NtmParams {
        clauses_per_subintent: h.clauses_per_bank,
        threshold: h.threshold,
        specificity: h.specificity,
        states_per_action: h.states_per_action,
        seed: h.seed,
    };
    let mut subintents = Vec::with_capacity(h.num_banks);
    for name in &h.names {
        subintents
            .push(SubIntent::from_name(name).map_err(|e| ModelIoError::Malformed(e.to_string()))?);
    }
    let mut pools = Vec::with_capacity(h.num_banks);
    for _ in 0..h.num_banks {
        let mut pool = Vec::with_capacity(h.clauses_per_bank);
        for _ in 0..h.clauses_per_bank {
            let weight = cur.u32("clause weight")?;
            let include = cur.states(h.input_width, "include states")?;
            pool.push(
                MonotoneClause::from_states(include, weight, h.states_per_action)
                    .map_err(|e| ModelIoError::Malformed(e.to_string()))?,
            );
        }
        pools.push(pool);
    }
    if cur.remaining() != 0 {
        return Err(ModelIoError::TrailingBytes(cur.remaining()));
    }
    let model = NTMModel::from_parts(params, h.input_width, h.vocab_hash, subintents, pools)
        .map_err(|e| ModelIoError::Malformed(e.to_string()))?;
    Ok((model, h.config_hash))
}

pub fn read_ntm_model<R: Read>(r: &mut R) -> Result<(NTMModel, u64), ModelIoError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_ntm_model(&bytes)
}

pub fn load_ntm_model(path: &Path) -> Result<(NTMModel, u64), ModelIoError> {
    read_ntm_model(&mut File::open(path)?)
}
