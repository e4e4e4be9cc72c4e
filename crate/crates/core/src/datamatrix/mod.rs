//! ECC200 Data Matrix, restricted to the 10×10 square symbol.
//!
//! A 10×10 symbol carries 3 data codewords and 5 Reed–Solomon check
//! codewords.

mod ascii;
mod detect;
mod gf;
mod placement;
mod reed_solomon;
mod symbol;

pub use detect::{decode_roi, DecodeMode};
pub use symbol::{render_symbol, sample_grid, SymbolBitmap, SYMBOL_MODULES};

pub const DATA_CODEWORDS: usize = 3;
pub const ECC_CODEWORDS: usize = 5;
pub const TOTAL_CODEWORDS: usize = DATA_CODEWORDS + ECC_CODEWORDS;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("expected {expected} codewords, got {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("message needs {codewords} data codewords; a 10x10 symbol holds 3")]
    MessageTooLong { codewords: usize },
    #[error("uncorrectable")]
    Uncorrectable,
    #[error("unsupported codeword {0}")]
    UnsupportedCodeword(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Codewords {
    pub data: [u8; DATA_CODEWORDS],
    pub ecc: [u8; ECC_CODEWORDS],
}

impl Codewords {
    pub fn to_array(&self) -> [u8; TOTAL_CODEWORDS] {
        let mut out = [0u8; TOTAL_CODEWORDS];
        out[..DATA_CODEWORDS].copy_from_slice(&self.data);
        out[DATA_CODEWORDS..].copy_from_slice(&self.ecc);
        out
    }

    pub fn from_array(cw: [u8; TOTAL_CODEWORDS]) -> Self {
        let mut data = [0u8; DATA_CODEWORDS];
        let mut ecc = [0u8; ECC_CODEWORDS];
        data.copy_from_slice(&cw[..DATA_CODEWORDS]);
        ecc.copy_from_slice(&cw[DATA_CODEWORDS..]);
        Self { data, ecc }
    }

    /// True when all five syndromes vanish.
    pub fn is_valid(&self) -> bool {
        reed_solomon::syndromes(&self.to_array()).iter().all(|&s| s == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub bytes: Vec<u8>,
    pub erasures_corrected: usize,
    pub errors_corrected: usize,
}

impl Payload {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.bytes).into_owned()
    }
}

/// Appends the check codewords to 3 already-encoded data codewords.
pub fn rs_encode(data: &[u8]) -> Result<Codewords, CodecError> {
    let data: [u8; DATA_CODEWORDS] = data.try_into().map_err(|_| CodecError::WrongLength { expected: DATA_CODEWORDS, found: data.len() })?;
    Ok(Codewords { data, ecc: reed_solomon::ecc_for(&data) })
}

/// Corrects up to two codeword errors and decodes the ASCII message.
pub fn rs_decode(cw: &[u8]) -> Result<Payload, CodecError> {
    let mut buf: [u8; TOTAL_CODEWORDS] = cw.try_into().map_err(|_| CodecError::WrongLength { expected: TOTAL_CODEWORDS, found: cw.len() })?;
    let errors_corrected = reed_solomon::correct(&mut buf)?;
    let bytes = ascii::decode(&buf[..DATA_CODEWORDS])?;
    Ok(Payload { bytes, erasures_corrected: 0, errors_corrected })
}

/// ASCII-encodes `text` into the 3 data codewords and adds the check words.
pub fn encode_text(text: &[u8]) -> Result<Codewords, CodecError> {
    let data = ascii::encode(text)?;
    rs_encode(&data)
}
