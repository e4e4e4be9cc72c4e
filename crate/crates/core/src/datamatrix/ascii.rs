//! ECC200 ASCII encodation.

use super::{CodecError, DATA_CODEWORDS};

const PAD: u8 = 129;
const UPPER_SHIFT: u8 = 235;

/// Pad value for the 1-based codeword position `pos` (253-state
/// randomisation; the first pad is never randomised).
fn randomised_pad(pos: usize) -> u8 {
    let pseudo = ((149 * pos) % 253) + 1;
    let v = PAD as usize + pseudo;
    (if v > 254 { v - 254 } else { v }) as u8
}

pub(crate) fn encode(bytes: &[u8]) -> Result<[u8; DATA_CODEWORDS], CodecError> {
    let mut out = Vec::with_capacity(DATA_CODEWORDS);
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_digit() && bytes.get(i + 1).is_some_and(|n| n.is_ascii_digit()) {
            out.push(130 + (b - b'0') * 10 + (bytes[i + 1] - b'0'));
            i += 2;
        } else if b < 128 {
            out.push(b + 1);
            i += 1;
        } else {
            out.push(UPPER_SHIFT);
            out.push(b - 127);
            i += 1;
        }
    }
    if out.len() > DATA_CODEWORDS {
        return Err(CodecError::MessageTooLong { codewords: out.len() });
    }
    if out.len() < DATA_CODEWORDS {
        out.push(PAD);
        while out.len() < DATA_CODEWORDS {
            out.push(randomised_pad(out.len() + 1));
        }
    }
    let mut data = [0u8; DATA_CODEWORDS];
    data.copy_from_slice(&out);
    Ok(data)
}

pub(crate) fn decode(codewords: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < codewords.len() {
        match codewords[i] {
            0 => return Err(CodecError::UnsupportedCodeword(0)),
            v @ 1..=128 => out.push(v - 1),
            PAD => break,
            v @ 130..=229 => {
                let n = v - 130;
                out.push(b'0' + n / 10);
                out.push(b'0' + n % 10);
            }
            UPPER_SHIFT => {
                i += 1;
                let v = *codewords.get(i).ok_or(CodecError::UnsupportedCodeword(UPPER_SHIFT))?;
                if !(1..=128).contains(&v) {
                    return Err(CodecError::UnsupportedCodeword(v));
                }
                out.push(v + 127);
            }
            v => return Err(CodecError::UnsupportedCodeword(v)),
        }
        i += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letters_and_pad() {
        assert_eq!(encode(b"AB").unwrap(), [66, 67, 129]);
    }

    #[test]
    fn digit_pairs() {
        assert_eq!(encode(b"123456").unwrap(), [142, 164, 186]);
        assert_eq!(encode(b"1").unwrap()[..2], [50, 129]);
    }

    #[test]
    fn second_pad_is_randomised() {
        // position 3: ((149*3) mod 253) + 1 = 195; 129 + 195 - 254 = 70
        assert_eq!(encode(b"A").unwrap(), [66, 129, 70]);
        assert_eq!(decode(&[66, 129, 70]).unwrap(), b"A");
    }

    #[test]
    fn too_long() {
        assert!(matches!(encode(b"ABCD"), Err(CodecError::MessageTooLong { codewords: 4 })));
        assert!(encode(b"1234567").is_err());
    }

    #[test]
    fn extended_byte() {
        let cw = encode(&[200]).unwrap();
        assert_eq!(cw[..2], [235, 73]);
        assert_eq!(decode(&cw).unwrap(), vec![200]);
    }

    #[test]
    fn decode_rejects_unknown_latches() {
        assert!(matches!(decode(&[230, 1, 1]), Err(CodecError::UnsupportedCodeword(230))));
    }
}
