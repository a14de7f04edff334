//! Minimal npy v1.0 codec for 2-D float32/float64 C-order arrays.

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8] = b"\x93NUMPY";
const PREAMBLE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dtype {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Endian {
    Little,
    Big,
}

#[derive(Debug, PartialEq)]
enum HeaderValue {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Decodes an npy v1.0 byte buffer. Non-finite entries are not checked here.
pub fn decode_npy(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < PREAMBLE || &bytes[..6] != MAGIC {
        return Err(Error::format("byte 0", "missing npy magic string"));
    }
    if (bytes[6], bytes[7]) != (1, 0) {
        return Err(Error::format(
            "byte 6",
            format!("unsupported npy version {}.{} (need 1.0)", bytes[6], bytes[7]),
        ));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = PREAMBLE + header_len;
    if bytes.len() < data_start {
        return Err(Error::format(
            "byte 8",
            format!("header length {header_len} runs past end of file"),
        ));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE..data_start]).map_err(|e| {
        Error::format(
            format!("byte {}", PREAMBLE + e.valid_up_to()),
            "header is not text",
        )
    })?;
    let fields = parse_header(header)?;

    let descr = match lookup(&fields, "descr")? {
        HeaderValue::Str(s) => s.as_str(),
        _ => return Err(Error::format("header", "'descr' must be a string")),
    };
    let (endian, dtype) = match descr {
        "<f8" | "=f8" => (Endian::Little, Dtype::F64),
        "<f4" | "=f4" => (Endian::Little, Dtype::F32),
        ">f8" => (Endian::Big, Dtype::F64),
        ">f4" => (Endian::Big, Dtype::F32),
        other => {
            return Err(Error::format(
                "header",
                format!("unsupported dtype {other:?} (need float32 or float64)"),
            ))
        }
    };
    match lookup(&fields, "fortran_order")? {
        HeaderValue::Bool(false) => {}
        HeaderValue::Bool(true) => {
            return Err(Error::format("header", "Fortran-order arrays are not supported"))
        }
        _ => return Err(Error::format("header", "'fortran_order' must be a boolean")),
    }
    let shape = match lookup(&fields, "shape")? {
        HeaderValue::Tuple(t) => t.clone(),
        _ => return Err(Error::format("header", "'shape' must be a tuple")),
    };
    let [n, d] = shape[..] else {
        let dims: Vec<String> = shape.iter().map(|s| s.to_string()).collect();
        return Err(Error::Shape(format!(
            "expected a 2-D array, got shape ({})",
            dims.join(", ")
        )));
    };

    let itemsize = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let payload = &bytes[data_start..];
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(itemsize))
        .ok_or_else(|| Error::format("header", "shape overflows"))?;
    if payload.len() != expected {
        return Err(Error::format(
            format!("byte {}", data_start + payload.len().min(expected)),
            format!(
                "payload has {} bytes, shape ({n}, {d}) needs {expected}",
                payload.len()
            ),
        ));
    }

    let values: Vec<f64> = match dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| {
                let b: [u8; 8] = c.try_into().unwrap();
                match endian {
                    Endian::Little => f64::from_le_bytes(b),
                    Endian::Big => f64::from_be_bytes(b),
                }
            })
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| {
                let b: [u8; 4] = c.try_into().unwrap();
                f64::from(match endian {
                    Endian::Little => f32::from_le_bytes(b),
                    Endian::Big => f32::from_be_bytes(b),
                })
            })
            .collect(),
    };
    Ok(Array2::from_shape_vec((n, d), values).expect("length checked above"))
}

/// Encodes as little-endian float64, header padded to a 64-byte boundary.
pub fn encode_npy(data: &Array2<f64>) -> Vec<u8> {
    let (n, d) = data.dim();
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({n}, {d}), }}");
    let unpadded = PREAMBLE + header.len() + 1;
    header.extend(std::iter::repeat_n(' ', (64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(PREAMBLE + header.len() + n * d * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    // `iter()` walks in logical row-major order regardless of memory layout.
    for v in data.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn lookup<'a>(fields: &'a [(String, HeaderValue)], key: &str) -> Result<&'a HeaderValue> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::format("header", format!("missing key {key:?}")))
}

/// Parses the Python dict literal of an npy header.
fn parse_header(text: &str) -> Result<Vec<(String, HeaderValue)>> {
    let mut p = HeaderParser {
        chars: text.char_indices().peekable(),
    };
    p.skip_ws();
    p.expect('{')?;
    let mut fields = Vec::new();
    loop {
        p.skip_ws();
        if p.eat('}') {
            break;
        }
        let key = p.string()?;
        p.skip_ws();
        p.expect(':')?;
        p.skip_ws();
        let value = p.value()?;
        fields.push((key, value));
        p.skip_ws();
        if !p.eat(',') {
            p.skip_ws();
            p.expect('}')?;
            break;
        }
    }
    Ok(fields)
}

struct HeaderParser<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
}

impl HeaderParser<'_> {
    fn pos(&mut self) -> String {
        match self.chars.peek() {
            Some((i, _)) => format!("header byte {}", PREAMBLE + i),
            None => "end of header".to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.chars.next_if(|(_, c)| c.is_whitespace()).is_some() {}
    }

    fn eat(&mut self, want: char) -> bool {
        self.chars.next_if(|(_, c)| *c == want).is_some()
    }

    fn expect(&mut self, want: char) -> Result<()> {
        if self.eat(want) {
            Ok(())
        } else {
            Err(Error::format(self.pos(), format!("expected {want:?}")))
        }
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.chars.peek() {
            Some((_, q @ ('\'' | '"'))) => *q,
            _ => return Err(Error::format(self.pos(), "expected quoted string")),
        };
        self.chars.next();
        let mut s = String::new();
        for (_, c) in self.chars.by_ref() {
            if c == quote {
                return Ok(s);
            }
            s.push(c);
        }
        Err(Error::format("end of header", "unterminated string"))
    }

    fn value(&mut self) -> Result<HeaderValue> {
        match self.chars.peek().map(|(_, c)| *c) {
            Some('\'' | '"') => Ok(HeaderValue::Str(self.string()?)),
            Some('(') => {
                self.chars.next();
                let mut dims = Vec::new();
                loop {
                    self.skip_ws();
                    if self.eat(')') {
                        break;
                    }
                    dims.push(self.integer()?);
                    self.skip_ws();
                    if !self.eat(',') {
                        self.skip_ws();
                        self.expect(')')?;
                        break;
                    }
                }
                Ok(HeaderValue::Tuple(dims))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let at = self.pos();
                let mut word = String::new();
                while let Some((_, c)) = self.chars.next_if(|(_, c)| c.is_ascii_alphanumeric()) {
                    word.push(c);
                }
                match word.as_str() {
                    "True" => Ok(HeaderValue::Bool(true)),
                    "False" => Ok(HeaderValue::Bool(false)),
                    _ => Err(Error::format(at, format!("unexpected token {word:?}"))),
                }
            }
            _ => Err(Error::format(self.pos(), "expected a value")),
        }
    }

    fn integer(&mut self) -> Result<usize> {
        let at = self.pos();
        let mut digits = String::new();
        while let Some((_, c)) = self.chars.next_if(|(_, c)| c.is_ascii_digit()) {
            digits.push(c);
        }
        // Python 2 era writers emit `3L`.
        self.eat('L');
        digits
            .parse()
            .map_err(|_| Error::format(at, "expected a non-negative integer"))
    }
}
