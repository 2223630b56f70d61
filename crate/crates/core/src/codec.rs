//! Transpose error-correction codec.
//!
//! A batch of `pl` messages of `ml` bits is treated as a bit matrix whose rows
//! are the messages. Every row is encoded with a bit-level code that corrects
//! `capacity` bit errors, giving `pl` codewords of `n` bits, and the matrix
//! columns become the `n` packet payloads. A wrong packet therefore costs at
//! most one bit in each codeword, so up to `capacity` wrong packets are
//! corrected row by row on the receiving side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid codec parameters: {0}")]
    Params(String),
    #[error("expected a word of {expected} bits, got {actual}")]
    WordLength { expected: usize, actual: usize },
    #[error("expected {expected} messages in the batch, got {actual}")]
    BatchSize { expected: usize, actual: usize },
    #[error("expected {expected} payload columns, got {actual}")]
    ColumnCount { expected: usize, actual: usize },
    #[error("payload column label {0} is out of range or repeated")]
    ColumnLabel(u32),
}

/// Which bit-level code protects each message row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BitCodeKind {
    /// Every bit repeated `2·capacity + 1` times, decoded by majority.
    #[default]
    Repetition,
    /// Reed–Solomon over GF(2^8) with `2·capacity` parity symbols.
    ReedSolomon,
}

/// A bit-level error-correcting code with error threshold `capacity`.
///
/// Implementations must decode any word within Hamming distance `capacity`
/// of a codeword back to that codeword's plaintext, and must return *some*
/// `ml`-bit word for every other input.
pub trait BitCode {
    fn codeword_len(&self) -> usize;
    fn encode(&self, word: &Bits) -> Bits;
    fn decode(&self, word: &Bits) -> Bits;
}

/// Per-bit repetition code, the reference instance.
#[derive(Clone, Copy, Debug)]
pub struct RepetitionCode {
    ml: usize,
    factor: usize,
}

impl RepetitionCode {
    pub fn new(ml: usize, capacity: usize) -> Self {
        RepetitionCode {
            ml,
            factor: 2 * capacity + 1,
        }
    }
}

impl BitCode for RepetitionCode {
    fn codeword_len(&self) -> usize {
        self.ml * self.factor
    }

    fn encode(&self, word: &Bits) -> Bits {
        word.iter()
            .flat_map(|b| std::iter::repeat_n(b, self.factor))
            .collect()
    }

    fn decode(&self, word: &Bits) -> Bits {
        word.as_slice()
            .chunks(self.factor)
            .map(|group| 2 * group.iter().filter(|b| **b).count() > self.factor)
            .collect()
    }
}

/// Reed–Solomon code over byte symbols.
///
/// A codeword bit flip corrupts at most one symbol, so `capacity` bit errors
/// touch at most `capacity` symbols and `2·capacity` parity symbols suffice.
/// For `capacity = 0` it is the identity on the zero-padded data bytes.
#[derive(Clone, Copy, Debug)]
pub struct ReedSolomonCode {
    ml: usize,
    capacity: usize,
}

impl ReedSolomonCode {
    /// Longest codeword the GF(2^8) construction supports, in symbols.
    pub const MAX_SYMBOLS: usize = 255;

    pub fn new(ml: usize, capacity: usize) -> Self {
        ReedSolomonCode { ml, capacity }
    }

    fn data_symbols(&self) -> usize {
        self.ml.div_ceil(8)
    }

    fn parity_symbols(&self) -> usize {
        2 * self.capacity
    }
}

impl BitCode for ReedSolomonCode {
    fn codeword_len(&self) -> usize {
        8 * (self.data_symbols() + self.parity_symbols())
    }

    fn encode(&self, word: &Bits) -> Bits {
        let data = word.to_bytes();
        if self.capacity == 0 {
            return Bits::from_bytes(&data, self.codeword_len());
        }
        let encoded = reed_solomon::Encoder::new(self.parity_symbols()).encode(&data);
        Bits::from_bytes(&encoded[..], self.codeword_len())
    }

    fn decode(&self, word: &Bits) -> Bits {
        let bytes = word.to_bytes();
        if self.capacity == 0 {
            return Bits::from_bytes(&bytes, self.ml);
        }
        let decoder = reed_solomon::Decoder::new(self.parity_symbols());
        match decoder.correct(&bytes, None) {
            Ok(buffer) => Bits::from_bytes(buffer.data(), self.ml),
            // Beyond the threshold: hand back the systematic part unchanged.
            Err(_) => Bits::from_bytes(&bytes, self.ml),
        }
    }
}

/// Batch geometry: `pl` messages of `ml` bits, `n`-bit codewords, tolerating
/// `capacity` wrong packets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCodecParams", into = "RawCodecParams")]
pub struct CodecParams {
    pl: usize,
    ml: usize,
    capacity: usize,
    code: BitCodeKind,
    n: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCodecParams {
    pl: usize,
    ml: usize,
    capacity: usize,
    #[serde(default)]
    code: BitCodeKind,
}

impl TryFrom<RawCodecParams> for CodecParams {
    type Error = CodecError;

    fn try_from(raw: RawCodecParams) -> Result<Self, Self::Error> {
        CodecParams::with_code(raw.pl, raw.ml, raw.capacity, raw.code)
    }
}

impl From<CodecParams> for RawCodecParams {
    fn from(p: CodecParams) -> Self {
        RawCodecParams {
            pl: p.pl,
            ml: p.ml,
            capacity: p.capacity,
            code: p.code,
        }
    }
}

impl CodecParams {
    /// Parameters using the reference repetition code.
    pub fn new(pl: usize, ml: usize, capacity: usize) -> Result<Self, CodecError> {
        Self::with_code(pl, ml, capacity, BitCodeKind::Repetition)
    }

    pub fn with_code(
        pl: usize,
        ml: usize,
        capacity: usize,
        code: BitCodeKind,
    ) -> Result<Self, CodecError> {
        if pl == 0 {
            return Err(CodecError::Params("pl must be at least 1".into()));
        }
        if ml == 0 {
            return Err(CodecError::Params("ml must be at least 1".into()));
        }
        if code == BitCodeKind::ReedSolomon {
            let rs = ReedSolomonCode::new(ml, capacity);
            if rs.data_symbols() + rs.parity_symbols() > ReedSolomonCode::MAX_SYMBOLS {
                return Err(CodecError::Params(format!(
                    "Reed-Solomon codeword of {} symbols exceeds {}",
                    rs.data_symbols() + rs.parity_symbols(),
                    ReedSolomonCode::MAX_SYMBOLS
                )));
            }
        }
        let n = match code {
            BitCodeKind::Repetition => RepetitionCode::new(ml, capacity).codeword_len(),
            BitCodeKind::ReedSolomon => ReedSolomonCode::new(ml, capacity).codeword_len(),
        };
        if n <= 2 * capacity {
            return Err(CodecError::Params(format!(
                "n = {n} must exceed 2·capacity = {}",
                2 * capacity
            )));
        }
        if capacity > 0 && n <= ml {
            return Err(CodecError::Params(format!("n = {n} must exceed ml = {ml}")));
        }
        Ok(CodecParams {
            pl,
            ml,
            capacity,
            code,
            n,
        })
    }

    pub fn pl(&self) -> usize {
        self.pl
    }

    pub fn ml(&self) -> usize {
        self.ml
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn code(&self) -> BitCodeKind {
        self.code
    }

    /// Codeword length in bits, which is also the number of packets per batch.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of distinctly labeled acks the sender waits for.
    pub fn ack_labels(&self) -> u32 {
        self.capacity as u32 + 1
    }

    fn with_bit_code<T>(&self, f: impl FnOnce(&dyn BitCode) -> T) -> T {
        match self.code {
            BitCodeKind::Repetition => f(&RepetitionCode::new(self.ml, self.capacity)),
            BitCodeKind::ReedSolomon => f(&ReedSolomonCode::new(self.ml, self.capacity)),
        }
    }
}

/// An ordered batch of `pl` messages, each `ml` bits.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageBatch {
    messages: Vec<Bits>,
}

impl MessageBatch {
    pub fn new(messages: Vec<Bits>, params: &CodecParams) -> Result<Self, CodecError> {
        if messages.len() != params.pl {
            return Err(CodecError::BatchSize {
                expected: params.pl,
                actual: messages.len(),
            });
        }
        if let Some(bad) = messages.iter().find(|m| m.len() != params.ml) {
            return Err(CodecError::WordLength {
                expected: params.ml,
                actual: bad.len(),
            });
        }
        Ok(MessageBatch { messages })
    }

    /// Wraps messages without checking them against any parameters.
    pub fn from_messages(messages: Vec<Bits>) -> Self {
        MessageBatch { messages }
    }

    pub fn zeros(params: &CodecParams) -> Self {
        MessageBatch {
            messages: vec![Bits::zeros(params.ml); params.pl],
        }
    }

    pub fn messages(&self) -> &[Bits] {
        &self.messages
    }

    pub fn into_messages(self) -> Vec<Bits> {
        self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

impl std::fmt::Display for MessageBatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("[")?;
        for (i, m) in self.messages.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{m}")?;
        }
        f.write_str("]")
    }
}

/// One packet payload: column `label` (1-based) of the encoded batch matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PayloadColumn {
    pub label: u32,
    pub data: Bits,
}

pub fn bitcode_encode(word: &Bits, params: &CodecParams) -> Result<Bits, CodecError> {
    if word.len() != params.ml {
        return Err(CodecError::WordLength {
            expected: params.ml,
            actual: word.len(),
        });
    }
    Ok(params.with_bit_code(|code| code.encode(word)))
}

pub fn bitcode_decode(word: &Bits, params: &CodecParams) -> Result<Bits, CodecError> {
    if word.len() != params.n {
        return Err(CodecError::WordLength {
            expected: params.n,
            actual: word.len(),
        });
    }
    Ok(params.with_bit_code(|code| code.decode(word)))
}

/// Transposes a bit matrix given as rows of equal width.
pub fn transpose(rows: &[Bits]) -> Vec<Bits> {
    let width = rows.first().map_or(0, Bits::len);
    (0..width)
        .map(|i| rows.iter().map(|row| row.as_slice()[i]).collect())
        .collect()
}

/// Encodes a batch into `n` payload columns labeled `1..=n`.
pub fn encode_batch(
    batch: &MessageBatch,
    params: &CodecParams,
) -> Result<Vec<PayloadColumn>, CodecError> {
    let batch = MessageBatch::new(batch.messages.clone(), params)?;
    let codewords = batch
        .messages
        .iter()
        .map(|m| bitcode_encode(m, params))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(transpose(&codewords)
        .into_iter()
        .zip(1u32..)
        .map(|(data, label)| PayloadColumn { label, data })
        .collect())
}

/// Decodes `n` distinctly labeled columns back into the batch.
///
/// Columns may arrive in any order; they are placed by label.
pub fn decode_batch(
    columns: &[PayloadColumn],
    params: &CodecParams,
) -> Result<MessageBatch, CodecError> {
    if columns.len() != params.n {
        return Err(CodecError::ColumnCount {
            expected: params.n,
            actual: columns.len(),
        });
    }
    let mut ordered: Vec<Option<&Bits>> = vec![None; params.n];
    for column in columns {
        let slot = (column.label as usize)
            .checked_sub(1)
            .and_then(|i| ordered.get_mut(i))
            .ok_or(CodecError::ColumnLabel(column.label))?;
        if slot.is_some() {
            return Err(CodecError::ColumnLabel(column.label));
        }
        if column.data.len() != params.pl {
            return Err(CodecError::WordLength {
                expected: params.pl,
                actual: column.data.len(),
            });
        }
        *slot = Some(&column.data);
    }
    let columns: Vec<Bits> = ordered.into_iter().flatten().cloned().collect();
    let messages = transpose(&columns)
        .iter()
        .map(|row| bitcode_decode(row, params))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MessageBatch { messages })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Bits {
        s.parse().unwrap()
    }

    #[test]
    fn identity_code_at_zero_capacity() {
        let p = CodecParams::new(1, 4, 0).unwrap();
        assert_eq!(p.n(), 4);
        assert_eq!(bitcode_encode(&bits("0000"), &p).unwrap(), bits("0000"));
        assert_eq!(bitcode_encode(&bits("1010"), &p).unwrap(), bits("1010"));
    }

    #[test]
    fn repetition_encoding_matches_per_bit_oracle() {
        let p = CodecParams::new(1, 2, 1).unwrap();
        assert_eq!(p.n(), 6);
        assert_eq!(bitcode_encode(&bits("01"), &p).unwrap(), bits("000111"));
        assert_eq!(bitcode_encode(&bits("11"), &p).unwrap(), bits("111111"));
    }

    #[test]
    fn repetition_decoding_majority() {
        let p = CodecParams::new(1, 2, 1).unwrap();
        assert_eq!(bitcode_decode(&bits("010111"), &p).unwrap(), bits("01"));
    }

    #[test]
    fn wrong_lengths_are_parameter_errors() {
        let p = CodecParams::new(1, 2, 1).unwrap();
        assert!(matches!(
            bitcode_encode(&bits("011"), &p),
            Err(CodecError::WordLength { .. })
        ));
        assert!(matches!(
            bitcode_decode(&bits("01"), &p),
            Err(CodecError::WordLength { .. })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(CodecParams::new(0, 2, 1).is_err());
        assert!(CodecParams::new(2, 0, 1).is_err());
        assert!(CodecParams::with_code(1, 8 * 200, 40, BitCodeKind::ReedSolomon).is_err());
    }

    #[test]
    fn batch_example_columns() {
        let p = CodecParams::new(2, 2, 1).unwrap();
        let batch = MessageBatch::new(vec![bits("01"), bits("10")], &p).unwrap();
        let columns = encode_batch(&batch, &p).unwrap();
        let expected: Vec<(u32, &str)> = vec![
            (1, "01"),
            (2, "01"),
            (3, "01"),
            (4, "10"),
            (5, "10"),
            (6, "10"),
        ];
        let got: Vec<(u32, String)> = columns
            .iter()
            .map(|c| (c.label, c.data.to_string()))
            .collect();
        assert_eq!(
            got,
            expected
                .into_iter()
                .map(|(l, d)| (l, d.to_string()))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn single_column_corruption_is_corrected() {
        let p = CodecParams::new(2, 2, 1).unwrap();
        let batch = MessageBatch::new(vec![bits("01"), bits("10")], &p).unwrap();
        let mut columns = encode_batch(&batch, &p).unwrap();
        columns[2].data = bits("10");
        assert_eq!(decode_batch(&columns, &p).unwrap(), batch);
    }

    #[test]
    fn decode_accepts_any_column_order() {
        let p = CodecParams::new(2, 2, 1).unwrap();
        let batch = MessageBatch::new(vec![bits("11"), bits("10")], &p).unwrap();
        let mut columns = encode_batch(&batch, &p).unwrap();
        columns.reverse();
        assert_eq!(decode_batch(&columns, &p).unwrap(), batch);
    }

    #[test]
    fn single_message_batch_is_split_codeword() {
        let p = CodecParams::new(1, 3, 1).unwrap();
        let word = bits("101");
        let batch = MessageBatch::new(vec![word.clone()], &p).unwrap();
        let columns = encode_batch(&batch, &p).unwrap();
        let joined: Bits = columns.iter().map(|c| c.data.as_slice()[0]).collect();
        assert_eq!(joined, bitcode_encode(&word, &p).unwrap());
    }

    #[test]
    fn decode_batch_precondition_errors() {
        let p = CodecParams::new(2, 2, 1).unwrap();
        let batch = MessageBatch::zeros(&p);
        let columns = encode_batch(&batch, &p).unwrap();
        assert!(matches!(
            decode_batch(&columns[..5], &p),
            Err(CodecError::ColumnCount { .. })
        ));
        let mut dup = columns.clone();
        dup[1].label = 1;
        assert_eq!(decode_batch(&dup, &p), Err(CodecError::ColumnLabel(1)));
        let mut wide = columns.clone();
        wide[0].data = bits("011");
        assert!(matches!(
            decode_batch(&wide, &p),
            Err(CodecError::WordLength { .. })
        ));
        let mut out_of_range = columns;
        out_of_range[0].label = 7;
        assert_eq!(
            decode_batch(&out_of_range, &p),
            Err(CodecError::ColumnLabel(7))
        );
    }

    #[test]
    fn reed_solomon_corrects_capacity_bit_errors() {
        let p = CodecParams::with_code(1, 12, 2, BitCodeKind::ReedSolomon).unwrap();
        assert_eq!(p.n(), 8 * (2 + 4));
        let word = bits("101100111000");
        let mut cw = bitcode_encode(&word, &p).unwrap();
        cw.set(3, !cw.as_slice()[3]);
        cw.set(40, !cw.as_slice()[40]);
        assert_eq!(bitcode_decode(&cw, &p).unwrap(), word);
    }

    #[test]
    fn params_serde_rejects_unknown_fields() {
        let ok: CodecParams = toml::from_str("pl = 2\nml = 2\ncapacity = 1\n").unwrap();
        assert_eq!(ok.n(), 6);
        assert!(toml::from_str::<CodecParams>("pl = 2\nml = 2\ncapacity = 1\nx = 3\n").is_err());
    }
}
