//! The toy causal LM and its WICM container.
//!
//! Layout (little-endian): `"WICM"`, u32 version (1), u32 vocab, u32 hidden,
//! u32 max_context, u32 reserved (0), then the f64 arrays E (V*D), A (D*D),
//! W (V*D) and b (V), all row-major.

use super::rng::SplitMix64;
use super::ModelError;

pub const MAGIC: [u8; 4] = *b"WICM";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
/// Byte-level vocabulary.
pub const VOCAB_SIZE: u32 = 256;

/// Model shape as recorded in the header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelHeader {
    pub vocab_size: u32,
    pub hidden_dim: u32,
    pub max_context: u32,
}

impl ModelHeader {
    /// Number of f64 weights following the header.
    pub fn weight_count(&self) -> u64 {
        let v = self.vocab_size as u64;
        let d = self.hidden_dim as u64;
        v * d + d * d + v * d + v
    }

    /// Exact file length implied by the header.
    pub fn file_len(&self) -> u64 {
        HEADER_LEN as u64 + 8 * self.weight_count()
    }

    /// Parses and checks the fixed 24-byte header.
    pub fn parse(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 4 {
            return Err(ModelError::TruncatedFile {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        if bytes[..4] != MAGIC {
            return Err(ModelError::BadMagic([bytes[0], bytes[1], bytes[2], bytes[3]]));
        }
        if bytes.len() < HEADER_LEN {
            return Err(ModelError::TruncatedFile {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let version = word(0);
        if version != FORMAT_VERSION {
            return Err(ModelError::BadVersion(version));
        }
        let header = ModelHeader {
            vocab_size: word(1),
            hidden_dim: word(2),
            max_context: word(3),
        };
        if header.vocab_size != VOCAB_SIZE {
            return Err(ModelError::InvalidHeader(format!(
                "vocab_size must be {VOCAB_SIZE}, found {}",
                header.vocab_size
            )));
        }
        if header.hidden_dim == 0 {
            return Err(ModelError::InvalidHeader("hidden_dim must be at least 1".into()));
        }
        if header.max_context == 0 {
            return Err(ModelError::InvalidHeader("max_context must be at least 1".into()));
        }
        if word(4) != 0 {
            return Err(ModelError::InvalidHeader("reserved field must be zero".into()));
        }
        Ok(header)
    }
}

/// Immutable model weights. `V` is always 256.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    hidden_dim: usize,
    max_context: usize,
    embedding: Vec<f64>,
    recurrence: Vec<f64>,
    output: Vec<f64>,
    bias: Vec<f64>,
    size_bytes: u64,
}

impl Model {
    /// Builds a model from explicit weight arrays (row-major).
    pub fn new(
        hidden_dim: u32,
        max_context: u32,
        embedding: Vec<f64>,
        recurrence: Vec<f64>,
        output: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if hidden_dim == 0 || max_context == 0 {
            return Err(ModelError::InvalidHeader(
                "hidden_dim and max_context must be at least 1".into(),
            ));
        }
        let v = VOCAB_SIZE as usize;
        let d = hidden_dim as usize;
        for (name, arr, want) in [
            ("embedding", &embedding, v * d),
            ("recurrence", &recurrence, d * d),
            ("output", &output, v * d),
            ("bias", &bias, v),
        ] {
            if arr.len() != want {
                return Err(ModelError::DimensionMismatch {
                    array: name,
                    expected: want,
                    actual: arr.len(),
                });
            }
        }
        let header = ModelHeader { vocab_size: VOCAB_SIZE, hidden_dim, max_context };
        let all = embedding.iter().chain(&recurrence).chain(&output).chain(&bias);
        if let Some(index) = all.clone().position(|w| !w.is_finite()) {
            return Err(ModelError::NonFiniteWeight { index: index as u64 });
        }
        Ok(Model {
            hidden_dim: d,
            max_context: max_context as usize,
            embedding,
            recurrence,
            output,
            bias,
            size_bytes: header.file_len(),
        })
    }

    /// Fills every weight, in file order, from a splitmix64 stream mapped to
    /// `[-1, 1)` (see [`SplitMix64::next_signed_unit`]).
    pub fn generate(hidden_dim: u32, max_context: u32, seed: u64) -> Result<Self, ModelError> {
        let v = VOCAB_SIZE as usize;
        let d = hidden_dim as usize;
        let mut rng = SplitMix64::new(seed);
        let mut take = |n: usize| (0..n).map(|_| rng.next_signed_unit()).collect::<Vec<_>>();
        let embedding = take(v * d);
        let recurrence = take(d * d);
        let output = take(v * d);
        let bias = take(v);
        Model::new(hidden_dim, max_context, embedding, recurrence, output, bias)
    }

    /// Parses and validates a WICM file.
    pub fn load(bytes: &[u8]) -> Result<Self, ModelError> {
        let header = ModelHeader::parse(bytes)?;
        let expected = header.file_len();
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(ModelError::TruncatedFile { expected, actual });
        }
        if actual > expected {
            return Err(ModelError::TrailingBytes { expected, actual });
        }
        let mut floats = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let v = VOCAB_SIZE as usize;
        let d = header.hidden_dim as usize;
        let mut take = |n: usize| floats.by_ref().take(n).collect::<Vec<_>>();
        let embedding = take(v * d);
        let recurrence = take(d * d);
        let output = take(v * d);
        let bias = take(v);
        Model::new(header.hidden_dim, header.max_context, embedding, recurrence, output, bias)
    }

    /// Serializes to the WICM format. `Model::load(&m.to_bytes()) == m`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.size_bytes as usize);
        out.extend_from_slice(&MAGIC);
        for word in [
            FORMAT_VERSION,
            VOCAB_SIZE,
            self.hidden_dim as u32,
            self.max_context as u32,
            0,
        ] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        for w in self.embedding.iter().chain(&self.recurrence).chain(&self.output).chain(&self.bias) {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            vocab_size: VOCAB_SIZE,
            hidden_dim: self.hidden_dim as u32,
            max_context: self.max_context as u32,
        }
    }

    pub fn vocab_size(&self) -> usize {
        VOCAB_SIZE as usize
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn max_context(&self) -> usize {
        self.max_context
    }

    pub fn size_bytes(&self) -> u64 {
        self.size_bytes
    }

    /// Row `token` of E.
    pub fn embedding_row(&self, token: usize) -> &[f64] {
        &self.embedding[token * self.hidden_dim..(token + 1) * self.hidden_dim]
    }

    /// Row `i` of A.
    pub fn recurrence_row(&self, i: usize) -> &[f64] {
        &self.recurrence[i * self.hidden_dim..(i + 1) * self.hidden_dim]
    }

    /// Row `token` of W.
    pub fn output_row(&self, token: usize) -> &[f64] {
        &self.output[token * self.hidden_dim..(token + 1) * self.hidden_dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d16() -> Model {
        Model::generate(16, 64, 1).unwrap()
    }

    #[test]
    fn size_follows_format() {
        let m = d16();
        let bytes = m.to_bytes();
        assert_eq!(bytes.len() as u64, 24 + 8 * (256 * 16 + 16 * 16 + 256 * 16 + 256));
        assert_eq!(Model::load(&bytes).unwrap().size_bytes(), bytes.len() as u64);
    }

    #[test]
    fn load_roundtrip() {
        let m = d16();
        assert_eq!(Model::load(&m.to_bytes()).unwrap(), m);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = d16().to_bytes();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(Model::load(&bytes), Err(ModelError::BadMagic(m)) if &m == b"XXXX"));
    }

    #[test]
    fn bad_version() {
        let mut bytes = d16().to_bytes();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(Model::load(&bytes), Err(ModelError::BadVersion(2))));
    }

    #[test]
    fn nan_weight() {
        let mut bytes = d16().to_bytes();
        let at = HEADER_LEN + 8 * 100;
        bytes[at..at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            Model::load(&bytes),
            Err(ModelError::NonFiniteWeight { index: 100 })
        ));
    }

    #[test]
    fn truncated_and_trailing() {
        let bytes = d16().to_bytes();
        assert!(matches!(
            Model::load(&bytes[..bytes.len() - 1]),
            Err(ModelError::TruncatedFile { .. })
        ));
        assert!(matches!(Model::load(&bytes[..10]), Err(ModelError::TruncatedFile { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Model::load(&long), Err(ModelError::TrailingBytes { .. })));
    }

    #[test]
    fn header_checks() {
        let mut bytes = d16().to_bytes();
        bytes[8..12].copy_from_slice(&255u32.to_le_bytes());
        assert!(matches!(Model::load(&bytes), Err(ModelError::InvalidHeader(_))));
        let mut bytes = d16().to_bytes();
        bytes[20..24].copy_from_slice(&1u32.to_le_bytes());
        assert!(matches!(Model::load(&bytes), Err(ModelError::InvalidHeader(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(
            Model::generate(4, 32, 7).unwrap().to_bytes(),
            Model::generate(4, 32, 7).unwrap().to_bytes()
        );
        assert_ne!(
            Model::generate(4, 32, 7).unwrap().to_bytes(),
            Model::generate(4, 32, 8).unwrap().to_bytes()
        );
    }

    #[test]
    fn dimension_mismatch() {
        let err = Model::new(2, 8, vec![0.0; 10], vec![0.0; 4], vec![0.0; 512], vec![0.0; 256]);
        assert!(matches!(err, Err(ModelError::DimensionMismatch { array: "embedding", .. })));
    }
}
