/// Turns query text into a vector in the embedding space of the index.
pub trait TextEncoder: Send + Sync {
    fn dims(&self) -> usize;

    /// Must be deterministic: the same text always maps to the same vector.
    fn encode(&self, text: &str) -> Vec<f64>;
}

/// Model-free encoder: lowercased whitespace tokens hashed (FNV-1a) into
/// `dims` buckets, each occurrence adding 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagOfWords {
    dims: usize,
}

impl HashedBagOfWords {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "encoder dims must be positive");
        HashedBagOfWords { dims }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dims as u64) as usize
    }
}

impl TextEncoder for HashedBagOfWords {
    fn dims(&self) -> usize {
        self.dims
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dims];
        for token in text.split_whitespace() {
            v[self.bucket(&token.to_lowercase())] += 1.0;
        }
        v
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Encodes `text` with `enc`.
pub fn encode_text(enc: &dyn TextEncoder, text: &str) -> Vec<f64> {
    enc.encode(text)
}
