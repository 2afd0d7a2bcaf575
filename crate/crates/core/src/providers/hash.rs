use crate::corpus::{token_texts, Language};
use crate::error::Result;

use super::{normalize, Embedder};

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Bag-of-tokens feature hashing: every lexical token adds 1 to its bucket
/// and the result is L2-normalized. Text without tokens maps to the zero
/// vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    language: Language,
}

impl HashEmbedder {
    pub fn new(dim: usize, language: Language) -> HashEmbedder {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim, language }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in token_texts(text, self.language) {
            v[self.bucket(&token)] += 1.0;
        }
        normalize(v)
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;
    use crate::providers::{cosine, l2_norm};

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn identical_inputs_identical_vectors() {
        let e = HashEmbedder::new(256, Language::Python);
        let v = e.embed(&["foo(a)".into(), "foo(a)".into()]).unwrap();
        assert_eq!(v[0], v[1]);
        assert!((cosine(&v[0], &v[1]) - 1.0).abs() < 1e-12);
        assert!((l2_norm(&v[0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = HashEmbedder::new(64, Language::Python);
        let zero = e.embed_one("");
        assert!(zero.iter().all(|x| *x == 0.0));
        assert_eq!(cosine(&zero, &e.embed_one("x")), 0.0);
        assert!(e.embed_one("# only a comment").iter().all(|x| *x == 0.0));
    }

    #[test]
    fn disjoint_buckets_give_zero_cosine() {
        let e = HashEmbedder::new(256, Language::Python);
        let a = "alpha + beta";
        let b = "gamma * delta";
        let buckets = |text: &str| -> BTreeSet<usize> {
            token_texts(text, Language::Python)
                .iter()
                .map(|t| e.bucket(t))
                .collect()
        };
        // The fixture tokens land in distinct buckets at dim 256.
        assert!(buckets(a).is_disjoint(&buckets(b)));
        assert_eq!(cosine(&e.embed_one(a), &e.embed_one(b)), 0.0);
    }

    #[test]
    fn order_insensitive_multiset() {
        let e = HashEmbedder::new(128, Language::Python);
        assert_eq!(e.embed_one("a + b"), e.embed_one("b + a"));
        assert_ne!(e.embed_one("a + a"), e.embed_one("a + b"));
    }

    proptest! {
        #[test]
        fn cosine_in_unit_interval(a in "[a-z_ ().,=]{0,40}", b in "[a-z_ ().,=]{0,40}") {
            let e = HashEmbedder::new(32, Language::Python);
            let c = cosine(&e.embed_one(&a), &e.embed_one(&b));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
        }
    }
}
