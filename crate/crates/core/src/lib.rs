//! Reasoning-problem toolkit over expression DAGs.
//!
//! The crate covers the whole pipeline around synthetic arithmetic and
//! boolean reasoning problems:
//!
//! * [`dag`] builds and evaluates the semantic layer (rooted expression
//!   trees plus disconnected distractor units);
//! * [`render`] turns problems into template text, parses text back and
//!   decides semantic equality of two surface forms;
//! * [`augment`] produces the query-side (premise shuffling plus redundancy
//!   injection), response-side (alternative topological chains) and
//!   paraphrase corpora;
//! * [`dataset`] builds evaluation grids and reads and writes JSONL;
//! * [`eval`] grades model responses, computes variance-of-variations and
//!   drives completion runs through a [`client::CompletionClient`];
//! * [`probe`] pools last-token attention per statement and trains
//!   relevance probes on it.
//!
//! All randomness flows through [`rng::SplitMix64`], so every artifact is
//! reproducible from its seed.

pub mod augment;
pub mod client;
pub mod dag;
pub mod dataset;
pub mod eval;
pub mod probe;
pub mod render;
pub mod rng;

pub use dag::{Dag, DagError, Node, NodeId, Operator, Problem, Task};
pub use rng::SplitMix64;

pub(crate) mod serde_bigint {
    use num_bigint::BigInt;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(D::Error::custom)
    }
}

/// 64-bit seeds travel as decimal strings.
pub(crate) mod serde_u64_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(D::Error::custom)
    }
}

pub(crate) mod serde_opt_bigint {
    use num_bigint::BigInt;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<BigInt>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.collect_str(v),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigInt>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|t| t.parse().map_err(D::Error::custom))
            .transpose()
    }
}
