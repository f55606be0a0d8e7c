//! Asymmetric private set intersection (PSI) and PSI-cardinality over
//! P-256, using Diffie-Hellman style blinding.
//!
//! The server encrypts its set once under a secret key and publishes it as a
//! Bloom filter or a Golomb-compressed set ([`SetupMessage`]). A client then
//! sends blinded elements ([`RequestMessage`]), the server re-encrypts them
//! ([`ResponseMessage`]), and the client unblinds and queries the published
//! set locally.
//!
//! ```
//! use psi_core::{ClientState, DsType, IntersectionResult, ServerState, SetupParams};
//!
//! let params = SetupParams::new(10, 1e-9, DsType::Bloom);
//! let (server, setup) = ServerState::setup(&["a", "b", "c"], params).unwrap();
//! let (mut client, request) = ClientState::create_request(&["b", "x"], true);
//! let response = server.process_request(&request).unwrap();
//! let result = client.process_response(&setup, &response).unwrap();
//! assert_eq!(result, IntersectionResult::Indices(vec![0]));
//! ```

pub mod bloom;
pub mod error;
pub mod flat;
pub mod gcs;
pub mod group;
pub mod message;
pub mod protocol;
mod wire;

pub use bloom::BloomFilter;
pub use error::{Error, Result};
pub use gcs::GolombCompressedSet;
pub use group::{GroupElement, Scalar};
pub use message::{CompressedSet, DsType, Message, RequestMessage, ResponseMessage, SetupMessage};
pub use protocol::{
    ClientState, IntersectionResult, RequestBudget, RevealPolicy, ServerState, SetupParams,
};
