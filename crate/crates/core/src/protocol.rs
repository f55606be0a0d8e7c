//! Server and client state machines.
//!
//! Setup: the server draws a key `k`, maps every element `x` to
//! `H(x)^k` and ships the encodings in a [`CompressedSet`]. Online: the
//! client blinds `H(y)^r`, the server raises each point to `k`, and the
//! client unblinds with `r^-1` before querying the set. In cardinality mode
//! the server sorts its response so positions carry no information.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::bloom::BloomFilter;
use crate::error::{Error, Result};
use crate::gcs::GolombCompressedSet;
use crate::group::{GroupElement, Scalar, ELEMENT_LEN};
use crate::message::{CompressedSet, DsType, RequestMessage, ResponseMessage, SetupMessage};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetupParams {
    /// Largest request the set is sized for.
    pub max_client_queries: usize,
    /// Bound on the probability of any false positive across one request.
    pub total_fp: f64,
    pub ds: DsType,
}

impl SetupParams {
    pub fn new(max_client_queries: usize, total_fp: f64, ds: DsType) -> Self {
        SetupParams {
            max_client_queries,
            total_fp,
            ds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_client_queries == 0 {
            return Err(Error::params("max_client_queries must be at least 1"));
        }
        if !(self.total_fp > 0.0 && self.total_fp < 1.0) {
            return Err(Error::params(format!(
                "false-positive rate {} not in (0, 1)",
                self.total_fp
            )));
        }
        Ok(())
    }
}

/// Which request modes a server answers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RevealPolicy {
    #[default]
    AcceptAny,
    /// Only requests whose reveal flag equals the pinned value.
    Pinned(bool),
}

#[derive(Clone, Debug)]
pub struct ServerState {
    key: Scalar,
    dataset_size: usize,
    params: SetupParams,
    policy: RevealPolicy,
}

/// Builds the compressed set of `H(x)^key` encodings.
pub fn encrypt_set<E: AsRef<[u8]>>(
    key: &Scalar,
    elements: &[E],
    params: &SetupParams,
) -> Result<CompressedSet> {
    params.validate()?;
    let encrypted = elements
        .iter()
        .map(|x| GroupElement::hash_from_bytes(x.as_ref()).exp(key).encode());
    Ok(match params.ds {
        DsType::Bloom => {
            // An empty set still gets a minimal, all-zero filter.
            let mut f = BloomFilter::new(
                elements.len().max(1),
                params.max_client_queries,
                params.total_fp,
            )?;
            for e in encrypted {
                f.insert(&e);
            }
            CompressedSet::Bloom(f)
        }
        DsType::Gcs => {
            let encrypted: Vec<[u8; ELEMENT_LEN]> = encrypted.collect();
            CompressedSet::Gcs(GolombCompressedSet::build(
                &encrypted,
                params.max_client_queries,
                params.total_fp,
            )?)
        }
    })
}

impl ServerState {
    /// Runs setup under a fresh random key.
    pub fn setup<E: AsRef<[u8]>>(
        elements: &[E],
        params: SetupParams,
    ) -> Result<(ServerState, SetupMessage)> {
        Self::setup_with_key(Scalar::random(), elements, params)
    }

    /// Deterministic setup under a caller-supplied key.
    pub fn setup_with_key<E: AsRef<[u8]>>(
        key: Scalar,
        elements: &[E],
        params: SetupParams,
    ) -> Result<(ServerState, SetupMessage)> {
        let set = encrypt_set(&key, elements, &params)?;
        let state = ServerState {
            key,
            dataset_size: elements.len(),
            params,
            policy: RevealPolicy::AcceptAny,
        };
        Ok((state, SetupMessage { set }))
    }

    /// Restores an online-phase server from persisted key material.
    pub fn from_key(key: Scalar, dataset_size: usize, params: SetupParams) -> Result<Self> {
        params.validate()?;
        Ok(ServerState {
            key,
            dataset_size,
            params,
            policy: RevealPolicy::AcceptAny,
        })
    }

    /// Discards the current key and re-runs setup with a fresh one. Messages
    /// produced under the old key no longer match responses from the new one.
    pub fn rotate_key<E: AsRef<[u8]>>(
        self,
        elements: &[E],
        params: SetupParams,
    ) -> Result<(ServerState, SetupMessage)> {
        let policy = self.policy;
        let (state, msg) = Self::setup(elements, params)?;
        Ok((state.with_reveal_policy(policy), msg))
    }

    pub fn with_reveal_policy(mut self, policy: RevealPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn reveal_policy(&self) -> RevealPolicy {
        self.policy
    }

    pub fn params(&self) -> &SetupParams {
        &self.params
    }

    pub fn dataset_size(&self) -> usize {
        self.dataset_size
    }

    /// The secret exponent, for persisting to private key storage only.
    pub fn key(&self) -> &Scalar {
        &self.key
    }

    /// Raises each blinded point to the key. The response keeps request order
    /// in reveal mode and is sorted by encoding otherwise.
    pub fn process_request(&self, req: &RequestMessage) -> Result<ResponseMessage> {
        let n = req.elements.len();
        if n > self.params.max_client_queries {
            return Err(Error::TooManyElements {
                got: n,
                max: self.params.max_client_queries,
            });
        }
        if let RevealPolicy::Pinned(mode) = self.policy {
            if mode != req.reveal_intersection {
                return Err(Error::RevealModeMismatch);
            }
        }
        let mut elements: Vec<GroupElement> =
            req.elements.iter().map(|m| m.exp(&self.key)).collect();
        if !req.reveal_intersection {
            // Stable, so equal encodings keep their relative order.
            elements.sort_by_cached_key(|e| e.encode());
        }
        Ok(ResponseMessage { elements })
    }

    pub fn process_request_bytes(&self, request: &[u8]) -> Result<Vec<u8>> {
        let req = RequestMessage::decode(request)?;
        Ok(self.process_request(&req)?.encode())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IntersectionResult {
    /// Sorted positions in the client's input list.
    Indices(Vec<usize>),
    Cardinality(usize),
}

impl IntersectionResult {
    pub fn len(&self) -> usize {
        match self {
            IntersectionResult::Indices(v) => v.len(),
            IntersectionResult::Cardinality(c) => *c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Single-use client state holding the blind for one request.
#[derive(Debug)]
pub struct ClientState {
    blind: Option<Scalar>,
    reveal_intersection: bool,
    element_count: usize,
}

impl ClientState {
    pub fn create_request<E: AsRef<[u8]>>(
        elements: &[E],
        reveal_intersection: bool,
    ) -> (ClientState, RequestMessage) {
        Self::create_request_with_blind(Scalar::random(), elements, reveal_intersection)
    }

    pub fn create_request_with_blind<E: AsRef<[u8]>>(
        blind: Scalar,
        elements: &[E],
        reveal_intersection: bool,
    ) -> (ClientState, RequestMessage) {
        let blinded = elements
            .iter()
            .map(|y| GroupElement::hash_from_bytes(y.as_ref()).exp(&blind))
            .collect();
        let state = ClientState {
            blind: Some(blind),
            reveal_intersection,
            element_count: elements.len(),
        };
        let req = RequestMessage {
            reveal_intersection,
            elements: blinded,
        };
        (state, req)
    }

    pub fn reveal_intersection(&self) -> bool {
        self.reveal_intersection
    }

    pub fn element_count(&self) -> usize {
        self.element_count
    }

    pub fn is_used(&self) -> bool {
        self.blind.is_none()
    }

    /// Unblinds the response and queries the setup set. Consumes the blind:
    /// a second call fails with [`Error::StateAlreadyUsed`].
    pub fn process_response(
        &mut self,
        setup: &SetupMessage,
        resp: &ResponseMessage,
    ) -> Result<IntersectionResult> {
        let blind = self.blind.as_ref().ok_or(Error::StateAlreadyUsed)?;
        if resp.elements.len() != self.element_count {
            return Err(Error::CountMismatch {
                expected: self.element_count,
                got: resp.elements.len(),
            });
        }
        let unblind = blind.invert();
        self.blind = None;
        let unblinded: Vec<[u8; ELEMENT_LEN]> = resp
            .elements
            .iter()
            .map(|e| e.exp(&unblind).encode())
            .collect();
        let hits = setup.set.contains_all(&unblinded);
        Ok(if self.reveal_intersection {
            IntersectionResult::Indices(
                hits.iter()
                    .enumerate()
                    .filter_map(|(i, &hit)| hit.then_some(i))
                    .collect(),
            )
        } else {
            IntersectionResult::Cardinality(hits.iter().filter(|&&h| h).count())
        })
    }

    pub fn process_response_bytes(
        &mut self,
        setup: &[u8],
        response: &[u8],
    ) -> Result<IntersectionResult> {
        let setup = SetupMessage::decode(setup)?;
        let resp = ResponseMessage::decode(response)?;
        self.process_response(&setup, &resp)
    }
}

/// Caps the number of requests answered under one key.
#[derive(Debug)]
pub struct RequestBudget {
    max: Option<u64>,
    used: AtomicU64,
}

impl RequestBudget {
    pub fn new(max: Option<u64>) -> Self {
        RequestBudget {
            max,
            used: AtomicU64::new(0),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    /// Takes one request slot; false once the budget is spent.
    pub fn try_acquire(&self) -> bool {
        match self.max {
            None => {
                self.used.fetch_add(1, Ordering::Relaxed);
                true
            }
            Some(max) => self
                .used
                .fetch_update(Ordering::AcqRel, Ordering::Acquire, |u| {
                    (u < max).then_some(u + 1)
                })
                .is_ok(),
        }
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::Acquire)
    }

    pub fn reset(&self) {
        self.used.store(0, Ordering::Release);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(ds: DsType) -> SetupParams {
        SetupParams::new(10, 1e-9, ds)
    }

    #[test]
    fn small_psi_and_cardinality() {
        for ds in [DsType::Bloom, DsType::Gcs] {
            let (server, setup) = ServerState::setup(&["a", "b", "c"], params(ds)).unwrap();

            let (mut client, req) = ClientState::create_request(&["b", "x"], true);
            let resp = server.process_request(&req).unwrap();
            assert_eq!(
                client.process_response(&setup, &resp).unwrap(),
                IntersectionResult::Indices(vec![0])
            );

            let (mut client, req) = ClientState::create_request(&["b", "x"], false);
            let resp = server.process_request(&req).unwrap();
            assert_eq!(
                client.process_response(&setup, &resp).unwrap(),
                IntersectionResult::Cardinality(1)
            );
        }
    }

    #[test]
    fn setup_set_holds_encrypted_elements() {
        let key = Scalar::random();
        let (_, setup) =
            ServerState::setup_with_key(key, &["a"], SetupParams::new(1, 1e-6, DsType::Bloom))
                .unwrap();
        let u = GroupElement::hash_from_bytes(b"a").exp(&key).encode();
        assert!(setup.set.contains(&u));
    }

    #[test]
    fn empty_server_set() {
        for ds in [DsType::Bloom, DsType::Gcs] {
            let (server, setup) = ServerState::setup::<&str>(&[], params(ds)).unwrap();
            let (mut client, req) = ClientState::create_request(&["a", "b"], false);
            let resp = server.process_request(&req).unwrap();
            assert_eq!(client.process_response(&setup, &resp).unwrap().len(), 0);
        }
    }

    #[test]
    fn empty_client_set() {
        let (server, setup) = ServerState::setup(&["a"], params(DsType::Bloom)).unwrap();
        let (mut client, req) = ClientState::create_request::<&str>(&[], true);
        assert_eq!(req.encode().len(), 11);
        let resp = server.process_request(&req).unwrap();
        assert_eq!(
            client.process_response(&setup, &resp).unwrap(),
            IntersectionResult::Indices(vec![])
        );
    }

    #[test]
    fn duplicates_each_count() {
        let (server, setup) = ServerState::setup(&["a", "b"], params(DsType::Gcs)).unwrap();
        let (mut client, req) = ClientState::create_request(&["a", "a", "z", "b"], true);
        assert_eq!(req.elements[0], req.elements[1]);
        let resp = server.process_request(&req).unwrap();
        assert_eq!(
            client.process_response(&setup, &resp).unwrap(),
            IntersectionResult::Indices(vec![0, 1, 3])
        );
    }

    #[test]
    fn reveal_false_response_is_sorted() {
        let (server, _) = ServerState::setup(&["a"], params(DsType::Bloom)).unwrap();
        let items: Vec<String> = (0..10).map(|i| format!("item{i}")).collect();
        let (_, req) = ClientState::create_request(&items, false);
        let resp = server.process_request(&req).unwrap();
        let enc: Vec<_> = resp.elements.iter().map(|e| e.encode()).collect();
        assert!(enc.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn reveal_true_response_keeps_order() {
        let key = Scalar::random();
        let (server, _) = ServerState::setup_with_key(key, &["a"], params(DsType::Bloom)).unwrap();
        let (_, req) = ClientState::create_request(&["e1", "e2"], true);
        let resp = server.process_request(&req).unwrap();
        assert_eq!(resp.elements[0], req.elements[0].exp(&key));
        assert_eq!(resp.elements[1], req.elements[1].exp(&key));
    }

    #[test]
    fn too_many_elements_rejected() {
        let (server, _) =
            ServerState::setup(&["a"], SetupParams::new(2, 1e-3, DsType::Bloom)).unwrap();
        let (_, req) = ClientState::create_request(&["a", "b", "c"], true);
        assert_eq!(
            server.process_request(&req),
            Err(Error::TooManyElements { got: 3, max: 2 })
        );
    }

    #[test]
    fn pinned_policy_rejects_other_mode() {
        let (server, _) = ServerState::setup(&["a"], params(DsType::Bloom)).unwrap();
        let server = server.with_reveal_policy(RevealPolicy::Pinned(false));
        let (_, req) = ClientState::create_request(&["a"], true);
        assert_eq!(server.process_request(&req), Err(Error::RevealModeMismatch));
        let (_, req) = ClientState::create_request(&["a"], false);
        assert!(server.process_request(&req).is_ok());
    }

    #[test]
    fn client_state_single_use_and_count_check() {
        let (server, setup) = ServerState::setup(&["a"], params(DsType::Bloom)).unwrap();
        let (mut client, req) = ClientState::create_request(&["a", "b"], true);
        let resp = server.process_request(&req).unwrap();
        let short = ResponseMessage {
            elements: resp.elements[..1].to_vec(),
        };
        assert_eq!(
            client.process_response(&setup, &short),
            Err(Error::CountMismatch {
                expected: 2,
                got: 1
            })
        );
        assert!(client.process_response(&setup, &resp).is_ok());
        assert!(client.is_used());
        assert_eq!(
            client.process_response(&setup, &resp),
            Err(Error::StateAlreadyUsed)
        );
    }

    #[test]
    fn invalid_params_rejected() {
        for p in [0.0, 1.0, 1.5] {
            assert!(matches!(
                ServerState::setup(&["a"], SetupParams::new(1, p, DsType::Bloom)),
                Err(Error::InvalidParameters(_))
            ));
        }
        assert!(ServerState::setup(&["a"], SetupParams::new(0, 0.1, DsType::Gcs)).is_err());
    }

    #[test]
    fn byte_level_round_trip() {
        let (server, setup) = ServerState::setup(&["a", "b"], params(DsType::Gcs)).unwrap();
        let (mut client, req) = ClientState::create_request(&["b"], true);
        let resp = server.process_request_bytes(&req.encode()).unwrap();
        assert_eq!(
            client
                .process_response_bytes(&setup.encode(), &resp)
                .unwrap(),
            IntersectionResult::Indices(vec![0])
        );
        assert!(matches!(
            server.process_request_bytes(&[0u8; 12]),
            Err(Error::MalformedMessage { .. })
        ));
    }

    #[test]
    fn request_budget() {
        let b = RequestBudget::new(Some(2));
        assert!(b.try_acquire());
        assert!(b.try_acquire());
        assert!(!b.try_acquire());
        assert_eq!(b.used(), 2);
        b.reset();
        assert!(b.try_acquire());
        let u = RequestBudget::unlimited();
        assert!((0..100).all(|_| u.try_acquire()));
    }
}
