//! Byte-oriented boundary for foreign-language bindings.
//!
//! Everything that crosses this boundary is a wire message, a raw 32-byte
//! scalar, a count, a flag, or an opaque handle. Protocol state stays inside
//! a [`Registry`] owned by the caller.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::group::{Scalar, SCALAR_LEN};
use crate::message::DsType;
use crate::protocol::{ClientState, IntersectionResult, ServerState, SetupParams};

pub type Handle = u64;

pub fn ds_from_code(code: u8) -> Result<DsType> {
    match code {
        0 => Ok(DsType::Bloom),
        1 => Ok(DsType::Gcs),
        other => Err(Error::params(format!("unknown ds type {other}"))),
    }
}

fn scalar_from_slice(bytes: &[u8]) -> Result<Scalar> {
    let arr: &[u8; SCALAR_LEN] = bytes.try_into().map_err(|_| Error::InvalidScalar)?;
    Scalar::from_bytes(arr)
}

enum Entry {
    Server(ServerState),
    Client(ClientState),
}

/// Owner of all protocol state handed out as handles.
#[derive(Default)]
pub struct Registry {
    next: Handle,
    entries: HashMap<Handle, Entry>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, e: Entry) -> Handle {
        self.next += 1;
        self.entries.insert(self.next, e);
        self.next
    }

    /// Returns the server handle and the encoded setup message. `key`, when
    /// given, must be a valid 32-byte scalar (deterministic test mode).
    pub fn server_setup(
        &mut self,
        elements: &[Vec<u8>],
        max_client_queries: usize,
        total_fp: f64,
        ds: u8,
        key: Option<&[u8]>,
    ) -> Result<(Handle, Vec<u8>)> {
        let params = SetupParams::new(max_client_queries, total_fp, ds_from_code(ds)?);
        let key = key
            .map(scalar_from_slice)
            .transpose()?
            .unwrap_or_else(Scalar::random);
        let (state, msg) = ServerState::setup_with_key(key, elements, params)?;
        Ok((self.insert(Entry::Server(state)), msg.encode()))
    }

    pub fn server_process_request(&self, server: Handle, request: &[u8]) -> Result<Vec<u8>> {
        match self.entries.get(&server) {
            Some(Entry::Server(s)) => s.process_request_bytes(request),
            _ => Err(Error::InvalidHandle(server)),
        }
    }

    pub fn client_create_request(
        &mut self,
        elements: &[Vec<u8>],
        reveal_intersection: bool,
        blind: Option<&[u8]>,
    ) -> Result<(Handle, Vec<u8>)> {
        let blind = blind
            .map(scalar_from_slice)
            .transpose()?
            .unwrap_or_else(Scalar::random);
        let (state, req) =
            ClientState::create_request_with_blind(blind, elements, reveal_intersection);
        Ok((self.insert(Entry::Client(state)), req.encode()))
    }

    pub fn client_process_response(
        &mut self,
        client: Handle,
        setup: &[u8],
        response: &[u8],
    ) -> Result<IntersectionResult> {
        match self.entries.get_mut(&client) {
            Some(Entry::Client(c)) => c.process_response_bytes(setup, response),
            _ => Err(Error::InvalidHandle(client)),
        }
    }

    pub fn destroy(&mut self, handle: Handle) -> Result<()> {
        self.entries
            .remove(&handle)
            .map(|_| ())
            .ok_or(Error::InvalidHandle(handle))
    }

    pub fn live_handles(&self) -> usize {
        self.entries.len()
    }
}
