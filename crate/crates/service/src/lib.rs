//! Streaming session server for the hand-rub trainer.
//!
//! Clients speak the hh/1 protocol in [`protocol`] over a WebSocket at
//! `/ws`; `GET /healthz` reports server status. [`connection`] holds the
//! transport-free protocol engine, which [`replay`] also drives offline.

pub mod connection;
pub mod protocol;
pub mod replay;
pub mod server;

pub use connection::{ClassifierFactory, Connection, Reply};
pub use protocol::{Inbound, Outbound, StateView, PROTOCOL_VERSION};
pub use server::{AppState, Health, ServiceConfig};
