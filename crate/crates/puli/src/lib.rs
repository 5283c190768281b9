//! Learning-to-intervene engine for multi-round scientific dialogues.
//!
//! A coordinator policy mines intervene/silent labels from positive-unlabeled
//! dialogue data and co-trains two learners: a cheap timing Observer that
//! watches every round, and a Presenter that generates intervention content
//! only when the gate fires. The crate ships the full loop — corpus handling,
//! synthetic and LLM-backed corpus forging, contextual memory, REINFORCE
//! policy training, reward bookkeeping, text metrics, a streaming inference
//! gate, and a chat-completion gateway — plus a `puli` CLI wiring it together.

pub mod config;
pub mod coordinator;
pub mod corpus;
pub mod forge;
pub mod gateway;
pub mod learners;
pub mod memory;
pub mod metrics;
pub mod rewards;
pub mod runtime;
pub mod trainloop;
