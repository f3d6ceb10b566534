//! The two-party protocol: message codec, party state machines and an
//! in-memory session driver.

mod message;
mod party;
mod session;

pub use message::{AbortReason, Message, MessageType, SessionConfig, PROTOCOL_VERSION};
pub use party::{
    error_rate_acceptable, order_pair, partition_bases, Party, Phase, Receiver, ReceiverHooks, ReceiverOutput,
    Sender, SenderHooks, SenderOutput, SenderStats, split_bases,
};
pub use session::{
    party_rngs, run_party, run_session, Direction, SessionOptions, SessionResult, Transcript, TranscriptEntry,
};

#[cfg(test)]
mod tests;
