//! Core of a hybrid reminders assistant: a hand-built dialogue graph matched
//! with TF-IDF answers in-flow messages, and a small GRU encoder-decoder
//! with attention generates replies for everything else. Threshold
//! heuristics decide when to hand the chat to a human.
//!
//! The crate is `no_std` (with `alloc`); file formats, the HTTP service and
//! the command line tools live in the `hybridbot` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod controller;
pub mod conversation;
pub mod corpus;
pub mod entity;
pub mod eval;
pub mod graph;
pub mod reminder;
pub mod seq2seq;
pub mod sim;
pub mod text;
pub mod tfidf;
