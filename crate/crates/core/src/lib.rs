//! Personality alignment harness for LLM teammates.
//!
//! Three measurement lenses share this crate: BFI-44 self-report under
//! persona prompts ([`persona`], [`inventory`], [`runner`]), persona-conditioned
//! replay of team transcripts ([`simulator`], [`memory`]), and word-category
//! analysis of the resulting utterances and reflections ([`lexicon`]).
//! [`stats`] and [`report`] turn the outputs into tables.

pub mod config;
pub mod gateway;
pub mod inventory;
pub mod lexicon;
pub mod memory;
pub mod persona;
pub mod report;
pub mod runner;
pub mod selftest;
pub mod simulator;
pub mod stats;
