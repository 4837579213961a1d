//! Offline reinforcement learning on hindsight-regenerated dialogues.

pub mod cli;
pub mod corpus;
pub mod dialogue;
pub mod eval;
pub mod experiment;
pub mod hashing;
pub mod llm;
pub mod microworld;
pub mod numerics;
pub mod regen;
pub mod rl;
pub mod serve;
pub mod text;
pub mod vocab;
