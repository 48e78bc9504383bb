//! Emotion-recognition toolkit: corpus catalogue, pairwise-comparison ranking,
//! audio descriptors, support vector regression, a small LSTM, and the
//! experiment harness that ties them together.

pub mod corpus;
pub mod eval;
pub mod features;
pub mod metrics;
pub mod par;
pub mod ranking;
pub mod rng;
pub mod seqnet;
pub mod svr;
