//! Predicting field-experiment conclusions with language models.
//!
//! The crate covers the whole offline-testable pipeline: corpus filtering and
//! verification, extraction of experiment settings and conclusions, generation
//! of reversed and unrelated variants, repeated multiple-choice prediction,
//! topic and sentiment annotation, descriptive statistics and an OLS inference
//! engine, tied together by a resumable, manifest-tracked runner.

pub mod gateway;
pub mod text;
pub mod annotator;
pub mod extraction;
pub mod regression;
pub mod variantgen;
pub mod predictor;
pub mod stats;
pub mod corpus;
pub mod synthetic;
pub mod pipeline;
pub mod report;
