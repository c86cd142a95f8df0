//! Multi-hop question answering over knowledge graph embeddings.
//!
//! The crate covers the whole offline pipeline: graph ingestion ([`kg`]),
//! ComplEx embeddings ([`kge`]) and their rank-based evaluation ([`eval`]),
//! gazetteer head extraction ([`gazetteer`]), question encoding and hop
//! classification ([`question`]), QA dataset generation ([`dataset`]) and
//! answer scoring ([`qa`]).

pub mod container;
pub mod dataset;
pub mod eval;
pub mod gazetteer;
pub mod kg;
pub mod kge;
pub mod qa;
pub mod question;
pub mod synthetic;

pub use dataset::{QAExample, QuestionTemplate};
pub use gazetteer::Gazetteer;
pub use kg::{Direction, KnowledgeGraph, Metapath, Triple};
pub use kge::{ComplexModel, ComplexVector, TrainConfig};
pub use qa::{QaPipeline, PipelinePaths};
pub use question::{HopClassifier, QuestionEncoder, TokenVocabulary};
