mod attacks;
mod data;
mod neighborhood;
mod summary;

pub use attacks::{attack_adaptive, attack_captions, eval_cross_domain, AblationRecord, ABLATION_PARTS};
pub use data::{align, ingest, retrieve, retriever_train, split_ids};
pub use neighborhood::eval_neighborhood;
pub use summary::report;
