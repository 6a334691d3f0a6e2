//! Chat-model client with record/replay caching, retries and bounded
//! concurrency, plus the caption and scene-extraction attacks built on it.

pub mod cache;
pub mod captions;
pub mod client;
pub mod error;
pub mod pool;
pub mod prompts;
pub mod request;
pub mod retry;
pub mod scene;
pub mod transport;

pub use cache::{CacheEntry, ReplayCache};
pub use captions::{generate_captions_from_scene, generate_captions_from_tags, parse_numbered_list, CaptionSet, Exchange, ModelSpec, SceneParts};
pub use client::{ChatClient, ClientStats, Endpoint, Mode};
pub use error::{ClientError, Result};
pub use pool::FifoSemaphore;
pub use prompts::PromptTemplate;
pub use request::{canonical_json, ChatRequest, ImagePayload, Message, Role};
pub use retry::{RecordingSleeper, RetryPolicy, Sleeper, ThreadSleeper};
pub use scene::{extract_scene, parse_json_block, SceneExtraction, SceneInputs};
pub use transport::{FailOnUseTransport, HttpResponse, HttpTransport, ScriptedTransport, Transport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
