use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{CompletionRequest, Provider, ProviderError, Reply};

type Script = dyn Fn(&CompletionRequest<'_>) -> Result<Reply, ProviderError> + Send + Sync;

/// Offline provider driven by a closure, counting its invocations.
pub struct ScriptedProvider {
    script: Box<Script>,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&CompletionRequest<'_>) -> Result<Reply, ProviderError> + Send + Sync + 'static,
    {
        Self {
            script: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    /// Answers every prompt with the same text.
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::from_fn(move |_| Ok(Reply::from_text(text.clone())))
    }

    /// Answers with `replies` in order, then fails.
    pub fn sequence<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue: Mutex<std::collections::VecDeque<String>> =
            Mutex::new(replies.into_iter().map(Into::into).collect());
        Self::from_fn(move |_| {
            queue
                .lock()
                .expect("script lock poisoned")
                .pop_front()
                .map(Reply::from_text)
                .ok_or_else(|| ProviderError::Fatal("scripted replies exhausted".into()))
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Reply, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(request)
    }
}
