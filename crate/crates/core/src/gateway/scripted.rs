use std::collections::VecDeque;
use std::sync::Mutex;

use super::{BackendError, BackendKind, CompletionBackend};

/// Backend that replays a fixed list of answers, for tests and offline
/// dry runs. Once the script is exhausted every call fails with a
/// transport error.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    answers: Mutex<VecDeque<Result<String, BackendError>>>,
    prompts: Mutex<Vec<String>>,
    repeat_last: bool,
}

impl ScriptedBackend {
    pub fn new(answers: impl IntoIterator<Item = Result<String, BackendError>>) -> Self {
        Self {
            answers: Mutex::new(answers.into_iter().collect()),
            prompts: Mutex::new(Vec::new()),
            repeat_last: false,
        }
    }

    /// Keeps answering with the final scripted answer instead of failing.
    pub fn repeating(mut self) -> Self {
        self.repeat_last = true;
        self
    }

    /// Every prompt received, in order.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Remote
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        let mut answers = self.answers.lock().unwrap();
        match answers.len() {
            0 => Err(BackendError::TransportError("script exhausted".into())),
            1 if self.repeat_last => answers.front().cloned().unwrap(),
            _ => answers.pop_front().unwrap(),
        }
    }

    fn is_local(&self) -> bool {
        true
    }
}
