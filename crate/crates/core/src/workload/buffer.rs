use super::edits::Mutation;

const FILLER: &[u8] = b"The quick brown fox jumps over the lazy dog while autosave keeps watch.\n";

/// In-memory document with a Qt-style modified flag: any applied mutation
/// marks the buffer dirty, a successful save clears it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentBuffer {
    content: Vec<u8>,
    modified: bool,
    target_size_bytes: u64,
}

impl DocumentBuffer {
    pub fn new(target_size_bytes: u64) -> Self {
        DocumentBuffer {
            content: Vec::new(),
            modified: false,
            target_size_bytes,
        }
    }

    pub fn with_content(content: impl Into<Vec<u8>>) -> Self {
        let content = content.into();
        DocumentBuffer {
            target_size_bytes: content.len() as u64,
            content,
            modified: false,
        }
    }

    pub fn content(&self) -> &[u8] {
        &self.content
    }

    pub fn len(&self) -> usize {
        self.content.len()
    }

    pub fn is_empty(&self) -> bool {
        self.content.is_empty()
    }

    pub fn target_size_bytes(&self) -> u64 {
        self.target_size_bytes
    }

    pub fn is_modified(&self) -> bool {
        self.modified
    }

    /// Applies one scripted mutation. `seq` selects the filler text offset so
    /// replay is deterministic without storing payload bytes.
    pub fn apply(&mut self, mutation: &Mutation, seq: usize) {
        match *mutation {
            Mutation::Append { len } => {
                let start = seq * 7;
                self.content
                    .extend((0..len).map(|i| FILLER[(start + i) % FILLER.len()]));
            }
            Mutation::Replace { offset, len } => {
                let end = (offset + len).min(self.content.len());
                let offset = offset.min(end);
                for (i, b) in self.content[offset..end].iter_mut().enumerate() {
                    *b = FILLER[(seq * 13 + i) % FILLER.len()];
                }
            }
            Mutation::Delete { len } => {
                let keep = self.content.len().saturating_sub(len);
                self.content.truncate(keep);
            }
        }
        self.modified = true;
    }

    pub fn mark_saved(&mut self) {
        self.modified = false;
    }
}

/// Change check run before a save: true when the buffer is dirty.
pub fn detect_change(buffer: &DocumentBuffer) -> bool {
    buffer.is_modified()
}
