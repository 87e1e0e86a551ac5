use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoggingMode {
    #[default]
    None,
    Stream,
    File,
    Both,
}

impl LoggingMode {
    pub fn to_stream(self) -> bool {
        matches!(self, LoggingMode::Stream | LoggingMode::Both)
    }

    pub fn to_file(self) -> bool {
        matches!(self, LoggingMode::File | LoggingMode::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaveAction {
    Saved,
    Skipped,
}

impl fmt::Display for SaveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SaveAction::Saved => "saved",
            SaveAction::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaveEvent {
    /// Session-relative seconds.
    pub timestamp_s: f64,
    /// 1-based.
    pub firing_index: u32,
    pub action: SaveAction,
    pub bytes: u64,
}

impl SaveEvent {
    /// `timestamp,firing_index,action,bytes`
    pub fn to_line(&self) -> String {
        format!(
            "{:.6},{},{},{}",
            self.timestamp_s, self.firing_index, self.action, self.bytes
        )
    }

    pub fn parse_line(line: &str) -> Option<SaveEvent> {
        let mut it = line.trim_end().split(',');
        let timestamp_s = it.next()?.parse().ok()?;
        let firing_index = it.next()?.parse().ok()?;
        let action = match it.next()? {
            "saved" => SaveAction::Saved,
            "skipped" => SaveAction::Skipped,
            _ => return None,
        };
        let bytes = it.next()?.parse().ok()?;
        it.next().is_none().then_some(SaveEvent {
            timestamp_s,
            firing_index,
            action,
            bytes,
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("log sink {sink}: {source}")]
pub struct LogError {
    pub sink: String,
    #[source]
    pub source: io::Error,
}

/// Where save records go. The file sink is opened lazily in append mode and
/// flushed after every record.
pub struct LogSink {
    mode: LoggingMode,
    stream: Box<dyn Write + Send>,
    file_path: Option<PathBuf>,
    file: Option<File>,
}

impl fmt::Debug for LogSink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LogSink")
            .field("mode", &self.mode)
            .field("file_path", &self.file_path)
            .finish()
    }
}

impl LogSink {
    pub fn disabled() -> Self {
        LogSink {
            mode: LoggingMode::None,
            stream: Box::new(io::sink()),
            file_path: None,
            file: None,
        }
    }

    /// Stream output goes to stderr.
    pub fn new(mode: LoggingMode, file_path: Option<&Path>) -> Self {
        Self::with_stream(mode, file_path, Box::new(io::stderr()))
    }

    pub fn with_stream(
        mode: LoggingMode,
        file_path: Option<&Path>,
        stream: Box<dyn Write + Send>,
    ) -> Self {
        LogSink {
            mode,
            stream,
            file_path: file_path.map(Path::to_path_buf),
            file: None,
        }
    }

    pub fn mode(&self) -> LoggingMode {
        self.mode
    }

    fn file(&mut self) -> io::Result<&mut File> {
        if self.file.is_none() {
            let path = self
                .file_path
                .as_ref()
                .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "no log file configured"))?;
            self.file = Some(OpenOptions::new().create(true).append(true).open(path)?);
        }
        Ok(self.file.as_mut().expect("opened above"))
    }

    /// Appends one record to every configured sink. Returns `Ok(false)` when
    /// logging is off. A failing sink does not stop the others.
    pub fn emit(&mut self, event: &SaveEvent) -> Result<bool, LogError> {
        if self.mode == LoggingMode::None {
            return Ok(false);
        }
        let line = event.to_line();
        let mut first_err = None;
        if self.mode.to_stream() {
            if let Err(source) = writeln!(self.stream, "{line}").and_then(|_| self.stream.flush()) {
                first_err.get_or_insert(LogError {
                    sink: "stream".into(),
                    source,
                });
            }
        }
        if self.mode.to_file() {
            let res = self
                .file()
                .and_then(|f| writeln!(f, "{line}").and_then(|_| f.flush()));
            if let Err(source) = res {
                first_err.get_or_insert(LogError {
                    sink: self
                        .file_path
                        .as_ref()
                        .map(|p| p.display().to_string())
                        .unwrap_or_else(|| "file".into()),
                    source,
                });
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(true),
        }
    }
}

/// Appends one record; see [`LogSink::emit`].
pub fn emit_log(sink: &mut LogSink, record: &SaveEvent) -> Result<bool, LogError> {
    sink.emit(record)
}
