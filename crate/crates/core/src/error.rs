use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage names used to tag errors raised inside `restore_scene`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pack,
    Align,
    Merge,
    Demosaic,
    ToneMap,
    Tiling,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Pack => "pack",
            Stage::Align => "align",
            Stage::Merge => "merge",
            Stage::Demosaic => "demosaic",
            Stage::ToneMap => "tone-map",
            Stage::Tiling => "tiling",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("insufficient overlap for gain estimate: inlier fraction {inlier_fraction:.4}")]
    InsufficientOverlap { inlier_fraction: f64 },

    #[error("malformed scene: {0}")]
    MalformedScene(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported TIFF feature: tag {tag} = {value}")]
    UnsupportedTiff { tag: u16, value: u32 },

    #[error("unsupported TIFF byte order (only little-endian \"II\" files are accepted)")]
    UnsupportedByteOrder,

    #[error("malformed TIFF: {0}")]
    MalformedTiff(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("scene set incomplete: missing predictions {missing:?}, unexpected predictions {extra:?}")]
    Incomplete {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures caused by the filesystem rather than by bad data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::MissingFile(_) => true,
            Error::Stage { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
