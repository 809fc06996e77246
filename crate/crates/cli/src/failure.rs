use std::fmt;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Config = 2,
    Data = 3,
    Runtime = 4,
}

/// An error tagged with the exit status it should produce.
#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn config_error(message: impl Into<String>) -> anyhow::Error {
    Failure {
        kind: ExitKind::Config,
        message: message.into(),
    }
    .into()
}

pub fn data_error(message: impl Into<String>) -> anyhow::Error {
    Failure {
        kind: ExitKind::Data,
        message: message.into(),
    }
    .into()
}

fn classify_core(e: &zarkit::Error) -> ExitKind {
    use zarkit::Error as E;
    match e {
        E::Config(_) => ExitKind::Config,
        E::Parse { .. }
        | E::Reference { .. }
        | E::Annotation { .. }
        | E::Invariant { .. }
        | E::SequenceTooLong { .. }
        | E::Empty(_)
        | E::Checkpoint(_) => ExitKind::Data,
        _ => ExitKind::Runtime,
    }
}

/// The first tagged cause in the error chain decides the status.
pub fn exit_kind(err: &anyhow::Error) -> ExitKind {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.kind;
        }
        if let Some(e) = cause.downcast_ref::<zarkit::Error>() {
            return classify_core(e);
        }
    }
    ExitKind::Runtime
}
