use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which part of the normal-form contract a defining function violates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormalFormViolation {
    NonReal { monomial: String },
    WrongQuadraticPart { monomial: String },
    LowDegreePerturbation { monomial: String },
    CapTooSmall { cap: i32 },
    BadDimension { n: usize },
}

impl std::fmt::Display for NormalFormViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NonReal { monomial } => write!(f, "defining function is not real at {monomial}"),
            Self::WrongQuadraticPart { monomial } => {
                write!(f, "quadratic part differs from the model at {monomial}")
            }
            Self::LowDegreePerturbation { monomial } => {
                write!(f, "perturbation term of degree < 4: {monomial}")
            }
            Self::CapTooSmall { cap } => write!(f, "degree cap {cap} is below the minimum of 6"),
            Self::BadDimension { n } => write!(f, "CR dimension must be at least 1, got {n}"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,
    #[error("π-grading mismatch: π^{left} vs π^{right}")]
    PiGrading { left: i32, right: i32 },
    #[error("square root is not exact in Q(i)")]
    InexactRoot,
    #[error("jets live in different variable contexts")]
    ContextMismatch,
    #[error("image of `{var}` has an undeclared nonzero constant term")]
    BasePoint { var: String },
    #[error("jet has zero constant term and is not invertible")]
    NonInvertible,
    #[error("constant-term matrix is singular (degenerate frame)")]
    DegenerateFrame,
    #[error("linear coefficient of `{var}` vanishes: not a graph")]
    NonGraph { var: String },
    #[error("Weierstrass preparation failed: {0}")]
    PreparationFailure(String),
    #[error("form of degree {found} given where degree {expected} is required")]
    FormDegree { expected: usize, found: usize },
    #[error("{0}")]
    NormalForm(NormalFormViolation),
    #[error("not a critical point: {coefficient} on {monomial}")]
    NotCritical { monomial: String, coefficient: String },
    #[error("matrix is singular")]
    Singular,
    #[error("degree cap {available} is too small, {needed} required")]
    TruncationUnsound { needed: u32, available: u32 },
    #[error("check `{check}` failed: {detail}")]
    Assertion { check: String, detail: String },
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn assertion(check: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::Assertion {
            check: check.into(),
            detail: detail.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Self::Stage { .. } => e,
            e => Self::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Self::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
