//! Signal Temporal Logic: syntax, parsing and offline monitoring.

mod ast;
mod monitor;
mod parser;
mod trace;

pub mod clock;

pub use ast::{
    Assignment, Comparator, Formula, InstantiateError, Interval, InvalidVariable, Param, ParamKind,
    ParamSpec, Value, VariableId,
};
pub use monitor::{eval_bool, robustness, robustness_signal, satisfaction_signal, EvalError};
pub use parser::{parse, ParseError, ParseErrorKind};
pub use trace::{Trace, TraceError, DEFAULT_STEP_MINUTES};
pub(crate) use ast::format_number;
